import numpy as np
import pytest
from hypothesis import given, strategies as st

from wgqed import Mode, config_from_dict
from wgqed.core import DefectiveMatrix, SingularResolvent
from wgqed.greens import (basis_labels, build_h0, coupling_vector, eigendecompose,
                          exact_resolvent, green, retardation_series)


def _array(n=3, d=0.4, k0d=0.9, gf=0.1):
    return config_from_dict({"model": "TwoLevelArray", "gamma": 1.0, "gamma_f": gf,
                             "n": n, "d": d, "k0d": k0d})


def test_markov_h0_structure():
    cfg = _array()
    h = build_h0(cfg).matrix
    assert np.allclose(np.diag(h), -1.1j)
    assert h[0, 2] == pytest.approx(-1j * np.exp(1.8j))
    assert np.allclose(h, h.T)


def test_exact_reduces_to_markov_at_zero_frequency():
    cfg = _array()
    assert np.allclose(build_h0(cfg, 0.0, Mode.EXACT).matrix, build_h0(cfg).matrix)


def test_rydberg_block_layout(eit20):
    h = build_h0(eit20).matrix
    assert h.shape == (40, 40)
    assert np.allclose(h[:20, 20:], np.eye(20))
    assert basis_labels(eit20)[20] == (0, "s")


@given(st.integers(1, 6), st.floats(0.0, 2 * np.pi), st.floats(0.0, 1.0))
def test_biorthogonality(n, k0d, gf):
    cfg = _array(n, 0.3, k0d, gf)
    try:
        spec = eigendecompose(build_h0(cfg))
    except DefectiveMatrix:
        return
    assert np.allclose(spec.left.conj().T @ spec.right, np.eye(n), atol=1e-9)
    assert np.all(spec.eigenvalues.imag <= 1e-12)
    w = 0.37 + 0.2j
    assert np.allclose(spec.resolvent(w), green(cfg, w), atol=1e-9)


def test_eigendecompose_rejects_jordan_block():
    with pytest.raises(DefectiveMatrix):
        eigendecompose(np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_green_is_inverse():
    cfg = _array()
    w = 0.3
    g = green(cfg, w, Mode.EXACT)
    assert np.allclose(g @ (w * np.eye(3) - build_h0(cfg, w, Mode.EXACT).matrix), np.eye(3))
    assert np.allclose(exact_resolvent(cfg)(w), g)


def test_real_pole_raises():
    # two emitters at k0 d = 0 have a dark state at omega = 0
    cfg = config_from_dict({"model": "TwoLevelArray", "n": 2, "d": 1.0, "k0d": 0.0})
    with pytest.raises(SingularResolvent):
        green(cfg, 0.0, Mode.EXACT)
    assert np.all(np.isfinite(green(cfg, 0.0, Mode.EXACT, eta=1e-3)))


def test_coupling_vector_phases():
    cfg = _array()
    u = coupling_vector(cfg, 0.5, -1, Mode.EXACT)
    assert np.allclose(np.abs(u), 1.0)
    assert u[1] == pytest.approx(np.exp(-1j * (0.9 + 0.5 * 0.4)))


def test_retardation_series_causal():
    cfg = config_from_dict({"model": "TwoLevelArray", "n": 2, "d": 1.0, "k0d": 0.0})
    # the series starts with the n = 0 term, exp(-damping T)
    assert retardation_series(cfg, 0.5, +1, 1.0) == pytest.approx(np.exp(-0.5))
    assert retardation_series(cfg, -0.1, +1, 1.0) == 0
