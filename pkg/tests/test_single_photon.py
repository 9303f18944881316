import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from wgqed import Mode, SystemConfig, Model, config_from_dict
from wgqed.core import SingularResolvent
from wgqed.single_photon import (mirror_green, rt, rt_array, rt_jc, rt_mirror,
                                 rt_two_level)


@given(st.floats(-20, 20))
def test_two_level_flux(k):
    p = rt_two_level(k)
    assert p.flux == pytest.approx(1.0, abs=1e-12)
    assert p.t - p.r == pytest.approx(1.0)


def test_single_emitter_contraction_matches_closed_form():
    cfg = SystemConfig(Model.TWO_LEVEL)
    for k in (-2.0, 0.0, 0.7):
        assert rt(cfg, k).r == pytest.approx(rt_two_level(k).r, abs=1e-14)
        assert rt(cfg, k, Mode.EXACT).t == pytest.approx(rt_two_level(k).t, abs=1e-14)


def test_jc_closed_form_matches_contraction():
    cfg = config_from_dict({"model": "JaynesCummings", "gamma": 1.0, "jc": {"g": 0.8}})
    for k in (-1.3, 0.2, 2.0):
        a, b = rt(cfg, k), rt_jc(k, 0.8)
        assert a.r == pytest.approx(b.r, abs=1e-13)
        assert a.t == pytest.approx(b.t, abs=1e-13)


@given(st.integers(1, 8), st.floats(0, 2 * np.pi), st.floats(-4, 4))
def test_array_flux_markov(n, k0d, k):
    cfg = config_from_dict({"model": "TwoLevelArray", "n": n, "d": 0.1, "k0d": k0d})
    try:
        point = rt_array(cfg, k)
    except SingularResolvent:
        assume(False)
    assert point.flux == pytest.approx(1.0, abs=1e-9)


def test_dark_state_pole_propagates():
    cfg = config_from_dict({"model": "TwoLevelArray", "n": 2, "d": 1.0, "k0d": 0.0})
    with pytest.raises(SingularResolvent):
        rt_array(cfg, 0.0)


def test_array_flux_exact():
    cfg = config_from_dict({"model": "TwoLevelArray", "n": 4, "d": 0.8, "k0d": 0.3})
    for k in np.linspace(-3, 3, 13):
        assert rt_array(cfg, k, Mode.EXACT).flux == pytest.approx(1.0, abs=1e-10)


def test_free_space_loss_removes_flux():
    cfg = config_from_dict({"model": "TwoLevelArray", "gamma_f": 0.5, "n": 2, "d": 0.1, "k0d": 1.0})
    assert rt_array(cfg, 0.0).flux < 1.0


def test_two_emitters_bragg_doubles_rate():
    # at k0 d = 0 and tiny d two emitters act as one with rate 2G
    cfg = config_from_dict({"model": "TwoLevelArray", "n": 2, "d": 1e-9, "k0d": 0.0})
    for k in (-1.0, 0.4):
        assert rt(cfg, k).r == pytest.approx(rt_two_level(k, 2.0).r, abs=1e-12)


def test_mirror_reflects_everything():
    cfg = config_from_dict({"model": "MirrorTwoLevel", "gamma": 1.0, "k0": np.pi / 2 * 1e4,
                            "mirror": {"x0": -1e-4}})
    for k in (-3.0, 0.0, 1.5):
        assert abs(rt_mirror(cfg, k)) == pytest.approx(1.0, abs=1e-12)
    assert np.isfinite(mirror_green(cfg, 0.0))


def test_mirror_decoupled_emitter_gives_bare_mirror():
    cfg = config_from_dict({"model": "MirrorTwoLevel", "gamma": 1.0, "k0": 0.0,
                            "mirror": {"x0": -1.0}})
    assert rt_mirror(cfg, np.pi) == pytest.approx(-1.0, abs=1e-12)


def test_large_mirror_rate_close_to_limit():
    base = {"model": "MirrorTwoLevel", "gamma": 1.0, "k0": 1.0, "mirror": {"x0": -1e-4}}
    finite = config_from_dict({**base, "exact_limit": False,
                               "mirror": {"x0": -1e-4, "gamma_b": 1e8}})
    assert abs(rt_mirror(finite, 0.3) - rt_mirror(config_from_dict(base), 0.3)) < 1e-6


def test_finite_mirror_approaches_perfect():
    base = {"model": "MirrorTwoLevel", "gamma": 1.0, "k0": 1.0, "mirror": {"x0": -0.5}}
    perfect = config_from_dict(base)
    finite = config_from_dict({**base, "exact_limit": False,
                               "mirror": {"x0": -0.5, "gamma_b": 1e7}})
    assert rt_mirror(finite, 0.3) == pytest.approx(rt_mirror(perfect, 0.3), abs=1e-5)


def test_eit_transparency(eit20):
    assert abs(rt(eit20, 0.0).t) ** 2 == pytest.approx(1.0, abs=1e-6)
    assert abs(rt(eit20, 1.0).t) ** 2 < 0.5
