import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from wgqed import Mode, Model, SystemConfig, Wavepacket, config_from_dict
from wgqed.core import BasisTooLarge, DegenerateSpectrum
from wgqed.gme import drive_amplitudes
from wgqed.greens import build_h0
from wgqed.two_photon import interaction_diagonal
from wgqed import transient as tr


def _pair(d, k0d=0.0, gf=0.0):
    return config_from_dict({"model": "TwoLevelArray", "gamma": 1.0, "gamma_f": gf, "n": 2,
                             "d": d, "k0d": k0d})


def _rydberg(n, omega=1.0, c=1.0, d=1e-4, **extra):
    return config_from_dict({"model": "RydbergEitArray", "gamma": 1.0, "gamma_f": 0.0, "n": n,
                             "d": d, "k0d": np.pi / 2,
                             "rydberg": {"omega": omega, "delta_s": 0.0, "interaction": "dipolar",
                                         "coefficient": c, **extra}})


# spontaneous emission and absorption

@given(st.floats(0.0, 8.0), st.floats(0.2, 3.0))
def test_spontaneous_norm(T, gamma):
    assert tr.spontaneous_norm(gamma, T) == pytest.approx(1 - np.exp(-2 * gamma * T), abs=1e-14)


def test_spontaneous_field_gridded_norm():
    T, dx = 3.0, 1e-4
    x = dx * (np.arange(int(12 / dx)) + 0.5)
    total = sum(np.sum(np.abs(tr.spontaneous_field(1.0, T, s * x, s)) ** 2) * dx for s in (1, -1))
    assert total == pytest.approx(1 - np.exp(-6.0), abs=1e-6)
    assert np.all(tr.spontaneous_field(1.0, T, x[x > T], 1) == 0)


def test_spontaneous_momentum_norm():
    p = np.linspace(-400, 400, 400001)
    psi = tr.spontaneous_momentum(p, 2.0)
    norm = np.sum(np.abs(psi) ** 2) * (p[1] - p[0])
    # one direction carries half the emitted probability; tails beyond |p| = 400 are ~1e-3
    assert norm == pytest.approx(0.5 * (1 - np.exp(-4.0)), abs=2e-3)


@pytest.mark.parametrize("gamma_wp", [0.2, 1.0 + 1e-5, 5.0])
def test_absorption_matches_spectral_solution(gamma_wp):
    T = np.linspace(0, 10, 41)
    ref = tr.single_excitation_amplitudes(SystemConfig(Model.TWO_LEVEL),
                                          Wavepacket(1, gamma_wp, 0.0), T)[:, 0]
    assert np.allclose(tr.absorption_amplitude(gamma_wp, 0.0, T), ref, atol=1e-10)


def test_absorption_matched_width_is_continuous():
    T = np.linspace(0, 10, 41)
    exact = tr.absorption_amplitude(1.0, 0.0, T)
    assert np.allclose(exact, tr.absorption_amplitude(1.0 + 1e-7, 0.0, T), atol=1e-6)
    with pytest.raises(DegenerateSpectrum):
        tr.single_excitation_amplitudes(SystemConfig(Model.TWO_LEVEL), Wavepacket(1, 1.0), T)


def test_absorption_peak_at_matched_width():
    T = np.linspace(0, 20, 2001)
    peak = {g: np.max(np.abs(tr.absorption_amplitude(g, 0.0, T)) ** 2) for g in (0.2, 1.0, 5.0)}
    assert peak[1.0] == pytest.approx(2 / np.e ** 2, abs=1e-6)
    assert peak[1.0] > peak[0.2] and peak[1.0] > peak[5.0]


# stimulated emission

@pytest.fixture(scope="module")
def optimum():
    return tr.stimulated_optimum()


def test_stimulated_optimum(optimum):
    lam, _ = oracles.nystrom_reference()
    assert optimum.lambda_max == pytest.approx(lam, abs=1e-6)
    assert optimum.l2_error < 1e-3
    assert abs(optimum.lambda_fine - optimum.lambda_coarse) < 1e-4


def test_stimulated_closed_form_identity(optimum):
    lam = 2 / 3
    assert lam / (lam - 0.5) == pytest.approx(4.0)
    ref = oracles.nystrom_reference()[1](optimum.x)
    assert np.allclose(optimum.f_exact, ref)


def test_stimulated_kernel_symmetric():
    x = np.linspace(-3, 0, 7)
    k = tr.stimulated_kernel(x[:, None], x[None, :])
    assert np.allclose(k, k.T)
    assert np.all(tr.stimulated_kernel(0.5, x) == 0)


# retardation

@pytest.mark.parametrize("d,k0d,gf", [(1.0, 0.0, 0.0), (0.5, 0.7, 0.2), (0.3, 2.0, 0.0)])
def test_two_emitter_series_against_dde(d, k0d, gf):
    dt = 1e-3
    t, a = oracles.dde_two_emitters(d, 6.0, 1.0, gf, k0d, dt=dt)
    T = np.array([0.25, 1.1, 2.5, 5.9])
    idx = np.rint(T / dt).astype(int)
    cfg = _pair(d, k0d, gf)
    for j in (0, 1):
        assert np.allclose(tr.excitation_amplitude(cfg, j, T), a[idx, j], atol=1e-6)


def test_causality():
    cfg = _pair(2.0)
    assert np.all(tr.excitation_amplitude(cfg, 1, np.linspace(0, 1.999, 50)) == 0)


@pytest.mark.parametrize("d", [0.5, 1.0, 2.0])
def test_trapped_dark_state(d):
    cfg = _pair(d)
    a1, a2 = tr.excitation_amplitude(cfg, 0, 200.0), tr.excitation_amplitude(cfg, 1, 200.0)
    assert a1 == pytest.approx(1 / (2 + 2 * d), abs=1e-6)
    assert a2 == pytest.approx(-1 / (2 + 2 * d), abs=1e-6)


def test_markov_mode_closed_form():
    cfg = _pair(0.4, 0.9, 0.1)
    T = np.linspace(0, 5, 11)
    z = np.exp(0.9j) * T
    damp = np.exp(-1.1 * T)
    assert np.allclose(tr.excitation_amplitude(cfg, 0, T, Mode.MARKOV), np.cosh(z) * damp)
    assert np.allclose(tr.excitation_amplitude(cfg, 1, T, Mode.MARKOV), -np.sinh(z) * damp)


def test_quadrature_path_matches_series():
    cfg = _pair(0.7, 0.4, 0.1)
    for T in (0.5, 1.3, 3.0):
        assert np.allclose(tr._exact_quadrature(cfg, T), [tr.excitation_amplitude(cfg, j, T)
                                                           for j in (0, 1)], atol=1e-7)


def test_three_emitters_causal_and_bounded():
    cfg = config_from_dict({"model": "TwoLevelArray", "n": 3, "d": 0.5, "k0d": 0.3})
    assert tr.excitation_amplitude(cfg, 2, 0.9) == pytest.approx(0, abs=1e-7)
    T = np.array([0.5, 1.5, 3.0])
    p = sum(np.abs(tr.excitation_amplitude(cfg, j, T)) ** 2 for j in range(3))
    assert np.all(p <= 1 + 1e-7) and np.all(np.diff(p) < 0)


def test_field_norm_closure():
    cfg = _pair(1.0)
    T, dx = 4.0, 1e-3
    x = np.arange(-T - 1, T + 2 + dx / 2, dx)
    pr = np.abs(tr.field_amplitude(cfg, x, T, 1)) ** 2
    pl = np.abs(tr.field_amplitude(cfg, x, T, -1)) ** 2
    emitted = np.trapezoid(pr, x) + np.trapezoid(pl, x)
    excited = sum(abs(tr.excitation_amplitude(cfg, j, T)) ** 2 for j in (0, 1))
    assert emitted + excited == pytest.approx(1.0, abs=1e-4)


def test_field_light_cone():
    cfg = _pair(1.0)
    assert np.all(tr.field_amplitude(cfg, np.array([3.5, 5.0]), 2.0, 1) == 0)
    assert np.all(tr.field_amplitude(cfg, np.array([-2.5, -4.0]), 2.0, -1) == 0)


# driven polaritons

def test_polariton_before_arrival():
    cfg = _rydberg(4)
    wp = Wavepacket(1, 0.5, -2.0)
    assert tr.polariton_single(cfg, wp, 0, "s", 1.0) == 0


def test_single_amplitudes_against_ode():
    cfg = _rydberg(4, d=0.1, omega=0.7)
    wp = Wavepacket(-1, 0.4, 0.5)
    T = np.array([0.3, 1.0, 4.0])
    h = build_h0(cfg).matrix
    ref = oracles.amplitude_ode(h, [lambda t: drive_amplitudes(cfg, wp, t)[0]], T,
                                t_start=0.0)[:, 0]
    assert np.allclose(tr.single_excitation_amplitudes(cfg, wp, T), ref, atol=1e-8)


def test_fig9_slow_light():
    cfg = _rydberg(20, omega=0.1)
    wp = Wavepacket(1, 0.01, 0.0)
    T = np.linspace(200, 2000, 10)
    amps = tr.single_excitation_amplitudes(cfg, wp, T)
    pe, ps = np.abs(amps[:, :20]) ** 2, np.abs(amps[:, 20:]) ** 2
    assert pe.max() < 1e-2
    assert ps.sum(axis=1).max() > 0.3
    assert np.all(np.diff(np.argmax(ps, axis=1)) >= 0)


def _pair_reference(cfg, wp1, wp2, T):
    h = build_h0(cfg).matrix
    m = h.shape[0]
    u = interaction_diagonal(cfg)
    hard = (np.isinf(u) | (u >= 1e8 - 1)).reshape(m, m)
    u = np.where(hard, 0.0, u.reshape(m, m))
    same = wp1 == wp2
    drives = [lambda t, w=w: drive_amplitudes(cfg, w, t)[0] for w in ([wp1] if same else [wp1, wp2])]
    start = min(wp1.arrival(0.0), wp2.arrival(np.asarray(cfg.positions)).min()) - 0.1
    _, psi = oracles.amplitude_ode(h, drives, T, hard, u, 1 / np.sqrt(2) if same else 1.0,
                                   t_start=start)
    return psi


@pytest.mark.parametrize("n,omega", [(2, 1.0), (3, 0.6), (3, 1.0)])
def test_pair_against_ode(n, omega):
    # n = 3 at omega = 1 sits next to an exceptional point of H0
    cfg = _rydberg(n, omega=omega, c=2.0)
    T = np.array([0.8, 2.0, 3.5])
    co = Wavepacket(1, 0.5, 0.0)
    counter = Wavepacket(-1, 0.5, cfg.positions[-1])
    for wp2, geom in ((co, "co"), (counter, "counter")):
        hist = tr.polariton_pair_history(cfg, co, wp2, T, geom)
        ref = _pair_reference(cfg, co, wp2, T)
        assert np.abs(hist.amplitudes - ref).max() < 1e-8


def test_pair_without_interaction_factorizes():
    cfg = _rydberg(3, omega=0.6, c=0.0, u0=0.0)
    wp1, wp2 = Wavepacket(1, 0.5, 0.0), Wavepacket(-1, 0.3, 2e-4)
    T = np.array([1.0, 3.0])
    a1 = tr.single_excitation_amplitudes(cfg, wp1, T)
    a2 = tr.single_excitation_amplitudes(cfg, wp2, T)
    hist = tr.polariton_pair_history(cfg, wp1, wp2, T, "counter")
    prod = np.einsum("ta,tb->tab", a1, a2)
    assert np.allclose(hist.amplitudes, prod + prod.transpose(0, 2, 1), atol=1e-10)


def test_pair_hardcore_entries_vanish():
    cfg = _rydberg(3)
    hist = tr.polariton_pair_history(cfg, Wavepacket(1, 0.5), Wavepacket(1, 0.5),
                                     np.array([2.0]), "co")
    assert hist.amplitude((1, "e"), (1, "s"))[0] == 0
    assert np.allclose(hist.amplitudes, hist.amplitudes.transpose(0, 2, 1))


def test_pair_guards():
    with pytest.raises(BasisTooLarge):
        tr.polariton_pair_history(_rydberg(31), Wavepacket(1), Wavepacket(1), [1.0], "co")
    with pytest.raises(ValueError):
        tr.polariton_pair_history(_rydberg(2), Wavepacket(1), Wavepacket(1), [1.0], "counter")
