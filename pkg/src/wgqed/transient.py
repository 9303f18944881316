"""Time-domain amplitudes: emission, absorption, retardation and polaritons.

Single-excitation amplitudes driven by a Lorentzian packet are sums of
exponentials between the packet arrival times, so everything here is
evaluated in closed form over the bi-orthogonal Markov spectrum; the only
numerical integrals are the exact N > 2 retardation quadrature and the
stimulated-emission Nystrom discretization.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
from scipy.integrate import solve_ivp
from scipy.special import expm1

from .core import (BasisTooLarge, DefectiveMatrix, DegenerateSpectrum,
                   GridTooCoarse, Mode, QuadratureNonConvergence, SystemConfig,
                   Wavepacket, as_mode, validate)
from .greens import (basis_labels, build_h0, eigendecompose,
                     retardation_series, waveguide_dim)
from .two_photon import MAX_PAIR_DIM, interaction_diagonal

DEGENERATE_TOL = 1e-10
# above this eigenvector condition number the spectral sums lose too many
# digits (near an exceptional point) and the amplitudes are integrated instead
SPECTRAL_COND = 1e7


# ---------------------------------------------------------------------------
# single two-level emitter
# ---------------------------------------------------------------------------

def spontaneous_field(gamma: float, T: float, x, direction: int = 1):
    """Photon amplitude psi(x) = -i sqrt(G) exp(-G(T - s x)) on 0 < s x < T."""
    x = np.asarray(x, dtype=float)
    u = direction * x
    out = -1j * np.sqrt(gamma) * np.exp(-gamma * (T - u))
    return np.where((u > 0) & (u < T), out, 0.0)


def spontaneous_momentum(p, T: float, direction: int = 1, gamma: float = 1.0):
    """A(p, T) = sqrt(G/2pi) (exp(-i s p T) - exp(-G T)) / (s p + i G)."""
    p = np.asarray(p, dtype=float)
    sp = direction * p
    return np.sqrt(gamma / (2 * np.pi)) * (np.exp(-1j * sp * T) - np.exp(-gamma * T)) / (sp + 1j * gamma)


def spontaneous_norm(gamma: float, T: float) -> float:
    """Emitted photon probability, both directions: 1 - exp(-2 G T)."""
    return float(-np.expm1(-2 * gamma * T))


def absorption_amplitude(gamma_wp: float, x0: float, T, gamma: float = 1.0):
    """Excited-state amplitude of an emitter hit by a Lorentzian photon.

    A(T) = sqrt(2 g G)/(G - g) [exp(-G tau) - exp(-g tau)] theta(tau) with
    tau = x0 + T; at g = G the limit -sqrt(2) G tau exp(-G tau) is used.
    """
    tau = x0 + np.asarray(T, dtype=float)
    g = gamma_wp
    pos = np.maximum(tau, 0.0)
    if abs(g - gamma) < 1e-12 * max(g, gamma):
        val = -math.sqrt(2) * gamma * pos * np.exp(-gamma * pos)
    else:
        # exp(-G t) - exp(-g t) = exp(-g t) expm1((g - G) t), stable near g = G
        val = (math.sqrt(2 * g * gamma) / (gamma - g)
               * np.exp(-g * pos) * expm1((g - gamma) * pos))
    return np.where(tau > 0, val, 0.0)


# ---------------------------------------------------------------------------
# optimal stimulated emission
# ---------------------------------------------------------------------------

def stimulated_kernel(x, y, gamma: float = 1.0):
    """Smooth part of W(x, y) = delta(y - x)/2 + (G/4)(3e^{G(x+y)} - e^{-G|x-y|}).

    The delta term is carried separately as one half of the identity.
    """
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    k = 0.25 * gamma * (3 * np.exp(gamma * (x + y)) - np.exp(-gamma * np.abs(x - y)))
    return np.where((x <= 0) & (y <= 0), k, 0.0)


@dataclass(frozen=True)
class StimulatedOptimum:
    lambda_max: float
    x: np.ndarray
    f: np.ndarray
    f_exact: np.ndarray
    lambda_coarse: float
    lambda_fine: float

    @property
    def l2_error(self) -> float:
        w = np.full(self.x.size, self.x[1] - self.x[0])
        w[[0, -1]] *= 0.5
        return float(np.sqrt(np.sum(w * (self.f - self.f_exact) ** 2)))


def _nystrom(n: int, gamma: float, box: float):
    x = np.linspace(-box, 0.0, n + 1)
    h = box / n
    w = np.full(n + 1, h)
    w[[0, -1]] *= 0.5
    sw = np.sqrt(w)
    k = stimulated_kernel(x[:, None], x[None, :], gamma)
    a = 0.5 * np.eye(n + 1) + sw[:, None] * k * sw[None, :]
    vals, vecs = la.eigh(a)
    f = vecs[:, -1] / sw
    f = f / np.sqrt(np.sum(w * f * f))
    if f[-1] < 0:
        f = -f
    return vals[-1], x, f


def stimulated_optimum(gamma: float = 1.0, n: int = 600,
                       box: float | None = None) -> StimulatedOptimum:
    """Largest stimulated-emission probability and the optimal incident packet.

    Trapezoid Nystrom on [-box, 0] (box = 12/G) at n and 2n intervals,
    followed by one Richardson step for the O(h^2) error.

    Raises
    ------
    GridTooCoarse
        If the two grids disagree by more than 1e-4.
    """
    box = 12.0 / gamma if box is None else box
    lam_h, _, _ = _nystrom(n, gamma, box)
    lam_h2, x, f = _nystrom(2 * n, gamma, box)
    if abs(lam_h - lam_h2) > 1e-4:
        raise GridTooCoarse(f"Nystrom eigenvalue moved by {abs(lam_h - lam_h2):.2e}")
    lam = (4 * lam_h2 - lam_h) / 3
    exact = 2 * np.sqrt(gamma) * np.exp(2 * gamma * x)
    return StimulatedOptimum(float(lam), x, f, exact, float(lam_h), float(lam_h2))


# ---------------------------------------------------------------------------
# emitter arrays with retardation
# ---------------------------------------------------------------------------

def _markov_excitation(config: SystemConfig, T: np.ndarray) -> np.ndarray:
    """exp(-i H0^M T) applied to emitter 1, for every T (rows)."""
    spec = eigendecompose(build_h0(config))
    coeff = spec.left.conj()[0]                 # <chi~_l | 1>^* -> chi~_l*(1)
    phase = np.exp(-1j * np.outer(np.maximum(T, 0.0), spec.eigenvalues))
    return (phase * coeff) @ spec.right.T


def _exact_quadrature(config: SystemConfig, T: float, tol: float = 1e-8,
                      width: float = 500.0, max_width: float = 16000.0) -> np.ndarray:
    """A(j, T) for every j from i int dw/2pi e^{-iwT} [G(w)]_{j0}.

    The integral runs along Im w = eps = 1/max(T, 1) and is multiplied back
    by e^{eps T}.  The first two terms of the large-w expansion,
    delta_{j0}/(w + i kappa) and [H0(w)]_{j0}/(w + i kappa)^2, are
    subtracted and restored in closed form, leaving a 1/w^3 remainder that is
    summed by the trapezoid rule.  Causality of the time-domain remainder
    bounds the aliasing error by exp(-eps 2 pi/h); the cutoff width is
    doubled until the result changes by less than ``tol``.
    """
    config = validate(config)
    n = config.n_emitters
    if T <= 0:
        out = np.zeros(n, dtype=complex)
        out[0] = 1.0 if T == 0 else 0.0
        return out
    x = np.asarray(config.positions, dtype=float)
    eps = 1.0 / max(T, 1.0)
    kap = float(config.rates[0] + config.free_rates[0])
    h = 2 * np.pi / (40.0 * max(T, 1.0))
    hm = build_h0(config, 0.0, Mode.MARKOV).matrix
    h0m = hm[:, 0]
    dist = np.abs(x[:, None] - x[None, :])
    # closed-form part
    tau = T - x
    ref = np.where(tau > 0, h0m * (-1j) * tau * np.exp(-kap * np.maximum(tau, 0)), 0.0)
    ref[0] = np.exp(-kap * T)

    def partial(lo, hi):
        w = h * np.arange(math.ceil(lo / h), math.ceil(hi / h))
        acc = np.zeros(n, dtype=complex)
        for chunk in np.array_split(w, max(1, w.size // 4096)):
            z = chunk + 1j * eps
            hz = hm * np.exp(1j * z[:, None, None] * dist)
            a = z[:, None, None] * np.eye(n) - hz
            rhs = np.zeros((z.size, n, 1), dtype=complex)
            rhs[:, 0, 0] = 1.0
            g = np.linalg.solve(a, rhs)[:, :, 0]
            sub = (hz[:, :, 0] / (z[:, None] + 1j * kap) ** 2)
            sub[:, 0] = 1.0 / (z + 1j * kap)
            rem = g - sub
            acc += np.exp(-1j * chunk * T) @ rem
        return acc * h

    total = partial(-width, width)
    prev = None
    while True:
        val = np.exp(eps * T) * (1j / (2 * np.pi)) * total + ref
        if prev is not None and np.max(np.abs(val - prev)) < tol:
            break
        if 2 * width > max_width:
            raise QuadratureNonConvergence(
                f"retardation quadrature still moving by {np.max(np.abs(val - prev)):.2e}")
        total = total + partial(-2 * width, -width) + partial(width, 2 * width)
        width *= 2
        prev = val
    # causality is exact
    val[tau < 0] = 0.0
    return val


def excitation_amplitude(config: SystemConfig, j: int, T, mode=Mode.EXACT):
    """Amplitude A(j, T) of emitter j (0-based) after emitter 0 starts excited.

    Exact mode uses the delay series for two emitters and real-axis
    frequency quadrature otherwise; Markov mode exponentiates H0^M.
    """
    config = validate(config)
    mode = as_mode(mode)
    scalar = np.ndim(T) == 0
    t = np.atleast_1d(np.asarray(T, dtype=float))
    if mode == Mode.MARKOV:
        out = _markov_excitation(config, t)[:, j]
        out = np.where(t >= 0, out, 0.0)
    elif config.n_emitters == 1:
        kap = config.rates[0] + config.free_rates[0]
        out = np.where(t >= 0, np.exp(-kap * np.maximum(t, 0)), 0.0).astype(complex)
    elif config.n_emitters == 2:
        damp = config.gamma0 + config.gamma_f0
        out = np.empty(t.size, dtype=complex)
        for i, ti in enumerate(t):
            if ti < 0:
                out[i] = 0.0
                continue
            cp = retardation_series(config, ti, +1, damp)
            cm = retardation_series(config, ti, -1, damp)
            out[i] = 0.5 * (cp + cm) if j == 0 else 0.5 * (cm - cp)
    else:
        out = np.array([_exact_quadrature(config, ti)[j] if ti >= 0 else 0j for ti in t])
    return complex(out[0]) if scalar else out


def field_amplitude(config: SystemConfig, x, T: float, direction: int = 1,
                    mode=Mode.EXACT):
    """Photon amplitude at x after emitter 0 starts excited.

    A_s(x, T) = -i sqrt(G) sum_j e^{-i s k0 x_j} theta(s(x - x_j))
                theta(T - s(x - x_j)) A(j, T - s(x - x_j)).
    """
    config = validate(config)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros(x.size, dtype=complex)
    ph = config.phases
    for j, xj in enumerate(config.positions):
        lag = direction * (x - xj)
        inside = (lag > 0) & (lag < T)
        if not np.any(inside):
            continue
        amp = excitation_amplitude(config, j, T - lag[inside], mode)
        out[inside] += (-1j * np.sqrt(config.rates[j])
                        * np.exp(-1j * direction * ph[j]) * amp)
    return out


# ---------------------------------------------------------------------------
# Lorentzian-driven single excitations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Arrivals:
    """beta_{j l}: amplitude of eigenmode l launched by the arrival at site j."""

    times: np.ndarray          # (n_sites,)
    beta: np.ndarray           # (n_sites, n_modes, n_basis) including chi_l(a)
    alpha: np.ndarray          # (n_sites, n_basis)
    eps: np.ndarray            # (n_modes,)
    gamma: float


def _arrivals(config: SystemConfig, wavepacket: Wavepacket, spec=None) -> _Arrivals:
    config = validate(config)
    spec = spec or eigendecompose(build_h0(config))
    g = wavepacket.width_rate
    s = wavepacket.direction
    den = spec.eigenvalues + 1j * g
    if np.min(np.abs(den)) < DEGENERATE_TOL:
        raise DegenerateSpectrum("eigenvalue coincides with -i gamma")
    nw = waveguide_dim(config)
    x = np.asarray(config.positions[:nw], dtype=float)
    amp = 1j * s * np.sqrt(2 * g * config.rates[:nw]) * np.exp(1j * s * config.phases[:nw])
    lt = spec.left.conj()[:nw]                 # chi~_l*(j)
    # beta[j, l, a] = amp_j chi~_l*(j) chi_l(a) / (eps_l + i g)
    beta = (amp[:, None, None] * (lt / den)[:, :, None]) * spec.right.T[None, :, :]
    return _Arrivals(wavepacket.arrival(x), beta, beta.sum(axis=1), spec.eigenvalues, g)


def _single_at(arr: _Arrivals, t: np.ndarray) -> np.ndarray:
    """Amplitudes (len(t), n_basis) from the arrival decomposition."""
    out = np.zeros((t.size, arr.beta.shape[2]), dtype=complex)
    for j, tj in enumerate(arr.times):
        u = t - tj
        on = u >= 0
        if not np.any(on):
            continue
        uu = u[on]
        out[on] += np.exp(-arr.gamma * uu)[:, None] * arr.alpha[j]
        out[on] -= np.exp(-1j * np.outer(uu, arr.eps)) @ arr.beta[j]
    return out


def _usable_spectrum(h):
    """Spectrum of h, or None when it is too close to defective for spectral sums."""
    try:
        spec = eigendecompose(h)
    except DefectiveMatrix:
        return None
    return spec if np.linalg.cond(spec.right) < SPECTRAL_COND else None


def _drive(config: SystemConfig, wavepacket: Wavepacket, m: int):
    nw = waveguide_dim(config)
    x = np.asarray(config.positions[:nw], dtype=float)
    s = wavepacket.direction
    amp = np.sqrt(config.rates[:nw]) * np.exp(1j * s * config.phases[:nw])

    def b(t):
        out = np.zeros(m, dtype=complex)
        out[:nw] = amp * wavepacket.profile(x, t)
        return out
    return b


def _integrate_amplitudes(config: SystemConfig, packets, times, pair=None):
    """Direct integration of i dA/dt = H A + b(t), optionally with the pair.

    ``pair`` is None or (hard, u, scale): the ordered-pair amplitude obeys
    i dpsi/dt = H psi + psi H^T + U psi + scale * sym(b1 A2 + b2 A1), with
    the hardcore entries held at zero.  Packet arrivals are breakpoints.
    """
    h = build_h0(config).matrix
    m = h.shape[0]
    drives = [_drive(config, wp, m) for wp in packets]
    npk = len(packets)
    x = np.asarray(config.positions[:waveguide_dim(config)], dtype=float)
    arrivals = np.concatenate([wp.arrival(x) for wp in packets])
    times = np.atleast_1d(np.asarray(times, dtype=float))

    def rhs(t, y):
        amps = y[: npk * m].reshape(npk, m)
        bs = [d(t) for d in drives]
        out = [-1j * (h @ amps[k] + bs[k]) for k in range(npk)]
        if pair is not None:
            hard, u, scale = pair
            psi = y[npk * m:].reshape(m, m)
            a1, a2 = amps[0], amps[-1]
            b1, b2 = bs[0], bs[-1]
            src = np.outer(b1, a2) + np.outer(a1, b2)
            src = scale * (src + src.T)
            dpsi = -1j * (h @ psi + psi @ h.T + u * psi + src)
            dpsi[hard] = 0.0
            out.append(dpsi.reshape(-1))
        return np.concatenate(out)

    size = npk * m + (m * m if pair is not None else 0)
    start = min(arrivals.min(), times.min())
    stops = np.unique(np.concatenate([arrivals[arrivals > start], times[times > start],
                                      [start]]))
    y = np.zeros(size, dtype=complex)
    states = {start: y.copy()}
    for a, b in zip(stops[:-1], stops[1:]):
        sol = solve_ivp(rhs, (a, b), y, method="DOP853", rtol=1e-11, atol=1e-14)
        if not sol.success:
            raise QuadratureNonConvergence(f"amplitude integration failed: {sol.message}")
        y = sol.y[:, -1]
        states[b] = y.copy()
    return np.array([states[t] if t in states else np.zeros(size, dtype=complex)
                     for t in times]), m, npk


def single_excitation_amplitudes(config: SystemConfig, wavepacket: Wavepacket, t):
    """Markov single-excitation amplitudes (len(t), basis) under a Lorentzian drive."""
    config = validate(config)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    spec = _usable_spectrum(build_h0(config))
    if spec is None:
        ys, m, _ = _integrate_amplitudes(config, [wavepacket], t)
        return ys[:, :m]
    return _single_at(_arrivals(config, wavepacket, spec), t)


def polariton_single(config: SystemConfig, wavepacket: Wavepacket, i: int,
                     mu: str, T):
    """Amplitude of finding the excitation on site i, species mu ("e" or "s")."""
    config = validate(config)
    labels = basis_labels(config)
    a = labels.index((i, mu))
    vals = single_excitation_amplitudes(config, wavepacket, T)[:, a]
    return complex(vals[0]) if np.ndim(T) == 0 else vals


# ---------------------------------------------------------------------------
# two interacting polaritons
# ---------------------------------------------------------------------------

def _phi1(z: np.ndarray, terms: int | None = None) -> np.ndarray:
    """(e^z - 1)/z by its Taylor series; accurate to roundoff for |z| < 0.5.

    The number of terms adapts to max|z| unless given.
    """
    if terms is None:
        zmax = float(np.max(np.abs(z))) if z.size else 0.0
        terms = 0
        while terms < 18 and zmax ** (terms + 1) / math.factorial(terms + 2) > 1e-17:
            terms += 1
    out = np.full(z.shape, 1.0 / math.factorial(terms + 1), dtype=complex)
    for n in range(terms, -1, -1):
        out = out * z + 1.0 / math.factorial(n + 1)
    return out


@dataclass(frozen=True)
class PairHistory:
    """Two-excitation amplitudes psi(a, b) = <sigma_a sigma_b> at sampled times.

    ``amplitudes[k]`` is the (M, M) symmetric matrix at ``times[k]``;
    hardcore (same-site) entries are exactly zero.
    """

    times: np.ndarray
    labels: tuple
    amplitudes: np.ndarray

    def amplitude(self, pair1, pair2) -> np.ndarray:
        a, b = self.labels.index(tuple(pair1)), self.labels.index(tuple(pair2))
        return self.amplitudes[:, a, b]


def polariton_pair_history(config: SystemConfig, wp1: Wavepacket, wp2: Wavepacket,
                           times, geometry: str = "counter") -> PairHistory:
    """Two-excitation amplitudes for two Lorentzian photons entering the array.

    The interaction-free amplitude is the symmetrized product of the single
    amplitudes (divided by sqrt 2 for two photons in the same packet).  The
    interaction correction obeys

        i d/dt c = H~ c + U c0 - H2_{PQ} c0_Q,

    on the physical pairs P (hardcore pairs Q are pinned to zero), with
    H~ = H0 (x) 1 + 1 (x) H0 + U.  It is integrated exactly between packet
    arrival times in the eigenbasis of H~ on exchange-symmetric pairs.
    """
    config = validate(config)
    geometry = geometry.lower()
    if geometry not in ("co", "counter"):
        raise ValueError("geometry must be 'co' or 'counter'")
    if (geometry == "counter") != (wp1.direction != wp2.direction):
        raise ValueError(f"{geometry}-propagating geometry does not match packet directions")
    labels = basis_labels(config)
    m = len(labels)
    if m * m > MAX_PAIR_DIM:
        raise BasisTooLarge(f"pair basis dimension {m * m} exceeds {MAX_PAIR_DIM}")
    times = np.atleast_1d(np.asarray(times, dtype=float))
    order = np.argsort(times)

    same = wp2 == wp1
    sym_scale = 1 / math.sqrt(2) if same else 1.0

    # interaction on ordered pairs; exact-limit hardcore marked by inf
    u = interaction_diagonal(config)
    hard = np.isinf(u) | (u >= 1e8 - 1)
    h0 = build_h0(config).matrix
    eye = np.eye(m)
    h2 = np.kron(h0, eye) + np.kron(eye, h0)
    phys = np.flatnonzero(~hard)
    qh = np.flatnonzero(hard)
    ufin = np.where(hard, 0.0, u)

    if phys.size == 0:
        return PairHistory(times, labels, np.zeros((times.size, m, m), dtype=complex))
    # exchange-symmetric basis on physical pairs: unordered {a < b} or (a, a)
    ia, ib = phys // m, phys % m
    keep = ia <= ib
    reps = phys[keep]
    pos = {int(k): n for n, k in enumerate(reps)}
    col = np.array([pos[int(min(a, b) * m + max(a, b))] for a, b in zip(ia, ib)])
    bmat = np.zeros((phys.size, reps.size))
    bmat[np.arange(phys.size), col] = 1.0
    cnt = bmat.sum(axis=0)
    bpinv = (bmat / cnt).T
    htil = bpinv @ (h2[np.ix_(phys, phys)] + np.diag(ufin[phys])) @ bmat
    spec = _usable_spectrum(build_h0(config))
    hs = _usable_spectrum(htil)
    if spec is None or hs is None:
        packets = [wp1] if same else [wp1, wp2]
        u_ord = np.where(hard, 0.0, u).reshape(m, m)
        ys, _, npk = _integrate_amplitudes(
            config, packets, times, (hard.reshape(m, m), u_ord, sym_scale))
        return PairHistory(times, labels, ys[:, npk * m:].reshape(-1, m, m))
    arr1 = _arrivals(config, wp1, spec)
    arr2 = arr1 if same else _arrivals(config, wp2, spec)
    kappa = hs.eigenvalues
    to_eig = hs.left.conj().T                   # X^{-1}
    # source map from ordered pairs to eigen coordinates, symmetrized in (a, b)
    src = np.zeros((reps.size, m * m), dtype=complex)
    src[:, phys] = bpinv * ufin[phys]
    src[:, qh] = -bpinv @ h2[np.ix_(phys, qh)]
    src = (to_eig @ src).reshape(-1, m, m) * sym_scale
    src = src + src.transpose(0, 2, 1)

    # breakpoints: all arrivals, plus sample times
    brk = np.unique(np.concatenate([arr1.times, arr2.times]))
    y = np.zeros(reps.size, dtype=complex)      # correction in eigen coords
    t_cur = min(brk.min(), times.min()) - 1.0
    out = np.zeros((times.size, m, m), dtype=complex)

    def c0_rates(arr, t0):
        """Single amplitude near t0 as A(t0 + u) = sum_p c_p e^{-r_p u}."""
        on = arr.times <= t0 + 1e-15
        lag = t0 - arr.times[on]
        packet = np.exp(-arr.gamma * lag) @ arr.alpha[on]
        modes = -np.einsum("jl,jla->la", np.exp(-1j * np.outer(lag, arr.eps)), arr.beta[on])
        return np.concatenate([[arr.gamma], 1j * arr.eps]), np.vstack([packet, modes])

    def advance(t0, h):
        nonlocal y
        r1, c1 = c0_rates(arr1, t0)
        r2, c2 = c0_rates(arr2, t0)
        # source in eigen coords: sum_{pq} S_pq e^{-(r1_p + r2_q) u}
        s_pq = np.einsum("kab,pa,qb->pqk", src, c1, c2, optimize=True)
        # int_0^h e^{-i kappa (h-u)} e^{-r u} du = (e^{-r h} - e^{-i kappa h}) / (i kappa - r);
        # e^{-r h} factorizes over (p, q), the near-resonant entries use _phi
        den = 1j * kappa[None, None, :] - (r1[:, None, None] + r2[None, :, None])
        z = den * h
        near = np.abs(z) < 0.5
        w = np.where(near, 0.0, s_pq / np.where(near, 1.0, den))
        e1, e2 = np.exp(-r1 * h), np.exp(-r2 * h)
        ek = np.exp(-1j * kappa * h)
        acc = np.einsum("pqk,p,q->k", w, e1, e2, optimize=True) - ek * w.sum(axis=(0, 1))
        if np.any(near):
            zn = np.where(near, z, 0.0)
            acc += ek * h * np.sum(np.where(near, s_pq, 0.0) * _phi1(zn), axis=(0, 1))
        y = ek * y - 1j * acc

    def c0_at(t):
        a1 = _single_at(arr1, np.array([t]))[0]
        a2 = a1 if same else _single_at(arr2, np.array([t]))[0]
        prod = np.outer(a1, a2)
        return (prod + prod.T) * sym_scale

    stops = np.unique(np.concatenate([brk, times]))
    k = 0
    for stop in stops:
        if stop > t_cur:
            if t_cur >= brk.min():
                advance(t_cur, stop - t_cur)
            t_cur = stop
        while k < order.size and times[order[k]] <= t_cur + 1e-15:
            idx = order[k]
            corr_sym = hs.right @ y
            full = c0_at(times[idx]).reshape(-1)
            full[qh] = 0.0
            full[phys] += bmat @ corr_sym
            out[idx] = full.reshape(m, m)
            k += 1
    return PairHistory(times, labels, out)


def polariton_pair(config: SystemConfig, wp1: Wavepacket, wp2: Wavepacket,
                   pair1, pair2, T, geometry: str = "counter"):
    """Amplitude <sigma_{pair1} sigma_{pair2}> at time(s) T; pairs are (site, species)."""
    hist = polariton_pair_history(config, wp1, wp2, T, geometry)
    vals = hist.amplitude(pair1, pair2)
    return complex(vals[0]) if np.ndim(T) == 0 else vals
