"""Two-photon S-matrices, pair wavefunctions, g2 and pair entanglement.

Every S-matrix is kept as a disconnected part (coefficients of the two
momentum-conserving delta products) plus a smooth connected kernel that
carries one overall delta(p1 + p2 - k1 - k2).  The connected kernel of
every model is the same contraction

    K = -(i/pi) [v(p1) (x) v(p2)]^T T(E) W_sym(k1, k2),

with v(p) = G(p)^T u_out(p), w(k) = G(k) u_in(k) and W_sym the
exchange-symmetrized product of the w's.  Pair wavefunctions use
psi(x1, x2) = (1/2) int dp1 dp2 exp(i p1 x1 + i p2 x2) S, so the
disconnected part contributes exp(i E x_c) s(k1) s(k2) cos(k x).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as la
from scipy.integrate import quad, quad_vec
from scipy.special import lambertw, sici

from .core import (BasisTooLarge, IllConditioned, INF_REGULARIZATION, Mode,
                   Model, NegativeRate, NotNormalized, QuadratureNonConvergence,
                   SingularBubble, SingularResolvent, SystemConfig, Wavepacket,
                   ZeroNormalization, as_mode, validate)
from .greens import (SINGULAR_TOL, Spectrum, basis_labels, build_h0,
                     coupling_vector, eigendecompose, exact_resolvent, green)
from .single_photon import (mirror_coupling, mirror_green, rt, rt_jc,
                            rt_mirror, rt_two_level)

REFLECTED = "reflected"
TRANSMITTED = "transmitted"

PAIR_POLE_TOL = 1e-12
ILL_CONDITIONED = 1e14
LS_TOL = 1e-10
MAX_PAIR_DIM = 3600
TAIL_RATE = 2.5          # width of the analytic tail model used by the FFT path


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PairBasisOperator:
    """Operator on the ordered pair basis, stored on a channel subset.

    ``block`` lives on the rows/columns listed in ``channels`` (flat indices
    a * M + b of the ordered pair |a, b>); everything else is zero.
    """

    labels: tuple
    channels: np.ndarray
    block: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.labels) ** 2

    @property
    def matrix(self) -> np.ndarray:
        if self.dim > MAX_PAIR_DIM ** 2:
            raise BasisTooLarge("pair basis too large to densify")
        full = np.zeros((self.dim, self.dim), dtype=complex)
        full[np.ix_(self.channels, self.channels)] = self.block
        return full


@dataclass(frozen=True)
class TwoPhotonKernel:
    """S-matrix of a photon pair with incoming momenta (k1, k2).

    Attributes
    ----------
    disconnected : (complex, complex)
        Coefficients of delta(p1-k1)delta(p2-k2) and delta(p1-k2)delta(p2-k1).
    connected : callable
        ``connected(p1, p2, k1=None, k2=None)``; incoming momenta default to
        the stored ones.  Momentum conservation is implied, not checked.
    channel : str
        ``"reflected"`` or ``"transmitted"``.
    """

    k1: float
    k2: float
    disconnected: tuple
    connected: Callable
    channel: str
    tail: Callable | None = field(default=None, compare=False)

    @property
    def E(self) -> float:
        return self.k1 + self.k2

    def __call__(self, p1, p2):
        return self.connected(p1, p2)


@dataclass(frozen=True)
class PairWavefunction:
    """Coordinate-space pair amplitude psi(x_c, x)."""

    E: float
    evaluator: Callable
    channel: str
    normalization: complex = 1.0

    def __call__(self, xc, x):
        return self.evaluator(np.asarray(xc, dtype=float), np.asarray(x, dtype=float))


# ---------------------------------------------------------------------------
# pair basis and interaction
# ---------------------------------------------------------------------------

def pair_labels(config: SystemConfig) -> tuple:
    return basis_labels(config)


def interaction_diagonal(config: SystemConfig, exact_limit: bool | None = None) -> np.ndarray:
    """Diagonal of the interaction matrix U on the ordered pair basis.

    Hardcore channels (two excitations on one emitter) carry ``inf`` in the
    exact-limit mode and the 1e8 regularization otherwise.  Rydberg ss
    pairs on different sites carry U_ij, with separations measured in lattice
    sites.
    """
    config = validate(config)
    exact = config.exact_limit if exact_limit is None else exact_limit
    labels = basis_labels(config)
    m = len(labels)
    model = config.model
    if model == Model.RYDBERG_EIT_ARRAY:
        u0 = config.rydberg.u0
    else:
        u0 = INF_REGULARIZATION
    hard = np.inf if (exact and u0 >= INF_REGULARIZATION) else min(u0, INF_REGULARIZATION)
    u = np.zeros(m * m)
    for a, (i, sa) in enumerate(labels):
        for b, (j, sb) in enumerate(labels):
            if model == Model.JAYNES_CUMMINGS:
                if sa == "e" and sb == "e":
                    u[a * m + b] = hard
                continue
            if i == j:
                u[a * m + b] = hard
            elif model == Model.RYDBERG_EIT_ARRAY and sa == "s" and sb == "s":
                u[a * m + b] = config.rydberg.pair_interaction(i - j)
    return u


def _swap_index(m: int) -> np.ndarray:
    idx = np.arange(m * m)
    return (idx % m) * m + idx // m


# ---------------------------------------------------------------------------
# bubble
# ---------------------------------------------------------------------------

def _markov_bubble(spec: Spectrum, E: complex, channels: np.ndarray) -> np.ndarray:
    eps = spec.eigenvalues
    den = E - eps[:, None] - eps[None, :]
    if np.min(np.abs(den)) < PAIR_POLE_TOL:
        raise SingularBubble(f"E={E} sits on a pair pole", E=E)
    m = eps.size
    a_idx, b_idx = channels // m, channels % m
    x = spec.right
    xl = spec.left.conj()             # rows of X^{-1} are left[:, l]^dagger
    rows = (x[a_idx][:, :, None] * x[b_idx][:, None, :]).reshape(len(channels), -1)
    cols = (xl[a_idx][:, :, None] * xl[b_idx][:, None, :]).reshape(len(channels), -1)
    return (rows / den.reshape(-1)) @ cols.T


def _has_real_pole(config: SystemConfig) -> bool:
    h = build_h0(config, 0.0, Mode.EXACT).matrix
    return la.svdvals(h)[-1] < 1e-10


def _contour_pieces(E: float, indent: bool, width: float):
    """Integration path for i int dw/2pi G(w) G(E - w).

    With a real pole of G at w = 0 the path passes above 0 and below E.
    Returns (path(t), dpath(t), t_lo, t_hi, breakpoints) tuples.
    """
    pieces = []
    if not indent:
        pts = sorted({0.0, float(E)})
        pieces.append((lambda t: t + 0j, lambda t: 1.0 + 0j, -width, width,
                       [p for p in pts if -width < p < width]))
        return pieces
    if abs(E) < 1e-9:
        raise SingularBubble("E coincides with the real pair pole at 0")
    r = min(0.25, abs(E) / 3)
    cuts = sorted([(0.0, +1), (float(E), -1)])
    edge = -width
    for c, side in cuts:
        pieces.append((lambda t: t + 0j, lambda t: 1.0 + 0j, edge, c - r, []))
        # semicircle from c - r to c + r passing above (side=+1) or below
        s = side
        pieces.append((lambda t, c=c, s=s: c - r * np.exp(-1j * s * t),
                       lambda t, s=s: 1j * s * r * np.exp(-1j * s * t),
                       0.0, math.pi, []))
        edge = c + r
    pieces.append((lambda t: t + 0j, lambda t: 1.0 + 0j, edge, width, []))
    return pieces


def _exact_bubble(config: SystemConfig, E: complex, eta: float,
                  rtol: float = 1e-10, width: float = 4e3) -> np.ndarray:
    """i int dw/2pi G(w)(x)G(E - w) by adaptive quadrature.

    The reference 1/((w + i k)(E - w + i k)) is subtracted on the diagonal
    and added back analytically, leaving an O(w^-3) integrand.
    """
    m = len(basis_labels(config))
    kappa = float(np.max(config.rates + config.free_rates))
    shift = 0.5j * eta
    Ec = complex(E) + 1j * eta
    eye = np.eye(m * m)

    res = exact_resolvent(config)

    def integrand(w):
        ga = res(w + shift)
        gb = res(Ec - w - shift)
        ref = 1.0 / ((w + shift + 1j * kappa) * (Ec - w - shift + 1j * kappa))
        return (np.kron(ga, gb) - ref * eye).reshape(-1)

    indent = eta == 0 and _has_real_pole(config)
    total = np.zeros(m ** 4, dtype=complex)
    for path, dpath, lo, hi, pts in _contour_pieces(float(np.real(E)), indent, width):
        def f(t, path=path, dpath=dpath):
            return integrand(path(t)) * dpath(t)
        segs = [lo] + list(pts) + [hi]
        for a, b in zip(segs[:-1], segs[1:]):
            val, err = quad_vec(f, a, b, epsrel=rtol, epsabs=1e-13, limit=4000)
            if not np.all(np.isfinite(val)) or err > 1e-7 * max(1.0, np.abs(val).max()):
                raise QuadratureNonConvergence(f"bubble quadrature error {err:.2e}")
            total += val
    pi_mat = (1j / (2 * np.pi)) * total.reshape(m * m, m * m)
    return pi_mat + eye / (Ec + 2j * kappa)


def _ladder_sum(terms: np.ndarray) -> np.ndarray:
    """Sum over a symmetric Lambert-W ladder (last axis, branches -n..n).

    Terms fall off like 1/n^2 at both ends.  The remainder is estimated as
    n * (end term), which leaves an O(1/n^2) error; one Richardson step
    against the half-length ladder removes that.
    """
    n = terms.shape[-1] // 2
    h = n // 2
    full = terms.sum(axis=-1) + n * (terms[..., 0] + terms[..., -1])
    inner = terms[..., n - h:n + h + 1]
    half = inner.sum(axis=-1) + h * (inner[..., 0] + inner[..., -1])
    return (4 * full - half) / 3


def _mirror_ladder(config: SystemConfig, n_branches: int | None = None,
                   tol: float = 1e-10):
    """Poles xi_n of the mirror Green function and their residue weights.

    Near xi_n, G(w) = 1/((w - xi_n)(1 + w_n)) with w_n a Lambert-W branch.
    Without an explicit ``n_branches`` the ladder is doubled from 32 until
    a probe bubble sum changes by less than ``tol`` relative.
    """
    gam = config.rates[0]
    kap = gam + config.free_rates[0]
    a = abs(config.mirror.x0)
    c = np.exp(2j * config.mirror_phase)
    y = 2 * a * gam * c * np.exp(2 * a * kap)

    def ladder(n):
        w = lambertw(y, np.arange(-n, n + 1))
        return 1j * w / (2 * a) - 1j * kap, 1.0 / (1 + w)

    if n_branches is not None:
        return ladder(n_branches)
    n, prev = 32, None
    while True:
        xi, wt = ladder(n)
        val = _ladder_sum(mirror_green(config, 0.5 - xi) * wt)
        if prev is not None and abs(val - prev) < tol * abs(val) or n >= 16384:
            return xi, wt
        prev, n = val, 2 * n


def mirror_bubble(config: SystemConfig, E, method: str = "quadrature",
                  n_branches: int | None = None, tol: float = 1e-10):
    """Bubble of the perfect-mirror emitter, i int dw/2pi G(w) G(E - w).

    ``method="quadrature"`` integrates along the real axis;
    ``method="poles"`` closes the contour in the lower half plane and sums
    residues over the delay-induced pole ladder, whose poles are Lambert-W
    branches.  ``E`` may be an array for the pole method.
    """
    config = validate(config)
    gam = config.rates[0]
    kap = gam + config.free_rates[0]
    if method == "poles":
        xi, wt = _mirror_ladder(config, n_branches, tol)
        e = np.atleast_1d(np.asarray(E, dtype=complex))
        out = np.empty(e.size, dtype=complex)
        for s in range(0, e.size, 256):
            terms = mirror_green(config, e[s:s + 256, None] - xi[None, :]) * wt
            out[s:s + 256] = _ladder_sum(terms)
        return complex(out[0]) if np.ndim(E) == 0 else out
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")

    def f(w):
        return mirror_green(config, w) * mirror_green(config, E - w) - \
            1.0 / ((w + 1j * kap) * (E - w + 1j * kap))

    width = 1e4 / max(1.0, kap)
    total = 0j
    edges = np.concatenate([-np.geomspace(width, 1e-2, 30), [0.0],
                            np.geomspace(1e-2, width, 30)]) + float(np.real(E)) / 2
    for lo, hi in zip(edges[:-1], edges[1:]):
        re, e1 = quad(lambda w: f(w).real, lo, hi, epsabs=1e-14, epsrel=1e-12, limit=4000)
        im, e2 = quad(lambda w: f(w).imag, lo, hi, epsabs=1e-14, epsrel=1e-12, limit=4000)
        if max(e1, e2) > 1e-9:
            raise QuadratureNonConvergence(f"mirror bubble quadrature error {max(e1, e2):.2e}")
        total += re + 1j * im
    return complex(1j * total / (2 * np.pi) + 1.0 / (E + 2j * kap))


def bubble(config: SystemConfig, E: complex, mode=Mode.MARKOV, eta: float = 0.0,
           channels=None) -> PairBasisOperator:
    """Pair propagator Pi(E) = i int dw/2pi G(w) (x) G(E - w).

    Markov mode uses the closed partial-fraction form over the spectrum,
    which equals (E - H0 (x) 1 - 1 (x) H0)^{-1}.  Exact mode integrates the
    retarded Green functions numerically (at most two emitters).
    """
    config = validate(config)
    mode = as_mode(mode)
    labels = basis_labels(config)
    m = len(labels)
    if m * m > MAX_PAIR_DIM:
        raise BasisTooLarge(f"pair basis dimension {m * m} exceeds {MAX_PAIR_DIM}")
    ch = np.arange(m * m) if channels is None else np.asarray(channels)
    if config.model == Model.MIRROR_TWO_LEVEL:
        val = mirror_bubble(config, complex(E) + 1j * eta)
        return PairBasisOperator(labels, ch, np.array([[val]]))
    if mode == Mode.MARKOV or config.n_emitters == 1 and config.model == Model.TWO_LEVEL:
        spec = eigendecompose(build_h0(config))
        return PairBasisOperator(labels, ch,
                                 _markov_bubble(spec, complex(E) + 1j * eta, ch))
    if config.model != Model.TWO_LEVEL_ARRAY or config.n_emitters > 2:
        raise NotImplementedError("exact bubble is limited to two-level arrays with N <= 2")
    full = _exact_bubble(config, E, eta)
    return PairBasisOperator(labels, ch, full[np.ix_(ch, ch)])


# ---------------------------------------------------------------------------
# T-matrix
# ---------------------------------------------------------------------------

def interacting_channels(config: SystemConfig, exact_limit: bool | None = None):
    u = interaction_diagonal(config, exact_limit)
    ch = np.flatnonzero(u != 0)
    return ch, u[ch]


def ls_residual(u_inv: np.ndarray, pi_block: np.ndarray, t_block: np.ndarray) -> float:
    """Lippmann-Schwinger residual in the form ||(U^-1 - Pi) T - 1||_max.

    This is T = U + U Pi T multiplied through by U^-1, which stays finite
    when hardcore channels are taken to the exact limit.
    """
    a = np.diag(u_inv) - pi_block
    return float(np.max(np.abs(a @ t_block - np.eye(len(u_inv)))))


def tmatrix(config: SystemConfig, E: complex, mode=Mode.MARKOV, eta: float = 0.0,
            exact_limit: bool | None = None) -> PairBasisOperator:
    """T(E) = (U^-1 - Pi(E))^-1 restricted to the interacting channels.

    Channels with U = 0 drop out exactly; hardcore channels enter with
    U^-1 = 0 in the exact-limit mode (so a pure hardcore problem gives
    T = -Pi^-1).
    """
    config = validate(config)
    ch, u = interacting_channels(config, exact_limit)
    labels = basis_labels(config)
    if ch.size == 0:
        return PairBasisOperator(labels, ch, np.zeros((0, 0), dtype=complex))
    pi_block = bubble(config, E, mode, eta, channels=ch).block
    u_inv = np.where(np.isinf(u), 0.0, 1.0 / np.where(u == 0, 1.0, u))
    a = np.diag(u_inv) - pi_block
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > ILL_CONDITIONED:
        raise IllConditioned(f"condition number {cond:.3g} of U^-1 - Pi")
    t_block = la.solve(a, np.eye(ch.size, dtype=complex))
    res = ls_residual(u_inv, pi_block, t_block)
    if res > LS_TOL * max(1.0, np.abs(a).max() * np.abs(t_block).max()):
        raise IllConditioned(f"Lippmann-Schwinger residual {res:.3g}")
    return PairBasisOperator(labels, ch, t_block)


# ---------------------------------------------------------------------------
# generic contraction
# ---------------------------------------------------------------------------

class _Contraction:
    """Holds T(E) and the single-photon vectors for one (config, E, mode)."""

    def __init__(self, config, E, mode, channel, eta=0.0, exact_limit=None):
        self.config = validate(config)
        self.mode = as_mode(mode)
        self.channel = channel
        self.eta = eta
        self.E = E
        self.m = len(basis_labels(self.config))
        self.t = tmatrix(self.config, E, self.mode, eta, exact_limit)
        self.ch = self.t.channels
        self.spec = (eigendecompose(build_h0(self.config))
                     if self.mode == Mode.MARKOV else None)

    def _green(self, k):
        if self.spec is not None:
            return self.spec.resolvent(k + 1j * self.eta)
        return green(self.config, k, self.mode, eta=self.eta)

    def _regular(self, fn, k):
        # A real pole here belongs to a decoupled (dark) mode whose residue in
        # the contraction vanishes; take the symmetric limit across it.
        try:
            with np.errstate(divide="ignore", invalid="ignore"):
                out = fn(k)
            if np.all(np.isfinite(out)):
                return out
        except SingularResolvent:
            pass
        dk = 1e-6 * max(1.0, abs(k))
        return 0.5 * (fn(k + dk) + fn(k - dk))

    def w(self, k):
        return self._regular(
            lambda q: self._green(q) @ coupling_vector(self.config, q, +1, self.mode), k)

    def v(self, p):
        sigma = +1 if self.channel == REFLECTED else -1
        return self._regular(
            lambda q: self._green(q).T @ coupling_vector(self.config, q, sigma, self.mode), p)

    def v_many(self, ps):
        """Rows v(p) for an array of real momenta, batched in Exact mode."""
        ps = np.asarray(ps, dtype=float).ravel()
        if self.mode != Mode.EXACT or ps.size < 8:
            return np.array([self.v(p) for p in ps]).reshape(ps.size, self.m)
        sigma = +1 if self.channel == REFLECTED else -1
        h0 = build_h0(self.config, 0.0, Mode.EXACT).matrix
        n = self.config.n_emitters
        x = np.zeros(self.m)
        x[:n] = self.config.positions
        dist = np.zeros((self.m, self.m))
        dist[:n, :n] = np.abs(x[:n, None] - x[None, :n])
        w = ps + 1j * self.eta
        mats = w[:, None, None] * np.eye(self.m) - h0 * np.exp(1j * w[:, None, None] * dist)
        u = np.array([coupling_vector(self.config, 0.0, sigma, Mode.EXACT)] * ps.size)
        u[:, :n] *= np.exp(1j * sigma * ps[:, None] * x[:n])
        smin = np.linalg.svd(mats, compute_uv=False)[:, -1]
        bad = smin < SINGULAR_TOL * np.maximum(1.0, np.abs(w))
        out = np.empty((ps.size, self.m), dtype=complex)
        good = ~bad
        if np.any(good):
            out[good] = np.linalg.solve(np.swapaxes(mats[good], 1, 2),
                                        u[good][..., None])[..., 0]
        for i in np.flatnonzero(bad):
            out[i] = self.v(ps[i])
        return out

    def source(self, k1, k2):
        """T W_sym on the interacting channels."""
        w1, w2 = self.w(k1), self.w(k2)
        a, b = self.ch // self.m, self.ch % self.m
        wsym = 0.5 * (w1[a] * w2[b] + w2[a] * w1[b])
        return self.t.block @ wsym

    def kernel(self, p1, p2, k1, k2):
        if self.ch.size == 0:
            return 0j
        a, b = self.ch // self.m, self.ch % self.m
        v1, v2 = self.v(p1), self.v(p2)
        return complex(-1j / np.pi * np.dot(v1[a] * v2[b], self.source(k1, k2)))

    def tail_terms(self, k1, k2):
        """Leading large-q behaviour of the kernel at fixed E.

        Returns (B, delta) arrays such that the kernel approaches
        sum B exp(i q delta) / ((E/2 + q)(E/2 - q)).
        """
        if self.ch.size == 0:
            return np.zeros(0), np.zeros(0)
        a, b = self.ch // self.m, self.ch % self.m
        sigma = +1 if self.channel == REFLECTED else -1
        half = 0.5 * np.real(self.E)
        u = coupling_vector(self.config, half, sigma, self.mode)
        src = self.source(k1, k2)
        bvals = -1j / np.pi * u[a] * u[b] * src
        if self.mode == Mode.EXACT:
            x = np.zeros(self.m)
            x[:self.config.n_emitters] = self.config.positions
            delta = sigma * (x[a] - x[b])
        else:
            delta = np.zeros(a.size)
        keep = bvals != 0
        return bvals[keep], delta[keep]


def _kernel_from_contraction(config, k1, k2, mode, channel, s_func, eta=0.0,
                             exact_limit=None) -> TwoPhotonKernel:
    E = k1 + k2
    cache = {}

    def contraction(energy):
        key = complex(energy)
        if key not in cache:
            cache[key] = _Contraction(config, key, mode, channel, eta, exact_limit)
        return cache[key]

    def connected(p1, p2, q1=None, q2=None):
        q1 = k1 if q1 is None else q1
        q2 = k2 if q2 is None else q2
        c = contraction(q1 + q2)
        p1a, p2a = np.broadcast_arrays(np.asarray(p1, float), np.asarray(p2, float))
        if c.ch.size == 0:
            out = np.zeros(p1a.size, dtype=complex)
        else:
            a, b = c.ch // c.m, c.ch % c.m
            v1, v2 = c.v_many(p1a), c.v_many(p2a)
            out = -1j / np.pi * ((v1[:, a] * v2[:, b]) @ c.source(q1, q2))
        return out.reshape(p1a.shape) if p1a.ndim else complex(out[0])

    s1, s2 = s_func(k1), s_func(k2)
    return TwoPhotonKernel(k1, k2, (s1 * s2, s1 * s2), connected, channel,
                           tail=lambda: contraction(E).tail_terms(k1, k2))


# ---------------------------------------------------------------------------
# coordinate-space transforms
# ---------------------------------------------------------------------------

def _lorentz_pair_ft(E: float, beta: float, y):
    """int dq e^{iqy} / ((E/2 + q + i beta)(E/2 - q + i beta))."""
    y = np.asarray(y, dtype=float)
    a = 0.5 * E + 1j * beta
    return -2j * np.pi * np.exp(1j * a * np.abs(y)) / (2 * a)


def fourier_connected(kernel: TwoPhotonKernel, x=None, q_max: float = 40.0,
                      n: int = 2**12):
    """Connected part of psi(0, x) by FFT over the relative momentum.

    psi_c(x) = (1/2) int dq e^{iqx} K(E/2 + q, E/2 - q).  The leading
    O(q^-2) tail is removed with a closed-form Lorentzian model, so the FFT
    only sees an O(q^-3) remainder; the residual tail beyond +-q_max is
    added with sine/cosine integrals.

    Returns
    -------
    x : ndarray
        FFT grid (2 pi m / (n dq)) or the caller's points.
    psi_c : ndarray(complex)
    """
    E = kernel.E
    dq = 2 * q_max / n
    q = -q_max + dq * np.arange(n + 1)
    kq = np.asarray(kernel.connected(0.5 * E + q, 0.5 * E - q), dtype=complex)
    bvals, deltas = kernel.tail() if kernel.tail is not None else (np.zeros(0), np.zeros(0))
    beta = TAIL_RATE
    den = (0.5 * E + q + 1j * beta) * (0.5 * E - q + 1j * beta)
    model = (np.exp(1j * np.outer(q, deltas)) @ bvals) / den if bvals.size else 0 * q
    rem = kq - model

    if x is None:
        m = np.fft.fftfreq(n) * n
        x = 2 * np.pi * m / (n * dq)
        body = np.exp(-1j * q_max * x) * np.fft.ifft(rem[:n]) * n
        order = np.argsort(x)
        x = x[order]
        body = body[order]
    else:
        x = np.asarray(x, dtype=float)
        body = np.exp(1j * np.outer(x, q[:n])) @ rem[:n]
    # trapezoid end correction (the periodic sum counts -q_max once, +q_max never)
    body = dq * (body + 0.5 * (rem[n] * np.exp(1j * q_max * x)
                               - rem[0] * np.exp(-1j * q_max * x)))
    # tail beyond +-q_max: rem ~ A/q^2 there
    a_plus, a_minus = rem[n] * q_max**2, rem[0] * q_max**2
    ax = np.abs(x)
    si, ci = sici(q_max * ax)
    with np.errstate(invalid="ignore"):
        cpart = np.cos(q_max * ax) / q_max - ax * (np.pi / 2 - si)
        spart = np.where(ax > 0, np.sin(q_max * ax) / q_max - ax * ci, 0.0)
    spart = np.sign(x) * spart
    tail = a_plus * (cpart + 1j * spart) + a_minus * (cpart - 1j * spart)
    closed = np.zeros_like(x, dtype=complex)
    for bv, dl in zip(bvals, deltas):
        closed += bv * _lorentz_pair_ft(E, beta, x + dl)
    return x, 0.5 * (body + tail + closed)


def _residue_wavefunction(config, k1, k2, channel, s_func, eta=0.0,
                          exact_limit=None) -> PairWavefunction:
    """Markov pair wavefunction from the spectral (residue) sum."""
    config = validate(config)
    E = k1 + k2
    krel = 0.5 * (k1 - k2)
    c = _Contraction(config, E, Mode.MARKOV, channel, eta, exact_limit)
    spec = c.spec
    sigma = +1 if channel == REFLECTED else -1
    u = coupling_vector(config, 0.0, sigma, Mode.MARKOV)
    eps = spec.eigenvalues + 1j * eta
    s1, s2 = s_func(k1), s_func(k2)
    if c.ch.size:
        a, b = c.ch // c.m, c.ch % c.m
        lt = spec.left.conj()
        proj = lt[a][:, :, None] * lt[b][:, None, :]          # (P, l, l')
        amp = np.einsum("pij,p->ij", proj, c.source(k1, k2))
        uc = u @ spec.right
        coef = (uc[:, None] * uc[None, :]) * amp / (E - eps[:, None] - eps[None, :])
    else:
        coef = np.zeros((eps.size, eps.size), dtype=complex)

    def evaluate(xc, x):
        xc, x = np.broadcast_arrays(xc, x)
        pos = np.exp(1j * np.multiply.outer(np.abs(x), 0.5 * E - eps))   # (..., l')
        neg = pos                                                            # x<0 mirrors
        xx = x[..., None]
        # x >= 0 uses exp(i(E/2 - eps_l')x); x < 0 uses exp(-i(E/2 - eps_l)x)
        conn_pos = np.einsum("...j,ij->...", pos, coef)
        conn_neg = np.einsum("...i,ij->...", neg, coef)
        conn = np.where(x >= 0, conn_pos, conn_neg)
        del xx
        return np.exp(1j * E * xc) * (s1 * s2 * np.cos(krel * x) - conn)

    return PairWavefunction(E, evaluate, channel, s1 * s2)


def _fft_wavefunction(kernel: TwoPhotonKernel, x_grid) -> PairWavefunction:
    x_grid = np.asarray(x_grid, dtype=float)
    xs, conn = fourier_connected(kernel, np.abs(x_grid))
    E = kernel.E
    krel = 0.5 * (kernel.k1 - kernel.k2)
    s12 = kernel.disconnected[0]
    table = dict(zip(np.abs(x_grid).tolist(), conn.tolist()))

    def evaluate(xc, x):
        xc, x = np.broadcast_arrays(xc, x)
        vals = np.array([table.get(abs(float(v)), np.nan) for v in x.ravel()]).reshape(x.shape)
        if np.any(np.isnan(vals)):
            vals = fourier_connected(kernel, np.abs(x.ravel()))[1].reshape(x.shape)
        return np.exp(1j * E * xc) * (s12 * np.cos(krel * x) + vals)

    return PairWavefunction(E, evaluate, kernel.channel, s12)


def g2(psi: PairWavefunction, x, normalization: complex | None = None) -> np.ndarray:
    """g2(x) = |psi(0, x)|^2 / |normalization|^2.

    ``normalization`` defaults to the product of the single-photon
    amplitudes s(k1) s(k2) of the pair's channel.
    """
    norm = psi.normalization if normalization is None else normalization
    if abs(norm) < 1e-300:
        raise ZeroNormalization("single-photon normalization vanishes")
    return np.abs(psi(0.0, x)) ** 2 / abs(norm) ** 2


# ---------------------------------------------------------------------------
# single two-level emitter
# ---------------------------------------------------------------------------

def s2_two_level(k1: float, k2: float, gamma: float = 1.0) -> TwoPhotonKernel:
    """Closed-form reflected-pair S-matrix of a single two-level emitter."""
    def r(k):
        return rt_two_level(k, gamma).r

    def connected(p1, p2, q1=None, q2=None):
        q1 = k1 if q1 is None else q1
        q2 = k2 if q2 is None else q2
        p1, p2 = np.asarray(p1), np.asarray(p2)
        E = q1 + q2
        g = 1j * gamma
        return (1j * gamma**2 / np.pi) * (E + 2 * g) / (
            (p1 + g) * (p2 + g) * (q1 + g) * (q2 + g))

    E = k1 + k2
    tail_b = (1j * gamma**2 / np.pi) * (E + 2j * gamma) / ((k1 + 1j * gamma) * (k2 + 1j * gamma))
    # the closed form has exactly the tail shape with rate gamma, written
    # against the TAIL_RATE model so the FFT remainder is nonzero
    return TwoPhotonKernel(k1, k2, (r(k1) * r(k2),) * 2, connected, REFLECTED,
                           tail=lambda: (np.array([tail_b]), np.array([0.0])))


def psi2_two_level(k1: float, k2: float, gamma: float = 1.0) -> PairWavefunction:
    """psi(x_c, x) = e^{iEx_c} R1 R2 [cos(kx) - e^{(iE/2 - G)|x|}]."""
    E, krel = k1 + k2, 0.5 * (k1 - k2)
    rr = rt_two_level(k1, gamma).r * rt_two_level(k2, gamma).r

    def evaluate(xc, x):
        return np.exp(1j * E * xc) * rr * (
            np.cos(krel * x) - np.exp((0.5j * E - gamma) * np.abs(x)))

    return PairWavefunction(E, evaluate, REFLECTED, rr)


# ---------------------------------------------------------------------------
# Jaynes-Cummings
# ---------------------------------------------------------------------------

def _gauss_tangent(n: int, scale: float):
    u, wu = np.polynomial.legendre.leggauss(n)
    th = 0.5 * np.pi * u
    return scale * np.tan(th), 0.5 * np.pi * scale * wu / np.cos(th) ** 2


@dataclass(frozen=True)
class PairScattering:
    """Outgoing amplitudes of a Lorentzian photon pair on a two-level emitter.

    ``channels`` maps "rr", "rt", "tr", "tt" (r = reflected, t = transmitted)
    to amplitudes on the product grid ``p``.
    """

    p: np.ndarray
    weights: np.ndarray
    channels: dict

    def norm(self) -> float:
        w = np.outer(self.weights, self.weights)
        return float(sum(np.sum(w * np.abs(v) ** 2) for v in self.channels.values()))


def two_level_pair_scattering(wavepacket: Wavepacket, gamma: float = 1.0,
                              n: int = 200, n_k: int = 100) -> PairScattering:
    """Scatter two identical photons, each in ``wavepacket``, off one emitter.

    phi_ab(p1, p2) = s_a(p1) s_b(p2) f(p1) f(p2) + C(p1, p2), where the
    connected term C = (1/2) int dk S_c(p1, p2; k, E - k) f(k) f(E - k) is the
    same in every channel.  With the input normalized, the summed channel
    norm is 1.
    """
    if not gamma > 0:
        raise NegativeRate("gamma must be positive")
    scale = max(gamma, wavepacket.width_rate)
    p, w = _gauss_tangent(n, scale)
    u, wu = np.polynomial.legendre.leggauss(n_k)
    f = wavepacket.amplitude
    kern = s2_two_level(0.0, 0.0, gamma)
    conn = np.empty((n, n), dtype=complex)
    for i, p1 in enumerate(p):
        e = p1 + p
        # the integrand is symmetric under k -> E - k: integrate twice over the
        # half line holding the k = 0 peak, tangent-mapped around that peak
        mid = np.arctan(0.5 * e / scale)[:, None]
        lo = np.where(e[:, None] >= 0, -0.5 * np.pi, mid)
        hi = np.where(e[:, None] >= 0, mid, 0.5 * np.pi)
        th = lo + 0.5 * (hi - lo) * (u + 1)
        k1 = scale * np.tan(th)
        k2 = e[:, None] - k1
        wk = 0.5 * (hi - lo) * wu * scale / np.cos(th) ** 2
        vals = kern.connected(p1, p[:, None], k1, k2) * f(k1) * f(k2)
        conn[i] = np.sum(vals * wk, axis=1)
    fp = f(p)
    amps = {"r": rt_two_level(p, gamma).r * fp, "t": rt_two_level(p, gamma).t * fp}
    channels = {a + b: np.outer(amps[a], amps[b]) + conn for a in "rt" for b in "rt"}
    return PairScattering(p, w, channels)


def _jc_config(g: float, gamma: float) -> SystemConfig:
    from .core import JCBlock
    return validate(SystemConfig(Model.JAYNES_CUMMINGS, gamma=gamma, jc=JCBlock(g)))


def s2_jc(k1: float, k2: float, g: float, gamma: float = 1.0) -> TwoPhotonKernel:
    """Closed-form reflected-pair S-matrix of a resonant JC emitter."""
    def d(k):
        return k * (k + 1j * gamma) - g * g

    def connected(p1, p2, q1=None, q2=None):
        q1 = k1 if q1 is None else q1
        q2 = k2 if q2 is None else q2
        p1, p2 = np.asarray(p1), np.asarray(p2)
        E = q1 + q2
        num = g**4 * (E + 1j * gamma) * (E * (E + 2j * gamma) - 4 * g * g)
        den = ((E + 1j * gamma) * (E + 2j * gamma) - 2 * g * g) * d(p1) * d(p2) * d(q1) * d(q2)
        return 1j * gamma**2 / np.pi * num / den

    r1, r2 = rt_jc(k1, g, gamma).r, rt_jc(k2, g, gamma).r
    # d(p) ~ p^2, so the kernel decays as q^-4; there is no q^-2 tail
    return TwoPhotonKernel(k1, k2, (r1 * r2, r1 * r2), connected, REFLECTED,
                           tail=lambda: (np.zeros(0), np.zeros(0)))


def psi2_jc(k1: float, k2: float, g: float, gamma: float = 1.0) -> PairWavefunction:
    """Reflected JC pair wavefunction from the two-pole residue sum."""
    cfg = _jc_config(g, gamma)
    return _residue_wavefunction(cfg, k1, k2, REFLECTED,
                                 lambda k: rt_jc(k, g, gamma).r)


def psi2_jc_closed(k1: float, k2: float, g: float, gamma: float = 1.0) -> PairWavefunction:
    """Closed two-root form, written with |x| so that it is even in x."""
    E, krel = k1 + k2, 0.5 * (k1 - k2)
    lam = np.roots([1.0, 1j * gamma, -g * g])
    lp, lm = lam[0], lam[1]
    r1, r2 = rt_jc(k1, g, gamma).r, rt_jc(k2, g, gamma).r
    d = (k1 * (k1 + 1j * gamma) - g * g) * (k2 * (k2 + 1j * gamma) - g * g)
    pre = gamma**2 * g**4 / (lp - lm) / ((E + 1j * gamma) * (E + 2j * gamma) - 2 * g * g) / d

    def evaluate(xc, x):
        ax = np.abs(x)
        s = ((E - 2 * lp) * np.exp(1j * (0.5 * E - lm) * ax)
             - (E - 2 * lm) * np.exp(1j * (0.5 * E - lp) * ax))
        return np.exp(1j * E * xc) * (r1 * r2 * np.cos(krel * x) - pre * s)

    return PairWavefunction(E, evaluate, REFLECTED, r1 * r2)


# ---------------------------------------------------------------------------
# arrays
# ---------------------------------------------------------------------------

def _single_amplitude(config, mode, channel, eta):
    def s(k):
        p = rt(config, k, mode, eta)
        return p.r if channel == REFLECTED else p.t
    return s


def s2_array(config: SystemConfig, k1: float, k2: float, mode=Mode.MARKOV,
             channel: str = REFLECTED, eta: float = 0.0) -> TwoPhotonKernel:
    """Two-level array pair S-matrix, connected part via T(E) on site pairs."""
    config = validate(config)
    return _kernel_from_contraction(config, k1, k2, mode, channel,
                                    _single_amplitude(config, mode, channel, eta), eta)


def psi2_array(config: SystemConfig, k1: float, k2: float, mode=Mode.MARKOV,
               channel: str = REFLECTED, eta: float = 0.0,
               x_grid=None) -> PairWavefunction:
    """Array pair wavefunction: residue sum (Markov) or FFT (Exact)."""
    config = validate(config)
    mode = as_mode(mode)
    s = _single_amplitude(config, mode, channel, eta)
    if mode == Mode.MARKOV:
        return _residue_wavefunction(config, k1, k2, channel, s, eta)
    kern = s2_array(config, k1, k2, mode, channel, eta)
    grid = np.linspace(0, 10, 201) if x_grid is None else x_grid
    return _fft_wavefunction(kern, grid)


# ---------------------------------------------------------------------------
# emitter in front of a mirror
# ---------------------------------------------------------------------------

def mirror_tmatrix(config: SystemConfig, E, method: str = "quadrature",
                   tol: float = 1e-10):
    config = validate(config)
    pi_e = mirror_bubble(config, E, method, tol=tol)
    if config.exact_limit:
        return -1.0 / pi_e
    return 1.0 / (1.0 / INF_REGULARIZATION - pi_e)


def s2_mirror(config: SystemConfig, k1: float, k2: float,
              method: str = "quadrature") -> TwoPhotonKernel:
    """Reflected-pair S-matrix of an emitter in front of a perfect mirror.

    K = -(i/pi) u(p1)u(p2)u(k1)u(k2) G(p1)G(p2)G(k1)G(k2) T(E) with the
    effective coupling u(k) = 2i sqrt(G) sin((k + k0)|x0|); the product of
    four couplings gives the 16 G^2 prod sin prefactor.
    """
    config = validate(config)
    cache = {}

    def tmat(E):
        if E not in cache:
            cache[E] = mirror_tmatrix(config, E, method)
        return cache[E]

    def leg(k):
        return mirror_coupling(config, k) * mirror_green(config, k)

    def connected(p1, p2, q1=None, q2=None):
        q1 = k1 if q1 is None else q1
        q2 = k2 if q2 is None else q2
        return -1j / np.pi * leg(np.asarray(p1)) * leg(np.asarray(p2)) * \
            leg(q1) * leg(q2) * tmat(complex(q1 + q2))

    r1, r2 = rt_mirror(config, k1), rt_mirror(config, k2)
    return TwoPhotonKernel(k1, k2, (r1 * r2, r1 * r2), connected, REFLECTED)


def tangent_grid(n: int, scale: float):
    """Nodes p = scale tan(theta) with theta on a uniform midpoint grid.

    Returns nodes and quadrature weights for integrals over the real line.
    """
    h = np.pi / n
    theta = -np.pi / 2 + h * (np.arange(n) + 0.5)
    p = scale * np.tan(theta)
    w = scale * h / np.cos(theta) ** 2
    return p, w


def sinh_grid(n: int, scale: float, p_max: float):
    """Gauss-Legendre nodes in u mapped by p = scale sinh(u), |p| <= p_max.

    Near-uniform spacing for |p| < scale and geometric spacing beyond, which
    suits amplitudes with structure at a few rates and 1/p tails.
    """
    umax = np.arcsinh(p_max / scale)
    u, wu = np.polynomial.legendre.leggauss(n)
    return scale * np.sinh(umax * u), scale * np.cosh(umax * u) * umax * wu


@dataclass(frozen=True)
class EntangledPair:
    """Outgoing two-photon amplitude sampled on a product momentum grid.

    ``norm`` is the discrete norm of ``psi`` before any rescaling; its
    deviation from 1 measures the probability outside the grid.
    """

    p: np.ndarray
    weights: np.ndarray
    psi: np.ndarray

    @property
    def weighted(self) -> np.ndarray:
        sw = np.sqrt(self.weights)
        return sw[:, None] * self.psi * sw[None, :]

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.weighted) ** 2)))

    def entropy(self) -> float:
        """Schmidt entropy of the grid-normalized amplitude."""
        return von_neumann_entropy(self.weighted / self.norm)


def pair_overlap(config: SystemConfig, wavepacket: Wavepacket, energies,
                 method: str = "poles", rtol: float = 1e-8,
                 n_branches: int | None = None, tol: float = 1e-10) -> np.ndarray:
    """F2(E) = int dk f(k) f(E - k) L(k) L(E - k) with L(k) = u(k) G(k).

    ``method="quadrature"`` integrates all energies together by one
    vector-valued adaptive quadrature.  ``method="poles"`` closes the
    contour below the real axis, picking up the packet pole at -i gamma and
    the emitter pole ladder.
    """
    config = validate(config)
    e = np.asarray(energies, dtype=float)
    f = wavepacket.amplitude
    if method == "poles":
        if wavepacket.direction != 1:
            raise ValueError("the pole form assumes a right-moving packet")
        g = wavepacket.width_rate
        pref = g / np.pi * np.exp(-1j * e * wavepacket.center)
        xi, wt = _mirror_ladder(config, n_branches, tol)

        def leg(k):
            return mirror_coupling(config, k) * mirror_green(config, k)

        total = leg(-1j * g) * leg(e + 1j * g) / (e + 2j * g)
        uw = mirror_coupling(config, xi) * wt / (xi + 1j * g)
        for s in range(0, e.size, 256):
            es = e[s:s + 256, None]
            terms = uw * leg(es - xi) / (es - xi + 1j * g)
            total[s:s + 256] += _ladder_sum(terms)
        return -2j * np.pi * pref * total

    def leg(k):
        return mirror_coupling(config, k) * mirror_green(config, k)

    def integrand(k):
        return f(k) * f(e - k) * leg(k) * leg(e - k)

    scale = max(wavepacket.width_rate, config.rates[0])
    total = np.zeros(e.size, dtype=complex)
    spans = [(-np.inf, -scale), (-scale, scale), (scale, np.inf)]
    if e.size:
        lo, hi = float(e.min()) - scale, float(e.max()) + scale
        spans = [(-np.inf, lo), (lo, hi), (hi, np.inf)]
    for lo, hi in spans:
        val, err = quad_vec(integrand, lo, hi, epsrel=rtol, epsabs=1e-14, limit=20000)
        if not np.all(np.isfinite(val)) or err > 1e-6 * max(1.0, np.abs(val).max()):
            raise QuadratureNonConvergence(f"F2 quadrature error {err:.2e}")
        total += val
    return total


def entangled_pair(config: SystemConfig, wavepacket: Wavepacket, grid=None,
                   n: int = 256, method: str = "poles",
                   tol: float = 1e-8) -> EntangledPair:
    """Outgoing pair amplitude for two identical photons hitting the mirror model.

    psi_out(p1, p2) = R(p1)R(p2) f(p1)f(p2)
                      + (1/2) int dk K(p1, p2; k, E - k) f(k) f(E - k),

    which is the R R f f term minus 16 i G^2 T(E) F2(E) times the outgoing
    sine/denominator factors.

    Parameters
    ----------
    config : SystemConfig
        MirrorTwoLevel config.
    wavepacket : Wavepacket
        Incoming single-photon profile (both photons share it).
    grid : (p, w), optional
        Momentum nodes and weights.  The default is a sinh-mapped Gauss
        grid of ``n`` points, with core scale min(gamma, G) and cutoff
        1e3 max(gamma, G).
    method : {"poles", "quadrature"}
        Evaluation path for the bubble and for F2.
    tol : float
        Relative convergence target of the pole-ladder sums.

    Returns
    -------
    EntangledPair
    """
    config = validate(config)
    if grid is None:
        g, gam = wavepacket.width_rate, config.rates[0]
        grid = sinh_grid(n, min(g, gam), 1e3 * max(g, gam))
    p, w = (np.asarray(v, dtype=float) for v in grid)
    f = wavepacket.amplitude
    lp = mirror_coupling(config, p) * mirror_green(config, p)
    r = np.array([rt_mirror(config, x) for x in p])
    fp = f(p)
    psi = np.outer(r * fp, r * fp)
    iu = np.triu_indices(p.size)
    energies = p[iu[0]] + p[iu[1]]
    if method == "poles":
        tm = mirror_tmatrix(config, energies, method, tol)
    else:
        tm = np.array([mirror_tmatrix(config, x, method) for x in energies])
    conn = 0.5 * (-1j / np.pi) * tm * pair_overlap(config, wavepacket, energies, method,
                                                   tol=tol)
    full = np.zeros_like(psi)
    full[iu] = conn
    full.T[iu] = conn
    return EntangledPair(p, w, psi + np.outer(lp, lp) * full)


def von_neumann_entropy(psi, weights=None, tol: float = 1e-6) -> float:
    """Entanglement entropy -sum lam^2 ln lam^2 of a sampled pair amplitude.

    ``weights`` are the quadrature weights of the (shared) momentum grid;
    the Schmidt values are the singular values of sqrt(w) psi sqrt(w).
    """
    psi = np.asarray(psi, dtype=complex)
    if weights is not None:
        sw = np.sqrt(np.asarray(weights, dtype=float))
        psi = sw[:, None] * psi * sw[None, :]
    norm = np.sqrt(np.sum(np.abs(psi) ** 2))
    if abs(norm - 1) > tol:
        raise NotNormalized(f"pair amplitude norm {norm:.8f}")
    lam2 = la.svdvals(psi) ** 2
    lam2 = lam2[lam2 > 1e-300]
    return float(-np.sum(lam2 * np.log(lam2)))


# ---------------------------------------------------------------------------
# Rydberg-EIT array
# ---------------------------------------------------------------------------

def s2_rydberg(config: SystemConfig, k1: float, k2: float,
               exact_limit: bool | None = None) -> TwoPhotonKernel:
    """Transmitted-pair S-matrix of the Rydberg-EIT array (Markov)."""
    config = validate(config)
    if (2 * config.n_emitters) ** 2 > MAX_PAIR_DIM:
        raise BasisTooLarge("Rydberg pair basis limited to N <= 30")
    s = _single_amplitude(config, Mode.MARKOV, TRANSMITTED, 0.0)
    return _kernel_from_contraction(config, k1, k2, Mode.MARKOV, TRANSMITTED, s,
                                    exact_limit=exact_limit)


def psi2_rydberg(config: SystemConfig, k1: float, k2: float,
                 exact_limit: bool | None = None) -> PairWavefunction:
    """Transmitted Rydberg pair wavefunction from the spectral residue sum."""
    config = validate(config)
    if (2 * config.n_emitters) ** 2 > MAX_PAIR_DIM:
        raise BasisTooLarge("Rydberg pair basis limited to N <= 30")
    s = _single_amplitude(config, Mode.MARKOV, TRANSMITTED, 0.0)
    return _residue_wavefunction(config, k1, k2, TRANSMITTED, s,
                                 exact_limit=exact_limit)
