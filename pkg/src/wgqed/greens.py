"""Single-excitation effective Hamiltonians, resolvents and spectra.

The single-excitation basis is ordered site-major inside each species
block: for two-level emitters it is (e_1 .. e_N); for the Rydberg-EIT array
(e_1 .. e_N, s_1 .. s_N); for the Jaynes-Cummings emitter (cavity, atom).
Only the first block couples to the waveguide.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
from scipy.special import gammaln

from .core import (DefectiveMatrix, Mode, Model, SeriesOverflow,
                   SingularResolvent, SystemConfig, as_mode, validate)

SINGULAR_TOL = 1e-12
DEFECTIVE_COND = 1e12
MAX_SERIES_TERMS = 10**6


@dataclass(frozen=True)
class EffectiveHamiltonian:
    """Complex-symmetric generator on the single-excitation space."""

    basis: tuple
    matrix: np.ndarray
    mode: Mode

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class Spectrum:
    """Bi-orthogonal eigensystem.

    Attributes
    ----------
    eigenvalues : (n,) ndarray(complex)
    right : (n, n) ndarray(complex)
        Right eigenvectors chi_l as columns.
    left : (n, n) ndarray(complex)
        Left eigenvectors chi~_l as columns, scaled so that
        ``left.conj().T @ right == I``.
    """

    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray

    def resolvent(self, omega: complex) -> np.ndarray:
        """(omega - H)^{-1} assembled from the spectral sum."""
        return (self.right / (omega - self.eigenvalues)) @ self.left.conj().T


def basis_labels(config: SystemConfig) -> tuple:
    config = validate(config)
    n = config.n_emitters
    if config.model == Model.RYDBERG_EIT_ARRAY:
        return tuple((i, "e") for i in range(n)) + tuple((i, "s") for i in range(n))
    if config.model == Model.JAYNES_CUMMINGS:
        return ((0, "c"), (0, "e"))
    return tuple((i, "e") for i in range(n))


def waveguide_dim(config: SystemConfig) -> int:
    """Number of basis states coupled to the waveguide (the leading block)."""
    return 1 if config.model == Model.JAYNES_CUMMINGS else config.n_emitters


def _exchange_block(config: SystemConfig, omega: complex, mode: Mode) -> np.ndarray:
    """-i sqrt(G_i G_j) exp(i (k0 + w)|x_i - x_j|) minus local free-space loss."""
    g = config.rates
    x = np.asarray(config.positions, dtype=float)
    n = x.size
    idx = np.arange(n)
    if config.k0d is not None:
        dph = config.k0d * np.abs(idx[:, None] - idx[None, :])
    else:
        dph = config.k0 * np.abs(x[:, None] - x[None, :])
    phase = np.exp(1j * np.mod(dph, 2 * np.pi))
    if mode == Mode.EXACT:
        phase = phase * np.exp(1j * omega * np.abs(x[:, None] - x[None, :]))
    block = -1j * np.sqrt(np.outer(g, g)) * phase
    block[idx, idx] -= 1j * config.free_rates
    return block


def build_h0(config: SystemConfig, omega: complex = 0.0,
             mode=Mode.MARKOV) -> EffectiveHamiltonian:
    """Effective Hamiltonian H0(omega) (Exact) or H0^M (Markov).

    Parameters
    ----------
    config : SystemConfig
    omega : complex
        Frequency at which the retarded exchange is evaluated.  Ignored in
        Markov mode.
    mode : {"exact", "markov"}

    Returns
    -------
    EffectiveHamiltonian
    """
    config = validate(config)
    mode = as_mode(mode)
    labels = basis_labels(config)
    model = config.model
    if model == Model.JAYNES_CUMMINGS:
        jc = config.jc
        gam, gf = config.rates[0], config.free_rates[0]
        m = np.array([[jc.delta_c - 1j * gam, jc.g],
                      [jc.g, jc.delta_e - 1j * gf]], dtype=complex)
    elif model == Model.MIRROR_TWO_LEVEL:
        m = np.array([[-1j * config.rates[0] - 1j * config.free_rates[0]]],
                     dtype=complex)
    else:
        block = _exchange_block(config, omega, mode)
        if model == Model.RYDBERG_EIT_ARRAY:
            r = config.rydberg
            n = config.n_emitters
            eye = np.eye(n)
            m = np.block([[block + r.delta_e * eye, r.omega * eye],
                          [r.omega * eye, r.delta_s * eye]]).astype(complex)
        else:
            m = block
    return EffectiveHamiltonian(labels, m, mode)


def green(config: SystemConfig, omega: complex, mode=Mode.MARKOV,
          eta: float = 0.0) -> np.ndarray:
    """Resolvent G(omega) = [omega - H0(omega)]^{-1}.

    ``eta`` shifts the evaluation point to omega + i*eta; the default of 0
    means a real-axis pole raises :class:`SingularResolvent` rather than being
    regularized silently.
    """
    w = complex(omega) + 1j * eta
    h = build_h0(config, w, mode).matrix
    a = w * np.eye(h.shape[0]) - h
    smin = la.svdvals(a)[-1]
    if smin < SINGULAR_TOL * max(1.0, abs(w)):
        raise SingularResolvent(f"omega={omega} lies on a pole of H0",
                                omega=omega)
    return la.solve(a, np.eye(h.shape[0], dtype=complex))


def _fix_phase(vecs: np.ndarray) -> np.ndarray:
    out = vecs.copy()
    for l in range(out.shape[1]):
        col = out[:, l]
        mag = np.abs(col)
        j = int(np.flatnonzero(mag >= mag.max() * (1 - 1e-12))[0])
        out[:, l] = col * (abs(col[j]) / col[j])
    return out


def eigendecompose(h: EffectiveHamiltonian | np.ndarray) -> Spectrum:
    """Bi-orthogonal eigendecomposition of a Markov effective Hamiltonian.

    Right vectors have unit 2-norm with their largest-magnitude entry
    (lowest index on ties) real and positive; left vectors follow from the
    inverse of the right-vector matrix.
    """
    m = h.matrix if isinstance(h, EffectiveHamiltonian) else np.asarray(h)
    if isinstance(h, EffectiveHamiltonian) and h.mode != Mode.MARKOV:
        raise ValueError("eigendecompose needs an omega-independent matrix")
    vals, vecs = la.eig(m)
    order = np.lexsort((vals.real, -vals.imag))   # least damped first
    vals, vecs = vals[order], vecs[:, order]
    vecs = _fix_phase(vecs / np.linalg.norm(vecs, axis=0))
    cond = np.linalg.cond(vecs)
    if not np.isfinite(cond) or cond > DEFECTIVE_COND:
        raise DefectiveMatrix(f"eigenvector matrix condition number {cond:.3g}")
    left = np.linalg.inv(vecs).conj().T
    return Spectrum(vals, vecs, left)


def coupling_vector(config: SystemConfig, k: float, sigma: int,
                    mode=Mode.MARKOV) -> np.ndarray:
    """sqrt(G_i) exp(i sigma (k0 + k) x_i) on the waveguide-coupled block.

    The Markov form keeps only the carrier phase.  Entries outside the
    coupled block are zero.
    """
    config = validate(config)
    mode = as_mode(mode)
    dim = len(basis_labels(config))
    v = np.zeros(dim, dtype=complex)
    ph = config.phases
    nw = waveguide_dim(config)
    amp = np.sqrt(config.rates[:nw]) * np.exp(1j * sigma * ph[:nw])
    if mode == Mode.EXACT:
        amp = amp * np.exp(1j * sigma * k * np.asarray(config.positions[:nw]))
    v[:nw] = amp
    return v


def exact_resolvent(config: SystemConfig):
    """Fast callable w -> G(w) in Exact mode for repeated evaluation.

    H0(w) only depends on w through exp(i w |x_i - x_j|) on the coupled block,
    so the w = 0 matrix and the distance table are built once.  No pole check
    is made beyond a failed inversion.
    """
    config = validate(config)
    h0 = build_h0(config, 0.0, Mode.EXACT).matrix
    m = h0.shape[0]
    nw = waveguide_dim(config)
    dist = np.zeros((m, m))
    if config.model not in (Model.JAYNES_CUMMINGS, Model.MIRROR_TWO_LEVEL):
        x = np.asarray(config.positions, dtype=float)
        dist[:nw, :nw] = np.abs(x[:, None] - x[None, :])
    eye = np.eye(m)
    dist_nz = bool(np.any(dist))

    def resolvent(w):
        w = complex(w)
        h = h0 * np.exp(1j * w * dist) if dist_nz else h0
        try:
            return np.linalg.inv(w * eye - h)
        except np.linalg.LinAlgError as exc:
            raise SingularResolvent(f"omega={w} lies on a pole of H0") from exc

    return resolvent


# ---------------------------------------------------------------------------
# exact two-emitter retardation
# ---------------------------------------------------------------------------

def _series_terms(a: complex, d: float, t: float, damping: float) -> np.ndarray:
    """Terms of exp(-damping t) * sum_n (a (t - n d))^n / n!, n = 0..floor(t/d)."""
    if t < 0:
        return np.zeros(0, dtype=complex)
    nmax = int(math.floor(t / d)) if d > 0 else 0
    if nmax > MAX_SERIES_TERMS:
        raise SeriesOverflow(f"retardation series needs {nmax} > 1e6 terms")
    n = np.arange(nmax + 1)
    tau = t - n * d
    with np.errstate(divide="ignore", invalid="ignore"):
        logmag = n * np.log(np.abs(a) * tau) - gammaln(n + 1) - damping * t
    logmag[0] = -damping * t
    mags = np.exp(logmag)
    mags[(tau <= 0) & (n > 0)] = 0.0
    return mags * np.exp(1j * n * np.angle(a))


def _fsum_complex(terms: np.ndarray) -> complex:
    return complex(math.fsum(terms.real), math.fsum(terms.imag))


def series_coefficient(config: SystemConfig, branch: int) -> complex:
    """The coefficient +-G exp(i k0 d + (G_f + G) d) inside C_+-."""
    config = validate(config)
    g, gf = config.gamma0, config.gamma_f0
    d = config.spacing
    return branch * g * np.exp(1j * config.k0d + (gf + g) * d)


def retardation_series(config: SystemConfig, T: float, branch: int,
                       damping: float = 0.0) -> complex:
    """Exact delay series C_+-(T) for two emitters a distance d apart.

    ``damping`` multiplies the result by exp(-damping T), folded into every
    term so that the combination used by the excitation amplitudes never
    overflows.  Summation is exact-rounded per component (``math.fsum``).
    """
    config = validate(config)
    if config.n_emitters != 2:
        raise ValueError("retardation_series needs exactly two emitters")
    if branch not in (1, -1):
        raise ValueError("branch must be +1 or -1")
    a = series_coefficient(config, branch)
    return _fsum_complex(_series_terms(a, config.spacing, float(T), damping))
