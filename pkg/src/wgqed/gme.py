"""Generalized master equation for emitters driven by few-photon packets.

A classical source J e^{...} driving the waveguide turns the photon
wavepacket into a coherent drive.  Expanding the driven density matrix in
powers J^m J*^n gives a hierarchy of components rho^(m,n), each obeying the
undriven Lindblad equation plus a commutator with the drive that raises m or
n by one.  The physical state for an n-photon Fock input follows from the
coherent-state generating function,

    rho_s = n! sum_k rho^(n-k, n-k) / k!,

so one photon needs rho^(0,0) and rho^(1,1); two photons add rho^(2,2).

The emitter Hilbert space is the sector with at most ``p`` excitations
(``p`` the photon number), which is exact because every component
rho^(m,n) with m, n <= p lives there.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np
import scipy.linalg as la

from .core import (BasisTooLarge, InsufficientOrder, Model, StepTooLarge,
                   SystemConfig, ValidationError, Wavepacket, validate)
from .greens import basis_labels, build_h0, waveguide_dim

MAX_GME_DIM = 600


# ---------------------------------------------------------------------------
# Hilbert space
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EmitterSpace:
    """Excitation sector spanned by multisets of single-excitation labels.

    ``states[k]`` is a sorted tuple of label indices.  Labels on the same
    emitter site exclude each other, except the bosonic cavity mode of the
    Jaynes-Cummings model.
    """

    labels: tuple
    states: tuple
    lowering: tuple          # one (dim, dim) matrix per label

    @property
    def dim(self) -> int:
        return len(self.states)

    def number(self) -> np.ndarray:
        return np.array([len(s) for s in self.states])


def _allowed(state: tuple, labels: tuple) -> bool:
    seen = {}
    for a in state:
        site, kind = labels[a]
        if kind == "c":
            continue
        if site in seen:
            return False
        seen[site] = kind
    return True


def emitter_space(config: SystemConfig, max_excitations: int) -> EmitterSpace:
    config = validate(config)
    if config.model == Model.MIRROR_TWO_LEVEL:
        raise ValidationError("the master equation does not cover the mirror model")
    labels = basis_labels(config)
    m = len(labels)
    states = [()]
    for n in range(1, max_excitations + 1):
        states += [s for s in combinations_with_replacement(range(m), n) if _allowed(s, labels)]
    if len(states) > MAX_GME_DIM:
        raise BasisTooLarge(f"emitter sector dimension {len(states)} exceeds {MAX_GME_DIM}")
    index = {s: k for k, s in enumerate(states)}
    lowering = []
    for a in range(m):
        op = np.zeros((len(states), len(states)))
        for k, s in enumerate(states):
            if a in s:
                rest = list(s)
                rest.remove(a)
                op[index[tuple(rest)], k] = math.sqrt(s.count(a))
        lowering.append(op)
    return EmitterSpace(labels, tuple(states), tuple(lowering))


# ---------------------------------------------------------------------------
# generator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Lindbladian:
    """d rho/dt = -i(H_eff rho - rho H_eff^+) + 2 sum_l K_l rho K_l^+.

    ``hamiltonian`` is the Hermitian system part (coherent exchange folded
    in); ``decay`` is the matrix Gamma_ab of the anti-Hermitian part, so
    H_eff = hamiltonian - i sum_ab Gamma_ab L_a^+ L_b.
    """

    space: EmitterSpace
    hamiltonian: np.ndarray
    decay: np.ndarray
    jumps: tuple

    @property
    def h_eff(self) -> np.ndarray:
        return self._h_eff

    def __post_init__(self):
        lo = self.space.lowering
        anti = sum(self.decay[a, b] * lo[a].T @ lo[b]
                   for a in range(len(lo)) for b in range(len(lo)) if self.decay[a, b] != 0)
        object.__setattr__(self, "_h_eff", self.hamiltonian - 1j * np.asarray(anti, dtype=complex))

    def apply(self, rho: np.ndarray) -> np.ndarray:
        h = self._h_eff
        out = -1j * (h @ rho - rho @ h.conj().T)
        for k in self.jumps:
            out += 2 * k @ rho @ k.conj().T
        return out

    def matrix(self) -> np.ndarray:
        """Superoperator acting on column-stacked vec(rho)."""
        d = self.space.dim
        eye = np.eye(d)
        h = self._h_eff
        sup = -1j * (np.kron(eye, h) - np.kron(h.conj(), eye))
        for k in self.jumps:
            sup += 2 * np.kron(k.conj(), k)
        return sup


def decay_matrix(config: SystemConfig) -> np.ndarray:
    """Population decay matrix 2 Gamma_ab on the single-excitation labels.

    Gamma_ab = sqrt(G_a G_b) cos(k0 |x_a - x_b|) + G_f delta_ab for arrays.
    """
    h0 = build_h0(config).matrix
    return 1j * (h0 - h0.conj().T)


def lindblad_generator(config: SystemConfig, max_excitations: int = 1) -> Lindbladian:
    """Collective Lindblad generator on the sector with <= max_excitations.

    The coherent exchange sqrt(G_i G_j) sin(k0|x_i - x_j|) and the decay
    matrix are the Hermitian and anti-Hermitian parts of the Markov
    single-excitation Hamiltonian.  Rydberg s-s pairs carry U_ij.
    """
    config = validate(config)
    space = emitter_space(config, max_excitations)
    h0 = build_h0(config).matrix
    herm = 0.5 * (h0 + h0.conj().T)
    gam = 0.5j * (h0 - h0.conj().T)
    gam = 0.5 * (gam + gam.conj().T)
    lo = space.lowering
    m = len(lo)
    d = space.dim
    ham = np.zeros((d, d), dtype=complex)
    for a in range(m):
        for b in range(m):
            if herm[a, b] != 0:
                ham += herm[a, b] * lo[a].T @ lo[b]
    if config.model == Model.RYDBERG_EIT_ARRAY:
        labels = space.labels
        for k, s in enumerate(space.states):
            for a, b in ((a, b) for i, a in enumerate(s) for b in s[i + 1:]):
                (i, ka), (j, kb) = labels[a], labels[b]
                if ka == "s" and kb == "s":
                    ham[k, k] += config.rydberg.pair_interaction(i - j)
    vals, vecs = la.eigh(gam)
    if vals.min() < -1e-12 * max(1.0, vals.max()):
        raise ValidationError("decay matrix is not positive semidefinite")
    jumps = []
    for lam, v in zip(vals, vecs.T):
        if lam > 1e-14:
            # K = sqrt(lam) sum_b v_b L_b, so sum K rho K^+ = sum Gamma_ab L_b rho L_a^+
            jumps.append(math.sqrt(lam) * sum(v[b].conj() * lo[b] for b in range(m)))
    return Lindbladian(space, ham, gam, tuple(jumps))


# ---------------------------------------------------------------------------
# drive
# ---------------------------------------------------------------------------

def drive_amplitudes(config: SystemConfig, wavepacket: Wavepacket, t) -> np.ndarray:
    """b_a(t) = sqrt(G_a) e^{i s k0 x_a} xi(x_a, t) on the coupled labels."""
    config = validate(config)
    labels = basis_labels(config)
    nw = waveguide_dim(config)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros((t.size, len(labels)), dtype=complex)
    x = np.asarray(config.positions[:nw], dtype=float)
    s = wavepacket.direction
    amp = np.sqrt(config.rates[:nw]) * np.exp(1j * s * config.phases[:nw])
    out[:, :nw] = amp * wavepacket.profile(x[None, :], t[:, None])
    return out


def _drive_operator(space: EmitterSpace, b: np.ndarray) -> np.ndarray:
    """V = sum_a b_a L_a^+ (raising part of the drive)."""
    v = np.zeros((space.dim, space.dim), dtype=complex)
    for a, ba in enumerate(b):
        if ba != 0:
            v += ba * space.lowering[a].T
    return v


def driven_hamiltonian(config: SystemConfig, wavepacket: Wavepacket, T: float,
                       J: complex = 1.0, max_excitations: int = 1,
                       generator: Lindbladian | None = None) -> np.ndarray:
    """Hermitian H~_sys(T) = H_sys + J V(T) + J* V(T)^+."""
    gen = generator or lindblad_generator(config, max_excitations)
    b = drive_amplitudes(config, wavepacket, T)[0]
    v = _drive_operator(gen.space, b)
    return gen.hamiltonian + J * v + np.conj(J) * v.conj().T


# ---------------------------------------------------------------------------
# hierarchy
# ---------------------------------------------------------------------------

@dataclass
class DensityHierarchy:
    """Source-order components rho^(m,n) sampled on ``times``.

    ``components[(m, n)]`` has shape (len(times), dim, dim).  Components
    with m or n above the photon number are never evolved and stay zero.
    """

    times: np.ndarray
    components: dict
    space: EmitterSpace
    order: int
    error_estimate: float = 0.0
    wavepacket: Wavepacket | None = None

    def component(self, m: int, n: int) -> np.ndarray:
        if (m, n) not in self.components:
            return np.zeros((self.times.size, self.space.dim, self.space.dim), dtype=complex)
        return self.components[(m, n)]

    def index(self, T: float) -> int:
        k = int(np.argmin(np.abs(self.times - T)))
        if abs(self.times[k] - T) > 1e-9 * max(1.0, abs(T)):
            raise ValueError(f"time {T} is not on the recorded grid")
        return k


def _rhs(gen: Lindbladian, rhos: dict, keys: list, v: np.ndarray) -> dict:
    vd = v.conj().T
    out = {}
    for key in keys:
        m, n = key
        d = gen.apply(rhos[key])
        if m > 0:
            r = rhos[(m - 1, n)]
            d = d - 1j * (v @ r - r @ v)
        if n > 0:
            r = rhos[(m, n - 1)]
            d = d - 1j * (vd @ r - r @ vd)
        out[key] = d
    return out


def _integrate(gen, config, wavepacket, grid, keys, rho0, record):
    space = gen.space
    rhos = {k: np.zeros((space.dim, space.dim), dtype=complex) for k in keys}
    rhos[(0, 0)] = rho0.copy()
    arrivals = wavepacket.arrival(np.asarray(config.positions[:waveguide_dim(config)], float))
    saved = {k: [] for k in keys}
    if record[0]:
        for k in keys:
            saved[k].append(rhos[k].copy())
    for i in range(grid.size - 1):
        t0, t1 = grid[i], grid[i + 1]
        h = t1 - t0
        # sites whose packet front has passed at the start of the step
        active = arrivals <= t0 + 1e-12 * max(1.0, abs(t0))

        def vop(t):
            b = np.zeros(len(space.labels), dtype=complex)
            b[: active.size] = np.where(active, _active_profile(config, wavepacket, t), 0.0)
            return _drive_operator(space, b)

        v0, vm, v1 = vop(t0), vop(t0 + 0.5 * h), vop(t1)
        k1 = _rhs(gen, rhos, keys, v0)
        k2 = _rhs(gen, {k: rhos[k] + 0.5 * h * k1[k] for k in keys}, keys, vm)
        k3 = _rhs(gen, {k: rhos[k] + 0.5 * h * k2[k] for k in keys}, keys, vm)
        k4 = _rhs(gen, {k: rhos[k] + h * k3[k] for k in keys}, keys, v1)
        rhos = {k: rhos[k] + h / 6 * (k1[k] + 2 * k2[k] + 2 * k3[k] + k4[k]) for k in keys}
        if record[i + 1]:
            for k in keys:
                saved[k].append(rhos[k].copy())
    return {k: np.array(saved[k]) for k in keys}


def _active_profile(config, wavepacket, t):
    """Drive amplitudes without the theta gate (the gate is fixed per step)."""
    nw = waveguide_dim(config)
    x = np.asarray(config.positions[:nw], dtype=float)
    g = wavepacket.width_rate
    s = wavepacket.direction
    u = s * (wavepacket.center - x) + t
    prof = -1j * s * np.sqrt(2 * g) * np.exp(-g * np.abs(u))
    return np.sqrt(config.rates[:nw]) * np.exp(1j * s * config.phases[:nw]) * prof


def _time_grid(t_start: float, t_end: float, dt: float, breaks: np.ndarray) -> np.ndarray:
    """Uniform steps of at most dt with every breakpoint on the grid."""
    pts = np.unique(np.concatenate([[t_start, t_end],
                                    breaks[(breaks > t_start) & (breaks < t_end)]]))
    out = [pts[:1]]
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(1, int(math.ceil((b - a) / dt - 1e-9)))
        out.append(np.linspace(a, b, n + 1)[1:])
    return np.concatenate(out)


def evolve_hierarchy(config: SystemConfig, wavepacket: Wavepacket, T_end: float,
                     dt: float = 0.005, photons: int = 1, t_start: float | None = None,
                     rho0: np.ndarray | None = None, times=None,
                     check_step: bool = True) -> DensityHierarchy:
    """Integrate the source-order hierarchy with fixed-step RK4.

    Parameters
    ----------
    photons : {1, 2}
        Photon number of the Fock input; components rho^(m,n) with
        m, n <= photons are evolved (source order 2*photons).
    t_start : float, optional
        Defaults to the first arrival of the packet front (the emitters
        are untouched before that).
    times : array_like, optional
        Output times; default is every grid point.
    check_step : bool
        Repeat the run with 2*dt and raise if the Richardson estimate
        |rho(dt) - rho(2dt)|/15 exceeds 1e-4.

    Raises
    ------
    StepTooLarge
    """
    config = validate(config)
    if photons not in (1, 2):
        raise ValidationError("photons must be 1 or 2")
    gen = lindblad_generator(config, photons)
    space = gen.space
    keys = [(m, n) for m in range(photons + 1) for n in range(photons + 1)]
    keys.sort(key=lambda k: k[0] + k[1])
    if rho0 is None:
        rho0 = np.zeros((space.dim, space.dim), dtype=complex)
        rho0[0, 0] = 1.0
    nw = waveguide_dim(config)
    arrivals = wavepacket.arrival(np.asarray(config.positions[:nw], float))
    t0 = float(arrivals.min()) if t_start is None else float(t_start)
    if T_end <= t0:
        raise ValidationError("T_end must come after the start time")
    breaks = arrivals
    if times is not None:
        breaks = np.concatenate([breaks, np.atleast_1d(np.asarray(times, float))])
    grid = _time_grid(t0, T_end, dt, breaks)
    if times is None:
        record = np.ones(grid.size, bool)
    else:
        want = np.atleast_1d(np.asarray(times, float))
        record = np.isin(grid, want)
        if record.sum() != np.unique(want).size:
            raise ValidationError("output times must lie in [t_start, T_end]")
    comps = _integrate(gen, config, wavepacket, grid, keys, rho0, record)
    err = 0.0
    if check_step:
        coarse_grid = _time_grid(t0, T_end, 2 * dt, breaks)
        rec = np.zeros(coarse_grid.size, bool)
        rec[-1] = True
        coarse = _integrate(gen, config, wavepacket, coarse_grid, keys, rho0, rec)
        err = max(float(np.max(np.abs(comps[k][-1] - coarse[k][-1]))) for k in keys) / 15
        if err > 1e-4:
            raise StepTooLarge(f"step-halving error estimate {err:.2e} exceeds 1e-4")
    return DensityHierarchy(grid[record], comps, space, 2 * photons, err, wavepacket)


def reduced_density(hierarchy: DensityHierarchy, photon_number: int, T: float | None = None):
    """Physical emitter state for an n-photon Fock input.

    rho_s = n! sum_{k=0..n} rho^(n-k, n-k) / k!.  With ``T`` omitted the
    whole recorded series is returned.

    Raises
    ------
    InsufficientOrder
        If the hierarchy was not evolved to source order 2n.
    """
    if photon_number < 0:
        raise ValidationError("photon number must be >= 0")
    if 2 * photon_number > hierarchy.order:
        raise InsufficientOrder(
            f"{photon_number} photons need source order {2 * photon_number}, have {hierarchy.order}")
    n = photon_number
    rho = sum(hierarchy.component(n - k, n - k) * (math.factorial(n) / math.factorial(k))
              for k in range(n + 1))
    if T is None:
        return rho
    return rho[hierarchy.index(T)]


def populations(hierarchy: DensityHierarchy, photon_number: int) -> np.ndarray:
    """Excitation probability of every single-excitation label over time."""
    rho = reduced_density(hierarchy, photon_number)
    space = hierarchy.space
    num = [np.diag(lo.T @ lo) for lo in space.lowering]
    return np.einsum("tii,ai->ta", rho, np.array(num)).real
