"""Shared types, conventions and configuration validation.

Units follow c = hbar = 1 and the waveguide decay rate is the natural rate
unit (Gamma = 1 in every shipped scenario).  Momenta are detunings from the
carrier k0, so k0 only ever enters through propagation phases
k0 * |x_i - x_j|.  Those phases are reduced modulo 2*pi once, at validation
time, and stored on the config.
"""
from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

#: Finite stand-in for the infinite mirror rate and hardcore scale.
INF_REGULARIZATION = 1e8


# ---------------------------------------------------------------------------
# errors
# ---------------------------------------------------------------------------

class WgqedError(Exception):
    """Base class for all structured errors raised by the package."""

    code = "WgqedError"

    def __init__(self, message: str = "", **context: Any):
        super().__init__(message)
        self.context = context

    def __str__(self) -> str:
        msg = super().__str__()
        return f"{self.code}: {msg}" if msg else self.code


class ValidationError(WgqedError):
    """Malformed input.  The CLI maps these to exit code 2."""


class ComputationError(WgqedError):
    """Numerical failure on valid input.  The CLI maps these to exit code 3."""


def _error(name: str, base: type) -> type:
    return type(name, (base,), {"code": name})


NegativeRate = _error("NegativeRate", ValidationError)
NonMonotonePositions = _error("NonMonotonePositions", ValidationError)
MissingModelBlock = _error("MissingModelBlock", ValidationError)
NonMonotoneGrid = _error("NonMonotoneGrid", ValidationError)
UnknownParameterPath = _error("UnknownParameterPath", ValidationError)

SingularResolvent = _error("SingularResolvent", ComputationError)
DefectiveMatrix = _error("DefectiveMatrix", ComputationError)
SingularBubble = _error("SingularBubble", ComputationError)
QuadratureNonConvergence = _error("QuadratureNonConvergence", ComputationError)
IllConditioned = _error("IllConditioned", ComputationError)
ZeroNormalization = _error("ZeroNormalization", ComputationError)
NotNormalized = _error("NotNormalized", ComputationError)
BasisTooLarge = _error("BasisTooLarge", ComputationError)
GridTooCoarse = _error("GridTooCoarse", ComputationError)
DegenerateSpectrum = _error("DegenerateSpectrum", ComputationError)
StepTooLarge = _error("StepTooLarge", ComputationError)
InsufficientOrder = _error("InsufficientOrder", ComputationError)
SeriesOverflow = _error("SeriesOverflow", ComputationError)


# ---------------------------------------------------------------------------
# enums
# ---------------------------------------------------------------------------

class Model(str, enum.Enum):
    TWO_LEVEL = "TwoLevel"
    JAYNES_CUMMINGS = "JaynesCummings"
    TWO_LEVEL_ARRAY = "TwoLevelArray"
    MIRROR_TWO_LEVEL = "MirrorTwoLevel"
    RYDBERG_EIT_ARRAY = "RydbergEitArray"


class Mode(str, enum.Enum):
    EXACT = "exact"
    MARKOV = "markov"


class Interaction(str, enum.Enum):
    UNIFORM = "uniform"
    DIPOLAR = "dipolar"
    VAN_DER_WAALS = "vdw"

    @property
    def power(self) -> int:
        return {"uniform": 0, "dipolar": 3, "vdw": 6}[self.value]


def as_mode(mode) -> Mode:
    if isinstance(mode, Mode):
        return mode
    return Mode(str(mode).lower())


# ---------------------------------------------------------------------------
# configuration blocks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JCBlock:
    g: float
    delta_c: float = 0.0
    delta_e: float = 0.0


@dataclass(frozen=True)
class MirrorBlock:
    x0: float
    gamma_b: float = math.inf


@dataclass(frozen=True)
class RydbergBlock:
    omega: float
    delta_s: float
    delta_e: float = 0.0
    u0: float = math.inf
    interaction: Interaction = Interaction.UNIFORM
    coefficient: float = 0.0

    def pair_interaction(self, separation: float) -> float:
        """Rydberg shift U_ij for two s-excitations `separation` sites apart."""
        p = self.interaction.power
        if p == 0:
            return float(self.coefficient)
        return float(self.coefficient) / abs(separation) ** p


@dataclass(frozen=True)
class SystemConfig:
    """Physical parameters of one of the five emitter models.

    Parameters
    ----------
    model : Model
    gamma, gamma_f : float or sequence of float
        Waveguide and free-space decay rates, per emitter after validation.
    k0 : float
        Carrier wavenumber.
    positions : sequence of float
        Emitter coordinates, first one at the origin.  Ignored for the
        mirror model, whose emitter sits at ``mirror.x0``.
    k0d : float, optional
        Propagation phase per lattice spacing, reduced mod 2*pi.  Derived
        from ``k0`` when absent.  Supplying it directly makes Markov results
        independent of the physical spacing bit-for-bit.
    exact_limit : bool
        Treat infinite Gamma_b and U0 through closed-form limits instead of
        the finite 1e8 regularization.
    """

    model: Model
    gamma: Any = 1.0
    gamma_f: Any = 0.0
    k0: float = 0.0
    positions: tuple = (0.0,)
    jc: JCBlock | None = None
    mirror: MirrorBlock | None = None
    rydberg: RydbergBlock | None = None
    k0d: float | None = None
    exact_limit: bool = True
    validated: bool = field(default=False, compare=False)

    # -- derived quantities ---------------------------------------------

    @property
    def n_emitters(self) -> int:
        return len(self.positions)

    @property
    def spacing(self) -> float:
        if len(self.positions) < 2:
            return 0.0
        return float(self.positions[1] - self.positions[0])

    @property
    def rates(self) -> np.ndarray:
        return np.asarray(self.gamma, dtype=float).reshape(-1)

    @property
    def free_rates(self) -> np.ndarray:
        return np.asarray(self.gamma_f, dtype=float).reshape(-1)

    @property
    def gamma0(self) -> float:
        """The common waveguide rate; raises if the rates differ."""
        g = self.rates
        if not np.all(g == g[0]):
            raise ValueError("closed form requires a uniform decay rate")
        return float(g[0])

    @property
    def gamma_f0(self) -> float:
        g = self.free_rates
        if not np.all(g == g[0]):
            raise ValueError("closed form requires a uniform free-space rate")
        return float(g[0])

    @property
    def phases(self) -> np.ndarray:
        """k0 * x_i mod 2*pi for every emitter."""
        if self.k0d is not None:
            return np.mod(self.k0d * np.arange(self.n_emitters), TWO_PI)
        return np.mod(self.k0 * np.asarray(self.positions, dtype=float), TWO_PI)

    @property
    def mirror_phase(self) -> float:
        """k0 * |x0| mod 2*pi for the mirror model."""
        return math.fmod(self.k0 * abs(self.mirror.x0), TWO_PI)

    @property
    def u0_value(self) -> float:
        return self.rydberg.u0 if self.rydberg is not None else INF_REGULARIZATION

    def replace(self, **changes) -> "SystemConfig":
        changes.setdefault("validated", False)
        return dataclasses.replace(self, **changes)


# ---------------------------------------------------------------------------
# wavepackets and channels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Wavepacket:
    """Single-pole Lorentzian photon wavepacket.

    ``f(k) = sqrt(gamma/pi) exp(-i k x0) / (k + i sigma gamma)``.  For a
    right mover (sigma = +1) the packet sits at x < x0 with its front at x0;
    a left mover mirrors this.  The detuning carried by mode k is sigma*k.
    """

    direction: int = 1
    width_rate: float = 1.0
    center: float = 0.0

    def __post_init__(self):
        if self.direction not in (1, -1):
            raise ValueError("direction must be +1 (right) or -1 (left)")
        if not self.width_rate > 0:
            raise NegativeRate("wavepacket width rate must be positive")

    def amplitude(self, k):
        k = np.asarray(k, dtype=float)
        g = self.width_rate
        return (np.sqrt(g / np.pi) * np.exp(-1j * k * self.center)
                / (k + 1j * self.direction * g))

    def profile(self, x, t=0.0):
        """Coordinate-space amplitude (2 pi)^(-1/2) int f(k) e^{ik(x - sigma t)}."""
        x = np.asarray(x, dtype=float)
        g = self.width_rate
        s = self.direction
        u = s * (self.center - x) + t      # distance behind the front
        out = -1j * s * np.sqrt(2 * g) * np.exp(-g * np.abs(u))
        return np.where(u >= 0, out, 0.0)

    def arrival(self, x) -> np.ndarray:
        """Time at which the packet front reaches position x."""
        return self.direction * (np.asarray(x, dtype=float) - self.center)


@dataclass(frozen=True)
class Channel:
    sigma: int
    k: float

    @property
    def energy(self) -> float:
        return self.sigma * self.k


def pair_coordinates(k1: float, k2: float) -> tuple[float, float]:
    """Total energy E and relative momentum k of a photon pair."""
    return k1 + k2, 0.5 * (k1 - k2)


# ---------------------------------------------------------------------------
# validation and (de)serialization
# ---------------------------------------------------------------------------

def _resolve_inf(value) -> float:
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity", "+inf"):
            return math.inf
        return float(value)
    return float(value)


def _rates(value, n: int, name: str) -> tuple:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.full(n, float(arr[0]))
    if arr.size != n:
        raise ValidationError(f"{name} has {arr.size} entries for {n} emitters")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise NegativeRate(f"{name} must be finite and >= 0")
    return tuple(float(a) for a in arr)


def validate(config: SystemConfig) -> SystemConfig:
    """Check a raw config and return its normalized form.

    Normalization sorts nothing silently: positions must already be strictly
    increasing and start at 0.  Rates become per-emitter tuples, infinite
    sentinels become ``INF_REGULARIZATION`` and the lattice phase k0*d is
    reduced mod 2*pi.  The function is idempotent.
    """
    if config.validated:
        return config
    try:
        model = Model(config.model)
    except ValueError as exc:
        raise ValidationError(f"unknown model {config.model!r}") from exc

    positions = tuple(float(x) for x in np.atleast_1d(config.positions))
    if model in (Model.TWO_LEVEL, Model.JAYNES_CUMMINGS, Model.MIRROR_TWO_LEVEL):
        if len(positions) != 1:
            raise ValidationError(f"{model.value} takes a single emitter")
    if not positions:
        raise NonMonotonePositions("no emitter positions")
    if positions[0] != 0.0:
        raise NonMonotonePositions("first emitter must sit at the origin")
    steps = np.diff(positions)
    if np.any(steps <= 0):
        raise NonMonotonePositions("positions must be strictly increasing")
    if model in (Model.TWO_LEVEL_ARRAY, Model.RYDBERG_EIT_ARRAY) and steps.size > 1:
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
            raise NonMonotonePositions("array lattice spacing must be uniform")

    n = len(positions)
    gamma = _rates(config.gamma, n, "gamma")
    gamma_f = _rates(config.gamma_f, n, "gamma_f")
    if any(g <= 0 for g in gamma) and model != Model.MIRROR_TWO_LEVEL:
        raise NegativeRate("waveguide rate gamma must be positive")

    jc = mirror = rydberg = None
    if model == Model.JAYNES_CUMMINGS:
        if config.jc is None:
            raise MissingModelBlock("JaynesCummings requires a jc block")
        jc = JCBlock(float(config.jc.g), float(config.jc.delta_c),
                     float(config.jc.delta_e))
    if model == Model.MIRROR_TWO_LEVEL:
        if config.mirror is None:
            raise MissingModelBlock("MirrorTwoLevel requires a mirror block")
        x0 = float(config.mirror.x0)
        if not x0 < 0:
            raise NonMonotonePositions("mirror emitter position must be negative")
        gb = _resolve_inf(config.mirror.gamma_b)
        if gb < 0:
            raise NegativeRate("mirror rate must be >= 0")
        mirror = MirrorBlock(x0, INF_REGULARIZATION if math.isinf(gb) else gb)
    if model == Model.RYDBERG_EIT_ARRAY:
        r = config.rydberg
        if r is None:
            raise MissingModelBlock("RydbergEitArray requires a rydberg block")
        if r.delta_s is None:
            raise MissingModelBlock("rydberg block requires delta_s")
        u0 = _resolve_inf(r.u0)
        if u0 < 0:
            raise NegativeRate("hardcore scale must be >= 0")
        rydberg = RydbergBlock(
            omega=float(r.omega), delta_s=float(r.delta_s),
            delta_e=float(r.delta_e),
            u0=INF_REGULARIZATION if math.isinf(u0) else u0,
            interaction=Interaction(r.interaction),
            coefficient=float(r.coefficient))

    k0d = config.k0d
    if k0d is not None:
        k0d = math.fmod(float(k0d), TWO_PI) % TWO_PI
    elif n > 1:
        k0d = math.fmod(float(config.k0) * (positions[1] - positions[0]),
                        TWO_PI) % TWO_PI

    return SystemConfig(model=model, gamma=gamma, gamma_f=gamma_f,
                        k0=float(config.k0), positions=positions, jc=jc,
                        mirror=mirror, rydberg=rydberg, k0d=k0d,
                        exact_limit=bool(config.exact_limit), validated=True)


def config_from_dict(data: Mapping[str, Any]) -> SystemConfig:
    """Build (and validate) a config from a JSON-style mapping.

    Field names mirror :class:`SystemConfig`.  Arrays may give ``n`` and
    ``d`` instead of explicit positions.
    """
    data = dict(data)
    if "model" not in data:
        raise ValidationError("config needs a 'model' field")
    positions = data.pop("positions", None)
    n = data.pop("n", None)
    d = data.pop("d", None)
    if positions is None:
        if n is not None:
            if d is None:
                raise ValidationError("'n' requires a lattice spacing 'd'")
            positions = [i * float(d) for i in range(int(n))]
        else:
            positions = [0.0]
    blocks = {}
    for key, cls in (("jc", JCBlock), ("mirror", MirrorBlock),
                     ("rydberg", RydbergBlock)):
        block = data.pop(key, None)
        if block is not None:
            names = {f.name for f in dataclasses.fields(cls)}
            unknown = set(block) - names
            if unknown:
                raise ValidationError(f"unknown {key} fields {sorted(unknown)}")
            if cls is RydbergBlock and "delta_s" not in block:
                raise MissingModelBlock("rydberg block requires delta_s")
            blocks[key] = cls(**block)
    names = {f.name for f in dataclasses.fields(SystemConfig)} - {"validated"}
    unknown = set(data) - names
    if unknown:
        raise ValidationError(f"unknown config fields {sorted(unknown)}")
    try:
        raw = SystemConfig(positions=tuple(positions), **blocks, **data)
    except TypeError as exc:
        raise ValidationError(str(exc)) from exc
    return validate(raw)


def config_to_dict(config: SystemConfig) -> dict:
    out = {
        "model": Model(config.model).value,
        "gamma": list(np.atleast_1d(config.gamma).astype(float)),
        "gamma_f": list(np.atleast_1d(config.gamma_f).astype(float)),
        "k0": config.k0,
        "positions": list(config.positions),
        "k0d": config.k0d,
        "exact_limit": config.exact_limit,
    }
    for key in ("jc", "mirror", "rydberg"):
        block = getattr(config, key)
        if block is not None:
            d = dataclasses.asdict(block)
            if key == "rydberg":
                d["interaction"] = Interaction(d["interaction"]).value
            out[key] = d
    return out


def check_grid(values: Sequence[float], name: str = "grid") -> np.ndarray:
    """Return `values` as an array, insisting on strict increase."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise NonMonotoneGrid(f"{name} must be a non-empty 1-d sequence")
    if np.any(np.diff(arr) <= 0) or not np.all(np.isfinite(arr)):
        raise NonMonotoneGrid(f"{name} must be strictly increasing")
    return arr
