"""Single-photon reflection and transmission amplitudes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Mode, Model, SystemConfig, as_mode, validate
from .greens import coupling_vector, green


@dataclass(frozen=True)
class RTPoint:
    k: float
    r: complex
    t: complex

    @property
    def flux(self) -> float:
        return abs(self.r) ** 2 + abs(self.t) ** 2


def rt_two_level(k, gamma: float = 1.0) -> RTPoint:
    """R = -i G/(k + i G), T = k/(k + i G) for a single two-level emitter."""
    den = k + 1j * gamma
    return RTPoint(k, -1j * gamma / den, k / den)


def rt_jc(k, g: float, gamma: float = 1.0) -> RTPoint:
    """Resonant Jaynes-Cummings emitter with the waveguide coupled to the cavity."""
    den = (k + 1j * gamma) * k - g * g
    return RTPoint(k, -1j * gamma * k / den, (k * k - g * g) / den)


def _contract(config: SystemConfig, k: float, mode: Mode, eta: float) -> RTPoint:
    g = green(config, k, mode, eta=eta)
    u_in = coupling_vector(config, k, +1, mode)
    u_r = coupling_vector(config, k, +1, mode)   # reflected: exp(+i(k+k0)x) again
    u_t = coupling_vector(config, k, -1, mode)
    r = -1j * (u_r @ g @ u_in)
    t = 1.0 - 1j * (u_t @ g @ u_in)
    return RTPoint(k, complex(r), complex(t))


def rt_array(config: SystemConfig, k: float, mode=Mode.MARKOV,
             eta: float = 0.0) -> RTPoint:
    """Two-level array amplitudes from the Green-function contraction.

    R = -i sum_ij G_ij sqrt(G_i G_j) e^{i(k+k0)(x_i+x_j)} and
    T = 1 - i sum_ij G_ij sqrt(G_i G_j) e^{-i(k+k0)(x_i-x_j)}; the Markov
    form keeps the carrier phases only.
    """
    config = validate(config)
    return _contract(config, k, as_mode(mode), eta)


def rt_eit_array(config: SystemConfig, k: float, mode=Mode.MARKOV,
                 eta: float = 0.0) -> RTPoint:
    """Rydberg-EIT array amplitudes from the ee block of the 2N x 2N resolvent."""
    config = validate(config)
    if config.model != Model.RYDBERG_EIT_ARRAY:
        raise ValueError("rt_eit_array needs a RydbergEitArray config")
    return _contract(config, k, as_mode(mode), eta)


def mirror_denominator(k, gamma: float, phase0: float, x0: float):
    """k + i G - i G exp(2 i (k0 + k)|x0|), the emitter pole function."""
    return k + 1j * gamma - 1j * gamma * np.exp(2j * (phase0 + k * abs(x0)))


def rt_mirror(config: SystemConfig, k: float) -> complex:
    """Reflection amplitude of an emitter in front of a mirror.

    With ``config.exact_limit`` the perfect-mirror closed form is used;
    otherwise the mirror is a finite-rate boson and the 2 x 2 emitter-mirror
    Green function is inverted.
    """
    config = validate(config)
    gam = config.rates[0] + 0.0
    x0 = config.mirror.x0
    th = config.mirror_phase
    phi = th + k * abs(x0)
    if config.exact_limit:
        num = k - 1j * gam + 1j * gam * np.exp(-2j * phi)
        return complex(-num / mirror_denominator(k, gam, th, x0))
    gb = config.mirror.gamma_b
    off = 1j * np.sqrt(gam * gb) * np.exp(1j * phi)
    gf = config.free_rates[0]
    m = np.array([[k + 1j * gam + 1j * gf, off], [off, k + 1j * gb]])
    g = np.linalg.inv(m)
    r = -1j * (gam * g[0, 0] * np.exp(-2j * phi) + gb * g[1, 1]
               + 2 * np.sqrt(gam * gb) * g[0, 1] * np.exp(-1j * phi))
    return complex(r)


def mirror_coupling(config: SystemConfig, k):
    """Effective in/out coupling 2 i sqrt(G) sin((k + k0)|x0|) of the mirror model."""
    config = validate(config)
    phi = config.mirror_phase + np.asarray(k) * abs(config.mirror.x0)
    return 2j * np.sqrt(config.rates[0]) * np.sin(phi)


def mirror_green(config: SystemConfig, k):
    """Emitter Green function 1/(k + i G - i G e^{2i(k+k0)|x0|}) (perfect mirror)."""
    config = validate(config)
    gam = config.rates[0] + config.free_rates[0]
    # free-space loss only damps the emitter; the mirror echo carries gamma
    k = np.asarray(k)
    return 1.0 / (k + 1j * gam - 1j * config.rates[0]
                  * np.exp(2j * (config.mirror_phase + k * abs(config.mirror.x0))))


def rt(config: SystemConfig, k: float, mode=Mode.MARKOV, eta: float = 0.0) -> RTPoint:
    """Dispatch to the right closed form or contraction for any model."""
    config = validate(config)
    model = config.model
    if model == Model.MIRROR_TWO_LEVEL:
        return RTPoint(k, rt_mirror(config, k), 0.0)
    if model == Model.TWO_LEVEL_ARRAY or model == Model.TWO_LEVEL:
        return rt_array(config, k, mode, eta)
    if model == Model.RYDBERG_EIT_ARRAY:
        return rt_eit_array(config, k, mode, eta)
    return _contract(config, k, Mode.MARKOV, eta)
