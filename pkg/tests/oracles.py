"""Independent reference computations used by the tests.

Nothing here imports the package's solvers; each oracle integrates the
defining equations directly or evaluates a textbook closed form.
"""
import numpy as np
from scipy.integrate import quad, solve_ivp


def two_level_g2(x, gamma=1.0):
    """Reflected-pair g2 of one two-level emitter at E = 0."""
    return (1.0 - np.exp(-gamma * np.abs(x))) ** 2


def dde_two_emitters(d, T, gamma=1.0, gamma_f=0.0, k0d=0.0, dt=2e-4):
    """Excitation amplitudes of two emitters with emitter 1 initially excited.

    da_i/dt = -(G + G_f) a_i - G e^{i k0 d} a_j(t - d), integrated by the
    method of steps with RK4 and a history buffer; dt must divide d.
    """
    lag = int(round(d / dt))
    if lag < 1 or abs(lag * dt - d) > 1e-12:
        raise ValueError("dt must divide d")
    n = int(round(T / dt))
    a = np.zeros((n + 1, 2), dtype=complex)
    a[0, 0] = 1.0
    c = gamma * np.exp(1j * k0d)
    kap = gamma + gamma_f

    def delayed(idx2):
        # history at half-integer step indices (idx2 is twice the index)
        if idx2 < 0:
            return np.zeros(2, dtype=complex)
        if idx2 % 2 == 0:
            return a[idx2 // 2]
        lo = idx2 // 2
        # cubic interpolation on the stored history
        pts = [max(lo - 1, 0), lo, lo + 1, min(lo + 2, n)]
        if lo + 2 > n or lo - 1 < 0:
            return 0.5 * (a[lo] + a[lo + 1])
        return (-a[pts[0]] + 9 * a[pts[1]] + 9 * a[pts[2]] - a[pts[3]]) / 16

    def f(y, hist):
        return -kap * y - c * hist[::-1]

    zero = np.zeros(2, dtype=complex)
    for i in range(n):
        if i < lag:
            # the delayed term is identically zero on (0, d); its jump at t = d
            # belongs to the next step
            h0 = hm = h1 = zero
        else:
            h0 = delayed(2 * (i - lag))
            hm = delayed(2 * (i - lag) + 1)
            h1 = delayed(2 * (i + 1 - lag))
        y = a[i]
        k1 = f(y, h0)
        k2 = f(y + 0.5 * dt * k1, hm)
        k3 = f(y + 0.5 * dt * k2, hm)
        k4 = f(y + dt * k3, h1)
        a[i + 1] = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return np.arange(n + 1) * dt, a


def single_emitter_bubble(E, gamma=1.0):
    """i int dw/2pi 1/((w + iG)(E - w + iG)) by adaptive quadrature."""
    def part(w, which):
        val = 1.0 / ((w + 1j * gamma) * (E - w + 1j * gamma))
        return val.real if which == 0 else val.imag

    re = quad(part, -np.inf, np.inf, args=(0,), epsabs=1e-13, epsrel=1e-12, limit=500)[0]
    im = quad(part, -np.inf, np.inf, args=(1,), epsabs=1e-13, epsrel=1e-12, limit=500)[0]
    return 1j * (re + 1j * im) / (2 * np.pi)


def lorentz_pair_connected(p1, p2, gamma_wp, gamma=1.0):
    """Connected outgoing amplitude of two identical Lorentzian photons.

    The k integral of the single-emitter kernel against f(k) f(E - k) is done
    by residues in the upper half plane.
    """
    E = p1 + p2
    return (2 * gamma ** 2 * gamma_wp / np.pi) / (
        (E + 2j * gamma_wp) * (E + 1j * (gamma + gamma_wp))
        * (p1 + 1j * gamma) * (p2 + 1j * gamma))


def amplitude_ode(h, drives, times, hard=None, u=None, scale=1.0, t_start=None):
    """Integrate single amplitudes and, optionally, the two-excitation amplitude.

    i dA_k/dt = h A_k + b_k(t) for each drive b_k, and
    i dpsi/dt = h psi + psi h^T + u psi + scale * sym(b_1 A_2 + b_2 A_1)
    with entries flagged in ``hard`` frozen at zero.
    """
    m = h.shape[0]
    nd = len(drives)
    pair = hard is not None
    times = np.asarray(times, dtype=float)

    def rhs(t, y):
        amps = y[: nd * m].reshape(nd, m)
        bs = [b(t) for b in drives]
        out = [-1j * (h @ amps[k] + bs[k]) for k in range(nd)]
        if pair:
            psi = y[nd * m:].reshape(m, m)
            src = np.outer(bs[0], amps[-1]) + np.outer(amps[0], bs[-1])
            src = scale * (src + src.T)
            dpsi = -1j * (h @ psi + psi @ h.T + u * psi + src)
            dpsi[hard] = 0.0
            out.append(dpsi.ravel())
        return np.concatenate(out)

    size = nd * m + (m * m if pair else 0)
    t0 = times.min() - 1.0 if t_start is None else t_start
    sol = solve_ivp(rhs, (t0, times.max()), np.zeros(size, dtype=complex), t_eval=times,
                    method="DOP853", rtol=1e-11, atol=1e-14, max_step=0.005)
    ys = sol.y.T
    single = ys[:, : nd * m].reshape(-1, nd, m)
    return (single, ys[:, nd * m:].reshape(-1, m, m)) if pair else single


def nystrom_reference(gamma=1.0):
    """Largest stimulated-emission eigenvalue and its normalized eigenfunction."""
    return 2.0 / 3.0, lambda x: 2 * np.sqrt(gamma) * np.exp(2 * gamma * x) * (x <= 0)
