"""Airy functions on the complex plane, the one-sided exit kernel K built from
them, the limiting minimum law of a parabola-plus-Brownian-motion path, and the
mean of that law (the constant feeding the onset shift).

Everything here is scalar complex arithmetic; the only vectorized surface is
the tabulated CDF used for goodness-of-fit against large samples.
"""

from __future__ import annotations

import cmath
import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator

__all__ = [
    "AiryPair",
    "airy_pair",
    "kernel_K",
    "MinLawTables",
    "min_law_tables",
    "cdf_Z",
    "omega_integral",
    "mc_parabolic_min",
]

_C1 = 3.0 ** (-2.0 / 3.0) / math.gamma(2.0 / 3.0)   # Ai(0)
_C2 = 3.0 ** (-1.0 / 3.0) / math.gamma(1.0 / 3.0)   # -Ai'(0)
_ROT = cmath.exp(-2j * cmath.pi / 3.0)
_TWO_THIRDS_PI = 2.0 * math.pi / 3.0
_FLOAT_SERIES_CUT = 4.0     # double precision holds the series cancellation here
_SERIES_CUT = 8.0           # beyond this the asymptotic expansions take over
_MAX_ABS = 50.0


@dataclass(frozen=True)
class AiryPair:
    ai: complex
    aip: complex
    bi: complex
    bip: complex


def _series_float(z: complex):
    """Maclaurin evaluation of (Ai, Ai', Bi, Bi'); |z| <= 4 keeps full accuracy."""
    z3 = z * z * z
    f = 1.0 + 0j
    t = 1.0 + 0j
    g = z
    s = z
    fp = 0.5 * z * z
    u = fp
    gp = 1.0 + 0j
    sp = 1.0 + 0j
    for k in range(1, 60):
        t *= z3 / ((3 * k) * (3 * k - 1))
        f += t
        s *= z3 / ((3 * k) * (3 * k + 1))
        g += s
        if k > 1:
            u *= z3 / ((3 * k - 1) * (3 * k - 3))
            fp += u
        sp *= z3 / ((3 * k) * (3 * k - 2))
        gp += sp
        if abs(t) + abs(s) < 1e-20 * (abs(f) + abs(g) + 1e-30):
            break
    ai = _C1 * f - _C2 * g
    aip = _C1 * fp - _C2 * gp
    r3 = math.sqrt(3.0)
    bi = r3 * (_C1 * f + _C2 * g)
    bip = r3 * (_C1 * fp + _C2 * gp)
    return ai, aip, bi, bip


def _series_mp(z: complex):
    """Same series in 40-digit arithmetic: rescues the ~23 digits of cancellation
    that build up toward |z| = 8."""
    import mpmath as mp

    with mp.workdps(40):
        zm = mp.mpc(z)
        z3 = zm ** 3
        f = mp.mpc(1)
        t = mp.mpc(1)
        g = zm
        s = zm
        fp = zm * zm / 2
        u = fp
        gp = mp.mpc(1)
        sp = mp.mpc(1)
        for k in range(1, 200):
            t *= z3 / ((3 * k) * (3 * k - 1))
            f += t
            s *= z3 / ((3 * k) * (3 * k + 1))
            g += s
            if k > 1:
                u *= z3 / ((3 * k - 1) * (3 * k - 3))
                fp += u
            sp *= z3 / ((3 * k) * (3 * k - 2))
            gp += sp
            if abs(t) + abs(s) < mp.mpf(10) ** (-45) * (abs(f) + abs(g)):
                break
        c1 = mp.mpf(3) ** (mp.mpf(-2) / 3) / mp.gamma(mp.mpf(2) / 3)
        c2 = mp.mpf(3) ** (mp.mpf(-1) / 3) / mp.gamma(mp.mpf(1) / 3)
        ai = c1 * f - c2 * g
        aip = c1 * fp - c2 * gp
        r3 = mp.sqrt(3)
        bi = r3 * (c1 * f + c2 * g)
        bip = r3 * (c1 * fp + c2 * gp)
        return complex(ai), complex(aip), complex(bi), complex(bip)


def _ai_asym_direct(z: complex):
    """Poincare expansion of (Ai, Ai') for |arg z| <= 2pi/3, truncated at the
    smallest term."""
    xi = (2.0 / 3.0) * z * cmath.sqrt(z)
    inv = 1.0 / xi
    s = 1.0 + 0j
    sp = 1.0 + 0j
    u = 1.0
    term_prev = 1.0
    sign = 1.0
    p = 1.0 + 0j
    for k in range(1, 40):
        u *= (6 * k - 5) * (6 * k - 3) * (6 * k - 1) / (216.0 * k * (2 * k - 1))
        v = u * (6 * k + 1) / (1.0 - 6 * k)
        sign = -sign
        p *= inv
        mag = u * abs(p)
        if mag > term_prev:
            break
        term_prev = mag
        s += sign * u * p
        sp += sign * v * p
        if mag < 1e-18:
            break
    zq = z ** 0.25
    pref = cmath.exp(-xi) / (2.0 * math.sqrt(math.pi))
    ai = pref * s / zq
    aip = -pref * zq * sp
    return ai, aip


def _ai_asym(z: complex):
    """(Ai, Ai') for any arg via the three-ray connection identity."""
    if abs(cmath.phase(z)) <= _TWO_THIRDS_PI + 1e-12:
        return _ai_asym_direct(z)
    w1 = z * _ROT
    w2 = z / _ROT
    a1, ap1 = _ai_asym_direct(w1)
    a2, ap2 = _ai_asym_direct(w2)
    e = cmath.exp(2j * cmath.pi / 3.0)
    ai = -a1 / e - e * a2
    aip = -e * ap1 - ap2 / e
    return ai, aip


def airy_pair(zeta) -> AiryPair:
    """Ai, Ai', Bi, Bi' at a complex point, |zeta| <= 50.

    Series below |zeta| = 8 (bigfloat backed above 4), asymptotics with sector
    rotation beyond; the lower half plane goes through conjugation symmetry.
    """
    z = complex(zeta)
    r = abs(z)
    if r > _MAX_ABS:
        raise ValueError(f"|zeta| = {r} out of the supported disk (<= {_MAX_ABS})")
    if z.imag < 0.0:
        p = airy_pair(z.conjugate())
        return AiryPair(p.ai.conjugate(), p.aip.conjugate(),
                        p.bi.conjugate(), p.bip.conjugate())
    if r <= _FLOAT_SERIES_CUT:
        ai, aip, bi, bip = _series_float(z)
    elif r <= _SERIES_CUT:
        ai, aip, bi, bip = _series_mp(z)
    else:
        ai, aip = _ai_asym(z)
        w = z * _ROT
        aw, apw = _ai_asym(w)
        bi = 1j * ai + 2.0 * cmath.exp(-1j * cmath.pi / 6.0) * aw
        bip = 1j * aip + 2.0 * cmath.exp(-1j * 5.0 * cmath.pi / 6.0) * apw
    return AiryPair(ai, aip, bi, bip)


# --- the one-sided exit kernel ---


def _k_integrand(y: float, w: float) -> complex:
    """Integrand of K, written so the two exponentially growing pieces cancel
    analytically instead of numerically."""
    a_shift = airy_pair(_ROT * (w + 1j * y)).ai
    a_base = airy_pair(_ROT * (1j * y)).ai
    num = airy_pair(w + 1j * y).ai
    den = airy_pair(1j * y).ai
    return 2.0 * cmath.exp(-1j * cmath.pi / 6.0) * (a_shift - a_base * num / den)


def _y_max(w: float) -> float:
    return max(16.0, math.sqrt(3.0) * w + 42.0 / math.sqrt(max(w, 1.0)))


def kernel_K(z: float) -> float:
    """P(one-sided parabola-plus-Brownian path stays above -z); K(0) = 0,
    K(inf) = 1.  Double precision reliable for z <= 6."""
    if z < 0.0:
        raise ValueError("kernel K defined for z >= 0")
    if z == 0.0:
        return 0.0
    w = 2.0 ** (1.0 / 3.0) * z
    for ys in (0.7, 2.3):
        a = _k_integrand(ys, w)
        b = _k_integrand(-ys, w)
        if abs(b - a.conjugate()) > 1e-9 * max(abs(a), 1e-12):
            raise RuntimeError("integrand symmetry check failed; contour unusable")
    ymax = _y_max(w)
    val, err = quad(lambda y: _k_integrand(y, w).real, 0.0, ymax, limit=200)
    if err > 1e-6:
        raise RuntimeError(f"K quadrature error estimate {err} too large at z = {z}")
    return val


# --- tabulated law of the two-sided minimum ---


@dataclass(frozen=True)
class MinLawTables:
    us: np.ndarray
    Ks: np.ndarray
    tail_a: float        # 1 - K(u)^2 ~ exp(tail_a + tail_b u^{3/2}) past the grid
    tail_b: float

    def K_interp(self, u):
        return np.clip(self._pchip(np.asarray(u, dtype=float)), 0.0, 1.0)

    @property
    def _pchip(self):
        return PchipInterpolator(self.us, self.Ks)

    def cdf(self, z):
        """P(Z <= z) for the two-sided minimum; vectorized."""
        z = np.asarray(z, dtype=float)
        u = np.minimum(-z, self.us[-1])
        out = np.where(z >= 0.0, 1.0, 1.0 - self.K_interp(np.maximum(u, 0.0)) ** 2)
        deep = -z > self.us[-1]
        if deep.any():
            t = np.exp(self.tail_a + self.tail_b * (-z[deep]) ** 1.5)
            out = out.copy()
            out[deep] = t
        return np.clip(out, 0.0, 1.0)


@functools.lru_cache(maxsize=4)
def min_law_tables(n_grid: int = 121, u_max: float = 6.0) -> MinLawTables:
    us = np.linspace(0.0, u_max, n_grid)
    Ks = np.array([kernel_K(u) for u in us])
    # log-linear fit of 1 - K^2 in u^{3/2} over the last stretch of the grid
    sel = us >= u_max - 1.5
    xs = us[sel] ** 1.5
    ys = np.log(np.maximum(1.0 - Ks[sel] ** 2, 1e-300))
    b, a = np.polyfit(xs, ys, 1)
    return MinLawTables(us, Ks, float(a), float(b))


def cdf_Z(z) -> np.ndarray:
    """CDF of the two-sided minimum law, from the cached kernel table."""
    return min_law_tables().cdf(z)


def omega_integral() -> float:
    """Mean depth of the two-sided minimum: integral of 1 - K^2, grid part by
    monotone interpolation, the (~3e-7) tail from the fitted decay."""
    tab = min_law_tables()
    pch = PchipInterpolator(tab.us, 1.0 - tab.Ks ** 2)
    head = pch.integrate(tab.us[0], tab.us[-1])
    tail, _ = quad(lambda u: math.exp(tab.tail_a + tab.tail_b * u ** 1.5),
                   tab.us[-1], 40.0)
    return float(head + tail)


# --- Monte Carlo of the same minimum, for cross-validation ---


def mc_parabolic_min(reps: int, rng: np.random.Generator,
                     horizon: float = 5.0, dt: float = 1e-3,
                     chunk: int = 250) -> np.ndarray:
    """Sample min over [-T, T] of t^2/2 + W(t) on a grid, with the conditional
    within-cell Brownian-bridge minimum so the discretization bias is tiny."""
    n_steps = int(round(horizon / dt))
    ts = np.arange(1, n_steps + 1) * dt
    drift = 0.5 * ts * ts
    sdt = math.sqrt(dt)
    out = np.empty(reps)
    done = 0
    while done < reps:
        b = min(chunk, reps - done)
        # two independent sides per replicate
        dw = rng.standard_normal((2 * b, n_steps)) * sdt
        w = np.cumsum(dw, axis=1)
        x = w + drift
        left = np.concatenate([np.zeros((2 * b, 1)), x[:, :-1]], axis=1)
        lnu = np.log(rng.random((2 * b, n_steps)))
        cell_min = 0.5 * (left + x - np.sqrt((left - x) ** 2 - 2.0 * dt * lnu))
        side_min = cell_min.min(axis=1)
        z = np.minimum(side_min[:b], side_min[b:])
        out[done:done + b] = np.minimum(z, 0.0)
        done += b
    return out
