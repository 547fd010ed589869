"""Finite-size scaling predictions assembled from the critical constants: the
near-critical survival probability with its first-order size correction, the
standardized onset count, and the law of the rescaled core size at the window
center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .ode import CriticalConstants

__all__ = [
    "ScalingPrediction",
    "std_normal_cdf",
    "std_normal_pdf",
    "scaling_vars",
    "predict_core_prob",
    "standardize_onset",
    "onset_cdf",
    "core_size_scale",
    "standardize_core_size",
    "core_size_density",
    "core_size_cdf",
]

_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def std_normal_cdf(x):
    x = np.asarray(x, dtype=float)
    out = 0.5 * erfc(-x / _SQRT2)
    return float(out) if out.ndim == 0 else out


def std_normal_pdf(x):
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / _SQRT_2PI
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ScalingPrediction:
    n: int
    rho: float
    r: float
    r_tilde1: float
    r_tilde2: float
    p_gauss: float          # plain Gaussian limit
    p_corrected: float      # with the n^{-1/6} correction term


def scaling_vars(n: int, rho: float, cc: CriticalConstants):
    """(r, r_tilde1, r_tilde2): the critical-window coordinate, its Gaussian
    rescaling, and the shift-corrected rescaling (needs cc.delta)."""
    sn = math.sqrt(n)
    r = sn * (rho - cc.rho_c)
    rt1 = r / cc.alpha
    if cc.delta is None:
        raise ValueError("constants carry no delta; attach omega first")
    rt2 = sn * (rho - cc.rho_c - cc.delta * n ** (-2.0 / 3.0)) / cc.alpha
    return r, rt1, rt2


def predict_core_prob(n: int, rho: float, cc: CriticalConstants) -> ScalingPrediction:
    """Survival probability prediction at (n, rho), clamped to [0, 1]."""
    if cc.omega is None:
        raise ValueError("constants carry no omega; attach omega first")
    r, rt1, rt2 = scaling_vars(n, rho, cc)
    p0 = std_normal_cdf(-rt1)
    corr = cc.beta * cc.omega * std_normal_pdf(-rt1) * n ** (-1.0 / 6.0)
    p1 = min(max(p0 + corr, 0.0), 1.0)
    return ScalingPrediction(n, rho, r, rt1, rt2, p0, p1)


def standardize_onset(nc, m: int, cc: CriticalConstants):
    """Map onset counts to the standardized scale where they converge to N(0,1).

    Centering is m/rho_c, the raw scale sqrt(m) rho_c^{-3/2} alpha, plus the
    same first-order shift that corrects the survival probability.
    """
    if cc.omega is None:
        raise ValueError("constants carry no omega; attach omega first")
    nc = np.asarray(nc, dtype=float)
    scale = math.sqrt(m) * cc.rho_c ** (-1.5) * cc.alpha
    shift = cc.beta * cc.omega * cc.rho_c ** (1.0 / 6.0) * m ** (-1.0 / 6.0)
    out = (nc - m / cc.rho_c) / scale + shift
    return float(out) if out.ndim == 0 else out


def onset_cdf(nc, m: int, cc: CriticalConstants):
    return std_normal_cdf(standardize_onset(nc, m, cc))


def core_size_scale(n: int, cc: CriticalConstants) -> float:
    """Fluctuation scale of the core size at the window center: n^{3/4} times
    (4 Q11 / F~^2)^{1/4}."""
    return n ** 0.75 * (4.0 * cc.Q11c / cc.F_tilde ** 2) ** 0.25


def standardize_core_size(sizes, n: int, cc: CriticalConstants):
    sizes = np.asarray(sizes, dtype=float)
    out = (sizes - n * (1.0 - cc.theta_c)) / core_size_scale(n, cc)
    return float(out) if out.ndim == 0 else out


def core_size_density(z, r: float, cc: CriticalConstants):
    """Density of the rescaled core size, conditioned on a nonempty core, at
    window coordinate r; supported on z > 0."""
    z = np.asarray(z, dtype=float)
    rb = r / cc.alpha
    tail = 1.0 - std_normal_cdf(rb)
    out = np.where(z >= 0.0,
                   2.0 * np.maximum(z, 0.0)
                   * np.exp(-0.5 * (rb + z * z) ** 2) / (_SQRT_2PI * tail),
                   0.0)
    return float(out) if out.ndim == 0 else out


def core_size_cdf(z, r: float, cc: CriticalConstants):
    z = np.asarray(z, dtype=float)
    rb = r / cc.alpha
    lo = std_normal_cdf(rb)
    out = np.where(z >= 0.0,
                   (std_normal_cdf(rb + z * z) - lo) / (1.0 - lo),
                   0.0)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out
