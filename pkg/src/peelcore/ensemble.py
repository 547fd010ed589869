"""Configuration-model hypergraph ensemble: sampling, degree profiles, exact counts.

The ensemble G_l(n, m) has n hyperedges ("v-nodes") of size l over m vertices
("c-nodes"); each v-node carries l ordered sockets, each socket holding a
c-node index, repeats allowed.  An ensemble element is the full socket table,
so |G_l(n, m)| = m^(n*l) and degrees are counted with multiplicity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "EnsembleParams",
    "Hypergraph",
    "DegreeProfile",
    "sample_uniform",
    "sample_balls_in_bins",
    "degree_profile",
    "sample_profiles",
    "log_ensemble_count",
    "log_coeff_rows",
    "initial_moments",
    "initial_moments_lr",
]


@dataclass(frozen=True)
class EnsembleParams:
    """Size parameters: edge size l >= 3, n edges, m vertices."""

    l: int
    n: int
    m: int

    def __post_init__(self):
        if self.l < 3:
            raise ValueError(f"edge size l must be >= 3, got {self.l}")
        if self.n < 1 or self.m < 1:
            raise ValueError(f"need n >= 1 and m >= 1, got n={self.n}, m={self.m}")

    @property
    def rho(self) -> float:
        return self.m / self.n

    @property
    def gamma(self) -> float:
        return self.l * self.n / self.m


@dataclass(frozen=True)
class Hypergraph:
    params: EnsembleParams
    sockets: np.ndarray  # shape (n, l), integer entries in [0, m)

    def __post_init__(self):
        s = np.asarray(self.sockets)
        if s.shape != (self.params.n, self.params.l):
            raise ValueError(f"sockets shape {s.shape} != {(self.params.n, self.params.l)}")
        if s.size and (s.min() < 0 or s.max() >= self.params.m):
            raise ValueError("socket entry out of range")


@dataclass(frozen=True)
class DegreeProfile:
    """(z0, z1, z2): vertices of degree 0, exactly 1, and >= 2."""

    z0: int
    z1: int
    z2: int

    @property
    def as_pair(self) -> tuple:
        return (self.z1, self.z2)


def sample_uniform(params: EnsembleParams, rng: np.random.Generator) -> Hypergraph:
    """Uniform ensemble element: every socket i.i.d. uniform over the m vertices."""
    sockets = rng.integers(0, params.m, size=(params.n, params.l), dtype=np.int64)
    return Hypergraph(params, sockets)


def sample_balls_in_bins(params: EnsembleParams, rng: np.random.Generator) -> Hypergraph:
    """Equivalent two-stage sampler: vertex socket counts first, then a uniform matching.

    Counts are multinomial(n*l; uniform over m) -- the law of i.i.d. Poisson degrees
    conditioned on total n*l, for any Poisson rate.  A uniform random bijection between
    edge sockets and vertex sockets then yields the same distribution as sample_uniform.
    """
    nl = params.n * params.l
    counts = rng.multinomial(nl, np.full(params.m, 1.0 / params.m))
    vertex_sockets = np.repeat(np.arange(params.m, dtype=np.int64), counts)
    matching = rng.permutation(nl)
    sockets = vertex_sockets[matching].reshape(params.n, params.l)
    return Hypergraph(params, sockets)


def degree_profile(H: Hypergraph) -> DegreeProfile:
    deg = np.bincount(H.sockets.ravel(), minlength=H.params.m)
    z1 = int(np.count_nonzero(deg == 1))
    z2 = int(np.count_nonzero(deg >= 2))
    return DegreeProfile(H.params.m - z1 - z2, z1, z2)


def sample_profiles(params: EnsembleParams, reps: int, rng: np.random.Generator,
                    chunk: int = 512) -> np.ndarray:
    """(reps, 2) array of initial (z1, z2) draws, without materializing graphs.

    The profile depends on the socket table only through the vertex degree counts,
    which are multinomial; sampling those directly is exact and much faster.
    """
    out = np.empty((reps, 2), dtype=np.int64)
    pvals = np.full(params.m, 1.0 / params.m)
    done = 0
    while done < reps:
        b = min(chunk, reps - done)
        counts = rng.multinomial(params.n * params.l, pvals, size=b)
        out[done:done + b, 0] = (counts == 1).sum(axis=1)
        out[done:done + b, 1] = (counts >= 2).sum(axis=1)
        done += b
    return out


# ---------------------------------------------------------------------------
# exact counting


@lru_cache(maxsize=None)
def _log_factorials(nmax: int) -> np.ndarray:
    lf = np.concatenate([[0.0], np.cumsum(np.log(np.arange(1, nmax + 1)))])
    lf.flags.writeable = False
    return lf


@lru_cache(maxsize=None)
def log_coeff_rows(t: int, s_max: int) -> np.ndarray:
    """Row of log coeff[(e^x - 1 - x)^t, x^s] for s = 0..s_max (-inf where zero).

    DP over the t factors; each factor contributes x^k/k! for k >= 2, so the
    convolution is over nonnegative terms and is exact in log space.
    """
    row = np.full(s_max + 1, -np.inf)
    if t == 0:
        row[0] = 0.0
        row.flags.writeable = False
        return row
    prev = log_coeff_rows(t - 1, s_max)
    lf = _log_factorials(s_max)
    for s in range(2 * t, s_max + 1):
        ks = np.arange(2, s - 2 * (t - 1) + 1)
        vals = prev[s - ks] - lf[ks]
        vmax = vals.max()
        if vmax > -np.inf:
            row[s] = vmax + math.log(np.exp(vals - vmax).sum())
    row.flags.writeable = False
    return row


def _log_multinomial(total: int, parts) -> float:
    lf = _log_factorials(total)
    out = lf[total]
    for p in parts:
        out -= lf[p]
    return float(out)


def log_ensemble_count(profile, tau: int, params: EnsembleParams) -> float:
    """log of the number of ensemble elements that reach profile z at peeling step tau.

    The count is C(m; z1, z2, z0) * C(n, tau) * ((n-tau)l)! *
    coeff[(e^x - 1 - x)^z2, x^((n-tau)l - z1)]; -inf signals an empty class
    (infeasible profile), not an error.
    """
    if isinstance(profile, DegreeProfile):
        z1, z2 = profile.z1, profile.z2
    else:
        z1, z2 = int(profile[0]), int(profile[1])
    n, m, l = params.n, params.m, params.l
    z0 = m - z1 - z2
    if z1 < 0 or z2 < 0 or z0 < 0 or not (0 <= tau <= n):
        return -np.inf
    s = (n - tau) * l - z1  # degree mass left for the z2 class
    if s < 0 or (z2 == 0 and s != 0) or (z2 > 0 and s < 2 * z2):
        return -np.inf
    lc = log_coeff_rows(z2, (n - tau) * l)[s] if s > 0 or z2 > 0 else 0.0
    if lc == -np.inf:
        return -np.inf
    lf = _log_factorials(max(n, (n - tau) * l, m))
    out = _log_multinomial(m, (z1, z2, z0))
    out += lf[n] - lf[tau] - lf[n - tau]          # C(n, tau)
    out += lf[(n - tau) * l]                       # socket orderings
    out += lc
    return float(out)


def initial_moments(params: EnsembleParams):
    """Mean fractions y(0) and profile covariance-rate Q(0) of (z1, z2)/n at tau = 0.

    Closed forms in gamma = l*n/m; Q(0) is the n->infinity covariance of
    (z1, z2)/sqrt(n) and is positive definite for gamma > 0.
    """
    return initial_moments_lr(params.l, params.rho)


def initial_moments_lr(l: int, rho: float):
    """initial_moments for a real-valued density rho (no integer sizes needed)."""
    g = l / rho
    eg = math.exp(-g)
    y0 = np.array([l * eg, rho * (1.0 - eg) - l * eg])
    e2 = math.exp(-2.0 * g)
    q11 = l * e2 * (math.expm1(g) + g - g * g)
    q12 = -l * e2 * (math.expm1(g) - g * g)
    q22 = (l / g) * e2 * (math.expm1(g) + g * (math.exp(g) - 2.0) - g * g * (1.0 + g))
    Q0 = np.array([[q11, q12], [q12, q22]])
    return y0, Q0
