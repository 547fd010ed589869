"""Leaf removal: sequential random-order peeling, deterministic 2-core extraction,
stopping sets, and core-onset detection along incremental edge streams.

The 2-core (every incident vertex covered >= 2 times) is the unique maximum
stopping set, hence independent of removal order; the sequential peel below is
the order the profile chain is defined with, while the round-based routines
exploit order invariance for speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensemble import EnsembleParams, Hypergraph

__all__ = [
    "PeelTrajectory",
    "peel",
    "core_of",
    "batch_core_mask",
    "is_stopping_set",
    "brute_force_max_stopping_set",
    "onset_edge_count",
    "batch_onset_edge_counts",
]


@dataclass(frozen=True)
class PeelTrajectory:
    """Profile path (z1, z2)(tau) for tau = 0..n, frozen after the stop time.

    stop_time is the first tau with z1 = 0; the surviving v-nodes are the
    2-core and S counts them (S = n - stop_time when the core is nonempty).
    """

    profiles: np.ndarray          # (n+1, 2) int
    stop_time: int
    core_vnodes: frozenset
    core_edge_count: int


def _initial_degree_state(H: Hypergraph):
    m = H.params.m
    deg = np.bincount(H.sockets.ravel(), minlength=m).astype(np.int64)
    z1 = int(np.count_nonzero(deg == 1))
    z2 = int(np.count_nonzero(deg >= 2))
    return deg, z1, z2


def peel(H: Hypergraph, rng: np.random.Generator) -> PeelTrajectory:
    """Sequential peel: repeatedly delete a uniformly random degree-1 vertex's edge
    together with all edges of its v-node, recording the profile after each step."""
    n, l, m = H.params.n, H.params.l, H.params.m
    sockets = H.sockets
    deg, z1, z2 = _initial_degree_state(H)

    # vertex -> incident v-nodes with multiplicity (lists never shrink; rely on alive[])
    incident = [[] for _ in range(m)]
    for i in range(n):
        for a in sockets[i]:
            incident[a].append(i)
    alive = np.ones(n, dtype=bool)

    # degree-1 pool with O(1) uniform pick/remove (swap with last)
    pool = [a for a in range(m) if deg[a] == 1]
    pos = {a: i for i, a in enumerate(pool)}

    def pool_remove(a):
        i = pos.pop(a)
        last = pool.pop()
        if last != a:
            pool[i] = last
            pos[last] = i

    def pool_add(a):
        pos[a] = len(pool)
        pool.append(a)

    profiles = np.empty((n + 1, 2), dtype=np.int64)
    profiles[0] = (z1, z2)
    tau = 0
    while pool:
        a = pool[rng.integers(len(pool))]
        # unique remaining edge at a: its v-node is the one still alive
        v = next(i for i in incident[a] if alive[i])
        alive[v] = False
        for b in sockets[v]:
            d = deg[b]
            deg[b] = d - 1
            if d == 1:
                z1 -= 1
                pool_remove(b)
            elif d == 2:
                z2 -= 1
                z1 += 1
                pool_add(b)
        tau += 1
        profiles[tau] = (z1, z2)
    profiles[tau:] = profiles[tau]
    core = frozenset(np.flatnonzero(alive).tolist())
    return PeelTrajectory(profiles, tau, core, len(core))


def core_of(H: Hypergraph):
    """Deterministic 2-core: (sorted core v-node array, residual vertex degrees)."""
    alive = batch_core_mask(H.sockets[None, :, :], H.params.m)[0]
    core = np.flatnonzero(alive)
    deg = np.bincount(H.sockets[alive].ravel(), minlength=H.params.m).astype(np.int64)
    return core, deg


def batch_core_mask(sockets: np.ndarray, m: int, init_alive: np.ndarray | None = None) -> np.ndarray:
    """Vectorized round-based peel over a batch: sockets (R, n, l) -> alive mask (R, n).

    Each round removes every v-node incident to a degree-1 vertex; the fixpoint is
    the 2-core of each replicate (optionally restricted to init_alive edge subsets).
    """
    R, n, l = sockets.shape
    alive = np.ones((R, n), dtype=bool) if init_alive is None else init_alive.copy()
    flat = sockets + (np.arange(R, dtype=sockets.dtype) * m)[:, None, None]
    while True:
        deg = np.bincount(flat[alive].ravel(), minlength=R * m)
        leaf = deg == 1
        kill = alive & leaf[flat].any(axis=2)
        if not kill.any():
            return alive
        alive &= ~kill


def is_stopping_set(H: Hypergraph, vset) -> bool:
    """True iff every vertex touched by the v-nodes in vset is touched >= 2 times."""
    idx = np.fromiter(vset, dtype=np.int64, count=len(vset)) if not isinstance(vset, np.ndarray) else vset
    if len(idx) == 0:
        return True
    deg = np.bincount(H.sockets[idx].ravel(), minlength=H.params.m)
    return not np.any(deg == 1)


def brute_force_max_stopping_set(H: Hypergraph) -> frozenset:
    """Exhaustive maximum stopping set; unique because stopping sets are union-closed.

    Exponential in n; guarded at n <= 20.
    """
    n, m = H.params.n, H.params.m
    if n > 20:
        raise ValueError(f"subset enumeration guarded at n <= 20, got n = {n}")
    # per-v-node vertex hit counts, then subset degree = mask-matrix product
    counts = np.zeros((n, m), dtype=np.int64)
    for i in range(n):
        counts[i] = np.bincount(H.sockets[i], minlength=m)
    best_mask, best_size = 0, -1
    n_masks = 1 << n
    bits = 1 << np.arange(n, dtype=np.int64)
    chunk = 1 << 14
    for start in range(0, n_masks, chunk):
        masks = np.arange(start, min(start + chunk, n_masks), dtype=np.int64)
        sel = (masks[:, None] & bits[None, :]) != 0           # (chunk, n)
        deg = sel @ counts                                    # (chunk, m)
        ok = ~np.any(deg == 1, axis=1)
        sizes = sel.sum(axis=1)
        sizes[~ok] = -1
        j = int(np.argmax(sizes))
        if sizes[j] > best_size:
            best_size = int(sizes[j])
            best_mask = int(masks[j])
    return frozenset(i for i in range(n) if best_mask >> i & 1)


def _prefix_has_core(sockets: np.ndarray, m: int, t: int) -> bool:
    if t == 0:
        return False
    sub = sockets[None, :t, :]
    return bool(batch_core_mask(sub, m)[0].any())


def onset_edge_count(edge_stream: np.ndarray, m: int) -> int:
    """Smallest prefix length of the edge stream whose hypergraph has a nonempty core.

    Binary search is valid because the core is monotone under edge addition
    (a stopping set stays a stopping set).  Returns n_max + 1 if no prefix works.
    """
    n_max = edge_stream.shape[0]
    if not _prefix_has_core(edge_stream, m, n_max):
        return n_max + 1
    lo, hi = 1, n_max  # invariant: core(hi) nonempty, core(lo-1) empty
    while lo < hi:
        mid = (lo + hi) // 2
        if _prefix_has_core(edge_stream, m, mid):
            hi = mid
        else:
            lo = mid + 1
    return lo


def batch_onset_edge_counts(sockets: np.ndarray, m: int) -> np.ndarray:
    """Lockstep binary-search onset for a batch of edge streams, sockets (R, n_max, l)."""
    R, n_max, l = sockets.shape
    full = batch_core_mask(sockets, m).any(axis=1)
    lo = np.ones(R, dtype=np.int64)
    hi = np.full(R, n_max, dtype=np.int64)
    # replicates with no core anywhere are parked at n_max + 1
    lo[~full] = n_max + 1
    hi[~full] = n_max + 1
    edge_idx = np.arange(n_max, dtype=np.int64)
    while True:
        active = lo < hi
        if not active.any():
            break
        mid = (lo + hi) // 2
        probe = np.where(active, mid, 0)
        init = edge_idx[None, :] < probe[:, None]
        has = batch_core_mask(sockets, m, init_alive=init).any(axis=1)
        shrink = active & has
        grow = active & ~has
        hi[shrink] = mid[shrink]
        lo[grow] = mid[grow] + 1
    return lo
