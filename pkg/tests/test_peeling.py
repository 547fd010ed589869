"""Peeling, 2-core extraction, stopping sets, and onset detection."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from peelcore.ensemble import EnsembleParams, Hypergraph, sample_uniform
from peelcore.peeling import (
    batch_core_mask,
    batch_onset_edge_counts,
    brute_force_max_stopping_set,
    core_of,
    is_stopping_set,
    onset_edge_count,
    peel,
)


def _graph(l, m, rows):
    sockets = np.array(rows, dtype=np.int64)
    return Hypergraph(EnsembleParams(l, sockets.shape[0], m), sockets)


def test_fully_peelable_graph():
    # a path-like graph: vertex 3 has degree 1, peeling cascades to empty
    H = _graph(3, 4, [[0, 1, 2], [1, 2, 3]])
    core, deg = core_of(H)
    assert core.size == 0
    assert not deg.any()
    traj = peel(H, np.random.default_rng(0))
    assert traj.stop_time == 2
    assert traj.core_edge_count == 0
    assert traj.core_vnodes == frozenset()


def test_graph_that_is_all_core():
    # two identical edges: every touched vertex has degree 2
    H = _graph(3, 3, [[0, 1, 2], [0, 1, 2]])
    core, deg = core_of(H)
    assert list(core) == [0, 1]
    assert deg.tolist() == [2, 2, 2]
    traj = peel(H, np.random.default_rng(0))
    assert traj.stop_time == 0
    assert traj.core_vnodes == frozenset({0, 1})


def test_repeated_vertex_within_edge_counts_multiplicity():
    # one edge hitting vertex 0 twice and vertex 1 once: vertex 1 is a leaf,
    # so the edge peels even though vertex 0 has degree 2
    H = _graph(3, 2, [[0, 0, 1]])
    core, _ = core_of(H)
    assert core.size == 0
    # all three sockets on one vertex: degree 3, no leaf, edge is core
    H2 = _graph(3, 1, [[0, 0, 0]])
    core2, deg2 = core_of(H2)
    assert list(core2) == [0] and deg2.tolist() == [3]


def test_peel_profile_bookkeeping():
    H = _graph(3, 5, [[0, 1, 2], [2, 3, 4], [0, 1, 4]])
    traj = peel(H, np.random.default_rng(1))
    n = 3
    assert traj.profiles.shape == (n + 1, 2)
    # initial profile: all five vertices hit, deg = (2,2,2,1,2) -> z1=1, z2=4
    assert traj.profiles[0].tolist() == [1, 4]
    # stop time is the first index with z1 = 0
    z1 = traj.profiles[:, 0]
    first_zero = int(np.argmax(z1 == 0)) if (z1 == 0).any() else n
    assert traj.stop_time == first_zero
    # frozen after the stop
    for t in range(traj.stop_time, n + 1):
        assert traj.profiles[t].tolist() == traj.profiles[traj.stop_time].tolist()
    assert np.all(traj.profiles >= 0)


def test_peel_core_independent_of_removal_order():
    params = EnsembleParams(3, 40, 44)
    rng = np.random.default_rng(5)
    for _ in range(25):
        H = sample_uniform(params, rng)
        cores = {peel(H, np.random.default_rng(k)).core_vnodes for k in range(4)}
        assert len(cores) == 1
        core, _ = core_of(H)
        assert cores.pop() == frozenset(core.tolist())


def test_core_against_brute_force():
    rng = np.random.default_rng(9)
    for _ in range(120):
        n = int(rng.integers(1, 11))
        m = int(rng.integers(2, 9))
        H = sample_uniform(EnsembleParams(3, n, m), rng)
        assert frozenset(core_of(H)[0].tolist()) == brute_force_max_stopping_set(H)


def test_core_is_maximum_stopping_set_property():
    # the core is a stopping set and contains any other stopping set
    rng = np.random.default_rng(13)
    for _ in range(40):
        H = sample_uniform(EnsembleParams(3, 8, 7), rng)
        core = frozenset(core_of(H)[0].tolist())
        assert is_stopping_set(H, core)
        best = brute_force_max_stopping_set(H)
        assert core == best


def test_is_stopping_set_examples():
    H = _graph(3, 3, [[0, 1, 2], [0, 1, 2], [0, 1, 2]])
    assert is_stopping_set(H, frozenset())
    assert is_stopping_set(H, {0, 1})
    assert not is_stopping_set(H, {0})
    assert is_stopping_set(H, np.array([0, 1, 2]))


def test_batch_core_mask_matches_single():
    params = EnsembleParams(3, 30, 33)
    rng = np.random.default_rng(21)
    tables = np.stack([sample_uniform(params, rng).sockets for _ in range(64)])
    masks = batch_core_mask(tables, params.m)
    for i in range(64):
        H = Hypergraph(params, tables[i])
        assert np.array_equal(np.flatnonzero(masks[i]), core_of(H)[0])


def test_batch_core_mask_respects_init_alive():
    H = _graph(3, 3, [[0, 1, 2], [0, 1, 2], [0, 1, 2]])
    tables = H.sockets[None]
    full = batch_core_mask(tables, 3)
    assert full.sum() == 3
    # restricting to a single edge breaks the cover, core empties
    init = np.array([[True, False, False]])
    assert batch_core_mask(tables, 3, init_alive=init).sum() == 0
    # two edges still cover each vertex twice
    init2 = np.array([[True, True, False]])
    assert batch_core_mask(tables, 3, init_alive=init2).sum() == 2


def test_onset_binary_search_matches_linear_scan():
    m = 40
    rng = np.random.default_rng(3)
    stream = rng.integers(0, m, size=(60, 3))
    def linear(stream, m):
        for t in range(1, stream.shape[0] + 1):
            if batch_core_mask(stream[None, :t, :], m)[0].any():
                return t
        return stream.shape[0] + 1
    assert onset_edge_count(stream, m) == linear(stream, m)
    # batch version agrees replicate by replicate
    streams = rng.integers(0, m, size=(20, 60, 3))
    counts = batch_onset_edge_counts(streams, m)
    for i in range(20):
        assert counts[i] == onset_edge_count(streams[i], m)
        assert counts[i] == linear(streams[i], m)


def test_onset_no_core_sentinel():
    # pairwise-disjoint edges never build a core
    stream = np.arange(12, dtype=np.int64).reshape(4, 3)
    assert onset_edge_count(stream, 12) == 5
    counts = batch_onset_edge_counts(stream[None], 12)
    assert counts.tolist() == [5]


def test_onset_immediate_core():
    stream = np.array([[0, 0, 0], [1, 2, 3]], dtype=np.int64)
    assert onset_edge_count(stream, 4) == 1


@given(st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_core_fixpoint_property(seed):
    # peeling the core changes nothing, and the complement of the core
    # peels to empty when taken alone
    rng = np.random.default_rng(seed)
    H = sample_uniform(EnsembleParams(3, 15, 14), rng)
    core, deg = core_of(H)
    mask = np.zeros(15, dtype=bool)
    mask[core] = True
    again = batch_core_mask(H.sockets[None], 14, init_alive=mask[None])[0]
    assert np.array_equal(np.flatnonzero(again), core)
    if core.size:
        assert deg[np.unique(H.sockets[core].ravel())].min() >= 2
