import numpy as np
import pytest

from subspace_sparsifier.errors import CapExceededError, DisconnectedGraphError
from subspace_sparsifier.graph import Contract, Delete, build_graph
from subspace_sparsifier.spanning_tree import (edge_decision, enumerate_spanning_trees,
                                               sample_ust, tree_inclusion_fractions)
from subspace_sparsifier.testkit import (DenseOracle, complete_graph, cycle_graph, erdos_renyi,
                                         small_corpus)


def _frequencies(G, samples, seed):
    rng = np.random.default_rng(seed)
    counts = np.zeros(G.m)
    for _ in range(samples):
        counts += sample_ust(G, rng).mask
    return counts / samples


def test_sample_is_spanning_tree(rng):
    G = erdos_renyi(40, rng)
    T = sample_ust(G, rng)
    assert len(T) == G.n - 1
    H = G.apply_ops([Contract(int(e)) for e in T.edge_ids])
    assert H.n == 1


def test_triangle_frequencies():
    freq = _frequencies(complete_graph(3), 30000, 1)
    np.testing.assert_allclose(freq, 2 / 3, atol=0.02)


def test_weighted_parallel_pair(frozen):
    G = build_graph([(0, 1, 1.0), (0, 1, 3.0)])
    freq = _frequencies(G, 30000, 2)
    assert freq[1] == pytest.approx(frozen(G, "tree_frac.1"), abs=0.02)
    assert frozen(G, "tree_frac.1") == pytest.approx(0.75)


def test_frequencies_match_leverage_on_weighted_graph():
    rng = np.random.default_rng(7)
    G = erdos_renyi(7, rng)
    freq = _frequencies(G, 20000, 3)
    np.testing.assert_allclose(freq, DenseOracle(G).leverage(), atol=0.025)


def test_seed_determinism(rng):
    G = erdos_renyi(30, rng)
    a = sample_ust(G, 99)
    b = sample_ust(G, 99)
    np.testing.assert_array_equal(a.mask, b.mask)


def test_edge_decision():
    G = cycle_graph(4)
    T = sample_ust(G, 0)
    ops = [edge_decision(G, e, T) for e in G.edge_ids]
    assert sum(isinstance(o, Contract) for o in ops) == 3
    assert sum(isinstance(o, Delete) for o in ops) == 1


def test_disconnected_rejected():
    with pytest.raises(DisconnectedGraphError):
        sample_ust(build_graph([(0, 1, 1.0), (2, 3, 1.0)]), 0)


def test_enumeration_counts():
    assert len(enumerate_spanning_trees(complete_graph(4))) == 16  # Cayley
    assert len(enumerate_spanning_trees(cycle_graph(6))) == 6
    with pytest.raises(CapExceededError):
        enumerate_spanning_trees(complete_graph(8))


def test_kirchhoff_on_corpus_sample(frozen):
    for G in small_corpus()[::10]:
        frac = tree_inclusion_fractions(G)
        np.testing.assert_allclose(frac, DenseOracle(G).leverage(), atol=1e-9)
        pinned = [frozen(G, f"tree_frac.{e}") for e in G.edge_ids]
        np.testing.assert_allclose(frac, pinned, atol=1e-12)
