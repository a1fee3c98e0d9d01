import numpy as np
import pytest

from subspace_sparsifier.errors import CapExceededError, DisconnectedGraphError
from subspace_sparsifier.graph import build_graph
from subspace_sparsifier.sketch import offdiag_column_sums
from subspace_sparsifier.testkit import (AuditTrace, DenseOracle, complete_graph, erdos_renyi,
                                         graph_sha, load_fixtures, medium_corpus, oracle_coupling_sums,
                                         oracle_identification_gaps, small_corpus, verify_identities,
                                         woodbury_gaps, write_fixtures)


def test_single_edge_oracle():
    O = DenseOracle(build_graph([(0, 1, 1.0)]))
    np.testing.assert_allclose(O.Lp, [[0.25, -0.25], [-0.25, 0.25]], atol=1e-15)


def test_oracle_guards():
    with pytest.raises(DisconnectedGraphError):
        DenseOracle(build_graph([(0, 1, 1.0), (2, 3, 1.0)]))
    with pytest.raises(CapExceededError):
        DenseOracle(complete_graph(5), cap=4)


def test_triangle_against_enumeration(frozen):
    G = complete_graph(3)
    np.testing.assert_allclose(DenseOracle(G).resistances(), frozen(G, "lev.0"), atol=1e-12)


def test_identity_suite(rng):
    G = erdos_renyi(30, rng)
    S = sorted(rng.choice(30, 5, replace=False).tolist())
    rep = verify_identities(G, S, tol=1e-8)
    assert rep.passed, rep.lines()
    names = set(rep.residuals)
    assert {"schur-pinv", "woodbury", "energy-sum", "gap-is-max-energy"} <= names


def test_identity_suite_with_basis(rng):
    G = erdos_renyi(20, rng)
    Y = rng.standard_normal((20, 3))
    Y -= Y.mean(axis=0)
    rep = verify_identities(G, [0, 1], basis=Y)
    assert rep.passed, rep.lines()
    assert rep.residuals["energy-sum"] < 1e-6


def test_woodbury_and_coupling_references(rng):
    G = erdos_renyi(15, rng)
    np.testing.assert_allclose(woodbury_gaps(G, [1, 4, 7]),
                               oracle_identification_gaps(G, [1, 4, 7]), atol=1e-10)
    np.testing.assert_allclose(oracle_coupling_sums(G), offdiag_column_sums(G), atol=1e-10)


def test_corpora():
    small = small_corpus()
    assert len(small) >= 200
    assert all(G.is_connected and G.n <= 7 for G in small)
    assert any(np.ptp(G.weights) > 0 for G in small)
    assert len({graph_sha(G) for G in small}) > 150
    med = medium_corpus(12, np.random.default_rng(0))
    assert len(med) == 12 and all(G.is_connected and G.n <= 40 for G in med)


def test_audit_trace_records_steps(rng):
    from subspace_sparsifier.graph import Contract, Delete
    from subspace_sparsifier.sparsify import make_coordinate_subspace, pad_basis, split

    G = erdos_renyi(12, rng)
    P = split(G)
    Y = pad_basis(make_coordinate_subspace(G, [0, 5]).Y, P.graph.n)
    trace = AuditTrace()
    e0, e1 = (int(e) for e in P.graph.edge_ids[:2])
    trace.on_batch(0, P.graph, Y, [Delete(e0), Contract(e1)], 2.0, 1)
    assert len(trace.steps) == 2
    assert trace.steps[0]["leverage"] == pytest.approx(DenseOracle(P.graph).leverage()[0])
    assert 0.0 <= trace.violation_rate() <= 1.0


def test_fixture_file_roundtrip(tmp_path):
    records = {("abc", "x.1"): 1 / 3, ("abc", "y"): 2.0}
    write_fixtures(tmp_path / "f.txt", records, header="demo")
    assert load_fixtures(tmp_path / "f.txt") == records
    assert load_fixtures(tmp_path / "missing.txt") == {}
