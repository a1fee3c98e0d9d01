"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (or ``python3
tests/test_acceptance.py``).  Lines tagged ``experiment`` report measured
quantities that are informative but not part of a criterion.
"""
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from subspace_sparsifier.graph import write_graph
from subspace_sparsifier.resapx import res_apx
from subspace_sparsifier.resistance import diff_apx, identification_gaps_exact
from subspace_sparsifier.sketch import column_apx, offdiag_column_sums
from subspace_sparsifier.sparsify import (OracleSpec, audit_distortion, make_coordinate_subspace,
                                          pad_basis, slow_oracle, split, subspace_sparsifier,
                                          termination_threshold, unsplit)
from subspace_sparsifier.spanning_tree import tree_inclusion_fractions
from subspace_sparsifier.testkit import (DenseOracle, erdos_renyi, medium_corpus, oracle_energies,
                                         random_graph_nm, small_corpus, verify_identities)

pytestmark = pytest.mark.slow


@pytest.fixture
def report(capsys):
    def emit(number, passed, detail, tag="criterion"):
        with capsys.disabled():
            status = "PASS" if passed else "FAIL"
            if tag != "criterion":
                status = "INFO"
            print(f"\n[{tag} {number}] {status}: {detail}", flush=True)
    return emit


def _terminals(n, size, rng):
    return sorted(rng.choice(n, size=size, replace=False).tolist())


def test_c01_kirchhoff(report):
    t = time.time()
    corpus = small_corpus()
    worst = 0.0
    for G in corpus:
        worst = max(worst, np.abs(tree_inclusion_fractions(G) - DenseOracle(G).leverage()).max())
    weighted = sum(np.ptp(G.weights) > 0 for G in corpus)
    elapsed = time.time() - t
    ok = len(corpus) >= 200 and weighted > 0 and worst <= 1e-9 and elapsed < 60
    report(1, ok, f"{len(corpus)} graphs ({weighted} weighted), max |lev - tree fraction| = "
                  f"{worst:.2e}, {elapsed:.1f}s")
    assert ok


def test_c02_identities(report):
    t = time.time()
    rng = np.random.default_rng(2)
    corpus = medium_corpus(100, rng, n_range=(5, 40))
    worst, failed = 0.0, 0
    for G in corpus:
        S = _terminals(G.n, int(rng.integers(2, min(G.n, 8) + 1)), rng)
        Y = rng.standard_normal((G.n, 3))
        Y -= Y.mean(axis=0)
        rep = verify_identities(G, S, basis=Y, tol=1e-6, seed=int(rng.integers(1 << 30)))
        worst = max(worst, max(rep.residuals.values()))
        failed += not rep.passed
    elapsed = time.time() - t
    ok = failed == 0 and elapsed < 120
    report(2, ok, f"100 graphs n <= 40, {failed} failing, worst relative residual {worst:.2e}, "
                  f"{elapsed:.1f}s")
    assert ok


def test_c03_split_unsplit(report):
    t = time.time()
    rng = np.random.default_rng(3)
    lo, hi, worst_q, bad = 1.0, 0.0, 0.0, 0
    for i in range(50):
        n = int(rng.integers(10, 201))
        H = erdos_renyi(n, rng, weighted=bool(i % 2))
        P = split(H)
        OI = DenseOracle(P.graph, cap=P.graph.n)  # split graphs exceed the default cap
        lev = OI.leverage()
        lo, hi = min(lo, lev.min()), max(hi, lev.max())
        back = unsplit(P.graph, P)
        bad += not back.same_as(H, rtol=1e-12)
        OH, OB = DenseOracle(H), DenseOracle(back)
        for _ in range(10):
            x = rng.standard_normal(n)
            x -= x.mean()
            ref = OH.quadform(x)
            xi = pad_basis(x[:, None], P.graph.n)[:, 0]
            worst_q = max(worst_q, abs(OI.quadform(xi) - ref) / ref, abs(OB.quadform(x) - ref) / ref)
    elapsed = time.time() - t
    ok = lo >= 3 / 16 and hi <= 13 / 16 and worst_q <= 1e-8 and bad == 0 and elapsed < 120
    report(3, ok, f"50 graphs n <= 200, split leverages in [{lo:.4f}, {hi:.4f}], roundtrip "
                  f"quadform rel err {worst_q:.1e}, {bad} unsplit mismatches, {elapsed:.1f}s")
    assert ok


def test_c04_slow_oracle(report):
    t = time.time()
    rng = np.random.default_rng(4)
    size_fail, energy_fail, worst_ratio = 0, 0, 0.0
    for i in range(50):
        n = int(rng.integers(10, 80))
        G = erdos_renyi(n, rng, weighted=bool(i % 2))
        B = make_coordinate_subspace(G, _terminals(n, int(rng.integers(2, 8)), rng))
        P = split(G)
        I = P.graph
        Y = pad_basis(B.project(G), I.n)
        res = slow_oracle(I, Y)
        dense = oracle_energies(I, Y, cap=I.n)
        limit = 2 * B.d / I.m
        picked = dense[np.isin(I.edge_ids, res.Z)]
        size_fail += len(res.Z) < I.m / 2
        energy_fail += np.any(picked > limit)
        worst_ratio = max(worst_ratio, picked.max() / limit)
    elapsed = time.time() - t
    ok = size_fail == 0 and energy_fail == 0 and elapsed < 120
    report(4, ok, f"50 instances, |Z| < |E(I)|/2 in {size_fail}, energy over 2d/|E(I)| in "
                  f"{energy_fail}, max energy / limit {worst_ratio:.4f}, {elapsed:.1f}s")
    assert ok


def _quality_runs(cterm, seeds):
    out = []
    for seed in seeds:
        rng = np.random.default_rng(500 + seed)
        G = random_graph_nm(100, 300, rng, weighted=False)
        S = _terminals(100, 6, rng)
        R = subspace_sparsifier(G, S, 0.5, OracleSpec("slow"), seed, cterm=cterm)
        bound = min(G.m, termination_threshold(R.basis.d, 0.5, 2.0, cterm))
        out.append((R.graph.m, bound, audit_distortion(G, R.graph, R.basis), R.iterations))
    return out


def test_c05_sparsifier_quality(report):
    t = time.time()
    runs = _quality_runs(10.0, range(20))
    size_ok = all(m <= bound for m, bound, _, _ in runs)
    good = sum(dist <= 0.5 for _, _, dist, _ in runs)
    elapsed = time.time() - t
    ok = size_ok and good >= 18 and elapsed < 300
    iters = sorted({it for *_, it in runs})
    threshold = termination_threshold(5, 0.5, 2.0, 10.0)
    report(5, ok, f"C_term=10: threshold {threshold:.0f} (m = 300), edge bound held {size_ok}, distortion "
                  f"<= 0.5 on {good}/20 seeds, iterations {iters}, {elapsed:.1f}s")
    # with the stated constant the threshold exceeds m, so also measure a run that loops
    t = time.time()
    exp = _quality_runs(1.0, range(20))
    good1 = sum(dist <= 0.5 for _, _, dist, _ in exp)
    worst = max(dist for _, _, dist, _ in exp)
    report(5, None, f"C_term=1: mean output edges {np.mean([m for m, *_ in exp]):.0f}, "
                    f"distortion <= 0.5 on {good1}/20 seeds, worst {worst:.3f}, "
                    f"{time.time() - t:.1f}s", tag="experiment")
    assert ok


def test_c06_diffapx_bracket(report):
    t = time.time()
    good, worst = 0, 0.0
    delta0, delta1 = 0.25, 1e-5
    for seed in range(20):
        rng = np.random.default_rng(600 + seed)
        n = int(rng.integers(20, 201))
        G = erdos_renyi(n, rng, weighted=bool(seed % 2))
        S = _terminals(n, int(rng.integers(2, 11)), rng)
        nu = diff_apx(G, S, delta0, delta1, seed).values
        gap = identification_gaps_exact(G, S) * G.weights
        lower = (1 - delta0) * nu - delta1
        upper = (1 + delta0) * nu + delta1
        good += bool(np.all((gap >= lower) & (gap <= upper)))
        worst = max(worst, np.max(np.abs(gap - nu) / np.maximum(nu, delta1)))
    elapsed = time.time() - t
    ok = good >= 18 and elapsed < 300
    report(6, ok, f"bracket held for every edge on {good}/20 seeds, max |gap - nu| / nu "
                  f"{worst:.3f}, {elapsed:.1f}s")
    assert ok


def test_c07_column_bracket(report):
    t = time.time()
    good, lo, hi = 0, np.inf, 0.0
    for seed in range(20):
        rng = np.random.default_rng(700 + seed)
        n = int(rng.integers(30, 41))
        G = erdos_renyi(n, rng, weighted=bool(seed % 2))
        exact = offdiag_column_sums(G)
        a = column_apx(G, G.edge_ids, seed, rounds=math.ceil(100 * math.log(n))).values
        good += bool(np.all((a / 2 <= exact) & (exact <= 1.5 * a)))
        lo, hi = min(lo, (exact / a).min()), max(hi, (exact / a).max())
    elapsed = time.time() - t
    ok = good >= 18 and elapsed < 300
    report(7, ok, f"a/2 <= exact <= 3a/2 for all edges on {good}/20 seeds, exact/a in "
                  f"[{lo:.3f}, {hi:.3f}], {elapsed:.1f}s")
    assert ok


def test_c08_resapx(report):
    t = time.time()
    good, worst, worst_id = 0, 0.0, 0.0
    for seed in range(10):
        rng = np.random.default_rng(800 + seed)
        G = random_graph_nm(500, 1500, rng, weighted=bool(seed % 2))
        pairs = [tuple(p) for p in (rng.choice(500, 2, replace=False).tolist() for _ in range(100))]
        Lp = DenseOracle(G).Lp
        exact = np.array([Lp[u, u] + Lp[v, v] - 2 * Lp[u, v] for u, v in pairs])
        est = res_apx(G, pairs, 0.2, seed)
        rel = np.abs(np.array([est[p] for p in pairs]) / exact - 1)
        good += bool(rel.max() <= 0.2)
        worst = max(worst, rel.max())
        if seed < 3:
            ident = res_apx(G, pairs, 0.2, seed, mode="identity")
            worst_id = max(worst_id, np.max(np.abs(np.array([ident[p] for p in pairs]) / exact - 1)))
    elapsed = time.time() - t
    ok = good >= 9 and worst_id <= 1e-8 and elapsed < 600
    report(8, ok, f"all 100 estimates within 1 +- 0.2 on {good}/10 seeds (worst rel err "
                  f"{worst:.2e}), identity mode rel err {worst_id:.1e}, {elapsed:.1f}s")
    assert ok


def _audited(spec, seed, n):
    rng = np.random.default_rng(900 + seed)
    G = random_graph_nm(n, 3 * n, rng, weighted=bool(seed % 2))
    R = subspace_sparsifier(G, _terminals(n, 4, rng), 0.5, spec, seed, cterm=1.0, audit=True)
    return R.audit


def test_c09_steadiness(report):
    t = time.time()
    rates, steps = [], 0
    for seed in range(10):
        trace = _audited(OracleSpec("slow"), seed, 40 + 5 * seed)
        rates.append(trace.violation_rate())
        steps += len(trace.steps)
    elapsed = time.time() - t
    ok = max(rates) <= 0.05 and steps > 0
    report(9, ok, f"SlowOracle, 10 runs n in [40, 85], {steps} conditioning steps, worst "
                  f"per-run violation rate {max(rates):.3f}, {elapsed:.1f}s")
    t = time.time()
    fast = OracleSpec("fast", gamma=0.5, beta=0.3, column_rounds=12, sketch_delta=1e-2)
    frates = []
    for seed in range(3):
        trace = _audited(fast, seed, 50)
        lev_bad = sum(not (1 / 8 <= s["leverage"] <= 7 / 8) for s in trace.steps)
        frates.append((trace.violation_rate(), lev_bad / max(len(trace.steps), 1)))
    report(9, None, "FastOracle (gamma=0.5, beta=0.3) audited at rho=2: violation rates "
                    + ", ".join(f"{r:.3f} (leverage {lv:.3f})" for r, lv in frates)
                    + f", {time.time() - t:.1f}s", tag="experiment")
    assert ok


def _cli(args, cwd):
    cmd = [sys.executable, "-m", "subspace_sparsifier.cli", *args]
    return subprocess.run(cmd, cwd=cwd, capture_output=True, text=True)


def test_c10_determinism(report, tmp_path):
    t = time.time()
    rng = np.random.default_rng(10)
    write_graph(random_graph_nm(40, 120, rng), tmp_path / "g.txt")
    (tmp_path / "S.txt").write_text("0 7 19 33\n")
    (tmp_path / "pairs.txt").write_text("0 5\n3 17\n21 38\n9 9\n")
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    for i in range(3):
        write_graph(erdos_renyi(15 + 5 * i, rng), corpus / f"g{i}.txt")
    fast = ["--oracle", "fast", "--gamma", "0.5", "--column-rounds", "8", "--sketch-delta", "0.01"]
    commands = {
        "sparsify-slow": (["sparsify", "g.txt", "S.txt", "-o", "OUT/s", "--cterm", "1", "--audit",
                           "--seed", "5"], ["s.graph", "s.cert", "s.trace.jsonl"]),
        "sparsify-fast": (["sparsify", "g.txt", "S.txt", "-o", "OUT/f", "--cterm", "1",
                           "--seed", "5", *fast], ["f.graph", "f.cert", "f.trace.jsonl"]),
        "resapx": (["resapx", "g.txt", "pairs.txt", "-o", "OUT/r.txt", "--eps", "0.5",
                    "--cterm", "0.2", "--seed", "5"], ["r.txt"]),
        "diffapx": (["diffapx", "g.txt", "S.txt", "-o", "OUT/d.txt", "--seed", "5"], ["d.txt"]),
        "verify": (["verify", "g.txt", "--seed", "5"], []),
        "calibrate": (["calibrate", "corpus", "-o", "OUT/c.txt"], ["c.txt"]),
    }
    mismatched = []
    for name, (args, outputs) in commands.items():
        seen = []
        for run in range(3):
            out_dir = tmp_path / f"{name}-{run}"
            out_dir.mkdir()
            proc = _cli([a.replace("OUT", str(out_dir)) for a in args], tmp_path)
            assert proc.returncode == 0, (name, proc.stderr)
            seen.append((proc.stdout, proc.stderr,
                         [(out_dir / f).read_bytes() for f in outputs]))
        if not seen[0] == seen[1] == seen[2]:
            mismatched.append(name)
    elapsed = time.time() - t
    ok = not mismatched
    report(10, ok, f"{len(commands)} commands x 3 runs, byte-identical outputs; mismatches: "
                   f"{mismatched or 'none'}, {elapsed:.1f}s")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([str(Path(__file__)), "-v"]))
