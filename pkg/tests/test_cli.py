import json

import numpy as np
import pytest

from subspace_sparsifier.cli import main
from subspace_sparsifier.graph import (build_graph, parse_certificate, read_graph,
                                       replay_certificate, write_graph)
from subspace_sparsifier.testkit import DenseOracle, path_graph, random_graph_nm


def certified(source_file, prefix):
    """Replay the certificate and compare with the written graph (ids from survivors)."""
    cert = parse_certificate(open(f"{prefix}.cert").read())
    H = read_graph(f"{prefix}.graph")
    H = build_graph(H.edge_list(), n=H.n, edge_ids=cert["survivors"])
    return replay_certificate(read_graph(source_file), cert).same_as(H, check_phi=False), cert, H


@pytest.fixture
def files(tmp_path):
    write_graph(random_graph_nm(30, 90, np.random.default_rng(1)), tmp_path / "g.txt")
    write_graph(path_graph(100), tmp_path / "path.txt")
    write_graph(path_graph(2), tmp_path / "edge.txt")
    (tmp_path / "S.txt").write_text("0 9 17 25\n")
    (tmp_path / "ends.txt").write_text("0 99\n")
    (tmp_path / "pairs.txt").write_text("0 5\n3 17\n8 8\n")
    return tmp_path


def test_sparsify_path(files):
    out = files / "out" / "p"
    assert main(["sparsify", str(files / "path.txt"), str(files / "ends.txt"), "-o", str(out),
                 "--audit", "--cterm", "1"]) == 0
    ok, cert, H = certified(files / "path.txt", out)
    assert ok
    r = DenseOracle(H).resistance(cert["phi"][0], cert["phi"][99])
    assert 0.5 * 99 <= r <= 1.5 * 99
    records = [json.loads(line) for line in open(f"{out}.trace.jsonl")]
    assert records[0]["config"]["cterm"] == 1
    assert records[-1]["final"] and records[-1]["within_eps"]


def test_sparsify_slow_and_fast_both_certify(files):
    for oracle in ("slow", "fast"):
        out = files / oracle
        argv = ["sparsify", str(files / "g.txt"), str(files / "S.txt"), "-o", str(out),
                "--oracle", oracle, "--cterm", "1", "--seed", "3"]
        if oracle == "fast":
            argv += ["--gamma", "0.5", "--column-rounds", "8", "--sketch-delta", "0.01"]
        assert main(argv) == 0
        assert certified(files / "g.txt", out)[0]


def test_sparsify_needs_subspace(files, capsys):
    assert main(["sparsify", str(files / "g.txt"), "-o", str(files / "x")]) == 2


def test_resapx(files):
    out = files / "r.txt"
    assert main(["resapx", str(files / "edge.txt"), str(files / "pairs.txt").replace(
        "pairs", "ones"), "-o", str(out)]) == 3  # missing file is a parse error
    (files / "one.txt").write_text("0 1\n")
    assert main(["resapx", str(files / "edge.txt"), str(files / "one.txt"), "-o", str(out)]) == 0
    u, v, est = out.read_text().split()
    assert 0.8 <= float(est) <= 1.2
    assert main(["resapx", str(files / "g.txt"), str(files / "pairs.txt"), "-o", str(out),
                 "--exact-sc"]) == 0
    lines = out.read_text().splitlines()
    assert lines[2] == "8 8 0.0"


def test_resapx_empty_and_malformed(files, capsys):
    (files / "empty.txt").write_text("")
    assert main(["resapx", str(files / "g.txt"), str(files / "empty.txt"),
                 "-o", str(files / "e.out")]) == 0
    assert (files / "e.out").read_text() == ""
    (files / "bad.txt").write_text("0 1\n2\n")
    assert main(["resapx", str(files / "g.txt"), str(files / "bad.txt"),
                 "-o", str(files / "b.out")]) == 3
    assert ":2:" in capsys.readouterr().err


def test_diffapx(files):
    out = files / "d.txt"
    assert main(["diffapx", str(files / "g.txt"), str(files / "S.txt"), "-o", str(out)]) == 0
    rows = [line.split() for line in out.read_text().splitlines()]
    assert len(rows) == 90
    assert all(float(v) >= 0 for _, v in rows)


def test_verify(files, capsys):
    assert main(["verify", str(files / "g.txt")]) == 0
    assert "schur-pinv" in capsys.readouterr().out
    (files / "tri.txt").write_text("3 3\n0 1 1\n1 2 2\n0 2 3\n")
    assert main(["verify", str(files / "tri.txt")]) == 0
    assert "kirchhoff" in capsys.readouterr().out
    (files / "neg.txt").write_text("3 2\n0 1 1\n1 2 -1\n")
    assert main(["verify", str(files / "neg.txt")]) == 3
    (files / "disc.txt").write_text("4 2\n0 1 1\n2 3 1\n")
    assert main(["verify", str(files / "disc.txt")]) == 2
    assert "disconnected" in capsys.readouterr().err
    assert main(["verify", str(files / "g.txt"), "--dense-cap", "10"]) == 2


def test_calibrate(files, capsys):
    corpus = files / "corpus"
    corpus.mkdir()
    for n in (10, 20, 40):
        write_graph(path_graph(n), corpus / f"p{n}.txt")
    assert main(["calibrate", str(corpus), "-o", str(files / "c.txt")]) == 0
    c = float((files / "c.txt").read_text().split()[1])
    assert c < 1
    (files / "none").mkdir()
    assert main(["calibrate", str(files / "none")]) == 2


def test_bad_config_rejected(files):
    assert main(["sparsify", str(files / "g.txt"), str(files / "S.txt"), "-o",
                 str(files / "x"), "--eps", "1.5"]) == 2
