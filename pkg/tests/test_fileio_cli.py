import csv

import numpy as np
import pytest

from symclique import fileio
from symclique.chain_mrf import ChainInstance
from symclique.cli import BENCH_COLUMNS, COLLECTIVE_COLUMNS, main
from symclique.cluster_graph import PropertyConfig
from symclique.properties import FirstNonOther, NextLabel
from symclique.synthgen import CliqueDatasetSpec, gen_clique_dataset


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize("family", ["potts", "entropy", "makespan2", "maj-sparse", "maxlabel"])
def test_problem_round_trip(family, tmp_path):
    probs = gen_clique_dataset(CliqueDatasetSpec(family, n=5, R=3, per_lambda=2, seed=1))
    path = tmp_path / "p.txt"
    fileio.write_problems(probs, path)
    back = fileio.read_problems(path)
    assert [p.name for p in back] == [p.name for p in probs]
    for p, q in zip(probs, back):
        assert p.psi.tobytes() == q.psi.tobytes()
        assert fileio.format_problem(p) == fileio.format_problem(q)
    fileio.write_problems(back, tmp_path / "q.txt")
    assert (tmp_path / "q.txt").read_bytes() == path.read_bytes()


@pytest.mark.parametrize("text", [
    "2 3 potts\n1 2 3\n",
    "2 3 potts\n1 2\n1 2 3\n",
    "2 3 nope\n1 2 3\n1 2 3\n",
    "2 x potts\n",
    "1 2 potts lambda\n1 2\n",
    "1 2 majority\n1 2\n1 2\n",
])
def test_malformed_problems(text):
    with pytest.raises(fileio.FormatError):
        fileio.parse_problems(text)


def test_comments_and_blank_lines():
    probs = fileio.parse_problems("# header\n\n1 2 potts lambda=0.5\n1.0 2.0\n")
    assert probs[0].potential.lam == 0.5 and probs[0].name == "problem-0"


def _instances():
    rng = np.random.default_rng(0)
    labels = ("Title", "Author", "Other")
    return [ChainInstance(tuple(f"t{j}" for j in range(T)), rng.normal(size=(T, 3)),
                          rng.normal(size=(T - 1, 3, 3)), labels, name=f"x{T}")
            for T in (1, 3, 4)]


def test_instance_round_trip(tmp_path):
    insts = _instances()
    gold = [[0], None, [2, 1, 0, 0]]
    path = tmp_path / "i.txt"
    fileio.write_instances(insts, path, gold)
    back, g = fileio.read_instances(path)
    assert g == gold
    for a, b in zip(insts, back):
        assert a.tokens == b.tokens and a.labels == b.labels and a.name == b.name
        assert a.node.tobytes() == b.node.tobytes() and a.edge.tobytes() == b.edge.tobytes()


def test_bad_gold_rejected():
    text = fileio.format_instance(_instances()[1], gold=[0, 1, 7])
    with pytest.raises(fileio.FormatError):
        fileio.parse_instances(text)


def test_manifest_round_trip(tmp_path):
    fileio.write_instances(_instances(), tmp_path / "i.txt")
    cfgs = [PropertyConfig(NextLabel("Title"), lam=0.5),
            PropertyConfig(FirstNonOther(), potential="majority", w_same=2.0, w_diff=0.5)]
    fileio.write_manifest(tmp_path / "m.txt", ["i.txt"], cfgs, options={"restrict": False})
    man = fileio.read_manifest(tmp_path / "m.txt")
    assert man.configs == cfgs
    assert man.options == {"restrict": False}
    assert len(man.instances) == 3


@pytest.mark.parametrize("text", [
    "instances missing.txt\n",
    "other Other\n",
    "bogus line\n",
    "instances i.txt\nproperty anchor=Title\n",
    "instances i.txt\noption restrict=maybe\n",
    "instances i.txt\noption colour=red\n",
])
def test_bad_manifests(text, tmp_path):
    fileio.write_instances(_instances(), tmp_path / "i.txt")
    with pytest.raises(fileio.FormatError):
        fileio.parse_manifest(text, tmp_path)


def test_gen_is_reproducible(tmp_path, capsys):
    args = ["gen", "--family", "potts", "--n", "4", "--r", "3", "--lambda", "0.8:1.2:0.05",
            "--per-lambda", "2", "--seed", "3"]
    assert main(args + ["--out", str(tmp_path / "a.txt")]) == 0
    assert main(args + ["--out", str(tmp_path / "b.txt")]) == 0
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()
    assert len(fileio.read_problems(tmp_path / "a.txt")) == 18
    assert "wrote 18 problems" in capsys.readouterr().out


def test_gen_bad_range(tmp_path, capsys):
    assert main(["gen", "--family", "potts", "--lambda", "1:0:0.1", "--out",
                 str(tmp_path / "x.txt")]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["gen", "--family", "potts", "--r", "1", "--out", str(tmp_path / "x.txt")]) == 2


def test_clique_bench_rows(tmp_path):
    main(["gen", "--family", "maj-dense", "--n", "4", "--r", "3", "--lambda", "1:1:1",
          "--per-lambda", "2", "--out", str(tmp_path / "p.txt")])
    assert main(["clique-bench", "--in", str(tmp_path / "p.txt"), "--solvers",
                 "lr,expansion,alpha,exact,brute", "--out", str(tmp_path / "r.csv")]) == 0
    rows = _rows(tmp_path / "r.csv")
    assert tuple(rows[0].keys()) == BENCH_COLUMNS
    assert len(rows) == 10
    assert [r["solver"] for r in rows[:5]] == sorted(["lr", "expansion", "alpha", "exact", "brute"])
    for r in rows:
        if r["solver"] == "expansion":
            assert r["status"] == "skipped" and r["score"] == ""
        else:
            assert r["status"] == "ok" and r["reference_kind"] == "brute"
            assert float(r["ratio"]) == float(r["score"]) / float(r["reference"])
        if r["solver"] in ("exact", "brute"):
            assert float(r["ratio"]) == 1.0


def test_makespan_alpha_ratio_is_one(tmp_path):
    main(["gen", "--family", "makespan", "--n", "5", "--r", "3", "--lambda", "0.5:1.5:0.5",
          "--per-lambda", "3", "--out", str(tmp_path / "p.txt")])
    main(["clique-bench", "--in", str(tmp_path / "p.txt"), "--solvers", "alpha,brute",
          "--out", str(tmp_path / "r.csv")])
    assert all(float(r["ratio"]) == 1.0 for r in _rows(tmp_path / "r.csv") if r["solver"] == "alpha")


def test_bench_input_errors(tmp_path):
    assert main(["clique-bench", "--in", str(tmp_path / "missing.txt")]) == 2
    (tmp_path / "bad.txt").write_text("2 2 potts\n1 2\n")
    assert main(["clique-bench", "--in", str(tmp_path / "bad.txt")]) == 2
    (tmp_path / "ok.txt").write_text("1 2 potts\n1 2\n")
    assert main(["clique-bench", "--in", str(tmp_path / "ok.txt"), "--solvers", "nope"]) == 2


def test_threads_do_not_change_output(tmp_path, monkeypatch):
    main(["gen", "--family", "potts", "--n", "5", "--r", "3", "--lambda", "0.7:1.1:0.1",
          "--per-lambda", "2", "--out", str(tmp_path / "p.txt")])
    outs = []
    for threads in ("1", "4"):
        monkeypatch.setenv("SYMCLIQUE_THREADS", threads)
        main(["clique-bench", "--in", str(tmp_path / "p.txt"), "--out", str(tmp_path / "r.csv")])
        outs.append([{k: v for k, v in r.items() if k != "time_us"} for r in _rows(tmp_path / "r.csv")])
    assert outs[0] == outs[1]
    monkeypatch.setenv("SYMCLIQUE_THREADS", "many")
    assert main(["clique-bench", "--in", str(tmp_path / "p.txt"), "--out", str(tmp_path / "r.csv")]) == 2


def test_oracle_check_passes_and_fails(tmp_path, capsys):
    main(["gen", "--family", "maxlabel", "--n", "5", "--r", "3", "--lambda", "1:1:1",
          "--per-lambda", "5", "--out", str(tmp_path / "m.txt")])
    assert main(["oracle-check", "--in", str(tmp_path / "m.txt"), "--solver", "alpha"]) == 0
    main(["gen", "--family", "potts", "--n", "6", "--r", "3", "--lambda", "0.7:1.1:0.1",
          "--per-lambda", "3", "--out", str(tmp_path / "p.txt")])
    assert main(["oracle-check", "--in", str(tmp_path / "p.txt"), "--solver", "alpha"]) == 0
    main(["gen", "--family", "maj-sparse", "--n", "5", "--r", "3", "--lambda", "1:1:1",
          "--per-lambda", "5", "--out", str(tmp_path / "j.txt")])
    assert main(["oracle-check", "--in", str(tmp_path / "j.txt"), "--solver", "exact"]) == 0
    capsys.readouterr()
    # an unreachable bound must be reported as a violation
    assert main(["oracle-check", "--in", str(tmp_path / "p.txt"), "--solver", "icm",
                 "--bound", "1.5"]) == 1
    assert "violation" in capsys.readouterr().out
    assert main(["oracle-check", "--in", str(tmp_path / "p.txt"), "--solver", "exact"]) == 1


def test_collective_cli(tmp_path):
    out = tmp_path / "corpus"
    assert main(["gen-corpus", "--out-dir", str(out), "--seed", "1"]) == 0
    assert main(["collective", "--model", str(out / "model-d0.txt"), "--rounds", "2",
                 "--out", str(tmp_path / "c.csv")]) == 0
    rows = _rows(tmp_path / "c.csv")
    assert tuple(rows[0].keys()) == COLLECTIVE_COLUMNS
    assert [r["round"] for r in rows] == ["0", "1", "2"]
    assert float(rows[1]["accuracy"]) >= float(rows[0]["accuracy"])


def test_collective_zero_property_model_matches_viterbi(tmp_path):
    fileio.write_instances(_instances(), tmp_path / "i.txt", gold=[[0], [0, 1, 2], [2, 2, 1, 0]])
    fileio.write_manifest(tmp_path / "m.txt", ["i.txt"], [])
    main(["collective", "--model", str(tmp_path / "m.txt"), "--out", str(tmp_path / "c.csv")])
    rows = _rows(tmp_path / "c.csv")
    assert len({r["accuracy"] for r in rows}) == 1
    assert all(r["changed"] == "0" for r in rows)


def test_collective_errors(tmp_path):
    (tmp_path / "m.txt").write_text("nonsense\n")
    assert main(["collective", "--model", str(tmp_path / "m.txt")]) == 2
    assert main(["collective", "--model", str(tmp_path / "none.txt")]) == 2
    fileio.write_instances(_instances(), tmp_path / "i.txt")
    fileio.write_manifest(tmp_path / "ok.txt", ["i.txt"], [PropertyConfig(NextLabel("Title"))])
    assert main(["collective", "--model", str(tmp_path / "ok.txt"), "--rounds", "0"]) == 2


def test_argparse_errors_exit_two():
    with pytest.raises(SystemExit) as e:
        main(["gen"])
    assert e.value.code == 2
