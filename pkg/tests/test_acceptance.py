"""Acceptance suite: one test group per numbered criterion.

Each test carries ``@pytest.mark.criterion(N, title)``; the terminal summary
prints a PASS/FAIL line per criterion.
"""
import csv
import itertools
import statistics
import time
from functools import lru_cache

import numpy as np
import pytest

from constructions import alpha_pass_tight, expansion_half, majority_lp_gap
from oracles import chain_grouped_max, clique_score, joint_optimum
from symclique.chain_mrf import ChainInstance, property_messages
from symclique.cli import main
from symclique.clique_infer import (
    CliqueProblem,
    alpha_expansion,
    alpha_pass,
    brute_force,
    evaluate_objective,
    expansion_move,
    generalized_alpha_pass,
    icm,
    make_assignment,
)
from symclique.cluster_graph import PropertyConfig, build, independent_viterbi, run
from symclique.majority_infer import exact_majority, lr_solve
from symclique.potentials import AdditiveTable, Entropy, MaxLabelTable, Potts
from symclique.properties import (
    BOTTOM,
    EMPTY,
    BeforeToken,
    FirstNonOther,
    NextLabel,
    TokenLabel,
    Val,
    combine,
)
from symclique.synthgen import CliqueDatasetSpec, gen_clique_dataset, rng_for

criterion = pytest.mark.criterion


def monotone_tables(rng, R, n, high=3.0):
    return np.concatenate([np.zeros((R, 1)), np.cumsum(rng.uniform(0, high, size=(R, n)), axis=1)],
                          axis=1)


# ---------------------------------------------------------------------------
# 1-2: exact cases of the alpha-pass
# ---------------------------------------------------------------------------

@criterion(1, "max-label exactness: alpha_pass == brute_force on 200 problems, < 10 s")
def test_maxlabel_exactness():
    t0 = time.perf_counter()
    for s in range(200):
        rng = rng_for(1001, s)
        n, R = int(rng.integers(1, 9)), int(rng.integers(2, 5))
        p = CliqueProblem(rng.uniform(0, 2, size=(n, R)),
                          MaxLabelTable(R, tables=monotone_tables(rng, R, n)))
        assert alpha_pass(p).score == brute_force(p).score, s
    assert time.perf_counter() - t0 < 10.0


@criterion(2, "binary exactness: alpha_pass == brute force for R = 2 monotone tables")
def test_binary_exactness():
    for s in range(200):
        rng = rng_for(1002, s)
        n = int(rng.integers(1, 11))
        tables = monotone_tables(rng, 2, n)
        pot = AdditiveTable(2, tables=tables) if s % 2 else MaxLabelTable(2, tables=tables)
        p = CliqueProblem(rng.uniform(0, 2, size=(n, 2)), pot)
        assert alpha_pass(p).score == pytest.approx(brute_force(p).score, abs=1e-12), s


# ---------------------------------------------------------------------------
# 3-4: Potts suite
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def potts_suite():
    out = []
    for s in range(500):
        rng = rng_for(1003, s)
        n, R = int(rng.integers(2, 9)), int(rng.integers(2, 5))
        lam = float(rng.uniform(0.7, 1.1))
        p = CliqueProblem(rng.uniform(0, 2, size=(n, R)), Potts(R, lam=lam), name=f"potts-{s}")
        out.append((p, brute_force(p).score))
    return tuple(out)


@criterion(3, "Potts 13/15 bound on 500 problems and the tight fixture 335/375")
def test_potts_bound():
    ratios = [alpha_pass(p).score / opt for p, opt in potts_suite()]
    assert min(ratios) >= 13 / 15 - 1e-12


@criterion(3, "Potts 13/15 bound on 500 problems and the tight fixture 335/375")
def test_tight_fixture():
    p = alpha_pass_tight(15)
    a = alpha_pass(p)
    assert a.score == pytest.approx(335.0, abs=1e-9)
    opt = evaluate_objective(p, [u // 5 for u in range(15)])
    assert opt == pytest.approx(375.0, abs=1e-9)
    # at n = 6 the same construction is small enough to confirm the grouped optimum
    small = alpha_pass_tight(6)
    assert brute_force(small).score == evaluate_objective(small, [u // 2 for u in range(6)])
    assert a.score / opt == pytest.approx(335 / 375, abs=1e-9)


@criterion(4, "generalized alpha-pass: q=2 ratio >= 8/9, q=2 >= alpha, q=1 == alpha")
def test_generalized_alpha_pass():
    for p, opt in potts_suite():
        a = alpha_pass(p)
        q2 = generalized_alpha_pass(p, 2)
        q1 = generalized_alpha_pass(p, 1)
        assert q2.score / opt >= 8 / 9 - 1e-12, p.name
        assert q2.score >= a.score, p.name
        assert q1 == a, p.name


# ---------------------------------------------------------------------------
# 5: alpha-expansion
# ---------------------------------------------------------------------------

def best_switch(problem, current, alpha):
    cur = list(current.values)
    movable = [i for i in range(problem.n) if cur[i] != alpha]
    best = -np.inf
    for r in range(len(movable) + 1):
        for sub in itertools.combinations(movable, r):
            vals = list(cur)
            for i in sub:
                vals[i] = alpha
            best = max(best, clique_score(problem, vals))
    return best


@criterion(5, "alpha-expansion: moves match switch-subset enumeration; 1/2 fixture")
def test_expansion_move_enumeration():
    for s in range(500):
        rng = rng_for(1005, s)
        n, R = int(rng.integers(1, 11)), int(rng.integers(2, 5))
        psi = rng.uniform(0, 2, size=(n, R))
        kind = s % 3
        if kind == 0:
            pot = Potts(R, lam=float(rng.uniform(0.5, 1.5)))
        elif kind == 1:
            pot = Entropy(R, lam=float(rng.uniform(0.5, 1.5)))
        else:
            pot = AdditiveTable(R, tables=monotone_tables(rng, R, n))
        p = CliqueProblem(psi, pot)
        cur = make_assignment(p, rng.integers(0, R, size=n))
        alpha = int(rng.integers(R))
        got = expansion_move(p, cur, alpha)
        assert got.score == pytest.approx(best_switch(p, cur, alpha), abs=1e-9), s


@criterion(5, "alpha-expansion: moves match switch-subset enumeration; 1/2 fixture")
def test_expansion_half_fixture():
    n, k = 8, 4
    p = expansion_half(n, k)
    start = make_assignment(p, [0] * n)
    for alpha in range(p.R):
        assert expansion_move(p, start, alpha) == start
    res = alpha_expansion(p, start)
    assert res == start
    opt = evaluate_objective(p, [1 + u // (n // k) for u in range(n)])
    assert res.score / opt == pytest.approx((n * n * (1 + 2 / k)) / (n * n * (2 + 1 / k)), abs=1e-9)


# ---------------------------------------------------------------------------
# 6-7: majority potentials
# ---------------------------------------------------------------------------

@criterion(6, "majority exactness: exact_majority == brute_force on 200 problems; counterexample")
def test_exact_majority():
    from symclique.majority_infer import majority_problem
    for s in range(200):
        rng = rng_for(1006, s)
        n, R = int(rng.integers(1, 8)), int(rng.integers(2, 4))
        W = rng.uniform(0, 2, size=(R, R))
        if s % 2:
            W = np.where(rng.uniform(size=(R, R)) < 0.7, 0.0, W)
        p = majority_problem(rng.uniform(0, 2, size=(n, R)), W)
        assert exact_majority(p).score == pytest.approx(brute_force(p).score, abs=1e-9), s


@criterion(6, "majority exactness: exact_majority == brute_force on 200 problems; counterexample")
def test_majority_counterexample():
    p = majority_lp_gap()
    a = exact_majority(p, alpha=0)
    assert a.score == 11.0
    assert a.values == (1, 0, 0)
    assert p.potential.majority_of(np.bincount(a.values, minlength=3)) == 0
    assert exact_majority(p).score == brute_force(p).score


@lru_cache(maxsize=None)
def lr_suites():
    out = {}
    for fam in ("maj-dense", "maj-sparse"):
        spec = CliqueDatasetSpec(fam, n=30, R=8, lam_lo=0.7, lam_hi=1.1, lam_step=0.02,
                                 closed=False, per_lambda=10, seed=7)
        rows = []
        t0 = time.perf_counter()
        for p in gen_clique_dataset(spec):
            exact = exact_majority(p).score
            res = lr_solve(p)
            rows.append((exact, res.assignment.score, res.bound, icm(p).score))
        out[fam] = (rows, time.perf_counter() - t0)
    return out


def _ratio_share(rows, level):
    return np.mean([lr >= level * ex for ex, lr, _, _ in rows])


@criterion(7, "Lagrangian relaxation: sandwich, ratio shares, LR >= ICM, < 60 s")
def test_lr_sandwich_and_runtime():
    suites = lr_suites()
    for fam, (rows, _) in suites.items():
        assert len(rows) == 200
        for ex, lr, bound, _ in rows:
            slack = 1e-9 * (1 + abs(ex))
            assert bound >= ex - slack, fam
            assert ex >= lr - slack, fam
    assert sum(t for _, t in suites.values()) < 60.0


@criterion(7, "Lagrangian relaxation: sandwich, ratio shares, LR >= ICM, < 60 s")
def test_lr_ratio_shares():
    suites = lr_suites()
    dense = _ratio_share(suites["maj-dense"][0], 0.97)
    sparse = _ratio_share(suites["maj-sparse"][0], 0.92)
    print(f"share >= 0.97 on dense: {dense:.3f}; share >= 0.92 on sparse: {sparse:.3f}")
    assert dense >= 0.9
    assert sparse >= 0.9


@criterion(7, "Lagrangian relaxation: sandwich, ratio shares, LR >= ICM, < 60 s")
def test_lr_beats_icm():
    rows = lr_suites()["maj-sparse"][0]
    share = np.mean([lr >= ic for _, lr, _, ic in rows])
    print(f"LR >= ICM on sparse: {share:.3f}")
    assert share >= 0.7


# ---------------------------------------------------------------------------
# 8-9: properties and chain messages
# ---------------------------------------------------------------------------

@criterion(8, "property algebra: monoid laws of combine")
def test_monoid_laws():
    values = [Val(x) for x in range(4)] + [EMPTY, BOTTOM]
    for a in values:
        assert combine(EMPTY, a) == a and combine(a, EMPTY) == a
        assert combine(BOTTOM, a) is BOTTOM and combine(a, BOTTOM) is BOTTOM
    for a, b in itertools.product(values, repeat=2):
        assert combine(a, b) == combine(b, a)
    for a, b, c in itertools.product(values, repeat=3):
        assert combine(combine(a, b), c) == combine(a, combine(b, c))
    for x, y in itertools.product(range(4), repeat=2):
        assert combine(Val(x), Val(y)) == (Val(x) if x == y else BOTTOM)


@criterion(9, "property-aware messages equal the enumeration oracle on 300 chains")
def test_messages_against_enumeration():
    for s in range(300):
        rng = rng_for(1009, s)
        T, Y = int(rng.integers(1, 7)), int(rng.integers(2, 4))
        labels = ("A", "B", "Other") if Y == 3 else ("A", "Other")
        pool = [TokenLabel("w"), NextLabel("A"), BeforeToken("A"), FirstNonOther()]
        if Y == 3:
            pool.append(NextLabel("B"))
        inst = ChainInstance(tuple(rng.choice(["w", "x"], size=T)), rng.normal(size=(T, Y)),
                             rng.normal(size=(T - 1, Y, Y)), labels)
        k = int(rng.integers(0, 3))
        props = [pool[i] for i in rng.choice(len(pool), size=k, replace=False)]
        props = [p for p in props if p.in_domain(inst.tokens)]
        agg = property_messages(inst, props, "Other")
        want = chain_grouped_max(inst, props)
        seen = 0
        for u in itertools.product(*(range(g.size) for g in agg.grids)):
            key = tuple(g.to_value(c) for g, c in zip(agg.grids, u))
            if key in want:
                assert agg.M[u] == pytest.approx(want[key], abs=1e-9), s
                seen += 1
            else:
                assert agg.M[u] == -np.inf, s
        assert seen == len(want)


# ---------------------------------------------------------------------------
# 10: collective inference
# ---------------------------------------------------------------------------

TINY_LABELS = ("A", "B", "Other")


def tiny_model(seed):
    rng = rng_for(1010, seed)
    insts = []
    for i in range(3):
        T = int(rng.integers(2, 5))
        insts.append(ChainInstance(tuple(rng.choice(["w", "x", "y"], size=T)),
                                   rng.normal(size=(T, 3)), rng.normal(size=(T - 1, 3, 3)) * 0.5,
                                   TINY_LABELS, name=f"i{i}"))
    props = [NextLabel("A"), TokenLabel("w"), FirstNonOther(), BeforeToken("A")]
    return insts, props[int(rng.integers(4))], float(rng.uniform(0.5, 2.0))


@criterion(10, "collective inference reaches the joint optimum on >= 95% of tiny models")
def test_collective_joint_optimum():
    hits = restricted_hits = 0
    for s in range(100):
        insts, prop, lam = tiny_model(s)
        cfg = [PropertyConfig(prop, "potts", lam=lam)]
        m = build(insts, cfg, restrict=False)
        opt = joint_optimum(insts, [prop], m.full_potentials, m.full_grids)
        hits += abs(run(m, 3)[-1].objective - opt) <= 1e-9
        restricted_hits += abs(run(build(insts, cfg), 3)[-1].objective - opt) <= 1e-9
    print(f"joint optimum reached: {hits}/100 (full ranges), {restricted_hits}/100 (restricted)")
    assert hits >= 95


@criterion(10, "collective inference reaches the joint optimum on >= 95% of tiny models")
def test_collective_zero_potentials_is_viterbi():
    for s in range(100):
        insts, prop, _ = tiny_model(s)
        for restrict in (False, True):
            m = build(insts, [PropertyConfig(prop, "potts", lam=0.0)], restrict=restrict)
            for d in run(m, 3):
                assert d.labelings == independent_viterbi(m), s


# ---------------------------------------------------------------------------
# 11-12: scale and determinism
# ---------------------------------------------------------------------------

@criterion(11, "alpha_pass median < 50 ms at n = 100, R = 24")
def test_alpha_pass_scale():
    probs = gen_clique_dataset(CliqueDatasetSpec("potts", per_lambda=3, seed=11))
    alpha_pass(probs[0])
    times = []
    for p in probs:
        t0 = time.perf_counter()
        alpha_pass(p)
        times.append(time.perf_counter() - t0)
    med = statistics.median(times)
    print(f"alpha_pass median {1000 * med:.2f} ms over {len(probs)} cliques")
    assert med < 0.05


def _csv_without_time(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if "time_us" in rows[0]:
        k = rows[0].index("time_us")
        rows = [r[:k] + r[k + 1:] for r in rows]
    return rows


@criterion(12, "determinism: regenerated datasets and reruns give identical CSV")
@pytest.mark.parametrize("family,solvers", [
    ("potts", "alpha,qpass2,expansion,icm,brute"),
    ("maj-sparse", "alpha,malpha,icm,lr,exact,brute"),
    ("maxlabel", "alpha,icm,brute"),
])
def test_bench_determinism(tmp_path, family, solvers):
    outs = []
    for run_id in ("a", "b"):
        prob = tmp_path / f"{run_id}.txt"
        assert main(["gen", "--family", family, "--n", "6", "--r", "3", "--lambda", "0.7:1.1:0.1",
                     "--per-lambda", "3", "--seed", "12", "--out", str(prob)]) == 0
        out = tmp_path / f"{run_id}.csv"
        assert main(["clique-bench", "--in", str(prob), "--solvers", solvers,
                     "--out", str(out)]) == 0
        outs.append((prob.read_bytes(), _csv_without_time(out)))
    assert outs[0][0] == outs[1][0]
    assert outs[0][1] == outs[1][1]


@criterion(12, "determinism: regenerated datasets and reruns give identical CSV")
def test_collective_determinism(tmp_path):
    outs = []
    for run_id in ("a", "b"):
        d = tmp_path / run_id
        assert main(["gen-corpus", "--out-dir", str(d), "--seed", "12"]) == 0
        assert main(["collective", "--model", str(d / "model-d1.txt"),
                     "--out", str(d / "c.csv")]) == 0
        outs.append((d / "c.csv").read_bytes())
    assert outs[0] == outs[1]
