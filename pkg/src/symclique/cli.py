"""Command-line front end.

Subcommands: ``gen``, ``gen-corpus``, ``clique-bench``, ``oracle-check`` and
``collective``.  Exit codes: 0 success, 1 invariant violation, 2 input error.
``SYMCLIQUE_THREADS`` sets the number of worker threads used by
``clique-bench`` (default 1; output order does not depend on it).
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import clique_infer as ci
from . import cluster_graph as cg
from . import fileio
from .majority_infer import LrConfig, STRATEGIES, exact_majority, lr_solve, modified_alpha_pass
from .properties import make_property
from .potentials import AdditivePotential, LinearMakespan, Majority, MaxLabelTable, SquareMakespan
from .synthgen import (
    FAMILIES,
    CliqueDatasetSpec,
    CorpusSpec,
    gen_clique_dataset,
    gen_corpus,
)

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT = 0, 1, 2

BENCH_COLUMNS = ("problem_id", "family", "n", "R", "lambda", "solver", "status", "score",
                 "reference", "reference_kind", "ratio", "time_us", "seed")
BENCH_SOLVERS = ("alpha", "malpha", "qpass2", "expansion", "icm", "lr", "exact", "brute")
COLLECTIVE_COLUMNS = ("round", "objective", "max_delta", "accuracy", "changed")

BENCH_HELP = (
    "CSV columns: " + ",".join(BENCH_COLUMNS) + ".  status is ok or skipped "
    "(solver not applicable to the potential, or brute force too large).  "
    "reference is brute force when R**n is within --brute-cap, else exact_majority "
    "for majority problems, else the best score of the solvers run.  "
    "ratio = score / reference.  Floats are written with full precision."
)


class InputError(Exception):
    pass


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def parse_lambda(text: str):
    try:
        lo, hi, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise InputError(f"--lambda expects lo:hi:step, got {text!r}") from None
    if step <= 0 or hi < lo:
        raise InputError(f"bad lambda range {text!r}")
    return lo, hi, step


# ---------------------------------------------------------------------------
# gen / gen-corpus
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    lo, hi, step = parse_lambda(args.lam)
    try:
        spec = CliqueDatasetSpec(args.family, n=args.n, R=args.r, lam_lo=lo, lam_hi=hi,
                                 lam_step=step, per_lambda=args.per_lambda, seed=args.seed,
                                 closed=not args.half_open, conll_scaling=args.conll_scaling,
                                 sparse_zero_fraction=args.zero_fraction)
        problems = gen_clique_dataset(spec)
    except ValueError as e:
        raise InputError(str(e)) from None
    fileio.write_problems(problems, args.out)
    print(f"wrote {len(problems)} problems to {args.out}")
    return EXIT_OK


def cmd_gen_corpus(args) -> int:
    try:
        spec = CorpusSpec(num_domains=args.domains, instances_per_domain=args.per_domain,
                          noise=args.noise, ambiguous_fraction=args.ambiguous, seed=args.seed)
    except ValueError as e:
        raise InputError(str(e)) from None
    corpus = gen_corpus(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    labels = spec.labels()
    configs = [cg.PropertyConfig(make_property("nextlabel", anchor=l), lam=args.lam)
               for l in labels if l != spec.other]
    configs.append(cg.PropertyConfig(make_property("firstnonother"), lam=args.lam))
    for d in range(spec.num_domains):
        members = corpus.domain_members(d)
        inst_file = f"instances-d{d}.txt"
        fileio.write_instances([corpus.instances[i] for i in members], out / inst_file,
                               gold=[corpus.gold[i] for i in members])
        fileio.write_manifest(out / f"model-d{d}.txt", [inst_file], configs, other=spec.other)
    print(f"wrote {spec.num_domains} domain models to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# clique-bench
# ---------------------------------------------------------------------------

def _brute_feasible(problem, cap) -> bool:
    return problem.R ** problem.n <= cap


def _applicable(solver: str, problem, cap) -> bool:
    pot = problem.potential
    if solver in ("malpha", "lr", "exact"):
        return isinstance(pot, Majority)
    if solver == "expansion":
        return isinstance(pot, AdditivePotential)
    if solver == "brute":
        return _brute_feasible(problem, cap)
    return True


def _run_solver(solver: str, problem, args):
    if solver == "alpha":
        return ci.alpha_pass(problem)
    if solver == "qpass2":
        return ci.generalized_alpha_pass(problem, min(2, problem.R))
    if solver == "expansion":
        return ci.alpha_expansion(problem)
    if solver == "icm":
        return ci.icm(problem)
    if solver == "brute":
        return ci.brute_force(problem, cap=args.brute_cap)
    if solver == "malpha":
        return modified_alpha_pass(problem)
    if solver == "exact":
        return exact_majority(problem)
    if solver == "lr":
        return lr_solve(problem, LrConfig(strategy=args.lr_strategy)).assignment
    raise InputError(f"unknown solver {solver!r}")


def bench_problem(problem, solvers, args) -> list:
    results = {}
    for s in solvers:
        if not _applicable(s, problem, args.brute_cap):
            results[s] = None
            continue
        t0 = time.perf_counter_ns()
        a = _run_solver(s, problem, args)
        results[s] = (a.score, (time.perf_counter_ns() - t0) // 1000)
    if _brute_feasible(problem, args.brute_cap):
        ref = results["brute"][0] if results.get("brute") else ci.brute_force(problem, args.brute_cap).score
        kind = "brute"
    elif isinstance(problem.potential, Majority):
        ref = results["exact"][0] if results.get("exact") else exact_majority(problem).score
        kind = "exact"
    else:
        scores = [r[0] for r in results.values() if r is not None]
        ref = max(scores) if scores else None
        kind = "best" if scores else ""
    meta = problem.meta
    rows = []
    for s in solvers:
        r = results[s]
        if r is None:
            score = ratio = t = None
            status = "skipped"
        else:
            score, t = r
            status = "ok"
            if ref is None:
                ratio = None
            elif ref == 0:
                ratio = 1.0 if score == 0 else None
            else:
                ratio = score / ref
        rows.append({
            "problem_id": problem.name, "family": fileio.problem_family(problem),
            "n": problem.n, "R": problem.R, "lambda": _fmt(meta.get("lambda")),
            "solver": s, "status": status, "score": _fmt(score), "reference": _fmt(ref),
            "reference_kind": kind, "ratio": _fmt(ratio), "time_us": "" if t is None else t,
            "seed": meta.get("seed", ""),
        })
    return rows


def _threads() -> int:
    raw = os.environ.get("SYMCLIQUE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise InputError(f"SYMCLIQUE_THREADS must be an integer, got {raw!r}") from None


def _solver_list(text: str) -> list:
    solvers = [s.strip() for s in text.split(",") if s.strip()]
    bad = [s for s in solvers if s not in BENCH_SOLVERS]
    if bad or not solvers:
        raise InputError(f"unknown solvers {bad}; choose from {','.join(BENCH_SOLVERS)}")
    return sorted(set(solvers), key=solvers.index)


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


def cmd_clique_bench(args) -> int:
    solvers = _solver_list(args.solvers)
    problems = _load_problems(args.inp)
    threads = _threads()
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            per_problem = list(ex.map(lambda p: bench_problem(p, solvers, args), problems))
    else:
        per_problem = [bench_problem(p, solvers, args) for p in problems]
    rows = [r for rs in per_problem for r in sorted(rs, key=lambda r: r["solver"])]
    fh, close = _open_out(args.out)
    try:
        w = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if close:
            fh.close()
    return EXIT_OK


def _load_problems(path):
    try:
        return fileio.read_problems(path)
    except (OSError, fileio.FormatError) as e:
        raise InputError(str(e)) from None


# ---------------------------------------------------------------------------
# oracle-check
# ---------------------------------------------------------------------------

POTTS_ALPHA_BOUND = 13.0 / 15.0
POTTS_QPASS2_BOUND = 8.0 / 9.0
EXPANSION_BOUND = 0.5
TOL = 1e-9


def _alpha_is_exact(problem) -> bool:
    pot = problem.potential
    return isinstance(pot, (MaxLabelTable, LinearMakespan, SquareMakespan)) or len(pot.kept) <= 2


def check_problem(problem, solver: str, args):
    """First violated invariant for one problem, or None."""
    if not _applicable(solver, problem, args.brute_cap) and solver != "brute":
        return f"solver {solver} does not apply to {type(problem.potential).__name__}"
    if solver == "lr":
        res = lr_solve(problem, LrConfig(strategy=args.lr_strategy))
        a = res.assignment
    else:
        a = _run_solver(solver, problem, args)
    if len(a.values) != problem.n or any(not 0 <= v < problem.R for v in a.values):
        return "assignment has the wrong length or values out of range"
    if a.score != ci.evaluate_objective(problem, a.values):
        return "reported score differs from the recomputed objective"
    if _brute_feasible(problem, args.brute_cap):
        opt = ci.brute_force(problem, cap=args.brute_cap).score
    elif isinstance(problem.potential, Majority):
        opt = exact_majority(problem).score
    else:
        return None
    slack = TOL * (1.0 + abs(opt))
    if a.score > opt + slack:
        return f"score {a.score!r} exceeds the optimum {opt!r}"
    if solver == "lr" and res.bound < opt - slack:
        return f"bound {res.bound!r} is below the optimum {opt!r}"
    bound = args.bound
    if bound is None:
        if solver in ("brute", "exact") or (solver == "alpha" and _alpha_is_exact(problem)):
            bound = 1.0
        elif type(problem.potential).__name__ == "Potts":
            bound = {"alpha": POTTS_ALPHA_BOUND, "qpass2": POTTS_QPASS2_BOUND,
                     "expansion": EXPANSION_BOUND}.get(solver)
    if bound is not None and opt > 0 and a.score < bound * opt - slack:
        return f"ratio {a.score / opt!r} is below {bound!r}"
    if bound == 1.0 and opt == 0 and a.score < -slack:
        return f"score {a.score!r} is below the optimum {opt!r}"
    return None


def cmd_oracle_check(args) -> int:
    if args.solver not in BENCH_SOLVERS:
        raise InputError(f"unknown solver {args.solver!r}")
    problems = _load_problems(args.inp)
    if args.trials is not None:
        problems = problems[: args.trials]
    for p in problems:
        msg = check_problem(p, args.solver, args)
        if msg:
            print(f"violation on {p.name}: {msg}")
            return EXIT_VIOLATION
    print(f"pass: {args.solver} on {len(problems)} problems")
    return EXIT_OK


# ---------------------------------------------------------------------------
# collective
# ---------------------------------------------------------------------------

def _accuracy(labelings, gold):
    if not gold or any(g is None for g in gold):
        return None
    total = sum(len(g) for g in gold)
    hits = sum(int(a == b) for y, g in zip(labelings, gold) for a, b in zip(y, g))
    return hits / total


def cmd_collective(args) -> int:
    if args.rounds < 1:
        raise InputError("--rounds must be at least 1")
    try:
        man = fileio.read_manifest(args.model)
        opts = dict(man.options)
        if args.no_restrict:
            opts["restrict"] = False
        if args.inclusion:
            opts["exclusion"] = False
        if args.damping is not None:
            opts["damping"] = args.damping
        if args.solver is not None:
            opts["clique_solver"] = args.solver
        model = cg.build(man.instances, man.configs, other=man.other, **opts)
    except (OSError, ValueError) as e:
        raise InputError(str(e)) from None
    base = cg.independent_viterbi(model)
    rows = [{"round": 0, "objective": _fmt(cg.objective(model, base)), "max_delta": "",
             "accuracy": _fmt(_accuracy(base, man.gold)), "changed": 0}]
    for d in cg.run(model, args.rounds):
        changed = sum(int(a != b) for a, b in zip(d.labelings, base))
        rows.append({"round": d.round, "objective": _fmt(d.objective),
                     "max_delta": _fmt(d.max_delta),
                     "accuracy": _fmt(_accuracy(d.labelings, man.gold)), "changed": changed})
    fh, close = _open_out(args.out)
    try:
        w = csv.DictWriter(fh, fieldnames=COLLECTIVE_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if close:
            fh.close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="symclique", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic clique suite")
    g.add_argument("--family", required=True, choices=FAMILIES)
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--r", type=int, default=24)
    g.add_argument("--lambda", dest="lam", default="0.8:1.2:0.05", help="lo:hi:step")
    g.add_argument("--half-open", action="store_true", help="exclude the upper lambda endpoint")
    g.add_argument("--per-lambda", type=int, default=25)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--conll-scaling", action="store_true", help="use lambda = 0.9/n")
    g.add_argument("--zero-fraction", type=float, default=0.7, help="maj-sparse zero fraction")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    c = sub.add_parser("gen-corpus", help="generate a planted chain corpus and model manifests")
    c.add_argument("--domains", type=int, default=3)
    c.add_argument("--per-domain", type=int, default=5)
    c.add_argument("--noise", type=float, default=0.1)
    c.add_argument("--ambiguous", type=float, default=0.2)
    c.add_argument("--lambda", dest="lam", type=float, default=1.0, help="Potts weight per property")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out-dir", required=True)
    c.set_defaults(func=cmd_gen_corpus)

    b = sub.add_parser("clique-bench", help="run solvers on a problem file",
                       description=BENCH_HELP)
    b.add_argument("--in", dest="inp", required=True)
    b.add_argument("--solvers", default="alpha,qpass2,expansion,icm,brute",
                   help="comma list from " + ",".join(BENCH_SOLVERS))
    b.add_argument("--out", default="-")
    b.add_argument("--brute-cap", type=int, default=int(ci.BRUTE_FORCE_CAP))
    b.add_argument("--lr-strategy", default="conservative", choices=STRATEGIES)
    b.set_defaults(func=cmd_clique_bench)

    o = sub.add_parser("oracle-check", help="check a solver's invariants on a problem file")
    o.add_argument("--in", dest="inp", required=True)
    o.add_argument("--solver", required=True, choices=BENCH_SOLVERS)
    o.add_argument("--trials", type=int, default=None, help="check only the first T problems")
    o.add_argument("--bound", type=float, default=None, help="required score/optimum ratio")
    o.add_argument("--brute-cap", type=int, default=int(ci.BRUTE_FORCE_CAP))
    o.add_argument("--lr-strategy", default="conservative", choices=STRATEGIES)
    o.set_defaults(func=cmd_oracle_check)

    m = sub.add_parser("collective", help="run collective inference on a model manifest",
                       description="CSV columns: " + ",".join(COLLECTIVE_COLUMNS)
                       + ".  Round 0 is independent Viterbi.")
    m.add_argument("--model", required=True)
    m.add_argument("--rounds", type=int, default=3)
    m.add_argument("--out", default="-")
    m.add_argument("--no-restrict", action="store_true", help="keep full property ranges")
    m.add_argument("--inclusion", action="store_true", help="count EMPTY/BOTTOM in potentials")
    m.add_argument("--damping", type=float, default=None)
    m.add_argument("--solver", default=None, help="clique solver: auto, alpha, brute, lr, malpha")
    m.set_defaults(func=cmd_collective)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
