"""Clique inference for symmetric potentials.

The problem: given vertex potentials ``psi`` (n x R) and a symmetric clique
potential ``C``, find ``argmax_v sum_i psi[i, v_i] + C(hist(v))``.

Solvers here: alpha-pass (and its pinned / max-marginal variants), the
generalised q-pass, alpha-expansion with the dynamic-programming move, ICM and
an exhaustive oracle.  Majority-specific solvers live in ``majority_infer``.

Scores returned on an :class:`Assignment` are always recomputed from scratch by
:func:`evaluate_objective`, so two solvers that return the same labeling report
bit-identical scores.  Sweeps use cheaper incremental scores only to rank
candidates.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .potentials import AdditivePotential, CliquePotential, histogram_of


class SizeError(ValueError):
    """Raised when exhaustive enumeration would exceed the configured cap."""


BRUTE_FORCE_CAP = 2_000_000


@dataclass(frozen=True)
class Assignment:
    values: tuple
    score: float

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class Pin:
    vertex: int
    value: int


@dataclass(frozen=True, eq=False)
class CliqueProblem:
    psi: np.ndarray
    potential: CliquePotential
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=float)
        if psi.ndim != 2:
            raise ValueError("psi must be an n x R table")
        n, R = psi.shape
        if n < 1 or R < 2:
            raise ValueError(f"need n >= 1 and R >= 2, got n={n}, R={R}")
        if not np.all(np.isfinite(psi)):
            raise ValueError("vertex potentials must be finite")
        if self.potential.R != R:
            raise ValueError(f"potential is over {self.potential.R} values, psi has {R}")
        object.__setattr__(self, "psi", psi)

    @property
    def n(self) -> int:
        return self.psi.shape[0]

    @property
    def R(self) -> int:
        return self.psi.shape[1]

    def shifted(self):
        """Copy with ``psi`` shifted to be non-negative, and the per-vertex shift used."""
        c = min(0.0, float(self.psi.min()))
        return CliqueProblem(self.psi - c, self.potential, self.name, dict(self.meta)), -c


def evaluate_objective(problem: CliqueProblem, values) -> float:
    vals = np.asarray(values, dtype=np.int64)
    if vals.shape != (problem.n,):
        raise ValueError(f"assignment has length {vals.size}, expected {problem.n}")
    hist = histogram_of(vals, problem.R)
    vertex = math.fsum(problem.psi[np.arange(problem.n), vals])
    return vertex + problem.potential.evaluate(hist)


def make_assignment(problem: CliqueProblem, values) -> Assignment:
    vals = tuple(int(v) for v in values)
    return Assignment(vals, evaluate_objective(problem, vals))


def _single_vertex(problem: CliqueProblem, allowed=None) -> Assignment:
    # n = 1: the clique score of value v is C(e_v)
    eye = np.eye(problem.R, dtype=np.int64)
    scores = problem.psi[0] + problem.potential.evaluate_batch(eye)
    if allowed is not None:
        mask = np.full(problem.R, -np.inf)
        mask[list(allowed)] = 0.0
        scores = scores + mask
    return make_assignment(problem, [int(np.argmax(scores))])


def _last_argmax(x: np.ndarray) -> np.ndarray:
    """Row-wise argmax with ties going to the highest column index."""
    return x.shape[1] - 1 - np.argmax(x[:, ::-1], axis=1)


def _best_excluding(psi: np.ndarray, alpha: int):
    """Per-vertex best value other than ``alpha`` and its potential.

    Ties go to the highest value index, so a vertex whose private value ties
    with a shared one starts the sweep on its private value.
    """
    masked = psi.copy()
    masked[:, alpha] = -np.inf
    b = _last_argmax(masked)
    return b, masked[np.arange(psi.shape[0]), b]


def _sweep(problem, start_values, movers, targets, start_vertex_score, with_hist=False):
    """Scores of the assignments obtained by moving ``movers[:k]`` to ``targets[:k]``.

    Returns an array of length ``len(movers) + 1`` (entry k = k moves applied).
    Vertex scores and histograms are updated incrementally.
    """
    psi, R = problem.psi, problem.R
    m = len(movers)
    gains = psi[movers, targets] - psi[movers, start_values[movers]]
    vertex = start_vertex_score + np.concatenate(([0.0], np.cumsum(gains)))
    delta = np.zeros((m + 1, R), dtype=np.int64)
    rows = np.arange(1, m + 1)
    np.add.at(delta, (rows, targets), 1)
    np.add.at(delta, (rows, start_values[movers]), -1)
    H = histogram_of(start_values, R)[None, :] + np.cumsum(delta, axis=0)
    scores = vertex + problem.potential.evaluate_batch(H)
    return (scores, H) if with_hist else scores


def _alpha_order(psi, alpha):
    b, bv = _best_excluding(psi, alpha)
    metric = psi[:, alpha] - bv
    order = np.argsort(-metric, kind="stable")
    return b, order


def alpha_pass(problem: CliqueProblem) -> Assignment:
    """For each value alpha and count k, give alpha to the k vertices with the
    largest ``psi[i, alpha] - max_{v != alpha} psi[i, v]`` and every other vertex
    its best non-alpha value; return the best assignment seen.

    Exact for max-label potentials and for any symmetric potential when R = 2.
    """
    if problem.n == 1:
        return _single_vertex(problem)
    psi = problem.psi
    n = problem.n
    best, best_vals = -np.inf, None
    for alpha in range(problem.R):
        b, order = _alpha_order(psi, alpha)
        start_score = psi[np.arange(n), b].sum()
        scores = _sweep(problem, b, order, np.full(n, alpha), start_score)
        k = 1 + int(np.argmax(scores[1:]))
        if scores[k] > best:
            best = scores[k]
            vals = b.copy()
            vals[order[:k]] = alpha
            best_vals = vals
    return make_assignment(problem, best_vals)


def alpha_sweep_states(problem: CliqueProblem, alpha: int):
    """All (alpha, k) sweep states, k = 1..n, with their incremental scores.

    Exposed for checking the incremental bookkeeping against from-scratch
    evaluation.
    """
    psi, n = problem.psi, problem.n
    b, order = _alpha_order(psi, alpha)
    scores = _sweep(problem, b, order, np.full(n, alpha), psi[np.arange(n), b].sum())
    states = []
    for k in range(1, n + 1):
        vals = b.copy()
        vals[order[:k]] = alpha
        states.append((tuple(int(v) for v in vals), float(scores[k])))
    return states


def _pinned_candidates(problem, pin: Pin, orders):
    """Best (score, values) over the pinned sweeps of every alpha, in alpha order."""
    psi, n = problem.psi, problem.n
    i, v = pin.vertex, pin.value
    best, best_vals = -np.inf, None
    for alpha in range(problem.R):
        b, order = orders[alpha]
        rest = order[order != i]
        start = b.copy()
        if alpha == v:
            # pinned vertex leads the sweep; k counts it
            movers = np.concatenate(([i], rest))
            ks = range(1, n + 1)
        else:
            start[i] = v
            movers = rest
            ks = range(1, n)
        if len(ks) == 0:
            continue
        scores = _sweep(problem, start, movers, np.full(len(movers), alpha),
                        psi[np.arange(n), start].sum())
        sub = scores[ks.start:ks.stop]
        j = int(np.argmax(sub))
        if sub[j] > best:
            best = sub[j]
            k = ks.start + j
            vals = start.copy()
            vals[movers[:k]] = alpha
            best_vals = vals
    return best_vals


def _check_pin(problem, pin):
    if not (0 <= pin.vertex < problem.n and 0 <= pin.value < problem.R):
        raise ValueError(f"pin {pin} outside the problem")


def alpha_pass_pinned(problem: CliqueProblem, pin: Pin) -> Assignment:
    """Alpha-pass restricted to assignments with ``v[pin.vertex] == pin.value``."""
    _check_pin(problem, pin)
    if problem.n == 1:
        return make_assignment(problem, [pin.value])
    orders = [_alpha_order(problem.psi, a) for a in range(problem.R)]
    return make_assignment(problem, _pinned_candidates(problem, pin, orders))


def max_marginals(problem: CliqueProblem, solver: str = "alpha") -> np.ndarray:
    """Table whose (i, v) entry is the pinned optimum score with vertex i fixed to v.

    ``solver="alpha"`` runs the pinned alpha-pass (sort orders shared across
    pins); ``"brute"`` enumerates; any other name pins by penalising the row
    and calls the named solver from :data:`SOLVERS`.
    """
    n, R = problem.n, problem.R
    out = np.empty((n, R))
    if solver == "alpha":
        if n == 1:
            eye = np.eye(R, dtype=np.int64)
            return (problem.psi[0] + problem.potential.evaluate_batch(eye))[None, :]
        orders = [_alpha_order(problem.psi, a) for a in range(R)]
        for i in range(n):
            for v in range(R):
                vals = _pinned_candidates(problem, Pin(i, v), orders)
                out[i, v] = evaluate_objective(problem, vals)
        return out
    if solver == "brute":
        return _brute_max_marginals(problem)
    fn = SOLVERS[solver]
    for i in range(n):
        for v in range(R):
            out[i, v] = solve_pinned(problem, Pin(i, v), fn).score
    return out


def _clique_bound(potential: CliquePotential, n: int) -> float:
    """Upper bound on ``|C(h)|`` over histograms of ``n`` items."""
    if potential.family == "majority":
        return float(np.abs(potential.W).max()) * n
    if isinstance(potential, AdditivePotential):
        return float(np.abs(potential.value_tables(n)).max(axis=1).sum())
    if hasattr(potential, "tables"):
        return float(np.abs(potential.tables).max())
    eye_n = np.eye(potential.R, dtype=np.int64) * n
    return float(np.abs(potential.evaluate_batch(eye_n)).max())


def pinned_problem(problem: CliqueProblem, pin: Pin) -> CliqueProblem:
    """Copy of ``problem`` where any value other than ``pin.value`` at the pinned
    vertex costs more than every other choice in the problem can gain."""
    psi = problem.psi
    spread = float(psi.max() - psi.min())
    big = 1.0 + problem.n * spread + 2.0 * _clique_bound(problem.potential, problem.n)
    p = psi.copy()
    row = psi[pin.vertex] - big
    row[pin.value] = psi[pin.vertex, pin.value]
    p[pin.vertex] = row
    return CliqueProblem(p, problem.potential, problem.name, dict(problem.meta))


def solve_pinned(problem: CliqueProblem, pin: Pin, fn) -> Assignment:
    res = fn(pinned_problem(problem, pin))
    vals = list(res.values)
    vals[pin.vertex] = pin.value
    return make_assignment(problem, vals)


def generalized_alpha_pass(problem: CliqueProblem, q: int) -> Assignment:
    """Alpha-pass over value subsets A with |A| <= q.

    For each A and count k, the k vertices with the largest
    ``max_{a in A} psi[i, a] - max_{v not in A} psi[i, v]`` take their best value
    in A, the rest their best value outside A.  Subsets are visited by size,
    then lexicographically, so q = 1 reproduces :func:`alpha_pass` exactly.
    """
    R, n = problem.R, problem.n
    if not 1 <= q <= R:
        raise ValueError(f"q must lie in [1, {R}], got {q}")
    if n == 1:
        return _single_vertex(problem)
    psi = problem.psi
    rows = np.arange(n)
    best, best_vals = -np.inf, None
    for size in range(1, q + 1):
        for A in itertools.combinations(range(R), size):
            A = list(A)
            inside = np.full(R, False)
            inside[A] = True
            pin_ = np.where(inside, psi, -np.inf)
            a_best = np.argmax(pin_, axis=1)
            if size == R:
                vals = a_best
                s = float(psi[rows, vals].sum() + problem.potential.evaluate_batch(
                    histogram_of(vals, R)[None, :])[0])
                if s > best:
                    best, best_vals = s, vals
                continue
            pout = np.where(inside, -np.inf, psi)
            o_best = _last_argmax(pout)
            metric = pin_[rows, a_best] - pout[rows, o_best]
            order = np.argsort(-metric, kind="stable")
            scores = _sweep(problem, o_best, order, a_best[order], psi[rows, o_best].sum())
            k = 1 + int(np.argmax(scores[1:]))
            if scores[k] > best:
                best = scores[k]
                vals = o_best.copy()
                vals[order[:k]] = a_best[order[:k]]
                best_vals = vals
    return make_assignment(problem, best_vals)


def _require_additive(problem):
    if not isinstance(problem.potential, AdditivePotential):
        raise TypeError("alpha-expansion moves need an additive potential "
                        "(majority moves live in majority_infer)")


def expansion_move(problem: CliqueProblem, current: Assignment, alpha: int) -> Assignment:
    """Optimal single alpha-expansion of ``current``.

    Within each value v != alpha the vertices to switch are a prefix of the
    list sorted by ``psi[i, alpha] - psi[i, v]``; how many to take from each list
    is decided by a dynamic program over values.
    """
    _require_additive(problem)
    n, R, psi = problem.n, problem.R, problem.psi
    f = problem.potential.value_tables(n)
    cur = np.asarray(current.values, dtype=np.int64)
    at_alpha = np.flatnonzero(cur == alpha)
    n_alpha = len(at_alpha)

    # D[k]: best score of the non-alpha part with k vertices switched so far
    D = np.array([0.0])
    choices = []
    lists = []
    for v in range(R):
        if v == alpha:
            continue
        members = np.flatnonzero(cur == v)
        c = len(members)
        if c == 0:
            continue
        gain = psi[members, alpha] - psi[members, v]
        S = members[np.argsort(-gain, kind="stable")]
        lists.append(S)
        # g[l]: f_v(c - l) + top-l at alpha + rest at v
        stay = psi[S, v]
        go = psi[S, alpha]
        g = np.array([f[v, c - l] + go[:l].sum() + stay[l:].sum() for l in range(c + 1)])
        new = np.full(len(D) + c, -np.inf)
        arg = np.zeros(len(D) + c, dtype=np.int64)
        for l in range(c + 1):
            cand = D + g[l]
            seg = new[l:l + len(D)]
            better = cand > seg
            seg[better] = cand[better]
            arg[l:l + len(D)][better] = l
        D = new
        choices.append(arg)
    total = D + f[alpha, n_alpha + np.arange(len(D))] + psi[at_alpha, alpha].sum()
    k = int(np.argmax(total))
    vals = cur.copy()
    for S, arg in zip(reversed(lists), reversed(choices)):
        l = int(arg[k])
        vals[S[:l]] = alpha
        k -= l
    cand = make_assignment(problem, vals)
    return cand if cand.score > current.score else current


def alpha_expansion(problem: CliqueProblem, init: Assignment | None = None) -> Assignment:
    """Repeat expansion moves over all values until a full round changes nothing.

    Default start: every vertex takes the first value.
    """
    _require_additive(problem)
    cur = init if init is not None else make_assignment(problem, [0] * problem.n)
    changed = True
    while changed:
        changed = False
        for alpha in range(problem.R):
            nxt = expansion_move(problem, cur, alpha)
            if nxt.score > cur.score:
                cur, changed = nxt, True
    return cur


def icm(problem: CliqueProblem, init: Assignment | None = None, max_sweeps: int = 1000) -> Assignment:
    """Iterated conditional modes: ascending-index round robin of single-vertex
    best responses until a sweep changes nothing.  Default start is the
    per-vertex argmax of ``psi``."""
    n, R, psi = problem.n, problem.R, problem.psi
    if init is None:
        vals = np.argmax(psi, axis=1)
    else:
        vals = np.asarray(init.values, dtype=np.int64).copy()
    hist = histogram_of(vals, R)
    eye = np.eye(R, dtype=np.int64)
    cur_score = evaluate_objective(problem, vals)
    tol = 1e-12 * (1.0 + abs(cur_score))
    for _ in range(max_sweeps):
        changed = False
        for i in range(n):
            old = vals[i]
            H = hist - eye[old] + eye
            s = psi[i] + problem.potential.evaluate_batch(H)
            v = int(np.argmax(s))
            if v != old and s[v] > s[old] + tol:
                hist += eye[v] - eye[old]
                vals[i] = v
                changed = True
        if not changed:
            break
    return make_assignment(problem, vals)


def _enumerate_scores(problem, chunk=1 << 16):
    """Yield (start index, value matrix, approximate scores) in lexicographic order."""
    n, R = problem.n, problem.R
    total = R ** n
    powers = R ** np.arange(n - 1, -1, -1, dtype=np.int64)
    rows = np.arange(n)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        V = (idx[:, None] // powers[None, :]) % R
        vs = problem.psi[rows[None, :], V].sum(axis=1)
        H = np.zeros((len(idx), R), dtype=np.int64)
        for j in range(n):
            np.add.at(H, (np.arange(len(idx)), V[:, j]), 1)
        yield start, V, vs + problem.potential.evaluate_batch(H)


def brute_force(problem: CliqueProblem, cap: int = BRUTE_FORCE_CAP, allowed=None) -> Assignment:
    """Exact optimum by enumeration; ties go to the lexicographically smallest
    assignment.  ``allowed`` optionally restricts the enumeration with a
    predicate on value rows (vectorised: takes an (m, n) array, returns a mask)."""
    n, R = problem.n, problem.R
    if R ** n > cap:
        raise SizeError(f"R^n = {R}^{n} exceeds the enumeration cap {cap}")
    cands = []
    top = -np.inf
    for _, V, s in _enumerate_scores(problem):
        if allowed is not None:
            s = np.where(allowed(V), s, -np.inf)
        m = s.max()
        if m == -np.inf:
            continue
        top = max(top, m)
        tol = 1e-9 * (1.0 + abs(top))
        keep = np.flatnonzero(s >= top - tol)
        cands = [c for c in cands if c[0] >= top - tol]
        cands.extend((s[k], tuple(int(x) for x in V[k])) for k in keep)
    if not cands:
        raise ValueError("no assignment satisfies the restriction")
    scored = [(evaluate_objective(problem, vals), vals) for _, vals in cands]
    best = max(sc for sc, _ in scored)
    vals = min(v for sc, v in scored if sc == best)
    return Assignment(vals, best)


def _brute_max_marginals(problem: CliqueProblem) -> np.ndarray:
    n, R = problem.n, problem.R
    if R ** n > BRUTE_FORCE_CAP:
        raise SizeError("clique too large for exhaustive max-marginals")
    out = np.full((n, R), -np.inf)
    for _, V, s in _enumerate_scores(problem):
        for i in range(n):
            np.maximum.at(out[i], V[:, i], s)
    return out


def _solve_expansion(problem):
    return alpha_expansion(problem)


SOLVERS = {
    "alpha": alpha_pass,
    "qpass2": lambda p: generalized_alpha_pass(p, min(2, p.R)),
    "expansion": _solve_expansion,
    "icm": icm,
    "brute": brute_force,
}
