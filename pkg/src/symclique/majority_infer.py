"""MAP inference for linear majority potentials.

With the majority value fixed to ``alpha`` the clique term becomes linear in the
assignment: every vertex at value v earns ``W[alpha, v]`` on top of its own
potential.  All three solvers below exploit this:

* :func:`modified_alpha_pass` sweeps like alpha-pass on the merged potentials
  and keeps only candidates whose majority really is ``alpha``;
* :func:`exact_majority` enumerates (alpha, k) and solves each as a
  degree-constrained bipartite matching with a min-cost-flow routine;
* :func:`lr_solve` relaxes the "alpha is the majority" constraints with
  non-negative multipliers and tightens the resulting bound.

Values listed in the potential's ``ignore`` set neither vote for the majority
nor earn a ``W`` bonus; they are uncapped in the exact solver and carry no
multiplier in the relaxation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .clique_infer import (
    Assignment,
    CliqueProblem,
    _best_excluding,
    _sweep,
    make_assignment,
)
from .potentials import Majority, histogram_of

STRATEGIES = ("subgradient", "golden", "conservative")


def majority_problem(psi, W, name: str = "", ignore=()) -> CliqueProblem:
    psi = np.asarray(psi, dtype=float)
    return CliqueProblem(psi, Majority(psi.shape[1], W=W, ignore=tuple(ignore)), name)


def _require_majority(problem):
    if not isinstance(problem.potential, Majority):
        raise TypeError("majority solvers need a Majority potential")


def merged_potentials(problem: CliqueProblem, alpha: int) -> np.ndarray:
    """``psi[i, v] + W[alpha, v]`` with no bonus on ignored values."""
    pot = problem.potential
    wrow = np.zeros(problem.R)
    kept = pot.kept
    wrow[kept] = pot.W[alpha, kept]
    return problem.psi + wrow[None, :]


# ---------------------------------------------------------------------------
# modified alpha-pass
# ---------------------------------------------------------------------------

def modified_alpha_pass(problem: CliqueProblem) -> Assignment:
    """Alpha-pass on the merged potentials ``psi + W[alpha]``, discarding every
    sweep state whose majority value is not ``alpha``."""
    _require_majority(problem)
    pot = problem.potential
    n, R = problem.n, problem.R
    if n == 1:
        scores = [problem.psi[0, v] + (pot.W[v, v] if v in set(pot.kept) else 0.0)
                  for v in range(R)]
        return make_assignment(problem, [int(np.argmax(scores))])
    rows = np.arange(n)
    best, best_vals = -np.inf, None
    for alpha in pot.kept:
        alpha = int(alpha)
        A = merged_potentials(problem, alpha)
        b, bv = _best_excluding(A, alpha)
        order = np.argsort(-(A[:, alpha] - bv), kind="stable")
        scores, H = _sweep(problem, b, order, np.full(n, alpha),
                           problem.psi[rows, b].sum(), with_hist=True)
        kept = pot.kept
        maj = kept[np.argmax(H[:, kept], axis=1)]
        ok = maj == alpha
        ok[0] = False
        if not ok.any():
            continue
        masked = np.where(ok, scores, -np.inf)
        k = int(np.argmax(masked))
        if masked[k] > best:
            best = masked[k]
            vals = b.copy()
            vals[order[:k]] = alpha
            best_vals = vals
    return make_assignment(problem, best_vals)


# ---------------------------------------------------------------------------
# exact solver: (alpha, k) subproblems as degree-constrained matching
# ---------------------------------------------------------------------------

def min_cost_assignment(gain: np.ndarray, caps: np.ndarray, exact_value: int,
                        exact_count: int):
    """Maximise ``sum_i gain[i, z_i]`` with ``count(v) <= caps[v]`` and exactly
    ``exact_count`` vertices at ``exact_value``.

    Successive shortest paths on the vertex/value transportation network.  The
    residual graph is kept on value nodes only: moving a vertex j from value v
    to value u costs ``cost[j, u] - cost[j, v]``, and the cheapest such vertex
    per (v, u) pair is the only one a shortest path can use.  The exact count is
    enforced by a bonus on the ``exact_value`` sink edge large enough that any
    min-cost flow fills it whenever that is feasible.

    Returns the value array, or None when the constraints cannot be met.
    """
    n, R = gain.shape
    caps = np.asarray(caps, dtype=np.int64).copy()
    caps[exact_value] = exact_count
    if caps.sum() < n:
        return None
    cost = -gain
    spread = float(cost.max() - cost.min())
    bonus = 1.0 + 2.0 * n * spread
    term = np.zeros(R)
    term[exact_value] = -bonus
    eps = 1e-12 * (1.0 + bonus)
    z = np.full(n, -1, dtype=np.int64)
    cnt = np.zeros(R, dtype=np.int64)
    cols = np.arange(R)
    for _ in range(n):
        un = np.flatnonzero(z < 0)
        si = np.argmin(cost[un], axis=0)
        d = cost[un][si, cols].copy()
        start = un[si]
        pred_v = np.full(R, -1, dtype=np.int64)
        pred_j = np.full(R, -1, dtype=np.int64)
        asg = np.flatnonzero(z >= 0)
        if asg.size:
            D = cost[asg] - cost[asg, z[asg]][:, None]
            E = np.full((R, R), np.inf)
            Earg = np.zeros((R, R), dtype=np.int64)
            za = z[asg]
            for v in np.unique(za):
                sel = np.flatnonzero(za == v)
                a = np.argmin(D[sel], axis=0)
                E[v] = D[sel][a, cols]
                Earg[v] = asg[sel][a]
            np.fill_diagonal(E, np.inf)
            for _ in range(R):
                cand = d[:, None] + E
                bv = np.argmin(cand, axis=0)
                bc = cand[bv, cols]
                upd = np.flatnonzero(bc < d - eps)
                if upd.size == 0:
                    break
                d[upd] = bc[upd]
                pred_v[upd] = bv[upd]
                pred_j[upd] = Earg[bv[upd], upd]
        total = np.where(cnt < caps, d + term, np.inf)
        u = int(np.argmin(total))
        if not np.isfinite(total[u]):
            return None
        for _ in range(R + 1):
            v = int(pred_v[u])
            if v < 0:
                break
            z[pred_j[u]] = u
            cnt[u] += 1
            cnt[v] -= 1
            u = v
        else:
            raise RuntimeError("cycle in shortest-path tree")
        z[start[u]] = u
        cnt[u] += 1
    if cnt[exact_value] != exact_count:
        return None
    return z


def _caps(problem: CliqueProblem, alpha: int, k: int) -> np.ndarray:
    n, R = problem.n, problem.R
    caps = np.full(R, n, dtype=np.int64)
    for v in problem.potential.kept:
        if v < alpha:
            caps[v] = max(0, k - 1)
        elif v > alpha:
            caps[v] = k
    caps[alpha] = k
    return caps


def _k_range(problem: CliqueProblem, alpha: int) -> range:
    kept = problem.potential.kept
    lo = 1
    if len(kept) < problem.R and alpha == kept[0]:
        lo = 0  # every vertex on an ignored value: the lowest kept value wins the empty vote
    return range(lo, problem.n + 1)


def exact_majority_subproblem(problem: CliqueProblem, alpha: int, k: int):
    """Best assignment with exactly ``k`` vertices at ``alpha`` and ``alpha`` the
    majority under the lowest-index tie rule; None when infeasible."""
    _require_majority(problem)
    if alpha not in set(int(v) for v in problem.potential.kept):
        raise ValueError(f"value {alpha} is ignored and cannot be the majority")
    if not 0 <= k <= problem.n:
        raise ValueError(f"k must lie in [0, {problem.n}]")
    if k == 0 and k not in _k_range(problem, alpha):
        return None
    z = min_cost_assignment(merged_potentials(problem, alpha), _caps(problem, alpha, k), alpha, k)
    return None if z is None else make_assignment(problem, z)


def _relaxed(A, alpha):
    """Per-k relaxation (no caps on other values): the k vertices with the largest
    advantage for alpha take it, the rest their best other value."""
    b, bv = _best_excluding(A, alpha)
    order = np.argsort(-(A[:, alpha] - bv), kind="stable")
    gains = (A[:, alpha] - bv)[order]
    bounds = bv.sum() + np.concatenate(([0.0], np.cumsum(gains)))
    return b, order, bounds


def exact_majority(problem: CliqueProblem, alpha: int | None = None) -> Assignment:
    """Global optimum of a majority clique problem.

    With ``alpha`` given, the optimum among assignments whose majority is
    ``alpha``.  (alpha, k) pairs are visited in decreasing order of their
    uncapped relaxation, and the search stops once no remaining relaxation can
    beat the best assignment found.
    """
    _require_majority(problem)
    kept = [int(v) for v in problem.potential.kept]
    alphas = kept if alpha is None else [int(alpha)]
    if alpha is not None and alpha not in kept:
        raise ValueError(f"value {alpha} is ignored and cannot be the majority")
    pairs = []
    relax = {}
    for a in alphas:
        A = merged_potentials(problem, a)
        b, order, bounds = _relaxed(A, a)
        relax[a] = (A, b, order)
        for k in _k_range(problem, a):
            caps = _caps(problem, a, k)
            if caps.sum() < problem.n:
                continue
            pairs.append((-bounds[k], a, k))
    pairs.sort()
    best = None
    for negb, a, k in pairs:
        if best is not None and -negb < best.score - 1e-9 * (1.0 + abs(best.score)):
            break
        A, b, order = relax[a]
        vals = b.copy()
        vals[order[:k]] = a
        hist = histogram_of(vals, problem.R)
        caps = _caps(problem, a, k)
        if np.all(hist <= caps) and hist[a] == k:
            cand = make_assignment(problem, vals)
        else:
            cand = exact_majority_subproblem(problem, a, k)
            if cand is None:
                continue
        if best is None or cand.score > best.score or (
                cand.score == best.score and cand.values < best.values):
            best = cand
    if best is None:
        raise ValueError("no feasible assignment")
    return best


# ---------------------------------------------------------------------------
# Lagrangian relaxation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Multipliers:
    gamma: np.ndarray
    alpha: int

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        if np.any(g < 0):
            raise ValueError("multipliers must be non-negative")
        object.__setattr__(self, "gamma", g)


@dataclass(frozen=True)
class LrConfig:
    max_iters: int = 100
    tolerance: float = 1e-2
    strategy: str = "conservative"
    step_scale: float = 1.0
    golden_iters: int = 24

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")


@dataclass(frozen=True)
class LrResult:
    assignment: Assignment
    bound: float
    converged: bool
    iterations: int
    trace: list = field(default_factory=list, compare=False)


def _relaxed_potentials(A, gamma, alpha):
    P = A - gamma[None, :]
    P[:, alpha] += gamma.sum()
    return P


def _argmax_prefer(P, alpha):
    z = np.argmax(P, axis=1)
    top = P[np.arange(P.shape[0]), z]
    z[P[:, alpha] == top] = alpha
    return z, top


class _Relaxation:
    """Per-alpha data shared by the relaxation helpers."""

    def __init__(self, problem: CliqueProblem, alpha: int):
        self.problem = problem
        self.alpha = alpha
        self.A = merged_potentials(problem, alpha)
        self.kept_mask = np.zeros(problem.R, dtype=bool)
        self.kept_mask[problem.potential.kept] = True

    def solve(self, gamma):
        P = _relaxed_potentials(self.A, gamma, self.alpha)
        z, top = _argmax_prefer(P, self.alpha)
        return math.fsum(top), z

    def L_only(self, gamma):
        return math.fsum(_relaxed_potentials(self.A, gamma, self.alpha).max(axis=1))

    def violations(self, z):
        hist = np.bincount(z, minlength=self.problem.R)
        d = np.where(self.kept_mask, hist - hist[self.alpha], 0).astype(float)
        d[self.alpha] = 0.0
        return hist, d

    def worst(self, gamma, z):
        hist, d = self.violations(z)
        if d.max() > 0:
            v = int(np.argmax(d))
            return v, float(d[v]), True
        slack = gamma * (-d)
        v = int(np.argmax(slack))
        return v, float(slack[v]), False

    def thresholds(self, gamma, v):
        """Entry (i, u): the multiplier value for ``v`` at which ``u`` ties ``v``
        in vertex i's relaxed potentials (only ``v`` and ``alpha`` move with it)."""
        A, alpha = self.A, self.alpha
        T = A[:, [v]] - A + gamma[None, :]
        rest = gamma.sum() - gamma[v]
        T[:, alpha] = 0.5 * (A[:, v] - A[:, alpha] - rest)
        T[:, v] = np.nan
        return T

    def upper_limit(self, gamma, z, v):
        hist, d = self.violations(z)
        if d[v] <= 0:
            return float(gamma[v])
        T = self.thresholds(gamma, v)
        return float(np.nanmin(T[z == v], axis=1).max())

    def update(self, gamma, z, strategy, iteration, cfg):
        alpha = self.alpha
        gamma = gamma.copy()
        if strategy == "subgradient":
            hist, d = self.violations(z)
            eta = cfg.step_scale / (1.0 + iteration)
            gamma = np.maximum(0.0, gamma + eta * d)
            gamma[alpha] = 0.0
            return gamma
        v, viol, over = self.worst(gamma, z)
        if viol <= 0:
            return gamma
        if strategy == "golden":
            gamma[v] = self._golden(gamma, v, self.upper_limit(gamma, z, v), cfg.golden_iters)
            return gamma
        if strategy != "conservative":
            raise ValueError(f"unknown strategy {strategy!r}")
        T = self.thresholds(gamma, v)
        tol = 1e-12 * (1.0 + abs(gamma[v]))
        if over:
            # raise until the easiest vertex on v leaves it
            first = np.nanmin(T[z == v], axis=1)
            ahead = first[first > gamma[v] + tol]
            if ahead.size:
                gamma[v] = float(ahead.min())
        else:
            # lower until one more vertex would rather be at v
            off = np.flatnonzero(z != v)
            t = T[off, z[off]]
            below = t[t < gamma[v] - tol]
            gamma[v] = max(0.0, float(below.max())) if below.size else 0.0
        return gamma

    def _golden(self, gamma, v, ub, iters):
        g = gamma.copy()

        def L_at(x):
            g[v] = x
            return self.L_only(g)

        lo, hi = 0.0, ub
        phi = (math.sqrt(5.0) - 1.0) / 2.0
        best_x, best_L = gamma[v], L_at(gamma[v])
        c, e = hi - phi * (hi - lo), lo + phi * (hi - lo)
        fc, fe = L_at(c), L_at(e)
        for _ in range(iters):
            for x, fx in ((c, fc), (e, fe)):
                if fx < best_L:
                    best_x, best_L = x, fx
            # ties keep the lower sub-interval
            if fc <= fe:
                hi, e, fe = e, c, fc
                c = hi - phi * (hi - lo)
                fc = L_at(c)
            else:
                lo, c, fc = c, e, fe
                e = lo + phi * (hi - lo)
                fe = L_at(e)
        return max(0.0, best_x)

    def repair(self, z):
        """Move the vertices that lose least into alpha until it is the majority."""
        alpha, A = self.alpha, self.A
        vals = np.array(z, dtype=np.int64)
        rows = np.arange(len(vals))
        idx = np.arange(self.problem.R)
        for _ in range(len(vals) + 1):
            hist = np.bincount(vals, minlength=self.problem.R)
            bad = self.kept_mask & (idx != alpha) & (hist > 0) & (
                (hist > hist[alpha]) | ((hist == hist[alpha]) & (idx < alpha)))
            if not bad.any():
                break
            cand = rows[bad[vals]]
            regret = A[cand, vals[cand]] - A[cand, alpha]
            vals[cand[int(np.argmin(regret))]] = alpha
        return vals


def compute_L(problem: CliqueProblem, mult: Multipliers):
    """Lagrangian value and a maximising assignment (ties prefer alpha, then the
    lowest value index)."""
    _require_majority(problem)
    L, z = _Relaxation(problem, mult.alpha).solve(mult.gamma)
    return L, make_assignment(problem, z)


def _values(z):
    return np.asarray(z.values if isinstance(z, Assignment) else z, dtype=np.int64)


def upper_limit(problem, mult: Multipliers, z, v: int) -> float:
    """Largest useful multiplier for ``v``: its current value when ``v`` is not
    over-counted, otherwise the point where every vertex on ``v`` has left."""
    return _Relaxation(problem, mult.alpha).upper_limit(mult.gamma, _values(z), v)


def worst_violator(problem, mult: Multipliers, z):
    """(value, violation, over_counted).  Over-counted values (more vertices than
    alpha) come first; otherwise the largest complementary-slackness gap."""
    return _Relaxation(problem, mult.alpha).worst(mult.gamma, _values(z))


def update_gamma(problem: CliqueProblem, mult: Multipliers, z, strategy: str,
                 iteration: int = 0, config: LrConfig | None = None) -> Multipliers:
    """One multiplier update.

    ``subgradient``: every multiplier moves along the violation vector with step
    ``step_scale / (1 + iteration)``.  ``golden``: line search of the worst
    violator's multiplier over ``[0, upper_limit]``.  ``conservative``: move the
    worst violator's multiplier just far enough to flip one vertex.
    """
    cfg = config or LrConfig(strategy=strategy)
    rel = _Relaxation(problem, mult.alpha)
    return Multipliers(rel.update(mult.gamma, _values(z), strategy, iteration, cfg), mult.alpha)


def repair(problem: CliqueProblem, z, alpha: int) -> Assignment:
    """Move the vertices that lose least into ``alpha`` until it is the majority."""
    return make_assignment(problem, _Relaxation(problem, alpha).repair(_values(z)))


def lr_solve(problem: CliqueProblem, config: LrConfig | None = None) -> LrResult:
    """Lagrangian relaxation over every candidate majority value.

    Returns the best assignment seen (each relaxed solution and its repaired
    version are scored with the true objective) and the upper bound
    ``max_alpha min_iter L``.  A run for one alpha also stops early when the
    multipliers revisit an earlier state, since the sequence would then cycle.
    """
    _require_majority(problem)
    cfg = config or LrConfig()
    pot = problem.potential
    psi = problem.psi
    rows = np.arange(problem.n)
    kept = pot.kept

    def quick_score(vals):
        hist = np.bincount(vals, minlength=problem.R)
        a = kept[int(np.argmax(hist[kept]))]
        return psi[rows, vals].sum() + pot.W[a, kept] @ hist[kept]

    best = None
    bound = -np.inf
    all_converged = True
    total_iters = 0
    trace = []
    for alpha in kept:
        alpha = int(alpha)
        rel = _Relaxation(problem, alpha)
        gamma = np.zeros(problem.R)
        cand = make_assignment(problem, [alpha] * problem.n)
        if best is None or cand.score > best.score:
            best = cand
        L_min = np.inf
        converged = False
        seen = set()
        for it in range(cfg.max_iters):
            total_iters += 1
            L, z = rel.solve(gamma)
            L_min = min(L_min, L)
            slack = 1e-9 * (1.0 + abs(best.score))
            for vals in (z, rel.repair(z)):
                if quick_score(vals) > best.score - slack:
                    c = make_assignment(problem, vals)
                    if c.score > best.score:
                        best = c
            v, viol, over = rel.worst(gamma, z)
            trace.append((alpha, it, L, v, viol))
            limit = 0.0 if over else cfg.tolerance * float(gamma[v])
            if viol <= limit:
                converged = True
                break
            seen.add(gamma.tobytes())
            gamma = rel.update(gamma, z, cfg.strategy, it + 1, cfg)
            if gamma.tobytes() in seen:
                break
        all_converged &= converged
        bound = max(bound, L_min)
    return LrResult(best, float(bound), all_converged, total_iters, trace)
