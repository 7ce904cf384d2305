"""Collective inference over several chains coupled by property cliques.

The cluster graph has one cluster per chain instance and one per property;
a property cluster is joined to every instance in the property's domain.
Messages are vectors over the property's values (range, then EMPTY, BOTTOM):

* instance to property: best chain score per value of that property, plus the
  messages the instance currently receives from its other properties;
* property to instance: the clique max-marginal of the instance's vertex at
  each value (other vertices scored by their own incoming messages), minus the
  instance's own message.

Rounds are synchronous.  After each round every instance picks the value
combination maximising its aggregated table plus incoming messages and
decodes the matching labeling.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import clique_infer as ci
from .chain_mrf import (
    PropertyGrid,
    full_grid,
    msg_instance_to_clique,
    property_messages,
    restrict_ranges,
    viterbi,
)
from .majority_infer import lr_solve, modified_alpha_pass
from .potentials import (
    Entropy,
    LinearMakespan,
    Majority,
    Potts,
    SquareMakespan,
)
from .properties import augment_labels, property_of_labeling

POTENTIAL_KINDS = ("potts", "entropy", "makespan", "makespan2", "majority")


@dataclass(frozen=True)
class PropertyConfig:
    prop: object
    potential: str = "potts"
    lam: float = 1.0
    w_same: float = 1.0
    w_diff: float = 0.0

    def __post_init__(self):
        if self.potential not in POTENTIAL_KINDS:
            raise ValueError(f"unknown potential {self.potential!r}; choose from {POTENTIAL_KINDS}")

    def make_potential(self, R: int, exclusion: bool):
        ignore = (R - 2, R - 1) if exclusion else ()
        if self.potential == "potts":
            return Potts(R, lam=self.lam, ignore=ignore)
        if self.potential == "entropy":
            return Entropy(R, lam=self.lam, ignore=ignore)
        if self.potential == "makespan":
            return LinearMakespan(R, lam=self.lam, ignore=ignore)
        if self.potential == "makespan2":
            return SquareMakespan(R, lam=self.lam, ignore=ignore)
        if len(ignore) >= R:
            return Potts(R, lam=0.0, ignore=ignore)  # no defined values left to vote
        W = np.full((R, R), float(self.w_diff))
        np.fill_diagonal(W, float(self.w_same))
        return Majority(R, W=W, ignore=ignore)


@dataclass
class RoundDiagnostics:
    round: int
    labelings: list
    objective: float
    max_delta: float


@dataclass
class CollectiveModel:
    instances: list
    configs: list
    other: str
    aug: object
    vocabulary: tuple
    dom: list
    incident: list
    grids: list
    full_grids: list
    potentials: list
    full_potentials: list
    aggregated: list
    clique_solver: str = "auto"
    damping: float = 0.0
    msg_ip: dict = field(default_factory=dict)
    msg_pi: dict = field(default_factory=dict)


def build(instances, configs, other: str = "Other", restrict: bool = True,
          exclusion: bool = True, clique_solver: str = "auto", damping: float = 0.0,
          beam_width: int | None = None) -> CollectiveModel:
    """Augment labels, pick property ranges, precompute every instance's
    aggregated table and zero all messages."""
    instances = list(instances)
    configs = list(configs)
    if not instances:
        raise ValueError("need at least one instance")
    labels = instances[0].labels
    if any(inst.labels != labels for inst in instances):
        raise ValueError("all instances must share one label set")
    if not 0.0 <= damping < 1.0:
        raise ValueError("damping must lie in [0, 1)")
    props = [c.prop for c in configs]
    for p in props:
        p.check_labels(labels, other)
    aug = augment_labels(labels, props, other)
    vocabulary = tuple(sorted({t for inst in instances for t in inst.tokens}))
    dom = [[i for i, inst in enumerate(instances) if p.in_domain(inst.tokens)] for p in props]
    incident = [[k for k in range(len(props)) if i in dom[k]] for i in range(len(instances))]
    full = [full_grid(p, labels, other, vocabulary) for p in props]
    if restrict:
        kept = restrict_ranges(instances, props, other, vocabulary)
        grids = [PropertyGrid(p, vals, restricted=len(vals) < g.V)
                 for p, vals, g in zip(props, kept, full)]
    else:
        grids = full
    potentials = [c.make_potential(g.size, exclusion) for c, g in zip(configs, grids)]
    full_pots = [c.make_potential(g.size, exclusion) for c, g in zip(configs, full)]
    aggregated = [property_messages(inst, [props[k] for k in incident[i]], other,
                                    grids=[grids[k] for k in incident[i]], aug=aug,
                                    beam_width=beam_width)
                  for i, inst in enumerate(instances)]
    model = CollectiveModel(instances, configs, other, aug, vocabulary, dom, incident,
                            grids, full, potentials, full_pots, aggregated,
                            clique_solver=clique_solver, damping=damping)
    for k, members in enumerate(dom):
        for i in members:
            model.msg_ip[(i, k)] = np.zeros(grids[k].size)
            model.msg_pi[(i, k)] = np.zeros(grids[k].size)
    return model


def _normalized(m: np.ndarray) -> np.ndarray:
    """Shift so the best finite entry is 0; argmaxes are unchanged and the
    scale stays bounded across rounds."""
    finite = m[np.isfinite(m)]
    return m - finite.max() if finite.size else m


def msg_instance_to_property(model: CollectiveModel, i: int, k: int) -> np.ndarray:
    inc = model.incident[i]
    incoming = [model.msg_pi[(i, k2)] for k2 in inc]
    return _normalized(msg_instance_to_clique(model.aggregated[i], inc.index(k), incoming))


def _finite_rows(rows, potential):
    """Replace ``-inf`` (unreachable values) by a floor no optimum would pick."""
    rows = np.array(rows, dtype=float)
    finite = rows[np.isfinite(rows)]
    if finite.size == 0:
        return np.zeros_like(rows)
    lo, hi = float(finite.min()), float(finite.max())
    floor = lo - 1.0 - (hi - lo) * rows.shape[0] - 2.0 * ci._clique_bound(potential, rows.shape[0])
    return np.where(np.isfinite(rows), rows, floor)


def clique_max_marginals(problem: ci.CliqueProblem, solver: str = "auto") -> np.ndarray:
    """Pinned clique optima for every (vertex, value)."""
    pot = problem.potential
    if solver == "auto":
        solver = "lr" if isinstance(pot, Majority) else "alpha"
    if solver in ("alpha", "brute"):
        return ci.max_marginals(problem, solver)
    fn = {"lr": lambda p: lr_solve(p).assignment,
          "malpha": modified_alpha_pass,
          "qpass2": ci.SOLVERS["qpass2"],
          "icm": ci.icm}.get(solver)
    if fn is None:
        raise ValueError(f"unknown clique solver {solver!r}")
    out = np.empty((problem.n, problem.R))
    for i in range(problem.n):
        for v in range(problem.R):
            out[i, v] = ci.solve_pinned(problem, ci.Pin(i, v), fn).score
    return out


def msg_clique_to_instances(model: CollectiveModel, k: int, incoming=None,
                            normalize: bool = True) -> dict:
    """Messages from property ``k`` to every instance of its domain.  With
    ``normalize=False`` the raw pinned optimum minus the instance's own message."""
    members = model.dom[k]
    incoming = model.msg_ip if incoming is None else incoming
    pot = model.potentials[k]
    rows = _finite_rows([incoming[(i, k)] for i in members], pot)
    problem = ci.CliqueProblem(rows, pot, name=f"property-{k}")
    mm = clique_max_marginals(problem, model.clique_solver)
    post = _normalized if normalize else (lambda m: m)
    return {(i, k): post(mm[r] - rows[r]) for r, i in enumerate(members)}


def msg_clique_to_instance(model: CollectiveModel, k: int, i: int,
                           normalize: bool = True) -> np.ndarray:
    return msg_clique_to_instances(model, k, normalize=normalize)[(i, k)]


def decode(model: CollectiveModel) -> list:
    """Labelings (original label indices) chosen by every instance under the
    current incoming messages."""
    out = []
    for i, agg in enumerate(model.aggregated):
        inc = model.incident[i]
        bonus = np.zeros(agg.M.shape)
        for axis, k in enumerate(inc):
            shape = [1] * agg.M.ndim
            shape[axis] = -1
            bonus = bonus + model.msg_pi[(i, k)].reshape(shape)
        u, _ = agg.best(bonus)
        out.append(agg.decode(u))
    return out


def property_values(model: CollectiveModel, labelings) -> list:
    """Per property: the value of every domain instance's labeling."""
    vals = []
    for k, cfg in enumerate(model.configs):
        vals.append([property_of_labeling(cfg.prop, model.instances[i].tokens,
                                          model.instances[i].label_names(labelings[i]), model.other)
                     for i in model.dom[k]])
    return vals


def objective(model: CollectiveModel, labelings) -> float:
    """Sum of chain scores plus every property clique's potential on the
    histogram of property values (full, unrestricted ranges)."""
    total = sum(inst.score(y) for inst, y in zip(model.instances, labelings))
    for k, values in enumerate(property_values(model, labelings)):
        g = model.full_grids[k]
        hist = np.bincount([g.code_of_value(v) for v in values], minlength=g.size)
        total += model.full_potentials[k].evaluate(hist)
    return float(total)


def run(model: CollectiveModel, rounds: int = 3) -> list:
    """Synchronous message rounds; returns one diagnostics record per round."""
    if rounds < 1:
        raise ValueError("rounds must be at least 1")
    diags = []
    for r in range(1, rounds + 1):
        new_ip = {(i, k): msg_instance_to_property(model, i, k) for (i, k) in model.msg_ip}
        new_pi = {}
        for k in range(len(model.configs)):
            if model.dom[k]:
                new_pi.update(msg_clique_to_instances(model, k, new_ip))
        delta = 0.0
        for key, new in new_pi.items():
            old = model.msg_pi[key]
            if model.damping:
                new = (1.0 - model.damping) * new + model.damping * old
            delta = max(delta, float(np.max(np.abs(new - old))) if new.size else 0.0)
            new_pi[key] = new
        model.msg_ip = new_ip
        model.msg_pi = new_pi
        labs = decode(model)
        diags.append(RoundDiagnostics(r, labs, objective(model, labs), delta))
    return diags


def independent_viterbi(model: CollectiveModel) -> list:
    return [viterbi(inst)[0] for inst in model.instances]
