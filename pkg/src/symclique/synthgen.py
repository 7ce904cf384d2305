"""Seeded synthetic data: clique benchmark suites and a small chain corpus.

Every problem draws from its own PCG64 stream seeded by ``(seed, index)``, so a
suite regenerates bit-identically and any single problem can be rebuilt alone.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain_mrf import ChainInstance
from .clique_infer import CliqueProblem
from .potentials import Entropy, LinearMakespan, Majority, MaxLabelTable, Potts, SquareMakespan

FAMILIES = ("potts", "entropy", "makespan", "makespan2", "maj-dense", "maj-sparse", "maxlabel")
MAJORITY_FAMILIES = ("maj-dense", "maj-sparse")


def rng_for(seed: int, *index) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, index)])))


def lambda_grid(lo: float, hi: float, step: float, closed: bool = True) -> np.ndarray:
    """Evenly spaced weights from ``lo`` to ``hi``; ``closed=False`` drops ``hi``.

    The count is rounded so that decimal steps such as 0.05 do not lose an
    endpoint to floating-point drift.
    """
    if step <= 0:
        raise ValueError("lambda step must be positive")
    if hi < lo:
        raise ValueError("lambda range is empty")
    count = int(round((hi - lo) / step))
    if closed:
        count += 1
    if count < 1:
        raise ValueError("lambda range is empty")
    return np.round(lo + step * np.arange(count), 12)


@dataclass(frozen=True)
class CliqueDatasetSpec:
    family: str
    n: int = 100
    R: int = 24
    lam_lo: float = 0.8
    lam_hi: float = 1.2
    lam_step: float = 0.05
    per_lambda: int = 25
    seed: int = 0
    closed: bool = True
    conll_scaling: bool = False
    psi_high: float = 2.0
    sparse_zero_fraction: float = 0.7

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.n < 1 or self.R < 2:
            raise ValueError("need n >= 1 and R >= 2")
        if self.per_lambda < 1:
            raise ValueError("per_lambda must be positive")

    def lambdas(self) -> np.ndarray:
        return lambda_grid(self.lam_lo, self.lam_hi, self.lam_step, self.closed)


def symmetric_uniform(rng, R, high):
    U = rng.uniform(0.0, high, size=(R, R))
    return np.triu(U) + np.triu(U, 1).T


def make_potential(family: str, R: int, lam: float, rng, zero_fraction=0.7, n: int = 1):
    if family == "potts":
        return Potts(R, lam=lam)
    if family == "entropy":
        return Entropy(R, lam=lam)
    if family == "makespan":
        return LinearMakespan(R, lam=lam)
    if family == "makespan2":
        return SquareMakespan(R, lam=lam)
    if family == "maj-dense":
        W = symmetric_uniform(rng, R, 2.0 * lam)
        np.fill_diagonal(W, lam)
        return Majority(R, W=W)
    if family == "maj-sparse":
        W = symmetric_uniform(rng, R, 2.0 * lam)
        keep = np.triu(rng.uniform(size=(R, R)) >= zero_fraction)
        keep = keep | keep.T
        return Majority(R, W=np.where(keep, W, 0.0))
    if family == "maxlabel":
        # non-decreasing tables with f_v(0) = 0 and increments in [0, lam]
        steps = rng.uniform(0.0, lam, size=(R, n))
        return MaxLabelTable(R, tables=np.concatenate([np.zeros((R, 1)), np.cumsum(steps, axis=1)], axis=1))
    raise ValueError(f"unknown family {family!r}")


def gen_clique_dataset(spec: CliqueDatasetSpec) -> list:
    problems = []
    idx = 0
    for lam in spec.lambdas():
        for _ in range(spec.per_lambda):
            rng = rng_for(spec.seed, idx)
            psi = rng.uniform(0.0, spec.psi_high, size=(spec.n, spec.R))
            lam_eff = 0.9 / spec.n if spec.conll_scaling else float(lam)
            pot = make_potential(spec.family, spec.R, lam_eff, rng, spec.sparse_zero_fraction, spec.n)
            problems.append(CliqueProblem(psi, pot, name=f"{spec.family}-{idx}",
                                          meta={"family": spec.family, "lambda": lam_eff,
                                                "seed": spec.seed, "index": idx}))
            idx += 1
    return problems


# ---------------------------------------------------------------------------
# planted chain corpus
# ---------------------------------------------------------------------------

DEFAULT_TEMPLATES = (
    ("Author", "Title", "Venue"),
    ("Title", "Author", "Venue"),
    ("Author", "Venue", "Title"),
)


@dataclass(frozen=True)
class CorpusSpec:
    """Records split into labeled segments whose order depends on the domain.

    Node potentials put ``strength`` on the gold label plus Gaussian noise of
    scale ``noise * strength``; edges reward staying in a label by
    ``stay_bonus``.  Ambiguous instances see the first two segments with
    swapped preferences (margin ``ambiguity`` per token), so only agreement
    with the rest of the domain recovers the gold order.
    """
    num_domains: int = 3
    instances_per_domain: int = 5
    templates: tuple = DEFAULT_TEMPLATES
    other: str = "Other"
    noise: float = 0.0
    ambiguous_fraction: float = 0.2
    segment_len: tuple = (1, 3)
    vocab_per_label: int = 5
    separator_prob: float = 0.5
    strength: float = 2.0
    ambiguity: float = 0.3
    stay_bonus: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.noise <= 1.0:
            raise ValueError("noise must lie in [0, 1]")
        if not 0.0 <= self.ambiguous_fraction <= 1.0:
            raise ValueError("ambiguous_fraction must lie in [0, 1]")
        if self.num_domains < 1 or self.instances_per_domain < 1:
            raise ValueError("need at least one domain and one instance per domain")
        if not self.templates or any(len(t) < 2 for t in self.templates):
            raise ValueError("templates need at least two labels each")
        if any(self.other in t for t in self.templates):
            raise ValueError("templates must not contain the Other label")
        lo, hi = self.segment_len
        if lo < 1 or hi < lo:
            raise ValueError("segment lengths must satisfy 1 <= lo <= hi")

    def labels(self) -> tuple:
        seen = []
        for t in self.templates:
            seen.extend(l for l in t if l not in seen)
        return tuple(seen) + (self.other,)


@dataclass
class SyntheticCorpus:
    instances: list
    gold: list
    domains: list
    ambiguous: list
    templates: list

    def domain_members(self, d: int) -> list:
        return [i for i, dd in enumerate(self.domains) if dd == d]


def gen_corpus(spec: CorpusSpec) -> SyntheticCorpus:
    labels = spec.labels()
    L = len(labels)
    oi = labels.index(spec.other)
    lo, hi = spec.segment_len
    instances, gold, domains, ambiguous, templates = [], [], [], [], []
    idx = 0
    for d in range(spec.num_domains):
        drng = rng_for(spec.seed, d)
        template = spec.templates[int(drng.integers(len(spec.templates)))]
        templates.append(template)
        n_amb = int(round(spec.ambiguous_fraction * spec.instances_per_domain))
        amb = set(drng.choice(spec.instances_per_domain, size=n_amb, replace=False).tolist())
        for r in range(spec.instances_per_domain):
            rng = rng_for(spec.seed, d, r)
            y, toks, seg_of = [], [], []
            for s, lab in enumerate(template):
                if s and rng.uniform() < spec.separator_prob:
                    y.append(oi)
                    toks.append(",")
                    seg_of.append(-1)
                for _ in range(int(rng.integers(lo, hi + 1))):
                    y.append(labels.index(lab))
                    toks.append(f"{lab.lower()}{int(rng.integers(spec.vocab_per_label))}")
                    seg_of.append(s)
            T = len(y)
            node = np.zeros((T, L))
            node[np.arange(T), y] = spec.strength
            if r in amb:
                a, b = labels.index(template[0]), labels.index(template[1])
                for t, s in enumerate(seg_of):
                    if s in (0, 1):
                        node[t, a] = node[t, b] = spec.strength
                        node[t, b if s == 0 else a] += spec.ambiguity
            node += spec.noise * spec.strength * rng.standard_normal((T, L))
            edge = np.zeros((max(T - 1, 0), L, L))
            edge[:, np.arange(L), np.arange(L)] = spec.stay_bonus
            instances.append(ChainInstance(tuple(toks), node, edge, labels, name=f"d{d}-r{r}"))
            gold.append(y)
            domains.append(d)
            if r in amb:
                ambiguous.append(idx)
            idx += 1
    return SyntheticCorpus(instances, gold, domains, ambiguous, templates)
