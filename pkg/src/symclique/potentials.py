"""Symmetric (cardinality-based) clique potentials.

Every potential here is a function of the count histogram ``n = (n_0, ..., n_{R-1})``
only.  Three families are supported:

* max-label:  ``C(n) = max_v f_v(n_v)``   (tables, linear and square makespan)
* additive:   ``C(n) = sum_v f_v(n_v)``   (tables, Potts, entropy)
* majority:   ``C(n) = sum_v W[a, v] n_v`` with ``a = argmax_v n_v``

A potential may be told to ``ignore`` some value indices.  Counts of ignored
values are dropped before the formula is applied, which is how the collective
engine keeps the empty / conflict property values from voting.
"""
from __future__ import annotations

import math
from functools import cached_property
from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy


class DimensionError(ValueError):
    """Histogram length does not match the potential's value count."""


def histogram_of(values, R: int) -> np.ndarray:
    """Count how many entries of ``values`` take each value in ``range(R)``."""
    arr = np.asarray(values, dtype=np.int64).ravel()
    if arr.size and (arr.min() < 0 or arr.max() >= R):
        raise ValueError(f"assignment has values outside range({R})")
    return np.bincount(arr, minlength=R).astype(np.int64)


def _check_monotone(tables: np.ndarray) -> None:
    if tables.ndim != 2:
        raise ValueError("per-value tables must be a 2-d array (R x n+1)")
    if np.any(np.diff(tables, axis=1) < 0):
        raise ValueError("per-value tables must be non-decreasing in the count")


@dataclass(frozen=True, eq=False)
class CliquePotential:
    """Base class.  Subclasses implement ``_batch`` on kept-value histograms."""

    R: int
    ignore: tuple = field(default=(), kw_only=True)

    family = "abstract"

    def __post_init__(self):
        if self.R < 1:
            raise ValueError("R must be positive")
        bad = [v for v in self.ignore if not 0 <= v < self.R]
        if bad:
            raise ValueError(f"ignored values {bad} outside range({self.R})")

    @cached_property
    def kept(self) -> np.ndarray:
        ign = set(self.ignore)
        return np.array([v for v in range(self.R) if v not in ign], dtype=np.int64)

    def evaluate(self, hist) -> float:
        hist = np.asarray(hist, dtype=np.int64)
        if hist.shape != (self.R,):
            raise DimensionError(f"histogram has shape {hist.shape}, expected ({self.R},)")
        return float(self._exact(hist[self.kept]))

    def evaluate_batch(self, H) -> np.ndarray:
        """Vectorised evaluation of many histograms (one per row)."""
        H = np.asarray(H, dtype=np.int64)
        if H.ndim != 2 or H.shape[1] != self.R:
            raise DimensionError(f"histogram batch has shape {H.shape}, expected (m, {self.R})")
        return self._batch(H[:, self.kept])

    def _exact(self, h: np.ndarray) -> float:
        # single-histogram path; subclasses override where summation order matters
        return float(self._batch(h[None, :])[0])

    def _batch(self, Hk: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def with_ignore(self, ignore) -> "CliquePotential":
        raise NotImplementedError

    def is_associative(self) -> bool:
        """True for the built-ins whose maximum over histograms is a single-value one."""
        return False


# ---------------------------------------------------------------------------
# max-label
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MaxLabelTable(CliquePotential):
    """``max_v f_v(n_v)`` with dense non-decreasing tables of shape (R, n+1)."""

    tables: np.ndarray = None
    family = "maxlabel"

    def __post_init__(self):
        super().__post_init__()
        t = np.asarray(self.tables, dtype=float)
        if t.shape[0] != self.R:
            raise DimensionError("need one table per value")
        _check_monotone(t)
        object.__setattr__(self, "tables", t)

    def _batch(self, Hk):
        t = self.tables[self.kept]
        if Hk.shape[1] == 0:
            return np.zeros(Hk.shape[0])
        if Hk.size and Hk.max() >= t.shape[1]:
            raise DimensionError("count exceeds table length")
        return t[np.arange(t.shape[0])[None, :], Hk].max(axis=1)

    def with_ignore(self, ignore):
        return MaxLabelTable(self.R, tables=self.tables, ignore=tuple(ignore))


@dataclass(frozen=True, eq=False)
class LinearMakespan(CliquePotential):
    """``lam * max_v n_v``."""

    lam: float = 1.0
    family = "maxlabel"

    def __post_init__(self):
        super().__post_init__()
        if self.lam < 0:
            raise ValueError("makespan weight must be non-negative")

    def _batch(self, Hk):
        if Hk.shape[1] == 0:
            return np.zeros(Hk.shape[0])
        return self.lam * Hk.max(axis=1).astype(float)

    def with_ignore(self, ignore):
        return LinearMakespan(self.R, lam=self.lam, ignore=tuple(ignore))

    def is_associative(self):
        return True


@dataclass(frozen=True, eq=False)
class SquareMakespan(CliquePotential):
    """``lam * max_v n_v**2``."""

    lam: float = 1.0
    family = "maxlabel"

    def __post_init__(self):
        super().__post_init__()
        if self.lam < 0:
            raise ValueError("makespan weight must be non-negative")

    def _batch(self, Hk):
        if Hk.shape[1] == 0:
            return np.zeros(Hk.shape[0])
        return self.lam * (Hk.max(axis=1) ** 2).astype(float)

    def with_ignore(self, ignore):
        return SquareMakespan(self.R, lam=self.lam, ignore=tuple(ignore))

    def is_associative(self):
        return True


# ---------------------------------------------------------------------------
# additive
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AdditivePotential(CliquePotential):
    """Common parent for ``sum_v f_v(n_v)`` potentials."""

    family = "additive"

    def value_tables(self, n: int) -> np.ndarray:
        """Per-value tables ``f_v(c)`` for ``c = 0..n``; ignored values get zeros."""
        t = self._tables(n)
        t = np.array(t, dtype=float)
        if self.ignore:
            t[list(self.ignore)] = 0.0
        return t

    def _tables(self, n):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class AdditiveTable(AdditivePotential):
    tables: np.ndarray = None

    def __post_init__(self):
        super().__post_init__()
        t = np.asarray(self.tables, dtype=float)
        if t.shape[0] != self.R:
            raise DimensionError("need one table per value")
        _check_monotone(t)
        object.__setattr__(self, "tables", t)

    def _tables(self, n):
        if self.tables.shape[1] < n + 1:
            raise DimensionError("table shorter than clique size")
        return self.tables[:, : n + 1]

    def _batch(self, Hk):
        t = self.tables[self.kept]
        return t[np.arange(t.shape[0])[None, :], Hk].sum(axis=1)

    def _exact(self, h):
        t = self.tables[self.kept]
        return math.fsum(t[np.arange(len(h)), h])

    def with_ignore(self, ignore):
        return AdditiveTable(self.R, tables=self.tables, ignore=tuple(ignore))


@dataclass(frozen=True, eq=False)
class Potts(AdditivePotential):
    """``lam * sum_v n_v**2`` (homogeneous Potts on all clique edges, up to a constant)."""

    lam: float = 1.0

    def __post_init__(self):
        super().__post_init__()
        if self.lam < 0:
            raise ValueError("only the associative case lam >= 0 is supported")

    def _tables(self, n):
        c = np.arange(n + 1, dtype=float)
        return np.tile(self.lam * c * c, (self.R, 1))

    def _batch(self, Hk):
        # integer sum of squares is exact; one multiply at the end
        return self.lam * (Hk * Hk).sum(axis=1).astype(float)

    def with_ignore(self, ignore):
        return Potts(self.R, lam=self.lam, ignore=tuple(ignore))

    def is_associative(self):
        return self.lam > 0


@dataclass(frozen=True, eq=False)
class Entropy(AdditivePotential):
    """``lam * sum_v n_v ln n_v`` with ``0 ln 0 = 0`` (natural log)."""

    lam: float = 1.0

    def __post_init__(self):
        super().__post_init__()
        if self.lam < 0:
            raise ValueError("entropy weight must be non-negative")

    def _tables(self, n):
        c = np.arange(n + 1, dtype=float)
        return np.tile(self.lam * xlogy(c, c), (self.R, 1))

    def _batch(self, Hk):
        return self.lam * xlogy(Hk, Hk).sum(axis=1)

    def _exact(self, h):
        return self.lam * math.fsum(xlogy(h, h))

    def with_ignore(self, ignore):
        return Entropy(self.R, lam=self.lam, ignore=tuple(ignore))


# ---------------------------------------------------------------------------
# majority
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Majority(CliquePotential):
    """Linear majority potential ``sum_v W[a, v] n_v``, ``a`` = count argmax.

    Ties in the argmax go to the lowest value index.  With ``ignore`` set, the
    argmax and the sum range over kept values only; ``W`` is still indexed by
    the full value range.
    """

    W: np.ndarray = None
    family = "majority"

    def __post_init__(self):
        super().__post_init__()
        W = np.asarray(self.W, dtype=float)
        if W.shape != (self.R, self.R):
            raise DimensionError(f"W has shape {W.shape}, expected ({self.R}, {self.R})")
        if not np.all(np.isfinite(W)):
            raise ValueError("W must be finite")
        if self.kept.size == 0:
            raise ValueError("a majority potential needs at least one value outside ignore")
        object.__setattr__(self, "W", W)

    def majority_of(self, hist) -> int:
        """Majority value (full index) of a histogram under the lowest-index tie rule."""
        kept = self.kept
        hist = np.asarray(hist)
        return int(kept[int(np.argmax(hist[kept]))])

    def _batch(self, Hk):
        kept = self.kept
        Wk = self.W[np.ix_(kept, kept)]
        a = np.argmax(Hk, axis=1)
        return (Wk[a] * Hk).sum(axis=1)

    def _exact(self, h):
        kept = self.kept
        a = int(np.argmax(h))
        return math.fsum(self.W[kept[a], kept] * h)

    def with_ignore(self, ignore):
        return Majority(self.R, W=self.W, ignore=tuple(ignore))


def evaluate_potential(potential: CliquePotential, hist) -> float:
    """Score of a count histogram under ``potential``."""
    return potential.evaluate(hist)
