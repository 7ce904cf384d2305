"""Decomposable properties of chain labelings.

A property maps a (tokens, labeling) pair to a value assembled from the values
its components fire at individual positions.  Components that do not fire are
ignored; the labeling-level value is

* ``EMPTY`` when nothing fires,
* ``Val(v)`` when every firing component agrees on ``v``,
* ``BOTTOM`` when two firings disagree.

This is a commutative monoid under :func:`combine` with identity ``EMPTY`` and
absorbing element ``BOTTOM``.

Built-in properties work on label segments (maximal runs of one label):

* ``TokenLabel(t)``: label of every occurrence of token ``t``;
* ``NextLabel(L)``: first non-Other label after each ``L`` segment, or ``End``;
* ``BeforeToken(L)``: token preceding each ``L`` segment, or ``Start``;
* ``FirstNonOther()``: first non-Other label of the labeling.

``NextLabel`` and ``FirstNonOther`` look past runs of Other.  :func:`augment_labels`
splits Other into context-carrying copies (``After-L`` after an anchor ``L``,
``Lead-Other`` before the first real label) so that every component becomes a
function of one edge ``(y[j-1], y[j])``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

START = "Start"
END = "End"
LEAD = "Lead-Other"


def after_name(label: str) -> str:
    return f"After-{label}"


@dataclass(frozen=True)
class Val:
    value: object

    def __repr__(self):
        return f"Val({self.value!r})"


class _Sentinel:
    __slots__ = ("name",)

    def __init__(self, name):
        self.name = name

    def __repr__(self):
        return self.name

    def __reduce__(self):
        return self.name


EMPTY = _Sentinel("EMPTY")
BOTTOM = _Sentinel("BOTTOM")


def combine(a, b):
    if a is EMPTY:
        return b
    if b is EMPTY:
        return a
    if a is BOTTOM or b is BOTTOM:
        return BOTTOM
    return a if a == b else BOTTOM


def fold(values):
    out = EMPTY
    for v in values:
        out = combine(out, v if isinstance(v, (Val, _Sentinel)) else Val(v))
    return out


# ---------------------------------------------------------------------------
# label augmentation
# ---------------------------------------------------------------------------

class Augmentation:
    """Enlarged label set in which Other remembers its left context.

    Augmented labels are the original labels, then ``After-L`` for every anchor
    ``L`` requested by a property, then ``Lead-Other`` if requested.  An Other
    token becomes ``Lead-Other`` when no real label precedes it, ``After-L``
    when the last real label before it is the anchor ``L``, and stays Other
    otherwise.  :meth:`relabel` and :meth:`unrelabel` are inverse bijections
    between original labelings and augmented labelings that satisfy
    :attr:`valid_start` / :attr:`valid_trans`.
    """

    def __init__(self, labels, other: str, anchors=(), lead: bool = False):
        self.labels = tuple(labels)
        if other not in self.labels:
            raise ValueError(f"Other label {other!r} is not in the label set")
        missing = [a for a in anchors if a not in self.labels or a == other]
        if missing:
            raise ValueError(f"anchor labels {missing} are not non-Other labels of the set")
        self.other = other
        self.other_idx = self.labels.index(other)
        self.anchors = tuple(a for a in self.labels if a in set(anchors))
        self.lead = bool(lead)
        names = list(self.labels) + [after_name(a) for a in self.anchors]
        if self.lead:
            names.append(LEAD)
        self.aug_labels = tuple(names)
        Y = len(self.labels)
        self.orig_of = np.array(list(range(Y)) + [self.other_idx] * (len(names) - Y), dtype=np.int64)
        # context carried by each augmented label: the anchor it follows, "lead", or None
        self.after_of = {Y + k: a for k, a in enumerate(self.anchors)}
        self.lead_idx = len(names) - 1 if self.lead else None
        self._anchor_idx = {a: self.labels.index(a) for a in self.anchors}
        self._after_idx = {a: Y + k for k, a in enumerate(self.anchors)}
        A = len(names)
        self.valid_start = np.array([self._next_aug(None, self.orig_of[a]) == a for a in range(A)])
        self.valid_trans = np.array([[self._next_aug(a, self.orig_of[b]) == b for b in range(A)]
                                     for a in range(A)])

    @property
    def size(self) -> int:
        return len(self.aug_labels)

    def is_real(self, a: int) -> bool:
        """True for augmented labels that map to a non-Other original label."""
        return self.orig_of[a] != self.other_idx

    def follows_anchor(self, a: int, anchor: str) -> bool:
        """Is ``a`` the anchor itself or an Other run right after it?"""
        return a == self._anchor_idx.get(anchor) or a == self._after_idx.get(anchor)

    def _next_aug(self, prev, y: int) -> int:
        """Augmented label of original label ``y`` given the previous augmented label."""
        if y != self.other_idx:
            return y
        if prev is None:
            return self.lead_idx if self.lead else y
        if self.lead and prev == self.lead_idx:
            return prev
        if prev in self.after_of:
            return prev
        name = self.labels[self.orig_of[prev]] if prev < len(self.labels) else None
        if name in self._after_idx:
            return self._after_idx[name]
        return y

    def relabel(self, y):
        out = []
        prev = None
        for lab in y:
            a = self._next_aug(prev, int(lab))
            out.append(a)
            prev = a
        return out

    def unrelabel(self, a_seq):
        return [int(self.orig_of[a]) for a in a_seq]


def augment_labels(labels, properties, other: str = "Other") -> Augmentation:
    anchors = []
    lead = False
    for p in properties:
        anchors.extend(p.after_anchors())
        lead = lead or p.needs_lead()
    return Augmentation(labels, other, anchors=anchors, lead=lead)


# ---------------------------------------------------------------------------
# properties
# ---------------------------------------------------------------------------

def _segments(labeling):
    """(start, end_exclusive, label) for each maximal run."""
    segs = []
    start = 0
    for j in range(1, len(labeling) + 1):
        if j == len(labeling) or labeling[j] != labeling[start]:
            segs.append((start, j, labeling[start]))
            start = j
    return segs


class DecomposableProperty:
    """Base class.  Labels are passed around by name in the reference
    evaluator and by augmented index in :meth:`edge_fires`."""

    kind = "abstract"

    def range_values(self, labels, other, vocabulary=()) -> tuple:
        raise NotImplementedError

    def in_domain(self, tokens) -> bool:
        return True

    def component_values(self, tokens, labeling, other) -> list:
        """Values fired by the components of ``labeling`` (names), in position order."""
        raise NotImplementedError

    def edge_fires(self, aug: Augmentation, tokens, j: int, prev, cur: int, last: bool) -> tuple:
        """Values fired by the component ending at position ``j`` of an augmented
        labeling (``prev`` is None at ``j = 0``)."""
        raise NotImplementedError

    def after_anchors(self) -> tuple:
        return ()

    def needs_lead(self) -> bool:
        return False

    def check_labels(self, labels, other):
        pass


def property_of_labeling(p: DecomposableProperty, tokens, labeling, other: str = "Other"):
    if not p.in_domain(tokens):
        raise ValueError(f"instance is outside the domain of {p!r}")
    return fold(p.component_values(tokens, list(labeling), other))


@dataclass(frozen=True)
class TokenLabel(DecomposableProperty):
    token: str
    kind = "tokenlabel"

    def range_values(self, labels, other, vocabulary=()):
        return tuple(labels)

    def in_domain(self, tokens):
        return self.token in tokens

    def component_values(self, tokens, labeling, other):
        return [lab for tok, lab in zip(tokens, labeling) if tok == self.token]

    def edge_fires(self, aug, tokens, j, prev, cur, last):
        if tokens[j] == self.token:
            return (aug.labels[aug.orig_of[cur]],)
        return ()


@dataclass(frozen=True)
class NextLabel(DecomposableProperty):
    anchor: str
    kind = "nextlabel"

    def check_labels(self, labels, other):
        if self.anchor not in labels or self.anchor == other:
            raise ValueError(f"anchor {self.anchor!r} must be a non-Other label")

    def range_values(self, labels, other, vocabulary=()):
        return tuple(l for l in labels if l != other) + (END,)

    def after_anchors(self):
        return (self.anchor,)

    def component_values(self, tokens, labeling, other):
        segs = _segments(labeling)
        out = []
        for k, (s, e, lab) in enumerate(segs):
            if lab != self.anchor:
                continue
            nxt = END
            for _, _, lab2 in segs[k + 1:]:
                if lab2 != other:
                    nxt = lab2
                    break
            out.append(nxt)
        return out

    def edge_fires(self, aug, tokens, j, prev, cur, last):
        fired = ()
        if prev is not None and aug.is_real(cur) and aug.follows_anchor(prev, self.anchor):
            if not (prev == cur):  # an anchor run continuing is the same segment
                fired = (aug.labels[aug.orig_of[cur]],)
        if last and aug.follows_anchor(cur, self.anchor):
            fired = fired + (END,)
        return fired


@dataclass(frozen=True)
class BeforeToken(DecomposableProperty):
    anchor: str
    kind = "beforetoken"

    def check_labels(self, labels, other):
        if self.anchor not in labels:
            raise ValueError(f"anchor {self.anchor!r} is not in the label set")

    def range_values(self, labels, other, vocabulary=()):
        return tuple(sorted(set(vocabulary))) + (START,)

    def component_values(self, tokens, labeling, other):
        return [START if s == 0 else tokens[s - 1]
                for s, _, lab in _segments(labeling) if lab == self.anchor]

    def edge_fires(self, aug, tokens, j, prev, cur, last):
        if aug.labels[aug.orig_of[cur]] != self.anchor:
            return ()
        if prev is None:
            return (START,)
        if aug.orig_of[prev] == aug.orig_of[cur]:
            return ()
        return (tokens[j - 1],)


@dataclass(frozen=True)
class FirstNonOther(DecomposableProperty):
    kind = "firstnonother"

    def range_values(self, labels, other, vocabulary=()):
        return tuple(l for l in labels if l != other)

    def needs_lead(self):
        return True

    def component_values(self, tokens, labeling, other):
        for lab in labeling:
            if lab != other:
                return [lab]
        return []

    def edge_fires(self, aug, tokens, j, prev, cur, last):
        if aug.is_real(cur) and (prev is None or prev == aug.lead_idx):
            return (aug.labels[aug.orig_of[cur]],)
        return ()


def fold_edges(p: DecomposableProperty, aug: Augmentation, tokens, aug_labeling):
    """Property value of an augmented labeling from its edge-local firings."""
    vals = []
    T = len(aug_labeling)
    for j in range(T):
        prev = aug_labeling[j - 1] if j else None
        vals.extend(p.edge_fires(aug, tokens, j, prev, aug_labeling[j], j == T - 1))
    return fold(vals)


def make_property(kind: str, anchor: str | None = None, token: str | None = None):
    kind = kind.lower()
    if kind == "tokenlabel":
        if token is None:
            raise ValueError("tokenlabel needs token=")
        return TokenLabel(token)
    if kind == "nextlabel":
        return NextLabel(anchor)
    if kind == "beforetoken":
        return BeforeToken(anchor)
    if kind == "firstnonother":
        return FirstNonOther()
    raise ValueError(f"unknown property kind {kind!r}")
