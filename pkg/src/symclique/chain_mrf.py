"""Chain MRFs: Viterbi decoding and property-aware max-product messages.

``property_messages`` runs a forward max-product pass whose state is a label
together with the partial value of every incident property.  Each edge folds
the values its components fire into the partial values with
:func:`properties.combine`, so after the last position the table holds, for
every combination ``u`` of property values, the best chain score among
labelings that produce exactly ``u``.  Backpointers allow decoding any entry.

Property values are indexed per property as ``0..V-1`` for the (possibly
restricted) component range, then ``EMPTY`` and ``BOTTOM``.  With a restricted
range a firing outside the range counts as ``BOTTOM``: entries for kept values
and ``EMPTY`` stay exact, and the ``BOTTOM`` entry becomes the best score over
conflicts and every dropped value.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .properties import (
    BOTTOM,
    EMPTY,
    Augmentation,
    DecomposableProperty,
    Val,
    augment_labels,
    property_of_labeling,
)

NEG = -np.inf


@dataclass(frozen=True, eq=False)
class ChainInstance:
    tokens: tuple
    node: np.ndarray
    edge: np.ndarray
    labels: tuple
    name: str = ""

    def __post_init__(self):
        node = np.asarray(self.node, dtype=float)
        T = len(self.tokens)
        Y = len(self.labels)
        if T < 1:
            raise ValueError("a chain needs at least one token")
        if node.shape != (T, Y):
            raise ValueError(f"node potentials have shape {node.shape}, expected ({T}, {Y})")
        edge = np.asarray(self.edge, dtype=float).reshape(max(T - 1, 0), Y, Y)
        for arr in (node, edge):
            if np.isnan(arr).any() or np.isposinf(arr).any():
                raise ValueError("potentials must be finite or -inf")
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "node", node)
        object.__setattr__(self, "edge", edge)

    @property
    def T(self) -> int:
        return len(self.tokens)

    @property
    def Y(self) -> int:
        return len(self.labels)

    def score(self, labeling) -> float:
        y = np.asarray(labeling, dtype=np.int64)
        s = self.node[np.arange(self.T), y].sum()
        if self.T > 1:
            s += self.edge[np.arange(self.T - 1), y[:-1], y[1:]].sum()
        return float(s)

    def label_names(self, labeling):
        return [self.labels[i] for i in labeling]


def viterbi(instance: ChainInstance):
    """Exact chain MAP.  Ties go to the lowest label index, both in the final
    argmax and in every backpointer."""
    T, node, edge = instance.T, instance.node, instance.edge
    D = node[0].copy()
    bps = []
    for j in range(1, T):
        cand = D[:, None] + edge[j - 1]
        bp = np.argmax(cand, axis=0)
        D = cand[bp, np.arange(instance.Y)] + node[j]
        bps.append(bp)
    y = [int(np.argmax(D))]
    best = float(D[y[0]])
    for bp in reversed(bps):
        y.append(int(bp[y[-1]]))
    return y[::-1], best


def augment_instance(instance: ChainInstance, aug: Augmentation) -> ChainInstance:
    """Copy of ``instance`` over the augmented labels; invalid augmented
    starts and transitions get ``-inf``."""
    o = aug.orig_of
    node = instance.node[:, o].copy()
    node[0, ~aug.valid_start] = NEG
    edge = instance.edge[:, o][:, :, o] + np.where(aug.valid_trans, 0.0, NEG)[None]
    return ChainInstance(instance.tokens, node, edge, aug.aug_labels, instance.name)


# ---------------------------------------------------------------------------
# property grids
# ---------------------------------------------------------------------------

class PropertyGrid:
    """Index space for one property's values on one instance."""

    def __init__(self, prop: DecomposableProperty, values, restricted: bool = False):
        self.prop = prop
        self.values = tuple(values)
        self.index = {v: k for k, v in enumerate(self.values)}
        V = len(self.values)
        self.V = V
        self.EMPTY = V
        self.BOTTOM = V + 1
        self.restricted = restricted
        self.internal = V + 2
        n = self.internal
        comb = np.full((n, n), self.BOTTOM, dtype=np.int64)
        for a in range(n):
            comb[a, self.EMPTY] = a
            comb[self.EMPTY, a] = a
            if a < V:
                comb[a, a] = a
        comb[self.BOTTOM, self.EMPTY] = comb[self.EMPTY, self.BOTTOM] = self.BOTTOM
        self.comb = comb

    @property
    def size(self) -> int:
        """Number of externally visible values (range plus EMPTY and BOTTOM)."""
        return self.V + 2

    def code_of(self, fired) -> int:
        k = self.index.get(fired)
        if k is None:
            if not self.restricted:
                raise ValueError(f"value {fired!r} outside the range of {self.prop!r}")
            return self.BOTTOM
        return k

    def to_value(self, code: int):
        if code == self.EMPTY:
            return EMPTY
        if code == self.BOTTOM:
            return BOTTOM
        return Val(self.values[code])

    def code_of_value(self, value) -> int:
        if value is EMPTY:
            return self.EMPTY
        if value is BOTTOM:
            return self.BOTTOM
        return self.code_of(value.value)


def full_grid(prop, labels, other, vocabulary=()):
    return PropertyGrid(prop, prop.range_values(labels, other, vocabulary))


# ---------------------------------------------------------------------------
# value-argument messages
# ---------------------------------------------------------------------------

@dataclass
class AggregatedMessage:
    """Best chain score for every combination of property values.

    ``M`` has one axis per property of length ``grid.size``; unreachable
    combinations hold ``-inf``.  :meth:`decode` recovers a labeling (original
    label indices) attaining any finite entry.
    """

    M: np.ndarray
    grids: list
    aug: Augmentation
    final: np.ndarray = field(repr=False)
    backpointers: list = field(repr=False)
    internal_sizes: tuple = ()

    def _internal_flat(self, u) -> int:
        flat = 0
        for code, s in zip(u, self.internal_sizes):
            flat = flat * s + int(code)
        return flat

    def decode(self, u):
        """Labeling (original indices) attaining ``M[u]``; ties go to the lowest
        final augmented label and the lowest predecessor state."""
        U = int(np.prod(self.internal_sizes, dtype=np.int64))
        flat = self._internal_flat(u)
        col = self.final[:, flat]
        if not np.isfinite(col.max()):
            raise ValueError(f"combination {u} is unreachable")
        a = int(np.argmax(col))
        state = a * U + flat
        seq = [a]
        for bp in reversed(self.backpointers):
            state = int(bp[state])
            seq.append(state // U)
        return self.aug.unrelabel(seq[::-1])

    def best(self, bonus=None):
        """Flat argmax of ``M + bonus`` (lowest index on ties) as a tuple of codes."""
        total = self.M if bonus is None else self.M + bonus
        k = int(np.argmax(total))
        return tuple(int(x) for x in np.unravel_index(k, self.M.shape)), float(total.flat[k])


def _fire_maps(grids, aug, tokens, T):
    """Cache of per-(j, prev, cur) code maps applied to every flat u index."""
    sizes = [g.internal for g in grids]
    U = int(np.prod(sizes, dtype=np.int64))
    digits = np.array(np.unravel_index(np.arange(U), sizes)).T if grids else np.zeros((1, 0), dtype=np.int64)
    strides = np.array([int(np.prod(sizes[k + 1:], dtype=np.int64)) for k in range(len(sizes))], dtype=np.int64)
    cache = {}

    def umap(j, prev, cur):
        fired = tuple(g.prop.edge_fires(aug, tokens, j, prev, cur, j == T - 1) for g in grids)
        key = fired
        m = cache.get(key)
        if m is None:
            new = digits.copy()
            for k, (g, vals) in enumerate(zip(grids, fired)):
                for w in vals:
                    new[:, k] = g.comb[new[:, k], g.code_of(w)]
            m = (new * strides).sum(axis=1) if grids else np.zeros(1, dtype=np.int64)
            cache[key] = m
        return m

    return umap, sizes, U


def _merge(vals, targets, sources, size):
    """Max of ``vals`` per target (ties to the lowest source)."""
    best = np.full(size, NEG)
    arg = np.full(size, -1, dtype=np.int64)
    ok = np.isfinite(vals)
    if not ok.any():
        return best, arg
    vals, targets, sources = vals[ok], targets[ok], sources[ok]
    order = np.lexsort((sources, -vals, targets))
    t = targets[order]
    first = np.ones(len(t), dtype=bool)
    first[1:] = t[1:] != t[:-1]
    sel = order[first]
    best[targets[sel]] = vals[sel]
    arg[targets[sel]] = sources[sel]
    return best, arg


def _prune_beam(D, width):
    flat = D.ravel()
    finite = np.flatnonzero(np.isfinite(flat))
    if finite.size <= width:
        return D
    order = finite[np.lexsort((finite, -flat[finite]))]
    keep = np.zeros(flat.size, dtype=bool)
    keep[order[:width]] = True
    return np.where(keep.reshape(D.shape), D, NEG)


def property_messages(instance: ChainInstance, properties, other: str = "Other",
                      grids=None, aug: Augmentation | None = None,
                      beam_width: int | None = None) -> AggregatedMessage:
    """Table ``M(u)`` of the best chain score per combination of property values.

    ``instance`` is over original labels; it is augmented internally.  ``grids``
    optionally restricts the value range of each property.
    """
    properties = list(properties)
    if aug is None:
        aug = augment_labels(instance.labels, properties, other)
    for p in properties:
        if (p.after_anchors() and not set(p.after_anchors()) <= set(aug.anchors)) or (
                p.needs_lead() and not aug.lead):
            raise ValueError(f"{p!r} is not edge-local under the given augmentation")
    if grids is None:
        grids = [full_grid(p, instance.labels, other, instance.tokens) for p in properties]
    if beam_width is not None and beam_width < 1:
        raise ValueError("beam width must be at least 1")
    ai = augment_instance(instance, aug)
    T, A = ai.T, ai.Y
    umap, sizes, U = _fire_maps(grids, aug, ai.tokens, T)
    start_flat = 0
    for g in grids:
        start_flat = start_flat * g.internal + g.EMPTY

    D = np.full((A, U), NEG)
    for a in range(A):
        if np.isfinite(ai.node[0, a]):
            D[a, umap(0, None, a)[start_flat]] = ai.node[0, a]
    if beam_width is not None:
        D = _prune_beam(D, beam_width)
    bps = []
    src_u = np.arange(U)
    for j in range(1, T):
        newD = np.full((A, U), NEG)
        bp = np.full(A * U, -1, dtype=np.int64)
        for a in range(A):
            vals, targets, sources = [], [], []
            for ap in range(A):
                w = ai.edge[j - 1, ap, a]
                if not np.isfinite(w):
                    continue
                row = D[ap]
                if not np.isfinite(row).any():
                    continue
                vals.append(row + w + ai.node[j, a])
                targets.append(umap(j, ap, a))
                sources.append(ap * U + src_u)
            if not vals:
                continue
            best, arg = _merge(np.concatenate(vals), np.concatenate(targets),
                               np.concatenate(sources), U)
            newD[a] = best
            bp[a * U:(a + 1) * U] = arg
        D = newD if beam_width is None else _prune_beam(newD, beam_width)
        bps.append(bp)

    Mint = D.max(axis=0).reshape(sizes) if grids else np.array(D.max())
    if grids:
        Mint = Mint[tuple(slice(0, g.size) for g in grids)]
    return AggregatedMessage(np.array(Mint), grids, aug, D, bps, tuple(sizes))


def beam_property_messages(instance, properties, beam_width: int, **kw) -> AggregatedMessage:
    """Like :func:`property_messages` but keeping only the ``beam_width`` best
    (label, partial value) states per position.  Present entries are lower
    bounds of the exact ones."""
    return property_messages(instance, properties, beam_width=beam_width, **kw)


def msg_instance_to_clique(agg: AggregatedMessage, k: int, incoming) -> np.ndarray:
    """Message to property ``k``: for each of its values, the best ``M(u)`` plus
    the incoming messages of the other properties.

    ``incoming[k2]`` is a vector over property ``k2``'s values (entry ``k`` is
    ignored; ``None`` counts as zero).
    """
    total = agg.M.copy()
    K = total.ndim
    for k2 in range(K):
        if k2 == k or incoming is None or incoming[k2] is None:
            continue
        shape = [1] * K
        shape[k2] = -1
        total = total + np.asarray(incoming[k2], dtype=float).reshape(shape)
    axes = tuple(a for a in range(K) if a != k)
    return total.max(axis=axes) if axes else total


def restrict_ranges(instances, properties, other: str = "Other", vocabulary=()):
    """Per property: the component values fired by the independent Viterbi MAP
    of at least one instance in its domain, in range order."""
    maps = []
    for inst in instances:
        y, _ = viterbi(inst)
        maps.append((inst, inst.label_names(y)))
    out = []
    for p in properties:
        seen = set()
        for inst, names in maps:
            if not p.in_domain(inst.tokens):
                continue
            v = property_of_labeling(p, inst.tokens, names, other)
            if isinstance(v, Val):
                seen.add(v.value)
        labels = instances[0].labels if instances else ()
        full = p.range_values(labels, other, vocabulary)
        out.append(tuple(v for v in full if v in seen))
    return out


def local_absorb(aug_instance: ChainInstance, aug: Augmentation, grid: PropertyGrid,
                 message) -> ChainInstance:
    """Fold a message over one property's values into the potentials of an
    augmented chain: wherever the component fires ``v``, add ``m(v) - m(EMPTY)``.

    Exact for labelings in which the property fires at most once.
    """
    m = np.asarray(message, dtype=float)
    rel = m - m[grid.EMPTY]
    node = aug_instance.node.copy()
    edge = aug_instance.edge.copy()
    T, A = aug_instance.T, aug_instance.Y
    toks = aug_instance.tokens
    p = grid.prop

    def bonus(fired):
        return sum(rel[grid.index[w]] for w in fired if w in grid.index)

    for a in range(A):
        node[0, a] += bonus(p.edge_fires(aug, toks, 0, None, a, T == 1))
    for j in range(1, T):
        for ap in range(A):
            for a in range(A):
                edge[j - 1, ap, a] += bonus(p.edge_fires(aug, toks, j, ap, a, j == T - 1))
    return ChainInstance(toks, node, edge, aug_instance.labels, aug_instance.name)
