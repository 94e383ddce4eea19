"""
Search-space reduction for tree ciphering.

Given two labeled trees with the same shape, :func:`run` builds two partial
bijections at once: ``phi`` on nodes and ``f`` on labels.  Nodes that are not
mapped yet live in *bags* (two equal-size node sets that must map onto each
other) or in *collections* (label-uniform node sets grouped by size whose
pairing is still open).  Four filters refine the bags (depth, parent
signature, AHU class, labels) and three deduction rules map whatever becomes
forced:

* rule 1: a bag of size one maps its two nodes;
* rule 2: a collection size class holding a single set per side becomes a bag
  and fixes one label pair;
* rule 3: label classes whose image under ``f`` is known become bags, the rest
  form a collection.

Mapping two nodes also maps their parents and carves their children out of
whatever bag or collection they sat in.  The residual search space size is

    N = prod_bags (#B)! * prod_collections prod_n (n!)^{#C(n)} (#C(n))!
"""

from __future__ import annotations

import enum
import heapq
import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, ClassVar, Iterable, Mapping

from . import ahu
from .trees import LabeledTree
from .witness import induced_relation, is_tree_isomorphism, relation_is_bijection

__all__ = [
    "CipherMode",
    "Reason",
    "PartialBijection",
    "ext_bij",
    "Bag",
    "Collection",
    "EngineState",
    "Outcome",
    "Isomorphic",
    "NotIsomorphic",
    "Undecided",
    "InvariantError",
    "run",
    "map_nodes",
    "split_children",
    "rule1_map_singletons",
    "rule2_collection_singletons",
    "rule3_label_bags",
    "search_space_size",
    "log_ratio",
    "STAGES",
]

_LN10 = math.log(10.0)
STAGES = ("initial", "depth", "parents", "equiv_class", "labels")
DEFAULT_DIGIT_CAP = 10_000


def _lf(k: int) -> float:
    """log10(k!)"""
    return math.lgamma(k + 1) / _LN10


class CipherMode(enum.Enum):
    BIJECTIVE = "bijective"
    IDENTITY = "identity"


class Reason(str, enum.Enum):
    EXT_BIJ_NODE_CONFLICT = "ExtBijNodeConflict"
    EXT_BIJ_LABEL_CONFLICT = "ExtBijLabelConflict"
    BAG_CARDINALITY_MISMATCH = "BagCardinalityMismatch"
    COLLECTION_MISMATCH = "CollectionMismatch"
    RULE3_MISSING_COUNTERPART = "Rule3MissingCounterpart"
    TOPOLOGY_MISMATCH = "TopologyMismatch"
    SEARCH_EXHAUSTED = "SearchExhausted"


class InvariantError(AssertionError):
    """Internal state broke a structural invariant (a bug, not a verdict)."""


class _Contradiction(Exception):
    def __init__(self, reason: Reason, detail: str = ""):
        super().__init__(f"{reason.value}: {detail}" if detail else reason.value)
        self.reason = reason


class PartialBijection:
    """Injective partial map with its inverse kept alongside."""

    __slots__ = ("forward", "inverse")

    def __init__(self, pairs: Iterable[tuple] = ()):
        self.forward: dict = {}
        self.inverse: dict = {}
        for a, b in pairs:
            if not self.extend(a, b):
                raise ValueError(f"pair {(a, b)!r} breaks injectivity")

    def extend(self, a, b) -> bool:
        """Compatibility test of ``(a, b)``; records the pair when ``a`` is new."""
        fwd = self.forward
        if a in fwd:
            return fwd[a] == b
        if b in self.inverse:
            return False
        fwd[a] = b
        self.inverse[b] = a
        return True

    def copy(self) -> "PartialBijection":
        new = PartialBijection()
        new.forward = dict(self.forward)
        new.inverse = dict(self.inverse)
        return new

    @property
    def domain(self):
        return self.forward.keys()

    def __contains__(self, a) -> bool:
        return a in self.forward

    def __getitem__(self, a):
        return self.forward[a]

    def get(self, a, default=None):
        return self.forward.get(a, default)

    def __len__(self) -> int:
        return len(self.forward)

    def items(self):
        return self.forward.items()

    def __eq__(self, other) -> bool:
        if isinstance(other, PartialBijection):
            return self.forward == other.forward
        if isinstance(other, Mapping):
            return self.forward == dict(other)
        return NotImplemented

    def __repr__(self) -> str:
        return f"PartialBijection({self.forward!r})"


def ext_bij(a, b, psi: PartialBijection, mode: CipherMode = CipherMode.BIJECTIVE) -> bool:
    """Return True iff ``(a, b)`` is compatible with ``psi``; extend ``psi`` if so.

    In ``IDENTITY`` mode only ``a == b`` is ever accepted.
    """
    if mode is CipherMode.IDENTITY and a != b:
        return False
    return psi.extend(a, b)


# containers


class Subset:
    """One side of a bag, or one member of a collection size class."""

    __slots__ = ("nodes", "owner", "side", "label")

    def __init__(self, nodes, owner, side: int, label=None):
        self.nodes: set[int] = nodes
        self.owner = owner
        self.side = side
        self.label = label

    def __len__(self) -> int:
        return len(self.nodes)

    def __repr__(self) -> str:
        return f"Subset({sorted(self.nodes)})"


class Bag:
    __slots__ = ("left", "right", "index", "alive")

    def __init__(self, index: int):
        self.index = index
        self.alive = True
        self.left: Subset
        self.right: Subset

    def __len__(self) -> int:
        return len(self.left.nodes)

    def __repr__(self) -> str:
        return f"Bag#{self.index}({sorted(self.left.nodes)} | {sorted(self.right.nodes)})"


class Collection:
    """Size classes ``n -> (left subsets, right subsets)``; dicts serve as ordered sets."""

    __slots__ = ("by_size", "index", "alive")

    def __init__(self, index: int):
        self.index = index
        self.alive = True
        self.by_size: dict[int, tuple[dict, dict]] = {}

    def count(self, n: int) -> int:
        cls = self.by_size.get(n)
        return len(cls[0]) if cls else 0

    def is_empty(self) -> bool:
        return not self.by_size

    def subsets(self, side: int):
        for n in self.by_size:
            yield from self.by_size[n][side]

    def __repr__(self) -> str:
        parts = []
        for n in sorted(self.by_size):
            L, R = self.by_size[n]
            parts.append(f"{n}: {[sorted(s.nodes) for s in L]} | {[sorted(s.nodes) for s in R]}")
        return f"Collection#{self.index}({'; '.join(parts)})"


@dataclass
class StageRecord:
    name: str
    log10_N: float
    exact_N: int | None = None


Observer = Callable[[str, float, float, float], None]


class EngineState:
    """Mutable state of one reduction run over a fixed pair of trees.

    Attributes of interest: ``phi`` and ``f`` (partial bijections), ``bags`` and
    ``collections`` (live containers keyed by creation index), ``loc`` (per
    tree, node -> Subset or None when mapped), ``metrics_log`` and
    ``map_nodes_calls``.
    """

    def __init__(self, t1: LabeledTree, t2: LabeledTree, mode: CipherMode = CipherMode.BIJECTIVE,
                 *, coloring: ahu.Coloring | None = None, observer: Observer | None = None,
                 digit_cap: int = DEFAULT_DIGIT_CAP, initial_bag: bool = True):
        self.t1 = t1
        self.t2 = t2
        self.mode = mode
        if coloring is None:
            coloring = ahu.color([t1, t2])
        self.coloring = coloring
        self.col = (coloring.of(t1), coloring.of(t2))
        self.labels = (t1.labels(), t2.labels())
        self.parent = (t1.parent, t2.parent)
        self.children = (t1.children, t2.children)
        self.phi = PartialBijection()
        self.f = PartialBijection()
        self.bags: dict[int, Bag] = {}
        self.collections: dict[int, Collection] = {}
        self.loc: tuple[list, list] = ([None] * len(t1), [None] * len(t2))
        # label -> subsets of that label currently held in collections
        self.label_index: tuple[dict, dict] = ({}, {})
        self.metrics_log: list[StageRecord] = []
        self.map_nodes_calls = 0
        self.observer = observer
        self.digit_cap = digit_cap
        self.failure: _Contradiction | None = None
        self._counter = 0
        self._singletons: list = []
        self._pending_sizes: deque = deque()
        self._pending_labels: deque = deque()
        if initial_bag:
            if len(t1) != len(t2):
                raise ValueError("trees differ in size")
            self._new_bag(range(len(t1)), range(len(t2)))

    # construction helpers

    @classmethod
    def from_partition(cls, t1, t2, bags=(), collections=(), phi=(), f=(),
                       mode: CipherMode = CipherMode.BIJECTIVE, **kw) -> "EngineState":
        """State with explicit containers, mainly for tests and cloning.

        ``bags`` is a sequence of ``(left_nodes, right_nodes)``; ``collections``
        a sequence of ``(left_sets, right_sets)`` with each set label-uniform.
        Every node must be either mapped by ``phi`` or placed exactly once.
        """
        st = cls(t1, t2, mode, initial_bag=False, **kw)
        for a, b in phi:
            st.phi.extend(a, b)
        for a, b in f:
            st.f.extend(a, b)
        for left, right in bags:
            st._new_bag(left, right)
        for left, right in collections:
            coll = st._new_collection()
            for nodes in left:
                st._coll_add(coll, st._subset(set(nodes), coll, 0))
            for nodes in right:
                st._coll_add(coll, st._subset(set(nodes), coll, 1))
        st._pending_sizes.clear()
        st.validate()
        return st

    def copy(self) -> "EngineState":
        """Independent clone (same trees and colouring, fresh containers)."""
        new = EngineState(self.t1, self.t2, self.mode, coloring=self.coloring,
                          observer=self.observer, digit_cap=self.digit_cap, initial_bag=False)
        new.phi = self.phi.copy()
        new.f = self.f.copy()
        new.metrics_log = list(self.metrics_log)
        new.map_nodes_calls = self.map_nodes_calls
        new._counter = self._counter
        for idx, bag in self.bags.items():
            nb = Bag(idx)
            nb.left = new._subset(set(bag.left.nodes), nb, 0)
            nb.right = new._subset(set(bag.right.nodes), nb, 1)
            new.bags[idx] = nb
            if len(bag.left.nodes) == 1:
                heapq.heappush(new._singletons, idx)
        for idx, coll in self.collections.items():
            nc = Collection(idx)
            new.collections[idx] = nc
            for n, (L, R) in coll.by_size.items():
                for s in L:
                    new._coll_add(nc, new._subset(set(s.nodes), nc, 0, s.label), n)
                for s in R:
                    new._coll_add(nc, new._subset(set(s.nodes), nc, 1, s.label), n)
        new._pending_sizes.clear()
        return new

    def _subset(self, nodes: set, owner, side: int, label=None) -> Subset:
        if label is None and isinstance(owner, Collection):
            labs = {self.labels[side][x] for x in nodes}
            if len(labs) != 1:
                raise InvariantError("collection members must be label-uniform")
            label = labs.pop()
        s = Subset(nodes, owner, side, label)
        loc = self.loc[side]
        for x in nodes:
            loc[x] = s
        return s

    def _next_index(self) -> int:
        self._counter += 1
        return self._counter

    def _new_bag(self, left: Iterable[int], right: Iterable[int]) -> Bag:
        left, right = set(left), set(right)
        if len(left) != len(right) or not left:
            raise _Contradiction(Reason.BAG_CARDINALITY_MISMATCH,
                                 f"bag with {len(left)} vs {len(right)} nodes")
        bag = Bag(self._next_index())
        bag.left = self._subset(left, bag, 0)
        bag.right = self._subset(right, bag, 1)
        self.bags[bag.index] = bag
        if len(left) == 1:
            heapq.heappush(self._singletons, bag.index)
        return bag

    def _bag_from_subsets(self, s: Subset, r: Subset) -> Bag:
        bag = Bag(self._next_index())
        s.owner = r.owner = bag
        bag.left, bag.right = s, r
        self.bags[bag.index] = bag
        if len(s.nodes) == 1:
            heapq.heappush(self._singletons, bag.index)
        return bag

    def _drop_bag(self, bag: Bag) -> None:
        bag.alive = False
        del self.bags[bag.index]

    def _new_collection(self) -> Collection:
        coll = Collection(self._next_index())
        self.collections[coll.index] = coll
        return coll

    def _coll_add(self, coll: Collection, s: Subset, n: int | None = None) -> None:
        if n is None:
            n = len(s.nodes)
        cls = coll.by_size.get(n)
        if cls is None:
            cls = coll.by_size[n] = ({}, {})
        cls[s.side][s] = None
        s.owner = coll
        self.label_index[s.side].setdefault(s.label, {})[s] = None
        self._pending_sizes.append((coll, n))

    def _coll_remove(self, coll: Collection, s: Subset, n: int | None = None) -> None:
        if n is None:
            n = len(s.nodes)
        cls = coll.by_size[n]
        del cls[s.side][s]
        if not cls[0] and not cls[1]:
            del coll.by_size[n]
        idx = self.label_index[s.side][s.label]
        del idx[s]
        if not idx:
            del self.label_index[s.side][s.label]
        self._pending_sizes.append((coll, n))

    def _drop_collection_if_empty(self, coll: Collection) -> None:
        if coll.alive and coll.is_empty():
            coll.alive = False
            del self.collections[coll.index]

    # metrics

    def log10_size(self) -> float:
        """log10 of the current search space size N."""
        terms = [_lf(len(b.left.nodes)) for b in self.bags.values()]
        for coll in self.collections.values():
            for n, (L, _) in coll.by_size.items():
                c = len(L)
                terms.append(c * _lf(n))
                terms.append(_lf(c))
        return math.fsum(terms)

    def exact_size(self) -> int:
        out = 1
        for b in self.bags.values():
            out *= math.factorial(len(b.left.nodes))
        for coll in self.collections.values():
            for n, (L, _) in coll.by_size.items():
                c = len(L)
                out *= math.factorial(n) ** c * math.factorial(c)
        return out

    def size(self, digit_cap: int | None = None) -> tuple[int | None, float]:
        cap = self.digit_cap if digit_cap is None else digit_cap
        lg = self.log10_size()
        return (self.exact_size() if lg < cap else None), lg

    def _record(self, name: str) -> None:
        exact, lg = self.size()
        self.metrics_log.append(StageRecord(name, lg, exact))

    def _emit(self, kind: str, before: float, predicted: float) -> None:
        self.observer(kind, before, self.log10_size(), predicted)

    # node mapping

    def all_mapped(self) -> bool:
        return len(self.phi) == len(self.t1)

    def _map(self, u: int, v: int) -> None:
        """Map ``u`` to ``v`` and climb to the parents while they are unmapped."""
        lab1, lab2 = self.labels
        par1, par2 = self.parent
        while True:
            self.map_nodes_calls += 1
            a, b = lab1[u], lab2[v]
            new_label = a not in self.f
            if not ext_bij(a, b, self.f, self.mode):
                raise _Contradiction(Reason.EXT_BIJ_LABEL_CONFLICT, f"{a}->{b}")
            if new_label:
                self._pending_labels.append((a, b))
            if not self.phi.extend(u, v):
                raise _Contradiction(Reason.EXT_BIJ_NODE_CONFLICT, f"{u}->{v}")
            self._delete(u, v)
            self._split_children(u, v)
            self._propagate()
            pu, pv = par1[u], par2[v]
            if pu is None and pv is None:
                return
            if pu is None or pv is None:
                raise _Contradiction(Reason.EXT_BIJ_NODE_CONFLICT, "root mapped to a non-root")
            if self.phi.get(pu) == pv:
                return
            u, v = pu, pv

    def _delete(self, u: int, v: int) -> None:
        s, r = self.loc[0][u], self.loc[1][v]
        if s is None or r is None or s.owner is not r.owner:
            raise _Contradiction(Reason.BAG_CARDINALITY_MISMATCH,
                                 f"nodes {u} and {v} are not candidates of one container")
        owner = s.owner
        self.loc[0][u] = self.loc[1][v] = None
        if isinstance(owner, Bag):
            s.nodes.discard(u)
            r.nodes.discard(v)
            k = len(s.nodes)
            if k == 0:
                self._drop_bag(owner)
            elif k == 1:
                heapq.heappush(self._singletons, owner.index)
            return
        n = len(s.nodes)
        if len(r.nodes) != n:
            raise _Contradiction(Reason.COLLECTION_MISMATCH,
                                 f"nodes {u} and {v} sit in sets of sizes {n} and {len(r.nodes)}")
        self._coll_remove(owner, s, n)
        self._coll_remove(owner, r, n)
        s.nodes.discard(u)
        r.nodes.discard(v)
        if n > 1:
            self._coll_add(owner, s, n - 1)
            self._coll_add(owner, r, n - 1)
        else:
            self._drop_collection_if_empty(owner)

    def _split_children(self, u: int, v: int) -> None:
        groups: dict = {}
        for side, w in ((0, u), (1, v)):
            loc = self.loc[side]
            for c in self.children[side][w]:
                s = loc[c]
                if s is None:
                    continue
                per_owner = groups.get(s.owner)
                if per_owner is None:
                    per_owner = groups[s.owner] = ({}, {})
                per_owner[side].setdefault(s, []).append(c)
        for owner, (L, R) in groups.items():
            if isinstance(owner, Bag):
                self._split_bag(owner, L, R)
            else:
                self._split_collection(owner, L, R)

    def _split_bag(self, bag: Bag, L: dict, R: dict) -> None:
        if len(L) != 1 or len(R) != 1:
            raise _Contradiction(Reason.BAG_CARDINALITY_MISMATCH,
                                 "children of the mapped nodes meet a bag on one side only")
        (a,), (b,) = L.values(), R.values()
        p_u, q_v = len(a), len(b)
        if p_u != q_v:
            raise _Contradiction(Reason.BAG_CARDINALITY_MISMATCH,
                                 f"children split a bag {p_u} vs {q_v}")
        total = len(bag.left.nodes)
        if p_u == total:
            return
        before = self.log10_size() if self.observer else 0.0
        bag.left.nodes.difference_update(a)
        bag.right.nodes.difference_update(b)
        self._new_bag(a, b)
        if total - p_u == 1:
            heapq.heappush(self._singletons, bag.index)
        if self.observer:
            self._emit("bag_split", before, _lf(total) - _lf(p_u) - _lf(total - p_u))

    def _split_collection(self, coll: Collection, L: dict, R: dict) -> None:
        left = sorted(((len(s.nodes), len(a), min(a)), s, a) for s, a in L.items()) \
            if L else []
        right = sorted(((len(s.nodes), len(b), min(b)), s, b) for s, b in R.items()) \
            if R else []
        if [k[:2] for k, _, _ in left] != [k[:2] for k, _, _ in right]:
            raise _Contradiction(Reason.COLLECTION_MISMATCH,
                                 "children of the mapped nodes split a collection asymmetrically")
        for (key, s, a), (_, r, b) in zip(left, right):
            n, q = key[0], key[1]
            if q == n:
                continue
            before = self.log10_size() if self.observer else 0.0
            if self.observer:
                predicted = _collection_split_factor(n - q, q, coll.count(n), coll.count(q),
                                                     coll.count(n - q))
            self._coll_remove(coll, s, n)
            self._coll_remove(coll, r, n)
            s.nodes.difference_update(a)
            r.nodes.difference_update(b)
            self._coll_add(coll, s, n - q)
            self._coll_add(coll, r, n - q)
            self._coll_add(coll, self._subset(set(a), coll, 0, s.label), q)
            self._coll_add(coll, self._subset(set(b), coll, 1, r.label), q)
            if self.observer:
                self._emit("collection_split", before, predicted)

    # deduction rules

    def _propagate(self) -> None:
        """Run rule 2 (and rule 3 on newly fixed label pairs) to a fixpoint."""
        sizes, labels = self._pending_sizes, self._pending_labels
        while sizes or labels:
            if labels:
                self._extract_label_pair(*labels.popleft())
                continue
            coll, n = sizes.popleft()
            if not coll.alive:
                continue
            cls = coll.by_size.get(n)
            if cls is None:
                self._drop_collection_if_empty(coll)
                continue
            L, R = cls
            if len(L) != len(R):
                raise _Contradiction(Reason.COLLECTION_MISMATCH,
                                     f"size class {n} holds {len(L)} vs {len(R)} sets")
            if len(L) != 1:
                continue
            (s,), (r,) = L, R
            new_label = s.label not in self.f
            if not ext_bij(s.label, r.label, self.f, self.mode):
                raise _Contradiction(Reason.EXT_BIJ_LABEL_CONFLICT, f"{s.label}->{r.label}")
            if new_label:
                labels.append((s.label, r.label))
            self._coll_remove(coll, s, n)
            self._coll_remove(coll, r, n)
            self._bag_from_subsets(s, r)
            self._drop_collection_if_empty(coll)

    def _extract_label_pair(self, a, b) -> None:
        """Rule 3 on collections once ``f(a) = b`` is known.

        Inside every collection the sets labeled ``a`` must pair with the sets
        labeled ``b``; they move to a collection of their own.
        """
        per_coll: dict = {}
        for side, lab in ((0, a), (1, b)):
            for s in self.label_index[side].get(lab, ()):
                per_coll.setdefault(s.owner, ([], []))[side].append(s)
        for coll in sorted(per_coll, key=lambda c: c.index):
            A, B = per_coll[coll]
            if not A or not B:
                raise _Contradiction(Reason.RULE3_MISSING_COUNTERPART,
                                     f"collection #{coll.index} lacks a counterpart for {a}->{b}")
            if sorted(len(s.nodes) for s in A) != sorted(len(s.nodes) for s in B):
                raise _Contradiction(Reason.COLLECTION_MISMATCH,
                                     f"sets labeled {a} and {b} differ in sizes")
            if len(A) == sum(len(L) for L, _ in coll.by_size.values()):
                continue  # nothing else in this collection
            before = self.log10_size() if self.observer else 0.0
            moved: dict[int, int] = {}
            for s in A:
                moved[len(s.nodes)] = moved.get(len(s.nodes), 0) + 1
            predicted = math.fsum(
                _lf(coll.count(n)) - _lf(k) - _lf(coll.count(n) - k) for n, k in moved.items()
            )
            target = self._new_collection()
            for s in A + B:
                self._coll_remove(coll, s)
                self._coll_add(target, s)
            if self.observer:
                self._emit("label_extract", before, predicted)

    def _rule1(self) -> None:
        heap = self._singletons
        while heap:
            bag = self.bags.get(heapq.heappop(heap))
            if bag is None or len(bag.left.nodes) != 1:
                continue
            (u,), (v,) = bag.left.nodes, bag.right.nodes
            self._map(u, v)

    # filters

    def _refine(self, key1, key2, kind: str) -> None:
        for bag in list(self.bags.values()):
            groups1: dict = {}
            for x in bag.left.nodes:
                groups1.setdefault(key1(x), []).append(x)
            groups2: dict = {}
            for y in bag.right.nodes:
                groups2.setdefault(key2(y), []).append(y)
            if groups1.keys() != groups2.keys() or any(
                    len(groups1[k]) != len(groups2[k]) for k in groups1):
                raise _Contradiction(Reason.BAG_CARDINALITY_MISMATCH,
                                     f"{kind} filter splits bag #{bag.index} unevenly")
            if len(groups1) == 1:
                continue
            before = self.log10_size() if self.observer else 0.0
            self._drop_bag(bag)
            for k in sorted(groups1):
                self._new_bag(groups1[k], groups2[k])
            if self.observer:
                total = len(bag.left.nodes)
                self._emit("filter", before,
                           _lf(total) - math.fsum(_lf(len(g)) for g in groups1.values()))

    def _depth_filter(self) -> None:
        d1, d2 = self.t1.depths, self.t2.depths
        self._refine(d1.__getitem__, d2.__getitem__, "depth")

    def _parent_filter(self) -> None:
        # AHU colours are in one-to-one correspondence with children signatures,
        # so the colour of the parent stands for its signature.
        (c1, c2), (p1, p2) = self.col, self.parent
        self._refine(lambda x: -1 if p1[x] is None else c1[p1[x]],
                     lambda y: -1 if p2[y] is None else c2[p2[y]], "parents")

    def _class_filter(self) -> None:
        c1, c2 = self.col
        self._refine(c1.__getitem__, c2.__getitem__, "equiv_class")

    def _label_filter(self) -> None:
        lab1, lab2 = self.labels
        for bag in list(self.bags.values()):
            S1: dict = {}
            for x in sorted(bag.left.nodes):
                S1.setdefault(lab1[x], []).append(x)
            S2: dict = {}
            for y in sorted(bag.right.nodes):
                S2.setdefault(lab2[y], []).append(y)
            self._rule3(bag, S1, S2)

    def _rule3(self, bag: Bag | None, S1: dict, S2: dict) -> None:
        f = self.f
        paired = []
        rest1: dict = {}
        for a in S1:
            if a in f:
                b = f[a]
                if b not in S2:
                    raise _Contradiction(Reason.RULE3_MISSING_COUNTERPART, f"no {b} for {a}")
                if len(S1[a]) != len(S2[b]):
                    raise _Contradiction(Reason.BAG_CARDINALITY_MISMATCH,
                                         f"{len(S1[a])} nodes labeled {a} vs {len(S2[b])} labeled {b}")
                paired.append((S1[a], S2[b]))
            else:
                rest1[a] = S1[a]
        rest2: dict = {}
        for b in S2:
            if b in f.inverse:
                if f.inverse[b] not in S1:
                    raise _Contradiction(Reason.RULE3_MISSING_COUNTERPART,
                                         f"no {f.inverse[b]} for {b}")
            else:
                rest2[b] = S2[b]
        sizes1 = sorted(len(s) for s in rest1.values())
        sizes2 = sorted(len(s) for s in rest2.values())
        if sizes1 != sizes2:
            raise _Contradiction(Reason.COLLECTION_MISMATCH,
                                 "unmapped label classes differ in sizes")
        if bag is not None:
            if len(paired) == 1 and not rest1:
                return  # already a single label pair
            before = self.log10_size() if self.observer else 0.0
            total = len(bag.left.nodes)
            self._drop_bag(bag)
        for left, right in paired:
            self._new_bag(left, right)
        if rest1:
            coll = self._new_collection()
            for a, nodes in rest1.items():
                self._coll_add(coll, self._subset(set(nodes), coll, 0, a))
            for b, nodes in rest2.items():
                self._coll_add(coll, self._subset(set(nodes), coll, 1, b))
        if bag is not None and self.observer:
            counts: dict[int, int] = {}
            for s in sizes1:
                counts[s] = counts.get(s, 0) + 1
            after = math.fsum(_lf(len(l)) for l, _ in paired) + math.fsum(
                c * _lf(n) + _lf(c) for n, c in counts.items())
            self._emit("filter", before, _lf(total) - after)

    # driver

    def run(self, validate: bool = False) -> "Outcome":
        self._record("initial")
        if validate:
            self.validate()
        steps = (
            ("depth", self._depth_filter),
            ("parents", self._parent_filter),
            ("equiv_class", self._class_filter),
            ("labels", self._label_filter),
        )
        try:
            for name, step in steps:
                step()
                self._propagate()
                self._rule1()
                self._record(name)
                if validate:
                    self.validate()
        except _Contradiction as exc:
            self.failure = exc
            return self._not_isomorphic(exc.reason, str(exc))
        return self.outcome()

    def outcome(self) -> "Outcome":
        """Outcome for the current (contradiction-free) state."""
        logeq = ahu.log10_n_equiv(self.t1, self.coloring)
        stages = list(self.metrics_log)
        if self.all_mapped():
            phi = dict(self.phi.forward)
            if not is_tree_isomorphism(self.t1, self.t2, phi) or not relation_is_bijection(
                    induced_relation(self.t1, self.t2, phi),
                    self.t1.alphabet(), self.t2.alphabet()):
                raise InvariantError("fully mapped state is not a tree ciphering")
            return Isomorphic(stages=stages, log10_N_equiv=logeq,
                              map_nodes_calls=self.map_nodes_calls,
                              phi=phi, f=dict(self.f.forward))
        return Undecided(stages=stages, log10_N_equiv=logeq,
                         map_nodes_calls=self.map_nodes_calls, state=self)

    def _not_isomorphic(self, reason: Reason, detail: str = "") -> "NotIsomorphic":
        return NotIsomorphic(stages=list(self.metrics_log),
                             log10_N_equiv=ahu.log10_n_equiv(self.t1, self.coloring),
                             map_nodes_calls=self.map_nodes_calls, reason=reason, detail=detail)

    # checks

    def validate(self) -> None:
        """Raise :class:`InvariantError` if the state is structurally inconsistent."""
        problems = []
        seen = ([0] * len(self.t1), [0] * len(self.t2))
        for bag in self.bags.values():
            if len(bag.left.nodes) != len(bag.right.nodes) or not bag.left.nodes:
                problems.append(f"unbalanced or empty {bag!r}")
            for side, s in ((0, bag.left), (1, bag.right)):
                if s.owner is not bag:
                    problems.append(f"subset owner mismatch in {bag!r}")
                for x in s.nodes:
                    seen[side][x] += 1
                    if self.loc[side][x] is not s:
                        problems.append(f"locator of node {x} (side {side}) is stale")
        for coll in self.collections.values():
            if coll.is_empty():
                problems.append(f"empty {coll!r} is still registered")
            for n, (L, R) in coll.by_size.items():
                if len(L) != len(R):
                    problems.append(f"{coll!r}: #C1({n}) != #C2({n})")
                for side, group in ((0, L), (1, R)):
                    for s in group:
                        if len(s.nodes) != n or s.owner is not coll:
                            problems.append(f"{coll!r}: misplaced subset {s!r}")
                        if {self.labels[side][x] for x in s.nodes} != {s.label}:
                            problems.append(f"{coll!r}: subset {s!r} is not uniform")
                        for x in s.nodes:
                            seen[side][x] += 1
                            if self.loc[side][x] is not s:
                                problems.append(f"locator of node {x} (side {side}) is stale")
        for side, mapped in ((0, self.phi.forward), (1, self.phi.inverse)):
            for x, cnt in enumerate(seen[side]):
                if (x in mapped) + cnt != 1:
                    problems.append(f"node {x} (side {side}) is mapped/held {int(x in mapped)}/{cnt} times")
        par1, par2 = self.parent
        lab1, lab2 = self.labels
        for u, v in self.phi.items():
            pu, pv = par1[u], par2[v]
            if (pu is None) != (pv is None) or (pu is not None and self.phi.get(pu) != pv):
                problems.append(f"phi({u})={v} does not respect the parent relation")
            if self.f.get(lab1[u]) != lab2[v]:
                problems.append(f"phi({u})={v} disagrees with f on labels")
        if problems:
            raise InvariantError("; ".join(problems[:10]))

    def residual(self) -> dict:
        return {
            "bags": [
                {"left": sorted(b.left.nodes), "right": sorted(b.right.nodes)}
                for b in self.bags.values()
            ],
            "collections": [
                {
                    "by_size": [
                        {
                            "n": n,
                            "left": [sorted(s.nodes) for s in L],
                            "right": [sorted(s.nodes) for s in R],
                        }
                        for n, (L, R) in sorted(c.by_size.items())
                    ]
                }
                for c in self.collections.values()
            ],
        }

    # guarded entry points used by the public wrappers and the backtracker

    def _pair_sets(self, x: int, y: int) -> None:
        """Decide that the collection sets holding ``x`` (T1) and ``y`` (T2) pair up."""
        s, r = self.loc[0][x], self.loc[1][y]
        coll = s.owner
        if not isinstance(coll, Collection) or r.owner is not coll or len(s.nodes) != len(r.nodes):
            raise _Contradiction(Reason.COLLECTION_MISMATCH, "sets cannot be paired")
        new_label = s.label not in self.f
        if not ext_bij(s.label, r.label, self.f, self.mode):
            raise _Contradiction(Reason.EXT_BIJ_LABEL_CONFLICT, f"{s.label}->{r.label}")
        if new_label:
            self._pending_labels.append((s.label, r.label))
        self._coll_remove(coll, s)
        self._coll_remove(coll, r)
        self._bag_from_subsets(s, r)
        self._drop_collection_if_empty(coll)

    def decide(self, kind: str, x: int, y: int) -> bool:
        """Apply one search decision (``"map"`` two nodes or ``"pair"`` two sets) and propagate."""
        def go():
            if kind == "map":
                self._map(x, y)
            else:
                self._pair_sets(x, y)
            self._propagate()
            self._rule1()
        return self.attempt(go)

    def attempt(self, fn, *args) -> bool:
        try:
            fn(*args)
            return True
        except _Contradiction as exc:
            self.failure = exc
            return False


def _collection_split_factor(p: int, q: int, c_n: int, c_p: int, c_q: int) -> float:
    """log10 of the drop in N when one set of each side of C(p+q) splits into p and q.

    Counts are taken before the split.  When ``p == q`` both halves land in the
    same size class, whose count goes from c_p to c_p + 2.
    """
    binom = _lf(p + q) - _lf(p) - _lf(q)
    if p == q:
        return binom + math.log10(c_n) - math.log10(c_p + 1) - math.log10(c_p + 2)
    return binom + math.log10(c_n) - math.log10(c_p + 1) - math.log10(c_q + 1)


# outcomes


@dataclass
class Outcome:
    stages: list[StageRecord]
    log10_N_equiv: float
    map_nodes_calls: int
    verdict: ClassVar[str] = ""

    @property
    def log10_N_final(self) -> float:
        """log10 N after the last completed stage (0 when nothing was recorded)."""
        return self.stages[-1].log10_N if self.stages else 0.0

    @property
    def r_final(self) -> float:
        return self.log10_N_final - self.log10_N_equiv

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "log10_N_final": self.log10_N_final,
            "log10_N_equiv": self.log10_N_equiv,
            "r_final": self.r_final,
            "map_nodes_calls": self.map_nodes_calls,
            "stages": [
                {"name": s.name, "log10_N": s.log10_N,
                 **({"N": str(s.exact_N)} if s.exact_N is not None else {})}
                for s in self.stages
            ],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


@dataclass
class Isomorphic(Outcome):
    phi: dict[int, int] = field(default_factory=dict)
    f: dict[str, str] = field(default_factory=dict)
    verdict: ClassVar[str] = "isomorphic"

    @property
    def log10_N_final(self) -> float:
        return 0.0

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["phi"] = [[u, v] for u, v in sorted(self.phi.items())]
        d["f"] = [[a, b] for a, b in sorted(self.f.items())]
        return d


@dataclass
class NotIsomorphic(Outcome):
    reason: Reason = Reason.TOPOLOGY_MISMATCH
    detail: str = ""
    verdict: ClassVar[str] = "not_isomorphic"

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["reason"] = self.reason.value
        return d


@dataclass
class Undecided(Outcome):
    state: EngineState | None = None
    verdict: ClassVar[str] = "undecided"

    @property
    def exact_N_final(self) -> int | None:
        return self.stages[-1].exact_N if self.stages else None

    @property
    def phi(self) -> dict[int, int]:
        """Node pairs fixed so far."""
        return dict(self.state.phi.forward)

    @property
    def f(self) -> dict[str, str]:
        return dict(self.state.f.forward)

    def to_dict(self) -> dict:
        d = super().to_dict()
        st = self.state
        d["phi"] = [[u, v] for u, v in sorted(st.phi.items())]
        d["f"] = [[a, b] for a, b in sorted(st.f.items())]
        d["residual"] = st.residual()
        return d


# public functional API


def run(t1: LabeledTree, t2: LabeledTree, mode: CipherMode = CipherMode.BIJECTIVE, *,
        validate: bool = False, observer: Observer | None = None,
        digit_cap: int = DEFAULT_DIGIT_CAP) -> Outcome:
    """Reduce the search space for a tree ciphering between ``t1`` and ``t2``.

    Parameters
    ----------
    mode : CipherMode
        ``IDENTITY`` only admits the identity on labels.
    validate : bool
        Check structural invariants after every stage (raises InvariantError).
    observer : callable
        ``observer(kind, log10_before, log10_after, predicted_drop)`` is called
        around every individual split; used for accounting checks.
    digit_cap : int
        Stage sizes with more decimal digits are only kept in log form.
    """
    coloring = ahu.color([t1, t2])
    c1, c2 = coloring.colors
    if len(t1) != len(t2) or c1[t1.root] != c2[t2.root]:
        logeq = ahu.log10_n_equiv(t1, coloring)
        return NotIsomorphic(stages=[], log10_N_equiv=logeq, map_nodes_calls=0,
                             reason=Reason.TOPOLOGY_MISMATCH)
    state = EngineState(t1, t2, mode, coloring=coloring, observer=observer, digit_cap=digit_cap)
    return state.run(validate=validate)


def map_nodes(u: int, v: int, state: EngineState) -> bool:
    """Map ``u`` to ``v`` (and their unmapped ancestors); False on contradiction."""
    if state.phi.get(u) == v:
        return True
    return state.attempt(state._map, u, v)


def split_children(u: int, v: int, state: EngineState) -> bool:
    """Carve the children of ``u`` and ``v`` out of their containers; False on contradiction."""
    def go():
        state._split_children(u, v)
        state._propagate()
    return state.attempt(go)


def rule1_map_singletons(state: EngineState) -> bool:
    return state.attempt(state._rule1)


def rule2_collection_singletons(state: EngineState) -> bool:
    def go():
        for coll in list(state.collections.values()):
            for n in list(coll.by_size):
                state._pending_sizes.append((coll, n))
        state._propagate()
    return state.attempt(go)


def rule3_label_bags(left_sets: Mapping, right_sets: Mapping, state: EngineState,
                     bag: Bag | None = None) -> bool:
    """Turn one bag's label classes into bags (known label pairs) and one collection.

    ``left_sets``/``right_sets`` map a label to the nodes of that label.  When
    ``bag`` is given it is replaced; otherwise the nodes must not be held
    anywhere yet.
    """
    S1 = {a: sorted(v) for a, v in left_sets.items()}
    S2 = {b: sorted(v) for b, v in right_sets.items()}
    return state.attempt(state._rule3, bag, S1, S2)


def search_space_size(state: EngineState, digit_cap: int | None = None) -> tuple[int | None, float]:
    """``(exact N or None above the digit cap, log10 N)``."""
    return state.size(digit_cap)


def log_ratio(state: EngineState, t1: LabeledTree | None = None) -> float:
    t1 = state.t1 if t1 is None else t1
    return state.log10_size() - ahu.log10_n_equiv(t1, state.coloring)
