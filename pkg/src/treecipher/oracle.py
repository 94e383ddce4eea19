"""
Ground truth on small trees.

:func:`enumerate_isomorphisms` lists every tree isomorphism, :func:`is_ciphering`
tests one of them, :func:`decide_brute` combines the two.
:func:`complete_backtracking` finishes an undecided engine run by depth-first
search over the residual bags and collections.
"""

from __future__ import annotations

from itertools import permutations, product
from typing import Iterator

from . import ahu
from .engine import (
    CipherMode,
    Collection,
    EngineState,
    Isomorphic,
    NotIsomorphic,
    Outcome,
    Reason,
    Undecided,
)
from .trees import LabeledTree
from .witness import (
    IsomorphismWitness,
    induced_relation,
    is_tree_isomorphism,
    relation_is_bijection,
)

__all__ = [
    "IsomorphismWitness",
    "OracleCapExceeded",
    "enumerate_isomorphisms",
    "is_ciphering",
    "decide_brute",
    "complete_backtracking",
    "is_tree_isomorphism",
    "induced_relation",
]

DEFAULT_CAP = 10**6


class OracleCapExceeded(RuntimeError):
    """The isomorphism space is too large for exhaustive enumeration."""


def _child_assignments(kids1, kids2, col1, col2):
    """All colour-preserving bijections between two child lists, as lists of pairs."""
    g1: dict[int, list[int]] = {}
    g2: dict[int, list[int]] = {}
    for c in kids1:
        g1.setdefault(col1[c], []).append(c)
    for c in kids2:
        g2.setdefault(col2[c], []).append(c)
    if sorted((k, len(v)) for k, v in g1.items()) != sorted((k, len(v)) for k, v in g2.items()):
        return
    keys = sorted(g1)
    lefts = [sorted(g1[k]) for k in keys]
    per_class = [list(permutations(sorted(g2[k]))) for k in keys]
    for choice in product(*per_class):
        yield [pair for left, right in zip(lefts, choice) for pair in zip(left, right)]


def enumerate_isomorphisms(t1: LabeledTree, t2: LabeledTree,
                           coloring: ahu.Coloring | None = None) -> Iterator[IsomorphismWitness]:
    """Yield every element of Isom(t1, t2) exactly once (nothing if the shapes differ)."""
    if len(t1) != len(t2):
        return
    if coloring is None:
        coloring = ahu.color([t1, t2])
    col1, col2 = coloring.of(t1), coloring.of(t2)
    if col1[t1.root] != col2[t2.root]:
        return

    phi: dict[int, int] = {}

    def extend(pending: list[tuple[int, int]]):
        if not pending:
            yield IsomorphismWitness.from_phi(t1, t2, phi)
            return
        u, v = pending[-1]
        rest = pending[:-1]
        phi[u] = v
        for pairs in _child_assignments(t1.children[u], t2.children[v], col1, col2):
            yield from extend(rest + pairs)
        del phi[u]

    yield from extend([(t1.root, t2.root)])


def is_ciphering(w: IsomorphismWitness, mode: CipherMode = CipherMode.BIJECTIVE) -> bool:
    """True iff the label relation induced by ``w`` is a bijection of the two alphabets."""
    if mode is CipherMode.IDENTITY and any(a != b for a, b in w.induced_relation):
        return False
    return relation_is_bijection(w.induced_relation, w.t1.alphabet(), w.t2.alphabet())


def decide_brute(t1: LabeledTree, t2: LabeledTree, mode: CipherMode = CipherMode.BIJECTIVE,
                 cap: int = DEFAULT_CAP) -> tuple[bool, IsomorphismWitness | None]:
    """Exhaustive decision of t1 ~ t2.  Refuses when N_equiv(t1) exceeds ``cap``."""
    if len(t1) != len(t2):
        return False, None
    coloring = ahu.color([t1, t2])
    if coloring.colors[0][t1.root] != coloring.colors[1][t2.root]:
        return False, None
    count, _ = ahu.n_equiv(t1, coloring)
    if count > cap:
        raise OracleCapExceeded(f"{count} isomorphisms exceed the cap of {cap}")
    if len(t1.alphabet()) != len(t2.alphabet()):
        return False, None
    for w in enumerate_isomorphisms(t1, t2, coloring):
        if is_ciphering(w, mode):
            return True, w
    return False, None


def _branching(state: EngineState):
    """Smallest open choice: ``("map", u, [v...])`` or ``("pair", x, [y...])``."""
    best = None
    for bag in state.bags.values():
        k = len(bag.left.nodes)
        if best is None or k < best[0]:
            best = (k, "map", bag)
    for coll in state.collections.values():
        for n, (L, _) in coll.by_size.items():
            k = len(L)
            if best is None or k < best[0]:
                best = (k, "pair", (coll, n))
    if best is None:
        return None
    _, kind, obj = best
    if kind == "map":
        u = min(obj.left.nodes)
        return kind, u, sorted(obj.right.nodes)
    coll, n = obj
    L, R = coll.by_size[n]
    x = min(min(s.nodes) for s in L)
    return kind, x, sorted(min(s.nodes) for s in R)


def complete_backtracking(residual: Undecided | EngineState | Outcome) -> Outcome:
    """Decide an undecided run by depth-first search with full propagation per decision.

    Each decision works on a copy of the state, so a dead end is undone by
    dropping the copy.  Returns :class:`Isomorphic` (with a checked witness) or
    :class:`NotIsomorphic` with reason ``SearchExhausted``.
    """
    if isinstance(residual, (Isomorphic, NotIsomorphic)):
        return residual
    state = residual.state if isinstance(residual, Undecided) else residual
    root = state.copy()
    if root.all_mapped():
        return root.outcome()
    stack = [(root, _branching(root), 0)]
    while stack:
        st, (kind, x, options), i = stack.pop()
        if i >= len(options):
            continue
        stack.append((st, (kind, x, options), i + 1))
        child = st.copy()
        if not child.decide(kind, x, options[i]):
            continue
        if child.all_mapped():
            return child.outcome()
        nxt = _branching(child)
        stack.append((child, nxt, 0))
    out = state.outcome()
    return NotIsomorphic(stages=out.stages, log10_N_equiv=out.log10_N_equiv,
                         map_nodes_calls=out.map_nodes_calls, reason=Reason.SEARCH_EXHAUSTED)


def count_cipherings(t1: LabeledTree, t2: LabeledTree, mode: CipherMode = CipherMode.BIJECTIVE) -> int:
    return sum(1 for w in enumerate_isomorphisms(t1, t2) if is_ciphering(w, mode))
