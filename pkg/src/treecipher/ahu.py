"""
AHU colouring: bottom-up equivalence classes of rooted subtrees.

Two nodes, in the same tree or in different trees coloured in the same
session, get the same colour iff their subtrees have the same shape.
Labels are ignored.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from .trees import LabeledTree

__all__ = [
    "Coloring",
    "color",
    "topologically_isomorphic",
    "n_equiv",
    "log10_n_equiv",
    "children_signature",
]

_LN10 = math.log(10.0)


def log10_factorial(k: int) -> float:
    return math.lgamma(k + 1) / _LN10


@dataclass
class Coloring:
    """Colours of one or more trees sharing a single interning table.

    ``colors[i][u]`` is the colour of node ``u`` of the i-th tree.  The table
    maps a sorted tuple of child colours to a colour id; leaves get the id of
    the empty tuple, which is always 0.
    """

    trees: list[LabeledTree]
    colors: list[list[int]] = field(default_factory=list)
    table: dict[tuple[int, ...], int] = field(default_factory=lambda: {(): 0})

    def add(self, t: LabeledTree) -> list[int]:
        col = [0] * len(t)
        table = self.table
        children = t.children
        for u in reversed(t.bfs_order()):
            kids = children[u]
            if kids:
                key = tuple(sorted([col[c] for c in kids]))
                c = table.get(key)
                if c is None:
                    c = table[key] = len(table)
                col[u] = c
        self.trees.append(t)
        self.colors.append(col)
        return col

    def of(self, t: LabeledTree) -> list[int]:
        for tt, col in zip(self.trees, self.colors):
            if tt is t:
                return col
        raise KeyError("tree was not coloured in this session")

    @property
    def n_colors(self) -> int:
        return len(self.table)


def color(trees) -> Coloring:
    """Colour every node of ``trees`` with one shared interning table."""
    if isinstance(trees, LabeledTree):
        trees = [trees]
    trees = list(trees)
    if not trees:
        raise ValueError("need at least one tree")
    coloring = Coloring(trees=[])
    for t in trees:
        coloring.add(t)
    return coloring


def topologically_isomorphic(t1: LabeledTree, t2: LabeledTree) -> bool:
    if len(t1) != len(t2):
        return False
    c = color([t1, t2])
    return c.colors[0][t1.root] == c.colors[1][t2.root]


def _child_color_counts(t: LabeledTree, col: list[int]):
    for u in range(len(t)):
        kids = t.children[u]
        if len(kids) > 1:
            yield Counter(col[c] for c in kids).values()


def n_equiv(t: LabeledTree, coloring: Coloring | None = None) -> tuple[int, float]:
    """Number of tree isomorphisms from ``t`` onto any tree of its shape.

    Product over nodes of the factorials of the multiplicities of child
    colours.  Returns ``(exact, log10)``; the log is a sum of log-factorials,
    not the log of the exact value.

    >>> from treecipher.trees import parse
    >>> n_equiv(parse("x(x(x,x),x(x,x),x)"))[0]
    8
    """
    col = coloring.of(t) if coloring is not None else color(t).colors[0]
    exact = 1
    logs = []
    for counts in _child_color_counts(t, col):
        for k in counts:
            if k > 1:
                exact *= math.factorial(k)
                logs.append(log10_factorial(k))
    return exact, math.fsum(logs)


def log10_n_equiv(t: LabeledTree, coloring: Coloring | None = None) -> float:
    """log10 of N_equiv(t) without forming the big integer."""
    col = coloring.of(t) if coloring is not None else color(t).colors[0]
    return math.fsum(
        log10_factorial(k) for counts in _child_color_counts(t, col) for k in counts if k > 1
    )


def children_signature(t: LabeledTree, v: int, coloring: Coloring) -> tuple[int, ...]:
    """Sorted multiset of the colours of the children of ``v``."""
    col = coloring.of(t)
    return tuple(sorted(col[c] for c in t.children[v]))
