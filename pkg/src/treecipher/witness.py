"""Checks on explicit node bijections between two labeled trees."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .trees import LabeledTree


def is_tree_isomorphism(t1: LabeledTree, t2: LabeledTree, phi: Mapping[int, int]) -> bool:
    """True iff ``phi`` is a bijection T1 -> T2 mapping roots together and children under parents."""
    n = len(t1)
    if len(t2) != n or len(phi) != n:
        return False
    if set(phi) != set(range(n)) or set(phi.values()) != set(range(n)):
        return False
    if phi[t1.root] != t2.root:
        return False
    for u in range(n):
        p = t1.parent[u]
        if p is not None and t2.parent[phi[u]] != phi[p]:
            return False
    return True


def induced_relation(t1: LabeledTree, t2: LabeledTree, phi: Mapping[int, int]) -> frozenset[tuple[str, str]]:
    return frozenset((t1.label_of(u), t2.label_of(v)) for u, v in phi.items())


def relation_is_bijection(rel, left: set, right: set) -> bool:
    """Every element of ``left`` relates to exactly one of ``right`` and conversely."""
    fwd: dict = {}
    bwd: dict = {}
    for x, y in rel:
        if fwd.setdefault(x, y) != y or bwd.setdefault(y, x) != x:
            return False
    return set(fwd) == set(left) and set(bwd) == set(right)


@dataclass(frozen=True)
class IsomorphismWitness:
    """A total node bijection plus the label relation it induces."""

    t1: LabeledTree = field(repr=False)
    t2: LabeledTree = field(repr=False)
    phi: Mapping[int, int]
    induced_relation: frozenset

    @classmethod
    def from_phi(cls, t1, t2, phi) -> "IsomorphismWitness":
        phi = dict(phi)
        return cls(t1, t2, phi, induced_relation(t1, t2, phi))

    def cipher(self) -> dict[str, str] | None:
        """The label map when the induced relation is a function, else None."""
        out: dict[str, str] = {}
        for a, b in self.induced_relation:
            if out.setdefault(a, b) != b:
                return None
        return out

    def compose(self, other: "IsomorphismWitness") -> "IsomorphismWitness":
        """``other`` after ``self``: T1 -> T2 -> T3."""
        return IsomorphismWitness.from_phi(
            self.t1, other.t2, {u: other.phi[v] for u, v in self.phi.items()}
        )

    def inverse(self) -> "IsomorphismWitness":
        return IsomorphismWitness.from_phi(self.t2, self.t1, {v: u for u, v in self.phi.items()})
