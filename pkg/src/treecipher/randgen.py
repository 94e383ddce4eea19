"""
Seeded random trees for experiments.

All randomness goes through numpy's PCG64 bit generator.  Each purpose draws
from its own stream, ``SeedSequence(seed, spawn_key=(stream,))``, so changing
how labels are drawn never changes the shapes produced for a seed:

========  ======
stream    key
========  ======
shape     0
labels    1
shuffle   2
perturb   3
cipher    4
========  ======
"""

from __future__ import annotations

import string
from dataclasses import dataclass

import numpy as np

from .trees import LabeledTree

__all__ = [
    "GenConfig",
    "rng_for",
    "alphabet_symbols",
    "random_recursive_tree",
    "assign_labels",
    "shuffled_copy",
    "perturb_one_label",
    "cipher_copy",
    "derive_seed",
    "labeled_tree",
    "make_pair",
]

SHAPE, LABELS, SHUFFLE, PERTURB, CIPHER = range(5)


@dataclass(frozen=True)
class GenConfig:
    n: int
    alphabet_size: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.alphabet_size < 1:
            raise ValueError("alphabet_size must be at least 1")


def rng_for(seed: int, stream: int, *extra: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(stream, *extra))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(*parts: int) -> int:
    """Deterministic 63-bit seed from integer parts (used for benchmark cells)."""
    ss = np.random.SeedSequence([int(p) & (2**64 - 1) for p in parts])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def alphabet_symbols(k: int) -> list[str]:
    """``A..Z``, then ``AA, AB, ...`` (spreadsheet column names)."""
    out = []
    letters = string.ascii_uppercase
    i = 0
    while len(out) < k:
        j, name = i, ""
        while True:
            name = letters[j % 26] + name
            j = j // 26 - 1
            if j < 0:
                break
        out.append(name)
        i += 1
    return out


def random_recursive_tree(cfg: GenConfig) -> LabeledTree:
    """Node i attaches to a uniform node among 0..i-1.  All labels are ``A``."""
    n = cfg.n
    rng = rng_for(cfg.seed, SHAPE)
    parent: list[int | None] = [None]
    if n > 1:
        parent.extend(rng.integers(0, np.arange(1, n)).tolist())
    return LabeledTree(parent, ["A"] * n)


def assign_labels(t: LabeledTree, cfg: GenConfig, attempt: int = 0) -> LabeledTree:
    """I.i.d. uniform labels from the first ``cfg.alphabet_size`` symbols."""
    rng = rng_for(cfg.seed, LABELS, attempt)
    symbols = alphabet_symbols(cfg.alphabet_size)
    draws = rng.integers(0, cfg.alphabet_size, size=len(t))
    return t.relabeled([symbols[i] for i in draws])


def shuffled_copy(t: LabeledTree, seed: int) -> LabeledTree:
    """Copy with every node's children independently permuted, renumbered in preorder."""
    rng = rng_for(seed, SHUFFLE)
    keys = rng.random(len(t))
    order = []
    stack = [t.root]
    while stack:
        u = stack.pop()
        order.append(u)
        kids = sorted(t.children[u], key=keys.__getitem__)
        stack.extend(reversed(kids))
    new_id = {u: i for i, u in enumerate(order)}
    parent = [None if t.parent[u] is None else new_id[t.parent[u]] for u in order]
    children = [[new_id[c] for c in sorted(t.children[u], key=keys.__getitem__)] for u in order]
    return LabeledTree(parent, [t.label_of(u) for u in order], children)


def perturb_one_label(t: LabeledTree, seed: int) -> LabeledTree:
    """Give one uniform node a different label drawn uniformly from the tree's own alphabet."""
    symbols = sorted(t.alphabet())
    if len(symbols) < 2:
        raise ValueError("cannot perturb a tree whose labels are all identical")
    rng = rng_for(seed, PERTURB)
    u = int(rng.integers(0, len(t)))
    others = [s for s in symbols if s != t.label_of(u)]
    labels = t.labels()
    labels[u] = others[int(rng.integers(0, len(others)))]
    return t.relabeled(labels)


def cipher_copy(t: LabeledTree, seed: int, symbols: list[str] | None = None) -> LabeledTree:
    """Relabel through a random bijection onto ``symbols`` (default: lowercase names)."""
    alphabet = sorted(t.alphabet())
    if symbols is None:
        symbols = [s.lower() for s in alphabet_symbols(len(alphabet))]
    if len(symbols) < len(alphabet):
        raise ValueError("not enough target symbols")
    rng = rng_for(seed, CIPHER)
    image = [symbols[i] for i in rng.permutation(len(symbols))[: len(alphabet)]]
    table = dict(zip(alphabet, image))
    return t.relabeled([table[s] for s in t.labels()])


def labeled_tree(cfg: GenConfig) -> LabeledTree:
    return assign_labels(random_recursive_tree(cfg), cfg)


def make_pair(cfg: GenConfig, scenario: str = "similar") -> tuple[LabeledTree, LabeledTree]:
    """The experimental pair: ``t2`` is a shuffled copy of ``t1``, perturbed once if asked.

    For the perturbed scenario the labelling is redrawn (next label sub-stream)
    until at least two symbols occur, which needs ``n >= 2`` and an alphabet of
    at least two symbols.
    """
    shape = random_recursive_tree(cfg)
    t1 = assign_labels(shape, cfg)
    if scenario == "similar":
        return t1, shuffled_copy(t1, cfg.seed)
    if scenario != "perturbed":
        raise ValueError(f"unknown scenario {scenario!r}")
    if cfg.n < 2 or cfg.alphabet_size < 2:
        raise ValueError("perturbed scenario needs n >= 2 and at least two symbols")
    attempt = 0
    while len(t1.alphabet()) < 2:
        attempt += 1
        t1 = assign_labels(shape, cfg, attempt)
    return t1, perturb_one_label(shuffled_copy(t1, cfg.seed), cfg.seed)
