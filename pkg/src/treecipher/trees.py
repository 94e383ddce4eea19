"""
Rooted unordered labeled trees stored as a dense arena.

Nodes are integers ``0..size-1``.  Each tree keeps a parent array, a list of
children per node (in storage order, which carries no meaning) and one label
per node.  Labels are interned into small integer tokens per tree; the string
form is kept in ``tree.alphabet_list``.

Two text forms are supported::

    B(A(A,B),A(C,C),C)                      # bracket form
    {"label": "B", "children": [...]}       # JSON form
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Iterable, Sequence

__all__ = [
    "LabeledTree",
    "ParseError",
    "parse",
    "serialize",
    "from_json",
    "to_json",
    "loads",
    "load",
    "depth",
    "dump",
    "path_tree",
    "star_tree",
]

_LABEL = re.compile(r"\w+")


class ParseError(ValueError):
    """Malformed tree text.  ``offset`` is a byte offset into the UTF-8 input."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class LabeledTree:
    """Immutable rooted tree with one label per node.

    Build one with :func:`parse`, :func:`from_json` or
    :meth:`LabeledTree.from_parents`.
    """

    __slots__ = (
        "root",
        "parent",
        "children",
        "label",
        "alphabet_list",
        "_depth",
        "_bfs",
    )

    def __init__(self, parent: Sequence[int | None], labels: Sequence[str],
                 children: Sequence[Sequence[int]] | None = None):
        n = len(parent)
        if n == 0:
            raise ValueError("a tree needs at least one node")
        if len(labels) != n:
            raise ValueError("one label per node is required")
        roots = [u for u, p in enumerate(parent) if p is None]
        if any(p is not None and not 0 <= p < n for p in parent):
            raise ValueError("parent index out of range")
        if len(roots) != 1:
            raise ValueError(f"expected exactly one root, found {len(roots)}")
        if children is None:
            kids: list[list[int]] = [[] for _ in range(n)]
            for u, p in enumerate(parent):
                if p is not None:
                    kids[p].append(u)
        else:
            if len(children) != n:
                raise ValueError("children array has the wrong length")
            kids = [list(c) for c in children]
            for u, cs in enumerate(kids):
                for c in cs:
                    if parent[c] != u:
                        raise ValueError(f"children({u}) lists {c} whose parent is {parent[c]}")
            if sum(len(c) for c in kids) != n - 1:
                raise ValueError("children and parent arrays disagree")

        self.root: int = roots[0]
        self.parent: tuple[int | None, ...] = tuple(parent)
        self.children: tuple[tuple[int, ...], ...] = tuple(tuple(c) for c in kids)

        tokens: dict[str, int] = {}
        lab = []
        for s in labels:
            if not s:
                raise ValueError("labels must be non-empty")
            lab.append(tokens.setdefault(s, len(tokens)))
        self.label: tuple[int, ...] = tuple(lab)
        self.alphabet_list: tuple[str, ...] = tuple(tokens)

        # BFS from the root doubles as the connectivity / acyclicity check.
        dep = [-1] * n
        dep[self.root] = 0
        order = [self.root]
        for u in order:
            for c in self.children[u]:
                if dep[c] != -1:
                    raise ValueError("parent graph is not a tree")
                dep[c] = dep[u] + 1
                order.append(c)
        if len(order) != n:
            raise ValueError("parent graph is not connected")
        self._depth = tuple(dep)
        self._bfs = tuple(order)

    @classmethod
    def from_parents(cls, parent: Sequence[int | None], labels: Sequence[str] | str | None = None):
        """Tree from a parent array.  ``labels`` may be a single symbol for all nodes."""
        n = len(parent)
        if labels is None:
            labels = "x"
        if isinstance(labels, str):
            labels = [labels] * n
        return cls(parent, labels)

    def __len__(self) -> int:
        return len(self.parent)

    @property
    def size(self) -> int:
        return len(self.parent)

    def __repr__(self) -> str:
        text = serialize(self)
        if len(text) > 60:
            text = text[:57] + "..."
        return f"LabeledTree({text!r})"

    def __eq__(self, other) -> bool:
        """Structural identity: same arena, same storage order, same label strings."""
        if not isinstance(other, LabeledTree):
            return NotImplemented
        return (
            self.root == other.root
            and self.children == other.children
            and self.labels() == other.labels()
        )

    def __hash__(self) -> int:
        return hash((self.root, self.children, tuple(self.labels())))

    # accessors

    def label_of(self, u: int) -> str:
        return self.alphabet_list[self.label[u]]

    def labels(self) -> list[str]:
        return [self.alphabet_list[t] for t in self.label]

    def depth(self, u: int) -> int:
        return self._depth[u]

    @property
    def depths(self) -> tuple[int, ...]:
        return self._depth

    def height(self) -> int:
        """Maximal depth, i.e. depth(T)."""
        return max(self._depth)

    def bfs_order(self) -> tuple[int, ...]:
        return self._bfs

    def degree(self, u: int | None = None) -> int:
        """Number of children of ``u``; with no argument, the tree degree (max over nodes)."""
        if u is None:
            return max(len(c) for c in self.children)
        return len(self.children[u])

    def leaves(self) -> list[int]:
        return [u for u, c in enumerate(self.children) if not c]

    def alphabet(self) -> set[str]:
        return set(self.alphabet_list)

    def subtree(self, u: int) -> "LabeledTree":
        """New tree made of ``u`` and its descendants, renumbered in preorder."""
        order = []
        stack = [u]
        while stack:
            x = stack.pop()
            order.append(x)
            stack.extend(reversed(self.children[x]))
        new_id = {x: i for i, x in enumerate(order)}
        parent = [None if x == u else new_id[self.parent[x]] for x in order]
        children = [[new_id[c] for c in self.children[x]] for x in order]
        return LabeledTree(parent, [self.label_of(x) for x in order], children)

    def relabeled(self, labels: Sequence[str]) -> "LabeledTree":
        """Same shape and storage order with new labels."""
        return LabeledTree(self.parent, labels, self.children)


def depth(t: LabeledTree, u: int) -> int:
    return t.depth(u)


# text form


def parse(text: str) -> LabeledTree:
    """Parse the bracket form ``label | label "(" tree ("," tree)* ")"``.

    Node ids are assigned in preorder; sibling order is kept as storage order.
    Labels are runs of word characters (``[A-Za-z0-9_]`` plus Unicode letters).

    >>> t = parse("B(A(A,B),A(C,C),C)")
    >>> len(t), t.label_of(t.root), t.degree()
    (8, 'B', 3)
    """
    pos = 0
    n = len(text)

    def fail(msg, at):
        raise ParseError(msg, len(text[:at].encode("utf-8")))

    def skip(i):
        while i < n and text[i].isspace():
            i += 1
        return i

    pos = skip(pos)
    if pos >= n:
        fail("empty input", pos)

    parent: list[int | None] = []
    labels: list[str] = []
    children: list[list[int]] = []
    stack: list[int] = []  # open nodes awaiting ',' or ')'

    def read_node(i, par):
        m = _LABEL.match(text, i)
        if m is None:
            fail("expected a label", i)
        node = len(parent)
        parent.append(par)
        labels.append(m.group())
        children.append([])
        if par is not None:
            children[par].append(node)
        return node, m.end()

    node, pos = read_node(pos, None)
    while True:
        pos = skip(pos)
        if pos < n and text[pos] == "(":
            stack.append(node)
            node, pos = read_node(skip(pos + 1), node)
            continue
        # node is complete; climb while closing
        while True:
            if not stack:
                pos = skip(pos)
                if pos != n:
                    fail("trailing characters", pos)
                return LabeledTree(parent, labels, children)
            if pos >= n:
                fail("unexpected end of input", pos)
            ch = text[pos]
            if ch == ",":
                node, pos = read_node(skip(pos + 1), stack[-1])
                break
            if ch == ")":
                stack.pop()
                pos = skip(pos + 1)
                continue
            fail(f"unexpected character {ch!r}", pos)


def serialize(t: LabeledTree) -> str:
    """Bracket form with children in storage order; inverse of :func:`parse`."""
    out: list[str] = []
    stack: list[object] = [t.root]
    while stack:
        item = stack.pop()
        if isinstance(item, str):
            out.append(item)
            continue
        u = item
        out.append(t.label_of(u))
        kids = t.children[u]
        if kids:
            out.append("(")
            stack.append(")")
            for i in range(len(kids) - 1, -1, -1):
                stack.append(kids[i])
                if i:
                    stack.append(",")
    return "".join(out)


def from_json(obj) -> LabeledTree:
    """Tree from nested ``{"label": str, "children": [...]}`` dictionaries (or a JSON string)."""
    if isinstance(obj, str):
        obj = json.loads(obj)
    parent: list[int | None] = []
    labels: list[str] = []
    children: list[list[int]] = []
    # preorder numbering, to agree with parse()
    stack = [(obj, None)]
    while stack:
        node, par = stack.pop()
        if not isinstance(node, dict) or "label" not in node:
            raise ValueError("each JSON node needs a 'label'")
        label = node["label"]
        if not isinstance(label, str) or not label:
            raise ValueError("JSON labels must be non-empty strings")
        u = len(parent)
        parent.append(par)
        labels.append(label)
        children.append([])
        if par is not None:
            children[par].append(u)
        kids = node.get("children", [])
        for c in reversed(kids):
            stack.append((c, u))
    return LabeledTree(parent, labels, children)


def to_json(t: LabeledTree) -> dict:
    nodes = [{"label": t.label_of(u), "children": []} for u in range(len(t))]
    for u in range(len(t)):
        nodes[u]["children"] = [nodes[c] for c in t.children[u]]
    return nodes[t.root]


def loads(text: str) -> LabeledTree:
    """Parse either form; JSON is recognised by a leading ``{``."""
    if text.lstrip().startswith("{"):
        return from_json(text)
    return parse(text)


def load(path: str | Path) -> LabeledTree:
    return loads(Path(path).read_text(encoding="utf-8"))


def dump(t: LabeledTree, path: str | Path, fmt: str = "text") -> None:
    if fmt == "json":
        payload = json.dumps(to_json(t))
    else:
        payload = serialize(t)
    Path(path).write_text(payload + "\n", encoding="utf-8")


def path_tree(n: int, label: str = "x") -> LabeledTree:
    return LabeledTree.from_parents([None] + list(range(n - 1)), label)


def star_tree(k: int, label: str = "x") -> LabeledTree:
    return LabeledTree.from_parents([None] + [0] * k, label)


def iter_postorder(t: LabeledTree) -> Iterable[int]:
    """Children before parents (reverse BFS)."""
    return reversed(t.bfs_order())
