"""
Trees, shapes and isomorphism counts
====================================

Labeled unordered trees are written as ``label(child,child,...)``.
Sibling order carries no meaning, so a tree can be stored in many ways.
"""

# %%
# Parsing and printing
from treecipher import ahu, parse, serialize, to_json

t = parse("B(A(A,B),A(C,C),C)")
print(serialize(t), "->", len(t), "nodes, depth", t.height(), ", degree", t.degree())
print("alphabet:", sorted(t.alphabet()))
print(to_json(t)["children"][2])

# %%
# Shape colours.  Nodes with the same colour root subtrees of the same shape,
# labels ignored.  The two ``A`` nodes with two leaf children share a colour.
coloring = ahu.color([t])
for u, c in enumerate(coloring.of(t)):
    print(f"node {u} ({t.label_of(u)}): colour {c}")

# %%
# Counting tree isomorphisms.  Each node contributes the factorial of every
# repeated child colour, so this tree has (2!)^3 = 8 automorphisms while a
# path has exactly one.
exact, log10 = ahu.n_equiv(t)
print("isomorphisms:", exact, f"(log10 = {log10:.4f})")
print("path:", ahu.n_equiv(parse("a(b(c(d)))"))[0])

# %%
# Two storage orders of the same tree get the same root colour.
other = parse("x(y(z,z),y(z,x),z)")
print("same shape:", ahu.topologically_isomorphic(t, other))
