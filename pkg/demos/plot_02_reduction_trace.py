"""
Following a reduction step by step
==================================

``treecipher.run`` narrows down which node of one tree may map onto which
node of the other, and which label may stand for which.  Each filter is
logged with the size N of the remaining search space.
"""

# %%
import math

import treecipher
from treecipher.oracle import complete_backtracking

t1 = treecipher.parse("B(A(A,B),A(C,C),C)")
t2 = treecipher.parse("β(α(α,β),α(γ,γ),γ)")
out = treecipher.run(t1, t2, validate=True)
for stage in out.stages:
    print(f"{stage.name:12s} N = {stage.exact_N}")

# %%
# The filters stop with two candidate completions, so the run is undecided.
# Six node pairs and the whole label map are already known.
print(out.verdict)
print("phi:", out.phi)
print("f:", out.f)
print("left to decide:", out.state.residual())

# %%
# The log-ratio compares what is left with the 8 tree isomorphisms that a
# search ignoring labels would have to try.
print(f"r_final = {out.r_final:.4f} = log10(2/8) = {math.log10(2 / 8):.4f}")

# %%
# A small backtracking search settles the remaining bag.
done = complete_backtracking(out)
print(done.verdict, done.phi)

# %%
# The same trees with one label changed: the label map becomes impossible
# and the reduction says so without any search.
t3 = treecipher.parse("β(α(α,β),α(γ,γ),β)")
bad = treecipher.run(t1, t3)
print(bad.verdict, bad.reason.value)

# %%
# Under ``IDENTITY`` mode only the trivial cipher is allowed.
print(treecipher.run(t1, t2, treecipher.CipherMode.IDENTITY).verdict)
