"""
Ground truth by enumeration
===========================

On small trees every tree isomorphism can be listed.  Those whose induced
label relation is a bijection are the cipherings.
"""

# %%
from treecipher import parse
from treecipher.oracle import count_cipherings, decide_brute, enumerate_isomorphisms, is_ciphering

t1 = parse("A(B(A),B(C))")
good = parse("α(β(α),β(γ))")
bad = parse("β(γ(α),γ(α))")

for name, t2 in (("good", good), ("bad", bad)):
    print(name)
    for w in enumerate_isomorphisms(t1, t2):
        print("   ", sorted(w.induced_relation), "ciphering" if is_ciphering(w) else "")

# %%
# ``decide_brute`` returns the verdict with a witness.
ok, witness = decide_brute(t1, good)
print(ok, witness.cipher())
print(decide_brute(t1, bad))

# %%
# Cipherings compose and invert, so being related by a ciphering is an
# equivalence.
w = witness
back = w.inverse()
print("inverse is a ciphering:", is_ciphering(back))
print("round trip is the identity on nodes:", w.compose(back).phi == {u: u for u in range(len(t1))})

# %%
# The worked example has two cipherings, matching the two completions left
# by the reduction.
print(count_cipherings(parse("B(A(A,B),A(C,C),C)"), parse("β(α(α,β),α(γ,γ),γ)")))
