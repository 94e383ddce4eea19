import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from treecipher import engine
from treecipher.engine import (
    CipherMode,
    EngineState,
    InvariantError,
    PartialBijection,
    Reason,
    ext_bij,
    log_ratio,
    map_nodes,
    rule1_map_singletons,
    rule2_collection_singletons,
    rule3_label_bags,
    search_space_size,
    split_children,
)
from treecipher.oracle import complete_backtracking, decide_brute, enumerate_isomorphisms
from treecipher.randgen import GenConfig, cipher_copy, labeled_tree, make_pair, shuffled_copy
from treecipher.trees import parse

from conftest import WORKED_T1, WORKED_T2, WORKED_PAIRS

# a pair whose reduction goes through collection splits, one of which grows N
SPLIT_PAIR = ("R(X(Y,Z,R),X(Y,Z,Q))", "r(x(q,z,y),x(r,y,z))")


def _split_events(t1, t2, complete=False):
    events = []
    out = engine.run(t1, t2, validate=True, observer=lambda *e: events.append(e))
    if complete:
        out = complete_backtracking(out)
    return out, events


# golden trace

def test_worked_pair_trace(worked_pair):
    out = engine.run(*worked_pair, validate=True)
    assert out.verdict == "undecided"
    assert [s.name for s in out.stages] == list(engine.STAGES)
    assert [s.exact_N for s in out.stages] == [40320, 144, 144, 48, 2]
    assert out.phi == WORKED_PAIRS
    assert out.f == {"A": "α", "B": "β", "C": "γ"}
    assert out.state.residual() == {"bags": [{"left": [5, 6], "right": [5, 6]}], "collections": []}
    assert out.r_final == pytest.approx(math.log10(2 / 8))
    assert out.map_nodes_calls <= 8


def test_outcome_json_schema(worked_pair):
    d = json.loads(engine.run(*worked_pair).to_json())
    assert d["verdict"] == "undecided"
    assert [s["N"] for s in d["stages"]] == ["40320", "144", "144", "48", "2"]
    assert set(d) >= {"log10_N_final", "log10_N_equiv", "r_final", "map_nodes_calls", "phi", "f", "residual"}
    done = json.loads(complete_backtracking(engine.run(*worked_pair)).to_json())
    assert done["verdict"] == "isomorphic" and len(done["phi"]) == 8


def test_simple_cipher_is_isomorphic():
    out = engine.run(parse("A(B(A),B(C))"), parse("α(β(α),β(γ))"))
    assert out.verdict == "isomorphic"
    assert out.f == {"A": "α", "B": "β", "C": "γ"}
    assert out.log10_N_final == 0


def test_non_injective_relation_is_rejected():
    t1, t2 = parse("A(B(A),B(C))"), parse("β(γ(α),γ(α))")
    out = engine.run(t1, t2)
    assert out.verdict == "not_isomorphic"
    assert out.reason is Reason.RULE3_MISSING_COUNTERPART
    assert sum(1 for _ in enumerate_isomorphisms(t1, t2)) == 2
    assert not decide_brute(t1, t2)[0]


def test_topology_mismatch():
    out = engine.run(parse("a(b(c))"), parse("a(b,c)"))
    assert out.reason is Reason.TOPOLOGY_MISMATCH
    assert out.stages == [] and out.log10_N_final == 0


def test_single_nodes_both_modes():
    assert engine.run(parse("A"), parse("α")).verdict == "isomorphic"
    assert engine.run(parse("A"), parse("A"), CipherMode.IDENTITY).verdict == "isomorphic"
    assert engine.run(parse("A"), parse("α"), CipherMode.IDENTITY).verdict == "not_isomorphic"


def test_identity_mode_on_worked_pair(worked_pair):
    t1, _ = worked_pair
    assert engine.run(*worked_pair, CipherMode.IDENTITY).verdict == "not_isomorphic"
    out = engine.run(t1, shuffled_copy(t1, 5), CipherMode.IDENTITY)
    assert out.verdict != "not_isomorphic"


# ext_bij

def test_ext_bij_examples():
    psi = PartialBijection()
    assert ext_bij("A", "α", psi) and psi == {"A": "α"}
    psi = PartialBijection([("B", "β")])
    assert not ext_bij("B", "γ", psi)
    assert not ext_bij("C", "β", psi)
    assert ext_bij("B", "β", psi) and len(psi) == 1
    assert not ext_bij("A", "α", PartialBijection(), CipherMode.IDENTITY)
    assert ext_bij("A", "A", PartialBijection(), CipherMode.IDENTITY)


def test_partial_bijection_rejects_non_injective_seed():
    with pytest.raises(ValueError):
        PartialBijection([("a", "x"), ("b", "x")])


# map_nodes / split_children / rules

def test_map_roots(worked_pair):
    st_ = EngineState(*worked_pair)
    assert map_nodes(0, 0, st_)
    assert st_.phi == {0: 0} and st_.f == {"B": "β"}
    st_.validate()


def test_mapping_a_leaf_maps_its_parent(worked_pair):
    st_ = EngineState(*worked_pair)
    assert map_nodes(0, 0, st_)
    # leaf B under the first A, on both sides
    assert map_nodes(3, 3, st_)
    assert st_.phi.get(1) == 1
    assert st_.f == {"B": "β", "A": "α"}
    st_.validate()


def test_mapping_conflicting_labels_fails(worked_pair):
    st_ = EngineState(*worked_pair)
    assert map_nodes(0, 0, st_)
    assert not map_nodes(7, 3, st_)  # C -> β, but B already maps to β
    assert st_.failure.reason is Reason.EXT_BIJ_LABEL_CONFLICT


def test_asymmetric_child_split_is_a_contradiction():
    t1 = parse("R(U(A),W(B,C))")
    t2 = parse("R(V(X,Y),W(Z))")
    # U (1) and V (1) are forced together, which cannot be extended
    st_ = EngineState.from_partition(
        t1, t2, bags=[([2, 4, 5], [2, 3, 5])], phi=[(0, 0), (1, 1), (3, 4)],
        f=[("R", "R"), ("U", "V"), ("W", "W")])
    assert not split_children(1, 1, st_)
    assert st_.failure.reason is Reason.BAG_CARDINALITY_MISMATCH
    assert all(w.phi[1] != 1 for w in enumerate_isomorphisms(t1, t2))


def test_rule1_without_singletons_is_noop(worked_pair):
    st_ = EngineState(*worked_pair)
    assert rule1_map_singletons(st_)
    assert len(st_.phi) == 0 and len(st_.bags) == 1


def test_rule2_leaves_ambiguous_collections_alone():
    t1, t2 = parse("R(A,B)"), parse("r(a,b)")
    st_ = EngineState.from_partition(t1, t2, collections=[([[1], [2]], [[1], [2]])],
                                     phi=[(0, 0)], f=[("R", "r")])
    assert rule2_collection_singletons(st_)
    (coll,) = st_.collections.values()
    assert coll.count(1) == 2 and len(st_.phi) == 1


def test_rule2_pairs_lone_sets():
    t1, t2 = parse("R(A,A,B)"), parse("r(a,a,b)")
    st_ = EngineState.from_partition(t1, t2, collections=[([[1, 2], [3]], [[1, 2], [3]])],
                                     phi=[(0, 0)], f=[("R", "r")])
    assert rule2_collection_singletons(st_) and rule1_map_singletons(st_)
    assert st_.f == {"R": "r", "A": "a", "B": "b"}
    assert st_.phi.get(3) == 3 and not st_.collections
    assert search_space_size(st_) == (2, pytest.approx(math.log10(2)))


def test_rule3_size_mismatch_is_rejected():
    # the A(Z) subtree pins A -> α; the leaf children then disagree in label counts
    t1, t2 = parse("R(A(Z),A,A,B,B,B)"), parse("r(α(z),α,α,α,β,β)")
    st_ = EngineState.from_partition(t1, t2, bags=[([3, 4, 5, 6, 7], [3, 4, 5, 6, 7])],
                                     phi=[(0, 0), (1, 1), (2, 2)], f=[("R", "r"), ("A", "α"), ("Z", "z")])
    (bag,) = st_.bags.values()
    assert not rule3_label_bags({"A": [3, 4], "B": [5, 6, 7]}, {"α": [3, 4, 5], "β": [6, 7]}, st_, bag)
    assert not decide_brute(t1, t2)[0]
    assert engine.run(t1, t2).verdict == "not_isomorphic"


def test_rule3_builds_bags_and_collection():
    t1, t2 = parse("R(A,A,B,C)"), parse("r(a,a,b,c)")
    st_ = EngineState.from_partition(t1, t2, bags=[([1, 2, 3, 4], [1, 2, 3, 4])],
                                     phi=[(0, 0)], f=[("R", "r"), ("A", "a")])
    (bag,) = st_.bags.values()
    assert rule3_label_bags({"A": [1, 2], "B": [3], "C": [4]}, {"a": [1, 2], "b": [3], "c": [4]}, st_, bag)
    st_.validate()
    assert sorted(len(b) for b in st_.bags.values()) == [2]
    (coll,) = st_.collections.values()
    assert coll.count(1) == 2


# search space size and log ratio

def test_search_space_sizes(worked_pair):
    st_ = EngineState(*worked_pair)
    assert search_space_size(st_) == (40320, pytest.approx(math.log10(40320)))
    assert log_ratio(st_) == pytest.approx(math.log10(40320 / 8))
    t1, t2 = parse("R(A,A,B)"), parse("r(a,a,b)")
    st2 = EngineState.from_partition(t1, t2, bags=[([3], [3])], collections=[([[1, 2]], [[1, 2]])],
                                     phi=[(0, 0)], f=[("R", "r"), ("B", "b")])
    assert search_space_size(st2)[0] == 2
    full = EngineState.from_partition(t1, t1, phi=[(i, i) for i in range(4)], f=[("R", "R"), ("A", "A"), ("B", "B")])
    assert search_space_size(full) == (1, 0.0)
    assert log_ratio(full) <= 0


def test_digit_cap_drops_exact_value():
    t1 = labeled_tree(GenConfig(3000, 2, 1))
    out = engine.run(t1, shuffled_copy(t1, 1), digit_cap=50)
    assert out.stages[0].exact_N is None
    assert out.stages[0].log10_N == pytest.approx(math.lgamma(3001) / math.log(10))


def test_final_ratio(worked_pair):
    assert engine.run(*worked_pair).r_final == pytest.approx(-0.60206, abs=1e-5)


# validator

def test_validator_detects_corruption(worked_pair):
    st_ = EngineState(*worked_pair)
    st_.validate()
    (bag,) = st_.bags.values()
    bag.left.nodes.discard(3)
    with pytest.raises(InvariantError):
        st_.validate()


def test_from_partition_requires_full_placement(worked_pair):
    with pytest.raises(InvariantError):
        EngineState.from_partition(*worked_pair, bags=[([0, 1], [0, 1])])


# collection splits and accounting

def test_collection_split_accounting():
    t1, t2 = (parse(s) for s in SPLIT_PAIR)
    out, events = _split_events(t1, t2, complete=True)
    assert out.verdict == "isomorphic"
    kinds = {e[0] for e in events}
    assert "collection_split" in kinds
    for kind, before, after, predicted in events:
        assert before - after == pytest.approx(predicted, abs=1e-9), kind
    # a collection split may enlarge the space
    assert any(e[3] < 0 for e in events if e[0] == "collection_split")


def test_split_pair_stages():
    out = engine.run(*(parse(s) for s in SPLIT_PAIR))
    assert [s.exact_N for s in out.stages] == [362880, 1440, 1440, 1440, 24]


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 120), st.integers(2, 6), st.integers(0, 10**6), st.sampled_from(["similar", "perturbed"]))
def test_reduction_properties(n, k, seed, scenario):
    t1, t2 = make_pair(GenConfig(n, k, seed), scenario)
    assert engine.run(t1, t2).map_nodes_calls <= n
    out, events = _split_events(t1, t2, complete=True)
    logs = [s.log10_N for s in out.stages]
    assert all(b <= a + 1e-9 for a, b in zip(logs, logs[1:]))
    for _, before, after, predicted in events:
        assert before - after == pytest.approx(predicted, abs=1e-9)
    if scenario == "similar":
        assert out.verdict == "isomorphic"


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 60), st.integers(2, 5), st.integers(0, 10**6))
def test_reduction_is_invariant_under_reordering(n, k, seed):
    t1, t2 = make_pair(GenConfig(n, k, seed), "perturbed")
    a = engine.run(t1, t2)
    b = engine.run(shuffled_copy(t1, seed + 7), cipher_copy(shuffled_copy(t2, seed + 3), seed))
    assert a.verdict == b.verdict
    assert [s.log10_N for s in a.stages] == pytest.approx([s.log10_N for s in b.stages])


def test_call_bound_on_engine_runs():
    for seed in range(150):
        for scenario in ("similar", "perturbed"):
            n = 5 + seed
            out = engine.run(*make_pair(GenConfig(n, 2 + seed % 5, seed), scenario))
            assert out.map_nodes_calls <= n
