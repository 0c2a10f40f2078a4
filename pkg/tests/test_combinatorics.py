import itertools
import math
import re
from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from qpnls import combinatorics as comb
from qpnls.combinatorics import LEAF0, LEAF1, Node
from qpnls.errors import StructureError


def branch_strategy(p, max_depth):
    P = 2 * p + 1

    def extend(children):
        return st.lists(children, min_size=P, max_size=P).map(lambda cs: Node(tuple(cs)))

    # uniform depth is not required for the counting identities
    return st.recursive(st.sampled_from([LEAF0, LEAF1]), extend, max_leaves=3 * max_depth)


def stats_oracle(k, p):
    """Counter of (ell, D) over Gamma^(k), built without enumerating branches."""
    P = 2 * p + 1
    level = Counter({(0, 1): 1, (1, 1): 1})
    for _ in range(k - 1):
        nxt = Counter({(0, 1): 1})
        for combo in itertools.product(level.items(), repeat=P):
            mult = math.prod(c for _, c in combo)
            ell = 1 + sum(e for (e, _), _ in combo)
            D = ell * math.prod(d for (_, d), _ in combo)
            nxt[(ell, D)] += mult
        level = nxt
    return level


def test_term_counts():
    assert [comb.term_count(k, 1) for k in (1, 2, 3)] == [2, 9, 730]
    assert [comb.term_count(k, 2) for k in (1, 2)] == [2, 33]
    assert comb.term_count(3, 2) == 33**5 + 1


@pytest.mark.parametrize("k,p", [(1, 1), (2, 1), (3, 1), (1, 2), (2, 2), (1, 3), (2, 3)])
def test_enumeration_matches_count_and_is_unique(k, p):
    found, exhaustive = comb.branches(k, p)
    assert exhaustive
    assert len(found) == comb.term_count(k, p) == len(set(found))
    assert all(comb.is_member(b, k, p) for b in found)


def test_enumeration_budget_marks_truncation():
    items = list(comb.enumerate_branches(3, 1, budget=10))
    assert len(items) == 11 and isinstance(items[-1], comb.Truncated)
    assert items[-1].emitted == 10 and items[-1].total == 730
    found, exhaustive = comb.branches(3, 1, budget=10)
    assert len(found) == 10 and not exhaustive


def test_depth_one_order():
    assert list(comb.enumerate_branches(1, 1)) == [LEAF0, LEAF1]
    assert next(iter(comb.enumerate_branches(2, 1))) == LEAF0


def test_counting_function_examples():
    b = Node((LEAF1, LEAF0, LEAF1))
    assert comb.sigma2p(b, 1) == 7
    assert comb.ell(b, 1) == 3
    assert comb.dfactor(b, 1) == 3
    assert comb.sigma(b, 1) == Fraction(7, 2)
    assert comb.sigma2p(LEAF0, 1) == 1 and comb.ell(LEAF0, 1) == 0
    assert comb.sigma2p(LEAF1, 2) == 5 and comb.ell(LEAF1, 2) == 1
    nested = Node((b, LEAF0, LEAF1))
    assert comb.ell(nested, 1) == 1 + 3 + 0 + 1
    assert comb.dfactor(nested, 1) == 5 * 3


def test_malformed_branches_are_rejected():
    with pytest.raises(StructureError):
        comb.sigma2p(Node((LEAF0, LEAF1)), 1)
    with pytest.raises(StructureError):
        comb.validate("leaf", 1)
    with pytest.raises(StructureError):
        comb.validate(Node((LEAF1, LEAF0, LEAF1)), 1, depth=1)
    with pytest.raises(ValueError):
        comb.arity(0)


@given(st.sampled_from([1, 2, 3]).flatmap(lambda p: st.tuples(st.just(p), branch_strategy(p, 4))))
def test_counting_identities(pb):
    p, b = pb
    s2p = comb.sigma2p(b, p)
    assert s2p == 2 * p * comb.ell(b, p) + 1
    assert s2p % 2 == 1 and (2 * p * comb.ell(b, p)) % 2 == 0
    assert comb.sigma(b, p) == comb.ell(b, p) + Fraction(1, 2 * p)
    assert comb.dfactor(b, p) >= 1


@given(st.sampled_from([1, 2]).flatmap(lambda p: st.tuples(st.just(p), branch_strategy(p, 3))),
       st.randoms(use_true_random=False))
def test_leaf_slots_and_alternating_sum(pb, rnd):
    p, b = pb
    slots = comb.leaf_slots(b, p)
    assert len(slots) == comb.sigma2p(b, p)
    assert slots == comb.parity_slots(len(slots))
    values = [(rnd.randint(-5, 5), rnd.randint(-5, 5)) for _ in slots]
    assert comb.cas(values, slots) == comb.cas_recursive(b, p, values)


def test_gal_sum_depth_two_closed_form():
    x = comb.gal_threshold(1)
    assert x == Fraction(4, 27)
    closed = 1 + x + Fraction(3, 2) * x**2 + x**3 + x**4 / 4
    g = comb.gal_sum(2, 1, x)
    assert g.exact and g.value == closed
    assert float(g) == pytest.approx(1.184442, abs=1e-6)


@pytest.mark.parametrize("k,p", [(1, 1), (2, 1), (3, 1), (1, 2), (2, 2)])
def test_gal_sum_matches_multiset_oracle_and_bound(k, p):
    x = comb.gal_threshold(p)
    oracle = sum((Fraction(c) * x**e / d for (e, d), c in stats_oracle(k, p).items()), Fraction(0))
    g = comb.gal_sum(k, p, x)
    assert g.exact and g.value == oracle
    assert g.value <= Fraction(2 * p + 1, 2 * p)


def test_gal_sum_float_path():
    g = comb.gal_sum(2, 1, 4 / 27)
    assert not g.exact
    assert g.value == pytest.approx(float(comb.gal_sum(2, 1, Fraction(4, 27))), rel=1e-15)
    with pytest.raises(ValueError):
        comb.gal_sum(2, 1, -1)


def test_dot_rendering_structure():
    b = Node((LEAF1, LEAF0, LEAF1))
    dot = comb.render_tree_dot(b, 1, depth=2)
    assert dot.startswith('digraph "branch" {') and dot.rstrip().endswith("}")
    assert dot.count("rank=same") == 3  # levels 0, 1, 2
    leaves = comb.sigma2p(b, 1)
    assert dot.count("fillcolor=red") + dot.count("fillcolor=green") >= leaves
    assert "fillcolor=black" in dot  # output node
    leaf_colors = re.findall(r'label="m\d+", fillcolor=(\w+)', dot)
    assert leaf_colors == ["green" if s.conjugated else "red" for s in comb.leaf_slots(b, 1)]
    lin = comb.render_tree_dot(LEAF0, 1, depth=1)
    assert lin.count("fillcolor=black") == 2  # output and the linear leaf
    assert comb.render_tree_dot(b, 1, depth=2) == dot
