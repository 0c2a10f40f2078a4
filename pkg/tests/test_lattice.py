import logging
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qpnls.errors import CapacityError
from qpnls.lattice import (
    LatticeBox,
    add,
    box_indices,
    frequency_vector,
    inner_product,
    l1_norm,
    min_divisor,
    multi_index,
    neg,
    omega_l1,
    scale,
)

small_index = st.lists(st.integers(-50, 50), min_size=3, max_size=3).map(tuple)


def test_l1_norm_examples():
    assert l1_norm((0, 0)) == 0
    assert l1_norm((2, -3)) == 5
    assert l1_norm((1, 1, -1)) == 3


def test_inner_product_examples():
    assert inner_product((1, 1), (1, math.sqrt(2))) == pytest.approx(1 + math.sqrt(2), abs=1e-15)
    assert inner_product((0, 0, 0), (0.3, 0.7, 1.1)) == 0.0
    with pytest.raises(ValueError):
        inner_product((1, 2), (1.0, 2.0, 3.0))


def test_multi_index_rejects_non_integers():
    assert multi_index([1, -2]) == (1, -2)
    with pytest.raises(ValueError):
        multi_index([1.5, 0])
    with pytest.raises(ValueError):
        multi_index([1, 2], dim=3)


def test_frequency_vector_validation():
    w = frequency_vector([1, 2])
    assert w.dtype == float and not w.flags.writeable
    for bad in ([], [1.0, 0.0], [1.0, float("nan")], [[1.0]]):
        with pytest.raises(ValueError):
            frequency_vector(bad)
    assert omega_l1((1.0, -2.5)) == 3.5


@given(small_index, small_index)
def test_pairing_is_additive(n, m):
    w = (1.0, math.sqrt(2.0), math.sqrt(3.0))
    assert inner_product(add(n, m), w) == pytest.approx(inner_product(n, w) + inner_product(m, w), abs=1e-9)
    assert inner_product(neg(n), w) == -inner_product(n, w)
    assert l1_norm(add(n, m)) <= l1_norm(n) + l1_norm(m)
    assert l1_norm(scale(3, n)) == 3 * l1_norm(n)


def test_box_enumeration_is_lexicographic_c_order():
    box = LatticeBox(2, 1)
    idx = box.indices()
    assert len(idx) == box.size == 9
    assert idx == sorted(idx)
    assert idx[0] == (-1, -1) and idx[-1] == (1, 1)
    assert np.array_equal(box.coords.reshape(-1, 2), np.array(idx))
    for n in idx:
        assert tuple(box.coords[box.position(n)]) == n


def test_box_membership_and_budget():
    box = LatticeBox(3, 2)
    assert box.contains((2, -2, 0)) and not box.contains((3, 0, 0)) and not box.contains((0, 0))
    with pytest.raises(KeyError):
        box.position((3, 0, 0))
    with pytest.raises(CapacityError):
        box_indices(box, budget=10)
    assert np.array_equal(box.l1, np.abs(box.coords).sum(-1))


def test_pairing_array_matches_scalar(omega):
    box = LatticeBox(2, 3)
    arr = box.pairing(omega)
    for n in box.indices():
        assert arr[box.position(n)] == pytest.approx(inner_product(n, omega), abs=1e-14)


def test_min_divisor_golden_pair(omega):
    # |1*1 - 1*sqrt2| = sqrt2 - 1 is the smallest nonzero pairing in the unit box
    assert min_divisor(omega, LatticeBox(2, 1)) == pytest.approx(math.sqrt(2) - 1, abs=1e-15)


def test_min_divisor_warns_on_resonance(caplog):
    with caplog.at_level(logging.WARNING, logger="qpnls.lattice"):
        assert min_divisor((1.0, 2.0), LatticeBox(2, 2)) == 0.0
    assert "(-2, 1)" in caplog.text


def test_min_divisor_needs_nontrivial_box():
    with pytest.raises(ValueError):
        min_divisor((1.0, 2.0), LatticeBox(2, 0))
