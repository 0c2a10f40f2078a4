"""Multi-indices on Z^nu, the frequency pairing <n> = n.omega, and truncation boxes.

Multi-indices are plain tuples of ints.  A :class:`LatticeBox` is the
l-infinity box ``max_j |n_j| <= N``; its indices are enumerated in
lexicographic order, which coincides with C order of a dense array of shape
``(2N+1,)*nu`` whose axis ``j`` runs over ``n_j = -N..N``.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import CapacityError

log = logging.getLogger(__name__)

MultiIndex = tuple[int, ...]

#: default cap on the number of indices a box may enumerate
DEFAULT_BOX_BUDGET = 10_000_000


def multi_index(entries: Sequence[int], dim: int | None = None) -> MultiIndex:
    n = tuple(int(e) for e in entries)
    if any(int(e) != e for e in entries):
        raise ValueError(f"multi-index entries must be integers: {entries!r}")
    if dim is not None and len(n) != dim:
        raise ValueError(f"expected a multi-index of length {dim}, got {len(n)}")
    return n


def add(n: MultiIndex, m: MultiIndex) -> MultiIndex:
    if len(n) != len(m):
        raise ValueError("dimension mismatch")
    return tuple(a + b for a, b in zip(n, m))


def neg(n: MultiIndex) -> MultiIndex:
    return tuple(-a for a in n)


def scale(k: int, n: MultiIndex) -> MultiIndex:
    return tuple(k * a for a in n)


def l1_norm(n: Sequence[int]) -> int:
    """``|n| = sum_j |n_j|``."""
    return sum(abs(int(a)) for a in n)


def frequency_vector(entries: Sequence[float]) -> np.ndarray:
    """Validate and freeze a frequency vector omega."""
    w = np.asarray(entries, dtype=float)
    if w.ndim != 1 or w.size < 1:
        raise ValueError("frequency vector must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(w)):
        raise ValueError("frequency vector entries must be finite")
    if np.any(w == 0.0):
        raise ValueError("frequency vector entries must be nonzero")
    w = w.copy()
    w.setflags(write=False)
    return w


def omega_l1(omega: Sequence[float]) -> float:
    return float(np.sum(np.abs(np.asarray(omega, dtype=float))))


def inner_product(n: Sequence[int], omega: Sequence[float]) -> float:
    """The pairing ``<n> = sum_j n_j omega_j``."""
    if len(n) != len(omega):
        raise ValueError(f"dimension mismatch: len(n)={len(n)}, len(omega)={len(omega)}")
    return math.fsum(float(a) * float(w) for a, w in zip(n, omega))


@dataclass(frozen=True)
class LatticeBox:
    """The truncated lattice ``{n in Z^dim : max_j |n_j| <= radius}``."""

    dim: int
    radius: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")

    @property
    def side(self) -> int:
        return 2 * self.radius + 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.side,) * self.dim

    @property
    def size(self) -> int:
        return self.side**self.dim

    def contains(self, n: Sequence[int]) -> bool:
        return len(n) == self.dim and all(abs(a) <= self.radius for a in n)

    def position(self, n: Sequence[int]) -> tuple[int, ...]:
        """Array position of index ``n`` in a dense field of shape :attr:`shape`."""
        if not self.contains(n):
            raise KeyError(f"{tuple(n)} is outside the box of radius {self.radius}")
        return tuple(a + self.radius for a in n)

    def indices(self, budget: int = DEFAULT_BOX_BUDGET) -> list[MultiIndex]:
        return box_indices(self, budget)

    @cached_property
    def coords(self) -> np.ndarray:
        """Integer array of shape ``shape + (dim,)`` holding each index."""
        axis = np.arange(-self.radius, self.radius + 1)
        grids = np.meshgrid(*([axis] * self.dim), indexing="ij")
        out = np.stack(grids, axis=-1)
        out.setflags(write=False)
        return out

    @cached_property
    def l1(self) -> np.ndarray:
        """``|n|`` for every box index, as an integer array of shape :attr:`shape`."""
        out = np.abs(self.coords).sum(axis=-1)
        out.setflags(write=False)
        return out

    def pairing(self, omega: Sequence[float]) -> np.ndarray:
        """``<n>`` for every box index, as a float array of shape :attr:`shape`."""
        w = np.asarray(omega, dtype=float)
        if w.shape != (self.dim,):
            raise ValueError(f"dimension mismatch: box has dim {self.dim}, omega has {w.size}")
        return self.coords @ w


def box_indices(box: LatticeBox, budget: int = DEFAULT_BOX_BUDGET) -> list[MultiIndex]:
    """All indices of ``box`` in lexicographic order."""
    if box.size > budget:
        raise CapacityError(f"box with {box.size} indices exceeds budget {budget}")
    axis = range(-box.radius, box.radius + 1)
    return list(itertools.product(axis, repeat=box.dim))


def min_divisor(omega: Sequence[float], box: LatticeBox, threshold: float = 1e-9) -> float:
    """Smallest ``|<n>|`` over nonzero indices of ``box``.

    A diagnostic for non-resonance: no run is refused on this basis, but a
    warning is logged when the result falls below ``threshold``.
    """
    if box.radius < 1:
        raise ValueError("min_divisor needs a box of radius >= 1")
    values = np.abs(box.pairing(omega))
    mask = box.l1 > 0
    idx = np.argmin(np.where(mask, values, np.inf))
    result = float(values.flat[idx])
    if result < threshold:
        where = tuple(int(a) for a in box.coords.reshape(-1, box.dim)[idx])
        log.warning("near resonance: |<n>| = %.3e at n = %s (threshold %.1e)", result, where, threshold)
    return result
