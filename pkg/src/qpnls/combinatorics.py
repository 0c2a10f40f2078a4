"""Branch sets of the Picard tree expansion and the functions defined on them.

A branch of depth ``k`` is one of

* ``LEAF0`` -- the linear branch, a member of every depth;
* ``LEAF1`` -- the depth-1 nonlinear branch;
* ``Node(children)`` -- a P-tuple of depth ``k-1`` branches, P = 2p+1.

The counting functions are kept in integers: :func:`sigma2p` returns
``2p*sigma`` and :func:`ell` returns ``ell`` itself, which is an integer.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence, Union

from .errors import StructureError


@dataclass(frozen=True)
class Leaf0:
    def __repr__(self):
        return "LEAF0"


@dataclass(frozen=True)
class Leaf1:
    def __repr__(self):
        return "LEAF1"


LEAF0 = Leaf0()
LEAF1 = Leaf1()


@dataclass(frozen=True)
class Node:
    children: tuple

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))

    def __repr__(self):
        return "Node(" + ", ".join(map(repr, self.children)) + ")"


Branch = Union[Leaf0, Leaf1, Node]


def arity(p: int) -> int:
    if int(p) != p or p < 1:
        raise ValueError(f"p must be a positive integer, got {p!r}")
    return 2 * int(p) + 1


def min_depth(branch: Branch) -> int:
    """Smallest ``k`` with ``branch`` in Gamma^(k); LEAF0 and LEAF1 give 1."""
    if isinstance(branch, (Leaf0, Leaf1)):
        return 1
    if isinstance(branch, Node):
        return 1 + max(min_depth(c) for c in branch.children)
    raise StructureError(f"not a branch: {branch!r}")


def is_member(branch: Branch, k: int, p: int) -> bool:
    """Whether ``branch`` belongs to Gamma^(k) for nonlinearity degree ``p``."""
    P = arity(p)
    if isinstance(branch, Leaf0):
        return k >= 1
    if isinstance(branch, Leaf1):
        return k == 1
    if isinstance(branch, Node):
        return k >= 2 and len(branch.children) == P and all(is_member(c, k - 1, p) for c in branch.children)
    return False


def validate(branch: Branch, p: int, depth: int | None = None) -> int:
    """Check well-formedness and return the depth used for the check."""
    k = min_depth(branch) if depth is None else depth
    if not is_member(branch, k, p):
        raise StructureError(f"{branch!r} is not a member of Gamma^({k}) for p={p}")
    return k


def sigma2p(branch: Branch, p: int) -> int:
    """``2p * sigma(branch)``: the number of initial-data leaves."""
    P = arity(p)
    if isinstance(branch, Leaf0):
        return 1
    if isinstance(branch, Leaf1):
        return P
    if isinstance(branch, Node):
        if len(branch.children) != P:
            raise StructureError(f"node arity {len(branch.children)} != P = {P}")
        return sum(sigma2p(c, p) for c in branch.children)
    raise StructureError(f"not a branch: {branch!r}")


def sigma(branch: Branch, p: int) -> Fraction:
    return Fraction(sigma2p(branch, p), 2 * p)


def ell(branch: Branch, p: int) -> int:
    """Second counting function: the number of nested time integrations."""
    P = arity(p)
    if isinstance(branch, Leaf0):
        return 0
    if isinstance(branch, Leaf1):
        return 1
    if isinstance(branch, Node):
        if len(branch.children) != P:
            raise StructureError(f"node arity {len(branch.children)} != P = {P}")
        return 1 + sum(ell(c, p) for c in branch.children)
    raise StructureError(f"not a branch: {branch!r}")


def dfactor(branch: Branch, p: int) -> int:
    """Denominator in the bound ``|I| <= t^ell / D`` of the nested integrals."""
    P = arity(p)
    if isinstance(branch, (Leaf0, Leaf1)):
        return 1
    if isinstance(branch, Node):
        if len(branch.children) != P:
            raise StructureError(f"node arity {len(branch.children)} != P = {P}")
        return ell(branch, p) * math.prod(dfactor(c, p) for c in branch.children)
    raise StructureError(f"not a branch: {branch!r}")


def term_count(k: int, p: int) -> int:
    """``N_1 = 2``, ``N_k = 1 + N_{k-1}^P``: the cardinality of Gamma^(k)."""
    if k < 1:
        raise ValueError("depth must be >= 1")
    P = arity(p)
    n = 2
    for _ in range(k - 1):
        n = 1 + n**P
    return n


class Truncated:
    """Sentinel yielded last by a budget-capped enumeration."""

    def __init__(self, emitted: int, total: int):
        self.emitted = emitted
        self.total = total

    def __repr__(self):
        return f"Truncated(emitted={self.emitted}, total={self.total})"


def _iter_branches(k: int, p: int) -> Iterator[Branch]:
    yield LEAF0
    if k == 1:
        yield LEAF1
        return
    # Gamma^(k-1) is materialized once; the P-fold product is streamed
    previous = list(_iter_branches(k - 1, p))
    for children in itertools.product(previous, repeat=arity(p)):
        yield Node(children)


def enumerate_branches(k: int, p: int, budget: int | None = None) -> Iterator[Branch | Truncated]:
    """Yield Gamma^(k) in deterministic order: LEAF0 first, then nodes in
    lexicographic order of their child tuples.

    When ``budget`` is reached before the set is exhausted a :class:`Truncated`
    marker is yielded as the final item.
    """
    if k < 1:
        raise ValueError("depth must be >= 1")
    total = term_count(k, p)
    for count, b in enumerate(_iter_branches(k, p)):
        if budget is not None and count >= budget:
            yield Truncated(count, total)
            return
        yield b


def branches(k: int, p: int, budget: int | None = None) -> tuple[list[Branch], bool]:
    """Materialize :func:`enumerate_branches`; returns ``(branches, exhaustive)``."""
    out = []
    for b in enumerate_branches(k, p, budget):
        if isinstance(b, Truncated):
            return out, False
        out.append(b)
    return out, True


@dataclass(frozen=True)
class LeafSlot:
    position: int  # 1-based
    sign: int
    conjugated: bool


def _propagate(branch: Branch, p: int, sign: int, conj: bool, out: list):
    P = arity(p)
    if isinstance(branch, Leaf0):
        out.append((sign, conj))
    elif isinstance(branch, Leaf1):
        for j in range(P):
            out.append((sign * (-1) ** j, conj ^ bool(j % 2)))
    elif isinstance(branch, Node):
        if len(branch.children) != P:
            raise StructureError(f"node arity {len(branch.children)} != P = {P}")
        for j, child in enumerate(branch.children):
            _propagate(child, p, sign * (-1) ** j, conj ^ bool(j % 2), out)
    else:
        raise StructureError(f"not a branch: {branch!r}")


def propagated_slots(branch: Branch, p: int) -> list[LeafSlot]:
    """Leaf signs and conjugation flags obtained by pushing each child's block
    label ``(-1)^(j-1)`` / ``*^[j-1]`` down through the tree."""
    raw: list = []
    _propagate(branch, p, 1, False, raw)
    return [LeafSlot(i + 1, s, c) for i, (s, c) in enumerate(raw)]


def parity_slots(count: int) -> list[LeafSlot]:
    """The flat rule: slot ``j`` has sign ``(-1)^(j-1)`` and is conjugated iff ``j`` is even."""
    return [LeafSlot(j, (-1) ** (j - 1), (j - 1) % 2 == 1) for j in range(1, count + 1)]


def leaf_slots(branch: Branch, p: int) -> list[LeafSlot]:
    """Flattened leaf labels of ``branch``.

    Computed by recursive propagation and cross-checked against the flat
    parity rule; a disagreement raises :class:`StructureError`.
    """
    slots = propagated_slots(branch, p)
    if slots != parity_slots(len(slots)):
        raise StructureError(f"recursive and flat leaf labels disagree for {branch!r}")
    return slots


def cas(values: Sequence[Sequence[int]], slots: Sequence[LeafSlot]) -> tuple[int, ...]:
    """Combinatorial alternating sum ``sum_j sign_j m_j``."""
    if len(values) != len(slots):
        raise ValueError(f"{len(values)} values for {len(slots)} slots")
    if not values:
        raise ValueError("empty value list")
    dim = len(values[0])
    total = [0] * dim
    for m, slot in zip(values, slots):
        if len(m) != dim:
            raise ValueError("dimension mismatch among values")
        for i, a in enumerate(m):
            total[i] += slot.sign * int(a)
    return tuple(total)


def cas_recursive(branch: Branch, p: int, values: Sequence[Sequence[int]]) -> tuple[int, ...]:
    """The alternating sum evaluated by the nested definition, consuming
    ``values`` left to right; used to cross-check :func:`cas`."""
    it = iter(values)

    def rec(b):
        P = arity(p)
        if isinstance(b, Leaf0):
            return tuple(next(it))
        parts = [tuple(next(it)) for _ in range(P)] if isinstance(b, Leaf1) else [rec(c) for c in b.children]
        return tuple(sum((-1) ** j * part[i] for j, part in enumerate(parts)) for i in range(len(parts[0])))

    out = rec(branch)
    if next(it, None) is not None:
        raise ValueError("more values than leaves")
    return out


@dataclass(frozen=True)
class GalSum:
    value: Fraction | float
    exact: bool
    terms: int

    def __float__(self):
        return float(self.value)


def gal_sum(k: int, p: int, x, budget: int | None = 1_000_000) -> GalSum:
    """``sum over Gamma^(k) of x^ell / D``.

    With an exhaustive enumeration and rational ``x`` (int or Fraction) the
    sum is exact.  A truncated enumeration yields a lower bound computed in
    floating point and flagged ``exact=False``.
    """
    if x < 0:
        raise ValueError("x must be nonnegative")
    bs, exhaustive = branches(k, p, budget)
    rational = isinstance(x, (int, Fraction))
    if exhaustive and rational:
        xf = Fraction(x)
        value = sum((xf ** ell(b, p) / dfactor(b, p) for b in bs), Fraction(0))
        return GalSum(value, True, len(bs))
    xf = float(x)
    value = math.fsum(xf ** ell(b, p) / dfactor(b, p) for b in bs)
    return GalSum(value, False, len(bs))


def gal_threshold(p: int) -> Fraction:
    """``(2p)^(2p) / P^P``, the largest admissible argument of :func:`gal_sum`."""
    P = arity(p)
    return Fraction((2 * p) ** (2 * p), P**P)


def render_tree_dot(branch: Branch, p: int, depth: int | None = None, name: str = "branch") -> str:
    """Feynman-diagram style DOT graph for one branch.

    Level 0 holds the output mode ``n``; leaves sit on level ``depth``.  Leaves
    and interior points are red when unconjugated and green when conjugated;
    the single leaf of the top-level linear branch is black.  A LEAF0 subtree
    below the root attaches its leaf directly to the last level.
    """
    k = validate(branch, p, depth)
    P = arity(p)
    lines = [f'digraph "{name}" {{', '  node [shape=circle, style=filled, fontcolor=white, width=0.35];']
    levels: dict[int, list[str]] = {L: [] for L in range(k + 1)}
    edges: list[str] = []
    counter = itertools.count()
    leaf_no = itertools.count(1)

    def color(conj: bool) -> str:
        return "green" if conj else "red"

    def add_node(level: int, label: str, fill: str) -> str:
        nid = f"v{next(counter)}"
        levels[level].append(f'    {nid} [label="{label}", fillcolor={fill}];')
        return nid

    def rec(b, parent: str, level: int, conj: bool):
        # ``parent`` sits on ``level - 1``; ``b`` hangs underneath it
        if isinstance(b, Leaf0):
            leaf = add_node(k, f"m{next(leaf_no)}", color(conj))
            edges.append(f"  {parent} -> {leaf};")
        elif isinstance(b, Leaf1):
            for j in range(P):
                leaf = add_node(k, f"m{next(leaf_no)}", color(conj ^ bool(j % 2)))
                edges.append(f"  {parent} -> {leaf};")
        else:
            for j, child in enumerate(b.children):
                c = conj ^ bool(j % 2)
                point = add_node(level, f"n{level}_{j + 1}", color(c))
                edges.append(f"  {parent} -> {point};")
                if isinstance(child, Leaf0):
                    leaf = add_node(k, f"m{next(leaf_no)}", color(c))
                    edges.append(f"  {point} -> {leaf};")
                else:
                    rec(child, point, level + 1, c)

    root = add_node(0, "n", "black")
    if isinstance(branch, Leaf0):
        leaf = add_node(k, f"m{next(leaf_no)}", "black")
        edges.append(f"  {root} -> {leaf};")
    else:
        rec(branch, root, 1, False)

    for L in range(k + 1):
        lines.append(f"  subgraph level{L} {{")
        lines.append("    rank=same;")
        lines.extend(levels[L])
        lines.append("  }")
    lines.extend(edges)
    lines.append("}")
    return "\n".join(lines) + "\n"
