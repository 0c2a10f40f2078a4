"""Zeta-based lattice-sum majorants, existence-time constants and inequality predicates.

All functions are pure.  Inequalities are returned as :class:`BoundReport`
rows rather than asserted, so a driver can collect them into a CSV table.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, PreconditionError

#: relative slack used when deciding ``lhs <= rhs`` in floating point
REPORT_RTOL = 1e-12

# B_2, B_4, ..., B_30
_BERNOULLI_EVEN = [
    Fraction(1, 6), Fraction(-1, 30), Fraction(1, 42), Fraction(-1, 30), Fraction(5, 66),
    Fraction(-691, 2730), Fraction(7, 6), Fraction(-3617, 510), Fraction(43867, 798),
    Fraction(-174611, 330), Fraction(854513, 138), Fraction(-236364091, 2730),
    Fraction(8553103, 6), Fraction(-23749461029, 870), Fraction(8615841276005, 14322),
]


@dataclass(frozen=True)
class BoundReport:
    name: str
    lhs: float
    rhs: float
    holds: bool
    margin: float

    @classmethod
    def compare(cls, name: str, lhs: float, rhs: float, rtol: float = REPORT_RTOL) -> "BoundReport":
        """Report on ``lhs <= rhs``, allowing ``rtol * |rhs|`` of rounding."""
        lhs, rhs = float(lhs), float(rhs)
        holds = bool(lhs <= rhs + rtol * abs(rhs))
        return cls(name, lhs, rhs, holds, rhs - lhs)

    def row(self) -> list[str]:
        return [self.name, repr(self.lhs), repr(self.rhs), "true" if self.holds else "false", repr(self.margin)]


CSV_HEADER = ("name", "lhs", "rhs", "holds", "margin")


def reports_to_csv(reports: Iterable[BoundReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in reports:
        w.writerow(r.row())
    return buf.getvalue()


# -- zeta ---------------------------------------------------------------------

def _check_s(s: float) -> float:
    s = float(s)
    if not math.isfinite(s) or s <= 1.0:
        raise DomainError(f"zeta needs s > 1, got {s}")
    return s


def _partial(s: float, M: int) -> float:
    """``sum_{n=1}^{M-1} n^-s``."""
    n = np.arange(1, M, dtype=float)
    return math.fsum(n**-s)


def zeta_bracket(s: float, M: int) -> tuple[float, float]:
    """Integral-comparison enclosure of ``zeta(s)`` from the first ``M-1`` terms.

    ``int_M^inf x^-s dx <= sum_{n>=M} n^-s <= M^-s + int_M^inf x^-s dx``.
    """
    s = _check_s(s)
    if M < 2:
        raise ValueError("M must be at least 2")
    head = _partial(s, M)
    tail = M ** (1.0 - s) / (s - 1.0)
    return head + tail, head + tail + M**-s


def _em_terms(s: float, M: int, q: int) -> tuple[float, float]:
    """Euler-Maclaurin tail ``sum_{n>=M} n^-s`` with ``q`` correction terms.

    Returns ``(estimate, bound)`` where ``bound`` is the magnitude of the first
    omitted term.  ``x^-s`` is completely monotone, so the remainder has the
    sign of that term and does not exceed it.
    """
    est = [M ** (1.0 - s) / (s - 1.0), 0.5 * M**-s]
    rising = s  # s (s+1) ... (s+2j-2)
    for j in range(1, q + 2):
        term = float(_BERNOULLI_EVEN[j - 1]) / math.factorial(2 * j) * rising * M ** (-s - 2 * j + 1)
        if j == q + 1:
            return math.fsum(est), abs(term)
        est.append(term)
        rising *= (s + 2 * j - 1) * (s + 2 * j)
    raise AssertionError("unreachable")


def zeta_enclosure(s: float, tol: float = 1e-12) -> tuple[float, float]:
    """Certified interval ``[lo, hi]`` containing ``zeta(s)``.

    The truncation part of the half-width is at most ``tol / 4``; a rounding
    allowance proportional to ``zeta(s)`` is added on top.
    """
    s = _check_s(s)
    if not tol > 0:
        raise ValueError("tol must be positive")
    q = 8
    M = 16
    while True:
        tail, err = _em_terms(s, M, q)
        if err <= 0.25 * tol:
            break
        M *= 2
        if M > 1 << 24:
            raise DomainError(f"cannot reach tol={tol} for s={s}")
    head = _partial(s, M)
    value = head + tail
    # summation rounding: fsum is exact-rounded, each power carries <= 1 ulp
    rounding = 4 * M * np.finfo(float).eps * value
    return value - err - rounding, value + err + rounding


def zeta(s: float, tol: float = 1e-12) -> float:
    """``zeta(s)`` for real ``s > 1`` with absolute error at most ``tol``."""
    lo, hi = zeta_enclosure(s, tol)
    return 0.5 * (lo + hi)


def zeta_upper(s: float) -> float:
    """Elementary majorant ``1 + 1/(s-1)``."""
    s = _check_s(s)
    return 1.0 + 1.0 / (s - 1.0)


# -- lattice sums -------------------------------------------------------------

def shell_counts(dim: int, radius: int) -> list[int]:
    """Number of indices with ``|n| = j`` in the l-infinity box, for ``j = 0..dim*radius``."""
    if dim < 1 or radius < 0:
        raise ValueError("need dim >= 1 and radius >= 0")
    one = [1] + [2] * radius  # coordinate a contributes |a|
    counts = [1]
    for _ in range(dim):
        nxt = [0] * (len(counts) + radius)
        for i, a in enumerate(counts):
            for j, b in enumerate(one):
                nxt[i + j] += a * b
        counts = nxt
    return counts


def h_sum(s: float, dim: int, radius: int) -> float:
    """``sum (1+|n|)^-s`` over the l-infinity box of the given radius."""
    s = float(s)
    if s <= dim:
        raise DomainError(f"lattice sum needs s > dim, got s={s}, dim={dim}")
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    counts = shell_counts(dim, radius)
    return math.fsum(c * (1.0 + j) ** -s for j, c in enumerate(counts))


def b_bound(s: float, dim: int, conservative: bool = False, tol: float = 1e-12) -> float:
    """Closed-form majorant of the full lattice sum ``sum_{n in Z^dim} (1+|n|)^-s``.

    ``1 + sum_{j=1}^{dim} C(dim, j) 2^j j^-s zeta(s/j)^j``.  With ``conservative``
    the elementary bound ``1 + 1/(x-1)`` replaces each ``zeta(x)``.
    """
    s = float(s)
    if dim < 1:
        raise ValueError("dim must be positive")
    if s <= dim:
        raise DomainError(f"majorant needs s > dim, got s={s}, dim={dim}")
    total = [1.0]
    for j in range(1, dim + 1):
        x = s / j
        if x <= 1.0:  # guaranteed by s > dim; kept as a guard
            raise DomainError(f"zeta argument s/j = {x} must exceed 1")
        z = zeta_upper(x) if conservative else zeta(x, tol)
        total.append(math.comb(dim, j) * 2.0**j * j ** -s * z**j)
    return math.fsum(total)


# -- existence constants ------------------------------------------------------

def _check_regime(A: float, r: float, dim: int, p: int):
    if not A > 0:
        raise DomainError("amplitude A must be positive")
    if p < 1 or int(p) != p:
        raise DomainError("p must be a positive integer")
    if r / 2 <= dim:
        raise DomainError(f"need r/2 > dim, got r={r}, dim={dim}")


def t0_bound(A: float, r: float, dim: int, p: int, conservative: bool = False) -> float:
    """Guaranteed existence time ``(2p)^2p / (A b(r/2)^2p P^P)``."""
    _check_regime(A, r, dim, p)
    P = 2 * p + 1
    b = b_bound(r / 2, dim, conservative)
    return (2 * p) ** (2 * p) / (A * b ** (2 * p) * P**P)


def b_constant(A: float, r: float, dim: int, p: int, conservative: bool = False) -> float:
    """Uniform decay constant ``max{A^(1/2p), A^(1/2p) (P/2p) b(r/2)}`` of the iterates."""
    _check_regime(A, r, dim, p)
    P = 2 * p + 1
    a = A ** (1.0 / (2 * p))
    return max(a, a * P / (2 * p) * b_bound(r / 2, dim, conservative))


def envelope_rate(A: float, r: float, dim: int, p: int, t_end: float) -> float:
    """Geometric rate ``P (B b(r/4))^(P-1) t`` of the factorial Cauchy envelope."""
    P = 2 * p + 1
    B = b_constant(A, r, dim, p)
    return P * (B * b_bound(r / 4, dim)) ** (P - 1) * t_end


# -- elementary inequalities --------------------------------------------------

def bernoulli_check(xs: Sequence[float]) -> BoundReport:
    """``1 + sum x_j <= prod (1 + x_j)`` for ``x_j > -1`` of a common sign."""
    xs = [float(x) for x in xs]
    if any(x <= -1.0 for x in xs):
        raise DomainError("every entry must exceed -1")
    if any(x > 0 for x in xs) and any(x < 0 for x in xs):
        raise PreconditionError("entries have mixed signs; the product bound need not hold")
    return BoundReport.compare("bernoulli", 1.0 + math.fsum(xs), math.prod(1.0 + x for x in xs))


def am_gm_check(values: Sequence[float]) -> BoundReport:
    """Geometric mean <= arithmetic mean for positive entries."""
    a = [float(v) for v in values]
    if not a:
        raise DomainError("need at least one entry")
    if any(not v > 0 for v in a):
        raise DomainError("entries must be positive")
    gm = math.exp(math.fsum(math.log(v) for v in a) / len(a))
    return BoundReport.compare("am_gm", gm, math.fsum(a) / len(a))


def gevrey_bound(A: float, rho: float, dim: int, omega_l1: float, m: int) -> float:
    """``max{A (6/rho)^dim, 2|omega|/rho}^(m+1) m!``."""
    if not 0 < rho <= 1:
        raise DomainError("rho must lie in (0, 1]")
    if m < 0:
        raise DomainError("m must be nonnegative")
    base = max(A * (6.0 / rho) ** dim, 2.0 * omega_l1 / rho)
    return base ** (m + 1) * math.factorial(m)
