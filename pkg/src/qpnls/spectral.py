"""Coefficient fields on a lattice box and the alternating convolution.

A :class:`CoefficientField` stores one complex amplitude per index of a
:class:`~qpnls.lattice.LatticeBox` as a dense array in lexicographic (C)
order.  The quasi-periodic function it represents is
``u(x) = sum_n c(n) exp(i <n> x)``.

The nonlinearity ``|u|^{2p} u`` has Fourier coefficients given by the
alternating convolution

    F(n) = sum_{n_1 - n_2 + n_3 - ... + n_P = n} c(n_1) conj(c(n_2)) c(n_3) ...

which equals the ordinary P-fold convolution ``c * g * c * g * ... * c`` with
``g(m) = conj(c(-m))``.
"""
from __future__ import annotations

import csv
import functools
import io
import math
from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

import numpy as np
from scipy import signal

from .errors import CapacityError, DomainError
from .lattice import LatticeBox, MultiIndex, min_divisor

Policy = Literal["project", "stepwise"]
PhaseScheme = Literal["zero", "deterministic", "seeded-random"]

GOLDEN = (1 + math.sqrt(5)) / 2


@dataclass(frozen=True, eq=False)
class CoefficientField:
    box: LatticeBox
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.shape != self.box.shape:
            raise ValueError(f"values of shape {v.shape} do not fit box shape {self.box.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("coefficient values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, box: LatticeBox) -> "CoefficientField":
        return cls(box, np.zeros(box.shape, dtype=complex))

    @classmethod
    def from_modes(cls, box: LatticeBox, modes: dict) -> "CoefficientField":
        v = np.zeros(box.shape, dtype=complex)
        for n, a in modes.items():
            v[box.position(n)] += a
        return cls(box, v)

    def __getitem__(self, n: Sequence[int]) -> complex:
        return complex(self.values[self.box.position(n)])

    def items(self) -> Iterable[tuple[MultiIndex, complex]]:
        for n, a in zip(self.box.indices(), self.values.ravel()):
            yield n, complex(a)

    def _check(self, other: "CoefficientField"):
        if other.box != self.box:
            raise ValueError("fields live on different boxes")

    def __add__(self, other: "CoefficientField") -> "CoefficientField":
        self._check(other)
        return CoefficientField(self.box, self.values + other.values)

    def __sub__(self, other: "CoefficientField") -> "CoefficientField":
        self._check(other)
        return CoefficientField(self.box, self.values - other.values)

    def __mul__(self, scalar) -> "CoefficientField":
        return CoefficientField(self.box, self.values * complex(scalar))

    __rmul__ = __mul__

    def allclose(self, other: "CoefficientField", atol: float = 0.0, rtol: float = 1e-12) -> bool:
        self._check(other)
        return bool(np.allclose(self.values, other.values, atol=atol, rtol=rtol))


# -- initial data -----------------------------------------------------------

def _phases(box: LatticeBox, scheme: PhaseScheme, seed: int | None) -> np.ndarray:
    if scheme == "zero":
        return np.zeros(box.shape)
    if scheme == "deterministic":
        weights = GOLDEN ** np.arange(1, box.dim + 1)
        frac = np.mod(box.coords @ weights, 1.0)
        return 2 * np.pi * frac
    if scheme == "seeded-random":
        if seed is None:
            raise ValueError("seeded-random phases need a seed")
        return make_rng(seed).uniform(0.0, 2 * np.pi, size=box.shape)
    raise ValueError(f"unknown phase scheme {scheme!r}")


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator; ``stream`` selects an independent substream."""
    return np.random.Generator(np.random.Philox(key=[int(seed) & (2**64 - 1), int(stream)]))


def make_poly_data(A: float, r: float, box: LatticeBox, p: int = 1,
                   phases: PhaseScheme = "zero", seed: int | None = None) -> CoefficientField:
    """``|c(n)| = A^(1/2p) (1+|n|)^(-r)`` with phases from ``phases``."""
    if A <= 0 or r <= 0:
        raise DomainError("need A > 0 and r > 0")
    mod = A ** (1 / (2 * p)) * (1.0 + box.l1) ** (-float(r))
    return CoefficientField(box, mod * np.exp(1j * _phases(box, phases, seed)))


def make_exp_data(A: float, kappa: float, box: LatticeBox, p: int = 1,
                  phases: PhaseScheme = "zero", seed: int | None = None) -> CoefficientField:
    """``|c(n)| = A^(1/2p) exp(-kappa |n|)`` with phases from ``phases``."""
    if A <= 0 or not 0 < kappa <= 1:
        raise DomainError("need A > 0 and 0 < kappa <= 1")
    mod = A ** (1 / (2 * p)) * np.exp(-float(kappa) * box.l1)
    return CoefficientField(box, mod * np.exp(1j * _phases(box, phases, seed)))


# -- alternating convolution ------------------------------------------------

def conj_reflect(c: CoefficientField) -> CoefficientField:
    """``g(m) = conj(c(-m))``: the coefficients of ``conj(u)``."""
    flipped = c.values[(slice(None, None, -1),) * c.box.dim]
    return CoefficientField(c.box, np.conj(flipped))


def _crop(a: np.ndarray, radius: int) -> np.ndarray:
    """Central ``(2*radius+1)^dim`` block of a centered array."""
    r_in = (a.shape[0] - 1) // 2
    lo = r_in - radius
    if lo < 0:
        return a
    sl = slice(lo, lo + 2 * radius + 1)
    return a[(sl,) * a.ndim]


#: above this many (output, input) pairs the gather table is not built
GATHER_LIMIT = 4_000_000


@functools.lru_cache(maxsize=64)
def _gather_table(dim: int, ra: int, rb: int, keep: int) -> np.ndarray:
    """Flat positions into ``a`` (sentinel ``a.size`` outside) for each (output, b) pair.

    Output ``o`` with ``|o|_inf <= keep`` receives ``a[o - j] * b[j]``.
    """
    ya = np.arange(-keep, keep + 1)
    jb = np.arange(-rb, rb + 1)
    diff = ya[:, None] - jb[None, :]  # per-axis a coordinate
    ok = np.abs(diff) <= ra
    side_a = 2 * ra + 1
    pos = diff + ra
    flat = np.zeros((ya.size,) * dim + (jb.size,) * dim, dtype=np.int64)
    valid = np.ones(flat.shape, dtype=bool)
    for ax in range(dim):
        shape = [1] * (2 * dim)
        shape[ax] = ya.size
        shape[dim + ax] = jb.size
        flat = flat * side_a + pos.reshape(shape)
        valid &= ok.reshape(shape)
    table = np.where(valid, flat, side_a**dim).reshape(ya.size**dim, jb.size**dim)
    table.setflags(write=False)
    return table


def _conv(a: np.ndarray, b: np.ndarray, keep: int | None = None) -> np.ndarray:
    """Direct lattice convolution of centered arrays, optionally only ``|o|_inf <= keep``."""
    dim = a.ndim
    ra, rb = (a.shape[0] - 1) // 2, (b.shape[0] - 1) // 2
    full = ra + rb
    k = full if keep is None else min(keep, full)
    if (2 * k + 1) ** dim * b.size > GATHER_LIMIT:
        return _crop(signal.convolve(a, b, mode="full", method="direct"), k)
    table = _gather_table(dim, ra, rb, k)
    a_ext = np.append(a.ravel(), 0)
    return (a_ext[table] @ b.ravel()).reshape((2 * k + 1,) * dim)


def alt_convolution_array(values: np.ndarray, p: int, policy: Policy = "stepwise",
                          with_loss: bool = False):
    """Array-level kernel of :func:`alt_convolution`.

    ``policy="stepwise"`` crops to the box after each pairwise convolution,
    left to right (closed-box Galerkin).  ``policy="project"`` keeps every
    intermediate sum and discards only final outputs outside the box.  Both
    give a mass-conserving flow.  With ``with_loss`` the l1 mass removed by
    all crops is returned as a second value.
    """
    if policy not in ("project", "stepwise"):
        raise ValueError(f"unknown truncation policy {policy!r}")
    N = (values.shape[0] - 1) // 2
    g = np.conj(values[(slice(None, None, -1),) * values.ndim])
    acc = values
    lost = 0.0
    for j in range(1, 2 * p + 1):
        crop = policy == "stepwise" or j == 2 * p
        acc = _conv(acc, g if j % 2 else values, None if with_loss or not crop else N)
        if crop:
            kept = _crop(acc, N)
            if with_loss:
                lost += math.fsum(np.abs(acc).ravel()) - math.fsum(np.abs(kept).ravel())
            acc = kept
    if with_loss:
        return acc, lost
    return acc


def alt_convolution(c: CoefficientField, p: int, policy: Policy = "stepwise") -> CoefficientField:
    """Fourier coefficients of ``|u|^{2p} u`` restricted to ``c.box``.

    Every ``n_j`` ranges over the box and the output is kept for ``n`` in the
    box; under the default ``stepwise`` policy each left-to-right partial
    alternating sum is confined to the box as well.
    """
    return CoefficientField(c.box, alt_convolution_array(c.values, p, policy))


def discarded_mass(c: CoefficientField, p: int, policy: Policy = "stepwise") -> float:
    """l1 mass of the nonlinearity that falls outside the box."""
    return alt_convolution_array(c.values, p, policy, with_loss=True)[1]


def brute_force_alt_convolution(c: CoefficientField, p: int, policy: Policy = "stepwise",
                                budget: int = 5_000_000) -> CoefficientField:
    """Reference oracle: sum over all index tuples ``(n_1..n_P)`` of the box.

    Under ``policy="stepwise"`` a tuple is kept only if every left-to-right
    alternating partial sum stays inside the box.
    """
    box, P = c.box, 2 * p + 1
    if box.size**P > budget:
        raise CapacityError(f"{box.size}^{P} tuples exceed budget {budget}")
    N, dim = box.radius, box.dim
    flat = c.values.ravel()
    coords = box.coords.reshape(-1, dim)
    grids = np.meshgrid(*([np.arange(box.size)] * P), indexing="ij")
    tuples = [g.ravel() for g in grids]
    prod = np.ones(tuples[0].shape, dtype=complex)
    total = np.zeros((tuples[0].size, dim), dtype=np.int64)
    keep = np.ones(tuples[0].shape, dtype=bool)
    for j, t in enumerate(tuples):
        a = flat[t]
        prod *= np.conj(a) if j % 2 else a
        total += (-1) ** j * coords[t]
        if policy == "stepwise":
            keep &= np.all(np.abs(total) <= N, axis=1)
    keep &= np.all(np.abs(total) <= N, axis=1)
    out = np.zeros(box.size, dtype=complex)
    lin = np.ravel_multi_index(tuple((total[keep] + N).T), box.shape)
    np.add.at(out, lin, prod[keep])
    return CoefficientField(box, out.reshape(box.shape))


# -- synthesis and norms ----------------------------------------------------

def evaluate(c: CoefficientField, omega: Sequence[float], x):
    """``u(x) = sum_n c(n) exp(i <n> x)``; ``x`` may be a scalar or an array."""
    freqs = c.box.pairing(omega).ravel()
    xs = np.asarray(x, dtype=float)
    vals = np.exp(1j * np.multiply.outer(xs, freqs)) @ c.values.ravel()
    return complex(vals) if xs.ndim == 0 else vals


def coefficient_l1(c: CoefficientField) -> float:
    """``sum_n |c(n)|``, a rigorous upper bound on ``sup_x |u(x)|``."""
    return float(np.abs(c.values).sum())


def sup_norm(c: CoefficientField, omega: Sequence[float], samples: int = 4096,
             multiplier: float = 8.0) -> float:
    """Sampled ``max |u(x)|`` over a uniform grid on ``[0, L]``.

    ``L = 2 pi * multiplier / d`` with ``d`` the smallest nonzero ``|<n>|`` on
    the box, so the slowest beat is sampled over ``multiplier`` periods.  This
    is a lower proxy of the true sup norm; see :func:`coefficient_l1`.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if not np.any(c.values):
        return 0.0
    d = min_divisor(omega, c.box) if c.box.radius >= 1 else 1.0
    L = 2 * np.pi * multiplier / max(d, 1e-12)
    xs = np.linspace(0.0, L, samples)
    return float(np.max(np.abs(evaluate(c, omega, xs))))


def hs_norm(c: CoefficientField, omega: Sequence[float], s: int) -> float:
    """``{ sum_{m=0}^{s} sum_n <n>^{2m} |c(n)|^2 }^{1/2}``."""
    if s < 0 or int(s) != s:
        raise ValueError("s must be a nonnegative integer")
    w2 = c.box.pairing(omega) ** 2
    weight = sum(w2**m for m in range(int(s) + 1))
    return float(np.sqrt(np.sum(weight * np.abs(c.values) ** 2)))


def l2_norm(c: CoefficientField) -> float:
    return float(np.sqrt(np.sum(np.abs(c.values) ** 2)))


# -- decay estimation -------------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    rate: float
    amplitude: float
    model: str
    residual: float
    shells: int


def shell_maxima(c: CoefficientField) -> tuple[np.ndarray, np.ndarray]:
    """Radii ``j`` and ``max_{|n|=j} |c(n)|`` over the l1 shells present in the box."""
    l1 = c.box.l1.ravel()
    mod = np.abs(c.values).ravel()
    radii = np.arange(l1.max() + 1)
    maxima = np.zeros(radii.size)
    np.maximum.at(maxima, l1, mod)
    return radii, maxima


def decay_fit(c: CoefficientField, model: Literal["polynomial", "exponential"] = "polynomial") -> DecayFit:
    """Least-squares fit of ``log max-shell-modulus`` against ``log(1+j)``
    (polynomial) or ``j`` (exponential).

    ``residual`` is the root-mean-square deviation of the log maxima from the
    fitted line.
    """
    radii, maxima = shell_maxima(c)
    ok = maxima > 0
    if not ok.any():
        raise DomainError("cannot fit the decay of an all-zero field")
    if ok.sum() < 3:
        raise DomainError("decay fit needs at least three nonzero shells")
    if model == "polynomial":
        xs = np.log1p(radii[ok])
    elif model == "exponential":
        xs = radii[ok].astype(float)
    else:
        raise ValueError(f"unknown decay model {model!r}")
    ys = np.log(maxima[ok])
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = ys - (slope * xs + intercept)
    return DecayFit(rate=float(-slope), amplitude=float(np.exp(intercept)), model=model,
                    residual=float(np.sqrt(np.mean(resid**2))), shells=int(ok.sum()))


# -- serialization ----------------------------------------------------------

def fmt(x: float) -> str:
    return repr(float(x))


def field_to_csv(c: CoefficientField) -> str:
    """CSV with header ``n_1,...,n_nu,re,im`` in lexicographic row order."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"n_{j}" for j in range(1, c.box.dim + 1)] + ["re", "im"])
    for n, a in c.items():
        w.writerow([*n, fmt(a.real), fmt(a.imag)])
    return buf.getvalue()


def field_from_csv(text: str) -> CoefficientField:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ValueError("empty field CSV")
    header, body = rows[0], rows[1:]
    dim = len(header) - 2
    if dim < 1 or header[-2:] != ["re", "im"] or header[:dim] != [f"n_{j}" for j in range(1, dim + 1)]:
        raise ValueError(f"unexpected field CSV header {header!r}")
    idx = [tuple(int(v) for v in row[:dim]) for row in body]
    radius = max((max(abs(a) for a in n) for n in idx), default=0)
    box = LatticeBox(dim, radius)
    if len(idx) != box.size or idx != box.indices():
        raise ValueError("field CSV rows do not enumerate a full box in lexicographic order")
    vals = np.array([complex(float(row[dim]), float(row[dim + 1])) for row in body])
    return CoefficientField(box, vals.reshape(box.shape))


__all__ = [
    "CoefficientField", "DecayFit", "alt_convolution", "alt_convolution_array",
    "brute_force_alt_convolution", "coefficient_l1", "conj_reflect", "decay_fit",
    "discarded_mass", "evaluate", "field_from_csv", "field_to_csv", "hs_norm", "l2_norm",
    "make_exp_data", "make_poly_data", "make_rng", "shell_maxima", "sup_norm",
]
