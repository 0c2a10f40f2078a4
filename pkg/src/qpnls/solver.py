"""Time evolution of the truncated coefficient system.

The Galerkin system on a lattice box is

    dc/dt (n) = -i <n>^2 c(n) + i lam F(c)(n),

with ``F`` the alternating convolution.  Two independent solvers are
provided: the Picard iteration of the Duhamel formula (quadrature on a shared
uniform grid) and classical RK4.  A single mode is an exact plane wave and
serves as analytic oracle for both.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np

from . import bounds
from .errors import CapacityError, DivergenceError, DomainError
from .lattice import LatticeBox, frequency_vector
from .spectral import (
    CoefficientField,
    Policy,
    alt_convolution_array,
    field_to_csv,
    make_exp_data,
    make_poly_data,
)

DecayModel = Literal["polynomial", "exponential"]


@dataclass(frozen=True)
class TimeGrid:
    t_end: float
    steps: int

    def __post_init__(self):
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ValueError("t_end must be positive and finite")
        if self.steps < 2 or self.steps % 2:
            raise ValueError("steps must be a positive even integer")

    @property
    def h(self) -> float:
        return self.t_end / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.h


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Fields on every grid node, stored as one array of shape ``(steps+1,) + box.shape``."""

    grid: TimeGrid
    box: LatticeBox
    values: np.ndarray
    provenance: str

    def __post_init__(self):
        if self.values.shape != (self.grid.steps + 1,) + self.box.shape:
            raise ValueError("trajectory values do not match grid and box")

    def __len__(self) -> int:
        return self.grid.steps + 1

    def field(self, i: int) -> CoefficientField:
        return CoefficientField(self.box, self.values[i])

    @property
    def fields(self) -> list[CoefficientField]:
        return [self.field(i) for i in range(len(self))]

    def sup_diff(self, other: "Trajectory") -> float:
        if other.grid != self.grid or other.box != self.box:
            raise ValueError("trajectories live on different grids or boxes")
        return float(np.max(np.abs(self.values - other.values)))


def zero_trajectory(box: LatticeBox, grid: TimeGrid) -> Trajectory:
    return Trajectory(grid, box, np.zeros((grid.steps + 1,) + box.shape, dtype=complex), "zero")


@dataclass(frozen=True)
class ProblemSpec:
    """Every parameter of one run.  ``P = 2p+1`` is derived, never stored."""

    nu: int
    p: int
    omega: tuple[float, ...]
    lam: int = 1
    A: float = 1.0
    decay: DecayModel = "polynomial"
    rate: float = 12.0
    radius: int = 4
    t_end: float = 0.005
    steps: int = 200
    picard_depth: int = 12
    tol: float = 1e-13
    seed: int = 0
    phases: str = "seeded-random"
    policy: Policy = "stepwise"

    def __post_init__(self):
        object.__setattr__(self, "omega", tuple(float(w) for w in frequency_vector(self.omega)))
        if self.nu < 2:
            raise DomainError("nu must be at least 2")
        if len(self.omega) != self.nu:
            raise DomainError(f"omega has {len(self.omega)} entries, expected nu={self.nu}")
        if self.p < 1:
            raise DomainError("p must be a positive integer")
        if self.lam not in (1, -1):
            raise DomainError("lam must be +1 or -1")
        if self.decay not in ("polynomial", "exponential"):
            raise DomainError(f"unknown decay model {self.decay!r}")
        if not self.A >= 0:
            raise DomainError("amplitude A must be nonnegative")
        if self.picard_depth < 1:
            raise DomainError("picard_depth must be at least 1")
        TimeGrid(self.t_end, self.steps)

    @property
    def P(self) -> int:
        return 2 * self.p + 1

    @property
    def box(self) -> LatticeBox:
        return LatticeBox(self.nu, self.radius)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.t_end, self.steps)

    @property
    def t0(self) -> float | None:
        """Guaranteed existence time, when the polynomial-decay regime applies."""
        if self.decay != "polynomial" or self.rate / 2 <= self.nu or self.A == 0:
            return None
        return bounds.t0_bound(self.A, self.rate, self.nu, self.p)

    def initial_data(self) -> CoefficientField:
        if self.A == 0:
            return CoefficientField.zeros(self.box)
        make = make_poly_data if self.decay == "polynomial" else make_exp_data
        return make(self.A, self.rate, self.box, self.p, self.phases, self.seed)

    def with_(self, **changes) -> "ProblemSpec":
        return replace(self, **changes)


def _w2(box: LatticeBox, omega: Sequence[float]) -> np.ndarray:
    return box.pairing(omega) ** 2


def _phase(box: LatticeBox, omega, t: np.ndarray, sign: float) -> np.ndarray:
    """``exp(sign * i <n>^2 t)`` for every node in ``t`` and every index."""
    return np.exp(sign * 1j * np.multiply.outer(t, _w2(box, omega)))


def linear_flow(c0: CoefficientField, omega: Sequence[float], grid: TimeGrid) -> Trajectory:
    """``c(t, n) = exp(-i <n>^2 t) c0(n)`` on every node."""
    vals = _phase(c0.box, omega, grid.nodes, -1.0) * c0.values
    return Trajectory(grid, c0.box, vals, "linear")


def galerkin_rhs_array(values: np.ndarray, w2: np.ndarray, p: int, lam: float,
                       policy: Policy = "stepwise") -> np.ndarray:
    return -1j * w2 * values + 1j * lam * alt_convolution_array(values, p, policy)


def galerkin_rhs(c: CoefficientField, omega: Sequence[float], p: int, lam: float,
                 policy: Policy = "stepwise") -> CoefficientField:
    return CoefficientField(c.box, galerkin_rhs_array(c.values, _w2(c.box, omega), p, lam, policy))


def plane_wave_exact(a: complex, n0: Sequence[int], omega: Sequence[float], p: int, lam: float,
                     t: float) -> complex:
    """Exact single-mode solution ``a exp(-i <n0>^2 t + i lam |a|^2p t)``."""
    w = math.fsum(float(k) * float(x) for k, x in zip(n0, omega))
    return complex(a) * np.exp(1j * (-w * w + lam * abs(a) ** (2 * p)) * t)


def rk4_solve(spec: ProblemSpec, c0: CoefficientField) -> Trajectory:
    """Classical RK4 on the Galerkin system over ``spec.grid``."""
    grid = spec.grid
    w2 = _w2(c0.box, spec.omega)
    h = grid.h

    def f(v):
        return galerkin_rhs_array(v, w2, spec.p, spec.lam, spec.policy)

    out = np.empty((grid.steps + 1,) + c0.box.shape, dtype=complex)
    y = c0.values.copy()
    out[0] = y
    for i in range(grid.steps):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise DivergenceError(f"non-finite value at RK4 step {i + 1}", step=i + 1)
        out[i + 1] = y
    return Trajectory(grid, c0.box, out, "rk4")


def cumulative_simpson(g: np.ndarray, h: float) -> np.ndarray:
    """``I[i] = int_0^{t_i} g`` on a uniform grid, using only samples ``0..i``.

    Even prefixes use composite Simpson; odd prefixes ``i >= 3`` append a
    Simpson 3/8 panel over the last three intervals; ``i = 1`` uses the
    three-point formula ``h (5 g0 + 8 g1 - g2) / 12``.
    """
    n = g.shape[0] - 1
    if n < 2 or n % 2:
        raise ValueError("need an even number of intervals >= 2")
    out = np.zeros_like(g)
    panels = (h / 3.0) * (g[0:-2:2] + 4 * g[1:-1:2] + g[2::2])
    out[2::2] = np.cumsum(panels, axis=0)
    out[1] = h * (5 * g[0] + 8 * g[1] - g[2]) / 12.0
    if n >= 4:
        i = np.arange(3, n, 2)
        out[i] = out[i - 3] + (3 * h / 8.0) * (g[i - 3] + 3 * g[i - 2] + 3 * g[i - 1] + g[i])
    return out


def picard_step(prev: Trajectory, c0: CoefficientField, spec: ProblemSpec) -> Trajectory:
    """One Duhamel iterate with the nonlinearity evaluated along ``prev``."""
    grid = spec.grid
    if prev.grid != grid:
        raise ValueError("previous iterate lives on a different time grid")
    if prev.box != c0.box:
        raise ValueError("previous iterate lives on a different box")
    t = grid.nodes
    F = np.empty_like(prev.values)
    for j in range(len(t)):
        F[j] = alt_convolution_array(prev.values[j], spec.p, spec.policy)
    G = _phase(c0.box, spec.omega, t, 1.0) * F
    integral = cumulative_simpson(G, grid.h)
    vals = _phase(c0.box, spec.omega, t, -1.0) * (c0.values + 1j * spec.lam * integral)
    return Trajectory(grid, c0.box, vals, prev.provenance)


@dataclass
class PicardResult:
    trajectory: Trajectory
    deltas: list[float]
    converged: bool
    diverged: bool
    decay_maxima: list[float] = field(default_factory=list)
    iterates: list[Trajectory] | None = None

    @property
    def depth(self) -> int:
        return len(self.deltas)


def _increasing_run(deltas: list[float], length: int = 3) -> bool:
    if len(deltas) < length + 2:
        return False
    tail = deltas[-(length + 1):]
    return all(b > a for a, b in zip(tail, tail[1:]))


def picard_solve(spec: ProblemSpec, c0: CoefficientField, keep_iterates: bool = False,
                 decay_rate: float | None = None) -> PicardResult:
    """Iterate from the zero trajectory; iterate 1 is the linear flow.

    ``deltas[k-1]`` is the sup over nodes and indices of ``|c_k - c_{k-1}|``.
    Stops when a delta falls below ``spec.tol``.  Divergence (three
    consecutive increases past ``k = 2`` with ``t_end`` beyond the existence
    time) is reported, not raised.  ``decay_maxima`` records, per iterate,
    ``max |c_k(t, n)| (1+|n|)^decay_rate`` (default ``rate/2``, polynomial data).
    """
    if decay_rate is None and spec.decay == "polynomial":
        decay_rate = spec.rate / 2
    weight = None if decay_rate is None else (1.0 + c0.box.l1) ** float(decay_rate)
    t0 = spec.t0
    prev = zero_trajectory(c0.box, spec.grid)
    deltas: list[float] = []
    maxima: list[float] = []
    kept: list[Trajectory] = []
    converged = diverged = False
    for k in range(1, spec.picard_depth + 1):
        cur = picard_step(prev, c0, spec)
        cur = Trajectory(cur.grid, cur.box, cur.values, f"picard({k})")
        if not np.all(np.isfinite(cur.values)):
            diverged = True
            break
        deltas.append(cur.sup_diff(prev))
        if weight is not None:
            maxima.append(float(np.max(np.abs(cur.values) * weight)))
        if keep_iterates:
            kept.append(cur)
        prev = cur
        if deltas[-1] < spec.tol:
            converged = True
            break
        if _increasing_run(deltas) and (t0 is None or spec.t_end > t0):
            diverged = True
            break
    return PicardResult(prev, deltas, converged, diverged, maxima, kept if keep_iterates else None)


def mass(c: CoefficientField | np.ndarray) -> float:
    """``sum |c(n)|^2``."""
    v = c.values if isinstance(c, CoefficientField) else np.asarray(c)
    return math.fsum(np.abs(v.ravel()) ** 2)


def mass_drift(traj: Trajectory) -> float:
    """Largest relative deviation of the mass from its initial value."""
    m = [mass(traj.values[i]) for i in range(len(traj))]
    if m[0] == 0.0:
        return max(m)
    return max(abs(x - m[0]) for x in m) / m[0]


def required_steps(t_end: float, dt_max: float) -> int:
    steps = max(2, math.ceil(t_end / dt_max))
    return steps + steps % 2


def evolve_interaction(c0: CoefficientField, omega: Sequence[float], p: int, coupling: float,
                       t_end: float, dt_max: float = 0.01, max_steps: int = 2_000_000,
                       policy: Policy = "stepwise") -> CoefficientField:
    """Final state at ``t_end`` of ``i u_t + u_xx + coupling |u|^2p u = 0``.

    Integrates ``b = exp(i <n>^2 t) c`` with RK4, so only the (weak)
    nonlinear forcing is discretized and the free phase is exact.  Only the
    end state is kept, since long horizons need many steps.
    """
    steps = required_steps(t_end, dt_max)
    if steps > max_steps:
        raise CapacityError(f"t_end={t_end} needs {steps} steps at dt_max={dt_max}, "
                            f"above the limit {max_steps}")
    w2 = _w2(c0.box, omega)
    h = t_end / steps

    def f(t, b):
        rot = np.exp(-1j * w2 * t)
        return 1j * coupling * np.conj(rot) * alt_convolution_array(rot * b, p, policy)

    b = c0.values.copy()
    for i in range(steps):
        t = i * h
        k1 = f(t, b)
        k2 = f(t + 0.5 * h, b + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, b + 0.5 * h * k2)
        k4 = f(t + h, b + h * k3)
        b = b + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(b)):
            raise DivergenceError(f"non-finite value at step {i + 1}", step=i + 1)
    return CoefficientField(c0.box, np.exp(-1j * w2 * t_end) * b)


def write_trajectory(traj: Trajectory, directory: str, p: int, policy: Policy = "stepwise") -> list[str]:
    """One field CSV per node plus ``manifest.ndjson``; returns the written paths."""
    os.makedirs(directory, exist_ok=True)
    written = []
    lines = []
    width = len(str(len(traj) - 1))
    for i, t in enumerate(traj.grid.nodes):
        c = traj.field(i)
        path = os.path.join(directory, f"node_{i:0{width}d}.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(field_to_csv(c))
        written.append(path)
        _, lost = alt_convolution_array(c.values, p, policy, with_loss=True)
        lines.append(json.dumps({
            "node_index": i,
            "t": float(t),
            "mass": mass(c),
            "linf_coeff": float(np.max(np.abs(c.values))),
            "discarded_mass": lost,
        }))
    path = os.path.join(directory, "manifest.ndjson")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    written.append(path)
    return written
