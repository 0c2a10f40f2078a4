"""Experiment drivers: decay checks, Cauchy envelopes, cross-solver probes, asymptotics."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import bounds
from .bounds import BoundReport
from .errors import DomainError, PreconditionError
from .lattice import omega_l1
from .solver import ProblemSpec, Trajectory, evolve_interaction, picard_solve, rk4_solve
from .spectral import CoefficientField, coefficient_l1, fmt, hs_norm, make_rng, sup_norm


def verify_decay(traj: Trajectory, rate: float, bound: float, name: str = "decay") -> BoundReport:
    """``max_{t,n} |c(t,n)| (1+|n|)^rate <= bound``."""
    weight = (1.0 + traj.box.l1) ** float(rate)
    lhs = float(np.max(np.abs(traj.values) * weight))
    return BoundReport.compare(name, lhs, bound)


# -- Cauchy envelope ----------------------------------------------------------

@dataclass
class CauchyReport:
    status: str  # "cauchy", "non-cauchy" or "insufficient"
    ratios: list[float]
    limits: list[float]
    decreasing: bool
    fit_amplitude: float = math.nan
    fit_rate: float = math.nan
    report: BoundReport | None = None

    def fitted(self, k: int) -> float:
        """Fitted envelope ``C x^k / k!`` for the ``k``-th delta."""
        return self.fit_amplitude * self.fit_rate**k / math.factorial(k)


def cauchy_report(deltas: Sequence[float], envelope_rate: float, slack: float = 1.5,
                  start: int = 2) -> CauchyReport:
    """Ratio test ``d_{k+1}/d_k <= slack * rate/(k+1)`` for ``k >= start``.

    ``deltas[k-1]`` is the ``k``-th Picard increment.  The report's ``lhs`` is
    the worst ratio relative to its limit, checked against 1.  A least-squares
    fit of ``log d_k + log k! = log C + k log x`` gives the envelope.
    """
    d = [float(x) for x in deltas]
    if sum(1 for x in d if x > 0) < 4:
        return CauchyReport("insufficient", [], [], False)
    ratios, limits = [], []
    for k in range(start, len(d)):
        if d[k - 1] == 0:
            break
        ratios.append(d[k] / d[k - 1])
        limits.append(slack * envelope_rate / (k + 1))
    decreasing = all(b < a for a, b in zip(d[start - 1:], d[start:]))
    worst = max((r / lim for r, lim in zip(ratios, limits)), default=0.0)
    report = BoundReport.compare("cauchy_ratio", worst, 1.0)
    ks = [k for k in range(1, len(d) + 1) if d[k - 1] > 0]
    y = [math.log(d[k - 1]) + math.lgamma(k + 1) for k in ks]
    slope, icpt = np.polyfit(ks, y, 1)
    status = "cauchy" if report.holds else "non-cauchy"
    return CauchyReport(status, ratios, limits, decreasing, math.exp(icpt), math.exp(slope), report)


# -- uniqueness ---------------------------------------------------------------

@dataclass
class UniquenessReport:
    scale: float
    sup_diff: float
    initial_diff: float
    picard_converged: bool
    picard_depth: int


def decay_class_perturbation(spec: ProblemSpec, scale: float, stream: int = 1) -> CoefficientField:
    """Random-phase field with moduli ``scale`` times the decay profile of ``spec``."""
    box = spec.box
    if spec.decay == "polynomial":
        profile = (1.0 + box.l1) ** -float(spec.rate)
    else:
        profile = np.exp(-float(spec.rate) * box.l1)
    phase = make_rng(spec.seed, stream).uniform(0.0, 2 * np.pi, size=box.shape)
    return CoefficientField(box, scale * spec.A ** (1 / (2 * spec.p)) * profile * np.exp(1j * phase))


def uniqueness_probe(spec: ProblemSpec, c0: CoefficientField, perturbation_scale: float) -> UniquenessReport:
    """Sup distance between Picard from ``c0`` and RK4 from ``c0 + perturbation``."""
    if perturbation_scale < 0:
        raise DomainError("perturbation_scale must be nonnegative")
    other = c0
    if perturbation_scale > 0:
        other = c0 + decay_class_perturbation(spec, perturbation_scale)
    pic = picard_solve(spec, c0)
    rk = rk4_solve(spec, other)
    init = float(np.max(np.abs(other.values - c0.values)))
    return UniquenessReport(perturbation_scale, pic.trajectory.sup_diff(rk), init,
                            pic.converged, pic.depth)


# -- asymptotics --------------------------------------------------------------

@dataclass
class AsymptoticsReport:
    epsilons: list[float]
    eta: float
    s: int
    t_values: list[float]
    linf_diffs: list[float]
    hs_diffs: list[float]
    slope_linf: float
    slope_hs: float
    sampled_sup: list[float] = field(default_factory=list)

    @property
    def monotone(self) -> bool:
        """Both difference norms strictly decrease as epsilon decreases."""
        order = np.argsort(self.epsilons)[::-1]
        ok = True
        for vals in (self.linf_diffs, self.hs_diffs):
            v = [vals[i] for i in order]
            ok &= all(b < a for a, b in zip(v, v[1:]))
        return bool(ok)

    def constant_spread(self) -> float:
        """max/min of ``hs_diff / eps^eta`` across the set."""
        c = [h / e**self.eta for h, e in zip(self.hs_diffs, self.epsilons)]
        if min(c) <= 0:
            return math.inf
        return max(c) / min(c)

    def ndjson(self) -> str:
        lines = [json.dumps({"epsilon": e, "t": t, "linf_diff": a, "hs_diff": b})
                 for e, t, a, b in zip(self.epsilons, self.t_values, self.linf_diffs, self.hs_diffs)]
        return "\n".join(lines) + "\n"

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "slope", "eta", "s"])
        w.writerow(["linf", fmt(self.slope_linf), fmt(self.eta), self.s])
        w.writerow(["hs", fmt(self.slope_hs), fmt(self.eta), self.s])
        return buf.getvalue()


def _loglog_slope(eps: Sequence[float], vals: Sequence[float]) -> float:
    if len(eps) < 2 or min(vals) <= 0:
        return math.nan
    return float(np.polyfit(np.log(eps), np.log(vals), 1)[0])


def _one_epsilon(args):
    c0, omega, p, lam, eps, eta, s, dt_max, max_steps, policy = args
    t = eps ** (-1.0 + eta)
    final = evolve_interaction(c0, omega, p, lam * eps, t, dt_max, max_steps, policy)
    lin = CoefficientField(c0.box, np.exp(-1j * c0.box.pairing(omega) ** 2 * t) * c0.values)
    diff = final - lin
    return t, coefficient_l1(diff), hs_norm(diff, omega, s), sup_norm(diff, omega)


def asymptotics_experiment(spec: ProblemSpec, c0: CoefficientField, epsilons: Sequence[float],
                           eta: float, s: int, dt_max: float = 0.01, max_steps: int = 2_000_000,
                           threads: int = 1) -> AsymptoticsReport:
    """Distance from the linear flow at ``t = eps^(eta-1)`` under coupling ``lam * eps``."""
    if spec.decay == "polynomial" and not s < spec.rate / 4 - spec.nu / 2:
        raise PreconditionError(f"need s < r/4 - nu/2 = {spec.rate / 4 - spec.nu / 2}, got s={s}")
    if not 0 < eta < 1:
        raise DomainError("eta must lie in (0, 1)")
    eps = [float(e) for e in epsilons]
    if any(not 0 < e < 1 for e in eps):
        raise DomainError("every epsilon must lie in (0, 1)")
    jobs = [(c0, spec.omega, spec.p, spec.lam, e, eta, s, dt_max, max_steps, spec.policy) for e in eps]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
            out = list(pool.map(_one_epsilon, jobs))
    else:
        out = [_one_epsilon(j) for j in jobs]
    t, linf, hs, sup = (list(col) for col in zip(*out))
    return AsymptoticsReport(eps, float(eta), int(s), t, linf, hs,
                             _loglog_slope(eps, linf), _loglog_slope(eps, hs), sup)


# -- Gevrey -------------------------------------------------------------------

def gevrey_check(c: CoefficientField, omega: Sequence[float], rho: float, A: float,
                 m_max: int, rtol: float = 1e-12) -> list[BoundReport]:
    """``sum |<n>|^m |c(n)| <= gevrey_bound(m)`` for ``m = 0..m_max``.

    Applies only to fields with ``|c(n)| <= A exp(-rho |n|)``.
    """
    mod = np.abs(c.values)
    envelope = A * np.exp(-rho * c.box.l1)
    if np.any(mod > envelope * (1 + rtol)):
        raise PreconditionError("field is not dominated by A exp(-rho |n|)")
    w = np.abs(c.box.pairing(omega))
    wl1 = omega_l1(omega)
    out = []
    for m in range(m_max + 1):
        lhs = math.fsum((w**m * mod).ravel())
        out.append(BoundReport.compare(f"gevrey_m{m}", lhs, bounds.gevrey_bound(A, rho, c.box.dim, wl1, m)))
    return out
