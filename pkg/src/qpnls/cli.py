"""Command-line entry point ``qpnls``.

Every subcommand writes into ``<out>/<subcommand>/<config digest>/`` and exits
0 only if every emitted report holds.  Exit codes: 2 configuration error,
3 a report failed, 4 capacity or divergence, 1 any other package error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from typing import Callable

from . import analysis, bounds, combinatorics as comb
from .bounds import BoundReport, reports_to_csv
from .config import RunConfig, parse_config
from .errors import ConfigError, QPNLSError
from .lattice import LatticeBox, min_divisor
from .solver import linear_flow, mass_drift, picard_solve, rk4_solve, write_trajectory
from .spectral import fmt, make_exp_data, make_rng

log = logging.getLogger("qpnls")

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_ASSERT, EXIT_CAPACITY = 0, 1, 2, 3, 4


def _write(path: str, text: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _status(reports: list[BoundReport]) -> int:
    return EXIT_OK if all(r.holds for r in reports) else EXIT_ASSERT


# -- subcommands ---------------------------------------------------------------

def run_simulate(cfg: RunConfig, outdir: str, threads: int = 1) -> int:
    spec = cfg.spec()
    sim = cfg.simulate
    c0 = spec.initial_data()
    pic = picard_solve(spec, c0, keep_iterates=True)
    rk = rk4_solve(spec, c0)
    write_trajectory(pic.trajectory, os.path.join(outdir, "picard"), spec.p, spec.policy)
    write_trajectory(rk, os.path.join(outdir, "rk4"), spec.p, spec.policy)

    reports = [
        BoundReport.compare("picard_rk4_agreement", pic.trajectory.sup_diff(rk), sim.agreement_tol),
        BoundReport.compare("rk4_mass_drift", mass_drift(rk), sim.mass_tol),
    ]
    lin = linear_flow(c0, spec.omega, spec.grid)
    a = spec.A ** (1 / (2 * spec.p))
    if spec.decay == "polynomial":
        reports.append(analysis.verify_decay(lin, spec.rate, a, "linear_decay"))
    t0 = spec.t0
    in_regime = t0 is not None and spec.t_end <= t0 * (1 + 1e-12)
    if in_regime:
        B = bounds.b_constant(spec.A, spec.rate, spec.nu, spec.p)
        for k, it in enumerate(pic.iterates, start=1):
            reports.append(analysis.verify_decay(it, spec.rate / 2, B, f"picard_decay_k{k}"))
        rate = bounds.envelope_rate(spec.A, spec.rate, spec.nu, spec.p, spec.t_end)
        cr = analysis.cauchy_report(pic.deltas, rate)
        if cr.report is not None:
            reports.append(cr.report)
    else:
        cr = analysis.cauchy_report(pic.deltas, math.inf)
    probe = analysis.uniqueness_probe(spec, c0, sim.perturbation_scale)
    summary = {
        "t_end": spec.t_end,
        "t0": t0,
        "picard_deltas": pic.deltas,
        "picard_converged": pic.converged,
        "picard_diverged": pic.diverged,
        "cauchy_status": cr.status,
        "envelope_fit": {"amplitude": cr.fit_amplitude, "rate": cr.fit_rate},
        "uniqueness": {"scale": probe.scale, "sup_diff": probe.sup_diff, "initial_diff": probe.initial_diff},
        "min_divisor": min_divisor(spec.omega, spec.box) if spec.radius >= 1 else None,
        "warnings": list(cfg.warnings),
    }
    _write(os.path.join(outdir, "summary.json"), json.dumps(summary, indent=1, sort_keys=True) + "\n")
    _write(os.path.join(outdir, "reports.csv"), reports_to_csv(reports))
    return _status(reports)


def bound_reports(cfg: RunConfig) -> list[BoundReport]:
    """Every inequality table row for ``verify-bounds``."""
    b = cfg.bounds
    out = []
    for s in b.zeta_s:
        lo, hi = bounds.zeta_enclosure(s)
        out.append(BoundReport.compare(f"zeta_upper_s{fmt(s)}", hi, bounds.zeta_upper(s)))
    out.append(BoundReport.compare("zeta2_accuracy", abs(bounds.zeta(2.0) - math.pi**2 / 6), 1e-10))
    for s in b.s_values:
        for nu in b.nu_values:
            if s <= nu:
                continue
            bb = bounds.b_bound(s, nu)
            for N in b.radii:
                out.append(BoundReport.compare(f"lattice_sum_s{fmt(s)}_nu{nu}_N{N}", bounds.h_sum(s, nu, N), bb))
    for p in cfg.combinatorics.p_values:
        x = comb.gal_threshold(p)
        limit = comb.arity(p) / (2 * p)
        for k in range(1, cfg.combinatorics.k_max + 1):
            if comb.term_count(k, p) > cfg.combinatorics.budget:
                continue
            g = comb.gal_sum(k, p, x, cfg.combinatorics.budget)
            out.append(BoundReport.compare(f"gal_sum_p{p}_k{k}", float(g.value), limit))
    rng = make_rng(cfg.seed, stream=7)
    for i in range(b.samples):
        xs = rng.uniform(0.0, 1.0, size=int(rng.integers(1, 6)))
        if rng.random() < 0.5:
            xs = -0.999 * xs
        r = bounds.bernoulli_check(list(xs))
        out.append(BoundReport.compare(f"bernoulli_{i}", r.lhs, r.rhs))
        vals = rng.uniform(0.01, 10.0, size=int(rng.integers(1, 6)))
        r = bounds.am_gm_check(list(vals))
        out.append(BoundReport.compare(f"am_gm_{i}", r.lhs, r.rhs))
    # mixed signs: the product falls below the sum, so the sign condition is needed
    out.append(BoundReport.compare("bernoulli_mixed_sign_reverses", 0.5 * 1.5, 1.0 + 0.5 - 0.5))
    box = LatticeBox(2, b.gevrey_radius)
    omega = (1.0, math.sqrt(2.0))
    c = make_exp_data(1.0, b.gevrey_rho, box, 1, "deterministic")
    out.extend(analysis.gevrey_check(c, omega, b.gevrey_rho, 1.0, b.gevrey_m_max))
    return out


def run_verify_bounds(cfg: RunConfig, outdir: str, threads: int = 1) -> int:
    reports = bound_reports(cfg)
    _write(os.path.join(outdir, "bounds.csv"), reports_to_csv(reports))
    return _status(reports)


def run_tree_stats(cfg: RunConfig, outdir: str, threads: int = 1) -> int:
    cb = cfg.combinatorics
    table = io.StringIO()
    tw = csv.writer(table, lineterminator="\n")
    tw.writerow(["p", "k", "term_count", "enumerated", "gal_sum", "gal_exact", "gal_limit"])
    samples = io.StringIO()
    sw = csv.writer(samples, lineterminator="\n")
    sw.writerow(["p", "k", "index", "branch", "sigma2p", "ell", "dfactor"])
    reports = []
    for p in cb.p_values:
        x = comb.gal_threshold(p)
        limit = comb.arity(p) / (2 * p)
        for k in range(1, cb.k_max + 1):
            n = comb.term_count(k, p)
            if n > cb.budget:
                tw.writerow([p, k, n, "", "", "", fmt(limit)])
                continue
            found, exhaustive = comb.branches(k, p, cb.budget)
            g = comb.gal_sum(k, p, x, cb.budget)
            tw.writerow([p, k, n, len(found), fmt(float(g.value)), str(g.value) if g.exact else "", fmt(limit)])
            reports.append(BoundReport.compare(f"term_count_p{p}_k{k}", abs(len(found) - n), 0))
            reports.append(BoundReport.compare(f"gal_sum_p{p}_k{k}", float(g.value), limit))
            for i, br in enumerate(found[:5]):
                sw.writerow([p, k, i, repr(br), comb.sigma2p(br, p), comb.ell(br, p), comb.dfactor(br, p)])
    _write(os.path.join(outdir, "term_counts.csv"), table.getvalue())
    _write(os.path.join(outdir, "samples.csv"), samples.getvalue())
    _write(os.path.join(outdir, "reports.csv"), reports_to_csv(reports))
    return _status(reports)


def run_asymptotics(cfg: RunConfig, outdir: str, threads: int = 1) -> int:
    a = cfg.asymptotics
    spec = cfg.spec().with_(radius=a.radius)
    c0 = spec.initial_data()
    rep = analysis.asymptotics_experiment(spec, c0, a.epsilons, a.eta, a.s, a.dt_max, a.max_steps, threads)
    _write(os.path.join(outdir, "asymptotics.ndjson"), rep.ndjson())
    _write(os.path.join(outdir, "summary.csv"), rep.summary_csv())
    reports = []
    if any(v > 0 for v in rep.linf_diffs):
        reports.append(BoundReport.compare("slope_linf", a.eta - 0.1, rep.slope_linf))
        reports.append(BoundReport.compare("slope_hs", a.eta - 0.1, rep.slope_hs))
        reports.append(BoundReport.compare("monotone", 0.0 if rep.monotone else 1.0, 0.0))
    _write(os.path.join(outdir, "reports.csv"), reports_to_csv(reports))
    return _status(reports)


def run_render_tree(cfg: RunConfig, outdir: str, threads: int = 1) -> int:
    cb = cfg.combinatorics
    written = 0
    for item in comb.enumerate_branches(cb.render_k, cb.render_p, cb.render_limit):
        if isinstance(item, comb.Truncated):
            break
        _write(os.path.join(outdir, f"branch_{written:04d}.dot"),
               comb.render_tree_dot(item, cb.render_p, cb.render_k, f"branch_{written}"))
        written += 1
    return EXIT_OK


COMMANDS: dict[str, Callable[[RunConfig, str, int], int]] = {
    "simulate": run_simulate,
    "verify-bounds": run_verify_bounds,
    "tree-stats": run_tree_stats,
    "asymptotics": run_asymptotics,
    "render-tree": run_render_tree,
}


def run_dir(cfg: RunConfig, subcommand: str, out: str | None = None) -> str:
    return os.path.join(out or cfg.output, subcommand, cfg.digest())


def run(subcommand: str, cfg: RunConfig, out: str | None = None, threads: int = 1) -> tuple[int, str]:
    """Run one subcommand; returns ``(exit code, run directory)``."""
    outdir = run_dir(cfg, subcommand, out)
    os.makedirs(outdir, exist_ok=True)
    _write(os.path.join(outdir, "config.yaml"), cfg.to_yaml())
    try:
        code = COMMANDS[subcommand](cfg, outdir, threads)
    except QPNLSError as exc:
        _error_record(exc, os.path.join(outdir, "error.json"))
        return exc.exit_code, outdir
    return code, outdir


def _error_record(exc: Exception, path: str | None = None) -> dict:
    rec = {"error": type(exc).__name__, "message": str(exc), "exit_code": getattr(exc, "exit_code", EXIT_ERROR)}
    if getattr(exc, "key", None):
        rec["key"] = exc.key
    if getattr(exc, "step", None) is not None:
        rec["step"] = exc.step
    text = json.dumps(rec, sort_keys=True)
    print(text, file=sys.stderr)
    if path:
        _write(path, text + "\n")
    return rec


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qpnls", description="Quasi-periodic NLS experiments.")
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="YAML configuration file")
        sp.add_argument("--out", default=None, help="output root (default: config 'output')")
        sp.add_argument("--seed", type=int, default=None, help="override the 64-bit seed")
        sp.add_argument("--threads", type=int, default=1, help="worker processes for independent runs")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if not os.path.isfile(args.config):
            raise ConfigError(f"no such config file: {args.config}", "--config")
        cfg = parse_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("seed must be an unsigned 64-bit integer", "--seed")
            cfg = cfg.with_seed(args.seed)
    except ConfigError as exc:
        _error_record(exc)
        return EXIT_CONFIG
    for w in cfg.warnings:
        log.warning("hypothesis %s", w)
    if args.threads < 1:
        _error_record(ConfigError("must be at least 1", "--threads"))
        return EXIT_CONFIG
    code, outdir = run(args.subcommand, cfg, args.out, args.threads)
    print(outdir)
    return code


if __name__ == "__main__":
    sys.exit(main())
