"""YAML run configuration.

Layout::

    seed: 0
    output: out
    problem:   {nu, p, omega, lam, A, decay, rate, radius, t_end, steps,
                picard_depth, tol, phases, policy}
    simulate:  {perturbation_scale, agreement_tol, mass_tol}
    asymptotics: {epsilons, eta, s, radius, dt_max, max_steps}
    combinatorics: {k_max, p_values, budget, render_k, render_p, render_limit}
    bounds:    {zeta_s, s_values, nu_values, radii, samples, gevrey_radius,
                gevrey_rho, gevrey_m_max}

``problem.nu``, ``p``, ``omega``, ``rate``, ``A`` and ``radius`` are
required; everything else has a default.  ``problem.t_end`` may be the string
``t0`` (the guaranteed existence time) or a number.  Numbers written as
``1e-13`` (which YAML 1.1 reads as strings) are accepted.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import Any

import yaml

from .errors import ConfigError, QPNLSError
from .solver import ProblemSpec


@dataclass(frozen=True)
class SimulateBlock:
    perturbation_scale: float = 1e-6
    agreement_tol: float = 1e-4
    mass_tol: float = 1e-8


@dataclass(frozen=True)
class AsymptoticsBlock:
    epsilons: tuple[float, ...] = (1e-2, 1e-3, 1e-4)
    eta: float = 0.2
    s: int = 1
    radius: int = 3
    dt_max: float = 0.01
    max_steps: int = 2_000_000


@dataclass(frozen=True)
class CombinatoricsBlock:
    k_max: int = 3
    p_values: tuple[int, ...] = (1, 2)
    budget: int = 1_000_000
    render_k: int = 2
    render_p: int = 1
    render_limit: int = 9


@dataclass(frozen=True)
class BoundsBlock:
    zeta_s: tuple[float, ...] = (1.5, 2.0, 3.0, 6.0, 12.0)
    s_values: tuple[float, ...] = (4.0, 6.0, 8.0, 12.0)
    nu_values: tuple[int, ...] = (1, 2)
    radii: tuple[int, ...] = (4, 8, 16)
    samples: int = 100
    gevrey_radius: int = 8
    gevrey_rho: float = 1.0
    gevrey_m_max: int = 6


@dataclass(frozen=True)
class RunConfig:
    problem: dict
    seed: int = 0
    output: str = "out"
    simulate: SimulateBlock = SimulateBlock()
    asymptotics: AsymptoticsBlock = AsymptoticsBlock()
    combinatorics: CombinatoricsBlock = CombinatoricsBlock()
    bounds: BoundsBlock = BoundsBlock()
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def spec(self) -> ProblemSpec:
        """The :class:`ProblemSpec` with ``t_end: t0`` resolved."""
        kw = dict(self.problem)
        kw["omega"] = tuple(kw["omega"])
        kw["seed"] = self.seed
        if kw.get("t_end") == "t0":
            probe = ProblemSpec(**{**kw, "t_end": 1.0})
            if probe.t0 is None:
                raise ConfigError("t0 is undefined for this decay model or amplitude", "problem.t_end")
            kw["t_end"] = probe.t0
        try:
            return ProblemSpec(**kw)
        except (ValueError, QPNLSError) as exc:
            raise ConfigError(str(exc), "problem") from exc

    def to_dict(self) -> dict:
        out = {"seed": self.seed, "output": self.output, "problem": dict(self.problem)}
        out["problem"]["omega"] = list(out["problem"]["omega"])
        for name in ("simulate", "asymptotics", "combinatorics", "bounds"):
            block = dataclasses.asdict(getattr(self, name))
            out[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in block.items()}
        return out

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def digest(self) -> str:
        """Stable hash of the configuration, used as run name."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:12]

    def with_seed(self, seed: int) -> "RunConfig":
        return dataclasses.replace(self, seed=int(seed))


_REQUIRED = ("nu", "p", "omega", "rate", "A", "radius")
_PROBLEM_TYPES = {
    "nu": int, "p": int, "omega": list, "lam": int, "A": float, "decay": str, "rate": float,
    "radius": int, "t_end": "t_end", "steps": int, "picard_depth": int, "tol": float,
    "phases": str, "policy": str,
}


def _coerce(value: Any, kind, key: str):
    try:
        if kind == "t_end":
            return "t0" if value == "t0" else _coerce(value, float, key)
        if kind is int:
            if isinstance(value, bool):
                raise TypeError
            if isinstance(value, float) and not value.is_integer():
                raise TypeError
            return int(value)
        if kind is float:
            if isinstance(value, bool):
                raise TypeError
            out = float(value)
            if not math.isfinite(out):
                raise TypeError
            return out
        if kind is str:
            if not isinstance(value, str):
                raise TypeError
            return value
        if kind is list:
            if not isinstance(value, (list, tuple)):
                raise TypeError
            return [_coerce(v, float, key) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"expected {getattr(kind, '__name__', kind)}, got {value!r}", key) from None
    raise AssertionError(kind)


def _block(cls, raw: Any, name: str):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError("expected a mapping", name)
    kw = {}
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for key, value in raw.items():
        if key not in fields:
            raise ConfigError("unknown key", f"{name}.{key}")
        default = getattr(cls(), key)
        if isinstance(default, tuple):
            elem = type(default[0]) if default else float
            if not isinstance(value, (list, tuple)) or not value:
                raise ConfigError("expected a non-empty list", f"{name}.{key}")
            kw[key] = tuple(_coerce(v, elem, f"{name}.{key}[{i}]") for i, v in enumerate(value))
        else:
            kw[key] = _coerce(value, type(default), f"{name}.{key}")
    return cls(**kw)


def hypothesis_warnings(problem: dict) -> list[str]:
    """Named violations of the local-existence regime ``r > 8``, ``2 <= nu < min(r/2 - 2, r/4)``."""
    if problem.get("decay", "polynomial") != "polynomial":
        return []
    r, nu = problem["rate"], problem["nu"]
    out = []
    if not r > 8:
        out.append("r > 8 violated")
    if not nu < r / 4:
        out.append("ν < r/4 violated")
    if not nu < r / 2 - 2:
        out.append("ν < r/2 − 2 violated")
    return out


def parse_config(source: str) -> RunConfig:
    """Parse YAML text, or the file at ``source`` if it names an existing file."""
    text = source
    if "\n" not in source and os.path.isfile(source):
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    if not text.strip():
        raise ConfigError("configuration is empty")
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping")
    known = {"seed", "output", "problem", "simulate", "asymptotics", "combinatorics", "bounds"}
    for key in raw:
        if key not in known:
            raise ConfigError("unknown key", str(key))
    prob_raw = raw.get("problem")
    if not isinstance(prob_raw, dict):
        raise ConfigError("missing required mapping", "problem")
    problem = {}
    for key in _REQUIRED:
        if key not in prob_raw:
            raise ConfigError("missing required key", f"problem.{key}")
    for key, value in prob_raw.items():
        if key not in _PROBLEM_TYPES:
            raise ConfigError("unknown key", f"problem.{key}")
        problem[key] = _coerce(value, _PROBLEM_TYPES[key], f"problem.{key}")
    if problem["nu"] < 2:
        raise ConfigError("nu must be at least 2", "problem.nu")
    if len(problem["omega"]) != problem["nu"]:
        raise ConfigError(f"expected {problem['nu']} entries", "problem.omega")
    seed = _coerce(raw.get("seed", 0), int, "seed")
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer", "seed")
    cfg = RunConfig(
        problem=problem,
        seed=seed,
        output=_coerce(raw.get("output", "out"), str, "output"),
        simulate=_block(SimulateBlock, raw.get("simulate"), "simulate"),
        asymptotics=_block(AsymptoticsBlock, raw.get("asymptotics"), "asymptotics"),
        combinatorics=_block(CombinatoricsBlock, raw.get("combinatorics"), "combinatorics"),
        bounds=_block(BoundsBlock, raw.get("bounds"), "bounds"),
        warnings=tuple(hypothesis_warnings(problem)),
    )
    cfg.spec()  # validate the problem block now
    return cfg
