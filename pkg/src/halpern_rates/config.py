"""Experiment configs: a TOML file describing schedule, operator, run and outputs.

Example::

    [schedule]
    kind = "inverse_sqrt"          # harmonic | shifted_harmonic | inverse_sqrt | constant | custom

    [operator]
    kind = "rotation"
    dim = 2
    planes = [[0, 1, 90.0]]

    [run]
    anchor = [1.0, 0.0]
    horizon = 100000
    eps = [0.5, 0.25]

Custom schedules give ``lambda = "<expr in n>"`` and moduli under
``[schedule.moduli]`` as expressions in ``eps`` (alpha, beta) or ``n``
(theta). Non-integer modulus values are rounded up, which keeps every
"for all n >= N" statement valid.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Optional

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from . import moduli as mod
from . import operators as ops
from .errors import ConfigError, HalpernRatesError
from .expr import ExprError, compile_expr

__all__ = ["ExperimentConfig", "RunSpec", "load_config", "parse_config", "schedule_from_spec",
           "modulus_from_expr"]

_SECTIONS = {"schedule", "operator", "run", "bounds", "verify", "output"}


@dataclass(frozen=True)
class RunSpec:
    anchor: Optional[tuple] = None
    horizon: int = 10_000
    eps: tuple = (0.5, 0.1)
    seed: int = 0
    memory_cap: int = 0
    chunk_size: int = 1 << 18
    iteration: str = "halpern"
    csv_every: int = 1
    tol: float = 1e-9


@dataclass(frozen=True)
class VerifySpec:
    horizon: int = 1_000_000
    eps: tuple = (0.1, 0.01, 0.001)
    oracle_instances: int = 100
    oracle_horizon: int = 100_000
    nonexpansive_trials: int = 1000


@dataclass(frozen=True)
class ExperimentConfig:
    schedule: Optional[mod.Schedule]
    operator: Optional[ops.NonexpansiveOp]
    run: RunSpec
    verify: VerifySpec
    M: Optional[int] = None
    d_C: Optional[float] = None
    out_dir: str = "out"
    formats: tuple = ("json", "csv")
    raw: dict = field(default_factory=dict, compare=False)

    def digest(self) -> str:
        canon = json.dumps({"config": self.raw, "seed": self.run.seed}, sort_keys=True,
                           separators=(",", ":"), default=str)
        return hashlib.sha256(canon.encode()).hexdigest()


def _table(raw, key, path) -> dict:
    value = raw.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(path, "must be a table")
    return value


def _unknown(table, allowed, path):
    extra = sorted(set(table) - set(allowed))
    if extra:
        raise ConfigError(f"{path}.{extra[0]}" if path else extra[0], "unknown key")


def _int(value, path, minimum=None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        else:
            raise ConfigError(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(path, f"must be >= {minimum}, got {value}")
    return value


def _real(value, path) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(path, "must be finite")
    return float(value)


def modulus_from_expr(source: str, kind: mod.ModulusKind, path: str) -> mod.ModulusFn:
    var = "eps" if kind.takes_eps else "n"
    try:
        fn = compile_expr(source, (var,))
    except ExprError as exc:
        raise ConfigError(path, str(exc)) from None

    def rule(arg):
        value = fn(**{var: arg})
        if isinstance(value, Fraction):
            return -((-value.numerator) // value.denominator)
        if isinstance(value, float):
            if not math.isfinite(value):
                raise ExprError(f"{source!r} is not finite at {var}={arg}")
            return math.ceil(value)
        return int(value)

    return mod.ModulusFn(kind, rule, source, certified=False)


def _lambda_generator(source, path):
    try:
        fn = compile_expr(source, ("n",))
    except ExprError as exc:
        raise ConfigError(path, str(exc)) from None
    return lambda n: float(fn(n=int(n)))


def schedule_from_spec(spec: dict, path: str = "schedule") -> mod.Schedule:
    _unknown(spec, {"kind", "c", "lambda", "decreasing", "moduli", "name"}, path)
    kind = spec.get("kind")
    if kind is None:
        raise ConfigError(f"{path}.kind", "missing")
    moduli = _table(spec, "moduli", f"{path}.moduli")
    _unknown(moduli, {"alpha", "beta", "theta"}, f"{path}.moduli")
    try:
        if kind in mod.BUILTIN_SCHEDULES:
            _unknown(spec, {"kind", "moduli"}, path)
            schedule = mod.BUILTIN_SCHEDULES[kind]()
        elif kind == "constant":
            if "c" not in spec:
                raise ConfigError(f"{path}.c", "constant schedule needs c")
            schedule = mod.constant(_real(spec["c"], f"{path}.c"))
        elif kind == "custom":
            if "lambda" not in spec:
                raise ConfigError(f"{path}.lambda", "custom schedule needs a lambda expression")
            schedule = mod.custom(_lambda_generator(spec["lambda"], f"{path}.lambda"),
                                  decreasing=bool(spec.get("decreasing", False)),
                                  name=str(spec.get("name", f"custom({spec['lambda']})")))
        else:
            raise ConfigError(f"{path}.kind", f"unknown schedule kind {kind!r}")
    except HalpernRatesError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(path, str(exc)) from None
    kinds = {"alpha": mod.ModulusKind.RATE_OF_CONVERGENCE,
             "beta": mod.ModulusKind.CAUCHY_MODULUS,
             "theta": mod.ModulusKind.RATE_OF_DIVERGENCE}
    attached = {name: modulus_from_expr(str(src), kinds[name], f"{path}.moduli.{name}")
                for name, src in moduli.items()}
    return schedule.with_moduli(**attached) if attached else schedule


def _operator(spec: dict, path="operator") -> ops.NonexpansiveOp:
    if "kind" not in spec:
        raise ConfigError(f"{path}.kind", "missing")
    try:
        return ops.from_spec(spec)
    except (HalpernRatesError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(path, f"invalid {spec.get('kind')!r} operator: {exc}") from None


def _eps_list(values, path, strict) -> tuple:
    if not isinstance(values, list) or not values:
        raise ConfigError(path, "must be a non-empty list of numbers")
    out = []
    for i, v in enumerate(values):
        v = _real(v, f"{path}[{i}]")
        if strict and not 0 < v < 2:
            raise ConfigError(f"{path}[{i}]", f"eps must lie in (0, 2), got {v}")
        out.append(v)
    return tuple(out)


def parse_config(raw: dict, strict_eps: bool = True, seed: Optional[int] = None,
                 out_dir: Optional[str] = None) -> ExperimentConfig:
    """Validate a parsed TOML tree. ``strict_eps=False`` lets eps outside (0, 2) through."""
    _unknown(raw, _SECTIONS, "")
    schedule = None
    if "schedule" in raw:
        schedule = schedule_from_spec(_table(raw, "schedule", "schedule"))
    operator = None
    if "operator" in raw:
        operator = _operator(_table(raw, "operator", "operator"))

    run_raw = _table(raw, "run", "run")
    _unknown(run_raw, set(RunSpec.__dataclass_fields__), "run")
    run_kw = {}
    if "anchor" in run_raw:
        anchor = run_raw["anchor"]
        if not isinstance(anchor, list) or not anchor:
            raise ConfigError("run.anchor", "must be a non-empty list of numbers")
        anchor = tuple(_real(v, f"run.anchor[{i}]") for i, v in enumerate(anchor))
        if operator is not None and len(anchor) != operator.dim:
            raise ConfigError("run.anchor", f"has dimension {len(anchor)}, operator acts on R^{operator.dim}")
        run_kw["anchor"] = anchor
    for key, minimum in (("horizon", 1), ("seed", 0), ("memory_cap", 0), ("chunk_size", 1),
                         ("csv_every", 1)):
        if key in run_raw:
            run_kw[key] = _int(run_raw[key], f"run.{key}", minimum)
    if "eps" in run_raw:
        run_kw["eps"] = _eps_list(run_raw["eps"], "run.eps", strict_eps)
    if "iteration" in run_raw:
        if run_raw["iteration"] not in ("halpern", "km"):
            raise ConfigError("run.iteration", "must be 'halpern' or 'km'")
        run_kw["iteration"] = run_raw["iteration"]
    if "tol" in run_raw:
        run_kw["tol"] = _real(run_raw["tol"], "run.tol")
    if seed is not None:
        run_kw["seed"] = int(seed)
    run = RunSpec(**run_kw)

    ver_raw = _table(raw, "verify", "verify")
    _unknown(ver_raw, set(VerifySpec.__dataclass_fields__), "verify")
    ver_kw = {}
    for key in ("horizon", "oracle_instances", "oracle_horizon", "nonexpansive_trials"):
        if key in ver_raw:
            ver_kw[key] = _int(ver_raw[key], f"verify.{key}", 1)
    if "eps" in ver_raw:
        ver_kw["eps"] = _eps_list(ver_raw["eps"], "verify.eps", False)
    verify = VerifySpec(**ver_kw)

    b_raw = _table(raw, "bounds", "bounds")
    _unknown(b_raw, {"M", "d_C"}, "bounds")
    M = _int(b_raw["M"], "bounds.M", 1) if "M" in b_raw else None
    d_C = None
    if "d_C" in b_raw:
        d_C = _real(b_raw["d_C"], "bounds.d_C")
        if d_C < 0:
            raise ConfigError("bounds.d_C", "must be >= 0")

    o_raw = _table(raw, "output", "output")
    _unknown(o_raw, {"dir", "formats"}, "output")
    formats = tuple(o_raw.get("formats", ("json", "csv")))
    bad = sorted(set(formats) - {"json", "csv"})
    if bad:
        raise ConfigError("output.formats", f"unknown format {bad[0]!r}")
    directory = out_dir or str(o_raw.get("dir", "out"))
    return ExperimentConfig(schedule, operator, run, verify, M, d_C, directory, formats, raw)


def load_config(path, **kwargs) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("", f"{path}: {exc}") from None
    return parse_config(raw, **kwargs)
