"""Command-line front end: ``certify``, ``simulate``, ``compare``, ``verify``.

Exit codes: 0 all checks pass (SOUND or UNTESTABLE verdicts included),
1 config validation error, 2 a VIOLATION or failed check.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, bounds, moduli, operators, oracle
from .config import ExperimentConfig, load_config, parse_config
from .errors import ConfigError, DomainError, HalpernRatesError, MissingModulusError, NumericBlowupError
from .exact import ceil_fraction, to_fraction
from .iteration import (InequalityChecker, ResidualTracker, check_halpern_inequalities, estimate_M,
                        halpern_run, iterate_stream, write_csv)

EXIT_OK, EXIT_CONFIG, EXIT_FAIL = 0, 1, 2


def _clean(obj):
    """Make a report JSON-safe: NaN/inf become null, numpy scalars become Python ones."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _report(cfg: ExperimentConfig, command: str, results: list, **extra) -> dict:
    out = {"tool_version": __version__, "command": command, "config_digest": cfg.digest()}
    out.update(extra)
    out["results"] = results
    return _clean(out)


def _emit(cfg: ExperimentConfig, name: str, payload: dict) -> Path:
    path = Path(cfg.out_dir) / f"{name}.json"
    _write_atomic(path, json.dumps(payload, indent=2) + "\n")
    return path


def _require(cfg: ExperimentConfig, *parts: str) -> None:
    for part in parts:
        if getattr(cfg, part) is None:
            raise ConfigError(part, "section is required for this command")
    if "operator" in parts and cfg.run.anchor is None:
        raise ConfigError("run.anchor", "required for this command")


def _bound(b) -> dict:
    return b.to_dict()


def _certified_M(cfg: ExperimentConfig) -> tuple[Optional[int], str]:
    """M from the config, or from a certified invariant ball around the anchor."""
    if cfg.M is not None:
        return cfg.M, "config"
    if cfg.d_C is not None:
        return bounds.bound_M(cfg.d_C), "d_C"
    if cfg.operator is not None and cfg.run.anchor is not None:
        R = cfg.operator.invariant_radius(cfg.run.anchor)
        if R is not None:
            return max(1, ceil_fraction(3 * to_fraction(R))), "invariant_ball"
    return None, "none"


def _moduli_or_config_error(schedule):
    try:
        return moduli.moduli_of(schedule)
    except MissingModulusError as exc:
        msg = str(exc)
        which = "theta" if "(theta)" in msg else "beta" if "(beta)" in msg else "alpha"
        raise ConfigError(f"schedule.moduli.{which}", msg) from None


# --------------------------------------------------------------------------
# certify
# --------------------------------------------------------------------------

def cmd_certify(cfg: ExperimentConfig) -> tuple[dict, int]:
    _require(cfg, "schedule")
    schedule = cfg.schedule
    alpha, beta, theta = _moduli_or_config_error(schedule)
    M, m_source = _certified_M(cfg)
    if M is None:
        raise ConfigError("bounds", "give bounds.M or bounds.d_C, or an operator with a bounded invariant ball")
    d_C = cfg.d_C
    results = []
    for eps in cfg.run.eps:
        entry = {"eps": eps, "M": M, "M_source": m_source}
        try:
            entry["phi_general"] = _bound(bounds.phi_general(alpha, beta, theta, M, eps))
            if schedule.decreasing:
                entry["psi_decreasing"] = _bound(bounds.psi_decreasing(alpha, theta, M, eps, schedule))
            if d_C is not None:
                entry["phi_bounded"] = _bound(bounds.phi_bounded(alpha, beta, theta, d_C, eps))
                if schedule.kind is moduli.ScheduleKind.HARMONIC:
                    entry["phi_harmonic"] = _bound(bounds.phi_harmonic(d_C, eps))
            entry["h_step_gap"] = _bound(bounds.h_liu(bounds.gap_modulus(beta, M), theta, 2 * M, eps))
        except HalpernRatesError as exc:
            entry = {"eps": eps, "error": str(exc)}
        results.append(entry)
    payload = _report(cfg, "certify", results, schedule=schedule.name)
    _emit(cfg, "certify", payload)
    return payload, EXIT_OK


# --------------------------------------------------------------------------
# simulate / compare
# --------------------------------------------------------------------------

def _stream_run(cfg: ExperimentConfig, csv_path: Optional[Path]):
    run = cfg.run
    tracker = ResidualTracker(run.eps)
    consumers = [tracker]
    M_cert, _ = _certified_M(cfg)
    checker = None
    if run.iteration == "halpern" and M_cert is not None:
        checker = InequalityChecker(M_cert, run.tol)
        consumers.append(checker)
    stream = iterate_stream(cfg.operator, run.anchor, cfg.schedule, run.horizon, run.iteration,
                            run.chunk_size, run.memory_cap)
    if csv_path is not None:
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=csv_path.parent, prefix=f".{csv_path.name}.")
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                write_csv(stream, fh, run.csv_every, consumers)
            os.replace(tmp, csv_path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    else:
        for chunk in stream:
            for c in consumers:
                c.feed_chunk(chunk)
    if run.iteration == "halpern" and M_cert is None:
        # no a-priori M: replay with the observed one on a second pass
        checker = InequalityChecker(tracker.empirical_M(), run.tol)
        for chunk in iterate_stream(cfg.operator, run.anchor, cfg.schedule, run.horizon,
                                    run.iteration, run.chunk_size, 0):
            checker.feed_chunk(chunk)
    return tracker, checker


def _m_for_run(cfg, tracker) -> tuple[int, str]:
    M, source = _certified_M(cfg)
    if M is None:
        return tracker.empirical_M(), "empirical"
    return M, source


def cmd_simulate(cfg: ExperimentConfig) -> tuple[dict, int]:
    _require(cfg, "schedule", "operator")
    csv_path = Path(cfg.out_dir) / "trajectory.csv" if "csv" in cfg.formats else None
    try:
        tracker, checker = _stream_run(cfg, csv_path)
    except NumericBlowupError as exc:
        payload = _report(cfg, "simulate", [{"status": "failed", "error": str(exc)}])
        _emit(cfg, "simulate", payload)
        return payload, EXIT_FAIL
    M, m_source = _m_for_run(cfg, tracker)
    results = [{"eps": e, "first_crossing": tracker.first_below[i]} for i, e in enumerate(cfg.run.eps)]
    extra = {
        "status": "ok",
        "iteration": cfg.run.iteration,
        "schedule": cfg.schedule.name,
        "operator": cfg.operator.label,
        "horizon": cfg.run.horizon,
        "M": M,
        "M_source": m_source,
        "max_residual": tracker.max_residual,
        "final_residual": tracker.final_residual,
    }
    code = EXIT_OK
    if checker is not None:
        rep = checker.report()
        extra["inequality_check"] = rep.to_dict()
        if not rep.passed:
            code = EXIT_FAIL
    if csv_path is not None:
        extra["csv"] = csv_path.name
    payload = _report(cfg, "simulate", results, **extra)
    _emit(cfg, "simulate", payload)
    return payload, code


def cmd_compare(cfg: ExperimentConfig) -> tuple[dict, int]:
    _require(cfg, "schedule", "operator")
    _moduli_or_config_error(cfg.schedule)
    if cfg.run.iteration != "halpern":
        raise ConfigError("run.iteration", "compare certifies Halpern runs only")
    try:
        tracker, checker = _stream_run(cfg, None)
    except NumericBlowupError as exc:
        payload = _report(cfg, "compare", [{"status": "failed", "error": str(exc)}])
        _emit(cfg, "compare", payload)
        return payload, EXIT_FAIL
    M, m_source = _m_for_run(cfg, tracker)
    N = cfg.run.horizon
    results = []
    code = EXIT_OK
    for i, eps in enumerate(cfg.run.eps):
        bound = bounds.certify_schedule(cfg.schedule, M, eps)
        crossing = tracker.first_below[i]
        entry = {"eps": eps, "bound": bound.to_dict(), "first_crossing": crossing,
                 "last_residual_at_or_above_eps": tracker.last_at_or_above[i]}
        if bound > N:
            verdict = "UNTESTABLE"
        elif tracker.below_from(i, int(bound)) and crossing is not None and crossing <= bound:
            verdict = "SOUND"
        else:
            verdict = "VIOLATION"
            code = EXIT_FAIL
        entry["verdict"] = verdict
        results.append(entry)
    ineq = checker.report()
    if not ineq.passed:
        code = EXIT_FAIL
    payload = _report(cfg, "compare", results, schedule=cfg.schedule.name,
                      operator=cfg.operator.label, horizon=N, M=M, M_source=m_source,
                      inequality_check=ineq.to_dict())
    _emit(cfg, "compare", payload)
    return payload, code


# --------------------------------------------------------------------------
# verify
# --------------------------------------------------------------------------

def default_operators() -> list:
    """Built-in operators every verify run checks."""
    return [
        operators.identity(3),
        operators.ball_projection([0.0, 0.0], 1.0),
        operators.ball_projection([0.5, -0.25, 0.0], 0.75),
        operators.box_projection([-1.0, -0.5], [0.5, 1.0]),
        operators.halfspace_projection([1.0, 2.0], 0.5),
        operators.rotation(2, [(0, 1, 90.0)]),
        operators.rotation(3, [(0, 1, 30.0), (1, 2, 45.0)]),
        operators.rotation(2, [(0, 1, 90.0)], norm="max"),
        operators.composition([operators.rotation(2, [(0, 1, 60.0)]),
                               operators.box_projection([-1.0, -1.0], [1.0, 1.0])]),
    ]


def cmd_verify(cfg: ExperimentConfig) -> tuple[dict, int]:
    ver = cfg.verify
    seed = cfg.run.seed
    results = []

    def add(kind, rep):
        results.append({"kind": kind, **rep.to_dict()})

    schedules = [moduli.harmonic(), moduli.shifted_harmonic(), moduli.inverse_sqrt(), moduli.constant(0.5)]
    if cfg.schedule is not None:
        schedules.append(cfg.schedule)
    for s in schedules:
        add("moduli", moduli.verify_moduli(s, ver.horizon, ver.eps))

    ops_to_check = default_operators()
    if cfg.operator is not None:
        ops_to_check.append(cfg.operator)
    for op in ops_to_check:
        add("nonexpansive", operators.check_nonexpansive(op, ver.nonexpansive_trials, seed, 1e-12))

    add("oracle", oracle.oracle_sweep(ver.oracle_instances, seed, horizon=ver.oracle_horizon))

    if cfg.operator is not None and cfg.schedule is not None and cfg.run.anchor is not None:
        horizon = min(cfg.run.horizon, 100_000)
        traj = halpern_run(cfg.operator, cfg.run.anchor, cfg.schedule, horizon)
        add("halpern_inequalities", check_halpern_inequalities(traj, cfg.schedule, estimate_M(traj), cfg.run.tol))

    passed = all(r["passed"] for r in results)
    payload = _report(cfg, "verify", results, passed=passed)
    _emit(cfg, "verify", payload)
    return payload, EXIT_OK if passed else EXIT_FAIL


COMMANDS = {"certify": cmd_certify, "simulate": cmd_simulate, "compare": cmd_compare, "verify": cmd_verify}


def _summary(command, payload) -> str:
    lines = [f"{command}: config {payload['config_digest'][:12]}"]
    for r in payload["results"]:
        if command == "certify":
            if "error" in r:
                lines.append(f"  eps={r['eps']}: error: {r['error']}")
            else:
                key = "psi_decreasing" if "psi_decreasing" in r else "phi_general"
                lines.append(f"  eps={r['eps']}: {key} ~ 10^{r[key]['log10']:.3f}")
        elif command == "compare":
            if "verdict" in r:
                lines.append(f"  eps={r['eps']}: {r['verdict']} (bound ~ 10^{r['bound']['log10']:.3f}, "
                             f"first crossing {r['first_crossing']})")
            else:
                lines.append(f"  {r}")
        elif command == "simulate":
            lines.append(f"  {r}")
        else:
            lines.append(f"  {r['kind']:<22} {r['subject']:<48} {'PASS' if r['passed'] else 'FAIL'}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="halpern-rates",
        description="Certified rates of asymptotic regularity for Halpern iterations.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=name != "verify", help="TOML experiment file")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=int, help="seed (overrides run.seed)")
        p.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    strict = args.command != "certify"
    try:
        if args.config:
            cfg = load_config(args.config, strict_eps=strict, seed=args.seed, out_dir=args.out)
        else:
            cfg = parse_config({}, strict_eps=strict, seed=args.seed, out_dir=args.out)
        payload, code = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not args.quiet:
        print(_summary(args.command, payload))
    return code


if __name__ == "__main__":
    sys.exit(main())
