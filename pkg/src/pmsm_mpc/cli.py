"""Command-line entry point: run named or file-defined scenarios.

Examples
--------
::

    pmsm-mpc run --scenario torque_step_0rpm --out results/
    pmsm-mpc run --scenario speed_steps --compare-baseline
    pmsm-mpc run --scenario torque_step_2000rpm --set T=1e-3 --set w_l=0.1
    pmsm-mpc list
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .controller import ControllerConfig, controller_bounds
from .harness import (
    BASELINE,
    MPC,
    SCENARIOS,
    ScenarioConfig,
    SimulationAborted,
    bound_samples,
    closed_loop_cost,
    compute_metrics,
    default_windows,
    loss_reduction_pct,
    run_closed_loop,
    scenario,
)
from .machine_model import MachineParams, coerce_fields, default_params_path, parse_kv_file

SCENARIO_KEYS = ("mode", "schedule", "duration", "held_speed_rpm", "seed", "controller", "name")


class ConfigError(ValueError):
    """Invalid command-line configuration."""


@dataclass
class RunConfig:
    params: Path = field(default_factory=default_params_path)
    scenario: str = "torque_step_0rpm"
    out: Path = Path(".")
    overrides: list[str] = field(default_factory=list)
    emit_trace: bool = True
    emit_summary: bool = True
    compare_baseline: bool = False
    bound_limit: int | None = 200


def parse_schedule(text: str) -> tuple[tuple[float, float], ...]:
    """``"0:0, 0.005:8.4"`` -> ``((0.0, 0.0), (0.005, 8.4))``."""
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        t, sep, v = item.partition(":")
        if not sep:
            raise ValueError(f"schedule entry {item!r} is not 'time:value'")
        out.append((float(t), float(v)))
    return tuple(out)


def scenario_from_values(values: dict[str, str], base: ScenarioConfig | None = None) -> ScenarioConfig:
    unknown = sorted(k for k in values if k.lower() not in SCENARIO_KEYS)
    if unknown:
        raise KeyError(f"unknown key(s) for ScenarioConfig: {', '.join(unknown)}")
    kw: dict = {}
    for key, raw in values.items():
        key = key.lower()
        if key == "schedule":
            kw[key] = parse_schedule(raw)
        elif key in ("duration", "held_speed_rpm"):
            kw[key] = float(raw)
        elif key == "seed":
            kw[key] = int(raw)
        else:
            kw[key] = raw.strip()
    return replace(base, **kw) if base is not None else ScenarioConfig(**kw)


def load_scenario(name_or_path: str) -> ScenarioConfig:
    """A built-in scenario name, or a ``key = value`` scenario file."""
    if name_or_path in SCENARIOS:
        return scenario(name_or_path)
    path = Path(name_or_path)
    if not path.is_file():
        raise ConfigError(f"unknown scenario {name_or_path!r}; known: {', '.join(sorted(SCENARIOS))}")
    sc = scenario_from_values(parse_kv_file(path))
    return sc if sc.name else replace(sc, name=path.stem)


def split_overrides(items: list[str]) -> tuple[dict, dict, dict]:
    """Route ``key=value`` overrides to machine, controller and scenario fields."""
    machine = {f.name.lower() for f in fields(MachineParams)}
    control = {f.name.lower() for f in fields(ControllerConfig)}
    out: tuple[dict, dict, dict] = ({}, {}, {})
    for item in items:
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not key=value")
        low = key.lower()
        if low in machine:
            out[0][key] = value
        elif low in control:
            out[1][key] = value
        elif low in SCENARIO_KEYS:
            out[2][key] = value
        else:
            raise ConfigError(f"unknown override key {key!r}")
    return out


def build_configs(rc: RunConfig) -> tuple[MachineParams, ControllerConfig, ScenarioConfig]:
    if not Path(rc.params).is_file():
        raise ConfigError(f"parameter file not found: {rc.params}")
    m_over, c_over, s_over = split_overrides(rc.overrides)
    p = MachineParams.from_file(rc.params)
    if m_over:
        p = p.with_overrides(**coerce_fields(MachineParams, m_over))
    cfg = ControllerConfig(**coerce_fields(ControllerConfig, c_over)) if c_over else ControllerConfig()
    sc = load_scenario(rc.scenario)
    if s_over:
        sc = scenario_from_values(s_over, sc)
    return p, cfg, sc


def _fmt(value) -> str:
    if isinstance(value, float):
        return "inf" if math.isinf(value) else ("nan" if math.isnan(value) else repr(value))
    return str(value)


def summarize(tr, sc: ScenarioConfig, cfg: ControllerConfig, p: MachineParams) -> dict:
    cb, vb = controller_bounds(cfg, p)
    win = default_windows(sc, cfg.dt)
    m = compute_metrics(tr, win, cb, vb)
    out = {
        "scenario": sc.name or "custom",
        "controller": sc.controller,
        "samples": len(tr),
        "dt_s": cfg.dt,
        "settle_time_s": m.settle_time,
        "overshoot_pct": m.overshoot_pct,
        "id_deviation_A": m.id_deviation,
        "mean_loss_W": m.mean_loss,
        "max_lp_iters": m.max_lp_iters,
        "violations": m.violations,
        "closed_loop_cost": closed_loop_cost(tr, cfg.W_L),
        "lp_samples": int(np.count_nonzero(np.asarray(tr.status) == "lp")),
        "faults": int(np.count_nonzero(tr.fault)),
    }
    solve = tr.solve_seconds
    out["mean_solve_us"] = float(np.mean(solve) * 1e6) if solve.size else 0.0
    out["max_solve_us"] = float(np.max(solve) * 1e6) if solve.size else 0.0
    return out


def bound_summary(samples, n_free: int) -> dict:
    ratios = np.array([s.ratio() for s in samples]) if samples else np.zeros(0)
    violations = sum(s.J_lin > s.J0 + n_free * s.J_C + 1e-9 * max(1.0, abs(s.J_qp)) for s in samples)
    return {
        "bound_samples": len(samples),
        "bound_coefficient": n_free,
        "bound_max_ratio": float(ratios.max()) if ratios.size else 0.0,
        "bound_mean_ratio": float(ratios.mean()) if ratios.size else 0.0,
        "bound_violations": int(violations),
    }


def write_bound_csv(path: Path, samples) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("time_s", "J0", "J_lin", "J_qp"))
        for s in samples:
            w.writerow((repr(s.time), repr(s.J0), repr(s.J_lin), repr(s.J_qp)))


def write_summary(path: Path, summary: dict) -> None:
    path.write_text("".join(f"{k} = {_fmt(v)}\n" for k, v in summary.items()))


def run(rc: RunConfig, stdout=None) -> int:
    stdout = stdout or sys.stdout
    p, cfg, sc = build_configs(rc)
    out_dir = Path(rc.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = sc.name or "custom"

    controllers = [sc.controller]
    if rc.compare_baseline:
        controllers = [MPC, BASELINE]
    summary: dict = {}
    losses = {}
    for ctl in controllers:
        run_sc = replace(sc, controller=ctl)
        tr = run_closed_loop(run_sc, cfg, p)
        tag = stem if not rc.compare_baseline else f"{stem}_{ctl}"
        if rc.emit_trace:
            with open(out_dir / f"{tag}.csv", "w", newline="") as fh:
                tr.to_csv(fh)
        part = summarize(tr, run_sc, cfg, p)
        if ctl == MPC:
            samples = bound_samples(tr, cfg, p, rc.bound_limit)
            part.update(bound_summary(samples, 2 * cfg.degree))
            if rc.emit_trace:
                write_bound_csv(out_dir / f"{tag}_bound.csv", samples)
        losses[ctl] = part["mean_loss_W"]
        prefix = "" if not rc.compare_baseline else f"{ctl}."
        summary.update({prefix + k: v for k, v in part.items()})
    if rc.compare_baseline:
        summary["loss_reduction_pct"] = loss_reduction_pct(losses[MPC], losses[BASELINE])

    if rc.emit_summary:
        write_summary(out_dir / f"{stem}_summary.txt", summary)
    for k, v in summary.items():
        print(f"{k} = {_fmt(v)}", file=stdout)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pmsm-mpc", description="Predictive PMSM torque control scenarios.")
    sub = parser.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scenario")
    r.add_argument("--scenario", default="torque_step_0rpm", help="built-in name or key=value scenario file")
    r.add_argument("--params", type=Path, default=default_params_path(), help="machine parameter file")
    r.add_argument("--out", type=Path, default=Path("."), help="output directory")
    r.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a machine, controller or scenario field (repeatable)")
    r.add_argument("--compare-baseline", action="store_true", help="also run the i_d = 0 FOC baseline")
    r.add_argument("--no-trace", dest="emit_trace", action="store_false", help="skip CSV output")
    r.add_argument("--no-summary", dest="emit_summary", action="store_false", help="skip the summary file")
    r.add_argument("--bound-samples", type=int, default=200,
                   help="LP samples checked against the exact optimum (0: none, -1: all)")

    sub.add_parser("list", help="list built-in scenarios")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        for name, sc in sorted(SCENARIOS.items()):
            sched = ", ".join(f"{t:g}:{v:g}" for t, v in sc.schedule)
            print(f"{name}: {sc.mode}, schedule {sched}, duration {sc.duration:g} s, held {sc.held_speed_rpm:g} rpm")
        return 0
    limit = None if args.bound_samples < 0 else args.bound_samples
    rc = RunConfig(args.params, args.scenario, args.out, args.overrides, args.emit_trace,
                   args.emit_summary, args.compare_baseline, limit)
    try:
        return run(rc)
    except (ConfigError, KeyError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 2
    except SimulationAborted as exc:
        print(f"error: simulation aborted: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
