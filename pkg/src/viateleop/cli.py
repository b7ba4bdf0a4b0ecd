"""Command-line entry point.

Subcommands: trial (one scripted trial), sysid (frequency sweep),
experiment (full synthetic protocol), stats (report over a run
directory), serve (interactive session service).  Every command is a
pure function of (config file, flags, seed); exit codes: 0 success,
1 usage error, 2 runtime error, 3 acceptance-check failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_CHECK_FAILED = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="viateleop", description=__doc__)
    p.add_argument("--config", type=Path, help="YAML configuration file")
    p.add_argument("--seed", type=int, help="master seed override")
    p.add_argument("--out", type=Path,
                   help="output directory (or VIATELEOP_OUT env var)")
    p.add_argument("--print-config", action="store_true",
                   help="print the fully resolved configuration and exit")
    sub = p.add_subparsers(dest="command")

    t = sub.add_parser("trial", parents=[], help="run a single scripted trial")
    t.add_argument("--task", choices=("precision", "dynamic"))
    t.add_argument("--mode", choices=("H", "L", "A"))
    t.add_argument("--operator", choices=("minjerk", "strike", "playback"),
                   default=None)
    t.add_argument("--distance", type=float, help="reach distance [rad]")
    t.add_argument("--duration", type=float, help="reach duration [s]")
    t.add_argument("--strike-freq", type=float, help="strike frequency [Hz]")
    t.add_argument("--peak-vel", type=float, help="peak handle velocity [rad/s]")
    t.add_argument("--target", type=float, default=0.3, help="target position [rad]")
    t.add_argument("--playback-file", type=Path,
                   help="two-column (t, position) CSV to replay")
    t.add_argument("--coupling", choices=("kinematic", "dynamic"))

    s = sub.add_parser("sysid", help="frequency-response sweep")
    s.add_argument("--modes", default="H,L,A",
                   help="comma-separated settings to sweep")
    s.add_argument("--amplitude", type=float)
    s.add_argument("--signal-pair", choices=("impedance", "position"))
    s.add_argument("--check-crossover", action="store_true",
                   help="assert the slow-stiff/fast-soft crossover")

    e = sub.add_parser("experiment", help="full synthetic experiment")
    e.add_argument("--participants", type=int)
    e.add_argument("--no-phase2", action="store_true",
                   help="skip the training phase")
    e.add_argument("--save-traces", choices=("all", "analysis", "none"))
    e.add_argument("--progress", action="store_true")

    st = sub.add_parser("stats", help="statistics report over a run directory")
    st.add_argument("--run", type=Path, required=True,
                    help="experiment run directory (contains records.csv)")

    sv = sub.add_parser("serve", help="interactive session service")
    sv.add_argument("--host")
    sv.add_argument("--port", type=int)
    sv.add_argument("--stream-hz", type=float)
    sv.add_argument("--mode", choices=("H", "L", "A"))
    return p


def _resolve_out(args, cfg) -> Path:
    if args.out is not None:
        return Path(args.out)
    env = os.environ.get("VIATELEOP_OUT")
    if env:
        return Path(env)
    return Path(cfg.output_dir)


def _cmd_trial(args, cfg) -> int:
    import json

    import numpy as np

    from .impedance import Mode
    from .metrics import (dynamic_metrics, outcome_to_json, precision_metrics)
    from .operators import (Coupling, MinJerkReach, OperatorModel, Playback,
                            StrikeProfile, default_backswing)
    from .plant import FREE_AIR, wall_at
    from .teleop import ScenarioSpec, run_trace

    if args.task is None or args.mode is None:
        raise _UsageError("trial requires --task and --mode")
    mode = Mode(args.mode)
    op_cfg = cfg.operator
    coupling = Coupling((args.coupling or op_cfg.coupling))
    pre_hold = cfg.experiment.pre_hold
    target = args.target
    operator_kind = args.operator or (
        "minjerk" if args.task == "precision" else "strike")

    if operator_kind == "playback":
        if args.playback_file is None:
            raise _UsageError("playback operator requires --playback-file")
        motion = Playback.from_csv(args.playback_file)
    elif operator_kind == "minjerk":
        motion = MinJerkReach(
            distance=args.distance if args.distance is not None else target,
            duration=args.duration or op_cfg.reach_duration,
            start=0.0, start_time=pre_hold)
    else:
        prof = StrikeProfile(
            strike_frequency=args.strike_freq or op_cfg.strike_frequency,
            peak_handle_velocity=args.peak_vel or op_cfg.peak_strike_velocity,
            start=target - cfg.experiment.strike_start_offset,
            start_time=pre_hold)
        motion = StrikeProfile(
            backswing=default_backswing(prof),
            strike_frequency=prof.strike_frequency,
            peak_handle_velocity=prof.peak_handle_velocity,
            start=prof.start, start_time=prof.start_time)

    operator = OperatorModel(motion, coupling=coupling, arm=cfg.arm)
    if args.task == "precision":
        env = FREE_AIR
        duration = pre_hold + cfg.experiment.precision_window
    else:
        env = wall_at(target)
        duration = pre_hold + cfg.experiment.dynamic_window
    scenario = ScenarioSpec(duration=duration, operator=operator, mode=mode,
                            env=env, system=cfg.system())
    trace = run_trace(scenario)

    out_dir = _resolve_out(args, cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path = out_dir / "trial_trace.csv"
    trace.to_csv(trace_path)
    if args.task == "precision":
        outcome = precision_metrics(trace, pre_hold, target, cfg.metrics)
        if outcome.settled:
            print(f"travel time: {outcome.travel_time:.3f} s")
        else:
            print("travel time: not settled")
    else:
        outcome = dynamic_metrics(trace, target)
        print(f"max output velocity: {outcome.max_tool_velocity:.2f} rad/s "
              f"(gain {outcome.gain:.2f})")
    outcome_to_json(outcome, out_dir / "trial_outcome.json")
    print(f"trace: {trace_path}")
    return EXIT_OK


def _cmd_sysid(args, cfg) -> int:
    from .impedance import Mode
    from .sysid import (analytic_response, crossover_check, measure_response,
                        peak_frequency, sweep_to_csv)

    sweep_cfg = cfg.sysid.sweep_config()
    if args.amplitude is not None:
        import dataclasses

        sweep_cfg = dataclasses.replace(sweep_cfg, amplitude=args.amplitude)
    if args.signal_pair is not None:
        import dataclasses

        sweep_cfg = dataclasses.replace(sweep_cfg, signal_pair=args.signal_pair)
    modes = [Mode(m.strip()) for m in args.modes.split(",") if m.strip()]
    system = cfg.system()
    measured = {}
    for m in modes:
        measured[m] = measure_response(m, sweep_cfg, system)
        peak = peak_frequency(measured[m])
        print(f"mode {m.value}: peak at {peak:.2f} Hz")
    freqs = measured[modes[0]].freqs
    analytic = {m: analytic_response(m, freqs, sweep_cfg.signal_pair, system)
                for m in modes if m is not Mode.ADAPTIVE}
    out_dir = _resolve_out(args, cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "sysid_sweep.csv"
    sweep_to_csv(csv_path, measured, analytic)
    print(f"sweep: {csv_path}")
    if args.check_crossover:
        needed = {Mode.HIGH, Mode.LOW, Mode.ADAPTIVE}
        if set(modes) < needed:
            raise _UsageError("--check-crossover requires --modes H,L,A")
        report = crossover_check(
            measured[Mode.HIGH], measured[Mode.LOW], measured[Mode.ADAPTIVE],
            tol_low_db=cfg.sysid.crossover_tol_low_db,
            tol_high_db=cfg.sysid.crossover_tol_high_db,
            low_edge_hz=cfg.sysid.crossover_low_edge_hz,
            high_edge_hz=cfg.sysid.crossover_high_edge_hz)
        print(report)
        if not report.passed:
            return EXIT_CHECK_FAILED
    return EXIT_OK


def _cmd_experiment(args, cfg) -> int:
    import dataclasses

    from .experiment import run_experiment

    plan = cfg.experiment
    plan = dataclasses.replace(plan, master_seed=cfg.seed)
    if args.participants is not None:
        plan = dataclasses.replace(plan, participants=args.participants)
    if args.no_phase2:
        plan = dataclasses.replace(plan, include_phase2=False)
    if args.save_traces is not None:
        plan = dataclasses.replace(plan, save_traces=args.save_traces)
    out_dir = _resolve_out(args, cfg)
    result = run_experiment(plan, out_dir, cfg.system(), progress=args.progress)
    print(f"run directory: {result.out_dir}")
    print(f"records: {len(result.records)}")
    print(f"manifest hash: {result.manifest['config_hash'][:16]}")
    return EXIT_OK


def _cmd_stats(args, cfg) -> int:
    from .experiment import read_records
    from .report import analysis_report

    records_path = args.run / "records.csv"
    if not records_path.exists():
        raise FileNotFoundError(f"no records.csv under {args.run}")
    records = read_records(records_path)
    report = analysis_report(records, bootstrap_seed=cfg.seed)
    report.to_csv(args.run / "report.csv")
    report.to_json(args.run / "report.json")
    for row in report.rows:
        if row.missing:
            print(f"{row.measure:22s} {row.aggregation:10s} {row.pair:5s} absent")
            continue
        star = "*" if row.significant else " "
        print(f"{row.measure:22s} {row.aggregation:10s} {row.pair:5s} "
              f"effect {row.effect.median_difference:+.4g} "
              f"[{row.effect.ci_low:+.4g}, {row.effect.ci_high:+.4g}] "
              f"p={row.test.p_value:.4g}{star}")
    print(f"report: {args.run / 'report.csv'}")
    return EXIT_OK


def _cmd_serve(args, cfg) -> int:
    import dataclasses

    from .service import serve

    svc = cfg.service
    updates = {}
    if args.host is not None:
        updates["host"] = args.host
    if args.port is not None:
        updates["port"] = args.port
    if args.stream_hz is not None:
        updates["stream_hz"] = args.stream_hz
    if args.mode is not None:
        updates["default_mode"] = args.mode
    if updates:
        svc = dataclasses.replace(svc, **updates)
    serve(svc, cfg.system(), cfg.metrics)
    return EXIT_OK


_COMMANDS = {
    "trial": _cmd_trial,
    "sysid": _cmd_sysid,
    "experiment": _cmd_experiment,
    "stats": _cmd_stats,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        from .config import ConfigError, dump_config, load_config, override

        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = override(cfg, None, seed=args.seed)
        if args.print_config:
            print(dump_config(cfg), end="")
            return EXIT_OK
        if args.command is None:
            raise _UsageError("a command is required "
                              "(trial, sysid, experiment, stats, serve)")
        return _COMMANDS[args.command](args, cfg)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
