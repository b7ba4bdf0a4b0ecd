"""Synthetic reproduction of the experimental protocol.

24 seeded virtual participants run the six task/setting conditions in
Latin-square block order through two scripted phases (training and
reference measurement, 6 blocks of 20 trials each) plus a task-switch
phase of 10 two-trial blocks under the adaptive setting.  Targets follow
the published constraints: every second trial steps exactly 0.3 rad from
the previous target, the varying targets spread equally over
[-0.1789, 0.5] rad with a single adverse pose at -0.42 rad.

Everything is a pure function of (plan, master seed); records and traces
are written with deterministic formatting so a rerun is byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

from .impedance import Mode
from .metrics import (DynamicOutcome, NoImpactError, PrecisionOutcome,
                      SettlingSpec, dynamic_metrics, precision_metrics)
from .operators import (NOMINAL_PEAK_STRIKE_VELOCITY, NOMINAL_REACH_DURATION,
                        NOMINAL_STRIKE_FREQUENCY, VirtualParticipant,
                        make_virtual_participant)
from .params import SystemParams
from .plant import FREE_AIR, StateCorruptionError, wall_at
from .teleop import ScenarioSpec, Trace, run_trace

POSITION_RANGE = (-0.42, 0.5)
SPREAD_RANGE = (-0.1789, 0.5)
ADVERSE_POSITION = -0.42
FIXED_STEP = 0.3


class Task(Enum):
    PRECISION = "precision"
    DYNAMIC = "dynamic"


@dataclass(frozen=True)
class Condition:
    name: str
    task: Task
    mode: Mode


CONDITIONS = {
    "PR": Condition("PR", Task.PRECISION, Mode.HIGH),
    "PC": Condition("PC", Task.PRECISION, Mode.LOW),
    "PA": Condition("PA", Task.PRECISION, Mode.ADAPTIVE),
    "DR": Condition("DR", Task.DYNAMIC, Mode.LOW),
    "DC": Condition("DC", Task.DYNAMIC, Mode.HIGH),
    "DA": Condition("DA", Task.DYNAMIC, Mode.ADAPTIVE),
}
CONDITION_ORDER = ("PR", "PC", "PA", "DR", "DC", "DA")
N_GROUPS = 6


@dataclass(frozen=True)
class TargetSequence:
    positions: tuple
    step_flags: tuple  # True where the transition into this target is the fixed step

    def __post_init__(self) -> None:
        if len(self.positions) != len(self.step_flags):
            raise ValueError("positions and flags must align")

    def __len__(self) -> int:
        return len(self.positions)


def generate_target_sequence(seed: int, block_length: int = 20) -> TargetSequence:
    """Seeded target sequence satisfying the protocol constraints."""
    if block_length < 2 or block_length % 2:
        raise ValueError("block_length must be even and >= 2")
    n_vary = block_length // 2
    rng = np.random.default_rng(seed)
    if n_vary == 1:
        vary_pool = [ADVERSE_POSITION]
    else:
        vary_pool = list(np.linspace(*SPREAD_RANGE, n_vary - 1)) + [ADVERSE_POSITION]

    for _ in range(1000):
        order = rng.permutation(len(vary_pool))
        positions: list[float] = []
        flags: list[bool] = []
        prev = 0.0
        ok = True
        for idx in order:
            vary = float(vary_pool[idx])
            if math.isclose(vary, prev, abs_tol=1e-9):
                ok = False
                break
            positions.append(vary)
            flags.append(False)
            sign = float(rng.choice((-1.0, 1.0)))
            step = None
            for s in (sign, -sign):
                cand = vary + FIXED_STEP * s
                in_range = POSITION_RANGE[0] <= cand <= POSITION_RANGE[1]
                if in_range and not math.isclose(cand, ADVERSE_POSITION, abs_tol=1e-9):
                    step = cand
                    break
            if step is None:
                ok = False
                break
            positions.append(step)
            flags.append(True)
            prev = step
        if ok:
            return TargetSequence(tuple(positions), tuple(flags))
    raise RuntimeError("could not satisfy the target constraints; "
                       "block length too small for the position grid")


_WILLIAMS_BASE = (0, 1, 5, 2, 4, 3)


def latin_square_order(group_index: int) -> list[str]:
    """Condition order for one group (Williams design over six conditions).

    Row g is the base sequence shifted by g; every condition appears once
    per group and once per block position across the six groups.
    """
    if not 1 <= group_index <= N_GROUPS:
        raise ValueError("group_index must be in 1..6")
    g = group_index - 1
    return [CONDITION_ORDER[(b + g) % N_GROUPS] for b in _WILLIAMS_BASE]


@dataclass(frozen=True)
class ExperimentPlan:
    participants: int = 24
    master_seed: int = 7
    block_length: int = 20
    phase4_blocks: int = 10
    include_phase2: bool = True
    precision_window: float = 6.0   # [s] settling observation per trial
    dynamic_window: float = 1.5     # [s]
    pre_hold: float = 0.2           # [s] hold before the target jump
    strike_start_offset: float = 0.03  # [rad] start below the target
    reach_duration: float = NOMINAL_REACH_DURATION
    strike_frequency: float = NOMINAL_STRIKE_FREQUENCY
    peak_strike_velocity: float = NOMINAL_PEAK_STRIKE_VELOCITY
    jitter: float = 0.2
    save_traces: str = "all"        # all | analysis | none
    trace_policy: str = "trimmed"   # trimmed: stop logging once the outcome is decided
    trace_margin: float = 0.3       # [s] kept beyond the deciding instant
    settling: SettlingSpec = field(default_factory=SettlingSpec)

    def __post_init__(self) -> None:
        if self.participants < 1:
            raise ValueError("need at least one participant")
        if self.save_traces not in ("all", "analysis", "none"):
            raise ValueError("save_traces must be all, analysis or none")
        if self.trace_policy not in ("trimmed", "full"):
            raise ValueError("trace_policy must be trimmed or full")


@dataclass
class TrialRecord:
    participant_id: int
    phase: str            # "II", "III", "IV"
    block: int
    trial: int
    condition: str        # PR..DA, with * suffix in phase IV
    task: str
    mode: str
    target_from: float
    target_to: float
    fixed_step: bool
    outcome: Optional[object]      # PrecisionOutcome | DynamicOutcome
    failed: bool = False
    trace_path: str = ""

    def key(self) -> tuple:
        return (self.participant_id, self.phase, self.block, self.trial)


RECORD_FIELDS = (
    "participant_id", "phase", "block", "trial", "condition", "task", "mode",
    "target_from", "target_to", "fixed_step", "failed",
    "settled", "moved", "dead_time", "travel_time", "itae",
    "max_tool_velocity", "max_handle_velocity", "gain", "impact_time",
    "trace_path",
)


def record_to_row(r: TrialRecord) -> dict:
    row = {
        "participant_id": r.participant_id,
        "phase": r.phase,
        "block": r.block,
        "trial": r.trial,
        "condition": r.condition,
        "task": r.task,
        "mode": r.mode,
        "target_from": repr(r.target_from),
        "target_to": repr(r.target_to),
        "fixed_step": int(r.fixed_step),
        "failed": int(r.failed),
        "settled": "", "moved": "", "dead_time": "", "travel_time": "",
        "itae": "", "max_tool_velocity": "", "max_handle_velocity": "",
        "gain": "", "impact_time": "",
        "trace_path": r.trace_path,
    }
    o = r.outcome
    if isinstance(o, PrecisionOutcome):
        row["settled"] = int(o.settled)
        row["moved"] = int(o.moved)
        for k, v in (("dead_time", o.dead_time), ("travel_time", o.travel_time),
                     ("itae", o.itae)):
            row[k] = "" if v is None else repr(v)
    elif isinstance(o, DynamicOutcome):
        row["max_tool_velocity"] = repr(o.max_tool_velocity)
        row["max_handle_velocity"] = repr(o.max_handle_velocity)
        row["gain"] = repr(o.gain)
        row["impact_time"] = repr(o.impact_time)
    return row


def row_to_record(row: dict) -> TrialRecord:
    task = row["task"]
    outcome: Optional[object] = None
    if not int(row["failed"]):
        if task == Task.PRECISION.value:
            opt = lambda s: None if row[s] == "" else float(row[s])
            outcome = PrecisionOutcome(
                settled=bool(int(row["settled"])), moved=bool(int(row["moved"])),
                dead_time=opt("dead_time"), travel_time=opt("travel_time"),
                itae=opt("itae"),
            )
        else:
            outcome = DynamicOutcome(
                max_tool_velocity=float(row["max_tool_velocity"]),
                max_handle_velocity=float(row["max_handle_velocity"]),
                gain=float(row["gain"]),
                impact_time=float(row["impact_time"]),
            )
    return TrialRecord(
        participant_id=int(row["participant_id"]), phase=row["phase"],
        block=int(row["block"]), trial=int(row["trial"]),
        condition=row["condition"], task=task, mode=row["mode"],
        target_from=float(row["target_from"]), target_to=float(row["target_to"]),
        fixed_step=bool(int(row["fixed_step"])), outcome=outcome,
        failed=bool(int(row["failed"])), trace_path=row["trace_path"],
    )


def write_records(path: Path, records: list[TrialRecord]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=RECORD_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in records:
            w.writerow(record_to_row(r))


def read_records(path: Path | str) -> list[TrialRecord]:
    with open(path, newline="") as f:
        return [row_to_record(row) for row in csv.DictReader(f)]


def participant_group(participant_id: int) -> int:
    return (participant_id - 1) % N_GROUPS + 1


class _TrialRunner:
    """Executes single trials for one (plan, system) pair."""

    def __init__(self, plan: ExperimentPlan, system: SystemParams):
        self.plan = plan
        self.system = system

    def scenario(self, vp: VirtualParticipant, cond: Condition,
                 start: float, target: float) -> ScenarioSpec:
        plan = self.plan
        if cond.task is Task.PRECISION:
            op = vp.reach(start=start, distance=target - start,
                          start_time=plan.pre_hold)
            return ScenarioSpec(
                duration=plan.pre_hold + plan.precision_window,
                operator=op, mode=cond.mode, env=FREE_AIR, system=self.system,
            )
        op = vp.strike(start=target - plan.strike_start_offset,
                       start_time=plan.pre_hold)
        return ScenarioSpec(
            duration=plan.pre_hold + plan.dynamic_window,
            operator=op, mode=cond.mode, env=wall_at(target), system=self.system,
        )

    def run(self, vp: VirtualParticipant, cond: Condition,
            start: float, target: float):
        trace = run_trace(self.scenario(vp, cond, start, target))
        if cond.task is Task.PRECISION:
            outcome = precision_metrics(trace, self.plan.pre_hold, target,
                                        self.plan.settling)
        else:
            outcome = dynamic_metrics(trace, target)
        return trace, outcome


def derive_seeds(plan: ExperimentPlan) -> dict:
    """Fixed seed tree: cohort, phase II/III sequences, phase IV per group."""
    root = np.random.SeedSequence(plan.master_seed)
    s_cohort, s_seq2, s_seq3, s_p4 = root.spawn(4)
    return {
        "cohort": [int(v) for v in s_cohort.generate_state(plan.participants)],
        "seq2": int(s_seq2.generate_state(1)[0]),
        "seq3": int(s_seq3.generate_state(1)[0]),
        "phase4": [int(v) for v in s_p4.generate_state(N_GROUPS)],
    }


def phase4_schedule(plan: ExperimentPlan, group_seed: int) -> list[tuple[str, float, float]]:
    """Per-group task-switch schedule: (condition, target1, target2) per block."""
    rng = np.random.default_rng(group_seed)
    half = plan.phase4_blocks // 2
    conds = ["PA"] * half + ["DA"] * (plan.phase4_blocks - half)
    conds = [conds[i] for i in rng.permutation(len(conds))]
    grid = np.linspace(*SPREAD_RANGE, 9)
    blocks = []
    for cname in conds:
        for _ in range(100):
            t1 = float(rng.choice(grid))
            if abs(t1) > 1e-9:
                break
        sign = float(rng.choice((-1.0, 1.0)))
        t2 = t1 + FIXED_STEP * sign
        if not POSITION_RANGE[0] <= t2 <= POSITION_RANGE[1]:
            t2 = t1 - FIXED_STEP * sign
        blocks.append((cname, t1, t2))
    return blocks


def config_hash(plan: ExperimentPlan, system: SystemParams) -> str:
    blob = json.dumps({"plan": asdict(plan), "system": asdict(system)},
                      sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class ExperimentResult:
    records: list
    out_dir: Path
    manifest: dict


def run_experiment(
    plan: ExperimentPlan,
    out_dir: Path | str,
    system: SystemParams | None = None,
    progress: bool = False,
) -> ExperimentResult:
    """Execute the full protocol and write records, traces and manifest."""
    from . import __version__

    system = system or SystemParams()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace_dir = out / "traces"
    seeds = derive_seeds(plan)
    seq2 = generate_target_sequence(seeds["seq2"], plan.block_length)
    seq3 = generate_target_sequence(seeds["seq3"], plan.block_length)
    runner = _TrialRunner(plan, system)
    records: list[TrialRecord] = []

    def save_trace(trace: Trace, rec: TrialRecord, analysis_phase: bool) -> str:
        if plan.save_traces == "none":
            return ""
        if plan.save_traces == "analysis" and not analysis_phase:
            return ""
        rel = Path(f"p{rec.participant_id:02d}") / (
            f"{rec.phase}_b{rec.block}_t{rec.trial:02d}_{rec.condition.rstrip('*')}.csv.gz")
        path = trace_dir / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        _trim_trace(trace, rec, plan).to_csv(path)
        return str(Path("traces") / rel)

    for pid in range(1, plan.participants + 1):
        vp = make_virtual_participant(
            seeds["cohort"][pid - 1],
            reach_duration=plan.reach_duration,
            strike_frequency=plan.strike_frequency,
            peak_strike_velocity=plan.peak_strike_velocity,
            jitter=plan.jitter,
        )
        group = participant_group(pid)
        order = latin_square_order(group)
        phases = ([("II", seq2)] if plan.include_phase2 else []) + [("III", seq3)]
        for phase, seq in phases:
            for block_idx, cname in enumerate(order, start=1):
                cond = CONDITIONS[cname]
                prev = 0.0
                for trial_idx, (target, is_step) in enumerate(
                        zip(seq.positions, seq.step_flags), start=1):
                    rec, trace = _run_one(runner, vp, cond, cname, pid, phase,
                                          block_idx, trial_idx, prev, target,
                                          is_step)
                    if trace is not None:
                        rec.trace_path = save_trace(trace, rec, phase == "III")
                    records.append(rec)
                    prev = target
        # phase IV: task switch under the adaptive setting
        for block_idx, (cname, t1, t2) in enumerate(
                phase4_schedule(plan, seeds["phase4"][group - 1]), start=1):
            cond = CONDITIONS[cname]
            prev = 0.0
            for trial_idx, target in enumerate((t1, t2), start=1):
                rec, trace = _run_one(runner, vp, cond, cname + "*", pid, "IV",
                                      block_idx, trial_idx, prev, target,
                                      trial_idx == 2)
                if trace is not None:
                    rec.trace_path = save_trace(trace, rec, True)
                records.append(rec)
                prev = target
        if progress:
            print(f"participant {pid}/{plan.participants} done")

    write_records(out / "records.csv", records)
    manifest = {
        "master_seed": plan.master_seed,
        "config_hash": config_hash(plan, system),
        "version": __version__,
        "participants": plan.participants,
        "records": len(records),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return ExperimentResult(records=records, out_dir=out, manifest=manifest)


def _trim_trace(trace: Trace, rec: TrialRecord, plan: ExperimentPlan) -> Trace:
    """Drop frames after the trial outcome is decided (plus a margin).

    A precision trial is decided once the tool has stayed settled for the
    full hold window; a dynamic trial is decided at impact.  Re-processing
    a trimmed trace yields the stored outcome unchanged.
    """
    if plan.trace_policy == "full" or rec.failed or rec.outcome is None:
        return trace
    o = rec.outcome
    if isinstance(o, PrecisionOutcome):
        if not (o.settled and o.dead_time is not None and o.travel_time is not None):
            return trace
        decided = (plan.pre_hold + o.dead_time + o.travel_time
                   + plan.settling.settle_hold)
    else:
        decided = o.impact_time
    tick_dt = trace.t[1] - trace.t[0]
    keep = int(round((decided + plan.trace_margin) / tick_dt)) + 1
    return trace.head(keep)


def _run_one(runner, vp, cond, cname, pid, phase, block, trial,
             prev, target, is_step):
    rec = TrialRecord(
        participant_id=pid, phase=phase, block=block, trial=trial,
        condition=cname, task=cond.task.value, mode=cond.mode.value,
        target_from=prev, target_to=target, fixed_step=bool(is_step),
        outcome=None,
    )
    trace = None
    try:
        trace, rec.outcome = runner.run(vp, cond, prev, target)
    except (NoImpactError, StateCorruptionError):
        rec.failed = True
    return rec, trace
