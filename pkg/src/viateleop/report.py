"""Grouped statistical report over an experiment's trial records.

For each measure (travel time and ITAE on the precision task, maximum
output velocity and gain on the dynamic task), participants are first
aggregated per setting -- median and the extreme percentile (10th where
lower is better, 90th where higher is better) -- and every pair of
settings (L-H, A-H, A-L, A*-H, A*-L) is then compared across
participants with the signed-rank test and a median-difference effect
size.  Precision measures use only the fixed-distance trials.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .experiment import Task, TrialRecord
from .metrics import DynamicOutcome, PrecisionOutcome
from .stats import (EffectSize, PairedSample, WilcoxonResult,
                    median_difference_ci, percentile_midpoint,
                    wilcoxon_signed_rank)

ALPHA = 0.05

MEASURES = {
    # name: (task, extractor, extreme percentile)
    "travel_time": (Task.PRECISION, lambda o: o.travel_time, 0.10),
    "itae": (Task.PRECISION, lambda o: o.itae, 0.10),
    "max_output_velocity": (Task.DYNAMIC, lambda o: o.max_tool_velocity, 0.90),
    "gain": (Task.DYNAMIC, lambda o: o.gain, 0.90),
}

AGGREGATIONS = ("median", "percentile")

# (label, first setting, second setting); settings are mode letters,
# with * marking the task-switch phase measurements
PAIRS = (
    ("L-H", "L", "H"),
    ("A-H", "A", "H"),
    ("A-L", "A", "L"),
    ("A*-H", "A*", "H"),
    ("A*-L", "A*", "L"),
)


@dataclass(frozen=True)
class ComparisonRow:
    measure: str
    aggregation: str
    pair: str
    n: int
    effect: Optional[EffectSize]
    test: Optional[WilcoxonResult]
    missing: bool = False

    @property
    def significant(self) -> Optional[bool]:
        if self.test is None:
            return None
        return self.test.p_value < ALPHA


@dataclass
class AnalysisReport:
    rows: list

    def row(self, measure: str, aggregation: str, pair: str) -> ComparisonRow:
        for r in self.rows:
            if (r.measure, r.aggregation, r.pair) == (measure, aggregation, pair):
                return r
        raise KeyError((measure, aggregation, pair))

    def to_json(self, path: Path | str | None = None) -> str:
        payload = []
        for r in self.rows:
            payload.append({
                "measure": r.measure,
                "aggregation": r.aggregation,
                "pair": r.pair,
                "n": r.n,
                "missing": r.missing,
                "effect": None if r.effect is None else asdict(r.effect),
                "p_value": None if r.test is None else r.test.p_value,
                "w_statistic": None if r.test is None else r.test.w_statistic,
                "test_method": None if r.test is None else r.test.method,
                "significant_at_0.05": r.significant,
            })
        text = json.dumps({"alpha": ALPHA, "comparisons": payload}, indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    def to_csv(self, path: Path | str) -> None:
        fields = ("measure", "aggregation", "pair", "n", "effect", "ci_low",
                  "ci_high", "p_value", "test_method", "verdict")
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(fields)
            for r in self.rows:
                if r.missing:
                    w.writerow([r.measure, r.aggregation, r.pair, r.n,
                                "", "", "", "", "", "absent"])
                    continue
                verdict = "significant" if r.significant else "n.s."
                w.writerow([
                    r.measure, r.aggregation, r.pair, r.n,
                    repr(r.effect.median_difference), repr(r.effect.ci_low),
                    repr(r.effect.ci_high), repr(r.test.p_value),
                    r.test.method, verdict,
                ])


def _setting_of(record: TrialRecord) -> str:
    return record.mode + ("*" if record.phase == "IV" else "")


def _collect_values(records, measure: str) -> dict:
    """values[setting][participant] -> list of per-trial values."""
    task, extract, _ = MEASURES[measure]
    out: dict = {}
    for r in records:
        if r.failed or r.task != task.value or r.outcome is None:
            continue
        if r.phase not in ("III", "IV"):
            continue
        if task is Task.PRECISION:
            if not r.fixed_step:
                continue  # only the equal-distance trials are comparable
            if not r.outcome.settled:
                continue
            value = extract(r.outcome)
        else:
            value = extract(r.outcome)
        if value is None:
            continue
        out.setdefault(_setting_of(r), {}).setdefault(r.participant_id, []).append(value)
    return out


def _aggregate(per_participant: dict, aggregation: str, extreme_p: float) -> dict:
    agg = {}
    for pid, values in per_participant.items():
        if aggregation == "median":
            agg[pid] = percentile_midpoint(values, 0.5)
        else:
            agg[pid] = percentile_midpoint(values, extreme_p)
    return agg


def analysis_report(records, bootstrap_seed: int = 0) -> AnalysisReport:
    """The full measure x aggregation x pair comparison grid."""
    rows = []
    for measure, (_, _, extreme_p) in MEASURES.items():
        collected = _collect_values(records, measure)
        for aggregation in AGGREGATIONS:
            per_setting = {
                s: _aggregate(v, aggregation, extreme_p)
                for s, v in collected.items()
            }
            for label, first, second in PAIRS:
                a = per_setting.get(first, {})
                b = per_setting.get(second, {})
                shared = sorted(set(a) & set(b))
                if len(shared) < 6:
                    rows.append(ComparisonRow(measure, aggregation, label,
                                              n=len(shared), effect=None,
                                              test=None, missing=True))
                    continue
                sample = PairedSample(
                    np.array([a[p] for p in shared]),
                    np.array([b[p] for p in shared]),
                )
                rows.append(ComparisonRow(
                    measure, aggregation, label, n=len(shared),
                    effect=median_difference_ci(sample, seed=bootstrap_seed),
                    test=wilcoxon_signed_rank(sample),
                ))
    return AnalysisReport(rows)
