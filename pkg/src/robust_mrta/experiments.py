"""Baseline-versus-robust comparisons and their pass/fail verdicts."""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .gp import GpDataset
from .simulator import (Reallocation, RunLog, Scenario, collect_training_data,
                        detect_reallocation, fit_disturbances, run)

# thresholds of the two experiment checks
ROBUST_ENERGY_RATIO = 0.05
BASELINE_ENERGY_RATIO = 0.50
ROBUST_MIN_SPECIALIZATION = 0.8
BASELINE_MAX_SPECIALIZATION = 0.2
EQUIVALENCE_GAP = 0.02


@dataclass
class Verdict:
    passed: bool
    kind: str
    details: dict

    def line(self) -> str:
        body = ", ".join(f"{k}={_fmt(v)}" for k, v in self.details.items())
        return f"verdict: {'PASS' if self.passed else 'FAIL'} [{self.kind}] {body}"


def _fmt(v):
    return f"{v:.4g}" if isinstance(v, float) else str(v)


def run_both(scenario: Scenario, datasets: Optional[Sequence[GpDataset]] = None,
             steps: Optional[int] = None) -> dict[str, RunLog]:
    """Run baseline and robust modes concurrently; datasets are collected if missing."""
    if datasets is None:
        datasets = collect_training_data(scenario)
    fitted = fit_disturbances(scenario, datasets)
    with ThreadPoolExecutor(max_workers=2) as pool:
        fut = {
            "nominal": pool.submit(run, scenario, "nominal", None, steps=steps),
            "robust": pool.submit(run, scenario, "robust", fitted, steps=steps),
        }
        return {mode: f.result() for mode, f in fut.items()}


def handovers(log: RunLog, robot: int, kinds: Sequence[str]) -> list[Reallocation]:
    """Events where ``robot`` loses a task that a robot of another kind picks up in the same step."""
    events = detect_reallocation(log)
    out = []
    for ev in events:
        if ev.robot != robot:
            continue
        for other in events:
            if (other.step == ev.step and other.new_task == ev.old_task
                    and kinds[other.robot] != kinds[robot]):
                out.append(ev)
                break
    return out


def energy_ratio(log: RunLog) -> float:
    e = log.energy
    return float(e[-1] / e[0])


def convergence_verdict(logs: dict[str, RunLog], robot: int) -> Verdict:
    """Robust run converges and keeps its specialization; the baseline does neither."""
    rob, base = logs["robust"], logs["nominal"]
    d = {
        "robust_energy_ratio": energy_ratio(rob),
        "baseline_energy_ratio": energy_ratio(base),
        "robust_specialization": rob.final_assigned_specialization(robot),
        "baseline_specialization": base.final_assigned_specialization(robot),
    }
    ok = (d["robust_energy_ratio"] < ROBUST_ENERGY_RATIO
          and d["baseline_energy_ratio"] > BASELINE_ENERGY_RATIO
          and d["robust_specialization"] >= ROBUST_MIN_SPECIALIZATION
          and d["baseline_specialization"] <= BASELINE_MAX_SPECIALIZATION
          and not rob.failure and not base.failure)
    return Verdict(ok, "convergence", d)


def reallocation_verdict(logs: dict[str, RunLog], robot: int, kinds: Sequence[str]) -> Verdict:
    """Robust run hands the robot's task to another kind, no earlier than the baseline does."""
    rob = handovers(logs["robust"], robot, kinds)
    base = handovers(logs["nominal"], robot, kinds)
    first_rob = detect_reallocation(logs["robust"])
    first_base = detect_reallocation(logs["nominal"])
    d = {
        "robust_handovers": len(rob),
        "baseline_handovers": len(base),
        "robust_first_reallocation": first_rob[0].step if first_rob else -1,
        "baseline_first_reallocation": first_base[0].step if first_base else -1,
    }
    ok = (len(rob) >= 1 and bool(first_base)
          and d["robust_first_reallocation"] >= d["baseline_first_reallocation"]
          and not logs["robust"].failure and not logs["nominal"].failure)
    return Verdict(ok, "reallocation", d)


def equivalence_verdict(logs: dict[str, RunLog]) -> Verdict:
    """Both energy curves stay within a small fraction of the initial energy of each other."""
    a, b = logs["nominal"].energy, logs["robust"].energy
    n = min(len(a), len(b))
    gap = float(np.max(np.abs(a[:n] - b[:n])) / a[0]) if n else float("nan")
    return Verdict(bool(gap < EQUIVALENCE_GAP), "equivalence", {"max_gap_ratio": gap})


def verdict_for(scenario: Scenario, logs: dict[str, RunLog]) -> Verdict:
    """Pick the check that matches the scenario.

    No disturbance: equivalence. A disturbance that affects only some robot
    kinds in a mixed team: reallocation. Otherwise: convergence.
    """
    kinds = [r.kind for r in scenario.robots]
    robot = scenario.tracked_robot
    if not scenario.disturbances or all(d.gain == 0 for d in scenario.disturbances):
        return equivalence_verdict(logs)
    affected = set().union(*(d.affected_kinds for d in scenario.disturbances))
    if any(k not in affected for k in kinds):
        return reallocation_verdict(logs, robot, kinds)
    return convergence_verdict(logs, robot)


COMPARISON_HEADER = ("# step: control step; time: s; energy_*: sum of squared task energies [m^4]; "
                     "s_*: specialization of the tracked robot towards its assigned task [0-1]; "
                     "task_*: its assigned task index\n")


def write_comparison(logs: dict[str, RunLog], robot: int, path: str) -> str:
    base, rob = logs["nominal"], logs["robust"]
    n = min(len(base), len(rob))
    sb, sr = base.assigned_specialization(robot), rob.assigned_specialization(robot)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(COMPARISON_HEADER)
        w = csv.writer(fh)
        w.writerow(["step", "time", "energy_nominal", "energy_robust",
                    "s_nominal", "s_robust", "task_nominal", "task_robust"])
        for k in range(n):
            w.writerow([k, repr(base.records[k].time),
                        repr(base.records[k].energy), repr(rob.records[k].energy),
                        repr(float(sb[k])), repr(float(sr[k])),
                        base.records[k].assignment[robot], rob.records[k].assignment[robot]])
    return path
