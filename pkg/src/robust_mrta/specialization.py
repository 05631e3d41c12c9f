"""Online adaptation of the robot-to-task specialization matrix."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .barrier import BarrierTask, worst_case_progress
from .dynamics import ControlAffineModel, DisturbanceHull
from .errors import InvalidArgument


@dataclass
class ProgressSample:
    """One robot's transition ``x_act_prev -> x_act_now`` under commanded ``u_prev``."""

    robot: int
    task: int
    x_act_prev: np.ndarray
    x_act_now: np.ndarray
    u_prev: np.ndarray
    dt: float
    hull_prev: Optional[DisturbanceHull] = None

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidArgument("dt must be positive")


def simulated_state(sample: ProgressSample, model: ControlAffineModel) -> np.ndarray:
    """Where the nominal model says the robot should be after one step."""
    return sample.x_act_prev + sample.dt * model.nominal_rate(sample.x_act_prev, sample.u_prev)


def baseline_delta(sample: ProgressSample, task: BarrierTask, model: ControlAffineModel) -> float:
    """Actual minus nominally predicted progress."""
    return task.h(model, sample.x_act_now) - task.h(model, simulated_state(sample, model))


def robust_delta(sample: ProgressSample, task: BarrierTask, model: ControlAffineModel) -> float:
    """Actual progress minus the worst progress admitted by the learned hull."""
    if sample.hull_prev is None:
        raise InvalidArgument("robust_delta needs the hull at the previous state")
    worst = worst_case_progress(task, model, sample.x_act_prev, sample.u_prev,
                                sample.hull_prev, sample.dt)
    return task.h(model, sample.x_act_now) - worst


def update_values(values, alpha, deltas, beta1: float) -> np.ndarray:
    """``clip(s + beta1 * alpha * delta, 0, 1)`` elementwise."""
    values = np.asarray(values, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    deltas = np.asarray(deltas, dtype=float)
    if values.shape != alpha.shape or values.shape != deltas.shape:
        raise InvalidArgument("values, alpha and deltas must share a shape")
    if not np.all(np.isfinite(deltas)):
        raise InvalidArgument("deltas must be finite")
    new = np.clip(values + beta1 * alpha * deltas, 0.0, 1.0)
    # unassigned entries are copied, never recomputed
    return np.where(alpha != 0, new, values)


@dataclass
class SpecializationMatrix:
    values: np.ndarray
    beta1: float = 0.05
    history: list = field(default_factory=list)

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float)
        if self.values.ndim != 2:
            raise InvalidArgument("specializations must be an N x M matrix")
        if np.any(self.values < 0) or np.any(self.values > 1):
            raise InvalidArgument("specializations must lie in [0, 1]")
        if not self.beta1 > 0:
            raise InvalidArgument("beta1 must be positive")

    @classmethod
    def ones(cls, n_robots, n_tasks, beta1=0.05):
        return cls(np.ones((n_robots, n_tasks)), beta1)

    def update(self, alpha, deltas, step: Optional[int] = None) -> "SpecializationMatrix":
        """Apply one update in place; ``step`` records a history snapshot."""
        self.values = update_values(self.values, alpha, deltas, self.beta1)
        if step is not None:
            self.history.append((step, self.values.copy(), np.asarray(deltas, dtype=float).copy()))
        return self

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("# step: control step index; s: specialization [0-1]; delta: progress gap [m^2]\n")
            w = csv.writer(fh)
            w.writerow(["step", "robot", "task", "s", "delta"])
            for step, vals, deltas in self.history:
                for i in range(vals.shape[0]):
                    for j in range(vals.shape[1]):
                        w.writerow([step, i, j, repr(float(vals[i, j])), repr(float(deltas[i, j]))])
