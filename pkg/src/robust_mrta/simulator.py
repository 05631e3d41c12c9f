"""Closed-loop simulation of the adaptive allocation framework.

The loop per control step is: read states, solve the allocation program,
apply the saturated inputs through the ground-truth (disturbed) dynamics,
measure modelled-versus-actual progress and update the specializations.
In ``robust`` mode the execution rows and the progress model both use the
learned disturbance hulls; ``nominal`` mode is the baseline that ignores them.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .allocator import TeamConfig, decide
from .barrier import BarrierTask
from .dynamics import (ControlAffineModel, DisturbanceHull, GroundTruthDisturbance,
                       SingleIntegratorModel, UnicycleModel, apply_all, step)
from .errors import InvalidArgument, SolverError
from .gp import (DisturbanceEstimateConfig, FittedDisturbance, GpDataset, KernelParams,
                 collect_label, disturbance_hull, fit)
from .specialization import (ProgressSample, SpecializationMatrix, baseline_delta,
                             robust_delta)

log = logging.getLogger(__name__)

HullFn = Callable[[int, np.ndarray], DisturbanceHull]


@dataclass
class RobotSpec:
    name: str
    kind: str
    model: ControlAffineModel
    initial_state: np.ndarray

    def __post_init__(self):
        self.initial_state = self.model.check_state(self.initial_state).copy()


@dataclass(frozen=True)
class SweepConfig:
    """Data-collection sweep: parallel lines ``spacing`` apart in both axes, one
    probe every ``sample_step`` metres, starting ``offset`` in from the arena edge."""

    spacing: float = 0.1
    sample_step: float = 0.1
    offset: float = 0.05
    speed: float = 0.1

    def __post_init__(self):
        if min(self.spacing, self.sample_step, self.speed) <= 0 or self.offset < 0:
            raise InvalidArgument("sweep spacing, sample_step and speed must be positive")


@dataclass
class Scenario:
    name: str
    arena: tuple[float, float, float, float]
    robots: list[RobotSpec]
    tasks: list[BarrierTask]
    team: TeamConfig
    disturbances: list[GroundTruthDisturbance] = field(default_factory=list)
    kernel: KernelParams = field(default_factory=KernelParams)
    estimate: DisturbanceEstimateConfig = field(default_factory=DisturbanceEstimateConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    beta1: float = 0.05
    dt: float = 0.033
    steps: int = 3000
    seed: int = 0
    initial_specializations: Optional[np.ndarray] = None
    tracked_robot: int = 0

    def __post_init__(self):
        x0, x1, y0, y1 = self.arena
        if not (x0 < x1 and y0 < y1):
            raise InvalidArgument(f"degenerate arena {self.arena}")
        if self.team.n_robots != len(self.robots) or self.team.n_tasks != len(self.tasks):
            raise InvalidArgument("team size does not match the robot/task lists")
        for r in self.robots:
            p = r.initial_state
            if not (x0 <= p[0] <= x1 and y0 <= p[1] <= y1):
                raise InvalidArgument(f"robot {r.name} starts outside the arena")
        if not self.dt > 0 or self.steps < 1:
            raise InvalidArgument("dt must be positive and steps >= 1")

    @property
    def models(self) -> list[ControlAffineModel]:
        return [r.model for r in self.robots]

    def specializations(self) -> SpecializationMatrix:
        if self.initial_specializations is None:
            return SpecializationMatrix.ones(len(self.robots), len(self.tasks), self.beta1)
        return SpecializationMatrix(np.array(self.initial_specializations, dtype=float), self.beta1)


# --------------------------------------------------------------------------
# data collection


def sweep_poses(arena, sweep: SweepConfig, with_heading: bool = True):
    """Boustrophedon poses: horizontal lines then vertical lines, alternating direction.

    Yields ``(position, heading)`` pairs; the headings are the travel direction.
    """
    x0, x1, y0, y1 = arena
    xs = np.arange(x0 + sweep.offset, x1 - sweep.offset + 1e-9, sweep.sample_step)
    ys = np.arange(y0 + sweep.offset, y1 - sweep.offset + 1e-9, sweep.spacing)
    for k, y in enumerate(ys):
        line = xs if k % 2 == 0 else xs[::-1]
        heading = 0.0 if k % 2 == 0 else np.pi
        for x in line:
            yield np.array([x, y]), heading
    xs = np.arange(x0 + sweep.offset, x1 - sweep.offset + 1e-9, sweep.spacing)
    ys = np.arange(y0 + sweep.offset, y1 - sweep.offset + 1e-9, sweep.sample_step)
    for k, x in enumerate(xs):
        line = ys if k % 2 == 0 else ys[::-1]
        heading = np.pi / 2 if k % 2 == 0 else -np.pi / 2
        for y in line:
            yield np.array([x, y]), heading


def _probe_input(model, heading, speed):
    if isinstance(model, UnicycleModel):
        return np.array([speed, 0.0])
    return speed * np.array([np.cos(heading), np.sin(heading)])


def _pose_state(model, pos, heading):
    if model.state_dim == 3:
        return np.array([pos[0], pos[1], heading])
    return np.array(pos, dtype=float)


def finite_difference(model, x_prev, x_now, dt):
    xdot = (np.asarray(x_now) - np.asarray(x_prev)) / dt
    if isinstance(model, UnicycleModel):
        dtheta = np.angle(np.exp(1j * (x_now[2] - x_prev[2])))
        xdot[2] = dtheta / dt
    return xdot


def collect_training_data(scenario: Scenario) -> list[GpDataset]:
    """Probe every robot along the sweep under the ground-truth dynamics.

    At each sweep pose the robot applies the input that follows the sweep line
    for one control period; the finite-difference velocity minus the nominal
    model gives the label. The next probe starts from the next pose on the line.
    """
    out = []
    for robot in scenario.robots:
        states, inputs, labels = [], [], []
        for pos, heading in sweep_poses(scenario.arena, scenario.sweep):
            x = _pose_state(robot.model, pos, heading)
            u = _probe_input(robot.model, heading, scenario.sweep.speed)
            u_true = apply_all(scenario.disturbances, robot.kind, x, u)
            x_next = step(robot.model, x, u_true, scenario.dt)
            xdot = finite_difference(robot.model, x, x_next, scenario.dt)
            states.append(x)
            inputs.append(u)
            labels.append(collect_label(robot.model, x, u, xdot))
        out.append(GpDataset(np.array(states), np.array(inputs), np.array(labels)))
    return out


def fit_disturbances(scenario: Scenario, datasets: Sequence[GpDataset]) -> list[FittedDisturbance]:
    if len(datasets) != len(scenario.robots):
        raise InvalidArgument("need one dataset per robot")
    return [FittedDisturbance(fit(ds, scenario.kernel, r.model), r.model)
            for r, ds in zip(scenario.robots, datasets)]


# --------------------------------------------------------------------------
# run log


@dataclass
class StepRecord:
    step: int
    time: float
    states: list
    outputs: np.ndarray
    alpha: np.ndarray
    inputs: list
    slacks: np.ndarray
    h_assigned: np.ndarray
    energy: float
    specializations: np.ndarray
    deltas: np.ndarray
    objective: float

    @property
    def assignment(self) -> tuple[int, ...]:
        return tuple(int(j) for j in np.argmax(self.alpha, axis=1))


@dataclass
class RunLog:
    scenario: str
    mode: str
    dt: float
    records: list[StepRecord] = field(default_factory=list)
    final_specializations: Optional[np.ndarray] = None
    final_states: Optional[list] = None
    failure: Optional[str] = None

    def __len__(self):
        return len(self.records)

    def append(self, rec: StepRecord):
        if self.records and rec.step != self.records[-1].step + 1:
            raise InvalidArgument("records must be appended in step order")
        self.records.append(rec)

    @property
    def energy(self) -> np.ndarray:
        return np.array([r.energy for r in self.records])

    @property
    def times(self) -> np.ndarray:
        return np.array([r.time for r in self.records])

    def assigned_specialization(self, robot: int) -> np.ndarray:
        """Specialization of ``robot`` towards its currently assigned task, per step."""
        return np.array([r.specializations[robot, r.assignment[robot]] for r in self.records])

    def final_assigned_specialization(self, robot: int) -> float:
        task = self.records[-1].assignment[robot]
        return float(self.final_specializations[robot, task])


@dataclass(frozen=True)
class Reallocation:
    step: int
    robot: int
    old_task: int
    new_task: int


def detect_reallocation(log: RunLog) -> list[Reallocation]:
    if not log.records:
        raise InvalidArgument("empty log")
    events = []
    prev = log.records[0].assignment
    for rec in log.records[1:]:
        cur = rec.assignment
        for i, (a, b) in enumerate(zip(prev, cur)):
            if a != b:
                events.append(Reallocation(rec.step, i, a, b))
        prev = cur
    return events


def energy_metric(tasks, models, states, assignment) -> float:
    """Sum over robots of the squared energy towards the assigned task."""
    return float(sum(tasks[a].energy(m, x) ** 2 for m, x, a in zip(models, states, assignment)))


# --------------------------------------------------------------------------
# main loop


def run(scenario: Scenario, mode: Optional[str] = None,
        fitted: Optional[Sequence[FittedDisturbance]] = None, *,
        hull_fn: Optional[HullFn] = None, steps: Optional[int] = None,
        observer: Optional[Callable] = None) -> RunLog:
    """Execute the closed loop and return the per-step log.

    Robust mode needs either ``fitted`` disturbance regressors (one per robot)
    or an explicit ``hull_fn(robot, state)``. ``observer(k, states, s, hulls)``
    is called before each decision and may be used by tests to probe the loop.
    A :class:`SolverError` stops the run; the partial log carries ``failure``.
    """
    mode = mode or scenario.team.mode
    cfg = scenario.team if scenario.team.mode == mode else _with_mode(scenario.team, mode)
    if mode == "robust" and hull_fn is None:
        if fitted is None:
            raise InvalidArgument("robust mode needs fitted disturbance models or hull_fn")
        est = scenario.estimate
        hull_fn = lambda i, x: disturbance_hull(fitted[i], est, x)  # noqa: E731
    models = scenario.models
    tasks = scenario.tasks
    kinds = [r.kind for r in scenario.robots]
    dt = scenario.dt
    n_steps = scenario.steps if steps is None else int(steps)
    spec = scenario.specializations()
    states = [r.initial_state.copy() for r in scenario.robots]
    out = RunLog(scenario.name, mode, dt)
    for k in range(n_steps):
        hulls = [hull_fn(i, x) for i, x in enumerate(states)] if mode == "robust" else None
        if observer is not None:
            observer(k, states, spec.values.copy(), hulls)
        try:
            dec = decide(cfg, tasks, models, states, spec.values, hulls)
        except SolverError as exc:
            out.failure = f"step {k}: {exc}"
            log.error("solver failure at step %d: %s", k, exc)
            break
        nxt = []
        for model, kind, x, u in zip(models, kinds, states, dec.inputs):
            u_applied = apply_all(scenario.disturbances, kind, x, model.saturate(u))
            nxt.append(step(model, x, u_applied, dt))
        deltas = np.zeros((len(models), len(tasks)))
        for i, (model, x, xn, u) in enumerate(zip(models, states, nxt, dec.inputs)):
            for j, task in enumerate(tasks):
                sample = ProgressSample(i, j, x, xn, u, dt, hulls[i] if hulls else None)
                if mode == "robust":
                    deltas[i, j] = robust_delta(sample, task, model)
                else:
                    deltas[i, j] = baseline_delta(sample, task, model)
        assign = dec.assignment
        out.append(StepRecord(
            step=k, time=k * dt, states=[x.copy() for x in states],
            outputs=np.array([m.output(x) for m, x in zip(models, states)]),
            alpha=dec.alpha, inputs=dec.inputs, slacks=dec.slacks,
            h_assigned=np.array([tasks[a].h(m, x) for m, x, a in zip(models, states, assign)]),
            energy=energy_metric(tasks, models, states, assign),
            specializations=spec.values.copy(), deltas=deltas, objective=dec.objective,
        ))
        spec.update(dec.alpha, deltas, step=k)
        states = nxt
    out.final_specializations = spec.values.copy()
    out.final_states = states
    return out


def _with_mode(cfg: TeamConfig, mode: str) -> TeamConfig:
    from dataclasses import replace
    return replace(cfg, mode=mode)


# --------------------------------------------------------------------------
# summaries and persistence


def summarize(log: RunLog, tracked_robot: int = 0) -> dict:
    e = log.energy
    events = detect_reallocation(log) if log.records else []
    final_s = log.final_specializations
    return {
        "scenario": log.scenario,
        "mode": log.mode,
        "steps": len(log),
        "initial_energy": float(e[0]) if len(e) else float("nan"),
        "final_energy": float(e[-1]) if len(e) else float("nan"),
        "final_energy_ratio": float(e[-1] / e[0]) if len(e) and e[0] > 0 else float("nan"),
        "reallocation_events": len(events),
        "first_reallocation_step": events[0].step if events else -1,
        "tracked_robot": tracked_robot,
        "tracked_final_assigned_specialization":
            log.final_assigned_specialization(tracked_robot) if log.records else float("nan"),
        "final_specializations": final_s.round(6).tolist() if final_s is not None else None,
        "failure": log.failure or "",
    }


STATE_HEADER = "# step: control step; time: s; x, y: m; theta: rad; p1, p2: look-ahead output m\n"
DECISION_HEADER = ("# step: control step; robot: index; task: assigned task index; "
                   "u0, u1: commanded input (m/s, rad/s or m/s); delta_j: slack [m^2/s]\n")
ENERGY_HEADER = "# step: control step; time: s; energy: sum of squared task energies [m^4]\n"
EVENT_HEADER = "# step: control step; robot: index; old_task, new_task: task indices\n"


def write_log(log: RunLog, out_dir: str, tracked_robot: int = 0) -> dict:
    """Write one CSV per record type plus ``summary.txt``; returns the summary."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "states.csv"), "w", newline="") as fh:
        fh.write(STATE_HEADER)
        w = csv.writer(fh)
        w.writerow(["step", "time", "robot", "x", "y", "theta", "p1", "p2"])
        for r in log.records:
            for i, (x, p) in enumerate(zip(r.states, r.outputs)):
                theta = x[2] if len(x) > 2 else 0.0
                w.writerow([r.step, _f(r.time), i, _f(x[0]), _f(x[1]), _f(theta), _f(p[0]), _f(p[1])])
    with open(os.path.join(out_dir, "decisions.csv"), "w", newline="") as fh:
        fh.write(DECISION_HEADER)
        w = csv.writer(fh)
        m_tasks = log.records[0].alpha.shape[1] if log.records else 0
        w.writerow(["step", "robot", "task", "u0", "u1", "h_assigned"]
                   + [f"delta_{j}" for j in range(m_tasks)])
        for r in log.records:
            for i, (u, d) in enumerate(zip(r.inputs, r.slacks)):
                w.writerow([r.step, i, r.assignment[i], _f(u[0]), _f(u[1]), _f(r.h_assigned[i])]
                           + [_f(v) for v in d])
    with open(os.path.join(out_dir, "energy.csv"), "w", newline="") as fh:
        fh.write(ENERGY_HEADER)
        w = csv.writer(fh)
        w.writerow(["step", "time", "energy"])
        for r in log.records:
            w.writerow([r.step, _f(r.time), _f(r.energy)])
    with open(os.path.join(out_dir, "specializations.csv"), "w", newline="") as fh:
        fh.write("# step: control step; s: specialization used at this step [0-1]; "
                 "delta: progress gap measured after the step [m^2]\n")
        w = csv.writer(fh)
        w.writerow(["step", "robot", "task", "s", "delta"])
        for r in log.records:
            n, m = r.specializations.shape
            for i in range(n):
                for j in range(m):
                    w.writerow([r.step, i, j, _f(r.specializations[i, j]), _f(r.deltas[i, j])])
    with open(os.path.join(out_dir, "reallocations.csv"), "w", newline="") as fh:
        fh.write(EVENT_HEADER)
        w = csv.writer(fh)
        w.writerow(["step", "robot", "old_task", "new_task"])
        if log.records:
            for ev in detect_reallocation(log):
                w.writerow([ev.step, ev.robot, ev.old_task, ev.new_task])
    summary = summarize(log, tracked_robot)
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        for key, val in summary.items():
            fh.write(f"{key} = {json.dumps(val)}\n")
    return summary


def read_summary(path: str) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            if "=" in line:
                key, val = line.split("=", 1)
                out[key.strip()] = json.loads(val)
    return out


def _f(v) -> str:
    return repr(float(v))
