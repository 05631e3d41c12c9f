"""Per-step joint allocation and control problem for the whole team."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .barrier import BarrierTask, ClassKappa, nominal_constraint, robust_constraint
from .dynamics import ControlAffineModel, DisturbanceHull
from .errors import InvalidArgument
from .solver import CouplingCost, MiqpInstance, RobotBlock, solve_miqp

MODES = ("nominal", "robust")


@dataclass(frozen=True)
class TeamConfig:
    """Weights of the allocation program.

    ``coupling`` (C) scales the distribution term, ``slack_weight`` (l) the
    specialization-weighted slack cost, ``kappa`` > 1 the prioritization
    ratio. ``pi_star`` defaults to the uniform distribution over tasks and
    ``t_matrix`` to the identity.
    """

    n_robots: int
    n_tasks: int
    coupling: float = 10.0
    slack_weight: float = 1.0
    kappa: float = 10.0
    gamma0: float = 1.0
    delta_max: float = 50.0
    mode: str = "nominal"
    pi_star: Optional[tuple[float, ...]] = None
    t_matrix: Optional[tuple[tuple[float, ...], ...]] = None
    strategy: str = "enumerate"

    def __post_init__(self):
        if self.n_robots < 1 or self.n_tasks < 1:
            raise InvalidArgument("need at least one robot and one task")
        if not self.kappa > 1:
            raise InvalidArgument("kappa must exceed 1")
        if not (self.coupling > 0 and self.slack_weight > 0 and self.delta_max > 0):
            raise InvalidArgument("coupling, slack_weight and delta_max must be positive")
        if self.mode not in MODES:
            raise InvalidArgument(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.pi_star is not None:
            pi = np.asarray(self.pi_star, dtype=float)
            if pi.shape != (self.n_tasks,) or np.any(pi < 0):
                raise InvalidArgument("pi_star must be a non-negative vector of length n_tasks")

    @property
    def target(self) -> np.ndarray:
        if self.pi_star is None:
            return np.full(self.n_tasks, 1.0 / self.n_tasks)
        return np.asarray(self.pi_star, dtype=float)

    @property
    def weight_matrix(self) -> np.ndarray:
        if self.t_matrix is None:
            return np.eye(self.n_tasks)
        t = np.asarray(self.t_matrix, dtype=float)
        if t.shape != (self.n_tasks, self.n_tasks):
            raise InvalidArgument("t_matrix must be n_tasks x n_tasks")
        return t

    @property
    def big_m(self) -> float:
        return self.delta_max * (1.0 + 1.0 / self.kappa)


@dataclass
class PrioritizationEncoding:
    """Rows ``P delta_i <= Omega(alpha_i)`` enforcing ``delta_m <= delta_n / kappa`` for the
    prioritised task ``m``; the rows of other tasks are relaxed by the big-M constant."""

    rows: np.ndarray
    pairs: list[tuple[int, int]]
    big_m: float

    @property
    def q(self) -> int:
        return self.rows.shape[0]

    def rhs(self, alpha_i) -> np.ndarray:
        alpha_i = np.asarray(alpha_i, dtype=float)
        return np.array([self.big_m * (1.0 - alpha_i[m]) for m, _ in self.pairs])

    def satisfied(self, delta, alpha_i, tol=0.0) -> bool:
        return bool(np.all(self.rows @ np.asarray(delta, dtype=float) <= self.rhs(alpha_i) + tol))


def build_prioritization(cfg: TeamConfig) -> PrioritizationEncoding:
    m_tasks = cfg.n_tasks
    pairs = [(m, n) for m in range(m_tasks) for n in range(m_tasks) if n != m]
    rows = np.zeros((len(pairs), m_tasks))
    for r, (m, n) in enumerate(pairs):
        rows[r, m] = 1.0
        rows[r, n] = -1.0 / cfg.kappa
    return PrioritizationEncoding(rows, pairs, cfg.big_m)


def pi_of_alpha(alpha, specializations) -> np.ndarray:
    """Specialization-weighted fraction of the team on each task."""
    alpha = np.asarray(alpha, dtype=float)
    s = np.asarray(specializations, dtype=float)
    return (alpha * s).sum(axis=0) / alpha.shape[0]


def _check(cfg, tasks, models, states, specializations, hulls):
    if len(tasks) != cfg.n_tasks:
        raise InvalidArgument(f"{len(tasks)} tasks given, config expects {cfg.n_tasks}")
    if len(models) != cfg.n_robots or len(states) != cfg.n_robots:
        raise InvalidArgument("models/states must have one entry per robot")
    s = np.asarray(specializations, dtype=float)
    if s.shape != (cfg.n_robots, cfg.n_tasks):
        raise InvalidArgument(f"specializations have shape {s.shape}, expected "
                              f"{(cfg.n_robots, cfg.n_tasks)}")
    if cfg.mode == "robust" and (hulls is None or len(hulls) != cfg.n_robots):
        raise InvalidArgument("robust mode needs one disturbance hull per robot")
    return s


def build_step_problem(cfg: TeamConfig, tasks: Sequence[BarrierTask],
                       models: Sequence[ControlAffineModel], states, specializations,
                       hulls: Optional[Sequence[DisturbanceHull]] = None) -> MiqpInstance:
    """Assemble the MIQP for one control step.

    Robot ``i`` owns ``z_i = (u_i, delta_i)`` with cost
    ``|u_i|^2 + l * sum_j s_ij delta_ij^2``. Each task contributes one
    execution row (robust rows in robust mode), then come the prioritization
    rows, and the box ``|u_i| <= u_max``, ``0 <= delta_i <= delta_max``.
    """
    s = _check(cfg, tasks, models, states, specializations, hulls)
    gamma = ClassKappa(cfg.gamma0)
    prio = build_prioritization(cfg)
    m_tasks = cfg.n_tasks
    blocks = []
    for i, (model, x) in enumerate(zip(models, states)):
        nu = model.input_dim
        nz = nu + m_tasks
        hess = np.zeros((nz, nz))
        hess[:nu, :nu] = 2.0 * np.eye(nu)
        hess[nu:, nu:] = np.diag(2.0 * cfg.slack_weight * s[i])
        a = np.zeros((m_tasks + prio.q, nz))
        b = np.zeros(m_tasks + prio.q)
        e = np.zeros((m_tasks + prio.q, m_tasks))
        for j, task in enumerate(tasks):
            if cfg.mode == "robust":
                con = robust_constraint(task, model, x, gamma, hulls[i], slack_index=j)
            else:
                con = nominal_constraint(task, model, x, gamma, slack_index=j)
            a[j, :nu] = con.coeff
            a[j, nu + j] = 1.0
            b[j] = con.bound
        for r, (m, _) in enumerate(prio.pairs):
            # P delta <= B (1 - alpha_m)  <=>  -P delta - B alpha_m >= -B
            a[m_tasks + r, nu:] = -prio.rows[r]
            b[m_tasks + r] = -prio.big_m
            e[m_tasks + r, m] = -prio.big_m
        lim = model.input_limits
        lower = np.concatenate([-lim, np.zeros(m_tasks)])
        upper = np.concatenate([lim, np.full(m_tasks, cfg.delta_max)])
        blocks.append(RobotBlock(hess, np.zeros(nz), a, b, e, lower, upper))

    w = np.zeros((m_tasks, cfg.n_robots * m_tasks))
    for i in range(cfg.n_robots):
        for j in range(m_tasks):
            w[j, i * m_tasks + j] = s[i, j] / cfg.n_robots
    coupling = CouplingCost(cfg.coupling, cfg.target, w, cfg.weight_matrix)
    return MiqpInstance(blocks, coupling, m_tasks)


@dataclass
class StepDecision:
    alpha: np.ndarray
    inputs: list[np.ndarray]
    slacks: np.ndarray
    objective: float
    assignment: tuple[int, ...] = field(default=())


def decide(cfg: TeamConfig, tasks, models, states, specializations, hulls=None) -> StepDecision:
    miqp = build_step_problem(cfg, tasks, models, states, specializations, hulls)
    res = solve_miqp(miqp, strategy=cfg.strategy)
    inputs, slacks = [], []
    for model, sol in zip(models, res.solutions):
        inputs.append(sol.z[:model.input_dim].copy())
        slacks.append(sol.z[model.input_dim:].copy())
    return StepDecision(res.alpha, inputs, np.array(slacks), res.objective, res.assignment)
