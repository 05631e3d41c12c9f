"""Go-to-goal tasks encoded as barrier functions and their linear input constraints."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .dynamics import ControlAffineModel, DisturbanceHull
from .errors import InvalidArgument


@dataclass(frozen=True)
class BarrierTask:
    """Task completed when the output reaches ``goal``.

    ``h(p) = -||p - goal||^2`` is zero at the goal and negative elsewhere;
    ``energy = -h`` is the quantity driven to zero.
    """

    goal: tuple[float, float]
    name: str = ""

    def h_output(self, p) -> float:
        d = np.asarray(p, dtype=float) - np.asarray(self.goal, dtype=float)
        return -float(d @ d)

    def grad_output(self, p):
        return -2.0 * (np.asarray(p, dtype=float) - np.asarray(self.goal, dtype=float))

    def h(self, model: ControlAffineModel, x) -> float:
        return self.h_output(model.output(x))

    def grad_h(self, model: ControlAffineModel, x):
        """Gradient with respect to the full state, through the output map."""
        return self.grad_output(model.output(x)) @ model.output_jacobian(x)

    def energy(self, model: ControlAffineModel, x) -> float:
        return -self.h(model, x)


@dataclass(frozen=True)
class ClassKappa:
    """Linear extended class-K function ``gamma(h) = gamma0 * h``."""

    gamma0: float = 1.0

    def __post_init__(self):
        if not self.gamma0 > 0:
            raise InvalidArgument("gamma0 must be positive")

    def __call__(self, h: float) -> float:
        return self.gamma0 * h


@dataclass(frozen=True)
class LinearControlConstraint:
    """``coeff . u >= bound`` (relaxed to ``>= bound - delta`` when ``slack_index`` is set)."""

    coeff: np.ndarray
    bound: float
    slack_index: Optional[int] = None

    def residual(self, u, delta=None) -> float:
        """Signed satisfaction margin; non-negative when the constraint holds."""
        r = float(np.dot(self.coeff, u)) - self.bound
        if self.slack_index is not None and delta is not None:
            r += float(delta[self.slack_index])
        return r


class LieDerivatives(NamedTuple):
    lf: float
    lg: np.ndarray
    grad: np.ndarray


def lie_derivatives(task: BarrierTask, model: ControlAffineModel, x) -> LieDerivatives:
    x = model.check_state(x)
    grad = task.grad_h(model, x)
    return LieDerivatives(float(grad @ model.drift(x)), grad @ model.actuation(x), grad)


def nominal_constraint(task, model, x, gamma: ClassKappa, slack_index=None) -> LinearControlConstraint:
    ld = lie_derivatives(task, model, x)
    bound = -gamma(task.h(model, x)) - ld.lf
    return LinearControlConstraint(ld.lg, bound, slack_index)


def robust_constraint(task, model, x, gamma: ClassKappa, hull: DisturbanceHull,
                      slack_index=None) -> LinearControlConstraint:
    """Nominal constraint tightened by the worst hull vertex along the gradient."""
    if hull.dim != model.state_dim:
        raise InvalidArgument("hull dimension does not match the model state")
    ld = lie_derivatives(task, model, x)
    bound = -gamma(task.h(model, x)) - ld.lf
    return LinearControlConstraint(ld.lg, bound - hull.min_inner(ld.grad), slack_index)


def worst_case_progress(task, model, x, u, hull: DisturbanceHull, dt: float) -> float:
    """Euler estimate of the least ``h`` reachable in one step under the inclusion."""
    if not dt > 0:
        raise InvalidArgument("dt must be positive")
    ld = lie_derivatives(task, model, x)
    u = model.check_input(u)
    return task.h(model, x) + dt * (ld.lf + float(ld.lg @ u)) + dt * hull.min_inner(ld.grad)
