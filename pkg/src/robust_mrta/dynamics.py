"""Control-affine robot models, additive disturbance hulls and Euler stepping.

Two concrete models are provided:

* :class:`UnicycleModel` -- differential-drive robot with state ``[x, y, theta]``,
  input ``[v, omega]`` and a look-ahead output point used by the barrier tasks.
* :class:`SingleIntegratorModel` -- planar point robot (``p_dot = u``), used for
  the simulated quadcopters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InvalidArgument

Array = NDArray[np.float64]


def _vec(a: ArrayLike, n: int, name: str) -> Array:
    v = np.asarray(a, dtype=float).reshape(-1)
    if v.shape[0] != n:
        raise InvalidArgument(f"{name} has length {v.shape[0]}, expected {n}")
    return v


class ControlAffineModel:
    """``x_dot = f(x) + g(x) u`` with a planar output ``p(x)``.

    Subclasses provide :meth:`drift`, :meth:`actuation`, :meth:`output` and
    :meth:`output_jacobian`. ``input_limits`` holds the per-component bound
    used for ``|u| <= u_max``.
    """

    state_dim: int
    input_dim: int

    def drift(self, x: Array) -> Array:
        raise NotImplementedError

    def actuation(self, x: Array) -> Array:
        raise NotImplementedError

    def output(self, x: Array) -> Array:
        raise NotImplementedError

    def output_jacobian(self, x: Array) -> Array:
        raise NotImplementedError

    @property
    def input_limits(self) -> Array:
        raise NotImplementedError

    def features(self, x: ArrayLike) -> Array:
        """Inputs handed to the disturbance regressors (the state by default)."""
        return np.asarray(x, dtype=float)

    def check_state(self, x: ArrayLike) -> Array:
        return _vec(x, self.state_dim, "state")

    def check_input(self, u: ArrayLike) -> Array:
        return _vec(u, self.input_dim, "input")

    def nominal_rate(self, x: ArrayLike, u: ArrayLike) -> Array:
        x = self.check_state(x)
        u = self.check_input(u)
        return self.drift(x) + self.actuation(x) @ u

    def saturate(self, u: ArrayLike) -> Array:
        lim = self.input_limits
        return np.clip(self.check_input(u), -lim, lim)


@dataclass(frozen=True)
class UnicycleModel(ControlAffineModel):
    """Differential-drive robot steered through a look-ahead point.

    ``lookahead`` is the distance (m) of the output point ahead of the wheel
    axis, ``v_max`` (m/s) and ``w_max`` (rad/s) bound the inputs.
    """

    lookahead: float = 0.05
    v_max: float = 0.2
    w_max: float = 3.6
    state_dim: int = field(default=3, init=False)
    input_dim: int = field(default=2, init=False)

    def __post_init__(self):
        if not self.lookahead > 0:
            raise InvalidArgument("lookahead must be positive")
        if not (self.v_max > 0 and self.w_max > 0):
            raise InvalidArgument("input limits must be positive")

    def drift(self, x):
        return np.zeros(3)

    def actuation(self, x):
        c, s = np.cos(x[2]), np.sin(x[2])
        return np.array([[c, 0.0], [s, 0.0], [0.0, 1.0]])

    def output(self, x):
        x = np.asarray(x, dtype=float)
        lp = self.lookahead
        return np.array([x[0] + lp * np.cos(x[2]), x[1] + lp * np.sin(x[2])])

    def output_jacobian(self, x):
        lp = self.lookahead
        c, s = np.cos(x[2]), np.sin(x[2])
        return np.array([[1.0, 0.0, -lp * s], [0.0, 1.0, lp * c]])

    @property
    def input_limits(self):
        return np.array([self.v_max, self.w_max])

    def features(self, x):
        # heading enters through (cos, sin) so that theta = pi and -pi coincide
        x = np.asarray(x, dtype=float)
        return np.array([x[0], x[1], np.cos(x[2]), np.sin(x[2])])

    def inverse_output_map(self, x, p_dot):
        """Input ``u`` that produces the output velocity ``p_dot`` (no saturation)."""
        c, s = np.cos(x[2]), np.sin(x[2])
        v = c * p_dot[0] + s * p_dot[1]
        w = (-s * p_dot[0] + c * p_dot[1]) / self.lookahead
        return np.array([v, w])


@dataclass(frozen=True)
class SingleIntegratorModel(ControlAffineModel):
    """Planar point robot, ``p_dot = u`` with ``|u_k| <= v_max``."""

    v_max: float = 0.2
    state_dim: int = field(default=2, init=False)
    input_dim: int = field(default=2, init=False)

    def __post_init__(self):
        if not self.v_max > 0:
            raise InvalidArgument("v_max must be positive")

    def drift(self, x):
        return np.zeros(2)

    def actuation(self, x):
        return np.eye(2)

    def output(self, x):
        return np.asarray(x, dtype=float).copy()

    def output_jacobian(self, x):
        return np.eye(2)

    @property
    def input_limits(self):
        return np.array([self.v_max, self.v_max])

    def inverse_output_map(self, x, p_dot):
        return np.asarray(p_dot, dtype=float).copy()


class DisturbanceHull:
    """Convex hull of ``p`` additive state-derivative offsets (rows of ``vertices``)."""

    __slots__ = ("vertices",)

    def __init__(self, vertices: ArrayLike):
        v = np.array(vertices, dtype=float, ndmin=2)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise InvalidArgument("hull needs at least one vertex of positive length")
        v.setflags(write=False)
        self.vertices = v

    @classmethod
    def zero(cls, n: int) -> "DisturbanceHull":
        return cls(np.zeros((1, n)))

    @property
    def p(self) -> int:
        return self.vertices.shape[0]

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    def min_inner(self, direction: ArrayLike) -> float:
        """``min_k direction . psi_k``; a linear functional is minimised at a vertex."""
        # + 0.0 turns a signed zero into +0.0 so zero hulls leave bounds bit-identical
        return float(np.min(self.vertices @ np.asarray(direction, dtype=float))) + 0.0

    def bounding_box(self) -> tuple[Array, Array]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def __repr__(self):
        return f"DisturbanceHull(p={self.p}, dim={self.dim})"


class Inclusion(NamedTuple):
    nominal: Array
    vertices: Array


def evaluate_inclusion(model: ControlAffineModel, hull: DisturbanceHull, x, u) -> Inclusion:
    """Right-hand side of the differential inclusion: ``nominal + co(vertices)``."""
    nominal = model.nominal_rate(x, u)
    if hull.dim != model.state_dim:
        raise InvalidArgument(
            f"hull vertices have length {hull.dim}, model state has {model.state_dim}"
        )
    return Inclusion(nominal, hull.vertices.copy())


def output_dynamics(model: ControlAffineModel, x, u) -> Array:
    """Velocity of the output point under the nominal dynamics."""
    x = model.check_state(x)
    u = model.check_input(u)
    if isinstance(model, UnicycleModel):
        c, s = np.cos(x[2]), np.sin(x[2])
        rot = np.array([[c, -s], [s, c]])
        return rot @ (np.array([1.0, model.lookahead]) * u)
    return model.output_jacobian(x) @ (model.drift(x) + model.actuation(x) @ u)


@dataclass(frozen=True)
class GroundTruthDisturbance:
    """Input perturbation ``u_d = u + gain cos(theta) [1, 0]`` inside a rectangle.

    ``region`` is ``(x_min, x_max, y_min, y_max)`` in metres and is tested
    against the robot position ``(x[0], x[1])``. Robots whose kind is not in
    ``affected_kinds`` are never disturbed.
    """

    region: tuple[float, float, float, float]
    gain: float
    affected_kinds: frozenset = frozenset({"ground"})

    def __post_init__(self):
        x0, x1, y0, y1 = self.region
        if not (x0 < x1 and y0 < y1):
            raise InvalidArgument(f"degenerate disturbance region {self.region}")
        object.__setattr__(self, "affected_kinds", frozenset(self.affected_kinds))

    def inside(self, x) -> bool:
        x0, x1, y0, y1 = self.region
        return bool(x0 <= x[0] <= x1 and y0 <= x[1] <= y1)


def apply_ground_truth(dist: GroundTruthDisturbance | None, robot_kind: str, x, u) -> Array:
    u = np.asarray(u, dtype=float).copy()
    if dist is None or robot_kind not in dist.affected_kinds or not dist.inside(x):
        return u
    u[0] += dist.gain * np.cos(x[2])
    return u


def apply_all(disturbances, robot_kind: str, x, u) -> Array:
    """Compose several ground-truth disturbances (each evaluated at ``x``)."""
    out = np.asarray(u, dtype=float).copy()
    for d in disturbances:
        out = out + (apply_ground_truth(d, robot_kind, x, u) - u)
    return out


def step(model: ControlAffineModel, x, u, dt: float, *, offset=None) -> Array:
    """One explicit Euler step ``x + dt (f + g u + offset)``.

    ``offset`` is an optional additive state-derivative term, e.g. a point of a
    :class:`DisturbanceHull`. Ground-truth input disturbances are applied by the
    caller through :func:`apply_ground_truth` before stepping.
    """
    if not dt > 0:
        raise InvalidArgument("dt must be positive")
    x = model.check_state(x)
    rate = model.nominal_rate(x, u)
    if offset is not None:
        rate = rate + _vec(offset, model.state_dim, "offset")
    return x + dt * rate
