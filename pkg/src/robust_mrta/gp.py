"""Exact GP regression of the unmodelled dynamics and the hulls built from it.

One scalar GP is fit per state dimension. At a query state the posterior
mean and standard deviation give an interval per dimension,
``mu +- k_c * sigma``, clamped to ``[-d_max, d_max]``; the hull handed to the
barrier constraints is the set of all 2**n corners of that box.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .dynamics import ControlAffineModel, DisturbanceHull
from .errors import FactorizationError, InvalidArgument


@dataclass(frozen=True)
class KernelParams:
    """Squared-exponential kernel ``sf2 * exp(-|a - b|^2 / (2 l^2))`` plus noise ``sn2``.

    ``lengthscale`` may be a scalar or one value per input dimension.
    """

    signal_var: float = 0.01 ** 2
    lengthscale: float | tuple[float, ...] = 0.3
    noise_var: float = 1e-6

    def __post_init__(self):
        ell = np.atleast_1d(np.asarray(self.lengthscale, dtype=float))
        if self.signal_var <= 0 or np.any(ell <= 0) or self.noise_var < 0:
            raise InvalidArgument("kernel hyperparameters must be positive")

    def gram(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        ell = np.asarray(self.lengthscale, dtype=float)
        a = np.atleast_2d(a) / ell
        b = np.atleast_2d(b) / ell
        sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
        return self.signal_var * np.exp(-0.5 * np.maximum(sq, 0.0))


@dataclass
class GpDataset:
    """Training samples for one robot: states, applied inputs and residual labels."""

    states: np.ndarray
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.labels = np.atleast_2d(np.asarray(self.labels, dtype=float))
        n = self.states.shape[0]
        if n < 1 or self.inputs.shape[0] != n or self.labels.shape[0] != n:
            raise InvalidArgument("dataset needs >= 1 sample with matching states/inputs/labels")
        if self.labels.shape[1] != self.states.shape[1]:
            raise InvalidArgument("labels must have the state dimension")

    def __len__(self):
        return self.states.shape[0]


@dataclass(frozen=True)
class DisturbanceEstimateConfig:
    k_c: float = 2.0
    d_max: float = 0.10

    def __post_init__(self):
        if not (self.k_c > 0 and self.d_max > 0):
            raise InvalidArgument("k_c and d_max must be positive")


def collect_label(model: ControlAffineModel, x, u, measured_xdot) -> np.ndarray:
    """Residual between a measured state velocity and the nominal model."""
    xdot = np.asarray(measured_xdot, dtype=float).reshape(-1)
    if xdot.shape[0] != model.state_dim:
        raise InvalidArgument(f"measured velocity has length {xdot.shape[0]}, expected {model.state_dim}")
    return xdot - model.nominal_rate(x, u)


def factorize(inputs, kernel: KernelParams) -> np.ndarray:
    """Lower Cholesky factor of ``K + sn2 I``."""
    gram = kernel.gram(inputs, inputs) + kernel.noise_var * np.eye(inputs.shape[0])
    try:
        return np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(
            "K + noise*I is not positive definite (duplicate inputs with zero noise?)"
        ) from exc


class GpModel:
    """Scalar exact GP with a cached Cholesky factor of ``K + sn2 I``."""

    def __init__(self, inputs, targets, kernel: KernelParams, factor=None):
        x = np.atleast_2d(np.asarray(inputs, dtype=float))
        y = np.asarray(targets, dtype=float).reshape(-1)
        if x.shape[0] != y.shape[0] or x.shape[0] < 1:
            raise InvalidArgument("inputs and targets must have the same positive length")
        chol = factor if factor is not None else factorize(x, kernel)
        self.kernel = kernel
        self.training_inputs = x
        self.targets = y
        self.factored_gram = chol
        half = solve_triangular(chol, y, lower=True, check_finite=False)
        self.alpha = solve_triangular(chol.T, half, lower=False, check_finite=False)

    def predict(self, query) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and standard deviation at each row of ``query``."""
        q = np.atleast_2d(np.asarray(query, dtype=float))
        ks = self.kernel.gram(self.training_inputs, q)
        v = solve_triangular(self.factored_gram, ks, lower=True, check_finite=False)
        return self._moments(ks, v)

    def _moments(self, ks, v):
        var = self.kernel.signal_var - (v * v).sum(axis=0)
        return ks.T @ self.alpha, np.sqrt(np.maximum(var, 0.0))

    def log_marginal_likelihood(self) -> float:
        n = self.targets.shape[0]
        return float(-0.5 * self.targets @ self.alpha
                     - np.log(np.diag(self.factored_gram)).sum()
                     - 0.5 * n * np.log(2.0 * np.pi))


def fit(dataset: GpDataset, kernel: KernelParams | Sequence[KernelParams],
        model: Optional[ControlAffineModel] = None) -> list[GpModel]:
    """One GP per label dimension.

    When ``model`` is given its :meth:`~ControlAffineModel.features` map is
    applied to the states first. ``kernel`` may be shared or given per dimension.
    """
    feats = _features(model, dataset.states)
    n = dataset.labels.shape[1]
    kernels = [kernel] * n if isinstance(kernel, KernelParams) else list(kernel)
    if len(kernels) != n:
        raise InvalidArgument(f"expected {n} kernels, got {len(kernels)}")
    factors: dict[KernelParams, np.ndarray] = {}
    models = []
    for d in range(n):
        if kernels[d] not in factors:
            factors[kernels[d]] = factorize(feats, kernels[d])
        models.append(GpModel(feats, dataset.labels[:, d], kernels[d], factors[kernels[d]]))
    return models


def _features(model, states):
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if model is None:
        return states
    return np.array([model.features(s) for s in states])


@dataclass
class FittedDisturbance:
    """Per-robot bundle: the regressors plus the feature map used to train them."""

    models: list[GpModel]
    model: Optional[ControlAffineModel] = None

    def predict(self, x) -> tuple[np.ndarray, np.ndarray]:
        return predict(self.models, self.model.features(x) if self.model is not None else x)


def predict(models: Sequence[GpModel], x) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension posterior ``(mu, sigma)`` at a single (feature) vector."""
    mu = np.empty(len(models))
    sd = np.empty(len(models))
    q = np.atleast_2d(np.asarray(x, dtype=float))
    solved: dict[int, tuple] = {}
    for d, gp in enumerate(models):
        key = id(gp.factored_gram)
        if key not in solved or solved[key][0] is not gp.training_inputs:
            ks = gp.kernel.gram(gp.training_inputs, q)
            v = solve_triangular(gp.factored_gram, ks, lower=True, check_finite=False)
            solved[key] = (gp.training_inputs, ks, v)
        _, ks, v = solved[key]
        m, s = gp._moments(ks, v)
        mu[d], sd[d] = m[0], s[0]
    return mu, sd


def clamp(lo, hi, d_max):
    return np.clip(lo, -d_max, d_max), np.clip(hi, -d_max, d_max)


def hull_from_moments(mu, sigma, cfg: DisturbanceEstimateConfig) -> DisturbanceHull:
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    lo, hi = clamp(mu - cfg.k_c * sigma, mu + cfg.k_c * sigma, cfg.d_max)
    corners = np.array(list(itertools.product(*zip(lo, hi))))
    return DisturbanceHull(corners)


def disturbance_hull(models, cfg: DisturbanceEstimateConfig, x) -> DisturbanceHull:
    """Clamped box hull (2**n corners) around the GP prediction at ``x``.

    ``models`` is either a :class:`FittedDisturbance` or a plain list of
    :class:`GpModel` evaluated directly at ``x``.
    """
    if isinstance(models, FittedDisturbance):
        mu, sd = models.predict(x)
    else:
        mu, sd = predict(models, x)
    return hull_from_moments(mu, sd, cfg)


def grid_search(dataset: GpDataset, signal_vars, lengthscales, noise_vars,
                model: Optional[ControlAffineModel] = None) -> KernelParams:
    """Shared kernel maximising the summed log marginal likelihood over a grid."""
    feats = _features(model, dataset.states)
    best, best_k = -np.inf, None
    for sf2, ell, sn2 in itertools.product(signal_vars, lengthscales, noise_vars):
        k = KernelParams(sf2, ell, sn2)
        try:
            lml = sum(GpModel(feats, dataset.labels[:, d], k).log_marginal_likelihood()
                      for d in range(dataset.labels.shape[1]))
        except FactorizationError:
            continue
        if lml > best:
            best, best_k = lml, k
    if best_k is None:
        raise FactorizationError("no grid point produced a positive-definite Gram matrix")
    return best_k


def save_dataset(path, dataset: GpDataset) -> None:
    """Write one row per sample: state, input and label columns, comma separated."""
    n, m = dataset.states.shape[1], dataset.inputs.shape[1]
    header = ([f"x{k}" for k in range(n)] + [f"u{k}" for k in range(m)]
              + [f"label{k}" for k in range(n)])
    table = np.hstack([dataset.states, dataset.inputs, dataset.labels])
    comment = ("x: state (m, m, rad for unicycles); u: applied input; "
               "label: measured minus nominal state velocity\n")
    with open(path, "w") as fh:
        fh.write("# " + comment)
        fh.write(",".join(header) + "\n")
        np.savetxt(fh, table, delimiter=",", fmt="%.17g")


def load_dataset(path) -> GpDataset:
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    if not lines:
        raise InvalidArgument(f"{path}: empty dataset file")
    header = lines[0].strip().split(",")
    n = sum(1 for h in header if h.startswith("x"))
    m = sum(1 for h in header if h.startswith("u"))
    if n == 0 or len(header) != 2 * n + m:
        raise InvalidArgument(f"{path}: unrecognised dataset header")
    table = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
    if table.shape[1] != len(header):
        raise InvalidArgument(f"{path}: rows do not match the header")
    return GpDataset(table[:, :n], table[:, n:n + m], table[:, n + m:])
