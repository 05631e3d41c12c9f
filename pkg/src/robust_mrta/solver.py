"""Small dense convex QPs and the binary-allocation layer on top of them.

``solve_qp`` is a dual active-set method (Goldfarb & Idnani) working in the
coordinates ``w = L^T z`` where ``Q = L L^T``. It needs no feasible starting
point and reports infeasibility when the dual becomes unbounded.

``solve_miqp`` handles problems whose only integer variables are one-hot
allocation rows. Once the allocation is fixed the continuous part separates
per robot, so the default strategy solves the N*M distinct robot blocks once
and enumerates all M**N allocations on top of that table.
"""

from __future__ import annotations

import heapq
import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg.lapack import dgeqrf, dorgqr, dtrtrs

from .errors import InvalidArgument, SolverError

log = logging.getLogger(__name__)

EPS_PSD = 1e-9
TIE_TOL = 1e-9


@dataclass
class QpInstance:
    """``min 1/2 z'Qz + c'z`` s.t. ``A z >= b``, ``A_eq z = b_eq``, ``lower <= z <= upper``."""

    hessian: np.ndarray
    linear: np.ndarray
    a_ineq: Optional[np.ndarray] = None
    b_ineq: Optional[np.ndarray] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    a_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None

    def __post_init__(self):
        self.hessian = np.atleast_2d(np.asarray(self.hessian, dtype=float))
        n = self.hessian.shape[0]
        if self.hessian.shape != (n, n):
            raise InvalidArgument(f"hessian must be square, got {self.hessian.shape}")
        self.linear = np.asarray(self.linear, dtype=float).reshape(-1)
        if self.linear.shape[0] != n:
            raise InvalidArgument("linear term length does not match the hessian")
        self.a_ineq, self.b_ineq = _rows(self.a_ineq, self.b_ineq, n, "inequality")
        self.a_eq, self.b_eq = _rows(self.a_eq, self.b_eq, n, "equality")
        for name in ("lower", "upper"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=float).reshape(-1)
                if v.shape[0] != n:
                    raise InvalidArgument(f"{name} bound length does not match the hessian")
                setattr(self, name, v)

    @property
    def n(self) -> int:
        return self.hessian.shape[0]

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.hessian @ z + self.linear @ z)

    def all_inequalities(self) -> tuple[np.ndarray, np.ndarray]:
        """General rows followed by finite box bounds, all as ``a z >= b``."""
        rows = [self.a_ineq]
        rhs = [self.b_ineq]
        eye = np.eye(self.n)
        if self.lower is not None:
            keep = np.isfinite(self.lower)
            rows.append(eye[keep])
            rhs.append(self.lower[keep])
        if self.upper is not None:
            keep = np.isfinite(self.upper)
            rows.append(-eye[keep])
            rhs.append(-self.upper[keep])
        return np.vstack(rows), np.concatenate(rhs)


def _rows(a, b, n, what):
    if a is None:
        return np.zeros((0, n)), np.zeros(0)
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return np.zeros((0, n)), np.zeros(0)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.shape[1] != n or a.shape[0] != b.shape[0]:
        raise InvalidArgument(f"{what} rows {a.shape} inconsistent with rhs {b.shape} / n={n}")
    return a, b


@dataclass
class QpSolution:
    z: np.ndarray
    objective: float
    status: str
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    eq_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


# Direct LAPACK calls: the problems are tiny and the scipy.linalg wrappers
# cost several times the arithmetic.

def _trsolve(t, b, lower, trans=False):
    """Solve ``t x = b`` (or ``t' x = b``) for triangular ``t``."""
    x, info = dtrtrs(t, b, lower=int(lower), trans=int(trans))
    if info != 0:
        raise SolverError(f"singular triangular factor (LAPACK info {info})")
    return x


def _qr(m):
    """Economic QR of a tall matrix; R is the upper triangle of the second output."""
    packed, tau, _, info = dgeqrf(m)
    if info != 0:
        raise SolverError(f"QR factorisation failed (LAPACK info {info})")
    q, _, info = dorgqr(packed, tau)
    if info != 0:
        raise SolverError(f"QR factorisation failed (LAPACK info {info})")
    k = m.shape[1]
    return q[:, :k], packed[:k, :k]


def _factor(hessian: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cholesky factor, regularised by EPS_PSD on the diagonal when needed."""
    q = hessian
    scale = max(1.0, float(np.max(np.abs(q))))
    if np.max(np.abs(q - q.T)) > 1e-10 * scale:
        raise InvalidArgument("hessian is not symmetric")
    q = 0.5 * (q + q.T)
    try:
        return np.linalg.cholesky(q), q
    except np.linalg.LinAlgError:
        pass
    lam_min = float(np.linalg.eigvalsh(q)[0])
    if lam_min < -1e-9 * scale:
        raise InvalidArgument(f"hessian is not positive semidefinite (min eigenvalue {lam_min:.3e})")
    q = q + (EPS_PSD - min(lam_min, 0.0)) * np.eye(q.shape[0])
    try:
        return np.linalg.cholesky(q), q
    except np.linalg.LinAlgError as exc:
        raise InvalidArgument("hessian could not be regularised to positive definite") from exc


def solve_qp(qp: QpInstance, max_iter: Optional[int] = None, tol: float = 1e-12) -> QpSolution:
    """Global minimiser of a strictly convex QP.

    Returns a solution with ``status == "infeasible"`` when the constraints
    admit no point; raises :class:`SolverError` if the iteration cap is hit.
    """
    n = qp.n
    chol, q = _factor(qp.hessian)
    a_in, b_in = qp.all_inequalities()
    a_eq, b_eq = qp.a_eq, qp.b_eq
    n_in, n_eq = a_in.shape[0], a_eq.shape[0]

    # transformed data: constraint normals L^-1 a, unconstrained optimum -L^-1 c
    abar_in = _trsolve(chol, a_in.T, lower=True).T if n_in else a_in
    abar_eq = _trsolve(chol, a_eq.T, lower=True).T if n_eq else a_eq
    w = -_trsolve(chol, qp.linear, lower=True)
    norms = np.linalg.norm(abar_in, axis=1) if n_in else np.zeros(0)
    norms[norms == 0.0] = 1.0

    # active set: ("e", idx, sign) for equalities, ("i", idx, +1) for inequalities
    active: list[tuple[str, int, float]] = []
    lam: list[float] = []
    if max_iter is None:
        max_iter = 50 * (n + n_in + n_eq) + 50
    it = 0
    pending_eq = list(range(n_eq))

    def normal(entry):
        kind, idx, sign = entry
        return sign * (abar_eq[idx] if kind == "e" else abar_in[idx])

    def rhs(entry):
        kind, idx, sign = entry
        return sign * (b_eq[idx] if kind == "e" else b_in[idx])

    while True:
        if pending_eq:
            idx = pending_eq.pop(0)
            r0 = abar_eq[idx] @ w - b_eq[idx]
            entry = ("e", idx, -1.0 if r0 > 0 else 1.0)
        else:
            if n_in == 0:
                break
            slack = (abar_in @ w - b_in) / norms
            for e in active:
                if e[0] == "i":
                    slack[e[1]] = np.inf
            p = int(np.argmin(slack))
            if slack[p] >= -tol * (1.0 + abs(b_in[p]) / norms[p]):
                break
            entry = ("i", p, 1.0)
        lam_p = 0.0
        npl = normal(entry)
        while True:
            it += 1
            if it > max_iter:
                raise SolverError(f"active-set iteration cap ({max_iter}) exceeded")
            if active:
                q1, rr = _qr(np.array([normal(e) for e in active]).T)
                proj = q1.T @ npl
                step = npl - q1 @ proj
                r = _trsolve(rr, proj, lower=False)
            else:
                step = npl
                r = np.zeros(0)
            # partial step limited by dual feasibility of active inequalities
            t1, k = np.inf, -1
            for j, e in enumerate(active):
                if e[0] == "i" and r[j] > tol:
                    ratio = lam[j] / r[j]
                    if ratio < t1:
                        t1, k = ratio, j
            viol = float(npl @ w - rhs(entry))
            sn = float(step @ npl)
            dependent = not (np.sqrt(step @ step) > 1e-10 * max(1.0, np.sqrt(npl @ npl)) and sn > 0)
            if dependent and entry[0] == "e" and abs(viol) <= 1e-9 * (1.0 + abs(rhs(entry))):
                break  # redundant equality, already implied by the active set
            t2 = np.inf if dependent else max(-viol / sn, 0.0)
            t = min(t1, t2)
            if not np.isfinite(t):
                return _infeasible(qp, chol, w, it)
            if not dependent:
                w = w + t * step
            for j in range(len(active)):
                lam[j] -= t * r[j]
            lam_p += t
            if t2 <= t1:
                active.append(entry)
                lam.append(lam_p)
                break
            del active[k]
            del lam[k]

    z = _trsolve(chol, w, lower=True, trans=True)
    lam_arr = np.array(lam)
    polished = _polish(qp, q, a_in, b_in, active)
    if polished is not None:
        z, lam_arr = polished
    mult = np.zeros(n_in)
    eq_mult = np.zeros(n_eq)
    for e, l in zip(active, lam_arr):
        if e[0] == "i":
            mult[e[1]] = max(l, 0.0)
        else:
            eq_mult[e[1]] = e[2] * l
    h = 0.5 * (qp.hessian + qp.hessian.T)
    obj = float(0.5 * z @ h @ z + qp.linear @ z)
    return QpSolution(z, obj, "optimal", mult, eq_mult, it)


def _polish(qp, q, a_in, b_in, active):
    """Re-solve the KKT system of the final active set in the original coordinates.

    The dual updates accumulate rounding error when ``Q`` is badly conditioned;
    one direct solve removes the drift. Returns None when the polished point
    is not primal and dual feasible, in which case the iterate is kept.
    """
    n = qp.n
    k = len(active)
    rows = np.array([e[2] * (qp.a_eq[e[1]] if e[0] == "e" else a_in[e[1]]) for e in active])
    rhs = np.array([e[2] * (qp.b_eq[e[1]] if e[0] == "e" else b_in[e[1]]) for e in active])
    kkt = np.zeros((n + k, n + k))
    kkt[:n, :n] = q
    if k:
        kkt[:n, n:] = -rows.T
        kkt[n:, :n] = rows
    try:
        sol = np.linalg.solve(kkt, np.concatenate([-qp.linear, rhs]))
    except np.linalg.LinAlgError:
        return None
    z, lam = sol[:n], sol[n:]
    scale = 1.0 + float(np.max(np.abs(b_in), initial=0.0))
    if not np.all(np.isfinite(sol)):
        return None
    if a_in.shape[0] and np.min(a_in @ z - b_in) < -1e-9 * scale:
        return None
    ineq = np.array([e[0] == "i" for e in active], dtype=bool)
    if k and np.any(lam[ineq] < -1e-9 * (1.0 + float(np.max(np.abs(lam), initial=0.0)))):
        return None
    return z, lam


def _infeasible(qp, chol, w, it):
    z = _trsolve(chol, w, lower=True, trans=True)
    return QpSolution(z, np.inf, "infeasible", iterations=it)


@dataclass
class KktReport:
    stationarity: float
    primal: float
    complementarity: float
    dual: float

    @property
    def worst(self) -> float:
        return max(self.stationarity, self.primal, self.complementarity, self.dual)

    def ok(self, tol: float = 1e-6) -> bool:
        return self.worst <= tol


def verify_kkt(qp: QpInstance, sol: QpSolution) -> KktReport:
    """Residuals of the KKT conditions at ``sol`` using its multipliers."""
    a_in, b_in = qp.all_inequalities()
    z = np.asarray(sol.z, dtype=float)
    lam = sol.multipliers if sol.multipliers.size == a_in.shape[0] else np.zeros(a_in.shape[0])
    nu = sol.eq_multipliers if sol.eq_multipliers.size == qp.a_eq.shape[0] else np.zeros(qp.a_eq.shape[0])
    grad = qp.hessian @ z + qp.linear - a_in.T @ lam - qp.a_eq.T @ nu
    slack = a_in @ z - b_in
    eq_res = qp.a_eq @ z - qp.b_eq
    primal = max(float(np.max(-slack, initial=0.0)), float(np.max(np.abs(eq_res), initial=0.0)))
    return KktReport(
        stationarity=float(np.max(np.abs(grad), initial=0.0)),
        primal=primal,
        complementarity=float(np.max(np.abs(lam * slack), initial=0.0)),
        dual=float(np.max(-lam, initial=0.0)),
    )


# --------------------------------------------------------------------------
# allocation layer


@dataclass
class RobotBlock:
    """Continuous part of one robot: ``a z + e alpha_i >= b`` plus a box on ``z``.

    With ``alpha_i = e_m`` fixed the block is the QP returned by :meth:`qp_for`.
    """

    hessian: np.ndarray
    linear: np.ndarray
    a: np.ndarray
    b: np.ndarray
    e: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def qp_for(self, task: int) -> QpInstance:
        return QpInstance(self.hessian, self.linear, self.a, self.b - self.e[:, task],
                          lower=self.lower, upper=self.upper)


@dataclass
class CouplingCost:
    """``weight * ||target - W alpha||_T^2`` with ``alpha`` the flattened N*M matrix."""

    weight: float
    target: np.ndarray
    w: np.ndarray
    t: np.ndarray

    def __call__(self, assignment: Sequence[int]) -> float:
        return float(self.batch(np.asarray([assignment]))[0])

    def batch(self, assignments: np.ndarray) -> np.ndarray:
        """Coupling cost for each row of an (K, N) array of task indices."""
        n_rob = assignments.shape[1]
        m = self.target.shape[0]
        alpha = np.zeros((assignments.shape[0], n_rob * m))
        rows = np.arange(assignments.shape[0])[:, None]
        alpha[rows, np.arange(n_rob) * m + assignments] = 1.0
        resid = self.target[None, :] - alpha @ self.w.T
        return self.weight * np.einsum("ki,ij,kj->k", resid, self.t, resid)


@dataclass
class MiqpInstance:
    blocks: list[RobotBlock]
    coupling: CouplingCost
    n_tasks: int

    @property
    def n_robots(self) -> int:
        return len(self.blocks)

    def block_qp(self, robot: int, task: int) -> QpInstance:
        return self.blocks[robot].qp_for(task)


@dataclass
class MiqpResult:
    assignment: tuple[int, ...]
    alpha: np.ndarray
    solutions: list[QpSolution]
    objective: float
    nodes: int = 0


def _alpha_matrix(assignment, m):
    alpha = np.zeros((len(assignment), m), dtype=int)
    alpha[np.arange(len(assignment)), list(assignment)] = 1
    return alpha


def block_table(miqp: MiqpInstance) -> list[list[QpSolution]]:
    """Solve every (robot, task) block once."""
    return [[solve_qp(miqp.block_qp(i, m)) for m in range(miqp.n_tasks)]
            for i in range(miqp.n_robots)]


def _pick(totals: np.ndarray, combos: np.ndarray) -> int:
    best = float(np.min(totals))
    if not np.isfinite(best):
        raise SolverError("every allocation is infeasible")
    near = np.flatnonzero(totals <= best + TIE_TOL * (1.0 + abs(best)))
    # combos are in lexicographic order, so the first near-tie is the smallest encoding
    return int(near[0])


def solve_miqp(miqp: MiqpInstance, strategy: str = "enumerate",
               max_enumeration: int = 4096) -> MiqpResult:
    """Exact minimiser over one-hot allocations.

    ``strategy`` is ``"enumerate"`` (default) or ``"bnb"`` (best-first
    branch and bound on the continuous relaxation). Ties within ``TIE_TOL``
    go to the lexicographically smallest assignment tuple.
    """
    n, m = miqp.n_robots, miqp.n_tasks
    if n == 0 or m == 0:
        raise InvalidArgument("need at least one robot and one task")
    if strategy == "bnb":
        return _branch_and_bound(miqp)
    if strategy != "enumerate":
        raise InvalidArgument(f"unknown strategy {strategy!r}")
    if m ** n > max_enumeration:
        raise InvalidArgument(f"M^N = {m ** n} exceeds the enumeration limit; use strategy='bnb'")
    table = block_table(miqp)
    cost = np.array([[s.objective if s.optimal else np.inf for s in row] for row in table])
    combos = np.array(list(itertools.product(range(m), repeat=n)), dtype=int)
    totals = miqp.coupling.batch(combos) + cost[np.arange(n)[None, :], combos].sum(axis=1)
    k = _pick(totals, combos)
    assignment = tuple(int(a) for a in combos[k])
    return MiqpResult(assignment, _alpha_matrix(assignment, m),
                      [table[i][a] for i, a in enumerate(assignment)], float(totals[k]),
                      nodes=len(combos))


def _relaxation(miqp: MiqpInstance, prefix: tuple[int, ...]) -> tuple[QpInstance, float]:
    """Joint QP over the free robots with their allocation rows relaxed to the simplex.

    Returns the QP and the constant dropped from its objective.
    """
    n, m = miqp.n_robots, miqp.n_tasks
    free = list(range(len(prefix), n))
    sizes = [miqp.blocks[i].hessian.shape[0] for i in free]
    nz = sum(sizes)
    nv = nz + m * len(free)
    hess = np.zeros((nv, nv))
    lin = np.zeros(nv)
    lower = np.full(nv, -np.inf)
    upper = np.full(nv, np.inf)
    rows, rhs = [], []
    off, aoff = 0, nz
    for blk, sz in zip((miqp.blocks[i] for i in free), sizes):
        hess[off:off + sz, off:off + sz] = blk.hessian
        lin[off:off + sz] = blk.linear
        if blk.lower is not None:
            lower[off:off + sz] = blk.lower
        if blk.upper is not None:
            upper[off:off + sz] = blk.upper
        r = np.zeros((blk.a.shape[0], nv))
        r[:, off:off + sz] = blk.a
        r[:, aoff:aoff + m] = blk.e
        rows.append(r)
        rhs.append(blk.b)
        off += sz
        aoff += m
    lower[nz:] = 0.0
    upper[nz:] = 1.0
    a_eq = np.zeros((len(free), nv))
    for k in range(len(free)):
        a_eq[k, nz + k * m: nz + (k + 1) * m] = 1.0
    cp = miqp.coupling
    fixed = np.zeros(n * m)
    for i, a in enumerate(prefix):
        fixed[i * m + a] = 1.0
    r0 = cp.target - cp.w @ fixed
    w_free = cp.w[:, len(prefix) * m:]
    tsym = 0.5 * (cp.t + cp.t.T)
    hess[nz:, nz:] += 2.0 * cp.weight * w_free.T @ tsym @ w_free
    lin[nz:] += -2.0 * cp.weight * w_free.T @ tsym @ r0
    const = cp.weight * float(r0 @ tsym @ r0)
    qp = QpInstance(hess, lin, np.vstack(rows) if rows else None,
                    np.concatenate(rhs) if rhs else None, lower=lower, upper=upper,
                    a_eq=a_eq, b_eq=np.ones(len(free)))
    return qp, const


def _branch_and_bound(miqp: MiqpInstance) -> MiqpResult:
    n, m = miqp.n_robots, miqp.n_tasks
    table = block_table(miqp)
    cost = np.array([[s.objective if s.optimal else np.inf for s in row] for row in table])
    best = np.inf
    leaves: list[tuple[float, tuple[int, ...]]] = []
    heap: list[tuple[float, tuple[int, ...]]] = [(0.0, ())]
    nodes = 0
    while heap:
        bound, prefix = heapq.heappop(heap)
        if np.isfinite(best) and bound > best + TIE_TOL * (1.0 + abs(best)):
            break
        nodes += 1
        if len(prefix) == n:
            leaves.append((bound, prefix))
            best = min(best, bound)
            continue
        for a in range(m):
            child = prefix + (a,)
            fixed_cost = float(cost[np.arange(len(child)), list(child)].sum())
            if not np.isfinite(fixed_cost):
                continue
            if len(child) == n:
                heapq.heappush(heap, (miqp.coupling(child) + fixed_cost, child))
                continue
            relax, const = _relaxation(miqp, child)
            sol = solve_qp(relax)
            if not sol.optimal:
                continue
            # the PSD regularisation can lift the relaxation slightly; stay conservative
            lb = fixed_cost + sol.objective + const - 1e-7 * (1.0 + abs(sol.objective))
            lb = max(lb, fixed_cost + float(cost[len(child):].min(axis=1).sum()))
            heapq.heappush(heap, (lb, child))
    if not leaves:
        raise SolverError("every allocation is infeasible")
    cut = best + TIE_TOL * (1.0 + abs(best))
    total, assignment = min((p, t) for t, p in leaves if t <= cut)[::-1]
    return MiqpResult(assignment, _alpha_matrix(assignment, m),
                      [table[i][a] for i, a in enumerate(assignment)], total, nodes=nodes)
