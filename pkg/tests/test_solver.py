from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_feasible_qp
from oracles import brute_force_miqp, joint_qp, projected_gradient_qp
from robust_mrta.errors import InvalidArgument, SolverError
from robust_mrta.solver import (CouplingCost, MiqpInstance, QpInstance, RobotBlock, solve_miqp,
                                solve_qp, verify_kkt)


def test_halfspace_projection():
    sol = solve_qp(QpInstance(2 * np.eye(3), np.zeros(3), [[1, 0, 0]], [1]))
    np.testing.assert_allclose(sol.z, [1, 0, 0], atol=1e-12)
    assert sol.objective == pytest.approx(1.0)


def test_scaled_halfspace():
    sol = solve_qp(QpInstance(2 * np.eye(2), np.zeros(2), [[2, 0]], [1]))
    np.testing.assert_allclose(sol.z, [0.5, 0], atol=1e-12)
    assert sol.objective == pytest.approx(0.25)


def test_unconstrained_zero():
    sol = solve_qp(QpInstance(np.eye(4), np.zeros(4)))
    np.testing.assert_array_equal(sol.z, np.zeros(4))
    assert sol.optimal


def test_equality_constraints():
    # min |z|^2 s.t. z1 + z2 = 1 -> (0.5, 0.5)
    sol = solve_qp(QpInstance(2 * np.eye(2), np.zeros(2), a_eq=[[1, 1]], b_eq=[1]))
    np.testing.assert_allclose(sol.z, [0.5, 0.5])
    assert verify_kkt(QpInstance(2 * np.eye(2), np.zeros(2), a_eq=[[1, 1]], b_eq=[1]), sol).ok()


def test_infeasible_reported():
    qp = QpInstance(np.eye(2), np.zeros(2), [[1, 0], [-1, 0]], [1, 0])
    assert solve_qp(qp).status == "infeasible"
    boxed = QpInstance(np.eye(1), np.zeros(1), [[1.0]], [2.0], lower=[-1.0], upper=[1.0])
    assert solve_qp(boxed).status == "infeasible"


def test_non_psd_hessian_rejected():
    with pytest.raises(InvalidArgument):
        solve_qp(QpInstance(np.diag([1.0, -1.0]), np.zeros(2)))
    with pytest.raises(InvalidArgument):
        solve_qp(QpInstance([[1.0, 2.0], [0.0, 1.0]], np.zeros(2)))


def test_psd_hessian_regularised():
    # zero curvature in the second coordinate, bounded by the box
    qp = QpInstance(np.diag([2.0, 0.0]), [0.0, 1.0], lower=[-1, -1], upper=[1, 1])
    sol = solve_qp(qp)
    np.testing.assert_allclose(sol.z, [0, -1], atol=1e-6)


def test_iteration_cap():
    rng = np.random.default_rng(5)
    qp = random_feasible_qp(rng, n=8, m=20)
    with pytest.raises(SolverError):
        solve_qp(qp, max_iter=1)


def test_dimension_checks():
    with pytest.raises(InvalidArgument):
        QpInstance(np.eye(2), np.zeros(3))
    with pytest.raises(InvalidArgument):
        QpInstance(np.eye(2), np.zeros(2), [[1, 0, 0]], [1])


def test_kkt_detects_perturbation():
    rng = np.random.default_rng(2)
    qp = random_feasible_qp(rng, n=5, m=6)
    sol = solve_qp(qp)
    assert verify_kkt(qp, sol).ok(1e-6)
    bad = type(sol)(sol.z + 0.1, sol.objective, "optimal", sol.multipliers, sol.eq_multipliers)
    assert verify_kkt(qp, bad).stationarity > 1e-3


def test_matches_projected_gradient_on_small_batch():
    rng = np.random.default_rng(11)
    qps = [random_feasible_qp(rng, n=5) for _ in range(10)]
    ref = projected_gradient_qp(qps, iters=8000)
    for qp, z in zip(qps, ref):
        sol = solve_qp(qp)
        assert sol.objective == pytest.approx(qp.objective(z), rel=1e-5, abs=1e-5)


def test_not_worse_than_random_feasible_points():
    rng = np.random.default_rng(3)
    qp = random_feasible_qp(rng, n=4, m=3)
    sol = solve_qp(qp)
    a, b = qp.all_inequalities()
    pts = rng.uniform(qp.lower, qp.upper, size=(20000, 4))
    feasible = pts[np.all(pts @ a.T >= b, axis=1)][:1000]
    assert len(feasible) > 10
    assert all(sol.objective <= qp.objective(p) + 1e-12 for p in feasible)


@given(st.integers(0, 10_000))
def test_deterministic(seed):
    rng = np.random.default_rng(seed)
    qp = random_feasible_qp(rng, n=int(rng.integers(2, 7)), m=int(rng.integers(1, 8)))
    a, b = solve_qp(qp), solve_qp(qp)
    assert a.z.tobytes() == b.z.tobytes()
    assert verify_kkt(qp, a).ok(1e-6)


# ---------------------------------------------------------------- MIQP


def random_miqp(rng, n_robots, n_tasks, weight=None):
    blocks = []
    for _ in range(n_robots):
        nz = n_tasks + 2
        h = np.diag(np.concatenate([[2.0, 2.0], 2.0 * rng.uniform(0.0, 1.0, n_tasks)]))
        rows = n_tasks + 2
        a = rng.normal(size=(rows, nz))
        a[:n_tasks, 2:] = np.eye(n_tasks)  # slack columns keep every allocation feasible
        e = rng.normal(size=(rows, n_tasks))
        lower = np.concatenate([[-1, -1], np.zeros(n_tasks)])
        upper = np.concatenate([[1, 1], np.full(n_tasks, 50.0)])
        # every task's rows hold at an interior point, so each allocation is feasible
        z0 = rng.uniform(lower + 0.1, np.minimum(upper, 2.0) - 0.1)
        b = np.min(a @ z0 + e.T, axis=0) - rng.uniform(0.0, 1.0, rows)
        blocks.append(RobotBlock(h, np.zeros(nz), a, b, e, lower, upper))
    w = np.zeros((n_tasks, n_robots * n_tasks))
    s = rng.uniform(0.0, 1.0, size=(n_robots, n_tasks))
    for i in range(n_robots):
        for j in range(n_tasks):
            w[j, i * n_tasks + j] = s[i, j] / n_robots
    cp = CouplingCost(weight if weight is not None else rng.uniform(1, 100),
                      np.full(n_tasks, 1.0 / n_tasks), w, np.eye(n_tasks))
    return MiqpInstance(blocks, cp, n_tasks)


def test_single_robot_single_task_is_block_qp():
    rng = np.random.default_rng(0)
    miqp = random_miqp(rng, 1, 1)
    res = solve_miqp(miqp)
    sol = solve_qp(miqp.block_qp(0, 0))
    assert res.assignment == (0,)
    assert res.objective == pytest.approx(sol.objective + miqp.coupling((0,)))


def test_symmetric_tie_goes_to_lexicographic_first():
    blk = RobotBlock(2 * np.eye(1), np.zeros(1), np.zeros((1, 1)), np.zeros(1), np.zeros((1, 2)))
    w = np.array([[0.5, 0, 0.5, 0], [0, 0.5, 0, 0.5]])
    miqp = MiqpInstance([blk, blk], CouplingCost(10.0, np.array([0.5, 0.5]), w, np.eye(2)), 2)
    res = solve_miqp(miqp)
    assert res.assignment == (0, 1)
    assert solve_miqp(miqp, strategy="bnb").assignment == (0, 1)


@pytest.mark.parametrize("seed", range(12))
def test_enumeration_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n, m = [(1, 3), (2, 2), (2, 3), (3, 2), (3, 3), (4, 2)][seed % 6]
    miqp = random_miqp(rng, n, m)
    res = solve_miqp(miqp)
    ref_a, ref_obj = brute_force_miqp(miqp)
    assert res.assignment == ref_a
    assert res.objective == pytest.approx(ref_obj, rel=1e-8, abs=1e-8)


@pytest.mark.parametrize("seed", range(8))
def test_branch_and_bound_matches_enumeration(seed):
    rng = np.random.default_rng(100 + seed)
    n, m = [(2, 2), (3, 2), (2, 3), (3, 3)][seed % 4]
    miqp = random_miqp(rng, n, m)
    a = solve_miqp(miqp)
    b = solve_miqp(miqp, strategy="bnb")
    assert a.assignment == b.assignment
    assert a.objective == pytest.approx(b.objective, rel=1e-9, abs=1e-9)


def test_decomposition_equals_joint_qp():
    rng = np.random.default_rng(7)
    for _ in range(10):
        miqp = random_miqp(rng, 3, 2)
        for a in itertools.product(range(2), repeat=3):
            joint = solve_qp(joint_qp(miqp, a))
            parts = sum(solve_qp(miqp.block_qp(i, t)).objective for i, t in enumerate(a))
            assert joint.objective == pytest.approx(parts, rel=1e-8, abs=1e-8)


def test_enumeration_limit_and_strategy_validation():
    rng = np.random.default_rng(1)
    miqp = random_miqp(rng, 2, 2)
    with pytest.raises(InvalidArgument):
        solve_miqp(miqp, max_enumeration=3)
    with pytest.raises(InvalidArgument):
        solve_miqp(miqp, strategy="magic")


def test_all_infeasible_raises():
    blk = RobotBlock(np.eye(1), np.zeros(1), np.array([[1.0], [-1.0]]), np.array([1.0, 0.0]),
                     np.zeros((2, 1)))
    miqp = MiqpInstance([blk], CouplingCost(1.0, np.ones(1), np.ones((1, 1)), np.eye(1)), 1)
    with pytest.raises(SolverError):
        solve_miqp(miqp)


def test_coupling_batch_matches_scalar():
    rng = np.random.default_rng(4)
    miqp = random_miqp(rng, 3, 3)
    combos = np.array(list(itertools.product(range(3), repeat=3)))
    batch = miqp.coupling.batch(combos)
    for c, v in zip(combos, batch):
        alpha = np.zeros(9)
        alpha[np.arange(3) * 3 + c] = 1
        r = miqp.coupling.target - miqp.coupling.w @ alpha
        assert v == pytest.approx(miqp.coupling.weight * r @ r)
