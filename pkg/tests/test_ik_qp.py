import math

import numpy as np
import pytest

from steplab import ik_qp, kinematics as kin
from steplab.ik_qp import IkInfeasibleError, IkProblem, TaskRef, build_task_vector, solve_tick, verify_kkt

from conftest import PENDULUM_DOC

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def projected_gradient_oracle(H, g, lb, ub, tol=1e-12, max_iter=500_000):
    """Brute-force oracle: fixed-step projected gradient descent to stationarity."""
    L = float(np.linalg.eigvalsh(H).max())
    x = np.clip(np.zeros(len(g)), lb, ub)
    for _ in range(max_iter):
        x_next = np.clip(x - (H @ x + g) / L, lb, ub)
        if np.max(np.abs(x_next - x)) < tol:
            return x_next
        x = x_next
    raise AssertionError("oracle failed to converge")


def random_problem(rng, with_passive=False):
    d = int(rng.integers(2, 9))
    prob = IkProblem(
        J_com=rng.normal(size=(6, d)),
        T_com=rng.normal(size=6),
        J_sw=rng.normal(size=(6, d)),
        T_sw=rng.normal(size=6),
        lb=-rng.uniform(0.05, 2.0, size=d),
        ub=rng.uniform(0.05, 2.0, size=d),
        dt=1e-3,
    )
    if with_passive and d >= 3:
        idx = rng.choice(d, size=1)
        prob.passive_idx = np.asarray(idx, dtype=int)
        prob.passive_val = np.array([float(rng.uniform(prob.lb[idx[0]], prob.ub[idx[0]]))])
    return prob


def reduced_quadratic(prob):
    H = prob.reg * np.eye(prob.nv)
    g = np.zeros(prob.nv)
    for J, T, w in ((prob.J_com, prob.T_com, prob.w_com), (prob.J_sw, prob.T_sw, prob.w_sw)):
        H += J.T @ (J * w[:, None])
        g -= J.T @ (w * T)
    return H, g


class TestBuildTaskVector:
    def test_zero_when_on_reference(self):
        ref = TaskRef.stationary([0.1, 0.2, 0.3], IDENTITY)
        current = kin.FramePose(position=np.array([0.1, 0.2, 0.3]), orientation=IDENTITY)
        assert np.array_equal(build_task_vector(ref, current, gains=(10.0, 5.0)), np.zeros(6))

    def test_position_correction(self):
        ref = TaskRef.stationary([0.01, 0.0, 0.0], IDENTITY)
        current = kin.FramePose(position=np.zeros(3), orientation=IDENTITY)
        out = build_task_vector(ref, current, gains=(10.0, 5.0))
        assert np.allclose(out, [0.1, 0, 0, 0, 0, 0], atol=1e-15)

    def test_orientation_correction(self):
        current_quat = np.array([math.cos(math.pi / 4), 0, 0, math.sin(math.pi / 4)])
        ref = TaskRef.stationary(np.zeros(3), IDENTITY)
        current = kin.FramePose(position=np.zeros(3), orientation=current_quat)
        out = build_task_vector(ref, current, gains=(10.0, 5.0))
        expected = -5.0 * kin.quat_error(IDENTITY, current_quat)
        assert np.allclose(out[3:], expected, atol=1e-15)
        assert np.allclose(out[:3], 0.0, atol=0.0)

    def test_feedforward_passthrough(self):
        ref = TaskRef(position=np.zeros(3), velocity=np.array([0.3, 0, 0]),
                      orientation=IDENTITY, angular_velocity=np.array([0, 0, 0.7]))
        current = kin.FramePose(position=np.zeros(3), orientation=IDENTITY)
        out = build_task_vector(ref, current, gains=(10.0, 5.0))
        assert np.allclose(out, [0.3, 0, 0, 0, 0, 0.7], atol=0.0)

    def test_negative_gains_rejected(self):
        ref = TaskRef.stationary(np.zeros(3), IDENTITY)
        current = kin.FramePose(position=np.zeros(3), orientation=IDENTITY)
        with pytest.raises(ValueError):
            build_task_vector(ref, current, gains=(-1.0, 5.0))


class TestSolveTick:
    def test_unconstrained_matches_normal_equations(self):
        rng = np.random.default_rng(0)
        d = 6
        prob = IkProblem(
            J_com=rng.normal(size=(6, d)), T_com=rng.normal(size=6),
            J_sw=rng.normal(size=(6, d)), T_sw=rng.normal(size=6),
            lb=np.full(d, -np.inf), ub=np.full(d, np.inf), dt=1e-3,
        )
        sol = solve_tick(prob)
        H, g = reduced_quadratic(prob)
        oracle = np.linalg.solve(H, -g)
        assert np.max(np.abs(sol.qdot_d - oracle)) < 1e-8
        assert sol.kkt_residual <= 1e-8

    def test_fully_clamped(self):
        rng = np.random.default_rng(1)
        d = 5
        prob = IkProblem(
            J_com=rng.normal(size=(6, d)), T_com=rng.normal(size=6),
            J_sw=rng.normal(size=(6, d)), T_sw=rng.normal(size=6),
            lb=np.zeros(d), ub=np.zeros(d), dt=1e-3,
        )
        sol = solve_tick(prob)
        assert np.array_equal(sol.qdot_d, np.zeros(d))
        expected = float(prob.T_com @ prob.T_com + prob.T_sw @ prob.T_sw)
        assert sol.objective_value == pytest.approx(expected, rel=1e-12)

    def test_scalar_clamp(self):
        # minimize (qdot - 2)^2 with qdot in [-1, 1] -> clamped at 1
        prob = IkProblem(
            J_com=np.vstack([[1.0]] + [[0.0]] * 5), T_com=np.array([2.0, 0, 0, 0, 0, 0]),
            J_sw=np.zeros((6, 1)), T_sw=np.zeros(6),
            lb=np.array([-1.0]), ub=np.array([1.0]), dt=1e-3,
        )
        sol = solve_tick(prob)
        assert sol.qdot_d[0] == 1.0
        assert sol.kkt_residual <= 1e-8

    def test_matches_projected_gradient_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            prob = random_problem(rng)
            sol = solve_tick(prob)
            H, g = reduced_quadratic(prob)
            oracle = projected_gradient_oracle(H, g, prob.lb, prob.ub)
            assert np.max(np.abs(sol.qdot_d - oracle)) < 1e-6
            assert sol.kkt_residual <= 1e-8

    def test_passive_elimination_exact(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            prob = random_problem(rng, with_passive=True)
            if prob.passive_idx.size == 0:
                continue
            sol = solve_tick(prob)
            i = int(prob.passive_idx[0])
            assert sol.qdot_d[i] == prob.passive_val[0]
            assert sol.kkt_residual <= 1e-8

    def test_infeasible_passive_names_joint(self):
        prob = IkProblem(
            J_com=np.zeros((6, 2)), T_com=np.zeros(6),
            J_sw=np.zeros((6, 2)), T_sw=np.zeros(6),
            lb=np.array([-1.0, -1.0]), ub=np.array([1.0, 1.0]), dt=1e-3,
            passive_idx=np.array([1]), passive_val=np.array([3.0]),
            joint_names=["hip", "ankle"],
        )
        with pytest.raises(IkInfeasibleError, match="ankle"):
            solve_tick(prob)

    def test_empty_bounds_rejected(self):
        prob = IkProblem(
            J_com=np.zeros((6, 1)), T_com=np.zeros(6),
            J_sw=np.zeros((6, 1)), T_sw=np.zeros(6),
            lb=np.array([1.0]), ub=np.array([-1.0]), dt=1e-3,
        )
        with pytest.raises(IkInfeasibleError):
            solve_tick(prob)

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        prob = random_problem(rng)
        a = solve_tick(prob)
        b = solve_tick(prob)
        assert np.array_equal(a.qdot_d, b.qdot_d)
        assert a.objective_value == b.objective_value

    def test_row_weights_drop_free_directions(self):
        # zero-weight com xy rows leave those residuals unpenalized
        rng = np.random.default_rng(9)
        d = 4
        prob = IkProblem(
            J_com=rng.normal(size=(6, d)), T_com=rng.normal(size=6),
            J_sw=rng.normal(size=(6, d)), T_sw=rng.normal(size=6),
            lb=np.full(d, -10.0), ub=np.full(d, 10.0), dt=1e-3,
            w_com=np.array([0.0, 0.0, 1.0, 1.0, 1.0, 1.0]),
        )
        sol = solve_tick(prob)
        H = prob.J_com.T @ (prob.J_com * prob.w_com[:, None]) + prob.J_sw.T @ prob.J_sw
        H += prob.reg * np.eye(d)
        g = -(prob.J_com.T @ (prob.w_com * prob.T_com) + prob.J_sw.T @ prob.T_sw)
        assert np.max(np.abs(sol.qdot_d - np.linalg.solve(H, -g))) < 1e-8


class TestVerifyKkt:
    def test_detects_non_solutions(self):
        rng = np.random.default_rng(11)
        prob = random_problem(rng)
        sol = solve_tick(prob)
        assert verify_kkt(prob, sol.qdot_d) <= 1e-8
        perturbed = sol.qdot_d + 1e-3
        assert verify_kkt(prob, np.clip(perturbed, prob.lb, prob.ub)) > 1e-6


class TestDirectionalRegularization:
    def test_reg_extra_steers_redundancy(self):
        # one task row, two dofs: extra cost on dof 1 pushes the motion to dof 0
        J = np.zeros((6, 2))
        J[0] = [1.0, 1.0]
        base = IkProblem(J_com=J, T_com=np.array([1.0, 0, 0, 0, 0, 0]),
                         J_sw=np.zeros((6, 2)), T_sw=np.zeros(6),
                         lb=np.full(2, -10.0), ub=np.full(2, 10.0), dt=1e-3)
        even = solve_tick(base).qdot_d
        assert even[0] == pytest.approx(even[1], abs=1e-9)
        skewed = IkProblem(J_com=J, T_com=np.array([1.0, 0, 0, 0, 0, 0]),
                           J_sw=np.zeros((6, 2)), T_sw=np.zeros(6),
                           lb=np.full(2, -10.0), ub=np.full(2, 10.0), dt=1e-3,
                           reg_extra=np.array([0.0, 1.0]))
        sol = solve_tick(skewed)
        assert sol.qdot_d[0] > 10 * abs(sol.qdot_d[1])
        assert sol.kkt_residual <= 1e-8


class TestClosedLoopTracking:
    def test_feasible_task_residual_below_millimeter(self):
        # velocity-resolved servo on the fixture: smooth reachable references,
        # perfect integration plant; position residuals settle below 1e-3 m.
        # CoM x/y rows stay free, matching how the library poses the problem
        from steplab import simlab, trajgen

        model = kin.load_model(kin.bundled_model_path())
        dt = 1e-3
        q = simlab._crouch_q(model, 0.85)
        fk = kin.forward_kinematics(model, q)
        com0 = fk.com.copy()
        sw0 = fk.frame_poses["swing_foot"].position.copy()
        curve = trajgen.BezierCurve(
            P=np.vstack([sw0, sw0, sw0 + [0.04, -0.01, 0.06], sw0 + [0.04, -0.01, 0.06],
                         sw0 + [0.08, -0.02, 0.0], sw0 + [0.08, -0.02, 0.0]]),
            T=0.4,
        )
        passive_idx = model.passive_v_indices()
        identity = np.array([1.0, 0.0, 0.0, 0.0])
        warm = None
        residuals = []
        for i in range(400):
            t = min(i * dt, curve.T)
            fk = kin.forward_kinematics(model, q)
            sw_p, sw_v = trajgen.eval_curve(curve, t)
            com_ref = ik_qp.TaskRef(position=com0, velocity=np.zeros(3),
                                    orientation=identity, angular_velocity=np.zeros(3))
            sw_ref = ik_qp.TaskRef(position=sw_p, velocity=sw_v,
                                   orientation=identity, angular_velocity=np.zeros(3))
            com_pose = kin.FramePose(position=fk.com, orientation=fk.frame_poses["pelvis"].orientation)
            sw_pose = fk.frame_poses["swing_foot"]
            lb, ub = ik_qp.tick_bounds(model, q, dt)
            prob = IkProblem(
                J_com=kin.jacobian(model, q, "com", fk),
                T_com=build_task_vector(com_ref, com_pose),
                J_sw=kin.jacobian(model, q, "swing_foot", fk),
                T_sw=build_task_vector(sw_ref, sw_pose),
                lb=lb, ub=ub,
                dt=dt, passive_idx=passive_idx, passive_val=np.zeros(passive_idx.size),
                w_com=np.array([0.0, 0.0, 1.0, 1.0, 1.0, 1.0]),
            )
            sol = solve_tick(prob, warm_start=warm)
            warm = sol.qdot_d
            q = ik_qp.integrate_reference(model, q, sol.qdot_d, dt)
            residuals.append(max(abs(fk.com[2] - com_ref.position[2]),
                                 np.linalg.norm(sw_pose.position - sw_ref.position)))
        assert max(residuals[100:]) <= 1e-3


class TestIntegrateReference:
    def test_zero_velocity_identity(self):
        model = kin.load_model(PENDULUM_DOC)
        q = model.neutral_q()
        assert np.array_equal(ik_qp.integrate_reference(model, q, np.zeros(model.nv), 1e-3), q)

    def test_scalar_joint_euler_step(self):
        model = kin.load_model(PENDULUM_DOC)
        q = model.neutral_q()
        q[7] = 0.1
        qdot = np.zeros(model.nv)
        qdot[6] = 1.0
        out = ik_qp.integrate_reference(model, q, qdot, 1e-3)
        assert out[7] == pytest.approx(0.101, abs=1e-15)

    def test_position_limit_clamp(self):
        model = kin.load_model(PENDULUM_DOC)
        q = model.neutral_q()
        q[7] = 3.0                      # at the upper limit
        qdot = np.zeros(model.nv)
        qdot[6] = 5.0
        out = ik_qp.integrate_reference(model, q, qdot, 1e-3)
        assert out[7] == 3.0

    def test_quaternion_renormalized(self):
        model = kin.load_model(PENDULUM_DOC)
        q = model.neutral_q()
        qdot = np.zeros(model.nv)
        qdot[3:6] = [0.4, -0.2, 1.0]
        out = ik_qp.integrate_reference(model, q, qdot, 1e-3)
        assert abs(np.linalg.norm(out[3:7]) - 1.0) < 1e-12

    def test_tick_bounds_feasible_inside_limits(self):
        model = kin.load_model(PENDULUM_DOC)
        q = model.neutral_q()
        lb, ub = ik_qp.tick_bounds(model, q, 1e-3)
        assert np.all(lb <= 0.0) and np.all(ub >= 0.0)
        assert lb[6] == -10.0 and ub[6] == 10.0       # velocity-limited, not position-limited
        q[7] = 2.9995
        lb, ub = ik_qp.tick_bounds(model, q, 1e-3)
        assert ub[6] == pytest.approx((3.0 - 2.9995) / 1e-3)
