"""Velocity-level inverse kinematics as a box-constrained QP, one solve per control tick.

The decision variable is the desired generalized velocity. Passive joints are
eliminated (their velocities are fixed to measured values), position limits
become velocity bounds through the Euler step, and the two task residuals are
minimized in the squared sense with a small Tikhonov term for uniqueness near
singular Jacobians.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .kinematics import FramePose, RobotModel, quat_error, quat_from_rotvec, quat_mul, quat_normalize, split_q

DEFAULT_REGULARIZATION = 1e-8
DEFAULT_KP = 20.0
DEFAULT_KOMEGA = 10.0


class IkInfeasibleError(RuntimeError):
    """Bounds and passive equalities admit no solution; the message names the joint."""


@dataclass(frozen=True)
class TaskRef:
    """Reference pose and feed-forward velocity for one task frame."""

    position: np.ndarray
    velocity: np.ndarray
    orientation: np.ndarray
    angular_velocity: np.ndarray

    @staticmethod
    def stationary(position, orientation) -> "TaskRef":
        return TaskRef(
            position=np.asarray(position, dtype=float).reshape(3),
            velocity=np.zeros(3),
            orientation=quat_normalize(orientation),
            angular_velocity=np.zeros(3),
        )


@dataclass
class IkProblem:
    """One tick's QP data: stacked task pairs, box bounds, fixed passive entries."""

    J_com: np.ndarray
    T_com: np.ndarray
    J_sw: np.ndarray
    T_sw: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    dt: float
    passive_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    passive_val: np.ndarray = field(default_factory=lambda: np.zeros(0))
    w_com: np.ndarray = field(default_factory=lambda: np.ones(6))
    w_sw: np.ndarray = field(default_factory=lambda: np.ones(6))
    reg: float = DEFAULT_REGULARIZATION
    reg_extra: np.ndarray | None = None      # per-dof addition for redundancy resolution
    joint_names: list[str] | None = None

    @property
    def nv(self) -> int:
        return self.J_com.shape[1]

    def _name(self, idx: int) -> str:
        if self.joint_names and 0 <= idx < len(self.joint_names):
            return self.joint_names[idx]
        return f"dof[{idx}]"


@dataclass(frozen=True)
class IkSolution:
    qdot_d: np.ndarray
    kkt_residual: float
    objective_value: float
    iterations: int
    solve_time: float
    converged: bool = True


def build_task_vector(ref: TaskRef, current: FramePose, gains=(DEFAULT_KP, DEFAULT_KOMEGA)) -> np.ndarray:
    """Reference velocity plus proportional corrections.

    Rows 0-2: v_d + K_p (p_d - p). Rows 3-5: w_d - K_omega * e with e the
    quaternion orientation error of (desired, current). Gains may be scalars
    or per-axis 3-vectors (diagonal, nonnegative).
    """
    kp = np.asarray(gains[0], dtype=float) * np.ones(3)
    kw = np.asarray(gains[1], dtype=float) * np.ones(3)
    if np.any(kp < 0.0) or np.any(kw < 0.0):
        raise ValueError("task gains must be nonnegative")
    lin = ref.velocity + kp * (ref.position - current.position)
    ang = ref.angular_velocity - kw * quat_error(ref.orientation, current.orientation)
    return np.concatenate([lin, ang])


# ---------------------------------------------------------------------------
# box-constrained QP core (projected Newton with free-set solves)
# ---------------------------------------------------------------------------

def solve_box_qp(H, g, lb, ub, x0=None, max_iter: int = 100, grad_tol: float = 1e-11):
    """Minimize 0.5 x^T (2H) x + ... i.e. f with gradient H x + g over the box [lb, ub].

    H must be symmetric positive definite. Returns (x, iterations, converged).
    The active set is re-estimated from the sign of the gradient at the bounds
    each iteration and the free block is solved exactly, with a projected
    Armijo backtracking step.
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    n = g.shape[0]
    x = np.clip(np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy(), lb, ub)

    def objective(v):
        return float(v @ H @ v / 2.0 + g @ v)

    fx = objective(x)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        grad = H @ x + g
        at_lo = x <= lb + 1e-12
        at_hi = x >= ub - 1e-12
        clamped = (at_lo & (grad > 0.0)) | (at_hi & (grad < 0.0))
        free = ~clamped
        if not free.any():
            converged = True
            break
        if np.max(np.abs(grad[free])) < grad_tol:
            converged = True
            break
        rhs = -(g[free] + H[np.ix_(free, clamped)] @ x[clamped])
        x_free = np.linalg.solve(H[np.ix_(free, free)], rhs)
        dx = np.zeros(n)
        dx[free] = x_free - x[free]
        accepted = False
        alpha = 1.0
        for _ in range(30):
            xc = np.clip(x + alpha * dx, lb, ub)
            fc = objective(xc)
            if fc <= fx + 0.1 * (grad @ (xc - x)):
                accepted = True
                break
            alpha *= 0.5
        if not accepted or np.max(np.abs(xc - x)) < 1e-15:
            x = xc if accepted else x
            converged = np.max(np.abs(grad[free])) < 1e-8
            break
        x, fx = xc, fc
    # snap to bounds and polish the final free set so stationarity is exact
    x[np.abs(x - lb) < 1e-12] = lb[np.abs(x - lb) < 1e-12]
    x[np.abs(x - ub) < 1e-12] = ub[np.abs(x - ub) < 1e-12]
    grad = H @ x + g
    clamped = ((x <= lb) & (grad > 0.0)) | ((x >= ub) & (grad < 0.0))
    free = ~clamped
    if free.any():
        rhs = -(g[free] + H[np.ix_(free, clamped)] @ x[clamped])
        x[free] = np.linalg.solve(H[np.ix_(free, free)], rhs)
        np.clip(x, lb, ub, out=x)
    return x, it, converged


def _assemble(prob: IkProblem):
    """Reduced (free-variable) quadratic data after passive elimination."""
    nv = prob.nv
    free = np.ones(nv, dtype=bool)
    free[prob.passive_idx] = False
    x_fix = np.zeros(nv)
    x_fix[prob.passive_idx] = prob.passive_val
    reg_diag = np.full(nv, prob.reg)
    if prob.reg_extra is not None:
        reg_diag = reg_diag + np.asarray(prob.reg_extra, dtype=float).reshape(nv)
    H = np.diag(reg_diag[free])
    g = np.zeros(int(free.sum()))
    for J, T, w in ((prob.J_com, prob.T_com, prob.w_com), (prob.J_sw, prob.T_sw, prob.w_sw)):
        Jw = J * w[:, None]
        T_eff = T - J[:, ~free] @ x_fix[~free]
        Jf = J[:, free]
        H += Jf.T @ (Jw[:, free])
        g -= Jf.T @ (w * T_eff)
    return H, g, free, x_fix


def solve_tick(prob: IkProblem, warm_start: np.ndarray | None = None) -> IkSolution:
    """Solve one control tick; deterministic for identical problems.

    Raises IkInfeasibleError when a passive value lies outside its bounds or a
    bound interval is empty. On hitting the iteration cap the best iterate is
    returned with ``converged=False``.
    """
    t0 = time.perf_counter()
    if not (math.isfinite(prob.dt) and prob.dt > 0.0):
        raise ValueError(f"tick must be finite and > 0, got {prob.dt!r}")
    for i in range(prob.nv):
        if prob.lb[i] > prob.ub[i]:
            raise IkInfeasibleError(f"{prob._name(i)}: empty bound interval [{prob.lb[i]}, {prob.ub[i]}]")
    for i, val in zip(prob.passive_idx, prob.passive_val):
        if not prob.lb[i] - 1e-12 <= val <= prob.ub[i] + 1e-12:
            raise IkInfeasibleError(
                f"{prob._name(int(i))}: passive velocity {val} outside bounds "
                f"[{prob.lb[i]}, {prob.ub[i]}]"
            )
    H, g, free, x_fix = _assemble(prob)
    x0 = None if warm_start is None else np.asarray(warm_start, dtype=float)[free]
    xf, iterations, converged = solve_box_qp(H, g, prob.lb[free], prob.ub[free], x0=x0)
    qdot = x_fix.copy()
    qdot[free] = xf
    reg_diag = np.full(prob.nv, prob.reg)
    if prob.reg_extra is not None:
        reg_diag = reg_diag + np.asarray(prob.reg_extra, dtype=float).reshape(prob.nv)
    obj = (
        float(prob.w_com @ (prob.J_com @ qdot - prob.T_com) ** 2)
        + float(prob.w_sw @ (prob.J_sw @ qdot - prob.T_sw) ** 2)
        + float(reg_diag @ (qdot * qdot))
    )
    residual = verify_kkt(prob, qdot)
    return IkSolution(
        qdot_d=qdot,
        kkt_residual=residual,
        objective_value=obj,
        iterations=iterations,
        solve_time=time.perf_counter() - t0,
        converged=converged,
    )


def verify_kkt(prob: IkProblem, qdot) -> float:
    """Independent stationarity/complementarity check of a candidate solution.

    Recomputes the gradient from the problem data and returns the largest
    violation: gradient magnitude on strictly-interior coordinates, wrong-sign
    gradient at active bounds, bound overshoot, and passive-value mismatch.
    """
    qdot = np.asarray(qdot, dtype=float).reshape(prob.nv)
    reg_diag = np.full(prob.nv, prob.reg)
    if prob.reg_extra is not None:
        reg_diag = reg_diag + np.asarray(prob.reg_extra, dtype=float).reshape(prob.nv)
    grad = 2.0 * reg_diag * qdot
    for J, T, w in ((prob.J_com, prob.T_com, prob.w_com), (prob.J_sw, prob.T_sw, prob.w_sw)):
        grad = grad + 2.0 * (J.T @ (w * (J @ qdot - T)))
    worst = 0.0
    passive = set(int(i) for i in prob.passive_idx)
    for i, val in zip(prob.passive_idx, prob.passive_val):
        worst = max(worst, abs(qdot[int(i)] - val))
    for i in range(prob.nv):
        if i in passive:
            continue
        worst = max(worst, qdot[i] - prob.ub[i], prob.lb[i] - qdot[i])
        at_lo = abs(qdot[i] - prob.lb[i]) < 1e-11
        at_hi = abs(qdot[i] - prob.ub[i]) < 1e-11
        if at_lo and at_hi:
            continue
        if at_lo:
            worst = max(worst, -grad[i])
        elif at_hi:
            worst = max(worst, grad[i])
        else:
            worst = max(worst, abs(grad[i]))
    return float(worst)


# ---------------------------------------------------------------------------
# reference integration
# ---------------------------------------------------------------------------

def integrate_reference(model: RobotModel, q, qdot_d, dt: float) -> np.ndarray:
    """Euler-step the reference: q^d = q + qdot_d * dt.

    Joint angles are clamped into their position limits (matching the QP's
    position constraint) and the floating-base quaternion is renormalized
    after integrating the world-frame angular velocity.
    """
    q = np.asarray(q, dtype=float).reshape(model.nq)
    qdot_d = np.asarray(qdot_d, dtype=float).reshape(model.nv)
    pos, quat, theta = split_q(model, q)
    new = np.empty(model.nq)
    new[0:3] = pos + qdot_d[0:3] * dt
    new[3:7] = quat_normalize(quat_mul(quat_from_rotvec(qdot_d[3:6] * dt), quat))
    lo, hi = model.position_bounds()
    new[7:] = np.clip(theta + qdot_d[6:] * dt, lo[6:], hi[6:])
    return new


def tick_bounds(model: RobotModel, q, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Velocity bounds intersected with the Euler-step image of the position limits."""
    q = np.asarray(q, dtype=float).reshape(model.nq)
    lo_v, hi_v = model.velocity_bounds()
    lo_p, hi_p = model.position_bounds()
    theta_v = np.concatenate([np.zeros(6), q[7:]])
    lb = np.maximum(lo_v, (lo_p - theta_v) / dt)
    ub = np.minimum(hi_v, (hi_p - theta_v) / dt)
    return lb, ub
