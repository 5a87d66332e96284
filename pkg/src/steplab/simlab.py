"""Desk-scale experiment plants and episode runners.

Two plants back the experiments: a perturbed step-to-step pendulum plant for
controller and regulator studies, and a kinematic walking loop that couples
trajectory generation and QP inverse kinematics on the bundled chain model.
The kinematic plant tracks joint references perfectly; its underactuated
horizontal CoM motion follows the template flow, realized as a rigid pivot
about the pinned stance contact (point feet).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ik_qp, kinematics, stepper, template, trajgen
from .neuroreg import NeuralRegulator
from .template import LipParams, LipState

FRONTAL_ERR_NORM_NOTE = "err_norm is the Euclidean norm of the frontal-plane (p, v) pre-impact error"


# ---------------------------------------------------------------------------
# mismatch models
# ---------------------------------------------------------------------------

_MODES = ("constant", "state-affine", "impact-loss", "height-offset")


@dataclass(frozen=True)
class MismatchModel:
    """Discrepancy between the template step map and the plant; one mode active."""

    mode: str = "constant"
    xi: np.ndarray = field(default_factory=lambda: np.zeros(2))
    state_gain: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))
    kappa: float = 0.0
    dz: float = 0.0

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"unknown mismatch mode {self.mode!r}")
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=float).reshape(2))
        object.__setattr__(self, "state_gain", np.asarray(self.state_gain, dtype=float).reshape(2, 2))
        for arr in (self.xi, self.state_gain):
            if not np.all(np.isfinite(arr)):
                raise ValueError("mismatch parameters must be finite")
        if not (math.isfinite(self.kappa) and math.isfinite(self.dz)):
            raise ValueError("mismatch parameters must be finite")

    @staticmethod
    def constant(xi) -> "MismatchModel":
        return MismatchModel(mode="constant", xi=np.asarray(xi, dtype=float))

    @staticmethod
    def state_affine(C, xi=(0.0, 0.0)) -> "MismatchModel":
        return MismatchModel(mode="state-affine", state_gain=np.asarray(C, dtype=float), xi=np.asarray(xi, dtype=float))

    @staticmethod
    def impact_loss(kappa: float) -> "MismatchModel":
        return MismatchModel(mode="impact-loss", kappa=float(kappa))

    @staticmethod
    def height_offset(dz: float) -> "MismatchModel":
        return MismatchModel(mode="height-offset", dz=float(dz))

    @property
    def is_null(self) -> bool:
        return (
            self.mode == "constant"
            and not self.xi.any()
            and not self.state_gain.any()
            and self.kappa == 0.0
            and self.dz == 0.0
        )


def s2s_step(
    params: LipParams,
    sm: template.StepMatrices,
    mismatch: MismatchModel | None,
    x_k: LipState,
    u_k: float,
) -> LipState:
    """Advance the step-to-step plant one step under the active mismatch mode."""
    x = x_k.as_array()
    if mismatch is None or mismatch.is_null:
        return LipState.from_array(sm.A @ x + sm.B * u_k)
    if mismatch.mode == "constant":
        return LipState.from_array(sm.A @ x + sm.B * u_k + mismatch.xi)
    if mismatch.mode == "state-affine":
        return LipState.from_array(sm.A @ x + sm.B * u_k + mismatch.xi + mismatch.state_gain @ x)
    if mismatch.mode == "impact-loss":
        post = sm.a @ x + sm.b * u_k
        post[1] *= 1.0 - mismatch.kappa
        return LipState.from_array(sm.M @ post)
    # height-offset: the plant flows at a different height than the controller assumes
    plant = template.step_matrices(template.make_params(params.g, params.z0 + mismatch.dz, params.T))
    return LipState.from_array(plant.M @ (sm.a @ x + sm.b * u_k))


# ---------------------------------------------------------------------------
# episode logs
# ---------------------------------------------------------------------------

@dataclass
class StepRecord:
    k: int
    stance: str                     # support side during the step
    x_p: float                      # sagittal pre-impact state at step end
    x_v: float
    y_p: float                      # frontal pre-impact state at step end
    y_v: float
    x_star_p: float
    x_star_v: float
    y_star_p: float
    y_star_v: float
    u_x: float
    u_x_star: float
    u_x_fb: float
    u_y: float
    u_y_star: float
    u_y_fb: float
    u_y_adaptive: float
    err_norm: float                 # frontal-plane (p, v) error norm
    nn_weight_norm: float
    avg_vx: float                   # per-step average CoM velocity (displacement / T)
    avg_vy: float
    clamped: int
    touchdown_err: float = float("nan")   # kinematic mode only (m)
    preimpact_q: np.ndarray | None = None


@dataclass
class TickRecord:
    t: float
    k: int
    q: np.ndarray
    q_d: np.ndarray
    com_z_err: float
    com_rot_err: float
    sw_pos_err: float
    sw_rot_err: float
    solve_latency: float            # kept in memory and console summaries only
    kkt_residual: float
    iterations: int


_STEP_COLUMNS = [
    "k", "stance", "x_p", "x_v", "y_p", "y_v", "x_star_p", "x_star_v", "y_star_p", "y_star_v",
    "u_x", "u_x_star", "u_x_fb", "u_y", "u_y_star", "u_y_fb", "u_y_adaptive",
    "err_norm", "nn_weight_norm", "avg_vx", "avg_vy", "clamped", "touchdown_err",
]

_TICK_BASE_COLUMNS = ["t", "k", "com_z_err", "com_rot_err", "sw_pos_err", "sw_rot_err", "kkt_residual", "iterations"]


@dataclass
class EpisodeLog:
    steps: list[StepRecord] = field(default_factory=list)
    ticks: list[TickRecord] = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    joint_names: list[str] = field(default_factory=list)

    def _fmt(self, v) -> str:
        if isinstance(v, float):
            return repr(v)
        return str(v)

    def steps_csv(self) -> str:
        lines = ["# " + FRONTAL_ERR_NORM_NOTE, ",".join(_STEP_COLUMNS)]
        for r in self.steps:
            lines.append(",".join(self._fmt(getattr(r, c)) for c in _STEP_COLUMNS))
        return "\n".join(lines) + "\n"

    def ticks_csv(self) -> str:
        if not self.ticks:
            return ""
        qcols = [f"q_{n}" for n in self.joint_names]
        qdcols = [f"qd_{n}" for n in self.joint_names]
        header = _TICK_BASE_COLUMNS + qcols + qdcols
        lines = [",".join(header)]
        for r in self.ticks:
            vals = [self._fmt(getattr(r, c)) for c in _TICK_BASE_COLUMNS]
            vals += [repr(float(v)) for v in r.q]
            vals += [repr(float(v)) for v in r.q_d]
            lines.append(",".join(vals))
        return "\n".join(lines) + "\n"

    def write(self, out_dir, prefix: str = "episode") -> list[str]:
        from pathlib import Path

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        p = out / f"{prefix}_steps.csv"
        p.write_text(self.steps_csv(), newline="\n")
        written.append(str(p))
        ticks = self.ticks_csv()
        if ticks:
            p = out / f"{prefix}_ticks.csv"
            p.write_text(ticks, newline="\n")
            written.append(str(p))
        return written


# ---------------------------------------------------------------------------
# step-to-step episodes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdaptSettings:
    enabled: bool = False
    hidden: int = 128
    seed: int = 42
    gamma: float = 1e-4


@dataclass(frozen=True)
class S2sConfig:
    g: float = 9.81
    z0: float = 1.0
    T: float = 0.4
    vx_segments: tuple = ((0.0, 50),)   # (commanded v_x, number of steps) per segment
    v_y_d: float = 0.0
    uL_star: float = 0.3
    mismatch_x: MismatchModel | None = None
    mismatch_y: MismatchModel | None = None
    adapt: AdaptSettings = AdaptSettings()
    noise_std: tuple[float, float] = (0.0, 0.0)
    seed: int = 0
    u_limit: float = stepper.DEFAULT_PLACEMENT_LIMIT
    first_landing: str = "R"            # which foot lands at the end of step 0

    @property
    def total_steps(self) -> int:
        return int(sum(n for _, n in self.vx_segments))


def _segment_command(config: S2sConfig, k: int) -> float:
    acc = 0
    for v, n in config.vx_segments:
        acc += n
        if k < acc:
            return float(v)
    return float(config.vx_segments[-1][0])


def make_regulator(config: S2sConfig, params: LipParams) -> NeuralRegulator:
    """Regulator wired for the frontal plane: velocity error nondimensionalized by 1/sigma2."""
    sigma2 = template.orbital_lines(params).sigma2
    return NeuralRegulator(
        hidden=config.adapt.hidden,
        seed=config.adapt.seed,
        gamma=config.adapt.gamma,
        error_weights=(1.0, 1.0 / sigma2),
    )


def run_s2s_episode(config: S2sConfig) -> EpisodeLog:
    """Run both planes of the step-to-step plant under the stepping controller.

    The sagittal plane tracks the one-step targets of the commanded velocity
    schedule; the frontal plane alternates the two-step targets with stance
    side and optionally carries the adaptive regulator. Deterministic for a
    fixed config and seed.
    """
    params = template.make_params(config.g, config.z0, config.T)
    sm = template.step_matrices(params)
    gain = stepper.deadbeat_gain(sm)
    rng = np.random.default_rng(config.seed)
    target_y = template.p2_targets(params, config.v_y_d, config.uL_star)

    # start on the current orbits so transients come only from commands/mismatch
    vx0 = _segment_command(config, 0)
    target_x = template.p1_target(params, vx0)
    x = template.flow(params, LipState(target_x.x_star.p - target_x.u_star, target_x.x_star.v), 0.0)
    parity0 = 0 if config.first_landing == "L" else 1
    y_star0, u_star0 = target_y.for_parity(parity0)
    y = LipState(y_star0.p, y_star0.v)

    regulator = make_regulator(config, params) if config.adapt.enabled else None
    pending = None  # (hidden, next_parity) awaiting the post-step error measurement
    log = EpisodeLog(meta={"mode": "s2s", "config": repr(config)})
    prev_px, prev_py, prev_ux, prev_uy = x.p, y.p, float("nan"), float("nan")

    for k in range(config.total_steps):
        vx_cmd = _segment_command(config, k)
        target_x = template.p1_target(params, vx_cmd)
        parity = parity0 + k

        x_meas = x if config.noise_std[0] == 0.0 else LipState(
            x.p + rng.normal(0.0, config.noise_std[0]), x.v + rng.normal(0.0, config.noise_std[0]))
        y_meas = y if config.noise_std[1] == 0.0 else LipState(
            y.p + rng.normal(0.0, config.noise_std[1]), y.v + rng.normal(0.0, config.noise_std[1]))

        cmd_x = stepper.foot_placement(x_meas, target_x, gain, u_limit=config.u_limit)
        phi = 0.0
        hidden = None
        if regulator is not None:
            hidden = regulator.hidden_activations(y_meas, vx_cmd, config.v_y_d)
            phi = regulator.forward(y_meas, vx_cmd, config.v_y_d, hidden=hidden)
        cmd_y = stepper.foot_placement(y_meas, target_y, gain, phi=phi, parity=parity, u_limit=config.u_limit)

        x = s2s_step(params, sm, config.mismatch_x, x, cmd_x.u)
        y = s2s_step(params, sm, config.mismatch_y, y, cmd_y.u)

        if regulator is not None:
            y_star_next, _ = target_y.for_parity(parity + 1)
            regulator.delta_update(y, y_star_next, hidden)

        y_star_k, _ = target_y.for_parity(parity + 1)
        e_y = y.as_array() - y_star_k.as_array()
        avg_vx = (prev_ux + x.p - prev_px) / params.T if k > 0 else float("nan")
        avg_vy = (prev_uy + y.p - prev_py) / params.T if k > 0 else float("nan")
        prev_px, prev_py, prev_ux, prev_uy = x.p, y.p, cmd_x.u, cmd_y.u

        stance = ("L", "R")[(parity0 + k + 1) % 2]
        target_x_next = template.p1_target(params, _segment_command(config, k + 1))
        log.steps.append(
            StepRecord(
                k=k,
                stance=stance,
                x_p=x.p, x_v=x.v, y_p=y.p, y_v=y.v,
                x_star_p=target_x_next.x_star.p, x_star_v=target_x_next.x_star.v,
                y_star_p=y_star_k.p, y_star_v=y_star_k.v,
                u_x=cmd_x.u, u_x_star=cmd_x.u_star, u_x_fb=cmd_x.feedback,
                u_y=cmd_y.u, u_y_star=cmd_y.u_star, u_y_fb=cmd_y.feedback, u_y_adaptive=cmd_y.adaptive,
                err_norm=float(np.linalg.norm(e_y)),
                nn_weight_norm=regulator.weight_norm() if regulator is not None else 0.0,
                avg_vx=avg_vx, avg_vy=avg_vy,
                clamped=int(cmd_x.saturated) + int(cmd_y.saturated),
            )
        )
    return log


def segment_velocity_errors(log: EpisodeLog, config: S2sConfig, transient: int = 3) -> list[tuple[float, float, float]]:
    """(command, mean per-step average velocity, relative error) per schedule segment."""
    out = []
    start = 0
    for v_cmd, n in config.vx_segments:
        vals = [r.avg_vx for r in log.steps[start + transient : start + n] if math.isfinite(r.avg_vx)]
        mean = float(np.mean(vals)) if vals else float("nan")
        denom = abs(v_cmd) if v_cmd != 0.0 else 1.0
        out.append((float(v_cmd), mean, abs(mean - v_cmd) / denom))
        start += n
    return out


def final_mean_err(log: EpisodeLog, n: int = 100) -> float:
    vals = [r.err_norm for r in log.steps[-n:]]
    return float(np.mean(vals))


# ---------------------------------------------------------------------------
# kinematic walking loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WalkConfig:
    model: str | dict | None = None     # path/dict; None selects the bundled fixture
    g: float = 9.81
    z0: float = 0.85
    T: float = 0.4
    dt: float = 1e-3
    n_steps: int = 10
    v_x_d: float = 0.1
    v_y_d: float = 0.0
    uL_star: float = 0.2
    apex: float = 0.08
    kp: float = 20.0
    komega: float = 10.0
    u_limit: float = stepper.DEFAULT_PLACEMENT_LIMIT
    mismatch_y: MismatchModel | None = None
    adapt: AdaptSettings = AdaptSettings()
    seed: int = 0


def _load_walk_model(config: WalkConfig) -> kinematics.RobotModel:
    if config.model is None:
        return kinematics.load_model(kinematics.bundled_model_path())
    return kinematics.load_model(config.model)


def _crouch_q(model: kinematics.RobotModel, z0: float) -> np.ndarray:
    """Symmetric crouch with level feet on the ground and CoM height z0 (bisection)."""

    def build(a: float) -> np.ndarray:
        q = model.neutral_q()
        for side in ("left", "right"):
            q[model.v_index(f"{side}_hip_pitch") + 1] = a
            q[model.v_index(f"{side}_knee") + 1] = -2.0 * a
            q[model.v_index(f"{side}_toe_pitch") + 1] = a
        fk = kinematics.forward_kinematics(model, q)
        q[2] -= fk.frame_poses["stance_foot"].position[2]  # ground the feet
        return q

    def com_height(a: float) -> float:
        return float(kinematics.forward_kinematics(model, build(a)).com[2])

    lo, hi = 0.0, 1.0
    if not (com_height(hi) <= z0 <= com_height(lo)):
        raise ValueError(f"z0={z0} outside the reachable crouch range "
                         f"[{com_height(hi):.3f}, {com_height(lo):.3f}]")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if com_height(mid) > z0:
            lo = mid
        else:
            hi = mid
    return build(0.5 * (lo + hi))


def _pin_and_pivot(model, q, stance_frame: str, anchor: np.ndarray, com_xy: np.ndarray) -> np.ndarray:
    """Plant contact constraint: pin the stance point and pivot about it so the
    chain's CoM xy lands exactly on the template trajectory (point-foot falling)."""
    q = q.copy()
    for _ in range(4):
        fk = kinematics.forward_kinematics(model, q)
        q[0:3] -= fk.frame_poses[stance_frame].position - anchor
        com = fk.com - (fk.frame_poses[stance_frame].position - anchor)
        err = com_xy - com[:2]
        if max(abs(err[0]), abs(err[1])) < 1e-13:
            return q
        h = com[2] - anchor[2]
        rot = kinematics.quat_from_rotvec([-err[1] / h, err[0] / h, 0.0])
        R = kinematics.quat_to_matrix(rot)
        q[0:3] = anchor + R @ (q[0:3] - anchor)
        q[3:7] = kinematics.quat_normalize(kinematics.quat_mul(rot, q[3:7]))
    fk = kinematics.forward_kinematics(model, q)
    q[0:3] -= fk.frame_poses[stance_frame].position - anchor
    return q


def _canonical_quat(q: np.ndarray) -> np.ndarray:
    out = q.copy()
    if out[3] < 0.0:
        out[3:7] = -out[3:7]
    return out


def run_kinematic_walk(config: WalkConfig) -> EpisodeLog:
    """Couple stepping control, swing trajectories, and QP-IK on the chain model.

    Per tick: predict the pre-impact CoM state, command a placement, evaluate
    task references, solve the velocity QP, integrate the joint reference
    (perfect tracking), then apply the plant's contact constraint: stance
    point pinned and the chain pivoted about it so the horizontal CoM follows
    the template flow exactly (the underactuated falling motion). At t = T
    the stance swaps and the world re-anchors to the new support foot.
    """
    model = _load_walk_model(config)
    params = template.make_params(config.g, config.z0, config.T)
    sm = template.step_matrices(params)
    gain = stepper.deadbeat_gain(sm)
    lines = template.orbital_lines(params, config.v_y_d)
    target_x = template.p1_target(params, config.v_x_d)
    target_y = template.p2_targets(params, config.v_y_d, config.uL_star)
    ticks_per_step = int(round(config.T / config.dt))
    joint_names = (
        ["base_x", "base_y", "base_z", "base_qw", "base_qx", "base_qy", "base_qz"]
        + [j.name for j in model.joints[1:]]
    )

    regulator = None
    if config.adapt.enabled:
        regulator = NeuralRegulator(
            hidden=config.adapt.hidden, seed=config.adapt.seed, gamma=config.adapt.gamma,
            error_weights=(1.0, 1.0 / lines.sigma2),
        )

    q = _crouch_q(model, config.z0)
    stance_frame, swing_frame = "stance_foot", "swing_foot"   # document attaches these L/R
    stance_side = "L"
    anchor = np.zeros(3)
    fk = kinematics.forward_kinematics(model, q)
    q[0:3] -= fk.frame_poses[stance_frame].position - anchor  # world origin at stance foot
    fk = kinematics.forward_kinematics(model, q)

    # plant template states, seeded from the actual kinematic CoM on-orbit;
    # the first landing is the right foot (parity 1)
    parity = 1
    lip_x = LipState(float(fk.com[0] - anchor[0]), lines.sigma1 * config.v_x_d * config.T / 2.0)
    lip_y = LipState(float(fk.com[1] - anchor[1]), (lines.sigma2 * config.uL_star + lines.d2) / 2.0)
    plant_params_y = params
    if config.mismatch_y is not None and config.mismatch_y.mode == "height-offset":
        plant_params_y = template.make_params(config.g, config.z0 + config.mismatch_y.dz, config.T)

    swing_p0 = fk.frame_poses[swing_frame].position - anchor
    passive_idx = model.passive_v_indices()
    passive_val = np.zeros(passive_idx.shape[0])
    # CoM x/y stay free: the plant's falling motion supplies them and the QP
    # must not fight it (point feet cannot push the CoM around)
    com_w = np.array([0.0, 0.0, 1.0, 1.0, 1.0, 1.0])
    sw_w = np.ones(6)
    identity = np.array([1.0, 0.0, 0.0, 0.0])
    log = EpisodeLog(meta={"mode": "walk", "config": repr(config)}, joint_names=joint_names)
    warm = None
    pending_hidden = None
    phi = 0.0

    for k in range(config.n_steps):
        vy_parity = parity + k
        for i in range(ticks_per_step):
            t_in = i * config.dt
            fk = kinematics.forward_kinematics(model, q)
            stance_pos = fk.frame_poses[stance_frame].position
            com_rel = fk.com - stance_pos

            x_meas = LipState(float(com_rel[0]), lip_x.v)
            y_meas = LipState(float(com_rel[1]), lip_y.v)
            x_pred = stepper.predict_preimpact(params, x_meas, t_in)
            y_pred = stepper.predict_preimpact(params, y_meas, t_in)
            cmd_x = stepper.foot_placement(x_pred, target_x, gain, u_limit=config.u_limit)
            cmd_y = stepper.foot_placement(y_pred, target_y, gain, phi=phi, parity=vy_parity,
                                           u_limit=config.u_limit)

            curve = trajgen.make_swing_curve(
                swing_p0 - np.array([0.0, 0.0, config.z0]),
                cmd_x.u, cmd_y.u, config.z0, apex=config.apex, T=config.T,
            )
            sw_pos_c, sw_vel = trajgen.eval_curve(curve, t_in)
            sw_ref = ik_qp.TaskRef(
                position=sw_pos_c + np.array([0.0, 0.0, config.z0]),
                velocity=sw_vel,
                orientation=identity,
                angular_velocity=np.zeros(3),
            )
            com_ref = ik_qp.TaskRef(
                position=np.array([0.0, 0.0, config.z0]),
                velocity=np.zeros(3),
                orientation=identity,
                angular_velocity=np.zeros(3),
            )

            J_com = kinematics.jacobian(model, q, "com", fk)
            J_sw = kinematics.jacobian(model, q, swing_frame, fk)
            J_st = kinematics.jacobian(model, q, stance_frame, fk)
            J_com = J_com.copy()
            J_sw = J_sw.copy()
            J_com[0:3] -= J_st[0:3]        # tasks are relative to the support foot
            J_sw[0:3] -= J_st[0:3]

            com_pose = kinematics.FramePose(position=com_rel, orientation=fk.frame_poses["pelvis"].orientation)
            sw_pose = kinematics.FramePose(
                position=fk.frame_poses[swing_frame].position - stance_pos,
                orientation=fk.frame_poses[swing_frame].orientation,
            )
            T_com = ik_qp.build_task_vector(com_ref, com_pose, gains=(config.kp, config.komega))
            T_sw = ik_qp.build_task_vector(sw_ref, sw_pose, gains=(config.kp, config.komega))
            lb, ub = ik_qp.tick_bounds(model, q, config.dt)
            prob = ik_qp.IkProblem(
                J_com=J_com, T_com=T_com, J_sw=J_sw, T_sw=T_sw, lb=lb, ub=ub, dt=config.dt,
                passive_idx=passive_idx, passive_val=passive_val, w_com=com_w, w_sw=sw_w,
                joint_names=joint_names,
            )
            sol = ik_qp.solve_tick(prob, warm_start=warm)
            warm = sol.qdot_d
            q_d = ik_qp.integrate_reference(model, q, sol.qdot_d, config.dt)

            # plant: perfect joint tracking, template-driven underactuated motion
            lip_x = template.flow(params, lip_x, config.dt)
            lip_y = template.flow(plant_params_y, lip_y, config.dt)
            q = _pin_and_pivot(model, q_d, stance_frame, anchor, np.array([lip_x.p, lip_y.p]))

            log.ticks.append(
                TickRecord(
                    t=k * config.T + t_in + config.dt,
                    k=k,
                    q=q.copy(),
                    q_d=q_d.copy(),
                    com_z_err=float(com_rel[2] - config.z0),
                    com_rot_err=float(np.linalg.norm(kinematics.quat_error(identity, com_pose.orientation))),
                    sw_pos_err=float(np.linalg.norm(sw_ref.position - sw_pose.position)),
                    sw_rot_err=float(np.linalg.norm(kinematics.quat_error(identity, sw_pose.orientation))),
                    solve_latency=sol.solve_time,
                    kkt_residual=sol.kkt_residual,
                    iterations=sol.iterations,
                )
            )

        # --- impact: swap stance, re-anchor, reset template states ---
        fk = kinematics.forward_kinematics(model, q)
        touchdown = fk.frame_poses[swing_frame].position - fk.frame_poses[stance_frame].position
        td_err = float(np.hypot(touchdown[0] - cmd_x.u, touchdown[1] - cmd_y.u))
        pre_q = _canonical_quat(q)

        y_pre = LipState(float(fk.com[1] - fk.frame_poses[stance_frame].position[1]), lip_y.v)
        x_pre = LipState(float(fk.com[0] - fk.frame_poses[stance_frame].position[0]), lip_x.v)
        y_star_pre, _ = target_y.for_parity(vy_parity)
        e_y = y_pre.as_array() - y_star_pre.as_array()
        stance_during = stance_side

        if regulator is not None:
            if pending_hidden is not None:
                regulator.delta_update(y_pre, y_star_pre, pending_hidden)
            pending_hidden = regulator.hidden_activations(y_pre, config.v_x_d, config.v_y_d)
            phi = regulator.forward(y_pre, config.v_x_d, config.v_y_d, hidden=pending_hidden)

        new_anchor_world = fk.frame_poses[swing_frame].position.copy()
        new_anchor_world[2] = anchor[2]
        q[0:3] -= new_anchor_world - anchor
        stance_frame, swing_frame = swing_frame, stance_frame
        stance_side = "R" if stance_side == "L" else "L"
        fk = kinematics.forward_kinematics(model, q)
        q[0:3] -= fk.frame_poses[stance_frame].position - anchor
        fk = kinematics.forward_kinematics(model, q)
        stance_pos = fk.frame_poses[stance_frame].position

        lip_x = LipState(float(fk.com[0] - stance_pos[0]), lip_x.v)
        v_y_new = lip_y.v
        if config.mismatch_y is not None and config.mismatch_y.mode == "impact-loss":
            v_y_new *= 1.0 - config.mismatch_y.kappa
        xi_y = config.mismatch_y.xi if (config.mismatch_y is not None
                                        and config.mismatch_y.mode == "constant") else np.zeros(2)
        lip_y = LipState(float(fk.com[1] - stance_pos[1]) + float(xi_y[0]), v_y_new + float(xi_y[1]))
        swing_p0 = fk.frame_poses[swing_frame].position - anchor
        q = _pin_and_pivot(model, q, stance_frame, anchor, np.array([lip_x.p, lip_y.p]))

        log.steps.append(
            StepRecord(
                k=k, stance=stance_during,
                x_p=x_pre.p, x_v=x_pre.v, y_p=y_pre.p, y_v=y_pre.v,
                x_star_p=target_x.x_star.p, x_star_v=target_x.x_star.v,
                y_star_p=y_star_pre.p, y_star_v=y_star_pre.v,
                u_x=cmd_x.u, u_x_star=cmd_x.u_star, u_x_fb=cmd_x.feedback,
                u_y=cmd_y.u, u_y_star=cmd_y.u_star, u_y_fb=cmd_y.feedback, u_y_adaptive=cmd_y.adaptive,
                err_norm=float(np.linalg.norm(e_y)),
                nn_weight_norm=regulator.weight_norm() if regulator is not None else 0.0,
                avg_vx=float("nan"), avg_vy=float("nan"),
                clamped=int(cmd_x.saturated) + int(cmd_y.saturated),
                touchdown_err=td_err,
                preimpact_q=pre_q,
            )
        )
    return log


def period2_metric(log: EpisodeLog, settle_steps: int = 6) -> float:
    """Largest pre-impact configuration difference between steps two apart, after settling."""
    qs = [r.preimpact_q for r in log.steps if r.preimpact_q is not None]
    diffs = [
        float(np.max(np.abs(qs[k] - qs[k + 2])))
        for k in range(settle_steps, len(qs) - 2)
    ]
    return max(diffs) if diffs else float("nan")


def com_height_band(log: EpisodeLog) -> float:
    """Largest CoM-height deviation from the reference over all ticks."""
    return max(abs(r.com_z_err) for r in log.ticks)


def max_touchdown_err(log: EpisodeLog, skip: int = 2) -> float:
    records = log.steps[skip:] or log.steps
    if not records:
        return float("nan")
    return max(r.touchdown_err for r in records)
