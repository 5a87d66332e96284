"""Floating-base kinematic chain: model schema, forward kinematics, geometric Jacobians.

Generalized coordinates q = [base xyz, base quaternion wxyz, joint angles...]
(nq = 7 + n_rev); velocities v = [base linear, base angular (world frame),
joint rates...] (nv = 6 + n_rev). Only the kinematic structure is modeled;
there is no dynamics anywhere in this package.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

FLOATING_BASE = "floating-base"
REVOLUTE = "revolute"
SCHEMA_VERSION = 1


class ModelSchemaError(ValueError):
    """A model document violates the schema; the message carries the offending path."""


# ---------------------------------------------------------------------------
# quaternions (wxyz: scalar part first)
# ---------------------------------------------------------------------------

def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(4)
    n = float(np.linalg.norm(q))
    if n < 1e-12:
        raise ValueError("cannot normalize a near-zero quaternion")
    return q / n


def quat_mul(q1, q2) -> np.ndarray:
    w1, x1, y1, z1 = np.asarray(q1, dtype=float).reshape(4)
    w2, x2, y2, z2 = np.asarray(q2, dtype=float).reshape(4)
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = quat_normalize(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_rotvec(rv) -> np.ndarray:
    rv = np.asarray(rv, dtype=float).reshape(3)
    angle = float(np.linalg.norm(rv))
    if angle < 1e-12:
        return np.array([1.0, rv[0] / 2.0, rv[1] / 2.0, rv[2] / 2.0])
    axis = rv / angle
    half = angle / 2.0
    return np.concatenate([[math.cos(half)], math.sin(half) * axis])


def quat_error(desired, current) -> np.ndarray:
    """Orientation error eta_d*eps - eta*eps_d + eps_d x eps (zero iff equal up to sign).

    Inputs more than 1e-6 away from unit norm are normalized and flagged.
    """
    desired = np.asarray(desired, dtype=float).reshape(4)
    current = np.asarray(current, dtype=float).reshape(4)
    for name, q in (("desired", desired), ("current", current)):
        if abs(np.linalg.norm(q) - 1.0) > 1e-6:
            log.warning("%s quaternion norm %.8f != 1; normalizing", name, np.linalg.norm(q))
    desired = quat_normalize(desired)
    current = quat_normalize(current)
    eta_d, eps_d = desired[0], desired[1:]
    eta, eps = current[0], current[1:]
    return eta_d * eps - eta * eps_d + np.cross(eps_d, eps)


def rpy_to_matrix(rpy) -> np.ndarray:
    """Rotation from fixed-axis roll-pitch-yaw (Rz @ Ry @ Rx)."""
    r, p, y = np.asarray(rpy, dtype=float).reshape(3)
    cr, sr = math.cos(r), math.sin(r)
    cp, sp = math.cos(p), math.sin(p)
    cy, sy = math.cos(y), math.sin(y)
    Rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    Ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    Rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Joint:
    name: str
    parent: int                      # index into the joint list; -1 for the root
    joint_type: str                  # FLOATING_BASE or REVOLUTE
    origin_xyz: np.ndarray
    origin_rpy: np.ndarray
    axis: np.ndarray
    position_limits: tuple[float, float]
    velocity_limits: tuple[float, float]
    passive: bool
    mass: float
    com: np.ndarray


@dataclass(frozen=True)
class FrameDef:
    parent: str                      # joint name the frame is rigidly attached to
    xyz: np.ndarray
    rpy: np.ndarray


@dataclass(frozen=True)
class FramePose:
    """World pose: position and unit quaternion (scalar part first)."""

    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        if abs(np.linalg.norm(self.orientation) - 1.0) > 1e-10:
            raise ValueError("FramePose quaternion must be unit norm")


@dataclass(frozen=True)
class RobotModel:
    name: str
    joints: list[Joint]
    frames: dict[str, FrameDef]
    source: dict = field(repr=False, default_factory=dict)

    @property
    def n_rev(self) -> int:
        return len(self.joints) - 1

    @property
    def nq(self) -> int:
        return 7 + self.n_rev

    @property
    def nv(self) -> int:
        return 6 + self.n_rev

    @property
    def total_mass(self) -> float:
        return float(sum(j.mass for j in self.joints))

    def joint_index(self, name: str) -> int:
        for i, j in enumerate(self.joints):
            if j.name == name:
                return i
        raise KeyError(name)

    def v_index(self, name: str) -> int:
        """Velocity-vector index of a revolute joint."""
        i = self.joint_index(name)
        if i == 0:
            raise ValueError("the floating base spans velocity indices 0..5")
        return 5 + i

    def passive_v_indices(self) -> np.ndarray:
        return np.array([5 + i for i, j in enumerate(self.joints) if i > 0 and j.passive], dtype=int)

    def velocity_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.full(self.nv, -np.inf)
        hi = np.full(self.nv, np.inf)
        for i, j in enumerate(self.joints[1:], start=1):
            lo[5 + i], hi[5 + i] = j.velocity_limits
        return lo, hi

    def position_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-velocity-index position limits (base entries unbounded)."""
        lo = np.full(self.nv, -np.inf)
        hi = np.full(self.nv, np.inf)
        for i, j in enumerate(self.joints[1:], start=1):
            lo[5 + i], hi[5 + i] = j.position_limits
        return lo, hi

    def neutral_q(self) -> np.ndarray:
        q = np.zeros(self.nq)
        q[3] = 1.0
        return q


def _limits_from(doc, path, default):
    if doc is None:
        return default
    if not (isinstance(doc, (list, tuple)) and len(doc) == 2):
        raise ModelSchemaError(f"{path}: limits must be a [lo, hi] pair or null")
    lo, hi = float(doc[0]), float(doc[1])
    if not lo <= hi:
        raise ModelSchemaError(f"{path}: lower limit {lo} exceeds upper limit {hi}")
    return (lo, hi)


def _vec3(doc, path):
    try:
        v = np.asarray(doc, dtype=float).reshape(3)
    except Exception as exc:
        raise ModelSchemaError(f"{path}: expected a 3-vector") from exc
    if not np.all(np.isfinite(v)):
        raise ModelSchemaError(f"{path}: entries must be finite")
    return v


def load_model(document) -> RobotModel:
    """Validate and load a model document (dict, JSON text, or path to a JSON file)."""
    if isinstance(document, (str, Path)):
        text = Path(document).read_text() if Path(str(document)).exists() else str(document)
        document = json.loads(text)
    if not isinstance(document, dict):
        raise ModelSchemaError("document: expected a JSON object")
    if document.get("schema") != SCHEMA_VERSION:
        raise ModelSchemaError(f"schema: expected {SCHEMA_VERSION}, got {document.get('schema')!r}")
    if not isinstance(document.get("name"), str):
        raise ModelSchemaError("name: expected a string")
    joints_doc = document.get("joints")
    if not isinstance(joints_doc, list) or not joints_doc:
        raise ModelSchemaError("joints: expected a non-empty array")

    joints: list[Joint] = []
    names = set()
    for k, jd in enumerate(joints_doc):
        path = f"joints[{k}]"
        if not isinstance(jd, dict):
            raise ModelSchemaError(f"{path}: expected an object")
        name = jd.get("name")
        if not isinstance(name, str) or not name:
            raise ModelSchemaError(f"{path}.name: expected a non-empty string")
        if name in names:
            raise ModelSchemaError(f"{path}.name: duplicate joint name {name!r}")
        names.add(name)
        jtype = jd.get("type")
        if jtype not in (FLOATING_BASE, REVOLUTE):
            raise ModelSchemaError(f"{path}.type: unknown joint type {jtype!r}")
        parent = jd.get("parent")
        if not isinstance(parent, int):
            raise ModelSchemaError(f"{path}.parent: expected an integer index")
        if jtype == FLOATING_BASE:
            if k != 0 or parent != -1:
                raise ModelSchemaError(f"{path}: the floating base must be joints[0] with parent -1")
        else:
            if not 0 <= parent < len(joints_doc):
                raise ModelSchemaError(f"{path}.parent: index {parent} out of range")
            if parent == k:
                raise ModelSchemaError(f"{path}.parent: joint cannot parent itself")
        axis = _vec3(jd.get("axis", [0.0, 0.0, 0.0]), f"{path}.axis")
        if jtype == REVOLUTE:
            n = float(np.linalg.norm(axis))
            if n < 1e-9:
                raise ModelSchemaError(f"{path}.axis: revolute axis must be nonzero")
            axis = axis / n
        mass = float(jd.get("mass", 0.0))
        if not (math.isfinite(mass) and mass >= 0.0):
            raise ModelSchemaError(f"{path}.mass: must be finite and >= 0")
        joints.append(
            Joint(
                name=name,
                parent=parent,
                joint_type=jtype,
                origin_xyz=_vec3(jd.get("origin_xyz", [0.0, 0.0, 0.0]), f"{path}.origin_xyz"),
                origin_rpy=_vec3(jd.get("origin_rpy", [0.0, 0.0, 0.0]), f"{path}.origin_rpy"),
                axis=axis,
                position_limits=_limits_from(jd.get("position_limits"), f"{path}.position_limits",
                                             (-math.inf, math.inf)),
                velocity_limits=_limits_from(jd.get("velocity_limits"), f"{path}.velocity_limits",
                                             (-math.inf, math.inf)),
                passive=bool(jd.get("passive", False)),
                mass=mass,
                com=_vec3(jd.get("com", [0.0, 0.0, 0.0]), f"{path}.com"),
            )
        )
    if joints[0].joint_type != FLOATING_BASE:
        raise ModelSchemaError("joints[0].type: the root must be the floating base")

    # tree check: walking parents from every joint must reach the root without repeats
    for k in range(1, len(joints)):
        seen = {k}
        i = joints[k].parent
        while i != -1:
            if i in seen:
                raise ModelSchemaError(f"joints[{k}].parent: cycle detected through joints[{i}]")
            seen.add(i)
            i = joints[i].parent

    total_mass = sum(j.mass for j in joints)
    if total_mass <= 0.0:
        raise ModelSchemaError("joints: total mass must be > 0")

    frames_doc = document.get("frames")
    if not isinstance(frames_doc, dict):
        raise ModelSchemaError("frames: expected an object")
    for required in ("pelvis", "stance_foot", "swing_foot"):
        if required not in frames_doc:
            raise ModelSchemaError(f"frames.{required}: required frame is missing")
    frames = {}
    for fname, fd in frames_doc.items():
        path = f"frames.{fname}"
        if not isinstance(fd, dict):
            raise ModelSchemaError(f"{path}: expected an object")
        parent = fd.get("parent")
        if parent not in names:
            raise ModelSchemaError(f"{path}.parent: unknown joint {parent!r}")
        frames[fname] = FrameDef(
            parent=parent,
            xyz=_vec3(fd.get("xyz", [0.0, 0.0, 0.0]), f"{path}.xyz"),
            rpy=_vec3(fd.get("rpy", [0.0, 0.0, 0.0]), f"{path}.rpy"),
        )
    return RobotModel(name=document["name"], joints=joints, frames=frames, source=document)


def save_model(model: RobotModel) -> dict:
    """Emit the canonical document form; load -> save round-trips bit-exactly.

    Unknown top-level keys from the source document (annotations such as
    "comment") are carried through unchanged.
    """

    def limits_doc(pair):
        lo, hi = pair
        if math.isinf(lo) and math.isinf(hi):
            return None
        return [lo, hi]

    extras = {k: v for k, v in model.source.items() if k not in ("schema", "name", "joints", "frames")}
    return extras | {
        "schema": SCHEMA_VERSION,
        "name": model.name,
        "joints": [
            {
                "name": j.name,
                "parent": j.parent,
                "type": j.joint_type,
                "origin_xyz": j.origin_xyz.tolist(),
                "origin_rpy": j.origin_rpy.tolist(),
                "axis": j.axis.tolist(),
                "position_limits": limits_doc(j.position_limits),
                "velocity_limits": limits_doc(j.velocity_limits),
                "passive": j.passive,
                "mass": j.mass,
                "com": j.com.tolist(),
            }
            for j in model.joints
        ],
        "frames": {
            name: {"parent": f.parent, "xyz": f.xyz.tolist(), "rpy": f.rpy.tolist()}
            for name, f in model.frames.items()
        },
    }


def bundled_model_path(name: str = "digit_reduced") -> Path:
    """Path of a model document shipped with the package."""
    return Path(str(resources.files("steplab").joinpath("models", f"{name}.json")))


# ---------------------------------------------------------------------------
# forward kinematics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FkResult:
    rotations: list[np.ndarray]      # world rotation per joint frame
    positions: list[np.ndarray]      # world origin per joint frame
    frame_poses: dict[str, FramePose]
    com: np.ndarray
    link_coms: list[np.ndarray]


def split_q(model: RobotModel, q) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    q = np.asarray(q, dtype=float).reshape(model.nq)
    return q[0:3], q[3:7], q[7:]


def forward_kinematics(model: RobotModel, q) -> FkResult:
    """World pose of every joint frame and named frame, plus the mass-weighted CoM."""
    q = np.asarray(q, dtype=float)
    if q.shape != (model.nq,) or not np.all(np.isfinite(q)):
        raise ValueError(f"q must be a finite ({model.nq},) vector")
    base_pos, base_quat, theta = split_q(model, q)
    R = [quat_to_matrix(base_quat)]
    p = [base_pos.copy()]
    for i, joint in enumerate(model.joints[1:], start=1):
        Rp, pp = R[joint.parent], p[joint.parent]
        R_origin = rpy_to_matrix(joint.origin_rpy)
        R_joint = _axis_angle(joint.axis, theta[i - 1])
        R.append(Rp @ R_origin @ R_joint)
        p.append(pp + Rp @ joint.origin_xyz)
    link_coms = [p[i] + R[i] @ model.joints[i].com for i in range(len(model.joints))]
    masses = np.array([j.mass for j in model.joints])
    com = (masses[:, None] * np.asarray(link_coms)).sum(axis=0) / masses.sum()
    frame_poses = {}
    for name, f in model.frames.items():
        i = model.joint_index(f.parent)
        pos = p[i] + R[i] @ f.xyz
        quat = _matrix_to_quat(R[i] @ rpy_to_matrix(f.rpy))
        frame_poses[name] = FramePose(position=pos, orientation=quat)
    return FkResult(rotations=R, positions=p, frame_poses=frame_poses, com=com, link_coms=link_coms)


def _axis_angle(axis, angle: float) -> np.ndarray:
    a = np.asarray(axis, dtype=float)
    c, s = math.cos(angle), math.sin(angle)
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + s * K + (1 - c) * (K @ K)


def _matrix_to_quat(R: np.ndarray) -> np.ndarray:
    t = np.trace(R)
    if t > 0:
        s = math.sqrt(t + 1.0) * 2
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = math.sqrt(max(1.0 + R[i, i] - R[j, j] - R[k, k], 0.0)) * 2
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    return quat_normalize(q)


def limit_violations(model: RobotModel, q) -> list[tuple[str, float, float, float]]:
    """Joints whose angle sits outside its position limits (flag, never fatal)."""
    _, _, theta = split_q(model, q)
    out = []
    for i, j in enumerate(model.joints[1:]):
        lo, hi = j.position_limits
        if not lo <= theta[i] <= hi:
            out.append((j.name, float(theta[i]), lo, hi))
    return out


# ---------------------------------------------------------------------------
# Jacobians
# ---------------------------------------------------------------------------

def _chain_indices(model: RobotModel, joint_idx: int) -> set[int]:
    chain = set()
    i = joint_idx
    while i != -1:
        chain.add(i)
        i = model.joints[i].parent
    return chain


def _point_jacobian(model: RobotModel, fk: FkResult, point: np.ndarray, chain: set[int]) -> np.ndarray:
    """Linear-velocity Jacobian (3, nv) of a world point rigidly attached to a chain link."""
    J = np.zeros((3, model.nv))
    J[:, 0:3] = np.eye(3)
    base_pos = fk.positions[0]
    for j in range(3):
        e = np.zeros(3)
        e[j] = 1.0
        J[:, 3 + j] = np.cross(e, point - base_pos)
    for i in range(1, len(model.joints)):
        if i in chain:
            axis_w = fk.rotations[i] @ model.joints[i].axis
            J[:, 5 + i] = np.cross(axis_w, point - fk.positions[i])
    return J


def _angular_jacobian(model: RobotModel, fk: FkResult, chain: set[int]) -> np.ndarray:
    J = np.zeros((3, model.nv))
    J[:, 3:6] = np.eye(3)
    for i in range(1, len(model.joints)):
        if i in chain:
            J[:, 5 + i] = fk.rotations[i] @ model.joints[i].axis
    return J


def jacobian(model: RobotModel, q, target: str, fk: FkResult | None = None) -> np.ndarray:
    """Geometric Jacobian (6, nv): rows 0-2 linear, rows 3-5 angular, world frame.

    ``target`` is a named frame, or "com" for the mass-weighted CoM point with
    the pelvis frame's angular rows (the CoM task is oriented like the pelvis).
    Passive-joint columns are present; constraint handling belongs to the QP.
    """
    if fk is None:
        fk = forward_kinematics(model, q)
    J = np.zeros((6, model.nv))
    if target == "com":
        total = model.total_mass
        for i, joint in enumerate(model.joints):
            if joint.mass == 0.0:
                continue
            chain = _chain_indices(model, i)
            J[0:3] += (joint.mass / total) * _point_jacobian(model, fk, fk.link_coms[i], chain)
        pelvis_chain = _chain_indices(model, model.joint_index(model.frames["pelvis"].parent))
        J[3:6] = _angular_jacobian(model, fk, pelvis_chain)
        return J
    if target not in model.frames:
        raise KeyError(f"unknown Jacobian target {target!r}")
    f = model.frames[target]
    i = model.joint_index(f.parent)
    chain = _chain_indices(model, i)
    point = fk.frame_poses[target].position
    J[0:3] = _point_jacobian(model, fk, point, chain)
    J[3:6] = _angular_jacobian(model, fk, chain)
    return J
