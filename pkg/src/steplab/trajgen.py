"""Task-space references for one step: constant-height CoM and a Bezier swing curve."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_APEX = 0.08
# P2/P3 lift divisor: raising the two mid control points by apex/0.5625 puts the
# degree-5 curve's apex at or above the requested clearance (the flat-endpoint
# bump 10 s^2 (1-s)^2 peaks at 0.625, so this overshoots slightly)
_APEX_GAIN = 0.5625

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


@dataclass(frozen=True)
class BezierCurve:
    """Bernstein-basis curve over t in [0, T]; control points P are (n+1, 3)."""

    P: np.ndarray
    T: float

    @property
    def degree(self) -> int:
        return self.P.shape[0] - 1

    def __post_init__(self):
        if not (math.isfinite(self.T) and self.T > 0.0):
            raise ValueError(f"curve duration must be finite and > 0, got {self.T!r}")
        if self.P.ndim != 2 or self.P.shape[0] < 2 or self.P.shape[1] != 3:
            raise ValueError(f"control points must be (n+1, 3) with n >= 1, got {self.P.shape}")


@dataclass(frozen=True)
class ComReference:
    """Constant-height CoM task fragment: x/y free, z held, rotation identity."""

    height: float
    rotation: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())

    def position(self, t: float) -> float:
        return self.height

    def vertical_velocity(self, t: float) -> float:
        return 0.0


@dataclass(frozen=True)
class TaskReference:
    """All task-space references for one step."""

    com: ComReference
    swing_curve: BezierCurve
    swing_rotation: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())

    @property
    def com_height(self) -> float:
        return self.com.height


def _bernstein(n: int, s: float) -> np.ndarray:
    return np.array([math.comb(n, i) * (1.0 - s) ** (n - i) * s**i for i in range(n + 1)])


def eval_curve(curve: BezierCurve, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Position and analytic velocity at time t; t outside [0, T] is clamped and flagged."""
    if not math.isfinite(t):
        raise ValueError(f"non-finite evaluation time {t!r}")
    if t < 0.0 or t > curve.T:
        log.warning("evaluation time %.6f outside [0, %.6f]; clamping", t, curve.T)
        t = min(max(t, 0.0), curve.T)
    n = curve.degree
    s = t / curve.T
    pos = _bernstein(n, s) @ curve.P
    dP = n * np.diff(curve.P, axis=0)  # hodograph control points
    vel = (_bernstein(n - 1, s) @ dP) / curve.T
    return pos, vel


def make_swing_curve(
    p0,
    u_x: float,
    u_y: float,
    z0: float,
    apex: float = DEFAULT_APEX,
    T: float = 0.4,
) -> BezierCurve:
    """Degree-5 swing curve from p0 to the commanded touchdown (u_x, u_y, -z0).

    Coordinates are CoM-height anchored: the horizontal origin is the support
    foot (so the commanded placement appears unchanged in the terminal point)
    and z is measured from the CoM plane, putting touchdown at -z0 exactly.
    Doubled endpoint control points give zero boundary velocities (soft
    impact); the two mid points are lifted so the apex clears ``apex``.
    """
    p0 = np.asarray(p0, dtype=float).reshape(3)
    if not (math.isfinite(T) and T > 0.0):
        raise ValueError(f"step duration must be finite and > 0, got {T!r}")
    if not (math.isfinite(apex) and apex > 0.0):
        raise ValueError(f"apex clearance must be finite and > 0, got {apex!r}")
    pf = np.array([u_x, u_y, -z0])
    mid = 0.5 * (p0 + pf)
    z_lift = max(p0[2], pf[2]) + apex / _APEX_GAIN
    m = np.array([mid[0], mid[1], z_lift])
    P = np.vstack([p0, p0, m, m, pf, pf])
    return BezierCurve(P=P, T=float(T))


def com_reference(z0: float) -> ComReference:
    """Constant CoM-height reference with identity rotation."""
    if not (math.isfinite(z0) and z0 > 0.0):
        raise ValueError(f"z0 must be finite and > 0, got {z0!r}")
    return ComReference(height=float(z0))
