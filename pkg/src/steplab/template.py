"""Closed-form inverted-pendulum template: flow, orbital lines, periodic step targets.

The template is the 1-D constant-height pendulum p'' = (g/z0) p written per
plane (sagittal x or frontal y); plane identity is carried by the caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ParameterError(ValueError):
    """A physical parameter is outside its admissible domain."""


@dataclass(frozen=True)
class LipParams:
    """Pendulum constants: gravity g, CoM height z0, step duration T, rate lam = sqrt(g/z0)."""

    g: float
    z0: float
    T: float
    lam: float

    def __post_init__(self):
        for name in ("g", "z0", "T"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0.0):
                raise ParameterError(f"{name} must be finite and > 0, got {val!r}")
        if not math.isclose(self.lam, math.sqrt(self.g / self.z0), rel_tol=0.0, abs_tol=1e-15):
            raise ParameterError("lam must equal sqrt(g/z0)")


@dataclass(frozen=True)
class LipState:
    """CoM position and velocity relative to the support foot, one plane."""

    p: float
    v: float

    def __post_init__(self):
        if not (math.isfinite(self.p) and math.isfinite(self.v)):
            raise ParameterError(f"non-finite state ({self.p!r}, {self.v!r})")

    def as_array(self) -> np.ndarray:
        return np.array([self.p, self.v])

    @staticmethod
    def from_array(x) -> "LipState":
        x = np.asarray(x, dtype=float).reshape(2)
        return LipState(float(x[0]), float(x[1]))


@dataclass(frozen=True)
class StepMatrices:
    """Discrete step-to-step system.

    M is the continuous flow over one step, (a, b) the impact reset
    x+ = a x- + b u with u the new foot location relative to the old support
    foot, and (A, B) = (M a, M b) the resulting pre-impact-to-pre-impact map.
    """

    M: np.ndarray
    a: np.ndarray
    b: np.ndarray
    A: np.ndarray
    B: np.ndarray


@dataclass(frozen=True)
class OrbitalLines:
    """Phase-portrait line parameters: slopes sigma1 (1-step) and sigma2 (2-step), offset d2."""

    sigma1: float
    sigma2: float
    d2: float


@dataclass(frozen=True)
class TargetStep:
    """Periodic-gait targets: ideal pre-impact state and foot placement.

    For the two-step frontal gait the per-stance entries alternate: the step
    that ends by placing the left foot at ``uL_star`` has pre-impact target
    ``yL_star`` (and symmetrically for the right). ``x_star``/``u_star`` hold
    the left-stance entries so one-step and two-step targets share a shape.
    """

    x_star: LipState
    u_star: float
    uL_star: float | None = None
    uR_star: float | None = None
    yL_star: LipState | None = None
    yR_star: LipState | None = None

    @property
    def two_step(self) -> bool:
        return self.yL_star is not None

    def for_parity(self, k: int) -> tuple[LipState, float]:
        """Target (state, placement) for step index k; alternates only for two-step gaits."""
        if not self.two_step:
            return self.x_star, self.u_star
        if k % 2 == 0:
            return self.yL_star, self.uL_star
        return self.yR_star, self.uR_star


def make_params(g: float, z0: float, T: float) -> LipParams:
    """Build validated pendulum parameters, deriving lam = sqrt(g/z0)."""
    for name, val in (("g", g), ("z0", z0), ("T", T)):
        if not (math.isfinite(val) and val > 0.0):
            raise ParameterError(f"{name} must be finite and > 0, got {val!r}")
    return LipParams(g=float(g), z0=float(z0), T=float(T), lam=math.sqrt(g / z0))


def flow_matrix(params: LipParams, t: float) -> np.ndarray:
    """State-transition matrix of the pendulum over time t (exact closed form)."""
    ch = math.cosh(params.lam * t)
    sh = math.sinh(params.lam * t)
    return np.array([[ch, sh / params.lam], [params.lam * sh, ch]])


def flow(params: LipParams, x0: LipState, t: float) -> LipState:
    """Propagate a state forward by t seconds along the exact pendulum flow."""
    if not math.isfinite(t) or t < 0.0:
        raise ParameterError(f"flow time must be finite and >= 0, got {t!r}")
    return LipState.from_array(flow_matrix(params, t) @ x0.as_array())


def step_matrices(params: LipParams) -> StepMatrices:
    """Assemble the step-to-step system (M, a, b, A, B) for one step of duration T."""
    M = flow_matrix(params, params.T)
    a = np.eye(2)
    b = np.array([-1.0, 0.0])
    return StepMatrices(M=M, a=a, b=b, A=M @ a, B=M @ b)


def orbital_lines(params: LipParams, v_y_d: float = 0.0) -> OrbitalLines:
    """Slopes of the periodic-orbit lines and the lateral-drift offset d2.

    sigma1 = lam*coth(T*lam/2) bounds one-step orbits, sigma2 = lam*tanh(T*lam/2)
    bounds two-step orbits; d2 shifts the two-step lines for a nonzero desired
    lateral velocity.
    """
    half = params.T * params.lam / 2.0
    sigma1 = params.lam / math.tanh(half)
    sigma2 = params.lam * math.tanh(half)
    d2 = params.lam**2 * (1.0 / math.cosh(half)) ** 2 * params.T * v_y_d / (2.0 * sigma2)
    return OrbitalLines(sigma1=sigma1, sigma2=sigma2, d2=d2)


def p1_target(params: LipParams, v_x_d: float) -> TargetStep:
    """One-step-periodic (sagittal) target: pre-impact state on v = sigma1*p, placement v_x_d*T."""
    sigma1 = orbital_lines(params).sigma1
    u_star = v_x_d * params.T
    x_star = LipState(u_star / 2.0, sigma1 * u_star / 2.0)
    return TargetStep(x_star=x_star, u_star=u_star)


def p2_targets(params: LipParams, v_y_d: float, uL_star: float = 0.3) -> TargetStep:
    """Two-step-periodic (frontal) targets for a caller-chosen left placement.

    The single constraint uL + uR = v_y_d*T leaves one placement free; 0.3 m is
    a plausible hip-width default. Targets are the exact fixed points of the
    two-step map: pre-impact state (u/2, (sigma2*u + d2)/2) paired with the
    same-side placement, so chaining both steps returns to the start.
    """
    lines = orbital_lines(params, v_y_d)
    uR_star = v_y_d * params.T - uL_star
    yL_star = LipState(uL_star / 2.0, (lines.sigma2 * uL_star + lines.d2) / 2.0)
    yR_star = LipState(uR_star / 2.0, (lines.sigma2 * uR_star + lines.d2) / 2.0)
    return TargetStep(
        x_star=yL_star,
        u_star=uL_star,
        uL_star=uL_star,
        uR_star=uR_star,
        yL_star=yL_star,
        yR_star=yR_star,
    )
