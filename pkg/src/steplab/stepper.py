"""Discrete foot-placement control: pre-impact prediction and deadbeat step commands."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .template import LipParams, LipState, StepMatrices, TargetStep, flow

log = logging.getLogger(__name__)

# default reachability clamp on commanded placements (m); the template has no
# kinematic limits, the robot does
DEFAULT_PLACEMENT_LIMIT = 0.5


class GainSynthesisError(RuntimeError):
    """The step-to-step system admits no deadbeat gain (degenerate matrices)."""


@dataclass(frozen=True)
class DeadbeatGain:
    """Row gain K with A + B K nilpotent: any state error vanishes in two steps."""

    K: np.ndarray

    def closed_loop(self, sm: StepMatrices) -> np.ndarray:
        return sm.A + np.outer(sm.B, self.K)


@dataclass(frozen=True)
class StepCommand:
    """Commanded placement u = u_star + feedback + adaptive, clamped to u_limit.

    ``u`` is the clamped command; ``saturated`` marks clamp events (never
    silent) and ``u_raw`` preserves the unclamped sum.
    """

    u: float
    u_star: float
    feedback: float
    adaptive: float
    saturated: bool = False

    @property
    def u_raw(self) -> float:
        return self.u_star + self.feedback + self.adaptive


def deadbeat_gain(sm: StepMatrices, tol: float = 1e-9) -> DeadbeatGain:
    """Place both closed-loop eigenvalues at zero (Ackermann on the 2-state system).

    The synthesis is numeric; the closed form [1, coth(lam*T)/lam] is kept out
    of the code path and used only as a test oracle.
    """
    A, B = sm.A, sm.B
    ctrl = np.column_stack([B, A @ B])
    if abs(np.linalg.det(ctrl)) < 1e-12:
        raise GainSynthesisError("step-to-step pair (A, B) is not controllable")
    # char. polynomial target z^2  =>  K = -[0 1] ctrl^{-1} A^2 for loop A + B K
    K = -(np.linalg.solve(ctrl.T, np.array([0.0, 1.0])) @ (A @ A))
    closed = A + np.outer(B, K)
    if np.max(np.abs(closed @ closed)) > tol:
        raise GainSynthesisError("synthesized gain fails the nilpotency check")
    return DeadbeatGain(K=K)


def predict_preimpact(params: LipParams, x_now: LipState, t_elapsed: float) -> LipState:
    """Propagate the current mid-step state to the end of the step (t = T).

    Elapsed times beyond T are clamped to T (zero remaining flow) and flagged.
    """
    if not math.isfinite(t_elapsed) or t_elapsed < 0.0:
        raise ValueError(f"t_elapsed must be finite and >= 0, got {t_elapsed!r}")
    if t_elapsed > params.T:
        log.warning("t_elapsed=%.6f exceeds step duration T=%.6f; clamping", t_elapsed, params.T)
        t_elapsed = params.T
    return flow(params, x_now, params.T - t_elapsed)


def foot_placement(
    x_pred: LipState,
    target: TargetStep,
    gain: DeadbeatGain,
    phi: float = 0.0,
    parity: int = 0,
    u_limit: float = DEFAULT_PLACEMENT_LIMIT,
) -> StepCommand:
    """Per-step control law u = u* + K (x_pred - x*) + phi.

    ``parity`` selects the per-stance target for two-step gaits (ignored for
    one-step targets). ``phi`` is the adaptive feed-forward, zero when
    adaptation is disabled.
    """
    x_star, u_star = target.for_parity(parity)
    feedback = float(gain.K @ (x_pred.as_array() - x_star.as_array()))
    u_raw = u_star + feedback + float(phi)
    u = min(max(u_raw, -u_limit), u_limit)
    saturated = u != u_raw
    if saturated:
        log.warning("placement command %.4f clamped to %.4f", u_raw, u)
    return StepCommand(u=u, u_star=u_star, feedback=feedback, adaptive=float(phi), saturated=saturated)


def predict_steady_error(sm: StepMatrices, gain: DeadbeatGain, xi) -> np.ndarray:
    """Steady pre-impact error under a constant per-step model mismatch xi.

    The closed loop e+ = (A+BK) e + xi has fixed point (I - (A+BK))^{-1} xi,
    which equals (A + BK + I) xi because (A+BK)^2 = 0.
    """
    closed = gain.closed_loop(sm)
    if np.max(np.abs(closed @ closed)) > 1e-8:
        raise GainSynthesisError("gain is not deadbeat for these step matrices")
    return (closed + np.eye(2)) @ np.asarray(xi, dtype=float).reshape(2)
