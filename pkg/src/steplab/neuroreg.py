"""Online neural regulator: a two-layer tanh network trained by a per-step delta rule.

The network maps (pre-impact state, commanded velocities) to a bounded
feed-forward placement correction. Input weights are fixed at init; only the
output layer learns.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from .template import LipState

log = logging.getLogger(__name__)

DEFAULT_GAMMA = 1e-4
DEFAULT_HIDDEN = 16


@dataclass(frozen=True)
class UpdateReport:
    """Outcome of one delta-rule update."""

    applied: bool
    error_signal: float
    max_abs_delta: float


class NeuralRegulator:
    """Feed-forward correction phi = tanh(W^T tanh(V^T [p, v, v_x_d, v_y_d])).

    V is (4, H) drawn once from a seeded standard normal; W is (H,) and starts
    at zero so phi is exactly zero before any update. The outer tanh bounds the
    correction to (-1, 1).

    The error signal fed to the delta rule is the signed scalar projection
    E = w_p (p* - p) + w_v (v* - v). Weights (1, 1/sigma2) nondimensionalize
    the velocity term against the two-step orbital slope; (1, 1) is the
    context-free default. The target-minus-actual orientation is what makes
    W <- W - gamma E sigma a descent direction for this plant (the placement
    input enters the step map with negative coefficients).
    """

    def __init__(
        self,
        hidden: int = DEFAULT_HIDDEN,
        seed: int = 0,
        gamma: float = DEFAULT_GAMMA,
        error_weights: tuple[float, float] = (1.0, 1.0),
    ):
        if hidden < 1:
            raise ValueError(f"hidden width must be >= 1, got {hidden}")
        if not (math.isfinite(gamma) and gamma > 0.0):
            raise ValueError(f"gamma must be finite and > 0, got {gamma!r}")
        self.hidden_width = int(hidden)
        self.rng_seed = int(seed)
        self.gamma = float(gamma)
        self.error_weights = (float(error_weights[0]), float(error_weights[1]))
        self.V = np.random.default_rng(self.rng_seed).standard_normal((4, self.hidden_width))
        self.V.setflags(write=False)
        self.W = np.zeros(self.hidden_width)

    def hidden_activations(self, x_k: LipState, v_x_d: float, v_y_d: float) -> np.ndarray:
        return np.tanh(self.V.T @ np.array([x_k.p, x_k.v, v_x_d, v_y_d]))

    def forward(self, x_k: LipState, v_x_d: float, v_y_d: float, hidden: np.ndarray | None = None) -> float:
        """Evaluate the correction; pass ``hidden`` to reuse a precomputed layer."""
        if hidden is None:
            hidden = self.hidden_activations(x_k, v_x_d, v_y_d)
        return float(np.tanh(self.W @ hidden))

    def delta_update(self, x_k: LipState, x_star: LipState, hidden: np.ndarray) -> UpdateReport:
        """Apply W <- W - gamma * E * sigma with sigma from the paired forward pass.

        Non-finite error signals skip the update and flag it.
        """
        w_p, w_v = self.error_weights
        err = w_p * (x_star.p - x_k.p) + w_v * (x_star.v - x_k.v)
        if not math.isfinite(err):
            log.warning("non-finite error signal %r; update skipped", err)
            return UpdateReport(applied=False, error_signal=err, max_abs_delta=0.0)
        delta = -self.gamma * err * np.asarray(hidden, dtype=float)
        self.W = self.W + delta
        return UpdateReport(applied=True, error_signal=err, max_abs_delta=float(np.max(np.abs(delta))))

    def weight_norm(self) -> float:
        return float(np.linalg.norm(self.W))

    # -- snapshot serialization (resumable experiments) --

    def to_json(self) -> str:
        doc = {
            "schema": 1,
            "seed": self.rng_seed,
            "hidden": self.hidden_width,
            "gamma": self.gamma,
            "error_weights": list(self.error_weights),
            "V": self.V.tolist(),
            "W": self.W.tolist(),
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "NeuralRegulator":
        doc = json.loads(text)
        reg = cls(
            hidden=doc["hidden"],
            seed=doc["seed"],
            gamma=doc["gamma"],
            error_weights=tuple(doc["error_weights"]),
        )
        V = np.asarray(doc["V"], dtype=float)
        if V.shape != reg.V.shape or not np.array_equal(V, reg.V):
            # snapshot wins over re-derivation if they ever disagree
            reg.V = V
            reg.V.setflags(write=False)
        reg.W = np.asarray(doc["W"], dtype=float)
        return reg


def init_regulator(hidden: int, seed: int, gamma: float = DEFAULT_GAMMA,
                   error_weights: tuple[float, float] = (1.0, 1.0)) -> NeuralRegulator:
    """Construct a regulator with seeded normal V and all-zero W."""
    return NeuralRegulator(hidden=hidden, seed=seed, gamma=gamma, error_weights=error_weights)
