"""steplab: inverted-pendulum stepping control and a desk-scale simulation lab.

Submodules
----------
template    closed-form pendulum flow, orbital lines, periodic step targets
stepper     pre-impact prediction, deadbeat gain synthesis, step commands
neuroreg    online two-layer regulator (delta rule) for the frontal plane
trajgen     constant-height CoM reference and Bezier swing curves
kinematics  floating-base chain model, forward kinematics, Jacobians
ik_qp       box-constrained velocity QP solved once per control tick
simlab      perturbed step-to-step plant and the kinematic walking loop
cli         command-line front end (orbit / s2s / walk / validate)
"""

from . import ik_qp, kinematics, neuroreg, simlab, stepper, template, trajgen
from .neuroreg import NeuralRegulator, init_regulator
from .simlab import EpisodeLog, MismatchModel, S2sConfig, WalkConfig, run_kinematic_walk, run_s2s_episode
from .stepper import DeadbeatGain, StepCommand, deadbeat_gain, foot_placement, predict_preimpact, predict_steady_error
from .template import (
    LipParams,
    LipState,
    OrbitalLines,
    StepMatrices,
    TargetStep,
    flow,
    make_params,
    orbital_lines,
    p1_target,
    p2_targets,
    step_matrices,
)
from .trajgen import BezierCurve, TaskReference, com_reference, eval_curve, make_swing_curve

__version__ = "0.1.0"

__all__ = [
    "template", "stepper", "neuroreg", "trajgen", "kinematics", "ik_qp", "simlab",
    "LipParams", "LipState", "StepMatrices", "OrbitalLines", "TargetStep",
    "make_params", "flow", "step_matrices", "orbital_lines", "p1_target", "p2_targets",
    "DeadbeatGain", "StepCommand", "deadbeat_gain", "predict_preimpact", "foot_placement",
    "predict_steady_error", "NeuralRegulator", "init_regulator",
    "BezierCurve", "TaskReference", "make_swing_curve", "eval_curve", "com_reference",
    "MismatchModel", "EpisodeLog", "S2sConfig", "WalkConfig", "run_s2s_episode", "run_kinematic_walk",
]
