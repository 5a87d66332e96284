"""Deadbeat foot placement in action on the step-to-step plant.

Part 1: an arbitrary initial state error is eliminated in exactly two steps.
Part 2: a constant model mismatch leaves the predicted bounded steady error.
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from steplab import simlab, stepper, template

OUT = pathlib.Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

params = template.make_params(9.81, 1.0, 0.4)
sm = template.step_matrices(params)
gain = stepper.deadbeat_gain(sm)
print(f"deadbeat gain K = {gain.K}")
print(f"||(A+BK)^2|| = {np.max(np.abs(gain.closed_loop(sm) @ gain.closed_loop(sm))):.2e}")

target = template.p1_target(params, 0.25)

# part 1: perfect model, error gone after two impacts
x = template.LipState(target.x_star.p + 0.12, target.x_star.v - 0.15)
errs = []
for k in range(8):
    cmd = stepper.foot_placement(x, target, gain)
    x = simlab.s2s_step(params, sm, None, x, cmd.u)
    errs.append(np.linalg.norm(x.as_array() - target.x_star.as_array()))
    print(f"step {k}: u = {cmd.u:+.4f}  ->  ||e|| = {errs[-1]:.3e}")

# part 2: constant mismatch, error settles at (A + BK + I) xi
xi = np.array([0.004, 0.012])
predicted = stepper.predict_steady_error(sm, gain, xi)
x = template.LipState(target.x_star.p, target.x_star.v)
errs_mm = []
for k in range(30):
    cmd = stepper.foot_placement(x, target, gain)
    x = simlab.s2s_step(params, sm, simlab.MismatchModel.constant(xi), x, cmd.u)
    errs_mm.append(x.as_array() - target.x_star.as_array())
errs_mm = np.array(errs_mm)
print(f"\nconstant mismatch xi = {xi}")
print(f"predicted steady error   = {predicted}")
print(f"simulated error, step 30 = {errs_mm[-1]}")

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
ax1.semilogy(range(len(errs)), np.maximum(errs, 1e-17), "o-")
ax1.set_xlabel("step")
ax1.set_ylabel("||e||")
ax1.set_title("perfect model: dead in two beats")
ax2.plot(errs_mm[:, 0], label="position error")
ax2.plot(errs_mm[:, 1], label="velocity error")
ax2.axhline(predicted[0], ls="--", c="tab:blue", lw=0.8)
ax2.axhline(predicted[1], ls="--", c="tab:orange", lw=0.8)
ax2.set_xlabel("step")
ax2.set_title("constant mismatch: bounded steady error")
ax2.legend(fontsize=8)
fig.tight_layout()
fig.savefig(OUT / "02_deadbeat_stepping.png", dpi=130)
print(f"wrote {OUT / '02_deadbeat_stepping.png'}")
