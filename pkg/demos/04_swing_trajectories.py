"""Swing-foot reference curves for a family of commanded placements.

Each curve starts at the current swing-foot pose with zero velocity, clears
the requested apex, and arrives at the commanded placement with zero vertical
velocity (soft impact). Coordinates are CoM-height anchored, so touchdown is
at z = -z0.
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from steplab import trajgen

OUT = pathlib.Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

z0 = 0.85
p0 = np.array([-0.06, 0.0, -z0])
fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))

for u_x in (0.0, 0.05, 0.1, 0.15):
    curve = trajgen.make_swing_curve(p0, u_x, 0.0, z0, apex=0.08, T=0.4)
    ts = np.linspace(0.0, curve.T, 120)
    pts = np.array([trajgen.eval_curve(curve, t)[0] for t in ts])
    vels = np.array([trajgen.eval_curve(curve, t)[1] for t in ts])
    ax1.plot(pts[:, 0], pts[:, 2] + z0, label=f"$u_x$ = {u_x:.2f} m")
    ax2.plot(ts, vels[:, 2], label=f"$u_x$ = {u_x:.2f} m")
    end, vend = trajgen.eval_curve(curve, curve.T)
    print(f"u_x={u_x:.2f}: touchdown at ({end[0]:+.3f}, {end[2]:+.3f}), terminal v_z = {vend[2]:.1e}, "
          f"apex = {pts[:, 2].max() - p0[2]:.3f} m")

ax1.axhline(0.0, c="k", lw=0.6)
ax1.set_xlabel("x (m)")
ax1.set_ylabel("height above ground (m)")
ax1.set_title("swing curves, side view")
ax1.legend(fontsize=8)
ax2.set_xlabel("t (s)")
ax2.set_ylabel("vertical velocity (m/s)")
ax2.set_title("soft impact: $v_z(T) = 0$")
fig.tight_layout()
fig.savefig(OUT / "04_swing_trajectories.png", dpi=130)
print(f"wrote {OUT / '04_swing_trajectories.png'}")
