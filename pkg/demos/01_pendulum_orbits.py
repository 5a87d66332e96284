"""Phase portrait of the stepping template: one-step and two-step orbits.

Draws the orbital lines for a fixed step duration, the one-step-periodic
forward orbits for several commanded speeds, and a two-step-periodic lateral
orbit, with the instantaneous reset segments connecting pre- and post-impact
states.
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from steplab import template

OUT = pathlib.Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

params = template.make_params(g=9.81, z0=1.0, T=0.4)
lines = template.orbital_lines(params)
print(f"step duration T = {params.T} s, rate lambda = {params.lam:.5f} 1/s")
print(f"one-step line slope  sigma1 = {lines.sigma1:.5f}")
print(f"two-step line slope  sigma2 = {lines.sigma2:.5f}")
print(f"slope product = lambda^2 check: {lines.sigma1 * lines.sigma2:.5f} vs {params.lam**2:.5f}")

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.6))

p_grid = np.linspace(-0.25, 0.25, 2)
for sign in (+1, -1):
    ax1.plot(p_grid, sign * lines.sigma1 * p_grid, "k--", lw=0.8)
    ax2.plot(p_grid, sign * lines.sigma2 * p_grid, "k--", lw=0.8)

# forward one-step orbits: flow from post-impact to pre-impact, then reset
for v_cmd, color in ((0.15, "tab:blue"), (0.25, "tab:orange"), (0.3, "tab:green")):
    tgt = template.p1_target(params, v_cmd)
    post = template.LipState(tgt.x_star.p - tgt.u_star, tgt.x_star.v)
    ts = np.linspace(0.0, params.T, 80)
    arc = np.array([template.flow(params, post, t).as_array() for t in ts])
    ax1.plot(arc[:, 0], arc[:, 1], color=color, label=f"$v^d_x$ = {v_cmd} m/s")
    ax1.plot([tgt.x_star.p, post.p], [tgt.x_star.v, post.v], color=color, ls=":", lw=0.9)
ax1.set_xlabel("p (m)")
ax1.set_ylabel("v (m/s)")
ax1.set_title("one-step periodic orbits (forward)")
ax1.legend(fontsize=8)

# lateral two-step orbit: left-landing arc then right-landing arc close a cycle
tgt = template.p2_targets(params, v_y_d=0.0, uL_star=0.3)
for (y_star, u_star), color in (((tgt.yL_star, tgt.uL_star), "tab:red"),
                                ((tgt.yR_star, tgt.uR_star), "tab:purple")):
    post = template.LipState(y_star.p - u_star, y_star.v)
    ts = np.linspace(0.0, params.T, 80)
    arc = np.array([template.flow(params, post, t).as_array() for t in ts])
    ax2.plot(arc[:, 0], arc[:, 1], color=color)
    ax2.plot([y_star.p, post.p], [y_star.v, post.v], color=color, ls=":", lw=0.9)
ax2.set_xlabel("p (m)")
ax2.set_ylabel("v (m/s)")
ax2.set_title("two-step periodic orbit (lateral, $u^*_L$ = 0.3 m)")

fig.tight_layout()
fig.savefig(OUT / "01_pendulum_orbits.png", dpi=130)
print(f"wrote {OUT / '01_pendulum_orbits.png'}")

# numeric closure check of the two-step cycle
sm = template.step_matrices(params)
y = tgt.yL_star.as_array()
y = sm.A @ y + sm.B * tgt.uL_star
y = sm.A @ y + sm.B * tgt.uR_star
print(f"two-step closure deviation: {np.max(np.abs(y - tgt.yL_star.as_array())):.2e}")
