"""Anatomy of one differential-IK tick on the bundled 18-dof chain.

Builds the two-task velocity QP at a crouched configuration, solves it, and
reports the solution quality: task residuals, independent KKT certificate,
passive-joint handling, and the solve-time distribution over repeated calls.
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from steplab import ik_qp, kinematics as kin, simlab

OUT = pathlib.Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

model = kin.load_model(kin.bundled_model_path())
print(f"model: {model.name}, {model.nv} velocity dofs, passive joints at {model.passive_v_indices()}")

q = simlab._crouch_q(model, 0.85)
fk = kin.forward_kinematics(model, q)
identity = np.array([1.0, 0.0, 0.0, 0.0])

com_pose = kin.FramePose(position=fk.com, orientation=fk.frame_poses["pelvis"].orientation)
sw_pose = fk.frame_poses["swing_foot"]
com_ref = ik_qp.TaskRef(position=fk.com + [0, 0, -0.01], velocity=np.zeros(3),
                        orientation=identity, angular_velocity=np.zeros(3))
sw_ref = ik_qp.TaskRef(position=sw_pose.position + [0.05, 0.0, 0.03],
                       velocity=np.array([0.2, 0.0, 0.3]),
                       orientation=identity, angular_velocity=np.zeros(3))
lb, ub = ik_qp.tick_bounds(model, q, 1e-3)
passive_idx = model.passive_v_indices()
prob = ik_qp.IkProblem(
    J_com=kin.jacobian(model, q, "com", fk),
    T_com=ik_qp.build_task_vector(com_ref, com_pose),
    J_sw=kin.jacobian(model, q, "swing_foot", fk),
    T_sw=ik_qp.build_task_vector(sw_ref, sw_pose),
    lb=lb, ub=ub, dt=1e-3,
    passive_idx=passive_idx, passive_val=np.zeros(passive_idx.size),
    w_com=np.array([0.0, 0.0, 1.0, 1.0, 1.0, 1.0]),
)
sol = ik_qp.solve_tick(prob)
print(f"objective = {sol.objective_value:.3e}, iterations = {sol.iterations}")
print(f"solver KKT residual (independent verifier): {ik_qp.verify_kkt(prob, sol.qdot_d):.2e}")
print(f"passive entries of the solution: {sol.qdot_d[passive_idx]}")
print(f"com task residual  = {np.linalg.norm((prob.J_com @ sol.qdot_d - prob.T_com) * prob.w_com):.2e}")
print(f"swing task residual = {np.linalg.norm(prob.J_sw @ sol.qdot_d - prob.T_sw):.2e}")

times = []
for _ in range(800):
    times.append(ik_qp.solve_tick(prob).solve_time * 1e3)
times = np.sort(times)
print(f"solve time: p50 = {times[len(times) // 2]:.3f} ms, p99 = {times[int(0.99 * len(times))]:.3f} ms")

fig, ax = plt.subplots(figsize=(6, 3.6))
ax.hist(times, bins=40)
ax.axvline(1.0, c="r", ls="--", label="1 ms tick")
ax.set_xlabel("solve time (ms)")
ax.set_ylabel("count")
ax.legend()
fig.tight_layout()
fig.savefig(OUT / "05_qp_ik_anatomy.png", dpi=130)
print(f"wrote {OUT / '05_qp_ik_anatomy.png'}")
