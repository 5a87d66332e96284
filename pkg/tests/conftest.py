import numpy as np
import pytest

from steplab import template


@pytest.fixture
def params():
    return template.make_params(9.81, 1.0, 0.4)


def rk4_flow(g, z0, x0, t_final, h=1e-5):
    """Independent oracle: RK4 integration of p'' = (g/z0) p."""
    lam2 = g / z0
    x = np.asarray(x0, dtype=float).copy()

    def f(s):
        return np.array([s[1], lam2 * s[0]])

    n = int(round(t_final / h))
    for _ in range(n):
        k1 = f(x)
        k2 = f(x + h / 2 * k1)
        k3 = f(x + h / 2 * k2)
        k4 = f(x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


PENDULUM_DOC = {
    "schema": 1,
    "name": "pendulum",
    "joints": [
        {"name": "base", "parent": -1, "type": "floating-base", "origin_xyz": [0, 0, 0],
         "origin_rpy": [0, 0, 0], "axis": [0, 0, 0], "position_limits": None,
         "velocity_limits": None, "passive": False, "mass": 1.0, "com": [0, 0, 0]},
        {"name": "swing", "parent": 0, "type": "revolute", "origin_xyz": [0, 0, 0],
         "origin_rpy": [0, 0, 0], "axis": [0, 1, 0], "position_limits": [-3.0, 3.0],
         "velocity_limits": [-10.0, 10.0], "passive": False, "mass": 1.0, "com": [0, 0, -0.25]},
    ],
    "frames": {
        "pelvis": {"parent": "base", "xyz": [0, 0, 0], "rpy": [0, 0, 0]},
        "stance_foot": {"parent": "base", "xyz": [0, 0, -0.1], "rpy": [0, 0, 0]},
        "swing_foot": {"parent": "swing", "xyz": [0, 0, -0.5], "rpy": [0, 0, 0]},
    },
}
