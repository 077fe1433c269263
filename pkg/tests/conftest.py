import numpy as np
import pytest

from symmlift.kinematics import ChainSpec, RobotModel, solve_ik, track_task_path
from symmlift.experiment import reference_robot


@pytest.fixture
def two_link():
    """Single 2-link unit chain at the origin (square Jacobian)."""
    return RobotModel(chains=(ChainSpec(base_position=(0.0, 0.0), link_lengths=(1.0, 1.0)),))


@pytest.fixture
def four_link():
    """Single redundant 4-link chain."""
    return RobotModel(
        chains=(ChainSpec(base_position=(0.0, 0.0), link_lengths=(0.5, 0.5, 0.4, 0.3)),)
    )


@pytest.fixture
def dual_arm():
    """The mirrored dual-arm reference robot."""
    return reference_robot()


def make_mini_demo(model, n_samples=40, duration=1.0, seed=0, phase=0.0):
    """A small demonstration near the task origin: the left end-effector
    traces an arc, the right a straight segment; both orbits stay well
    inside the workspace under the test grids' rotations and scalings."""
    rng = np.random.default_rng(seed)
    times = np.linspace(0.0, duration, n_samples)
    ang = phase + np.linspace(0.25, 1.75, n_samples)
    left = 0.2 * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    right = np.linspace([-0.12, -0.22], [0.12, 0.05], n_samples)
    path = np.hstack([left, right])
    seed_q = np.array([0.3, -0.5, 0.4, -0.2, -0.3, 0.5, -0.4, 0.2])
    seed_q = seed_q + 0.05 * rng.standard_normal(8)
    q0 = solve_ik(model, path[0], seed_q)
    return track_task_path(model, times, path, q0)


@pytest.fixture
def mini_demo(dual_arm):
    return make_mini_demo(dual_arm)


def central_difference_jacobian(f, q, step=1e-6):
    """Independent finite-difference oracle for Jacobians of f: R^n -> R^m."""
    q = np.asarray(q, dtype=float)
    cols = []
    for j in range(q.shape[0]):
        e = np.zeros_like(q)
        e[j] = step
        cols.append((f(q + e) - f(q - e)) / (2 * step))
    return np.stack(cols, axis=-1)
