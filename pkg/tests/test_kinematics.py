import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from symmlift.kinematics import (
    ChainSpec,
    RobotModel,
    SingularityError,
    TrackingDivergenceError,
    forward_kinematics,
    generalized_inverse,
    jacobian,
    load_robot,
    min_singular_value,
    save_robot,
    tangent_decompose,
    track_task_path,
)

from conftest import central_difference_jacobian


class TestForwardKinematics:
    def test_straight_chain_along_x(self, two_link):
        assert_allclose(forward_kinematics(two_link, [0.0, 0.0]), [2.0, 0.0], atol=1e-15)

    def test_straight_chain_along_y(self, two_link):
        assert_allclose(
            forward_kinematics(two_link, [np.pi / 2, 0.0]), [0.0, 2.0], atol=1e-15
        )

    def test_elbow_bend(self, two_link):
        assert_allclose(
            forward_kinematics(two_link, [np.pi / 2, np.pi / 2]), [-1.0, 1.0], atol=1e-15
        )

    def test_base_offset_and_orientation(self):
        model = RobotModel(
            chains=(
                ChainSpec(
                    base_position=(1.0, 2.0),
                    link_lengths=(1.0, 1.0),
                    base_orientation=np.pi / 2,
                ),
            )
        )
        assert_allclose(forward_kinematics(model, [0.0, 0.0]), [1.0, 4.0], atol=1e-15)

    def test_batched_matches_single(self, dual_arm):
        rng = np.random.default_rng(0)
        Q = rng.uniform(-np.pi, np.pi, size=(7, dual_arm.dim_q))
        X = forward_kinematics(dual_arm, Q)
        for i in range(7):
            assert_allclose(X[i], forward_kinematics(dual_arm, Q[i]))

    def test_dimension_mismatch(self, two_link):
        with pytest.raises(ValueError):
            forward_kinematics(two_link, [0.0, 0.0, 0.0])


class TestJacobian:
    def test_straight_chain_value(self, two_link):
        assert_allclose(
            jacobian(two_link, [0.0, 0.0]), [[0.0, 0.0], [2.0, 1.0]], atol=1e-15
        )

    def test_matches_finite_differences_at_bend(self, two_link):
        q = np.array([np.pi / 2, np.pi / 2])
        fd = central_difference_jacobian(lambda qq: forward_kinematics(two_link, qq), q)
        assert_allclose(jacobian(two_link, q), fd, atol=1e-5)

    def test_cross_chain_blocks_zero(self, dual_arm):
        rng = np.random.default_rng(1)
        q = rng.uniform(-np.pi, np.pi, dual_arm.dim_q)
        J = jacobian(dual_arm, q)
        assert np.all(J[:2, 4:] == 0.0)
        assert np.all(J[2:, :4] == 0.0)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(-np.pi, np.pi), min_size=8, max_size=8))
    def test_matches_finite_differences_dual_arm(self, qlist):
        model = None
        from symmlift.experiment import reference_robot

        model = reference_robot()
        q = np.asarray(qlist)
        fd = central_difference_jacobian(lambda qq: forward_kinematics(model, qq), q)
        assert_allclose(jacobian(model, q), fd, atol=1e-5)


class TestGeneralizedInverse:
    def test_square_invertible(self):
        J = np.array([[2.0, 0.0], [0.0, 1.0]])
        assert_allclose(generalized_inverse(J), [[0.5, 0.0], [0.0, 1.0]], atol=1e-14)

    def test_wide_identity_metric_matches_svd_pseudoinverse(self):
        J = np.array([[1.0, 1.0]])
        assert_allclose(generalized_inverse(J), np.linalg.pinv(J), atol=1e-14)
        assert_allclose(generalized_inverse(J), [[0.5], [0.5]], atol=1e-14)

    def test_wide_weighted(self):
        J = np.array([[1.0, 1.0]])
        M = np.diag([1.0, 4.0])
        # M^-1 J^T = [1, 0.25]^T, J M^-1 J^T = 1.25
        assert_allclose(generalized_inverse(J, M), [[0.8], [0.2]], atol=1e-14)

    def test_right_inverse_property(self, dual_arm):
        rng = np.random.default_rng(2)
        for _ in range(20):
            q = rng.uniform(-np.pi, np.pi, dual_arm.dim_q)
            J = jacobian(dual_arm, q)
            if min_singular_value(J) < 1e-4:
                continue
            Jp = generalized_inverse(J, dual_arm.metric)
            assert_allclose(J @ Jp, np.eye(dual_arm.dim_x), atol=1e-10)

    def test_minimum_norm_among_solutions(self, four_link):
        rng = np.random.default_rng(3)
        M = np.diag([1.0, 2.0, 0.5, 3.0])
        model = RobotModel(chains=four_link.chains, metric=M)
        q = rng.uniform(-np.pi, np.pi, 4)
        J = jacobian(model, q)
        Jp = generalized_inverse(J, M)
        xdot = rng.normal(size=2)
        qdot_min = Jp @ xdot
        # add kernel directions: any other solution has larger M-norm
        _, _, Vt = np.linalg.svd(J)
        kernel = Vt[2:]
        for _ in range(10):
            v = kernel.T @ rng.normal(size=kernel.shape[0])
            qdot_alt = qdot_min + v
            assert_allclose(J @ qdot_alt, xdot, atol=1e-10)
            assert qdot_min @ M @ qdot_min <= qdot_alt @ M @ qdot_alt + 1e-12

    def test_singular_raises(self):
        J = np.array([[0.0, 0.0], [2.0, 1.0]])
        with pytest.raises(SingularityError):
            generalized_inverse(J)


class TestTangentDecompose:
    def test_pseudoinverse_image_is_horizontal(self, four_link):
        rng = np.random.default_rng(4)
        q = rng.uniform(-np.pi, np.pi, 4)
        J = jacobian(four_link, q)
        qdot = generalized_inverse(J) @ rng.normal(size=2)
        vertical, horizontal = tangent_decompose(four_link, q, qdot)
        assert_allclose(vertical, np.zeros(4), atol=1e-12)
        assert_allclose(horizontal, qdot, atol=1e-12)

    def test_kernel_is_vertical(self, four_link):
        rng = np.random.default_rng(5)
        q = rng.uniform(-np.pi, np.pi, 4)
        J = jacobian(four_link, q)
        _, _, Vt = np.linalg.svd(J)
        qdot = Vt[2:].T @ rng.normal(size=2)
        vertical, horizontal = tangent_decompose(four_link, q, qdot)
        assert_allclose(horizontal, np.zeros(4), atol=1e-12)
        assert_allclose(vertical, qdot, atol=1e-12)

    def test_recombination_and_orthogonality(self, four_link):
        M = np.diag([1.0, 2.0, 0.5, 3.0])
        model = RobotModel(chains=four_link.chains, metric=M)
        rng = np.random.default_rng(6)
        for _ in range(20):
            q = rng.uniform(-np.pi, np.pi, 4)
            if min_singular_value(jacobian(model, q)) < 1e-4:
                continue
            qdot = rng.normal(size=4)
            vertical, horizontal = tangent_decompose(model, q, qdot)
            assert_allclose(vertical + horizontal, qdot, atol=1e-12)
            assert_allclose(jacobian(model, q) @ vertical, np.zeros(2), atol=1e-10)
            assert abs(vertical @ M @ horizontal) < 1e-10

    def test_idempotent(self, four_link):
        rng = np.random.default_rng(7)
        q = rng.uniform(-np.pi, np.pi, 4)
        qdot = rng.normal(size=4)
        _, horizontal = tangent_decompose(four_link, q, qdot)
        vertical2, horizontal2 = tangent_decompose(four_link, q, horizontal)
        assert_allclose(vertical2, np.zeros(4), atol=1e-10)
        assert_allclose(horizontal2, horizontal, atol=1e-10)


class TestMinSingularValue:
    def test_diagonal(self):
        assert_allclose(min_singular_value(np.diag([2.0, 1.0])), 1.0)

    def test_rank_deficient(self):
        assert_allclose(min_singular_value(np.array([[0.0, 0.0], [2.0, 1.0]])), 0.0, atol=1e-15)

    def test_matches_svd(self):
        rng = np.random.default_rng(8)
        J = rng.normal(size=(4, 8))
        assert_allclose(min_singular_value(J), np.linalg.svd(J, compute_uv=False).min())


class TestTrackTaskPath:
    def test_constant_path_stays_put(self, four_link):
        q0 = np.array([0.4, 0.6, -0.5, 0.3])
        x0 = forward_kinematics(four_link, q0)
        times = np.linspace(0.0, 1.0, 11)
        demo = track_task_path(four_link, times, np.tile(x0, (11, 1)), q0)
        assert_allclose(demo.q, np.tile(q0, (11, 1)), atol=1e-9)
        assert_allclose(demo.qdot, np.zeros((11, 4)), atol=1e-9)

    def test_tracks_circle_arc(self, four_link):
        q0 = np.array([0.4, 0.6, -0.5, 0.3])
        x0 = forward_kinematics(four_link, q0)
        center = x0 - np.array([0.2, 0.0])
        times = np.linspace(0.0, 2.0, 81)
        ang = np.linspace(0.0, np.pi / 2, 81)
        path = center + 0.2 * np.stack([np.cos(ang), np.sin(ang)], axis=1)
        demo = track_task_path(four_link, times, path, q0)
        err = np.abs(forward_kinematics(four_link, demo.q) - path).max()
        assert err <= 1e-3
        # stored velocities are purely horizontal
        for i in range(0, 81, 20):
            vertical, _ = tangent_decompose(four_link, demo.q[i], demo.qdot[i])
            assert np.abs(vertical).max() <= 1e-10

    def test_unreachable_path_diverges(self, four_link):
        q0 = np.array([0.4, 0.6, -0.5, 0.3])
        x0 = forward_kinematics(four_link, q0)
        times = np.linspace(0.0, 1.0, 51)
        # march straight out beyond the 1.7 m reach
        target = np.array([3.0, 0.0])
        path = x0 + np.linspace(0.0, 1.0, 51)[:, None] * (target - x0)
        with pytest.raises(TrackingDivergenceError):
            track_task_path(four_link, times, path, q0)

    def test_start_mismatch_rejected(self, four_link):
        q0 = np.array([0.4, 0.6, -0.5, 0.3])
        x0 = forward_kinematics(four_link, q0) + np.array([0.1, 0.0])
        times = np.linspace(0.0, 1.0, 11)
        with pytest.raises(ValueError):
            track_task_path(four_link, times, np.tile(x0, (11, 1)), q0)


class TestRobotModel:
    def test_invariants(self):
        with pytest.raises(ValueError):
            ChainSpec(base_position=(0, 0), link_lengths=(1.0, -1.0))
        with pytest.raises(ValueError):
            ChainSpec(base_position=(0, 0), link_lengths=())
        with pytest.raises(ValueError):
            RobotModel(
                chains=(ChainSpec(base_position=(0, 0), link_lengths=(1.0,)),),
                metric=np.array([[1.0, 2.0], [2.0, 1.0]]),
            )
        with pytest.raises(ValueError):
            # not positive definite
            RobotModel(
                chains=(ChainSpec(base_position=(0, 0), link_lengths=(1.0,)),),
                metric=np.array([[0.0]]),
            )
        with pytest.raises(ValueError):
            # fewer joints than task coordinates
            RobotModel(
                chains=(
                    ChainSpec(base_position=(0, 0), link_lengths=(1.0,)),
                    ChainSpec(base_position=(1, 0), link_lengths=(1.0,)),
                )
            )

    def test_json_round_trip(self, tmp_path, dual_arm):
        path = tmp_path / "robot.json"
        save_robot(dual_arm, path)
        loaded = load_robot(path)
        assert loaded.chains == dual_arm.chains
        assert_allclose(loaded.metric, dual_arm.metric)
        data = json.loads(path.read_text())
        assert data["metric"] == "identity"
        assert data["chains"][0]["base"] == [-0.4, 0.0]

    def test_explicit_metric_round_trip(self, tmp_path):
        model = RobotModel(
            chains=(ChainSpec(base_position=(0, 0), link_lengths=(1.0, 1.0)),),
            metric=np.diag([1.0, 4.0]),
        )
        path = tmp_path / "robot.json"
        save_robot(model, path)
        assert_allclose(load_robot(path).metric, np.diag([1.0, 4.0]))
