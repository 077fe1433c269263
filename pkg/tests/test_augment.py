import numpy as np
import pytest
from numpy.testing import assert_allclose

from symmlift.augment import (
    AugmentationGrid,
    augment_dataset,
    grid_presets,
    nominal_transform,
    task_differential,
)
from symmlift.dataset import (
    ConditionVector,
    Dataset,
    Demonstration,
    load_dataset,
    save_dataset,
)
from symmlift.kinematics import forward_kinematics, jacobian
from symmlift.symmetry import build_morphological_action

from conftest import make_mini_demo


def morph(dual_arm):
    return build_morphological_action(
        dual_arm, joint_signs=-np.ones(4), task_reflection=np.diag([-1.0, 1.0])
    )


@pytest.fixture
def mini_dataset(dual_arm):
    return Dataset(demos=(make_mini_demo(dual_arm, seed=0), make_mini_demo(dual_arm, seed=1, phase=0.3)))


class TestGridPresets:
    def test_fig5_90deg_dedupes_endpoint(self):
        grid = grid_presets("fig5_90deg")
        assert_allclose(sorted(grid.thetas), np.deg2rad([-90.0, 0.0, 90.0, 180.0]))
        assert grid.lambdas == (1.0,) and grid.sigmas == (1,)

    def test_fig5_5deg_count(self):
        assert len(grid_presets("fig5_5deg").thetas) == 72

    def test_table1(self):
        grid = grid_presets("table1")
        assert len(grid.thetas) == 12
        assert grid.lambdas == (0.5, 0.75, 1.0, 1.25)
        assert set(grid.sigmas) == {1, -1}
        assert len(grid) == 96

    def test_unknown_preset(self):
        with pytest.raises(ValueError):
            grid_presets("fig5_7deg")
        with pytest.raises(ValueError):
            grid_presets("bogus")

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            AugmentationGrid(thetas=(), lambdas=(1.0,), sigmas=(1,))
        with pytest.raises(ValueError):
            AugmentationGrid(thetas=(4.0,), lambdas=(1.0,), sigmas=(1,))
        with pytest.raises(ValueError):
            AugmentationGrid(thetas=(0.0,), lambdas=(-1.0,), sigmas=(1,))
        with pytest.raises(ValueError):
            AugmentationGrid(thetas=(0.0,), lambdas=(1.0,), sigmas=(0,))


class TestAugmentDataset:
    def test_identity_grid_is_identity(self, dual_arm, mini_demo):
        grid = AugmentationGrid(thetas=(0.0,), lambdas=(1.0,), sigmas=(1,))
        out = augment_dataset(dual_arm, Dataset(demos=(mini_demo,)), grid)
        assert len(out) == 1
        assert out.provenance == ("original",)
        assert np.abs(out.demos[0].q - mini_demo.q).max() <= 1e-9
        assert np.abs(out.demos[0].qdot - mini_demo.qdot).max() <= 1e-9

    def test_cardinality_and_order(self, dual_arm, mini_dataset):
        grid = AugmentationGrid(
            thetas=(0.0, np.pi / 3), lambdas=(0.8, 1.1), sigmas=(1, -1)
        )
        out = augment_dataset(dual_arm, mini_dataset, grid, morph_actions=morph(dual_arm))
        assert len(out) == len(mini_dataset) * len(grid) == 16
        # (demo index, grid index) ordering: first 8 demos share demo 0's times
        conds = [d.condition.as_tuple() for d in out.demos[:8]]
        expected = [c.as_tuple() for c in grid.elements()]
        assert conds == expected
        assert conds == [d.condition.as_tuple() for d in out.demos[8:]]

    def test_pushforward_consistency(self, dual_arm, mini_dataset):
        grid = AugmentationGrid(
            thetas=(-np.pi / 2, np.pi / 4), lambdas=(0.75, 1.25), sigmas=(1, -1)
        )
        actions = morph(dual_arm)
        out = augment_dataset(dual_arm, mini_dataset, grid, morph_actions=actions)
        bounds = np.cumsum([0] + [len(d) for d in mini_dataset.demos])
        for di, orig in enumerate(mini_dataset.demos):
            xdot_orig = np.einsum("nij,nj->ni", jacobian(dual_arm, orig.q), orig.qdot)
            for gi, cond in enumerate(grid.elements()):
                aug = out.demos[di * len(grid) + gi]
                dphi = task_differential(
                    cond.theta, cond.lam, cond.sigma, actions[1], dual_arm.dim_x
                )
                lhs = np.einsum("nij,nj->ni", jacobian(dual_arm, aug.q), aug.qdot)
                assert np.abs(lhs - xdot_orig @ dphi.T).max() <= 1e-8

    def test_task_image_equivariance(self, dual_arm, mini_demo):
        actions = morph(dual_arm)
        grid = AugmentationGrid(thetas=(np.pi / 2,), lambdas=(1.25,), sigmas=(-1,))
        out = augment_dataset(
            dual_arm, Dataset(demos=(mini_demo,)), grid, morph_actions=actions
        )
        cond = grid.elements()[0]
        dphi = task_differential(cond.theta, cond.lam, cond.sigma, actions[1], 4)
        x_orig = forward_kinematics(dual_arm, mini_demo.q)
        x_aug = forward_kinematics(dual_arm, out.demos[0].q)
        assert np.abs(x_aug - x_orig @ dphi.T).max() <= 1e-5

    def test_reflection_needs_morph_action(self, dual_arm, mini_demo):
        grid = AugmentationGrid(thetas=(0.0,), lambdas=(1.0,), sigmas=(-1,))
        with pytest.raises(ValueError, match="morphological"):
            augment_dataset(dual_arm, Dataset(demos=(mini_demo,)), grid)

    def test_non_horizontal_demo_rejected(self, dual_arm, mini_demo):
        qdot_bad = np.array(mini_demo.qdot)
        qdot_bad[5] += 0.01  # generic bump has a vertical component
        bad = Demonstration(times=mini_demo.times, q=mini_demo.q, qdot=qdot_bad)
        grid = AugmentationGrid(thetas=(0.0,), lambdas=(1.0,), sigmas=(1,))
        with pytest.raises(ValueError, match="not horizontal"):
            augment_dataset(dual_arm, Dataset(demos=(bad,)), grid)


class TestNominalTransform:
    def test_identity(self, dual_arm, mini_demo):
        out = nominal_transform(dual_arm, mini_demo, ConditionVector())
        assert np.abs(out.q - mini_demo.q).max() <= 1e-9

    def test_rotated_task_trace(self, dual_arm, mini_demo):
        cond = ConditionVector(theta=np.pi / 2, lam=1.0, sigma=1)
        out = nominal_transform(dual_arm, mini_demo, cond)
        dphi = task_differential(np.pi / 2, 1.0, 1, None, 4)
        assert np.abs(
            forward_kinematics(dual_arm, out.q)
            - forward_kinematics(dual_arm, mini_demo.q) @ dphi.T
        ).max() <= 1e-5

    def test_reflected_task_trace(self, dual_arm, mini_demo):
        actions = morph(dual_arm)
        cond = ConditionVector(theta=0.0, lam=1.0, sigma=-1)
        out = nominal_transform(dual_arm, mini_demo, cond, morph_actions=actions)
        x_ref = forward_kinematics(dual_arm, mini_demo.q) @ actions[1].matrix(1).T
        assert np.abs(forward_kinematics(dual_arm, out.q) - x_ref).max() <= 1e-5

    def test_single_factor_inverse_recovery(self, dual_arm, mini_demo):
        # each one-parameter factor undoes itself exactly in Q; for composed
        # elements only the task-space image is recovered (the lifted flows
        # carry curvature and need not commute in Q)
        for cond, inv in (
            (ConditionVector(theta=0.8), ConditionVector(theta=-0.8)),
            (ConditionVector(lam=1.25), ConditionVector(lam=0.8)),
        ):
            once = nominal_transform(dual_arm, mini_demo, cond)
            back = nominal_transform(dual_arm, once.with_condition(ConditionVector()), inv)
            assert np.abs(back.q - mini_demo.q).max() <= 2e-6

    def test_composed_inverse_recovers_task_image(self, dual_arm, mini_demo):
        cond = ConditionVector(theta=0.9, lam=0.75)
        inv = ConditionVector(theta=-0.9, lam=1.0 / 0.75)
        once = nominal_transform(dual_arm, mini_demo, cond)
        back = nominal_transform(dual_arm, once.with_condition(ConditionVector()), inv)
        assert np.abs(
            forward_kinematics(dual_arm, back.q) - forward_kinematics(dual_arm, mini_demo.q)
        ).max() <= 2e-6


class TestDatasetIO:
    def test_round_trip(self, tmp_path, dual_arm, mini_dataset):
        grid = AugmentationGrid(thetas=(0.0, np.pi / 2), lambdas=(1.0,), sigmas=(1,))
        out = augment_dataset(dual_arm, mini_dataset, grid)
        save_dataset(out, tmp_path / "data")
        loaded = load_dataset(tmp_path / "data")
        assert loaded.provenance == out.provenance
        for a, b in zip(loaded.demos, out.demos):
            assert_allclose(a.q, b.q)
            assert_allclose(a.qdot, b.qdot)
            assert a.condition == b.condition
