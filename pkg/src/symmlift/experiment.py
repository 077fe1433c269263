"""Reference planar dual-arm experiment: robot constants, letter paths,
demonstration generation, verification pipeline, RMSE table, and the
augmentation-density sweep.
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from .augment import (
    AugmentationGrid,
    FIG5_INTERVALS_DEG,
    augment_dataset,
    grid_presets,
)
from .compose import (
    commute_test,
    conjugation_twist,
    direct_product,
    lie_bracket,
    semidirect_product,
    verify_group_law,
)
from .dataset import Dataset, Demonstration
from .kinematics import (
    ChainSpec,
    RobotModel,
    forward_kinematics,
    jacobian,
    load_robot,
    solve_ik,
    tangent_decompose,
    track_task_path,
)
from .policy import (
    EvaluationTable,
    PolicyModel,
    evaluate_matrix,
    fit,
    rollout_batch,
    score_rollout,
)
from .symmetry import (
    SCALING,
    SO2,
    LinearAction,
    blockwise_action,
    build_morphological_action,
    cyclic_group,
    generator,
    generator_field,
)
from .transfer import (
    descend,
    lift_generator,
    sample_nonsingular_configurations,
    verify_flow_naturality,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

# Two mirrored 4-DoF arms. Bases sit on the x axis either side of the task
# origin; the zero convention points both arms along +y so that the bilateral
# swap with all-negative joint signs is exactly the reflection diag(-1, 1)
# across the vertical axis through the midpoint.
ARM_LINKS = (0.5, 0.5, 0.4, 0.3)
BASE_OFFSET = 0.4
ARM_ZERO_DIRECTION = np.pi / 2
JOINT_SIGNS = (-1.0, -1.0, -1.0, -1.0)
TASK_REFLECTION = ((-1.0, 0.0), (0.0, 1.0))

# Letter geometry. Both letters are centered on the task origin, which is
# the fixed point of the rotation and scaling actions, so every grid
# transform keeps the traces well inside both arms' workspaces.
LETTER_SCALE = 0.5
LETTER_SAMPLES = 200
LETTER_DURATION = 5.0
N_DEMONSTRATIONS = 5

# Test transforms for the RMSE table: all drawn from the training grid (the
# generalization-versus-density question is the sweep's job, not the table's).
TABLE1_TEST_THETAS_DEG = (0.0, -150.0, -60.0, 30.0, 120.0)
TABLE1_TEST_LAMBDAS = (0.5, 1.0, 1.25)


def reference_robot() -> RobotModel:
    """The dual-arm robot used throughout the letter-drawing experiment."""
    left = ChainSpec(
        base_position=(-BASE_OFFSET, 0.0),
        link_lengths=ARM_LINKS,
        base_orientation=ARM_ZERO_DIRECTION,
    )
    right = ChainSpec(
        base_position=(BASE_OFFSET, 0.0),
        link_lengths=ARM_LINKS,
        base_orientation=ARM_ZERO_DIRECTION,
    )
    return RobotModel(chains=(left, right))


def morphological_actions(model: RobotModel) -> tuple[LinearAction, LinearAction]:
    return build_morphological_action(
        model, joint_signs=np.array(JOINT_SIGNS), task_reflection=np.array(TASK_REFLECTION)
    )


def letter_c_path(n_samples: int, scale: float = LETTER_SCALE) -> np.ndarray:
    """A 270-degree circular arc opening to the right, centered on the
    origin, diameter = scale, traced counterclockwise from 45 degrees."""
    radius = scale / 2.0
    ang = np.pi / 4 + np.linspace(0.0, 1.5 * np.pi, n_samples)
    return radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)


def letter_n_path(n_samples: int, scale: float = LETTER_SCALE) -> np.ndarray:
    """Three constant-speed strokes (up, diagonal down, up) of an N centered
    on the origin, height = scale."""
    h, w = scale, 0.6 * scale
    corners = np.array(
        [[-w / 2, -h / 2], [-w / 2, h / 2], [w / 2, -h / 2], [w / 2, h / 2]]
    )
    seg_len = np.linalg.norm(np.diff(corners, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    arc = np.linspace(0.0, cum[-1], n_samples)
    out = np.empty((n_samples, 2))
    for k, s in enumerate(arc):
        i = min(np.searchsorted(cum, s, side="right") - 1, 2)
        frac = (s - cum[i]) / seg_len[i]
        out[k] = corners[i] + frac * (corners[i + 1] - corners[i])
    return out


def letter_paths(n_samples: int, scale: float = LETTER_SCALE) -> np.ndarray:
    """Concatenated task path: the left arm traces the C, the right the N."""
    return np.hstack([letter_c_path(n_samples, scale), letter_n_path(n_samples, scale)])


def generate_demonstrations(
    model: RobotModel,
    n_demos: int = N_DEMONSTRATIONS,
    n_samples: int = LETTER_SAMPLES,
    duration: float = LETTER_DURATION,
    scale: float = LETTER_SCALE,
    seed: int = 42,
) -> Dataset:
    """Letter demonstrations by resolved-rate tracking; the demonstrations
    share the task path but start from different redundant postures, so the
    configuration-space trajectories differ."""
    times = np.linspace(0.0, duration, n_samples)
    path = letter_paths(n_samples, scale)
    base_posture = np.array([0.6, -0.9, 0.7, -0.4, -0.6, 0.9, -0.7, 0.4])
    demos = []
    for i in range(n_demos):
        rng = np.random.default_rng(seed + i)
        for attempt in range(10):
            posture = base_posture + 0.25 * rng.standard_normal(model.dim_q)
            try:
                q0 = solve_ik(model, path[0], posture)
                demos.append(track_task_path(model, times, path, q0))
                break
            except ValueError:
                continue
        else:
            raise RuntimeError(f"could not initialize demonstration {i}")
    return Dataset(demos=tuple(demos))


@dataclass(frozen=True)
class ExperimentConfig:
    """Driver settings; everything is seeded and file-backed so repeated
    runs are byte-identical."""

    robot_file: str | None = None
    letter_scale: float = LETTER_SCALE
    letter_samples: int = LETTER_SAMPLES
    letter_duration: float = LETTER_DURATION
    n_demos: int = N_DEMONSTRATIONS
    grid: str = "table1"
    augment_flow_step: float = 1e-2
    policy_features: int = 2000
    policy_ridge: float = 1e-6
    rollout_step: float = 0.01
    seed: int = 42
    out_dir: str = "out"

    def load_model(self) -> RobotModel:
        if self.robot_file is None:
            return reference_robot()
        return load_robot(self.robot_file)

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        with open(path, "rb") as f:
            data = tomllib.load(f)
        robot = data.get("robot", {})
        if robot.get("file") and not os.path.isabs(robot["file"]):
            robot["file"] = os.path.join(os.path.dirname(os.path.abspath(path)), robot["file"])
        letters = data.get("letters", {})
        augment = data.get("augment", {})
        policy = data.get("policy", {})
        rollout = data.get("rollout", {})
        cfg = cls(
            robot_file=robot.get("file"),
            letter_scale=letters.get("scale", LETTER_SCALE),
            letter_samples=letters.get("samples", LETTER_SAMPLES),
            letter_duration=letters.get("duration", LETTER_DURATION),
            n_demos=letters.get("demos", N_DEMONSTRATIONS),
            grid=augment.get("grid", "table1"),
            augment_flow_step=augment.get("flow_step", 1e-2),
            policy_features=policy.get("features", 2000),
            policy_ridge=policy.get("ridge", 1e-6),
            rollout_step=rollout.get("step", 0.01),
            seed=data.get("seed", 42),
            out_dir=data.get("out", "out"),
        )
        if cfg.robot_file is not None and not os.path.exists(cfg.robot_file):
            raise FileNotFoundError(f"robot file {cfg.robot_file} does not exist")
        return cfg

    def demonstrations(self, model: RobotModel) -> Dataset:
        return generate_demonstrations(
            model,
            n_demos=self.n_demos,
            n_samples=self.letter_samples,
            duration=self.letter_duration,
            scale=self.letter_scale,
            seed=self.seed,
        )


def atomic_write_text(path, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as f:
        f.write(text)
    os.replace(tmp, path)


def atomic_write_json(path, data) -> None:
    atomic_write_text(path, json.dumps(data, indent=2) + "\n")


# ---------------------------------------------------------------------------
# verification pipeline


def run_verify(
    config: ExperimentConfig, break_reflection: bool = False
) -> tuple[list[str], dict]:
    """Run every transfer/composition check on the configured robot.

    Returns (failed check names in order, full report dict). With
    ``break_reflection`` the candidate task reflection is corrupted to the
    identity, which must make the descend check fail.
    """
    model = config.load_model()
    rng = np.random.default_rng(config.seed)
    failures: list[str] = []
    report: dict = {}

    reflection = np.eye(2) if break_reflection else np.array(TASK_REFLECTION)
    action_q, action_x = build_morphological_action(
        model, joint_signs=np.array(JOINT_SIGNS), task_reflection=reflection
    )
    descend_report = descend(
        model, action_q, action_x, n_samples=100, tol=1e-10, seed=config.seed
    )
    report["descend"] = descend_report.to_json()
    if not descend_report.passed:
        failures.append("descend")

    Q = sample_nonsingular_configurations(model, 100, rng)
    X = forward_kinematics(model, Q)
    J = jacobian(model, Q)
    f_rel = {}
    worst_rel = worst_vert = 0.0
    for group in (SO2, SCALING):
        gen_x = generator_field(group, "X", model.dim_x)
        lifted = lift_generator(model, gen_x, Q)
        pushed = np.einsum("nij,nj->ni", J, lifted)
        rel = float(np.abs(pushed - generator(group, X)).max())
        vertical, _ = tangent_decompose(model, Q, lifted)
        vert = float(np.abs(vertical).max())
        f_rel[group.name] = {"max_relatedness_violation": rel, "max_vertical": vert}
        worst_rel, worst_vert = max(worst_rel, rel), max(worst_vert, vert)
    report["f_relatedness"] = {**f_rel, "tol": 1e-10}
    if worst_rel > 1e-10 or worst_vert > 1e-10:
        failures.append("f_relatedness")

    q0 = solve_ik(
        model,
        letter_paths(8, config.letter_scale)[0],
        np.array([0.6, -0.9, 0.7, -0.4, -0.6, 0.9, -0.7, 0.4])[: model.dim_q],
    )
    nat_rot = verify_flow_naturality(
        model, SO2, q0, np.linspace(0.0, np.pi, 8), h=1e-3, tol=1e-6
    )
    nat_scale = verify_flow_naturality(
        model, SCALING, q0, [0.0, np.log(0.5), np.log(2.0) / 2], h=1e-3, tol=1e-6
    )
    report["flow_naturality"] = {"so2": nat_rot.to_json(), "scaling": nat_scale.to_json()}
    if not (nat_rot.passed and nat_scale.passed):
        failures.append("flow_naturality")

    samples = rng.normal(scale=0.5, size=(50, 2))
    rot_f = generator_field(SO2, "X", 2)
    scale_f = generator_field(SCALING, "X", 2)
    worst_bracket = max(
        float(np.abs(lie_bracket(rot_f, scale_f, p)).max()) for p in samples
    )
    report["lie_bracket"] = {"max_rotation_scaling_bracket": worst_bracket, "tol": 1e-8}
    if worst_bracket > 1e-8:
        failures.append("lie_bracket")

    rot2 = blockwise_action(SO2, "X", 2)
    scale2 = blockwise_action(SCALING, "X", 2)
    commute = commute_test(rot2, scale2, samples[:10], tol=1e-10, seed=config.seed)
    report["commute"] = commute.to_json()
    if not commute.commute:
        failures.append("commute")

    try:
        prod = direct_product(rot2, scale2, samples[:10], seed=config.seed)
        example = prod.apply((np.pi / 2, 2.0), np.array([1.0, 0.0]))
        direct_err = float(np.abs(example - np.array([0.0, 2.0])).max())
        report["direct_product"] = {"example_error": direct_err, "tol": 1e-12}
        if direct_err > 1e-12:
            failures.append("direct_product")
    except ValueError as exc:
        report["direct_product"] = {"error": str(exc)}
        failures.append("direct_product")

    mats = (np.eye(2), np.diag([1.0, -1.0]))
    refl = LinearAction(space="X", dim=2, group=cyclic_group(2), matrix_fn=lambda g: mats[g])
    try:
        twist = conjugation_twist(refl, rot2)
        twist_err = max(
            abs(twist(1)(t) + t) for t in np.linspace(-np.pi, np.pi, 16, endpoint=False)
        )
        o2 = semidirect_product(refl, rot2, twist, seed=config.seed)
        law_err = verify_group_law(
            o2, samples[:5], n_pairs=100, tol=1e-10, seed=config.seed
        )
        report["semidirect_product"] = {
            "twist_reversal_error": float(twist_err),
            "group_law_error": float(law_err),
            "tol": 1e-10,
        }
        if twist_err > 1e-12:
            failures.append("semidirect_product")
    except ValueError as exc:
        report["semidirect_product"] = {"error": str(exc)}
        failures.append("semidirect_product")

    # which products compose the experiment's full symmetry group: the
    # morphological swap twists rotations (their task actions do not
    # commute) while scaling commutes with everything
    morph_x = build_morphological_action(
        model, joint_signs=np.array(JOINT_SIGNS), task_reflection=np.array(TASK_REFLECTION)
    )[1]
    rot4 = blockwise_action(SO2, "X", model.dim_x)
    scale4 = blockwise_action(SCALING, "X", model.dim_x)
    task_samples = rng.normal(scale=0.5, size=(10, model.dim_x))
    report["composition_structure"] = {
        "morphological_vs_rotation": (
            "direct" if commute_test(morph_x, rot4, task_samples).commute else "semidirect"
        ),
        "morphological_vs_scaling": (
            "direct" if commute_test(morph_x, scale4, task_samples).commute else "semidirect"
        ),
        "rotation_vs_scaling": (
            "direct" if commute_test(rot4, scale4, task_samples).commute else "semidirect"
        ),
    }
    return failures, report


# ---------------------------------------------------------------------------
# table-1 style experiment


def table1_policy_grids() -> dict[str, AugmentationGrid]:
    full = grid_presets("table1")
    return {
        "pi": AugmentationGrid(thetas=(0.0,), lambdas=(1.0,), sigmas=(1,)),
        "pi_r": AugmentationGrid(thetas=full.thetas, lambdas=(1.0,), sigmas=(1,)),
        "pi_rt": AugmentationGrid(thetas=full.thetas, lambdas=full.lambdas, sigmas=(1,)),
        "pi_mrt": full,
    }


def table1_test_grids() -> dict[str, AugmentationGrid]:
    thetas = tuple(np.deg2rad(TABLE1_TEST_THETAS_DEG))
    return {
        "original": AugmentationGrid(thetas=(0.0,), lambdas=(1.0,), sigmas=(1,)),
        "g_r": AugmentationGrid(thetas=thetas, lambdas=(1.0,), sigmas=(1,)),
        "g_rt": AugmentationGrid(thetas=thetas, lambdas=TABLE1_TEST_LAMBDAS, sigmas=(1,)),
        "g_mrt": AugmentationGrid(thetas=thetas, lambdas=TABLE1_TEST_LAMBDAS, sigmas=(1, -1)),
    }


def slice_augmented(
    full: Dataset, full_grid: AugmentationGrid, sub: AugmentationGrid, n_demos: int
) -> list[list[Demonstration]]:
    """Select, per original demonstration, the transforms of a sub-grid from
    one full augmentation pass (every sub-grid element must be in the full
    grid)."""
    index = {c.as_tuple(): i for i, c in enumerate(full_grid.elements())}
    per_demo = []
    stride = len(full_grid)
    for di in range(n_demos):
        rows = []
        for cond in sub.elements():
            key = cond.as_tuple()
            if key not in index:
                raise ValueError(f"transform {key} is not in the full grid")
            rows.append(full.demos[di * stride + index[key]])
        per_demo.append(rows)
    return per_demo


def _subset_dataset(per_demo: list[list[Demonstration]]) -> Dataset:
    demos = tuple(d for rows in per_demo for d in rows)
    prov = tuple(
        "original" if d.condition.is_identity else "augmented" for d in demos
    )
    return Dataset(demos=demos, provenance=prov)


@dataclass(frozen=True, eq=False)
class Table1Result:
    table: EvaluationTable
    policies: dict[str, PolicyModel]
    demos: Dataset
    nominal_sets: dict[str, list[tuple[Demonstration, Demonstration]]]

    @property
    def csv(self) -> str:
        return self.table.to_csv()


def run_table1(config: ExperimentConfig) -> Table1Result:
    """Train the four policies (no augmentation, rotations, rotations +
    scalings, full composition) and evaluate each on the four test sets."""
    model = config.load_model()
    morph = morphological_actions(model)
    demos = config.demonstrations(model)
    full_grid = grid_presets("table1")
    full = augment_dataset(model, demos, full_grid, morph_actions=morph, h=config.augment_flow_step)

    policies: dict[str, PolicyModel] = {}
    for name, grid in table1_policy_grids().items():
        training = _subset_dataset(slice_augmented(full, full_grid, grid, len(demos)))
        policies[name] = fit(
            training,
            model,
            n_features=config.policy_features,
            ridge=config.policy_ridge,
            seed=config.seed,
        )

    nominal_sets = {}
    for gname, grid in table1_test_grids().items():
        per_demo = slice_augmented(full, full_grid, grid, len(demos))
        pairs = []
        for di, rows in enumerate(per_demo):
            for nom in rows:
                pairs.append((demos.demos[di], nom))
        nominal_sets[gname] = pairs

    table = evaluate_matrix(
        model,
        policies,
        table1_test_grids(),
        demos,
        morph_actions=morph,
        rollout_h=config.rollout_step,
        nominal_sets=nominal_sets,
    )
    return Table1Result(
        table=table, policies=policies, demos=demos, nominal_sets=nominal_sets
    )


# ---------------------------------------------------------------------------
# augmentation-density sweep


DENSITY_EVAL_THETAS_DEG = tuple(float(d) for d in range(-180, 180, 10))


@dataclass(frozen=True, eq=False)
class DensitySweepResult:
    intervals_deg: tuple[int, ...]
    eval_thetas_deg: tuple[float, ...]
    rmse: np.ndarray  # (n_intervals, n_eval_thetas)

    @property
    def worst_case(self) -> np.ndarray:
        return self.rmse.max(axis=1)

    def to_csv(self) -> str:
        header = "interval_deg," + ",".join(
            f"theta_{d:g}" for d in self.eval_thetas_deg
        ) + ",worst_case"
        lines = [header]
        for i, k in enumerate(self.intervals_deg):
            vals = ",".join(f"{v:.17g}" for v in self.rmse[i])
            lines.append(f"{k},{vals},{self.rmse[i].max():.17g}")
        return "\n".join(lines) + "\n"


def run_density_sweep(
    config: ExperimentConfig, intervals_deg=FIG5_INTERVALS_DEG
) -> DensitySweepResult:
    """Train rotation-augmented policies at several angular increments and
    evaluate their RMSE across a dense grid of rotated letters."""
    model = config.load_model()
    demos = config.demonstrations(model)
    base_grid = grid_presets("fig5_5deg")
    full = augment_dataset(model, demos, base_grid, h=config.augment_flow_step)

    eval_thetas = tuple(np.deg2rad(DENSITY_EVAL_THETAS_DEG))
    eval_grid = AugmentationGrid(thetas=eval_thetas, lambdas=(1.0,), sigmas=(1,))
    eval_per_demo = slice_augmented(full, base_grid, eval_grid, len(demos))
    pairs = [
        (demos.demos[di], nom)
        for di, rows in enumerate(eval_per_demo)
        for nom in rows
    ]

    rmse = np.zeros((len(intervals_deg), len(eval_thetas)))
    for i, k in enumerate(intervals_deg):
        grid = grid_presets(f"fig5_{k}deg")
        training = _subset_dataset(slice_augmented(full, base_grid, grid, len(demos)))
        policy = fit(
            training,
            model,
            n_features=config.policy_features,
            ridge=config.policy_ridge,
            seed=config.seed,
        )
        Q0 = np.stack([nom.q[0] for _, nom in pairs])
        conds = [nom.condition for _, nom in pairs]
        duration = float(pairs[0][1].times[-1])
        rollouts = rollout_batch(model, policy, Q0, conds, duration, h=config.rollout_step)
        errs = np.array(
            [
                score_rollout(model, r, nom).rmse_task
                for r, (_, nom) in zip(rollouts, pairs)
            ]
        ).reshape(len(demos), len(eval_thetas))
        rmse[i] = errs.mean(axis=0)
    return DensitySweepResult(
        intervals_deg=tuple(intervals_deg),
        eval_thetas_deg=DENSITY_EVAL_THETAS_DEG,
        rmse=rmse,
    )


# ---------------------------------------------------------------------------
# plotting (SVG)


def _plot_setup():
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "symmlift"
    import matplotlib.pyplot as plt

    return plt


def save_trajectory_overlays(path, model: RobotModel, table: EvaluationTable, nominal_sets) -> None:
    """Task-space traces of each policy's rollouts over the nominal letter
    traces, one panel per test set."""
    plt = _plot_setup()
    grid_names = table.grid_names
    fig, axes = plt.subplots(
        len(table.policy_names), len(grid_names),
        figsize=(3.2 * len(grid_names), 3.2 * len(table.policy_names)),
        squeeze=False,
    )
    for i, pname in enumerate(table.policy_names):
        for j, gname in enumerate(grid_names):
            ax = axes[i][j]
            scored = table.cells[(pname, gname)]
            for (orig, nom), result in zip(nominal_sets[gname], scored):
                x_nom = forward_kinematics(model, nom.q)
                x_roll = forward_kinematics(model, result.q)
                for c in range(x_nom.shape[1] // 2):
                    ax.plot(x_nom[:, 2 * c], x_nom[:, 2 * c + 1], color="0.7", lw=0.8)
                    ax.plot(x_roll[:, 2 * c], x_roll[:, 2 * c + 1], lw=0.8)
            ax.set_aspect("equal")
            ax.set_xticks([])
            ax.set_yticks([])
            if i == 0:
                ax.set_title(gname)
            if j == 0:
                ax.set_ylabel(pname)
    fig.tight_layout()
    tmp = f"{path}.tmp.svg"
    fig.savefig(tmp, format="svg", metadata={"Date": None})
    plt.close(fig)
    os.replace(tmp, path)


def save_density_plot(path, sweep: DensitySweepResult) -> None:
    plt = _plot_setup()
    fig, ax = plt.subplots(figsize=(7, 4))
    for i, k in enumerate(sweep.intervals_deg):
        ax.plot(sweep.eval_thetas_deg, sweep.rmse[i], marker=".", label=f"{k} deg")
    ax.set_xlabel("rotation angle (deg)")
    ax.set_ylabel("task-space RMSE (m)")
    ax.set_yscale("log")
    ax.legend(ncol=4, fontsize=8)
    fig.tight_layout()
    tmp = f"{path}.tmp.svg"
    fig.savefig(tmp, format="svg", metadata={"Date": None})
    plt.close(fig)
    os.replace(tmp, path)
