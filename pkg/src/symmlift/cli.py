"""Command-line driver: symmetry verification, dataset augmentation, policy
training and evaluation, and the two headline experiments (RMSE table and
augmentation-density sweep).
"""

from __future__ import annotations

import json
import os
from dataclasses import replace

import click
import numpy as np

from .augment import AugmentationGrid, augment_dataset, grid_presets
from .compose import (
    commute_test,
    conjugation_twist,
    direct_product,
    semidirect_product,
    verify_group_law,
)
from .dataset import load_dataset, save_dataset, save_demonstration
from .experiment import (
    ExperimentConfig,
    morphological_actions,
    run_density_sweep,
    run_table1,
    run_verify,
    save_density_plot,
    save_trajectory_overlays,
    atomic_write_json,
    atomic_write_text,
    table1_test_grids,
)
from .dataset import Demonstration
from .kinematics import load_robot, solve_ik
from .policy import PolicyModel, evaluate_matrix, fit
from .symmetry import (
    SCALING,
    SO2,
    SymmetrySpec,
    blockwise_action,
    build_morphological_action,
    generator_field,
    load_symmetry,
)
from .transfer import (
    descend,
    integrate_lifted_flow,
    lifted_field,
    verify_flow_naturality,
)


def _config(config_path, seed=None, out=None) -> ExperimentConfig:
    cfg = ExperimentConfig.from_toml(config_path) if config_path else ExperimentConfig()
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if out is not None:
        cfg = replace(cfg, out_dir=out)
    return cfg


def _load_grid(spec: str) -> AugmentationGrid:
    try:
        return grid_presets(spec)
    except ValueError:
        if not os.path.exists(spec):
            raise click.UsageError(f"--grid {spec!r} is neither a preset nor a file")
    with open(spec) as f:
        data = json.load(f)
    thetas = data.get("thetas")
    if thetas is None and "thetas_deg" in data:
        thetas = [np.deg2rad(t) for t in data["thetas_deg"]]
    return AugmentationGrid(
        thetas=tuple(thetas),
        lambdas=tuple(data.get("lambdas", (1.0,))),
        sigmas=tuple(data.get("sigmas", (1,))),
    )


def _symmetry_actions(spec: SymmetrySpec, model):
    """Materialize a symmetry description against a robot (or the plane
    when no robot is involved)."""
    if spec.kind == "morphological":
        return build_morphological_action(
            model, np.array(spec.joint_signs), np.array(spec.task_reflection)
        )
    group = SO2 if spec.kind == "so2" else SCALING
    dim = model.dim_x if model is not None else 2
    return blockwise_action(group, "X", dim)


@click.group()
def main():
    """Cross-space symmetry transfer, composition, and symmetry-driven
    augmentation for the planar dual-arm letter experiment."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--robot", "robot_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
@click.option("--break-reflection", is_flag=True, help="corrupt the task reflection (check the checker)")
def verify(config_path, robot_path, seed, out, break_reflection):
    """Run all transfer and composition checks; exit 0 iff every one passes."""
    if config_path is None and robot_path is None:
        raise click.UsageError("a robot is required: pass --config or --robot")
    cfg = _config(config_path, seed, out)
    if robot_path is not None:
        cfg = replace(cfg, robot_file=robot_path)
    failures, report = run_verify(cfg, break_reflection=break_reflection)
    os.makedirs(cfg.out_dir, exist_ok=True)
    atomic_write_json(os.path.join(cfg.out_dir, "verify_report.json"), report)
    if failures:
        click.echo(f"FAILED: {failures[0]}", err=True)
        raise SystemExit(1)
    click.echo("all checks passed")


@main.command("descend")
@click.option("--robot", "robot_path", type=click.Path(exists=True), required=True)
@click.option("--symmetry", "symmetry_path", type=click.Path(exists=True), required=True)
@click.option("--samples", type=int, default=100, show_default=True)
@click.option("--tol", type=float, default=1e-10, show_default=True)
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--out", type=click.Path(), default="out", show_default=True)
def descend_cmd(robot_path, symmetry_path, samples, tol, seed, out):
    """Check that a joint-space symmetry descends through forward kinematics."""
    model = load_robot(robot_path)
    spec = load_symmetry(symmetry_path)
    if spec.kind != "morphological":
        raise click.UsageError("descend expects a morphological symmetry description")
    action_q, action_x = _symmetry_actions(spec, model)
    report = descend(model, action_q, action_x, n_samples=samples, tol=tol, seed=seed)
    os.makedirs(out, exist_ok=True)
    atomic_write_json(os.path.join(out, "descend_report.json"), report.to_json())
    click.echo(
        f"descend {'passed' if report.passed else 'FAILED'} "
        f"(max violation {report.max_violation:.3e} over {report.samples_tested} samples)"
    )
    raise SystemExit(0 if report.passed else 1)


@main.command("lift")
@click.option("--robot", "robot_path", type=click.Path(exists=True), required=True)
@click.option("--symmetry", "symmetry_path", type=click.Path(exists=True), required=True)
@click.option("--q0", "q0_str", type=str, default=None, help="comma-separated start configuration")
@click.option("--t-max", type=float, default=np.pi, show_default=True)
@click.option("--step", type=float, default=1e-3, show_default=True)
@click.option("--tol", type=float, default=1e-6, show_default=True)
@click.option("--out", type=click.Path(), default="out", show_default=True)
def lift_cmd(robot_path, symmetry_path, q0_str, t_max, step, tol, out):
    """Lift a task-space symmetry to joint space and verify flow naturality;
    writes the flowed trajectory as CSV."""
    model = load_robot(robot_path)
    spec = load_symmetry(symmetry_path)
    if spec.kind not in ("so2", "scaling"):
        raise click.UsageError("lift expects a one-parameter symmetry (so2 or scaling)")
    group = SO2 if spec.kind == "so2" else SCALING
    if q0_str is not None:
        q0 = np.array([float(v) for v in q0_str.split(",")])
    else:
        # a point near the task origin keeps the whole orbit reachable
        target = np.tile([0.2, 0.15], model.dim_x // 2) * np.repeat(
            np.where(np.arange(model.dim_x // 2) % 2 == 0, 1.0, -1.0), 2
        )
        seed_q = 0.5 * np.tile([1.0, -1.0], (model.dim_q + 1) // 2)[: model.dim_q]
        q0 = solve_ik(model, target, seed_q)
    t_grid = np.linspace(0.0, t_max, 17)
    report = verify_flow_naturality(model, group, q0, t_grid, h=step, tol=tol)
    states = integrate_lifted_flow(model, group, q0[None], t_grid, h=step)
    Q = np.stack([states[float(t)][0] for t in t_grid])
    Qdot = lifted_field(model, generator_field(group, "X", model.dim_x))(Q)
    os.makedirs(out, exist_ok=True)
    demo = Demonstration(times=t_grid + 0.0, q=Q, qdot=Qdot)
    save_demonstration(demo, os.path.join(out, "lifted_flow.csv"))
    atomic_write_json(os.path.join(out, "lift_report.json"), report.to_json())
    click.echo(
        f"lift naturality {'passed' if report.passed else 'FAILED'} "
        f"(max deviation {report.max_deviation:.3e})"
    )
    raise SystemExit(0 if report.passed else 1)


@main.command("compose")
@click.option("--symmetry", "symmetry_paths", type=click.Path(exists=True), multiple=True, required=True)
@click.option("--kind", type=click.Choice(["direct", "semidirect"]), required=True)
@click.option("--robot", "robot_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--out", type=click.Path(), default="out", show_default=True)
def compose_cmd(symmetry_paths, kind, robot_path, seed, out):
    """Compose two symmetries as a direct or semi-direct product and verify
    the construction."""
    if len(symmetry_paths) != 2:
        raise click.UsageError("exactly two --symmetry files are required")
    model = load_robot(robot_path) if robot_path else None
    specs = [load_symmetry(p) for p in symmetry_paths]
    if any(s.kind == "morphological" for s in specs) and model is None:
        raise click.UsageError("morphological factors need --robot")

    def factor(spec):
        if spec.kind == "morphological":
            return _symmetry_actions(spec, model)[1]  # task-space side
        return _symmetry_actions(spec, model)

    a, b = (factor(s) for s in specs)
    rng = np.random.default_rng(seed)
    samples = rng.normal(scale=0.5, size=(10, a.dim))
    report = {"kind": kind, "factors": [s.kind for s in specs]}
    ok = True
    try:
        if kind == "direct":
            composed = direct_product(a, b, samples, seed=seed)
            report["commute"] = commute_test(a, b, samples, seed=seed).to_json()
        else:
            twist = conjugation_twist(a, b)
            composed = semidirect_product(a, b, twist, seed=seed)
        report["group_law_error"] = float(
            verify_group_law(composed, samples[:5], n_pairs=100, seed=seed)
        )
    except ValueError as exc:
        report["error"] = str(exc)
        ok = False
    report["passed"] = ok
    os.makedirs(out, exist_ok=True)
    atomic_write_json(os.path.join(out, "compose_report.json"), report)
    click.echo(f"compose {kind} {'passed' if ok else 'FAILED'}")
    raise SystemExit(0 if ok else 1)


@main.command("augment")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--grid", "grid_spec", type=str, required=True, help="preset name or JSON file")
@click.option("--in", "in_dir", type=click.Path(exists=True), default=None,
              help="existing dataset directory (default: generate letter demonstrations)")
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
def augment_cmd(config_path, grid_spec, in_dir, seed, out):
    """Augment a demonstration dataset with symmetry transforms."""
    cfg = _config(config_path, seed, out)
    model = cfg.load_model()
    grid = _load_grid(grid_spec)
    demos = load_dataset(in_dir) if in_dir else cfg.demonstrations(model)
    morph = morphological_actions(model) if -1 in grid.sigmas else None
    augmented = augment_dataset(model, demos, grid, morph_actions=morph, h=cfg.augment_flow_step)
    out_dir = os.path.join(cfg.out_dir, "dataset_augmented")
    save_dataset(augmented, out_dir)
    click.echo(f"wrote {len(augmented)} demonstrations to {out_dir}")


@main.command("train")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--grid", "grid_spec", type=str, default=None, help="preset name or JSON file (default: config grid)")
@click.option("--in", "in_dir", type=click.Path(exists=True), default=None,
              help="existing (already augmented) dataset directory")
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
def train_cmd(config_path, grid_spec, in_dir, seed, out):
    """Train the conditioned policy on (augmented) letter demonstrations."""
    cfg = _config(config_path, seed, out)
    model = cfg.load_model()
    if in_dir:
        training = load_dataset(in_dir)
    else:
        grid = _load_grid(grid_spec or cfg.grid)
        demos = cfg.demonstrations(model)
        morph = morphological_actions(model) if -1 in grid.sigmas else None
        training = augment_dataset(model, demos, grid, morph_actions=morph, h=cfg.augment_flow_step)
    policy = fit(
        training, model, n_features=cfg.policy_features, ridge=cfg.policy_ridge, seed=cfg.seed
    )
    os.makedirs(cfg.out_dir, exist_ok=True)
    model_path = os.path.join(cfg.out_dir, "policy.npz")
    policy.save(model_path)
    atomic_write_json(
        os.path.join(cfg.out_dir, "train_report.json"),
        {"rows": sum(len(d) for d in training), "train_rmse": policy.train_rmse},
    )
    click.echo(f"trained on {len(training)} demonstrations (train RMSE {policy.train_rmse:.4f}); saved {model_path}")


@main.command("eval")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--test-grid", "grid_spec", type=str, default="table1_tests",
              show_default=True, help="preset, JSON file, or 'table1_tests' for all four sets")
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
def eval_cmd(config_path, model_path, grid_spec, seed, out):
    """Evaluate a trained policy's RMSE against nominal trajectories."""
    cfg = _config(config_path, seed, out)
    model = cfg.load_model()
    policy = PolicyModel.load(model_path)
    grids = table1_test_grids() if grid_spec == "table1_tests" else {grid_spec: _load_grid(grid_spec)}
    demos = cfg.demonstrations(model)
    morph = morphological_actions(model)
    table = evaluate_matrix(
        model, {"policy": policy}, grids, demos,
        morph_actions=morph, flow_h=cfg.augment_flow_step, rollout_h=cfg.rollout_step,
    )
    os.makedirs(cfg.out_dir, exist_ok=True)
    csv_path = os.path.join(cfg.out_dir, "eval.csv")
    atomic_write_text(csv_path, table.to_csv())
    click.echo(table.to_csv().strip())
    click.echo(f"wrote {csv_path}")


@main.command("reproduce-table1")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
def reproduce_table1(config_path, seed, out):
    """Train the four policies and write the policy-vs-testset RMSE table."""
    cfg = _config(config_path, seed, out)
    result = run_table1(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    csv_path = os.path.join(cfg.out_dir, "table1.csv")
    atomic_write_text(csv_path, result.csv)
    for name, policy in result.policies.items():
        policy.save(os.path.join(cfg.out_dir, f"policy_{name}.npz"))
    save_trajectory_overlays(
        os.path.join(cfg.out_dir, "table1_trajectories.svg"),
        cfg.load_model(), result.table, result.nominal_sets,
    )
    click.echo(result.csv.strip())
    click.echo(f"wrote {csv_path}")


@main.command("density-sweep")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
def density_sweep(config_path, seed, out):
    """Train rotation policies at several augmentation densities and write
    the RMSE-versus-angle curves."""
    cfg = _config(config_path, seed, out)
    sweep = run_density_sweep(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    csv_path = os.path.join(cfg.out_dir, "density_sweep.csv")
    atomic_write_text(csv_path, sweep.to_csv())
    save_density_plot(os.path.join(cfg.out_dir, "density_sweep.svg"), sweep)
    click.echo(sweep.to_csv().strip())
    click.echo(f"wrote {csv_path}")


if __name__ == "__main__":
    main()
