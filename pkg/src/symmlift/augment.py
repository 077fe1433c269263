"""Symmetry-driven dataset augmentation: transform demonstration
configurations through lifted flows (scaling, then rotation) and the
morphological swap matrix, and push velocities through the task-space
differential.

Augmentation applies to original demonstrations: the new condition label is
the absolute transform (theta, lam, sigma).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .dataset import ConditionVector, Dataset, Demonstration
from .kinematics import RobotModel, _pinv_apply, jacobian, tangent_decompose
from .symmetry import SCALING, SO2, LinearAction
from .transfer import DEFAULT_FLOW_STEP, integrate_lifted_flow

HORIZONTALITY_TOL = 1e-6
FIG5_INTERVALS_DEG = (5, 10, 15, 30, 45, 60, 75, 90)
TABLE1_LAMBDAS = (0.5, 0.75, 1.0, 1.25)


@dataclass(frozen=True)
class AugmentationGrid:
    """Finite sets of group elements per symmetry factor; the augmented set
    is the product thetas x lambdas x sigmas."""

    thetas: tuple[float, ...]
    lambdas: tuple[float, ...]
    sigmas: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "thetas", tuple(float(t) for t in self.thetas))
        object.__setattr__(self, "lambdas", tuple(float(l) for l in self.lambdas))
        object.__setattr__(self, "sigmas", tuple(int(s) for s in self.sigmas))
        if not (self.thetas and self.lambdas and self.sigmas):
            raise ValueError("grid factors must be non-empty")
        if any(not -np.pi <= t <= np.pi for t in self.thetas):
            raise ValueError("rotation angles must lie in [-pi, pi]")
        if any(l <= 0 for l in self.lambdas):
            raise ValueError("scaling factors must be positive")
        if any(s not in (1, -1) for s in self.sigmas):
            raise ValueError("sigmas must be a subset of {+1, -1}")

    def __len__(self) -> int:
        return len(self.thetas) * len(self.lambdas) * len(self.sigmas)

    def elements(self) -> list[ConditionVector]:
        return [
            ConditionVector(theta=t, lam=l, sigma=s)
            for t, l, s in itertools.product(self.thetas, self.lambdas, self.sigmas)
        ]


def _theta_multiples(interval_deg: float) -> tuple[float, ...]:
    k_max = int(round(180.0 / interval_deg)) if 180.0 % interval_deg == 0 else int(180.0 // interval_deg)
    degs = [k * interval_deg for k in range(-k_max, k_max + 1)]
    if degs[0] == -180.0 and degs[-1] == 180.0:
        degs = degs[1:]  # -180 and +180 are the same rotation
    return tuple(np.deg2rad(d) for d in degs)


def grid_presets(name: str) -> AugmentationGrid:
    """Named grids: ``fig5_<k>deg`` (rotations only at k-degree increments,
    k in {5,10,15,30,45,60,75,90}) and ``table1`` (30-degree rotations,
    scalings {0.5, 0.75, 1.0, 1.25}, both reflections)."""
    if name == "table1":
        return AugmentationGrid(
            thetas=_theta_multiples(30.0), lambdas=TABLE1_LAMBDAS, sigmas=(1, -1)
        )
    if name.startswith("fig5_") and name.endswith("deg"):
        k = name[len("fig5_") : -len("deg")]
        if k.isdigit() and int(k) in FIG5_INTERVALS_DEG:
            return AugmentationGrid(
                thetas=_theta_multiples(float(k)), lambdas=(1.0,), sigmas=(1,)
            )
    raise ValueError(f"unknown grid preset {name!r}")


def _check_horizontal(model: RobotModel, dataset: Dataset, tol: float = HORIZONTALITY_TOL) -> None:
    for i, demo in enumerate(dataset):
        vertical, _ = tangent_decompose(model, demo.q, demo.qdot)
        worst = np.abs(vertical).max()
        if worst > tol:
            raise ValueError(
                f"demonstration {i} is not horizontal (vertical velocity {worst:.2e})"
            )


def transformed_configurations(
    model: RobotModel,
    Q: np.ndarray,
    thetas,
    lambdas,
    h: float = DEFAULT_FLOW_STEP,
) -> dict[tuple[float, float], np.ndarray]:
    """Flow a row batch through every (theta, lam) pair: the scaling lift
    runs first (recording each log lam), then one rotation pass per scale
    records every theta. Composition order matches the task map
    R(theta) (lam I) x."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    n = Q.shape[0]
    lams = [float(l) for l in lambdas]
    scale_times = {l: float(np.log(l)) for l in lams}
    scaled = integrate_lifted_flow(model, SCALING, Q, scale_times.values(), h=h)
    # one rotation pass over all scale states at once: the per-step cost is
    # dominated by dispatch overhead, not batch size
    stacked = np.concatenate([scaled[scale_times[l]] for l in lams])
    rotated = integrate_lifted_flow(model, SO2, stacked, [float(t) for t in thetas], h=h)
    out: dict[tuple[float, float], np.ndarray] = {}
    for theta in thetas:
        block = rotated[float(theta)]
        for i, lam in enumerate(lams):
            out[(float(theta), lam)] = block[i * n : (i + 1) * n]
    return out


def task_differential(
    theta: float, lam: float, sigma: int, morph_action_x: LinearAction | None, dim_x: int
) -> np.ndarray:
    """dPhi_X of the composed element: reflection (last) after rotation
    after scaling, acting linearly on task coordinates."""
    blocks = dim_x // 2
    c, s = np.cos(theta), np.sin(theta)
    rot2 = np.array([[c, -s], [s, c]])
    d = np.zeros((dim_x, dim_x))
    for b in range(blocks):
        d[2 * b : 2 * b + 2, 2 * b : 2 * b + 2] = lam * rot2
    if sigma == -1:
        if morph_action_x is None:
            raise ValueError("sigma=-1 requires the morphological action")
        d = morph_action_x.matrix(1) @ d
    return d


def _transform_rows(
    model: RobotModel,
    Qp: np.ndarray,
    xdot: np.ndarray,
    cond: ConditionVector,
    morph_actions: tuple[LinearAction, LinearAction] | None,
) -> tuple[np.ndarray, np.ndarray]:
    """Finish one grid element from pre-flowed states: apply the swap matrix
    for sigma=-1 and push the original task velocities to the new rows."""
    if cond.sigma == -1:
        if morph_actions is None:
            raise ValueError("sigma=-1 requires the morphological action")
        Qp = Qp @ morph_actions[0].matrix(1).T
    dphi = task_differential(
        cond.theta, cond.lam, cond.sigma,
        morph_actions[1] if morph_actions else None, model.dim_x,
    )
    Qdotp = _pinv_apply(model, Qp, xdot @ dphi.T)
    return Qp, Qdotp


def augment_dataset(
    model: RobotModel,
    dataset: Dataset,
    grid: AugmentationGrid,
    morph_actions: tuple[LinearAction, LinearAction] | None = None,
    h: float = DEFAULT_FLOW_STEP,
) -> Dataset:
    """Transform every demonstration by every grid element.

    Configurations move along the lifted scaling and rotation flows with the
    swap matrix applied last; velocities are pushed through the task-space
    differential, qdot' = J+(q') dPhi_X J(q) qdot, which agrees with the
    configuration-space differential on horizontal rows. Output order is
    (demonstration index, grid element index); output size is
    len(dataset) * len(grid).
    """
    if -1 in grid.sigmas and morph_actions is None:
        raise ValueError("grid includes reflections but no morphological action was given")
    _check_horizontal(model, dataset)
    Q_all = np.concatenate([d.q for d in dataset.demos])
    xdot_all = np.einsum(
        "nij,nj->ni", jacobian(model, Q_all), np.concatenate([d.qdot for d in dataset.demos])
    )
    states = transformed_configurations(model, Q_all, grid.thetas, grid.lambdas, h=h)
    bounds = np.cumsum([0] + [len(d) for d in dataset.demos])
    demos, provenance = [], []
    elements = grid.elements()
    for di, demo in enumerate(dataset.demos):
        rows = slice(bounds[di], bounds[di + 1])
        for cond in elements:
            Qp, Qdotp = _transform_rows(
                model, states[(cond.theta, cond.lam)][rows], xdot_all[rows],
                cond, morph_actions,
            )
            demos.append(
                Demonstration(times=demo.times, q=Qp, qdot=Qdotp, condition=cond)
            )
            provenance.append("original" if cond.is_identity else "augmented")
    return Dataset(demos=tuple(demos), provenance=tuple(provenance))


def nominal_transform(
    model: RobotModel,
    demo: Demonstration,
    cond: ConditionVector,
    morph_actions: tuple[LinearAction, LinearAction] | None = None,
    h: float = DEFAULT_FLOW_STEP,
) -> Demonstration:
    """Transform a single demonstration by a single group element (the
    ground-truth trajectory a conditioned policy should reproduce)."""
    if cond.sigma == -1 and morph_actions is None:
        raise ValueError("sigma=-1 requires the morphological action")
    _check_horizontal(model, Dataset(demos=(demo,)))
    xdot = np.einsum("nij,nj->ni", jacobian(model, demo.q), demo.qdot)
    states = transformed_configurations(model, demo.q, [cond.theta], [cond.lam], h=h)
    Qp, Qdotp = _transform_rows(
        model, states[(cond.theta, cond.lam)], xdot, cond, morph_actions
    )
    return Demonstration(times=demo.times, q=Qp, qdot=Qdotp, condition=cond)
