"""Conditioned behavior-cloning policy: ridge regression on random Fourier
features, with Euler rollout and RMSE evaluation against nominal
trajectories.

Demonstrations are horizontal by construction, so the learned map factors
through the task space: the features are computed on (f(q), s), the ridge
targets are the task velocities J(q) qdot, and predictions return to joint
space through the weighted pseudoinverse. This keeps the regression in the
low-dimensional space the letters actually live in while the policy remains
a plain function of (q, s).
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, replace

import numpy as np

from .augment import AugmentationGrid, nominal_transform
from .dataset import ConditionVector, Dataset, Demonstration
from .kinematics import (
    RobotModel,
    _min_sv_squared,
    _pinv_apply,
    forward_kinematics,
    jacobian,
)
from .symmetry import LinearAction

DEFAULT_FEATURES = 2000
DEFAULT_RIDGE = 1e-6
# fraction of the per-dimension median deviation used as kernel bandwidth;
# letter-scale detail needs a kernel narrower than the raw data spread
BANDWIDTH_SCALE = 0.3
ROLLOUT_STEP = 0.01
JOINT_DIVERGENCE_BOUND = 4 * np.pi
WORKSPACE_DIVERGENCE_FACTOR = 2.0
PREDICT_DAMPING = 1e-6
PREDICT_DAMPING_MIN_SV = 1e-4


def encode_condition(s: ConditionVector | np.ndarray) -> np.ndarray:
    """Map (theta, lam, sigma) rows to the regression encoding
    (cos theta, sin theta, log lam, sigma): periodic in the angle,
    multiplicative scalings become additive."""
    if isinstance(s, ConditionVector):
        s = np.array(s.as_tuple())
    s = np.atleast_2d(np.asarray(s, dtype=float))
    return np.stack(
        [np.cos(s[:, 0]), np.sin(s[:, 0]), np.log(s[:, 1]), s[:, 2]], axis=1
    )


@dataclass(frozen=True, eq=False)
class PolicyModel:
    """Random-Fourier-feature ridge regressor behind pi(q, s) = qdot.

    Deterministic given the seed: the frequency matrix, phases and
    per-dimension bandwidths all come from one seeded generator. The robot
    is part of the model (forward kinematics and the pseudoinverse are the
    fixed input/output maps around the learned weights).
    """

    robot: RobotModel
    omega: np.ndarray  # (n_features, dim_x + 4), bandwidth-scaled
    phase: np.ndarray  # (n_features,)
    weights: np.ndarray  # (n_features, dim_x)
    bandwidths: np.ndarray  # (dim_x + 4,)
    ridge: float
    seed: int
    train_rmse: float = float("nan")

    @property
    def n_features(self) -> int:
        return self.omega.shape[0]

    @property
    def dim_q(self) -> int:
        return self.robot.dim_q

    def features(self, X: np.ndarray, S_enc: np.ndarray) -> np.ndarray:
        Z = np.hstack([np.atleast_2d(X), np.atleast_2d(S_enc)])
        if Z.shape[1] != self.omega.shape[1]:
            raise ValueError(
                f"expected input dimension {self.omega.shape[1]}, got {Z.shape[1]}"
            )
        return np.sqrt(2.0 / self.n_features) * np.cos(Z @ self.omega.T + self.phase)

    def predict_task_velocity(self, X: np.ndarray, S_enc: np.ndarray) -> np.ndarray:
        return self.features(X, S_enc) @ self.weights

    def predict_encoded(self, Q: np.ndarray, S_enc: np.ndarray) -> np.ndarray:
        """Joint velocities: the horizontal lift of the predicted task
        velocity; rows near singular configurations use damped least
        squares so the output stays finite everywhere."""
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if Q.shape[1] != self.dim_q:
            raise ValueError(f"expected {self.dim_q} joint values, got {Q.shape[1]}")
        xdot = self.predict_task_velocity(forward_kinematics(self.robot, Q), S_enc)
        healthy = _min_sv_squared(self.robot, Q) >= PREDICT_DAMPING_MIN_SV**2
        out = np.empty_like(Q)
        if healthy.any():
            out[healthy] = _pinv_apply(self.robot, Q[healthy], xdot[healthy])
        if (~healthy).any():
            out[~healthy] = _pinv_apply(
                self.robot, Q[~healthy], xdot[~healthy], damping=PREDICT_DAMPING
            )
        return out

    def save(self, path) -> None:
        np.savez(
            path,
            robot=json.dumps(self.robot.to_json()),
            omega=self.omega, phase=self.phase, weights=self.weights,
            bandwidths=self.bandwidths,
            scalars=np.array([self.ridge, float(self.seed), self.train_rmse]),
        )

    @classmethod
    def load(cls, path) -> "PolicyModel":
        data = np.load(path)
        ridge, seed, train_rmse = data["scalars"]
        return cls(
            robot=RobotModel.from_json(json.loads(str(data["robot"]))),
            omega=data["omega"], phase=data["phase"], weights=data["weights"],
            bandwidths=data["bandwidths"], ridge=float(ridge), seed=int(seed),
            train_rmse=float(train_rmse),
        )


def _median_bandwidths(Z: np.ndarray) -> np.ndarray:
    """Per-dimension median absolute deviation about the median, scaled by
    BANDWIDTH_SCALE; exactly invariant under dataset duplication. Constant
    dimensions fall back to bandwidth 1."""
    med = np.median(np.abs(Z - np.median(Z, axis=0)), axis=0)
    return np.where(med > 1e-12, BANDWIDTH_SCALE * med, 1.0)


def fit(
    dataset: Dataset,
    robot: RobotModel,
    n_features: int = DEFAULT_FEATURES,
    ridge: float = DEFAULT_RIDGE,
    seed: int = 42,
    chunk: int = 8192,
) -> PolicyModel:
    """Closed-form ridge fit.

    Normal equations are accumulated per-sample-mean, so duplicating the
    dataset leaves the weights unchanged. The reported training RMSE is in
    joint velocity (rad/s) after lifting predictions back to joint space.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    Q, Qdot, S = dataset.stack_rows()
    X = forward_kinematics(robot, Q)
    Xdot = np.einsum("nij,nj->ni", jacobian(robot, Q), Qdot)
    S_enc = encode_condition(S)
    Z = np.hstack([X, S_enc])
    n, d = Z.shape
    if np.ptp(Z, axis=0).max() < 1e-12:
        raise ValueError("degenerate features: all training inputs are identical")
    rng = np.random.default_rng(seed)
    bandwidths = _median_bandwidths(Z)
    omega = rng.standard_normal((n_features, d)) / bandwidths
    phase = rng.uniform(0.0, 2.0 * np.pi, n_features)
    stub = PolicyModel(
        robot=robot, omega=omega, phase=phase,
        weights=np.zeros((n_features, X.shape[1])),
        bandwidths=bandwidths, ridge=ridge, seed=seed,
    )
    gram = np.zeros((n_features, n_features))
    moment = np.zeros((n_features, X.shape[1]))
    for start in range(0, n, chunk):
        phi = stub.features(X[start : start + chunk], S_enc[start : start + chunk])
        gram += phi.T @ phi
        moment += phi.T @ Xdot[start : start + chunk]
    gram /= n
    moment /= n
    weights = np.linalg.solve(gram + ridge * np.eye(n_features), moment)
    model = replace(stub, weights=weights)
    sq_err, count = 0.0, 0
    for start in range(0, n, chunk):
        pred = model.predict_encoded(Q[start : start + chunk], S_enc[start : start + chunk])
        sq_err += float(((pred - Qdot[start : start + chunk]) ** 2).sum())
        count += pred.size
    return replace(model, train_rmse=float(np.sqrt(sq_err / count)))


def predict(policy: PolicyModel, q: np.ndarray, s: ConditionVector) -> np.ndarray:
    """Policy output for a single configuration and condition."""
    q = np.asarray(q, dtype=float)
    return policy.predict_encoded(q[None], encode_condition(s))[0]


@dataclass(frozen=True, eq=False)
class RolloutResult:
    """An integrated policy trajectory; when the rollout diverges the
    trajectory is truncated at the first out-of-bounds state."""

    times: np.ndarray
    q: np.ndarray
    diverged: bool
    rmse_joint: float | None = None
    rmse_task: float | None = None

    def __len__(self) -> int:
        return self.times.shape[0]


def _divergence_mask(model: RobotModel, Q: np.ndarray) -> np.ndarray:
    bad = np.abs(Q).max(axis=1) > JOINT_DIVERGENCE_BOUND
    X = forward_kinematics(model, Q)
    for ci, c in enumerate(model.chains):
        r = np.linalg.norm(X[:, 2 * ci : 2 * ci + 2] - np.asarray(c.base_position), axis=1)
        bad |= r > WORKSPACE_DIVERGENCE_FACTOR * c.reach
    return bad


def rollout_batch(
    model: RobotModel,
    policy: PolicyModel,
    Q0: np.ndarray,
    conditions: list[ConditionVector],
    duration: float,
    h: float = ROLLOUT_STEP,
) -> list[RolloutResult]:
    """Euler-integrate the policy from several starts at once; diverged
    rows freeze in place and are truncated in the returned results."""
    Q0 = np.atleast_2d(np.asarray(Q0, dtype=float))
    n = Q0.shape[0]
    S_enc = np.concatenate([encode_condition(c) for c in conditions])
    n_steps = int(round(duration / h))
    times = np.arange(n_steps + 1) * h
    traj = np.empty((n_steps + 1, n, Q0.shape[1]))
    traj[0] = Q0
    cut = np.full(n, n_steps + 1, dtype=int)  # first bad index, if any
    Q = Q0.copy()
    for k in range(1, n_steps + 1):
        Q = Q + h * policy.predict_encoded(Q, S_enc)
        bad = _divergence_mask(model, Q) & (cut > n_steps)
        cut[bad] = k
        traj[k] = Q
    results = []
    for i in range(n):
        end = min(cut[i] + 1, n_steps + 1)
        results.append(
            RolloutResult(
                times=times[:end], q=traj[:end, i], diverged=bool(cut[i] <= n_steps)
            )
        )
    return results


def rollout(
    model: RobotModel,
    policy: PolicyModel,
    q0: np.ndarray,
    s: ConditionVector,
    duration: float,
    h: float = ROLLOUT_STEP,
) -> RolloutResult:
    """Integrate q <- q + h pi(q, s) for the given duration; divergence
    (joint norm beyond 4 pi, or an end-effector leaving twice its chain's
    reach) truncates rather than raises."""
    return rollout_batch(model, policy, np.asarray(q0)[None], [s], duration, h)[0]


def score_rollout(
    model: RobotModel, result: RolloutResult, nominal: Demonstration
) -> RolloutResult:
    """RMSE of the rollout against a nominal trajectory, joint-space and
    task-space, over the (possibly truncated) compared prefix; the nominal
    is resampled to the rollout grid by linear interpolation."""
    t = result.times
    q_nom = np.stack(
        [np.interp(t, nominal.times, nominal.q[:, j]) for j in range(nominal.dim_q)],
        axis=1,
    )
    rmse_joint = float(np.sqrt(((result.q - q_nom) ** 2).sum(axis=1).mean()))
    x_pred = forward_kinematics(model, result.q)
    x_nom = forward_kinematics(model, q_nom)
    rmse_task = float(np.sqrt(((x_pred - x_nom) ** 2).sum(axis=1).mean()))
    return replace(result, rmse_joint=rmse_joint, rmse_task=rmse_task)


@dataclass(frozen=True, eq=False)
class EvaluationTable:
    """Policies x test-grids task-space RMSE summary."""

    policy_names: tuple[str, ...]
    grid_names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray
    cells: dict

    def to_csv(self) -> str:
        lines = ["policy," + ",".join(f"{g}_mean,{g}_std" for g in self.grid_names)]
        for i, name in enumerate(self.policy_names):
            vals = []
            for j in range(len(self.grid_names)):
                vals += [f"{self.mean[i, j]:.17g}", f"{self.std[i, j]:.17g}"]
            lines.append(name + "," + ",".join(vals))
        return "\n".join(lines) + "\n"


def evaluate_matrix(
    model: RobotModel,
    policies: dict[str, PolicyModel],
    test_grids: dict[str, AugmentationGrid],
    demos: Dataset,
    morph_actions: tuple[LinearAction, LinearAction] | None = None,
    flow_h: float = 1e-2,
    rollout_h: float = ROLLOUT_STEP,
    nominal_sets: dict[str, list[tuple[Demonstration, Demonstration]]] | None = None,
) -> EvaluationTable:
    """Roll every policy out on every test grid and report task-space RMSE
    against the nominal (transformed) trajectories, mean and std over the
    demonstration x transform cells.

    ``nominal_sets`` can supply precomputed (original, nominal) pairs per
    grid name to avoid re-integrating shared transforms.
    """
    if nominal_sets is None:
        nominal_sets = {}
        for gname, grid in test_grids.items():
            pairs = []
            for demo in demos:
                for cond in grid.elements():
                    pairs.append(
                        (demo, nominal_transform(model, demo, cond, morph_actions, h=flow_h))
                    )
            nominal_sets[gname] = pairs
    policy_names = tuple(policies)
    grid_names = tuple(test_grids)
    mean = np.zeros((len(policy_names), len(grid_names)))
    std = np.zeros_like(mean)
    cells: dict = {}
    for i, pname in enumerate(policy_names):
        for j, gname in enumerate(grid_names):
            pairs = nominal_sets[gname]
            Q0 = np.stack([nom.q[0] for _, nom in pairs])
            conds = [nom.condition for _, nom in pairs]
            duration = float(pairs[0][1].times[-1])
            rollouts = rollout_batch(model, policies[pname], Q0, conds, duration, h=rollout_h)
            scored = [
                score_rollout(model, r, nom) for r, (_, nom) in zip(rollouts, pairs)
            ]
            errs = np.array([r.rmse_task for r in scored])
            mean[i, j] = errs.mean()
            std[i, j] = errs.std()
            cells[(pname, gname)] = scored
    return EvaluationTable(
        policy_names=policy_names, grid_names=grid_names, mean=mean, std=std, cells=cells
    )
