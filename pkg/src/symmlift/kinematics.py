"""Planar open-chain kinematics: FK, Jacobians, metric-weighted generalized
inverse, and the vertical/horizontal tangent split used for symmetry lifting.

All operations are pure functions of immutable inputs and accept either a
single configuration ``(dim_q,)`` or a batch ``(n, dim_q)``; batched outputs
gain a leading axis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import ConditionVector, Demonstration

SINGULARITY_TOL = 1e-8
TRACKING_ABORT_ERROR = 0.05


class SingularityError(RuntimeError):
    """Raised when an operation requires full row rank of the Jacobian but
    the configuration is at (or numerically near) a kinematic singularity."""


class TrackingDivergenceError(RuntimeError):
    """Raised when resolved-rate tracking drifts beyond the abort threshold."""


@dataclass(frozen=True)
class ChainSpec:
    """One planar open chain of revolute joints.

    ``base_orientation`` is the absolute direction (radians, from +x) of the
    first link at zero joint angles; mirrored dual-arm setups use it to align
    the zero conventions of paired arms.
    """

    base_position: tuple[float, float]
    link_lengths: tuple[float, ...]
    base_orientation: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "base_position", tuple(float(v) for v in self.base_position))
        object.__setattr__(self, "link_lengths", tuple(float(v) for v in self.link_lengths))
        if len(self.link_lengths) < 1:
            raise ValueError("chain needs at least one link")
        if any(l <= 0 for l in self.link_lengths):
            raise ValueError("link lengths must be positive")

    @property
    def dof(self) -> int:
        return len(self.link_lengths)

    @property
    def reach(self) -> float:
        return float(sum(self.link_lengths))


@dataclass(frozen=True, eq=False)
class RobotModel:
    """A fixed-base robot made of independent planar chains plus a constant
    SPD configuration-space metric.

    dim_q is the total joint count, dim_x is 2 per chain. Immutable and safe
    to share across threads; every kinematics operation is a pure function.
    """

    chains: tuple[ChainSpec, ...]
    metric: np.ndarray = None  # type: ignore[assignment]
    _metric_inv: np.ndarray = field(init=False, repr=False, compare=False, default=None)  # type: ignore[assignment]

    def __post_init__(self):
        dim_q = self.dim_q
        metric = self.metric
        if metric is None:
            metric = np.eye(dim_q)
        metric = np.asarray(metric, dtype=float)
        if metric.shape != (dim_q, dim_q):
            raise ValueError(f"metric must be {dim_q}x{dim_q}, got {metric.shape}")
        if not np.allclose(metric, metric.T, atol=1e-12):
            raise ValueError("metric must be symmetric")
        if np.linalg.eigvalsh(metric).min() <= 1e-12:
            raise ValueError("metric must be positive definite")
        if self.dim_q < self.dim_x:
            raise ValueError("robot must have at least as many joints as task coordinates")
        object.__setattr__(self, "metric", metric)
        object.__setattr__(self, "_metric_inv", np.linalg.inv(metric))
        metric.setflags(write=False)

    @property
    def dim_q(self) -> int:
        return sum(c.dof for c in self.chains)

    @property
    def dim_x(self) -> int:
        return 2 * len(self.chains)

    @property
    def metric_inv(self) -> np.ndarray:
        return self._metric_inv

    @property
    def metric_is_identity(self) -> bool:
        return bool(np.array_equal(self.metric, np.eye(self.dim_q)))

    def joint_slices(self) -> list[slice]:
        out, k = [], 0
        for c in self.chains:
            out.append(slice(k, k + c.dof))
            k += c.dof
        return out

    def to_json(self) -> dict:
        return {
            "chains": [
                {
                    "base": list(c.base_position),
                    "links": list(c.link_lengths),
                    "orientation": c.base_orientation,
                }
                for c in self.chains
            ],
            "metric": "identity" if self.metric_is_identity else self.metric.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "RobotModel":
        chains = tuple(
            ChainSpec(
                base_position=tuple(ch["base"]),
                link_lengths=tuple(ch["links"]),
                base_orientation=float(ch.get("orientation", 0.0)),
            )
            for ch in data["chains"]
        )
        metric = data.get("metric", "identity")
        if isinstance(metric, str):
            if metric != "identity":
                raise ValueError(f"unknown metric keyword {metric!r}")
            metric = None
        else:
            metric = np.asarray(metric, dtype=float)
        return cls(chains=chains, metric=metric)


def load_robot(path) -> RobotModel:
    with open(path) as f:
        return RobotModel.from_json(json.load(f))


def save_robot(model: RobotModel, path) -> None:
    with open(path, "w") as f:
        json.dump(model.to_json(), f, indent=2)
        f.write("\n")


def _check_q(model: RobotModel, q: np.ndarray) -> tuple[np.ndarray, bool]:
    """Coerce to float array, validate the trailing dimension, return
    (array, batched) where batched means a leading sample axis is present."""
    q = np.asarray(q, dtype=float)
    if q.ndim == 1:
        if q.shape[0] != model.dim_q:
            raise ValueError(f"expected {model.dim_q} joint values, got {q.shape[0]}")
        return q, False
    if q.ndim == 2 and q.shape[1] == model.dim_q:
        return q, True
    raise ValueError(f"expected (..., {model.dim_q}) joint array, got shape {q.shape}")


def forward_kinematics(model: RobotModel, q: np.ndarray) -> np.ndarray:
    """End-effector positions, concatenated per chain: (..., dim_x)."""
    q, batched = _check_q(model, q)
    qb = np.atleast_2d(q)
    x = np.empty((qb.shape[0], model.dim_x))
    for ci, (c, sl) in enumerate(zip(model.chains, model.joint_slices())):
        theta = c.base_orientation + np.cumsum(qb[:, sl], axis=1)
        lengths = np.asarray(c.link_lengths)
        x[:, 2 * ci] = c.base_position[0] + (lengths * np.cos(theta)).sum(axis=1)
        x[:, 2 * ci + 1] = c.base_position[1] + (lengths * np.sin(theta)).sum(axis=1)
    return x if batched else x[0]


def jacobian(model: RobotModel, q: np.ndarray) -> np.ndarray:
    """Analytic Jacobian of ``forward_kinematics``: (..., dim_x, dim_q),
    block-diagonal across chains."""
    q, batched = _check_q(model, q)
    qb = np.atleast_2d(q)
    J = np.zeros((qb.shape[0], model.dim_x, model.dim_q))
    for ci, (c, sl) in enumerate(zip(model.chains, model.joint_slices())):
        theta = c.base_orientation + np.cumsum(qb[:, sl], axis=1)
        lengths = np.asarray(c.link_lengths)
        # column j of the chain block sums link contributions from joint j out
        sx = np.cumsum((lengths * np.sin(theta))[:, ::-1], axis=1)[:, ::-1]
        cx = np.cumsum((lengths * np.cos(theta))[:, ::-1], axis=1)[:, ::-1]
        J[:, 2 * ci, sl] = -sx
        J[:, 2 * ci + 1, sl] = cx
    return J if batched else J[0]


def min_singular_value(J: np.ndarray) -> float | np.ndarray:
    """Smallest singular value of J (batched: per-sample array)."""
    J = np.asarray(J, dtype=float)
    s = np.linalg.svd(J, compute_uv=False)
    return s[..., -1]


def generalized_inverse(J: np.ndarray, metric: np.ndarray | None = None) -> np.ndarray:
    """Right weighted pseudoinverse J+ = M^-1 J^T (J M^-1 J^T)^-1.

    Satisfies J J+ = I on task space; its columns span the horizontal
    subspace (the M-orthogonal complement of ker J), so J+ xdot is the
    minimum-M-norm joint velocity realizing xdot.
    """
    J = np.asarray(J, dtype=float)
    if np.any(min_singular_value(J) < SINGULARITY_TOL):
        raise SingularityError("Jacobian is rank deficient (near a kinematic singularity)")
    if metric is None:
        B = np.swapaxes(J, -1, -2)
    else:
        metric_inv = np.linalg.inv(np.asarray(metric, dtype=float))
        B = metric_inv @ np.swapaxes(J, -1, -2)
    G = J @ B
    return B @ np.linalg.inv(G)


def tangent_decompose(
    model: RobotModel, q: np.ndarray, qdot: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Split qdot into (vertical, horizontal) parts of the submersion at q.

    vertical lies in ker J (no end-effector motion); horizontal = J+ J qdot
    is M-orthogonal to it. The parts sum to qdot.
    """
    qdot = np.asarray(qdot, dtype=float)
    J = jacobian(model, q)
    Jp = generalized_inverse(J, model.metric)
    horizontal = np.einsum("...ij,...j->...i", Jp, np.einsum("...ij,...j->...i", J, qdot))
    return qdot - horizontal, horizontal


def _pinv_apply(model: RobotModel, Q: np.ndarray, xdot: np.ndarray, damping: float = 0.0) -> np.ndarray:
    """Batched J+(q) xdot without forming explicit inverses.

    Fast path for the identity metric solves the 2x2 per-chain normal
    equations in closed form; the general path uses a dense batched solve.
    Raises SingularityError below SINGULARITY_TOL unless ``damping`` > 0.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    xdot = np.atleast_2d(np.asarray(xdot, dtype=float))
    n = Q.shape[0]
    out = np.empty((n, model.dim_q))
    if model.metric_is_identity:
        for ci, (c, sl) in enumerate(zip(model.chains, model.joint_slices())):
            theta = c.base_orientation + np.cumsum(Q[:, sl], axis=1)
            lengths = np.asarray(c.link_lengths)
            sx = np.cumsum((lengths * np.sin(theta))[:, ::-1], axis=1)[:, ::-1]
            cx = np.cumsum((lengths * np.cos(theta))[:, ::-1], axis=1)[:, ::-1]
            # chain block of J M^-1 J^T as 2x2 entries
            a = (sx * sx).sum(axis=1)
            b = -(sx * cx).sum(axis=1)
            d = (cx * cx).sum(axis=1)
            det = a * d - b * b
            if damping > 0.0:
                a, d = a + damping, d + damping
                det = a * d - b * b
            elif np.any(det < SINGULARITY_TOL**2):
                raise SingularityError("Jacobian is rank deficient (near a kinematic singularity)")
            u, v = xdot[:, 2 * ci], xdot[:, 2 * ci + 1]
            y0 = (d * u - b * v) / det
            y1 = (-b * u + a * v) / det
            out[:, sl] = -sx * y0[:, None] + cx * y1[:, None]
        return out
    J = jacobian(model, Q)
    B = model.metric_inv @ np.swapaxes(J, -1, -2)
    G = J @ B
    if damping > 0.0:
        G = G + damping * np.eye(model.dim_x)
    else:
        sv = np.linalg.svd(J, compute_uv=False)[:, -1]
        if np.any(sv < SINGULARITY_TOL):
            raise SingularityError("Jacobian is rank deficient (near a kinematic singularity)")
    y = np.linalg.solve(G, xdot[..., None])[..., 0]
    return np.einsum("nij,nj->ni", B, y)


def _min_sv_squared(model: RobotModel, Q: np.ndarray) -> np.ndarray:
    """Per-sample min sigma(J)^2 via the per-chain 2x2 Gram blocks of J J^T
    (exact: J is block-diagonal across chains)."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    worst = np.full(Q.shape[0], np.inf)
    for ci, (c, sl) in enumerate(zip(model.chains, model.joint_slices())):
        theta = c.base_orientation + np.cumsum(Q[:, sl], axis=1)
        lengths = np.asarray(c.link_lengths)
        sx = np.cumsum((lengths * np.sin(theta))[:, ::-1], axis=1)[:, ::-1]
        cx = np.cumsum((lengths * np.cos(theta))[:, ::-1], axis=1)[:, ::-1]
        a = (sx * sx).sum(axis=1)
        b = -(sx * cx).sum(axis=1)
        d = (cx * cx).sum(axis=1)
        mean = 0.5 * (a + d)
        lam_min = mean - np.sqrt(np.maximum(mean * mean - (a * d - b * b), 0.0))
        worst = np.minimum(worst, lam_min)
    return worst


def solve_ik(
    model: RobotModel,
    target: np.ndarray,
    q_seed: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 800,
    step: float = 0.5,
) -> np.ndarray:
    """Damped resolved-rate iteration to a joint configuration with
    f(q) = target; the redundant degrees of freedom stay near ``q_seed``."""
    target = np.asarray(target, dtype=float)
    q = np.array(q_seed, dtype=float, copy=True)
    for _ in range(max_iter):
        err = target - forward_kinematics(model, q)
        if np.abs(err).max() <= tol:
            return q
        damping = 1e-6 if np.sqrt(_min_sv_squared(model, q[None])[0]) < 1e-4 else 0.0
        q = q + step * _pinv_apply(model, q[None], err[None], damping=damping)[0]
    raise ValueError(f"inverse kinematics did not converge to {target} (residual {np.abs(err).max():.2e})")


def track_task_path(
    model: RobotModel,
    times: np.ndarray,
    x_path: np.ndarray,
    q0: np.ndarray,
    condition: ConditionVector | None = None,
    feedback_gain: float = 50.0,
    substeps: int = 10,
    max_task_error: float = 1e-3,
) -> Demonstration:
    """Resolved-rate tracking of a timestamped task path.

    Integrates qdot = J+(q) (xdot_ff + k (x_des - f(q))) with RK4 substeps
    between waypoints and returns a Demonstration sampled at ``times``. The
    stored qdot rows are exactly in the image of J+, hence purely horizontal.
    Uses damped least squares (damping 1e-6) only when min sigma drops below
    1e-4.

    Raises TrackingDivergenceError when the task error exceeds 0.05 m and
    SingularityError if the sampled configuration becomes rank deficient.
    """
    times = np.asarray(times, dtype=float)
    x_path = np.asarray(x_path, dtype=float)
    q0 = np.asarray(q0, dtype=float)
    if x_path.shape != (times.shape[0], model.dim_x):
        raise ValueError("x_path must be (len(times), dim_x)")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    x0_err = np.abs(forward_kinematics(model, q0) - x_path[0]).max()
    if x0_err > 1e-3:
        raise ValueError(f"q0 does not reach the path start (error {x0_err:.2e} m)")

    n = times.shape[0]
    xdot_seg = np.diff(x_path, axis=0) / np.diff(times)[:, None]

    def cmd_qdot(q, x_des, xdot_ff):
        err = x_des - forward_kinematics(model, q)
        xdot_cmd = xdot_ff + feedback_gain * err
        damping = 0.0
        if np.sqrt(_min_sv_squared(model, q[None])[0]) < 1e-4:
            damping = 1e-6
        return _pinv_apply(model, q[None], xdot_cmd[None], damping=damping)[0]

    Q = np.empty((n, model.dim_q))
    Qdot = np.empty((n, model.dim_q))
    q = q0.copy()
    for i in range(n):
        err = np.linalg.norm(forward_kinematics(model, q) - x_path[i])
        if err > TRACKING_ABORT_ERROR:
            raise TrackingDivergenceError(
                f"task error {err:.3f} m at t={times[i]:.3f}s exceeds abort threshold"
            )
        xdot_ff = xdot_seg[i] if i < n - 1 else xdot_seg[-1]
        Q[i] = q
        Qdot[i] = cmd_qdot(q, x_path[i], xdot_ff)
        if i == n - 1:
            break
        h = (times[i + 1] - times[i]) / substeps
        for k in range(substeps):
            t_loc = k * h
            frac0 = t_loc / (times[i + 1] - times[i])
            frach = (t_loc + 0.5 * h) / (times[i + 1] - times[i])
            frac1 = (t_loc + h) / (times[i + 1] - times[i])
            x_at = lambda fr: x_path[i] + fr * (x_path[i + 1] - x_path[i])
            k1 = cmd_qdot(q, x_at(frac0), xdot_ff)
            k2 = cmd_qdot(q + 0.5 * h * k1, x_at(frach), xdot_ff)
            k3 = cmd_qdot(q + 0.5 * h * k2, x_at(frach), xdot_ff)
            k4 = cmd_qdot(q + h * k3, x_at(frac1), xdot_ff)
            q = q + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    final_err = np.abs(forward_kinematics(model, Q) - x_path).max()
    if final_err > max_task_error:
        raise TrackingDivergenceError(
            f"tracked path misses waypoints by {final_err:.2e} m (> {max_task_error:.0e})"
        )
    return Demonstration(
        times=times, q=Q, qdot=Qdot, condition=condition or ConditionVector()
    )
