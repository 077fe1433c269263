"""Cross-space symmetry transfer through the forward kinematics map:
descending joint-space symmetries to task space by checking equivariance,
and lifting task-space Lie symmetries via horizontal lift of their
generators followed by flow integration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kinematics import (
    RobotModel,
    SingularityError,
    _min_sv_squared,
    _pinv_apply,
    forward_kinematics,
)
from .symmetry import (
    FiniteGroup,
    GeneratorField,
    LieGroupSpec,
    LinearAction,
    blockwise_action,
    generator_field,
)

DEFAULT_FLOW_STEP = 1e-3
FLOW_MIN_SINGULAR_VALUE = 1e-6
# per-RK4-step joint motion beyond this aborts: the lifted field blows up as
# 1/sigma near singular shells and can otherwise leap across them between
# the per-step sigma checks
FLOW_MAX_STEP_MOTION = 0.5


@dataclass(frozen=True)
class DescendReport:
    """Outcome of the numerical equivariance check of forward kinematics."""

    passed: bool
    max_violation: float
    worst_q: np.ndarray
    samples_tested: int
    tol: float

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "max_violation": self.max_violation,
            "samples": self.samples_tested,
            "tol": self.tol,
        }


def sample_nonsingular_configurations(
    model: RobotModel,
    n_samples: int,
    rng: np.random.Generator,
    min_sv: float = FLOW_MIN_SINGULAR_VALUE,
) -> np.ndarray:
    """Uniform draws on [-pi, pi]^dim_q, resampling singular configurations."""
    out = np.empty((n_samples, model.dim_q))
    filled = 0
    while filled < n_samples:
        cand = rng.uniform(-np.pi, np.pi, size=(n_samples - filled, model.dim_q))
        keep = cand[_min_sv_squared(model, cand) >= min_sv**2]
        out[filled : filled + keep.shape[0]] = keep
        filled += keep.shape[0]
    return out


def descend(
    model: RobotModel,
    action_q: LinearAction,
    candidate_action_x: LinearAction,
    n_samples: int = 100,
    tol: float = 1e-10,
    seed: int = 0,
) -> DescendReport:
    """Check that the joint-space action descends to the candidate task
    action: f(rho_Q(g) q) = rho_X(g) f(q) on sampled configurations, for
    every finite element or a parameter grid of a one-parameter group.

    On a pass, ``candidate_action_x`` is the (unique) descended action.
    """
    if action_q.space != "Q" or candidate_action_x.space != "X":
        raise ValueError("descend expects a Q-space action and an X-space candidate")
    if action_q.dim != model.dim_q or candidate_action_x.dim != model.dim_x:
        raise ValueError("action dimensions do not match the model")
    rng = np.random.default_rng(seed)
    Q = sample_nonsingular_configurations(model, n_samples, rng)
    X = forward_kinematics(model, Q)
    if isinstance(action_q.group, FiniteGroup):
        elements = list(action_q.group.elements())
    else:
        elements = list(action_q.group.param_grid(16))
    worst, worst_q = -1.0, Q[0]
    for g in elements:
        lhs = forward_kinematics(model, action_q.apply(g, Q))
        rhs = candidate_action_x.apply(g, X)
        viol = np.abs(lhs - rhs).max(axis=1)
        i = int(np.argmax(viol))
        if viol[i] > worst:
            worst, worst_q = float(viol[i]), Q[i]
    return DescendReport(
        passed=bool(worst <= tol),
        max_violation=worst,
        worst_q=worst_q,
        samples_tested=n_samples,
        tol=tol,
    )


def lift_generator(model: RobotModel, gen_x: GeneratorField, q: np.ndarray) -> np.ndarray:
    """Horizontal lift of the task-space generator at q: J+(q) gen(f(q)).

    The result is horizontal and f-related to ``gen_x``:
    J(q) lift = gen(f(q)).
    """
    q = np.asarray(q, dtype=float)
    batched = q.ndim == 2
    Q = np.atleast_2d(q)
    g = gen_x(forward_kinematics(model, Q))
    out = _pinv_apply(model, Q, g)
    return out if batched else out[0]


def lifted_field(model: RobotModel, gen_x: GeneratorField):
    """The lifted generator as a batched vector field Q -> Qdot."""

    def field_fn(Q: np.ndarray) -> np.ndarray:
        return _pinv_apply(model, Q, gen_x(forward_kinematics(model, Q)))

    return field_fn


def _canonical_lifted_field(model: RobotModel, group: LieGroupSpec, min_sv: float):
    """Fused evaluation of the lifted rotation/scaling field under the
    identity metric: one pass per chain computes FK, the Jacobian rows, the
    2x2 Gram solve and the singularity check. This is the hot loop of flow
    integration and augmentation.
    """
    rot = group.name == "so2"
    chain_data = [
        (sl, np.asarray(c.link_lengths), c.base_position[0], c.base_position[1], c.base_orientation)
        for c, sl in zip(model.chains, model.joint_slices())
    ]
    min_sv_sq = min_sv * min_sv

    def field_fn(Q: np.ndarray) -> np.ndarray:
        out = np.empty_like(Q)
        for sl, lengths, bx, by, orient in chain_data:
            theta = orient + np.cumsum(Q[:, sl], axis=1)
            lc = lengths * np.cos(theta)
            ls = lengths * np.sin(theta)
            sx = np.cumsum(ls[:, ::-1], axis=1)[:, ::-1]
            cx = np.cumsum(lc[:, ::-1], axis=1)[:, ::-1]
            px = bx + lc.sum(axis=1)
            py = by + ls.sum(axis=1)
            if rot:
                u, v = -py, px
            else:
                u, v = px, py
            a = (sx * sx).sum(axis=1)
            b = -(sx * cx).sum(axis=1)
            d = (cx * cx).sum(axis=1)
            det = a * d - b * b
            mean = 0.5 * (a + d)
            lam_min = mean - np.sqrt(np.maximum(mean * mean - det, 0.0))
            if np.any(lam_min < min_sv_sq):
                raise SingularityError("flow approached a kinematic singularity")
            y0 = (d * u - b * v) / det
            y1 = (-b * u + a * v) / det
            out[:, sl] = -sx * y0[:, None] + cx * y1[:, None]
        return out

    return field_fn


def integrate_lifted_flow(
    model: RobotModel,
    gen_x: GeneratorField | LieGroupSpec,
    Q0: np.ndarray,
    record_times,
    h: float = DEFAULT_FLOW_STEP,
    min_sv: float = FLOW_MIN_SINGULAR_VALUE,
) -> dict[float, np.ndarray]:
    """Flow a batch of configurations along the lifted generator and record
    the states at the requested (possibly negative) times.

    ``gen_x`` may be a GeneratorField or a LieGroupSpec (meaning that
    group's canonical blockwise generator, which enables the fused fast
    path under the identity metric). Times are hit exactly: the trajectory
    advances segment by segment with fixed steps of magnitude ``h`` plus a
    remainder step per segment. Time 0 returns ``Q0`` itself. Aborts if
    min sigma(J) drops below ``min_sv``, a step explodes, or the state
    stops being finite.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    Q0 = np.atleast_2d(np.asarray(Q0, dtype=float))
    if np.any(_min_sv_squared(model, Q0) < min_sv**2):
        raise SingularityError("initial configuration is (near) singular")
    if isinstance(gen_x, LieGroupSpec):
        if model.metric_is_identity:
            field_fn = _canonical_lifted_field(model, gen_x, min_sv)
            check_per_step = False  # the fused field checks at every stage
        else:
            field_fn = lifted_field(model, generator_field(gen_x, "X", model.dim_x))
            check_per_step = True
    else:
        field_fn = lifted_field(model, gen_x)
        check_per_step = True
    times = sorted(set(float(t) for t in record_times))
    out: dict[float, np.ndarray] = {}

    def run_direction(targets):
        t_cur, Q = 0.0, Q0
        for t_next in targets:
            Q = _rk4_flow_segment(model, field_fn, Q, t_next - t_cur, h, min_sv, check_per_step)
            out[t_next] = Q
            t_cur = t_next

    run_direction([t for t in times if t > 0.0])
    run_direction(sorted((t for t in times if t < 0.0), reverse=True))
    if 0.0 in times:
        out[0.0] = Q0.copy()
    return out


def _rk4_flow_segment(model, field_fn, Q, t_span, h, min_sv, check_per_step=True):
    if t_span == 0.0:
        return Q
    n_full = int(abs(t_span) // h)
    hh = float(np.sign(t_span)) * h
    rem = t_span - n_full * hh
    steps = n_full * [hh] + ([rem] if abs(rem) > 1e-15 else [])
    for dt in steps:
        if check_per_step and np.any(_min_sv_squared(model, Q) < min_sv**2):
            raise SingularityError("flow approached a kinematic singularity")
        k1 = field_fn(Q)
        k2 = field_fn(Q + 0.5 * dt * k1)
        k3 = field_fn(Q + 0.5 * dt * k2)
        k4 = field_fn(Q + dt * k3)
        delta = (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(delta).all():
            raise SingularityError("flow state became non-finite")
        if np.abs(delta).max() > FLOW_MAX_STEP_MOTION:
            raise SingularityError(
                "flow step exploded (lifted field unbounded near a singularity)"
            )
        Q = Q + delta
    return Q


def lift_flow(
    model: RobotModel,
    group: LieGroupSpec,
    q0: np.ndarray,
    t: float,
    h: float = DEFAULT_FLOW_STEP,
) -> np.ndarray:
    """Flow q0 for time t along the horizontally-lifted generator of the
    group's canonical task action (classical RK4, fixed step)."""
    q0 = np.asarray(q0, dtype=float)
    batched = q0.ndim == 2
    states = integrate_lifted_flow(model, group, np.atleast_2d(q0), [float(t)], h=h)
    out = states[float(t)]
    return out if batched else out[0]


@dataclass(frozen=True, eq=False)
class LiftedAction:
    """The one-parameter family of configuration-space maps obtained by
    integrating the horizontally-lifted generator; apply(0, q) = q exactly
    and f(apply(t, q)) realizes the task action at time t."""

    model: RobotModel
    group: LieGroupSpec
    h: float = DEFAULT_FLOW_STEP
    space: str = field(default="Q", init=False)

    def apply(self, t: float, q: np.ndarray) -> np.ndarray:
        if float(t) == 0.0:
            return np.array(q, dtype=float, copy=True)
        return lift_flow(self.model, self.group, q, float(t), h=self.h)

    def apply_tangent(self, t: float, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError(
            "lifted actions have no global linear differential; "
            "push velocities through the task-space differential instead"
        )

    def sample_elements(self, n: int = 8, rng: np.random.Generator | None = None):
        params = self.group.param_grid(n)
        return [self.group.flow_time(p) for p in params]

    # elements are flow times in R: the lifted one-parameter group is additive
    @property
    def identity_element(self) -> float:
        return 0.0

    def compose_elements(self, t1: float, t2: float) -> float:
        return t1 + t2

    def inverse_element(self, t: float) -> float:
        return -t

    def equal_elements(self, t1: float, t2: float, tol: float = 1e-10) -> bool:
        return abs(t1 - t2) <= tol


@dataclass(frozen=True)
class NaturalityReport:
    """Max deviation between f(flow in Q) and the closed-form task flow."""

    passed: bool
    max_deviation: float
    tol: float
    times: np.ndarray
    deviations: np.ndarray

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "max_deviation": self.max_deviation,
            "tol": self.tol,
            "times": self.times.tolist(),
            "deviations": self.deviations.tolist(),
        }


def verify_flow_naturality(
    model: RobotModel,
    group: LieGroupSpec,
    q0: np.ndarray,
    t_grid,
    h: float = DEFAULT_FLOW_STEP,
    tol: float = 1e-6,
) -> NaturalityReport:
    """Compare f(lifted flow at t) against the closed-form task flow
    (rotation by t, or scaling by e^t) for each requested time."""
    q0 = np.asarray(q0, dtype=float)
    x0 = forward_kinematics(model, q0)
    task_action = blockwise_action(group, "X", model.dim_x)
    t_grid = np.asarray(list(t_grid), dtype=float)
    states = integrate_lifted_flow(model, group, q0[None], t_grid, h=h)
    devs = np.empty(t_grid.shape[0])
    for i, t in enumerate(t_grid):
        x_flowed = forward_kinematics(model, states[float(t)][0])
        x_closed = task_action.apply(group.param_at(t), x0)
        devs[i] = np.linalg.norm(x_flowed - x_closed)
    worst = float(devs.max()) if devs.size else 0.0
    return NaturalityReport(
        passed=bool(worst <= tol), max_deviation=worst, tol=tol,
        times=t_grid, deviations=devs,
    )
