"""Finite and one-parameter Lie groups, their linear actions on joint and
task coordinates, infinitesimal generators, and validation of task-induced
symmetries against cost functions.

Group elements are plain values: an integer index for finite groups, a float
parameter for one-parameter Lie groups (angle for rotations, positive factor
for scalings).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .kinematics import RobotModel

HOMOMORPHISM_TOL = 1e-12
FD_STEP = 1e-6


@dataclass(frozen=True, eq=False)
class FiniteGroup:
    """A finite group given by its composition table.

    ``cayley[i, j]`` is the index of element i composed with element j;
    index 0 is the identity. The table is validated exhaustively.
    """

    cayley: np.ndarray

    def __post_init__(self):
        cayley = np.asarray(self.cayley, dtype=int)
        n = cayley.shape[0]
        if cayley.shape != (n, n):
            raise ValueError("cayley table must be square")
        ident = np.arange(n)
        # each row and column must be a permutation (cancellation law)
        for i in range(n):
            if sorted(cayley[i]) != list(ident) or sorted(cayley[:, i]) != list(ident):
                raise ValueError("cayley table rows/columns are not permutations")
        if not (np.array_equal(cayley[0], ident) and np.array_equal(cayley[:, 0], ident)):
            raise ValueError("element 0 must act as the identity")
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    if cayley[cayley[i, j], k] != cayley[i, cayley[j, k]]:
                        raise ValueError("cayley table is not associative")
        inv = np.empty(n, dtype=int)
        for i in range(n):
            matches = np.flatnonzero(cayley[i] == 0)
            if matches.size != 1 or cayley[matches[0], i] != 0:
                raise ValueError(f"element {i} lacks a two-sided inverse")
            inv[i] = matches[0]
        cayley.setflags(write=False)
        inv.setflags(write=False)
        object.__setattr__(self, "cayley", cayley)
        object.__setattr__(self, "_inverse", inv)

    @property
    def order(self) -> int:
        return self.cayley.shape[0]

    @property
    def identity(self) -> int:
        return 0

    def elements(self) -> range:
        return range(self.order)

    def compose(self, g1: int, g2: int) -> int:
        return int(self.cayley[g1, g2])

    def inverse(self, g: int) -> int:
        return int(self._inverse[g])


def cyclic_group(n: int) -> FiniteGroup:
    idx = np.arange(n)
    return FiniteGroup(cayley=(idx[:, None] + idx[None, :]) % n)


@dataclass(frozen=True)
class LieGroupSpec:
    """One-parameter Lie group: planar rotations ("so2", parameter = angle,
    additive) or uniform scalings ("scaling", parameter > 0, multiplicative).

    ``flow_time`` maps a group parameter to the time t with exp(t * xi)
    reaching it along the canonical generator; ``param_at`` is its inverse.
    """

    name: str

    def __post_init__(self):
        if self.name not in ("so2", "scaling"):
            raise ValueError(f"unknown one-parameter group {self.name!r}")

    @property
    def identity_param(self) -> float:
        return 0.0 if self.name == "so2" else 1.0

    def contains(self, param: float) -> bool:
        return np.isfinite(param) and (self.name == "so2" or param > 0)

    def compose(self, p1: float, p2: float) -> float:
        return p1 + p2 if self.name == "so2" else p1 * p2

    def inverse(self, p: float) -> float:
        return -p if self.name == "so2" else 1.0 / p

    def equal(self, p1: float, p2: float, tol: float = 1e-10) -> bool:
        if self.name == "so2":
            return abs((p1 - p2 + np.pi) % (2 * np.pi) - np.pi) <= tol
        return abs(p1 - p2) <= tol

    def flow_time(self, param: float) -> float:
        if not self.contains(param):
            raise ValueError(f"parameter {param} outside the domain of {self.name}")
        return float(param) if self.name == "so2" else float(np.log(param))

    def param_at(self, t: float) -> float:
        return float(t) if self.name == "so2" else float(np.exp(t))

    def matrix_2d(self, param: float) -> np.ndarray:
        """Canonical representation on one planar block."""
        if not self.contains(param):
            raise ValueError(f"parameter {param} outside the domain of {self.name}")
        if self.name == "so2":
            c, s = np.cos(param), np.sin(param)
            return np.array([[c, -s], [s, c]])
        return param * np.eye(2)

    def generator_2d(self, point: np.ndarray) -> np.ndarray:
        point = np.asarray(point, dtype=float)
        if self.name == "so2":
            return np.stack([-point[..., 1], point[..., 0]], axis=-1)
        return point.copy()

    def sample_params(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.name == "so2":
            return rng.uniform(-np.pi, np.pi, n)
        return np.exp(rng.uniform(-1.0, 1.0, n))

    def param_grid(self, n: int = 8) -> np.ndarray:
        if self.name == "so2":
            return np.linspace(-np.pi, np.pi, n, endpoint=False)
        return np.exp(np.linspace(-1.0, 1.0, n))


SO2 = LieGroupSpec("so2")
SCALING = LieGroupSpec("scaling")


@dataclass(frozen=True, eq=False)
class LinearAction:
    """A group acting by matrices on a coordinate space ("Q" or "X")."""

    space: str
    dim: int
    group: FiniteGroup | LieGroupSpec
    matrix_fn: Callable[[float | int], np.ndarray]

    def matrix(self, g) -> np.ndarray:
        m = np.asarray(self.matrix_fn(g), dtype=float)
        if m.shape != (self.dim, self.dim):
            raise ValueError(f"representation returned shape {m.shape}, expected ({self.dim}, {self.dim})")
        return m

    def apply(self, g, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape[-1] != self.dim:
            raise ValueError(f"point has dimension {p.shape[-1]}, action expects {self.dim}")
        return p @ self.matrix(g).T

    def apply_tangent(self, g, v: np.ndarray) -> np.ndarray:
        # the differential of a linear map is the map itself
        return self.apply(g, v)

    def sample_elements(self, n: int = 8, rng: np.random.Generator | None = None):
        if isinstance(self.group, FiniteGroup):
            return list(self.group.elements())
        params = list(self.group.param_grid(n))
        if rng is not None:
            params += list(self.group.sample_params(n, rng))
        return params

    @property
    def identity_element(self):
        if isinstance(self.group, FiniteGroup):
            return self.group.identity
        return self.group.identity_param

    def compose_elements(self, g1, g2):
        return self.group.compose(g1, g2)

    def inverse_element(self, g):
        return self.group.inverse(g)

    def equal_elements(self, g1, g2, tol: float = 1e-10) -> bool:
        if isinstance(self.group, FiniteGroup):
            return g1 == g2
        return self.group.equal(g1, g2, tol)

    def validate(self, n_samples: int = 8, tol: float = HOMOMORPHISM_TOL) -> None:
        """Check rep(identity) = I and the homomorphism property (all pairs
        for finite groups, a parameter grid for Lie groups)."""
        ident = (
            self.group.identity
            if isinstance(self.group, FiniteGroup)
            else self.group.identity_param
        )
        if not np.allclose(self.matrix(ident), np.eye(self.dim), atol=tol):
            raise ValueError("representation of the identity is not the identity matrix")
        elements = self.sample_elements(n_samples)
        for g1 in elements:
            for g2 in elements:
                lhs = self.matrix(self.group.compose(g1, g2))
                rhs = self.matrix(g1) @ self.matrix(g2)
                if not np.allclose(lhs, rhs, atol=tol):
                    raise ValueError(
                        f"representation is not a homomorphism at ({g1}, {g2})"
                    )


@dataclass(frozen=True, eq=False)
class GeneratorField:
    """A smooth vector field on Q or X giving an infinitesimal symmetry
    direction; ``label`` names the Lie algebra element it represents."""

    space: str
    dim: int
    eval: Callable[[np.ndarray], np.ndarray]
    label: str = ""

    def __call__(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape[-1] != self.dim:
            raise ValueError(f"point has dimension {p.shape[-1]}, field expects {self.dim}")
        return np.asarray(self.eval(p), dtype=float)


@dataclass(frozen=True, eq=False)
class CostFunction:
    """Scalar task cost; task-induced symmetries must leave it unchanged."""

    eval: Callable[[np.ndarray], float]

    def __call__(self, x: np.ndarray) -> float:
        return float(self.eval(np.asarray(x, dtype=float)))


def act(action: LinearAction, g, p: np.ndarray) -> np.ndarray:
    """Apply the group element to a point: rep(g) p."""
    return action.apply(g, p)


def act_tangent(action: LinearAction, g, v: np.ndarray) -> np.ndarray:
    """Push a tangent vector through the action's differential."""
    return action.apply_tangent(g, v)


def generator(group: LieGroupSpec, p: np.ndarray) -> np.ndarray:
    """Evaluate the canonical infinitesimal generator blockwise on planar
    coordinates: rotations give (-y, x) per block, scalings give the point."""
    p = np.asarray(p, dtype=float)
    if p.shape[-1] % 2 != 0:
        raise ValueError("generator expects concatenated planar blocks (even dimension)")
    blocks = p.reshape(p.shape[:-1] + (-1, 2))
    out = group.generator_2d(blocks)
    return out.reshape(p.shape)


def generator_field(group: LieGroupSpec, space: str, dim: int) -> GeneratorField:
    return GeneratorField(
        space=space, dim=dim, eval=lambda p: generator(group, p), label=group.name
    )


def blockwise_action(group: LieGroupSpec, space: str, dim: int) -> LinearAction:
    """The group's canonical 2-D representation applied to every planar
    block of the space (e.g. each end-effector position)."""
    if dim % 2 != 0:
        raise ValueError("blockwise action needs an even dimension")

    def matrix_fn(param):
        m2 = group.matrix_2d(param)
        blocks = dim // 2
        out = np.zeros((dim, dim))
        for b in range(blocks):
            out[2 * b : 2 * b + 2, 2 * b : 2 * b + 2] = m2
        return out

    return LinearAction(space=space, dim=dim, group=group, matrix_fn=matrix_fn)


def build_morphological_action(
    model: RobotModel,
    joint_signs,
    task_reflection,
) -> tuple[LinearAction, LinearAction]:
    """Bilateral arm-swap symmetry of a dual-arm robot.

    Returns the cyclic-two actions on Q and X: the non-trivial element swaps
    the two arms' joint blocks through the signed diagonal ``joint_signs``
    and swaps end-effector blocks through the 2x2 signed diagonal
    ``task_reflection``. Both matrices are involutions by construction.
    """
    if len(model.chains) != 2:
        raise ValueError("morphological swap needs exactly two chains")
    c1, c2 = model.chains
    if c1.dof != c2.dof or c1.link_lengths != c2.link_lengths:
        raise ValueError("morphological swap needs two chains of equal length")
    joint_signs = np.asarray(joint_signs, dtype=float)
    if joint_signs.shape != (c1.dof,) or not np.all(np.abs(joint_signs) == 1.0):
        raise ValueError(f"joint_signs must be {c1.dof} values of +-1")
    task_reflection = np.asarray(task_reflection, dtype=float)
    if task_reflection.shape != (2, 2) or not np.allclose(
        task_reflection, np.diag(np.diag(task_reflection))
    ) or not np.all(np.abs(np.diag(task_reflection)) == 1.0):
        raise ValueError("task_reflection must be a 2x2 signed diagonal matrix")

    group = cyclic_group(2)
    n = c1.dof
    P = np.diag(joint_signs)
    swap_q = np.zeros((2 * n, 2 * n))
    swap_q[:n, n:] = P
    swap_q[n:, :n] = P
    swap_x = np.zeros((4, 4))
    swap_x[:2, 2:] = task_reflection
    swap_x[2:, :2] = task_reflection
    mats_q = (np.eye(2 * n), swap_q)
    mats_x = (np.eye(4), swap_x)

    action_q = LinearAction(space="Q", dim=2 * n, group=group, matrix_fn=lambda g: mats_q[g])
    action_x = LinearAction(space="X", dim=4, group=group, matrix_fn=lambda g: mats_x[g])
    action_q.validate()
    action_x.validate()
    return action_q, action_x


@dataclass(frozen=True)
class InvarianceReport:
    passed: bool
    max_abs_derivative: float
    worst_sample: np.ndarray
    tol: float


def cost_invariance_check(
    cost: CostFunction,
    gen: GeneratorField,
    samples,
    tol: float = 1e-4,
    step: float = FD_STEP,
) -> InvarianceReport:
    """Check that the cost is invariant along the generator: the central
    finite-difference directional derivative of the cost along gen(x) must
    vanish at every sample."""
    worst, worst_x = 0.0, None
    for x in samples:
        x = np.asarray(x, dtype=float)
        v = gen(x)
        d = (cost(x + step * v) - cost(x - step * v)) / (2 * step)
        if abs(d) >= worst:
            worst, worst_x = abs(d), x
    return InvarianceReport(
        passed=bool(worst <= tol), max_abs_derivative=float(worst),
        worst_sample=worst_x, tol=tol,
    )


@dataclass(frozen=True)
class SymmetrySpec:
    """Parsed symmetry description file."""

    kind: str
    joint_signs: tuple[float, ...] | None = None
    task_reflection: tuple[tuple[float, float], tuple[float, float]] | None = None

    @classmethod
    def from_json(cls, data: dict) -> "SymmetrySpec":
        kind = data["type"]
        if kind not in ("morphological", "so2", "scaling"):
            raise ValueError(f"unknown symmetry type {kind!r}")
        joint_signs = data.get("joint_signs")
        reflection = data.get("task_reflection")
        if kind == "morphological":
            if joint_signs is None or reflection is None:
                raise ValueError("morphological symmetry needs joint_signs and task_reflection")
            joint_signs = tuple(float(v) for v in joint_signs)
            reflection = tuple(tuple(float(v) for v in row) for row in reflection)
        return cls(kind=kind, joint_signs=joint_signs, task_reflection=reflection)


def load_symmetry(path) -> SymmetrySpec:
    with open(path) as f:
        return SymmetrySpec.from_json(json.load(f))
