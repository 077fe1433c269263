"""Composition of symmetry actions sharing a space: compatibility testing
(Lie brackets of generators, commutativity of the maps) and construction of
direct and semi-direct product actions.

Factors are anything implementing the informal action protocol: ``apply``,
``sample_elements``, ``compose_elements``, ``inverse_element``,
``identity_element`` and ``equal_elements`` (both LinearAction and
LiftedAction qualify).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .symmetry import FD_STEP, GeneratorField, LieGroupSpec, LinearAction


def field_differential(field: GeneratorField, p: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Jacobian of a vector field at p by central finite differences."""
    p = np.asarray(p, dtype=float)
    cols = []
    for j in range(p.shape[-1]):
        e = np.zeros_like(p)
        e[j] = step
        cols.append((field(p + e) - field(p - e)) / (2 * step))
    return np.stack(cols, axis=-1)


def lie_bracket(
    field_a: GeneratorField, field_b: GeneratorField, p: np.ndarray, step: float = FD_STEP
) -> np.ndarray:
    """[A, B](p) = dA|_p B(p) - dB|_p A(p); vanishing brackets mean the
    generated flows commute."""
    if field_a.space != field_b.space or field_a.dim != field_b.dim:
        raise ValueError("bracket requires fields on the same space")
    p = np.asarray(p, dtype=float)
    da = field_differential(field_a, p, step)
    db = field_differential(field_b, p, step)
    return da @ field_b(p) - db @ field_a(p)


@dataclass(frozen=True)
class CommuteReport:
    commute: bool
    max_violation: float
    worst_pair: tuple
    tol: float

    def to_json(self) -> dict:
        return {
            "commute": self.commute,
            "max_violation": self.max_violation,
            "tol": self.tol,
        }


def commute_test(
    action_a,
    action_b,
    samples: np.ndarray,
    tol: float = 1e-10,
    grid: int = 8,
    n_random: int = 20,
    seed: int = 0,
) -> CommuteReport:
    """Check that applying the two actions in either order agrees on every
    sampled point, over all finite elements or a parameter grid plus random
    draws for one-parameter factors."""
    rng = np.random.default_rng(seed)
    elems_a = action_a.sample_elements(grid, rng)[: grid + n_random]
    elems_b = action_b.sample_elements(grid, rng)[: grid + n_random]
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    worst, worst_pair = 0.0, (None, None)
    for ga in elems_a:
        for gb in elems_b:
            ab = np.stack([action_a.apply(ga, action_b.apply(gb, p)) for p in samples])
            ba = np.stack([action_b.apply(gb, action_a.apply(ga, p)) for p in samples])
            viol = float(np.abs(ab - ba).max())
            if viol >= worst:
                worst, worst_pair = viol, (ga, gb)
    return CommuteReport(
        commute=bool(worst <= tol), max_violation=worst, worst_pair=worst_pair, tol=tol
    )


@dataclass(frozen=True, eq=False)
class ComposedAction:
    """Product of two actions on one space.

    Elements are pairs (g1, g2) acting by apply(g1, apply(g2, p)); for the
    direct kind the factors commute so the order is immaterial, for the
    semi-direct kind the group law twists the second factor:
    (g1, g2) . (h1, h2) = (g1 h1, twist(h1^-1)(g2) . h2).
    """

    factor_a: object
    factor_b: object
    kind: str
    twist: Callable | None = None

    def apply(self, g: tuple, p: np.ndarray) -> np.ndarray:
        g1, g2 = g
        return self.factor_a.apply(g1, self.factor_b.apply(g2, p))

    @property
    def identity_element(self) -> tuple:
        return (self.factor_a.identity_element, self.factor_b.identity_element)

    def compose_elements(self, g: tuple, h: tuple) -> tuple:
        g1, g2 = g
        h1, h2 = h
        if self.kind == "semidirect":
            g2 = self.twist(self.factor_a.inverse_element(h1))(g2)
        return (
            self.factor_a.compose_elements(g1, h1),
            self.factor_b.compose_elements(g2, h2),
        )

    def inverse_element(self, g: tuple) -> tuple:
        g1, g2 = g
        inv1 = self.factor_a.inverse_element(g1)
        inv2 = self.factor_b.inverse_element(g2)
        if self.kind == "semidirect":
            inv2 = self.twist(g1)(inv2)
        return (inv1, inv2)

    def sample_elements(self, n: int = 4, rng: np.random.Generator | None = None):
        return [
            (ga, gb)
            for ga in self.factor_a.sample_elements(n, rng)
            for gb in self.factor_b.sample_elements(n, rng)
        ]


def verify_group_law(
    composed: ComposedAction,
    samples: np.ndarray,
    n_pairs: int = 100,
    tol: float = 1e-10,
    seed: int = 0,
) -> float:
    """Max deviation of apply(g, apply(h, p)) from apply(g.h, p) over random
    element pairs; raises if it exceeds tol."""
    rng = np.random.default_rng(seed)
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    elements = composed.sample_elements(max(4, int(np.ceil(np.sqrt(n_pairs)))), rng)
    idx_g = rng.integers(0, len(elements), n_pairs)
    idx_h = rng.integers(0, len(elements), n_pairs)
    worst = 0.0
    for ig, ih in zip(idx_g, idx_h):
        g, h = elements[ig], elements[ih]
        gh = composed.compose_elements(g, h)
        for p in samples:
            lhs = composed.apply(g, composed.apply(h, p))
            rhs = composed.apply(gh, p)
            worst = max(worst, float(np.abs(lhs - rhs).max()))
    if worst > tol:
        raise ValueError(f"composed action violates its group law by {worst:.2e}")
    return worst


def direct_product(
    action_a,
    action_b,
    samples: np.ndarray,
    tol: float = 1e-10,
    seed: int = 0,
) -> ComposedAction:
    """Compose two commuting actions; raises on non-commuting factors."""
    report = commute_test(action_a, action_b, samples, tol=tol, seed=seed)
    if not report.commute:
        raise ValueError(
            f"actions do not commute (violation {report.max_violation:.2e} at "
            f"{report.worst_pair}); use a semi-direct product with an explicit twist"
        )
    return ComposedAction(factor_a=action_a, factor_b=action_b, kind="direct")


def _verify_twist(action_a, action_b, twist, n_samples: int, tol: float, seed: int) -> None:
    """Check that twist(g1) is an automorphism of B's group for sampled g1
    and that g1 -> twist(g1) is itself a homomorphism."""
    rng = np.random.default_rng(seed)
    elems_a = action_a.sample_elements(n_samples, rng)
    elems_b = action_b.sample_elements(n_samples, rng)
    e_b = action_b.identity_element
    for ga in elems_a:
        tw = twist(ga)
        if not action_b.equal_elements(tw(e_b), e_b, tol):
            raise ValueError(f"twist({ga}) does not fix the identity")
        for g2 in elems_b:
            for h2 in elems_b:
                lhs = tw(action_b.compose_elements(g2, h2))
                rhs = action_b.compose_elements(tw(g2), tw(h2))
                if not action_b.equal_elements(lhs, rhs, tol):
                    raise ValueError(
                        f"twist({ga}) is not an automorphism: "
                        f"fails on ({g2}, {h2})"
                    )
    for ga in elems_a:
        for ha in elems_a:
            composed = twist(action_a.compose_elements(ga, ha))
            chained = lambda g2: twist(ga)(twist(ha)(g2))
            for g2 in elems_b:
                if not action_b.equal_elements(composed(g2), chained(g2), tol):
                    raise ValueError("twist is not a homomorphism into Aut(G2)")


def semidirect_product(
    action_a,
    action_b,
    twist: Callable,
    n_samples: int = 6,
    tol: float = 1e-10,
    seed: int = 0,
) -> ComposedAction:
    """Compose two actions where the first twists the second's elements
    through automorphisms; the twist is verified on element samples."""
    _verify_twist(action_a, action_b, twist, n_samples, tol, seed)
    return ComposedAction(
        factor_a=action_a, factor_b=action_b, kind="semidirect", twist=twist
    )


def conjugation_twist(
    action_a: LinearAction, action_b: LinearAction, tol: float = 1e-10
) -> Callable:
    """The automorphism g2 -> parameter of rho(g1) rep_B(g2) rho(g1)^-1.

    Recovers the conjugated parameter from the matrix (atan2 of the first
    planar block for rotations, the diagonal value for scalings) and raises
    if the conjugate leaves B's group by more than ``tol``.
    """
    if not isinstance(action_b.group, LieGroupSpec):
        raise ValueError("conjugation twist recovery is implemented for one-parameter groups")

    group_b: LieGroupSpec = action_b.group

    def twist(g1):
        rho = action_a.matrix(g1)
        rho_inv = np.linalg.inv(rho)

        def mapped(g2: float) -> float:
            conj = rho @ action_b.matrix(g2) @ rho_inv
            if group_b.name == "so2":
                param = float(np.arctan2(conj[1, 0], conj[0, 0]))
            else:
                param = float(conj[0, 0])
            if not group_b.contains(param) or not np.allclose(
                conj, action_b.matrix(param), atol=tol
            ):
                raise ValueError(
                    f"conjugate of parameter {g2} by {g1} is not in the group"
                )
            return param

        return mapped

    return twist
