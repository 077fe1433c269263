"""Demonstration data: timestamped (q, qdot) rows conditioned on a task
variant, plus the on-disk layout (one CSV per demonstration and a JSON
manifest with provenance).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

CSV_FLOAT_FMT = "%.17g"


@dataclass(frozen=True)
class ConditionVector:
    """Task-variant label s = (theta, lam, sigma): rotation angle in
    [-pi, pi], scaling factor > 0, reflection index in {+1, -1}."""

    theta: float = 0.0
    lam: float = 1.0
    sigma: int = 1

    def __post_init__(self):
        if not -np.pi <= self.theta <= np.pi:
            raise ValueError(f"theta {self.theta} outside [-pi, pi]")
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.sigma not in (+1, -1):
            raise ValueError("sigma must be +1 or -1")

    @property
    def is_identity(self) -> bool:
        return self.theta == 0.0 and self.lam == 1.0 and self.sigma == 1

    def as_tuple(self) -> tuple[float, float, int]:
        return (self.theta, self.lam, self.sigma)


@dataclass(frozen=True, eq=False)
class Demonstration:
    """Uniformly sampled trajectory rows (t, q, qdot) sharing one condition.

    Angles are stored unwrapped so that rows can be flowed continuously.
    """

    times: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    condition: ConditionVector = field(default_factory=ConditionVector)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        q = np.asarray(self.q, dtype=float)
        qdot = np.asarray(self.qdot, dtype=float)
        n = times.shape[0]
        if q.shape[0] != n or qdot.shape != q.shape:
            raise ValueError("times, q, qdot must share the leading length")
        dts = np.diff(times)
        if np.any(dts <= 0):
            raise ValueError("times must be strictly increasing")
        if n > 2 and np.ptp(dts) > 1e-9:
            raise ValueError("sampling must be uniform (dt spread > 1e-9)")
        if not (np.isfinite(q).all() and np.isfinite(qdot).all()):
            raise ValueError("non-finite trajectory values")
        for name, arr in (("times", times), ("q", q), ("qdot", qdot)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.times.shape[0]

    @property
    def dim_q(self) -> int:
        return self.q.shape[1]

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def with_condition(self, condition: ConditionVector) -> "Demonstration":
        return replace(self, condition=condition)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered demonstrations with per-demonstration provenance tags
    ("original" or "augmented")."""

    demos: tuple[Demonstration, ...]
    provenance: tuple[str, ...] = ()

    def __post_init__(self):
        demos = tuple(self.demos)
        prov = tuple(self.provenance) if self.provenance else ("original",) * len(demos)
        if len(prov) != len(demos):
            raise ValueError("provenance list must match demonstrations")
        dims = {d.dim_q for d in demos}
        if len(dims) > 1:
            raise ValueError(f"inconsistent joint dimensions across demonstrations: {dims}")
        object.__setattr__(self, "demos", demos)
        object.__setattr__(self, "provenance", prov)

    def __len__(self) -> int:
        return len(self.demos)

    def __iter__(self):
        return iter(self.demos)

    @property
    def dim_q(self) -> int:
        return self.demos[0].dim_q

    def stack_rows(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All rows as (Q, Qdot, S) with S the per-row (theta, lam, sigma)."""
        Q = np.concatenate([d.q for d in self.demos])
        Qdot = np.concatenate([d.qdot for d in self.demos])
        S = np.concatenate(
            [np.tile(d.condition.as_tuple(), (len(d), 1)) for d in self.demos]
        )
        return Q, Qdot, S


def trajectory_header(dim_q: int) -> str:
    cols = ["t"]
    cols += [f"q_{i}" for i in range(dim_q)]
    cols += [f"dq_{i}" for i in range(dim_q)]
    cols += ["theta", "lambda", "sigma"]
    return ",".join(cols)


def save_demonstration(demo: Demonstration, path) -> None:
    n, dq = len(demo), demo.dim_q
    s = np.tile(demo.condition.as_tuple(), (n, 1))
    table = np.hstack([demo.times[:, None], demo.q, demo.qdot, s])
    np.savetxt(
        path, table, fmt=CSV_FLOAT_FMT, delimiter=",",
        header=trajectory_header(dq), comments="",
    )


def load_demonstration(path) -> Demonstration:
    with open(path) as f:
        header = f.readline().strip()
        table = np.loadtxt(f, delimiter=",", ndmin=2)
    cols = header.split(",")
    if cols[0] != "t" or cols[-3:] != ["theta", "lambda", "sigma"]:
        raise ValueError(f"unrecognized trajectory header in {path}")
    dim_q = (len(cols) - 4) // 2
    cond = ConditionVector(
        theta=float(table[0, -3]), lam=float(table[0, -2]), sigma=int(table[0, -1])
    )
    return Demonstration(
        times=table[:, 0],
        q=table[:, 1 : 1 + dim_q],
        qdot=table[:, 1 + dim_q : 1 + 2 * dim_q],
        condition=cond,
    )


def save_dataset(dataset: Dataset, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    entries = []
    for i, (demo, prov) in enumerate(zip(dataset.demos, dataset.provenance)):
        name = f"demo_{i:04d}.csv"
        save_demonstration(demo, os.path.join(directory, name))
        entries.append(
            {
                "file": name,
                "provenance": prov,
                "theta": demo.condition.theta,
                "lambda": demo.condition.lam,
                "sigma": demo.condition.sigma,
            }
        )
    manifest = os.path.join(directory, "manifest.json")
    with open(manifest, "w") as f:
        json.dump({"demos": entries}, f, indent=2)
        f.write("\n")


def load_dataset(directory) -> Dataset:
    with open(os.path.join(directory, "manifest.json")) as f:
        manifest = json.load(f)
    demos, prov = [], []
    for entry in manifest["demos"]:
        demos.append(load_demonstration(os.path.join(directory, entry["file"])))
        prov.append(entry["provenance"])
    return Dataset(demos=tuple(demos), provenance=tuple(prov))
