"""Cross-space symmetry transfer and composition for redundant planar
manipulators, with symmetry-driven data augmentation for imitation learning."""

__version__ = "0.1.0"

from .kinematics import (
    ChainSpec,
    RobotModel,
    SingularityError,
    TrackingDivergenceError,
    forward_kinematics,
    generalized_inverse,
    jacobian,
    load_robot,
    min_singular_value,
    save_robot,
    tangent_decompose,
    track_task_path,
)
from .dataset import ConditionVector, Dataset, Demonstration

__all__ = [
    "ChainSpec",
    "RobotModel",
    "SingularityError",
    "TrackingDivergenceError",
    "forward_kinematics",
    "jacobian",
    "generalized_inverse",
    "tangent_decompose",
    "min_singular_value",
    "track_task_path",
    "load_robot",
    "save_robot",
    "ConditionVector",
    "Demonstration",
    "Dataset",
]
