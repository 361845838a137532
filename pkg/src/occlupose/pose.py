"""3D pose container shared by the loss, metrics and evaluation code."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(eq=False)
class Pose3D:
    """J camera-space joint positions in millimeters, with a designated root joint."""

    joints: np.ndarray
    root_index: int = 0

    def __post_init__(self):
        joints = np.asarray(self.joints, dtype=np.float64)
        if joints.ndim != 2 or joints.shape[1] != 3:
            raise ValueError(f"joints must be (J, 3), got shape {joints.shape}")
        if joints.shape[0] < 1:
            raise ValueError("pose needs at least one joint")
        if not np.all(np.isfinite(joints)):
            raise ValueError("joint coordinates must be finite")
        if not 0 <= self.root_index < joints.shape[0]:
            raise ValueError(
                f"root_index {self.root_index} out of range for {joints.shape[0]} joints"
            )
        self.joints = joints

    @property
    def joint_count(self):
        return self.joints.shape[0]

    def copy(self):
        return Pose3D(self.joints.copy(), self.root_index)

    def allclose(self, other, atol=1e-9):
        return (
            self.root_index == other.root_index
            and self.joints.shape == other.joints.shape
            and np.allclose(self.joints, other.joints, atol=atol, rtol=0.0)
        )


def root_relative(pose):
    """Subtract the root joint from every joint; the root becomes (0, 0, 0)."""
    return Pose3D(pose.joints - pose.joints[pose.root_index], pose.root_index)
