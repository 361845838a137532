"""Pose evaluation: MPJPE, per-action aggregation, flip TTA and snapshot averaging."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pose import Pose3D, root_relative

#: 17-joint left/right pairing. Joint order assumption (root first):
#: 0 pelvis, 1-3 right leg (hip, knee, ankle), 4-6 left leg, 7 spine, 8 thorax,
#: 9 neck/nose, 10 head, 11-13 left arm (shoulder, elbow, wrist), 14-16 right arm.
DEFAULT_FLIP_PERMUTATION_17 = (
    0, 4, 5, 6, 1, 2, 3, 7, 8, 9, 10, 14, 15, 16, 11, 12, 13,
)


@dataclass(frozen=True)
class JointFlipMap:
    """Left/right joint pairing used when mirroring a pose; must be an involution."""

    permutation: np.ndarray

    def __post_init__(self):
        perm = np.asarray(self.permutation, dtype=np.intp)
        if perm.ndim != 1:
            raise ValueError("permutation must be 1D")
        n = perm.size
        if sorted(perm.tolist()) != list(range(n)):
            raise ValueError("not a permutation of 0..J-1")
        if not np.array_equal(perm[perm], np.arange(n)):
            raise ValueError("flip permutation must be an involution")
        object.__setattr__(self, "permutation", perm)

    @property
    def joint_count(self):
        return self.permutation.size


def default_flip_map(joint_count=17):
    if joint_count == 17:
        return JointFlipMap(np.array(DEFAULT_FLIP_PERMUTATION_17))
    raise ValueError(f"no default flip map for {joint_count} joints; provide one explicitly")


@dataclass(frozen=True)
class EvalRecord:
    """One evaluation item: predicted and ground-truth poses for a frame."""

    frame_id: str
    action: str
    pred: Pose3D
    gt: Pose3D

    def __post_init__(self):
        _check_compatible(self.pred, self.gt)


def _check_compatible(a, b):
    if a.joint_count != b.joint_count:
        raise ValueError(f"joint count mismatch: {a.joint_count} vs {b.joint_count}")
    if a.root_index != b.root_index:
        raise ValueError(f"root index mismatch: {a.root_index} vs {b.root_index}")


def mpjpe(pred, gt):
    """Mean Euclidean joint distance (mm) after root-relativizing both poses."""
    _check_compatible(pred, gt)
    diff = root_relative(pred).joints - root_relative(gt).joints
    return float(np.linalg.norm(diff, axis=1).mean())


@dataclass
class PerActionReport:
    """Mean MPJPE per action plus both overall conventions (frame- and action-weighted)."""

    action_means: dict = field(default_factory=dict)
    frame_counts: dict = field(default_factory=dict)
    frame_mean: float = 0.0
    action_mean: float = 0.0


def per_action_report(records):
    """Aggregate frame-level MPJPE by action label."""
    if not records:
        raise ValueError("no evaluation records")
    totals = {}
    counts = {}
    frame_sum = 0.0
    for rec in records:
        err = mpjpe(rec.pred, rec.gt)
        totals[rec.action] = totals.get(rec.action, 0.0) + err
        counts[rec.action] = counts.get(rec.action, 0) + 1
        frame_sum += err
    action_means = {action: totals[action] / counts[action] for action in sorted(totals)}
    return PerActionReport(
        action_means=action_means,
        frame_counts={action: counts[action] for action in sorted(counts)},
        frame_mean=frame_sum / len(records),
        action_mean=sum(action_means.values()) / len(action_means),
    )


def flip_pose(pose, flip_map):
    """Mirror a pose about the vertical plane through the optical axis.

    Negates X, then permutes joints so left/right labels stay anatomically
    correct. Exact involution.
    """
    if flip_map.joint_count != pose.joint_count:
        raise ValueError(
            f"flip map covers {flip_map.joint_count} joints, pose has {pose.joint_count}"
        )
    if flip_map.permutation[pose.root_index] != pose.root_index:
        raise ValueError("flip map must keep the root joint fixed")
    mirrored = pose.joints * np.array([-1.0, 1.0, 1.0])
    return Pose3D(mirrored[flip_map.permutation], pose.root_index)


def tta_average(pred_plain, pred_from_flipped_input, flip_map):
    """Average a plain prediction with the un-mirrored prediction on a flipped input."""
    _check_compatible(pred_plain, pred_from_flipped_input)
    unflipped = flip_pose(pred_from_flipped_input, flip_map)
    return Pose3D(0.5 * (pred_plain.joints + unflipped.joints), pred_plain.root_index)


def ensemble_average(preds):
    """Per-joint, per-coordinate arithmetic mean of a nonempty list of poses."""
    preds = list(preds)
    if not preds:
        raise ValueError("cannot average an empty list of poses")
    for p in preds[1:]:
        _check_compatible(preds[0], p)
    stacked = np.stack([p.joints for p in preds])
    return Pose3D(stacked.mean(axis=0), preds[0].root_index)
