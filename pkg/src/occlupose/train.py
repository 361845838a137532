"""Root-relative L1 loss with the full analytic backward chain, a triangular
cyclical learning-rate schedule, and a small end-to-end trainer.

The trainer treats per-sample heatmap logits as free parameters standing in
for a backbone network, optionally together with the global focal-correction
scalar, and fits target 3D poses by plain gradient descent through
soft-argmax and back-projection.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import camera, heatmaps
from .pose import Pose3D, root_relative

ROOT_RELATIVE = "root_relative"
ABSOLUTE = "absolute"
LOSS_SPACES = (ROOT_RELATIVE, ABSOLUTE)


@dataclass(frozen=True)
class LossReport:
    """Scalar L1 loss (mm, mean over all 3J coordinates) and its gradient."""

    value: float
    grad_wrt_pred: np.ndarray


def l1_loss(pred, gt, space=ROOT_RELATIVE):
    """Mean absolute per-coordinate error between two poses, with subgradient.

    In root-relative space both poses are root-relativized first; the gradient
    w.r.t. the raw prediction then routes the subtraction through the root
    column (the root accumulates the negated sign sum of the other joints).
    sign(0) is taken as 0.
    """
    if space not in LOSS_SPACES:
        raise ValueError(f"unknown loss space {space!r}")
    if pred.joint_count != gt.joint_count:
        raise ValueError(f"joint count mismatch: {pred.joint_count} vs {gt.joint_count}")
    if pred.root_index != gt.root_index:
        raise ValueError(f"root index mismatch: {pred.root_index} vs {gt.root_index}")
    n_coords = 3 * pred.joint_count
    if space == ROOT_RELATIVE:
        diff = root_relative(pred).joints - root_relative(gt).joints
    else:
        diff = pred.joints - gt.joints
    value = float(np.abs(diff).sum() / n_coords)
    signs = np.sign(diff)
    grad = signs / n_coords
    if space == ROOT_RELATIVE:
        grad[pred.root_index] -= signs.sum(axis=0) / n_coords
    return LossReport(value=value, grad_wrt_pred=grad)


@dataclass(frozen=True)
class ChainResult:
    """Loss, decoded prediction and gradients w.r.t. all logits and the focal correction."""

    loss: float
    pred: Pose3D
    d_spatial_logits: np.ndarray
    d_depth_logits: np.ndarray
    d_c: float
    decoded: heatmaps.DecodedPose


def full_backward(output, c, gt, f, s, grid, out_w=256, out_h=256, space=ROOT_RELATIVE):
    """Forward decode + back-projection + L1 loss, then the analytic backward chain.

    Composes the loss gradient through the back-projection Jacobian and the
    soft-argmax Jacobians; returns gradient tensors matching the backbone
    output shapes plus the scalar derivative w.r.t. the focal correction c.
    """
    joints = gt.joint_count
    channels = output.spatial_logits.shape[2]
    if channels % joints != 0:
        raise ValueError(f"channel count {channels} not divisible by {joints} joints")
    depth_bins = channels // joints

    heatmap_set = heatmaps.reshape_channels(output, joints, depth_bins, grid=grid)
    volumes = heatmap_set.volumes.astype(np.float64)
    p = heatmaps._softmax_batched(volumes)
    x, y, dz = heatmaps._expectations(p, grid)
    zstar = heatmaps.soft_argmax1(output.depth_logits, grid.zstar_coords)
    decoded = heatmaps.DecodedPose(xy=np.stack([x, y], axis=1), dz=dz, zstar=zstar)

    pred_joints = camera.back_project(x, y, dz, zstar, f, s, c, out_w, out_h)
    pred = Pose3D(pred_joints, gt.root_index)
    report = l1_loss(pred, gt, space=space)

    # (J, 3, 5) Jacobian of (X, Y, Z) w.r.t. (x, y, dz, zstar, c) per joint,
    # contracted with the (J, 3) loss gradient.
    jac = camera.back_project_grad(x, y, dz, zstar, f, s, c, out_w, out_h)
    d_inputs = np.einsum("jc,jcp->jp", report.grad_wrt_pred, jac)
    d_x, d_y, d_dz = d_inputs[:, 0], d_inputs[:, 1], d_inputs[:, 2]
    d_zstar = float(d_inputs[:, 3].sum())
    d_c = float(d_inputs[:, 4].sum())

    gx = grid.x_coords[None, None, None, :] - x[:, None, None, None]
    gy = grid.y_coords[None, None, :, None] - y[:, None, None, None]
    gz = grid.z_coords[None, :, None, None] - dz[:, None, None, None]
    d_volumes = p * (
        d_x[:, None, None, None] * gx
        + d_y[:, None, None, None] * gy
        + d_dz[:, None, None, None] * gz
    )
    d_spatial = heatmaps.flatten_volumes(d_volumes)
    d_depth = d_zstar * heatmaps.soft_argmax1_grad(output.depth_logits, grid.zstar_coords)
    return ChainResult(
        loss=report.value,
        pred=pred,
        d_spatial_logits=d_spatial,
        d_depth_logits=d_depth,
        d_c=d_c,
        decoded=decoded,
    )


@dataclass(frozen=True)
class LrSchedule:
    """Symmetric triangular cycle: base -> max over period/2 steps, back to base."""

    base_lr: float
    max_lr: float
    period: int

    def __post_init__(self):
        if self.base_lr <= 0 or self.max_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.base_lr > self.max_lr:
            raise ValueError(f"base_lr {self.base_lr} exceeds max_lr {self.max_lr}")
        if self.period < 1:
            raise ValueError(f"period must be >= 1, got {self.period}")


def triangular_lr(step, sched):
    """Learning rate at a 0-based step of the periodic triangular schedule."""
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    t = step % sched.period
    half = sched.period / 2
    frac = t / half if t <= half else (sched.period - t) / half
    return sched.base_lr + (sched.max_lr - sched.base_lr) * frac


def snapshot_steps(total_steps, sched, n_last=3):
    """The last n_last step counts at which the schedule returns to base_lr.

    Cycle boundaries are the multiples of the period; requires at least n_last
    completed cycles within total_steps.
    """
    if n_last < 1:
        raise ValueError(f"n_last must be >= 1, got {n_last}")
    n_cycles = total_steps // sched.period
    if n_cycles < n_last:
        raise ValueError(
            f"need at least {n_last} completed cycles, "
            f"got {n_cycles} ({total_steps} steps at period {sched.period})"
        )
    return [sched.period * k for k in range(n_cycles - n_last + 1, n_cycles + 1)]


class TrainingDiverged(RuntimeError):
    """Loss became non-finite during training."""

    def __init__(self, step, loss):
        super().__init__(f"training diverged at step {step}: loss = {loss}")
        self.step = step
        self.loss = loss


@dataclass
class ToyTrainConfig:
    """Configuration for the end-to-end toy trainer.

    Logits and the focal correction live on very different scales, so the
    shared schedule is modulated by per-group multipliers.
    """

    steps: int = 500
    schedule: LrSchedule = field(default_factory=lambda: LrSchedule(2.0, 40.0, 100))
    seed: int = 0
    joints: int = 17
    depth_bins: int = 16
    heatmap_size: int = 16
    zstar_bins: int = 32
    out_size: int = 256
    rel_depth_range_mm: float = 1000.0
    zstar_range_mm: float = 10000.0
    focal_length: float = 1500.0
    crop_scale: float = 1.0
    learn_c: bool = False
    c_init: float = 1.0
    loss_space: str = ROOT_RELATIVE
    logit_lr_scale: float = 1.0
    depth_lr_scale: float = 1.0
    c_lr_scale: float = 1e-5
    init_noise_scale: float = 0.01
    snapshot_count: int = 3
    n_threads: int = 1

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.loss_space not in LOSS_SPACES:
            raise ValueError(f"unknown loss space {self.loss_space!r}")

    def make_grid(self):
        return heatmaps.make_grid(
            heatmap_w=self.heatmap_size,
            heatmap_h=self.heatmap_size,
            depth_bins=self.depth_bins,
            zstar_bins=self.zstar_bins,
            out_w=self.out_size,
            out_h=self.out_size,
            rel_depth_range_mm=self.rel_depth_range_mm,
            zstar_range_mm=self.zstar_range_mm,
        )


@dataclass
class TrainReport:
    """Loss curve, final focal correction and snapshot predictions of a toy run."""

    loss_curve: list
    final_c: float
    snapshot_step_indices: list
    snapshot_preds: list
    final_preds: list

    @property
    def initial_loss(self):
        return self.loss_curve[0]

    @property
    def final_loss(self):
        return self.loss_curve[-1]


def toy_train(config, targets, init_spatial=None, init_depth=None):
    """Fit per-sample free logits (and optionally the focal correction) to targets.

    Plain gradient descent with the triangular schedule; per-sample gradients
    are evaluated (optionally concurrently) and reduced in sample order, so the
    run is deterministic under the seed regardless of thread count. The loss
    curve has steps+1 entries: the pre-update loss at every step plus a final
    evaluation. Snapshot predictions are recorded at the schedule's last
    learning-rate minima.

    Raises TrainingDiverged (carrying the step index) if the loss goes
    non-finite.
    """
    targets = list(targets)
    if not targets:
        raise ValueError("need at least one target pose")
    for t in targets:
        if t.joint_count != config.joints:
            raise ValueError(
                f"target has {t.joint_count} joints, config expects {config.joints}"
            )
    root_index = targets[0].root_index
    grid = config.make_grid()
    rng = np.random.default_rng(config.seed)
    n = len(targets)
    hm = config.heatmap_size
    channels = config.joints * config.depth_bins

    if init_spatial is None:
        spatial = rng.normal(0.0, config.init_noise_scale, size=(n, hm, hm, channels))
    else:
        spatial = np.array(init_spatial, dtype=np.float64)
        if spatial.shape != (n, hm, hm, channels):
            raise ValueError(f"init_spatial must have shape {(n, hm, hm, channels)}")
    if init_depth is None:
        depth = rng.normal(0.0, config.init_noise_scale, size=(n, config.zstar_bins))
    else:
        depth = np.array(init_depth, dtype=np.float64)
        if depth.shape != (n, config.zstar_bins):
            raise ValueError(f"init_depth must have shape {(n, config.zstar_bins)}")

    c = float(config.c_init)
    snap_at = set(snapshot_steps(config.steps, config.schedule, config.snapshot_count))
    snapshot_preds = []
    snapshot_indices = []
    loss_curve = []

    def eval_sample(i, c_now):
        out = heatmaps.BackboneOutput(spatial_logits=spatial[i], depth_logits=depth[i])
        return full_backward(
            out,
            c_now,
            targets[i],
            f=config.focal_length,
            s=config.crop_scale,
            grid=grid,
            out_w=config.out_size,
            out_h=config.out_size,
            space=config.loss_space,
        )

    def eval_all(c_now):
        if config.n_threads > 1:
            with ThreadPoolExecutor(max_workers=config.n_threads) as pool:
                return list(pool.map(lambda i: eval_sample(i, c_now), range(n)))
        return [eval_sample(i, c_now) for i in range(n)]

    for step in range(config.steps):
        results = eval_all(c)
        mean_loss = sum(r.loss for r in results) / n
        if not np.isfinite(mean_loss):
            raise TrainingDiverged(step, mean_loss)
        loss_curve.append(mean_loss)
        lr = triangular_lr(step, config.schedule)
        for i, r in enumerate(results):
            spatial[i] -= lr * config.logit_lr_scale * r.d_spatial_logits
            depth[i] -= lr * config.depth_lr_scale * r.d_depth_logits
        if config.learn_c:
            mean_dc = sum(r.d_c for r in results) / n
            c = max(c - lr * config.c_lr_scale * mean_dc, 1e-6)
        if (step + 1) in snap_at:
            preds = [r.pred.joints for r in eval_all(c)]
            snapshot_preds.append([Pose3D(j.copy(), root_index) for j in preds])
            snapshot_indices.append(step + 1)

    final_results = eval_all(c)
    final_loss = sum(r.loss for r in final_results) / n
    if not np.isfinite(final_loss):
        raise TrainingDiverged(config.steps, final_loss)
    loss_curve.append(final_loss)
    final_preds = [r.pred for r in final_results]
    return TrainReport(
        loss_curve=loss_curve,
        final_c=c,
        snapshot_step_indices=snapshot_indices,
        snapshot_preds=snapshot_preds,
        final_preds=final_preds,
    )
