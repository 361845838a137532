"""Finite-difference verification of every analytic gradient path.

Each suite draws random instances, evaluates the closed-form Jacobian, and
compares it against central finite differences computed from the plain forward
functions. All checks run in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import camera, heatmaps, train
from .pose import Pose3D

DEFAULT_TOLERANCE = 1e-4

# Central differences bottom out at roundoff ~ eps*|f|/(2h); entries below the
# per-suite floor are compared against the floor instead of their own (noise
# dominated) magnitude. Floors sit several orders below typical entry scales,
# so genuine formula errors still register.
COORD_FLOOR = 1e-3
DEPTH_FLOOR = 1e-2
LOSS_FLOOR = 1e-4
C_FLOOR = 2e-3
MM_FLOOR = 1e-6


def relative_error(analytic, estimate, floor=MM_FLOOR):
    """Elementwise |a - e| / max(|a|, |e|, floor), reduced to the maximum."""
    analytic = np.asarray(analytic, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(estimate)), floor)
    return float((np.abs(analytic - estimate) / denom).max())


def central_difference(fn, x, index, step):
    """Central difference of array-valued fn w.r.t. one entry of array x."""
    hi = x.copy()
    lo = x.copy()
    hi[index] += step
    lo[index] -= step
    return (np.asarray(fn(hi)) - np.asarray(fn(lo))) / (2.0 * step)


@dataclass
class SuiteResult:
    name: str
    max_rel_error: float
    trials: int
    tolerance: float = DEFAULT_TOLERANCE

    @property
    def passed(self):
        return self.max_rel_error < self.tolerance


def _random_grid(rng, shape, zstar_bins=8):
    d, hh, wh = shape
    return heatmaps.make_grid(
        heatmap_w=wh,
        heatmap_h=hh,
        depth_bins=d,
        zstar_bins=zstar_bins,
        out_w=int(rng.integers(64, 512)),
        out_h=int(rng.integers(64, 512)),
        rel_depth_range_mm=float(rng.uniform(500, 2000)),
    )


def check_soft_argmax3(trials=100, seed=0, step=1e-5, max_entries=None):
    """FD check of the 3D soft-argmax Jacobian on random volumes.

    When max_entries is given, only a random subset of logit entries is
    differenced per volume (used for larger volumes to bound runtime).
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        shape = tuple(int(rng.integers(3, 7)) for _ in range(3))
        grid = _random_grid(rng, shape)
        volume = rng.normal(0.0, 2.0, size=shape)
        jac = heatmaps.soft_argmax3_grad(volume, grid)
        flat = volume.reshape(-1)
        indices = range(flat.size)
        if max_entries is not None and flat.size > max_entries:
            indices = rng.choice(flat.size, size=max_entries, replace=False)
        for k in indices:
            fd = central_difference(
                lambda v: heatmaps.soft_argmax3(v.reshape(shape), grid), flat, k, step
            )
            worst = max(worst, relative_error(jac.reshape(3, -1)[:, k], fd, COORD_FLOOR))
    return SuiteResult("soft_argmax3", worst, trials)


def check_soft_argmax1(trials=100, seed=1, step=1e-5):
    """FD check of the 1D depth soft-argmax gradient."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        n_bins = int(rng.integers(4, 40))
        coords = np.sort(rng.uniform(0, 10000, size=n_bins))
        while np.any(np.diff(coords) <= 0):
            coords = np.sort(rng.uniform(0, 10000, size=n_bins))
        logits = rng.normal(0.0, 2.0, size=n_bins)
        grad = heatmaps.soft_argmax1_grad(logits, coords)
        for k in range(n_bins):
            fd = central_difference(lambda v: heatmaps.soft_argmax1(v, coords), logits, k, step)
            worst = max(worst, relative_error(grad[k], fd, DEPTH_FLOOR))
    return SuiteResult("soft_argmax1", worst, trials)


def check_back_projection(trials=100, seed=2):
    """FD check of the back-projection Jacobian at random valid points."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        w = float(rng.integers(64, 512))
        h = float(rng.integers(64, 512))
        f = float(rng.uniform(500, 3000))
        s = float(rng.uniform(0.2, 3.0))
        c = float(rng.uniform(0.7, 1.4))
        x = float(rng.uniform(0, w))
        y = float(rng.uniform(0, h))
        dz = float(rng.uniform(-900, 900))
        zstar = float(rng.uniform(1500, 9000))
        jac = camera.back_project_grad(x, y, dz, zstar, f, s, c, w, h)

        inputs = np.array([x, y, dz, zstar, c])

        def forward(vals):
            return camera.back_project(
                vals[0], vals[1], vals[2], vals[3], f, s, vals[4], w, h
            )

        for k in range(5):
            step = 1e-6 * max(abs(inputs[k]), 1.0)
            fd = central_difference(forward, inputs, k, step)
            worst = max(worst, relative_error(jac[:, k], fd))
    return SuiteResult("back_projection", worst, trials)


def _random_chain_instance(rng):
    """Random small full-chain instance with per-coordinate errors away from L1 kinks."""
    joints = int(rng.integers(2, 4))
    depth_bins = int(rng.integers(3, 5))
    hm = int(rng.integers(4, 6))
    zstar_bins = int(rng.integers(6, 10))
    grid = heatmaps.make_grid(
        heatmap_w=hm,
        heatmap_h=hm,
        depth_bins=depth_bins,
        zstar_bins=zstar_bins,
        out_w=256,
        out_h=256,
        rel_depth_range_mm=1000.0,
    )
    f = float(rng.uniform(1000, 2000))
    s = float(rng.uniform(0.5, 2.0))
    c = float(rng.uniform(0.8, 1.25))
    spatial = rng.normal(0.0, 1.0, size=(hm, hm, joints * depth_bins))
    depth = rng.normal(0.0, 1.0, size=zstar_bins)
    output = heatmaps.BackboneOutput(spatial_logits=spatial, depth_logits=depth)
    root_index = int(rng.integers(0, joints))

    decoded = heatmaps.decode(output, joints, depth_bins, grid)
    pred = camera.back_project(
        decoded.xy[:, 0], decoded.xy[:, 1], decoded.dz, decoded.zstar, f, s, c, 256, 256
    )
    for _ in range(100):
        offsets = rng.uniform(5.0, 60.0, size=(joints, 3)) * rng.choice(
            [-1.0, 1.0], size=(joints, 3)
        )
        gt_joints = pred + offsets
        rel = (pred - pred[root_index]) - (gt_joints - gt_joints[root_index])
        mask = np.ones(joints, dtype=bool)
        mask[root_index] = False
        if np.abs(rel[mask]).min() > 2.5 and np.abs(gt_joints - pred).min() > 2.5:
            break
    gt = Pose3D(gt_joints, root_index)
    return output, c, gt, f, s, grid, joints, depth_bins


def _chain_loss(spatial, depth, c, gt, f, s, grid, joints, depth_bins, space):
    """Loss-only forward composed from the public forward ops (the FD reference
    path, independent of full_backward's internals)."""
    output = heatmaps.BackboneOutput(spatial_logits=spatial, depth_logits=depth)
    decoded = heatmaps.decode(output, joints, depth_bins, grid)
    pred = camera.back_project(
        decoded.xy[:, 0], decoded.xy[:, 1], decoded.dz, decoded.zstar, f, s, c, 256, 256
    )
    return train.l1_loss(Pose3D(pred, gt.root_index), gt, space=space).value


def check_full_chain(trials=100, seed=3, step=3e-4, space=train.ROOT_RELATIVE,
                     perturb_hook=None):
    """FD check of the end-to-end backward pass (loss w.r.t. all logits and c).

    perturb_hook, when given, receives the ChainResult and may return a tampered
    copy; used as a negative control to prove the check catches a wrong entry.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        output, c, gt, f, s, grid, joints, depth_bins = _random_chain_instance(rng)
        result = train.full_backward(output, c, gt, f=f, s=s, grid=grid, space=space)
        if perturb_hook is not None:
            result = perturb_hook(result)

        def loss_of(spatial, depth, c_val):
            return _chain_loss(spatial, depth, c_val, gt, f, s, grid, joints, depth_bins, space)

        spatial = output.spatial_logits
        depth = output.depth_logits
        flat = spatial.reshape(-1)
        for k in range(flat.size):
            fd = central_difference(
                lambda v: loss_of(v.reshape(spatial.shape), depth, c), flat, k, step
            )
            worst = max(worst, relative_error(result.d_spatial_logits.reshape(-1)[k], fd, LOSS_FLOOR))
        for k in range(depth.size):
            fd = central_difference(lambda v: loss_of(spatial, v, c), depth, k, step)
            worst = max(worst, relative_error(result.d_depth_logits[k], fd, LOSS_FLOOR))
        c_arr = np.array([c])
        fd_c = central_difference(lambda v: loss_of(spatial, depth, v[0]), c_arr, 0, 2e-5)
        worst = max(worst, relative_error(result.d_c, fd_c, C_FLOOR))
    return SuiteResult("full_chain", worst, trials)


def run_all(trials=100, seed=0, perturb_hook=None):
    """Run every gradient suite; trials applies to each suite individually."""
    return [
        check_soft_argmax3(trials=trials, seed=seed),
        check_soft_argmax1(trials=trials, seed=seed + 1),
        check_back_projection(trials=trials, seed=seed + 2),
        check_full_chain(trials=trials, seed=seed + 3, perturb_hook=perturb_hook),
    ]
