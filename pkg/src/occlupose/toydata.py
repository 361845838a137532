"""Synthetic targets for the toy trainer and the focal-correction recovery fixture."""

from __future__ import annotations

import numpy as np

from . import camera
from .pose import Pose3D

#: Saturation magnitude for one-hot logits; softmax mass outside the peak cell
#: is below exp(-50), pinning the decoded coordinate to the cell center.
ONE_HOT_MAGNITUDE = 60.0


def sample_grid_cells(config, n_samples, rng):
    """Random heatmap cells per sample/joint plus one absolute-depth bin per sample.

    Absolute-depth bins are restricted so that zstar + dz stays well away from
    zero for every relative-depth cell.
    """
    hm = config.heatmap_size
    cells = np.stack(
        [
            rng.integers(0, config.depth_bins, size=(n_samples, config.joints)),
            rng.integers(0, hm, size=(n_samples, config.joints)),
            rng.integers(0, hm, size=(n_samples, config.joints)),
        ],
        axis=-1,
    )
    bin_width = config.zstar_range_mm / config.zstar_bins
    min_bin = int(np.ceil((config.rel_depth_range_mm + bin_width) / bin_width))
    zstar_bins = rng.integers(min_bin, config.zstar_bins, size=n_samples)
    return cells, zstar_bins


def targets_from_cells(config, cells, zstar_bins, c_true=1.0, root_index=0):
    """Back-project grid cell centers into target poses using a known correction c_true."""
    grid = config.make_grid()
    targets = []
    for sample_cells, zbin in zip(cells, zstar_bins):
        d, v, u = sample_cells[:, 0], sample_cells[:, 1], sample_cells[:, 2]
        joints = camera.back_project(
            grid.x_coords[u],
            grid.y_coords[v],
            grid.z_coords[d],
            grid.zstar_coords[zbin],
            config.focal_length,
            config.crop_scale,
            c_true,
            config.out_size,
            config.out_size,
        )
        targets.append(Pose3D(joints, root_index))
    return targets


def one_hot_logits(config, cells, zstar_bins, magnitude=ONE_HOT_MAGNITUDE):
    """Saturated one-hot logits decoding (to within quantization-free precision)
    to the given cells; their soft-argmax Jacobians are numerically zero."""
    n = cells.shape[0]
    hm = config.heatmap_size
    spatial = np.zeros((n, hm, hm, config.joints * config.depth_bins))
    depth = np.zeros((n, config.zstar_bins))
    for i in range(n):
        for j in range(config.joints):
            d, v, u = cells[i, j]
            spatial[i, v, u, j * config.depth_bins + d] = magnitude
        depth[i, zstar_bins[i]] = magnitude
    return spatial, depth


def make_toy_targets(config, n_samples=4, root_index=0):
    """Bundled synthetic target set: poses decodable exactly at grid cell centers."""
    rng = np.random.default_rng(config.seed + 1)
    cells, zstar_bins = sample_grid_cells(config, n_samples, rng)
    return targets_from_cells(config, cells, zstar_bins, c_true=1.0, root_index=root_index)


def make_focal_mismatch_fixture(config, n_samples=4, c_true=1.1, root_index=0):
    """Targets generated with a planted focal correction, plus saturated one-hot
    inits pinning the decoded coordinates at the generating cell centers.

    With the coordinates pinned, the only way to reduce the loss is to move the
    learnable correction toward c_true.
    """
    rng = np.random.default_rng(config.seed + 2)
    cells, zstar_bins = sample_grid_cells(config, n_samples, rng)
    targets = targets_from_cells(config, cells, zstar_bins, c_true=c_true, root_index=root_index)
    init_spatial, init_depth = one_hot_logits(config, cells, zstar_bins)
    return targets, init_spatial, init_depth
