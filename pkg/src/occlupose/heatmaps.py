"""Volumetric-heatmap decoding via soft-argmax, with closed-form Jacobians.

A backbone emits J*D spatial channels plus a 1D depth head. Channels reshape
into J logit volumes of shape (D, Hh, Wh); each volume is softmax-normalized
jointly over all its cells and decoded to continuous coordinates as the
expectation of the cell-center grid under that distribution. The 1D head is
decoded the same way over absolute-depth bin centers.

Logit arrays keep their dtype (float32 for throughput); pass float64 inputs
for reference-accuracy paths such as gradient checking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CoordinateGrid:
    """Cell-center coordinate values for the heatmap axes.

    x/y are continuous crop-pixel coordinates, z is per-joint depth relative to
    the person center (mm), zstar is absolute person-center depth (mm).
    """

    x_coords: np.ndarray
    y_coords: np.ndarray
    z_coords: np.ndarray
    zstar_coords: np.ndarray

    def __post_init__(self):
        for name in ("x_coords", "y_coords", "z_coords", "zstar_coords"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 1 or arr.size < 1:
                raise ValueError(f"{name} must be a nonempty 1D array")
            if arr.size > 1 and not np.all(np.diff(arr) > 0):
                raise ValueError(f"{name} must be strictly increasing")
            object.__setattr__(self, name, arr)

    @property
    def volume_shape(self):
        return (self.z_coords.size, self.y_coords.size, self.x_coords.size)


def make_grid(
    heatmap_w=16,
    heatmap_h=16,
    depth_bins=16,
    zstar_bins=32,
    out_w=256,
    out_h=256,
    rel_depth_range_mm=1000.0,
    zstar_range_mm=10000.0,
):
    """Cell-center grid: x_u = (u+0.5)*out_w/Wh, z centered on ±rel_depth_range_mm,
    zstar covering (0, zstar_range_mm)."""
    u = np.arange(heatmap_w, dtype=np.float64)
    v = np.arange(heatmap_h, dtype=np.float64)
    d = np.arange(depth_bins, dtype=np.float64)
    dz = np.arange(zstar_bins, dtype=np.float64)
    return CoordinateGrid(
        x_coords=(u + 0.5) * (out_w / heatmap_w),
        y_coords=(v + 0.5) * (out_h / heatmap_h),
        z_coords=(d + 0.5) * (2.0 * rel_depth_range_mm / depth_bins) - rel_depth_range_mm,
        zstar_coords=(dz + 0.5) * (zstar_range_mm / zstar_bins),
    )


@dataclass(frozen=True)
class BackboneOutput:
    """Raw backbone logits: (Hh, Wh, J*D) spatial channels and a (Dz,) depth head."""

    spatial_logits: np.ndarray
    depth_logits: np.ndarray

    def __post_init__(self):
        spatial = np.asarray(self.spatial_logits)
        depth = np.asarray(self.depth_logits)
        if spatial.ndim != 3:
            raise ValueError(f"spatial_logits must be (Hh, Wh, channels), got {spatial.shape}")
        if depth.ndim != 1:
            raise ValueError(f"depth_logits must be 1D, got shape {depth.shape}")
        if not np.all(np.isfinite(spatial)) or not np.all(np.isfinite(depth)):
            raise ValueError("logits must be finite")
        object.__setattr__(self, "spatial_logits", spatial)
        object.__setattr__(self, "depth_logits", depth)


@dataclass(frozen=True)
class VolumetricHeatmapSet:
    """J logit volumes of shape (D, Hh, Wh), optionally tied to a coordinate grid."""

    volumes: np.ndarray
    grid: CoordinateGrid | None = None

    def __post_init__(self):
        vols = np.asarray(self.volumes)
        if vols.ndim != 4:
            raise ValueError(f"volumes must be (J, D, Hh, Wh), got shape {vols.shape}")
        if not np.all(np.isfinite(vols)):
            raise ValueError("volume logits must be finite")
        if self.grid is not None and vols.shape[1:] != self.grid.volume_shape:
            raise ValueError(
                f"volume shape {vols.shape[1:]} does not match grid {self.grid.volume_shape}"
            )
        object.__setattr__(self, "volumes", vols)


def reshape_channels(output, joints, depth_bins, grid=None):
    """Reindex (Hh, Wh, J*D) channels into J volumes of shape (D, Hh, Wh).

    Channel k holds joint k // D, depth slice k % D (joint-major layout). Pure
    reindexing; no values change.
    """
    spatial = output.spatial_logits
    hh, wh, channels = spatial.shape
    if channels != joints * depth_bins:
        raise ValueError(
            f"channel count {channels} is not joints*depth_bins = {joints}*{depth_bins}"
        )
    volumes = spatial.reshape(hh, wh, joints, depth_bins).transpose(2, 3, 0, 1)
    return VolumetricHeatmapSet(volumes=volumes, grid=grid)


def flatten_volumes(volumes):
    """Inverse of reshape_channels: (J, D, Hh, Wh) back to (Hh, Wh, J*D)."""
    joints, depth_bins, hh, wh = volumes.shape
    return volumes.transpose(2, 3, 0, 1).reshape(hh, wh, joints * depth_bins)


def softmax_volume(logits):
    """Exp-normalize jointly over all entries (max-subtracted for stability)."""
    logits = np.asarray(logits)
    if not np.all(np.isfinite(logits)):
        raise ValueError("logits must be finite")
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    return exp / exp.sum()


def _softmax_batched(volumes):
    """Per-joint joint softmax for a (J, D, Hh, Wh) stack."""
    flat = volumes.reshape(volumes.shape[0], -1)
    shifted = flat - flat.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    p = exp / exp.sum(axis=1, keepdims=True)
    return p.reshape(volumes.shape)


def _expectations(p, grid):
    """Coordinate expectations (x, y, dz) for per-joint probabilities (J, D, Hh, Wh)."""
    x = p.sum(axis=(1, 2)) @ grid.x_coords
    y = p.sum(axis=(1, 3)) @ grid.y_coords
    dz = p.sum(axis=(2, 3)) @ grid.z_coords
    return x, y, dz


def soft_argmax3(volume, grid):
    """Decode one logit volume (D, Hh, Wh) to continuous (x, y, dz).

    Returns the expectation of the grid cell centers under the volume's joint
    softmax, as a float array (x, y, dz).
    """
    volume = np.asarray(volume)
    if volume.shape != grid.volume_shape:
        raise ValueError(f"volume shape {volume.shape} does not match grid {grid.volume_shape}")
    p = softmax_volume(volume)
    x = p.sum(axis=(0, 1)) @ grid.x_coords
    y = p.sum(axis=(0, 2)) @ grid.y_coords
    dz = p.sum(axis=(1, 2)) @ grid.z_coords
    return np.array([x, y, dz])


def soft_argmax1(depth_logits, zstar_coords):
    """Decode the 1D absolute-depth head to a continuous depth (mm)."""
    depth_logits = np.asarray(depth_logits)
    zstar_coords = np.asarray(zstar_coords, dtype=np.float64)
    if depth_logits.shape != zstar_coords.shape:
        raise ValueError(
            f"depth logits shape {depth_logits.shape} does not match "
            f"coords {zstar_coords.shape}"
        )
    return float(softmax_volume(depth_logits) @ zstar_coords)


def soft_argmax3_grad(volume, grid):
    """Jacobian of soft_argmax3 w.r.t. every logit: shape (3, D, Hh, Wh).

    Row a holds d(coord_a)/d(logit_k) = p_k * (g_{a,k} - mu_a), the closed form
    obtained by differentiating the softmax expectation.
    """
    volume = np.asarray(volume)
    if volume.shape != grid.volume_shape:
        raise ValueError(f"volume shape {volume.shape} does not match grid {grid.volume_shape}")
    p = softmax_volume(volume)
    mu = soft_argmax3(volume, grid)
    gx = grid.x_coords[None, None, :] - mu[0]
    gy = grid.y_coords[None, :, None] - mu[1]
    gz = grid.z_coords[:, None, None] - mu[2]
    return np.stack([p * gx, p * gy, p * gz])


def soft_argmax1_grad(depth_logits, zstar_coords):
    """Gradient of soft_argmax1 w.r.t. each depth logit: p_k * (coord_k - mu)."""
    depth_logits = np.asarray(depth_logits)
    zstar_coords = np.asarray(zstar_coords, dtype=np.float64)
    if depth_logits.shape != zstar_coords.shape:
        raise ValueError(
            f"depth logits shape {depth_logits.shape} does not match "
            f"coords {zstar_coords.shape}"
        )
    p = softmax_volume(depth_logits)
    mu = p @ zstar_coords
    return p * (zstar_coords - mu)


@dataclass(frozen=True)
class DecodedPose:
    """Continuous decode of one frame: per-joint crop pixels and relative depths,
    plus the scalar absolute person-center depth."""

    xy: np.ndarray
    dz: np.ndarray
    zstar: float

    def __post_init__(self):
        xy = np.asarray(self.xy, dtype=np.float64)
        dz = np.asarray(self.dz, dtype=np.float64)
        if xy.ndim != 2 or xy.shape[1] != 2:
            raise ValueError(f"xy must be (J, 2), got {xy.shape}")
        if dz.shape != (xy.shape[0],):
            raise ValueError(f"dz must be (J,), got {dz.shape}")
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "dz", dz)

    @property
    def joint_count(self):
        return self.xy.shape[0]


def decode(output, joints, depth_bins, grid):
    """Full decode: reshape channels, per-joint soft-argmax, 1D depth decode."""
    heatmaps = reshape_channels(output, joints, depth_bins, grid=grid)
    p = _softmax_batched(heatmaps.volumes)
    x, y, dz = _expectations(p, grid)
    zstar = soft_argmax1(output.depth_logits, grid.zstar_coords)
    return DecodedPose(xy=np.stack([x, y], axis=1), dz=dz, zstar=zstar)
