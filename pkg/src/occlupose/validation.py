"""Input-validation helpers shared by the estimator layer and the CLI."""

from __future__ import annotations

import numpy as np


def check_rgb_image(image, name="image"):
    """Require an (H, W, 3) uint8 array; returns it as a contiguous ndarray."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    if arr.dtype != np.uint8:
        raise ValueError(f"{name} must be uint8, got {arr.dtype}")
    return np.ascontiguousarray(arr)


def check_image_stack(images, name="X"):
    """Accept a list of RGB frames or an (N, H, W, 3) array; returns the 4D array."""
    if isinstance(images, np.ndarray) and images.ndim == 4:
        stack = images
    else:
        frames = [check_rgb_image(im, name=f"{name}[{i}]") for i, im in enumerate(images)]
        if not frames:
            raise ValueError(f"{name} must contain at least one frame")
        if len({f.shape for f in frames}) != 1:
            raise ValueError(f"{name} frames must share one shape")
        stack = np.stack(frames)
    if stack.shape[3] != 3 or stack.dtype != np.uint8:
        raise ValueError(f"{name} must be (N, H, W, 3) uint8, got {stack.shape} {stack.dtype}")
    if stack.shape[0] < 1:
        raise ValueError(f"{name} must contain at least one frame")
    return stack


def check_pose_matrix(X, joints, name="X"):
    """Accept (N, J, 3) or flattened (N, 3J) float data; returns (N, J, 3) float64."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 2 and arr.shape[1] == joints * 3:
        arr = arr.reshape(arr.shape[0], joints, 3)
    if arr.ndim != 3 or arr.shape[1:] != (joints, 3):
        raise ValueError(
            f"{name} must be (N, {joints}, 3) or (N, {joints * 3}), got {np.shape(X)}"
        )
    if arr.shape[0] < 1:
        raise ValueError(f"{name} must contain at least one pose")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def check_feature_matrix(X, n_features, name="X"):
    """Require a finite 2D float matrix with a fixed column count."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2D, got shape {arr.shape}")
    if arr.shape[1] != n_features:
        raise ValueError(f"{name} must have {n_features} columns, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def check_in_unit_interval(value, name):
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {value}")
    return float(value)


def check_positive(value, name):
    if value <= 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return value
