"""Pinhole crop cameras and differentiable back-projection to 3D camera space.

Continuous image coordinates use the half-integer pixel-center convention: the
center of the pixel at array index (row v, column u) sits at (x, y) =
(u + 0.5, v + 0.5). An image of width W therefore spans x in [0, W] and its
midpoint is exactly W/2, which is where crop cameras put their principal
point. Homographies act on these continuous coordinates; the conversion to
OpenCV's integer-center convention happens inside warp_image only.

Depths and 3D coordinates are in millimeters throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import cv2
import numpy as np

PLANAR = "planar"
ROTATIONAL = "rotational"

#: Column order of the Jacobians returned by back_project_grad.
GRAD_INPUTS = ("x", "y", "dz", "zstar", "c")


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics of a source image (focal length and principal point, px)."""

    f: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.f <= 0:
            raise ValueError(f"focal length must be positive, got {self.f}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image size must be positive, got {self.width}x{self.height}")

    @classmethod
    def centered(cls, f, width, height):
        """Intrinsics with the principal point at the exact image center."""
        return cls(f=float(f), cx=width / 2, cy=height / 2, width=width, height=height)

    def matrix(self):
        return np.array(
            [[self.f, 0.0, self.cx], [0.0, self.f, self.cy], [0.0, 0.0, 1.0]], dtype=np.float64
        )


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned person box in original-image pixels; (x, y) is the top-left corner."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box sides must be positive, got w={self.w}, h={self.h}")

    @property
    def center(self):
        return (self.x + self.w / 2, self.y + self.h / 2)

    @property
    def max_side(self):
        return max(self.w, self.h)


@dataclass(frozen=True)
class CropTransform:
    """Mapping from original-image pixels to crop pixels, with the zoom factor baked in.

    The homography acts on homogeneous continuous pixel coordinates. `s` is the
    zoom applied by the crop; together with a focal correction it multiplies the
    original focal length to give the crop camera's effective focal f*s*c.
    """

    homography: np.ndarray
    s: float
    out_w: int = 256
    out_h: int = 256
    mode: str = ROTATIONAL

    def __post_init__(self):
        h = np.asarray(self.homography, dtype=np.float64)
        if h.shape != (3, 3):
            raise ValueError(f"homography must be 3x3, got shape {h.shape}")
        if abs(np.linalg.det(h)) < 1e-12:
            raise ValueError("homography is singular")
        if self.s <= 0:
            raise ValueError(f"zoom scale must be positive, got {self.s}")
        if self.out_w <= 0 or self.out_h <= 0:
            raise ValueError("crop size must be positive")
        object.__setattr__(self, "homography", h)

    def apply(self, points):
        """Map continuous pixel coordinates (..., 2) through the homography."""
        pts = np.asarray(points, dtype=np.float64)
        ones = np.ones(pts.shape[:-1] + (1,), dtype=np.float64)
        homog = np.concatenate([pts, ones], axis=-1) @ self.homography.T
        return homog[..., :2] / homog[..., 2:]

    def with_homography(self, homography, s=None):
        return replace(self, homography=homography, s=self.s if s is None else s)


@dataclass(frozen=True)
class FocalCorrection:
    """Learnable global multiplier on the effective focal length."""

    c: float = 1.0

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError(f"focal correction must be positive, got {self.c}")


def _skew(v):
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]], dtype=np.float64
    )


def _rotation_taking(a, b):
    """Minimal rotation R with R @ a parallel to b, for unit vectors a, b."""
    v = np.cross(a, b)
    cos = float(np.dot(a, b))
    sin2 = float(np.dot(v, v))
    if sin2 < 1e-30:
        if cos < 0:
            raise ValueError("cannot align antiparallel rays with a minimal rotation")
        return np.eye(3)
    vx = _skew(v)
    return np.eye(3) + vx + vx @ vx * ((1.0 - cos) / sin2)


def crop_camera(box, camera, out_size=256, fill=0.9, mode=ROTATIONAL):
    """Build the person-centric crop transform for a detector box.

    The zoom is s = fill * out_size / max(box w, h), so the larger box side
    fills `fill` of the output.

    In planar mode the mapping translates the box center to the crop center and
    scales uniformly by s. In rotational mode the crop is a virtual camera with
    focal f*s and centered principal point, rotated minimally so its optical
    axis passes through the box center; the mapping is the induced homography
    K_crop @ R @ K_orig^-1. Both modes coincide when the box center lies on the
    original principal point.

    Args:
        box: BoundingBox in original-image pixels.
        camera: CameraIntrinsics of the original image.
        out_size: side length of the square crop in pixels.
        fill: fraction of the output the larger box side should cover.
        mode: PLANAR or ROTATIONAL.

    Returns:
        CropTransform mapping original pixels to crop pixels.
    """
    if fill <= 0:
        raise ValueError(f"fill must be positive, got {fill}")
    if mode not in (PLANAR, ROTATIONAL):
        raise ValueError(f"unknown crop mode {mode!r}")
    s = fill * out_size / box.max_side
    half = out_size / 2
    bx, by = box.center
    if mode == PLANAR:
        homography = np.array(
            [[s, 0.0, half - s * bx], [0.0, s, half - s * by], [0.0, 0.0, 1.0]], dtype=np.float64
        )
    else:
        k_orig = camera.matrix()
        ray = np.linalg.solve(k_orig, np.array([bx, by, 1.0]))
        ray /= np.linalg.norm(ray)
        rot = _rotation_taking(ray, np.array([0.0, 0.0, 1.0]))
        k_crop = np.array(
            [[camera.f * s, 0.0, half], [0.0, camera.f * s, half], [0.0, 0.0, 1.0]]
        )
        homography = k_crop @ rot @ np.linalg.inv(k_orig)
    return CropTransform(homography=homography, s=s, out_w=out_size, out_h=out_size, mode=mode)


_TO_CONTINUOUS = np.array([[1.0, 0.0, 0.5], [0.0, 1.0, 0.5], [0.0, 0.0, 1.0]])
_TO_INDEX = np.array([[1.0, 0.0, -0.5], [0.0, 1.0, -0.5], [0.0, 0.0, 1.0]])

_INTERPOLATIONS = {"bilinear": cv2.INTER_LINEAR, "nearest": cv2.INTER_NEAREST}


def warp_image(image, transform, interpolation="bilinear"):
    """Resample an image into the crop frame (inverse warp, black outside the source)."""
    if interpolation not in _INTERPOLATIONS:
        raise ValueError(f"unknown interpolation {interpolation!r}")
    if abs(np.linalg.det(transform.homography)) < 1e-12:
        raise ValueError("homography is singular")
    h_index = _TO_INDEX @ transform.homography @ _TO_CONTINUOUS
    return cv2.warpPerspective(
        image,
        h_index,
        (transform.out_w, transform.out_h),
        flags=_INTERPOLATIONS[interpolation],
        borderMode=cv2.BORDER_CONSTANT,
        borderValue=0,
    )


def back_project(x, y, dz, zstar, f, s, c, width, height):
    """Lift crop coordinates and depths into 3D camera space (mm).

    The crop camera has effective focal f*s*c and principal point at
    (width/2, height/2):

        Z = zstar + dz
        X = Z * (x - width/2) / (f*s*c)
        Y = Z * (y - height/2) / (f*s*c)

    Inputs broadcast; the result has a trailing axis of length 3 with (X, Y, Z).
    The Z component is exactly the float sum zstar + dz.
    """
    fsc = f * s * c
    if fsc <= 0:
        raise ValueError(f"effective focal f*s*c must be positive, got {fsc}")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(zstar, dtype=np.float64) + np.asarray(dz, dtype=np.float64)
    if np.any(z <= 0):
        raise ValueError("nonpositive depth zstar + dz")
    big_x = z * (x - width / 2) / fsc
    big_y = z * (y - height / 2) / fsc
    big_x, big_y, z = np.broadcast_arrays(big_x, big_y, z)
    return np.stack([big_x, big_y, z], axis=-1)


def project(points, effective_focal, width, height):
    """Project 3D camera-space points (..., 3) to crop pixels (..., 2).

    Inverse of back_project for the crop camera with the given effective focal
    (f*s*c) and centered principal point. Requires Z > 0.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[-1] != 3:
        raise ValueError(f"points must have a trailing axis of length 3, got {pts.shape}")
    if effective_focal <= 0:
        raise ValueError(f"effective focal must be positive, got {effective_focal}")
    z = pts[..., 2]
    if np.any(z <= 0):
        raise ValueError("cannot project points with nonpositive depth")
    x = effective_focal * pts[..., 0] / z + width / 2
    y = effective_focal * pts[..., 1] / z + height / 2
    return np.stack([x, y], axis=-1)


def back_project_grad(x, y, dz, zstar, f, s, c, width, height):
    """Jacobian of back_project outputs (X, Y, Z) w.r.t. (x, y, dz, zstar, c).

    Returns an array of shape (..., 3, 5); rows follow (X, Y, Z) and columns
    follow GRAD_INPUTS. All entries are closed-form partial derivatives of the
    back-projection, e.g. dX/dc = -Z * (x - width/2) / (f*s*c^2).
    """
    fsc = f * s * c
    if fsc <= 0:
        raise ValueError(f"effective focal f*s*c must be positive, got {fsc}")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(zstar, dtype=np.float64) + np.asarray(dz, dtype=np.float64)
    if np.any(z <= 0):
        raise ValueError("nonpositive depth zstar + dz")
    u = x - width / 2
    v = y - height / 2
    u, v, z = np.broadcast_arrays(u, v, z)
    shape = u.shape
    jac = np.zeros(shape + (3, 5), dtype=np.float64)
    jac[..., 0, 0] = z / fsc
    jac[..., 0, 2] = u / fsc
    jac[..., 0, 3] = u / fsc
    jac[..., 0, 4] = -z * u / (fsc * c)
    jac[..., 1, 1] = z / fsc
    jac[..., 1, 2] = v / fsc
    jac[..., 1, 3] = v / fsc
    jac[..., 1, 4] = -z * v / (fsc * c)
    jac[..., 2, 2] = 1.0
    jac[..., 2, 3] = 1.0
    return jac
