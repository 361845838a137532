"""Seeded synthetic-occlusion pasting plus geometric and appearance augmentation.

All randomness for a frame comes from a generator derived by hashing
(seed, frame_id), so results are independent of processing order and thread
count. Images are RGB uint8 arrays of shape (H, W, 3); cutout alpha masks are
uint8 arrays with values 0 or 255.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field, replace

import cv2
import numpy as np

from .metrics import default_flip_map, flip_pose
from .pose import Pose3D

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OcclusionConfig:
    """How occluders are pasted: per-frame probability, count range and sizing.

    scale_range is the pasted object's larger side as a fraction of the crop's
    larger side; placement is uniform over the whole crop, so occluders may be
    partially clipped at the borders.
    """

    p_occ: float = 0.5
    count_min: int = 1
    count_max: int = 8
    scale_range: tuple = (0.1, 0.7)

    def __post_init__(self):
        if not 0.0 <= self.p_occ <= 1.0:
            raise ValueError(f"p_occ must be in [0, 1], got {self.p_occ}")
        if not 1 <= self.count_min <= self.count_max:
            raise ValueError(
                f"need 1 <= count_min <= count_max, got {self.count_min}..{self.count_max}"
            )
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise ValueError(f"invalid scale_range {self.scale_range}")


@dataclass(frozen=True)
class GeometricConfig:
    """Ranges for the standard geometric augmentations (not tuned values,
    just configurable defaults)."""

    rotation_max_deg: float = 30.0
    translation_max_frac: float = 0.1
    zoom_range: tuple = (0.75, 1.25)
    hflip_prob: float = 0.5

    def __post_init__(self):
        if self.rotation_max_deg < 0 or self.translation_max_frac < 0:
            raise ValueError("geometric ranges must be nonnegative")
        lo, hi = self.zoom_range
        if not 0 < lo <= hi:
            raise ValueError(f"invalid zoom_range {self.zoom_range}")
        if not 0.0 <= self.hflip_prob <= 1.0:
            raise ValueError(f"hflip_prob must be in [0, 1], got {self.hflip_prob}")


@dataclass(frozen=True)
class AppearanceConfig:
    """Ranges for blur and per-channel color gain."""

    blur_sigma_range: tuple = (0.0, 2.0)
    gain_range: tuple = (0.8, 1.2)

    def __post_init__(self):
        if self.blur_sigma_range[0] < 0:
            raise ValueError("blur sigma must be nonnegative")
        if self.gain_range[0] <= 0:
            raise ValueError("color gains must be positive")


@dataclass(frozen=True)
class AugmentationConfig:
    """Everything sample_params needs: sub-configs plus crop size and library size."""

    occlusion: OcclusionConfig = field(default_factory=OcclusionConfig)
    geometric: GeometricConfig = field(default_factory=GeometricConfig)
    appearance: AppearanceConfig = field(default_factory=AppearanceConfig)
    out_size: int = 256
    library_size: int = 1

    def __post_init__(self):
        if self.out_size < 1:
            raise ValueError(f"out_size must be >= 1, got {self.out_size}")
        if self.library_size < 1:
            raise ValueError(f"library_size must be >= 1, got {self.library_size}")

    def with_p_occ(self, p_occ):
        return replace(self, occlusion=replace(self.occlusion, p_occ=p_occ))


@dataclass(frozen=True)
class AugParams:
    """Concrete augmentation decisions for one frame."""

    occlude: bool
    occluder_ids: tuple
    positions: tuple
    scales: tuple
    rotation_deg: float = 0.0
    translation_px: tuple = (0.0, 0.0)
    zoom: float = 1.0
    hflip: bool = False
    blur_sigma: float = 0.0
    color_gains: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if not len(self.occluder_ids) == len(self.positions) == len(self.scales):
            raise ValueError("occluder_ids, positions and scales must share length")
        if not self.occlude and self.occluder_ids:
            raise ValueError("occluder lists must be empty when occlude is False")

    @classmethod
    def identity(cls):
        return cls(occlude=False, occluder_ids=(), positions=(), scales=())


@dataclass(frozen=True)
class OcclusionRecord:
    """Provenance of one augmented frame: the decisions plus the crop fraction
    overwritten by the pasted alpha union."""

    frame_id: str
    params: AugParams
    covered_fraction: float


def frame_rng(seed, frame_id):
    """Generator derived by hashing (seed, frame_id); stable across runs,
    platforms and worker counts."""
    digest = hashlib.blake2b(frame_id.encode("utf-8"), digest_size=16).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, *words]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def sample_params(config, seed, frame_id):
    """Draw the per-frame augmentation decisions.

    Deterministic in (seed, frame_id, config). Occlusion fires with probability
    p_occ; the occluder count is uniform on {count_min..count_max}, ids uniform
    over the library, centers uniform over the crop, scales uniform in
    scale_range. Geometric and appearance values are drawn afterwards in a
    fixed order.
    """
    rng = frame_rng(seed, frame_id)
    occ = config.occlusion
    occlude = bool(rng.random() < occ.p_occ)
    if occlude:
        count = int(rng.integers(occ.count_min, occ.count_max + 1))
        ids = tuple(int(i) for i in rng.integers(0, config.library_size, size=count))
        positions = tuple(
            (float(x), float(y))
            for x, y in rng.random((count, 2)) * config.out_size
        )
        scales = tuple(float(v) for v in rng.uniform(*occ.scale_range, size=count))
    else:
        ids, positions, scales = (), (), ()
    geo = config.geometric
    rotation = float(rng.uniform(-geo.rotation_max_deg, geo.rotation_max_deg))
    translation = tuple(
        float(v)
        for v in rng.uniform(-geo.translation_max_frac, geo.translation_max_frac, size=2)
        * config.out_size
    )
    zoom = float(rng.uniform(*geo.zoom_range))
    hflip = bool(rng.random() < geo.hflip_prob)
    app = config.appearance
    blur_sigma = float(rng.uniform(*app.blur_sigma_range))
    gains = tuple(float(g) for g in rng.uniform(*app.gain_range, size=3))
    return AugParams(
        occlude=occlude,
        occluder_ids=ids,
        positions=positions,
        scales=scales,
        rotation_deg=rotation,
        translation_px=translation,
        zoom=zoom,
        hflip=hflip,
        blur_sigma=blur_sigma,
        color_gains=gains,
    )


def _paste_into(out, union, cutout, position, factor):
    """Composite one rescaled cutout into `out` in place; marks `union` where
    pixels were overwritten. Returns True if anything landed inside the frame."""
    new_w = int(round(cutout.width * factor))
    new_h = int(round(cutout.height * factor))
    if new_w < 1 or new_h < 1:
        logger.warning("cutout scaled to zero pixels (factor %.4g), skipping", factor)
        return False
    if (new_w, new_h) == (cutout.width, cutout.height):
        rgb, alpha = cutout.pixels, cutout.alpha
    else:
        rgb = cv2.resize(cutout.pixels, (new_w, new_h), interpolation=cv2.INTER_LINEAR)
        alpha = cv2.resize(cutout.alpha, (new_w, new_h), interpolation=cv2.INTER_NEAREST)
    px, py = position
    x0 = int(round(px - new_w / 2))
    y0 = int(round(py - new_h / 2))
    h, w = out.shape[:2]
    sx0, sy0 = max(0, -x0), max(0, -y0)
    dx0, dy0 = max(0, x0), max(0, y0)
    dx1, dy1 = min(w, x0 + new_w), min(h, y0 + new_h)
    if dx0 >= dx1 or dy0 >= dy1:
        return False
    sub_rgb = rgb[sy0 : sy0 + (dy1 - dy0), sx0 : sx0 + (dx1 - dx0)]
    sub_on = alpha[sy0 : sy0 + (dy1 - dy0), sx0 : sx0 + (dx1 - dx0)] > 0
    region = out[dy0:dy1, dx0:dx1]
    region[sub_on] = sub_rgb[sub_on]
    if union is not None:
        union[dy0:dy1, dx0:dx1] |= sub_on
    return True


def paste(image, cutout, position, scale):
    """Paste one cutout, centered at `position`, rescaled by the factor `scale`.

    Color resamples bilinearly, alpha with nearest neighbor (stays binary).
    Pixels where the rescaled alpha is off are untouched; parts falling outside
    the image are clipped. Returns a new image.
    """
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    out = np.array(image, copy=True)
    _paste_into(out, None, cutout, position, scale)
    return out


def occlude_frame(image, library, params, frame_id=""):
    """Paste the frame's occluders in list order and report coverage.

    AugParams scales are fractions of the crop's larger side; each converts to
    a resampling factor via the cutout's larger side. Returns the new image and
    an OcclusionRecord whose covered_fraction is the pasted alpha union over
    the crop area.
    """
    out = np.array(image, copy=True)
    if not params.occlude:
        return out, OcclusionRecord(frame_id=frame_id, params=params, covered_fraction=0.0)
    h, w = out.shape[:2]
    crop_side = max(h, w)
    union = np.zeros((h, w), dtype=bool)
    for obj_id, position, frac in zip(params.occluder_ids, params.positions, params.scales):
        if not 0 <= obj_id < len(library):
            raise IndexError(f"occluder id {obj_id} out of range for library of {len(library)}")
        cutout = library[obj_id]
        factor = frac * crop_side / max(cutout.width, cutout.height)
        _paste_into(out, union, cutout, position, factor)
    covered = float(np.count_nonzero(union) / (h * w))
    return out, OcclusionRecord(frame_id=frame_id, params=params, covered_fraction=covered)


def _similarity_matrix(params, out_w, out_h):
    """2D similarity in continuous crop coordinates: rotate about the crop
    center, zoom about the center, translate, then optionally mirror."""
    cx, cy = out_w / 2, out_h / 2
    theta = math.radians(params.rotation_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    z = params.zoom
    tx, ty = params.translation_px
    a = z * cos_t
    b = z * sin_t
    m = np.array(
        [
            [a, -b, cx - a * cx + b * cy + tx],
            [b, a, cy - b * cx - a * cy + ty],
            [0.0, 0.0, 1.0],
        ]
    )
    if params.hflip:
        flip = np.array([[-1.0, 0.0, out_w], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        m = flip @ m
    return m


def _rotate_pose_about_axis(pose, rotation_deg):
    theta = math.radians(rotation_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    rot = np.array([[cos_t, -sin_t, 0.0], [sin_t, cos_t, 0.0], [0.0, 0.0, 1.0]])
    return Pose3D(pose.joints @ rot.T, pose.root_index)


def geometric_augment(image, pose, params, crop, flip_map=None):
    """Compose the sampled 2D similarity into the crop warp and co-transform the pose.

    The source image passes through untouched (rendering happens later via
    warp_image); the crop homography gains the rotation/zoom/translation/flip
    and its zoom scale is multiplied by the sampled zoom. A present pose picks
    up only the parts that change the 3D frame: rotation about the optical axis
    and, for a flip, X-negation with the left/right joint permutation.
    """
    similarity = _similarity_matrix(params, crop.out_w, crop.out_h)
    new_crop = crop.with_homography(similarity @ crop.homography, s=crop.s * params.zoom)
    if pose is None:
        return image, None, new_crop
    new_pose = _rotate_pose_about_axis(pose, params.rotation_deg)
    if params.hflip:
        if flip_map is None:
            flip_map = default_flip_map(pose.joint_count)
        new_pose = flip_pose(new_pose, flip_map)
    return image, new_pose, new_crop


def appearance_augment(image, params):
    """Gaussian blur (sigma 0 skips) followed by clamped per-channel gains."""
    if params.blur_sigma < 0:
        raise ValueError(f"blur sigma must be nonnegative, got {params.blur_sigma}")
    if any(g <= 0 for g in params.color_gains):
        raise ValueError(f"color gains must be positive, got {params.color_gains}")
    out = np.array(image, copy=True)
    if params.blur_sigma > 0:
        out = cv2.GaussianBlur(out, (0, 0), sigmaX=params.blur_sigma)
    gains = np.asarray(params.color_gains, dtype=np.float64)
    if not np.all(gains == 1.0):
        scaled = np.rint(out.astype(np.float64) * gains).clip(0, 255)
        out = scaled.astype(np.uint8)
    return out
