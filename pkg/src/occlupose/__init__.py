"""Synthetic occlusion augmentation and differentiable volumetric-heatmap
decoding for 3D human pose pipelines."""

from .augment import (
    AppearanceConfig,
    AugmentationConfig,
    AugParams,
    GeometricConfig,
    OcclusionConfig,
    OcclusionRecord,
    appearance_augment,
    frame_rng,
    geometric_augment,
    occlude_frame,
    paste,
    sample_params,
)
from .camera import (
    BoundingBox,
    CameraIntrinsics,
    CropTransform,
    FocalCorrection,
    back_project,
    back_project_grad,
    crop_camera,
    project,
    warp_image,
)
from .estimators import HeatmapPoseDecoder, OcclusionAugmenter, SoftArgmaxPoseFitter
from .heatmaps import (
    BackboneOutput,
    CoordinateGrid,
    DecodedPose,
    VolumetricHeatmapSet,
    decode,
    make_grid,
    reshape_channels,
    soft_argmax1,
    soft_argmax1_grad,
    soft_argmax3,
    soft_argmax3_grad,
    softmax_volume,
)
from .metrics import (
    EvalRecord,
    JointFlipMap,
    default_flip_map,
    ensemble_average,
    flip_pose,
    mpjpe,
    per_action_report,
    tta_average,
)
from .pose import Pose3D, root_relative
from .train import (
    ChainResult,
    LossReport,
    LrSchedule,
    ToyTrainConfig,
    TrainingDiverged,
    TrainReport,
    full_backward,
    l1_loss,
    snapshot_steps,
    toy_train,
    triangular_lr,
)
from .voc import (
    AnnotationObject,
    FilterRules,
    LibraryIntegrityError,
    OccluderLibrary,
    SegmentedObject,
    VocParseError,
    build_library,
    extract_cutouts,
    filter_objects,
    load_library,
    parse_annotation,
)

__version__ = "0.1.0"

__all__ = [
    "AnnotationObject",
    "AppearanceConfig",
    "AugParams",
    "AugmentationConfig",
    "BackboneOutput",
    "BoundingBox",
    "CameraIntrinsics",
    "ChainResult",
    "CoordinateGrid",
    "CropTransform",
    "DecodedPose",
    "EvalRecord",
    "FilterRules",
    "FocalCorrection",
    "GeometricConfig",
    "HeatmapPoseDecoder",
    "JointFlipMap",
    "LibraryIntegrityError",
    "LossReport",
    "LrSchedule",
    "OccluderLibrary",
    "OcclusionAugmenter",
    "OcclusionConfig",
    "OcclusionRecord",
    "Pose3D",
    "SegmentedObject",
    "SoftArgmaxPoseFitter",
    "ToyTrainConfig",
    "TrainReport",
    "TrainingDiverged",
    "VocParseError",
    "VolumetricHeatmapSet",
    "appearance_augment",
    "back_project",
    "back_project_grad",
    "build_library",
    "crop_camera",
    "decode",
    "default_flip_map",
    "ensemble_average",
    "extract_cutouts",
    "filter_objects",
    "flip_pose",
    "frame_rng",
    "full_backward",
    "geometric_augment",
    "l1_loss",
    "load_library",
    "make_grid",
    "mpjpe",
    "occlude_frame",
    "parse_annotation",
    "paste",
    "per_action_report",
    "project",
    "reshape_channels",
    "root_relative",
    "sample_params",
    "snapshot_steps",
    "soft_argmax1",
    "soft_argmax1_grad",
    "soft_argmax3",
    "soft_argmax3_grad",
    "softmax_volume",
    "toy_train",
    "triangular_lr",
    "tta_average",
    "warp_image",
]
