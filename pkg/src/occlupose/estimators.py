"""Estimator-style wrappers so the pipeline composes with the scikit-learn
ecosystem (get_params/set_params, clone, sklearn.pipeline).

Parameters are stored verbatim in __init__ per the scikit-learn contract;
validation and derived state happen in fit.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from . import augment, camera, heatmaps, train
from .metrics import ensemble_average
from .pose import Pose3D
from .validation import check_image_stack, check_in_unit_interval, check_pose_matrix


class OcclusionAugmenter(TransformerMixin, BaseEstimator):
    """Stateless per-frame occlusion transformer over stacks of RGB crops.

    transform(X) augments each frame of an (N, H, W, 3) uint8 stack (or list of
    frames), deriving the per-frame randomness from (seed, frame index), so the
    result is independent of batch splitting order. Occlusion provenance for
    the latest transform is kept in `records_`.
    """

    def __init__(
        self,
        library=None,
        p_occ=0.5,
        count_min=1,
        count_max=8,
        scale_range=(0.1, 0.7),
        seed=0,
    ):
        self.library = library
        self.p_occ = p_occ
        self.count_min = count_min
        self.count_max = count_max
        self.scale_range = scale_range
        self.seed = seed

    def fit(self, X=None, y=None):
        if self.library is None or len(self.library) == 0:
            raise ValueError("library must be a nonempty OccluderLibrary")
        check_in_unit_interval(self.p_occ, "p_occ")
        self.library_size_ = len(self.library)
        return self

    def _config(self, out_size):
        return augment.AugmentationConfig(
            occlusion=augment.OcclusionConfig(
                p_occ=self.p_occ,
                count_min=self.count_min,
                count_max=self.count_max,
                scale_range=tuple(self.scale_range),
            ),
            out_size=out_size,
            library_size=self.library_size_,
        )

    def transform(self, X):
        if not hasattr(self, "library_size_"):
            raise NotFittedError("call fit before transform")
        stack = check_image_stack(X)
        config = self._config(out_size=max(stack.shape[1], stack.shape[2]))
        out = np.empty_like(stack)
        records = []
        for i in range(stack.shape[0]):
            frame_id = str(i)
            params = augment.sample_params(config, self.seed, frame_id)
            out[i], record = augment.occlude_frame(
                stack[i], self.library, params, frame_id=frame_id
            )
            records.append(record)
        self.records_ = records
        return out


class HeatmapPoseDecoder(TransformerMixin, BaseEstimator):
    """Decode flattened backbone logits into 3D camera-space joints (mm).

    Rows of X hold the spatial logits (Hh*Wh*J*D values, HWC order) followed by
    the absolute-depth logits (Dz values). transform returns (N, J*3) with each
    joint's (X, Y, Z).
    """

    def __init__(
        self,
        joints=17,
        depth_bins=16,
        heatmap_size=16,
        zstar_bins=32,
        out_size=256,
        rel_depth_range_mm=1000.0,
        zstar_range_mm=10000.0,
        focal_length=1500.0,
        crop_scale=1.0,
        focal_correction=1.0,
    ):
        self.joints = joints
        self.depth_bins = depth_bins
        self.heatmap_size = heatmap_size
        self.zstar_bins = zstar_bins
        self.out_size = out_size
        self.rel_depth_range_mm = rel_depth_range_mm
        self.zstar_range_mm = zstar_range_mm
        self.focal_length = focal_length
        self.crop_scale = crop_scale
        self.focal_correction = focal_correction

    @property
    def _n_spatial(self):
        return self.heatmap_size * self.heatmap_size * self.joints * self.depth_bins

    def fit(self, X=None, y=None):
        self.grid_ = heatmaps.make_grid(
            heatmap_w=self.heatmap_size,
            heatmap_h=self.heatmap_size,
            depth_bins=self.depth_bins,
            zstar_bins=self.zstar_bins,
            out_w=self.out_size,
            out_h=self.out_size,
            rel_depth_range_mm=self.rel_depth_range_mm,
            zstar_range_mm=self.zstar_range_mm,
        )
        self.n_features_in_ = self._n_spatial + self.zstar_bins
        return self

    def transform(self, X):
        if not hasattr(self, "grid_"):
            raise NotFittedError("call fit before transform")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X must be (N, {self.n_features_in_}): "
                f"{self._n_spatial} spatial + {self.zstar_bins} depth logits"
            )
        hm = self.heatmap_size
        out = np.empty((X.shape[0], self.joints * 3))
        for i, row in enumerate(X):
            output = heatmaps.BackboneOutput(
                spatial_logits=row[: self._n_spatial].reshape(
                    hm, hm, self.joints * self.depth_bins
                ),
                depth_logits=row[self._n_spatial :],
            )
            decoded = heatmaps.decode(output, self.joints, self.depth_bins, self.grid_)
            joints3d = camera.back_project(
                decoded.xy[:, 0],
                decoded.xy[:, 1],
                decoded.dz,
                decoded.zstar,
                self.focal_length,
                self.crop_scale,
                self.focal_correction,
                self.out_size,
                self.out_size,
            )
            out[i] = joints3d.reshape(-1)
        return out


class SoftArgmaxPoseFitter(BaseEstimator):
    """Fit free per-sample heatmap logits (and optionally the focal correction)
    to target poses by gradient descent through the differentiable decoder.

    fit(X) takes targets as (N, J, 3) or (N, 3J) millimeters; predict() returns
    the snapshot-ensembled fitted poses for those samples as (N, J*3).
    """

    def __init__(
        self,
        steps=500,
        base_lr=2.0,
        max_lr=40.0,
        period=100,
        seed=0,
        joints=17,
        depth_bins=16,
        heatmap_size=16,
        zstar_bins=32,
        out_size=256,
        focal_length=1500.0,
        crop_scale=1.0,
        learn_c=False,
        c_init=1.0,
        loss_space=train.ROOT_RELATIVE,
        root_index=0,
    ):
        self.steps = steps
        self.base_lr = base_lr
        self.max_lr = max_lr
        self.period = period
        self.seed = seed
        self.joints = joints
        self.depth_bins = depth_bins
        self.heatmap_size = heatmap_size
        self.zstar_bins = zstar_bins
        self.out_size = out_size
        self.focal_length = focal_length
        self.crop_scale = crop_scale
        self.learn_c = learn_c
        self.c_init = c_init
        self.loss_space = loss_space
        self.root_index = root_index

    def _config(self):
        return train.ToyTrainConfig(
            steps=self.steps,
            schedule=train.LrSchedule(self.base_lr, self.max_lr, self.period),
            seed=self.seed,
            joints=self.joints,
            depth_bins=self.depth_bins,
            heatmap_size=self.heatmap_size,
            zstar_bins=self.zstar_bins,
            out_size=self.out_size,
            focal_length=self.focal_length,
            crop_scale=self.crop_scale,
            learn_c=self.learn_c,
            c_init=self.c_init,
            loss_space=self.loss_space,
        )

    def fit(self, X, y=None):
        targets = check_pose_matrix(X, self.joints)
        poses = [Pose3D(t, self.root_index) for t in targets]
        self.report_ = train.toy_train(self._config(), poses)
        self.c_ = self.report_.final_c
        self.loss_curve_ = list(self.report_.loss_curve)
        return self

    def predict(self, X=None):
        if not hasattr(self, "report_"):
            raise NotFittedError("call fit before predict")
        snapshots = self.report_.snapshot_preds
        n = len(snapshots[0])
        averaged = [
            ensemble_average([snap[i] for snap in snapshots]) for i in range(n)
        ]
        return np.stack([p.joints.reshape(-1) for p in averaged])
