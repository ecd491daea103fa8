use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::map::LocalMap;
use super::matching::match_map_points;
use super::solver::{solve_motion_only_ba, Correspondence};
use super::{TrackingConfig, TrackingError};
use crate::frame::FrameObservation;
use crate::geometry::Pose;
use crate::masking::{
    hierarchical_mask_with_ratio, rasterize_bbox_mask, rasterize_pixelwise_mask, unmask_objects, MaskTier,
    OcclusionMask,
};
use crate::motion::{classify_frame_objects, select_reference_frame, MotionLabel, ObjectVerdict};
use crate::Scalar;

/// How the per-frame occlusion mask is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskPolicy {
    /// Box tier, refined to pixel-wise when the box mask covers at least `tau_mar`.
    Hierarchical,
    BBoxAlways,
    PixelwiseAlways,
    /// Nothing is masked.
    NoMask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub mask_policy: MaskPolicy,
    /// Run the second round with static objects unmasked.
    pub two_round: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            mask_policy: MaskPolicy::Hierarchical,
            two_round: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackingStatus {
    Tracked,
    Lost,
}

/// Outcome of tracking one frame. Poses are camera-to-world.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingResult<T: Scalar> {
    pub timestamp: f64,
    pub pose: Pose<T>,
    /// Estimate after the first round; equals `pose` when no second round ran.
    pub round1_pose: Pose<T>,
    pub status: TrackingStatus,
    /// Why the frame was lost, if it was.
    pub error: Option<TrackingError>,
    pub mask_tier: MaskTier,
    /// Masked area ratio of the box-tier mask.
    pub bbox_mar: f64,
    /// Masked area ratio of the first-round mask.
    pub mar: f64,
    /// Masked area ratio after static objects were unmasked.
    pub final_mar: f64,
    pub objects: BTreeMap<u32, ObjectVerdict<T>>,
    /// Detections unmasked for the second round.
    pub unmasked_ids: Vec<u32>,
    pub round1_inliers: usize,
    pub inlier_count: usize,
    /// Indices of frame features that were inliers of the final estimate.
    pub inlier_features: Vec<usize>,
    pub second_round: bool,
    pub keyframe: bool,
    pub map_size: usize,
}

/// Constant-velocity prediction on camera-to-world poses.
pub fn predict_pose<T: Scalar>(prev: &Pose<T>, prev_prev: Option<&Pose<T>>) -> Pose<T> {
    match prev_prev {
        Some(pp) => prev.compose(&pp.inverse().compose(prev)),
        None => *prev,
    }
}

struct RoundOutcome<T: Scalar> {
    pose: Pose<T>,
    /// `(map index, feature index)` for every match fed to the solver.
    matches: Vec<(usize, usize)>,
    inliers: Vec<bool>,
}

impl<T: Scalar> RoundOutcome<T> {
    fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|b| **b).count()
    }

    fn inlier_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.matches.iter().zip(&self.inliers).filter(|(_, ok)| **ok).map(|(m, _)| *m)
    }
}

/// Frame-to-map tracker running the masked two-round pipeline.
#[derive(Debug, Clone)]
pub struct Tracker<T: Scalar> {
    cfg: TrackingConfig<T>,
    options: PipelineOptions,
    map: LocalMap<T>,
    /// Recent frames with their final poses; the newest is last.
    history: Vec<(FrameObservation<T>, Pose<T>)>,
    last_pose: Option<Pose<T>>,
    prev_pose: Option<Pose<T>>,
    tracked_frames: usize,
    lost_streak: usize,
}

impl<T: Scalar> Tracker<T> {
    pub fn new(cfg: TrackingConfig<T>, options: PipelineOptions) -> Self {
        Self {
            map: LocalMap::new(cfg.prune_after_keyframes),
            cfg,
            options,
            history: Vec::new(),
            last_pose: None,
            prev_pose: None,
            tracked_frames: 0,
            lost_streak: 0,
        }
    }

    pub fn config(&self) -> &TrackingConfig<T> {
        &self.cfg
    }

    pub fn options(&self) -> PipelineOptions {
        self.options
    }

    pub fn map(&self) -> &LocalMap<T> {
        &self.map
    }

    fn build_mask(&self, frame: &FrameObservation<T>) -> (OcclusionMask, f64) {
        let (w, h) = (frame.intrinsics.width, frame.intrinsics.height);
        let dets = &frame.detections;
        match self.options.mask_policy {
            MaskPolicy::Hierarchical => hierarchical_mask_with_ratio(dets, w, h, self.cfg.tau_mar),
            MaskPolicy::BBoxAlways => {
                let m = rasterize_bbox_mask(dets, w, h);
                let mar = m.masked_area_ratio();
                (m, mar)
            }
            MaskPolicy::PixelwiseAlways => {
                let mar = rasterize_bbox_mask(dets, w, h).masked_area_ratio();
                (rasterize_pixelwise_mask(dets, w, h), mar)
            }
            MaskPolicy::NoMask => {
                let mar = rasterize_bbox_mask(dets, w, h).masked_area_ratio();
                (OcclusionMask::blank(w, h, MaskTier::BBox), mar)
            }
        }
    }

    /// One pose estimate against the map with `mask` applied, starting at `init` (camera-to-world).
    fn estimate(
        &self,
        frame: &FrameObservation<T>,
        mask: &OcclusionMask,
        init: &Pose<T>,
    ) -> Result<RoundOutcome<T>, TrackingError> {
        let cfg = &self.cfg;
        let required = cfg.solver.min_inliers;
        let points = self.map.points();
        let mut matches =
            match_map_points(points, frame, init, mask, cfg.match_window, cfg.descriptor_max_distance);
        if matches.len() < 2 * required {
            let wide = match_map_points(
                points,
                frame,
                init,
                mask,
                cfg.match_window * T::lit(2.0),
                cfg.descriptor_max_distance,
            );
            if wide.len() > matches.len() {
                matches = wide;
            }
        }
        let corrs: Vec<Correspondence<T>> = matches
            .iter()
            .map(|&(mi, fi)| {
                let f = &frame.features[fi];
                Correspondence {
                    point: points[mi].position,
                    observation: f.pixel,
                    scale_level: f.scale_level,
                }
            })
            .collect();
        let k = &frame.intrinsics;
        let first = solve_motion_only_ba(k, &corrs, &init.inverse(), &cfg.solver)?;
        let mut w2c = first.world_to_camera;
        let mut inliers = first.inliers;

        // Re-solve without the outliers of the first pass.
        let count = inliers.iter().filter(|b| **b).count();
        if count >= required && count < corrs.len() {
            let kept: Vec<usize> = (0..corrs.len()).filter(|&i| inliers[i]).collect();
            let subset: Vec<Correspondence<T>> = kept.iter().map(|&i| corrs[i]).collect();
            let refined = solve_motion_only_ba(k, &subset, &w2c, &cfg.solver)?;
            w2c = refined.world_to_camera;
            inliers = vec![false; corrs.len()];
            for (j, &i) in kept.iter().enumerate() {
                inliers[i] = refined.inliers[j];
            }
        }
        let outcome = RoundOutcome {
            pose: w2c.inverse(),
            matches,
            inliers,
        };
        let found = outcome.inlier_count();
        if found < required {
            return Err(TrackingError::InsufficientMatches { found, required });
        }
        Ok(outcome)
    }

    fn push_history(&mut self, frame: FrameObservation<T>, pose: Pose<T>) {
        let cap = self.cfg.classifier.ref_lag_n.max(1) + 1;
        self.history.push((frame, pose));
        if self.history.len() > cap {
            let excess = self.history.len() - cap;
            self.history.drain(..excess);
        }
    }

    fn advance(&mut self, pose: Pose<T>) {
        self.prev_pose = self.last_pose;
        self.last_pose = Some(pose);
    }

    /// Tracks one frame. The first frame anchors the world frame at identity.
    pub fn track_frame(&mut self, frame: FrameObservation<T>) -> TrackingResult<T> {
        let (mask, bbox_mar) = self.build_mask(&frame);
        let mar = mask.masked_area_ratio();
        let mut result = TrackingResult {
            timestamp: frame.timestamp,
            pose: Pose::identity(),
            round1_pose: Pose::identity(),
            status: TrackingStatus::Tracked,
            error: None,
            mask_tier: mask.tier(),
            bbox_mar,
            mar,
            final_mar: mar,
            objects: BTreeMap::new(),
            unmasked_ids: Vec::new(),
            round1_inliers: 0,
            inlier_count: 0,
            inlier_features: Vec::new(),
            second_round: false,
            keyframe: false,
            map_size: 0,
        };

        let Some(last) = self.last_pose else {
            let matched = vec![false; frame.features.len()];
            self.map.update(&frame, &Pose::identity(), &mask, &matched, true);
            self.tracked_frames = 1;
            result.keyframe = true;
            result.map_size = self.map.len();
            self.advance(Pose::identity());
            self.push_history(frame, Pose::identity());
            return result;
        };
        let predicted = predict_pose(&last, self.prev_pose.as_ref());

        let round1 = match self.estimate(&frame, &mask, &predicted) {
            Ok(r) => r,
            Err(e) => {
                self.lost_streak += 1;
                result.pose = predicted;
                result.round1_pose = predicted;
                result.status = TrackingStatus::Lost;
                result.error = Some(e);
                if self.lost_streak >= self.cfg.reseed_after_lost {
                    self.map = LocalMap::new(self.cfg.prune_after_keyframes);
                    let matched = vec![false; frame.features.len()];
                    self.map.update(&frame, &predicted, &mask, &matched, true);
                    self.lost_streak = 0;
                    self.tracked_frames = 1;
                    result.keyframe = true;
                }
                result.map_size = self.map.len();
                self.advance(predicted);
                self.push_history(frame, predicted);
                return result;
            }
        };
        self.lost_streak = 0;
        result.round1_pose = round1.pose;
        result.round1_inliers = round1.inlier_count();

        self.push_history(frame, round1.pose);
        let n = self.cfg.classifier.ref_lag_n.max(1);
        let (current, _) = self.history.last().expect("just pushed");
        if self.history.len() > 1 {
            let (reference, ref_pose) = select_reference_frame(&self.history, n).expect("non-empty history");
            result.objects = classify_frame_objects(
                reference,
                current,
                ref_pose,
                &round1.pose,
                &self.cfg.classifier,
                self.cfg.descriptor_max_distance,
            );
        }

        let mut final_round = round1;
        let mut final_mask = mask;
        let static_ids: Vec<u32> = result
            .objects
            .iter()
            .filter(|(id, v)| v.state.label == MotionLabel::Static && final_mask.contributor_ids().contains(id))
            .map(|(id, _)| *id)
            .collect();
        if self.options.two_round && !static_ids.is_empty() {
            let unmasked = unmask_objects(&final_mask, &static_ids, &current.detections)
                .expect("static ids come from current detections");
            if let Ok(round2) = self.estimate(current, &unmasked, &final_round.pose) {
                result.second_round = true;
                result.unmasked_ids = static_ids;
                result.final_mar = unmasked.masked_area_ratio();
                final_round = round2;
                final_mask = unmasked;
            }
        }

        result.pose = final_round.pose;
        result.inlier_count = final_round.inlier_count();
        let mut inlier_features: Vec<usize> = final_round.inlier_pairs().map(|(_, fi)| fi).collect();
        inlier_features.sort_unstable();
        result.inlier_features = inlier_features;

        let (current, pose_slot) = self.history.last_mut().expect("just pushed");
        *pose_slot = final_round.pose;
        let keyframe = self.tracked_frames % self.cfg.keyframe_interval.max(1) == 0;
        let mut matched = vec![false; current.features.len()];
        for &(_, fi) in &final_round.matches {
            matched[fi] = true;
        }
        self.map.mark_observed(final_round.inlier_pairs().map(|(mi, _)| mi));
        self.map.update(current, &final_round.pose, &final_mask, &matched, keyframe);
        self.tracked_frames += 1;
        result.keyframe = keyframe;
        result.map_size = self.map.len();
        self.advance(final_round.pose);
        result
    }
}
