use nalgebra::Point3;

use crate::frame::{Descriptor, FrameObservation};
use crate::geometry::Pose;
use crate::masking::OcclusionMask;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct MapPoint<T: Scalar> {
    pub id: u64,
    /// World position in meters.
    pub position: Point3<T>,
    pub descriptor: Descriptor,
    pub observations: u32,
    /// Keyframe counter value when the point was last matched.
    pub last_seen_keyframe: u64,
    /// Simulator landmark of the feature the point was created from; audit only.
    pub origin_hint: Option<u64>,
}

/// Changes applied by one [`LocalMap::update`] call.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MapDelta {
    pub added: Vec<u64>,
    pub pruned: Vec<u64>,
}

/// Minimal map: points are created from unmasked stereo features on
/// keyframes and dropped after going unmatched for too many keyframes.
#[derive(Debug, Clone)]
pub struct LocalMap<T: Scalar> {
    points: Vec<MapPoint<T>>,
    next_id: u64,
    keyframes: u64,
    prune_after_keyframes: u64,
}

impl<T: Scalar> LocalMap<T> {
    pub fn new(prune_after_keyframes: u64) -> Self {
        Self {
            points: Vec::new(),
            next_id: 0,
            keyframes: 0,
            prune_after_keyframes,
        }
    }

    pub fn points(&self) -> &[MapPoint<T>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn keyframe_count(&self) -> u64 {
        self.keyframes
    }

    /// Records that the given map points (by index) were matched in the current frame.
    pub fn mark_observed(&mut self, indices: impl IntoIterator<Item = usize>) {
        for i in indices {
            let p = &mut self.points[i];
            p.observations += 1;
            p.last_seen_keyframe = self.keyframes;
        }
    }

    /// Map maintenance after a tracked frame. `camera_pose` is camera-to-world;
    /// `matched[i]` tells whether feature `i` was matched to an existing point.
    ///
    /// On keyframes, stereo features outside `mask` that were not matched are
    /// triangulated and inserted, and points unseen for more than the pruning
    /// horizon are removed.
    pub fn update(
        &mut self,
        frame: &FrameObservation<T>,
        camera_pose: &Pose<T>,
        mask: &OcclusionMask,
        matched: &[bool],
        is_keyframe: bool,
    ) -> MapDelta {
        let mut delta = MapDelta::default();
        if !is_keyframe {
            return delta;
        }
        self.keyframes += 1;
        for (i, f) in frame.features.iter().enumerate() {
            if matched.get(i).copied().unwrap_or(false) {
                continue;
            }
            let Some(stereo) = f.pixel.stereo() else { continue };
            if mask.is_masked_at(stereo.u_l, stereo.v_l) {
                continue;
            }
            let Ok(pc) = frame.intrinsics.triangulate_stereo(stereo) else {
                continue;
            };
            let id = self.next_id;
            self.next_id += 1;
            self.points.push(MapPoint {
                id,
                position: camera_pose.transform_point(&pc),
                descriptor: f.descriptor,
                observations: 1,
                last_seen_keyframe: self.keyframes,
                origin_hint: f.landmark_hint,
            });
            delta.added.push(id);
        }
        let horizon = self.prune_after_keyframes;
        let now = self.keyframes;
        self.points.retain(|p| {
            let keep = now - p.last_seen_keyframe <= horizon;
            if !keep {
                delta.pruned.push(p.id);
            }
            keep
        });
        delta
    }
}
