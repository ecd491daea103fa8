//! Two-round coarse-to-fine camera ego-motion tracking.
//!
//! Round one estimates the pose against the masked background only. Objects
//! that the motion-state classifier then finds static are unmasked, and round
//! two re-estimates the pose with their features included.

mod map;
mod matching;
mod pipeline;
mod solver;

pub use map::{LocalMap, MapDelta, MapPoint};
pub use matching::match_map_points;
pub use pipeline::{predict_pose, MaskPolicy, PipelineOptions, Tracker, TrackingResult, TrackingStatus};
pub use solver::{
    reprojection_residual, solve_motion_only_ba, Correspondence, MotionOnlyBaResult, ResidualBlock,
    SolverConfig, SCALE_FACTOR,
};

use thiserror::Error;

use crate::masking::MarThreshold;
use crate::motion::ClassifierParams;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrackingError {
    #[error("{found} matches, at least {required} required")]
    InsufficientMatches { found: usize, required: usize },
    #[error("solver diverged: cost rose on five consecutive damped steps")]
    SolverDiverged,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingConfig<T: Scalar> {
    pub tau_mar: MarThreshold,
    pub classifier: ClassifierParams<T>,
    pub solver: SolverConfig<T>,
    /// Search radius around a projected map point, pixels.
    pub match_window: T,
    /// Maximum Hamming distance for a descriptor match, bits.
    pub descriptor_max_distance: u32,
    /// Every n-th tracked frame is a keyframe.
    pub keyframe_interval: usize,
    /// Map points unmatched for more keyframes than this are pruned.
    pub prune_after_keyframes: u64,
    /// Consecutive lost frames after which the map is re-seeded at the predicted pose.
    pub reseed_after_lost: usize,
}

impl<T: Scalar> Default for TrackingConfig<T> {
    fn default() -> Self {
        Self {
            tau_mar: MarThreshold::default(),
            classifier: ClassifierParams::default(),
            solver: SolverConfig::default(),
            match_window: T::lit(15.0),
            descriptor_max_distance: 50,
            keyframe_interval: 5,
            prune_after_keyframes: 30,
            reseed_after_lost: 3,
        }
    }
}
