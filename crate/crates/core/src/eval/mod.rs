//! Trajectory alignment, error metrics, clock synchronization and ROC analysis.

mod align;
mod roc;
mod trajectory;

pub use align::{associate, associate_and_align, at_rmse, sync_time_offset, umeyama_align, umeyama_points, AlignmentResult};
pub use roc::{roc_auc, sigma_sweep, RocCurve, RocPoint, RocRecord};
pub use trajectory::Trajectory;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("fewer than 3 non-collinear positions")]
    DegenerateGeometry,
    #[error("trajectory lengths differ: {est} estimated, {gt} ground truth")]
    LengthMismatch { est: usize, gt: usize },
    #[error("no time overlap between trajectories")]
    NoOverlap,
    #[error("no usable records: {0}")]
    EmptyRecords(String),
    #[error("timestamps not strictly increasing at entry {index}")]
    NonMonotonic { index: usize },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    InvalidArgument(String),
}
