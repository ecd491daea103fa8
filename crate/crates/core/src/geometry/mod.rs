//! Rigid transforms, the stereo camera model and robust-cost primitives.

mod camera;
mod pose;

pub use camera::{CameraIntrinsics, PixelMono, PixelStereo, MIN_DISPARITY_PX};
pub use pose::{hat, so3_exp, Pose};

use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("point has non-positive depth")]
    NonPositiveDepth,
    #[error("stereo disparity below the triangulation minimum")]
    DegenerateDisparity,
    #[error("rotation angle too close to pi for the logarithm")]
    NearPiRotation,
    #[error("rotation matrix is not in SO(3)")]
    InvalidRotation,
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
}

/// IRLS weight of the Huber cost on a squared (Mahalanobis) error.
///
/// Returns 1 inside the quadratic region `squared_error <= delta²` and
/// `delta / |r|` outside it.
pub fn huber_weight<T: Scalar>(squared_error: T, delta: T) -> T {
    if squared_error <= delta * delta {
        T::one()
    } else {
        delta / squared_error.sqrt()
    }
}

/// Huber cost on a squared error: `s` inside, `2·delta·sqrt(s) - delta²` outside.
pub fn huber_cost<T: Scalar>(squared_error: T, delta: T) -> T {
    if squared_error <= delta * delta {
        squared_error
    } else {
        T::lit(2.0) * delta * squared_error.sqrt() - delta * delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huber_weight_examples() {
        assert_eq!(huber_weight(0.0, 2.0), 1.0);
        assert_eq!(huber_weight(4.0, 2.0), 1.0);
        assert_eq!(huber_weight(16.0, 2.0), 0.5);
    }

    #[test]
    fn huber_weight_continuous_at_boundary() {
        for delta in [0.3f64, 1.0, 5.991f64.sqrt(), 7.815f64.sqrt(), 40.0] {
            let b = delta * delta;
            let left = huber_weight(b * (1.0 - 1e-15), delta);
            let right = huber_weight(b * (1.0 + 1e-15), delta);
            assert!((left - right).abs() < 1e-12, "delta {delta}");
        }
    }

    #[test]
    fn huber_cost_is_differentiable_at_boundary() {
        let delta = 1.5f64;
        let b = delta * delta;
        let h = 1e-7;
        let left = (huber_cost(b, delta) - huber_cost(b - h, delta)) / h;
        let right = (huber_cost(b + h, delta) - huber_cost(b, delta)) / h;
        assert!((left - right).abs() < 1e-6);
        assert!((right - huber_weight(b, delta)).abs() < 1e-6);
    }
}
