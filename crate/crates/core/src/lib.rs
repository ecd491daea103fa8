//! Stereo ego-motion tracking robust to large dynamic occlusions.
//!
//! The core is generic over the scalar type; the aliases below fix it to
//! `f64` or `f32`. Simulation, file formats and evaluation run in `f64`.

pub mod dataset;
pub mod eval;
pub mod experiment;
pub mod frame;
pub mod geometry;
pub mod masking;
pub mod motion;
mod scalar;
pub mod sim;
pub mod tracking;

pub use scalar::Scalar;

pub type Pose64 = geometry::Pose<f64>;
pub type Pose32 = geometry::Pose<f32>;
pub type Intrinsics64 = geometry::CameraIntrinsics<f64>;
pub type Intrinsics32 = geometry::CameraIntrinsics<f32>;
pub type FrameObservation64 = frame::FrameObservation<f64>;
pub type FrameObservation32 = frame::FrameObservation<f32>;
pub type Tracker64 = tracking::Tracker<f64>;
pub type Tracker32 = tracking::Tracker<f32>;
pub type TrackingConfig64 = tracking::TrackingConfig<f64>;
pub type TrackingConfig32 = tracking::TrackingConfig<f32>;
