//! Planar piecewise-constant-velocity paths for the camera rig and machines.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::Pose;

/// Constant forward speed and yaw rate held for `duration` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSegment {
    pub duration: f64,
    /// Meters per second along the heading.
    pub speed: f64,
    /// Radians per second, counter-clockwise seen from above.
    pub yaw_rate: f64,
}

impl PathSegment {
    pub fn new(duration: f64, speed: f64, yaw_rate: f64) -> Self {
        Self {
            duration,
            speed,
            yaw_rate,
        }
    }

    pub fn is_moving(&self) -> bool {
        self.speed != 0.0 || self.yaw_rate != 0.0
    }
}

/// Position on the ground plane and heading about the world z axis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl PlanarPose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading }
    }

    /// Exact integration of a constant speed and yaw rate over `dt` seconds.
    pub fn advance(&self, speed: f64, yaw_rate: f64, dt: f64) -> Self {
        let h1 = self.heading + yaw_rate * dt;
        let (dx, dy) = if yaw_rate.abs() < 1e-12 {
            (speed * dt * self.heading.cos(), speed * dt * self.heading.sin())
        } else {
            let r = speed / yaw_rate;
            (r * (h1.sin() - self.heading.sin()), -r * (h1.cos() - self.heading.cos()))
        };
        Self {
            x: self.x + dx,
            y: self.y + dy,
            heading: h1,
        }
    }

    /// Point `forward` meters ahead and `left` meters to the left, heading offset by `turn`.
    pub fn offset(&self, forward: f64, left: f64, turn: f64) -> Self {
        let (s, c) = self.heading.sin_cos();
        Self {
            x: self.x + c * forward - s * left,
            y: self.y + s * forward + c * left,
            heading: self.heading + turn,
        }
    }

    /// Body-to-world pose with the body origin raised to `height`.
    pub fn to_pose(&self, height: f64) -> Pose<f64> {
        let (s, c) = self.heading.sin_cos();
        let r = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
        Pose::from_parts_unchecked(r, Vector3::new(self.x, self.y, height))
    }
}

/// Route of the camera rig.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CameraPath {
    /// Closed rounded-rectangle loop driven counter-clockwise from the middle
    /// of a long side, repeated.
    RectangleLoop {
        length: f64,
        width: f64,
        corner_radius: f64,
        speed: f64,
    },
    StraightLine { speed: f64 },
    /// Explicit segments; the last one is held after they run out.
    Custom { segments: Vec<PathSegment> },
}

/// 4 km/h in meters per second.
pub const SITE_SPEED: f64 = 4.0 / 3.6;

impl Default for CameraPath {
    fn default() -> Self {
        CameraPath::RectangleLoop {
            length: 40.0,
            width: 20.0,
            corner_radius: 8.0,
            speed: SITE_SPEED,
        }
    }
}

impl CameraPath {
    /// A gentle left-hand arc of the given radius at site speed.
    pub fn arc(radius: f64) -> Self {
        CameraPath::Custom {
            segments: vec![PathSegment::new(f64::INFINITY, SITE_SPEED, SITE_SPEED / radius)],
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            CameraPath::RectangleLoop {
                length,
                width,
                corner_radius,
                speed,
            } => {
                if !(*corner_radius > 0.0 && 2.0 * corner_radius <= *length && 2.0 * corner_radius <= *width) {
                    return Err("rectangle corner radius must fit inside the loop".into());
                }
                if !(*speed > 0.0) {
                    return Err("path speed must be positive".into());
                }
                Ok(())
            }
            CameraPath::StraightLine { speed } => {
                if speed.is_finite() && *speed >= 0.0 {
                    Ok(())
                } else {
                    Err("path speed must be finite and non-negative".into())
                }
            }
            CameraPath::Custom { segments } => {
                if segments.is_empty() {
                    return Err("custom path needs at least one segment".into());
                }
                if segments.iter().any(|s| !(s.duration > 0.0) || !s.speed.is_finite() || !s.yaw_rate.is_finite()) {
                    return Err("custom path segments need positive durations and finite rates".into());
                }
                Ok(())
            }
        }
    }

    /// Segments of the path and whether they repeat as a closed loop.
    fn segments(&self) -> (Vec<PathSegment>, bool) {
        match *self {
            CameraPath::RectangleLoop {
                length,
                width,
                corner_radius: r,
                speed,
            } => {
                let turn = PathSegment::new(std::f64::consts::FRAC_PI_2 * r / speed, speed, speed / r);
                let long = PathSegment::new((length - 2.0 * r) / speed, speed, 0.0);
                let half = PathSegment::new(long.duration / 2.0, speed, 0.0);
                let short = PathSegment::new((width - 2.0 * r) / speed, speed, 0.0);
                let segs = [half, turn, short, turn, long, turn, short, turn, half]
                    .into_iter()
                    .filter(|s| s.duration > 0.0)
                    .collect();
                (segs, true)
            }
            CameraPath::StraightLine { speed } => (vec![PathSegment::new(f64::INFINITY, speed, 0.0)], false),
            CameraPath::Custom { ref segments } => (segments.clone(), false),
        }
    }

    /// Planar pose of the rig at time `t` (seconds from the start).
    pub fn planar_pose_at(&self, start: PlanarPose, t: f64) -> PlanarPose {
        let (segments, repeat) = self.segments();
        follow(start, &segments, repeat, t).0
    }
}

/// Integrates `segments` from `start` up to time `t`. Returns the pose and the
/// segment active at `t`. Closed loops restart from `start` every period.
pub fn follow(start: PlanarPose, segments: &[PathSegment], repeat: bool, t: f64) -> (PlanarPose, PathSegment) {
    let mut remaining = t.max(0.0);
    if repeat {
        let period: f64 = segments.iter().map(|s| s.duration).sum();
        if period.is_finite() && period > 0.0 {
            remaining %= period;
        }
    }
    let mut pose = start;
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        if remaining < seg.duration || (last && !repeat) {
            return (pose.advance(seg.speed, seg.yaw_rate, remaining), *seg);
        }
        pose = pose.advance(seg.speed, seg.yaw_rate, seg.duration);
        remaining -= seg.duration;
    }
    let last = *segments.last().expect("paths have at least one segment");
    (pose, last)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle_loop_closes() {
        let path = CameraPath::default();
        let (segs, _) = path.segments();
        let period: f64 = segs.iter().map(|s| s.duration).sum();
        let end = path.planar_pose_at(PlanarPose::default(), period - 1e-9);
        assert!(end.x.abs() < 1e-6 && end.y.abs() < 1e-6, "{end:?}");
        // Perimeter of a rounded rectangle.
        let perimeter = 2.0 * (40.0 - 16.0) + 2.0 * (20.0 - 16.0) + 2.0 * std::f64::consts::PI * 8.0;
        assert!((period * SITE_SPEED - perimeter).abs() < 1e-9);
    }

    #[test]
    fn arc_stays_on_circle() {
        let path = CameraPath::arc(50.0);
        for i in 0..20 {
            let p = path.planar_pose_at(PlanarPose::default(), i as f64 * 3.0);
            // Left turn: center at (0, 50).
            let r = (p.x * p.x + (p.y - 50.0) * (p.y - 50.0)).sqrt();
            assert!((r - 50.0).abs() < 1e-9);
        }
    }

    #[test]
    fn straight_advance() {
        let p = PlanarPose::new(1.0, 2.0, std::f64::consts::FRAC_PI_2).advance(2.0, 0.0, 1.5);
        assert!((p.x - 1.0).abs() < 1e-12 && (p.y - 5.0).abs() < 1e-12);
    }

    #[test]
    fn offset_is_in_body_frame() {
        let p = PlanarPose::new(0.0, 0.0, std::f64::consts::FRAC_PI_2).offset(3.0, 1.0, 0.0);
        assert!((p.x + 1.0).abs() < 1e-12 && (p.y - 3.0).abs() < 1e-12);
    }
}
