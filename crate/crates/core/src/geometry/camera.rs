//! Rectified pinhole stereo camera.

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::GeometryError;
use crate::Scalar;

/// Minimum disparity in pixels accepted by [`CameraIntrinsics::triangulate_stereo`].
pub const MIN_DISPARITY_PX: f64 = 0.1;

/// Intrinsics of a rectified stereo pair. `baseline` is in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics<T: Scalar> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub baseline: T,
    pub width: u32,
    pub height: u32,
}

/// Left-image observation `(u_l, v_l)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelMono<T: Scalar> {
    pub u_l: T,
    pub v_l: T,
}

/// Stereo observation `(u_l, v_l, u_r)` on rectified images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelStereo<T: Scalar> {
    pub u_l: T,
    pub v_l: T,
    pub u_r: T,
}

impl<T: Scalar> PixelStereo<T> {
    pub fn disparity(&self) -> T {
        self.u_l - self.u_r
    }

    pub fn left(&self) -> PixelMono<T> {
        PixelMono {
            u_l: self.u_l,
            v_l: self.v_l,
        }
    }
}

impl<T: Scalar> CameraIntrinsics<T> {
    pub fn new(
        fx: T,
        fy: T,
        cx: T,
        cy: T,
        baseline: T,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            baseline,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let positive = |name: &str, v: T| {
            if v > T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(GeometryError::InvalidIntrinsics(format!("{name} must be positive")))
            }
        };
        positive("fx", self.fx)?;
        positive("fy", self.fy)?;
        positive("baseline", self.baseline)?;
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidIntrinsics("image size must be positive".into()));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics("principal point must be finite".into()));
        }
        Ok(())
    }

    /// `fx * baseline`, the disparity-depth product.
    pub fn bf(&self) -> T {
        self.fx * self.baseline
    }

    pub fn project_mono(&self, p: &Point3<T>) -> Result<PixelMono<T>, GeometryError> {
        if p.z <= T::zero() {
            return Err(GeometryError::NonPositiveDepth);
        }
        let inv_z = T::one() / p.z;
        Ok(PixelMono {
            u_l: self.fx * p.x * inv_z + self.cx,
            v_l: self.fy * p.y * inv_z + self.cy,
        })
    }

    pub fn project_stereo(&self, p: &Point3<T>) -> Result<PixelStereo<T>, GeometryError> {
        let mono = self.project_mono(p)?;
        let inv_z = T::one() / p.z;
        Ok(PixelStereo {
            u_l: mono.u_l,
            v_l: mono.v_l,
            u_r: self.fx * (p.x - self.baseline) * inv_z + self.cx,
        })
    }

    /// Closed-form inverse of [`CameraIntrinsics::project_stereo`], in camera coordinates.
    pub fn triangulate_stereo(&self, obs: &PixelStereo<T>) -> Result<Point3<T>, GeometryError> {
        let disparity = obs.disparity();
        if !(disparity > T::lit(MIN_DISPARITY_PX)) {
            return Err(GeometryError::DegenerateDisparity);
        }
        let z = self.bf() / disparity;
        Ok(Point3::new(
            (obs.u_l - self.cx) * z / self.fx,
            (obs.v_l - self.cy) * z / self.fy,
            z,
        ))
    }

    /// True when the pixel lies inside `[0, width) x [0, height)`.
    pub fn in_image(&self, u: T, v: T) -> bool {
        u >= T::zero()
            && v >= T::zero()
            && u < T::lit(self.width as f64)
            && v < T::lit(self.height as f64)
    }

    pub fn cast<U: Scalar>(&self) -> CameraIntrinsics<U> {
        let c = |v: T| U::lit(v.to_f64_lossy());
        CameraIntrinsics {
            fx: c(self.fx),
            fy: c(self.fy),
            cx: c(self.cx),
            cy: c(self.cy),
            baseline: c(self.baseline),
            width: self.width,
            height: self.height,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k() -> CameraIntrinsics<f64> {
        CameraIntrinsics::new(500.0, 500.0, 480.0, 270.0, 1.0, 960, 540).unwrap()
    }

    #[test]
    fn mono_projection_examples() {
        assert_eq!(
            k().project_mono(&Point3::new(0.0, 0.0, 10.0)).unwrap(),
            PixelMono { u_l: 480.0, v_l: 270.0 }
        );
        assert_eq!(
            k().project_mono(&Point3::new(1.0, 0.0, 10.0)).unwrap(),
            PixelMono { u_l: 530.0, v_l: 270.0 }
        );
        assert_eq!(
            k().project_mono(&Point3::new(0.0, 0.0, -1.0)),
            Err(GeometryError::NonPositiveDepth)
        );
        assert_eq!(
            k().project_stereo(&Point3::new(0.0, 0.0, 0.0)),
            Err(GeometryError::NonPositiveDepth)
        );
    }

    #[test]
    fn stereo_projection_examples() {
        let a = k().project_stereo(&Point3::new(0.0, 0.0, 10.0)).unwrap();
        assert_eq!(a, PixelStereo { u_l: 480.0, v_l: 270.0, u_r: 430.0 });
        assert_eq!(a.disparity(), 50.0);
        let b = k().project_stereo(&Point3::new(1.0, 0.0, 10.0)).unwrap();
        assert_eq!(b, PixelStereo { u_l: 530.0, v_l: 270.0, u_r: 480.0 });
    }

    #[test]
    fn triangulation_examples() {
        let p = k()
            .triangulate_stereo(&PixelStereo { u_l: 480.0, v_l: 270.0, u_r: 430.0 })
            .unwrap();
        assert_eq!(p, Point3::new(0.0, 0.0, 10.0));
        let p = k()
            .triangulate_stereo(&PixelStereo { u_l: 530.0, v_l: 270.0, u_r: 480.0 })
            .unwrap();
        assert_eq!(p, Point3::new(1.0, 0.0, 10.0));
        assert_eq!(
            k().triangulate_stereo(&PixelStereo { u_l: 500.0, v_l: 270.0, u_r: 500.0 }),
            Err(GeometryError::DegenerateDisparity)
        );
        assert_eq!(
            k().triangulate_stereo(&PixelStereo { u_l: 500.05, v_l: 270.0, u_r: 500.0 }),
            Err(GeometryError::DegenerateDisparity)
        );
    }

    #[test]
    fn invalid_intrinsics_rejected() {
        assert!(CameraIntrinsics::new(0.0, 500.0, 0.0, 0.0, 1.0, 10, 10).is_err());
        assert!(CameraIntrinsics::new(500.0, 500.0, 0.0, 0.0, -1.0, 10, 10).is_err());
        assert!(CameraIntrinsics::new(500.0, 500.0, 0.0, 0.0, 1.0, 0, 10).is_err());
    }

    #[test]
    fn round_trip_random_points_and_cameras() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let cam = CameraIntrinsics::new(
                rng.random_range(200.0..1500.0),
                rng.random_range(200.0..1500.0),
                rng.random_range(100.0..900.0),
                rng.random_range(100.0..600.0),
                rng.random_range(0.1..1.5),
                960,
                540,
            )
            .unwrap();
            let p = Point3::new(
                rng.random_range(-20.0..20.0),
                rng.random_range(-20.0..20.0),
                rng.random_range(1.0..100.0),
            );
            let obs = cam.project_stereo(&p).unwrap();
            let mono = cam.project_mono(&p).unwrap();
            assert_eq!(mono, obs.left());
            let back = cam.triangulate_stereo(&obs).unwrap();
            assert!((back - p).norm() < 1e-6);
        }
    }
}
