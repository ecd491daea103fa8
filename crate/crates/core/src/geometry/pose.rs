//! Rigid-body transforms with an exponential-map parameterization.
//!
//! A [`Pose`] stores its rotation as a 3x3 matrix. Solver increments are
//! 6-vectors `[rho, omega]` (translational part first) mapped through the
//! SE(3) exponential.

use nalgebra::{Matrix3, Point3, Rotation3, UnitQuaternion, Vector3, Vector6};

use super::GeometryError;
use crate::Scalar;

/// Rotation angles closer than this to pi are rejected by [`Pose::log`].
const NEAR_PI_MARGIN: f64 = 1e-4;

/// Below this angle the exp/log coefficients use their Taylor expansions.
const SMALL_ANGLE: f64 = 1e-4;

/// Rigid transform `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T: Scalar> {
    pub rotation: Matrix3<T>,
    pub translation: Vector3<T>,
}

/// Skew-symmetric (cross product) matrix of `v`.
pub fn hat<T: Scalar>(v: &Vector3<T>) -> Matrix3<T> {
    Matrix3::new(
        T::zero(),
        -v.z,
        v.y,
        v.z,
        T::zero(),
        -v.x,
        -v.y,
        v.x,
        T::zero(),
    )
}

fn vee<T: Scalar>(m: &Matrix3<T>) -> Vector3<T> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Rodrigues' formula for `exp([omega]x)`.
pub fn so3_exp<T: Scalar>(omega: &Vector3<T>) -> Matrix3<T> {
    let theta_sq = omega.norm_squared();
    let theta = theta_sq.sqrt();
    let w = hat(omega);
    let (a, b) = if theta < T::lit(SMALL_ANGLE) {
        (
            T::one() - theta_sq / T::lit(6.0),
            T::lit(0.5) - theta_sq / T::lit(24.0),
        )
    } else {
        let half_sin = (theta * T::lit(0.5)).sin();
        (theta.sin() / theta, T::lit(2.0) * half_sin * half_sin / theta_sq)
    };
    Matrix3::identity() + w * a + w * w * b
}

impl<T: Scalar> Default for Pose<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Scalar> Pose<T> {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose, checking that `rotation` lies in SO(3) within `1e-6`.
    pub fn new(rotation: Matrix3<T>, translation: Vector3<T>) -> Result<Self, GeometryError> {
        let pose = Self::from_parts_unchecked(rotation, translation);
        if pose.rotation_defect() > T::lit(1e-6) {
            return Err(GeometryError::InvalidRotation);
        }
        Ok(pose)
    }

    pub fn from_parts_unchecked(rotation: Matrix3<T>, translation: Vector3<T>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<T>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation about a unit axis by `angle` radians, zero translation.
    pub fn from_axis_angle(axis: &Vector3<T>, angle: T) -> Self {
        let axis = axis.normalize();
        Self {
            rotation: so3_exp(&(axis * angle)),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose from a quaternion `(qx, qy, qz, qw)`; the quaternion is normalized.
    pub fn from_quaternion(translation: Vector3<T>, q: [T; 4]) -> Self {
        let uq = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[3], q[0], q[1], q[2]));
        Self {
            rotation: uq.to_rotation_matrix().into_inner(),
            translation,
        }
    }

    /// Unit quaternion `(qx, qy, qz, qw)` of the rotation, with `qw >= 0`.
    pub fn quaternion(&self) -> [T; 4] {
        let rot = Rotation3::from_matrix_unchecked(self.rotation);
        let q = UnitQuaternion::from_rotation_matrix(&rot);
        let q = q.quaternion();
        let sign = if q.w < T::zero() { -T::one() } else { T::one() };
        [q.i * sign, q.j * sign, q.k * sign, q.w * sign]
    }

    /// Largest elementwise deviation of `RᵀR` from identity, combined with `|det R - 1|`.
    pub fn rotation_defect(&self) -> T {
        let gram = self.rotation.transpose() * self.rotation - Matrix3::identity();
        let ortho = gram.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
        ortho.max((self.rotation.determinant() - T::one()).abs())
    }

    /// Projects the rotation back onto SO(3) (polar decomposition).
    pub fn renormalized(&self) -> Self {
        let svd = self.rotation.svd(true, true);
        let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut rotation = u * v_t;
        if rotation.determinant() < T::zero() {
            let mut u = u;
            u.column_mut(2).neg_mut();
            rotation = u * v_t;
        }
        Self {
            rotation,
            translation: self.translation,
        }
    }

    pub fn transform_point(&self, p: &Point3<T>) -> Point3<T> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// Rotates a direction; translation does not apply.
    pub fn transform_vector(&self, v: &Vector3<T>) -> Vector3<T> {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// SE(3) exponential of `[rho, omega]`.
    pub fn exp(twist: &Vector6<T>) -> Self {
        let rho = Vector3::new(twist[0], twist[1], twist[2]);
        let omega = Vector3::new(twist[3], twist[4], twist[5]);
        let theta_sq = omega.norm_squared();
        let theta = theta_sq.sqrt();
        let w = hat(&omega);
        let (b, c) = if theta < T::lit(SMALL_ANGLE) {
            (
                T::lit(0.5) - theta_sq / T::lit(24.0),
                T::one() / T::lit(6.0) - theta_sq / T::lit(120.0),
            )
        } else {
            let half_sin = (theta * T::lit(0.5)).sin();
            (
                T::lit(2.0) * half_sin * half_sin / theta_sq,
                (theta - theta.sin()) / (theta_sq * theta),
            )
        };
        let v = Matrix3::identity() + w * b + w * w * c;
        Self {
            rotation: so3_exp(&omega),
            translation: v * rho,
        }
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> T {
        let cos = (self.rotation.trace() - T::one()) * T::lit(0.5);
        cos.clamp(-T::one(), T::one()).acos()
    }

    /// SE(3) logarithm, inverse of [`Pose::exp`] for rotation angles below pi.
    pub fn log(&self) -> Result<Vector6<T>, GeometryError> {
        let theta = self.angle();
        if theta > T::pi() - T::lit(NEAR_PI_MARGIN) {
            return Err(GeometryError::NearPiRotation);
        }
        let skew = (self.rotation - self.rotation.transpose()) * T::lit(0.5);
        let theta_sq = theta * theta;
        let omega = if theta < T::lit(SMALL_ANGLE) {
            // theta / sin(theta) ~ 1 + theta^2 / 6
            vee(&skew) * (T::one() + theta_sq / T::lit(6.0))
        } else {
            vee(&skew) * (theta / theta.sin())
        };
        let w = hat(&omega);
        let d = if theta < T::lit(SMALL_ANGLE) {
            T::one() / T::lit(12.0) + theta_sq / T::lit(720.0)
        } else {
            let half = theta * T::lit(0.5);
            (T::one() - half * half.cos() / half.sin()) / theta_sq
        };
        let v_inv = Matrix3::identity() - w * T::lit(0.5) + w * w * d;
        let rho = v_inv * self.translation;
        Ok(Vector6::new(rho.x, rho.y, rho.z, omega.x, omega.y, omega.z))
    }

    /// Casts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Pose<U> {
        Pose {
            rotation: self.rotation.map(|v| U::lit(v.to_f64_lossy())),
            translation: self.translation.map(|v| U::lit(v.to_f64_lossy())),
        }
    }

    /// Largest absolute elementwise difference of rotation and translation.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        let r = (self.rotation - other.rotation)
            .iter()
            .fold(T::zero(), |acc, v| acc.max(v.abs()));
        let t = (self.translation - other.translation)
            .iter()
            .fold(T::zero(), |acc, v| acc.max(v.abs()));
        r.max(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn transform_point_examples() {
        let p = Point3::new(1.0, 2.0, 3.0);
        assert_eq!(Pose::<f64>::identity().transform_point(&p), p);

        let shift = Pose::from_translation(Vector3::new(0.0, 0.0, 5.0));
        assert_eq!(shift.transform_point(&Point3::origin()), Point3::new(0.0, 0.0, 5.0));

        let rz = Pose::from_axis_angle(&Vector3::z(), FRAC_PI_2);
        let q = rz.transform_point(&Point3::new(1.0, 0.0, 0.0));
        assert_relative_eq!(q, Point3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let p = Pose::<f64>::exp(&Vector6::zeros());
        assert_eq!(p.max_abs_diff(&Pose::identity()), 0.0);
    }

    #[test]
    fn log_rejects_half_turn() {
        let p = Pose::<f64>::from_axis_angle(&Vector3::x(), std::f64::consts::PI);
        assert_eq!(p.log(), Err(GeometryError::NearPiRotation));
    }

    #[test]
    fn exp_matches_closed_form_screw_motion() {
        // Pure rotation about z through the origin plus translation along z.
        let twist = Vector6::new(0.0, 0.0, 2.0, 0.0, 0.0, 0.5);
        let p = Pose::exp(&twist);
        assert_relative_eq!(p.translation, Vector3::new(0.0, 0.0, 2.0), epsilon = 1e-12);
        assert_relative_eq!(p.angle(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn quaternion_round_trip() {
        let p = Pose::exp(&Vector6::new(0.1, -0.2, 0.3, 0.4, -0.5, 0.6));
        let q = p.quaternion();
        let back = Pose::from_quaternion(p.translation, q);
        assert!(back.max_abs_diff(&p) < 1e-12);
    }

    #[test]
    fn renormalize_restores_so3() {
        let mut p = Pose::exp(&Vector6::new(0.0, 0.0, 0.0, 0.3, 0.2, 0.1));
        p.rotation[(0, 1)] += 1e-4;
        assert!(p.rotation_defect() > 1e-5);
        assert!(p.renormalized().rotation_defect() < 1e-12);
    }

    #[test]
    fn f32_round_trip() {
        let v = Vector6::new(0.1f32, 0.2, -0.3, 0.05, -0.1, 0.2);
        let back = Pose::exp(&v).log().unwrap();
        assert!((back - v).amax() < 1e-5);
    }

    fn twist_strategy(max_angle: f64) -> impl Strategy<Value = Vector6<f64>> {
        (
            prop::array::uniform3(-10.0..10.0f64),
            prop::array::uniform3(-1.0..1.0f64),
            0.0..max_angle,
        )
            .prop_map(|(rho, axis, angle)| {
                let axis = Vector3::from(axis);
                let omega = if axis.norm() < 1e-6 {
                    Vector3::zeros()
                } else {
                    axis.normalize() * angle
                };
                Vector6::new(rho[0], rho[1], rho[2], omega.x, omega.y, omega.z)
            })
    }

    proptest! {
        #[test]
        fn log_inverts_exp(v in twist_strategy(std::f64::consts::PI - 0.01)) {
            let back = Pose::exp(&v).log().unwrap();
            prop_assert!((back - v).amax() < 1e-9, "{v} vs {back}");
        }

        #[test]
        fn compose_with_inverse_is_identity(v in twist_strategy(3.0)) {
            let a = Pose::exp(&v);
            prop_assert!(a.compose(&a.inverse()).max_abs_diff(&Pose::identity()) < 1e-9);
            prop_assert!(a.inverse().compose(&a).max_abs_diff(&Pose::identity()) < 1e-9);
        }

        #[test]
        fn composition_stays_in_so3(a in twist_strategy(3.0), b in twist_strategy(3.0)) {
            let c = Pose::exp(&a).compose(&Pose::exp(&b));
            prop_assert!(c.rotation_defect() < 1e-9);
        }
    }
}
