//! Motion-only bundle adjustment: robust Gauss-Newton over a single camera pose
//! with the 3D points held fixed.

use nalgebra::{Matrix3, Matrix3x6, Matrix6, Point3, Vector3, Vector6};

use super::TrackingError;
use crate::frame::FeaturePixel;
use crate::geometry::{hat, huber_cost, huber_weight, CameraIntrinsics, GeometryError, Pose};
use crate::Scalar;

/// Pyramid scale factor between octaves.
pub const SCALE_FACTOR: f64 = 1.2;

/// A fixed world point paired with its observation in the frame being solved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence<T: Scalar> {
    pub point: Point3<T>,
    pub observation: FeaturePixel<T>,
    pub scale_level: u8,
}

impl<T: Scalar> Correspondence<T> {
    /// Inverse variance of each residual component: `1 / (1.2^level)^2`.
    pub fn information(&self) -> T {
        T::one() / T::lit(SCALE_FACTOR).powi(2 * self.scale_level as i32)
    }

    pub fn dim(&self) -> usize {
        match self.observation {
            FeaturePixel::Mono(_) => 2,
            FeaturePixel::Stereo(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T: Scalar> {
    pub huber_delta_mono: T,
    pub huber_delta_stereo: T,
    pub max_iterations: usize,
    pub min_inliers: usize,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            huber_delta_mono: T::lit(5.991).sqrt(),
            huber_delta_stereo: T::lit(7.815).sqrt(),
            max_iterations: 20,
            min_inliers: 15,
        }
    }
}

impl<T: Scalar> SolverConfig<T> {
    fn delta(&self, dim: usize) -> T {
        if dim == 2 {
            self.huber_delta_mono
        } else {
            self.huber_delta_stereo
        }
    }
}

/// Residual `observation - projection` and its Jacobian with respect to a left
/// increment `exp(delta) * world_to_camera`. Mono residuals use the first two
/// rows only; the third row is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualBlock<T: Scalar> {
    pub residual: Vector3<T>,
    pub jacobian: Matrix3x6<T>,
    pub dim: usize,
}

pub fn reprojection_residual<T: Scalar>(
    k: &CameraIntrinsics<T>,
    world_to_camera: &Pose<T>,
    c: &Correspondence<T>,
) -> Result<ResidualBlock<T>, GeometryError> {
    let pc = world_to_camera.transform_point(&c.point);
    if pc.z <= T::zero() {
        return Err(GeometryError::NonPositiveDepth);
    }
    let (x, y, z) = (pc.x, pc.y, pc.z);
    let inv_z = T::one() / z;
    let inv_z2 = inv_z * inv_z;
    // d(projection)/d(camera point)
    let mut jp = Matrix3::zeros();
    jp[(0, 0)] = k.fx * inv_z;
    jp[(0, 2)] = -k.fx * x * inv_z2;
    jp[(1, 1)] = k.fy * inv_z;
    jp[(1, 2)] = -k.fy * y * inv_z2;
    let u = k.fx * x * inv_z + k.cx;
    let v = k.fy * y * inv_z + k.cy;
    let (residual, dim) = match &c.observation {
        FeaturePixel::Mono(p) => (Vector3::new(p.u_l - u, p.v_l - v, T::zero()), 2),
        FeaturePixel::Stereo(p) => {
            jp[(2, 0)] = k.fx * inv_z;
            jp[(2, 2)] = -k.fx * (x - k.baseline) * inv_z2;
            let ur = k.fx * (x - k.baseline) * inv_z + k.cx;
            (Vector3::new(p.u_l - u, p.v_l - v, p.u_r - ur), 3)
        }
    };
    // d(camera point)/d(delta) = [I | -[pc]x]
    let mut dp = Matrix3x6::zeros();
    dp.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    dp.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-hat(&pc.coords)));
    Ok(ResidualBlock {
        residual,
        jacobian: -(jp * dp),
        dim,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionOnlyBaResult<T: Scalar> {
    pub world_to_camera: Pose<T>,
    pub inlier_count: usize,
    /// Per correspondence: final squared Mahalanobis error inside the Huber boundary.
    pub inliers: Vec<bool>,
    pub iterations: usize,
    pub final_cost: T,
}

fn robust_cost<T: Scalar>(
    k: &CameraIntrinsics<T>,
    pose: &Pose<T>,
    corrs: &[Correspondence<T>],
    cfg: &SolverConfig<T>,
) -> T {
    corrs
        .iter()
        .filter_map(|c| {
            let block = reprojection_residual(k, pose, c).ok()?;
            let chi2 = block.residual.norm_squared() * c.information();
            Some(huber_cost(chi2, cfg.delta(block.dim)))
        })
        .fold(T::zero(), |a, b| a + b)
}

/// Robust Gauss-Newton with Levenberg damping on rejected steps.
///
/// Terminates after `max_iterations` or when the step norm drops below 1e-8
/// (ten machine epsilons for narrower scalars).
/// Fails with `SolverDiverged` when five consecutive damped steps all raise the cost.
pub fn solve_motion_only_ba<T: Scalar>(
    k: &CameraIntrinsics<T>,
    correspondences: &[Correspondence<T>],
    init_world_to_camera: &Pose<T>,
    cfg: &SolverConfig<T>,
) -> Result<MotionOnlyBaResult<T>, TrackingError> {
    if correspondences.len() < cfg.min_inliers {
        return Err(TrackingError::InsufficientMatches {
            found: correspondences.len(),
            required: cfg.min_inliers,
        });
    }
    let mut pose = *init_world_to_camera;
    let mut cost = robust_cost(k, &pose, correspondences, cfg);
    let mut lambda = T::zero();
    let mut iterations = 0;
    let eps = T::default_epsilon();
    let step_tol = T::lit(1e-8).max(eps * T::lit(10.0));

    'outer: while iterations < cfg.max_iterations {
        iterations += 1;
        let mut h = Matrix6::<T>::zeros();
        let mut g = Vector6::<T>::zeros();
        for c in correspondences {
            let Ok(block) = reprojection_residual(k, &pose, c) else {
                continue;
            };
            let info = c.information();
            let chi2 = block.residual.norm_squared() * info;
            let w = huber_weight(chi2, cfg.delta(block.dim)) * info;
            let jt = block.jacobian.transpose();
            h += jt * block.jacobian * w;
            g -= jt * block.residual * w;
        }

        let mut failures = 0;
        loop {
            let mut damped = h;
            for i in 0..6 {
                damped[(i, i)] += lambda * h[(i, i)].max(T::lit(1e-9));
            }
            let step = match damped.cholesky() {
                Some(ch) => ch.solve(&g),
                None => {
                    failures += 1;
                    if failures >= 5 {
                        return Err(TrackingError::SolverDiverged);
                    }
                    lambda = if lambda == T::zero() { T::lit(1e-4) } else { lambda * T::lit(10.0) };
                    continue;
                }
            };
            let candidate = Pose::exp(&step).compose(&pose);
            if step.norm() < step_tol {
                pose = candidate;
                cost = robust_cost(k, &pose, correspondences, cfg);
                break 'outer;
            }
            let new_cost = robust_cost(k, &candidate, correspondences, cfg);
            if new_cost <= cost {
                pose = candidate;
                cost = new_cost;
                lambda = lambda * T::lit(0.1);
                if lambda < T::lit(1e-12) {
                    lambda = T::zero();
                }
                break;
            }
            // A rise within rounding noise of the cost means the minimum is reached.
            if new_cost - cost <= cost * eps * T::lit(100.0) {
                break 'outer;
            }
            failures += 1;
            if failures >= 5 {
                return Err(TrackingError::SolverDiverged);
            }
            lambda = if lambda == T::zero() { T::lit(1e-4) } else { lambda * T::lit(10.0) };
        }
    }

    let pose = pose.renormalized();
    let inliers: Vec<bool> = correspondences
        .iter()
        .map(|c| match reprojection_residual(k, &pose, c) {
            Ok(block) => {
                let delta = cfg.delta(block.dim);
                block.residual.norm_squared() * c.information() < delta * delta
            }
            Err(_) => false,
        })
        .collect();
    Ok(MotionOnlyBaResult {
        world_to_camera: pose,
        inlier_count: inliers.iter().filter(|b| **b).count(),
        inliers,
        iterations,
        final_cost: cost,
    })
}
