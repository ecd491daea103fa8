use nalgebra::{Matrix3, Vector3};

use super::{EvalError, Trajectory};
use crate::geometry::Pose;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult<T: Scalar> {
    /// Maps estimated positions onto ground truth: `gt ≈ scale * R * est + t`.
    pub transform: Pose<T>,
    /// 1 when scale estimation is disabled.
    pub scale: T,
    pub at_rmse: T,
    pub per_pose_errors: Vec<T>,
}

/// Closed-form least-squares alignment of `est` onto `gt` (Umeyama).
///
/// Both trajectories must already be associated one-to-one. The estimated
/// positions must span at least a line's worth of extra dimension: three or
/// more positions, not all collinear.
pub fn umeyama_align<T: Scalar>(
    est: &Trajectory<T>,
    gt: &Trajectory<T>,
    with_scale: bool,
) -> Result<AlignmentResult<T>, EvalError> {
    if est.len() != gt.len() {
        return Err(EvalError::LengthMismatch {
            est: est.len(),
            gt: gt.len(),
        });
    }
    let (x, y) = (est.positions(), gt.positions());
    let (transform, scale) = umeyama_points(&x, &y, with_scale)?;
    let per_pose_errors: Vec<T> = x
        .iter()
        .zip(&y)
        .map(|(xi, yi)| (yi - (transform.rotation * xi * scale + transform.translation)).norm())
        .collect();
    let at_rmse = rms(&per_pose_errors);
    Ok(AlignmentResult {
        transform,
        scale,
        at_rmse,
        per_pose_errors,
    })
}

fn rms<T: Scalar>(v: &[T]) -> T {
    if v.is_empty() {
        return T::zero();
    }
    let sum = v.iter().fold(T::zero(), |a, e| a + *e * *e);
    (sum / T::lit(v.len() as f64)).sqrt()
}

/// Similarity (or rigid) transform minimizing `sum |y_i - s R x_i - t|^2`.
pub fn umeyama_points<T: Scalar>(
    x: &[Vector3<T>],
    y: &[Vector3<T>],
    with_scale: bool,
) -> Result<(Pose<T>, T), EvalError> {
    let n = x.len();
    if n < 3 || y.len() != n {
        return Err(EvalError::DegenerateGeometry);
    }
    let nt = T::lit(n as f64);
    let mx = x.iter().fold(Vector3::zeros(), |a, v| a + v) / nt;
    let my = y.iter().fold(Vector3::zeros(), |a, v| a + v) / nt;
    let mut sxy = Matrix3::<T>::zeros();
    let mut sxx = Matrix3::<T>::zeros();
    let mut var_x = T::zero();
    for (xi, yi) in x.iter().zip(y) {
        let dx = xi - mx;
        sxy += (yi - my) * dx.transpose();
        sxx += dx * dx.transpose();
        var_x += dx.norm_squared();
    }
    sxy /= nt;
    var_x /= nt;

    let spread = sxx.symmetric_eigenvalues();
    let mut ev: Vec<T> = spread.iter().copied().collect();
    ev.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    if !(ev[0] > T::zero()) || ev[1] <= ev[0] * T::lit(1e-12) {
        return Err(EvalError::DegenerateGeometry);
    }

    let svd = sxy.svd(true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let d = svd.singular_values;
    let mut s = Matrix3::<T>::identity();
    if (u.determinant() * vt.determinant()) < T::zero() {
        s[(2, 2)] = -T::one();
    }
    let r = u * s * vt;
    let scale = if with_scale {
        (d[0] * s[(0, 0)] + d[1] * s[(1, 1)] + d[2] * s[(2, 2)]) / var_x
    } else {
        T::one()
    };
    let t = my - r * mx * scale;
    Ok((Pose::from_parts_unchecked(r, t), scale))
}

/// Root-mean-square position difference of two associated trajectories.
pub fn at_rmse<T: Scalar>(est_aligned: &Trajectory<T>, gt: &Trajectory<T>) -> Result<T, EvalError> {
    if est_aligned.len() != gt.len() {
        return Err(EvalError::LengthMismatch {
            est: est_aligned.len(),
            gt: gt.len(),
        });
    }
    let errors: Vec<T> = est_aligned
        .positions()
        .iter()
        .zip(gt.positions())
        .map(|(a, b)| (a - b).norm())
        .collect();
    Ok(rms(&errors))
}

/// Pairs each estimate with the nearest ground-truth timestamp within
/// `max_gap` seconds. Each ground-truth entry is used at most once, by the
/// closest estimate (earlier estimate on ties). Pairs are in estimate order.
pub fn associate<T: Scalar>(est: &Trajectory<T>, gt: &Trajectory<T>, max_gap: f64) -> Vec<(usize, usize)> {
    let gts: Vec<f64> = gt.timestamps().collect();
    if gts.is_empty() {
        return Vec::new();
    }
    let mut claim: Vec<Option<(f64, usize)>> = vec![None; gts.len()];
    for (i, t) in est.timestamps().enumerate() {
        let k = gts.partition_point(|g| *g < t);
        let mut best: Option<(f64, usize)> = None;
        for j in [k.wrapping_sub(1), k] {
            if let Some(g) = gts.get(j) {
                let gap = (g - t).abs();
                if gap <= max_gap && best.is_none_or(|b| gap < b.0) {
                    best = Some((gap, j));
                }
            }
        }
        if let Some((gap, j)) = best {
            if claim[j].is_none_or(|c| gap < c.0) {
                claim[j] = Some((gap, i));
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = claim
        .iter()
        .enumerate()
        .filter_map(|(j, c)| c.map(|(_, i)| (i, j)))
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Associates by timestamp, aligns rigidly (or with scale) and returns the
/// alignment together with the number of estimates left unmatched.
pub fn associate_and_align<T: Scalar>(
    est: &Trajectory<T>,
    gt: &Trajectory<T>,
    max_gap: f64,
    with_scale: bool,
) -> Result<(AlignmentResult<T>, usize), EvalError> {
    let pairs = associate(est, gt, max_gap);
    if pairs.len() < 3 {
        return Err(EvalError::NoOverlap);
    }
    let e = est.select(pairs.iter().map(|p| p.0));
    let g = gt.select(pairs.iter().map(|p| p.1));
    let res = umeyama_align(&e, &g, with_scale)?;
    Ok((res, est.len() - pairs.len()))
}

/// Grid search for the clock offset that, added to ground-truth timestamps,
/// minimizes AT-RMSE. Offsets are `k * step` within `±window`. Ties go to the
/// smaller magnitude (the negative one first on equal magnitude).
pub fn sync_time_offset<T: Scalar>(
    est: &Trajectory<T>,
    gt: &Trajectory<T>,
    window: f64,
    step: f64,
    max_gap: f64,
) -> Result<f64, EvalError> {
    if !(step > 0.0) || !(window >= 0.0) {
        return Err(EvalError::InvalidArgument("step must be positive and window non-negative".into()));
    }
    let k_max = (window / step + 1e-9).floor() as i64;
    let mut best: Option<(T, f64)> = None;
    for m in 0..=k_max {
        for k in if m == 0 { vec![0] } else { vec![-m, m] } {
            let offset = k as f64 * step;
            let Ok((res, _)) = associate_and_align(est, &gt.shifted(offset), max_gap, false) else {
                continue;
            };
            if best.is_none_or(|b| res.at_rmse < b.0) {
                best = Some((res.at_rmse, offset));
            }
        }
    }
    best.map(|b| b.1).ok_or(EvalError::NoOverlap)
}
