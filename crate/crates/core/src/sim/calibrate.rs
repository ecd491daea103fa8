//! Monte-Carlo estimate of the background triangulation error scale.

use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{sample_scale_level, SimConfig};
use crate::geometry::PixelStereo;
use crate::tracking::SCALE_FACTOR;

/// Root-mean-square distance between two independent noisy stereo
/// triangulations of the same static point, with poses known exactly.
///
/// Points are drawn uniformly over the image at depths in `depth_range`
/// meters, using the noise model and intrinsics of `cfg`. This is the scale of
/// the per-point errors the motion-state classifier sees on static objects.
pub fn calibrate_sigma_bkg(cfg: &SimConfig, depth_range: (f64, f64), samples: usize) -> f64 {
    let k = cfg.intrinsics;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let mut sum_sq = 0.0;
    let mut n = 0usize;
    while n < samples {
        let z = rng.random_range(depth_range.0..depth_range.1);
        let u = rng.random_range(0.0..k.width as f64);
        let v = rng.random_range(0.0..k.height as f64);
        let p = Point3::new((u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z);
        let truth = k.project_stereo(&p).expect("positive depth");
        let mut noisy = || {
            let sigma = cfg.pixel_noise_sigma * SCALE_FACTOR.powi(sample_scale_level(&mut rng) as i32);
            let mut j = || {
                if sigma > 0.0 {
                    Normal::new(0.0, sigma).expect("finite sigma").sample(&mut rng)
                } else {
                    0.0
                }
            };
            let obs = PixelStereo {
                u_l: truth.u_l + j(),
                v_l: truth.v_l + j(),
                u_r: truth.u_r + j(),
            };
            k.triangulate_stereo(&obs).ok()
        };
        let (Some(a), Some(b)) = (noisy(), noisy()) else { continue };
        sum_sq += (a - b).norm_squared();
        n += 1;
    }
    (sum_sq / samples.max(1) as f64).sqrt()
}
