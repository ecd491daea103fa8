//! Projection-guided matching of map points to frame features.

use super::map::MapPoint;
use crate::frame::FrameObservation;
use crate::geometry::Pose;
use crate::masking::OcclusionMask;
use crate::Scalar;

const CELL: f64 = 16.0;

/// Features bucketed on a coarse pixel grid, masked features left out.
struct FeatureGrid {
    cols: usize,
    rows: usize,
    cells: Vec<Vec<usize>>,
}

impl FeatureGrid {
    fn build<T: Scalar>(frame: &FrameObservation<T>, mask: &OcclusionMask) -> Self {
        let cols = (frame.intrinsics.width as f64 / CELL).ceil() as usize;
        let rows = (frame.intrinsics.height as f64 / CELL).ceil() as usize;
        let mut cells = vec![Vec::new(); cols * rows];
        for (i, f) in frame.features.iter().enumerate() {
            let (u, v) = (f.pixel.u_l(), f.pixel.v_l());
            if !frame.intrinsics.in_image(u, v) || mask.is_masked_at(u, v) {
                continue;
            }
            let cx = (u.to_f64_lossy() / CELL) as usize;
            let cy = (v.to_f64_lossy() / CELL) as usize;
            cells[cy.min(rows - 1) * cols + cx.min(cols - 1)].push(i);
        }
        Self { cols, rows, cells }
    }

    fn around(&self, u: f64, v: f64, radius: f64) -> impl Iterator<Item = usize> + '_ {
        let clamp = |x: f64, n: usize| (x / CELL).floor().clamp(0.0, (n - 1) as f64) as usize;
        let (x0, x1) = (clamp(u - radius, self.cols), clamp(u + radius, self.cols));
        let (y0, y1) = (clamp(v - radius, self.rows), clamp(v + radius, self.rows));
        (y0..=y1).flat_map(move |y| (x0..=x1).flat_map(move |x| self.cells[y * self.cols + x].iter().copied()))
    }
}

/// Ordering: smaller descriptor distance, then smaller pixel offset, then smaller index.
fn prefer(current: Option<(usize, u32, f64)>, candidate: (usize, u32, f64)) -> bool {
    match current {
        None => true,
        Some((i, d, d2)) => (candidate.1, candidate.2, candidate.0) < (d, d2, i),
    }
}

/// Matches map points to features of `frame` around their projections under
/// `predicted_pose` (camera-to-world).
///
/// A candidate must lie within `window` pixels of the projection (and of the
/// predicted right-image column for stereo features), be at most
/// `max_distance` bits from the point's descriptor, and sit on an unmasked
/// pixel. Pairs are kept only when each side is the other's best candidate.
/// Returns `(map point index, feature index)` pairs sorted by map index.
pub fn match_map_points<T: Scalar>(
    map: &[MapPoint<T>],
    frame: &FrameObservation<T>,
    predicted_pose: &Pose<T>,
    mask: &OcclusionMask,
    window: T,
    max_distance: u32,
) -> Vec<(usize, usize)> {
    let k = &frame.intrinsics;
    let w2c = predicted_pose.inverse();
    let grid = FeatureGrid::build(frame, mask);
    let window = window.to_f64_lossy();
    let win_sq = window * window;

    // (other index, distance, squared pixel offset), best seen from each side
    let mut point_best: Vec<Option<(usize, u32, f64)>> = vec![None; map.len()];
    let mut feature_best: Vec<Option<(usize, u32, f64)>> = vec![None; frame.features.len()];
    for (mi, mp) in map.iter().enumerate() {
        let pc = w2c.transform_point(&mp.position);
        let Ok(proj) = k.project_stereo(&pc) else { continue };
        if !k.in_image(proj.u_l, proj.v_l) {
            continue;
        }
        let (pu, pv, pr) = (proj.u_l.to_f64_lossy(), proj.v_l.to_f64_lossy(), proj.u_r.to_f64_lossy());
        let mut best: Option<(usize, u32, f64)> = None;
        for fi in grid.around(pu, pv, window) {
            let f = &frame.features[fi];
            let du = f.pixel.u_l().to_f64_lossy() - pu;
            let dv = f.pixel.v_l().to_f64_lossy() - pv;
            let d2 = du * du + dv * dv;
            if d2 > win_sq {
                continue;
            }
            if let Some(s) = f.pixel.stereo() {
                if (s.u_r.to_f64_lossy() - pr).abs() > window {
                    continue;
                }
            }
            let dist = mp.descriptor.hamming(&f.descriptor);
            if dist > max_distance {
                continue;
            }
            if prefer(best, (fi, dist, d2)) {
                best = Some((fi, dist, d2));
            }
            if prefer(feature_best[fi], (mi, dist, d2)) {
                feature_best[fi] = Some((mi, dist, d2));
            }
        }
        point_best[mi] = best;
    }

    point_best
        .iter()
        .enumerate()
        .filter_map(|(mi, best)| {
            let (fi, _, _) = (*best)?;
            (feature_best[fi].map(|b| b.0) == Some(mi)).then_some((mi, fi))
        })
        .collect()
}
