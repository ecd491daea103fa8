//! Cuboid solids and their image-space silhouettes.

use nalgebra::{Point3, Vector3};
use rand::Rng;

use crate::geometry::{CameraIntrinsics, Pose};

/// Closest depth at which silhouettes are clipped, meters.
pub const NEAR_PLANE: f64 = 0.1;

/// Axis-aligned box in an object's body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cuboid {
    pub center: Vector3<f64>,
    pub half: Vector3<f64>,
}

const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (2, 3),
    (4, 5),
    (6, 7),
    (0, 2),
    (1, 3),
    (4, 6),
    (5, 7),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

impl Cuboid {
    pub fn new(center: [f64; 3], half: [f64; 3]) -> Self {
        Self {
            center: Vector3::from(center),
            half: Vector3::from(half),
        }
    }

    /// Corner `i` has bit 0 for x, bit 1 for y, bit 2 for z (set = positive side).
    pub fn corners(&self) -> [Point3<f64>; 8] {
        std::array::from_fn(|i| {
            let s = |bit: usize| if i & (1 << bit) != 0 { 1.0 } else { -1.0 };
            Point3::from(self.center + Vector3::new(s(0) * self.half.x, s(1) * self.half.y, s(2) * self.half.z))
        })
    }

    /// Whether the segment `a + t (b - a)`, `t` in `[0, t_max]`, meets the solid box.
    pub fn blocks_segment(&self, a: &Point3<f64>, b: &Point3<f64>, t_max: f64) -> bool {
        let d = b - a;
        let (mut t0, mut t1) = (0.0_f64, t_max);
        for k in 0..3 {
            let lo = self.center[k] - self.half[k];
            let hi = self.center[k] + self.half[k];
            if d[k].abs() < 1e-15 {
                if a[k] < lo || a[k] > hi {
                    return false;
                }
                continue;
            }
            let (mut ta, mut tb) = ((lo - a[k]) / d[k], (hi - a[k]) / d[k]);
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return false;
            }
        }
        true
    }

    /// Uniform points on every face but the bottom, `density` per square meter,
    /// each with its outward face normal.
    pub fn sample_surface(&self, rng: &mut impl Rng, density: f64) -> Vec<(Point3<f64>, Vector3<f64>)> {
        let mut out = Vec::new();
        let h = self.half;
        // (normal axis, sign, area)
        let faces = [
            (0, 1.0, 4.0 * h.y * h.z),
            (0, -1.0, 4.0 * h.y * h.z),
            (1, 1.0, 4.0 * h.x * h.z),
            (1, -1.0, 4.0 * h.x * h.z),
            (2, 1.0, 4.0 * h.x * h.y),
        ];
        for (axis, sign, area) in faces {
            let n = (area * density).round() as usize;
            let mut normal = Vector3::zeros();
            normal[axis] = sign;
            for _ in 0..n {
                let mut p = self.center;
                for k in 0..3 {
                    p[k] += if k == axis {
                        sign * h[k]
                    } else {
                        rng.random_range(-h[k]..h[k])
                    };
                }
                out.push((Point3::from(p), normal));
            }
        }
        out
    }

    /// Image polygon (convex hull) of the box seen by a camera, clipped at the
    /// near plane. `body_to_camera` maps body coordinates into the camera frame.
    pub fn silhouette(&self, body_to_camera: &Pose<f64>, k: &CameraIntrinsics<f64>) -> Vec<(f64, f64)> {
        let pc: Vec<Point3<f64>> = self.corners().iter().map(|c| body_to_camera.transform_point(c)).collect();
        let project = |p: &Point3<f64>| (k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy);
        let mut pts: Vec<(f64, f64)> = pc.iter().filter(|p| p.z >= NEAR_PLANE).map(project).collect();
        for (i, j) in EDGES {
            let (a, b) = (pc[i], pc[j]);
            if (a.z - NEAR_PLANE) * (b.z - NEAR_PLANE) < 0.0 {
                let t = (NEAR_PLANE - a.z) / (b.z - a.z);
                pts.push(project(&(a + (b - a) * t)));
            }
        }
        convex_hull(pts)
    }
}

/// Andrew's monotone chain; counter-clockwise hull without collinear points.
pub fn convex_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite points"));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Pixels whose centers lie in a convex polygon, as `(row, start, end)` spans
/// clipped to a `width` x `height` image.
pub fn rasterize_convex(poly: &[(f64, f64)], width: u32, height: u32) -> Vec<(u32, u32, u32)> {
    if poly.len() < 3 {
        return Vec::new();
    }
    let ymin = poly.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let ymax = poly.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let r0 = (ymin - 0.5).ceil().max(0.0);
    let r1 = (ymax - 0.5).floor().min(height as f64 - 1.0);
    let mut spans = Vec::new();
    if r0 > r1 {
        return spans;
    }
    for row in r0 as u32..=r1 as u32 {
        let yc = row as f64 + 0.5;
        let (mut xl, mut xr) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..poly.len() {
            let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
            if (p.1 - yc) * (q.1 - yc) > 0.0 {
                continue;
            }
            if p.1 == q.1 {
                xl = xl.min(p.0.min(q.0));
                xr = xr.max(p.0.max(q.0));
            } else {
                let x = p.0 + (yc - p.1) * (q.0 - p.0) / (q.1 - p.1);
                xl = xl.min(x);
                xr = xr.max(x);
            }
        }
        let u0 = (xl - 0.5).ceil().max(0.0);
        let u1 = (xr - 0.5).floor().min(width as f64 - 1.0);
        if u0 <= u1 {
            spans.push((row, u0 as u32, u1 as u32 + 1));
        }
    }
    spans
}

/// Grows spans by `radius` pixels in every direction (square neighbourhood).
pub fn dilate_spans(spans: &[(u32, u32, u32)], radius: u32, width: u32, height: u32) -> Vec<(u32, u32, u32)> {
    let mut out = Vec::with_capacity(spans.len() * (2 * radius as usize + 1));
    for &(row, s, e) in spans {
        let r0 = row.saturating_sub(radius);
        let r1 = (row + radius).min(height - 1);
        for r in r0..=r1 {
            out.push((r, s.saturating_sub(radius), (e + radius).min(width)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hull_of_square_with_interior_point() {
        let h = convex_hull(vec![(0.0, 0.0), (1.0, 0.0), (0.5, 0.5), (1.0, 1.0), (0.0, 1.0)]);
        assert_eq!(h.len(), 4);
        assert!(!h.contains(&(0.5, 0.5)));
    }

    #[test]
    fn raster_counts_pixel_centers() {
        // Square [2, 6) x [1, 4): centers 2.5..5.5 and 1.5..3.5.
        let spans = rasterize_convex(&[(2.0, 1.0), (6.0, 1.0), (6.0, 4.0), (2.0, 4.0)], 10, 10);
        assert_eq!(spans, vec![(1, 2, 6), (2, 2, 6), (3, 2, 6)]);
    }

    #[test]
    fn raster_clips_to_image() {
        let spans = rasterize_convex(&[(-50.0, -50.0), (50.0, -50.0), (50.0, 50.0), (-50.0, 50.0)], 8, 4);
        assert_eq!(spans.len(), 4);
        assert!(spans.iter().all(|s| s.1 == 0 && s.2 == 8));
    }

    #[test]
    fn segment_blocking() {
        let c = Cuboid::new([0.0, 0.0, 5.0], [1.0, 1.0, 1.0]);
        let o = Point3::origin();
        assert!(c.blocks_segment(&o, &Point3::new(0.0, 0.0, 10.0), 1.0));
        assert!(!c.blocks_segment(&o, &Point3::new(0.0, 0.0, 3.0), 1.0));
        assert!(!c.blocks_segment(&o, &Point3::new(5.0, 0.0, 10.0), 1.0));
    }

    #[test]
    fn samples_lie_on_faces() {
        let c = Cuboid::new([1.0, 2.0, 3.0], [0.5, 1.0, 1.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = c.sample_surface(&mut rng, 10.0);
        assert!(!pts.is_empty());
        for (p, n) in pts {
            let local = p.coords - c.center;
            let axis = n.iamax();
            assert!((local[axis] - n[axis] * c.half[axis]).abs() < 1e-12);
            assert!(n[2] >= 0.0);
        }
    }

    #[test]
    fn silhouette_contains_center_projection() {
        let k = CameraIntrinsics::new(500.0, 500.0, 480.0, 270.0, 1.0, 960, 540).unwrap();
        let c = Cuboid::new([0.0, 0.0, 10.0], [1.0, 1.0, 1.0]);
        let hull = c.silhouette(&Pose::identity(), &k);
        let spans = rasterize_convex(&hull, 960, 540);
        // Front face spans 1/9 * 500 = 55.6 px each side of center; back face smaller.
        let rows = spans.len() as f64;
        assert!((rows - 2.0 * 500.0 / 9.0).abs() <= 2.0, "{rows}");
        assert!(spans.iter().any(|&(r, s, e)| r == 270 && s <= 480 && e > 480));
    }

    #[test]
    fn near_plane_clipping_keeps_visible_part() {
        let k = CameraIntrinsics::new(500.0, 500.0, 480.0, 270.0, 1.0, 960, 540).unwrap();
        // Box straddling the camera plane.
        let c = Cuboid::new([3.0, 0.0, 0.0], [1.0, 1.0, 2.0]);
        let hull = c.silhouette(&Pose::identity(), &k);
        assert!(hull.len() >= 3);
        assert!(hull.iter().all(|p| p.0.is_finite() && p.1.is_finite()));
    }
}
