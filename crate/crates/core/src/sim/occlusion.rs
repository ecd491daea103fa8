//! Fixed centered occlusion for the occlusion-ratio sweep.

use crate::dataset::SimulatedDataset;
use crate::masking::{BoundingBox, ObjectDetection};

use super::SimError;

/// Object id of the injected occlusion.
pub const OCCLUSION_OBJECT_ID: u32 = u32::MAX;

/// Centered box covering `ratio` of a `width` x `height` image.
///
/// Picks the integer size whose area is closest to `ratio * width * height`
/// among sizes within 5% of the image aspect ratio, preferring the closer
/// aspect on ties. Returns `None` for `ratio <= 0`.
pub fn occlusion_box(width: u32, height: u32, ratio: f64) -> Option<BoundingBox> {
    if !(ratio > 0.0) {
        return None;
    }
    let target = ratio * width as f64 * height as f64;
    let aspect = width as f64 / height as f64;
    let mut best: Option<(f64, f64, u32, u32)> = None;
    for h in 1..=height {
        let w = ((target / h as f64).round() as u32).clamp(1, width);
        let dev = ((w as f64 / h as f64) / aspect - 1.0).abs();
        if dev > 0.05 {
            continue;
        }
        let key = ((w as f64 * h as f64 - target).abs(), dev, w, h);
        if best.is_none_or(|b| (key.0, key.1) < (b.0, b.1)) {
            best = Some(key);
        }
    }
    let (_, _, w, h) = best?;
    let u0 = (width - w) / 2;
    let v0 = (height - h) / 2;
    BoundingBox::new(u0, v0, u0 + w, v0 + h).ok()
}

/// Adds one a-priori-dynamic box detection of area `ratio` of the image,
/// centered, to every frame. Ground truth is untouched.
pub fn inject_fixed_occlusion(dataset: &SimulatedDataset, ratio: f64) -> Result<SimulatedDataset, SimError> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(SimError::ConfigInvalid(format!("occlusion ratio {ratio} outside [0, 1)")));
    }
    let mut out = dataset.clone();
    let k = dataset.meta.intrinsics;
    let Some(bbox) = occlusion_box(k.width, k.height, ratio) else {
        return Ok(out);
    };
    let det = ObjectDetection::new(OCCLUSION_OBJECT_ID, "occlusion", true, bbox, None)
        .expect("box without region is valid");
    for f in &mut out.frames {
        f.detections.push(det.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_image_box() {
        let b = occlusion_box(960, 540, 0.5).unwrap();
        assert_eq!(b.area(), 259_200);
        let cu = (b.u_min + b.u_max) as f64 / 2.0;
        let cv = (b.v_min + b.v_max) as f64 / 2.0;
        assert!((cu - 480.0).abs() <= 0.5 && (cv - 270.0).abs() <= 0.5);
    }

    #[test]
    fn area_tracks_ratio() {
        for i in 1..10 {
            let r = i as f64 / 10.0;
            let b = occlusion_box(960, 540, r).unwrap();
            let got = b.area() as f64 / (960.0 * 540.0);
            assert!((got - r).abs() < 1e-3, "{r}: {got}");
        }
        assert!(occlusion_box(960, 540, 0.0).is_none());
    }
}
