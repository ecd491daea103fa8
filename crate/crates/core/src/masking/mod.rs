//! Binary occlusion masks built from object detections.
//!
//! A mask bit of 1 marks a dynamic pixel: features there are excluded from
//! ego-motion tracking. Masks come in two tiers, cheap bounding-box masks and
//! pixel-wise masks from instance silhouettes; [`hierarchical_mask`] only pays
//! for the second tier when the box mask covers too much of the frame.

mod region;

pub use region::{BoundingBox, ObjectDetection, PixelRegion, Run};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

/// Average seconds to produce a bounding-box mask for one frame.
pub const BBOX_MASK_SECONDS: f64 = 0.0207;
/// Average extra seconds for pixel-wise segmentation of one frame.
pub const PIXELWISE_MASK_SECONDS: f64 = 0.12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MaskError {
    #[error("invalid bounding box [{u_min}, {v_min}, {u_max}, {v_max})")]
    InvalidBox {
        u_min: u32,
        v_min: u32,
        u_max: u32,
        v_max: u32,
    },
    #[error("invalid pixel region: {0}")]
    InvalidRegion(String),
    #[error("pixel region of object {0} extends outside its bounding box")]
    RegionOutsideBox(u32),
    #[error("unknown object id {0}")]
    UnknownObjectId(u32),
    #[error("masked-area-ratio threshold must lie in (0, 1), got {0}")]
    InvalidThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskTier {
    BBox,
    PixelWise,
}

/// Masked-area-ratio threshold that switches box masks to pixel-wise masks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct MarThreshold(f64);

impl MarThreshold {
    pub fn new(tau: f64) -> Result<Self, MaskError> {
        if tau > 0.0 && tau < 1.0 {
            Ok(Self(tau))
        } else {
            Err(MaskError::InvalidThreshold(tau))
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

impl Default for MarThreshold {
    fn default() -> Self {
        Self(0.5)
    }
}

impl TryFrom<f64> for MarThreshold {
    type Error = MaskError;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<MarThreshold> for f64 {
    fn from(t: MarThreshold) -> f64 {
        t.0
    }
}

/// One bit per pixel, row-major. 0 = static, 1 = dynamic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OcclusionMask {
    width: u32,
    height: u32,
    words: Vec<u64>,
    tier: MaskTier,
    contributor_ids: Vec<u32>,
}

impl OcclusionMask {
    pub fn blank(width: u32, height: u32, tier: MaskTier) -> Self {
        let bits = width as usize * height as usize;
        Self {
            width,
            height,
            words: vec![0; bits.div_ceil(64)],
            tier,
            contributor_ids: Vec::new(),
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn tier(&self) -> MaskTier {
        self.tier
    }

    /// Object ids whose area is set in this mask, ascending.
    pub fn contributor_ids(&self) -> &[u32] {
        &self.contributor_ids
    }

    pub fn get(&self, u: u32, v: u32) -> bool {
        if u >= self.width || v >= self.height {
            return false;
        }
        let i = v as usize * self.width as usize + u as usize;
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, u: u32, v: u32, value: bool) {
        assert!(u < self.width && v < self.height, "pixel outside mask");
        let i = v as usize * self.width as usize + u as usize;
        if value {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    /// Whether a feature at sub-pixel location `(u, v)` falls on a dynamic pixel.
    /// Locations outside the image are never masked.
    pub fn is_masked_at<T: Scalar>(&self, u: T, v: T) -> bool {
        let (u, v) = (u.to_f64_lossy(), v.to_f64_lossy());
        if !(u >= 0.0 && v >= 0.0) {
            return false;
        }
        self.get(u.floor() as u32, v.floor() as u32)
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// Masked area ratio `A_m / A_f`.
    pub fn masked_area_ratio(&self) -> f64 {
        self.count_ones() as f64 / (self.width as f64 * self.height as f64)
    }

    /// Applies `op(word, bits)` to every word touched by the span `[start, end)` on `row`,
    /// where `bits` selects the span's bits within that word.
    fn for_span(&mut self, row: u32, start: u32, end: u32, mut op: impl FnMut(&mut u64, u64, usize)) {
        let end = end.min(self.width);
        if row >= self.height || start >= end {
            return;
        }
        let base = row as usize * self.width as usize;
        let (mut i, stop) = (base + start as usize, base + end as usize);
        while i < stop {
            let word = i / 64;
            let lo = i % 64;
            let hi = (stop - word * 64).min(64);
            let bits = if hi - lo == 64 {
                u64::MAX
            } else {
                ((1u64 << (hi - lo)) - 1) << lo
            };
            op(&mut self.words[word], bits, word);
            i = word * 64 + hi;
        }
    }

    fn fill_span(&mut self, row: u32, start: u32, end: u32) {
        self.for_span(row, start, end, |w, bits, _| *w |= bits);
    }

    fn fill_area(&mut self, area: &ObjectArea<'_>) {
        area.for_each_span(|row, start, end| self.fill_span(row, start, end));
    }

    /// Binary PGM (P5) rendering, 0 for static and 255 for dynamic pixels.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.width as usize * self.height as usize);
        for v in 0..self.height {
            for u in 0..self.width {
                out.push(if self.get(u, v) { 255 } else { 0 });
            }
        }
        out
    }
}

/// Masked area ratio of a mask.
pub fn masked_area_ratio(mask: &OcclusionMask) -> f64 {
    mask.masked_area_ratio()
}

/// The pixel area an object occupies in a mask of the given tier.
enum ObjectArea<'a> {
    Box(BoundingBox),
    Region(&'a PixelRegion, BoundingBox),
}

impl ObjectArea<'_> {
    fn of(det: &ObjectDetection, tier: MaskTier, width: u32, height: u32) -> Option<ObjectArea<'_>> {
        let clipped = det.bbox.clip(width, height)?;
        Some(match (tier, &det.pixel_region) {
            (MaskTier::PixelWise, Some(region)) => ObjectArea::Region(region, clipped),
            _ => ObjectArea::Box(clipped),
        })
    }

    fn for_each_span(&self, mut f: impl FnMut(u32, u32, u32)) {
        match self {
            ObjectArea::Box(b) => {
                for row in b.v_min..b.v_max {
                    f(row, b.u_min, b.u_max);
                }
            }
            ObjectArea::Region(region, clip) => {
                for r in region.runs() {
                    if r.row >= clip.v_min && r.row < clip.v_max {
                        let (s, e) = (r.start.max(clip.u_min), r.end().min(clip.u_max));
                        if e > s {
                            f(r.row, s, e);
                        }
                    }
                }
            }
        }
    }
}

fn rasterize(detections: &[ObjectDetection], width: u32, height: u32, tier: MaskTier) -> OcclusionMask {
    let mut mask = OcclusionMask::blank(width, height, tier);
    for det in detections.iter().filter(|d| d.a_priori_dynamic) {
        if let Some(area) = ObjectArea::of(det, tier, width, height) {
            mask.fill_area(&area);
            mask.contributor_ids.push(det.object_id);
        }
    }
    mask.contributor_ids.sort_unstable();
    mask.contributor_ids.dedup();
    mask
}

/// Box-tier mask: a pixel is dynamic iff it lies in the box of at least one
/// a-priori-dynamic detection.
pub fn rasterize_bbox_mask(detections: &[ObjectDetection], width: u32, height: u32) -> OcclusionMask {
    rasterize(detections, width, height, MaskTier::BBox)
}

/// Pixel-wise mask from detection silhouettes. Detections without a pixel
/// region fall back to their box.
pub fn rasterize_pixelwise_mask(
    detections: &[ObjectDetection],
    width: u32,
    height: u32,
) -> OcclusionMask {
    rasterize(detections, width, height, MaskTier::PixelWise)
}

/// Hierarchical masking: box mask first, pixel-wise refinement only when the
/// box mask's masked area ratio reaches `tau`.
pub fn hierarchical_mask(
    detections: &[ObjectDetection],
    width: u32,
    height: u32,
    tau: MarThreshold,
) -> OcclusionMask {
    hierarchical_mask_with_ratio(detections, width, height, tau).0
}

/// [`hierarchical_mask`] that also returns the box-tier masked area ratio.
pub fn hierarchical_mask_with_ratio(
    detections: &[ObjectDetection],
    width: u32,
    height: u32,
    tau: MarThreshold,
) -> (OcclusionMask, f64) {
    let bbox_mask = rasterize_bbox_mask(detections, width, height);
    let mar = bbox_mask.masked_area_ratio();
    if mar >= tau.value() {
        (rasterize_pixelwise_mask(detections, width, height), mar)
    } else {
        (bbox_mask, mar)
    }
}

/// Clears the area of objects found static. Pixels that are also covered by a
/// contributor that stays dynamic keep their bit.
pub fn unmask_objects(
    mask: &OcclusionMask,
    static_ids: &[u32],
    detections: &[ObjectDetection],
) -> Result<OcclusionMask, MaskError> {
    if static_ids.is_empty() {
        return Ok(mask.clone());
    }
    let (w, h, tier) = (mask.width, mask.height, mask.tier);
    let areas_of = |id: u32| {
        detections
            .iter()
            .filter(move |d| d.object_id == id)
            .filter_map(move |d| ObjectArea::of(d, tier, w, h))
    };
    for &id in static_ids {
        let known = mask.contributor_ids.binary_search(&id).is_ok()
            || detections.iter().any(|d| d.object_id == id);
        if !known {
            return Err(MaskError::UnknownObjectId(id));
        }
    }

    let mut out = mask.clone();
    for &id in static_ids {
        for area in areas_of(id) {
            area.for_each_span(|row, s, e| out.for_span(row, s, e, |word, bits, _| *word &= !bits));
        }
    }
    let remaining: Vec<u32> = mask
        .contributor_ids
        .iter()
        .copied()
        .filter(|id| !static_ids.contains(id))
        .collect();
    for &id in &remaining {
        let dynamic_areas = detections
            .iter()
            .filter(|d| d.object_id == id && d.a_priori_dynamic)
            .filter_map(|d| ObjectArea::of(d, tier, w, h));
        for area in dynamic_areas {
            area.for_each_span(|row, s, e| {
                out.for_span(row, s, e, |word, bits, idx| *word |= mask.words[idx] & bits)
            });
        }
    }
    out.contributor_ids = remaining;
    Ok(out)
}

/// Modeled wall time of producing masks for `frames` frames of a tier.
/// Detection always runs first, so a pixel-wise frame pays for both steps.
pub fn mask_cost(tier: MaskTier, frames: usize) -> f64 {
    let per_frame = match tier {
        MaskTier::BBox => BBOX_MASK_SECONDS,
        MaskTier::PixelWise => BBOX_MASK_SECONDS + PIXELWISE_MASK_SECONDS,
    };
    per_frame * frames as f64
}
