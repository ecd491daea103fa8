use serde::{Deserialize, Serialize};

use super::MaskError;

/// Axis-aligned pixel box, half-open on the max edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "[u32; 4]", try_from = "[u32; 4]")]
pub struct BoundingBox {
    pub u_min: u32,
    pub v_min: u32,
    pub u_max: u32,
    pub v_max: u32,
}

impl BoundingBox {
    pub fn new(u_min: u32, v_min: u32, u_max: u32, v_max: u32) -> Result<Self, MaskError> {
        if u_min >= u_max || v_min >= v_max {
            return Err(MaskError::InvalidBox {
                u_min,
                v_min,
                u_max,
                v_max,
            });
        }
        Ok(Self {
            u_min,
            v_min,
            u_max,
            v_max,
        })
    }

    /// Box from real-valued extents, rounding outward and clipping to the image.
    /// Returns `None` when nothing remains inside the image.
    pub fn from_extent(
        u_min: f64,
        v_min: f64,
        u_max: f64,
        v_max: f64,
        width: u32,
        height: u32,
    ) -> Option<Self> {
        let clamp = |x: f64, hi: u32| x.clamp(0.0, hi as f64) as u32;
        let b = Self {
            u_min: clamp(u_min.floor(), width),
            v_min: clamp(v_min.floor(), height),
            u_max: clamp(u_max.ceil(), width),
            v_max: clamp(v_max.ceil(), height),
        };
        (b.u_min < b.u_max && b.v_min < b.v_max).then_some(b)
    }

    pub fn width(&self) -> u32 {
        self.u_max - self.u_min
    }

    pub fn height(&self) -> u32 {
        self.v_max - self.v_min
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn contains(&self, u: u32, v: u32) -> bool {
        u >= self.u_min && u < self.u_max && v >= self.v_min && v < self.v_max
    }

    /// Containment test for a sub-pixel location (pixel `(floor(u), floor(v))`).
    pub fn contains_point(&self, u: f64, v: f64) -> bool {
        u >= self.u_min as f64 && u < self.u_max as f64 && v >= self.v_min as f64 && v < self.v_max as f64
    }

    pub fn clip(&self, width: u32, height: u32) -> Option<Self> {
        let b = Self {
            u_min: self.u_min.min(width),
            v_min: self.v_min.min(height),
            u_max: self.u_max.min(width),
            v_max: self.v_max.min(height),
        };
        (b.u_min < b.u_max && b.v_min < b.v_max).then_some(b)
    }

    pub fn is_within(&self, width: u32, height: u32) -> bool {
        self.u_max <= width && self.v_max <= height
    }
}

impl From<BoundingBox> for [u32; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.u_min, b.v_min, b.u_max, b.v_max]
    }
}

impl TryFrom<[u32; 4]> for BoundingBox {
    type Error = MaskError;

    fn try_from(v: [u32; 4]) -> Result<Self, Self::Error> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

/// One horizontal run of pixels `[start, start + len)` on `row`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "[u32; 3]", from = "[u32; 3]")]
pub struct Run {
    pub row: u32,
    pub start: u32,
    pub len: u32,
}

impl Run {
    pub fn end(&self) -> u32 {
        self.start + self.len
    }
}

impl From<Run> for [u32; 3] {
    fn from(r: Run) -> Self {
        [r.row, r.start, r.len]
    }
}

impl From<[u32; 3]> for Run {
    fn from(v: [u32; 3]) -> Self {
        Run {
            row: v[0],
            start: v[1],
            len: v[2],
        }
    }
}

/// Run-length encoded pixel set. Runs are sorted by `(row, start)`, non-empty
/// and non-overlapping.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct PixelRegion {
    runs: Vec<Run>,
}

impl<'de> Deserialize<'de> for PixelRegion {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let runs = Vec::<Run>::deserialize(d)?;
        PixelRegion::from_runs(runs).map_err(serde::de::Error::custom)
    }
}

impl PixelRegion {
    pub fn from_runs(runs: Vec<Run>) -> Result<Self, MaskError> {
        for (i, r) in runs.iter().enumerate() {
            if r.len == 0 {
                return Err(MaskError::InvalidRegion(format!("run {i} is empty")));
            }
            if r.start.checked_add(r.len).is_none() {
                return Err(MaskError::InvalidRegion(format!("run {i} overflows")));
            }
            if i > 0 {
                let p = runs[i - 1];
                if (p.row, p.end()) > (r.row, r.start) {
                    return Err(MaskError::InvalidRegion(format!(
                        "run {i} is unsorted or overlaps its predecessor"
                    )));
                }
            }
        }
        Ok(Self { runs })
    }

    /// Builds a region from per-row spans `(row, start, end)` given in any order;
    /// overlapping or touching spans on one row are merged.
    pub fn from_spans(spans: impl IntoIterator<Item = (u32, u32, u32)>) -> Self {
        let mut spans: Vec<(u32, u32, u32)> = spans.into_iter().filter(|s| s.2 > s.1).collect();
        spans.sort_unstable();
        let mut runs: Vec<Run> = Vec::with_capacity(spans.len());
        for (row, start, end) in spans {
            if let Some(last) = runs.last_mut() {
                if last.row == row && start <= last.end() {
                    last.len = last.len.max(end - last.start);
                    continue;
                }
            }
            runs.push(Run {
                row,
                start,
                len: end - start,
            });
        }
        Self { runs }
    }

    pub fn from_bbox(b: &BoundingBox) -> Self {
        Self {
            runs: (b.v_min..b.v_max)
                .map(|row| Run {
                    row,
                    start: b.u_min,
                    len: b.width(),
                })
                .collect(),
        }
    }

    pub fn runs(&self) -> &[Run] {
        &self.runs
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn area(&self) -> u64 {
        self.runs.iter().map(|r| r.len as u64).sum()
    }

    pub fn contains(&self, u: u32, v: u32) -> bool {
        let first = self.runs.partition_point(|r| r.row < v);
        self.runs[first..]
            .iter()
            .take_while(|r| r.row == v)
            .any(|r| u >= r.start && u < r.end())
    }

    pub fn is_subset_of(&self, b: &BoundingBox) -> bool {
        self.runs
            .iter()
            .all(|r| r.row >= b.v_min && r.row < b.v_max && r.start >= b.u_min && r.end() <= b.u_max)
    }

    pub fn is_within(&self, width: u32, height: u32) -> bool {
        self.runs.iter().all(|r| r.row < height && r.end() <= width)
    }

    /// Intersection with a box.
    pub fn clipped(&self, b: &BoundingBox) -> Self {
        Self {
            runs: self
                .runs
                .iter()
                .filter(|r| r.row >= b.v_min && r.row < b.v_max)
                .filter_map(|r| {
                    let start = r.start.max(b.u_min);
                    let end = r.end().min(b.u_max);
                    (end > start).then_some(Run {
                        row: r.row,
                        start,
                        len: end - start,
                    })
                })
                .collect(),
        }
    }
}

/// One detected object instance in a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectDetection {
    #[serde(rename = "id")]
    pub object_id: u32,
    #[serde(rename = "label")]
    pub class_label: String,
    #[serde(rename = "dynamic")]
    pub a_priori_dynamic: bool,
    pub bbox: BoundingBox,
    #[serde(rename = "region")]
    pub pixel_region: Option<PixelRegion>,
}

impl ObjectDetection {
    pub fn new(
        object_id: u32,
        class_label: impl Into<String>,
        a_priori_dynamic: bool,
        bbox: BoundingBox,
        pixel_region: Option<PixelRegion>,
    ) -> Result<Self, MaskError> {
        let det = Self {
            object_id,
            class_label: class_label.into(),
            a_priori_dynamic,
            bbox,
            pixel_region,
        };
        det.validate()?;
        Ok(det)
    }

    pub fn validate(&self) -> Result<(), MaskError> {
        match &self.pixel_region {
            Some(region) if !region.is_subset_of(&self.bbox) => {
                Err(MaskError::RegionOutsideBox(self.object_id))
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_validation_and_area() {
        assert!(BoundingBox::new(3, 0, 3, 5).is_err());
        let b = BoundingBox::new(0, 0, 480, 540).unwrap();
        assert_eq!(b.area(), 259_200);
        assert!(b.contains(479, 539));
        assert!(!b.contains(480, 0));
        assert_eq!(b.clip(100, 100), Some(BoundingBox::new(0, 0, 100, 100).unwrap()));
        assert_eq!(BoundingBox::new(200, 0, 300, 10).unwrap().clip(100, 100), None);
    }

    #[test]
    fn box_from_extent_rounds_outward() {
        let b = BoundingBox::from_extent(-3.2, 1.5, 10.1, 7.0, 8, 100).unwrap();
        assert_eq!(b, BoundingBox::new(0, 1, 8, 7).unwrap());
        assert!(BoundingBox::from_extent(-5.0, 0.0, -1.0, 3.0, 8, 8).is_none());
    }

    #[test]
    fn region_validation() {
        let ok = PixelRegion::from_runs(vec![
            Run { row: 0, start: 0, len: 2 },
            Run { row: 0, start: 2, len: 1 },
            Run { row: 1, start: 0, len: 1 },
        ]);
        assert!(ok.is_ok());
        let overlap = PixelRegion::from_runs(vec![
            Run { row: 0, start: 0, len: 3 },
            Run { row: 0, start: 2, len: 1 },
        ]);
        assert!(overlap.is_err());
        let unsorted = PixelRegion::from_runs(vec![
            Run { row: 1, start: 0, len: 3 },
            Run { row: 0, start: 5, len: 1 },
        ]);
        assert!(unsorted.is_err());
        assert!(PixelRegion::from_runs(vec![Run { row: 0, start: 0, len: 0 }]).is_err());
    }

    #[test]
    fn spans_merge() {
        let r = PixelRegion::from_spans([(1, 5, 8), (0, 0, 2), (1, 2, 6), (1, 10, 11)]);
        assert_eq!(
            r.runs(),
            &[
                Run { row: 0, start: 0, len: 2 },
                Run { row: 1, start: 2, len: 6 },
                Run { row: 1, start: 10, len: 1 },
            ]
        );
        assert_eq!(r.area(), 9);
        assert!(r.contains(7, 1));
        assert!(!r.contains(8, 1));
        assert!(r.contains(10, 1));
    }

    #[test]
    fn detection_region_must_fit_box() {
        let bbox = BoundingBox::new(0, 0, 4, 4).unwrap();
        let inside = PixelRegion::from_spans([(1, 1, 3)]);
        let outside = PixelRegion::from_spans([(1, 1, 6)]);
        assert!(ObjectDetection::new(1, "truck", true, bbox, Some(inside)).is_ok());
        assert_eq!(
            ObjectDetection::new(1, "truck", true, bbox, Some(outside)),
            Err(MaskError::RegionOutsideBox(1))
        );
    }

    #[test]
    fn serde_shapes() {
        let det = ObjectDetection::new(
            3,
            "roller",
            true,
            BoundingBox::new(1, 2, 3, 4).unwrap(),
            Some(PixelRegion::from_spans([(2, 1, 2)])),
        )
        .unwrap();
        let json = serde_json::to_string(&det).unwrap();
        assert_eq!(
            json,
            r#"{"id":3,"label":"roller","dynamic":true,"bbox":[1,2,3,4],"region":[[2,1,1]]}"#
        );
        let back: ObjectDetection = serde_json::from_str(&json).unwrap();
        assert_eq!(back, det);
        assert!(serde_json::from_str::<BoundingBox>("[5,0,5,1]").is_err());
    }
}
