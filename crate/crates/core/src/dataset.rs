//! On-disk sequence format: a directory of three line-delimited JSON files.
//!
//! `meta.jsonl` holds one header record, `frames.jsonl` one record per frame
//! and `groundtruth.jsonl` one record per frame in the same order. The field
//! layout is documented in `docs/dataset-schema.md`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{Descriptor, FeaturePixel, FrameObservation, StereoFeature};
use crate::geometry::{CameraIntrinsics, PixelMono, PixelStereo, Pose};
use crate::masking::ObjectDetection;
use crate::motion::MotionLabel;

pub const FORMAT_VERSION: &str = "1";
pub const META_FILE: &str = "meta.jsonl";
pub const FRAMES_FILE: &str = "frames.jsonl";
pub const GROUNDTRUTH_FILE: &str = "groundtruth.jsonl";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{}: {error}", path.display())]
    Io { path: PathBuf, error: std::io::Error },
    #[error("{file}:{line}: {reason}")]
    Format { file: String, line: usize, reason: String },
}

fn format_err(file: &str, line: usize, reason: impl Into<String>) -> DatasetError {
    DatasetError::Format {
        file: file.to_string(),
        line,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub version: String,
    pub intrinsics: CameraIntrinsics<f64>,
    pub fps: f64,
    pub seed: u64,
    pub frames: usize,
    /// Free-form name of the generating scenario.
    #[serde(default)]
    pub scenario: String,
    #[serde(default)]
    pub pixel_noise_sigma: f64,
}

/// Ground truth of one frame. The pose is camera-to-world, stored as the
/// translation plus unit quaternion `[qx, qy, qz, qw]` written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFrame {
    #[serde(rename = "t")]
    pub timestamp: f64,
    pub translation: [f64; 3],
    #[serde(rename = "q")]
    pub quaternion: [f64; 4],
    /// Motion state of every object in the world at this frame.
    #[serde(default)]
    pub objects: BTreeMap<u32, MotionLabel>,
    /// Landmarks inside the view frustum but hidden behind an object.
    #[serde(default)]
    pub occluded: Vec<u64>,
}

impl GroundTruthFrame {
    pub fn from_pose(timestamp: f64, pose: &Pose<f64>) -> Self {
        let t = pose.translation;
        Self {
            timestamp,
            translation: [t.x, t.y, t.z],
            quaternion: pose.quaternion(),
            objects: BTreeMap::new(),
            occluded: Vec::new(),
        }
    }

    pub fn pose(&self) -> Pose<f64> {
        let [x, y, z] = self.translation;
        Pose::from_quaternion(Vector3::new(x, y, z), self.quaternion)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDataset {
    pub meta: DatasetMeta,
    pub frames: Vec<FrameObservation<f64>>,
    pub groundtruth: Vec<GroundTruthFrame>,
}

impl SimulatedDataset {
    /// Ground-truth camera-to-world poses with their timestamps.
    pub fn groundtruth_poses(&self) -> Vec<(f64, Pose<f64>)> {
        self.groundtruth.iter().map(|g| (g.timestamp, g.pose())).collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeatureRecord {
    u_l: f64,
    v_l: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    u_r: Option<f64>,
    desc: Descriptor,
    scale: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    landmark: Option<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    t: f64,
    features: Vec<FeatureRecord>,
    detections: Vec<ObjectDetection>,
}

impl FrameRecord {
    fn from_frame(f: &FrameObservation<f64>) -> Self {
        Self {
            t: f.timestamp,
            features: f
                .features
                .iter()
                .map(|s| FeatureRecord {
                    u_l: s.pixel.u_l(),
                    v_l: s.pixel.v_l(),
                    u_r: s.pixel.stereo().map(|p| p.u_r),
                    desc: s.descriptor,
                    scale: s.scale_level,
                    landmark: s.landmark_hint,
                })
                .collect(),
            detections: f.detections.clone(),
        }
    }

    fn into_frame(self, intrinsics: CameraIntrinsics<f64>) -> Result<FrameObservation<f64>, String> {
        let features = self
            .features
            .into_iter()
            .map(|r| {
                let pixel = match r.u_r {
                    Some(u_r) => FeaturePixel::Stereo(PixelStereo {
                        u_l: r.u_l,
                        v_l: r.v_l,
                        u_r,
                    }),
                    None => FeaturePixel::Mono(PixelMono { u_l: r.u_l, v_l: r.v_l }),
                };
                let f = StereoFeature {
                    pixel,
                    descriptor: r.desc,
                    scale_level: r.scale,
                    landmark_hint: r.landmark,
                };
                if f.is_valid() {
                    Ok(f)
                } else {
                    Err(format!("invalid feature at ({}, {})", r.u_l, r.v_l))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        for d in &self.detections {
            d.validate().map_err(|e| format!("detection {}: {e}", d.object_id))?;
            if !d.bbox.is_within(intrinsics.width, intrinsics.height) {
                return Err(format!("detection {} leaves the image", d.object_id));
            }
        }
        Ok(FrameObservation {
            timestamp: self.t,
            features,
            detections: self.detections,
            intrinsics,
        })
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, DatasetError> {
    File::create(path).map(BufWriter::new).map_err(|error| DatasetError::Io {
        path: path.to_path_buf(),
        error,
    })
}

fn write_line<W: Write, S: Serialize>(w: &mut W, path: &Path, value: &S) -> Result<(), DatasetError> {
    let io = |error| DatasetError::Io {
        path: path.to_path_buf(),
        error,
    };
    serde_json::to_writer(&mut *w, value).map_err(|e| io(e.into()))?;
    w.write_all(b"\n").map_err(io)
}

/// Writes `dataset` into directory `dir`, creating it if needed.
pub fn export_dataset(dataset: &SimulatedDataset, dir: &Path) -> Result<(), DatasetError> {
    std::fs::create_dir_all(dir).map_err(|error| DatasetError::Io {
        path: dir.to_path_buf(),
        error,
    })?;
    let path = dir.join(META_FILE);
    let mut w = create(&path)?;
    write_line(&mut w, &path, &dataset.meta)?;
    w.flush().map_err(|error| DatasetError::Io { path, error })?;

    let path = dir.join(FRAMES_FILE);
    let mut w = create(&path)?;
    for f in &dataset.frames {
        write_line(&mut w, &path, &FrameRecord::from_frame(f))?;
    }
    w.flush().map_err(|error| DatasetError::Io { path, error })?;

    let path = dir.join(GROUNDTRUTH_FILE);
    let mut w = create(&path)?;
    for g in &dataset.groundtruth {
        write_line(&mut w, &path, g)?;
    }
    w.flush().map_err(|error| DatasetError::Io { path, error })
}

/// Parses each non-empty line of `dir/file` with `parse(line_number, text)`.
fn read_lines<R>(
    dir: &Path,
    file: &str,
    mut parse: impl FnMut(usize, &str) -> Result<R, DatasetError>,
) -> Result<Vec<R>, DatasetError> {
    let path = dir.join(file);
    let f = File::open(&path).map_err(|error| DatasetError::Io {
        path: path.clone(),
        error,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|error| DatasetError::Io {
            path: path.clone(),
            error,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse(i + 1, &line)?);
    }
    Ok(out)
}

fn parse_json<T: for<'de> Deserialize<'de>>(file: &str, line: usize, text: &str) -> Result<T, DatasetError> {
    serde_json::from_str(text).map_err(|e| format_err(file, line, e.to_string()))
}

/// Reads a dataset directory written by [`export_dataset`].
pub fn import_dataset(dir: &Path) -> Result<SimulatedDataset, DatasetError> {
    let metas: Vec<DatasetMeta> = read_lines(dir, META_FILE, |n, s| parse_json(META_FILE, n, s))?;
    let meta = match metas.as_slice() {
        [m] => m.clone(),
        [] => return Err(format_err(META_FILE, 1, "missing header record")),
        _ => return Err(format_err(META_FILE, 2, "more than one header record")),
    };
    if meta.version != FORMAT_VERSION {
        return Err(format_err(
            META_FILE,
            1,
            format!("unsupported version {:?}, expected {FORMAT_VERSION:?}", meta.version),
        ));
    }
    meta.intrinsics
        .validate()
        .map_err(|e| format_err(META_FILE, 1, e.to_string()))?;
    if !(meta.fps > 0.0) {
        return Err(format_err(META_FILE, 1, "fps must be positive"));
    }

    let k = meta.intrinsics;
    let mut last_t = f64::NEG_INFINITY;
    let mut frame_lines = Vec::new();
    let frames = read_lines(dir, FRAMES_FILE, |n, s| {
        let rec: FrameRecord = parse_json(FRAMES_FILE, n, s)?;
        if !(rec.t > last_t) {
            return Err(format_err(FRAMES_FILE, n, "timestamps must increase strictly"));
        }
        last_t = rec.t;
        frame_lines.push(n);
        rec.into_frame(k).map_err(|r| format_err(FRAMES_FILE, n, r))
    })?;
    let mut gt_lines = Vec::new();
    let groundtruth = read_lines(dir, GROUNDTRUTH_FILE, |n, s| {
        gt_lines.push(n);
        parse_json::<GroundTruthFrame>(GROUNDTRUTH_FILE, n, s)
    })?;

    for (file, count, lines) in [
        (FRAMES_FILE, frames.len(), &frame_lines),
        (GROUNDTRUTH_FILE, groundtruth.len(), &gt_lines),
    ] {
        if count != meta.frames {
            let line = lines.last().map_or(1, |l| l + 1);
            return Err(format_err(
                file,
                line,
                format!("expected {} records, found {count}", meta.frames),
            ));
        }
    }
    for (i, (f, g)) in frames.iter().zip(&groundtruth).enumerate() {
        if f.timestamp != g.timestamp {
            return Err(format_err(GROUNDTRUTH_FILE, gt_lines[i], "timestamp differs from frames record"));
        }
        let norm: f64 = g.quaternion.iter().map(|q| q * q).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(format_err(GROUNDTRUTH_FILE, gt_lines[i], "quaternion is not unit length"));
        }
    }
    Ok(SimulatedDataset {
        meta,
        frames,
        groundtruth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_record_keeps_mono_and_stereo() {
        let k = CameraIntrinsics::new(500.0, 500.0, 480.0, 270.0, 1.0, 960, 540).unwrap();
        let frame = FrameObservation {
            timestamp: 0.5,
            features: vec![
                StereoFeature {
                    pixel: FeaturePixel::Mono(PixelMono { u_l: 1.25, v_l: 2.5 }),
                    descriptor: Descriptor([1, 2, 3, 4]),
                    scale_level: 2,
                    landmark_hint: None,
                },
                StereoFeature {
                    pixel: FeaturePixel::Stereo(PixelStereo {
                        u_l: 100.1,
                        v_l: 200.2,
                        u_r: 90.3,
                    }),
                    descriptor: Descriptor([u64::MAX, 0, 7, 9]),
                    scale_level: 0,
                    landmark_hint: Some(42),
                },
            ],
            detections: vec![],
            intrinsics: k,
        };
        let text = serde_json::to_string(&FrameRecord::from_frame(&frame)).unwrap();
        let back: FrameRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(back.into_frame(k).unwrap(), frame);
    }

    #[test]
    fn groundtruth_pose_round_trip() {
        let pose = Pose::from_axis_angle(&Vector3::new(1.0, 2.0, 3.0).normalize(), 0.7)
            .compose(&Pose::from_translation(Vector3::new(1.0, -2.0, 0.5)));
        let g = GroundTruthFrame::from_pose(1.0, &pose);
        assert!(g.pose().max_abs_diff(&pose) < 1e-12);
    }
}
