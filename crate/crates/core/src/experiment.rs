//! Running pipeline variants over datasets and writing their reports.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{import_dataset, DatasetError, SimulatedDataset};
use crate::eval::{associate_and_align, sync_time_offset, EvalError, RocRecord, Trajectory};
use crate::masking::{mask_cost, MaskTier};
use crate::motion::{MotionLabel, MIN_POINTS_FOR_CLASSIFICATION};
use crate::sim::{inject_fixed_occlusion, SimError};
use crate::tracking::{MaskPolicy, PipelineOptions, Tracker, TrackingConfig, TrackingStatus};

pub const TRAJECTORY_FILE: &str = "trajectory.txt";
pub const FRAMES_REPORT_FILE: &str = "frames.jsonl";
pub const OBJECTS_REPORT_FILE: &str = "objects.jsonl";
pub const SUMMARY_JSON_FILE: &str = "summary.json";
pub const SUMMARY_CSV_FILE: &str = "summary.csv";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0}")]
    Io(String),
}

/// Pipeline variants compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Hierarchical masking with static objects unmasked for a second round.
    Proposed,
    /// Every a-priori-dynamic box masked, single round.
    BaselineMaskAll,
    /// No masking at all.
    NoMask,
    /// Pixel-wise masks on every frame, two rounds.
    PixelwiseAlways,
    /// Box masks on every frame, two rounds.
    BboxAlways,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Proposed,
        Variant::BaselineMaskAll,
        Variant::NoMask,
        Variant::PixelwiseAlways,
        Variant::BboxAlways,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Proposed => "proposed",
            Variant::BaselineMaskAll => "baseline_mask_all",
            Variant::NoMask => "no_mask",
            Variant::PixelwiseAlways => "pixelwise_always",
            Variant::BboxAlways => "bbox_always",
        }
    }

    pub fn options(&self) -> PipelineOptions {
        let (mask_policy, two_round) = match self {
            Variant::Proposed => (MaskPolicy::Hierarchical, true),
            Variant::BaselineMaskAll => (MaskPolicy::BBoxAlways, false),
            Variant::NoMask => (MaskPolicy::NoMask, false),
            Variant::PixelwiseAlways => (MaskPolicy::PixelwiseAlways, true),
            Variant::BboxAlways => (MaskPolicy::BBoxAlways, true),
        };
        PipelineOptions {
            mask_policy,
            two_round,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        Variant::ALL.into_iter().find(|v| v.name() == key).ok_or_else(|| {
            let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
            format!("unknown variant {s:?}; expected one of {}", names.join(", "))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentConfig {
    pub tracking: TrackingConfig<f64>,
    /// Half-width of the clock-offset search, seconds; 0 trusts the timestamps.
    pub sync_window: f64,
    pub sync_step: f64,
    pub with_scale: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            tracking: TrackingConfig::default(),
            sync_window: 0.0,
            sync_step: 0.1,
            with_scale: false,
        }
    }
}

/// Classification of one object in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub id: u32,
    pub ref_id: Option<u32>,
    pub state: MotionLabel,
    pub score: f64,
    pub points: usize,
    /// Ground-truth state, when the dataset knows the object.
    pub truth: Option<MotionLabel>,
    pub unmasked: bool,
}

/// Per-frame report line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub frame: usize,
    pub t: f64,
    pub status: TrackingStatus,
    pub tier: MaskTier,
    pub bbox_mar: f64,
    pub mar: f64,
    pub final_mar: f64,
    pub round1_inliers: usize,
    pub inliers: usize,
    pub second_round: bool,
    pub keyframe: bool,
    pub map_size: usize,
    /// Modeled time to produce this frame's mask, seconds.
    pub mask_cost_s: f64,
    pub objects: Vec<ObjectRecord>,
}

/// Static-positive confusion counts against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub true_static: usize,
    pub false_static: usize,
    pub true_dynamic: usize,
    pub false_dynamic: usize,
    /// Objects left `Unknown` by the classifier.
    pub unknown: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub variant: Variant,
    pub frames: usize,
    pub tracked_frames: usize,
    pub lost_frames: usize,
    pub longest_lost_streak: usize,
    /// Set when any frame was lost.
    pub tracking_loss: bool,
    /// AT-RMSE after synchronization and alignment; `None` if alignment failed.
    pub at_rmse: Option<f64>,
    pub time_offset: f64,
    /// Estimated poses without a ground-truth partner.
    pub unmatched_poses: usize,
    pub max_occlusion_ratio: f64,
    pub pixelwise_frames: usize,
    /// Mean modeled masking time per frame, seconds.
    pub mean_mask_time_s: f64,
    pub confusion: Confusion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub summary: RunSummary,
    pub frames: Vec<FrameReport>,
    pub trajectory: Trajectory<f64>,
    /// Decidable classifications with their error lists, for ROC analysis.
    pub roc_records: Vec<RocRecord>,
}

/// Runs `variant` over an in-memory dataset.
pub fn run_pipeline(dataset: &SimulatedDataset, variant: Variant, cfg: &ExperimentConfig) -> RunReport {
    run_with_options(dataset, variant, variant.options(), cfg)
}

/// Runs the pipeline with explicit options; `variant` only labels the report.
pub fn run_with_options(
    dataset: &SimulatedDataset,
    variant: Variant,
    options: PipelineOptions,
    cfg: &ExperimentConfig,
) -> RunReport {
    let mut tracker = Tracker::new(cfg.tracking, options);
    let mut frames = Vec::with_capacity(dataset.frames.len());
    let mut poses = Vec::with_capacity(dataset.frames.len());
    let mut roc_records = Vec::new();
    let mut confusion = Confusion::default();
    let (mut lost, mut streak, mut longest) = (0usize, 0usize, 0usize);
    for (i, frame) in dataset.frames.iter().enumerate() {
        let res = tracker.track_frame(frame.clone());
        let truth_of = |id: u32| dataset.groundtruth.get(i).and_then(|g| g.objects.get(&id).copied());
        if res.status == TrackingStatus::Lost {
            lost += 1;
            streak += 1;
            longest = longest.max(streak);
        } else {
            streak = 0;
        }
        let objects: Vec<ObjectRecord> = res
            .objects
            .iter()
            .map(|(&id, v)| {
                let truth = truth_of(id);
                match (v.state.label, truth) {
                    (MotionLabel::Unknown, _) => confusion.unknown += 1,
                    (MotionLabel::Static, Some(MotionLabel::Static)) => confusion.true_static += 1,
                    (MotionLabel::Static, Some(MotionLabel::Dynamic)) => confusion.false_static += 1,
                    (MotionLabel::Dynamic, Some(MotionLabel::Dynamic)) => confusion.true_dynamic += 1,
                    (MotionLabel::Dynamic, Some(MotionLabel::Static)) => confusion.false_dynamic += 1,
                    _ => {}
                }
                if let Some(t @ (MotionLabel::Static | MotionLabel::Dynamic)) = truth {
                    if v.errors.len() >= MIN_POINTS_FOR_CLASSIFICATION {
                        roc_records.push(RocRecord {
                            errors: v.errors.clone(),
                            truth: t,
                        });
                    }
                }
                ObjectRecord {
                    id,
                    ref_id: v.ref_object_id,
                    state: v.state.label,
                    score: v.state.score,
                    points: v.errors.len(),
                    truth,
                    unmasked: res.unmasked_ids.contains(&id),
                }
            })
            .collect();
        let mask_cost_s = match options.mask_policy {
            MaskPolicy::NoMask => 0.0,
            _ => mask_cost(res.mask_tier, 1),
        };
        frames.push(FrameReport {
            frame: i,
            t: res.timestamp,
            status: res.status,
            tier: res.mask_tier,
            bbox_mar: res.bbox_mar,
            mar: res.mar,
            final_mar: res.final_mar,
            round1_inliers: res.round1_inliers,
            inliers: res.inlier_count,
            second_round: res.second_round,
            keyframe: res.keyframe,
            map_size: res.map_size,
            mask_cost_s,
            objects,
        });
        poses.push((res.timestamp, res.pose));
    }

    let trajectory = Trajectory::new(poses).unwrap_or_default();
    let gt = Trajectory::new(dataset.groundtruth_poses()).unwrap_or_default();
    let max_gap = 0.5 / dataset.meta.fps;
    let time_offset = if cfg.sync_window > 0.0 {
        sync_time_offset(&trajectory, &gt, cfg.sync_window, cfg.sync_step, max_gap).unwrap_or(0.0)
    } else {
        0.0
    };
    let aligned: Result<_, EvalError> =
        associate_and_align(&trajectory, &gt.shifted(time_offset), max_gap, cfg.with_scale);
    let (at_rmse, unmatched_poses) = match aligned {
        Ok((res, unmatched)) => (Some(res.at_rmse), unmatched),
        Err(_) => (None, trajectory.len()),
    };
    let n = frames.len();
    let summary = RunSummary {
        variant,
        frames: n,
        tracked_frames: n - lost,
        lost_frames: lost,
        longest_lost_streak: longest,
        tracking_loss: lost > 0,
        at_rmse,
        time_offset,
        unmatched_poses,
        max_occlusion_ratio: frames.iter().map(|f| f.bbox_mar).fold(0.0, f64::max),
        pixelwise_frames: frames.iter().filter(|f| f.tier == MaskTier::PixelWise).count(),
        mean_mask_time_s: if n == 0 {
            0.0
        } else {
            frames.iter().map(|f| f.mask_cost_s).sum::<f64>() / n as f64
        },
        confusion,
    };
    RunReport {
        summary,
        frames,
        trajectory,
        roc_records,
    }
}

fn io_err(path: &Path, e: impl fmt::Display) -> ExperimentError {
    ExperimentError::Io(format!("{}: {e}", path.display()))
}

fn write_jsonl<S: Serialize>(path: &Path, items: impl IntoIterator<Item = S>) -> Result<(), ExperimentError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(|e| io_err(path, e))?;
        w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Header and row of the one-line CSV summary.
pub fn summary_csv(s: &RunSummary) -> String {
    let rmse = s.at_rmse.map(|r| r.to_string()).unwrap_or_else(|| "nan".into());
    format!(
        "variant,frames,tracked_frames,lost_frames,longest_lost_streak,at_rmse,time_offset,unmatched_poses,\
         max_occlusion_ratio,pixelwise_frames,mean_mask_time_s,true_static,false_static,true_dynamic,false_dynamic,unknown\n\
         {},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        s.variant,
        s.frames,
        s.tracked_frames,
        s.lost_frames,
        s.longest_lost_streak,
        rmse,
        s.time_offset,
        s.unmatched_poses,
        s.max_occlusion_ratio,
        s.pixelwise_frames,
        s.mean_mask_time_s,
        s.confusion.true_static,
        s.confusion.false_static,
        s.confusion.true_dynamic,
        s.confusion.false_dynamic,
        s.confusion.unknown,
    )
}

/// Writes the trajectory, per-frame and per-object records and the summary into `out`.
pub fn write_report(report: &RunReport, out: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let traj = out.join(TRAJECTORY_FILE);
    std::fs::write(&traj, report.trajectory.to_text()).map_err(|e| io_err(&traj, e))?;
    write_jsonl(&out.join(FRAMES_REPORT_FILE), &report.frames)?;
    write_jsonl(&out.join(OBJECTS_REPORT_FILE), &report.roc_records)?;
    let json = out.join(SUMMARY_JSON_FILE);
    let text = serde_json::to_string_pretty(&report.summary).map_err(|e| io_err(&json, e))?;
    std::fs::write(&json, text + "\n").map_err(|e| io_err(&json, e))?;
    let csv = out.join(SUMMARY_CSV_FILE);
    std::fs::write(&csv, summary_csv(&report.summary)).map_err(|e| io_err(&csv, e))
}

/// Loads a dataset directory, runs `variant` and writes the report into `out`.
pub fn run_experiment(
    dataset_path: &Path,
    variant: Variant,
    cfg: &ExperimentConfig,
    out: &Path,
) -> Result<RunReport, ExperimentError> {
    let dataset = import_dataset(dataset_path)?;
    let report = run_pipeline(&dataset, variant, cfg);
    write_report(&report, out)?;
    Ok(report)
}

/// Runs `variant` on `dataset` with a fixed centered occlusion of each ratio.
/// Ratios run in parallel; results keep the input order.
pub fn sweep_occlusion(
    dataset: &SimulatedDataset,
    ratios: &[f64],
    variant: Variant,
    cfg: &ExperimentConfig,
) -> Result<Vec<(f64, RunSummary)>, ExperimentError> {
    ratios
        .par_iter()
        .map(|&r| {
            let occluded = inject_fixed_occlusion(dataset, r)?;
            Ok((r, run_pipeline(&occluded, variant, cfg).summary))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate, Scenario, SimConfig};

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("BBox-Always".parse::<Variant>().unwrap(), Variant::BboxAlways);
    }

    #[test]
    fn variant_purity() {
        let cfg = SimConfig {
            frames: 18,
            ..SimConfig::new(Scenario::LargeOcclusion, 3)
        };
        let ds = simulate(&cfg).unwrap();
        let ec = ExperimentConfig::default();
        let bbox = run_pipeline(&ds, Variant::BboxAlways, &ec);
        assert!(bbox.frames.iter().all(|f| f.tier == MaskTier::BBox));
        let pix = run_pipeline(&ds, Variant::PixelwiseAlways, &ec);
        assert!(pix.frames.iter().all(|f| f.tier == MaskTier::PixelWise));
        let none = run_pipeline(&ds, Variant::NoMask, &ec);
        assert!(none.frames.iter().all(|f| f.mar == 0.0 && f.mask_cost_s == 0.0));
    }

    #[test]
    fn report_lists_every_frame_in_order() {
        let cfg = SimConfig {
            frames: 15,
            ..SimConfig::new(Scenario::Mixed, 4)
        };
        let ds = simulate(&cfg).unwrap();
        let rep = run_pipeline(&ds, Variant::Proposed, &ExperimentConfig::default());
        assert_eq!(rep.frames.len(), 15);
        for (i, f) in rep.frames.iter().enumerate() {
            assert_eq!(f.frame, i);
            assert_eq!(f.t, ds.frames[i].timestamp);
        }
        assert_eq!(rep.trajectory.len(), 15);
    }
}
