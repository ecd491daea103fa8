use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dynamask::dataset::{export_dataset, import_dataset, SimulatedDataset};
use dynamask::eval::{associate_and_align, roc_auc, sigma_sweep, sync_time_offset, RocRecord, Trajectory};
use dynamask::experiment::{run_pipeline, sweep_occlusion, write_report, ExperimentConfig, RunSummary, Variant};
use dynamask::masking::MarThreshold;
use dynamask::motion::{ref_lag_for_fps, ClassifierParams};
use dynamask::sim::{simulate, Scenario, SimConfig};
use dynamask::tracking::TrackingConfig;

/// Ground truth in the plain trajectory format, written next to the dataset for `eval`.
const GROUNDTRUTH_TRAJECTORY_FILE: &str = "groundtruth.txt";

#[derive(Parser)]
#[command(name = "dynamask", version, about = "Stereo ego-motion tracking under dynamic occlusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic stereo sequence with ground truth.
    Simulate(SimulateArgs),
    /// Track a dataset with one pipeline variant and write the reports.
    Run(RunArgs),
    /// Align an estimated trajectory to ground truth and report AT-RMSE.
    Eval(EvalArgs),
    /// ROC of the motion classifier over a sigma_bkg sweep.
    Roc(RocArgs),
    /// Track a dataset under centered occlusions of increasing size.
    SweepOcclusion(SweepArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to the scenario's length.
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long, default_value_t = 6.0)]
    fps: f64,
    #[arg(long = "noise-px", default_value_t = 0.3)]
    noise_px: f64,
    #[arg(long, default_value = "static")]
    scenario: Scenario,
    /// Area ratio of a fixed centered occluder added to every frame.
    #[arg(long = "target-occlusion")]
    target_occlusion: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrackingArgs {
    #[arg(long = "tau-mar", default_value_t = 0.5)]
    tau_mar: f64,
    #[arg(long = "sigma-bkg", default_value_t = 0.12)]
    sigma_bkg: f64,
    /// Reference lag in frames; defaults to a third of the dataset frame rate.
    #[arg(long = "ref-lag")]
    ref_lag: Option<usize>,
    /// Half-width of the clock-offset search in seconds; 0 trusts the timestamps.
    #[arg(long = "sync-window", default_value_t = 0.0)]
    sync_window: f64,
}

impl TrackingArgs {
    fn config(&self, fps: f64) -> Result<ExperimentConfig> {
        let base = TrackingConfig::<f64>::default();
        let lag = self.ref_lag.unwrap_or_else(|| ref_lag_for_fps(fps));
        let classifier = ClassifierParams::new(self.sigma_bkg, base.classifier.inlier_fraction, lag)?;
        Ok(ExperimentConfig {
            tracking: TrackingConfig {
                tau_mar: MarThreshold::new(self.tau_mar)?,
                classifier,
                ..base
            },
            sync_window: self.sync_window,
            ..ExperimentConfig::default()
        })
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "proposed")]
    variant: Variant,
    #[command(flatten)]
    tracking: TrackingArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    est: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Also estimate a global scale.
    #[arg(long = "with-scale")]
    with_scale: bool,
    #[arg(long = "sync-window", default_value_t = 0.0)]
    sync_window: f64,
    #[arg(long = "sync-step", default_value_t = 0.1)]
    sync_step: f64,
    /// Largest timestamp difference of an associated pair, seconds;
    /// defaults to half the median ground-truth frame spacing.
    #[arg(long = "max-gap")]
    max_gap: Option<f64>,
    /// Writes the result as JSON; otherwise it goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RocArgs {
    /// Object record files as written by `run`.
    #[arg(long, required = true, num_args = 1..)]
    records: Vec<PathBuf>,
    #[arg(long = "sigma-min", default_value_t = 0.0)]
    sigma_min: f64,
    #[arg(long = "sigma-max", default_value_t = 0.6)]
    sigma_max: f64,
    #[arg(long, default_value_t = 61)]
    steps: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7")]
    ratios: Vec<f64>,
    #[arg(long, default_value = "baseline_mask_all")]
    variant: Variant,
    #[command(flatten)]
    tracking: TrackingArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct EvalOutput {
    at_rmse: f64,
    scale: f64,
    time_offset: f64,
    pairs: usize,
    unmatched: usize,
    /// Aligning transform as `tx ty tz qx qy qz qw`.
    transform: [f64; 7],
}

#[derive(Serialize)]
struct SweepLine<'a> {
    ratio: f64,
    #[serde(flatten)]
    summary: &'a RunSummary,
}

fn load(dir: &Path) -> Result<SimulatedDataset> {
    import_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn simulate_cmd(a: &SimulateArgs) -> Result<()> {
    let mut cfg = SimConfig::new(a.scenario, a.seed);
    if let Some(n) = a.frames {
        cfg.frames = n;
    }
    cfg.fps = a.fps;
    cfg.pixel_noise_sigma = a.noise_px;
    cfg.target_occlusion = a.target_occlusion;
    let ds = simulate(&cfg)?;
    export_dataset(&ds, &a.out)?;
    let gt = Trajectory::new(ds.groundtruth_poses())?;
    gt.write(&a.out.join(GROUNDTRUTH_TRAJECTORY_FILE))?;
    println!("wrote {} frames of {} to {}", ds.frames.len(), a.scenario, a.out.display());
    Ok(())
}

fn print_summary(s: &RunSummary) {
    let rmse = s.at_rmse.map_or_else(|| "n/a".to_string(), |r| format!("{r:.6}"));
    println!(
        "{}: at_rmse={rmse} lost={}/{} mean_mask_time_s={:.4}",
        s.variant, s.lost_frames, s.frames, s.mean_mask_time_s
    );
}

fn run_cmd(a: &RunArgs) -> Result<()> {
    let ds = load(&a.dataset)?;
    let cfg = a.tracking.config(ds.meta.fps)?;
    let report = run_pipeline(&ds, a.variant, &cfg);
    write_report(&report, &a.out)?;
    print_summary(&report.summary);
    Ok(())
}

fn half_median_spacing(traj: &Trajectory<f64>) -> Option<f64> {
    let t: Vec<f64> = traj.timestamps().collect();
    let mut dt: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    if dt.is_empty() {
        return None;
    }
    dt.sort_by(f64::total_cmp);
    Some(dt[dt.len() / 2] / 2.0)
}

fn eval_cmd(a: &EvalArgs) -> Result<()> {
    let est = Trajectory::<f64>::read(&a.est)?;
    let gt = Trajectory::<f64>::read(&a.gt)?;
    let max_gap = match a.max_gap {
        Some(g) => g,
        None => half_median_spacing(&gt).context("ground truth needs at least two poses")?,
    };
    let time_offset = if a.sync_window > 0.0 {
        sync_time_offset(&est, &gt, a.sync_window, a.sync_step, max_gap)?
    } else {
        0.0
    };
    let (res, unmatched) = associate_and_align(&est, &gt.shifted(time_offset), max_gap, a.with_scale)?;
    let t = res.transform.translation;
    let q = res.transform.quaternion();
    let out = EvalOutput {
        at_rmse: res.at_rmse,
        scale: res.scale,
        time_offset,
        pairs: res.per_pose_errors.len(),
        unmatched,
        transform: [t.x, t.y, t.z, q[0], q[1], q[2], q[3]],
    };
    write_or_print(a.out.as_deref(), &(serde_json::to_string_pretty(&out)? + "\n"))
}

fn roc_cmd(a: &RocArgs) -> Result<()> {
    let mut records = Vec::new();
    for path in &a.records {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let r: RocRecord = serde_json::from_str(line)
                .with_context(|| format!("{}:{}: malformed record", path.display(), i + 1))?;
            records.push(r);
        }
    }
    if !(a.sigma_max >= a.sigma_min) || a.steps == 0 {
        bail!("empty sigma sweep [{}, {}] with {} steps", a.sigma_min, a.sigma_max, a.steps);
    }
    let curve = roc_auc(&records, &sigma_sweep(a.sigma_min, a.sigma_max, a.steps), &ClassifierParams::<f64>::default())?;
    match &a.out {
        Some(p) => {
            fs::write(p, serde_json::to_string_pretty(&curve)? + "\n").with_context(|| format!("writing {}", p.display()))?;
            println!("auc={:.6} records={}", curve.auc, records.len());
        }
        None => println!("{}", serde_json::to_string_pretty(&curve)?),
    }
    Ok(())
}

fn sweep_cmd(a: &SweepArgs) -> Result<()> {
    let ds = load(&a.dataset)?;
    let cfg = a.tracking.config(ds.meta.fps)?;
    let results = sweep_occlusion(&ds, &a.ratios, a.variant, &cfg)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut jsonl = String::new();
    let mut csv = String::from("ratio,at_rmse,lost_frames,frames\n");
    for (ratio, s) in &results {
        jsonl += &(serde_json::to_string(&SweepLine { ratio: *ratio, summary: s })? + "\n");
        let rmse = s.at_rmse.map_or_else(|| "nan".to_string(), |r| r.to_string());
        csv += &format!("{ratio},{rmse},{},{}\n", s.lost_frames, s.frames);
        println!("ratio={ratio} at_rmse={rmse} lost={}", s.lost_frames);
    }
    let p = a.out.join("sweep.jsonl");
    fs::write(&p, jsonl).with_context(|| format!("writing {}", p.display()))?;
    let p = a.out.join("sweep.csv");
    fs::write(&p, csv).with_context(|| format!("writing {}", p.display()))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate_cmd(a),
        Command::Run(a) => run_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Roc(a) => roc_cmd(a),
        Command::SweepOcclusion(a) => sweep_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
