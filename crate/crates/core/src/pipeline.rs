//! End-to-end run over a dataset: preprocess, build variants, detect,
//! track, sample, register, evaluate.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Sampling};
use crate::enhance::{build_variants, Enhancer};
use crate::error::{Error, Result};
use crate::evaluation::{ape, format_cell, ErrorReport, PointStats};
use crate::features::{detect, Detections};
use crate::ingest::{format_tum, Dataset};
use crate::odometry::Odometry;
use crate::tracking::{find_combination, sample, SampledCloud, TrackState};
use crate::types::{LidarFrame, Pose, Trajectory, VariantKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    pub timestamp: f64,
    pub valid_points: usize,
    pub sampled_points: usize,
    /// Matched keypoints per variant, in combination order.
    pub per_variant: Vec<(VariantKind, usize)>,
    pub iterations: usize,
    pub correspondences: usize,
    pub threshold: f64,
    pub degenerate: bool,
}

/// Wall-clock seconds per stage. Kept out of the deterministic report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameTiming {
    pub load: f64,
    pub variants: f64,
    pub detect: f64,
    pub sample: f64,
    pub register: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Combination name, or `full` for the full-cloud baseline.
    pub name: String,
    pub config: RunConfig,
    #[serde(skip)]
    pub trajectory: Trajectory,
    pub frames: Vec<FrameRecord>,
    #[serde(skip)]
    pub timings: Vec<FrameTiming>,
    pub points: PointStats,
    pub evaluation: Option<ErrorReport>,
}

impl RunReport {
    pub fn mean_points(&self) -> f64 {
        self.points.mean
    }

    pub fn total_seconds(&self) -> f64 {
        self.timings
            .iter()
            .map(|t| t.load + t.variants + t.detect + t.sample + t.register)
            .sum()
    }
}

/// Per-frame state of a keypoint-sampled or full-cloud run.
pub struct FrameProcessor {
    cfg: RunConfig,
    enhancer: Enhancer,
    odometry: Odometry,
    tracks: TrackState,
}

pub struct ProcessedFrame {
    pub pose: Pose,
    pub record: FrameRecord,
    pub timing: FrameTiming,
}

impl FrameProcessor {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg: cfg.clone(),
            enhancer: Enhancer::from_config(&cfg.enhance)?,
            odometry: Odometry::new(cfg.odometry.clone())?,
            tracks: TrackState::new(),
        })
    }

    pub fn name(&self) -> String {
        match self.cfg.pipeline.sampling {
            Sampling::Keypoints => self.cfg.pipeline.combination.clone(),
            Sampling::Full => "full".into(),
        }
    }

    /// Samples `frame` and registers it. Errors carry the frame index and
    /// the stage that failed.
    pub fn process(&mut self, index: usize, frame: &LidarFrame) -> Result<ProcessedFrame> {
        let mut timing = FrameTiming::default();
        let cloud = match self.cfg.pipeline.sampling {
            Sampling::Full => {
                let t = Instant::now();
                let c = SampledCloud::full(frame);
                timing.sample = t.elapsed().as_secs_f64();
                c
            }
            Sampling::Keypoints => {
                let combination =
                    find_combination(&self.cfg.pipeline.combination).map_err(|e| e.at_stage(index, "config"))?;
                let t = Instant::now();
                let variants = build_variants(
                    frame,
                    &combination.kinds(),
                    &self.enhancer,
                    &self.cfg.preprocess,
                    self.cfg.pipeline.normalize_percentile,
                )
                .map_err(|e| e.at_stage(index, "variants"))?;
                timing.variants = t.elapsed().as_secs_f64();

                let t = Instant::now();
                let detections: Vec<Detections> = variants
                    .iter()
                    .map(|v| detect(v, &self.cfg.features))
                    .collect::<Result<_>>()
                    .map_err(|e| e.at_stage(index, "detect"))?;
                timing.detect = t.elapsed().as_secs_f64();

                let t = Instant::now();
                let c = sample(frame, combination, &variants, &detections, &mut self.tracks, &self.cfg.tracking)
                    .map_err(|e| e.at_stage(index, "sample"))?;
                timing.sample = t.elapsed().as_secs_f64();
                c
            }
        };

        let t = Instant::now();
        let odo = self
            .odometry
            .process(&cloud.points)
            .map_err(|e| e.at_stage(index, "register"))?;
        timing.register = t.elapsed().as_secs_f64();

        Ok(ProcessedFrame {
            pose: Pose::new(frame.timestamp, odo.pose),
            record: FrameRecord {
                index,
                timestamp: frame.timestamp,
                valid_points: frame.cloud.valid_count(),
                sampled_points: cloud.len(),
                per_variant: cloud.per_variant,
                iterations: odo.iterations,
                correspondences: odo.correspondences,
                threshold: odo.threshold,
                degenerate: odo.degenerate,
            },
            timing,
        })
    }
}

/// Runs the configured pipeline over every frame of the dataset.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    let dataset = Dataset::open(&cfg.pipeline.dataset)?;
    let gt = dataset.ground_truth()?;
    run_frames(cfg, dataset.len(), |i| dataset.load_frame(i), gt.as_ref())
}

/// Runs over frames supplied by `load`, e.g. rendered in memory.
pub fn run_frames(
    cfg: &RunConfig,
    count: usize,
    mut load: impl FnMut(usize) -> Result<LidarFrame>,
    ground_truth: Option<&Trajectory>,
) -> Result<RunReport> {
    let mut processor = FrameProcessor::new(cfg)?;
    let mut poses = Vec::with_capacity(count);
    let mut frames = Vec::with_capacity(count);
    let mut timings = Vec::with_capacity(count);
    for index in 0..count {
        let t = Instant::now();
        let frame = load(index).map_err(|e| e.at_stage(index, "load"))?;
        let load_time = t.elapsed().as_secs_f64();
        let out = processor.process(index, &frame)?;
        poses.push(out.pose);
        frames.push(out.record);
        timings.push(FrameTiming {
            load: load_time,
            ..out.timing
        });
    }
    let trajectory = Trajectory::new(poses)?;
    let points = PointStats::of(frames.iter().map(|f| f.sampled_points).collect());
    let evaluation = ground_truth
        .map(|gt| {
            ape(&trajectory, gt, &cfg.evaluation).map(|mut r| {
                r.points = Some(points.clone());
                r
            })
        })
        .transpose()?;
    Ok(RunReport {
        name: processor.name(),
        config: cfg.clone(),
        trajectory,
        frames,
        timings,
        points,
        evaluation,
    })
}

pub fn frames_csv(report: &RunReport) -> String {
    let mut out = String::from(
        "frame,timestamp,valid_points,sampled_points,iterations,correspondences,threshold,degenerate,per_variant\n",
    );
    for f in &report.frames {
        let per_variant = f
            .per_variant
            .iter()
            .map(|(k, n)| format!("{k}:{n}"))
            .collect::<Vec<_>>()
            .join(";");
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            f.index,
            f.timestamp,
            f.valid_points,
            f.sampled_points,
            f.iterations,
            f.correspondences,
            f.threshold,
            f.degenerate,
            per_variant
        )
        .unwrap();
    }
    out
}

pub fn timing_csv(report: &RunReport) -> String {
    let mut out = String::from("frame,load_s,variants_s,detect_s,sample_s,register_s\n");
    for (i, t) in report.timings.iter().enumerate() {
        writeln!(
            out,
            "{i},{:.6},{:.6},{:.6},{:.6},{:.6}",
            t.load, t.variants, t.detect, t.sample, t.register
        )
        .unwrap();
    }
    out
}

pub fn summary_text(report: &RunReport) -> String {
    let mut out = String::new();
    let degenerate = report.frames.iter().filter(|f| f.degenerate).count();
    writeln!(out, "run: {}", report.name).unwrap();
    writeln!(out, "frames: {}", report.frames.len()).unwrap();
    writeln!(
        out,
        "points/frame: mean {:.1}, min {}, max {}",
        report.points.mean, report.points.min, report.points.max
    )
    .unwrap();
    writeln!(out, "degenerate frames: {degenerate}").unwrap();
    match &report.evaluation {
        Some(e) => {
            writeln!(out, "alignment: {}", if e.aligned { "se3" } else { "none" }).unwrap();
            writeln!(out, "pose pairs: {}", e.pairs).unwrap();
            writeln!(out, "trans mean/rmse (m), rot mean (deg): {}", e.table_cell()).unwrap();
        }
        None => writeln!(out, "evaluation: absent (no ground truth)").unwrap(),
    }
    out
}

/// Writes trajectory, reports, timings and the config snapshot into `dir`.
pub fn write_report(report: &RunReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        ("trajectory.tum", format_tum(&report.trajectory)),
        ("report.csv", frames_csv(report)),
        ("report.txt", summary_text(report)),
        ("report.json", serde_json::to_string_pretty(report)? + "\n"),
        ("timing.csv", timing_csv(report)),
        ("config.toml", report.config.to_toml()),
    ];
    for (name, text) in files {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// One row of the merged accuracy / point-count table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub trans_mean: Option<f64>,
    pub trans_rmse: Option<f64>,
    pub rot_mean: Option<f64>,
    pub mean_points: Option<f64>,
}

impl ComparisonRow {
    pub fn from_report(report: &RunReport) -> Self {
        Self::new(&report.name, report.evaluation.as_ref(), Some(report.points.mean))
    }

    pub fn new(name: &str, eval: Option<&ErrorReport>, mean_points: Option<f64>) -> Self {
        Self {
            name: name.to_string(),
            trans_mean: eval.map(|e| e.translation.mean),
            trans_rmse: eval.map(|e| e.translation.rmse),
            rot_mean: eval.map(|e| e.rotation.mean),
            mean_points,
        }
    }

    pub fn cell(&self) -> String {
        match (self.trans_mean, self.trans_rmse, self.rot_mean) {
            (Some(m), Some(r), Some(a)) => format_cell(m, r, a),
            _ => "-".into(),
        }
    }
}

/// Rows sorted by name.
pub fn compare(rows: &[ComparisonRow]) -> Vec<ComparisonRow> {
    let mut rows = rows.to_vec();
    rows.sort_by(|a, b| a.name.cmp(&b.name));
    rows
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
    let mut out = String::from("name,trans_mean_m,trans_rmse_m,rot_mean_deg,mean_points\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.name,
            opt(r.trans_mean),
            opt(r.trans_rmse),
            opt(r.rot_mean),
            r.mean_points.map_or(String::new(), |p| format!("{p:.1}"))
        )
        .unwrap();
    }
    out
}

pub fn comparison_text(rows: &[ComparisonRow]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    let mut out = format!("{:<width$}  {:<24}  {:>8}\n", "name", "(mean/rmse, rot)", "pts");
    for r in rows {
        let pts = r.mean_points.map_or("-".to_string(), |p| format!("{p:.0}"));
        writeln!(out, "{:<width$}  {:<24}  {:>8}", r.name, r.cell(), pts).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(name: &str, m: f64) -> ComparisonRow {
        ComparisonRow {
            name: name.into(),
            trans_mean: Some(m),
            trans_rmse: Some(m + 0.005),
            rot_mean: Some(0.721),
            mean_points: Some(1149.0),
        }
    }

    #[test]
    fn comparison_sorted_and_formatted() {
        let rows = compare(&[row("comb_3", 0.045), row("comb_0", 0.1)]);
        assert_eq!(rows[0].name, "comb_0");
        assert_eq!(rows[1].cell(), "(0.045/0.050, 0.721)");
        let text = comparison_text(&rows);
        assert_eq!(text.lines().count(), 3);
        assert!(text.contains("1149"));
        assert_eq!(comparison_csv(&rows[..1]).lines().count(), 2);
    }

    #[test]
    fn missing_evaluation_renders_dash() {
        let r = ComparisonRow::new("full", None, None);
        assert_eq!(r.cell(), "-");
    }
}
