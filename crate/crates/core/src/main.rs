use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use kpsample::config::{RunConfig, Sampling};
use kpsample::evaluation::{ape, EvaluationConfig};
use kpsample::ingest::{load_trajectory, Dataset};
use kpsample::pipeline::{
    compare, comparison_csv, comparison_text, run, summary_text, write_report, ComparisonRow, RunReport,
};
use kpsample::synth::{make_dataset, Scenario, SynthSpec};
use kpsample::tracking::builtin_combinations;
use kpsample::{Error, Result};

#[derive(Parser)]
#[command(name = "kpsample", version, about = "Keypoint-guided lidar point sampling and odometry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset.
    Synth {
        #[arg(long, default_value = "room")]
        scenario: String,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Metres per frame; scenario default when omitted.
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the pipeline over a dataset and write reports.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        combination: Option<String>,
        /// Register every valid point instead of sampled ones.
        #[arg(long)]
        full: bool,
        /// One run per combination plus a comparison table.
        #[arg(long, conflicts_with_all = ["combination", "full"])]
        all_combinations: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        /// `section.key=value`, repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Absolute pose error between two TUM trajectories.
    Eval {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        no_align: bool,
        #[arg(long, default_value_t = 0.02)]
        max_dt: f64,
        /// Row label in the emitted table.
        #[arg(long, default_value = "est")]
        name: String,
        /// Mean points per frame to show next to the errors.
        #[arg(long)]
        points: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge report.json files into one table.
    Compare {
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a dataset manifest summary.
    Inspect { dataset: PathBuf },
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn emit_table(rows: &[ComparisonRow], out: Option<&Path>) -> Result<()> {
    let rows = compare(rows);
    print!("{}", comparison_text(&rows));
    if let Some(dir) = out {
        write(&dir.join("comparison.csv"), &comparison_csv(&rows))?;
        write(&dir.join("comparison.txt"), &comparison_text(&rows))?;
    }
    Ok(())
}

fn run_one(cfg: &RunConfig, out: Option<&Path>) -> Result<RunReport> {
    let report = run(cfg)?;
    print!("{}", summary_text(&report));
    if let Some(dir) = out {
        write_report(&report, dir)?;
    }
    Ok(report)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            scenario,
            frames,
            seed,
            step,
            out,
        } => {
            let scenario = Scenario::parse(&scenario)?;
            let mut spec = SynthSpec::new(scenario, frames, seed);
            if let Some(step) = step {
                spec.step = step;
            }
            let gt = make_dataset(&spec, &out)?;
            println!(
                "wrote {} frames of `{}` to {} (path length {:.3} m)",
                frames,
                scenario.name(),
                out.display(),
                gt.path_length()
            );
        }
        Command::Run {
            config,
            dataset,
            combination,
            full,
            all_combinations,
            out,
            overrides,
        } => {
            let mut cfg = match &config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            }
            .with_overrides(&overrides)?;
            if let Some(d) = dataset {
                cfg.pipeline.dataset = d;
            }
            if let Some(c) = combination {
                cfg.pipeline.combination = c;
            }
            if full {
                cfg.pipeline.sampling = Sampling::Full;
            }
            if let Some(o) = out {
                cfg.pipeline.output = Some(o);
            }
            let out = cfg.pipeline.output.clone();
            if all_combinations {
                let mut rows = Vec::new();
                for comb in builtin_combinations() {
                    let mut c = cfg.clone();
                    c.pipeline.combination = comb.name.to_string();
                    c.pipeline.sampling = Sampling::Keypoints;
                    let dir = out.as_ref().map(|o| o.join(comb.name));
                    rows.push(ComparisonRow::from_report(&run_one(&c, dir.as_deref())?));
                }
                emit_table(&rows, out.as_deref())?;
            } else {
                run_one(&cfg, out.as_deref())?;
            }
        }
        Command::Eval {
            est,
            gt,
            no_align,
            max_dt,
            name,
            points,
            out,
        } => {
            let cfg = EvaluationConfig {
                align: !no_align,
                max_dt,
            };
            cfg.validate()?;
            let report = ape(&load_trajectory(&est)?, &load_trajectory(&gt)?, &cfg)?;
            let row = ComparisonRow::new(&name, Some(&report), points);
            emit_table(&[row], out.as_deref())?;
        }
        Command::Compare { reports, out } => {
            if reports.is_empty() {
                return Err(Error::InvalidArgument("no reports given".into()));
            }
            let mut rows = Vec::new();
            for path in &reports {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                let report: RunReport = serde_json::from_str(&text)?;
                rows.push(ComparisonRow::from_report(&report));
            }
            emit_table(&rows, out.as_deref())?;
        }
        Command::Inspect { dataset } => {
            let ds = Dataset::open(&dataset)?;
            let m = ds.manifest();
            println!("sensor: {}", m.sensor);
            println!("frames: {}", m.frame_count);
            println!("image: {}x{}", m.width, m.height);
            println!("range unit: {} m", m.range_unit_m);
            if let (Some(first), Some(last)) = (m.frames.first(), m.frames.last()) {
                println!("time span: {} .. {} s", first.timestamp, last.timestamp);
            }
            match ds.ground_truth()? {
                Some(gt) => println!("ground truth: {} poses, path {:.3} m", gt.len(), gt.path_length()),
                None => println!("ground truth: none"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
