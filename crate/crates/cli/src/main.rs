use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use sfd_core::detection::{ObjectnessKind, THRESHOLD_GRID};
use sfd_core::fusion::{BackgroundMode, FusionConfig, OverlapMode};
use sfd_core::mask::DEFAULT_MIN_AREA_FRACTION;
use sfd_core::metrics::{DEFAULT_BETA, DEFAULT_MATCH_IOU};
use sfd_core::pipeline::annotations::UnknownLabels;
use sfd_core::pipeline::fixtures::{synthetic_fixture, FixtureVariant};
use sfd_core::pipeline::records::{format_detections, write_detections};
use sfd_core::pipeline::{
    dump_detections, fuse_detections, postprocess_masks, run_pipeline, threshold_sweep, Dataset, ImageIssue, RunConfig,
    Stages,
};

const EXIT_INVALID: u8 = 1;
const EXIT_PARTIAL: u8 = 2;

/// Fuses detector boxes with binary food masks and evaluates the result.
#[derive(Debug, Parser)]
#[command(name = "sfd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract food regions (contour, box, area) from every mask in a directory.
    SegmentPostproc {
        #[arg(long, value_name = "DIR")]
        masks: PathBuf,
        #[arg(long, value_name = "R", default_value_t = DEFAULT_MIN_AREA_FRACTION)]
        min_region_frac: f64,
        #[arg(long, value_name = "N", default_value_t = 0)]
        jobs: usize,
        /// JSON output; stdout if omitted.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Fuse a detection file with masks and write the surviving detections.
    Fuse {
        #[arg(long, value_name = "DIR")]
        masks: PathBuf,
        #[arg(long, value_name = "FILE")]
        detections: PathBuf,
        #[command(flatten)]
        fusion: FusionArgs,
        #[arg(long, value_name = "N", default_value_t = 0)]
        jobs: usize,
        /// Detection records; stdout if omitted.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Evaluate detections as given (confidence threshold only) against annotations.
    Evaluate(RunArgs),
    /// Fuse and evaluate a whole dataset.
    Pipeline(RunArgs),
    /// Evaluate detector and fused output at several confidence thresholds.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated thresholds; defaults to 1/65,1/32,1/16,1/8,1/4,1/2.
        #[arg(long, value_name = "LIST", value_delimiter = ',')]
        thresholds: Vec<f64>,
    },
    /// Write the synthetic three-tray dataset.
    Fixtures {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Give one detection the wrong class.
        #[arg(long)]
        corrupted: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NmsModeArg {
    #[value(name = "self")]
    SelfArea,
    Union,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BkgModeArg {
    Product,
    Max,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ObjectnessArg {
    Logit,
    Prob,
}

#[derive(Debug, Args)]
struct FusionArgs {
    #[arg(long, value_name = "R", default_value_t = FusionConfig::default().confidence_threshold)]
    conf_thresh: f64,
    #[arg(long, value_name = "R", default_value_t = FusionConfig::default().background_threshold)]
    bkg_thresh: f64,
    #[arg(long, value_name = "R", default_value_t = FusionConfig::default().nms_overlap)]
    nms_thresh: f64,
    #[arg(long, value_enum, default_value = "self")]
    nms_mode: NmsModeArg,
    #[arg(long, value_enum, default_value = "product")]
    bkg_mode: BkgModeArg,
    #[arg(long, value_name = "R", default_value_t = DEFAULT_MIN_AREA_FRACTION)]
    min_region_frac: f64,
    /// Whether the objectness column holds logits or probabilities.
    #[arg(long = "t-o", value_enum, default_value = "prob")]
    objectness: ObjectnessArg,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, value_name = "DIR")]
    masks: PathBuf,
    #[arg(long, value_name = "FILE")]
    detections: PathBuf,
    #[arg(long, value_name = "FILE")]
    annotations: PathBuf,
    #[arg(long, value_name = "FILE")]
    labels: PathBuf,
    #[command(flatten)]
    fusion: FusionArgs,
    #[arg(long, value_name = "R", default_value_t = DEFAULT_MATCH_IOU)]
    match_iou: f64,
    #[arg(long, value_name = "R", default_value_t = DEFAULT_BETA)]
    beta: f64,
    /// Map labels missing from the label map to one reserved class instead of failing.
    #[arg(long)]
    allow_unknown_labels: bool,
    #[arg(long, value_name = "N", default_value_t = 0)]
    jobs: usize,
    /// Write one detection file per image into this directory.
    #[arg(long, value_name = "DIR")]
    dump_detections: Option<PathBuf>,
    /// JSON report; stdout if omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

impl FusionArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        cfg.fusion = FusionConfig {
            confidence_threshold: self.conf_thresh,
            background_threshold: self.bkg_thresh,
            nms_overlap: self.nms_thresh,
            nms_mode: match self.nms_mode {
                NmsModeArg::SelfArea => OverlapMode::SelfArea,
                NmsModeArg::Union => OverlapMode::Union,
            },
            background_mode: match self.bkg_mode {
                BkgModeArg::Product => BackgroundMode::Product,
                BkgModeArg::Max => BackgroundMode::Max,
            },
        };
        cfg.min_area_fraction = self.min_region_frac;
        cfg.objectness = match self.objectness {
            ObjectnessArg::Logit => ObjectnessKind::Logit,
            ObjectnessArg::Prob => ObjectnessKind::Probability,
        };
    }
}

impl RunArgs {
    fn config(&self, stages: Stages) -> RunConfig {
        let mut cfg = RunConfig {
            match_iou: self.match_iou,
            beta: self.beta,
            unknown_labels: if self.allow_unknown_labels {
                UnknownLabels::MapToReserved
            } else {
                UnknownLabels::Reject
            },
            stages,
            jobs: self.jobs,
            masks_dir: self.masks.clone(),
            detections: self.detections.clone(),
            annotations: self.annotations.clone(),
            labels: self.labels.clone(),
            ..RunConfig::default()
        };
        self.fusion.apply(&mut cfg);
        cfg
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => match std::io::stdout().lock().write_all(text.as_bytes()) {
            Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(e).context("writing to stdout"),
            _ => Ok(()),
        },
    }
}

fn finish(issues: &[ImageIssue]) -> u8 {
    for issue in issues {
        eprintln!("warning: {}: {}", issue.image_id, issue.reason);
    }
    if issues.is_empty() {
        0
    } else {
        eprintln!("{} image(s) skipped", issues.len());
        EXIT_PARTIAL
    }
}

fn run_and_report(args: &RunArgs, stages: Stages) -> Result<u8> {
    let cfg = args.config(stages);
    let out = run_pipeline(&cfg)?;
    emit(&out.report.to_json(), args.out.as_deref())?;
    if let Some(dir) = &args.dump_detections {
        let classes = out.detections.values().flatten().map(|d| d.class_id + 1).max().unwrap_or(1);
        dump_detections(&out.detections, classes, dir)?;
    }
    Ok(finish(&out.report.issues))
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::SegmentPostproc { masks, min_region_frac, jobs, out } => {
            let regions = postprocess_masks(&masks, min_region_frac, jobs)?;
            let json = serde_json::to_string_pretty(&regions.regions)? + "\n";
            emit(&json, out.as_deref())?;
            Ok(finish(&regions.issues))
        }
        Command::Fuse { masks, detections, fusion, jobs, out } => {
            let mut cfg = RunConfig { masks_dir: masks, detections, jobs, ..RunConfig::default() };
            fusion.apply(&mut cfg);
            let fused = fuse_detections(&cfg)?;
            match out.as_deref() {
                Some(path) => write_detections(&fused.detections, fused.num_classes, path)?,
                None => emit(&format_detections(&fused.detections, fused.num_classes)?, None)?,
            }
            Ok(finish(&fused.issues))
        }
        Command::Evaluate(args) => run_and_report(&args, Stages::DetectorOnly),
        Command::Pipeline(args) => run_and_report(&args, Stages::Fused),
        Command::Sweep { run, thresholds } => {
            let cfg = run.config(Stages::Fused);
            cfg.validate()?;
            let dataset = Dataset::load(&cfg)?;
            let grid = if thresholds.is_empty() { THRESHOLD_GRID.to_vec() } else { thresholds };
            let report = threshold_sweep(&dataset, &cfg, &grid)?;
            emit(&report.to_json(), run.out.as_deref())?;
            Ok(finish(&report.issues))
        }
        Command::Fixtures { out, corrupted } => {
            let variant = if corrupted { FixtureVariant::CorruptedLabel } else { FixtureVariant::Clean };
            let paths = synthetic_fixture(variant).write(&out)?;
            println!(
                "--masks {} --detections {} --annotations {} --labels {}",
                paths.masks_dir.display(),
                paths.detections.display(),
                paths.annotations.display(),
                paths.labels.display()
            );
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}
