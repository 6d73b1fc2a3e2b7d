//! End-to-end runs over a dataset: file formats, configuration, per-image
//! fusion and evaluation, threshold sweeps and report output.
//!
//! A dataset is a directory of binary masks (`<image id>.pgm`), one detection
//! record file, one annotation document and one label map. Images are
//! evaluated independently, possibly on several worker threads, and folded
//! into the report in image-id order, so the output does not depend on the
//! number of workers.

pub mod annotations;
pub mod fixtures;
pub mod pgm;
pub mod raster;
pub mod records;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{
    confidence_score, filter_by_threshold, Detection, ObjectnessKind, RawDetection, THRESHOLD_GRID,
};
use crate::fusion::{fuse_scored, BackgroundMode, FusionConfig, OverlapMode, SegmentationEvidence};
use crate::mask::{connected_components, extract_regions, BinaryMask, MaskError, Region, DEFAULT_MIN_AREA_FRACTION};
use crate::metrics::{
    match_detections, rates_from_counts, tray_accuracy, ClassTally, EvalAccumulator, EvalReport, MatchResult,
    MetricsError, SegmentationScores, DEFAULT_BETA, DEFAULT_MATCH_IOU,
};

use annotations::{read_annotations, AnnotationError, LabelMap, TrayAnnotation, UnknownLabels};
use fixtures::Fixture;
use pgm::{read_mask, PgmError};
use raster::ground_truth_regions;
use records::{read_detections, DetectionsByImage, RecordError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Pgm { source: PgmError },
    #[error("annotations: {0}")]
    Annotations(#[from] AnnotationError),
    #[error("detections: {0}")]
    Records(#[from] RecordError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Which post-processing runs on the scored detections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stages {
    /// Threshold, background removal and NMS.
    #[default]
    Fused,
    /// Threshold only: the detector output as given.
    DetectorOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub fusion: FusionConfig,
    pub min_area_fraction: f64,
    pub match_iou: f64,
    pub beta: f64,
    pub objectness: ObjectnessKind,
    pub unknown_labels: UnknownLabels,
    pub stages: Stages,
    /// Worker threads; 0 picks one per core.
    pub jobs: usize,
    pub masks_dir: PathBuf,
    pub detections: PathBuf,
    pub annotations: PathBuf,
    pub labels: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            fusion: FusionConfig::default(),
            min_area_fraction: DEFAULT_MIN_AREA_FRACTION,
            match_iou: DEFAULT_MATCH_IOU,
            beta: DEFAULT_BETA,
            objectness: ObjectnessKind::Probability,
            unknown_labels: UnknownLabels::Reject,
            stages: Stages::Fused,
            jobs: 0,
            masks_dir: PathBuf::from("masks"),
            detections: PathBuf::from("detections.txt"),
            annotations: PathBuf::from("annotations.json"),
            labels: PathBuf::from("labels.txt"),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let unit = [
            ("confidence threshold", self.fusion.confidence_threshold),
            ("background threshold", self.fusion.background_threshold),
            ("NMS overlap", self.fusion.nms_overlap),
            ("minimum region fraction", self.min_area_fraction),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(PipelineError::InvalidConfig(format!("{name} {v} is outside [0, 1]")));
            }
        }
        if self.min_area_fraction >= 1.0 {
            return Err(PipelineError::InvalidConfig("minimum region fraction must be below 1".into()));
        }
        if !(self.match_iou > 0.0 && self.match_iou <= 1.0) {
            return Err(PipelineError::InvalidConfig(format!("matching IoU {} is outside (0, 1]", self.match_iou)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(PipelineError::InvalidConfig(format!("beta {} must be positive", self.beta)));
        }
        Ok(())
    }

    fn settings(&self) -> ReportSettings {
        ReportSettings {
            stages: self.stages,
            confidence_threshold: self.fusion.confidence_threshold,
            background_threshold: self.fusion.background_threshold,
            background_mode: self.fusion.background_mode,
            nms_overlap: self.fusion.nms_overlap,
            nms_mode: self.fusion.nms_mode,
            min_area_fraction: self.min_area_fraction,
            match_iou: self.match_iou,
            objectness: self.objectness,
        }
    }
}

/// Parameters echoed in the report. Paths and worker count are left out so
/// reports of the same data compare equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSettings {
    pub stages: Stages,
    pub confidence_threshold: f64,
    pub background_threshold: f64,
    pub background_mode: BackgroundMode,
    pub nms_overlap: f64,
    pub nms_mode: OverlapMode,
    pub min_area_fraction: f64,
    pub match_iou: f64,
    pub objectness: ObjectnessKind,
}

/// An image that could not be evaluated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageIssue {
    pub image_id: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
enum MaskSource {
    Directory(PathBuf),
    Memory(BTreeMap<String, BinaryMask>),
}

/// Annotations and detections of a dataset; masks are read per image on demand.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub labels: LabelMap,
    /// Sorted by image id.
    pub annotations: Vec<TrayAnnotation>,
    pub detections: DetectionsByImage,
    masks: MaskSource,
    /// Detections for images that have no annotation.
    pub unpaired: Vec<ImageIssue>,
}

impl Dataset {
    pub fn load(cfg: &RunConfig) -> Result<Self, PipelineError> {
        let labels = LabelMap::read(&cfg.labels)?;
        let annotations = read_annotations(&cfg.annotations, &labels, cfg.unknown_labels)?;
        let detections = read_detections(&cfg.detections, cfg.objectness)?;
        Ok(Self::assemble(labels, annotations, detections, MaskSource::Directory(cfg.masks_dir.clone())))
    }

    pub fn from_fixture(fixture: &Fixture, unknown: UnknownLabels) -> Result<Self, PipelineError> {
        let annotations = fixture.annotations.validate(&fixture.labels, unknown)?;
        Ok(Self::assemble(
            fixture.labels.clone(),
            annotations,
            fixture.detections.clone(),
            MaskSource::Memory(fixture.masks.clone()),
        ))
    }

    fn assemble(
        labels: LabelMap,
        mut annotations: Vec<TrayAnnotation>,
        detections: DetectionsByImage,
        masks: MaskSource,
    ) -> Self {
        annotations.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        let unpaired = detections
            .keys()
            .filter(|id| annotations.binary_search_by(|a| a.image_id.as_str().cmp(id)).is_err())
            .map(|id| ImageIssue { image_id: id.clone(), reason: "detections without annotation".into() })
            .collect();
        Self { labels, annotations, detections, masks, unpaired }
    }

    pub fn mask_path(dir: &Path, image_id: &str) -> PathBuf {
        dir.join(format!("{image_id}.pgm"))
    }

    fn mask_for(&self, ann: &TrayAnnotation) -> Result<BinaryMask, String> {
        let mask = match &self.masks {
            MaskSource::Directory(dir) => load_mask(&Self::mask_path(dir, &ann.image_id))?,
            MaskSource::Memory(masks) => masks.get(&ann.image_id).cloned().ok_or("no mask for image")?,
        };
        if (mask.width(), mask.height()) != (ann.width, ann.height) {
            return Err(format!(
                "mask is {}x{} but the annotation says {}x{}",
                mask.width(),
                mask.height(),
                ann.width,
                ann.height
            ));
        }
        Ok(mask)
    }

    fn raw_for(&self, image_id: &str) -> &[RawDetection] {
        self.detections.get(image_id).map_or(&[], Vec::as_slice)
    }

    /// Largest class-probability count seen in the detections.
    pub fn num_classes(&self) -> usize {
        self.detections.values().flatten().map(RawDetection::num_classes).max().unwrap_or(self.labels.len())
    }
}

fn load_mask(path: &Path) -> Result<BinaryMask, String> {
    if !path.is_file() {
        return Err(format!("no mask at {}", path.display()));
    }
    read_mask(path).map_err(|e| format!("unreadable mask {}: {e}", path.display()))
}

/// Scores the raw boxes, dropping any that lie completely outside the image
/// and clipping the rest to it.
pub fn score_detections(raw: &[RawDetection], width: u32, height: u32) -> Vec<Detection> {
    raw.iter()
        .filter_map(|r| {
            let bbox = r.bbox.clamp_to(width, height)?;
            Some(Detection { bbox, ..confidence_score(r) })
        })
        .collect()
}

/// Everything derived from one image before any thresholding.
#[derive(Debug, Clone)]
pub struct PreparedImage {
    pub scored: Vec<Detection>,
    pub evidence: SegmentationEvidence,
}

pub fn prepare_image(
    ann: &TrayAnnotation,
    mask: &BinaryMask,
    raw: &[RawDetection],
    min_area_fraction: f64,
) -> Result<PreparedImage, PipelineError> {
    let regions = extract_regions(mask, min_area_fraction)?;
    Ok(PreparedImage {
        scored: score_detections(raw, ann.width, ann.height),
        evidence: SegmentationEvidence::from_regions(&regions),
    })
}

/// Final detections of one image for the configured stages.
pub fn select_detections(prepared: &PreparedImage, fusion: &FusionConfig, stages: Stages) -> Vec<Detection> {
    match stages {
        Stages::Fused => fuse_scored(&prepared.scored, &prepared.evidence, fusion),
        Stages::DetectorOnly => filter_by_threshold(&prepared.scored, fusion.confidence_threshold),
    }
}

/// Pixel and region scores of a predicted mask against the annotated items.
///
/// Pixel metrics compare food/background classes. Region metrics compare the
/// mask's 8-connected components with the rasterised item polygons, with the
/// background as one more region on both sides.
pub fn segmentation_scores(ann: &TrayAnnotation, mask: &BinaryMask) -> Result<SegmentationScores, PipelineError> {
    let gt_regions = ground_truth_regions(ann);
    let target = gt_regions.to_binary().to_labels();
    let predicted = mask.to_labels();
    let predicted_regions = connected_components(mask);
    Ok(SegmentationScores::compute(&target, &predicted, &gt_regions, &predicted_regions)?)
}

#[derive(Debug, Clone)]
pub struct ImageOutcome {
    pub image_id: String,
    pub detections: Vec<Detection>,
    pub segmentation: SegmentationScores,
    pub matches: MatchResult,
}

/// Fusion and evaluation of a single image.
pub fn evaluate_image(
    ann: &TrayAnnotation,
    mask: &BinaryMask,
    raw: &[RawDetection],
    cfg: &RunConfig,
) -> Result<ImageOutcome, PipelineError> {
    let prepared = prepare_image(ann, mask, raw, cfg.min_area_fraction)?;
    let detections = select_detections(&prepared, &cfg.fusion, cfg.stages);
    let matches = match_detections(&detections, &ann.items, cfg.match_iou);
    Ok(ImageOutcome {
        image_id: ann.image_id.clone(),
        segmentation: segmentation_scores(ann, mask)?,
        detections,
        matches,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub settings: ReportSettings,
    pub metrics: EvalReport,
    pub issues: Vec<ImageIssue>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }

    /// True when some image could not be paired or evaluated.
    pub fn is_partial(&self) -> bool {
        !self.issues.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: RunReport,
    /// Final detections per evaluated image.
    pub detections: BTreeMap<String, Vec<Detection>>,
}

fn with_workers<T: Send>(jobs: usize, work: impl FnOnce() -> T + Send) -> Result<T, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| PipelineError::InvalidConfig(format!("cannot start {jobs} workers: {e}")))?;
    Ok(pool.install(work))
}

/// Reads the dataset named by `cfg` and evaluates it.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineOutput, PipelineError> {
    cfg.validate()?;
    let dataset = Dataset::load(cfg)?;
    run_on_dataset(&dataset, cfg)
}

pub fn run_on_dataset(dataset: &Dataset, cfg: &RunConfig) -> Result<PipelineOutput, PipelineError> {
    cfg.validate()?;
    let results: Vec<Result<ImageOutcome, String>> = with_workers(cfg.jobs, || {
        dataset
            .annotations
            .par_iter()
            .map(|ann| {
                let mask = dataset.mask_for(ann)?;
                evaluate_image(ann, &mask, dataset.raw_for(&ann.image_id), cfg).map_err(|e| e.to_string())
            })
            .collect()
    })?;

    let mut acc = EvalAccumulator::default();
    let mut detections = BTreeMap::new();
    let mut issues = Vec::new();
    for (ann, result) in dataset.annotations.iter().zip(results) {
        match result {
            Ok(outcome) => {
                acc.add_image(&outcome.segmentation, &outcome.matches, &ann.items);
                detections.insert(outcome.image_id, outcome.detections);
            }
            Err(reason) => issues.push(ImageIssue { image_id: ann.image_id.clone(), reason }),
        }
    }
    issues.extend(dataset.unpaired.iter().cloned());
    issues.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let report = RunReport { settings: cfg.settings(), metrics: acc.finish(cfg.beta), issues };
    Ok(PipelineOutput { report, detections })
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.display().to_string(), source }
}

pub fn write_report(report: &RunReport, path: &Path) -> Result<(), PipelineError> {
    fs::write(path, report.to_json()).map_err(io_error(path))
}

/// Writes `<image id>.txt` detection records for every image into `dir`.
pub fn dump_detections(
    detections: &BTreeMap<String, Vec<Detection>>,
    num_classes: usize,
    dir: &Path,
) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    for (id, dets) in detections {
        let single = BTreeMap::from([(id.clone(), dets.clone())]);
        records::write_detections(&single, num_classes, &dir.join(format!("{id}.txt")))?;
    }
    Ok(())
}

/// Regions of every mask in a directory.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RegionsOutput {
    pub regions: BTreeMap<String, Vec<Region>>,
    pub issues: Vec<ImageIssue>,
}

/// Extracts the regions of every `*.pgm` mask in `dir`; the file stem is the image id.
pub fn postprocess_masks(dir: &Path, min_area_fraction: f64, jobs: usize) -> Result<RegionsOutput, PipelineError> {
    if !(0.0..1.0).contains(&min_area_fraction) {
        return Err(PipelineError::InvalidConfig(format!(
            "minimum region fraction {min_area_fraction} is outside [0, 1)"
        )));
    }
    let mut ids: Vec<String> = fs::read_dir(dir)
        .map_err(io_error(dir))?
        .filter_map(|entry| {
            let path = entry.ok()?.path();
            (path.extension()? == "pgm").then(|| path.file_stem()?.to_str().map(str::to_owned))?
        })
        .collect();
    ids.sort();
    let results: Vec<Result<Vec<Region>, String>> = with_workers(jobs, || {
        ids.par_iter()
            .map(|id| {
                let mask = load_mask(&Dataset::mask_path(dir, id))?;
                extract_regions(&mask, min_area_fraction).map_err(|e| e.to_string())
            })
            .collect()
    })?;
    let mut out = RegionsOutput::default();
    for (id, result) in ids.into_iter().zip(results) {
        match result {
            Ok(regions) => {
                out.regions.insert(id, regions);
            }
            Err(reason) => out.issues.push(ImageIssue { image_id: id, reason }),
        }
    }
    Ok(out)
}

/// Fused detections of every image named in a detection file.
#[derive(Debug, Clone, Default)]
pub struct FuseOutput {
    pub detections: BTreeMap<String, Vec<Detection>>,
    pub num_classes: usize,
    pub issues: Vec<ImageIssue>,
}

/// Fuses the detection file named by `cfg` with the masks; annotations are not read.
pub fn fuse_detections(cfg: &RunConfig) -> Result<FuseOutput, PipelineError> {
    cfg.validate()?;
    let raw = read_detections(&cfg.detections, cfg.objectness)?;
    let ids: Vec<&String> = raw.keys().collect();
    let results: Vec<Result<Vec<Detection>, String>> = with_workers(cfg.jobs, || {
        ids.par_iter()
            .map(|id| {
                let mask = load_mask(&Dataset::mask_path(&cfg.masks_dir, id))?;
                let scored = score_detections(&raw[*id], mask.width(), mask.height());
                let regions = extract_regions(&mask, cfg.min_area_fraction).map_err(|e| e.to_string())?;
                let prepared = PreparedImage { scored, evidence: SegmentationEvidence::from_regions(&regions) };
                Ok(select_detections(&prepared, &cfg.fusion, cfg.stages))
            })
            .collect()
    })?;
    let mut out = FuseOutput {
        num_classes: raw.values().flatten().map(RawDetection::num_classes).max().unwrap_or(0),
        ..FuseOutput::default()
    };
    for (id, result) in ids.into_iter().zip(results) {
        match result {
            Ok(dets) => {
                out.detections.insert(id.clone(), dets);
            }
            Err(reason) => out.issues.push(ImageIssue { image_id: id.clone(), reason }),
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Threshold sweep

/// Detection scores of one configuration over the whole dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub detections: usize,
    pub precision: f64,
    pub recall: f64,
    pub f2: f64,
    pub maa: f64,
    pub tray_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    /// Thresholded detector output.
    pub detector: StageSummary,
    /// After background removal and NMS.
    pub fused: StageSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub issues: Vec<ImageIssue>,
}

impl SweepReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep report serialises") + "\n"
    }
}

fn summarize(per_image: &[(Vec<Detection>, &TrayAnnotation)], match_iou: f64, beta: f64) -> StageSummary {
    let mut classes = ClassTally::default();
    let mut trays = Vec::with_capacity(per_image.len());
    for (dets, ann) in per_image {
        let m = match_detections(dets, &ann.items, match_iou);
        classes.merge(&ClassTally::from_match(&m, &ann.items));
        trays.push(m);
    }
    let tp = trays.iter().map(|t| t.matches.len()).sum();
    let fp = trays.iter().map(|t| t.false_positives.len()).sum();
    let fn_ = trays.iter().map(|t| t.false_negatives.len()).sum();
    let rates = rates_from_counts(tp, fp, fn_, beta);
    StageSummary {
        detections: per_image.iter().map(|(d, _)| d.len()).sum(),
        precision: rates.precision,
        recall: rates.recall,
        f2: rates.f_beta,
        maa: classes.macro_average_accuracy(),
        tray_accuracy: tray_accuracy(&trays).unwrap_or(0.0),
    }
}

/// Evaluates the detector alone and the fused pipeline at each confidence threshold.
pub fn threshold_sweep(dataset: &Dataset, cfg: &RunConfig, thresholds: &[f64]) -> Result<SweepReport, PipelineError> {
    cfg.validate()?;
    if let Some(t) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(PipelineError::InvalidConfig(format!("sweep threshold {t} is outside [0, 1]")));
    }
    let prepared: Vec<Result<PreparedImage, String>> = with_workers(cfg.jobs, || {
        dataset
            .annotations
            .par_iter()
            .map(|ann| {
                let mask = dataset.mask_for(ann)?;
                prepare_image(ann, &mask, dataset.raw_for(&ann.image_id), cfg.min_area_fraction)
                    .map_err(|e| e.to_string())
            })
            .collect()
    })?;

    let mut ready = Vec::new();
    let mut issues = dataset.unpaired.clone();
    for (ann, p) in dataset.annotations.iter().zip(prepared) {
        match p {
            Ok(p) => ready.push((ann, p)),
            Err(reason) => issues.push(ImageIssue { image_id: ann.image_id.clone(), reason }),
        }
    }
    issues.sort_by(|a, b| a.image_id.cmp(&b.image_id));

    let rows = thresholds
        .iter()
        .map(|&threshold| {
            let fusion = FusionConfig { confidence_threshold: threshold, ..cfg.fusion };
            let detector: Vec<_> =
                ready.iter().map(|(ann, p)| (select_detections(p, &fusion, Stages::DetectorOnly), *ann)).collect();
            let fused: Vec<_> =
                ready.iter().map(|(ann, p)| (select_detections(p, &fusion, Stages::Fused), *ann)).collect();
            SweepRow {
                threshold,
                detector: summarize(&detector, cfg.match_iou, cfg.beta),
                fused: summarize(&fused, cfg.match_iou, cfg.beta),
            }
        })
        .collect();
    Ok(SweepReport { rows, issues })
}

/// The confidence thresholds swept by default, from chance level for 65
/// classes up to one half.
pub fn default_sweep_thresholds() -> Vec<f64> {
    THRESHOLD_GRID.to_vec()
}
