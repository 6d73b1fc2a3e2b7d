//! Detector boxes refined with segmentation evidence: background removal and duplicate suppression.
//!
//! Two stages run after scoring and thresholding. Background removal drops
//! low-confidence boxes that neither overlap a segmented region's box nor
//! touch any region contour. Per-class non-maximum suppression then removes
//! duplicate boxes.
//!
//! The probability that a box `b` lies on background is
//!
//! ```text
//! P(bkg | b) = min(1 - score(b), P(outside boxes | b) * P(misses contours | b))
//! P(outside boxes | b) = min_j |b \ S1_j| / |b|
//! P(misses contours | b) = min_j [b does not touch contour j]
//! ```
//!
//! with both terms equal to 1 when no region was segmented. [`BackgroundMode::Max`]
//! combines the two evidence terms with `max` instead of the product.

use serde::{Deserialize, Serialize};

use crate::detection::{confidence_score, filter_by_threshold, Detection, RawDetection, MIN_CONFIDENCE_THRESHOLD};
use crate::geometry::{box_intersects_contour, intersection_over_self, intersection_over_union, BBox, Contour};
use crate::mask::{extract_regions, BinaryMask, MaskError, Region};

pub const DEFAULT_BACKGROUND_THRESHOLD: f64 = 0.5;
pub const DEFAULT_NMS_OVERLAP: f64 = 0.5;

/// Region boxes and their exterior contours, index-aligned.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentationEvidence {
    boxes: Vec<BBox>,
    contours: Vec<Contour>,
}

impl SegmentationEvidence {
    pub fn from_regions(regions: &[Region]) -> Self {
        Self {
            boxes: regions.iter().map(|r| r.bbox).collect(),
            contours: regions.iter().map(|r| r.contour.clone()).collect(),
        }
    }

    /// Pairs boxes with contours; `None` if the lengths differ.
    pub fn new(boxes: Vec<BBox>, contours: Vec<Contour>) -> Option<Self> {
        (boxes.len() == contours.len()).then_some(Self { boxes, contours })
    }

    pub fn boxes(&self) -> &[BBox] {
        &self.boxes
    }
    pub fn contours(&self) -> &[Contour] {
        &self.contours
    }
    pub fn len(&self) -> usize {
        self.boxes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

/// How the two segmentation-evidence terms are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundMode {
    #[default]
    Product,
    Max,
}

/// Denominator of the NMS overlap ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapMode {
    /// Intersection over the candidate's own area.
    #[default]
    SelfArea,
    /// Intersection over union.
    Union,
}

impl OverlapMode {
    /// Overlap of `candidate` against an already selected box.
    pub fn overlap(self, candidate: &BBox, kept: &BBox) -> f64 {
        match self {
            OverlapMode::SelfArea => intersection_over_self(candidate, kept),
            OverlapMode::Union => intersection_over_union(candidate, kept),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub background_threshold: f64,
    pub nms_overlap: f64,
    pub confidence_threshold: f64,
    pub background_mode: BackgroundMode,
    pub nms_mode: OverlapMode,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            background_threshold: DEFAULT_BACKGROUND_THRESHOLD,
            nms_overlap: DEFAULT_NMS_OVERLAP,
            confidence_threshold: MIN_CONFIDENCE_THRESHOLD,
            background_mode: BackgroundMode::Product,
            nms_mode: OverlapMode::SelfArea,
        }
    }
}

/// Smallest fraction of `b` lying outside any single region box; 1 with no regions.
pub fn prob_false_by_boxes(b: &BBox, region_boxes: &[BBox]) -> f64 {
    region_boxes.iter().map(|s| 1.0 - intersection_over_self(b, s)).fold(1.0, f64::min)
}

/// 0 if `b` touches any contour, else 1.
pub fn prob_false_by_contours(b: &BBox, contours: &[Contour]) -> f64 {
    if contours.iter().any(|c| box_intersects_contour(b, c)) {
        0.0
    } else {
        1.0
    }
}

pub fn prob_background(d: &Detection, ev: &SegmentationEvidence, mode: BackgroundMode) -> f64 {
    let by_boxes = prob_false_by_boxes(&d.bbox, &ev.boxes);
    let by_contours = prob_false_by_contours(&d.bbox, &ev.contours);
    let evidence = match mode {
        BackgroundMode::Product => by_boxes * by_contours,
        BackgroundMode::Max => by_boxes.max(by_contours),
    };
    (1.0 - d.score).min(evidence)
}

/// Drops detections whose background probability exceeds `threshold`.
pub fn background_removal(
    dets: &[Detection],
    ev: &SegmentationEvidence,
    threshold: f64,
    mode: BackgroundMode,
) -> Vec<Detection> {
    dets.iter().filter(|d| prob_background(d, ev, mode) <= threshold).copied().collect()
}

/// Greedy per-class non-maximum suppression.
///
/// Within each class, boxes are visited by descending score (ties keep input
/// order) and a box is dropped when its overlap with some already kept box
/// exceeds `overlap`. The result lists classes in ascending id order, each by
/// descending score.
pub fn nms(dets: &[Detection], overlap: f64, mode: OverlapMode) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    // stable: equal (class, score) keep input order
    order.sort_by(|&a, &b| dets[a].class_id.cmp(&dets[b].class_id).then(dets[b].score.total_cmp(&dets[a].score)));

    let mut kept: Vec<Detection> = Vec::with_capacity(dets.len());
    let mut class_start = 0;
    for i in order {
        let cand = dets[i];
        if kept.last().is_some_and(|k| k.class_id != cand.class_id) {
            class_start = kept.len();
        }
        let suppressed = kept[class_start..].iter().any(|k| mode.overlap(&cand.bbox, &k.bbox) > overlap);
        if !suppressed {
            kept.push(cand);
        }
    }
    kept
}

/// Runs the fusion stages on already scored detections.
pub fn fuse_scored(dets: &[Detection], ev: &SegmentationEvidence, cfg: &FusionConfig) -> Vec<Detection> {
    let confident = filter_by_threshold(dets, cfg.confidence_threshold);
    let foreground = background_removal(&confident, ev, cfg.background_threshold, cfg.background_mode);
    nms(&foreground, cfg.nms_overlap, cfg.nms_mode)
}

/// The full fusion pipeline for one image: score, threshold, extract regions
/// from the mask, remove background boxes, suppress duplicates.
pub fn fuse_with_mask(
    raw: &[RawDetection],
    mask: &BinaryMask,
    cfg: &FusionConfig,
    min_area_fraction: f64,
) -> Result<Vec<Detection>, MaskError> {
    let scored: Vec<Detection> = raw.iter().map(confidence_score).collect();
    let regions = extract_regions(mask, min_area_fraction)?;
    let ev = SegmentationEvidence::from_regions(&regions);
    Ok(fuse_scored(&scored, &ev, cfg))
}
