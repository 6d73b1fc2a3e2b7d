//! Evaluation measures for segmentation and detection.
//!
//! Pixel-wise: global accuracy and per-class / mean IoU. Region-based (per
//! image, then averaged across images): covering, Rand index and variation of
//! information. Detection: precision, recall, F-beta, macro average accuracy
//! (MAA) and tray accuracy (TA).
//!
//! Region metrics treat every distinct label, background included, as one
//! region, and are computed from a sparse joint histogram of the two label
//! maps rather than by enumerating pixel pairs.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::Detection;
use crate::geometry::{intersection_over_union, BBox, Point};
use crate::mask::LabelMask;

pub const DEFAULT_MATCH_IOU: f64 = 0.5;
pub const DEFAULT_BETA: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("label masks differ in size: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("the Rand index needs at least two pixels")]
    TooFewPixels,
    #[error("tray accuracy needs at least one tray")]
    NoTrays,
}

fn check_same_dims(a: &LabelMask, b: &LabelMask) -> Result<(), MetricsError> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(MetricsError::DimensionMismatch(a.width(), a.height(), b.width(), b.height()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Pixel-wise metrics

/// Pooled pixel counts; accumulate over a dataset, then read the metrics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PixelTally {
    total: u64,
    correct: u64,
    /// class -> (target count, predicted count, both)
    classes: BTreeMap<u32, (u64, u64, u64)>,
}

impl PixelTally {
    pub fn from_masks(target: &LabelMask, predicted: &LabelMask) -> Result<Self, MetricsError> {
        let mut tally = Self::default();
        tally.add(target, predicted)?;
        Ok(tally)
    }

    pub fn add(&mut self, target: &LabelMask, predicted: &LabelMask) -> Result<(), MetricsError> {
        check_same_dims(target, predicted)?;
        // runs of equal (t, p) pairs are long in real masks
        let mut pairs = target.labels().iter().zip(predicted.labels());
        let Some((&t0, &p0)) = pairs.next() else { return Ok(()) };
        let (mut run, mut len) = ((t0, p0), 1u64);
        for (&t, &p) in pairs {
            if (t, p) == run {
                len += 1;
            } else {
                self.add_run(run, len);
                run = (t, p);
                len = 1;
            }
        }
        self.add_run(run, len);
        Ok(())
    }

    fn add_run(&mut self, (t, p): (u32, u32), n: u64) {
        self.total += n;
        self.classes.entry(t).or_default().0 += n;
        self.classes.entry(p).or_default().1 += n;
        if t == p {
            self.correct += n;
            self.classes.entry(t).or_default().2 += n;
        }
    }

    pub fn merge(&mut self, other: &PixelTally) {
        self.total += other.total;
        self.correct += other.correct;
        for (&c, &(t, p, both)) in &other.classes {
            let e = self.classes.entry(c).or_default();
            e.0 += t;
            e.1 += p;
            e.2 += both;
        }
    }

    pub fn global_accuracy(&self) -> f64 {
        if self.total == 0 {
            return 1.0;
        }
        self.correct as f64 / self.total as f64
    }

    /// IoU of one class; 1 when the class occurs in neither map.
    pub fn class_iou(&self, class: u32) -> f64 {
        match self.classes.get(&class) {
            Some(&(t, p, both)) if t + p > 0 => both as f64 / (t + p - both) as f64,
            _ => 1.0,
        }
    }

    /// IoU of every class present in the target or the prediction.
    pub fn per_class_iou(&self) -> BTreeMap<u32, f64> {
        self.classes.keys().map(|&c| (c, self.class_iou(c))).collect()
    }

    /// Mean IoU over the classes present; 1 if there are none.
    pub fn mean_iou(&self) -> f64 {
        if self.classes.is_empty() {
            return 1.0;
        }
        self.classes.keys().map(|&c| self.class_iou(c)).sum::<f64>() / self.classes.len() as f64
    }
}

pub fn global_pixel_accuracy(target: &LabelMask, predicted: &LabelMask) -> Result<f64, MetricsError> {
    Ok(PixelTally::from_masks(target, predicted)?.global_accuracy())
}

pub fn class_iou(target: &LabelMask, predicted: &LabelMask, class: u32) -> Result<f64, MetricsError> {
    Ok(PixelTally::from_masks(target, predicted)?.class_iou(class))
}

pub fn mean_iou(target: &LabelMask, predicted: &LabelMask) -> Result<f64, MetricsError> {
    Ok(PixelTally::from_masks(target, predicted)?.mean_iou())
}

// ---------------------------------------------------------------------------
// Region-based metrics

/// Joint label histogram of two equally sized label maps.
#[derive(Debug, Clone)]
pub struct Contingency {
    pixels: u64,
    /// Pixels per region of the first map.
    first: Vec<u64>,
    /// Pixels per region of the second map.
    second: Vec<u64>,
    /// Non-zero cells `(first region, second region, pixels)`, sorted.
    cells: Vec<(u32, u32, u64)>,
}

const DENSE_LABEL_LIMIT: u32 = 1 << 20;
const DENSE_CELL_LIMIT: usize = 1 << 22;

/// Maps arbitrary labels to 0..k in order of first appearance.
enum Compactor {
    Dense(Vec<u32>),
    Sparse(HashMap<u32, u32>),
}

impl Compactor {
    fn build(labels: &[u32]) -> (Self, usize) {
        let max = labels.iter().copied().max().unwrap_or(0);
        let mut next = 0u32;
        let mut last = None;
        if max < DENSE_LABEL_LIMIT {
            let mut table = vec![u32::MAX; max as usize + 1];
            for &l in labels {
                if last != Some(l) {
                    last = Some(l);
                    let slot = &mut table[l as usize];
                    if *slot == u32::MAX {
                        *slot = next;
                        next += 1;
                    }
                }
            }
            (Self::Dense(table), next as usize)
        } else {
            let mut table = HashMap::new();
            for &l in labels {
                if last != Some(l) {
                    last = Some(l);
                    table.entry(l).or_insert_with(|| {
                        next += 1;
                        next - 1
                    });
                }
            }
            (Self::Sparse(table), next as usize)
        }
    }

    fn get(&self, l: u32) -> u32 {
        match self {
            Self::Dense(t) => t[l as usize],
            Self::Sparse(t) => t[&l],
        }
    }
}

/// Calls `f` once per run of equal label pairs with the run length.
fn for_each_pair_run(a: &[u32], b: &[u32], mut f: impl FnMut(u32, u32, u64)) {
    let mut pairs = a.iter().zip(b);
    let Some((&a0, &b0)) = pairs.next() else { return };
    let (mut run, mut len) = ((a0, b0), 1u64);
    for (&x, &y) in pairs {
        if (x, y) == run {
            len += 1;
        } else {
            f(run.0, run.1, len);
            run = (x, y);
            len = 1;
        }
    }
    f(run.0, run.1, len);
}

impl Contingency {
    pub fn new(first: &LabelMask, second: &LabelMask) -> Result<Self, MetricsError> {
        check_same_dims(first, second)?;
        let (a, b) = (first.labels(), second.labels());
        let (ca, ka) = Compactor::build(a);
        let (cb, kb) = Compactor::build(b);
        let cells: Vec<(u32, u32, u64)> = if ka.saturating_mul(kb) <= DENSE_CELL_LIMIT {
            let mut dense = vec![0u64; ka * kb];
            for_each_pair_run(a, b, |x, y, n| dense[ca.get(x) as usize * kb + cb.get(y) as usize] += n);
            dense
                .into_iter()
                .enumerate()
                .filter(|&(_, n)| n > 0)
                .map(|(k, n)| ((k / kb) as u32, (k % kb) as u32, n))
                .collect()
        } else {
            let mut sparse: HashMap<(u32, u32), u64> = HashMap::new();
            for_each_pair_run(a, b, |x, y, n| *sparse.entry((ca.get(x), cb.get(y))).or_default() += n);
            let mut cells: Vec<_> = sparse.into_iter().map(|((i, j), n)| (i, j, n)).collect();
            cells.sort_unstable();
            cells
        };
        let mut first_counts = vec![0u64; ka];
        let mut second_counts = vec![0u64; kb];
        for &(i, j, n) in &cells {
            first_counts[i as usize] += n;
            second_counts[j as usize] += n;
        }
        Ok(Self { pixels: a.len() as u64, first: first_counts, second: second_counts, cells })
    }

    pub fn pixels(&self) -> u64 {
        self.pixels
    }

    /// Number of unordered pixel pairs on which the two partitions agree
    /// (same region in both, or different regions in both).
    pub fn agreeing_pairs(&self) -> u128 {
        let pairs = |n: u64| u128::from(n) * u128::from(n.saturating_sub(1)) / 2;
        let total = pairs(self.pixels);
        let same_both: u128 = self.cells.iter().map(|&(_, _, n)| pairs(n)).sum();
        let same_first: u128 = self.first.iter().map(|&n| pairs(n)).sum();
        let same_second: u128 = self.second.iter().map(|&n| pairs(n)).sum();
        // different in both = total - same_first - same_second + same_both
        total + 2 * same_both - same_first - same_second
    }

    /// Covering of the second partition by the first.
    pub fn covering(&self) -> f64 {
        let mut best = vec![0.0f64; self.second.len()];
        for &(i, j, n) in &self.cells {
            let union = self.first[i as usize] + self.second[j as usize] - n;
            let iou = n as f64 / union as f64;
            let slot = &mut best[j as usize];
            if iou > *slot {
                *slot = iou;
            }
        }
        let weighted: f64 = self.second.iter().zip(&best).map(|(&size, &iou)| size as f64 * iou).sum();
        weighted / self.pixels as f64
    }

    pub fn rand_index(&self) -> Result<f64, MetricsError> {
        if self.pixels < 2 {
            return Err(MetricsError::TooFewPixels);
        }
        let pairs = u128::from(self.pixels) * u128::from(self.pixels - 1) / 2;
        Ok(self.agreeing_pairs() as f64 / pairs as f64)
    }

    pub fn mutual_information(&self) -> f64 {
        let n = self.pixels as f64;
        let mi = self
            .cells
            .iter()
            .map(|&(i, j, c)| {
                let c = c as f64;
                (c / n) * (c * n / (self.first[i as usize] as f64 * self.second[j as usize] as f64)).ln()
            })
            .sum::<f64>();
        mi.max(0.0)
    }

    /// Sum of the two conditional entropies, so identical partitions give exactly zero.
    pub fn variation_of_information(&self) -> f64 {
        let n = self.pixels as f64;
        let vi = -self
            .cells
            .iter()
            .map(|&(i, j, c)| {
                let c = c as f64;
                c * ((c / self.second[j as usize] as f64).ln() + (c / self.first[i as usize] as f64).ln())
            })
            .sum::<f64>()
            / n;
        vi.max(0.0)
    }
}

fn entropy_of(counts: &[u64], total: u64) -> f64 {
    let n = total as f64;
    -counts.iter().filter(|&&c| c > 0).map(|&c| (c as f64 / n) * (c as f64 / n).ln()).sum::<f64>()
}

/// Covering of `gt` by `s`: each ground-truth region's best IoU against any
/// segmented region, weighted by the region's size.
pub fn covering(s: &LabelMask, gt: &LabelMask) -> Result<f64, MetricsError> {
    Ok(Contingency::new(s, gt)?.covering())
}

/// Fraction of pixel pairs whose same/different-region relation agrees.
pub fn rand_index(s: &LabelMask, gt: &LabelMask) -> Result<f64, MetricsError> {
    Contingency::new(s, gt)?.rand_index()
}

/// Entropy (nats) of the region-size distribution.
pub fn entropy(m: &LabelMask) -> f64 {
    let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
    for_each_pair_run(m.labels(), m.labels(), |l, _, n| *counts.entry(l).or_default() += n);
    let counts: Vec<u64> = counts.into_values().collect();
    entropy_of(&counts, m.len() as u64)
}

/// Mutual information (nats) between the two partitions.
pub fn mutual_information(s: &LabelMask, gt: &LabelMask) -> Result<f64, MetricsError> {
    Ok(Contingency::new(s, gt)?.mutual_information())
}

/// `H(S) + H(GT) - 2 MI(S, GT)` in nats.
pub fn variation_of_information(s: &LabelMask, gt: &LabelMask) -> Result<f64, MetricsError> {
    Ok(Contingency::new(s, gt)?.variation_of_information())
}

// ---------------------------------------------------------------------------
// Detection metrics

/// One annotated food item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthItem {
    pub bbox: BBox,
    pub class_id: usize,
    /// Outline vertices, if annotated.
    pub polygon: Option<Vec<Point>>,
}

/// Assignment of predictions to ground-truth items.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    /// `(prediction index, ground-truth index)` pairs.
    pub matches: Vec<(usize, usize)>,
    pub false_positives: Vec<usize>,
    pub false_negatives: Vec<usize>,
}

impl MatchResult {
    pub fn true_positive_count(&self) -> usize {
        self.matches.len()
    }

    /// Items on the tray (`TP + FN`).
    pub fn ground_truth_count(&self) -> usize {
        self.matches.len() + self.false_negatives.len()
    }

    pub fn prediction_count(&self) -> usize {
        self.matches.len() + self.false_positives.len()
    }

    /// Every ground-truth item was recognised. False positives are ignored.
    pub fn all_recognised(&self) -> bool {
        self.false_negatives.is_empty()
    }
}

/// Greedy matching: predictions by descending score (ties in input order),
/// each taking the unmatched same-class item with the highest box IoU, if that
/// IoU reaches `iou_threshold`.
pub fn match_detections(preds: &[Detection], gts: &[GroundTruthItem], iou_threshold: f64) -> MatchResult {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score));

    let mut taken = vec![false; gts.len()];
    let mut result = MatchResult::default();
    for p in order {
        let pred = &preds[p];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] || gt.class_id != pred.class_id {
                continue;
            }
            let iou = intersection_over_union(&pred.bbox, &gt.bbox);
            if iou >= iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        match best {
            Some((g, _)) => {
                taken[g] = true;
                result.matches.push((p, g));
            }
            None => result.false_positives.push(p),
        }
    }
    result.matches.sort_unstable();
    result.false_positives.sort_unstable();
    result.false_negatives = (0..gts.len()).filter(|&g| !taken[g]).collect();
    result
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub precision: f64,
    pub recall: f64,
    pub f_beta: f64,
}

/// Precision, recall and F-beta from raw counts.
///
/// With no predictions, precision is 1 if there is also no ground truth and 0
/// otherwise; with no ground truth, recall is 1; F-beta is 0 when precision and
/// recall are both 0.
pub fn rates_from_counts(tp: usize, fp: usize, fn_: usize, beta: f64) -> Rates {
    let precision = if tp + fp == 0 {
        if tp + fn_ == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
    let b2 = beta * beta;
    let f_beta =
        if precision + recall == 0.0 { 0.0 } else { (1.0 + b2) * precision * recall / (b2 * precision + recall) };
    Rates { precision, recall, f_beta }
}

pub fn precision_recall_fbeta(m: &MatchResult, beta: f64) -> Rates {
    rates_from_counts(m.matches.len(), m.false_positives.len(), m.false_negatives.len(), beta)
}

/// Per-class recognised/total counts of ground-truth items.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTally {
    /// class -> (matched, total)
    pub per_class: BTreeMap<usize, (usize, usize)>,
}

impl ClassTally {
    pub fn from_match(m: &MatchResult, gts: &[GroundTruthItem]) -> Self {
        let mut tally = Self::default();
        for gt in gts {
            tally.per_class.entry(gt.class_id).or_default().1 += 1;
        }
        for &(_, g) in &m.matches {
            tally.per_class.entry(gts[g].class_id).or_default().0 += 1;
        }
        tally
    }

    pub fn merge(&mut self, other: &ClassTally) {
        for (&c, &(hit, total)) in &other.per_class {
            let e = self.per_class.entry(c).or_default();
            e.0 += hit;
            e.1 += total;
        }
    }

    /// Mean over classes with at least one item of the fraction recognised; 1 if there are none.
    pub fn macro_average_accuracy(&self) -> f64 {
        let rates: Vec<f64> = self
            .per_class
            .values()
            .filter(|&&(_, total)| total > 0)
            .map(|&(hit, total)| hit as f64 / total as f64)
            .collect();
        if rates.is_empty() {
            1.0
        } else {
            rates.iter().sum::<f64>() / rates.len() as f64
        }
    }
}

pub fn macro_average_accuracy(m: &MatchResult, gts: &[GroundTruthItem]) -> f64 {
    ClassTally::from_match(m, gts).macro_average_accuracy()
}

/// Fraction of trays whose items were all recognised. An empty tray counts as recognised.
pub fn tray_accuracy(trays: &[MatchResult]) -> Result<f64, MetricsError> {
    if trays.is_empty() {
        return Err(MetricsError::NoTrays);
    }
    let correct = trays.iter().filter(|t| t.all_recognised()).count();
    Ok(correct as f64 / trays.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraySizeStats {
    pub trays: usize,
    pub recall: f64,
    pub tray_accuracy: f64,
}

/// Pooled recall and tray accuracy for each number of items per tray. Trays
/// without items are skipped.
pub fn recall_by_tray_size(trays: &[MatchResult]) -> BTreeMap<usize, TraySizeStats> {
    let mut groups: BTreeMap<usize, (usize, usize, usize)> = BTreeMap::new();
    for t in trays {
        let size = t.ground_truth_count();
        if size == 0 {
            continue;
        }
        let g = groups.entry(size).or_default();
        g.0 += 1;
        g.1 += t.true_positive_count();
        g.2 += usize::from(t.all_recognised());
    }
    groups
        .into_iter()
        .map(|(size, (trays, tp, correct))| {
            let stats = TraySizeStats {
                trays,
                recall: tp as f64 / (trays * size) as f64,
                tray_accuracy: correct as f64 / trays as f64,
            };
            (size, stats)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Dataset report

/// Every metric for one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub images: usize,
    pub global_accuracy: f64,
    pub mean_iou: f64,
    pub per_class_iou: BTreeMap<u32, f64>,
    pub covering: f64,
    pub rand_index: f64,
    pub variation_of_information: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    /// F-beta at `beta` (2 unless configured otherwise).
    pub f2: f64,
    pub beta: f64,
    pub maa: f64,
    pub tray_accuracy: f64,
    pub by_tray_size: BTreeMap<usize, TraySizeStats>,
}

/// Segmentation results for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationScores {
    pub pixels: PixelTally,
    pub covering: f64,
    pub rand_index: f64,
    pub variation_of_information: f64,
}

impl SegmentationScores {
    /// `target`/`predicted` are class maps for the pixel metrics;
    /// `gt_regions`/`predicted_regions` are region maps for the region metrics.
    pub fn compute(
        target: &LabelMask,
        predicted: &LabelMask,
        gt_regions: &LabelMask,
        predicted_regions: &LabelMask,
    ) -> Result<Self, MetricsError> {
        let table = Contingency::new(predicted_regions, gt_regions)?;
        Ok(Self {
            pixels: PixelTally::from_masks(target, predicted)?,
            covering: table.covering(),
            rand_index: table.rand_index()?,
            variation_of_information: table.variation_of_information(),
        })
    }
}

/// Folds per-image results into an [`EvalReport`]. Images must be added in a
/// fixed order for the floating-point sums to be reproducible.
#[derive(Debug, Clone, Default)]
pub struct EvalAccumulator {
    images: usize,
    pixels: PixelTally,
    covering: f64,
    rand_index: f64,
    variation_of_information: f64,
    classes: ClassTally,
    trays: Vec<MatchResult>,
}

impl EvalAccumulator {
    pub fn add_image(&mut self, seg: &SegmentationScores, matches: &MatchResult, gts: &[GroundTruthItem]) {
        self.images += 1;
        self.pixels.merge(&seg.pixels);
        self.covering += seg.covering;
        self.rand_index += seg.rand_index;
        self.variation_of_information += seg.variation_of_information;
        self.classes.merge(&ClassTally::from_match(matches, gts));
        self.trays.push(matches.clone());
    }

    pub fn finish(&self, beta: f64) -> EvalReport {
        let tp = self.trays.iter().map(|t| t.matches.len()).sum();
        let fp = self.trays.iter().map(|t| t.false_positives.len()).sum();
        let fn_ = self.trays.iter().map(|t| t.false_negatives.len()).sum();
        let rates = rates_from_counts(tp, fp, fn_, beta);
        let per_image = |sum: f64| if self.images == 0 { 0.0 } else { sum / self.images as f64 };
        EvalReport {
            images: self.images,
            global_accuracy: self.pixels.global_accuracy(),
            mean_iou: self.pixels.mean_iou(),
            per_class_iou: self.pixels.per_class_iou(),
            covering: per_image(self.covering),
            rand_index: per_image(self.rand_index),
            variation_of_information: per_image(self.variation_of_information),
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            precision: rates.precision,
            recall: rates.recall,
            f2: rates.f_beta,
            beta,
            maa: self.classes.macro_average_accuracy(),
            tray_accuracy: tray_accuracy(&self.trays).unwrap_or(0.0),
            by_tray_size: recall_by_tray_size(&self.trays),
        }
    }
}
