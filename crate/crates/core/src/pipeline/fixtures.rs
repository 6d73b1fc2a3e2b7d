//! A small synthetic tray dataset with known outcome.
//!
//! Three 96x72 trays with three rectangular food items each (nine items over
//! six classes). Every item gets one confident detection that matches its
//! annotation exactly. Two false detections are injected: a low-scoring
//! duplicate of an item on `tray_a` (removed by NMS) and a low-scoring box on
//! empty tray surface of `tray_b` (removed by background removal). One item's
//! mask has a small hole and `tray_c` carries a one-pixel speck that the
//! small-region filter drops.
//!
//! The [`FixtureVariant::CorruptedLabel`] variant gives the detection of the
//! last item on `tray_c` the wrong class.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::detection::{Objectness, RawDetection};
use crate::geometry::BBox;
use crate::mask::BinaryMask;

use super::annotations::{AnnotationFile, ImageRecord, ItemRecord, LabelMap};
use super::pgm::{write_mask, PgmEncoding};
use super::records::{write_raw_detections, DetectionsByImage};
use super::PipelineError;

pub const FIXTURE_WIDTH: u32 = 96;
pub const FIXTURE_HEIGHT: u32 = 72;
pub const FIXTURE_LABELS: [&str; 6] = ["pasta", "rice", "salad", "bread", "fish", "fruit"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FixtureVariant {
    #[default]
    Clean,
    CorruptedLabel,
}

/// An in-memory dataset: masks, detections, annotations and label names.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub labels: LabelMap,
    pub annotations: AnnotationFile,
    pub masks: BTreeMap<String, BinaryMask>,
    pub detections: DetectionsByImage,
}

/// Paths of a fixture written to disk, laid out as the CLI expects.
#[derive(Debug, Clone)]
pub struct FixturePaths {
    pub root: PathBuf,
    pub masks_dir: PathBuf,
    pub detections: PathBuf,
    pub annotations: PathBuf,
    pub labels: PathBuf,
}

/// `(x0, y0, x1, y1, class)`
type Item = (u32, u32, u32, u32, usize);

const TRAYS: [(&str, [Item; 3]); 3] = [
    ("tray_a", [(8, 8, 32, 32, 0), (40, 10, 70, 30, 1), (20, 40, 60, 64, 2)]),
    ("tray_b", [(5, 5, 30, 25, 3), (50, 8, 90, 40, 4), (10, 45, 40, 68, 5)]),
    ("tray_c", [(10, 10, 40, 40, 0), (50, 10, 85, 35, 2), (30, 45, 70, 68, 4)]),
];

const ITEM_OBJECTNESS: f64 = 0.95;
const ITEM_CLASS_PROB: f64 = 0.9;
const OTHER_CLASS_PROB: f64 = 0.02;

fn one_hot(class: usize, hit: f64) -> Vec<f64> {
    (0..FIXTURE_LABELS.len()).map(|c| if c == class { hit } else { OTHER_CLASS_PROB }).collect()
}

fn bbox(x0: u32, y0: u32, x1: u32, y1: u32) -> BBox {
    BBox::new(x0, y0, x1, y1).expect("fixture boxes are valid")
}

pub fn synthetic_fixture(variant: FixtureVariant) -> Fixture {
    let labels = LabelMap::new(FIXTURE_LABELS.iter().map(|s| s.to_string()).collect()).expect("distinct labels");
    let mut images = Vec::new();
    let mut masks = BTreeMap::new();
    let mut detections = DetectionsByImage::new();

    for (tray, (id, items)) in TRAYS.iter().enumerate() {
        let mut mask = BinaryMask::empty(FIXTURE_WIDTH, FIXTURE_HEIGHT).expect("positive size");
        let mut records = Vec::new();
        let mut dets = Vec::new();
        for (k, &(x0, y0, x1, y1, class)) in items.iter().enumerate() {
            let b = bbox(x0, y0, x1, y1);
            mask.fill_box(&b);
            let corners = [[x0, y0], [x1 - 1, y0], [x1 - 1, y1 - 1], [x0, y1 - 1]];
            records.push(ItemRecord {
                label: FIXTURE_LABELS[class].to_string(),
                bbox: [x0, y0, x1 - x0, y1 - y0],
                polygon: Some(corners.to_vec()),
            });
            let predicted = if variant == FixtureVariant::CorruptedLabel && tray == 2 && k == 2 {
                (class + 1) % FIXTURE_LABELS.len()
            } else {
                class
            };
            dets.push(RawDetection {
                bbox: b,
                objectness: Objectness::Probability(ITEM_OBJECTNESS),
                class_probs: one_hot(predicted, ITEM_CLASS_PROB),
            });
        }
        match *id {
            "tray_a" => {
                // hole inside the first item
                for (x, y) in [(18, 18), (19, 18), (18, 19), (19, 19)] {
                    mask.set(x, y, false);
                }
                // shifted duplicate of the second item
                dets.insert(
                    1,
                    RawDetection {
                        bbox: bbox(42, 11, 70, 30),
                        objectness: Objectness::Probability(0.75),
                        class_probs: one_hot(1, 0.4),
                    },
                );
            }
            "tray_b" => dets.push(RawDetection {
                bbox: bbox(60, 50, 80, 66),
                objectness: Objectness::Probability(0.1),
                class_probs: one_hot(4, 0.5),
            }),
            _ => mask.set(90, 68, true),
        }
        images.push(ImageRecord { id: id.to_string(), width: FIXTURE_WIDTH, height: FIXTURE_HEIGHT, items: records });
        masks.insert(id.to_string(), mask);
        detections.insert(id.to_string(), dets);
    }

    Fixture { labels, annotations: AnnotationFile { images }, masks, detections }
}

impl Fixture {
    pub fn item_count(&self) -> usize {
        self.annotations.images.iter().map(|i| i.items.len()).sum()
    }

    /// Writes `masks/<id>.pgm`, `detections.txt`, `annotations.json` and `labels.txt` under `root`.
    pub fn write(&self, root: &Path) -> Result<FixturePaths, PipelineError> {
        let paths = FixturePaths {
            root: root.to_path_buf(),
            masks_dir: root.join("masks"),
            detections: root.join("detections.txt"),
            annotations: root.join("annotations.json"),
            labels: root.join("labels.txt"),
        };
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| PipelineError::Io { path, source }
        };
        fs::create_dir_all(&paths.masks_dir).map_err(io(&paths.masks_dir))?;
        for (id, mask) in &self.masks {
            let path = paths.masks_dir.join(format!("{id}.pgm"));
            write_mask(mask, &path, PgmEncoding::Binary).map_err(|source| PipelineError::Pgm { source })?;
        }
        write_raw_detections(&self.detections, &paths.detections).map_err(PipelineError::Records)?;
        let json = serde_json::to_string_pretty(&self.annotations).expect("annotation file serialises");
        fs::write(&paths.annotations, json + "\n").map_err(io(&paths.annotations))?;
        fs::write(&paths.labels, self.labels.to_text()).map_err(io(&paths.labels))?;
        Ok(paths)
    }
}

/// `(image id, box, class)` of every fixture item.
pub fn fixture_item_boxes() -> Vec<(String, BBox, usize)> {
    TRAYS
        .iter()
        .flat_map(|(id, items)| items.iter().map(move |&(x0, y0, x1, y1, c)| (id.to_string(), bbox(x0, y0, x1, y1), c)))
        .collect()
}
