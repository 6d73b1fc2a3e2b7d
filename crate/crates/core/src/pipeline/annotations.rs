//! Label maps and tray annotations.
//!
//! A label map is a text file with one class name per line; the line order
//! fixes the class ids (the detector's probability order). Blank lines and
//! lines starting with `#` are skipped.
//!
//! Annotations are one JSON document per dataset:
//!
//! ```json
//! {
//!   "images": [
//!     {
//!       "id": "tray_001",
//!       "width": 3264,
//!       "height": 2448,
//!       "items": [
//!         { "label": "pasta", "bbox": [120, 340, 610, 580], "polygon": [[130, 350], [700, 360], [690, 900]] }
//!       ]
//!     }
//!   ]
//! }
//! ```
//!
//! `bbox` is `[x, y, width, height]` in pixels; `polygon` (optional) lists the
//! outline vertices as `[x, y]` pixel coordinates.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BBox, Point};
use crate::metrics::GroundTruthItem;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("annotation schema violation: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("label map line {line}: duplicate label {label:?}")]
    DuplicateLabel { line: usize, label: String },
    #[error("label map is empty")]
    EmptyLabelMap,
    #[error("image {image:?}: dimensions must be positive")]
    EmptyImage { image: String },
    #[error("duplicate image id {0:?}")]
    DuplicateImage(String),
    #[error("image {image:?} item {item}: unknown label {label:?}")]
    UnknownLabel { image: String, item: usize, label: String },
    #[error("image {image:?} item {item}: bounding box {bbox:?} is empty or leaves the {width}x{height} image")]
    BoxOutOfBounds { image: String, item: usize, bbox: [u32; 4], width: u32, height: u32 },
    #[error("image {image:?} item {item}: polygon vertex {vertex} ({x},{y}) lies outside the {width}x{height} image")]
    PolygonOutOfBounds { image: String, item: usize, vertex: usize, x: u32, y: u32, width: u32, height: u32 },
}

/// Class names in detector order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    names: Vec<String>,
    ids: HashMap<String, usize>,
}

impl LabelMap {
    pub fn new(names: Vec<String>) -> Result<Self, AnnotationError> {
        if names.is_empty() {
            return Err(AnnotationError::EmptyLabelMap);
        }
        let mut ids = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if ids.insert(name.clone(), i).is_some() {
                return Err(AnnotationError::DuplicateLabel { line: i + 1, label: name.clone() });
            }
        }
        Ok(Self { names, ids })
    }

    pub fn parse(text: &str) -> Result<Self, AnnotationError> {
        let names =
            text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(str::to_owned).collect();
        Self::new(names)
    }

    pub fn read(path: &Path) -> Result<Self, AnnotationError> {
        let text = fs::read_to_string(path)
            .map_err(|source| AnnotationError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Id given to labels missing from the map when unknown labels are allowed.
    pub fn unknown_id(&self) -> usize {
        self.names.len()
    }

    pub fn to_text(&self) -> String {
        self.names.iter().map(|n| format!("{n}\n")).collect()
    }
}

/// What to do with an annotation label the label map does not know.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnknownLabels {
    #[default]
    Reject,
    /// Map to [`LabelMap::unknown_id`].
    MapToReserved,
}

/// Validated annotations of one tray image.
#[derive(Debug, Clone, PartialEq)]
pub struct TrayAnnotation {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub items: Vec<GroundTruthItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationFile {
    pub images: Vec<ImageRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageRecord {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub items: Vec<ItemRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemRecord {
    pub label: String,
    /// `[x, y, width, height]`
    pub bbox: [u32; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polygon: Option<Vec<[u32; 2]>>,
}

impl AnnotationFile {
    pub fn validate(&self, labels: &LabelMap, unknown: UnknownLabels) -> Result<Vec<TrayAnnotation>, AnnotationError> {
        let mut seen = HashSet::new();
        self.images
            .iter()
            .map(|img| {
                if !seen.insert(img.id.as_str()) {
                    return Err(AnnotationError::DuplicateImage(img.id.clone()));
                }
                if img.width == 0 || img.height == 0 {
                    return Err(AnnotationError::EmptyImage { image: img.id.clone() });
                }
                let items = img
                    .items
                    .iter()
                    .enumerate()
                    .map(|(i, item)| validate_item(img, i, item, labels, unknown))
                    .collect::<Result<_, _>>()?;
                Ok(TrayAnnotation { image_id: img.id.clone(), width: img.width, height: img.height, items })
            })
            .collect()
    }
}

fn validate_item(
    img: &ImageRecord,
    item: usize,
    rec: &ItemRecord,
    labels: &LabelMap,
    unknown: UnknownLabels,
) -> Result<GroundTruthItem, AnnotationError> {
    let class_id = match (labels.id(&rec.label), unknown) {
        (Some(id), _) => id,
        (None, UnknownLabels::MapToReserved) => labels.unknown_id(),
        (None, UnknownLabels::Reject) => {
            return Err(AnnotationError::UnknownLabel { image: img.id.clone(), item, label: rec.label.clone() })
        }
    };
    let [x, y, w, h] = rec.bbox;
    let bbox = BBox::from_xywh(x, y, w, h)
        .ok()
        .filter(|b| b.x1() <= img.width && b.y1() <= img.height && b.x1() - b.x0() == w && b.y1() - b.y0() == h)
        .ok_or(AnnotationError::BoxOutOfBounds {
            image: img.id.clone(),
            item,
            bbox: rec.bbox,
            width: img.width,
            height: img.height,
        })?;
    let polygon = rec
        .polygon
        .as_ref()
        .map(|pts| {
            pts.iter()
                .enumerate()
                .map(|(vertex, &[px, py])| {
                    if px < img.width && py < img.height {
                        Ok(Point::new(px, py))
                    } else {
                        Err(AnnotationError::PolygonOutOfBounds {
                            image: img.id.clone(),
                            item,
                            vertex,
                            x: px,
                            y: py,
                            width: img.width,
                            height: img.height,
                        })
                    }
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .transpose()?;
    Ok(GroundTruthItem { bbox, class_id, polygon })
}

pub fn parse_annotations(
    text: &str,
    labels: &LabelMap,
    unknown: UnknownLabels,
) -> Result<Vec<TrayAnnotation>, AnnotationError> {
    let file: AnnotationFile = serde_json::from_str(text)?;
    file.validate(labels, unknown)
}

pub fn read_annotations(
    path: &Path,
    labels: &LabelMap,
    unknown: UnknownLabels,
) -> Result<Vec<TrayAnnotation>, AnnotationError> {
    let text =
        fs::read_to_string(path).map_err(|source| AnnotationError::Io { path: path.display().to_string(), source })?;
    parse_annotations(&text, labels, unknown)
}
