//! Line-oriented detection records.
//!
//! One detection per line:
//!
//! ```text
//! image_id x y w h objectness p_0 p_1 ... p_{C-1}
//! ```
//!
//! Fields are separated by whitespace and/or commas. `x y w h` may be
//! fractional; they are converted to the half-open pixel box
//! `[round(x), round(x + w)) x [round(y), round(y + h))` with halves rounded
//! away from zero, negative coordinates clamped to 0 and the box widened to at
//! least one pixel. `objectness` is a logit or a probability depending on the
//! reader's [`ObjectnessKind`]. Every record in a file carries the same number
//! of class probabilities. Blank lines and lines starting with `#` are skipped.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::detection::{Detection, DetectionError, ObjectnessKind, RawDetection};
use crate::geometry::BBox;

/// Detections grouped by image id, in file order within each image.
pub type DetectionsByImage = BTreeMap<String, Vec<RawDetection>>;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: expected at least 7 fields (id, x, y, w, h, objectness, one probability), found {found}")]
    TooFewFields { line: usize, found: usize },
    #[error("line {line}: expected {expected} class probabilities like the first record, found {found}")]
    ClassCount { line: usize, expected: usize, found: usize },
    #[error("line {line}: field {field} ({value:?}) is not a finite number")]
    NotNumeric { line: usize, field: usize, value: String },
    #[error("line {line}: {source}")]
    Invalid { line: usize, source: DetectionError },
    #[error("image id {0:?} cannot be written: it contains a separator or starts with '#'")]
    BadImageId(String),
}

fn to_pixel(v: f64) -> u32 {
    v.round().clamp(0.0, f64::from(u32::MAX - 1)) as u32
}

fn box_from_xywh(x: f64, y: f64, w: f64, h: f64) -> BBox {
    let (x0, y0) = (to_pixel(x), to_pixel(y));
    let x1 = to_pixel(x + w).max(x0 + 1);
    let y1 = to_pixel(y + h).max(y0 + 1);
    BBox::new(x0, y0, x1, y1).expect("widened to at least one pixel")
}

pub fn parse_detections(text: &str, kind: ObjectnessKind) -> Result<DetectionsByImage, RecordError> {
    let mut out = DetectionsByImage::new();
    let mut classes = None;
    for (i, raw_line) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw_line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> =
            trimmed.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty()).collect();
        if fields.len() < 7 {
            return Err(RecordError::TooFewFields { line, found: fields.len() });
        }
        let found = fields.len() - 6;
        let expected = *classes.get_or_insert(found);
        if found != expected {
            return Err(RecordError::ClassCount { line, expected, found });
        }
        let numbers = fields[1..]
            .iter()
            .enumerate()
            .map(|(k, f)| match f.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(RecordError::NotNumeric { line, field: k + 2, value: (*f).to_owned() }),
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let bbox = box_from_xywh(numbers[0], numbers[1], numbers[2], numbers[3]);
        let det = RawDetection::new(bbox, kind.wrap(numbers[4]), numbers[5..].to_vec())
            .map_err(|source| RecordError::Invalid { line, source })?;
        out.entry(fields[0].to_owned()).or_default().push(det);
    }
    Ok(out)
}

pub fn read_detections(path: &Path, kind: ObjectnessKind) -> Result<DetectionsByImage, RecordError> {
    let text =
        fs::read_to_string(path).map_err(|source| RecordError::Io { path: path.display().to_string(), source })?;
    parse_detections(&text, kind)
}

fn check_id(id: &str) -> Result<(), RecordError> {
    if id.is_empty() || id.starts_with('#') || id.contains(|c: char| c == ',' || c.is_whitespace()) {
        return Err(RecordError::BadImageId(id.to_owned()));
    }
    Ok(())
}

fn push_record(out: &mut String, id: &str, bbox: &BBox, objectness: f64, probs: impl Iterator<Item = f64>) {
    write!(out, "{id} {} {} {} {} {objectness}", bbox.x0(), bbox.y0(), bbox.width(), bbox.height()).unwrap();
    for p in probs {
        write!(out, " {p}").unwrap();
    }
    out.push('\n');
}

/// Serialises raw detections; [`parse_detections`] with the matching
/// [`ObjectnessKind`] reads them back unchanged.
pub fn format_raw_detections(dets: &DetectionsByImage) -> Result<String, RecordError> {
    let mut out = String::new();
    for (id, list) in dets {
        check_id(id)?;
        for d in list {
            push_record(&mut out, id, &d.bbox, d.objectness.raw_value(), d.class_probs.iter().copied());
        }
    }
    Ok(out)
}

/// Serialises scored detections as records with objectness probability 1 and
/// a one-hot probability vector holding the score, so that reading them back
/// and scoring reproduces each box, class and score. (A zero score on a class
/// other than 0 reads back as class 0.)
pub fn format_detections(dets: &BTreeMap<String, Vec<Detection>>, num_classes: usize) -> Result<String, RecordError> {
    let mut out = String::new();
    for (id, list) in dets {
        check_id(id)?;
        for d in list {
            let probs = (0..num_classes.max(d.class_id + 1)).map(|c| if c == d.class_id { d.score } else { 0.0 });
            push_record(&mut out, id, &d.bbox, 1.0, probs);
        }
    }
    Ok(out)
}

fn write_text(path: &Path, text: &str) -> Result<(), RecordError> {
    fs::write(path, text).map_err(|source| RecordError::Io { path: path.display().to_string(), source })
}

pub fn write_raw_detections(dets: &DetectionsByImage, path: &Path) -> Result<(), RecordError> {
    write_text(path, &format_raw_detections(dets)?)
}

pub fn write_detections(
    dets: &BTreeMap<String, Vec<Detection>>,
    num_classes: usize,
    path: &Path,
) -> Result<(), RecordError> {
    write_text(path, &format_detections(dets, num_classes)?)
}
