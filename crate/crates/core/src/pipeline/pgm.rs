//! PGM (netpbm graymap) reading and writing, ASCII `P2` and binary `P5`.
//!
//! Binary samples are one byte when `maxval < 256` and two bytes big-endian
//! otherwise. Comments (`#` to end of line) are accepted anywhere in the
//! header and, for `P2`, between samples. Bytes after the last `P5` sample are
//! ignored.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::mask::{BinaryMask, LabelMask};

/// Largest accepted image, in pixels.
pub const MAX_PIXELS: u64 = 1 << 30;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("not a PGM file: magic number must be P2 or P5")]
    BadMagic,
    #[error("malformed header: {0}")]
    BadHeader(&'static str),
    #[error("maxval {0} is outside 1..=65535")]
    BadMaxval(u64),
    #[error("image {width}x{height} exceeds the supported size")]
    DimensionOverflow { width: u64, height: u64 },
    #[error("truncated pixel data: expected {expected} samples, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("sample {index} is not a decimal number")]
    BadSample { index: usize },
    #[error("sample {index} = {value} exceeds maxval {maxval}")]
    SampleOutOfRange { index: usize, value: u64, maxval: u16 },
    #[error("label {0} does not fit a 16-bit PGM")]
    LabelTooLarge(u32),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmEncoding {
    /// `P2`
    Ascii,
    /// `P5`
    Binary,
}

/// Decoded graymap samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

impl GrayImage {
    /// A sample above half of maxval is foreground.
    pub fn to_binary(&self) -> BinaryMask {
        let maxval = u32::from(self.maxval);
        let bits = self.samples.iter().map(|&s| 2 * u32::from(s) > maxval).collect();
        BinaryMask::new(self.width, self.height, bits).expect("header dimensions match payload")
    }

    /// Samples taken as label ids.
    pub fn to_labels(&self) -> LabelMask {
        let labels = self.samples.iter().map(|&s| u32::from(s)).collect();
        LabelMask::new(self.width, self.height, labels).expect("header dimensions match payload")
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_separators(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n' && c != b'\r') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    /// Next decimal token, `None` at end of input, `Err(())` for a non-digit token.
    fn number(&mut self) -> Option<Result<u64, ()>> {
        self.skip_separators();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#') {
            self.pos += 1;
        }
        if start == self.pos {
            return None;
        }
        let token = &self.bytes[start..self.pos];
        if token.len() > 19 || !token.iter().all(u8::is_ascii_digit) {
            return Some(Err(()));
        }
        Some(Ok(token.iter().fold(0u64, |acc, d| acc * 10 + u64::from(d - b'0'))))
    }
}

pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage, PgmError> {
    let encoding = match bytes.get(..2) {
        Some(b"P2") => PgmEncoding::Ascii,
        Some(b"P5") => PgmEncoding::Binary,
        _ => return Err(PgmError::BadMagic),
    };
    if bytes.get(2).is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#') {
        return Err(PgmError::BadMagic);
    }
    let mut cur = Cursor { bytes, pos: 2 };
    let mut header = |what: &'static str| match cur.number() {
        Some(Ok(v)) => Ok(v),
        _ => Err(PgmError::BadHeader(what)),
    };
    let width = header("width")?;
    let height = header("height")?;
    let maxval = header("maxval")?;
    if width == 0 || height == 0 {
        return Err(PgmError::BadHeader("width and height must be positive"));
    }
    if width > u64::from(u32::MAX) || height > u64::from(u32::MAX) || width * height > MAX_PIXELS {
        return Err(PgmError::DimensionOverflow { width, height });
    }
    if !(1..=65535).contains(&maxval) {
        return Err(PgmError::BadMaxval(maxval));
    }
    let maxval = maxval as u16;
    let expected = (width * height) as usize;

    let samples = match encoding {
        PgmEncoding::Ascii => {
            let mut samples = Vec::with_capacity(expected);
            while samples.len() < expected {
                let index = samples.len();
                match cur.number() {
                    None => return Err(PgmError::Truncated { expected, found: index }),
                    Some(Err(())) => return Err(PgmError::BadSample { index }),
                    Some(Ok(value)) if value > u64::from(maxval) => {
                        return Err(PgmError::SampleOutOfRange { index, value, maxval })
                    }
                    Some(Ok(value)) => samples.push(value as u16),
                }
            }
            samples
        }
        PgmEncoding::Binary => {
            // exactly one whitespace byte separates maxval from the raster
            if !cur.bytes.get(cur.pos).is_some_and(u8::is_ascii_whitespace) {
                return Err(PgmError::BadHeader("missing separator after maxval"));
            }
            let data = &bytes[cur.pos + 1..];
            let wide = maxval > 255;
            let sample_bytes = if wide { 2 } else { 1 };
            let found = data.len() / sample_bytes;
            if found < expected {
                return Err(PgmError::Truncated { expected, found });
            }
            let samples: Vec<u16> = if wide {
                data.chunks_exact(2).take(expected).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
            } else {
                data[..expected].iter().map(|&b| u16::from(b)).collect()
            };
            if let Some((index, &value)) = samples.iter().enumerate().find(|(_, &v)| v > maxval) {
                return Err(PgmError::SampleOutOfRange { index, value: u64::from(value), maxval });
            }
            samples
        }
    };
    Ok(GrayImage { width: width as u32, height: height as u32, maxval, samples })
}

pub fn encode_pgm(img: &GrayImage, encoding: PgmEncoding) -> Vec<u8> {
    let magic = match encoding {
        PgmEncoding::Ascii => "P2",
        PgmEncoding::Binary => "P5",
    };
    let mut out = format!("{magic}\n{} {}\n{}\n", img.width, img.height, img.maxval).into_bytes();
    match encoding {
        PgmEncoding::Binary if img.maxval > 255 => {
            out.extend(img.samples.iter().flat_map(|s| s.to_be_bytes()));
        }
        PgmEncoding::Binary => out.extend(img.samples.iter().map(|&s| s as u8)),
        PgmEncoding::Ascii => {
            for row in img.samples.chunks(img.width as usize) {
                let line: Vec<String> = row.iter().map(u16::to_string).collect();
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
    }
    out
}

/// Binary mask as a graymap with maxval 255 (food = 255).
pub fn binary_to_gray(m: &BinaryMask) -> GrayImage {
    GrayImage {
        width: m.width(),
        height: m.height(),
        maxval: 255,
        samples: m.bits().iter().map(|&b| if b { 255 } else { 0 }).collect(),
    }
}

/// Label mask as a graymap whose maxval is the largest label (at least 1).
pub fn labels_to_gray(m: &LabelMask) -> Result<GrayImage, PgmError> {
    let max = m.labels().iter().copied().max().unwrap_or(0);
    if max > 65535 {
        return Err(PgmError::LabelTooLarge(max));
    }
    Ok(GrayImage {
        width: m.width(),
        height: m.height(),
        maxval: max.max(1) as u16,
        samples: m.labels().iter().map(|&l| l as u16).collect(),
    })
}

fn read_gray(path: &Path) -> Result<GrayImage, PgmError> {
    let bytes = fs::read(path).map_err(|source| PgmError::Io { path: path.display().to_string(), source })?;
    parse_pgm(&bytes)
}

fn write_gray(img: &GrayImage, path: &Path, encoding: PgmEncoding) -> Result<(), PgmError> {
    fs::write(path, encode_pgm(img, encoding))
        .map_err(|source| PgmError::Io { path: path.display().to_string(), source })
}

pub fn read_mask(path: &Path) -> Result<BinaryMask, PgmError> {
    Ok(read_gray(path)?.to_binary())
}

pub fn read_label_mask(path: &Path) -> Result<LabelMask, PgmError> {
    Ok(read_gray(path)?.to_labels())
}

pub fn write_mask(m: &BinaryMask, path: &Path, encoding: PgmEncoding) -> Result<(), PgmError> {
    write_gray(&binary_to_gray(m), path, encoding)
}

pub fn write_label_mask(m: &LabelMask, path: &Path, encoding: PgmEncoding) -> Result<(), PgmError> {
    write_gray(&labels_to_gray(m)?, path, encoding)
}
