//! Integer pixel-grid primitives: points, half-open boxes and traced contours.
//!
//! Boxes use the half-open convention `[x0, x1) x [y0, y1)`, so a box's area is
//! exactly the number of pixels it covers and the intersection of two boxes is
//! again a box (or empty).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("degenerate box ({x0},{y0})-({x1},{y1}): corners must satisfy x0 < x1 and y0 < y1")]
    DegenerateBox { x0: u32, y0: u32, x1: u32, y1: u32 },
    #[error("contour must contain at least one point")]
    EmptyContour,
    #[error("contour points {index} and {next} are not 8-adjacent")]
    BrokenContour { index: usize, next: usize },
}

/// A pixel position: `x` is the column, `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Point {
    pub x: u32,
    pub y: u32,
}

impl Point {
    pub const fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }

    /// True when the two points are distinct and touch horizontally, vertically or diagonally.
    pub fn is_8_adjacent(self, other: Point) -> bool {
        let dx = self.x.abs_diff(other.x);
        let dy = self.y.abs_diff(other.y);
        dx <= 1 && dy <= 1 && (dx, dy) != (0, 0)
    }
}

/// Axis-aligned pixel box with inclusive top-left and exclusive bottom-right corners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[u32; 4]", into = "[u32; 4]")]
pub struct BBox {
    x0: u32,
    y0: u32,
    x1: u32,
    y1: u32,
}

impl BBox {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Result<Self, GeometryError> {
        if x0 < x1 && y0 < y1 {
            Ok(Self { x0, y0, x1, y1 })
        } else {
            Err(GeometryError::DegenerateBox { x0, y0, x1, y1 })
        }
    }

    /// Builds a box from its top-left corner and a positive width and height.
    pub fn from_xywh(x: u32, y: u32, w: u32, h: u32) -> Result<Self, GeometryError> {
        Self::new(x, y, x.saturating_add(w), y.saturating_add(h))
    }

    /// The single-pixel box at `p`.
    pub fn unit(p: Point) -> Self {
        Self { x0: p.x, y0: p.y, x1: p.x + 1, y1: p.y + 1 }
    }

    pub fn x0(&self) -> u32 {
        self.x0
    }
    pub fn y0(&self) -> u32 {
        self.y0
    }
    pub fn x1(&self) -> u32 {
        self.x1
    }
    pub fn y1(&self) -> u32 {
        self.y1
    }
    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }
    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> u64 {
        box_area(self)
    }

    pub fn contains(&self, p: Point) -> bool {
        (self.x0..self.x1).contains(&p.x) && (self.y0..self.y1).contains(&p.y)
    }

    /// The overlapping box, or `None` when the boxes share no pixel.
    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x0 = self.x0.max(other.x0);
        let y0 = self.y0.max(other.y0);
        let x1 = self.x1.min(other.x1);
        let y1 = self.y1.min(other.y1);
        (x0 < x1 && y0 < y1).then_some(BBox { x0, y0, x1, y1 })
    }

    /// Smallest box containing both.
    pub fn union_hull(&self, other: &BBox) -> BBox {
        BBox {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    /// Grows the box so it also covers `p`.
    pub fn include(&mut self, p: Point) {
        self.x0 = self.x0.min(p.x);
        self.y0 = self.y0.min(p.y);
        self.x1 = self.x1.max(p.x + 1);
        self.y1 = self.y1.max(p.y + 1);
    }

    /// Restricts the box to a `width x height` image; `None` if nothing remains.
    pub fn clamp_to(&self, width: u32, height: u32) -> Option<BBox> {
        let x1 = self.x1.min(width);
        let y1 = self.y1.min(height);
        (self.x0 < x1 && self.y0 < y1).then_some(BBox { x0: self.x0, y0: self.y0, x1, y1 })
    }
}

impl TryFrom<[u32; 4]> for BBox {
    type Error = GeometryError;

    fn try_from([x0, y0, x1, y1]: [u32; 4]) -> Result<Self, Self::Error> {
        BBox::new(x0, y0, x1, y1)
    }
}

impl From<BBox> for [u32; 4] {
    fn from(b: BBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

/// Closed chain of pixels, each 8-adjacent to the next; the last point links back to the first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contour {
    points: Vec<Point>,
}

impl Contour {
    /// Checks closure and 8-adjacency of consecutive points.
    pub fn new(points: Vec<Point>) -> Result<Self, GeometryError> {
        if points.is_empty() {
            return Err(GeometryError::EmptyContour);
        }
        let n = points.len();
        if n > 1 {
            for i in 0..n {
                let next = (i + 1) % n;
                if !points[i].is_8_adjacent(points[next]) {
                    return Err(GeometryError::BrokenContour { index: i, next });
                }
            }
        }
        Ok(Self { points })
    }

    pub(crate) fn from_trace(points: Vec<Point>) -> Self {
        debug_assert!(!points.is_empty());
        Self { points }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Tightest box around the contour pixels.
    pub fn bounding_box(&self) -> BBox {
        let mut b = BBox::unit(self.points[0]);
        for &p in &self.points[1..] {
            b.include(p);
        }
        b
    }
}

pub fn box_area(b: &BBox) -> u64 {
    u64::from(b.width()) * u64::from(b.height())
}

pub fn box_intersection_area(a: &BBox, b: &BBox) -> u64 {
    a.intersection(b).map_or(0, |i| i.area())
}

/// Fraction of `a` covered by `b`. Not symmetric.
pub fn intersection_over_self(a: &BBox, b: &BBox) -> f64 {
    box_intersection_area(a, b) as f64 / box_area(a) as f64
}

pub fn intersection_over_union(a: &BBox, b: &BBox) -> f64 {
    let inter = box_intersection_area(a, b);
    let union = box_area(a) + box_area(b) - inter;
    inter as f64 / union as f64
}

/// True iff some pixel of `c` lies inside `b`.
pub fn box_intersects_contour(b: &BBox, c: &Contour) -> bool {
    c.points().iter().any(|&p| b.contains(p))
}
