//! Binary food masks and their post-processing: connected components, exterior
//! boundary tracing, hole filling and region extraction.
//!
//! Foreground uses 8-connectivity and background 4-connectivity. Pixels outside
//! the image are treated as background, so regions touching the border trace
//! like any other region.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BBox, Contour, Point};

/// Fraction of the image area below which a region is discarded.
pub const DEFAULT_MIN_AREA_FRACTION: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MaskError {
    #[error("mask dimensions must be at least 1x1, got {width}x{height}")]
    EmptyDimensions { width: u32, height: u32 },
    #[error("mask {width}x{height} needs {expected} pixels, got {actual}")]
    LengthMismatch { width: u32, height: u32, expected: usize, actual: usize },
    #[error("start pixel ({x},{y}) is outside the {width}x{height} mask")]
    StartOutOfBounds { x: u32, y: u32, width: u32, height: u32 },
    #[error("start pixel ({x},{y}) is background")]
    StartIsBackground { x: u32, y: u32 },
    #[error(
        "start pixel ({x},{y}) has a foreground west neighbour; tracing must begin at a region's raster-first pixel"
    )]
    StartNotRasterFirst { x: u32, y: u32 },
    #[error("boundary trace from ({x},{y}) did not close")]
    TraceDidNotClose { x: u32, y: u32 },
}

fn check_dims(width: u32, height: u32, len: usize) -> Result<(), MaskError> {
    if width == 0 || height == 0 {
        return Err(MaskError::EmptyDimensions { width, height });
    }
    let expected = width as usize * height as usize;
    if len != expected {
        return Err(MaskError::LengthMismatch { width, height, expected, actual: len });
    }
    Ok(())
}

/// Row-major food (true) / background (false) map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self, MaskError> {
        check_dims(width, height, bits.len())?;
        Ok(Self { width, height, bits })
    }

    pub fn empty(width: u32, height: u32) -> Result<Self, MaskError> {
        Self::new(width, height, vec![false; width as usize * height as usize])
    }

    /// Parses rows of `#` (food) and `.` (background); handy in tests.
    pub fn from_ascii(rows: &[&str]) -> Result<Self, MaskError> {
        let height = rows.len() as u32;
        let width = rows.first().map_or(0, |r| r.len()) as u32;
        let bits: Vec<bool> = rows.iter().flat_map(|r| r.bytes().map(|b| b == b'#')).collect();
        Self::new(width, height, bits)
    }

    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[self.index(x, y)]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let i = self.index(x, y);
        self.bits[i] = value;
    }

    /// Out-of-image coordinates read as background.
    fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && x < i64::from(self.width)
            && y < i64::from(self.height)
            && self.bits[y as usize * self.width as usize + x as usize]
    }

    fn index(&self, x: u32, y: u32) -> usize {
        assert!(x < self.width && y < self.height, "pixel ({x},{y}) outside {}x{}", self.width, self.height);
        y as usize * self.width as usize + x as usize
    }

    pub fn count_foreground(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Sets every pixel inside `b` (clipped to the image).
    pub fn fill_box(&mut self, b: &BBox) {
        if let Some(b) = b.clamp_to(self.width, self.height) {
            for y in b.y0()..b.y1() {
                let row = y as usize * self.width as usize;
                self.bits[row + b.x0() as usize..row + b.x1() as usize].fill(true);
            }
        }
    }

    /// Label 1 for food, 0 for background.
    pub fn to_labels(&self) -> LabelMask {
        LabelMask { width: self.width, height: self.height, labels: self.bits.iter().map(|&b| u32::from(b)).collect() }
    }
}

/// Row-major per-pixel identifiers (region ids or class ids).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMask {
    width: u32,
    height: u32,
    labels: Vec<u32>,
}

impl LabelMask {
    pub fn new(width: u32, height: u32, labels: Vec<u32>) -> Result<Self, MaskError> {
        check_dims(width, height, labels.len())?;
        Ok(Self { width, height, labels })
    }

    pub fn filled(width: u32, height: u32, label: u32) -> Result<Self, MaskError> {
        Self::new(width, height, vec![label; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }
    pub fn len(&self) -> usize {
        self.labels.len()
    }
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, x: u32, y: u32) -> u32 {
        self.labels[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, label: u32) {
        self.labels[y as usize * self.width as usize + x as usize] = label;
    }

    /// Foreground wherever the label is non-zero.
    pub fn to_binary(&self) -> BinaryMask {
        BinaryMask { width: self.width, height: self.height, bits: self.labels.iter().map(|&l| l != 0).collect() }
    }
}

/// A food region: its exterior boundary, tightest box and filled pixel area.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub contour: Contour,
    pub bbox: BBox,
    pub area: u64,
}

struct ComponentStats {
    start: Point,
    bbox: BBox,
    area: u64,
}

/// A maximal horizontal run `[x0, x1)` of equal pixels in row `y`.
#[derive(Debug, Clone, Copy)]
struct Run {
    y: u32,
    x0: u32,
    x1: u32,
}

fn find(parent: &mut [u32], mut i: u32) -> u32 {
    while parent[i as usize] != i {
        let up = parent[parent[i as usize] as usize];
        parent[i as usize] = up;
        i = up;
    }
    i
}

/// Runs of pixels equal to `value` in raster order, and the component of each
/// run numbered 0.. in raster order of the components' first runs. Runs in
/// consecutive rows join when they share a column, or also when they touch
/// diagonally if `diagonal` is set.
fn label_runs(m: &BinaryMask, value: bool, diagonal: bool) -> (Vec<Run>, Vec<u32>, usize) {
    let w = m.width as usize;
    let slack = u32::from(diagonal);
    let mut runs: Vec<Run> = Vec::new();
    let mut parent: Vec<u32> = Vec::new();
    let mut prev = 0..0;
    for (y, row) in m.bits.chunks_exact(w).enumerate() {
        let row_start = runs.len();
        let mut above = prev.start;
        let mut x = 0;
        while x < w {
            if row[x] != value {
                x += 1;
                continue;
            }
            let x0 = x;
            while x < w && row[x] == value {
                x += 1;
            }
            let run = Run { y: y as u32, x0: x0 as u32, x1: x as u32 };
            let id = runs.len() as u32;
            runs.push(run);
            parent.push(id);
            while above < prev.end && runs[above].x1 + slack <= run.x0 {
                above += 1;
            }
            let mut k = above;
            while k < prev.end && runs[k].x0 < run.x1 + slack {
                let (a, b) = (find(&mut parent, k as u32), find(&mut parent, id));
                // the smaller index is the raster-first run of the merged component
                let (lo, hi) = (a.min(b), a.max(b));
                parent[hi as usize] = lo;
                k += 1;
            }
        }
        prev = row_start..runs.len();
    }
    let mut component = vec![0u32; runs.len()];
    let mut count = 0;
    for i in 0..runs.len() {
        let root = find(&mut parent, i as u32) as usize;
        if root == i {
            component[i] = count;
            count += 1;
        } else {
            component[i] = component[root];
        }
    }
    (runs, component, count as usize)
}

fn label_components(m: &BinaryMask) -> (LabelMask, Vec<ComponentStats>) {
    let (runs, component, count) = label_runs(m, true, true);
    let w = m.width as usize;
    let mut labels = vec![0u32; m.bits.len()];
    let mut stats: Vec<ComponentStats> = Vec::with_capacity(count);
    for (run, &c) in runs.iter().zip(&component) {
        let row = run.y as usize * w;
        labels[row + run.x0 as usize..row + run.x1 as usize].fill(c + 1);
        let first = Point::new(run.x0, run.y);
        let last = Point::new(run.x1 - 1, run.y);
        match stats.get_mut(c as usize) {
            Some(s) => {
                s.bbox.include(first);
                s.bbox.include(last);
                s.area += u64::from(run.x1 - run.x0);
            }
            None => {
                let mut bbox = BBox::unit(first);
                bbox.include(last);
                stats.push(ComponentStats { start: first, bbox, area: u64::from(run.x1 - run.x0) });
            }
        }
    }
    let mask = LabelMask { width: m.width, height: m.height, labels };
    (mask, stats)
}

/// Labels foreground components by 8-connectivity. Ids run 1..=K in raster
/// order of each component's first pixel; background stays 0.
pub fn connected_components(m: &BinaryMask) -> LabelMask {
    label_components(m).0
}

// Clockwise ring around a pixel in image coordinates (y grows downward),
// starting at the west neighbour.
const RING: [(i64, i64); 8] = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)];
const WEST: usize = 0;

fn ring_index(dx: i64, dy: i64) -> usize {
    RING.iter().position(|&d| d == (dx, dy)).expect("offset between ring neighbours is a unit step")
}

/// Traces the exterior boundary of the region whose raster-first pixel is `start`.
///
/// Moore-neighbour tracing, clockwise, with the start pixel entered from its
/// west neighbour. The trace ends when the start pixel is entered again and the
/// move that follows would repeat the very first move out of it (Jacob's
/// stopping criterion). Revisiting the start pixel along a different path does
/// not end the trace, so regions joined at the start pixel or carrying
/// single-pixel-wide spurs are traced completely. Pixels passed more than once
/// appear more than once in the result.
pub fn trace_boundary(m: &BinaryMask, start: Point) -> Result<Contour, MaskError> {
    let Point { x, y } = start;
    if x >= m.width || y >= m.height {
        return Err(MaskError::StartOutOfBounds { x, y, width: m.width, height: m.height });
    }
    if !m.get(x, y) {
        return Err(MaskError::StartIsBackground { x, y });
    }
    let origin = (i64::from(x), i64::from(y));
    if m.get_signed(origin.0 - 1, origin.1) {
        return Err(MaskError::StartNotRasterFirst { x, y });
    }

    let mut points = vec![start];
    let Some(first) = moore_step(m, TraceState { pixel: origin, backtrack: WEST }) else {
        // isolated pixel
        return Ok(Contour::from_trace(points));
    };
    let mut state = first;
    // each (pixel, backtrack) state occurs at most once per loop
    let max_steps = 8 * (m.width as usize * m.height as usize) + 8;
    for _ in 0..max_steps {
        let next = moore_step(m, state).expect("a traced pixel keeps the neighbour it was entered from");
        if state.pixel == origin && next == first {
            return Ok(Contour::from_trace(points));
        }
        points.push(Point::new(state.pixel.0 as u32, state.pixel.1 as u32));
        state = next;
    }
    Err(MaskError::TraceDidNotClose { x, y })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct TraceState {
    pixel: (i64, i64),
    /// Ring index of the background neighbour the scan resumes from.
    backtrack: usize,
}

/// One Moore-neighbour move: scan clockwise from the backtrack neighbour to the
/// first foreground pixel; the last background pixel scanned becomes the new
/// backtrack. `None` for an isolated pixel.
fn moore_step(m: &BinaryMask, s: TraceState) -> Option<TraceState> {
    let (cx, cy) = s.pixel;
    (1..=8).map(|k| (s.backtrack + k) % 8).find_map(|d| {
        let (nx, ny) = (cx + RING[d].0, cy + RING[d].1);
        m.get_signed(nx, ny).then(|| {
            let prev = RING[(d + 7) % 8];
            let (px, py) = (cx + prev.0, cy + prev.1);
            TraceState { pixel: (nx, ny), backtrack: ring_index(px - nx, py - ny) }
        })
    })
}

/// Turns every background pixel that cannot reach the image border through
/// 4-connected background into foreground.
pub fn fill_holes(m: &BinaryMask) -> BinaryMask {
    let (w, h) = (m.width, m.height);
    let (runs, component, count) = label_runs(m, false, false);
    let mut outside = vec![false; count];
    for (run, &c) in runs.iter().zip(&component) {
        if run.y == 0 || run.y + 1 == h || run.x0 == 0 || run.x1 == w {
            outside[c as usize] = true;
        }
    }
    let mut bits = vec![true; m.bits.len()];
    for (run, &c) in runs.iter().zip(&component) {
        if outside[c as usize] {
            let row = run.y as usize * w as usize;
            bits[row + run.x0 as usize..row + run.x1 as usize].fill(false);
        }
    }
    BinaryMask { width: w, height: h, bits }
}

/// Fills holes, then returns one [`Region`] per 8-connected component whose
/// area is at least `min_area_fraction` of the image, in raster order of the
/// components' first pixels.
pub fn extract_regions(m: &BinaryMask, min_area_fraction: f64) -> Result<Vec<Region>, MaskError> {
    let filled = fill_holes(m);
    let (_, stats) = label_components(&filled);
    let min_area = min_area_fraction * (m.width as f64 * m.height as f64);
    stats
        .into_iter()
        .filter(|c| c.area as f64 >= min_area)
        .map(|c| {
            let contour = trace_boundary(&filled, c.start)?;
            Ok(Region { contour, bbox: c.bbox, area: c.area })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(u32, u32)]) -> Vec<Point> {
        v.iter().map(|&(x, y)| Point::new(x, y)).collect()
    }

    #[test]
    fn components_empty_and_diagonal() {
        let m = BinaryMask::empty(4, 3).unwrap();
        assert!(connected_components(&m).labels().iter().all(|&l| l == 0));

        let m = BinaryMask::from_ascii(&["#.", ".#"]).unwrap();
        assert_eq!(connected_components(&m).labels(), &[1, 0, 0, 1]);
    }

    #[test]
    fn components_separated_by_column() {
        let m = BinaryMask::from_ascii(&["##.#", "#..#", "##.#"]).unwrap();
        assert_eq!(connected_components(&m).labels(), &[1, 1, 0, 2, 1, 0, 0, 2, 1, 1, 0, 2]);
    }

    #[test]
    fn components_raster_order_of_first_pixel() {
        // the right blob starts on row 0, the left one on row 1
        let m = BinaryMask::from_ascii(&["...#", "#..#", "#..."]).unwrap();
        let l = connected_components(&m);
        assert_eq!(l.get(3, 0), 1);
        assert_eq!(l.get(0, 1), 2);
    }

    #[test]
    fn trace_single_pixel() {
        let mut m = BinaryMask::empty(5, 5).unwrap();
        m.set(2, 2, true);
        let c = trace_boundary(&m, Point::new(2, 2)).unwrap();
        assert_eq!(c.points(), &[Point::new(2, 2)]);
    }

    #[test]
    fn trace_square_perimeter() {
        let m = BinaryMask::from_ascii(&["###.", "###.", "###.", "...."]).unwrap();
        let c = trace_boundary(&m, Point::new(0, 0)).unwrap();
        let expected = pts(&[(0, 0), (1, 0), (2, 0), (2, 1), (2, 2), (1, 2), (0, 2), (0, 1)]);
        assert_eq!(c.points(), expected.as_slice());
    }

    #[test]
    fn trace_ring_exterior_only() {
        let m = BinaryMask::from_ascii(&["#####", "#...#", "#...#", "#...#", "#####"]).unwrap();
        let c = trace_boundary(&m, Point::new(0, 0)).unwrap();
        let expected = pts(&[
            (0, 0),
            (1, 0),
            (2, 0),
            (3, 0),
            (4, 0),
            (4, 1),
            (4, 2),
            (4, 3),
            (4, 4),
            (3, 4),
            (2, 4),
            (1, 4),
            (0, 4),
            (0, 3),
            (0, 2),
            (0, 1),
        ]);
        assert_eq!(c.points(), expected.as_slice());
    }

    #[test]
    fn trace_spur_is_walked_out_and_back() {
        let m = BinaryMask::from_ascii(&["#...", "####", "#...", "#..."]).unwrap();
        let c = trace_boundary(&m, Point::new(0, 0)).unwrap();
        let expected = pts(&[(0, 0), (1, 1), (2, 1), (3, 1), (2, 1), (1, 1), (0, 2), (0, 3), (0, 2), (0, 1)]);
        assert_eq!(c.points(), expected.as_slice());
    }

    #[test]
    fn trace_continues_through_revisited_start() {
        // the start pixel joins two lobes; it is re-entered after the right lobe
        // and the trace must carry on into the left one
        let m = BinaryMask::from_ascii(&[".#.", "#.#", "#.#"]).unwrap();
        let c = trace_boundary(&m, Point::new(1, 0)).unwrap();
        let expected = pts(&[(1, 0), (2, 1), (2, 2), (2, 1), (1, 0), (0, 1), (0, 2), (0, 1)]);
        assert_eq!(c.points(), expected.as_slice());
    }

    #[test]
    fn trace_terminates_when_west_entry_never_recurs() {
        // the start pixel is only ever re-entered from below
        let m = BinaryMask::from_ascii(&["#..", ".#.", "#.."]).unwrap();
        let c = trace_boundary(&m, Point::new(0, 0)).unwrap();
        assert_eq!(c.points(), pts(&[(0, 0), (1, 1), (0, 2), (1, 1)]).as_slice());
    }

    #[test]
    fn trace_border_touching_region() {
        let m = BinaryMask::from_ascii(&["##", "##"]).unwrap();
        let c = trace_boundary(&m, Point::new(0, 0)).unwrap();
        assert_eq!(c.points(), pts(&[(0, 0), (1, 0), (1, 1), (0, 1)]).as_slice());
    }

    #[test]
    fn trace_errors() {
        let m = BinaryMask::from_ascii(&["##", ".."]).unwrap();
        assert_eq!(trace_boundary(&m, Point::new(0, 1)), Err(MaskError::StartIsBackground { x: 0, y: 1 }));
        assert_eq!(trace_boundary(&m, Point::new(1, 0)), Err(MaskError::StartNotRasterFirst { x: 1, y: 0 }));
        assert!(matches!(trace_boundary(&m, Point::new(5, 0)), Err(MaskError::StartOutOfBounds { .. })));
    }

    #[test]
    fn fill_holes_cases() {
        let square = BinaryMask::from_ascii(&["....", ".##.", ".##.", "...."]).unwrap();
        assert_eq!(fill_holes(&square), square);

        let ring = BinaryMask::from_ascii(&["#####", "#...#", "#...#", "#...#", "#####"]).unwrap();
        let filled = fill_holes(&ring);
        assert_eq!(filled.count_foreground(), 25);

        let channel = BinaryMask::from_ascii(&["#####", "#...#", "#....", "#...#", "#####"]).unwrap();
        assert_eq!(fill_holes(&channel), channel);
    }

    #[test]
    fn diagonal_gap_is_still_a_hole() {
        // background is 4-connected, so the centre cannot escape through the diagonal
        let m = BinaryMask::from_ascii(&[".#.", "#.#", ".#."]).unwrap();
        assert!(fill_holes(&m).get(1, 1));
    }

    #[test]
    fn extract_regions_threshold() {
        let mut m = BinaryMask::empty(100, 100).unwrap();
        m.fill_box(&BBox::new(10, 10, 20, 20).unwrap());
        m.set(80, 80, true);
        let kept = extract_regions(&m, 0.001).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].area, 100);
        assert_eq!(kept[0].bbox, BBox::new(10, 10, 20, 20).unwrap());
        assert_eq!(kept[0].contour.len(), 36);

        let all = extract_regions(&m, 0.0).unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(all[1].area, 1);
        assert_eq!(all[1].contour.points(), &[Point::new(80, 80)]);

        assert!(extract_regions(&BinaryMask::empty(8, 8).unwrap(), 0.001).unwrap().is_empty());
    }

    #[test]
    fn extract_regions_counts_filled_area() {
        let ring = BinaryMask::from_ascii(&["#####", "#...#", "#...#", "#...#", "#####"]).unwrap();
        let r = extract_regions(&ring, 0.0).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].area, 25);
        assert_eq!(r[0].contour.len(), 16);
    }

    #[test]
    fn dimension_validation() {
        assert!(matches!(BinaryMask::new(0, 3, vec![]), Err(MaskError::EmptyDimensions { .. })));
        assert!(matches!(BinaryMask::new(2, 2, vec![true; 3]), Err(MaskError::LengthMismatch { .. })));
        assert!(LabelMask::new(2, 1, vec![0, 7]).is_ok());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;
        use std::collections::VecDeque;

        fn arb_mask() -> impl Strategy<Value = BinaryMask> {
            (1u32..20, 1u32..20).prop_flat_map(|(w, h)| {
                prop::collection::vec(any::<bool>(), (w * h) as usize)
                    .prop_map(move |bits| BinaryMask::new(w, h, bits).unwrap())
            })
        }

        /// Breadth-first flood fill over pixels equal to `value`.
        fn flood(m: &BinaryMask, value: bool, steps: &[(i64, i64)]) -> Vec<u32> {
            let (w, h) = (i64::from(m.width()), i64::from(m.height()));
            let mut labels = vec![0u32; m.bits().len()];
            let mut next = 0;
            for s in 0..labels.len() {
                if m.bits()[s] != value || labels[s] != 0 {
                    continue;
                }
                next += 1;
                labels[s] = next;
                let mut queue = VecDeque::from([s]);
                while let Some(i) = queue.pop_front() {
                    let (x, y) = (i as i64 % w, i as i64 / w);
                    for &(dx, dy) in steps {
                        let (nx, ny) = (x + dx, y + dy);
                        if (0..w).contains(&nx) && (0..h).contains(&ny) {
                            let j = (ny * w + nx) as usize;
                            if m.bits()[j] == value && labels[j] == 0 {
                                labels[j] = next;
                                queue.push_back(j);
                            }
                        }
                    }
                }
            }
            labels
        }

        const EIGHT: [(i64, i64); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];
        const FOUR: [(i64, i64); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];

        proptest! {
            #[test]
            fn components_match_flood_fill(m in arb_mask()) {
                let got = connected_components(&m);
                prop_assert_eq!(got.labels().to_vec(), flood(&m, true, &EIGHT));
            }

            #[test]
            fn holes_are_background_not_reaching_the_border(m in arb_mask()) {
                let bg = flood(&m, false, &FOUR);
                let (w, h) = (m.width(), m.height());
                let mut outside = std::collections::HashSet::new();
                for y in 0..h {
                    for x in 0..w {
                        if (x == 0 || y == 0 || x + 1 == w || y + 1 == h) && !m.get(x, y) {
                            outside.insert(bg[(y * w + x) as usize]);
                        }
                    }
                }
                let expected: Vec<bool> =
                    m.bits().iter().zip(&bg).map(|(&f, l)| f || !outside.contains(l)).collect();
                prop_assert_eq!(fill_holes(&m).bits().to_vec(), expected);
            }

            #[test]
            fn contours_stay_on_their_region(m in arb_mask()) {
                let filled = fill_holes(&m);
                let labels = connected_components(&filled);
                for r in extract_regions(&m, 0.0).unwrap() {
                    let pts = r.contour.points();
                    let id = labels.get(pts[0].x, pts[0].y);
                    prop_assert!(id > 0);
                    prop_assert!(pts.iter().all(|p| labels.get(p.x, p.y) == id));
                    prop_assert_eq!(r.contour.bounding_box(), r.bbox);
                    let area = labels.labels().iter().filter(|&&l| l == id).count() as u64;
                    prop_assert_eq!(r.area, area);
                }
            }
        }
    }
}
