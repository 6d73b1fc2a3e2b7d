//! Rasterising annotated polygons into ground-truth region maps.

use crate::geometry::Point;
use crate::mask::LabelMask;

use super::annotations::TrayAnnotation;

/// Paints the pixels of a closed polygon whose vertices are pixel centres:
/// the interior (even-odd rule, sampled at pixel centres) plus the outline
/// itself. Pixels outside the mask are ignored.
pub fn paint_polygon(mask: &mut LabelMask, polygon: &[Point], label: u32) {
    if polygon.is_empty() {
        return;
    }
    let (w, h) = (i64::from(mask.width()), i64::from(mask.height()));
    let mut put = |x: i64, y: i64| {
        if (0..w).contains(&x) && (0..h).contains(&y) {
            mask.set(x as u32, y as u32, label);
        }
    };

    let n = polygon.len();
    let ymin = polygon.iter().map(|p| p.y).min().unwrap();
    let ymax = polygon.iter().map(|p| p.y).max().unwrap();
    let mut crossings = Vec::new();
    for y in ymin..=ymax {
        crossings.clear();
        let yf = f64::from(y);
        for i in 0..n {
            let (a, b) = (polygon[i], polygon[(i + 1) % n]);
            let (lo, hi) = if a.y <= b.y { (a, b) } else { (b, a) };
            // half-open in y so shared vertices count once; horizontal edges never cross
            if lo.y <= y && y < hi.y {
                let t = (yf - f64::from(lo.y)) / (f64::from(hi.y) - f64::from(lo.y));
                crossings.push(f64::from(lo.x) + t * (f64::from(hi.x) - f64::from(lo.x)));
            }
        }
        crossings.sort_by(f64::total_cmp);
        for pair in crossings.chunks_exact(2) {
            let (from, to) = (pair[0].ceil() as i64, pair[1].floor() as i64);
            for x in from..=to {
                put(x, i64::from(y));
            }
        }
    }
    for i in 0..n {
        let (a, b) = (polygon[i], polygon[(i + 1) % n]);
        draw_line(a, b, &mut put);
    }
}

/// Bresenham segment, both endpoints included.
fn draw_line(a: Point, b: Point, put: &mut impl FnMut(i64, i64)) {
    let (mut x, mut y) = (i64::from(a.x), i64::from(a.y));
    let (x1, y1) = (i64::from(b.x), i64::from(b.y));
    let dx = (x1 - x).abs();
    let dy = -(y1 - y).abs();
    let sx = if x < x1 { 1 } else { -1 };
    let sy = if y < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        put(x, y);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Region map of a tray: item `i` is painted with label `i + 1` (its polygon
/// if annotated, else its box), background is 0. Later items overwrite
/// earlier ones where they overlap.
pub fn ground_truth_regions(ann: &TrayAnnotation) -> LabelMask {
    let mut mask = LabelMask::filled(ann.width, ann.height, 0).expect("validated annotation dimensions");
    for (i, item) in ann.items.iter().enumerate() {
        let label = i as u32 + 1;
        match &item.polygon {
            Some(poly) if !poly.is_empty() => paint_polygon(&mut mask, poly, label),
            _ => {
                for y in item.bbox.y0()..item.bbox.y1() {
                    for x in item.bbox.x0()..item.bbox.x1() {
                        mask.set(x, y, label);
                    }
                }
            }
        }
    }
    mask
}
