//! Deterministic synthetic tray scenes for the benchmarks.

use sfd_core::geometry::{BBox, Point};
use sfd_core::metrics::GroundTruthItem;
use sfd_core::pipeline::annotations::TrayAnnotation;
use sfd_core::{BinaryMask, Objectness, RawDetection};

pub struct Scene {
    pub annotation: TrayAnnotation,
    pub mask: BinaryMask,
    pub detections: Vec<RawDetection>,
}

/// `items` elliptical foods with a central hole laid out on a grid, one
/// detection per item plus shifted duplicates and background boxes up to
/// `detections` in total.
pub fn tray_scene(width: u32, height: u32, items: u32, detections: usize) -> Scene {
    let cols = (items as f64).sqrt().ceil() as u32;
    let rows = items.div_ceil(cols);
    let (cell_w, cell_h) = (width / cols, height / rows);
    let mut mask = BinaryMask::empty(width, height).expect("positive size");
    let mut gts = Vec::new();
    for k in 0..items {
        let (x0, y0) = ((k % cols) * cell_w + cell_w / 8, (k / cols) * cell_h + cell_h / 8);
        let (w, h) = (cell_w * 3 / 4, cell_h * 3 / 4);
        let bbox = BBox::from_xywh(x0, y0, w, h).expect("cell inside the image");
        let (cx, cy) = (f64::from(x0) + f64::from(w) / 2.0, f64::from(y0) + f64::from(h) / 2.0);
        let (rx, ry) = (f64::from(w) / 2.0, f64::from(h) / 2.0);
        for y in bbox.y0()..bbox.y1() {
            for x in bbox.x0()..bbox.x1() {
                let (dx, dy) = ((f64::from(x) + 0.5 - cx) / rx, (f64::from(y) + 0.5 - cy) / ry);
                let r2 = dx * dx + dy * dy;
                mask.set(x, y, r2 <= 1.0 && r2 > 0.02);
            }
        }
        let polygon = (0..48)
            .map(|i| {
                let t = f64::from(i) * std::f64::consts::TAU / 48.0;
                Point::new((cx + (rx - 1.0) * t.cos()) as u32, (cy + (ry - 1.0) * t.sin()) as u32)
            })
            .collect();
        gts.push(GroundTruthItem { bbox, class_id: k as usize % 8, polygon: Some(polygon) });
    }

    let raw = (0..detections)
        .map(|i| {
            let item = &gts[i % gts.len()];
            let round = (i / gts.len()) as u32;
            let b = item.bbox;
            let bbox = if round.is_multiple_of(2) {
                BBox::from_xywh(b.x0() + round * 3, b.y0() + round * 2, b.width(), b.height()).unwrap()
            } else {
                // background box in the gap between cells
                BBox::from_xywh(b.x0().saturating_sub(cell_w / 8), b.y1(), cell_w / 10 + 1, cell_h / 10 + 1).unwrap()
            };
            let bbox = bbox.clamp_to(width, height).unwrap_or(b);
            let mut probs = vec![0.01; 8];
            probs[item.class_id] = 0.9 - 0.1 * f64::from(round.min(8));
            RawDetection::new(bbox, Objectness::Logit(2.0 - f64::from(round)), probs).expect("valid probabilities")
        })
        .collect();

    Scene { annotation: TrayAnnotation { image_id: "bench".into(), width, height, items: gts }, mask, detections: raw }
}
