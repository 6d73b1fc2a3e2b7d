//! Scoring raw detector boxes and the confidence-threshold policy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BBox;

/// Lowest threshold of the sweep: chance level for a 65-class vocabulary.
pub const MIN_CONFIDENCE_THRESHOLD: f64 = 1.0 / 65.0;
/// Highest threshold of the sweep.
pub const MAX_CONFIDENCE_THRESHOLD: f64 = 0.5;
/// Thresholds evaluated by the sweep harness, ascending.
pub const THRESHOLD_GRID: [f64; 6] = [1.0 / 65.0, 1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0, 1.0 / 2.0];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectionError {
    #[error("a detection needs at least one class probability")]
    NoClasses,
    #[error("class probability {index} = {value} is outside [0, 1]")]
    ClassProbability { index: usize, value: f64 },
    #[error("objectness probability {0} is outside [0, 1]")]
    ObjectnessProbability(f64),
    #[error("objectness logit {0} is not finite")]
    ObjectnessLogit(f64),
}

/// The detector's objectness output, either before or after the logistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objectness {
    Logit(f64),
    Probability(f64),
}

impl Objectness {
    /// sigma(t_o)
    pub fn probability(self) -> f64 {
        match self {
            Objectness::Logit(t) => logistic(t),
            Objectness::Probability(p) => p,
        }
    }

    pub fn raw_value(self) -> f64 {
        match self {
            Objectness::Logit(v) | Objectness::Probability(v) => v,
        }
    }
}

/// How the objectness column of a detection file is to be read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectnessKind {
    Logit,
    #[default]
    Probability,
}

impl ObjectnessKind {
    pub fn wrap(self, value: f64) -> Objectness {
        match self {
            ObjectnessKind::Logit => Objectness::Logit(value),
            ObjectnessKind::Probability => Objectness::Probability(value),
        }
    }
}

/// A detector box before scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDetection {
    pub bbox: BBox,
    pub objectness: Objectness,
    /// Pr(class | object), one entry per class; consumed as given, never renormalised.
    pub class_probs: Vec<f64>,
}

impl RawDetection {
    pub fn new(bbox: BBox, objectness: Objectness, class_probs: Vec<f64>) -> Result<Self, DetectionError> {
        let raw = Self { bbox, objectness, class_probs };
        raw.validate()?;
        Ok(raw)
    }

    pub fn validate(&self) -> Result<(), DetectionError> {
        if self.class_probs.is_empty() {
            return Err(DetectionError::NoClasses);
        }
        if let Some((index, &value)) = self.class_probs.iter().enumerate().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
            return Err(DetectionError::ClassProbability { index, value });
        }
        match self.objectness {
            Objectness::Probability(p) if !(0.0..=1.0).contains(&p) => Err(DetectionError::ObjectnessProbability(p)),
            Objectness::Logit(t) if !t.is_finite() => Err(DetectionError::ObjectnessLogit(t)),
            _ => Ok(()),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.class_probs.len()
    }
}

/// A scored box: winning class and its class-specific confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub class_id: usize,
    pub score: f64,
}

pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Picks the most probable class (lowest index on ties) and scores it as
/// `Pr(class | object) * sigma(t_o)`.
pub fn confidence_score(r: &RawDetection) -> Detection {
    let mut class_id = 0;
    for (i, &p) in r.class_probs.iter().enumerate().skip(1) {
        if p > r.class_probs[class_id] {
            class_id = i;
        }
    }
    Detection { bbox: r.bbox, class_id, score: r.class_probs[class_id] * r.objectness.probability() }
}

/// Keeps detections scoring at least `threshold`, preserving order.
pub fn filter_by_threshold(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    dets.iter().filter(|d| d.score >= threshold).copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_box() -> BBox {
        BBox::new(0, 0, 4, 4).unwrap()
    }

    fn det(score: f64) -> Detection {
        Detection { bbox: unit_box(), class_id: 0, score }
    }

    #[test]
    fn logistic_values() {
        assert_eq!(logistic(0.0), 0.5);
        assert!((logistic(3f64.ln()) - 0.75).abs() < 1e-15);
        assert!((logistic(-(3f64.ln())) - 0.25).abs() < 1e-15);
        assert!(logistic(800.0) <= 1.0 && logistic(-800.0) >= 0.0);
    }

    #[test]
    fn scoring() {
        let r = RawDetection::new(unit_box(), Objectness::Logit(0.0), vec![0.2, 0.8]).unwrap();
        let d = confidence_score(&r);
        assert_eq!((d.class_id, d.score), (1, 0.4));

        let r = RawDetection::new(unit_box(), Objectness::Probability(1.0), vec![1.0, 0.0]).unwrap();
        let d = confidence_score(&r);
        assert_eq!((d.class_id, d.score), (0, 1.0));

        let r = RawDetection::new(unit_box(), Objectness::Probability(0.6), vec![0.5, 0.5]).unwrap();
        let d = confidence_score(&r);
        assert_eq!(d.class_id, 0);
        assert!((d.score - 0.3).abs() < 1e-15);
    }

    #[test]
    fn raw_validation() {
        assert_eq!(RawDetection::new(unit_box(), Objectness::Probability(0.5), vec![]), Err(DetectionError::NoClasses));
        assert!(matches!(
            RawDetection::new(unit_box(), Objectness::Probability(0.5), vec![0.1, 1.2]),
            Err(DetectionError::ClassProbability { index: 1, .. })
        ));
        assert!(RawDetection::new(unit_box(), Objectness::Probability(1.5), vec![0.1]).is_err());
        assert!(RawDetection::new(unit_box(), Objectness::Logit(-4.0), vec![0.1]).is_ok());
        assert!(RawDetection::new(unit_box(), Objectness::Logit(f64::NAN), vec![0.1]).is_err());
    }

    #[test]
    fn thresholds() {
        let kept = filter_by_threshold(&[det(0.9), det(0.01)], MIN_CONFIDENCE_THRESHOLD);
        assert_eq!(kept, vec![det(0.9)]);

        let all = vec![det(0.3), det(0.0), det(1.0)];
        assert_eq!(filter_by_threshold(&all, 0.0), all);

        assert_eq!(filter_by_threshold(&[det(0.5), det(0.49)], 0.5), vec![det(0.5)]);
    }

    fn arb_raw() -> impl Strategy<Value = RawDetection> {
        (
            prop::collection::vec(0.0f64..=1.0, 1..8),
            prop_oneof![(-20.0f64..20.0).prop_map(Objectness::Logit), (0.0f64..=1.0).prop_map(Objectness::Probability)],
        )
            .prop_map(|(class_probs, objectness)| RawDetection { bbox: unit_box(), objectness, class_probs })
    }

    proptest! {
        #[test]
        fn score_bounded_by_factors(r in arb_raw()) {
            let d = confidence_score(&r);
            let max_prob = r.class_probs.iter().cloned().fold(0.0, f64::max);
            prop_assert!(d.score <= r.objectness.probability());
            prop_assert!(d.score <= max_prob);
            prop_assert!((0.0..=1.0).contains(&d.score));
        }

        #[test]
        fn argmax_invariant_to_scaling(r in arb_raw(), k in 0.01f64..1.0) {
            let mut scaled = r.clone();
            scaled.class_probs.iter_mut().for_each(|p| *p *= k);
            // scaling can merge nearly-equal values through rounding; only compare distinct maxima
            let d = confidence_score(&r);
            let ds = confidence_score(&scaled);
            let best = r.class_probs[d.class_id];
            let runner_up = r.class_probs.iter().enumerate()
                .filter(|&(i, _)| i != d.class_id).map(|(_, &p)| p).fold(f64::NEG_INFINITY, f64::max);
            if best - runner_up > 1e-9 || runner_up == f64::NEG_INFINITY {
                prop_assert_eq!(d.class_id, ds.class_id);
            }
        }

        #[test]
        fn threshold_composition(scores in prop::collection::vec(0.0f64..=1.0, 0..20), t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
            let dets: Vec<Detection> = scores.into_iter().map(det).collect();
            let twice = filter_by_threshold(&filter_by_threshold(&dets, t1), t2);
            prop_assert_eq!(twice, filter_by_threshold(&dets, t1.max(t2)));
        }
    }
}
