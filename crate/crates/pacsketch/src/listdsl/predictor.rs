//! Synthetic stand-ins for trained digit classifiers.
//!
//! Each image has a digit label in `0..=9`. The classifier is right with
//! probability `accuracy` and otherwise reports a uniformly chosen other
//! digit. Confidence comes from one Beta distribution when the prediction
//! is right and another when it is wrong, so thresholding on confidence
//! separates the two.

use super::{DslType, DslValue, FlipPrediction, ImageRecord, Prediction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

/// Beta parameters of the confidence distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceModel {
    pub correct: (f64, f64),
    pub wrong: (f64, f64),
}

impl Default for ConfidenceModel {
    fn default() -> Self {
        Self {
            correct: (8.0, 1.5),
            wrong: (2.0, 3.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    pub accuracy: f64,
    /// Fraction of images stored upside down.
    pub flip_rate: f64,
    pub flip_accuracy: f64,
    /// Accuracy of the cheaper classifier, when there is one.
    pub fast_accuracy: Option<f64>,
    pub confidence: ConfidenceModel,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            accuracy: 0.9,
            flip_rate: 0.5,
            flip_accuracy: 0.95,
            fast_accuracy: None,
            confidence: ConfidenceModel::default(),
        }
    }
}

struct Sampler {
    cfg: PredictorConfig,
    correct: Beta<f64>,
    wrong: Beta<f64>,
}

impl Sampler {
    fn new(cfg: &PredictorConfig) -> Self {
        let beta = |(a, b): (f64, f64)| Beta::new(a, b).expect("Beta parameters must be positive");
        Self {
            cfg: *cfg,
            correct: beta(cfg.confidence.correct),
            wrong: beta(cfg.confidence.wrong),
        }
    }

    fn confidence(&self, right: bool, rng: &mut ChaCha8Rng) -> f64 {
        if right {
            self.correct.sample(rng)
        } else {
            self.wrong.sample(rng)
        }
    }

    fn digit(&self, truth: i64, accuracy: f64, rng: &mut ChaCha8Rng) -> Prediction {
        let right = rng.gen_bool(accuracy.clamp(0.0, 1.0));
        let value = if right {
            truth
        } else {
            let other = rng.gen_range(0..9);
            if other >= truth {
                other + 1
            } else {
                other
            }
        };
        Prediction {
            value: value as f64,
            confidence: self.confidence(right, rng),
        }
    }

    fn record(&self, id: u64, rng: &mut ChaCha8Rng) -> ImageRecord {
        let truth = rng.gen_range(0..10i64);
        let pred = self.digit(truth, self.cfg.accuracy, rng);
        let flipped = rng.gen_bool(self.cfg.flip_rate.clamp(0.0, 1.0));
        let flip_right = rng.gen_bool(self.cfg.flip_accuracy.clamp(0.0, 1.0));
        let flip_pred = FlipPrediction {
            value: flipped == flip_right,
            confidence: self.confidence(flip_right, rng),
        };
        let pred_fast = self.cfg.fast_accuracy.map(|a| self.digit(truth, a, rng));
        ImageRecord {
            id,
            truth_int: Some(truth),
            truth_float: Some(truth as f64),
            truth_flipped: flipped,
            pred,
            pred_fast,
            flip_pred,
        }
    }
}

/// `n` records with ids `0..n`, deterministic in `seed`.
pub fn synth_predictor(cfg: &PredictorConfig, n: usize, seed: u64) -> Vec<ImageRecord> {
    let s = Sampler::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n as u64).map(|id| s.record(id, &mut rng)).collect()
}

fn sample_value(ty: &DslType, max_len: usize, s: &Sampler, next_id: &mut u64, rng: &mut ChaCha8Rng) -> DslValue {
    match ty {
        DslType::Bool => DslValue::Bool(rng.gen()),
        DslType::Int => DslValue::Int(rng.gen_range(0..10)),
        DslType::Float => DslValue::Float(rng.gen_range(0.0..10.0)),
        DslType::Image => {
            *next_id += 1;
            DslValue::image(s.record(*next_id - 1, rng))
        }
        DslType::List(elem) => {
            let len = rng.gen_range(1..=max_len.max(1));
            DslValue::List((0..len).map(|_| sample_value(elem, max_len, s, next_id, rng)).collect())
        }
        DslType::Arrow(..) => panic!("inputs are never functions"),
    }
}

/// `n` random examples for the given input types. Lists have lengths drawn
/// uniformly from `1..=max_len`; images are fresh synthetic records.
pub fn generate_examples(types: &[DslType], n: usize, max_len: usize, cfg: &PredictorConfig, seed: u64) -> Vec<Vec<DslValue>> {
    let s = Sampler::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut next_id = 0;
    (0..n)
        .map(|_| types.iter().map(|t| sample_value(t, max_len, &s, &mut next_id, &mut rng)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn accuracy(records: &[ImageRecord]) -> f64 {
        let right = records.iter().filter(|r| r.pred.value as i64 == r.truth_int()).count();
        right as f64 / records.len() as f64
    }

    #[test]
    fn extremes() {
        let all = PredictorConfig {
            accuracy: 1.0,
            ..Default::default()
        };
        assert_eq!(accuracy(&synth_predictor(&all, 2000, 1)), 1.0);
        let none = PredictorConfig {
            accuracy: 0.0,
            ..Default::default()
        };
        assert_eq!(accuracy(&synth_predictor(&none, 2000, 1)), 0.0);
    }

    #[test]
    fn empirical_accuracy_concentrates() {
        let cfg = PredictorConfig {
            accuracy: 0.99,
            ..Default::default()
        };
        let acc = accuracy(&synth_predictor(&cfg, 10_000, 7));
        assert!((acc - 0.99).abs() <= 0.005, "{acc}");
    }

    #[test]
    fn deterministic_and_valid() {
        let cfg = PredictorConfig {
            fast_accuracy: Some(0.7),
            ..Default::default()
        };
        let a = synth_predictor(&cfg, 100, 5);
        assert_eq!(a, synth_predictor(&cfg, 100, 5));
        assert_ne!(a, synth_predictor(&cfg, 100, 6));
        assert!(a.iter().all(|r| r.validate().is_ok() && r.pred_fast.is_some()));
    }

    #[test]
    fn confidence_separates_right_from_wrong() {
        let recs = synth_predictor(&PredictorConfig::default(), 5000, 3);
        let mean = |right: bool| {
            let c: Vec<f64> = recs
                .iter()
                .filter(|r| (r.pred.value as i64 == r.truth_int()) == right)
                .map(|r| r.pred.confidence)
                .collect();
            c.iter().sum::<f64>() / c.len() as f64
        };
        assert!(mean(true) > mean(false) + 0.3);
    }

    #[test]
    fn examples_respect_types() {
        let types = vec![DslType::Image, DslType::list(DslType::Image), DslType::Int];
        for ex in generate_examples(&types, 50, 4, &PredictorConfig::default(), 2) {
            assert!(ex.iter().zip(&types).all(|(v, t)| crate::listdsl::value_has_type(v, t)));
            let DslValue::List(items) = &ex[1] else { panic!() };
            assert!((1..=4).contains(&items.len()));
        }
    }
}
