use serde::{Deserialize, Serialize};

use crate::motion::Quality;

/// Binary confusion counts with `positive` as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    /// # Panics
    /// If the slices differ in length.
    pub fn new(predictions: &[Quality], labels: &[Quality], positive: Quality) -> Self {
        assert_eq!(
            predictions.len(),
            labels.len(),
            "predictions and labels differ in length"
        );
        let mut c = Confusion::default();
        for (&p, &y) in predictions.iter().zip(labels) {
            match (p == positive, y == positive) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Harmonic mean of precision and recall; 0 when undefined.
    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.tp + self.tn + self.fp + self.fn_)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// F1 of the `Incorrect` class.
pub fn f1(predictions: &[Quality], labels: &[Quality]) -> f64 {
    Confusion::new(predictions, labels, Quality::Incorrect).f1()
}

/// Unweighted mean of the per-class F1 scores.
pub fn macro_f1(predictions: &[Quality], labels: &[Quality]) -> f64 {
    let a = Confusion::new(predictions, labels, Quality::Incorrect).f1();
    let b = Confusion::new(predictions, labels, Quality::Correct).f1();
    (a + b) / 2.0
}

pub fn accuracy(predictions: &[Quality], labels: &[Quality]) -> f64 {
    Confusion::new(predictions, labels, Quality::Incorrect).accuracy()
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use Quality::{Correct as C, Incorrect as I};

    #[test]
    fn perfect_and_all_negative() {
        assert_eq!(f1(&[I, C, I], &[I, C, I]), 1.0);
        assert_eq!(f1(&[C, C, C], &[I, C, I]), 0.0);
        assert_eq!(f1(&[C, C], &[C, C]), 0.0);
    }

    #[test]
    fn formula_case() {
        // TP=2, FP=1, FN=1.
        let pred = [I, I, I, C, C];
        let truth = [I, I, C, I, C];
        let c = Confusion::new(&pred, &truth, I);
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (2, 1, 1, 1));
        let p = 2.0 / 3.0;
        assert!((f1(&pred, &truth) - 2.0 * p * p / (p + p)).abs() < 1e-15);
    }

    #[test]
    fn macro_averages_both_classes() {
        let pred = [I, C, C, C];
        let truth = [I, I, C, C];
        // F1(I) = 2/3, F1(C) = 4/5.
        assert!((macro_f1(&pred, &truth) - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-15);
        assert_eq!(accuracy(&pred, &truth), 0.75);
    }

    #[test]
    #[should_panic]
    fn length_mismatch_panics() {
        f1(&[I], &[I, C]);
    }
}
