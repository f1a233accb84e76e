use serde::{Deserialize, Serialize};

use super::dataset::{LabeledDataset, Standardizer};
use super::linear::{fit_logistic, LogisticParams, Penalty};
use crate::error::{Error, Result};

/// L2 strength of the ranking estimator.
pub const RFE_STRENGTH: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RfeSelection {
    /// Surviving feature indices, ascending.
    pub selected: Vec<usize>,
    /// Removed feature indices in elimination order.
    pub eliminated: Vec<usize>,
}

/// Recursive feature elimination with an L2 logistic ranker: refit on the
/// surviving columns and drop the smallest |coefficient| (lowest index on
/// ties) until `k` remain.
pub fn rfe_select(dataset: &LabeledDataset, k: usize) -> Result<RfeSelection> {
    let n = dataset.width();
    if k == 0 || k > n {
        return Err(Error::Range {
            what: "rfe target count",
            detail: format!("k = {k} not in 1..={n}"),
        });
    }
    dataset.require_two_classes()?;
    let standardized = Standardizer::fit(dataset)?.transform(dataset)?;
    let y = standardized.class_indices();
    let params = LogisticParams {
        penalty: Penalty::L2,
        strength: RFE_STRENGTH,
        ..LogisticParams::default()
    };
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut eliminated = Vec::with_capacity(n - k);
    while remaining.len() > k {
        let x = standardized.select(&remaining)?.matrix();
        let model = fit_logistic(x.view(), &y, &params)?;
        let mut weakest = 0;
        for (i, w) in model.weights.iter().enumerate() {
            if w.abs() < model.weights[weakest].abs() {
                weakest = i;
            }
        }
        eliminated.push(remaining.remove(weakest));
    }
    Ok(RfeSelection {
        selected: remaining,
        eliminated,
    })
}
