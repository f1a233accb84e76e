use serde::{Deserialize, Serialize};

use super::{evaluate, train_agent, AgentConfig, TrainingCurve};
use crate::error::{Error, Result};
use crate::motion::{Component, Exercise, Group};
use crate::prediction::{
    f1, rfe_select, train, Algorithm, Hyperparameters, LabeledDataset, RFE_STRENGTH,
};

/// Agent and RFE baseline scored on the same held-out subjects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeComparison {
    pub exercise: Exercise,
    pub component: Component,
    pub holdout: Vec<String>,
    pub train_rows: usize,
    pub test_rows: usize,
    pub agent_f1: f64,
    pub agent_mean_queried: f64,
    /// RFE budget: the agent's mean queried count, rounded, at least 1.
    pub k: usize,
    pub rfe_f1: f64,
    pub rfe_features: Vec<String>,
    pub curve: TrainingCurve,
}

/// Every third stroke subject in sorted order, starting with the third.
pub fn holdout_subjects(dataset: &LabeledDataset) -> Vec<String> {
    dataset
        .stroke_subjects()
        .into_iter()
        .enumerate()
        .filter(|(i, _)| i % 3 == 2)
        .map(|(_, s)| s)
        .collect()
}

/// Trains an agent on every subject outside `holdout`, then an L2 logistic
/// model on the RFE subset of the same size as the agent's mean query count,
/// and scores both on the held-out subjects' stroke rows.
pub fn compare_with_rfe(
    dataset: &LabeledDataset,
    config: &AgentConfig,
    holdout: &[String],
) -> Result<RfeComparison> {
    if holdout.is_empty() {
        return Err(Error::InvalidArgument("empty holdout".into()));
    }
    let test = dataset.filter(|r| r.group == Group::Stroke && holdout.contains(&r.subject));
    let training = dataset.filter(|r| !holdout.contains(&r.subject));
    if test.is_empty() {
        return Err(Error::InvalidArgument("holdout subjects have no rows".into()));
    }
    training.require_two_classes()?;

    let (agent, curve) = train_agent(&training, config)?;
    let scored = evaluate(&agent, &test)?;
    let k = (scored.mean_queried.round() as usize).clamp(1, dataset.width());

    let selection = rfe_select(&training, k)?;
    let hp = Hyperparameters::new()
        .with("penalty", "l2")
        .with("strength", RFE_STRENGTH);
    let model = train(Algorithm::Logistic, &training.select(&selection.selected)?, &hp)?;
    let predictions = model.predict_dataset(&test.select(&selection.selected)?)?;
    Ok(RfeComparison {
        exercise: dataset.exercise,
        component: dataset.component,
        holdout: holdout.to_vec(),
        train_rows: training.len(),
        test_rows: test.len(),
        agent_f1: scored.f1,
        agent_mean_queried: scored.mean_queried,
        k,
        rfe_f1: f1(&predictions, &test.labels()),
        rfe_features: selection
            .selected
            .iter()
            .map(|&j| dataset.feature_ids[j].clone())
            .collect(),
        curve,
    })
}
