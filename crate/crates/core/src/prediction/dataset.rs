use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{extract, registry};
use crate::motion::{Component, Exercise, Group, MotionClip, Quality, QualityThreshold, Side};

/// One labeled clip summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub motion_id: String,
    pub subject: String,
    pub group: Group,
    pub side: Side,
    pub x: Vec<f64>,
    pub label: Quality,
    pub score: u8,
}

/// Feature vectors of one (exercise, component) pair with binary labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub exercise: Exercise,
    pub component: Component,
    pub feature_ids: Vec<String>,
    pub rows: Vec<Row>,
}

impl LabeledDataset {
    pub fn new(exercise: Exercise, component: Component, rows: Vec<Row>) -> Result<Self> {
        let feature_ids: Vec<String> = registry(exercise, component)
            .into_iter()
            .map(|d| d.id)
            .collect();
        Self::with_features(exercise, component, feature_ids, rows)
    }

    /// Dataset over an arbitrary feature list, used for toy problems and tests.
    pub fn with_features(
        exercise: Exercise,
        component: Component,
        feature_ids: Vec<String>,
        rows: Vec<Row>,
    ) -> Result<Self> {
        for row in &rows {
            if row.x.len() != feature_ids.len() {
                return Err(Error::shape(feature_ids.len(), row.x.len()));
            }
            if row.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "non-finite feature in {}",
                    row.motion_id
                )));
            }
        }
        Ok(LabeledDataset {
            exercise,
            component,
            feature_ids,
            rows,
        })
    }

    /// Extracts features from labeled clips of `exercise`; other clips are skipped.
    pub fn from_clips<'a>(
        clips: impl IntoIterator<Item = &'a MotionClip>,
        exercise: Exercise,
        component: Component,
        threshold: QualityThreshold,
    ) -> Result<Self> {
        let mut rows = Vec::new();
        for clip in clips {
            if clip.exercise != exercise {
                continue;
            }
            let Some(labels) = clip.labels else { continue };
            let features = extract(clip, component)?;
            rows.push(Row {
                motion_id: clip.id.clone(),
                subject: clip.subject.id.clone(),
                group: clip.subject.group,
                side: clip.side,
                x: features.values,
                label: labels.quality(component, threshold),
                score: labels.score(component),
            });
        }
        Self::new(exercise, component, rows)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.feature_ids.len()
    }

    pub fn matrix(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.rows.len(), self.width()));
        for (mut dst, row) in m.rows_mut().into_iter().zip(&self.rows) {
            for (d, &v) in dst.iter_mut().zip(&row.x) {
                *d = v;
            }
        }
        m
    }

    pub fn labels(&self) -> Vec<Quality> {
        self.rows.iter().map(|r| r.label).collect()
    }

    pub fn class_indices(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.label.class_index()).collect()
    }

    /// Counts of (correct, incorrect) rows.
    pub fn class_counts(&self) -> [usize; 2] {
        let mut counts = [0; 2];
        for row in &self.rows {
            counts[row.label.class_index()] += 1;
        }
        counts
    }

    /// Distinct subjects in order of first appearance.
    pub fn subjects(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for row in &self.rows {
            if !out.contains(&row.subject) {
                out.push(row.subject.clone());
            }
        }
        out
    }

    pub fn stroke_subjects(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for row in self.rows.iter().filter(|r| r.group == Group::Stroke) {
            if !out.contains(&row.subject) {
                out.push(row.subject.clone());
            }
        }
        out
    }

    pub fn filter(&self, keep: impl Fn(&Row) -> bool) -> LabeledDataset {
        LabeledDataset {
            exercise: self.exercise,
            component: self.component,
            feature_ids: self.feature_ids.clone(),
            rows: self.rows.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    /// Copy restricted to the given feature columns, in the given order.
    pub fn select(&self, features: &[usize]) -> Result<LabeledDataset> {
        if let Some(&bad) = features.iter().find(|&&f| f >= self.width()) {
            return Err(Error::Range {
                what: "feature index",
                detail: format!("{bad} >= {}", self.width()),
            });
        }
        Ok(LabeledDataset {
            exercise: self.exercise,
            component: self.component,
            feature_ids: features
                .iter()
                .map(|&f| self.feature_ids[f].clone())
                .collect(),
            rows: self
                .rows
                .iter()
                .map(|r| Row {
                    x: features.iter().map(|&f| r.x[f]).collect(),
                    ..r.clone()
                })
                .collect(),
        })
    }

    pub fn require_two_classes(&self) -> Result<()> {
        let [a, b] = self.class_counts();
        if a == 0 || b == 0 {
            return Err(Error::SingleClass);
        }
        Ok(())
    }
}

/// Per-feature z-scoring fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviation; constant features get 1.
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(dataset: &LabeledDataset) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::InvalidArgument(
                "cannot standardize an empty dataset".into(),
            ));
        }
        let n = dataset.len() as f64;
        let d = dataset.width();
        let mut mean = vec![0.0; d];
        for row in &dataset.rows {
            for (m, v) in mean.iter_mut().zip(&row.x) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in &dataset.rows {
            for ((s, v), m) in var.iter_mut().zip(&row.x).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn identity(width: usize) -> Self {
        Standardizer {
            mean: vec![0.0; width],
            std: vec![1.0; width],
        }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.width() {
            return Err(Error::shape(self.width(), x.len()));
        }
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }

    pub fn transform(&self, dataset: &LabeledDataset) -> Result<LabeledDataset> {
        let mut out = dataset.clone();
        for row in &mut out.rows {
            row.x = self.apply(&row.x)?;
        }
        Ok(out)
    }
}
