use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::dataset::{LabeledDataset, Standardizer};
use super::metrics::{f1, macro_f1, mean_std};
use super::{train_with, Algorithm, Hyperparameters};
use crate::error::{Error, Result};
use crate::motion::{Component, Exercise};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    /// Held-out subject.
    pub subject: String,
    pub train_rows: usize,
    pub test_rows: usize,
    pub f1: f64,
    pub macro_f1: f64,
    pub train_f1: f64,
    /// [`fit_checksum`] of the training rows this fold's model saw.
    pub checksum: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub hyperparameters: Hyperparameters,
    pub mean_train_f1: f64,
    pub mean_f1: f64,
    pub std_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub algorithm: Algorithm,
    pub exercise: Exercise,
    pub component: Component,
    /// Grid point with the best mean training-fold F1.
    pub chosen: Hyperparameters,
    pub folds: Vec<FoldResult>,
    pub mean_f1: f64,
    pub std_f1: f64,
    pub mean_macro_f1: f64,
    pub grid: Vec<GridResult>,
}

/// FNV-1a digest of everything a fit consumes: row ids, raw features,
/// labels and the standardization statistics derived from them.
pub fn fit_checksum(training: &LabeledDataset) -> Result<u64> {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    for row in &training.rows {
        eat(row.motion_id.as_bytes());
        for v in &row.x {
            eat(&v.to_bits().to_le_bytes());
        }
        eat(&[row.label.class_index() as u8]);
    }
    let stats = Standardizer::fit(training)?;
    for v in stats.mean.iter().chain(&stats.std) {
        eat(&v.to_bits().to_le_bytes());
    }
    Ok(h)
}

/// Leave-one-subject-out over every stroke subject in the dataset.
pub fn loso(
    dataset: &LabeledDataset,
    algorithm: Algorithm,
    grid: &[Hyperparameters],
) -> Result<EvalReport> {
    loso_subjects(dataset, algorithm, grid, &dataset.stroke_subjects())
}

/// One fold per listed subject: train on every other subject's rows, test on
/// the held-out subject's rows.
pub fn loso_subjects(
    dataset: &LabeledDataset,
    algorithm: Algorithm,
    grid: &[Hyperparameters],
    subjects: &[String],
) -> Result<EvalReport> {
    if subjects.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "leave-one-subject-out needs at least 2 subjects, got {}",
            subjects.len()
        )));
    }
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty hyperparameter grid".into()));
    }
    for hp in grid {
        hp.validate(algorithm)?;
    }
    dataset.require_two_classes()?;

    // folds[g][s]
    let mut per_grid: Vec<Vec<FoldResult>> = vec![Vec::new(); grid.len()];
    for subject in subjects {
        let test = dataset.filter(|r| &r.subject == subject);
        if test.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "subject `{subject}` has no rows"
            )));
        }
        let training = dataset.filter(|r| &r.subject != subject);
        let checksum = fit_checksum(&training)?;
        for (g, hp) in grid.iter().enumerate() {
            let model = train_with(algorithm, &training, hp, None, Some(subject.clone()))?;
            let train_pred = model.predict_dataset(&training)?;
            let test_pred = model.predict_dataset(&test)?;
            let labels = test.labels();
            per_grid[g].push(FoldResult {
                subject: subject.clone(),
                train_rows: training.len(),
                test_rows: test.len(),
                f1: f1(&test_pred, &labels),
                macro_f1: macro_f1(&test_pred, &labels),
                train_f1: f1(&train_pred, &training.labels()),
                checksum,
            });
        }
    }

    let summaries: Vec<GridResult> = grid
        .iter()
        .zip(&per_grid)
        .map(|(hp, folds)| {
            let train: Vec<f64> = folds.iter().map(|f| f.train_f1).collect();
            let test: Vec<f64> = folds.iter().map(|f| f.f1).collect();
            let (mean_f1, std_f1) = mean_std(&test);
            GridResult {
                hyperparameters: hp.clone(),
                mean_train_f1: mean_std(&train).0,
                mean_f1,
                std_f1,
            }
        })
        .collect();
    let mut best = 0;
    for (g, s) in summaries.iter().enumerate() {
        if s.mean_train_f1 > summaries[best].mean_train_f1 {
            best = g;
        }
    }
    let folds = per_grid.swap_remove(best);
    let macros: Vec<f64> = folds.iter().map(|f| f.macro_f1).collect();
    Ok(EvalReport {
        algorithm,
        exercise: dataset.exercise,
        component: dataset.component,
        chosen: grid[best].clone(),
        mean_f1: summaries[best].mean_f1,
        std_f1: summaries[best].std_f1,
        mean_macro_f1: mean_std(&macros).0,
        folds,
        grid: summaries,
    })
}

/// Algorithm by exercise table of F1 (mean and std). Each exercise cell
/// averages the per-component mean F1; its std is taken over all folds of
/// all components.
pub fn write_table_csv(reports: &[EvalReport], out: impl Write) -> Result<()> {
    let mut cells: BTreeMap<(Algorithm, Exercise), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in reports {
        let cell = cells.entry((r.algorithm, r.exercise)).or_default();
        cell.0.push(r.mean_f1);
        cell.1.extend(r.folds.iter().map(|f| f.f1));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "algorithm",
        "E1_mean",
        "E1_std",
        "E2_mean",
        "E2_std",
        "E3_mean",
        "E3_std",
    ])?;
    let algorithms: Vec<Algorithm> = {
        let mut a: Vec<Algorithm> = reports.iter().map(|r| r.algorithm).collect();
        a.sort();
        a.dedup();
        a
    };
    for algorithm in algorithms {
        let mut record = vec![algorithm.to_string()];
        for exercise in Exercise::ALL {
            match cells.get(&(algorithm, exercise)) {
                Some((means, folds)) => {
                    record.push(format!("{:.4}", mean_std(means).0));
                    record.push(format!("{:.4}", mean_std(folds).1));
                }
                None => record.extend([String::new(), String::new()]),
            }
        }
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io("csv output", e))?;
    Ok(())
}

pub fn write_component_csv(reports: &[EvalReport], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "algorithm",
        "exercise",
        "component",
        "mean_f1",
        "std_f1",
        "mean_macro_f1",
        "grid_point",
    ])?;
    for r in reports {
        w.write_record([
            r.algorithm.to_string(),
            r.exercise.to_string(),
            r.component.to_string(),
            format!("{:.4}", r.mean_f1),
            format!("{:.4}", r.std_f1),
            format!("{:.4}", r.mean_macro_f1),
            r.chosen.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("csv output", e))?;
    Ok(())
}

pub fn write_folds_csv(reports: &[EvalReport], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "algorithm",
        "exercise",
        "component",
        "subject",
        "train_rows",
        "test_rows",
        "f1",
        "macro_f1",
        "train_f1",
        "checksum",
    ])?;
    for r in reports {
        for f in &r.folds {
            w.write_record([
                r.algorithm.to_string(),
                r.exercise.to_string(),
                r.component.to_string(),
                f.subject.clone(),
                f.train_rows.to_string(),
                f.test_rows.to_string(),
                format!("{:.6}", f.f1),
                format!("{:.6}", f.macro_f1),
                format!("{:.6}", f.train_f1),
                format!("{:016x}", f.checksum),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("csv output", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prediction::tests::toy_dataset;

    fn three_subjects() -> LabeledDataset {
        let mut rows = Vec::new();
        for (s, subject) in ["s1", "s2", "s3"].into_iter().enumerate() {
            for i in 0..6 {
                let y = i % 2;
                let x = y as f64 * 2.0 - 1.0 + 0.01 * i as f64;
                rows.push((vec![x, (i * s) as f64], y, subject));
            }
        }
        toy_dataset(&rows)
    }

    #[test]
    fn one_fold_per_subject_excluding_it() {
        let ds = three_subjects();
        let report = loso(&ds, Algorithm::Cart, &[Hyperparameters::new()]).unwrap();
        assert_eq!(report.folds.len(), 3);
        for fold in &report.folds {
            assert_eq!(fold.train_rows, 12);
            assert_eq!(fold.test_rows, 6);
            let expected = fit_checksum(&ds.filter(|r| r.subject != fold.subject)).unwrap();
            assert_eq!(fold.checksum, expected);
        }
        assert_eq!(report.mean_f1, 1.0);
    }

    #[test]
    fn grid_choice_uses_training_f1() {
        let ds = three_subjects();
        let grid = vec![
            Hyperparameters::new().with("max_depth", 0.0),
            Hyperparameters::new(),
        ];
        let report = loso(&ds, Algorithm::Cart, &grid).unwrap();
        assert_eq!(report.chosen, grid[1]);
        assert_eq!(report.grid.len(), 2);
        assert_eq!(report.grid[0].mean_train_f1, 0.0);
    }

    #[test]
    fn errors() {
        let ds = three_subjects();
        let constant = ds.filter(|r| r.label == crate::motion::Quality::Correct);
        assert!(loso(&constant, Algorithm::Cart, &[Hyperparameters::new()]).is_err());
        let missing = vec!["s1".to_string(), "nobody".to_string()];
        assert!(loso_subjects(&ds, Algorithm::Cart, &[Hyperparameters::new()], &missing).is_err());
        let one = ds.filter(|r| r.subject == "s1");
        assert!(loso(&one, Algorithm::Cart, &[Hyperparameters::new()]).is_err());
    }

    #[test]
    fn csv_exports() {
        let ds = three_subjects();
        let report = loso(&ds, Algorithm::Logistic, &[Hyperparameters::new()]).unwrap();
        let mut buf = Vec::new();
        write_folds_csv(std::slice::from_ref(&report), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
        let mut buf = Vec::new();
        write_table_csv(std::slice::from_ref(&report), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("algorithm,E1_mean"));
        assert!(text.contains("logistic,1.0000"));
        let mut buf = Vec::new();
        write_component_csv(&[report], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
    }
}
