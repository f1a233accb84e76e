use proptest::prelude::*;
use rehab_core::corpus::Corpus;
use rehab_core::prediction::{
    compact_mlp_grid, default_grid, f1, fit_checksum, loso, rfe_select, train, Algorithm, LabeledDataset,
    Row, Standardizer,
};
use rehab_core::synthdata::{generate_dataset, GeneratorConfig};
use rehab_core::{Component, Exercise, Group, Quality, QualityThreshold, Side};

fn quality(bit: bool) -> Quality {
    if bit {
        Quality::Incorrect
    } else {
        Quality::Correct
    }
}

fn small_corpus() -> Corpus {
    let config = GeneratorConfig {
        seed: 9,
        healthy_subjects: 3,
        healthy_repetitions: 4,
        stroke_subjects: 4,
        stroke_repetitions: 10,
        exercises: vec![Exercise::E2],
        ..GeneratorConfig::default()
    };
    Corpus::from_sessions(&generate_dataset(&config).unwrap().sessions).unwrap()
}

fn dataset(rows: Vec<(Vec<f64>, bool, &str)>) -> LabeledDataset {
    let width = rows[0].0.len();
    let rows = rows
        .into_iter()
        .enumerate()
        .map(|(i, (x, bit, subject))| Row {
            motion_id: format!("m{i:03}"),
            subject: subject.to_string(),
            group: Group::Stroke,
            side: Side::Affected,
            x,
            label: quality(bit),
            score: if bit { 0 } else { 2 },
        })
        .collect();
    LabeledDataset::with_features(Exercise::E1, Component::Rom, (0..width).map(|j| format!("f{j}")).collect(), rows).unwrap()
}

#[test]
fn folds_never_see_their_subject() {
    let corpus = small_corpus();
    let data = corpus.dataset(Exercise::E2, Component::Smoothness, QualityThreshold::FullScore).unwrap();
    for algorithm in [Algorithm::Cart, Algorithm::Logistic] {
        let report = loso(&data, algorithm, &default_grid(algorithm)).unwrap();
        assert_eq!(report.folds.len(), data.stroke_subjects().len());
        for fold in &report.folds {
            let training = data.filter(|r| r.subject != fold.subject);
            assert_eq!(fold.checksum, fit_checksum(&training).unwrap());
            assert_eq!(fold.train_rows, training.len());
            assert!((0.0..=1.0).contains(&fold.f1));
        }
    }
}

#[test]
fn three_subjects_give_three_folds() {
    let rows = (0..30)
        .map(|i| (vec![i as f64, (i % 4) as f64], i % 4 < 2, ["a", "b", "c"][i % 3]))
        .collect();
    let data = dataset(rows);
    let report = loso(&data, Algorithm::Cart, &default_grid(Algorithm::Cart)).unwrap();
    let subjects: Vec<&str> = report.folds.iter().map(|f| f.subject.as_str()).collect();
    assert_eq!(subjects, ["a", "b", "c"]);
    assert!(report.folds.iter().all(|f| f.train_rows == 20 && f.test_rows == 10));
}

#[test]
fn single_class_is_rejected() {
    let data = dataset((0..12).map(|i| (vec![i as f64], false, ["a", "b"][i % 2])).collect());
    assert!(loso(&data, Algorithm::Logistic, &default_grid(Algorithm::Logistic)).is_err());
}

#[test]
fn mlp_separates_synthetic_quality() {
    let corpus = small_corpus();
    let data = corpus.dataset(Exercise::E2, Component::Rom, QualityThreshold::FullScore).unwrap();
    let report = loso(&data, Algorithm::Mlp, &compact_mlp_grid()[..1]).unwrap();
    assert!(report.mean_f1 >= 0.95, "{}", report.mean_f1);
}

#[test]
fn standardized_prediction_is_consistent() {
    let corpus = small_corpus();
    let data = corpus.dataset(Exercise::E2, Component::Compensation, QualityThreshold::FullScore).unwrap();
    for algorithm in Algorithm::ALL {
        let hp = if algorithm == Algorithm::Mlp { compact_mlp_grid()[0].clone() } else { default_grid(algorithm)[0].clone() };
        let model = train(algorithm, &data, &hp).unwrap();
        let stats = Standardizer::fit(&data).unwrap();
        assert_eq!(stats, model.standardizer);
        for row in data.rows.iter().step_by(7) {
            let direct = model.predict(&row.x).unwrap();
            let z = stats.apply(&row.x).unwrap();
            assert_eq!(direct, model.predict_standardized(&z).unwrap());
        }
        let predictions = model.predict_dataset(&data).unwrap();
        assert!(f1(&predictions, &data.labels()) > 0.8, "{algorithm}");
    }
}

#[test]
fn rfe_is_deterministic_and_finds_the_signal() {
    let rows = (0..60)
        .map(|i| {
            let x0 = (i as f64 - 30.0) / 10.0;
            let noise: Vec<f64> = (1..5).map(|j| (((i * 31 + j * 17) % 23) as f64 - 11.0) / 7.0).collect();
            let mut x = vec![x0];
            x.extend(noise);
            (x, x0 > 0.0, ["a", "b", "c"][i % 3])
        })
        .collect();
    let data = dataset(rows);
    let a = rfe_select(&data, 1).unwrap();
    assert_eq!(a.selected, vec![0]);
    assert_eq!(a, rfe_select(&data, 1).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cart_ignores_increasing_transforms(
        xs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 12..40),
        probes in prop::collection::vec((-6.0f64..6.0, -6.0f64..6.0), 1..20),
        feature in 0usize..2,
        power in prop_oneof![Just(1.0f64), Just(3.0)],
    ) {
        let warp = |v: f64| v.signum() * v.abs().powf(power) * 2.0 + 7.0;
        let apply = |x: (f64, f64)| {
            let mut v = vec![x.0, x.1];
            v[feature] = warp(v[feature]);
            v
        };
        let rows: Vec<(Vec<f64>, bool, &str)> = xs
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| (vec![a, b], a + 0.5 * b > 0.3, ["a", "b"][i % 2]))
            .collect();
        prop_assume!(rows.iter().any(|r| r.1) && rows.iter().any(|r| !r.1));
        let warped: Vec<(Vec<f64>, bool, &str)> = xs
            .iter()
            .zip(&rows)
            .map(|(&x, r)| (apply(x), r.1, r.2))
            .collect();
        let hp = default_grid(Algorithm::Cart)[0].clone();
        let plain = train(Algorithm::Cart, &dataset(rows), &hp).unwrap();
        let bent = train(Algorithm::Cart, &dataset(warped), &hp).unwrap();
        let test_points: Vec<(f64, f64)> = probes.into_iter().chain(xs.iter().copied()).collect();
        for p in test_points {
            prop_assert_eq!(plain.predict(&[p.0, p.1]).unwrap().0, bent.predict(&apply(p)).unwrap().0);
        }
    }
}
