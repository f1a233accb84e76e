//! Per-(exercise, component) quality classifiers: CART, penalized logistic
//! regression, linear SVM and MLP, with leave-one-subject-out evaluation and
//! a recursive-feature-elimination baseline.

mod cart;
mod dataset;
mod linear;
mod loso;
mod metrics;
mod rfe;

pub use cart::{CartParams, Node, Split, Tree};
pub use dataset::{LabeledDataset, Row, Standardizer};
pub use linear::{
    fit_linear_svm, fit_logistic, platt_scaling, sigmoid, LinearModel, LogisticParams, Penalty,
    SvmModel, SvmParams, ELASTIC_NET_RATIO,
};
pub use loso::{
    fit_checksum, loso, loso_subjects, write_component_csv, write_folds_csv, write_table_csv,
    EvalReport, FoldResult, GridResult,
};
pub use metrics::{accuracy, f1, macro_f1, mean_std, Confusion};
pub use rfe::{rfe_select, RfeSelection, RFE_STRENGTH};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::FeatureVector;
use crate::motion::{Component, Exercise, Quality};
use crate::numerics::{
    argmax, fit_classifier, FitConfig, Head, LearningRateSchedule, MlpParams, MlpSpec, GRID_WIDTHS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "cart")]
    Cart,
    #[serde(rename = "logistic")]
    Logistic,
    #[serde(rename = "linear-svm")]
    LinearSvm,
    #[serde(rename = "mlp")]
    Mlp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Cart,
        Algorithm::Logistic,
        Algorithm::LinearSvm,
        Algorithm::Mlp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Cart => "cart",
            Algorithm::Logistic => "logistic",
            Algorithm::LinearSvm => "linear-svm",
            Algorithm::Mlp => "mlp",
        }
    }

    fn keys(self) -> &'static [&'static str] {
        match self {
            Algorithm::Cart => &["ccp_alpha", "max_depth", "min_samples_leaf"],
            Algorithm::Logistic => &["penalty", "strength", "max_iter", "tol"],
            Algorithm::LinearSvm => &["c", "max_iter"],
            Algorithm::Mlp => &[
                "hidden",
                "learning_rate",
                "seed",
                "max_epochs",
                "tol",
                "plateau_patience",
            ],
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Number(f64),
    Layers(Vec<usize>),
    Text(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Number(v) => write!(f, "{v}"),
            ParamValue::Layers(l) => {
                let parts: Vec<String> = l.iter().map(|w| w.to_string()).collect();
                write!(f, "({})", parts.join(","))
            }
            ParamValue::Text(t) => f.write_str(t),
        }
    }
}

impl From<f64> for ParamValue {
    fn from(v: f64) -> Self {
        ParamValue::Number(v)
    }
}

impl From<&str> for ParamValue {
    fn from(v: &str) -> Self {
        ParamValue::Text(v.to_string())
    }
}

impl From<Vec<usize>> for ParamValue {
    fn from(v: Vec<usize>) -> Self {
        ParamValue::Layers(v)
    }
}

/// One grid point: named hyperparameter values.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Hyperparameters(pub BTreeMap<String, ParamValue>);

impl Hyperparameters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl Into<ParamValue>) -> Self {
        self.0.insert(key.to_string(), value.into());
        self
    }

    pub fn get(&self, key: &str) -> Option<&ParamValue> {
        self.0.get(key)
    }

    fn number(&self, algorithm: Algorithm, key: &str) -> Result<Option<f64>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(ParamValue::Number(v)) => Ok(Some(*v)),
            Some(other) => Err(Error::InvalidArgument(format!(
                "{algorithm} hyperparameter `{key}` must be a number, got {other}"
            ))),
        }
    }

    fn count(&self, algorithm: Algorithm, key: &str) -> Result<Option<usize>> {
        match self.number(algorithm, key)? {
            None => Ok(None),
            Some(v) if v >= 0.0 && v.fract() == 0.0 => Ok(Some(v as usize)),
            Some(v) => Err(Error::InvalidArgument(format!(
                "{algorithm} hyperparameter `{key}` must be a whole number, got {v}"
            ))),
        }
    }

    fn check_keys(&self, algorithm: Algorithm) -> Result<()> {
        match self
            .0
            .keys()
            .find(|k| !algorithm.keys().contains(&k.as_str()))
        {
            Some(key) => Err(Error::UnknownHyperparameter {
                algorithm: algorithm.to_string(),
                key: key.clone(),
            }),
            None => Ok(()),
        }
    }

    pub fn cart(&self) -> Result<CartParams> {
        let a = Algorithm::Cart;
        self.check_keys(a)?;
        let d = CartParams::default();
        Ok(CartParams {
            ccp_alpha: self.number(a, "ccp_alpha")?.unwrap_or(d.ccp_alpha),
            max_depth: self.count(a, "max_depth")?,
            min_samples_leaf: self
                .count(a, "min_samples_leaf")?
                .unwrap_or(d.min_samples_leaf),
        })
    }

    pub fn logistic(&self) -> Result<LogisticParams> {
        let a = Algorithm::Logistic;
        self.check_keys(a)?;
        let d = LogisticParams::default();
        let penalty = match self.0.get("penalty") {
            None => d.penalty,
            Some(ParamValue::Text(t)) => t.parse()?,
            Some(other) => {
                return Err(Error::InvalidArgument(format!(
                    "penalty must be text, got {other}"
                )))
            }
        };
        Ok(LogisticParams {
            penalty,
            strength: self.number(a, "strength")?.unwrap_or(d.strength),
            max_iter: self.count(a, "max_iter")?.unwrap_or(d.max_iter),
            tolerance: self.number(a, "tol")?.unwrap_or(d.tolerance),
        })
    }

    pub fn svm(&self) -> Result<SvmParams> {
        let a = Algorithm::LinearSvm;
        self.check_keys(a)?;
        let d = SvmParams::default();
        Ok(SvmParams {
            c: self.number(a, "c")?.unwrap_or(d.c),
            max_iter: self.count(a, "max_iter")?.unwrap_or(d.max_iter),
        })
    }

    pub fn mlp(&self) -> Result<MlpHyper> {
        let a = Algorithm::Mlp;
        self.check_keys(a)?;
        let d = MlpHyper::default();
        let hidden = match self.0.get("hidden") {
            None => d.hidden,
            Some(ParamValue::Layers(l)) => l.clone(),
            Some(ParamValue::Number(v)) if *v >= 1.0 && v.fract() == 0.0 => vec![*v as usize],
            Some(other) => {
                return Err(Error::InvalidArgument(format!(
                    "hidden must be a list of widths, got {other}"
                )))
            }
        };
        Ok(MlpHyper {
            hidden,
            learning_rate: self.number(a, "learning_rate")?.unwrap_or(d.learning_rate),
            seed: self.count(a, "seed")?.map_or(d.seed, |s| s as u64),
            max_epochs: self.count(a, "max_epochs")?.unwrap_or(d.max_epochs),
            tolerance: self.number(a, "tol")?.unwrap_or(d.tolerance),
            plateau_patience: self.count(a, "plateau_patience")?,
        })
    }

    pub fn validate(&self, algorithm: Algorithm) -> Result<()> {
        match algorithm {
            Algorithm::Cart => self.cart().map(drop),
            Algorithm::Logistic => self.logistic().map(drop),
            Algorithm::LinearSvm => self.svm().map(drop),
            Algorithm::Mlp => self.mlp().map(drop),
        }
    }
}

impl fmt::Display for Hyperparameters {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(";"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpHyper {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub seed: u64,
    pub max_epochs: usize,
    pub tolerance: f64,
    pub plateau_patience: Option<usize>,
}

impl Default for MlpHyper {
    fn default() -> Self {
        MlpHyper {
            hidden: vec![64],
            learning_rate: 0.01,
            seed: 0,
            max_epochs: crate::numerics::DEFAULT_MAX_EPOCHS,
            tolerance: crate::numerics::DEFAULT_TOLERANCE,
            plateau_patience: None,
        }
    }
}

pub const MLP_LEARNING_RATES: [f64; 5] = [0.0001, 0.005, 0.001, 0.01, 0.1];

/// Hidden layers and learning rate of the reference network per task.
pub fn reference_architecture(exercise: Exercise, component: Component) -> (Vec<usize>, f64) {
    match (exercise, component) {
        (Exercise::E1, Component::Rom) => (vec![32, 32, 32], 0.1),
        (Exercise::E1, Component::Smoothness) => (vec![16], 0.0001),
        (Exercise::E1, Component::Compensation) => (vec![256, 256], 0.1),
        (_, Component::Rom) => (vec![256], 0.1),
        (_, Component::Smoothness) => (vec![64, 64], 0.001),
        (_, Component::Compensation) => (vec![128, 128], 0.1),
    }
}

/// Default search grid per algorithm.
pub fn default_grid(algorithm: Algorithm) -> Vec<Hyperparameters> {
    match algorithm {
        Algorithm::Cart => [0.0, 0.001, 0.01]
            .into_iter()
            .map(|a| Hyperparameters::new().with("ccp_alpha", a))
            .collect(),
        Algorithm::Logistic => {
            let mut grid = Vec::new();
            for penalty in ["l1", "l2", "elasticnet"] {
                for strength in [0.01, 0.1, 1.0] {
                    grid.push(
                        Hyperparameters::new()
                            .with("penalty", penalty)
                            .with("strength", strength),
                    );
                }
            }
            grid
        }
        Algorithm::LinearSvm => vec![Hyperparameters::new().with("c", 1.0)],
        Algorithm::Mlp => compact_mlp_grid(),
    }
}

/// Small MLP grid for desk-scale runs.
pub fn compact_mlp_grid() -> Vec<Hyperparameters> {
    [vec![32], vec![64, 64]]
        .into_iter()
        .map(|h| {
            Hyperparameters::new()
                .with("hidden", h)
                .with("learning_rate", 0.01)
        })
        .collect()
}

/// Every equal-width network of 1 to 3 hidden layers (32 to 512 units) at
/// each candidate learning rate.
pub fn full_mlp_grid() -> Vec<Hyperparameters> {
    let mut grid = Vec::new();
    for layers in 1..=3 {
        for &width in GRID_WIDTHS.iter().filter(|&&w| w >= 32) {
            for lr in MLP_LEARNING_RATES {
                grid.push(
                    Hyperparameters::new()
                        .with("hidden", vec![width; layers])
                        .with("learning_rate", lr),
                );
            }
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "params")]
pub enum Fitted {
    Cart(Tree),
    Logistic(LinearModel),
    LinearSvm(SvmModel),
    Mlp(MlpParams),
}

/// A fitted classifier with its training-row standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub algorithm: Algorithm,
    pub exercise: Exercise,
    pub component: Component,
    pub hyperparameters: Hyperparameters,
    pub standardizer: Standardizer,
    /// Feature columns used, as indices into the full vector.
    pub subset: Option<Vec<usize>>,
    /// Held-out subject of the fold this model was trained for.
    pub fold: Option<String>,
    pub fitted: Fitted,
}

impl Model {
    pub fn width(&self) -> usize {
        self.standardizer.width()
    }

    /// Predicted quality and confidence for a raw feature vector.
    pub fn predict(&self, x: &[f64]) -> Result<(Quality, f64)> {
        let z = self.standardizer.apply(x)?;
        self.predict_standardized(&z)
    }

    pub fn predict_vector(&self, x: &FeatureVector) -> Result<(Quality, f64)> {
        if x.exercise != self.exercise || x.component != self.component {
            return Err(Error::InvalidArgument(format!(
                "model for {} {} cannot score a {} {} vector",
                self.exercise, self.component, x.exercise, x.component
            )));
        }
        self.predict(&x.values)
    }

    /// Prediction for a vector already standardized with this model's statistics.
    pub fn predict_standardized(&self, z: &[f64]) -> Result<(Quality, f64)> {
        if z.len() != self.width() {
            return Err(Error::shape(self.width(), z.len()));
        }
        let picked;
        let input = match &self.subset {
            Some(cols) => {
                picked = cols.iter().map(|&c| z[c]).collect::<Vec<f64>>();
                &picked[..]
            }
            None => z,
        };
        let (class, confidence) = match &self.fitted {
            Fitted::Cart(tree) => tree.predict(input)?,
            Fitted::Logistic(m) => {
                let p = sigmoid(m.decision(input)?);
                if p > 0.5 {
                    (1, p)
                } else {
                    (0, 1.0 - p)
                }
            }
            Fitted::LinearSvm(m) => {
                let f = m.linear.decision(input)?;
                let p = m.probability(input)?;
                if f > 0.0 {
                    (1, p)
                } else {
                    (0, 1.0 - p)
                }
            }
            Fitted::Mlp(params) => argmax(&params.forward(input)?),
        };
        Ok((Quality::from_class_index(class), confidence))
    }

    pub fn predict_dataset(&self, dataset: &LabeledDataset) -> Result<Vec<Quality>> {
        dataset
            .rows
            .iter()
            .map(|r| self.predict(&r.x).map(|(q, _)| q))
            .collect()
    }
}

/// Fits `algorithm` on every row of `dataset`.
pub fn train(
    algorithm: Algorithm,
    dataset: &LabeledDataset,
    hp: &Hyperparameters,
) -> Result<Model> {
    train_with(algorithm, dataset, hp, None, None)
}

/// Fits on the given feature subset; standardization statistics come from
/// `dataset` alone.
pub fn train_with(
    algorithm: Algorithm,
    dataset: &LabeledDataset,
    hp: &Hyperparameters,
    subset: Option<&[usize]>,
    fold: Option<String>,
) -> Result<Model> {
    hp.validate(algorithm)?;
    dataset.require_two_classes()?;
    let standardizer = Standardizer::fit(dataset)?;
    let mut standardized = standardizer.transform(dataset)?;
    if let Some(cols) = subset {
        if cols.is_empty() {
            return Err(Error::InvalidArgument("empty feature subset".into()));
        }
        standardized = standardized.select(cols)?;
    }
    let x = standardized.matrix();
    let y = standardized.class_indices();
    let fitted = match algorithm {
        Algorithm::Cart => Fitted::Cart(Tree::fit(x.view(), &y, &hp.cart()?)?),
        Algorithm::Logistic => Fitted::Logistic(fit_logistic(x.view(), &y, &hp.logistic()?)?),
        Algorithm::LinearSvm => Fitted::LinearSvm(fit_linear_svm(x.view(), &y, &hp.svm()?)?),
        Algorithm::Mlp => {
            let h = hp.mlp()?;
            let spec = MlpSpec::new(x.ncols(), &h.hidden, 2, Head::Softmax, h.seed);
            spec.validate_grid()?;
            let config = FitConfig {
                learning_rate: h.learning_rate,
                tolerance: h.tolerance,
                max_epochs: h.max_epochs,
                schedule: match h.plateau_patience {
                    Some(patience) => LearningRateSchedule::PlateauHalving { patience },
                    None => LearningRateSchedule::Constant,
                },
            };
            Fitted::Mlp(fit_classifier(&spec, x.view(), &y, &config)?.params)
        }
    };
    Ok(Model {
        algorithm,
        exercise: dataset.exercise,
        component: dataset.component,
        hyperparameters: hp.clone(),
        standardizer,
        subset: subset.map(<[usize]>::to_vec),
        fold,
        fitted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{Group, Side};

    pub(crate) fn toy_dataset(rows: &[(Vec<f64>, usize, &str)]) -> LabeledDataset {
        let width = rows[0].0.len();
        let rows = rows
            .iter()
            .enumerate()
            .map(|(i, (x, y, subject))| Row {
                motion_id: format!("m{i}"),
                subject: subject.to_string(),
                group: Group::Stroke,
                side: Side::Affected,
                x: x.clone(),
                label: Quality::from_class_index(*y),
                score: if *y == 1 { 0 } else { 2 },
            })
            .collect();
        LabeledDataset::with_features(
            Exercise::E1,
            Component::Rom,
            (0..width).map(|i| format!("f{i}")).collect(),
            rows,
        )
        .unwrap()
    }

    fn xor() -> LabeledDataset {
        let mut rows = Vec::new();
        for rep in 0..4 {
            let e = rep as f64 * 0.05;
            rows.push((vec![0.0 + e, 0.0], 0, "a"));
            rows.push((vec![0.0, 1.0 - e], 1, "a"));
            rows.push((vec![1.0 - e, 0.0], 1, "b"));
            rows.push((vec![1.0, 1.0 + e], 0, "b"));
        }
        toy_dataset(&rows)
    }

    #[test]
    fn mlp_fits_xor() {
        let ds = xor();
        let hp = Hyperparameters::new()
            .with("hidden", vec![16])
            .with("learning_rate", 0.05)
            .with("seed", 3.0);
        let model = train(Algorithm::Mlp, &ds, &hp).unwrap();
        let pred = model.predict_dataset(&ds).unwrap();
        assert_eq!(accuracy(&pred, &ds.labels()), 1.0);
    }

    #[test]
    fn mlp_prediction_is_argmax_of_softmax() {
        let ds = xor();
        let model = train(
            Algorithm::Mlp,
            &ds,
            &Hyperparameters::new().with("hidden", vec![16]),
        )
        .unwrap();
        let Fitted::Mlp(params) = &model.fitted else {
            panic!()
        };
        for row in &ds.rows {
            let z = model.standardizer.apply(&row.x).unwrap();
            let probs = params.forward(&z).unwrap();
            let (q, conf) = model.predict(&row.x).unwrap();
            let expected = usize::from(probs[1] > probs[0]);
            assert_eq!(q.class_index(), expected);
            assert_eq!(conf, probs[expected]);
        }
    }

    #[test]
    fn linear_models_fail_on_xor_but_tree_does_not() {
        let ds = xor();
        let tree = train(Algorithm::Cart, &ds, &Hyperparameters::new()).unwrap();
        assert_eq!(
            accuracy(&tree.predict_dataset(&ds).unwrap(), &ds.labels()),
            1.0
        );
        let lr = train(Algorithm::Logistic, &ds, &Hyperparameters::new()).unwrap();
        assert!(accuracy(&lr.predict_dataset(&ds).unwrap(), &ds.labels()) < 1.0);
    }

    #[test]
    fn zero_coefficient_logistic_is_undecided() {
        let ds = xor();
        let mut model = train(Algorithm::Logistic, &ds, &Hyperparameters::new()).unwrap();
        model.fitted = Fitted::Logistic(LinearModel::zeros(2));
        assert_eq!(model.predict(&[0.3, 0.7]).unwrap(), (Quality::Correct, 0.5));
    }

    #[test]
    fn single_class_and_unknown_key_rejected() {
        let ds = toy_dataset(&[(vec![0.0], 0, "a"), (vec![1.0], 0, "b")]);
        assert!(matches!(
            train(Algorithm::Cart, &ds, &Hyperparameters::new()),
            Err(Error::SingleClass)
        ));
        let ds = xor();
        let hp = Hyperparameters::new().with("gamma", 0.1);
        assert!(matches!(
            train(Algorithm::LinearSvm, &ds, &hp),
            Err(Error::UnknownHyperparameter { .. })
        ));
        let hp = Hyperparameters::new().with("hidden", vec![17]);
        assert!(train(Algorithm::Mlp, &ds, &hp).is_err());
    }

    #[test]
    fn length_mismatch_rejected() {
        let ds = xor();
        for algorithm in Algorithm::ALL {
            let hp = if algorithm == Algorithm::Mlp {
                Hyperparameters::new().with("max_epochs", 3.0)
            } else {
                Hyperparameters::new()
            };
            let model = train(algorithm, &ds, &hp).unwrap();
            assert!(model.predict(&[1.0]).is_err(), "{algorithm}");
        }
    }

    #[test]
    fn model_round_trips_through_json() {
        let ds = xor();
        for algorithm in Algorithm::ALL {
            let model = train(
                algorithm,
                &ds,
                &Hyperparameters::new().with_default_for(algorithm),
            )
            .unwrap();
            let text = serde_json::to_string(&model).unwrap();
            let back: Model = serde_json::from_str(&text).unwrap();
            assert_eq!(back, model, "{algorithm}");
        }
    }

    #[test]
    fn grids_validate() {
        for algorithm in Algorithm::ALL {
            for hp in default_grid(algorithm) {
                hp.validate(algorithm).unwrap();
            }
        }
        assert_eq!(full_mlp_grid().len(), 75);
        for ex in Exercise::ALL {
            for c in Component::ALL {
                let (hidden, lr) = reference_architecture(ex, c);
                assert!(MLP_LEARNING_RATES.contains(&lr));
                MlpSpec::new(4, &hidden, 2, Head::Softmax, 0)
                    .validate_grid()
                    .unwrap();
            }
        }
    }

    impl Hyperparameters {
        fn with_default_for(self, algorithm: Algorithm) -> Self {
            match algorithm {
                Algorithm::Mlp => self.with("max_epochs", 20.0),
                _ => self,
            }
        }
    }
}
