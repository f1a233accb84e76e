use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ELASTIC_NET_RATIO: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    L1,
    L2,
    ElasticNet,
}

impl Penalty {
    /// Share of the penalty strength applied as L1.
    pub fn l1_ratio(self) -> f64 {
        match self {
            Penalty::L1 => 1.0,
            Penalty::L2 => 0.0,
            Penalty::ElasticNet => ELASTIC_NET_RATIO,
        }
    }
}

impl std::str::FromStr for Penalty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(Penalty::L1),
            "l2" => Ok(Penalty::L2),
            "elasticnet" => Ok(Penalty::ElasticNet),
            other => Err(Error::InvalidArgument(format!("unknown penalty `{other}`"))),
        }
    }
}

impl std::fmt::Display for Penalty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Penalty::L1 => "l1",
            Penalty::L2 => "l2",
            Penalty::ElasticNet => "elasticnet",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn zeros(width: usize) -> Self {
        LinearModel {
            weights: vec![0.0; width],
            intercept: 0.0,
        }
    }

    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::shape(self.weights.len(), x.len()));
        }
        Ok(self.intercept + x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub penalty: Penalty,
    pub strength: f64,
    pub max_iter: usize,
    pub tolerance: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            penalty: Penalty::L2,
            strength: 0.1,
            max_iter: 1000,
            tolerance: 1e-4,
        }
    }
}

fn check_binary(x: ArrayView2<f64>, y: &[usize]) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if y.len() != x.nrows() {
        return Err(Error::shape(x.nrows(), y.len()));
    }
    if let Some(&bad) = y.iter().find(|&&c| c > 1) {
        return Err(Error::Range {
            what: "label",
            detail: format!("{bad} is not a binary class"),
        });
    }
    Ok(())
}

/// Largest eigenvalue of `[X 1]^T [X 1] / n` by power iteration.
fn gram_spectral_bound(x: ArrayView2<f64>) -> f64 {
    let n = x.nrows() as f64;
    let d = x.ncols();
    let mut v = Array1::from_elem(d + 1, 1.0 / ((d + 1) as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..60 {
        let xv = x.dot(&v.slice(ndarray::s![..d])) + v[d];
        let mut next = Array1::zeros(d + 1);
        next.slice_mut(ndarray::s![..d])
            .assign(&(x.t().dot(&xv) / n));
        next[d] = xv.sum() / n;
        let norm = next.dot(&next).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        v = next / norm;
    }
    lambda
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Penalized logistic regression by accelerated proximal gradient descent.
///
/// Minimizes mean log-loss plus `strength * (r |w|_1 + (1 - r)/2 |w|^2)`
/// with `r` the L1 ratio of the penalty; the intercept is not penalized.
pub fn fit_logistic(
    x: ArrayView2<f64>,
    y: &[usize],
    params: &LogisticParams,
) -> Result<LinearModel> {
    check_binary(x, y)?;
    if !(params.strength >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "penalty strength must be >= 0, got {}",
            params.strength
        )));
    }
    let n = x.nrows() as f64;
    let d = x.ncols();
    let r = params.penalty.l1_ratio();
    let l1 = params.strength * r;
    let l2 = params.strength * (1.0 - r);
    let lipschitz = 0.25 * gram_spectral_bound(x) * 1.05 + l2 + 1e-12;
    let step = 1.0 / lipschitz;
    let targets = Array1::from_iter(y.iter().map(|&c| c as f64));

    let mut w = Array1::<f64>::zeros(d);
    let mut b = 0.0;
    let mut yw = w.clone();
    let mut yb = b;
    let mut t = 1.0_f64;
    for _ in 0..params.max_iter {
        let z = x.dot(&yw) + yb;
        let residual = z.mapv(sigmoid) - &targets;
        let grad_w = x.t().dot(&residual) / n + &yw * l2;
        let grad_b = residual.sum() / n;
        let next_w = (&yw - &(grad_w * step)).mapv(|v| soft_threshold(v, step * l1));
        let next_b = yb - step * grad_b;
        let change = next_w
            .iter()
            .zip(&w)
            .map(|(a, b)| (a - b).abs())
            .fold((next_b - b).abs(), f64::max);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let momentum = (t - 1.0) / t_next;
        yw = &next_w + &((&next_w - &w) * momentum);
        yb = next_b + momentum * (next_b - b);
        w = next_w;
        b = next_b;
        t = t_next;
        if !b.is_finite() {
            return Err(Error::Diverged {
                epoch: 0,
                loss: f64::NAN,
            });
        }
        if change < params.tolerance {
            break;
        }
    }
    Ok(LinearModel {
        weights: w.to_vec(),
        intercept: b,
    })
}

/// Linear SVM with Platt-calibrated margins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub linear: LinearModel,
    /// `P(class 1 | f) = 1 / (1 + exp(a f + b))`.
    pub platt_a: f64,
    pub platt_b: f64,
}

impl SvmModel {
    pub fn probability(&self, x: &[f64]) -> Result<f64> {
        let f = self.linear.decision(x)?;
        Ok(sigmoid(-(self.platt_a * f + self.platt_b)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            max_iter: 2000,
        }
    }
}

fn svm_objective(x: ArrayView2<f64>, signs: &Array1<f64>, w: &Array1<f64>, b: f64, c: f64) -> f64 {
    let margins = x.dot(w) + b;
    let hinge: f64 = margins
        .iter()
        .zip(signs)
        .map(|(m, s)| (1.0 - s * m).max(0.0))
        .sum();
    0.5 * (w.dot(w) + b * b) + c * hinge
}

/// Minimizes `|w|^2/2 + b^2/2 + C sum hinge(s_i (w.x_i + b))` by full-batch
/// projected subgradient steps, keeping the best iterate. The intercept is
/// regularized like a constant feature.
pub fn fit_linear_svm(x: ArrayView2<f64>, y: &[usize], params: &SvmParams) -> Result<SvmModel> {
    check_binary(x, y)?;
    if !(params.c > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "C must be > 0, got {}",
            params.c
        )));
    }
    let n = x.nrows() as f64;
    let d = x.ncols();
    let lambda = 1.0 / (params.c * n);
    let radius = 1.0 / lambda.sqrt();
    let signs = Array1::from_iter(y.iter().map(|&c| if c == 1 { 1.0 } else { -1.0 }));

    let mut w = Array1::<f64>::zeros(d);
    let mut b = 0.0;
    let mut best = (svm_objective(x, &signs, &w, b, params.c), w.clone(), b);
    for step in 1..=params.max_iter {
        let eta = 1.0 / (lambda * step as f64);
        let margins = x.dot(&w) + b;
        let mut gw = Array1::<f64>::zeros(d);
        let mut gb = 0.0;
        for (i, (&m, &s)) in margins.iter().zip(&signs).enumerate() {
            if s * m < 1.0 {
                gw.scaled_add(s, &x.row(i));
                gb += s;
            }
        }
        w = &w * (1.0 - eta * lambda) + &(gw * (eta / n));
        b = b * (1.0 - eta * lambda) + eta * gb / n;
        let norm = (w.dot(&w) + b * b).sqrt();
        if norm > radius {
            w *= radius / norm;
            b *= radius / norm;
        }
        let objective = svm_objective(x, &signs, &w, b, params.c);
        if objective < best.0 {
            best = (objective, w.clone(), b);
        }
    }
    let linear = LinearModel {
        weights: best.1.to_vec(),
        intercept: best.2,
    };
    let decisions: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|row| linear.decision(row.as_slice().expect("standard layout")))
        .collect::<Result<_>>()?;
    let (platt_a, platt_b) = platt_scaling(&decisions, y);
    Ok(SvmModel {
        linear,
        platt_a,
        platt_b,
    })
}

/// Platt sigmoid fit by Newton's method with backtracking, using the
/// regularized targets `(N+ + 1)/(N+ + 2)` and `1/(N- + 2)`.
pub fn platt_scaling(decisions: &[f64], y: &[usize]) -> (f64, f64) {
    let prior1 = y.iter().filter(|&&c| c == 1).count() as f64;
    let prior0 = y.len() as f64 - prior1;
    let hi = (prior1 + 1.0) / (prior1 + 2.0);
    let lo = 1.0 / (prior0 + 2.0);
    let targets: Vec<f64> = y.iter().map(|&c| if c == 1 { hi } else { lo }).collect();

    let objective = |a: f64, b: f64| -> f64 {
        decisions
            .iter()
            .zip(&targets)
            .map(|(&f, &t)| {
                let z = a * f + b;
                if z >= 0.0 {
                    t * z + (1.0 + (-z).exp()).ln()
                } else {
                    (t - 1.0) * z + (1.0 + z.exp()).ln()
                }
            })
            .sum()
    };

    let mut a = 0.0;
    let mut b = ((prior0 + 1.0) / (prior1 + 1.0)).ln();
    let mut value = objective(a, b);
    let sigma = 1e-12;
    for _ in 0..100 {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (sigma, sigma, 0.0, 0.0, 0.0);
        for (&f, &t) in decisions.iter().zip(&targets) {
            let z = a * f + b;
            let (p, q) = if z >= 0.0 {
                let e = (-z).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = z.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = t - p;
            g1 += f * d1;
            g2 += d1;
        }
        if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        let mut moved = false;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nv = objective(na, nb);
            if nv < value + 1e-4 * step * gd {
                a = na;
                b = nb;
                value = nv;
                moved = true;
                break;
            }
            step /= 2.0;
        }
        if !moved {
            break;
        }
    }
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn blobs() -> (Array2<f64>, Vec<usize>) {
        let x = Array2::from_shape_fn((40, 2), |(i, j)| {
            let class = (i % 2) as f64;
            let jitter = ((i * 13 + j * 7) % 10) as f64 / 10.0 - 0.45;
            (class * 2.0 - 1.0) * (1.0 + j as f64) + jitter
        });
        let y = (0..40).map(|i| i % 2).collect();
        (x, y)
    }

    fn accuracy(predict: impl Fn(&[f64]) -> usize, x: &Array2<f64>, y: &[usize]) -> f64 {
        let hits = x
            .rows()
            .into_iter()
            .zip(y)
            .filter(|(r, &c)| predict(r.as_slice().unwrap()) == c)
            .count();
        hits as f64 / y.len() as f64
    }

    #[test]
    fn logistic_separates_blobs_under_every_penalty() {
        let (x, y) = blobs();
        for penalty in [Penalty::L1, Penalty::L2, Penalty::ElasticNet] {
            let params = LogisticParams {
                penalty,
                strength: 0.01,
                ..LogisticParams::default()
            };
            let m = fit_logistic(x.view(), &y, &params).unwrap();
            let acc = accuracy(|r| usize::from(m.decision(r).unwrap() > 0.0), &x, &y);
            assert_eq!(acc, 1.0, "{penalty}");
        }
    }

    #[test]
    fn extreme_l1_zeroes_coefficients() {
        let (x, y) = blobs();
        let params = LogisticParams {
            penalty: Penalty::L1,
            strength: 1e6,
            ..LogisticParams::default()
        };
        let m = fit_logistic(x.view(), &y, &params).unwrap();
        assert!(m.weights.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn unpenalized_fit_matches_closed_form_intercept() {
        // With no features the optimum intercept is the log-odds.
        let x = Array2::<f64>::zeros((10, 0));
        let y = [1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
        let params = LogisticParams {
            strength: 0.0,
            tolerance: 1e-12,
            max_iter: 10_000,
            ..LogisticParams::default()
        };
        let m = fit_logistic(x.view(), &y, &params).unwrap();
        assert!((m.intercept - (3.0_f64 / 7.0).ln()).abs() < 1e-6);
    }

    #[test]
    fn svm_separates_blobs_and_calibrates() {
        let (x, y) = blobs();
        let m = fit_linear_svm(x.view(), &y, &SvmParams::default()).unwrap();
        let acc = accuracy(|r| usize::from(m.linear.decision(r).unwrap() > 0.0), &x, &y);
        assert_eq!(acc, 1.0);
        // Calibration is increasing in the margin.
        assert!(m.platt_a < 0.0);
        let far = m.probability(&[5.0, 10.0]).unwrap();
        assert!(far > 0.9 && far <= 1.0);
    }

    #[test]
    fn platt_on_uninformative_scores_gives_prior() {
        let decisions = [0.0; 8];
        let y = [1, 0, 0, 0, 1, 0, 0, 0];
        let (a, b) = platt_scaling(&decisions, &y);
        // Only b is identifiable; p = mean regularized target = (2*0.75 + 6*0.125)/8.
        let p = sigmoid(-(a * 0.0 + b));
        assert!((p - (2.0 * 0.75 + 6.0 * 0.125) / 8.0).abs() < 1e-6);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        let x = array![[0.0], [1.0]];
        let y = [0, 1];
        assert!(fit_linear_svm(
            x.view(),
            &y,
            &SvmParams {
                c: 0.0,
                max_iter: 10
            }
        )
        .is_err());
        let params = LogisticParams {
            strength: -1.0,
            ..LogisticParams::default()
        };
        assert!(fit_logistic(x.view(), &y, &params).is_err());
        assert!(fit_logistic(x.view(), &[0, 3], &LogisticParams::default()).is_err());
    }
}
