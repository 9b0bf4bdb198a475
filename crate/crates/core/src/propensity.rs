//! Importance ratios from a two-sample logistic classifier.
//!
//! Samples of the first set carry label `z = +1` and samples of the second
//! set `z = -1`. The classifier minimizes
//!
//! ```text
//! (1/N) sum log(1 + exp(-z w.[x;1])) + c |w|^2
//! ```
//!
//! over both sets, and the density ratio of the second set to the first is read
//! off as `beta(x) = P(z=-1|x) / P(z=+1|x) = exp(-w.[x;1])`.
//!
//! For policy updates the first set holds the controls stored in the replay
//! mini-batch and the second set holds the current policy's controls at the
//! same states. A large `beta` marks a stored control that looks like one the
//! current policy would choose.

use crate::error::{check_dim, Error, Result};

/// Upper clamp applied to `beta`; the lower clamp is its reciprocal.
pub const BETA_CAP: f64 = 1e12;

/// Gradient-norm tolerance at which [`fit_logistic`] stops early.
pub const GRAD_TOLERANCE: f64 = 1e-6;

/// Fixed descent step; halved only if a step would raise the objective.
pub const STEP_SIZE: f64 = 0.5;

pub const DEFAULT_C: f64 = 1e-3;
pub const DEFAULT_ITERS: usize = 100;

/// Linear classifier over `[features; 1]`; the last weight is the bias.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub c: f64,
}

impl LogisticModel {
    pub fn new(weights: Vec<f64>, c: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Precondition(
                "logistic model needs at least a bias weight".into(),
            ));
        }
        if weights.iter().any(|w| !w.is_finite()) || !(c >= 0.0) {
            return Err(Error::Numerical(
                "logistic weights must be finite and c >= 0".into(),
            ));
        }
        Ok(Self { weights, c })
    }

    /// Feature dimension, excluding the constant bias feature.
    pub fn feature_dim(&self) -> usize {
        self.weights.len() - 1
    }

    /// `w.[x;1]`
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        check_dim("LogisticModel::score", self.feature_dim(), x.len())?;
        Ok(linear(&self.weights, x))
    }

    /// `P(z = +1 | x)`
    pub fn probability_positive(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.score(x)?))
    }

    /// Predicted label, `+1` only when the positive class is strictly more likely.
    pub fn predict(&self, x: &[f64]) -> Result<i8> {
        Ok(if self.score(x)? > 0.0 { 1 } else { -1 })
    }

    pub fn norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    /// Regularized logistic objective on the labelled sets.
    pub fn objective(&self, pos: &[Vec<f64>], neg: &[Vec<f64>]) -> f64 {
        objective(&self.weights, self.c, pos, neg)
    }
}

#[inline]
fn linear(w: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    w[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[d]
}

#[inline]
fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(-m))` without overflow.
#[inline]
fn log1p_exp_neg(m: f64) -> f64 {
    if m > 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

fn labelled<'a>(
    pos: &'a [Vec<f64>],
    neg: &'a [Vec<f64>],
) -> impl Iterator<Item = (&'a [f64], f64)> {
    pos.iter()
        .map(|x| (x.as_slice(), 1.0))
        .chain(neg.iter().map(|x| (x.as_slice(), -1.0)))
}

fn objective(w: &[f64], c: f64, pos: &[Vec<f64>], neg: &[Vec<f64>]) -> f64 {
    let n = (pos.len() + neg.len()) as f64;
    let data: f64 = labelled(pos, neg)
        .map(|(x, z)| log1p_exp_neg(z * linear(w, x)))
        .sum();
    data / n + c * w.iter().map(|v| v * v).sum::<f64>()
}

fn gradient(w: &[f64], c: f64, pos: &[Vec<f64>], neg: &[Vec<f64>]) -> Vec<f64> {
    let n = (pos.len() + neg.len()) as f64;
    let d = w.len() - 1;
    let mut g = vec![0.0; w.len()];
    for (x, z) in labelled(pos, neg) {
        // d/ds log(1 + exp(-z s)) = -z * sigmoid(-z s)
        let coeff = -z * sigmoid(-z * linear(w, x)) / n;
        for (gi, xi) in g[..d].iter_mut().zip(x) {
            *gi += coeff * xi;
        }
        g[d] += coeff;
    }
    for (gi, wi) in g.iter_mut().zip(w) {
        *gi += 2.0 * c * wi;
    }
    g
}

fn check_sets(pos: &[Vec<f64>], neg: &[Vec<f64>]) -> Result<usize> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Precondition(
            "each class needs at least one sample".into(),
        ));
    }
    let d = pos[0].len();
    for x in pos.iter().chain(neg) {
        check_dim("fit_logistic features", d, x.len())?;
    }
    Ok(d)
}

/// Fits the classifier by full-batch gradient descent from `w = 0`.
///
/// Runs at most `iters` steps and stops once the gradient norm drops below
/// [`GRAD_TOLERANCE`]. Steps start at [`STEP_SIZE`] and are halved whenever
/// they would increase the objective, so the objective never goes up.
pub fn fit_logistic(
    pos: &[Vec<f64>],
    neg: &[Vec<f64>],
    c: f64,
    iters: usize,
) -> Result<LogisticModel> {
    let d = check_sets(pos, neg)?;
    if !(c >= 0.0) {
        return Err(Error::Precondition(format!(
            "regularization must be >= 0, got {c}"
        )));
    }
    let mut w = vec![0.0; d + 1];
    let mut f = objective(&w, c, pos, neg);
    for _ in 0..iters {
        let g = gradient(&w, c, pos, neg);
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < GRAD_TOLERANCE {
            break;
        }
        let mut step = STEP_SIZE;
        loop {
            let trial: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - step * gi).collect();
            let f_trial = objective(&trial, c, pos, neg);
            if f_trial <= f {
                w = trial;
                f = f_trial;
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                // No decrease available at machine precision.
                return LogisticModel::new(w, c);
            }
        }
    }
    if !f.is_finite() {
        return Err(Error::Numerical("logistic objective diverged".into()));
    }
    LogisticModel::new(w, c)
}

/// `exp(-w.[x;1])`, clamped to `[1/BETA_CAP, BETA_CAP]`.
pub fn beta(model: &LogisticModel, x: &[f64]) -> Result<f64> {
    let s = model.score(x)?;
    Ok((-s).exp().clamp(1.0 / BETA_CAP, BETA_CAP))
}

/// Min-max normalization to `[0, 1]`.
///
/// A batch whose spread is zero (up to rounding, relative 1e-12) carries no
/// signal and maps to all ones.
pub fn normalize_beta(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(Error::Precondition(
            "cannot normalize an empty batch".into(),
        ));
    }
    if raw.iter().any(|b| !b.is_finite()) {
        return Err(Error::Numerical("non-finite importance ratio".into()));
    }
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span <= 1e-12 * hi.abs().max(lo.abs()) {
        return Ok(vec![1.0; raw.len()]);
    }
    Ok(raw
        .iter()
        .map(|b| ((b - lo) / span).clamp(0.0, 1.0))
        .collect())
}

/// Fraction of both labelled sets the model classifies correctly.
pub fn accuracy(model: &LogisticModel, pos: &[Vec<f64>], neg: &[Vec<f64>]) -> Result<f64> {
    let mut correct = 0usize;
    for (x, z) in labelled(pos, neg) {
        if f64::from(model.predict(x)?) == z {
            correct += 1;
        }
    }
    Ok(correct as f64 / (pos.len() + neg.len()) as f64)
}

/// Classifier diagnostics for one mini-batch.
#[derive(Clone, Debug, PartialEq)]
pub struct PropensityReport {
    pub model: LogisticModel,
    /// `beta` at each dataset control, in batch order.
    pub beta_raw: Vec<f64>,
    pub beta_tilde: Vec<f64>,
    pub accuracy: f64,
}

impl PropensityReport {
    pub fn mean_beta_tilde(&self) -> f64 {
        self.beta_tilde.iter().sum::<f64>() / self.beta_tilde.len() as f64
    }
}

/// Discriminates stored controls (`z = +1`) from the policy's controls at the
/// same states (`z = -1`) and scores every stored control.
pub fn report(
    dataset_controls: &[Vec<f64>],
    policy_controls: &[Vec<f64>],
    c: f64,
    iters: usize,
) -> Result<PropensityReport> {
    check_dim(
        "propensity::report batch",
        dataset_controls.len(),
        policy_controls.len(),
    )?;
    let model = fit_logistic(dataset_controls, policy_controls, c, iters)?;
    let beta_raw = dataset_controls
        .iter()
        .map(|u| beta(&model, u))
        .collect::<Result<Vec<_>>>()?;
    let beta_tilde = normalize_beta(&beta_raw)?;
    let accuracy = accuracy(&model, dataset_controls, policy_controls)?;
    Ok(PropensityReport {
        model,
        beta_raw,
        beta_tilde,
        accuracy,
    })
}

/// `sum_i weights_i * values_i * probs_i`: an expectation under `probs`
/// reweighted by per-atom importance ratios.
pub fn weighted_expectation(probs: &[f64], weights: &[f64], values: &[f64]) -> Result<f64> {
    check_dim("weighted_expectation weights", probs.len(), weights.len())?;
    check_dim("weighted_expectation values", probs.len(), values.len())?;
    Ok(probs
        .iter()
        .zip(weights)
        .zip(values)
        .map(|((p, w), v)| p * w * v)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn identical_sets_give_zero_weights() {
        let s = pts(&[-1.3, 0.2, 0.7, 2.5, -0.1]);
        let m = fit_logistic(&s, &s, 1e-3, 100).unwrap();
        assert!(m.norm() < 1e-3, "|w| = {}", m.norm());
        assert_eq!(accuracy(&m, &s, &s).unwrap(), 0.5);
    }

    #[test]
    fn separable_sign() {
        let m = fit_logistic(&pts(&[2.0, 3.0]), &pts(&[-2.0, -3.0]), 0.1, 100).unwrap();
        assert!(m.weights[0] > 0.0);
        assert_eq!(
            accuracy(&m, &pts(&[2.0, 3.0]), &pts(&[-2.0, -3.0])).unwrap(),
            1.0
        );
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(
            fit_logistic(&[], &pts(&[1.0]), 0.1, 10),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            fit_logistic(&[vec![1.0, 2.0]], &pts(&[1.0]), 0.1, 10),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn beta_closed_forms() {
        let zero = LogisticModel::new(vec![0.0, 0.0], 0.0).unwrap();
        for x in [-3.0, 0.0, 17.0] {
            assert_eq!(beta(&zero, &[x]).unwrap(), 1.0);
        }
        let unit = LogisticModel::new(vec![1.0, 0.0], 0.0).unwrap();
        assert_eq!(beta(&unit, &[0.0]).unwrap(), 1.0);
        assert!((beta(&unit, &[2f64.ln()]).unwrap() - 0.5).abs() < 1e-15);
        let flipped = LogisticModel::new(vec![-1.0, 0.0], 0.0).unwrap();
        for x in [-0.7, 0.3, 1.9] {
            let prod = beta(&unit, &[x]).unwrap() * beta(&flipped, &[x]).unwrap();
            assert!((prod - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn beta_is_clamped() {
        let steep = LogisticModel::new(vec![1e4, 0.0], 0.0).unwrap();
        assert_eq!(beta(&steep, &[-1.0]).unwrap(), BETA_CAP);
        assert_eq!(beta(&steep, &[1.0]).unwrap(), 1.0 / BETA_CAP);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(
            normalize_beta(&[2.0, 4.0, 6.0]).unwrap(),
            vec![0.0, 0.5, 1.0]
        );
        assert_eq!(
            normalize_beta(&[5.0, 5.0, 5.0]).unwrap(),
            vec![1.0, 1.0, 1.0]
        );
        assert!(matches!(normalize_beta(&[]), Err(Error::Precondition(_))));
    }

    #[test]
    fn identical_controls_give_degenerate_report() {
        let u = pts(&[-0.5, 0.1, 0.9, 0.3]);
        let r = report(&u, &u, DEFAULT_C, DEFAULT_ITERS).unwrap();
        assert_eq!(r.beta_tilde, vec![1.0; 4]);
        assert!((r.accuracy - 0.5).abs() < 1e-12);
    }

    #[test]
    fn separated_controls() {
        let data = pts(&[-1.0, -1.0, -1.0, -1.0]);
        let policy = pts(&[1.0, 1.0, 1.0, 1.0]);
        let r = report(&data, &policy, DEFAULT_C, DEFAULT_ITERS).unwrap();
        assert_eq!(r.accuracy, 1.0);
        // Stored controls are unlikely under the policy.
        assert!(r.beta_raw.iter().all(|&b| b < 1.0));
        assert!(report(&data, &policy[..3], DEFAULT_C, DEFAULT_ITERS).is_err());
    }
}
