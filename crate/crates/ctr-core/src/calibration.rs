//! Absolute-CTR calibration: sigmoid normalization, equal-width bucket
//! rates, weighted isotonic (PAVA) fitting, slope strictification and
//! interpolation at prediction time.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tape::sigmoid;

/// A fitted calibration curve over `n` equal-width buckets of `[0, 1]`.
/// `rates` are the PAVA-fitted (nondecreasing) bucket rates; the slope
/// `epsilon` is applied on top to make the stored curve strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationModel {
    n: usize,
    epsilon: f64,
    rates: Vec<f64>,
    strict: Vec<f64>,
}

impl CalibrationModel {
    /// Fit on training scores (already sigmoid-normalized) and labels.
    pub fn fit(sigmas: &[f64], labels: &[bool], n: usize, epsilon: f64) -> Result<Self> {
        if sigmas.len() != labels.len() {
            return Err(Error::Contract("scores and labels differ in length".into()));
        }
        if sigmas.is_empty() {
            return Err(Error::Validation("cannot fit calibration on an empty set".into()));
        }
        let (raw, counts) = empirical_bucket_rates(sigmas, labels, n)?;
        let fitted = fit_buckets(&raw, &counts);
        Self::from_parts(n, epsilon, fitted)
    }

    /// Rebuild a model from stored parts (the JSON file layout).
    pub fn from_parts(n: usize, epsilon: f64, rates: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("bucket count must be >= 1".into()));
        }
        if rates.len() != n {
            return Err(Error::Config(format!(
                "{} rates against {n} buckets",
                rates.len()
            )));
        }
        if rates.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config("bucket rates must be nondecreasing".into()));
        }
        let strict = strictify(&rates, epsilon)?;
        Ok(Self { n, epsilon, rates, strict })
    }

    pub fn n_buckets(&self) -> usize {
        self.n
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// The fitted monotone rates (before strictification).
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// Calibrated CTR for one normalized score, by interpolation between the
    /// strictified rates of the enclosing bucket and its right neighbour; the
    /// final bucket uses its own rate. Output is clamped to `[0, 1]`.
    pub fn calibrate_sample(&self, sigma_hat: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&sigma_hat) {
            return Err(Error::Validation(format!(
                "normalized score {sigma_hat} outside [0, 1]"
            )));
        }
        let n = self.n as f64;
        let j = ((sigma_hat * n) as usize).min(self.n - 1);
        let value = if j == self.n - 1 {
            self.strict[j]
        } else {
            let v_lo = j as f64 / n;
            let v_hi = (j + 1) as f64 / n;
            let alpha = (v_hi - sigma_hat) / (v_hi - v_lo);
            alpha * self.strict[j] + (1.0 - alpha) * self.strict[j + 1]
        };
        Ok(value.clamp(0.0, 1.0))
    }

    /// Mean calibrated CTR over a test set of normalized scores.
    pub fn calibrate_dataset(&self, sigmas: &[f64]) -> Result<f64> {
        if sigmas.is_empty() {
            return Err(Error::Validation("cannot calibrate an empty test set".into()));
        }
        let mut acc = 0.0;
        for &s in sigmas {
            acc += self.calibrate_sample(s)?;
        }
        Ok(acc / sigmas.len() as f64)
    }
}

/// Sigmoid normalization of raw scores into `(0, 1)`.
pub fn normalize_scores(scores: &[f64]) -> Vec<f64> {
    scores.iter().map(|&s| sigmoid(s)).collect()
}

/// Per-bucket positive fraction under half-open buckets `[v_j, v_{j+1})`,
/// the final bucket closed at 1. Empty buckets report `None`.
pub fn empirical_bucket_rates(
    sigmas: &[f64],
    labels: &[bool],
    n: usize,
) -> Result<(Vec<Option<f64>>, Vec<usize>)> {
    if n == 0 {
        return Err(Error::Config("bucket count must be >= 1".into()));
    }
    if sigmas.len() != labels.len() {
        return Err(Error::Contract("scores and labels differ in length".into()));
    }
    let mut pos = vec![0usize; n];
    let mut counts = vec![0usize; n];
    for (&s, &l) in sigmas.iter().zip(labels) {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Validation(format!("normalized score {s} outside [0, 1]")));
        }
        let j = ((s * n as f64) as usize).min(n - 1);
        counts[j] += 1;
        if l {
            pos[j] += 1;
        }
    }
    let rates = counts
        .iter()
        .zip(&pos)
        .map(|(&c, &p)| if c == 0 { None } else { Some(p as f64 / c as f64) })
        .collect();
    Ok((rates, counts))
}

/// Weighted isotonic regression: minimizes `sum w_j (p_j - x_j)^2` subject to
/// nondecreasing `x`, by pool-adjacent-violators.
pub fn pava_fit(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len(), "values and weights must align");
    let mut mean: Vec<f64> = Vec::with_capacity(values.len());
    let mut weight: Vec<f64> = Vec::with_capacity(values.len());
    let mut count: Vec<usize> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        mean.push(v);
        weight.push(w);
        count.push(1);
        while mean.len() >= 2 && mean[mean.len() - 2] > mean[mean.len() - 1] {
            let (m2, w2, c2) = (mean.pop().unwrap(), weight.pop().unwrap(), count.pop().unwrap());
            let k = mean.len() - 1;
            let total = weight[k] + w2;
            mean[k] = if total > 0.0 {
                (mean[k] * weight[k] + m2 * w2) / total
            } else {
                (mean[k] + m2) / 2.0
            };
            weight[k] = total;
            count[k] += c2;
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (m, c) in mean.iter().zip(&count) {
        for _ in 0..*c {
            out.push(*m);
        }
    }
    out
}

/// Isotonic fit over possibly-empty buckets: PAVA runs on the nonempty ones
/// (counts as weights); empty buckets inherit the fitted value of the nearest
/// nonempty bucket to their left, and the first fitted value before that.
pub fn fit_buckets(raw: &[Option<f64>], counts: &[usize]) -> Vec<f64> {
    let present: Vec<usize> = (0..raw.len()).filter(|&j| raw[j].is_some()).collect();
    if present.is_empty() {
        return vec![0.0; raw.len()];
    }
    let values: Vec<f64> = present.iter().map(|&j| raw[j].unwrap()).collect();
    let weights: Vec<f64> = present.iter().map(|&j| counts[j] as f64).collect();
    let fitted = pava_fit(&values, &weights);

    let mut out = vec![0.0; raw.len()];
    let mut next = 0;
    let mut current = fitted[0];
    for (j, slot) in out.iter_mut().enumerate() {
        if next < present.len() && present[next] == j {
            current = fitted[next];
            next += 1;
        }
        *slot = current;
    }
    out
}

/// Add the strictification ramp: bucket `j` (0-based) gains
/// `epsilon * j / (n - 1)`, turning a nondecreasing curve strictly
/// increasing. Values are not clamped here; clamping happens at output time.
pub fn strictify(rates: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if epsilon <= 0.0 {
        return Err(Error::Config(format!(
            "strictification slope must be positive, got {epsilon}"
        )));
    }
    if rates.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Contract("strictify expects nondecreasing rates".into()));
    }
    let n = rates.len();
    if n <= 1 {
        return Ok(rates.to_vec());
    }
    Ok(rates
        .iter()
        .enumerate()
        .map(|(j, &r)| r + epsilon * j as f64 / (n - 1) as f64)
        .collect())
}
