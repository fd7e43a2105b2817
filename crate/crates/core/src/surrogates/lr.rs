//! Logistic-regression false-negative model trained with the focal loss.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::ns::{fit_standardizer, softplus};
use super::standardize::Standardizer;
use super::TrainingTuple;
use crate::detector::{logistic, Detection};
use crate::scene::{SalientVector, FEATURE_COUNT};
use crate::{Error, Result};

/// `-alpha_t (1 - p_t)^gamma log p_t` for one row with logit `z`, where
/// `p_t` is the probability given to the true class and `alpha_t` is
/// `alpha` for positives and `1 - alpha` for negatives.
pub fn focal_loss(z: f64, y: bool, alpha: f64, gamma: f64) -> f64 {
    let s = if y { 1.0 } else { -1.0 };
    let alpha_t = if y { alpha } else { 1.0 - alpha };
    let log_pt = -softplus(-s * z);
    let one_minus = logistic(-s * z);
    -alpha_t * pow(one_minus, gamma) * log_pt
}

/// Derivative of [`focal_loss`] with respect to the logit.
pub fn focal_loss_grad(z: f64, y: bool, alpha: f64, gamma: f64) -> f64 {
    let s = if y { 1.0 } else { -1.0 };
    let alpha_t = if y { alpha } else { 1.0 - alpha };
    let log_pt = -softplus(-s * z);
    let pt = logistic(s * z);
    let one_minus = logistic(-s * z);
    s * alpha_t * pow(one_minus, gamma) * (gamma * pt * log_pt - one_minus)
}

// `0^0 = 1` so that gamma = 0 reduces cleanly to cross-entropy.
fn pow(base: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else {
        base.powf(e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrHyperParams {
    pub alpha: f64,
    pub gamma: f64,
    pub lr: f64,
    pub iterations: usize,
    pub batch_size: usize,
}

impl Default for LrHyperParams {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            gamma: 2.0,
            lr: 1e-2,
            iterations: 3000,
            batch_size: 2048,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrModel {
    pub standardizer: Standardizer,
    /// Bias first, then one weight per standardized feature.
    pub weights: Vec<f64>,
}

impl LrModel {
    pub fn logit(&self, s: &SalientVector) -> f64 {
        let x = self.standardizer.apply(&s.features());
        logit_of(&self.weights, &x)
    }

    pub fn detection_probability(&self, s: &SalientVector) -> f64 {
        logistic(self.logit(s))
    }

    /// Flips a coin for detection and passes exact coordinates through.
    pub fn sample<R: Rng + ?Sized>(&self, s: &SalientVector, rng: &mut R) -> Detection {
        let u: f64 = rng.random();
        if u < self.detection_probability(s) {
            Detection::exact(s)
        } else {
            Detection::missed(s)
        }
    }
}

fn logit_of(w: &[f64], x: &[f64]) -> f64 {
    w[0] + w[1..].iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
}

/// Mean focal loss over standardized rows and its gradient in the weights.
pub fn focal_objective(w: &[f64], x: &[f64], y: &[bool], alpha: f64, gamma: f64) -> (f64, Vec<f64>) {
    let d = w.len() - 1;
    let n = y.len().max(1) as f64;
    let mut grad = vec![0.0; w.len()];
    let mut total = 0.0;
    for (r, &yr) in y.iter().enumerate() {
        let xr = &x[r * d..(r + 1) * d];
        let z = logit_of(w, xr);
        total += focal_loss(z, yr, alpha, gamma);
        let g = focal_loss_grad(z, yr, alpha, gamma) / n;
        grad[0] += g;
        for j in 0..d {
            grad[j + 1] += g * xr[j];
        }
    }
    (total / n, grad)
}

/// Minibatch Adam on the focal loss. A dataset with a single class still
/// trains, with a warning.
pub fn train_lr_focal<R: Rng + ?Sized>(
    data: &[TrainingTuple],
    hp: &LrHyperParams,
    rng: &mut R,
) -> Result<LrModel> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(0.0..=1.0).contains(&hp.alpha) || hp.gamma < 0.0 || hp.batch_size == 0 {
        return Err(Error::InvalidConfig("invalid focal-loss hyperparameters".into()));
    }
    let positives = data.iter().filter(|t| t.detected).count();
    if positives == 0 || positives == data.len() {
        log::warn!("focal-loss training on a single-class dataset");
    }
    let standardizer = fit_standardizer(data)?;
    let x_all: Vec<f64> = data
        .iter()
        .flat_map(|t| standardizer.apply(&t.salient.features()))
        .collect();
    let mut w = vec![0.0; FEATURE_COUNT + 1];
    let mut state = AdamState::new(w.len());
    let adam = AdamConfig::with_lr(hp.lr);
    let batch = hp.batch_size.min(data.len());
    let mut x = Vec::with_capacity(batch * FEATURE_COUNT);
    let mut y = Vec::with_capacity(batch);
    for _ in 0..hp.iterations {
        x.clear();
        y.clear();
        for _ in 0..batch {
            let i = rng.random_range(0..data.len());
            x.extend_from_slice(&x_all[i * FEATURE_COUNT..(i + 1) * FEATURE_COUNT]);
            y.push(data[i].detected);
        }
        let (_, g) = focal_objective(&w, &x, &y, hp.alpha, hp.gamma);
        adam_step(&mut w, &g, &mut state, &adam);
    }
    Ok(LrModel {
        standardizer,
        weights: w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduces_to_half_cross_entropy() {
        for &z in &[-30.0, -2.0, -0.1, 0.0, 0.7, 4.0, 25.0] {
            for y in [true, false] {
                let bce = if y { softplus(-z) } else { softplus(z) };
                assert!((focal_loss(z, y, 0.5, 0.0) - 0.5 * bce).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn confident_correct_rows_cost_nothing() {
        assert!(focal_loss(800.0, true, 0.6, 2.0) == 0.0);
        assert!(focal_loss(-800.0, false, 0.6, 2.0) == 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let h = 1e-5;
        for &z in &[-3.0, -0.4, 0.0, 0.9, 2.5] {
            for y in [true, false] {
                let fd = (focal_loss(z + h, y, 0.6, 2.0) - focal_loss(z - h, y, 0.6, 2.0)) / (2.0 * h);
                let g = focal_loss_grad(z, y, 0.6, 2.0);
                assert!((fd - g).abs() <= 1e-6 * (1.0 + g.abs()));
            }
        }
    }
}
