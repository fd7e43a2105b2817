use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::{Error, Result};

/// `K(u) = exp(-|u|^2 / 2) / sqrt(2 pi)`.
///
/// The normalisation is the one-dimensional one, matching the
/// `log(sqrt(2 pi) h)` term of the closed-form bound.
pub fn gaussian_kernel(u: Vec2) -> f64 {
    (-0.5 * u.norm_squared()).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PklEstimate {
    /// `-sum_t log((1/(n h)) sum_y K((z_t - g_t(y)) / h))`.
    pub kde_estimate: f64,
    /// `(1/n) sum_t sum_y (|z_t - g_t(y)|^2 / (2 h^2) + log(sqrt(2 pi) h))`.
    pub jensen_bound: f64,
    pub samples: usize,
    pub bandwidth: f64,
}

/// Both planner-divergence quantities from a reference plan `z` and `n`
/// resampled plans, each a sequence of the same length as `z`.
pub fn pkl_from_samples(reference: &[Vec2], samples: &[Vec<Vec2>], h: f64) -> Result<PklEstimate> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidConfig("bandwidth must be positive".into()));
    }
    if samples.len() < 2 {
        return Err(Error::InvalidConfig("need at least two samples".into()));
    }
    for s in samples {
        if s.len() != reference.len() {
            return Err(Error::DimensionMismatch {
                expected: reference.len(),
                actual: s.len(),
            });
        }
    }
    let n = samples.len() as f64;
    let log_norm = (2.0 * std::f64::consts::PI).sqrt().ln() + h.ln();
    let mut kde = 0.0;
    let mut jensen = 0.0;
    let mut exps = vec![0.0; samples.len()];
    for (t, z) in reference.iter().enumerate() {
        for (k, s) in samples.iter().enumerate() {
            let q = (*z - s[t]).norm_squared() / (2.0 * h * h);
            exps[k] = -q;
            jensen += q + log_norm;
        }
        // log-sum-exp keeps far-off samples from underflowing to log(0).
        let m = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + exps.iter().map(|e| (e - m).exp()).sum::<f64>().ln();
        kde -= lse - n.ln() - log_norm;
    }
    Ok(PklEstimate {
        kde_estimate: kde,
        jensen_bound: jensen / n,
        samples: samples.len(),
        bandwidth: h,
    })
}

/// Draws `n` replans from `replan` and evaluates them against `reference`.
pub fn pkl_bound<R, F>(reference: &[Vec2], n: usize, h: f64, rng: &mut R, mut replan: F) -> Result<PklEstimate>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> Vec<Vec2>,
{
    let samples: Vec<Vec<Vec2>> = (0..n).map(|_| replan(rng)).collect();
    pkl_from_samples(reference, &samples, h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_replans_cost_the_kernel_peak() {
        let z: Vec<Vec2> = (0..7).map(|k| Vec2::new(k as f64, 0.5)).collect();
        let h = 0.5;
        let e = pkl_from_samples(&z, &[z.clone(), z.clone(), z.clone()], h).unwrap();
        let expected = -(z.len() as f64) * (gaussian_kernel(Vec2::ZERO) / h).ln();
        assert!((e.kde_estimate - expected).abs() < 1e-12);
        assert!((e.jensen_bound - expected).abs() < 1e-12);
    }

    #[test]
    fn two_samples_by_hand() {
        let h = 0.7;
        let d = 1.3;
        let z = [Vec2::ZERO];
        let s = [vec![Vec2::ZERO], vec![Vec2::new(d, 0.0)]];
        let e = pkl_from_samples(&z, &s, h).unwrap();
        let c = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * h);
        let kde = -(0.5 * c * (1.0 + (-d * d / (2.0 * h * h)).exp())).ln();
        let jensen = 0.5 * (d * d / (2.0 * h * h)) + (1.0 / c).ln();
        assert!((e.kde_estimate - kde).abs() < 1e-12);
        assert!((e.jensen_bound - jensen).abs() < 1e-12);
        assert!(e.kde_estimate <= e.jensen_bound);
    }

    #[test]
    fn rejects_bad_arguments() {
        let z = [Vec2::ZERO];
        assert!(pkl_from_samples(&z, &[vec![Vec2::ZERO], vec![Vec2::ZERO]], 0.0).is_err());
        assert!(pkl_from_samples(&z, &[vec![Vec2::ZERO]], 0.5).is_err());
        assert!(pkl_from_samples(&z, &[vec![Vec2::ZERO], vec![]], 0.5).is_err());
    }
}
