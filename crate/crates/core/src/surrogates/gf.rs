//! Gaussian fuzzer: always detects, and perturbs exact positions with
//! Gaussian noise and exact velocities with Student-t noise, both with
//! fixed parameters fitted by maximum likelihood.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use super::standardize::STD_FLOOR;
use super::TrainingTuple;
use crate::detector::Detection;
use crate::geometry::Vec2;
use crate::scene::SalientVector;
use crate::{Error, Result};

/// Degrees of freedom of the velocity noise. Not fitted.
pub const STUDENT_T_DOF: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub std: f64,
}

impl Gaussian {
    /// Maximum-likelihood fit: sample mean and population standard deviation.
    pub fn fit(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt().max(STD_FLOOR),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocationScaleT {
    pub location: f64,
    pub scale: f64,
    pub dof: f64,
}

impl LocationScaleT {
    /// Moment-matched starting point: the t with the sample mean and variance.
    pub fn moment_init(xs: &[f64], dof: f64) -> Self {
        let g = Gaussian::fit(xs);
        Self {
            location: g.mean,
            scale: (g.std * ((dof - 2.0) / dof).sqrt()).max(STD_FLOOR),
            dof,
        }
    }

    /// Location/scale maximum likelihood at fixed `dof` by the EM fixed point.
    pub fn fit(xs: &[f64], dof: f64) -> Self {
        let mut t = Self::moment_init(xs, dof);
        let n = xs.len() as f64;
        for _ in 0..500 {
            let var = t.scale * t.scale;
            let w: Vec<f64> = xs
                .iter()
                .map(|x| (dof + 1.0) / (dof + (x - t.location).powi(2) / var))
                .collect();
            let sw: f64 = w.iter().sum();
            let location = w.iter().zip(xs).map(|(w, x)| w * x).sum::<f64>() / sw;
            let var = w
                .iter()
                .zip(xs)
                .map(|(w, x)| w * (x - location).powi(2))
                .sum::<f64>()
                / n;
            let next = Self {
                location,
                scale: var.sqrt().max(STD_FLOOR),
                dof,
            };
            let done = (next.location - t.location).abs() < 1e-13 * (1.0 + t.location.abs())
                && (next.scale - t.scale).abs() < 1e-13 * t.scale;
            t = next;
            if done {
                break;
            }
        }
        t
    }

    /// Negative log-likelihood of the sample.
    pub fn nll(&self, xs: &[f64]) -> f64 {
        let v = self.dof;
        let norm = ln_gamma((v + 1.0) / 2.0)
            - ln_gamma(v / 2.0)
            - 0.5 * (v * std::f64::consts::PI).ln()
            - self.scale.ln();
        -xs.iter()
            .map(|x| {
                let z = (x - self.location) / self.scale;
                norm - (v + 1.0) / 2.0 * (1.0 + z * z / v).ln()
            })
            .sum::<f64>()
    }
}

// Lanczos approximation (g = 7, n = 9), accurate to ~1e-15 for x > 0.
fn ln_gamma(x: f64) -> f64 {
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GfModel {
    pub position: [Gaussian; 2],
    pub velocity: [LocationScaleT; 2],
}

/// Fits the fuzzer from detected training rows.
///
/// Velocity noise is fitted on rows that carry a velocity error; with fewer
/// than two such rows it falls back to a zero-width distribution.
pub fn fit_gf(data: &[TrainingTuple]) -> Result<GfModel> {
    let pos: Vec<Vec2> = data.iter().filter_map(|t| t.position_error).collect();
    if pos.len() < 2 {
        return Err(Error::NotEnoughDetections {
            needed: 2,
            got: pos.len(),
        });
    }
    let axis = |v: &[Vec2], k: usize| -> Vec<f64> { v.iter().map(|p| if k == 0 { p.x } else { p.y }).collect() };
    let position = [Gaussian::fit(&axis(&pos, 0)), Gaussian::fit(&axis(&pos, 1))];

    let vel: Vec<Vec2> = data
        .iter()
        .filter(|t| t.detected)
        .filter_map(|t| t.velocity_error)
        .collect();
    let velocity = if vel.len() >= 2 {
        [
            LocationScaleT::fit(&axis(&vel, 0), STUDENT_T_DOF),
            LocationScaleT::fit(&axis(&vel, 1), STUDENT_T_DOF),
        ]
    } else {
        let zero = LocationScaleT {
            location: 0.0,
            scale: STD_FLOOR,
            dof: STUDENT_T_DOF,
        };
        [zero, zero]
    };
    Ok(GfModel { position, velocity })
}

impl GfModel {
    pub fn sample<R: Rng + ?Sized>(&self, s: &SalientVector, rng: &mut R) -> Detection {
        let nx: f64 = StandardNormal.sample(rng);
        let ny: f64 = StandardNormal.sample(rng);
        let t = |p: &LocationScaleT, rng: &mut R| -> f64 {
            let draw: f64 = StudentT::new(p.dof).expect("dof is positive").sample(rng);
            p.location + p.scale * draw
        };
        let tvx = t(&self.velocity[0], rng);
        let tvy = t(&self.velocity[1], rng);
        let [gx, gy] = self.position;
        Detection {
            detected: true,
            position: s.rel_position + Vec2::new(gx.mean + gx.std * nx, gy.mean + gy.std * ny),
            velocity: Some(s.velocity() + Vec2::new(tvx, tvy)),
            ..Detection::missed(s)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_errors_floor_the_std() {
        let g = Gaussian::fit(&[0.25; 10]);
        assert_eq!(g.mean, 0.25);
        assert_eq!(g.std, STD_FLOOR);
    }

    #[test]
    fn ln_gamma_reference_values() {
        assert!(ln_gamma(1.0).abs() < 1e-13);
        assert!((ln_gamma(0.5) - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-13);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn student_t_fit_improves_on_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = StudentT::new(3.0).unwrap();
        let xs: Vec<f64> = (0..2000).map(|_| 0.3 + 0.7 * t.sample(&mut rng)).collect();
        let init = LocationScaleT::moment_init(&xs, 3.0);
        let fit = LocationScaleT::fit(&xs, 3.0);
        assert!(fit.nll(&xs) <= init.nll(&xs));
        assert!((fit.location - 0.3).abs() < 0.1);
        assert!((fit.scale - 0.7).abs() < 0.1);
    }
}
