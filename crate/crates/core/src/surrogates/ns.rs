//! Neural surrogate: a probabilistic skip-block network predicting the
//! detection probability and Gaussian positional (and optionally velocity)
//! errors of the backbone detector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::mlp::{backward, forward, MlpShape, Mode};
use super::sampler::StratifiedSampler;
use super::standardize::Standardizer;
use super::TrainingTuple;
use crate::detector::{logistic, Detection};
use crate::geometry::Vec2;
use crate::scene::{SalientVector, FEATURE_COUNT};
use crate::{Error, Result};

/// Head layout: logit, mu_x, mu_y, log_sigma_x, log_sigma_y.
pub const POSITION_HEAD: usize = 5;
/// Position head followed by mu_vx, mu_vy, log_sigma_vx, log_sigma_vy.
pub const VELOCITY_HEAD: usize = 9;

const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianHead {
    pub mean: Vec2,
    pub log_sigma: Vec2,
}

impl GaussianHead {
    pub fn sigma(&self) -> Vec2 {
        Vec2::new(self.log_sigma.x.exp(), self.log_sigma.y.exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NsOutput {
    pub logit: f64,
    pub p_det: f64,
    pub position: GaussianHead,
    pub velocity: Option<GaussianHead>,
}

impl NsOutput {
    pub fn from_row(row: &[f64]) -> Self {
        Self {
            logit: row[0],
            p_det: logistic(row[0]),
            position: GaussianHead {
                mean: Vec2::new(row[1], row[2]),
                log_sigma: Vec2::new(row[3], row[4]),
            },
            velocity: (row.len() >= VELOCITY_HEAD).then(|| GaussianHead {
                mean: Vec2::new(row[5], row[6]),
                log_sigma: Vec2::new(row[7], row[8]),
            }),
        }
    }
}

/// Training target for one row: errors are detected minus true, ego frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NsTarget {
    pub detected: bool,
    pub position: Vec2,
    pub velocity: Option<Vec2>,
}

impl From<&TrainingTuple> for NsTarget {
    fn from(t: &TrainingTuple) -> Self {
        Self {
            detected: t.detected,
            position: t.position_error.unwrap_or(Vec2::ZERO),
            velocity: if t.detected { t.velocity_error } else { None },
        }
    }
}

/// `log(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Gaussian negative log-likelihood of `y` and its gradient in `(mu, log_sigma)`.
fn gaussian_nll(y: f64, mu: f64, log_sigma: f64) -> (f64, f64, f64) {
    let inv_var = (-2.0 * log_sigma).exp();
    let r = y - mu;
    let nll = 0.5 * r * r * inv_var + log_sigma + HALF_LOG_TWO_PI;
    (nll, -r * inv_var, 1.0 - r * r * inv_var)
}

/// Mean per-row negative log-likelihood and its gradient with respect to
/// the raw network outputs (row-major, `width` columns per row).
///
/// Each row contributes a Bernoulli term on the logit; detected rows add a
/// per-axis Gaussian term on the position error and, when both the head and
/// the target are present, on the velocity error.
pub fn ns_loss_grad(out: &[f64], width: usize, targets: &[NsTarget]) -> (f64, Vec<f64>) {
    assert!(width == POSITION_HEAD || width == VELOCITY_HEAD);
    assert_eq!(out.len(), width * targets.len());
    let n = targets.len().max(1) as f64;
    let mut grad = vec![0.0; out.len()];
    let mut total = 0.0;
    for (r, t) in targets.iter().enumerate() {
        let o = &out[r * width..(r + 1) * width];
        let g = &mut grad[r * width..(r + 1) * width];
        let z = o[0];
        if t.detected {
            total += softplus(-z);
            g[0] = (logistic(z) - 1.0) / n;
        } else {
            total += softplus(z);
            g[0] = logistic(z) / n;
        }
        if !t.detected {
            continue;
        }
        let mut axis = |base: usize, y: Vec2, g: &mut [f64]| {
            for (k, yk) in [y.x, y.y].into_iter().enumerate() {
                let (nll, dmu, dls) = gaussian_nll(yk, o[base + k], o[base + 2 + k]);
                total += nll;
                g[base + k] = dmu / n;
                g[base + 2 + k] = dls / n;
            }
        };
        axis(1, t.position, g);
        if width == VELOCITY_HEAD {
            if let Some(v) = t.velocity {
                axis(5, v, g);
            }
        }
    }
    (total / n, grad)
}

pub fn ns_loss(out: &[f64], width: usize, targets: &[NsTarget]) -> f64 {
    ns_loss_grad(out, width, targets).0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NsHyperParams {
    pub lr: f64,
    pub iterations: usize,
    pub dropout: f64,
    pub batch_size: usize,
    pub width: usize,
    pub blocks: usize,
    pub distance_bins: usize,
    pub eval_every: usize,
    pub velocity_head: bool,
}

impl Default for NsHyperParams {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            iterations: 20_000,
            dropout: 0.3,
            batch_size: 1024,
            width: 64,
            blocks: 3,
            distance_bins: 10,
            eval_every: 500,
            velocity_head: true,
        }
    }
}

impl NsHyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig("ns lr must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig("dropout must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.width == 0 || self.eval_every == 0 {
            return Err(Error::InvalidConfig(
                "batch_size, width and eval_every must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NsModel {
    pub standardizer: Standardizer,
    pub shape: MlpShape,
    pub dropout: f64,
    pub params: Vec<f64>,
}

/// Summary of a training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub final_train_loss: f64,
    pub best_validation_loss: f64,
    pub best_iteration: usize,
}

impl NsModel {
    pub fn has_velocity_head(&self) -> bool {
        self.shape.output == VELOCITY_HEAD
    }

    /// Deterministic (eval-mode) prediction for one actor.
    pub fn predict(&self, s: &SalientVector) -> NsOutput {
        let x = self.standardizer.apply(&s.features());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = forward(&self.shape, &self.params, &x, self.dropout, Mode::Eval, &mut rng)
            .expect("model shape is consistent by construction");
        NsOutput::from_row(&c.out)
    }

    /// Eval-mode outputs for many rows at once.
    pub fn predict_batch(&self, rows: &[SalientVector]) -> Vec<NsOutput> {
        let x = standardized(&self.standardizer, rows.iter());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = forward(&self.shape, &self.params, &x, self.dropout, Mode::Eval, &mut rng)
            .expect("model shape is consistent by construction");
        c.out.chunks(self.shape.output).map(NsOutput::from_row).collect()
    }

    /// Mean validation loss in eval mode.
    pub fn evaluate(&self, data: &[TrainingTuple]) -> f64 {
        let mut total = 0.0;
        for chunk in data.chunks(4096) {
            let x = standardized(&self.standardizer, chunk.iter().map(|t| &t.salient));
            let targets: Vec<NsTarget> = chunk.iter().map(NsTarget::from).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let c = forward(&self.shape, &self.params, &x, self.dropout, Mode::Eval, &mut rng)
                .expect("model shape is consistent by construction");
            total += ns_loss(&c.out, self.shape.output, &targets) * chunk.len() as f64;
        }
        total / data.len().max(1) as f64
    }

    /// Draws a surrogate detection. Consumes the same number of random draws
    /// whatever the outcome.
    pub fn sample<R: Rng + ?Sized>(&self, s: &SalientVector, rng: &mut R) -> Detection {
        sample_output(&self.predict(s), s, rng)
    }
}

/// Turns a network output into a detection for the actor `s`.
pub fn sample_output<R: Rng + ?Sized>(out: &NsOutput, s: &SalientVector, rng: &mut R) -> Detection {
    let u: f64 = rng.random();
    let n: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
    if u >= out.p_det {
        return Detection::missed(s);
    }
    let ps = out.position.sigma();
    let position = s.rel_position + out.position.mean + Vec2::new(ps.x * n[0], ps.y * n[1]);
    let velocity = match out.velocity {
        Some(v) => {
            let vs = v.sigma();
            s.velocity() + v.mean + Vec2::new(vs.x * n[2], vs.y * n[3])
        }
        None => s.velocity(),
    };
    Detection {
        detected: true,
        position,
        velocity: Some(velocity),
        ..Detection::missed(s)
    }
}

fn standardized<'a>(st: &Standardizer, rows: impl Iterator<Item = &'a SalientVector>) -> Vec<f64> {
    let mut x = Vec::new();
    for s in rows {
        let start = x.len();
        x.resize(start + FEATURE_COUNT, 0.0);
        st.apply_into(&s.features(), &mut x[start..]);
    }
    x
}

/// Fits the feature scaling on the training rows.
pub fn fit_standardizer(train: &[TrainingTuple]) -> Result<Standardizer> {
    let feats: Vec<[f64; FEATURE_COUNT]> = train.iter().map(|t| t.salient.features()).collect();
    Standardizer::fit(feats.iter().map(|f| &f[..]))
}

/// Minibatch Adam on the surrogate likelihood with distance-stratified
/// batches. Returns the parameters with the best validation loss seen at
/// the evaluation checkpoints; `validation` falls back to `train` if empty.
pub fn train_ns<R: Rng + ?Sized>(
    train: &[TrainingTuple],
    validation: &[TrainingTuple],
    hp: &NsHyperParams,
    rng: &mut R,
) -> Result<(NsModel, TrainReport)> {
    hp.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let validation = if validation.is_empty() { train } else { validation };
    let standardizer = fit_standardizer(train)?;
    let shape = MlpShape {
        input: FEATURE_COUNT,
        width: hp.width,
        blocks: hp.blocks,
        output: if hp.velocity_head { VELOCITY_HEAD } else { POSITION_HEAD },
    };
    let mut model = NsModel {
        standardizer,
        shape,
        dropout: hp.dropout,
        params: shape.init(rng),
    };
    let x_all = standardized(&model.standardizer, train.iter().map(|t| &t.salient));
    let targets_all: Vec<NsTarget> = train.iter().map(NsTarget::from).collect();
    let distances: Vec<f64> = train.iter().map(|t| t.salient.distance).collect();
    let sampler = StratifiedSampler::new(&distances, hp.distance_bins)?;

    let adam = AdamConfig::with_lr(hp.lr);
    let mut state = AdamState::new(model.params.len());
    let mut best = (model.evaluate(validation), 0usize, model.params.clone());
    let mut last_loss = f64::NAN;
    let mut x = Vec::with_capacity(hp.batch_size * FEATURE_COUNT);
    let mut targets = Vec::with_capacity(hp.batch_size);

    for it in 1..=hp.iterations {
        x.clear();
        targets.clear();
        for i in sampler.sample(hp.batch_size, rng) {
            x.extend_from_slice(&x_all[i * FEATURE_COUNT..(i + 1) * FEATURE_COUNT]);
            targets.push(targets_all[i]);
        }
        let cache = forward(&shape, &model.params, &x, hp.dropout, Mode::Train, rng)?;
        let (loss, dout) = ns_loss_grad(&cache.out, shape.output, &targets);
        let grad = backward(&shape, &model.params, &cache, &dout);
        adam_step(&mut model.params, &grad, &mut state, &adam);
        last_loss = loss;

        if it % hp.eval_every == 0 || it == hp.iterations {
            let v = model.evaluate(validation);
            if v < best.0 {
                best = (v, it, model.params.clone());
            }
        }
    }
    model.params = best.2;
    Ok((
        model,
        TrainReport {
            final_train_loss: last_loss,
            best_validation_loss: best.0,
            best_iteration: best.1,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn target(detected: bool, p: (f64, f64), v: Option<(f64, f64)>) -> NsTarget {
        NsTarget {
            detected,
            position: Vec2::new(p.0, p.1),
            velocity: v.map(|(x, y)| Vec2::new(x, y)),
        }
    }

    #[test]
    fn missed_row_is_pure_bernoulli() {
        let z: f64 = 0.8;
        let p = logistic(z);
        let out = [z, 5.0, -3.0, 1.0, 2.0];
        let l = ns_loss(&out, POSITION_HEAD, &[target(false, (9.0, 9.0), None)]);
        assert!((l + (1.0 - p).ln()).abs() < 1e-12);
    }

    #[test]
    fn exact_mean_with_unit_sigma_costs_the_constant() {
        let out = [40.0, 0.3, -0.2, 0.0, 0.0];
        let l = ns_loss(&out, POSITION_HEAD, &[target(true, (0.3, -0.2), None)]);
        let bern = softplus(-40.0);
        assert!((l - bern - 2.0 * 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_residual_is_stationary_in_means() {
        let out = [0.0, 0.1, 0.2, -0.5, 0.3, 1.0, -1.0, 0.0, 0.0];
        let (_, g) = ns_loss_grad(&out, VELOCITY_HEAD, &[target(true, (0.1, 0.2), Some((1.0, -1.0)))]);
        for k in [1, 2, 5, 6] {
            assert_eq!(g[k], 0.0);
        }
    }
}
