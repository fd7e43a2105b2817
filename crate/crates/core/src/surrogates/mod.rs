//! Surrogate perception models and their training.
//!
//! Every surrogate maps one actor's salient vector to a detection. None of
//! them can emit a false positive: each output is tied to a real actor.

mod adam;
mod gf;
mod lr;
mod mlp;
mod ns;
mod sampler;
mod standardize;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detector::Detection;
use crate::geometry::Vec2;
use crate::scene::{SalientVector, FEATURE_NAMES};
use crate::{Error, Result};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gf::{fit_gf, Gaussian, GfModel, LocationScaleT, STUDENT_T_DOF};
pub use lr::{focal_loss, focal_loss_grad, focal_objective, train_lr_focal, LrHyperParams, LrModel};
pub use mlp::{backward as mlp_backward, forward as mlp_forward, ForwardCache, MlpShape, Mode};
pub use ns::{
    fit_standardizer, ns_loss, ns_loss_grad, sample_output, train_ns, GaussianHead, NsHyperParams,
    NsModel, NsOutput, NsTarget, TrainReport, POSITION_HEAD, VELOCITY_HEAD,
};
pub use sampler::StratifiedSampler;
pub use standardize::{Standardizer, STD_FLOOR};

/// One supervised example: an actor's salient vector and what the backbone
/// made of it. Errors are detected minus true, in the ego frame, and are
/// present only for detected rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTuple {
    pub salient: SalientVector,
    pub detected: bool,
    pub position_error: Option<Vec2>,
    pub velocity_error: Option<Vec2>,
}

impl TrainingTuple {
    /// Builds the tuple from an actor and the detection matched to it.
    pub fn from_detection(salient: SalientVector, det: Option<&Detection>) -> Self {
        match det.filter(|d| d.detected) {
            Some(d) => Self {
                position_error: Some(d.position - salient.rel_position),
                velocity_error: d.velocity.map(|v| v - salient.velocity()),
                detected: true,
                salient,
            },
            None => Self {
                salient,
                detected: false,
                position_error: None,
                velocity_error: None,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    Ns,
    Lr,
    Gf,
    Gt,
}

impl SurrogateKind {
    pub const ALL: [SurrogateKind; 4] = [Self::Ns, Self::Lr, Self::Gf, Self::Gt];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ns => "ns",
            Self::Lr => "lr",
            Self::Gf => "gf",
            Self::Gt => "gt",
        }
    }
}

impl fmt::Display for SurrogateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SurrogateKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnknownModelKind(s.to_string()))
    }
}

/// A trained (or trivial) surrogate ready for inference.
#[derive(Debug, Clone, PartialEq)]
pub enum SurrogateModel {
    Ns(NsModel),
    Lr(LrModel),
    Gf(GfModel),
    Gt,
}

impl SurrogateModel {
    pub fn kind(&self) -> SurrogateKind {
        match self {
            Self::Ns(_) => SurrogateKind::Ns,
            Self::Lr(_) => SurrogateKind::Lr,
            Self::Gf(_) => SurrogateKind::Gf,
            Self::Gt => SurrogateKind::Gt,
        }
    }

    /// Probability that the surrogate reports the actor as detected.
    pub fn detection_probability(&self, s: &SalientVector) -> f64 {
        match self {
            Self::Ns(m) => m.predict(s).p_det,
            Self::Lr(m) => m.detection_probability(s),
            Self::Gf(_) | Self::Gt => 1.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, s: &SalientVector, rng: &mut R) -> Detection {
        match self {
            Self::Ns(m) => m.sample(s, rng),
            Self::Lr(m) => m.sample(s, rng),
            Self::Gf(m) => m.sample(s, rng),
            Self::Gt => Detection::exact(s),
        }
    }

    /// The most probable output: detected iff `p >= 0.5`, at the mean error.
    pub fn most_likely(&self, s: &SalientVector) -> Detection {
        match self {
            Self::Ns(m) => {
                let out = m.predict(s);
                if out.p_det < 0.5 {
                    return Detection::missed(s);
                }
                Detection {
                    position: s.rel_position + out.position.mean,
                    velocity: Some(s.velocity() + out.velocity.map_or(Vec2::ZERO, |v| v.mean)),
                    ..Detection::exact(s)
                }
            }
            Self::Lr(m) => {
                if m.detection_probability(s) < 0.5 {
                    Detection::missed(s)
                } else {
                    Detection::exact(s)
                }
            }
            Self::Gf(m) => {
                let [gx, gy] = m.position;
                let [tx, ty] = m.velocity;
                Detection {
                    position: s.rel_position + Vec2::new(gx.mean, gy.mean),
                    velocity: Some(s.velocity() + Vec2::new(tx.location, ty.location)),
                    ..Detection::exact(s)
                }
            }
            Self::Gt => Detection::exact(s),
        }
    }

    /// Samples every actor of a frame, batching the network when there is one.
    pub fn sample_frame<R: Rng + ?Sized>(&self, salients: &[SalientVector], rng: &mut R) -> Vec<Detection> {
        match self {
            Self::Ns(m) => m
                .predict_batch(salients)
                .iter()
                .zip(salients)
                .map(|(o, s)| sample_output(o, s, rng))
                .collect(),
            _ => salients.iter().map(|s| self.sample(s, rng)).collect(),
        }
    }
}

/// Passes ground truth through unchanged.
pub fn gt_passthrough(s: &SalientVector) -> Detection {
    Detection::exact(s)
}

pub const MODEL_FORMAT: &str = "pemsim-model";
pub const MODEL_VERSION: u32 = 1;

/// On-disk model: a JSON object with a feature schema and flat arrays.
///
/// `params` holds the network weights for `ns`, the bias-first weights for
/// `lr`, and for `gf` the ten numbers
/// `[pos_x mean, pos_x std, pos_y mean, pos_y std,
///   vel_x loc, vel_x scale, vel_x dof, vel_y loc, vel_y scale, vel_y dof]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub kind: SurrogateKind,
    pub features: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardizer: Option<Standardizer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub architecture: Option<Architecture>,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub shape: MlpShape,
    pub dropout: f64,
}

impl From<&SurrogateModel> for ModelFile {
    fn from(m: &SurrogateModel) -> Self {
        let (standardizer, architecture, params) = match m {
            SurrogateModel::Ns(n) => (
                Some(n.standardizer.clone()),
                Some(Architecture {
                    shape: n.shape,
                    dropout: n.dropout,
                }),
                n.params.clone(),
            ),
            SurrogateModel::Lr(l) => (Some(l.standardizer.clone()), None, l.weights.clone()),
            SurrogateModel::Gf(g) => {
                let mut p = Vec::with_capacity(10);
                for a in &g.position {
                    p.extend([a.mean, a.std]);
                }
                for v in &g.velocity {
                    p.extend([v.location, v.scale, v.dof]);
                }
                (None, None, p)
            }
            SurrogateModel::Gt => (None, None, Vec::new()),
        };
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            kind: m.kind(),
            features: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            standardizer,
            architecture,
            params,
        }
    }
}

fn schema_error(message: impl Into<String>) -> Error {
    Error::Parse {
        line: 1,
        message: message.into(),
    }
}

impl TryFrom<ModelFile> for SurrogateModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.format != MODEL_FORMAT {
            return Err(schema_error(format!("unexpected format `{}`", f.format)));
        }
        if f.version != MODEL_VERSION {
            return Err(Error::UnsupportedVersion {
                what: "model",
                found: f.version,
                expected: MODEL_VERSION,
            });
        }
        if f.features.iter().map(String::as_str).ne(FEATURE_NAMES.iter().copied()) {
            return Err(schema_error("feature schema does not match this build"));
        }
        if f.params.iter().any(|v| !v.is_finite()) {
            return Err(schema_error("non-finite parameter"));
        }
        let standardizer = |f: &ModelFile| -> Result<Standardizer> {
            let s = f
                .standardizer
                .clone()
                .ok_or_else(|| schema_error("missing standardizer"))?;
            if s.mean.len() != FEATURE_NAMES.len()
                || s.std.len() != FEATURE_NAMES.len()
                || s.std.iter().any(|v| !(*v > 0.0 && v.is_finite()))
                || s.mean.iter().any(|v| !v.is_finite())
            {
                return Err(schema_error("malformed standardizer"));
            }
            Ok(s)
        };
        let expect_len = |want: usize, got: usize| -> Result<()> {
            if want == got {
                Ok(())
            } else {
                Err(Error::DimensionMismatch {
                    expected: want,
                    actual: got,
                })
            }
        };
        match f.kind {
            SurrogateKind::Ns => {
                let arch = f
                    .architecture
                    .ok_or_else(|| schema_error("missing architecture"))?;
                let shape = arch.shape;
                if shape.input != FEATURE_NAMES.len()
                    || !(shape.output == POSITION_HEAD || shape.output == VELOCITY_HEAD)
                    || shape.width == 0
                    || shape.width > 4096
                    || shape.blocks > 64
                    || !(0.0..1.0).contains(&arch.dropout)
                {
                    return Err(schema_error("malformed architecture"));
                }
                expect_len(shape.param_count(), f.params.len())?;
                Ok(Self::Ns(NsModel {
                    standardizer: standardizer(&f)?,
                    shape,
                    dropout: arch.dropout,
                    params: f.params,
                }))
            }
            SurrogateKind::Lr => {
                expect_len(FEATURE_NAMES.len() + 1, f.params.len())?;
                Ok(Self::Lr(LrModel {
                    standardizer: standardizer(&f)?,
                    weights: f.params,
                }))
            }
            SurrogateKind::Gf => {
                expect_len(10, f.params.len())?;
                let p = &f.params;
                let g = |i: usize| Gaussian {
                    mean: p[i],
                    std: p[i + 1],
                };
                let t = |i: usize| LocationScaleT {
                    location: p[i],
                    scale: p[i + 1],
                    dof: p[i + 2],
                };
                let m = GfModel {
                    position: [g(0), g(2)],
                    velocity: [t(4), t(7)],
                };
                if m.position.iter().any(|g| g.std <= 0.0)
                    || m.velocity.iter().any(|t| t.scale <= 0.0 || t.dof <= 0.0)
                {
                    return Err(schema_error("gf scales must be positive"));
                }
                Ok(Self::Gf(m))
            }
            SurrogateKind::Gt => {
                expect_len(0, f.params.len())?;
                Ok(Self::Gt)
            }
        }
    }
}

/// Serializes a model to its JSON text form.
pub fn model_to_string(m: &SurrogateModel) -> String {
    serde_json::to_string(&ModelFile::from(m)).expect("model parameters are finite")
}

/// Parses and validates a model file.
pub fn parse_model(text: &str) -> Result<SurrogateModel> {
    let f: ModelFile = serde_json::from_str(text)?;
    SurrogateModel::try_from(f)
}
