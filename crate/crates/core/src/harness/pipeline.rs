//! In-memory stages of the harness. Nothing here touches the filesystem.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{derive_seed, Decision, HarnessConfig};
use super::records::{trace_from_records, DatasetRecord};
use super::sim::{median, simulate, Perception, RunOutput, TimingRecord, Variant};
use crate::association::{associate_frame, LabelledBox};
use crate::detector::Detection;
use crate::geometry::{OrientedBox, Vec2};
use crate::metrics::{
    classification_metrics, collision_interval_cdf, max_eucl, mba_tmba, mean_eucl,
    normalized_pairwise_table, pkl_bound, sp_mse, ClassificationMetrics, CollisionCdf, FlagPair,
    Mba, PairwiseTable, PklEstimate, PositionPair, TrajectoryTrace,
};
use crate::planners::PlannerInput;
use crate::scene::{step_ego, ControlInput, SalientVector, WorldState};
use crate::surrogates::{
    fit_gf, focal_loss, train_lr_focal, train_ns, SurrogateKind, SurrogateModel, TrainingTuple,
};
use crate::{Error, Result};

/// Collected tuples, split by scenario index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub train: Vec<DatasetRecord>,
    pub test: Vec<DatasetRecord>,
}

fn detector_rng(cfg: &HarnessConfig, stream_seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(stream_seed, "detector", cfg.detector.seed))
}

fn surrogate_rng(stream_seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(stream_seed, "surrogate", 0))
}

/// Runs the detector in closed loop on every configured scenario and turns
/// each sampled frame into one tuple per non-ego actor.
///
/// Runs execute in parallel; each has its own perception stream, so the
/// output does not depend on scheduling.
pub fn collect(cfg: &HarnessConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let c = &cfg.collect;
    let jobs: Vec<(u32, u32, bool)> = c
        .train_scenarios
        .iter()
        .map(|&i| (i, false))
        .chain(c.test_scenarios.iter().map(|&i| (i, true)))
        .flat_map(|(i, test)| (0..c.runs_per_scenario).map(move |r| (i, r, test)))
        .collect();
    let results: Vec<Result<Vec<DatasetRecord>>> = jobs
        .par_iter()
        .map(|&(index, run, _)| collect_run(cfg, seed, index, run))
        .collect();
    let mut out = Dataset::default();
    for ((_, _, test), rows) in jobs.iter().zip(results) {
        let rows = rows?;
        if *test {
            out.test.extend(rows);
        } else {
            out.train.extend(rows);
        }
    }
    Ok(out)
}

fn ego_frame_box(s: &SalientVector) -> LabelledBox {
    LabelledBox {
        bbox: OrientedBox::new(s.rel_position, s.extent.length, s.extent.width, s.rel_yaw),
        class: s.class(),
    }
}

/// Matches one frame's detections to its actors by IoU and builds tuples.
pub fn frame_tuples(
    cfg: &HarnessConfig,
    salients: &[SalientVector],
    detections: &[Detection],
) -> Vec<TrainingTuple> {
    let gt: Vec<LabelledBox> = salients.iter().map(ego_frame_box).collect();
    let detected: Vec<&Detection> = detections.iter().filter(|d| d.detected).collect();
    let boxes: Vec<LabelledBox> = detected
        .iter()
        .map(|d| LabelledBox {
            bbox: d.bbox(),
            class: d.class,
        })
        .collect();
    let assignment = associate_frame(&gt, &boxes, &cfg.association);
    salients
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let det = assignment.det_for(i).map(|j| detected[j]);
            TrainingTuple::from_detection(s.clone(), det)
        })
        .collect()
}

fn collect_run(cfg: &HarnessConfig, seed: u64, index: u32, run: u32) -> Result<Vec<DatasetRecord>> {
    let spec = cfg.scenario_for(index);
    let stream = derive_seed(seed, "collect", (u64::from(index) << 32) | u64::from(run));
    let mut rng = detector_rng(cfg, stream);
    let stride = cfg.collect.frame_stride as usize;
    let mut rows = Vec::new();
    simulate(cfg, &spec, Perception::detector(&cfg.detector), &mut rng, |f| {
        if f.index % stride == 0 {
            let frame = u32::try_from(f.index).expect("frame index fits in u32");
            rows.extend(
                frame_tuples(cfg, f.salients, f.detections)
                    .iter()
                    .map(|t| DatasetRecord::new(index, run, frame, t)),
            );
        }
        Ok(())
    })?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub kind: SurrogateKind,
    pub train_rows: usize,
    pub validation_rows: usize,
    pub final_train_loss: Option<f64>,
    pub best_validation_loss: Option<f64>,
    pub best_iteration: Option<usize>,
}

/// Fits one surrogate kind on the given rows.
pub fn train(
    cfg: &HarnessConfig,
    kind: SurrogateKind,
    records: &[DatasetRecord],
    seed: u64,
) -> Result<(SurrogateModel, TrainSummary)> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let tuples: Vec<TrainingTuple> = records.iter().map(DatasetRecord::tuple).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "train", kind as u64));
    let mut summary = TrainSummary {
        kind,
        train_rows: tuples.len(),
        validation_rows: 0,
        final_train_loss: None,
        best_validation_loss: None,
        best_iteration: None,
    };
    let model = match kind {
        SurrogateKind::Ns => {
            let mut order: Vec<usize> = (0..tuples.len()).collect();
            order.shuffle(&mut rng);
            let n_val = (cfg.train.validation_fraction * tuples.len() as f64).floor() as usize;
            let validation: Vec<TrainingTuple> = order[..n_val].iter().map(|&i| tuples[i].clone()).collect();
            let train_rows: Vec<TrainingTuple> = order[n_val..].iter().map(|&i| tuples[i].clone()).collect();
            let (model, report) = train_ns(&train_rows, &validation, &cfg.train.ns, &mut rng)?;
            summary.train_rows = train_rows.len();
            summary.validation_rows = validation.len();
            summary.final_train_loss = Some(report.final_train_loss);
            summary.best_validation_loss = Some(report.best_validation_loss);
            summary.best_iteration = Some(report.best_iteration);
            SurrogateModel::Ns(model)
        }
        SurrogateKind::Lr => {
            let hp = &cfg.train.lr;
            let model = train_lr_focal(&tuples, hp, &mut rng)?;
            let loss = tuples
                .iter()
                .map(|t| focal_loss(model.logit(&t.salient), t.detected, hp.alpha, hp.gamma))
                .sum::<f64>()
                / tuples.len() as f64;
            summary.final_train_loss = Some(loss);
            SurrogateModel::Lr(model)
        }
        SurrogateKind::Gf => SurrogateModel::Gf(fit_gf(&tuples)?),
        SurrogateKind::Gt => SurrogateModel::Gt,
    };
    Ok((model, summary))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceBin {
    pub lo: f64,
    pub hi: f64,
    pub rows: usize,
    pub detector_recall: f64,
    pub surrogate_recall: f64,
    pub accuracy_vs_detector: f64,
}

/// Model-level metrics of one surrogate on a test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub kind: SurrogateKind,
    pub decision: Decision,
    pub max_range: f64,
    pub rows_in_range: usize,
    /// Surrogate against the actors that exist.
    pub vs_ground_truth: ClassificationMetrics,
    /// Surrogate against the detector's verdicts.
    pub vs_detector: ClassificationMetrics,
    /// Mean squared position error of surrogate detections, m².
    pub sp_mse_surrogate: Option<f64>,
    /// The same for the detector's own detections.
    pub sp_mse_detector: Option<f64>,
    pub bins: Vec<DistanceBin>,
}

/// Per-row random stream, so that adding or dropping a row never shifts
/// another row's draws.
fn row_rng(seed: u64, r: &DatasetRecord) -> ChaCha8Rng {
    let s = derive_seed(seed, "eval/run", (u64::from(r.scenario) << 32) | u64::from(r.run));
    let s = derive_seed(s, "eval/frame", u64::from(r.frame));
    ChaCha8Rng::seed_from_u64(derive_seed(s, "eval/actor", u64::from(r.actor_id)))
}

/// Scores a surrogate in both modes on rows within the configured range.
pub fn eval_model(
    cfg: &HarnessConfig,
    model: &SurrogateModel,
    records: &[DatasetRecord],
    seed: u64,
) -> Result<EvalReport> {
    let e = &cfg.eval;
    let outputs: Vec<Detection> = records
        .iter()
        .map(|r| match e.decision {
            Decision::Map => model.most_likely(&r.salient),
            Decision::Sample => model.sample(&r.salient, &mut row_rng(seed, r)),
        })
        .collect();

    let mut vs_gt = Vec::with_capacity(records.len());
    let mut vs_det = Vec::with_capacity(records.len());
    let mut pos_sur = Vec::new();
    let mut pos_det = Vec::new();
    for (r, out) in records.iter().zip(&outputs) {
        let d = r.salient.distance;
        vs_gt.push(FlagPair {
            predicted: out.detected,
            reference: true,
            distance: d,
        });
        vs_det.push(FlagPair {
            predicted: out.detected,
            reference: r.target.detected,
            distance: d,
        });
        if out.detected {
            pos_sur.push(PositionPair {
                predicted: out.position,
                reference: r.salient.rel_position,
                distance: d,
            });
        }
        if let Some(err) = r.tuple().position_error {
            pos_det.push(PositionPair {
                predicted: r.salient.rel_position + err,
                reference: r.salient.rel_position,
                distance: d,
            });
        }
    }

    let n_bins = (e.max_range / e.bin_width).ceil() as usize;
    let bins = (0..n_bins)
        .map(|b| {
            let lo = b as f64 * e.bin_width;
            let hi = (lo + e.bin_width).min(e.max_range);
            let idx: Vec<usize> = (0..records.len())
                .filter(|&i| (lo..hi).contains(&records[i].salient.distance))
                .collect();
            let n = idx.len();
            let frac = |f: &dyn Fn(usize) -> bool| {
                if n == 0 {
                    0.0
                } else {
                    idx.iter().filter(|&&i| f(i)).count() as f64 / n as f64
                }
            };
            DistanceBin {
                lo,
                hi,
                rows: n,
                detector_recall: frac(&|i| records[i].target.detected),
                surrogate_recall: frac(&|i| outputs[i].detected),
                accuracy_vs_detector: frac(&|i| outputs[i].detected == records[i].target.detected),
            }
        })
        .collect();

    Ok(EvalReport {
        kind: model.kind(),
        decision: e.decision,
        max_range: e.max_range,
        rows_in_range: records.iter().filter(|r| r.salient.distance <= e.max_range).count(),
        vs_ground_truth: classification_metrics(&vs_gt, e.max_range)?,
        vs_detector: classification_metrics(&vs_det, e.max_range)?,
        sp_mse_surrogate: sp_mse(&pos_sur, e.max_range).ok(),
        sp_mse_detector: sp_mse(&pos_det, e.max_range).ok(),
        bins,
    })
}

/// One closed-loop run of a behaviour experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviourRun {
    pub seed: u64,
    pub output: RunOutput,
}

fn perception_rng(cfg: &HarnessConfig, variant: Variant, seed: u64) -> ChaCha8Rng {
    let stream = derive_seed(seed, "run", 0);
    match variant {
        Variant::Detector => detector_rng(cfg, stream),
        Variant::Surrogate(_) => surrogate_rng(stream),
    }
}

fn resolve_model<'a>(variant: Variant, model: Option<&'a SurrogateModel>) -> Result<Option<&'a SurrogateModel>> {
    static GT: SurrogateModel = SurrogateModel::Gt;
    match (variant, model) {
        (Variant::Detector, _) => Ok(None),
        (Variant::Surrogate(SurrogateKind::Gt), None) => Ok(Some(&GT)),
        (Variant::Surrogate(k), Some(m)) if m.kind() == k => Ok(Some(m)),
        (Variant::Surrogate(k), _) => Err(Error::InvalidConfig(format!(
            "variant {k} needs a {k} model"
        ))),
    }
}

/// Closed-loop runs of one perception variant, one per seed, in parallel.
///
/// Every seed replays the same scenario; only the perception stream differs.
pub fn run_behaviour(
    cfg: &HarnessConfig,
    variant: Variant,
    model: Option<&SurrogateModel>,
    seeds: &[u64],
) -> Result<Vec<BehaviourRun>> {
    cfg.validate()?;
    let model = resolve_model(variant, model)?;
    let spec = cfg.scenario_for(cfg.run.scenario_index);
    seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = perception_rng(cfg, variant, seed);
            let perception = match model {
                None => Perception::detector(&cfg.detector),
                Some(m) => Perception::Surrogate(m),
            };
            let output = simulate(cfg, &spec, perception, &mut rng, |_| Ok(()))?;
            Ok(BehaviourRun { seed, output })
        })
        .collect()
}

/// Traces of one variant, keyed by seed.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantRuns {
    pub variant: Variant,
    pub traces: BTreeMap<u64, TrajectoryTrace>,
    pub timing: Vec<TimingRecord>,
}

impl VariantRuns {
    pub fn from_runs(variant: Variant, runs: &[BehaviourRun]) -> Result<Self> {
        let mut traces = BTreeMap::new();
        for r in runs {
            traces.insert(r.seed, trace_from_records(&r.output.records)?);
        }
        Ok(Self {
            variant,
            traces,
            timing: runs.iter().map(|r| r.output.timing.clone()).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrakingRow {
    pub variant: String,
    pub mean_mba: f64,
    pub mean_t_mba: f64,
    pub braked_runs: usize,
    pub per_seed: BTreeMap<u64, Mba>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionRow {
    pub variant: String,
    pub collisions: usize,
    pub cdf: CollisionCdf,
}

/// Detector-time-per-frame and total-time-per-frame analogue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub variant: String,
    pub frames: usize,
    pub median_perception_us: f64,
    pub median_total_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PklRow {
    pub variant: String,
    pub seed: u64,
    pub estimate: PklEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub variants: Vec<String>,
    pub position_mean_eucl: PairwiseTable,
    pub position_max_eucl: PairwiseTable,
    pub velocity_mean_eucl: PairwiseTable,
    pub velocity_max_eucl: PairwiseTable,
    pub braking: Vec<BrakingRow>,
    pub collisions: Vec<CollisionRow>,
    pub timing: Vec<TimingRow>,
    #[serde(default)]
    pub pkl: Vec<PklRow>,
}

/// Seed-averaged value of a trace metric for every pair of variants.
fn pair_values(
    runs: &[VariantRuns],
    metric: impl Fn(&TrajectoryTrace, &TrajectoryTrace) -> Result<f64>,
) -> Result<BTreeMap<(String, String), f64>> {
    let mut out = BTreeMap::new();
    for (i, a) in runs.iter().enumerate() {
        for b in &runs[i + 1..] {
            let mut sum = 0.0;
            let mut n = 0usize;
            for (seed, ta) in &a.traces {
                if let Some(tb) = b.traces.get(seed) {
                    sum += metric(ta, tb)?;
                    n += 1;
                }
            }
            if n == 0 {
                return Err(Error::InvalidConfig(format!(
                    "variants {} and {} share no seeds",
                    a.variant, b.variant
                )));
            }
            out.insert((a.variant.to_string(), b.variant.to_string()), sum / n as f64);
        }
    }
    Ok(out)
}

/// Cross-variant tables, braking, collisions and timing.
pub fn compare(cfg: &HarnessConfig, runs: &[VariantRuns]) -> Result<CompareReport> {
    if runs.len() < 2 {
        return Err(Error::InvalidConfig("compare needs at least two variants".into()));
    }
    let labels: Vec<String> = runs.iter().map(|r| r.variant.to_string()).collect();
    let [row, col] = &cfg.compare.normalize_by;
    for name in [row, col] {
        if !labels.contains(name) {
            return Err(Error::InvalidConfig(format!(
                "normalisation needs the {name} variant"
            )));
        }
    }
    let reference = (row.as_str(), col.as_str());
    let table = |metric: fn(crate::metrics::Series, crate::metrics::Series) -> Result<f64>,
                 velocity: bool|
     -> Result<PairwiseTable> {
        let values = pair_values(runs, |a, b| {
            if velocity {
                metric(a.velocities(), b.velocities())
            } else {
                metric(a.positions(), b.positions())
            }
        })?;
        normalized_pairwise_table(&labels, &values, reference)
    };

    let braking = runs
        .iter()
        .map(|r| {
            let per_seed: BTreeMap<u64, Mba> = r.traces.iter().map(|(s, t)| (*s, mba_tmba(t))).collect();
            let n = per_seed.len().max(1) as f64;
            BrakingRow {
                variant: r.variant.to_string(),
                mean_mba: per_seed.values().map(|m| m.mba).sum::<f64>() / n,
                mean_t_mba: per_seed.values().map(|m| m.t_mba).sum::<f64>() / n,
                braked_runs: per_seed.values().filter(|m| m.braked).count(),
                per_seed,
            }
        })
        .collect();
    let collisions = runs
        .iter()
        .map(|r| {
            let times: Vec<Vec<f64>> = r.traces.values().map(|t| t.collisions.clone()).collect();
            CollisionRow {
                variant: r.variant.to_string(),
                collisions: times.iter().map(Vec::len).sum(),
                cdf: collision_interval_cdf(&times),
            }
        })
        .collect();
    let timing = runs
        .iter()
        .filter(|r| !r.timing.is_empty())
        .map(|r| {
            let p: Vec<f64> = r.timing.iter().flat_map(|t| t.perception_us.iter().copied()).collect();
            let t: Vec<f64> = r.timing.iter().flat_map(|t| t.total_us.iter().copied()).collect();
            TimingRow {
                variant: r.variant.to_string(),
                frames: t.len(),
                median_perception_us: median(&p),
                median_total_us: median(&t),
            }
        })
        .collect();

    Ok(CompareReport {
        variants: labels.clone(),
        position_mean_eucl: table(mean_eucl, false)?,
        position_max_eucl: table(max_eucl, false)?,
        velocity_mean_eucl: table(mean_eucl, true)?,
        velocity_max_eucl: table(max_eucl, true)?,
        braking,
        collisions,
        timing,
        pkl: Vec::new(),
    })
}

/// Ego position after holding `command` for `horizon` seconds from `state`.
fn rollout(state: &WorldState, command: ControlInput, horizon: f64, dt: f64) -> Vec2 {
    let mut ego = state.ego().clone();
    let mut steer = state.ego_steer;
    let steps = (horizon / dt).round().max(1.0) as usize;
    for _ in 0..steps {
        (ego, steer) = step_ego(&ego, steer, command, dt, &state.limits);
    }
    ego.pose.position()
}

/// Planner divergence between the detector and a surrogate for one seed.
///
/// The detector run for `seed` is replayed to get reference states. At each
/// reference state the plan is the ego position reached by holding the
/// planner's command for the configured horizon. Each surrogate sample
/// drives a fresh planner through all reference states, open loop.
pub fn planner_kl(cfg: &HarnessConfig, model: &SurrogateModel, seed: u64) -> Result<PklEstimate> {
    let spec = cfg.scenario_for(cfg.run.scenario_index);
    let mut frames: Vec<(WorldState, Vec<SalientVector>)> = Vec::new();
    let mut reference = Vec::new();
    let c = &cfg.compare;
    let mut rng = perception_rng(cfg, Variant::Detector, seed);
    simulate(cfg, &spec, Perception::detector(&cfg.detector), &mut rng, |f| {
        reference.push(rollout(f.state, f.command, c.pkl_horizon, spec.timestep));
        frames.push((f.state.clone(), f.salients.to_vec()));
        Ok(())
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "pkl", 0));
    pkl_bound(&reference, c.pkl_samples, c.pkl_bandwidth, &mut rng, |rng| {
        let mut planner = cfg.planner.build();
        frames
            .iter()
            .map(|(state, salients)| {
                let dets = model.sample_frame(salients, rng);
                let command = planner.plan(&PlannerInput {
                    ego: state.ego(),
                    detections: &dets,
                    route: &state.route,
                    limits: &state.limits,
                    dt: spec.timestep,
                });
                rollout(state, command, c.pkl_horizon, spec.timestep)
            })
            .collect()
    })
}
