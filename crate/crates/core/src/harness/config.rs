use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::association::AssociationConfig;
use crate::detector::DetectorProfile;
use crate::planners::{AccConfig, AccPlanner, BasicAgentConfig, BasicAgentPlanner, Planner};
use crate::raycast::RayFanConfig;
use crate::scene::{ScenarioKind, ScenarioSpec};
use crate::surrogates::{LrHyperParams, NsHyperParams};
use crate::{Error, Result};

/// Everything a harness subcommand needs, read from one TOML file.
///
/// Every section is optional and falls back to its defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub scenario: ScenarioSpec,
    pub detector: DetectorProfile,
    pub raycast: RayFanConfig,
    pub association: AssociationConfig,
    pub planner: PlannerConfig,
    pub collect: CollectConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub run: RunConfig,
    pub compare: CompareConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioSpec::urban(),
            detector: DetectorProfile::default(),
            raycast: RayFanConfig::default(),
            association: AssociationConfig::default(),
            planner: PlannerConfig::default(),
            collect: CollectConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            run: RunConfig::default(),
            compare: CompareConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    Acc,
    BasicAgent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub kind: PlannerKind,
    pub acc: AccConfig,
    pub basic_agent: BasicAgentConfig,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            kind: PlannerKind::BasicAgent,
            acc: AccConfig::default(),
            basic_agent: BasicAgentConfig::default(),
        }
    }
}

impl PlannerConfig {
    pub fn build(&self) -> Planner {
        match self.kind {
            PlannerKind::Acc => Planner::Acc(AccPlanner::new(self.acc)),
            PlannerKind::BasicAgent => Planner::BasicAgent(BasicAgentPlanner::new(self.basic_agent)),
        }
    }
}

/// Data collection: which scenario indices feed which split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectConfig {
    pub train_scenarios: Vec<u32>,
    pub test_scenarios: Vec<u32>,
    pub runs_per_scenario: u32,
    /// Keep every n-th frame.
    pub frame_stride: u32,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self {
            train_scenarios: (0..10).collect(),
            test_scenarios: vec![10],
            runs_per_scenario: 1,
            frame_stride: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub ns: NsHyperParams,
    pub lr: LrHyperParams,
    /// Share of training rows held out for NS checkpoint selection.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            ns: NsHyperParams::default(),
            lr: LrHyperParams::default(),
            validation_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    /// Most probable output of the surrogate.
    Map,
    /// One random draw per row.
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub max_range: f64,
    pub decision: Decision,
    pub bin_width: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            max_range: crate::metrics::DEFAULT_MAX_RANGE,
            decision: Decision::Map,
            bin_width: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    /// Index passed to the scenario generator for behaviour runs.
    pub scenario_index: u32,
    /// Margin around the road network beyond which a run is truncated.
    pub map_margin: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seeds: (0..5).collect(),
            scenario_index: 10,
            map_margin: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    /// Row and column of the table entry every other entry is divided by.
    pub normalize_by: [String; 2],
    pub pkl_samples: usize,
    pub pkl_bandwidth: f64,
    /// Horizon of the constant-control rollout that turns a command into a plan.
    pub pkl_horizon: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            normalize_by: ["gt".into(), "detector".into()],
            pkl_samples: 16,
            pkl_bandwidth: 0.5,
            pkl_horizon: 1.0,
        }
    }
}

impl HarnessConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.detector.validate()?;
        self.raycast.validate()?;
        self.train.ns.validate()?;
        if !(0.0..1.0).contains(&self.association.iou_gate) {
            return Err(Error::InvalidConfig("iou_gate must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.train.validation_fraction) {
            return Err(Error::InvalidConfig("validation_fraction must lie in [0, 1)".into()));
        }
        if self.collect.frame_stride == 0 || self.collect.runs_per_scenario == 0 {
            return Err(Error::InvalidConfig(
                "frame_stride and runs_per_scenario must be at least 1".into(),
            ));
        }
        if !(self.eval.max_range > 0.0 && self.eval.bin_width > 0.0) {
            return Err(Error::InvalidConfig("max_range and bin_width must be positive".into()));
        }
        if self.run.seeds.is_empty() {
            return Err(Error::InvalidConfig("run.seeds must not be empty".into()));
        }
        let c = &self.compare;
        if c.pkl_samples < 2 || !(c.pkl_bandwidth > 0.0) || !(c.pkl_horizon > 0.0) {
            return Err(Error::InvalidConfig(
                "pkl_samples must be at least 2; bandwidth and horizon positive".into(),
            ));
        }
        Ok(())
    }

    /// The scenario generated for `index`. Urban layouts and jittered ACC
    /// parameters differ per index; a fixed ACC layout ignores it.
    pub fn scenario_for(&self, index: u32) -> ScenarioSpec {
        let mut spec = self.scenario.clone();
        let randomized = match spec.kind {
            ScenarioKind::Acc => spec.acc.randomize,
            ScenarioKind::UrbanRoutes => true,
        };
        if randomized {
            spec.seed = derive_seed(self.scenario.seed, "scenario", u64::from(index));
        }
        spec
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex_digest(json.as_bytes())
    }
}

/// Parses and validates a TOML configuration.
pub fn parse_config(text: &str) -> Result<HarnessConfig> {
    let cfg: HarnessConfig = toml::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Independent RNG seed for a named stream. Distinct streams never share
/// draws, so e.g. perception sampling cannot perturb scenario generation.
pub fn derive_seed(base: u64, stream: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update((stream.len() as u64).to_le_bytes());
    h.update(stream.as_bytes());
    h.update(index.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}
