//! JSON-lines schemas for datasets and traces, and the artifact manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::metrics::TrajectoryTrace;
use crate::scene::{ActorId, Pose2D, SalientVector};
use crate::surrogates::TrainingTuple;
use crate::{Error, Result};

pub const DATASET_VERSION: u32 = 1;
pub const TRACE_VERSION: u32 = 1;

/// One dataset line: an actor in a frame and the backbone's verdict on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub v: u32,
    pub scenario: u32,
    pub run: u32,
    pub frame: u32,
    pub actor_id: ActorId,
    pub salient: SalientVector,
    pub target: Target,
}

/// Errors are detected minus true, ego frame; null when not applicable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    pub detected: bool,
    pub dx: Option<f64>,
    pub dy: Option<f64>,
    pub dvx: Option<f64>,
    pub dvy: Option<f64>,
}

impl DatasetRecord {
    pub fn new(scenario: u32, run: u32, frame: u32, t: &TrainingTuple) -> Self {
        Self {
            v: DATASET_VERSION,
            scenario,
            run,
            frame,
            actor_id: t.salient.actor_id,
            salient: t.salient.clone(),
            target: Target {
                detected: t.detected,
                dx: t.position_error.map(|e| e.x),
                dy: t.position_error.map(|e| e.y),
                dvx: t.velocity_error.map(|e| e.x),
                dvy: t.velocity_error.map(|e| e.y),
            },
        }
    }

    pub fn tuple(&self) -> TrainingTuple {
        let pair = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(x, y)| Vec2::new(x, y));
        let t = &self.target;
        TrainingTuple {
            salient: self.salient.clone(),
            detected: t.detected,
            position_error: pair(t.dx, t.dy),
            velocity_error: pair(t.dvx, t.dvy),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.v != DATASET_VERSION {
            return Err(Error::UnsupportedVersion {
                what: "dataset",
                found: self.v,
                expected: DATASET_VERSION,
            });
        }
        let t = &self.target;
        if t.dx.is_some() != t.dy.is_some() || t.dvx.is_some() != t.dvy.is_some() {
            return Err(Error::InvalidConfig("error components must come in pairs".into()));
        }
        if !t.detected && (t.dx.is_some() || t.dvx.is_some()) {
            return Err(Error::InvalidConfig("a missed actor cannot carry errors".into()));
        }
        if t.detected && t.dx.is_none() {
            return Err(Error::InvalidConfig("a detected actor needs a position error".into()));
        }
        if self.salient.actor_id != self.actor_id {
            return Err(Error::InvalidConfig("actor_id disagrees with the salient vector".into()));
        }
        Ok(())
    }
}

/// Parses and checks one dataset line.
pub fn parse_dataset_record(line: &str) -> Result<DatasetRecord> {
    let r: DatasetRecord = serde_json::from_str(line)?;
    r.validate()?;
    Ok(r)
}

/// One trace line: the ego at a simulation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub v: u32,
    pub t: f64,
    pub ego_pose: Pose2D,
    /// World-frame velocity.
    pub ego_velocity: Vec2,
    pub ego_speed: f64,
    pub throttle: f64,
    pub brake: f64,
    pub steer: f64,
    /// Actors whose contact with the ego began at this step.
    pub collisions: Vec<ActorId>,
}

pub fn parse_trace_record(line: &str) -> Result<TraceRecord> {
    let r: TraceRecord = serde_json::from_str(line)?;
    if r.v != TRACE_VERSION {
        return Err(Error::UnsupportedVersion {
            what: "trace",
            found: r.v,
            expected: TRACE_VERSION,
        });
    }
    if !r.t.is_finite() || !(0.0..=1.0).contains(&r.brake) {
        return Err(Error::InvalidConfig("trace time must be finite and brake in [0, 1]".into()));
    }
    Ok(r)
}

/// Metric-ready view of a list of trace records.
pub fn trace_from_records(records: &[TraceRecord]) -> Result<TrajectoryTrace> {
    let mut trace = TrajectoryTrace::default();
    for r in records {
        trace.push(r.t, r.ego_pose.position(), r.ego_velocity, r.brake);
        trace.collisions.extend(r.collisions.iter().map(|_| r.t));
    }
    trace.validate()?;
    Ok(trace)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_jsonl<T>(path: &Path, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>> {
    read_jsonl(path, parse_dataset_record)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    read_jsonl(path, parse_trace_record)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub kind: String,
    pub config_hash: String,
    pub seed: u64,
    /// Free-form facts about the artifact, e.g. scenario indices or losses.
    #[serde(default)]
    pub details: BTreeMap<String, String>,
}

/// `manifest.json` in an output directory, keyed by relative artifact path.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifacts: BTreeMap<String, ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Manifest {
    pub fn load_or_default(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if path.exists() {
            read_json(&path)
        } else {
            Ok(Self::default())
        }
    }

    /// Records `path` (relative to `dir`) and rewrites the manifest.
    pub fn record(dir: &Path, path: &str, entry: ManifestEntry) -> Result<()> {
        let mut m = Self::load_or_default(dir)?;
        m.artifacts.insert(path.to_string(), entry);
        write_json(&dir.join(MANIFEST_FILE), &m)
    }
}
