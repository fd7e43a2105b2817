//! Orchestration: data collection, training, evaluation, behaviour runs,
//! comparison and reporting, plus their on-disk artifacts.
//!
//! Output layout (all paths relative to the output directory):
//!
//! ```text
//! train.jsonl, test.jsonl           collected tuples
//! <kind>.model.json                 trained surrogates
//! eval_<kind>.json                  model-level metrics
//! runs/<variant>/seed_<n>/trace.jsonl
//! runs/<variant>/seed_<n>/timing.json
//! compare.json, report.csv, report.md, collision_cdf.csv
//! manifest.json                     every artifact with config hash and seed
//! ```

mod config;
mod pipeline;
mod records;
mod report;
mod sim;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::surrogates::{model_to_string, parse_model, SurrogateKind, SurrogateModel};
use crate::{Error, Result};

pub use config::{
    derive_seed, parse_config, CollectConfig, CompareConfig, Decision, EvalConfig, HarnessConfig,
    PlannerConfig, PlannerKind, RunConfig, TrainConfig,
};
pub use pipeline::{
    collect, compare, eval_model, frame_tuples, planner_kl, run_behaviour, train, BehaviourRun,
    BrakingRow, CollisionRow, CompareReport, Dataset, DistanceBin, EvalReport, PklRow, TimingRow,
    TrainSummary, VariantRuns,
};
pub use records::{
    parse_dataset_record, parse_trace_record, read_dataset, read_json, read_trace,
    trace_from_records, write_json, write_jsonl, DatasetRecord, Manifest, ManifestEntry, Target,
    TraceRecord, DATASET_VERSION, MANIFEST_FILE, TRACE_VERSION,
};
pub use report::{collision_cdf_csv, markdown, metrics_csv};
pub use sim::{median, simulate, FrameView, Perception, RunOutput, TimingRecord, Variant};

pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";

fn entry(kind: &str, cfg: &HarnessConfig, seed: u64, details: BTreeMap<String, String>) -> ManifestEntry {
    ManifestEntry {
        kind: kind.to_string(),
        config_hash: cfg.hash(),
        seed,
        details,
    }
}

fn join_ids<T: ToString>(ids: &[T]) -> String {
    ids.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Collects and writes both splits into `out`.
pub fn collect_to_dir(cfg: &HarnessConfig, seed: u64, out: &Path) -> Result<Dataset> {
    let data = collect(cfg, seed)?;
    for (file, rows, ids) in [
        (TRAIN_FILE, &data.train, &cfg.collect.train_scenarios),
        (TEST_FILE, &data.test, &cfg.collect.test_scenarios),
    ] {
        write_jsonl(&out.join(file), rows)?;
        let details = BTreeMap::from([
            ("scenarios".to_string(), join_ids(ids)),
            ("rows".to_string(), rows.len().to_string()),
        ]);
        Manifest::record(out, file, entry("dataset", cfg, seed, details))?;
    }
    Ok(data)
}

/// Path relative to the manifest directory, or the file name.
fn manifest_key(dir: &Path, path: &Path) -> String {
    path.strip_prefix(dir)
        .unwrap_or_else(|_| Path::new(path.file_name().unwrap_or(path.as_os_str())))
        .to_string_lossy()
        .into_owned()
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Trains on a dataset file and writes the model next to its manifest.
pub fn train_to_file(
    cfg: &HarnessConfig,
    kind: SurrogateKind,
    dataset: &Path,
    seed: u64,
    out: &Path,
) -> Result<TrainSummary> {
    let records = read_dataset(dataset)?;
    let (model, summary) = train(cfg, kind, &records, seed)?;
    let dir = parent_dir(out);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    fs::write(out, model_to_string(&model)).map_err(|e| Error::io(out, e))?;
    let mut details = BTreeMap::from([
        ("dataset".to_string(), dataset.display().to_string()),
        ("train_rows".to_string(), summary.train_rows.to_string()),
        ("validation_rows".to_string(), summary.validation_rows.to_string()),
    ]);
    for (k, v) in [
        ("final_train_loss", summary.final_train_loss),
        ("best_validation_loss", summary.best_validation_loss),
    ] {
        if let Some(v) = v {
            details.insert(k.to_string(), v.to_string());
        }
    }
    Manifest::record(&dir, &manifest_key(&dir, out), entry("model", cfg, seed, details))?;
    Ok(summary)
}

pub fn load_model(path: &Path) -> Result<SurrogateModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text)
}

pub fn eval_to_file(cfg: &HarnessConfig, model: &Path, dataset: &Path, seed: u64, out: &Path) -> Result<EvalReport> {
    let model = load_model(model)?;
    let records = read_dataset(dataset)?;
    let report = eval_model(cfg, &model, &records, seed)?;
    write_json(out, &report)?;
    let dir = parent_dir(out);
    Manifest::record(&dir, &manifest_key(&dir, out), entry("eval", cfg, seed, BTreeMap::new()))?;
    Ok(report)
}

pub fn run_dir(root: &Path, variant: Variant, seed: u64) -> PathBuf {
    root.join("runs").join(variant.to_string()).join(format!("seed_{seed}"))
}

/// Summary written next to each trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub variant: Variant,
    pub seed: u64,
    pub frames: usize,
    pub truncated: bool,
}

/// Runs one variant for every seed and writes per-run directories.
pub fn run_to_dir(
    cfg: &HarnessConfig,
    variant: Variant,
    model: Option<&SurrogateModel>,
    seeds: &[u64],
    out: &Path,
) -> Result<Vec<BehaviourRun>> {
    let runs = run_behaviour(cfg, variant, model, seeds)?;
    for r in &runs {
        let dir = run_dir(out, variant, r.seed);
        write_jsonl(&dir.join("trace.jsonl"), &r.output.records)?;
        write_json(&dir.join("timing.json"), &r.output.timing)?;
        write_json(
            &dir.join("summary.json"),
            &RunSummary {
                variant,
                seed: r.seed,
                frames: r.output.records.len(),
                truncated: r.output.truncated,
            },
        )?;
        let details = BTreeMap::from([
            ("variant".to_string(), variant.to_string()),
            ("truncated".to_string(), r.output.truncated.to_string()),
        ]);
        for (file, kind) in [("trace.jsonl", "trace"), ("timing.json", "timing"), ("summary.json", "run_summary")] {
            Manifest::record(
                out,
                &manifest_key(out, &dir.join(file)),
                entry(kind, cfg, r.seed, details.clone()),
            )?;
        }
    }
    Ok(runs)
}

/// Loads every run of `variant` found under `root`.
pub fn load_variant_runs(root: &Path, variant: Variant) -> Result<VariantRuns> {
    let dir = root.join("runs").join(variant.to_string());
    let mut traces = BTreeMap::new();
    let mut timing = Vec::new();
    let listing = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut seeds = Vec::new();
    for item in listing {
        let item = item.map_err(|e| Error::io(&dir, e))?;
        let name = item.file_name().to_string_lossy().into_owned();
        if let Some(seed) = name.strip_prefix("seed_").and_then(|s| s.parse::<u64>().ok()) {
            seeds.push(seed);
        }
    }
    seeds.sort_unstable();
    for seed in seeds {
        let d = run_dir(root, variant, seed);
        traces.insert(seed, trace_from_records(&read_trace(&d.join("trace.jsonl"))?)?);
        let t = d.join("timing.json");
        if t.exists() {
            timing.push(read_json(&t)?);
        }
    }
    Ok(VariantRuns {
        variant,
        traces,
        timing,
    })
}

/// Compares the variants found under `root/runs`, optionally adding the
/// planner divergence of the given surrogate models, and writes
/// `compare.json`.
pub fn compare_dir(
    cfg: &HarnessConfig,
    root: &Path,
    variants: &[Variant],
    pkl_models: &[SurrogateModel],
) -> Result<CompareReport> {
    let runs = variants
        .iter()
        .map(|&v| load_variant_runs(root, v))
        .collect::<Result<Vec<_>>>()?;
    let mut report = compare(cfg, &runs)?;
    for model in pkl_models {
        for &seed in &cfg.run.seeds {
            report.pkl.push(PklRow {
                variant: model.kind().to_string(),
                seed,
                estimate: planner_kl(cfg, model, seed)?,
            });
        }
    }
    write_json(&root.join("compare.json"), &report)?;
    let seed = cfg.run.seeds.first().copied().unwrap_or(0);
    Manifest::record(root, "compare.json", entry("compare", cfg, seed, BTreeMap::new()))?;
    Ok(report)
}

/// Renders CSV and markdown reports from saved results into `out`.
pub fn report_to_dir(cfg: &HarnessConfig, compare: Option<&Path>, evals: &[PathBuf], out: &Path) -> Result<()> {
    let compare_report: Option<CompareReport> = compare.map(read_json).transpose()?;
    let eval_reports: Vec<EvalReport> = evals.iter().map(|p| read_json(p)).collect::<Result<_>>()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut files = vec![
        ("report.csv", metrics_csv(compare_report.as_ref(), &eval_reports)?),
        ("report.md", markdown(compare_report.as_ref(), &eval_reports)),
    ];
    if let Some(c) = &compare_report {
        files.push(("collision_cdf.csv", collision_cdf_csv(c)?));
    }
    let sources: Vec<String> = compare
        .into_iter()
        .chain(evals.iter().map(PathBuf::as_path))
        .map(|p| p.display().to_string())
        .collect();
    let details = BTreeMap::from([("sources".to_string(), sources.join(","))]);
    let seed = cfg.run.seeds.first().copied().unwrap_or(0);
    for (name, text) in files {
        let p = out.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        Manifest::record(out, name, entry("report", cfg, seed, details.clone()))?;
    }
    Ok(())
}
