//! `pemsim`: collect detector data, train surrogates, evaluate them, run
//! closed-loop behaviour experiments and compare the variants.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use pemsim::harness::{
    collect_to_dir, compare_dir, eval_to_file, load_model, parse_config, report_to_dir,
    run_to_dir, train_to_file, HarnessConfig, Variant,
};
use pemsim::surrogates::SurrogateKind;

#[derive(Debug, Parser)]
#[command(name = "pemsim", version, about = "Surrogate perception error models in a 2D driving simulator")]
struct Cli {
    /// TOML configuration; every section is optional.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Seed for all randomness. For `run` and `compare` it replaces the
    /// configured seed list with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the detector in closed loop and write train.jsonl / test.jsonl.
    Collect {
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a surrogate on a dataset and write the model file.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// One of ns, lr, gf, gt.
        #[arg(long)]
        kind: SurrogateKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a model against ground truth and against the detector.
    EvalModel {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-loop runs of one perception variant, one per seed.
    Run {
        /// One of detector, ns, lr, gf, gt.
        #[arg(long)]
        variant: Variant,
        /// Model file; required for ns, lr and gf.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Comma-separated seeds, overriding the configuration.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pairwise trace metrics, braking, collisions and timing across variants.
    Compare {
        /// Directory holding runs/<variant>/seed_<n>.
        #[arg(long)]
        runs: PathBuf,
        /// Variants to compare; defaults to every variant found.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<Variant>,
        /// Surrogate models whose planner divergence to the detector is estimated.
        #[arg(long)]
        pkl_model: Vec<PathBuf>,
    },
    /// Render CSV and markdown reports.
    Report {
        #[arg(long)]
        compare: Option<PathBuf>,
        #[arg(long)]
        eval: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<HarnessConfig> {
    match path {
        None => Ok(HarnessConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse_config(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut cfg = load_config(cli.config.as_deref())?;
    let seed = cli.seed.unwrap_or(0);
    if let Some(s) = cli.seed {
        cfg.run.seeds = vec![s];
    }

    match cli.command {
        Command::Collect { out } => {
            let data = collect_to_dir(&cfg, seed, &out)?;
            println!("wrote {} train and {} test rows to {}", data.train.len(), data.test.len(), out.display());
        }
        Command::Train { dataset, kind, out } => {
            let s = train_to_file(&cfg, kind, &dataset, seed, &out)?;
            println!("trained {kind} on {} rows -> {}", s.train_rows, out.display());
            if let Some(l) = s.final_train_loss {
                println!("final train loss {l:.6}");
            }
            if let Some(l) = s.best_validation_loss {
                println!("best validation loss {l:.6}");
            }
        }
        Command::EvalModel { model, dataset, out } => {
            let r = eval_to_file(&cfg, &model, &dataset, seed, &out)?;
            for (mode, m) in [("gt", r.vs_ground_truth), ("detector", r.vs_detector)] {
                println!(
                    "vs {mode}: precision {:.4} recall {:.4} accuracy {:.4}",
                    m.precision, m.recall, m.accuracy
                );
            }
        }
        Command::Run { variant, model, seeds, out } => {
            if !seeds.is_empty() {
                cfg.run.seeds = seeds;
            }
            let model = model.as_deref().map(load_model).transpose()?;
            if matches!(variant, Variant::Surrogate(k) if k != SurrogateKind::Gt) && model.is_none() {
                bail!("variant {variant} needs --model");
            }
            let runs = run_to_dir(&cfg, variant, model.as_ref(), &cfg.run.seeds, &out)?;
            for r in &runs {
                println!(
                    "{variant} seed {}: {} frames, perception {:.1} us/frame, total {:.1} us/frame{}",
                    r.seed,
                    r.output.records.len(),
                    r.output.timing.median_perception_us,
                    r.output.timing.median_total_us,
                    if r.output.truncated { " (truncated)" } else { "" }
                );
            }
        }
        Command::Compare { runs, mut variants, pkl_model } => {
            if variants.is_empty() {
                variants = Variant::ALL
                    .into_iter()
                    .filter(|v| runs.join("runs").join(v.to_string()).is_dir())
                    .collect();
            }
            let models = pkl_model.iter().map(|p| load_model(p)).collect::<Result<Vec<_>, _>>()?;
            let r = compare_dir(&cfg, &runs, &variants, &models)?;
            println!("compared {} -> {}", r.variants.join(", "), runs.join("compare.json").display());
        }
        Command::Report { compare, eval, out } => {
            if compare.is_none() && eval.is_empty() {
                bail!("report needs --compare and/or --eval");
            }
            report_to_dir(&cfg, compare.as_deref(), &eval, &out)?;
            println!("wrote report.csv and report.md to {}", out.display());
        }
    }
    Ok(())
}
