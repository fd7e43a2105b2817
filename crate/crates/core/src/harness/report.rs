//! CSV and markdown renderings of evaluation and comparison results.

use std::fmt::Write as _;

use super::pipeline::{CompareReport, EvalReport};
use crate::metrics::PairwiseTable;
use crate::Result;

fn csv_string(rows: Vec<[String; 5]>, header: [&str; 5]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| crate::Error::InvalidConfig(format!("csv: {e}"));
    w.write_record(header).map_err(to_err)?;
    for r in rows {
        w.write_record(&r).map_err(to_err)?;
    }
    let bytes = w.into_inner().map_err(|e| crate::Error::InvalidConfig(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// One row per metric per model pair: `metric,row,col,value,normalized`.
pub fn metrics_csv(compare: Option<&CompareReport>, evals: &[EvalReport]) -> Result<String> {
    let mut rows = Vec::new();
    if let Some(c) = compare {
        for (name, t) in tables(c) {
            for (i, a) in t.labels.iter().enumerate() {
                for (j, b) in t.labels.iter().enumerate().skip(i + 1) {
                    rows.push([name.to_string(), a.clone(), b.clone(), num(t.raw[i][j]), num(t.normalized[i][j])]);
                }
            }
        }
        for b in &c.braking {
            rows.push(["mba".into(), b.variant.clone(), String::new(), num(b.mean_mba), String::new()]);
            rows.push(["t_mba".into(), b.variant.clone(), String::new(), num(b.mean_t_mba), String::new()]);
        }
        for r in &c.collisions {
            rows.push(["collisions".into(), r.variant.clone(), String::new(), r.collisions.to_string(), String::new()]);
        }
        for t in &c.timing {
            rows.push(["perception_us_per_frame".into(), t.variant.clone(), String::new(), num(t.median_perception_us), String::new()]);
            rows.push(["total_us_per_frame".into(), t.variant.clone(), String::new(), num(t.median_total_us), String::new()]);
        }
        for p in &c.pkl {
            let col = format!("seed {}", p.seed);
            rows.push(["pkl_kde".into(), p.variant.clone(), col.clone(), num(p.estimate.kde_estimate), String::new()]);
            rows.push(["pkl_jensen".into(), p.variant.clone(), col, num(p.estimate.jensen_bound), String::new()]);
        }
    }
    for e in evals {
        let k = e.kind.to_string();
        for (mode, m) in [("gt", &e.vs_ground_truth), ("detector", &e.vs_detector)] {
            rows.push(["precision".into(), k.clone(), mode.into(), num(m.precision), String::new()]);
            rows.push(["recall".into(), k.clone(), mode.into(), num(m.recall), String::new()]);
            rows.push(["accuracy".into(), k.clone(), mode.into(), num(m.accuracy), String::new()]);
        }
        if let Some(v) = e.sp_mse_surrogate {
            rows.push(["sp_mse".into(), k.clone(), "gt".into(), num(v), String::new()]);
        }
    }
    csv_string(rows, ["metric", "row", "col", "value", "normalized"])
}

/// `(gap_seconds, cumulative_fraction)` per variant.
pub fn collision_cdf_csv(compare: &CompareReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| crate::Error::InvalidConfig(format!("csv: {e}"));
    w.write_record(["variant", "gap_seconds", "cumulative_fraction"]).map_err(to_err)?;
    for r in &compare.collisions {
        for (g, f) in r.cdf.points() {
            w.write_record([r.variant.clone(), num(g), num(f)]).map_err(to_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| crate::Error::InvalidConfig(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn tables(c: &CompareReport) -> [(&'static str, &PairwiseTable); 4] {
    [
        ("position_mean_eucl", &c.position_mean_eucl),
        ("position_max_eucl", &c.position_max_eucl),
        ("velocity_mean_eucl", &c.velocity_mean_eucl),
        ("velocity_max_eucl", &c.velocity_max_eucl),
    ]
}

fn markdown_table(out: &mut String, t: &PairwiseTable) {
    let _ = write!(out, "| |");
    for l in &t.labels {
        let _ = write!(out, " {l} |");
    }
    let _ = write!(out, "\n|---|");
    for _ in &t.labels {
        let _ = write!(out, "---|");
    }
    out.push('\n');
    for (i, a) in t.labels.iter().enumerate() {
        let _ = write!(out, "| {a} |");
        for j in 0..t.labels.len() {
            if j <= i {
                let _ = write!(out, " |");
            } else {
                let _ = write!(out, " {:.2} ({:.2}) |", t.raw[i][j], t.normalized[i][j]);
            }
        }
        out.push('\n');
    }
    out.push('\n');
}

/// Human-readable summary in the layout of the usual result tables.
pub fn markdown(compare: Option<&CompareReport>, evals: &[EvalReport]) -> String {
    let mut out = String::from("# Surrogate evaluation\n\n");
    if !evals.is_empty() {
        out.push_str("## Model-level metrics (within range)\n\n");
        out.push_str("| model | mode | precision | recall | accuracy | spMSE (m²) |\n|---|---|---|---|---|---|\n");
        for e in evals {
            for (mode, m) in [("vs GT", &e.vs_ground_truth), ("vs detector", &e.vs_detector)] {
                let sp = match (mode, e.sp_mse_surrogate) {
                    ("vs GT", Some(v)) => format!("{v:.3}"),
                    _ => "-".into(),
                };
                let _ = writeln!(
                    out,
                    "| {} | {mode} | {:.3} | {:.3} | {:.3} | {sp} |",
                    e.kind, m.precision, m.recall, m.accuracy
                );
            }
        }
        out.push('\n');
    }
    if let Some(c) = compare {
        out.push_str("## Braking and timing\n\n");
        out.push_str("| variant | MBA | tMBA (s) | braked runs | collisions | perception / frame (µs) | total / frame (µs) |\n|---|---|---|---|---|---|---|\n");
        for b in &c.braking {
            let coll = c.collisions.iter().find(|r| r.variant == b.variant).map_or(0, |r| r.collisions);
            let t = c.timing.iter().find(|t| t.variant == b.variant);
            let fmt_t = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.1}"));
            let _ = writeln!(
                out,
                "| {} | {:.2} | {:.2} | {}/{} | {coll} | {} | {} |",
                b.variant,
                b.mean_mba,
                b.mean_t_mba,
                b.braked_runs,
                b.per_seed.len(),
                fmt_t(t.map(|t| t.median_perception_us)),
                fmt_t(t.map(|t| t.median_total_us)),
            );
        }
        out.push('\n');
        for (name, t) in tables(c) {
            let _ = writeln!(out, "## {name}, raw (normalised)\n");
            markdown_table(&mut out, t);
        }
        if !c.pkl.is_empty() {
            out.push_str("## Planner divergence\n\n| variant | seed | KDE estimate | Jensen bound |\n|---|---|---|---|\n");
            for p in &c.pkl {
                let _ = writeln!(
                    out,
                    "| {} | {} | {:.3} | {:.3} |",
                    p.variant, p.seed, p.estimate.kde_estimate, p.estimate.jensen_bound
                );
            }
            out.push('\n');
        }
    }
    out
}
