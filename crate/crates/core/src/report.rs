//! CSV and text output for runs, grids and feasibility queries.
//!
//! All files use a header row, `.` as decimal point, no thousands separators
//! and `\n` line endings. Floats are written in Rust's shortest round-trip
//! form, so identical runs produce identical bytes.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use csv::{Terminator, WriterBuilder};

use crate::analyzer::{table1_condition, vn_feasibility, FeasibilityQuery, FeasibilityVerdict, DEFAULT_BATCH_CAP};
use crate::gar::{GarKind, GarSpec};
use crate::privacy::PrivacyBudget;
use crate::simulator::{ExperimentConfig, GridCell, MetricsSeries};
use crate::{Error, Result};

pub const SERIES_HEADER: [&str; 10] = [
    "step",
    "seed",
    "scenario",
    "epsilon",
    "batch",
    "gar",
    "attack",
    "train_loss",
    "accuracy",
    "vn_estimate",
];

pub const SUMMARY_HEADER: [&str; 14] = [
    "cell",
    "file",
    "scenario",
    "epsilon",
    "batch",
    "gar",
    "attack",
    "seeds",
    "status",
    "final_loss_mean",
    "final_loss_std",
    "final_accuracy_mean",
    "final_accuracy_std",
    "error",
];

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    WriterBuilder::new().terminator(Terminator::Any(b'\n')).from_writer(w)
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::State(format!("csv: {other:?}")),
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn epsilon_label(cfg: &ExperimentConfig) -> String {
    cfg.budget.map_or_else(|| "inf".to_string(), |b| num(b.epsilon()))
}

/// Writes the rows of one run: steps `0..=T` (fewer after divergence). The
/// loss column is empty on the final row, which only carries the accuracy of
/// the trained model.
pub fn write_series<W: Write>(out: &mut csv::Writer<W>, cfg: &ExperimentConfig, seed: u64, series: &MetricsSeries) -> Result<()> {
    let scenario = cfg.scenario();
    let eps = epsilon_label(cfg);
    let batch = cfg.batch_size.to_string();
    let seed = seed.to_string();
    let last_step = match series.diverged_at {
        Some(_) => series.train_loss.len().saturating_sub(1),
        None => series.train_loss.len(),
    };
    let mut acc = series.accuracy.iter().peekable();
    for step in 0..=last_step {
        let loss = series.train_loss.get(step).map(|&v| num(v)).unwrap_or_default();
        let accuracy = match acc.peek() {
            Some(&&(s, a)) if s == step => {
                acc.next();
                num(a)
            }
            _ => String::new(),
        };
        let vn = series
            .vn_estimate
            .as_ref()
            .and_then(|v| v.get(step))
            .map(|&v| num(v))
            .unwrap_or_default();
        out.write_record([
            step.to_string().as_str(),
            &seed,
            &scenario,
            &eps,
            &batch,
            cfg.gar.name(),
            cfg.attack.kind.name(),
            &loss,
            &accuracy,
            &vn,
        ])
        .map_err(csv_err)?;
    }
    Ok(())
}

/// Renders one run as CSV text.
pub fn series_csv(cfg: &ExperimentConfig, seed: u64, series: &MetricsSeries) -> Result<String> {
    let mut w = writer(Vec::new());
    w.write_record(SERIES_HEADER).map_err(csv_err)?;
    write_series(&mut w, cfg, seed, series)?;
    let bytes = w.into_inner().map_err(|e| Error::State(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::State(e.to_string()))
}

/// File name of a grid cell.
pub fn cell_file_name(index: usize, cfg: &ExperimentConfig) -> String {
    format!(
        "cell-{index:03}-{}-eps{}-b{}-{}.csv",
        cfg.scenario(),
        epsilon_label(cfg),
        cfg.batch_size,
        cfg.gar.name()
    )
}

/// Writes one CSV per cell holding every successful seed's rows, then
/// `summary.csv`. Returns the paths written, summary last.
pub fn emit_grid(dir: &Path, cells: &[GridCell]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(cells.len() + 1);
    let mut summary = writer(BufWriter::new(File::create(dir.join("summary.csv.partial"))?));
    summary.write_record(SUMMARY_HEADER).map_err(csv_err)?;

    for (i, cell) in cells.iter().enumerate() {
        let name = cell_file_name(i, &cell.config);
        let path = dir.join(&name);
        let mut w = writer(BufWriter::new(File::create(&path)?));
        w.write_record(SERIES_HEADER).map_err(csv_err)?;
        let mut errors = Vec::new();
        let mut diverged = false;
        for run in &cell.runs {
            match &run.outcome {
                Ok(series) => {
                    diverged |= series.diverged();
                    write_series(&mut w, &cell.config, run.seed, series)?;
                }
                Err(e) => errors.push(format!("seed {}: {e}", run.seed)),
            }
        }
        w.flush()?;
        written.push(path);

        let status = if !errors.is_empty() {
            "failed"
        } else if diverged {
            "diverged"
        } else {
            "ok"
        };
        let stat = |pick: fn(&crate::simulator::SeedSummary) -> Option<f64>| {
            cell.summary.as_ref().and_then(pick).map(num).unwrap_or_default()
        };
        let cfg = &cell.config;
        summary
            .write_record([
                i.to_string().as_str(),
                &name,
                &cfg.scenario(),
                &epsilon_label(cfg),
                &cfg.batch_size.to_string(),
                cfg.gar.name(),
                cfg.attack.kind.name(),
                &cell.runs.len().to_string(),
                status,
                &stat(|s| s.loss_mean.last().copied()),
                &stat(|s| s.loss_std.last().copied()),
                &stat(|s| s.accuracy_mean.last().copied()),
                &stat(|s| s.accuracy_std.last().copied()),
                &errors.join("; "),
            ])
            .map_err(csv_err)?;
    }
    summary.flush()?;
    drop(summary);
    let final_path = dir.join("summary.csv");
    fs::rename(dir.join("summary.csv.partial"), &final_path)?;
    written.push(final_path);
    Ok(written)
}

/// One row of a feasibility report.
#[derive(Debug)]
pub struct FeasibilityRow {
    pub spec: GarSpec,
    pub batch_size: u64,
    pub dim: u64,
    pub budget: PrivacyBudget,
    /// Exact verdict and the relaxed necessary condition, or why the rule
    /// does not apply.
    pub outcome: Result<(FeasibilityVerdict, bool)>,
}

/// Evaluates every rule in `kinds` at one query point. Inapplicable rules
/// produce an error row.
pub fn feasibility_rows(kinds: &[GarKind], n: usize, f: usize, b: u64, d: u64, budget: PrivacyBudget) -> Vec<FeasibilityRow> {
    kinds
        .iter()
        .map(|&kind| {
            let spec = GarSpec::new(kind, n, f);
            let q = FeasibilityQuery {
                spec,
                batch_size: b,
                dim: d,
                budget,
            };
            let outcome = vn_feasibility(&q, DEFAULT_BATCH_CAP).and_then(|v| Ok((v, table1_condition(&spec, b, d, &budget)?)));
            FeasibilityRow {
                spec,
                batch_size: b,
                dim: d,
                budget,
                outcome,
            }
        })
        .collect()
}

pub const FEASIBILITY_HEADER: [&str; 15] = [
    "gar",
    "n",
    "f",
    "b",
    "d",
    "epsilon",
    "delta",
    "c_constant",
    "threshold",
    "inverse_kf",
    "vn_can_hold",
    "table1_condition",
    "min_batch",
    "max_byz_fraction",
    "error",
];

pub fn write_feasibility_csv<W: Write>(out: W, rows: &[FeasibilityRow]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(FEASIBILITY_HEADER).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![
            r.spec.kind.name().to_string(),
            r.spec.n.to_string(),
            r.spec.f.to_string(),
            r.batch_size.to_string(),
            r.dim.to_string(),
            num(r.budget.epsilon()),
            num(r.budget.delta()),
        ];
        match &r.outcome {
            Ok((v, t1)) => rec.extend([
                num(v.c_constant),
                num(v.threshold),
                num(v.inverse_kf),
                v.vn_can_hold.to_string(),
                t1.to_string(),
                v.min_batch.map_or_else(|| "none".to_string(), |b| b.to_string()),
                v.max_byz_fraction.map_or_else(|| "none".to_string(), num),
                String::new(),
            ]),
            Err(e) => {
                rec.extend(std::iter::repeat_n(String::new(), 7));
                rec.push(e.to_string());
            }
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Human-readable table of the same rows.
pub fn feasibility_text(rows: &[FeasibilityRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<13} {:>4} {:>4} {:>10} {:>10} {:>9} {:>9} {:>10} {:>10}",
        "gar", "n", "f", "1/k", "threshold", "vn-holds", "table1", "min_batch", "max_f/n"
    );
    for r in rows {
        match &r.outcome {
            Ok((v, t1)) => {
                let _ = writeln!(
                    s,
                    "{:<13} {:>4} {:>4} {:>10.5} {:>10.5} {:>9} {:>9} {:>10} {:>10}",
                    r.spec.kind.name(),
                    r.spec.n,
                    r.spec.f,
                    v.inverse_kf,
                    v.threshold,
                    v.vn_can_hold,
                    t1,
                    v.min_batch.map_or_else(|| "none".to_string(), |b| b.to_string()),
                    v.max_byz_fraction.map_or_else(|| "none".to_string(), |x| format!("{x:.4}")),
                );
            }
            Err(e) => {
                let _ = writeln!(s, "{:<13} {:>4} {:>4} not applicable: {e}", r.spec.kind.name(), r.spec.n, r.spec.f);
            }
        }
    }
    s
}
