use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use caim_core::text::sig12;

use crate::error::{BenchError, Result};
use crate::experiment::{EquivalenceRow, PointSummary, ResultBundle, RunRow};
use crate::svg::{emit_svg, PlotKind};

pub const RUN_COLUMNS: [&str; 17] = [
    "point",
    "sweep_value",
    "machine",
    "instance",
    "restart",
    "instance_seed",
    "init_seed",
    "noise_seed",
    "best_h",
    "h0",
    "hit",
    "r",
    "pHat",
    "tRun",
    "tts",
    "converged",
    "end_time",
];

pub const SUMMARY_COLUMNS: [&str; 16] = [
    "point",
    "sweep_value",
    "machine",
    "instances",
    "restarts",
    "runs",
    "mean_r",
    "max_r",
    "min_best_h",
    "exact_success",
    "best_of_success",
    "hits",
    "pHat_mean",
    "tRun_mean",
    "tts_median",
    "converged_fraction",
];

pub const EQUIVALENCE_COLUMNS: [&str; 8] = [
    "instance",
    "instance_seed",
    "n",
    "gap",
    "mu",
    "min_energy_ground",
    "min_energy_excited",
    "equivalent",
];

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn opt_f(x: Option<f64>) -> String {
    x.map(sig12).unwrap_or_default()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| BenchError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_rows<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv_writer(path)?;
    let csv_err = |e: csv::Error| BenchError::Core(e.into());
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

fn run_record(r: &RunRow) -> Vec<String> {
    vec![
        r.point.to_string(),
        sig12(r.sweep_value),
        r.machine.name().into(),
        r.instance.to_string(),
        r.restart.to_string(),
        r.instance_seed.to_string(),
        r.init_seed.to_string(),
        r.noise_seed.to_string(),
        sig12(r.best_h),
        opt_f(r.h0),
        opt(r.hit),
        sig12(r.r),
        sig12(r.p_hat),
        sig12(r.t_run),
        sig12(r.tts),
        r.converged.to_string(),
        sig12(r.end_time),
    ]
}

fn summary_record(p: &PointSummary) -> Vec<String> {
    vec![
        p.point.to_string(),
        sig12(p.sweep_value),
        p.machine.name().into(),
        p.instances.to_string(),
        p.restarts.to_string(),
        p.runs.to_string(),
        sig12(p.mean_r),
        sig12(p.max_r),
        sig12(p.min_best_h),
        opt_f(p.exact_success),
        opt_f(p.best_of_success),
        opt(p.hits),
        sig12(p.p_hat_mean),
        sig12(p.t_run_mean),
        sig12(p.tts_median),
        sig12(p.converged_fraction),
    ]
}

fn equivalence_record(e: &EquivalenceRow) -> Vec<String> {
    vec![
        e.instance.to_string(),
        e.instance_seed.to_string(),
        e.n.to_string(),
        sig12(e.gap),
        sig12(e.mu),
        sig12(e.min_energy_ground),
        sig12(e.min_energy_excited),
        e.equivalent.to_string(),
    ]
}

pub fn write_runs_csv(runs: &[RunRow], path: &Path) -> Result<()> {
    write_rows(path, &RUN_COLUMNS, runs.iter().map(run_record))
}

pub fn write_summary_csv(points: &[PointSummary], path: &Path) -> Result<()> {
    write_rows(path, &SUMMARY_COLUMNS, points.iter().map(summary_record))
}

pub fn write_equivalence_csv(rows: &[EquivalenceRow], path: &Path) -> Result<()> {
    write_rows(path, &EQUIVALENCE_COLUMNS, rows.iter().map(equivalence_record))
}

fn write_json_value<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| BenchError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| BenchError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| BenchError::io(path, e))
}

pub fn write_json(bundle: &ResultBundle, path: &Path) -> Result<()> {
    write_json_value(bundle, path)
}

pub fn read_json(path: &Path) -> Result<ResultBundle> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| BenchError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_summary_json(points: &[PointSummary], path: &Path) -> Result<()> {
    write_json_value(&points, path)
}

/// Per-series CSVs for recorded runs: `trajectory_<machine>.csv` and `mu_trace.csv`.
fn write_series(bundle: &ResultBundle, dir: &Path, written: &mut Vec<PathBuf>) -> Result<()> {
    for s in &bundle.series {
        let path = dir.join(format!("trajectory_{}.csv", s.machine.name()));
        write_rows(
            &path,
            &["t", "E", "K", "R", "H_decision"],
            s.energy
                .iter()
                .map(|e| vec![sig12(e.t), sig12(e.e), sig12(e.k), sig12(e.r), sig12(e.h_decision)]),
        )?;
        written.push(path);
        if let Some(trace) = &s.mu_trace {
            let path = dir.join("mu_trace.csv");
            let mut header = vec!["k".to_string(), "t_start".to_string()];
            header.extend((0..s.n).map(|i| format!("mu_{i}")));
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            write_rows(
                &path,
                &header,
                trace.iter().map(|m| {
                    let mut row = vec![m.k.to_string(), sig12(m.t_start)];
                    row.extend(m.mu.iter().map(|&x| sig12(x)));
                    row
                }),
            )?;
            written.push(path);
        }
    }
    Ok(())
}

/// Writes every artifact for a bundle into `dir` and returns the paths written.
pub fn emit_all(bundle: &ResultBundle, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };
    write_json(bundle, &put("bundle.json"))?;
    write_runs_csv(&bundle.runs, &put("runs.csv"))?;
    write_summary_csv(&bundle.points, &put("summary.csv"))?;
    write_summary_json(&bundle.points, &put("summary.json"))?;
    if !bundle.equivalence.is_empty() {
        write_equivalence_csv(&bundle.equivalence, &put("equivalence.csv"))?;
    }
    if bundle.series.is_empty() {
        if bundle.points.len() > 2 {
            emit_svg(bundle, PlotKind::SweepCurve, &put("sweep_curve.svg"))?;
        }
    } else {
        emit_svg(bundle, PlotKind::EnergyTrace, &put("energy_trace.svg"))?;
        if bundle.series.iter().any(|s| s.mu_trace.is_some()) {
            emit_svg(bundle, PlotKind::MuTrace, &put("mu_trace.svg"))?;
        }
    }
    write_series(bundle, dir, &mut written)?;
    Ok(written)
}
