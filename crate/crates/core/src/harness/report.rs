use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::experiment::SampleReport;
use crate::error::{Error, Result};

pub const CELLS_FILE: &str = "cells.csv";
pub const GRID_FILE: &str = "grid.csv";
pub const FIGURE_FILE: &str = "figure.csv";
pub const SUMMARY_FILE: &str = "summary.json";

const CELL_COLUMNS: [&str; 12] = [
    "dup_rate",
    "fraction",
    "runs",
    "failures",
    "mean_error",
    "std_error",
    "accuracy",
    "mean_acceptance_rate",
    "mean_trials_per_accept",
    "mean_tv",
    "bound",
    "baseline_error",
];

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
    Ok((path, BufWriter::new(f)))
}

/// Per-cell table. Timings are left out so reruns are byte-identical.
pub fn write_cells_csv<W: Write>(report: &SampleReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CELL_COLUMNS)?;
    for c in &report.cells {
        out.write_record([
            c.dup_rate.to_string(),
            c.fraction.to_string(),
            c.runs.to_string(),
            c.failures.to_string(),
            c.mean_error.to_string(),
            c.std_error.to_string(),
            c.accuracy.to_string(),
            c.mean_acceptance_rate.to_string(),
            c.mean_trials_per_accept.to_string(),
            c.mean_tv.to_string(),
            opt(c.bound),
            opt(c.baseline_error),
        ])?;
    }
    out.flush().map_err(|e| Error::io("cells", e))?;
    Ok(())
}

/// Mean errors as a duplication-rate × fraction table.
pub fn write_grid_csv<W: Write>(report: &SampleReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let sweep = &report.spec.sweep;
    let mut header = vec!["dup_rate".to_string()];
    header.extend(sweep.iter().map(f64::to_string));
    out.write_record(&header)?;
    if !sweep.is_empty() {
        for &rate in &report.spec.dup_rates {
            let mut row = vec![rate.to_string()];
            for &f in sweep {
                row.push(opt(report.cell(rate, f).map(|c| c.mean_error)));
            }
            out.write_record(&row)?;
        }
    }
    out.flush().map_err(|e| Error::io("grid", e))?;
    Ok(())
}

/// Plot data: error and accuracy per fraction with the planner bound and an
/// optional external baseline.
pub fn write_figure_csv<W: Write>(report: &SampleReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "method",
        "dup_rate",
        "fraction",
        "mean_error",
        "std_error",
        "accuracy",
        "bound",
        "baseline_error",
        "baseline_accuracy",
    ])?;
    for c in &report.cells {
        out.write_record([
            report.spec.method.to_string(),
            c.dup_rate.to_string(),
            c.fraction.to_string(),
            c.mean_error.to_string(),
            c.std_error.to_string(),
            c.accuracy.to_string(),
            opt(c.bound),
            opt(c.baseline_error),
            opt(c.baseline_error.map(|b| 1.0 - b)),
        ])?;
    }
    out.flush().map_err(|e| Error::io("figure", e))?;
    Ok(())
}

/// Writes the cell, grid and figure CSVs plus a JSON summary into `dir`.
pub fn emit_report(report: &SampleReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let (p, w) = create(dir, CELLS_FILE)?;
    write_cells_csv(report, w)?;
    written.push(p);

    let (p, w) = create(dir, GRID_FILE)?;
    write_grid_csv(report, w)?;
    written.push(p);

    let (p, w) = create(dir, FIGURE_FILE)?;
    write_figure_csv(report, w)?;
    written.push(p);

    let (p, mut w) = create(dir, SUMMARY_FILE)?;
    serde_json::to_writer_pretty(&mut w, report)?;
    w.flush().map_err(|e| Error::io(&p, e))?;
    written.push(p);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::experiment::{run_experiment, DataSource, ExperimentSpec, Method};

    fn spec(sweep: Vec<f64>, rates: Vec<f64>) -> ExperimentSpec {
        let mut s = ExperimentSpec::new(DataSource::Tpch { n: 1_000 }, Method::Balanced, sweep, rates);
        s.repeats = 2;
        s
    }

    #[test]
    fn empty_sweep_is_header_only() {
        let report = run_experiment(&spec(vec![], vec![0.1])).unwrap();
        let mut buf = Vec::new();
        write_cells_csv(&report, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("dup_rate,fraction,"));
    }

    #[test]
    fn table_shaped_grid() {
        let report = run_experiment(&spec(
            vec![0.01, 0.02, 0.04, 0.06, 0.08, 0.1],
            vec![0.1, 0.15, 0.2, 0.25, 0.3],
        ))
        .unwrap();
        let mut buf = Vec::new();
        write_grid_csv(&report, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.split(',').count() == 7));
    }

    #[test]
    fn byte_identical_reruns() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        let s = spec(vec![0.05, 0.1], vec![0.2]);
        emit_report(&run_experiment(&s).unwrap(), &a).unwrap();
        emit_report(&run_experiment(&s).unwrap(), &b).unwrap();
        for f in [CELLS_FILE, GRID_FILE, FIGURE_FILE] {
            assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
        }
    }

    #[test]
    fn baseline_column_and_accuracy() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("baseline.csv");
        std::fs::write(&base, "dup_rate,fraction,baseline_error\n0.2,0.1,0.05\n").unwrap();
        let mut s = spec(vec![0.1], vec![0.2]);
        s.baseline = Some(base);
        let report = run_experiment(&s).unwrap();
        let mut buf = Vec::new();
        write_figure_csv(&report, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row = text.lines().nth(1).unwrap();
        assert!(row.ends_with(",0.05,0.95"), "{row}");
    }
}
