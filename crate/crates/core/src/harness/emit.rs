use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{ExperimentConfig, Format};
use super::run::{AggregatePoint, RunStatus, Trace, TraceRecord};
use super::HarnessError;
use crate::theory::fmt_f64;

/// Columns of trace CSVs, in order.
pub const TRACE_COLUMNS: [&str; 9] = [
    "run_id", "method", "seed", "index", "time", "f_gap", "grad_norm", "step_norm", "status",
];

/// Columns of aggregate CSVs, in order.
pub const AGGREGATE_COLUMNS: [&str; 8] = [
    "method",
    "index",
    "time",
    "n_runs",
    "f_gap_mean",
    "f_gap_ci95",
    "grad_norm_mean",
    "grad_norm_ci95",
];

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> HarnessError + '_ {
    move |e| HarnessError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Trace rows, sorted by method, seed and index.
pub fn write_traces_csv<W: Write>(out: W, traces: &[Trace]) -> Result<(), csv::Error> {
    let mut sorted: Vec<&Trace> = traces.iter().collect();
    sorted.sort_by(|a, b| a.method.cmp(&b.method).then(a.seed.cmp(&b.seed)));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_COLUMNS)?;
    for t in sorted {
        for r in &t.records {
            w.write_record([
                t.run_id.clone(),
                t.method.clone(),
                t.seed.to_string(),
                r.index.to_string(),
                opt(r.time),
                opt(r.f_gap),
                fmt_f64(r.grad_norm),
                fmt_f64(r.step_norm),
                t.status.label().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregates_csv<W: Write>(out: W, aggregates: &[AggregatePoint]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AGGREGATE_COLUMNS)?;
    for a in aggregates {
        w.write_record([
            a.method.clone(),
            a.index.to_string(),
            opt(a.time),
            a.n_runs.to_string(),
            opt(a.f_gap_mean),
            opt(a.f_gap_ci95),
            fmt_f64(a.grad_norm_mean),
            fmt_f64(a.grad_norm_ci95),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_opt(s: &str) -> Result<Option<f64>, String> {
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse().map(Some).map_err(|e| format!("{s:?}: {e}"))
    }
}

/// Reads traces back from the CSV written by [`write_traces_csv`].
///
/// The divergence index is not part of the row format; a diverged run comes
/// back as diverged one past its last record.
pub fn read_traces_csv<R: Read>(input: R) -> Result<Vec<Trace>, String> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().collect::<Vec<_>>() != TRACE_COLUMNS {
        return Err(format!("unexpected header {header:?}"));
    }
    let mut traces: Vec<Trace> = Vec::new();
    for row in rd.records() {
        let row = row.map_err(|e| e.to_string())?;
        let num = |i: usize| -> Result<f64, String> { row[i].parse().map_err(|e| format!("{:?}: {e}", &row[i])) };
        let rec = TraceRecord {
            index: row[3].parse().map_err(|e| format!("index: {e}"))?,
            time: parse_opt(&row[4])?,
            f_gap: parse_opt(&row[5])?,
            grad_norm: num(6)?,
            step_norm: num(7)?,
        };
        let status = match &row[8] {
            "completed" => RunStatus::Completed,
            "diverged" => RunStatus::Diverged { at: rec.index + 1 },
            other => return Err(format!("unknown status {other:?}")),
        };
        match traces.last_mut() {
            Some(t) if t.run_id == row[0] => {
                t.records.push(rec);
                if let RunStatus::Diverged { .. } = status {
                    t.status = status;
                }
            }
            _ => traces.push(Trace {
                run_id: row[0].to_string(),
                method: row[1].to_string(),
                seed: row[2].parse().map_err(|e| format!("seed: {e}"))?,
                records: vec![rec],
                status,
            }),
        }
    }
    Ok(traces)
}

#[derive(Serialize)]
struct JsonReport<'a> {
    config: &'a ExperimentConfig,
    config_hash: String,
    traces: &'a [Trace],
    aggregates: &'a [AggregatePoint],
}

/// Files written by [`emit`].
#[derive(Debug, Clone, PartialEq)]
pub struct Emitted {
    pub files: Vec<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| HarnessError::io(path, e))
}

/// Writes `<stem>.csv` and `<stem>_aggregate.csv` and/or `<stem>.json` into
/// `dir`.
pub fn emit(
    dir: &Path,
    stem: &str,
    cfg: &ExperimentConfig,
    traces: &[Trace],
    aggregates: &[AggregatePoint],
    formats: &[Format],
) -> Result<Emitted, HarnessError> {
    let mut files = Vec::new();
    for format in formats {
        match format {
            Format::Csv => {
                let path = dir.join(format!("{stem}.csv"));
                write_traces_csv(create(&path)?, traces).map_err(csv_err(&path))?;
                files.push(path);
                let path = dir.join(format!("{stem}_aggregate.csv"));
                write_aggregates_csv(create(&path)?, aggregates).map_err(csv_err(&path))?;
                files.push(path);
            }
            Format::Json => {
                let path = dir.join(format!("{stem}.json"));
                let report = JsonReport {
                    config: cfg,
                    config_hash: cfg.content_hash()?,
                    traces,
                    aggregates,
                };
                let mut w = create(&path)?;
                serde_json::to_writer_pretty(&mut w, &report).map_err(|e| HarnessError::Csv {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
                w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| HarnessError::io(&path, e))?;
                files.push(path);
            }
        }
    }
    Ok(Emitted { files })
}

/// Writes arbitrary rows with a header as CSV.
pub fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = csv_err(path);
    w.write_record(header).map_err(&err)?;
    for r in rows {
        w.write_record(r).map_err(&err)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run::{aggregate, run_discrete};
    use crate::optimizers::Method;
    use crate::problems::{NoiseModel, QuadraticDiag, Volatility};

    fn traces() -> Vec<Trace> {
        let q = QuadraticDiag::half_norm(2);
        let noise = NoiseModel::AdditiveGaussian {
            sigma: Volatility::Scalar(0.1),
        };
        (0..4)
            .map(|s| run_discrete(&q, &noise, &Method::Sgd { lr: 0.1 }, &[1.0, 1.0], 30, 3, 9, s).unwrap())
            .collect()
    }

    #[test]
    fn empty_set_is_header_only() {
        let mut buf = Vec::new();
        write_traces_csv(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", TRACE_COLUMNS.join(",")));
    }

    #[test]
    fn one_row_per_record() {
        let mut t = traces().remove(0);
        t.records.truncate(3);
        let mut buf = Vec::new();
        write_traces_csv(&mut buf, &[t]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[0], "sgd(lr=0.1)#0");
        assert_eq!(row[4], "");
        assert_eq!(row[5], "1.0000000000000000e0");
        assert_eq!(row[8], "completed");
    }

    #[test]
    fn csv_round_trip_reconstructs_aggregates() {
        let ts = traces();
        let mut buf = Vec::new();
        write_traces_csv(&mut buf, &ts).unwrap();
        let back = read_traces_csv(buf.as_slice()).unwrap();
        assert_eq!(back, ts);
        let (a, b) = (aggregate(&ts), aggregate(&back));
        for (x, y) in a.iter().zip(&b) {
            assert!((x.f_gap_mean.unwrap() - y.f_gap_mean.unwrap()).abs() <= 1e-12);
            assert!((x.f_gap_ci95.unwrap() - y.f_gap_ci95.unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn emits_all_formats() {
        let dir = tempfile::tempdir().unwrap();
        let ts = traces();
        let cfg = ExperimentConfig::default();
        let out = emit(dir.path(), "run", &cfg, &ts, &aggregate(&ts), &[Format::Csv, Format::Json]).unwrap();
        assert_eq!(out.files.len(), 3);
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&out.files[2]).unwrap()).unwrap();
        assert_eq!(json["config_hash"].as_str().unwrap(), cfg.content_hash().unwrap());
        assert_eq!(json["traces"].as_array().unwrap().len(), 4);
    }
}
