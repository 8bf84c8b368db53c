//! One-parameter ablations: run the same base configuration once per axis
//! value and tabulate failed-case counts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::Serialize;

use crate::config::{Chunking, ClockKind, RunConfig};
use crate::error::{Error, Result};
use crate::report::RunReport;

#[derive(Debug, Clone, PartialEq)]
pub enum Axis {
    Visibility(Vec<usize>),
    Estimator(Vec<String>),
    Asrs(Vec<Vec<String>>),
    /// Static, then dynamic.
    Chunking,
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::Visibility(_) => "visibility",
            Axis::Estimator(_) => "estimator",
            Axis::Asrs(_) => "asrs",
            Axis::Chunking => "chunking",
        }
    }

    /// `(label, derived config)` per axis value.
    pub fn settings(&self, base: &RunConfig) -> Vec<(String, RunConfig)> {
        let derive = |f: &dyn Fn(&mut RunConfig)| {
            let mut c = base.clone();
            f(&mut c);
            c
        };
        match self {
            Axis::Visibility(grid) => grid
                .iter()
                .map(|&v| (v.to_string(), derive(&|c| c.text_batch_size = v)))
                .collect(),
            Axis::Estimator(names) => names
                .iter()
                .map(|n| (n.clone(), derive(&|c| c.estimator = n.clone())))
                .collect(),
            Axis::Asrs(sets) => sets
                .iter()
                .map(|s| (s.join("+"), derive(&|c| c.asrs = s.clone())))
                .collect(),
            Axis::Chunking => [Chunking::Static, Chunking::Dynamic]
                .into_iter()
                .map(|ch| {
                    let label = match ch {
                        Chunking::Static => "static",
                        Chunking::Dynamic => "dynamic",
                    };
                    (label.to_string(), derive(&|c| c.chunking = ch))
                })
                .collect(),
        }
    }
}

impl FromStr for Axis {
    type Err = Error;

    /// `visibility=4,12,40`, `estimator=none,builtin-nb`, `asrs=a,b,c;a,b,c,d`
    /// or `chunking`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, values) = s.split_once('=').unwrap_or((s, ""));
        let list = |v: &str| -> Vec<String> {
            v.split(',')
                .map(str::trim)
                .filter(|x| !x.is_empty())
                .map(String::from)
                .collect()
        };
        let axis = match name.trim() {
            "visibility" => Axis::Visibility(
                list(values)
                    .iter()
                    .map(|v| match v.parse::<usize>() {
                        Ok(n) if n > 0 => Ok(n),
                        _ => Err(Error::config("axis", format!("bad visibility value `{v}`"))),
                    })
                    .collect::<Result<_>>()?,
            ),
            "estimator" => Axis::Estimator(list(values)),
            "asrs" => Axis::Asrs(values.split(';').map(list).filter(|s| !s.is_empty()).collect()),
            "chunking" if matches!(values.trim(), "" | "both") => Axis::Chunking,
            _ => {
                return Err(Error::config(
                    "axis",
                    format!("unknown axis `{s}`; expected visibility=…, estimator=…, asrs=…;… or chunking"),
                ))
            }
        };
        let empty = match &axis {
            Axis::Visibility(v) => v.is_empty(),
            Axis::Estimator(v) => v.is_empty(),
            Axis::Asrs(v) => v.is_empty(),
            Axis::Chunking => false,
        };
        if empty {
            return Err(Error::config("axis", format!("axis `{name}` needs at least one value")));
        }
        Ok(axis)
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axis::Visibility(v) => {
                let v: Vec<String> = v.iter().map(ToString::to_string).collect();
                write!(f, "visibility={}", v.join(","))
            }
            Axis::Estimator(v) => write!(f, "estimator={}", v.join(",")),
            Axis::Asrs(sets) => {
                let sets: Vec<String> = sets.iter().map(|s| s.join(",")).collect();
                write!(f, "asrs={}", sets.join(";"))
            }
            Axis::Chunking => write!(f, "chunking"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub setting: String,
    /// Cumulative failed cases for the configured target.
    pub total_failed: u64,
    pub per_asr_failed: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub axis: String,
    pub asr_columns: Vec<String>,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = Vec::new();
        write_header(&mut out, &self.asr_columns).expect("in-memory write");
        for row in &self.rows {
            write_row(&mut out, &self.asr_columns, row).expect("in-memory write");
        }
        String::from_utf8(out).expect("csv is UTF-8")
    }
}

fn write_header(w: &mut dyn Write, columns: &[String]) -> std::io::Result<()> {
    let mut cw = csv::Writer::from_writer(w);
    let mut header = vec!["setting".to_string(), "total_failed".to_string()];
    header.extend(columns.iter().cloned());
    cw.write_record(&header)?;
    cw.flush()
}

fn write_row(w: &mut dyn Write, columns: &[String], row: &SweepRow) -> std::io::Result<()> {
    let mut cw = csv::Writer::from_writer(w);
    let mut rec = vec![row.setting.clone(), row.total_failed.to_string()];
    rec.extend(
        columns
            .iter()
            .map(|c| row.per_asr_failed.get(c).map(ToString::to_string).unwrap_or_default()),
    );
    cw.write_record(&rec)?;
    cw.flush()
}

/// Runs every setting of `axis` through `run_one`, streaming CSV rows to
/// `csv_out` as they complete so a failing setting leaves the earlier rows.
/// Only virtual-clock configurations are accepted.
pub fn sweep<F>(base: &RunConfig, axis: &Axis, mut run_one: F, mut csv_out: Option<&mut dyn Write>) -> Result<SweepReport>
where
    F: FnMut(&RunConfig) -> Result<RunReport>,
{
    if base.clock != ClockKind::Virtual {
        return Err(Error::config("clock", "sweeps require the virtual clock"));
    }
    let settings = axis.settings(base);
    for (label, cfg) in &settings {
        cfg.validate().map_err(|e| match e {
            Error::Config { key, message } => Error::config(key, format!("setting `{label}`: {message}")),
            other => other,
        })?;
    }
    let asr_columns: Vec<String> = {
        let mut seen = BTreeSet::new();
        let mut cols = Vec::new();
        for (_, cfg) in &settings {
            for a in &cfg.asrs {
                if seen.insert(a.clone()) {
                    cols.push(a.clone());
                }
            }
        }
        cols
    };
    let io_err = |e: std::io::Error| Error::io("sweep.csv", e);
    if let Some(w) = csv_out.as_deref_mut() {
        write_header(w, &asr_columns).map_err(io_err)?;
    }
    let mut rows = Vec::new();
    for (label, cfg) in settings {
        let report = run_one(&cfg)?;
        let row = SweepRow {
            setting: label,
            total_failed: report.totals.failed,
            per_asr_failed: report.per_asr_failed,
        };
        if let Some(w) = csv_out.as_deref_mut() {
            write_row(w, &asr_columns, &row).map_err(io_err)?;
        }
        rows.push(row);
    }
    Ok(SweepReport {
        axis: axis.to_string(),
        asr_columns,
        rows,
    })
}
