//! Run reports: per-iteration counts for the target ASR, cumulative totals and
//! as-if-target failure counts for every ASR.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::store::write_atomic;

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub cases_processed: u64,
    pub failed: u64,
    pub success: u64,
    pub indeterminate: u64,
    pub engine_errors: u64,
    pub clock_used: f64,
}

impl Counts {
    fn add(&mut self, other: &Counts) {
        self.cases_processed += other.cases_processed;
        self.failed += other.failed;
        self.success += other.success;
        self.indeterminate += other.indeterminate;
        self.engine_errors += other.engine_errors;
        self.clock_used += other.clock_used;
    }

    fn is_partitioned(&self) -> bool {
        self.failed + self.success + self.indeterminate + self.engine_errors == self.cases_processed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub iteration: u32,
    #[serde(flatten)]
    pub counts: Counts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub target_asr: String,
    pub seed: u64,
    pub iterations: Vec<IterationRow>,
    pub totals: Counts,
    /// Failed-case count for each ASR judged as if it were the target.
    pub per_asr_failed: BTreeMap<String, u64>,
    pub notes: Vec<String>,
    pub config: RunConfig,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct CsvRow {
    iteration: String,
    cases_processed: u64,
    failed: u64,
    success: u64,
    indeterminate: u64,
    engine_errors: u64,
    clock_used: f64,
}

impl CsvRow {
    fn new(label: String, c: &Counts) -> Self {
        CsvRow {
            iteration: label,
            cases_processed: c.cases_processed,
            failed: c.failed,
            success: c.success,
            indeterminate: c.indeterminate,
            engine_errors: c.engine_errors,
            clock_used: c.clock_used,
        }
    }

    fn counts(&self) -> Counts {
        Counts {
            cases_processed: self.cases_processed,
            failed: self.failed,
            success: self.success,
            indeterminate: self.indeterminate,
            engine_errors: self.engine_errors,
            clock_used: self.clock_used,
        }
    }
}

impl RunReport {
    pub fn new(
        config: &RunConfig,
        iterations: Vec<IterationRow>,
        per_asr_failed: BTreeMap<String, u64>,
        notes: Vec<String>,
    ) -> Self {
        let mut totals = Counts::default();
        for row in &iterations {
            totals.add(&row.counts);
        }
        RunReport {
            target_asr: config.target_asr.clone(),
            seed: config.seed,
            iterations,
            totals,
            per_asr_failed,
            notes,
            config: config.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut sum = Counts::default();
        for row in &self.iterations {
            if !row.counts.is_partitioned() {
                return Err(Error::Validation(format!(
                    "iteration {}: outcome counts do not sum to cases_processed",
                    row.iteration
                )));
            }
            sum.add(&row.counts);
        }
        let same_counts = Counts {
            clock_used: self.totals.clock_used,
            ..sum.clone()
        } == self.totals;
        if !same_counts || (sum.clock_used - self.totals.clock_used).abs() > 1e-9 * sum.clock_used.max(1.0) {
            return Err(Error::Validation("totals differ from the column sums".into()));
        }
        if self.per_asr_failed.get(&self.target_asr).copied().unwrap_or(0) != self.totals.failed {
            return Err(Error::Validation(
                "target's as-if-target failed count differs from the totals".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::Parse {
            location: REPORT_JSON.into(),
            message: e.to_string(),
        })
    }

    /// Per-iteration rows followed by a `total` row.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.iterations {
            w.serialize(CsvRow::new(row.iteration.to_string(), &row.counts))
                .expect("in-memory csv");
        }
        w.serialize(CsvRow::new("total".into(), &self.totals))
            .expect("in-memory csv");
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is UTF-8")
    }

    /// Parses [`RunReport::to_csv`] output back into iteration rows and totals.
    pub fn rows_from_csv(csv_text: &str) -> Result<(Vec<IterationRow>, Counts)> {
        let mut rows = Vec::new();
        let mut totals = None;
        let mut r = csv::Reader::from_reader(csv_text.as_bytes());
        for (n, rec) in r.deserialize::<CsvRow>().enumerate() {
            let rec = rec.map_err(|e| Error::Parse {
                location: format!("{REPORT_CSV}:{}", n + 2),
                message: e.to_string(),
            })?;
            if rec.iteration == "total" {
                totals = Some(rec.counts());
            } else {
                let iteration = rec.iteration.parse().map_err(|_| Error::Parse {
                    location: format!("{REPORT_CSV}:{}", n + 2),
                    message: format!("bad iteration label {:?}", rec.iteration),
                })?;
                rows.push(IterationRow {
                    iteration,
                    counts: rec.counts(),
                });
            }
        }
        let totals = totals.ok_or_else(|| Error::Parse {
            location: REPORT_CSV.into(),
            message: "missing total row".into(),
        })?;
        Ok((rows, totals))
    }

    /// Human-readable table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "target: {}  estimator: {}  chunking: {:?}  visibility: {}  seed: {}",
            self.target_asr,
            self.config.estimator,
            self.config.chunking,
            self.config.text_batch_size,
            self.seed
        );
        let _ = writeln!(
            out,
            "{:>9} {:>9} {:>8} {:>8} {:>13} {:>8} {:>10}",
            "iteration", "processed", "failed", "success", "indeterminate", "errors", "clock"
        );
        let line = |out: &mut String, label: &str, c: &Counts| {
            let _ = writeln!(
                out,
                "{:>9} {:>9} {:>8} {:>8} {:>13} {:>8} {:>10.2}",
                label, c.cases_processed, c.failed, c.success, c.indeterminate, c.engine_errors, c.clock_used
            );
        };
        for row in &self.iterations {
            line(&mut out, &row.iteration.to_string(), &row.counts);
        }
        line(&mut out, "total", &self.totals);
        let per_asr: Vec<String> = self
            .per_asr_failed
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        let _ = writeln!(out, "failed as target: {}", per_asr.join(" "));
        for note in &self.notes {
            let _ = writeln!(out, "note: {note}");
        }
        out
    }

    pub fn write_files(&self, run_dir: &Path) -> Result<()> {
        write_atomic(&run_dir.join(REPORT_JSON), self.to_json().as_bytes())?;
        write_atomic(&run_dir.join(REPORT_CSV), self.to_csv().as_bytes())
    }

    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(REPORT_JSON);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(iteration: u32, f: u64, s: u64, i: u64, e: u64, clock: f64) -> IterationRow {
        IterationRow {
            iteration,
            counts: Counts {
                cases_processed: f + s + i + e,
                failed: f,
                success: s,
                indeterminate: i,
                engine_errors: e,
                clock_used: clock,
            },
        }
    }

    fn sample() -> RunReport {
        let cfg = RunConfig::new("tts", &["a", "b"], "a");
        RunReport::new(
            &cfg,
            vec![row(1, 2, 5, 1, 0, 9.5), row(2, 3, 4, 0, 1, 8.25)],
            [("a".to_string(), 5), ("b".to_string(), 1)].into(),
            vec![],
        )
    }

    #[test]
    fn table_has_body_and_total_rows() {
        let r = sample();
        r.validate().unwrap();
        let table = r.render_table();
        let body: Vec<&str> = table
            .lines()
            .filter(|l| l.trim_start().starts_with(|c: char| c.is_ascii_digit()) || l.trim_start().starts_with("total"))
            .collect();
        assert_eq!(body.len(), 3);
        assert_eq!(r.totals.failed, 5);
        assert_eq!(r.totals.cases_processed, 16);
    }

    #[test]
    fn empty_report_is_all_zero() {
        let cfg = RunConfig::new("tts", &["a", "b"], "a");
        let r = RunReport::new(&cfg, vec![], [("a".to_string(), 0)].into(), vec![]);
        r.validate().unwrap();
        assert_eq!(r.totals, Counts::default());
    }

    #[test]
    fn json_and_csv_round_trip() {
        let r = sample();
        assert_eq!(RunReport::from_json(&r.to_json()).unwrap(), r);
        let (rows, totals) = RunReport::rows_from_csv(&r.to_csv()).unwrap();
        assert_eq!(rows, r.iterations);
        assert_eq!(totals, r.totals);
    }

    #[test]
    fn inconsistent_totals_rejected() {
        let mut r = sample();
        r.totals.failed += 1;
        assert!(r.validate().is_err());
        let mut r = sample();
        r.iterations[0].counts.cases_processed += 1;
        assert!(r.validate().is_err());
    }
}
