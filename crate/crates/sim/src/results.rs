//! Aggregation and CSV output.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use dpmnl_core::accountant::Charge;

use crate::config::{ArmSpec, ExperimentConfig};
use crate::runner::RunOutput;
use crate::SimError;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                n,
                mean: f64::NAN,
                sd: f64::NAN,
                se: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            n,
            mean,
            sd,
            se: sd / (n as f64).sqrt(),
        }
    }

    /// Half-width of the 95% band.
    pub fn band(&self) -> f64 {
        1.96 * self.se
    }
}

/// `√(s₁²/n₁ + s₂²/n₂)`.
pub fn pooled_se(a: &Stats, b: &Stats) -> f64 {
    (a.se * a.se + b.se * b.se).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub arm: String,
    pub t: usize,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone)]
pub struct ResultsTable {
    pub arms: Vec<ArmSpec>,
    pub horizon: usize,
    pub replicates: usize,
    pub runs: Vec<RunOutput>,
}

impl ResultsTable {
    pub fn new(arms: Vec<ArmSpec>, horizon: usize, replicates: usize, mut runs: Vec<RunOutput>) -> Self {
        runs.sort_by_key(|r| (r.arm, r.replicate));
        Self {
            arms,
            horizon,
            replicates,
            runs,
        }
    }

    pub fn arm_index(&self, label: &str) -> Option<usize> {
        self.arms.iter().position(|a| a.label == label)
    }

    /// Completed runs of an arm.
    pub fn runs_of(&self, arm: usize) -> impl Iterator<Item = &RunOutput> {
        self.runs.iter().filter(move |r| r.arm == arm && r.error.is_none())
    }

    pub fn failures(&self) -> impl Iterator<Item = &RunOutput> {
        self.runs.iter().filter(|r| r.error.is_some())
    }

    pub fn final_regrets(&self, arm: usize) -> Vec<f64> {
        self.runs_of(arm).map(|r| r.final_regret()).collect()
    }

    pub fn final_stats(&self, arm: usize) -> Stats {
        Stats::of(&self.final_regrets(arm))
    }

    /// Mean per-round regret over rounds `from..to` (0-based, exclusive end),
    /// averaged across completed runs.
    pub fn mean_window(&self, arm: usize, from: usize, to: usize) -> f64 {
        let per_run: Vec<f64> = self
            .runs_of(arm)
            .map(|r| r.instant[from..to].iter().sum::<f64>() / (to - from) as f64)
            .collect();
        Stats::of(&per_run).mean
    }

    /// Mean cumulative regret with a `± 1.96·se` band per arm and round.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut rows = Vec::with_capacity(self.arms.len() * self.horizon);
        for (a, arm) in self.arms.iter().enumerate() {
            let runs: Vec<&RunOutput> = self.runs_of(a).collect();
            if runs.is_empty() {
                continue;
            }
            let mut column = vec![0.0; runs.len()];
            for t in 0..self.horizon {
                for (c, r) in column.iter_mut().zip(&runs) {
                    *c = r.cumulative[t];
                }
                let s = Stats::of(&column);
                rows.push(SummaryRow {
                    arm: arm.label.clone(),
                    t: t + 1,
                    mean: s.mean,
                    lo: s.mean - s.band(),
                    hi: s.mean + s.band(),
                });
            }
        }
        rows
    }

    /// Each cumulative series must be the running sum of its instant series.
    pub fn check_prefix_sums(&self) -> Result<(), SimError> {
        for r in &self.runs {
            let mut total = 0.0;
            for (t, (i, c)) in r.instant.iter().zip(&r.cumulative).enumerate() {
                total += i;
                if total != *c {
                    return Err(SimError::Invariant(format!(
                        "arm {} replicate {} round {}: cumulative regret is not the prefix sum",
                        r.arm,
                        r.replicate,
                        t + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Files written by [`emit`].
pub const RAW_FILE: &str = "raw.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const LEDGER_FILE: &str = "ledger.csv";
pub const SNAPSHOT_FILE: &str = "config.snapshot";
pub const AUDIT_FILE: &str = "audit.log";

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, SimError> {
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(|e| SimError::io(&path, e))
}

fn finish(mut w: BufWriter<File>, dir: &Path, name: &str) -> Result<(), SimError> {
    w.flush().map_err(|e| SimError::io(&dir.join(name), e))
}

pub fn write_raw<W: Write>(results: &ResultsTable, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "arm,replicate,t,instant_regret,cum_regret")?;
    for r in &results.runs {
        let label = &results.arms[r.arm].label;
        for (t, (i, c)) in r.instant.iter().zip(&r.cumulative).enumerate() {
            writeln!(w, "{label},{},{},{},{}", r.replicate, t + 1, fmt_f64(*i), fmt_f64(*c))?;
        }
    }
    Ok(())
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "arm,t,mean,lo,hi")?;
    for row in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            row.arm,
            row.t,
            fmt_f64(row.mean),
            fmt_f64(row.lo),
            fmt_f64(row.hi)
        )?;
    }
    Ok(())
}

pub fn write_ledger<W: Write>(results: &ResultsTable, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "arm,replicate,index,event,mechanism,notion,charge,delta,cumulative")?;
    for r in &results.runs {
        let label = &results.arms[r.arm].label;
        for (i, e) in r.ledger.iter().enumerate() {
            let notion = match e.charge {
                Charge::Zcdp(_) => "zcdp",
                Charge::EpsDelta(_) => "eps-delta",
            };
            writeln!(
                w,
                "{label},{},{},{},{},{notion},{},{},{}",
                r.replicate,
                i,
                e.event,
                e.mechanism.name(),
                fmt_f64(e.charge.primary()),
                fmt_f64(e.charge.delta().unwrap_or(0.0)),
                fmt_f64(e.cumulative)
            )?;
        }
    }
    Ok(())
}

fn audit(results: &ResultsTable) -> String {
    let mut s = String::new();
    for r in &results.runs {
        let label = &results.arms[r.arm].label;
        if let Some(e) = &r.error {
            let _ = writeln!(s, "ERROR {label} replicate {}: {e}", r.replicate);
        }
        if r.mle_failures > 0 || r.reshifts > 0 {
            let _ = writeln!(
                s,
                "WARN {label} replicate {}: {} MLE non-convergence, {} emergency re-shifts",
                r.replicate, r.mle_failures, r.reshifts
            );
        }
    }
    s
}

/// Writes `raw.csv` (unless disabled), `summary.csv`, `ledger.csv`,
/// `config.snapshot` and `audit.log` into `dir`.
pub fn emit(results: &ResultsTable, cfg: &ExperimentConfig, dir: &Path) -> Result<(), SimError> {
    results.check_prefix_sums()?;
    std::fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
    let mut w = create(dir, SNAPSHOT_FILE)?;
    w.write_all(cfg.snapshot().as_bytes())
        .map_err(|e| SimError::io(&dir.join(SNAPSHOT_FILE), e))?;
    finish(w, dir, SNAPSHOT_FILE)?;

    if cfg.write_raw {
        let mut w = create(dir, RAW_FILE)?;
        write_raw(results, &mut w).map_err(|e| SimError::io(&dir.join(RAW_FILE), e))?;
        finish(w, dir, RAW_FILE)?;
    }

    let mut w = create(dir, SUMMARY_FILE)?;
    write_summary(&results.summary(), &mut w).map_err(|e| SimError::io(&dir.join(SUMMARY_FILE), e))?;
    finish(w, dir, SUMMARY_FILE)?;

    let mut w = create(dir, LEDGER_FILE)?;
    write_ledger(results, &mut w).map_err(|e| SimError::io(&dir.join(LEDGER_FILE), e))?;
    finish(w, dir, LEDGER_FILE)?;

    let mut w = create(dir, AUDIT_FILE)?;
    w.write_all(audit(results).as_bytes())
        .map_err(|e| SimError::io(&dir.join(AUDIT_FILE), e))?;
    finish(w, dir, AUDIT_FILE)
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>, SimError> {
    let mut rdr = csv::Reader::from_path(path).map_err(SimError::from)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(SimError::from)?;
        let line = rec.position().map_or(0, |p| p.line());
        let f = |i: usize| -> Result<f64, SimError> {
            rec[i]
                .parse()
                .map_err(|_| SimError::Replay(format!("{}: line {line}: bad number", path.display())))
        };
        rows.push(SummaryRow {
            arm: rec[0].to_string(),
            t: rec[1]
                .parse()
                .map_err(|_| SimError::Replay(format!("{}: line {line}: bad round", path.display())))?,
            mean: f(2)?,
            lo: f(3)?,
            hi: f(4)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_basics() {
        let s = Stats::of(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.sd - 1.0).abs() < 1e-15);
        assert!((s.se - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        let one = Stats::of(&[4.0]);
        assert_eq!((one.mean, one.sd), (4.0, 0.0));
        let p = pooled_se(&s, &s);
        assert!((p - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 123456.789, -2.5e-7] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
    }
}
