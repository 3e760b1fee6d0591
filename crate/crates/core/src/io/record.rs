//! Machine-readable run output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gcg::{IterationRecord, OrthAudit, SolveStatus, SolverConfig, SolverReport};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInfo {
    /// Generator name or path of `A`.
    pub source: String,
    pub matrix_b: Option<String>,
    pub dim: usize,
    pub nnz_a: Option<usize>,
    pub nnz_b: Option<usize>,
}

/// Wall-clock seconds summed over all iterations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepTimes {
    pub step2: f64,
    pub step3: f64,
    pub step4: f64,
    pub step5: f64,
    pub step6: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub problem: ProblemInfo,
    pub config: SolverConfig,
    pub status: SolveStatus,
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub stagnation: Option<usize>,
    pub step_times: StepTimes,
    pub total_reductions: usize,
    pub cg_breakdowns: usize,
    pub dropped_p_columns: usize,
    pub compactions: usize,
    pub max_proj_dim_seen: usize,
    pub non_monotone_ritz: usize,
    pub orth_audit: Option<OrthAudit>,
    pub history: Vec<IterationRecord>,
}

impl RunRecord {
    /// Collects a finished solve. With `zero_timings` every wall-clock field
    /// is set to zero so that repeated runs serialize identically.
    pub fn new(
        problem: ProblemInfo,
        config: SolverConfig,
        report: &SolverReport,
        total_seconds: f64,
        zero_timings: bool,
    ) -> Self {
        let mut history = report.history.clone();
        let mut times = StepTimes::default();
        for h in &mut history {
            if zero_timings {
                h.t_step2 = 0.0;
                h.t_step3 = 0.0;
                h.t_step4 = 0.0;
                h.t_step5 = 0.0;
                h.t_step6 = 0.0;
            }
            times.step2 += h.t_step2;
            times.step3 += h.t_step3;
            times.step4 += h.t_step4;
            times.step5 += h.t_step5;
            times.step6 += h.t_step6;
        }
        times.total = if zero_timings { 0.0 } else { total_seconds };
        Self {
            schema_version: SCHEMA_VERSION,
            problem,
            config,
            status: report.status,
            eigenvalues: report.eigenvalues.clone(),
            residuals: report.residuals.clone(),
            iterations: report.iterations,
            stagnation: report.stagnation,
            step_times: times,
            total_reductions: report.total_reductions,
            cg_breakdowns: report.cg_breakdowns,
            dropped_p_columns: report.dropped_p_columns,
            compactions: report.compactions,
            max_proj_dim_seen: report.max_proj_dim_seen,
            non_monotone_ritz: report.non_monotone_ritz,
            orth_audit: report.orth_audit.clone(),
            history,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut s = self.to_json()?;
        s.push('\n');
        std::fs::write(path, s)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HistoryFormat {
    #[default]
    Csv,
    Json,
}

pub const HISTORY_COLUMNS: [&str; 14] = [
    "iter",
    "num_converged",
    "first_unconverged_residual",
    "theta",
    "cg_iters",
    "t_step2",
    "t_step3",
    "t_step4",
    "t_step5",
    "t_step6",
    "block_size",
    "proj_dim",
    "reductions",
    "orth_error",
];

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_real(v: Option<f64>) -> String {
    v.map(real).unwrap_or_default()
}

/// Writes one row per iteration. Reals carry 17 significant digits, so the
/// CSV and JSON forms hold identical values; missing values are empty CSV
/// fields and JSON `null`.
pub fn write_history_to(w: &mut impl Write, history: &[IterationRecord], format: HistoryFormat) -> Result<()> {
    match format {
        HistoryFormat::Csv => {
            let mut out = csv::Writer::from_writer(w);
            out.write_record(HISTORY_COLUMNS).map_err(csv_err)?;
            for h in history {
                out.write_record([
                    h.iter.to_string(),
                    h.num_converged.to_string(),
                    opt_real(h.first_unconverged_residual),
                    real(h.theta),
                    h.cg_iters.to_string(),
                    real(h.t_step2),
                    real(h.t_step3),
                    real(h.t_step4),
                    real(h.t_step5),
                    real(h.t_step6),
                    h.block_size.to_string(),
                    h.proj_dim.to_string(),
                    h.reductions.to_string(),
                    opt_real(h.orth_error),
                ])
                .map_err(csv_err)?;
            }
            out.flush()?;
        }
        HistoryFormat::Json => {
            serde_json::to_writer_pretty(&mut *w, history)?;
            writeln!(w)?;
        }
    }
    Ok(())
}

pub fn write_history(path: impl AsRef<Path>, history: &[IterationRecord], format: HistoryFormat) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_history_to(&mut w, history, format)?;
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> crate::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e.into(),
        other => std::io::Error::other(format!("{other:?}")).into(),
    }
}
