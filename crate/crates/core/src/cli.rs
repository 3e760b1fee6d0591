//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, ValueEnum};

use crate::error::{Error, Result};
use crate::gcg::{gcg_solve, ShiftMode, SolveStatus, SolverConfig};
use crate::io::{
    generate_builtin, read_matrix_market, write_history, GeneratorKind, GeneratorParams,
    HistoryFormat, ProblemInfo, RunRecord,
};
use crate::multivec::{CsrMatrix, LinearOperator};
use crate::orth::OrthMethod;

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_MAX_ITERS: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ShiftArg {
    Dynamic,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OrthArg {
    RecursiveSvd,
    ModifiedBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

/// Computes the smallest eigenpairs of a sparse symmetric matrix or
/// symmetric-definite pair.
#[derive(Debug, Parser)]
#[command(name = "gcge", version)]
struct Args {
    /// MatrixMarket file holding A.
    #[arg(long, value_name = "PATH")]
    matrix_a: Option<PathBuf>,
    /// MatrixMarket file holding B (SPD).
    #[arg(long, value_name = "PATH")]
    matrix_b: Option<PathBuf>,
    /// Built-in problem: laplacian1d, fem1d-p1, diag-range, clustered-random.
    #[arg(long, value_name = "NAME")]
    builtin: Option<String>,
    /// Size of the built-in problem.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Coupling density for clustered-random.
    #[arg(long, default_value_t = GeneratorParams::default().density)]
    density: f64,
    /// Seed for clustered-random.
    #[arg(long, default_value_t = GeneratorParams::default().seed)]
    gen_seed: u64,

    #[arg(long, default_value_t = 10)]
    num_eigen: usize,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    block_size: Option<usize>,
    #[arg(long)]
    size_x: Option<usize>,
    #[arg(long, value_enum)]
    shift: Option<ShiftArg>,
    #[arg(long)]
    cg_max_iters: Option<usize>,
    #[arg(long)]
    cg_rel_tol: Option<f64>,
    #[arg(long, value_enum)]
    moving: Option<Switch>,
    #[arg(long)]
    max_proj_dim: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Bit-reproducible reductions and zeroed timings in the output.
    #[arg(long)]
    deterministic: bool,
    /// Iterations without new convergence before stagnation is reported.
    #[arg(long)]
    stall_window: Option<usize>,
    /// Threads for the projected eigenproblem.
    #[arg(long)]
    rr_workers: Option<usize>,
    /// Measure orthogonality after every orthogonalization.
    #[arg(long)]
    audit_orth: bool,

    #[arg(long, value_enum)]
    orth_method: Option<OrthArg>,
    #[arg(long)]
    orth_block_width: Option<usize>,
    #[arg(long)]
    orth_svd_leaf: Option<usize>,
    #[arg(long)]
    reorth_tol: Option<f64>,
    #[arg(long)]
    dependence_tol: Option<f64>,
    #[arg(long)]
    max_reorth_passes: Option<usize>,

    /// Where to write the run record (JSON).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Where to write the per-iteration history.
    #[arg(long, value_name = "PATH")]
    history: Option<PathBuf>,
    /// Format of the history file.
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
}

impl Args {
    fn config(&self) -> SolverConfig {
        let mut c = SolverConfig::new(self.num_eigen);
        if let Some(v) = self.tol {
            c.tol = v;
        }
        c.block_size = self.block_size;
        c.size_x = self.size_x;
        if let Some(v) = self.shift {
            c.shift_mode = match v {
                ShiftArg::Dynamic => ShiftMode::Dynamic,
                ShiftArg::None => ShiftMode::None,
            };
        }
        if let Some(v) = self.cg_max_iters {
            c.cg_max_iters = v;
        }
        if let Some(v) = self.cg_rel_tol {
            c.cg_rel_tol = v;
        }
        if let Some(v) = self.moving {
            c.moving = v == Switch::On;
        }
        c.max_proj_dim = self.max_proj_dim;
        if let Some(v) = self.max_iters {
            c.max_gcg_iters = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        c.deterministic_reduction = self.deterministic;
        if let Some(v) = self.stall_window {
            c.stall_window = v;
        }
        if let Some(v) = self.rr_workers {
            c.rr_workers = v;
        }
        c.audit_orthogonality = self.audit_orth;
        if let Some(v) = self.orth_method {
            c.orth.method = match v {
                OrthArg::RecursiveSvd => OrthMethod::RecursiveSvd,
                OrthArg::ModifiedBlock => OrthMethod::ModifiedBlock,
            };
        }
        c.orth.block_width = self.orth_block_width;
        c.orth.svd_leaf = self.orth_svd_leaf;
        if let Some(v) = self.reorth_tol {
            c.orth.reorth_tol = v;
        }
        if let Some(v) = self.dependence_tol {
            c.orth.dependence_tol = v;
        }
        if let Some(v) = self.max_reorth_passes {
            c.orth.max_reorth_passes = v;
        }
        c
    }
}

enum Source {
    File(PathBuf),
    Builtin(GeneratorKind),
}

fn source(args: &Args) -> std::result::Result<Source, String> {
    match (&args.matrix_a, &args.builtin) {
        (Some(_), Some(_)) => Err("--matrix-a and --builtin are mutually exclusive".into()),
        (None, None) => Err("one of --matrix-a or --builtin is required".into()),
        (Some(p), None) => Ok(Source::File(p.clone())),
        (None, Some(name)) => {
            if args.matrix_b.is_some() {
                return Err("--matrix-b requires --matrix-a".into());
            }
            name.parse::<GeneratorKind>()
                .map(Source::Builtin)
                .map_err(|e| format!("{e}; expected one of {}", GeneratorKind::NAMES.join(", ")))
        }
    }
}

/// Parses `argv`, runs the solve and returns the process exit status.
/// Diagnostics go to `err`; a short summary goes to `out`.
pub fn run_cli<I, T>(argv: I, out: &mut impl Write, err: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_CONVERGED };
            if e.use_stderr() {
                let _ = write!(err, "{e}");
            } else {
                let _ = write!(out, "{e}");
            }
            return code;
        }
    };
    let src = match source(&args) {
        Ok(s) => s,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            return EXIT_USAGE;
        }
    };
    match execute(&args, src, out) {
        Ok(SolveStatus::Converged) => EXIT_CONVERGED,
        Ok(SolveStatus::MaxIterations) => EXIT_MAX_ITERS,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}

fn read_with_path(path: &PathBuf) -> Result<CsrMatrix> {
    read_matrix_market(path).map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        Error::Parse { line, msg } => Error::Parse {
            line,
            msg: format!("{msg} (in {})", path.display()),
        },
        other => other,
    })
}

fn load(args: &Args, src: Source) -> Result<(CsrMatrix, Option<CsrMatrix>, ProblemInfo)> {
    let (a, b, source, matrix_b) = match src {
        Source::File(path) => {
            let a = read_with_path(&path)?;
            let b = args.matrix_b.as_ref().map(read_with_path).transpose()?;
            let bname = args.matrix_b.as_ref().map(|p| p.display().to_string());
            (a, b, path.display().to_string(), bname)
        }
        Source::Builtin(kind) => {
            let params = GeneratorParams {
                density: args.density,
                seed: args.gen_seed,
            };
            let (a, b) = generate_builtin(kind, args.n, &params)?;
            let bname = b.as_ref().map(|_| format!("{}:mass", kind.name()));
            (a, b, kind.name().to_string(), bname)
        }
    };
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidMatrix(format!("A is {}x{}", a.nrows(), a.ncols())));
    }
    if let Some(b) = &b {
        if b.nrows() != a.nrows() || b.ncols() != a.ncols() {
            return Err(Error::InvalidShape(format!(
                "A is {}x{} but B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
    }
    let info = ProblemInfo {
        source,
        matrix_b,
        dim: a.nrows(),
        nnz_a: a.nnz(),
        nnz_b: b.as_ref().and_then(|m| m.nnz()),
    };
    Ok((a, b, info))
}

fn execute(args: &Args, src: Source, out: &mut impl Write) -> Result<SolveStatus> {
    let (a, b, info) = load(args, src)?;
    let cfg = args.config();
    let resolved = cfg.resolve(info.dim)?;
    let t = Instant::now();
    let report = gcg_solve(&a, b.as_ref().map(|m| m as &dyn LinearOperator), &cfg)?;
    let total = t.elapsed().as_secs_f64();
    let record = RunRecord::new(info, resolved.clone(), &report, total, args.deterministic);

    if let Some(path) = &args.out {
        record.write(path)?;
    }
    if let Some(path) = &args.history {
        let format = match args.format {
            FormatArg::Json => HistoryFormat::Json,
            FormatArg::Csv => HistoryFormat::Csv,
        };
        write_history(path, &record.history, format)?;
    }
    let status = match report.status {
        SolveStatus::Converged => "converged",
        SolveStatus::MaxIterations => "reached the iteration limit",
    };
    writeln!(
        out,
        "{status} after {} iterations: {} of {} pairs",
        report.iterations,
        report.residuals.iter().filter(|r| **r < resolved.tol).count(),
        resolved.num_eigen
    )?;
    for (k, (v, r)) in report.eigenvalues.iter().zip(&report.residuals).enumerate() {
        writeln!(out, "{:>5}  {v:>24.16e}  {r:.3e}", k + 1)?;
    }
    Ok(report.status)
}
