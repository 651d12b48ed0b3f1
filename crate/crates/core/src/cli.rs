//! Command-line front end. Every subcommand writes one JSON document and
//! exits with 0 (certified / holds), 1 (violated / infeasible) or 2 (error).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::bench::{run_bench, BenchConfig};
use crate::builtins::{builtin_model, builtin_names, builtin_source, default_grid};
use crate::cert::{Certificate, DtCertificate, DEFAULT_NSD_TOL};
use crate::discretize::{consistency_sweep, SchemeId, DEFAULT_DELTA0};
use crate::error::{Error, Result};
use crate::lmi::{check_ct_grid, check_dt_grid};
use crate::model::grid::GridSpec;
use crate::model::parse::parse_model_named;
use crate::model::system::SystemSpec;
use crate::synth::{log_kappa_grid, synthesize_certificate, SupplyStructure, SynthOptions};
use crate::transfer::{consistency_bound_for, run_transfer, TransferConfig};
use crate::{sweep, VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATED: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "iioss",
    version,
    about = "Gridded detectability certificates and their transfer to Euler/RK2 discretizations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a continuous-time certificate on a grid.
    CheckCt(CheckCtArgs),
    /// Check a transferred discrete-time certificate on a grid.
    CheckDt(CheckDtArgs),
    /// Transfer a continuous-time certificate to a discretization.
    Transfer(TransferArgs),
    /// Compare measured Jacobian defects with the consistency bound.
    Consistency(ConsistencyArgs),
    /// Search for a continuous-time certificate.
    Synth(SynthArgs),
    /// Time continuous-time versus RK2 linearization sweeps.
    Bench(BenchArgs),
    /// List built-in models.
    Builtins(BuiltinsArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// Model file.
    #[arg(long, conflicts_with = "builtin")]
    pub model: Option<PathBuf>,
    /// Built-in model name.
    #[arg(long)]
    pub builtin: Option<String>,
    /// Grid file; builtins fall back to their default box.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Points per axis of a builtin's default box.
    #[arg(long, default_value_t = 11)]
    pub points: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RunArgs {
    /// Relative NSD tolerance.
    #[arg(long, default_value_t = DEFAULT_NSD_TOL)]
    pub tol: f64,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConstantArgs {
    /// Use this L_f instead of the grid estimate.
    #[arg(long)]
    pub lf: Option<f64>,
    /// Use this L_df instead of the sampled estimate.
    #[arg(long)]
    pub ldf: Option<f64>,
    /// Override the slope of sigma (normally L_df * c_f).
    #[arg(long)]
    pub sigma_slope: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_DELTA0)]
    pub delta0: f64,
    /// Random pairs for the L_df estimate.
    #[arg(long, default_value_t = 2000)]
    pub pairs: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CheckCtArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub cert: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CheckDtArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub cert: PathBuf,
    /// Defaults to the scheme recorded in the certificate, else euler.
    #[arg(long)]
    pub scheme: Option<SchemeId>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TransferArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub cert: PathBuf,
    #[arg(long, default_value = "euler")]
    pub scheme: SchemeId,
    /// Sampling period (default: tau1 / 2).
    #[arg(long)]
    pub tau: Option<f64>,
    #[command(flatten)]
    pub constants: ConstantArgs,
    /// Samples for the Lyapunov inequality check.
    #[arg(long, default_value_t = 10_000)]
    pub samples: u64,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConsistencyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "euler")]
    pub scheme: SchemeId,
    /// Comma-separated sampling periods.
    #[arg(long, value_delimiter = ',', required = true)]
    pub taus: Vec<f64>,
    #[command(flatten)]
    pub constants: ConstantArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1e-3)]
    pub kappa_min: f64,
    #[arg(long, default_value_t = 10.0)]
    pub kappa_max: f64,
    #[arg(long, default_value_t = 16)]
    pub kappa_count: usize,
    #[arg(long, default_value_t = 4000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub margin: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    /// Search over full (not diagonal) Q and R.
    #[arg(long)]
    pub full_supply: bool,
    #[arg(long)]
    pub stop_at_first: bool,
    /// Also write the certificate alone to this file.
    #[arg(long)]
    pub cert_out: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long, default_value = "reactor")]
    pub builtin: String,
    /// Points per reduced direction.
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    #[arg(long, default_value_t = 0.1)]
    pub tau: f64,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BuiltinsArgs {
    /// Print the model source of this builtin.
    #[arg(long)]
    pub show: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn load(m: &ModelArgs) -> Result<(SystemSpec, GridSpec)> {
    let (sys, name) = match (&m.model, &m.builtin) {
        (Some(path), _) => {
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "model".into());
            (parse_model_named(&read(path)?, &stem)?, None)
        }
        (None, Some(name)) => (builtin_model(name)?, Some(name.as_str())),
        (None, None) => return Err(Error::Invalid("one of --model or --builtin is required".into())),
    };
    let grid = match (&m.grid, name) {
        (Some(path), _) => GridSpec::parse(&read(path)?, sys.dims())?,
        (None, Some(name)) => default_grid(&sys, name, m.points)?,
        (None, None) => return Err(Error::Invalid("--grid is required with --model".into())),
    };
    Ok((sys, grid))
}

fn envelope(command: &str, config: &impl Serialize, seed: Option<u64>, report: Value) -> Value {
    json!({
        "tool": "iioss",
        "version": VERSION,
        "command": command,
        "config": config,
        "seed": seed,
        "report": report,
    })
}

fn emit(out: Option<&Path>, doc: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(doc)? + "\n";
    match out {
        Some(path) => fs::write(path, text).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|source| Error::Io {
                    path: "<stdout>".into(),
                    source,
                })
        }
    }
}

fn verdict(ok: bool) -> i32 {
    if ok {
        EXIT_OK
    } else {
        EXIT_VIOLATED
    }
}

pub fn cmd_check_ct(a: &CheckCtArgs) -> Result<i32> {
    let (sys, grid) = load(&a.model)?;
    let cert = Certificate::from_json(&read(&a.cert)?)?;
    let report = sweep::with_threads(a.run.threads, || check_ct_grid(&sys, &grid, &cert, a.run.tol))?;
    let doc = envelope("check-ct", a, Some(a.run.seed), serde_json::to_value(&report)?);
    emit(a.run.out.as_deref(), &doc)?;
    Ok(verdict(report.passed()))
}

pub fn cmd_check_dt(a: &CheckDtArgs) -> Result<i32> {
    let (sys, grid) = load(&a.model)?;
    let dc = DtCertificate::from_json(&read(&a.cert)?)?;
    let scheme = a
        .scheme
        .or(dc.provenance.as_ref().map(|p| p.scheme))
        .unwrap_or(SchemeId::Euler);
    let report =
        sweep::with_threads(a.run.threads, || check_dt_grid(&sys, scheme, &grid, &dc, a.run.tol))?;
    let doc = envelope("check-dt", a, Some(a.run.seed), serde_json::to_value(&report)?);
    emit(a.run.out.as_deref(), &doc)?;
    Ok(verdict(report.passed() && !report.out_of_certificate))
}

fn transfer_config(scheme: SchemeId, tau: Option<f64>, c: &ConstantArgs, samples: u64, run: &RunArgs) -> TransferConfig {
    TransferConfig {
        scheme,
        tau,
        delta0: c.delta0,
        lf: c.lf,
        ldf: c.ldf,
        sigma_slope: c.sigma_slope,
        ldf_pairs: c.pairs,
        lyap_samples: samples,
        seed: run.seed,
        tol: run.tol,
        ..TransferConfig::default()
    }
}

pub fn cmd_transfer(a: &TransferArgs) -> Result<i32> {
    let (sys, grid) = load(&a.model)?;
    let cert = Certificate::from_json(&read(&a.cert)?)?;
    let cfg = transfer_config(a.scheme, a.tau, &a.constants, a.samples, &a.run);
    let report = sweep::with_threads(a.run.threads, || run_transfer(&sys, &grid, &cert, &cfg))?;
    if let Some(msg) = &report.rejection {
        eprintln!("iioss: {msg}");
    }
    let doc = envelope("transfer", a, Some(a.run.seed), serde_json::to_value(&report)?);
    emit(a.run.out.as_deref(), &doc)?;
    Ok(verdict(report.certified))
}

pub fn cmd_consistency(a: &ConsistencyArgs) -> Result<i32> {
    let (sys, grid) = load(&a.model)?;
    let cfg = transfer_config(a.scheme, None, &a.constants, 1, &a.run);
    let (bound, constants, sweeps) = sweep::with_threads(a.run.threads, || -> Result<_> {
        let (bound, constants) = consistency_bound_for(&sys, &grid, &cfg)?;
        let sweeps = a
            .taus
            .iter()
            .map(|&tau| consistency_sweep(&sys, &grid, tau, &bound))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok((bound, constants, sweeps))
    })?;
    if let Some(e) = sweeps.iter().find(|s| s.domain_errors > 0) {
        return Err(Error::Invalid(format!(
            "{} grid points could not be evaluated at tau = {}",
            e.domain_errors, e.tau
        )));
    }
    let ok = sweeps.iter().all(|s| s.bound_satisfied);
    let report = json!({
        "bound": bound,
        "constants": constants,
        "sweeps": sweeps,
        "bound_satisfied": ok,
    });
    let doc = envelope("consistency", a, Some(a.run.seed), report);
    emit(a.run.out.as_deref(), &doc)?;
    Ok(verdict(ok))
}

pub fn cmd_synth(a: &SynthArgs) -> Result<i32> {
    let (sys, grid) = load(&a.model)?;
    let opts = SynthOptions {
        kappas: log_kappa_grid(a.kappa_min, a.kappa_max, a.kappa_count),
        max_iters: a.max_iters,
        margin: a.margin,
        eps: a.eps,
        supply: if a.full_supply {
            SupplyStructure::Full
        } else {
            SupplyStructure::Diagonal
        },
        tol: a.run.tol,
        stop_at_first: a.stop_at_first,
        seed: a.run.seed,
        ..SynthOptions::default()
    };
    let report = sweep::with_threads(a.run.threads, || synthesize_certificate(&sys, &grid, &opts))?;
    if let (Some(path), Some(cert)) = (&a.cert_out, &report.certificate) {
        fs::write(path, cert.to_json() + "\n").map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    let doc = envelope("synth", a, Some(a.run.seed), serde_json::to_value(&report)?);
    emit(a.run.out.as_deref(), &doc)?;
    Ok(verdict(report.feasible))
}

pub fn cmd_bench(a: &BenchArgs) -> Result<i32> {
    let sys = builtin_model(&a.builtin)?;
    let grid = default_grid(&sys, &a.builtin, 2)?;
    let cfg = BenchConfig {
        points: a.points,
        tau: a.tau,
        repeats: a.repeats,
    };
    let report = run_bench(&sys, &grid, &cfg)?;
    let doc = envelope("bench", a, None, serde_json::to_value(&report)?);
    emit(a.out.as_deref(), &doc)?;
    Ok(EXIT_OK)
}

pub fn cmd_builtins(a: &BuiltinsArgs) -> Result<i32> {
    let report = match &a.show {
        Some(name) => {
            let src = builtin_source(name)
                .ok_or_else(|| Error::Invalid(format!("unknown builtin `{name}`")))?;
            json!({ "name": name, "source": src })
        }
        None => json!({ "builtins": builtin_names() }),
    };
    emit(a.out.as_deref(), &envelope("builtins", a, None, report))?;
    Ok(EXIT_OK)
}

pub fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::CheckCt(a) => cmd_check_ct(a),
        Command::CheckDt(a) => cmd_check_dt(a),
        Command::Transfer(a) => cmd_transfer(a),
        Command::Consistency(a) => cmd_consistency(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Builtins(a) => cmd_builtins(a),
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("iioss: {e}");
            EXIT_ERROR
        }
    }
}
