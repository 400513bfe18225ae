//! Config-driven entry points for the delayed ZK laboratory.
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 infeasible
//! certificate or feedback, 3 blow-up or solver failure.

// `!(x > 0.0)` guards also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod run;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use zkdamper_core::diagnostics::{gn_estimate, gn_ratio};
use zkdamper_core::stepper::oracle_compare;
use zkdamper_core::{Error, ScalarField};

use crate::config::{FeedbackMode, Scenario};
use crate::output::{fmt_f64, fmt_opt, save_bytes, save_energy_csv, save_json, to_json};
use crate::run::{certificate, gn_ensemble, infeasibility, run_scenario, Summary};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Infeasible(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "zkdamper", version, about = "Delayed, damped Zakharov-Kuznetsov experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Seed for random initial data and ensembles.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for sweeps; defaults to all cores.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the stability certificate of the scenario.
    Certify(Common),
    /// Run the scenario and write the energy CSV and JSON summary.
    Simulate(Common),
    /// Repeat the scenario over one parameter axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// One of b_inf, mu2, h, amplitude.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        values: Vec<f64>,
    },
    /// Compare the linear stepper with the dense matrix exponential.
    OracleCheck(Common),
    /// Estimate the Gagliardo-Nirenberg constant on the scenario grid.
    GnEstimate {
        #[command(flatten)]
        common: Common,
        /// Random fields added to the sine mode.
        #[arg(long, default_value_t = 32)]
        samples: usize,
    },
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("zkdamper: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Certify(c) => cmd_certify(&Scenario::load(&c.config)?),
        Command::Simulate(c) => cmd_simulate(&Scenario::load(&c.config)?, c.seed).map(|_| ()),
        Command::Sweep { common, axis, values } => {
            let s = Scenario::load(&common.config)?;
            cmd_sweep(&s, axis, values, common.seed, common.jobs).map(|_| ())
        }
        Command::OracleCheck(c) => cmd_oracle_check(&Scenario::load(&c.config)?, c.seed).map(|_| ()),
        Command::GnEstimate { common, samples } => {
            cmd_gn_estimate(&Scenario::load(&common.config)?, *samples, common.seed).map(|_| ())
        }
    }
}

pub fn cmd_certify(s: &Scenario) -> Result<(), CliError> {
    let cert = certificate(s, None)?
        .ok_or_else(|| CliError::Config("scenario has no [certificate] section".into()))?;
    let path = s.output_path(&s.output.certificate);
    save_json(&path, &cert)?;
    print!("{}", to_json(&cert));
    info!("certificate written to {}", path.display());
    match infeasibility(s, Some(&cert)) {
        Some(reason) => Err(CliError::Infeasible(reason)),
        None => Ok(()),
    }
}

/// Runs the scenario, writes the CSV, the summary and (if any) the
/// certificate; blow-up still writes all outputs before failing.
pub fn cmd_simulate(s: &Scenario, seed: u64) -> Result<Summary, CliError> {
    let out = run_scenario(s, seed)?;
    save_energy_csv(&s.output_path(&s.output.csv), &out.trajectory.records)?;
    save_json(&s.output_path(&s.output.summary), &out.summary)?;
    if let Some(c) = &out.certificate {
        save_json(&s.output_path(&s.output.certificate), c)?;
    }
    print!("{}", to_json(&out.summary));
    if out.summary.status != "completed" {
        let detail = out.summary.status_detail.clone().unwrap_or_default();
        return Err(CliError::Numerical(format!("{}: {detail}", out.summary.status)));
    }
    Ok(out.summary)
}

pub const SWEEP_AXES: [&str; 4] = ["b_inf", "mu2", "h", "amplitude"];
pub const SWEEP_HEADER: &str = "value,rate_fit,envelope_violations,status";

/// Scenario with `axis` set to `value`.
pub fn apply_axis(s: &Scenario, axis: &str, value: f64) -> Result<Scenario, CliError> {
    let mut s = s.clone();
    match axis {
        "b_inf" => {
            if s.feedback.mode == FeedbackMode::Mu {
                return Err(CliError::Config("axis b_inf needs zk or perturbed feedback".into()));
            }
            let b = s.feedback.b.get_or_insert(config::Coefficient {
                amplitude: 0.0,
                floor: None,
                region: None,
                ramp: 0.0,
            });
            b.amplitude = value;
            b.floor = b.floor.map(|f| f.min(value));
            if let Some(c) = s.certificate.as_mut().filter(|c| c.b_inf.is_some()) {
                c.b_inf = Some(value);
            }
        }
        "mu2" => {
            if s.feedback.mode != FeedbackMode::Mu {
                return Err(CliError::Config("axis mu2 needs mu feedback".into()));
            }
            s.feedback.mu2 = Some(value);
        }
        "h" => s.delay.h = value,
        "amplitude" => {
            if s.init.h_norm.is_some() {
                return Err(CliError::Config("axis amplitude conflicts with init.h_norm".into()));
            }
            s.init.amplitude = value;
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown sweep axis {other:?}; expected one of {}",
                SWEEP_AXES.join(", ")
            )))
        }
    }
    let text = toml::to_string(&s).map_err(|e| CliError::Config(e.to_string()))?;
    let mut checked = Scenario::parse(&text)?;
    checked.base_dir = s.base_dir;
    Ok(checked)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub rate_fit: Option<f64>,
    pub envelope_violations: Option<usize>,
    /// Run status, or `infeasible`.
    pub status: String,
}

impl SweepRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{}",
            fmt_f64(self.value),
            fmt_opt(self.rate_fit),
            self.envelope_violations.map(|v| v.to_string()).unwrap_or_default(),
            self.status
        )
    }
}

fn sweep_row(s: &Scenario, value: f64, seed: u64) -> Result<SweepRow, CliError> {
    match run_scenario(s, seed) {
        Ok(out) => Ok(SweepRow {
            value,
            rate_fit: out.summary.rate_fit,
            envelope_violations: out.summary.envelope_violations,
            status: out.summary.status,
        }),
        Err(CliError::Infeasible(reason)) => {
            info!("sweep value {value}: {reason}");
            Ok(SweepRow { value, rate_fit: None, envelope_violations: None, status: "infeasible".into() })
        }
        Err(e) => Err(e),
    }
}

/// Independent runs, one per value, in input order regardless of `jobs`.
pub fn cmd_sweep(
    s: &Scenario,
    axis: &str,
    values: &[f64],
    seed: u64,
    jobs: Option<usize>,
) -> Result<Vec<SweepRow>, CliError> {
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    let scenarios = values
        .iter()
        .map(|&v| apply_axis(s, axis, v))
        .collect::<Result<Vec<_>, _>>()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| CliError::Config(e.to_string()))?;
    let rows = pool.install(|| {
        scenarios
            .par_iter()
            .zip(values.par_iter())
            .map(|(sc, &v)| sweep_row(sc, v, seed))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut text = format!("{SWEEP_HEADER}\n");
    for r in &rows {
        text.push_str(&r.csv());
        text.push('\n');
    }
    save_bytes(&s.output_path(&s.output.sweep), text.as_bytes())?;
    print!("{text}");
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub dim: usize,
    pub dt: f64,
    pub t_end: f64,
    pub rel_error: f64,
    pub rel_error_half: f64,
    pub ratio: f64,
}

/// Linear stepper against `exp(T A)`; uses the scenario's time step,
/// horizon, feedback and unscaled initial state.
pub fn cmd_oracle_check(s: &Scenario, seed: u64) -> Result<OracleSummary, CliError> {
    let params = s.params()?;
    let feedback = s.feedback()?;
    let zeta0 = s.initial_state(seed)?;
    let (dt, t_end) = (s.time.dt, s.time.t_end);
    let report = oracle_compare(&params, &feedback, s.delay.n_rho, &zeta0, t_end, dt).map_err(|e| match e {
        Error::DimensionTooLarge { .. } | Error::InvalidParameter(_) | Error::GridMismatch(_) => {
            CliError::Config(e.to_string())
        }
        other => CliError::Numerical(other.to_string()),
    })?;
    let dim = s.grid()?.interior_count() * (s.delay.n_rho + 1);
    let summary = OracleSummary {
        dim,
        dt,
        t_end,
        rel_error: report.rel_error,
        rel_error_half: report.rel_error_half,
        ratio: report.ratio,
    };
    save_json(&s.output_path(&s.output.oracle), &summary)?;
    print!("{}", to_json(&summary));
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnSummary {
    pub nx: usize,
    pub ny: usize,
    pub sine_ratio: f64,
    pub c_emp: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Sine mode plus `samples` seeded random fields.
pub fn cmd_gn_estimate(s: &Scenario, samples: usize, seed: u64) -> Result<GnSummary, CliError> {
    let grid = s.grid()?;
    let l = grid.length;
    let mut sine = ScalarField::from_fn(grid, |x, y| {
        (std::f64::consts::PI * x / l).sin() * (std::f64::consts::PI * y / l).sin()
    });
    sine.enforce_trace();
    let numerical = |e: Error| CliError::Numerical(e.to_string());
    let sine_ratio = gn_ratio(&sine).map_err(numerical)?;
    let c_emp = gn_estimate(&grid, &gn_ensemble(&grid, samples, seed)).map_err(numerical)?;
    let summary = GnSummary { nx: grid.nx, ny: grid.ny, sine_ratio, c_emp, samples, seed };
    save_json(&s.output_path(&s.output.gn), &summary)?;
    print!("{}", to_json(&summary));
    Ok(summary)
}
