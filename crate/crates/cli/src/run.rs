//! Scenario execution shared by `simulate` and `sweep`.

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use zkdamper_core::certificate::xi_interval_mu;
use zkdamper_core::diagnostics::{fit_decay_rate, gn_estimate};
use zkdamper_core::stepper::Envelope;
use zkdamper_core::{
    certify_mu, certify_zk, Error, Grid2D, MuCertInputs, RunStatus, ScalarField, Simulation,
    StabilityCertificate, Trajectory, ZkCertInputs,
};

use crate::config::{FeedbackMode, HistoryMode, Scenario};
use crate::CliError;

/// Contents of the JSON summary written next to the energy CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Fitted decay rate of `E_total`; null when no fit is defined.
    pub rate_fit: Option<f64>,
    pub rate_residual: Option<f64>,
    pub theta_cert: Option<f64>,
    pub kappa_cert: Option<f64>,
    pub envelope_violations: Option<usize>,
    /// `completed`, `blow_up` or `solver_failure`.
    pub status: String,
    pub rate_fit_defined: bool,
    pub rate_fit_note: Option<String>,
    pub envelope_tolerance: Option<f64>,
    pub initial_norm: f64,
    pub radius_ok: Option<bool>,
    pub t_final: f64,
    pub records: usize,
    pub status_detail: Option<String>,
}

#[derive(Debug)]
pub struct Outcome {
    pub trajectory: Trajectory,
    pub summary: Summary,
    pub certificate: Option<StabilityCertificate>,
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

/// Random smooth fields vanishing on the boundary: sums of Gaussian bumps
/// times `sin(πx/L) sin(πy/L)`.
pub fn gn_ensemble(grid: &Grid2D, samples: usize, seed: u64) -> Vec<ScalarField> {
    let l = grid.length;
    let pi = std::f64::consts::PI;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| {
            let bumps: Vec<[f64; 4]> = (0..rng.gen_range(1..=4))
                .map(|_| {
                    [
                        rng.gen_range(0.15..0.85) * l,
                        rng.gen_range(0.15..0.85) * l,
                        rng.gen_range(0.05..0.3) * l,
                        rng.gen_range(-1.0..1.0),
                    ]
                })
                .collect();
            let mut f = ScalarField::from_fn(*grid, |x, y| {
                let g: f64 = bumps
                    .iter()
                    .map(|[cx, cy, w, c]| c * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * w * w)).exp())
                    .sum();
                g * (pi * x / l).sin() * (pi * y / l).sin()
            });
            f.enforce_trace();
            f
        })
        .collect()
}

/// The attached certificate, if the scenario has a `[certificate]` section.
/// Infeasibility is reported inside the certificate.
pub fn certificate(s: &Scenario, zeta0: Option<&ScalarField>) -> Result<Option<StabilityCertificate>, CliError> {
    let Some(sec) = &s.certificate else { return Ok(None) };
    let params = s.params()?;
    let xi = sec
        .xi
        .or(s.feedback.xi)
        .ok_or_else(|| config_err("certificate needs xi (in [certificate] or [feedback])"))?;
    let cert = match s.feedback.mode {
        FeedbackMode::Zk | FeedbackMode::Perturbed => {
            let mu = sec.mu.ok_or_else(|| config_err("zk certificate needs mu"))?;
            let eps = sec.eps.ok_or_else(|| config_err("zk certificate needs eps"))?;
            let b_inf = match sec.b_inf {
                Some(b) => b,
                None => s.b_inf()?,
            };
            let inputs = ZkCertInputs { eta: sec.eta, ..ZkCertInputs::new(xi, mu, eps, b_inf) };
            match certify_zk(&params, &inputs) {
                Ok(c) => c,
                Err(Error::Infeasible(reason)) => StabilityCertificate::infeasible(xi, reason),
                Err(e) => return Err(config_err(e)),
            }
        }
        FeedbackMode::Mu => {
            let r = sec.r.ok_or_else(|| config_err("mu certificate needs r"))?;
            let gn_c = match sec.gn_c {
                Some(c) => c,
                None => {
                    let grid = s.grid()?;
                    let fields: Vec<ScalarField> =
                        zeta0.filter(|z| !z.is_zero()).into_iter().cloned().collect();
                    let c = gn_estimate(&grid, &fields).map_err(config_err)?;
                    info!("gn_C not given; using the grid estimate {c}");
                    c
                }
            };
            let inputs = MuCertInputs {
                mu1: s.feedback.mu1.unwrap_or_default(),
                mu2: s.feedback.mu2.unwrap_or_default(),
                xi,
                gn_c,
                r,
            };
            certify_mu(&params, &inputs).map_err(config_err)?
        }
    };
    Ok(Some(cert))
}

/// Reason the scenario cannot be run as configured, if any.
pub fn infeasibility(s: &Scenario, cert: Option<&StabilityCertificate>) -> Option<String> {
    if s.feedback.mode == FeedbackMode::Mu {
        let fb = &s.feedback;
        let (mu1, mu2, xi) = (fb.mu1.unwrap_or_default(), fb.mu2.unwrap_or_default(), fb.xi.unwrap_or_default());
        match xi_interval_mu(mu1, mu2, s.delay.h) {
            None => return Some(format!("mu1 = {mu1} must exceed mu2 = {mu2}")),
            Some((lo, hi)) if !(xi > lo && xi < hi) => {
                return Some(format!("xi = {xi} outside ({lo}, {hi})"));
            }
            _ => {}
        }
    }
    cert.filter(|c| !c.feasible).map(|c| {
        c.diagnostics.notes.first().cloned().unwrap_or_else(|| "certificate infeasible".into())
    })
}

pub fn run_scenario(s: &Scenario, seed: u64) -> Result<Outcome, CliError> {
    let params = s.params()?;
    let feedback = s.feedback()?;
    let scheme = s.scheme();
    let history = s.history()?;
    let mut zeta0 = s.initial_state(seed)?;

    let cert = certificate(s, Some(&zeta0))?;
    if let Some(reason) = infeasibility(s, cert.as_ref()) {
        return Err(CliError::Infeasible(reason));
    }

    let build = |z: &ScalarField| {
        Simulation::new(params, feedback.clone(), s.delay.n_rho, scheme.clone(), z, history.clone())
            .map_err(config_err)
    };
    if let Some(target) = s.init.h_norm {
        if s.delay.history == HistoryMode::File {
            return Err(config_err("init.h_norm cannot rescale a history file"));
        }
        let norm = build(&zeta0)?.energy_norm();
        if norm == 0.0 {
            return Err(config_err("init.h_norm needs a nonzero initial state"));
        }
        zeta0 = zeta0.scaled(target / norm);
    }

    let mut sim = build(&zeta0)?;
    let tolerance = s.certificate.as_ref().map(|c| c.envelope_tolerance);
    if let Some(c) = cert.as_ref().filter(|c| c.feasible) {
        if let (Some(eta), Some(sigma)) = (c.eta, c.sigma) {
            let diag = zkdamper_core::diagnostics::DiagnosticsConfig::for_feedback(&feedback, &params)
                .with_lyapunov(eta, sigma);
            sim = sim.with_diagnostics(diag);
        }
        // the zk-mode decay bound only holds after T_min, so no envelope there
        if s.feedback.mode != FeedbackMode::Zk {
            if let (Some(theta), Some(kappa)) = (c.theta, c.kappa) {
                let radius = c.assumed_constants.get("r").copied();
                sim = sim.with_envelope(Envelope {
                    theta,
                    kappa,
                    tolerance: tolerance.unwrap_or(1.05),
                    radius,
                });
            }
        }
    }

    let trajectory = sim.run();
    let (rate_fit, rate_residual, note) = match fit_decay_rate(&trajectory.records, None) {
        Ok(f) => (Some(f.rate), Some(f.residual), None),
        Err(e) => (None, None, Some(e.to_string())),
    };
    let status_detail = match &trajectory.status {
        RunStatus::Completed => None,
        RunStatus::BlowUp { t, linf } => Some(format!("max |zeta| = {linf:e} at t = {t}")),
        RunStatus::SolverFailure { message } => Some(message.clone()),
    };
    if let Some(d) = &status_detail {
        warn!("{}: {d}", trajectory.status.label());
    }
    let summary = Summary {
        rate_fit,
        rate_residual,
        theta_cert: cert.as_ref().and_then(|c| c.theta),
        kappa_cert: cert.as_ref().and_then(|c| c.kappa),
        envelope_violations: trajectory.envelope_violations,
        status: trajectory.status.label().into(),
        rate_fit_defined: rate_fit.is_some(),
        rate_fit_note: note,
        envelope_tolerance: trajectory.envelope_violations.and(tolerance),
        initial_norm: trajectory.initial_norm,
        radius_ok: trajectory.radius_ok,
        t_final: trajectory.records.last().map_or(0.0, |r| r.t),
        records: trajectory.records.len(),
        status_detail,
    };
    Ok(Outcome { trajectory, summary, certificate: cert })
}
