//! Energies, Lyapunov functional, boundary traces, decay-rate fits,
//! observability ratios and Gagliardo–Nirenberg estimates.

use serde::{Deserialize, Serialize};

use crate::certificate::PhysicalParams;
use crate::delay::{DelayLine, Taper};
use crate::error::{Error, Result};
use crate::field::{integrate_map, norms, Grid2D, ScalarField};
use crate::operators::Feedback;

/// Which energy functional is reported as `E_total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyMode {
    /// `½∫ζ² + (h/2)∫∫ b z²`
    Zk,
    /// `½∫ζ² + (ξh/2)∫∫ b z²`
    Perturbed,
    /// `½∫ζ² + (ξ/2)∫∫ a z²`
    Mu,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergySpec {
    pub mode: EnergyMode,
    pub factor: f64,
    pub weight: ScalarField,
}

impl EnergySpec {
    /// `b` is required by the `zk` and `perturbed` modes, `xi` by `perturbed`
    /// and `mu`.
    pub fn new(
        mode: EnergyMode,
        h: f64,
        a: &ScalarField,
        b: Option<&ScalarField>,
        xi: Option<f64>,
    ) -> Result<Self> {
        let need_b = || {
            b.cloned().ok_or_else(|| Error::InvalidParameter(format!("{mode:?} energy needs the b weight")))
        };
        let need_xi =
            || xi.ok_or_else(|| Error::InvalidParameter(format!("{mode:?} energy needs xi")));
        Ok(match mode {
            EnergyMode::Zk => Self { mode, factor: h / 2.0, weight: need_b()? },
            EnergyMode::Perturbed => Self { mode, factor: need_xi()? * h / 2.0, weight: need_b()? },
            EnergyMode::Mu => Self { mode, factor: need_xi()? / 2.0, weight: a.clone() },
        })
    }
}

/// Everything [`record`] needs besides the state.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsConfig {
    pub energy: EnergySpec,
    pub eta: f64,
    pub sigma: f64,
    /// Weight of `V₂`.
    pub lyapunov_weight: ScalarField,
    /// Damping coefficient `a` used in the observability integrals.
    pub damping: ScalarField,
}

impl DiagnosticsConfig {
    /// The energy that matches the feedback structure, with `η = σ = 0`.
    pub fn for_feedback(feedback: &Feedback, params: &PhysicalParams) -> Self {
        let h = params.delay;
        let (energy, a) = match feedback {
            Feedback::Zk { a, b } => {
                (EnergySpec { mode: EnergyMode::Zk, factor: h / 2.0, weight: b.clone() }, a)
            }
            Feedback::Perturbed { a, b, xi } => (
                EnergySpec { mode: EnergyMode::Perturbed, factor: xi * h / 2.0, weight: b.clone() },
                a,
            ),
            Feedback::Mu { a, xi, .. } => {
                (EnergySpec { mode: EnergyMode::Mu, factor: xi / 2.0, weight: a.clone() }, a)
            }
        };
        Self {
            lyapunov_weight: energy.weight.clone(),
            energy,
            eta: 0.0,
            sigma: 0.0,
            damping: a.clone(),
        }
    }

    pub fn with_lyapunov(mut self, eta: f64, sigma: f64) -> Self {
        self.eta = eta;
        self.sigma = sigma;
        self
    }
}

/// One row of diagnostics. The first ten fields form the CSV schema.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub t: f64,
    pub e_total: f64,
    pub e_state: f64,
    pub e_delay: f64,
    pub v_lyap: f64,
    pub v1: f64,
    pub v2: f64,
    /// `∫(∂xζ(0, y))² dy`
    pub flux_x0: f64,
    /// `∫(∂yζ(x, 0))² dx`
    pub flux_y0: f64,
    pub linf_state: f64,
    /// `∫ a ζ²`
    pub damped_state: f64,
    /// `∫ a ζ(t − h)²`
    pub damped_delayed: f64,
}

impl EnergyRecord {
    pub const CSV_HEADER: &'static str =
        "t,E_total,E_state,E_delay,V_lyap,V1,V2,flux_x0,flux_y0,linf_state";

    pub fn csv_values(&self) -> [f64; 10] {
        [
            self.t,
            self.e_total,
            self.e_state,
            self.e_delay,
            self.v_lyap,
            self.v1,
            self.v2,
            self.flux_x0,
            self.flux_y0,
            self.linf_state,
        ]
    }
}

/// `(½∫ζ², factor·∫∫ weight·z²)`.
pub fn energy(zeta: &ScalarField, line: &DelayLine, spec: &EnergySpec) -> Result<(f64, f64)> {
    zeta.grid().check_same(line.grid())?;
    let e_state = 0.5 * integrate_map(zeta, |v| v * v);
    let e_delay = line.delay_energy(&spec.weight, spec.factor, Taper::None)?;
    Ok((e_state, e_delay))
}

/// `(V, V₁, V₂)` with `V₁ = ∫xζ²`, `V₂ = (h/2)∫∫(1−ρ)·weight·z²` and
/// `V = E + ηV₁ + σV₂`.
pub fn lyapunov(
    zeta: &ScalarField,
    line: &DelayLine,
    e_total: f64,
    eta: f64,
    sigma: f64,
    weight: &ScalarField,
) -> Result<(f64, f64, f64)> {
    if !(eta >= 0.0 && sigma >= 0.0) {
        return Err(Error::InvalidParameter("eta and sigma must be nonnegative".into()));
    }
    let g = *zeta.grid();
    let (sx, sy) = g.shape();
    let mut v1 = 0.0;
    for j in 0..sy {
        for i in 0..sx {
            v1 += g.trapezoid_weight(i, j) * g.x(i) * zeta.get(i, j).powi(2);
        }
    }
    let v2 = line.delay_energy(weight, line.delay() / 2.0, Taper::Linear)?;
    Ok((e_total + eta * v1 + sigma * v2, v1, v2))
}

/// `(∫(∂xζ(0,y))² dy, ∫(∂yζ(x,0))² dx)` with second-order one-sided traces.
pub fn boundary_fluxes(zeta: &ScalarField) -> (f64, f64) {
    let g = *zeta.grid();
    let (sx, sy) = g.shape();
    let (dx, dy) = (g.dx(), g.dy());
    let trap = |k: usize, n: usize| if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
    let mut fx = 0.0;
    for j in 0..sy {
        let d = (-3.0 * zeta.get(0, j) + 4.0 * zeta.get(1, j) - zeta.get(2, j)) / (2.0 * dx);
        fx += trap(j, sy) * dy * d * d;
    }
    let mut fy = 0.0;
    for i in 0..sx {
        let d = (-3.0 * zeta.get(i, 0) + 4.0 * zeta.get(i, 1) - zeta.get(i, 2)) / (2.0 * dy);
        fy += trap(i, sx) * dx * d * d;
    }
    (fx, fy)
}

pub fn record(
    t: f64,
    zeta: &ScalarField,
    line: &DelayLine,
    cfg: &DiagnosticsConfig,
) -> Result<EnergyRecord> {
    let (e_state, e_delay) = energy(zeta, line, &cfg.energy)?;
    let e_total = e_state + e_delay;
    let (v_lyap, v1, v2) = lyapunov(zeta, line, e_total, cfg.eta, cfg.sigma, &cfg.lyapunov_weight)?;
    let (flux_x0, flux_y0) = boundary_fluxes(zeta);
    let a = &cfg.damping;
    let g = *zeta.grid();
    let weighted = |f: &[f64]| {
        let (sx, sy) = g.shape();
        let mut s = 0.0;
        for j in 0..sy {
            for i in 0..sx {
                let k = g.index(i, j);
                s += g.trapezoid_weight(i, j) * a.values()[k] * f[k] * f[k];
            }
        }
        s
    };
    Ok(EnergyRecord {
        t,
        e_total,
        e_state,
        e_delay,
        v_lyap,
        v1,
        v2,
        flux_x0,
        flux_y0,
        linf_state: zeta.linf(),
        damped_state: weighted(zeta.values()),
        damped_delayed: weighted(line.slot(line.n_rho())?),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Negated slope of `ln E` against `t`; positive means decay.
    pub rate: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit in `ln E`.
    pub residual: f64,
    pub samples: usize,
}

/// Least-squares fit of `ln E_total` on `[t_a, t_b]`; the default window is
/// the last 60% of the recorded time span.
pub fn fit_decay_rate(records: &[EnergyRecord], window: Option<(f64, f64)>) -> Result<RateFit> {
    let t: Vec<f64> = records.iter().map(|r| r.t).collect();
    let e: Vec<f64> = records.iter().map(|r| r.e_total).collect();
    fit_exponential(&t, &e, window)
}

pub fn fit_exponential(t: &[f64], e: &[f64], window: Option<(f64, f64)>) -> Result<RateFit> {
    if t.is_empty() {
        return Err(Error::RateFit("no samples".into()));
    }
    let (ta, tb) = window.unwrap_or_else(|| {
        let (first, last) = (t[0], t[t.len() - 1]);
        (first + 0.4 * (last - first), last)
    });
    if !(tb > ta) {
        return Err(Error::RateFit(format!("degenerate window [{ta}, {tb}]")));
    }
    let pts: Vec<(f64, f64)> =
        t.iter().zip(e).filter(|(&t, _)| t >= ta && t <= tb).map(|(&t, &e)| (t, e)).collect();
    if pts.len() < 10 {
        return Err(Error::RateFit(format!("need at least 10 samples in the window, got {}", pts.len())));
    }
    if pts.iter().any(|&(_, e)| !(e > 0.0)) {
        return Err(Error::RateFit("energy must be positive on the window".into()));
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(t, e) in &pts {
        sxy += (t - tm) * (e.ln() - ym);
        sxx += (t - tm) * (t - tm);
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * tm;
    let ss: f64 = pts.iter().map(|&(t, e)| (e.ln() - intercept - slope * t).powi(2)).sum();
    Ok(RateFit { rate: -slope, intercept, residual: (ss / n).sqrt(), samples: pts.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservabilityStatus {
    Ok,
    /// `rhs = 0` while `lhs > 0`.
    Violation,
    /// Both sides vanish.
    Undefined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observability {
    pub lhs: f64,
    pub rhs: f64,
    pub k_emp: Option<f64>,
    pub status: ObservabilityStatus,
}

/// `lhs = ∫₀ᵀ‖ζ‖² dt` against
/// `rhs = ∫flux_x0 + ∫flux_y0 + ∫∫a(ζ² + ζ²(t−h))`, trapezoid in time over
/// the records with `t ≤ T`.
pub fn observability_ratio(records: &[EnergyRecord], t_max: f64) -> Observability {
    let rs: Vec<&EnergyRecord> = records.iter().filter(|r| r.t <= t_max).collect();
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for w in rs.windows(2) {
        let dt = w[1].t - w[0].t;
        lhs += 0.5 * dt * (2.0 * w[0].e_state + 2.0 * w[1].e_state);
        let side = |r: &EnergyRecord| r.flux_x0 + r.flux_y0 + r.damped_state + r.damped_delayed;
        rhs += 0.5 * dt * (side(w[0]) + side(w[1]));
    }
    let (k_emp, status) = if rhs > 0.0 {
        (Some(lhs / rhs), ObservabilityStatus::Ok)
    } else if lhs > 0.0 {
        (None, ObservabilityStatus::Violation)
    } else {
        (None, ObservabilityStatus::Undefined)
    };
    Observability { lhs, rhs, k_emp, status }
}

/// `‖f‖_{L³} / (‖f‖_{H¹}^{1/3} ‖f‖_{L²}^{2/3})` with the full `H¹` norm.
pub fn gn_ratio(f: &ScalarField) -> Result<f64> {
    if f.is_zero() {
        return Err(Error::ZeroField);
    }
    if !f.satisfies_trace() {
        return Err(Error::InvalidParameter("Gagliardo-Nirenberg fields must vanish on the boundary".into()));
    }
    let n = norms(f);
    Ok(n.l3 / (n.h1().cbrt() * n.l2.powf(2.0 / 3.0)))
}

/// Largest ratio over `fields` plus the `sin(πx/L) sin(πy/L)` mode on `grid`.
pub fn gn_estimate(grid: &Grid2D, fields: &[ScalarField]) -> Result<f64> {
    let l = grid.length;
    let mut mode = ScalarField::from_fn(*grid, |x, y| {
        (std::f64::consts::PI * x / l).sin() * (std::f64::consts::PI * y / l).sin()
    });
    mode.enforce_trace();
    let mut best = gn_ratio(&mode)?;
    for f in fields {
        best = best.max(gn_ratio(f)?);
    }
    Ok(best)
}
