//! Time integration of the delayed ZK system.
//!
//! Each step is Crank–Nicolson in the linear part and second-order
//! extrapolated in the nonlinear flux:
//!
//! ```text
//! (ζⁿ⁺¹ − ζⁿ)/Δt = −D ζ̄ − s ζ̄ − d z̄_N − N(1.5ζⁿ − 0.5ζⁿ⁻¹)
//! ```
//!
//! where bars are time averages, `s` and `d` are the instantaneous and delayed
//! feedback coefficients and `z_N ≈ ζ(t − h)` is the last history cell. With
//! [`DelayCoupling::CrankNicolson`] the history cells are advanced by the
//! implicit box scheme together with ζ; their recurrence is lower-bidiagonal,
//! so they are eliminated and the left matrix stays `nx·ny` square and banded.
//! With [`DelayCoupling::Explicit`] the delayed term is taken at the old time
//! level and the history is advanced afterwards along characteristics.

mod banded;
mod expm;

pub use banded::{BandMatrix, BandedLu};
pub use expm::expm;

use log::{debug, warn};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::certificate::PhysicalParams;
use crate::delay::DelayLine;
use crate::diagnostics::{self, DiagnosticsConfig, EnergyRecord};
use crate::error::{Error, Result};
use crate::field::{Grid2D, ScalarField};
pub use crate::operators::NonlinearForm;
use crate::operators::{
    assemble_generator, dispersive_interior, dispersive_triplets, nonlinear_interior, Feedback,
};

/// `‖ζ‖∞` above which a run is declared blown up.
pub const BLOW_UP_THRESHOLD: f64 = 1e6;
/// Largest accepted time step.
pub const MAX_DT: f64 = 0.1;
/// Dimension guard for [`oracle_compare`].
pub const ORACLE_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayCoupling {
    #[default]
    CrankNicolson,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub dt: f64,
    pub t_end: f64,
    pub solver_tol: f64,
    pub record_stride: usize,
    pub snapshot_stride: Option<usize>,
    /// Include the quadratic flux; `false` gives the linear semigroup.
    pub nonlinear: bool,
    pub nonlinear_form: NonlinearForm,
    pub delay_coupling: DelayCoupling,
}

impl SchemeConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            solver_tol: 1e-10,
            record_stride: 1,
            snapshot_stride: None,
            nonlinear: true,
            nonlinear_form: NonlinearForm::Conservative,
            delay_coupling: DelayCoupling::CrankNicolson,
        }
    }

    pub fn linear(mut self) -> Self {
        self.nonlinear = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(Error::InvalidParameter(format!("dt must lie in (0, {MAX_DT}], got {}", self.dt)));
        }
        if !(self.t_end >= self.dt) {
            return Err(Error::InvalidParameter(format!("t_end = {} is shorter than dt", self.t_end)));
        }
        if !(self.solver_tol > 0.0 && self.solver_tol <= 1e-6) {
            return Err(Error::InvalidParameter(format!(
                "solver_tol must lie in (0, 1e-6], got {}",
                self.solver_tol
            )));
        }
        if self.record_stride == 0 || self.snapshot_stride == Some(0) {
            return Err(Error::InvalidParameter("strides must be positive".into()));
        }
        Ok(())
    }

    pub fn step_count(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil() as usize
    }
}

/// Initial history `z₀(ρ) = ζ(−ρh)`.
#[derive(Debug, Clone, PartialEq)]
pub enum History {
    /// `z₀ ≡ ζ₀`.
    Frozen,
    /// Snapshots evenly spaced on `ρ ∈ [0, 1]`, oldest first.
    Snapshots(Vec<ScalarField>),
}

/// Certified envelope `E(t) ≤ tolerance · κ E(0) e^{−2θt}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub theta: f64,
    pub kappa: f64,
    pub tolerance: f64,
    /// Certified radius of the initial data, if any.
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    BlowUp { t: f64, linf: f64 },
    SolverFailure { message: String },
}

impl RunStatus {
    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::BlowUp { .. } => "blow_up",
            RunStatus::SolverFailure { .. } => "solver_failure",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<EnergyRecord>,
    pub snapshots: Vec<(f64, ScalarField)>,
    pub status: RunStatus,
    /// Records above the envelope, when one was attached.
    pub envelope_violations: Option<usize>,
    /// `‖(ζ₀, z₀)‖` in the energy-space product.
    pub initial_norm: f64,
    /// Whether the initial norm is below the certified radius.
    pub radius_ok: Option<bool>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }
}

pub struct Simulation {
    grid: Grid2D,
    params: PhysicalParams,
    feedback: Feedback,
    scheme: SchemeConfig,
    left: BandMatrix,
    lu: BandedLu,
    s: Vec<f64>,
    d: Vec<f64>,
    zeta: Vec<f64>,
    zeta_prev: Option<Vec<f64>>,
    line: DelayLine,
    steps: usize,
    diagnostics: DiagnosticsConfig,
    envelope: Option<Envelope>,
}

impl Simulation {
    pub fn new(
        params: PhysicalParams,
        feedback: Feedback,
        n_rho: usize,
        scheme: SchemeConfig,
        zeta0: &ScalarField,
        history: History,
    ) -> Result<Self> {
        params.validate()?;
        scheme.validate()?;
        let grid = *feedback.grid();
        grid.check_same(zeta0.grid())?;
        if (grid.length - params.length).abs() > 1e-12 * params.length {
            return Err(Error::GridMismatch(format!(
                "grid length {} differs from L = {}",
                grid.length, params.length
            )));
        }
        if !zeta0.satisfies_trace() {
            return Err(Error::InvalidParameter("initial state must vanish on the boundary".into()));
        }
        let mut zeta0 = zeta0.clone();
        zeta0.enforce_trace();
        let zeta0 = &zeta0;
        feedback.validate()?;
        if n_rho < 2 {
            return Err(Error::InvalidParameter(format!("n_rho must be at least 2, got {n_rho}")));
        }

        let (dt, h) = (scheme.dt, params.delay);
        let mut line = match scheme.delay_coupling {
            DelayCoupling::CrankNicolson => DelayLine::crank_nicolson(grid, n_rho, h, dt)?,
            DelayCoupling::Explicit => DelayLine::new(grid, n_rho, h, dt)?,
        };
        match history {
            History::Frozen => line.init_frozen(zeta0, 0.0)?,
            History::Snapshots(snaps) => line.init_from_snapshots(zeta0, &snaps, 0.0)?,
        }

        let s = feedback.instant_coeff();
        let d = feedback.delayed_coeff();
        let beta_n = match scheme.delay_coupling {
            DelayCoupling::CrankNicolson => line.cn_elimination()?.0,
            DelayCoupling::Explicit => 0.0,
        };
        let m = grid.interior_count();
        let bw = grid.nx + 1;
        let mut left = BandMatrix::zeros(m, bw, bw);
        for k in 0..m {
            left.add(k, k, 1.0 + 0.5 * dt * (s[k] + beta_n * d[k]));
        }
        for (r, c, v) in dispersive_triplets(&grid, &params) {
            left.add(r, c, 0.5 * dt * v);
        }
        let lu = BandedLu::factor(&left)?;
        let diagnostics = DiagnosticsConfig::for_feedback(&feedback, &params);
        debug!("simulation ready: {}x{} grid, n_rho = {n_rho}, dt = {dt}", grid.nx, grid.ny);
        Ok(Self {
            grid,
            params,
            feedback,
            scheme,
            left,
            lu,
            s,
            d,
            zeta: zeta0.interior(),
            zeta_prev: None,
            line,
            steps: 0,
            diagnostics,
            envelope: None,
        })
    }

    pub fn with_diagnostics(mut self, config: DiagnosticsConfig) -> Self {
        self.diagnostics = config;
        self
    }

    pub fn with_envelope(mut self, envelope: Envelope) -> Self {
        self.envelope = Some(envelope);
        self
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.scheme.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn feedback(&self) -> &Feedback {
        &self.feedback
    }

    pub fn state(&self) -> ScalarField {
        ScalarField::from_interior(self.grid, &self.zeta)
    }

    pub fn delay_line(&self) -> &DelayLine {
        &self.line
    }

    /// Interior ζ followed by the interior values of history cells `1..=n_rho`.
    pub fn stacked_state(&self) -> Vec<f64> {
        let mut out = self.zeta.clone();
        for k in 1..=self.line.n_rho() {
            let slot = self.line.slot(k).expect("initialized");
            out.extend(ScalarField::from_values(self.grid, slot.to_vec()).expect("sized").interior());
        }
        out
    }

    /// Norm of `(ζ, z)` in the energy-space product (history weight from the
    /// feedback mode).
    pub fn energy_norm(&self) -> f64 {
        let g = self.grid;
        let area = g.dx() * g.dy();
        let m = g.interior_count();
        let u = self.stacked_state();
        let cz = self.feedback.z_weight(self.params.delay) / self.line.n_rho() as f64;
        let zeta2: f64 = u[..m].iter().map(|v| v * v).sum();
        let z2: f64 = u[m..].iter().map(|v| v * v).sum();
        (area * (zeta2 + cz * z2)).sqrt()
    }

    pub fn record(&self) -> Result<EnergyRecord> {
        diagnostics::record(self.time(), &self.state(), &self.line, &self.diagnostics)
    }

    pub fn step(&mut self) -> Result<()> {
        let g = self.grid;
        let m = g.interior_count();
        let dt = self.scheme.dt;
        let mut rhs = vec![0.0; m];
        dispersive_interior(&g, &self.params, &self.zeta, &mut rhs);
        for k in 0..m {
            rhs[k] = self.zeta[k] - 0.5 * dt * (rhs[k] + self.s[k] * self.zeta[k]);
        }

        let z_last = self.line.slot(self.line.n_rho())?;
        let z_last = interior_of(&g, z_last);
        match self.scheme.delay_coupling {
            DelayCoupling::CrankNicolson => {
                let (_, r) = self.line.cn_elimination()?;
                let r = interior_of(&g, &r);
                for k in 0..m {
                    rhs[k] -= 0.5 * dt * self.d[k] * (z_last[k] + r[k]);
                }
            }
            DelayCoupling::Explicit => {
                for k in 0..m {
                    rhs[k] -= dt * self.d[k] * z_last[k];
                }
            }
        }

        if self.scheme.nonlinear {
            let star: Vec<f64> = match &self.zeta_prev {
                Some(prev) => self.zeta.iter().zip(prev).map(|(a, b)| 1.5 * a - 0.5 * b).collect(),
                None => self.zeta.clone(),
            };
            let mut flux = vec![0.0; m];
            nonlinear_interior(&g, &star, self.scheme.nonlinear_form, &mut flux);
            for k in 0..m {
                rhs[k] -= dt * flux[k];
            }
        }

        let next = self.solve(&rhs)?;
        let linf = next.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let t_next = (self.steps + 1) as f64 * dt;
        if !(linf <= BLOW_UP_THRESHOLD) {
            return Err(Error::BlowUp { t: t_next, linf });
        }
        self.line.push_values(ScalarField::from_interior(g, &next).values())?;
        self.zeta_prev = Some(std::mem::replace(&mut self.zeta, next));
        self.steps += 1;
        Ok(())
    }

    /// Banded solve plus one step of iterative refinement; fails when the
    /// relative residual exceeds `solver_tol`.
    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut x = rhs.to_vec();
        self.lu.solve(&mut x);
        let mut ax = vec![0.0; x.len()];
        self.left.matvec(&x, &mut ax);
        let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        self.lu.solve(&mut r);
        for (xi, ri) in x.iter_mut().zip(&r) {
            *xi += ri;
        }
        self.left.matvec(&x, &mut ax);
        let scale = rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let res = rhs.iter().zip(&ax).fold(0.0f64, |a, (b, v)| a.max((b - v).abs()));
        if !res.is_finite() || res > self.scheme.solver_tol * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::SolverFailure(format!("relative residual {:.3e}", res / scale)));
        }
        Ok(x)
    }

    /// Runs to `t_end`, recording diagnostics every `record_stride` steps and
    /// at the final step.
    pub fn run(mut self) -> Trajectory {
        let n_steps = self.scheme.step_count();
        let initial_norm = self.energy_norm();
        let radius_ok = self.envelope.and_then(|e| e.radius).map(|r| initial_norm <= r);
        if radius_ok == Some(false) {
            warn!("initial data norm {initial_norm} exceeds the certified radius");
        }
        let mut records = Vec::new();
        let mut snapshots = Vec::new();
        let mut status = RunStatus::Completed;
        let push_record = |sim: &Simulation, records: &mut Vec<EnergyRecord>| -> Result<()> {
            records.push(sim.record()?);
            Ok(())
        };
        if let Err(e) = push_record(&self, &mut records) {
            status = RunStatus::SolverFailure { message: e.to_string() };
        }
        if self.scheme.snapshot_stride.is_some() {
            snapshots.push((0.0, self.state()));
        }
        if status == RunStatus::Completed {
            for n in 1..=n_steps {
                match self.step() {
                    Ok(()) => {}
                    Err(Error::BlowUp { t, linf }) => {
                        warn!("blow-up at t = {t}: max |zeta| = {linf}");
                        status = RunStatus::BlowUp { t, linf };
                        break;
                    }
                    Err(e) => {
                        status = RunStatus::SolverFailure { message: e.to_string() };
                        break;
                    }
                }
                if n % self.scheme.record_stride == 0 || n == n_steps {
                    if let Err(e) = push_record(&self, &mut records) {
                        status = RunStatus::SolverFailure { message: e.to_string() };
                        break;
                    }
                }
                if let Some(stride) = self.scheme.snapshot_stride {
                    if n % stride == 0 {
                        snapshots.push((self.time(), self.state()));
                    }
                }
            }
        }
        let envelope_violations = self.envelope.map(|env| count_violations(&records, &env));
        Trajectory { records, snapshots, status, envelope_violations, initial_norm, radius_ok }
    }
}

fn interior_of(grid: &Grid2D, values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.interior_count());
    for j in 1..=grid.ny {
        let row = grid.index(0, j);
        out.extend_from_slice(&values[row + 1..row + 1 + grid.nx]);
    }
    out
}

/// Number of records with `E_total(t) > tolerance · κ E_total(0) e^{−2θt}`.
pub fn count_violations(records: &[EnergyRecord], env: &Envelope) -> usize {
    let Some(first) = records.first() else { return 0 };
    let e0 = first.e_total;
    records
        .iter()
        .filter(|r| r.e_total > env.tolerance * env.kappa * e0 * (-2.0 * env.theta * r.t).exp())
        .count()
}

/// Convenience wrapper for [`Simulation::run`].
pub fn simulate(sim: Simulation) -> Trajectory {
    sim.run()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleReport {
    /// `‖U_dt(T) − U(T)‖ / ‖U(T)‖`
    pub rel_error: f64,
    /// Same with `dt/2`.
    pub rel_error_half: f64,
    /// `rel_error / rel_error_half`; NaN when both errors are zero.
    pub ratio: f64,
}

/// Compares the linear Crank–Nicolson stepper with `exp(T A) U₀` for the
/// assembled generator `A`, with frozen initial history.
pub fn oracle_compare(
    params: &PhysicalParams,
    feedback: &Feedback,
    n_rho: usize,
    zeta0: &ScalarField,
    t_end: f64,
    dt: f64,
) -> Result<OracleReport> {
    let grid = *feedback.grid();
    let gen = assemble_generator(&grid, params, feedback, n_rho)?;
    if gen.dim() > ORACLE_LIMIT {
        return Err(Error::DimensionTooLarge { dim: gen.dim(), limit: ORACLE_LIMIT });
    }
    let a = gen.to_dense()? * t_end;
    let u0 = {
        let z = zeta0.interior();
        let mut u = Vec::with_capacity(gen.dim());
        for _ in 0..=n_rho {
            u.extend_from_slice(&z);
        }
        DVector::from_vec(u)
    };
    let exact = expm(&a) * &u0;
    let norm = exact.norm();

    let run = |dt: f64| -> Result<f64> {
        let scheme = SchemeConfig { dt, t_end, ..SchemeConfig::new(dt, t_end).linear() };
        let mut sim = Simulation::new(*params, feedback.clone(), n_rho, scheme.clone(), zeta0, History::Frozen)?;
        for _ in 0..scheme.step_count() {
            sim.step()?;
        }
        let u = DVector::from_vec(sim.stacked_state());
        let diff = (u - &exact).norm();
        Ok(if norm > 0.0 { diff / norm } else { diff })
    };
    let e1 = run(dt)?;
    let e2 = run(dt / 2.0)?;
    Ok(OracleReport { rel_error: e1, rel_error_half: e2, ratio: e1 / e2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::EnergyMode;
    use crate::operators::assemble_generator;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn unit_params() -> PhysicalParams {
        PhysicalParams::new(1.0, 1.0, 1.0, 1.0).unwrap()
    }

    fn sine(g: Grid2D) -> ScalarField {
        ScalarField::from_fn(g, |x, y| (PI * x).sin() * (PI * y).sin())
    }

    fn mu(g: Grid2D, a: f64) -> Feedback {
        Feedback::Mu { a: ScalarField::constant(g, a), mu1: 1.0, mu2: 0.5, xi: 1.0 }
    }

    #[test]
    fn zero_state_is_a_fixed_point() {
        let g = Grid2D::square(1.0, 8).unwrap();
        let mut sim = Simulation::new(
            unit_params(),
            mu(g, 1.0),
            4,
            SchemeConfig::new(0.01, 0.1),
            &ScalarField::zeros(g),
            History::Frozen,
        )
        .unwrap();
        for _ in 0..10 {
            sim.step().unwrap();
        }
        assert!(sim.state().is_zero());
        assert!(sim.stacked_state().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_schemes() {
        let g = Grid2D::square(1.0, 6).unwrap();
        let z = ScalarField::zeros(g);
        let mk = |scheme: SchemeConfig| Simulation::new(unit_params(), mu(g, 1.0), 4, scheme, &z, History::Frozen);
        assert!(mk(SchemeConfig::new(0.2, 1.0)).is_err());
        assert!(mk(SchemeConfig::new(0.01, 0.001)).is_err());
        assert!(mk(SchemeConfig { solver_tol: 1e-3, ..SchemeConfig::new(0.01, 1.0) }).is_err());
        let not_traced = ScalarField::constant(g, 1.0);
        assert!(Simulation::new(unit_params(), mu(g, 1.0), 4, SchemeConfig::new(0.01, 1.0), &not_traced, History::Frozen).is_err());
    }

    #[test]
    fn undamped_linear_energy_never_increases() {
        let g = Grid2D::square(1.0, 12).unwrap();
        let fb = Feedback::Zk { a: ScalarField::zeros(g), b: ScalarField::zeros(g) };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut z0 = ScalarField::from_fn(g, |_, _| rng.gen_range(-1.0..1.0));
        z0.enforce_trace();
        let scheme = SchemeConfig::new(5e-3, 1.0).linear();
        let mut sim = Simulation::new(unit_params(), fb, 4, scheme, &z0, History::Frozen).unwrap();
        let mut e = sim.record().unwrap().e_state;
        for _ in 0..100 {
            sim.step().unwrap();
            let next = sim.record().unwrap().e_state;
            assert!(next <= e * (1.0 + 1e-10), "{next} > {e}");
            e = next;
        }
    }

    #[test]
    fn single_step_matches_assembled_generator() {
        let g = Grid2D::square(1.0, 8).unwrap();
        let p = PhysicalParams::new(1.2, 0.7, 1.0, 0.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = ScalarField::from_fn(g, |_, _| rng.gen_range(0.0..2.0));
        let b = ScalarField::from_fn(g, |_, _| rng.gen_range(0.0..1.0));
        let fb = Feedback::Perturbed { a, b, xi: 1.3 };
        let mut z0 = ScalarField::from_fn(g, |_, _| rng.gen_range(-1.0..1.0));
        z0.enforce_trace();
        let dt = 0.01;
        let n_rho = 4;
        let mut sim = Simulation::new(p, fb.clone(), n_rho, SchemeConfig::new(dt, 1.0).linear(), &z0, History::Frozen).unwrap();
        let u0 = sim.stacked_state();
        sim.step().unwrap();
        let u1 = sim.stacked_state();

        // (I − dt/2 A) u1 = (I + dt/2 A) u0 with the assembled generator
        let gen = assemble_generator(&g, &p, &fb, n_rho).unwrap();
        let a = gen.to_dense().unwrap();
        let n = gen.dim();
        let eye = nalgebra::DMatrix::<f64>::identity(n, n);
        let lhs = &eye - &a * (0.5 * dt);
        let rhs = (&eye + &a * (0.5 * dt)) * DVector::from_vec(u0);
        let expect = lhs.lu().solve(&rhs).unwrap();
        let err = (DVector::from_vec(u1) - &expect).norm() / expect.norm();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn oracle_agreement_and_order() {
        let g = Grid2D::square(1.0, 8).unwrap();
        let report = oracle_compare(&unit_params(), &mu(g, 1.0), 4, &sine(g), 1.0, 1e-3).unwrap();
        assert!(report.rel_error < 1e-3, "{report:?}");
        assert!((2.8..=5.2).contains(&report.ratio), "{report:?}");
        let zero = oracle_compare(&unit_params(), &mu(g, 1.0), 4, &ScalarField::zeros(g), 1.0, 1e-2).unwrap();
        assert_eq!(zero.rel_error, 0.0);
    }

    #[test]
    fn oracle_dimension_guard() {
        let g = Grid2D::square(1.0, 20).unwrap();
        let err = oracle_compare(&unit_params(), &mu(g, 1.0), 5, &sine(g), 1.0, 1e-2).unwrap_err();
        assert!(matches!(err, Error::DimensionTooLarge { .. }));
    }

    #[test]
    fn explicit_coupling_runs_and_pushes_history() {
        let g = Grid2D::square(1.0, 8).unwrap();
        let mut scheme = SchemeConfig::new(0.05, 1.0);
        scheme.delay_coupling = DelayCoupling::Explicit;
        let mut sim = Simulation::new(unit_params(), mu(g, 1.0), 4, scheme, &sine(g).scaled(0.1), History::Frozen).unwrap();
        for _ in 0..5 {
            sim.step().unwrap();
        }
        assert_eq!(sim.delay_line().sample(0.0).unwrap(), sim.state());
        assert!((sim.delay_line().stamp() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn blow_up_is_reported_with_partial_trajectory() {
        let g = Grid2D::square(1.0, 8).unwrap();
        let fb = Feedback::Zk { a: ScalarField::zeros(g), b: ScalarField::zeros(g) };
        let scheme = SchemeConfig::new(0.01, 1.0);
        let sim = Simulation::new(unit_params(), fb, 4, scheme, &sine(g).scaled(1e7), History::Frozen).unwrap();
        let traj = sim.run();
        assert!(matches!(traj.status, RunStatus::BlowUp { .. }));
        assert_eq!(traj.records.len(), 1);
    }

    #[test]
    fn trajectory_times_are_increasing() {
        let g = Grid2D::square(1.0, 8).unwrap();
        let mut scheme = SchemeConfig::new(0.01, 0.55);
        scheme.record_stride = 10;
        scheme.snapshot_stride = Some(25);
        let sim = Simulation::new(unit_params(), mu(g, 1.0), 4, scheme, &sine(g).scaled(0.01), History::Frozen).unwrap();
        let traj = sim.run();
        assert_eq!(traj.status, RunStatus::Completed);
        let t = traj.times();
        assert!(t.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(t.len(), 7);
        assert!((t.last().unwrap() - 0.55).abs() < 1e-12);
        assert_eq!(traj.snapshots.len(), 3);
        assert_eq!(traj.envelope_violations, None);
    }

    #[test]
    fn mu_energy_is_monotone_per_step() {
        let g = Grid2D::square(1.0, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = ScalarField::from_fn(g, |x, _| if x < 0.5 { 1.0 } else { 0.2 });
        let fb = Feedback::Mu { a, mu1: 1.0, mu2: 0.7, xi: 1.1 };
        let mut z0 = ScalarField::from_fn(g, |_, _| rng.gen_range(-1.0..1.0));
        z0.enforce_trace();
        let mut sim = Simulation::new(unit_params(), fb, 5, SchemeConfig::new(0.01, 1.0).linear(), &z0, History::Frozen).unwrap();
        assert_eq!(sim.diagnostics.energy.mode, EnergyMode::Mu);
        let mut e = sim.record().unwrap().e_total;
        for _ in 0..60 {
            sim.step().unwrap();
            let next = sim.record().unwrap().e_total;
            assert!(next <= e * (1.0 + 1e-8));
            e = next;
        }
    }
}
