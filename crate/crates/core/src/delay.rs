//! History variable `z(x, y, ρ, t) = ζ(x, y, t − ρh)` on a uniform ρ-grid.
//!
//! `z` solves the transport problem `h ∂t z + ∂ρ z = 0` with inflow
//! `z(ρ = 0) = ζ`. The line keeps `n_rho + 1` snapshots at `ρ_k = k/n_rho`:
//! slot 0 is the current state, slots `1..=n_rho` are the history cells.
//!
//! How a push advances the cells depends on the Courant number
//! `c = Δt·n_rho/h`:
//!
//! - `1/c` a (moderate) integer `m`: every pushed state is retained for
//!   `m·n_rho` steps, so slot `k` is exactly the state pushed `k·m` steps ago.
//! - other `c ≤ 1`: explicit first-order upwind.
//! - Crank–Nicolson lines (any `c`): the implicit box scheme used by the
//!   coupled stepper.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Grid2D, ScalarField};

/// Largest retained-state count for the exact-shift mode.
const MAX_SHIFT_STATES: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Taper {
    #[default]
    None,
    /// Weight `(1 − ρ)`.
    Linear,
}

impl Taper {
    fn at(self, rho: f64) -> f64 {
        match self {
            Taper::None => 1.0,
            Taper::Linear => 1.0 - rho,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transport {
    /// Exact characteristic shift; each history cell is `m` pushes apart.
    Shift { m: usize },
    Upwind { courant: f64 },
    CrankNicolson { courant: f64 },
}

#[derive(Debug, Clone)]
pub struct DelayLine {
    grid: Grid2D,
    n_rho: usize,
    h: f64,
    dt: f64,
    transport: Transport,
    /// Newest first. Shift mode keeps `m·n_rho + 1` states, otherwise the
    /// `n_rho + 1` slots.
    states: VecDeque<Vec<f64>>,
    previous: Option<Vec<Vec<f64>>>,
    stamp: f64,
}

impl DelayLine {
    /// Line advanced along characteristics (exact shift or explicit upwind).
    pub fn new(grid: Grid2D, n_rho: usize, h: f64, dt: f64) -> Result<Self> {
        let courant = check(n_rho, h, dt)?;
        let inv = 1.0 / courant;
        let m = inv.round();
        let transport = if m >= 1.0
            && (inv - m).abs() <= 1e-9 * m
            && (m as usize) * n_rho < MAX_SHIFT_STATES
        {
            Transport::Shift { m: m as usize }
        } else if courant <= 1.0 {
            Transport::Upwind { courant }
        } else {
            return Err(Error::InvalidParameter(format!(
                "explicit delay transport needs dt*n_rho/h <= 1, got {courant}"
            )));
        };
        Ok(Self::with_transport(grid, n_rho, h, dt, transport))
    }

    /// Line advanced by the Crank–Nicolson box scheme.
    pub fn crank_nicolson(grid: Grid2D, n_rho: usize, h: f64, dt: f64) -> Result<Self> {
        let courant = check(n_rho, h, dt)?;
        Ok(Self::with_transport(grid, n_rho, h, dt, Transport::CrankNicolson { courant }))
    }

    fn with_transport(grid: Grid2D, n_rho: usize, h: f64, dt: f64, transport: Transport) -> Self {
        Self { grid, n_rho, h, dt, transport, states: VecDeque::new(), previous: None, stamp: 0.0 }
    }

    fn state_count(&self) -> usize {
        match self.transport {
            Transport::Shift { m } => m * self.n_rho + 1,
            _ => self.n_rho + 1,
        }
    }

    fn stride(&self) -> usize {
        match self.transport {
            Transport::Shift { m } => m,
            _ => 1,
        }
    }

    /// Constant-in-time history `z₀ ≡ ζ₀`.
    pub fn init_frozen(&mut self, zeta0: &ScalarField, t0: f64) -> Result<()> {
        self.grid.check_same(zeta0.grid())?;
        self.states = std::iter::repeat_n(zeta0.values().to_vec(), self.state_count()).collect();
        self.previous = None;
        self.stamp = t0;
        Ok(())
    }

    /// History from snapshots evenly spaced on `ρ ∈ [0, 1]`, oldest (`ρ = 1`)
    /// first. The `ρ = 0` slot is set to `zeta0`.
    pub fn init_from_snapshots(
        &mut self,
        zeta0: &ScalarField,
        snapshots: &[ScalarField],
        t0: f64,
    ) -> Result<()> {
        self.grid.check_same(zeta0.grid())?;
        if snapshots.len() < 2 {
            return Err(Error::InsufficientHistory(format!(
                "need at least 2 history snapshots, got {}",
                snapshots.len()
            )));
        }
        for s in snapshots {
            self.grid.check_same(s.grid())?;
        }
        let n = self.state_count() - 1;
        let last = (snapshots.len() - 1) as f64;
        let mut states = VecDeque::with_capacity(n + 1);
        states.push_back(zeta0.values().to_vec());
        for q in 1..=n {
            let rho = q as f64 / n as f64;
            // snapshot index counted from the newest one
            let pos = rho * last;
            let lo = pos.floor() as usize;
            let w = pos - lo as f64;
            let at = |k: usize| snapshots[snapshots.len() - 1 - k].values();
            let v = if w == 0.0 {
                at(lo).to_vec()
            } else {
                at(lo).iter().zip(at(lo + 1)).map(|(a, b)| (1.0 - w) * a + w * b).collect()
            };
            states.push_back(v);
        }
        self.states = states;
        self.previous = None;
        self.stamp = t0;
        Ok(())
    }

    pub fn is_initialized(&self) -> bool {
        !self.states.is_empty()
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn n_rho(&self) -> usize {
        self.n_rho
    }

    pub fn delay(&self) -> f64 {
        self.h
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn transport(&self) -> Transport {
        self.transport
    }

    /// Time of the most recent push (or of initialization).
    pub fn stamp(&self) -> f64 {
        self.stamp
    }

    /// Node values of slot `k` (`0 ≤ k ≤ n_rho`).
    pub fn slot(&self, k: usize) -> Result<&[f64]> {
        if self.states.is_empty() {
            return Err(Error::HistoryUninitialized);
        }
        assert!(k <= self.n_rho, "slot {k} out of range");
        Ok(&self.states[k * self.stride()])
    }

    fn slots(&self) -> Vec<Vec<f64>> {
        (0..=self.n_rho).map(|k| self.states[k * self.stride()].clone()).collect()
    }

    /// Advances the history by one step and makes `zeta` the current state.
    pub fn push(&mut self, zeta: &ScalarField) -> Result<()> {
        self.grid.check_same(zeta.grid())?;
        self.push_values(zeta.values())
    }

    pub(crate) fn push_values(&mut self, zeta: &[f64]) -> Result<()> {
        if self.states.is_empty() {
            return Err(Error::HistoryUninitialized);
        }
        assert_eq!(zeta.len(), self.grid.node_count());
        self.previous = Some(self.slots());
        match self.transport {
            Transport::Shift { .. } => {
                let mut recycled = self.states.pop_back().expect("nonempty");
                recycled.copy_from_slice(zeta);
                self.states.push_front(recycled);
            }
            Transport::Upwind { courant } => {
                for k in (1..=self.n_rho).rev() {
                    let older = self.states[k - 1].clone();
                    for (z, zm) in self.states[k].iter_mut().zip(&older) {
                        *z -= courant * (*z - zm);
                    }
                }
                self.states[0].copy_from_slice(zeta);
            }
            Transport::CrankNicolson { courant } => {
                let beta = 0.5 * courant / (1.0 + 0.5 * courant);
                let keep = (1.0 - 0.5 * courant) / (1.0 + 0.5 * courant);
                let inflow = 0.5 * courant / (1.0 + 0.5 * courant);
                // z_k^{n+1} = β z_{k-1}^{n+1} + keep·z_k^n + inflow·z_{k-1}^n
                let mut new_prev = zeta.to_vec();
                let mut old_prev = std::mem::replace(&mut self.states[0], zeta.to_vec());
                for k in 1..=self.n_rho {
                    let old_k = self.states[k].clone();
                    for (i, z) in self.states[k].iter_mut().enumerate() {
                        *z = beta * new_prev[i] + keep * old_k[i] + inflow * old_prev[i];
                    }
                    new_prev.copy_from_slice(&self.states[k]);
                    old_prev = old_k;
                }
            }
        }
        self.stamp += self.dt;
        Ok(())
    }

    /// Quantities for eliminating the history from a Crank–Nicolson step.
    ///
    /// Returns `(β^N, r)` such that, for a new current state `ζ'`, the new last
    /// cell after [`push`](Self::push) is `β^N ζ' + r` (node-wise).
    pub fn cn_elimination(&self) -> Result<(f64, Vec<f64>)> {
        let Transport::CrankNicolson { courant } = self.transport else {
            return Err(Error::InvalidParameter("not a Crank-Nicolson delay line".into()));
        };
        if self.states.is_empty() {
            return Err(Error::HistoryUninitialized);
        }
        let beta = 0.5 * courant / (1.0 + 0.5 * courant);
        let keep = (1.0 - 0.5 * courant) / (1.0 + 0.5 * courant);
        let inflow = beta;
        let mut r = vec![0.0; self.grid.node_count()];
        for k in 1..=self.n_rho {
            let (zk, zkm) = (&self.states[k], &self.states[k - 1]);
            for i in 0..r.len() {
                r[i] = beta * r[i] + keep * zk[i] + inflow * zkm[i];
            }
        }
        Ok((beta.powi(self.n_rho as i32), r))
    }

    /// History at `ρ ∈ [0, 1]`, linearly interpolated between stored states.
    pub fn sample(&self, rho: f64) -> Result<ScalarField> {
        if self.states.is_empty() {
            return Err(Error::HistoryUninitialized);
        }
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidParameter(format!("rho must lie in [0, 1], got {rho}")));
        }
        let n = self.states.len() - 1;
        let mut pos = rho * n as f64;
        // ρ = k/N lands on a node up to rounding
        if (pos - pos.round()).abs() <= 8.0 * f64::EPSILON * n as f64 {
            pos = pos.round();
        }
        let lo = (pos.floor() as usize).min(n);
        let w = pos - lo as f64;
        let values = if w == 0.0 {
            self.states[lo].clone()
        } else {
            self.states[lo].iter().zip(&self.states[lo + 1]).map(|(a, b)| (1.0 - w) * a + w * b).collect()
        };
        Ok(ScalarField::from_values(self.grid, values).expect("grid-sized values"))
    }

    pub fn push_and_sample(&mut self, zeta: &ScalarField, rho: f64) -> Result<ScalarField> {
        self.push(zeta)?;
        self.sample(rho)
    }

    /// `factor · ∫∫∫ taper(ρ) · weight · z² dρ dx dy`.
    ///
    /// The ρ-integral uses one value per history cell (weight `1/n_rho`) with
    /// the taper taken at the cell midpoint; space uses the trapezoid rule.
    pub fn delay_energy(&self, weight: &ScalarField, factor: f64, taper: Taper) -> Result<f64> {
        self.grid.check_same(weight.grid())?;
        if self.states.is_empty() {
            return Err(Error::HistoryUninitialized);
        }
        let g = self.grid;
        let (sx, sy) = g.shape();
        let drho = 1.0 / self.n_rho as f64;
        let mut total = 0.0;
        for k in 1..=self.n_rho {
            let z = &self.states[k * self.stride()];
            let mut s = 0.0;
            for j in 0..sy {
                for i in 0..sx {
                    let q = g.index(i, j);
                    s += g.trapezoid_weight(i, j) * weight.values()[q] * z[q] * z[q];
                }
            }
            total += drho * taper.at((k as f64 - 0.5) * drho) * s;
        }
        Ok(factor * total)
    }

    /// Max-norm of `h(z_new − z_old)/Δt + ½(D_ρ z_new + D_ρ z_old)` over the
    /// history cells, for the most recent push.
    pub fn transport_residual(&self) -> Result<f64> {
        let old = self.previous.as_ref().ok_or_else(|| {
            Error::InsufficientHistory("transport residual needs two consecutive states".into())
        })?;
        let new = self.slots();
        let n = self.n_rho as f64;
        let mut worst: f64 = 0.0;
        for k in 1..=self.n_rho {
            for i in 0..new[k].len() {
                let dt_term = self.h * (new[k][i] - old[k][i]) / self.dt;
                let drho = 0.5 * n * ((new[k][i] - new[k - 1][i]) + (old[k][i] - old[k - 1][i]));
                worst = worst.max((dt_term + drho).abs());
            }
        }
        Ok(worst)
    }
}

fn check(n_rho: usize, h: f64, dt: f64) -> Result<f64> {
    if n_rho < 1 {
        return Err(Error::InvalidParameter("n_rho must be at least 1".into()));
    }
    if !(h > 0.0 && dt > 0.0 && h.is_finite() && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("need h > 0 and dt > 0, got h = {h}, dt = {dt}")));
    }
    Ok(dt * n_rho as f64 / h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> Grid2D {
        Grid2D::square(1.0, 5).unwrap()
    }

    fn constant(c: f64) -> ScalarField {
        ScalarField::constant(grid(), c)
    }

    #[test]
    fn sampling_before_init_fails() {
        let line = DelayLine::new(grid(), 4, 1.0, 0.25).unwrap();
        assert!(matches!(line.sample(0.5), Err(Error::HistoryUninitialized)));
    }

    #[test]
    fn constant_history_samples_constant() {
        let mut line = DelayLine::new(grid(), 4, 1.0, 0.1).unwrap();
        line.init_frozen(&constant(3.0), 0.0).unwrap();
        for _ in 0..7 {
            line.push(&constant(3.0)).unwrap();
        }
        for rho in [0.0, 0.13, 0.5, 0.77, 1.0] {
            let s = line.sample(rho).unwrap();
            assert!(s.values().iter().all(|&v| (v - 3.0).abs() < 1e-15));
        }
        assert_eq!(line.transport_residual().unwrap(), 0.0);
    }

    #[test]
    fn ramp_history_is_shifted_exactly() {
        let (h, n) = (2.0, 8);
        let dt = h / n as f64;
        let mut line = DelayLine::new(grid(), n, h, dt).unwrap();
        assert_eq!(line.transport(), Transport::Shift { m: 1 });
        let snaps: Vec<ScalarField> = (0..=n).rev().map(|k| constant(-(k as f64) * dt)).collect();
        line.init_from_snapshots(&constant(0.0), &snaps, 0.0).unwrap();
        let mut t = 0.0;
        for _ in 0..30 {
            t += dt;
            let s = line.push_and_sample(&constant(t), 1.0).unwrap();
            assert!(s.values().iter().all(|&v| (v - (t - h)).abs() < 1e-13), "{}", s.values()[0]);
            let now = line.sample(0.0).unwrap();
            assert_eq!(now, constant(t));
        }
        assert!(line.transport_residual().unwrap() < 1e-12);
    }

    #[test]
    fn upwind_and_cn_keep_ramp_exact() {
        // linear-in-time history is reproduced by both first-order schemes
        let (h, n) = (1.0, 4);
        for cn in [false, true] {
            let dt = 0.07;
            let mut line = if cn {
                DelayLine::crank_nicolson(grid(), n, h, dt).unwrap()
            } else {
                DelayLine::new(grid(), n, h, dt).unwrap()
            };
            let snaps: Vec<ScalarField> = (0..=n).rev().map(|k| constant(-(k as f64) * h / n as f64)).collect();
            line.init_from_snapshots(&constant(0.0), &snaps, 0.0).unwrap();
            let mut t = 0.0;
            for _ in 0..10 {
                t += dt;
                line.push(&constant(t)).unwrap();
                assert!(line.transport_residual().unwrap() < 1e-12);
                let s = line.sample(1.0).unwrap();
                assert!((s.values()[0] - (t - h)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quadratic_residual_is_first_order() {
        let h = 1.0;
        let residual = |n: usize| {
            let dt = h / n as f64;
            let mut line = DelayLine::new(grid(), n, h, dt).unwrap();
            let z = |s: f64| constant(s * s);
            let snaps: Vec<ScalarField> = (0..=n).rev().map(|k| z(-(k as f64) * dt)).collect();
            line.init_from_snapshots(&z(0.0), &snaps, 0.0).unwrap();
            line.push(&z(dt)).unwrap();
            line.transport_residual().unwrap()
        };
        let (r1, r2) = (residual(8), residual(16));
        assert!((r1 - 1.0 / 8.0).abs() < 1e-12, "{r1}");
        let ratio = r1 / r2;
        assert!((ratio - 2.0).abs() <= 0.6, "{ratio}");
    }

    #[test]
    fn crank_nicolson_push_matches_elimination() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut line = DelayLine::crank_nicolson(grid(), 5, 1.0, 0.37).unwrap();
        line.init_frozen(&random_field(&mut rng), 0.0).unwrap();
        line.push(&random_field(&mut rng)).unwrap();
        let (bn, r) = line.cn_elimination().unwrap();
        let next = random_field(&mut rng);
        line.push(&next).unwrap();
        let last = line.slot(5).unwrap();
        for i in 0..last.len() {
            assert!((last[i] - (bn * next.values()[i] + r[i])).abs() < 1e-14);
        }
        // the box scheme satisfies its own residual exactly
        assert!(line.transport_residual().unwrap() < 1e-12);
    }

    #[test]
    fn insufficient_history_for_residual() {
        let mut line = DelayLine::new(grid(), 4, 1.0, 0.25).unwrap();
        line.init_frozen(&constant(1.0), 0.0).unwrap();
        assert!(matches!(line.transport_residual(), Err(Error::InsufficientHistory(_))));
    }

    #[test]
    fn delay_energy_examples() {
        let g = Grid2D::square(1.0, 9).unwrap();
        let one = ScalarField::constant(g, 1.0);
        let mut line = DelayLine::new(g, 6, 2.0, 0.1).unwrap();
        line.init_frozen(&one, 0.0).unwrap();
        // factor h/2 = 1 with h = 2
        let e = line.delay_energy(&one, 1.0, Taper::None).unwrap();
        assert!((e - 1.0).abs() < 1e-14);
        let w = ScalarField::constant(g, 3.0);
        let e = line.delay_energy(&w, 0.7, Taper::Linear).unwrap();
        assert!((e - 0.7 * 3.0 * 0.5).abs() < 1e-14);
        let zero = DelayLine::new(g, 6, 2.0, 0.1).and_then(|mut l| {
            l.init_frozen(&ScalarField::zeros(g), 0.0)?;
            l.delay_energy(&one, 1.0, Taper::None)
        });
        assert_eq!(zero.unwrap(), 0.0);
    }

    #[test]
    fn rejects_unstable_explicit_transport() {
        assert!(DelayLine::new(grid(), 4, 1.0, 0.3).is_err());
        assert!(DelayLine::crank_nicolson(grid(), 4, 1.0, 0.3).is_ok());
    }

    fn random_field(rng: &mut ChaCha8Rng) -> ScalarField {
        let g = grid();
        let v = (0..g.node_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        ScalarField::from_values(g, v).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn exact_shift_law(seed in 0u64..10_000, n in 2usize..9, m in 1usize..5, pushes in 1usize..80) {
            let h = 1.5;
            let dt = h / (n * m) as f64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut line = DelayLine::new(grid(), n, h, dt).unwrap();
            prop_assert_eq!(line.transport(), Transport::Shift { m });
            let mut pushed = vec![random_field(&mut rng)];
            line.init_frozen(&pushed[0], 0.0).unwrap();
            for _ in 0..pushes {
                let f = random_field(&mut rng);
                line.push(&f).unwrap();
                pushed.push(f);
            }
            let last = pushed.len() - 1;
            for k in 0..=n {
                let back = k * m;
                let expect = if back <= last { &pushed[last - back] } else { &pushed[0] };
                let s = line.sample(k as f64 / n as f64).unwrap();
                prop_assert_eq!(&s, expect);
            }
        }

        #[test]
        fn delay_energy_is_linear_and_nonnegative(seed in 0u64..10_000, factor in 0.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut line = DelayLine::new(grid(), 3, 1.0, 1.0 / 3.0).unwrap();
            line.init_frozen(&random_field(&mut rng), 0.0).unwrap();
            line.push(&random_field(&mut rng)).unwrap();
            let w1 = random_field(&mut rng).zip_map(&constant(0.0), |a, _| a.abs()).unwrap();
            let w2 = random_field(&mut rng).zip_map(&constant(0.0), |a, _| a.abs()).unwrap();
            let w12 = w1.zip_map(&w2, |a, b| a + b).unwrap();
            let e1 = line.delay_energy(&w1, factor, Taper::Linear).unwrap();
            let e2 = line.delay_energy(&w2, factor, Taper::Linear).unwrap();
            let e12 = line.delay_energy(&w12, factor, Taper::Linear).unwrap();
            prop_assert!(e1 >= 0.0 && e2 >= 0.0);
            prop_assert!((e12 - e1 - e2).abs() <= 1e-12 * e12.max(1e-300));
        }
    }
}
