//! Discrete spatial operators and the assembled linear generator.
//!
//! The dispersive operator is `D = α D3x + γ D1x D2y` acting on interior
//! values, with
//!
//! - `D3x`: centered five-point third difference. Ghost values `u₋₁ = −u₁`
//!   (odd reflection through `ζ(0) = 0`) and `u_{nx+2} = u_{nx}` (even
//!   reflection from `∂xζ(L) = 0`) close it, which gives
//!   `uᵀ D3x u = (u₁² + u_{nx}²)/(2dx³) ≥ 0`.
//! - `D1x`: centered first difference with zero boundary values (skew).
//! - `D2y`: standard second difference with zero boundary values (symmetric),
//!   so `D1x ⊗ D2y` is skew.
//!
//! The equation reads `ζ_t = −Dζ − N(ζ) − feedback`, so `−D` is
//! non-positive in the Euclidean (uniformly weighted) product.

use nalgebra::{DMatrix, SymmetricEigen};
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::certificate::PhysicalParams;
use crate::error::{Error, Result};
use crate::field::{Grid2D, ScalarField};

/// Largest dimension converted to a dense matrix.
pub const DENSE_LIMIT: usize = 5000;

/// `α D3x u + γ D1x D2y u` on interior values (x fastest).
pub fn dispersive_interior(grid: &Grid2D, params: &PhysicalParams, u: &[f64], out: &mut [f64]) {
    let (nx, ny) = (grid.nx, grid.ny);
    debug_assert_eq!(u.len(), nx * ny);
    let c3 = params.alpha / (2.0 * grid.dx().powi(3));
    let cm = params.gamma / (2.0 * grid.dx() * grid.dy() * grid.dy());
    let at = |i: isize, j: isize| -> f64 {
        // 0-based interior indices; out-of-range are boundary or ghost nodes
        if j < 0 || j >= ny as isize {
            return 0.0;
        }
        if i == -2 {
            -u[j as usize * nx]
        } else if i == nx as isize + 1 {
            u[j as usize * nx + nx - 1]
        } else if i < 0 || i >= nx as isize {
            0.0
        } else {
            u[j as usize * nx + i as usize]
        }
    };
    for j in 0..ny as isize {
        for i in 0..nx as isize {
            let d3 = at(i + 2, j) - 2.0 * at(i + 1, j) + 2.0 * at(i - 1, j) - at(i - 2, j);
            let d2p = if i + 1 < nx as isize {
                at(i + 1, j + 1) - 2.0 * at(i + 1, j) + at(i + 1, j - 1)
            } else {
                0.0
            };
            let d2m = if i >= 1 { at(i - 1, j + 1) - 2.0 * at(i - 1, j) + at(i - 1, j - 1) } else { 0.0 };
            out[j as usize * nx + i as usize] = c3 * d3 + cm * (d2p - d2m);
        }
    }
}

/// Dispersive operator on a field satisfying the Dirichlet trace. The result
/// vanishes on the boundary nodes.
pub fn apply_dispersive(f: &ScalarField, params: &PhysicalParams) -> ScalarField {
    let g = *f.grid();
    let mut out = vec![0.0; g.interior_count()];
    dispersive_interior(&g, params, &f.interior(), &mut out);
    ScalarField::from_interior(g, &out)
}

/// Dispersive stencils applied to stored values without boundary closure.
///
/// Only nodes whose stencils fit inside the stored node set are evaluated
/// (`2 ≤ i ≤ nx − 1`, `1 ≤ j ≤ ny`); all others are left at zero. Used for
/// consistency checks on polynomials that do not satisfy the trace.
pub fn apply_dispersive_raw(f: &ScalarField, params: &PhysicalParams) -> ScalarField {
    let g = *f.grid();
    let (dx, dy) = (g.dx(), g.dy());
    let mut out = ScalarField::zeros(g);
    for j in 1..=g.ny {
        for i in 2..g.nx {
            let d3 = (f.get(i + 2, j) - 2.0 * f.get(i + 1, j) + 2.0 * f.get(i - 1, j)
                - f.get(i - 2, j))
                / (2.0 * dx.powi(3));
            let d2 = |k: usize| (f.get(k, j + 1) - 2.0 * f.get(k, j) + f.get(k, j - 1)) / (dy * dy);
            let mixed = (d2(i + 1) - d2(i - 1)) / (2.0 * dx);
            out.set(i, j, params.alpha * d3 + params.gamma * mixed);
        }
    }
    out
}

/// Sparse entries `(row, col, value)` of `D` in the interior ordering.
pub fn dispersive_triplets(grid: &Grid2D, params: &PhysicalParams) -> Vec<(usize, usize, f64)> {
    let (nx, ny) = (grid.nx, grid.ny);
    let c3 = params.alpha / (2.0 * grid.dx().powi(3));
    let cm = params.gamma / (2.0 * grid.dx() * grid.dy() * grid.dy());
    let mut t = Vec::with_capacity(nx * ny * 10);
    let idx = |i: usize, j: usize| j * nx + i;
    for j in 0..ny {
        for i in 0..nx {
            let row = idx(i, j);
            let mut push = |ii: isize, coef: f64| {
                if ii == -2 {
                    t.push((row, idx(0, j), -coef));
                } else if ii == nx as isize + 1 {
                    t.push((row, idx(nx - 1, j), coef));
                } else if ii >= 0 && ii < nx as isize {
                    t.push((row, idx(ii as usize, j), coef));
                }
            };
            let ii = i as isize;
            push(ii + 2, c3);
            push(ii + 1, -2.0 * c3);
            push(ii - 1, 2.0 * c3);
            push(ii - 2, -c3);
            for (col, sign) in [(ii + 1, 1.0), (ii - 1, -1.0)] {
                if col < 0 || col >= nx as isize {
                    continue;
                }
                let col = col as usize;
                t.push((row, idx(col, j), -2.0 * sign * cm));
                if j + 1 < ny {
                    t.push((row, idx(col, j + 1), sign * cm));
                }
                if j >= 1 {
                    t.push((row, idx(col, j - 1), sign * cm));
                }
            }
        }
    }
    t
}

/// Which quadratic flux discretization to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearForm {
    /// `½ D1x(ζ²)`
    #[default]
    Conservative,
    /// `⅓ [D1x(ζ²) + ζ D1x ζ]`, energy-neutral
    SkewSymmetric,
}

/// Centered `½ ∂x(ζ²)` from stored node values (boundary values included).
pub fn nonlinear_flux(zeta: &ScalarField) -> ScalarField {
    nonlinear_flux_with(zeta, NonlinearForm::Conservative)
}

pub fn nonlinear_flux_with(zeta: &ScalarField, form: NonlinearForm) -> ScalarField {
    let g = *zeta.grid();
    let dx = g.dx();
    let mut out = ScalarField::zeros(g);
    for j in 1..=g.ny {
        for i in 1..=g.nx {
            let (um, u, up) = (zeta.get(i - 1, j), zeta.get(i, j), zeta.get(i + 1, j));
            out.set(i, j, flux_point(um, u, up, dx, form));
        }
    }
    out
}

#[inline]
fn flux_point(um: f64, u: f64, up: f64, dx: f64, form: NonlinearForm) -> f64 {
    match form {
        NonlinearForm::Conservative => (up * up - um * um) / (4.0 * dx),
        NonlinearForm::SkewSymmetric => ((up * up - um * um) + u * (up - um)) / (6.0 * dx),
    }
}

/// Nonlinear flux on interior values with zero boundary.
pub fn nonlinear_interior(grid: &Grid2D, u: &[f64], form: NonlinearForm, out: &mut [f64]) {
    let (nx, ny) = (grid.nx, grid.ny);
    let dx = grid.dx();
    for j in 0..ny {
        let row = &u[j * nx..(j + 1) * nx];
        for i in 0..nx {
            let um = if i > 0 { row[i - 1] } else { 0.0 };
            let up = if i + 1 < nx { row[i + 1] } else { 0.0 };
            out[j * nx + i] = flux_point(um, row[i], up, dx, form);
        }
    }
}

/// Feedback structure of the linear part.
#[derive(Debug, Clone, PartialEq)]
pub enum Feedback {
    /// `a ζ + b ζ(t − h)`
    Zk { a: ScalarField, b: ScalarField },
    /// `a ζ + b (ξ ζ + ζ(t − h))`
    Perturbed { a: ScalarField, b: ScalarField, xi: f64 },
    /// `a (μ₁ ζ + μ₂ ζ(t − h))`
    Mu { a: ScalarField, mu1: f64, mu2: f64, xi: f64 },
}

impl Feedback {
    pub fn grid(&self) -> &Grid2D {
        match self {
            Feedback::Zk { a, .. } | Feedback::Perturbed { a, .. } | Feedback::Mu { a, .. } => a.grid(),
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let nonneg = |f: &ScalarField, name: &str| {
            if f.values().iter().all(|&v| v >= 0.0) {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be nonnegative")))
            }
        };
        match self {
            Feedback::Zk { a, b } | Feedback::Perturbed { a, b, .. } => {
                a.grid().check_same(b.grid())?;
                nonneg(a, "a")?;
                nonneg(b, "b")?;
            }
            Feedback::Mu { a, mu1, mu2, .. } => {
                nonneg(a, "a")?;
                if !(*mu1 >= 0.0 && *mu2 >= 0.0) {
                    return Err(Error::InvalidParameter("mu1, mu2 must be nonnegative".into()));
                }
            }
        }
        if let Feedback::Perturbed { xi, .. } | Feedback::Mu { xi, .. } = self {
            if !(*xi >= 0.0) {
                return Err(Error::InvalidParameter(format!("xi must be nonnegative, got {xi}")));
            }
        }
        Ok(())
    }

    /// Coefficient of the instantaneous feedback term on interior nodes.
    pub fn instant_coeff(&self) -> Vec<f64> {
        match self {
            Feedback::Zk { a, .. } => a.interior(),
            Feedback::Perturbed { a, b, xi } => {
                a.interior().iter().zip(b.interior()).map(|(a, b)| a + xi * b).collect()
            }
            Feedback::Mu { a, mu1, .. } => a.interior().iter().map(|a| mu1 * a).collect(),
        }
    }

    /// Coefficient of the delayed term `ζ(t − h)` on interior nodes.
    pub fn delayed_coeff(&self) -> Vec<f64> {
        match self {
            Feedback::Zk { b, .. } | Feedback::Perturbed { b, .. } => b.interior(),
            Feedback::Mu { a, mu2, .. } => a.interior().iter().map(|a| mu2 * a).collect(),
        }
    }

    /// Scalar weight of the history cells in the energy-space inner product.
    pub fn z_weight(&self, h: f64) -> f64 {
        match self {
            Feedback::Zk { b, .. } => h * b.linf(),
            Feedback::Perturbed { b, xi, .. } => xi * h * b.linf(),
            Feedback::Mu { a, xi, .. } => xi * a.linf(),
        }
    }
}

/// Linear generator of the coupled `(ζ, z₁, …, z_N)` system.
///
/// The stacked vector holds the `nx·ny` interior values of ζ followed by
/// `n_rho` blocks of history cells, cell `k` representing `ρ ∈ ((k−1)/N, k/N]`.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    pub grid: Grid2D,
    pub n_rho: usize,
    pub delay: f64,
    /// Scalar history weight `c_z` of the inner product.
    pub z_weight: f64,
    pub matrix: CsrMatrix<f64>,
}

impl GeneratorMatrix {
    pub fn state_dim(&self) -> usize {
        self.grid.interior_count()
    }

    pub fn dim(&self) -> usize {
        self.state_dim() * (self.n_rho + 1)
    }

    /// Diagonal of the inner-product weight: `dx·dy` on ζ, `c_z·dx·dy/N` on z.
    pub fn weights(&self) -> Vec<f64> {
        let m = self.state_dim();
        let area = self.grid.dx() * self.grid.dy();
        let wz = self.z_weight * area / self.n_rho as f64;
        (0..self.dim()).map(|k| if k < m { area } else { wz }).collect()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim());
        self.matrix
            .row_iter()
            .map(|row| row.col_indices().iter().zip(row.values()).map(|(&c, &v)| v * x[c]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let n = self.dim();
        if n > DENSE_LIMIT {
            return Err(Error::DimensionTooLarge { dim: n, limit: DENSE_LIMIT });
        }
        let mut m = DMatrix::zeros(n, n);
        for (r, c, &v) in self.matrix.triplet_iter() {
            m[(r, c)] += v;
        }
        Ok(m)
    }
}

pub fn assemble_generator(
    grid: &Grid2D,
    params: &PhysicalParams,
    feedback: &Feedback,
    n_rho: usize,
) -> Result<GeneratorMatrix> {
    params.validate()?;
    feedback.validate()?;
    grid.check_same(feedback.grid())?;
    if n_rho < 2 {
        return Err(Error::InvalidParameter(format!("n_rho must be at least 2, got {n_rho}")));
    }
    let m = grid.interior_count();
    let n = m * (n_rho + 1);
    let mut coo = CooMatrix::new(n, n);
    for (r, c, v) in dispersive_triplets(grid, params) {
        coo.push(r, c, -v);
    }
    let s = feedback.instant_coeff();
    let d = feedback.delayed_coeff();
    let last = m * n_rho;
    for k in 0..m {
        if s[k] != 0.0 {
            coo.push(k, k, -s[k]);
        }
        if d[k] != 0.0 {
            coo.push(k, last + k, -d[k]);
        }
    }
    let rate = n_rho as f64 / params.delay;
    for cell in 1..=n_rho {
        for k in 0..m {
            let row = cell * m + k;
            coo.push(row, row, -rate);
            coo.push(row, (cell - 1) * m + k, rate);
        }
    }
    Ok(GeneratorMatrix {
        grid: *grid,
        n_rho,
        delay: params.delay,
        z_weight: feedback.z_weight(params.delay),
        matrix: CsrMatrix::from(&coo),
    })
}

/// Matrix-free action of the generator; mirrors [`assemble_generator`].
pub fn apply_generator(
    grid: &Grid2D,
    params: &PhysicalParams,
    feedback: &Feedback,
    n_rho: usize,
    x: &[f64],
) -> Vec<f64> {
    let m = grid.interior_count();
    assert_eq!(x.len(), m * (n_rho + 1));
    let mut out = vec![0.0; x.len()];
    dispersive_interior(grid, params, &x[..m], &mut out[..m]);
    let s = feedback.instant_coeff();
    let d = feedback.delayed_coeff();
    let zn = &x[m * n_rho..];
    for k in 0..m {
        out[k] = -out[k] - s[k] * x[k] - d[k] * zn[k];
    }
    let rate = n_rho as f64 / params.delay;
    for cell in 1..=n_rho {
        for k in 0..m {
            out[cell * m + k] = -rate * (x[cell * m + k] - x[(cell - 1) * m + k]);
        }
    }
    out
}

/// Largest eigenvalue of the weighted symmetric part of `G − λI`.
///
/// With weights `W`, this is the spectral abscissa of
/// `½(W^{½}(G−λ)W^{−½} + transpose)`. When the history weight is zero the form
/// only sees the ζ-block, and the gap is taken over that block alone.
pub fn dissipativity_gap(g: &GeneratorMatrix, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be nonnegative, got {lambda}")));
    }
    let a = g.to_dense()?;
    let w = g.weights();
    let n = if g.z_weight > 0.0 { g.dim() } else { g.state_dim() };
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let sij = (w[i] / w[j]).sqrt() * a[(i, j)];
            let sji = (w[j] / w[i]).sqrt() * a[(j, i)];
            s[(i, j)] = 0.5 * (sij + sji);
        }
        s[(i, i)] -= lambda;
    }
    let eig = SymmetricEigen::try_new(s, 1e-14, 10_000).ok_or(Error::EigenNoConvergence)?;
    Ok(eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}
