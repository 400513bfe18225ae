//! Nodal fields on a uniform grid over `(0, L)²`.
//!
//! Storage includes the boundary nodes, so an `nx × ny` interior grid holds
//! `(nx + 2) × (ny + 2)` values, x-index fastest. Boundary values are kept so
//! that trace derivatives such as `∂x ζ(0, y)` can be taken by one-sided
//! differences.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest interior node count per axis (the x-stencils are five points wide).
pub const MIN_NODES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub length: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid2D {
    pub fn new(length: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidParameter(format!("L must be positive, got {length}")));
        }
        if nx < MIN_NODES || ny < MIN_NODES {
            return Err(Error::InvalidParameter(format!(
                "need at least {MIN_NODES} interior nodes per axis, got {nx}x{ny}"
            )));
        }
        Ok(Self { length, nx, ny })
    }

    pub fn square(length: f64, n: usize) -> Result<Self> {
        Self::new(length, n, n)
    }

    pub fn dx(&self) -> f64 {
        self.length / (self.nx + 1) as f64
    }

    pub fn dy(&self) -> f64 {
        self.length / (self.ny + 1) as f64
    }

    /// Node counts including the boundary.
    pub fn shape(&self) -> (usize, usize) {
        (self.nx + 2, self.ny + 2)
    }

    pub fn node_count(&self) -> usize {
        (self.nx + 2) * (self.ny + 2)
    }

    pub fn interior_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.dy()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 2) + i
    }

    /// Position of interior node `(i, j)` (1-based node indices) in the
    /// interior-only ordering used by the assembled operators.
    #[inline]
    pub fn interior_index(&self, i: usize, j: usize) -> usize {
        (j - 1) * self.nx + (i - 1)
    }

    /// Composite trapezoid weight of node `(i, j)`.
    pub fn trapezoid_weight(&self, i: usize, j: usize) -> f64 {
        let wx = if i == 0 || i == self.nx + 1 { 0.5 } else { 1.0 };
        let wy = if j == 0 || j == self.ny + 1 { 0.5 } else { 1.0 };
        wx * wy * self.dx() * self.dy()
    }

    pub fn same_as(&self, other: &Grid2D) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.length == other.length
    }

    pub(crate) fn check_same(&self, other: &Grid2D) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{}x{} (L={}) vs {}x{} (L={})",
                self.nx, self.ny, self.length, other.nx, other.ny, other.length
            )))
        }
    }
}

pub const TRACE_TOL: f64 = 1e-12;

/// Nodal values over the full node set, boundary included.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid2D,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid2D) -> Self {
        Self { grid, values: vec![0.0; grid.node_count()] }
    }

    pub fn constant(grid: Grid2D, c: f64) -> Self {
        Self { grid, values: vec![c; grid.node_count()] }
    }

    pub fn from_fn(grid: Grid2D, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let (sx, sy) = grid.shape();
        let mut values = Vec::with_capacity(sx * sy);
        for j in 0..sy {
            for i in 0..sx {
                values.push(f(grid.x(i), grid.y(j)));
            }
        }
        Self { grid, values }
    }

    pub fn from_values(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                grid.node_count(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("field values must be finite".into()));
        }
        Ok(Self { grid, values })
    }

    /// Builds a field from interior values (x fastest); boundary nodes are zero.
    pub fn from_interior(grid: Grid2D, interior: &[f64]) -> Self {
        assert_eq!(interior.len(), grid.interior_count());
        let mut f = Self::zeros(grid);
        for j in 1..=grid.ny {
            for i in 1..=grid.nx {
                let k = grid.interior_index(i, j);
                f.values[grid.index(i, j)] = interior[k];
            }
        }
        f
    }

    pub fn interior(&self) -> Vec<f64> {
        let g = &self.grid;
        let mut out = Vec::with_capacity(g.interior_count());
        for j in 1..=g.ny {
            for i in 1..=g.nx {
                out.push(self.values[g.index(i, j)]);
            }
        }
        out
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.grid.index(i, j);
        self.values[k] = v;
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// True when every boundary node vanishes (homogeneous Dirichlet trace).
    /// Largest absolute boundary value.
    pub fn trace_defect(&self) -> f64 {
        let (sx, sy) = self.grid.shape();
        let rows = (0..sx).flat_map(|i| [self.get(i, 0), self.get(i, sy - 1)]);
        let cols = (0..sy).flat_map(|j| [self.get(0, j), self.get(sx - 1, j)]);
        rows.chain(cols).fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Boundary values vanish up to `TRACE_TOL` relative to max(1, linf).
    pub fn satisfies_trace(&self) -> bool {
        self.trace_defect() <= TRACE_TOL * self.linf().max(1.0)
    }

    pub fn enforce_trace(&mut self) {
        let (sx, sy) = self.grid.shape();
        for i in 0..sx {
            self.set(i, 0, 0.0);
            self.set(i, sy - 1, 0.0);
        }
        for j in 0..sy {
            self.set(0, j, 0.0);
            self.set(sx - 1, j, 0.0);
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|v| c * v).collect() }
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: f64, other: &ScalarField) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { grid: self.grid, values })
    }

    /// Writes the plain-text matrix format: a header line `nx ny L`, then one
    /// line per y-row (`ny + 2` lines) holding the `nx + 2` node values of
    /// that row.
    pub fn write_text(&self, mut w: impl Write) -> Result<()> {
        let g = &self.grid;
        writeln!(w, "{} {} {:.17e}", g.nx, g.ny, g.length)?;
        let (sx, sy) = g.shape();
        let mut line = String::new();
        for j in 0..sy {
            line.clear();
            for i in 0..sx {
                if i > 0 {
                    line.push(' ');
                }
                let _ = write!(line, "{:.16e}", self.get(i, j));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_text(r: impl BufRead) -> Result<Self> {
        let mut fields = read_text_sequence(r)?;
        match fields.len() {
            1 => Ok(fields.remove(0)),
            n => Err(Error::Format(format!("expected one field, found {n}"))),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_text(std::io::BufReader::new(file))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_text(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// Reads consecutive fields in the text format (used for history files).
pub fn read_text_sequence(r: impl BufRead) -> Result<Vec<ScalarField>> {
    let mut tokens = Vec::new();
    for line in r.lines() {
        let line = line?;
        tokens.extend(line.split_whitespace().map(str::to_owned));
    }
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < tokens.len() {
        if pos + 3 > tokens.len() {
            return Err(Error::Format("truncated header".into()));
        }
        let parse_usize = |s: &str| {
            s.parse::<usize>().map_err(|_| Error::Format(format!("bad node count {s:?}")))
        };
        let nx = parse_usize(&tokens[pos])?;
        let ny = parse_usize(&tokens[pos + 1])?;
        let length: f64 = tokens[pos + 2]
            .parse()
            .map_err(|_| Error::Format(format!("bad length {:?}", tokens[pos + 2])))?;
        pos += 3;
        let grid = Grid2D::new(length, nx, ny)?;
        let n = grid.node_count();
        if pos + n > tokens.len() {
            return Err(Error::Format(format!("expected {n} values after header")));
        }
        let values = tokens[pos..pos + n]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| Error::Format(format!("bad value {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        pos += n;
        out.push(ScalarField::from_values(grid, values)?);
    }
    Ok(out)
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn whole(length: f64) -> Self {
        Self::new(0.0, length, 0.0, length)
    }

    fn clipped(&self, length: f64) -> Rect {
        Rect::new(self.x0.max(0.0), self.x1.min(length), self.y0.max(0.0), self.y1.min(length))
    }

    fn distance(&self, x: f64, y: f64) -> f64 {
        let dx = (self.x0 - x).max(0.0).max(x - self.x1);
        let dy = (self.y0 - y).max(0.0).max(y - self.y1);
        dx.hypot(dy)
    }
}

/// Plateau-with-linear-ramp coefficient profile (for `a` or `b`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSpec {
    pub region: Rect,
    /// Lower bound required on the region (`a₀` of the damping assumption).
    pub floor: f64,
    /// Plateau value on the region; equals the sup-norm of the result.
    pub amplitude: f64,
    /// Width over which the profile falls linearly to zero outside the region.
    pub ramp: f64,
}

impl CoefficientSpec {
    pub fn uniform(length: f64, amplitude: f64) -> Self {
        Self { region: Rect::whole(length), floor: 0.0, amplitude, ramp: 0.0 }
    }

    pub fn zero(length: f64) -> Self {
        Self::uniform(length, 0.0)
    }
}

/// Builds a nonnegative coefficient field from a [`CoefficientSpec`].
pub fn build_coefficient(grid: &Grid2D, spec: &CoefficientSpec) -> Result<ScalarField> {
    if !(spec.amplitude >= 0.0 && spec.floor >= 0.0 && spec.ramp >= 0.0) {
        return Err(Error::InvalidParameter(
            "coefficient amplitude, floor and ramp must be nonnegative".into(),
        ));
    }
    if spec.floor > spec.amplitude {
        return Err(Error::InvalidParameter(format!(
            "floor {} exceeds amplitude {}",
            spec.floor, spec.amplitude
        )));
    }
    let region = spec.region.clipped(grid.length);
    if !(region.x1 > region.x0 && region.y1 > region.y0) {
        return Err(Error::EmptyRegion);
    }
    let tol = 1e-12 * grid.length;
    Ok(ScalarField::from_fn(*grid, |x, y| {
        let d = region.distance(x, y);
        if d <= tol {
            spec.amplitude.max(spec.floor)
        } else if spec.ramp > 0.0 {
            spec.amplitude * (1.0 - d / spec.ramp).max(0.0)
        } else {
            0.0
        }
    }))
}

/// Trapezoid approximation of `∫∫ w · f^power dx dy`, `power ∈ {1, 2, 3}`.
pub fn integrate_weighted(w: &ScalarField, f: &ScalarField, power: u32) -> Result<f64> {
    w.grid.check_same(&f.grid)?;
    if !(1..=3).contains(&power) {
        return Err(Error::InvalidParameter(format!("power must be 1, 2 or 3, got {power}")));
    }
    let g = w.grid;
    let (sx, sy) = g.shape();
    let mut sum = 0.0;
    for j in 0..sy {
        for i in 0..sx {
            let k = g.index(i, j);
            sum += g.trapezoid_weight(i, j) * w.values[k] * f.values[k].powi(power as i32);
        }
    }
    Ok(sum)
}

/// Trapezoid integral of `g(f)` over the full node set.
pub(crate) fn integrate_map(f: &ScalarField, g: impl Fn(f64) -> f64) -> f64 {
    let grid = f.grid;
    let (sx, sy) = grid.shape();
    let mut sum = 0.0;
    for j in 0..sy {
        for i in 0..sx {
            sum += grid.trapezoid_weight(i, j) * g(f.get(i, j));
        }
    }
    sum
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub h1_semi: f64,
    pub l3: f64,
}

impl Norms {
    /// Full `H¹` norm, `sqrt(‖f‖² + |f|²_{H¹})`.
    pub fn h1(&self) -> f64 {
        self.l2.hypot(self.h1_semi)
    }
}

/// `L²`, `H¹`-seminorm and `L³` norms. Gradients use centered differences in
/// the interior and second-order one-sided differences on the boundary.
pub fn norms(f: &ScalarField) -> Norms {
    let g = f.grid;
    let (sx, sy) = g.shape();
    let (dx, dy) = (g.dx(), g.dy());
    let mut grad2 = 0.0;
    for j in 0..sy {
        for i in 0..sx {
            let fx = derivative(|k| f.get(k, j), i, sx, dx);
            let fy = derivative(|k| f.get(i, k), j, sy, dy);
            grad2 += g.trapezoid_weight(i, j) * (fx * fx + fy * fy);
        }
    }
    Norms {
        l2: integrate_map(f, |v| v * v).sqrt(),
        h1_semi: grad2.sqrt(),
        l3: integrate_map(f, |v| v.abs().powi(3)).cbrt(),
    }
}

fn derivative(u: impl Fn(usize) -> f64, k: usize, n: usize, h: f64) -> f64 {
    if k == 0 {
        (-3.0 * u(0) + 4.0 * u(1) - u(2)) / (2.0 * h)
    } else if k == n - 1 {
        (3.0 * u(n - 1) - 4.0 * u(n - 2) + u(n - 3)) / (2.0 * h)
    } else {
        (u(k + 1) - u(k - 1)) / (2.0 * h)
    }
}
