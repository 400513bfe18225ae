//! Numerical laboratory for the delayed, damped Zakharov–Kuznetsov equation
//!
//! ```text
//! ∂t ζ + ∂x(α ∂x² ζ + γ ∂y² ζ + ½ ζ²) + a(x,y) ζ + b(x,y) ζ(t − h) = 0   on (0,L)²
//! ```
//!
//! with `ζ = 0` on all four edges and `∂x ζ(L, y) = 0`. The crate is organised
//! around the pieces of a stabilization study:
//!
//! - [`certificate`]: closed-form decay constants (θ, κ, T₀, ν, T_min, r) and
//!   their feasibility conditions.
//! - [`field`]: uniform grids, nodal fields, coefficient profiles, quadrature.
//! - [`operators`]: the discrete dispersive operator, the nonlinear flux, the
//!   assembled linear generator and its dissipativity gap.
//! - [`delay`]: the history variable `z(ρ) = ζ(t − ρh)` stored as a ring of
//!   snapshots.
//! - [`stepper`]: the IMEX Crank–Nicolson integrator and a dense
//!   matrix-exponential oracle.
//! - [`diagnostics`]: energies, Lyapunov functional, boundary fluxes, rate
//!   fits, observability ratios and Gagliardo–Nirenberg estimates.

// `!(x > 0.0)` guards also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificate;
pub mod delay;
pub mod diagnostics;
pub mod field;
pub mod operators;
pub mod stepper;

mod error;

pub use certificate::{
    certify_mu, certify_zk, MuCertInputs, PhysicalParams, StabilityCertificate, ZkCertInputs,
};
pub use delay::{DelayLine, Taper};
pub use diagnostics::{EnergyMode, EnergyRecord};
pub use error::{Error, Result};
pub use field::{CoefficientSpec, Grid2D, Rect, ScalarField};
pub use operators::{Feedback, GeneratorMatrix};
pub use stepper::{DelayCoupling, NonlinearForm, RunStatus, SchemeConfig, Simulation, Trajectory};
