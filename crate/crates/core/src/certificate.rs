//! Closed-form stability constants and their feasibility conditions.
//!
//! Two families are covered. The `(a, b)` system with a delayed anti-damping
//! term gets `(η, σ, θ, κ, T₀, ν, T_min)` from the perturbed-energy estimate.
//! The `μ`-system `a(μ₁ζ + μ₂ζ(t − h))` gets `(σ, η, θ, κ)` from its
//! Lyapunov functional together with the admissible data radius `r`.
//!
//! The decay exponent is called `theta` throughout so it does not collide with
//! the transverse dispersion coefficient `γ`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub alpha: f64,
    pub gamma: f64,
    #[serde(rename = "L")]
    pub length: f64,
    #[serde(rename = "h")]
    pub delay: f64,
}

impl PhysicalParams {
    pub fn new(alpha: f64, gamma: f64, length: f64, delay: f64) -> Result<Self> {
        let p = Self { alpha, gamma, length, delay };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("gamma", self.gamma),
            ("L", self.length),
            ("h", self.delay),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZkCertInputs {
    pub xi: f64,
    pub mu: f64,
    pub eps: f64,
    pub b_inf: f64,
    /// Fraction of the admissible η-interval; 0.5 when absent.
    pub eta_choice: Option<f64>,
    /// Absolute η, overriding `eta_choice`.
    pub eta: Option<f64>,
}

impl ZkCertInputs {
    pub fn new(xi: f64, mu: f64, eps: f64, b_inf: f64) -> Self {
        Self { xi, mu, eps, b_inf, eta_choice: None, eta: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuCertInputs {
    pub mu1: f64,
    pub mu2: f64,
    pub xi: f64,
    /// Gagliardo–Nirenberg constant `C` in `‖f‖_{L³} ≤ C‖f‖_{H¹}^{1/3}‖f‖_{L²}^{2/3}`.
    pub gn_c: f64,
    /// Candidate radius of the initial data in the energy space.
    pub r: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CertDiagnostics {
    pub notes: Vec<String>,
    /// κ by the other family's formula (`σ/ξ` vs `σ`), for comparison.
    pub kappa_alt: Option<f64>,
    /// `2αη/((2+2ηL)L²) − σ/(2h(ξ+σ))`; zero when the balance relation holds.
    pub balance_residual: Option<f64>,
    /// The two bounds whose minimum is θ.
    pub theta_bounds: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityCertificate {
    pub xi: f64,
    pub eta: Option<f64>,
    pub sigma: Option<f64>,
    pub theta: Option<f64>,
    pub kappa: Option<f64>,
    #[serde(rename = "T0")]
    pub t0: Option<f64>,
    pub nu: Option<f64>,
    #[serde(rename = "Tmin")]
    pub t_min: Option<f64>,
    pub r_max: Option<f64>,
    pub feasible: bool,
    pub assumed_constants: BTreeMap<String, f64>,
    pub diagnostics: CertDiagnostics,
}

impl StabilityCertificate {
    /// An infeasible certificate carrying only the reason.
    pub fn infeasible(xi: f64, reason: impl Into<String>) -> Self {
        Self {
            xi,
            eta: None,
            sigma: None,
            theta: None,
            kappa: None,
            t0: None,
            nu: None,
            t_min: None,
            r_max: None,
            feasible: false,
            assumed_constants: BTreeMap::new(),
            diagnostics: CertDiagnostics { notes: vec![reason.into()], ..Default::default() },
        }
    }

    /// `κ E(0) e^{−2θt}`, when θ and κ are known.
    pub fn envelope(&self, e0: f64, t: f64) -> Option<f64> {
        Some(self.kappa? * e0 * (-2.0 * self.theta? * t).exp())
    }
}

/// Upper end of the open η-interval `(0, (ξ−1)/(2L(1+2ξ)))`.
pub fn eta_max_zk(xi: f64, length: f64) -> f64 {
    (xi - 1.0) / (2.0 * length * (1.0 + 2.0 * xi))
}

pub fn sigma_zk(xi: f64, length: f64, eta: f64) -> f64 {
    xi - 1.0 - 2.0 * length * eta * (1.0 + 2.0 * xi)
}

pub fn eta_sigma_zk(xi: f64, length: f64, eta_choice: Option<f64>) -> Result<(f64, f64)> {
    if !(xi > 1.0) {
        return Err(Error::Infeasible(format!("xi must exceed 1, got {xi}")));
    }
    if !(length > 0.0) {
        return Err(Error::InvalidParameter(format!("L must be positive, got {length}")));
    }
    let choice = eta_choice.unwrap_or(0.5);
    if !(choice > 0.0 && choice < 1.0) {
        return Err(Error::InvalidParameter(format!("eta_choice must lie in (0, 1), got {choice}")));
    }
    let eta = choice * eta_max_zk(xi, length);
    Ok((eta, sigma_zk(xi, length, eta)))
}

fn theta_bounds_zk(params: &PhysicalParams, xi: f64, eta: f64, sigma: f64) -> [f64; 2] {
    let l = params.length;
    [
        3.0 * params.alpha * eta / ((1.0 + 2.0 * eta * l) * l * l),
        sigma / (2.0 * params.delay * (xi + sigma)),
    ]
}

pub fn theta_kappa_zk(params: &PhysicalParams, xi: f64, eta: f64, sigma: f64) -> (f64, f64) {
    let [b1, b2] = theta_bounds_zk(params, xi, eta, sigma);
    let kappa = 1.0 + (2.0 * eta * params.length).max(sigma / xi);
    (b1.min(b2), kappa)
}

pub fn horizon_zk(
    theta: f64,
    xi: f64,
    kappa: f64,
    mu: f64,
    eps: f64,
    b_inf: f64,
) -> Result<(f64, f64, f64)> {
    if !(theta > 0.0) {
        return Err(Error::InvalidParameter(format!("theta must be positive, got {theta}")));
    }
    check_mu_eps(mu, eps)?;
    if !(b_inf >= 0.0) {
        return Err(Error::InvalidParameter(format!("b_inf must be nonnegative, got {b_inf}")));
    }
    let arg = 2.0 * xi * kappa / mu;
    if !(arg > 1.0) {
        return Err(Error::InvalidParameter(format!("2 xi kappa / mu = {arg} must exceed 1")));
    }
    let t0 = arg.ln() / (2.0 * theta) + 1.0;
    let nu = (1.0 / (mu + eps)).ln() / t0;
    let t_min = -(mu / 2.0).ln() / nu + (2.0 * b_inf / nu + 1.0) * t0;
    Ok((t0, nu, t_min))
}

fn check_mu_eps(mu: f64, eps: f64) -> Result<()> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::InvalidParameter(format!("mu must lie in (0, 1), got {mu}")));
    }
    if !(eps > 0.0 && mu + eps < 1.0) {
        return Err(Error::InvalidParameter(format!("need eps > 0 and mu + eps < 1, got eps = {eps}")));
    }
    Ok(())
}

/// Certificate for the `(a, b)` system.
///
/// Returns `Err(Infeasible)` when `ξ ≤ 1` or an η override falls outside its
/// interval; other invalid inputs give `Err(InvalidParameter)`.
pub fn certify_zk(params: &PhysicalParams, inputs: &ZkCertInputs) -> Result<StabilityCertificate> {
    params.validate()?;
    check_mu_eps(inputs.mu, inputs.eps)?;
    if !(inputs.b_inf >= 0.0) {
        return Err(Error::InvalidParameter(format!("b_inf must be nonnegative, got {}", inputs.b_inf)));
    }
    let l = params.length;
    let (eta, sigma) = match inputs.eta {
        Some(eta) => {
            if !(inputs.xi > 1.0) {
                return Err(Error::Infeasible(format!("xi must exceed 1, got {}", inputs.xi)));
            }
            let hi = eta_max_zk(inputs.xi, l);
            if !(eta > 0.0 && eta < hi) {
                return Err(Error::Infeasible(format!("eta = {eta} outside (0, {hi})")));
            }
            (eta, sigma_zk(inputs.xi, l, eta))
        }
        None => eta_sigma_zk(inputs.xi, l, inputs.eta_choice)?,
    };
    let xi = inputs.xi;
    let (theta, kappa) = theta_kappa_zk(params, xi, eta, sigma);
    let (t0, nu, t_min) = horizon_zk(theta, xi, kappa, inputs.mu, inputs.eps, inputs.b_inf)?;
    let balance = 2.0 * params.alpha * eta / ((2.0 + 2.0 * eta * l) * l * l)
        - sigma / (2.0 * params.delay * (xi + sigma));

    let assumed_constants = BTreeMap::from([
        ("mu".to_owned(), inputs.mu),
        ("eps".to_owned(), inputs.eps),
        ("b_inf".to_owned(), inputs.b_inf),
    ]);
    Ok(StabilityCertificate {
        xi,
        eta: Some(eta),
        sigma: Some(sigma),
        theta: Some(theta),
        kappa: Some(kappa),
        t0: Some(t0),
        nu: Some(nu),
        t_min: Some(t_min),
        r_max: None,
        feasible: true,
        assumed_constants,
        diagnostics: CertDiagnostics {
            notes: vec![
                "theta taken as the min of its two upper bounds".into(),
                "kappa = 1 + max(2 eta L, sigma/xi); kappa_alt uses sigma".into(),
                "decay guaranteed only when b_inf is below the (unquantified) smallness threshold"
                    .into(),
            ],
            kappa_alt: Some(1.0 + (2.0 * eta * l).max(sigma)),
            balance_residual: Some(balance),
            theta_bounds: Some(theta_bounds_zk(params, xi, eta, sigma)),
        },
    })
}

/// Admissible ξ-interval `(h μ₂, h(2μ₁ − μ₂))`; `None` when it is empty.
pub fn xi_interval_mu(mu1: f64, mu2: f64, h: f64) -> Option<(f64, f64)> {
    let lo = h * mu2;
    let hi = h * (2.0 * mu1 - mu2);
    (lo < hi).then_some((lo, hi))
}

/// Largest admissible data radius `(216α³)^{1/4} / (C L^{5/2})`.
pub fn r_max_mu(alpha: f64, gn_c: f64, length: f64) -> f64 {
    (216.0 * alpha.powi(3)).powf(0.25) / (gn_c * length.powf(2.5))
}

/// Certificate for the `μ`-system.
///
/// Infeasibility (ξ outside its interval, `r ≥ r_max`) is reported in the
/// returned certificate rather than as an error, so it can be serialized.
pub fn certify_mu(params: &PhysicalParams, inputs: &MuCertInputs) -> Result<StabilityCertificate> {
    params.validate()?;
    let MuCertInputs { mu1, mu2, xi, gn_c, r } = *inputs;
    if !(mu2 > 0.0 && mu1 > mu2) {
        return Err(Error::InvalidParameter(format!("need mu1 > mu2 > 0, got mu1 = {mu1}, mu2 = {mu2}")));
    }
    if !(gn_c > 0.0 && r > 0.0) {
        return Err(Error::InvalidParameter("gn_C and r must be positive".into()));
    }
    let (alpha, h, l) = (params.alpha, params.delay, params.length);
    let r_max = r_max_mu(alpha, gn_c, l);
    let assumed_constants =
        BTreeMap::from([("gn_C".to_owned(), gn_c), ("r".to_owned(), r)]);

    let fail = |reason: String| {
        let mut c = StabilityCertificate::infeasible(xi, reason);
        c.r_max = Some(r_max);
        c.assumed_constants = assumed_constants.clone();
        Ok(c)
    };

    let (lo, hi) = xi_interval_mu(mu1, mu2, h).expect("mu1 > mu2 gives a nonempty interval");
    if !(xi > lo && xi < hi) {
        return fail(format!("xi = {xi} outside ({lo}, {hi})"));
    }
    let bracket = 3.0 * alpha - 0.5 * (gn_c * r).powf(4.0 / 3.0) * l.powf(10.0 / 3.0);
    if !(r < r_max) || !(bracket > 0.0) {
        return fail(format!("r = {r} is not below r_max = {r_max}"));
    }

    let sigma = 0.5 * (2.0 * h / xi) * (mu1 - mu2 / 2.0 - xi / (2.0 * h));
    let eta_a = (xi / h - mu2) / (2.0 * l * mu2);
    let eta_b = (mu1 - mu2 / 2.0 - xi / (2.0 * h) * (1.0 + sigma)) / (2.0 * l * mu1 + l * mu2);
    let eta = 0.5 * eta_a.min(eta_b);
    if !(eta > 0.0) {
        return fail(format!("eta interval is empty (bounds {eta_a}, {eta_b})"));
    }
    let b1 = eta / ((1.0 + 2.0 * eta * l) * l * l) * bracket;
    let b2 = xi * sigma / (2.0 * h * (xi + sigma * xi));
    let theta = b1.min(b2);
    let kappa = 1.0 + (2.0 * eta * l).max(sigma);

    Ok(StabilityCertificate {
        xi,
        eta: Some(eta),
        sigma: Some(sigma),
        theta: Some(theta),
        kappa: Some(kappa),
        t0: None,
        nu: None,
        t_min: None,
        r_max: Some(r_max),
        feasible: true,
        assumed_constants,
        diagnostics: CertDiagnostics {
            notes: vec![
                "sigma and eta taken as half their upper bounds".into(),
                "kappa = 1 + max(2 eta L, sigma); kappa_alt uses sigma/xi".into(),
                "valid for initial data with energy-space norm below r".into(),
            ],
            kappa_alt: Some(1.0 + (2.0 * eta * l).max(sigma / xi)),
            balance_residual: None,
            theta_bounds: Some([b1, b2]),
        },
    })
}
