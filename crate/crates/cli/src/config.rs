//! Scenario files: TOML with the sections `[domain]`, `[equation]`, `[delay]`,
//! `[feedback]`, `[time]`, `[init]`, `[certificate]` and `[output]`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use zkdamper_core::field::{build_coefficient, read_text_sequence};
use zkdamper_core::stepper::{DelayCoupling, History};
use zkdamper_core::{
    CoefficientSpec, Feedback, Grid2D, NonlinearForm, PhysicalParams, Rect, ScalarField, SchemeConfig,
};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub domain: Domain,
    pub equation: Equation,
    pub delay: Delay,
    pub feedback: FeedbackSection,
    pub time: Time,
    #[serde(default)]
    pub init: Init,
    pub certificate: Option<CertificateSection>,
    #[serde(default)]
    pub output: Output,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    #[serde(rename = "L")]
    pub length: f64,
    pub nx: usize,
    /// Defaults to `nx`.
    pub ny: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Equation {
    pub alpha: f64,
    pub gamma: f64,
    #[serde(default = "yes")]
    pub nonlinear: bool,
    #[serde(default)]
    pub nonlinear_form: NonlinearForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryMode {
    #[default]
    Frozen,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Delay {
    pub h: f64,
    pub n_rho: usize,
    #[serde(default)]
    pub coupling: DelayCoupling,
    #[serde(default)]
    pub history: HistoryMode,
    /// Snapshot sequence, oldest first, evenly spaced on `[t − h, t]`.
    pub history_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    /// `a ζ + b ζ(t − h)`
    #[serde(alias = "ab")]
    Zk,
    /// `a ζ + b (ξ ζ + z)`
    Perturbed,
    /// `a (μ₁ ζ + μ₂ z)`
    Mu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficient {
    pub amplitude: f64,
    /// Defaults to `amplitude`.
    pub floor: Option<f64>,
    /// `[x0, x1, y0, y1]`; defaults to the whole square.
    pub region: Option<[f64; 4]>,
    #[serde(default)]
    pub ramp: f64,
}

impl Coefficient {
    fn spec(&self, length: f64) -> CoefficientSpec {
        let region = match self.region {
            Some([x0, x1, y0, y1]) => Rect::new(x0, x1, y0, y1),
            None => Rect::whole(length),
        };
        CoefficientSpec {
            region,
            floor: self.floor.unwrap_or(self.amplitude),
            amplitude: self.amplitude,
            ramp: self.ramp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackSection {
    pub mode: FeedbackMode,
    /// Missing means `a ≡ 0`.
    pub a: Option<Coefficient>,
    /// Missing means `b ≡ 0`.
    pub b: Option<Coefficient>,
    pub xi: Option<f64>,
    pub mu1: Option<f64>,
    pub mu2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Time {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "one")]
    pub record_stride: usize,
    #[serde(default = "solver_tol")]
    pub solver_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Zero,
    #[default]
    Sine,
    Gaussian,
    /// Seeded uniform noise on the interior nodes.
    Random,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Init {
    #[serde(default)]
    pub kind: InitKind,
    #[serde(default = "unit")]
    pub amplitude: f64,
    /// Gaussian centre; defaults to the middle of the square.
    pub center: Option<[f64; 2]>,
    /// Gaussian standard deviation; defaults to `L/10`.
    pub width: Option<f64>,
    /// Rescale so the energy-space norm of `(ζ₀, z₀)` equals this value.
    pub h_norm: Option<f64>,
    pub file: Option<PathBuf>,
}

impl Default for Init {
    fn default() -> Self {
        Self { kind: InitKind::Sine, amplitude: 1.0, center: None, width: None, h_norm: None, file: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateSection {
    /// Defaults to `[feedback] xi`.
    pub xi: Option<f64>,
    pub mu: Option<f64>,
    pub eps: Option<f64>,
    /// Defaults to `max |b|`.
    pub b_inf: Option<f64>,
    pub eta: Option<f64>,
    /// Defaults to the Gagliardo–Nirenberg estimate on the configured grid.
    #[serde(rename = "gn_C")]
    pub gn_c: Option<f64>,
    pub r: Option<f64>,
    #[serde(default = "envelope_tolerance")]
    pub envelope_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    #[serde(default = "dot")]
    pub dir: PathBuf,
    #[serde(default = "csv_name")]
    pub csv: String,
    #[serde(default = "summary_name")]
    pub summary: String,
    #[serde(default = "certificate_name")]
    pub certificate: String,
    #[serde(default = "sweep_name")]
    pub sweep: String,
    #[serde(default = "oracle_name")]
    pub oracle: String,
    #[serde(default = "gn_name")]
    pub gn: String,
}

impl Default for Output {
    fn default() -> Self {
        Self {
            dir: dot(),
            csv: csv_name(),
            summary: summary_name(),
            certificate: certificate_name(),
            sweep: sweep_name(),
            oracle: oracle_name(),
            gn: gn_name(),
        }
    }
}

fn yes() -> bool {
    true
}
fn one() -> usize {
    1
}
fn unit() -> f64 {
    1.0
}
fn solver_tol() -> f64 {
    1e-10
}
fn envelope_tolerance() -> f64 {
    1.05
}
fn dot() -> PathBuf {
    PathBuf::from(".")
}
fn csv_name() -> String {
    "energy.csv".into()
}
fn summary_name() -> String {
    "summary.json".into()
}
fn certificate_name() -> String {
    "certificate.json".into()
}
fn sweep_name() -> String {
    "sweep.csv".into()
}
fn oracle_name() -> String {
    "oracle.json".into()
}
fn gn_name() -> String {
    "gn.json".into()
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut s = Self::parse(&text)?;
        s.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(s)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let s: Self = toml::from_str(text).map_err(config_err)?;
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<(), CliError> {
        self.params()?;
        self.grid()?;
        self.scheme().validate().map_err(config_err)?;
        let fb = &self.feedback;
        match fb.mode {
            FeedbackMode::Zk => {}
            FeedbackMode::Perturbed => {
                fb.xi.ok_or_else(|| config_err("perturbed feedback needs xi"))?;
            }
            FeedbackMode::Mu => {
                for (name, v) in [("xi", fb.xi), ("mu1", fb.mu1), ("mu2", fb.mu2)] {
                    v.ok_or_else(|| config_err(format!("mu feedback needs {name}")))?;
                }
                if fb.b.is_some() {
                    return Err(config_err("mu feedback takes no b coefficient"));
                }
            }
        }
        if self.delay.history == HistoryMode::File && self.delay.history_file.is_none() {
            return Err(config_err("history = \"file\" needs history_file"));
        }
        if self.init.kind == InitKind::File && self.init.file.is_none() {
            return Err(config_err("init kind \"file\" needs file"));
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_path(&self, name: &str) -> PathBuf {
        self.resolve(&self.output.dir).join(name)
    }

    pub fn params(&self) -> Result<PhysicalParams, CliError> {
        PhysicalParams::new(self.equation.alpha, self.equation.gamma, self.domain.length, self.delay.h)
            .map_err(config_err)
    }

    pub fn grid(&self) -> Result<Grid2D, CliError> {
        let d = &self.domain;
        Grid2D::new(d.length, d.nx, d.ny.unwrap_or(d.nx)).map_err(config_err)
    }

    pub fn scheme(&self) -> SchemeConfig {
        let t = &self.time;
        SchemeConfig {
            solver_tol: t.solver_tol,
            record_stride: t.record_stride,
            nonlinear: self.equation.nonlinear,
            nonlinear_form: self.equation.nonlinear_form,
            delay_coupling: self.delay.coupling,
            ..SchemeConfig::new(t.dt, t.t_end)
        }
    }

    fn coefficient(&self, c: &Option<Coefficient>) -> Result<ScalarField, CliError> {
        let grid = self.grid()?;
        match c {
            Some(c) => build_coefficient(&grid, &c.spec(self.domain.length)).map_err(config_err),
            None => Ok(ScalarField::zeros(grid)),
        }
    }

    pub fn feedback(&self) -> Result<Feedback, CliError> {
        let fb = &self.feedback;
        let a = self.coefficient(&fb.a)?;
        Ok(match fb.mode {
            FeedbackMode::Zk => Feedback::Zk { a, b: self.coefficient(&fb.b)? },
            FeedbackMode::Perturbed => {
                Feedback::Perturbed { a, b: self.coefficient(&fb.b)?, xi: fb.xi.unwrap_or_default() }
            }
            FeedbackMode::Mu => Feedback::Mu {
                a,
                mu1: fb.mu1.unwrap_or_default(),
                mu2: fb.mu2.unwrap_or_default(),
                xi: fb.xi.unwrap_or_default(),
            },
        })
    }

    /// `max |b|` in the `zk` and `perturbed` modes.
    pub fn b_inf(&self) -> Result<f64, CliError> {
        Ok(self.coefficient(&self.feedback.b)?.linf())
    }

    /// Unscaled initial state; `h_norm` is applied by the caller, which
    /// needs the assembled simulation to measure the norm.
    pub fn initial_state(&self, seed: u64) -> Result<ScalarField, CliError> {
        let grid = self.grid()?;
        let l = self.domain.length;
        let init = &self.init;
        let amp = init.amplitude;
        let mut f = match init.kind {
            InitKind::Zero => ScalarField::zeros(grid),
            InitKind::Sine => ScalarField::from_fn(grid, |x, y| {
                amp * (std::f64::consts::PI * x / l).sin() * (std::f64::consts::PI * y / l).sin()
            }),
            InitKind::Gaussian => {
                let [cx, cy] = init.center.unwrap_or([l / 2.0, l / 2.0]);
                let w = init.width.unwrap_or(l / 10.0);
                if !(w > 0.0) {
                    return Err(config_err("gaussian width must be positive"));
                }
                ScalarField::from_fn(grid, |x, y| {
                    amp * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * w * w)).exp()
                })
            }
            InitKind::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                ScalarField::from_fn(grid, |_, _| amp * rng.gen_range(-1.0..1.0))
            }
            InitKind::File => {
                let path = self.resolve(init.file.as_deref().unwrap_or(Path::new("")));
                let f = ScalarField::load(&path).map_err(config_err)?;
                if !f.grid().same_as(&grid) {
                    return Err(config_err(format!("{} does not match the configured grid", path.display())));
                }
                f.scaled(amp)
            }
        };
        f.enforce_trace();
        Ok(f)
    }

    pub fn history(&self) -> Result<History, CliError> {
        match self.delay.history {
            HistoryMode::Frozen => Ok(History::Frozen),
            HistoryMode::File => {
                let path = self.resolve(self.delay.history_file.as_deref().unwrap_or(Path::new("")));
                let file = fs::File::open(&path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                let snaps = read_text_sequence(std::io::BufReader::new(file)).map_err(config_err)?;
                Ok(History::Snapshots(snaps))
            }
        }
    }
}
