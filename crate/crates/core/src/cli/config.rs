//! TOML run configuration and the built-in registry of atoms and cores.

use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::{Result, SddeError};
use crate::estimate::{FitMask, FitOptions};
use crate::model::{
    ArgLayout, ConstantLag, ConstantTau, DelayAtomSet, Kernel, LagFunction, LinearCore, LogisticCore, ModelSpec,
    QuadraticCore, RationalTau, SinTimeTau, SineFeatureCore, SinusoidalLag, SmoothCore, TanhTau,
};
use crate::solver::SolveConfig;
use crate::trajectory::{Direction, Parameter, Trajectory};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub parameter: ParameterConfig,
    pub solve: SolveSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub sens: SensSection,
    #[serde(default)]
    pub fd: FdSection,
    pub fit: Option<FitSection>,
    #[serde(default)]
    pub validate: ValidateSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub dim: usize,
    pub theta_dim: usize,
    pub xi_dim: usize,
    pub delay_bound: f64,
    pub horizon: f64,
    pub f: MapConfig,
    pub tau: MapConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    #[serde(default)]
    pub lags: Vec<LagConfig>,
    pub kernel: Option<KernelConfig>,
    pub core: CoreConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LagConfig {
    Constant { value: f64 },
    Sinusoidal { mean: f64, amplitude: f64, frequency: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Constant { matrix: Vec<Vec<f64>>, order: usize },
    Exponential { matrix: Vec<Vec<f64>>, rate: f64, order: usize },
    Modulated { matrix: Vec<Vec<f64>>, c: f64, omega: f64, order: usize },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoreConfig {
    /// `θ₀·u`.
    Linear,
    /// `θ₀·a_i·(1 − u_i/θ₁)` with `a` the first point lag.
    Logistic,
    Quadratic {
        c: Vec<f64>,
        g: Vec<Vec<f64>>,
        #[serde(default)]
        q: Vec<Vec<Vec<f64>>>,
    },
    SineFeature { w: Vec<Vec<f64>>, m: Vec<Vec<f64>>, m_t: Vec<f64>, b: Vec<f64> },
    Constant { value: f64 },
    Tanh { arg: usize, offset: usize, scale: usize },
    Rational { arg: usize, scale: usize },
    SinTime { mean: f64, amplitude: f64, frequency: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterConfig {
    pub phi: PhiConfig,
    #[serde(default)]
    pub theta: Vec<f64>,
    #[serde(default)]
    pub xi: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhiConfig {
    /// One polynomial per component, ascending coefficients in `s`.
    Polynomial { coefficients: Vec<Vec<f64>> },
    /// Hermite data: one row per knot.
    Nodes { knots: Vec<f64>, values: Vec<Vec<f64>>, slopes: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    pub step: f64,
    pub alpha: f64,
    pub tol: Option<f64>,
    pub tau_min: Option<f64>,
    pub discontinuity_depth: Option<u32>,
    pub compat_tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub format: Format,
    pub path: Option<PathBuf>,
    /// Columnar trajectory file written by `solve`.
    pub trajectory: Option<PathBuf>,
    pub times: Option<Vec<f64>>,
    pub grid: Option<GridConfig>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub start: f64,
    pub end: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectionConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub phi: Option<PhiConfig>,
    #[serde(default)]
    pub theta: Vec<f64>,
    #[serde(default)]
    pub xi: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SensSection {
    /// Explicit directions; the unit `θ` and `ξ` directions when empty.
    #[serde(default)]
    pub directions: Vec<DirectionConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdSection {
    pub eps_list: Option<Vec<f64>>,
    #[serde(default = "yes")]
    pub richardson: bool,
    #[serde(default = "default_second_eps")]
    pub second_eps: f64,
}

fn yes() -> bool {
    true
}

fn default_second_eps() -> f64 {
    1e-3
}

impl Default for FdSection {
    fn default() -> Self {
        Self { eps_list: None, richardson: true, second_eps: default_second_eps() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub observations: PathBuf,
    #[serde(default)]
    pub mask: FitMask,
    pub max_iter: Option<usize>,
    pub max_halvings: Option<usize>,
    pub step_tol: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSection {
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_probes() -> usize {
    16
}

fn default_tolerance() -> f64 {
    1e-5
}

impl Default for ValidateSection {
    fn default() -> Self {
        Self { probes: default_probes(), tolerance: default_tolerance() }
    }
}

fn model_err(what: impl Into<String>) -> SddeError {
    SddeError::Model(what.into())
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(model_err(format!("{what}: expected a non-empty rectangular table")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn lag(cfg: &LagConfig) -> Arc<dyn LagFunction> {
    match *cfg {
        LagConfig::Constant { value } => Arc::new(ConstantLag(value)),
        LagConfig::Sinusoidal { mean, amplitude, frequency } => Arc::new(SinusoidalLag { mean, amplitude, frequency }),
    }
}

fn kernel(cfg: &KernelConfig) -> Result<Kernel> {
    match cfg {
        KernelConfig::Constant { matrix: m, order } => Kernel::constant(matrix(m, "kernel matrix")?, *order),
        KernelConfig::Exponential { matrix: m, rate, order } => {
            Kernel::exponential(matrix(m, "kernel matrix")?, *rate, *order)
        }
        KernelConfig::Modulated { matrix: m, c, omega, order } => {
            Kernel::modulated(matrix(m, "kernel matrix")?, *c, *omega, *order)
        }
    }
}

fn atoms(cfg: &MapConfig) -> Result<DelayAtomSet> {
    let kernel = cfg.kernel.as_ref().map(kernel).transpose()?;
    Ok(DelayAtomSet::new(cfg.lags.iter().map(lag).collect(), kernel))
}

fn core(cfg: &CoreConfig, layout: ArgLayout, what: &str) -> Result<Arc<dyn SmoothCore>> {
    let arity = layout.arity();
    Ok(match cfg {
        CoreConfig::Linear => Arc::new(LinearCore::new(layout)?),
        CoreConfig::Logistic => Arc::new(LogisticCore::new(layout)?),
        CoreConfig::Quadratic { c, g, q } => {
            let qs = q.iter().enumerate().map(|(o, m)| matrix(m, &format!("{what} core q[{o}]"))).collect::<Result<_>>()?;
            Arc::new(QuadraticCore::new(DVector::from_column_slice(c), matrix(g, &format!("{what} core g"))?, qs)?)
        }
        CoreConfig::SineFeature { w, m, m_t, b } => Arc::new(SineFeatureCore::new(
            matrix(w, &format!("{what} core w"))?,
            matrix(m, &format!("{what} core m"))?,
            DVector::from_column_slice(m_t),
            DVector::from_column_slice(b),
        )?),
        CoreConfig::Constant { value } => Arc::new(ConstantTau { arity, value: *value }),
        CoreConfig::Tanh { arg, offset, scale } => {
            check_indices(&[*arg, *offset, *scale], arity, what)?;
            Arc::new(TanhTau { arity, arg: *arg, offset: *offset, scale: *scale })
        }
        CoreConfig::Rational { arg, scale } => {
            check_indices(&[*arg, *scale], arity, what)?;
            Arc::new(RationalTau { arity, arg: *arg, scale: *scale })
        }
        CoreConfig::SinTime { mean, amplitude, frequency } => {
            Arc::new(SinTimeTau { arity, mean: *mean, amplitude: *amplitude, frequency: *frequency })
        }
    })
}

fn check_indices(idx: &[usize], arity: usize, what: &str) -> Result<()> {
    match idx.iter().find(|&&i| i >= arity) {
        Some(i) => Err(model_err(format!("{what} core: argument index {i} out of range for arity {arity}"))),
        None => Ok(()),
    }
}

fn phi(cfg: &PhiConfig, dim: usize, r: f64) -> Result<Trajectory> {
    let tr = match cfg {
        PhiConfig::Polynomial { coefficients } => Trajectory::polynomial(coefficients, -r, 0.0)?,
        PhiConfig::Nodes { knots, values, slopes } => {
            let vecs = |rows: &[Vec<f64>]| rows.iter().map(|v| DVector::from_column_slice(v)).collect::<Vec<_>>();
            Trajectory::from_nodes(knots, &vecs(values), &vecs(slopes))?
        }
    };
    if tr.dim() != dim {
        return Err(SddeError::Invalid(format!("phi has {} components, model has {dim}", tr.dim())));
    }
    Ok(tr)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SddeError::Invalid(format!("config: {e}")))
    }

    pub fn model(&self) -> Result<ModelSpec> {
        let m = &self.model;
        let f_atoms = atoms(&m.f)?;
        let tau_atoms = atoms(&m.tau)?;
        let f_layout = ArgLayout { n: m.dim, lags: f_atoms.lag_count(), kernel: f_atoms.kernel_rows(), state: true, params: m.theta_dim };
        let tau_layout =
            ArgLayout { n: m.dim, lags: tau_atoms.lag_count(), kernel: tau_atoms.kernel_rows(), state: false, params: m.xi_dim };
        let f_core = core(&m.f.core, f_layout, "f")?;
        let tau_core = core(&m.tau.core, tau_layout, "tau")?;
        ModelSpec::new(m.dim, m.theta_dim, m.xi_dim, m.delay_bound, m.horizon, f_atoms, f_core, tau_atoms, tau_core)
    }

    pub fn parameter(&self) -> Result<Parameter> {
        let p = &self.parameter;
        Parameter::new(
            phi(&p.phi, self.model.dim, self.model.delay_bound)?,
            DVector::from_column_slice(&p.theta),
            DVector::from_column_slice(&p.xi),
        )
    }

    pub fn solve_config(&self) -> SolveConfig {
        let s = &self.solve;
        let mut cfg = SolveConfig::new(s.step, s.alpha);
        if let Some(v) = s.tol {
            cfg.tol = v;
        }
        if let Some(v) = s.tau_min {
            cfg.tau_min = v;
        }
        if let Some(v) = s.discontinuity_depth {
            cfg.discontinuity_depth = v;
        }
        if let Some(v) = s.compat_tol {
            cfg.compat_tol = v;
        }
        cfg
    }

    /// Output sample times: explicit list, uniform grid, or 101 points on `[0, α]`.
    pub fn times(&self) -> Result<Vec<f64>> {
        let o = &self.output;
        let times = match (&o.times, o.grid) {
            (Some(_), Some(_)) => return Err(SddeError::Invalid("output: give either times or grid, not both".into())),
            (Some(t), None) => t.clone(),
            (None, Some(g)) => {
                if g.count < 2 {
                    return Err(SddeError::Invalid("output.grid.count must be at least 2".into()));
                }
                (0..g.count).map(|k| g.start + (g.end - g.start) * k as f64 / (g.count - 1) as f64).collect()
            }
            (None, None) => (0..=100).map(|k| self.solve.alpha * k as f64 / 100.0).collect(),
        };
        if let Some(t) = times.iter().find(|&&t| !(0.0..=self.solve.alpha).contains(&t)) {
            return Err(SddeError::Invalid(format!("output time {t} outside [0, alpha]")));
        }
        Ok(times)
    }

    /// Named directions from `[sens]`, or the unit `θ` and `ξ` directions.
    pub fn directions(&self, gamma: &Parameter) -> Result<Vec<(String, Direction)>> {
        if self.sens.directions.is_empty() {
            let p = gamma.theta.len();
            return Ok(gamma
                .canonical_directions()
                .into_iter()
                .enumerate()
                .map(|(k, d)| (if k < p { format!("theta{k}") } else { format!("xi{}", k - p) }, d))
                .collect());
        }
        self.sens
            .directions
            .iter()
            .enumerate()
            .map(|(k, d)| {
                let phi = match &d.phi {
                    Some(c) => phi(c, self.model.dim, self.model.delay_bound)?,
                    None => Trajectory::zero(self.model.dim, -self.model.delay_bound, 0.0)?,
                };
                let theta = if d.theta.is_empty() { DVector::zeros(gamma.theta.len()) } else { DVector::from_column_slice(&d.theta) };
                let xi = if d.xi.is_empty() { DVector::zeros(gamma.xi.len()) } else { DVector::from_column_slice(&d.xi) };
                let name = d.name.clone().unwrap_or_else(|| format!("d{k}"));
                Ok((name, Parameter::new(phi, theta, xi)?))
            })
            .collect()
    }

    pub fn fit_options(&self) -> FitOptions {
        let mut o = FitOptions::default();
        if let Some(f) = &self.fit {
            if let Some(v) = f.max_iter {
                o.max_iter = v;
            }
            if let Some(v) = f.max_halvings {
                o.max_halvings = v;
            }
            if let Some(v) = f.step_tol {
                o.step_tol = v;
            }
        }
        o
    }
}
