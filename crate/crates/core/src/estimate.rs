//! Damped Gauss-Newton fitting of `(θ, ξ)` and history coefficients to
//! observed samples, with the Jacobian taken from first variations.

use std::io::Read;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SddeError};
use crate::model::ModelSpec;
use crate::sens1::sensitivities;
use crate::solver::{solve, SolveConfig};
use crate::trajectory::{Direction, HermitePiece, Parameter, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub t: f64,
    pub values: DVector<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservationSet {
    samples: Vec<Observation>,
}

impl ObservationSet {
    pub fn new(samples: Vec<Observation>) -> Result<Self> {
        if let Some(first) = samples.first() {
            let n = first.values.len();
            for (i, s) in samples.iter().enumerate() {
                if !(s.t > 0.0) || !s.t.is_finite() {
                    return Err(SddeError::Invalid(format!("observation {i}: time must be positive, got {}", s.t)));
                }
                if !(s.weight > 0.0) || !s.weight.is_finite() {
                    return Err(SddeError::Invalid(format!("observation {i}: weight must be positive, got {}", s.weight)));
                }
                if s.values.len() != n || s.values.iter().any(|v| !v.is_finite()) {
                    return Err(SddeError::Invalid(format!("observation {i}: expected {n} finite components")));
                }
            }
        }
        Ok(Self { samples })
    }

    /// Reads rows `time, x_1, …, x_n, weight` with a header line.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let mut samples = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| SddeError::Invalid(format!("observations row {}: {e}", i + 2)))?;
            if rec.len() < 3 {
                return Err(SddeError::Invalid(format!(
                    "observations row {}: need time, at least one component and weight",
                    i + 2
                )));
            }
            let nums: Vec<f64> = rec
                .iter()
                .enumerate()
                .map(|(c, s)| {
                    s.parse::<f64>()
                        .map_err(|e| SddeError::Invalid(format!("observations row {}, column {}: {e}", i + 2, c + 1)))
                })
                .collect::<Result<_>>()?;
            let last = nums.len() - 1;
            samples.push(Observation { t: nums[0], values: DVector::from_column_slice(&nums[1..last]), weight: nums[last] });
        }
        Self::new(samples)
    }

    pub fn samples(&self) -> &[Observation] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Noiseless samples of a trajectory with unit weights.
    pub fn from_trajectory(traj: &Trajectory, times: &[f64]) -> Result<Self> {
        let samples = times
            .iter()
            .map(|&t| Ok(Observation { t, values: traj.eval(t)?, weight: 1.0 }))
            .collect::<Result<_>>()?;
        Self::new(samples)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coefficient {
    Value,
    Slope,
}

/// One Hermite coefficient of `φ`: value or slope at a knot, per component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhiCoefficient {
    pub knot: usize,
    pub component: usize,
    pub kind: Coefficient,
}

/// Free coordinates of the fit.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitMask {
    #[serde(default)]
    pub theta: Vec<usize>,
    #[serde(default)]
    pub xi: Vec<usize>,
    #[serde(default)]
    pub phi: Vec<PhiCoefficient>,
}

impl FitMask {
    pub fn theta(indices: &[usize]) -> Self {
        Self { theta: indices.to_vec(), ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.theta.len() + self.xi.len() + self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, gamma: &Parameter) -> Result<()> {
        let knots = gamma.phi.knots().len();
        if let Some(&i) = self.theta.iter().find(|&&i| i >= gamma.theta.len()) {
            return Err(SddeError::Invalid(format!("fit mask: theta index {i} out of range")));
        }
        if let Some(&j) = self.xi.iter().find(|&&j| j >= gamma.xi.len()) {
            return Err(SddeError::Invalid(format!("fit mask: xi index {j} out of range")));
        }
        if let Some(c) = self.phi.iter().find(|c| c.knot >= knots || c.component >= gamma.phi.dim()) {
            return Err(SddeError::Invalid(format!("fit mask: phi coefficient {c:?} out of range")));
        }
        Ok(())
    }

    fn directions(&self, gamma: &Parameter) -> Result<Vec<Direction>> {
        let mut dirs: Vec<Direction> = self.theta.iter().map(|&i| gamma.theta_direction(i)).collect();
        dirs.extend(self.xi.iter().map(|&j| gamma.xi_direction(j)));
        for c in &self.phi {
            let basis = nudge_phi(&zero_on_knots(gamma.phi.dim(), gamma.phi.knots())?, c, 1.0)?;
            dirs.push(gamma.phi_direction(basis)?);
        }
        Ok(dirs)
    }

    fn apply(&self, gamma: &Parameter, delta: &DVector<f64>) -> Result<Parameter> {
        let mut out = gamma.clone();
        let mut k = 0;
        for &i in &self.theta {
            out.theta[i] += delta[k];
            k += 1;
        }
        for &j in &self.xi {
            out.xi[j] += delta[k];
            k += 1;
        }
        let mut phi = gamma.phi.clone();
        for c in &self.phi {
            phi = nudge_phi(&phi, c, delta[k])?;
            k += 1;
        }
        out.phi = phi;
        Ok(out)
    }
}

fn zero_on_knots(dim: usize, knots: &[f64]) -> Result<Trajectory> {
    let z = DVector::zeros(dim);
    let pieces = knots.windows(2).map(|w| HermitePiece::new(w[0], w[1], z.clone(), z.clone(), z.clone(), z.clone())).collect();
    Trajectory::from_pieces(pieces)
}

/// Adds `by` to one Hermite coefficient on both pieces sharing the knot.
fn nudge_phi(phi: &Trajectory, c: &PhiCoefficient, by: f64) -> Result<Trajectory> {
    let mut pieces = phi.pieces().to_vec();
    let k = c.knot;
    if k > 0 {
        let p = &mut pieces[k - 1];
        match c.kind {
            Coefficient::Value => p.x1[c.component] += by,
            Coefficient::Slope => p.d1[c.component] += by,
        }
    }
    if k < pieces.len() {
        let p = &mut pieces[k];
        match c.kind {
            Coefficient::Value => p.x0[c.component] += by,
            Coefficient::Slope => p.d0[c.component] += by,
        }
    }
    Trajectory::from_pieces(pieces)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Stop when the step is below `step_tol·(1 + |p|∞)`.
    pub step_tol: f64,
    /// Stop when the cost drops below this.
    pub cost_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iter: 50, max_halvings: 20, step_tol: 1e-12, cost_tol: 1e-28 }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub gamma: Parameter,
    /// Weighted sum of squared residuals at each accepted iterate, starting with `γ₀`.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Singular values of the last weighted Jacobian.
    pub singular_values: Vec<f64>,
}

fn residuals(model: &ModelSpec, gamma: &Parameter, obs: &ObservationSet, cfg: &SolveConfig) -> Result<(Trajectory, DVector<f64>)> {
    let traj = solve(model, gamma, cfg)?;
    let n = model.dim();
    let mut r = DVector::zeros(obs.len() * n);
    for (i, s) in obs.samples().iter().enumerate() {
        let w = s.weight.sqrt();
        let x = traj.eval(s.t)?;
        for c in 0..n {
            r[i * n + c] = w * (x[c] - s.values[c]);
        }
    }
    Ok((traj, r))
}

fn jacobian(
    model: &ModelSpec,
    gamma: &Parameter,
    traj: &Trajectory,
    obs: &ObservationSet,
    dirs: &[Direction],
    cfg: &SolveConfig,
) -> Result<DMatrix<f64>> {
    let z = sensitivities(model, gamma, traj, dirs, cfg)?;
    let n = model.dim();
    let mut jac = DMatrix::zeros(obs.len() * n, dirs.len());
    for (col, zc) in z.iter().enumerate() {
        for (i, s) in obs.samples().iter().enumerate() {
            let w = s.weight.sqrt();
            let v = zc.z.eval(s.t)?;
            for c in 0..n {
                jac[(i * n + c, col)] = w * v[c];
            }
        }
    }
    Ok(jac)
}

/// Minimizes `Σ w_i |x(t_i, γ) − y_i|²` over the masked coordinates.
///
/// Each step solves the linearized least-squares problem through an SVD and
/// is halved until the cost does not increase; trial points where the solver
/// fails count as increases. Returns the best iterate.
pub fn gauss_newton_fit(
    model: &ModelSpec,
    gamma0: &Parameter,
    obs: &ObservationSet,
    mask: &FitMask,
    opts: &FitOptions,
    cfg: &SolveConfig,
) -> Result<FitResult> {
    if obs.is_empty() {
        return Ok(FitResult { gamma: gamma0.clone(), history: Vec::new(), iterations: 0, converged: true, singular_values: Vec::new() });
    }
    if mask.is_empty() {
        return Err(SddeError::Invalid("fit mask selects no coordinates".into()));
    }
    mask.check(gamma0)?;
    if let Some(s) = obs.samples().iter().find(|s| s.values.len() != model.dim()) {
        return Err(SddeError::Invalid(format!("observation at t = {} has {} components, model has {}", s.t, s.values.len(), model.dim())));
    }
    if let Some(s) = obs.samples().iter().find(|s| s.t > cfg.max_alpha) {
        return Err(SddeError::Invalid(format!("observation time {} beyond the solve interval end {}", s.t, cfg.max_alpha)));
    }
    let mut gamma = gamma0.clone();
    let (mut traj, mut r) = residuals(model, &gamma, obs, cfg)?;
    let mut cost = r.norm_squared();
    let mut history = vec![cost];
    let mut iterations = 0;
    let mut converged = false;
    let mut singular_values = Vec::new();
    for _ in 0..opts.max_iter {
        if cost <= opts.cost_tol {
            converged = true;
            break;
        }
        let dirs = mask.directions(&gamma)?;
        let jac = jacobian(model, &gamma, &traj, obs, &dirs, cfg)?;
        let svd = jac.clone().svd(true, true);
        singular_values = svd.singular_values.iter().copied().collect();
        let smax = singular_values.iter().copied().fold(0.0, f64::max);
        let smin = if jac.nrows() < jac.ncols() { 0.0 } else { singular_values.iter().copied().fold(f64::INFINITY, f64::min) };
        if !(smin > 1e-12 * smax) {
            return Err(SddeError::Rank { singular_values });
        }
        let step = -svd.solve(&r, 0.0).map_err(|e| SddeError::Numeric { t: 0.0, what: format!("least-squares solve: {e}") })?;
        let scale = 1.0 + gamma.theta.amax().max(gamma.xi.amax());
        if step.amax() <= opts.step_tol * scale {
            converged = true;
            break;
        }
        let mut accepted = None;
        let mut lambda = 1.0;
        for _ in 0..=opts.max_halvings {
            let trial = mask.apply(&gamma, &(&step * lambda))?;
            if let Ok((t_traj, t_r)) = residuals(model, &trial, obs, cfg) {
                let c = t_r.norm_squared();
                if c <= cost {
                    accepted = Some((trial, t_traj, t_r, c));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let Some((g, t, rr, c)) = accepted else {
            converged = true;
            break;
        };
        let small = (&step * lambda).amax() <= opts.step_tol * scale;
        gamma = g;
        traj = t;
        r = rr;
        cost = c;
        history.push(cost);
        iterations += 1;
        if small {
            converged = true;
            break;
        }
    }
    Ok(FitResult { gamma, history, iterations, converged, singular_values })
}
