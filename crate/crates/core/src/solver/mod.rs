//! Method-of-steps solution of `ẋ(t) = f(t, x_t, x(t − τ(t, x_t, ξ)), θ)`,
//! `x = φ` on `[-r, 0]`, and the compatibility check at `t = 0`.

pub(crate) mod steps;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, SddeError};
use crate::model::ModelSpec;
use crate::numerics::inf_norm;
use crate::trajectory::{Breakpoint, Direction, Parameter, Segment, Side, Trajectory};

pub(crate) use steps::{integrate, snap, DelayField};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveConfig {
    /// Base step size.
    pub step: f64,
    /// Convergence tolerance of the within-step fixed-point iteration.
    pub tol: f64,
    /// Smallest admissible delay.
    pub tau_min: f64,
    /// Requested final time `α ≤ T`.
    pub max_alpha: f64,
    /// Generations of propagated breakpoints to track.
    pub discontinuity_depth: u32,
    /// Residual below which `γ` counts as compatible where that is required.
    pub compat_tol: f64,
}

impl SolveConfig {
    pub const DEFAULT_COMPAT_TOL: f64 = 1e-8;

    pub fn new(step: f64, max_alpha: f64) -> Self {
        Self {
            step,
            tol: 1e-12,
            tau_min: 1e-6,
            max_alpha,
            discontinuity_depth: 3,
            compat_tol: Self::DEFAULT_COMPAT_TOL,
        }
    }

    pub fn with_step(&self, step: f64) -> Self {
        Self { step, ..self.clone() }
    }

    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(SddeError::Invalid(format!("step must be positive, got {}", self.step)));
        }
        if !(self.tau_min > 0.0) {
            return Err(SddeError::Invalid(format!("tau_min must be positive, got {}", self.tau_min)));
        }
        if !(self.tol > 0.0) {
            return Err(SddeError::Invalid(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.max_alpha > 0.0 && self.max_alpha <= model.horizon()) {
            return Err(SddeError::Invalid(format!(
                "max_alpha must lie in (0, {}], got {}",
                model.horizon(),
                self.max_alpha
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_parameter(model: &ModelSpec, gamma: &Parameter) -> Result<()> {
    if gamma.phi.dim() != model.dim() {
        return Err(SddeError::Invalid(format!("φ has dimension {}, model {}", gamma.phi.dim(), model.dim())));
    }
    if gamma.phi.start() != -model.delay_bound() || gamma.phi.end() != 0.0 {
        return Err(SddeError::Invalid(format!(
            "φ must be defined on [-{}, 0], got [{}, {}]",
            model.delay_bound(),
            gamma.phi.start(),
            gamma.phi.end()
        )));
    }
    if gamma.theta.len() != model.theta_dim() || gamma.xi.len() != model.xi_dim() {
        return Err(SddeError::Invalid(format!(
            "θ, ξ must have lengths {}, {}; got {}, {}",
            model.theta_dim(),
            model.xi_dim(),
            gamma.theta.len(),
            gamma.xi.len()
        )));
    }
    Ok(())
}

/// Arrival times `t − lag` of every atom and of the state-dependent delay.
pub(crate) fn lag_arrivals(model: &ModelSpec, t: f64, tau: f64) -> Vec<f64> {
    let r = model.delay_bound();
    let mut out: Vec<f64> = model
        .f_atoms()
        .point_lags
        .iter()
        .chain(&model.tau_atoms().point_lags)
        .map(|l| t - l.value(t))
        .collect();
    if model.f_atoms().kernel.is_some() || model.tau_atoms().kernel.is_some() {
        out.push(t - r);
    }
    out.push(t - tau);
    out
}

pub(crate) fn initial_seeds(phi: &Trajectory) -> Vec<Breakpoint> {
    phi.knots().iter().map(|&t| Breakpoint { t, generation: 0 }).collect()
}

struct SolutionField<'a> {
    model: &'a ModelSpec,
    theta: &'a DVector<f64>,
    xi: &'a DVector<f64>,
    tau_min: f64,
}

impl SolutionField<'_> {
    fn tau(&self, t: f64, seg: &Segment<'_>) -> Result<f64> {
        let tau = self.model.eval_tau(t, seg, self.xi)?;
        if tau < self.tau_min {
            return Err(SddeError::VanishingDelay { t, tau, tau_min: self.tau_min });
        }
        Ok(tau)
    }
}

impl DelayField for SolutionField<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn rate(&self, t: f64, seg: &Segment<'_>, _side: Side) -> Result<DVector<f64>> {
        let tau = self.tau(t, seg)?;
        let u = seg.eval(-tau)?;
        self.model.eval_f(t, seg, &u, self.theta)
    }

    fn arrivals(&self, t: f64, seg: &Segment<'_>) -> Result<Vec<f64>> {
        Ok(lag_arrivals(self.model, t, self.tau(t, seg)?))
    }
}

/// Solves the initial value problem on `[-r, cfg.max_alpha]`.
///
/// Breakpoints of `φ` (its knots, including `0`) are propagated through all
/// lag arrivals up to `cfg.discontinuity_depth` generations; every tracked
/// breakpoint is a knot of the result.
pub fn solve(model: &ModelSpec, gamma: &Parameter, cfg: &SolveConfig) -> Result<Trajectory> {
    cfg.validate(model)?;
    check_parameter(model, gamma)?;
    let field = SolutionField { model, theta: &gamma.theta, xi: &gamma.xi, tau_min: cfg.tau_min };
    let seeds = initial_seeds(&gamma.phi);
    Ok(integrate(&field, &gamma.phi, cfg, cfg.max_alpha, &[], &seeds)?.traj)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompatReport {
    /// `φ̇(0−)`.
    pub lhs: Vec<f64>,
    /// `f(0, φ, φ(−τ(0, φ, ξ)), θ)`.
    pub rhs: Vec<f64>,
    pub residual: f64,
    pub tolerance: f64,
    pub compatible: bool,
}

/// Compares the left slope of `φ` at `0` with the right-hand side at `t = 0`.
pub fn check_compatibility(model: &ModelSpec, gamma: &Parameter, tol: f64) -> Result<CompatReport> {
    check_parameter(model, gamma)?;
    let seg = gamma.phi.segment(0.0)?;
    let lhs = gamma.phi.eval_d1(0.0, Side::Left)?;
    let tau = model.eval_tau(0.0, &seg, &gamma.xi)?;
    let u = seg.eval(-tau)?;
    let rhs = model.eval_f(0.0, &seg, &u, &gamma.theta)?;
    let residual = inf_norm(&(&lhs - &rhs));
    Ok(CompatReport {
        lhs: lhs.iter().copied().collect(),
        rhs: rhs.iter().copied().collect(),
        residual,
        tolerance: tol,
        compatible: residual <= tol,
    })
}

/// `max_h |x(·, γ + εh) − x(·, γ)|_{W^{1,∞}} / (ε |h|_Γ)` over the given
/// directions; zero directions are skipped.
pub fn lipschitz_probe(
    model: &ModelSpec,
    gamma: &Parameter,
    cfg: &SolveConfig,
    directions: &[Direction],
    eps: f64,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(SddeError::Invalid(format!("eps must be positive, got {eps}")));
    }
    let base = solve(model, gamma, cfg)?;
    let quotients: Vec<f64> = directions
        .par_iter()
        .filter(|d| d.norm() > 0.0)
        .map(|d| {
            let moved = solve(model, &gamma.offset(eps, d)?, cfg)?;
            let diff = Trajectory::linear_combination(1.0, &moved, -1.0, &base)?;
            Ok(diff.norm_w1inf() / (eps * d.norm()))
        })
        .collect::<Result<_>>()?;
    Ok(quotients.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ArgLayout, ConstantTau, DelayAtomSet, LinearCore};
    use nalgebra::dvector;
    use std::sync::Arc;

    fn linear_model() -> ModelSpec {
        let fl = ArgLayout { n: 1, lags: 0, kernel: 0, state: true, params: 1 };
        ModelSpec::new(
            1,
            1,
            0,
            1.0,
            5.0,
            DelayAtomSet::empty(),
            Arc::new(LinearCore::new(fl).unwrap()),
            DelayAtomSet::empty(),
            Arc::new(ConstantTau { arity: 0, value: 1.0 }),
        )
        .unwrap()
    }

    fn gamma(phi: Trajectory, theta: f64) -> Parameter {
        Parameter::new(phi, dvector![theta], dvector![]).unwrap()
    }

    #[test]
    fn constant_history_linear_model() {
        let m = linear_model();
        let g = gamma(Trajectory::constant(dvector![1.0], -1.0, 0.0).unwrap(), -1.0);
        let x = solve(&m, &g, &SolveConfig::new(1e-2, 2.0)).unwrap();
        assert!(x.eval(1.0).unwrap()[0].abs() < 1e-13);
        assert!((x.eval(2.0).unwrap()[0] + 0.5).abs() < 1e-13);
        assert!((x.eval(0.37).unwrap()[0] - 0.63).abs() < 1e-13);
        assert!(x.breakpoints().iter().any(|b| b.t == 1.0 && b.generation == 1));
        assert!(x.breakpoints().iter().any(|b| b.t == 2.0 && b.generation == 2));
    }

    #[test]
    fn zero_rhs_keeps_constant() {
        let m = linear_model();
        let g = gamma(Trajectory::constant(dvector![2.5], -1.0, 0.0).unwrap(), 0.0);
        let x = solve(&m, &g, &SolveConfig::new(0.1, 3.0)).unwrap();
        for t in [0.0, 0.55, 1.0, 2.9, 3.0] {
            assert_eq!(x.eval(t).unwrap()[0], 2.5);
        }
    }

    #[test]
    fn compatibility_examples() {
        let m = linear_model();
        let flat = gamma(Trajectory::constant(dvector![1.0], -1.0, 0.0).unwrap(), -1.0);
        let rep = check_compatibility(&m, &flat, 1e-8).unwrap();
        assert_eq!((rep.lhs[0], rep.rhs[0], rep.compatible), (0.0, -1.0, false));
        let ramp = gamma(Trajectory::polynomial(&[vec![0.0, -1.0]], -1.0, 0.0).unwrap(), -1.0);
        let rep = check_compatibility(&m, &ramp, 1e-8).unwrap();
        assert_eq!((rep.lhs[0], rep.rhs[0], rep.compatible), (-1.0, -1.0, true));
    }

    #[test]
    fn tau_below_minimum_is_reported() {
        let fl = ArgLayout { n: 1, lags: 0, kernel: 0, state: true, params: 1 };
        let m = ModelSpec::new(
            1,
            1,
            0,
            1.0,
            5.0,
            DelayAtomSet::empty(),
            Arc::new(LinearCore::new(fl).unwrap()),
            DelayAtomSet::empty(),
            Arc::new(ConstantTau { arity: 0, value: 1e-9 }),
        )
        .unwrap();
        let g = gamma(Trajectory::constant(dvector![1.0], -1.0, 0.0).unwrap(), -1.0);
        assert!(matches!(solve(&m, &g, &SolveConfig::new(0.1, 1.0)), Err(SddeError::VanishingDelay { .. })));
    }

    #[test]
    fn lipschitz_probe_zero_for_zero_rhs_theta_only() {
        // f = θ·u with u ≡ 0 does not move under θ
        let m = linear_model();
        let g = gamma(Trajectory::constant(dvector![0.0], -1.0, 0.0).unwrap(), -1.0);
        let dirs = g.canonical_directions();
        let l = lipschitz_probe(&m, &g, &SolveConfig::new(0.1, 2.0), &dirs, 1e-3).unwrap();
        assert_eq!(l, 0.0);
    }
}
