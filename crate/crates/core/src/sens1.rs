//! First-order sensitivities: the variational equation
//! `ż(t) = L(t, x)(z_t, h^θ, h^ξ)`, `z = h^φ` on `[-r, 0]`.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Result, SddeError};
use crate::frames::FrameCache;
use crate::lag::{classify_pm, lag_profile};
use crate::model::ModelSpec;
use crate::solver::{check_parameter, integrate, lag_arrivals, DelayField, SolveConfig};
use crate::trajectory::{Breakpoint, Direction, Parameter, Segment, Side, Trajectory};

/// Grid density (points per unit time) of the monotonicity check run before
/// a variational solve.
pub const HYPOTHESIS_GRID_DENSITY: f64 = 2000.0;

#[derive(Debug, Clone)]
pub struct FirstVariation {
    pub z: Trajectory,
    pub direction: Direction,
    pub sup_norm: f64,
    /// Breakpoints found by propagation during the solve.
    pub crossings: usize,
    /// The lag was not certified piecewise monotone on `[0, min(r, α)]`.
    pub hypothesis_unverified: bool,
    /// Evaluations where `u(t)` hit a knot with `u̇ ≈ 0` (right side used).
    pub tie_flags: usize,
}

/// `L(t, x)(h, h^θ, h^ξ) = D₂f·h + D₃f·[−ẋ(u(t))·(D₂τ·h + D₃τ·h^ξ) + h(−τ)] + D₄f·h^θ`.
///
/// `side` is the side of `t` from which the value is taken; it selects the
/// one-sided `ẋ(u(t))` when `u(t)` lands on a knot of `x`.
#[allow(clippy::too_many_arguments)]
pub fn apply_l(
    model: &ModelSpec,
    gamma: &Parameter,
    traj: &Trajectory,
    t: f64,
    side: Side,
    h: &Segment<'_>,
    h_theta: &DVector<f64>,
    h_xi: &DVector<f64>,
) -> Result<DVector<f64>> {
    let cache = FrameCache::new(model, gamma, traj, false);
    apply_l_cached(&cache, t, side, h, h_theta, h_xi).map(|(v, _)| v)
}

pub(crate) fn apply_l_cached(
    cache: &FrameCache<'_>,
    t: f64,
    side: Side,
    h: &Segment<'_>,
    h_theta: &DVector<f64>,
    h_xi: &DVector<f64>,
) -> Result<(DVector<f64>, bool)> {
    let fr = cache.get(t, side)?;
    let a = fr.a(h, Some(h_xi))?;
    let e = fr.e(h, a)?;
    Ok((fr.f.first(&fr.f.lift(Some(h), Some(&e), Some(h_theta))?), fr.tie))
}

struct FirstField<'a> {
    model: &'a ModelSpec,
    cache: &'a FrameCache<'a>,
    h_theta: &'a DVector<f64>,
    h_xi: &'a DVector<f64>,
    ties: AtomicUsize,
}

impl DelayField for FirstField<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn rate(&self, t: f64, seg: &Segment<'_>, side: Side) -> Result<DVector<f64>> {
        let (v, tie) = apply_l_cached(self.cache, t, side, seg, self.h_theta, self.h_xi)?;
        if tie {
            self.ties.fetch_add(1, Ordering::Relaxed);
        }
        Ok(v)
    }

    fn arrivals(&self, t: f64, _seg: &Segment<'_>) -> Result<Vec<f64>> {
        let fr = self.cache.get(t, Side::Right)?;
        Ok(lag_arrivals(self.model, t, fr.tau))
    }
}

pub(crate) fn check_direction(model: &ModelSpec, h: &Direction) -> Result<()> {
    check_parameter(model, h).map_err(|e| match e {
        SddeError::Invalid(m) => SddeError::Invalid(format!("direction: {m}")),
        other => other,
    })
}

/// Whether the lag is certified piecewise monotone on `[0, min(r, α)]`.
pub(crate) fn lag_is_pm(model: &ModelSpec, gamma: &Parameter, traj: &Trajectory) -> bool {
    let end = model.delay_bound().min(traj.end());
    lag_profile(model, gamma, traj, HYPOTHESIS_GRID_DENSITY, Some(end))
        .and_then(|p| classify_pm(&p, 1e-8, 2))
        .map(|r| r.is_pm)
        .unwrap_or(false)
}

/// Breakpoints from which a variation's own breakpoints propagate: the
/// generation-0 breakpoints of `x` and the knots of the direction's `φ` part.
pub(crate) fn variation_seeds(x: &Trajectory, extra: &[&Trajectory]) -> Vec<Breakpoint> {
    let mut seeds: Vec<Breakpoint> = x.breakpoints().iter().copied().filter(|b| b.generation == 0).collect();
    for tr in extra {
        seeds.extend(tr.knots().iter().filter(|&&t| t <= 0.0).map(|&t| Breakpoint { t, generation: 0 }));
    }
    seeds
}

fn solve_with(
    model: &ModelSpec,
    traj: &Trajectory,
    cache: &FrameCache<'_>,
    h: &Direction,
    cfg: &SolveConfig,
    hypothesis_unverified: bool,
) -> Result<FirstVariation> {
    check_direction(model, h)?;
    let field = FirstField { model, cache, h_theta: &h.theta, h_xi: &h.xi, ties: AtomicUsize::new(0) };
    let seeds = variation_seeds(traj, &[&h.phi]);
    let run = integrate(&field, &h.phi, cfg, traj.end(), traj.knots(), &seeds)?;
    Ok(FirstVariation {
        sup_norm: run.traj.sup_norm(),
        z: run.traj,
        direction: h.clone(),
        crossings: run.crossings,
        hypothesis_unverified,
        tie_flags: field.ties.into_inner(),
    })
}

/// Solves the variational equation for direction `h` along `traj = x(·, γ)`.
pub fn solve_first_variation(
    model: &ModelSpec,
    gamma: &Parameter,
    traj: &Trajectory,
    h: &Direction,
    cfg: &SolveConfig,
) -> Result<FirstVariation> {
    check_parameter(model, gamma)?;
    let cache = FrameCache::new(model, gamma, traj, false);
    let unverified = !lag_is_pm(model, gamma, traj);
    solve_with(model, traj, &cache, h, cfg, unverified)
}

/// First variations for several directions, solved concurrently over one
/// shared linearization.
pub fn sensitivities(
    model: &ModelSpec,
    gamma: &Parameter,
    traj: &Trajectory,
    directions: &[Direction],
    cfg: &SolveConfig,
) -> Result<Vec<FirstVariation>> {
    check_parameter(model, gamma)?;
    if directions.is_empty() {
        return Ok(Vec::new());
    }
    let cache = FrameCache::new(model, gamma, traj, false);
    let unverified = !lag_is_pm(model, gamma, traj);
    directions.par_iter().map(|h| solve_with(model, traj, &cache, h, cfg, unverified)).collect()
}

/// Columns: unit `θ` directions, unit `ξ` directions, then `phi_basis`.
pub fn sensitivity_matrix(
    model: &ModelSpec,
    gamma: &Parameter,
    traj: &Trajectory,
    phi_basis: &[Direction],
    cfg: &SolveConfig,
) -> Result<Vec<FirstVariation>> {
    let mut dirs = gamma.canonical_directions();
    dirs.extend(phi_basis.iter().cloned());
    sensitivities(model, gamma, traj, &dirs, cfg)
}
