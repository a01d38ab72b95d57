//! Second-order sensitivities: the inhomogeneous linear delay equation
//! `ẇ(t) = L(t, x)(w_t, 0, 0) + B(t)⟨(z^h_t, h^θ, h^ξ), (z^y_t, y^θ, y^ξ)⟩`,
//! `w = 0` on `[-r, 0]`.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Result, SddeError};
use crate::frames::{Frame, FrameCache};
use crate::model::ModelSpec;
use crate::sens1::{check_direction, lag_is_pm, sensitivities, variation_seeds, FirstVariation};
use crate::solver::{check_compatibility, check_parameter, integrate, lag_arrivals, DelayField, SolveConfig};
use crate::trajectory::{Direction, Parameter, Segment, Side, Trajectory};

/// Slope continuity tolerance when deciding whether `φ` is `C¹`.
const C1_TOL: f64 = 1e-10;

/// A direction component: history segment plus `θ`, `ξ` parts.
#[derive(Clone, Copy)]
pub struct Arg<'a> {
    pub phi: &'a Segment<'a>,
    pub theta: &'a DVector<f64>,
    pub xi: &'a DVector<f64>,
}

/// The operators `A, E, F, G, H, B` at one time `s`.
pub struct OperatorBundle {
    frame: std::sync::Arc<Frame>,
}

impl OperatorBundle {
    /// `A(s, h^φ, h^ξ) = D₂τ·h^φ + D₃τ·h^ξ`.
    pub fn a(&self, h: Arg<'_>) -> Result<f64> {
        self.frame.a(h.phi, Some(h.xi))
    }

    /// `E(s, h^φ, h^ξ) = −ẋ(u(s))·A + h^φ(−τ)`.
    pub fn e(&self, h: Arg<'_>) -> Result<DVector<f64>> {
        self.frame.e(h.phi, self.a(h)?)
    }

    /// `F(s, h^φ, h^ξ) = −ẍ(u(s))·A + ḣ^φ(−τ)`.
    pub fn f_op(&self, h: Arg<'_>) -> Result<DVector<f64>> {
        let a = self.a(h)?;
        let xdd = self.frame.xddot_u.as_ref().expect("bundle built with second derivatives");
        Ok(self.frame.slope_at_lag(h.phi)? - xdd * a)
    }

    /// `G(s)⟨h, y⟩ = Σ_{i,j ∈ {2,3}} D_ij τ⟨h_i, y_j⟩`.
    pub fn g(&self, h: Arg<'_>, y: Arg<'_>) -> Result<f64> {
        let t = &self.frame.tau_lin;
        Ok(t.bilinear(&t.lift(Some(h.phi), None, Some(h.xi))?, &t.lift(Some(y.phi), None, Some(y.xi))?)[0])
    }

    /// `H(s)⟨h, y⟩ = −A(h)·F(y) − ẋ(u(s))·G⟨h, y⟩ − ḣ^φ(−τ)·A(y)`.
    pub fn h_op(&self, h: Arg<'_>, y: Arg<'_>) -> Result<DVector<f64>> {
        let fy = self.f_op(y)?;
        let ah = self.a(h)?;
        let ay = self.a(y)?;
        let g = self.g(h, y)?;
        let hdot = self.frame.slope_at_lag(h.phi)?;
        Ok(-(fy * ah) - &self.frame.xdot_u * g - hdot * ay)
    }

    /// `B(s)⟨h, y⟩`: the nine `D_ij f` terms over slots (history, delayed
    /// state through `E`, `θ`) plus `D₃f·H⟨h, y⟩`.
    pub fn b(&self, h: Arg<'_>, y: Arg<'_>) -> Result<DVector<f64>> {
        let f = &self.frame.f;
        let lh = f.lift(Some(h.phi), Some(&self.e(h)?), Some(h.theta))?;
        let ly = f.lift(Some(y.phi), Some(&self.e(y)?), Some(y.theta))?;
        let hh = self.h_op(h, y)?;
        Ok(f.bilinear(&lh, &ly) + f.first(&f.lift(None, Some(&hh), None)?))
    }
}

fn require_compatible(model: &ModelSpec, gamma: &Parameter, cfg_tol: f64) -> Result<()> {
    let rep = check_compatibility(model, gamma, cfg_tol)?;
    if !rep.compatible {
        return Err(SddeError::Hypothesis(format!(
            "initial data incompatible: φ'(0-) = {:?}, f at 0 = {:?} (residual {:e} > {:e})",
            rep.lhs, rep.rhs, rep.residual, rep.tolerance
        )));
    }
    Ok(())
}

/// Operators at time `s` (right-hand limits where one-sided values differ).
/// Fails with [`SddeError::Hypothesis`] when `γ` is incompatible.
pub fn assemble_operators(model: &ModelSpec, gamma: &Parameter, traj: &Trajectory, s: f64) -> Result<OperatorBundle> {
    check_parameter(model, gamma)?;
    require_compatible(model, gamma, SolveConfig::DEFAULT_COMPAT_TOL)?;
    let cache = FrameCache::new(model, gamma, traj, true);
    Ok(OperatorBundle { frame: cache.get(s, Side::Right)? })
}

#[derive(Debug, Clone)]
pub struct SecondVariation {
    pub w: Trajectory,
    pub pair: (Direction, Direction),
    pub compatible: bool,
    pub is_pm: bool,
    /// `φ` is `C¹`, so its piecewise cubic representation lies in `W^{2,∞}`.
    pub phi_w2inf: bool,
    pub hypothesis_unverified: bool,
    pub sup_norm: f64,
}

struct SecondField<'a> {
    model: &'a ModelSpec,
    cache: &'a FrameCache<'a>,
    zh: &'a Trajectory,
    zy: &'a Trajectory,
    h: &'a Direction,
    y: &'a Direction,
}

impl DelayField for SecondField<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn rate(&self, t: f64, seg: &Segment<'_>, side: Side) -> Result<DVector<f64>> {
        let frame = self.cache.get(t, side)?;
        let ops = OperatorBundle { frame };
        let fr = &ops.frame;
        let aw = fr.a(seg, None)?;
        let ew = fr.e(seg, aw)?;
        let l = fr.f.first(&fr.f.lift(Some(seg), Some(&ew), None)?);
        let sh = self.zh.segment(t)?;
        let sy = self.zy.segment(t)?;
        let h = Arg { phi: &sh, theta: &self.h.theta, xi: &self.h.xi };
        let y = Arg { phi: &sy, theta: &self.y.theta, xi: &self.y.xi };
        Ok(l + ops.b(h, y)?)
    }

    fn arrivals(&self, t: f64, _seg: &Segment<'_>) -> Result<Vec<f64>> {
        let fr = self.cache.get(t, Side::Right)?;
        Ok(lag_arrivals(self.model, t, fr.tau))
    }
}

struct Gate {
    is_pm: bool,
    phi_w2inf: bool,
}

fn gate(model: &ModelSpec, gamma: &Parameter, traj: &Trajectory, cfg: &SolveConfig) -> Result<Gate> {
    check_parameter(model, gamma)?;
    require_compatible(model, gamma, cfg.compat_tol)?;
    Ok(Gate { is_pm: lag_is_pm(model, gamma, traj), phi_w2inf: gamma.phi.is_c1(C1_TOL) })
}

fn solve_pair(
    model: &ModelSpec,
    traj: &Trajectory,
    cache: &FrameCache<'_>,
    zh: &FirstVariation,
    zy: &FirstVariation,
    cfg: &SolveConfig,
    g: &Gate,
) -> Result<SecondVariation> {
    let (h, y) = (&zh.direction, &zy.direction);
    let field = SecondField { model, cache, zh: &zh.z, zy: &zy.z, h, y };
    let zero = Trajectory::zero(model.dim(), -model.delay_bound(), 0.0)?;
    let mut stops: Vec<f64> = traj.knots().to_vec();
    stops.extend_from_slice(zh.z.knots());
    stops.extend_from_slice(zy.z.knots());
    stops.retain(|&t| t > 0.0);
    stops.sort_by(f64::total_cmp);
    stops.dedup();
    let seeds = variation_seeds(traj, &[&h.phi, &y.phi]);
    let run = integrate(&field, &zero, cfg, traj.end(), &stops, &seeds)?;
    Ok(SecondVariation {
        sup_norm: run.traj.sup_norm(),
        w: run.traj,
        pair: (h.clone(), y.clone()),
        compatible: true,
        is_pm: g.is_pm,
        phi_w2inf: g.phi_w2inf,
        hypothesis_unverified: !(g.is_pm && g.phi_w2inf),
    })
}

/// Solves the second variational equation for the pair `(h, y)`, reusing
/// first variations when supplied.
pub fn solve_second_variation_with(
    model: &ModelSpec,
    gamma: &Parameter,
    traj: &Trajectory,
    zh: &FirstVariation,
    zy: &FirstVariation,
    cfg: &SolveConfig,
) -> Result<SecondVariation> {
    let g = gate(model, gamma, traj, cfg)?;
    check_direction(model, &zh.direction)?;
    check_direction(model, &zy.direction)?;
    let cache = FrameCache::new(model, gamma, traj, true);
    solve_pair(model, traj, &cache, zh, zy, cfg, &g)
}

pub fn solve_second_variation(
    model: &ModelSpec,
    gamma: &Parameter,
    traj: &Trajectory,
    h: &Direction,
    y: &Direction,
    cfg: &SolveConfig,
) -> Result<SecondVariation> {
    let g = gate(model, gamma, traj, cfg)?;
    let z = sensitivities(model, gamma, traj, &[h.clone(), y.clone()], cfg)?;
    let cache = FrameCache::new(model, gamma, traj, true);
    solve_pair(model, traj, &cache, &z[0], &z[1], cfg, &g)
}

/// Second variations over all basis pairs; only `i ≤ j` is solved and the
/// result mirrored, so `table[i][j]` and `table[j][i]` share one solve.
pub fn hessian_tensor(
    model: &ModelSpec,
    gamma: &Parameter,
    traj: &Trajectory,
    basis: &[Direction],
    cfg: &SolveConfig,
) -> Result<Vec<Vec<SecondVariation>>> {
    if basis.is_empty() {
        return Ok(Vec::new());
    }
    let g = gate(model, gamma, traj, cfg)?;
    let z = sensitivities(model, gamma, traj, basis, cfg)?;
    let cache = FrameCache::new(model, gamma, traj, true);
    let pairs: Vec<(usize, usize)> = (0..basis.len()).flat_map(|i| (i..basis.len()).map(move |j| (i, j))).collect();
    let solved: Vec<SecondVariation> = pairs
        .par_iter()
        .map(|&(i, j)| solve_pair(model, traj, &cache, &z[i], &z[j], cfg, &g))
        .collect::<Result<_>>()?;
    let n = basis.len();
    let mut table: Vec<Vec<Option<SecondVariation>>> = vec![vec![None; n]; n];
    for ((i, j), w) in pairs.into_iter().zip(solved) {
        if i != j {
            table[j][i] = Some(w.clone());
        }
        table[i][j] = Some(w);
    }
    Ok(table.into_iter().map(|row| row.into_iter().map(|w| w.expect("every pair solved")).collect()).collect())
}
