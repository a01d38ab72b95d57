//! Per-time linearization data along a fixed solution, shared by the first
//! and second variational equations.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use nalgebra::DVector;

use crate::error::Result;
use crate::lag::lag_rate;
use crate::model::{Linearization, ModelSpec};
use crate::solver::snap;
use crate::trajectory::{Parameter, Segment, Side, Trajectory};

/// Below this `|u̇|` the approach direction of `u(t)` to a knot is undecided.
pub(crate) const TIE_SLOPE: f64 = 1e-8;

pub(crate) struct Frame {
    pub tau: f64,
    /// `u(t) = t − τ(t, x_t, ξ)`.
    pub u: f64,
    /// Side used for one-sided derivatives at `u(t)`, from the sign of `u̇`.
    pub u_side: Side,
    /// `u(t)` sits on a knot while `u̇(t) ≈ 0`.
    pub tie: bool,
    pub xdot_u: DVector<f64>,
    pub xddot_u: Option<DVector<f64>>,
    pub f: Linearization,
    pub tau_lin: Linearization,
}

impl Frame {
    /// `A = D₂τ·h^φ + D₃τ·h^ξ`.
    pub fn a(&self, h: &Segment<'_>, h_xi: Option<&DVector<f64>>) -> Result<f64> {
        Ok(self.tau_lin.first(&self.tau_lin.lift(Some(h), None, h_xi)?)[0])
    }

    /// `E = −ẋ(u)·A + h^φ(−τ)` given `A`.
    pub fn e(&self, h: &Segment<'_>, a: f64) -> Result<DVector<f64>> {
        Ok(h.eval(-self.tau)? - &self.xdot_u * a)
    }

    /// `ḣ^φ(−τ)` with the frame's side convention.
    pub fn slope_at_lag(&self, h: &Segment<'_>) -> Result<DVector<f64>> {
        h.eval_d1_snapped(-self.tau, self.u_side, snap(self.u))
    }
}

/// Which one-sided limit of a function of `u` is seen when `t` approaches
/// from `time_side` and `u` moves with slope `u_dot`.
pub(crate) fn approach_side(time_side: Side, u_dot: f64) -> Side {
    if (u_dot > 0.0) == (time_side == Side::Right) {
        Side::Right
    } else {
        Side::Left
    }
}

pub(crate) struct FrameCache<'a> {
    model: &'a ModelSpec,
    gamma: &'a Parameter,
    x: &'a Trajectory,
    second: bool,
    frames: RwLock<HashMap<(u64, Side), Arc<Frame>>>,
}

impl<'a> FrameCache<'a> {
    pub fn new(model: &'a ModelSpec, gamma: &'a Parameter, x: &'a Trajectory, second: bool) -> Self {
        Self { model, gamma, x, second, frames: RwLock::new(HashMap::new()) }
    }

    pub fn get(&self, t: f64, side: Side) -> Result<Arc<Frame>> {
        let key = (t.to_bits(), side);
        if let Some(f) = self.frames.read().expect("frame cache poisoned").get(&key) {
            return Ok(f.clone());
        }
        let frame = Arc::new(self.build(t, side)?);
        self.frames.write().expect("frame cache poisoned").insert(key, frame.clone());
        Ok(frame)
    }

    fn build(&self, t: f64, side: Side) -> Result<Frame> {
        let (model, gamma, x) = (self.model, self.gamma, self.x);
        let seg = x.segment(t)?;
        let tau = model.eval_tau(t, &seg, &gamma.xi)?;
        let u = t - tau;
        let x_u = seg.eval(-tau)?;
        let u_dot = lag_rate(model, gamma, x, t)?;
        let undecided = u_dot.abs() <= TIE_SLOPE;
        let u_side = if undecided { Side::Right } else { approach_side(side, u_dot) };
        let knot = x.knot_near(u, snap(u));
        let tie = undecided && knot.is_some();
        let at = knot.unwrap_or(u);
        let xdot_u = x.eval_d1(at, u_side)?;
        let xddot_u = if self.second { Some(x.eval_d2(at, u_side)?) } else { None };
        let f = model.linearize_f(t, &seg, &x_u, &gamma.theta, self.second)?;
        let tau_lin = model.linearize_tau(t, &seg, &gamma.xi, self.second)?;
        Ok(Frame { tau, u, u_side, tie, xdot_u, xddot_u, f, tau_lin })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn approach_side_rules() {
        assert_eq!(approach_side(Side::Right, 1.0), Side::Right);
        assert_eq!(approach_side(Side::Right, -1.0), Side::Left);
        assert_eq!(approach_side(Side::Left, 1.0), Side::Left);
        assert_eq!(approach_side(Side::Left, -1.0), Side::Right);
    }
}
