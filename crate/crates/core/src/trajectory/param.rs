use nalgebra::DVector;

use super::Trajectory;
use crate::error::{Result, SddeError};
use crate::numerics::inf_norm;

/// A point `γ = (φ, θ, ξ)` of the parameter space: initial function on
/// `[-r, 0]`, right-hand-side parameters and delay parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub phi: Trajectory,
    pub theta: DVector<f64>,
    pub xi: DVector<f64>,
}

/// Perturbation directions live in the same space as parameters.
pub type Direction = Parameter;

impl Parameter {
    pub fn new(phi: Trajectory, theta: DVector<f64>, xi: DVector<f64>) -> Result<Self> {
        if phi.end() != 0.0 || !(phi.start() < 0.0) {
            return Err(SddeError::Invalid(format!(
                "initial function must live on [-r, 0], got [{}, {}]",
                phi.start(),
                phi.end()
            )));
        }
        Ok(Self { phi, theta, xi })
    }

    /// The all-zero parameter with a single-piece `φ`.
    pub fn zero(dim: usize, r: f64, p: usize, q: usize) -> Result<Self> {
        Self::new(Trajectory::zero(dim, -r, 0.0)?, DVector::zeros(p), DVector::zeros(q))
    }

    pub fn zero_like(&self) -> Self {
        Self::zero(self.phi.dim(), self.delay_bound(), self.theta.len(), self.xi.len())
            .expect("shape copied from a valid parameter")
    }

    pub fn delay_bound(&self) -> f64 {
        -self.phi.start()
    }

    /// `|φ|_{W^{1,∞}} + |θ|_∞ + |ξ|_∞`.
    pub fn norm(&self) -> f64 {
        self.phi.norm_w1inf() + inf_norm(&self.theta) + inf_norm(&self.xi)
    }

    pub fn combine(a: f64, x: &Parameter, b: f64, y: &Parameter) -> Result<Parameter> {
        if x.theta.len() != y.theta.len() || x.xi.len() != y.xi.len() {
            return Err(SddeError::Invalid("parameter shapes differ".into()));
        }
        let phi = Trajectory::linear_combination(a, &x.phi, b, &y.phi)?;
        let mut theta = &x.theta * a;
        theta.axpy(b, &y.theta, 1.0);
        let mut xi = &x.xi * a;
        xi.axpy(b, &y.xi, 1.0);
        Ok(Parameter { phi, theta, xi })
    }

    /// `γ + s·d`.
    pub fn offset(&self, s: f64, d: &Direction) -> Result<Parameter> {
        Self::combine(1.0, self, s, d)
    }

    pub fn theta_direction(&self, i: usize) -> Direction {
        let mut d = self.zero_like();
        d.theta[i] = 1.0;
        d
    }

    pub fn xi_direction(&self, j: usize) -> Direction {
        let mut d = self.zero_like();
        d.xi[j] = 1.0;
        d
    }

    /// A pure-`φ` direction.
    pub fn phi_direction(&self, phi: Trajectory) -> Result<Direction> {
        let mut d = self.zero_like();
        if phi.dim() != self.phi.dim() || phi.start() != self.phi.start() || phi.end() != 0.0 {
            return Err(SddeError::Invalid("phi direction has the wrong shape".into()));
        }
        d.phi = phi;
        Ok(d)
    }

    /// Unit directions along every `θ` component, then every `ξ` component.
    pub fn canonical_directions(&self) -> Vec<Direction> {
        (0..self.theta.len())
            .map(|i| self.theta_direction(i))
            .chain((0..self.xi.len()).map(|j| self.xi_direction(j)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn gamma() -> Parameter {
        let phi = Trajectory::polynomial(&[vec![0.5, -2.0]], -1.0, 0.0).unwrap();
        Parameter::new(phi, dvector![-1.0, 3.0], dvector![0.25]).unwrap()
    }

    #[test]
    fn norm_adds_the_three_parts() {
        // |φ|_{W1∞} = max(2.5, 2) on [-1, 0]
        assert!((gamma().norm() - (2.5 + 3.0 + 0.25)).abs() < 1e-15);
    }

    #[test]
    fn offset_then_back_returns_start() {
        let g = gamma();
        let d = g.theta_direction(1);
        let back = g.offset(0.3, &d).unwrap().offset(-0.3, &d).unwrap();
        assert!((back.theta[1] - 3.0).abs() < 1e-15);
        assert_eq!(back.xi, g.xi);
    }

    #[test]
    fn phi_must_end_at_zero() {
        let phi = Trajectory::zero(1, -1.0, 0.5).unwrap();
        assert!(Parameter::new(phi, dvector![], dvector![]).is_err());
    }

    #[test]
    fn canonical_directions_are_unit() {
        let dirs = gamma().canonical_directions();
        assert_eq!(dirs.len(), 3);
        assert!(dirs.iter().all(|d| (d.norm() - 1.0).abs() < 1e-15));
        assert_eq!(dirs[2].xi[0], 1.0);
    }
}
