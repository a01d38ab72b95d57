#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{dmatrix, dvector, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sdde::model::{
    ArgLayout, ConstantLag, ConstantTau, DelayAtomSet, Kernel, LagFunction, LinearCore, ModelSpec, RationalTau,
    SinTimeTau, SineFeatureCore, SinusoidalLag, TanhTau,
};
use sdde::solver::SolveConfig;
use sdde::trajectory::{Direction, Parameter, Trajectory};

pub fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| a + (b - a) * k as f64 / n as f64).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `ẋ = θ·x(t − 1)`, `r = 1`.
pub fn linear_model(horizon: f64) -> ModelSpec {
    let fl = ArgLayout { n: 1, lags: 0, kernel: 0, state: true, params: 1 };
    ModelSpec::new(
        1,
        1,
        0,
        1.0,
        horizon,
        DelayAtomSet::empty(),
        Arc::new(LinearCore::new(fl).unwrap()),
        DelayAtomSet::empty(),
        Arc::new(ConstantTau { arity: 0, value: 1.0 }),
    )
    .unwrap()
}

/// Linear-model parameter with polynomial `φ` (ascending coefficients in `s`).
pub fn linear_gamma(phi: &[f64], theta: f64) -> Parameter {
    Parameter::new(Trajectory::polynomial(&[phi.to_vec()], -1.0, 0.0).unwrap(), dvector![theta], dvector![]).unwrap()
}

/// Exact solution of `ẋ = θ·x(t − 1)` with polynomial history, built by
/// integrating polynomials interval by interval. Piece `k` covers `[k − 1, k]`.
#[derive(Debug, Clone)]
pub struct PiecewisePoly {
    pub pieces: Vec<Vec<f64>>,
}

fn poly_eval(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * t + a)
}

fn poly_shift_back(c: &[f64]) -> Vec<f64> {
    // coefficients of p(s − 1)
    let mut out = vec![0.0; c.len()];
    for (k, &a) in c.iter().enumerate() {
        let mut binom = 1.0;
        for (j, o) in out.iter_mut().enumerate().take(k + 1) {
            // term a·C(k, j)·s^j·(−1)^{k−j}
            let sign = if (k - j) % 2 == 0 { 1.0 } else { -1.0 };
            *o += a * binom * sign;
            binom = binom * (k - j) as f64 / (j + 1) as f64;
        }
    }
    out
}

impl PiecewisePoly {
    pub fn linear_model(phi: &[f64], theta: f64, intervals: usize) -> Self {
        let mut pieces = vec![phi.to_vec()];
        for k in 1..=intervals {
            let prev = &pieces[k - 1];
            let shifted = poly_shift_back(prev);
            let mut anti = vec![0.0; shifted.len() + 1];
            for (j, &a) in shifted.iter().enumerate() {
                anti[j + 1] = theta * a / (j + 1) as f64;
            }
            let start = (k - 1) as f64;
            anti[0] = poly_eval(prev, start) - poly_eval(&anti, start);
            pieces.push(anti);
        }
        Self { pieces }
    }

    fn index(&self, t: f64) -> usize {
        let k = (t.ceil().max(0.0)) as usize;
        k.min(self.pieces.len() - 1)
    }

    pub fn eval(&self, t: f64) -> f64 {
        poly_eval(&self.pieces[self.index(t)], t)
    }
}

/// `ẋ = θ₁·x(t − τ)`, `τ = ξ₁ + ξ₂·tanh(x(t))`, `r = 1`.
pub fn sd_model(horizon: f64) -> ModelSpec {
    let fl = ArgLayout { n: 1, lags: 0, kernel: 0, state: true, params: 1 };
    let tau_atoms = DelayAtomSet::new(vec![Arc::new(ConstantLag(0.0)) as Arc<dyn LagFunction>], None);
    ModelSpec::new(
        1,
        1,
        2,
        1.0,
        horizon,
        DelayAtomSet::empty(),
        Arc::new(LinearCore::new(fl).unwrap()),
        tau_atoms,
        Arc::new(TanhTau { arity: 3, arg: 0, offset: 1, scale: 2 }),
    )
    .unwrap()
}

/// Compatible linear history `φ(s) = a + b·s` for [`sd_model`].
pub fn sd_gamma(a: f64, theta: f64, xi: [f64; 2]) -> Parameter {
    let tau0 = xi[0] + xi[1] * a.tanh();
    let b = theta * a / (1.0 + theta * tau0);
    Parameter::new(Trajectory::polynomial(&[vec![a, b]], -1.0, 0.0).unwrap(), dvector![theta], DVector::from_row_slice(&xi))
        .unwrap()
}

pub const SD_THETA: f64 = -1.0;
pub const SD_XI: [f64; 2] = [0.5, 0.25];

/// `ẋ = θ·x(t − τ(t))`, `τ = 0.5 + 0.45·sin(2πt)`, `r = 1`.
pub fn sin_lag_model(horizon: f64) -> ModelSpec {
    let fl = ArgLayout { n: 1, lags: 0, kernel: 0, state: true, params: 1 };
    ModelSpec::new(
        1,
        1,
        0,
        1.0,
        horizon,
        DelayAtomSet::empty(),
        Arc::new(LinearCore::new(fl).unwrap()),
        DelayAtomSet::empty(),
        Arc::new(SinTimeTau { arity: 0, mean: 0.5, amplitude: 0.45, frequency: 1.0 }),
    )
    .unwrap()
}

/// Two-dimensional model with point lags, an exponential kernel and a
/// sine-feature core; `τ = ξ / (1 + x₁(t)²)`.
pub fn kernel_model(horizon: f64) -> ModelSpec {
    let lags: Vec<Arc<dyn LagFunction>> = vec![
        Arc::new(ConstantLag(0.0)),
        Arc::new(SinusoidalLag { mean: 0.6, amplitude: 0.2, frequency: 0.5 }),
    ];
    let kernel = Kernel::exponential(dmatrix![0.5, 0.0; 0.2, 0.3], 1.5, 4).unwrap();
    let f_atoms = DelayAtomSet::new(lags, Some(kernel));
    // arguments: x(t) [2], x(t − ν) [2], ∫Kψ [2], u [2], θ [2]
    let m = dmatrix![
        -0.8, 0.1, 0.0, 0.2, 0.3, 0.0, 0.4, 0.0, 1.0, 0.0;
        0.1, -0.6, 0.2, 0.0, 0.0, 0.3, 0.0, 0.5, 0.0, 1.0;
        0.2, 0.2, -0.3, 0.1, 0.1, 0.1, -0.5, 0.2, 0.5, -0.5
    ];
    let w = dmatrix![1.0, 0.0, 0.3; 0.0, 0.8, -0.2];
    let core = SineFeatureCore::new(w, m, dvector![0.3, 0.0, -0.2], dvector![0.1, -0.2, 0.05]).unwrap();
    let tau_atoms = DelayAtomSet::new(vec![Arc::new(ConstantLag(0.0)) as Arc<dyn LagFunction>], None);
    ModelSpec::new(
        2,
        2,
        1,
        1.0,
        horizon,
        f_atoms,
        Arc::new(core),
        tau_atoms,
        Arc::new(RationalTau { arity: 3, arg: 0, scale: 2 }),
    )
    .unwrap()
}

pub const PHI_KNOTS: [f64; 5] = [-1.0, -0.75, -0.5, -0.25, 0.0];

/// `C¹` history on [`PHI_KNOTS`] whose slope at `0` is adjusted by fixed-point
/// iteration until it equals the right-hand side at `t = 0`.
pub fn compatible_gamma(model: &ModelSpec, values: &[DVector<f64>], slopes: &[DVector<f64>], theta: DVector<f64>, xi: DVector<f64>) -> Parameter {
    let last = PHI_KNOTS.len() - 1;
    let mut s = slopes.to_vec();
    for _ in 0..200 {
        let phi = Trajectory::from_nodes(&PHI_KNOTS, values, &s).unwrap();
        let g = Parameter::new(phi, theta.clone(), xi.clone()).unwrap();
        let rep = sdde::solver::check_compatibility(model, &g, 1e-14).unwrap();
        if rep.compatible {
            return g;
        }
        s[last] = DVector::from_vec(rep.rhs.clone());
    }
    panic!("history slope iteration did not converge");
}

pub fn kernel_gamma(model: &ModelSpec) -> Parameter {
    let values: Vec<DVector<f64>> = PHI_KNOTS.iter().map(|&s| dvector![0.4 + 0.3 * s, -0.2 + 0.5 * (2.0 * s).sin()]).collect();
    let slopes: Vec<DVector<f64>> = PHI_KNOTS.iter().map(|&s| dvector![0.3, (2.0 * s).cos()]).collect();
    compatible_gamma(model, &values, &slopes, dvector![0.7, -0.4], dvector![0.6])
}

/// Random direction whose `φ` part is `C¹` on [`PHI_KNOTS`].
pub fn random_direction<R: Rng>(rng: &mut R, n: usize, p: usize, q: usize, scale: f64) -> Direction {
    let mut pick = |_: usize, _: usize| rng.random_range(-1.0..1.0) * scale;
    let values: Vec<DVector<f64>> = PHI_KNOTS.iter().map(|_| DVector::from_fn(n, &mut pick)).collect();
    let slopes: Vec<DVector<f64>> = PHI_KNOTS.iter().map(|_| DVector::from_fn(n, &mut pick)).collect();
    let theta = DVector::from_fn(p, &mut pick);
    let xi = DVector::from_fn(q, &mut pick);
    Parameter::new(Trajectory::from_nodes(&PHI_KNOTS, &values, &slopes).unwrap(), theta, xi).unwrap()
}

pub fn config(step: f64, alpha: f64) -> SolveConfig {
    SolveConfig::new(step, alpha)
}

pub fn sup_diff(a: &Trajectory, b: &Trajectory, times: &[f64]) -> f64 {
    times
        .iter()
        .map(|&t| (a.eval(t).unwrap() - b.eval(t).unwrap()).amax())
        .fold(0.0, f64::max)
}

pub fn sup_on(a: &Trajectory, times: &[f64]) -> f64 {
    times.iter().map(|&t| a.eval(t).unwrap().amax()).fold(0.0, f64::max)
}
