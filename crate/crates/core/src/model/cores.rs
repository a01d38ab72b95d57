//! Smooth finite-dimensional cores `f̄`, `τ̄` with analytic partials.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::ArgLayout;
use crate::error::{Result, SddeError};

/// A smooth map `(t, a) ↦ g(t, a) ∈ R^outputs`, `a ∈ R^arity`, with all first
/// and second partials in `a` and the first partial in `t`.
pub trait SmoothCore: Send + Sync + fmt::Debug {
    fn arity(&self) -> usize;
    fn outputs(&self) -> usize;
    fn value(&self, t: f64, args: &DVector<f64>) -> DVector<f64>;
    fn time_partial(&self, t: f64, args: &DVector<f64>) -> DVector<f64>;
    /// `outputs × arity` Jacobian.
    fn gradient(&self, t: f64, args: &DVector<f64>) -> DMatrix<f64>;
    /// One symmetric `arity × arity` Hessian per output.
    fn hessian(&self, t: f64, args: &DVector<f64>) -> Vec<DMatrix<f64>>;
}

/// `g(a) = c + G a + ½ aᵀ Q_o a` per output `o`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCore {
    c: DVector<f64>,
    g: DMatrix<f64>,
    q: Vec<DMatrix<f64>>,
}

impl QuadraticCore {
    /// `q` may be empty (affine core); otherwise one square matrix per output.
    /// The Hessians are symmetrized.
    pub fn new(c: DVector<f64>, g: DMatrix<f64>, q: Vec<DMatrix<f64>>) -> Result<Self> {
        let (out, arity) = g.shape();
        if c.len() != out {
            return Err(SddeError::Model(format!("constant has {} rows, linear part {out}", c.len())));
        }
        let q = if q.is_empty() { vec![DMatrix::zeros(arity, arity); out] } else { q };
        if q.len() != out || q.iter().any(|m| m.shape() != (arity, arity)) {
            return Err(SddeError::Model(format!("quadratic part must be {out} matrices of size {arity}x{arity}")));
        }
        let q = q.into_iter().map(|m| (&m + m.transpose()) * 0.5).collect();
        Ok(Self { c, g, q })
    }
}

impl SmoothCore for QuadraticCore {
    fn arity(&self) -> usize {
        self.g.ncols()
    }
    fn outputs(&self) -> usize {
        self.g.nrows()
    }
    fn value(&self, _t: f64, a: &DVector<f64>) -> DVector<f64> {
        let mut v = &self.c + &self.g * a;
        for (o, q) in self.q.iter().enumerate() {
            v[o] += 0.5 * a.dot(&(q * a));
        }
        v
    }
    fn time_partial(&self, _t: f64, _a: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.outputs())
    }
    fn gradient(&self, _t: f64, a: &DVector<f64>) -> DMatrix<f64> {
        let mut j = self.g.clone();
        for (o, q) in self.q.iter().enumerate() {
            let row = q * a;
            for k in 0..self.arity() {
                j[(o, k)] += row[k];
            }
        }
        j
    }
    fn hessian(&self, _t: f64, _a: &DVector<f64>) -> Vec<DMatrix<f64>> {
        self.q.clone()
    }
}

/// `f = θ₀·u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearCore {
    layout: ArgLayout,
}

impl LinearCore {
    pub fn new(layout: ArgLayout) -> Result<Self> {
        if !layout.state || layout.params == 0 {
            return Err(SddeError::Model("linear core needs the delayed state and at least one parameter".into()));
        }
        Ok(Self { layout })
    }
}

impl SmoothCore for LinearCore {
    fn arity(&self) -> usize {
        self.layout.arity()
    }
    fn outputs(&self) -> usize {
        self.layout.n
    }
    fn value(&self, _t: f64, a: &DVector<f64>) -> DVector<f64> {
        let th = a[self.layout.params().start];
        a.rows(self.layout.state().start, self.layout.n) * th
    }
    fn time_partial(&self, _t: f64, _a: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.layout.n)
    }
    fn gradient(&self, _t: f64, a: &DVector<f64>) -> DMatrix<f64> {
        let (s, p) = (self.layout.state().start, self.layout.params().start);
        let mut j = DMatrix::zeros(self.layout.n, self.arity());
        for i in 0..self.layout.n {
            j[(i, s + i)] = a[p];
            j[(i, p)] = a[s + i];
        }
        j
    }
    fn hessian(&self, _t: f64, _a: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let (s, p) = (self.layout.state().start, self.layout.params().start);
        (0..self.layout.n)
            .map(|i| {
                let mut h = DMatrix::zeros(self.arity(), self.arity());
                h[(s + i, p)] = 1.0;
                h[(p, s + i)] = 1.0;
                h
            })
            .collect()
    }
}

/// `f_i = θ₀·a_i·(1 − u_i/θ₁)` with `a` the first point-lag block.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticCore {
    layout: ArgLayout,
}

impl LogisticCore {
    pub fn new(layout: ArgLayout) -> Result<Self> {
        if layout.lags == 0 || !layout.state || layout.params < 2 {
            return Err(SddeError::Model(
                "logistic core needs a point lag, the delayed state and parameters (rate, capacity)".into(),
            ));
        }
        Ok(Self { layout })
    }

    fn indices(&self, i: usize) -> [usize; 4] {
        let p = self.layout.params().start;
        [self.layout.lag(0).start + i, self.layout.state().start + i, p, p + 1]
    }
}

impl SmoothCore for LogisticCore {
    fn arity(&self) -> usize {
        self.layout.arity()
    }
    fn outputs(&self) -> usize {
        self.layout.n
    }
    fn value(&self, _t: f64, a: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.layout.n, |i, _| {
            let [ia, iu, ir, ik] = self.indices(i);
            a[ir] * a[ia] * (1.0 - a[iu] / a[ik])
        })
    }
    fn time_partial(&self, _t: f64, _a: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.layout.n)
    }
    fn gradient(&self, _t: f64, a: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.layout.n, self.arity());
        for i in 0..self.layout.n {
            let [ia, iu, ir, ik] = self.indices(i);
            let (x, u, rho, k) = (a[ia], a[iu], a[ir], a[ik]);
            j[(i, ia)] += rho * (1.0 - u / k);
            j[(i, iu)] += -rho * x / k;
            j[(i, ir)] += x * (1.0 - u / k);
            j[(i, ik)] += rho * x * u / (k * k);
        }
        j
    }
    fn hessian(&self, _t: f64, a: &DVector<f64>) -> Vec<DMatrix<f64>> {
        (0..self.layout.n)
            .map(|i| {
                let [ia, iu, ir, ik] = self.indices(i);
                let (x, u, rho, k) = (a[ia], a[iu], a[ir], a[ik]);
                let mut h = DMatrix::zeros(self.arity(), self.arity());
                let mut set = |p: usize, q: usize, v: f64| {
                    h[(p, q)] += v;
                    if p != q {
                        h[(q, p)] += v;
                    }
                };
                set(ia, iu, -rho / k);
                set(ia, ir, 1.0 - u / k);
                set(ia, ik, rho * u / (k * k));
                set(iu, ir, -x / k);
                set(iu, ik, rho * x / (k * k));
                set(ir, ik, x * u / (k * k));
                set(ik, ik, -2.0 * rho * x * u / (k * k * k));
                h
            })
            .collect()
    }
}

/// `g(t, a) = W·sin(M a + m t + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SineFeatureCore {
    w: DMatrix<f64>,
    m: DMatrix<f64>,
    m_t: DVector<f64>,
    b: DVector<f64>,
}

impl SineFeatureCore {
    pub fn new(w: DMatrix<f64>, m: DMatrix<f64>, m_t: DVector<f64>, b: DVector<f64>) -> Result<Self> {
        let features = m.nrows();
        if w.ncols() != features || m_t.len() != features || b.len() != features {
            return Err(SddeError::Model("sine feature core: inconsistent feature count".into()));
        }
        Ok(Self { w, m, m_t, b })
    }

    fn phase(&self, t: f64, a: &DVector<f64>) -> DVector<f64> {
        &self.m * a + &self.m_t * t + &self.b
    }
}

impl SmoothCore for SineFeatureCore {
    fn arity(&self) -> usize {
        self.m.ncols()
    }
    fn outputs(&self) -> usize {
        self.w.nrows()
    }
    fn value(&self, t: f64, a: &DVector<f64>) -> DVector<f64> {
        &self.w * self.phase(t, a).map(f64::sin)
    }
    fn time_partial(&self, t: f64, a: &DVector<f64>) -> DVector<f64> {
        &self.w * self.phase(t, a).map(f64::cos).component_mul(&self.m_t)
    }
    fn gradient(&self, t: f64, a: &DVector<f64>) -> DMatrix<f64> {
        let c = self.phase(t, a).map(f64::cos);
        &self.w * DMatrix::from_diagonal(&c) * &self.m
    }
    fn hessian(&self, t: f64, a: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let s = self.phase(t, a).map(f64::sin);
        (0..self.outputs())
            .map(|o| {
                let d = DVector::from_fn(s.len(), |k, _| -self.w[(o, k)] * s[k]);
                let h = self.m.transpose() * DMatrix::from_diagonal(&d) * &self.m;
                (&h + h.transpose()) * 0.5
            })
            .collect()
    }
}

/// Delay core `τ̄ ≡ c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantTau {
    pub arity: usize,
    pub value: f64,
}

impl SmoothCore for ConstantTau {
    fn arity(&self) -> usize {
        self.arity
    }
    fn outputs(&self) -> usize {
        1
    }
    fn value(&self, _t: f64, _a: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, self.value)
    }
    fn time_partial(&self, _t: f64, _a: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(1)
    }
    fn gradient(&self, _t: f64, _a: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(1, self.arity)
    }
    fn hessian(&self, _t: f64, _a: &DVector<f64>) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(self.arity, self.arity)]
    }
}

/// Delay core `τ̄ = a[offset] + a[scale]·tanh(a[arg])`, typically with
/// `offset`, `scale` pointing into `ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TanhTau {
    pub arity: usize,
    pub arg: usize,
    pub offset: usize,
    pub scale: usize,
}

impl SmoothCore for TanhTau {
    fn arity(&self) -> usize {
        self.arity
    }
    fn outputs(&self) -> usize {
        1
    }
    fn value(&self, _t: f64, a: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, a[self.offset] + a[self.scale] * a[self.arg].tanh())
    }
    fn time_partial(&self, _t: f64, _a: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(1)
    }
    fn gradient(&self, _t: f64, a: &DVector<f64>) -> DMatrix<f64> {
        let th = a[self.arg].tanh();
        let mut j = DMatrix::zeros(1, self.arity);
        j[(0, self.offset)] += 1.0;
        j[(0, self.scale)] += th;
        j[(0, self.arg)] += a[self.scale] * (1.0 - th * th);
        j
    }
    fn hessian(&self, _t: f64, a: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let th = a[self.arg].tanh();
        let sech2 = 1.0 - th * th;
        let mut h = DMatrix::zeros(self.arity, self.arity);
        h[(self.arg, self.arg)] += -2.0 * a[self.scale] * th * sech2;
        h[(self.arg, self.scale)] += sech2;
        h[(self.scale, self.arg)] += sech2;
        vec![h]
    }
}

/// Delay core `τ̄ = a[scale] / (1 + a[arg]²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalTau {
    pub arity: usize,
    pub arg: usize,
    pub scale: usize,
}

impl SmoothCore for RationalTau {
    fn arity(&self) -> usize {
        self.arity
    }
    fn outputs(&self) -> usize {
        1
    }
    fn value(&self, _t: f64, a: &DVector<f64>) -> DVector<f64> {
        let x = a[self.arg];
        DVector::from_element(1, a[self.scale] / (1.0 + x * x))
    }
    fn time_partial(&self, _t: f64, _a: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(1)
    }
    fn gradient(&self, _t: f64, a: &DVector<f64>) -> DMatrix<f64> {
        let (x, c) = (a[self.arg], a[self.scale]);
        let d = 1.0 + x * x;
        let mut j = DMatrix::zeros(1, self.arity);
        j[(0, self.scale)] += 1.0 / d;
        j[(0, self.arg)] += -2.0 * c * x / (d * d);
        j
    }
    fn hessian(&self, _t: f64, a: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let (x, c) = (a[self.arg], a[self.scale]);
        let d = 1.0 + x * x;
        let mut h = DMatrix::zeros(self.arity, self.arity);
        h[(self.arg, self.arg)] += c * (6.0 * x * x - 2.0) / (d * d * d);
        h[(self.arg, self.scale)] += -2.0 * x / (d * d);
        h[(self.scale, self.arg)] += -2.0 * x / (d * d);
        vec![h]
    }
}

/// Delay core `τ̄ = mean + amplitude·sin(2π·frequency·t)`, independent of the state.
#[derive(Debug, Clone, PartialEq)]
pub struct SinTimeTau {
    pub arity: usize,
    pub mean: f64,
    pub amplitude: f64,
    pub frequency: f64,
}

impl SmoothCore for SinTimeTau {
    fn arity(&self) -> usize {
        self.arity
    }
    fn outputs(&self) -> usize {
        1
    }
    fn value(&self, t: f64, _a: &DVector<f64>) -> DVector<f64> {
        let w = std::f64::consts::TAU * self.frequency;
        DVector::from_element(1, self.mean + self.amplitude * (w * t).sin())
    }
    fn time_partial(&self, t: f64, _a: &DVector<f64>) -> DVector<f64> {
        let w = std::f64::consts::TAU * self.frequency;
        DVector::from_element(1, self.amplitude * w * (w * t).cos())
    }
    fn gradient(&self, _t: f64, _a: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(1, self.arity)
    }
    fn hessian(&self, _t: f64, _a: &DVector<f64>) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(self.arity, self.arity)]
    }
}

type VecFn = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;
type MatFn = Arc<dyn Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
type HessFn = Arc<dyn Fn(f64, &DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync>;

/// Core assembled from user closures.
#[derive(Clone)]
pub struct ClosureCore {
    arity: usize,
    outputs: usize,
    value: VecFn,
    time_partial: VecFn,
    gradient: MatFn,
    hessian: HessFn,
}

impl ClosureCore {
    pub fn new(
        arity: usize,
        outputs: usize,
        value: impl Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        time_partial: impl Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        gradient: impl Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        hessian: impl Fn(f64, &DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    ) -> Self {
        Self {
            arity,
            outputs,
            value: Arc::new(value),
            time_partial: Arc::new(time_partial),
            gradient: Arc::new(gradient),
            hessian: Arc::new(hessian),
        }
    }
}

impl fmt::Debug for ClosureCore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClosureCore").field("arity", &self.arity).field("outputs", &self.outputs).finish()
    }
}

impl SmoothCore for ClosureCore {
    fn arity(&self) -> usize {
        self.arity
    }
    fn outputs(&self) -> usize {
        self.outputs
    }
    fn value(&self, t: f64, a: &DVector<f64>) -> DVector<f64> {
        (self.value)(t, a)
    }
    fn time_partial(&self, t: f64, a: &DVector<f64>) -> DVector<f64> {
        (self.time_partial)(t, a)
    }
    fn gradient(&self, t: f64, a: &DVector<f64>) -> DMatrix<f64> {
        (self.gradient)(t, a)
    }
    fn hessian(&self, t: f64, a: &DVector<f64>) -> Vec<DMatrix<f64>> {
        (self.hessian)(t, a)
    }
}
