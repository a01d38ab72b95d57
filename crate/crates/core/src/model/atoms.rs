//! Delay atoms: point lags and an optional distributed kernel.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SddeError};
use crate::numerics::gauss_legendre;
use crate::trajectory::Segment;

/// A scalar lag `t ↦ η(t)` with its time derivative.
pub trait LagFunction: Send + Sync + fmt::Debug {
    fn value(&self, t: f64) -> f64;
    fn derivative(&self, t: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantLag(pub f64);

impl LagFunction for ConstantLag {
    fn value(&self, _t: f64) -> f64 {
        self.0
    }
    fn derivative(&self, _t: f64) -> f64 {
        0.0
    }
}

/// `mean + amplitude·sin(2π·frequency·t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidalLag {
    pub mean: f64,
    pub amplitude: f64,
    pub frequency: f64,
}

impl LagFunction for SinusoidalLag {
    fn value(&self, t: f64) -> f64 {
        self.mean + self.amplitude * (std::f64::consts::TAU * self.frequency * t).sin()
    }
    fn derivative(&self, t: f64) -> f64 {
        let w = std::f64::consts::TAU * self.frequency;
        self.amplitude * w * (w * t).cos()
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Lag given by user closures.
#[derive(Clone)]
pub struct FnLag {
    value: ScalarFn,
    derivative: ScalarFn,
}

impl FnLag {
    pub fn new(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { value: Arc::new(value), derivative: Arc::new(derivative) }
    }
}

impl fmt::Debug for FnLag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnLag")
    }
}

impl LagFunction for FnLag {
    fn value(&self, t: f64) -> f64 {
        (self.value)(t)
    }
    fn derivative(&self, t: f64) -> f64 {
        (self.derivative)(t)
    }
}

type KernelFn = Arc<dyn Fn(f64, f64) -> DMatrix<f64> + Send + Sync>;
type KernelScale = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// `K(t, ζ) = M·s(t, ζ)`.
#[derive(Clone)]
struct Scaled {
    m: DMatrix<f64>,
    s: KernelScale,
    ds: KernelScale,
}

/// Matrix kernel `K(t, ζ)` (`rows × n`) integrated against a segment over
/// `[-r, 0]` with Gauss-Legendre quadrature on every polynomial window.
#[derive(Clone)]
pub struct Kernel {
    rows: usize,
    cols: usize,
    value: KernelFn,
    time_partial: KernelFn,
    scaled: Option<Scaled>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("order", &self.nodes.len())
            .finish()
    }
}

impl Kernel {
    pub fn new(
        rows: usize,
        cols: usize,
        order: usize,
        value: impl Fn(f64, f64) -> DMatrix<f64> + Send + Sync + 'static,
        time_partial: impl Fn(f64, f64) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || order == 0 {
            return Err(SddeError::Invalid("kernel needs positive rows, columns and quadrature order".into()));
        }
        let (nodes, weights) = gauss_legendre(order);
        Ok(Self { rows, cols, value: Arc::new(value), time_partial: Arc::new(time_partial), scaled: None, nodes, weights })
    }

    /// `K(t, ζ) = M·s(t, ζ)` with scalar `s` and `∂s/∂t = ds`.
    pub fn scaled(
        m: DMatrix<f64>,
        order: usize,
        s: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        ds: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let (rows, cols) = m.shape();
        let (s, ds): (KernelScale, KernelScale) = (Arc::new(s), Arc::new(ds));
        let (m1, s1) = (m.clone(), s.clone());
        let (m2, ds2) = (m.clone(), ds.clone());
        let mut k = Self::new(rows, cols, order, move |t, z| &m1 * s1(t, z), move |t, z| &m2 * ds2(t, z))?;
        k.scaled = Some(Scaled { m, s, ds });
        Ok(k)
    }

    /// `K(t, ζ) = M`.
    pub fn constant(m: DMatrix<f64>, order: usize) -> Result<Self> {
        Self::scaled(m, order, |_, _| 1.0, |_, _| 0.0)
    }

    /// `K(t, ζ) = M·exp(rate·ζ)`.
    pub fn exponential(m: DMatrix<f64>, rate: f64, order: usize) -> Result<Self> {
        Self::scaled(m, order, move |_, z| (rate * z).exp(), |_, _| 0.0)
    }

    /// `K(t, ζ) = M·(1 + c·sin(ω t))`, a kernel with explicit time dependence.
    pub fn modulated(m: DMatrix<f64>, c: f64, omega: f64, order: usize) -> Result<Self> {
        Self::scaled(m, order, move |t, _| 1.0 + c * (omega * t).sin(), move |t, _| c * omega * (omega * t).cos())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn value(&self, t: f64, zeta: f64) -> DMatrix<f64> {
        (self.value)(t, zeta)
    }

    pub fn time_partial(&self, t: f64, zeta: f64) -> DMatrix<f64> {
        (self.time_partial)(t, zeta)
    }

    /// `∫_{-r}^0 K(t, ζ) ψ(ζ) dζ`.
    pub fn integrate(&self, t: f64, seg: &Segment<'_>) -> Result<DVector<f64>> {
        let mut acc = DVector::zeros(self.rows);
        let mut sum = DVector::zeros(seg.dim());
        let mut x = DVector::zeros(seg.dim());
        for (a, b, piece) in seg.window_pieces() {
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (node, w) in self.nodes.iter().zip(&self.weights) {
                let z = mid + half * node;
                piece.value_into(seg.anchor() + z, &mut x);
                match &self.scaled {
                    Some(k) => sum.axpy(w * half * (k.s)(t, z), &x, 1.0),
                    None => acc.gemv(w * half, &self.value(t, z), &x, 1.0),
                }
            }
        }
        if let Some(k) = &self.scaled {
            acc.gemv(1.0, &k.m, &sum, 0.0);
        }
        Ok(acc)
    }

    /// `d/dt ∫ K(t, ζ) x(t + ζ) dζ` along the trajectory underlying `seg`.
    pub fn integrate_rate(&self, t: f64, seg: &Segment<'_>) -> Result<DVector<f64>> {
        let mut acc = DVector::zeros(self.rows);
        let mut sum = DVector::zeros(seg.dim());
        let mut x = DVector::zeros(seg.dim());
        for (a, b, piece) in seg.window_pieces() {
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (node, w) in self.nodes.iter().zip(&self.weights) {
                let z = mid + half * node;
                let s = seg.anchor() + z;
                piece.value_into(s, &mut x);
                let dx = piece.derivative(s);
                match &self.scaled {
                    Some(k) => {
                        sum.axpy(w * half * (k.ds)(t, z), &x, 1.0);
                        sum.axpy(w * half * (k.s)(t, z), &dx, 1.0);
                    }
                    None => {
                        acc.gemv(w * half, &self.time_partial(t, z), &x, 1.0);
                        acc.gemv(w * half, &self.value(t, z), &dx, 1.0);
                    }
                }
            }
        }
        if let Some(k) = &self.scaled {
            acc.gemv(1.0, &k.m, &sum, 0.0);
        }
        Ok(acc)
    }
}

/// The point lags and optional kernel feeding one smooth core.
#[derive(Debug, Clone, Default)]
pub struct DelayAtomSet {
    pub point_lags: Vec<Arc<dyn LagFunction>>,
    pub kernel: Option<Arc<Kernel>>,
}

impl DelayAtomSet {
    pub fn new(point_lags: Vec<Arc<dyn LagFunction>>, kernel: Option<Kernel>) -> Self {
        Self { point_lags, kernel: kernel.map(Arc::new) }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn lag_count(&self) -> usize {
        self.point_lags.len()
    }

    pub fn kernel_rows(&self) -> usize {
        self.kernel.as_ref().map_or(0, |k| k.rows())
    }

    /// Lag values at `t`, checked against `[0, r]`.
    pub fn lags_at(&self, t: f64, r: f64) -> Result<Vec<f64>> {
        self.point_lags
            .iter()
            .enumerate()
            .map(|(j, lag)| {
                let v = lag.value(t);
                if !(0.0..=r).contains(&v) {
                    return Err(SddeError::Domain { t, what: format!("point lag {j} = {v} outside [0, {r}]") });
                }
                Ok(v)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Trajectory;
    use nalgebra::dmatrix;

    #[test]
    fn constant_kernel_against_identity_segment() {
        let x = Trajectory::polynomial(&[vec![0.0, 1.0]], -1.0, 0.0).unwrap();
        let seg = x.segment(0.0).unwrap();
        let k = Kernel::constant(dmatrix![1.0], 3).unwrap();
        assert!((k.integrate(0.0, &seg).unwrap()[0] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn sinusoidal_lag_derivative() {
        let lag = SinusoidalLag { mean: 0.5, amplitude: 0.45, frequency: 1.0 };
        let t = 0.3;
        let e = 1e-6;
        let fd = (lag.value(t + e) - lag.value(t - e)) / (2.0 * e);
        assert!((fd - lag.derivative(t)).abs() < 1e-8);
    }

    #[test]
    fn lag_out_of_range_is_domain_error() {
        let atoms = DelayAtomSet::new(vec![Arc::new(ConstantLag(1.5))], None);
        assert!(matches!(atoms.lags_at(0.0, 1.0), Err(SddeError::Domain { .. })));
    }
}
