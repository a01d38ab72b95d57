//! Structured right-hand sides `f(t, ψ, u, θ)` and delays `τ(t, ψ, ξ)`.
//!
//! Both maps are a smooth core applied to finitely many functionals of the
//! history `ψ`: point evaluations `ψ(−ν_j(t))` and one kernel integral
//! `∫ K(t, ζ) ψ(ζ) dζ`. The core's argument vector is laid out as
//! `[ψ(−ν_1), …, ψ(−ν_m), ∫Kψ, u, θ]` for `f` and `[…, ∫Kψ, ξ]` for `τ`.

pub mod atoms;
pub mod cores;
mod derivative;
mod validate;

use std::ops::Range;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Result, SddeError};
use crate::trajectory::{Segment, Side};

pub use atoms::{ConstantLag, DelayAtomSet, FnLag, Kernel, LagFunction, SinusoidalLag};
pub use cores::{
    ClosureCore, ConstantTau, LinearCore, LogisticCore, QuadraticCore, RationalTau, SinTimeTau, SineFeatureCore,
    SmoothCore, TanhTau,
};
pub use derivative::{apply_phi_part, FDerivative, Linearization, PhiPart, SlotArg, TauDerivative};
pub use validate::{validate_model, CheckResult, ValidationReport};

/// Positions of the argument blocks in a core's input vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArgLayout {
    pub n: usize,
    pub lags: usize,
    pub kernel: usize,
    pub state: bool,
    pub params: usize,
}

impl ArgLayout {
    pub fn lag(&self, j: usize) -> Range<usize> {
        j * self.n..(j + 1) * self.n
    }
    pub fn kernel(&self) -> Range<usize> {
        let s = self.lags * self.n;
        s..s + self.kernel
    }
    pub fn state(&self) -> Range<usize> {
        let s = self.kernel().end;
        s..s + if self.state { self.n } else { 0 }
    }
    pub fn params(&self) -> Range<usize> {
        let s = self.state().end;
        s..s + self.params
    }
    pub fn arity(&self) -> usize {
        self.params().end
    }
}

/// A complete model: dimensions, delay bound, horizon and the two structured maps.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    n: usize,
    p: usize,
    q: usize,
    r: f64,
    horizon: f64,
    f_atoms: DelayAtomSet,
    f_core: Arc<dyn SmoothCore>,
    tau_atoms: DelayAtomSet,
    tau_core: Arc<dyn SmoothCore>,
}

impl ModelSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        p: usize,
        q: usize,
        r: f64,
        horizon: f64,
        f_atoms: DelayAtomSet,
        f_core: Arc<dyn SmoothCore>,
        tau_atoms: DelayAtomSet,
        tau_core: Arc<dyn SmoothCore>,
    ) -> Result<Self> {
        if n == 0 || !(r > 0.0) || !(horizon > 0.0) || !r.is_finite() || !horizon.is_finite() {
            return Err(SddeError::Model(format!("need n >= 1, r > 0 and T > 0 (got n={n}, r={r}, T={horizon})")));
        }
        let model = Self { n, p, q, r, horizon, f_atoms, f_core, tau_atoms, tau_core };
        for (name, atoms) in [("f", &model.f_atoms), ("tau", &model.tau_atoms)] {
            if let Some(k) = &atoms.kernel {
                if k.cols() != n {
                    return Err(SddeError::Model(format!("{name} kernel has {} columns, state has {n}", k.cols())));
                }
            }
        }
        let fl = model.f_layout();
        if model.f_core.arity() != fl.arity() || model.f_core.outputs() != n {
            return Err(SddeError::Model(format!(
                "f core must map {} arguments to {n} outputs, has {} -> {}",
                fl.arity(),
                model.f_core.arity(),
                model.f_core.outputs()
            )));
        }
        let tl = model.tau_layout();
        if model.tau_core.arity() != tl.arity() || model.tau_core.outputs() != 1 {
            return Err(SddeError::Model(format!(
                "tau core must map {} arguments to 1 output, has {} -> {}",
                tl.arity(),
                model.tau_core.arity(),
                model.tau_core.outputs()
            )));
        }
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn theta_dim(&self) -> usize {
        self.p
    }
    pub fn xi_dim(&self) -> usize {
        self.q
    }
    pub fn delay_bound(&self) -> f64 {
        self.r
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn f_atoms(&self) -> &DelayAtomSet {
        &self.f_atoms
    }
    pub fn tau_atoms(&self) -> &DelayAtomSet {
        &self.tau_atoms
    }
    pub fn f_core(&self) -> &Arc<dyn SmoothCore> {
        &self.f_core
    }
    pub fn tau_core(&self) -> &Arc<dyn SmoothCore> {
        &self.tau_core
    }

    pub fn f_layout(&self) -> ArgLayout {
        ArgLayout {
            n: self.n,
            lags: self.f_atoms.lag_count(),
            kernel: self.f_atoms.kernel_rows(),
            state: true,
            params: self.p,
        }
    }

    pub fn tau_layout(&self) -> ArgLayout {
        ArgLayout {
            n: self.n,
            lags: self.tau_atoms.lag_count(),
            kernel: self.tau_atoms.kernel_rows(),
            state: false,
            params: self.q,
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= 0.0 && t <= self.horizon * (1.0 + 1e-12)) {
            return Err(SddeError::Domain { t, what: format!("time outside [0, {}]", self.horizon) });
        }
        Ok(())
    }

    fn history_args(&self, atoms: &DelayAtomSet, layout: ArgLayout, t: f64, seg: &Segment<'_>) -> Result<(DVector<f64>, Vec<f64>)> {
        self.check_time(t)?;
        if seg.dim() != self.n {
            return Err(SddeError::Invalid(format!("segment has dimension {}, model {}", seg.dim(), self.n)));
        }
        let lags = atoms.lags_at(t, self.r)?;
        let mut a = DVector::zeros(layout.arity());
        for (j, lag) in lags.iter().enumerate() {
            a.rows_mut(layout.lag(j).start, self.n).copy_from(&seg.eval(-lag)?);
        }
        if let Some(k) = &atoms.kernel {
            a.rows_mut(layout.kernel().start, layout.kernel).copy_from(&k.integrate(t, seg)?);
        }
        Ok((a, lags))
    }

    fn f_args(&self, t: f64, seg: &Segment<'_>, u: &DVector<f64>, theta: &DVector<f64>) -> Result<(DVector<f64>, Vec<f64>)> {
        let l = self.f_layout();
        if u.len() != self.n || theta.len() != self.p {
            return Err(SddeError::Invalid("delayed state or θ has the wrong length".into()));
        }
        let (mut a, lags) = self.history_args(&self.f_atoms, l, t, seg)?;
        a.rows_mut(l.state().start, self.n).copy_from(u);
        a.rows_mut(l.params().start, self.p).copy_from(theta);
        Ok((a, lags))
    }

    fn tau_args(&self, t: f64, seg: &Segment<'_>, xi: &DVector<f64>) -> Result<(DVector<f64>, Vec<f64>)> {
        let l = self.tau_layout();
        if xi.len() != self.q {
            return Err(SddeError::Invalid("ξ has the wrong length".into()));
        }
        let (mut a, lags) = self.history_args(&self.tau_atoms, l, t, seg)?;
        a.rows_mut(l.params().start, self.q).copy_from(xi);
        Ok((a, lags))
    }

    /// `f(t, ψ, u, θ)`.
    pub fn eval_f(&self, t: f64, seg: &Segment<'_>, u: &DVector<f64>, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let (a, _) = self.f_args(t, seg, u, theta)?;
        let v = self.f_core.value(t, &a);
        if v.iter().any(|x| !x.is_finite()) {
            return Err(SddeError::Numeric { t, what: "right-hand side".into() });
        }
        Ok(v)
    }

    /// `τ(t, ψ, ξ)`, required to lie in `[0, r]`.
    pub fn eval_tau(&self, t: f64, seg: &Segment<'_>, xi: &DVector<f64>) -> Result<f64> {
        let (a, _) = self.tau_args(t, seg, xi)?;
        let v = self.tau_core.value(t, &a)[0];
        if !v.is_finite() {
            return Err(SddeError::Numeric { t, what: "delay".into() });
        }
        if !(0.0..=self.r).contains(&v) {
            return Err(SddeError::Domain { t, what: format!("delay {v} outside [0, {}]", self.r) });
        }
        Ok(v)
    }

    #[allow(clippy::too_many_arguments)]
    fn linearize(
        &self,
        core: &dyn SmoothCore,
        atoms: &DelayAtomSet,
        layout: ArgLayout,
        t: f64,
        a: DVector<f64>,
        lags: Vec<f64>,
        second: bool,
    ) -> Result<Linearization> {
        let value = core.value(t, &a);
        let jacobian = core.gradient(t, &a);
        let hessians = if second { core.hessian(t, &a) } else { Vec::new() };
        if value.iter().chain(jacobian.iter()).chain(hessians.iter().flat_map(|h| h.iter())).any(|x| !x.is_finite()) {
            return Err(SddeError::Numeric { t, what: "core derivative".into() });
        }
        Ok(Linearization { layout, t, lags, kernel: atoms.kernel.clone(), value, jacobian, hessians })
    }

    /// Linearization of `f`; with `second` the Hessians are included.
    pub fn linearize_f(
        &self,
        t: f64,
        seg: &Segment<'_>,
        u: &DVector<f64>,
        theta: &DVector<f64>,
        second: bool,
    ) -> Result<Linearization> {
        let (a, lags) = self.f_args(t, seg, u, theta)?;
        self.linearize(self.f_core.as_ref(), &self.f_atoms, self.f_layout(), t, a, lags, second)
    }

    pub fn linearize_tau(&self, t: f64, seg: &Segment<'_>, xi: &DVector<f64>, second: bool) -> Result<Linearization> {
        let (a, lags) = self.tau_args(t, seg, xi)?;
        self.linearize(self.tau_core.as_ref(), &self.tau_atoms, self.tau_layout(), t, a, lags, second)
    }

    pub fn d_f(&self, t: f64, seg: &Segment<'_>, u: &DVector<f64>, theta: &DVector<f64>) -> Result<FDerivative> {
        Ok(self.linearize_f(t, seg, u, theta, false)?.f_derivative())
    }

    pub fn d2_f(&self, t: f64, seg: &Segment<'_>, u: &DVector<f64>, theta: &DVector<f64>) -> Result<Linearization> {
        self.linearize_f(t, seg, u, theta, true)
    }

    pub fn d_tau(&self, t: f64, seg: &Segment<'_>, xi: &DVector<f64>) -> Result<TauDerivative> {
        Ok(self.linearize_tau(t, seg, xi, false)?.tau_derivative())
    }

    pub fn d2_tau(&self, t: f64, seg: &Segment<'_>, xi: &DVector<f64>) -> Result<Linearization> {
        self.linearize_tau(t, seg, xi, true)
    }

    /// `d/dt τ(t, x_t, ξ)` along the trajectory underlying `seg`, by the
    /// chain rule over the delay atoms.
    pub fn tau_rate(&self, t: f64, seg: &Segment<'_>, xi: &DVector<f64>) -> Result<f64> {
        let lin = self.linearize_tau(t, seg, xi, false)?;
        let l = lin.layout;
        let (a, _) = self.tau_args(t, seg, xi)?;
        let mut rate = self.tau_core.time_partial(t, &a)[0];
        for (j, (lag, atom)) in lin.lags.iter().zip(&self.tau_atoms.point_lags).enumerate() {
            let speed = 1.0 - atom.derivative(t);
            let side = if speed >= 0.0 { Side::Right } else { Side::Left };
            let dx = seg.eval_d1(-lag, side)? * speed;
            rate += (lin.jacobian.view((0, l.lag(j).start), (1, l.n)) * dx)[0];
        }
        if let Some(k) = &self.tau_atoms.kernel {
            let dk = k.integrate_rate(t, seg)?;
            rate += (lin.jacobian.view((0, l.kernel().start), (1, l.kernel)) * dk)[0];
        }
        if !rate.is_finite() {
            return Err(SddeError::Numeric { t, what: "delay rate".into() });
        }
        Ok(rate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Trajectory;
    use nalgebra::{dmatrix, dvector, DMatrix};

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

    #[test]
    fn linear_core_eval_and_derivatives() {
        let m = linear_model();
        let phi = Trajectory::constant(dvector![1.0], -1.0, 0.0).unwrap();
        let seg = phi.segment(0.0).unwrap();
        let th = dvector![-1.0];
        assert_eq!(m.eval_f(0.0, &seg, &dvector![1.0], &th).unwrap(), dvector![-1.0]);
        let d = m.d_f(0.0, &seg, &dvector![1.0], &th).unwrap();
        assert!(d.phi.point.is_empty() && d.phi.kernel.is_none());
        assert_eq!(d.state, dmatrix![-1.0]);
        assert_eq!(d.param, dmatrix![1.0]);
        let d2 = m.d2_f(0.0, &seg, &dvector![1.0], &th).unwrap();
        let a = dvector![2.0];
        let b = dvector![3.0];
        assert_eq!(d2.apply_second(SlotArg::State(&a), SlotArg::Param(&b)).unwrap(), dvector![6.0]);
        assert_eq!(d2.apply_second(SlotArg::State(&a), SlotArg::State(&b)).unwrap(), dvector![0.0]);
        assert_eq!(m.eval_tau(0.0, &seg, &dvector![]).unwrap(), 1.0);
    }

    #[test]
    fn tau_out_of_range_is_domain_error() {
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
            Arc::new(ConstantTau { arity: 0, value: 1.1 }),
        )
        .unwrap();
        let phi = Trajectory::constant(dvector![1.0], -1.0, 0.0).unwrap();
        let seg = phi.segment(0.0).unwrap();
        assert!(matches!(m.eval_tau(0.0, &seg, &dvector![]), Err(SddeError::Domain { t, .. }) if t == 0.0));
    }

    #[test]
    fn squared_point_lag_chain_rule() {
        // f = ψ(−ν)², ν = 0.5
        let core = QuadraticCore::new(dvector![0.0], DMatrix::zeros(1, 3), vec![dmatrix![2.0, 0.0, 0.0; 0.0, 0.0, 0.0; 0.0, 0.0, 0.0]])
            .unwrap();
        let m = ModelSpec::new(
            1,
            1,
            0,
            1.0,
            5.0,
            DelayAtomSet::new(vec![Arc::new(ConstantLag(0.5))], None),
            Arc::new(core),
            DelayAtomSet::empty(),
            Arc::new(ConstantTau { arity: 0, value: 1.0 }),
        )
        .unwrap();
        let phi = Trajectory::constant(dvector![3.0], -1.0, 0.0).unwrap();
        let seg = phi.segment(0.0).unwrap();
        let d = m.d_f(0.0, &seg, &dvector![0.0], &dvector![0.0]).unwrap();
        assert_eq!(d.phi.point.len(), 1);
        assert_eq!(d.phi.point[0].0, 0.5);
        assert_eq!(d.phi.point[0].1, dmatrix![6.0]);
    }

    #[test]
    fn model_rejects_wrong_core_arity() {
        let err = ModelSpec::new(
            1,
            1,
            0,
            1.0,
            5.0,
            DelayAtomSet::empty(),
            Arc::new(ConstantTau { arity: 3, value: 0.0 }),
            DelayAtomSet::empty(),
            Arc::new(ConstantTau { arity: 0, value: 1.0 }),
        );
        assert!(matches!(err, Err(SddeError::Model(_))));
    }
}
