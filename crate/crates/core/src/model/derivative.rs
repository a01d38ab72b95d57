//! Finite representations of the functional derivatives of `f` and `τ`.
//!
//! Because the core arguments depend linearly on the history, on the delayed
//! state and on the parameters, every first derivative is `J·δa` and every
//! second derivative is `δaᵀ H_o δb` where `δa` is the lifted argument vector
//! of a direction.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::atoms::Kernel;
use super::ArgLayout;
use crate::error::{Result, SddeError};
use crate::trajectory::Segment;

/// `D₂g` as point-lag coefficients plus a kernel coefficient.
#[derive(Debug, Clone)]
pub struct PhiPart {
    pub t: f64,
    /// `(lag value, outputs × n coefficient)` per point lag.
    pub point: Vec<(f64, DMatrix<f64>)>,
    /// Kernel and its `outputs × rows` coefficient.
    pub kernel: Option<(Arc<Kernel>, DMatrix<f64>)>,
}

impl PhiPart {
    pub fn outputs(&self) -> usize {
        self.point
            .first()
            .map(|(_, c)| c.nrows())
            .or_else(|| self.kernel.as_ref().map(|(_, c)| c.nrows()))
            .unwrap_or(0)
    }

    /// `Σ_j C_j h(−ν_j) + C_K ∫ K h`.
    pub fn apply(&self, h: &Segment<'_>, outputs: usize) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(outputs);
        for (lag, c) in &self.point {
            out += c * h.eval(-lag)?;
        }
        if let Some((k, c)) = &self.kernel {
            out += c * k.integrate(self.t, h)?;
        }
        Ok(out)
    }
}

/// `apply_phi_part(d_f(..).phi, h)` as a free function.
pub fn apply_phi_part(part: &PhiPart, h: &Segment<'_>) -> Result<DVector<f64>> {
    part.apply(h, part.outputs())
}

/// `(D₂f, D₃f, D₄f)`.
#[derive(Debug, Clone)]
pub struct FDerivative {
    pub phi: PhiPart,
    /// `n × n`.
    pub state: DMatrix<f64>,
    /// `n × p`.
    pub param: DMatrix<f64>,
}

impl FDerivative {
    pub fn apply(&self, h: &Segment<'_>, du: &DVector<f64>, dtheta: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.phi.apply(h, self.state.nrows())? + &self.state * du + &self.param * dtheta)
    }
}

/// `(D₂τ, D₃τ)`.
#[derive(Debug, Clone)]
pub struct TauDerivative {
    pub phi: PhiPart,
    /// `1 × q`.
    pub xi: DMatrix<f64>,
}

impl TauDerivative {
    pub fn apply(&self, h: &Segment<'_>, dxi: &DVector<f64>) -> Result<f64> {
        Ok(self.phi.apply(h, 1)?[0] + (&self.xi * dxi)[0])
    }
}

/// A direction component placed in one argument slot of `f` or `τ`.
/// For `f` the slots are numbered 2 (history), 3 (delayed state), 4 (θ); for
/// `τ` they are 2 (history) and 3 (ξ), which is `Param`.
#[derive(Clone, Copy)]
pub enum SlotArg<'a> {
    History(&'a Segment<'a>),
    State(&'a DVector<f64>),
    Param(&'a DVector<f64>),
}

/// Value, Jacobian and (optionally) Hessians of a core at the lifted
/// arguments of one evaluation point.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub(crate) layout: ArgLayout,
    pub(crate) t: f64,
    pub(crate) lags: Vec<f64>,
    pub(crate) kernel: Option<Arc<Kernel>>,
    pub value: DVector<f64>,
    /// `outputs × arity`.
    pub jacobian: DMatrix<f64>,
    /// One `arity × arity` matrix per output; empty unless second
    /// derivatives were requested.
    pub hessians: Vec<DMatrix<f64>>,
}

impl Linearization {
    pub fn outputs(&self) -> usize {
        self.value.len()
    }

    pub fn layout(&self) -> ArgLayout {
        self.layout
    }

    /// Lifted argument vector of a direction: history at the point lags, its
    /// kernel integral, the delayed-state and the parameter components.
    /// Missing components are zero.
    pub fn lift(
        &self,
        history: Option<&Segment<'_>>,
        state: Option<&DVector<f64>>,
        param: Option<&DVector<f64>>,
    ) -> Result<DVector<f64>> {
        let l = self.layout;
        let mut a = DVector::zeros(l.arity());
        if let Some(h) = history {
            for (j, lag) in self.lags.iter().enumerate() {
                a.rows_mut(l.lag(j).start, l.n).copy_from(&h.eval(-lag)?);
            }
            if let Some(k) = &self.kernel {
                a.rows_mut(l.kernel().start, l.kernel).copy_from(&k.integrate(self.t, h)?);
            }
        }
        if let Some(s) = state {
            if !l.state || s.len() != l.n {
                return Err(SddeError::Invalid("delayed-state direction does not fit this map".into()));
            }
            a.rows_mut(l.state().start, l.n).copy_from(s);
        }
        if let Some(p) = param {
            if p.len() != l.params {
                return Err(SddeError::Invalid(format!(
                    "parameter direction has length {}, expected {}",
                    p.len(),
                    l.params
                )));
            }
            a.rows_mut(l.params().start, l.params).copy_from(p);
        }
        Ok(a)
    }

    pub fn lift_slot(&self, arg: SlotArg<'_>) -> Result<DVector<f64>> {
        match arg {
            SlotArg::History(h) => self.lift(Some(h), None, None),
            SlotArg::State(s) => self.lift(None, Some(s), None),
            SlotArg::Param(p) => self.lift(None, None, Some(p)),
        }
    }

    /// First derivative applied to a lifted direction.
    pub fn first(&self, da: &DVector<f64>) -> DVector<f64> {
        &self.jacobian * da
    }

    /// Second derivative applied to two lifted directions.
    pub fn bilinear(&self, da: &DVector<f64>, db: &DVector<f64>) -> DVector<f64> {
        assert!(!self.hessians.is_empty(), "second derivatives were not requested");
        DVector::from_iterator(self.hessians.len(), self.hessians.iter().map(|h| da.dot(&(h * db))))
    }

    /// `D_ij g⟨a, b⟩` with the slots `i`, `j` given by the argument kinds.
    pub fn apply_second(&self, a: SlotArg<'_>, b: SlotArg<'_>) -> Result<DVector<f64>> {
        Ok(self.bilinear(&self.lift_slot(a)?, &self.lift_slot(b)?))
    }

    fn phi_part(&self) -> PhiPart {
        let l = self.layout;
        let out = self.outputs();
        let point = self
            .lags
            .iter()
            .enumerate()
            .map(|(j, &lag)| (lag, self.jacobian.view((0, l.lag(j).start), (out, l.n)).into_owned()))
            .collect();
        let kernel = self
            .kernel
            .as_ref()
            .map(|k| (k.clone(), self.jacobian.view((0, l.kernel().start), (out, l.kernel)).into_owned()));
        PhiPart { t: self.t, point, kernel }
    }

    pub(crate) fn f_derivative(&self) -> FDerivative {
        let l = self.layout;
        let out = self.outputs();
        FDerivative {
            phi: self.phi_part(),
            state: self.jacobian.view((0, l.state().start), (out, l.n)).into_owned(),
            param: self.jacobian.view((0, l.params().start), (out, l.params)).into_owned(),
        }
    }

    pub(crate) fn tau_derivative(&self) -> TauDerivative {
        let l = self.layout;
        TauDerivative {
            phi: self.phi_part(),
            xi: self.jacobian.view((0, l.params().start), (1, l.params)).into_owned(),
        }
    }
}
