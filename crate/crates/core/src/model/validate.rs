//! Finite-difference cross-checks of user-supplied partials.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{DelayAtomSet, ModelSpec, SmoothCore};

const PROBE_SEED: u64 = 0x5dde_0001;
const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    /// Largest absolute mismatch seen over all probes.
    pub max_mismatch: f64,
    /// Largest magnitude of the reference quantity.
    pub scale: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub probes: usize,
    pub tolerance: f64,
    pub checks: Vec<CheckResult>,
    pub warnings: Vec<String>,
    pub passed: bool,
}

struct Tally {
    name: String,
    mismatch: f64,
    scale: f64,
}

impl Tally {
    fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), mismatch: 0.0, scale: 0.0 }
    }
    fn add(&mut self, supplied: &DMatrix<f64>, reference: &DMatrix<f64>) {
        self.mismatch = self.mismatch.max((supplied - reference).amax());
        self.scale = self.scale.max(reference.amax());
    }
    fn add_scalar(&mut self, supplied: f64, reference: f64) {
        self.mismatch = self.mismatch.max((supplied - reference).abs());
        self.scale = self.scale.max(reference.abs());
    }
    fn finish(self, tol: f64) -> CheckResult {
        let passed = self.mismatch.is_finite() && self.mismatch <= tol * (1.0 + self.scale);
        CheckResult { name: self.name, max_mismatch: self.mismatch, scale: self.scale, passed }
    }
}

fn probe_args(rng: &mut ChaCha8Rng, arity: usize) -> DVector<f64> {
    DVector::from_fn(arity, |_, _| {
        let m: f64 = rng.random_range(0.25..1.0);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

fn fd_step(x: f64) -> f64 {
    FD_STEP * (1.0 + x.abs())
}

fn check_core(
    name: &str,
    core: &dyn SmoothCore,
    horizon: f64,
    probes: usize,
    tol: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<CheckResult> {
    let mut grad = Tally::new(format!("{name}: gradient"));
    let mut hess = Tally::new(format!("{name}: hessian"));
    let mut sym = Tally::new(format!("{name}: hessian symmetry"));
    let mut time = Tally::new(format!("{name}: time partial"));
    let (m, out) = (core.arity(), core.outputs());
    for _ in 0..probes {
        let t = rng.random_range(0.0..=horizon);
        let a = probe_args(rng, m);
        let mut fd_g = DMatrix::zeros(out, m);
        let mut fd_h = vec![DMatrix::zeros(m, m); out];
        for k in 0..m {
            let e = fd_step(a[k]);
            let mut ap = a.clone();
            let mut am = a.clone();
            ap[k] += e;
            am[k] -= e;
            fd_g.set_column(k, &((core.value(t, &ap) - core.value(t, &am)) / (2.0 * e)));
            let dg = (core.gradient(t, &ap) - core.gradient(t, &am)) / (2.0 * e);
            for (o, h) in fd_h.iter_mut().enumerate() {
                for l in 0..m {
                    h[(l, k)] = dg[(o, l)];
                }
            }
        }
        grad.add(&core.gradient(t, &a), &fd_g);
        let supplied = core.hessian(t, &a);
        if supplied.len() != out || supplied.iter().any(|h| h.shape() != (m, m)) {
            hess.mismatch = f64::INFINITY;
        } else {
            for (h, fd) in supplied.iter().zip(&fd_h) {
                hess.add(h, fd);
                sym.add(h, &h.transpose());
            }
        }
        let e = fd_step(t);
        let fd_t = (core.value(t + e, &a) - core.value(t - e, &a)) / (2.0 * e);
        let as_col = |v: DVector<f64>| DMatrix::from_column_slice(v.len(), 1, v.as_slice());
        time.add(&as_col(core.time_partial(t, &a)), &as_col(fd_t));
    }
    [grad, hess, sym, time].into_iter().map(|t| t.finish(tol)).collect()
}

fn check_atoms(
    name: &str,
    atoms: &DelayAtomSet,
    r: f64,
    horizon: f64,
    probes: usize,
    tol: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<CheckResult> {
    let mut out = Vec::new();
    for (j, lag) in atoms.point_lags.iter().enumerate() {
        let mut rate = Tally::new(format!("{name}: lag {j} derivative"));
        let mut range = Tally::new(format!("{name}: lag {j} range"));
        let grid = (0..=probes.max(1)).map(|i| horizon * i as f64 / probes.max(1) as f64);
        let random: Vec<f64> = (0..probes).map(|_| rng.random_range(0.0..=horizon)).collect();
        for t in grid.chain(random) {
            let v = lag.value(t);
            let excess = if v < 0.0 { -v } else if v > r { v - r } else { 0.0 };
            range.mismatch = range.mismatch.max(excess);
            range.scale = range.scale.max(v.abs());
            let e = fd_step(t);
            rate.add_scalar(lag.derivative(t), (lag.value(t + e) - lag.value(t - e)) / (2.0 * e));
        }
        out.push(rate.finish(tol));
        let mut range = range.finish(tol);
        range.passed = range.max_mismatch == 0.0;
        out.push(range);
    }
    if let Some(k) = &atoms.kernel {
        let mut rate = Tally::new(format!("{name}: kernel time partial"));
        for _ in 0..probes {
            let t = rng.random_range(0.0..=horizon);
            let z = rng.random_range(-r..=0.0);
            let e = fd_step(t);
            rate.add(&k.time_partial(t, z), &((k.value(t + e, z) - k.value(t - e, z)) / (2.0 * e)));
        }
        out.push(rate.finish(tol));
    }
    out
}

/// Cross-checks every supplied derivative of the model against central
/// finite differences at deterministic pseudo-random probes.
pub fn validate_model(model: &ModelSpec, probes: usize, tol: f64) -> ValidationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    let (r, horizon) = (model.delay_bound(), model.horizon());
    let mut checks = Vec::new();
    checks.extend(check_core("f", model.f_core().as_ref(), horizon, probes, tol, &mut rng));
    checks.extend(check_core("tau", model.tau_core().as_ref(), horizon, probes, tol, &mut rng));
    checks.extend(check_atoms("f", model.f_atoms(), r, horizon, probes, tol, &mut rng));
    checks.extend(check_atoms("tau", model.tau_atoms(), r, horizon, probes, tol, &mut rng));

    let mut warnings = Vec::new();
    let mut outside = 0;
    for _ in 0..probes {
        let t = rng.random_range(0.0..=horizon);
        let a = probe_args(&mut rng, model.tau_core().arity());
        let v = model.tau_core().value(t, &a)[0];
        if !(0.0..=r).contains(&v) {
            outside += 1;
        }
    }
    if outside > 0 {
        warnings.push(format!(
            "delay core left [0, {r}] at {outside} of {probes} random probes; the solver checks the range along every trajectory"
        ));
    }
    let passed = checks.iter().all(|c| c.passed);
    ValidationReport { probes, tolerance: tol, checks, warnings, passed }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ArgLayout, ConstantTau, LinearCore, QuadraticCore};
    use nalgebra::dvector;
    use std::sync::Arc;

    #[derive(Debug)]
    struct Doubled(LinearCore);

    impl SmoothCore for Doubled {
        fn arity(&self) -> usize {
            self.0.arity()
        }
        fn outputs(&self) -> usize {
            self.0.outputs()
        }
        fn value(&self, t: f64, a: &DVector<f64>) -> DVector<f64> {
            self.0.value(t, a)
        }
        fn time_partial(&self, t: f64, a: &DVector<f64>) -> DVector<f64> {
            self.0.time_partial(t, a)
        }
        fn gradient(&self, t: f64, a: &DVector<f64>) -> DMatrix<f64> {
            self.0.gradient(t, a) * 2.0
        }
        fn hessian(&self, t: f64, a: &DVector<f64>) -> Vec<DMatrix<f64>> {
            self.0.hessian(t, a)
        }
    }

    fn model(core: Arc<dyn SmoothCore>) -> ModelSpec {
        ModelSpec::new(
            1,
            1,
            0,
            1.0,
            3.0,
            DelayAtomSet::empty(),
            core,
            DelayAtomSet::empty(),
            Arc::new(ConstantTau { arity: 0, value: 1.0 }),
        )
        .unwrap()
    }

    #[test]
    fn correct_partials_pass() {
        let l = ArgLayout { n: 1, lags: 0, kernel: 0, state: true, params: 1 };
        let rep = validate_model(&model(Arc::new(LinearCore::new(l).unwrap())), 20, 1e-6);
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn scaled_gradient_fails() {
        let l = ArgLayout { n: 1, lags: 0, kernel: 0, state: true, params: 1 };
        let rep = validate_model(&model(Arc::new(Doubled(LinearCore::new(l).unwrap()))), 20, 1e-6);
        assert!(!rep.passed);
        let g = rep.checks.iter().find(|c| c.name == "f: gradient").unwrap();
        assert!(!g.passed);
        assert!((g.max_mismatch - g.scale).abs() < 1e-6);
    }

    #[test]
    fn zero_core_passes_with_zero_mismatch() {
        let zero = QuadraticCore::new(dvector![0.0], DMatrix::zeros(1, 2), vec![]).unwrap();
        let rep = validate_model(&model(Arc::new(zero)), 10, 1e-6);
        assert!(rep.passed);
        assert!(rep.checks.iter().all(|c| c.max_mismatch == 0.0));
    }
}
