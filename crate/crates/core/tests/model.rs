mod common;

use std::sync::Arc;

use nalgebra::{dmatrix, dvector, DMatrix, DVector};

use common::*;
use sdde::model::{validate_model, ClosureCore, ConstantTau, DelayAtomSet, Kernel, ModelSpec};
use sdde::trajectory::{Direction, Parameter, Trajectory};
use sdde::SddeError;

fn ramp() -> Trajectory {
    Trajectory::polynomial(&[vec![0.0, 1.0]], -1.0, 0.0).unwrap()
}

#[test]
fn constant_kernel_integrates_the_ramp() {
    let k = Kernel::constant(dmatrix![1.0], 2).unwrap();
    let x = ramp();
    let v = k.integrate(0.0, &x.segment(0.0).unwrap()).unwrap();
    assert!((v[0] + 0.5).abs() < 1e-15);
}

#[test]
fn exponential_kernel_matches_a_finer_rule() {
    let model = kernel_model(3.0);
    let g = kernel_gamma(&model);
    let seg = g.phi.segment(0.0).unwrap();
    let m = dmatrix![0.5, 0.0; 0.2, 0.3];
    let coarse = Kernel::exponential(m.clone(), 1.5, 4).unwrap().integrate(0.0, &seg).unwrap();
    let fine = Kernel::exponential(m, 1.5, 8).unwrap().integrate(0.0, &seg).unwrap();
    // the same kernel through the general path
    let general = Kernel::new(2, 2, 8, |_, z| dmatrix![0.5, 0.0; 0.2, 0.3] * (1.5 * z).exp(), |_, _| DMatrix::zeros(2, 2))
        .unwrap()
        .integrate(0.0, &seg)
        .unwrap();
    assert!((&coarse - &fine).amax() < 1e-8, "{coarse} vs {fine}");
    assert!((&general - &fine).amax() < 1e-15);
}

fn shifted(x: &Trajectory, s: f64, h: &Trajectory) -> Trajectory {
    Trajectory::linear_combination(1.0, x, s, h).unwrap()
}

struct Probe {
    model: ModelSpec,
    gamma: Parameter,
    h: Direction,
    du: DVector<f64>,
}

fn probes() -> Vec<Probe> {
    let mut r = rng(11);
    let km = kernel_model(3.0);
    let kg = kernel_gamma(&km);
    let sd = sd_model(3.0);
    vec![
        Probe { h: random_direction(&mut r, 2, 2, 1, 1.0), du: dvector![0.3, -0.7], model: km, gamma: kg },
        Probe { h: random_direction(&mut r, 1, 1, 2, 1.0), du: dvector![0.4], model: sd, gamma: sd_gamma(0.3, SD_THETA, SD_XI) },
    ]
}

fn f_along(p: &Probe, s: f64) -> DVector<f64> {
    let x = shifted(&p.gamma.phi, s, &p.h.phi);
    let seg = x.segment(0.0).unwrap();
    let u = p.gamma.phi.eval(-0.4).unwrap() + &p.du * s;
    p.model.eval_f(0.0, &seg, &u, &(&p.gamma.theta + &p.h.theta * s)).unwrap()
}

fn tau_along(p: &Probe, s: f64) -> f64 {
    let x = shifted(&p.gamma.phi, s, &p.h.phi);
    p.model.eval_tau(0.0, &x.segment(0.0).unwrap(), &(&p.gamma.xi + &p.h.xi * s)).unwrap()
}

#[test]
fn first_derivative_of_f_matches_central_differences() {
    let eps = 1e-5;
    for p in probes() {
        let seg = p.gamma.phi.segment(0.0).unwrap();
        let hseg = p.h.phi.segment(0.0).unwrap();
        let u = p.gamma.phi.eval(-0.4).unwrap();
        let df = p.model.d_f(0.0, &seg, &u, &p.gamma.theta).unwrap().apply(&hseg, &p.du, &p.h.theta).unwrap();
        let fd = (f_along(&p, eps) - f_along(&p, -eps)) / (2.0 * eps);
        assert!((&df - &fd).amax() < 1e-8, "{df} vs {fd}");
    }
}

#[test]
fn second_derivative_of_f_matches_second_differences() {
    let eps = 1e-4;
    for p in probes() {
        let seg = p.gamma.phi.segment(0.0).unwrap();
        let hseg = p.h.phi.segment(0.0).unwrap();
        let u = p.gamma.phi.eval(-0.4).unwrap();
        let lin = p.model.d2_f(0.0, &seg, &u, &p.gamma.theta).unwrap();
        let a = lin.lift(Some(&hseg), Some(&p.du), Some(&p.h.theta)).unwrap();
        let d2 = lin.bilinear(&a, &a);
        let fd = (f_along(&p, eps) - f_along(&p, 0.0) * 2.0 + f_along(&p, -eps)) / (eps * eps);
        assert!((&d2 - &fd).amax() < 1e-5, "{d2} vs {fd}");
    }
}

#[test]
fn delay_derivatives_match_differences() {
    let eps = 1e-5;
    for p in probes() {
        let seg = p.gamma.phi.segment(0.0).unwrap();
        let hseg = p.h.phi.segment(0.0).unwrap();
        let dt = p.model.d_tau(0.0, &seg, &p.gamma.xi).unwrap().apply(&hseg, &p.h.xi).unwrap();
        let fd = (tau_along(&p, eps) - tau_along(&p, -eps)) / (2.0 * eps);
        assert!((dt - fd).abs() < 1e-8, "{dt} vs {fd}");
        let lin = p.model.d2_tau(0.0, &seg, &p.gamma.xi).unwrap();
        let a = lin.lift(Some(&hseg), None, Some(&p.h.xi)).unwrap();
        let d2 = lin.bilinear(&a, &a)[0];
        let fd2 = (tau_along(&p, 1e-4) - 2.0 * tau_along(&p, 0.0) + tau_along(&p, -1e-4)) / 1e-8;
        assert!((d2 - fd2).abs() < 1e-5, "{d2} vs {fd2}");
    }
}

#[test]
fn shipped_models_validate() {
    for m in [kernel_model(3.0), sd_model(3.0), linear_model(3.0), sin_lag_model(3.0)] {
        let rep = validate_model(&m, 16, 1e-5);
        assert!(rep.passed, "{:?}", rep.checks.iter().filter(|c| !c.passed).collect::<Vec<_>>());
    }
}

fn product_model(hessian_scale: f64) -> ModelSpec {
    // f = θ·u, with a deliberately scaled Hessian
    let core = ClosureCore::new(
        2,
        1,
        |_, a| dvector![a[0] * a[1]],
        |_, _| dvector![0.0],
        |_, a| dmatrix![a[1], a[0]],
        move |_, _| vec![dmatrix![0.0, 1.0; 1.0, 0.0] * hessian_scale],
    );
    ModelSpec::new(
        1,
        1,
        0,
        1.0,
        3.0,
        DelayAtomSet::empty(),
        Arc::new(core),
        DelayAtomSet::empty(),
        Arc::new(ConstantTau { arity: 0, value: 1.0 }),
    )
    .unwrap()
}

#[test]
fn validation_catches_a_wrong_hessian() {
    assert!(validate_model(&product_model(1.0), 16, 1e-5).passed);
    let rep = validate_model(&product_model(0.5), 16, 1e-5);
    assert!(!rep.passed);
    assert!(rep.checks.iter().any(|c| !c.passed && c.name.contains("hess")), "{:?}", rep.checks);
}

#[test]
fn delay_outside_range_is_a_domain_error() {
    let m = ModelSpec::new(
        1,
        1,
        0,
        1.0,
        3.0,
        DelayAtomSet::empty(),
        linear_model(3.0).f_core().clone(),
        DelayAtomSet::empty(),
        Arc::new(ConstantTau { arity: 0, value: 1.5 }),
    )
    .unwrap();
    let g = linear_gamma(&[1.0], -1.0);
    let err = m.eval_tau(0.0, &g.phi.segment(0.0).unwrap(), &dvector![]).unwrap_err();
    assert!(matches!(err, SddeError::Domain { .. }), "{err}");
    let late = linear_model(3.0).eval_f(4.0, &g.phi.segment(0.0).unwrap(), &dvector![1.0], &dvector![1.0]);
    assert!(matches!(late, Err(SddeError::Domain { .. })));
}
