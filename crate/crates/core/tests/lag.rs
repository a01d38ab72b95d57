mod common;

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use nalgebra::{dvector, DMatrix};

use common::*;
use sdde::lag::{classify_pm, lag_profile, lag_rate, lag_value, Monotonicity};
use sdde::model::{ClosureCore, DelayAtomSet, ModelSpec};
use sdde::sens1::solve_first_variation;
use sdde::solver::solve;

#[test]
fn constant_delay_is_a_shift() {
    let model = linear_model(3.0);
    let g = linear_gamma(&[1.0], -1.0);
    let x = solve(&model, &g, &config(0.1, 3.0)).unwrap();
    let p = lag_profile(&model, &g, &x, 100.0, None).unwrap();
    assert!(p.u.iter().zip(&p.grid).all(|(u, t)| (u - (t - 1.0)).abs() < 1e-15));
    assert!(p.u_dot.iter().all(|&v| v == 1.0));
    assert_eq!(p.zeros.len(), 1);
    assert!((p.zeros[0] - 1.0).abs() < 1e-14);
    let rep = classify_pm(&p, 1e-8, 2).unwrap();
    assert!(rep.is_pm && rep.is_p1);
    assert_eq!(rep.mesh, vec![0.0, 3.0]);
}

#[test]
fn sinusoidal_delay_changes_direction_where_expected() {
    let model = sin_lag_model(3.0);
    let g = linear_gamma(&[1.0], -1.0);
    let x = solve(&model, &g, &config(0.05, 3.0)).unwrap();
    let density = 2000.0;
    let rep = classify_pm(&lag_profile(&model, &g, &x, density, None).unwrap(), 1e-8, 2).unwrap();
    // u̇ = 1 − 0.9π·cos(2πt) vanishes where cos(2πt) = 1/(0.9π)
    let c = (1.0 / (0.9 * PI)).acos() / TAU;
    let expected: Vec<f64> = (0..3).flat_map(|k| [k as f64 + c, k as f64 + 1.0 - c]).collect();
    let interior = &rep.mesh[1..rep.mesh.len() - 1];
    assert_eq!(interior.len(), expected.len());
    for (a, b) in interior.iter().zip(&expected) {
        assert!((a - b).abs() <= 1.0 / density, "{a} vs {b}");
    }
    assert!(rep.is_pm && !rep.is_p1);
    assert_eq!(rep.piece_sign[0], Monotonicity::Decreasing);
    assert_eq!(rep.piece_sign[1], Monotonicity::Increasing);
}

#[test]
fn lag_rate_matches_differences() {
    let model = sd_model(3.0);
    let g = sd_gamma(0.4, SD_THETA, SD_XI);
    let x = solve(&model, &g, &config(0.01, 2.0)).unwrap();
    let eps = 1e-6;
    for t in [0.13, 0.71, 1.37, 1.9] {
        let fd = (lag_value(&model, &g, &x, t + eps).unwrap() - lag_value(&model, &g, &x, t - eps).unwrap()) / (2.0 * eps);
        let exact = lag_rate(&model, &g, &x, t).unwrap();
        assert!((fd - exact).abs() < 1e-7, "t={t}: {fd} vs {exact}");
    }
}

/// `τ(t) = 0.1 + t`, so `u ≡ −0.1` is flat.
fn flat_model() -> ModelSpec {
    let tau = ClosureCore::new(
        0,
        1,
        |t, _| dvector![0.1 + t],
        |_, _| dvector![1.0],
        |_, _| DMatrix::zeros(1, 0),
        |_, _| vec![DMatrix::zeros(0, 0)],
    );
    ModelSpec::new(1, 1, 0, 1.0, 0.9, DelayAtomSet::empty(), linear_model(1.0).f_core().clone(), DelayAtomSet::empty(), Arc::new(tau))
        .unwrap()
}

#[test]
fn flat_lag_is_not_piecewise_monotone() {
    let model = flat_model();
    let g = linear_gamma(&[1.0, 1.0], -1.0);
    let cfg = config(0.05, 0.9);
    let x = solve(&model, &g, &cfg).unwrap();
    let p = lag_profile(&model, &g, &x, 500.0, None).unwrap();
    assert!(p.zeros.is_empty());
    assert!(!classify_pm(&p, 1e-8, 2).unwrap().is_pm);
    let z = solve_first_variation(&model, &g, &x, &g.theta_direction(0), &cfg).unwrap();
    assert!(z.hypothesis_unverified);
}

#[test]
fn profile_rejects_bad_arguments() {
    let model = linear_model(3.0);
    let g = linear_gamma(&[1.0], -1.0);
    let x = solve(&model, &g, &config(0.1, 1.0)).unwrap();
    assert!(lag_profile(&model, &g, &x, 0.0, None).is_err());
    assert!(lag_profile(&model, &g, &x, 10.0, Some(2.0)).is_err());
}
