mod common;

use nalgebra::dvector;

use common::*;
use sdde::sens1::solve_first_variation;
use sdde::sens2::{assemble_operators, hessian_tensor, solve_second_variation, Arg};
use sdde::solver::solve;
use sdde::trajectory::Trajectory;
use sdde::SddeError;

#[test]
fn operators_on_the_linear_model() {
    // φ(s) = 1 − s is compatible with θ = −1/2
    let model = linear_model(3.0);
    let g = linear_gamma(&[1.0, -1.0], -0.5);
    let x = solve(&model, &g, &config(0.1, 2.0)).unwrap();
    let ops = assemble_operators(&model, &g, &x, 0.5).unwrap();
    let one = Trajectory::constant(dvector![1.0], -1.0, 1.0).unwrap();
    let two = Trajectory::constant(dvector![2.0], -1.0, 1.0).unwrap();
    let (s1, s2) = (one.segment(0.5).unwrap(), two.segment(0.5).unwrap());
    let (t1, t2, none) = (dvector![0.3], dvector![0.7], dvector![]);
    let h = Arg { phi: &s1, theta: &t1, xi: &none };
    let y = Arg { phi: &s2, theta: &t2, xi: &none };
    assert_eq!(ops.a(h).unwrap(), 0.0);
    assert_eq!(ops.e(h).unwrap()[0], 1.0);
    assert_eq!(ops.g(h, y).unwrap(), 0.0);
    assert_eq!(ops.h_op(h, y).unwrap()[0], 0.0);
    // D²(θ·u)⟨h, y⟩ = h(−1)·y^θ + y(−1)·h^θ
    assert!((ops.b(h, y).unwrap()[0] - 1.3).abs() < 1e-15);
}

#[test]
fn incompatible_data_is_refused() {
    let model = linear_model(3.0);
    let g = linear_gamma(&[1.0], -1.0);
    let cfg = config(0.1, 2.0);
    let x = solve(&model, &g, &cfg).unwrap();
    let d = g.theta_direction(0);
    assert!(matches!(solve_second_variation(&model, &g, &x, &d, &d, &cfg), Err(SddeError::Hypothesis(_))));
    assert!(matches!(assemble_operators(&model, &g, &x, 0.5), Err(SddeError::Hypothesis(_))));
}

#[test]
fn zero_direction_and_empty_basis() {
    let model = sd_model(3.0);
    let g = sd_gamma(0.2, SD_THETA, SD_XI);
    let cfg = config(0.05, 1.5);
    let x = solve(&model, &g, &cfg).unwrap();
    let w = solve_second_variation(&model, &g, &x, &g.zero_like(), &g.theta_direction(0), &cfg).unwrap();
    assert_eq!(w.sup_norm, 0.0);
    assert!(w.compatible && w.is_pm && w.phi_w2inf);
    assert!(hessian_tensor(&model, &g, &x, &[], &cfg).unwrap().is_empty());
}

#[test]
fn second_variation_is_symmetric() {
    let model = kernel_model(3.0);
    let g = kernel_gamma(&model);
    let cfg = config(0.05, 1.0);
    let x = solve(&model, &g, &cfg).unwrap();
    let mut r = rng(21);
    let h = random_direction(&mut r, 2, 2, 1, 1.0);
    let y = random_direction(&mut r, 2, 2, 1, 1.0);
    let hy = solve_second_variation(&model, &g, &x, &h, &y, &cfg).unwrap();
    let yh = solve_second_variation(&model, &g, &x, &y, &h, &cfg).unwrap();
    let diff = sup_diff(&hy.w, &yh.w, &grid(0.0, 1.0, 100));
    assert!(diff <= 1e-13 * (1.0 + hy.sup_norm), "{diff}");
    let table = hessian_tensor(&model, &g, &x, &[h, y], &cfg).unwrap();
    assert_eq!(table[0][1].w, table[1][0].w);
}

#[test]
fn second_variation_differentiates_the_first() {
    let model = sd_model(3.0);
    let g = sd_gamma(0.2, SD_THETA, SD_XI);
    let cfg = config(0.01, 1.5);
    let x = solve(&model, &g, &cfg).unwrap();
    let h = g.theta_direction(0);
    let y = g.xi_direction(0);
    let w = solve_second_variation(&model, &g, &x, &h, &y, &cfg).unwrap();
    let eps = 1e-4;
    let z_at = |s: f64| {
        let gs = g.offset(s, &y).unwrap();
        let xs = solve(&model, &gs, &cfg).unwrap();
        solve_first_variation(&model, &gs, &xs, &h, &cfg).unwrap().z
    };
    let fd = Trajectory::linear_combination(0.5 / eps, &z_at(eps), -0.5 / eps, &z_at(-eps)).unwrap();
    let diff = sup_diff(&fd, &w.w, &grid(0.0, 1.5, 150));
    assert!(diff <= 1e-5 * (1.0 + w.sup_norm), "{diff}");
}
