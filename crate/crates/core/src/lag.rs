//! The time-lag function `u(t) = t − τ(t, x_t, ξ)`: sampling, its
//! derivative by the chain rule, zeros, and piecewise-monotonicity checks.

use serde::Serialize;

use crate::error::{Result, SddeError};
use crate::model::ModelSpec;
use crate::numerics::brent;
use crate::trajectory::{Parameter, Trajectory};

/// `u(t)` along a solution.
pub fn lag_value(model: &ModelSpec, gamma: &Parameter, traj: &Trajectory, t: f64) -> Result<f64> {
    Ok(t - model.eval_tau(t, &traj.segment(t)?, &gamma.xi)?)
}

/// `u̇(t) = 1 − d/dt τ(t, x_t, ξ)`.
pub fn lag_rate(model: &ModelSpec, gamma: &Parameter, traj: &Trajectory, t: f64) -> Result<f64> {
    Ok(1.0 - model.tau_rate(t, &traj.segment(t)?, &gamma.xi)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LagProfile {
    pub grid: Vec<f64>,
    pub u: Vec<f64>,
    pub u_dot: Vec<f64>,
    /// Roots of `u` found between sign changes on the grid.
    pub zeros: Vec<f64>,
    /// Grid points per unit time.
    pub grid_density: f64,
}

/// Samples `u` and `u̇` on a uniform grid over `[0, t_end]` with at least
/// `grid_density` points per unit time; `t_end` defaults to the end of `traj`.
pub fn lag_profile(
    model: &ModelSpec,
    gamma: &Parameter,
    traj: &Trajectory,
    grid_density: f64,
    t_end: Option<f64>,
) -> Result<LagProfile> {
    let end = t_end.unwrap_or(traj.end());
    if !(grid_density > 0.0) || !(end > 0.0) || end > traj.end() {
        return Err(SddeError::Invalid(format!(
            "lag profile needs a positive density and an end time in (0, {}]",
            traj.end()
        )));
    }
    let cells = (end * grid_density).ceil().max(1.0) as usize;
    let grid: Vec<f64> = (0..=cells).map(|i| if i == cells { end } else { end * i as f64 / cells as f64 }).collect();
    let u = grid.iter().map(|&t| lag_value(model, gamma, traj, t)).collect::<Result<Vec<_>>>()?;
    let u_dot = grid.iter().map(|&t| lag_rate(model, gamma, traj, t)).collect::<Result<Vec<_>>>()?;
    let mut zeros = Vec::new();
    for i in 0..cells {
        if u[i] == 0.0 {
            zeros.push(grid[i]);
        } else if u[i + 1] != 0.0 && u[i].signum() != u[i + 1].signum() {
            let root = brent(|t| lag_value(model, gamma, traj, t), grid[i], grid[i + 1], 1e-14, 200)?;
            zeros.push(root);
        }
    }
    if u[cells] == 0.0 {
        zeros.push(grid[cells]);
    }
    Ok(LagProfile { grid, u, u_dot, zeros, grid_density: cells as f64 / end })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Monotonicity {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PMReport {
    /// `0 = t_0 < … < t_m = α`: interval ends and sign changes of `u̇`.
    pub mesh: Vec<f64>,
    pub piece_sign: Vec<Monotonicity>,
    /// `min |u̇|` over each piece shrunk by `shrink_eps` cells at both ends.
    pub min_abs_slope: Vec<f64>,
    pub is_pm: bool,
    /// Increasing on the whole interval with `u̇ ≥ slope_floor` everywhere.
    pub is_p1: bool,
    pub slope_floor: f64,
    pub grid_density: f64,
}

impl PMReport {
    pub fn pieces(&self) -> usize {
        self.piece_sign.len()
    }
}

/// Piecewise strict monotonicity of `u` at grid resolution.
///
/// Slopes with `|u̇| < slope_floor` count as zero. A sign change of `u̇` between
/// two non-zero grid values becomes a mesh point (linear interpolation, or the
/// middle of the zero run between them). Two sign changes within two cells of
/// each other are a [`SddeError::Resolution`].
pub fn classify_pm(profile: &LagProfile, slope_floor: f64, shrink_eps: usize) -> Result<PMReport> {
    let g = &profile.grid;
    let d = &profile.u_dot;
    if g.len() < 2 || d.len() != g.len() {
        return Err(SddeError::Invalid("lag profile needs at least two samples".into()));
    }
    let sign = |v: f64| if v >= slope_floor { 1 } else if v <= -slope_floor { -1 } else { 0 };
    let mut changes: Vec<(usize, f64)> = Vec::new();
    let mut last: Option<(usize, i32)> = None;
    for (i, &v) in d.iter().enumerate() {
        let s = sign(v);
        if s == 0 {
            continue;
        }
        if let Some((j, sj)) = last {
            if sj != s {
                let at = if j + 1 == i {
                    g[j] + (g[i] - g[j]) * d[j] / (d[j] - d[i])
                } else {
                    0.5 * (g[j + 1] + g[i - 1])
                };
                changes.push((i, at));
            }
        }
        last = Some((i, s));
    }
    for w in changes.windows(2) {
        if w[1].0 - w[0].0 <= 2 {
            return Err(SddeError::Resolution(format!(
                "slope of the lag changes sign twice between t = {} and t = {}",
                w[0].1, w[1].1
            )));
        }
    }
    let mut mesh = vec![g[0]];
    mesh.extend(changes.iter().map(|c| c.1));
    mesh.push(*g.last().unwrap());
    let cell = (g[g.len() - 1] - g[0]) / (g.len() - 1) as f64;
    let shrink = shrink_eps as f64 * cell;
    let mut piece_sign = Vec::new();
    let mut min_abs_slope = Vec::new();
    for w in mesh.windows(2) {
        let (a, b) = (w[0], w[1]);
        let inside: Vec<usize> = (0..g.len()).filter(|&i| g[i] >= a && g[i] <= b).collect();
        let mut shrunk: Vec<usize> = inside.iter().copied().filter(|&i| g[i] >= a + shrink && g[i] <= b - shrink).collect();
        if shrunk.is_empty() {
            let mid = 0.5 * (a + b);
            if let Some(&i) = inside.iter().min_by(|&&i, &&j| (g[i] - mid).abs().total_cmp(&(g[j] - mid).abs())) {
                shrunk.push(i);
            }
        }
        let total: f64 = inside.iter().map(|&i| d[i]).sum();
        piece_sign.push(if total >= 0.0 { Monotonicity::Increasing } else { Monotonicity::Decreasing });
        min_abs_slope.push(shrunk.iter().map(|&i| d[i].abs()).fold(f64::INFINITY, f64::min));
    }
    let is_pm = min_abs_slope.iter().all(|&m| m >= slope_floor);
    let is_p1 = is_pm && piece_sign.len() == 1 && d.iter().all(|&v| v >= slope_floor);
    Ok(PMReport { mesh, piece_sign, min_abs_slope, is_pm, is_p1, slope_floor, grid_density: profile.grid_density })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(grid: Vec<f64>, u_dot: Vec<f64>) -> LagProfile {
        let u = grid.clone();
        LagProfile { grid, u, u_dot, zeros: vec![], grid_density: 1.0 }
    }

    #[test]
    fn constant_slope_is_p1() {
        let g: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let rep = classify_pm(&profile(g, vec![1.0; 11]), 1e-8, 2).unwrap();
        assert!(rep.is_pm && rep.is_p1);
        assert_eq!(rep.pieces(), 1);
    }

    #[test]
    fn flat_stretch_is_not_pm() {
        let g: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let d = g.iter().map(|&t| if (0.3..=0.6).contains(&t) { 0.0 } else { 1.0 }).collect();
        let rep = classify_pm(&profile(g, d), 1e-8, 2).unwrap();
        assert!(!rep.is_pm);
        assert!(!rep.is_p1);
    }

    #[test]
    fn one_sign_change_gives_two_pieces() {
        let g: Vec<f64> = (0..=40).map(|i| i as f64 / 40.0).collect();
        let d = g.iter().map(|&t| 0.55 - t).collect();
        let rep = classify_pm(&profile(g, d), 1e-8, 2).unwrap();
        assert_eq!(rep.pieces(), 2);
        assert!((rep.mesh[1] - 0.55).abs() < 1e-12);
        assert_eq!(rep.piece_sign, vec![Monotonicity::Increasing, Monotonicity::Decreasing]);
        assert!(rep.is_pm && !rep.is_p1);
    }

    #[test]
    fn close_sign_changes_are_a_resolution_error() {
        let g: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let d = vec![1.0, 1.0, 1.0, -1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        assert!(matches!(classify_pm(&profile(g, d), 1e-8, 2), Err(SddeError::Resolution(_))));
    }
}
