//! Brute-force derivatives of the solution map by re-solving at perturbed
//! parameters, and observed convergence orders under step halving.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, SddeError};
use crate::model::ModelSpec;
use crate::numerics::inf_norm;
use crate::solver::{solve, SolveConfig};
use crate::trajectory::{Direction, Parameter, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdSchedule {
    /// Strictly decreasing positive steps, applied to the direction as given.
    pub eps_list: Vec<f64>,
    pub richardson: bool,
}

impl FdSchedule {
    pub fn new(eps_list: Vec<f64>, richardson: bool) -> Result<Self> {
        if eps_list.is_empty() || eps_list.iter().any(|e| !(*e > 0.0)) || eps_list.windows(2).any(|w| w[1] >= w[0]) {
            return Err(SddeError::Invalid("eps_list must be non-empty, positive and strictly decreasing".into()));
        }
        Ok(Self { eps_list, richardson })
    }

    /// `{1e-3, 5e-4, 2.5e-4}·(|γ|_Γ + 1)/|h|_Γ` with Richardson extrapolation.
    pub fn default_for(gamma: &Parameter, h: &Direction) -> Self {
        let hn = h.norm();
        let scale = if hn > 0.0 { (gamma.norm() + 1.0) / hn } else { 1.0 };
        Self { eps_list: [1e-3, 5e-4, 2.5e-4].iter().map(|e| e * scale).collect(), richardson: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdFirst {
    pub times: Vec<f64>,
    /// Extrapolated directional derivative per time.
    pub values: Vec<Vec<f64>>,
    /// Max-norm error estimate per time from the extrapolation table.
    pub error: Vec<f64>,
    /// Plain central differences per `eps` level, then per time.
    pub levels: Vec<Vec<Vec<f64>>>,
    /// Set when successive levels fail to approach each other.
    pub conditioning_warning: Option<String>,
}

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn sample(traj: &Trajectory, times: &[f64]) -> Result<Vec<DVector<f64>>> {
    times.iter().map(|&t| traj.eval(t)).collect()
}

/// Solves at every parameter concurrently and samples each solution on `times`.
fn solve_all(model: &ModelSpec, params: &[Parameter], times: &[f64], cfg: &SolveConfig) -> Result<Vec<Vec<DVector<f64>>>> {
    params.par_iter().map(|p| sample(&solve(model, p, cfg)?, times)).collect()
}

/// Central differences `[x(γ + εh) − x(γ − εh)]/(2ε)` over the schedule,
/// extrapolated in `ε²` when requested.
pub fn fd_first(
    model: &ModelSpec,
    gamma: &Parameter,
    h: &Direction,
    times: &[f64],
    sched: &FdSchedule,
    cfg: &SolveConfig,
) -> Result<FdFirst> {
    let n = model.dim();
    if h.norm() == 0.0 {
        let zero = vec![vec![0.0; n]; times.len()];
        return Ok(FdFirst {
            times: times.to_vec(),
            values: zero.clone(),
            error: vec![0.0; times.len()],
            levels: vec![zero; sched.eps_list.len()],
            conditioning_warning: None,
        });
    }
    let mut params = Vec::with_capacity(2 * sched.eps_list.len());
    for &e in &sched.eps_list {
        params.push(gamma.offset(e, h)?);
        params.push(gamma.offset(-e, h)?);
    }
    let sols = solve_all(model, &params, times, cfg)?;
    let levels: Vec<Vec<DVector<f64>>> = sched
        .eps_list
        .iter()
        .enumerate()
        .map(|(i, &e)| (0..times.len()).map(|k| (&sols[2 * i][k] - &sols[2 * i + 1][k]) / (2.0 * e)).collect())
        .collect();
    let m = levels.len();
    let mut values = Vec::with_capacity(times.len());
    let mut error = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        if sched.richardson && m > 1 {
            // Neville tableau in ε²: column `col` stores T[i][col] at index i − col
            let mut prev: Vec<DVector<f64>> = levels.iter().map(|l| l[k].clone()).collect();
            let mut last_two = (prev[m - 1].clone(), prev[m - 1].clone());
            for col in 1..m {
                let mut next = Vec::with_capacity(m - col);
                for i in col..m {
                    let ratio = (sched.eps_list[i - col] / sched.eps_list[i]).powi(2);
                    let hi = &prev[i - col + 1];
                    let lo = &prev[i - col];
                    next.push(hi + (hi - lo) / (ratio - 1.0));
                }
                last_two = (prev[prev.len() - 1].clone(), next[next.len() - 1].clone());
                prev = next;
            }
            error.push(inf_norm(&(&last_two.1 - &last_two.0)));
            values.push(to_vec(&last_two.1));
        } else {
            let best = &levels[m - 1][k];
            let err = if m > 1 { inf_norm(&(best - &levels[m - 2][k])) } else { 0.0 };
            error.push(err);
            values.push(to_vec(best));
        }
    }
    let mut conditioning_warning = None;
    if m > 2 {
        let gaps: Vec<f64> = (1..m)
            .map(|i| (0..times.len()).map(|k| inf_norm(&(&levels[i][k] - &levels[i - 1][k]))).fold(0.0, f64::max))
            .collect();
        // gaps below the rounding level of a central difference are noise
        let scale = sols.iter().flatten().map(inf_norm).fold(0.0, f64::max);
        let floor = 1e3 * f64::EPSILON * (1.0 + scale) / sched.eps_list[m - 1];
        if gaps.windows(2).any(|w| w[1] > w[0] && w[1] > floor) {
            conditioning_warning = Some(format!("central differences do not converge monotonically: level gaps {gaps:?}"));
        }
    }
    Ok(FdFirst {
        times: times.to_vec(),
        values,
        error,
        levels: levels.iter().map(|l| l.iter().map(to_vec).collect()).collect(),
        conditioning_warning,
    })
}

/// Mixed central difference
/// `[x(γ+εh+εy) − x(γ+εh−εy) − x(γ−εh+εy) + x(γ−εh−εy)]/(4ε²)`.
///
/// The four points are formed as `γ ± ε(h + y)` and `γ ± ε(h − y)`, which
/// makes the result bit-identical under swapping `h` and `y`.
pub fn fd_second(
    model: &ModelSpec,
    gamma: &Parameter,
    h: &Direction,
    y: &Direction,
    times: &[f64],
    eps: f64,
    cfg: &SolveConfig,
) -> Result<Vec<Vec<f64>>> {
    if !(eps > 0.0) {
        return Err(SddeError::Invalid(format!("eps must be positive, got {eps}")));
    }
    if h.norm() == 0.0 || y.norm() == 0.0 {
        return Ok(vec![vec![0.0; model.dim()]; times.len()]);
    }
    let sum = Parameter::combine(1.0, h, 1.0, y)?;
    let diff = Parameter::combine(1.0, h, -1.0, y)?;
    let params = [gamma.offset(eps, &sum)?, gamma.offset(-eps, &sum)?, gamma.offset(eps, &diff)?, gamma.offset(-eps, &diff)?];
    let s = solve_all(model, &params, times, cfg)?;
    Ok((0..times.len())
        .map(|k| to_vec(&(((&s[0][k] + &s[1][k]) - (&s[2][k] + &s[3][k])) / (4.0 * eps * eps))))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalOrder {
    pub start: f64,
    pub end: f64,
    pub errors: Vec<f64>,
    pub orders: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderReport {
    pub steps: Vec<f64>,
    /// Sup error of each step against the finest solve.
    pub errors: Vec<f64>,
    /// `log2` of successive error ratios.
    pub orders: Vec<f64>,
    /// Every error is at rounding level.
    pub exact: bool,
    /// Per-interval breakdown between tracked breakpoints of the reference.
    pub intervals: Vec<IntervalOrder>,
    /// Interval with the lowest last observed order, if any order was measurable.
    pub worst_interval: Option<(f64, f64)>,
}

/// Solves at `cfg.step / 2^k`, `k = 0..=halvings + 1`, and compares the first
/// `halvings + 1` against the finest.
pub fn order_probe(model: &ModelSpec, gamma: &Parameter, cfg: &SolveConfig, halvings: usize) -> Result<OrderReport> {
    if halvings == 0 {
        return Err(SddeError::Invalid("order probe needs at least one halving".into()));
    }
    let steps: Vec<f64> = (0..=halvings + 1).map(|k| cfg.step / 2f64.powi(k as i32)).collect();
    let sols: Vec<Trajectory> = steps.par_iter().map(|&h| solve(model, gamma, &cfg.with_step(h))).collect::<Result<_>>()?;
    let reference = sols.last().expect("at least two solves");
    let coarse = &sols[0];
    let mut times: Vec<f64> = Vec::new();
    for w in coarse.knots().windows(2) {
        if w[0] >= 0.0 {
            times.push(w[0]);
            times.push(0.5 * (w[0] + w[1]));
        }
    }
    times.push(coarse.end());
    let alpha = coarse.end();
    let mut cuts: Vec<f64> = reference.breakpoints().iter().map(|b| b.t).filter(|&t| t > 0.0 && t < alpha).collect();
    cuts.insert(0, 0.0);
    cuts.push(alpha);
    cuts.dedup();
    let scale = 1.0 + reference.sup_norm();
    let measured = &sols[..=halvings];
    let err_at = |s: &Trajectory, t: f64| -> Result<f64> { Ok(inf_norm(&(s.eval(t)? - reference.eval(t)?))) };
    let errors: Vec<f64> = measured
        .iter()
        .map(|s| times.iter().map(|&t| err_at(s, t)).try_fold(0.0_f64, |m, e| Ok::<_, SddeError>(m.max(e?))))
        .collect::<Result<_>>()?;
    let floor = 1e-13 * scale;
    let order_of = |e: &[f64]| -> Vec<f64> {
        e.windows(2).map(|w| if w[0] <= floor || w[1] <= floor { f64::NAN } else { (w[0] / w[1]).log2() }).collect()
    };
    let exact = errors.iter().all(|&e| e <= floor);
    let mut intervals = Vec::new();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let inside: Vec<f64> = times.iter().copied().filter(|&t| t > a && t < b).collect();
        if inside.is_empty() {
            continue;
        }
        let e: Vec<f64> = measured
            .iter()
            .map(|s| inside.iter().map(|&t| err_at(s, t)).try_fold(0.0_f64, |m, e| Ok::<_, SddeError>(m.max(e?))))
            .collect::<Result<_>>()?;
        intervals.push(IntervalOrder { start: a, end: b, orders: order_of(&e), errors: e });
    }
    let worst_interval = intervals
        .iter()
        .filter_map(|iv| iv.orders.last().copied().filter(|o| o.is_finite()).map(|o| (o, iv.start, iv.end)))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, a, b)| (a, b));
    Ok(OrderReport { steps: steps[..=halvings].to_vec(), orders: order_of(&errors), errors, exact, intervals, worst_interval })
}
