//! Fixed-step RK4 method of steps with Hermite dense output, implicit
//! handling of lags that fall inside the current step, and propagation of
//! breakpoints through the lag arrivals.

use std::cell::Cell;

use nalgebra::DVector;

use crate::error::{Result, SddeError};
use crate::numerics::{brent, inf_norm};
use crate::trajectory::{Breakpoint, HermitePiece, Segment, Side, Trajectory};

use super::SolveConfig;

pub(crate) const MAX_FIXED_POINT: usize = 50;
const MERGE_FRACTION: f64 = 0.01;

/// Relative snapping tolerance for times.
pub(crate) fn snap(t: f64) -> f64 {
    1e-10 * t.abs().max(1.0)
}

/// A retarded right-hand side `(t, y_t) ↦ ẏ(t)`.
pub(crate) trait DelayField {
    fn dim(&self) -> usize;

    /// `ẏ(t)`; `side` says whether the stage sits at the left or the right
    /// end of its step, which matters where a one-sided derivative is used.
    fn rate(&self, t: f64, seg: &Segment<'_>, side: Side) -> Result<DVector<f64>>;

    /// Times `t − lag(t)` at which the history is read; a breakpoint crossed
    /// by one of them reappears, one derivative smoother, at the crossing time.
    fn arrivals(&self, t: f64, seg: &Segment<'_>) -> Result<Vec<f64>>;
}

pub(crate) struct Integration {
    pub traj: Trajectory,
    pub crossings: usize,
}

struct Integrator<'f, F: DelayField> {
    field: &'f F,
    cfg: &'f SolveConfig,
    traj: Trajectory,
    crossings: usize,
}

fn as_blowup(e: SddeError, last_good: f64) -> SddeError {
    match e {
        SddeError::Numeric { .. } => SddeError::Blowup { last_good },
        other => other,
    }
}

impl<F: DelayField> Integrator<'_, F> {
    fn stage(&self, t: f64, head: &DVector<f64>, probe: &Cell<f64>, side: Side) -> Result<DVector<f64>> {
        let seg = Segment::with_head(&self.traj, t, head, probe);
        self.field.rate(t, &seg, side)
    }

    /// One RK4 step on `[t0, t1]`, iterated on its own dense output while
    /// the stages read the step's interior.
    fn step(&mut self, t0: f64, t1: f64) -> Result<HermitePiece> {
        let h = t1 - t0;
        let x0 = self.traj.pieces().last().expect("non-empty trajectory").x1.clone();
        let probe = Cell::new(f64::NEG_INFINITY);
        let k1 = self.stage(t0, &x0, &probe, Side::Right)?;
        let tm = t0 + 0.5 * h;
        let mut guess = HermitePiece::new(t0, t1, x0.clone(), &x0 + &k1 * h, k1.clone(), k1.clone());
        for iter in 0..MAX_FIXED_POINT {
            self.traj.push_piece(guess.clone());
            probe.set(f64::NEG_INFINITY);
            let result = (|| {
                let k2 = self.stage(tm, &(&x0 + &k1 * (0.5 * h)), &probe, Side::Right)?;
                let k3 = self.stage(tm, &(&x0 + &k2 * (0.5 * h)), &probe, Side::Right)?;
                let k4 = self.stage(t1, &(&x0 + &k3 * h), &probe, Side::Left)?;
                let x1 = &x0 + (&k1 + &k2 * 2.0 + &k3 * 2.0 + &k4) * (h / 6.0);
                let d1 = self.stage(t1, &x1, &probe, Side::Left)?;
                Ok((x1, d1))
            })();
            self.traj.pop_piece();
            let (x1, d1) = result?;
            if x1.iter().chain(d1.iter()).any(|v| !v.is_finite()) {
                return Err(SddeError::Blowup { last_good: t0 });
            }
            let next = HermitePiece::new(t0, t1, x0.clone(), x1, k1.clone(), d1);
            if probe.get() <= t0 {
                return Ok(next);
            }
            let change = inf_norm(&(&next.x1 - &guess.x1)).max(h * inf_norm(&(&next.d1 - &guess.d1)));
            let converged = iter > 0 && change <= self.cfg.tol * (1.0 + inf_norm(&next.x1));
            guess = next;
            if converged {
                return Ok(guess);
            }
        }
        Err(SddeError::Step { t0, t1, iterations: MAX_FIXED_POINT })
    }

    fn arrivals_at(&self, t: f64) -> Result<Vec<f64>> {
        let seg = self.traj.segment(t)?;
        self.field.arrivals(t, &seg)
    }

    /// Earliest crossing of a tracked breakpoint by an arrival inside the
    /// tentative step that has been pushed onto the trajectory.
    fn earliest_crossing(&self, t0: f64, t1: f64) -> Result<Option<(f64, u32)>> {
        let a0 = self.arrivals_at(t0)?;
        let a1 = self.arrivals_at(t1)?;
        let depth = self.cfg.discontinuity_depth;
        let mut best: Option<(f64, u32)> = None;
        for (k, (&p, &q)) in a0.iter().zip(&a1).enumerate() {
            let (lo, hi) = (p.min(q), p.max(q));
            let bps = self.traj.breakpoints();
            let first = bps.partition_point(|b| b.t < lo - snap(lo));
            for bp in bps[first..].iter().take_while(|b| b.t <= hi + snap(hi)) {
                if bp.generation >= depth {
                    continue;
                }
                let g0 = p - bp.t;
                let g1 = q - bp.t;
                if g0.abs() <= snap(bp.t) {
                    continue;
                }
                let root = if g1 == 0.0 {
                    t1
                } else if g0.signum() == g1.signum() {
                    continue;
                } else {
                    brent(
                        |s| Ok::<_, SddeError>(self.arrivals_at(s)?[k] - bp.t),
                        t0,
                        t1,
                        1e-15 * t1.abs().max(1.0),
                        200,
                    )?
                };
                if best.is_none_or(|(b, _)| root < b) {
                    best = Some((root, bp.generation + 1));
                }
            }
        }
        Ok(best)
    }

    fn run(&mut self, alpha: f64, stops: &[f64]) -> Result<()> {
        let h = self.cfg.step;
        let mut stops: Vec<f64> = stops.iter().copied().filter(|&s| s > 0.0 && s < alpha).collect();
        stops.push(alpha);
        stops.sort_by(f64::total_cmp);
        stops.dedup();
        let mut t = 0.0;
        let mut anchor = 0.0;
        let mut k = 0u64;
        let mut next_stop = 0;
        while t < alpha {
            while stops[next_stop] <= t + snap(t) {
                next_stop += 1;
            }
            let stop = stops[next_stop];
            let mut t1 = anchor + (k + 1) as f64 * h;
            let mut reset = false;
            if t1 >= stop - MERGE_FRACTION * h {
                t1 = stop;
                reset = true;
            }
            let mut piece = self.step(t, t1).map_err(|e| as_blowup(e, t))?;
            self.traj.push_piece(piece);
            let crossing = self.earliest_crossing(t, t1);
            let crossing = match crossing {
                Ok(c) => c,
                Err(e) => {
                    self.traj.pop_piece();
                    return Err(as_blowup(e, t));
                }
            };
            let mut new_bp = None;
            if let Some((root, generation)) = crossing {
                if root >= t1 - snap(t1) {
                    new_bp = Some((t1, generation));
                } else if root > t + snap(t) {
                    self.traj.pop_piece();
                    t1 = root;
                    reset = true;
                    piece = self.step(t, t1).map_err(|e| as_blowup(e, t))?;
                    self.traj.push_piece(piece);
                    new_bp = Some((t1, generation));
                }
            }
            if let Some((at, generation)) = new_bp {
                self.traj.add_breakpoint(at, generation);
                self.crossings += 1;
                reset = true;
            }
            t = t1;
            if reset {
                anchor = t;
                k = 0;
            } else {
                k += 1;
            }
        }
        Ok(())
    }
}

/// Integrates `field` from the initial function `initial` (on `[-r, 0]`) up
/// to `alpha`, forcing mesh points at `stops` and tracking the `seeds`.
pub(crate) fn integrate<F: DelayField>(
    field: &F,
    initial: &Trajectory,
    cfg: &SolveConfig,
    alpha: f64,
    stops: &[f64],
    seeds: &[Breakpoint],
) -> Result<Integration> {
    if field.dim() != initial.dim() {
        return Err(SddeError::Invalid("initial function dimension mismatch".into()));
    }
    let mut traj = initial.clone();
    for b in seeds {
        traj.add_breakpoint(b.t, b.generation);
    }
    let mut it = Integrator { field, cfg, traj, crossings: 0 };
    it.run(alpha, stops)?;
    Ok(Integration { traj: it.traj, crossings: it.crossings })
}
