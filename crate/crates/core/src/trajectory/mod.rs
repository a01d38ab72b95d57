//! Dense piecewise cubic Hermite trajectories on `[-r, alpha]`.
//!
//! A [`Trajectory`] stores, per piece, the endpoint values and slopes of a cubic
//! Hermite interpolant. Value continuity across knots is exact because
//! neighbouring pieces share their endpoint values bit-for-bit; slopes are
//! stored per piece so a derivative jump (for instance at `t = 0` when the
//! initial function is incompatible with the equation) is representable.
//! Every derivative query at a knot takes an explicit [`Side`].

mod io;
mod param;

use std::cell::Cell;

use nalgebra::DVector;

use crate::error::{Result, SddeError};
use crate::numerics::inf_norm;

pub use param::{Direction, Parameter};

/// Which one-sided limit to take at a knot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn flip(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// A tracked point of reduced smoothness together with its propagation generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Breakpoint {
    pub t: f64,
    pub generation: u32,
}

/// One cubic Hermite piece on `[t0, t1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitePiece {
    pub t0: f64,
    pub t1: f64,
    pub x0: DVector<f64>,
    pub x1: DVector<f64>,
    pub d0: DVector<f64>,
    pub d1: DVector<f64>,
}

impl HermitePiece {
    pub fn new(
        t0: f64,
        t1: f64,
        x0: DVector<f64>,
        x1: DVector<f64>,
        d0: DVector<f64>,
        d1: DVector<f64>,
    ) -> Self {
        debug_assert!(t1 > t0, "piece must have positive width");
        Self { t0, t1, x0, x1, d0, d1 }
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.t1 - self.t0
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn value(&self, t: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.value_into(t, &mut out);
        out
    }

    /// [`HermitePiece::value`] without allocating.
    pub fn value_into(&self, t: f64, out: &mut DVector<f64>) {
        if t == self.t1 {
            out.copy_from(&self.x1);
            return;
        }
        let h = self.width();
        let s = (t - self.t0) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let (a, b, c) = (3.0 * s2 - 2.0 * s3, h * (s3 - 2.0 * s2 + s), h * (s3 - s2));
        for i in 0..out.len() {
            let mut v = a * (self.x1[i] - self.x0[i]) + self.x0[i];
            v += b * self.d0[i];
            v += c * self.d1[i];
            out[i] = v;
        }
    }

    pub fn derivative(&self, t: f64) -> DVector<f64> {
        let h = self.width();
        let s = (t - self.t0) / h;
        let s2 = s * s;
        let mut out = (&self.x0 - &self.x1) * ((6.0 * s2 - 6.0 * s) / h);
        out.axpy(3.0 * s2 - 4.0 * s + 1.0, &self.d0, 1.0);
        out.axpy(3.0 * s2 - 2.0 * s, &self.d1, 1.0);
        out
    }

    pub fn second_derivative(&self, t: f64) -> DVector<f64> {
        let h = self.width();
        let s = (t - self.t0) / h;
        let mut out = (&self.x0 - &self.x1) * ((12.0 * s - 6.0) / (h * h));
        out.axpy((6.0 * s - 4.0) / h, &self.d0, 1.0);
        out.axpy((6.0 * s - 2.0) / h, &self.d1, 1.0);
        out
    }

    /// Monomial coefficients `[a, b, c, d]` of component `i` in the local
    /// variable `t - t0`.
    pub fn monomial(&self, i: usize) -> [f64; 4] {
        let h = self.width();
        let (x0, x1, d0, d1) = (self.x0[i], self.x1[i], self.d0[i], self.d1[i]);
        let c = (3.0 * (x1 - x0) / h - 2.0 * d0 - d1) / h;
        let d = (2.0 * (x0 - x1) / h + d0 + d1) / (h * h);
        [x0, d0, c, d]
    }

    /// Exact max of `|p^(order)|` over `[a, b] ⊂ [t0, t1]`, all components.
    fn max_abs_on(&self, a: f64, b: f64, order: usize) -> f64 {
        let (la, lb) = (a - self.t0, b - self.t0);
        let mut best = 0.0_f64;
        for i in 0..self.dim() {
            let [c0, c1, c2, c3] = self.monomial(i);
            // coefficients of the requested derivative, ascending powers
            let poly: Vec<f64> = match order {
                0 => vec![c0, c1, c2, c3],
                1 => vec![c1, 2.0 * c2, 3.0 * c3],
                2 => vec![2.0 * c2, 6.0 * c3],
                _ => vec![6.0 * c3],
            };
            let eval = |x: f64| poly.iter().rev().fold(0.0, |acc, c| acc * x + c);
            let mut cand = vec![la, lb];
            // critical points: roots of the derivative of `poly`
            match poly.len() {
                4 => {
                    let (qa, qb, qc) = (3.0 * poly[3], 2.0 * poly[2], poly[1]);
                    cand.extend(quadratic_roots(qa, qb, qc));
                }
                3 if poly[2] != 0.0 => cand.push(-poly[1] / (2.0 * poly[2])),
                _ => {}
            }
            for x in cand {
                if x >= la && x <= lb {
                    best = best.max(eval(x).abs());
                }
            }
            if order == 0 {
                // endpoint values are stored exactly; use them where they apply
                if a == self.t0 {
                    best = best.max(self.x0[i].abs());
                }
                if b == self.t1 {
                    best = best.max(self.x1[i].abs());
                }
            }
        }
        best
    }
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a == 0.0 {
        if b == 0.0 {
            return vec![];
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let sq = disc.sqrt();
    let q = -0.5 * (b + sq.copysign(b));
    let mut out = Vec::with_capacity(2);
    if q != 0.0 {
        out.push(c / q);
    }
    out.push(q / a);
    out
}

/// Piecewise cubic Hermite function from `start()` to `end()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    pieces: Vec<HermitePiece>,
    knots: Vec<f64>,
    breakpoints: Vec<Breakpoint>,
}

impl Trajectory {
    /// Builds a trajectory from contiguous pieces. Endpoint values of
    /// neighbouring pieces must agree to 1e-12 (relative); the left piece's
    /// value is then copied so that continuity is exact.
    pub fn from_pieces(mut pieces: Vec<HermitePiece>) -> Result<Self> {
        let first = pieces
            .first()
            .ok_or_else(|| SddeError::Invalid("trajectory needs at least one piece".into()))?;
        let dim = first.dim();
        if dim == 0 {
            return Err(SddeError::Invalid("trajectory dimension must be positive".into()));
        }
        for k in 0..pieces.len() {
            let p = &pieces[k];
            if p.x0.len() != dim || p.x1.len() != dim || p.d0.len() != dim || p.d1.len() != dim {
                return Err(SddeError::Invalid(format!("piece {k} has inconsistent dimension")));
            }
            if !(p.t1 > p.t0) || !p.t0.is_finite() || !p.t1.is_finite() {
                return Err(SddeError::Invalid(format!("piece {k} has non-increasing times")));
            }
            if k > 0 {
                let prev = &pieces[k - 1];
                if prev.t1 != p.t0 {
                    return Err(SddeError::Invalid(format!("pieces {} and {k} are not contiguous", k - 1)));
                }
                let gap = inf_norm(&(&prev.x1 - &p.x0));
                if gap > 1e-12 * (1.0 + inf_norm(&prev.x1)) {
                    return Err(SddeError::Invalid(format!(
                        "value jump {gap:e} between pieces {} and {k}",
                        k - 1
                    )));
                }
                let shared = prev.x1.clone();
                pieces[k].x0 = shared;
            }
        }
        let mut knots: Vec<f64> = pieces.iter().map(|p| p.t0).collect();
        knots.push(pieces.last().unwrap().t1);
        Ok(Self { dim, pieces, knots, breakpoints: Vec::new() })
    }

    pub fn constant(value: DVector<f64>, t0: f64, t1: f64) -> Result<Self> {
        let zero = DVector::zeros(value.len());
        Self::from_pieces(vec![HermitePiece::new(t0, t1, value.clone(), value, zero.clone(), zero)])
    }

    pub fn zero(dim: usize, t0: f64, t1: f64) -> Result<Self> {
        Self::constant(DVector::zeros(dim), t0, t1)
    }

    /// Single-piece trajectory of a polynomial of degree at most 3 given by
    /// ascending coefficients in `t` per component.
    pub fn polynomial(coeffs: &[Vec<f64>], t0: f64, t1: f64) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(SddeError::Invalid("polynomial needs at least one component".into()));
        }
        if coeffs.iter().any(|c| c.len() > 4) {
            return Err(SddeError::Invalid("only polynomials of degree <= 3 are representable".into()));
        }
        let eval = |c: &Vec<f64>, t: f64| c.iter().rev().fold(0.0, |acc, a| acc * t + a);
        let d =|c: &Vec<f64>, t: f64| {
            let mut acc = 0.0;
            for k in (1..c.len()).rev() {
                acc = acc * t + k as f64 * c[k];
            }
            acc
        };
        let n = coeffs.len();
        let x0 = DVector::from_iterator(n, coeffs.iter().map(|c| eval(c, t0)));
        let x1 = DVector::from_iterator(n, coeffs.iter().map(|c| eval(c, t1)));
        let d0 = DVector::from_iterator(n, coeffs.iter().map(|c| d(c, t0)));
        let d1 = DVector::from_iterator(n, coeffs.iter().map(|c| d(c, t1)));
        Self::from_pieces(vec![HermitePiece::new(t0, t1, x0, x1, d0, d1)])
    }

    /// C¹ piecewise cubic Hermite interpolant through node values and slopes.
    pub fn from_nodes(knots: &[f64], values: &[DVector<f64>], slopes: &[DVector<f64>]) -> Result<Self> {
        if knots.len() < 2 || values.len() != knots.len() || slopes.len() != knots.len() {
            return Err(SddeError::Invalid(
                "need at least two knots with one value and one slope per knot".into(),
            ));
        }
        let pieces = knots
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                HermitePiece::new(
                    w[0],
                    w[1],
                    values[k].clone(),
                    values[k + 1].clone(),
                    slopes[k].clone(),
                    slopes[k + 1].clone(),
                )
            })
            .collect();
        Self::from_pieces(pieces)
    }

    /// Hermite interpolant of a function with known derivative on the given knots.
    pub fn interpolate<F, G>(f: F, df: G, knots: &[f64]) -> Result<Self>
    where
        F: Fn(f64) -> DVector<f64>,
        G: Fn(f64) -> DVector<f64>,
    {
        let values: Vec<_> = knots.iter().map(|&t| f(t)).collect();
        let slopes: Vec<_> = knots.iter().map(|&t| df(t)).collect();
        Self::from_nodes(knots, &values, &slopes)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn start(&self) -> f64 {
        self.knots[0]
    }

    pub fn end(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    pub fn pieces(&self) -> &[HermitePiece] {
        &self.pieces
    }

    /// All piece boundaries, strictly increasing, from `start()` to `end()`.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Tracked points of reduced smoothness, sorted by time.
    pub fn breakpoints(&self) -> &[Breakpoint] {
        &self.breakpoints
    }

    pub(crate) fn push_piece(&mut self, piece: HermitePiece) {
        debug_assert_eq!(piece.t0, self.end());
        debug_assert_eq!(piece.dim(), self.dim);
        self.knots.push(piece.t1);
        self.pieces.push(piece);
    }

    pub(crate) fn pop_piece(&mut self) -> Option<HermitePiece> {
        if self.pieces.len() <= 1 {
            return None;
        }
        self.knots.pop();
        self.pieces.pop()
    }

    /// Registers a breakpoint; one already present within `1e-12` keeps the
    /// lower generation.
    pub fn add_breakpoint(&mut self, t: f64, generation: u32) {
        let pos = self.breakpoints.partition_point(|b| b.t < t - 1e-12);
        if let Some(b) = self.breakpoints.get_mut(pos) {
            if (b.t - t).abs() <= 1e-12 {
                b.generation = b.generation.min(generation);
                return;
            }
        }
        self.breakpoints.insert(pos, Breakpoint { t, generation });
    }

    fn check_domain(&self, t: f64) -> Result<()> {
        if t.is_nan() || t < self.start() || t > self.end() {
            return Err(SddeError::Domain {
                t,
                what: format!("outside trajectory domain [{}, {}]", self.start(), self.end()),
            });
        }
        Ok(())
    }

    fn locate(&self, t: f64, side: Side) -> usize {
        let last = self.pieces.len() - 1;
        let raw = self.knots.partition_point(|&k| k <= t).saturating_sub(1);
        if raw > last {
            return last;
        }
        if side == Side::Left && raw > 0 && self.knots[raw] == t {
            raw - 1
        } else {
            raw
        }
    }

    /// Index of the piece used for `t` with the given side convention.
    pub fn piece_index(&self, t: f64, side: Side) -> Result<usize> {
        self.check_domain(t)?;
        Ok(self.locate(t, side))
    }

    pub fn eval(&self, t: f64) -> Result<DVector<f64>> {
        self.check_domain(t)?;
        Ok(self.pieces[self.locate(t, Side::Right)].value(t))
    }

    pub fn eval_d1(&self, t: f64, side: Side) -> Result<DVector<f64>> {
        self.check_domain(t)?;
        Ok(self.pieces[self.locate(t, side)].derivative(t))
    }

    pub fn eval_d2(&self, t: f64, side: Side) -> Result<DVector<f64>> {
        self.check_domain(t)?;
        Ok(self.pieces[self.locate(t, side)].second_derivative(t))
    }

    /// The knot closest to `t`, if one lies within `tol`.
    pub fn knot_near(&self, t: f64, tol: f64) -> Option<f64> {
        let i = self.knots.partition_point(|&k| k < t);
        let mut best: Option<f64> = None;
        for j in [i.wrapping_sub(1), i] {
            if let Some(&k) = self.knots.get(j) {
                if (k - t).abs() <= tol && best.is_none_or(|b| (k - t).abs() < (b - t).abs()) {
                    best = Some(k);
                }
            }
        }
        best
    }

    /// Value and one-sided derivative at `t`; when `t` lies within `snap` of a
    /// knot the knot itself is used so the side picks the intended piece.
    pub fn eval_d1_snapped(&self, t: f64, side: Side, snap: f64) -> Result<DVector<f64>> {
        let at = self.knot_near(t, snap).unwrap_or(t);
        self.eval_d1(at, side)
    }

    pub fn eval_d2_snapped(&self, t: f64, side: Side, snap: f64) -> Result<DVector<f64>> {
        let at = self.knot_near(t, snap).unwrap_or(t);
        self.eval_d2(at, side)
    }

    /// History window `ζ ↦ x(t + ζ)`, `ζ ∈ [-r, 0]` with `r = -start()`.
    pub fn segment(&self, t: f64) -> Result<Segment<'_>> {
        let r = -self.start();
        if !(r > 0.0) {
            return Err(SddeError::Invalid("segments need a trajectory starting before 0".into()));
        }
        if t.is_nan() || t - r < self.start() - 1e-12 * (1.0 + r) || t > self.end() {
            return Err(SddeError::Domain { t, what: "segment window outside trajectory".into() });
        }
        Ok(Segment { traj: self, at: t, head: None, probe: None })
    }

    pub fn sample(&self, times: &[f64]) -> Result<Vec<DVector<f64>>> {
        times.iter().map(|&t| self.eval(t)).collect()
    }

    fn max_abs_between(&self, a: f64, b: f64, order: usize) -> f64 {
        let mut best = 0.0_f64;
        for p in &self.pieces {
            if p.t1 < a || p.t0 > b {
                continue;
            }
            let lo = p.t0.max(a);
            let hi = p.t1.min(b);
            if hi < lo {
                continue;
            }
            best = best.max(p.max_abs_on(lo, hi, order));
        }
        best
    }

    /// `sup |x|` over the whole domain, from polynomial critical points.
    pub fn sup_norm(&self) -> f64 {
        self.max_abs_between(self.start(), self.end(), 0)
    }

    pub fn sup_norm_on(&self, a: f64, b: f64) -> f64 {
        self.max_abs_between(a, b, 0)
    }

    /// `max{|x|_C, ess sup |x'|}`.
    pub fn norm_w1inf(&self) -> f64 {
        self.norm_w1inf_on(self.start(), self.end())
    }

    pub fn norm_w1inf_on(&self, a: f64, b: f64) -> f64 {
        self.max_abs_between(a, b, 0).max(self.max_abs_between(a, b, 1))
    }

    /// `max{|x|_C, |x'|_C, ess sup |x''|}`.
    pub fn norm_w2inf(&self) -> f64 {
        self.norm_w2inf_on(self.start(), self.end())
    }

    pub fn norm_w2inf_on(&self, a: f64, b: f64) -> f64 {
        self.norm_w1inf_on(a, b).max(self.max_abs_between(a, b, 2))
    }

    /// True when the slope is continuous across every interior knot.
    pub fn is_c1(&self, tol: f64) -> bool {
        self.pieces.windows(2).all(|w| {
            inf_norm(&(&w[0].d1 - &w[1].d0)) <= tol * (1.0 + inf_norm(&w[0].d1))
        })
    }

    /// `a·x + b·y` on the union of both knot sets. Both must share dimension
    /// and domain. The result is exact up to rounding because cubic Hermite
    /// interpolation reproduces cubics.
    pub fn linear_combination(a: f64, x: &Trajectory, b: f64, y: &Trajectory) -> Result<Trajectory> {
        if x.dim != y.dim || x.start() != y.start() || x.end() != y.end() {
            return Err(SddeError::Invalid(
                "linear combination needs trajectories on the same domain and dimension".into(),
            ));
        }
        let mut knots: Vec<f64> = Vec::with_capacity(x.knots.len() + y.knots.len());
        let (mut i, mut j) = (0, 0);
        while i < x.knots.len() || j < y.knots.len() {
            let next = match (x.knots.get(i), y.knots.get(j)) {
                (Some(&p), Some(&q)) if p == q => {
                    i += 1;
                    j += 1;
                    p
                }
                (Some(&p), Some(&q)) if p < q => {
                    i += 1;
                    p
                }
                (Some(_), Some(&q)) => {
                    j += 1;
                    q
                }
                (Some(&p), None) => {
                    i += 1;
                    p
                }
                (None, Some(&q)) => {
                    j += 1;
                    q
                }
                (None, None) => unreachable!(),
            };
            knots.push(next);
        }
        let values: Vec<DVector<f64>> = knots
            .iter()
            .map(|&t| {
                let mut v = x.eval(t).expect("knot within domain") * a;
                v.axpy(b, &y.eval(t).expect("knot within domain"), 1.0);
                v
            })
            .collect();
        let slope = |t: f64, side: Side| {
            let mut v = x.eval_d1(t, side).expect("knot within domain") * a;
            v.axpy(b, &y.eval_d1(t, side).expect("knot within domain"), 1.0);
            v
        };
        let pieces = knots
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                HermitePiece::new(
                    w[0],
                    w[1],
                    values[k].clone(),
                    values[k + 1].clone(),
                    slope(w[0], Side::Right),
                    slope(w[1], Side::Left),
                )
            })
            .collect();
        let mut out = Trajectory::from_pieces(pieces)?;
        for bp in x.breakpoints.iter().chain(&y.breakpoints) {
            out.add_breakpoint(bp.t, bp.generation);
        }
        Ok(out)
    }
}

/// View of a trajectory's history window `x_t(ζ) = x(t + ζ)`, `ζ ∈ [-r, 0]`.
///
/// Inside the integrator the head value `x_t(0)` can be overridden by a
/// Runge-Kutta stage value, and accesses past the last accepted step are
/// recorded in a probe; neither is visible through the public constructor.
#[derive(Clone, Copy)]
pub struct Segment<'a> {
    traj: &'a Trajectory,
    at: f64,
    head: Option<&'a DVector<f64>>,
    probe: Option<&'a Cell<f64>>,
}

impl<'a> Segment<'a> {
    pub(crate) fn with_head(
        traj: &'a Trajectory,
        at: f64,
        head: &'a DVector<f64>,
        probe: &'a Cell<f64>,
    ) -> Self {
        Segment { traj, at, head: Some(head), probe: Some(probe) }
    }

    pub fn anchor(&self) -> f64 {
        self.at
    }

    pub fn delay_bound(&self) -> f64 {
        -self.traj.start()
    }

    pub fn trajectory(&self) -> &'a Trajectory {
        self.traj
    }

    pub fn dim(&self) -> usize {
        self.traj.dim()
    }

    fn check(&self, zeta: f64) -> Result<()> {
        let r = self.delay_bound();
        if zeta.is_nan() || zeta > 0.0 || zeta < -r {
            return Err(SddeError::Domain {
                t: self.at,
                what: format!("segment argument {zeta} outside [-{r}, 0]"),
            });
        }
        Ok(())
    }

    #[inline]
    fn record(&self, s: f64) {
        if let Some(p) = self.probe {
            if s > p.get() {
                p.set(s);
            }
        }
    }

    pub fn eval(&self, zeta: f64) -> Result<DVector<f64>> {
        self.check(zeta)?;
        if zeta == 0.0 {
            if let Some(h) = self.head {
                return Ok(h.clone());
            }
        }
        let s = self.at + zeta;
        self.record(s);
        self.traj.eval(s)
    }

    pub fn eval_d1(&self, zeta: f64, side: Side) -> Result<DVector<f64>> {
        self.check(zeta)?;
        let s = self.at + zeta;
        self.record(s);
        self.traj.eval_d1(s, side)
    }

    /// One-sided slope at `ζ`, snapping to a knot of the underlying trajectory
    /// within `snap`.
    pub fn eval_d1_snapped(&self, zeta: f64, side: Side, snap: f64) -> Result<DVector<f64>> {
        self.check(zeta)?;
        let s = self.at + zeta;
        self.record(s);
        self.traj.eval_d1_snapped(s, side, snap)
    }

    pub fn eval_d2(&self, zeta: f64, side: Side) -> Result<DVector<f64>> {
        self.check(zeta)?;
        let s = self.at + zeta;
        self.record(s);
        self.traj.eval_d2(s, side)
    }

    /// Sub-intervals of `[-r, 0]` on which the window is a single polynomial.
    pub fn windows(&self) -> Vec<(f64, f64)> {
        let r = self.delay_bound();
        let (lo, hi) = (self.at - r, self.at);
        let first = self.traj.knots.partition_point(|&k| k <= lo);
        let mut cuts = vec![-r];
        for &k in &self.traj.knots[first..] {
            if k >= hi {
                break;
            }
            cuts.push(k - self.at);
        }
        cuts.push(0.0);
        cuts.windows(2).filter(|w| w[1] > w[0]).map(|w| (w[0], w[1])).collect()
    }

    /// [`Segment::windows`] with the index of the piece covering each window.
    /// Marks the whole window as accessed.
    pub(crate) fn window_pieces(&self) -> Vec<(f64, f64, &'a HermitePiece)> {
        self.record(self.at);
        let t0 = self.at;
        self.windows()
            .into_iter()
            .map(|(a, b)| (a, b, &self.traj.pieces[self.traj.locate(t0 + 0.5 * (a + b), Side::Right)]))
            .collect()
    }

    /// Exact `sup_{ζ ∈ [-r, 0]} |x(t + ζ)|`.
    pub fn sup_norm(&self) -> f64 {
        self.traj.sup_norm_on(self.at - self.delay_bound(), self.at)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn method_of_steps_example() -> Trajectory {
        // x = 1 - t on [0, 1], (t - 2)^2 / 2 - 1/2 on [1, 2]
        Trajectory::from_pieces(vec![
            HermitePiece::new(0.0, 1.0, dvector![1.0], dvector![0.0], dvector![-1.0], dvector![-1.0]),
            HermitePiece::new(1.0, 2.0, dvector![0.0], dvector![-0.5], dvector![-1.0], dvector![0.0]),
        ])
        .unwrap()
    }

    #[test]
    fn constant_trajectory_has_zero_derivatives() {
        let c = Trajectory::constant(dvector![2.5, -1.0], -1.0, 3.0).unwrap();
        for t in [-1.0, -0.3, 0.0, 2.9, 3.0] {
            assert_eq!(c.eval(t).unwrap(), dvector![2.5, -1.0]);
            assert_eq!(c.eval_d1(t, Side::Left).unwrap(), dvector![0.0, 0.0]);
            assert_eq!(c.eval_d2(t, Side::Right).unwrap(), dvector![0.0, 0.0]);
        }
        assert_eq!(c.sup_norm(), 2.5);
        assert_eq!(c.norm_w1inf(), 2.5);
        assert_eq!(c.norm_w2inf(), 2.5);
    }

    #[test]
    fn one_sided_derivatives_at_breakpoint() {
        let x = method_of_steps_example();
        assert_eq!(x.eval(1.0).unwrap()[0], 0.0);
        assert!((x.eval_d1(1.0, Side::Left).unwrap()[0] + 1.0).abs() < 1e-15);
        assert!((x.eval_d1(1.0, Side::Right).unwrap()[0] + 1.0).abs() < 1e-15);
        assert!(x.eval_d2(1.0, Side::Left).unwrap()[0].abs() < 1e-14);
        assert!((x.eval_d2(1.0, Side::Right).unwrap()[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eval_outside_domain_is_an_error() {
        let x = method_of_steps_example();
        assert!(matches!(x.eval(2.0 + 1e-9), Err(SddeError::Domain { .. })));
        assert!(matches!(x.eval_d1(-1e-9, Side::Right), Err(SddeError::Domain { .. })));
    }

    #[test]
    fn identity_norms() {
        let x = Trajectory::polynomial(&[vec![0.0, 1.0]], 0.0, 1.0).unwrap();
        assert_eq!(x.sup_norm(), 1.0);
        assert_eq!(x.norm_w1inf(), 1.0);
    }

    #[test]
    fn values_at_knots_are_exact() {
        let x = method_of_steps_example();
        let left = x.pieces()[0].value(1.0);
        let right = x.pieces()[1].value(1.0);
        assert_eq!(left, right);
        assert_eq!(x.pieces()[1].value(2.0), dvector![-0.5]);
    }

    #[test]
    fn from_pieces_rejects_value_jumps() {
        let err = Trajectory::from_pieces(vec![
            HermitePiece::new(0.0, 1.0, dvector![1.0], dvector![0.0], dvector![0.0], dvector![0.0]),
            HermitePiece::new(1.0, 2.0, dvector![0.5], dvector![0.0], dvector![0.0], dvector![0.0]),
        ]);
        assert!(err.is_err());
    }

    #[test]
    fn polynomial_of_degree_four_is_rejected() {
        assert!(Trajectory::polynomial(&[vec![0.0, 0.0, 0.0, 0.0, 1.0]], 0.0, 1.0).is_err());
    }

    #[test]
    fn segment_matches_trajectory() {
        let x = Trajectory::interpolate(
            |t| dvector![(2.0 * t).sin()],
            |t| dvector![2.0 * (2.0 * t).cos()],
            &[-1.0, -0.4, 0.0, 0.3, 1.1, 2.0],
        )
        .unwrap();
        let seg = x.segment(1.5).unwrap();
        for zeta in [-1.0, -0.77, -0.5, -0.2, 0.0] {
            assert_eq!(seg.eval(zeta).unwrap(), x.eval(1.5 + zeta).unwrap());
        }
        assert!(seg.eval(0.1).is_err());
        let w = seg.windows();
        assert_eq!(w.first().unwrap().0, -1.0);
        assert_eq!(w.last().unwrap().1, 0.0);
        assert_eq!(w.len(), 2);
        assert!((w[0].1 + 0.4).abs() < 1e-15);
    }

    #[test]
    fn linear_combination_reproduces_both_inputs() {
        let x = Trajectory::interpolate(|t| dvector![t * t], |t| dvector![2.0 * t], &[-1.0, -0.5, 0.0]).unwrap();
        let y = Trajectory::polynomial(&[vec![1.0, 0.0, 0.0, 1.0]], -1.0, 0.0).unwrap();
        let c = Trajectory::linear_combination(2.0, &x, -3.0, &y).unwrap();
        assert_eq!(c.knots(), &[-1.0, -0.5, 0.0]);
        for t in [-1.0, -0.8, -0.5, -0.1, 0.0] {
            let expect = 2.0 * t * t - 3.0 * (1.0 + t * t * t);
            assert!((c.eval(t).unwrap()[0] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn knot_snapping_selects_requested_side() {
        let x = Trajectory::from_pieces(vec![
            HermitePiece::new(-1.0, 0.0, dvector![0.0], dvector![0.0], dvector![0.0], dvector![0.0]),
            HermitePiece::new(0.0, 1.0, dvector![0.0], dvector![1.0], dvector![1.0], dvector![1.0]),
        ])
        .unwrap();
        assert_eq!(x.eval_d1_snapped(1e-14, Side::Left, 1e-10).unwrap()[0], 0.0);
        assert_eq!(x.eval_d1_snapped(-1e-14, Side::Right, 1e-10).unwrap()[0], 1.0);
        assert_eq!(x.eval_d1_snapped(1e-3, Side::Left, 1e-10).unwrap()[0], 1.0);
    }
}
