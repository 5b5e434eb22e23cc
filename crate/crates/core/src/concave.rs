//! Markets with concave valuations and their Eisenberg-Gale equilibrium.
//!
//! The EG primal `max sum_i B_i ln u_i - delta_i` with
//! `u_i <= sum_j v_ij(x_ij) + delta_i` and unit supplies is solved with the
//! interior-point method. Pacing multipliers are the multipliers of the
//! utility rows and prices are the multipliers of the supply rows.
//! Piecewise-linear valuations enter through one epigraph variable per pair,
//! bounded by each linear piece.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ipm::{self, ConvexProgram, IpmOptions};
use crate::lp::{solve_lp, LinearProgram, LpStatus, Relation};
use crate::market::MarketInstance;

/// Segments per unit interval used to linearize smooth valuations.
pub const SEGMENTS: usize = 64;
/// Allocations at or below this are treated as zero by the KKT check.
pub const ACTIVE_TOL: f64 = 1e-7;

/// A concave, nondecreasing valuation with `v(0) = 0`.
///
/// Piecewise-linear valuations are given by breakpoints starting at `(0, 0)`
/// and continue with their last slope past the final breakpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConcaveValuation {
    Linear { c: f64 },
    /// `c((x + s)^a - s^a)`.
    ShiftedPower { c: f64, s: f64, a: f64 },
    #[serde(rename = "pwl")]
    PiecewiseLinear { points: Vec<[f64; 2]> },
}

impl ConcaveValuation {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Invalid(msg));
        match *self {
            Self::Linear { c } => {
                if !(c.is_finite() && c >= 0.0) {
                    return bad(format!("linear slope {c} must be finite and nonnegative"));
                }
            }
            Self::ShiftedPower { c, s, a } => {
                if !(c.is_finite() && c >= 0.0) {
                    return bad(format!("power scale {c} must be finite and nonnegative"));
                }
                if !(s.is_finite() && s >= 0.0) {
                    return bad(format!("power shift {s} must be finite and nonnegative"));
                }
                if !(a > 0.0 && a <= 1.0) {
                    return bad(format!("power exponent {a} must lie in (0, 1]"));
                }
            }
            Self::PiecewiseLinear { ref points } => {
                if points.len() < 2 {
                    return bad("a piecewise-linear valuation needs at least two points".into());
                }
                if points[0] != [0.0, 0.0] {
                    return bad("a piecewise-linear valuation must start at (0, 0)".into());
                }
                if points.iter().flatten().any(|v| !v.is_finite()) {
                    return bad("breakpoints must be finite".into());
                }
                let mut prev = f64::INFINITY;
                for w in points.windows(2) {
                    if w[1][0] <= w[0][0] {
                        return bad("breakpoints must have increasing x".into());
                    }
                    let slope = (w[1][1] - w[0][1]) / (w[1][0] - w[0][0]);
                    if slope < 0.0 {
                        return bad("piecewise-linear valuation decreases".into());
                    }
                    if slope > prev * (1.0 + 1e-12) + 1e-12 {
                        return bad("piecewise-linear slopes must be nonincreasing".into());
                    }
                    prev = slope;
                }
            }
        }
        Ok(())
    }

    /// Whether `v` vanishes everywhere.
    pub fn is_zero(&self) -> bool {
        match self {
            Self::Linear { c } | Self::ShiftedPower { c, .. } => *c == 0.0,
            Self::PiecewiseLinear { points } => points.iter().all(|p| p[1] == 0.0),
        }
    }

    fn pieces(points: &[[f64; 2]]) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        // (start, end, slope); the last piece extends to infinity.
        let last = points.len() - 2;
        points.windows(2).enumerate().map(move |(k, w)| {
            let slope = (w[1][1] - w[0][1]) / (w[1][0] - w[0][0]);
            (w[0][0], if k == last { f64::INFINITY } else { w[1][0] }, slope)
        })
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Self::Linear { c } => c * x,
            Self::ShiftedPower { c, s, a } => c * ((x + s).powf(a) - s.powf(a)),
            Self::PiecewiseLinear { ref points } => {
                for (k, (lo, hi, slope)) in Self::pieces(points).enumerate() {
                    if x <= hi {
                        return points[k][1] + slope * (x - lo);
                    }
                }
                unreachable!("last piece is unbounded")
            }
        }
    }

    /// Right derivative `v'_+(x)`; infinite at 0 for a pure power.
    pub fn derivative_right(&self, x: f64) -> f64 {
        match *self {
            Self::PiecewiseLinear { ref points } => {
                Self::pieces(points).find(|&(_, hi, _)| x < hi).map(|(_, _, s)| s).unwrap_or(0.0)
            }
            _ => self.smooth_derivative(x),
        }
    }

    /// `[v'_+(x), v'_-(x)]`, widened to a breakpoint's full interval when `x`
    /// lies within `tol` of it.
    pub fn subgradient(&self, x: f64, tol: f64) -> (f64, f64) {
        if let Self::PiecewiseLinear { ref points } = *self {
            if let Some(pt) = points.iter().skip(1).find(|pt| (pt[0] - x).abs() <= tol) {
                return (self.derivative_right(pt[0]), self.derivative_left(pt[0]));
            }
        }
        (self.derivative_right(x), self.derivative_left(x))
    }

    /// Left derivative `v'_-(x)`, equal to the right one at 0.
    pub fn derivative_left(&self, x: f64) -> f64 {
        match *self {
            Self::PiecewiseLinear { ref points } => {
                if x <= 0.0 {
                    return self.derivative_right(0.0);
                }
                Self::pieces(points).find(|&(_, hi, _)| x <= hi).map(|(_, _, s)| s).unwrap_or(0.0)
            }
            _ => self.smooth_derivative(x),
        }
    }

    fn smooth_derivative(&self, x: f64) -> f64 {
        match *self {
            Self::Linear { c } => c,
            Self::ShiftedPower { c, s, a } => {
                if a == 1.0 {
                    c
                } else if c == 0.0 {
                    0.0
                } else {
                    c * a * (x + s).powf(a - 1.0)
                }
            }
            Self::PiecewiseLinear { .. } => unreachable!(),
        }
    }

    fn second_derivative(&self, x: f64) -> f64 {
        match *self {
            Self::ShiftedPower { c, s, a } if a < 1.0 => c * a * (a - 1.0) * (x + s).powf(a - 2.0),
            _ => 0.0,
        }
    }

    /// Whether `x v'(x)` is nondecreasing; piecewise-linear kinks break it.
    pub fn xv_nondecreasing(&self) -> bool {
        !matches!(self, Self::PiecewiseLinear { .. })
    }

    /// `sup_{x >= 0} (alpha v(x) - p x)`, possibly infinite.
    pub fn conjugate(&self, alpha: f64, p: f64) -> f64 {
        self.conjugate_on(alpha, p, f64::INFINITY)
    }

    /// `sup_{0 <= x <= xmax} (alpha v(x) - p x)`.
    pub fn conjugate_on(&self, alpha: f64, p: f64, xmax: f64) -> f64 {
        let h = |x: f64| alpha * self.value(x) - p * x;
        let linear = |slope: f64| {
            let gain = alpha * slope - p;
            if gain <= 0.0 {
                0.0
            } else {
                gain * xmax
            }
        };
        match *self {
            Self::Linear { c } => linear(c),
            Self::ShiftedPower { c, s, a } => {
                if a == 1.0 {
                    return linear(c);
                }
                if alpha * c <= 0.0 {
                    return 0.0;
                }
                if p <= 0.0 {
                    return if xmax.is_finite() { h(xmax) } else { f64::INFINITY };
                }
                let stationary = (alpha * c * a / p).powf(1.0 / (1.0 - a)) - s;
                h(stationary.clamp(0.0, xmax))
            }
            Self::PiecewiseLinear { ref points } => {
                let last_slope = Self::pieces(points).last().expect("two points").2;
                if xmax.is_infinite() && alpha * last_slope > p {
                    return f64::INFINITY;
                }
                let mut best = 0.0f64;
                for pt in points.iter().filter(|pt| pt[0] <= xmax) {
                    best = best.max(h(pt[0]));
                }
                if xmax.is_finite() {
                    best = best.max(h(xmax));
                }
                best
            }
        }
    }

    /// `(length, slope)` segments covering `[0, 1]` whose in-order sum is a
    /// lower (`upper = false`) or upper bound on `v`. Exact for linear and
    /// piecewise-linear valuations. `None` when no finite upper bound exists.
    pub fn segments(&self, k: usize, upper: bool) -> Option<Vec<(f64, f64)>> {
        match *self {
            Self::Linear { c } => Some(vec![(1.0, c)]),
            Self::ShiftedPower { c, a, .. } if a == 1.0 => Some(vec![(1.0, c)]),
            Self::ShiftedPower { .. } => {
                let h = 1.0 / k as f64;
                (0..k)
                    .map(|q| {
                        let x = q as f64 * h;
                        let slope = if upper {
                            self.derivative_right(x)
                        } else {
                            (self.value(x + h) - self.value(x)) / h
                        };
                        slope.is_finite().then_some((h, slope))
                    })
                    .collect()
            }
            Self::PiecewiseLinear { ref points } => Some(
                Self::pieces(points)
                    .filter(|&(lo, _, _)| lo < 1.0)
                    .map(|(lo, hi, slope)| (hi.min(1.0) - lo, slope))
                    .collect(),
            ),
        }
    }
}

/// Budgets and an `n x m` grid of concave valuations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConcave")]
pub struct ConcaveMarket {
    budgets: Vec<f64>,
    valuations: Vec<Vec<ConcaveValuation>>,
}

#[derive(Deserialize)]
struct RawConcave {
    budgets: Vec<f64>,
    valuations: Vec<Vec<ConcaveValuation>>,
}

impl TryFrom<RawConcave> for ConcaveMarket {
    type Error = Error;

    fn try_from(raw: RawConcave) -> Result<Self> {
        ConcaveMarket::new(raw.budgets, raw.valuations)
    }
}

impl ConcaveMarket {
    pub fn new(budgets: Vec<f64>, valuations: Vec<Vec<ConcaveValuation>>) -> Result<Self> {
        // Reuse the linear market's shape and budget checks.
        let shape: Vec<Vec<f64>> = valuations.iter().map(|row| vec![0.0; row.len()]).collect();
        MarketInstance::new(budgets.clone(), shape)?;
        for row in &valuations {
            for v in row {
                v.validate()?;
            }
        }
        Ok(Self { budgets, valuations })
    }

    /// The market with `v_ij(x) = v_ij x`.
    pub fn linear(inst: &MarketInstance) -> Self {
        let valuations = inst
            .values()
            .iter()
            .map(|row| row.iter().map(|&c| ConcaveValuation::Linear { c }).collect())
            .collect();
        Self { budgets: inst.budgets().to_vec(), valuations }
    }

    /// The linear market with slopes `v_ij(1)`, pointwise below this one on `[0, 1]`.
    pub fn chord_market(&self) -> Result<MarketInstance> {
        let values = self.valuations.iter().map(|row| row.iter().map(|v| v.value(1.0)).collect()).collect();
        MarketInstance::new(self.budgets.clone(), values)
    }

    pub fn n(&self) -> usize {
        self.budgets.len()
    }

    pub fn m(&self) -> usize {
        self.valuations[0].len()
    }

    pub fn budgets(&self) -> &[f64] {
        &self.budgets
    }

    pub fn budget(&self, i: usize) -> f64 {
        self.budgets[i]
    }

    pub fn valuation(&self, i: usize, j: usize) -> &ConcaveValuation {
        &self.valuations[i][j]
    }

    /// `sum_j v_ij(x_ij)`.
    pub fn buyer_value(&self, i: usize, x: &[f64]) -> f64 {
        (0..self.m()).map(|j| self.valuations[i][j].value(x[j])).sum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EgSolution {
    pub x: Vec<Vec<f64>>,
    pub u: Vec<f64>,
    pub delta: Vec<f64>,
    /// Zero for buyers without budget, who are left out of the program.
    pub alpha: Vec<f64>,
    pub p: Vec<f64>,
    /// Payments `p_j x_ij`.
    pub b: Vec<Vec<f64>>,
    pub gap: f64,
    pub kkt: [f64; 5],
}

impl EgSolution {
    pub fn revenue(&self) -> f64 {
        self.b.iter().flatten().sum()
    }

    pub fn spend(&self, i: usize) -> f64 {
        self.b[i].iter().sum()
    }

    pub fn max_kkt(&self) -> f64 {
        self.kkt.iter().copied().fold(0.0, f64::max)
    }
}

struct Pair {
    buyer: usize,
    i: usize,
    good: usize,
    /// Epigraph variable for piecewise-linear valuations.
    epi: Option<usize>,
}

struct EgPrimal<'a> {
    market: &'a ConcaveMarket,
    buyers: Vec<usize>,
    goods: Vec<usize>,
    pairs: Vec<Pair>,
    /// `(pair, intercept, slope)` for every linear piece of every epigraph.
    pieces: Vec<(usize, f64, f64)>,
    num_epi: usize,
}

impl EgPrimal<'_> {
    fn valuation(&self, q: usize) -> &ConcaveValuation {
        let pair = &self.pairs[q];
        self.market.valuation(pair.i, self.goods[pair.good])
    }

    fn u_var(&self, a: usize) -> usize {
        self.pairs.len() + self.num_epi + a
    }

    fn delta_var(&self, a: usize) -> usize {
        self.pairs.len() + self.num_epi + self.buyers.len() + a
    }

    fn epi_var(&self, q: usize) -> Option<usize> {
        self.pairs[q].epi.map(|e| self.pairs.len() + e)
    }

    fn nb(&self) -> usize {
        self.buyers.len()
    }
}

// Rows: utility (nb), supply (goods), pieces, x >= 0 (pairs), delta >= 0 (nb).
impl ConvexProgram for EgPrimal<'_> {
    fn dim(&self) -> usize {
        self.pairs.len() + self.num_epi + 2 * self.nb()
    }

    fn num_constraints(&self) -> usize {
        2 * self.nb() + self.goods.len() + self.pieces.len() + self.pairs.len()
    }

    fn values(&self, z: &[f64], cons: &mut [f64]) -> Option<f64> {
        let nb = self.nb();
        let mut obj = 0.0;
        for (a, &i) in self.buyers.iter().enumerate() {
            let u = z[self.u_var(a)];
            if u <= 0.0 {
                return None;
            }
            obj += z[self.delta_var(a)] - self.market.budget(i) * u.ln();
            cons[a] = u - z[self.delta_var(a)];
        }
        for c in cons[nb..nb + self.goods.len()].iter_mut() {
            *c = -1.0;
        }
        for (q, pair) in self.pairs.iter().enumerate() {
            let x = z[q];
            let g = match self.epi_var(q) {
                Some(w) => z[w],
                None => {
                    if let ConcaveValuation::ShiftedPower { s, .. } = *self.valuation(q) {
                        if x + s <= 0.0 || x < 0.0 && s == 0.0 {
                            return None;
                        }
                    }
                    self.valuation(q).value(x)
                }
            };
            cons[pair.buyer] -= g;
            cons[nb + pair.good] += x;
        }
        let base = nb + self.goods.len();
        for (r, &(q, intercept, slope)) in self.pieces.iter().enumerate() {
            cons[base + r] = z[self.epi_var(q).expect("piece of an epigraph")] - intercept - slope * z[q];
        }
        let base = base + self.pieces.len();
        for q in 0..self.pairs.len() {
            cons[base + q] = -z[q];
        }
        let base = base + self.pairs.len();
        for a in 0..nb {
            cons[base + a] = -z[self.delta_var(a)];
        }
        if obj.is_finite() && cons.iter().all(|c| c.is_finite()) {
            Some(obj)
        } else {
            None
        }
    }

    fn objective_derivatives(&self, z: &[f64], grad: &mut [f64], hess: &mut DMatrix<f64>) {
        for (a, &i) in self.buyers.iter().enumerate() {
            let (uv, dv) = (self.u_var(a), self.delta_var(a));
            let b = self.market.budget(i);
            grad[uv] = -b / z[uv];
            hess[(uv, uv)] = b / (z[uv] * z[uv]);
            grad[dv] = 1.0;
        }
    }

    fn constraint_gradient(&self, k: usize, z: &[f64], out: &mut Vec<(usize, f64)>) {
        let nb = self.nb();
        let ng = self.goods.len();
        if k < nb {
            out.push((self.u_var(k), 1.0));
            out.push((self.delta_var(k), -1.0));
            for (q, pair) in self.pairs.iter().enumerate().filter(|(_, p)| p.buyer == k) {
                let _ = pair;
                match self.epi_var(q) {
                    Some(w) => out.push((w, -1.0)),
                    None => out.push((q, -self.valuation(q).derivative_right(z[q]))),
                }
            }
        } else if k < nb + ng {
            let g = k - nb;
            out.extend(self.pairs.iter().enumerate().filter(|(_, p)| p.good == g).map(|(q, _)| (q, 1.0)));
        } else if k < nb + ng + self.pieces.len() {
            let (q, _, slope) = self.pieces[k - nb - ng];
            out.push((self.epi_var(q).expect("piece of an epigraph"), 1.0));
            out.push((q, -slope));
        } else if k < nb + ng + self.pieces.len() + self.pairs.len() {
            out.push((k - nb - ng - self.pieces.len(), -1.0));
        } else {
            out.push((self.delta_var(k - nb - ng - self.pieces.len() - self.pairs.len()), -1.0));
        }
    }

    fn add_constraint_hessian(&self, k: usize, z: &[f64], weight: f64, hess: &mut DMatrix<f64>) {
        if k >= self.nb() {
            return;
        }
        for (q, pair) in self.pairs.iter().enumerate() {
            if pair.buyer == k && pair.epi.is_none() {
                hess[(q, q)] -= weight * self.valuation(q).second_derivative(z[q]);
            }
        }
    }
}

/// Solves the EG program; fails unless the duality gap and every KKT residual
/// are within `tol`.
pub fn solve_concave_eg(market: &ConcaveMarket, tol: f64) -> Result<EgSolution> {
    let (n, m) = (market.n(), market.m());
    let buyers: Vec<usize> = (0..n).filter(|&i| market.budget(i) > 0.0).collect();
    let goods: Vec<usize> =
        (0..m).filter(|&j| buyers.iter().any(|&i| !market.valuation(i, j).is_zero())).collect();
    let mut pairs = Vec::new();
    let mut pieces = Vec::new();
    let mut num_epi = 0;
    for (a, &i) in buyers.iter().enumerate() {
        for (g, &j) in goods.iter().enumerate() {
            let v = market.valuation(i, j);
            if v.is_zero() {
                continue;
            }
            let epi = if let ConcaveValuation::PiecewiseLinear { points } = v {
                for w in points.windows(2) {
                    let slope = (w[1][1] - w[0][1]) / (w[1][0] - w[0][0]);
                    pieces.push((pairs.len(), w[0][1] - slope * w[0][0], slope));
                }
                num_epi += 1;
                Some(num_epi - 1)
            } else {
                None
            };
            pairs.push(Pair { buyer: a, i, good: g, epi });
        }
    }
    let prog = EgPrimal { market, buyers, goods, pairs, pieces, num_epi };

    let mut z = vec![0.0; prog.dim()];
    let mut per_good = vec![0usize; prog.goods.len()];
    for pair in &prog.pairs {
        per_good[pair.good] += 1;
    }
    let mut level = vec![0.0; prog.nb()];
    for (q, pair) in prog.pairs.iter().enumerate() {
        z[q] = 0.5 / per_good[pair.good] as f64;
        let v = prog.valuation(q).value(z[q]);
        let g = match prog.epi_var(q) {
            Some(w) => {
                z[w] = v - 1.0;
                z[w]
            }
            None => v,
        };
        level[pair.buyer] += g;
    }
    for a in 0..prog.nb() {
        let delta = 1.0 + (-level[a]).max(0.0);
        z[prog.delta_var(a)] = delta;
        z[prog.u_var(a)] = 0.5 * (level[a] + delta);
    }

    let scale = 1.0 + prog.buyers.iter().map(|&i| market.budget(i)).sum::<f64>();
    let opts = IpmOptions { gap_tol: 1e-13 * scale, residual_tol: 1e-11 * scale, ..IpmOptions::default() };
    let res = ipm::solve(&prog, z, &opts)?;

    let mut sol = EgSolution {
        x: vec![vec![0.0; m]; n],
        u: vec![0.0; n],
        delta: vec![0.0; n],
        alpha: vec![0.0; n],
        p: vec![0.0; m],
        b: vec![vec![0.0; m]; n],
        gap: 0.0,
        kkt: [0.0; 5],
    };
    for (a, &i) in prog.buyers.iter().enumerate() {
        sol.u[i] = res.z[prog.u_var(a)];
        sol.delta[i] = res.z[prog.delta_var(a)].max(0.0);
        sol.alpha[i] = res.lambda[a].clamp(f64::MIN_POSITIVE, 1.0);
    }
    for (g, &j) in prog.goods.iter().enumerate() {
        sol.p[j] = res.lambda[prog.nb() + g].max(0.0);
    }
    for (q, pair) in prog.pairs.iter().enumerate() {
        sol.x[pair.i][prog.goods[pair.good]] = res.z[q].max(0.0);
    }
    for i in 0..n {
        for j in 0..m {
            sol.b[i][j] = sol.p[j] * sol.x[i][j];
        }
    }
    sol.gap = concave_gap(market, &sol.x, &sol.p, &sol.alpha);
    sol.kkt = kkt_residuals(market, &sol);
    let worst = sol.max_kkt();
    if worst > tol || sol.gap > tol {
        let mut residuals = sol.kkt.to_vec();
        residuals.push(sol.gap);
        return Err(Error::NotConverged { context: "concave EG".into(), iterations: res.iterations, residuals });
    }
    Ok(sol)
}

/// EG primal value of `x` with the best `u` and `delta`; columns over-allocated
/// by rounding are scaled back to unit supply first.
pub fn concave_primal(market: &ConcaveMarket, x: &[Vec<f64>]) -> f64 {
    let (n, m) = (market.n(), market.m());
    let col: Vec<f64> = (0..m).map(|j| (0..n).map(|i| x[i][j].max(0.0)).sum::<f64>().max(1.0)).collect();
    let mut total = 0.0;
    for i in 0..n {
        let b = market.budget(i);
        if b <= 0.0 {
            continue;
        }
        let xi: Vec<f64> = (0..m).map(|j| x[i][j].max(0.0) / col[j]).collect();
        let v = market.buyer_value(i, &xi);
        total += b * v.max(b).ln() - (b - v).max(0.0);
    }
    total
}

/// EG dual value, with each conjugate taken over `[0, 1]` (the primal never
/// allocates more than one unit, so this is still an upper bound).
pub fn concave_dual(market: &ConcaveMarket, p: &[f64], alpha: &[f64]) -> f64 {
    let mut total: f64 = p.iter().sum();
    for i in 0..market.n() {
        let b = market.budget(i);
        if b <= 0.0 {
            continue;
        }
        total += b * (b / alpha[i]).ln() - b;
        for j in 0..market.m() {
            total += market.valuation(i, j).conjugate_on(alpha[i], p[j], 1.0);
        }
    }
    total
}

pub fn concave_gap(market: &ConcaveMarket, x: &[Vec<f64>], p: &[f64], alpha: &[f64]) -> f64 {
    concave_dual(market, p, alpha) - concave_primal(market, x)
}

/// Residuals of the five KKT lines, each maximized over its index; buyers
/// without budget are skipped.
///
/// 1. `|B_i / u_i - alpha_i|`
/// 2. `alpha_i v'(x_ij) <= p_j`, with equality where `x_ij` is active; at a
///    kink the distance from `p_j` to `alpha_i [v'_+, v'_-]`
/// 3. `|alpha_i (u_i - sum_j v_ij(x_ij) - delta_i)|`
/// 4. `|p_j (1 - sum_i x_ij)|`
/// 5. `|delta_i (1 - alpha_i)|`
pub fn kkt_residuals(market: &ConcaveMarket, sol: &EgSolution) -> [f64; 5] {
    let (n, m) = (market.n(), market.m());
    let mut r = [0.0f64; 5];
    for i in (0..n).filter(|&i| market.budget(i) > 0.0) {
        let (a, u) = (sol.alpha[i], sol.u[i]);
        r[0] = r[0].max(if u > 0.0 { (market.budget(i) / u - a).abs() } else { f64::INFINITY });
        for j in 0..m {
            let v = market.valuation(i, j);
            let x = sol.x[i][j];
            let (lo, hi) = v.subgradient(x, ACTIVE_TOL);
            let (lo, hi) = (a * lo, a * hi);
            let res = if x > ACTIVE_TOL {
                (lo - sol.p[j]).max(sol.p[j] - hi).max(0.0)
            } else {
                (lo - sol.p[j]).max(0.0)
            };
            r[1] = r[1].max(res);
        }
        r[2] = r[2].max((a * (u - market.buyer_value(i, &sol.x[i]) - sol.delta[i])).abs());
        r[4] = r[4].max((sol.delta[i] * (1.0 - a)).abs());
    }
    for j in 0..m {
        let sold: f64 = (0..n).map(|i| sol.x[i][j]).sum();
        r[3] = r[3].max((sol.p[j] * (1.0 - sold)).abs());
    }
    r
}

/// `max v'(0) / v'(1)` over pairs with nonzero valuations; infinite when some
/// derivative at 0 is.
pub fn rho_general(market: &ConcaveMarket) -> Result<f64> {
    let mut rho = 1.0f64;
    for i in 0..market.n() {
        for j in 0..market.m() {
            let v = market.valuation(i, j);
            if v.is_zero() {
                continue;
            }
            let d0 = v.derivative_right(0.0);
            let d1 = v.derivative_left(1.0);
            if d0.is_infinite() {
                return Ok(f64::INFINITY);
            }
            if d1 <= 0.0 {
                return Err(Error::Invalid(format!("valuation ({i}, {j}) is flat at 1, so v'(0)/v'(1) is undefined")));
            }
            rho = rho.max(d0 / d1);
        }
    }
    Ok(rho)
}

/// `ln(1 + max v'(0) / v'(1))`, for markets where every `x v'(x)` is nondecreasing.
pub fn rho_log(market: &ConcaveMarket) -> Result<f64> {
    for i in 0..market.n() {
        for j in 0..market.m() {
            let v = market.valuation(i, j);
            if !v.is_zero() && !v.xv_nondecreasing() {
                return Err(Error::Refused(format!(
                    "valuation ({i}, {j}) is piecewise linear and x v'(x) is not monotone there; use rho_general"
                )));
            }
        }
    }
    Ok(rho_general(market)?.ln_1p())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcaveRmvup {
    /// Optimum over the inner (secant) approximation; a feasible revenue.
    pub revenue: f64,
    /// Optimum over the outer (tangent) approximation; infinite when a
    /// derivative at 0 is.
    pub upper: f64,
    pub x: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

impl ConcaveRmvup {
    pub fn approximation_error(&self) -> f64 {
        self.upper - self.revenue
    }
}

enum Objective {
    Revenue,
    LiquidWelfare,
}

// Variables: per pair its segments, then one money variable per pair
// (revenue) or per buyer (welfare).
fn segmented_lp(market: &ConcaveMarket, k: usize, upper: bool, obj: Objective) -> Result<Option<(f64, Vec<Vec<f64>>, Vec<f64>)>> {
    let (n, m) = (market.n(), market.m());
    let mut segs = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            match market.valuation(i, j).segments(k, upper) {
                Some(s) => segs.push(s),
                None => return Ok(None),
            }
        }
    }
    let offsets: Vec<usize> = segs
        .iter()
        .scan(0, |acc, s| {
            let o = *acc;
            *acc += s.len();
            Some(o)
        })
        .collect();
    let ny = offsets.last().unwrap() + segs.last().unwrap().len();
    let nmoney = match obj {
        Objective::Revenue => n * m,
        Objective::LiquidWelfare => n,
    };
    let mut c = vec![0.0; ny + nmoney];
    for w in c.iter_mut().skip(ny) {
        *w = 1.0;
    }
    let mut lp = LinearProgram::new(c);
    for (q, s) in segs.iter().enumerate() {
        for (t, &(len, _)) in s.iter().enumerate() {
            lp.set_bounds(offsets[q] + t, 0.0, len);
        }
    }
    let value_terms = |q: usize| -> Vec<(usize, f64)> {
        segs[q].iter().enumerate().map(|(t, &(_, slope))| (offsets[q] + t, -slope)).collect()
    };
    for j in 0..m {
        let row: Vec<_> = (0..n).flat_map(|i| (0..segs[i * m + j].len()).map(move |t| (i, t))).map(|(i, t)| (offsets[i * m + j] + t, 1.0)).collect();
        lp.add_sparse(&row, Relation::Le, 1.0);
    }
    match obj {
        Objective::Revenue => {
            for q in 0..n * m {
                let mut row = value_terms(q);
                row.push((ny + q, 1.0));
                lp.add_sparse(&row, Relation::Le, 0.0);
            }
            for i in 0..n {
                let row: Vec<_> = (0..m).map(|j| (ny + i * m + j, 1.0)).collect();
                lp.add_sparse(&row, Relation::Le, market.budget(i));
            }
        }
        Objective::LiquidWelfare => {
            for i in 0..n {
                lp.set_bounds(ny + i, 0.0, market.budget(i));
                let mut row: Vec<_> = (0..m).flat_map(|j| value_terms(i * m + j)).collect();
                row.push((ny + i, 1.0));
                lp.add_sparse(&row, Relation::Le, 0.0);
            }
        }
    }
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Internal(format!("segmented LP reported {:?}", sol.status)));
    }
    let x = (0..n)
        .map(|i| (0..m).map(|j| (0..segs[i * m + j].len()).map(|t| sol.values[offsets[i * m + j] + t]).sum()).collect())
        .collect();
    Ok(Some((sol.objective, x, sol.values[ny..].to_vec())))
}

/// Revenue maximization with variable unit prices under concave IR
/// `b_ij <= v_ij(x_ij)`, bracketed by `k` segments per valuation.
pub fn solve_rmvup_concave(market: &ConcaveMarket, k: usize) -> Result<ConcaveRmvup> {
    if k == 0 {
        return Err(Error::Invalid("need at least one segment".into()));
    }
    let (revenue, x, money) = segmented_lp(market, k, false, Objective::Revenue)?.expect("inner segments always exist");
    let upper = segmented_lp(market, k, true, Objective::Revenue)?.map_or(f64::INFINITY, |r| r.0);
    let m = market.m();
    let b = (0..market.n()).map(|i| money[i * m..(i + 1) * m].to_vec()).collect();
    Ok(ConcaveRmvup { revenue, upper, x, b })
}

/// `LW(x) = sum_i min(sum_j v_ij(x_ij), B_i)`.
pub fn concave_liquid_welfare(market: &ConcaveMarket, x: &[Vec<f64>]) -> f64 {
    (0..market.n()).map(|i| market.buyer_value(i, &x[i]).min(market.budget(i))).sum()
}

/// Inner and outer bounds on the largest liquid welfare.
pub fn max_liquid_welfare_concave(market: &ConcaveMarket, k: usize) -> Result<(f64, f64)> {
    let inner = segmented_lp(market, k, false, Objective::LiquidWelfare)?.expect("inner segments always exist").0;
    let outer = segmented_lp(market, k, true, Objective::LiquidWelfare)?.map_or(f64::INFINITY, |r| r.0);
    Ok((inner, outer))
}

/// Violations of the equilibrium properties: IR per pair, budgets, full sale
/// of priced goods, and per buyer either a best response (certified by the
/// Lagrangian bound with multiplier `1/alpha - 1`) or spend at least `B/rho`.
pub fn check_eg_properties(market: &ConcaveMarket, sol: &EgSolution, rho: f64, tol: f64) -> Vec<String> {
    let (n, m) = (market.n(), market.m());
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..m {
            let v = market.valuation(i, j).value(sol.x[i][j]);
            if sol.b[i][j] > v + tol {
                out.push(format!("buyer {i} pays {} for value {v} on good {j}", sol.b[i][j]));
            }
        }
        let spend = sol.spend(i);
        let b = market.budget(i);
        if spend > b + tol {
            out.push(format!("buyer {i} spends {spend} over budget {b}"));
        }
        if b > 0.0 && spend < b / rho - tol {
            let gap = utility_gap(market, sol, i);
            if gap > tol {
                out.push(format!("buyer {i} spends {spend} < B/rho and misses {gap} utility"));
            }
        }
    }
    for j in 0..m {
        let sold: f64 = (0..n).map(|i| sol.x[i][j]).sum();
        if sol.p[j] > tol && (sold - 1.0).abs() > tol {
            out.push(format!("good {j} is priced at {} but only {sold} is sold", sol.p[j]));
        }
    }
    out
}

/// Upper bound on how much utility buyer `i` could gain by a budget-feasible
/// deviation at prices `p`; zero certifies a best response.
pub fn utility_gap(market: &ConcaveMarket, sol: &EgSolution, i: usize) -> f64 {
    let a = sol.alpha[i];
    if a <= 0.0 {
        return f64::INFINITY;
    }
    let mu = 1.0 / a - 1.0;
    let bound: f64 = (0..market.m())
        .map(|j| market.valuation(i, j).conjugate(1.0, (1.0 + mu) * sol.p[j]))
        .sum::<f64>()
        + mu * market.budget(i);
    let achieved = market.buyer_value(i, &sol.x[i]) - sol.spend(i);
    (bound - achieved).max(0.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcaveCertificate {
    pub eg_rev: f64,
    pub rmvup_rev: f64,
    pub rmvup_upper: f64,
    pub rho_general: f64,
    pub rho_log: Option<f64>,
    /// The larger of the two, which gives the weaker bound.
    pub rho: f64,
    pub bound: f64,
    pub bound_ok: bool,
    pub lw: f64,
    pub lw_max_upper: f64,
    /// `LW(x) / LW*` against the outer welfare bound, compared with `1/(rho+1)`.
    pub lw_ratio: f64,
}

/// Checks `revenue >= RMVUP / (rho (rho + 1))` on one market.
pub fn concave_revenue_certificate(market: &ConcaveMarket) -> Result<ConcaveCertificate> {
    let rho_general = rho_general(market)?;
    if rho_general.is_infinite() {
        return Err(Error::Refused("rho is infinite; the revenue bound is vacuous".into()));
    }
    let rho_log = rho_log(market).ok();
    let rho = rho_log.map_or(rho_general, |r| r.max(rho_general));
    let eg = solve_concave_eg(market, 1e-6)?;
    let rmvup = solve_rmvup_concave(market, SEGMENTS)?;
    let eg_rev = eg.revenue();
    let bound = rmvup.revenue / (rho * (rho + 1.0));
    let bound_ok = eg_rev >= bound - 1e-6;
    let lw = concave_liquid_welfare(market, &eg.x);
    let (_, lw_max_upper) = max_liquid_welfare_concave(market, SEGMENTS)?;
    let lw_ratio = if lw_max_upper > 0.0 { lw / lw_max_upper } else { 1.0 };
    if !bound_ok {
        return Err(Error::Certificate(format!(
            "EG revenue {eg_rev} below RMVUP {} / (rho (rho + 1)) with rho {rho} on {}",
            rmvup.revenue,
            serde_json::to_string(market)?
        )));
    }
    Ok(ConcaveCertificate {
        eg_rev,
        rmvup_rev: rmvup.revenue,
        rmvup_upper: rmvup.upper,
        rho_general,
        rho_log,
        rho,
        bound,
        bound_ok,
        lw,
        lw_max_upper,
        lw_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sqrt1() -> ConcaveValuation {
        ConcaveValuation::ShiftedPower { c: 1.0, s: 1.0, a: 0.5 }
    }

    #[test]
    fn evaluators() {
        let v = sqrt1();
        assert!((v.value(3.0) - 1.0).abs() < 1e-15);
        assert!((v.derivative_right(0.0) - 0.5).abs() < 1e-15);
        let pwl = ConcaveValuation::PiecewiseLinear { points: vec![[0.0, 0.0], [0.5, 1.0], [1.0, 1.5]] };
        assert_eq!(pwl.value(0.25), 0.5);
        assert_eq!(pwl.value(2.0), 2.5);
        assert_eq!(pwl.derivative_left(0.5), 2.0);
        assert_eq!(pwl.derivative_right(0.5), 1.0);
        assert_eq!(pwl.conjugate(1.0, 1.5), 0.25);
        assert!(pwl.conjugate(1.0, 0.5).is_infinite());
        assert_eq!(pwl.conjugate_on(1.0, 0.5, 1.0), 1.0);
    }

    #[test]
    fn validation() {
        let bad = ConcaveValuation::PiecewiseLinear { points: vec![[0.0, 0.0], [0.5, 0.5], [1.0, 1.5]] };
        assert!(bad.validate().is_err());
        assert!(ConcaveValuation::ShiftedPower { c: 1.0, s: 1.0, a: 1.5 }.validate().is_err());
        let json = r#"{"budgets":[1.0],"valuations":[[{"kind":"pwl","points":[[0,0],[1,1]]}]]}"#;
        let mk: ConcaveMarket = serde_json::from_str(json).unwrap();
        assert_eq!(mk.m(), 1);
    }

    #[test]
    fn rho_examples() {
        let mk = |v: ConcaveValuation| ConcaveMarket::new(vec![1.0], vec![vec![v]]).unwrap();
        assert_eq!(rho_general(&mk(ConcaveValuation::Linear { c: 3.0 })).unwrap(), 1.0);
        assert!((rho_general(&mk(sqrt1())).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert!((rho_log(&mk(sqrt1())).unwrap() - (1.0 + 2f64.sqrt()).ln()).abs() < 1e-12);
        let pwl = mk(ConcaveValuation::PiecewiseLinear { points: vec![[0.0, 0.0], [0.5, 1.0], [1.0, 1.5]] });
        assert_eq!(rho_general(&pwl).unwrap(), 2.0);
        assert!(matches!(rho_log(&pwl), Err(Error::Refused(_))));
        let pure = mk(ConcaveValuation::ShiftedPower { c: 1.0, s: 0.0, a: 0.5 });
        assert!(rho_general(&pure).unwrap().is_infinite());
    }

    #[test]
    fn single_buyer_closed_form() {
        let mk = ConcaveMarket::new(vec![10.0], vec![vec![sqrt1()]]).unwrap();
        let sol = solve_concave_eg(&mk, 1e-8).unwrap();
        let p = 0.5 / 2f64.sqrt();
        assert!((sol.alpha[0] - 1.0).abs() < 1e-8);
        assert!((sol.x[0][0] - 1.0).abs() < 1e-8);
        assert!((sol.p[0] - p).abs() < 1e-8, "{}", sol.p[0]);
    }

    #[test]
    fn linear_market_bounds_are_exact() {
        let inst = MarketInstance::new(vec![1.0, 2.0], vec![vec![3.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let mk = ConcaveMarket::linear(&inst);
        let r = solve_rmvup_concave(&mk, SEGMENTS).unwrap();
        let lin = crate::rmvup::solve_rmvup(&inst).unwrap();
        assert!((r.revenue - lin.revenue).abs() < 1e-9);
        assert!(r.approximation_error().abs() < 1e-9);
    }
}
