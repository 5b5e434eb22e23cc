//! Dense linear programming.
//!
//! Programs are stated as `maximize c'x` subject to rows `a'x {<=,=,>=} b` and
//! per-variable bounds `lo <= x <= hi` (either side may be infinite). The solver
//! is a two-phase primal simplex on a dense tableau that keeps nonbasic
//! variables at one of their bounds, so variable bounds never become rows.
//! Once an optimal basis is found, basic values and row duals are recomputed
//! from the original data with an LU factorization of the basis.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("row {row} has {got} coefficients, expected {expected}")]
    Arity { row: usize, got: usize, expected: usize },
    #[error("variable {var} has empty bound interval [{lo}, {hi}]")]
    EmptyBounds { var: usize, lo: f64, hi: f64 },
    #[error("non-finite data in {0}")]
    NonFinite(&'static str),
    #[error("simplex exceeded {0} iterations")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl LinearProgram {
    /// A maximization problem over `objective.len()` variables, all in `[0, inf)`.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            constraints: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn bounds(&self, var: usize) -> (f64, f64) {
        (self.lower[var], self.upper[var])
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Result<usize, LpError> {
        if coeffs.len() != self.num_vars() {
            return Err(LpError::Arity {
                row: self.constraints.len(),
                got: coeffs.len(),
                expected: self.num_vars(),
            });
        }
        self.constraints.push(Constraint { coeffs, relation, rhs });
        Ok(self.constraints.len() - 1)
    }

    /// Adds a row given as `(variable, coefficient)` pairs.
    pub fn add_sparse(&mut self, terms: &[(usize, f64)], relation: Relation, rhs: f64) -> usize {
        let mut coeffs = vec![0.0; self.num_vars()];
        for &(var, c) in terms {
            coeffs[var] += c;
        }
        self.constraints.push(Constraint { coeffs, relation, rhs });
        self.constraints.len() - 1
    }

    pub fn set_bounds(&mut self, var: usize, lo: f64, hi: f64) {
        self.lower[var] = lo;
        self.upper[var] = hi;
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        dot(&self.objective, x)
    }

    /// Largest violation of any row or bound at `x`, recomputed from scratch.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        for c in &self.constraints {
            let lhs = dot(&c.coeffs, x);
            let excess = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(excess);
        }
        worst
    }

    fn check(&self) -> Result<(), LpError> {
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::NonFinite("objective"));
        }
        for (row, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != self.num_vars() {
                return Err(LpError::Arity {
                    row,
                    got: c.coeffs.len(),
                    expected: self.num_vars(),
                });
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|a| !a.is_finite()) {
                return Err(LpError::NonFinite("constraints"));
            }
        }
        for var in 0..self.num_vars() {
            let (lo, hi) = (self.lower[var], self.upper[var]);
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(LpError::NonFinite("bounds"));
            }
            if lo > hi {
                return Err(LpError::EmptyBounds { var, lo, hi });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Variable values; meaningful only when `status` is optimal.
    pub values: Vec<f64>,
    pub objective: f64,
    /// Row multipliers of the optimal basis (`>= 0` on `<=` rows of a maximization).
    pub duals: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const DEGENERATE_STREAK: usize = 64;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Optimal,
    Unbounded,
    Moved,
}

/// Bounded-variable tableau. Columns are the structural variables, one slack
/// per inequality row, then one artificial per row.
struct Tableau {
    rows: usize,
    cols: usize,
    /// `B^{-1} A`, row-major.
    t: Vec<f64>,
    /// Reduced costs of the current phase.
    d: Vec<f64>,
    cost: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<Option<usize>>,
    iterations: usize,
    degenerate_steps: usize,
    bland: bool,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * self.cols + c]
    }

    fn reset_costs(&mut self, cost: Vec<f64>) {
        self.cost = cost;
        self.d = self.cost.clone();
        for r in 0..self.rows {
            let cb = self.cost[self.basis[r]];
            if cb != 0.0 {
                let row = &self.t[r * self.cols..(r + 1) * self.cols];
                for (d, a) in self.d.iter_mut().zip(row) {
                    *d -= cb * a;
                }
            }
        }
        for &b in &self.basis {
            self.d[b] = 0.0;
        }
    }

    fn choose_entering(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.cols {
            if self.in_basis[j].is_some() || self.hi[j] - self.lo[j] <= 0.0 {
                continue;
            }
            let dj = self.d[j];
            let can_rise = self.x[j] < self.hi[j] && dj > OPT_TOL;
            let can_fall = self.x[j] > self.lo[j] && dj < -OPT_TOL;
            if !(can_rise || can_fall) {
                continue;
            }
            let dir = if can_rise { 1.0 } else { -1.0 };
            if self.bland {
                return Some((j, dir));
            }
            if best.is_none_or(|(b, _)| dj.abs() > self.d[b].abs()) {
                best = Some((j, dir));
            }
        }
        best
    }

    fn step(&mut self) -> Step {
        let Some((enter, dir)) = self.choose_entering() else {
            return Step::Optimal;
        };

        // Ratio test: the entering variable moves by `dir * theta`; basic
        // variable in row r moves by `-dir * t[r][enter] * theta`.
        let mut theta = self.hi[enter] - self.lo[enter];
        let mut leave: Option<(usize, f64)> = None;
        let mut leave_pivot = 0.0;
        for r in 0..self.rows {
            let a = self.at(r, enter);
            if a.abs() < PIVOT_TOL {
                continue;
            }
            let k = self.basis[r];
            let rate = -dir * a;
            let (limit, bound) = if rate < 0.0 {
                ((self.x[k] - self.lo[k]) / -rate, self.lo[k])
            } else {
                ((self.hi[k] - self.x[k]) / rate, self.hi[k])
            };
            if !limit.is_finite() {
                continue;
            }
            let limit = limit.max(0.0);
            let better = match leave {
                None => limit < theta,
                Some((lr, _)) => {
                    limit < theta - 1e-12
                        || (limit <= theta + 1e-12
                            && if self.bland {
                                k < self.basis[lr]
                            } else {
                                a.abs() > leave_pivot
                            })
                }
            };
            if better {
                theta = limit;
                leave = Some((r, bound));
                leave_pivot = a.abs();
            }
        }
        if !theta.is_finite() {
            return Step::Unbounded;
        }

        self.iterations += 1;
        if theta < 1e-12 {
            self.degenerate_steps += 1;
        } else {
            self.degenerate_steps = 0;
        }
        self.bland = self.degenerate_steps > DEGENERATE_STREAK;

        self.x[enter] += dir * theta;
        for r in 0..self.rows {
            let a = self.at(r, enter);
            if a != 0.0 {
                let k = self.basis[r];
                self.x[k] -= dir * a * theta;
            }
        }

        match leave {
            None => {
                // Bound flip: entering variable crosses to its other bound.
                self.x[enter] = if dir > 0.0 { self.hi[enter] } else { self.lo[enter] };
            }
            Some((r, bound)) => {
                let out = self.basis[r];
                self.x[out] = bound;
                self.pivot(r, enter);
            }
        }
        Step::Moved
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let cols = self.cols;
        let piv = self.at(r, c);
        {
            let row = &mut self.t[r * cols..(r + 1) * cols];
            for v in row.iter_mut() {
                *v /= piv;
            }
        }
        let pivot_row: Vec<f64> = self.t[r * cols..(r + 1) * cols].to_vec();
        for rr in 0..self.rows {
            if rr == r {
                continue;
            }
            let f = self.t[rr * cols + c];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[rr * cols..(rr + 1) * cols];
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            row[c] = 0.0;
        }
        let f = self.d[c];
        if f != 0.0 {
            for (v, p) in self.d.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            self.d[c] = 0.0;
        }
        let out = self.basis[r];
        self.in_basis[out] = None;
        self.in_basis[c] = Some(r);
        self.basis[r] = c;
    }

    fn run(&mut self, limit: usize) -> Result<Step, LpError> {
        loop {
            if self.iterations > limit {
                return Err(LpError::IterationLimit(limit));
            }
            match self.step() {
                Step::Moved => {}
                done => return Ok(done),
            }
        }
    }
}

impl Tableau {
    fn build(a: &[Vec<f64>], lo: Vec<f64>, hi: Vec<f64>, x: Vec<f64>, art_sign: &[f64], rows: usize, cols: usize) -> Self {
        let mut t = vec![0.0; rows * cols];
        for r in 0..rows {
            let s = art_sign[r];
            for (c, v) in a[r].iter().enumerate() {
                t[r * cols + c] = s * v;
            }
        }
        let first_art = cols - rows;
        let basis: Vec<usize> = (0..rows).map(|r| first_art + r).collect();
        let mut in_basis = vec![None; cols];
        for (r, &b) in basis.iter().enumerate() {
            in_basis[b] = Some(r);
        }
        Self {
            rows,
            cols,
            t,
            d: vec![0.0; cols],
            cost: vec![0.0; cols],
            lo,
            hi,
            x,
            basis,
            in_basis,
            iterations: 0,
            bland: false,
            degenerate_steps: 0,
        }
    }
}

/// Solves `lp` to optimality, or reports infeasibility/unboundedness in the status.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.check()?;
    let n = lp.num_vars();
    let rows = lp.constraints.len();

    // Column layout: structurals, slacks (one per inequality row), artificials.
    let slack_of: Vec<Option<usize>> = {
        let mut next = n;
        lp.constraints
            .iter()
            .map(|c| match c.relation {
                Relation::Eq => None,
                _ => {
                    next += 1;
                    Some(next - 1)
                }
            })
            .collect()
    };
    let n_slack = slack_of.iter().flatten().count();
    let first_art = n + n_slack;
    let cols = first_art + rows;

    // Full row matrix over structural + slack columns (artificials added in build).
    let mut a: Vec<Vec<f64>> = Vec::with_capacity(rows);
    let mut rhs = Vec::with_capacity(rows);
    for (r, c) in lp.constraints.iter().enumerate() {
        let mut row = vec![0.0; cols];
        row[..n].copy_from_slice(&c.coeffs);
        if let Some(s) = slack_of[r] {
            row[s] = if c.relation == Relation::Le { 1.0 } else { -1.0 };
        }
        a.push(row);
        rhs.push(c.rhs);
    }

    let mut lo = vec![0.0; cols];
    let mut hi = vec![f64::INFINITY; cols];
    lo[..n].copy_from_slice(&lp.lower);
    hi[..n].copy_from_slice(&lp.upper);

    let mut x = vec![0.0; cols];
    for j in 0..first_art {
        x[j] = if lo[j].is_finite() {
            lo[j]
        } else if hi[j].is_finite() {
            hi[j]
        } else {
            0.0
        };
    }
    let mut art_sign = vec![1.0; rows];
    for r in 0..rows {
        let resid = rhs[r] - dot(&a[r][..first_art], &x[..first_art]);
        art_sign[r] = if resid >= 0.0 { 1.0 } else { -1.0 };
        a[r][first_art + r] = art_sign[r];
        x[first_art + r] = resid.abs();
    }

    let limit = 20_000 + 50 * (rows + cols);
    let mut tab = Tableau::build(&a, lo, hi, x, &art_sign, rows, cols);

    // Phase 1: drive the artificials to zero.
    let mut phase1 = vec![0.0; cols];
    for c in phase1.iter_mut().skip(first_art) {
        *c = -1.0;
    }
    tab.reset_costs(phase1);
    tab.run(limit)?;
    let infeasibility: f64 = (first_art..cols).map(|j| tab.x[j]).sum();
    let scale = 1.0 + rhs.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
    if infeasibility > 1e-9 * scale {
        return Ok(LpSolution {
            status: LpStatus::Infeasible,
            values: tab.x[..n].to_vec(),
            objective: f64::NAN,
            duals: vec![0.0; rows],
            iterations: tab.iterations,
        });
    }
    for j in first_art..cols {
        tab.hi[j] = 0.0;
        tab.x[j] = 0.0;
    }

    // Phase 2.
    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(&lp.objective);
    tab.reset_costs(cost.clone());
    tab.bland = false;
    tab.degenerate_steps = 0;
    if tab.run(limit)? == Step::Unbounded {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            values: tab.x[..n].to_vec(),
            objective: f64::INFINITY,
            duals: vec![0.0; rows],
            iterations: tab.iterations,
        });
    }

    let (values, duals) = refine(&tab, &a, &rhs, &cost, n);
    let values = if lp.max_violation(&values) <= lp.max_violation(&tab.x[..n]) + 1e-12 {
        values
    } else {
        tab.x[..n].to_vec()
    };
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective: lp.evaluate(&values),
        values,
        duals,
        iterations: tab.iterations,
    })
}

/// Recomputes basic values and row duals from the original columns.
fn refine(tab: &Tableau, a: &[Vec<f64>], rhs: &[f64], cost: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let rows = tab.rows;
    let mut x = tab.x.clone();
    if rows == 0 {
        return (x[..n].to_vec(), Vec::new());
    }
    let basis = DMatrix::from_fn(rows, rows, |r, k| a[r][tab.basis[k]]);
    let mut b = DVector::from_fn(rows, |r, _| rhs[r]);
    for r in 0..rows {
        for j in 0..tab.cols {
            if tab.in_basis[j].is_none() && x[j] != 0.0 {
                b[r] -= a[r][j] * x[j];
            }
        }
    }
    let lu = basis.clone().lu();
    let duals = basis
        .transpose()
        .lu()
        .solve(&DVector::from_fn(rows, |k, _| cost[tab.basis[k]]))
        .map(|y| y.iter().copied().collect())
        .unwrap_or_else(|| vec![0.0; rows]);
    if let Some(xb) = lu.solve(&b) {
        if xb.iter().all(|v| v.is_finite()) {
            for (k, &col) in tab.basis.iter().enumerate() {
                x[col] = xb[k].clamp(tab.lo[col], tab.hi[col]);
            }
        }
    }
    (x[..n].to_vec(), duals)
}
