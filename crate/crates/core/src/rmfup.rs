//! Revenue maximization with fixed unit prices.
//!
//! Every buyer faces the same price `p_j` for good `j`. For fixed prices the
//! best allocation is an LP; choosing the prices is the hard (bilinear) part.
//! Exact answers are available for a single good, where the optimum lies in a
//! finite candidate set, and for caller-supplied finite candidate grids.
//! Everything else goes through a local-search heuristic whose revenue is only
//! a lower bound on the optimum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fppe::solve_fppe;
use crate::lp::{solve_lp, LinearProgram, LpStatus, Relation};
use crate::market::{revenue, MarketInstance, Outcome};
use crate::EQ_TOL;

/// Default cap on the number of price vectors [`solve_rmfup_enumerate`] will try.
pub const ENUMERATION_CAP: u128 = 1_000_000;

/// Slack allowed when comparing a value against a price for eligibility.
const ELIGIBLE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedPriceSolution {
    pub p: Vec<f64>,
    pub outcome: Outcome,
    pub revenue: f64,
    /// True when the routine that produced this solution guarantees optimality.
    pub exact: bool,
}

fn check_prices(inst: &MarketInstance, p: &[f64]) -> Result<()> {
    if p.len() != inst.m() {
        return Err(Error::Dimension(format!("{} prices for {} goods", p.len(), inst.m())));
    }
    if let Some(j) = p.iter().position(|&p| !(p.is_finite() && p >= 0.0)) {
        return Err(Error::Invalid(format!("price of good {j} is {}", p[j])));
    }
    Ok(())
}

/// Revenue-maximizing allocation at prices `p`.
///
/// Buyer `i` may receive good `j` only when `v_ij >= p_j`; payments are
/// `p_j x_ij`. Goods priced at zero are left unallocated since they earn nothing.
pub fn allocate_given_prices(inst: &MarketInstance, p: &[f64]) -> Result<Outcome> {
    check_prices(inst, p)?;
    let (n, m) = (inst.n(), inst.m());
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .filter(|&(i, j)| p[j] > 0.0 && inst.value(i, j) + ELIGIBLE_SLACK >= p[j] && inst.budget(i) > 0.0)
        .collect();
    let mut out = Outcome::zero(n, m);
    out.p = Some(p.to_vec());
    if pairs.is_empty() {
        return Ok(out);
    }
    let mut lp = LinearProgram::new(pairs.iter().map(|&(_, j)| p[j]).collect());
    for j in 0..m {
        let row: Vec<_> = pairs.iter().enumerate().filter(|(_, e)| e.1 == j).map(|(k, _)| (k, 1.0)).collect();
        if !row.is_empty() {
            lp.add_sparse(&row, Relation::Le, 1.0);
        }
    }
    for i in 0..n {
        let row: Vec<_> = pairs.iter().enumerate().filter(|(_, e)| e.0 == i).map(|(k, e)| (k, p[e.1])).collect();
        if !row.is_empty() {
            lp.add_sparse(&row, Relation::Le, inst.budget(i));
        }
    }
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Internal(format!("fixed-price allocation LP reported {:?}", sol.status)));
    }
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let x = sol.values[k].clamp(0.0, 1.0);
        out.x[i][j] = x;
        out.b[i][j] = p[j] * x;
    }
    Ok(out)
}

/// Revenue of the best allocation at prices `p`.
pub fn revenue_at(inst: &MarketInstance, p: &[f64]) -> Result<f64> {
    Ok(revenue(&allocate_given_prices(inst, p)?))
}

fn solution(inst: &MarketInstance, p: Vec<f64>, exact: bool) -> Result<FixedPriceSolution> {
    let outcome = allocate_given_prices(inst, &p)?;
    let revenue = revenue(&outcome);
    Ok(FixedPriceSolution { p, outcome, revenue, exact })
}

/// Closed-form single-good revenue `min(p, sum_{v_i >= p} B_i)`.
pub fn single_good_revenue(inst: &MarketInstance, p: f64) -> f64 {
    let demand: f64 = (0..inst.n())
        .filter(|&i| inst.value(i, 0) + ELIGIBLE_SLACK >= p)
        .map(|i| inst.budget(i))
        .sum();
    p.min(demand)
}

/// Exact optimum for one good.
///
/// Revenue `min(p, D(p))` with `D` the budget mass of buyers valuing the good
/// at least `p` is piecewise: it rises with `p` until `p` meets `D(p)`, and `D`
/// only drops at valuation levels. So the optimum is either a valuation level
/// or a budget-exhaustion point `sum_{v_k >= v_i} B_k`.
pub fn solve_rmfup_single_good(inst: &MarketInstance) -> Result<FixedPriceSolution> {
    if inst.m() != 1 {
        return Err(Error::Invalid(format!("single-good solver needs m = 1, got {}", inst.m())));
    }
    let n = inst.n();
    let mut candidates: Vec<f64> = (0..n).map(|i| inst.value(i, 0)).collect();
    for i in 0..n {
        let vi = inst.value(i, 0);
        candidates.push((0..n).filter(|&k| inst.value(k, 0) >= vi).map(|k| inst.budget(k)).sum());
    }
    candidates.push(0.0);
    let mut best = (0.0, 0.0);
    for &p in &candidates {
        let r = single_good_revenue(inst, p);
        if r > best.1 || (r == best.1 && p < best.0) {
            best = (p, r);
        }
    }
    solution(inst, vec![best.0], true)
}

/// Exact optimum over the cross product of per-good candidate price sets.
pub fn solve_rmfup_enumerate(inst: &MarketInstance, candidates: &[Vec<f64>], cap: u128) -> Result<FixedPriceSolution> {
    if candidates.len() != inst.m() {
        return Err(Error::Dimension(format!("{} candidate sets for {} goods", candidates.len(), inst.m())));
    }
    if let Some(j) = candidates.iter().position(|c| c.is_empty()) {
        return Err(Error::Invalid(format!("empty candidate set for good {j}")));
    }
    let total = candidates.iter().try_fold(1u128, |acc, c| acc.checked_mul(c.len() as u128));
    let total = match total {
        Some(t) if t <= cap => t as usize,
        other => {
            return Err(Error::CapExceeded { requested: other.unwrap_or(u128::MAX), cap });
        }
    };
    for c in candidates {
        for &p in c {
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::Invalid(format!("candidate price {p}")));
            }
        }
    }
    let decode = |mut idx: usize| -> Vec<f64> {
        let mut p = vec![0.0; candidates.len()];
        for (j, c) in candidates.iter().enumerate().rev() {
            p[j] = c[idx % c.len()];
            idx /= c.len();
        }
        p
    };
    let best = (0..total)
        .into_par_iter()
        .map(|idx| revenue_at(inst, &decode(idx)).map(|r| (r, idx)))
        .try_reduce(
            || (f64::NEG_INFINITY, usize::MAX),
            |a, b| Ok(if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a }),
        )?;
    solution(inst, decode(best.1), true)
}

/// Valuation levels and budget-exhaustion levels of good `j`, plus zero.
pub fn price_levels(inst: &MarketInstance, j: usize) -> Vec<f64> {
    let n = inst.n();
    let mut levels = vec![0.0];
    for i in 0..n {
        let vi = inst.value(i, j);
        if vi > 0.0 {
            levels.push(vi);
            let mass: f64 = (0..n).filter(|&k| inst.value(k, j) >= vi).map(|k| inst.budget(k)).sum();
            levels.push(mass.min(vi));
        }
    }
    sort_dedup(&mut levels);
    levels
}

fn sort_dedup(v: &mut Vec<f64>) {
    v.sort_by(|a, b| a.total_cmp(b));
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * (1.0 + b.abs()));
}

/// Local search over fixed prices.
///
/// Small candidate grids (at most 4096 vectors of valuation and
/// budget-exhaustion levels) are enumerated outright. Otherwise coordinate
/// descent starts from the per-good top valuations, the per-good single-good
/// optima and the FPPE prices, trying every level of one good plus steps of
/// `delta` around the current price while the others stay fixed. The result
/// is a lower bound on the optimum and is reported as not exact.
pub fn solve_rmfup_heuristic(inst: &MarketInstance, delta: f64) -> Result<FixedPriceSolution> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Invalid(format!("grid resolution must be positive, got {delta}")));
    }
    let m = inst.m();
    let levels: Vec<Vec<f64>> = (0..m).map(|j| price_levels(inst, j)).collect();
    let grid: u128 = levels.iter().map(|l| l.len() as u128).product();
    let mut best = if grid <= 4096 {
        let mut s = solve_rmfup_enumerate(inst, &levels, grid)?;
        s.exact = false;
        s
    } else {
        solution(inst, vec![0.0; m], false)?
    };

    let mut starts: Vec<Vec<f64>> = Vec::new();
    starts.push(best.p.clone());
    starts.push((0..m).map(|j| levels[j].last().copied().unwrap_or(0.0)).collect());
    starts.push(
        (0..m)
            .map(|j| {
                let column = inst.restrict_goods(&[j])?;
                Ok(solve_rmfup_single_good(&column)?.p[0])
            })
            .collect::<Result<Vec<f64>>>()?,
    );
    if let Ok(eq) = solve_fppe(inst, EQ_TOL) {
        starts.push(eq.p);
    }

    for start in starts {
        let mut p = start;
        let mut current = revenue_at(inst, &p)?;
        let mut improved = true;
        let mut rounds = 0;
        while improved && rounds < 50 {
            improved = false;
            rounds += 1;
            for j in 0..m {
                let mut trial: Vec<f64> = levels[j].clone();
                for k in 1..=5 {
                    let step = delta * k as f64;
                    trial.push(p[j] + step);
                    if p[j] >= step {
                        trial.push(p[j] - step);
                    }
                }
                for cand in trial {
                    let old = p[j];
                    p[j] = cand;
                    let r = revenue_at(inst, &p)?;
                    if r > current + 1e-12 {
                        current = r;
                        improved = true;
                    } else {
                        p[j] = old;
                    }
                }
            }
        }
        if current > best.revenue + 1e-12 {
            best = solution(inst, p, false)?;
        }
    }
    Ok(best)
}
