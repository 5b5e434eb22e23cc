//! Revenue maximization with variable unit prices.
//!
//! Each buyer may pay a different unit price for the same good, so the seller
//! solves the LP
//!
//! ```text
//! max  sum_ij b_ij
//! s.t. sum_i x_ij <= 1          (supply, per good)
//!      sum_j b_ij <= B_i        (budget, per buyer)
//!      b_ij <= v_ij x_ij        (individual rationality, per pair)
//!      x, b >= 0
//! ```
//!
//! The rows are assembled one-for-one from the program above, without presolve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpStatus, Relation};
use crate::market::{MarketInstance, Outcome};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RmvupSolution {
    pub outcome: Outcome,
    pub revenue: f64,
}

fn x_var(inst: &MarketInstance, i: usize, j: usize) -> usize {
    i * inst.m() + j
}

fn b_var(inst: &MarketInstance, i: usize, j: usize) -> usize {
    inst.n() * inst.m() + i * inst.m() + j
}

/// Builds the revenue LP; variables are `x` (row-major) followed by `b`.
pub fn rmvup_program(inst: &MarketInstance) -> LinearProgram {
    let (n, m) = (inst.n(), inst.m());
    let mut objective = vec![0.0; 2 * n * m];
    for i in 0..n {
        for j in 0..m {
            objective[b_var(inst, i, j)] = 1.0;
        }
    }
    let mut lp = LinearProgram::new(objective);
    for j in 0..m {
        let row: Vec<_> = (0..n).map(|i| (x_var(inst, i, j), 1.0)).collect();
        lp.add_sparse(&row, Relation::Le, 1.0);
    }
    for i in 0..n {
        let row: Vec<_> = (0..m).map(|j| (b_var(inst, i, j), 1.0)).collect();
        lp.add_sparse(&row, Relation::Le, inst.budget(i));
    }
    for i in 0..n {
        for j in 0..m {
            lp.add_sparse(
                &[(b_var(inst, i, j), 1.0), (x_var(inst, i, j), -inst.value(i, j))],
                Relation::Le,
                0.0,
            );
        }
    }
    lp
}

pub fn solve_rmvup(inst: &MarketInstance) -> Result<RmvupSolution> {
    let lp = rmvup_program(inst);
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Internal(format!("revenue LP reported {:?}", sol.status)));
    }
    let (n, m) = (inst.n(), inst.m());
    let mut outcome = Outcome::zero(n, m);
    for i in 0..n {
        for j in 0..m {
            outcome.x[i][j] = sol.values[x_var(inst, i, j)].max(0.0);
            outcome.b[i][j] = sol.values[b_var(inst, i, j)].max(0.0);
        }
    }
    let revenue = crate::market::revenue(&outcome);
    Ok(RmvupSolution { outcome, revenue })
}

/// Allocation maximizing liquid welfare, with its value.
///
/// Solved as an LP with one auxiliary variable per buyer standing for
/// `min(sum_j v_ij x_ij, B_i)`.
pub fn max_liquid_welfare(inst: &MarketInstance) -> Result<(Vec<Vec<f64>>, f64)> {
    let (n, m) = (inst.n(), inst.m());
    let nx = n * m;
    let mut objective = vec![0.0; nx + n];
    for w in objective.iter_mut().skip(nx) {
        *w = 1.0;
    }
    let mut lp = LinearProgram::new(objective);
    for j in 0..m {
        let row: Vec<_> = (0..n).map(|i| (i * m + j, 1.0)).collect();
        lp.add_sparse(&row, Relation::Le, 1.0);
    }
    for i in 0..n {
        lp.set_bounds(nx + i, 0.0, inst.budget(i));
        let mut row: Vec<_> = (0..m).map(|j| (i * m + j, -inst.value(i, j))).collect();
        row.push((nx + i, 1.0));
        lp.add_sparse(&row, Relation::Le, 0.0);
    }
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Internal(format!("welfare LP reported {:?}", sol.status)));
    }
    let x = (0..n)
        .map(|i| (0..m).map(|j| sol.values[i * m + j].max(0.0)).collect())
        .collect::<Vec<Vec<f64>>>();
    let lw = crate::market::liquid_welfare(inst, &x);
    Ok((x, lw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{validate, PriceMode};

    fn inst(b: &[f64], v: &[&[f64]]) -> MarketInstance {
        MarketInstance::new(b.to_vec(), v.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn example_one_revenue() {
        let i = inst(&[6.0, 4.0], &[&[10.0], &[4.0]]);
        let s = solve_rmvup(&i).unwrap();
        assert!((s.revenue - 7.6).abs() < 1e-9);
        assert!(validate(&i, &s.outcome, PriceMode::Variable).unwrap().is_feasible());
    }

    #[test]
    fn individual_rationality_binds_before_budget() {
        let i = inst(&[5.0], &[&[1.0]]);
        let s = solve_rmvup(&i).unwrap();
        assert!((s.revenue - 1.0).abs() < 1e-12);
        assert!((s.outcome.x[0][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn row_count_matches_the_program() {
        let i = inst(&[1.0, 1.0, 1.0], &[&[1.0, 0.0], &[0.5, 0.5], &[0.0, 2.0]]);
        let lp = rmvup_program(&i);
        assert_eq!(lp.constraints().len(), 3 + 2 + 6);
        assert_eq!(lp.num_vars(), 12);
    }

    #[test]
    fn welfare_of_example_one() {
        let i = inst(&[6.0, 4.0], &[&[10.0], &[4.0]]);
        let (_, lw) = max_liquid_welfare(&i).unwrap();
        assert!((lw - 7.6).abs() < 1e-9);
    }
}
