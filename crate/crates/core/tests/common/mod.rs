//! Independent oracles used by the integration tests. Nothing here calls the
//! solvers under test.

#![allow(dead_code)]

use fppe::MarketInstance;

/// Largest violation of the six equilibrium properties, written out directly
/// from their definitions. Allocations and prices below `active` count as zero.
pub fn fppe_violation(inst: &MarketInstance, x: &[Vec<f64>], p: &[f64], alpha: &[f64], active: f64) -> f64 {
    let (n, m) = (inst.n(), inst.m());
    let mut worst = 0.0f64;
    for j in 0..m {
        let sold: f64 = (0..n).map(|i| x[i][j]).sum();
        worst = worst.max(sold - 1.0);
        let top = (0..n).map(|i| alpha[i] * inst.value(i, j)).fold(0.0, f64::max);
        worst = worst.max((p[j] - top).abs());
        if p[j] > active {
            worst = worst.max((sold - 1.0).abs());
        }
        for i in 0..n {
            worst = worst.max(-x[i][j]);
            if x[i][j] > active {
                worst = worst.max((p[j] - alpha[i] * inst.value(i, j)).abs());
            }
        }
    }
    for i in 0..n {
        let spend: f64 = (0..m).map(|j| p[j] * x[i][j]).sum();
        worst = worst.max(spend - inst.budget(i));
        if spend < inst.budget(i) - active {
            worst = worst.max(1.0 - alpha[i]);
        }
        worst = worst.max(alpha[i] - 1.0).max(-alpha[i]);
    }
    worst
}

/// `sum_i min(sum_j v_ij x_ij, B_i)`.
pub fn liquid_welfare(inst: &MarketInstance, x: &[Vec<f64>]) -> f64 {
    (0..inst.n())
        .map(|i| {
            let v: f64 = (0..inst.m()).map(|j| inst.value(i, j) * x[i][j]).sum();
            v.min(inst.budget(i))
        })
        .sum()
}

/// Largest violation of supply, budget and per-pair IR for a variable-price outcome.
pub fn variable_price_violation(inst: &MarketInstance, x: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let (n, m) = (inst.n(), inst.m());
    let mut worst = 0.0f64;
    for j in 0..m {
        worst = worst.max((0..n).map(|i| x[i][j]).sum::<f64>() - 1.0);
    }
    for i in 0..n {
        worst = worst.max(b[i].iter().sum::<f64>() - inst.budget(i));
        for j in 0..m {
            worst = worst.max(-x[i][j]).max(-b[i][j]);
            worst = worst.max(b[i][j] - inst.value(i, j) * x[i][j]);
        }
    }
    worst
}

/// Objective of the variable-price revenue LP's dual at `(q, r)`, or `None`
/// when the pair is infeasible. With `s_ij = max(0, 1 - r_i)` the dual rows
/// are `r_i + s_ij >= 1` and `q_j >= v_ij s_ij`, so any feasible point is an
/// upper bound on the variable-price optimum.
pub fn rmvup_dual_bound(inst: &MarketInstance, q: &[f64], r: &[f64]) -> Option<f64> {
    if q.iter().chain(r).any(|&v| v < 0.0) {
        return None;
    }
    for i in 0..inst.n() {
        let s = (1.0 - r[i]).max(0.0);
        for j in 0..inst.m() {
            if q[j] + 1e-12 < inst.value(i, j) * s {
                return None;
            }
        }
    }
    Some(q.iter().sum::<f64>() + (0..inst.n()).map(|i| inst.budget(i) * r[i]).sum::<f64>())
}

/// Best revenue of a single good at price `price`: `min(price, sum of budgets of buyers valuing it at least price)`.
pub fn single_good_revenue(inst: &MarketInstance, price: f64) -> f64 {
    let demand: f64 = (0..inst.n()).filter(|&i| inst.value(i, 0) >= price).map(|i| inst.budget(i)).sum();
    price.min(demand)
}

/// Random markets with up to `max_n` buyers and `max_m` goods. About a third of
/// the values are zero and budgets stay away from zero.
pub fn market(max_n: usize, max_m: usize) -> impl proptest::strategy::Strategy<Value = MarketInstance> {
    use proptest::prelude::*;
    (1..=max_n, 1..=max_m).prop_flat_map(|(n, m)| {
        let value = prop_oneof![1 => Just(0.0), 2 => 0.05f64..2.0];
        (proptest::collection::vec(0.1f64..2.0, n), proptest::collection::vec(proptest::collection::vec(value, m), n))
            .prop_map(|(b, v)| MarketInstance::new(b, v).expect("generated market is valid"))
    })
}
