mod common;

use fppe::market::validate;
use fppe::rmfup::{
    allocate_given_prices, price_levels, revenue_at, solve_rmfup_enumerate, solve_rmfup_heuristic,
    solve_rmfup_single_good, ENUMERATION_CAP,
};
use fppe::rmvup::solve_rmvup;
use fppe::{Error, MarketInstance, PriceMode};
use proptest::prelude::*;

fn single_good(budgets: Vec<f64>, values: Vec<f64>) -> MarketInstance {
    MarketInstance::new(budgets, values.into_iter().map(|v| vec![v]).collect()).unwrap()
}

#[test]
fn separate_copies_add_up() {
    // Two copies of the two-buyer market on disjoint buyers and goods.
    let inst = MarketInstance::new(
        vec![6.0, 4.0, 6.0, 4.0],
        vec![vec![10.0, 0.0], vec![4.0, 0.0], vec![0.0, 10.0], vec![0.0, 4.0]],
    )
    .unwrap();
    let levels: Vec<Vec<f64>> = (0..2).map(|j| price_levels(&inst, j)).collect();
    let sol = solve_rmfup_enumerate(&inst, &levels, ENUMERATION_CAP).unwrap();
    assert!((sol.revenue - 12.0).abs() < 1e-9);
    assert!(sol.p.iter().all(|&p| (p - 6.0).abs() < 1e-9));
    let heur = solve_rmfup_heuristic(&inst, 1e-2).unwrap();
    assert!((heur.revenue - 12.0).abs() < 1e-9);
    assert!(!heur.exact);
}

#[test]
fn enumeration_cap_is_enforced() {
    let inst = single_good(vec![1.0], vec![1.0]);
    let grid = vec![(0..100).map(|k| k as f64 / 100.0).collect::<Vec<_>>()];
    assert!(matches!(solve_rmfup_enumerate(&inst, &grid, 10), Err(Error::CapExceeded { .. })));
    assert!(solve_rmfup_single_good(&MarketInstance::new(vec![1.0], vec![vec![1.0, 1.0]]).unwrap()).is_err());
}

#[test]
fn allocation_respects_posted_prices() {
    let inst = MarketInstance::new(vec![1.0, 1.0], vec![vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
    let out = allocate_given_prices(&inst, &[1.5, 2.5]).unwrap();
    assert!(validate(&inst, &out, PriceMode::Fixed).unwrap().is_feasible());
    assert!(allocate_given_prices(&inst, &[1.0]).is_err());
    assert!(allocate_given_prices(&inst, &[1.0, -1.0]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn single_good_beats_a_fine_grid(
        budgets in prop::collection::vec(0.1f64..3.0, 1..6),
        seed_values in prop::collection::vec(0.0f64..3.0, 6),
    ) {
        let values = seed_values[..budgets.len()].to_vec();
        let inst = single_good(budgets, values);
        let exact = solve_rmfup_single_good(&inst).unwrap();
        let top = inst.max_value();
        let grid = (0..=((top / 1e-4) as usize + 1)).map(|k| common::single_good_revenue(&inst, k as f64 * 1e-4)).fold(0.0, f64::max);
        prop_assert!(exact.revenue >= grid - 1e-9, "exact {} grid {}", exact.revenue, grid);
        prop_assert!((exact.revenue - common::single_good_revenue(&inst, exact.p[0])).abs() <= 1e-9);
        prop_assert!(exact.exact);
    }

    #[test]
    fn fixed_prices_never_beat_variable_prices(inst in common::market(4, 3)) {
        let var = solve_rmvup(&inst).unwrap().revenue;
        let heur = solve_rmfup_heuristic(&inst, 0.05).unwrap();
        prop_assert!(validate(&inst, &heur.outcome, PriceMode::Fixed).unwrap().is_feasible());
        prop_assert!(heur.revenue <= var + 1e-7, "fixed {} variable {}", heur.revenue, var);
        prop_assert!((revenue_at(&inst, &heur.p).unwrap() - heur.revenue).abs() <= 1e-9);
    }

    #[test]
    fn posted_price_outcomes_are_variable_price_feasible(inst in common::market(4, 3), scale in 0.1f64..1.0) {
        // Any fixed-price outcome at these prices is a feasible point of the
        // variable-price LP, so the LP bounds it.
        let p: Vec<f64> = (0..inst.m()).map(|j| scale * price_levels(&inst, j).into_iter().fold(0.0, f64::max)).collect();
        let out = allocate_given_prices(&inst, &p).unwrap();
        prop_assert!(validate(&inst, &out, PriceMode::Fixed).unwrap().is_feasible());
        prop_assert!(common::variable_price_violation(&inst, &out.x, &out.b) <= 1e-7);
    }
}
