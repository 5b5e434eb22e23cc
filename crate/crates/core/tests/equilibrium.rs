mod common;

use fppe::fppe::{
    eg_gap, fppe_revenue_certificate, solve_fppe, solve_fppe_with, utility_gaps, verify_fppe, FppeOptions, FppeOutcome,
    Init,
};
use fppe::market::{liquid_welfare, revenue, validate, ViolationKind};
use fppe::rmvup::{max_liquid_welfare, solve_rmvup};
use fppe::{MarketInstance, Outcome, PriceMode, EQ_TOL};
use proptest::prelude::*;

fn two_buyers() -> MarketInstance {
    MarketInstance::new(vec![6.0, 4.0], vec![vec![10.0], vec![4.0]]).unwrap()
}

#[test]
fn validation_flags_each_constraint() {
    let inst = two_buyers();
    let ok = Outcome { x: vec![vec![0.6], vec![0.4]], b: vec![vec![6.0], vec![1.6]], p: None };
    assert!(validate(&inst, &ok, PriceMode::Variable).unwrap().is_feasible());
    // Different unit prices are fine in variable mode but not with a posted price.
    let posted = Outcome { p: Some(vec![10.0]), ..ok.clone() };
    let report = validate(&inst, &posted, PriceMode::Fixed).unwrap();
    assert!(report.violations.iter().any(|v| matches!(v.kind, ViolationKind::FixedPrice { buyer: 1, .. })));

    let over = Outcome { x: vec![vec![0.7], vec![0.4]], b: vec![vec![6.0], vec![1.6]], p: None };
    let report = validate(&inst, &over, PriceMode::Variable).unwrap();
    assert!(matches!(report.violations[..], [v] if v.kind == ViolationKind::Supply { good: 0 }));

    let greedy = Outcome { x: vec![vec![0.6], vec![0.4]], b: vec![vec![6.5], vec![1.7]], p: None };
    let kinds: Vec<_> = validate(&inst, &greedy, PriceMode::Variable).unwrap().violations.iter().map(|v| v.kind).collect();
    assert!(kinds.contains(&ViolationKind::Budget { buyer: 0 }));
    assert!(kinds.contains(&ViolationKind::IndividualRationality { buyer: 1, good: 0 }));

    assert!(validate(&inst, &ok, PriceMode::Fixed).is_err());
    let short = Outcome { x: vec![vec![0.6]], b: vec![vec![6.0]], p: None };
    assert!(validate(&inst, &short, PriceMode::Variable).is_err());
}

#[test]
fn revenue_and_liquid_welfare() {
    let inst = two_buyers();
    let x = vec![vec![0.6], vec![0.4]];
    let out = Outcome::from_prices(x.clone(), vec![10.0]);
    assert_eq!(revenue(&out), 10.0);
    // Buyer 1 gets value 6 (capped at 6), buyer 2 value 1.6.
    assert!((liquid_welfare(&inst, &x) - 7.6).abs() < 1e-12);
    assert!((common::liquid_welfare(&inst, &x) - 7.6).abs() < 1e-12);
    let (_, best) = max_liquid_welfare(&inst).unwrap();
    assert!((best - 7.6).abs() < 1e-9);
}

#[test]
fn invalid_instances_are_rejected() {
    assert!(MarketInstance::new(vec![], vec![]).is_err());
    assert!(MarketInstance::new(vec![-1.0], vec![vec![1.0]]).is_err());
    assert!(MarketInstance::new(vec![1.0], vec![vec![f64::NAN]]).is_err());
    assert!(MarketInstance::new(vec![1.0, 1.0], vec![vec![1.0], vec![1.0, 2.0]]).is_err());
}

#[test]
fn two_buyer_equilibrium() {
    // Buyer 1 bids 10 alpha, buyer 2 bids 4; buyer 1 is paced to 0.6 and
    // buys the whole good at price 6.
    let eq = solve_fppe(&two_buyers(), EQ_TOL).unwrap();
    assert!((eq.p[0] - 6.0).abs() < 1e-9);
    assert!((eq.alpha[0] - 0.6).abs() < 1e-9);
    assert!((eq.revenue() - 6.0).abs() < 1e-9);
}

#[test]
fn verify_rejects_non_equilibria() {
    let inst = two_buyers();
    // Budget-feasible but buyer 2 is overpaced and the price is not the top bid.
    let bad = FppeOutcome::from_parts(vec![vec![0.5], vec![0.5]], vec![4.0], vec![0.4, 1.0]);
    let res = verify_fppe(&inst, &bad);
    assert!(res.iter().any(|&r| r > 0.1), "{res:?}");
    let good = FppeOutcome::from_parts(vec![vec![1.0], vec![0.0]], vec![6.0], vec![0.6, 1.0]);
    assert!(verify_fppe(&inst, &good).iter().all(|&r| r <= 1e-12));
    assert!(common::fppe_violation(&inst, &good.x, &good.p, &good.alpha, 1e-12) <= 1e-12);
}

#[test]
fn zero_budget_buyer_is_unpaced_to_zero() {
    let inst = MarketInstance::new(vec![0.0, 1.0], vec![vec![5.0], vec![1.0]]).unwrap();
    let eq = solve_fppe(&inst, EQ_TOL).unwrap();
    assert_eq!(eq.alpha[0], 0.0);
    assert!((eq.p[0] - 1.0).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn equilibrium_passes_independent_check(inst in common::market(5, 5)) {
        let eq = solve_fppe(&inst, EQ_TOL).unwrap();
        let v = common::fppe_violation(&inst, &eq.x, &eq.p, &eq.alpha, 1e-9);
        prop_assert!(v <= 1e-6, "violation {}", v);
        prop_assert!(eq.gap.abs() <= 1e-6);
        prop_assert!(eg_gap(&inst, &eq.x, &eq.p, &eq.alpha) <= 1e-6);
    }

    #[test]
    fn every_buyer_gets_a_best_bundle(inst in common::market(4, 4)) {
        let eq = solve_fppe(&inst, EQ_TOL).unwrap();
        for (i, g) in utility_gaps(&inst, &eq.x, &eq.p).unwrap().into_iter().enumerate() {
            prop_assert!(g <= 1e-6, "buyer {} could gain {}", i, g);
        }
    }

    #[test]
    fn prices_do_not_depend_on_the_start(inst in common::market(5, 5), seed in 0u64..1000) {
        let a = solve_fppe_with(&inst, &FppeOptions { init: Init::Uniform, ..FppeOptions::default() }).unwrap();
        let b = solve_fppe_with(&inst, &FppeOptions { init: Init::Seeded(seed), ..FppeOptions::default() }).unwrap();
        for (x, y) in a.p.iter().zip(&b.p) {
            prop_assert!((x - y).abs() <= 1e-5);
        }
    }

    #[test]
    fn scaling_budgets_and_values_scales_prices(inst in common::market(4, 4), c in 0.1f64..10.0) {
        let scaled = MarketInstance::new(
            inst.budgets().iter().map(|b| b * c).collect(),
            inst.values().iter().map(|r| r.iter().map(|v| v * c).collect()).collect(),
        ).unwrap();
        let a = solve_fppe(&inst, EQ_TOL).unwrap();
        let b = solve_fppe(&scaled, EQ_TOL).unwrap();
        for (x, y) in a.p.iter().zip(&b.p) {
            prop_assert!((x * c - y).abs() <= 1e-6 * c.max(1.0));
        }
        prop_assert!((a.revenue() * c - b.revenue()).abs() <= 1e-6 * c.max(1.0));
    }

    #[test]
    fn half_of_the_variable_price_optimum(inst in common::market(6, 6)) {
        let cert = fppe_revenue_certificate(&inst).unwrap();
        prop_assert!(cert.ratio >= 0.5 - 1e-6);
        prop_assert!((cert.liquid_welfare - cert.fppe_rev).abs() <= 1e-6);
        let opt = solve_rmvup(&inst).unwrap();
        prop_assert!(common::variable_price_violation(&inst, &opt.outcome.x, &opt.outcome.b) <= 1e-7);
        // Revenue never exceeds the largest liquid welfare.
        let (_, lw) = max_liquid_welfare(&inst).unwrap();
        prop_assert!(opt.revenue <= lw + 1e-7);
    }

    #[test]
    fn rmvup_matches_an_explicit_dual(inst in common::market(4, 4)) {
        // With q_j the top value on good j, r = 0 is always dual feasible.
        let q: Vec<f64> = (0..inst.m()).map(|j| (0..inst.n()).map(|i| inst.value(i, j)).fold(0.0, f64::max)).collect();
        let bound = common::rmvup_dual_bound(&inst, &q, &vec![0.0; inst.n()]).unwrap();
        let opt = solve_rmvup(&inst).unwrap();
        prop_assert!(opt.revenue <= bound + 1e-9);
        prop_assert!(opt.revenue <= inst.budgets().iter().sum::<f64>() + 1e-9);
    }
}
