mod common;

use fppe::online::{
    check_trace, competitive_ratio, comparison_checks, flat_good, flatten_offline, offline_round_spend,
    pacing_monotonicity_check, run_online_fppe, write_trace_csv, OnlineBuyer, OnlineInstance,
};
use fppe::rmvup::solve_rmvup;
use fppe::MarketInstance;
use proptest::prelude::*;

fn buyer(budget: f64, s: usize, t: usize, values: &[f64]) -> OnlineBuyer {
    OnlineBuyer { budget, interval: [s, t], values: values.to_vec() }
}

fn sample() -> OnlineInstance {
    OnlineInstance::new(
        2,
        vec![buyer(2.0, 1, 1, &[8.0, 1.0]), buyer(6.0, 1, 2, &[2.0, 0.0]), buyer(4.0, 2, 2, &[1.0, 5.0])],
    )
    .unwrap()
}

fn online_instance() -> impl Strategy<Value = OnlineInstance> {
    (1usize..=4, 1usize..=3, 1usize..=5).prop_flat_map(|(horizon, m, n)| {
        let one = (0.1f64..2.0, 1..=horizon, 0..horizon, prop::collection::vec(prop_oneof![Just(0.0), 0.05f64..2.0], m))
            .prop_map(move |(b, s, len, v)| buyer(b, s, (s + len).min(horizon), &v));
        prop::collection::vec(one, n).prop_map(move |buyers| OnlineInstance::new(horizon, buyers).unwrap())
    })
}

#[test]
fn sample_rounds() {
    let inst = sample();
    let trace = run_online_fppe(&inst).unwrap();
    check_trace(&inst, &trace).unwrap();
    assert_eq!(trace.call_log(), vec![vec![0, 1], vec![1, 2]]);
    assert!((trace.rounds[0].revenue - 2.25).abs() < 1e-9);
    assert!((trace.rounds[1].revenue - 6.0).abs() < 1e-9);
    assert!((trace.total_revenue - 8.25).abs() < 1e-9);
    // Buyer 2 paid 0.25 in round 1 and carries the rest.
    assert!((trace.rounds[1].budgets[0] - 5.75).abs() < 1e-9);
    assert!((trace.spend(1, 1) - 0.25).abs() < 1e-9);
    assert_eq!(trace.spend(2, 1), 0.0);
    let report = competitive_ratio(&inst).unwrap();
    assert!((report.offline_rev - 9.75).abs() < 1e-6);
}

#[test]
fn budgets_carry_over() {
    // A lone buyer with budget 3 and value 2 per round pays 2, then 1.
    let inst = OnlineInstance::new(3, vec![buyer(3.0, 1, 3, &[2.0])]).unwrap();
    let trace = run_online_fppe(&inst).unwrap();
    let paid: Vec<f64> = trace.rounds.iter().map(|r| r.revenue).collect();
    assert!((paid[0] - 2.0).abs() < 1e-9 && (paid[1] - 1.0).abs() < 1e-9 && paid[2].abs() < 1e-9);
    assert_eq!(trace.remaining.len(), 4);
    assert!(trace.remaining[3][0].abs() < 1e-9);
}

#[test]
fn empty_rounds_sell_nothing() {
    let inst = OnlineInstance::new(3, vec![buyer(1.0, 3, 3, &[1.0])]).unwrap();
    let trace = run_online_fppe(&inst).unwrap();
    assert!(trace.rounds[0].active.is_empty() && trace.rounds[0].revenue == 0.0);
    assert!((trace.total_revenue - 1.0).abs() < 1e-9);
}

#[test]
fn flattening_layout() {
    let inst = sample();
    let flat = flatten_offline(&inst).unwrap();
    assert_eq!((flat.n(), flat.m()), (3, 4));
    assert_eq!(flat.values()[0], vec![8.0, 1.0, 0.0, 0.0]);
    assert_eq!(flat.values()[1], vec![2.0, 0.0, 2.0, 0.0]);
    assert_eq!(flat.values()[2], vec![0.0, 0.0, 1.0, 5.0]);
    assert_eq!(flat_good(&inst, 2, 1), 3);
    let off = solve_rmvup(&flat).unwrap();
    let per_round = offline_round_spend(&inst, &off.outcome).unwrap();
    let total: f64 = per_round.iter().flatten().sum();
    assert!((total - off.revenue).abs() < 1e-9);
}

#[test]
fn instances_are_validated() {
    assert!(OnlineInstance::new(0, vec![buyer(1.0, 1, 1, &[1.0])]).is_err());
    assert!(OnlineInstance::new(2, vec![buyer(1.0, 2, 3, &[1.0])]).is_err());
    assert!(OnlineInstance::new(2, vec![buyer(1.0, 2, 1, &[1.0])]).is_err());
    assert!(OnlineInstance::new(2, vec![buyer(1.0, 1, 1, &[1.0]), buyer(1.0, 1, 1, &[1.0, 2.0])]).is_err());
    let json = r#"{"T": 2, "m": 3, "buyers": [{"budget": 1, "interval": [1, 2], "values": [1, 2]}]}"#;
    assert!(serde_json::from_str::<OnlineInstance>(json).is_err());
}

#[test]
fn json_round_trip() {
    let inst = sample();
    let text = serde_json::to_string(&inst).unwrap();
    assert!(text.contains("\"T\":2"));
    let back: OnlineInstance = serde_json::from_str(&text).unwrap();
    assert_eq!(back.buyers().len(), 3);
    assert_eq!(back.horizon(), 2);
}

#[test]
fn trace_csv_has_a_row_per_round_buyer_good() {
    let trace = run_online_fppe(&sample()).unwrap();
    let mut out = Vec::new();
    write_trace_csv(&trace, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 2);
    assert!(text.starts_with("round,buyer,good,x,p,spend"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quarter_of_the_offline_optimum(inst in online_instance()) {
        let trace = run_online_fppe(&inst).unwrap();
        check_trace(&inst, &trace).unwrap();
        for r in &trace.rounds {
            if r.active.is_empty() {
                continue;
            }
            let values = r.active.iter().map(|&i| inst.buyers()[i].values.clone()).collect();
            let round = MarketInstance::new(r.budgets.clone(), values).unwrap();
            let v = common::fppe_violation(&round, &r.outcome.x, &r.outcome.p, &r.outcome.alpha, 1e-9);
            prop_assert!(v <= 1e-6, "round {} violation {}", r.round, v);
        }
        let report = competitive_ratio(&inst).unwrap();
        prop_assert!(report.ratio >= 0.25 - 1e-6);
        prop_assert!(report.online_rev <= report.offline_rev + 1e-6);
    }

    #[test]
    fn both_comparisons_hold(inst in online_instance()) {
        let rep = comparison_checks(&inst).unwrap();
        prop_assert!(rep.timewise_ok && rep.buyerwise_ok, "{:?}", rep.violations);
    }

    #[test]
    fn more_budget_never_lowers_multipliers(
        inst in common::market(5, 4),
        inc in prop::collection::vec(0.0f64..1.0, 5),
    ) {
        let rep = pacing_monotonicity_check(&inst, &inc[..inst.n()]).unwrap();
        prop_assert!(rep.holds, "worst change {}", rep.worst_change);
    }
}
