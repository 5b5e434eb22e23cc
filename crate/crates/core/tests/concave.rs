mod common;

use fppe::concave::{
    check_eg_properties, concave_gap, concave_revenue_certificate, kkt_residuals, rho_general, rho_log,
    solve_concave_eg, solve_rmvup_concave, ConcaveMarket, ConcaveValuation, SEGMENTS,
};
use fppe::fppe::solve_fppe;
use fppe::harness::{gen_concave, SuiteConfig};
use fppe::rmvup::solve_rmvup;
use fppe::{Error, EQ_TOL};
use proptest::prelude::*;

fn valuation() -> impl Strategy<Value = ConcaveValuation> {
    prop_oneof![
        (0.0f64..3.0).prop_map(|c| ConcaveValuation::Linear { c }),
        (0.1f64..3.0, 0.05f64..2.0, 0.1f64..1.0).prop_map(|(c, s, a)| ConcaveValuation::ShiftedPower { c, s, a }),
        (prop::collection::vec((0.1f64..2.0, 0.0f64..1.0), 1..4), 0.1f64..3.0).prop_map(|(steps, first)| {
            let mut points = vec![[0.0, 0.0]];
            let (mut x, mut y, mut slope) = (0.0, 0.0, first);
            for (dx, shrink) in steps {
                x += dx;
                y += slope * dx;
                points.push([x, y]);
                slope *= shrink;
            }
            ConcaveValuation::PiecewiseLinear { points }
        }),
    ]
}

fn concave_market() -> impl Strategy<Value = ConcaveMarket> {
    any::<u64>().prop_map(|seed| {
        let cfg = SuiteConfig { seed, n: [1, 3], m: [1, 3], ..SuiteConfig::default() };
        gen_concave(&cfg, &mut cfg.rng(0)).unwrap()
    })
}

#[test]
fn valuations_are_validated() {
    assert!(ConcaveValuation::Linear { c: -1.0 }.validate().is_err());
    assert!(ConcaveValuation::ShiftedPower { c: 1.0, s: 0.0, a: 1.5 }.validate().is_err());
    let convex = ConcaveValuation::PiecewiseLinear { points: vec![[0.0, 0.0], [1.0, 1.0], [2.0, 3.0]] };
    assert!(convex.validate().is_err());
    let shifted = ConcaveValuation::PiecewiseLinear { points: vec![[1.0, 0.0], [2.0, 1.0]] };
    assert!(shifted.validate().is_err());
    let json = r#"{"budgets": [1.0], "valuations": [[{"kind": "shifted_power", "c": 1, "s": 0.5, "a": 0.5}]]}"#;
    let market: ConcaveMarket = serde_json::from_str(json).unwrap();
    assert_eq!(market.n(), 1);
}

#[test]
fn single_buyer_closed_form() {
    // One buyer takes the whole good; the budget decides whether they are paced.
    let v = ConcaveValuation::ShiftedPower { c: 2.0, s: 1.0, a: 0.5 };
    let (v1, d1) = (v.value(1.0), v.derivative_left(1.0));
    for budget in [0.25, 3.0] {
        let market = ConcaveMarket::new(vec![budget], vec![vec![v.clone()]]).unwrap();
        let sol = solve_concave_eg(&market, 1e-8).unwrap();
        let (alpha, p) = if v1 >= budget { (budget / v1, budget * d1 / v1) } else { (1.0, d1) };
        assert!((sol.alpha[0] - alpha).abs() < 1e-8, "alpha {} vs {alpha}", sol.alpha[0]);
        assert!((sol.p[0] - p).abs() < 1e-8, "p {} vs {p}", sol.p[0]);
        assert!((sol.x[0][0] - 1.0).abs() < 1e-8);
        assert!(sol.max_kkt() <= 1e-8);
    }
}

#[test]
fn perturbed_price_shows_in_the_residual() {
    let market = ConcaveMarket::new(vec![1.0], vec![vec![ConcaveValuation::Linear { c: 2.0 }]]).unwrap();
    let mut sol = solve_concave_eg(&market, 1e-9).unwrap();
    assert!((sol.alpha[0] - 0.5).abs() < 1e-9 && (sol.p[0] - 1.0).abs() < 1e-9);
    sol.p[0] += 0.1;
    let r = kkt_residuals(&market, &sol);
    assert!((r[1] - 0.1).abs() < 1e-8, "{r:?}");
}

#[test]
fn curvature_ratios() {
    let power = |s: f64| ConcaveMarket::new(vec![1.0], vec![vec![ConcaveValuation::ShiftedPower { c: 1.0, s, a: 0.5 }]]).unwrap();
    assert_eq!(rho_general(&power(0.0)).unwrap(), f64::INFINITY);
    // v'(0) / v'(1) = sqrt(2) for s = 1.
    assert!((rho_general(&power(1.0)).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    assert!((rho_log(&power(1.0)).unwrap() - (1.0 + 2f64.sqrt()).ln()).abs() < 1e-12);
    let kinked = ConcaveValuation::PiecewiseLinear { points: vec![[0.0, 0.0], [0.5, 1.0], [1.5, 1.5]] };
    let market = ConcaveMarket::new(vec![1.0], vec![vec![kinked]]).unwrap();
    assert_eq!(rho_general(&market).unwrap(), 4.0);
    assert!(matches!(rho_log(&market), Err(Error::Refused(_))));
    let flat = ConcaveValuation::PiecewiseLinear { points: vec![[0.0, 0.0], [0.5, 1.0], [1.0, 1.0]] };
    assert!(rho_general(&ConcaveMarket::new(vec![1.0], vec![vec![flat]]).unwrap()).is_err());
    assert!(matches!(concave_revenue_certificate(&power(0.0)), Err(Error::Refused(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conjugate_matches_a_grid(v in valuation(), alpha in 0.05f64..1.0, p in 0.0f64..3.0) {
        let exact = v.conjugate_on(alpha, p, 10.0);
        let grid = (0..=100_000).map(|k| k as f64 * 1e-4).map(|x| alpha * v.value(x) - p * x).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(grid <= exact + 1e-9, "grid {} above {}", grid, exact);
        prop_assert!(exact - grid <= 1e-3, "grid {} far below {}", grid, exact);
        if exact < 10.0 * alpha * v.derivative_right(0.0) {
            prop_assert!(v.conjugate(alpha, p) >= exact - 1e-12);
        }
    }

    #[test]
    fn derivatives_bracket_secants(v in valuation(), x in 0.01f64..3.0, h in 0.001f64..0.5) {
        let right = (v.value(x + h) - v.value(x)) / h;
        let left = (v.value(x) - v.value(x - h.min(x))) / h.min(x);
        prop_assert!(right <= v.derivative_right(x) + 1e-9);
        prop_assert!(left >= v.derivative_left(x) - 1e-9);
        prop_assert!(v.derivative_right(x) <= v.derivative_left(x) + 1e-12);
    }

    #[test]
    fn linear_markets_agree_with_pacing(inst in common::market(4, 4)) {
        let market = ConcaveMarket::linear(&inst);
        prop_assert_eq!(rho_general(&market).unwrap(), 1.0);
        let eg = solve_concave_eg(&market, 1e-6).unwrap();
        let eq = solve_fppe(&inst, EQ_TOL).unwrap();
        for (a, b) in eg.p.iter().zip(&eq.p) {
            prop_assert!((a - b).abs() <= 1e-5);
        }
        let lp = solve_rmvup(&inst).unwrap().revenue;
        let seg = solve_rmvup_concave(&market, SEGMENTS).unwrap();
        prop_assert!((seg.revenue - lp).abs() <= 1e-7 && (seg.upper - lp).abs() <= 1e-7);
    }

    #[test]
    fn equilibrium_checks(market in concave_market()) {
        let sol = solve_concave_eg(&market, 1e-6).unwrap();
        prop_assert!(sol.max_kkt() <= 1e-6);
        prop_assert!(concave_gap(&market, &sol.x, &sol.p, &sol.alpha) <= 1e-6);
        let rho = rho_general(&market).unwrap();
        let problems = check_eg_properties(&market, &sol, rho, 1e-6);
        prop_assert!(problems.is_empty(), "{:?}", problems);
        let cert = concave_revenue_certificate(&market).unwrap();
        prop_assert!(cert.bound_ok);
        prop_assert!(sol.revenue() >= cert.rmvup_rev / (rho * (rho + 1.0)) - 1e-6);
    }

    #[test]
    fn segments_beat_the_chord(market in concave_market()) {
        let seg = solve_rmvup_concave(&market, SEGMENTS).unwrap();
        let chord = solve_rmvup(&market.chord_market().unwrap()).unwrap().revenue;
        prop_assert!(seg.revenue >= chord - 1e-7, "segments {} chord {}", seg.revenue, chord);
        prop_assert!(seg.revenue <= seg.upper + 1e-7);
        for i in 0..market.n() {
            prop_assert!(seg.b[i].iter().sum::<f64>() <= market.budget(i) + 1e-7);
            for j in 0..market.m() {
                prop_assert!(seg.b[i][j] <= market.valuation(i, j).value(seg.x[i][j]) + 1e-7);
            }
        }
    }
}
