use fppe::harness::{gen_3d2m, gen_rounding_input, SuiteConfig};
use fppe::market::{revenue, validate};
use fppe::reduction::{
    brute_force_3d2m, extract_matching, round_solution, to_rmfup_instance, DegreeRule, ReducedMarket,
    ThreeDTwoMatchingInstance, SPECIAL_VALUE,
};
use fppe::{Error, MarketInstance, Outcome, PriceMode};
use proptest::prelude::*;

/// Largest matching by plain recursion over triplets, independent of the
/// library's bitmask search.
fn max_matching(tdm: &ThreeDTwoMatchingInstance) -> usize {
    fn go(t: &[[usize; 3]], used: &mut [Vec<bool>; 3]) -> usize {
        let Some((first, rest)) = t.split_first() else { return 0 };
        let skip = go(rest, used);
        if (0..3).any(|k| used[k][first[k]]) {
            return skip;
        }
        (0..3).for_each(|k| used[k][first[k]] = true);
        let take = 1 + go(rest, used);
        (0..3).for_each(|k| used[k][first[k]] = false);
        skip.max(take)
    }
    let sizes = tdm.set_sizes();
    let mut used = [vec![false; sizes[0]], vec![false; sizes[1]], vec![false; sizes[2]]];
    go(tdm.triplets(), &mut used)
}

#[test]
fn json_round_trip_and_degree_rule() {
    let text = r#"{"E1": ["a1", "a2"], "E2": ["b1", "b2"], "E3": ["c1", "c2"],
                   "S": [["a1","b1","c1"], ["a2","b2","c2"], ["a1","b2","c2"], ["a2","b1","c1"]]}"#;
    let tdm = ThreeDTwoMatchingInstance::from_json(text, DegreeRule::ExactlyTwo).unwrap();
    assert_eq!(tdm.num_triplets(), 4);
    let back = ThreeDTwoMatchingInstance::from_json(&tdm.to_json().unwrap(), DegreeRule::ExactlyTwo).unwrap();
    assert_eq!(back.triplets(), tdm.triplets());
    assert_eq!(brute_force_3d2m(&tdm).unwrap().len(), 2);

    let short = r#"{"E1": ["a1", "a2"], "E2": ["b1", "b2"], "E3": ["c1", "c2"],
                    "S": [["a1","b1","c1"], ["a1","b2","c2"], ["a2","b1","c2"]]}"#;
    assert!(ThreeDTwoMatchingInstance::from_json(short, DegreeRule::ExactlyTwo).is_err());
    assert!(ThreeDTwoMatchingInstance::from_json(short, DegreeRule::AtMostTwo).is_ok());
    let unknown = r#"{"E1": ["a1"], "E2": ["b1"], "E3": ["c1"], "S": [["a1","b1","zz"]]}"#;
    assert!(ThreeDTwoMatchingInstance::from_json(unknown, DegreeRule::AtMostTwo).is_err());
}

#[test]
fn foreign_markets_are_refused() {
    let inst = MarketInstance::new(vec![1.0, 2.0], vec![vec![1.0], vec![1.0]]).unwrap();
    assert!(matches!(ReducedMarket::recognize(&inst), Err(Error::Refused(_))));
    let tdm = gen_3d2m(4, &mut SuiteConfig::default().rng(0)).unwrap();
    let red = to_rmfup_instance(&tdm).unwrap();
    assert_eq!(ReducedMarket::recognize(&red.instance).unwrap().special, red.special);
}

#[test]
fn infeasible_input_is_refused() {
    let tdm = gen_3d2m(2, &mut SuiteConfig::default().rng(1)).unwrap();
    let red = to_rmfup_instance(&tdm).unwrap();
    let (n, m) = (red.instance.n(), red.m());
    let mut x = vec![vec![0.0; m]; n];
    x[red.special[0]][0] = 1.0;
    // The special buyer values the good at 2/3 but would pay 1.
    let bad = Outcome::from_prices(x, vec![1.0; m]);
    assert!(matches!(round_solution(&red, &bad), Err(Error::Refused(_))));
}

#[test]
fn everything_to_special_buyers() {
    let tdm = gen_3d2m(6, &mut SuiteConfig::default().rng(2)).unwrap();
    let red = to_rmfup_instance(&tdm).unwrap();
    let (n, m) = (red.instance.n(), red.m());
    let mut x = vec![vec![0.0; m]; n];
    for s in 0..m {
        x[red.special[s]][s] = 1.0;
    }
    let sol = Outcome::from_prices(x, vec![SPECIAL_VALUE; m]);
    let rounded = round_solution(&red, &sol).unwrap();
    assert_eq!(rounded, sol);
    assert!(extract_matching(&red, &rounded).unwrap().is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn brute_force_matches_recursion(half in 1usize..=6, seed in any::<u64>()) {
        let cfg = SuiteConfig { seed, ..SuiteConfig::default() };
        let tdm = gen_3d2m(2 * half, &mut cfg.rng(0)).unwrap();
        let found = brute_force_3d2m(&tdm).unwrap();
        prop_assert!(tdm.is_matching(&found));
        prop_assert_eq!(found.len(), max_matching(&tdm));
        prop_assert!(tdm.num_triplets() <= 4 * found.len());
    }

    #[test]
    fn rounding_keeps_revenue_and_yields_a_matching(half in 1usize..=6, seed in any::<u64>()) {
        let cfg = SuiteConfig { seed, ..SuiteConfig::default() };
        let mut rng = cfg.rng(0);
        let tdm = gen_3d2m(2 * half, &mut rng).unwrap();
        let red = to_rmfup_instance(&tdm).unwrap();
        let input = gen_rounding_input(&red, &mut rng).unwrap();
        let out = round_solution(&red, &input).unwrap();
        prop_assert!(validate(&red.instance, &out, PriceMode::Fixed).unwrap().is_feasible());
        prop_assert!(revenue(&out) >= revenue(&input) - 1e-9);
        let matching = extract_matching(&red, &out).unwrap();
        prop_assert!(tdm.is_matching(&matching));
        prop_assert!((revenue(&out) - red.normal_form_revenue(matching.len())).abs() <= 1e-9);
        // Rounding a normal form changes nothing.
        prop_assert_eq!(round_solution(&red, &out).unwrap(), out);
    }
}
