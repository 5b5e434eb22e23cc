//! 3D-2-matching instances and their reduction to fixed-price revenue.
//!
//! Each element becomes a buyer with budget 1/3 who values the goods of its
//! triplets at 1; each triplet becomes a good with a dedicated special buyer
//! (budget 2/3, value 2/3). Optimal fixed prices then sell a good either to its
//! special buyer at 2/3 or to its three element buyers at 1, and the goods sold
//! at 1 form a matching. [`round_solution`] brings any feasible fixed-price
//! solution into that normal form without losing revenue and
//! [`extract_matching`] reads the matching back off.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{revenue, validate, MarketInstance, Outcome, PriceMode};
use crate::rmfup::{solve_rmfup_enumerate, FixedPriceSolution};
use crate::FEAS_TOL;

pub const ELEMENT_BUDGET: f64 = 1.0 / 3.0;
pub const SPECIAL_BUDGET: f64 = 2.0 / 3.0;
pub const SPECIAL_VALUE: f64 = 2.0 / 3.0;
/// Tolerance for recognizing the reduction's rational constants.
pub const RATIONAL_TOL: f64 = 1e-9;
/// Largest triplet count accepted by [`brute_force_3d2m`].
pub const BRUTE_FORCE_CAP: usize = 20;

/// How many triplets each element may lie in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegreeRule {
    /// The 3D-2-matching condition.
    ExactlyTwo,
    /// General 3D-matching with every element in at most two triplets.
    AtMostTwo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThreeDTwoMatchingInstance {
    names: [Vec<String>; 3],
    triplets: Vec<[usize; 3]>,
    rule: DegreeRule,
}

#[derive(Serialize, Deserialize)]
struct RawTdm {
    #[serde(rename = "E1")]
    e1: Vec<String>,
    #[serde(rename = "E2")]
    e2: Vec<String>,
    #[serde(rename = "E3")]
    e3: Vec<String>,
    #[serde(rename = "S")]
    s: Vec<[String; 3]>,
}

impl ThreeDTwoMatchingInstance {
    /// A 3D-2-matching instance: every element in exactly two triplets.
    pub fn new(sets: [Vec<String>; 3], triplets: Vec<[String; 3]>) -> Result<Self> {
        Self::with_rule(sets, triplets, DegreeRule::ExactlyTwo)
    }

    pub fn with_rule(sets: [Vec<String>; 3], triplets: Vec<[String; 3]>, rule: DegreeRule) -> Result<Self> {
        if triplets.is_empty() {
            return Err(Error::Invalid("no triplets".into()));
        }
        let mut lookup: [HashMap<&str, usize>; 3] = Default::default();
        for (k, set) in sets.iter().enumerate() {
            for (idx, name) in set.iter().enumerate() {
                if lookup[k].insert(name.as_str(), idx).is_some() {
                    return Err(Error::Invalid(format!("duplicate element {name} in E{}", k + 1)));
                }
            }
        }
        let mut resolved = Vec::with_capacity(triplets.len());
        for (s, t) in triplets.iter().enumerate() {
            let mut idx = [0; 3];
            for k in 0..3 {
                idx[k] = *lookup[k]
                    .get(t[k].as_str())
                    .ok_or_else(|| Error::Invalid(format!("triplet {s} names {} which is not in E{}", t[k], k + 1)))?;
            }
            resolved.push(idx);
        }
        let inst = Self { names: sets, triplets: resolved, rule };
        for k in 0..3 {
            for e in 0..inst.names[k].len() {
                let d = inst.degree(k, e);
                let ok = match rule {
                    DegreeRule::ExactlyTwo => d == 2,
                    DegreeRule::AtMostTwo => d <= 2,
                };
                if !ok {
                    return Err(Error::Invalid(format!(
                        "element {} of E{} lies in {d} triplets ({rule:?})",
                        inst.names[k][e],
                        k + 1
                    )));
                }
            }
        }
        Ok(inst)
    }

    /// Builds from index triplets with generated names `a0, b0, c0, ...`.
    pub fn from_indices(sizes: [usize; 3], triplets: &[[usize; 3]], rule: DegreeRule) -> Result<Self> {
        let prefix = ["a", "b", "c"];
        let sets: [Vec<String>; 3] =
            std::array::from_fn(|k| (0..sizes[k]).map(|i| format!("{}{i}", prefix[k])).collect());
        let named = triplets
            .iter()
            .map(|t| std::array::from_fn(|k| sets[k].get(t[k]).cloned().unwrap_or_else(|| format!("?{}", t[k]))))
            .collect();
        Self::with_rule(sets, named, rule)
    }

    pub fn from_json(text: &str, rule: DegreeRule) -> Result<Self> {
        let raw: RawTdm = serde_json::from_str(text)?;
        Self::with_rule([raw.e1, raw.e2, raw.e3], raw.s, rule)
    }

    pub fn to_json(&self) -> Result<String> {
        let raw = RawTdm {
            e1: self.names[0].clone(),
            e2: self.names[1].clone(),
            e3: self.names[2].clone(),
            s: self.triplets.iter().map(|t| std::array::from_fn(|k| self.names[k][t[k]].clone())).collect(),
        };
        Ok(serde_json::to_string_pretty(&raw)?)
    }

    pub fn rule(&self) -> DegreeRule {
        self.rule
    }

    pub fn set_sizes(&self) -> [usize; 3] {
        std::array::from_fn(|k| self.names[k].len())
    }

    pub fn num_elements(&self) -> usize {
        self.names.iter().map(Vec::len).sum()
    }

    /// `m = |S|`.
    pub fn num_triplets(&self) -> usize {
        self.triplets.len()
    }

    pub fn triplets(&self) -> &[[usize; 3]] {
        &self.triplets
    }

    pub fn degree(&self, set: usize, element: usize) -> usize {
        self.triplets.iter().filter(|t| t[set] == element).count()
    }

    /// Global element index: E1 first, then E2, then E3.
    pub fn element_index(&self, set: usize, element: usize) -> usize {
        self.names[..set].iter().map(Vec::len).sum::<usize>() + element
    }

    /// The three global element indices of triplet `s`.
    pub fn members(&self, s: usize) -> [usize; 3] {
        std::array::from_fn(|k| self.element_index(k, self.triplets[s][k]))
    }

    /// Whether the listed triplets are pairwise element-disjoint.
    pub fn is_matching(&self, chosen: &[usize]) -> bool {
        let mut used = vec![false; self.num_elements()];
        for &s in chosen {
            if s >= self.num_triplets() {
                return false;
            }
            for e in self.members(s) {
                if std::mem::replace(&mut used[e], true) {
                    return false;
                }
            }
        }
        true
    }
}

/// Maximum matching by branch and bound over include/exclude decisions.
pub fn brute_force_3d2m(tdm: &ThreeDTwoMatchingInstance) -> Result<Vec<usize>> {
    let m = tdm.num_triplets();
    if m > BRUTE_FORCE_CAP {
        return Err(Error::CapExceeded { requested: m as u128, cap: BRUTE_FORCE_CAP as u128 });
    }
    let masks: Vec<u128> = (0..m).map(|s| tdm.members(s).iter().fold(0u128, |acc, &e| acc | (1u128 << e))).collect();
    let mut best = Vec::new();
    let mut current = Vec::new();
    fn search(s: usize, used: u128, masks: &[u128], current: &mut Vec<usize>, best: &mut Vec<usize>) {
        if current.len() + (masks.len() - s) <= best.len() {
            return;
        }
        if s == masks.len() {
            *best = current.clone();
            return;
        }
        if used & masks[s] == 0 {
            current.push(s);
            search(s + 1, used | masks[s], masks, current, best);
            current.pop();
        }
        search(s + 1, used, masks, current, best);
    }
    search(0, 0, &masks, &mut current, &mut best);
    Ok(best)
}

/// A market recognized as the image of a matching instance.
#[derive(Debug, Clone)]
pub struct ReducedMarket {
    pub instance: MarketInstance,
    /// Buyer index of each element buyer.
    pub elements: Vec<usize>,
    /// Buyer index of the special buyer of each good.
    pub special: Vec<usize>,
    /// Buyer indices of the element buyers valuing each good.
    pub members: Vec<Vec<usize>>,
}

/// Builds the fixed-price market: element buyers in E1, E2, E3 order, then
/// one special buyer per triplet.
pub fn to_rmfup_instance(tdm: &ThreeDTwoMatchingInstance) -> Result<ReducedMarket> {
    let ne = tdm.num_elements();
    let m = tdm.num_triplets();
    let mut budgets = vec![ELEMENT_BUDGET; ne];
    budgets.extend(std::iter::repeat_n(SPECIAL_BUDGET, m));
    let mut values = vec![vec![0.0; m]; ne + m];
    for s in 0..m {
        for e in tdm.members(s) {
            values[e][s] = 1.0;
        }
        values[ne + s][s] = SPECIAL_VALUE;
    }
    let instance = MarketInstance::new(budgets, values)?;
    ReducedMarket::recognize(&instance)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= RATIONAL_TOL
}

impl ReducedMarket {
    /// Recovers the reduction structure from a bare market, refusing anything
    /// that is not of the reduction's form.
    pub fn recognize(instance: &MarketInstance) -> Result<Self> {
        let (n, m) = (instance.n(), instance.m());
        let refuse = |why: String| Err(Error::Refused(format!("not a reduction market: {why}")));
        let mut elements = Vec::new();
        let mut special = vec![usize::MAX; m];
        let mut members = vec![Vec::new(); m];
        for i in 0..n {
            let row = &instance.values()[i];
            let b = instance.budget(i);
            if close(b, ELEMENT_BUDGET) {
                if row.iter().any(|&v| !(v == 0.0 || close(v, 1.0))) {
                    return refuse(format!("element buyer {i} has a value other than 0 or 1"));
                }
                elements.push(i);
                for (s, &v) in row.iter().enumerate() {
                    if v > 0.0 {
                        members[s].push(i);
                    }
                }
            } else if close(b, SPECIAL_BUDGET) {
                let positive: Vec<usize> = (0..m).filter(|&s| row[s] > 0.0).collect();
                if positive.len() != 1 || !close(row[positive[0]], SPECIAL_VALUE) {
                    return refuse(format!("special buyer {i} must value exactly one good at 2/3"));
                }
                let s = positive[0];
                if special[s] != usize::MAX {
                    return refuse(format!("good {s} has two special buyers"));
                }
                special[s] = i;
            } else {
                return refuse(format!("buyer {i} has budget {b}"));
            }
        }
        for s in 0..m {
            if special[s] == usize::MAX {
                return refuse(format!("good {s} has no special buyer"));
            }
            if members[s].len() != 3 {
                return refuse(format!("good {s} is valued by {} element buyers", members[s].len()));
            }
        }
        Ok(Self { instance: instance.clone(), elements, special, members })
    }

    pub fn m(&self) -> usize {
        self.instance.m()
    }

    /// Revenue of a normal-form solution whose goods at price 1 form `matching`.
    pub fn normal_form_revenue(&self, matching_size: usize) -> f64 {
        SPECIAL_VALUE * (self.m() - matching_size) as f64 + matching_size as f64
    }
}

/// Rounds a fixed-price solution to normal form in four phases, each acting
/// on the output of the previous one.
///
/// 1. Prices at most 2/3 become 2/3, higher prices become 1.
/// 2. Goods whose element buyers paid at most 2/3 go entirely to their
///    special buyer at 2/3.
/// 3. Every element buyer still buying picks the remaining good on which they
///    spent most and spends their whole budget (1/3) there, nothing elsewhere.
/// 4. Goods at price 1 that collect at most 2/3 from element buyers go to
///    their special buyer at 2/3.
///
/// The input must be feasible with fixed prices on a reduction market.
pub fn round_solution(red: &ReducedMarket, solution: &Outcome) -> Result<Outcome> {
    let inst = &red.instance;
    let (n, m) = (inst.n(), inst.m());
    let report = validate(inst, solution, PriceMode::Fixed)?;
    if report.max_violation() > FEAS_TOL {
        return Err(Error::Refused(format!(
            "solution is not feasible with fixed prices (violation {})",
            report.max_violation()
        )));
    }
    let p_in = solution.p.as_ref().expect("validated in fixed mode");
    // Payments as implied by the fixed prices.
    let mut b: Vec<Vec<f64>> = (0..n).map(|i| (0..m).map(|s| p_in[s] * solution.x[i][s]).collect()).collect();

    // Phase I.
    let mut p: Vec<f64> = p_in.iter().map(|&p| if p <= SPECIAL_VALUE + RATIONAL_TOL { SPECIAL_VALUE } else { 1.0 }).collect();

    let to_special = |s: usize, b: &mut Vec<Vec<f64>>, p: &mut Vec<f64>| {
        for row in b.iter_mut() {
            row[s] = 0.0;
        }
        b[red.special[s]][s] = SPECIAL_VALUE;
        p[s] = SPECIAL_VALUE;
    };
    let element_revenue = |s: usize, b: &Vec<Vec<f64>>| -> f64 { red.elements.iter().map(|&e| b[e][s]).sum() };

    // Phase II.
    for s in 0..m {
        if element_revenue(s, &b) <= SPECIAL_VALUE + RATIONAL_TOL {
            to_special(s, &mut b, &mut p);
        }
    }

    // Phase III. After phase II element buyers only pay on goods priced at 1.
    for &e in &red.elements {
        let pick = (0..m)
            .filter(|&s| b[e][s] > 0.0)
            .max_by(|&a, &c| b[e][a].total_cmp(&b[e][c]).then(c.cmp(&a)));
        if let Some(s) = pick {
            for t in 0..m {
                b[e][t] = 0.0;
            }
            b[e][s] = ELEMENT_BUDGET;
        }
    }

    // Phase IV.
    for s in 0..m {
        if close(p[s], 1.0) && element_revenue(s, &b) <= SPECIAL_VALUE + RATIONAL_TOL {
            to_special(s, &mut b, &mut p);
        }
    }

    let x = (0..n).map(|i| (0..m).map(|s| b[i][s] / p[s]).collect()).collect();
    Ok(Outcome { x, b, p: Some(p) })
}

/// Checks the normal form produced by [`round_solution`]: prices in {2/3, 1},
/// goods at 2/3 wholly bought by their special buyer, goods at 1 bought by
/// exactly three element buyers paying 1/3 each.
pub fn check_normal_form(red: &ReducedMarket, sol: &Outcome) -> Result<()> {
    let p = sol.p.as_ref().ok_or_else(|| Error::Invalid("solution has no prices".into()))?;
    for s in 0..red.m() {
        let payers: Vec<usize> = (0..red.instance.n()).filter(|&i| sol.b[i][s] > RATIONAL_TOL).collect();
        if close(p[s], SPECIAL_VALUE) {
            if payers != [red.special[s]] || !close(sol.b[red.special[s]][s], SPECIAL_VALUE) {
                return Err(Error::Certificate(format!("good {s} at 2/3 is not sold wholly to its special buyer")));
            }
        } else if close(p[s], 1.0) {
            let ok = payers.len() == 3
                && payers.iter().all(|&i| red.members[s].contains(&i) && close(sol.b[i][s], ELEMENT_BUDGET));
            if !ok {
                return Err(Error::Certificate(format!("good {s} at 1 is not sold to three element buyers")));
            }
        } else {
            return Err(Error::Certificate(format!("good {s} has price {}", p[s])));
        }
    }
    Ok(())
}

/// Goods priced at 1 in a normal-form solution; they must be element-disjoint.
pub fn extract_matching(red: &ReducedMarket, rounded: &Outcome) -> Result<Vec<usize>> {
    check_normal_form(red, rounded)?;
    let p = rounded.p.as_ref().expect("checked");
    let chosen: Vec<usize> = (0..red.m()).filter(|&s| close(p[s], 1.0)).collect();
    let mut used = vec![false; red.instance.n()];
    for &s in &chosen {
        for &e in &red.members[s] {
            if std::mem::replace(&mut used[e], true) {
                return Err(Error::Internal(format!("goods at price 1 share element buyer {e}; rounding is broken")));
            }
        }
    }
    Ok(chosen)
}

/// Exact fixed-price optimum of a reduction market over prices {2/3, 1}^m.
pub fn exact_reduced_revenue(red: &ReducedMarket) -> Result<FixedPriceSolution> {
    let grid = vec![vec![SPECIAL_VALUE, 1.0]; red.m()];
    solve_rmfup_enumerate(&red.instance, &grid, crate::rmfup::ENUMERATION_CAP)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferRow {
    pub revenue: f64,
    /// Achieved approximation ratio `revenue / OPT`.
    pub rho: f64,
    pub rounded_revenue: f64,
    pub matching: usize,
    /// `|M̂| / |M*| - (9 rho - 8)`.
    pub slack: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferReport {
    pub m: usize,
    pub optimum_matching: usize,
    pub optimum_revenue: f64,
    /// `(2/3)(m - |M*|) + |M*|`.
    pub identity_revenue: f64,
    pub identity_ok: bool,
    /// `m <= 4 |M*|`.
    pub matching_bound_ok: bool,
    pub rows: Vec<TransferRow>,
    pub violations: Vec<String>,
}

impl TransferReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Rounds one feasible solution and compares the extracted matching with the
/// optimum: `|M̂| / |M*| >= 9 rho - 8` for the achieved `rho`.
pub fn transfer_row(red: &ReducedMarket, solution: &Outcome, opt_revenue: f64, optimum_matching: usize) -> Result<TransferRow> {
    let rev = revenue(solution);
    let rounded = round_solution(red, solution)?;
    let rounded_revenue = revenue(&rounded);
    let matching = extract_matching(red, &rounded)?.len();
    let rho = rev / opt_revenue;
    let slack = matching as f64 / optimum_matching as f64 - (9.0 * rho - 8.0);
    Ok(TransferRow { revenue: rev, rho, rounded_revenue, matching, slack })
}

/// Approximation-transfer check on one matching instance.
///
/// Every price vector in {2/3, 1}^m whose best allocation is at least
/// `rho`-optimal is rounded, its matching extracted and compared against the
/// brute-force optimum. The report also carries the revenue identity and the
/// bound `m <= 4 |M*|`.
pub fn approximation_transfer_check(tdm: &ThreeDTwoMatchingInstance, rho: f64) -> Result<TransferReport> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Invalid(format!("rho must lie in (0, 1], got {rho}")));
    }
    let red = to_rmfup_instance(tdm)?;
    let m = red.m();
    if m > 16 {
        return Err(Error::CapExceeded { requested: 1u128 << m, cap: 1 << 16 });
    }
    let optimum_matching = brute_force_3d2m(tdm)?.len();
    let candidates: Vec<(Vec<f64>, Outcome)> = (0u64..(1u64 << m))
        .into_par_iter()
        .map(|mask| {
            let p: Vec<f64> = (0..m).map(|s| if mask >> s & 1 == 1 { 1.0 } else { SPECIAL_VALUE }).collect();
            crate::rmfup::allocate_given_prices(&red.instance, &p).map(|sol| (p, sol))
        })
        .collect::<Result<_>>()?;
    let best = candidates.iter().map(|(_, sol)| revenue(sol)).fold(0.0, f64::max);
    let identity_revenue = red.normal_form_revenue(optimum_matching);
    let identity_ok = (best - identity_revenue).abs() <= RATIONAL_TOL;
    let matching_bound_ok = m <= 4 * optimum_matching;
    let mut violations = Vec::new();
    if !identity_ok {
        violations.push(format!("optimal revenue {} but identity gives {identity_revenue}", best));
    }
    if !matching_bound_ok {
        violations.push(format!("m = {m} exceeds 4 |M*| = {}", 4 * optimum_matching));
    }
    let mut rows = Vec::new();
    for (p, sol) in &candidates {
        if revenue(sol) + RATIONAL_TOL < rho * best {
            continue;
        }
        let row = transfer_row(&red, sol, best, optimum_matching)?;
        if row.rounded_revenue + RATIONAL_TOL < row.revenue {
            violations.push(format!("rounding lost revenue at prices {p:?}"));
        }
        if row.slack < -RATIONAL_TOL {
            violations.push(format!("matching {} below (9 rho - 8) |M*| at rho {}", row.matching, row.rho));
        }
        rows.push(row);
    }
    Ok(TransferReport {
        m,
        optimum_matching,
        optimum_revenue: best,
        identity_revenue,
        identity_ok,
        matching_bound_ok,
        rows,
        violations,
    })
}
