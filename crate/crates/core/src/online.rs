//! Online FPPE with budget carry-over.
//!
//! Buyers arrive and depart over `T` rounds; the same `m` goods are offered
//! afresh every round. In each round the algorithm computes an FPPE among the
//! buyers present, charges them, and carries the remaining budgets forward.
//! The benchmark is the offline revenue optimum over the flattened market in
//! which every (round, good) pair is a separate good.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fppe::{solve_fppe, FppeOutcome};
use crate::lp::{solve_lp, LpStatus, Relation};
use crate::market::{MarketInstance, Outcome};
use crate::rmvup::{rmvup_program, solve_rmvup};
use crate::{EQ_TOL, FEAS_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineBuyer {
    pub budget: f64,
    /// First and last active round, 1-based and inclusive.
    pub interval: [usize; 2],
    pub values: Vec<f64>,
}

impl OnlineBuyer {
    pub fn is_active(&self, t: usize) -> bool {
        self.interval[0] <= t && t <= self.interval[1]
    }

    pub fn arrival(&self) -> usize {
        self.interval[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawOnline")]
pub struct OnlineInstance {
    #[serde(rename = "T")]
    horizon: usize,
    m: usize,
    buyers: Vec<OnlineBuyer>,
}

#[derive(Deserialize)]
struct RawOnline {
    #[serde(rename = "T")]
    horizon: usize,
    #[serde(default)]
    m: Option<usize>,
    buyers: Vec<OnlineBuyer>,
}

impl TryFrom<RawOnline> for OnlineInstance {
    type Error = Error;

    fn try_from(raw: RawOnline) -> Result<Self> {
        let inst = Self::new(raw.horizon, raw.buyers)?;
        if let Some(m) = raw.m {
            if m != inst.m {
                return Err(Error::Dimension(format!("declared m = {m} but buyers value {} goods", inst.m)));
            }
        }
        Ok(inst)
    }
}

impl OnlineInstance {
    pub fn new(horizon: usize, buyers: Vec<OnlineBuyer>) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Invalid("horizon must be at least one round".into()));
        }
        let Some(first) = buyers.first() else {
            return Err(Error::Invalid("no buyers".into()));
        };
        let m = first.values.len();
        if m == 0 {
            return Err(Error::Invalid("no goods".into()));
        }
        for (i, b) in buyers.iter().enumerate() {
            if b.values.len() != m {
                return Err(Error::Dimension(format!("buyer {i} values {} goods, expected {m}", b.values.len())));
            }
            let [s, t] = b.interval;
            if !(1 <= s && s <= t && t <= horizon) {
                return Err(Error::Invalid(format!("buyer {i} interval [{s}, {t}] outside [1, {horizon}]")));
            }
            if !(b.budget.is_finite() && b.budget >= 0.0) {
                return Err(Error::Invalid(format!("buyer {i} budget {}", b.budget)));
            }
            if b.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Invalid(format!("buyer {i} has a negative or non-finite value")));
            }
        }
        Ok(Self { horizon, m, buyers })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.buyers.len()
    }

    pub fn buyers(&self) -> &[OnlineBuyer] {
        &self.buyers
    }

    /// `S(t)`: buyers whose interval contains round `t`.
    pub fn active(&self, t: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.buyers[i].is_active(t)).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Buyer indices of `S(t)`, in the order used by `outcome`.
    pub active: Vec<usize>,
    /// Remaining budgets `B_i^t` of the active buyers when the round starts.
    pub budgets: Vec<f64>,
    pub outcome: FppeOutcome,
    pub revenue: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OnlineTrace {
    pub rounds: Vec<RoundRecord>,
    /// `remaining[t - 1][i]` is `B_i^t` for `t = 1..=T + 1`; buyers not yet
    /// arrived show their full budget.
    pub remaining: Vec<Vec<f64>>,
    pub total_revenue: f64,
}

impl OnlineTrace {
    /// Spend `b_i^t` of buyer `i` in round `t` (zero when inactive).
    pub fn spend(&self, i: usize, t: usize) -> f64 {
        let r = &self.rounds[t - 1];
        r.active.iter().position(|&k| k == i).map_or(0.0, |slot| r.outcome.spend(slot))
    }

    /// The buyer sets handed to the per-round equilibrium solver.
    pub fn call_log(&self) -> Vec<Vec<usize>> {
        self.rounds.iter().map(|r| r.active.clone()).collect()
    }
}

/// Market seen in one round: active buyers with the given budgets.
fn round_market(inst: &OnlineInstance, active: &[usize], budgets: &[f64]) -> Result<MarketInstance> {
    MarketInstance::new(budgets.to_vec(), active.iter().map(|&i| inst.buyers[i].values.clone()).collect())
}

/// Runs the online FPPE algorithm.
///
/// Round `t` only reads buyers with `s_i <= t`, so no future arrival can
/// influence it. Remaining budgets within `FEAS_TOL` of zero are clamped to zero.
pub fn run_online_fppe(inst: &OnlineInstance) -> Result<OnlineTrace> {
    run_online_fppe_with_tol(inst, EQ_TOL)
}

pub fn run_online_fppe_with_tol(inst: &OnlineInstance, tol: f64) -> Result<OnlineTrace> {
    let n = inst.n();
    let mut remaining: Vec<f64> = inst.buyers.iter().map(|b| b.budget).collect();
    let mut history = vec![remaining.clone()];
    let mut rounds = Vec::with_capacity(inst.horizon);
    let mut total = 0.0;
    for t in 1..=inst.horizon {
        // Arrivals reset to the full budget, matching `B_i^{s_i} = B_i`.
        for i in 0..n {
            if inst.buyers[i].arrival() == t {
                remaining[i] = inst.buyers[i].budget;
            }
        }
        let active = inst.active(t);
        let budgets: Vec<f64> = active.iter().map(|&i| remaining[i]).collect();
        let outcome = if active.is_empty() {
            FppeOutcome::from_parts(Vec::new(), vec![0.0; inst.m], Vec::new())
        } else {
            let market = round_market(inst, &active, &budgets)?;
            solve_fppe(&market, tol).map_err(|e| match e {
                Error::NotConverged { context, iterations, residuals } => Error::NotConverged {
                    context: format!("round {t}: {context}"),
                    iterations,
                    residuals,
                },
                other => other,
            })?
        };
        let mut revenue = 0.0;
        for (slot, &i) in active.iter().enumerate() {
            let spend = outcome.spend(slot);
            revenue += spend;
            let left = remaining[i] - spend;
            remaining[i] = if left.abs() < FEAS_TOL { 0.0 } else { left };
        }
        total += revenue;
        history.push(remaining.clone());
        rounds.push(RoundRecord { round: t, active, budgets, outcome, revenue });
    }
    Ok(OnlineTrace { rounds, remaining: history, total_revenue: total })
}

/// Checks the budget bookkeeping of a trace: starting budgets, non-negative
/// carry-over, total spend within budget, and revenue conservation.
pub fn check_trace(inst: &OnlineInstance, trace: &OnlineTrace) -> Result<()> {
    let n = inst.n();
    let mut spent = vec![0.0; n];
    for r in &trace.rounds {
        for (slot, &i) in r.active.iter().enumerate() {
            if inst.buyers[i].arrival() == r.round && (r.budgets[slot] - inst.buyers[i].budget).abs() > FEAS_TOL {
                return Err(Error::Certificate(format!("buyer {i} starts round {} with {}", r.round, r.budgets[slot])));
            }
            if inst.buyers[i].arrival() > r.round {
                return Err(Error::Certificate(format!("buyer {i} seen before arrival in round {}", r.round)));
            }
            spent[i] += r.outcome.spend(slot);
        }
    }
    for (t, row) in trace.remaining.iter().enumerate() {
        if let Some(i) = row.iter().position(|&b| b < -FEAS_TOL) {
            return Err(Error::Certificate(format!("buyer {i} budget {} after round {t}", row[i])));
        }
    }
    for i in 0..n {
        if spent[i] > inst.buyers[i].budget + FEAS_TOL {
            return Err(Error::Certificate(format!("buyer {i} spent {} of {}", spent[i], inst.buyers[i].budget)));
        }
    }
    let last = trace.remaining.last().expect("initial budgets");
    let drained: f64 = (0..n).map(|i| inst.buyers[i].budget - last[i]).sum();
    if (drained - trace.total_revenue).abs() > FEAS_TOL * n as f64 {
        return Err(Error::Certificate(format!("revenue {} but budgets drained by {drained}", trace.total_revenue)));
    }
    Ok(())
}

/// Index of round `t` (1-based), good `j` in the flattened market.
pub fn flat_good(inst: &OnlineInstance, t: usize, j: usize) -> usize {
    (t - 1) * inst.m + j
}

/// The offline market: one good per (round, good), valued as in the
/// original instance inside the buyer's interval and zero outside.
pub fn flatten_offline(inst: &OnlineInstance) -> Result<MarketInstance> {
    let goods = inst.horizon * inst.m;
    let values = inst
        .buyers
        .iter()
        .map(|b| {
            let mut row = vec![0.0; goods];
            for t in b.interval[0]..=b.interval[1] {
                for j in 0..inst.m {
                    row[flat_good(inst, t, j)] = b.values[j];
                }
            }
            row
        })
        .collect();
    MarketInstance::new(inst.buyers.iter().map(|b| b.budget).collect(), values)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompetitiveReport {
    pub online_rev: f64,
    pub offline_rev: f64,
    pub ratio: f64,
}

/// Online revenue over the flattened offline optimum; fails if below 1/4.
pub fn competitive_ratio(inst: &OnlineInstance) -> Result<CompetitiveReport> {
    let trace = run_online_fppe(inst)?;
    let offline = solve_rmvup(&flatten_offline(inst)?)?;
    let report = ratio_report(trace.total_revenue, offline.revenue);
    if report.ratio < 0.25 - 1e-6 {
        return Err(Error::Certificate(format!(
            "competitive ratio {} below 1/4 on {}",
            report.ratio,
            serde_json::to_string(inst).unwrap_or_default()
        )));
    }
    Ok(report)
}

fn ratio_report(online_rev: f64, offline_rev: f64) -> CompetitiveReport {
    let ratio = if offline_rev > 1e-12 { online_rev / offline_rev } else { 1.0 };
    CompetitiveReport { online_rev, offline_rev, ratio }
}

/// `o_i^t`: offline spend of buyer `i` on the goods of round `t`, as `[t - 1][i]`.
pub fn offline_round_spend(inst: &OnlineInstance, offline: &Outcome) -> Result<Vec<Vec<f64>>> {
    let goods = inst.horizon * inst.m;
    if offline.b.len() != inst.n() || offline.b.iter().any(|r| r.len() != goods) {
        return Err(Error::Dimension(format!("offline outcome must be {}x{goods}", inst.n())));
    }
    Ok((1..=inst.horizon)
        .map(|t| {
            (0..inst.n())
                .map(|i| (0..inst.m).map(|j| offline.b[i][flat_good(inst, t, j)]).sum())
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntermediateRound {
    pub round: usize,
    pub active: Vec<usize>,
    /// `max(o_i^t, B_i^t)` for the active buyers.
    pub budgets: Vec<f64>,
    pub outcome: FppeOutcome,
}

/// Per-round FPPE over `S(t)` with budgets `max(o_i^t, B_i^t)`.
pub fn intermediate_solution(inst: &OnlineInstance, trace: &OnlineTrace, offline: &Outcome) -> Result<Vec<IntermediateRound>> {
    let o = offline_round_spend(inst, offline)?;
    trace
        .rounds
        .iter()
        .map(|r| {
            let budgets: Vec<f64> =
                r.active.iter().zip(&r.budgets).map(|(&i, &b)| o[r.round - 1][i].max(b)).collect();
            let outcome = if r.active.is_empty() {
                FppeOutcome::from_parts(Vec::new(), vec![0.0; inst.m], Vec::new())
            } else {
                solve_fppe(&round_market(inst, &r.active, &budgets)?, EQ_TOL)?
            };
            Ok(IntermediateRound { round: r.round, active: r.active.clone(), budgets, outcome })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub timewise_ok: bool,
    pub buyerwise_ok: bool,
    /// Per round: `sum_i b̂_i^t - 1/2 sum_i o_i^t`.
    pub timewise_margins: Vec<f64>,
    /// Per buyer: `sum_t b_i^t - 1/2 sum_t b̂_i^t`.
    pub buyerwise_margins: Vec<f64>,
    pub violations: Vec<String>,
}

/// Evaluates both halves of the online analysis on one instance: the
/// intermediate solution earns at least half the offline revenue of every
/// round, and every buyer spends online at least half of what they spend in
/// the intermediate solution.
pub fn comparison_checks(inst: &OnlineInstance) -> Result<ComparisonReport> {
    let trace = run_online_fppe(inst)?;
    let offline = solve_rmvup(&flatten_offline(inst)?)?;
    let o = offline_round_spend(inst, &offline.outcome)?;
    let mid = intermediate_solution(inst, &trace, &offline.outcome)?;
    let mut violations = Vec::new();

    let timewise_margins: Vec<f64> = mid
        .iter()
        .map(|r| {
            let hat: f64 = (0..r.active.len()).map(|slot| r.outcome.spend(slot)).sum();
            let off: f64 = o[r.round - 1].iter().sum();
            hat - 0.5 * off
        })
        .collect();
    for (t, &margin) in timewise_margins.iter().enumerate() {
        if margin < -1e-6 {
            violations.push(format!("time-wise comparison fails in round {} by {}", t + 1, -margin));
        }
    }

    let buyerwise_margins: Vec<f64> = (0..inst.n())
        .map(|i| {
            let online: f64 = (1..=inst.horizon).map(|t| trace.spend(i, t)).sum();
            let hat: f64 = mid
                .iter()
                .filter_map(|r| r.active.iter().position(|&k| k == i).map(|slot| r.outcome.spend(slot)))
                .sum();
            online - 0.5 * hat
        })
        .collect();
    for (i, &margin) in buyerwise_margins.iter().enumerate() {
        if margin < -1e-6 {
            violations.push(format!("buyer-wise comparison fails for buyer {i} by {}", -margin));
        }
    }

    Ok(ComparisonReport {
        timewise_ok: timewise_margins.iter().all(|&m| m >= -1e-6),
        buyerwise_ok: buyerwise_margins.iter().all(|&m| m >= -1e-6),
        timewise_margins,
        buyerwise_margins,
        violations,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PacingMonotonicity {
    pub before: Vec<f64>,
    pub after: Vec<f64>,
    /// `min_i (after_i - before_i)`; at least `-10 EQ_TOL` when monotone.
    pub worst_change: f64,
    pub holds: bool,
}

/// Re-solves the FPPE with budgets `B + increase` and compares multipliers.
pub fn pacing_monotonicity_check(inst: &MarketInstance, increase: &[f64]) -> Result<PacingMonotonicity> {
    if increase.len() != inst.n() {
        return Err(Error::Dimension(format!("{} increments for {} buyers", increase.len(), inst.n())));
    }
    if increase.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::Invalid("budget increments must be non-negative".into()));
    }
    let before = solve_fppe(inst, EQ_TOL)?.alpha;
    let raised = inst.with_budgets(inst.budgets().iter().zip(increase).map(|(b, d)| b + d).collect())?;
    let after = solve_fppe(&raised, EQ_TOL)?.alpha;
    // A buyer whose budget goes from zero to positive starts bidding at all;
    // their multiplier is not defined before, so only compare funded buyers.
    let worst_change = (0..inst.n())
        .filter(|&i| inst.budget(i) > 0.0)
        .map(|i| after[i] - before[i])
        .fold(f64::INFINITY, f64::min);
    let worst_change = if worst_change.is_finite() { worst_change } else { 0.0 };
    Ok(PacingMonotonicity { holds: worst_change >= -10.0 * EQ_TOL, before, after, worst_change })
}

/// Writes one row per (round, active buyer, good): `round,buyer,good,x,p,spend`.
/// Buyers are 0-based indices into the instance, rounds are 1-based.
pub fn write_trace_csv<W: Write>(trace: &OnlineTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["round", "buyer", "good", "x", "p", "spend"])?;
    for r in &trace.rounds {
        for (slot, &i) in r.active.iter().enumerate() {
            for (j, &p) in r.outcome.p.iter().enumerate() {
                let x = r.outcome.x[slot][j];
                w.write_record([
                    r.round.to_string(),
                    i.to_string(),
                    j.to_string(),
                    x.to_string(),
                    p.to_string(),
                    (p * x).to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// The two-round adversary against any online algorithm.
///
/// One good per round. Buyer 1 (budget 1, value 1) is present only in round 1;
/// buyer 2 (budget and value `1 + sqrt 2`) in both rounds. If the algorithm
/// gives buyer 2 less than half of the first good, a third buyer identical to
/// buyer 2 arrives for round 2 and takes the second good away from them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adversary {
    /// Share of the round-1 good the algorithm gave buyer 2.
    pub fraction: f64,
    pub arrival: bool,
    pub instance: OnlineInstance,
    /// Supremum of the revenue any algorithm can collect on this branch.
    pub best_revenue: f64,
    pub offline_revenue: f64,
    pub ratio: f64,
}

/// `(2 + sqrt 2) / 4`, the ratio both branches of the adversary allow.
pub fn adversary_bound() -> f64 {
    (2.0 + std::f64::consts::SQRT_2) / 4.0
}

fn adversary_buyers(arrival: bool) -> Vec<OnlineBuyer> {
    let big = 1.0 + std::f64::consts::SQRT_2;
    let mut buyers = vec![
        OnlineBuyer { budget: 1.0, interval: [1, 1], values: vec![1.0] },
        OnlineBuyer { budget: big, interval: [1, 2], values: vec![big] },
    ];
    if arrival {
        buyers.push(OnlineBuyer { budget: big, interval: [2, 2], values: vec![big] });
    }
    buyers
}

pub fn adversarial_instance(fraction: f64) -> Result<Adversary> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Invalid(format!("fraction {fraction} outside [0, 1]")));
    }
    let s2 = std::f64::consts::SQRT_2;
    let arrival = fraction < 0.5;
    let (best_revenue, offline_revenue) = if arrival {
        // Buyer 2 gets just under half of round 1, buyer 1 the rest, and
        // buyer 3 takes the whole second good.
        (2.0 + 1.5 * s2, 2.0 * (1.0 + s2))
    } else {
        // Half of round 1 each, then buyer 2 spends the rest of their budget.
        (1.5 + s2, 2.0 + s2)
    };
    let instance = OnlineInstance::new(2, adversary_buyers(arrival))?;
    Ok(Adversary { fraction, arrival, instance, best_revenue, offline_revenue, ratio: best_revenue / offline_revenue })
}

/// Best total revenue on the adversary's branch once the algorithm has given
/// buyer 2 exactly `fraction` of the first good, computed by LP.
pub fn adversary_revenue_given_fraction(fraction: f64) -> Result<f64> {
    let adv = adversarial_instance(fraction)?;
    let flat = flatten_offline(&adv.instance)?;
    let mut lp = rmvup_program(&flat);
    // x variables are laid out buyer-major; buyer 2 is index 1, round-1 good is 0.
    lp.add_sparse(&[(flat.m(), 1.0)], Relation::Eq, fraction);
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Internal(format!("adversary LP reported {:?}", sol.status)));
    }
    Ok(sol.objective)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdversaryRun {
    pub fraction: f64,
    pub arrival: bool,
    pub online_rev: f64,
    pub offline_rev: f64,
    pub ratio: f64,
}

/// Plays the online FPPE algorithm against the adversary.
pub fn run_against_adversary() -> Result<AdversaryRun> {
    // Round 1 is decided before the adversary commits, from buyers 1 and 2 only.
    let first = OnlineInstance::new(2, adversary_buyers(false))?;
    let market = round_market(&first, &first.active(1), &[1.0, 1.0 + std::f64::consts::SQRT_2])?;
    let fraction = solve_fppe(&market, EQ_TOL)?.x[1][0].clamp(0.0, 1.0);
    let adv = adversarial_instance(fraction)?;
    let trace = run_online_fppe(&adv.instance)?;
    let replayed = trace.rounds[0].outcome.x[1][0];
    if (replayed - fraction).abs() > 1e-9 {
        return Err(Error::Internal(format!("round 1 changed after the adversary moved: {fraction} vs {replayed}")));
    }
    let offline = solve_rmvup(&flatten_offline(&adv.instance)?)?;
    let report = ratio_report(trace.total_revenue, offline.revenue);
    Ok(AdversaryRun {
        fraction,
        arrival: adv.arrival,
        online_rev: report.online_rev,
        offline_rev: report.offline_rev,
        ratio: report.ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn buyer(budget: f64, s: usize, t: usize, values: &[f64]) -> OnlineBuyer {
        OnlineBuyer { budget, interval: [s, t], values: values.to_vec() }
    }

    #[test]
    fn single_round_single_buyer() {
        let inst = OnlineInstance::new(1, vec![buyer(5.0, 1, 1, &[1.0])]).unwrap();
        let trace = run_online_fppe(&inst).unwrap();
        assert!((trace.total_revenue - 1.0).abs() < 1e-9);
        assert!((competitive_ratio(&inst).unwrap().ratio - 1.0).abs() < 1e-9);
    }

    #[test]
    fn budget_carries_over() {
        let inst = OnlineInstance::new(2, vec![buyer(1.0, 1, 2, &[1.0])]).unwrap();
        let trace = run_online_fppe(&inst).unwrap();
        assert!((trace.rounds[0].revenue - 1.0).abs() < 1e-9);
        assert!(trace.rounds[1].revenue.abs() < 1e-9);
        assert_eq!(trace.remaining[2][0], 0.0);
        check_trace(&inst, &trace).unwrap();
    }

    #[test]
    fn late_buyer_has_zero_columns_early() {
        let inst = OnlineInstance::new(2, vec![buyer(1.0, 2, 2, &[3.0]), buyer(1.0, 1, 2, &[1.0])]).unwrap();
        let flat = flatten_offline(&inst).unwrap();
        assert_eq!(flat.values()[0], vec![0.0, 3.0]);
        assert_eq!(flat.values()[1], vec![1.0, 1.0]);
    }

    #[test]
    fn invalid_intervals_are_rejected() {
        assert!(OnlineInstance::new(2, vec![buyer(1.0, 0, 1, &[1.0])]).is_err());
        assert!(OnlineInstance::new(2, vec![buyer(1.0, 2, 3, &[1.0])]).is_err());
        assert!(OnlineInstance::new(2, vec![buyer(1.0, 2, 1, &[1.0])]).is_err());
    }

    #[test]
    fn json_uses_capital_t() {
        let inst: OnlineInstance =
            serde_json::from_str(r#"{"T":2,"buyers":[{"budget":1,"interval":[1,2],"values":[1,2]}]}"#).unwrap();
        assert_eq!(inst.horizon(), 2);
        assert_eq!(inst.m(), 2);
        let text = serde_json::to_string(&inst).unwrap();
        assert!(text.contains("\"T\":2"));
        assert!(serde_json::from_str::<OnlineInstance>(r#"{"T":1,"m":3,"buyers":[{"budget":1,"interval":[1,1],"values":[1]}]}"#).is_err());
    }

    #[test]
    fn adversary_branches() {
        let bound = adversary_bound();
        for f in [0.0, 0.3, 0.5, 0.6, 1.0] {
            let a = adversarial_instance(f).unwrap();
            assert_eq!(a.arrival, f < 0.5);
            assert!((a.ratio - bound).abs() < 1e-12);
        }
        assert!(adversarial_instance(1.5).is_err());
    }

    #[test]
    fn zero_increase_keeps_multipliers() {
        let inst = MarketInstance::new(vec![6.0, 4.0], vec![vec![10.0], vec![4.0]]).unwrap();
        let r = pacing_monotonicity_check(&inst, &[0.0, 0.0]).unwrap();
        assert!(r.holds);
        let r = pacing_monotonicity_check(&inst, &[4.0, 0.0]).unwrap();
        assert!((r.before[0] - 0.6).abs() < 1e-8 && (r.after[0] - 1.0).abs() < 1e-8);
    }
}
