//! Instance generators and the experiment suite.
//!
//! Every random instance is drawn from its own ChaCha stream keyed by the
//! suite seed and the instance index, so suites are reproducible regardless of
//! how rows are scheduled across threads.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concave::{concave_revenue_certificate, solve_concave_eg, ConcaveMarket, ConcaveValuation};
use crate::error::{Error, Result};
use crate::fppe::{fppe_revenue_certificate, solve_fppe};
use crate::market::{validate, MarketInstance, Outcome, PriceMode};
use crate::online::{
    adversarial_instance, adversary_bound, check_trace, comparison_checks, flatten_offline, run_against_adversary,
    run_online_fppe, Adversary, AdversaryRun, OnlineBuyer, OnlineInstance,
};
use crate::reduction::{approximation_transfer_check, DegreeRule, ReducedMarket, ThreeDTwoMatchingInstance};
use crate::rmfup::solve_rmfup_single_good;
use crate::rmvup::solve_rmvup;
use crate::EQ_TOL;

/// Which family of instances a suite draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteKind {
    Static,
    LowerBound,
    Online,
    Concave,
    Matching,
}

impl SuiteKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Static => "static",
            Self::LowerBound => "lower_bound",
            Self::Online => "online",
            Self::Concave => "concave",
            Self::Matching => "matching",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub seed: u64,
    pub kind: SuiteKind,
    pub count: usize,
    /// Inclusive ranges.
    pub n: [usize; 2],
    pub m: [usize; 2],
    pub horizon: [usize; 2],
    /// Triplet counts for matching instances; must be even.
    pub triplets: [usize; 2],
    /// Probability that a valuation is zero.
    pub sparsity: f64,
    pub values: [f64; 2],
    pub budgets: [f64; 2],
    /// Sizes for the lower-bound family (the `count` field is ignored).
    pub lower_bound_ns: Vec<usize>,
    pub tol: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            kind: SuiteKind::Static,
            count: 200,
            n: [1, 6],
            m: [1, 6],
            horizon: [1, 4],
            triplets: [2, 12],
            sparsity: 0.3,
            values: [0.0, 1.0],
            budgets: [0.1, 1.0],
            lower_bound_ns: vec![2, 5, 10, 50],
            tol: EQ_TOL,
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        let range = |name: &str, r: [usize; 2], min: usize| {
            if r[0] < min || r[0] > r[1] {
                Err(Error::Invalid(format!("{name} range {r:?} is empty or starts below {min}")))
            } else {
                Ok(())
            }
        };
        range("n", self.n, 1)?;
        range("m", self.m, 1)?;
        range("horizon", self.horizon, 1)?;
        range("triplets", self.triplets, 2)?;
        if self.triplets[1] > 16 {
            return Err(Error::CapExceeded { requested: self.triplets[1] as u128, cap: 16 });
        }
        if !(0.0..1.0).contains(&self.sparsity) {
            return Err(Error::Invalid(format!("sparsity {} outside [0, 1)", self.sparsity)));
        }
        for (name, r) in [("values", self.values), ("budgets", self.budgets)] {
            if !(r[0] >= 0.0 && r[0] <= r[1] && r[1].is_finite()) {
                return Err(Error::Invalid(format!("{name} range {r:?} is invalid")));
            }
        }
        if !(self.tol > 0.0) {
            return Err(Error::Invalid(format!("tolerance {} must be positive", self.tol)));
        }
        Ok(())
    }

    /// The generator for instance `index`.
    pub fn rng(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64 + 1);
        rng
    }
}

fn draw(rng: &mut ChaCha8Rng, r: [usize; 2]) -> usize {
    rng.random_range(r[0]..=r[1])
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

fn value(rng: &mut ChaCha8Rng, cfg: &SuiteConfig) -> f64 {
    if rng.random_bool(cfg.sparsity) {
        0.0
    } else {
        uniform(rng, cfg.values)
    }
}

/// Buyer 1 with budget `n` and value `n^2`, then `n - 1` buyers with budget 1
/// and value `n`, all on one good. RMVUP earns `2n - 1` and any fixed price at
/// most `n`.
pub fn gen_lower_bound_family(n: usize) -> Result<MarketInstance> {
    if n < 2 {
        return Err(Error::Invalid(format!("the family starts at n = 2, got {n}")));
    }
    let nf = n as f64;
    let budgets: Vec<f64> = (0..n).map(|i| if i == 0 { nf } else { 1.0 }).collect();
    let values = budgets.iter().map(|&b| vec![nf * b]).collect();
    MarketInstance::new(budgets, values)
}

/// One good, buyer 1 with budget 6 and value 10, buyer 2 with budget 4 and value 4.
pub fn two_buyer_example() -> MarketInstance {
    MarketInstance::new(vec![6.0, 4.0], vec![vec![10.0], vec![4.0]]).expect("valid")
}

/// Two rounds selling a car (good 0) and a bike (good 1).
pub fn sample_online_instance() -> OnlineInstance {
    let buyers = vec![
        OnlineBuyer { budget: 2.0, interval: [1, 1], values: vec![8.0, 1.0] },
        OnlineBuyer { budget: 6.0, interval: [1, 2], values: vec![2.0, 0.0] },
        OnlineBuyer { budget: 4.0, interval: [2, 2], values: vec![1.0, 5.0] },
    ];
    OnlineInstance::new(2, buyers).expect("valid")
}

/// Triplets `(a1,b1,c1)`, `(a1,b2,c2)`, `(a2,b1,c2)`. Elements `a2`, `b2` and
/// `c1` lie in a single triplet, so this needs the relaxed degree rule.
pub fn sample_3dm_instance() -> ThreeDTwoMatchingInstance {
    let names = |p: &str| vec![format!("{p}1"), format!("{p}2")];
    let t = |a: &str, b: &str, c: &str| [a.to_string(), b.to_string(), c.to_string()];
    ThreeDTwoMatchingInstance::with_rule(
        [names("a"), names("b"), names("c")],
        vec![t("a1", "b1", "c1"), t("a1", "b2", "c2"), t("a2", "b1", "c2")],
        DegreeRule::AtMostTwo,
    )
    .expect("valid")
}

/// The two-round adversary against online algorithms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdversarialHarness {
    pub budgets: [f64; 3],
    /// Each buyer's value for the single good of every round they attend.
    pub values: [f64; 3],
    pub bound: f64,
}

impl AdversarialHarness {
    /// The instance the adversary commits to after the algorithm gave buyer 2
    /// the share `fraction` of the first good.
    pub fn branch(&self, fraction: f64) -> Result<Adversary> {
        adversarial_instance(fraction)
    }

    pub fn play(&self) -> Result<AdversaryRun> {
        run_against_adversary()
    }
}

pub fn gen_adversarial_online() -> AdversarialHarness {
    let big = 1.0 + std::f64::consts::SQRT_2;
    AdversarialHarness { budgets: [1.0, big, big], values: [1.0, big, big], bound: adversary_bound() }
}

pub fn gen_static(cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> Result<MarketInstance> {
    let n = draw(rng, cfg.n);
    let m = draw(rng, cfg.m);
    let budgets = (0..n).map(|_| uniform(rng, cfg.budgets)).collect();
    let values = (0..n).map(|_| (0..m).map(|_| value(rng, cfg)).collect()).collect();
    MarketInstance::new(budgets, values)
}

pub fn gen_online(cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> Result<OnlineInstance> {
    let horizon = draw(rng, cfg.horizon);
    let n = draw(rng, cfg.n);
    let m = draw(rng, cfg.m);
    let buyers = (0..n)
        .map(|_| {
            let s = rng.random_range(1..=horizon);
            let t = rng.random_range(s..=horizon);
            OnlineBuyer {
                budget: uniform(rng, cfg.budgets),
                interval: [s, t],
                values: (0..m).map(|_| value(rng, cfg)).collect(),
            }
        })
        .collect();
    OnlineInstance::new(horizon, buyers)
}

/// Mixed shifted-power and piecewise-linear valuations, with the configured
/// sparsity of zero valuations.
pub fn gen_concave(cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> Result<ConcaveMarket> {
    let n = draw(rng, cfg.n);
    let m = draw(rng, cfg.m);
    let budgets = (0..n).map(|_| uniform(rng, cfg.budgets)).collect();
    let scale = cfg.values[1].max(f64::MIN_POSITIVE);
    let valuations = (0..n)
        .map(|_| {
            (0..m)
                .map(|_| {
                    if rng.random_bool(cfg.sparsity) {
                        ConcaveValuation::Linear { c: 0.0 }
                    } else if rng.random_bool(0.5) {
                        ConcaveValuation::ShiftedPower {
                            c: scale * rng.random_range(0.1..2.0),
                            s: rng.random_range(0.1..2.0),
                            a: rng.random_range(0.2..1.0),
                        }
                    } else {
                        let pieces = rng.random_range(1..=3);
                        let mut points = vec![[0.0, 0.0]];
                        let mut slope = scale * rng.random_range(0.2..2.0);
                        let (mut x, mut y) = (0.0, 0.0);
                        for _ in 0..pieces {
                            let dx = rng.random_range(0.1..0.6);
                            x += dx;
                            y += slope * dx;
                            points.push([x, y]);
                            slope *= rng.random_range(0.1..1.0);
                        }
                        ConcaveValuation::PiecewiseLinear { points }
                    }
                })
                .collect()
        })
        .collect();
    ConcaveMarket::new(budgets, valuations)
}

/// A random 3D-2-matching instance with `triplets` triplets: each set gets
/// `triplets / 2` elements and each element is dealt to exactly two triplets.
pub fn gen_3d2m(triplets: usize, rng: &mut ChaCha8Rng) -> Result<ThreeDTwoMatchingInstance> {
    if triplets == 0 || triplets % 2 == 1 {
        return Err(Error::Refused(format!(
            "every element in exactly two triplets needs an even positive triplet count, got {triplets}"
        )));
    }
    let q = triplets / 2;
    let mut slots: [Vec<usize>; 3] = Default::default();
    for s in slots.iter_mut() {
        *s = (0..q).flat_map(|e| [e, e]).collect();
        s.shuffle(rng);
    }
    let list: Vec<[usize; 3]> = (0..triplets).map(|t| [slots[0][t], slots[1][t], slots[2][t]]).collect();
    ThreeDTwoMatchingInstance::from_indices([q; 3], &list, DegreeRule::ExactlyTwo)
}

/// A random outcome on a reduction market that is feasible with fixed prices:
/// prices mostly uniform on `[0.3, 1]` with the two rounding thresholds mixed
/// in, and each good split among eligible buyers in random order.
pub fn gen_rounding_input(red: &ReducedMarket, rng: &mut ChaCha8Rng) -> Result<Outcome> {
    let inst = &red.instance;
    let (n, m) = (inst.n(), inst.m());
    let p: Vec<f64> = (0..m)
        .map(|_| match rng.random_range(0..6) {
            0 => 2.0 / 3.0,
            1 => 1.0,
            _ => rng.random_range(0.3..1.0),
        })
        .collect();
    let mut left: Vec<f64> = inst.budgets().to_vec();
    let mut x = vec![vec![0.0; m]; n];
    let mut goods: Vec<usize> = (0..m).collect();
    goods.shuffle(rng);
    for s in goods {
        let mut supply: f64 = 1.0;
        let mut buyers: Vec<usize> = (0..n).filter(|&i| inst.value(i, s) >= p[s]).collect();
        buyers.shuffle(rng);
        for i in buyers {
            let want: f64 = rng.random_range(0.0..=1.0) * supply;
            let take = want.min(left[i] / p[s]);
            x[i][s] = take;
            supply -= take;
            left[i] = (left[i] - take * p[s]).max(0.0);
        }
    }
    let outcome = Outcome::from_prices(x, p);
    let report = validate(inst, &outcome, PriceMode::Fixed)?;
    if !report.is_feasible() {
        return Err(Error::Internal(format!("generated rounding input is infeasible: {report:?}")));
    }
    Ok(outcome)
}

/// One CSV row. Unused cells stay empty.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SuiteRow {
    pub kind: String,
    pub index: usize,
    pub n: usize,
    pub m: usize,
    pub horizon: Option<usize>,
    /// FPPE revenue, or the EG revenue on concave markets.
    pub fppe_rev: Option<f64>,
    /// Variable-price optimum (the concave variant on concave markets).
    pub rmvup_rev: Option<f64>,
    /// Exact fixed-price optimum where one is computed.
    pub rmfup_rev: Option<f64>,
    pub online_rev: Option<f64>,
    pub offline_rev: Option<f64>,
    /// The ratio the row's guarantee is about.
    pub ratio: Option<f64>,
    /// The guarantee that ratio is compared against.
    pub bound: Option<f64>,
    pub max_residual: Option<f64>,
    pub pass: bool,
    pub error: String,
    pub runtime_ms: f64,
}

pub const CSV_COLUMNS: [&str; 16] = [
    "kind",
    "index",
    "n",
    "m",
    "horizon",
    "fppe_rev",
    "rmvup_rev",
    "rmfup_rev",
    "online_rev",
    "offline_rev",
    "ratio",
    "bound",
    "max_residual",
    "pass",
    "error",
    "runtime_ms",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub rows: Vec<SuiteRow>,
}

impl SuiteReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.pass).count()
    }

    pub fn all_passed(&self) -> bool {
        self.failures() == 0
    }

    pub fn min_ratio(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.ratio).reduce(f64::min)
    }

    /// Writes the header (if asked) and one line per row.
    pub fn write_csv<W: Write>(&self, out: W, header: bool) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        if header {
            w.write_record(CSV_COLUMNS)?;
        }
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.kind.clone(),
                r.index.to_string(),
                r.n.to_string(),
                r.m.to_string(),
                r.horizon.map(|h| h.to_string()).unwrap_or_default(),
                opt(r.fppe_rev),
                opt(r.rmvup_rev),
                opt(r.rmfup_rev),
                opt(r.online_rev),
                opt(r.offline_rev),
                opt(r.ratio),
                opt(r.bound),
                opt(r.max_residual),
                r.pass.to_string(),
                r.error.clone(),
                format!("{:.3}", r.runtime_ms),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn static_row(cfg: &SuiteConfig, row: &mut SuiteRow, inst: &MarketInstance) -> Result<()> {
    row.n = inst.n();
    row.m = inst.m();
    let fppe = solve_fppe(inst, cfg.tol)?;
    row.max_residual = Some(fppe.max_residual());
    if inst.m() == 1 {
        row.rmfup_rev = Some(solve_rmfup_single_good(inst)?.revenue);
    }
    let cert = fppe_revenue_certificate(inst)?;
    row.fppe_rev = Some(cert.fppe_rev);
    row.rmvup_rev = Some(cert.rmvup_rev);
    row.ratio = Some(cert.ratio);
    row.bound = Some(0.5);
    row.pass = fppe.max_residual() <= cfg.tol && cert.ratio >= 0.5 - 1e-6;
    Ok(())
}

fn lower_bound_row(cfg: &SuiteConfig, row: &mut SuiteRow, size: usize) -> Result<()> {
    let inst = gen_lower_bound_family(size)?;
    row.n = inst.n();
    row.m = 1;
    let fppe = solve_fppe(&inst, cfg.tol)?;
    let rmvup = solve_rmvup(&inst)?.revenue;
    let rmfup = solve_rmfup_single_good(&inst)?.revenue;
    let nf = size as f64;
    let target = nf / (2.0 * nf - 1.0);
    row.fppe_rev = Some(fppe.revenue());
    row.rmvup_rev = Some(rmvup);
    row.rmfup_rev = Some(rmfup);
    row.ratio = Some(rmfup / rmvup);
    row.bound = Some(target);
    row.max_residual = Some(fppe.max_residual());
    row.pass = (rmfup / rmvup - target).abs() <= 1e-6 && fppe.max_residual() <= cfg.tol;
    Ok(())
}

fn online_row(cfg: &SuiteConfig, row: &mut SuiteRow, inst: &OnlineInstance) -> Result<()> {
    row.n = inst.n();
    row.m = inst.m();
    row.horizon = Some(inst.horizon());
    let trace = run_online_fppe(inst)?;
    check_trace(inst, &trace)?;
    let offline = solve_rmvup(&flatten_offline(inst)?)?.revenue;
    let ratio = if offline > 0.0 { trace.total_revenue / offline } else { 1.0 };
    let residual = trace
        .rounds
        .iter()
        .map(|r| r.outcome.max_residual())
        .fold(0.0, f64::max);
    let diag = comparison_checks(inst)?;
    row.online_rev = Some(trace.total_revenue);
    row.offline_rev = Some(offline);
    row.ratio = Some(ratio);
    row.bound = Some(0.25);
    row.max_residual = Some(residual);
    row.pass = ratio >= 0.25 - 1e-6 && residual <= cfg.tol && diag.timewise_ok && diag.buyerwise_ok;
    if !diag.violations.is_empty() {
        row.error = diag.violations.join("; ");
    }
    Ok(())
}

fn concave_row(cfg: &SuiteConfig, row: &mut SuiteRow, market: &ConcaveMarket) -> Result<()> {
    row.n = market.n();
    row.m = market.m();
    let eg = solve_concave_eg(market, cfg.tol.max(1e-5))?;
    row.max_residual = Some(eg.max_kkt());
    let cert = concave_revenue_certificate(market)?;
    row.fppe_rev = Some(cert.eg_rev);
    row.rmvup_rev = Some(cert.rmvup_rev);
    row.ratio = Some(if cert.rmvup_rev > 0.0 { cert.eg_rev / cert.rmvup_rev } else { 1.0 });
    row.bound = Some(1.0 / (cert.rho * (cert.rho + 1.0)));
    row.pass = cert.bound_ok && eg.max_kkt() <= 1e-5;
    Ok(())
}

fn matching_row(row: &mut SuiteRow, tdm: &ThreeDTwoMatchingInstance) -> Result<()> {
    let report = approximation_transfer_check(tdm, 1.0)?;
    row.n = tdm.num_elements() + tdm.num_triplets();
    row.m = tdm.num_triplets();
    row.rmfup_rev = Some(report.optimum_revenue);
    row.bound = Some(report.identity_revenue);
    row.ratio = report.rows.iter().map(|r| r.matching as f64 / report.optimum_matching as f64).reduce(f64::min);
    row.pass = report.ok();
    row.error = report.violations.join("; ");
    Ok(())
}

fn run_row(cfg: &SuiteConfig, index: usize) -> SuiteRow {
    let start = Instant::now();
    let mut row = SuiteRow { kind: cfg.kind.name().into(), index, ..SuiteRow::default() };
    let mut rng = cfg.rng(index);
    let outcome = match cfg.kind {
        SuiteKind::Static => gen_static(cfg, &mut rng).and_then(|inst| static_row(cfg, &mut row, &inst)),
        SuiteKind::LowerBound => lower_bound_row(cfg, &mut row, cfg.lower_bound_ns[index]),
        SuiteKind::Online => gen_online(cfg, &mut rng).and_then(|inst| online_row(cfg, &mut row, &inst)),
        SuiteKind::Concave => gen_concave(cfg, &mut rng).and_then(|mk| concave_row(cfg, &mut row, &mk)),
        SuiteKind::Matching => {
            let lo = cfg.triplets[0].div_ceil(2);
            let hi = cfg.triplets[1] / 2;
            let t = 2 * rng.random_range(lo..=hi.max(lo));
            gen_3d2m(t, &mut rng).and_then(|tdm| matching_row(&mut row, &tdm))
        }
    };
    if let Err(e) = outcome {
        row.pass = false;
        row.error = e.to_string();
    }
    row.runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    row
}

/// Runs every row of the suite in parallel; solver failures become failing rows.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    cfg.validate()?;
    let count = match cfg.kind {
        SuiteKind::LowerBound => cfg.lower_bound_ns.len(),
        _ => cfg.count,
    };
    let rows = (0..count).into_par_iter().map(|i| run_row(cfg, i)).collect();
    Ok(SuiteReport { rows })
}
