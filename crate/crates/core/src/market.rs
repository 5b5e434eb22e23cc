//! Markets of divisible goods and the bookkeeping shared by every solver.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, FEAS_TOL};

/// `n` buyers with budgets and linear valuations over `m` divisible goods.
///
/// Valuations are money per unit of good; a buyer receiving the fraction
/// `x_ij` of good `j` gets value `values[i][j] * x_ij`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance")]
pub struct MarketInstance {
    budgets: Vec<f64>,
    values: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawInstance {
    budgets: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl TryFrom<RawInstance> for MarketInstance {
    type Error = Error;

    fn try_from(raw: RawInstance) -> Result<Self> {
        MarketInstance::new(raw.budgets, raw.values)
    }
}

impl MarketInstance {
    pub fn new(budgets: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if budgets.is_empty() {
            return Err(Error::Invalid("a market needs at least one buyer".into()));
        }
        if budgets.len() != values.len() {
            return Err(Error::Dimension(format!(
                "{} budgets but {} valuation rows",
                budgets.len(),
                values.len()
            )));
        }
        let m = values[0].len();
        if m == 0 {
            return Err(Error::Invalid("a market needs at least one good".into()));
        }
        for (i, row) in values.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Dimension(format!(
                    "valuation row {i} has {} entries, expected {m}",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::Invalid(format!("valuation {v} of buyer {i} is not a finite nonnegative number")));
            }
        }
        if let Some((i, b)) = budgets.iter().enumerate().find(|(_, b)| !(b.is_finite() && **b >= 0.0)) {
            return Err(Error::Invalid(format!("budget {b} of buyer {i} is not a finite nonnegative number")));
        }
        Ok(Self { budgets, values })
    }

    /// Number of buyers.
    pub fn n(&self) -> usize {
        self.budgets.len()
    }

    /// Number of goods.
    pub fn m(&self) -> usize {
        self.values[0].len()
    }

    pub fn budgets(&self) -> &[f64] {
        &self.budgets
    }

    pub fn budget(&self, i: usize) -> f64 {
        self.budgets[i]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    /// Same valuations, different budgets.
    pub fn with_budgets(&self, budgets: Vec<f64>) -> Result<Self> {
        Self::new(budgets, self.values.clone())
    }

    /// The sub-market made of the listed buyers, in the listed order.
    pub fn restrict_buyers(&self, buyers: &[usize]) -> Result<Self> {
        Self::new(
            buyers.iter().map(|&i| self.budgets[i]).collect(),
            buyers.iter().map(|&i| self.values[i].clone()).collect(),
        )
    }

    /// The sub-market made of the listed goods, same buyers and budgets.
    pub fn restrict_goods(&self, goods: &[usize]) -> Result<Self> {
        Self::new(
            self.budgets.clone(),
            self.values.iter().map(|row| goods.iter().map(|&j| row[j]).collect()).collect(),
        )
    }

    /// Largest valuation in the market, used for scaling tolerances.
    pub fn max_value(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |a, &v| a.max(v))
    }

    pub(crate) fn check_matrix(&self, what: &str, mat: &[Vec<f64>]) -> Result<()> {
        if mat.len() != self.n() || mat.iter().any(|r| r.len() != self.m()) {
            return Err(Error::Dimension(format!(
                "{what} must be {}x{}",
                self.n(),
                self.m()
            )));
        }
        Ok(())
    }
}

/// Allocation `x`, payments `b` and optionally a unit price per good.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub x: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
}

impl Outcome {
    /// Nothing allocated, nothing paid.
    pub fn zero(n: usize, m: usize) -> Self {
        Self {
            x: vec![vec![0.0; m]; n],
            b: vec![vec![0.0; m]; n],
            p: None,
        }
    }

    /// Outcome with payments `b_ij = p_j x_ij`.
    pub fn from_prices(x: Vec<Vec<f64>>, p: Vec<f64>) -> Self {
        let b = x
            .iter()
            .map(|row| row.iter().zip(&p).map(|(x, p)| x * p).collect())
            .collect();
        Self { x, b, p: Some(p) }
    }

    /// Total payment of buyer `i`.
    pub fn spend(&self, i: usize) -> f64 {
        self.b[i].iter().sum()
    }
}

/// Pricing regime an outcome is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriceMode {
    /// Buyer-specific unit prices are allowed.
    Variable,
    /// Every buyer pays the posted unit price `p_j`.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    NegativeAllocation { buyer: usize, good: usize },
    NegativePayment { buyer: usize, good: usize },
    NegativePrice { good: usize },
    Supply { good: usize },
    Budget { buyer: usize },
    IndividualRationality { buyer: usize, good: usize },
    FixedPrice { buyer: usize, good: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Amount by which the constraint is exceeded.
    pub magnitude: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn max_violation(&self) -> f64 {
        self.violations.iter().fold(0.0, |a, v| a.max(v.magnitude))
    }
}

/// Checks every market constraint of `outcome` within [`FEAS_TOL`].
///
/// Structural problems (wrong dimensions, missing prices in fixed mode) are
/// errors; constraint violations are listed in the report.
pub fn validate(instance: &MarketInstance, outcome: &Outcome, mode: PriceMode) -> Result<FeasibilityReport> {
    instance.check_matrix("allocation", &outcome.x)?;
    instance.check_matrix("payments", &outcome.b)?;
    let prices = match (&outcome.p, mode) {
        (Some(p), _) if p.len() != instance.m() => {
            return Err(Error::Dimension(format!("{} prices for {} goods", p.len(), instance.m())))
        }
        (None, PriceMode::Fixed) => {
            return Err(Error::Invalid("fixed-price validation requires a price vector".into()))
        }
        (p, PriceMode::Fixed) => p.as_deref(),
        (_, PriceMode::Variable) => None,
    };

    let (n, m) = (instance.n(), instance.m());
    let mut report = FeasibilityReport::default();
    let mut flag = |kind, magnitude: f64| {
        if magnitude > FEAS_TOL {
            report.violations.push(Violation { kind, magnitude });
        }
    };

    for i in 0..n {
        for j in 0..m {
            let (x, b) = (outcome.x[i][j], outcome.b[i][j]);
            flag(ViolationKind::NegativeAllocation { buyer: i, good: j }, -x);
            flag(ViolationKind::NegativePayment { buyer: i, good: j }, -b);
            flag(
                ViolationKind::IndividualRationality { buyer: i, good: j },
                b - instance.value(i, j) * x,
            );
            if let Some(p) = prices {
                flag(ViolationKind::FixedPrice { buyer: i, good: j }, (b - p[j] * x).abs());
            }
        }
        flag(ViolationKind::Budget { buyer: i }, outcome.spend(i) - instance.budget(i));
    }
    for j in 0..m {
        let sold: f64 = (0..n).map(|i| outcome.x[i][j]).sum();
        flag(ViolationKind::Supply { good: j }, sold - 1.0);
        if let Some(p) = prices {
            flag(ViolationKind::NegativePrice { good: j }, -p[j]);
        }
    }
    Ok(report)
}

/// Seller revenue: the sum of all payments.
pub fn revenue(outcome: &Outcome) -> f64 {
    outcome.b.iter().flatten().sum()
}

/// Liquid welfare `sum_i min(sum_j v_ij x_ij, B_i)`.
pub fn liquid_welfare(instance: &MarketInstance, x: &[Vec<f64>]) -> f64 {
    x.iter()
        .enumerate()
        .map(|(i, row)| {
            let value: f64 = row.iter().zip(&instance.values[i]).map(|(x, v)| x * v).sum();
            value.min(instance.budget(i))
        })
        .sum()
}
