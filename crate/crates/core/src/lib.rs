//! Revenue maximization for divisible goods sold to budget-constrained buyers.
//!
//! The crate computes first-price pacing equilibria (FPPE), the variable-price
//! revenue optimum (an LP), fixed-price revenue solutions, the online variant of
//! FPPE with budget carry-over, and the Eisenberg–Gale equilibrium for concave
//! valuations. Every solver output can be re-checked by an independent
//! certificate routine, and [`harness`] turns the known revenue-ratio bounds into
//! executable assertions over generated instance suites.
//!
//! Module map:
//!
//! * [`market`]: instances, outcomes, feasibility, revenue and liquid welfare.
//! * [`lp`]: dense bounded-variable simplex used by every LP in the crate.
//! * [`ipm`]: primal-dual interior-point method for smooth convex programs.
//! * [`rmvup`]: variable-unit-price revenue LP.
//! * [`fppe`]: pacing equilibrium solver and its six-property certificate.
//! * [`rmfup`]: fixed-unit-price revenue (exact single good, enumeration, heuristic).
//! * [`online`]: online FPPE, flattened offline benchmark, analysis diagnostics.
//! * [`reduction`]: 3D-2-matching instances, reduction, rounding and matching extraction.
//! * [`concave`]: concave valuations, EG primal/dual, KKT residuals, curvature ratio.
//! * [`harness`]: instance generators and certificate suites.

pub mod concave;
pub mod error;
pub mod fppe;
pub mod harness;
pub mod io;
pub mod ipm;
pub mod lp;
pub mod market;
pub mod online;
pub mod reduction;
pub mod rmfup;
pub mod rmvup;

pub use error::{Error, Result};
pub use market::{MarketInstance, Outcome, PriceMode};

/// Absolute feasibility tolerance shared by every solver output check.
pub const FEAS_TOL: f64 = 1e-7;

/// Default equilibrium tolerance for FPPE certificates.
pub const EQ_TOL: f64 = 1e-6;

/// Objective accuracy promised by the LP engine on desk-scale programs.
pub const LP_TOL: f64 = 1e-8;
