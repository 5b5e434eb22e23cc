//! `fppe`: command-line front end for the revenue toolkit.
//!
//! Every command reads JSON and writes JSON (or CSV for suites). The process
//! exits with 0 only when every assertion the command makes holds.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use fppe::concave::ConcaveMarket;
use fppe::fppe::{fppe_revenue_certificate, solve_fppe_with, FppeOptions, Init};
use fppe::harness::{
    gen_3d2m, gen_adversarial_online, gen_concave, gen_lower_bound_family, gen_online, gen_static, run_suite,
    SuiteConfig, SuiteKind,
};
use fppe::io::read_json;
use fppe::market::validate;
use fppe::online::{check_trace, competitive_ratio, run_online_fppe_with_tol, write_trace_csv, OnlineInstance};
use fppe::reduction::{
    approximation_transfer_check, extract_matching, round_solution, to_rmfup_instance, DegreeRule, ReducedMarket,
    ThreeDTwoMatchingInstance,
};
use fppe::rmfup::{price_levels, solve_rmfup_enumerate, solve_rmfup_heuristic, solve_rmfup_single_good, ENUMERATION_CAP};
use fppe::rmvup::solve_rmvup;
use fppe::{MarketInstance, Outcome, PriceMode, EQ_TOL};

#[derive(Parser)]
#[command(name = "fppe", version, about = "Pacing equilibria and revenue benchmarks for budgeted buyers")]
struct Cli {
    /// Solver and certificate tolerance.
    #[arg(long, global = true, default_value_t = EQ_TOL)]
    tol: f64,
    /// Seed for generators, suites and randomized solver starts.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (a directory for `suite run`); stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a static market.
    Solve {
        #[command(subcommand)]
        problem: Solve,
    },
    /// Run an online instance round by round.
    Simulate {
        #[command(subcommand)]
        what: Simulate,
    },
    /// Build the fixed-price market of a 3D-2-matching instance.
    Reduce {
        #[command(subcommand)]
        what: Reduce,
    },
    /// Round a fixed-price solution of a reduction market to normal form.
    Round {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        solution: PathBuf,
    },
    /// Read the matching off a normal-form solution.
    ExtractMatching {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        solution: PathBuf,
    },
    /// Compare matchings recovered from near-optimal prices with the optimum.
    CheckTransfer {
        /// 3D-2-matching instance (JSON with E1, E2, E3, S).
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        rho: f64,
        /// Allow elements in fewer than two triplets.
        #[arg(long)]
        relaxed: bool,
    },
    /// Generate instances.
    Gen {
        #[command(subcommand)]
        what: Gen,
    },
    /// Run experiment suites.
    Suite {
        #[command(subcommand)]
        what: SuiteCmd,
    },
}

#[derive(Args)]
struct InstanceArg {
    /// Market instance (JSON with budgets and values).
    #[arg(long)]
    instance: PathBuf,
}

#[derive(Subcommand)]
enum Solve {
    /// First-price pacing equilibrium.
    Fppe {
        #[command(flatten)]
        input: InstanceArg,
        /// Also compare against the variable-price optimum.
        #[arg(long)]
        certify: bool,
    },
    /// Variable-unit-price revenue optimum.
    Rmvup {
        #[command(flatten)]
        input: InstanceArg,
    },
    /// Fixed-unit-price revenue.
    Rmfup {
        #[command(flatten)]
        input: InstanceArg,
        #[command(flatten)]
        method: RmfupMethod,
    },
}

#[derive(Args)]
#[group(multiple = false)]
struct RmfupMethod {
    /// Exact optimum for a single good.
    #[arg(long)]
    exact_single: bool,
    /// Exact optimum over all valuation and budget-exhaustion levels (default).
    #[arg(long)]
    enumerate: bool,
    /// Coordinate-descent heuristic with this price step.
    #[arg(long, value_name = "DELTA")]
    grid: Option<f64>,
}

#[derive(Subcommand)]
enum Simulate {
    /// Online FPPE with budget carry-over, against the flattened offline optimum.
    Online {
        #[command(flatten)]
        input: InstanceArg,
        /// Also write the per-round allocation as CSV.
        #[arg(long)]
        trace_csv: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum Reduce {
    #[command(name = "3d2m")]
    ThreeD {
        #[arg(long = "in")]
        input: PathBuf,
        /// Allow elements in fewer than two triplets.
        #[arg(long)]
        relaxed: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Static,
    LowerBound,
    Online,
    Concave,
    Matching,
}

impl From<Kind> for SuiteKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Static => SuiteKind::Static,
            Kind::LowerBound => SuiteKind::LowerBound,
            Kind::Online => SuiteKind::Online,
            Kind::Concave => SuiteKind::Concave,
            Kind::Matching => SuiteKind::Matching,
        }
    }
}

#[derive(Subcommand)]
enum Gen {
    /// The single-good family where fixed prices lose half the revenue.
    LowerBound {
        #[arg(long)]
        n: usize,
    },
    /// The two-round adversary; with `--fraction`, the branch it commits to.
    Adversarial {
        #[arg(long)]
        fraction: Option<f64>,
    },
    /// Random instances drawn like the suites draw them.
    Random {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Suite configuration (JSON); flags override its seed and kind.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SuiteCmd {
    /// Run a suite and append its rows to `<out>/<kind>.csv`.
    Run {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn emit<T: Serialize + ?Sized>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(path) => fppe::io::write_json(path, value).with_context(|| format!("writing {}", path.display())),
        None => {
            let text = serde_json::to_string_pretty(value)?;
            match writeln!(io::stdout().lock(), "{text}") {
                Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
                other => Ok(other?),
            }
        }
    }
}

fn load<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    read_json(path).with_context(|| format!("reading {}", path.display()))
}

fn load_tdm(path: &Path, relaxed: bool) -> Result<ThreeDTwoMatchingInstance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let rule = if relaxed { DegreeRule::AtMostTwo } else { DegreeRule::ExactlyTwo };
    Ok(ThreeDTwoMatchingInstance::from_json(&text, rule)?)
}

fn suite_config(cli: &Cli, path: Option<&Path>, kind: Kind) -> Result<SuiteConfig> {
    let mut cfg: SuiteConfig = match path {
        Some(p) => load(p)?,
        None => SuiteConfig { tol: cli.tol, ..SuiteConfig::default() },
    };
    cfg.kind = kind.into();
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Reports a failed assertion on stderr.
fn assert_that(ok: bool, what: impl FnOnce() -> String) -> bool {
    if !ok {
        eprintln!("assertion failed: {}", what());
    }
    ok
}

fn solve(cli: &Cli, problem: &Solve) -> Result<bool> {
    let out = cli.out.as_deref();
    match problem {
        Solve::Fppe { input, certify } => {
            let inst: MarketInstance = load(&input.instance)?;
            let init = cli.seed.map_or(Init::Uniform, Init::Seeded);
            let eq = solve_fppe_with(&inst, &FppeOptions { tol: cli.tol, init, ..FppeOptions::default() })?;
            let mut ok = assert_that(eq.max_residual() <= cli.tol, || format!("residuals {:?}", eq.residuals));
            if *certify {
                let cert = fppe_revenue_certificate(&inst)?;
                ok &= assert_that(cert.ratio >= 0.5 - 1e-6, || format!("revenue ratio {}", cert.ratio));
                emit(out, &json!({ "equilibrium": eq, "certificate": cert }))?;
            } else {
                emit(out, &eq)?;
            }
            Ok(ok)
        }
        Solve::Rmvup { input } => {
            let inst: MarketInstance = load(&input.instance)?;
            let sol = solve_rmvup(&inst)?;
            let report = validate(&inst, &sol.outcome, PriceMode::Variable)?;
            emit(out, &sol)?;
            Ok(assert_that(report.is_feasible(), || format!("{:?}", report.violations)))
        }
        Solve::Rmfup { input, method } => {
            let inst: MarketInstance = load(&input.instance)?;
            let sol = if method.exact_single {
                solve_rmfup_single_good(&inst)?
            } else if let Some(delta) = method.grid {
                solve_rmfup_heuristic(&inst, delta)?
            } else {
                let levels: Vec<Vec<f64>> = (0..inst.m()).map(|j| price_levels(&inst, j)).collect();
                solve_rmfup_enumerate(&inst, &levels, ENUMERATION_CAP)?
            };
            let report = validate(&inst, &sol.outcome, PriceMode::Fixed)?;
            emit(out, &sol)?;
            Ok(assert_that(report.is_feasible(), || format!("{:?}", report.violations)))
        }
    }
}

fn simulate(cli: &Cli, input: &InstanceArg, trace_csv: Option<&Path>) -> Result<bool> {
    let inst: OnlineInstance = load(&input.instance)?;
    let trace = run_online_fppe_with_tol(&inst, cli.tol)?;
    check_trace(&inst, &trace)?;
    if let Some(path) = trace_csv {
        let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_trace_csv(&trace, file)?;
    }
    let report = competitive_ratio(&inst)?;
    let rounds: Vec<_> = trace
        .rounds
        .iter()
        .map(|r| json!({ "round": r.round, "active": r.active, "budgets": r.budgets, "p": r.outcome.p,
                         "alpha": r.outcome.alpha, "x": r.outcome.x, "revenue": r.revenue }))
        .collect();
    emit(cli.out.as_deref(), &json!({ "rounds": rounds, "report": report }))?;
    Ok(true)
}

fn reduction_market(path: &Path) -> Result<ReducedMarket> {
    let inst: MarketInstance = load(path)?;
    Ok(ReducedMarket::recognize(&inst)?)
}

fn check_transfer(cli: &Cli, input: &Path, rho: f64, relaxed: bool) -> Result<bool> {
    let tdm = load_tdm(input, relaxed)?;
    let report = approximation_transfer_check(&tdm, rho)?;
    emit(cli.out.as_deref(), &report)?;
    for v in &report.violations {
        eprintln!("assertion failed: {v}");
    }
    Ok(report.ok())
}

fn generate(cli: &Cli, what: &Gen) -> Result<bool> {
    let out = cli.out.as_deref();
    match what {
        Gen::LowerBound { n } => emit(out, &gen_lower_bound_family(*n)?)?,
        Gen::Adversarial { fraction: None } => {
            let h = gen_adversarial_online();
            emit(out, &json!({ "harness": h, "play": h.play()? }))?
        }
        Gen::Adversarial { fraction: Some(f) } => emit(out, &gen_adversarial_online().branch(*f)?)?,
        Gen::Random { kind, count, config } => {
            let cfg = suite_config(cli, config.as_deref(), *kind)?;
            let mut items = Vec::with_capacity(*count);
            for k in 0..*count {
                let mut rng = cfg.rng(k);
                let value = match kind {
                    Kind::Static => serde_json::to_value(gen_static(&cfg, &mut rng)?)?,
                    Kind::Online => serde_json::to_value(gen_online(&cfg, &mut rng)?)?,
                    Kind::Concave => serde_json::to_value::<ConcaveMarket>(gen_concave(&cfg, &mut rng)?)?,
                    Kind::Matching => {
                        let half = cfg.triplets[0].div_ceil(2)..=cfg.triplets[1] / 2;
                        let size = 2 * rand::Rng::random_range(&mut rng, half);
                        serde_json::from_str(&gen_3d2m(size, &mut rng)?.to_json()?)?
                    }
                    Kind::LowerBound => {
                        let n = cfg.lower_bound_ns[k % cfg.lower_bound_ns.len()];
                        serde_json::to_value(gen_lower_bound_family(n)?)?
                    }
                };
                items.push(value);
            }
            emit(out, &items)?
        }
    }
    Ok(true)
}

fn suite(cli: &Cli, kind: Kind, count: Option<usize>, config: Option<&Path>) -> Result<bool> {
    let mut cfg = suite_config(cli, config, kind)?;
    if let Some(c) = count {
        cfg.count = c;
    }
    let report = run_suite(&cfg)?;
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(format!("{}.csv", cfg.kind.name()));
    let fresh = !path.exists() || fs::metadata(&path)?.len() == 0;
    let file = OpenOptions::new().create(true).append(true).open(&path).with_context(|| format!("opening {}", path.display()))?;
    report.write_csv(file, fresh)?;
    for row in report.rows.iter().filter(|r| !r.pass) {
        eprintln!("assertion failed: {} row {}: {}", row.kind, row.index, row.error);
    }
    let min = report.min_ratio().map_or("n/a".to_string(), |r| format!("{r:.6}"));
    eprintln!(
        "{}: {} rows, {} failed, min ratio {min}, appended to {}",
        cfg.kind.name(),
        report.rows.len(),
        report.failures(),
        path.display()
    );
    Ok(report.all_passed())
}

fn run(cli: &Cli) -> Result<bool> {
    if !(cli.tol > 0.0 && cli.tol.is_finite()) {
        bail!("--tol must be positive, got {}", cli.tol);
    }
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Solve { problem } => solve(cli, problem),
        Command::Simulate { what: Simulate::Online { input, trace_csv } } => simulate(cli, input, trace_csv.as_deref()),
        Command::Reduce { what: Reduce::ThreeD { input, relaxed } } => {
            let red = to_rmfup_instance(&load_tdm(input, *relaxed)?)?;
            emit(out, &red.instance)?;
            Ok(true)
        }
        Command::Round { instance, solution } => {
            let red = reduction_market(instance)?;
            let sol: Outcome = load(solution)?;
            emit(out, &round_solution(&red, &sol)?)?;
            Ok(true)
        }
        Command::ExtractMatching { instance, solution } => {
            let red = reduction_market(instance)?;
            let sol: Outcome = load(solution)?;
            let matching = extract_matching(&red, &sol)?;
            emit(out, &json!({ "matching": matching, "size": matching.len() }))?;
            Ok(true)
        }
        Command::CheckTransfer { input, rho, relaxed } => check_transfer(cli, input, *rho, *relaxed),
        Command::Gen { what } => generate(cli, what),
        Command::Suite { what: SuiteCmd::Run { kind, count, config } } => suite(cli, *kind, *count, config.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
