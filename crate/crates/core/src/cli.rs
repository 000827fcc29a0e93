//! Command-line front-end. Every flag can also be set through an
//! environment variable with the `ROBUST_TC_` prefix (e.g. `ROBUST_TC_TOL`).
//!
//! Exit codes: 0 success, 1 verification failure or infeasibility, 2 input
//! error, 3 existence hypothesis not met.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use indexmap::IndexMap;
use serde::Serialize;

use crate::analysis::{
    check_optional_strong_supermartingale, deflated_value_process, duality_gap, variation_bounds,
    SupermartingaleReport, VariationReport,
};
use crate::cps::{find_cps, verify_cps, DEFAULT_DELTA};
use crate::market::{
    bond_ledger, check_self_financing, is_admissible, terminal_liquidation_value, Market, Strategy,
    DEFAULT_TOL,
};
use crate::optimize::{solve_robust, SolveOptions, Utility};
use crate::spec::{load_market, read_json, to_json_pretty, Certificate, ClaimSpec, StrategySpec};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_HYPOTHESIS: i32 = 3;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Spec { .. } | Error::Io(_) | Error::Domain(_) | Error::InvalidPath(_) => EXIT_INPUT,
        Error::Hypothesis(_) => EXIT_HYPOTHESIS,
        Error::Infeasible(_) | Error::Contract(_) | Error::NonPositiveWealth { .. } | Error::Lp(_) => EXIT_VERIFY,
    }
}

#[derive(Debug, Parser)]
#[command(name = "robust-tc", version, about = "Robust utility maximisation under proportional transaction costs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the robust utility problem; writes report.json,
    /// terminal_values.csv, strategy.json and certificate.json.
    Solve(SolveArgs),
    /// Search for a consistent price system; writes certificate.json.
    CheckCps(CheckCpsArgs),
    /// Superhedging price of a claim with its dual bound; writes
    /// superhedge.json and strategy.json.
    Superhedge(SuperhedgeArgs),
    /// Re-verify a strategy against a certificate.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum UtilityKind {
    Log,
    Power,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Market specification (JSON).
    #[arg(long, env = "ROBUST_TC_SPEC")]
    pub spec: PathBuf,
    /// Output directory.
    #[arg(long, env = "ROBUST_TC_OUT", default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, env = "ROBUST_TC_UTILITY", value_enum, default_value = "log")]
    pub utility: UtilityKind,
    /// Exponent of the power utility, in (0, 1).
    #[arg(long, env = "ROBUST_TC_ALPHA", default_value_t = 0.5)]
    pub alpha: f64,
    /// Initial cash.
    #[arg(long, env = "ROBUST_TC_X", default_value_t = 1.0)]
    pub x: f64,
    #[arg(long = "lambda-prime", env = "ROBUST_TC_LAMBDA_PRIME")]
    pub lambda_prime: Option<f64>,
    #[arg(long, env = "ROBUST_TC_DELTA", default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    #[arg(long, env = "ROBUST_TC_TOL", default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, env = "ROBUST_TC_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "max-iters", env = "ROBUST_TC_MAX_ITERS", default_value_t = 5000)]
    pub max_iters: usize,
}

#[derive(Debug, Args)]
pub struct CheckCpsArgs {
    #[command(flatten)]
    pub common: Common,
    /// Model label or index; defaults to the first model.
    #[arg(long, env = "ROBUST_TC_THETA")]
    pub theta: Option<String>,
    /// Cost level of the price system; defaults to the market's lambda.
    #[arg(long = "lambda-prime", env = "ROBUST_TC_LAMBDA_PRIME")]
    pub lambda_prime: Option<f64>,
    #[arg(long, env = "ROBUST_TC_DELTA", default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
}

#[derive(Debug, Args)]
pub struct SuperhedgeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, env = "ROBUST_TC_THETA")]
    pub theta: Option<String>,
    /// Claim file (JSON).
    #[arg(long, env = "ROBUST_TC_CLAIM")]
    pub claim: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Strategy file (JSON).
    #[arg(long, env = "ROBUST_TC_STRATEGY")]
    pub strategy: PathBuf,
    /// Certificate file (JSON).
    #[arg(long, env = "ROBUST_TC_CERTIFICATE")]
    pub certificate: PathBuf,
    #[arg(long, env = "ROBUST_TC_TOL", default_value_t = DEFAULT_TOL)]
    pub tol: f64,
}

/// Parses arguments, runs the command and returns the exit code; messages
/// go to stdout and diagnostics to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(outcome) => {
            print!("{}", outcome.message);
            outcome.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub struct Outcome {
    pub code: i32,
    pub message: String,
}

pub fn execute(command: &Command) -> Result<Outcome> {
    match command {
        Command::Solve(a) => cmd_solve(a),
        Command::CheckCps(a) => cmd_check_cps(a),
        Command::Superhedge(a) => cmd_superhedge(a),
        Command::Verify(a) => cmd_verify(a),
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn resolve_theta(market: &Market, theta: Option<&str>) -> Result<usize> {
    let labels = market.family().labels();
    match theta {
        None => Ok(0),
        Some(t) => labels
            .iter()
            .position(|l| l == t)
            .or_else(|| t.parse::<usize>().ok().filter(|&i| i < labels.len()))
            .ok_or_else(|| Error::spec("--theta", format!("unknown model {t:?}"))),
    }
}

#[derive(Serialize)]
struct CpsSummary<'a> {
    model: &'a str,
    lambda_prime: f64,
}

#[derive(Serialize)]
struct SolveReportFile<'a> {
    utility: Utility,
    x: f64,
    value: f64,
    argmin_model: &'a str,
    model_values: IndexMap<&'a str, f64>,
    iterations: usize,
    barrier_rounds: usize,
    duality_gap: f64,
    certified: bool,
    admissible: bool,
    cps: CpsSummary<'a>,
    strategy: StrategySpec,
}

fn cmd_solve(a: &SolveArgs) -> Result<Outcome> {
    let market = load_market(&a.common.spec)?;
    let utility = match a.utility {
        UtilityKind::Log => Utility::Log,
        UtilityKind::Power => Utility::power(a.alpha)?,
    };
    let options = SolveOptions {
        tol: a.tol,
        max_iters: a.max_iters,
        seed: a.seed,
        lambda_prime: a.lambda_prime,
        delta: a.delta,
    };
    let sol = solve_robust(&market, utility, a.x, &options)?;
    let labels = market.family().labels();
    let strategy = StrategySpec::from_strategy(&sol.strategy, &market);
    let report = SolveReportFile {
        utility,
        x: a.x,
        value: sol.value,
        argmin_model: &labels[sol.argmin_theta],
        model_values: labels
            .iter()
            .map(String::as_str)
            .zip(sol.report.model_values.iter().copied())
            .collect(),
        iterations: sol.report.iterations,
        barrier_rounds: sol.report.barrier_rounds,
        duality_gap: sol.report.duality_gap,
        certified: sol.report.certified,
        admissible: sol.report.admissible,
        cps: CpsSummary {
            model: &labels[sol.report.cps_theta],
            lambda_prime: sol.report.lambda_prime,
        },
        strategy: strategy.clone(),
    };
    let cert = find_cps(&market, sol.report.cps_theta, sol.report.lambda_prime, a.delta)?;
    let out = &a.common.out;
    write_file(out, "report.json", &to_json_pretty(&report))?;
    write_file(out, "strategy.json", &to_json_pretty(&strategy))?;
    write_file(out, "certificate.json", &to_json_pretty(&cert))?;
    write_file(out, "terminal_values.csv", &terminal_values_csv(&sol.strategy, &market))?;
    Ok(Outcome {
        code: EXIT_OK,
        message: format!(
            "value {} (argmin model {}), certified {}\n",
            sol.value, labels[sol.argmin_theta], sol.report.certified
        ),
    })
}

/// `model,scenario,probability,terminal_value` rows.
pub fn terminal_values_csv(strategy: &Strategy, market: &Market) -> String {
    let mut s = String::from("model,scenario,probability,terminal_value\n");
    let tree = market.tree();
    for (theta, m) in market.family().labels().iter().enumerate() {
        for (w, l) in tree.labels().iter().enumerate() {
            let v = terminal_liquidation_value(strategy, market, theta, w);
            let _ = writeln!(s, "{m},{l},{},{v}", tree.probabilities()[w]);
        }
    }
    s
}

fn cmd_check_cps(a: &CheckCpsArgs) -> Result<Outcome> {
    let market = load_market(&a.common.spec)?;
    let theta = resolve_theta(&market, a.theta.as_deref())?;
    let lambda = a.lambda_prime.unwrap_or(market.lambda());
    let label = &market.family().labels()[theta];
    match find_cps(&market, theta, lambda, a.delta) {
        Ok(cps) => {
            write_file(&a.common.out, "certificate.json", &to_json_pretty(&cps))?;
            Ok(Outcome {
                code: EXIT_OK,
                message: format!("consistent price system found for model {label} at cost level {lambda}\n"),
            })
        }
        Err(Error::Infeasible(msg)) => Ok(Outcome {
            code: EXIT_VERIFY,
            message: format!("infeasible: {msg}\n"),
        }),
        Err(e) => Err(e),
    }
}

#[derive(Serialize)]
struct SuperhedgeFile<'a> {
    model: &'a str,
    price: f64,
    dual: f64,
    gap: f64,
}

fn cmd_superhedge(a: &SuperhedgeArgs) -> Result<Outcome> {
    let market = load_market(&a.common.spec)?;
    let theta = resolve_theta(&market, a.theta.as_deref())?;
    let claim = read_json::<ClaimSpec>(&a.claim)?.to_claim(&market)?;
    let (report, sh, _) = duality_gap(&claim, &market, theta)?;
    let model = &market.family().labels()[theta];
    let file = SuperhedgeFile {
        model,
        price: report.primal,
        dual: report.dual,
        gap: report.gap,
    };
    write_file(&a.common.out, "superhedge.json", &to_json_pretty(&file))?;
    write_file(
        &a.common.out,
        "strategy.json",
        &to_json_pretty(&StrategySpec::from_strategy(&sh.witness, &market)),
    )?;
    Ok(Outcome {
        code: EXIT_OK,
        message: format!("superhedging price {} (dual {}, gap {})\n", report.primal, report.dual, report.gap),
    })
}

#[derive(Debug, Serialize)]
pub struct AdmissibilitySummary {
    pub admissible: bool,
    pub min_value: f64,
    pub violation: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub verdict: bool,
    pub certificate_valid: bool,
    pub admissibility: AdmissibilitySummary,
    pub self_financing: bool,
    pub supermartingale: Option<SupermartingaleReport>,
    /// Present when the certificate is cheaper than the market and the
    /// strategy is liquidated.
    pub variation: Option<VariationReport>,
    pub notes: Vec<String>,
}

/// The checks behind `verify`, usable without the file system.
pub fn verify_bundle(market: &Market, strategy: &Strategy, cert: &Certificate, tol: f64) -> Result<VerifyReport> {
    strategy.validate(market)?;
    let mut notes = Vec::new();
    let certificate_valid = cert.theta < market.num_models()
        && cert.lambda <= market.lambda()
        && verify_cps(cert, market, cert.lambda, DEFAULT_TOL);
    if !certificate_valid {
        notes.push("certificate does not verify against the market".into());
    }
    let adm = is_admissible(strategy, market, tol);
    let admissibility = AdmissibilitySummary {
        admissible: adm.admissible,
        min_value: adm.min_value,
        violation: adm.violation.map(|v| {
            format!(
                "liquidation value {} in model {}, scenario {} at t = {} ({:?})",
                v.value,
                market.family().labels()[v.theta],
                market.tree().labels()[v.scenario],
                v.time,
                v.kind
            )
        }),
    };
    let mut self_financing = true;
    for theta in 0..market.num_models() {
        let h0: Vec<_> = (0..market.num_scenarios())
            .map(|w| bond_ledger(strategy, market, theta, w))
            .collect();
        self_financing &= check_self_financing(&h0, strategy, market, theta, tol)?;
    }
    let mut supermartingale = None;
    let mut variation = None;
    if certificate_valid {
        let x: Vec<_> = (0..market.num_scenarios())
            .map(|w| deflated_value_process(strategy, cert, market, w))
            .collect();
        supermartingale = Some(check_optional_strong_supermartingale(&x, market, tol)?);
        let liquidated = (0..market.num_scenarios()).all(|w| strategy.terminal_position(market, w).abs() <= 1e-9);
        if cert.lambda < market.lambda() && liquidated && adm.admissible {
            variation = Some(variation_bounds(strategy, cert, market, cert.lambda, tol)?);
        } else {
            notes.push("variation bounds skipped: need a cheaper certificate and a liquidated, admissible strategy".into());
        }
    }
    let verdict = certificate_valid
        && adm.admissible
        && self_financing
        && supermartingale.is_some_and(|s| s.holds)
        && variation.as_ref().map_or(true, |v| v.pass);
    Ok(VerifyReport {
        verdict,
        certificate_valid,
        admissibility,
        self_financing,
        supermartingale,
        variation,
        notes,
    })
}

fn cmd_verify(a: &VerifyArgs) -> Result<Outcome> {
    let market = load_market(&a.common.spec)?;
    let strategy = read_json::<StrategySpec>(&a.strategy)?.to_strategy(&market)?;
    let cert: Certificate = read_json(&a.certificate)?;
    let report = verify_bundle(&market, &strategy, &cert, a.tol)?;
    let text = to_json_pretty(&report);
    write_file(&a.common.out, "verify.json", &text)?;
    Ok(Outcome {
        code: if report.verdict { EXIT_OK } else { EXIT_VERIFY },
        message: text,
    })
}
