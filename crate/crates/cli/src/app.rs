//! Argument definitions and command dispatch.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use tailagg::diagnostics::{
    check_asy_indep, check_conditional, check_joint_aux, check_mda_gumbel, check_subexp_criterion, check_tail_ratio,
    log_grid, Conditional, McBudget,
};
use tailagg::portfolio::{EstimatorConfig, DEFAULT_GRID_BUDGET};
use tailagg::rare_event::{cond_mc, exact_antithetic_lognormal, ratio_vs_asymptotic};
use tailagg::{
    approx_linear, approx_powers, approx_sum_d, asymptotic::approx_linear_with_ratios, grid_verify, plain_mc,
    solve_two_stage, ApproxResult, AssumptionReport, JointModel, PortfolioProblem, TailModel,
};

use crate::constraint::parse_linear;
use crate::output::{emit, to_csv, write_atomic, Format};
use crate::tables;

#[derive(Debug, Parser)]
#[command(name = "tailagg", version, about = "Tail probabilities of sums of asymptotically independent risks")]
pub struct Cli {
    /// Output format for stdout.
    #[arg(long, value_enum, default_value = "json", global = true)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Asymptotic approximation of P(sum a_i X_i > x), or of a power sum with --powers.
    Approx(ApproxArgs),
    /// Closed-form P(X + Y > x) for the antithetic lognormal pair (correlation -1).
    Exact(ExactArgs),
    /// Plain or conditional Monte Carlo estimate of a linear-combination tail.
    Simulate(SimulateArgs),
    /// Finite-threshold profile of one sufficient condition along a threshold grid.
    Check(CheckArgs),
    /// Two-stage allocation under a linear budget, optionally audited on a grid.
    Optimize(OptimizeArgs),
    /// Regenerate result tables 1-7: 1 closed form, 2-4 simulation at
    /// correlations -0.9/0/0.9, 5-7 allocation audit at the same correlations.
    ReproduceTables(ReproduceArgs),
}

#[derive(Debug, Args)]
pub struct JointArg {
    /// JSON file holding a joint model, e.g. {"kind": "bivariate_lognormal", "mu": 0, "sigma": 1, "rho": 0}.
    #[arg(long)]
    pub joint: PathBuf,
}

#[derive(Debug, Args)]
pub struct ApproxArgs {
    #[command(flatten)]
    pub joint: JointArg,
    /// Coefficients a_i; omitted means the plain sum.
    #[arg(long, value_delimiter = ',')]
    pub coeffs: Option<Vec<f64>>,
    /// Powers beta_i for sum a_i Y^beta_i with Y the first marginal.
    #[arg(long, value_delimiter = ',')]
    pub powers: Option<Vec<f64>>,
    /// Tail-ratio constants relative to the first marginal, skipping the probe.
    #[arg(long, value_delimiter = ',')]
    pub c: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub threshold: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct ExactArgs {
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub mu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, value_delimiter = ',', required = true)]
    pub threshold: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimMethod {
    Cond,
    Plain,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub joint: JointArg,
    #[arg(long, value_delimiter = ',')]
    pub coeffs: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub threshold: Vec<f64>,
    /// Sample size; scientific notation such as 1e7 is accepted.
    #[arg(long, default_value = "1e7", value_parser = parse_count)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "cond")]
    pub method: SimMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AssumptionArg {
    /// Gumbel-domain self-neglect of the first marginal.
    A1,
    /// Tail ratio of the second marginal to the first.
    A2,
    /// P(|Y| > t f(x) | X > x).
    A3,
    /// P(|X| > t f(x) | Y > x).
    A4,
    /// P(X > L f(x), Y > L f(x)) / P(X > x).
    A5,
    /// P(X > L f(x))^2 / P(X > x) for the first marginal.
    Subexp,
    /// P(X > x, Y > x) / P(X > x).
    AsyIndep,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub joint: JointArg,
    #[arg(long, value_enum)]
    pub assumption: AssumptionArg,
    /// Multiplier of the auxiliary function for A5 and the subexponential check.
    #[arg(long = "L", default_value_t = 1.0)]
    pub l: f64,
    /// Multiplier of the auxiliary function for A3/A4.
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    /// Offsets for A1.
    #[arg(long, value_delimiter = ',', default_value = "-1,0,1,2", allow_hyphen_values = true)]
    pub t_grid: Vec<f64>,
    /// Threshold grid `lo:hi:count` in log10 units.
    #[arg(long, default_value = "1:5:9")]
    pub grid_log: String,
    /// Seed for the Monte Carlo fallback; sampling is refused without one.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Rows per grid point for the Monte Carlo fallback.
    #[arg(long, value_parser = parse_count)]
    pub mc_n: Option<usize>,
    /// Use Monte Carlo even when a closed form exists (needs --seed).
    #[arg(long)]
    pub force_mc: bool,
    /// Also write (x, value) rows to this CSV file.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub joint: JointArg,
    /// Linear budget such as `2*a1+3*a2>=1`.
    #[arg(long)]
    pub constraint: String,
    #[arg(long)]
    pub threshold: f64,
    #[arg(long, value_delimiter = ',')]
    pub c: Option<Vec<f64>>,
    /// Audit the answer by estimating every point of an a1 grid.
    #[arg(long)]
    pub verify: bool,
    #[arg(long, default_value_t = 0.01)]
    pub grid_step: f64,
    #[arg(long, default_value_t = DEFAULT_GRID_BUDGET, value_parser = parse_count)]
    pub n: usize,
    #[arg(long, required_if_eq("verify", "true"))]
    pub seed: Option<u64>,
    /// Per-grid-point estimates are written here when verifying.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    /// Subset of tables 1-7.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7", value_parser = clap::value_parser!(u8).range(1..=7))]
    pub tables: Vec<u8>,
    /// Fraction in (0, 1] of the full sample sizes (1e7 per threshold, 1e4 per grid point).
    #[arg(long, default_value_t = 1.0)]
    pub budget: f64,
    /// Required whenever a simulated table is requested.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "tables")]
    pub out_dir: PathBuf,
}

fn parse_count(s: &str) -> std::result::Result<usize, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if v >= 1.0 && v.fract() == 0.0 && v <= 1e15 {
        Ok(v as usize)
    } else {
        Err(format!("expected a positive whole count, got {s}"))
    }
}

/// `lo:hi:count` in log10 units.
pub fn parse_grid_log(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        bail!("grid must be lo:hi:count, got {s}");
    }
    let lo: f64 = parts[0].parse()?;
    let hi: f64 = parts[1].parse()?;
    let count: usize = parts[2].parse()?;
    if !(hi > lo) || count < 2 {
        bail!("grid needs hi > lo and at least 2 points, got {s}");
    }
    Ok(log_grid(lo, hi, count))
}

fn load_joint(arg: &JointArg) -> Result<JointModel> {
    let text = fs::read_to_string(&arg.joint).with_context(|| format!("reading {}", arg.joint.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing joint model in {}", arg.joint.display()))
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Approx(a) => approx(cli.format, a),
        Command::Exact(a) => exact(cli.format, a),
        Command::Simulate(a) => simulate(cli.format, a),
        Command::Check(a) => check(cli.format, a),
        Command::Optimize(a) => optimize(cli.format, a),
        Command::ReproduceTables(a) => reproduce(cli.format, a),
    }
    .map(|code| code.unwrap_or(ExitCode::SUCCESS))
}

#[derive(Serialize)]
struct ApproxRow {
    threshold: f64,
    value: f64,
    log10_value: f64,
    m_d: f64,
    n_d: f64,
}

fn approx_one(a: &ApproxArgs, models: &[TailModel], x: f64) -> Result<ApproxResult> {
    Ok(match (&a.powers, &a.coeffs) {
        (Some(beta), coeffs) => {
            let ones = vec![1.0; beta.len()];
            approx_powers(&models[0], coeffs.as_deref().unwrap_or(&ones), beta, x)?
        }
        (None, Some(coeffs)) if a.c.is_some() => approx_linear_with_ratios(models, coeffs, x, a.c.as_deref())?,
        (None, Some(coeffs)) => approx_linear(models, coeffs, x)?,
        (None, None) => approx_sum_d(models, x)?,
    })
}

fn approx(format: Format, a: ApproxArgs) -> Result<Option<ExitCode>> {
    let models = load_joint(&a.joint)?.marginals();
    let mut docs = Vec::new();
    let mut rows = Vec::new();
    for &x in &a.threshold {
        let r = approx_one(&a, &models, x)?;
        let mut doc = serde_json::to_value(&r)?;
        doc["threshold"] = json!(x);
        doc["log10_value"] = json!(r.log10_value());
        docs.push(doc);
        rows.push(ApproxRow { threshold: x, value: r.value, log10_value: r.log10_value(), m_d: r.recipe.m_d, n_d: r.recipe.n_d });
    }
    emit(format, &single_or_list(docs), &rows)?;
    Ok(None)
}

fn single_or_list(mut docs: Vec<Value>) -> Value {
    if docs.len() == 1 {
        docs.remove(0)
    } else {
        Value::Array(docs)
    }
}

#[derive(Serialize)]
struct ExactRow {
    threshold: f64,
    probability: f64,
    asymptotic: f64,
    ratio: f64,
}

fn exact(format: Format, a: ExactArgs) -> Result<Option<ExitCode>> {
    let m = TailModel::lognormal(a.mu, a.sigma)?;
    let rows = a
        .threshold
        .iter()
        .map(|&x| {
            let p = exact_antithetic_lognormal(a.mu, a.sigma, x).estimate;
            let asy = tailagg::approx_sum_pair(&m, &m, x, None)?.value;
            Ok(ExactRow { threshold: x, probability: p, asymptotic: asy, ratio: p / asy })
        })
        .collect::<Result<Vec<_>>>()?;
    emit(format, &serde_json::to_value(&rows)?, &rows)?;
    Ok(None)
}

#[derive(Serialize)]
struct SimRow {
    threshold: f64,
    estimate: f64,
    std_error: f64,
    half_width95: f64,
    ratio_vs_asymptotic: Option<f64>,
    ratio_half_width: Option<f64>,
    n: u64,
    seed: u64,
}

fn simulate(format: Format, a: SimulateArgs) -> Result<Option<ExitCode>> {
    let joint = load_joint(&a.joint)?;
    let models = joint.marginals();
    let coeffs = a.coeffs.clone().unwrap_or_else(|| vec![1.0; joint.dim()]);
    let mut rows = Vec::new();
    for &x in &a.threshold {
        let est = match a.method {
            SimMethod::Cond => cond_mc(&joint, &coeffs, x, a.n, a.seed)?,
            SimMethod::Plain => plain_mc(&joint, &coeffs, x, a.n, a.seed)?,
        };
        let ratio = approx_linear(&models, &coeffs, x).and_then(|ap| ratio_vs_asymptotic(&est, &ap));
        if let Err(e) = &ratio {
            log::warn!("no asymptotic ratio at x = {x}: {e}");
        }
        let ratio = ratio.ok();
        rows.push(SimRow {
            threshold: x,
            estimate: est.estimate,
            std_error: est.std_error,
            half_width95: est.half_width95,
            ratio_vs_asymptotic: ratio.map(|r| r.ratio),
            ratio_half_width: ratio.map(|r| r.half_width),
            n: est.n,
            seed: a.seed,
        });
    }
    let doc = single_or_list(rows.iter().map(serde_json::to_value).collect::<std::result::Result<_, _>>()?);
    emit(format, &doc, &rows)?;
    Ok(None)
}

#[derive(Serialize)]
struct PointRow {
    x: f64,
    value: f64,
    inconclusive: bool,
}

fn check(format: Format, a: CheckArgs) -> Result<Option<ExitCode>> {
    let joint = load_joint(&a.joint)?;
    let grid = parse_grid_log(&a.grid_log)?;
    let budget = match (a.seed, a.force_mc) {
        (None, true) => bail!("--force-mc needs --seed"),
        (None, false) => None,
        (Some(s), force) => {
            let b = McBudget::new(s);
            let b = a.mc_n.map_or(b, |n| b.with_n(n));
            Some(if force { b.forced() } else { b })
        }
    };
    let report: AssumptionReport = match a.assumption {
        AssumptionArg::A1 => check_mda_gumbel(&joint.marginal(0), &grid, &a.t_grid)?,
        AssumptionArg::A2 => check_tail_ratio(&joint.marginal(0), &joint.marginal(1), &grid)?,
        AssumptionArg::A3 => check_conditional(&joint, Conditional::A3, a.t, &grid, budget)?,
        AssumptionArg::A4 => check_conditional(&joint, Conditional::A4, a.t, &grid, budget)?,
        AssumptionArg::A5 => check_joint_aux(&joint, a.l, &grid, budget)?,
        AssumptionArg::Subexp => check_subexp_criterion(&joint.marginal(0), a.l, &grid)?,
        AssumptionArg::AsyIndep => check_asy_indep(&joint, &grid, budget)?,
    };
    let rows: Vec<PointRow> = report
        .grid
        .iter()
        .zip(&report.values)
        .zip(&report.inconclusive)
        .map(|((&x, &value), &inconclusive)| PointRow { x, value, inconclusive })
        .collect();
    if let Some(path) = &a.csv {
        write_atomic(path, to_csv(&rows)?.as_bytes())?;
    }
    emit(format, &serde_json::to_value(&report)?, &rows)?;
    Ok(None)
}

#[derive(Serialize)]
struct GridRow {
    a1: f64,
    a2: f64,
    estimate: f64,
    std_error: f64,
    zero_hits: bool,
}

fn optimize(format: Format, a: OptimizeArgs) -> Result<Option<ExitCode>> {
    let joint = load_joint(&a.joint)?;
    let problem = PortfolioProblem {
        models: joint.marginals(),
        c: a.c.clone(),
        constraint: parse_linear(&a.constraint, joint.dim())?,
        threshold: a.threshold,
    };
    if !a.verify {
        let sol = solve_two_stage(&problem)?;
        emit(format, &json!({ "solution": sol }), &[sol.clone()].map(|s| flat_solution(&s)))?;
        return Ok(None);
    }
    let seed = a.seed.context("--verify needs --seed")?;
    let v = grid_verify(&problem, a.grid_step, &EstimatorConfig { joint, n: a.n, seed })?;
    let rows: Vec<GridRow> = v
        .points
        .iter()
        .map(|p| GridRow {
            a1: p.a[0],
            a2: p.a[1],
            estimate: p.estimate.estimate,
            std_error: p.estimate.std_error,
            zero_hits: p.zero_hits,
        })
        .collect();
    if let Some(path) = &a.csv {
        write_atomic(path, to_csv(&rows)?.as_bytes())?;
    }
    let doc = json!({
        "solution": v.solution,
        "a_tilde": v.a_tilde,
        "e1": v.e1,
        "e2": v.e2,
        "relative_error": v.relative_error,
        "n": a.n,
        "seed": seed,
    });
    emit(format, &doc, &rows)?;
    Ok(None)
}

#[derive(Serialize)]
struct FlatSolution {
    a: String,
    m_d: f64,
    n_d: f64,
    approx_prob: f64,
    heuristic: bool,
}

fn flat_solution(s: &tailagg::PortfolioSolution) -> FlatSolution {
    let a = s.a.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";");
    FlatSolution { a, m_d: s.m_d, n_d: s.n_d, approx_prob: s.approx_prob, heuristic: s.heuristic }
}

#[derive(Serialize)]
struct TableSummary {
    table: u8,
    file: String,
    rows: usize,
    flagged: usize,
    informational: bool,
}

fn write_table<T: Serialize>(dir: &Path, table: u8, rows: &[T]) -> Result<String> {
    let name = format!("table{table}.csv");
    write_atomic(&dir.join(&name), to_csv(rows)?.as_bytes())?;
    Ok(name)
}

fn reproduce(format: Format, a: ReproduceArgs) -> Result<Option<ExitCode>> {
    if !(a.budget > 0.0 && a.budget <= 1.0) {
        bail!("--budget must lie in (0, 1], got {}", a.budget);
    }
    let mut which = a.tables.clone();
    which.sort_unstable();
    which.dedup();
    let seed = match (a.seed, which.iter().any(|t| *t > 1)) {
        (Some(s), _) => s,
        (None, false) => 0,
        (None, true) => bail!("tables 2-7 are simulated; pass --seed"),
    };
    let mut summaries = Vec::new();
    let mut flags = Vec::new();
    let mut table1_ok = true;
    for &t in &which {
        let informational = tables::INFORMATIONAL.contains(&t);
        let (file, rows, flagged) = match t {
            1 => {
                let rows = tables::table1()?;
                let bad: Vec<f64> = rows.iter().filter(|r| !r.matches).map(|r| r.threshold).collect();
                table1_ok = bad.is_empty();
                flags.extend(bad.iter().map(|x| json!({ "table": 1, "threshold": x })));
                (write_table(&a.out_dir, t, &rows)?, rows.len(), bad.len())
            }
            2..=4 => {
                let rows = tables::sim_table(t, a.budget, seed)?;
                let bad: Vec<&tables::SimRow> = rows.iter().filter(|r| r.flagged).collect();
                flags.extend(bad.iter().map(|r| {
                    json!({ "table": t, "threshold": r.threshold, "ratio": r.ratio, "printed_ratio": r.printed_ratio,
                            "half_width": r.half_width, "informational": informational })
                }));
                (write_table(&a.out_dir, t, &rows)?, rows.len(), bad.len())
            }
            _ => {
                let rows = tables::opt_table(t, a.budget, seed)?;
                let bad: Vec<&tables::OptRow> = rows.iter().filter(|r| r.flagged).collect();
                flags.extend(bad.iter().map(|r| {
                    json!({ "table": t, "threshold": r.threshold, "e1": r.e1, "printed_e1": r.printed_e1,
                            "informational": informational })
                }));
                (write_table(&a.out_dir, t, &rows)?, rows.len(), bad.len())
            }
        };
        summaries.push(TableSummary { table: t, file, rows, flagged, informational });
    }
    let report = json!({
        "budget": a.budget,
        "seed": seed,
        "table1_pass": table1_ok,
        "tables": summaries,
        "flags": flags,
    });
    write_atomic(&a.out_dir.join("report.json"), (serde_json::to_string_pretty(&report)? + "\n").as_bytes())?;
    emit(format, &report, &summaries)?;
    Ok(Some(if table1_ok { ExitCode::SUCCESS } else { ExitCode::FAILURE }))
}
