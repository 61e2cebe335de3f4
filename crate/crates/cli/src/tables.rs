//! Reproduction of the reference result tables.
//!
//! Table 1 is the antithetic lognormal pair (closed form); tables 2-4 are
//! conditional Monte Carlo sums of a bivariate lognormal pair at correlations
//! -0.9, 0 and 0.9; tables 5-7 audit the two-stage allocation for the budget
//! `2 a1 + 3 a2 >= 1` at the same three correlations.

use anyhow::Result;
use serde::{Deserialize, Serialize};
use tailagg::portfolio::EstimatorConfig;
use tailagg::rare_event::cond_mc_lognormal;
use tailagg::{approx_sum_pair, exact_comonotone_lognormal, grid_verify, Constraint, JointModel, PortfolioProblem, TailModel};

/// Draws per threshold for tables 2-4 at budget 1.
pub const MC_FULL: f64 = 1e7;
/// Draws per grid point for tables 5-7 at budget 1.
pub const GRID_FULL: f64 = 1e4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactRow {
    pub threshold: f64,
    pub exact: f64,
    pub asymptotic: f64,
    pub ratio: f64,
    pub printed_exact: f64,
    pub printed_asymptotic: f64,
    pub printed_ratio: f64,
    pub matches: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub table: u8,
    pub rho: f64,
    pub threshold: f64,
    pub estimate: f64,
    pub asymptotic: f64,
    pub ratio: f64,
    pub half_width: f64,
    pub printed_ratio: f64,
    pub printed_half_width: f64,
    pub n: u64,
    pub seed: u64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptRow {
    pub table: u8,
    pub rho: f64,
    pub threshold: f64,
    pub a_tilde1: f64,
    pub e1: f64,
    pub e2: f64,
    pub relative_error: f64,
    pub printed_a_tilde1: f64,
    pub printed_e1: f64,
    pub printed_e2: f64,
    pub printed_relative_error: f64,
    pub n: u64,
    pub seed: u64,
    pub flagged: bool,
}

/// (threshold, actual, asymptotic, ratio) as printed.
const TABLE1: [(f64, &str, &str, &str); 6] = [
    (10.0, "0.0219", "0.0213", "1.0272"),
    (16.0, "0.0056", "0.0056", "1.0121"),
    (24.0, "0.0015", "0.0015", "1.0060"),
    (30.0, "6.7365e-4", "6.7091e-4", "1.0041"),
    (100.0, "4.1233e-6", "4.1213e-6", "1.0005"),
    (1000.0, "4.9238e-12", "4.9238e-12", "1.0000"),
];

/// Table id, correlation and its printed rows.
type Printed<R> = (u8, f64, &'static [R]);

/// (threshold, ratio, half-width) per correlation.
const SIM: [Printed<(f64, f64, f64)>; 3] = [
    (
        2,
        -0.9,
        &[
            (3.0, 1.3556, 0.0006),
            (5.0, 1.1227, 0.0012),
            (10.0, 1.0375, 0.0026),
            (20.0, 1.0082, 0.0064),
            (30.0, 1.0265, 0.0119),
            (40.0, 0.9827, 0.0183),
            (50.0, 1.0235, 0.0285),
        ],
    ),
    (
        3,
        0.0,
        &[
            (10.0, 1.5844, 0.0033),
            (50.0, 1.1798, 0.0002),
            (100.0, 1.0927, 0.0001),
            (300.0, 1.0341, 0.0),
            (600.0, 1.0185, 0.0122),
            (1000.0, 1.0118, 0.0),
            (2000.0, 1.0106, 0.0),
        ],
    ),
    (
        4,
        0.9,
        &[
            (10.0, 2.4439, 0.0088),
            (30.0, 4.4081, 0.0275),
            (50.0, 5.7527, 0.0759),
            (75.0, 7.1077, 0.1843),
            (100.0, 8.3307, 0.3642),
        ],
    ),
];

/// (threshold, a~1, E1, E2, relative error) per correlation.
const OPT: [Printed<(f64, f64, f64, f64, f64)>; 3] = [
    (
        5,
        -0.9,
        &[
            (1.0, 0.13, 0.1097, 0.1204, 0.0975),
            (3.0, 0.18, 0.0067, 0.0069, 0.0322),
            (5.0, 0.19, 0.0013, 0.0013, 0.0294),
            (10.0, 0.19, 1.0299e-4, 1.0592e-4, 0.0284),
            (20.0, 0.21, 2.0806e-6, 2.0806e-6, 1.2213e-15),
        ],
    ),
    (
        6,
        0.0,
        &[
            (1.0, 0.03, 0.1349, 0.1723, 0.2765),
            (3.0, 0.16, 0.0093, 0.0101, 0.0759),
            (5.0, 0.18, 0.0016, 0.0017, 0.0503),
            (10.0, 0.19, 1.0424e-4, 1.0793e-4, 0.0354),
            (20.0, 0.20, 4.3888e-6, 4.3888e-6, 0.0),
        ],
    ),
    (
        7,
        0.9,
        &[
            (1.0, 0.01, 0.1360, 0.1798, 0.3223),
            (3.0, 0.01, 0.0140, 0.0208, 0.4831),
            (5.0, 0.02, 0.0033, 0.0050, 0.5146),
            (10.0, 0.02, 2.8357e-4, 4.9475e-4, 0.7447),
            (20.0, 0.04, 1.3241e-6, 2.4023e-6, 0.8142),
        ],
    ),
];

/// Tables whose printed values do not settle; their flags are informational.
pub const INFORMATIONAL: [u8; 2] = [4, 7];

fn ln01() -> TailModel {
    TailModel::lognormal(0.0, 1.0).expect("valid lognormal")
}

fn round_sig(v: f64, sig: i32) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    let scale = 10f64.powi(sig - 1 - v.abs().log10().floor() as i32);
    (v * scale).round() / scale
}

fn printed_sig(text: &str) -> i32 {
    let mantissa = text.split(['e', 'E']).next().unwrap_or(text);
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    digits.trim_start_matches('0').len() as i32
}

/// Agreement at the printed precision, capped at four significant figures.
pub fn agrees(ours: f64, printed: &str) -> bool {
    let want: f64 = printed.parse().unwrap_or(f64::NAN);
    let sig = printed_sig(printed).min(4);
    round_sig(ours, sig) == round_sig(want, sig)
}

pub fn table1() -> Result<Vec<ExactRow>> {
    TABLE1
        .iter()
        .map(|&(x, actual, asym, ratio)| {
            let exact = exact_comonotone_lognormal(0.0, x).estimate;
            let asymptotic = approx_sum_pair(&ln01(), &ln01(), x, None)?.value;
            let r = exact / asymptotic;
            let matches = agrees(exact, actual) && agrees(asymptotic, asym) && format!("{r:.4}") == ratio;
            Ok(ExactRow {
                threshold: x,
                exact,
                asymptotic,
                ratio: r,
                printed_exact: actual.parse()?,
                printed_asymptotic: asym.parse()?,
                printed_ratio: ratio.parse()?,
                matches,
            })
        })
        .collect()
}

fn row_seed(seed: u64, table: u8, row: usize) -> u64 {
    seed.wrapping_add(((table as u64) << 32) | row as u64)
}

pub fn sim_table(table: u8, budget: f64, seed: u64) -> Result<Vec<SimRow>> {
    let (_, rho, rows) = SIM.iter().find(|t| t.0 == table).expect("simulation table id");
    let n = (MC_FULL * budget).round().max(1.0) as usize;
    rows.iter()
        .enumerate()
        .map(|(i, &(x, printed_ratio, printed_hw))| {
            let s = row_seed(seed, table, i);
            let est = cond_mc_lognormal(0.0, 1.0, *rho, &[1.0, 1.0], x, n, s)?;
            let asymptotic = approx_sum_pair(&ln01(), &ln01(), x, None)?.value;
            let ratio = est.estimate / asymptotic;
            let half_width = est.half_width95 / asymptotic;
            let tol = 3.0 * (half_width * half_width + printed_hw * printed_hw).sqrt();
            Ok(SimRow {
                table,
                rho: *rho,
                threshold: x,
                estimate: est.estimate,
                asymptotic,
                ratio,
                half_width,
                printed_ratio,
                printed_half_width: printed_hw,
                n: n as u64,
                seed: s,
                flagged: (ratio - printed_ratio).abs() > tol,
            })
        })
        .collect()
}

pub fn opt_table(table: u8, budget: f64, seed: u64) -> Result<Vec<OptRow>> {
    let (_, rho, rows) = OPT.iter().find(|t| t.0 == table).expect("optimizer table id");
    let n = (GRID_FULL * budget).round().max(100.0) as usize;
    let joint = JointModel::bivariate_lognormal(0.0, 1.0, *rho)?;
    rows.iter()
        .enumerate()
        .map(|(i, &(x, pa, pe1, pe2, prel))| {
            let s = row_seed(seed, table, i);
            let problem = PortfolioProblem {
                models: vec![ln01(), ln01()],
                c: None,
                constraint: Constraint::Linear { l: vec![2.0, 3.0], level: 1.0 },
                threshold: x,
            };
            let v = grid_verify(&problem, 0.01, &EstimatorConfig { joint: joint.clone(), n, seed: s })?;
            let se = v
                .points
                .iter()
                .find(|p| p.a == v.a_tilde)
                .map(|p| p.estimate.std_error)
                .unwrap_or(0.0);
            // The printed E1 came from plain sampling with the full grid budget.
            let printed_se = (pe1 * (1.0 - pe1) / GRID_FULL).sqrt();
            let tol = 3.0 * (se * se + printed_se * printed_se).sqrt();
            Ok(OptRow {
                table,
                rho: *rho,
                threshold: x,
                a_tilde1: v.a_tilde[0],
                e1: v.e1,
                e2: v.e2,
                relative_error: v.relative_error,
                printed_a_tilde1: pa,
                printed_e1: pe1,
                printed_e2: pe2,
                printed_relative_error: prel,
                n: n as u64,
                seed: s,
                flagged: (v.e1 - pe1).abs() > tol,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table1_rows_all_match() {
        let rows = table1().unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.matches), "{rows:?}");
    }

    #[test]
    fn printed_precision() {
        assert_eq!(printed_sig("0.0219"), 3);
        assert_eq!(printed_sig("6.7365e-4"), 5);
        assert!(agrees(4.923858736e-12, "4.9238e-12"));
        assert!(!agrees(0.0122, "0.0219"));
    }

    #[test]
    fn small_budget_keeps_threshold_order() {
        let rows = sim_table(3, 1e-3, 5).unwrap();
        assert_eq!(rows.iter().map(|r| r.threshold).collect::<Vec<_>>(), vec![10.0, 50.0, 100.0, 300.0, 600.0, 1000.0, 2000.0]);
        assert!(rows.iter().all(|r| r.n == 10_000));
    }
}
