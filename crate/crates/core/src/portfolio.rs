//! Allocation that minimises the asymptotic tail probability of `sum a_i X_i`
//! under an earnings constraint, and a brute-force audit of the result.
//!
//! The two-stage heuristic first minimises the largest coefficient `m_d`,
//! then the tie constant `N_d` among allocations achieving it.

use crate::asymptotic::{approx_linear_with_ratios, probe_tail_ratio};
use crate::dist::TailModel;
use crate::error::{Result, TailError};
use crate::joint::JointModel;
use crate::rare_event::{cond_mc, plain_mc, EstimateResult};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Default sample size per audited grid point.
pub const DEFAULT_GRID_BUDGET: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Constraint {
    /// `sum a_i l_i >= level`.
    Linear { l: Vec<f64>, level: f64 },
    /// An explicit feasible set.
    Grid { candidates: Vec<Vec<f64>> },
}

impl Constraint {
    /// Keeps the candidates with `h(a) >= level`.
    pub fn grid_from<H: Fn(&[f64]) -> f64>(h: H, level: f64, candidates: Vec<Vec<f64>>) -> Self {
        Constraint::Grid { candidates: candidates.into_iter().filter(|a| h(a) >= level).collect() }
    }

    pub fn is_satisfied(&self, a: &[f64], tol: f64) -> bool {
        match self {
            Constraint::Linear { l, level } => a.iter().zip(l).map(|(x, y)| x * y).sum::<f64>() >= level - tol,
            Constraint::Grid { candidates } => candidates.iter().any(|c| c.as_slice() == a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioProblem {
    pub models: Vec<TailModel>,
    /// Tail-ratio constants relative to `models[0]`; probed when absent.
    #[serde(default)]
    pub c: Option<Vec<f64>>,
    pub constraint: Constraint,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    /// Optimal largest coefficient.
    pub stage1_m: f64,
    /// Optimal tie constant given `stage1_m`.
    pub stage2_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioSolution {
    pub a: Vec<f64>,
    pub m_d: f64,
    pub n_d: f64,
    pub approx_prob: f64,
    pub stage_trace: StageTrace,
    /// The objective is an asymptotic surrogate, so the answer is not certified.
    pub heuristic: bool,
}

impl PortfolioProblem {
    fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(TailError::InvalidParameter("at least one model is required".into()));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(TailError::InvalidParameter(format!("threshold must be positive, got {}", self.threshold)));
        }
        if let Some(c) = &self.c {
            if c.len() != self.models.len() || c.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(TailError::InvalidParameter("need one positive finite tail ratio per model".into()));
            }
        }
        match &self.constraint {
            Constraint::Linear { l, level } => {
                if l.len() != self.models.len() {
                    return Err(TailError::InvalidParameter("one constraint weight per model is required".into()));
                }
                if l.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(TailError::Unsupported("the closed form needs strictly positive weights".into()));
                }
                if !(level.is_finite() && *level >= 0.0) {
                    return Err(TailError::InvalidParameter(format!("level must be nonnegative, got {level}")));
                }
            }
            Constraint::Grid { candidates } => {
                if candidates.is_empty() {
                    return Err(TailError::InfeasibleConstraint("the feasible grid is empty".into()));
                }
                if candidates.iter().any(|a| a.len() != self.models.len() || a.iter().any(|v| !(v.is_finite() && *v >= 0.0))) {
                    return Err(TailError::InvalidParameter("grid candidates must be nonnegative, one entry per model".into()));
                }
            }
        }
        Ok(())
    }

    fn ratios(&self, x_eff: f64) -> Result<Vec<f64>> {
        if let Some(c) = &self.c {
            return Ok(c.clone());
        }
        let mut c = vec![1.0];
        for (i, m) in self.models.iter().enumerate().skip(1) {
            let ci = probe_tail_ratio(&self.models[0], m, x_eff, i)?;
            if ci == 0.0 {
                return Err(TailError::ZeroTailRatio { index: i });
            }
            c.push(ci);
        }
        Ok(c)
    }
}

fn tie_constant(a: &[f64], c: &[f64]) -> (f64, f64) {
    let m = a.iter().cloned().fold(0.0, f64::max);
    (m, a.iter().zip(c).filter(|(ai, _)| **ai == m).map(|(_, ci)| ci).sum())
}

fn finish(p: &PortfolioProblem, a: Vec<f64>, c: &[f64]) -> Result<PortfolioSolution> {
    let (m_d, n_d, approx_prob) = if a.iter().all(|v| *v == 0.0) {
        let (_, n) = tie_constant(&a, c);
        (0.0, n, 0.0)
    } else {
        let r = approx_linear_with_ratios(&p.models, &a, p.threshold, Some(c))?;
        (r.recipe.m_d, r.recipe.n_d, r.value)
    };
    Ok(PortfolioSolution {
        a,
        m_d,
        n_d,
        approx_prob,
        stage_trace: StageTrace { stage1_m: m_d, stage2_n: n_d },
        heuristic: true,
    })
}

/// Two-stage minimax allocation.
///
/// For a linear constraint with positive weights every coordinate sits at the
/// common maximum `L / sum l_j`, so stage two has nothing left to choose. On a
/// grid, stage one keeps the candidates with the smallest maximum, stage two
/// the smallest tie constant, and remaining ties go to the lexicographically
/// smallest allocation.
pub fn solve_two_stage(p: &PortfolioProblem) -> Result<PortfolioSolution> {
    p.validate()?;
    match &p.constraint {
        Constraint::Linear { l, level } => {
            let share = level / l.iter().sum::<f64>();
            let a = vec![share; l.len()];
            let c = if share > 0.0 { p.ratios(p.threshold / share)? } else { p.c.clone().unwrap_or(vec![1.0; l.len()]) };
            finish(p, a, &c)
        }
        Constraint::Grid { candidates } => {
            let m_star = candidates.iter().map(|a| a.iter().cloned().fold(0.0, f64::max)).fold(f64::INFINITY, f64::min);
            let c = if m_star > 0.0 { p.ratios(p.threshold / m_star)? } else { vec![1.0; p.models.len()] };
            let best = candidates
                .iter()
                .filter(|a| a.iter().cloned().fold(0.0, f64::max) == m_star)
                .min_by(|x, y| {
                    let (nx, ny) = (tie_constant(x, &c).1, tie_constant(y, &c).1);
                    nx.total_cmp(&ny).then_with(|| {
                        x.iter().zip(y.iter()).map(|(u, v)| u.total_cmp(v)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
                    })
                })
                .expect("nonempty grid");
            finish(p, best.clone(), &c)
        }
    }
}

/// Sampler settings for [`grid_verify`].
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub joint: JointModel,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub a: Vec<f64>,
    pub estimate: EstimateResult,
    /// The estimator returned exactly zero.
    pub zero_hits: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridVerification {
    pub solution: PortfolioSolution,
    /// Empirical argmin over the grid.
    pub a_tilde: Vec<f64>,
    /// Smallest estimated tail probability on the grid.
    pub e1: f64,
    /// Estimated tail probability at the two-stage solution.
    pub e2: f64,
    pub relative_error: f64,
    pub points: Vec<GridPoint>,
}

fn estimate_at(joint: &JointModel, a: &[f64], x: f64, n: usize, seed: u64) -> Result<EstimateResult> {
    if let Some(i) = a.iter().position(|v| *v == 0.0) {
        let j = 1 - i;
        return Ok(EstimateResult::exact(if a[j] == 0.0 {
            f64::from(x < 0.0)
        } else {
            joint.marginal(j).survival(x / a[j])
        }));
    }
    match cond_mc(joint, a, x, n, seed) {
        Err(TailError::UnsupportedKind(_)) | Err(TailError::Unsupported(_)) => plain_mc(joint, a, x, n, seed),
        other => other,
    }
}

/// Audits the two-stage answer for two assets under a linear constraint.
///
/// `a_1` runs over `0, step, 2 step, ...` up to `L / l_1`, with `a_2` set by the
/// binding constraint. Points with a zero coefficient are exact; the others
/// share one seed so neighbouring estimates use common random numbers.
pub fn grid_verify(p: &PortfolioProblem, grid_step: f64, est: &EstimatorConfig) -> Result<GridVerification> {
    let (l, level) = match &p.constraint {
        Constraint::Linear { l, level } if l.len() == 2 => (l.clone(), *level),
        _ => return Err(TailError::Unsupported("grid verification needs a two-asset linear constraint".into())),
    };
    if est.joint.dim() != 2 {
        return Err(TailError::InvalidParameter("grid verification needs a bivariate model".into()));
    }
    if !(grid_step > 0.0 && grid_step.is_finite()) {
        return Err(TailError::InvalidParameter(format!("grid step must be positive, got {grid_step}")));
    }
    let solution = solve_two_stage(p)?;
    let top = level / l[0];
    let steps = (top / grid_step + 1e-9).floor() as usize;
    let grid: Vec<Vec<f64>> = (0..=steps)
        .map(|k| {
            let a1 = (k as f64 * grid_step).min(top);
            vec![a1, ((level - l[0] * a1) / l[1]).max(0.0)]
        })
        .collect();
    let points: Vec<GridPoint> = grid
        .into_par_iter()
        .map(|a| {
            let estimate = estimate_at(&est.joint, &a, p.threshold, est.n, est.seed)?;
            Ok(GridPoint { zero_hits: estimate.estimate == 0.0, a, estimate })
        })
        .collect::<Result<_>>()?;
    let (best, _) = points
        .iter()
        .enumerate()
        .min_by(|(i, x), (j, y)| x.estimate.estimate.total_cmp(&y.estimate.estimate).then(i.cmp(j)))
        .expect("grid has at least one point");
    let e1 = points[best].estimate.estimate;
    let on_grid = points
        .iter()
        .find(|pt| pt.a.iter().zip(&solution.a).all(|(u, v)| (u - v).abs() <= 1e-9 * v.abs().max(1.0)));
    let e2 = match on_grid {
        Some(pt) => pt.estimate.estimate,
        None => estimate_at(&est.joint, &solution.a, p.threshold, est.n, est.seed)?.estimate,
    };
    Ok(GridVerification {
        a_tilde: points[best].a.clone(),
        e1,
        e2,
        relative_error: (e2 - e1) / e1,
        solution,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ln01() -> TailModel {
        TailModel::lognormal(0.0, 1.0).unwrap()
    }

    fn linear(l: Vec<f64>, level: f64, threshold: f64) -> PortfolioProblem {
        PortfolioProblem {
            models: vec![ln01(); l.len()],
            c: None,
            constraint: Constraint::Linear { l, level },
            threshold,
        }
    }

    #[test]
    fn equal_allocation() {
        let s = solve_two_stage(&linear(vec![2.0, 3.0], 1.0, 10.0)).unwrap();
        assert_eq!(s.a, vec![0.2, 0.2]);
        assert_eq!(s.n_d, 2.0);
        assert!(s.heuristic);
        assert!((s.approx_prob - 2.0 * ln01().survival(50.0)).abs() < 1e-18);
        let s = solve_two_stage(&linear(vec![1.0; 4], 4.0, 10.0)).unwrap();
        assert_eq!(s.a, vec![1.0; 4]);
    }

    #[test]
    fn zero_level_is_degenerate() {
        let s = solve_two_stage(&linear(vec![2.0, 3.0], 0.0, 10.0)).unwrap();
        assert_eq!(s.a, vec![0.0, 0.0]);
        assert_eq!(s.approx_prob, 0.0);
    }

    #[test]
    fn nonpositive_weights_are_refused() {
        let err = solve_two_stage(&linear(vec![2.0, 0.0], 1.0, 10.0)).unwrap_err();
        assert!(matches!(err, TailError::Unsupported(_)));
    }

    #[test]
    fn grid_stage_two_prefers_fewer_ties() {
        let h = |a: &[f64]| a.iter().sum::<f64>();
        let cands = vec![vec![0.5, 0.5], vec![0.5, 0.6], vec![0.6, 0.4], vec![0.5, 0.4], vec![0.3, 0.2]];
        let p = PortfolioProblem {
            models: vec![ln01(), ln01()],
            c: None,
            constraint: Constraint::grid_from(h, 0.9, cands),
            threshold: 10.0,
        };
        let s = solve_two_stage(&p).unwrap();
        assert_eq!(s.a, vec![0.5, 0.4]);
        assert_eq!(s.m_d, 0.5);
        assert_eq!(s.n_d, 1.0);
        let empty = PortfolioProblem { constraint: Constraint::Grid { candidates: vec![] }, ..p };
        assert!(matches!(solve_two_stage(&empty), Err(TailError::InfeasibleConstraint(_))));
    }

    #[test]
    fn grid_verify_shape() {
        let p = linear(vec![2.0, 3.0], 1.0, 20.0);
        let est = EstimatorConfig { joint: JointModel::bivariate_lognormal(0.0, 1.0, 0.0).unwrap(), n: 2000, seed: 3 };
        let v = grid_verify(&p, 0.01, &est).unwrap();
        assert_eq!(v.points.len(), 51);
        assert_eq!(v.points[0].estimate.method, crate::rare_event::EstimateMethod::Exact);
        assert_eq!(v.points[50].a[1], 0.0);
        assert!((v.points[0].estimate.estimate - ln01().survival(60.0)).abs() < 1e-18);
        assert!(v.e1 <= v.e2);
        assert_eq!(v, grid_verify(&p, 0.01, &est).unwrap());
    }
}
