//! Finite-threshold profiles of the sufficient conditions.
//!
//! Nothing here certifies a limit. Each check evaluates a quantity on an
//! explicit threshold grid and classifies the profile with [`classify`].

use crate::dist::TailModel;
use crate::error::{Result, TailError};
use crate::joint::{JointEval, JointModel};
use crate::rng::map_blocks_ordered;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Conditioning events with fewer hits than this give an inconclusive point.
pub const MIN_HITS: u64 = 100;

/// Default Monte Carlo budget per grid point.
pub const DEFAULT_MC_BUDGET: usize = 1_000_000;

#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssumptionId {
    A1_MDA,
    A2_TailRatio,
    A3_CondY,
    A4_CondX,
    A5_JointAux,
    SubexpCriterion,
    AsyIndepRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "trend", rename_all = "snake_case")]
pub enum Trend {
    DecreasingToZero,
    ConvergingToConstant { limit: f64 },
    Diverging,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Quadrature,
    MonteCarlo { n: usize, seed: u64 },
}

/// Which conditional statement to profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Conditional {
    /// `P(|Y| > t f(x) | X > x)`.
    A3,
    /// `P(|X| > t f(x) | Y > x)`.
    A4,
}

/// Sampling budget for kinds without a closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McBudget {
    pub n: usize,
    pub seed: u64,
    /// Sample even when a closed form or quadrature route exists.
    pub force: bool,
}

impl McBudget {
    pub fn new(seed: u64) -> Self {
        McBudget { n: DEFAULT_MC_BUDGET, seed, force: false }
    }

    pub fn with_n(self, n: usize) -> Self {
        McBudget { n, ..self }
    }

    pub fn forced(self) -> Self {
        McBudget { force: true, ..self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub assumption_id: AssumptionId,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub trend: Trend,
    pub method: Method,
    /// Per-point flag for Monte Carlo points with too few conditioning hits.
    pub inconclusive: Vec<bool>,
}

impl AssumptionReport {
    fn new(assumption_id: AssumptionId, grid: &[f64], values: Vec<f64>, method: Method, inconclusive: Vec<bool>) -> Self {
        let kept: Vec<f64> = values.iter().zip(&inconclusive).filter(|(_, bad)| !**bad).map(|(v, _)| *v).collect();
        let trend = if kept.len() < 3 { Trend::Inconclusive } else { classify(&kept) };
        AssumptionReport { assumption_id, grid: grid.to_vec(), values, trend, method, inconclusive }
    }

    fn closed(assumption_id: AssumptionId, grid: &[f64], values: Vec<f64>, method: Method) -> Self {
        let flags = vec![false; values.len()];
        Self::new(assumption_id, grid, values, method, flags)
    }
}

/// `count` thresholds spaced evenly in log10 between `10^lo` and `10^hi`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![10f64.powf(lo)],
        _ => (0..count).map(|k| 10f64.powf(lo + (hi - lo) * k as f64 / (count - 1) as f64)).collect(),
    }
}

/// Nine thresholds from 10 to 10^5.
pub fn default_grid() -> Vec<f64> {
    log_grid(1.0, 5.0, 9)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(TailError::InvalidParameter("threshold grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|v| !v.is_finite()) {
        return Err(TailError::InvalidParameter("threshold grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// Classifies a profile.
///
/// * `DecreasingToZero`: nonincreasing over the last half and the final value
///   is zero or below a tenth of the first.
/// * `Diverging`: an infinite value, or nondecreasing over the last half with
///   the final value above ten times the first.
/// * `ConvergingToConstant`: the last two values agree within 2%.
pub fn classify(values: &[f64]) -> Trend {
    let n = values.len();
    if n < 2 || values.iter().any(|v| v.is_nan()) {
        return Trend::Inconclusive;
    }
    if values.iter().any(|v| v.is_infinite()) {
        return Trend::Diverging;
    }
    let tail = &values[n / 2..];
    let (first, last, prev) = (values[0], values[n - 1], values[n - 2]);
    if tail.windows(2).all(|w| w[1] <= w[0]) && (last == 0.0 || last < 0.1 * first) {
        return Trend::DecreasingToZero;
    }
    if tail.windows(2).all(|w| w[1] >= w[0]) && last > 10.0 * first.abs() && last > 0.0 {
        return Trend::Diverging;
    }
    if last != 0.0 && ((last - prev) / last).abs() <= 0.02 {
        return Trend::ConvergingToConstant { limit: last };
    }
    Trend::Inconclusive
}

fn method_of(eval: JointEval) -> Method {
    match eval {
        JointEval::ClosedForm => Method::ClosedForm,
        JointEval::Quadrature => Method::Quadrature,
    }
}

/// Worst deviation `max_t |F(x + t f(x)) / F(x) - e^{-t}|` at each threshold.
pub fn check_mda_gumbel(model: &TailModel, x_grid: &[f64], t_grid: &[f64]) -> Result<AssumptionReport> {
    check_grid(x_grid)?;
    let aux = model.auxiliary()?;
    let values = x_grid
        .par_iter()
        .map(|&x| {
            let base = model.log_survival(x);
            let fx = aux.eval(x);
            t_grid
                .iter()
                .map(|&t| ((model.log_survival(x + t * fx) - base).exp() - (-t).exp()).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(AssumptionReport::closed(AssumptionId::A1_MDA, x_grid, values, Method::ClosedForm))
}

/// Relative errors `|n P(X > a_n x + b_n) / e^{-x} - 1|` with `b_n` the
/// `1 - 1/n` quantile and `a_n = f(b_n)`.
pub fn gumbel_limit_errors(model: &TailModel, n: f64, xs: &[f64]) -> Result<Vec<f64>> {
    if !(n > 1.0 && n.is_finite()) {
        return Err(TailError::InvalidParameter(format!("n must exceed 1, got {n}")));
    }
    let aux = model.auxiliary()?;
    let b = model.upper_quantile(1.0 / n);
    let a = aux.eval(b);
    Ok(xs.iter().map(|&x| (n.ln() + model.log_survival(a * x + b) + x).exp_m1().abs()).collect())
}

/// `sup_x |P(max of n draws <= a_n x + b_n) - exp(-e^{-x})|` over `xs`.
pub fn gumbel_cdf_gap(model: &TailModel, n: f64, xs: &[f64]) -> Result<f64> {
    let aux = model.auxiliary()?;
    let b = model.upper_quantile(1.0 / n);
    let a = aux.eval(b);
    Ok(xs
        .iter()
        .map(|&x| ((n * model.log_cdf(a * x + b)).exp() - (-(-x).exp()).exp()).abs())
        .fold(0.0, f64::max))
}

/// `P(Y > x) / P(X > x)` along the grid.
pub fn check_tail_ratio(model_x: &TailModel, model_y: &TailModel, x_grid: &[f64]) -> Result<AssumptionReport> {
    check_grid(x_grid)?;
    let values = x_grid.iter().map(|&x| (model_y.log_survival(x) - model_x.log_survival(x)).exp()).collect();
    Ok(AssumptionReport::closed(AssumptionId::A2_TailRatio, x_grid, values, Method::ClosedForm))
}

/// `ln P(X_first > u, |X_second| > v)` where `second` may be signed.
fn log_upper_abs(model: &JointModel, focal: usize, u: f64, v: f64) -> Result<(f64, JointEval)> {
    let (upper, eval) = if focal == 0 {
        model.log_joint_survival_any(u, v)?
    } else {
        model.log_joint_survival_any(v, u)?
    };
    let other = model.marginal(1 - focal);
    if -v <= other.support_lower() {
        return Ok((upper, eval));
    }
    // Only the exchangeable iid kind can put mass below -v on a signed coordinate.
    let lower = match model.kind() {
        crate::joint::JointKind::Iid { marginal, .. } => marginal.log_survival(u) + marginal.log_cdf(-v),
        _ if focal == 0 => model.log_joint_upper_lower(u, -v)?,
        _ => return Err(TailError::UnsupportedKind("lower-tail joint probability".into())),
    };
    Ok((crate::special::log_add_exp(upper, lower), eval))
}

struct PointCount {
    cond_hits: u64,
    both_hits: u64,
}

fn mc_count<P, Q>(model: &JointModel, budget: McBudget, point: u64, cond: P, both: Q) -> PointCount
where
    P: Fn(&[f64]) -> bool + Sync + Send,
    Q: Fn(&[f64]) -> bool + Sync + Send,
{
    let d = model.dim();
    let seed = budget.seed.wrapping_add(point.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let parts = map_blocks_ordered(budget.n, seed, |s, len| {
        let mut row = vec![0.0; d];
        let (mut c, mut b) = (0u64, 0u64);
        for _ in 0..len {
            model.fill_row(s, &mut row);
            if cond(&row) {
                c += 1;
                if both(&row) {
                    b += 1;
                }
            }
        }
        (c, b)
    });
    let (cond_hits, both_hits) = parts.into_iter().fold((0, 0), |(a, b), (c, d)| (a + c, b + d));
    PointCount { cond_hits, both_hits }
}

/// Evaluates `closed` on every grid point, falling back to (or, when forced,
/// going straight to) `sampled`, which returns a value and its hit count.
fn profile<C, S>(
    id: AssumptionId,
    grid: &[f64],
    budget: Option<McBudget>,
    closed: C,
    sampled: S,
) -> Result<AssumptionReport>
where
    C: Fn(f64) -> Result<(f64, JointEval)>,
    S: Fn(McBudget, u64, f64) -> (f64, u64),
{
    let forced = budget.is_some_and(|b| b.force);
    if !forced {
        match grid.iter().map(|&x| closed(x)).collect::<Result<Vec<_>>>() {
            Ok(points) => {
                let method = method_of(points[0].1);
                let values = points.into_iter().map(|(v, _)| v).collect();
                return Ok(AssumptionReport::closed(id, grid, values, method));
            }
            Err(TailError::UnsupportedKind(msg)) if budget.is_none() => {
                return Err(TailError::UnsupportedKind(format!("{msg}; supply a Monte Carlo budget")));
            }
            Err(TailError::UnsupportedKind(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let budget = budget.expect("checked above");
    let (values, flags) = grid
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let (v, hits) = sampled(budget, i as u64, x);
            (v, hits < MIN_HITS)
        })
        .unzip();
    Ok(AssumptionReport::new(id, grid, values, Method::MonteCarlo { n: budget.n, seed: budget.seed }, flags))
}

fn conditional_ratio(c: PointCount) -> (f64, u64) {
    let v = if c.cond_hits > 0 { c.both_hits as f64 / c.cond_hits as f64 } else { f64::NAN };
    (v, c.cond_hits)
}

/// `P(|other| > t f(x) | focal > x)` along the grid, `f` being the auxiliary
/// function of the first coordinate.
///
/// Kinds without a closed form or quadrature route are sampled by rejection
/// on the conditioning event, `budget.n` rows per grid point.
pub fn check_conditional(
    model: &JointModel,
    which: Conditional,
    t: f64,
    x_grid: &[f64],
    budget: Option<McBudget>,
) -> Result<AssumptionReport> {
    check_grid(x_grid)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(TailError::InvalidParameter(format!("t must be positive, got {t}")));
    }
    let aux = model.marginal(0).auxiliary()?;
    let (id, focal) = match which {
        Conditional::A3 => (AssumptionId::A3_CondY, 0usize),
        Conditional::A4 => (AssumptionId::A4_CondX, 1usize),
    };
    let other = 1 - focal;
    let focal_model = model.marginal(focal);
    profile(
        id,
        x_grid,
        budget,
        |x| {
            let (num, eval) = log_upper_abs(model, focal, x, t * aux.eval(x))?;
            Ok(((num - focal_model.log_survival(x)).exp(), eval))
        },
        |b, i, x| {
            let cut = t * aux.eval(x);
            conditional_ratio(mc_count(model, b, i, |r| r[focal] > x, |r| r[other].abs() > cut))
        },
    )
}

/// `P(Y > L f(x), X > L f(x)) / P(X > x)` along the grid.
///
/// The Monte Carlo fallback estimates the joint exceedance and divides by the
/// exact marginal tail.
pub fn check_joint_aux(model: &JointModel, l: f64, x_grid: &[f64], budget: Option<McBudget>) -> Result<AssumptionReport> {
    check_grid(x_grid)?;
    if !(l > 0.0 && l.is_finite()) {
        return Err(TailError::InvalidParameter(format!("L must be positive, got {l}")));
    }
    let marginal = model.marginal(0);
    let aux = marginal.auxiliary()?;
    profile(
        AssumptionId::A5_JointAux,
        x_grid,
        budget,
        |x| {
            let u = l * aux.eval(x);
            let (num, eval) = model.log_joint_survival_any(u, u)?;
            Ok(((num - marginal.log_survival(x)).exp(), eval))
        },
        |b, i, x| {
            let u = l * aux.eval(x);
            let c = mc_count(model, b, i, |r| r[0] > u && r[1] > u, |_| true);
            let p = c.both_hits as f64 / b.n as f64;
            ((p.ln() - marginal.log_survival(x)).exp(), c.both_hits)
        },
    )
}

/// `P(X > L f(x))^2 / P(X > x)` along the grid; requires `f -> inf`.
pub fn check_subexp_criterion(model: &TailModel, l: f64, x_grid: &[f64]) -> Result<AssumptionReport> {
    check_grid(x_grid)?;
    if !(l > 0.0 && l.is_finite()) {
        return Err(TailError::InvalidParameter(format!("L must be positive, got {l}")));
    }
    let aux = model.auxiliary()?;
    if !aux.diverges() {
        return Err(TailError::AuxiliaryNotDiverging(model.to_string()));
    }
    let values = x_grid
        .iter()
        .map(|&x| (2.0 * model.log_survival(l * aux.eval(x)) - model.log_survival(x)).exp())
        .collect();
    Ok(AssumptionReport::closed(AssumptionId::SubexpCriterion, x_grid, values, Method::ClosedForm))
}

/// `P(X > x, Y > x) / P(X > x)` along the grid.
pub fn check_asy_indep(model: &JointModel, x_grid: &[f64], budget: Option<McBudget>) -> Result<AssumptionReport> {
    check_grid(x_grid)?;
    let marginal = model.marginal(0);
    profile(
        AssumptionId::AsyIndepRatio,
        x_grid,
        budget,
        |x| {
            let (num, eval) = model.log_joint_survival_any(x, x)?;
            Ok(((num - marginal.log_survival(x)).exp(), eval))
        },
        |b, i, x| conditional_ratio(mc_count(model, b, i, |r| r[0] > x, |r| r[1] > x)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::norm_sf;

    fn ln01() -> TailModel {
        TailModel::lognormal(0.0, 1.0).unwrap()
    }

    #[test]
    fn grid_shape() {
        let g = default_grid();
        assert_eq!(g.len(), 9);
        assert!((g[0] - 10.0).abs() < 1e-12 && (g[8] - 1e5).abs() < 1e-7);
        assert!(check_grid(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn classification_rules() {
        assert_eq!(classify(&[1.0, 0.5, 0.2, 0.05]), Trend::DecreasingToZero);
        assert_eq!(classify(&[0.0, 0.0, 0.0]), Trend::DecreasingToZero);
        assert_eq!(classify(&[1.0, 3.0, 9.0, 30.0]), Trend::Diverging);
        assert_eq!(classify(&[1.0, f64::INFINITY]), Trend::Diverging);
        assert_eq!(classify(&[2.0, 1.5, 1.01, 1.005]), Trend::ConvergingToConstant { limit: 1.005 });
        assert_eq!(classify(&[1.0, 2.0, 1.0, 2.0]), Trend::Inconclusive);
    }

    #[test]
    fn exponential_limit_is_exact() {
        let e = TailModel::exponential(1.0).unwrap();
        let errs = gumbel_limit_errors(&e, 1e8, &[-1.0, 0.0, 1.0, 2.0]).unwrap();
        assert!(errs.iter().all(|v| *v < 1e-6), "{errs:?}");
        assert!(gumbel_cdf_gap(&e, 1e8, &[-1.0, 0.0, 1.0]).unwrap() < 1e-6);
    }

    #[test]
    fn exponential_is_memoryless() {
        let r = check_mda_gumbel(&TailModel::exponential(1.0).unwrap(), &default_grid(), &[-1.0, 0.0, 1.0, 2.0]).unwrap();
        assert!(r.values.iter().all(|v| *v < 1e-12), "{:?}", r.values);
    }

    #[test]
    fn gumbel_profiles_shrink() {
        let grid = log_grid(2.0, 6.0, 9);
        let t = [-1.0, 0.0, 1.0, 2.0];
        let w = check_mda_gumbel(&TailModel::weibull_type(0.5).unwrap(), &grid, &t).unwrap();
        assert!(*w.values.last().unwrap() < 0.05, "{:?}", w.values);
        assert_eq!(w.trend, Trend::DecreasingToZero);
        // The lognormal profile is dominated by t = -1 and decays like 1/log x.
        let ln = check_mda_gumbel(&ln01(), &grid, &t).unwrap();
        let reference = [
            0.432_406_750_819_931_24,
            0.322_489_617_522_230_5,
            0.256_012_698_677_344_5,
            0.211_776_080_417_634_88,
            0.180_341_298_475_984_98,
            0.156_909_436_193_914_81,
            0.138_797_015_777_352_8,
            0.124_391_918_595_686_37,
            0.112_669_807_026_085_46,
        ];
        for (got, want) in ln.values.iter().zip(reference) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        assert!(ln.values.windows(2).all(|p| p[1] < p[0]));
    }

    #[test]
    fn conditional_iid_is_marginal_tail() {
        let m = JointModel::iid(ln01(), 2).unwrap();
        let r = check_conditional(&m, Conditional::A3, 1.0, &default_grid(), None).unwrap();
        for (x, v) in r.grid.iter().zip(&r.values) {
            let want = norm_sf((x / x.ln()).ln());
            assert!((v / want - 1.0).abs() < 1e-10);
        }
        assert_eq!(r.trend, Trend::DecreasingToZero);
        assert_eq!(r.method, Method::ClosedForm);
    }

    #[test]
    fn conditional_min_construction() {
        let m = JointModel::min_construction(2.0).unwrap();
        let grid = log_grid(2.0, 5.0, 7);
        let r = check_conditional(&m, Conditional::A3, 1.0, &grid, None).unwrap();
        let base = TailModel::log_weibull(2.0).unwrap();
        let aux = m.marginal(0).auxiliary().unwrap();
        for (x, v) in grid.iter().zip(&r.values) {
            assert!((v / base.survival(aux.eval(*x)) - 1.0).abs() < 1e-10);
        }
        assert_eq!(r.trend, Trend::DecreasingToZero);
    }

    #[test]
    fn conditional_comonotone_hits_zero() {
        let m = JointModel::comonotone_inverse(ln01()).unwrap();
        let r = check_conditional(&m, Conditional::A3, 1.0, &default_grid(), None).unwrap();
        assert_eq!(*r.values.last().unwrap(), 0.0);
        assert_eq!(r.trend, Trend::DecreasingToZero);
    }

    #[test]
    fn monte_carlo_fallback_matches_quadrature() {
        let m = JointModel::bivariate_lognormal(0.0, 1.0, 0.5).unwrap();
        let grid = [2.0, 4.0, 8.0];
        let q = check_asy_indep(&m, &grid, None).unwrap();
        assert_eq!(q.method, Method::Quadrature);
        let budget = McBudget::new(4).with_n(200_000).forced();
        let mc = check_asy_indep(&m, &grid, Some(budget)).unwrap();
        for i in 0..grid.len() {
            let p = q.values[i];
            let hits = 200_000.0 * m.marginal(0).survival(grid[i]);
            let se = (p * (1.0 - p) / hits).sqrt();
            assert!((mc.values[i] - p).abs() < 3.0 * se, "{i}: {} vs {p}", mc.values[i]);
        }
        let again = check_asy_indep(&m, &grid, Some(budget)).unwrap();
        assert_eq!(mc, again);
    }

    #[test]
    fn sparse_conditioning_is_flagged() {
        let m = JointModel::iid(ln01(), 2).unwrap();
        let budget = McBudget::new(1).with_n(10_000).forced();
        let r = check_asy_indep(&m, &[10.0, 100.0, 1000.0], Some(budget)).unwrap();
        assert_eq!(r.inconclusive, vec![false, true, true]);
        assert_eq!(r.trend, Trend::Inconclusive);
    }

    #[test]
    fn asymptotic_independence_ratios_fall() {
        for rho in [-0.9, 0.0, 0.9] {
            let m = JointModel::bivariate_lognormal(0.0, 1.0, rho).unwrap();
            let r = check_asy_indep(&m, &default_grid(), None).unwrap();
            assert!(r.values.windows(2).all(|w| w[1] < w[0] || w[1] == 0.0), "{rho}: {:?}", r.values);
            assert_eq!(r.trend, Trend::DecreasingToZero);
        }
    }

    #[test]
    fn subexp_criterion_cases() {
        let g = default_grid();
        let lw = check_subexp_criterion(&TailModel::log_weibull(2.0).unwrap(), 1.0, &g).unwrap();
        assert_eq!(lw.trend, Trend::DecreasingToZero, "{:?}", lw.values);
        let ln = check_subexp_criterion(&ln01(), 1.0, &g).unwrap();
        assert_eq!(ln.trend, Trend::DecreasingToZero, "{:?}", ln.values);
        let e = check_subexp_criterion(&TailModel::exponential(1.0).unwrap(), 1.0, &g);
        assert!(matches!(e, Err(TailError::AuxiliaryNotDiverging(_))));
    }

    #[test]
    fn weibull_pair_fails_joint_aux() {
        let m = JointModel::iid(TailModel::weibull_type(0.5).unwrap(), 2).unwrap();
        for l in [0.1, 1.0, 10.0] {
            let r = check_joint_aux(&m, l, &default_grid(), None).unwrap();
            assert_eq!(r.trend, Trend::Diverging, "{l}: {:?}", r.values);
        }
    }
}
