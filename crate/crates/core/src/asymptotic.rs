//! Closed-form tail approximations for sums, nonnegative linear combinations
//! and power sums of asymptotically independent Gumbel-domain risks.
//!
//! Every approximation reduces to `N * P(X_1 > x / m)` for a dominant model
//! `X_1`, a leading coefficient `m` and a constant `N` collected from the
//! tail-ratio constants `c_i = lim P(X_i > x) / P(X_1 > x)`.

use crate::dist::TailModel;
use crate::error::{Result, TailError};
use serde::Serialize;

/// Probe multipliers for numerical tail-ratio limits.
pub const PROBE_MULTIPLIERS: [f64; 4] = [1.0, 2.0, 4.0, 8.0];

/// Relative spread allowed between the last two probe ratios.
pub const PROBE_STABILITY: f64 = 0.01;

/// Relative gap under which two unequal coefficients trigger a near-tie warning.
pub const NEAR_TIE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recipe {
    /// Tail-ratio constants, `c[0] = 1`.
    pub c: Vec<f64>,
    /// Largest coefficient.
    pub m_d: f64,
    /// Sum of `c_i` over the coefficients equal to `m_d`.
    pub n_d: f64,
    pub beta: Option<f64>,
    pub q_d: Option<f64>,
    pub j_d: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ApproxResult {
    pub value: f64,
    pub log_value: f64,
    pub recipe: Recipe,
    pub dominant_model: TailModel,
    /// Near-tie lints and similar notes; empty when nothing looked suspicious.
    pub warnings: Vec<String>,
}

impl ApproxResult {
    fn new(recipe: Recipe, dominant_model: TailModel, x: f64, warnings: Vec<String>) -> Self {
        let log_value = recipe.n_d.ln() + dominant_model.log_survival(x / recipe.m_d);
        ApproxResult { value: log_value.exp(), log_value, recipe, dominant_model, warnings }
    }

    pub fn log10_value(&self) -> f64 {
        self.log_value / std::f64::consts::LN_10
    }
}

/// Numerical estimate of `lim P(other > t) / P(heavy > t)` from the probes
/// `x * {1, 2, 4, 8}`.
///
/// Returns the last ratio once the last two agree within 1%. A ratio that
/// keeps falling by at least half per doubling (or drops below 1e-12) is
/// reported as zero; one that keeps doubling is an error, as is anything else.
pub fn probe_tail_ratio(heavy: &TailModel, other: &TailModel, x: f64, index: usize) -> Result<f64> {
    let probes: Vec<f64> = PROBE_MULTIPLIERS.iter().map(|m| m * x).collect();
    let log_ratios: Vec<f64> = probes.iter().map(|&t| other.log_survival(t) - heavy.log_survival(t)).collect();
    let n = log_ratios.len();
    let (prev, last) = (log_ratios[n - 2], log_ratios[n - 1]);
    let ratios = || log_ratios.iter().map(|l| l.exp()).collect::<Vec<f64>>();
    if last == f64::NEG_INFINITY && prev == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    if ((last - prev).exp() - 1.0).abs() < PROBE_STABILITY {
        return Ok(last.exp());
    }
    let falling = log_ratios.windows(2).all(|w| w[1] < w[0]);
    if falling && (last < (1e-12f64).ln() || last - prev < -std::f64::consts::LN_2) {
        return Ok(0.0);
    }
    let rising = log_ratios.windows(2).all(|w| w[1] > w[0]);
    if rising && last - prev > std::f64::consts::LN_2 {
        return Err(TailError::HeavierLaterTail { index, ratios: ratios() });
    }
    Err(TailError::NonStabilizingRatio { probes, ratios: ratios() })
}

fn near_tie_warnings(label: &str, values: &[f64]) -> Vec<String> {
    let mut out = Vec::new();
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            let (a, b) = (values[i], values[j]);
            if a != b && (a - b).abs() <= NEAR_TIE * a.abs().max(b.abs()) {
                let msg = format!("{label}[{i}] = {a} and {label}[{j}] = {b} differ by less than {NEAR_TIE} relatively but are not tied");
                log::warn!("{msg}");
                out.push(msg);
            }
        }
    }
    out
}

/// `P(X + Y > x) ~ (1 + c) P(X > x)`; `c` is probed when not supplied.
pub fn approx_sum_pair(model_x: &TailModel, model_y: &TailModel, x: f64, c: Option<f64>) -> Result<ApproxResult> {
    model_x.auxiliary()?;
    let c = match c {
        Some(c) if c.is_finite() && c >= 0.0 => c,
        Some(c) => return Err(TailError::InvalidParameter(format!("tail ratio must be finite and nonnegative, got {c}"))),
        None => probe_tail_ratio(model_x, model_y, x, 1)?,
    };
    let recipe = Recipe { c: vec![1.0, c], m_d: 1.0, n_d: 1.0 + c, beta: None, q_d: None, j_d: None };
    Ok(ApproxResult::new(recipe, model_x.clone(), x, Vec::new()))
}

/// `P(X_1 + ... + X_d > x) ~ (1 + c_2 + ... + c_d) P(X_1 > x)` for nonnegative risks
/// with `models[0]` the heaviest.
pub fn approx_sum_d(models: &[TailModel], x: f64) -> Result<ApproxResult> {
    let ones = vec![1.0; models.len()];
    let c = collect_ratios(models, &ones, x, None, true)?;
    let n_d = c.iter().sum();
    let recipe = Recipe { c, m_d: 1.0, n_d, beta: None, q_d: None, j_d: None };
    Ok(ApproxResult::new(recipe, models[0].clone(), x, Vec::new()))
}

fn collect_ratios(
    models: &[TailModel],
    a: &[f64],
    x_eff: f64,
    supplied: Option<&[f64]>,
    allow_zero: bool,
) -> Result<Vec<f64>> {
    if models.is_empty() {
        return Err(TailError::InvalidParameter("at least one model is required".into()));
    }
    if let Some(m) = models.iter().find(|m| !m.is_nonnegative()) {
        return Err(TailError::InvalidParameter(format!("{m} is not supported on [0, inf)")));
    }
    models[0].auxiliary()?;
    if let Some(c) = supplied {
        if c.len() != models.len() {
            return Err(TailError::InvalidParameter("one tail ratio per model is required".into()));
        }
        if c.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(TailError::InvalidParameter("tail ratios must be finite and nonnegative".into()));
        }
    }
    let mut c = Vec::with_capacity(models.len());
    c.push(1.0);
    for i in 1..models.len() {
        let ci = match supplied {
            Some(s) => s[i],
            None if a[i] == 0.0 => 1.0,
            None => probe_tail_ratio(&models[0], &models[i], x_eff, i)?,
        };
        if ci == 0.0 && !allow_zero && a[i] > 0.0 {
            return Err(TailError::ZeroTailRatio { index: i });
        }
        c.push(ci);
    }
    Ok(c)
}

fn check_coefficients(models_len: usize, a: &[f64]) -> Result<f64> {
    if a.len() != models_len {
        return Err(TailError::InvalidParameter(format!("{} coefficients for {} models", a.len(), models_len)));
    }
    if a.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(TailError::InvalidParameter("coefficients must be finite and nonnegative".into()));
    }
    let m = a.iter().cloned().fold(0.0, f64::max);
    if m <= 0.0 {
        return Err(TailError::InvalidParameter("at least one coefficient must be positive".into()));
    }
    Ok(m)
}

/// `P(sum a_i X_i > x) ~ N_d P(X_1 > x / m_d)` for tail-equivalent risks.
pub fn approx_linear(models: &[TailModel], a: &[f64], x: f64) -> Result<ApproxResult> {
    approx_linear_with_ratios(models, a, x, None)
}

/// As [`approx_linear`], with analytically known tail ratios (`c[0]` is ignored
/// and taken as one).
pub fn approx_linear_with_ratios(models: &[TailModel], a: &[f64], x: f64, c: Option<&[f64]>) -> Result<ApproxResult> {
    let m_d = check_coefficients(models.len(), a)?;
    let mut c = collect_ratios(models, a, x / m_d, c, false)?;
    c[0] = 1.0;
    // Ties are exact: the constant is defined by equality, not closeness.
    let n_d = a.iter().zip(&c).filter(|(ai, _)| **ai == m_d).map(|(_, ci)| ci).sum();
    let warnings = near_tie_warnings("a", a);
    let recipe = Recipe { c, m_d, n_d, beta: None, q_d: None, j_d: None };
    Ok(ApproxResult::new(recipe, models[0].clone(), x, warnings))
}

/// `P(sum a_i Y_i^beta_i > x) ~ J_d P(Y_1^beta > x / q_d)` for identically
/// distributed nonnegative `Y_i ~ base`.
pub fn approx_powers(base: &TailModel, a: &[f64], beta: &[f64], x: f64) -> Result<ApproxResult> {
    if a.len() != beta.len() || a.is_empty() {
        return Err(TailError::InvalidParameter("coefficients and powers must have equal, nonzero length".into()));
    }
    if !base.is_nonnegative() {
        return Err(TailError::InvalidParameter(format!("{base} is not supported on [0, inf)")));
    }
    if a.iter().chain(beta).any(|v| !v.is_finite() || *v < 0.0) {
        return Err(TailError::InvalidParameter("coefficients and powers must be finite and nonnegative".into()));
    }
    let top_beta = beta.iter().cloned().fold(0.0, f64::max);
    if top_beta <= 0.0 {
        return Err(TailError::InvalidParameter("at least one power must be positive".into()));
    }
    let q_d = a.iter().zip(beta).filter(|(_, b)| **b == top_beta).map(|(ai, _)| *ai).fold(0.0, f64::max);
    if q_d <= 0.0 {
        return Err(TailError::InvalidParameter("the leading power carries only zero coefficients".into()));
    }
    let j_d = a.iter().zip(beta).filter(|(ai, b)| **b == top_beta && **ai == q_d).count();
    let induced = base.clone().with_power(top_beta)?;
    let aux = induced.clone().with_scale(q_d)?.auxiliary()?;
    if !aux.diverges() {
        return Err(TailError::AuxiliaryNotDiverging(format!("{q_d} * ({base})^{top_beta}")));
    }
    let mut warnings = near_tie_warnings("a", a);
    warnings.extend(near_tie_warnings("beta", beta));
    let recipe = Recipe {
        c: vec![1.0; a.len()],
        m_d: q_d,
        n_d: j_d as f64,
        beta: Some(top_beta),
        q_d: Some(q_d),
        j_d: Some(j_d),
    };
    Ok(ApproxResult::new(recipe, induced, x, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::norm_sf;

    fn ln01() -> TailModel {
        TailModel::lognormal(0.0, 1.0).unwrap()
    }

    #[test]
    fn iid_lognormal_pair_at_thirty() {
        let r = approx_sum_pair(&ln01(), &ln01(), 30.0, None).unwrap();
        assert!((r.value - 6.7091e-4).abs() < 5e-9, "{}", r.value);
        assert_eq!(r.recipe.n_d, 2.0);
    }

    #[test]
    fn zero_ratio_gives_marginal_tail() {
        let r = approx_sum_pair(&ln01(), &ln01(), 12.0, Some(0.0)).unwrap();
        assert!((r.value - ln01().survival(12.0)).abs() < 1e-17);
    }

    #[test]
    fn lighter_lognormal_probes_to_zero() {
        let light = TailModel::lognormal(0.0, 0.5).unwrap();
        let r = approx_sum_pair(&ln01(), &light, 100.0, None).unwrap();
        assert_eq!(r.recipe.c[1], 0.0);
        assert!(((r.value - norm_sf(100f64.ln())) / r.value).abs() < 1e-12);
    }

    #[test]
    fn heavier_second_model_is_rejected() {
        let heavy = TailModel::lognormal(0.0, 2.0).unwrap();
        let err = approx_sum_pair(&ln01(), &heavy, 50.0, None).unwrap_err();
        assert!(matches!(err, TailError::HeavierLaterTail { index: 1, .. }), "{err:?}");
    }

    #[test]
    fn three_iid_lognormals() {
        let r = approx_sum_d(&[ln01(), ln01(), ln01()], 50.0).unwrap();
        let want = 3.0 * (9.1526e-5 / 2.0);
        assert!((r.value - want).abs() < 5e-9, "{}", r.value);
    }

    #[test]
    fn single_model_sum_is_its_tail() {
        let r = approx_sum_d(&[ln01()], 7.0).unwrap();
        assert_eq!(r.value, ln01().survival(7.0));
    }

    #[test]
    fn weibull_term_is_negligible_against_lognormal() {
        let w = TailModel::weibull_type(0.5).unwrap();
        let r = approx_sum_d(&[ln01(), w], 100.0).unwrap();
        assert_eq!(r.recipe.c[1], 0.0);
        assert!(((r.value - norm_sf(100f64.ln())) / r.value).abs() < 1e-12);
    }

    #[test]
    fn unequal_coefficients_keep_the_largest() {
        let r = approx_linear(&[ln01(), ln01()], &[3.0, 2.0], 40.0).unwrap();
        assert_eq!(r.recipe.n_d, 1.0);
        assert_eq!(r.recipe.m_d, 3.0);
        assert!((r.value - ln01().survival(40.0 / 3.0)).abs() < 1e-16);
    }

    #[test]
    fn equal_coefficients_double() {
        let r = approx_linear(&[ln01(), ln01()], &[0.7, 0.7], 10.0).unwrap();
        assert!(((r.value - 2.0 * ln01().survival(10.0 / 0.7)) / r.value).abs() < 1e-12);
        let table = approx_linear(&[ln01(), ln01()], &[0.2, 0.2], 10.0).unwrap();
        assert!((table.value - 9.1526e-5).abs() < 5e-10, "{}", table.value);
    }

    #[test]
    fn vanishing_ratio_is_refused_for_linear_combinations() {
        let light = TailModel::lognormal(0.0, 0.5).unwrap();
        let err = approx_linear(&[ln01(), light], &[1.0, 1.0], 100.0).unwrap_err();
        assert_eq!(err, TailError::ZeroTailRatio { index: 1 });
    }

    #[test]
    fn near_ties_are_flagged() {
        let a = [1.0, 1.0 + 1e-15];
        let r = approx_linear(&[ln01(), ln01()], &a, 10.0).unwrap();
        assert_eq!(r.recipe.n_d, 1.0);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn powers_reduce_to_linear_for_equal_exponents() {
        let base = ln01();
        let p = approx_powers(&base, &[2.0, 2.0, 1.0], &[1.5, 1.5, 1.5], 300.0).unwrap();
        assert_eq!(p.recipe.j_d, Some(2));
        let induced = TailModel::lognormal(0.0, 1.5).unwrap();
        let l = approx_linear(&[induced.clone(), induced.clone(), induced], &[2.0, 2.0, 1.0], 300.0).unwrap();
        assert!(((p.value - l.value) / l.value).abs() < 1e-12);
    }

    #[test]
    fn full_argmax_set() {
        let p = approx_powers(&ln01(), &[1.0; 4], &[2.0; 4], 50.0).unwrap();
        assert_eq!(p.recipe.j_d, Some(4));
    }

    #[test]
    fn leading_power_ignores_other_coefficients() {
        let p = approx_powers(&ln01(), &[1.0, 1000.0], &[2.0, 1.0], 1e6).unwrap();
        let want = TailModel::lognormal(0.0, 2.0).unwrap().survival(1e6);
        assert!(((p.value - want) / want).abs() < 1e-12);
        let p2 = approx_powers(&ln01(), &[1.0, 1.0], &[2.0, 1.0], 1e6).unwrap();
        assert_eq!(p.value, p2.value);
        assert_eq!(p.recipe.beta, Some(2.0));
        assert_eq!(p.recipe.q_d, Some(1.0));
    }

    #[test]
    fn bounded_auxiliary_is_rejected() {
        let e = TailModel::exponential(1.0).unwrap();
        assert!(matches!(approx_powers(&e, &[1.0], &[1.0], 10.0), Err(TailError::AuxiliaryNotDiverging(_))));
        assert!(approx_powers(&e, &[1.0], &[2.0], 10.0).is_ok());
        let w = TailModel::weibull_type(0.5).unwrap();
        assert!(matches!(approx_powers(&w, &[1.0], &[0.25], 10.0), Err(TailError::AuxiliaryNotDiverging(_))));
    }
}
