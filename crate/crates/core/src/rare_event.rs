//! Ground-truth tail probabilities: the antithetic lognormal closed form,
//! plain Monte Carlo and conditional Monte Carlo for correlated lognormal sums.

use crate::asymptotic::ApproxResult;
use crate::error::{Result, TailError};
use crate::joint::{cholesky, JointModel};
use crate::rng::{map_blocks_ordered, Moments};
use crate::special::{log_norm_sf, norm_sf};
use serde::{Deserialize, Serialize};

/// Normal 95% two-sided quantile used for all half-widths.
pub const Z95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimateMethod {
    Exact,
    PlainMC,
    CondMC,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub estimate: f64,
    pub n: u64,
    pub std_error: f64,
    pub half_width95: f64,
    pub method: EstimateMethod,
    /// `None` for deterministic results.
    pub seed: Option<u64>,
}

impl EstimateResult {
    pub fn exact(estimate: f64) -> Self {
        EstimateResult { estimate, n: 0, std_error: 0.0, half_width95: 0.0, method: EstimateMethod::Exact, seed: None }
    }

    fn stochastic(estimate: f64, n: u64, std_error: f64, method: EstimateMethod, seed: u64) -> Self {
        EstimateResult { estimate, n, std_error, half_width95: Z95 * std_error, method, seed: Some(seed) }
    }

    pub fn relative_half_width(&self) -> f64 {
        self.half_width95 / self.estimate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioResult {
    pub ratio: f64,
    pub half_width: f64,
}

/// `P(X + Y > x)` for `X = exp(mu + Z)`, `Y = exp(mu - Z)`.
pub fn exact_comonotone_lognormal(mu: f64, x: f64) -> EstimateResult {
    exact_antithetic_lognormal(mu, 1.0, x)
}

/// `P(X + Y > x)` for `X = exp(mu + sigma Z)`, `Y = exp(mu - sigma Z)`.
///
/// `XY = e^{2mu}`, so the event is `X` outside the roots of
/// `t^2 - x t + e^{2mu}`; both pieces carry the same mass.
pub fn exact_antithetic_lognormal(mu: f64, sigma: f64, x: f64) -> EstimateResult {
    EstimateResult::exact(log_exact_antithetic_lognormal(mu, sigma, x).exp())
}

pub fn log_exact_antithetic_lognormal(mu: f64, sigma: f64, x: f64) -> f64 {
    let floor = 2.0 * mu.exp();
    if x <= floor {
        return 0.0;
    }
    let disc = ((x - floor) * (x + floor)).sqrt();
    let upper_root = 0.5 * (x + disc);
    std::f64::consts::LN_2 + log_norm_sf((upper_root.ln() - mu) / sigma)
}

fn check_common(a: &[f64], n: usize) -> Result<()> {
    if n == 0 {
        return Err(TailError::InvalidParameter("n must be at least 1".into()));
    }
    if a.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(TailError::InvalidParameter("coefficients must be finite and nonnegative".into()));
    }
    Ok(())
}

/// Fraction of sampled rows with `sum a_i X_i > x`.
pub fn plain_mc(model: &JointModel, a: &[f64], x: f64, n: usize, seed: u64) -> Result<EstimateResult> {
    check_common(a, n)?;
    let d = model.dim();
    if a.len() != d {
        return Err(TailError::InvalidParameter(format!("{} coefficients for a {d}-dimensional model", a.len())));
    }
    let hits: u64 = map_blocks_ordered(n, seed, |s, len| {
        let mut row = vec![0.0; d];
        let mut h = 0u64;
        for _ in 0..len {
            model.fill_row(s, &mut row);
            let total: f64 = row.iter().zip(a).map(|(v, c)| v * c).sum();
            if total > x {
                h += 1;
            }
        }
        h
    })
    .into_iter()
    .sum();
    let p = hits as f64 / n as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    Ok(EstimateResult::stochastic(p, n as u64, se, EstimateMethod::PlainMC, seed))
}

/// Conditional Monte Carlo for `P(sum a_i exp(mu + sigma Z_i) > x)` with
/// equicorrelated standard normal `Z`.
///
/// Each replication draws `Z` and returns
/// `sum_i P(a_i X_i > max(M_{-i}, x - S_{-i}) | Z_{-i})`, where `M_{-i}` and
/// `S_{-i}` are the largest and the total of the other terms. The events
/// "term i is the largest and the sum exceeds x" partition the target event.
/// Zero coefficients are dropped first.
pub fn cond_mc_lognormal(
    mu: f64,
    sigma: f64,
    rho: f64,
    a: &[f64],
    x: f64,
    n: usize,
    seed: u64,
) -> Result<EstimateResult> {
    check_common(a, n)?;
    if !(rho > -1.0 && rho < 1.0) {
        return Err(TailError::InvalidParameter(format!(
            "rho must lie in (-1, 1) for conditional Monte Carlo, got {rho}"
        )));
    }
    if !mu.is_finite() || !(sigma.is_finite() && sigma > 0.0) {
        return Err(TailError::InvalidParameter(format!("need finite mu and sigma > 0, got ({mu}, {sigma})")));
    }
    let a: Vec<f64> = a.iter().cloned().filter(|v| *v > 0.0).collect();
    if x <= 0.0 {
        return Ok(EstimateResult::stochastic(1.0, n as u64, 0.0, EstimateMethod::CondMC, seed));
    }
    match a.len() {
        0 => return Ok(EstimateResult::exact(0.0)),
        1 => return Ok(EstimateResult::exact(norm_sf(((x / a[0]).ln() - mu) / sigma))),
        _ => {}
    }
    let d = a.len();
    let lower = -1.0 / (d as f64 - 1.0);
    if rho <= lower {
        return Err(TailError::InvalidParameter(format!("rho must exceed {lower} in dimension {d}")));
    }
    let corr: Vec<f64> = (0..d * d).map(|k| if k / d == k % d { 1.0 } else { rho }).collect();
    let chol = cholesky(&corr, d)?;
    let w = rho / (1.0 + (d as f64 - 2.0) * rho);
    let cond_sd = sigma * (1.0 - (d as f64 - 1.0) * rho * w).sqrt();
    let log_a: Vec<f64> = a.iter().map(|v| v.ln()).collect();

    let parts = map_blocks_ordered(n, seed, |s, len| {
        let mut m = Moments::default();
        let mut noise = vec![0.0; d];
        let mut z = vec![0.0; d];
        let mut terms = vec![0.0; d];
        for _ in 0..len {
            for v in noise.iter_mut() {
                *v = s.normal();
            }
            for i in 0..d {
                z[i] = (0..=i).map(|k| chol[i * d + k] * noise[k]).sum();
                terms[i] = (log_a[i] + mu + sigma * z[i]).exp();
            }
            let z_sum: f64 = z.iter().sum();
            let total: f64 = terms.iter().sum();
            let mut value = 0.0;
            for i in 0..d {
                let rest_max = (0..d).filter(|&j| j != i).map(|j| terms[j]).fold(0.0, f64::max);
                let rest_sum = total - terms[i];
                let cut = rest_max.max(x - rest_sum);
                let cond_mean = mu + sigma * w * (z_sum - z[i]);
                value += norm_sf((cut.ln() - log_a[i] - cond_mean) / cond_sd);
            }
            m.push(value);
        }
        m
    });
    let m = parts.into_iter().fold(Moments::default(), Moments::merge);
    Ok(EstimateResult::stochastic(m.mean, m.count, m.std_error(), EstimateMethod::CondMC, seed))
}

/// [`cond_mc_lognormal`] driven by a lognormal [`JointModel`]; the
/// antithetic case `rho = -1` is answered exactly when both coefficients agree.
pub fn cond_mc(model: &JointModel, a: &[f64], x: f64, n: usize, seed: u64) -> Result<EstimateResult> {
    let (mu, sigma, rho) = model
        .lognormal_params()
        .ok_or_else(|| TailError::UnsupportedKind("conditional Monte Carlo needs a lognormal model".into()))?;
    if a.len() != model.dim() {
        return Err(TailError::InvalidParameter(format!("{} coefficients for a {}-dimensional model", a.len(), model.dim())));
    }
    if rho == -1.0 {
        let positive: Vec<f64> = a.iter().cloned().filter(|v| *v > 0.0).collect();
        return match positive.as_slice() {
            [c, d] if c == d => Ok(exact_antithetic_lognormal(mu + c.ln(), sigma, x)),
            [c] => Ok(EstimateResult::exact(norm_sf(((x / c).ln() - mu) / sigma))),
            _ => Err(TailError::Unsupported("rho = -1 with unequal coefficients; use plain Monte Carlo".into())),
        };
    }
    cond_mc_lognormal(mu, sigma, rho, a, x, n, seed)
}

/// Estimate over approximation, with the half-width carried through the
/// deterministic denominator.
pub fn ratio_vs_asymptotic(est: &EstimateResult, approx: &ApproxResult) -> Result<RatioResult> {
    ratio_vs_value(est, approx.value)
}

pub fn ratio_vs_value(est: &EstimateResult, value: f64) -> Result<RatioResult> {
    if !(value > 0.0) {
        return Err(TailError::InvalidParameter(format!("approximation must be positive, got {value}")));
    }
    Ok(RatioResult { ratio: est.estimate / value, half_width: est.half_width95 / value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotic::approx_sum_pair;
    use crate::dist::TailModel;

    #[test]
    fn exact_small_thresholds() {
        assert_eq!(exact_comonotone_lognormal(0.0, 2.0).estimate, 1.0);
        assert_eq!(exact_comonotone_lognormal(0.0, 1.0).estimate, 1.0);
        assert_eq!(exact_comonotone_lognormal(0.0, 10.0).std_error, 0.0);
        let e = exact_comonotone_lognormal(0.0, 10.0).estimate;
        assert!((e - 0.0219).abs() < 5e-5, "{e}");
    }

    #[test]
    fn exact_far_tail() {
        let e = exact_comonotone_lognormal(0.0, 1000.0).estimate;
        assert!((e / 4.9238e-12 - 1.0).abs() < 1e-4, "{e}");
    }

    #[test]
    fn exact_depends_on_mu_through_scale() {
        let shifted = exact_comonotone_lognormal(1.0, 10.0 * 1f64.exp()).estimate;
        let base = exact_comonotone_lognormal(0.0, 10.0).estimate;
        assert!((shifted / base - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plain_mc_zero_threshold() {
        let m = JointModel::iid(TailModel::lognormal(0.0, 1.0).unwrap(), 2).unwrap();
        let r = plain_mc(&m, &[1.0, 1.0], 0.0, 1000, 3).unwrap();
        assert_eq!(r.estimate, 1.0);
        assert_eq!(r.std_error, 0.0);
    }

    #[test]
    fn half_width_is_scaled_error() {
        let m = JointModel::bivariate_lognormal(0.0, 1.0, 0.3).unwrap();
        let r = plain_mc(&m, &[1.0, 1.0], 5.0, 20_000, 8).unwrap();
        assert!((r.half_width95 - 1.96 * r.std_error).abs() <= 1e-12 * r.half_width95);
        assert!((0.0..=1.0).contains(&r.estimate));
    }

    #[test]
    fn antithetic_plain_mc_matches_exact() {
        let m = JointModel::bivariate_lognormal(0.0, 1.0, -1.0).unwrap();
        let r = plain_mc(&m, &[1.0, 1.0], 10.0, 1_000_000, 11).unwrap();
        let exact = exact_comonotone_lognormal(0.0, 10.0).estimate;
        assert!((r.estimate - exact).abs() < 3.0 * r.half_width95, "{} vs {exact}", r.estimate);
    }

    #[test]
    fn cond_mc_zero_threshold_and_bad_rho() {
        let r = cond_mc_lognormal(0.0, 1.0, 0.0, &[1.0, 1.0], 0.0, 100, 1).unwrap();
        assert_eq!(r.estimate, 1.0);
        assert!(cond_mc_lognormal(0.0, 1.0, -1.0, &[1.0, 1.0], 5.0, 100, 1).is_err());
        assert!(cond_mc_lognormal(0.0, 1.0, 1.0, &[1.0, 1.0], 5.0, 100, 1).is_err());
    }

    #[test]
    fn cond_mc_drops_zero_coefficients() {
        let r = cond_mc_lognormal(0.0, 1.0, 0.5, &[0.0, 2.0], 10.0, 100, 1).unwrap();
        assert_eq!(r.method, EstimateMethod::Exact);
        assert!((r.estimate - norm_sf(5f64.ln())).abs() < 1e-16);
    }

    #[test]
    fn cond_mc_independent_far_tail_is_tight() {
        let r = cond_mc_lognormal(0.0, 1.0, 0.0, &[1.0, 1.0], 1000.0, 100_000, 5).unwrap();
        let asy = approx_sum_pair(&TailModel::lognormal(0.0, 1.0).unwrap(), &TailModel::lognormal(0.0, 1.0).unwrap(), 1000.0, None)
            .unwrap();
        let ratio = ratio_vs_asymptotic(&r, &asy).unwrap();
        assert!(r.relative_half_width() < 0.05);
        assert!((ratio.ratio - 1.0118).abs() < 0.01, "{ratio:?}");
    }

    #[test]
    fn cond_mc_three_terms_against_plain() {
        let m = JointModel::equicorrelated_lognormal(0.0, 1.0, 0.3, 3).unwrap();
        let p = plain_mc(&m, &[1.0, 0.5, 2.0], 12.0, 400_000, 21).unwrap();
        let c = cond_mc(&m, &[1.0, 0.5, 2.0], 12.0, 400_000, 22).unwrap();
        let tol = 3.0 * (p.std_error.powi(2) + c.std_error.powi(2)).sqrt();
        assert!((p.estimate - c.estimate).abs() < tol, "{p:?} {c:?}");
    }

    #[test]
    fn ratio_identity() {
        let est = EstimateResult::exact(0.25);
        let r = ratio_vs_value(&est, 0.25).unwrap();
        assert_eq!(r.ratio, 1.0);
        assert_eq!(r.half_width, 0.0);
        assert!(ratio_vs_value(&est, 0.0).is_err());
        let t4 = ratio_vs_value(&EstimateResult::exact(5.2652e-4), 9.1526e-5).unwrap();
        assert!((t4.ratio - 5.7527).abs() < 5e-5);
    }
}
