//! Bivariate (and small d-variate) dependence structures with seeded samplers.

use crate::dist::TailModel;
use crate::error::{Result, TailError};
use crate::rng::{map_blocks_ordered, Substream};
use crate::special::{log1m_exp, log_bvn_upper_orthant};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JointKind {
    /// Independent copies of `marginal`.
    Iid {
        marginal: TailModel,
        #[serde(default = "two")]
        dim: usize,
    },
    /// `(exp(Z1), exp(Z2))` with `Z` bivariate normal, common mean and sd.
    BivariateLognormal { mu: f64, sigma: f64, rho: f64 },
    /// d-variate lognormal with one common pairwise correlation.
    EquicorrelatedLognormal { mu: f64, sigma: f64, rho: f64, dim: usize },
    /// `X = F^-1(U)`, `Y = F^-1(1 - U)`.
    ComonotoneInverse { marginal: TailModel },
    /// `X = X1 ^ X2`, `Y = X2 ^ X3` over iid log-Weibull components.
    MinConstruction { alpha: f64 },
    /// `X = F^-1(U) ^ X1`, `Y = F^-1(1 - U) ^ X2` with `F = base`, `X_i ~ lighter`.
    MixedMin { base: TailModel, lighter: TailModel },
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JointKind", into = "JointKind")]
pub struct JointModel {
    kind: JointKind,
    /// Lower Cholesky factor (row-major) for the equicorrelated kind.
    chol: Option<Vec<f64>>,
}

impl TryFrom<JointKind> for JointModel {
    type Error = TailError;

    fn try_from(kind: JointKind) -> Result<Self> {
        JointModel::new(kind)
    }
}

impl From<JointModel> for JointKind {
    fn from(m: JointModel) -> Self {
        m.kind
    }
}

/// Which closed-form route produced a joint probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointEval {
    ClosedForm,
    Quadrature,
}

/// `n x dim` sample in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl SampleMatrix {
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }
}

pub(crate) fn cholesky(matrix: &[f64], d: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut sum = matrix[i * d + j];
            for k in 0..j {
                sum -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(TailError::InvalidParameter("correlation matrix is not positive definite".into()));
                }
                l[i * d + i] = sum.sqrt();
            } else {
                l[i * d + j] = sum / l[j * d + j];
            }
        }
    }
    Ok(l)
}

fn check_lognormal(mu: f64, sigma: f64) -> Result<()> {
    if !mu.is_finite() || !(sigma.is_finite() && sigma > 0.0) {
        return Err(TailError::InvalidParameter(format!("lognormal needs finite mu and sigma > 0, got ({mu}, {sigma})")));
    }
    Ok(())
}

impl JointModel {
    pub fn new(kind: JointKind) -> Result<Self> {
        let mut chol = None;
        match &kind {
            JointKind::Iid { marginal: _, dim } => {
                if *dim < 2 {
                    return Err(TailError::InvalidParameter("dim must be at least 2".into()));
                }
            }
            JointKind::BivariateLognormal { mu, sigma, rho } => {
                check_lognormal(*mu, *sigma)?;
                if !(-1.0..1.0).contains(rho) {
                    return Err(TailError::InvalidParameter(format!("rho must lie in [-1, 1), got {rho}")));
                }
            }
            JointKind::EquicorrelatedLognormal { mu, sigma, rho, dim } => {
                check_lognormal(*mu, *sigma)?;
                if *dim < 2 {
                    return Err(TailError::InvalidParameter("dim must be at least 2".into()));
                }
                let d = *dim;
                let lower = -1.0 / (d as f64 - 1.0);
                if !(*rho > lower && *rho < 1.0) {
                    return Err(TailError::InvalidParameter(format!("rho must lie in ({lower}, 1), got {rho}")));
                }
                let r: Vec<f64> =
                    (0..d * d).map(|idx| if idx / d == idx % d { 1.0 } else { *rho }).collect();
                chol = Some(cholesky(&r, d)?);
            }
            JointKind::ComonotoneInverse { .. } => {}
            JointKind::MinConstruction { alpha } => {
                if !(alpha.is_finite() && *alpha > 1.0) {
                    return Err(TailError::InvalidParameter(format!("alpha must exceed 1, got {alpha}")));
                }
            }
            JointKind::MixedMin { .. } => {}
        }
        Ok(JointModel { kind, chol })
    }

    pub fn iid(marginal: TailModel, dim: usize) -> Result<Self> {
        Self::new(JointKind::Iid { marginal, dim })
    }

    pub fn bivariate_lognormal(mu: f64, sigma: f64, rho: f64) -> Result<Self> {
        Self::new(JointKind::BivariateLognormal { mu, sigma, rho })
    }

    pub fn equicorrelated_lognormal(mu: f64, sigma: f64, rho: f64, dim: usize) -> Result<Self> {
        Self::new(JointKind::EquicorrelatedLognormal { mu, sigma, rho, dim })
    }

    pub fn comonotone_inverse(marginal: TailModel) -> Result<Self> {
        Self::new(JointKind::ComonotoneInverse { marginal })
    }

    pub fn min_construction(alpha: f64) -> Result<Self> {
        Self::new(JointKind::MinConstruction { alpha })
    }

    pub fn mixed_min(base: TailModel, lighter: TailModel) -> Result<Self> {
        Self::new(JointKind::MixedMin { base, lighter })
    }

    pub fn kind(&self) -> &JointKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            JointKind::Iid { dim, .. } | JointKind::EquicorrelatedLognormal { dim, .. } => *dim,
            _ => 2,
        }
    }

    /// Lognormal parameters `(mu, sigma, rho)` when the model is a correlated lognormal.
    pub fn lognormal_params(&self) -> Option<(f64, f64, f64)> {
        match self.kind {
            JointKind::BivariateLognormal { mu, sigma, rho }
            | JointKind::EquicorrelatedLognormal { mu, sigma, rho, .. } => Some((mu, sigma, rho)),
            JointKind::Iid { ref marginal, .. } => match marginal.family() {
                crate::dist::Family::Lognormal { mu, sigma } if marginal.scale() == 1.0 && marginal.power() == 1.0 => {
                    Some((*mu, *sigma, 0.0))
                }
                _ => None,
            },
            _ => None,
        }
    }

    /// Law of coordinate `i`.
    pub fn marginal(&self, i: usize) -> TailModel {
        assert!(i < self.dim(), "coordinate {i} out of range");
        match &self.kind {
            JointKind::Iid { marginal, .. } | JointKind::ComonotoneInverse { marginal } => marginal.clone(),
            JointKind::BivariateLognormal { mu, sigma, .. } | JointKind::EquicorrelatedLognormal { mu, sigma, .. } => {
                TailModel::lognormal(*mu, *sigma).expect("validated")
            }
            JointKind::MinConstruction { alpha } => TailModel::log_weibull_min(*alpha).expect("validated"),
            JointKind::MixedMin { base, lighter } => {
                TailModel::minimum(vec![base.clone(), lighter.clone()]).expect("two components")
            }
        }
    }

    pub fn marginals(&self) -> Vec<TailModel> {
        (0..self.dim()).map(|i| self.marginal(i)).collect()
    }

    /// All built-in kinds are exchangeable in their coordinates.
    pub fn is_exchangeable(&self) -> bool {
        true
    }

    pub(crate) fn fill_row(&self, s: &mut Substream, row: &mut [f64]) {
        match &self.kind {
            JointKind::Iid { marginal, .. } => {
                for v in row.iter_mut() {
                    *v = marginal.upper_quantile(s.uniform());
                }
            }
            JointKind::BivariateLognormal { mu, sigma, rho } => {
                let z1 = s.normal();
                let w = s.normal();
                let z2 = if *rho == -1.0 { -z1 } else { rho * z1 + (1.0 - rho * rho).sqrt() * w };
                row[0] = (mu + sigma * z1).exp();
                row[1] = (mu + sigma * z2).exp();
            }
            JointKind::EquicorrelatedLognormal { mu, sigma, dim, .. } => {
                let d = *dim;
                let l = self.chol.as_ref().expect("factor built at construction");
                let w: Vec<f64> = (0..d).map(|_| s.normal()).collect();
                for i in 0..d {
                    let z: f64 = (0..=i).map(|k| l[i * d + k] * w[k]).sum();
                    row[i] = (mu + sigma * z).exp();
                }
            }
            JointKind::ComonotoneInverse { marginal } => {
                let u = s.uniform();
                row[0] = marginal.quantile(u);
                row[1] = marginal.quantile(1.0 - u);
            }
            JointKind::MinConstruction { alpha } => {
                let base = TailModel::log_weibull(*alpha).expect("validated");
                let x1 = base.upper_quantile(s.uniform());
                let x2 = base.upper_quantile(s.uniform());
                let x3 = base.upper_quantile(s.uniform());
                row[0] = x1.min(x2);
                row[1] = x2.min(x3);
            }
            JointKind::MixedMin { base, lighter } => {
                let u = s.uniform();
                let x1 = lighter.upper_quantile(s.uniform());
                let x2 = lighter.upper_quantile(s.uniform());
                row[0] = base.quantile(u).min(x1);
                row[1] = base.quantile(1.0 - u).min(x2);
            }
        }
    }

    /// `n` iid rows; deterministic in `(n, seed)`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleMatrix> {
        if n == 0 {
            return Err(TailError::InvalidParameter("sample size must be at least 1".into()));
        }
        let d = self.dim();
        let parts = map_blocks_ordered(n, seed, |s, len| {
            let mut out = vec![0.0; len * d];
            for row in out.chunks_exact_mut(d) {
                self.fill_row(s, row);
            }
            out
        });
        Ok(SampleMatrix { dim: d, data: parts.concat() })
    }

    /// `ln P(X > x, Y > y)` for the first two coordinates, closed form only.
    pub fn log_joint_survival(&self, x: f64, y: f64) -> Result<f64> {
        match &self.kind {
            JointKind::Iid { marginal, .. } => Ok(marginal.log_survival(x) + marginal.log_survival(y)),
            JointKind::BivariateLognormal { rho, .. } if *rho == -1.0 => {
                let m = self.marginal(0);
                Ok(log_overlap(m.log_survival(y), m.log_cdf(x)))
            }
            JointKind::BivariateLognormal { rho, .. } => Err(TailError::UnsupportedKind(format!(
                "bivariate lognormal with rho = {rho} has no closed-form joint survival; use quadrature or Monte Carlo"
            ))),
            JointKind::EquicorrelatedLognormal { .. } => Err(TailError::UnsupportedKind(
                "equicorrelated lognormal has no closed-form joint survival".into(),
            )),
            JointKind::ComonotoneInverse { marginal } => {
                Ok(log_overlap(marginal.log_survival(x), marginal.log_cdf(y)))
            }
            JointKind::MinConstruction { alpha } => {
                let base = TailModel::log_weibull(*alpha).expect("validated");
                Ok(base.log_survival(x) + base.log_survival(x.max(y)) + base.log_survival(y))
            }
            JointKind::MixedMin { base, lighter } => Ok(log_overlap(base.log_survival(x), base.log_cdf(y))
                + lighter.log_survival(x)
                + lighter.log_survival(y)),
        }
    }

    /// `P(X > x, Y > y)` for the closed-form kinds.
    pub fn joint_survival(&self, x: f64, y: f64) -> Result<f64> {
        self.log_joint_survival(x, y).map(f64::exp)
    }

    /// Closed form where available, otherwise bivariate-normal quadrature for
    /// the lognormal kinds.
    pub fn log_joint_survival_any(&self, x: f64, y: f64) -> Result<(f64, JointEval)> {
        match self.log_joint_survival(x, y) {
            Ok(v) => Ok((v, JointEval::ClosedForm)),
            Err(TailError::UnsupportedKind(msg)) => match self.lognormal_params() {
                Some((mu, sigma, rho)) => {
                    let h = if x <= 0.0 { f64::NEG_INFINITY } else { (x.ln() - mu) / sigma };
                    let k = if y <= 0.0 { f64::NEG_INFINITY } else { (y.ln() - mu) / sigma };
                    Ok((log_orthant_with_infinite(h, k, rho), JointEval::Quadrature))
                }
                None => Err(TailError::UnsupportedKind(msg)),
            },
            Err(e) => Err(e),
        }
    }

    /// `ln P(X_0 > x, Y < y)`, needed when the second coordinate can be negative.
    pub(crate) fn log_joint_upper_lower(&self, x: f64, y: f64) -> Result<f64> {
        let other = self.marginal(1);
        if y <= other.support_lower() {
            return Ok(f64::NEG_INFINITY);
        }
        match &self.kind {
            JointKind::Iid { marginal, .. } => Ok(marginal.log_survival(x) + marginal.log_cdf(y)),
            _ => Err(TailError::UnsupportedKind("lower-tail joint probability".into())),
        }
    }
}

fn log_orthant_with_infinite(h: f64, k: f64, rho: f64) -> f64 {
    use crate::special::log_norm_sf;
    match (h == f64::NEG_INFINITY, k == f64::NEG_INFINITY) {
        (true, true) => 0.0,
        (true, false) => log_norm_sf(k),
        (false, true) => log_norm_sf(h),
        (false, false) => log_bvn_upper_orthant(h, k, rho),
    }
}

/// `ln max(0, exp(log_upper) - exp(log_lower))`.
fn log_overlap(log_upper: f64, log_lower: f64) -> f64 {
    if log_lower >= log_upper {
        f64::NEG_INFINITY
    } else if log_lower == f64::NEG_INFINITY {
        log_upper
    } else {
        log_upper + log1m_exp(log_lower - log_upper)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comonotone_exponential_rows_are_log_uniform_pairs() {
        let m = JointModel::comonotone_inverse(TailModel::exponential(1.0).unwrap()).unwrap();
        let s = m.sample(4, 17).unwrap();
        for r in s.rows() {
            // X = -log(1 - U') and Y = -log U' for the same uniform
            let u = (-r[1]).exp();
            assert!((r[0] - (-(-u).ln_1p())).abs() < 1e-9 * r[0].max(1.0), "{r:?}");
            assert!(((-r[0]).exp() + (-r[1]).exp() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn perfectly_negative_lognormal_multiplies_to_one() {
        let m = JointModel::bivariate_lognormal(0.0, 1.0, -1.0).unwrap();
        let s = m.sample(1000, 3).unwrap();
        assert!(s.rows().all(|r| (r[0] * r[1] - 1.0).abs() < 1e-12));
        let m2 = JointModel::bivariate_lognormal(0.7, 1.3, -1.0).unwrap();
        let s2 = m2.sample(100, 3).unwrap();
        let target = (1.4f64).exp();
        assert!(s2.rows().all(|r| ((r[0] * r[1] - target) / target).abs() < 1e-9));
    }

    #[test]
    fn comonotone_relation_holds() {
        let f = TailModel::lognormal(0.0, 1.0).unwrap();
        let m = JointModel::comonotone_inverse(f.clone()).unwrap();
        for r in m.sample(500, 5).unwrap().rows() {
            let y = f.quantile(f.survival(r[0]));
            assert!(((y - r[1]) / r[1]).abs() < 1e-9, "{r:?} {y}");
        }
    }

    #[test]
    fn rejects_bad_correlation() {
        assert!(JointModel::bivariate_lognormal(0.0, 1.0, 1.2).is_err());
        assert!(JointModel::bivariate_lognormal(0.0, 1.0, -1.5).is_err());
        assert!(JointModel::bivariate_lognormal(0.0, 1.0, 1.0).is_err());
        assert!(JointModel::equicorrelated_lognormal(0.0, 1.0, -0.6, 3).is_err());
    }

    #[test]
    fn iid_log_correlation_near_zero() {
        let m = JointModel::iid(TailModel::lognormal(0.0, 1.0).unwrap(), 2).unwrap();
        let s = m.sample(100_000, 11).unwrap();
        let a: Vec<f64> = s.column(0).iter().map(|v| v.ln()).collect();
        let b: Vec<f64> = s.column(1).iter().map(|v| v.ln()).collect();
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n;
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / n;
        let corr = cov / (va * vb).sqrt();
        assert!(corr.abs() < 0.01, "{corr}");
    }

    #[test]
    fn min_construction_factorises() {
        let m = JointModel::min_construction(2.0).unwrap();
        let e = std::f64::consts::E;
        assert!((m.joint_survival(e, e).unwrap() - (-3.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn comonotone_exponential_overlap() {
        let m = JointModel::comonotone_inverse(TailModel::exponential(1.0).unwrap()).unwrap();
        assert_eq!(m.joint_survival(2f64.ln(), 2f64.ln()).unwrap(), 0.0);
        let l = (4.0f64 / 3.0).ln();
        assert!((m.joint_survival(l, l).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn correlated_lognormal_needs_quadrature() {
        let m = JointModel::bivariate_lognormal(0.0, 1.0, 0.5).unwrap();
        assert!(matches!(m.joint_survival(2.0, 2.0), Err(TailError::UnsupportedKind(_))));
        let (v, how) = m.log_joint_survival_any(1.0, 1.0).unwrap();
        assert_eq!(how, JointEval::Quadrature);
        // P(Z1 > 0, Z2 > 0) = 1/4 + asin(0.5) / (2 pi) = 1/3
        assert!((v.exp() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn closed_forms_are_exchangeable() {
        let models = [
            JointModel::min_construction(2.0).unwrap(),
            JointModel::comonotone_inverse(TailModel::lognormal(0.0, 1.0).unwrap()).unwrap(),
            JointModel::bivariate_lognormal(0.0, 1.0, -1.0).unwrap(),
            JointModel::iid(TailModel::weibull_type(0.5).unwrap(), 2).unwrap(),
            JointModel::mixed_min(TailModel::exponential(1.0).unwrap(), TailModel::lognormal(0.0, 1.0).unwrap())
                .unwrap(),
        ];
        let pairs = [(0.3, 0.9), (1.5, 2.5), (0.8, 4.0), (3.0, 3.5)];
        for m in &models {
            for &(x, y) in &pairs {
                let a = m.joint_survival(x, y).unwrap();
                let b = m.joint_survival(y, x).unwrap();
                assert!((a - b).abs() <= 1e-15 * a.max(1e-300), "{m:?} at ({x},{y}): {a} vs {b}");
            }
        }
    }

    #[test]
    fn json_config() {
        let m: JointModel =
            serde_json::from_str(r#"{"kind": "bivariate_lognormal", "mu": 0, "sigma": 1, "rho": -0.9}"#).unwrap();
        assert_eq!(m.lognormal_params(), Some((0.0, 1.0, -0.9)));
        let c: JointModel = serde_json::from_str(
            r#"{"kind": "comonotone_inverse", "marginal": {"family": "exponential", "lambda": 1.0}}"#,
        )
        .unwrap();
        assert_eq!(c.dim(), 2);
        assert!(serde_json::from_str::<JointModel>(r#"{"kind": "bivariate_lognormal", "mu": 0, "sigma": 1, "rho": 2}"#)
            .is_err());
    }
}
