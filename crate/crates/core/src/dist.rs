//! Univariate tail models in the Gumbel domain and their auxiliary functions.
//!
//! Every model is evaluated through its log-survival function, so tail
//! probabilities stay meaningful long after `survival` itself underflows.
//! A model is a base family optionally transformed as `scale * X^power`.

use crate::error::{Result, TailError};
use crate::special::{log1m_exp, log_norm_cdf, log_norm_sf, norm_isf, norm_pdf, norm_quantile};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `exp(N(mu, sigma^2))`.
    Lognormal { mu: f64, sigma: f64 },
    /// Survival `exp(-(log x)^alpha)` for `x > 1`, one below.
    LogWeibull { alpha: f64 },
    /// Minimum of two iid `LogWeibull`: survival `exp(-2 (log x)^alpha)`.
    LogWeibullMin { alpha: f64 },
    /// Survival `exp(-x^alpha)` for `x > 0`, `alpha` in (0, 1).
    WeibullType { alpha: f64 },
    Exponential { lambda: f64 },
    StdNormal,
    /// Minimum of independent components; survival is the product.
    Minimum { components: Vec<TailModel> },
}

/// A distribution known through its (log-)survival, quantile, density and
/// auxiliary function. Represents `scale * X^power` with `X` from `family`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TailModelConfig", into = "TailModelConfig")]
pub struct TailModel {
    family: Family,
    scale: f64,
    power: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TailModelConfig {
    #[serde(flatten)]
    family: Family,
    #[serde(default = "one")]
    scale: f64,
    #[serde(default = "one")]
    power: f64,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<TailModelConfig> for TailModel {
    type Error = TailError;

    fn try_from(cfg: TailModelConfig) -> Result<Self> {
        TailModel::new(cfg.family)?.with_scale(cfg.scale)?.with_power(cfg.power)
    }
}

impl From<TailModel> for TailModelConfig {
    fn from(m: TailModel) -> Self {
        TailModelConfig { family: m.family, scale: m.scale, power: m.power }
    }
}

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(TailError::InvalidParameter(msg.into()))
}

impl TailModel {
    pub fn new(family: Family) -> Result<Self> {
        match &family {
            Family::Lognormal { mu, sigma } => {
                if !mu.is_finite() || !(sigma.is_finite() && *sigma > 0.0) {
                    return invalid(format!("lognormal needs finite mu and sigma > 0, got ({mu}, {sigma})"));
                }
            }
            Family::LogWeibull { alpha } | Family::LogWeibullMin { alpha } => {
                if !(alpha.is_finite() && *alpha > 1.0) {
                    return invalid(format!("log-Weibull needs alpha > 1, got {alpha}"));
                }
            }
            Family::WeibullType { alpha } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return invalid(format!("Weibull-type needs alpha in (0, 1), got {alpha}"));
                }
            }
            Family::Exponential { lambda } => {
                if !(lambda.is_finite() && *lambda > 0.0) {
                    return invalid(format!("exponential needs lambda > 0, got {lambda}"));
                }
            }
            Family::StdNormal => {}
            Family::Minimum { components } => {
                if components.len() < 2 {
                    return invalid("minimum needs at least two components");
                }
            }
        }
        Ok(TailModel { family, scale: 1.0, power: 1.0 })
    }

    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(Family::Lognormal { mu, sigma })
    }

    pub fn log_weibull(alpha: f64) -> Result<Self> {
        Self::new(Family::LogWeibull { alpha })
    }

    pub fn log_weibull_min(alpha: f64) -> Result<Self> {
        Self::new(Family::LogWeibullMin { alpha })
    }

    pub fn weibull_type(alpha: f64) -> Result<Self> {
        Self::new(Family::WeibullType { alpha })
    }

    pub fn exponential(lambda: f64) -> Result<Self> {
        Self::new(Family::Exponential { lambda })
    }

    pub fn std_normal() -> Self {
        TailModel { family: Family::StdNormal, scale: 1.0, power: 1.0 }
    }

    pub fn minimum(components: Vec<TailModel>) -> Result<Self> {
        Self::new(Family::Minimum { components })
    }

    /// Multiplies the current scale by `a`.
    pub fn with_scale(mut self, a: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return invalid(format!("scale must be positive, got {a}"));
        }
        self.scale *= a;
        Ok(self)
    }

    /// Raises the model to `beta`: `scale * X^p` becomes `scale^beta * X^(p beta)`.
    pub fn with_power(mut self, beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return invalid(format!("power must be positive, got {beta}"));
        }
        if beta != 1.0 && self.family_lower_edge() < 0.0 {
            return invalid("power modifier requires a nonnegative base");
        }
        self.scale = self.scale.powf(beta);
        self.power *= beta;
        Ok(self)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    fn is_plain(&self) -> bool {
        self.scale == 1.0 && self.power == 1.0
    }

    /// Lognormal with modifiers folded into its parameters.
    fn canonical_lognormal(&self) -> Option<(f64, f64)> {
        match self.family {
            Family::Lognormal { mu, sigma } => {
                Some((self.scale.ln() + self.power * mu, self.power * sigma))
            }
            _ => None,
        }
    }

    fn family_lower_edge(&self) -> f64 {
        match &self.family {
            Family::Lognormal { .. } | Family::WeibullType { .. } | Family::Exponential { .. } => 0.0,
            Family::LogWeibull { .. } | Family::LogWeibullMin { .. } => 1.0,
            Family::StdNormal => f64::NEG_INFINITY,
            Family::Minimum { components } => components
                .iter()
                .map(TailModel::support_lower)
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Left end of the support (survival is one at and below it).
    pub fn support_lower(&self) -> f64 {
        let edge = self.family_lower_edge();
        if self.power == 1.0 {
            self.scale * edge
        } else {
            self.scale * edge.powf(self.power)
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.support_lower() >= 0.0
    }

    /// Maps an observation of the transformed model back to the base family.
    fn to_base(&self, y: f64) -> f64 {
        if self.power == 1.0 {
            y / self.scale
        } else if y <= 0.0 {
            0.0
        } else {
            (y / self.scale).powf(1.0 / self.power)
        }
    }

    fn from_base(&self, x: f64) -> f64 {
        if self.power == 1.0 {
            self.scale * x
        } else {
            self.scale * x.powf(self.power)
        }
    }

    fn family_log_survival(&self, x: f64) -> f64 {
        match &self.family {
            Family::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    log_norm_sf((x.ln() - mu) / sigma)
                }
            }
            Family::LogWeibull { alpha } => {
                if x <= 1.0 {
                    0.0
                } else {
                    -x.ln().powf(*alpha)
                }
            }
            Family::LogWeibullMin { alpha } => {
                if x <= 1.0 {
                    0.0
                } else {
                    -2.0 * x.ln().powf(*alpha)
                }
            }
            Family::WeibullType { alpha } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -x.powf(*alpha)
                }
            }
            Family::Exponential { lambda } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -lambda * x
                }
            }
            Family::StdNormal => log_norm_sf(x),
            Family::Minimum { components } => components.iter().map(|c| c.log_survival(x)).sum(),
        }
    }

    /// `ln P(X > x)`; stays finite where `survival` underflows to zero.
    pub fn log_survival(&self, x: f64) -> f64 {
        if x == f64::INFINITY {
            return f64::NEG_INFINITY;
        }
        if x == f64::NEG_INFINITY {
            return 0.0;
        }
        self.family_log_survival(self.to_base(x))
    }

    /// `P(X > x)`.
    pub fn survival(&self, x: f64) -> f64 {
        self.log_survival(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        -self.log_survival(x).exp_m1()
    }

    /// `ln P(X <= x)`.
    pub fn log_cdf(&self, x: f64) -> f64 {
        if let Family::Lognormal { mu, sigma } = self.family {
            if self.power == 1.0 || x > 0.0 {
                let base = self.to_base(x);
                return if base <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    log_norm_cdf((base.ln() - mu) / sigma)
                };
            }
        }
        if let Family::StdNormal = self.family {
            return log_norm_cdf(self.to_base(x));
        }
        log1m_exp(self.log_survival(x))
    }

    fn family_density(&self, x: f64) -> f64 {
        match &self.family {
            Family::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    norm_pdf((x.ln() - mu) / sigma) / (sigma * x)
                }
            }
            Family::LogWeibull { alpha } | Family::LogWeibullMin { alpha } => {
                if x <= 1.0 {
                    return 0.0;
                }
                let k = if matches!(self.family, Family::LogWeibull { .. }) { 1.0 } else { 2.0 };
                let l = x.ln();
                k * alpha * l.powf(alpha - 1.0) / x * (-k * l.powf(*alpha)).exp()
            }
            Family::WeibullType { alpha } => {
                if x <= 0.0 {
                    0.0
                } else {
                    alpha * x.powf(alpha - 1.0) * (-x.powf(*alpha)).exp()
                }
            }
            Family::Exponential { lambda } => {
                if x < 0.0 {
                    0.0
                } else {
                    lambda * (-lambda * x).exp()
                }
            }
            Family::StdNormal => norm_pdf(x),
            Family::Minimum { components } => {
                let surv: Vec<f64> = components.iter().map(|c| c.survival(x)).collect();
                components
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        let others: f64 = surv
                            .iter()
                            .enumerate()
                            .filter(|(j, _)| *j != i)
                            .map(|(_, s)| s)
                            .product();
                        c.density(x) * others
                    })
                    .sum()
            }
        }
    }

    pub fn density(&self, y: f64) -> f64 {
        if self.power == 1.0 {
            return self.family_density(y / self.scale) / self.scale;
        }
        if y <= 0.0 {
            return 0.0;
        }
        let x = self.to_base(y);
        self.family_density(x) * x / (self.power * y)
    }

    /// Base-family quantile at cumulative hazard `h = -ln P(X > x)`.
    fn family_quantile_from_hazard(&self, h: f64) -> f64 {
        match &self.family {
            Family::LogWeibull { alpha } => h.powf(1.0 / alpha).exp(),
            Family::LogWeibullMin { alpha } => (0.5 * h).powf(1.0 / alpha).exp(),
            Family::WeibullType { alpha } => h.powf(1.0 / alpha),
            Family::Exponential { lambda } => h / lambda,
            Family::Minimum { components } => min_quantile_from_hazard(components, h),
            Family::Lognormal { .. } | Family::StdNormal => {
                unreachable!("normal-based families are inverted directly")
            }
        }
    }

    /// The `x` with `P(X > x) = q`, for `q` in (0, 1).
    pub fn upper_quantile(&self, q: f64) -> f64 {
        if q <= 0.0 {
            return f64::INFINITY;
        }
        if q >= 1.0 {
            return self.support_lower();
        }
        let x = match &self.family {
            Family::Lognormal { mu, sigma } => (mu + sigma * norm_isf(q)).exp(),
            Family::StdNormal => norm_isf(q),
            _ => self.family_quantile_from_hazard(-q.ln()),
        };
        self.from_base(x)
    }

    /// Inverse cdf: the `x` with `P(X <= x) = p`.
    pub fn quantile(&self, p: f64) -> f64 {
        if p > 0.5 {
            return self.upper_quantile(1.0 - p);
        }
        if p <= 0.0 {
            return self.support_lower();
        }
        let x = match &self.family {
            Family::Lognormal { mu, sigma } => (mu + sigma * norm_quantile(p)).exp(),
            Family::StdNormal => norm_quantile(p),
            _ => self.family_quantile_from_hazard(-(-p).ln_1p()),
        };
        self.from_base(x)
    }

    /// Closed-form auxiliary function of the model.
    pub fn auxiliary(&self) -> Result<AuxiliaryFn> {
        if let Some((mu, sigma)) = self.canonical_lognormal() {
            return Ok(AuxiliaryFn {
                form: AuxForm::LognormalMeanExcess { mu, sigma },
                source: AuxSource::MeanExcess,
            });
        }
        let (base_form, source) = self.family_auxiliary()?;
        if self.is_plain() {
            return Ok(AuxiliaryFn { form: base_form, source });
        }
        if self.power != 1.0 && source != AuxSource::VonMises {
            return Err(TailError::NoClosedFormAuxiliary(format!(
                "{self} (power transform of a non-Von-Mises auxiliary)"
            )));
        }
        Ok(AuxiliaryFn {
            form: AuxForm::Transformed { inner: Box::new(base_form), scale: self.scale, power: self.power },
            source,
        })
    }

    fn family_auxiliary(&self) -> Result<(AuxForm, AuxSource)> {
        Ok(match &self.family {
            Family::Lognormal { mu, sigma } => {
                (AuxForm::LognormalMeanExcess { mu: *mu, sigma: *sigma }, AuxSource::MeanExcess)
            }
            Family::LogWeibull { alpha } => (AuxForm::LogPower { k: 1.0, alpha: *alpha }, AuxSource::VonMises),
            Family::LogWeibullMin { alpha } => (AuxForm::LogPower { k: 2.0, alpha: *alpha }, AuxSource::VonMises),
            Family::WeibullType { alpha } => {
                (AuxForm::Power { coef: 1.0 / alpha, exponent: 1.0 - alpha }, AuxSource::VonMises)
            }
            Family::Exponential { lambda } => (AuxForm::Constant(1.0 / lambda), AuxSource::VonMises),
            // Mills-ratio asymptote of the normal tail
            Family::StdNormal => (AuxForm::Power { coef: 1.0, exponent: -1.0 }, AuxSource::VonMises),
            Family::Minimum { components } => {
                let mut forms = Vec::with_capacity(components.len());
                let mut all_von_mises = true;
                for c in components {
                    let aux = c.auxiliary()?;
                    all_von_mises &= aux.source == AuxSource::VonMises;
                    forms.push(aux.form);
                }
                let source = if all_von_mises { AuxSource::VonMises } else { AuxSource::MeanExcess };
                (AuxForm::Harmonic(forms), source)
            }
        })
    }
}

fn min_quantile_from_hazard(components: &[TailModel], h: f64) -> f64 {
    let target = -h;
    let q_half = (-0.5 * h).exp();
    let q = (-h).exp();
    let lo_start = components.iter().map(|c| c.upper_quantile(q_half)).fold(f64::INFINITY, f64::min);
    let hi_start = components.iter().map(|c| c.upper_quantile(q)).fold(f64::INFINITY, f64::min);
    let ls = |x: f64| components.iter().map(|c| c.log_survival(x)).sum::<f64>();
    let (mut lo, mut hi) = (lo_start.min(hi_start), hi_start.max(lo_start));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ls(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl fmt::Display for TailModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            Family::Lognormal { mu, sigma } => write!(f, "Lognormal({mu}, {sigma})")?,
            Family::LogWeibull { alpha } => write!(f, "LogWeibull({alpha})")?,
            Family::LogWeibullMin { alpha } => write!(f, "LogWeibullMin({alpha})")?,
            Family::WeibullType { alpha } => write!(f, "WeibullType({alpha})")?,
            Family::Exponential { lambda } => write!(f, "Exponential({lambda})")?,
            Family::StdNormal => write!(f, "StdNormal")?,
            Family::Minimum { components } => {
                write!(f, "Min(")?;
                for (i, c) in components.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{c}")?;
                }
                write!(f, ")")?;
            }
        }
        if self.scale != 1.0 {
            write!(f, "*{}", self.scale)?;
        }
        if self.power != 1.0 {
            write!(f, "^{}", self.power)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxSource {
    VonMises,
    MeanExcess,
    Supplied,
}

#[derive(Clone)]
enum AuxForm {
    Constant(f64),
    /// `sigma^2 x / (ln x - mu)`
    LognormalMeanExcess { mu: f64, sigma: f64 },
    /// `x / (k alpha (ln x)^(alpha - 1))`
    LogPower { k: f64, alpha: f64 },
    /// `coef x^exponent`
    Power { coef: f64, exponent: f64 },
    /// Auxiliary of `scale * X^power` from that of `X`: `f_X(x) dy/dx`.
    Transformed { inner: Box<AuxForm>, scale: f64, power: f64 },
    /// `1 / sum(1 / f_i)`, the auxiliary of a minimum of independent terms.
    Harmonic(Vec<AuxForm>),
    Supplied(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for AuxForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuxForm::Constant(c) => write!(f, "Constant({c})"),
            AuxForm::LognormalMeanExcess { mu, sigma } => {
                write!(f, "LognormalMeanExcess {{ mu: {mu}, sigma: {sigma} }}")
            }
            AuxForm::LogPower { k, alpha } => write!(f, "LogPower {{ k: {k}, alpha: {alpha} }}"),
            AuxForm::Power { coef, exponent } => write!(f, "Power {{ coef: {coef}, exponent: {exponent} }}"),
            AuxForm::Transformed { inner, scale, power } => {
                write!(f, "Transformed {{ inner: {inner:?}, scale: {scale}, power: {power} }}")
            }
            AuxForm::Harmonic(parts) => write!(f, "Harmonic({parts:?})"),
            AuxForm::Supplied(_) => write!(f, "Supplied(<fn>)"),
        }
    }
}

impl AuxForm {
    fn eval(&self, x: f64) -> f64 {
        match self {
            AuxForm::Constant(c) => *c,
            AuxForm::LognormalMeanExcess { mu, sigma } => sigma * sigma * x / (x.ln() - mu),
            AuxForm::LogPower { k, alpha } => x / (k * alpha * x.ln().powf(alpha - 1.0)),
            AuxForm::Power { coef, exponent } => coef * x.powf(*exponent),
            AuxForm::Transformed { inner, scale, power } => {
                if *power == 1.0 {
                    scale * inner.eval(x / scale)
                } else {
                    let base = (x / scale).powf(1.0 / power);
                    power * scale * base.powf(power - 1.0) * inner.eval(base)
                }
            }
            AuxForm::Harmonic(parts) => 1.0 / parts.iter().map(|p| 1.0 / p.eval(x)).sum::<f64>(),
            AuxForm::Supplied(func) => func(x),
        }
    }

    /// Polynomial growth order of `f` (log factors ignored); `None` when unknown.
    fn growth_order(&self) -> Option<f64> {
        match self {
            AuxForm::Constant(_) => Some(0.0),
            AuxForm::LognormalMeanExcess { .. } | AuxForm::LogPower { .. } => Some(1.0),
            AuxForm::Power { exponent, .. } => Some(*exponent),
            AuxForm::Transformed { inner, power, .. } => {
                inner.growth_order().map(|e| (power - 1.0 + e) / power)
            }
            AuxForm::Harmonic(parts) => parts
                .iter()
                .map(AuxForm::growth_order)
                .try_fold(f64::INFINITY, |acc, e| e.map(|e| acc.min(e))),
            AuxForm::Supplied(_) => None,
        }
    }
}

/// Self-neglecting auxiliary function `f` with `F(t + x f(t)) / F(t) -> e^-x`.
#[derive(Debug, Clone)]
pub struct AuxiliaryFn {
    form: AuxForm,
    source: AuxSource,
}

impl AuxiliaryFn {
    /// Wraps a caller-provided auxiliary function.
    pub fn supplied<F>(f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        AuxiliaryFn { form: AuxForm::Supplied(Arc::new(f)), source: AuxSource::Supplied }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.form.eval(x)
    }

    pub fn source(&self) -> AuxSource {
        self.source
    }

    /// Whether `f(x) -> infinity`. Decided from the closed form; supplied
    /// functions are probed on decades up to 1e12.
    pub fn diverges(&self) -> bool {
        match self.form.growth_order() {
            Some(order) => order > 0.0,
            None => {
                let probes: Vec<f64> = (3..=12).map(|k| self.eval(10f64.powi(k))).collect();
                probes.windows(2).all(|w| w[1] >= w[0]) && probes[probes.len() - 1] > 10.0 * probes[0]
            }
        }
    }
}

/// `f(x + t f(x)) / f(x)` along `x_grid`; tends to one for a self-neglecting `f`.
pub fn self_neglect_profile(aux: &AuxiliaryFn, x_grid: &[f64], t: f64) -> Vec<f64> {
    x_grid
        .iter()
        .map(|&x| {
            let fx = aux.eval(x);
            aux.eval(x + t * fx) / fx
        })
        .collect()
}
