//! Standard normal tail functions and adaptive quadrature.
//!
//! `erfc` comes from `libm`; the inverse starts from `statrs` and is polished
//! with one Newton step in log space. Everything that can underflow is also
//! offered in log space.

use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::{FRAC_1_SQRT_2, LN_2, SQRT_2};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
/// `sqrt(2) - SQRT_2` as a double.
const SQRT_2_LO: f64 = -9.667_293_313_452_913e-17;
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Above this argument `norm_sf` is close to the subnormal range and the
/// asymptotic series is used for the log.
const LOG_SF_SERIES_CUTOFF: f64 = 37.0;

/// Upper tail of the standard normal, `P(Z > z)`.
///
/// The argument of `erfc` is `z / sqrt(2)` rounded; its rounding error is
/// recovered with a double-double `sqrt(2)` and added back to first order, so
/// the relative error stays near one ulp even where the tail is steep.
pub fn norm_sf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    let u = z * FRAC_1_SQRT_2;
    if !u.is_finite() || u.abs() > 27.3 {
        return 0.5 * erfc(u);
    }
    let resid = (-u).mul_add(SQRT_2, z) - u * SQRT_2_LO;
    let delta = resid * FRAC_1_SQRT_2;
    0.5 * erfc(u) - delta * FRAC_1_SQRT_PI * (-u * u).exp()
}

pub fn norm_cdf(z: f64) -> f64 {
    norm_sf(-z)
}

pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

pub fn log_norm_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// `ln P(Z > z)`, finite for every finite `z`.
pub fn log_norm_sf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    if z <= 0.0 {
        (-norm_sf(-z)).ln_1p()
    } else if z <= LOG_SF_SERIES_CUTOFF {
        norm_sf(z).ln()
    } else {
        // Mills-ratio expansion; the truncation error is below 1e-13 here.
        let r = 1.0 / (z * z);
        let series = 1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r * (1.0 - 7.0 * r)));
        -0.5 * z * z - z.ln() - LN_SQRT_2PI + series.ln()
    }
}

/// `ln P(Z <= z)`.
pub fn log_norm_cdf(z: f64) -> f64 {
    log_norm_sf(-z)
}

/// Inverse of `norm_cdf` on (0, 1).
pub fn norm_quantile(p: f64) -> f64 {
    -norm_isf(p)
}

/// Inverse of `norm_sf` on (0, 1): the `z` with `P(Z > z) = q`.
pub fn norm_isf(q: f64) -> f64 {
    if q.is_nan() {
        return f64::NAN;
    }
    if q <= 0.0 {
        return f64::INFINITY;
    }
    if q >= 1.0 {
        return f64::NEG_INFINITY;
    }
    if q > 0.5 {
        // 1 - q is exact on [0.5, 1].
        return -upper_isf(1.0 - q);
    }
    upper_isf(q)
}

fn upper_isf(q: f64) -> f64 {
    let z = SQRT_2 * erfc_inv(2.0 * q);
    let log_sf = log_norm_sf(z);
    let mills = (log_sf - log_norm_pdf(z)).exp();
    z + (log_sf - q.ln()) * mills
}

/// `ln(1 - exp(x))` for `x <= 0`, accurate on both ends.
pub fn log1m_exp(x: f64) -> f64 {
    if x > -LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// `ln(exp(a) + exp(b))`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * GK_WEIGHTS[7];
    let mut gauss = fc * G7_WEIGHTS[3];
    for (j, (&node, &wk)) in GK_NODES.iter().zip(GK_WEIGHTS.iter()).take(7).enumerate() {
        let dx = half * node;
        let pair = f(center - dx) + f(center + dx);
        kronrod += wk * pair;
        if j % 2 == 1 {
            gauss += G7_WEIGHTS[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss-Kronrod (7/15) integral of `f` over `[a, b]` to absolute
/// tolerance `abs_tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> f64 {
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (value, err) = gk15(f, a, b);
        if err <= tol.max(f64::EPSILON * value.abs()) || depth >= 48 {
            return value;
        }
        let mid = 0.5 * (a + b);
        recurse(f, a, mid, 0.5 * tol, depth + 1) + recurse(f, mid, b, 0.5 * tol, depth + 1)
    }
    if a == b {
        return 0.0;
    }
    recurse(&f, a, b, abs_tol, 0)
}

/// Bivariate standard normal orthant probability `P(Z1 > h, Z2 > k)` at
/// correlation `rho`, by quadrature of the conditional tail of `Z2` over
/// `Z1 > h`.
pub fn bvn_upper_orthant(h: f64, k: f64, rho: f64) -> f64 {
    log_bvn_upper_orthant(h, k, rho).exp()
}

/// `ln P(Z1 > h, Z2 > k)`. The integrand is normalised by `P(Z1 > h)` so the
/// absolute tolerance acts as a relative one.
pub fn log_bvn_upper_orthant(h: f64, k: f64, rho: f64) -> f64 {
    if rho == 0.0 {
        return log_norm_sf(h) + log_norm_sf(k);
    }
    if rho <= -1.0 {
        // Z2 = -Z1: need h < Z1 < -k
        let upper = -k;
        if upper <= h {
            return f64::NEG_INFINITY;
        }
        let hi = log_norm_sf(h);
        let lo = log_norm_sf(upper);
        return hi + log1m_exp(lo - hi);
    }
    if rho >= 1.0 {
        return log_norm_sf(h.max(k));
    }
    // Put the larger threshold on the integration variable.
    let (h, k) = if h >= k { (h, k) } else { (k, h) };
    let s = (1.0 - rho * rho).sqrt();
    let log_tail_h = log_norm_sf(h);
    let integrand = |u: f64| {
        let z = h + u;
        let w = (log_norm_pdf(z) - log_tail_h).exp();
        w * norm_sf((k - rho * z) / s)
    };
    // Conditional density of Z1 given Z1 > h decays like exp(-h u - u^2 / 2).
    let span = if h > 0.0 { 60.0 / h } else { 0.0 };
    let upper = (span.min(40.0)).max(12.0 - h.min(0.0));
    let mut total = 0.0;
    let pieces = 8;
    for i in 0..pieces {
        let a = upper * i as f64 / pieces as f64;
        let b = upper * (i + 1) as f64 / pieces as f64;
        total += integrate(integrand, a, b, 1e-14 / pieces as f64);
    }
    if total <= 0.0 {
        return f64::NEG_INFINITY;
    }
    log_tail_h + total.ln()
}
