//! Shared fixtures for the benchmarks in `benches/`.

use tailagg::{JointModel, TailModel};

/// The built-in marginals at their reference parameters.
pub fn marginals() -> Vec<(&'static str, TailModel)> {
    vec![
        ("lognormal", TailModel::lognormal(0.0, 1.0).expect("valid")),
        ("log_weibull", TailModel::log_weibull(2.0).expect("valid")),
        ("weibull_type", TailModel::weibull_type(0.5).expect("valid")),
        ("std_normal", TailModel::std_normal()),
    ]
}

pub fn lognormal_pair(rho: f64) -> JointModel {
    JointModel::bivariate_lognormal(0.0, 1.0, rho).expect("valid correlation")
}
