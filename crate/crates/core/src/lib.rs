//! Tail-risk aggregation for asymptotically independent risks in the Gumbel
//! domain of attraction.
//!
//! The crate is organised bottom-up:
//!
//! * [`dist`] univariate tail models with log-space survival and auxiliary functions,
//! * [`joint`] dependence structures with seeded samplers,
//! * [`asymptotic`] closed-form approximations of sums, linear combinations and power sums,
//! * [`diagnostics`] finite-threshold convergence profiles for the sufficient conditions,
//! * [`rare_event`] exact, plain and conditional Monte Carlo estimates,
//! * [`portfolio`] the two-stage allocation heuristic and its grid audit.

pub mod asymptotic;
pub mod diagnostics;
pub mod dist;
pub mod error;
pub mod joint;
pub mod portfolio;
pub mod rare_event;
pub mod rng;
pub mod special;

pub use asymptotic::{approx_linear, approx_powers, approx_sum_d, approx_sum_pair, ApproxResult, Recipe};
pub use diagnostics::{AssumptionId, AssumptionReport, Method, Trend};
pub use dist::{self_neglect_profile, AuxSource, AuxiliaryFn, Family, TailModel};
pub use error::{Result, TailError};
pub use joint::{JointKind, JointModel, SampleMatrix};
pub use portfolio::{grid_verify, solve_two_stage, Constraint, GridVerification, PortfolioProblem, PortfolioSolution};
pub use rare_event::{
    cond_mc_lognormal, exact_comonotone_lognormal, plain_mc, ratio_vs_asymptotic, EstimateResult, EstimateMethod,
    RatioResult,
};
