//! Exact optimisation of logit share-of-choice product designs.
//!
//! A product is a binary attribute vector `a`; customer type `k` buys it with
//! probability `σ(β_k0 + β_k·a)`. The crate evaluates designs, enumerates
//! small instances, solves larger ones to proven optimality with an
//! outer-approximation branch and bound, solves the geometric-mean surrogate
//! and exports exponential-cone models for external solvers.

pub mod bnb;
pub mod choice;
pub mod conic;
pub mod error;
pub mod generators;
pub mod gm;
pub mod instance;
pub mod lp;
pub mod oa;
pub mod oracle;
pub mod report;

pub use choice::{
    expected_profit, f_gradient, f_value, geometric_mean_objective, logistic, share_of_choice, softplus, utility,
    ChoiceProbabilities, Criterion,
};
pub use error::{Error, Result};
pub use gm::{gamma, gamma_curve, probability_bounds, solve_gm, GmReport};
pub use instance::{DesignVector, Instance, LinearConstraint, ObjectiveKind, ObjectiveSpec, ValidationResult};
pub use oa::{derive_utility_bounds, solve, solve_profit, SolveParams, SolveReport, TerminationReason};
pub use oracle::{enumerate, EnumerationResult};
pub use conic::{build_gm_micp, build_micp, parse_cbf, write_cbf, ConicModel};
pub use report::{evaluate_design, DesignEvaluation, SummaryRow};
