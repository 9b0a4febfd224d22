//! Numerical verification of improved Caffarelli–Kohn–Nirenberg inequalities
//! and uncertainty principles on `R^n` and `S^n`.
//!
//! Test functions are described by [`FieldSpec`] and differentiated exactly
//! with forward-mode jets; integrals use deterministic product quadrature with
//! error estimates from one grid doubling; each theorem has a checker that
//! reports both sides of its inequality.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod fields;
pub mod inequalities;
pub mod jet;
pub mod phase;
pub mod quadrature;
pub mod search;
pub mod sphere_ops;
pub mod sphere_stats;

pub use error::{Error, Result};
pub use fields::{eval_jet1, eval_jet2, restrict_to_sphere, Codomain, Domain, FieldSpec, Jet1, Jet2, Point};
pub use inequalities::{CknParams, GeneralCknParams, InequalityReport, TheoremId};
pub use quadrature::{Budget, IntegralEstimate};
pub use search::{minimize_ratio, SearchProblem, SearchResult};
pub use sphere_stats::{compute_stats, SphereStats};
