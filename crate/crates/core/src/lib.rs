//! Misspecification-robust evaluation of acts over a finite state space.
//!
//! The central object is the criterion
//!
//! ```text
//! V(f) = min_p { E_p[u(f)] + min_{q in Q} c(p, q) }
//! ```
//!
//! where `Q` is a finite set of structured models and `c` is a penalty
//! (a scaled phi-divergence or the indicator of equality). On top of it the
//! crate provides the model-by-model dominance relation, admissibility
//! filtering of finite choice sets and comparative statics of the value
//! function in `Q`.
//!
//! Modules, bottom-up:
//!
//! - [`model_space`]: states, models, model sets, acts.
//! - [`divergences`]: phi functions, penalties, the misspecification index.
//! - [`robust_solver`]: multiplier values, the full criterion, max-min, a
//!   primal grid oracle and lambda sweeps.
//! - [`preferences`]: dominance verdicts and classification checks.
//! - [`decision_problems`]: choice sets, optimal and admissible acts.
//! - [`document`]: the JSON problem format and result emission.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decision_problems;
pub mod divergences;
pub mod document;
mod error;
pub mod model_space;
pub mod preferences;
pub mod robust_solver;
pub mod simplex;

pub use decision_problems::{AdmissibilityReport, ComparativeStatics, DecisionProblem};
pub use divergences::{DivergenceSpec, Lambda, Penalty, PhiFunction, PhiKind};
pub use error::{Error, Result};
pub use model_space::{Act, HullMode, Model, ModelSet, StateSpace};
pub use preferences::{DominanceVerdict, Relation};
pub use robust_solver::{EvaluationResult, Method};

/// Single comparison tolerance on the utility scale used by every weak/strict
/// classification.
pub const UTILITY_TOLERANCE: f64 = 1e-9;
