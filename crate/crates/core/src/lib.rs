//! Joint chance-constrained DC optimal power flow under correlated wind
//! forecast errors.
//!
//! The joint constraint on all monitored lines at a step is replaced by
//! single chance constraints whose risk levels are reallocated iteratively
//! from sampled violation statistics. See [`decomposition`] for the loop and
//! [`baselines`] for the comparison methods.

// NaN must fail range checks, so negated comparisons are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod decomposition;
pub mod error;
pub mod evaluation;
pub mod grid;
pub mod io;
pub mod model;
pub mod qp;
pub mod reform;
pub mod uncertainty;

pub use baselines::{solve_method, MethodId};
pub use decomposition::{DispatchSchedule, FrameworkConfig, ScheduleStatus};
pub use error::{Diagnostic, Error, Result};
pub use evaluation::{compare_methods, evaluate_pos, Comparison, EvalConfig};
pub use io::case::{parse_case, CaseFile};
pub use model::Case;
