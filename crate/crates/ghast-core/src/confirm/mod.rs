//! Confirmation-risk estimation: special functions, the random-walk
//! reorganisation bound, the assumption-break bound and the decision rule.

pub mod breaks;
pub mod decision;
pub mod risk;
pub mod special;

pub use breaks::{assumption_break_risk, e1_bound, e2_bound, y_bound, BreakQuery, Slice};
pub use decision::{confirm_decision, ConfirmConfig, Confirmer, Decision};
pub use risk::{confirmation_risk, g_funcs, partial_risk, RiskCache, RiskQuery};
pub use special::{binom_cdf, binom_sf, nb_tail, reg_inc_beta};

use crate::block::BlockId;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ConfirmError {
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("series did not converge within the term budget")]
    NonConvergent,
    #[error("block {0} is not on the pivot chain")]
    NotOnPivot(BlockId),
}
