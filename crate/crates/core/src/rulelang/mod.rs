//! Sum-of-products plasticity rules in the Loihi learning-engine style.
//!
//! ```text
//! expr   := ['+'|'-'] term (('+'|'-') term)*
//! term   := factor ('*' factor)*
//! factor := INT | VAR | '(' VAR ('+'|'-') INT ')'
//! VAR    := x0 | x1 | x2 | y0 | y1 | y2 | y3 | w
//! ```
//!
//! `x0` and `y0` are spike factors (0 or 1), the remaining `x*`/`y*` are
//! traces and `w` is the synaptic weight. A term may contain at most one `w`.

mod ast;
mod eval;
mod parse;

use thiserror::Error;

pub use ast::{Factor, ProductTerm, RuleExpr, Sign, Var};
pub use eval::{FactorBinding, RuleArith};
pub use parse::parse_rule;

/// Keys-cache rule: writes the decoded pre-trace into the weight on a post spike.
pub const KEYS_RULE: &str = "2 * y0 * (x1 - 64) - y0 * w";

/// Values-cache rule: three-factor overwrite gated by a pre spike.
pub const VALUES_RULE: &str = "x0 * y2 - x0 * y3 - x0 * y1 * w";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },

    #[error("unknown variable `{name}` at position {position}")]
    UnknownVariable { name: String, position: usize },

    #[error("term starting at position {position} has more than one w factor")]
    MultipleWeights { position: usize },

    #[error("offset on spike variable {var} at position {position}")]
    SpikeOffset { var: Var, position: usize },

    #[error("variable {0} is not bound")]
    Unbound(Var),

    #[error("spike variable {var} bound to {value}, expected 0 or 1")]
    SpikeValue { var: Var, value: String },

    #[error("integer overflow while evaluating rule")]
    Overflow,

    #[error("invalid rule: {0}")]
    Invalid(String),
}

impl RuleError {
    /// Source position for parse errors.
    pub fn position(&self) -> Option<usize> {
        match self {
            RuleError::Syntax { position, .. }
            | RuleError::UnknownVariable { position, .. }
            | RuleError::MultipleWeights { position }
            | RuleError::SpikeOffset { position, .. } => Some(*position),
            _ => None,
        }
    }
}
