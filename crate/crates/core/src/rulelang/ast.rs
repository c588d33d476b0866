use std::fmt;
use std::str::FromStr;

use super::RuleError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    X0,
    X1,
    X2,
    Y0,
    Y1,
    Y2,
    Y3,
    W,
}

impl Var {
    pub const ALL: [Var; 8] = [
        Var::X0,
        Var::X1,
        Var::X2,
        Var::Y0,
        Var::Y1,
        Var::Y2,
        Var::Y3,
        Var::W,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Var::X0 => "x0",
            Var::X1 => "x1",
            Var::X2 => "x2",
            Var::Y0 => "y0",
            Var::Y1 => "y1",
            Var::Y2 => "y2",
            Var::Y3 => "y3",
            Var::W => "w",
        }
    }

    pub fn is_spike(self) -> bool {
        matches!(self, Var::X0 | Var::Y0)
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Var {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Var::ALL.into_iter().find(|v| v.name() == s).ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Factor {
    /// Non-negative integer constant.
    Const(i64),
    /// A variable plus an additive offset, e.g. `(x1 - 64)`.
    Var { var: Var, offset: i64 },
}

impl Factor {
    pub fn var(var: Var) -> Self {
        Factor::Var { var, offset: 0 }
    }

    pub fn offset(var: Var, offset: i64) -> Self {
        Factor::Var { var, offset }
    }

    pub fn is_weight(&self) -> bool {
        matches!(self, Factor::Var { var: Var::W, .. })
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Factor::Const(c) => write!(f, "{c}"),
            Factor::Var { var, offset: 0 } => write!(f, "{var}"),
            Factor::Var { var, offset } if offset < 0 => {
                write!(f, "({var} - {})", offset.unsigned_abs())
            }
            Factor::Var { var, offset } => write!(f, "({var} + {offset})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProductTerm {
    pub sign: Sign,
    pub factors: Vec<Factor>,
}

impl ProductTerm {
    pub fn new(sign: Sign, factors: Vec<Factor>) -> Result<Self, RuleError> {
        let term = Self { sign, factors };
        term.validate()?;
        Ok(term)
    }

    fn validate(&self) -> Result<(), RuleError> {
        if self.factors.is_empty() {
            return Err(RuleError::Invalid("product term without factors".into()));
        }
        if self.factors.iter().filter(|f| f.is_weight()).count() > 1 {
            return Err(RuleError::Invalid(
                "more than one w factor in a term".into(),
            ));
        }
        for f in &self.factors {
            match *f {
                Factor::Const(c) if c < 0 => {
                    return Err(RuleError::Invalid(format!("negative constant {c}")))
                }
                Factor::Var { var, offset } if offset != 0 && var.is_spike() => {
                    return Err(RuleError::Invalid(format!(
                        "offset on spike variable {var}"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn variables(&self) -> impl Iterator<Item = Var> + '_ {
        self.factors.iter().filter_map(|f| match f {
            Factor::Var { var, .. } => Some(*var),
            Factor::Const(_) => None,
        })
    }
}

/// A parsed rule. Equality compares the terms only, not the source text.
#[derive(Debug, Clone, Eq)]
pub struct RuleExpr {
    terms: Vec<ProductTerm>,
    source_text: String,
}

impl RuleExpr {
    /// Builds a rule from terms; the source text is the canonical rendering.
    pub fn from_terms(terms: Vec<ProductTerm>) -> Result<Self, RuleError> {
        if terms.is_empty() {
            return Err(RuleError::Invalid("rule without terms".into()));
        }
        for t in &terms {
            t.validate()?;
        }
        let mut rule = Self {
            terms,
            source_text: String::new(),
        };
        rule.source_text = rule.render();
        Ok(rule)
    }

    pub(super) fn with_source(terms: Vec<ProductTerm>, source_text: String) -> Self {
        Self { terms, source_text }
    }

    pub fn terms(&self) -> &[ProductTerm] {
        &self.terms
    }

    pub fn source_text(&self) -> &str {
        &self.source_text
    }

    /// Canonical text form; `parse_rule(&r.render())` equals `r`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, term) in self.terms.iter().enumerate() {
            match (i, term.sign) {
                (0, Sign::Plus) => {}
                (0, Sign::Minus) => out.push_str("- "),
                (_, Sign::Plus) => out.push_str(" + "),
                (_, Sign::Minus) => out.push_str(" - "),
            }
            for (j, f) in term.factors.iter().enumerate() {
                if j > 0 {
                    out.push_str(" * ");
                }
                out.push_str(&f.to_string());
            }
        }
        out
    }

    /// Concatenates the terms of two rules.
    pub fn concat(&self, other: &RuleExpr) -> RuleExpr {
        let terms: Vec<_> = self.terms.iter().chain(&other.terms).cloned().collect();
        RuleExpr::from_terms(terms).expect("both inputs are valid")
    }

    pub fn uses(&self, var: Var) -> bool {
        self.terms.iter().any(|t| t.variables().any(|v| v == var))
    }
}

impl PartialEq for RuleExpr {
    fn eq(&self, other: &Self) -> bool {
        self.terms == other.terms
    }
}

impl fmt::Display for RuleExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl FromStr for RuleExpr {
    type Err = RuleError;

    fn from_str(s: &str) -> Result<Self, RuleError> {
        super::parse_rule(s)
    }
}
