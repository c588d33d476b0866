use super::ast::{Factor, RuleExpr, Sign, Var};
use super::RuleError;

/// Scalar types a rule can be evaluated over.
///
/// Integers evaluate exactly in `i128`; floats evaluate in `f64`.
pub trait RuleArith: Copy + PartialEq + std::fmt::Debug {
    type Acc: Copy + PartialEq + std::fmt::Debug;

    fn widen(self) -> Self::Acc;
    fn constant(c: i64) -> Self::Acc;
    fn add(a: Self::Acc, b: Self::Acc) -> Option<Self::Acc>;
    fn sub(a: Self::Acc, b: Self::Acc) -> Option<Self::Acc>;
    fn mul(a: Self::Acc, b: Self::Acc) -> Option<Self::Acc>;
    fn is_spike_value(self) -> bool;
}

impl RuleArith for i64 {
    type Acc = i128;

    fn widen(self) -> i128 {
        self as i128
    }
    fn constant(c: i64) -> i128 {
        c as i128
    }
    fn add(a: i128, b: i128) -> Option<i128> {
        a.checked_add(b)
    }
    fn sub(a: i128, b: i128) -> Option<i128> {
        a.checked_sub(b)
    }
    fn mul(a: i128, b: i128) -> Option<i128> {
        a.checked_mul(b)
    }
    fn is_spike_value(self) -> bool {
        self == 0 || self == 1
    }
}

impl RuleArith for f64 {
    type Acc = f64;

    fn widen(self) -> f64 {
        self
    }
    fn constant(c: i64) -> f64 {
        c as f64
    }
    fn add(a: f64, b: f64) -> Option<f64> {
        Some(a + b)
    }
    fn sub(a: f64, b: f64) -> Option<f64> {
        Some(a - b)
    }
    fn mul(a: f64, b: f64) -> Option<f64> {
        Some(a * b)
    }
    fn is_spike_value(self) -> bool {
        self == 0.0 || self == 1.0
    }
}

/// Values for the rule variables at one synapse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorBinding<T> {
    values: [Option<T>; 8],
}

impl<T: Copy> Default for FactorBinding<T> {
    fn default() -> Self {
        Self { values: [None; 8] }
    }
}

impl<T: Copy> FactorBinding<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, var: Var, value: T) -> Self {
        self.values[var.index()] = Some(value);
        self
    }

    pub fn set(&mut self, var: Var, value: T) {
        self.values[var.index()] = Some(value);
    }

    pub fn get(&self, var: Var) -> Option<T> {
        self.values[var.index()]
    }
}

impl RuleExpr {
    /// `dw` for one synapse. Integer bindings evaluate exactly; saturation
    /// into a weight format is left to the caller.
    pub fn evaluate<T: RuleArith>(&self, b: &FactorBinding<T>) -> Result<T::Acc, RuleError> {
        for var in [Var::X0, Var::Y0] {
            if let Some(v) = b.get(var) {
                if !v.is_spike_value() {
                    return Err(RuleError::SpikeValue {
                        var,
                        value: format!("{v:?}"),
                    });
                }
            }
        }
        let mut total = T::constant(0);
        for term in self.terms() {
            let mut prod = T::constant(1);
            for f in &term.factors {
                let v = match *f {
                    Factor::Const(c) => T::constant(c),
                    Factor::Var { var, offset } => {
                        let v = b.get(var).ok_or(RuleError::Unbound(var))?.widen();
                        if offset == 0 {
                            v
                        } else {
                            T::add(v, T::constant(offset)).ok_or(RuleError::Overflow)?
                        }
                    }
                };
                prod = T::mul(prod, v).ok_or(RuleError::Overflow)?;
            }
            total = match term.sign {
                Sign::Plus => T::add(total, prod),
                Sign::Minus => T::sub(total, prod),
            }
            .ok_or(RuleError::Overflow)?;
        }
        Ok(total)
    }
}
