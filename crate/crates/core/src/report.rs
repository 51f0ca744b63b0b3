//! Named residual checks shared by the verification routines.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    /// A residual that is NaN never passes.
    pub fn new(name: impl Into<String>, max_residual: f64, tolerance: f64) -> Self {
        Self { name: name.into(), max_residual, tolerance, pass: max_residual <= tolerance }
    }

    pub fn from_real<T: Real>(name: impl Into<String>, max_residual: T, tolerance: f64) -> Self {
        Self::new(name, max_residual.to_f64_lossy(), tolerance)
    }

    /// A yes/no condition, recorded with residual 0 or 1.
    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        Self::new(name, if ok { 0.0 } else { 1.0 }, 0.0)
    }

    /// Keeps the worse residual of two checks with the same tolerance.
    pub fn absorb(&mut self, other: &Check) {
        if other.max_residual > self.max_residual || other.max_residual.is_nan() {
            self.max_residual = other.max_residual;
        }
        self.pass &= other.pass;
    }
}

/// Folds same-named checks from many samples into one per name, keeping the
/// first-seen order.
pub fn merge(checks: impl IntoIterator<Item = Check>) -> Vec<Check> {
    let mut out: Vec<Check> = Vec::new();
    for c in checks {
        match out.iter_mut().find(|x| x.name == c.name) {
            Some(slot) => slot.absorb(&c),
            None => out.push(c),
        }
    }
    out
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}
