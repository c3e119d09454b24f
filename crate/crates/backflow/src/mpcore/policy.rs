use serde::{Deserialize, Serialize};

use super::ball::{digits_to_bits, Mag};
use crate::Error;

/// Working-precision policy for matrix elements and the eigensolve.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrecisionPolicy {
    /// Decimal digits carried by matrix elements.
    pub element_digits: u32,
    /// Decimal digits targeted by the eigensolver.
    pub solver_digits: u32,
    /// Certified radius goal per element is `10^(-target_exp)`.
    pub target_exp: u32,
    /// Escalation ceiling as a multiple of the requested digits.
    pub ceiling_factor: u32,
}

impl PrecisionPolicy {
    /// The default for a basis of highest index `n`: `n + 30` element digits,
    /// `n + 20` solver digits, both floored at 30 digits.
    pub fn for_n(n: usize) -> Self {
        let n = n as u32;
        let solver = (n + 20).max(30);
        let element = (n + 30).max(solver);
        PrecisionPolicy {
            element_digits: element,
            solver_digits: solver,
            target_exp: element,
            ceiling_factor: 16,
        }
    }

    pub fn new(element_digits: u32, solver_digits: u32) -> Result<Self, Error> {
        let p = PrecisionPolicy {
            element_digits,
            solver_digits,
            target_exp: element_digits,
            ceiling_factor: 16,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.element_digits >= self.solver_digits && self.solver_digits >= 30) {
            return Err(Error::Domain(format!(
                "precision policy requires element_digits ≥ solver_digits ≥ 30 (got {} and {})",
                self.element_digits, self.solver_digits
            )));
        }
        if self.ceiling_factor < 1 {
            return Err(Error::Domain("escalation ceiling factor must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn target_radius(&self) -> Mag {
        Mag::pow10_neg(self.target_exp as i64)
    }

    /// Bits used for element midpoints (with guard bits).
    pub fn element_bits(&self) -> u32 {
        digits_to_bits(self.element_digits) + 32
    }
}

impl Default for PrecisionPolicy {
    fn default() -> Self {
        PrecisionPolicy {
            element_digits: 50,
            solver_digits: 40,
            target_exp: 50,
            ceiling_factor: 16,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        for n in [0, 1, 60, 500] {
            PrecisionPolicy::for_n(n).validate().unwrap();
        }
        assert!(PrecisionPolicy::new(40, 50).is_err());
        assert!(PrecisionPolicy::new(29, 29).is_err());
    }
}
