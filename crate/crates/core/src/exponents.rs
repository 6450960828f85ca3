//! Exponent algebra: gamma in the potential, the blow-up exponent beta and
//! the weight exponent alpha of the modified functional.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub gamma: f64,
    pub beta: f64,
    pub alpha: f64,
    pub n: usize,
}

/// `beta = 2/(2-gamma)`, `alpha = gamma*beta`.
pub fn derive_exponents(gamma: f64, n: usize) -> Result<Exponents> {
    if !(0.0..2.0).contains(&gamma) {
        return Err(Error::Domain(format!("gamma = {gamma} is outside [0, 2)")));
    }
    if n < 1 {
        return Err(Error::Domain("dimension n must be at least 1".into()));
    }
    let beta = 2.0 / (2.0 - gamma);
    let alpha = 2.0 * gamma / (2.0 - gamma);
    Ok(Exponents { gamma, beta, alpha, n })
}

/// Inverse of [`derive_exponents`] in alpha: `gamma = 2 alpha / (2 + alpha)`.
///
/// alpha = 1 maps to gamma = 2/3 and is returned with alpha set exactly.
pub fn exponents_from_alpha(alpha: f64, n: usize) -> Result<Exponents> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::Domain(format!("alpha = {alpha} must be finite and nonnegative")));
    }
    let gamma = 2.0 * alpha / (2.0 + alpha);
    let mut e = derive_exponents(gamma, n)?;
    e.alpha = alpha;
    e.beta = 1.0 + alpha / 2.0;
    Ok(e)
}

/// Exponents for a rational `gamma = num/den`, computed from integer
/// arithmetic so that e.g. `gamma = 2/3` yields `alpha = 1` exactly.
pub fn derive_exponents_rational(num: u32, den: u32, n: usize) -> Result<Exponents> {
    if den == 0 || num >= 2 * den {
        return Err(Error::Domain(format!("gamma = {num}/{den} is outside [0, 2)")));
    }
    if n < 1 {
        return Err(Error::Domain("dimension n must be at least 1".into()));
    }
    let (p, q) = (num as f64, den as f64);
    let gap = 2.0 * q - p;
    Ok(Exponents { gamma: p / q, beta: 2.0 * q / gap, alpha: 2.0 * p / gap, n })
}

impl Exponents {
    pub fn with_dimension(self, n: usize) -> Exponents {
        Exponents { n, ..self }
    }

    /// The factor `beta^(-alpha)` relating the two functionals.
    pub fn correspondence_factor(&self) -> f64 {
        self.beta.powf(-self.alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alt_caffarelli_case() {
        let e = derive_exponents(0.0, 3).unwrap();
        assert_eq!((e.beta, e.alpha), (1.0, 0.0));
    }

    #[test]
    fn gamma_two_thirds_gives_alpha_one() {
        let e = derive_exponents(2.0 / 3.0, 3).unwrap();
        assert!((e.alpha - 1.0).abs() <= 2.0 * f64::EPSILON);
        let r = derive_exponents_rational(2, 3, 3).unwrap();
        assert_eq!((r.alpha, r.beta), (1.0, 1.5));
        let f = exponents_from_alpha(1.0, 3).unwrap();
        assert_eq!(f.alpha, 1.0);
        assert!((f.gamma - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn gamma_one() {
        let e = derive_exponents(1.0, 2).unwrap();
        assert_eq!((e.beta, e.alpha), (2.0, 2.0));
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(derive_exponents(2.0, 3).is_err());
        assert!(derive_exponents(-0.1, 3).is_err());
        assert!(derive_exponents(f64::NAN, 3).is_err());
        assert!(exponents_from_alpha(-1.0, 3).is_err());
    }
}
