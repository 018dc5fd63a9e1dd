use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The exponent triple `(N, p, m)` of the equation, restricted to the
/// degenerate range `N > p > 1`, `p + m > 3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawExponents", into = "RawExponents")]
pub struct Exponents {
    n_dim: usize,
    p_grad: f64,
    m_porous: f64,
}

#[derive(Serialize, Deserialize)]
struct RawExponents {
    n: usize,
    p: f64,
    m: f64,
}

impl TryFrom<RawExponents> for Exponents {
    type Error = Error;
    fn try_from(r: RawExponents) -> Result<Self> {
        Exponents::new(r.n, r.p, r.m)
    }
}

impl From<Exponents> for RawExponents {
    fn from(e: Exponents) -> Self {
        RawExponents { n: e.n_dim, p: e.p_grad, m: e.m_porous }
    }
}

impl Exponents {
    pub fn new(n_dim: usize, p_grad: f64, m_porous: f64) -> Result<Self> {
        if !(p_grad.is_finite() && m_porous.is_finite()) {
            return Err(Error::Domain("exponents must be finite".into()));
        }
        if !((n_dim as f64) > p_grad && p_grad > 1.0) {
            return Err(Error::Domain(format!("requires N>p>1 (got N={n_dim}, p={p_grad})")));
        }
        if p_grad + m_porous <= 3.0 {
            return Err(Error::Domain(format!("requires p+m>3 (got p={p_grad}, m={m_porous})")));
        }
        Ok(Self { n_dim, p_grad, m_porous })
    }

    pub fn n(&self) -> usize {
        self.n_dim
    }

    pub fn nf(&self) -> f64 {
        self.n_dim as f64
    }

    pub fn p(&self) -> f64 {
        self.p_grad
    }

    pub fn m(&self) -> f64 {
        self.m_porous
    }

    /// `p + m - 3 > 0`, the homogeneity degree of the flux minus one.
    pub fn degeneracy(&self) -> f64 {
        self.p_grad + self.m_porous - 3.0
    }

    /// `N(p+m-3) + p`.
    pub fn beta(&self) -> f64 {
        self.nf() * self.degeneracy() + self.p_grad
    }

    /// Critical Sobolev exponent `Np/(N-p)`.
    pub fn sobolev_conjugate(&self) -> f64 {
        self.nf() * self.p_grad / (self.nf() - self.p_grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_outside_degenerate_range() {
        let e = Exponents::new(3, 1.0, 3.0).unwrap_err();
        assert!(e.to_string().contains("requires N>p>1"));
        let e = Exponents::new(3, 2.0, 1.0).unwrap_err();
        assert!(e.to_string().contains("requires p+m>3"));
        assert!(Exponents::new(2, 2.0, 2.0).is_err());
        assert!(Exponents::new(3, 2.0, 1.5).is_ok());
    }

    #[test]
    fn beta_is_recomputable() {
        let e = Exponents::new(3, 2.0, 2.0).unwrap();
        assert_eq!(e.beta(), 5.0);
        let e = Exponents::new(4, 2.5, 0.75).unwrap();
        assert_eq!(e.beta(), 4.0 * (2.5 + 0.75 - 3.0) + 2.5);
    }
}
