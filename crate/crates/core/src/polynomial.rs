//! Dense univariate polynomials with complex coefficients.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Polynomial in ascending-degree coefficient order.
///
/// The coefficient list is kept canonical: trailing zeros are dropped, so the
/// zero polynomial is the empty list.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<Complex64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<Complex64>) -> Self {
        while coeffs.last().is_some_and(|c| *c == Complex64::new(0.0, 0.0)) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn constant(c: Complex64) -> Self {
        Self::new(vec![c])
    }

    /// The monomial `x`.
    pub fn x() -> Self {
        Self::from_real(&[0.0, 1.0])
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, with `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    /// Horner evaluation at a real abscissa.
    pub fn eval(&self, x: f64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| c * k as f64)
                .collect(),
        )
    }

    /// Coefficient-wise conjugate; for real `x`, `p.conj().eval(x) == p.eval(x).conj()`.
    pub fn conj(&self) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c.conj()).collect(),
        }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::new(self.coeffs.iter().map(|&c| c * s).collect())
    }

    /// Upper bound for `max |p(x)|` on `|x| <= radius`.
    pub fn magnitude_bound(&self, radius: f64) -> f64 {
        self.coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * radius + c.norm())
    }

    pub fn max_coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;

    fn add(self, rhs: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let zero = Complex64::new(0.0, 0.0);
        Polynomial::new(
            (0..n)
                .map(|k| {
                    self.coeffs.get(k).copied().unwrap_or(zero)
                        + rhs.coeffs.get(k).copied().unwrap_or(zero)
                })
                .collect(),
        )
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;

    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self + &(-rhs)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;

    fn neg(self) -> Polynomial {
        Polynomial {
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
        }
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;

    fn mul(self, rhs: &Polynomial) -> Polynomial {
        if self.is_zero() || rhs.is_zero() {
            return Polynomial::zero();
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial::new(out)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let terms: Vec<String> = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| c.norm() != 0.0)
            .map(|(k, c)| {
                let c = if c.im == 0.0 {
                    format!("{}", c.re)
                } else {
                    format!("({})", c)
                };
                match k {
                    0 => c,
                    1 => format!("{c}*x"),
                    _ => format!("{c}*x^{k}"),
                }
            })
            .collect();
        write!(f, "{}", terms.join(" + "))
    }
}

// Wire format: array of [re, im] pairs, ascending degree.
impl Serialize for Polynomial {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = self.coeffs.iter().map(|c| [c.re, c.im]).collect();
        pairs.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Polynomial {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(deserializer)?;
        if pairs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(serde::de::Error::custom("non-finite polynomial coefficient"));
        }
        Ok(Polynomial::new(
            pairs.into_iter().map(|[re, im]| Complex64::new(re, im)).collect(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn canonical_form_drops_trailing_zeros() {
        let p = Polynomial::new(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(p.degree(), Some(0));
        assert!(Polynomial::new(vec![]).is_zero());
        assert!(Polynomial::from_real(&[0.0, 0.0]).is_zero());
        assert_eq!(Polynomial::zero().degree(), None);
    }

    #[test]
    fn horner_matches_direct_sum() {
        let p = Polynomial::new(vec![c(1.0, 2.0), c(-3.0, 0.5), c(0.25, -1.0)]);
        let x = 0.7;
        let direct = c(1.0, 2.0) + c(-3.0, 0.5) * x + c(0.25, -1.0) * x * x;
        assert!((p.eval(x) - direct).norm() < 1e-15);
    }

    #[test]
    fn derivative_of_cubic() {
        let p = Polynomial::from_real(&[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(p.derivative(), Polynomial::from_real(&[0.0, 0.0, 3.0]));
        assert!(Polynomial::from_real(&[5.0]).derivative().is_zero());
    }

    #[test]
    fn product_and_sum() {
        let one_minus_x = Polynomial::from_real(&[1.0, -1.0]);
        let x = Polynomial::x();
        let prod = &x * &one_minus_x;
        assert_eq!(prod, Polynomial::from_real(&[0.0, 1.0, -1.0]));
        assert!((&prod - &prod).is_zero());
        assert_eq!(&x + &one_minus_x, Polynomial::from_real(&[1.0]));
    }

    #[test]
    fn conj_commutes_with_real_evaluation() {
        let p = Polynomial::new(vec![c(0.0, 1.0), c(2.0, -3.0)]);
        assert!((p.conj().eval(0.3) - p.eval(0.3).conj()).norm() < 1e-15);
    }

    #[test]
    fn wire_format_round_trip() {
        let p: Polynomial = serde_json::from_str("[[1,0],[-1,0]]").unwrap();
        assert_eq!(p, Polynomial::from_real(&[1.0, -1.0]));
        assert_eq!(serde_json::to_string(&p).unwrap(), "[[1.0,0.0],[-1.0,0.0]]");
        let z: Polynomial = serde_json::from_str("[]").unwrap();
        assert!(z.is_zero());
    }

    #[test]
    fn magnitude_bound_dominates() {
        let p = Polynomial::new(vec![c(1.0, 0.0), c(-2.0, 1.0), c(0.5, 0.0)]);
        for k in 0..=20 {
            let x = -1.0 + 0.1 * k as f64;
            assert!(p.eval(x).norm() <= p.magnitude_bound(1.0) + 1e-14);
        }
    }
}
