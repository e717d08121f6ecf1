//! Polynomial coefficient fields `A(x)`, `B(x)` and the Friedrichs axioms.
//!
//! A problem is the pair of r×r polynomial matrix fields defining
//! `T u = (A u)' + B u` and its formal companion `T~ u = -(A u)' + (B* + A') u`
//! on a bounded interval. Everything here is exact polynomial algebra except
//! the axiom checks, which sample on Chebyshev–Lobatto nodes.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polynomial::Polynomial;

/// Default number of sample points for the axiom checks.
pub const DEFAULT_SAMPLES: usize = 257;

/// Relative tolerance for the Hermiticity check.
pub const HERMITIAN_RTOL: f64 = 1e-12;

/// Which of the two formal operators is meant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OperatorKind {
    /// `(A u)' + B u`
    #[serde(rename = "T1")]
    T,
    /// `-(A u)' + (B* + A') u`
    #[serde(rename = "T1t")]
    TTilde,
}

impl std::fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OperatorKind::T => write!(f, "T1"),
            OperatorKind::TTilde => write!(f, "T1t"),
        }
    }
}

impl std::str::FromStr for OperatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "T1" | "T" => Ok(OperatorKind::T),
            "T1t" | "T1_tilde" | "Tt" => Ok(OperatorKind::TTilde),
            other => Err(Error::InvalidArgument(format!("unknown operator `{other}`"))),
        }
    }
}

/// Closed interval `[a, b]` with `a < b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::Schema("interval endpoints must be finite".into()));
        }
        if a >= b {
            return Err(Error::DegenerateInterval { a, b });
        }
        Ok(Self { a, b })
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.a + self.b)
    }

    pub fn contains(&self, x: f64) -> bool {
        let slack = 1e-12 * (1.0 + self.a.abs().max(self.b.abs()));
        x >= self.a - slack && x <= self.b + slack
    }

    /// Chebyshev–Lobatto points, ascending. Sets for `n` and `2n - 1` are nested.
    pub fn chebyshev_nodes(&self, n: usize) -> Vec<f64> {
        let n = n.max(2);
        let (c, h) = (self.midpoint(), 0.5 * self.length());
        let mut nodes: Vec<f64> = (0..n)
            .map(|k| c - h * (PI * k as f64 / (n - 1) as f64).cos())
            .collect();
        nodes[0] = self.a;
        nodes[n - 1] = self.b;
        nodes
    }
}

/// Square matrix of polynomials on an interval.
#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialMatrixField {
    r: usize,
    entries: Vec<Polynomial>,
    interval: Interval,
}

impl PolynomialMatrixField {
    /// Builds a field from row-major entries.
    pub fn new(r: usize, entries: Vec<Polynomial>, interval: Interval) -> Result<Self> {
        if r == 0 {
            return Err(Error::Schema("system size r must be positive".into()));
        }
        if entries.len() != r * r {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for r = {r}, got {}",
                r * r,
                entries.len()
            )));
        }
        Ok(Self { r, entries, interval })
    }

    pub fn from_rows(rows: Vec<Vec<Polynomial>>, interval: Interval) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return Err(Error::Schema("empty entries grid".into()));
        }
        if let Some(bad) = rows.iter().find(|row| row.len() != r) {
            return Err(Error::Schema(format!(
                "ragged entries grid: row of length {} in a {r}-row grid",
                bad.len()
            )));
        }
        Self::new(r, rows.into_iter().flatten().collect(), interval)
    }

    pub fn zeros(r: usize, interval: Interval) -> Self {
        Self {
            r,
            entries: vec![Polynomial::zero(); r * r],
            interval,
        }
    }

    pub fn identity(r: usize, interval: Interval) -> Self {
        let mut f = Self::zeros(r, interval);
        for i in 0..r {
            f.entries[i * r + i] = Polynomial::from_real(&[1.0]);
        }
        f
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn entry(&self, i: usize, j: usize) -> &Polynomial {
        &self.entries[i * self.r + j]
    }

    pub fn rows(&self) -> Vec<Vec<Polynomial>> {
        self.entries.chunks(self.r).map(|c| c.to_vec()).collect()
    }

    /// Evaluates at `x`, which must lie in the interval.
    pub fn evaluate(&self, x: f64) -> Result<DMatrix<Complex64>> {
        if !self.interval.contains(x) {
            return Err(Error::OutsideInterval {
                x,
                a: self.interval.a,
                b: self.interval.b,
            });
        }
        Ok(self.evaluate_unchecked(x))
    }

    /// Evaluates at any real `x` without the interval check.
    pub fn evaluate_unchecked(&self, x: f64) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.r, self.r, |i, j| self.entry(i, j).eval(x))
    }

    pub fn derivative(&self) -> Self {
        self.map(|p| p.derivative())
    }

    /// Pointwise conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let r = self.r;
        Self {
            r,
            entries: (0..r * r)
                .map(|k| self.entry(k % r, k / r).conj())
                .collect(),
            interval: self.interval,
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            r: self.r,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(p, q)| p + q)
                .collect(),
            interval: self.interval,
        })
    }

    /// Field times a vector of polynomials.
    pub fn apply(&self, u: &[Polynomial]) -> Result<Vec<Polynomial>> {
        if u.len() != self.r {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} applied to an r = {} field",
                u.len(),
                self.r
            )));
        }
        Ok((0..self.r)
            .map(|i| {
                (0..self.r).fold(Polynomial::zero(), |acc, j| &acc + &(self.entry(i, j) * &u[j]))
            })
            .collect())
    }

    /// Upper bound for `sup_x ‖F'(x)‖_F` over the interval; a Lipschitz
    /// constant for the field in the Frobenius norm.
    pub fn lipschitz_bound(&self) -> f64 {
        let c = self.interval.midpoint();
        let radius = 0.5 * self.interval.length();
        self.entries
            .iter()
            .map(|p| taylor_shift(&p.derivative(), c).magnitude_bound(radius).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn map(&self, f: impl Fn(&Polynomial) -> Polynomial) -> Self {
        Self {
            r: self.r,
            entries: self.entries.iter().map(f).collect(),
            interval: self.interval,
        }
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.r != other.r {
            return Err(Error::DimensionMismatch(format!(
                "r = {} vs r = {}",
                self.r, other.r
            )));
        }
        if self.interval != other.interval {
            return Err(Error::DimensionMismatch("fields on different intervals".into()));
        }
        Ok(())
    }
}

/// Coefficients of `t ↦ p(c + t)`.
fn taylor_shift(p: &Polynomial, c: f64) -> Polynomial {
    let shift = Polynomial::from_real(&[c, 1.0]);
    p.coeffs()
        .iter()
        .rev()
        .fold(Polynomial::zero(), |acc, &k| &(&acc * &shift) + &Polynomial::constant(k))
}

/// On-disk problem document.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub r: usize,
    pub interval: [f64; 2],
    #[serde(rename = "A")]
    pub a: Vec<Vec<Polynomial>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<Polynomial>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rhs: Option<Vec<Polynomial>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0_hint: Option<f64>,
}

/// `(A u)' + B u = f` on an interval, with a lower bound `mu0` for
/// `(B + B* + A')/2` (zero if none was certified).
#[derive(Clone, Debug)]
pub struct FriedrichsProblem {
    pub id: String,
    pub a: PolynomialMatrixField,
    pub b: PolynomialMatrixField,
    pub mu0: f64,
    pub rhs: Option<Vec<Polynomial>>,
}

impl FriedrichsProblem {
    pub fn new(a: PolynomialMatrixField, b: PolynomialMatrixField) -> Result<Self> {
        a.check_compatible(&b)?;
        Ok(Self {
            id: String::from("unnamed"),
            a,
            b,
            mu0: 0.0,
            rhs: None,
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn r(&self) -> usize {
        self.a.r()
    }

    pub fn interval(&self) -> Interval {
        self.a.interval()
    }

    /// The Hermitian field `B + B* + A'`.
    pub fn positivity_field(&self) -> PolynomialMatrixField {
        let sum = self.b.add(&self.b.adjoint()).expect("same shape");
        sum.add(&self.a.derivative()).expect("same shape")
    }

    /// The zeroth-order coefficient of `T~`, `B* + A'`.
    pub fn tilde_zeroth_order(&self) -> PolynomialMatrixField {
        self.b.adjoint().add(&self.a.derivative()).expect("same shape")
    }

    pub fn to_file(&self) -> ProblemFile {
        let iv = self.interval();
        ProblemFile {
            id: Some(self.id.clone()),
            description: None,
            r: self.r(),
            interval: [iv.a, iv.b],
            a: self.a.rows(),
            b: self.b.rows(),
            rhs: self.rhs.clone(),
            mu0_hint: (self.mu0 > 0.0).then_some(self.mu0),
        }
    }
}

/// Parses and validates a problem document.
pub fn parse_problem(document: &str) -> Result<FriedrichsProblem> {
    let file: ProblemFile =
        serde_json::from_str(document).map_err(|e| Error::Schema(e.to_string()))?;
    problem_from_file(file)
}

pub fn problem_from_file(file: ProblemFile) -> Result<FriedrichsProblem> {
    let interval = Interval::new(file.interval[0], file.interval[1])?;
    if file.r == 0 {
        return Err(Error::Schema("r must be positive".into()));
    }
    if file.a.len() != file.r {
        return Err(Error::Schema(format!(
            "A has {} rows, expected r = {}",
            file.a.len(),
            file.r
        )));
    }
    let a = PolynomialMatrixField::from_rows(file.a, interval)?;
    if file.b.len() != file.r {
        return Err(Error::DimensionMismatch(format!(
            "B has {} rows, A has r = {}",
            file.b.len(),
            file.r
        )));
    }
    let b = PolynomialMatrixField::from_rows(file.b, interval)?;
    let mut problem = FriedrichsProblem::new(a, b)?;
    if let Some(rhs) = file.rhs {
        if rhs.len() != file.r {
            return Err(Error::Schema(format!(
                "rhs has {} entries, expected {}",
                rhs.len(),
                file.r
            )));
        }
        problem.rhs = Some(rhs);
    }
    if let Some(id) = file.id {
        problem.id = id;
    }
    if let Some(hint) = file.mu0_hint {
        if !(hint.is_finite() && hint >= 0.0) {
            return Err(Error::Schema("mu0_hint must be a nonnegative number".into()));
        }
        let sampled = estimate_mu0(&problem, DEFAULT_SAMPLES);
        if hint > sampled * (1.0 + 1e-12) + 1e-14 {
            return Err(Error::Schema(format!(
                "mu0_hint {hint} exceeds the sampled bound {sampled}"
            )));
        }
        problem.mu0 = hint;
    }
    Ok(problem)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SymmetryReport {
    pub ok: bool,
    pub max_defect: f64,
}

/// Samples `‖A(x) - A(x)*‖_F` on Chebyshev nodes.
pub fn check_symmetry(problem: &FriedrichsProblem, n_samples: usize) -> SymmetryReport {
    let mut max_defect: f64 = 0.0;
    let mut max_entry: f64 = 0.0;
    for x in problem.interval().chebyshev_nodes(n_samples) {
        let m = problem.a.evaluate_unchecked(x);
        max_defect = max_defect.max((&m - m.adjoint()).norm());
        max_entry = max_entry.max(m.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    SymmetryReport {
        ok: max_defect <= HERMITIAN_RTOL * (1.0 + max_entry),
        max_defect,
    }
}

fn min_eigenvalue_hermitian(m: DMatrix<Complex64>) -> f64 {
    // symmetrize away rounding before the eigensolver
    let h = (&m + m.adjoint()).scale(0.5);
    h.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Smallest sampled eigenvalue of `B + B* + A'` over Chebyshev nodes.
pub fn min_positivity_eigenvalue(problem: &FriedrichsProblem, n_samples: usize) -> f64 {
    let field = problem.positivity_field();
    problem
        .interval()
        .chebyshev_nodes(n_samples)
        .into_iter()
        .map(|x| min_eigenvalue_hermitian(field.evaluate_unchecked(x)))
        .fold(f64::INFINITY, f64::min)
}

/// Half the smallest sampled eigenvalue of `B + B* + A'`, clamped at zero.
pub fn estimate_mu0(problem: &FriedrichsProblem, n_samples: usize) -> f64 {
    (0.5 * min_positivity_eigenvalue(problem, n_samples)).max(0.0)
}

/// Lower bound for `mu0` valid on the whole interval.
///
/// The smallest eigenvalue of a Hermitian field is Lipschitz with the
/// field's Frobenius Lipschitz constant `L`, and every point lies within
/// `h_max / 2` of a sample.
pub fn certified_mu0(problem: &FriedrichsProblem, n_samples: usize) -> f64 {
    let field = problem.positivity_field();
    let nodes = problem.interval().chebyshev_nodes(n_samples);
    let h_max = nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let sampled = min_positivity_eigenvalue(problem, n_samples);
    (0.5 * (sampled - field.lipschitz_bound() * 0.5 * h_max)).max(0.0)
}

/// Exact action of `T` or `T~` on a polynomial vector.
pub fn apply_operator_symbolic(
    problem: &FriedrichsProblem,
    u: &[Polynomial],
    which: OperatorKind,
) -> Result<Vec<Polynomial>> {
    let flux: Vec<Polynomial> = problem.a.apply(u)?.iter().map(|p| p.derivative()).collect();
    let (sign, zeroth) = match which {
        OperatorKind::T => (1.0, problem.b.apply(u)?),
        OperatorKind::TTilde => (-1.0, problem.tilde_zeroth_order().apply(u)?),
    };
    Ok(flux
        .iter()
        .zip(&zeroth)
        .map(|(d, z)| &d.scale(Complex64::new(sign, 0.0)) + z)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE1: &str = r#"{
        "r": 2, "interval": [0, 1],
        "A": [[[[1,0]], []], [[], [[1,0],[-1,0]]]],
        "B": [[[[1,0]], []], [[], [[1,0]]]]
    }"#;

    fn scalar(a: &[f64], b: &[f64], interval: (f64, f64)) -> FriedrichsProblem {
        let iv = Interval::new(interval.0, interval.1).unwrap();
        FriedrichsProblem::new(
            PolynomialMatrixField::new(1, vec![Polynomial::from_real(a)], iv).unwrap(),
            PolynomialMatrixField::new(1, vec![Polynomial::from_real(b)], iv).unwrap(),
        )
        .unwrap()
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn parses_example1() {
        let p = parse_problem(EXAMPLE1).unwrap();
        assert_eq!(p.r(), 2);
        let a1 = p.a.evaluate(1.0).unwrap();
        assert_eq!(a1, DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(0.0)]));
    }

    #[test]
    fn parse_errors() {
        let empty = r#"{"r": 2, "interval": [0, 1], "A": [], "B": []}"#;
        assert!(matches!(parse_problem(empty), Err(Error::Schema(_))));
        let reversed = EXAMPLE1.replace("[0, 1]", "[1, 0]");
        let err = parse_problem(&reversed).unwrap_err();
        assert!(matches!(err, Error::DegenerateInterval { .. }));
        assert!(err.to_string().contains("a ≥ b"));
        let mismatch = r#"{"r": 1, "interval": [0, 1], "A": [[[[1,0]]]], "B": [[[], []], [[], []]]}"#;
        assert!(matches!(parse_problem(mismatch), Err(Error::DimensionMismatch(_))));
        let ragged = r#"{"r": 2, "interval": [0, 1], "A": [[[]], [[], []]], "B": [[[], []], [[], []]]}"#;
        assert!(matches!(parse_problem(ragged), Err(Error::Schema(_))));
    }

    #[test]
    fn mu0_hint_is_checked() {
        let ok = EXAMPLE1.replace("\"r\": 2", "\"mu0_hint\": 0.5, \"r\": 2");
        assert_eq!(parse_problem(&ok).unwrap().mu0, 0.5);
        let bad = EXAMPLE1.replace("\"r\": 2", "\"mu0_hint\": 0.75, \"r\": 2");
        assert!(parse_problem(&bad).is_err());
    }

    #[test]
    fn evaluate_examples() {
        let p = scalar(&[0.0, 0.0, 1.0], &[1.0], (0.0, 1.0));
        assert_eq!(p.a.evaluate(0.5).unwrap()[(0, 0)], c(0.25));
        assert!(p.a.evaluate(1.5).is_err());
        let z = PolynomialMatrixField::zeros(3, Interval::new(0.0, 1.0).unwrap());
        assert!(z.evaluate(0.3).unwrap().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn derivative_examples() {
        let p = parse_problem(EXAMPLE1).unwrap();
        let d = p.a.derivative();
        assert_eq!(d.evaluate(0.4).unwrap(), DMatrix::from_row_slice(2, 2, &[c(0.0), c(0.0), c(0.0), c(-1.0)]));
        let cubic = scalar(&[0.0, 0.0, 0.0, 1.0], &[1.0], (0.0, 1.0));
        assert_eq!(*cubic.a.derivative().entry(0, 0), Polynomial::from_real(&[0.0, 0.0, 3.0]));
        assert!(p.b.derivative().entry(0, 0).is_zero());
    }

    #[test]
    fn symmetry_checks() {
        let p = parse_problem(EXAMPLE1).unwrap();
        let rep = check_symmetry(&p, DEFAULT_SAMPLES);
        assert!(rep.ok);
        assert_eq!(rep.max_defect, 0.0);

        let iv = Interval::new(0.0, 1.0).unwrap();
        let i = Polynomial::constant(Complex64::new(0.0, 1.0));
        let a = PolynomialMatrixField::new(2, vec![Polynomial::zero(), i, Polynomial::zero(), Polynomial::zero()], iv).unwrap();
        let bad = FriedrichsProblem::new(a, PolynomialMatrixField::identity(2, iv)).unwrap();
        assert!(!check_symmetry(&bad, 17).ok);

        let m1 = Polynomial::from_real(&[-1.0]);
        let a = PolynomialMatrixField::new(2, vec![Polynomial::zero(), m1.clone(), m1, Polynomial::zero()], iv).unwrap();
        let rep1 = FriedrichsProblem::new(a, PolynomialMatrixField::identity(2, iv)).unwrap();
        assert!(check_symmetry(&rep1, 17).ok);
    }

    #[test]
    fn mu0_examples() {
        let p = parse_problem(EXAMPLE1).unwrap();
        assert!((estimate_mu0(&p, DEFAULT_SAMPLES) - 0.5).abs() < 1e-14);
        assert!((certified_mu0(&p, DEFAULT_SAMPLES) - 0.5).abs() < 1e-14);
        let trivial = scalar(&[], &[1.0], (0.0, 1.0));
        assert!((estimate_mu0(&trivial, 9) - 1.0).abs() < 1e-14);
        // B + B* + A' = 4 + 1 - 2x >= 3
        let deg = scalar(&[0.0, 1.0, -1.0], &[2.0], (0.0, 1.0));
        let est = estimate_mu0(&deg, DEFAULT_SAMPLES);
        let cert = certified_mu0(&deg, DEFAULT_SAMPLES);
        assert!((est - 1.5).abs() < 1e-12);
        assert!(cert <= est && cert > 1.45);
        // negative definite part: clamps at zero
        let neg = scalar(&[], &[-1.0], (0.0, 1.0));
        assert_eq!(estimate_mu0(&neg, 9), 0.0);
    }

    #[test]
    fn mu0_monotone_under_nested_refinement() {
        let p = scalar(&[0.0, 3.0, -5.0, 2.0], &[1.0, 0.5, 4.0], (-1.0, 2.0));
        let mut prev = f64::INFINITY;
        for n in [3usize, 5, 9, 17, 33, 65, 129] {
            let m = estimate_mu0(&p, n);
            assert!(m <= prev + 1e-15, "n = {n}: {m} > {prev}");
            prev = m;
        }
    }

    #[test]
    fn operator_examples() {
        let p = parse_problem(EXAMPLE1).unwrap();
        let one = Polynomial::from_real(&[1.0]);
        let out = apply_operator_symbolic(&p, &[one.clone(), one], OperatorKind::T).unwrap();
        assert_eq!(out, vec![Polynomial::from_real(&[1.0]), Polynomial::zero()]);
        let zero = apply_operator_symbolic(&p, &[Polynomial::zero(), Polynomial::zero()], OperatorKind::TTilde).unwrap();
        assert!(zero.iter().all(Polynomial::is_zero));
        let s = scalar(&[1.0], &[1.0], (0.0, 1.0));
        let out = apply_operator_symbolic(&s, &[Polynomial::x()], OperatorKind::T).unwrap();
        assert_eq!(out, vec![Polynomial::from_real(&[1.0, 1.0])]);
        assert!(apply_operator_symbolic(&p, &[Polynomial::x()], OperatorKind::T).is_err());
    }

    #[test]
    fn lipschitz_bound_dominates_derivative_norm() {
        let p = parse_problem(EXAMPLE1).unwrap();
        assert!((p.a.lipschitz_bound() - 1.0).abs() < 1e-14);
        let s = scalar(&[0.0, 0.0, 1.0], &[1.0], (-1.0, 3.0));
        // |2x| <= 6 on [-1, 3]
        assert!((s.a.lipschitz_bound() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn chebyshev_nodes_nested() {
        let iv = Interval::new(-2.0, 5.0).unwrap();
        let coarse = iv.chebyshev_nodes(9);
        let fine = iv.chebyshev_nodes(17);
        for (k, x) in coarse.iter().enumerate() {
            assert!((fine[2 * k] - x).abs() < 1e-14);
        }
        assert_eq!(fine[0], -2.0);
        assert_eq!(fine[16], 5.0);
    }
}
