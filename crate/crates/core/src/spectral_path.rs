//! Eigenvalue curves, inertia, eigenvalue clustering and total projections
//! of a Hermitian matrix field.
//!
//! Total projections are computed two ways: as spectral sums `Σ v_i v_i*`
//! over a cluster, and as the contour integral `-(1/2πi) ∮ (A - ξ)^{-1} dξ`
//! over a circle that isolates the cluster, discretised with the trapezoid
//! rule. The two routes are independent and are cross-checked in tests.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix_field::PolynomialMatrixField;

/// Default absolute clustering tolerance.
pub const DEFAULT_GAP_TOL: f64 = 1e-6;
/// Default number of trapezoid nodes on the contour.
pub const DEFAULT_CONTOUR_NODES: usize = 64;
/// Minimum number of contour nodes accepted.
pub const MIN_CONTOUR_NODES: usize = 16;

const HERMITIAN_TOL: f64 = 1e-10;

/// Eigen-decomposition of a Hermitian matrix at one abscissa.
#[derive(Clone, Debug)]
pub struct PointSpectrum {
    pub x: f64,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `eigenvalues`.
    pub eigenvectors: DMatrix<Complex64>,
}

impl PointSpectrum {
    pub fn r(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.abs()).fold(0.0, f64::max)
    }

    /// Default zero tolerance `1e-9 (1 + max |λ|)`.
    pub fn default_zero_tol(&self) -> f64 {
        1e-9 * (1.0 + self.spectral_radius())
    }
}

/// Eigenvalues in descending order with a deterministic eigenvector phase:
/// the first component of magnitude above `1e-10` is real positive.
pub fn point_spectrum(m: &DMatrix<Complex64>, x: f64) -> Result<PointSpectrum> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "{}×{} matrix is not square",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = 1.0 + m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let defect = (m - m.adjoint()).norm();
    if defect > HERMITIAN_TOL * scale {
        return Err(Error::NotHermitian { defect });
    }
    let h = (m + m.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(h);

    let r = m.nrows();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut eigenvectors = DMatrix::zeros(r, r);
    for (col, &i) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        v /= Complex64::new(v.norm(), 0.0);
        if let Some(lead) = v.iter().find(|z| z.norm() > 1e-10).copied() {
            v *= lead.conj() / lead.norm();
        }
        eigenvectors.set_column(col, &v);
    }
    Ok(PointSpectrum {
        x,
        eigenvalues,
        eigenvectors,
    })
}

/// Spectrum of a field at `x`.
pub fn field_spectrum(field: &PolynomialMatrixField, x: f64) -> Result<PointSpectrum> {
    point_spectrum(&field.evaluate(x)?, x)
}

/// Sylvester inertia `(n⁺, n⁰, n⁻)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Inertia {
    pub n_plus: usize,
    pub n_zero: usize,
    pub n_minus: usize,
    pub zero_tol: f64,
}

impl Inertia {
    pub fn r(&self) -> usize {
        self.n_plus + self.n_zero + self.n_minus
    }

    pub fn rank(&self) -> usize {
        self.n_plus + self.n_minus
    }

    pub fn triple(&self) -> (usize, usize, usize) {
        (self.n_plus, self.n_zero, self.n_minus)
    }
}

pub fn inertia_of(spec: &PointSpectrum, zero_tol: f64) -> Inertia {
    let zero_tol = zero_tol.max(0.0);
    let n_plus = spec.eigenvalues.iter().filter(|&&l| l > zero_tol).count();
    let n_minus = spec.eigenvalues.iter().filter(|&&l| l < -zero_tol).count();
    Inertia {
        n_plus,
        n_zero: spec.r() - n_plus - n_minus,
        n_minus,
        zero_tol,
    }
}

/// A cluster of eigenvalues treated as one spectral unit.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaGroup {
    /// Mean of the member eigenvalues.
    pub center: f64,
    /// Indices into the descending eigenvalue list.
    pub member_indices: Vec<usize>,
    /// Distance to the nearest non-member eigenvalue (`INFINITY` if none).
    pub gap: f64,
    /// Largest distance from `center` to a member.
    pub half_spread: f64,
}

impl LambdaGroup {
    pub fn size(&self) -> usize {
        self.member_indices.len()
    }

    /// Radius of the isolating circle: the member spread plus half the gap.
    pub fn contour_radius(&self) -> f64 {
        if self.gap.is_finite() {
            self.half_spread + 0.5 * self.gap
        } else {
            self.half_spread + 1.0 + self.center.abs()
        }
    }
}

/// Single-linkage clustering of the sorted eigenvalues.
pub fn lambda_groups(spec: &PointSpectrum, gap_tol: f64) -> Vec<LambdaGroup> {
    cluster(&spec.eigenvalues, gap_tol, |_| 0)
}

/// Single-linkage clustering that never merges eigenvalues of different
/// sign classes (`> zero_tol`, `|λ| <= zero_tol`, `< -zero_tol`).
pub fn lambda_groups_by_sign(spec: &PointSpectrum, gap_tol: f64, zero_tol: f64) -> Vec<LambdaGroup> {
    cluster(&spec.eigenvalues, gap_tol, |l| sign_class(l, zero_tol))
}

pub fn sign_class(lambda: f64, zero_tol: f64) -> i8 {
    if lambda > zero_tol {
        1
    } else if lambda < -zero_tol {
        -1
    } else {
        0
    }
}

fn cluster(eigs: &[f64], gap_tol: f64, class: impl Fn(f64) -> i8) -> Vec<LambdaGroup> {
    let mut runs: Vec<Vec<usize>> = Vec::new();
    for i in 0..eigs.len() {
        match runs.last_mut() {
            Some(run)
                if eigs[*run.last().unwrap()] - eigs[i] <= gap_tol
                    && class(eigs[run[0]]) == class(eigs[i]) =>
            {
                run.push(i)
            }
            _ => runs.push(vec![i]),
        }
    }
    runs.iter()
        .enumerate()
        .map(|(k, run)| {
            let first = eigs[run[0]];
            let last = eigs[*run.last().unwrap()];
            let above = (k > 0).then(|| eigs[*runs[k - 1].last().unwrap()] - first);
            let below = runs.get(k + 1).map(|next| last - eigs[next[0]]);
            let gap = above.into_iter().chain(below).fold(f64::INFINITY, f64::min);
            let center = run.iter().map(|&i| eigs[i]).sum::<f64>() / run.len() as f64;
            LambdaGroup {
                center,
                member_indices: run.clone(),
                gap,
                half_spread: (first - center).max(center - last),
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionSource {
    Direct,
    Contour,
}

/// Orthogonal projector onto the invariant subspace of a cluster.
#[derive(Clone, Debug)]
pub struct TotalProjection {
    pub matrix: DMatrix<Complex64>,
    pub rank: usize,
    pub source: ProjectionSource,
}

impl TotalProjection {
    /// `max(‖P² - P‖_F, ‖P - P*‖_F)`.
    pub fn projector_defect(&self) -> f64 {
        let p = &self.matrix;
        (p * p - p).norm().max((p - p.adjoint()).norm())
    }

    /// Orthonormal basis of the range, from the top eigenvectors of `P`.
    pub fn range_basis(&self) -> DMatrix<Complex64> {
        let spec = point_spectrum(&self.matrix, f64::NAN)
            .expect("projection matrices are Hermitian");
        spec.eigenvectors.columns(0, self.rank).into_owned()
    }
}

/// `Σ_{i ∈ group} v_i v_i*`.
pub fn total_projection_direct(spec: &PointSpectrum, group: &LambdaGroup) -> TotalProjection {
    let r = spec.r();
    let mut p = DMatrix::zeros(r, r);
    for &i in &group.member_indices {
        let v = spec.eigenvectors.column(i);
        p += &v * v.adjoint();
    }
    TotalProjection {
        matrix: p,
        rank: group.size(),
        source: ProjectionSource::Direct,
    }
}

/// Trapezoid quadrature of `-(1/2πi) ∮ R(ξ) dξ` on a circle centred at
/// `center`, where `R(ξ) = (m - ξ)^{-1}`.
pub fn contour_projection_matrix(
    m: &DMatrix<Complex64>,
    center: f64,
    radius: f64,
    n_nodes: usize,
) -> Result<DMatrix<Complex64>> {
    if !(radius > 1e-12 * (1.0 + center.abs())) {
        return Err(Error::ContourTooSmall { radius });
    }
    let n_nodes = n_nodes.max(MIN_CONTOUR_NODES);
    let r = m.nrows();
    let mut acc = DMatrix::<Complex64>::zeros(r, r);
    for k in 0..n_nodes {
        let theta = 2.0 * PI * k as f64 / n_nodes as f64;
        let phase = Complex64::from_polar(1.0, theta);
        let xi = Complex64::new(center, 0.0) + phase * radius;
        let mut shifted = m.clone();
        for i in 0..r {
            shifted[(i, i)] -= xi;
        }
        let resolvent = shifted
            .lu()
            .try_inverse()
            .ok_or(Error::ResolventSingular { node: k })?;
        if resolvent.iter().any(|z| !z.is_finite()) {
            return Err(Error::ResolventSingular { node: k });
        }
        acc += resolvent * phase;
    }
    // dξ = iρ e^{iθ} dθ, so -(1/2πi) Σ R iρ e^{iθ} (2π/n) = -(ρ/n) Σ R e^{iθ}
    Ok(acc * Complex64::new(-radius / n_nodes as f64, 0.0))
}

/// Contour-integral total projection of `field(x)` for a cluster.
pub fn total_projection_contour(
    field: &PolynomialMatrixField,
    x: f64,
    group: &LambdaGroup,
    n_nodes: usize,
) -> Result<TotalProjection> {
    let m = field.evaluate(x)?;
    let matrix = contour_projection_matrix(&m, group.center, group.contour_radius(), n_nodes)?;
    let rank = matrix.trace().re.round().max(0.0) as usize;
    Ok(TotalProjection {
        matrix,
        rank,
        source: ProjectionSource::Contour,
    })
}

/// Contour projection when the cluster is well separated
/// (`gap >= 10 gap_tol`), the spectral sum otherwise.
pub fn total_projection(
    field: &PolynomialMatrixField,
    spec: &PointSpectrum,
    group: &LambdaGroup,
    gap_tol: f64,
    n_nodes: usize,
) -> Result<TotalProjection> {
    if group.gap < 10.0 * gap_tol {
        return Ok(total_projection_direct(spec, group));
    }
    total_projection_contour(field, spec.x, group, n_nodes)
}

#[derive(Clone, Debug)]
pub struct EigenTrack {
    pub grid: Vec<f64>,
    /// `curves[i][k]` is the i-th largest eigenvalue at `grid[k]`.
    pub curves: Vec<Vec<f64>>,
    /// Largest excess of the sorted-eigenvalue distance over `‖A(x) - A(y)‖_F`
    /// for adjacent grid points; non-positive up to rounding.
    pub hw_defect: f64,
}

/// Sorted eigenvalue curves over a grid with the Hoffman–Wielandt check.
pub fn track_eigenvalues(field: &PolynomialMatrixField, grid: &[f64]) -> Result<EigenTrack> {
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("grid must be sorted".into()));
    }
    let r = field.r();
    let mats = grid
        .iter()
        .map(|&x| field.evaluate(x))
        .collect::<Result<Vec<_>>>()?;
    let spectra = mats
        .iter()
        .zip(grid)
        .map(|(m, &x)| point_spectrum(m, x))
        .collect::<Result<Vec<_>>>()?;
    let curves = (0..r)
        .map(|i| spectra.iter().map(|s| s.eigenvalues[i]).collect())
        .collect();
    let mut hw_defect = if grid.len() < 2 { 0.0 } else { f64::NEG_INFINITY };
    for k in 1..grid.len() {
        let eig_dist = spectra[k]
            .eigenvalues
            .iter()
            .zip(&spectra[k - 1].eigenvalues)
            .map(|(l, m)| (l - m).powi(2))
            .sum::<f64>()
            .sqrt();
        let mat_dist = (&mats[k] - &mats[k - 1]).norm();
        hw_defect = hw_defect.max(eig_dist - mat_dist);
    }
    Ok(EigenTrack {
        grid: grid.to_vec(),
        curves,
        hw_defect,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ContinuityReport {
    /// `max ‖P(x) - P(y)‖_F / ‖A(x) - A(y)‖_F` over adjacent window nodes.
    pub max_step_ratio: f64,
    /// `ρ · max ‖R(ξ, z)‖₂²` over the contour and window.
    pub resolvent_bound: f64,
}

/// Samples the total projection of `group` (taken at `x0`) on a window
/// around `x0` and measures its Lipschitz ratio against `A`.
pub fn projection_continuity_check(
    field: &PolynomialMatrixField,
    x0: f64,
    eps: f64,
    group: &LambdaGroup,
) -> Result<ContinuityReport> {
    const WINDOW_NODES: usize = 21;
    const BOUND_NODES: usize = 256;
    let iv = field.interval();
    let lo = (x0 - eps).max(iv.a);
    let hi = (x0 + eps).min(iv.b);
    let window: Vec<f64> = (0..WINDOW_NODES)
        .map(|k| lo + (hi - lo) * k as f64 / (WINDOW_NODES - 1) as f64)
        .collect();

    let radius = group.contour_radius();
    let center = group.center;
    let mut mats = Vec::with_capacity(window.len());
    let mut projections = Vec::with_capacity(window.len());
    let mut max_resolvent: f64 = 0.0;
    for &x in &window {
        let m = field.evaluate(x)?;
        let spec = point_spectrum(&m, x)?;
        let inside = spec
            .eigenvalues
            .iter()
            .filter(|&&l| (l - center).abs() < radius)
            .count();
        let closest = spec
            .eigenvalues
            .iter()
            .map(|&l| ((l - center).abs() - radius).abs())
            .fold(f64::INFINITY, f64::min);
        if inside != group.size() || closest < 1e-3 * radius {
            return Err(Error::NotIsolated {
                x,
                reason: format!(
                    "{inside} eigenvalues inside the contour, expected {}",
                    group.size()
                ),
            });
        }
        for k in 0..BOUND_NODES {
            let xi = Complex64::new(center, 0.0)
                + Complex64::from_polar(radius, 2.0 * PI * k as f64 / BOUND_NODES as f64);
            let dist = spec
                .eigenvalues
                .iter()
                .map(|&l| (Complex64::new(l, 0.0) - xi).norm())
                .fold(f64::INFINITY, f64::min);
            max_resolvent = max_resolvent.max(1.0 / dist);
        }
        projections.push(contour_projection_matrix(&m, center, radius, DEFAULT_CONTOUR_NODES)?);
        mats.push(m);
    }

    let mut max_step_ratio: f64 = 0.0;
    for k in 1..window.len() {
        let dp = (&projections[k] - &projections[k - 1]).norm();
        let da = (&mats[k] - &mats[k - 1]).norm();
        // 0/0 counts as 0; rounding-level dp over zero da likewise
        if da > 0.0 {
            max_step_ratio = max_step_ratio.max(dp / da);
        }
    }
    Ok(ContinuityReport {
        max_step_ratio,
        resolvent_bound: radius * max_resolvent * max_resolvent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix_field::Interval;
    use crate::polynomial::Polynomial;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn real(r: usize, vals: &[f64]) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(r, r, &vals.iter().map(|&v| c(v)).collect::<Vec<_>>())
    }

    fn spectrum_of_values(eigs: &[f64]) -> PointSpectrum {
        let r = eigs.len();
        point_spectrum(&DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(r, eigs.iter().map(|&v| c(v)))), 0.0).unwrap()
    }

    fn example1_a() -> PolynomialMatrixField {
        let iv = Interval::new(0.0, 1.0).unwrap();
        PolynomialMatrixField::new(
            2,
            vec![
                Polynomial::from_real(&[1.0]),
                Polynomial::zero(),
                Polynomial::zero(),
                Polynomial::from_real(&[1.0, -1.0]),
            ],
            iv,
        )
        .unwrap()
    }

    #[test]
    fn point_spectrum_examples() {
        let s = point_spectrum(&real(2, &[1.0, 0.0, 0.0, 0.0]), 1.0).unwrap();
        assert_eq!(s.eigenvalues, vec![1.0, 0.0]);
        let s = point_spectrum(&real(2, &[1.0, 0.0, 0.0, 1.0]), 0.0).unwrap();
        assert_eq!(s.eigenvalues, vec![1.0, 1.0]);
        let u = &s.eigenvectors;
        assert!((u.adjoint() * u - DMatrix::identity(2, 2)).norm() < 1e-12);
        let s = point_spectrum(&real(2, &[0.0, -1.0, -1.0, 0.0]), 0.0).unwrap();
        assert!((s.eigenvalues[0] - 1.0).abs() < 1e-14 && (s.eigenvalues[1] + 1.0).abs() < 1e-14);
        // phase convention: first component real positive
        assert!(s.eigenvectors[(0, 0)].re > 0.0 && s.eigenvectors[(0, 0)].im == 0.0);
    }

    #[test]
    fn point_spectrum_rejects_non_hermitian() {
        let m = DMatrix::from_row_slice(2, 2, &[c(0.0), Complex64::new(0.0, 1.0), c(0.0), c(0.0)]);
        assert!(matches!(point_spectrum(&m, 0.0), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn complex_hermitian_eigenpairs() {
        let i = Complex64::new(0.0, 1.0);
        let m = DMatrix::from_row_slice(3, 3, &[
            c(2.0), c(1.0) + i, -i,
            c(1.0) - i, c(-1.0), c(0.5),
            i, c(0.5), c(0.0),
        ]);
        let s = point_spectrum(&m, 0.0).unwrap();
        for (k, &l) in s.eigenvalues.iter().enumerate() {
            let v = s.eigenvectors.column(k);
            assert!((&m * v - v * c(l)).norm() < 1e-10 * (1.0 + m.norm()));
        }
        assert!(s.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn inertia_examples() {
        let a = example1_a();
        let s0 = field_spectrum(&a, 0.0).unwrap();
        assert_eq!(inertia_of(&s0, s0.default_zero_tol()).triple(), (2, 0, 0));
        let s1 = field_spectrum(&a, 1.0).unwrap();
        assert_eq!(inertia_of(&s1, s1.default_zero_tol()).triple(), (1, 1, 0));
        let s = point_spectrum(&real(2, &[0.0, -1.0, -1.0, 0.0]), 0.0).unwrap();
        assert_eq!(inertia_of(&s, s.default_zero_tol()).triple(), (1, 0, 1));
    }

    #[test]
    fn clustering_examples() {
        let g = lambda_groups(&spectrum_of_values(&[3.0, 1.0]), 0.5);
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].gap, 2.0);
        let g = lambda_groups(&spectrum_of_values(&[1.0, 1.0]), 0.5);
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].member_indices, vec![0, 1]);
        assert!(g[0].gap.is_infinite());
        let g = lambda_groups(&spectrum_of_values(&[1.0, 0.6, 0.0]), 0.5);
        let sets: Vec<_> = g.iter().map(|g| g.member_indices.clone()).collect();
        assert_eq!(sets, vec![vec![0, 1], vec![2]]);
        assert!((g[0].gap - 0.6).abs() < 1e-15);
    }

    #[test]
    fn sign_aware_clustering_splits_at_zero() {
        let s = spectrum_of_values(&[1.0, 4e-7, 0.0, -3e-7]);
        assert_eq!(lambda_groups(&s, 1e-6).len(), 2);
        let g = lambda_groups_by_sign(&s, 1e-6, 1e-9);
        let sets: Vec<_> = g.iter().map(|g| g.member_indices.clone()).collect();
        assert_eq!(sets, vec![vec![0], vec![1], vec![2], vec![3]]);
    }

    #[test]
    fn direct_projection_examples() {
        let s = spectrum_of_values(&[3.0, 1.0]);
        let g = lambda_groups(&s, DEFAULT_GAP_TOL);
        let p = total_projection_direct(&s, &g[0]);
        assert!((p.matrix - real(2, &[1.0, 0.0, 0.0, 0.0])).norm() < 1e-15);

        let s = spectrum_of_values(&[1.0, 1.0]);
        let g = lambda_groups(&s, DEFAULT_GAP_TOL);
        let p = total_projection_direct(&s, &g[0]);
        assert!((p.matrix - DMatrix::identity(2, 2)).norm() < 1e-14);
        assert_eq!(p.rank, 2);

        let s = point_spectrum(&real(2, &[0.0, -1.0, -1.0, 0.0]), 0.0).unwrap();
        let g = lambda_groups(&s, DEFAULT_GAP_TOL);
        let p = total_projection_direct(&s, &g[0]);
        assert!((p.matrix - real(2, &[0.5, -0.5, -0.5, 0.5])).norm() < 1e-14);
    }

    #[test]
    fn contour_projection_examples() {
        let m = real(2, &[3.0, 0.0, 0.0, 1.0]);
        let p = contour_projection_matrix(&m, 3.0, 1.0, 64).unwrap();
        assert!((p - real(2, &[1.0, 0.0, 0.0, 0.0])).norm() < 1e-10);

        let a = example1_a();
        let s = field_spectrum(&a, 1.0).unwrap();
        let g = lambda_groups(&s, DEFAULT_GAP_TOL);
        assert!((g[0].contour_radius() - 0.5).abs() < 1e-15);
        let p = total_projection_contour(&a, 1.0, &g[0], 64).unwrap();
        assert!((p.matrix - real(2, &[1.0, 0.0, 0.0, 0.0])).norm() < 1e-10);
        assert_eq!(p.rank, 1);
    }

    #[test]
    fn contour_errors() {
        let m = real(2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(contour_projection_matrix(&m, 1.0, 0.0, 64), Err(Error::ContourTooSmall { .. })));
        // circle through both eigenvalues: the first node lands on λ = 1
        assert!(matches!(
            contour_projection_matrix(&m, 0.5, 0.5, 64),
            Err(Error::ResolventSingular { node: 0 })
        ));
        // fewer than the minimum node count is clamped, still accurate
        let p = contour_projection_matrix(&m, 1.0, 0.5, 4).unwrap();
        assert!((p - real(2, &[1.0, 0.0, 0.0, 0.0])).norm() < 1e-4);
    }

    #[test]
    fn degenerate_gap_falls_back_to_direct() {
        let a = example1_a();
        let s = field_spectrum(&a, 1e-8).unwrap();
        let g = lambda_groups(&s, 1e-6);
        assert_eq!(g.len(), 1);
        let s = field_spectrum(&a, 5e-6).unwrap();
        let g = lambda_groups(&s, 1e-6);
        assert_eq!(g.len(), 2);
        let p = total_projection(&a, &s, &g[0], 1e-6, 64).unwrap();
        assert_eq!(p.source, ProjectionSource::Direct);
        let s = field_spectrum(&a, 0.5).unwrap();
        let g = lambda_groups(&s, 1e-6);
        let p = total_projection(&a, &s, &g[0], 1e-6, 64).unwrap();
        assert_eq!(p.source, ProjectionSource::Contour);
    }

    #[test]
    fn tracking_examples() {
        let a = example1_a();
        let grid: Vec<f64> = (0..11).map(|k| k as f64 / 10.0).collect();
        let t = track_eigenvalues(&a, &grid).unwrap();
        for (k, &x) in grid.iter().enumerate() {
            assert!((t.curves[0][k] - 1.0).abs() < 1e-14);
            assert!((t.curves[1][k] - (1.0 - x)).abs() < 1e-14);
        }
        assert!(t.hw_defect <= 1e-9);

        let iv = Interval::new(0.0, 1.0).unwrap();
        let constant = PolynomialMatrixField::identity(3, iv);
        let t = track_eigenvalues(&constant, &grid).unwrap();
        assert_eq!(t.hw_defect, 0.0);

        let m1 = Polynomial::from_real(&[-1.0]);
        let rep1 = PolynomialMatrixField::new(2, vec![Polynomial::zero(), m1.clone(), m1, Polynomial::zero()], iv).unwrap();
        let t = track_eigenvalues(&rep1, &grid).unwrap();
        assert!(t.curves[0].iter().all(|l| (l - 1.0).abs() < 1e-14));
        assert!(t.curves[1].iter().all(|l| (l + 1.0).abs() < 1e-14));
    }

    #[test]
    fn continuity_examples() {
        let iv = Interval::new(0.0, 1.0).unwrap();
        let constant = PolynomialMatrixField::identity(2, iv);
        let s = field_spectrum(&constant, 0.5).unwrap();
        let g = lambda_groups(&s, DEFAULT_GAP_TOL);
        let rep = projection_continuity_check(&constant, 0.5, 0.25, &g[0]).unwrap();
        assert_eq!(rep.max_step_ratio, 0.0);

        let a = example1_a();
        let s = field_spectrum(&a, 1.0).unwrap();
        let g = lambda_groups(&s, DEFAULT_GAP_TOL);
        let rep = projection_continuity_check(&a, 1.0, 0.25, &g[0]).unwrap();
        // exact ratio is 0; what remains is trapezoid error ~ (2/3)^64 over ‖ΔA‖
        assert!(rep.max_step_ratio < 1e-8, "{}", rep.max_step_ratio);

        // eigenvalue 1 - x crosses the contour around λ = 1 for a wide window
        assert!(matches!(
            projection_continuity_check(&a, 1.0, 1.0, &g[0]),
            Err(Error::NotIsolated { .. })
        ));
    }

    #[test]
    fn continuity_rotation_family_bounded() {
        // A = 2 w w^T with w = (1 - x²/2, x)
        let iv = Interval::new(-0.5, 0.5).unwrap();
        let cx = Polynomial::from_real(&[1.0, 0.0, -0.5]);
        let sx = Polynomial::x();
        let two = Polynomial::from_real(&[2.0]);
        let e = |p: &Polynomial, q: &Polynomial| &two * &(p * q);
        let a = PolynomialMatrixField::new(2, vec![e(&cx, &cx), e(&cx, &sx), e(&sx, &cx), e(&sx, &sx)], iv).unwrap();
        let s = field_spectrum(&a, 0.0).unwrap();
        let g = lambda_groups(&s, DEFAULT_GAP_TOL);
        let rep = projection_continuity_check(&a, 0.0, 0.25, &g[0]).unwrap();
        assert!(rep.max_step_ratio > 0.0);
        assert!(rep.max_step_ratio.is_finite());
        assert!(rep.max_step_ratio <= rep.resolvent_bound);
    }
}
