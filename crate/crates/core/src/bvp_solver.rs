//! Box-scheme discretisation of `T₁` and `T̃₁` on uniform grids.
//!
//! Cell `j` (nodes `x_j`, `x_{j+1}`) contributes the r rows
//!
//! ```text
//! T:  [A(x_{j+1}) u_{j+1} - A(x_j) u_j] / h + B(x_{j+½}) (u_j + u_{j+1}) / 2
//! T~: -[A(x_{j+1}) u_{j+1} - A(x_j) u_j] / h + (B* + A')(x_{j+½}) (u_j + u_{j+1}) / 2
//! ```
//!
//! Boundary constraints append one row per unit of projector rank. The
//! solver never consults the kernel-dimension formula; it is the independent
//! check on it.

use nalgebra::{DMatrix, DVector, SVD};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::banded;
use crate::boundary_conditions::{boundary_form_values, BoundaryConditionSpec, Endpoint, EndpointPair};
use crate::error::{Error, Result};
use crate::matrix_field::{apply_operator_symbolic, FriedrichsProblem, Interval, OperatorKind};
use crate::polynomial::Polynomial;

/// Default relative singular-value threshold for nullspace detection.
pub const DEFAULT_SVD_TOL: f64 = 1e-8;
/// Candidates whose reference-normalised L² norm grows by this factor per
/// grid doubling are taken to leave L²: it corresponds to a local
/// exponent `|x - s|^α` with `α = -3/4`.
pub const L2_GROWTH_THRESHOLD: f64 = 1.189_207_115_002_721; // 2^{1/4}

fn c(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

/// Uniform grid on `[a, b]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub nodes: Vec<f64>,
    pub h: f64,
}

impl Grid {
    pub fn uniform(interval: Interval, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidArgument(format!("grid needs at least 3 nodes, got {n}")));
        }
        let h = interval.length() / (n - 1) as f64;
        let mut nodes: Vec<f64> = (0..n).map(|j| interval.a + h * j as f64).collect();
        nodes[n - 1] = interval.b;
        Ok(Self { nodes, h })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn midpoints(&self) -> Vec<f64> {
        self.nodes.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Trapezoid weights.
    pub fn weights(&self) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|j| if j == 0 || j == n - 1 { 0.5 * self.h } else { self.h })
            .collect()
    }
}

/// Values of an r-vector function at the grid nodes, stored node-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub r: usize,
    pub values: DVector<Complex64>,
}

impl GridFunction {
    pub fn zeros(r: usize, n: usize) -> Self {
        Self {
            r,
            values: DVector::zeros(r * n),
        }
    }

    pub fn sample(polys: &[Polynomial], xs: &[f64]) -> Self {
        let r = polys.len();
        Self {
            r,
            values: DVector::from_iterator(
                r * xs.len(),
                xs.iter().flat_map(|&x| polys.iter().map(move |p| p.eval(x))),
            ),
        }
    }

    pub fn n(&self) -> usize {
        self.values.len() / self.r
    }

    pub fn at(&self, j: usize) -> DVector<Complex64> {
        self.values.rows(j * self.r, self.r).into_owned()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.is_finite())
    }

    /// Trapezoid L² norm.
    pub fn l2_norm(&self, grid: &Grid) -> f64 {
        grid.weights()
            .iter()
            .enumerate()
            .map(|(j, w)| w * self.at(j).norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    /// CSV with columns `x, Re u1, Im u1, …`.
    pub fn to_csv(&self, xs: &[f64]) -> String {
        let mut out = String::from("x");
        for i in 1..=self.r {
            out.push_str(&format!(",Re u{i},Im u{i}"));
        }
        out.push_str("\r\n");
        for (j, x) in xs.iter().enumerate() {
            out.push_str(&format!("{x:.16e}"));
            for z in self.at(j).iter() {
                out.push_str(&format!(",{:.16e},{:.16e}", z.re, z.im));
            }
            out.push_str("\r\n");
        }
        out
    }
}

/// Assembled linear system for `T₁|_V` or `T̃₁|_Ṽ`.
///
/// Rows are ordered: constraints at `a`, interior cells, constraints at `b`,
/// which keeps the square systems banded.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    pub matrix: DMatrix<Complex64>,
    pub which: OperatorKind,
    pub grid: Grid,
    pub r: usize,
    pub rows_a: usize,
    pub rows_b: usize,
}

impl DiscreteOperator {
    pub fn k(&self) -> usize {
        self.rows_a + self.rows_b
    }

    pub fn interior_rows(&self) -> std::ops::Range<usize> {
        self.rows_a..self.rows_a + self.r * (self.grid.len() - 1)
    }

    pub fn is_square(&self) -> bool {
        self.matrix.is_square()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.matrix.shape()
    }

    /// Scheme rows applied to `u`: the discrete `T u` at cell midpoints.
    pub fn apply_interior(&self, u: &GridFunction) -> DVector<Complex64> {
        let rows = self.interior_rows();
        self.matrix.rows(rows.start, rows.len()) * &u.values
    }

    /// Right-hand side vector for cell-midpoint data and homogeneous constraints.
    pub fn rhs_vector(&self, f: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        let rows = self.interior_rows();
        if f.len() != rows.len() {
            return Err(Error::DimensionMismatch(format!(
                "right-hand side has {} entries, expected {}",
                f.len(),
                rows.len()
            )));
        }
        let mut b = DVector::zeros(self.matrix.nrows());
        b.rows_mut(rows.start, rows.len()).copy_from(f);
        Ok(b)
    }
}

fn scheme_block(problem: &FriedrichsProblem, which: OperatorKind, grid: &Grid) -> Vec<[DMatrix<Complex64>; 2]> {
    let zeroth = match which {
        OperatorKind::T => problem.b.clone(),
        OperatorKind::TTilde => problem.tilde_zeroth_order(),
    };
    let sign = match which {
        OperatorKind::T => 1.0,
        OperatorKind::TTilde => -1.0,
    };
    let inv_h = 1.0 / grid.h;
    let a_at: Vec<DMatrix<Complex64>> = grid.nodes.iter().map(|&x| problem.a.evaluate_unchecked(x)).collect();
    grid.midpoints()
        .iter()
        .enumerate()
        .map(|(j, &xm)| {
            let m = zeroth.evaluate_unchecked(xm) * c(0.5);
            let left = &m - &a_at[j] * c(sign * inv_h);
            let right = &m + &a_at[j + 1] * c(sign * inv_h);
            [left, right]
        })
        .collect()
}

/// Assembles the box scheme with the constraints of `spec` (`V` for `T`,
/// `Ṽ` for `T~`). Pass an empty spec for the unconstrained operator.
pub fn discretize(
    problem: &FriedrichsProblem,
    spec: &BoundaryConditionSpec,
    n: usize,
    which: OperatorKind,
) -> Result<DiscreteOperator> {
    let iv = problem.interval();
    let grid = Grid::uniform(iv, n)?;
    let r = problem.r();
    let constraints = match which {
        OperatorKind::T => &spec.constraints_v,
        OperatorKind::TTilde => &spec.constraints_v_tilde,
    };
    let rows_of = |endpoint: Endpoint| -> Result<Vec<DMatrix<Complex64>>> {
        constraints
            .iter()
            .filter(|c| c.endpoint == endpoint)
            .map(|c| {
                if c.projector.nrows() != r {
                    return Err(Error::DimensionMismatch(format!(
                        "{}×{} constraint projector for an r = {r} system",
                        c.projector.nrows(),
                        c.projector.ncols()
                    )));
                }
                Ok(c.constraint_rows())
            })
            .collect()
    };
    let at_a = rows_of(Endpoint::A)?;
    let at_b = rows_of(Endpoint::B)?;
    let rows_a: usize = at_a.iter().map(|m| m.nrows()).sum();
    let rows_b: usize = at_b.iter().map(|m| m.nrows()).sum();

    let interior = r * (n - 1);
    let mut matrix = DMatrix::<Complex64>::zeros(rows_a + interior + rows_b, r * n);
    let mut row = 0;
    for m in &at_a {
        matrix.view_mut((row, 0), m.shape()).copy_from(m);
        row += m.nrows();
    }
    for (j, [left, right]) in scheme_block(problem, which, &grid).into_iter().enumerate() {
        matrix.view_mut((row, j * r), (r, r)).copy_from(&left);
        matrix.view_mut((row, (j + 1) * r), (r, r)).copy_from(&right);
        row += r;
    }
    for m in &at_b {
        matrix.view_mut((row, (n - 1) * r), m.shape()).copy_from(m);
        row += m.nrows();
    }
    Ok(DiscreteOperator {
        matrix,
        which,
        grid,
        r,
        rows_a,
        rows_b,
    })
}

/// Solution of a discrete boundary value problem.
#[derive(Clone, Debug)]
pub struct BvpSolution {
    pub u: GridFunction,
    /// Euclidean residual of the full system.
    pub residual: f64,
    pub threshold: f64,
    /// Square system with a vanishing pivot, or rectangular system without
    /// full row rank.
    pub rank_deficient: bool,
    pub method: SolveMethod,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    BandedLu,
    MinNormLeastSquares,
}

/// Rank-deficiency cutoff on pivot ratios and relative singular values.
const RANK_TOL: f64 = 1e-12;

/// Solves `op u = f` with homogeneous constraints, where `f` holds the
/// right-hand side at the cell midpoints (node-major, `r (N-1)` entries).
/// Square systems use banded LU; rectangular ones the minimum-norm least
/// squares solution. A residual above `1e-8 (1 + ‖f‖)` is an error.
pub fn solve_bvp(op: &DiscreteOperator, f: &DVector<Complex64>) -> Result<BvpSolution> {
    let b = op.rhs_vector(f)?;
    let (x, rank_deficient, method) = if op.is_square() {
        match banded::solve(op.matrix.clone(), b.clone()) {
            Some(sol) => (sol.x, sol.pivot_ratio < RANK_TOL, SolveMethod::BandedLu),
            None => (DVector::from_element(op.matrix.ncols(), c(f64::NAN)), true, SolveMethod::BandedLu),
        }
    } else {
        let svd = SVD::new(op.matrix.clone(), true, true);
        let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let rank = svd.singular_values.iter().filter(|&&s| s > RANK_TOL * top).count();
        let x = svd
            .solve(&b, RANK_TOL * top)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        (x, rank < op.matrix.nrows(), SolveMethod::MinNormLeastSquares)
    };
    let residual = if x.iter().all(|z| z.is_finite()) {
        (&op.matrix * &x - &b).norm()
    } else {
        f64::INFINITY
    };
    let threshold = 1e-8 * (1.0 + f.norm());
    if !(residual <= threshold) {
        return Err(Error::ResidualTooLarge { residual, threshold });
    }
    Ok(BvpSolution {
        u: GridFunction { r: op.r, values: x },
        residual,
        threshold,
        rank_deficient,
        method,
    })
}

/// Cell-midpoint samples of a polynomial right-hand side.
pub fn midpoint_rhs(grid: &Grid, f: &[Polynomial]) -> DVector<Complex64> {
    GridFunction::sample(f, &grid.midpoints()).values
}

/// Smallest singular value of the operator between grid L² norms: unknowns
/// and scheme rows weighted by `√h`, constraint rows unweighted. Stays
/// bounded below under refinement when the restricted operator is bijective.
pub fn smallest_singular_value(op: &DiscreteOperator) -> f64 {
    let mut m = op.matrix.clone();
    let scale = 1.0 / op.grid.h.sqrt();
    for i in (0..op.rows_a).chain(op.interior_rows().end..m.nrows()) {
        m.row_mut(i).scale_mut(scale);
    }
    m.singular_values().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Right nullspace of a matrix by singular-value thresholding relative to
/// the largest singular value. Columns are orthonormal.
pub fn nullspace(m: &DMatrix<Complex64>, rel_tol: f64) -> DMatrix<Complex64> {
    let (rows, cols) = m.shape();
    // pad to square so that the SVD returns a full set of right vectors
    let padded = if rows < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = SVD::new(padded, false, true);
    let v_t = svd.v_t.expect("requested");
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= rel_tol * top)
        .collect();
    DMatrix::from_fn(cols, keep.len(), |i, k| v_t[(keep[k], i)].conj())
}

/// Nullspace summary on one grid.
#[derive(Clone, Debug, Serialize)]
pub struct GridKernel {
    pub n: usize,
    /// Dimension of the discrete nullspace.
    pub nullity: usize,
    /// Singular values of the reference-node evaluation of an L²-orthonormal
    /// nullspace basis, descending.
    pub reference_singular_values: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelEstimate {
    pub which: OperatorKind,
    pub dimension: usize,
    pub grids: Vec<GridKernel>,
    /// Growth ratios of the reference-normalised L² norm for each doubling,
    /// per candidate (descending reference singular value order).
    pub growth: Vec<Vec<f64>>,
    /// In-L² counts for each consecutive pair of grids.
    pub counts: Vec<usize>,
    #[serde(skip)]
    pub basis: Vec<GridFunction>,
    #[serde(skip)]
    pub basis_grid: Option<Grid>,
}

struct GridKernelData {
    summary: GridKernel,
    /// L²-orthonormal nullspace basis composed with the right singular
    /// vectors of the reference evaluation.
    candidates: DMatrix<Complex64>,
    grid: Grid,
}

fn reference_points(problem: &FriedrichsProblem, coarse: &Grid) -> Vec<f64> {
    let n = coarse.len();
    coarse.nodes[1..n - 1]
        .iter()
        .copied()
        .filter(|&x| {
            let m = problem.a.evaluate_unchecked(x);
            let eig = ((&m + m.adjoint()) * c(0.5)).symmetric_eigenvalues();
            let smallest = eig.iter().map(|l| l.abs()).fold(f64::INFINITY, f64::min);
            let largest = eig.iter().map(|l| l.abs()).fold(0.0, f64::max);
            smallest > 1e-8 * (1.0 + largest)
        })
        .collect()
}

fn grid_kernel(
    problem: &FriedrichsProblem,
    which: OperatorKind,
    n: usize,
    svd_tol: f64,
    refs: &[f64],
) -> Result<GridKernelData> {
    let op = discretize(problem, &BoundaryConditionSpec::default(), n, which)?;
    let r = op.r;
    let k = nullspace(&op.matrix, svd_tol);
    let m = k.ncols();
    let grid = op.grid.clone();
    if m == 0 {
        return Ok(GridKernelData {
            summary: GridKernel {
                n,
                nullity: 0,
                reference_singular_values: vec![],
            },
            candidates: k,
            grid,
        });
    }
    // L²_h-orthonormalise: K (K* W K)^{-1/2}
    let w = grid.weights();
    let mut wk = k.clone();
    for (j, wj) in w.iter().enumerate() {
        for i in 0..r {
            wk.row_mut(j * r + i).scale_mut(*wj);
        }
    }
    let gram = k.adjoint() * wk;
    let g = ((&gram + gram.adjoint()) * c(0.5)).symmetric_eigen();
    let inv_sqrt = &g.eigenvectors
        * DMatrix::from_diagonal(&g.eigenvalues.map(|l| c(1.0 / l.max(1e-300).sqrt())))
        * g.eigenvectors.adjoint();
    let k_hat = &k * inv_sqrt;

    let ref_nodes: Vec<usize> = refs
        .iter()
        .map(|&x| (((x - grid.nodes[0]) / grid.h).round() as usize).min(grid.len() - 1))
        .collect();
    let mut e = DMatrix::<Complex64>::zeros(ref_nodes.len() * r, m);
    for (q, &j) in ref_nodes.iter().enumerate() {
        for i in 0..r {
            e.row_mut(q * r + i).copy_from(&k_hat.row(j * r + i));
        }
    }
    // pad so the SVD yields all m right vectors even with few reference rows
    let rows = e.nrows().max(m);
    let mut e_pad = DMatrix::zeros(rows, m);
    e_pad.view_mut((0, 0), e.shape()).copy_from(&e);
    let svd = SVD::new(e_pad, false, true);
    let v_t = svd.v_t.expect("requested");
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let rot = DMatrix::from_fn(m, m, |i, col| v_t[(order[col], i)].conj());
    Ok(GridKernelData {
        summary: GridKernel {
            n,
            nullity: m,
            reference_singular_values: values,
        },
        candidates: k_hat * rot,
        grid,
    })
}

/// Measures `dim ker T₁` (or `T̃₁`) from the unconstrained discrete operator.
///
/// On each grid the nullspace is made L²-orthonormal and evaluated at fixed
/// interior reference points (interior nodes of the coarsest grid where `A`
/// is nonsingular). A genuine L² kernel element keeps an O(1) share of its
/// norm at those points under refinement; a non-L² candidate concentrates at
/// a singular point and its share decays by a fixed factor per doubling.
/// The count must agree between the last two refinements.
pub fn numerical_kernel(
    problem: &FriedrichsProblem,
    which: OperatorKind,
    n_list: &[usize],
    svd_tol: f64,
) -> Result<KernelEstimate> {
    if n_list.len() < 3 {
        return Err(Error::InvalidArgument("at least three grid sizes required".into()));
    }
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("grid sizes must increase".into()));
    }
    let coarse = Grid::uniform(problem.interval(), n_list[0])?;
    let refs = reference_points(problem, &coarse);
    if refs.is_empty() {
        return Err(Error::InvalidArgument(
            "no interior reference points with A nonsingular on the coarsest grid".into(),
        ));
    }
    let data = n_list
        .par_iter()
        .map(|&n| grid_kernel(problem, which, n, svd_tol, &refs))
        .collect::<Result<Vec<_>>>()?;

    let mut growth = Vec::new();
    let mut counts = Vec::new();
    for pair in data.windows(2) {
        let (prev, next) = (&pair[0].summary, &pair[1].summary);
        let m = prev.nullity.max(next.nullity);
        let ratios: Vec<f64> = (0..m)
            .map(|i| {
                let p = prev.reference_singular_values.get(i).copied().unwrap_or(0.0);
                let q = next.reference_singular_values.get(i).copied().unwrap_or(0.0);
                // per doubling of the resolution
                let doublings = ((next.n - 1) as f64 / (prev.n - 1) as f64).log2();
                if q > 0.0 {
                    (p / q).powf(1.0 / doublings)
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        counts.push(
            ratios
                .iter()
                .filter(|&&g| g < L2_GROWTH_THRESHOLD)
                .count()
                .min(next.nullity),
        );
        growth.push(ratios);
    }
    let last = counts[counts.len() - 1];
    if counts[counts.len() - 2] != last {
        return Err(Error::InconclusiveKernel { counts });
    }
    let fine = data.last().unwrap();
    let r = problem.r();
    let basis = (0..last)
        .map(|i| GridFunction {
            r,
            values: fine.candidates.column(i).into_owned(),
        })
        .collect();
    Ok(KernelEstimate {
        which,
        dimension: last,
        grids: data.iter().map(|d| d.summary.clone()).collect(),
        growth,
        counts,
        basis,
        basis_grid: Some(fine.grid.clone()),
    })
}

/// Cell-midpoint pairing `Σ_j h F_{j+½} · conj((v_j + v_{j+1})/2)`.
fn cell_inner(grid: &Grid, cells: &DVector<Complex64>, v: &GridFunction) -> Complex64 {
    let r = v.r;
    (0..grid.len() - 1)
        .map(|j| {
            let vm = (v.at(j) + v.at(j + 1)) * c(0.5);
            vm.dotc(&cells.rows(j * r, r)) * grid.h
        })
        .sum()
}

/// `|⟨T₁ᴺu, v⟩_h - ⟨u, T̃₁ᴺv⟩_h - [u, v]|` for polynomial `u`, `v`.
pub fn adjointness_defect(
    problem: &FriedrichsProblem,
    ends: &EndpointPair,
    u: &[Polynomial],
    v: &[Polynomial],
    n: usize,
) -> Result<f64> {
    let empty = BoundaryConditionSpec::default();
    let t = discretize(problem, &empty, n, OperatorKind::T)?;
    let tt = discretize(problem, &empty, n, OperatorKind::TTilde)?;
    let ug = GridFunction::sample(u, &t.grid.nodes);
    let vg = GridFunction::sample(v, &t.grid.nodes);
    let lhs = cell_inner(&t.grid, &t.apply_interior(&ug), &vg);
    let rhs = cell_inner(&t.grid, &tt.apply_interior(&vg), &ug).conj();
    let (a, b) = (problem.interval().a, problem.interval().b);
    let eval = |p: &[Polynomial], x: f64| DVector::from_iterator(p.len(), p.iter().map(|q| q.eval(x)));
    let form = boundary_form_values(ends, (&eval(u, a), &eval(u, b)), (&eval(v, a), &eval(v, b)));
    Ok((lhs - rhs - form).norm())
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub n: Vec<usize>,
    pub h: Vec<f64>,
    pub l2_errors: Vec<f64>,
    /// Least-squares slope of `log error` against `log h`; `None` when the
    /// errors are at rounding level.
    pub order: Option<f64>,
}

/// Manufactured-solution study: `f = T u_exact`, solve on each grid under
/// the `V` constraints, and fit the error decay rate.
pub fn convergence_order(
    problem: &FriedrichsProblem,
    spec: &BoundaryConditionSpec,
    u_exact: &[Polynomial],
    n_list: &[usize],
) -> Result<ConvergenceReport> {
    let iv = problem.interval();
    for con in &spec.constraints_v {
        let x = match con.endpoint {
            Endpoint::A => iv.a,
            Endpoint::B => iv.b,
        };
        let ux = DVector::from_iterator(u_exact.len(), u_exact.iter().map(|p| p.eval(x)));
        let violation = (&con.projector * &ux).norm();
        if violation > 1e-12 * (1.0 + ux.norm()) {
            return Err(Error::InvalidArgument(format!(
                "manufactured solution violates a constraint at {} (defect {violation:e})",
                con.endpoint
            )));
        }
    }
    let f = apply_operator_symbolic(problem, u_exact, OperatorKind::T)?;
    let mut hs = Vec::new();
    let mut errors = Vec::new();
    let mut scale: f64 = 0.0;
    for &n in n_list {
        let op = discretize(problem, spec, n, OperatorKind::T)?;
        let sol = solve_bvp(&op, &midpoint_rhs(&op.grid, &f))?;
        let exact = GridFunction::sample(u_exact, &op.grid.nodes);
        let diff = GridFunction {
            r: exact.r,
            values: &sol.u.values - &exact.values,
        };
        scale = scale.max(exact.l2_norm(&op.grid));
        hs.push(op.grid.h);
        errors.push(diff.l2_norm(&op.grid));
    }
    let rounding = 1e-11 * (1.0 + scale);
    let order = if errors.iter().all(|&e| e <= rounding) {
        None
    } else {
        if errors.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::NonMonotoneErrors { errors });
        }
        Some(log_log_slope(&hs, &errors))
    };
    Ok(ConvergenceReport {
        n: n_list.to_vec(),
        h: hs,
        l2_errors: errors,
        order,
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary_conditions::{construct_admissible_pair, endpoint_analysis, AnalysisConfig, BoundaryConstraint};
    use crate::bundled;

    const C0: Complex64 = Complex64::new(0.0, 0.0);

    fn diag_projector(r: usize, on: &[usize]) -> DMatrix<Complex64> {
        DMatrix::from_fn(r, r, |i, j| if i == j && on.contains(&i) { c(1.0) } else { C0 })
    }

    fn dirichlet_rep1() -> BoundaryConditionSpec {
        let con = |e| BoundaryConstraint::new(e, None, diag_projector(2, &[0])).unwrap();
        let v = vec![con(Endpoint::A), con(Endpoint::B)];
        BoundaryConditionSpec {
            constraints_v: v.clone(),
            constraints_v_tilde: v,
        }
    }

    fn constructed(name: &str) -> (FriedrichsProblem, BoundaryConditionSpec) {
        let p = bundled::problem(name).unwrap();
        let ends = endpoint_analysis(&p, &AnalysisConfig::default()).unwrap();
        let spec = construct_admissible_pair(&ends);
        (p, spec)
    }

    #[test]
    fn grid_basics() {
        let g = Grid::uniform(Interval::new(0.0, 1.0).unwrap(), 5).unwrap();
        assert_eq!(g.nodes, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.weights().iter().sum::<f64>(), 1.0);
        assert!(Grid::uniform(Interval::new(0.0, 1.0).unwrap(), 2).is_err());
    }

    #[test]
    fn discretize_shapes() {
        let (p, spec) = constructed("example1");
        let op = discretize(&p, &spec, 65, OperatorKind::T).unwrap();
        assert_eq!(op.shape(), (130, 130));
        assert_eq!(op.k(), 2);

        let (p, spec) = constructed("example2_rep2");
        let op = discretize(&p, &spec, 33, OperatorKind::T).unwrap();
        assert!(op.is_square());

        let (p, spec) = constructed("scalar_ax");
        let op = discretize(&p, &spec, 65, OperatorKind::T).unwrap();
        assert_eq!(op.shape(), (64, 65));
        assert_eq!(op.k(), 0);
    }

    #[test]
    fn discretize_rejects_wrong_projector_size() {
        let (p, _) = constructed("example1");
        let bad = BoundaryConditionSpec {
            constraints_v: vec![BoundaryConstraint::new(Endpoint::A, None, diag_projector(3, &[0])).unwrap()],
            constraints_v_tilde: vec![],
        };
        assert!(matches!(discretize(&p, &bad, 9, OperatorKind::T), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn scheme_is_exact_on_linear_flux() {
        // A = 1, B = 0 and u = x: (Au)' = 1 exactly on every cell
        let p = crate::matrix_field::parse_problem(
            r#"{"r":1,"interval":[0,2],"A":[[[[1,0]]]],"B":[[[]]]}"#,
        )
        .unwrap();
        let op = discretize(&p, &BoundaryConditionSpec::default(), 9, OperatorKind::T).unwrap();
        let u = GridFunction::sample(&[Polynomial::x()], &op.grid.nodes);
        assert!(op.apply_interior(&u).iter().all(|z| (z - c(1.0)).norm() < 1e-13));
    }

    #[test]
    fn manufactured_dirichlet_solution() {
        let p = bundled::problem("example2_rep1").unwrap();
        let spec = dirichlet_rep1();
        let u = vec![Polynomial::from_real(&[0.0, 1.0, -1.0]), Polynomial::from_real(&[1.0, -2.0])];
        let f = apply_operator_symbolic(&p, &u, OperatorKind::T).unwrap();
        assert_eq!(f[0], Polynomial::from_real(&[2.0, 1.0, -1.0]));
        assert!(f[1].is_zero());
        let op = discretize(&p, &spec, 129, OperatorKind::T).unwrap();
        let sol = solve_bvp(&op, &midpoint_rhs(&op.grid, &f)).unwrap();
        let exact = GridFunction::sample(&u, &op.grid.nodes);
        let err = GridFunction { r: 2, values: &sol.u.values - &exact.values }.l2_norm(&op.grid);
        assert!(err < 1e-4, "{err}");
        assert!(!sol.rank_deficient);
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let (p, spec) = constructed("example1");
        let op = discretize(&p, &spec, 33, OperatorKind::T).unwrap();
        let sol = solve_bvp(&op, &DVector::zeros(2 * 32)).unwrap();
        assert!(sol.u.values.norm() == 0.0);
        assert!(sol.residual <= 1e-12);
    }

    #[test]
    fn over_constrained_system_reports_residual() {
        // V constraints on both components at both ends: 4 conditions for r = 2
        let p = bundled::problem("example2_rep2").unwrap();
        let full = |e| BoundaryConstraint::new(e, None, diag_projector(2, &[0, 1])).unwrap();
        let spec = BoundaryConditionSpec {
            constraints_v: vec![full(Endpoint::A), full(Endpoint::B)],
            constraints_v_tilde: vec![],
        };
        let op = discretize(&p, &spec, 33, OperatorKind::T).unwrap();
        let f = midpoint_rhs(&op.grid, &[Polynomial::from_real(&[1.0]), Polynomial::zero()]);
        assert!(matches!(solve_bvp(&op, &f), Err(Error::ResidualTooLarge { .. })));
    }

    #[test]
    fn kernel_dimensions_measured() {
        let grids = [65, 129, 257];
        let dim = |name: &str, which| {
            let p = bundled::problem(name).unwrap();
            numerical_kernel(&p, which, &grids, DEFAULT_SVD_TOL).unwrap().dimension
        };
        assert_eq!(dim("example1", OperatorKind::T), 2);
        assert_eq!(dim("example1", OperatorKind::TTilde), 1);
        assert_eq!(dim("scalar_ax", OperatorKind::T), 0);
        assert_eq!(dim("scalar_ax", OperatorKind::TTilde), 2);
    }

    #[test]
    fn kernel_needs_three_increasing_grids() {
        let p = bundled::problem("example1").unwrap();
        assert!(numerical_kernel(&p, OperatorKind::T, &[33, 65], 1e-8).is_err());
        assert!(numerical_kernel(&p, OperatorKind::T, &[65, 33, 129], 1e-8).is_err());
    }

    #[test]
    fn kernel_basis_solves_homogeneous_problem() {
        let p = bundled::problem("example1").unwrap();
        let est = numerical_kernel(&p, OperatorKind::T, &[33, 65, 129], DEFAULT_SVD_TOL).unwrap();
        let grid = est.basis_grid.clone().unwrap();
        let op = discretize(&p, &BoundaryConditionSpec::default(), grid.len(), OperatorKind::T).unwrap();
        for b in &est.basis {
            assert!(op.apply_interior(b).norm() < 1e-8 * (1.0 + op.matrix.norm()));
            assert!((b.l2_norm(&grid) - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn adjointness_defect_examples() {
        let one = vec![Polynomial::from_real(&[1.0]), Polynomial::from_real(&[1.0])];
        for (name, n_list) in [("example1", [17usize, 33, 65]), ("example2_rep1", [17, 33, 65])] {
            let p = bundled::problem(name).unwrap();
            let ends = endpoint_analysis(&p, &AnalysisConfig::default()).unwrap();
            for n in n_list {
                let d = adjointness_defect(&p, &ends, &one, &one, n).unwrap();
                let h = 1.0 / (n - 1) as f64;
                assert!(d <= 10.0 * h * h, "{name} n={n}: {d}");
            }
        }
    }

    #[test]
    fn adjointness_defect_in_minimal_domain() {
        // u = x(1-x) (1, 1) vanishes at both ends
        let p = bundled::problem("example1").unwrap();
        let ends = endpoint_analysis(&p, &AnalysisConfig::default()).unwrap();
        let b = Polynomial::from_real(&[0.0, 1.0, -1.0]);
        let u = vec![b.clone(), b];
        let v = vec![Polynomial::from_real(&[1.0, 2.0]), Polynomial::from_real(&[0.5, 0.0, 1.0])];
        let d33 = adjointness_defect(&p, &ends, &u, &v, 33).unwrap();
        let d65 = adjointness_defect(&p, &ends, &u, &v, 65).unwrap();
        assert!(d65 < d33 / 3.0, "{d33} {d65}");
    }

    #[test]
    fn convergence_examples() {
        let p = bundled::problem("example2_rep1").unwrap();
        let u = vec![Polynomial::from_real(&[0.0, 1.0, -1.0]), Polynomial::from_real(&[1.0, -2.0])];
        let rep = convergence_order(&p, &dirichlet_rep1(), &u, &[33, 65, 129]).unwrap();
        let order = rep.order.unwrap();
        assert!((order - 2.0).abs() <= 0.2, "{order}");

        // linear u with constant coefficients: exact on every grid
        let (p, spec) = constructed("constant_definite");
        let u = vec![Polynomial::from_real(&[0.0, 1.0]), Polynomial::from_real(&[0.0, -2.0])];
        let rep = convergence_order(&p, &spec, &u, &[9, 17, 33]).unwrap();
        assert!(rep.order.is_none(), "{rep:?}");
    }

    #[test]
    fn convergence_example1_constructed_pair() {
        let (p, spec) = constructed("example1");
        let x2 = Polynomial::from_real(&[0.0, 0.0, 1.0]);
        let rep = convergence_order(&p, &spec, &[x2.clone(), x2], &[33, 65, 129]).unwrap();
        let order = rep.order.unwrap();
        assert!((order - 2.0).abs() <= 0.2, "{order}");
    }

    #[test]
    fn smallest_singular_value_stays_bounded() {
        for name in ["example1", "example2_rep1", "scalar_ax"] {
            let (p, spec) = constructed(name);
            let s: Vec<f64> = [33, 65, 129]
                .iter()
                .map(|&n| smallest_singular_value(&discretize(&p, &spec, n, OperatorKind::T).unwrap()))
                .collect();
            assert!(s.windows(2).all(|w| w[1] >= 0.9 * w[0]), "{name}: {s:?}");
        }
    }

    #[test]
    fn convergence_rejects_inadmissible_manufactured_solution() {
        let p = bundled::problem("example2_rep1").unwrap();
        let u = vec![Polynomial::from_real(&[1.0]), Polynomial::zero()];
        assert!(convergence_order(&p, &dirichlet_rep1(), &u, &[9, 17, 33]).is_err());
    }

    #[test]
    fn csv_layout() {
        let g = GridFunction::sample(&[Polynomial::constant(Complex64::new(1.0, -2.0))], &[0.0, 1.0]);
        let csv = g.to_csv(&[0.0, 1.0]);
        let lines: Vec<&str> = csv.split("\r\n").collect();
        assert_eq!(lines[0], "x,Re u1,Im u1");
        assert_eq!(lines[1].split(',').count(), 3);
        assert!(lines[1].contains("-2.0000000000000000e0"));
    }

    #[test]
    fn slope_of_exact_power_law() {
        let h = [0.1, 0.05, 0.025];
        let e: Vec<f64> = h.iter().map(|x| 3.0 * x * x).collect();
        assert!((log_log_slope(&h, &e) - 2.0).abs() < 1e-12);
    }
}
