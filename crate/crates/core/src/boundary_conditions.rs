//! Endpoint spectral data, kernel dimensions and boundary conditions.
//!
//! Everything in this module works on endpoint traces only. A function `u`
//! enters through its values `u(a)`, `u(b)`, or through the projected traces
//! `(P_λ u)(a)`, `(P_λ u)(b)` over the nonzero eigenvalue clusters of `A` at
//! the endpoints. The boundary form
//!
//! ```text
//! [u, v] = Σ_{λ at b} λ (P_λ u)(b)·conj((P_λ v)(b)) - Σ_{λ at a} λ (P_λ u)(a)·conj((P_λ v)(a))
//! ```
//!
//! equals `(A u · v̄)(b) - (A u · v̄)(a)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix_field::FriedrichsProblem;
use crate::spectral_path::{
    inertia_of, lambda_groups_by_sign, point_spectrum, sign_class, total_projection, Inertia,
    PointSpectrum, TotalProjection, DEFAULT_CONTOUR_NODES, DEFAULT_GAP_TOL,
};

/// Tolerance on the range-membership defect of a projected trace.
pub const TRACE_RANGE_TOL: f64 = 1e-8;
/// Relative tolerance for the sign and orthogonality checks on the form.
pub const FORM_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Endpoint {
    #[serde(rename = "a")]
    A,
    #[serde(rename = "b")]
    B,
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::A => write!(f, "a"),
            Endpoint::B => write!(f, "b"),
        }
    }
}

/// Tolerances for the endpoint analysis.
#[derive(Clone, Copy, Debug)]
pub struct AnalysisConfig {
    /// Absolute zero tolerance; `None` means `1e-9 (1 + max |λ|)` per endpoint.
    pub zero_tol: Option<f64>,
    pub gap_tol: f64,
    pub contour_nodes: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            zero_tol: None,
            gap_tol: DEFAULT_GAP_TOL,
            contour_nodes: DEFAULT_CONTOUR_NODES,
        }
    }
}

/// Total projection for one nonzero eigenvalue cluster.
#[derive(Clone, Debug)]
pub struct GroupProjection {
    pub lambda: f64,
    pub projection: TotalProjection,
}

#[derive(Clone, Debug)]
pub struct EndpointData {
    pub endpoint: Endpoint,
    pub spectrum: PointSpectrum,
    pub inertia: Inertia,
    /// Nonzero clusters only, in descending eigenvalue order.
    pub projections: Vec<GroupProjection>,
}

impl EndpointData {
    pub fn x(&self) -> f64 {
        self.spectrum.x
    }

    pub fn r(&self) -> usize {
        self.spectrum.r()
    }

    /// Projector onto the span of all nonzero-eigenvalue eigenvectors.
    pub fn nonzero_projector(&self) -> DMatrix<Complex64> {
        let r = self.r();
        self.projections
            .iter()
            .fold(DMatrix::zeros(r, r), |acc, g| acc + &g.projection.matrix)
    }
}

/// Spectral data at both ends of the interval.
#[derive(Clone, Debug)]
pub struct EndpointPair {
    pub a: EndpointData,
    pub b: EndpointData,
}

impl EndpointPair {
    pub fn get(&self, endpoint: Endpoint) -> &EndpointData {
        match endpoint {
            Endpoint::A => &self.a,
            Endpoint::B => &self.b,
        }
    }

    pub fn r(&self) -> usize {
        self.a.r()
    }

    /// Largest |λ| over both endpoints.
    pub fn scale(&self) -> f64 {
        self.a
            .spectrum
            .spectral_radius()
            .max(self.b.spectrum.spectral_radius())
    }
}

fn analyse_endpoint(
    problem: &FriedrichsProblem,
    endpoint: Endpoint,
    cfg: &AnalysisConfig,
) -> Result<EndpointData> {
    let iv = problem.interval();
    let x = match endpoint {
        Endpoint::A => iv.a,
        Endpoint::B => iv.b,
    };
    let spectrum = point_spectrum(&problem.a.evaluate(x)?, x)?;
    let zero_tol = cfg.zero_tol.unwrap_or_else(|| spectrum.default_zero_tol());
    let inertia = inertia_of(&spectrum, zero_tol);
    let projections = lambda_groups_by_sign(&spectrum, cfg.gap_tol, zero_tol)
        .into_iter()
        .filter(|g| sign_class(g.center, zero_tol) != 0)
        .map(|g| {
            Ok(GroupProjection {
                lambda: g.center,
                projection: total_projection(&problem.a, &spectrum, &g, cfg.gap_tol, cfg.contour_nodes)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EndpointData {
        endpoint,
        spectrum,
        inertia,
        projections,
    })
}

/// Spectra, inertias and nonzero-cluster projections of `A(a)` and `A(b)`.
pub fn endpoint_analysis(problem: &FriedrichsProblem, cfg: &AnalysisConfig) -> Result<EndpointPair> {
    Ok(EndpointPair {
        a: analyse_endpoint(problem, Endpoint::A, cfg)?,
        b: analyse_endpoint(problem, Endpoint::B, cfg)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelDims {
    pub dim_ker_t1: usize,
    pub dim_ker_t1_tilde: usize,
}

impl KernelDims {
    /// `dim ker T₁ = n_a⁺ + n_b⁻`, `dim ker T̃₁ = n_a⁻ + n_b⁺`.
    pub fn from_inertias(at_a: &Inertia, at_b: &Inertia) -> Self {
        Self {
            dim_ker_t1: at_a.n_plus + at_b.n_minus,
            dim_ker_t1_tilde: at_a.n_minus + at_b.n_plus,
        }
    }

    pub fn sum(&self) -> usize {
        self.dim_ker_t1 + self.dim_ker_t1_tilde
    }
}

pub fn kernel_dimensions(ends: &EndpointPair) -> KernelDims {
    KernelDims::from_inertias(&ends.a.inertia, &ends.b.inertia)
}

/// `rank A(a) + rank A(b)`, the codimension of the minimal domain.
pub fn graph_codimension(ends: &EndpointPair) -> usize {
    ends.a.inertia.rank() + ends.b.inertia.rank()
}

/// One constraint `(P u)(endpoint) = 0`.
#[derive(Clone, Debug)]
pub struct BoundaryConstraint {
    pub endpoint: Endpoint,
    /// Eigenvalue of the cluster the projector belongs to, when it is one.
    pub lambda: Option<f64>,
    pub projector: DMatrix<Complex64>,
    pub rank: usize,
}

impl BoundaryConstraint {
    pub fn new(endpoint: Endpoint, lambda: Option<f64>, projector: DMatrix<Complex64>) -> Result<Self> {
        if !projector.is_square() {
            return Err(Error::DimensionMismatch("constraint projector is not square".into()));
        }
        let defect = (&projector * &projector - &projector)
            .norm()
            .max((&projector - projector.adjoint()).norm());
        if defect > 1e-8 {
            return Err(Error::InvalidArgument(format!(
                "constraint matrix is not an orthogonal projector (defect {defect:e})"
            )));
        }
        let rank = projector.trace().re.round().max(0.0) as usize;
        Ok(Self {
            endpoint,
            lambda,
            projector,
            rank,
        })
    }

    /// Rows `Q*` with `Q` an orthonormal basis of the projector's range, so
    /// that `Q* w = 0` iff `P w = 0`.
    pub fn constraint_rows(&self) -> DMatrix<Complex64> {
        let spec = point_spectrum(&self.projector, f64::NAN).expect("projector is Hermitian");
        spec.eigenvectors.columns(0, self.rank).adjoint()
    }

    pub fn describe(&self) -> String {
        let lambda = self
            .lambda
            .map(|l| format!("λ = {}", fmt_short(l)))
            .unwrap_or_else(|| "user".into());
        if self.rank == self.projector.nrows() {
            format!("u({}) = 0 [{lambda}, rank {}]", self.endpoint, self.rank)
        } else {
            format!("(P u)({}) = 0 [{lambda}, rank {}]", self.endpoint, self.rank)
        }
    }
}

fn fmt_short(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

/// A pair of boundary condition sets: `V` for `T₁`, `Ṽ` for `T̃₁`.
#[derive(Clone, Debug, Default)]
pub struct BoundaryConditionSpec {
    pub constraints_v: Vec<BoundaryConstraint>,
    pub constraints_v_tilde: Vec<BoundaryConstraint>,
}

impl BoundaryConditionSpec {
    pub fn rank_v(&self) -> usize {
        self.constraints_v.iter().map(|c| c.rank).sum()
    }

    pub fn rank_v_tilde(&self) -> usize {
        self.constraints_v_tilde.iter().map(|c| c.rank).sum()
    }

    pub fn swapped(&self) -> Self {
        Self {
            constraints_v: self.constraints_v_tilde.clone(),
            constraints_v_tilde: self.constraints_v.clone(),
        }
    }

    pub fn summary(&self) -> BcSummary {
        BcSummary {
            v: self.constraints_v.iter().map(BoundaryConstraint::describe).collect(),
            v_tilde: self
                .constraints_v_tilde
                .iter()
                .map(BoundaryConstraint::describe)
                .collect(),
        }
    }

    pub fn to_file(&self) -> BcFile {
        let conv = |c: &BoundaryConstraint| ConstraintFile {
            endpoint: c.endpoint,
            lambda: c.lambda,
            projector: (0..c.projector.nrows())
                .map(|i| {
                    (0..c.projector.ncols())
                        .map(|j| [c.projector[(i, j)].re, c.projector[(i, j)].im])
                        .collect()
                })
                .collect(),
        };
        BcFile {
            v: self.constraints_v.iter().map(conv).collect(),
            v_tilde: self.constraints_v_tilde.iter().map(conv).collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BcSummary {
    #[serde(rename = "V")]
    pub v: Vec<String>,
    #[serde(rename = "V_tilde")]
    pub v_tilde: Vec<String>,
}

/// On-disk boundary condition pair.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcFile {
    #[serde(rename = "V", default)]
    pub v: Vec<ConstraintFile>,
    #[serde(rename = "V_tilde", default)]
    pub v_tilde: Vec<ConstraintFile>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintFile {
    pub endpoint: Endpoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// r×r matrix of `[re, im]` pairs.
    pub projector: Vec<Vec<[f64; 2]>>,
}

impl BcFile {
    pub fn into_spec(self, r: usize) -> Result<BoundaryConditionSpec> {
        let conv = |c: ConstraintFile| -> Result<BoundaryConstraint> {
            if c.projector.len() != r || c.projector.iter().any(|row| row.len() != r) {
                return Err(Error::DimensionMismatch(format!(
                    "constraint projector must be {r}×{r}"
                )));
            }
            let m = DMatrix::from_fn(r, r, |i, j| {
                let [re, im] = c.projector[i][j];
                Complex64::new(re, im)
            });
            BoundaryConstraint::new(c.endpoint, c.lambda, m)
        };
        Ok(BoundaryConditionSpec {
            constraints_v: self.v.into_iter().map(conv).collect::<Result<_>>()?,
            constraints_v_tilde: self.v_tilde.into_iter().map(conv).collect::<Result<_>>()?,
        })
    }
}

pub fn parse_bc(document: &str, r: usize) -> Result<BoundaryConditionSpec> {
    let file: BcFile = serde_json::from_str(document).map_err(|e| Error::Schema(e.to_string()))?;
    file.into_spec(r)
}

/// The pair built from the signs of the endpoint eigenvalues:
/// `V` kills `λ > 0` at `a` and `λ < 0` at `b`; `Ṽ` the opposite signs.
pub fn construct_admissible_pair(ends: &EndpointPair) -> BoundaryConditionSpec {
    let pick = |data: &EndpointData, positive: bool| -> Vec<BoundaryConstraint> {
        data.projections
            .iter()
            .filter(|g| (g.lambda > 0.0) == positive)
            .map(|g| BoundaryConstraint {
                endpoint: data.endpoint,
                lambda: Some(g.lambda),
                projector: g.projection.matrix.clone(),
                rank: g.projection.rank,
            })
            .collect()
    };
    let mut v = pick(&ends.a, true);
    v.extend(pick(&ends.b, false));
    let mut v_tilde = pick(&ends.a, false);
    v_tilde.extend(pick(&ends.b, true));
    BoundaryConditionSpec {
        constraints_v: v,
        constraints_v_tilde: v_tilde,
    }
}

/// Projected traces of one function: one vector per nonzero cluster, in the
/// order of [`EndpointData::projections`].
#[derive(Clone, Debug)]
pub struct ProjectedTraces {
    pub at_a: Vec<DVector<Complex64>>,
    pub at_b: Vec<DVector<Complex64>>,
}

impl ProjectedTraces {
    pub fn zeros(ends: &EndpointPair) -> Self {
        let r = ends.r();
        Self {
            at_a: vec![DVector::zeros(r); ends.a.projections.len()],
            at_b: vec![DVector::zeros(r); ends.b.projections.len()],
        }
    }

    pub fn max_norm(&self) -> f64 {
        self.at_a
            .iter()
            .chain(&self.at_b)
            .map(|w| w.norm())
            .fold(0.0, f64::max)
    }
}

/// `(P_λ u)(a)`, `(P_λ u)(b)` from the endpoint values of `u`.
pub fn project_traces(ends: &EndpointPair, ua: &DVector<Complex64>, ub: &DVector<Complex64>) -> ProjectedTraces {
    ProjectedTraces {
        at_a: ends.a.projections.iter().map(|g| &g.projection.matrix * ua).collect(),
        at_b: ends.b.projections.iter().map(|g| &g.projection.matrix * ub).collect(),
    }
}

fn check_in_range(ends: &EndpointPair, t: &ProjectedTraces) -> Result<()> {
    for (data, traces) in [(&ends.a, &t.at_a), (&ends.b, &t.at_b)] {
        if traces.len() != data.projections.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} traces supplied at {}, expected {}",
                traces.len(),
                data.endpoint,
                data.projections.len()
            )));
        }
        for (g, w) in data.projections.iter().zip(traces) {
            let defect = (&g.projection.matrix * w - w).norm();
            if defect > TRACE_RANGE_TOL * (1.0 + w.norm()) {
                return Err(Error::TraceNotInRange { defect });
            }
        }
    }
    Ok(())
}

/// The boundary form `[u, v]` from projected traces.
pub fn boundary_form(ends: &EndpointPair, u: &ProjectedTraces, v: &ProjectedTraces) -> Result<Complex64> {
    check_in_range(ends, u)?;
    check_in_range(ends, v)?;
    let side = |data: &EndpointData, us: &[DVector<Complex64>], vs: &[DVector<Complex64>]| {
        data.projections
            .iter()
            .zip(us.iter().zip(vs))
            .map(|(g, (x, y))| y.dotc(x) * g.lambda)
            .sum::<Complex64>()
    };
    Ok(side(&ends.b, &u.at_b, &v.at_b) - side(&ends.a, &u.at_a, &v.at_a))
}

/// `[u, v]` from full endpoint values.
pub fn boundary_form_values(
    ends: &EndpointPair,
    (ua, ub): (&DVector<Complex64>, &DVector<Complex64>),
    (va, vb): (&DVector<Complex64>, &DVector<Complex64>),
) -> Complex64 {
    boundary_form(ends, &project_traces(ends, ua, ub), &project_traces(ends, va, vb))
        .expect("projected traces lie in range")
}

/// Whether every nonzero-cluster trace vanishes, i.e. `u` lies in the
/// minimal domain as far as its boundary behaviour is concerned.
pub fn in_minimal_domain(traces: &ProjectedTraces, tol: f64) -> bool {
    traces.max_norm() <= tol
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VConditionReport {
    /// `[u,u] >= 0` on sampled `V` traces and `<= 0` on sampled `Ṽ` traces.
    pub v1_ok: bool,
    /// `[u,v] = 0` for sampled `u ∈ V`, `v ∈ Ṽ`.
    pub v2_necessary_ok: bool,
    /// Effective constraint ranks equal the predicted kernel dimensions.
    pub counts_ok: bool,
    pub min_form_v: f64,
    pub max_form_v_tilde: f64,
    pub max_cross: f64,
    pub codim_v: usize,
    pub codim_v_tilde: usize,
}

impl VConditionReport {
    pub fn all_ok(&self) -> bool {
        self.v1_ok && self.v2_necessary_ok && self.counts_ok
    }

    /// The orthogonality and counting part, without the sign condition.
    pub fn surrogate_ok(&self) -> bool {
        self.v2_necessary_ok && self.counts_ok
    }
}

/// Orthonormal basis of `{w : P w = 0 for every constraint at endpoint}`.
fn admissible_trace_basis(constraints: &[BoundaryConstraint], endpoint: Endpoint, r: usize) -> DMatrix<Complex64> {
    let sum = constraints
        .iter()
        .filter(|c| c.endpoint == endpoint)
        .fold(DMatrix::<Complex64>::zeros(r, r), |acc, c| acc + &c.projector);
    let spec = point_spectrum(&sum, f64::NAN).expect("sum of projectors is Hermitian");
    let keep: Vec<usize> = (0..r).filter(|&i| spec.eigenvalues[i] <= 1e-10).collect();
    DMatrix::from_fn(r, keep.len(), |i, k| spec.eigenvectors[(i, keep[k])])
}

/// Codimension in the trace space of the constraints at one endpoint: the
/// rank of the constraints restricted to the range of `A(endpoint)`.
fn effective_codim(constraints: &[BoundaryConstraint], data: &EndpointData) -> usize {
    let r = data.r();
    let range = data.nonzero_projector();
    let rows: Vec<DMatrix<Complex64>> = constraints
        .iter()
        .filter(|c| c.endpoint == data.endpoint)
        .map(|c| &c.projector * &range)
        .collect();
    if rows.is_empty() {
        return 0;
    }
    let mut stacked = DMatrix::<Complex64>::zeros(r * rows.len(), r);
    for (k, m) in rows.iter().enumerate() {
        stacked.view_mut((k * r, 0), (r, r)).copy_from(m);
    }
    let sv = stacked.singular_values();
    let top = sv.iter().copied().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > 1e-8 * top.max(1.0)).count()
}

/// Codimension of `V` (or `Ṽ`) in the graph space modulo the minimal domain.
pub fn constraint_codimension(ends: &EndpointPair, constraints: &[BoundaryConstraint]) -> usize {
    effective_codim(constraints, &ends.a) + effective_codim(constraints, &ends.b)
}

fn random_complex_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<Complex64> {
    DVector::from_fn(n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

fn random_admissible(rng: &mut ChaCha8Rng, basis: &DMatrix<Complex64>) -> DVector<Complex64> {
    basis * random_complex_vector(rng, basis.ncols())
}

/// Sampled check of the sign and orthogonality conditions on a pair, plus
/// exact constraint-count bookkeeping against the kernel dimensions.
pub fn check_v_conditions(
    ends: &EndpointPair,
    spec: &BoundaryConditionSpec,
    n_random: usize,
    seed: u64,
) -> Result<VConditionReport> {
    if n_random < 10 {
        return Err(Error::InvalidArgument("n_random must be at least 10".into()));
    }
    let r = ends.r();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = |cs: &[BoundaryConstraint]| {
        (
            admissible_trace_basis(cs, Endpoint::A, r),
            admissible_trace_basis(cs, Endpoint::B, r),
        )
    };
    let (va, vb) = basis(&spec.constraints_v);
    let (ta, tb) = basis(&spec.constraints_v_tilde);
    let mut sample = |(ba, bb): (&DMatrix<Complex64>, &DMatrix<Complex64>)| {
        (0..n_random)
            .map(|_| {
                let (ua, ub) = (random_admissible(&mut rng, ba), random_admissible(&mut rng, bb));
                let t = project_traces(ends, &ua, &ub);
                let norm = t.max_norm();
                (t, norm)
            })
            .collect::<Vec<_>>()
    };
    let v_samples = sample((&va, &vb));
    let t_samples = sample((&ta, &tb));
    let scale = 1.0 + ends.scale();

    let normalised_form = |x: &(ProjectedTraces, f64), y: &(ProjectedTraces, f64)| -> Result<Complex64> {
        let f = boundary_form(ends, &x.0, &y.0)?;
        let n = x.1 * y.1;
        Ok(if n > 0.0 { f / n } else { Complex64::new(0.0, 0.0) })
    };

    let mut min_form_v = f64::INFINITY;
    for s in &v_samples {
        min_form_v = min_form_v.min(normalised_form(s, s)?.re);
    }
    let mut max_form_v_tilde = f64::NEG_INFINITY;
    for s in &t_samples {
        max_form_v_tilde = max_form_v_tilde.max(normalised_form(s, s)?.re);
    }
    let mut max_cross: f64 = 0.0;
    for u in &v_samples {
        for v in &t_samples {
            max_cross = max_cross.max(normalised_form(u, v)?.norm());
        }
    }

    let dims = kernel_dimensions(ends);
    let codim_v = constraint_codimension(ends, &spec.constraints_v);
    let codim_v_tilde = constraint_codimension(ends, &spec.constraints_v_tilde);
    Ok(VConditionReport {
        v1_ok: min_form_v >= -FORM_TOL * scale && max_form_v_tilde <= FORM_TOL * scale,
        v2_necessary_ok: max_cross <= FORM_TOL * scale,
        counts_ok: codim_v == dims.dim_ker_t1 && codim_v_tilde == dims.dim_ker_t1_tilde,
        min_form_v,
        max_form_v_tilde,
        max_cross,
        codim_v,
        codim_v_tilde,
    })
}

/// Codimension of `M_1 ∩ … ∩ M_n` from `codim M_k` and the overlap terms
/// `codim((M_1 ∩ … ∩ M_{j-1}) + M_j)` for `j = 2..n`.
///
/// Repeated use of `codim(M+N) + codim(M∩N) = codim M + codim N` gives
/// `Σ codim M_k - Σ_j codim((∩_{k<j} M_k) + M_j)`.
pub fn codimension_sum(codims: &[usize], overlap_codims: &[usize]) -> Result<usize> {
    if codims.is_empty() {
        return Err(Error::InvalidArgument("at least one codimension required".into()));
    }
    if overlap_codims.len() + 1 != codims.len() {
        return Err(Error::InvalidArgument(format!(
            "{} codimensions need {} overlap terms, got {}",
            codims.len(),
            codims.len() - 1,
            overlap_codims.len()
        )));
    }
    let mut acc = codims[0] as i64;
    for (j, (&c, &o)) in codims[1..].iter().zip(overlap_codims).enumerate() {
        // the sum of two subspaces has no larger codimension than either
        if o as i64 > acc.min(c as i64) {
            return Err(Error::InconsistentCodimension(format!(
                "overlap term {o} at position {} exceeds min({acc}, {c})",
                j + 2
            )));
        }
        acc += c as i64 - o as i64;
    }
    usize::try_from(acc).map_err(|_| Error::InconsistentCodimension(format!("negative result {acc}")))
}
