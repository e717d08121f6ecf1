//! Serialized analysis reports and the per-problem verification suite.

use std::collections::BTreeMap;
use std::io;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::ser::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::boundary_conditions::{
    boundary_form_values, check_v_conditions, construct_admissible_pair, endpoint_analysis, graph_codimension,
    kernel_dimensions, AnalysisConfig, BcSummary, BoundaryConditionSpec, EndpointPair, KernelDims,
};
use crate::bvp_solver::{
    adjointness_defect, convergence_order, discretize, log_log_slope, numerical_kernel, smallest_singular_value,
    solve_bvp, DEFAULT_SVD_TOL,
};
use crate::error::Result;
use crate::matrix_field::{certified_mu0, check_symmetry, estimate_mu0, FriedrichsProblem, OperatorKind, DEFAULT_SAMPLES};
use crate::polynomial::Polynomial;
use crate::spectral_path::{
    lambda_groups, total_projection_contour, total_projection_direct, track_eigenvalues, Inertia,
    DEFAULT_GAP_TOL,
};

/// Pretty JSON with every float written as `{:.16e}` (17 significant digits),
/// so equal inputs give byte-identical output.
struct ExactFloats(PrettyFormatter<'static>);

impl Formatter for ExactFloats {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }
    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        write!(w, "{:.16e}", value as f64)
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Deterministic JSON text with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFloats(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("report types serialize");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct AxiomChecks {
    pub f1_ok: bool,
    pub hermitian_defect: f64,
    /// Half the smallest sampled eigenvalue of `B + B* + A'`.
    pub mu0: f64,
    /// Lower bound valid between samples.
    pub mu0_certified: f64,
    pub f2_ok: bool,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct EndpointInertias {
    pub a: Inertia,
    pub b: Inertia,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct FormSample {
    pub traces: String,
    /// `[re, im]`
    pub value: [f64; 2],
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct AnalysisReport {
    pub problem_id: String,
    pub r: usize,
    pub interval: [f64; 2],
    pub axiom_checks: AxiomChecks,
    pub endpoint_eigenvalues: [Vec<f64>; 2],
    pub endpoint_inertias: EndpointInertias,
    pub predicted_dims: KernelDims,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measured_dims: Option<[usize; 2]>,
    pub graph_codim: usize,
    pub bc_spec_summary: BcSummary,
    pub boundary_form_samples: Vec<FormSample>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<BTreeMap<String, f64>>,
}

impl AnalysisReport {
    /// Whether `predicted_dims` follows from the stored inertias.
    pub fn is_self_consistent(&self) -> bool {
        KernelDims::from_inertias(&self.endpoint_inertias.a, &self.endpoint_inertias.b) == self.predicted_dims
            && self.graph_codim == self.endpoint_inertias.a.rank() + self.endpoint_inertias.b.rank()
    }
}

#[derive(Clone, Debug)]
pub struct AnalyzeOptions {
    /// Grid sizes for a numerical kernel measurement, if wanted.
    pub kernel_grids: Option<Vec<usize>>,
    pub svd_tol: f64,
    pub timings: bool,
    pub config: AnalysisConfig,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            kernel_grids: None,
            svd_tol: DEFAULT_SVD_TOL,
            timings: false,
            config: AnalysisConfig::default(),
        }
    }
}

struct Stopwatch {
    enabled: bool,
    last: Instant,
    stages: BTreeMap<String, f64>,
}

impl Stopwatch {
    fn new(enabled: bool) -> Self {
        Self {
            enabled,
            last: Instant::now(),
            stages: BTreeMap::new(),
        }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.stages
            .insert(stage.to_string(), (now - self.last).as_secs_f64() * 1e3);
        self.last = now;
    }

    fn finish(self) -> Option<BTreeMap<String, f64>> {
        self.enabled.then_some(self.stages)
    }
}

fn unit_trace_samples(problem: &FriedrichsProblem, ends: &EndpointPair) -> Vec<FormSample> {
    let r = problem.r();
    let mut traces: Vec<(String, nalgebra::DVector<Complex64>)> = (0..r)
        .map(|i| {
            let e = nalgebra::DVector::from_fn(r, |k, _| Complex64::new(if k == i { 1.0 } else { 0.0 }, 0.0));
            (format!("u = v = e{} (constant)", i + 1), e)
        })
        .collect();
    traces.push((
        "u = v = (1, …, 1) (constant)".to_string(),
        nalgebra::DVector::from_element(r, Complex64::new(1.0, 0.0)),
    ));
    traces
        .into_iter()
        .map(|(label, e)| {
            let z = boundary_form_values(ends, (&e, &e), (&e, &e));
            FormSample {
                traces: label,
                value: [z.re, z.im],
            }
        })
        .collect()
}

/// Axiom checks, endpoint inertias, predicted kernel dimensions and the
/// constructed boundary-condition pair; optionally a measured kernel.
pub fn analyze(problem: &FriedrichsProblem, opts: &AnalyzeOptions) -> Result<AnalysisReport> {
    let mut clock = Stopwatch::new(opts.timings);
    let sym = check_symmetry(problem, DEFAULT_SAMPLES);
    let mu0 = estimate_mu0(problem, DEFAULT_SAMPLES);
    let mu0_certified = certified_mu0(problem, DEFAULT_SAMPLES);
    clock.lap("axioms");
    let ends = endpoint_analysis(problem, &opts.config)?;
    let predicted = kernel_dimensions(&ends);
    let spec = construct_admissible_pair(&ends);
    clock.lap("endpoints");
    let measured = match &opts.kernel_grids {
        Some(grids) => {
            let t = numerical_kernel(problem, OperatorKind::T, grids, opts.svd_tol)?;
            let tt = numerical_kernel(problem, OperatorKind::TTilde, grids, opts.svd_tol)?;
            clock.lap("kernel");
            Some([t.dimension, tt.dimension])
        }
        None => None,
    };
    let iv = problem.interval();
    Ok(AnalysisReport {
        problem_id: problem.id.clone(),
        r: problem.r(),
        interval: [iv.a, iv.b],
        axiom_checks: AxiomChecks {
            f1_ok: sym.ok,
            hermitian_defect: sym.max_defect,
            mu0,
            mu0_certified,
            f2_ok: mu0_certified > 0.0,
        },
        endpoint_eigenvalues: [ends.a.spectrum.eigenvalues.clone(), ends.b.spectrum.eigenvalues.clone()],
        endpoint_inertias: EndpointInertias {
            a: ends.a.inertia,
            b: ends.b.inertia,
        },
        predicted_dims: predicted,
        measured_dims: measured,
        graph_codim: graph_codimension(&ends),
        bc_spec_summary: spec.summary(),
        boundary_form_samples: unit_trace_samples(problem, &ends),
        timings_ms: clock.finish(),
    })
}

/// One line of the verification table.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub ok: bool,
    pub skipped: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, ok: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            ok,
            skipped: false,
            detail,
        }
    }

    fn skip(name: &str, detail: String) -> Self {
        Self {
            name: name.to_string(),
            ok: true,
            skipped: true,
            detail,
        }
    }
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub kernel_grids: Vec<usize>,
    pub svd_tol: f64,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            kernel_grids: vec![65, 129, 257],
            svd_tol: DEFAULT_SVD_TOL,
            seed: 7,
        }
    }
}

/// Random polynomial vector with coefficients in `[-1, 1]`.
pub fn random_polynomial_vector(rng: &mut impl Rng, r: usize, degree: usize) -> Vec<Polynomial> {
    (0..r)
        .map(|_| {
            let coeffs: Vec<Complex64> = (0..=degree)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            Polynomial::new(coeffs)
        })
        .collect()
}

/// Adjointness defects on a sequence of grids and the verdict: either all
/// defects are at rounding level, or they decay with log-log slope ≥ 1.8.
pub fn adjointness_study(
    problem: &FriedrichsProblem,
    ends: &EndpointPair,
    u: &[Polynomial],
    v: &[Polynomial],
    n_list: &[usize],
) -> Result<(Vec<f64>, Option<f64>, bool)> {
    let defects = n_list
        .iter()
        .map(|&n| adjointness_defect(problem, ends, u, v, n))
        .collect::<Result<Vec<_>>>()?;
    let size: f64 = u.iter().chain(v).map(|p| p.max_coeff_norm()).fold(0.0, f64::max);
    let rounding = 1e-11 * (1.0 + size * size) * (1.0 + ends.scale());
    if defects.iter().all(|&d| d <= rounding) {
        return Ok((defects, None, true));
    }
    let hs: Vec<f64> = n_list
        .iter()
        .map(|&n| problem.interval().length() / (n - 1) as f64)
        .collect();
    let slope = log_log_slope(&hs, &defects);
    Ok((defects, Some(slope), slope >= 1.8))
}

fn a_nonsingular_everywhere(problem: &FriedrichsProblem) -> bool {
    problem.interval().chebyshev_nodes(DEFAULT_SAMPLES).into_iter().all(|x| {
        let m = problem.a.evaluate_unchecked(x);
        let eig = ((&m + m.adjoint()) * Complex64::new(0.5, 0.0)).symmetric_eigenvalues();
        let smallest = eig.iter().map(|l| l.abs()).fold(f64::INFINITY, f64::min);
        let largest = eig.iter().map(|l| l.abs()).fold(0.0, f64::max);
        smallest > 1e-8 * (1.0 + largest)
    })
}

fn endpoint_projection_checks(ends: &EndpointPair, problem: &FriedrichsProblem) -> (Check, Check) {
    let mut resolution: f64 = 0.0;
    let mut contour_gap: f64 = 0.0;
    let mut contour_count = 0;
    for data in [&ends.a, &ends.b] {
        let spec = &data.spectrum;
        let groups = lambda_groups(spec, DEFAULT_GAP_TOL);
        let r = spec.r();
        let mut sum = DMatrix::<Complex64>::zeros(r, r);
        for g in &groups {
            let p = total_projection_direct(spec, g);
            resolution = resolution.max(p.projector_defect());
            sum += &p.matrix;
            if groups.len() > 1 && g.gap >= 10.0 * DEFAULT_GAP_TOL {
                if let Ok(pc) = total_projection_contour(&problem.a, data.x(), g, 64) {
                    contour_gap = contour_gap.max((&pc.matrix - &p.matrix).norm());
                    contour_count += 1;
                }
            }
        }
        resolution = resolution.max((sum - DMatrix::identity(r, r)).norm());
    }
    (
        Check::new(
            "projection_resolution",
            resolution <= 1e-10,
            format!("max_defect={resolution:.3e}"),
        ),
        Check::new(
            "contour_matches_direct",
            contour_gap <= 1e-8,
            format!("groups={contour_count} max_difference={contour_gap:.3e}"),
        ),
    )
}

/// Runs the invariant suites on one problem.
pub fn verify_problem(problem: &FriedrichsProblem, opts: &VerifyOptions) -> Vec<Check> {
    let mut out = Vec::new();
    let sym = check_symmetry(problem, DEFAULT_SAMPLES);
    out.push(Check::new(
        "f1_hermitian",
        sym.ok,
        format!("max_defect={:.3e}", sym.max_defect),
    ));
    let mu0 = certified_mu0(problem, DEFAULT_SAMPLES);
    out.push(Check::new("f2_positivity", mu0 > 0.0, format!("mu0_certified={mu0:.6e}")));
    if !sym.ok {
        return out;
    }
    let ends = match endpoint_analysis(problem, &AnalysisConfig::default()) {
        Ok(e) => e,
        Err(e) => {
            out.push(Check::new("endpoint_analysis", false, e.to_string()));
            return out;
        }
    };
    let (ia, ib) = (ends.a.inertia, ends.b.inertia);
    out.push(Check::new(
        "inertia_counts",
        ia.r() == problem.r() && ib.r() == problem.r(),
        format!("a={:?} b={:?}", ia.triple(), ib.triple()),
    ));
    let (res, contour) = endpoint_projection_checks(&ends, problem);
    out.push(res);
    out.push(contour);

    let grid = problem.interval().chebyshev_nodes(65);
    out.push(match track_eigenvalues(&problem.a, &grid) {
        Ok(t) => Check::new("hoffman_wielandt", t.hw_defect <= 1e-9, format!("defect={:.3e}", t.hw_defect)),
        Err(e) => Check::new("hoffman_wielandt", false, e.to_string()),
    });

    let predicted = kernel_dimensions(&ends);
    let measure = |w| numerical_kernel(problem, w, &opts.kernel_grids, opts.svd_tol).map(|k| k.dimension);
    match (measure(OperatorKind::T), measure(OperatorKind::TTilde)) {
        (Ok(t), Ok(tt)) => {
            out.push(Check::new(
                "kernel_dims_match",
                t == predicted.dim_ker_t1 && tt == predicted.dim_ker_t1_tilde,
                format!(
                    "predicted={},{} measured={t},{tt}",
                    predicted.dim_ker_t1, predicted.dim_ker_t1_tilde
                ),
            ));
            let codim = graph_codimension(&ends);
            out.push(Check::new(
                "sum_identity",
                t + tt == codim,
                format!("measured_sum={} rank_sum={codim}", t + tt),
            ));
        }
        (t, tt) => {
            let msg = [t.err(), tt.err()]
                .into_iter()
                .flatten()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join("; ");
            out.push(Check::new("kernel_dims_match", false, msg));
        }
    }

    let spec = construct_admissible_pair(&ends);
    out.push(match check_v_conditions(&ends, &spec, 32, opts.seed) {
        Ok(rep) => Check::new(
            "constructed_pair",
            rep.all_ok(),
            format!(
                "v1={} v2={} counts={} codim={},{}",
                rep.v1_ok, rep.v2_necessary_ok, rep.counts_ok, rep.codim_v, rep.codim_v_tilde
            ),
        ),
        Err(e) => Check::new("constructed_pair", false, e.to_string()),
    });

    out.push(bijectivity_check(problem, &spec));

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut worst_slope = f64::INFINITY;
    let mut adj_ok = true;
    let mut adj_err = None;
    for _ in 0..5 {
        let u = random_polynomial_vector(&mut rng, problem.r(), 3);
        let v = random_polynomial_vector(&mut rng, problem.r(), 3);
        match adjointness_study(problem, &ends, &u, &v, &[17, 33, 65, 129]) {
            Ok((_, slope, ok)) => {
                adj_ok &= ok;
                if let Some(s) = slope {
                    worst_slope = worst_slope.min(s);
                }
            }
            Err(e) => adj_err = Some(e.to_string()),
        }
    }
    out.push(match adj_err {
        Some(e) => Check::new("adjointness_defect", false, e),
        None if worst_slope.is_infinite() => Check::new("adjointness_defect", adj_ok, "rounding-level".into()),
        None => Check::new("adjointness_defect", adj_ok, format!("min_slope={worst_slope:.3}")),
    });

    out.push(manufactured_check(problem, &spec, &mut rng));
    out
}

fn bijectivity_check(problem: &FriedrichsProblem, spec: &BoundaryConditionSpec) -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    for which in [OperatorKind::T, OperatorKind::TTilde] {
        let mut prev: Option<f64> = None;
        for n in [33, 65, 129] {
            let s = match discretize(problem, spec, n, which) {
                Ok(op) => {
                    let zero = nalgebra::DVector::zeros(op.interior_rows().len());
                    ok &= solve_bvp(&op, &zero).is_ok();
                    smallest_singular_value(&op)
                }
                Err(e) => return Check::new("discrete_bijectivity", false, e.to_string()),
            };
            if let Some(p) = prev {
                ok &= s >= 0.9 * p && s > 0.0;
            }
            prev = Some(s);
        }
        parts.push(format!("{which}:sigma_min={:.4e}", prev.unwrap()));
    }
    Check::new("discrete_bijectivity", ok, parts.join(" "))
}

fn manufactured_check(problem: &FriedrichsProblem, spec: &BoundaryConditionSpec, rng: &mut ChaCha8Rng) -> Check {
    let name = "manufactured_order";
    if !a_nonsingular_everywhere(problem) {
        return Check::skip(name, "A singular on the closed interval".into());
    }
    // vanishing at both endpoints satisfies any constraint set
    let iv = problem.interval();
    let bubble = Polynomial::from_real(&[-iv.a * iv.b, iv.a + iv.b, -1.0]);
    let u: Vec<Polynomial> = random_polynomial_vector(rng, problem.r(), 2)
        .iter()
        .map(|p| &bubble * p)
        .collect();
    match convergence_order(problem, spec, &u, &[33, 65, 129]) {
        Ok(rep) => match rep.order {
            Some(order) => Check::new(name, (order - 2.0).abs() <= 0.2, format!("order={order:.3}")),
            None => Check::new(name, true, "rounding-level".into()),
        },
        Err(e) => Check::new(name, false, e.to_string()),
    }
}

/// Summary written next to a solution dump.
#[derive(Clone, Debug, serde::Serialize)]
pub struct SolveSummary {
    pub problem_id: String,
    pub operator: OperatorKind,
    pub grid: usize,
    pub shape: [usize; 2],
    pub method: crate::bvp_solver::SolveMethod,
    pub residual: f64,
    pub residual_threshold: f64,
    pub rank_deficient: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair_check: Option<crate::boundary_conditions::VConditionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l2_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observed_order: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<BTreeMap<String, f64>>,
}
