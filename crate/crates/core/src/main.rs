use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use friedrichs::boundary_conditions::{
    check_v_conditions, construct_admissible_pair, endpoint_analysis, parse_bc, AnalysisConfig,
    BoundaryConditionSpec,
};
use friedrichs::bvp_solver::{
    discretize, midpoint_rhs, numerical_kernel, solve_bvp, GridFunction, DEFAULT_SVD_TOL,
};
use friedrichs::matrix_field::{apply_operator_symbolic, parse_problem, FriedrichsProblem, OperatorKind};
use friedrichs::polynomial::Polynomial;
use friedrichs::report::{self, AnalyzeOptions, SolveSummary, VerifyOptions};
use friedrichs::{bundled, Error};

const EXIT_FAILURE: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_F2: u8 = 3;
const EXIT_INADMISSIBLE: u8 = 4;

/// Analysis of one-dimensional Friedrichs systems (A u)' + B u = f.
///
/// PROBLEM arguments are JSON problem files or `bundled:<name>`.
#[derive(Parser)]
#[command(name = "fsys", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Axiom checks, endpoint inertias, predicted kernel dimensions and the
    /// constructed boundary conditions, as JSON.
    Analyze(AnalyzeArgs),
    /// Measure dim ker T1 or dim ker T1~ on a sequence of grids.
    Kernel(KernelArgs),
    /// Solve a boundary value problem with the box scheme.
    Solve(SolveArgs),
    /// Run the invariant checks and print TAP lines.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    problem: String,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also measure kernel dimensions on these grid sizes.
    #[arg(long, value_delimiter = ',')]
    kernel_grids: Option<Vec<usize>>,
    /// Include per-stage wall-clock times (makes output nondeterministic).
    #[arg(long)]
    timings: bool,
}

#[derive(Args)]
struct KernelArgs {
    problem: String,
    #[arg(long, default_value = "T1")]
    operator: OperatorKind,
    #[arg(long, value_delimiter = ',', default_value = "65,129,257")]
    grids: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_SVD_TOL)]
    svd_tol: f64,
    /// Write the kernel basis on the finest grid as CSV.
    #[arg(long)]
    basis_out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    problem: String,
    /// `problem` (the file's rhs), `zero`, `manufactured`, or a JSON file
    /// holding r polynomials.
    #[arg(long, default_value = "problem")]
    rhs: String,
    /// Exact solution for `--rhs manufactured` (JSON file with r
    /// polynomials); defaults to (x - a)(b - x) in every component.
    #[arg(long)]
    exact: Option<PathBuf>,
    /// `constructed`, or a JSON file with "V" and "V_tilde" constraint lists.
    #[arg(long, default_value = "constructed")]
    bc: String,
    #[arg(long, default_value_t = 257)]
    grid: usize,
    #[arg(long, default_value = "T1")]
    operator: OperatorKind,
    /// Solution CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary JSON path; stderr when omitted.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long)]
    timings: bool,
}

#[derive(Args)]
struct VerifyArgs {
    problem: Option<String>,
    #[arg(long, conflicts_with = "problem")]
    all_bundled: bool,
    #[arg(long, value_delimiter = ',', default_value = "65,129,257")]
    grids: Vec<usize>,
}

/// An error together with the process exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Schema(_)
            | Error::DegenerateInterval { .. }
            | Error::DimensionMismatch(_)
            | Error::Json(_)
            | Error::Io(_)
            | Error::InvalidArgument(_) => EXIT_INPUT,
            Error::ResidualTooLarge { .. } => EXIT_INADMISSIBLE,
            _ => EXIT_FAILURE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = std::result::Result<u8, Failure>;

fn load_problem(arg: &str) -> friedrichs::Result<FriedrichsProblem> {
    match arg.strip_prefix("bundled:") {
        Some(name) => bundled::problem(name),
        None => parse_problem(&fs::read_to_string(arg)?),
    }
}

fn read_polynomials(path: &Path, r: usize) -> friedrichs::Result<Vec<Polynomial>> {
    let polys: Vec<Polynomial> =
        serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Schema(e.to_string()))?;
    if polys.len() != r {
        return Err(Error::DimensionMismatch(format!(
            "{} polynomials given for an r = {r} system",
            polys.len()
        )));
    }
    Ok(polys)
}

fn write_or_print(path: Option<&Path>, text: &str) -> friedrichs::Result<()> {
    match path {
        Some(p) => Ok(fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_analyze(args: AnalyzeArgs) -> CmdResult {
    let problem = load_problem(&args.problem)?;
    let opts = AnalyzeOptions {
        kernel_grids: args.kernel_grids,
        timings: args.timings,
        ..AnalyzeOptions::default()
    };
    let rep = report::analyze(&problem, &opts)?;
    write_or_print(args.out.as_deref(), &report::to_json_string(&rep))?;
    if !rep.axiom_checks.f1_ok {
        return Ok(EXIT_FAILURE);
    }
    if !rep.axiom_checks.f2_ok {
        eprintln!("positivity condition fails: B + B* + A' is not bounded below by a positive constant");
        return Ok(EXIT_F2);
    }
    Ok(0)
}

#[derive(serde::Serialize)]
struct KernelSummary<'a> {
    problem_id: &'a str,
    operator: OperatorKind,
    dimension: usize,
    grids: &'a [friedrichs::bvp_solver::GridKernel],
    growth_per_doubling: &'a [Vec<f64>],
    counts: &'a [usize],
}

fn cmd_kernel(args: KernelArgs) -> CmdResult {
    let problem = load_problem(&args.problem)?;
    let est = match numerical_kernel(&problem, args.operator, &args.grids, args.svd_tol) {
        Ok(est) => est,
        Err(e @ Error::InconclusiveKernel { .. }) => {
            eprintln!("{e}");
            return Ok(EXIT_FAILURE);
        }
        Err(e) => return Err(e.into()),
    };
    let summary = KernelSummary {
        problem_id: &problem.id,
        operator: args.operator,
        dimension: est.dimension,
        grids: &est.grids,
        growth_per_doubling: &est.growth,
        counts: &est.counts,
    };
    print!("{}", report::to_json_string(&summary));
    if let (Some(path), Some(grid)) = (args.basis_out, &est.basis_grid) {
        fs::write(path, basis_csv(&est.basis, &grid.nodes)).map_err(Error::from)?;
    }
    Ok(0)
}

/// Columns `x`, then `Re`/`Im` of every component of every basis function.
fn basis_csv(basis: &[GridFunction], xs: &[f64]) -> String {
    let mut out = String::from("x");
    for (k, b) in basis.iter().enumerate() {
        for i in 1..=b.r {
            out.push_str(&format!(",Re k{}_u{i},Im k{}_u{i}", k + 1, k + 1));
        }
    }
    out.push_str("\r\n");
    for (j, x) in xs.iter().enumerate() {
        out.push_str(&format!("{x:.16e}"));
        for b in basis {
            for z in b.at(j).iter() {
                out.push_str(&format!(",{:.16e},{:.16e}", z.re, z.im));
            }
        }
        out.push_str("\r\n");
    }
    out
}

fn bubble(problem: &FriedrichsProblem) -> Vec<Polynomial> {
    let iv = problem.interval();
    let b = Polynomial::from_real(&[-iv.a * iv.b, iv.a + iv.b, -1.0]);
    vec![b; problem.r()]
}

fn cmd_solve(args: SolveArgs) -> CmdResult {
    let start = Instant::now();
    let mut timings = BTreeMap::new();
    let problem = load_problem(&args.problem)?;
    let r = problem.r();
    let ends = endpoint_analysis(&problem, &AnalysisConfig::default())?;
    let spec: BoundaryConditionSpec = match args.bc.as_str() {
        "constructed" => construct_admissible_pair(&ends),
        path => parse_bc(&fs::read_to_string(path).map_err(Error::from)?, r)?,
    };
    let pair = check_v_conditions(&ends, &spec, 32, 7)?;
    if !pair.surrogate_ok() {
        eprintln!(
            "boundary conditions not admissible or grid too coarse: V and V~ are not form-orthogonal \
             complements (max cross term {:.3e}, codimensions {},{})",
            pair.max_cross, pair.codim_v, pair.codim_v_tilde
        );
        return Ok(EXIT_INADMISSIBLE);
    }

    let exact = match args.rhs.as_str() {
        "manufactured" => Some(match &args.exact {
            Some(path) => read_polynomials(path, r)?,
            None => bubble(&problem),
        }),
        _ => None,
    };
    let f: Vec<Polynomial> = match (args.rhs.as_str(), &exact) {
        (_, Some(u)) => apply_operator_symbolic(&problem, u, args.operator)?,
        ("problem", _) => problem
            .rhs
            .clone()
            .ok_or_else(|| Error::InvalidArgument("the problem file has no rhs".into()))?,
        ("zero", _) => vec![Polynomial::zero(); r],
        (path, _) => read_polynomials(Path::new(path), r)?,
    };
    timings.insert("setup".to_string(), start.elapsed().as_secs_f64() * 1e3);

    let run = |n: usize| -> friedrichs::Result<(friedrichs::bvp_solver::DiscreteOperator, friedrichs::bvp_solver::BvpSolution)> {
        let op = discretize(&problem, &spec, n, args.operator)?;
        let sol = solve_bvp(&op, &midpoint_rhs(&op.grid, &f))?;
        Ok((op, sol))
    };
    let error_of = |op: &friedrichs::bvp_solver::DiscreteOperator, sol: &GridFunction, u: &[Polynomial]| {
        let ex = GridFunction::sample(u, &op.grid.nodes);
        GridFunction {
            r,
            values: &sol.values - &ex.values,
        }
        .l2_norm(&op.grid)
    };

    let t = Instant::now();
    let (op, sol) = run(args.grid)?;
    timings.insert("solve".to_string(), t.elapsed().as_secs_f64() * 1e3);
    let (l2_error, observed_order) = match &exact {
        Some(u) => {
            let err = error_of(&op, &sol.u, u);
            let coarse = (args.grid - 1) / 2 + 1;
            let order = if coarse >= 3 {
                let (cop, csol) = run(coarse)?;
                let cerr = error_of(&cop, &csol.u, u);
                (err > 0.0 && cerr > 0.0).then(|| (cerr / err).ln() / (cop.grid.h / op.grid.h).ln())
            } else {
                None
            };
            (Some(err), order)
        }
        None => (None, None),
    };

    let summary = SolveSummary {
        problem_id: problem.id.clone(),
        operator: args.operator,
        grid: args.grid,
        shape: [op.matrix.nrows(), op.matrix.ncols()],
        method: sol.method,
        residual: sol.residual,
        residual_threshold: sol.threshold,
        rank_deficient: sol.rank_deficient,
        pair_check: Some(pair),
        l2_error,
        observed_order,
        timings_ms: args.timings.then_some(timings),
    };
    let csv = sol.u.to_csv(&op.grid.nodes);
    write_or_print(args.out.as_deref(), &csv)?;
    let json = report::to_json_string(&summary);
    match &args.summary {
        Some(p) => fs::write(p, json).map_err(Error::from)?,
        None => eprint!("{json}"),
    }
    if sol.rank_deficient {
        eprintln!("boundary conditions not admissible or grid too coarse: discrete system is rank deficient");
        return Ok(EXIT_INADMISSIBLE);
    }
    Ok(0)
}

fn cmd_verify(args: VerifyArgs) -> CmdResult {
    let problems: Vec<FriedrichsProblem> = if args.all_bundled {
        bundled::all()
    } else {
        match &args.problem {
            Some(p) => vec![load_problem(p)?],
            None => return Err(Error::InvalidArgument("give a problem or --all-bundled".into()).into()),
        }
    };
    let opts = VerifyOptions {
        kernel_grids: args.grids,
        ..VerifyOptions::default()
    };
    let results: Vec<_> = problems
        .par_iter()
        .map(|p| (p.id.clone(), report::verify_problem(p, &opts)))
        .collect();
    let total: usize = results.iter().map(|(_, c)| c.len()).sum();
    println!("TAP version 13");
    println!("1..{total}");
    let mut k = 0;
    let mut failed = 0;
    for (id, checks) in &results {
        for c in checks {
            k += 1;
            let status = if c.ok { "ok" } else { "not ok" };
            let skip = if c.skipped { " # SKIP" } else { "" };
            println!("{status} {k} - {id} {} {}{skip}", c.name, c.detail);
            failed += usize::from(!c.ok);
        }
    }
    if failed > 0 {
        println!("# {failed} of {total} checks failed");
        return Ok(EXIT_FAILURE);
    }
    Ok(0)
}

fn configure_threads() {
    if let Some(n) = std::env::var("FSYS_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // a second initialisation can only fail if the pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let result = match cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Kernel(a) => cmd_kernel(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
