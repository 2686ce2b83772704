// `!(x > 0.0)` rejects NaN as well as non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use geoconvex::brascamp_lieb::{
    check_nondegeneracy, check_scaling_condition, heuristic_feasibility, minimize_bl_objective, rank_one_convex_oracle,
    BlDatum, BlDatumRecord, Feasibility, OracleOptions, ORACLE_MAX_MAPS,
};
use geoconvex::connection::{
    christoffel_closed, christoffel_numeric, default_source, default_step, geodesic_ode_solve,
    metric_compatibility_residual, metric_frame_of, sample_geodesic, ChristoffelTensor,
};
use geoconvex::descent::{DescentOptions, DescentStatus};
use geoconvex::gconvex::{
    violation_search, DefaultSampler, Posynomial, PosynomialTerm, ScalarField, Verdict, DEFAULT_GRID_SIZE,
    DEFAULT_SEED, TOL_EQ,
};
use geoconvex::manifold::{log_map, ManifoldKind, Point};
use geoconvex::matfun::SpdMatrix;
use geoconvex::operator_scaling::{
    alternating_scaling, capacity_minimize, scale, OperatorRecord, PositiveOperator, ALTERNATING_MAX_ITERS,
};
use geoconvex::selftest::{self, SelftestConfig};

/// Exit code for a certified violation or an infeasibility refutation.
const EXIT_VIOLATION: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "geoconvex", version, about = "Geodesic convexity toolkit")]
struct Cli {
    /// Write the result here instead of standard output.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ManifoldArg {
    Euclidean,
    Orthant,
    Spd,
}

impl ManifoldArg {
    fn kind(self) -> ManifoldKind {
        match self {
            ManifoldArg::Euclidean => ManifoldKind::Euclidean,
            ManifoldArg::Orthant => ManifoldKind::PositiveOrthant,
            ManifoldArg::Spd => ManifoldKind::SpdCone,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum FunctionArg {
    Logdet,
    NegLogdet,
    SumLog,
    Logbarrier,
    LogSquare,
    SinExp,
    LogMinus,
    Posynomial,
    LogPosynomial,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form geodesic next to the integrated geodesic equation.
    Geodesic {
        #[arg(long, value_enum)]
        manifold: ManifoldArg,
        /// Start point: comma-separated coordinates, or a JSON matrix file on spd.
        #[arg(long, allow_hyphen_values = true)]
        p: String,
        /// End point, in the same format as --p.
        #[arg(long, allow_hyphen_values = true)]
        q: String,
        /// Number of RK4 steps; the trace has steps+1 rows.
        #[arg(long, default_value_t = 100)]
        steps: usize,
    },
    /// Christoffel symbols at a point, numeric and closed form.
    Christoffel {
        #[arg(long, value_enum)]
        manifold: ManifoldArg,
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        /// Finite-difference step; defaults to 1e-4·max(1, ‖x‖∞).
        #[arg(long)]
        h: Option<f64>,
    },
    /// Seeded search for geodesic-convexity violations.
    Gconvex {
        #[arg(long = "fn", value_enum)]
        function: FunctionArg,
        #[arg(long, value_enum)]
        manifold: ManifoldArg,
        /// Dimension for functions that accept one.
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = TOL_EQ)]
        tol: f64,
        /// Posynomial terms, `{"terms": [{"coeff": c, "exponents": [..]}, ..]}`.
        #[arg(long)]
        coeffs: Option<PathBuf>,
    },
    /// Brascamp-Lieb constant of a datum file `{"n", "p", "B"}`.
    Bl {
        datum: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-8)]
        grad_tol: f64,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Random subspaces tried by the feasibility heuristic.
        #[arg(long, default_value_t = 200)]
        feasibility_trials: usize,
    },
    /// Operator capacity and doubly stochastic scaling of `{"n", "A"}`.
    Opscale {
        operator: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-8)]
        grad_tol: f64,
        #[arg(long, default_value_t = ALTERNATING_MAX_ITERS)]
        alternating_iters: usize,
        /// Write the alternating residual trace as CSV here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the invariant suite and print a pass/fail table.
    Selftest {
        #[arg(long, default_value_t = selftest::DEFAULT_SELFTEST_SEED)]
        seed: u64,
        /// Run a tenth of the instances.
        #[arg(long)]
        quick: bool,
    },
}

/// Everything that determines an output, echoed into its header.
#[derive(Debug, Serialize)]
struct RunConfig<'a> {
    command: &'static str,
    output_path: Option<&'a Path>,
    #[serde(flatten)]
    parameters: serde_json::Value,
}

struct Outcome {
    body: String,
    exit: u8,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).with_context(|| format!("{}: invalid input", path.display()))
}

fn parse_point(m: ManifoldArg, text: &str, n_hint: Option<usize>) -> Result<Point> {
    match m {
        ManifoldArg::Spd => {
            let rows: Vec<Vec<f64>> = parse_json(Path::new(text))?;
            Ok(Point::spd(
                SpdMatrix::from_rows(&rows).with_context(|| format!("{text}: not an SPD matrix"))?,
            ))
        }
        _ => {
            let coords: Vec<f64> = text
                .split(',')
                .enumerate()
                .map(|(i, s)| {
                    s.trim()
                        .parse::<f64>()
                        .with_context(|| format!("coordinate {} of {text:?} is not a number", i + 1))
                })
                .collect::<Result<_>>()?;
            if let Some(n) = n_hint {
                if coords.len() != n {
                    bail!("{text:?} has {} coordinates, expected {n}", coords.len());
                }
            }
            let p = if m == ManifoldArg::Orthant {
                Point::orthant(&coords)
            } else {
                Point::euclidean(&coords)
            };
            Ok(p?)
        }
    }
}

fn header_lines(config: &RunConfig) -> Result<String> {
    Ok(format!(
        "# geoconvex {}\n# config: {}\n",
        config.command,
        serde_json::to_string(config)?
    ))
}

fn format_row(values: impl IntoIterator<Item = f64>) -> String {
    values
        .into_iter()
        .map(|v| format!("{v:.15e}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn cmd_geodesic(config: &RunConfig, manifold: ManifoldArg, p: &str, q: &str, steps: usize) -> Result<Outcome> {
    if steps == 0 {
        bail!("--steps must be positive");
    }
    let p = parse_point(manifold, p, None)?;
    let q = parse_point(manifold, q, (manifold != ManifoldArg::Spd).then_some(p.spec().n))?;
    if p.spec() != q.spec() {
        bail!(
            "--p and --q live on different manifolds ({:?} vs {:?})",
            p.spec(),
            q.spec()
        );
    }
    let m = p.spec();
    let closed = sample_geodesic(&p, &q, steps + 1)?;
    let v0 = log_map(&p, &q)?.to_frame();
    let source = default_source(m);
    let ode = geodesic_ode_solve(source.as_ref(), &p.to_frame(), &v0, 1.0, steps)?;
    let d = m.dim();

    let mut out = header_lines(config)?;
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=d).map(|i| format!("closed_x_{i}")));
    cols.extend((1..=d).map(|i| format!("ode_x_{i}")));
    cols.extend((1..=d).map(|i| format!("closed_v_{i}")));
    out.push_str(&cols.join(","));
    out.push('\n');
    let mut max_dev = 0.0f64;
    for i in 0..closed.len() {
        let (c, o) = (&closed.points()[i], &ode.points()[i]);
        max_dev = max_dev.max((c - o).amax());
        let row = std::iter::once(closed.times()[i])
            .chain(c.iter().copied())
            .chain(o.iter().copied())
            .chain(closed.velocities()[i].iter().copied());
        out.push_str(&format_row(row));
        out.push('\n');
    }
    out.push_str(&format!("# max_deviation={max_dev:.6e}\n"));
    Ok(Outcome { body: out, exit: 0 })
}

fn tensor_json(t: &ChristoffelTensor) -> serde_json::Value {
    let d = t.dim();
    let data: Vec<Vec<Vec<f64>>> = (0..d)
        .map(|k| (0..d).map(|i| (0..d).map(|j| t.get(k, i, j)).collect()).collect())
        .collect();
    json!(data)
}

fn cmd_christoffel(config: &RunConfig, manifold: ManifoldArg, point: &str, h: Option<f64>) -> Result<Outcome> {
    let p = parse_point(manifold, point, None)?;
    let m = p.spec();
    let x = p.to_frame();
    let h = h.unwrap_or_else(|| default_step(&x));
    if !(h > 0.0) {
        bail!("--h must be positive");
    }
    let frame = metric_frame_of(m);
    let numeric = christoffel_numeric(&frame, &x, h)?;
    let closed = match m.kind {
        ManifoldKind::SpdCone => None,
        _ => Some(christoffel_closed(m, &p)?),
    };
    let residual = metric_compatibility_residual(&frame, default_source(m).as_ref(), &x, h)?;
    let doc = json!({
        "config": config,
        "manifold": m,
        "point": p,
        "h": h,
        "numeric": tensor_json(&numeric),
        "closed": closed.as_ref().map(tensor_json),
        "max_abs_difference": closed.as_ref().map(|c| numeric.max_abs_diff(c)),
        "metric_compatibility_residual": residual,
    });
    Ok(Outcome {
        body: serde_json::to_string_pretty(&doc)? + "\n",
        exit: 0,
    })
}

#[derive(Deserialize)]
struct PosynomialFile {
    terms: Vec<PosynomialTerm>,
}

fn build_function(function: FunctionArg, n: usize, coeffs: Option<&Path>) -> Result<ScalarField> {
    if n == 0 {
        bail!("--n must be positive");
    }
    let posynomial = || -> Result<Posynomial> {
        let path = coeffs.context("--coeffs is required for posynomial functions")?;
        let file: PosynomialFile = parse_json(path)?;
        Ok(Posynomial::new(file.terms)?)
    };
    Ok(match function {
        FunctionArg::Logdet => ScalarField::log_det(n),
        FunctionArg::NegLogdet => ScalarField::neg_log_det(n),
        FunctionArg::SumLog => ScalarField::sum_log(n),
        FunctionArg::Logbarrier => ScalarField::log_barrier(n),
        FunctionArg::LogSquare => ScalarField::log_square(),
        FunctionArg::SinExp => ScalarField::sin_exp(),
        FunctionArg::LogMinus => ScalarField::log_minus(),
        FunctionArg::Posynomial => ScalarField::posynomial(posynomial()?),
        FunctionArg::LogPosynomial => ScalarField::log_posynomial(posynomial()?),
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_gconvex(
    config: &RunConfig,
    function: FunctionArg,
    manifold: ManifoldArg,
    n: usize,
    trials: usize,
    seed: u64,
    tol: f64,
    coeffs: Option<&Path>,
) -> Result<Outcome> {
    if !(tol > 0.0) {
        bail!("--tol must be positive");
    }
    let f = build_function(function, n, coeffs)?;
    if f.manifold.kind != manifold.kind() {
        bail!(
            "{} is defined on {:?}, not {:?}",
            f.name,
            f.manifold.kind,
            manifold.kind()
        );
    }
    let report = violation_search(&f, &DefaultSampler::new(f.manifold), trials, seed, tol)?;
    let exit = if report.verdict == Verdict::Violated {
        EXIT_VIOLATION
    } else {
        0
    };
    let doc = json!({ "config": config, "report": report });
    Ok(Outcome {
        body: serde_json::to_string_pretty(&doc)? + "\n",
        exit,
    })
}

fn descent_options(max_iter: usize, grad_tol: f64) -> Result<DescentOptions> {
    let opts = DescentOptions {
        max_iter,
        grad_tol,
        ..Default::default()
    };
    opts.validate()?;
    Ok(opts)
}

fn cmd_bl(config: &RunConfig, datum: &Path, opts: DescentOptions, seed: u64, trials: usize) -> Result<Outcome> {
    let record: BlDatumRecord = parse_json(datum)?;
    let d = BlDatum::from_record(record)?;
    if !check_scaling_condition(&d) {
        bail!("scaling condition fails: n = {} but Σ pⱼ nⱼ differs", d.n());
    }
    if !check_nondegeneracy(&d) {
        bail!("nondegeneracy fails: some Bⱼ does not have full row rank");
    }
    let feasibility = heuristic_feasibility(&d, trials, seed)?;
    if let Feasibility::Refuted { .. } = feasibility {
        let doc = json!({ "config": config, "feasibility": feasibility, "result": null });
        return Ok(Outcome {
            body: serde_json::to_string_pretty(&doc)? + "\n",
            exit: EXIT_VIOLATION,
        });
    }
    let result = minimize_bl_objective(&d, &SpdMatrix::identity(d.n()), &opts)?;
    if result.status == DescentStatus::Diverged {
        bail!(
            "infeasible suspected: F reached {} with gradient norm {:e}",
            result.f_value,
            result.gradient_norm
        );
    }
    let oracle = if d.is_rank_one() && d.maps().len() <= ORACLE_MAX_MAPS {
        let o = rank_one_convex_oracle(&d, &vec![0.0; d.maps().len()], &OracleOptions::default())?;
        let diff = (o.bl_constant - result.bl_constant).abs();
        Some(json!({ "optimum": o, "abs_difference": diff }))
    } else {
        None
    };
    let doc = json!({
        "config": config,
        "feasibility": feasibility,
        "result": result,
        "rank_one_oracle": oracle,
    });
    Ok(Outcome {
        body: serde_json::to_string_pretty(&doc)? + "\n",
        exit: 0,
    })
}

fn cmd_opscale(
    config: &RunConfig,
    operator: &Path,
    opts: DescentOptions,
    alternating_iters: usize,
    trace: Option<&Path>,
) -> Result<Outcome> {
    let record: OperatorRecord = parse_json(operator)?;
    let op = PositiveOperator::from_record(record)?;
    let descent = capacity_minimize(&op, &SpdMatrix::identity(op.n()), &opts)?;
    let scaling = scale(&op, &descent.x_star)?;
    let alt = alternating_scaling(&op, alternating_iters)?;
    if let Some(path) = trace {
        let mut csv = header_lines(config)?;
        csv.push_str("iteration,max_residual\n");
        for (i, r) in alt.residuals.iter().enumerate() {
            csv.push_str(&format!("{i},{r:.15e}\n"));
        }
        fs::write(path, csv).with_context(|| format!("cannot write {}", path.display()))?;
    }
    let doc = json!({
        "config": config,
        "scaling": scaling,
        "descent": {
            "log_capacity": descent.log_capacity,
            "iterations": descent.iterations,
            "gradient_norm": descent.gradient_norm,
            "status": descent.status,
        },
        "alternating": {
            "log_capacity": alt.log_capacity,
            "iterations": alt.iterations,
            "converged": alt.converged,
            "final_residual": alt.residuals.last(),
        },
        "log_capacity_abs_difference": (descent.log_capacity - alt.log_capacity).abs(),
    });
    Ok(Outcome {
        body: serde_json::to_string_pretty(&doc)? + "\n",
        exit: 0,
    })
}

fn cmd_selftest(config: &RunConfig, seed: u64, quick: bool) -> Result<Outcome> {
    let report = selftest::run(&SelftestConfig { seed, quick });
    let body = header_lines(config)? + &report.render();
    Ok(Outcome {
        body,
        exit: if report.passed() { 0 } else { EXIT_VIOLATION },
    })
}

fn dispatch(cli: &Cli) -> Result<Outcome> {
    let output_path = cli.output.as_deref();
    let config = |command, parameters| RunConfig {
        command,
        output_path,
        parameters,
    };
    match &cli.command {
        Command::Geodesic { manifold, p, q, steps } => cmd_geodesic(
            &config(
                "geodesic",
                json!({ "manifold": manifold, "p": p, "q": q, "steps": steps }),
            ),
            *manifold,
            p,
            q,
            *steps,
        ),
        Command::Christoffel { manifold, point, h } => cmd_christoffel(
            &config("christoffel", json!({ "manifold": manifold, "point": point, "h": h })),
            *manifold,
            point,
            *h,
        ),
        Command::Gconvex {
            function,
            manifold,
            n,
            trials,
            seed,
            tol,
            coeffs,
        } => cmd_gconvex(
            &config(
                "gconvex",
                json!({
                    "function": function, "manifold": manifold, "n": n, "trials": trials, "seed": seed,
                    "tolerance": tol, "t_grid_size": DEFAULT_GRID_SIZE, "input_path": coeffs,
                }),
            ),
            *function,
            *manifold,
            *n,
            *trials,
            *seed,
            *tol,
            coeffs.as_deref(),
        ),
        Command::Bl {
            datum,
            max_iter,
            grad_tol,
            seed,
            feasibility_trials,
        } => cmd_bl(
            &config(
                "bl",
                json!({
                    "input_path": datum, "max_iter": max_iter, "grad_tol": grad_tol, "seed": seed,
                    "feasibility_trials": feasibility_trials,
                }),
            ),
            datum,
            descent_options(*max_iter, *grad_tol)?,
            *seed,
            *feasibility_trials,
        ),
        Command::Opscale {
            operator,
            max_iter,
            grad_tol,
            alternating_iters,
            trace,
        } => cmd_opscale(
            &config(
                "opscale",
                json!({
                    "input_path": operator, "max_iter": max_iter, "grad_tol": grad_tol,
                    "alternating_iters": alternating_iters, "trace_path": trace,
                }),
            ),
            operator,
            descent_options(*max_iter, *grad_tol)?,
            *alternating_iters,
            trace.as_deref(),
        ),
        Command::Selftest { seed, quick } => cmd_selftest(
            &config("selftest", json!({ "seed": seed, "quick": quick })),
            *seed,
            *quick,
        ),
    }
}

fn main() -> ExitCode {
    // Usage errors exit with 1; clap's own default of 2 is reserved for violations.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(outcome) => {
            let written = match &cli.output {
                Some(path) => {
                    fs::write(path, &outcome.body).with_context(|| format!("cannot write {}", path.display()))
                }
                None => {
                    print!("{}", outcome.body);
                    Ok(())
                }
            };
            match written {
                Ok(()) => ExitCode::from(outcome.exit),
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(1)
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
