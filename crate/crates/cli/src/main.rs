use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use sketchls::harness::{parse_grid, parse_size, threads_from_env, worker_pool};
use sketchls::nalgebra::DVector;
use sketchls::{
    bootstrap_cs, bootstrap_ihs_trace, classic_sketch, extrapolate_m, extrapolate_t, fit_geometric,
    gen_synthetic, hessian_sketch, ihs_run, iterations_needed, load_problem, make_sketch,
    run_cs_experiment, run_ihs_experiment, solve_exact_ls, write_problem, BootstrapParams,
    Conditioning, CsExperimentConfig, ExtrapolationModel, IhsExperimentConfig, LSProblem,
    NormSpec, SketchKind, SyntheticSpec,
};

/// Sketched least squares with bootstrap error estimates.
///
/// Worker count is taken from SKETCHLS_THREADS (0 or unset = one per core).
#[derive(Parser)]
#[command(name = "sketchls", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic problem and write it as an SKLS file.
    Gen(GenArgs),
    /// Solve a problem exactly or with a sketched algorithm.
    Solve {
        #[command(subcommand)]
        method: SolveMethod,
    },
    /// Bootstrap error estimate for one sketched solve.
    Estimate {
        #[command(subcommand)]
        method: EstimateMethod,
    },
    /// Extrapolate an error estimate.
    Extrapolate {
        #[command(subcommand)]
        rule: ExtrapolateRule,
    },
    /// Monte Carlo coverage experiment, written as CSV.
    Experiment {
        #[command(subcommand)]
        kind: ExperimentKind,
    },
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    /// ill (cond(A'A) = 1e12) or well (1e2).
    #[arg(long, default_value = "well")]
    cond: Conditioning,
    #[arg(long, default_value_t = SyntheticSpec::DEFAULT_TAU)]
    tau: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataArg {
    /// SKLS or LIBSVM file (detected from the magic bytes).
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct SketchArgs {
    /// Sketch size, absolute or relative to d (e.g. 600 or 30d).
    #[arg(long)]
    m: String,
    /// gaussian, rademacher, srht or rowsample.
    #[arg(long, default_value = "srht")]
    sketch: SketchKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BootArgs {
    #[arg(long = "B", default_value_t = 20)]
    replicates: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// l1, l2, linf or lp:<p>.
    #[arg(long, default_value = "l2")]
    norm: NormSpec,
}

#[derive(Subcommand)]
enum SolveMethod {
    /// Full QR solve.
    Exact {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classic sketch.
    Cs {
        #[command(flatten)]
        data: DataArg,
        #[command(flatten)]
        sketch: SketchArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hessian sketch.
    Hs {
        #[command(flatten)]
        data: DataArg,
        #[command(flatten)]
        sketch: SketchArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Iterative Hessian sketch from x0 = 0.
    Ihs {
        #[command(flatten)]
        data: DataArg,
        #[command(flatten)]
        sketch: SketchArgs,
        #[arg(long, default_value_t = 5)]
        t: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum EstimateMethod {
    Cs {
        #[command(flatten)]
        data: DataArg,
        #[command(flatten)]
        sketch: SketchArgs,
        #[command(flatten)]
        boot: BootArgs,
    },
    Ihs {
        #[command(flatten)]
        data: DataArg,
        #[command(flatten)]
        sketch: SketchArgs,
        #[command(flatten)]
        boot: BootArgs,
        #[arg(long, default_value_t = 3)]
        t: usize,
    },
}

#[derive(Subcommand)]
enum ExtrapolateRule {
    /// sqrt(m0/m) rescaling of an estimate made at sketch size m0.
    M {
        #[arg(long)]
        m0: usize,
        #[arg(long)]
        eps: f64,
        /// Target sketch sizes.
        #[arg(long, num_args = 1.., required = true)]
        m: Vec<usize>,
    },
    /// Geometric fit through the IHS estimates at iterations 1 and 2.
    T {
        #[arg(long)]
        eps1: f64,
        #[arg(long)]
        eps2: f64,
        /// Iterations to predict.
        #[arg(long, num_args = 1..)]
        i: Vec<usize>,
        /// Report the first iteration whose prediction is at most this.
        #[arg(long)]
        target: Option<f64>,
    },
}

#[derive(Subcommand)]
enum ExperimentKind {
    Cs {
        #[command(flatten)]
        data: DataArg,
        /// start:stop:step, e.g. 5d:30d:5d.
        #[arg(long)]
        grid: String,
        #[arg(long)]
        m0: Option<String>,
        #[arg(long, default_value = "srht")]
        sketch: SketchKind,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[command(flatten)]
        boot: BootArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Ihs {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        m: String,
        #[arg(long = "t-max", default_value_t = 10)]
        t_max: usize,
        #[arg(long, default_value = "srht")]
        sketch: SketchKind,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[command(flatten)]
        boot: BootArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(data: &DataArg) -> Result<LSProblem> {
    load_problem(&data.data).with_context(|| format!("loading {}", data.data.display()))
}

fn fmt_vec(x: &DVector<f64>) -> String {
    x.iter().map(|v| format!("{v:.16e}\n")).collect()
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn sketch_size(args: &SketchArgs, problem: &LSProblem) -> Result<usize> {
    Ok(parse_size(&args.m, problem.d())?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(args) => {
            let spec = SyntheticSpec::new(args.n, args.d, args.cond, args.seed).with_tau(args.tau);
            let problem = gen_synthetic(&spec)?;
            write_problem(&problem, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
            println!("wrote {}x{} problem to {}", problem.n(), problem.d(), args.out.display());
        }
        Command::Solve { method } => match method {
            SolveMethod::Exact { data, out } => {
                let problem = load(&data)?;
                emit(&fmt_vec(&solve_exact_ls(&problem)?), out.as_ref())?;
            }
            SolveMethod::Cs { data, sketch, out } => {
                let problem = load(&data)?;
                let op = make_sketch(sketch.sketch, sketch_size(&sketch, &problem)?, problem.n(), sketch.seed)?;
                emit(&fmt_vec(&classic_sketch(&problem, &op)?.x_tilde), out.as_ref())?;
            }
            SolveMethod::Hs { data, sketch, out } => {
                let problem = load(&data)?;
                let op = make_sketch(sketch.sketch, sketch_size(&sketch, &problem)?, problem.n(), sketch.seed)?;
                emit(&fmt_vec(&hessian_sketch(&problem, &op)?), out.as_ref())?;
            }
            SolveMethod::Ihs { data, sketch, t, out } => {
                let problem = load(&data)?;
                let m = sketch_size(&sketch, &problem)?;
                let trace = ihs_run(&problem, sketch.sketch, m, t, DVector::zeros(problem.d()), sketch.seed)?;
                emit(&fmt_vec(trace.last()), out.as_ref())?;
            }
        },
        Command::Estimate { method } => {
            let est = match method {
                EstimateMethod::Cs { data, sketch, boot } => {
                    let problem = load(&data)?;
                    let op = make_sketch(sketch.sketch, sketch_size(&sketch, &problem)?, problem.n(), sketch.seed)?;
                    let cs = classic_sketch(&problem, &op)?;
                    let params = BootstrapParams::new(boot.replicates, boot.alpha, boot.norm, sketch.seed);
                    bootstrap_cs(&cs.a_tilde, &cs.b_tilde, &cs.x_tilde, &params)?
                }
                EstimateMethod::Ihs { data, sketch, boot, t } => {
                    let problem = load(&data)?;
                    let m = sketch_size(&sketch, &problem)?;
                    let trace = ihs_run(&problem, sketch.sketch, m, t, DVector::zeros(problem.d()), sketch.seed)?;
                    let params = BootstrapParams::new(boot.replicates, boot.alpha, boot.norm, sketch.seed);
                    bootstrap_ihs_trace(&trace, &params)?
                }
            };
            println!("epsilon {:.16e}", est.epsilon);
            println!("alpha {}", est.alpha);
            println!("norm {}", est.norm);
            println!("replicates {}", est.num_replicates());
            println!("degenerate {}", est.degenerate_count);
        }
        Command::Extrapolate { rule } => match rule {
            ExtrapolateRule::M { m0, eps, m } => {
                let model = ExtrapolationModel::sketch_size(m0, eps)?;
                for m in m {
                    println!("{m} {:.16e}", extrapolate_m(&model, m)?);
                }
            }
            ExtrapolateRule::T { eps1, eps2, i, target } => {
                let model = fit_geometric(eps1, eps2)?;
                if let ExtrapolationModel::Geometric { c_hat, eta_hat } = model {
                    println!("c_hat {c_hat:.16e}");
                    println!("eta_hat {eta_hat:.16e}");
                }
                for i in i {
                    println!("{i} {:.16e}", extrapolate_t(&model, i)?);
                }
                if let Some(target) = target {
                    println!("iterations_needed {}", iterations_needed(&model, target)?);
                }
            }
        },
        Command::Experiment { kind } => match kind {
            ExperimentKind::Cs {
                data,
                grid,
                m0,
                sketch,
                trials,
                boot,
                seed,
                out,
            } => {
                let problem = load(&data)?;
                let m_grid = parse_grid(&grid, problem.d())?;
                let m0 = match m0 {
                    Some(expr) => parse_size(&expr, problem.d())?,
                    None => *m_grid.iter().min().expect("parse_grid never returns empty"),
                };
                let config = CsExperimentConfig {
                    m_grid,
                    m0,
                    alpha: boot.alpha,
                    replicates: boot.replicates,
                    trials,
                    norm: boot.norm,
                    seed,
                };
                emit(&run_cs_experiment(&problem, &sketch, &config)?.to_csv(), out.as_ref())?;
            }
            ExperimentKind::Ihs {
                data,
                m,
                t_max,
                sketch,
                trials,
                boot,
                seed,
                out,
            } => {
                let problem = load(&data)?;
                let config = IhsExperimentConfig {
                    m: parse_size(&m, problem.d())?,
                    t_max,
                    alpha: boot.alpha,
                    replicates: boot.replicates,
                    trials,
                    norm: boot.norm,
                    seed,
                };
                emit(&run_ihs_experiment(&problem, &sketch, &config)?.to_csv(), out.as_ref())?;
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = threads_from_env()
        .and_then(worker_pool)
        .map_err(anyhow::Error::from)
        .and_then(|pool| pool.install(|| run(cli)));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
