//! Monte Carlo sweeps that measure how well the bootstrap estimates and
//! their extrapolations track the true error distribution.
//!
//! Each trial `j` owns substream `j` of the master seed and every random
//! object inside the trial is addressed from there, so a report depends only
//! on the configuration, never on how many workers ran it. Trials run on the
//! current rayon pool; use [`worker_pool`] to pin the worker count.

use std::fmt::Write as _;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::bootstrap::{bootstrap_cs, bootstrap_ihs, empirical_quantile, BootstrapParams};
use crate::error::{Error, Result, TrialCoord};
use crate::extrapolate::{extrapolate_m, extrapolate_t, fit_geometric, ExtrapolationModel};
use crate::linalg::{norm_eval, solve_exact_ls, LSProblem, NormSpec};
use crate::rng;
use crate::solvers::{classic_sketch, IhsIterator};
use crate::sketch::SketchFactory;

/// Environment variable capping the worker count (`0` or unset = automatic).
pub const THREADS_ENV: &str = "SKETCHLS_THREADS";

const TAG_SKETCH: u64 = 0;
const TAG_BOOTSTRAP: u64 = 1;

/// Reads [`THREADS_ENV`]; `0` means automatic.
pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if v.trim().is_empty() => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("{THREADS_ENV}={v:?} is not a worker count"))),
        Err(_) => Ok(0),
    }
}

/// A rayon pool with `threads` workers (`0` = one per core).
pub fn worker_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("cannot build worker pool: {e}")))
}

/// Resolves a size such as `600` or `5d` against the problem dimension.
pub fn parse_size(expr: &str, d: usize) -> Result<usize> {
    let expr = expr.trim();
    let bad = || Error::invalid(format!("bad size '{expr}' (expected an integer or <k>d)"));
    let value = match expr.strip_suffix('d') {
        Some("") => d,
        Some(k) => k.parse::<usize>().map_err(|_| bad())?.checked_mul(d).ok_or_else(bad)?,
        None => expr.parse::<usize>().map_err(|_| bad())?,
    };
    if value == 0 {
        return Err(bad());
    }
    Ok(value)
}

/// Expands `start:stop:step` (each a [`parse_size`] expression) or a
/// comma-separated list into sketch sizes.
pub fn parse_grid(expr: &str, d: usize) -> Result<Vec<usize>> {
    let parts: Vec<&str> = expr.split(':').collect();
    let grid = match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (parse_size(start, d)?, parse_size(stop, d)?, parse_size(step, d)?);
            if stop < start {
                return Err(Error::invalid(format!("empty grid '{expr}'")));
            }
            (start..=stop).step_by(step).collect()
        }
        [list] => list
            .split(',')
            .map(|s| parse_size(s, d))
            .collect::<Result<Vec<_>>>()?,
        _ => return Err(Error::invalid(format!("bad grid '{expr}' (expected start:stop:step)"))),
    };
    Ok(grid)
}

/// Which quantity a report is indexed by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridAxis {
    SketchSize,
    Iteration,
}

impl GridAxis {
    fn column(self) -> &'static str {
        match self {
            GridAxis::SketchSize => "m",
            GridAxis::Iteration => "iteration",
        }
    }
}

/// Aggregated results at one sketch size or iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct CoveragePoint {
    pub grid: usize,
    /// `1 - alpha` empirical quantile of the true errors across trials.
    pub benchmark_quantile: f64,
    /// Mean of the per-trial (extrapolated) estimates.
    pub estimate_mean: f64,
    /// Sample standard deviation of the per-trial estimates.
    pub estimate_std: f64,
    /// Fraction of trials whose true error is at most their estimate.
    pub coverage: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub axis: GridAxis,
    pub points: Vec<CoveragePoint>,
}

impl CoverageReport {
    pub fn csv_header(axis: GridAxis) -> String {
        format!(
            "{},benchmark_quantile,extrap_mean,extrap_std,coverage,trials",
            axis.column()
        )
    }

    /// CSV with floats at 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = Self::csv_header(self.axis);
        out.push('\n');
        for p in &self.points {
            writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                p.grid, p.benchmark_quantile, p.estimate_mean, p.estimate_std, p.coverage, p.trials
            )
            .expect("writing to a String");
        }
        out
    }

    /// Parses the output of [`CoverageReport::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty report".into()))?;
        let axis = [GridAxis::SketchSize, GridAxis::Iteration]
            .into_iter()
            .find(|&a| Self::csv_header(a) == header.trim())
            .ok_or_else(|| Error::Format(format!("unknown report header '{header}'")))?;
        let bad = |line: &str| Error::Format(format!("bad report row '{line}'"));
        let points = lines
            .filter(|l| !l.trim().is_empty())
            .map(|line| {
                let f: Vec<&str> = line.trim().split(',').collect();
                if f.len() != 6 {
                    return Err(bad(line));
                }
                let float = |s: &str| s.parse::<f64>().map_err(|_| bad(line));
                Ok(CoveragePoint {
                    grid: f[0].parse().map_err(|_| bad(line))?,
                    benchmark_quantile: float(f[1])?,
                    estimate_mean: float(f[2])?,
                    estimate_std: float(f[3])?,
                    coverage: float(f[4])?,
                    trials: f[5].parse().map_err(|_| bad(line))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CoverageReport { axis, points })
    }

    pub fn point(&self, grid: usize) -> Option<&CoveragePoint> {
        self.points.iter().find(|p| p.grid == grid)
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, var.sqrt())
}

/// Aggregates `errors[trial][k]` and `estimates[trial][k]` into report points.
fn aggregate(
    grid: &[usize],
    errors: &[Vec<f64>],
    estimates: &[Vec<f64>],
    alpha: f64,
) -> Result<Vec<CoveragePoint>> {
    let trials = errors.len();
    grid.iter()
        .enumerate()
        .map(|(k, &g)| {
            let errs: Vec<f64> = errors.iter().map(|e| e[k]).collect();
            let ests: Vec<f64> = estimates.iter().map(|e| e[k]).collect();
            let benchmark_quantile = empirical_quantile(&errs, 1.0 - alpha)?;
            let (estimate_mean, estimate_std) = mean_std(&ests);
            let covered = errs.iter().zip(&ests).filter(|(e, est)| e <= est).count();
            Ok(CoveragePoint {
                grid: g,
                benchmark_quantile,
                estimate_mean,
                estimate_std,
                coverage: covered as f64 / trials as f64,
                trials,
            })
        })
        .collect()
}

fn validate_common(alpha: f64, replicates: usize, trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::invalid("experiments need at least one trial"));
    }
    if replicates == 0 {
        return Err(Error::invalid("bootstrap needs B >= 1 replicates"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Classic-sketch sweep over sketch sizes with `sqrt(m0/m)` extrapolation.
#[derive(Debug, Clone)]
pub struct CsExperimentConfig {
    pub m_grid: Vec<usize>,
    /// Sketch size at which the bootstrap runs; must be the smallest grid point.
    pub m0: usize,
    pub alpha: f64,
    pub replicates: usize,
    pub trials: usize,
    pub norm: NormSpec,
    pub seed: u64,
}

/// For each grid size, solves `trials` independent classic sketches and
/// records the true errors. The `m0` sketch of every trial is also fed to the
/// bootstrap, and its estimate is extrapolated to each grid size.
pub fn run_cs_experiment<F: SketchFactory + ?Sized>(
    problem: &LSProblem,
    sketch: &F,
    config: &CsExperimentConfig,
) -> Result<CoverageReport> {
    validate_common(config.alpha, config.replicates, config.trials)?;
    let grid = &config.m_grid;
    let min = grid
        .iter()
        .copied()
        .min()
        .ok_or_else(|| Error::invalid("empty sketch-size grid"))?;
    if config.m0 != min {
        return Err(Error::invalid(format!(
            "m0={} must be the smallest grid point ({min})",
            config.m0
        )));
    }
    let x_opt = solve_exact_ls(problem)?;

    let per_trial = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let trial_seed = rng::substream(config.seed, trial as u64);
            let sketch_seed = rng::substream(trial_seed, TAG_SKETCH);
            let mut errors = Vec::with_capacity(grid.len());
            let mut eps_init = None;
            for &m in grid {
                let at = |e: Error| e.at(TrialCoord::SketchSize { m, trial });
                let op = sketch
                    .build(m, problem.n(), rng::substream(sketch_seed, m as u64))
                    .map_err(at)?;
                let cs = classic_sketch(problem, &op).map_err(at)?;
                errors.push(norm_eval(&config.norm, (&cs.x_tilde - &x_opt).as_slice()).map_err(at)?);
                if m == config.m0 && eps_init.is_none() {
                    let params = BootstrapParams::new(
                        config.replicates,
                        config.alpha,
                        config.norm.clone(),
                        rng::substream(trial_seed, TAG_BOOTSTRAP),
                    );
                    let est = bootstrap_cs(&cs.a_tilde, &cs.b_tilde, &cs.x_tilde, &params).map_err(at)?;
                    eps_init = Some(est.epsilon);
                }
            }
            let model = ExtrapolationModel::sketch_size(config.m0, eps_init.expect("m0 is in the grid"))?;
            let estimates = grid
                .iter()
                .map(|&m| extrapolate_m(&model, m))
                .collect::<Result<Vec<_>>>()?;
            Ok((errors, estimates))
        })
        .collect::<Result<Vec<_>>>()?;

    let (errors, estimates): (Vec<_>, Vec<_>) = per_trial.into_iter().unzip();
    Ok(CoverageReport {
        axis: GridAxis::SketchSize,
        points: aggregate(grid, &errors, &estimates, config.alpha)?,
    })
}

/// IHS sweep over iterations with two-point geometric extrapolation.
#[derive(Debug, Clone)]
pub struct IhsExperimentConfig {
    pub m: usize,
    pub t_max: usize,
    pub alpha: f64,
    pub replicates: usize,
    pub trials: usize,
    pub norm: NormSpec,
    pub seed: u64,
}

/// Per-trial estimates at iterations `1..=t_max`: the bootstrap values at 1
/// and 2, then the geometric fit through them.
fn ihs_predictions(eps1: f64, eps2: f64, t_max: usize) -> Result<Vec<f64>> {
    let mut out = vec![eps1, eps2];
    if eps1 > 0.0 && eps2 > 0.0 {
        let model = fit_geometric(eps1, eps2)?;
        for i in 3..=t_max {
            out.push(extrapolate_t(&model, i)?);
        }
    } else {
        // no contraction can be read off a zero estimate; carry the last one
        out.extend(std::iter::repeat_n(eps2, t_max - 2));
    }
    Ok(out)
}

/// Runs `trials` independent IHS solves from `x0 = 0`, bootstraps iterations
/// 1 and 2 of each, and compares the geometric predictions with the true
/// error quantiles at every iteration.
pub fn run_ihs_experiment<F: SketchFactory + ?Sized>(
    problem: &LSProblem,
    sketch: &F,
    config: &IhsExperimentConfig,
) -> Result<CoverageReport> {
    validate_common(config.alpha, config.replicates, config.trials)?;
    if config.t_max < 3 {
        return Err(Error::invalid(format!(
            "IHS experiments need t_max >= 3, got {}",
            config.t_max
        )));
    }
    let x_opt = solve_exact_ls(problem)?;

    let per_trial = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let trial_seed = rng::substream(config.seed, trial as u64);
            let mut iter = IhsIterator::new(
                problem,
                sketch,
                config.m,
                DVector::zeros(problem.d()),
                rng::substream(trial_seed, TAG_SKETCH),
            )?;
            let mut errors = Vec::with_capacity(config.t_max);
            let mut boot = [0.0; 2];
            for i in 1..=config.t_max {
                let at = |e: Error| e.at(TrialCoord::Iteration { iteration: i, trial });
                let step = iter.step().map_err(at)?;
                errors.push(norm_eval(&config.norm, (&step.current - &x_opt).as_slice()).map_err(at)?);
                if i <= 2 {
                    let params = BootstrapParams::new(
                        config.replicates,
                        config.alpha,
                        config.norm.clone(),
                        rng::substream(rng::substream(trial_seed, TAG_BOOTSTRAP), i as u64),
                    );
                    boot[i - 1] = bootstrap_ihs(&step.a_tilde, &step.gradient, &step.previous, &step.current, &params)
                        .map_err(at)?
                        .epsilon;
                }
            }
            Ok((errors, ihs_predictions(boot[0], boot[1], config.t_max)?))
        })
        .collect::<Result<Vec<_>>>()?;

    let grid: Vec<usize> = (1..=config.t_max).collect();
    let (errors, estimates): (Vec<_>, Vec<_>) = per_trial.into_iter().unzip();
    Ok(CoverageReport {
        axis: GridAxis::Iteration,
        points: aggregate(&grid, &errors, &estimates, config.alpha)?,
    })
}
