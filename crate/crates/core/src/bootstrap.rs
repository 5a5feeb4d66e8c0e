//! Bootstrap a-posteriori error estimates for CS and IHS.
//!
//! Both estimators take only `m x d` and `d`-sized inputs from a single
//! sketched run; their cost does not depend on `n`. Replicates are computed
//! independently (in parallel when a rayon pool has more than one worker)
//! and each replicate `l` draws from substream `l` of the caller's seed, so
//! the result is identical under any schedule.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{norm_eval, NormSpec};
use crate::rng;
use crate::solvers::{IHSTrace, QrSolver, SubproblemSolver};

/// Resample retries before falling back to a minimum-norm solve.
pub const MAX_RESAMPLE_RETRIES: u64 = 10;

/// Number of bootstrap samples used when none is specified.
pub const DEFAULT_REPLICATES: usize = 20;

/// Settings shared by both estimators.
#[derive(Debug, Clone)]
pub struct BootstrapParams {
    /// `B`, the number of bootstrap replicates.
    pub replicates: usize,
    /// The estimate targets the `1 - alpha` quantile.
    pub alpha: f64,
    pub norm: NormSpec,
    pub seed: u64,
}

impl Default for BootstrapParams {
    fn default() -> Self {
        BootstrapParams {
            replicates: DEFAULT_REPLICATES,
            alpha: 0.05,
            norm: NormSpec::L2,
            seed: 0,
        }
    }
}

impl BootstrapParams {
    pub fn new(replicates: usize, alpha: f64, norm: NormSpec, seed: u64) -> Self {
        BootstrapParams {
            replicates,
            alpha,
            norm,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return Err(Error::invalid("bootstrap needs B >= 1 replicates"));
        }
        check_level(self.alpha, "alpha")
    }
}

fn check_level(level: f64, what: &str) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("{what} must lie in (0, 1), got {level}")));
    }
    Ok(())
}

/// A bootstrap error estimate together with its replicate values.
#[derive(Debug, Clone)]
pub struct ErrorEstimate {
    /// `quantile(replicates; 1 - alpha)`.
    pub epsilon: f64,
    pub alpha: f64,
    /// Replicate errors in replicate order (unsorted).
    pub replicates: Vec<f64>,
    pub norm: NormSpec,
    pub seed: u64,
    /// Replicates whose first resample was rank-deficient.
    pub degenerate_count: usize,
}

impl ErrorEstimate {
    /// `B`.
    pub fn num_replicates(&self) -> usize {
        self.replicates.len()
    }

    /// Re-reads the estimate at a different `alpha` from the same replicates.
    pub fn at_alpha(&self, alpha: f64) -> Result<f64> {
        check_level(alpha, "alpha")?;
        empirical_quantile(&self.replicates, 1.0 - alpha)
    }
}

/// Smallest element `c` of `values` with `#{v <= c} / k >= level`.
pub fn empirical_quantile(values: &[f64], level: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("quantile of an empty set"));
    }
    check_level(level, "quantile level")?;
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("quantile input"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len();
    // the element at sorted position r-1 has at least r values <= it, and
    // anything strictly smaller has at most r-1; so the answer sits at the
    // first r meeting the threshold
    let r = (1..=k)
        .find(|&r| r as f64 / k as f64 >= level)
        .expect("r = k always satisfies level < 1");
    Ok(sorted[r - 1])
}

/// `m` i.i.d. uniform draws from `{0, ..., m-1}`.
pub fn resample_indices<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Vec<usize> {
    (0..m).map(|_| rng.random_range(0..m)).collect()
}

fn gather_rows(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), a.ncols(), |i, j| a[(idx[i], j)])
}

/// Runs replicate `l`: resample, attempt a solve, retry on rank deficiency,
/// and fall back to the minimum-norm answer after the last retry.
fn replicate<S, F>(seed: u64, l: usize, m: usize, solve: S, fallback: F) -> Result<(DVector<f64>, bool)>
where
    S: Fn(&[usize]) -> Result<DVector<f64>>,
    F: Fn(&[usize]) -> DVector<f64>,
{
    let base = rng::substream(seed, l as u64);
    let mut idx = Vec::new();
    for attempt in 0..=MAX_RESAMPLE_RETRIES {
        idx = resample_indices(m, &mut rng::substream_rng(base, attempt));
        match solve(&idx) {
            Ok(x) => return Ok((x, attempt > 0)),
            Err(Error::RankDeficient { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok((fallback(&idx), true))
}

fn pinv_tolerance(sv: &DVector<f64>, rows: usize, cols: usize) -> f64 {
    let max = sv.iter().fold(0.0f64, |acc, v| acc.max(*v));
    max * rows.max(cols) as f64 * f64::EPSILON
}

/// Minimum-norm least-squares solution via SVD.
fn min_norm_least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let eps = pinv_tolerance(&svd.singular_values, a.nrows(), a.ncols());
    svd.solve(b, eps).expect("U and V were requested")
}

/// Minimum-norm solution of `(a'a) x = rhs` via the SVD of `a`.
fn min_norm_gram_solve(a: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(false, true);
    let eps = pinv_tolerance(&svd.singular_values, a.nrows(), a.ncols());
    let v_t = svd.v_t.expect("V requested");
    let mut coeff = &v_t * rhs;
    for (c, s) in coeff.iter_mut().zip(svd.singular_values.iter()) {
        *c = if *s > eps { *c / (s * s) } else { 0.0 };
    }
    v_t.tr_mul(&coeff)
}

fn check_finite(name: &'static str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(name))
    }
}

fn assemble(params: &BootstrapParams, results: Vec<(f64, bool)>) -> Result<ErrorEstimate> {
    let degenerate_count = results.iter().filter(|(_, d)| *d).count();
    let replicates: Vec<f64> = results.into_iter().map(|(e, _)| e).collect();
    let epsilon = empirical_quantile(&replicates, 1.0 - params.alpha)?;
    Ok(ErrorEstimate {
        epsilon,
        alpha: params.alpha,
        replicates,
        norm: params.norm.clone(),
        seed: params.seed,
        degenerate_count,
    })
}

/// Bootstrap estimate of `||x_tilde - x_opt||` from one classic-sketch run.
pub fn bootstrap_cs(
    a_tilde: &DMatrix<f64>,
    b_tilde: &DVector<f64>,
    x_tilde: &DVector<f64>,
    params: &BootstrapParams,
) -> Result<ErrorEstimate> {
    bootstrap_cs_with(&QrSolver, a_tilde, b_tilde, x_tilde, params)
}

/// [`bootstrap_cs`] with a caller-chosen subproblem solver; `x_tilde` is
/// passed as the warm start of every replicate solve.
pub fn bootstrap_cs_with<S: SubproblemSolver + ?Sized>(
    solver: &S,
    a_tilde: &DMatrix<f64>,
    b_tilde: &DVector<f64>,
    x_tilde: &DVector<f64>,
    params: &BootstrapParams,
) -> Result<ErrorEstimate> {
    params.validate()?;
    let (m, d) = a_tilde.shape();
    if b_tilde.len() != m {
        return Err(Error::DimensionMismatch {
            context: "sketched response length",
            expected: m,
            actual: b_tilde.len(),
        });
    }
    if x_tilde.len() != d {
        return Err(Error::DimensionMismatch {
            context: "sketched solution length",
            expected: d,
            actual: x_tilde.len(),
        });
    }
    check_finite("sketched matrix", a_tilde.as_slice())?;
    check_finite("sketched response", b_tilde.as_slice())?;
    check_finite("sketched solution", x_tilde.as_slice())?;

    let results = (0..params.replicates)
        .into_par_iter()
        .map(|l| {
            let (x_star, degenerate) = replicate(
                params.seed,
                l,
                m,
                |idx| {
                    let a_star = gather_rows(a_tilde, idx);
                    let b_star = DVector::from_fn(m, |i, _| b_tilde[idx[i]]);
                    solver.least_squares(&a_star, &b_star, Some(x_tilde))
                },
                |idx| {
                    let a_star = gather_rows(a_tilde, idx);
                    let b_star = DVector::from_fn(m, |i, _| b_tilde[idx[i]]);
                    min_norm_least_squares(&a_star, &b_star)
                },
            )?;
            let err = norm_eval(&params.norm, (x_star - x_tilde).as_slice())?;
            Ok((err, degenerate))
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(params, results)
}

/// Bootstrap estimate of `||x_t - x_opt||` from the last two iterations of
/// one IHS run.
pub fn bootstrap_ihs(
    a_tilde_t: &DMatrix<f64>,
    g_prev: &DVector<f64>,
    x_prev: &DVector<f64>,
    x_last: &DVector<f64>,
    params: &BootstrapParams,
) -> Result<ErrorEstimate> {
    bootstrap_ihs_with(&QrSolver, a_tilde_t, g_prev, x_prev, x_last, params)
}

/// [`bootstrap_ihs`] on the fields of a finished trace.
pub fn bootstrap_ihs_trace(trace: &IHSTrace, params: &BootstrapParams) -> Result<ErrorEstimate> {
    bootstrap_ihs(
        &trace.a_tilde_t,
        &trace.g_prev,
        trace.second_to_last(),
        trace.last(),
        params,
    )
}

/// [`bootstrap_ihs`] with a caller-chosen subproblem solver. Each replicate
/// solves `(A*'A*)(x - x_prev) = -g_prev`, warm-started at `x_last - x_prev`.
pub fn bootstrap_ihs_with<S: SubproblemSolver + ?Sized>(
    solver: &S,
    a_tilde_t: &DMatrix<f64>,
    g_prev: &DVector<f64>,
    x_prev: &DVector<f64>,
    x_last: &DVector<f64>,
    params: &BootstrapParams,
) -> Result<ErrorEstimate> {
    params.validate()?;
    let (m, d) = a_tilde_t.shape();
    for (context, len) in [
        ("IHS gradient length", g_prev.len()),
        ("IHS previous iterate length", x_prev.len()),
        ("IHS last iterate length", x_last.len()),
    ] {
        if len != d {
            return Err(Error::DimensionMismatch {
                context,
                expected: d,
                actual: len,
            });
        }
    }
    check_finite("sketched matrix", a_tilde_t.as_slice())?;
    check_finite("IHS gradient", g_prev.as_slice())?;
    check_finite("IHS iterates", x_prev.as_slice())?;
    check_finite("IHS iterates", x_last.as_slice())?;

    let rhs = -g_prev;
    let warm = x_last - x_prev;
    let results = (0..params.replicates)
        .into_par_iter()
        .map(|l| {
            let (delta, degenerate) = replicate(
                params.seed,
                l,
                m,
                |idx| solver.gram_solve(&gather_rows(a_tilde_t, idx), &rhs, Some(&warm)),
                |idx| min_norm_gram_solve(&gather_rows(a_tilde_t, idx), &rhs),
            )?;
            let x_star = x_prev + delta;
            let err = norm_eval(&params.norm, (x_star - x_last).as_slice())?;
            Ok((err, degenerate))
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(params, results)
}
