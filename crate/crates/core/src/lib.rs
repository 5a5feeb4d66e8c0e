//! Randomized sketched least-squares solvers with bootstrap error estimates.
//!
//! Given a tall problem `min ||Ax - b||_2`, the crate computes
//!
//! - the classic sketch (CS) `argmin ||S(Ax - b)||`,
//! - the Hessian sketch (HS) and the iterative Hessian sketch (IHS),
//!
//! and attaches to each a bootstrap estimate `eps(alpha)` such that
//! `||x - x_opt|| <= eps(alpha)` holds with probability about `1 - alpha`.
//! The estimators only touch `m x d` sketched data, so their cost is
//! independent of `n`. Estimates can be extrapolated to larger sketch sizes
//! (CS) or later iterations (IHS), and the [`harness`] module measures how
//! well all of this works over many Monte Carlo trials.
//!
//! ```
//! use sketchls::{bootstrap_cs, classic_sketch, gen_synthetic, make_sketch};
//! use sketchls::{BootstrapParams, Conditioning, SketchKind, SyntheticSpec};
//!
//! let problem = gen_synthetic(&SyntheticSpec::new(512, 5, Conditioning::Well, 1)).unwrap();
//! let op = make_sketch(SketchKind::Srht, 100, problem.n(), 7).unwrap();
//! let cs = classic_sketch(&problem, &op).unwrap();
//! let est = bootstrap_cs(&cs.a_tilde, &cs.b_tilde, &cs.x_tilde, &BootstrapParams::default()).unwrap();
//! assert!(est.epsilon >= 0.0);
//! ```

// `!(x > y)` checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod data;
mod error;
pub mod extrapolate;
pub mod harness;
pub mod linalg;
pub mod rng;
pub mod sketch;
pub mod solvers;

pub use nalgebra;

pub use bootstrap::{
    bootstrap_cs, bootstrap_cs_with, bootstrap_ihs, bootstrap_ihs_trace, bootstrap_ihs_with,
    empirical_quantile, resample_indices, BootstrapParams, ErrorEstimate,
};
pub use data::{
    gen_synthetic, gen_synthetic_parts, load_libsvm, load_problem, read_problem, write_problem,
    Conditioning, SyntheticParts, SyntheticSpec,
};
pub use error::{Error, Result, TrialCoord};
pub use extrapolate::{extrapolate_m, extrapolate_t, fit_geometric, iterations_needed, ExtrapolationModel};
pub use harness::{
    run_cs_experiment, run_ihs_experiment, CoveragePoint, CoverageReport, CsExperimentConfig,
    GridAxis, IhsExperimentConfig,
};
pub use linalg::{norm_eval, solve_exact_ls, LSProblem, NormSpec};
pub use sketch::{apply_sketch, make_sketch, IdentityEmbedding, SketchFactory, SketchKind, SketchOperator};
pub use solvers::{
    classic_sketch, hessian_sketch, ihs_run, ihs_run_with, CSResult, IHSTrace, IhsIterator, IhsStep,
    QrSolver, SubproblemSolver,
};
