//! Classic sketch (CS), Hessian sketch (HS) and iterative Hessian sketch (IHS).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{LSProblem, QrFactor};
use crate::rng;
use crate::sketch::{SketchFactory, SketchKind, SketchOperator};

/// Solver for the small `m x d` subproblems that the sketched algorithms and
/// the bootstrap produce.
///
/// Every method receives an optional initial point. Direct factorization
/// ignores it; an iterative implementation can use it as a warm start.
pub trait SubproblemSolver: Sync {
    /// `argmin_x ||a x - b||_2`.
    fn least_squares(
        &self,
        a: &DMatrix<f64>,
        b: &DVector<f64>,
        warm_start: Option<&DVector<f64>>,
    ) -> Result<DVector<f64>>;

    /// Solves `(a'a) x = rhs`.
    fn gram_solve(
        &self,
        a: &DMatrix<f64>,
        rhs: &DVector<f64>,
        warm_start: Option<&DVector<f64>>,
    ) -> Result<DVector<f64>>;
}

/// Householder QR on the sketched matrix itself (never on its Gram matrix).
#[derive(Debug, Clone, Copy, Default)]
pub struct QrSolver;

impl SubproblemSolver for QrSolver {
    fn least_squares(
        &self,
        a: &DMatrix<f64>,
        b: &DVector<f64>,
        _warm_start: Option<&DVector<f64>>,
    ) -> Result<DVector<f64>> {
        Ok(QrFactor::new(a, || "sketched least-squares subproblem".to_owned())?.solve_least_squares(b))
    }

    fn gram_solve(
        &self,
        a: &DMatrix<f64>,
        rhs: &DVector<f64>,
        _warm_start: Option<&DVector<f64>>,
    ) -> Result<DVector<f64>> {
        Ok(QrFactor::new(a, || "sketched Hessian subproblem".to_owned())?.solve_gram(rhs))
    }
}

/// Output of one classic-sketch solve: the solution and the sketched data
/// the CS bootstrap consumes.
#[derive(Debug, Clone)]
pub struct CSResult {
    pub x_tilde: DVector<f64>,
    pub a_tilde: DMatrix<f64>,
    pub b_tilde: DVector<f64>,
}

fn check_operator(problem: &LSProblem, op: &SketchOperator) -> Result<()> {
    if op.n() != problem.n() {
        return Err(Error::DimensionMismatch {
            context: "sketch ambient dimension",
            expected: problem.n(),
            actual: op.n(),
        });
    }
    if op.m() <= problem.d() {
        return Err(Error::invalid(format!(
            "sketch size m={} must exceed d={}",
            op.m(),
            problem.d()
        )));
    }
    Ok(())
}

fn seed_context(err: Error, what: &str, op: &SketchOperator) -> Error {
    match err {
        Error::RankDeficient {
            min_diag,
            tolerance,
            ..
        } => Error::RankDeficient {
            context: format!("{what} with {} sketch, seed {}", op.kind(), op.seed()),
            min_diag,
            tolerance,
        },
        other => other,
    }
}

/// `x_tilde = argmin ||S(Ax - b)||_2`.
pub fn classic_sketch(problem: &LSProblem, op: &SketchOperator) -> Result<CSResult> {
    check_operator(problem, op)?;
    let a_tilde = op.apply(problem.a())?;
    let b_tilde = op.apply_vec(problem.b())?;
    let x_tilde = QrSolver
        .least_squares(&a_tilde, &b_tilde, None)
        .map_err(|e| seed_context(e, "classic sketch", op))?;
    Ok(CSResult {
        x_tilde,
        a_tilde,
        b_tilde,
    })
}

/// `argmin 1/2 ||SAx||^2 - <A'b, x>`, i.e. the solution of `(A~'A~) x = A'b`.
pub fn hessian_sketch(problem: &LSProblem, op: &SketchOperator) -> Result<DVector<f64>> {
    check_operator(problem, op)?;
    let a_tilde = op.apply(problem.a())?;
    QrSolver
        .gram_solve(&a_tilde, problem.atb(), None)
        .map_err(|e| seed_context(e, "Hessian sketch", op))
}

/// What IHS error estimation needs from a finished run.
#[derive(Debug, Clone)]
pub struct IHSTrace {
    /// `x_0, ..., x_t`.
    pub iterates: Vec<DVector<f64>>,
    /// Sketch of the last iteration, `S_t A`.
    pub a_tilde_t: DMatrix<f64>,
    /// `g_{t-1} = A'(A x_{t-1} - b)`.
    pub g_prev: DVector<f64>,
    pub t: usize,
}

impl IHSTrace {
    pub fn last(&self) -> &DVector<f64> {
        &self.iterates[self.t]
    }

    pub fn second_to_last(&self) -> &DVector<f64> {
        &self.iterates[self.t - 1]
    }
}

/// State after one IHS iteration.
#[derive(Debug, Clone)]
pub struct IhsStep {
    /// 1-based iteration number `i`.
    pub iteration: usize,
    pub a_tilde: DMatrix<f64>,
    /// `g_{i-1}`.
    pub gradient: DVector<f64>,
    /// `x_{i-1}`.
    pub previous: DVector<f64>,
    /// `x_i`.
    pub current: DVector<f64>,
}

/// Step-by-step IHS driver. Iteration `i` draws its sketch from substream
/// `i` of `seed`, so sketches across iterations are independent.
pub struct IhsIterator<'a, F: SketchFactory + ?Sized> {
    problem: &'a LSProblem,
    factory: &'a F,
    m: usize,
    seed: u64,
    iteration: usize,
    x: DVector<f64>,
}

impl<'a, F: SketchFactory + ?Sized> IhsIterator<'a, F> {
    pub fn new(problem: &'a LSProblem, factory: &'a F, m: usize, x0: DVector<f64>, seed: u64) -> Result<Self> {
        if x0.len() != problem.d() {
            return Err(Error::DimensionMismatch {
                context: "IHS initial point",
                expected: problem.d(),
                actual: x0.len(),
            });
        }
        if m <= problem.d() {
            return Err(Error::invalid(format!(
                "sketch size m={m} must exceed d={}",
                problem.d()
            )));
        }
        Ok(IhsIterator {
            problem,
            factory,
            m,
            seed,
            iteration: 0,
            x: x0,
        })
    }

    pub fn current(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Runs one update `x_{i} = x_{i-1} - (A~_i'A~_i)^{-1} g_{i-1}`.
    pub fn step(&mut self) -> Result<IhsStep> {
        let i = self.iteration + 1;
        let op = self
            .factory
            .build(self.m, self.problem.n(), rng::substream(self.seed, i as u64))?;
        let a_tilde = op.apply(self.problem.a())?;
        let gradient = self.problem.gradient(&self.x);
        let delta = QrSolver
            .gram_solve(&a_tilde, &(-&gradient), None)
            .map_err(|e| match e {
                Error::RankDeficient {
                    min_diag,
                    tolerance,
                    ..
                } => Error::RankDeficient {
                    context: format!("IHS iteration {i}, sketch seed {}", op.seed()),
                    min_diag,
                    tolerance,
                },
                other => other,
            })?;
        let next = &self.x + delta;
        let previous = std::mem::replace(&mut self.x, next);
        self.iteration = i;
        Ok(IhsStep {
            iteration: i,
            a_tilde,
            gradient,
            previous,
            current: self.x.clone(),
        })
    }
}

/// Runs `t` IHS iterations from `x0` using sketches of family `kind`.
pub fn ihs_run(
    problem: &LSProblem,
    kind: SketchKind,
    m: usize,
    t: usize,
    x0: DVector<f64>,
    seed: u64,
) -> Result<IHSTrace> {
    ihs_run_with(problem, &kind, m, t, x0, seed)
}

/// [`ihs_run`] with an arbitrary sketch source.
pub fn ihs_run_with<F: SketchFactory + ?Sized>(
    problem: &LSProblem,
    factory: &F,
    m: usize,
    t: usize,
    x0: DVector<f64>,
    seed: u64,
) -> Result<IHSTrace> {
    if t == 0 {
        return Err(Error::invalid("IHS needs at least one iteration"));
    }
    let mut iter = IhsIterator::new(problem, factory, m, x0, seed)?;
    let mut iterates = vec![iter.current().clone()];
    let mut last = None;
    for _ in 0..t {
        let step = iter.step()?;
        iterates.push(step.current.clone());
        last = Some(step);
    }
    let last = last.expect("t >= 1");
    Ok(IHSTrace {
        iterates,
        a_tilde_t: last.a_tilde,
        g_prev: last.gradient,
        t,
    })
}
