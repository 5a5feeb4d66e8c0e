//! Dense least-squares primitives: the problem type, Householder QR solves,
//! and the norm abstraction every error measurement goes through.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Dyn, QR};

use crate::error::{Error, Result};

/// Relative tolerance on the diagonal of `R` below which a factorization is
/// treated as rank-deficient.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// A full-rank overdetermined least-squares problem `min ||Ax - b||_2`.
#[derive(Debug, Clone)]
pub struct LSProblem {
    a: DMatrix<f64>,
    b: DVector<f64>,
    atb: DVector<f64>,
}

impl LSProblem {
    /// Validates shape, finiteness and full column rank.
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let (n, d) = a.shape();
        if d == 0 || n < d {
            return Err(Error::invalid(format!(
                "design matrix must satisfy n >= d >= 1, got {n}x{d}"
            )));
        }
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                context: "response length",
                expected: n,
                actual: b.len(),
            });
        }
        if !a.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("design matrix"));
        }
        if !b.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("response vector"));
        }
        QrFactor::new(&a, || "design matrix".to_owned())?;
        let atb = a.tr_mul(&b);
        Ok(LSProblem { a, b, atb })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// Cached `A'b`.
    pub fn atb(&self) -> &DVector<f64> {
        &self.atb
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn d(&self) -> usize {
        self.a.ncols()
    }

    /// `A'(Ax - b)`.
    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let residual = &self.a * x - &self.b;
        self.a.tr_mul(&residual)
    }
}

/// Householder QR of a tall matrix with the rank check applied.
///
/// Serves both least-squares solves against the factored matrix and solves
/// against its Gram matrix `M'M = R'R`, which is how sketched Hessian systems
/// are handled without ever forming `M'M`.
pub struct QrFactor {
    qr: QR<f64, Dyn, Dyn>,
    r: DMatrix<f64>,
}

impl QrFactor {
    /// Factors `m`; `context` names the matrix in the rank error.
    pub fn new(m: &DMatrix<f64>, context: impl FnOnce() -> String) -> Result<Self> {
        let (rows, cols) = m.shape();
        let tolerance = RANK_TOLERANCE * m.norm();
        if rows < cols {
            return Err(Error::RankDeficient {
                context: format!("{} ({rows}x{cols}, fewer rows than columns)", context()),
                min_diag: 0.0,
                tolerance,
            });
        }
        let qr = m.clone().qr();
        let r = qr.r();
        let min_diag = r.diagonal().iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
        if !(min_diag > tolerance) {
            return Err(Error::RankDeficient {
                context: context(),
                min_diag,
                tolerance,
            });
        }
        Ok(QrFactor { qr, r })
    }

    pub fn ncols(&self) -> usize {
        self.r.ncols()
    }

    /// `argmin_x ||Mx - rhs||_2`.
    pub fn solve_least_squares(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let d = self.ncols();
        let mut qtb = rhs.clone();
        self.qr.q_tr_mul(&mut qtb);
        let head = qtb.rows(0, d).into_owned();
        self.r
            .solve_upper_triangular(&head)
            .expect("R diagonal checked nonzero")
    }

    /// Solves `(M'M) x = rhs` as `R'R x = rhs`.
    pub fn solve_gram(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let y = self
            .r
            .tr_solve_upper_triangular(rhs)
            .expect("R diagonal checked nonzero");
        self.r
            .solve_upper_triangular(&y)
            .expect("R diagonal checked nonzero")
    }
}

/// Exact solution `x_opt` of the full problem via Householder QR.
pub fn solve_exact_ls(problem: &LSProblem) -> Result<DVector<f64>> {
    let factor = QrFactor::new(problem.a(), || "exact least-squares solve".to_owned())?;
    Ok(factor.solve_least_squares(problem.b()))
}

/// User-supplied norm evaluator.
pub type NormFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// The norm used to measure errors in `R^d`.
#[derive(Clone, Default)]
pub enum NormSpec {
    L1,
    #[default]
    L2,
    LInf,
    /// `l_p` norm, `p >= 1`.
    Lp(f64),
    /// Arbitrary norm; the caller is responsible for it being one.
    Custom {
        name: String,
        eval: Arc<NormFn>,
    },
}

impl NormSpec {
    pub fn custom(name: impl Into<String>, eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        NormSpec::Custom {
            name: name.into(),
            eval: Arc::new(eval),
        }
    }

    pub fn eval(&self, v: &[f64]) -> Result<f64> {
        norm_eval(self, v)
    }
}

impl fmt::Debug for NormSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for NormSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormSpec::L1 => f.write_str("l1"),
            NormSpec::L2 => f.write_str("l2"),
            NormSpec::LInf => f.write_str("linf"),
            NormSpec::Lp(p) => write!(f, "lp:{p}"),
            NormSpec::Custom { name, .. } => write!(f, "custom:{name}"),
        }
    }
}

impl FromStr for NormSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(NormSpec::L1),
            "l2" => Ok(NormSpec::L2),
            "linf" | "inf" => Ok(NormSpec::LInf),
            other => {
                let p = other
                    .strip_prefix("lp:")
                    .and_then(|p| p.parse::<f64>().ok())
                    .ok_or_else(|| Error::invalid(format!("unknown norm '{s}' (expected l1, l2, linf or lp:<p>)")))?;
                if !(p >= 1.0) || p.is_nan() {
                    return Err(Error::invalid(format!("lp norm requires p >= 1, got {p}")));
                }
                if p.is_infinite() {
                    return Ok(NormSpec::LInf);
                }
                Ok(NormSpec::Lp(p))
            }
        }
    }
}

/// Evaluates `spec` at `v`.
pub fn norm_eval(spec: &NormSpec, v: &[f64]) -> Result<f64> {
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("norm argument"));
    }
    let value = match spec {
        NormSpec::L1 => v.iter().map(|x| x.abs()).sum(),
        NormSpec::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        NormSpec::LInf => v.iter().fold(0.0, |acc: f64, x| acc.max(x.abs())),
        NormSpec::Lp(p) => {
            let p = *p;
            if !(p >= 1.0) {
                return Err(Error::invalid(format!("lp norm requires p >= 1, got {p}")));
            }
            // scale by the max entry so |x|^p cannot overflow
            let scale = v.iter().fold(0.0, |acc: f64, x| acc.max(x.abs()));
            if scale == 0.0 {
                0.0
            } else {
                scale * v.iter().map(|x| (x.abs() / scale).powf(p)).sum::<f64>().powf(1.0 / p)
            }
        }
        NormSpec::Custom { name, eval } => {
            let value = eval(v);
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::invalid(format!(
                    "custom norm '{name}' returned {value}, expected a finite nonnegative value"
                )));
            }
            value
        }
    };
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(a: DMatrix<f64>, b: &[f64]) -> LSProblem {
        LSProblem::new(a, DVector::from_column_slice(b)).unwrap()
    }

    #[test]
    fn identity_problem() {
        let p = problem(DMatrix::identity(2, 2), &[3.0, 4.0]);
        let x = solve_exact_ls(&p).unwrap();
        assert!((x[0] - 3.0).abs() < 1e-15 && (x[1] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn consistent_column() {
        let p = problem(DMatrix::from_column_slice(2, 1, &[1.0, 1.0]), &[2.0, 2.0]);
        let x = solve_exact_ls(&p).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rank_deficient_is_rejected() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let err = LSProblem::new(a, DVector::from_element(3, 1.0)).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }), "{err}");
    }

    #[test]
    fn shape_errors() {
        assert!(LSProblem::new(DMatrix::zeros(1, 2), DVector::zeros(1)).is_err());
        assert!(LSProblem::new(DMatrix::identity(2, 2), DVector::zeros(3)).is_err());
        let mut a = DMatrix::identity(2, 2);
        a[(0, 1)] = f64::NAN;
        assert!(matches!(
            LSProblem::new(a, DVector::zeros(2)),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn norm_examples() {
        assert_eq!(norm_eval(&NormSpec::LInf, &[1.0, -3.0, 2.0]).unwrap(), 3.0);
        assert_eq!(norm_eval(&NormSpec::L2, &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(norm_eval(&NormSpec::L1, &[1.0, 1.0, 1.0]).unwrap(), 3.0);
        assert!((norm_eval(&NormSpec::Lp(2.0), &[3.0, 4.0]).unwrap() - 5.0).abs() < 1e-14);
        assert!(norm_eval(&NormSpec::L2, &[f64::INFINITY]).is_err());
        assert!(norm_eval(&NormSpec::Lp(0.5), &[1.0]).is_err());
    }

    #[test]
    fn custom_norm_is_checked() {
        let weighted = NormSpec::custom("w", |v| v.iter().map(|x| 2.0 * x.abs()).sum());
        assert_eq!(weighted.eval(&[1.0, -1.0]).unwrap(), 4.0);
        let broken = NormSpec::custom("neg", |_| -1.0);
        assert!(broken.eval(&[1.0]).is_err());
    }

    #[test]
    fn parse_norms() {
        assert!(matches!("l1".parse::<NormSpec>().unwrap(), NormSpec::L1));
        assert!(matches!("LINF".parse::<NormSpec>().unwrap(), NormSpec::LInf));
        assert!(matches!("lp:3".parse::<NormSpec>().unwrap(), NormSpec::Lp(p) if p == 3.0));
        assert!("lp:0.5".parse::<NormSpec>().is_err());
        assert!("l7".parse::<NormSpec>().is_err());
    }
}
