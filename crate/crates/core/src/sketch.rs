//! Random sketching operators `S` in `R^{m x n}` with `E[S'S] = I_n`.
//!
//! Four families are provided. Gaussian and Rademacher sketches are
//! materialized as dense `m x n` matrices. SRHT and uniform row sampling are
//! stored implicitly (signs plus sampled row indices) and applied in
//! `O(n k log n)` and `O(m k)` time respectively for `k` columns.
//!
//! The bootstrap consistency theory assumes i.i.d. sketch entries with
//! `E[s^4] > 1`. Rademacher entries (`E[s^4] = 1`) and SRHT (dependent
//! entries) fall outside that model. Both are still offered because SRHT is
//! the workhorse in practice; coverage for them is an empirical matter.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SketchKind {
    /// i.i.d. `N(0, 1/m)` entries.
    Gaussian,
    /// i.i.d. `+-1/sqrt(m)` entries.
    Rademacher,
    /// Subsampled randomized Hadamard transform.
    Srht,
    /// Uniform row sampling with replacement, scaled by `sqrt(n/m)`.
    RowSample,
}

impl SketchKind {
    pub const ALL: [SketchKind; 4] = [
        SketchKind::Gaussian,
        SketchKind::Rademacher,
        SketchKind::Srht,
        SketchKind::RowSample,
    ];
}

impl fmt::Display for SketchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SketchKind::Gaussian => "gaussian",
            SketchKind::Rademacher => "rademacher",
            SketchKind::Srht => "srht",
            SketchKind::RowSample => "rowsample",
        })
    }
}

impl FromStr for SketchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(SketchKind::Gaussian),
            "rademacher" => Ok(SketchKind::Rademacher),
            "srht" => Ok(SketchKind::Srht),
            "rowsample" => Ok(SketchKind::RowSample),
            _ => Err(Error::invalid(format!(
                "unknown sketch '{s}' (expected gaussian, rademacher, srht or rowsample)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
enum Repr {
    Dense(DMatrix<f64>),
    Srht {
        padded_n: usize,
        signs: Vec<f64>,
        rows: Vec<usize>,
    },
    RowSample {
        rows: Vec<usize>,
        scale: f64,
    },
}

/// An immutable sketching operator. Two operators built from the same
/// `(kind, m, n, seed)` are identical.
#[derive(Debug, Clone)]
pub struct SketchOperator {
    kind: SketchKind,
    m: usize,
    n: usize,
    seed: u64,
    repr: Repr,
}

/// Builds a sketch of the given family.
pub fn make_sketch(kind: SketchKind, m: usize, n: usize, seed: u64) -> Result<SketchOperator> {
    check_sizes(m, n)?;
    let mut rng = rng::stream(seed);
    let scale = 1.0 / (m as f64).sqrt();
    let repr = match kind {
        SketchKind::Gaussian => Repr::Dense(DMatrix::from_fn(m, n, |_, _| {
            rng.sample::<f64, _>(StandardNormal) * scale
        })),
        SketchKind::Rademacher => Repr::Dense(DMatrix::from_fn(m, n, |_, _| {
            if rng.random::<bool>() {
                scale
            } else {
                -scale
            }
        })),
        SketchKind::Srht => {
            let padded_n = n.next_power_of_two();
            let signs = (0..padded_n)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            let rows = (0..m).map(|_| rng.random_range(0..padded_n)).collect();
            Repr::Srht {
                padded_n,
                signs,
                rows,
            }
        }
        SketchKind::RowSample => {
            let rows = (0..m).map(|_| rng.random_range(0..n)).collect();
            Repr::RowSample {
                rows,
                scale: (n as f64 / m as f64).sqrt(),
            }
        }
    };
    Ok(SketchOperator {
        kind,
        m,
        n,
        seed,
        repr,
    })
}

fn check_sizes(m: usize, n: usize) -> Result<()> {
    if m == 0 || m > n {
        return Err(Error::invalid(format!(
            "sketch size must satisfy 1 <= m <= n, got m={m}, n={n}"
        )));
    }
    Ok(())
}

impl SketchOperator {
    /// Row-sampling operator with explicit row indices (scaled by
    /// `sqrt(n/m)`). With `rows = 0..n` this is the identity embedding.
    pub fn row_sample_from_indices(n: usize, rows: Vec<usize>) -> Result<Self> {
        let m = rows.len();
        check_sizes(m, n)?;
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(Error::invalid(format!("row index {bad} out of range for n={n}")));
        }
        Ok(SketchOperator {
            kind: SketchKind::RowSample,
            m,
            n,
            seed: 0,
            repr: Repr::RowSample {
                rows,
                scale: (n as f64 / m as f64).sqrt(),
            },
        })
    }

    /// `S = I_n`.
    pub fn identity(n: usize) -> Result<Self> {
        Self::row_sample_from_indices(n, (0..n).collect())
    }

    /// SRHT with explicit signs (length `padded_n`) and sampled rows.
    pub fn srht_from_parts(n: usize, signs: Vec<f64>, rows: Vec<usize>) -> Result<Self> {
        let m = rows.len();
        check_sizes(m, n)?;
        let padded_n = n.next_power_of_two();
        if signs.len() != padded_n || signs.iter().any(|s| s.abs() != 1.0) {
            return Err(Error::invalid(format!(
                "SRHT needs {padded_n} signs in {{-1, +1}}"
            )));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= padded_n) {
            return Err(Error::invalid(format!(
                "row index {bad} out of range for padded_n={padded_n}"
            )));
        }
        Ok(SketchOperator {
            kind: SketchKind::Srht,
            m,
            n,
            seed: 0,
            repr: Repr::Srht {
                padded_n,
                signs,
                rows,
            },
        })
    }

    pub fn kind(&self) -> SketchKind {
        self.kind
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// SRHT only.
    pub fn padded_n(&self) -> Option<usize> {
        match &self.repr {
            Repr::Srht { padded_n, .. } => Some(*padded_n),
            _ => None,
        }
    }

    /// SRHT only.
    pub fn signs(&self) -> Option<&[f64]> {
        match &self.repr {
            Repr::Srht { signs, .. } => Some(signs),
            _ => None,
        }
    }

    /// SRHT and row sampling only.
    pub fn row_indices(&self) -> Option<&[usize]> {
        match &self.repr {
            Repr::Srht { rows, .. } | Repr::RowSample { rows, .. } => Some(rows),
            Repr::Dense(_) => None,
        }
    }

    /// `S M` for `M` with exactly `n` rows.
    pub fn apply(&self, mat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if mat.nrows() != self.n {
            return Err(Error::DimensionMismatch {
                context: "sketch input rows",
                expected: self.n,
                actual: mat.nrows(),
            });
        }
        let k = mat.ncols();
        Ok(match &self.repr {
            Repr::Dense(s) => s * mat,
            Repr::RowSample { rows, scale } => {
                DMatrix::from_fn(self.m, k, |i, j| scale * mat[(rows[i], j)])
            }
            Repr::Srht {
                padded_n,
                signs,
                rows,
            } => {
                let scale = 1.0 / (self.m as f64).sqrt();
                let mut out = DMatrix::zeros(self.m, k);
                let mut buf = vec![0.0; *padded_n];
                for j in 0..k {
                    let col = mat.column(j);
                    for (i, slot) in buf.iter_mut().enumerate() {
                        *slot = if i < self.n { signs[i] * col[i] } else { 0.0 };
                    }
                    fwht(&mut buf);
                    for (i, &r) in rows.iter().enumerate() {
                        out[(i, j)] = scale * buf[r];
                    }
                }
                out
            }
        })
    }

    /// `S v`.
    pub fn apply_vec(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if let Repr::Dense(s) = &self.repr {
            if v.len() != self.n {
                return Err(Error::DimensionMismatch {
                    context: "sketch input rows",
                    expected: self.n,
                    actual: v.len(),
                });
            }
            return Ok(s * v);
        }
        let out = self.apply(&DMatrix::from_column_slice(v.len(), 1, v.as_slice()))?;
        Ok(DVector::from_column_slice(out.as_slice()))
    }

    /// Dense `m x n` matrix of the operator.
    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.repr {
            Repr::Dense(s) => s.clone(),
            _ => self
                .apply(&DMatrix::identity(self.n, self.n))
                .expect("identity has n rows"),
        }
    }
}

/// Free-function form of [`SketchOperator::apply`].
pub fn apply_sketch(op: &SketchOperator, mat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    op.apply(mat)
}

/// In-place unnormalized fast Walsh-Hadamard transform; `data.len()` must be
/// a power of two.
pub fn fwht(data: &mut [f64]) {
    let len = data.len();
    assert!(len.is_power_of_two(), "fwht length {len} is not a power of two");
    let mut half = 1;
    while half < len {
        for block in data.chunks_exact_mut(2 * half) {
            let (lo, hi) = block.split_at_mut(half);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        half *= 2;
    }
}

/// Source of sketches for the solvers and the experiment harness.
pub trait SketchFactory: Sync {
    fn build(&self, m: usize, n: usize, seed: u64) -> Result<SketchOperator>;
}

impl SketchFactory for SketchKind {
    fn build(&self, m: usize, n: usize, seed: u64) -> Result<SketchOperator> {
        make_sketch(*self, m, n, seed)
    }
}

/// Always returns `S = I_n`; requires `m == n`. A test hook: every sketched
/// algorithm reduces to its exact counterpart.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityEmbedding;

impl SketchFactory for IdentityEmbedding {
    fn build(&self, m: usize, n: usize, _seed: u64) -> Result<SketchOperator> {
        if m != n {
            return Err(Error::invalid(format!(
                "identity embedding needs m == n, got m={m}, n={n}"
            )));
        }
        SketchOperator::identity(n)
    }
}
