//! Synthetic problem generation, LIBSVM ingestion and the `SKLS` binary
//! problem format.
//!
//! `SKLS` layout (all integers and floats little-endian):
//!
//! | offset | size    | field                          |
//! |--------|---------|--------------------------------|
//! | 0      | 4       | magic `b"SKLS"`                |
//! | 4      | 2       | version (`u16`, currently 1)   |
//! | 6      | 8       | `n` (`u64`)                    |
//! | 14     | 8       | `d` (`u64`)                    |
//! | 22     | 8·n·d   | `A`, row-major `f64`           |
//! | ...    | 8·n     | `b`, `f64`                     |

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::LSProblem;
use crate::rng;

pub const SKLS_MAGIC: [u8; 4] = *b"SKLS";
pub const SKLS_VERSION: u16 = 1;
const SKLS_HEADER_LEN: usize = 4 + 2 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    /// `cond(A'A) = 1e12`.
    Ill,
    /// `cond(A'A) = 1e2`.
    Well,
}

impl std::str::FromStr for Conditioning {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ill" => Ok(Conditioning::Ill),
            "well" => Ok(Conditioning::Well),
            _ => Err(Error::invalid(format!("unknown conditioning '{s}' (expected ill or well)"))),
        }
    }
}

/// Parameters of the synthetic regression problems.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub conditioning: Conditioning,
    /// Noise standard deviation.
    pub noise_tau: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub const DEFAULT_TAU: f64 = 0.001;

    pub fn new(n: usize, d: usize, conditioning: Conditioning, seed: u64) -> Self {
        SyntheticSpec {
            n,
            d,
            conditioning,
            noise_tau: Self::DEFAULT_TAU,
            seed,
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.noise_tau = tau;
        self
    }
}

/// A generated problem with the factors it was built from.
#[derive(Debug, Clone)]
pub struct SyntheticParts {
    pub problem: LSProblem,
    /// `n x d`, orthonormal columns.
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    /// `d x d` orthogonal.
    pub v: DMatrix<f64>,
    /// Ground-truth coefficients.
    pub x_star: DVector<f64>,
}

/// The prescribed singular values.
pub fn synthetic_spectrum(d: usize, conditioning: Conditioning) -> DVector<f64> {
    let step = |i: usize| if d == 1 { 0.0 } else { i as f64 / (d - 1) as f64 };
    match conditioning {
        Conditioning::Ill => DVector::from_fn(d, |i, _| 10f64.powf(-6.0 * step(i))),
        Conditioning::Well => DVector::from_fn(d, |i, _| 0.1 + 0.9 * step(i)),
    }
}

/// `[1_k, 0.1 * 1_{d-2k}, 1_k]` with `k = round(0.2 d)`.
pub fn synthetic_coefficients(d: usize) -> DVector<f64> {
    let outer = ((0.2 * d as f64).round() as usize).min(d / 2);
    DVector::from_fn(d, |i, _| {
        if i < outer || i >= d - outer {
            1.0
        } else {
            0.1
        }
    })
}

/// Scale matrix `c_ij = 2 * 0.5^|i-j|` of the heavy-tailed design rows.
fn t_scale_matrix(d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| 2.0 * 0.5f64.powi(i.abs_diff(j) as i32))
}

/// Generates `A = U diag(sigma) V'`, `b = A x_star + z`.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<LSProblem> {
    gen_synthetic_parts(spec).map(|p| p.problem)
}

/// [`gen_synthetic`], also returning the factors.
pub fn gen_synthetic_parts(spec: &SyntheticSpec) -> Result<SyntheticParts> {
    let SyntheticSpec {
        n,
        d,
        conditioning,
        noise_tau,
        seed,
    } = *spec;
    if d < 2 || n < d {
        return Err(Error::invalid(format!(
            "synthetic problems need n >= d >= 2, got n={n}, d={d}"
        )));
    }
    if !(noise_tau >= 0.0 && noise_tau.is_finite()) {
        return Err(Error::invalid(format!("noise tau must be >= 0, got {noise_tau}")));
    }

    // rows of X ~ multivariate t with 2 degrees of freedom and scale C:
    // g ~ N(0, C), s ~ chi^2_2, row = g / sqrt(s / 2)
    let chol = t_scale_matrix(d)
        .cholesky()
        .expect("scale matrix is positive definite");
    let l = chol.l();
    let chi2 = ChiSquared::new(2.0).expect("valid dof");
    let mut rng_x = rng::substream_rng(seed, 0);
    let mut x = DMatrix::zeros(n, d);
    let mut z = DVector::zeros(d);
    for i in 0..n {
        for zj in z.iter_mut() {
            *zj = rng_x.sample(StandardNormal);
        }
        let g = &l * &z;
        let s: f64 = rng_x.sample(chi2);
        let w = (s / 2.0).sqrt();
        for j in 0..d {
            x[(i, j)] = g[j] / w;
        }
    }
    let u = x.qr().q();

    let mut rng_v = rng::substream_rng(seed, 1);
    let gauss = DMatrix::from_fn(d, d, |_, _| rng_v.sample::<f64, _>(StandardNormal));
    let v = gauss.qr().q();

    let sigma = synthetic_spectrum(d, conditioning);
    let a = &u * DMatrix::from_diagonal(&sigma) * v.transpose();
    let x_star = synthetic_coefficients(d);
    let mut rng_z = rng::substream_rng(seed, 2);
    let noise = DVector::from_fn(n, |_, _| noise_tau * rng_z.sample::<f64, _>(StandardNormal));
    let b = &a * &x_star + noise;
    let problem = LSProblem::new(a, b)?;
    Ok(SyntheticParts {
        problem,
        u,
        sigma,
        v,
        x_star,
    })
}

/// Reads a LIBSVM-format regression file into a dense problem.
///
/// Each non-blank line is `label idx:val idx:val ...` with 1-based, strictly
/// increasing feature indices; absent features are zero and `d` is the
/// largest index seen. Anything after `#` is ignored.
pub fn load_libsvm(path: impl AsRef<Path>) -> Result<LSProblem> {
    let path = path.as_ref();
    libsvm_problem(BufReader::new(fs::File::open(path)?), path)
}

fn libsvm_problem<R: BufRead>(reader: R, path: &Path) -> Result<LSProblem> {
    let (labels, rows, d) = parse_libsvm(reader, path)?;
    if d == 0 {
        return Err(Error::Format(format!("{}: no features found", path.display())));
    }
    let mut a = DMatrix::zeros(labels.len(), d);
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            a[(i, j)] = v;
        }
    }
    LSProblem::new(a, DVector::from_vec(labels))
}

type SparseRow = Vec<(usize, f64)>;

fn parse_libsvm<R: BufRead>(reader: R, path: &Path) -> Result<(Vec<f64>, Vec<SparseRow>, usize)> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    let mut d = 0;
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| parse_err(lineno, format!("bad label '{label_tok}'")))?;
        let mut row = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, format!("expected idx:val, got '{tok}'")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad feature index '{idx}'")))?;
            if idx == 0 {
                return Err(parse_err(lineno, "feature indices are 1-based".to_owned()));
            }
            if idx <= last {
                return Err(parse_err(
                    lineno,
                    format!("feature index {idx} does not increase (previous {last})"),
                ));
            }
            let val: f64 = val
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| parse_err(lineno, format!("bad feature value '{val}'")))?;
            last = idx;
            row.push((idx - 1, val));
        }
        d = d.max(last);
        labels.push(label);
        rows.push(row);
    }
    Ok((labels, rows, d))
}

/// Serializes a problem in the `SKLS` format.
pub fn encode_problem(problem: &LSProblem) -> Vec<u8> {
    let (n, d) = (problem.n(), problem.d());
    let mut out = Vec::with_capacity(SKLS_HEADER_LEN + 8 * n * (d + 1));
    out.extend_from_slice(&SKLS_MAGIC);
    out.extend_from_slice(&SKLS_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(d as u64).to_le_bytes());
    let a = problem.a();
    for i in 0..n {
        for j in 0..d {
            out.extend_from_slice(&a[(i, j)].to_le_bytes());
        }
    }
    for v in problem.b().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses an `SKLS` byte buffer.
pub fn decode_problem(bytes: &[u8]) -> Result<LSProblem> {
    if bytes.len() < 4 {
        return Err(Error::Format(format!(
            "truncated: {} bytes, shorter than the magic",
            bytes.len()
        )));
    }
    if bytes[..4] != SKLS_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?} (expected \"SKLS\")",
            String::from_utf8_lossy(&bytes[..4])
        )));
    }
    if bytes.len() < SKLS_HEADER_LEN {
        return Err(Error::Format(format!(
            "truncated header: {} of {SKLS_HEADER_LEN} bytes",
            bytes.len()
        )));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != SKLS_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let read_u64 = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    let (n, d) = (read_u64(6), read_u64(14));
    let payload = n
        .checked_mul(d.saturating_add(1))
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| Error::Format(format!("implausible dimensions n={n}, d={d}")))?;
    let body = &bytes[SKLS_HEADER_LEN..];
    if (body.len() as u64) < payload {
        return Err(Error::Format(format!(
            "truncated: expected {payload} payload bytes for n={n}, d={d}, found {}",
            body.len()
        )));
    }
    if body.len() as u64 > payload {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            body.len() as u64 - payload
        )));
    }
    let (n, d) = (n as usize, d as usize);
    let mut floats = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let a = DMatrix::from_row_iterator(n, d, floats.by_ref().take(n * d));
    let b = DVector::from_iterator(n, floats);
    LSProblem::new(a, b)
}

pub fn write_problem(problem: &LSProblem, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_problem(problem))?;
    Ok(())
}

pub fn read_problem(path: impl AsRef<Path>) -> Result<LSProblem> {
    decode_problem(&fs::read(path)?)
}

/// Reads either format, dispatching on the `SKLS` magic.
pub fn load_problem(path: impl AsRef<Path>) -> Result<LSProblem> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    if bytes.starts_with(&SKLS_MAGIC) {
        decode_problem(&bytes)
    } else {
        libsvm_problem(bytes.as_slice(), path)
    }
}
