//! Witness matrices, rank oracles and the constructions that lift matrix
//! rank separations to tensors over many binary variables.
//!
//! Rank kinds of a non-negative matrix `M` and the model classes they bound:
//!
//! | kind                | factorization                     | model        |
//! |---------------------|-----------------------------------|--------------|
//! | `rank`              | `M = W H`                         | MPS, real    |
//! | `nonneg_rank`       | `M = W H`, `W, H >= 0`            | MPS, non-neg |
//! | `real_sqrt_rank`    | `M = S o S`, `S` real             | BM, real     |
//! | `complex_sqrt_rank` | `M = S o conj(S)`, `S` complex    | BM, complex  |
//! | `real_psd_rank`     | `M_ij = tr(P_i Q_j)`, real psd    | LPS, real    |
//! | `complex_psd_rank`  | `M_ij = tr(P_i Q_j)`, Hermitian   | LPS, complex |

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;

use crate::{linalg, DenseTensor, Error, Result, C64};

mod nonneg;
mod report;
mod sqrt;
mod unfold;
mod witness;

pub use nonneg::{nonneg_rank_exact_small, nonneg_rank_search};
pub use report::{certificate_report, write_report_csv, Outcome, ReportRow};
pub use sqrt::{complex_sqrt_rank_search, real_sqrt_rank, DEFAULT_MAX_ENTRIES};
pub use unfold::{
    central_bipartition, euclidean_family_bm, one_hot_submatrix, prime_family_mps, unfold_matrix_to_mps,
};
pub use witness::{
    b_complex_sqrt_witness, complex_sqrt_prime_witness, e_complex_sqrt_factors, euclidean_matrix,
    euclidean_sqrt_witness, f_nonneg_factor, odd_primes, prime_count, prime_matrix, witness_matrix,
    WitnessMatrix, WITNESS_NAMES,
};

/// Relative singular-value threshold used for every rank decision.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Success threshold for search-based upper bounds.
pub const SEARCH_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RankKind {
    Rank,
    NonnegRank,
    RealSqrtRank,
    ComplexSqrtRank,
    RealPsdRank,
    ComplexPsdRank,
}

impl RankKind {
    pub const ALL: [RankKind; 6] = [
        RankKind::Rank,
        RankKind::NonnegRank,
        RankKind::RealSqrtRank,
        RankKind::ComplexSqrtRank,
        RankKind::RealPsdRank,
        RankKind::ComplexPsdRank,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RankKind::Rank => "rank",
            RankKind::NonnegRank => "nonneg_rank",
            RankKind::RealSqrtRank => "real_sqrt_rank",
            RankKind::ComplexSqrtRank => "complex_sqrt_rank",
            RankKind::RealPsdRank => "real_psd_rank",
            RankKind::ComplexPsdRank => "complex_psd_rank",
        }
    }
}

impl fmt::Display for RankKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A value or a one-sided bound on a rank.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    Exact(usize),
    AtMost(usize),
    AtLeast(usize),
    /// A search at this inner dimension found nothing; no conclusion.
    Inconclusive(usize),
}

impl Bound {
    /// Whether a proven `self` implies `claim`.
    pub fn implies(self, claim: Bound) -> bool {
        match (self, claim) {
            (Bound::Exact(a), Bound::Exact(b)) => a == b,
            (Bound::Exact(a), Bound::AtMost(b)) | (Bound::AtMost(a), Bound::AtMost(b)) => a <= b,
            (Bound::Exact(a), Bound::AtLeast(b)) | (Bound::AtLeast(a), Bound::AtLeast(b)) => a >= b,
            _ => false,
        }
    }

    /// Combine a lower and an upper bound, collapsing to `Exact` when they meet.
    pub fn meet(lower: usize, upper: usize) -> Bound {
        if lower == upper {
            Bound::Exact(lower)
        } else {
            Bound::AtMost(upper)
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Exact(k) => write!(f, "exact {k}"),
            Bound::AtMost(k) => write!(f, "<= {k}"),
            Bound::AtLeast(k) => write!(f, ">= {k}"),
            Bound::Inconclusive(k) => write!(f, "inconclusive at {k}"),
        }
    }
}

/// Evidence backing a [`RankCertificate`].
#[derive(Clone, Debug, PartialEq)]
pub enum Witness {
    /// `M ~ left * right` (or `|left * right|^2` for square-root ranks).
    Factors { left: DenseTensor, right: DenseTensor },
    /// An entrywise square root attaining the rank, found by an exhaustive
    /// search over `candidates` sign patterns.
    SignedRoot { root: DenseTensor, candidates: u64 },
    /// An exhaustive search over `candidates` possibilities found nothing.
    Exhaustive { candidates: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankCertificate {
    pub kind: RankKind,
    pub bound: Bound,
    pub witness: Witness,
    /// Reconstruction error of the witness, `||M - M_hat||_F / ||M||_F`
    /// (0 when there is nothing to reconstruct).
    pub residual: f64,
}

/// Real entries of an order-2 tensor as an nalgebra matrix.
pub(crate) fn real_dmatrix(m: &DenseTensor) -> Result<DMatrix<f64>> {
    match m.shape() {
        &[r, c] => {
            if m.max_imag() > 0.0 {
                return Err(Error::InvalidArgument("expected a real matrix".into()));
            }
            Ok(linalg::real_matrix(r, c, &m.real_parts()))
        }
        s => Err(Error::Shape(format!("expected a matrix, got shape {s:?}"))),
    }
}

pub(crate) fn nonneg_dmatrix(m: &DenseTensor) -> Result<DMatrix<f64>> {
    let a = real_dmatrix(m)?;
    if let Some(&v) = a.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::NegativeEntry { value: v });
    }
    Ok(a)
}

pub(crate) fn from_real_dmatrix(m: &DMatrix<f64>) -> DenseTensor {
    let data: Vec<f64> = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect();
    DenseTensor::from_real(vec![m.nrows(), m.ncols()], &data).expect("finite matrix")
}

/// Number of singular values above `tol * sigma_max`.
pub fn matrix_rank(m: &DenseTensor, tol: f64) -> Result<usize> {
    let sv = if m.max_imag() > 0.0 {
        linalg::singular_values_c(&linalg::to_cmatrix(m)?)
    } else {
        linalg::singular_values_r(&real_dmatrix(m)?)
    };
    Ok(linalg::rank_from_singular_values(&sv, tol))
}

/// `||a - b||_F / ||a||_F` (absolute when `a = 0`).
pub(crate) fn relative_residual(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = (a - b).norm();
    let norm = a.norm();
    if norm > 0.0 {
        diff / norm
    } else {
        diff
    }
}

/// Relative residual of `|s|^2` (entrywise) against `m`.
pub fn sqrt_witness_residual(m: &DenseTensor, s: &DenseTensor) -> Result<f64> {
    if m.shape() != s.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", m.shape(), s.shape())));
    }
    let a = real_dmatrix(m)?;
    let sq = real_dmatrix(&s.abs_sqr())?;
    Ok(relative_residual(&a, &sq))
}

/// Complex matrix product of two order-2 tensors.
pub fn matmul(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    let (x, y) = (linalg::to_cmatrix(a)?, linalg::to_cmatrix(b)?);
    if x.ncols() != y.nrows() {
        return Err(Error::Shape(format!("cannot multiply {:?} by {:?}", a.shape(), b.shape())));
    }
    Ok(linalg::from_cmatrix(&(x * y)))
}

pub(crate) fn claims(entries: &[(RankKind, Bound)]) -> BTreeMap<RankKind, Bound> {
    entries.iter().copied().collect()
}

pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}
