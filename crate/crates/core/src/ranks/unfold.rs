//! Lifting matrix factorizations to tensors over many binary variables.

use super::c;
use crate::models::{BornModel, FieldKind, MpsModel};
use crate::{linalg, DenseTensor, Error, Result, C64};

/// Reshape a tensor over `2N` sites of equal dimension `d` into the
/// `d^N x d^N` matrix separating the first `N` sites from the last `N`.
pub fn central_bipartition(t: &DenseTensor) -> Result<DenseTensor> {
    let shape = t.shape();
    if shape.is_empty() || !shape.len().is_multiple_of(2) {
        return Err(Error::Shape(format!("central bipartition needs an even number of sites, got {}", shape.len())));
    }
    if shape.iter().any(|&s| s != shape[0]) {
        return Err(Error::Shape(format!("sites have unequal dimensions {shape:?}")));
    }
    let half: usize = shape[..shape.len() / 2].iter().product();
    t.reshape(&[half, half])
}

/// Rows and columns of the central bipartition of a tensor over `2n` binary
/// sites indexed by one-hot configurations: row `i` is the configuration
/// with a single 1 at site `i`, column `j` the one with a single 1 at site
/// `n + j`.
pub fn one_hot_submatrix(t: &DenseTensor, n: usize) -> Result<DenseTensor> {
    if t.shape().len() != 2 * n || t.shape().iter().any(|&s| s != 2) {
        return Err(Error::Shape(format!("expected {} binary sites, got shape {:?}", 2 * n, t.shape())));
    }
    let mut data = Vec::with_capacity(n * n);
    let mut x = vec![0; 2 * n];
    for i in 0..n {
        for j in 0..n {
            x[i] = 1;
            x[n + j] = 1;
            data.push(t.get(&x)?);
            x[i] = 0;
            x[n + j] = 0;
        }
    }
    DenseTensor::new(vec![n, n], data)
}

fn core(rl: usize, rr: usize, zero: impl Fn(usize, usize) -> C64, one: impl Fn(usize, usize) -> C64) -> Result<DenseTensor> {
    let mut data = Vec::with_capacity(2 * rl * rr);
    for f in [&zero as &dyn Fn(usize, usize) -> C64, &one] {
        for a in 0..rl {
            for b in 0..rr {
                data.push(f(a, b));
            }
        }
    }
    DenseTensor::new(vec![2, rl, rr], data)
}

fn delta(a: usize, b: usize) -> C64 {
    c(if a == b { 1.0 } else { 0.0 }, 0.0)
}

/// MPS over `2n` binary sites whose one-hot submatrix (see
/// [`one_hot_submatrix`]) is `E F`. Site `k < n` carries row `k` of `E` on
/// the diagonal of its `x = 1` matrix, site `n + k` column `k` of `F`; every
/// `x = 0` matrix is the identity (all-ones vectors at the boundaries).
pub fn unfold_matrix_to_mps(e: &DenseTensor, f: &DenseTensor, field: FieldKind) -> Result<MpsModel> {
    let (em, fm) = (linalg::to_cmatrix(e)?, linalg::to_cmatrix(f)?);
    let (n, r) = em.shape();
    if fm.shape() != (r, n) {
        return Err(Error::Shape(format!("factors {:?} and {:?} do not chain to a square matrix", e.shape(), f.shape())));
    }
    let one = c(1.0, 0.0);
    let mut cores = Vec::with_capacity(2 * n);
    for k in 0..n {
        cores.push(if k == 0 {
            core(1, r, |_, _| one, |_, b| em[(0, b)])?
        } else {
            core(r, r, delta, |a, b| delta(a, b) * em[(k, a)])?
        });
    }
    for k in 0..n {
        cores.push(if k == n - 1 {
            core(r, 1, |_, _| one, |a, _| fm[(a, n - 1)])?
        } else {
            core(r, r, delta, |a, b| delta(a, b) * fm[(a, k)])?
        });
    }
    MpsModel::new(field, cores)
}

/// Cores of a bond-2 chain over `2n` binary sites with central bipartition
/// `(base_l + sign_l * i) + (base_r + j)`. The left half contracts to the
/// row `(1, base_l + sign_l * i)`, the right half to the column
/// `(base_r + j, 1)`, where `i, j` are the binary values of the halves
/// (first site most significant).
fn affine_chain(n: usize, base_l: f64, sign_l: f64, base_r: f64) -> Result<Vec<DenseTensor>> {
    if n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    let weight = |k: usize| (1u64 << (n - 1 - k)) as f64;
    let o = c(1.0, 0.0);
    // upper-triangular [[1, x w], [0, 1]]
    let shift = |w: f64| {
        core(2, 2, delta, move |a, b| match (a, b) {
            (0, 1) => c(w, 0.0),
            _ => delta(a, b),
        })
    };
    let mut cores = Vec::with_capacity(2 * n);
    for k in 0..n {
        let w = sign_l * weight(k);
        cores.push(if k == 0 {
            core(1, 2, |_, b| if b == 0 { o } else { c(base_l, 0.0) }, |_, b| if b == 0 { o } else { c(base_l + w, 0.0) })?
        } else {
            shift(w)?
        });
    }
    for k in 0..n {
        let w = weight(k);
        cores.push(if k == n - 1 {
            core(2, 1, |a, _| if a == 0 { c(base_r, 0.0) } else { o }, |a, _| if a == 0 { c(base_r + w, 0.0) } else { o })?
        } else {
            shift(w)?
        });
    }
    Ok(cores)
}

/// Non-negative MPS over `2N` binary sites with all bond dimensions 2 whose
/// central bipartition is `M_ij = i + j` for 1-based `i, j` (the binary
/// value of each half plus one).
pub fn prime_family_mps(n: usize) -> Result<MpsModel> {
    MpsModel::new(FieldKind::NonNeg, affine_chain(n, 1.0, 1.0, 1.0)?)
}

/// Real Born machine over `2N` binary sites with amplitude bond dimensions 2
/// whose central bipartition is `(j - i)^2` for 0-based `i, j`.
pub fn euclidean_family_bm(n: usize) -> Result<BornModel> {
    BornModel::new(MpsModel::new(FieldKind::Real, affine_chain(n, 0.0, -1.0, 0.0)?)?)
}
