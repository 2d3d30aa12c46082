//! Thin helpers over nalgebra decompositions.

use nalgebra::DMatrix;

use crate::{DenseTensor, Error, Result, C64};

pub(crate) fn to_cmatrix(t: &DenseTensor) -> Result<DMatrix<C64>> {
    match t.shape() {
        &[r, c] => Ok(DMatrix::from_row_slice(r, c, t.data())),
        s => Err(Error::Shape(format!("expected a matrix, got shape {s:?}"))),
    }
}

pub(crate) fn from_cmatrix(m: &DMatrix<C64>) -> DenseTensor {
    let data = (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)]))
        .collect();
    DenseTensor::new(vec![m.nrows(), m.ncols()], data).expect("finite matrix")
}

pub(crate) fn real_matrix(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

pub(crate) fn singular_values_c(m: &DMatrix<C64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    m.clone().singular_values().iter().copied().collect()
}

pub(crate) fn singular_values_r(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    m.clone().singular_values().iter().copied().collect()
}

/// Count of singular values above `tol * sigma_max`.
pub(crate) fn rank_from_singular_values(sv: &[f64], tol: f64) -> usize {
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * smax).count()
}

/// Thin SVD `m = U diag(s) V^dagger` keeping singular values at or above
/// `cutoff * sigma_max`. Returns `(U, s, V^dagger)`.
pub(crate) fn svd_truncated(m: DMatrix<C64>, cutoff: f64) -> (DMatrix<C64>, Vec<f64>, DMatrix<C64>) {
    let svd = m.svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let smax = order.first().map(|&i| svd.singular_values[i]).unwrap_or(0.0);
    let keep: Vec<usize> = order
        .into_iter()
        .filter(|&i| smax > 0.0 && svd.singular_values[i] >= cutoff * smax)
        .collect();
    let keep = if keep.is_empty() { vec![0] } else { keep };
    let uk = DMatrix::from_fn(u.nrows(), keep.len(), |r, c| u[(r, keep[c])]);
    let vk = DMatrix::from_fn(keep.len(), vt.ncols(), |r, c| vt[(keep[r], c)]);
    let s = keep.iter().map(|&i| svd.singular_values[i]).collect();
    (uk, s, vk)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_svd_reconstructs() {
        let m = DMatrix::from_fn(4, 3, |i, j| C64::new((i * 3 + j) as f64, (i as f64) - (j as f64)));
        let (u, s, vt) = svd_truncated(m.clone(), 1e-14);
        let sd = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            s.len(),
            s.iter().map(|&v| C64::new(v, 0.0)),
        ));
        let back = u * sd * vt;
        assert!((back - m).norm() < 1e-10);
    }

    #[test]
    fn rank_counts() {
        assert_eq!(rank_from_singular_values(&[3.0, 1.0, 1e-12], 1e-9), 2);
        assert_eq!(rank_from_singular_values(&[0.0, 0.0], 1e-9), 0);
        let id = real_matrix(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(rank_from_singular_values(&singular_values_r(&id), 1e-9), 3);
    }
}
