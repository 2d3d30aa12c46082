//! Dense tensors of complex scalars.
//!
//! Storage is row-major: the last index varies fastest. Real and non-negative
//! tensors are stored with zero imaginary parts; which field a tensor lives in
//! is a property of the model that owns it.

use crate::{Error, Result, C64};

#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<C64>,
}

fn product(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Shape(format!("zero dimension in shape {shape:?}")));
        }
        if product(&shape) != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {} entries, got {}",
                product(&shape),
                data.len()
            )));
        }
        if let Some(z) = data.iter().find(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numerical(format!("non-finite entry {z}")));
        }
        Ok(DenseTensor { shape, data })
    }

    pub fn from_real(shape: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = product(&shape);
        DenseTensor {
            shape,
            data: vec![C64::new(0.0, 0.0); n],
        }
    }

    /// Order-0 tensor.
    pub fn scalar(value: C64) -> Self {
        DenseTensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    /// Real matrix from rows.
    pub fn matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::Shape("ragged matrix rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_real(vec![n_rows, n_cols], &flat)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        strides(&self.shape)
    }

    pub fn flat_index(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.shape.len() {
            return Err(Error::Shape(format!(
                "index of order {} for tensor of order {}",
                index.len(),
                self.shape.len()
            )));
        }
        let mut flat = 0;
        for (&i, &s) in index.iter().zip(&self.shape) {
            if i >= s {
                return Err(Error::Shape(format!("index {index:?} out of range for {:?}", self.shape)));
            }
            flat = flat * s + i;
        }
        Ok(flat)
    }

    pub fn get(&self, index: &[usize]) -> Result<C64> {
        Ok(self.data[self.flat_index(index)?])
    }

    pub fn scale(&self, alpha: C64) -> Self {
        DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&z| z * alpha).collect(),
        }
    }

    /// Sum of all entries.
    pub fn sum(&self) -> C64 {
        self.data.iter().sum()
    }

    /// Largest absolute imaginary part.
    pub fn max_imag(&self) -> f64 {
        self.data.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    /// Real parts of all entries.
    pub fn real_parts(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.re).collect()
    }

    /// Entry-wise squared modulus.
    pub fn abs_sqr(&self) -> Self {
        DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|z| C64::new(z.norm_sqr(), 0.0)).collect(),
        }
    }

    /// Same data, new shape.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if shape.contains(&0) || product(shape) != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} ({} entries) to {shape:?}",
                self.shape,
                self.data.len()
            )));
        }
        Ok(DenseTensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    /// Contract `a` with `b` over the listed axis pairs.
    ///
    /// The result carries the free axes of `a` (in order) followed by the
    /// free axes of `b`.
    pub fn contract(a: &DenseTensor, b: &DenseTensor, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut seen_a = vec![false; a.order()];
        let mut seen_b = vec![false; b.order()];
        for &(ia, ib) in pairs {
            if ia >= a.order() || ib >= b.order() {
                return Err(Error::Shape(format!("axis pair ({ia}, {ib}) out of range")));
            }
            if seen_a[ia] || seen_b[ib] {
                return Err(Error::Shape(format!("axis pair ({ia}, {ib}) repeats an axis")));
            }
            seen_a[ia] = true;
            seen_b[ib] = true;
            if a.shape[ia] != b.shape[ib] {
                return Err(Error::Shape(format!(
                    "contracted dimensions differ: {} vs {}",
                    a.shape[ia], b.shape[ib]
                )));
            }
        }
        let free_a: Vec<usize> = (0..a.order()).filter(|&i| !seen_a[i]).collect();
        let free_b: Vec<usize> = (0..b.order()).filter(|&i| !seen_b[i]).collect();
        let sum_a: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let sum_b: Vec<usize> = pairs.iter().map(|p| p.1).collect();

        // Permute both operands into matrices and multiply.
        let am = a.permuted_matrix(&free_a, &sum_a);
        let bm = b.permuted_matrix(&sum_b, &free_b);
        let (m, k) = (am.1, am.2);
        let n = bm.2;
        let mut out = vec![C64::new(0.0, 0.0); m * n];
        for i in 0..m {
            let row = &am.0[i * k..(i + 1) * k];
            let o = &mut out[i * n..(i + 1) * n];
            for (l, &x) in row.iter().enumerate() {
                if x == C64::new(0.0, 0.0) {
                    continue;
                }
                let brow = &bm.0[l * n..(l + 1) * n];
                for (oj, &y) in o.iter_mut().zip(brow) {
                    *oj += x * y;
                }
            }
        }
        let shape: Vec<usize> = free_a
            .iter()
            .map(|&i| a.shape[i])
            .chain(free_b.iter().map(|&i| b.shape[i]))
            .collect();
        Ok(DenseTensor { shape, data: out })
    }

    /// Permute axes into `rows ++ cols` order and flatten into a matrix.
    fn permuted_matrix(&self, rows: &[usize], cols: &[usize]) -> (Vec<C64>, usize, usize) {
        let n_rows: usize = rows.iter().map(|&i| self.shape[i]).product();
        let n_cols: usize = cols.iter().map(|&i| self.shape[i]).product();
        let st = self.strides();
        let perm: Vec<usize> = rows.iter().chain(cols).copied().collect();
        let pshape: Vec<usize> = perm.iter().map(|&i| self.shape[i]).collect();
        let pstride: Vec<usize> = perm.iter().map(|&i| st[i]).collect();
        let mut out = Vec::with_capacity(n_rows * n_cols);
        let mut idx = vec![0usize; perm.len()];
        for _ in 0..n_rows * n_cols {
            let off: usize = idx.iter().zip(&pstride).map(|(i, s)| i * s).sum();
            out.push(self.data[off]);
            for ax in (0..idx.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < pshape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        (out, n_rows, n_cols)
    }

    /// Maximum complex modulus of the entry-wise difference.
    pub fn max_abs_diff(a: &DenseTensor, b: &DenseTensor) -> Result<f64> {
        if a.shape != b.shape {
            return Err(Error::Shape(format!("{:?} vs {:?}", a.shape, b.shape)));
        }
        Ok(a.data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max))
    }
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut st = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        st[i] = st[i + 1] * shape[i + 1];
    }
    st
}

/// Checked `base^exp` against a cap on the number of dense entries.
pub fn checked_dense_size(base: usize, exp: usize, cap: usize) -> Result<usize> {
    let mut n: u128 = 1;
    for _ in 0..exp {
        n = n.saturating_mul(base as u128);
        if n > cap as u128 {
            return Err(Error::DenseCap { entries: n, cap });
        }
    }
    Ok(n as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn random(shape: Vec<usize>, seed: u64) -> DenseTensor {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        DenseTensor::new(shape, data).unwrap()
    }

    #[test]
    fn identity_composition() {
        let id = DenseTensor::matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let r = DenseTensor::contract(&id, &id, &[(1, 0)]).unwrap();
        assert_eq!(r, id);
    }

    #[test]
    fn dot_product() {
        let a = DenseTensor::from_real(vec![2], &[1.0, 2.0]).unwrap();
        let b = DenseTensor::from_real(vec![2], &[3.0, 4.0]).unwrap();
        let r = DenseTensor::contract(&a, &b, &[(0, 0)]).unwrap();
        assert_eq!(r.shape(), &[] as &[usize]);
        assert_eq!(r.data()[0], c(11.0));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let a = random(vec![3, 4], 1);
        let b = random(vec![4, 5], 2);
        let r = DenseTensor::contract(&a, &b, &[(1, 0)]).unwrap();
        for i in 0..3 {
            for j in 0..5 {
                let mut s = C64::new(0.0, 0.0);
                for k in 0..4 {
                    s += a.get(&[i, k]).unwrap() * b.get(&[k, j]).unwrap();
                }
                assert!((s - r.get(&[i, j]).unwrap()).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn contraction_over_non_leading_axes() {
        // a[i,j,k] b[k,l,i] summed over i and k -> r[j,l]
        let a = random(vec![2, 3, 4], 3);
        let b = random(vec![4, 5, 2], 4);
        let r = DenseTensor::contract(&a, &b, &[(0, 2), (2, 0)]).unwrap();
        assert_eq!(r.shape(), &[3, 5]);
        for j in 0..3 {
            for l in 0..5 {
                let mut s = C64::new(0.0, 0.0);
                for i in 0..2 {
                    for k in 0..4 {
                        s += a.get(&[i, j, k]).unwrap() * b.get(&[k, l, i]).unwrap();
                    }
                }
                assert!((s - r.get(&[j, l]).unwrap()).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn contraction_errors() {
        let a = random(vec![2, 3], 5);
        let b = random(vec![4, 3], 6);
        assert!(matches!(
            DenseTensor::contract(&a, &b, &[(0, 0)]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            DenseTensor::contract(&a, &b, &[(1, 1), (1, 0)]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn reshape_is_row_major() {
        let v = DenseTensor::from_real(vec![4], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let m = v.reshape(&[2, 2]).unwrap();
        assert_eq!(m.get(&[0, 1]).unwrap(), c(2.0));
        assert_eq!(m.get(&[1, 0]).unwrap(), c(3.0));
        assert!(v.reshape(&[3]).is_err());

        let t = random(vec![2, 2, 2, 2], 7);
        let bip = t.reshape(&[4, 4]).unwrap();
        assert_eq!(bip.get(&[2, 1]).unwrap(), t.get(&[1, 0, 0, 1]).unwrap());
        assert_eq!(bip.reshape(&[2, 2, 2, 2]).unwrap(), t);
    }

    #[test]
    fn max_abs_diff_examples() {
        let a = DenseTensor::from_real(vec![1], &[1.0]).unwrap();
        let z = DenseTensor::from_real(vec![1], &[0.0]).unwrap();
        let i = DenseTensor::new(vec![1], vec![C64::new(0.0, 1.0)]).unwrap();
        assert_eq!(DenseTensor::max_abs_diff(&a, &a).unwrap(), 0.0);
        assert_eq!(DenseTensor::max_abs_diff(&a, &z).unwrap(), 1.0);
        assert!((DenseTensor::max_abs_diff(&i, &a).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(DenseTensor::max_abs_diff(&a, &random(vec![2], 1)).is_err());
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(DenseTensor::new(vec![2, 0], vec![]).is_err());
        assert!(DenseTensor::new(vec![2], vec![c(1.0)]).is_err());
        assert!(DenseTensor::new(vec![1], vec![C64::new(f64::NAN, 0.0)]).is_err());
    }

    proptest! {
        #[test]
        fn contraction_is_bilinear(seed in 0u64..1000, re in -2.0f64..2.0, im in -2.0f64..2.0) {
            let a = random(vec![3, 4], seed);
            let b = random(vec![4, 2], seed + 1);
            let alpha = C64::new(re, im);
            let lhs = DenseTensor::contract(&a.scale(alpha), &b, &[(1, 0)]).unwrap();
            let rhs = DenseTensor::contract(&a, &b, &[(1, 0)]).unwrap().scale(alpha);
            prop_assert!(DenseTensor::max_abs_diff(&lhs, &rhs).unwrap() < 1e-12);
        }

        #[test]
        fn four_by_four_matches_naive(seed in 0u64..1000) {
            let a = random(vec![4, 4], seed);
            let b = random(vec![4, 4], seed + 7);
            let r = DenseTensor::contract(&a, &b, &[(1, 0)]).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    let s: C64 = (0..4).map(|k| a.data()[i * 4 + k] * b.data()[k * 4 + j]).sum();
                    prop_assert!((s - r.data()[i * 4 + j]).norm() < 1e-12);
                }
            }
        }

        #[test]
        fn reshape_preserves_entries(seed in 0u64..1000) {
            let t = random(vec![2, 3, 4], seed);
            let r = t.reshape(&[6, 4]).unwrap();
            let mut x: Vec<(u64, u64)> = t.data().iter().map(|z| (z.re.to_bits(), z.im.to_bits())).collect();
            let mut y: Vec<(u64, u64)> = r.data().iter().map(|z| (z.re.to_bits(), z.im.to_bits())).collect();
            x.sort();
            y.sort();
            prop_assert_eq!(x, y);
        }
    }
}
