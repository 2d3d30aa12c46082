//! The named witness matrices and the prime / Euclidean families.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use super::{c, claims, Bound, RankKind};
use crate::{DenseTensor, Error, Result, C64};

pub const WITNESS_NAMES: [&str; 6] = ["A", "B", "C", "D", "E", "F"];

#[derive(Clone, Debug, PartialEq)]
pub struct WitnessMatrix {
    pub name: String,
    pub entries: DenseTensor,
    /// Ranks asserted for this matrix. Claims that rest on external
    /// arguments (psd ranks of D and E, the lower bounds for D and F) are
    /// recorded here but not recomputed.
    pub claimed_ranks: BTreeMap<RankKind, Bound>,
}

fn golden() -> f64 {
    (1.0 + 5f64.sqrt()) / 2.0
}

pub fn witness_matrix(name: &str) -> Result<WitnessMatrix> {
    use Bound::*;
    use RankKind::*;
    let (rows, claimed): (Vec<Vec<f64>>, _) = match name {
        "A" => (
            vec![
                vec![0.0, 1.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0, 1.0],
                vec![1.0, 0.0, 0.0, 1.0],
                vec![1.0, 1.0, 0.0, 0.0],
            ],
            claims(&[(Rank, Exact(3)), (NonnegRank, Exact(4))]),
        ),
        "B" => (
            vec![vec![2.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]],
            claims(&[
                (Rank, Exact(2)),
                (NonnegRank, Exact(2)),
                (RealSqrtRank, Exact(3)),
                (ComplexSqrtRank, Exact(2)),
                (RealPsdRank, AtMost(2)),
                (ComplexPsdRank, AtMost(2)),
            ]),
        ),
        "C" => (
            vec![vec![4.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]],
            claims(&[
                (Rank, Exact(3)),
                (NonnegRank, Exact(3)),
                (RealSqrtRank, Exact(2)),
                (ComplexSqrtRank, Exact(2)),
                (RealPsdRank, AtMost(2)),
                (ComplexPsdRank, AtMost(2)),
            ]),
        ),
        "D" => {
            let a = golden();
            (
                vec![
                    vec![0.0, 1.0, a, 1.0, 0.0],
                    vec![0.0, 0.0, 1.0, a, 1.0],
                    vec![1.0, 0.0, 0.0, 1.0, a],
                    vec![a, 1.0, 0.0, 0.0, 1.0],
                    vec![1.0, a, 1.0, 0.0, 0.0],
                ],
                claims(&[
                    (Rank, Exact(3)),
                    (NonnegRank, Exact(5)),
                    (ComplexSqrtRank, AtLeast(4)),
                    (RealPsdRank, Exact(4)),
                    (ComplexPsdRank, Exact(4)),
                ]),
            )
        }
        "E" => (
            (0..4).map(|i| (0..4).map(|j| if i == j { 0.0 } else { 1.0 }).collect()).collect(),
            claims(&[(ComplexSqrtRank, AtMost(2)), (RealPsdRank, Exact(3)), (ComplexPsdRank, AtMost(2))]),
        ),
        "F" => {
            let w = f_factor_rows();
            let rows = (0..7)
                .map(|i| (0..7).map(|j| (0..3).map(|s| w[i][s] * w[j][s]).sum()).collect())
                .collect();
            (
                rows,
                claims(&[
                    (Rank, Exact(3)),
                    (NonnegRank, Exact(3)),
                    (ComplexSqrtRank, AtLeast(4)),
                    (ComplexPsdRank, AtMost(3)),
                ]),
            )
        }
        other => return Err(Error::UnknownName(other.to_string())),
    };
    Ok(WitnessMatrix {
        name: name.to_string(),
        entries: DenseTensor::matrix(&rows)?,
        claimed_ranks: claimed,
    })
}

fn f_factor_rows() -> [[f64; 3]; 7] {
    [
        [0.0, 0.0, 1.0],
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 1.0, 1.0],
        [1.0, 0.0, 1.0],
        [1.0, 1.0, 0.0],
        [1.0, 1.0, 1.0],
    ]
}

/// The 7x3 0/1 matrix `W` with `F = W W^T`.
pub fn f_nonneg_factor() -> DenseTensor {
    let rows: Vec<Vec<f64>> = f_factor_rows().iter().map(|r| r.to_vec()).collect();
    DenseTensor::matrix(&rows).expect("static matrix")
}

/// Rank-2 complex matrix whose entrywise squared modulus is B.
pub fn b_complex_sqrt_witness() -> DenseTensor {
    let (o, z, i) = (c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0));
    DenseTensor::new(vec![3, 3], vec![c(1.0, 1.0), o, o, o, z, o, i, o, z]).expect("static matrix")
}

/// Factors `(L, R)`, 4x2 and 2x4, with `|L R|^2 = E` entrywise.
pub fn e_complex_sqrt_factors() -> (DenseTensor, DenseTensor) {
    let w = C64::from_polar(1.0, 2.0 * PI / 3.0);
    let (o, z) = (c(1.0, 0.0), c(0.0, 0.0));
    let left = DenseTensor::new(vec![4, 2], vec![o, z, z, o, o, -o, o, w]).expect("static matrix");
    let right = DenseTensor::new(vec![2, 4], vec![z, o, o, o, o, z, o, -w.conj()]).expect("static matrix");
    (left, right)
}

/// The first `n` odd primes, 3, 5, 7, 11, ...
pub fn odd_primes(n: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(n);
    let mut p = 3u64;
    while out.len() < n {
        if (3..).step_by(2).take_while(|q: &u64| q * q <= p).all(|q| !p.is_multiple_of(q)) {
            out.push(p);
        }
        p += 2;
    }
    out
}

/// Number of primes `<= x`.
pub fn prime_count(x: u64) -> usize {
    if x < 2 {
        return 0;
    }
    let n = x as usize;
    let mut sieve = vec![true; n + 1];
    sieve[0] = false;
    sieve[1] = false;
    let mut i = 2;
    while i * i <= n {
        if sieve[i] {
            (i * i..=n).step_by(i).for_each(|j| sieve[j] = false);
        }
        i += 1;
    }
    sieve.iter().filter(|&&b| b).count()
}

/// `n_i` with `2 n_i - 1` the i-th odd prime: 2, 3, 4, 6, 7, 9, ...
fn prime_indices(n: usize) -> Vec<f64> {
    odd_primes(n).into_iter().map(|p| p.div_ceil(2) as f64).collect()
}

/// `K_ij = n_i + n_j - 1`.
pub fn prime_matrix(n: usize) -> Result<DenseTensor> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let idx = prime_indices(n);
    let rows: Vec<Vec<f64>> = idx.iter().map(|a| idx.iter().map(|b| a + b - 1.0).collect()).collect();
    DenseTensor::matrix(&rows)
}

/// `M_ij = sqrt(n_i) + i sqrt(n_j - 1)`, rank 2, with `|M|^2 = K`.
pub fn complex_sqrt_prime_witness(n: usize) -> Result<DenseTensor> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let idx = prime_indices(n);
    let data = idx
        .iter()
        .flat_map(|a| idx.iter().map(move |b| c(a.sqrt(), (b - 1.0).sqrt())))
        .collect();
    DenseTensor::new(vec![n, n], data)
}

/// `M_ij = (j - i)^2`.
pub fn euclidean_matrix(n: usize) -> Result<DenseTensor> {
    euclidean_with(n, |d| d * d)
}

/// `H_ij = j - i`, a rank-2 real square root of [`euclidean_matrix`].
pub fn euclidean_sqrt_witness(n: usize) -> Result<DenseTensor> {
    euclidean_with(n, |d| d)
}

fn euclidean_with(n: usize, f: impl Fn(f64) -> f64) -> Result<DenseTensor> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f(j as f64 - i as f64)).collect()).collect();
    DenseTensor::matrix(&rows)
}

#[cfg(test)]
mod tests {
    use super::super::{matmul, matrix_rank, sqrt_witness_residual, DEFAULT_RANK_TOL};
    use super::*;

    fn rows(m: &DenseTensor) -> Vec<Vec<f64>> {
        let n = m.shape()[1];
        m.real_parts().chunks(n).map(|r| r.to_vec()).collect()
    }

    #[test]
    fn printed_entries() {
        assert_eq!(
            rows(&witness_matrix("B").unwrap().entries),
            vec![vec![2.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]]
        );
        let f = rows(&witness_matrix("F").unwrap().entries);
        assert_eq!(f[3], vec![1.0, 0.0, 1.0, 2.0, 1.0, 1.0, 2.0]);
        assert_eq!(f[6], vec![1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 3.0]);
        let d = rows(&witness_matrix("D").unwrap().entries);
        assert_eq!(d[3][0], (1.0 + 5f64.sqrt()) / 2.0);
        assert!(witness_matrix("G").is_err());
    }

    #[test]
    fn ordinary_rank_claims_hold() {
        for name in WITNESS_NAMES {
            let w = witness_matrix(name).unwrap();
            assert!(w.entries.real_parts().iter().all(|&v| v >= 0.0));
            if let Some(Bound::Exact(r)) = w.claimed_ranks.get(&RankKind::Rank) {
                assert_eq!(matrix_rank(&w.entries, DEFAULT_RANK_TOL).unwrap(), *r, "{name}");
            }
        }
    }

    #[test]
    fn printed_square_roots() {
        let b = witness_matrix("B").unwrap().entries;
        let s = b_complex_sqrt_witness();
        assert!(sqrt_witness_residual(&b, &s).unwrap() < 1e-15);
        assert_eq!(matrix_rank(&s, DEFAULT_RANK_TOL).unwrap(), 2);

        let e = witness_matrix("E").unwrap().entries;
        let (l, r) = e_complex_sqrt_factors();
        assert!(sqrt_witness_residual(&e, &matmul(&l, &r).unwrap()).unwrap() < 1e-15);
    }

    #[test]
    fn primes() {
        assert_eq!(odd_primes(6), vec![3, 5, 7, 11, 13, 17]);
        assert_eq!(prime_count(16), 6);
        assert_eq!(prime_count(2), 1);
        assert_eq!(rows(&prime_matrix(1).unwrap()), vec![vec![3.0]]);
        assert_eq!(rows(&prime_matrix(2).unwrap()), vec![vec![3.0, 4.0], vec![4.0, 5.0]]);
        assert_eq!(matrix_rank(&prime_matrix(4).unwrap(), DEFAULT_RANK_TOL).unwrap(), 2);
    }

    #[test]
    fn complex_prime_witness() {
        let w = complex_sqrt_prime_witness(1).unwrap();
        assert!((w.data()[0].norm_sqr() - 3.0).abs() < 1e-15);
        for n in 2..8 {
            let w = complex_sqrt_prime_witness(n).unwrap();
            assert_eq!(matrix_rank(&w, DEFAULT_RANK_TOL).unwrap(), 2);
            let max = w
                .abs_sqr()
                .real_parts()
                .iter()
                .zip(prime_matrix(n).unwrap().real_parts())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(max < 1e-12);
        }
    }

    #[test]
    fn euclidean() {
        assert_eq!(
            rows(&euclidean_matrix(3).unwrap()),
            vec![vec![0.0, 1.0, 4.0], vec![1.0, 0.0, 1.0], vec![4.0, 1.0, 0.0]]
        );
        let h = euclidean_sqrt_witness(7).unwrap();
        assert_eq!(h.abs_sqr(), euclidean_matrix(7).unwrap());
        assert_eq!(matrix_rank(&h, DEFAULT_RANK_TOL).unwrap(), 2);
    }
}
