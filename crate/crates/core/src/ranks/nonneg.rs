//! Non-negative rank: multiplicative-update search and an exact decision
//! procedure for very small matrices.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{
    from_real_dmatrix, matrix_rank, nonneg_dmatrix, relative_residual, Bound, RankCertificate, RankKind, Witness,
    DEFAULT_RANK_TOL, SEARCH_TOL,
};
use crate::{par, seed, DenseTensor, Error, Result};

const EPS: f64 = 1e-300;
const ANLS_SWEEPS: usize = 2000;

struct Nmf {
    w: DMatrix<f64>,
    h: DMatrix<f64>,
    residual: f64,
}

fn random_factor<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * (0.1 + rng.random::<f64>()))
}

fn mu_run(m: &DMatrix<f64>, k: usize, iters: usize, seed: u64) -> Nmf {
    let mut rng = seed::rng(seed);
    let scale = (m.max().max(EPS) / k as f64).sqrt();
    let mut w = random_factor(m.nrows(), k, scale, &mut rng);
    let mut h = random_factor(k, m.ncols(), scale, &mut rng);
    let mut residual = relative_residual(m, &(&w * &h));
    for it in 1..=iters {
        let num = w.transpose() * m;
        let den = w.transpose() * &w * &h;
        h.zip_zip_apply(&num, &den, |x, n, d| *x *= n / (d + EPS));
        let num = m * h.transpose();
        let den = &w * (&h * h.transpose());
        w.zip_zip_apply(&num, &den, |x, n, d| *x *= n / (d + EPS));
        if it % 100 == 0 || it == iters {
            residual = relative_residual(m, &(&w * &h));
            if residual < 1e-14 {
                break;
            }
        }
    }
    Nmf { w, h, residual }
}

fn certificate(kind: RankKind, bound: Bound, fit: Nmf) -> RankCertificate {
    RankCertificate {
        kind,
        bound,
        witness: Witness::Factors {
            left: from_real_dmatrix(&fit.w),
            right: from_real_dmatrix(&fit.h),
        },
        residual: fit.residual,
    }
}

/// Best non-negative factorization with inner dimension `k` over `restarts`
/// multiplicative-update runs, each refined by alternating non-negative
/// least squares when it falls short of the target. The bound is `AtMost(k)` when the relative
/// residual is below `1e-8` and `Inconclusive(k)` otherwise.
pub fn nonneg_rank_search(
    m: &DenseTensor,
    k: usize,
    restarts: usize,
    iters: usize,
    seed: u64,
) -> Result<RankCertificate> {
    let a = nonneg_dmatrix(m)?;
    if k == 0 || restarts == 0 {
        return Err(Error::InvalidArgument("k and restarts must be positive".into()));
    }
    // the polish enumerates 2^k active sets per row and column
    let polish = k <= 5 && a.nrows() < 32 && a.ncols() < 32;
    let all_rows = vec![u32::MAX >> (32 - a.nrows().min(31)); k];
    let all_cols = vec![u32::MAX >> (32 - a.ncols().min(31)); k];
    let runs = par::map_indexed(restarts, |r| {
        let fit = mu_run(&a, k, iters, seed::derive(seed, r as u64));
        if fit.residual < SEARCH_TOL || !polish {
            return fit;
        }
        // multiplicative updates slow down near exact solutions with zeros
        let polished = anls_supported(&a, &all_rows, &all_cols, fit.h.clone(), ANLS_SWEEPS);
        if polished.residual < fit.residual {
            polished
        } else {
            fit
        }
    });
    let best = runs
        .into_iter()
        .reduce(|best, r| if r.residual < best.residual { r } else { best })
        .expect("restarts > 0");
    let bound = if best.residual < SEARCH_TOL {
        Bound::AtMost(k)
    } else {
        Bound::Inconclusive(k)
    };
    Ok(certificate(RankKind::NonnegRank, bound, best))
}

/// Least squares `min ||A x - b||, x >= 0, x_s = 0 outside allowed`, solved
/// by enumerating active sets (only for a handful of unknowns).
fn nnls_small(a: &DMatrix<f64>, b: &DVector<f64>, allowed: &[bool]) -> DVector<f64> {
    let k = a.ncols();
    let mut best = DVector::zeros(k);
    let mut best_res = b.norm_squared();
    for mask in 1u32..(1 << k) {
        let cols: Vec<usize> = (0..k).filter(|&s| mask >> s & 1 == 1).collect();
        if cols.iter().any(|&s| !allowed[s]) {
            continue;
        }
        let sub = DMatrix::from_fn(a.nrows(), cols.len(), |r, c| a[(r, cols[c])]);
        let Ok(x) = sub.clone().svd(true, true).solve(b, 1e-14) else {
            continue;
        };
        if x.iter().any(|&v| v < 0.0) {
            continue;
        }
        let res = (&sub * &x - b).norm_squared();
        if res < best_res {
            best_res = res;
            best = DVector::zeros(k);
            cols.iter().zip(x.iter()).for_each(|(&s, &v)| best[s] = v);
        }
    }
    best
}

/// Alternating non-negative least squares with supports: the inner index
/// `s` may only touch rows `rows[s]` of `W` and columns `cols[s]` of `H`.
/// Starts from `h`, which must vanish outside the column supports.
fn anls_supported(m: &DMatrix<f64>, rows: &[u32], cols: &[u32], mut h: DMatrix<f64>, sweeps: usize) -> Nmf {
    let k = rows.len();
    let (nr, nc) = m.shape();
    let mut w = DMatrix::zeros(nr, k);
    let mut residual = f64::INFINITY;
    for _ in 0..sweeps {
        let ht = h.transpose();
        for i in 0..nr {
            let allowed: Vec<bool> = (0..k).map(|s| rows[s] >> i & 1 == 1).collect();
            let x = nnls_small(&ht, &m.row(i).transpose(), &allowed);
            w.set_row(i, &x.transpose());
        }
        for j in 0..nc {
            let allowed: Vec<bool> = (0..k).map(|s| cols[s] >> j & 1 == 1).collect();
            let x = nnls_small(&w, &m.column(j).into_owned(), &allowed);
            h.set_column(j, &x);
        }
        let r = relative_residual(m, &(&w * &h));
        let stalled = r > 0.999_999 * residual;
        residual = r;
        if residual < 1e-14 || stalled {
            break;
        }
    }
    Nmf { w, h, residual }
}

/// Maximal all-positive combinatorial rectangles, as (row mask, column mask).
fn maximal_rectangles(m: &DMatrix<f64>) -> Vec<(u32, u32)> {
    let (nr, nc) = m.shape();
    let row_support = |i: usize| (0..nc).filter(|&j| m[(i, j)] > 0.0).fold(0u32, |acc, j| acc | 1 << j);
    let supports: Vec<u32> = (0..nr).map(row_support).collect();
    let mut out = Vec::new();
    for rmask in 1u32..(1 << nr) {
        let cmask = (0..nr).filter(|&i| rmask >> i & 1 == 1).fold((1u32 << nc) - 1, |acc, i| acc & supports[i]);
        if cmask == 0 {
            continue;
        }
        let closure = (0..nr).filter(|&i| supports[i] & cmask == cmask).fold(0u32, |acc, i| acc | 1 << i);
        if closure == rmask {
            out.push((rmask, cmask));
        }
    }
    out
}

/// Multisets of size `k` drawn from `0..n`, as sorted vectors.
fn multisets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Decides whether `m` (at most 4x4) has non-negative rank at most `k`.
///
/// The supports of the `k` rank-one terms must be all-positive rectangles
/// whose union covers the support of `m`. If no `k` maximal rectangles cover
/// it, or the matrix rank already exceeds `k`, the answer is a proof of
/// `AtLeast(k + 1)`. Otherwise each covering is tried by support-constrained
/// alternating least squares; success gives `AtMost(k)` with the factors.
/// A covering that exists but cannot be realized numerically yields
/// `Inconclusive(k)`.
pub fn nonneg_rank_exact_small(m: &DenseTensor, k: usize) -> Result<RankCertificate> {
    let a = nonneg_dmatrix(m)?;
    let (nr, nc) = a.shape();
    if nr > 4 || nc > 4 {
        return Err(Error::InvalidArgument(format!("exact search is limited to 4x4, got {nr}x{nc}")));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let proof = |candidates| RankCertificate {
        kind: RankKind::NonnegRank,
        bound: Bound::AtLeast(k + 1),
        witness: Witness::Exhaustive { candidates },
        residual: 0.0,
    };
    if k >= nr.min(nc) {
        let fit = if nr <= nc {
            Nmf { w: DMatrix::identity(nr, k), h: a.clone().resize(k, nc, 0.0), residual: 0.0 }
        } else {
            Nmf { w: a.clone().resize(nr, k, 0.0), h: DMatrix::identity(k, nc), residual: 0.0 }
        };
        return Ok(certificate(RankKind::NonnegRank, Bound::AtMost(k), fit));
    }
    if matrix_rank(m, DEFAULT_RANK_TOL)? > k {
        return Ok(proof(0));
    }
    let support = (0..nr)
        .flat_map(|i| (0..nc).map(move |j| (i, j)))
        .filter(|&(i, j)| a[(i, j)] > 0.0)
        .collect::<Vec<_>>();
    let rects = maximal_rectangles(&a);
    let covers: Vec<Vec<usize>> = multisets(rects.len(), k)
        .into_iter()
        .filter(|set| {
            support
                .iter()
                .all(|&(i, j)| set.iter().any(|&s| rects[s].0 >> i & 1 == 1 && rects[s].1 >> j & 1 == 1))
        })
        .collect();
    if covers.is_empty() {
        return Ok(proof(multisets(rects.len(), k).len() as u64));
    }
    let fits = par::map_indexed(covers.len(), |c| {
        let rows: Vec<u32> = covers[c].iter().map(|&s| rects[s].0).collect();
        let cols: Vec<u32> = covers[c].iter().map(|&s| rects[s].1).collect();
        (0..8u64)
            .map(|t| {
                let mut rng = seed::rng(seed::derive(c as u64, t));
                let h = DMatrix::from_fn(k, nc, |s, j| {
                    if cols[s] >> j & 1 == 1 {
                        0.1 + rng.random::<f64>()
                    } else {
                        0.0
                    }
                });
                anls_supported(&a, &rows, &cols, h, ANLS_SWEEPS)
            })
            .reduce(|best, r| if r.residual < best.residual { r } else { best })
            .expect("non-empty")
    });
    let best = fits
        .into_iter()
        .reduce(|best, r| if r.residual < best.residual { r } else { best })
        .expect("non-empty");
    let fit = best;
    let bound = if fit.residual < SEARCH_TOL {
        Bound::AtMost(k)
    } else {
        Bound::Inconclusive(k)
    };
    Ok(certificate(RankKind::NonnegRank, bound, fit))
}

#[cfg(test)]
mod tests {
    use super::super::witness_matrix;
    use super::*;

    fn random_rank2(seed: u64) -> DenseTensor {
        let mut rng = seed::rng(seed);
        let w = DMatrix::from_fn(4, 2, |_, _| rng.random::<f64>());
        let h = DMatrix::from_fn(2, 5, |_, _| rng.random::<f64>());
        from_real_dmatrix(&(w * h))
    }

    #[test]
    fn rank_one_is_exact() {
        let m = DenseTensor::matrix(&[vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0]]).unwrap();
        let c = nonneg_rank_search(&m, 1, 2, 500, 0).unwrap();
        assert_eq!(c.bound, Bound::AtMost(1));
        assert!(c.residual < 1e-10);
    }

    #[test]
    fn random_rank_two_matrices_factor_at_two() {
        for s in 0..20 {
            let c = nonneg_rank_search(&random_rank2(s), 2, 10, 20_000, s).unwrap();
            assert_eq!(c.bound, Bound::AtMost(2), "seed {s}: residual {}", c.residual);
        }
    }

    #[test]
    fn witness_a() {
        let a = witness_matrix("A").unwrap().entries;
        let c4 = nonneg_rank_search(&a, 4, 10, 20_000, 0).unwrap();
        assert_eq!(c4.bound, Bound::AtMost(4), "residual {}", c4.residual);
        let c3 = nonneg_rank_search(&a, 3, 100, 2000, 0).unwrap();
        assert_eq!(c3.bound, Bound::Inconclusive(3));
        assert_eq!(nonneg_rank_exact_small(&a, 3).unwrap().bound, Bound::AtLeast(4));
        assert_eq!(nonneg_rank_exact_small(&a, 4).unwrap().bound, Bound::AtMost(4));
    }

    #[test]
    fn exact_small_finds_factorizations() {
        let m = DenseTensor::matrix(&[vec![1.0, 2.0, 3.0], vec![2.0, 1.0, 3.0], vec![3.0, 3.0, 6.0]]).unwrap();
        let c = nonneg_rank_exact_small(&m, 2).unwrap();
        assert_eq!(c.bound, Bound::AtMost(2));
        assert!(c.residual < SEARCH_TOL);
        assert_eq!(nonneg_rank_exact_small(&m, 1).unwrap().bound, Bound::AtLeast(2));
        // identity: no rectangle covers two diagonal entries
        let id = DenseTensor::matrix(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        assert_eq!(nonneg_rank_exact_small(&id, 2).unwrap().bound, Bound::AtLeast(3));
        let big = DenseTensor::zeros(vec![5, 5]);
        assert!(nonneg_rank_exact_small(&big, 2).is_err());
    }

    #[test]
    fn factors_reproduce() {
        let m = random_rank2(99);
        let c = nonneg_rank_search(&m, 2, 4, 20_000, 1).unwrap();
        let Witness::Factors { left, right } = &c.witness else {
            panic!("factors expected")
        };
        assert!(left.real_parts().iter().chain(right.real_parts().iter()).all(|&v| v >= 0.0));
        let prod = super::super::matmul(left, right).unwrap();
        let r = relative_residual(&nonneg_dmatrix(&m).unwrap(), &nonneg_dmatrix(&prod).unwrap());
        assert!((r - c.residual).abs() < 1e-12);
    }
}
