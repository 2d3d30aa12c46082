//! Hadamard square-root ranks: exact real search by sign enumeration and a
//! phase-retrieval style search for complex upper bounds.

use nalgebra::DMatrix;
use rand::Rng;

use super::{from_real_dmatrix, nonneg_dmatrix, relative_residual, Bound, RankCertificate, RankKind, Witness, SEARCH_TOL};
use crate::{linalg, par, seed, DenseTensor, Error, Result, C64};

/// Default cap on the number of nonzero entries for [`real_sqrt_rank`].
pub const DEFAULT_MAX_ENTRIES: usize = 16;

const PATTERN_CHUNK: usize = 256;
const PHASE_ITERS: usize = 5000;

/// Nonzero positions split into those whose sign can be fixed to `+` by row
/// and column flips (a spanning forest of the bipartite support graph) and
/// the remaining free ones.
fn free_entries(a: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let (nr, nc) = a.shape();
    let mut parent: Vec<usize> = (0..nr + nc).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut free = Vec::new();
    for i in 0..nr {
        for j in 0..nc {
            if a[(i, j)] == 0.0 {
                continue;
            }
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, nr + j));
            if ri == rj {
                free.push((i, j));
            } else {
                parent[ri] = rj;
            }
        }
    }
    free
}

fn signed_root(root: &DMatrix<f64>, free: &[(usize, usize)], pattern: u64) -> DMatrix<f64> {
    let mut s = root.clone();
    for (b, &(i, j)) in free.iter().enumerate() {
        if pattern >> b & 1 == 1 {
            s[(i, j)] = -s[(i, j)];
        }
    }
    s
}

fn rank_of(s: &DMatrix<f64>) -> usize {
    linalg::rank_from_singular_values(&linalg::singular_values_r(s), super::DEFAULT_RANK_TOL)
}

/// Real Hadamard square-root rank, exactly, by enumerating every sign
/// pattern of the entrywise square root up to row and column sign flips.
///
/// The certificate's witness is a root attaining the minimum together with
/// the number of patterns examined.
pub fn real_sqrt_rank(m: &DenseTensor, max_entries: usize) -> Result<(usize, RankCertificate)> {
    let a = nonneg_dmatrix(m)?;
    let nonzero = a.iter().filter(|&&v| v != 0.0).count();
    if nonzero > max_entries {
        return Err(Error::InvalidArgument(format!(
            "{nonzero} nonzero entries exceed the cap of {max_entries}"
        )));
    }
    let root = a.map(f64::sqrt);
    let free = free_entries(&a);
    let patterns = 1u64 << free.len();
    let best = par::map_chunks(patterns as usize, PATTERN_CHUNK, |range| {
        range
            .map(|p| (rank_of(&signed_root(&root, &free, p as u64)), p as u64))
            .min()
            .expect("non-empty chunk")
    })
    .into_iter()
    .min()
    .expect("at least one pattern");
    let (rank, pattern) = best;
    let cert = RankCertificate {
        kind: RankKind::RealSqrtRank,
        bound: Bound::Exact(rank),
        witness: Witness::SignedRoot {
            root: from_real_dmatrix(&signed_root(&root, &free, pattern)),
            candidates: patterns,
        },
        residual: 0.0,
    };
    Ok((rank, cert))
}

fn phase_run(root: &DMatrix<f64>, target: &DMatrix<f64>, k: usize, seed: u64) -> (DMatrix<C64>, DMatrix<C64>, f64) {
    let mut rng = seed::rng(seed);
    let mut x = root.map(|r| C64::from_polar(r, rng.random::<f64>() * std::f64::consts::TAU));
    let mut best = (DMatrix::zeros(0, 0), DMatrix::zeros(0, 0), f64::INFINITY);
    for it in 1..=PHASE_ITERS {
        let (u, s, vt) = truncated(x.clone(), k);
        let y = &u * DMatrix::from_diagonal(&s.map(|v| C64::new(v, 0.0))) * &vt;
        if it % 25 == 0 || it == PHASE_ITERS {
            let res = relative_residual(target, &y.map(|z| z.norm_sqr()));
            if res < best.2 {
                let sq = s.map(|v| C64::new(v.sqrt(), 0.0));
                let left = &u * DMatrix::from_diagonal(&sq);
                let right = DMatrix::from_diagonal(&sq) * &vt;
                best = (left, right, res);
            }
            if res < 1e-14 {
                break;
            }
        }
        x = root.zip_map(&y, |r, z| if z.norm() > 0.0 { z * (r / z.norm()) } else { C64::new(r, 0.0) });
    }
    best
}

/// Rank-`k` SVD truncation with exactly `k` components.
fn truncated(m: DMatrix<C64>, k: usize) -> (DMatrix<C64>, nalgebra::DVector<f64>, DMatrix<C64>) {
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.expect("U"), svd.v_t.expect("V^T"));
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    order.truncate(k);
    let uk = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let vk = DMatrix::from_fn(order.len(), vt.ncols(), |r, c| vt[(order[r], c)]);
    let s = nalgebra::DVector::from_iterator(order.len(), order.iter().map(|&i| svd.singular_values[i]));
    (uk, s, vk)
}

/// Searches for a complex matrix `S = L R` of rank `k` with `|S|^2 = m`
/// entrywise by alternating between the rank-`k` matrices and the matrices
/// with moduli `sqrt(m)`. Success (`AtMost(k)`) requires relative residual
/// below `1e-8`; otherwise the result is `Inconclusive(k)`.
pub fn complex_sqrt_rank_search(m: &DenseTensor, k: usize, restarts: usize, seed: u64) -> Result<RankCertificate> {
    let a = nonneg_dmatrix(m)?;
    if k == 0 || restarts == 0 {
        return Err(Error::InvalidArgument("k and restarts must be positive".into()));
    }
    let root = a.map(f64::sqrt);
    let (nr, nc) = a.shape();
    if k >= nr.min(nc) {
        let croot = root.map(|v| C64::new(v, 0.0));
        let (left, right) = if nr <= nc {
            (DMatrix::identity(nr, k), croot.resize(k, nc, C64::new(0.0, 0.0)))
        } else {
            (croot.resize(nr, k, C64::new(0.0, 0.0)), DMatrix::identity(k, nc))
        };
        return Ok(RankCertificate {
            kind: RankKind::ComplexSqrtRank,
            bound: Bound::AtMost(k),
            witness: Witness::Factors {
                left: linalg::from_cmatrix(&left),
                right: linalg::from_cmatrix(&right),
            },
            residual: 0.0,
        });
    }
    let runs = par::map_indexed(restarts, |r| phase_run(&root, &a, k, seed::derive(seed, r as u64)));
    let (left, right, residual) = runs
        .into_iter()
        .reduce(|best, r| if r.2 < best.2 { r } else { best })
        .expect("restarts > 0");
    Ok(RankCertificate {
        kind: RankKind::ComplexSqrtRank,
        bound: if residual < SEARCH_TOL {
            Bound::AtMost(k)
        } else {
            Bound::Inconclusive(k)
        },
        witness: Witness::Factors {
            left: linalg::from_cmatrix(&left),
            right: linalg::from_cmatrix(&right),
        },
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{matmul, matrix_rank, prime_matrix, sqrt_witness_residual, witness_matrix, DEFAULT_RANK_TOL};
    use super::*;
    use rand::seq::SliceRandom;

    fn permuted(m: &DenseTensor, seed: u64) -> DenseTensor {
        let a = nonneg_dmatrix(m).unwrap();
        let mut rng = seed::rng(seed);
        let mut rows: Vec<usize> = (0..a.nrows()).collect();
        let mut cols: Vec<usize> = (0..a.ncols()).collect();
        rows.shuffle(&mut rng);
        cols.shuffle(&mut rng);
        from_real_dmatrix(&DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(rows[i], cols[j])]))
    }

    #[test]
    fn witness_b_and_c() {
        let (rb, cert) = real_sqrt_rank(&witness_matrix("B").unwrap().entries, DEFAULT_MAX_ENTRIES).unwrap();
        assert_eq!(rb, 3);
        assert_eq!(cert.bound, Bound::Exact(3));
        let (rc, cert) = real_sqrt_rank(&witness_matrix("C").unwrap().entries, DEFAULT_MAX_ENTRIES).unwrap();
        assert_eq!(rc, 2);
        let Witness::SignedRoot { root: s, .. } = cert.witness else { panic!("root expected") };
        assert_eq!(matrix_rank(&s, DEFAULT_RANK_TOL).unwrap(), 2);
        assert!(sqrt_witness_residual(&witness_matrix("C").unwrap().entries, &s).unwrap() < 1e-15);
    }

    #[test]
    fn prime_matrix_is_full() {
        assert_eq!(real_sqrt_rank(&prime_matrix(3).unwrap(), DEFAULT_MAX_ENTRIES).unwrap().0, 3);
    }

    #[test]
    fn permutation_invariance() {
        for name in ["A", "B", "C"] {
            let m = witness_matrix(name).unwrap().entries;
            let r = real_sqrt_rank(&m, DEFAULT_MAX_ENTRIES).unwrap().0;
            for s in 0..5 {
                assert_eq!(real_sqrt_rank(&permuted(&m, s), DEFAULT_MAX_ENTRIES).unwrap().0, r);
            }
        }
    }

    #[test]
    fn entry_cap() {
        let m = DenseTensor::from_real(vec![3, 6], &[1.0; 18]).unwrap();
        assert!(real_sqrt_rank(&m, DEFAULT_MAX_ENTRIES).is_err());
        assert_eq!(real_sqrt_rank(&m, 18).unwrap().0, 1);
    }

    #[test]
    fn complex_search_on_b_and_e() {
        for name in ["B", "E"] {
            let m = witness_matrix(name).unwrap().entries;
            let cert = complex_sqrt_rank_search(&m, 2, 20, 0).unwrap();
            assert_eq!(cert.bound, Bound::AtMost(2), "{name}: residual {}", cert.residual);
            let Witness::Factors { left, right } = &cert.witness else { panic!() };
            let s = matmul(left, right).unwrap();
            assert!(sqrt_witness_residual(&m, &s).unwrap() < SEARCH_TOL);
        }
    }

    #[test]
    fn complex_search_full_rank_is_trivial() {
        let m = witness_matrix("D").unwrap().entries;
        let cert = complex_sqrt_rank_search(&m, 5, 1, 0).unwrap();
        assert_eq!(cert.bound, Bound::AtMost(5));
        assert_eq!(cert.residual, 0.0);
    }
}
