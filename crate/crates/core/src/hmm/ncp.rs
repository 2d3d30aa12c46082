//! Non-negative CP decomposition of a 3-way tensor by multiplicative updates.

use rand::Rng;

use crate::{par, seed, Error, Result};

/// `X[i, j, k] ~ sum_s a[i, s] b[j, s] c[k, s]`, factors row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct NcpResult {
    pub rank: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// `||X - X_hat||_F / ||X||_F` (absolute when `X = 0`).
    pub residual: f64,
    pub iterations: usize,
}

const MAX_ITERS: usize = 5000;
const TARGET: f64 = 1e-12;
const EPS: f64 = 1e-300;

fn reconstruct(dims: [usize; 3], rank: usize, a: &[f64], b: &[f64], c: &[f64]) -> Vec<f64> {
    let [ni, nj, nk] = dims;
    let mut out = vec![0.0; ni * nj * nk];
    for i in 0..ni {
        for j in 0..nj {
            for k in 0..nk {
                out[(i * nj + j) * nk + k] = (0..rank).map(|s| a[i * rank + s] * b[j * rank + s] * c[k * rank + s]).sum();
            }
        }
    }
    out
}

fn residual(x: &[f64], dims: [usize; 3], rank: usize, a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let xh = reconstruct(dims, rank, a, b, c);
    let diff: f64 = x.iter().zip(&xh).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        diff / norm
    } else {
        diff
    }
}

/// One multiplicative update of the factor along `mode`.
fn update(x: &[f64], dims: [usize; 3], rank: usize, f: &mut [Vec<f64>; 3], mode: usize) {
    let (o1, o2) = match mode {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    // Gram product of the two other factors
    let gram = |m: &[f64], n: usize| {
        let mut g = vec![0.0; rank * rank];
        for row in 0..n {
            for s in 0..rank {
                for t in 0..rank {
                    g[s * rank + t] += m[row * rank + s] * m[row * rank + t];
                }
            }
        }
        g
    };
    let g1 = gram(&f[o1], dims[o1]);
    let g2 = gram(&f[o2], dims[o2]);
    let v: Vec<f64> = g1.iter().zip(&g2).map(|(p, q)| p * q).collect();
    let [ni, nj, nk] = dims;
    let mut num = vec![0.0; dims[mode] * rank];
    for i in 0..ni {
        for j in 0..nj {
            for k in 0..nk {
                let xv = x[(i * nj + j) * nk + k];
                if xv == 0.0 {
                    continue;
                }
                let idx = [i, j, k];
                for s in 0..rank {
                    num[idx[mode] * rank + s] += xv * f[o1][idx[o1] * rank + s] * f[o2][idx[o2] * rank + s];
                }
            }
        }
    }
    let m = &mut f[mode];
    for row in 0..dims[mode] {
        for s in 0..rank {
            let den: f64 = (0..rank).map(|t| m[row * rank + t] * v[t * rank + s]).sum();
            m[row * rank + s] *= num[row * rank + s] / (den + EPS);
        }
    }
}

fn single(x: &[f64], dims: [usize; 3], rank: usize, seed: u64) -> NcpResult {
    let mut rng = seed::rng(seed);
    let scale = x.iter().fold(0.0f64, |m, v| m.max(*v)).max(EPS).powf(1.0 / 3.0);
    let mut f: [Vec<f64>; 3] =
        std::array::from_fn(|m| (0..dims[m] * rank).map(|_| scale * (0.1 + rng.random::<f64>())).collect());
    let mut res = f64::INFINITY;
    let mut it = 0;
    while it < MAX_ITERS {
        for mode in 0..3 {
            update(x, dims, rank, &mut f, mode);
        }
        it += 1;
        if it % 50 == 0 || it == MAX_ITERS {
            res = residual(x, dims, rank, &f[0], &f[1], &f[2]);
            if res < TARGET {
                break;
            }
        }
    }
    let [a, b, c] = f;
    NcpResult {
        rank,
        a,
        b,
        c,
        residual: res,
        iterations: it,
    }
}

/// Best of `restarts` multiplicative-update runs at the given rank.
/// Exactness is never assumed: check `residual`.
pub fn ncp(x: &[f64], dims: [usize; 3], rank: usize, restarts: usize, seed: u64) -> Result<NcpResult> {
    if x.len() != dims.iter().product::<usize>() {
        return Err(Error::Shape(format!("{} entries for dimensions {dims:?}", x.len())));
    }
    if let Some(&v) = x.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::NegativeEntry { value: v });
    }
    if rank == 0 || restarts == 0 {
        return Err(Error::InvalidArgument("rank and restarts must be positive".into()));
    }
    let runs = par::map_indexed(restarts, |k| single(x, dims, rank, seed::derive(seed, k as u64)));
    Ok(runs
        .into_iter()
        .reduce(|best, r| if r.residual < best.residual { r } else { best })
        .unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_one_tensor_is_recovered() {
        let a = [1.0, 2.0];
        let b = [0.5, 1.0, 3.0];
        let c = [2.0, 1.0];
        let mut x = Vec::new();
        for p in a {
            for q in b {
                for r in c {
                    x.push(p * q * r);
                }
            }
        }
        let r = ncp(&x, [2, 3, 2], 1, 2, 0).unwrap();
        assert!(r.residual < 1e-10, "{}", r.residual);
    }

    #[test]
    fn underfit_reports_residual() {
        // a 2x2x2 "diagonal" tensor has non-negative rank 2
        let mut x = vec![0.0; 8];
        x[0] = 1.0;
        x[7] = 1.0;
        let r1 = ncp(&x, [2, 2, 2], 1, 3, 1).unwrap();
        assert!(r1.residual > 0.5);
        let r2 = ncp(&x, [2, 2, 2], 2, 3, 1).unwrap();
        assert!(r2.residual < 1e-6);
    }

    #[test]
    fn rejects_negative_input() {
        assert!(ncp(&[1.0, -1.0], [1, 1, 2], 1, 1, 0).is_err());
    }
}
