//! HMM to non-negative MPS and back.

use super::ncp::ncp;
use super::{normalize_columns, Hmm};
use crate::models::{FieldKind, MpsModel};
use crate::{DenseTensor, Error, Result};

/// Non-negative MPS with `A_i[x][j][k] = P(H_i = k | H_{i-1} = j) P(X_i = x | H_i = k)`.
/// The initial distribution sits in the first core and the last hidden
/// variable is summed into the last core, so the bond dimension is `r`.
pub fn hmm_to_mps(h: &Hmm) -> Result<MpsModel> {
    let n = h.n_sites();
    let r = h.hidden_dim();
    let d = h.obs_dim();
    if n < 2 || d < 2 {
        return Err(Error::InvalidArgument(
            "an MPS image needs at least 2 sites and 2 symbols".into(),
        ));
    }
    let mut cores = Vec::with_capacity(n);
    for i in 0..n {
        let (rl, rr) = match i {
            0 => (1, r),
            _ if i == n - 1 => (r, 1),
            _ => (r, r),
        };
        let mut data = vec![0.0; d * rl * rr];
        for x in 0..d {
            for j in 0..rl {
                for k in 0..r {
                    let w = if i == 0 {
                        h.initial()[k]
                    } else {
                        h.transition(i - 1, k, j)
                    } * h.emission(i, x, k);
                    let col = if i == n - 1 { 0 } else { k };
                    data[(x * rl + j) * rr + col] += w;
                }
            }
        }
        cores.push(DenseTensor::from_real(vec![d, rl, rr], &data)?);
    }
    MpsModel::new(FieldKind::NonNeg, cores)
}

/// Result of [`mps_to_hmm`].
#[derive(Clone, Debug)]
pub struct MpsToHmm {
    pub hmm: Hmm,
    /// Relative residual of the non-negative CP split of each core.
    pub residuals: Vec<f64>,
    /// Whether every split passed the `1e-8` exactness threshold.
    pub exact: bool,
}

/// Split of one core as `A[x][j][k] = sum_s L[j][s] E[x][s] R[s][k]`.
struct Split {
    hidden: usize,
    left: Vec<f64>,  // rl x s
    emit: Vec<f64>,  // d x s
    right: Vec<f64>, // s x rr
    residual: f64,
}

/// Exact split with `min(rl rr, d rl, d rr)` terms, built from Kronecker
/// deltas and the core entries.
fn exact_split(a: &[f64], d: usize, rl: usize, rr: usize) -> Split {
    let at = |x: usize, j: usize, k: usize| a[(x * rl + j) * rr + k];
    let sizes = [rl * rr, d * rr, d * rl];
    let choice = (0..3).min_by_key(|&c| sizes[c]).unwrap();
    let s = sizes[choice];
    let mut left = vec![0.0; rl * s];
    let mut emit = vec![0.0; d * s];
    let mut right = vec![0.0; s * rr];
    for h in 0..s {
        match choice {
            0 => {
                let (j, k) = (h / rr, h % rr);
                left[j * s + h] = 1.0;
                right[h * rr + k] = 1.0;
                for x in 0..d {
                    emit[x * s + h] = at(x, j, k);
                }
            }
            1 => {
                let (x, k) = (h / rr, h % rr);
                emit[x * s + h] = 1.0;
                right[h * rr + k] = 1.0;
                for j in 0..rl {
                    left[j * s + h] = at(x, j, k);
                }
            }
            _ => {
                let (x, j) = (h / rl, h % rl);
                emit[x * s + h] = 1.0;
                left[j * s + h] = 1.0;
                for k in 0..rr {
                    right[h * rr + k] = at(x, j, k);
                }
            }
        }
    }
    Split {
        hidden: s,
        left,
        emit,
        right,
        residual: 0.0,
    }
}

fn capped_split(a: &[f64], d: usize, rl: usize, rr: usize, cap: usize, restarts: usize, seed: u64) -> Result<Split> {
    // reorder to X[j][x][k]
    let mut x = vec![0.0; rl * d * rr];
    for v in 0..d {
        for j in 0..rl {
            for k in 0..rr {
                x[(j * d + v) * rr + k] = a[(v * rl + j) * rr + k];
            }
        }
    }
    let f = ncp(&x, [rl, d, rr], cap, restarts, seed)?;
    let mut right = vec![0.0; cap * rr];
    for k in 0..rr {
        for s in 0..cap {
            right[s * rr + k] = f.c[k * cap + s];
        }
    }
    Ok(Split {
        hidden: cap,
        left: f.a,
        emit: f.b,
        right,
        residual: f.residual,
    })
}

/// Convert a non-negative MPS into an HMM over the same observed variables.
///
/// Every core is split as `A = sum_s L[., s] E[., s] R[s, .]` with
/// non-negative factors. Without `ncp_rank_cap` (or when the cap is at least
/// `min(rl rr, d rl, d rr)`) the split is exact and built in closed form;
/// otherwise a multiplicative-update CP decomposition with `restarts` random
/// starts is used and its residual reported. The resulting factor graph is
/// normalized with backward messages, which keeps the distribution over the
/// observed variables unchanged. The hidden dimension is at most
/// `min(d r, r^2)`.
pub fn mps_to_hmm(m: &MpsModel, ncp_rank_cap: Option<usize>, restarts: usize, seed: u64) -> Result<MpsToHmm> {
    if m.field() != FieldKind::NonNeg {
        return Err(Error::InvalidArgument("only non-negative MPS map to HMMs".into()));
    }
    if ncp_rank_cap == Some(0) {
        return Err(Error::InvalidArgument("rank cap must be positive".into()));
    }
    let d = m.phys_dim();
    let n = m.n_sites();
    let mut splits = Vec::with_capacity(n);
    for (i, core) in m.cores().iter().enumerate() {
        let (rl, rr) = (core.shape()[1], core.shape()[2]);
        let a = core.real_parts();
        let exact_size = (rl * rr).min(d * rr).min(d * rl);
        splits.push(match ncp_rank_cap {
            Some(cap) if cap < exact_size => capped_split(&a, d, rl, rr, cap, restarts.max(1), crate::seed::derive(seed, i as u64))?,
            _ => exact_split(&a, d, rl, rr),
        });
    }

    // unnormalized chain: phi -> (E_1) -> M_1 -> (E_2) -> ... -> (E_N) -> psi
    let phi: Vec<f64> = splits[0].left.clone();
    let psi: Vec<f64> = splits[n - 1].right.clone();
    let links: Vec<Vec<f64>> = (0..n - 1)
        .map(|i| {
            let (s1, s2) = (&splits[i], &splits[i + 1]);
            let rr = m.cores()[i].shape()[2];
            let mut link = vec![0.0; s1.hidden * s2.hidden];
            for h in 0..s1.hidden {
                for g in 0..s2.hidden {
                    link[h * s2.hidden + g] = (0..rr).map(|k| s1.right[h * rr + k] * s2.left[k * s2.hidden + g]).sum();
                }
            }
            link
        })
        .collect();
    let emit_sums: Vec<Vec<f64>> = splits
        .iter()
        .map(|s| (0..s.hidden).map(|h| (0..d).map(|x| s.emit[x * s.hidden + h]).sum()).collect())
        .collect();

    // backward messages: c_i(h) = future weight after emitting at site i,
    // beta_i(h) = e_i(h) c_i(h); rescaled per site
    let mut c: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut beta: Vec<Vec<f64>> = vec![Vec::new(); n];
    c[n - 1] = psi;
    for i in (0..n).rev() {
        if i < n - 1 {
            let w = splits[i + 1].hidden;
            c[i] = (0..splits[i].hidden)
                .map(|h| (0..w).map(|g| links[i][h * w + g] * beta[i + 1][g]).sum())
                .collect();
        }
        let mut b: Vec<f64> = c[i].iter().zip(&emit_sums[i]).map(|(p, q)| p * q).collect();
        let scale = b.iter().fold(0.0f64, |a, v| a.max(*v));
        if !(scale > 0.0) {
            return Err(Error::ZeroNormalization);
        }
        b.iter_mut().for_each(|v| *v /= scale);
        c[i].iter_mut().for_each(|v| *v /= scale);
        beta[i] = b;
    }

    let r = splits.iter().map(|s| s.hidden).max().unwrap();
    let mut initial = vec![0.0; r];
    for h in 0..splits[0].hidden {
        initial[h] = phi[h] * beta[0][h];
    }
    normalize_columns(&mut initial, r, 1);
    let transitions = (0..n - 1)
        .map(|i| {
            let (w1, w2) = (splits[i].hidden, splits[i + 1].hidden);
            let mut t = vec![0.0; r * r];
            for h in 0..w1 {
                if c[i][h] > 0.0 {
                    for g in 0..w2 {
                        t[g * r + h] = links[i][h * w2 + g] * beta[i + 1][g] / c[i][h];
                    }
                }
            }
            normalize_columns(&mut t, r, r);
            t
        })
        .collect();
    let emissions = splits
        .iter()
        .map(|s| {
            let mut e = vec![0.0; d * r];
            for x in 0..d {
                for h in 0..s.hidden {
                    e[x * r + h] = s.emit[x * s.hidden + h];
                }
            }
            normalize_columns(&mut e, d, r);
            e
        })
        .collect();
    let residuals: Vec<f64> = splits.iter().map(|s| s.residual).collect();
    let exact = residuals.iter().all(|&v| v < 1e-8);
    Ok(MpsToHmm {
        hmm: Hmm::new(initial, transitions, emissions)?,
        residuals,
        exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{config_from_index, Model};

    fn tv(h: &Hmm, m: &Model) -> f64 {
        let n = h.n_sites();
        let d = h.obs_dim();
        (0..d.pow(n as u32))
            .map(|i| {
                let x = config_from_index(i, n, d);
                let p = h.forward_log_likelihood(&x).map(f64::exp).unwrap_or(0.0);
                (p - m.log_prob(&x).unwrap().exp()).abs()
            })
            .sum::<f64>()
            / 2.0
    }

    #[test]
    fn hmm_image_matches_forward() {
        for s in 0..5 {
            let h = Hmm::random(6, 3, 2, s);
            let m = Model::Mps(hmm_to_mps(&h).unwrap());
            assert!((m.normalization().unwrap() - 1.0).abs() < 1e-12);
            for idx in 0..64 {
                let x = config_from_index(idx, 6, 2);
                let p = h.forward_log_likelihood(&x).unwrap().exp();
                assert!((m.evaluate(&x).unwrap().re - p).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn round_trip() {
        for s in 0..5 {
            let h = Hmm::random(5, 2, 2, 10 + s);
            let m = hmm_to_mps(&h).unwrap();
            let back = mps_to_hmm(&m, None, 1, 0).unwrap();
            assert!(back.exact);
            assert!(back.hmm.hidden_dim() <= 4);
            assert!(tv(&back.hmm, &Model::Mps(m)) < 1e-12);
        }
    }

    #[test]
    fn random_nonneg_mps_maps_exactly() {
        let m = MpsModel::random(FieldKind::NonNeg, 5, 3, 3, 2);
        let out = mps_to_hmm(&m, None, 1, 0).unwrap();
        assert!(out.hmm.hidden_dim() <= 9);
        assert!(tv(&out.hmm, &Model::Mps(m)) < 1e-12);
    }

    #[test]
    fn rank_one_gives_one_state() {
        let m = MpsModel::random(FieldKind::NonNeg, 4, 2, 1, 3);
        let out = mps_to_hmm(&m, None, 1, 0).unwrap();
        assert_eq!(out.hmm.hidden_dim(), 1);
        assert!(tv(&out.hmm, &Model::Mps(m)) < 1e-12);
    }

    #[test]
    fn capped_split_reports_residual() {
        let h = Hmm::random(4, 2, 2, 7);
        let m = hmm_to_mps(&h).unwrap();
        // HMM cores have non-negative rank <= 2, so a cap of 2 can be exact
        let out = mps_to_hmm(&m, Some(2), 5, 1).unwrap();
        assert_eq!(out.residuals.len(), 4);
        if out.exact {
            assert!(tv(&out.hmm, &Model::Mps(m.clone())) < 1e-6);
        }
        let crude = mps_to_hmm(&m, Some(1), 2, 1).unwrap();
        assert!(!crude.exact);
    }

    #[test]
    fn rejects_real_mps() {
        let m = MpsModel::random(FieldKind::Real, 3, 2, 2, 0);
        assert!(mps_to_hmm(&m, None, 1, 0).is_err());
    }
}
