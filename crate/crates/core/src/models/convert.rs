//! Exact conversions between representations.

use super::engine;
use super::{FieldKind, LpsModel, MpsModel};
use crate::{DenseTensor, Error, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Non-negative MPS to a real LPS of the same bond dimensions.
///
/// Each core becomes `B[x, beta, a, b] = delta(beta, a * r_right + b) *
/// sqrt(A[x, a, b])`, so every purification index selects one bond pair and
/// the double-layer sum runs over the same bond paths as the MPS. The
/// purification dimension is `r^2` with `r` the largest bond.
pub fn mps_nonneg_to_lps_real(m: &MpsModel) -> Result<LpsModel> {
    if let Some(z) = m
        .cores()
        .iter()
        .flat_map(|c| c.data())
        .find(|z| z.re < 0.0 || z.im != 0.0)
    {
        return Err(Error::NegativeEntry { value: z.re });
    }
    let r = m.rank();
    let mu = r * r;
    let d = m.phys_dim();
    let cores = m
        .cores()
        .iter()
        .map(|c| {
            let (rl, rr) = (c.shape()[1], c.shape()[2]);
            let mut data = vec![ZERO; d * mu * rl * rr];
            for x in 0..d {
                for a in 0..rl {
                    for b in 0..rr {
                        let beta = a * rr + b;
                        let v = c.data()[(x * rl + a) * rr + b].re.sqrt();
                        data[((x * mu + beta) * rl + a) * rr + b] = C64::new(v, 0.0);
                    }
                }
            }
            DenseTensor::new(vec![d, mu, rl, rr], data)
        })
        .collect::<Result<Vec<_>>>()?;
    LpsModel::new(FieldKind::Real, cores)
}

/// Orthonormal basis of `r x r` Hermitian matrices under `<X, Y> = Tr(XY)`.
fn hermitian_basis(r: usize) -> Vec<Vec<C64>> {
    let mut basis = Vec::with_capacity(r * r);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for a in 0..r {
        let mut g = vec![ZERO; r * r];
        g[a * r + a] = C64::new(1.0, 0.0);
        basis.push(g);
    }
    for a in 0..r {
        for b in a + 1..r {
            let mut g = vec![ZERO; r * r];
            g[a * r + b] = C64::new(s, 0.0);
            g[b * r + a] = C64::new(s, 0.0);
            basis.push(g);
            let mut h = vec![ZERO; r * r];
            h[a * r + b] = C64::new(0.0, s);
            h[b * r + a] = C64::new(0.0, -s);
            basis.push(h);
        }
    }
    basis
}

/// `Re Tr(X Y)` for square matrices of side `r`.
fn trace_prod(x: &[C64], y: &[C64], r: usize) -> f64 {
    let mut t = 0.0;
    for i in 0..r {
        for j in 0..r {
            t += (x[i * r + j] * y[j * r + i]).re;
        }
    }
    t
}

/// LPS to a real MPS with bond dimensions `r_i^2`.
///
/// The double-layer left environment after each site is a Hermitian matrix;
/// the MPS carries its coordinates in an orthonormal Hermitian basis, and
/// each core is the matrix of the site's transfer map in that basis.
pub fn lps_to_mps_real(l: &LpsModel) -> Result<MpsModel> {
    let d = l.phys_dim();
    let mu = l.puri_dim();
    let n = l.n_sites();
    let mut cores = Vec::with_capacity(n);
    for (i, c) in l.cores().iter().enumerate() {
        let (rl, rr) = (c.shape()[2], c.shape()[3]);
        let left_basis = if i == 0 {
            vec![vec![C64::new(1.0, 0.0)]]
        } else {
            hermitian_basis(rl)
        };
        let right_basis = if i == n - 1 {
            vec![vec![C64::new(1.0, 0.0)]]
        } else {
            hermitian_basis(rr)
        };
        let (kl, kr) = (left_basis.len(), right_basis.len());
        let mut data = vec![ZERO; d * kl * kr];
        let mut y = vec![ZERO; rl * rr];
        for x in 0..d {
            for (k, g) in left_basis.iter().enumerate() {
                let mut phi = vec![ZERO; rr * rr];
                for beta in 0..mu {
                    let off = (x * mu + beta) * rl * rr;
                    engine::left_step(g, &c.data()[off..off + rl * rr], rl, rr, &mut y, &mut phi);
                }
                for (q, h) in right_basis.iter().enumerate() {
                    // the last site pairs with the unit right environment
                    let v = if i == n - 1 { phi[0].re } else { trace_prod(h, &phi, rr) };
                    data[(x * kl + k) * kr + q] = C64::new(v, 0.0);
                }
            }
        }
        cores.push(DenseTensor::new(vec![d, kl, kr], data)?);
    }
    MpsModel::new(FieldKind::Real, cores)
}

/// Complex LPS to a real LPS with doubled bond and purification dimensions.
///
/// A complex row vector `a` is carried as `(Re a, Im a)` and a bulk matrix
/// `M` as `[[Re M, Im M], [-Im M, Re M]]`. On the last site each column `c`
/// splits into `(Re c, -Im c)` and `(Im c, Re c)`, yielding the real and
/// imaginary parts of the amplitude under separate purification indices.
/// The other sites fill only the first half of the purification range.
pub fn lps_complex_to_real(l: &LpsModel) -> Result<LpsModel> {
    let d = l.phys_dim();
    let mu = l.puri_dim();
    let n = l.n_sites();
    let mu2 = 2 * mu;
    let mut cores = Vec::with_capacity(n);
    for (i, c) in l.cores().iter().enumerate() {
        let (rl, rr) = (c.shape()[2], c.shape()[3]);
        let first = i == 0;
        let last = i == n - 1;
        let nl = if first { 1 } else { 2 * rl };
        let nr = if last { 1 } else { 2 * rr };
        let mut data = vec![ZERO; d * mu2 * nl * nr];
        let mut set = |x: usize, bt: usize, a: usize, b: usize, v: f64| {
            data[((x * mu2 + bt) * nl + a) * nr + b] = C64::new(v, 0.0);
        };
        for x in 0..d {
            for beta in 0..mu {
                let off = (x * mu + beta) * rl * rr;
                let m = &c.data()[off..off + rl * rr];
                match (first, last) {
                    (true, _) => {
                        // rl = 1: row vector (Re a, Im a)
                        for b in 0..rr {
                            set(x, 2 * beta, 0, b, m[b].re);
                            set(x, 2 * beta, 0, rr + b, m[b].im);
                        }
                    }
                    (false, true) => {
                        // rr = 1: columns (Re c, -Im c) and (Im c, Re c)
                        for a in 0..rl {
                            set(x, 2 * beta, a, 0, m[a].re);
                            set(x, 2 * beta, rl + a, 0, -m[a].im);
                            set(x, 2 * beta + 1, a, 0, m[a].im);
                            set(x, 2 * beta + 1, rl + a, 0, m[a].re);
                        }
                    }
                    (false, false) => {
                        for a in 0..rl {
                            for b in 0..rr {
                                let z = m[a * rr + b];
                                set(x, 2 * beta, a, b, z.re);
                                set(x, 2 * beta, a, rr + b, z.im);
                                set(x, 2 * beta, rl + a, b, -z.im);
                                set(x, 2 * beta, rl + a, rr + b, z.re);
                            }
                        }
                    }
                }
            }
        }
        cores.push(DenseTensor::new(vec![d, mu2, nl, nr], data)?);
    }
    LpsModel::new(FieldKind::Real, cores)
}
