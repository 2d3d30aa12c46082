//! Dense forward contraction of a chain and its adjoint sweep.
//!
//! Layer `k` holds the partial contraction of the first `k` sites for every
//! prefix configuration: a vector over the right bond for a single layer and
//! a matrix over the doubled right bond for a double layer. The backward
//! sweep propagates per-configuration weights `W[x]` and yields the gradient
//! of `sum_x W[x] T[x]` with respect to every core entry.

use super::{LpsModel, MpsModel};
use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);

pub(crate) fn single_forward(m: &MpsModel) -> Vec<Vec<C64>> {
    let d = m.phys_dim;
    let mut layers = vec![vec![C64::new(1.0, 0.0)]];
    let mut prefixes = 1;
    for core in &m.cores {
        let (rl, rr) = (core.shape()[1], core.shape()[2]);
        let prev = layers.last().unwrap();
        let mut next = vec![ZERO; prefixes * d * rr];
        for p in 0..prefixes {
            let lp = &prev[p * rl..(p + 1) * rl];
            for x in 0..d {
                let a = &core.data()[x * rl * rr..(x + 1) * rl * rr];
                let out = &mut next[(p * d + x) * rr..(p * d + x + 1) * rr];
                for (i, &li) in lp.iter().enumerate() {
                    if li == ZERO {
                        continue;
                    }
                    for (o, &v) in out.iter_mut().zip(&a[i * rr..(i + 1) * rr]) {
                        *o += li * v;
                    }
                }
            }
        }
        layers.push(next);
        prefixes *= d;
    }
    layers
}

/// Gradient of `sum_x w[x] T[x]` for a real single-layer chain.
pub(crate) fn single_backward(m: &MpsModel, layers: &[Vec<C64>], w: &[f64]) -> Vec<Vec<C64>> {
    let d = m.phys_dim;
    let n = m.n_sites();
    let mut grads: Vec<Vec<C64>> = m.cores.iter().map(|c| vec![ZERO; c.len()]).collect();
    let mut adj: Vec<C64> = w.iter().map(|&v| C64::new(v, 0.0)).collect();
    for k in (0..n).rev() {
        let prefixes = d.pow(k as u32);
        let core = &m.cores[k];
        let (rl, rr) = (core.shape()[1], core.shape()[2]);
        let prev = &layers[k];
        let mut prev_adj = vec![ZERO; prefixes * rl];
        for p in 0..prefixes {
            let lp = &prev[p * rl..(p + 1) * rl];
            for x in 0..d {
                let g = &adj[(p * d + x) * rr..(p * d + x + 1) * rr];
                if g.iter().all(|&v| v == ZERO) {
                    continue;
                }
                let a = &core.data()[x * rl * rr..(x + 1) * rl * rr];
                let ga = &mut grads[k][x * rl * rr..(x + 1) * rl * rr];
                for i in 0..rl {
                    let li = lp[i];
                    let row = &mut ga[i * rr..(i + 1) * rr];
                    for (o, &gv) in row.iter_mut().zip(g) {
                        *o += li * gv;
                    }
                    prev_adj[p * rl + i] += a[i * rr..(i + 1) * rr]
                        .iter()
                        .zip(g)
                        .map(|(u, v)| u * v)
                        .sum::<C64>();
                }
            }
        }
        adj = prev_adj;
    }
    grads
}

pub(crate) fn double_forward(l: &LpsModel) -> Vec<Vec<C64>> {
    let layers = double_forward_layers(l);
    let last = layers.last().unwrap();
    vec![last.iter().map(|z| C64::new(z.re, 0.0)).collect()]
}

pub(crate) fn double_forward_layers(l: &LpsModel) -> Vec<Vec<C64>> {
    let d = l.phys_dim;
    let mu = l.puri_dim;
    let mut layers = vec![vec![C64::new(1.0, 0.0)]];
    let mut prefixes = 1;
    for core in &l.cores {
        let (rl, rr) = (core.shape()[2], core.shape()[3]);
        let prev = layers.last().unwrap();
        let mut next = vec![ZERO; prefixes * d * rr * rr];
        let mut y = vec![ZERO; rl * rr];
        for p in 0..prefixes {
            let e = &prev[p * rl * rl..(p + 1) * rl * rl];
            for x in 0..d {
                let out = &mut next[(p * d + x) * rr * rr..(p * d + x + 1) * rr * rr];
                for beta in 0..mu {
                    let off = (x * mu + beta) * rl * rr;
                    let a = &core.data()[off..off + rl * rr];
                    // y = E conj(A), out += A^T y
                    y.iter_mut().for_each(|z| *z = ZERO);
                    for i in 0..rl {
                        for j in 0..rl {
                            let eij = e[i * rl + j];
                            if eij == ZERO {
                                continue;
                            }
                            for (yv, av) in y[i * rr..(i + 1) * rr].iter_mut().zip(&a[j * rr..(j + 1) * rr]) {
                                *yv += eij * av.conj();
                            }
                        }
                    }
                    for i in 0..rl {
                        for b in 0..rr {
                            let aib = a[i * rr + b];
                            if aib == ZERO {
                                continue;
                            }
                            for (o, yv) in out[b * rr..(b + 1) * rr].iter_mut().zip(&y[i * rr..(i + 1) * rr]) {
                                *o += aib * yv;
                            }
                        }
                    }
                }
            }
        }
        layers.push(next);
        prefixes *= d;
    }
    layers
}

/// Real-parameter gradient `(d/du + i d/dv)` of `sum_x w[x] T[x]` for a
/// double-layer chain.
pub(crate) fn double_backward(l: &LpsModel, layers: &[Vec<C64>], w: &[f64]) -> Vec<Vec<C64>> {
    let d = l.phys_dim;
    let mu = l.puri_dim;
    let n = l.n_sites();
    let mut grads: Vec<Vec<C64>> = l.cores.iter().map(|c| vec![ZERO; c.len()]).collect();
    let mut adj: Vec<C64> = w.iter().map(|&v| C64::new(v, 0.0)).collect();
    for k in (0..n).rev() {
        let prefixes = d.pow(k as u32);
        let core = &l.cores[k];
        let (rl, rr) = (core.shape()[2], core.shape()[3]);
        let prev = &layers[k];
        let mut prev_adj = vec![ZERO; prefixes * rl * rl];
        let mut z = vec![ZERO; rl * rr];
        for p in 0..prefixes {
            let e = &prev[p * rl * rl..(p + 1) * rl * rl];
            for x in 0..d {
                let g = &adj[(p * d + x) * rr * rr..(p * d + x + 1) * rr * rr];
                if g.iter().all(|&v| v == ZERO) {
                    continue;
                }
                for beta in 0..mu {
                    let off = (x * mu + beta) * rl * rr;
                    let a = &core.data()[off..off + rl * rr];
                    // z = A G
                    z.iter_mut().for_each(|v| *v = ZERO);
                    for i in 0..rl {
                        for b in 0..rr {
                            let aib = a[i * rr + b];
                            if aib == ZERO {
                                continue;
                            }
                            for (zv, gv) in z[i * rr..(i + 1) * rr].iter_mut().zip(&g[b * rr..(b + 1) * rr]) {
                                *zv += aib * gv;
                            }
                        }
                    }
                    // grad += 2 E^T z
                    let ga = &mut grads[k][off..off + rl * rr];
                    for i in 0..rl {
                        for j in 0..rl {
                            let eij = e[i * rl + j] * 2.0;
                            if eij == ZERO {
                                continue;
                            }
                            for (o, zv) in ga[j * rr..(j + 1) * rr].iter_mut().zip(&z[i * rr..(i + 1) * rr]) {
                                *o += eij * zv;
                            }
                        }
                    }
                    // prev_adj += z A^dagger
                    let pa = &mut prev_adj[p * rl * rl..(p + 1) * rl * rl];
                    for i in 0..rl {
                        for j in 0..rl {
                            pa[i * rl + j] += z[i * rr..(i + 1) * rr]
                                .iter()
                                .zip(&a[j * rr..(j + 1) * rr])
                                .map(|(u, v)| u * v.conj())
                                .sum::<C64>();
                        }
                    }
                }
            }
        }
        adj = prev_adj;
    }
    grads
}
