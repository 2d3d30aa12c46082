//! Environment sweeps over a chain with per-site selectors.
//!
//! A selector either fixes the physical index of a site or sums it out, so
//! one sweep covers evaluation (all fixed), the normalization (all summed)
//! and marginals (mixed). Environments are rescaled by their largest entry
//! after every site and the scale is accumulated in log space.
//!
//! Single layer (MPS): left vectors `l_i = l_{i-1} M_i`, right vectors
//! `r_i = M_i r_{i+1}` with `M_i = sum_{x in sel_i} A_i[x]`.
//!
//! Double layer (Born, LPS): left matrices `E' = sum A^T E conj(A)` and right
//! matrices `F = sum A F A^dagger` over selected `x` and all `beta`.

use std::ops::Range;

use super::{LpsModel, MpsModel};
use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SiteSel {
    Fixed(usize),
    Sum,
}

impl SiteSel {
    fn range(self, d: usize) -> Range<usize> {
        match self {
            SiteSel::Fixed(x) => x..x + 1,
            SiteSel::Sum => 0..d,
        }
    }
}

/// A real number stored as `sign * exp(ln_abs)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogValue {
    pub sign: f64,
    pub ln_abs: f64,
}

impl LogValue {
    pub const ZERO: LogValue = LogValue {
        sign: 0.0,
        ln_abs: f64::NEG_INFINITY,
    };

    fn from_scaled(v: f64, ln_scale: f64) -> Self {
        if v == 0.0 || !v.is_finite() {
            return LogValue::ZERO;
        }
        LogValue {
            sign: v.signum(),
            ln_abs: ln_scale + v.abs().ln(),
        }
    }

    pub fn value(self) -> f64 {
        if self.sign == 0.0 {
            0.0
        } else {
            self.sign * self.ln_abs.exp()
        }
    }
}

/// Divide by the largest modulus; returns its log, or `None` if all zero.
fn rescale(v: &mut [C64]) -> Option<f64> {
    let m = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if m == 0.0 || !m.is_finite() {
        return None;
    }
    let inv = 1.0 / m;
    v.iter_mut().for_each(|z| *z *= inv);
    Some(m.ln())
}

/// Normalized environments with their log scales; `None` marks a zero
/// environment (the whole contraction vanishes).
struct Envs {
    mats: Vec<Option<Vec<C64>>>,
    ln: Vec<f64>,
}

fn mps_slice(m: &MpsModel, i: usize, x: usize) -> (&[C64], usize, usize) {
    let c = &m.cores[i];
    let (rl, rr) = (c.shape()[1], c.shape()[2]);
    (&c.data()[x * rl * rr..(x + 1) * rl * rr], rl, rr)
}

fn lps_slice(l: &LpsModel, i: usize, x: usize, beta: usize) -> (&[C64], usize, usize) {
    let c = &l.cores[i];
    let (rl, rr) = (c.shape()[2], c.shape()[3]);
    let off = (x * l.puri_dim + beta) * rl * rr;
    (&c.data()[off..off + rl * rr], rl, rr)
}

fn single_left(m: &MpsModel, sels: &[SiteSel]) -> Envs {
    let n = m.n_sites();
    let mut mats = Vec::with_capacity(n + 1);
    let mut ln = Vec::with_capacity(n + 1);
    mats.push(Some(vec![ONE]));
    ln.push(0.0);
    for i in 0..n {
        let next = mats[i].as_ref().and_then(|l| {
            let rr = m.cores[i].shape()[2];
            let mut out = vec![ZERO; rr];
            for x in sels[i].range(m.phys_dim) {
                let (a, _, rr) = mps_slice(m, i, x);
                for (p, &lp) in l.iter().enumerate() {
                    let row = &a[p * rr..(p + 1) * rr];
                    for (o, &v) in out.iter_mut().zip(row) {
                        *o += lp * v;
                    }
                }
            }
            rescale(&mut out).map(|s| (out, s))
        });
        match next {
            Some((v, s)) => {
                mats.push(Some(v));
                ln.push(ln[i] + s);
            }
            None => {
                mats.push(None);
                ln.push(f64::NEG_INFINITY);
            }
        }
    }
    Envs { mats, ln }
}

/// Right environments; entry `i` covers sites `i..n`.
fn single_right(m: &MpsModel, sels: &[SiteSel]) -> Envs {
    let n = m.n_sites();
    let mut mats = vec![None; n + 1];
    let mut ln = vec![f64::NEG_INFINITY; n + 1];
    mats[n] = Some(vec![ONE]);
    ln[n] = 0.0;
    for i in (0..n).rev() {
        let next = mats[i + 1].as_ref().and_then(|r| {
            let rl = m.cores[i].shape()[1];
            let mut out = vec![ZERO; rl];
            for x in sels[i].range(m.phys_dim) {
                let (a, _, rr) = mps_slice(m, i, x);
                for (p, o) in out.iter_mut().enumerate() {
                    let row = &a[p * rr..(p + 1) * rr];
                    *o += row.iter().zip(r).map(|(u, v)| u * v).sum::<C64>();
                }
            }
            rescale(&mut out).map(|s| (out, s))
        });
        if let Some((v, s)) = next {
            mats[i] = Some(v);
            ln[i] = ln[i + 1] + s;
        }
    }
    Envs { mats, ln }
}

pub(crate) fn single_value(m: &MpsModel, sels: &[SiteSel]) -> LogValue {
    let envs = single_left(m, sels);
    let n = m.n_sites();
    match &envs.mats[n] {
        Some(v) => LogValue::from_scaled(v[0].re, envs.ln[n]),
        None => LogValue::ZERO,
    }
}

/// Add `weight * (dT/dA) / T` into `out` (laid out like the cores) and
/// return `T`. Nothing is added when `T = 0`.
pub(crate) fn single_log_grad(
    m: &MpsModel,
    sels: &[SiteSel],
    weight: f64,
    out: &mut [Vec<C64>],
) -> LogValue {
    let n = m.n_sites();
    let left = single_left(m, sels);
    let value = match &left.mats[n] {
        Some(v) => LogValue::from_scaled(v[0].re, left.ln[n]),
        None => return LogValue::ZERO,
    };
    if value.sign == 0.0 {
        return value;
    }
    let right = single_right(m, sels);
    for i in 0..n {
        let (Some(l), Some(r)) = (&left.mats[i], &right.mats[i + 1]) else {
            continue;
        };
        let mut t = ZERO;
        for x in sels[i].range(m.phys_dim) {
            let (a, _, rr) = mps_slice(m, i, x);
            for (p, &lp) in l.iter().enumerate() {
                let row = &a[p * rr..(p + 1) * rr];
                t += lp * row.iter().zip(r).map(|(u, v)| u * v).sum::<C64>();
            }
        }
        if t.norm() == 0.0 {
            continue;
        }
        let coef = weight / t;
        let rr = r.len();
        let rl = l.len();
        for x in sels[i].range(m.phys_dim) {
            let g = &mut out[i][x * rl * rr..(x + 1) * rl * rr];
            for (p, &lp) in l.iter().enumerate() {
                let lc = lp * coef;
                for (gq, &rq) in g[p * rr..(p + 1) * rr].iter_mut().zip(r) {
                    *gq += lc * rq;
                }
            }
        }
    }
    value
}

/// `out += A^T E conj(A)` for `A` of shape `rl x rr`.
pub(crate) fn left_step(e: &[C64], a: &[C64], rl: usize, rr: usize, y: &mut [C64], out: &mut [C64]) {
    // y = E conj(A): rl x rr
    y.iter_mut().for_each(|z| *z = ZERO);
    for p in 0..rl {
        let yrow = &mut y[p * rr..(p + 1) * rr];
        for q in 0..rl {
            let epq = e[p * rl + q];
            if epq == ZERO {
                continue;
            }
            for (yv, av) in yrow.iter_mut().zip(&a[q * rr..(q + 1) * rr]) {
                *yv += epq * av.conj();
            }
        }
    }
    for p in 0..rl {
        let yrow = &y[p * rr..(p + 1) * rr];
        for b in 0..rr {
            let apb = a[p * rr + b];
            if apb == ZERO {
                continue;
            }
            for (o, yv) in out[b * rr..(b + 1) * rr].iter_mut().zip(yrow) {
                *o += apb * yv;
            }
        }
    }
}

/// `z = A F` for `A` of shape `rl x rr`.
fn mul_af(f: &[C64], a: &[C64], rl: usize, rr: usize, z: &mut [C64]) {
    z.iter_mut().for_each(|v| *v = ZERO);
    for p in 0..rl {
        let zrow = &mut z[p * rr..(p + 1) * rr];
        for b in 0..rr {
            let apb = a[p * rr + b];
            if apb == ZERO {
                continue;
            }
            for (zv, fv) in zrow.iter_mut().zip(&f[b * rr..(b + 1) * rr]) {
                *zv += apb * fv;
            }
        }
    }
}

/// `out += A F A^dagger`.
fn right_step(f: &[C64], a: &[C64], rl: usize, rr: usize, z: &mut [C64], out: &mut [C64]) {
    mul_af(f, a, rl, rr, z);
    for p in 0..rl {
        let zrow = &z[p * rr..(p + 1) * rr];
        for q in 0..rl {
            let arow = &a[q * rr..(q + 1) * rr];
            out[p * rl + q] += zrow.iter().zip(arow).map(|(u, v)| u * v.conj()).sum::<C64>();
        }
    }
}

fn double_left(l: &LpsModel, sels: &[SiteSel]) -> Envs {
    let n = l.n_sites();
    let mut mats = Vec::with_capacity(n + 1);
    let mut ln = Vec::with_capacity(n + 1);
    mats.push(Some(vec![ONE]));
    ln.push(0.0);
    for i in 0..n {
        let next = mats[i]
            .as_ref()
            .and_then(|e| rescaled_left_update(l, i, sels[i], e));
        match next {
            Some((v, s)) => {
                mats.push(Some(v));
                ln.push(ln[i] + s);
            }
            None => {
                mats.push(None);
                ln.push(f64::NEG_INFINITY);
            }
        }
    }
    Envs { mats, ln }
}

pub(crate) fn left_update(l: &LpsModel, i: usize, sel: SiteSel, e: &[C64]) -> Vec<C64> {
    let (rl, rr) = (l.cores[i].shape()[2], l.cores[i].shape()[3]);
    let mut out = vec![ZERO; rr * rr];
    let mut y = vec![ZERO; rl * rr];
    for x in sel.range(l.phys_dim) {
        for beta in 0..l.puri_dim {
            let (a, _, _) = lps_slice(l, i, x, beta);
            left_step(e, a, rl, rr, &mut y, &mut out);
        }
    }
    out
}

fn rescaled_left_update(l: &LpsModel, i: usize, sel: SiteSel, e: &[C64]) -> Option<(Vec<C64>, f64)> {
    let mut out = left_update(l, i, sel, e);
    rescale(&mut out).map(|s| (out, s))
}

pub(crate) fn double_right_envs(l: &LpsModel, sels: &[SiteSel]) -> Vec<Option<Vec<C64>>> {
    double_right(l, sels).mats
}

fn double_right(l: &LpsModel, sels: &[SiteSel]) -> Envs {
    let n = l.n_sites();
    let mut mats = vec![None; n + 1];
    let mut ln = vec![f64::NEG_INFINITY; n + 1];
    mats[n] = Some(vec![ONE]);
    ln[n] = 0.0;
    for i in (0..n).rev() {
        let next = mats[i + 1].as_ref().and_then(|f| {
            let (rl, rr) = (l.cores[i].shape()[2], l.cores[i].shape()[3]);
            let mut out = vec![ZERO; rl * rl];
            let mut z = vec![ZERO; rl * rr];
            for x in sels[i].range(l.phys_dim) {
                for beta in 0..l.puri_dim {
                    let (a, _, _) = lps_slice(l, i, x, beta);
                    right_step(f, a, rl, rr, &mut z, &mut out);
                }
            }
            rescale(&mut out).map(|s| (out, s))
        });
        if let Some((v, s)) = next {
            mats[i] = Some(v);
            ln[i] = ln[i + 1] + s;
        }
    }
    Envs { mats, ln }
}

pub(crate) fn double_value(l: &LpsModel, sels: &[SiteSel]) -> LogValue {
    let envs = double_left(l, sels);
    let n = l.n_sites();
    match &envs.mats[n] {
        Some(v) => LogValue::from_scaled(v[0].re, envs.ln[n]),
        None => LogValue::ZERO,
    }
}

/// Add `weight * (dT/du + i dT/dv) / T` into `out` for every core entry
/// `A = u + i v`, and return `T`.
pub(crate) fn double_log_grad(
    l: &LpsModel,
    sels: &[SiteSel],
    weight: f64,
    out: &mut [Vec<C64>],
) -> LogValue {
    let n = l.n_sites();
    let left = double_left(l, sels);
    let value = match &left.mats[n] {
        Some(v) => LogValue::from_scaled(v[0].re, left.ln[n]),
        None => return LogValue::ZERO,
    };
    if value.sign == 0.0 {
        return value;
    }
    let right = double_right(l, sels);
    for i in 0..n {
        let (Some(e), Some(f)) = (&left.mats[i], &right.mats[i + 1]) else {
            continue;
        };
        let (rl, rr) = (l.cores[i].shape()[2], l.cores[i].shape()[3]);
        let mut z = vec![ZERO; rl * rr];
        let mut grads: Vec<(usize, Vec<C64>)> = Vec::new();
        let mut t = 0.0;
        for x in sels[i].range(l.phys_dim) {
            for beta in 0..l.puri_dim {
                let (a, _, _) = lps_slice(l, i, x, beta);
                mul_af(f, a, rl, rr, &mut z);
                // g = E^T (A F)
                let mut g = vec![ZERO; rl * rr];
                for p in 0..rl {
                    let zrow = &z[p * rr..(p + 1) * rr];
                    for q in 0..rl {
                        let epq = e[p * rl + q];
                        if epq == ZERO {
                            continue;
                        }
                        for (gv, zv) in g[q * rr..(q + 1) * rr].iter_mut().zip(zrow) {
                            *gv += epq * zv;
                        }
                    }
                }
                t += g.iter().zip(a).map(|(u, v)| u * v.conj()).sum::<C64>().re;
                grads.push(((x * l.puri_dim + beta) * rl * rr, g));
            }
        }
        if t == 0.0 {
            continue;
        }
        let coef = 2.0 * weight / t;
        for (off, g) in grads {
            for (o, gv) in out[i][off..off + rl * rr].iter_mut().zip(&g) {
                *o += gv * coef;
            }
        }
    }
    value
}
