//! Exact ancestral sampling.
//!
//! Right environments with every site summed are computed once; each sample
//! then walks left to right, drawing `x_i` from the conditional obtained by
//! contracting the current left environment, the site slice and the cached
//! right environment.

use rand::Rng;

use super::engine::{self, SiteSel};
use super::{Configuration, LpsModel, MpsModel};
use crate::{par, seed, Error, Result, C64};

const MAX_RETRIES: usize = 100;

fn draw<R: Rng>(weights: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc && w > 0.0 {
            return Some(i);
        }
    }
    weights.iter().rposition(|&w| w > 0.0)
}

/// Clamp tiny negative conditionals caused by rounding; reject real
/// negative ones.
fn clean(weights: &mut [f64]) -> Result<()> {
    let total: f64 = weights.iter().map(|w| w.abs()).sum();
    for w in weights.iter_mut() {
        if *w < 0.0 {
            if *w < -1e-10 * total {
                return Err(Error::NegativeEntry { value: *w });
            }
            *w = 0.0;
        }
    }
    Ok(())
}

fn with_retries<F>(mut attempt: F) -> Result<Configuration>
where
    F: FnMut() -> Result<Option<Configuration>>,
{
    for _ in 0..MAX_RETRIES {
        if let Some(x) = attempt()? {
            return Ok(x);
        }
    }
    Err(Error::SamplingFailed(MAX_RETRIES))
}

pub(crate) fn sample_single(m: &MpsModel, count: usize, master: u64) -> Result<Vec<Configuration>> {
    let n = m.n_sites();
    let d = m.phys_dim;
    let sels = vec![SiteSel::Sum; n];
    let right = single_right_vectors(m, &sels);
    let draw_one = |k: usize| -> Result<Configuration> {
        let mut rng = seed::rng(seed::derive(master, k as u64));
        with_retries(|| {
            let mut l = vec![C64::new(1.0, 0.0)];
            let mut x = Vec::with_capacity(n);
            for i in 0..n {
                let Some(r) = &right[i + 1] else {
                    return Ok(None);
                };
                let core = &m.cores[i];
                let (rl, rr) = (core.shape()[1], core.shape()[2]);
                let mut nexts = Vec::with_capacity(d);
                let mut weights = Vec::with_capacity(d);
                for xi in 0..d {
                    let a = &core.data()[xi * rl * rr..(xi + 1) * rl * rr];
                    let mut next = vec![C64::new(0.0, 0.0); rr];
                    for (p, &lp) in l.iter().enumerate() {
                        for (o, &v) in next.iter_mut().zip(&a[p * rr..(p + 1) * rr]) {
                            *o += lp * v;
                        }
                    }
                    weights.push(next.iter().zip(r).map(|(u, v)| u * v).sum::<C64>().re);
                    nexts.push(next);
                }
                clean(&mut weights)?;
                let Some(xi) = draw(&weights, &mut rng) else {
                    return Ok(None);
                };
                let mut next = nexts.swap_remove(xi);
                let scale = next.iter().map(|z| z.norm()).fold(0.0, f64::max);
                if scale == 0.0 {
                    return Ok(None);
                }
                next.iter_mut().for_each(|z| *z /= scale);
                l = next;
                x.push(xi);
            }
            Ok(Some(Configuration(x)))
        })
    };
    par::map_indexed(count, draw_one).into_iter().collect()
}

fn single_right_vectors(m: &MpsModel, sels: &[SiteSel]) -> Vec<Option<Vec<C64>>> {
    let n = m.n_sites();
    let mut out = vec![None; n + 1];
    out[n] = Some(vec![C64::new(1.0, 0.0)]);
    for i in (0..n).rev() {
        let Some(r) = out[i + 1].clone() else { break };
        let core = &m.cores[i];
        let (rl, rr) = (core.shape()[1], core.shape()[2]);
        let mut v = vec![C64::new(0.0, 0.0); rl];
        for x in 0..m.phys_dim {
            if sels[i] != SiteSel::Sum && sels[i] != SiteSel::Fixed(x) {
                continue;
            }
            let a = &core.data()[x * rl * rr..(x + 1) * rl * rr];
            for (p, o) in v.iter_mut().enumerate() {
                *o += a[p * rr..(p + 1) * rr].iter().zip(&r).map(|(u, w)| u * w).sum::<C64>();
            }
        }
        let scale = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            break;
        }
        v.iter_mut().for_each(|z| *z /= scale);
        out[i] = Some(v);
    }
    out
}

pub(crate) fn sample_double(l: &LpsModel, count: usize, master: u64) -> Result<Vec<Configuration>> {
    let n = l.n_sites();
    let d = l.phys_dim;
    let right = engine::double_right_envs(l, &vec![SiteSel::Sum; n]);
    let draw_one = |k: usize| -> Result<Configuration> {
        let mut rng = seed::rng(seed::derive(master, k as u64));
        with_retries(|| {
            let mut e = vec![C64::new(1.0, 0.0)];
            let mut x = Vec::with_capacity(n);
            for i in 0..n {
                let Some(f) = &right[i + 1] else {
                    return Ok(None);
                };
                let mut nexts = Vec::with_capacity(d);
                let mut weights = Vec::with_capacity(d);
                for xi in 0..d {
                    let next = engine::left_update(l, i, SiteSel::Fixed(xi), &e);
                    weights.push(next.iter().zip(f).map(|(u, v)| u * v).sum::<C64>().re);
                    nexts.push(next);
                }
                clean(&mut weights)?;
                let Some(xi) = draw(&weights, &mut rng) else {
                    return Ok(None);
                };
                let mut next = nexts.swap_remove(xi);
                let scale = next.iter().map(|z| z.norm()).fold(0.0, f64::max);
                if scale == 0.0 {
                    return Ok(None);
                }
                next.iter_mut().for_each(|z| *z /= scale);
                e = next;
                x.push(xi);
            }
            Ok(Some(Configuration(x)))
        })
    };
    par::map_indexed(count, draw_one).into_iter().collect()
}
