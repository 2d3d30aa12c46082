//! Likelihood and KL objectives with their gradients.

use super::params::{Net, Params};
use crate::data::Dataset;
use crate::models::engine::{self, LogValue, SiteSel};
use crate::models::{dense, Configuration, Model};
use crate::{par, DenseTensor, Error, Result, C64};

/// Samples per work item; fixed so reductions do not depend on threads.
const CHUNK: usize = 16;

/// Smallest normalized probability accepted by a gradient step.
const MIN_LN_PROB: f64 = -690.7755; // ln(1e-300)

/// Gradient with respect to the trainable tensors: the cores, or `B` for a
/// non-negative MPS with cores `B * B`. Complex entries hold
/// `dL/du + i dL/dv` for a parameter `u + i v`, which is twice the
/// conjugate Wirtinger derivative.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub tensors: Vec<DenseTensor>,
}

impl Gradient {
    fn from_raw(params: &Params, grads: Vec<Vec<C64>>) -> Result<Self> {
        let tensors = grads
            .into_iter()
            .zip(&params.raw)
            .map(|(g, t)| DenseTensor::new(t.shape().to_vec(), g))
            .collect::<Result<Vec<_>>>()?;
        Ok(Gradient { tensors })
    }

    pub fn norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data())
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

fn zeros_like(net: &Net) -> Vec<Vec<C64>> {
    let cores = match net {
        Net::Single(m) => m.cores(),
        Net::Double(l) => l.cores(),
    };
    cores.iter().map(|c| vec![C64::new(0.0, 0.0); c.len()]).collect()
}

fn log_grad(net: &Net, sels: &[SiteSel], weight: f64, out: &mut [Vec<C64>]) -> LogValue {
    match net {
        Net::Single(m) => engine::single_log_grad(m, sels, weight, out),
        Net::Double(l) => engine::double_log_grad(l, sels, weight, out),
    }
}

fn log_value(net: &Net, sels: &[SiteSel]) -> LogValue {
    match net {
        Net::Single(m) => engine::single_value(m, sels),
        Net::Double(l) => engine::double_value(l, sels),
    }
}

fn add_into(acc: &mut [Vec<C64>], other: &[Vec<C64>]) {
    for (a, b) in acc.iter_mut().zip(other) {
        for (x, y) in a.iter_mut().zip(b) {
            *x += y;
        }
    }
}

fn fixed(x: &[usize]) -> Vec<SiteSel> {
    x.iter().map(|&v| SiteSel::Fixed(v)).collect()
}

fn log_z(net: &Net, n: usize) -> Result<f64> {
    let z = log_value(net, &vec![SiteSel::Sum; n]);
    if z.sign <= 0.0 {
        return Err(Error::ZeroNormalization);
    }
    Ok(z.ln_abs)
}

/// Mean negative log-likelihood of a batch and, optionally, its gradient
/// with respect to the cores of `net`.
pub(crate) fn nll_net(
    net: &Net,
    n_sites: usize,
    batch: &[Configuration],
    want_grad: bool,
) -> Result<(f64, Option<Vec<Vec<C64>>>)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let b = batch.len() as f64;
    let sum_sels = vec![SiteSel::Sum; n_sites];
    let mut grad = want_grad.then(|| zeros_like(net));
    let ln_z = match grad.as_mut() {
        Some(g) => {
            let z = log_grad(net, &sum_sels, 1.0, g);
            if z.sign <= 0.0 {
                return Err(Error::ZeroNormalization);
            }
            z.ln_abs
        }
        None => log_z(net, n_sites)?,
    };
    let chunks = par::map_chunks(batch.len(), CHUNK, |range| -> Result<(f64, Option<Vec<Vec<C64>>>)> {
        let mut local = want_grad.then(|| zeros_like(net));
        let mut sum = 0.0;
        for i in range {
            let sels = fixed(&batch[i]);
            let lv = match local.as_mut() {
                Some(g) => log_grad(net, &sels, -1.0 / b, g),
                None => log_value(net, &sels),
            };
            if lv.sign <= 0.0 || lv.ln_abs - ln_z < MIN_LN_PROB {
                return Err(Error::ZeroProbability { index: i });
            }
            sum += lv.ln_abs;
        }
        Ok((sum, local))
    });
    let mut total = 0.0;
    for c in chunks {
        let (s, g) = c?;
        total += s;
        if let (Some(acc), Some(g)) = (grad.as_mut(), g) {
            add_into(acc, &g);
        }
    }
    Ok((ln_z - total / b, grad))
}

/// Dense penalty `w * sum_x max(0, -T[x] / Z)^2` for a real single-layer
/// chain and its gradient, or `None` when `T` is not available densely.
pub(crate) fn penalty_net(net: &Net, weight: f64, cap: usize, want_grad: bool) -> Option<(f64, Option<Vec<Vec<C64>>>)> {
    let Net::Single(m) = net else { return None };
    if weight == 0.0 {
        return None;
    }
    crate::tensor::checked_dense_size(m.phys_dim(), m.n_sites(), cap).ok()?;
    let layers = dense::single_forward(m);
    let t: Vec<f64> = layers.last().unwrap().iter().map(|z| z.re).collect();
    let z: f64 = t.iter().sum();
    if !(z > 0.0) {
        return Some((f64::INFINITY, None));
    }
    let neg: Vec<f64> = t.iter().map(|&v| (-v / z).max(0.0)).collect();
    let s: f64 = neg.iter().map(|v| v * v).sum();
    let value = weight * s;
    let grad = want_grad.then(|| {
        let w: Vec<f64> = neg.iter().map(|&nv| -2.0 * weight * (nv + s) / z).collect();
        dense::single_backward(m, &layers, &w)
    });
    Some((value, grad))
}

/// `KL(p || T / Z)` plus the real-MPS penalty, with the gradient from one
/// dense forward/backward pass. Infeasible points give `+inf`.
pub(crate) fn kl_net(net: &Net, p: &[f64], penalty: f64, want_grad: bool) -> (f64, Option<Vec<Vec<C64>>>) {
    let (layers, t): (Vec<Vec<C64>>, Vec<f64>) = match net {
        Net::Single(m) => {
            let layers = dense::single_forward(m);
            let t = layers.last().unwrap().iter().map(|z| z.re).collect();
            (layers, t)
        }
        Net::Double(l) => {
            let layers = dense::double_forward_layers(l);
            let t = layers.last().unwrap().iter().map(|z| z.re).collect();
            (layers, t)
        }
    };
    let z: f64 = t.iter().sum();
    if !(z > 0.0) || !z.is_finite() {
        return (f64::INFINITY, None);
    }
    let mut kl = 0.0;
    let mut w = vec![1.0 / z; t.len()];
    for ((&pv, &tv), wv) in p.iter().zip(&t).zip(w.iter_mut()) {
        if pv > 0.0 {
            if !(tv > 0.0) {
                return (f64::INFINITY, None);
            }
            kl += pv * (pv * z / tv).ln();
            *wv -= pv / tv;
        }
    }
    if penalty > 0.0 {
        if let Net::Single(_) = net {
            let neg: Vec<f64> = t.iter().map(|&v| (-v / z).max(0.0)).collect();
            let s: f64 = neg.iter().map(|v| v * v).sum();
            kl += penalty * s;
            for (wv, nv) in w.iter_mut().zip(&neg) {
                *wv -= 2.0 * penalty * (nv + s) / z;
            }
        }
    }
    if !want_grad {
        return (kl, None);
    }
    let grad = match net {
        Net::Single(m) => dense::single_backward(m, &layers, &w),
        Net::Double(l) => dense::double_backward(l, &layers, &w),
    };
    (kl, Some(grad))
}

/// Per-sample negative log-likelihood, `-(1/n) sum_i ln(T[x_i] / Z)`.
pub fn nll(model: &Model, data: &Dataset) -> Result<f64> {
    check_data(model, data)?;
    nll_rows(model, data.rows())
}

pub fn nll_rows(model: &Model, rows: &[Configuration]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let ln_z = model.log_normalization()?;
    let sums = par::map_chunks(rows.len(), CHUNK, |range| -> Result<f64> {
        let mut s = 0.0;
        for i in range {
            let lv = model.log_value(&fixed(&rows[i]))?;
            if lv.sign <= 0.0 {
                return Err(Error::ZeroProbability { index: i });
            }
            s += lv.ln_abs;
        }
        Ok(s)
    });
    let mut total = 0.0;
    for s in sums {
        total += s?;
    }
    Ok(ln_z - total / rows.len() as f64)
}

pub(crate) fn check_data(model: &Model, data: &Dataset) -> Result<()> {
    if data.n_vars() != model.n_sites() || data.cardinality() != model.phys_dim() {
        return Err(Error::Shape(format!(
            "dataset has {} variables of cardinality {}, model has {} sites of dimension {}",
            data.n_vars(),
            data.cardinality(),
            model.n_sites(),
            model.phys_dim()
        )));
    }
    Ok(())
}

/// Gradient of the batch NLL with respect to the trainable tensors.
pub fn nll_gradient(model: &Model, batch: &[Configuration]) -> Result<Gradient> {
    let params = Params::from_model(model)?;
    let (_, g) = nll_net(&params.net(), model.n_sites(), batch, true)?;
    Gradient::from_raw(&params, params.chain(g.unwrap()))
}

/// Gradient of `Z_T` itself.
pub fn normalization_gradient(model: &Model) -> Result<Gradient> {
    let params = Params::from_model(model)?;
    let net = params.net();
    let mut g = zeros_like(&net);
    let z = log_grad(&net, &vec![SiteSel::Sum; model.n_sites()], 1.0, &mut g);
    if z.sign <= 0.0 {
        return Err(Error::ZeroNormalization);
    }
    let scale = z.value();
    for v in g.iter_mut().flatten() {
        *v *= scale;
    }
    Gradient::from_raw(&params, params.chain(g))
}

fn check_target(p: &DenseTensor, model: &Model) -> Result<Vec<f64>> {
    let expect = vec![model.phys_dim(); model.n_sites()];
    if p.shape() != expect.as_slice() {
        return Err(Error::Shape(format!(
            "target has shape {:?}, model expects {expect:?}",
            p.shape()
        )));
    }
    validate_distribution(p)
}

pub(crate) fn validate_distribution(p: &DenseTensor) -> Result<Vec<f64>> {
    if p.max_imag() != 0.0 {
        return Err(Error::InvalidArgument("target has complex entries".into()));
    }
    let v = p.real_parts();
    if let Some(&neg) = v.iter().find(|&&x| x < 0.0) {
        return Err(Error::NegativeEntry { value: neg });
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("target sums to {s}, not 1")));
    }
    Ok(v)
}

/// `sum_x P[x] ln(P[x] / (T[x] / Z))` with `0 ln 0 = 0`; `+inf` if the model
/// vanishes where `P` does not.
pub fn kl_divergence(p: &DenseTensor, model: &Model) -> Result<f64> {
    let pv = check_target(p, model)?;
    let t = model.to_dense_capped(p.len())?.real_parts();
    let z: f64 = t.iter().sum();
    if !(z > 0.0) {
        return Err(Error::ZeroNormalization);
    }
    let mut kl = 0.0;
    for (&pi, &ti) in pv.iter().zip(&t) {
        if pi > 0.0 {
            if ti <= 0.0 {
                return Ok(f64::INFINITY);
            }
            kl += pi * (pi * z / ti).ln();
        }
    }
    Ok(kl.max(0.0))
}
