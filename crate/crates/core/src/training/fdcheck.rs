//! Finite-difference checks of the analytic gradients.

use rand::seq::index;

use super::objective::{kl_net, nll_net, penalty_net, validate_distribution};
use super::params::{Net, Params};
use super::ModelKind;
use crate::models::engine::{self, SiteSel};
use crate::models::{Configuration, Model};
use crate::{seed, DenseTensor, Error, Result, C64, DEFAULT_DENSE_CAP};

/// Objective whose gradient is checked.
#[derive(Clone, Copy, Debug)]
pub enum FdObjective<'a> {
    /// Mean NLL of a batch.
    Nll(&'a [Configuration]),
    /// `Z_T`.
    Normalization,
    /// `KL(P || T/Z)` against a dense distribution.
    Kl(&'a DenseTensor),
}

/// Largest relative error `|a - fd| / max(|a|, 1e-8)` between `grad` and
/// central differences of `f` with step `h`, over `n_params` coordinates
/// chosen at random (all of them if there are fewer).
pub fn check_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], grad: &[f64], n_params: usize, h: f64, seed: u64) -> f64 {
    let picked: Vec<usize> = if n_params >= x.len() {
        (0..x.len()).collect()
    } else {
        index::sample(&mut seed::rng(seed), x.len(), n_params).into_vec()
    };
    let mut y = x.to_vec();
    let mut worst = 0.0f64;
    for i in picked {
        y[i] = x[i] + h;
        let fp = f(&y);
        y[i] = x[i] - h;
        let fm = f(&y);
        y[i] = x[i];
        let fd = (fp - fm) / (2.0 * h);
        let err = (grad[i] - fd).abs() / grad[i].abs().max(1e-8);
        worst = worst.max(if err.is_nan() { f64::INFINITY } else { err });
    }
    worst
}

fn value_and_grad(net: &Net, n: usize, objective: FdObjective, penalty: f64) -> Result<(f64, Vec<Vec<C64>>)> {
    let with_penalty = |mut v: f64, mut g: Vec<Vec<C64>>| {
        if let Some((pv, Some(pg))) = penalty_net(net, penalty, DEFAULT_DENSE_CAP, true) {
            v += pv;
            for (a, b) in g.iter_mut().zip(&pg) {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            }
        }
        (v, g)
    };
    match objective {
        FdObjective::Nll(batch) => {
            let (v, g) = nll_net(net, n, batch, true)?;
            Ok(with_penalty(v, g.unwrap()))
        }
        FdObjective::Normalization => {
            let sels = vec![SiteSel::Sum; n];
            let mut g: Vec<Vec<C64>> = match net {
                Net::Single(m) => m.cores().iter().map(|c| vec![C64::new(0.0, 0.0); c.len()]).collect(),
                Net::Double(l) => l.cores().iter().map(|c| vec![C64::new(0.0, 0.0); c.len()]).collect(),
            };
            let z = match net {
                Net::Single(m) => engine::single_log_grad(m, &sels, 1.0, &mut g),
                Net::Double(l) => engine::double_log_grad(l, &sels, 1.0, &mut g),
            }
            .value();
            g.iter_mut().flatten().for_each(|v| *v *= z);
            Ok((z, g))
        }
        FdObjective::Kl(p) => {
            let pv = validate_distribution(p)?;
            match kl_net(net, &pv, penalty, true) {
                (v, Some(g)) if v.is_finite() => Ok((v, g)),
                _ => Err(Error::Numerical("KL is infinite at this point".into())),
            }
        }
    }
}

/// Compare the analytic gradient of `objective` at `model` with central
/// differences (step `1e-5`) over `n_params` randomly chosen real
/// parameters, or all of them if the model has fewer. Real MPS include the
/// non-negativity penalty with the given weight in the NLL and KL
/// objectives. Returns the largest relative error.
pub fn finite_difference_check(
    model: &Model,
    objective: FdObjective,
    penalty_weight: f64,
    n_params: usize,
    seed: u64,
) -> Result<f64> {
    let params = Params::from_model(model)?;
    let n = model.n_sites();
    let penalty = if params.kind == ModelKind::MpsReal { penalty_weight } else { 0.0 };
    let (_, g) = value_and_grad(&params.net(), n, objective, penalty)?;
    let grad = params.flatten(&params.chain(g));
    let x = params.to_vec();
    let f = |v: &[f64]| match value_and_grad(&params.with_vec(v).net(), n, objective, penalty) {
        Ok((val, _)) => val,
        Err(_) => f64::NAN,
    };
    Ok(check_gradient(f, &x, &grad, n_params, 1e-5, seed))
}
