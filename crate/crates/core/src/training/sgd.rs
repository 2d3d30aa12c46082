//! Minibatch SGD and full-batch L-BFGS training on a dataset.

use std::time::Instant;

use rand::seq::SliceRandom;

use super::lbfgs::{minimize, LbfgsOptions};
use super::objective::{check_data, nll_net, penalty_net};
use super::params::{Net, Params};
use super::{EpochRecord, ModelKind, Optimizer, TrainConfig, TrainReport};
use crate::data::Dataset;
use crate::models::{dense, Configuration, Model};
use crate::{seed, Error, Result, C64};

/// Learning rates tried by [`lr_grid_search`]: `1e-5, 1e-4, ..., 1e5`.
pub fn learning_rate_grid() -> Vec<f64> {
    (-5..=5).map(|k| 10f64.powi(k)).collect()
}

struct Tracker<'a> {
    n_sites: usize,
    train: &'a [Configuration],
    valid: Option<&'a [Configuration]>,
    start: Instant,
    history: Vec<EpochRecord>,
    best: Option<(usize, f64, Option<f64>, Params)>,
    diverged: bool,
}

impl Tracker<'_> {
    /// NLL of a whole split; `+inf` if some row has zero probability and
    /// `None` when the model itself is broken.
    fn eval(&self, net: &Net, rows: &[Configuration]) -> Option<f64> {
        match nll_net(net, self.n_sites, rows, false) {
            Ok((v, _)) if v.is_nan() => None,
            Ok((v, _)) => Some(v),
            Err(Error::ZeroProbability { .. }) => Some(f64::INFINITY),
            Err(_) => None,
        }
    }

    fn record(&mut self, epoch: usize, params: &Params) {
        let net = params.net();
        let Some(train) = self.eval(&net, self.train) else {
            self.diverged = true;
            return;
        };
        let valid = match self.valid {
            Some(v) => match self.eval(&net, v) {
                Some(x) => Some(x),
                None => {
                    self.diverged = true;
                    return;
                }
            },
            None => None,
        };
        self.history.push(EpochRecord {
            epoch,
            train,
            valid,
            wall_ms: self.start.elapsed().as_secs_f64() * 1e3,
        });
        let key = valid.unwrap_or(train);
        let better = match &self.best {
            None => key.is_finite(),
            Some((_, bt, bv, _)) => key < bv.unwrap_or(*bt),
        };
        if better {
            self.best = Some((epoch, train, valid, params.clone()));
        }
    }
}

fn has_negative(net: &Net, cap: usize) -> bool {
    match net {
        Net::Single(m) => {
            crate::tensor::checked_dense_size(m.phys_dim(), m.n_sites(), cap).is_ok()
                && dense::single_forward(m).last().unwrap().iter().any(|z| z.re < 0.0)
        }
        Net::Double(_) => false,
    }
}

fn add_grads(acc: &mut [Vec<C64>], other: &[Vec<C64>]) {
    for (a, b) in acc.iter_mut().zip(other) {
        for (x, y) in a.iter_mut().zip(b) {
            *x += y;
        }
    }
}

/// Train `model` on `train`. With SGD, every epoch shuffles the rows with a
/// stream derived from `config.seed` and takes steps of `batch_size` rows;
/// a step whose batch contains a zero-probability row is skipped and
/// reported. With L-BFGS, `epochs` bounds the number of full-batch
/// iterations. The returned model is the best one seen, judged by the
/// validation NLL when `valid` is given and by the training NLL otherwise.
///
/// Real MPS are trained with the penalty `w sum_x max(0, -T[x]/Z)^2`, whose
/// weight doubles after each epoch that ends with a negative value.
pub fn sgd_train(model: &Model, train: &Dataset, valid: Option<&Dataset>, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    check_data(model, train)?;
    if let Some(v) = valid {
        check_data(model, v)?;
        if v.is_empty() {
            return Err(Error::InvalidArgument("empty validation set".into()));
        }
    }
    if train.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let mut params = Params::from_model(model)?;
    let penalized = params.kind == ModelKind::MpsReal;
    let mut weight = if penalized { config.penalty_weight } else { 0.0 };
    let n = model.n_sites();
    let rows = train.rows();
    let mut tracker = Tracker {
        n_sites: n,
        train: rows,
        valid: valid.map(|v| v.rows()),
        start: Instant::now(),
        history: Vec::new(),
        best: None,
        diverged: false,
    };
    let mut skipped = Vec::new();
    tracker.record(0, &params);

    match config.optimizer {
        Optimizer::Sgd => {
            let mut v = params.to_vec();
            let mut order: Vec<usize> = (0..rows.len()).collect();
            'epochs: for epoch in 1..=config.epochs {
                if tracker.diverged {
                    break;
                }
                order.sort_unstable();
                order.shuffle(&mut seed::rng(seed::derive(config.seed, epoch as u64)));
                for chunk in order.chunks(config.batch_size) {
                    let batch: Vec<Configuration> = chunk.iter().map(|&i| rows[i].clone()).collect();
                    let net = params.net();
                    let mut g = match nll_net(&net, n, &batch, true) {
                        Ok((_, g)) => g.unwrap(),
                        Err(Error::ZeroProbability { index }) => {
                            skipped.push((epoch, chunk[index]));
                            continue;
                        }
                        Err(_) => {
                            tracker.diverged = true;
                            break 'epochs;
                        }
                    };
                    if let Some((_, Some(pg))) = penalty_net(&net, weight, config.dense_cap, true) {
                        add_grads(&mut g, &pg);
                    }
                    let flat = params.flatten(&params.chain(g));
                    for (vi, gi) in v.iter_mut().zip(&flat) {
                        *vi -= config.learning_rate * gi;
                    }
                    if v.iter().any(|x| !x.is_finite()) {
                        tracker.diverged = true;
                        break 'epochs;
                    }
                    params = params.with_vec(&v);
                }
                tracker.record(epoch, &params);
                if penalized && has_negative(&params.net(), config.dense_cap) {
                    weight *= 2.0;
                }
            }
        }
        Optimizer::Lbfgs => {
            let opts = LbfgsOptions {
                memory: config.lbfgs_memory,
                max_iters: config.epochs,
                ..LbfgsOptions::default()
            };
            let base = params.clone();
            let f = |x: &[f64]| -> (f64, Vec<f64>) {
                let p = base.with_vec(x);
                let net = p.net();
                match nll_net(&net, n, rows, true) {
                    Ok((val, g)) => {
                        let mut g = g.unwrap();
                        let mut val = val;
                        if let Some((pv, Some(pg))) = penalty_net(&net, weight, config.dense_cap, true) {
                            val += pv;
                            add_grads(&mut g, &pg);
                        }
                        (val, p.flatten(&p.chain(g)))
                    }
                    Err(_) => (f64::INFINITY, Vec::new()),
                }
            };
            let res = minimize(f, params.to_vec(), &opts, |k, x, _| tracker.record(k, &base.with_vec(x)));
            params = base.with_vec(&res.x);
            if res.reason == super::StopReason::NonFiniteStart {
                tracker.diverged = true;
            }
        }
    }

    let wall_ms = tracker.start.elapsed().as_secs_f64() * 1e3;
    let (best_epoch, best_train, best_valid, best) = match tracker.best.take() {
        Some(b) => b,
        None => (0, f64::INFINITY, None, params),
    };
    Ok(TrainReport {
        history: tracker.history,
        model: best.to_model(),
        best_epoch,
        best_train,
        best_valid,
        wall_ms,
        diverged: tracker.diverged,
        skipped_steps: skipped,
        penalty_weight: weight,
    })
}

/// Train once per learning rate in [`learning_rate_grid`] and keep the run
/// with the lowest training NLL (the smaller rate on ties).
pub fn lr_grid_search(
    model: &Model,
    train: &Dataset,
    valid: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<(f64, TrainReport)> {
    let mut best: Option<(f64, TrainReport)> = None;
    for lr in learning_rate_grid() {
        let cfg = TrainConfig {
            learning_rate: lr,
            ..config.clone()
        };
        let report = sgd_train(model, train, valid, &cfg)?;
        if !report.best_train.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|(_, b)| report.best_train < b.best_train) {
            best = Some((lr, report));
        }
    }
    best.ok_or_else(|| Error::Numerical("training diverged at every learning rate".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::training::nll_rows;

    fn dataset(seed: u64) -> Dataset {
        // samples of a correlated 6-bit source: all-equal bits or random
        use rand::Rng;
        let mut rng = seed::rng(seed);
        let rows = (0..200)
            .map(|_| {
                if rng.random::<f64>() < 0.6 {
                    let b = rng.random_range(0..2);
                    Configuration(vec![b; 6])
                } else {
                    Configuration((0..6).map(|_| rng.random_range(0..2)).collect())
                }
            })
            .collect();
        Dataset::new(6, 2, rows).unwrap()
    }

    #[test]
    fn training_lowers_the_nll() {
        let data = dataset(3);
        for kind in ModelKind::ALL {
            let m = kind.random_model(6, 2, 2, 2, 11);
            let before = nll_rows(&m, data.rows()).unwrap();
            let cfg = TrainConfig {
                learning_rate: 0.05,
                epochs: 15,
                ..TrainConfig::default()
            };
            let r = sgd_train(&m, &data, None, &cfg).unwrap();
            assert!(!r.diverged, "{kind}");
            assert_eq!(r.history.len(), 16);
            assert!(r.best_train < before - 0.1, "{kind}: {before} -> {}", r.best_train);
            let check = nll_rows(&r.model, data.rows()).unwrap();
            assert!((check - r.best_train).abs() < 1e-9);
        }
    }

    #[test]
    fn lbfgs_training() {
        let data = dataset(5);
        let m = ModelKind::LpsReal.random_model(6, 2, 2, 2, 1);
        let cfg = TrainConfig {
            optimizer: Optimizer::Lbfgs,
            epochs: 50,
            ..TrainConfig::default()
        };
        let r = sgd_train(&m, &data, None, &cfg).unwrap();
        let w = r.history.windows(2).all(|p| p[1].train <= p[0].train + 1e-12);
        assert!(w);
        assert!(r.best_train < r.history[0].train - 0.3);
    }

    #[test]
    fn same_seed_same_history() {
        let data = dataset(8);
        let m = ModelKind::BornComplex.random_model(6, 2, 2, 1, 2);
        let cfg = TrainConfig {
            epochs: 4,
            ..TrainConfig::default()
        };
        let a = sgd_train(&m, &data, None, &cfg).unwrap();
        let b = sgd_train(&m, &data, None, &cfg).unwrap();
        let mut ca = Vec::new();
        let mut cb = Vec::new();
        a.write_csv(&mut ca, false).unwrap();
        b.write_csv(&mut cb, false).unwrap();
        assert_eq!(ca, cb);
    }

    #[test]
    fn validation_selects_the_model() {
        let data = dataset(9).random_splits(150, 50, 0).unwrap();
        let s = data.splits().unwrap().clone();
        let train = data.subset(&s.train);
        let valid = data.subset(&s.valid);
        let m = ModelKind::MpsNonneg.random_model(6, 2, 2, 1, 4);
        let cfg = TrainConfig {
            learning_rate: 0.1,
            epochs: 10,
            ..TrainConfig::default()
        };
        let r = sgd_train(&m, &train, Some(&valid), &cfg).unwrap();
        let best = r.history.iter().map(|h| h.valid.unwrap()).fold(f64::INFINITY, f64::min);
        assert_eq!(r.best_valid, Some(best));
        assert_eq!(r.history[r.best_epoch].valid, Some(best));
    }

    #[test]
    fn huge_learning_rate_diverges_cleanly() {
        let data = dataset(1);
        let m = ModelKind::MpsReal.random_model(6, 2, 2, 1, 4);
        let cfg = TrainConfig {
            learning_rate: 1e5,
            epochs: 5,
            ..TrainConfig::default()
        };
        let r = sgd_train(&m, &data, None, &cfg).unwrap();
        assert!(r.best_train.is_finite());
        assert!(r.best_train <= r.history[0].train);
    }

    #[test]
    fn zero_probability_rows_are_skipped() {
        // the model forbids x0 = 1; the dataset contains one such row
        let c1 = crate::DenseTensor::from_real(vec![2, 1, 1], &[1.0, 0.0]).unwrap();
        let c2 = crate::DenseTensor::from_real(vec![2, 1, 1], &[1.0, 1.0]).unwrap();
        let m = Model::Mps(crate::models::MpsModel::new(crate::models::FieldKind::NonNeg, vec![c1, c2]).unwrap());
        let rows = vec![Configuration(vec![0, 0]), Configuration(vec![1, 0]), Configuration(vec![0, 1])];
        let data = Dataset::new(2, 2, rows).unwrap();
        let cfg = TrainConfig {
            batch_size: 1,
            epochs: 2,
            ..TrainConfig::default()
        };
        let r = sgd_train(&m, &data, None, &cfg).unwrap();
        assert_eq!(r.skipped_steps.iter().filter(|s| s.1 == 1).count(), 2);
    }
}
