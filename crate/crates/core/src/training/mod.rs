//! Maximum-likelihood training and KL factorization.
//!
//! Parameters are updated as `w <- w - lr * g` where, for a complex entry
//! `w = u + i v`, `g = dL/du + i dL/dv`. This equals twice the conjugate
//! Wirtinger derivative and reduces to the ordinary gradient for real
//! entries, so a learning rate means the same thing for every kind.

mod fdcheck;
mod fit;
mod lbfgs;
mod objective;
pub(crate) mod params;
mod sgd;

use std::fmt;
use std::io::Write;

pub use fdcheck::{check_gradient, finite_difference_check, FdObjective};
pub use fit::{fit_dense, fit_dense_from};
pub use lbfgs::{minimize, LbfgsOptions, LbfgsResult, StopReason};
pub use objective::{kl_divergence, nll, nll_gradient, nll_rows, normalization_gradient, Gradient};
pub use sgd::{learning_rate_grid, lr_grid_search, sgd_train};

use crate::models::{BornModel, FieldKind, LpsModel, Model, MpsModel};
use crate::{Error, Result, DEFAULT_DENSE_CAP};

/// The six trainable model kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    MpsNonneg,
    MpsReal,
    BornReal,
    BornComplex,
    LpsReal,
    LpsComplex,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::MpsNonneg,
        ModelKind::MpsReal,
        ModelKind::BornReal,
        ModelKind::BornComplex,
        ModelKind::LpsReal,
        ModelKind::LpsComplex,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::MpsNonneg => "mps-nonneg",
            ModelKind::MpsReal => "mps-real",
            ModelKind::BornReal => "bm-real",
            ModelKind::BornComplex => "bm-complex",
            ModelKind::LpsReal => "lps-real",
            ModelKind::LpsComplex => "lps-complex",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownName(s.to_string()))
    }

    pub fn field(self) -> FieldKind {
        match self {
            ModelKind::MpsNonneg => FieldKind::NonNeg,
            ModelKind::MpsReal | ModelKind::BornReal | ModelKind::LpsReal => FieldKind::Real,
            ModelKind::BornComplex | ModelKind::LpsComplex => FieldKind::Complex,
        }
    }

    pub fn of(model: &Model) -> Option<Self> {
        params::Params::from_model(model).ok().map(|p| p.kind)
    }

    /// Random initial model. Entries are Gaussian with standard deviation
    /// `1/sqrt(rank)`; non-negative MPS square them and real MPS take their
    /// absolute value so every configuration starts with positive weight.
    /// `puri_dim` is used by the LPS kinds only.
    pub fn random_model(self, n_sites: usize, phys_dim: usize, rank: usize, puri_dim: usize, seed: u64) -> Model {
        match self {
            ModelKind::MpsNonneg => MpsModel::random(FieldKind::NonNeg, n_sites, phys_dim, rank, seed).into(),
            ModelKind::MpsReal => {
                let m = MpsModel::random(FieldKind::Real, n_sites, phys_dim, rank, seed);
                let cores = m
                    .cores()
                    .iter()
                    .map(|c| {
                        let data = c.data().iter().map(|z| crate::C64::new(z.re.abs(), 0.0)).collect();
                        crate::DenseTensor::new(c.shape().to_vec(), data).unwrap()
                    })
                    .collect();
                MpsModel::new(FieldKind::Real, cores).unwrap().into()
            }
            ModelKind::BornReal | ModelKind::BornComplex => {
                BornModel::random(self.field(), n_sites, phys_dim, rank, seed).into()
            }
            ModelKind::LpsReal | ModelKind::LpsComplex => {
                LpsModel::random(self.field(), n_sites, phys_dim, rank, puri_dim, seed).into()
            }
        }
    }

    /// Number of real parameters (complex entries count twice).
    pub fn n_real_params(model: &Model) -> usize {
        params::Params::from_model(model).map(|p| p.len()).unwrap_or(0)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Optimizer {
    Sgd,
    Lbfgs,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Weight of the non-negativity penalty for real MPS.
    pub penalty_weight: f64,
    pub lbfgs_memory: usize,
    /// Random restarts for [`fit_dense`].
    pub restarts: usize,
    /// Iteration cap for each L-BFGS run.
    pub max_iters: usize,
    pub dense_cap: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-2,
            batch_size: 20,
            epochs: 100,
            seed: 0,
            optimizer: Optimizer::Sgd,
            penalty_weight: 10.0,
            lbfgs_memory: 10,
            restarts: 20,
            max_iters: 5000,
            dense_cap: DEFAULT_DENSE_CAP,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument("learning rate must be finite and >= 0".into()));
        }
        if self.batch_size == 0 || self.lbfgs_memory == 0 || self.restarts == 0 {
            return Err(Error::InvalidArgument(
                "batch size, L-BFGS memory and restarts must be positive".into(),
            ));
        }
        if !(self.penalty_weight >= 0.0) {
            return Err(Error::InvalidArgument("penalty weight must be >= 0".into()));
        }
        Ok(())
    }
}

/// Objective values after one epoch (SGD) or one iteration (L-BFGS).
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: f64,
    pub valid: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    /// Best model seen (by validation NLL when a validation set is given).
    pub model: Model,
    pub best_epoch: usize,
    /// Training objective of the returned model: NLL per sample, or the KL
    /// divergence for [`fit_dense`].
    pub best_train: f64,
    pub best_valid: Option<f64>,
    pub wall_ms: f64,
    pub diverged: bool,
    /// Steps skipped because a batch sample had (numerically) zero
    /// probability, as `(epoch, row index)`.
    pub skipped_steps: Vec<(usize, usize)>,
    pub penalty_weight: f64,
}

impl TrainReport {
    /// CSV rows `epoch,split,nll,wall_ms`. With `timing = false` the wall
    /// clock column is written as 0 so reruns are byte-identical.
    pub fn write_csv<W: Write>(&self, mut w: W, timing: bool) -> Result<()> {
        writeln!(w, "epoch,split,nll,wall_ms")?;
        for r in &self.history {
            let ms = if timing { r.wall_ms } else { 0.0 };
            writeln!(w, "{},train,{},{ms:.3}", r.epoch, r.train)?;
            if let Some(v) = r.valid {
                writeln!(w, "{},valid,{v},{ms:.3}", r.epoch)?;
            }
        }
        Ok(())
    }
}
