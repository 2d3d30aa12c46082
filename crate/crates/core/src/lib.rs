//! Tensor-network models of discrete multivariate probability distributions.
//!
//! The crate covers non-negative, real and complex matrix product states,
//! Born machines and locally purified states, together with:
//!
//! * exact evaluation, normalization, marginals and ancestral sampling
//!   ([`models`]),
//! * maximum-likelihood and KL-divergence training ([`training`]),
//! * the correspondence with hidden Markov models ([`hmm`]),
//! * compilation of 2-local quantum circuits into Born machines and locally
//!   purified states ([`circuits`]),
//! * witness matrices and rank oracles used to verify separations between the
//!   different factorizations ([`ranks`]).
//!
//! All tensors are stored row-major with the last index varying fastest.
//! Configurations are 0-based.
//!
//! ```
//! use tnprob::training::{fit_dense, ModelKind, Optimizer, TrainConfig};
//!
//! # fn main() -> tnprob::Result<()> {
//! let target = ModelKind::MpsNonneg.random_model(4, 2, 3, 1, 7).to_dense()?;
//! let z = target.sum().re;
//! let p = target.scale(tnprob::C64::new(1.0 / z, 0.0));
//! let config = TrainConfig { optimizer: Optimizer::Lbfgs, restarts: 5, ..TrainConfig::default() };
//! let fit = fit_dense(&p, ModelKind::BornComplex, 3, 1, &config)?;
//! assert!(fit.best_train < 0.05);
//! # Ok(())
//! # }
//! ```

pub mod circuits;
pub mod data;
pub mod error;
pub mod hmm;
pub mod io;
pub(crate) mod linalg;
pub mod models;
pub mod par;
pub mod ranks;
pub mod seed;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
pub use tensor::DenseTensor;

/// Default cap on the number of entries of any dense tensor (2^24).
pub const DEFAULT_DENSE_CAP: usize = 1 << 24;
