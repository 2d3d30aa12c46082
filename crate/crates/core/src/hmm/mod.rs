//! Hidden Markov models and their correspondence with non-negative MPS.
//!
//! Hidden states and observations are 0-based. Models are
//! time-inhomogeneous: every step has its own transition and emission table.

mod baum_welch;
mod bridge;
mod ncp;

pub use baum_welch::{baum_welch, baum_welch_from, BaumWelchFit};
pub use bridge::{hmm_to_mps, mps_to_hmm, MpsToHmm};
pub use ncp::{ncp, NcpResult};

use rand::Rng;

use crate::data::Dataset;
use crate::models::{check_configuration, Configuration};
use crate::{par, seed, Error, Result};

const STOCHASTIC_TOL: f64 = 1e-12;

/// An HMM over `N` observed variables with `d` values and hidden variables
/// with `r` values.
///
/// `transitions[i][(h2, h1)]` is `P(H_{i+1} = h2 | H_i = h1)` for
/// `i < N - 1`, and `emissions[i][(x, h)]` is `P(X_i = x | H_i = h)`; both
/// are stored row-major with the conditioning variable as column.
#[derive(Clone, Debug, PartialEq)]
pub struct Hmm {
    hidden: usize,
    obs: usize,
    initial: Vec<f64>,
    transitions: Vec<Vec<f64>>,
    emissions: Vec<Vec<f64>>,
}

fn check_columns(table: &[f64], rows: usize, cols: usize, what: &str) -> Result<()> {
    if table.len() != rows * cols {
        return Err(Error::Shape(format!(
            "{what} has {} entries, expected {rows}x{cols}",
            table.len()
        )));
    }
    for c in 0..cols {
        let mut s = 0.0;
        for r in 0..rows {
            let v = table[r * cols + c];
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{what} has invalid entry {v}")));
            }
            s += v;
        }
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidArgument(format!("{what} column {c} sums to {s}")));
        }
    }
    Ok(())
}

/// Random column-stochastic table with uniform(0,1) entries normalized per
/// column.
fn random_stochastic<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Vec<f64> {
    let mut t: Vec<f64> = (0..rows * cols).map(|_| rng.random::<f64>() + 1e-3).collect();
    normalize_columns(&mut t, rows, cols);
    t
}

/// Normalize every column to sum 1; all-zero columns become uniform.
pub(crate) fn normalize_columns(t: &mut [f64], rows: usize, cols: usize) {
    for c in 0..cols {
        let s: f64 = (0..rows).map(|r| t[r * cols + c]).sum();
        for r in 0..rows {
            t[r * cols + c] = if s > 0.0 { t[r * cols + c] / s } else { 1.0 / rows as f64 };
        }
    }
}

impl Hmm {
    pub fn new(initial: Vec<f64>, transitions: Vec<Vec<f64>>, emissions: Vec<Vec<f64>>) -> Result<Self> {
        let r = initial.len();
        if r == 0 || emissions.is_empty() {
            return Err(Error::InvalidArgument("an HMM needs at least one site and one hidden state".into()));
        }
        if transitions.len() + 1 != emissions.len() {
            return Err(Error::Shape(format!(
                "{} transition tables for {} sites",
                transitions.len(),
                emissions.len()
            )));
        }
        let d = emissions[0].len() / r;
        if d == 0 {
            return Err(Error::Shape("emission tables are empty".into()));
        }
        check_columns(&initial, r, 1, "initial distribution")?;
        for (i, t) in transitions.iter().enumerate() {
            check_columns(t, r, r, &format!("transition table {i}"))?;
        }
        for (i, e) in emissions.iter().enumerate() {
            check_columns(e, d, r, &format!("emission table {i}"))?;
        }
        Ok(Hmm {
            hidden: r,
            obs: d,
            initial,
            transitions,
            emissions,
        })
    }

    /// Same tables at every step.
    pub fn homogeneous(n_sites: usize, initial: Vec<f64>, transition: Vec<f64>, emission: Vec<f64>) -> Result<Self> {
        if n_sites == 0 {
            return Err(Error::InvalidArgument("an HMM needs at least one site".into()));
        }
        Hmm::new(initial, vec![transition; n_sites - 1], vec![emission; n_sites])
    }

    /// Random HMM whose columns are normalized uniform(0,1) draws.
    pub fn random(n_sites: usize, hidden: usize, obs: usize, seed: u64) -> Self {
        assert!(n_sites > 0 && hidden > 0 && obs > 0, "dimensions must be positive");
        let mut rng = seed::rng(seed);
        let initial = random_stochastic(&mut rng, hidden, 1);
        let transitions = (1..n_sites).map(|_| random_stochastic(&mut rng, hidden, hidden)).collect();
        let emissions = (0..n_sites).map(|_| random_stochastic(&mut rng, obs, hidden)).collect();
        Hmm {
            hidden,
            obs,
            initial,
            transitions,
            emissions,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.emissions.len()
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    pub fn obs_dim(&self) -> usize {
        self.obs
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transitions(&self) -> &[Vec<f64>] {
        &self.transitions
    }

    pub fn emissions(&self) -> &[Vec<f64>] {
        &self.emissions
    }

    /// `P(H_{i+1} = to | H_i = from)`.
    pub fn transition(&self, i: usize, to: usize, from: usize) -> f64 {
        self.transitions[i][to * self.hidden + from]
    }

    /// `P(X_i = x | H_i = h)`.
    pub fn emission(&self, i: usize, x: usize, h: usize) -> f64 {
        self.emissions[i][x * self.hidden + h]
    }

    /// `ln P(x)` by the scaled forward recursion. Fails with
    /// `ZeroProbability { index }` naming the first site after which the
    /// prefix has probability zero.
    pub fn forward_log_likelihood(&self, x: &[usize]) -> Result<f64> {
        check_configuration(x, self.n_sites(), self.obs)?;
        let r = self.hidden;
        let mut alpha: Vec<f64> = (0..r).map(|h| self.initial[h] * self.emission(0, x[0], h)).collect();
        let mut ll = 0.0;
        for i in 0..x.len() {
            if i > 0 {
                alpha = (0..r)
                    .map(|h2| {
                        let s: f64 = (0..r).map(|h1| self.transition(i - 1, h2, h1) * alpha[h1]).sum();
                        s * self.emission(i, x[i], h2)
                    })
                    .collect();
            }
            let c: f64 = alpha.iter().sum();
            if !(c > 0.0) {
                return Err(Error::ZeroProbability { index: i });
            }
            alpha.iter_mut().for_each(|a| *a /= c);
            ll += c.ln();
        }
        Ok(ll)
    }

    /// Mean negative log-likelihood per sample.
    pub fn nll(&self, data: &Dataset) -> Result<f64> {
        if data.n_vars() != self.n_sites() || data.cardinality() != self.obs {
            return Err(Error::Shape(format!(
                "dataset has {} variables of cardinality {}, HMM has {} sites with {} symbols",
                data.n_vars(),
                data.cardinality(),
                self.n_sites(),
                self.obs
            )));
        }
        if data.is_empty() {
            return Err(Error::InvalidArgument("empty dataset".into()));
        }
        let rows = data.rows();
        let sums = par::map_chunks(rows.len(), 64, |range| -> Result<f64> {
            let mut s = 0.0;
            for i in range {
                s += self.forward_log_likelihood(&rows[i]).map_err(|e| match e {
                    Error::ZeroProbability { .. } => Error::ZeroProbability { index: i },
                    e => e,
                })?;
            }
            Ok(s)
        });
        let mut total = 0.0;
        for s in sums {
            total += s?;
        }
        Ok(-total / rows.len() as f64)
    }

    /// Draw `count` observation sequences; sample `k` uses its own derived
    /// stream.
    pub fn sample_many(&self, count: usize, rng_seed: u64) -> Vec<Configuration> {
        let draw = |rng: &mut rand_chacha::ChaCha8Rng, probs: &mut dyn Iterator<Item = f64>| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut last = 0;
            for (k, p) in probs.enumerate() {
                acc += p;
                if p > 0.0 {
                    last = k;
                }
                if u < acc {
                    return k;
                }
            }
            last
        };
        let r = self.hidden;
        par::map_indexed(count, |k| {
            let mut rng = seed::rng(seed::derive(rng_seed, k as u64));
            let mut h = draw(&mut rng, &mut self.initial.iter().copied());
            let mut x = Vec::with_capacity(self.n_sites());
            for i in 0..self.n_sites() {
                if i > 0 {
                    h = draw(&mut rng, &mut (0..r).map(|h2| self.transition(i - 1, h2, h)));
                }
                x.push(draw(&mut rng, &mut (0..self.obs).map(|v| self.emission(i, v, h))));
            }
            Configuration(x)
        })
    }
}
