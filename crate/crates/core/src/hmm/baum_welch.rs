//! Baum-Welch (EM) training of time-inhomogeneous HMMs.

use super::{normalize_columns, Hmm};
use crate::data::Dataset;
use crate::models::Configuration;
use crate::{par, Error, Result};

/// Pseudo-count added to every expected count before renormalizing.
const PSEUDO_COUNT: f64 = 1e-10;

const CHUNK: usize = 64;

#[derive(Clone, Debug)]
pub struct BaumWelchFit {
    pub hmm: Hmm,
    /// Mean log-likelihood per sample before each iteration, followed by
    /// the value for the returned model.
    pub log_likelihood: Vec<f64>,
}

/// Expected sufficient statistics.
struct Stats {
    ll: f64,
    initial: Vec<f64>,
    transitions: Vec<Vec<f64>>,
    emissions: Vec<Vec<f64>>,
}

impl Stats {
    fn zeros(n: usize, r: usize, d: usize) -> Self {
        Stats {
            ll: 0.0,
            initial: vec![0.0; r],
            transitions: vec![vec![0.0; r * r]; n.saturating_sub(1)],
            emissions: vec![vec![0.0; d * r]; n],
        }
    }

    fn add(&mut self, other: &Stats) {
        self.ll += other.ll;
        let pairs = std::iter::once((&mut self.initial, &other.initial))
            .chain(self.transitions.iter_mut().zip(&other.transitions))
            .chain(self.emissions.iter_mut().zip(&other.emissions));
        for (a, b) in pairs {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

/// Forward-backward on one sequence, accumulating into `st`.
fn accumulate(h: &Hmm, x: &[usize], st: &mut Stats) -> Option<()> {
    let n = x.len();
    let r = h.hidden_dim();
    let mut alpha = vec![vec![0.0; r]; n];
    let mut scale = vec![0.0; n];
    for i in 0..n {
        for k in 0..r {
            let prior = if i == 0 {
                h.initial()[k]
            } else {
                (0..r).map(|j| h.transition(i - 1, k, j) * alpha[i - 1][j]).sum()
            };
            alpha[i][k] = prior * h.emission(i, x[i], k);
        }
        let c: f64 = alpha[i].iter().sum();
        if !(c > 0.0) {
            return None;
        }
        alpha[i].iter_mut().for_each(|a| *a /= c);
        scale[i] = c;
    }
    let mut beta = vec![1.0; r];
    for i in (0..n).rev() {
        for k in 0..r {
            let g = alpha[i][k] * beta[k];
            st.emissions[i][x[i] * r + k] += g;
            if i == 0 {
                st.initial[k] += g;
            }
        }
        if i > 0 {
            // xi(j -> k) = alpha_{i-1}(j) T(k|j) E_i(x_i|k) beta_i(k) / c_i
            for k in 0..r {
                let tail = h.emission(i, x[i], k) * beta[k] / scale[i];
                for j in 0..r {
                    st.transitions[i - 1][k * r + j] += alpha[i - 1][j] * h.transition(i - 1, k, j) * tail;
                }
            }
            beta = (0..r)
                .map(|j| {
                    (0..r)
                        .map(|k| h.transition(i - 1, k, j) * h.emission(i, x[i], k) * beta[k])
                        .sum::<f64>()
                        / scale[i]
                })
                .collect();
        }
    }
    st.ll += scale.iter().map(|c| c.ln()).sum::<f64>();
    Some(())
}

fn e_step(h: &Hmm, rows: &[Configuration]) -> Result<Stats> {
    let (n, r, d) = (h.n_sites(), h.hidden_dim(), h.obs_dim());
    let parts = par::map_chunks(rows.len(), CHUNK, |range| -> Result<Stats> {
        let mut st = Stats::zeros(n, r, d);
        for i in range {
            accumulate(h, &rows[i], &mut st).ok_or(Error::ZeroProbability { index: i })?;
        }
        Ok(st)
    });
    let mut total = Stats::zeros(n, r, d);
    for p in parts {
        total.add(&p?);
    }
    Ok(total)
}

fn m_step(st: Stats, r: usize, d: usize) -> Result<Hmm> {
    let norm = |mut t: Vec<f64>, rows: usize, cols: usize| {
        t.iter_mut().for_each(|v| *v += PSEUDO_COUNT);
        normalize_columns(&mut t, rows, cols);
        t
    };
    Hmm::new(
        norm(st.initial, r, 1),
        st.transitions.into_iter().map(|t| norm(t, r, r)).collect(),
        st.emissions.into_iter().map(|e| norm(e, d, r)).collect(),
    )
}

/// `iters` EM iterations from a random HMM drawn with `seed`.
pub fn baum_welch(data: &Dataset, hidden_dim: usize, iters: usize, seed: u64) -> Result<BaumWelchFit> {
    if hidden_dim == 0 {
        return Err(Error::InvalidArgument("hidden dimension must be positive".into()));
    }
    let init = Hmm::random(data.n_vars().max(1), hidden_dim, data.cardinality().max(1), seed);
    baum_welch_from(data, init, iters)
}

/// `iters` EM iterations starting from `init`.
pub fn baum_welch_from(data: &Dataset, init: Hmm, iters: usize) -> Result<BaumWelchFit> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    if data.n_vars() != init.n_sites() || data.cardinality() != init.obs_dim() {
        return Err(Error::Shape("dataset does not match the HMM dimensions".into()));
    }
    let rows = data.rows();
    let count = rows.len() as f64;
    let (r, d) = (init.hidden_dim(), init.obs_dim());
    let mut h = init;
    let mut history = Vec::with_capacity(iters + 1);
    for _ in 0..iters {
        let st = e_step(&h, rows)?;
        history.push(st.ll / count);
        h = m_step(st, r, d)?;
    }
    history.push(e_step(&h, rows)?.ll / count);
    Ok(BaumWelchFit {
        hmm: h,
        log_likelihood: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn likelihood_is_monotone() {
        for s in 0..5 {
            let truth = Hmm::random(6, 3, 3, 100 + s);
            let data = Dataset::new(6, 3, truth.sample_many(300, s)).unwrap();
            let fit = baum_welch(&data, 3, 100, s).unwrap();
            for w in fit.log_likelihood.windows(2) {
                assert!(w[1] >= w[0] - 1e-10, "{} -> {}", w[0], w[1]);
            }
            let nll = fit.hmm.nll(&data).unwrap();
            assert!((nll + fit.log_likelihood.last().unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn one_state_is_closed_form() {
        let truth = Hmm::random(4, 2, 3, 1);
        let data = Dataset::new(4, 3, truth.sample_many(500, 2)).unwrap();
        let fit = baum_welch(&data, 1, 1, 0).unwrap();
        for i in 0..4 {
            for v in 0..3 {
                let freq = data.rows().iter().filter(|x| x[i] == v).count() as f64 / 500.0;
                assert!((fit.hmm.emission(i, v, 0) - freq).abs() < 1e-9);
            }
        }
        let again = baum_welch_from(&data, fit.hmm.clone(), 1).unwrap();
        assert!((again.log_likelihood[1] - fit.log_likelihood[1]).abs() < 1e-12);
    }

    #[test]
    fn deterministic_emissions_are_learned() {
        // hidden state k always emits symbol k: the observations form a
        // Markov chain whose likelihood EM should at least match
        let (r, n) = (3, 6);
        let mut emission = vec![0.0; r * r];
        for k in 0..r {
            emission[k * r + k] = 1.0;
        }
        let transition = vec![0.7, 0.2, 0.1, 0.2, 0.6, 0.3, 0.1, 0.2, 0.6];
        let truth = Hmm::homogeneous(n, vec![0.5, 0.3, 0.2], transition, emission).unwrap();
        let data = Dataset::new(n, r, truth.sample_many(400, 3)).unwrap();
        let generating = -truth.nll(&data).unwrap();
        let best = (0..3)
            .map(|s| *baum_welch(&data, r, 300, s).unwrap().log_likelihood.last().unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(best >= generating - 1e-6, "{best} < {generating}");
    }

    #[test]
    fn empty_data_is_rejected() {
        let data = Dataset::new(3, 2, vec![]).unwrap();
        assert!(baum_welch(&data, 2, 5, 0).is_err());
    }
}
