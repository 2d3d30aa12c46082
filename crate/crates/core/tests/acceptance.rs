//! End-to-end acceptance checks. Each test prints one `criterion N: PASS`
//! or `criterion N: FAIL` line and fails when its criterion is not met.

use std::io::Write;
use std::time::Instant;

use tnprob::circuits::{circuit_to_born, circuit_with_ancillas_to_lps, random_circuit, random_circuit_with_dims, simulate_dense};
use tnprob::data::Dataset;
use tnprob::hmm::{baum_welch, hmm_to_mps, mps_to_hmm, Hmm};
use tnprob::models::{
    config_from_index, lps_complex_to_real, lps_to_mps_real, mps_nonneg_to_lps_real, BornModel, FieldKind, LpsModel,
    Model, MpsModel,
};
use tnprob::ranks::{
    b_complex_sqrt_witness, central_bipartition, complex_sqrt_prime_witness, e_complex_sqrt_factors,
    euclidean_family_bm, euclidean_matrix, euclidean_sqrt_witness, f_nonneg_factor, matmul, matrix_rank,
    nonneg_rank_exact_small, prime_family_mps, prime_matrix, real_sqrt_rank, sqrt_witness_residual, witness_matrix,
    Bound, DEFAULT_MAX_ENTRIES, DEFAULT_RANK_TOL,
};
use tnprob::training::{fit_dense, finite_difference_check, sgd_train, FdObjective, ModelKind, Optimizer, TrainConfig};
use tnprob::{seed, DenseTensor, DEFAULT_DENSE_CAP};

/// Writes straight to stderr so the lines survive the test harness's output
/// capture.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stderr().lock(), $($arg)*);
    }};
}

/// Collects the individual checks of one criterion.
struct Criterion {
    id: usize,
    failures: Vec<String>,
    start: Instant,
}

impl Criterion {
    fn new(id: usize) -> Self {
        Criterion { id, failures: Vec::new(), start: Instant::now() }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn finish(mut self, budget_s: Option<f64>) {
        let secs = self.start.elapsed().as_secs_f64();
        if let Some(b) = budget_s {
            self.check(secs < b, format!("took {secs:.1} s, budget {b} s"));
        }
        if self.failures.is_empty() {
            say!("criterion {}: PASS ({secs:.1} s)", self.id);
        } else {
            say!("criterion {}: FAIL ({secs:.1} s)", self.id);
            for f in &self.failures {
                say!("  - {f}");
            }
            panic!("criterion {} failed: {:?}", self.id, self.failures);
        }
    }
}

fn max_diff(a: &DenseTensor, b: &DenseTensor) -> f64 {
    DenseTensor::max_abs_diff(a, b).unwrap()
}

fn real_rows(m: &DenseTensor) -> Vec<Vec<f64>> {
    let n = m.shape()[1];
    m.real_parts().chunks(n).map(|r| r.to_vec()).collect()
}

fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn hmm_probabilities(h: &Hmm) -> Vec<f64> {
    let n = h.n_sites();
    (0..h.obs_dim().pow(n as u32))
        .map(|i| h.forward_log_likelihood(&config_from_index(i, n, h.obs_dim()).0).unwrap().exp())
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn criterion_01_witness_matrices() {
    let mut c = Criterion::new(1);
    let rank = |name: &str| matrix_rank(&witness_matrix(name).unwrap().entries, DEFAULT_RANK_TOL).unwrap();

    let a = witness_matrix("A").unwrap().entries;
    c.check(rank("A") == 3, format!("A: rank {}", rank("A")));
    let lower = nonneg_rank_exact_small(&a, 3).unwrap();
    let upper = nonneg_rank_exact_small(&a, 4).unwrap();
    c.check(lower.bound == Bound::AtLeast(4), format!("A: k=3 gives {}", lower.bound));
    c.check(upper.bound == Bound::AtMost(4), format!("A: k=4 gives {}", upper.bound));

    let b = witness_matrix("B").unwrap().entries;
    let (rb, _) = real_sqrt_rank(&b, DEFAULT_MAX_ENTRIES).unwrap();
    c.check(rb == 3, format!("B: real sqrt rank {rb}"));
    let sb = b_complex_sqrt_witness();
    let res = sqrt_witness_residual(&b, &sb).unwrap();
    c.check(res < 1e-12, format!("B: witness residual {res:e}"));
    c.check(matrix_rank(&sb, DEFAULT_RANK_TOL).unwrap() <= 2, "B: witness rank above 2");

    let (rc, _) = real_sqrt_rank(&witness_matrix("C").unwrap().entries, DEFAULT_MAX_ENTRIES).unwrap();
    c.check(rc == 2, format!("C: real sqrt rank {rc}"));

    c.check(rank("D") == 3, format!("D: rank {}", rank("D")));

    let e = witness_matrix("E").unwrap().entries;
    let (l, r) = e_complex_sqrt_factors();
    c.check(l.shape() == [4, 2] && r.shape() == [2, 4], "E: factor shapes");
    let res = sqrt_witness_residual(&e, &matmul(&l, &r).unwrap()).unwrap();
    c.check(res < 1e-12, format!("E: witness residual {res:e}"));

    let f = witness_matrix("F").unwrap().entries;
    c.check(rank("F") == 3, format!("F: rank {}", rank("F")));
    let w = f_nonneg_factor();
    let wt = DenseTensor::new(vec![3, 7], (0..21).map(|k| w.data()[(k % 7) * 3 + k / 7]).collect()).unwrap();
    c.check(w.data().iter().all(|z| z.im == 0.0 && (z.re == 0.0 || z.re == 1.0)), "F: factor not 0/1");
    let diff = max_diff(&matmul(&w, &wt).unwrap(), &f);
    c.check(diff == 0.0, format!("F: W W^T differs by {diff:e}"));
    c.finish(Some(60.0));
}

#[test]
fn criterion_02_prime_and_euclidean_families() {
    let mut c = Criterion::new(2);
    let t = Instant::now();
    let (r4, cert) = real_sqrt_rank(&prime_matrix(4).unwrap(), DEFAULT_MAX_ENTRIES).unwrap();
    c.check(r4 == 4, format!("prime(4): real sqrt rank {r4} ({})", cert.bound));
    c.check(t.elapsed().as_secs_f64() < 300.0, "prime(4) enumeration over 5 min");

    let p6 = prime_matrix(6).unwrap();
    let d = max_diff(&complex_sqrt_prime_witness(6).unwrap().abs_sqr(), &p6);
    c.check(d < 1e-12, format!("prime(6) witness off by {d:e}"));

    for n in [2, 4, 8] {
        let h = euclidean_sqrt_witness(n).unwrap();
        c.check(h.abs_sqr() == euclidean_matrix(n).unwrap(), format!("euclidean({n}) witness not exact"));
    }

    let mps = prime_family_mps(3).unwrap();
    c.check(mps.bond_dims().iter().all(|&b| b == 2), format!("prime family bonds {:?}", mps.bond_dims()));
    let bip = central_bipartition(&Model::Mps(mps).to_dense().unwrap()).unwrap();
    c.check(bip.shape() == [8, 8], "prime family bipartition shape");
    let err = real_rows(&bip)
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, v)| (v - (i + j + 2) as f64).abs()))
        .fold(0.0, f64::max);
    c.check(err < 1e-12, format!("prime family off by {err:e}"));

    let bm = euclidean_family_bm(3).unwrap();
    c.check(bm.amplitude().bond_dims().iter().all(|&b| b == 2), "euclidean family bonds");
    let bip = central_bipartition(&Model::Born(bm).to_dense().unwrap()).unwrap();
    let err = real_rows(&bip)
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, v)| (v - (j as f64 - i as f64).powi(2)).abs()))
        .fold(0.0, f64::max);
    c.check(err < 1e-12, format!("euclidean family off by {err:e}"));
    c.finish(None);
}

#[test]
fn criterion_03_hmm_bridge() {
    let mut c = Criterion::new(3);
    for s in 0..20 {
        let h = Hmm::random(6, 3, 2, s);
        let mps = hmm_to_mps(&h).unwrap();
        let model = Model::Mps(mps.clone());
        let dense = model.to_dense().unwrap().real_parts();
        let exact = hmm_probabilities(&h);
        c.check(dense.len() == 64, "expected 64 configurations");
        let err = dense.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        c.check(err < 1e-12, format!("seed {s}: probabilities off by {err:e}"));
        let z = model.normalization().unwrap();
        c.check((z - 1.0).abs() < 1e-12, format!("seed {s}: Z = {z}"));
    }
    for s in 0..5 {
        let h = Hmm::random(6, 2, 2, 100 + s);
        let back = mps_to_hmm(&hmm_to_mps(&h).unwrap(), None, 20, s).unwrap();
        let d = tv(&hmm_probabilities(&h), &hmm_probabilities(&back.hmm));
        c.check(d < 1e-6, format!("round trip seed {s}: TV {d:e}"));
    }
    c.finish(None);
}

#[test]
fn criterion_04_circuit_bridge() {
    let mut c = Criterion::new(4);
    for s in 0..20 {
        let circ = random_circuit(4, 2, 2, s).unwrap();
        let bm = circuit_to_born(&circ).unwrap();
        let max_bond = bm.amplitude().bond_dims().into_iter().max().unwrap();
        c.check(max_bond <= 8, format!("seed {s}: bond {max_bond}"));
        let model = Model::Born(bm);
        let oracle = simulate_dense(&circ, DEFAULT_DENSE_CAP).unwrap().probabilities();
        let dense = model.to_dense().unwrap();
        let err = max_diff(&dense, &oracle);
        c.check(err < 1e-10, format!("seed {s}: probabilities off by {err:e}"));
        let z = model.normalization().unwrap();
        c.check((z - 1.0).abs() < 1e-9, format!("seed {s}: sum {z}"));

        // system, ancilla, system, ancilla
        let circ = random_circuit_with_dims(vec![2, 2, 2, 2], 2, 1000 + s).unwrap();
        let lps = circuit_with_ancillas_to_lps(&circ).unwrap();
        c.check(lps.rank() <= 8, format!("seed {s}: puri-rank {}", lps.rank()));
        let full = simulate_dense(&circ, DEFAULT_DENSE_CAP).unwrap().probabilities().real_parts();
        let mut marg = vec![0.0; 4];
        for (idx, p) in full.iter().enumerate() {
            let x = config_from_index(idx, 4, 2).0;
            marg[x[0] * 2 + x[2]] += p;
        }
        let got = Model::Lps(lps).to_dense().unwrap().real_parts();
        let err = got.iter().zip(&marg).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        c.check(err < 1e-10, format!("seed {s}: marginals off by {err:e}"));
    }
    c.finish(None);
}

#[test]
fn criterion_05_gradients() {
    let mut c = Criterion::new(5);
    for (k, kind) in ModelKind::ALL.into_iter().enumerate() {
        let model = kind.random_model(5, 2, 3, 2, 50 + k as u64);
        let n_params = ModelKind::n_real_params(&model);
        let batch: Vec<_> = model.sample_many(20, k as u64).unwrap();
        let e_nll = finite_difference_check(&model, FdObjective::Nll(&batch), 10.0, 200, 1).unwrap();
        let e_z = finite_difference_check(&model, FdObjective::Normalization, 10.0, 200, 2).unwrap();
        say!("  {kind}: {} of {n_params} parameters, nll {e_nll:.2e}, Z {e_z:.2e}", n_params.min(200));
        c.check(e_nll < 1e-5, format!("{kind}: NLL gradient error {e_nll:e}"));
        c.check(e_z < 1e-5, format!("{kind}: Z gradient error {e_z:e}"));
    }
    c.finish(None);
}

#[test]
fn criterion_06_normalization_and_evaluation() {
    let mut c = Criterion::new(6);
    let mut s = 0;
    for n in [2, 3, 6, 10] {
        for r in 1..=4 {
            for kind in ModelKind::ALL {
                let (name, m) = (kind.name(), kind.random_model(n, 2, r, 2, s));
                s += 1;
                let dense = m.to_dense().unwrap();
                let sum = dense.sum().re;
                let z = m.normalization().unwrap();
                let rel = (z - sum).abs() / sum.abs();
                c.check(rel < 1e-9, format!("{name} N={n} r={r}: Z rel error {rel:e}"));
                let mut err: f64 = 0.0;
                for (i, v) in dense.data().iter().enumerate() {
                    err = err.max((m.evaluate(&config_from_index(i, n, 2).0).unwrap() - v).norm());
                }
                c.check(err < 1e-10, format!("{name} N={n} r={r}: evaluate off by {err:e}"));
            }
        }
    }
    c.finish(None);
}

#[test]
fn criterion_07_conversions() {
    let mut c = Criterion::new(7);
    for r in [2, 3] {
        for s in 0..3 {
            let seed = 10 * r as u64 + s;
            let mps = MpsModel::random(FieldKind::NonNeg, 4, 2, r, seed);
            let lps = mps_nonneg_to_lps_real(&mps).unwrap();
            let err = max_diff(&Model::Mps(mps).to_dense().unwrap(), &Model::Lps(lps.clone()).to_dense().unwrap());
            c.check(err < 1e-10 && lps.rank() == r, format!("nonneg MPS -> LPS r={r}: rank {}, err {err:e}", lps.rank()));

            let lps = LpsModel::random(FieldKind::Real, 4, 2, r, 2, seed);
            let mps = lps_to_mps_real(&lps).unwrap();
            let err = max_diff(&Model::Lps(lps).to_dense().unwrap(), &Model::Mps(mps.clone()).to_dense().unwrap());
            c.check(err < 1e-10 && mps.rank() == r * r, format!("LPS -> MPS r={r}: rank {}, err {err:e}", mps.rank()));

            let lps = LpsModel::random(FieldKind::Complex, 4, 2, r, 2, seed);
            let real = lps_complex_to_real(&lps).unwrap();
            let err = max_diff(&Model::Lps(lps).to_dense().unwrap(), &Model::Lps(real.clone()).to_dense().unwrap());
            c.check(
                err < 1e-10 && real.rank() == 2 * r && real.field() == FieldKind::Real,
                format!("complex LPS -> real LPS r={r}: rank {}, err {err:e}", real.rank()),
            );
        }
    }
    c.finish(None);
}

#[test]
fn criterion_08_random_matrix_fits() {
    let mut c = Criterion::new(8);
    let config = TrainConfig { optimizer: Optimizer::Lbfgs, restarts: 20, max_iters: 1000, ..TrainConfig::default() };
    let kinds = [ModelKind::LpsComplex, ModelKind::MpsNonneg, ModelKind::BornComplex, ModelKind::BornReal];
    let mut kl = vec![Vec::new(); kinds.len()];
    for inst in 0..20u64 {
        let mut rng = seed::rng(seed::derive(8, inst));
        let raw: Vec<f64> = (0..400).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
        let total: f64 = raw.iter().sum();
        let p = DenseTensor::from_real(vec![20, 20], &raw.iter().map(|v| v / total).collect::<Vec<_>>()).unwrap();
        for (k, kind) in kinds.iter().enumerate() {
            let cfg = TrainConfig { seed: seed::derive(inst, k as u64), ..config.clone() };
            kl[k].push(fit_dense(&p, *kind, 5, 2, &cfg).unwrap().best_train);
        }
    }
    let m: Vec<f64> = kl.iter().map(|v| mean(v)).collect();
    for (kind, v) in kinds.iter().zip(&m) {
        say!("  {kind}: mean KL {v:.5}");
    }
    c.check(m[0] <= m[1], format!("LPS_C {:.5} > MPS_nonneg {:.5}", m[0], m[1]));
    c.check(m[2] <= m[3], format!("BM_C {:.5} > BM_R {:.5}", m[2], m[3]));
    c.finish(Some(600.0));
}

#[test]
fn criterion_09_hmm_data() {
    let mut c = Criterion::new(9);
    let (mut bw, mut nonneg, mut lps) = (Vec::new(), Vec::new(), Vec::new());
    for s in 0..5u64 {
        let truth = Hmm::random(8, 4, 2, 900 + s);
        let data = Dataset::new(8, 2, truth.sample_many(2000, s)).unwrap();
        bw.push(data_nll_bw(&data, s));
        let config = TrainConfig { learning_rate: 0.05, batch_size: 20, epochs: 60, seed: s, ..TrainConfig::default() };
        let init = ModelKind::MpsNonneg.random_model(8, 2, 4, 1, s);
        nonneg.push(sgd_train(&init, &data, None, &config).unwrap().best_train);
        let init = ModelKind::LpsComplex.random_model(8, 2, 4, 2, s);
        lps.push(sgd_train(&init, &data, None, &config).unwrap().best_train);
        say!("  seed {s}: baum-welch {:.4}, nonneg {:.4}, lps-complex {:.4}", bw[s as usize], nonneg[s as usize], lps[s as usize]);
    }
    let (mb, mn, ml) = (mean(&bw), mean(&nonneg), mean(&lps));
    let gap = (mb - mn).abs() / mb.min(mn);
    c.check(gap < 0.02, format!("Baum-Welch {mb:.4} vs nonneg MPS {mn:.4}: gap {:.2}%", 100.0 * gap));
    c.check(ml <= mn + 0.05, format!("LPS_C {ml:.4} > nonneg MPS {mn:.4} + 0.05"));
    c.finish(Some(600.0));
}

fn data_nll_bw(data: &Dataset, s: u64) -> f64 {
    let fit = baum_welch(data, 4, 200, s).unwrap();
    fit.hmm.nll(data).unwrap()
}

#[test]
fn criterion_10_sampling() {
    let mut c = Criterion::new(10);
    let model = Model::Born(BornModel::random(FieldKind::Complex, 5, 2, 3, 10));
    let p = model.to_dense().unwrap().real_parts();
    let z: f64 = p.iter().sum();
    let p: Vec<f64> = p.iter().map(|v| v / z).collect();
    let n = 100_000;
    let mut counts = vec![0.0; p.len()];
    for x in model.sample_many(n, 7).unwrap() {
        counts[tnprob::models::config_to_index(&x.0, 2)] += 1.0 / n as f64;
    }
    let d = tv(&counts, &p);
    say!("  TV distance {d:.4}");
    c.check(d < 0.02, format!("TV {d}"));
    c.finish(None);
}
