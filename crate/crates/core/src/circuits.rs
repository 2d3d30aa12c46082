//! 2-local quantum circuits on a line and their compilation to Born machines
//! and locally purified states.
//!
//! A gate on qudits `(i, i+1)` with dimensions `(a, b)` is an `ab x ab`
//! unitary whose row and column index is `x_i * b + x_{i+1}`. Circuits act
//! on `|0...0>`.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::svd_truncated;
use crate::models::{BornModel, FieldKind, LpsModel, MpsModel};
use crate::{seed, DenseTensor, Error, Result, C64};

/// Relative singular-value cutoff used when splitting gates.
const SVD_CUTOFF: f64 = 1e-14;
const UNITARY_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct Gate {
    pub site: usize,
    pub matrix: DenseTensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalCircuit {
    dims: Vec<usize>,
    layers: Vec<Vec<Gate>>,
}

/// Dense state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitState {
    pub amplitudes: DenseTensor,
}

impl CircuitState {
    pub fn probabilities(&self) -> DenseTensor {
        self.amplitudes.abs_sqr()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.data().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

fn to_matrix(t: &DenseTensor) -> DMatrix<C64> {
    let n = t.shape()[0];
    DMatrix::from_row_slice(n, n, t.data())
}

fn unitarity_error(u: &DMatrix<C64>) -> f64 {
    let p = u.adjoint() * u;
    let mut worst = 0.0f64;
    for i in 0..p.nrows() {
        for j in 0..p.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((p[(i, j)] - C64::new(target, 0.0)).norm());
        }
    }
    worst
}

impl LocalCircuit {
    /// Circuit on `n` qudits of dimension `d`.
    pub fn new(n: usize, d: usize, layers: Vec<Vec<Gate>>) -> Result<Self> {
        Self::with_dims(vec![d; n], layers)
    }

    /// Circuit whose qudit `i` has dimension `dims[i]`.
    pub fn with_dims(dims: Vec<usize>, layers: Vec<Vec<Gate>>) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidArgument(
                "a circuit needs at least 2 qudits of positive dimension".into(),
            ));
        }
        for (l, layer) in layers.iter().enumerate() {
            let mut used = vec![false; dims.len()];
            for g in layer {
                if g.site + 1 >= dims.len() {
                    return Err(Error::InvalidArgument(format!("gate at site {} is out of range", g.site)));
                }
                if used[g.site] || used[g.site + 1] {
                    return Err(Error::InvalidArgument(format!("gates overlap in layer {l}")));
                }
                used[g.site] = true;
                used[g.site + 1] = true;
                let dd = dims[g.site] * dims[g.site + 1];
                if g.matrix.shape() != [dd, dd] {
                    return Err(Error::Shape(format!(
                        "gate at site {} has shape {:?}, expected [{dd}, {dd}]",
                        g.site,
                        g.matrix.shape()
                    )));
                }
                let err = unitarity_error(&to_matrix(&g.matrix));
                if err > UNITARY_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "gate at site {} in layer {l} is not unitary (error {err:e})",
                        g.site
                    )));
                }
            }
        }
        Ok(LocalCircuit { dims, layers })
    }

    pub fn n_qudits(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Vec<Gate>] {
        &self.layers
    }

    /// Circuit made of the first `depth` layers.
    pub fn truncated(&self, depth: usize) -> LocalCircuit {
        LocalCircuit {
            dims: self.dims.clone(),
            layers: self.layers[..depth.min(self.layers.len())].to_vec(),
        }
    }
}

/// Haar-random `n x n` unitary: QR of a complex Gaussian matrix with the
/// phases of `R`'s diagonal moved into `Q`.
pub fn haar_unitary<R: rand::Rng>(n: usize, rng: &mut R) -> DenseTensor {
    let g = DMatrix::from_fn(n, n, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re, im)
    });
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    let data = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| q[(i, j)]).collect();
    DenseTensor::new(vec![n, n], data).expect("finite unitary")
}

/// Brick-wall circuit of depth `depth` with Haar-random gates: even layers
/// act on pairs `(0,1), (2,3), ...`, odd layers on `(1,2), (3,4), ...`.
pub fn random_circuit(n: usize, d: usize, depth: usize, seed: u64) -> Result<LocalCircuit> {
    random_circuit_with_dims(vec![d; n], depth, seed)
}

pub fn random_circuit_with_dims(dims: Vec<usize>, depth: usize, seed: u64) -> Result<LocalCircuit> {
    let mut rng = seed::rng(seed);
    let n = dims.len();
    let layers = (0..depth)
        .map(|l| {
            (l % 2..n.saturating_sub(1))
                .step_by(2)
                .map(|site| Gate {
                    site,
                    matrix: haar_unitary(dims[site] * dims[site + 1], &mut rng),
                })
                .collect()
        })
        .collect();
    LocalCircuit::with_dims(dims, layers)
}

/// Exact state vector from `|0...0>`.
pub fn simulate_dense(c: &LocalCircuit, cap: usize) -> Result<CircuitState> {
    let dims = c.dims();
    let total = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d).filter(|&v| v <= cap));
    let Some(total) = total else {
        return Err(Error::DenseCap {
            entries: dims.iter().map(|&d| d as u128).product(),
            cap,
        });
    };
    let mut psi = vec![C64::new(0.0, 0.0); total];
    psi[0] = C64::new(1.0, 0.0);
    for layer in c.layers() {
        for g in layer {
            let (da, db) = (dims[g.site], dims[g.site + 1]);
            let inner: usize = dims[g.site + 2..].iter().product();
            let outer: usize = dims[..g.site].iter().product();
            let u = g.matrix.data();
            let dd = da * db;
            let mut block = vec![C64::new(0.0, 0.0); dd];
            for o in 0..outer {
                for t in 0..inner {
                    let at = |ab: usize| (o * dd + ab) * inner + t;
                    for (ab, v) in block.iter_mut().enumerate() {
                        *v = psi[at(ab)];
                    }
                    for row in 0..dd {
                        psi[at(row)] = (0..dd).map(|col| u[row * dd + col] * block[col]).sum();
                    }
                }
            }
        }
    }
    Ok(CircuitState {
        amplitudes: DenseTensor::new(dims.to_vec(), psi)?,
    })
}

/// MPS with per-site dimensions; cores `[d_i, r_left, r_right]`, row-major.
struct Chain {
    dims: Vec<usize>,
    bonds: Vec<usize>,
    cores: Vec<Vec<C64>>,
}

impl Chain {
    fn product_zero(dims: &[usize]) -> Self {
        let cores = dims
            .iter()
            .map(|&d| {
                let mut c = vec![C64::new(0.0, 0.0); d];
                c[0] = C64::new(1.0, 0.0);
                c
            })
            .collect();
        Chain {
            dims: dims.to_vec(),
            bonds: vec![1; dims.len() + 1],
            cores,
        }
    }

    fn apply(&mut self, g: &Gate) {
        let i = g.site;
        let (da, db) = (self.dims[i], self.dims[i + 1]);
        let (l, m, r) = (self.bonds[i], self.bonds[i + 1], self.bonds[i + 2]);
        let (a, b) = (&self.cores[i], &self.cores[i + 1]);
        // theta[(x, y), (lft, rgt)]
        let mut theta = vec![C64::new(0.0, 0.0); da * db * l * r];
        for x in 0..da {
            for lft in 0..l {
                for k in 0..m {
                    let av = a[(x * l + lft) * m + k];
                    if av == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for y in 0..db {
                        for rgt in 0..r {
                            theta[((x * db + y) * l + lft) * r + rgt] += av * b[(y * m + k) * r + rgt];
                        }
                    }
                }
            }
        }
        let u = g.matrix.data();
        let dd = da * db;
        // M[(x', lft), (y', rgt)] = sum_{xy} U[x'y', xy] theta[xy, lft, rgt]
        let mut mat = DMatrix::from_element(da * l, db * r, C64::new(0.0, 0.0));
        for row in 0..dd {
            let (xp, yp) = (row / db, row % db);
            for col in 0..dd {
                let w = u[row * dd + col];
                if w == C64::new(0.0, 0.0) {
                    continue;
                }
                for lft in 0..l {
                    for rgt in 0..r {
                        mat[(xp * l + lft, yp * r + rgt)] += w * theta[(col * l + lft) * r + rgt];
                    }
                }
            }
        }
        let (uu, s, vt) = svd_truncated(mat, SVD_CUTOFF);
        let k = s.len();
        let mut na = vec![C64::new(0.0, 0.0); da * l * k];
        for xp in 0..da {
            for lft in 0..l {
                for q in 0..k {
                    na[(xp * l + lft) * k + q] = uu[(xp * l + lft, q)];
                }
            }
        }
        let mut nb = vec![C64::new(0.0, 0.0); db * k * r];
        for yp in 0..db {
            for q in 0..k {
                for rgt in 0..r {
                    nb[(yp * k + q) * r + rgt] = vt[(q, yp * r + rgt)] * s[q];
                }
            }
        }
        self.cores[i] = na;
        self.cores[i + 1] = nb;
        self.bonds[i + 1] = k;
    }

    fn compile(c: &LocalCircuit) -> Self {
        let mut chain = Chain::product_zero(c.dims());
        for layer in c.layers() {
            for g in layer {
                chain.apply(g);
            }
        }
        chain
    }

    fn tensor(&self, i: usize) -> DenseTensor {
        DenseTensor::new(vec![self.dims[i], self.bonds[i], self.bonds[i + 1]], self.cores[i].clone())
            .expect("finite core")
    }
}

/// Complex MPS holding the circuit's output amplitudes, built by applying
/// each gate to the product state and splitting it back with an SVD.
pub fn circuit_to_mps(c: &LocalCircuit) -> Result<MpsModel> {
    let d = c.dims()[0];
    if c.dims().iter().any(|&v| v != d) {
        return Err(Error::InvalidArgument(
            "an MPS needs equal qudit dimensions; use circuit_with_ancillas_to_lps".into(),
        ));
    }
    let chain = Chain::compile(c);
    MpsModel::new(FieldKind::Complex, (0..c.n_qudits()).map(|i| chain.tensor(i)).collect())
}

/// Born machine of the circuit's measurement distribution.
pub fn circuit_to_born(c: &LocalCircuit) -> Result<BornModel> {
    BornModel::new(circuit_to_mps(c)?)
}

/// Circuit on `2N` qudits alternating system (dimension `d`) and ancilla
/// (dimension `mu`); the ancillas are traced out. Each system/ancilla pair
/// becomes one LPS site with the ancilla as purification index.
pub fn circuit_with_ancillas_to_lps(c: &LocalCircuit) -> Result<LpsModel> {
    let dims = c.dims();
    if !dims.len().is_multiple_of(2) {
        return Err(Error::InvalidArgument("expected an even number of qudits".into()));
    }
    let (d, mu) = (dims[0], dims[1]);
    if dims.chunks(2).any(|p| p[0] != d || p[1] != mu) {
        return Err(Error::InvalidArgument(format!(
            "qudit dimensions must alternate {d}, {mu}"
        )));
    }
    let chain = Chain::compile(c);
    let n = dims.len() / 2;
    let cores = (0..n)
        .map(|k| {
            let (s, a) = (2 * k, 2 * k + 1);
            let (l, m, r) = (chain.bonds[s], chain.bonds[a], chain.bonds[a + 1]);
            let mut data = vec![C64::new(0.0, 0.0); d * mu * l * r];
            for x in 0..d {
                for y in 0..mu {
                    for lft in 0..l {
                        for q in 0..m {
                            let av = chain.cores[s][(x * l + lft) * m + q];
                            for rgt in 0..r {
                                data[((x * mu + y) * l + lft) * r + rgt] += av * chain.cores[a][(y * m + q) * r + rgt];
                            }
                        }
                    }
                }
            }
            DenseTensor::new(vec![d, mu, l, r], data)
        })
        .collect::<Result<Vec<_>>>()?;
    LpsModel::new(FieldKind::Complex, cores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Model;
    use crate::DEFAULT_DENSE_CAP;

    fn identity(n: usize) -> DenseTensor {
        let data = (0..n * n)
            .map(|k| C64::new(if k / n == k % n { 1.0 } else { 0.0 }, 0.0))
            .collect();
        DenseTensor::new(vec![n, n], data).unwrap()
    }

    #[test]
    fn haar_gates_are_unitary() {
        let c = random_circuit(6, 3, 4, 1).unwrap();
        for g in c.layers().iter().flatten() {
            assert!(unitarity_error(&to_matrix(&g.matrix)) < 1e-12);
        }
        assert_eq!(c, random_circuit(6, 3, 4, 1).unwrap());
    }

    #[test]
    fn empty_circuit() {
        let c = random_circuit(3, 2, 0, 0).unwrap();
        let s = simulate_dense(&c, DEFAULT_DENSE_CAP).unwrap();
        assert_eq!(s.amplitudes.data()[0], C64::new(1.0, 0.0));
        let b = Model::Born(circuit_to_born(&c).unwrap());
        assert!((b.log_prob(&[0, 0, 0]).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn identity_gates() {
        let layer = vec![Gate { site: 0, matrix: identity(4) }];
        let c = LocalCircuit::new(3, 2, vec![layer.clone(), layer]).unwrap();
        let s = simulate_dense(&c, DEFAULT_DENSE_CAP).unwrap();
        assert_eq!(s.amplitudes.data()[0], C64::new(1.0, 0.0));
        assert!(s.amplitudes.data()[1..].iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn one_gate_gives_its_first_column() {
        let mut rng = seed::rng(3);
        let u = haar_unitary(4, &mut rng);
        let c = LocalCircuit::new(2, 2, vec![vec![Gate { site: 0, matrix: u.clone() }]]).unwrap();
        let s = simulate_dense(&c, DEFAULT_DENSE_CAP).unwrap();
        let m = Model::Mps(circuit_to_mps(&c).unwrap());
        assert!(m.rank() <= 4);
        for row in 0..4 {
            let col0 = u.data()[row * 4];
            assert!((s.amplitudes.data()[row] - col0).norm() < 1e-15);
            let x = [row / 2, row % 2];
            assert!((m.evaluate(&x).unwrap() - col0).norm() < 1e-12);
        }
    }

    #[test]
    fn compiled_amplitudes_match_the_oracle() {
        for n in [3, 5, 8] {
            for depth in 1..=3 {
                let c = random_circuit(n, 2, depth, (n * 10 + depth) as u64).unwrap();
                let s = simulate_dense(&c, DEFAULT_DENSE_CAP).unwrap();
                assert!((s.norm() - 1.0).abs() < 1e-12);
                let m = Model::Mps(circuit_to_mps(&c).unwrap());
                let dense = m.to_dense().unwrap();
                assert!(DenseTensor::max_abs_diff(&dense, &s.amplitudes).unwrap() < 1e-10);
                for l in 1..=depth {
                    let partial = Model::Mps(circuit_to_mps(&c.truncated(l)).unwrap());
                    assert!(partial.rank() <= 2usize.pow(l as u32 + 1));
                }
                let b = Model::Born(circuit_to_born(&c).unwrap());
                assert!((b.normalization().unwrap() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn product_gates_keep_bond_one() {
        let mut rng = seed::rng(5);
        let a = to_matrix(&haar_unitary(2, &mut rng));
        let b = to_matrix(&haar_unitary(2, &mut rng));
        let k = a.kronecker(&b);
        let data = (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).map(|(i, j)| k[(i, j)]).collect();
        let g = DenseTensor::new(vec![4, 4], data).unwrap();
        let c = LocalCircuit::new(
            4,
            2,
            vec![
                vec![Gate { site: 0, matrix: g.clone() }, Gate { site: 2, matrix: g.clone() }],
                vec![Gate { site: 1, matrix: g }],
            ],
        )
        .unwrap();
        assert_eq!(circuit_to_mps(&c).unwrap().rank(), 1);
    }

    #[test]
    fn ancillas_are_traced_out() {
        for s in 0..5 {
            let c = random_circuit_with_dims(vec![2, 2, 2, 2], 2, s).unwrap();
            let l = Model::Lps(circuit_with_ancillas_to_lps(&c).unwrap());
            assert!(l.rank() <= 8);
            let p = simulate_dense(&c, DEFAULT_DENSE_CAP).unwrap().probabilities();
            for x0 in 0..2 {
                for x1 in 0..2 {
                    let mut m = 0.0;
                    for y0 in 0..2 {
                        for y1 in 0..2 {
                            m += p.get(&[x0, y0, x1, y1]).unwrap().re;
                        }
                    }
                    assert!((l.evaluate(&[x0, x1]).unwrap().re - m).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn trivial_ancilla_matches_born() {
        let c = random_circuit_with_dims(vec![3, 1, 3, 1, 3, 1], 3, 2).unwrap();
        let l = Model::Lps(circuit_with_ancillas_to_lps(&c).unwrap());
        assert_eq!(l.rank(), 1);
        let p = simulate_dense(&c, DEFAULT_DENSE_CAP).unwrap().probabilities();
        let flat = l.to_dense().unwrap();
        for (a, b) in flat.data().iter().zip(p.data()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn invalid_circuits() {
        let bad = DenseTensor::from_real(vec![4, 4], &[1.0; 16]).unwrap();
        assert!(LocalCircuit::new(3, 2, vec![vec![Gate { site: 0, matrix: bad }]]).is_err());
        let layer = vec![Gate { site: 0, matrix: identity(4) }, Gate { site: 1, matrix: identity(4) }];
        assert!(LocalCircuit::new(3, 2, vec![layer]).is_err());
        assert!(LocalCircuit::new(3, 2, vec![vec![Gate { site: 2, matrix: identity(4) }]]).is_err());
        let c = random_circuit_with_dims(vec![2, 3, 2], 1, 0).unwrap();
        assert!(circuit_with_ancillas_to_lps(&c).is_err());
        assert!(circuit_to_mps(&c).is_err());
        assert!(matches!(simulate_dense(&random_circuit(10, 2, 1, 0).unwrap(), 100), Err(Error::DenseCap { .. })));
    }
}
