//! Tensor-network representations of non-negative tensors.
//!
//! Three model types share the same chain layout:
//!
//! ```text
//!   MPS:  T[x] = A1[x1] A2[x2] ... AN[xN]
//!   Born: T[x] = |A1[x1] A2[x2] ... AN[xN]|^2
//!   LPS:  T[x] = sum_{b1..bN} |A1[x1,b1] A2[x2,b2] ... AN[xN,bN]|^2
//! ```
//!
//! Cores are stored with explicit boundary bonds of dimension 1, so an MPS
//! core always has shape `[d, r_left, r_right]` and an LPS core
//! `[d, mu, r_left, r_right]`, with `r_left = 1` on the first site and
//! `r_right = 1` on the last. The serialized format drops those unit bonds.

mod convert;
pub(crate) mod dense;
pub(crate) mod engine;
mod sample;

use std::fmt;
use std::ops::Deref;

use rand::Rng;
use rand_distr::{Distribution, Normal};

pub use convert::{lps_complex_to_real, lps_to_mps_real, mps_nonneg_to_lps_real};
pub use engine::{LogValue, SiteSel};

use crate::{seed, DenseTensor, Error, Result, C64, DEFAULT_DENSE_CAP};

/// Field the core entries live in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FieldKind {
    NonNeg,
    Real,
    Complex,
}

impl FieldKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldKind::NonNeg => "nonneg",
            FieldKind::Real => "real",
            FieldKind::Complex => "complex",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "nonneg" => Ok(FieldKind::NonNeg),
            "real" => Ok(FieldKind::Real),
            "complex" => Ok(FieldKind::Complex),
            other => Err(Error::UnknownName(other.to_string())),
        }
    }
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An assignment of all `N` variables, 0-based.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration(pub Vec<usize>);

impl Deref for Configuration {
    type Target = [usize];
    fn deref(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for Configuration {
    fn from(v: Vec<usize>) -> Self {
        Configuration(v)
    }
}

/// Decode a row-major flat index into a configuration.
pub fn config_from_index(mut index: usize, n_sites: usize, phys_dim: usize) -> Configuration {
    let mut x = vec![0; n_sites];
    for slot in x.iter_mut().rev() {
        *slot = index % phys_dim;
        index /= phys_dim;
    }
    Configuration(x)
}

pub fn config_to_index(x: &[usize], phys_dim: usize) -> usize {
    x.iter().fold(0, |acc, &v| acc * phys_dim + v)
}

pub(crate) fn check_configuration(x: &[usize], n_sites: usize, phys_dim: usize) -> Result<()> {
    if x.len() != n_sites {
        return Err(Error::InvalidConfiguration(format!(
            "expected {n_sites} values, got {}",
            x.len()
        )));
    }
    if let Some((i, v)) = x.iter().enumerate().find(|(_, &v)| v >= phys_dim) {
        return Err(Error::InvalidConfiguration(format!(
            "value {v} at site {i} is out of range for dimension {phys_dim}"
        )));
    }
    Ok(())
}

fn gaussian_entry<R: Rng>(rng: &mut R, field: FieldKind, std: f64) -> C64 {
    match field {
        FieldKind::NonNeg => {
            let b: f64 = Normal::new(0.0, std).unwrap().sample(rng);
            C64::new(b * b, 0.0)
        }
        FieldKind::Real => C64::new(Normal::new(0.0, std).unwrap().sample(rng), 0.0),
        FieldKind::Complex => {
            let n = Normal::new(0.0, std / 2f64.sqrt()).unwrap();
            C64::new(n.sample(rng), n.sample(rng))
        }
    }
}

fn uniform_bonds(n_sites: usize, rank: usize) -> Vec<usize> {
    vec![rank; n_sites.saturating_sub(1)]
}

fn check_field(field: FieldKind, cores: &[DenseTensor]) -> Result<()> {
    for core in cores {
        for z in core.data() {
            match field {
                FieldKind::NonNeg if z.re < 0.0 || z.im != 0.0 => {
                    return Err(Error::NegativeEntry { value: z.re });
                }
                FieldKind::Real if z.im != 0.0 => {
                    return Err(Error::InvalidArgument(format!(
                        "complex entry {z} in a real model"
                    )));
                }
                _ => {}
            }
        }
    }
    Ok(())
}

/// Matrix product state (tensor train).
#[derive(Clone, Debug, PartialEq)]
pub struct MpsModel {
    field: FieldKind,
    phys_dim: usize,
    cores: Vec<DenseTensor>,
}

impl MpsModel {
    /// Build from cores of shape `[d, r_left, r_right]`.
    pub fn new(field: FieldKind, cores: Vec<DenseTensor>) -> Result<Self> {
        if cores.len() < 2 {
            return Err(Error::InvalidArgument("an MPS needs at least 2 sites".into()));
        }
        let d = cores[0].shape().first().copied().unwrap_or(0);
        if d < 2 {
            return Err(Error::InvalidArgument("physical dimension must be >= 2".into()));
        }
        let mut left = 1;
        for (i, core) in cores.iter().enumerate() {
            let s = core.shape();
            if s.len() != 3 || s[0] != d || s[1] != left {
                return Err(Error::Shape(format!(
                    "core {i} has shape {s:?}, expected [{d}, {left}, _]"
                )));
            }
            left = s[2];
        }
        if left != 1 {
            return Err(Error::Shape("last core must have right bond 1".into()));
        }
        check_field(field, &cores)?;
        Ok(MpsModel {
            field,
            phys_dim: d,
            cores,
        })
    }

    /// Random MPS with uniform bond dimension `rank`.
    ///
    /// Entries are Gaussian with standard deviation `1/sqrt(rank)`; for
    /// `NonNeg` the Gaussian draws are squared.
    pub fn random(field: FieldKind, n_sites: usize, phys_dim: usize, rank: usize, seed: u64) -> Self {
        Self::random_with_bonds(field, phys_dim, &uniform_bonds(n_sites, rank), seed)
    }

    pub fn random_with_bonds(field: FieldKind, phys_dim: usize, bonds: &[usize], seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let n = bonds.len() + 1;
        let rmax = bonds.iter().copied().max().unwrap_or(1).max(1);
        let std = 1.0 / (rmax as f64).sqrt();
        let cores = (0..n)
            .map(|i| {
                let rl = if i == 0 { 1 } else { bonds[i - 1] };
                let rr = if i == n - 1 { 1 } else { bonds[i] };
                let data = (0..phys_dim * rl * rr)
                    .map(|_| gaussian_entry(&mut rng, field, std))
                    .collect();
                DenseTensor::new(vec![phys_dim, rl, rr], data).unwrap()
            })
            .collect();
        MpsModel::new(field, cores).expect("random MPS is well formed")
    }

    pub fn field(&self) -> FieldKind {
        self.field
    }

    pub fn n_sites(&self) -> usize {
        self.cores.len()
    }

    pub fn phys_dim(&self) -> usize {
        self.phys_dim
    }

    pub fn cores(&self) -> &[DenseTensor] {
        &self.cores
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.cores[..self.cores.len() - 1]
            .iter()
            .map(|c| c.shape()[2])
            .collect()
    }

    /// Reported TT-rank: the largest bond dimension.
    pub fn rank(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Value of the tensor at `x` (not normalized).
    pub fn evaluate(&self, x: &[usize]) -> Result<C64> {
        check_configuration(x, self.n_sites(), self.phys_dim)?;
        let mut v = vec![C64::new(1.0, 0.0)];
        for (core, &xi) in self.cores.iter().zip(x) {
            let (rl, rr) = (core.shape()[1], core.shape()[2]);
            let slice = &core.data()[xi * rl * rr..(xi + 1) * rl * rr];
            let mut next = vec![C64::new(0.0, 0.0); rr];
            for (a, &va) in v.iter().enumerate() {
                for (b, nb) in next.iter_mut().enumerate() {
                    *nb += va * slice[a * rr + b];
                }
            }
            v = next;
        }
        Ok(v[0])
    }

    /// Same tensor with all bonds enlarged to `new_rank` by zero padding.
    pub fn padded(&self, new_rank: usize) -> Result<Self> {
        let n = self.n_sites();
        let cores = self
            .cores
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let rl = if i == 0 { 1 } else { new_rank.max(c.shape()[1]) };
                let rr = if i == n - 1 { 1 } else { new_rank.max(c.shape()[2]) };
                pad_core(c, &[self.phys_dim, rl, rr])
            })
            .collect::<Result<Vec<_>>>()?;
        MpsModel::new(self.field, cores)
    }
}

/// Born machine: squared modulus of an MPS amplitude.
#[derive(Clone, Debug, PartialEq)]
pub struct BornModel {
    amplitude: MpsModel,
}

impl BornModel {
    pub fn new(amplitude: MpsModel) -> Result<Self> {
        if amplitude.field() == FieldKind::NonNeg {
            return Err(Error::InvalidArgument(
                "a Born machine amplitude must be real or complex".into(),
            ));
        }
        Ok(BornModel { amplitude })
    }

    pub fn random(field: FieldKind, n_sites: usize, phys_dim: usize, rank: usize, seed: u64) -> Self {
        BornModel::new(MpsModel::random(field, n_sites, phys_dim, rank, seed)).unwrap()
    }

    pub fn amplitude(&self) -> &MpsModel {
        &self.amplitude
    }

    pub fn field(&self) -> FieldKind {
        self.amplitude.field
    }

    /// Born-rank of this representation (largest bond dimension).
    pub fn rank(&self) -> usize {
        self.amplitude.rank()
    }

    /// View as a locally purified state with purification dimension 1.
    pub fn to_lps(&self) -> LpsModel {
        let cores = self
            .amplitude
            .cores
            .iter()
            .map(|c| {
                let s = c.shape();
                c.reshape(&[s[0], 1, s[1], s[2]]).unwrap()
            })
            .collect();
        LpsModel::new(self.field(), cores).unwrap()
    }
}

/// Locally purified state.
#[derive(Clone, Debug, PartialEq)]
pub struct LpsModel {
    field: FieldKind,
    phys_dim: usize,
    puri_dim: usize,
    cores: Vec<DenseTensor>,
}

impl LpsModel {
    /// Build from cores of shape `[d, mu, r_left, r_right]`.
    pub fn new(field: FieldKind, cores: Vec<DenseTensor>) -> Result<Self> {
        if field == FieldKind::NonNeg {
            return Err(Error::InvalidArgument("an LPS is real or complex".into()));
        }
        if cores.len() < 2 {
            return Err(Error::InvalidArgument("an LPS needs at least 2 sites".into()));
        }
        let d = cores[0].shape().first().copied().unwrap_or(0);
        let mu = cores[0].shape().get(1).copied().unwrap_or(0);
        if d < 2 || mu < 1 {
            return Err(Error::InvalidArgument("need d >= 2 and mu >= 1".into()));
        }
        let mut left = 1;
        for (i, core) in cores.iter().enumerate() {
            let s = core.shape();
            if s.len() != 4 || s[0] != d || s[1] != mu || s[2] != left {
                return Err(Error::Shape(format!(
                    "core {i} has shape {s:?}, expected [{d}, {mu}, {left}, _]"
                )));
            }
            left = s[3];
        }
        if left != 1 {
            return Err(Error::Shape("last core must have right bond 1".into()));
        }
        check_field(field, &cores)?;
        Ok(LpsModel {
            field,
            phys_dim: d,
            puri_dim: mu,
            cores,
        })
    }

    pub fn random(
        field: FieldKind,
        n_sites: usize,
        phys_dim: usize,
        rank: usize,
        puri_dim: usize,
        seed: u64,
    ) -> Self {
        let bonds = uniform_bonds(n_sites, rank);
        let mut rng = seed::rng(seed);
        let std = 1.0 / (rank.max(1) as f64).sqrt();
        let cores = (0..n_sites)
            .map(|i| {
                let rl = if i == 0 { 1 } else { bonds[i - 1] };
                let rr = if i == n_sites - 1 { 1 } else { bonds[i] };
                let data = (0..phys_dim * puri_dim * rl * rr)
                    .map(|_| gaussian_entry(&mut rng, field, std))
                    .collect();
                DenseTensor::new(vec![phys_dim, puri_dim, rl, rr], data).unwrap()
            })
            .collect();
        LpsModel::new(field, cores).expect("random LPS is well formed")
    }

    pub fn field(&self) -> FieldKind {
        self.field
    }

    pub fn n_sites(&self) -> usize {
        self.cores.len()
    }

    pub fn phys_dim(&self) -> usize {
        self.phys_dim
    }

    pub fn puri_dim(&self) -> usize {
        self.puri_dim
    }

    pub fn cores(&self) -> &[DenseTensor] {
        &self.cores
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.cores[..self.cores.len() - 1]
            .iter()
            .map(|c| c.shape()[3])
            .collect()
    }

    /// Reported puri-rank: the largest bond dimension.
    pub fn rank(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn padded(&self, new_rank: usize) -> Result<Self> {
        let n = self.n_sites();
        let cores = self
            .cores
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let rl = if i == 0 { 1 } else { new_rank.max(c.shape()[2]) };
                let rr = if i == n - 1 { 1 } else { new_rank.max(c.shape()[3]) };
                pad_core(c, &[self.phys_dim, self.puri_dim, rl, rr])
            })
            .collect::<Result<Vec<_>>>()?;
        LpsModel::new(self.field, cores)
    }
}

/// Zero-pad a core into a larger shape of the same order.
fn pad_core(core: &DenseTensor, shape: &[usize]) -> Result<DenseTensor> {
    let old = core.shape();
    if old.len() != shape.len() || old.iter().zip(shape).any(|(o, n)| o > n) {
        return Err(Error::Shape(format!("cannot pad {old:?} into {shape:?}")));
    }
    let mut out = DenseTensor::zeros(shape.to_vec()).into_data();
    let new_strides = crate::tensor::strides(shape);
    let mut idx = vec![0usize; old.len()];
    for &z in core.data() {
        let off: usize = idx.iter().zip(&new_strides).map(|(i, s)| i * s).sum();
        out[off] = z;
        for ax in (0..idx.len()).rev() {
            idx[ax] += 1;
            if idx[ax] < old[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
    DenseTensor::new(shape.to_vec(), out)
}

/// Any of the three representations.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Mps(MpsModel),
    Born(BornModel),
    Lps(LpsModel),
}

/// Internal evaluation layout: single layer (MPS) or double layer (Born, LPS).
pub(crate) enum Layers<'a> {
    Single(&'a MpsModel),
    Double(std::borrow::Cow<'a, LpsModel>),
}

impl From<MpsModel> for Model {
    fn from(m: MpsModel) -> Self {
        Model::Mps(m)
    }
}

impl From<BornModel> for Model {
    fn from(m: BornModel) -> Self {
        Model::Born(m)
    }
}

impl From<LpsModel> for Model {
    fn from(m: LpsModel) -> Self {
        Model::Lps(m)
    }
}

impl Model {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Model::Mps(_) => "mps",
            Model::Born(_) => "born",
            Model::Lps(_) => "lps",
        }
    }

    pub fn field(&self) -> FieldKind {
        match self {
            Model::Mps(m) => m.field(),
            Model::Born(m) => m.field(),
            Model::Lps(m) => m.field(),
        }
    }

    pub fn n_sites(&self) -> usize {
        match self {
            Model::Mps(m) => m.n_sites(),
            Model::Born(m) => m.amplitude.n_sites(),
            Model::Lps(m) => m.n_sites(),
        }
    }

    pub fn phys_dim(&self) -> usize {
        match self {
            Model::Mps(m) => m.phys_dim(),
            Model::Born(m) => m.amplitude.phys_dim(),
            Model::Lps(m) => m.phys_dim(),
        }
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        match self {
            Model::Mps(m) => m.bond_dims(),
            Model::Born(m) => m.amplitude.bond_dims(),
            Model::Lps(m) => m.bond_dims(),
        }
    }

    /// The model's rank: TT-rank, Born-rank or puri-rank (maximal bond).
    pub fn rank(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn puri_dim(&self) -> Option<usize> {
        match self {
            Model::Lps(m) => Some(m.puri_dim()),
            _ => None,
        }
    }

    pub(crate) fn layers(&self) -> Layers<'_> {
        match self {
            Model::Mps(m) => Layers::Single(m),
            Model::Born(b) => Layers::Double(std::borrow::Cow::Owned(b.to_lps())),
            Model::Lps(l) => Layers::Double(std::borrow::Cow::Borrowed(l)),
        }
    }

    /// Whether the model defines a probability distribution (non-negative
    /// values). Real MPS may take negative values; complex MPS are amplitudes.
    pub fn is_probabilistic(&self) -> bool {
        !matches!(self, Model::Mps(m) if m.field() != FieldKind::NonNeg)
    }

    fn require_real_valued(&self) -> Result<()> {
        if matches!(self, Model::Mps(m) if m.field() == FieldKind::Complex) {
            return Err(Error::InvalidArgument(
                "a complex MPS is an amplitude, not a distribution".into(),
            ));
        }
        Ok(())
    }

    /// `T[x]`. Real and non-negative for Born machines, LPS and
    /// non-negative MPS.
    pub fn evaluate(&self, x: &[usize]) -> Result<C64> {
        check_configuration(x, self.n_sites(), self.phys_dim())?;
        match self {
            Model::Mps(m) => m.evaluate(x),
            Model::Born(b) => Ok(C64::new(b.amplitude.evaluate(x)?.norm_sqr(), 0.0)),
            Model::Lps(_) => {
                let sels: Vec<SiteSel> = x.iter().map(|&v| SiteSel::Fixed(v)).collect();
                Ok(C64::new(self.log_value(&sels)?.value(), 0.0))
            }
        }
    }

    /// Log-scaled contraction with the given per-site selectors.
    pub fn log_value(&self, sels: &[SiteSel]) -> Result<LogValue> {
        self.require_real_valued()?;
        if sels.len() != self.n_sites() {
            return Err(Error::InvalidConfiguration(format!(
                "expected {} selectors, got {}",
                self.n_sites(),
                sels.len()
            )));
        }
        for s in sels {
            if let SiteSel::Fixed(v) = s {
                if *v >= self.phys_dim() {
                    return Err(Error::InvalidConfiguration(format!(
                        "value {v} out of range for dimension {}",
                        self.phys_dim()
                    )));
                }
            }
        }
        Ok(match self.layers() {
            Layers::Single(m) => engine::single_value(m, sels),
            Layers::Double(l) => engine::double_value(&l, sels),
        })
    }

    /// `ln Z_T` computed by the transfer sweep.
    pub fn log_normalization(&self) -> Result<f64> {
        let lv = self.log_value(&vec![SiteSel::Sum; self.n_sites()])?;
        if lv.sign == 0.0 {
            return Err(Error::ZeroNormalization);
        }
        if lv.sign < 0.0 {
            return Err(Error::Numerical("normalization is negative".into()));
        }
        Ok(lv.ln_abs)
    }

    /// `Z_T = sum_x T[x]`, computed by the transfer sweep (never densely).
    pub fn normalization(&self) -> Result<f64> {
        Ok(self.log_normalization()?.exp())
    }

    /// `ln(T[x] / Z_T)`; `-inf` when `T[x] = 0`.
    pub fn log_prob(&self, x: &[usize]) -> Result<f64> {
        check_configuration(x, self.n_sites(), self.phys_dim())?;
        let ln_z = self.log_normalization()?;
        let sels: Vec<SiteSel> = x.iter().map(|&v| SiteSel::Fixed(v)).collect();
        let lv = self.log_value(&sels)?;
        if lv.sign <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(lv.ln_abs - ln_z)
    }

    /// Probability of a partial assignment, summing all other sites.
    pub fn marginal(&self, partial: &[(usize, usize)]) -> Result<f64> {
        let n = self.n_sites();
        let mut sels = vec![SiteSel::Sum; n];
        for &(site, value) in partial {
            if site >= n {
                return Err(Error::InvalidConfiguration(format!("site {site} out of range")));
            }
            if sels[site] != SiteSel::Sum {
                return Err(Error::InvalidConfiguration(format!("site {site} assigned twice")));
            }
            sels[site] = SiteSel::Fixed(value);
        }
        let ln_z = self.log_normalization()?;
        let lv = self.log_value(&sels)?;
        Ok(lv.sign * (lv.ln_abs - ln_z).exp())
    }

    /// Full tensor of values, limited to `cap` entries.
    pub fn to_dense_capped(&self, cap: usize) -> Result<DenseTensor> {
        let n = self.n_sites();
        let d = self.phys_dim();
        crate::tensor::checked_dense_size(d, n, cap)?;
        let data = match self {
            Model::Mps(m) => dense::single_forward(m).pop().unwrap(),
            Model::Born(b) => dense::single_forward(&b.amplitude)
                .pop()
                .unwrap()
                .into_iter()
                .map(|z| C64::new(z.norm_sqr(), 0.0))
                .collect(),
            Model::Lps(l) => dense::double_forward(l).pop().unwrap(),
        };
        DenseTensor::new(vec![d; n], data)
    }

    pub fn to_dense(&self) -> Result<DenseTensor> {
        self.to_dense_capped(DEFAULT_DENSE_CAP)
    }

    /// Same tensor with every inner bond zero-padded to `new_rank`.
    pub fn padded(&self, new_rank: usize) -> Result<Model> {
        Ok(match self {
            Model::Mps(m) => Model::Mps(m.padded(new_rank)?),
            Model::Born(b) => Model::Born(BornModel::new(b.amplitude.padded(new_rank)?)?),
            Model::Lps(l) => Model::Lps(l.padded(new_rank)?),
        })
    }

    /// One exact sample.
    pub fn sample(&self, rng_seed: u64) -> Result<Configuration> {
        Ok(self.sample_many(1, rng_seed)?.pop().unwrap())
    }

    /// `count` exact samples drawn by ancestral sampling with cached right
    /// environments. Sample `k` uses its own stream derived from `rng_seed`,
    /// so results do not depend on the thread count.
    pub fn sample_many(&self, count: usize, rng_seed: u64) -> Result<Vec<Configuration>> {
        self.require_real_valued()?;
        self.log_normalization()?;
        match self.layers() {
            Layers::Single(m) => sample::sample_single(m, count, rng_seed),
            Layers::Double(l) => sample::sample_double(&l, count, rng_seed),
        }
    }
}
