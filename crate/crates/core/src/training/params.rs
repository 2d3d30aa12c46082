//! Flat real parameter vectors for the trainable kinds.
//!
//! Non-negative MPS are parameterized by `B` with cores `B * B` (entrywise),
//! real kinds by their core entries, complex kinds by the real and imaginary
//! parts of every entry, interleaved.

use super::ModelKind;
use crate::models::{BornModel, FieldKind, LpsModel, Model, MpsModel};
use crate::{DenseTensor, Error, Result, C64};

/// Evaluation view of a parameter set.
#[derive(Clone, Debug)]
pub(crate) enum Net {
    Single(MpsModel),
    Double(LpsModel),
}

#[derive(Clone, Debug)]
pub(crate) struct Params {
    pub kind: ModelKind,
    /// Underlying tensors: `B` for non-negative MPS, the cores otherwise.
    pub raw: Vec<DenseTensor>,
}

impl Params {
    pub fn from_model(model: &Model) -> Result<Self> {
        let (kind, raw) = match model {
            Model::Mps(m) => match m.field() {
                FieldKind::NonNeg => (
                    ModelKind::MpsNonneg,
                    m.cores()
                        .iter()
                        .map(|c| {
                            let data = c.data().iter().map(|z| C64::new(z.re.sqrt(), 0.0)).collect();
                            DenseTensor::new(c.shape().to_vec(), data)
                        })
                        .collect::<Result<Vec<_>>>()?,
                ),
                FieldKind::Real => (ModelKind::MpsReal, m.cores().to_vec()),
                FieldKind::Complex => {
                    return Err(Error::InvalidArgument(
                        "a complex MPS does not define a distribution".into(),
                    ))
                }
            },
            Model::Born(b) => {
                let kind = if b.field() == FieldKind::Real {
                    ModelKind::BornReal
                } else {
                    ModelKind::BornComplex
                };
                (kind, b.amplitude().cores().to_vec())
            }
            Model::Lps(l) => {
                let kind = if l.field() == FieldKind::Real {
                    ModelKind::LpsReal
                } else {
                    ModelKind::LpsComplex
                };
                (kind, l.cores().to_vec())
            }
        };
        Ok(Params { kind, raw })
    }

    pub fn to_model(&self) -> Model {
        match self.kind {
            ModelKind::MpsNonneg => {
                let cores = self
                    .raw
                    .iter()
                    .map(|b| {
                        let data = b.data().iter().map(|z| C64::new(z.re * z.re, 0.0)).collect();
                        DenseTensor::new(b.shape().to_vec(), data).unwrap()
                    })
                    .collect();
                Model::Mps(MpsModel::new(FieldKind::NonNeg, cores).unwrap())
            }
            ModelKind::MpsReal => Model::Mps(MpsModel::new(FieldKind::Real, self.raw.clone()).unwrap()),
            ModelKind::BornReal | ModelKind::BornComplex => Model::Born(
                BornModel::new(MpsModel::new(self.kind.field(), self.raw.clone()).unwrap()).unwrap(),
            ),
            ModelKind::LpsReal | ModelKind::LpsComplex => {
                Model::Lps(LpsModel::new(self.kind.field(), self.raw.clone()).unwrap())
            }
        }
    }

    pub fn net(&self) -> Net {
        match self.to_model() {
            Model::Mps(m) => Net::Single(m),
            Model::Born(b) => Net::Double(b.to_lps()),
            Model::Lps(l) => Net::Double(l),
        }
    }

    fn is_complex(&self) -> bool {
        self.kind.field() == FieldKind::Complex
    }

    pub fn len(&self) -> usize {
        let n: usize = self.raw.iter().map(|t| t.len()).sum();
        if self.is_complex() {
            2 * n
        } else {
            n
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let complex = self.is_complex();
        let mut v = Vec::with_capacity(self.len());
        for z in self.raw.iter().flat_map(|t| t.data()) {
            v.push(z.re);
            if complex {
                v.push(z.im);
            }
        }
        v
    }

    pub fn with_vec(&self, v: &[f64]) -> Params {
        let complex = self.is_complex();
        let mut it = v.iter().copied();
        let raw = self
            .raw
            .iter()
            .map(|t| {
                let data = (0..t.len())
                    .map(|_| {
                        let re = it.next().unwrap();
                        let im = if complex { it.next().unwrap() } else { 0.0 };
                        C64::new(re, im)
                    })
                    .collect();
                DenseTensor::new(t.shape().to_vec(), data).unwrap_or_else(|_| {
                    // non-finite parameters: keep the shape, poison the values
                    DenseTensor::zeros(t.shape().to_vec())
                })
            })
            .collect();
        Params { kind: self.kind, raw }
    }

    /// Map gradients with respect to the cores (as `d/du + i d/dv`) to
    /// gradients with respect to the raw tensors.
    pub fn chain(&self, core_grads: Vec<Vec<C64>>) -> Vec<Vec<C64>> {
        match self.kind {
            ModelKind::MpsNonneg => core_grads
                .into_iter()
                .zip(&self.raw)
                .map(|(g, b)| {
                    g.iter()
                        .zip(b.data())
                        .map(|(gv, bv)| C64::new(2.0 * gv.re * bv.re, 0.0))
                        .collect()
                })
                .collect(),
            _ => core_grads,
        }
    }

    /// Flatten raw gradients in the same order as [`Params::to_vec`].
    pub fn flatten(&self, grads: &[Vec<C64>]) -> Vec<f64> {
        let complex = self.is_complex();
        let mut v = Vec::with_capacity(self.len());
        for z in grads.iter().flatten() {
            v.push(z.re);
            if complex {
                v.push(z.im);
            }
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_round_trip() {
        for kind in ModelKind::ALL {
            let m = kind.random_model(4, 2, 3, 2, 7);
            let p = Params::from_model(&m).unwrap();
            let v = p.to_vec();
            assert_eq!(v.len(), p.len());
            let q = p.with_vec(&v);
            assert_eq!(q.to_model(), p.to_model(), "{kind}");
            assert_eq!(q.to_vec(), v);
        }
    }

    #[test]
    fn complex_mps_is_not_trainable() {
        let m = Model::Mps(MpsModel::random(FieldKind::Complex, 3, 2, 2, 0));
        assert!(Params::from_model(&m).is_err());
    }
}
