//! JSON documents for models, HMMs and circuits.
//!
//! Complex numbers are `[re, im]` pairs and tensors are nested arrays in
//! row-major order. Doubles are printed in shortest round-trip form and
//! parsed exactly, so `read(write(x)) == x` bit for bit.
//!
//! ```json
//! {"kind": "mps", "field": "nonneg", "n_sites": 3, "phys_dim": 2,
//!  "bond_dims": [2, 2], "cores": [[[[1.0, 0.0], ...]]]}
//! ```
//!
//! Born machines (`"born"`) store their amplitude cores; LPS documents
//! (`"lps"`) add `"puri_dim"`. HMMs (`"hmm"`) hold `initial`,
//! `transitions[i][to][from]` and `emissions[i][x][h]` as plain numbers.
//! Circuits (`"circuit"`) hold `n_qudits`, `d` (or per-qudit `dims`) and
//! `layers`, each a list of `{"site": i, "matrix": [[[re, im], ...], ...]}`.

use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use crate::circuits::{Gate, LocalCircuit};
use crate::hmm::Hmm;
use crate::models::{BornModel, FieldKind, LpsModel, Model, MpsModel};
use crate::{DenseTensor, Error, Result, C64};

/// Any document this module reads or writes.
#[derive(Clone, Debug, PartialEq)]
pub enum Document {
    Model(Model),
    Hmm(Hmm),
    Circuit(LocalCircuit),
}

fn nested(data: &[C64], shape: &[usize]) -> Value {
    match shape {
        [] => json!([data[0].re, data[0].im]),
        [n, rest @ ..] => {
            let step: usize = rest.iter().product();
            Value::Array((0..*n).map(|i| nested(&data[i * step..(i + 1) * step], rest)).collect())
        }
    }
}

fn tensor_value(t: &DenseTensor) -> Value {
    nested(t.data(), t.shape())
}

fn number(v: &Value, what: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| Error::Format(format!("{what}: expected a number, got {v}")))
}

fn integer(doc: &Value, key: &str) -> Result<usize> {
    doc.get(key)
        .and_then(Value::as_u64)
        .map(|v| v as usize)
        .ok_or_else(|| Error::Format(format!("missing or non-integer field `{key}`")))
}

fn field<'a>(doc: &'a Value, key: &str) -> Result<&'a Value> {
    doc.get(key).ok_or_else(|| Error::Format(format!("missing field `{key}`")))
}

fn array<'a>(v: &'a Value, what: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| Error::Format(format!("{what}: expected an array")))
}

/// Parse nested `[re, im]` arrays of the given shape.
fn tensor_from(v: &Value, shape: &[usize]) -> Result<DenseTensor> {
    fn walk(v: &Value, shape: &[usize], out: &mut Vec<C64>) -> Result<()> {
        let items = array(v, "tensor")?;
        match shape {
            [] => {
                if items.len() != 2 {
                    return Err(Error::Format("complex entries must be [re, im] pairs".into()));
                }
                out.push(C64::new(number(&items[0], "re")?, number(&items[1], "im")?));
            }
            [n, rest @ ..] => {
                if items.len() != *n {
                    return Err(Error::Format(format!("expected {n} entries, found {}", items.len())));
                }
                for item in items {
                    walk(item, rest, out)?;
                }
            }
        }
        Ok(())
    }
    let mut out = Vec::with_capacity(shape.iter().product());
    walk(v, shape, &mut out)?;
    DenseTensor::new(shape.to_vec(), out)
}

fn mps_value(kind: &str, m: &MpsModel) -> Value {
    json!({
        "kind": kind,
        "field": m.field().as_str(),
        "n_sites": m.n_sites(),
        "phys_dim": m.phys_dim(),
        "bond_dims": m.bond_dims(),
        "cores": m.cores().iter().map(tensor_value).collect::<Vec<_>>(),
    })
}

pub fn model_to_value(m: &Model) -> Value {
    match m {
        Model::Mps(m) => mps_value("mps", m),
        Model::Born(b) => mps_value("born", b.amplitude()),
        Model::Lps(l) => json!({
            "kind": "lps",
            "field": l.field().as_str(),
            "n_sites": l.n_sites(),
            "phys_dim": l.phys_dim(),
            "puri_dim": l.puri_dim(),
            "bond_dims": l.bond_dims(),
            "cores": l.cores().iter().map(tensor_value).collect::<Vec<_>>(),
        }),
    }
}

/// Boundary-padded bond list `[1, r_1, ..., r_{N-1}, 1]`.
fn bonds(doc: &Value, n: usize) -> Result<Vec<usize>> {
    let inner = array(field(doc, "bond_dims")?, "bond_dims")?
        .iter()
        .map(|v| v.as_u64().map(|b| b as usize).ok_or_else(|| Error::Format("bond_dims must be integers".into())))
        .collect::<Result<Vec<_>>>()?;
    if inner.len() + 1 != n {
        return Err(Error::Format(format!("{} bond dimensions for {n} sites", inner.len())));
    }
    Ok(std::iter::once(1).chain(inner).chain(std::iter::once(1)).collect())
}

pub fn model_from_value(doc: &Value) -> Result<Model> {
    let kind = field(doc, "kind")?.as_str().unwrap_or_default();
    let fk = FieldKind::parse(field(doc, "field")?.as_str().unwrap_or_default())?;
    let n = integer(doc, "n_sites")?;
    let d = integer(doc, "phys_dim")?;
    let b = bonds(doc, n)?;
    let cores = array(field(doc, "cores")?, "cores")?;
    if cores.len() != n {
        return Err(Error::Format(format!("{} cores for {n} sites", cores.len())));
    }
    match kind {
        "mps" | "born" => {
            let cores = (0..n).map(|i| tensor_from(&cores[i], &[d, b[i], b[i + 1]])).collect::<Result<Vec<_>>>()?;
            let mps = MpsModel::new(fk, cores)?;
            Ok(if kind == "mps" {
                Model::Mps(mps)
            } else {
                Model::Born(BornModel::new(mps)?)
            })
        }
        "lps" => {
            let mu = integer(doc, "puri_dim")?;
            let cores =
                (0..n).map(|i| tensor_from(&cores[i], &[d, mu, b[i], b[i + 1]])).collect::<Result<Vec<_>>>()?;
            Ok(Model::Lps(LpsModel::new(fk, cores)?))
        }
        other => Err(Error::Format(format!("unknown model kind `{other}`"))),
    }
}

fn table(t: &[f64], cols: usize) -> Value {
    Value::Array(t.chunks(cols).map(|r| json!(r)).collect())
}

pub fn hmm_to_value(h: &Hmm) -> Value {
    let r = h.hidden_dim();
    json!({
        "kind": "hmm",
        "n_sites": h.n_sites(),
        "hidden_dim": r,
        "obs_dim": h.obs_dim(),
        "initial": h.initial(),
        "transitions": h.transitions().iter().map(|t| table(t, r)).collect::<Vec<_>>(),
        "emissions": h.emissions().iter().map(|e| table(e, r)).collect::<Vec<_>>(),
    })
}

fn flat_table(v: &Value, rows: usize, cols: usize, what: &str) -> Result<Vec<f64>> {
    let rs = array(v, what)?;
    if rs.len() != rows {
        return Err(Error::Format(format!("{what}: expected {rows} rows")));
    }
    let mut out = Vec::with_capacity(rows * cols);
    for row in rs {
        let row = array(row, what)?;
        if row.len() != cols {
            return Err(Error::Format(format!("{what}: expected {cols} columns")));
        }
        for x in row {
            out.push(number(x, what)?);
        }
    }
    Ok(out)
}

pub fn hmm_from_value(doc: &Value) -> Result<Hmm> {
    let n = integer(doc, "n_sites")?;
    let r = integer(doc, "hidden_dim")?;
    let d = integer(doc, "obs_dim")?;
    let initial = array(field(doc, "initial")?, "initial")?
        .iter()
        .map(|v| number(v, "initial"))
        .collect::<Result<Vec<_>>>()?;
    let transitions = array(field(doc, "transitions")?, "transitions")?
        .iter()
        .map(|t| flat_table(t, r, r, "transitions"))
        .collect::<Result<Vec<_>>>()?;
    let emissions = array(field(doc, "emissions")?, "emissions")?
        .iter()
        .map(|e| flat_table(e, d, r, "emissions"))
        .collect::<Result<Vec<_>>>()?;
    let h = Hmm::new(initial, transitions, emissions)?;
    if h.n_sites() != n {
        return Err(Error::Format(format!("n_sites is {n} but {} emission tables given", h.n_sites())));
    }
    Ok(h)
}

pub fn circuit_to_value(c: &LocalCircuit) -> Value {
    let layers: Vec<Value> = c
        .layers()
        .iter()
        .map(|layer| {
            Value::Array(
                layer
                    .iter()
                    .map(|g| json!({"site": g.site, "matrix": tensor_value(&g.matrix)}))
                    .collect(),
            )
        })
        .collect();
    let dims = c.dims();
    let mut doc = json!({"kind": "circuit", "n_qudits": dims.len(), "layers": layers});
    if dims.iter().all(|&d| d == dims[0]) {
        doc["d"] = json!(dims[0]);
    } else {
        doc["dims"] = json!(dims);
    }
    doc
}

pub fn circuit_from_value(doc: &Value) -> Result<LocalCircuit> {
    let n = integer(doc, "n_qudits")?;
    let dims = match doc.get("dims") {
        Some(v) => array(v, "dims")?
            .iter()
            .map(|x| x.as_u64().map(|d| d as usize).ok_or_else(|| Error::Format("dims must be integers".into())))
            .collect::<Result<Vec<_>>>()?,
        None => vec![integer(doc, "d")?; n],
    };
    if dims.len() != n {
        return Err(Error::Format(format!("{} dimensions for {n} qudits", dims.len())));
    }
    let mut layers = Vec::new();
    for layer in array(field(doc, "layers")?, "layers")? {
        let mut gates = Vec::new();
        for g in array(layer, "layer")? {
            let site = integer(g, "site")?;
            if site + 1 >= n {
                return Err(Error::Format(format!("gate site {site} out of range")));
            }
            let dd = dims[site] * dims[site + 1];
            gates.push(Gate {
                site,
                matrix: tensor_from(field(g, "matrix")?, &[dd, dd])?,
            });
        }
        layers.push(gates);
    }
    LocalCircuit::with_dims(dims, layers)
}

impl Document {
    pub fn to_value(&self) -> Value {
        match self {
            Document::Model(m) => model_to_value(m),
            Document::Hmm(h) => hmm_to_value(h),
            Document::Circuit(c) => circuit_to_value(c),
        }
    }

    pub fn from_value(doc: &Value) -> Result<Self> {
        match doc.get("kind").and_then(Value::as_str) {
            Some("hmm") => Ok(Document::Hmm(hmm_from_value(doc)?)),
            Some("circuit") => Ok(Document::Circuit(circuit_from_value(doc)?)),
            Some(_) => Ok(Document::Model(model_from_value(doc)?)),
            None => Err(Error::Format("missing field `kind`".into())),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_value()).expect("JSON values always serialize")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::from_value(&serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json_string() + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::random_circuit_with_dims;

    fn round_trip(doc: Document) {
        let text = doc.to_json_string();
        let back = Document::from_json_str(&text).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.to_json_string(), text);
    }

    #[test]
    fn models_round_trip_bitwise() {
        for (i, field) in [FieldKind::NonNeg, FieldKind::Real, FieldKind::Complex].into_iter().enumerate() {
            round_trip(Document::Model(Model::Mps(MpsModel::random(field, 4, 3, 3, i as u64))));
            if field != FieldKind::NonNeg {
                round_trip(Document::Model(Model::Born(BornModel::random(field, 3, 2, 2, 10 + i as u64))));
                round_trip(Document::Model(Model::Lps(LpsModel::random(field, 3, 2, 2, 3, 20 + i as u64))));
            }
        }
    }

    #[test]
    fn awkward_doubles_survive() {
        let vals = [0.1, 1.0 / 3.0, f64::MIN_POSITIVE, 5e-324, 1.7976931348623157e308, -0.0];
        let core = |v: f64| DenseTensor::from_real(vec![2, 1, 1], &[v, 1.0]).unwrap();
        for v in vals {
            let m = MpsModel::new(FieldKind::Real, vec![core(v), core(2.0)]).unwrap();
            let text = Document::Model(Model::Mps(m.clone())).to_json_string();
            let Document::Model(Model::Mps(back)) = Document::from_json_str(&text).unwrap() else { panic!() };
            assert_eq!(back.cores()[0].data()[0].re.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn hmm_and_circuit_round_trip() {
        round_trip(Document::Hmm(Hmm::random(5, 3, 4, 7)));
        round_trip(Document::Circuit(crate::circuits::random_circuit(4, 2, 3, 1).unwrap()));
        round_trip(Document::Circuit(random_circuit_with_dims(vec![2, 3, 2], 2, 2).unwrap()));
    }

    #[test]
    fn malformed_documents_are_rejected() {
        assert!(Document::from_json_str("{}").is_err());
        assert!(Document::from_json_str("not json").is_err());
        let mut v = model_to_value(&Model::Mps(MpsModel::random(FieldKind::Real, 3, 2, 2, 0)));
        v["bond_dims"] = json!([2]);
        assert!(Document::from_value(&v).is_err());
        v["bond_dims"] = json!([2, 3]);
        assert!(Document::from_value(&v).is_err());
        let mut h = hmm_to_value(&Hmm::random(3, 2, 2, 0));
        h["initial"] = json!([0.5, 0.6]);
        assert!(Document::from_value(&h).is_err());
    }
}
