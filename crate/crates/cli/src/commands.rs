use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use tnprob::circuits::{circuit_to_born, circuit_with_ancillas_to_lps, random_circuit, random_circuit_with_dims, simulate_dense, LocalCircuit};
use tnprob::data::Dataset;
use tnprob::io::Document;
use tnprob::models::{lps_complex_to_real, lps_to_mps_real, mps_nonneg_to_lps_real, FieldKind, LpsModel, Model, MpsModel};
use tnprob::ranks::{certificate_report, write_report_csv, Outcome};
use tnprob::training::{
    fit_dense, fit_dense_from, lr_grid_search, nll, sgd_train, ModelKind, Optimizer, TrainConfig, TrainReport,
};
use tnprob::{par, seed, DenseTensor};

use crate::{CircuitArgs, Cli, CliError, CliResult, Command, Common, ConvertArgs, ConvertTarget, EvalArgs, FactorizeArgs, OptimizerArg, SampleArgs, TrainArgs};

/// Tolerance for the dense cross-checks of `circuit` and `convert`.
const VERIFY_TOL: f64 = 1e-10;

pub fn run(cli: Cli) -> CliResult<()> {
    let common = cli.common;
    par::set_sequential(common.deterministic);
    match cli.command {
        Command::Train(a) => train(&common, &a),
        Command::Eval(a) => eval(&a),
        Command::Sample(a) => sample(&common, &a),
        Command::Factorize(a) => factorize(&common, &a),
        Command::Ranks => ranks(&common),
        Command::Circuit(a) => circuit(&common, &a),
        Command::Convert(a) => convert(&common, &a),
    }
}

fn out_path(common: &Common, name: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(&common.out_dir).map_err(|e| CliError::Data(format!("{}: {e}", common.out_dir.display())))?;
    Ok(common.out_dir.join(name))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_document(path: &Path) -> CliResult<Document> {
    Document::load(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> CliResult<Model> {
    match load_document(path)? {
        Document::Model(m) => Ok(m),
        _ => Err(CliError::Data(format!("{} does not hold a model", path.display()))),
    }
}

fn load_data(path: &Path) -> CliResult<Dataset> {
    Dataset::load_csv(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn train(common: &Common, a: &TrainArgs) -> CliResult<()> {
    let data = load_data(&a.data)?;
    let init = match &a.init {
        Some(p) => load_model(p)?,
        None => {
            if a.rank == 0 || a.puri_dim == 0 {
                return Err(CliError::Usage("rank and purification dimension must be positive".into()));
            }
            let kind = ModelKind::parse(&a.kind)?;
            kind.random_model(data.n_vars(), data.cardinality(), a.rank, a.puri_dim, seed::derive(common.seed, 0))
        }
    };
    let (train, valid, test) = match a.split {
        Some((n_train, n_valid)) => {
            let data = data.random_splits(n_train, n_valid, seed::derive(common.seed, 1))?;
            let s = data.splits().expect("splits were just set").clone();
            let part = |idx: &[usize]| (!idx.is_empty()).then(|| data.subset(idx));
            (data.subset(&s.train), part(&s.valid), part(&s.test))
        }
        None => (data, None, None),
    };
    let config = TrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch_size,
        epochs: a.epochs,
        seed: seed::derive(common.seed, 2),
        optimizer: match a.optimizer {
            OptimizerArg::Sgd => Optimizer::Sgd,
            OptimizerArg::Lbfgs => Optimizer::Lbfgs,
        },
        penalty_weight: a.penalty_weight,
        dense_cap: common.dense_cap,
        ..TrainConfig::default()
    };
    let report = if a.lr_grid {
        let (lr, report) = lr_grid_search(&init, &train, valid.as_ref(), &config)?;
        println!("learning_rate {lr:e}");
        report
    } else {
        sgd_train(&init, &train, valid.as_ref(), &config)?
    };
    write_training_outputs(common, &report)?;
    if !report.best_train.is_finite() {
        return Err(CliError::Numerical("training diverged from the start".into()));
    }
    let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |v| format!("{v:.6}"));
    let test_nll = test.map(|t| nll(&report.model, &t)).transpose()?;
    println!(
        "best_epoch {} train_nll {:.6} valid_nll {} test_nll {}{}",
        report.best_epoch,
        report.best_train,
        fmt(report.best_valid),
        fmt(test_nll),
        if report.diverged { " (diverged)" } else { "" }
    );
    Ok(())
}

fn write_training_outputs(common: &Common, report: &TrainReport) -> CliResult<()> {
    Document::Model(report.model.clone()).save(out_path(common, "model.json")?)?;
    let path = out_path(common, "metrics.csv")?;
    let mut w = create(&path)?;
    report.write_csv(&mut w, !common.deterministic)?;
    w.flush().map_err(tnprob::Error::from)?;
    Ok(())
}

fn eval(a: &EvalArgs) -> CliResult<()> {
    let data = load_data(&a.data)?;
    let value = match load_document(&a.model)? {
        Document::Model(m) => nll(&m, &data)?,
        Document::Hmm(h) => h.nll(&data)?,
        Document::Circuit(_) => return Err(CliError::Usage("eval needs a model or HMM, not a circuit".into())),
    };
    println!("nll {value}");
    Ok(())
}

fn sample(common: &Common, a: &SampleArgs) -> CliResult<()> {
    let doc = load_document(&a.model)?;
    let mut out: Box<dyn Write> = match &a.output {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    if a.n > 0 {
        let (n_vars, card, rows) = match doc {
            Document::Model(m) => (m.n_sites(), m.phys_dim(), m.sample_many(a.n, common.seed)?),
            Document::Hmm(h) => (h.n_sites(), h.obs_dim(), h.sample_many(a.n, common.seed)),
            Document::Circuit(_) => return Err(CliError::Usage("sample needs a model or HMM, not a circuit".into())),
        };
        Dataset::new(n_vars, card, rows)?.write_csv_to(&mut out)?;
    }
    out.flush().map_err(tnprob::Error::from)?;
    Ok(())
}

fn random_target(n: usize, d: usize, seed: u64) -> CliResult<DenseTensor> {
    let mut rng = seed::rng(seed);
    let raw: Vec<f64> = (0..d.pow(n as u32)).map(|_| rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    Ok(DenseTensor::from_real(vec![d; n], &raw.iter().map(|v| v / total).collect::<Vec<_>>())?)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

fn factorize(common: &Common, a: &FactorizeArgs) -> CliResult<()> {
    let kinds = a.kinds.iter().map(|k| ModelKind::parse(k)).collect::<Result<Vec<_>, _>>()?;
    let mut ranks = a.ranks.clone();
    ranks.sort_unstable();
    ranks.dedup();
    if ranks.first() == Some(&0) || ranks.is_empty() || a.instances == 0 || a.n_sites == 0 || a.phys_dim == 0 {
        return Err(CliError::Usage("ranks, instances, sites and dimension must be positive".into()));
    }
    tnprob::tensor::checked_dense_size(a.phys_dim, a.n_sites, common.dense_cap)?;
    let base = TrainConfig {
        optimizer: Optimizer::Lbfgs,
        restarts: a.restarts,
        max_iters: a.max_iters,
        dense_cap: common.dense_cap,
        ..TrainConfig::default()
    };
    // kl[kind][rank] over instances, and parameter counts
    let mut kl = vec![vec![Vec::with_capacity(a.instances); ranks.len()]; kinds.len()];
    let mut params = vec![vec![0; ranks.len()]; kinds.len()];
    for inst in 0..a.instances {
        let inst_seed = seed::derive(common.seed, inst as u64);
        let p = random_target(a.n_sites, a.phys_dim, inst_seed)?;
        for (ki, &kind) in kinds.iter().enumerate() {
            let config = TrainConfig { seed: seed::derive(inst_seed, ki as u64 + 1), ..base.clone() };
            let mut prev: Option<Model> = None;
            for (ri, &rank) in ranks.iter().enumerate() {
                let mut best = fit_dense(&p, kind, rank, a.puri_dim, &config)?;
                // warm start from the previous rank so the sweep is monotone
                if let Some(m) = &prev {
                    let warm = fit_dense_from(&p, &m.padded(rank)?, &config)?;
                    if warm.best_train < best.best_train {
                        best = warm;
                    }
                }
                params[ki][ri] = ModelKind::n_real_params(&best.model);
                kl[ki][ri].push(best.best_train);
                prev = Some(best.model);
            }
        }
    }
    let path = out_path(common, "factorize.csv")?;
    let mut w = create(&path)?;
    let mut lines = vec!["kind,rank,n_real_params,mean_kl,std_kl".to_string()];
    for (ki, kind) in kinds.iter().enumerate() {
        for (ri, rank) in ranks.iter().enumerate() {
            let (mean, std) = mean_std(&kl[ki][ri]);
            lines.push(format!("{kind},{rank},{},{mean:e},{std:e}", params[ki][ri]));
        }
    }
    for line in &lines {
        println!("{line}");
        writeln!(w, "{line}").map_err(tnprob::Error::from)?;
    }
    w.flush().map_err(tnprob::Error::from)?;
    Ok(())
}

fn ranks(common: &Common) -> CliResult<()> {
    let rows = certificate_report(common.seed)?;
    for r in &rows {
        println!("{r}");
    }
    let path = out_path(common, "ranks.csv")?;
    let mut w = create(&path)?;
    write_report_csv(&mut w, &rows, !common.deterministic)?;
    w.flush().map_err(tnprob::Error::from)?;
    let refuted: Vec<String> = rows.iter().filter(|r| r.outcome == Outcome::Refuted).map(|r| r.to_string()).collect();
    if !refuted.is_empty() {
        return Err(CliError::Numerical(format!("refuted claims: {}", refuted.join("; "))));
    }
    Ok(())
}

/// Probabilities of the system qudits (even positions) with the ancillas
/// summed out.
fn system_marginal(full: &DenseTensor, dims: &[usize]) -> CliResult<DenseTensor> {
    let d = dims[0];
    let n = dims.len() / 2;
    let mut out = vec![0.0; d.pow(n as u32)];
    for (idx, p) in full.real_parts().into_iter().enumerate() {
        let mut rest = idx;
        let mut target = 0;
        let mut place = 1;
        for (pos, &dim) in dims.iter().enumerate().rev() {
            let digit = rest % dim;
            rest /= dim;
            if pos % 2 == 0 {
                target += digit * place;
                place *= d;
            }
        }
        out[target] += p;
    }
    Ok(DenseTensor::from_real(vec![d; n], &out)?)
}

fn circuit(common: &Common, a: &CircuitArgs) -> CliResult<()> {
    let c: LocalCircuit = match &a.input {
        Some(p) => match load_document(p)? {
            Document::Circuit(c) => c,
            _ => return Err(CliError::Data(format!("{} does not hold a circuit", p.display()))),
        },
        None => {
            let c = if a.ancillas {
                let dims = (0..2 * a.qudits).map(|k| if k % 2 == 0 { a.d } else { a.mu }).collect();
                random_circuit_with_dims(dims, a.depth, common.seed)?
            } else {
                random_circuit(a.qudits, a.d, a.depth, common.seed)?
            };
            Document::Circuit(c.clone()).save(out_path(common, "circuit.json")?)?;
            c
        }
    };
    let model: Model = if a.ancillas {
        circuit_with_ancillas_to_lps(&c)?.into()
    } else {
        circuit_to_born(&c)?.into()
    };
    println!("kind {} n_sites {} rank {}", model.kind_name(), model.n_sites(), model.rank());
    println!("bond_dims {:?}", model.bond_dims());
    Document::Model(model.clone()).save(out_path(common, "circuit_model.json")?)?;
    match simulate_dense(&c, common.dense_cap) {
        Ok(state) => {
            let oracle = state.probabilities();
            let oracle = if a.ancillas { system_marginal(&oracle, c.dims())? } else { oracle };
            let err = DenseTensor::max_abs_diff(&model.to_dense_capped(common.dense_cap)?, &oracle)?;
            println!("max_abs_diff {err:e}");
            if !(err <= VERIFY_TOL) {
                return Err(CliError::Numerical(format!("compiled model differs from the state vector by {err:e}")));
            }
        }
        Err(tnprob::Error::DenseCap { .. }) => println!("verification skipped: state vector above the dense cap"),
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

fn to_real_lps(model: &Model) -> CliResult<LpsModel> {
    Ok(match model {
        Model::Mps(m) if m.field() == FieldKind::NonNeg => mps_nonneg_to_lps_real(m)?,
        Model::Mps(_) => {
            return Err(CliError::Usage("only non-negative MPS have a constructive LPS form".into()));
        }
        Model::Born(b) => {
            let l = b.to_lps();
            if l.field() == FieldKind::Complex { lps_complex_to_real(&l)? } else { l }
        }
        Model::Lps(l) if l.field() == FieldKind::Complex => lps_complex_to_real(l)?,
        Model::Lps(l) => l.clone(),
    })
}

fn to_real_mps(model: &Model) -> CliResult<MpsModel> {
    Ok(match model {
        Model::Mps(m) if m.field() == FieldKind::Complex => {
            return Err(CliError::Usage("a complex MPS is not a distribution".into()));
        }
        Model::Mps(m) => MpsModel::new(FieldKind::Real, m.cores().to_vec())?,
        other => lps_to_mps_real(&to_real_lps(other)?)?,
    })
}

fn convert(common: &Common, a: &ConvertArgs) -> CliResult<()> {
    let input = load_model(&a.input)?;
    let output: Model = match a.to {
        ConvertTarget::LpsReal => to_real_lps(&input)?.into(),
        ConvertTarget::MpsReal => to_real_mps(&input)?.into(),
    };
    println!("kind {} field {} rank {}", output.kind_name(), output.field().as_str(), output.rank());
    let path = match &a.output {
        Some(p) => p.clone(),
        None => out_path(common, "converted.json")?,
    };
    Document::Model(output.clone()).save(&path)?;
    match (input.to_dense_capped(common.dense_cap), output.to_dense_capped(common.dense_cap)) {
        (Ok(x), Ok(y)) => {
            let scale = x.data().iter().map(|z| z.norm()).fold(1.0, f64::max);
            let err = DenseTensor::max_abs_diff(&x, &y)? / scale;
            println!("max_rel_diff {err:e}");
            if !(err <= VERIFY_TOL) {
                return Err(CliError::Numerical(format!("converted model differs by {err:e}")));
            }
        }
        (Err(tnprob::Error::DenseCap { .. }), _) | (_, Err(tnprob::Error::DenseCap { .. })) => {
            println!("verification skipped: dense tensor above the cap")
        }
        (Err(e), _) | (_, Err(e)) => return Err(e.into()),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marginal_sums_out_odd_positions() {
        // dims (2, 3): system value x, ancilla value y, p = (3x + y + 1) / 21
        let full = DenseTensor::from_real(vec![2, 3], &(1..=6).map(|v| v as f64 / 21.0).collect::<Vec<_>>()).unwrap();
        let m = system_marginal(&full, &[2, 3]).unwrap();
        let got = m.real_parts();
        assert!((got[0] - 6.0 / 21.0).abs() < 1e-15 && (got[1] - 15.0 / 21.0).abs() < 1e-15, "{got:?}");
    }

    #[test]
    fn sample_statistics() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }
}
