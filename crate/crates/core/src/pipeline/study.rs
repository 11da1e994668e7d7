//! Training and evaluation cells used by the CLI and the reproduction studies.

use serde::Serialize;

use super::config::ExperimentConfig;
use super::dataset::Dataset;
use super::report::{self, Csv};
use crate::error::{Error, Result};
use crate::linalg;
use crate::nn::{self, evaluate, MlpModel, Samples, TrainConfig, TrainedModel};

/// Checks the two datasets can train one network.
pub fn check_compatible(train: &Dataset, val: &Dataset) -> Result<()> {
    let (a, b) = (&train.header, &val.header);
    if a.d != b.d || a.n_points != b.n_points || a.dt != b.dt {
        return Err(Error::Config(format!(
            "incompatible datasets: d {} vs {}, n_points {} vs {}, dt {} vs {}",
            a.d, b.d, a.n_points, b.n_points, a.dt, b.dt
        )));
    }
    let (ra, rb) = (a.first_index..a.first_index + a.count as u64, b.first_index..b.first_index + b.count as u64);
    if a.seed == b.seed && ra.start < rb.end && rb.start < ra.end {
        return Err(Error::Config("training and validation datasets share state indices".into()));
    }
    Ok(())
}

pub fn train_on_prefix(train: &Dataset, val: &Dataset, traj_len: f64, cfg: &TrainConfig) -> Result<TrainedModel> {
    check_compatible(train, val)?;
    let tr = train.samples_for_length(traj_len)?;
    let va = val.samples_for_length(traj_len)?;
    nn::train(&tr, &va, cfg)
}

/// Samples of `ds` cut to the input length of `model`.
pub fn samples_for_model(model: &MlpModel, ds: &Dataset) -> Result<Samples> {
    if ds.header.d != model.d {
        return Err(Error::Config(format!("model reconstructs d = {}, dataset has d = {}", model.d, ds.header.d)));
    }
    if ds.header.n_points < model.n {
        return Err(Error::Config(format!(
            "model needs {} points per observable, dataset has {}",
            model.n, ds.header.n_points
        )));
    }
    ds.samples(model.n)
}

/// Reconstructions failing the unit-trace / PSD checks.
pub fn validity_violations(model: &MlpModel, samples: &Samples) -> Result<usize> {
    let outputs = nn::train::predict(model, samples.inputs.view())?;
    Ok(outputs
        .iter()
        .filter(|o| {
            let m = o.eta_est.matrix();
            (linalg::trace(m).re - 1.0).abs() > 1e-12
                || linalg::hermiticity_defect(m) > 1e-12
                || o.eta_est.min_eigenvalue() < -1e-12
        })
        .count())
}

/// Mean infidelity of the maximally mixed guess on `samples`.
pub fn mixed_baseline(samples: &Samples) -> Result<f64> {
    let mixed = crate::states::DensityMatrix::maximally_mixed(samples.d());
    let total: f64 = samples
        .targets
        .iter()
        .map(|t| crate::states::infidelity(t, &mixed))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .sum();
    Ok(total / samples.len() as f64)
}

#[derive(Clone, Debug, Serialize)]
pub struct CellResult {
    pub traj_len: f64,
    pub n: usize,
    pub mean_infidelity: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_val_loss: f64,
    pub violations: usize,
}

/// Trains one network per trajectory length on the same pair of datasets.
pub fn length_sweep(
    train: &Dataset,
    val: &Dataset,
    lengths: &[f64],
    cfg: &TrainConfig,
    mut on_cell: impl FnMut(&CellResult, &TrainedModel) -> Result<()>,
) -> Result<Vec<CellResult>> {
    let mut out = Vec::with_capacity(lengths.len());
    for &len in lengths {
        let trained = train_on_prefix(train, val, len, cfg)?;
        let va = val.samples_for_length(len)?;
        let cell = CellResult {
            traj_len: len,
            n: trained.model.n,
            mean_infidelity: trained.val_infidelity,
            best_epoch: trained.curve.best_epoch,
            epochs_run: trained.curve.epochs_run,
            best_val_loss: trained.curve.best_val_loss,
            violations: validity_violations(&trained.model, &va)?,
        };
        log::info!("traj_len {len}: mean infidelity {:.4e} (best epoch {})", cell.mean_infidelity, cell.best_epoch);
        on_cell(&cell, &trained)?;
        out.push(cell);
    }
    Ok(out)
}

pub fn sweep_csv(cfg: &ExperimentConfig, cells: &[CellResult]) -> Csv {
    let mut csv = Csv::new(&["traj_len", "n", "mean_infidelity", "best_epoch", "epochs_run", "best_val_loss", "violations"]);
    csv.meta("potential", cfg.potential.describe())
        .meta("gamma", cfg.gamma)
        .meta("d", cfg.d)
        .meta("config_fingerprint", cfg.fingerprint());
    for c in cells {
        csv.row(&[
            report::num(c.traj_len),
            c.n.to_string(),
            report::num(c.mean_infidelity),
            c.best_epoch.to_string(),
            c.epochs_run.to_string(),
            report::num(c.best_val_loss),
            c.violations.to_string(),
        ]);
    }
    csv
}

/// Per-state infidelity report; `train_scenario` is recorded for cross-scenario runs.
pub fn evaluation_csv(
    model_scenario: &str,
    ds: &Dataset,
    eval: &evaluate::Evaluation,
    mismatch: bool,
) -> Csv {
    let mut csv = Csv::new(&["index", "infidelity"]);
    csv.meta("model_scenario", model_scenario)
        .meta("eval_scenario", format!("{} gamma={}", ds.header.potential_descriptor, ds.header.gamma))
        .meta("mismatch", mismatch)
        .meta("dataset_fingerprint", &ds.header.config_fingerprint)
        .meta("dataset_sha256", &ds.header.payload_sha256);
    report::add_summary(&mut csv, &eval.summary);
    for (k, v) in eval.infidelities.iter().enumerate() {
        csv.row(&[(ds.header.first_index + k as u64).to_string(), report::num(*v)]);
    }
    csv
}
