//! Mini-batch Adam training with early stopping on the validation loss.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss;
use super::mlp::{MlpModel, HIDDEN_LAYERS};
use crate::error::{Error, Result};
use crate::states::{self, DensityMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-7 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub adam: AdamConfig,
    /// Epochs between validation-infidelity evaluations.
    pub eval_every: usize,
    pub seed: u64,
    pub hidden_layers: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 512,
            max_epochs: 10_000,
            patience: 500,
            adam: AdamConfig::default(),
            eval_every: 50,
            seed: 0,
            hidden_layers: HIDDEN_LAYERS.to_vec(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_every == 0 || self.hidden_layers.contains(&0) {
            return Err(Error::Config("batch_size, eval_every and layer widths must be positive".into()));
        }
        if self.patience >= self.max_epochs {
            return Err(Error::Config(format!(
                "patience ({}) must be smaller than max_epochs ({})",
                self.patience, self.max_epochs
            )));
        }
        let a = &self.adam;
        if !(a.learning_rate > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0) {
            return Err(Error::Config("invalid Adam parameters".into()));
        }
        Ok(())
    }
}

/// Adam with the bias correction folded into the step size.
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(cfg: AdamConfig, n_params: usize) -> Self {
        Self { cfg, m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    pub fn step(&mut self, model: &mut MlpModel, grad: &MlpModel) {
        self.t += 1;
        let c = &self.cfg;
        let lr_t = c.learning_rate * (1.0 - c.beta2.powi(self.t)).sqrt() / (1.0 - c.beta1.powi(self.t));
        for (((p, g), m), v) in model.params_mut().zip(grad.params()).zip(&mut self.m).zip(&mut self.v) {
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            *p -= lr_t * *m / (v.sqrt() + c.epsilon);
        }
    }
}

/// Network inputs (one trajectory per row) with their target states.
#[derive(Clone, Debug)]
pub struct Samples {
    pub inputs: Array2<f64>,
    pub targets: Vec<DensityMatrix>,
}

impl Samples {
    pub fn new(inputs: Array2<f64>, targets: Vec<DensityMatrix>) -> Result<Self> {
        if inputs.nrows() != targets.len() || targets.is_empty() {
            return Err(Error::DimensionMismatch(format!("{} inputs for {} targets", inputs.nrows(), targets.len())));
        }
        let d = targets[0].dim();
        if targets.iter().any(|t| t.dim() != d) {
            return Err(Error::DimensionMismatch("targets of different dimensions".into()));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn d(&self) -> usize {
        self.targets[0].dim()
    }

    fn select(&self, idx: &[usize]) -> (Array2<f64>, Vec<&DensityMatrix>) {
        (self.inputs.select(Axis(0), idx), idx.iter().map(|&i| &self.targets[i]).collect())
    }
}

/// Mean loss of a batch and `d loss / d raw output` (already divided by the batch size).
fn batch_loss_grad(d: usize, raw: &Array2<f64>, targets: &[&DensityMatrix]) -> Result<(f64, Array2<f64>)> {
    let b = raw.nrows();
    let mut grad = Array2::zeros(raw.raw_dim());
    let mut total = 0.0;
    for (i, target) in targets.iter().enumerate() {
        let row = raw.row(i);
        let mut g = vec![0.0; row.len()];
        total += loss::loss_and_grad(d, row.as_slice().unwrap(), target, &mut g)?;
        grad.row_mut(i).iter_mut().zip(&g).for_each(|(dst, v)| *dst = v / b as f64);
    }
    Ok((total / b as f64, grad))
}

/// Mean loss over all samples, evaluated in chunks.
pub fn mean_loss(model: &MlpModel, samples: &Samples) -> Result<f64> {
    let mut total = 0.0;
    for (chunk, targets) in chunks(samples, 512) {
        let raw = model.forward_raw(chunk)?;
        for (i, t) in targets.iter().enumerate() {
            let out = loss::output_state(model.d, raw.row(i).as_slice().unwrap())?;
            total += loss::loss(&out.eta_est, t)?;
        }
    }
    Ok(total / samples.len() as f64)
}

/// Reconstructed states for every sample.
pub fn predict(model: &MlpModel, inputs: ArrayView2<f64>) -> Result<Vec<loss::NetworkOutputState>> {
    let mut out = Vec::with_capacity(inputs.nrows());
    for start in (0..inputs.nrows()).step_by(512) {
        let end = (start + 512).min(inputs.nrows());
        let raw = model.forward_raw(inputs.slice(ndarray::s![start..end, ..]))?;
        for row in raw.rows() {
            out.push(loss::output_state(model.d, &row.to_vec())?);
        }
    }
    Ok(out)
}

/// Reconstruction from a single input vector.
pub fn predict_one(model: &MlpModel, input: &[f64]) -> Result<loss::NetworkOutputState> {
    let x = ArrayView2::from_shape((1, input.len()), input).map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    let raw = model.forward_raw(x)?;
    loss::output_state(model.d, raw.as_slice().unwrap())
}

/// Per-sample infidelities `1 - F`.
pub fn infidelities(model: &MlpModel, samples: &Samples) -> Result<Vec<f64>> {
    predict(model, samples.inputs.view())?
        .iter()
        .zip(&samples.targets)
        .map(|(o, t)| states::infidelity(t, &o.eta_est))
        .collect()
}

fn chunks(samples: &Samples, size: usize) -> impl Iterator<Item = (ArrayView2<'_, f64>, &[DensityMatrix])> {
    (0..samples.len()).step_by(size).map(move |start| {
        let end = (start + size).min(samples.len());
        (samples.inputs.slice(ndarray::s![start..end, ..]), &samples.targets[start..end])
    })
}

/// Mean loss over `samples` and its gradient with respect to every parameter.
pub fn full_gradient(model: &MlpModel, samples: &Samples) -> Result<(f64, MlpModel)> {
    let idx: Vec<usize> = (0..samples.len()).collect();
    let (x, targets) = samples.select(&idx);
    let cache = model.forward_cached(x.view())?;
    let (l, d_out) = batch_loss_grad(model.d, cache.output(), &targets)?;
    let mut grad = model.zeros_like();
    model.backward(&cache, &d_out, &mut grad)?;
    Ok((l, grad))
}

/// Training-set order for one epoch; depends on the seed and epoch only.
pub fn epoch_permutation(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = states::state_rng(seed ^ 0x5348_5546_464c_4500, epoch as u64);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    perm
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_infidelity: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub points: Vec<CurvePoint>,
    /// Epoch whose parameters were kept (lowest validation loss).
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Lowest periodically evaluated validation infidelity and its epoch; this
    /// need not coincide with `best_epoch`.
    pub best_infidelity_epoch: usize,
    pub best_val_infidelity: f64,
    pub epochs_run: usize,
}

impl LearningCurve {
    /// Running minimum of the validation loss after each epoch.
    pub fn best_loss_history(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.points
            .iter()
            .map(|p| {
                best = best.min(p.val_loss);
                best
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub model: MlpModel,
    pub curve: LearningCurve,
    /// Mean validation infidelity of the returned parameters.
    pub val_infidelity: f64,
}

/// Trains a freshly initialized network (seeded by `cfg.seed`).
pub fn train(train_set: &Samples, val_set: &Samples, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let d = train_set.d();
    if val_set.d() != d || val_set.inputs.ncols() != train_set.inputs.ncols() {
        return Err(Error::DimensionMismatch("training and validation sets differ in shape".into()));
    }
    let n = train_set.inputs.ncols() / 2;
    let model = MlpModel::new(d, n, &cfg.hidden_layers, cfg.seed)?;
    train_from(model, train_set, val_set, cfg)
}

pub fn train_from(mut model: MlpModel, train_set: &Samples, val_set: &Samples, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let d = model.d;
    let mut adam = Adam::new(cfg.adam, model.n_params());
    let mut grad = model.zeros_like();
    let mut best = model.clone();
    let mut curve = LearningCurve {
        best_val_loss: f64::INFINITY,
        best_val_infidelity: f64::INFINITY,
        ..Default::default()
    };
    for epoch in 1..=cfg.max_epochs {
        let perm = epoch_permutation(train_set.len(), cfg.seed, epoch);
        let mut train_total = 0.0;
        for idx in perm.chunks(cfg.batch_size) {
            let (x, targets) = train_set.select(idx);
            let cache = model.forward_cached(x.view())?;
            let (l, d_out) = batch_loss_grad(d, cache.output(), &targets)?;
            if !l.is_finite() {
                return Err(Error::Numerical(format!("non-finite training loss at epoch {epoch}")));
            }
            train_total += l * idx.len() as f64;
            grad.params_mut().for_each(|g| *g = 0.0);
            model.backward(&cache, &d_out, &mut grad)?;
            adam.step(&mut model, &grad);
        }
        if !model.is_finite() {
            return Err(Error::Numerical(format!("non-finite parameters after epoch {epoch}")));
        }
        let val_loss = mean_loss(&model, val_set)?;
        if !val_loss.is_finite() {
            return Err(Error::Numerical(format!("non-finite validation loss at epoch {epoch}")));
        }
        let val_infidelity = if epoch % cfg.eval_every == 0 {
            let inf = infidelities(&model, val_set)?;
            let mean = inf.iter().sum::<f64>() / inf.len() as f64;
            if mean < curve.best_val_infidelity {
                curve.best_val_infidelity = mean;
                curve.best_infidelity_epoch = epoch;
            }
            Some(mean)
        } else {
            None
        };
        curve.points.push(CurvePoint {
            epoch,
            train_loss: train_total / train_set.len() as f64,
            val_loss,
            val_infidelity,
        });
        curve.epochs_run = epoch;
        if val_loss < curve.best_val_loss {
            curve.best_val_loss = val_loss;
            curve.best_epoch = epoch;
            best.clone_from(&model);
        }
        if epoch % 100 == 0 {
            log::info!("epoch {epoch}: train {:.3e} val {val_loss:.3e} best {:.3e}@{}", train_total / train_set.len() as f64, curve.best_val_loss, curve.best_epoch);
        }
        if epoch - curve.best_epoch >= cfg.patience {
            break;
        }
    }
    let inf = infidelities(&best, val_set)?;
    let val_infidelity = inf.iter().sum::<f64>() / inf.len() as f64;
    Ok(TrainedModel { model: best, curve, val_infidelity })
}
