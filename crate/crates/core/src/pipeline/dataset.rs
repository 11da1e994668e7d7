//! Dataset files: Hilbert–Schmidt states with their full-length trajectories.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Split};
use crate::container;
use crate::dynamics::{self, ObservableHistory, Trajectory};
use crate::error::{Error, Result};
use crate::nn::Samples;
use crate::operators::PotentialSpec;
use crate::states::{self, DensityMatrix};

pub const MAGIC: &str = "QMTOMO-DATASET";
pub const FORMAT_VERSION: u32 = 1;

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "QMTOMO_WORKERS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub d: usize,
    /// Fock dimension used for the evolution.
    pub dim: usize,
    pub potential: PotentialSpec,
    pub potential_descriptor: String,
    pub alpha: Option<f64>,
    pub gamma: f64,
    pub epsilon: Option<f64>,
    pub sigma: Option<f64>,
    pub dt: f64,
    pub n_points: usize,
    pub count: usize,
    pub seed: u64,
    pub rank: usize,
    pub split: Split,
    pub first_index: u64,
    pub config_fingerprint: String,
    pub payload_sha256: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub state: DensityMatrix,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub records: Vec<Record>,
}

/// Worker count: explicit value, else the environment override, else the
/// available parallelism.
pub fn resolve_workers(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse().ok()))
        .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
        .unwrap_or(1)
        .max(1)
}

/// Applies `f` to every index in `0..count` on `workers` threads and returns
/// the results in index order.
pub fn parallel_map<T, F>(count: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let workers = workers.clamp(1, count.max(1));
    if workers == 1 {
        return (0..count).map(&f).collect();
    }
    let chunk = count.div_ceil(workers);
    let f = &f;
    let parts: Vec<Result<Vec<T>>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let range = (w * chunk).min(count)..((w + 1) * chunk).min(count);
                s.spawn(move || range.map(f).collect::<Result<Vec<T>>>())
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(count);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn potential_fields(p: &PotentialSpec) -> (Option<f64>, Option<f64>, Option<f64>) {
    match *p {
        PotentialSpec::Quartic { alpha } => (Some(alpha), None, None),
        PotentialSpec::Harmonic => (None, None, None),
        PotentialSpec::DoubleGaussian { sigma_over_x0, epsilon_over_x0 } => {
            (p.alpha(), Some(epsilon_over_x0), Some(sigma_over_x0))
        }
    }
}

/// Evolves `x` and `x²` once for the configured scenario.
pub fn observable_history(cfg: &ExperimentConfig) -> Result<ObservableHistory> {
    let t = &cfg.trajectory;
    dynamics::converge_observables(&cfg.potential, &cfg.decoherence(), &cfg.simulation, cfg.d, t.n_points, t.dt)
}

/// Samples the states of `split` and computes their full-length trajectories.
pub fn generate_dataset(cfg: &ExperimentConfig, split: Split, workers: Option<usize>) -> Result<Dataset> {
    let history = observable_history(cfg)?;
    generate_with_history(cfg, split, &history, workers)
}

pub fn generate_with_history(
    cfg: &ExperimentConfig,
    split: Split,
    history: &ObservableHistory,
    workers: Option<usize>,
) -> Result<Dataset> {
    cfg.validate()?;
    let range = cfg.dataset.index_range(split);
    let first = range.start;
    let count = (range.end - range.start) as usize;
    let rank = cfg.rank();
    let records = parallel_map(count, resolve_workers(workers), |k| {
        let index = first + k as u64;
        let state = states::sample_hs_state(cfg.d, rank, cfg.dataset.seed, index);
        let traj = history
            .trajectory(&state)
            .map_err(|e| Error::Numerical(format!("state index {index}: {e}")))?;
        Ok(Record { state, u1: traj.u1, u2: traj.u2 })
    })?;
    let (alpha, epsilon, sigma) = potential_fields(&cfg.potential);
    let mut ds = Dataset {
        header: DatasetHeader {
            format_version: FORMAT_VERSION,
            d: cfg.d,
            dim: history.dim,
            potential: cfg.potential.clone(),
            potential_descriptor: cfg.potential.describe(),
            alpha,
            gamma: cfg.gamma,
            epsilon,
            sigma,
            dt: cfg.trajectory.dt,
            n_points: cfg.trajectory.n_points,
            count,
            seed: cfg.dataset.seed,
            rank,
            split,
            first_index: first,
            config_fingerprint: cfg.fingerprint(),
            payload_sha256: String::new(),
        },
        records,
    };
    ds.header.payload_sha256 = container::sha256_hex(&ds.payload());
    Ok(ds)
}

impl Dataset {
    fn payload(&self) -> Vec<u8> {
        let d2 = 2 * self.header.d * self.header.d;
        let mut values = Vec::with_capacity(self.records.len() * (d2 + 2 * self.header.n_points));
        for r in &self.records {
            values.extend(r.state.to_slots());
            values.extend_from_slice(&r.u1);
            values.extend_from_slice(&r.u2);
        }
        container::f64s_to_le(&values)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        container::write(path, MAGIC, &self.header, &self.payload())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let (header, payload): (DatasetHeader, _) = container::read(path, MAGIC)?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported dataset version {}", header.format_version)));
        }
        container::verify_checksum(&payload, &header.payload_sha256, "dataset")?;
        let values = container::le_to_f64s(&payload)?;
        let d2 = 2 * header.d * header.d;
        let per = d2 + 2 * header.n_points;
        if values.len() != per * header.count {
            return Err(Error::Format(format!(
                "payload holds {} values, header implies {}",
                values.len(),
                per * header.count
            )));
        }
        let records = values
            .chunks_exact(per)
            .map(|c| {
                let state = DensityMatrix::from_slots(header.d, &c[..d2]).map_err(|e| Error::Format(e.to_string()))?;
                let n = header.n_points;
                Ok(Record { state, u1: c[d2..d2 + n].to_vec(), u2: c[d2 + n..].to_vec() })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { header, records })
    }

    pub fn trajectory(&self, k: usize) -> Trajectory {
        let r = &self.records[k];
        Trajectory { dt: self.header.dt, u1: r.u1.clone(), u2: r.u2.clone(), initial_mean_x: f64::NAN, dim: self.header.dim }
    }

    /// Network samples using the first `n` points of `u1` and of `u2`.
    pub fn samples(&self, n: usize) -> Result<Samples> {
        if n == 0 || n > self.header.n_points {
            return Err(Error::DimensionMismatch(format!(
                "cannot slice {n} points from trajectories of length {}",
                self.header.n_points
            )));
        }
        let inputs = Array2::from_shape_fn((self.records.len(), 2 * n), |(i, j)| {
            let r = &self.records[i];
            if j < n {
                r.u1[j]
            } else {
                r.u2[j - n]
            }
        });
        Samples::new(inputs, self.records.iter().map(|r| r.state.clone()).collect())
    }

    /// Network samples for the prefix `[0, traj_len]`.
    pub fn samples_for_length(&self, traj_len: f64) -> Result<Samples> {
        let t = super::config::TrajectoryConfig { n_points: self.header.n_points, dt: self.header.dt };
        self.samples(t.slice_len(traj_len)?)
    }
}
