//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each exported function takes plain numbers and strings and returns a JSON
//! string; the pure-Rust counterparts are public so they can be tested natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use qmtomo::dynamics::{self, DecoherenceSpec, DimPolicy, IntegratorConfig};
use qmtomo::moments;
use qmtomo::operators::PotentialSpec;
use qmtomo::states::{self, DensityMatrix};
use qmtomo::{Error, Result};

/// Largest Fock dimension the demo will evolve in the browser.
pub const DEMO_DIM_CAP: usize = 64;

#[derive(Debug, Serialize)]
pub struct TrajectoryView {
    pub times: Vec<f64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub dim: usize,
    pub potential: String,
}

#[derive(Debug, Serialize)]
pub struct WignerView {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    /// `values[i][j]` is `W(x[i], p[j])`.
    pub values: Vec<Vec<f64>>,
    pub min: f64,
    pub max: f64,
    pub integral: f64,
}

#[derive(Debug, Serialize)]
pub struct SeriesView {
    pub n_t: usize,
    pub x2: Vec<f64>,
    /// Time at which the hierarchy blew up, if it did.
    pub blow_up: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct TruncationView {
    pub times: Vec<f64>,
    pub quantum: Vec<f64>,
    pub series: Vec<SeriesView>,
}

/// `kind` is `quartic`, `harmonic` or `double_gaussian`.
pub fn potential(kind: &str, alpha: f64, epsilon: f64) -> Result<PotentialSpec> {
    let spec = match kind {
        "quartic" => PotentialSpec::Quartic { alpha },
        "harmonic" => PotentialSpec::Harmonic,
        "double_gaussian" => PotentialSpec::double_gaussian_for_alpha(alpha, epsilon)?,
        other => return Err(Error::Config(format!("unknown potential '{other}'"))),
    };
    spec.validate()?;
    Ok(spec)
}

fn state(spec: &str) -> Result<DensityMatrix> {
    states::named_state(spec)?.ok_or_else(|| Error::Config(format!("state must be fock:n or coherent:x,p, got '{spec}'")))
}

pub fn trajectory_view(kind: &str, alpha: f64, epsilon: f64, gamma: f64, state_spec: &str, t_max: f64, dt: f64) -> Result<TrajectoryView> {
    let spec = potential(kind, alpha, epsilon)?;
    let eta = state(state_spec)?;
    if !(t_max > 0.0 && dt > 0.0 && t_max / dt <= 4000.0) {
        return Err(Error::Config("need t_max > 0, dt > 0 and at most 4000 steps".into()));
    }
    let n_points = (t_max / dt + 1e-9).floor() as usize + 1;
    let cfg = IntegratorConfig {
        dim_policy: DimPolicy::Ladder { start: 32.max(eta.dim()), cap: DEMO_DIM_CAP.max(2 * eta.dim()) },
        ..Default::default()
    };
    let traj = dynamics::make_trajectory(&eta, &spec, &DecoherenceSpec::new(gamma)?, &cfg, n_points, dt)?;
    Ok(TrajectoryView { times: traj.times(), u1: traj.u1, u2: traj.u2, dim: traj.dim, potential: spec.describe() })
}

pub fn wigner_view(state_spec: &str, half_width: f64, points: usize) -> Result<WignerView> {
    if !(half_width > 0.0) || !(2..=201).contains(&points) {
        return Err(Error::Config("need half_width > 0 and 2..=201 points".into()));
    }
    let eta = state(state_spec)?;
    let axis = states::uniform_axis(-half_width, half_width, points);
    let grid = states::wigner_grid(&eta, &axis, &axis);
    let values = (0..points).map(|i| grid.values.row(i).iter().copied().collect()).collect();
    Ok(WignerView { x: grid.x_axis.clone(), p: grid.p_axis.clone(), values, min: grid.min(), max: grid.max(), integral: grid.integral() })
}

pub fn truncation_view(alpha: f64, fock: usize, orders: &[usize], t_max: f64) -> Result<TruncationView> {
    let eta = DensityMatrix::fock(fock + 1, fock)?;
    let rep = moments::truncation_error_report(alpha, &eta, orders, t_max, 0.05)?;
    let series = rep
        .series
        .iter()
        .map(|s| SeriesView { n_t: s.n_t, x2: s.x2_truncated.clone(), blow_up: s.instability.map(|(t, _)| t) })
        .collect();
    Ok(TruncationView { times: rep.times, quantum: rep.x2_quantum, series })
}

fn to_js<T: Serialize>(value: Result<T>) -> std::result::Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

/// Mean-position shift and variance of a state, as JSON.
#[wasm_bindgen]
pub fn simulate(
    kind: &str,
    alpha: f64,
    epsilon: f64,
    gamma: f64,
    state_spec: &str,
    t_max: f64,
    dt: f64,
) -> std::result::Result<String, JsError> {
    to_js(trajectory_view(kind, alpha, epsilon, gamma, state_spec, t_max, dt))
}

#[wasm_bindgen]
pub fn wigner(state_spec: &str, half_width: f64, points: usize) -> std::result::Result<String, JsError> {
    to_js(wigner_view(state_spec, half_width, points))
}

/// `orders` is a comma-separated list of truncation orders.
#[wasm_bindgen]
pub fn truncation(alpha: f64, fock: usize, orders: &str, t_max: f64) -> std::result::Result<String, JsError> {
    let parsed: std::result::Result<Vec<usize>, _> = orders.split(',').map(|s| s.trim().parse()).collect();
    let orders = parsed.map_err(|_| JsError::new("orders must be a comma-separated list of integers"))?;
    to_js(truncation_view(alpha, fock, &orders, t_max))
}
