//! Open-system evolution under `dρ/dt = -i[H, ρ] - Γ[x, [x, ρ]]` and the
//! position trajectories `u1(t) = <x>(t) - <x>(0)`, `u2(t) = Var x(t)`.
//!
//! Two routes produce trajectories. The Schrödinger route integrates the density
//! matrix of one state. The Heisenberg route evolves `x` and `x²` once under the
//! adjoint generator and reads every state's trajectory off the top-left `d x d`
//! blocks, which is how datasets are generated. Without decoherence both routes
//! can use the Hamiltonian eigenbasis instead of a Runge–Kutta integration.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, I};
use crate::ode::{self, Accept, Stats, Tolerances};
use crate::operators::{self, OperatorMatrix, PotentialSpec};
use crate::states::DensityMatrix;

/// Trace drift beyond which a run is rejected outright.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-6;

/// Position-measurement decoherence rate `Γ >= 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoherenceSpec {
    pub gamma: f64,
}

impl DecoherenceSpec {
    pub fn new(gamma: f64) -> Result<Self> {
        let s = Self { gamma };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Domain(format!("decoherence rate must be finite and >= 0, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// How the Fock truncation `D` is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DimPolicy {
    Fixed(usize),
    /// Double from `start` until two successive dimensions agree, failing past `cap`.
    Ladder { start: usize, cap: usize },
}

impl Default for DimPolicy {
    fn default() -> Self {
        DimPolicy::Ladder { start: 32, cap: 512 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    RungeKutta,
    /// Exact propagation in the Hamiltonian eigenbasis; only valid for `Γ = 0`.
    Spectral,
    /// Spectral when `Γ = 0`, Runge–Kutta otherwise.
    #[default]
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Upper bound on the internal step; unbounded when absent.
    pub max_step: Option<f64>,
    pub dim_policy: DimPolicy,
    pub method: Method,
    /// Relative agreement required between `D` and `2D`.
    pub convergence_tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-11,
            max_step: None,
            dim_policy: DimPolicy::default(),
            method: Method::Auto,
            convergence_tol: 1e-6,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0 && self.max_step.is_none_or(|h| h > 0.0) && self.convergence_tol > 0.0) {
            return Err(Error::Config("integrator tolerances and max_step must be positive".into()));
        }
        match self.dim_policy {
            DimPolicy::Fixed(0) => Err(Error::Config("fixed dimension must be positive".into())),
            DimPolicy::Ladder { start, cap } if start == 0 || cap < start => {
                Err(Error::Config(format!("dimension ladder start {start} / cap {cap} is inconsistent")))
            }
            _ => Ok(()),
        }
    }

    fn tolerances(&self) -> Tolerances {
        Tolerances { rel: self.rel_tol, abs: self.abs_tol, max_step: self.max_step.unwrap_or(f64::INFINITY), ..Default::default() }
    }

    fn use_spectral(&self, dec: &DecoherenceSpec) -> Result<bool> {
        match self.method {
            Method::RungeKutta => Ok(false),
            Method::Auto => Ok(dec.gamma == 0.0),
            Method::Spectral if dec.gamma == 0.0 => Ok(true),
            Method::Spectral => Err(Error::Config("spectral propagation requires gamma = 0".into())),
        }
    }
}

/// Position mean displacement and variance sampled every `dt` from `t = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    /// `<x>(0)`, so that absolute moments can be recovered.
    pub initial_mean_x: f64,
    /// Fock dimension used for the evolution.
    pub dim: usize,
}

impl Trajectory {
    pub fn n_points(&self) -> usize {
        self.u1.len()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_points()).map(|k| k as f64 * self.dt).collect()
    }

    /// Network input of length `2N`: the first `N` samples of `u1` then of `u2`.
    pub fn features(&self, n: usize) -> Result<Vec<f64>> {
        if n > self.n_points() {
            return Err(Error::DimensionMismatch(format!("need {n} samples, trajectory has {}", self.n_points())));
        }
        let mut f = Vec::with_capacity(2 * n);
        f.extend_from_slice(&self.u1[..n]);
        f.extend_from_slice(&self.u2[..n]);
        Ok(f)
    }

    pub fn max_abs_diff(&self, other: &Trajectory) -> f64 {
        let d1 = self.u1.iter().zip(&other.u1).map(|(a, b)| (a - b).abs());
        let d2 = self.u2.iter().zip(&other.u2).map(|(a, b)| (a - b).abs());
        d1.chain(d2).fold(0.0, f64::max)
    }
}

/// Reference form of the Lindblad right-hand side, `-i[H, ρ] - Γ[x, [x, ρ]]`.
pub fn liouvillian_apply(
    rho: &DensityMatrix,
    h: &OperatorMatrix,
    x: &OperatorMatrix,
    dec: &DecoherenceSpec,
) -> Result<CMatrix> {
    let n = rho.dim();
    if h.dim() != n || x.dim() != n {
        return Err(Error::DimensionMismatch(format!("state {n}, H {}, x {}", h.dim(), x.dim())));
    }
    dec.validate()?;
    let r = rho.matrix();
    let (hm, xm) = (h.matrix(), x.matrix());
    let comm = |a: &CMatrix, b: &CMatrix| linalg::matmul(a, b) - linalg::matmul(b, a);
    let mut out = comm(hm, r) * (-I);
    if dec.gamma > 0.0 {
        out -= comm(xm, &comm(xm, r)) * linalg::real(dec.gamma);
    }
    Ok(out)
}

/// `y -> K y + (K y)^† + 2Γ x y x` for Hermitian `y`; with `K = -iH - Γx²`
/// this is the Lindblad generator, with `K = iH - Γx²` its adjoint.
struct Generator {
    n: usize,
    k: CMatrix,
    x: CMatrix,
    gamma: f64,
}

impl Generator {
    fn new(h: &CMatrix, x: &CMatrix, gamma: f64, adjoint: bool) -> Self {
        let n = h.nrows();
        let sign = if adjoint { I } else { -I };
        let mut k = h * sign;
        if gamma > 0.0 {
            k -= linalg::matmul(x, x) * linalg::real(gamma);
        }
        Self { n, k, x: x.clone(), gamma }
    }

    fn apply(&self, y: &[Complex64], out: &mut [Complex64], scratch: &mut [Complex64]) {
        let n = self.n;
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        linalg::gemm_square(n, one, self.k.as_slice(), y, zero, out);
        if self.gamma > 0.0 {
            linalg::gemm_square(n, one, self.x.as_slice(), y, zero, scratch);
            linalg::gemm_square(n, linalg::real(self.gamma), scratch, self.x.as_slice(), one, out);
        }
        // out <- out + out^†, exactly Hermitian
        for j in 0..n {
            let d = j + j * n;
            out[d] = Complex64::new(2.0 * out[d].re, 0.0);
            for i in (j + 1)..n {
                let (a, b) = (out[i + j * n], out[j + i * n]);
                out[i + j * n] = a + b.conj();
                out[j + i * n] = b + a.conj();
            }
        }
    }
}

fn trace_of(y: &[Complex64], n: usize) -> f64 {
    (0..n).map(|i| y[i + i * n].re).sum()
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvolutionStats {
    pub stats: Stats,
    /// Largest `|tr ρ - 1|` seen on an accepted step before renormalization.
    pub max_trace_drift: f64,
}

/// Runge–Kutta evolution of `eta` (already in its working dimension), calling
/// `observe(k, t, ρ(t))` at every grid point with a Hermitian, unit-trace `ρ`.
pub fn evolve_with<O>(
    eta: &DensityMatrix,
    spec: &PotentialSpec,
    dec: &DecoherenceSpec,
    cfg: &IntegratorConfig,
    t_grid: &[f64],
    mut observe: O,
) -> Result<EvolutionStats>
where
    O: FnMut(usize, f64, &CMatrix) -> Result<()>,
{
    dec.validate()?;
    cfg.validate()?;
    let n = eta.dim();
    let h = operators::build_hamiltonian(spec, n)?;
    let x = operators::build_position(n)?;
    let gen = Generator::new(h.matrix(), x.matrix(), dec.gamma, false);
    let mut scratch = vec![Complex64::new(0.0, 0.0); n * n];
    let mut max_drift = 0.0f64;
    let mut snapshot = CMatrix::zeros(n, n);
    let stats = ode::integrate(
        |_, y, dy| gen.apply(linalg::as_complex(y), linalg::as_complex_mut(dy), &mut scratch),
        linalg::as_reals(eta.matrix().as_slice()),
        t_grid,
        &cfg.tolerances(),
        |k, t, y| {
            let z = linalg::as_complex(y);
            let tr = trace_of(z, n);
            snapshot.as_mut_slice().copy_from_slice(z);
            let rho = linalg::hermitize(&snapshot) / linalg::real(tr);
            observe(k, t, &rho)
        },
        |t, y| {
            let z = linalg::as_complex_mut(y);
            let drift = (trace_of(z, n) - 1.0).abs();
            max_drift = max_drift.max(drift);
            if drift > TRACE_DRIFT_LIMIT {
                return Err(Error::Accuracy(format!("trace drift {drift:e} at t = {t}")));
            }
            if drift > 1e-12 {
                let s = 1.0 / (1.0 + (trace_of(z, n) - 1.0));
                z.iter_mut().for_each(|v| *v *= s);
                return Ok(Accept::Modified);
            }
            Ok(Accept::Unchanged)
        },
    )?;
    Ok(EvolutionStats { stats, max_trace_drift: max_drift })
}

#[derive(Clone, Debug)]
pub struct Evolution {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub stats: EvolutionStats,
}

/// Density matrices on `t_grid`, integrated with the Runge–Kutta scheme.
pub fn evolve(
    eta: &DensityMatrix,
    spec: &PotentialSpec,
    dec: &DecoherenceSpec,
    cfg: &IntegratorConfig,
    t_grid: &[f64],
) -> Result<Evolution> {
    let mut states = Vec::with_capacity(t_grid.len());
    let stats = evolve_with(eta, spec, dec, cfg, t_grid, |_, _, rho| {
        states.push(DensityMatrix::from_matrix_unchecked(rho.clone()));
        Ok(())
    })?;
    Ok(Evolution { times: t_grid.to_vec(), states, stats })
}

/// Sampling times `0, dt, ..., (n_points - 1) dt`.
pub fn time_grid(n_points: usize, dt: f64) -> Result<Vec<f64>> {
    if n_points < 2 || !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("need n_points >= 2 and dt > 0, got {n_points}, {dt}")));
    }
    Ok((0..n_points).map(|k| k as f64 * dt).collect())
}

/// Eigen-decomposed Hamiltonian with `x` and `x²` in its eigenbasis.
struct Spectral {
    energies: Vec<f64>,
    vectors: CMatrix,
    x: CMatrix,
    x2: CMatrix,
}

impl Spectral {
    fn new(spec: &PotentialSpec, dim: usize) -> Result<Self> {
        let h = operators::build_hamiltonian(spec, dim)?;
        let (e, v) = linalg::eigh(h.matrix());
        let x = operators::build_position(dim)?;
        let xe = linalg::matmul(&v.adjoint(), &linalg::matmul(x.matrix(), &v));
        let x2 = linalg::matmul(&xe, &xe);
        Ok(Self { energies: e.iter().copied().collect(), vectors: v, x: xe, x2 })
    }

    fn phases(&self, t: f64) -> Vec<Complex64> {
        self.energies.iter().map(|&e| Complex64::from_polar(1.0, -e * t)).collect()
    }
}

fn trajectory_from_means(means: Vec<(f64, f64)>, dt: f64, dim: usize) -> Result<Trajectory> {
    let x0 = means[0].0;
    let mut u1 = Vec::with_capacity(means.len());
    let mut u2 = Vec::with_capacity(means.len());
    for (k, (mx, mx2)) in means.into_iter().enumerate() {
        let var = mx2 - mx * mx;
        if !var.is_finite() {
            return Err(Error::Numerical(format!("non-finite variance at sample {k}")));
        }
        u1.push(if k == 0 { 0.0 } else { mx - x0 });
        u2.push(var);
    }
    Ok(Trajectory { dt, u1, u2, initial_mean_x: x0, dim })
}

/// Trajectory of `eta` at a fixed Fock dimension `dim`.
pub fn make_trajectory_in(
    eta: &DensityMatrix,
    spec: &PotentialSpec,
    dec: &DecoherenceSpec,
    cfg: &IntegratorConfig,
    dim: usize,
    n_points: usize,
    dt: f64,
) -> Result<Trajectory> {
    let grid = time_grid(n_points, dt)?;
    let rho = eta.embed(dim)?;
    let mut means = Vec::with_capacity(n_points);
    if cfg.use_spectral(dec)? {
        let sp = Spectral::new(spec, dim)?;
        let r = linalg::matmul(&sp.vectors.adjoint(), &linalg::matmul(rho.matrix(), &sp.vectors));
        for &t in &grid {
            let ph = sp.phases(t);
            let (mut mx, mut mx2) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
            for j in 0..dim {
                for i in 0..dim {
                    // ρ_ij(t) = ρ_ij e^{-i(E_i - E_j)t}; <A> = Σ ρ_ij(t) A_ji
                    let rij = r[(i, j)] * ph[i] * ph[j].conj();
                    mx += rij * sp.x[(j, i)];
                    mx2 += rij * sp.x2[(j, i)];
                }
            }
            means.push((mx.re, mx2.re));
        }
    } else {
        let x = operators::build_position(dim)?;
        let x2 = linalg::matmul(x.matrix(), x.matrix());
        evolve_with(&rho, spec, dec, cfg, &grid, |_, _, r| {
            means.push((linalg::trace_product(r, x.matrix()).re, linalg::trace_product(r, &x2).re));
            Ok(())
        })?;
    }
    trajectory_from_means(means, dt, dim)
}

fn ladder(cfg: &IntegratorConfig, d: usize) -> Result<Option<(usize, usize)>> {
    cfg.validate()?;
    match cfg.dim_policy {
        DimPolicy::Fixed(dim) if dim < d => {
            Err(Error::InvalidDimension(format!("fixed dimension {dim} is smaller than the state dimension {d}")))
        }
        DimPolicy::Fixed(_) => Ok(None),
        DimPolicy::Ladder { start, cap } => Ok(Some((start.max(d), cap))),
    }
}

/// Smallest ladder dimension `D` whose trajectory agrees with the one at `2D`
/// to `convergence_tol * max(1, max |u2|)` up to `horizon`.
pub fn converge_dimension(
    eta: &DensityMatrix,
    spec: &PotentialSpec,
    dec: &DecoherenceSpec,
    cfg: &IntegratorConfig,
    horizon: f64,
    dt: f64,
) -> Result<usize> {
    let Some((start, cap)) = ladder(cfg, eta.dim())? else {
        let DimPolicy::Fixed(dim) = cfg.dim_policy else { unreachable!() };
        return Ok(dim);
    };
    let n_points = (horizon / dt + 1e-9).floor() as usize + 1;
    let mut dim = start;
    let mut current = make_trajectory_in(eta, spec, dec, cfg, dim, n_points, dt)?;
    let mut last_diff = f64::INFINITY;
    while 2 * dim <= cap {
        let next = make_trajectory_in(eta, spec, dec, cfg, 2 * dim, n_points, dt)?;
        let scale = next.u2.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        last_diff = current.max_abs_diff(&next);
        log::debug!("dimension {dim} vs {}: difference {last_diff:e}", 2 * dim);
        if last_diff < cfg.convergence_tol * scale {
            return Ok(dim);
        }
        dim *= 2;
        current = next;
    }
    Err(Error::NonConvergence { cap, last_diff })
}

/// Trajectory of `eta`, with the dimension chosen by `cfg.dim_policy`.
pub fn make_trajectory(
    eta: &DensityMatrix,
    spec: &PotentialSpec,
    dec: &DecoherenceSpec,
    cfg: &IntegratorConfig,
    n_points: usize,
    dt: f64,
) -> Result<Trajectory> {
    let horizon = (n_points.saturating_sub(1)) as f64 * dt;
    let dim = converge_dimension(eta, spec, dec, cfg, horizon, dt)?;
    make_trajectory_in(eta, spec, dec, cfg, dim, n_points, dt)
}

/// Top-left `d x d` blocks of the Heisenberg-picture `x(t)` and `x²(t)`.
///
/// For any state supported on the first `d` Fock levels,
/// `<x>(t) = tr(η X_t)` and `<x²>(t) = tr(η X2_t)`.
#[derive(Clone, Debug)]
pub struct ObservableHistory {
    pub d: usize,
    pub dim: usize,
    pub dt: f64,
    pub x: Vec<CMatrix>,
    pub x2: Vec<CMatrix>,
}

fn block_expectation(eta: &CMatrix, a: &CMatrix) -> f64 {
    linalg::trace_product(eta, a).re
}

impl ObservableHistory {
    pub fn n_points(&self) -> usize {
        self.x.len()
    }

    pub fn trajectory(&self, eta: &DensityMatrix) -> Result<Trajectory> {
        if eta.dim() != self.d {
            return Err(Error::DimensionMismatch(format!("state dimension {} vs blocks {}", eta.dim(), self.d)));
        }
        let m = eta.matrix();
        let means = self.x.iter().zip(&self.x2).map(|(x, x2)| (block_expectation(m, x), block_expectation(m, x2))).collect();
        trajectory_from_means(means, self.dt, self.dim)
    }

    /// Upper bound on the trajectory difference against `other` over all
    /// states on the first `d` levels.
    pub fn max_state_deviation(&self, other: &ObservableHistory) -> f64 {
        let d = self.d as f64;
        let mut worst = 0.0f64;
        for k in 0..self.n_points() {
            let dx = (&self.x[k] - &other.x[k]).camax();
            let dx2 = (&self.x2[k] - &other.x2[k]).camax();
            let xmax = self.x[k].norm().max(other.x[k].norm());
            worst = worst.max(d * dx).max(d * (dx2 + 2.0 * xmax * dx));
        }
        worst
    }

    /// Bound on `|u2|` over all states, used to scale the convergence tolerance.
    pub fn variance_scale(&self) -> f64 {
        self.x2.iter().fold(1.0f64, |m, a| m.max(a.norm()))
    }
}

/// Evolves `x` and `x²` under the adjoint generator in dimension `dim`.
pub fn propagate_observables(
    spec: &PotentialSpec,
    dec: &DecoherenceSpec,
    cfg: &IntegratorConfig,
    dim: usize,
    d: usize,
    n_points: usize,
    dt: f64,
) -> Result<ObservableHistory> {
    dec.validate()?;
    cfg.validate()?;
    if d == 0 || d > dim {
        return Err(Error::InvalidDimension(format!("block size {d} must be in 1..={dim}")));
    }
    let grid = time_grid(n_points, dt)?;
    let mut xs = Vec::with_capacity(n_points);
    let mut x2s = Vec::with_capacity(n_points);
    if cfg.use_spectral(dec)? {
        let sp = Spectral::new(spec, dim)?;
        let l = sp.vectors.rows(0, d).into_owned();
        let lt = l.adjoint();
        for &t in &grid {
            let ph = sp.phases(t);
            // A(t) = V (A' ∘ Φ) V^† with Φ_ij = e^{i(E_i - E_j)t}
            let rotate = |a: &CMatrix| {
                let mut m = a.clone();
                for j in 0..dim {
                    for i in 0..dim {
                        m[(i, j)] *= ph[i].conj() * ph[j];
                    }
                }
                linalg::matmul(&linalg::matmul(&l, &m), &lt)
            };
            xs.push(linalg::hermitize(&rotate(&sp.x)));
            x2s.push(linalg::hermitize(&rotate(&sp.x2)));
        }
    } else {
        let h = operators::build_hamiltonian(spec, dim)?;
        let x = operators::build_position(dim)?;
        let gen = Generator::new(h.matrix(), x.matrix(), dec.gamma, true);
        let nn = dim * dim;
        let mut y0 = Vec::with_capacity(2 * nn);
        y0.extend_from_slice(x.matrix().as_slice());
        y0.extend_from_slice(linalg::matmul(x.matrix(), x.matrix()).as_slice());
        let mut scratch = vec![Complex64::new(0.0, 0.0); nn];
        let block = |z: &[Complex64]| CMatrix::from_fn(d, d, |i, j| z[i + j * dim]);
        ode::integrate(
            |_, y, dy| {
                let (z, dz) = (linalg::as_complex(y), linalg::as_complex_mut(dy));
                let (dz1, dz2) = dz.split_at_mut(nn);
                gen.apply(&z[..nn], dz1, &mut scratch);
                gen.apply(&z[nn..], dz2, &mut scratch);
            },
            linalg::as_reals(&y0),
            &grid,
            &cfg.tolerances(),
            |_, _, y| {
                let z = linalg::as_complex(y);
                xs.push(block(&z[..nn]));
                x2s.push(block(&z[nn..]));
                Ok(())
            },
            |_, _| Ok(Accept::Unchanged),
        )?;
    }
    Ok(ObservableHistory { d, dim, dt, x: xs, x2: x2s })
}

/// Observable blocks at the smallest converged ladder dimension.
pub fn converge_observables(
    spec: &PotentialSpec,
    dec: &DecoherenceSpec,
    cfg: &IntegratorConfig,
    d: usize,
    n_points: usize,
    dt: f64,
) -> Result<ObservableHistory> {
    let Some((start, cap)) = ladder(cfg, d)? else {
        let DimPolicy::Fixed(dim) = cfg.dim_policy else { unreachable!() };
        return propagate_observables(spec, dec, cfg, dim, d, n_points, dt);
    };
    let mut dim = start;
    let mut current = propagate_observables(spec, dec, cfg, dim, d, n_points, dt)?;
    let mut last_diff = f64::INFINITY;
    while 2 * dim <= cap {
        let next = propagate_observables(spec, dec, cfg, 2 * dim, d, n_points, dt)?;
        last_diff = current.max_state_deviation(&next);
        log::debug!("observable blocks at {dim} vs {}: deviation {last_diff:e}", 2 * dim);
        if last_diff < cfg.convergence_tol * next.variance_scale() {
            return Ok(current);
        }
        dim *= 2;
        current = next;
    }
    Err(Error::NonConvergence { cap, last_diff })
}
