//! Density matrices: Hilbert–Schmidt sampling, Uhlmann fidelity, Weyl-ordered
//! moments and Wigner functions.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::moments::MomentVector;
use crate::operators::{self, OperatorMatrix};

/// Eigenvalues down to this value are treated as numerical noise and clipped.
pub const EIGEN_FLOOR: f64 = -1e-8;

/// Positive semidefinite, unit-trace matrix in the Fock basis.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    /// Validates Hermiticity, trace and positivity to `1e-10`.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let rho = Self(matrix);
        rho.validate(1e-10)?;
        Ok(rho)
    }

    /// Wraps a matrix without checks; for values that are valid by construction.
    pub fn from_matrix_unchecked(matrix: CMatrix) -> Self {
        Self(matrix)
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let m = &self.0;
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::InvalidState(format!("density matrix must be square, got {:?}", m.shape())));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidState("non-finite entries".into()));
        }
        let herm = linalg::hermiticity_defect(m);
        if herm > tol {
            return Err(Error::InvalidState(format!("not Hermitian (defect {herm:e})")));
        }
        let tr = linalg::trace(m);
        if (tr - linalg::real(1.0)).norm() > tol {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min = self.min_eigenvalue();
        if min < -tol {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    pub fn fock(dim: usize, n: usize) -> Result<Self> {
        if n >= dim {
            return Err(Error::InvalidDimension(format!("Fock level {n} outside dimension {dim}")));
        }
        let mut m = CMatrix::zeros(dim, dim);
        m[(n, n)] = linalg::real(1.0);
        Ok(Self(m))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(CMatrix::identity(dim, dim) * linalg::real(1.0 / dim as f64))
    }

    /// Pure state from (unnormalized) Fock amplitudes.
    pub fn pure(amplitudes: &[Complex64]) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|c| c.norm_sqr()).sum();
        if !(norm > 0.0) {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let d = amplitudes.len();
        Ok(Self(CMatrix::from_fn(d, d, |i, j| amplitudes[i] * amplitudes[j].conj() / norm)))
    }

    /// Coherent state with means `<x>` and `<p>`, truncated to `dim` levels and renormalized.
    pub fn coherent(dim: usize, mean_x: f64, mean_p: f64) -> Result<Self> {
        let beta = Complex64::new(mean_x / 2.0, mean_p / 2.0);
        let mut amps = Vec::with_capacity(dim);
        let mut c = Complex64::new((-beta.norm_sqr() / 2.0).exp(), 0.0);
        for n in 0..dim {
            if n > 0 {
                c = c * beta / (n as f64).sqrt();
            }
            amps.push(c);
        }
        Self::pure(&amps)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    /// Zero-pads into a `dim x dim` Fock space.
    pub fn embed(&self, dim: usize) -> Result<Self> {
        let d = self.dim();
        if dim < d {
            return Err(Error::InvalidDimension(format!("cannot embed dimension {d} into {dim}")));
        }
        let mut m = CMatrix::zeros(dim, dim);
        m.view_mut((0, 0), (d, d)).copy_from(&self.0);
        Ok(Self(m))
    }

    /// `tr(rho A)`; `A` must have the same dimension.
    pub fn expectation(&self, op: &OperatorMatrix) -> Result<Complex64> {
        if op.dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!("operator {} vs state {}", op.dim(), self.dim())));
        }
        Ok(linalg::trace_product(&self.0, op.matrix()))
    }

    pub fn purity(&self) -> f64 {
        linalg::trace_product(&self.0, &self.0).re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::eigh(&self.0).0.iter().copied().collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// `2 d^2` reals: row-major real parts, then row-major imaginary parts.
    pub fn to_slots(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; 2 * d * d];
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = self.0[(i, j)].re;
                out[d * d + i * d + j] = self.0[(i, j)].im;
            }
        }
        out
    }

    /// Inverse of [`to_slots`](Self::to_slots); the result is validated.
    pub fn from_slots(d: usize, slots: &[f64]) -> Result<Self> {
        if slots.len() != 2 * d * d {
            return Err(Error::DimensionMismatch(format!("expected {} slots, got {}", 2 * d * d, slots.len())));
        }
        let m = CMatrix::from_fn(d, d, |i, j| Complex64::new(slots[i * d + j], slots[d * d + i * d + j]));
        let rho = Self(m);
        rho.validate(1e-9)?;
        Ok(rho)
    }
}

/// Parses `fock:n` or `coherent:x,p`; `None` for any other form.
///
/// Coherent states get enough Fock levels to hold the Poisson tail.
pub fn named_state(spec: &str) -> Result<Option<DensityMatrix>> {
    if let Some(n) = spec.strip_prefix("fock:") {
        let n: usize = n.trim().parse().map_err(|_| Error::Config(format!("bad Fock index in '{spec}'")))?;
        return DensityMatrix::fock(n + 1, n).map(Some);
    }
    if let Some(rest) = spec.strip_prefix("coherent:") {
        let parts: Vec<f64> = rest
            .split(',')
            .map(|v| v.trim().parse().map_err(|_| Error::Config(format!("bad coherent amplitude in '{spec}'"))))
            .collect::<Result<_>>()?;
        let [x, p] = parts[..] else {
            return Err(Error::Config("coherent state needs `coherent:x,p`".into()));
        };
        let nbar = (x * x + p * p) / 4.0;
        let dim = (nbar + 10.0 * nbar.sqrt() + 20.0).ceil() as usize;
        return DensityMatrix::coherent(dim, x, p).map(Some);
    }
    Ok(None)
}

/// JSON file form of a density matrix.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityMatrixFile {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl DensityMatrixFile {
    pub fn from_state(rho: &DensityMatrix) -> Self {
        let d = rho.dim();
        let m = rho.matrix();
        Self {
            re: (0..d).map(|i| (0..d).map(|j| m[(i, j)].re).collect()).collect(),
            im: (0..d).map(|i| (0..d).map(|j| m[(i, j)].im).collect()).collect(),
        }
    }

    pub fn to_state(&self) -> Result<DensityMatrix> {
        let d = self.re.len();
        if self.im.len() != d || self.re.iter().chain(&self.im).any(|row| row.len() != d) {
            return Err(Error::Format("density matrix file must hold two square d x d arrays".into()));
        }
        DensityMatrix::new(CMatrix::from_fn(d, d, |i, j| Complex64::new(self.re[i][j], self.im[i][j])))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSampleSpec {
    pub d: usize,
    pub count: usize,
    pub seed: u64,
    /// Rank of the sampled states; `d` gives the Hilbert–Schmidt ensemble.
    pub rank: usize,
    /// Global index of the first state; state `i` depends only on `seed` and `offset + i`.
    pub offset: u64,
}

impl StateSampleSpec {
    pub fn full_rank(d: usize, count: usize, seed: u64) -> Self {
        Self { d, count, seed, rank: d, offset: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::InvalidDimension(format!("state dimension must be at least 2, got {}", self.d)));
        }
        if self.rank < 1 || self.rank > self.d {
            return Err(Error::Domain(format!("rank {} outside 1..={}", self.rank, self.d)));
        }
        Ok(())
    }
}

/// Random stream for global state index `index`: ChaCha20 keyed by `seed`,
/// with the index as stream id, so any state can be drawn on its own.
pub fn state_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `G G^dagger / tr(G G^dagger)` for a `d x rank` complex Ginibre matrix `G`.
pub fn sample_hs_state(d: usize, rank: usize, seed: u64, index: u64) -> DensityMatrix {
    let mut rng = state_rng(seed, index);
    let g = CMatrix::from_fn(d, rank, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex64::new(re, im)
    });
    let gg = linalg::hermitize(&(&g * g.adjoint()));
    let tr = linalg::trace(&gg).re;
    DensityMatrix::from_matrix_unchecked(gg / linalg::real(tr))
}

pub fn sample_hs_states(spec: &StateSampleSpec) -> Result<Vec<DensityMatrix>> {
    spec.validate()?;
    Ok((0..spec.count as u64)
        .map(|i| sample_hs_state(spec.d, spec.rank, spec.seed, spec.offset + i))
        .collect())
}

fn check_state_input(rho: &DensityMatrix, name: &str) -> Result<()> {
    let herm = linalg::hermiticity_defect(rho.matrix());
    if herm > 1e-8 {
        return Err(Error::InvalidState(format!("{name} is not Hermitian (defect {herm:e})")));
    }
    Ok(())
}

/// Uhlmann fidelity `tr sqrt(sqrt(eta) eta_est sqrt(eta))`, in `[0, 1]`.
pub fn fidelity(eta: &DensityMatrix, eta_est: &DensityMatrix) -> Result<f64> {
    if eta.dim() != eta_est.dim() {
        return Err(Error::DimensionMismatch(format!("fidelity between {} and {}", eta.dim(), eta_est.dim())));
    }
    check_state_input(eta, "eta")?;
    check_state_input(eta_est, "eta_est")?;
    let root = linalg::sqrt_psd(eta.matrix(), EIGEN_FLOOR)
        .map_err(|v| Error::InvalidState(format!("eta has eigenvalue {v:e}")))?;
    let inner = linalg::matmul(&linalg::matmul(&root, eta_est.matrix()), &root);
    let (values, _) = linalg::eigh(&inner);
    if let Some(&bad) = values.iter().find(|&&v| v < EIGEN_FLOOR) {
        return Err(Error::InvalidState(format!("eta_est has eigenvalue {bad:e}")));
    }
    let f: f64 = values.iter().map(|&v| v.max(0.0).sqrt()).sum();
    Ok(f.clamp(0.0, 1.0))
}

pub fn infidelity(eta: &DensityMatrix, eta_est: &DensityMatrix) -> Result<f64> {
    Ok(1.0 - fidelity(eta, eta_est)?)
}

/// Weyl-ordered central moments `G^{a,b}` for `2 <= a + b <= max_order` plus the
/// means. The state is padded by `max_order` extra levels so every operator
/// product is exact.
pub fn weyl_moments(rho: &DensityMatrix, max_order: usize) -> Result<MomentVector> {
    weyl_moments_in(rho, max_order, rho.dim() + max_order)
}

/// As [`weyl_moments`], evaluated in an explicit Fock dimension.
pub fn weyl_moments_in(rho: &DensityMatrix, max_order: usize, dim: usize) -> Result<MomentVector> {
    if max_order < 1 {
        return Err(Error::Domain("moment order must be at least 1".into()));
    }
    if dim < rho.dim() + max_order {
        return Err(Error::TruncationBias(format!(
            "dimension {dim} too small for order-{max_order} moments of a {}-level state (need {})",
            rho.dim(),
            rho.dim() + max_order
        )));
    }
    let state = rho.embed(dim)?;
    let x = operators::build_position(dim)?.into_matrix();
    let p = operators::build_momentum(dim)?.into_matrix();
    let mean_x = linalg::trace_product(state.matrix(), &x).re;
    let mean_p = linalg::trace_product(state.matrix(), &p).re;
    let id = CMatrix::identity(dim, dim);
    let xc = &x - &id * linalg::real(mean_x);
    let pc = &p - &id * linalg::real(mean_p);

    // symmetrized products W(a, b) by total order:
    // W(a,b) = a/(2n) {P, W(a-1,b)} + b/(2n) {X, W(a,b-1)}
    let mut moments = MomentVector::zeros(max_order.max(2), mean_x, mean_p);
    let mut prev: Vec<CMatrix> = vec![id];
    for n in 1..=max_order {
        let mut cur = Vec::with_capacity(n + 1);
        for a in 0..=n {
            let b = n - a;
            let mut w = CMatrix::zeros(dim, dim);
            if a > 0 {
                let lower = &prev[a - 1];
                let anti = linalg::matmul(&pc, lower) + linalg::matmul(lower, &pc);
                w += anti * linalg::real(a as f64 / (2.0 * n as f64));
            }
            if b > 0 {
                let lower = &prev[a];
                let anti = linalg::matmul(&xc, lower) + linalg::matmul(lower, &xc);
                w += anti * linalg::real(b as f64 / (2.0 * n as f64));
            }
            if n >= 2 {
                moments.set(a, b, linalg::trace_product(state.matrix(), &w).re);
            }
            cur.push(w);
        }
        prev = cur;
    }
    if max_order < 2 {
        moments.truncate_to(max_order);
    }
    Ok(moments)
}

/// Wigner function sampled on a rectangular grid; `values[(i, j)] = W(x_i, p_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WignerGrid {
    pub x_axis: Vec<f64>,
    pub p_axis: Vec<f64>,
    pub values: DMatrix<f64>,
}

impl WignerGrid {
    /// Trapezoidal estimate of `∫∫ W dx dp`.
    pub fn integral(&self) -> f64 {
        let wx = trapezoid_weights(&self.x_axis);
        let wp = trapezoid_weights(&self.p_axis);
        let mut acc = 0.0;
        for (i, &a) in wx.iter().enumerate() {
            for (j, &b) in wp.iter().enumerate() {
                acc += a * b * self.values[(i, j)];
            }
        }
        acc
    }

    /// Position marginal `∫ W dp` at each `x`.
    pub fn position_marginal(&self) -> Vec<f64> {
        let wp = trapezoid_weights(&self.p_axis);
        (0..self.x_axis.len())
            .map(|i| wp.iter().enumerate().map(|(j, &b)| b * self.values[(i, j)]).sum())
            .collect()
    }

    pub fn min(&self) -> f64 {
        self.values.min()
    }

    pub fn max(&self) -> f64 {
        self.values.max()
    }

    /// Sum of `|W - W'|` times the cell area.
    pub fn l1_distance(&self, other: &WignerGrid) -> Result<f64> {
        if self.values.shape() != other.values.shape() {
            return Err(Error::DimensionMismatch("Wigner grids differ in shape".into()));
        }
        let wx = trapezoid_weights(&self.x_axis);
        let wp = trapezoid_weights(&self.p_axis);
        let mut acc = 0.0;
        for (i, &a) in wx.iter().enumerate() {
            for (j, &b) in wp.iter().enumerate() {
                acc += a * b * (self.values[(i, j)] - other.values[(i, j)]).abs();
            }
        }
        Ok(acc)
    }
}

fn trapezoid_weights(axis: &[f64]) -> Vec<f64> {
    let n = axis.len();
    let mut w = vec![0.0; n];
    for k in 0..n.saturating_sub(1) {
        let h = axis[k + 1] - axis[k];
        w[k] += 0.5 * h;
        w[k + 1] += 0.5 * h;
    }
    w
}

/// Uniform axis from `lo` to `hi` inclusive.
pub fn uniform_axis(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points).map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64).collect(),
    }
}

/// Generalized Laguerre polynomials `L_0^{(k)}(z) ..= L_n^{(k)}(z)`.
pub fn laguerre_series(n: usize, k: usize, z: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n >= 1 {
        out.push(1.0 + k as f64 - z);
    }
    for j in 1..n {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0 + k as f64 - z) * out[j] - (jf + k as f64) * out[j - 1]) / (jf + 1.0);
        out.push(next);
    }
    out
}

/// Wigner function for `x = a + a^dagger`, `p = i(a^dagger - a)`, normalized so
/// that `∫∫ W dx dp = 1`. Built from `|m><n|` contributions
/// `(1/2π) (-1)^n sqrt(n!/m!) (x - i p)^(m-n) exp(-r²/2) L_n^{(m-n)}(r²)`, `r² = x² + p²`.
pub fn wigner_grid(rho: &DensityMatrix, x_axis: &[f64], p_axis: &[f64]) -> WignerGrid {
    let d = rho.dim();
    let m = rho.matrix();
    let mut values = DMatrix::<f64>::zeros(x_axis.len(), p_axis.len());
    for (i, &x) in x_axis.iter().enumerate() {
        for (j, &p) in p_axis.iter().enumerate() {
            let r2 = x * x + p * p;
            let z = Complex64::new(x, -p);
            let mut acc = 0.0;
            let mut zpow = Complex64::new(1.0, 0.0);
            for k in 0..d {
                // off-diagonal order k = m - n
                let lag = laguerre_series(d - 1 - k, k, r2);
                let mut ratio = 1.0f64; // sqrt(n! / (n+k)!)
                for t in 1..=k {
                    ratio /= (t as f64).sqrt();
                }
                for n in 0..d - k {
                    if n > 0 {
                        ratio *= (n as f64 / (n + k) as f64).sqrt();
                    }
                    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                    let term = sign * ratio * lag[n];
                    if k == 0 {
                        acc += m[(n, n)].re * term;
                    } else {
                        acc += 2.0 * (m[(n + k, n)] * zpow).re * term;
                    }
                }
                zpow *= z;
            }
            values[(i, j)] = acc * (-0.5 * r2).exp() / (2.0 * std::f64::consts::PI);
        }
    }
    WignerGrid { x_axis: x_axis.to_vec(), p_axis: p_axis.to_vec(), values }
}
