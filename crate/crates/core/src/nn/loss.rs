//! Network output to density matrix, the matrix mean-squared loss and its
//! gradient with respect to the raw outputs.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::states::DensityMatrix;

/// Reconstructed state: `M` from the raw outputs and `η = M†M / tr(M†M)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkOutputState {
    pub m: CMatrix,
    pub eta_est: DensityMatrix,
    /// `M = 0`: `eta_est` falls back to the maximally mixed state.
    pub degenerate: bool,
}

/// `M[r][c] = raw[r d + c] + i raw[d² + r d + c]` (real block, then imaginary block).
pub fn assemble_m(d: usize, raw: &[f64]) -> Result<CMatrix> {
    if raw.len() != 2 * d * d {
        return Err(Error::DimensionMismatch(format!("expected {} raw outputs, got {}", 2 * d * d, raw.len())));
    }
    Ok(CMatrix::from_fn(d, d, |r, c| Complex64::new(raw[r * d + c], raw[d * d + r * d + c])))
}

pub fn output_state(d: usize, raw: &[f64]) -> Result<NetworkOutputState> {
    let m = assemble_m(d, raw)?;
    let gram = m.adjoint() * &m;
    let tr = linalg::trace(&gram).re;
    if tr == 0.0 {
        log::warn!("network produced M = 0; using the maximally mixed state");
        return Ok(NetworkOutputState { m, eta_est: DensityMatrix::maximally_mixed(d), degenerate: true });
    }
    let eta = linalg::hermitize(&gram) / linalg::real(tr);
    Ok(NetworkOutputState { m, eta_est: DensityMatrix::from_matrix_unchecked(eta), degenerate: false })
}

/// Mean of squared differences over the `2d²` real slots.
pub fn loss(eta_est: &DensityMatrix, eta_true: &DensityMatrix) -> Result<f64> {
    let d = eta_true.dim();
    if eta_est.dim() != d {
        return Err(Error::DimensionMismatch(format!("loss between dimensions {} and {d}", eta_est.dim())));
    }
    let (a, b) = (eta_est.to_slots(), eta_true.to_slots());
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64)
}

/// Loss of one sample and its gradient with respect to the raw outputs (before `tanh`).
///
/// With `G = 2c(η - T)`, `c = 1/(2d²)` and `t = tr(M†M)`, the gradient with respect to
/// `Re M + i Im M` is `(2/t)(M G - Re tr(G η) M)`.
pub fn loss_and_grad(d: usize, raw: &[f64], target: &DensityMatrix, grad: &mut [f64]) -> Result<f64> {
    let out = output_state(d, raw)?;
    let l = loss(&out.eta_est, target)?;
    if out.degenerate {
        grad.iter_mut().for_each(|g| *g = 0.0);
        return Ok(l);
    }
    let c = 1.0 / (2 * d * d) as f64;
    let eta = out.eta_est.matrix();
    let g = (eta - target.matrix()) * linalg::real(2.0 * c);
    let t = out.m.norm_squared();
    let proj = linalg::trace_product(&g, eta).re;
    let y = (&out.m * &g - &out.m * linalg::real(proj)) * linalg::real(2.0 / t);
    for r in 0..d {
        for col in 0..d {
            grad[r * d + col] = y[(r, col)].re;
            grad[d * d + r * d + col] = y[(r, col)].im;
        }
    }
    Ok(l)
}
