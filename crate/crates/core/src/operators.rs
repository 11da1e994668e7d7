//! Fock-basis operators and trap potentials in oscillator units.
//!
//! Lengths are measured in the zero-point length `x0`, momenta in `p0 = hbar / (2 x0)`,
//! energies in `hbar * omega0` and times in `1 / omega0`. In these units
//! `x = a + a^dagger`, `p = i (a^dagger - a)` and `[x, p] = 2i`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};

/// `(6 sqrt(e))^(1/4)`: ratio `alpha / sqrt(sigma / x0)` for the double-Gaussian trap.
pub fn tweezer_quartic_factor() -> f64 {
    (6.0 * 0.5f64.exp()).powf(0.25)
}

const HBAR: f64 = 1.054_571_817e-34;

/// Physical scales behind the dimensionless units. Only used to convert user
/// input; every computation in the crate is dimensionless.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    /// Reference angular frequency in rad/s.
    pub omega0: f64,
    /// Zero-point length in meters.
    pub x0: f64,
    /// Zero-point momentum in kg m/s.
    pub p0: f64,
}

impl UnitSystem {
    /// Units for a particle of `mass` (kg) prepared in a harmonic trap of
    /// angular frequency `omega0` (rad/s).
    pub fn for_particle(mass: f64, omega0: f64) -> Result<Self> {
        if !(mass > 0.0 && omega0 > 0.0) {
            return Err(Error::Domain("mass and omega0 must be positive".into()));
        }
        let x0 = (HBAR / (2.0 * mass * omega0)).sqrt();
        Ok(Self::from_length(omega0, x0))
    }

    /// Units from a known zero-point length; `p0` follows from `x0 p0 = hbar / 2`.
    pub fn from_length(omega0: f64, x0: f64) -> Self {
        Self { omega0, x0, p0: HBAR / (2.0 * x0) }
    }

    pub fn length_to_dimensionless(&self, meters: f64) -> f64 {
        meters / self.x0
    }
}

/// Trap potential variants with their dimensionless parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// `x^4 / alpha^4`.
    Quartic { alpha: f64 },
    /// `x^2 / 4`.
    Harmonic,
    /// Two Gaussian wells of width `sigma` at `-sigma/sqrt2 - epsilon` and `+sigma/sqrt2`.
    DoubleGaussian { sigma_over_x0: f64, epsilon_over_x0: f64 },
}

impl PotentialSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PotentialSpec::Quartic { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                Err(Error::Domain(format!("alpha must be positive and finite, got {alpha}")))
            }
            PotentialSpec::DoubleGaussian { sigma_over_x0, epsilon_over_x0 }
                if !(sigma_over_x0 > 0.0 && sigma_over_x0.is_finite() && epsilon_over_x0.is_finite()) =>
            {
                Err(Error::Domain(format!(
                    "double Gaussian needs sigma > 0 and finite epsilon, got sigma={sigma_over_x0}, epsilon={epsilon_over_x0}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Double-Gaussian trap whose leading quartic term matches `alpha`.
    pub fn double_gaussian_for_alpha(alpha: f64, epsilon_over_x0: f64) -> Result<Self> {
        Ok(PotentialSpec::DoubleGaussian { sigma_over_x0: sigma_from_alpha(alpha)?, epsilon_over_x0 })
    }

    /// Short human-readable tag used in file headers and reports.
    pub fn describe(&self) -> String {
        match *self {
            PotentialSpec::Quartic { alpha } => format!("quartic(alpha={alpha})"),
            PotentialSpec::Harmonic => "harmonic".to_string(),
            PotentialSpec::DoubleGaussian { sigma_over_x0, epsilon_over_x0 } => {
                format!("double_gaussian(sigma={sigma_over_x0},epsilon={epsilon_over_x0})")
            }
        }
    }

    /// Effective inverse quarticity, when the potential has one.
    pub fn alpha(&self) -> Option<f64> {
        match *self {
            PotentialSpec::Quartic { alpha } => Some(alpha),
            PotentialSpec::Harmonic => None,
            PotentialSpec::DoubleGaussian { sigma_over_x0, .. } => alpha_from_sigma(sigma_over_x0).ok(),
        }
    }

    /// Is the potential symmetric under `x -> -x`?
    pub fn is_parity_symmetric(&self) -> bool {
        match *self {
            PotentialSpec::DoubleGaussian { epsilon_over_x0, .. } => epsilon_over_x0 == 0.0,
            _ => true,
        }
    }
}

/// `alpha = sqrt(sigma / x0) (6 sqrt(e))^(1/4)`.
pub fn alpha_from_sigma(sigma_over_x0: f64) -> Result<f64> {
    if !(sigma_over_x0 > 0.0) {
        return Err(Error::Domain(format!("sigma/x0 must be positive, got {sigma_over_x0}")));
    }
    Ok(sigma_over_x0.sqrt() * tweezer_quartic_factor())
}

pub fn sigma_from_alpha(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
    }
    Ok((alpha / tweezer_quartic_factor()).powi(2))
}

/// Single Gaussian well `V_G(x) = -(s^2 / 4) exp(-x^2 / s^2)`, `s = sigma / x0`.
fn gaussian_well(x: f64, s: f64) -> f64 {
    -0.25 * s * s * (-(x * x) / (s * s)).exp()
}

/// Scalar potential at dimensionless position `x`, in units of `hbar omega0`.
pub fn eval_potential(spec: &PotentialSpec, x: f64) -> f64 {
    match *spec {
        PotentialSpec::Quartic { alpha } => (x / alpha).powi(4),
        PotentialSpec::Harmonic => 0.25 * x * x,
        PotentialSpec::DoubleGaussian { sigma_over_x0: s, epsilon_over_x0: e } => {
            let shift = s / std::f64::consts::SQRT_2;
            gaussian_well(x - shift, s) + gaussian_well(x + e + shift, s)
        }
    }
}

/// Dense operator in the truncated Fock basis.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix(CMatrix);

impl OperatorMatrix {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::InvalidDimension(format!("operator must be square, got {:?}", matrix.shape())));
        }
        Ok(Self(matrix))
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

    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(&self.0)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn product(&self, other: &Self) -> Self {
        Self(linalg::matmul(&self.0, &other.0))
    }

    pub fn commutator(&self, other: &Self) -> Self {
        Self(linalg::matmul(&self.0, &other.0) - linalg::matmul(&other.0, &self.0))
    }

    pub fn expectation_fock(&self, n: usize) -> Complex64 {
        self.0[(n, n)]
    }

    /// Largest matrix element connecting even and odd Fock sectors.
    pub fn parity_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if (i + j) % 2 == 1 {
                    worst = worst.max(self.0[(i, j)].norm());
                }
            }
        }
        worst
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        return Err(Error::InvalidDimension(format!("Fock truncation must be at least 2, got {dim}")));
    }
    Ok(())
}

/// Annihilation operator: `a[n-1, n] = sqrt(n)`.
pub fn build_ladder(dim: usize) -> Result<OperatorMatrix> {
    check_dim(dim)?;
    let mut a = CMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = linalg::real((n as f64).sqrt());
    }
    OperatorMatrix::new(a)
}

pub fn build_position(dim: usize) -> Result<OperatorMatrix> {
    let a = build_ladder(dim)?.into_matrix();
    OperatorMatrix::new(&a + a.adjoint())
}

pub fn build_momentum(dim: usize) -> Result<OperatorMatrix> {
    let a = build_ladder(dim)?.into_matrix();
    OperatorMatrix::new((a.adjoint() - &a) * linalg::I)
}

/// Number operator `a^dagger a`.
pub fn build_number(dim: usize) -> Result<OperatorMatrix> {
    check_dim(dim)?;
    OperatorMatrix::new(CMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            linalg::real(i as f64)
        } else {
            Complex64::new(0.0, 0.0)
        }
    }))
}

/// Spectrum of the truncated position operator (real symmetric tridiagonal):
/// ascending eigenvalues and orthonormal eigenvectors as columns.
pub fn position_eigen(dim: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_dim(dim)?;
    let mut x = DMatrix::<f64>::zeros(dim, dim);
    for n in 1..dim {
        let v = (n as f64).sqrt();
        x[(n - 1, n)] = v;
        x[(n, n - 1)] = v;
    }
    let eig = SymmetricEigen::new(x);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(dim, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_fn(dim, dim, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// `f(x)` as a matrix function of the truncated position operator.
pub fn position_function(dim: usize, f: impl Fn(f64) -> f64) -> Result<OperatorMatrix> {
    let (values, vectors) = position_eigen(dim)?;
    let mut scaled = vectors.clone();
    for c in 0..dim {
        let fc = f(values[c]);
        scaled.column_mut(c).scale_mut(fc);
    }
    let m = &scaled * vectors.transpose();
    let sym = (&m + m.transpose()) * 0.5;
    OperatorMatrix::new(sym.map(linalg::real))
}

/// Potential-energy matrix `V(x)` in units of `hbar omega0`.
pub fn build_potential(spec: &PotentialSpec, dim: usize) -> Result<OperatorMatrix> {
    spec.validate()?;
    check_dim(dim)?;
    match *spec {
        PotentialSpec::Quartic { alpha } => {
            let x = build_position(dim)?;
            let x2 = x.product(&x);
            let x4 = x2.product(&x2);
            OperatorMatrix::new(x4.into_matrix() * linalg::real(alpha.powi(-4)))
        }
        PotentialSpec::Harmonic => {
            let x = build_position(dim)?;
            OperatorMatrix::new(x.product(&x).into_matrix() * linalg::real(0.25))
        }
        PotentialSpec::DoubleGaussian { .. } => position_function(dim, |x| eval_potential(spec, x)),
    }
}

/// Hamiltonian `p^2/4 + V(x)` in units of `hbar omega0`.
pub fn build_hamiltonian(spec: &PotentialSpec, dim: usize) -> Result<OperatorMatrix> {
    let p = build_momentum(dim)?;
    let kinetic = p.product(&p).into_matrix() * linalg::real(0.25);
    let h = kinetic + build_potential(spec, dim)?.into_matrix();
    let defect = linalg::hermiticity_defect(&h);
    let scale = h.camax().max(1.0);
    if defect > 1e-12 * scale {
        return Err(Error::Consistency(format!("Hamiltonian for {} deviates from Hermitian by {defect:e}", spec.describe())));
    }
    OperatorMatrix::new(linalg::hermitize(&h))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn ladder_entries() {
        assert!(matches!(build_ladder(1), Err(Error::InvalidDimension(_))));
        let a2 = build_ladder(2).unwrap();
        assert_eq!(a2.matrix()[(0, 1)], c(1.0));
        assert_eq!(a2.matrix().iter().filter(|z| z.norm() != 0.0).count(), 1);
        let a3 = build_ladder(3).unwrap();
        assert!((a3.matrix()[(1, 2)].re - std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn position_and_momentum_vacuum_and_fock_values() {
        let x = build_position(40).unwrap();
        let p = build_momentum(40).unwrap();
        assert!(x.is_hermitian(1e-12) && p.is_hermitian(1e-12));
        let x2 = x.product(&x);
        let p2 = p.product(&p);
        assert!((x2.expectation_fock(0) - c(1.0)).norm() < 1e-14);
        assert!((p2.expectation_fock(0) - c(1.0)).norm() < 1e-14);
        assert!((x2.expectation_fock(1) - c(3.0)).norm() < 1e-14);
        for n in 0..40 {
            assert_eq!(x.expectation_fock(n), c(0.0));
        }
    }

    #[test]
    fn canonical_commutator_away_from_edge() {
        let dim = 24;
        let x = build_position(dim).unwrap();
        let p = build_momentum(dim).unwrap();
        let comm = x.commutator(&p);
        for i in 0..dim - 1 {
            for j in 0..dim - 1 {
                let expected = if i == j { Complex64::new(0.0, 2.0) } else { c(0.0) };
                assert!((comm.matrix()[(i, j)] - expected).norm() < 1e-12);
            }
        }
        // the truncation shows up only in the last diagonal entry
        assert!((comm.matrix()[(dim - 1, dim - 1)] - Complex64::new(0.0, 2.0)).norm() > 1.0);
    }

    #[test]
    fn harmonic_spectrum() {
        let h = build_hamiltonian(&PotentialSpec::Harmonic, 30).unwrap();
        let (values, vectors) = linalg::eigh(h.matrix());
        // the last Fock level carries a truncation artifact; drop eigenvectors living at the edge
        let edge = 30 - 30 / 4;
        let bulk: Vec<f64> = (0..30)
            .filter(|&k| (edge..30).map(|r| vectors[(r, k)].norm_sqr()).sum::<f64>() < 0.5)
            .map(|k| values[k])
            .collect();
        for n in 0..=20 {
            assert!((bulk[n] - (n as f64 + 0.5)).abs() < 1e-9, "level {n}: {}", bulk[n]);
        }
    }

    #[test]
    fn quartic_vacuum_energy() {
        let h = build_hamiltonian(&PotentialSpec::Quartic { alpha: 5.0 }, 12).unwrap();
        let expected = 0.25 + 3.0 / 625.0;
        assert!((h.expectation_fock(0).re - expected).abs() < 1e-14);
        assert!((expected - 0.2548).abs() < 1e-12);
    }

    #[test]
    fn quarticity_conversions() {
        let s = sigma_from_alpha(5.0).unwrap();
        assert!((s - 7.945).abs() < 5e-3, "sigma = {s}");
        assert!((alpha_from_sigma(1.0).unwrap() - 1.7738).abs() < 5e-4);
        assert!((alpha_from_sigma(1.0).unwrap() - (6.0 * 0.5f64.exp()).powf(0.25)).abs() < 1e-15);
        assert!((alpha_from_sigma(sigma_from_alpha(5.0).unwrap()).unwrap() - 5.0).abs() < 1e-12);
        assert!(alpha_from_sigma(0.0).is_err());
        assert!(sigma_from_alpha(-1.0).is_err());
    }

    #[test]
    fn potential_values() {
        let q = PotentialSpec::Quartic { alpha: 5.0 };
        assert_eq!(eval_potential(&q, 0.0), 0.0);
        assert!((eval_potential(&q, 5.0) - 1.0).abs() < 1e-15);
        let g = PotentialSpec::DoubleGaussian { sigma_over_x0: 7.945, epsilon_over_x0: 0.0 };
        let v0 = eval_potential(&g, 0.0);
        assert!((v0 + 2.0 * 7.945f64.powi(2) / 4.0 * (-0.5f64).exp()).abs() < 1e-12);
        assert!((v0 + 19.14).abs() < 5e-3, "{v0}");
    }

    #[test]
    fn double_gaussian_fourth_derivative_matches_quartic_strength() {
        // V''''(0) = 24 lambda, with lambda x0^4 / (hbar omega0) = 1 / alpha^4.
        for &s in &[4.0, 7.945, 12.0] {
            let spec = PotentialSpec::DoubleGaussian { sigma_over_x0: s, epsilon_over_x0: 0.0 };
            let h = 0.05 * s;
            let v = |k: f64| eval_potential(&spec, k * h);
            let d4 = (v(-2.0) - 4.0 * v(-1.0) + 6.0 * v(0.0) - 4.0 * v(1.0) + v(2.0)) / h.powi(4);
            let alpha = alpha_from_sigma(s).unwrap();
            let expected = 24.0 / alpha.powi(4);
            assert!((d4 - expected).abs() < 1e-2 * expected, "s={s}: {d4} vs {expected}");
            // quadratic and cubic terms cancel at the origin
            let d2 = (v(-1.0) - 2.0 * v(0.0) + v(1.0)) / (h * h);
            assert!(d2.abs() < 1e-2 * expected * (h * h) * 10.0 + 1e-9, "d2 = {d2}");
        }
    }

    #[test]
    fn potential_matrix_diagonal_on_position_grid() {
        for spec in [
            PotentialSpec::Quartic { alpha: 5.0 },
            PotentialSpec::Harmonic,
            PotentialSpec::DoubleGaussian { sigma_over_x0: 7.945, epsilon_over_x0: 0.1 },
        ] {
            let dim = 32;
            let v = build_potential(&spec, dim).unwrap();
            let (values, vectors) = position_eigen(dim).unwrap();
            let u = vectors.map(linalg::real);
            let diag = u.adjoint() * v.matrix() * &u;
            for k in 0..dim {
                let expected = eval_potential(&spec, values[k]);
                assert!((diag[(k, k)].re - expected).abs() < 1e-9 * expected.abs().max(1.0), "{spec:?} k={k}");
            }
        }
    }

    #[test]
    fn hamiltonians_are_hermitian_and_parity_structured() {
        let dim = 40;
        for spec in [PotentialSpec::Quartic { alpha: 5.0 }, PotentialSpec::Harmonic] {
            let h = build_hamiltonian(&spec, dim).unwrap();
            assert!(h.is_hermitian(1e-12));
            assert!(h.parity_defect() <= 1e-12);
        }
        let sym = build_hamiltonian(&PotentialSpec::DoubleGaussian { sigma_over_x0: 7.945, epsilon_over_x0: 0.0 }, dim).unwrap();
        assert!(sym.is_hermitian(1e-12));
        assert!(sym.parity_defect() <= 1e-12, "{}", sym.parity_defect());
        let tilted = build_hamiltonian(&PotentialSpec::DoubleGaussian { sigma_over_x0: 7.945, epsilon_over_x0: 0.1 }, dim).unwrap();
        assert!(tilted.parity_defect() > 1e-3);
    }

    #[test]
    fn truncation_independence_of_low_block() {
        for spec in [PotentialSpec::Quartic { alpha: 5.0 }, PotentialSpec::Harmonic] {
            let small = build_hamiltonian(&spec, 30).unwrap();
            let large = build_hamiltonian(&spec, 40).unwrap();
            for m in 0..=15 {
                for n in 0..=15 {
                    assert_eq!(small.matrix()[(m, n)], large.matrix()[(m, n)], "{spec:?} ({m},{n})");
                }
            }
        }
        // Gaussian matrix functions converge rather than being bit-identical
        let spec = PotentialSpec::DoubleGaussian { sigma_over_x0: 7.945, epsilon_over_x0: -0.1 };
        let small = build_hamiltonian(&spec, 60).unwrap();
        let large = build_hamiltonian(&spec, 70).unwrap();
        let mut worst = 0.0f64;
        for m in 0..=30 {
            for n in 0..=30 {
                worst = worst.max((small.matrix()[(m, n)] - large.matrix()[(m, n)]).norm());
            }
        }
        assert!(worst < 1e-9, "worst = {worst:e}");
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(build_hamiltonian(&PotentialSpec::Quartic { alpha: 0.0 }, 10).is_err());
        assert!(build_hamiltonian(&PotentialSpec::DoubleGaussian { sigma_over_x0: -1.0, epsilon_over_x0: 0.0 }, 10).is_err());
    }

    #[test]
    fn spec_serde_is_strict() {
        let s: PotentialSpec = serde_json::from_str(r#"{"kind":"quartic","alpha":5.0}"#).unwrap();
        assert_eq!(s, PotentialSpec::Quartic { alpha: 5.0 });
        assert!(serde_json::from_str::<PotentialSpec>(r#"{"kind":"quartic","alpha":5.0,"beta":1}"#).is_err());
    }

    #[test]
    fn unit_conversion() {
        let u = UnitSystem::from_length(1.0, 10e-9);
        assert!((u.length_to_dimensionless(1e-3) - 1e5).abs() < 1e-6);
        assert!((u.x0 * u.p0 - HBAR / 2.0).abs() < 1e-45);
    }
}
