//! Dense complex matrix helpers shared by the physics modules.

use matrixmultiply::CGemmOption;

type C64 = [f64; 2];
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// `a * b` through the blocked complex GEMM kernel.
pub fn matmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let mut c = CMatrix::zeros(a.nrows(), b.ncols());
    gemm_into(Complex64::new(1.0, 0.0), a, b, Complex64::new(0.0, 0.0), &mut c);
    c
}

/// `c <- alpha * a * b + beta * c`.
pub fn gemm_into(alpha: Complex64, a: &CMatrix, b: &CMatrix, beta: Complex64, c: &mut CMatrix) {
    let (m, k) = a.shape();
    let (k2, n) = b.shape();
    assert_eq!(k, k2, "inner dimensions differ");
    assert_eq!(c.shape(), (m, n), "output shape differs");
    // nalgebra stores column-major and Complex64 is layout-compatible with [f64; 2].
    unsafe {
        matrixmultiply::zgemm(
            CGemmOption::Standard,
            CGemmOption::Standard,
            m,
            k,
            n,
            [alpha.re, alpha.im],
            a.as_ptr() as *const C64,
            1,
            m as isize,
            b.as_ptr() as *const C64,
            1,
            k as isize,
            [beta.re, beta.im],
            c.as_mut_ptr() as *mut C64,
            1,
            m as isize,
        );
    }
}

/// Square `n x n` column-major GEMM on raw slices: `c <- alpha * a * b + beta * c`.
pub fn gemm_square(n: usize, alpha: Complex64, a: &[Complex64], b: &[Complex64], beta: Complex64, c: &mut [Complex64]) {
    assert!(a.len() == n * n && b.len() == n * n && c.len() == n * n, "slice lengths differ from n^2");
    unsafe {
        matrixmultiply::zgemm(
            CGemmOption::Standard,
            CGemmOption::Standard,
            n,
            n,
            n,
            [alpha.re, alpha.im],
            a.as_ptr() as *const C64,
            1,
            n as isize,
            b.as_ptr() as *const C64,
            1,
            n as isize,
            [beta.re, beta.im],
            c.as_mut_ptr() as *mut C64,
            1,
            n as isize,
        );
    }
}

/// Views interleaved `(re, im)` pairs as complex numbers.
pub fn as_complex(y: &[f64]) -> &[Complex64] {
    assert!(y.len().is_multiple_of(2), "odd-length buffer");
    // Complex<f64> is repr(C) with two f64 fields and the same alignment as f64.
    unsafe { std::slice::from_raw_parts(y.as_ptr() as *const Complex64, y.len() / 2) }
}

pub fn as_complex_mut(y: &mut [f64]) -> &mut [Complex64] {
    assert!(y.len().is_multiple_of(2), "odd-length buffer");
    unsafe { std::slice::from_raw_parts_mut(y.as_mut_ptr() as *mut Complex64, y.len() / 2) }
}

pub fn as_reals(z: &[Complex64]) -> &[f64] {
    unsafe { std::slice::from_raw_parts(z.as_ptr() as *const f64, z.len() * 2) }
}

/// Largest element-wise deviation `max |A - A^dagger|`.
pub fn hermiticity_defect(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(A + A^dagger) / 2`.
pub fn hermitize(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

pub fn trace(a: &CMatrix) -> Complex64 {
    a.diagonal().iter().sum()
}

/// `tr(a * b)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Eigendecomposition of a Hermitian matrix: ascending real eigenvalues and
/// the unitary whose columns are the matching eigenvectors.
pub fn eigh(a: &CMatrix) -> (DVector<f64>, CMatrix) {
    let eig = SymmetricEigen::new(hermitize(a));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = CMatrix::from_fn(a.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// `f(A)` for Hermitian `A` given its eigendecomposition.
pub fn apply_spectral(values: &DVector<f64>, vectors: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let n = values.len();
    let mut scaled = vectors.clone();
    for c in 0..n {
        let fc = f(values[c]);
        for r in 0..n {
            scaled[(r, c)] *= fc;
        }
    }
    matmul(&scaled, &vectors.adjoint())
}

/// Principal square root of a Hermitian positive semidefinite matrix. Eigenvalues
/// at or above `floor` (a small negative number) are clipped to zero; anything
/// more negative is reported back as the offending eigenvalue.
pub fn sqrt_psd(a: &CMatrix, floor: f64) -> std::result::Result<CMatrix, f64> {
    let (values, vectors) = eigh(a);
    if let Some(&bad) = values.iter().find(|&&v| v < floor) {
        return Err(bad);
    }
    Ok(apply_spectral(&values, &vectors, |v| v.max(0.0).sqrt()))
}

pub fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}
