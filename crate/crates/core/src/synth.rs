//! Seeded synthetic data with a prescribed spectrum.

use rand::Rng;

use crate::linalg::{DenseMatrix, LinalgError};
use crate::rng::{stream_rng, Stream};

/// Largest eigenvalue of generated `MᵀM`.
pub const DEFAULT_TOP_EIGENVALUE: f64 = 100.0;

/// Smallest relative gap `1 − λ₂/λ₁` the generators accept.
pub const MIN_GAP: f64 = 0.05;

/// Orthogonal `n×n` matrix built from seeded Givens rotations.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DenseMatrix {
    let mut q = DenseMatrix::identity(n);
    for _ in 0..2 {
        for i in 0..n {
            for j in i + 1..n {
                let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let (s, c) = theta.sin_cos();
                for col in 0..n {
                    let (a, b) = (q.get(i, col), q.get(j, col));
                    q.set(i, col, c * a - s * b);
                    q.set(j, col, s * a + c * b);
                }
            }
        }
    }
    q
}

/// `k×cols` matrix whose `MᵀM` has the given nonzero eigenvalues (the rest are zero).
pub fn matrix_with_spectrum<R: Rng + ?Sized>(
    k: usize,
    cols: usize,
    eigenvalues: &[f64],
    rng: &mut R,
) -> Result<DenseMatrix, LinalgError> {
    let rank = eigenvalues.len();
    if rank > k.min(cols) {
        return Err(LinalgError::Dimension(format!(
            "{rank} eigenvalues exceed the rank of a {k}x{cols} matrix"
        )));
    }
    if eigenvalues.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
        return Err(LinalgError::Domain("eigenvalues must be non-negative".into()));
    }
    let u = random_orthogonal(k, rng);
    let v = random_orthogonal(cols, rng);
    let mut m = DenseMatrix::zeros(k, cols);
    for (idx, &lambda) in eigenvalues.iter().enumerate() {
        let sigma = lambda.sqrt();
        for i in 0..k {
            let ui = sigma * u.get(i, idx);
            for j in 0..cols {
                m.set(i, j, m.get(i, j) + ui * v.get(j, idx));
            }
        }
    }
    Ok(m)
}

/// Geometric spectrum `top · gapⁱ` of the given length, so `λ₂/λ₁ = gap`.
pub fn gap_spectrum(rank: usize, gap: f64, top: f64) -> Result<Vec<f64>, LinalgError> {
    if !(gap > 0.0 && gap <= 1.0 - MIN_GAP) {
        return Err(LinalgError::Domain(format!(
            "gap ratio {gap} outside (0, {}]",
            1.0 - MIN_GAP
        )));
    }
    Ok((0..rank).map(|i| top * gap.powi(i as i32)).collect())
}

/// Splits `m` into consecutive column blocks of the given widths.
pub fn split_columns(m: &DenseMatrix, sizes: &[usize]) -> Result<Vec<DenseMatrix>, LinalgError> {
    if sizes.iter().sum::<usize>() != m.cols() {
        return Err(LinalgError::Dimension(format!(
            "sizes sum to {} but matrix has {} columns",
            sizes.iter().sum::<usize>(),
            m.cols()
        )));
    }
    let mut start = 0;
    Ok(sizes
        .iter()
        .map(|&w| {
            let block = m.column_block(start, start + w);
            start += w;
            block
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub combined: DenseMatrix,
    pub parts: Vec<DenseMatrix>,
}

/// `k × Σsizes` data with `λ₂/λ₁ = gap` for `MᵀM`, split into party blocks.
pub fn generate(k: usize, sizes: &[usize], gap: f64, seed: u64) -> Result<SyntheticData, LinalgError> {
    if k == 0 || sizes.is_empty() || sizes.contains(&0) {
        return Err(LinalgError::Dimension("k and every party size must be positive".into()));
    }
    let cols: usize = sizes.iter().sum();
    let spectrum = gap_spectrum(k.min(cols), gap, DEFAULT_TOP_EIGENVALUE)?;
    let mut rng = stream_rng(seed, Stream::Data);
    let combined = matrix_with_spectrum(k, cols, &spectrum, &mut rng)?;
    let parts = split_columns(&combined, sizes)?;
    Ok(SyntheticData { combined, parts })
}
