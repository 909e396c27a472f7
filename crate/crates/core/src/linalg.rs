//! Dense real linear algebra at desk scale: matrices and vectors, the reference power
//! iteration, a cyclic Jacobi eigensolver used as an independent oracle, correlation
//! and padding constructions, left null spaces and subspace comparison.

use std::fmt;
use std::ops::{Deref, Index};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entry at {0}")]
    NonFinite(usize),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("power iteration did not converge in {rounds} rounds")]
    NonConvergence { rounds: usize, last: RealVector },
    #[error("input basis is not orthonormal")]
    NotOrthonormal,
    #[error("matrix parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// A finite real vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RealVector(Vec<f64>);

impl RealVector {
    pub fn new(entries: Vec<f64>) -> Self {
        RealVector(entries)
    }

    pub fn try_new(entries: Vec<f64>) -> Result<Self, LinalgError> {
        if let Some(i) = entries.iter().position(|x| !x.is_finite()) {
            return Err(LinalgError::NonFinite(i));
        }
        Ok(RealVector(entries))
    }

    pub fn zeros(len: usize) -> Self {
        RealVector(vec![0.0; len])
    }

    pub fn basis(len: usize, i: usize) -> Self {
        let mut v = vec![0.0; len];
        v[i] = 1.0;
        RealVector(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &RealVector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm2_squared(&self) -> f64 {
        dot(&self.0, &self.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm2_squared().sqrt()
    }

    pub fn normalize(&self) -> Result<RealVector, LinalgError> {
        let norm = self.norm();
        if !(norm > 1e-300) {
            return Err(LinalgError::Degenerate("cannot normalize a zero vector".into()));
        }
        Ok(self.scaled(1.0 / norm))
    }

    pub fn scaled(&self, s: f64) -> RealVector {
        RealVector(self.0.iter().map(|x| x * s).collect())
    }

    pub fn add(&self, other: &RealVector) -> RealVector {
        assert_eq!(self.len(), other.len(), "vector length mismatch");
        RealVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &RealVector) -> RealVector {
        assert_eq!(self.len(), other.len(), "vector length mismatch");
        RealVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn max_abs_diff(&self, other: &RealVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Flips the sign so the largest-magnitude entry is positive.
    pub fn canonical_sign(&self) -> RealVector {
        let pivot = self
            .0
            .iter()
            .copied()
            .fold(0.0_f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < 0.0 {
            self.scaled(-1.0)
        } else {
            self.clone()
        }
    }

    /// `|cos|` of the angle between two vectors (sign-agnostic, since eigenvectors are
    /// defined up to sign).
    pub fn abs_cosine(&self, other: &RealVector) -> f64 {
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            return 0.0;
        }
        (self.dot(other) / denom).abs()
    }

    pub fn concat(parts: &[RealVector]) -> RealVector {
        RealVector(parts.iter().flat_map(|p| p.0.iter().copied()).collect())
    }
}

impl Deref for RealVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for RealVector {
    fn from(v: Vec<f64>) -> Self {
        RealVector(v)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row-major dense matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(LinalgError::NonFinite(i));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n, n);
        for (i, &x) in d.iter().enumerate() {
            m.set(i, i, x);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LinalgError::Dimension("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[RealVector]) -> Result<Self, LinalgError> {
        let rows = columns.first().map_or(0, |c| c.len());
        if columns.iter().any(|c| c.len() != rows) {
            return Err(LinalgError::Dimension("columns of unequal length".into()));
        }
        let mut m = Self::zeros(rows, columns.len());
        for (j, c) in columns.iter().enumerate() {
            for i in 0..rows {
                m.set(i, j, c[i]);
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        self.data[i * self.cols + j] = x;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> RealVector {
        RealVector((0..self.rows).map(|i| self.get(i, j)).collect())
    }

    pub fn columns(&self) -> Vec<RealVector> {
        (0..self.cols).map(|j| self.column(j)).collect()
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::Dimension(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self.get(i, l);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(l, j);
                }
            }
        }
        Ok(out)
    }

    /// `MᵀM`.
    pub fn gram(&self) -> DenseMatrix {
        let mut g = Self::zeros(self.cols, self.cols);
        for a in 0..self.cols {
            for b in a..self.cols {
                let s: f64 = (0..self.rows).map(|i| self.get(i, a) * self.get(i, b)).sum();
                g.set(a, b, s);
                g.set(b, a, s);
            }
        }
        g
    }

    /// `MMᵀ`.
    pub fn outer_gram(&self) -> DenseMatrix {
        let mut g = Self::zeros(self.rows, self.rows);
        for a in 0..self.rows {
            for b in a..self.rows {
                let s = dot(self.row(a), self.row(b));
                g.set(a, b, s);
                g.set(b, a, s);
            }
        }
        g
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn scaled(&self, s: f64) -> DenseMatrix {
        DenseMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x * s).collect() }
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(LinalgError::Dimension("matrix shapes differ".into()));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(DenseMatrix { rows: self.rows, cols: self.cols, data })
    }

    /// Horizontal concatenation `[M₁ M₂ … ]`.
    pub fn hconcat(parts: &[DenseMatrix]) -> Result<DenseMatrix, LinalgError> {
        let rows = parts.first().map_or(0, |p| p.rows);
        if parts.iter().any(|p| p.rows != rows) {
            return Err(LinalgError::Dimension("row counts differ".into()));
        }
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut out = Self::zeros(rows, cols);
        for i in 0..rows {
            let mut offset = 0;
            for p in parts {
                out.data[i * cols + offset..i * cols + offset + p.cols].copy_from_slice(p.row(i));
                offset += p.cols;
            }
        }
        Ok(out)
    }

    /// Columns `start..end`.
    pub fn column_block(&self, start: usize, end: usize) -> DenseMatrix {
        let mut out = Self::zeros(self.rows, end - start);
        for i in 0..self.rows {
            out.data[i * (end - start)..(i + 1) * (end - start)]
                .copy_from_slice(&self.row(i)[start..end]);
        }
        out
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let scale = self.max_abs().max(1.0);
        (0..self.rows).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol * scale))
    }

    /// Parses the text matrix format: a `rows cols` header line followed by `rows`
    /// lines of `cols` space-separated reals.
    pub fn from_text(text: &str) -> Result<DenseMatrix, LinalgError> {
        let mut lines = text.lines().enumerate();
        let (_, header) =
            lines.next().ok_or(LinalgError::Parse { line: 1, reason: "empty input".into() })?;
        let dims: Vec<usize> = header
            .split(' ')
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| LinalgError::Parse { line: 1, reason: format!("bad header: {e}") })?;
        let [rows, cols] = dims[..] else {
            return Err(LinalgError::Parse { line: 1, reason: "expected `rows cols`".into() });
        };
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let (idx, line) = lines.next().ok_or(LinalgError::Parse {
                line: r + 2,
                reason: format!("expected {rows} data rows"),
            })?;
            let row: Vec<f64> = if cols == 0 && line.is_empty() {
                Vec::new()
            } else {
                line.split(' ')
                    .map(str::parse)
                    .collect::<Result<_, _>>()
                    .map_err(|e| LinalgError::Parse { line: idx + 1, reason: format!("{e}") })?
            };
            if row.len() != cols {
                return Err(LinalgError::Parse {
                    line: idx + 1,
                    reason: format!("expected {cols} values, found {}", row.len()),
                });
            }
            data.extend(row);
        }
        DenseMatrix::new(rows, cols, data)
    }

    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {}", self.rows, self.cols)?;
        for i in 0..self.rows {
            let line: Vec<String> = self.row(i).iter().map(|x| format!("{x:?}")).collect();
            writeln!(f, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

pub fn matvec(m: &DenseMatrix, x: &[f64]) -> Result<RealVector, LinalgError> {
    if m.cols != x.len() {
        return Err(LinalgError::Dimension(format!("{}x{} times vector of {}", m.rows, m.cols, x.len())));
    }
    Ok(RealVector((0..m.rows).map(|i| dot(m.row(i), x)).collect()))
}

/// `Mᵀx` without materializing the transpose.
pub fn matvec_transpose(m: &DenseMatrix, x: &[f64]) -> Result<RealVector, LinalgError> {
    if m.rows != x.len() {
        return Err(LinalgError::Dimension(format!(
            "transpose of {}x{} times vector of {}",
            m.rows, m.cols, x.len()
        )));
    }
    let mut out = vec![0.0; m.cols];
    for (i, &xi) in x.iter().enumerate() {
        for (o, a) in out.iter_mut().zip(m.row(i)) {
            *o += a * xi;
        }
    }
    Ok(RealVector(out))
}

pub fn norm2_squared(x: &[f64]) -> f64 {
    dot(x, x)
}

pub fn normalize(x: &RealVector) -> Result<RealVector, LinalgError> {
    x.normalize()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    pub vector: RealVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerIteration {
    pub pair: EigenPair,
    pub rounds: usize,
}

/// Textbook power iteration `x ← Sx/‖Sx‖` until `‖Sv − λv‖ ≤ eps·|λ|`, with `λ`
/// the Rayleigh quotient of the current iterate.
pub fn power_iteration_reference(
    s: &DenseMatrix,
    x0: &RealVector,
    eps: f64,
    max_rounds: usize,
) -> Result<PowerIteration, LinalgError> {
    if !s.is_symmetric(1e-12) {
        return Err(LinalgError::Domain("power iteration reference needs a symmetric matrix".into()));
    }
    let mut x = x0.normalize()?;
    for round in 1..=max_rounds {
        let y = matvec(s, &x)?;
        x = y.normalize().map_err(|_| {
            LinalgError::Degenerate("iterate fell into the null space".into())
        })?;
        let sx = matvec(s, &x)?;
        let lambda = x.dot(&sx);
        let residual = sx.sub(&x.scaled(lambda)).norm();
        if residual <= eps * lambda.abs() {
            return Ok(PowerIteration {
                pair: EigenPair { value: lambda, vector: x.canonical_sign() },
                rounds: round,
            });
        }
    }
    Err(LinalgError::NonConvergence { rounds: max_rounds, last: x })
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Full eigendecomposition of a symmetric matrix by the cyclic Jacobi method, sorted
/// by descending `|λ|`, vectors sign-canonicalized.
pub fn jacobi_eigen_oracle(s: &DenseMatrix) -> Result<Vec<EigenPair>, LinalgError> {
    if !s.is_symmetric(1e-12) {
        return Err(LinalgError::Domain("Jacobi oracle needs a symmetric matrix".into()));
    }
    let n = s.rows;
    let mut a = s.clone();
    let mut v = DenseMatrix::identity(n);
    let scale = s.frobenius_norm();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a.get(i, j).powi(2))
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq.abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let (akp, akq) = (a.get(k, p), a.get(k, q));
                    a.set(k, p, c * akp - sn * akq);
                    a.set(k, q, sn * akp + c * akq);
                }
                for k in 0..n {
                    let (apk, aqk) = (a.get(p, k), a.get(q, k));
                    a.set(p, k, c * apk - sn * aqk);
                    a.set(q, k, sn * apk + c * aqk);
                }
                for k in 0..n {
                    let (vkp, vkq) = (v.get(k, p), v.get(k, q));
                    v.set(k, p, c * vkp - sn * vkq);
                    v.set(k, q, sn * vkp + c * vkq);
                }
            }
        }
    }
    let mut pairs: Vec<EigenPair> = (0..n)
        .map(|i| EigenPair { value: a.get(i, i), vector: v.column(i).canonical_sign() })
        .collect();
    pairs.sort_by(|x, y| {
        y.value.abs().total_cmp(&x.value.abs()).then(y.value.total_cmp(&x.value))
    });
    Ok(pairs)
}

/// `MᵀM` for `M = [A B]`, assembled from the four correlation blocks.
pub fn correlation_blocks(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    correlation_matrix(&[a.clone(), b.clone()])
}

/// `MᵀM` for `M = [A₁ … A_N]`, block `(i, j)` being `AᵢᵀAⱼ`.
pub fn correlation_matrix(parts: &[DenseMatrix]) -> Result<DenseMatrix, LinalgError> {
    let k = parts.first().map_or(0, |p| p.rows);
    if parts.iter().any(|p| p.rows != k) {
        return Err(LinalgError::Dimension("all blocks need the same row count".into()));
    }
    let total: usize = parts.iter().map(|p| p.cols).sum();
    let mut out = DenseMatrix::zeros(total, total);
    let mut row_off = 0;
    for a in parts {
        let mut col_off = 0;
        for b in parts {
            for i in 0..a.cols {
                for j in 0..b.cols {
                    let s: f64 = (0..k).map(|r| a.get(r, i) * b.get(r, j)).sum();
                    out.set(row_off + i, col_off + j, s);
                }
            }
            col_off += b.cols;
        }
        row_off += a.cols;
    }
    Ok(out)
}

/// Maps an eigenpair `(λ, v)` of `MᵀM` to the eigenpair `(λ, Mv/‖Mv‖)` of `MMᵀ`.
pub fn map_eigenvector_transpose(m: &DenseMatrix, pair: &EigenPair) -> Result<EigenPair, LinalgError> {
    if !(pair.value > 1e-10) {
        return Err(LinalgError::Domain(format!("eigenvalue {} is not positive", pair.value)));
    }
    let w = matvec(m, &pair.vector)?.normalize()?;
    let mmt_w = matvec(m, &matvec_transpose(m, &w)?)?;
    let residual = mmt_w.sub(&w.scaled(pair.value)).norm();
    if residual > 1e-8 * pair.value.max(1.0) {
        return Err(LinalgError::Domain(format!("input is not an eigenpair (residual {residual:e})")));
    }
    Ok(EigenPair { value: pair.value, vector: w.canonical_sign() })
}

/// `[A | r·I]`.
pub fn pad_matrix(a: &DenseMatrix, r: f64) -> Result<DenseMatrix, LinalgError> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(LinalgError::Domain(format!("padding scalar must be positive, got {r}")));
    }
    let pad = DenseMatrix::identity(a.rows).scaled(r);
    DenseMatrix::hconcat(&[a.clone(), pad])
}

/// Default zero-eigenvalue threshold for [`left_null_space`].
pub fn null_space_tolerance(a: &DenseMatrix) -> f64 {
    1e-10 * a.frobenius_norm()
}

/// Orthonormal basis of `{x : xᵀA = 0}`: eigenvectors of `AAᵀ` with eigenvalue below
/// `tol`.
pub fn left_null_space(a: &DenseMatrix, tol: f64) -> Vec<RealVector> {
    if a.rows == 0 {
        return Vec::new();
    }
    let pairs = jacobi_eigen_oracle(&a.outer_gram()).expect("AAᵀ is symmetric");
    pairs.into_iter().filter(|p| p.value.abs() < tol).map(|p| p.vector).collect()
}

fn check_orthonormal(basis: &[RealVector]) -> Result<(), LinalgError> {
    for (i, u) in basis.iter().enumerate() {
        for (j, v) in basis.iter().enumerate().skip(i) {
            let expect = if i == j { 1.0 } else { 0.0 };
            if (u.dot(v) - expect).abs() > 1e-8 {
                return Err(LinalgError::NotOrthonormal);
            }
        }
    }
    Ok(())
}

/// Principal angles between `span(U)` and `span(V)`, ascending, in `[0, π/2]`.
///
/// Cosines come from the singular values of `UᵀV`, sines from those of `(I − UUᵀ)V`;
/// small angles are taken from the sines, where `acos` loses precision.
pub fn principal_angles(u: &[RealVector], v: &[RealVector]) -> Result<Vec<f64>, LinalgError> {
    check_orthonormal(u)?;
    check_orthonormal(v)?;
    if u.is_empty() || v.is_empty() {
        return Ok(Vec::new());
    }
    if u[0].len() != v[0].len() || u.iter().chain(v).any(|x| x.len() != u[0].len()) {
        return Err(LinalgError::Dimension("subspaces live in different spaces".into()));
    }
    let (u, v) = if u.len() >= v.len() { (u, v) } else { (v, u) };
    let q = v.len();
    let mut cross = DenseMatrix::zeros(q, q);
    let residuals: Vec<RealVector> = v
        .iter()
        .map(|vj| u.iter().fold(vj.clone(), |acc, ui| acc.sub(&ui.scaled(ui.dot(vj)))))
        .collect();
    let mut resid_gram = DenseMatrix::zeros(q, q);
    for a in 0..q {
        for b in 0..q {
            let c: f64 = u.iter().map(|ui| ui.dot(&v[a]) * ui.dot(&v[b])).sum();
            cross.set(a, b, c);
            resid_gram.set(a, b, residuals[a].dot(&residuals[b]));
        }
    }
    let symmetrize = |m: &mut DenseMatrix| {
        for a in 0..q {
            for b in 0..a {
                let avg = 0.5 * (m.get(a, b) + m.get(b, a));
                m.set(a, b, avg);
                m.set(b, a, avg);
            }
        }
    };
    symmetrize(&mut cross);
    symmetrize(&mut resid_gram);
    let mut cosines: Vec<f64> =
        jacobi_eigen_oracle(&cross)?.iter().map(|p| p.value.max(0.0).sqrt().min(1.0)).collect();
    cosines.sort_by(|a, b| b.total_cmp(a));
    let mut sines: Vec<f64> =
        jacobi_eigen_oracle(&resid_gram)?.iter().map(|p| p.value.max(0.0).sqrt().min(1.0)).collect();
    sines.sort_by(f64::total_cmp);
    Ok(cosines
        .iter()
        .zip(&sines)
        .map(|(&c, &s)| if s < std::f64::consts::FRAC_1_SQRT_2 { s.asin() } else { c.acos() })
        .collect())
}

/// `u − (u·v)v` for unit `v`.
pub fn deflate(u: &RealVector, v: &RealVector) -> RealVector {
    u.sub(&v.scaled(u.dot(v)))
}

/// Left singular vectors of the matrix whose columns are `vectors`, by one-sided
/// (Hestenes) Jacobi. Returns `(σ, u)` pairs in descending `σ` order.
pub fn left_singular_vectors(vectors: &[RealVector]) -> Vec<(f64, RealVector)> {
    let mut cols: Vec<Vec<f64>> = vectors.iter().map(|v| v.0.clone()).collect();
    let m = cols.len();
    for _ in 0..60 {
        let mut rotated = false;
        for p in 0..m {
            for q in p + 1..m {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                for (x, y) in left[p].iter_mut().zip(right[0].iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut out: Vec<(f64, RealVector)> = cols
        .into_iter()
        .filter_map(|c| {
            let v = RealVector(c);
            let sigma = v.norm();
            (sigma > 0.0).then(|| (sigma, v.scaled(1.0 / sigma)))
        })
        .collect();
    out.sort_by(|a, b| b.0.total_cmp(&a.0));
    out
}

/// Orthonormal basis of the dominant subspace spanned by `vectors`: left singular
/// vectors with `σ > rel_tol · σ_max`, at most `max_rank` of them.
pub fn dominant_subspace(vectors: &[RealVector], max_rank: usize, rel_tol: f64) -> Vec<RealVector> {
    let svd = left_singular_vectors(vectors);
    let Some(&(top, _)) = svd.first() else { return Vec::new() };
    svd.into_iter()
        .take_while(|(s, _)| *s > rel_tol * top)
        .take(max_rank)
        .map(|(_, u)| u)
        .collect()
}

/// Orthonormal basis of the column space of `m` (numerical rank by `rel_tol`).
pub fn column_space(m: &DenseMatrix, rel_tol: f64) -> Vec<RealVector> {
    dominant_subspace(&m.columns(), m.rows, rel_tol)
}
