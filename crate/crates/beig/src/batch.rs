//! Batch containers shared by every stage of the pipeline.
//!
//! A batch holds `B` symmetric `C x C` matrices in one contiguous buffer,
//! row-major within each matrix and matrices consecutive, so
//! each per-matrix view is a contiguous `C*C` slice. All containers are
//! immutable-after-construction value types; no interior mutation.

use crate::error::{EigError, Result};

/// `B` dense `C x C` matrices in one contiguous buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixBatch {
    batch_size: usize,
    dim: usize,
    data: Vec<f64>,
}

impl MatrixBatch {
    /// Wraps a raw buffer; `data.len()` must equal `batch_size * dim * dim`.
    pub fn new(batch_size: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if batch_size == 0 || dim == 0 {
            return Err(EigError::ShapeMismatch {
                context: "MatrixBatch::new",
                expected: "positive batch size and dimension".into(),
                actual: format!("B={batch_size}, C={dim}"),
            });
        }
        let expected = batch_size * dim * dim;
        if data.len() != expected {
            return Err(EigError::ShapeMismatch {
                context: "MatrixBatch::new",
                expected: format!("{expected} scalars"),
                actual: format!("{}", data.len()),
            });
        }
        Ok(Self {
            batch_size,
            dim,
            data,
        })
    }

    pub fn zeros(batch_size: usize, dim: usize) -> Self {
        Self {
            batch_size,
            dim,
            data: vec![0.0; batch_size * dim * dim],
        }
    }

    pub fn identity(batch_size: usize, dim: usize) -> Self {
        let mut m = Self::zeros(batch_size, dim);
        for b in 0..batch_size {
            for i in 0..dim {
                m.data[b * dim * dim + i * dim + i] = 1.0;
            }
        }
        m
    }

    #[inline]
    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Contiguous row-major view of matrix `b`.
    #[inline]
    pub fn mat(&self, b: usize) -> &[f64] {
        let n = self.dim * self.dim;
        &self.data[b * n..(b + 1) * n]
    }

    #[inline]
    pub(crate) fn mat_mut(&mut self, b: usize) -> &mut [f64] {
        let n = self.dim * self.dim;
        &mut self.data[b * n..(b + 1) * n]
    }

    #[inline]
    pub fn get(&self, b: usize, i: usize, j: usize) -> f64 {
        self.data[b * self.dim * self.dim + i * self.dim + j]
    }
}

/// Checks per-matrix symmetry and returns the explicitly symmetrized batch.
///
/// Each matrix is replaced by `(A + A^T) / 2`; the check itself compares
/// the max-norm of `A - A^T` against `tau_sym` times the max-norm of `A`.
/// Exactly symmetric input is returned bit-identically, which makes the
/// operation idempotent.
pub fn validate_symmetric(m: MatrixBatch, tau_sym: f64) -> Result<MatrixBatch> {
    let c = m.dim;
    let mut out = m;
    for b in 0..out.batch_size {
        let a = out.mat(b);
        let mut asym: f64 = 0.0;
        let mut norm: f64 = 0.0;
        let mut finite = true;
        for i in 0..c {
            for j in 0..c {
                finite &= a[i * c + j].is_finite();
                norm = norm.max(a[i * c + j].abs());
                if j > i {
                    asym = asym.max((a[i * c + j] - a[j * c + i]).abs());
                }
            }
        }
        if !finite || !(asym <= tau_sym * norm) {
            return Err(EigError::AsymmetricInput { batch_index: b });
        }
        let a = out.mat_mut(b);
        for i in 0..c {
            for j in (i + 1)..c {
                let s = (a[i * c + j] + a[j * c + i]) / 2.0;
                a[i * c + j] = s;
                a[j * c + i] = s;
            }
        }
    }
    Ok(out)
}

/// `B` symmetric tridiagonal matrices stored as diagonal and off-diagonal
/// vectors, plus the accumulated orthogonal transforms when requested.
#[derive(Debug, Clone)]
pub struct TridiagonalBatch {
    batch_size: usize,
    dim: usize,
    diag: Vec<f64>,
    offdiag: Vec<f64>,
    q_accum: Option<MatrixBatch>,
}

impl TridiagonalBatch {
    pub fn new(
        batch_size: usize,
        dim: usize,
        diag: Vec<f64>,
        offdiag: Vec<f64>,
        q_accum: Option<MatrixBatch>,
    ) -> Result<Self> {
        if diag.len() != batch_size * dim || offdiag.len() != batch_size * dim.saturating_sub(1) {
            return Err(EigError::ShapeMismatch {
                context: "TridiagonalBatch::new",
                expected: format!(
                    "diag {} / offdiag {}",
                    batch_size * dim,
                    batch_size * dim.saturating_sub(1)
                ),
                actual: format!("diag {} / offdiag {}", diag.len(), offdiag.len()),
            });
        }
        if let Some(q) = &q_accum {
            if q.batch_size() != batch_size || q.dim() != dim {
                return Err(EigError::ShapeMismatch {
                    context: "TridiagonalBatch::new",
                    expected: format!("Q batch {batch_size} x {dim}"),
                    actual: format!("Q batch {} x {}", q.batch_size(), q.dim()),
                });
            }
        }
        Ok(Self {
            batch_size,
            dim,
            diag,
            offdiag,
            q_accum,
        })
    }

    #[inline]
    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn diag(&self, b: usize) -> &[f64] {
        &self.diag[b * self.dim..(b + 1) * self.dim]
    }

    #[inline]
    pub fn offdiag(&self, b: usize) -> &[f64] {
        let m = self.dim - 1;
        &self.offdiag[b * m..(b + 1) * m]
    }

    pub fn q_accum(&self) -> Option<&MatrixBatch> {
        self.q_accum.as_ref()
    }

    pub fn take_q(&mut self) -> Option<MatrixBatch> {
        self.q_accum.take()
    }

    /// Dense row-major reassembly of matrix `b`, mostly for checks.
    pub fn to_dense(&self, b: usize) -> Vec<f64> {
        let c = self.dim;
        let mut a = vec![0.0; c * c];
        let d = self.diag(b);
        for i in 0..c {
            a[i * c + i] = d[i];
        }
        if c > 1 {
            let e = self.offdiag(b);
            for i in 0..c - 1 {
                a[i * c + i + 1] = e[i];
                a[(i + 1) * c + i] = e[i];
            }
        }
        a
    }
}

/// Eigenvalues (descending within each row) paired with eigenvector
/// batches; column `j` of matrix `b` belongs to `eigenvalues(b)[j]`.
#[derive(Debug, Clone)]
pub struct SpectralFactorization {
    eigenvalues: Vec<f64>,
    eigenvectors: MatrixBatch,
}

impl SpectralFactorization {
    pub fn new(eigenvalues: Vec<f64>, eigenvectors: MatrixBatch) -> Result<Self> {
        if eigenvalues.len() != eigenvectors.batch_size() * eigenvectors.dim() {
            return Err(EigError::ShapeMismatch {
                context: "SpectralFactorization::new",
                expected: format!("{}", eigenvectors.batch_size() * eigenvectors.dim()),
                actual: format!("{}", eigenvalues.len()),
            });
        }
        Ok(Self {
            eigenvalues,
            eigenvectors,
        })
    }

    #[inline]
    pub fn batch_size(&self) -> usize {
        self.eigenvectors.batch_size()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.eigenvectors.dim()
    }

    #[inline]
    pub fn eigenvalues(&self, b: usize) -> &[f64] {
        &self.eigenvalues[b * self.dim()..(b + 1) * self.dim()]
    }

    #[inline]
    pub fn all_eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    #[inline]
    pub fn eigenvectors(&self) -> &MatrixBatch {
        &self.eigenvectors
    }

    pub fn into_parts(self) -> (Vec<f64>, MatrixBatch) {
        (self.eigenvalues, self.eigenvectors)
    }
}

/// Eigenvalues-only result of the vector-free solve path.
#[derive(Debug, Clone)]
pub struct EigenvalueBatch {
    pub batch_size: usize,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl EigenvalueBatch {
    #[inline]
    pub fn row(&self, b: usize) -> &[f64] {
        &self.values[b * self.dim..(b + 1) * self.dim]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_batch_passes_validation_unchanged() {
        let m = MatrixBatch::identity(3, 4);
        let before = m.data().to_vec();
        let v = validate_symmetric(m, 1e-10).unwrap();
        assert_eq!(v.data(), &before[..]);
    }

    #[test]
    fn near_symmetric_passes_after_symmetrization() {
        let mut data = vec![0.0; 4];
        data[0] = 1.0;
        data[1] = 1.0;
        data[2] = 1.0 + 1e-14;
        data[3] = 2.0;
        let m = MatrixBatch::new(1, 2, data).unwrap();
        let v = validate_symmetric(m, 1e-10).unwrap();
        assert_eq!(v.get(0, 0, 1), v.get(0, 1, 0));
        assert!((v.get(0, 0, 1) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn asymmetric_input_reports_first_offender() {
        let data = vec![0.0, 1.0, 2.0, 0.0];
        let m = MatrixBatch::new(1, 2, data).unwrap();
        match validate_symmetric(m, 1e-10) {
            Err(EigError::AsymmetricInput { batch_index }) => assert_eq!(batch_index, 0),
            other => panic!("expected AsymmetricInput, got {other:?}"),
        }
    }

    #[test]
    fn validate_symmetric_is_idempotent() {
        let data = vec![1.0, 0.5, 0.5 + 1e-12, 2.0];
        let m = MatrixBatch::new(1, 2, data).unwrap();
        let once = validate_symmetric(m, 1e-10).unwrap();
        let snapshot = once.data().to_vec();
        let twice = validate_symmetric(once, 1e-10).unwrap();
        assert_eq!(twice.data(), &snapshot[..]);
    }

    #[test]
    fn nan_input_is_rejected() {
        let data = vec![f64::NAN, 0.0, 0.0, 1.0];
        let m = MatrixBatch::new(1, 2, data).unwrap();
        assert!(validate_symmetric(m, 1e-10).is_err());
    }

    #[test]
    fn tridiagonal_dense_roundtrip() {
        let t = TridiagonalBatch::new(1, 3, vec![1.0, 2.0, 3.0], vec![0.5, -0.25], None).unwrap();
        let a = t.to_dense(0);
        assert_eq!(a, vec![1.0, 0.5, 0.0, 0.5, 2.0, -0.25, 0.0, -0.25, 3.0]);
    }
}
