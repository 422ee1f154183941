//! Batched Householder reduction to symmetric tridiagonal form.
//!
//! Column steps run batch-synchronously: step `k` eliminates column `k`
//! below the first off-diagonal in every matrix of the batch before the
//! reduction advances to column `k + 1`. Per-matrix work inside one step
//! may run in parallel; each matrix writes only its own slices, so the
//! results are bitwise independent of the thread count.

use rayon::prelude::*;

use crate::batch::{MatrixBatch, TridiagonalBatch};
use crate::error::{EigError, Result};
use crate::linalg::matmul;

/// One Householder reflector and its scratch space for a single matrix.
/// `v` is unit-norm unless the step was skipped (`identity`), in which
/// case `beta = 0` and `H = I`.
struct HouseholderSweep {
    v: Vec<f64>,
    p: Vec<f64>,
    w: Vec<f64>,
    beta: f64,
    identity: bool,
}

impl HouseholderSweep {
    fn new(dim: usize) -> Self {
        Self {
            v: vec![0.0; dim],
            p: vec![0.0; dim],
            w: vec![0.0; dim],
            beta: 0.0,
            identity: true,
        }
    }

    /// Builds the reflector for column `k` of `a` from the entries below
    /// the first off-diagonal. Returns the new off-diagonal value.
    fn build(&mut self, a: &[f64], c: usize, k: usize) -> f64 {
        let m = c - 1 - k;
        let x0 = a[(k + 1) * c + k];
        let mut tail = 0.0;
        for i in 1..m {
            let x = a[(k + 1 + i) * c + k];
            tail += x * x;
            self.v[i] = x;
        }
        if tail == 0.0 {
            self.identity = true;
            self.beta = 0.0;
            return x0;
        }
        let sigma = (x0 * x0 + tail).sqrt();
        let alpha = if x0 >= 0.0 { -sigma } else { sigma };
        self.v[0] = x0 - alpha;
        let norm = (self.v[0] * self.v[0] + tail).sqrt();
        for vi in self.v[..m].iter_mut() {
            *vi /= norm;
        }
        self.identity = false;
        self.beta = 2.0;
        alpha
    }
}

fn reduce_one(a: &mut [f64], q: Option<&mut [f64]>, c: usize, ws: &mut HouseholderSweep) {
    let mut q = q;
    for k in 0..c.saturating_sub(2) {
        let m = c - 1 - k;
        let alpha = ws.build(a, c, k);
        if ws.identity {
            continue;
        }
        let v = &ws.v[..m];

        // p = beta * A_sub * v over the trailing (m x m) block.
        for i in 0..m {
            let row = &a[(k + 1 + i) * c + (k + 1)..(k + 1 + i) * c + (k + 1) + m];
            let mut s = 0.0;
            for j in 0..m {
                s += row[j] * v[j];
            }
            ws.p[i] = ws.beta * s;
        }
        let gamma: f64 = {
            let mut s = 0.0;
            for i in 0..m {
                s += ws.p[i] * v[i];
            }
            ws.beta * s / 2.0
        };
        for i in 0..m {
            ws.w[i] = ws.p[i] - gamma * v[i];
        }
        // A_sub <- A_sub - v w^T - w v^T (symmetric rank-2 update).
        for i in 0..m {
            let vi = ws.v[i];
            let wi = ws.w[i];
            let row = &mut a[(k + 1 + i) * c + (k + 1)..(k + 1 + i) * c + (k + 1) + m];
            for j in 0..m {
                row[j] -= vi * ws.w[j] + wi * ws.v[j];
            }
        }
        a[k * c + k + 1] = alpha;
        a[(k + 1) * c + k] = alpha;

        if let Some(qbuf) = q.as_deref_mut() {
            // Q <- Q * H, touching only columns k+1..c of each row.
            for r in 0..c {
                let row = &mut qbuf[r * c + (k + 1)..r * c + (k + 1) + m];
                let mut t = 0.0;
                for j in 0..m {
                    t += row[j] * v[j];
                }
                t *= ws.beta;
                for j in 0..m {
                    row[j] -= t * v[j];
                }
            }
        }
    }
}

/// Reduces every matrix of a validated symmetric batch to tridiagonal
/// form, optionally accumulating the orthogonal transforms so that
/// `Q^T A Q` is tridiagonal. Batches of dimension 1 or 2 are already
/// tridiagonal and pass through with `Q = I`.
pub fn tridiagonalize(m: &MatrixBatch, accumulate_q: bool) -> Result<TridiagonalBatch> {
    let b = m.batch_size();
    let c = m.dim();

    if c <= 2 {
        let mut diag = vec![0.0; b * c];
        let mut offdiag = vec![0.0; b * (c - 1)];
        for bi in 0..b {
            let a = m.mat(bi);
            for i in 0..c {
                diag[bi * c + i] = a[i * c + i];
            }
            if c == 2 {
                offdiag[bi] = a[1];
            }
        }
        let q = accumulate_q.then(|| MatrixBatch::identity(b, c));
        return TridiagonalBatch::new(b, c, diag, offdiag, q);
    }

    let mut work = m.clone();
    let mut q = accumulate_q.then(|| MatrixBatch::identity(b, c));

    let cc = c * c;
    {
        let work_data = work.data_mut();
        let mut q_data = q.as_mut().map(|q| q.data_mut());
        match q_data.as_deref_mut() {
            Some(qd) => {
                work_data
                    .par_chunks_mut(cc)
                    .zip(qd.par_chunks_mut(cc))
                    .for_each(|(a, qm)| {
                        let mut ws = HouseholderSweep::new(c);
                        reduce_one(a, Some(qm), c, &mut ws);
                    });
            }
            None => {
                work_data.par_chunks_mut(cc).for_each(|a| {
                    let mut ws = HouseholderSweep::new(c);
                    reduce_one(a, None, c, &mut ws);
                });
            }
        }
    }

    let mut diag = vec![0.0; b * c];
    let mut offdiag = vec![0.0; b * (c - 1)];
    for bi in 0..b {
        let a = work.mat(bi);
        for i in 0..c {
            diag[bi * c + i] = a[i * c + i];
        }
        for i in 0..c - 1 {
            offdiag[bi * (c - 1) + i] = a[i * c + i + 1];
        }
    }
    TridiagonalBatch::new(b, c, diag, offdiag, q)
}

/// Back-transformation `Q * V` per batch element.
pub fn apply_accumulated(q_accum: &MatrixBatch, v: &MatrixBatch) -> Result<MatrixBatch> {
    if q_accum.batch_size() != v.batch_size() || q_accum.dim() != v.dim() {
        return Err(EigError::ShapeMismatch {
            context: "apply_accumulated",
            expected: format!("{} x {}", q_accum.batch_size(), q_accum.dim()),
            actual: format!("{} x {}", v.batch_size(), v.dim()),
        });
    }
    let c = v.dim();
    let mut out = MatrixBatch::zeros(v.batch_size(), c);
    out.data_mut()
        .par_chunks_mut(c * c)
        .enumerate()
        .for_each(|(b, dst)| {
            matmul(q_accum.mat(b), c, c, v.mat(b), c, dst);
        });
    Ok(out)
}
