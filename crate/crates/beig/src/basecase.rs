//! Leaf eigensolvers: the closed-form 2x2 rotation and a batched
//! implicit Wilkinson-shift tridiagonal QR.
//!
//! The QR path advances the whole batch in rounds: every unconverged
//! matrix performs one sweep (or one direct 2x2 block solve) per round,
//! converged matrices are masked out and never touched again.

use rayon::prelude::*;

use crate::batch::{MatrixBatch, SpectralFactorization, TridiagonalBatch};
use crate::config::SolverConfig;
use crate::error::{EigError, Result};
use crate::linalg::canonicalize_column_signs;

/// Eigenvalues of `[[p, q], [q, r]]`, descending.
#[inline]
pub(crate) fn eig2_values(p: f64, q: f64, r: f64) -> (f64, f64) {
    let mid = 0.5 * (p + r);
    let h = f64::hypot(0.5 * (p - r), q);
    (mid + h, mid - h)
}

/// Rotation `(c, s)` such that the columns of `[[c, -s], [s, c]]` are the
/// eigenvectors of `[[p, q], [q, r]]`, first column paired with the
/// larger eigenvalue.
#[inline]
fn eig2_rotation(p: f64, q: f64, r: f64) -> (f64, f64) {
    let angle = 0.5 * f64::atan2(2.0 * q, p - r);
    (angle.cos(), angle.sin())
}

/// Closed-form solver for batches of irreducible 2x2 blocks.
pub fn solve_2x2(leafs: &TridiagonalBatch) -> Result<SpectralFactorization> {
    if leafs.dim() != 2 {
        return Err(EigError::ShapeMismatch {
            context: "solve_2x2",
            expected: "dim 2".into(),
            actual: format!("dim {}", leafs.dim()),
        });
    }
    let b = leafs.batch_size();
    let mut eigenvalues = vec![0.0; b * 2];
    let mut vectors = MatrixBatch::zeros(b, 2);
    for bi in 0..b {
        let p = leafs.diag(bi)[0];
        let r = leafs.diag(bi)[1];
        let q = leafs.offdiag(bi)[0];
        let (hi, lo) = eig2_values(p, q, r);
        eigenvalues[bi * 2] = hi;
        eigenvalues[bi * 2 + 1] = lo;
        let (c, s) = eig2_rotation(p, q, r);
        let v = vectors.mat_mut(bi);
        v[0] = c;
        v[1] = -s;
        v[2] = s;
        v[3] = c;
        canonicalize_column_signs(v, 2);
    }
    SpectralFactorization::new(eigenvalues, vectors)
}

/// Trivial factorization for 1x1 blocks (odd tear chains bottom out here).
pub(crate) fn solve_1x1(leafs: &TridiagonalBatch) -> Result<SpectralFactorization> {
    let b = leafs.batch_size();
    let mut eigenvalues = vec![0.0; b];
    for bi in 0..b {
        eigenvalues[bi] = leafs.diag(bi)[0];
    }
    SpectralFactorization::new(eigenvalues, MatrixBatch::identity(b, 1))
}

#[inline]
fn givens(x: f64, y: f64) -> (f64, f64) {
    if y == 0.0 {
        (1.0, 0.0)
    } else {
        let r = f64::hypot(x, y);
        (x / r, y / r)
    }
}

struct QrState {
    d: Vec<f64>,
    e: Vec<f64>,
    /// Transposed eigenvector accumulation: row `i` holds eigenvector `i`.
    vt: Option<Vec<f64>>,
    end: usize,
    sweeps_left: usize,
    done: bool,
    failed: bool,
}

impl QrState {
    fn rotate_rows(&mut self, i: usize, c: f64, s: f64, n: usize) {
        if let Some(vt) = &mut self.vt {
            let (top, bottom) = vt.split_at_mut((i + 1) * n);
            let ri = &mut top[i * n..];
            let rj = &mut bottom[..n];
            for k in 0..n {
                let a = ri[k];
                let b = rj[k];
                ri[k] = c * a + s * b;
                rj[k] = -s * a + c * b;
            }
        }
    }

    /// One unit of progress: window bookkeeping plus at most one sweep.
    fn step(&mut self, n: usize, tol: f64) {
        loop {
            if self.end == 0 {
                self.done = true;
                return;
            }
            let mut start = self.end;
            while start > 0 {
                let em = self.e[start - 1].abs();
                if em <= tol * (self.d[start - 1].abs() + self.d[start].abs()) {
                    self.e[start - 1] = 0.0;
                    break;
                }
                start -= 1;
            }
            if start == self.end {
                self.end -= 1;
                continue;
            }
            if self.sweeps_left == 0 {
                self.done = true;
                self.failed = true;
                return;
            }
            self.sweeps_left -= 1;

            if self.end - start == 1 {
                let p = self.d[start];
                let r = self.d[start + 1];
                let q = self.e[start];
                let (hi, lo) = eig2_values(p, q, r);
                let (c, s) = eig2_rotation(p, q, r);
                self.d[start] = hi;
                self.d[start + 1] = lo;
                self.e[start] = 0.0;
                self.rotate_rows(start, c, s, n);
                return;
            }

            // Implicit Wilkinson-shift sweep on [start..=end].
            let end = self.end;
            let dm = self.d[end - 1];
            let dn = self.d[end];
            let em = self.e[end - 1];
            let delta = 0.5 * (dm - dn);
            let sgn = if delta >= 0.0 { 1.0 } else { -1.0 };
            let mu = dn - em * em / (delta + sgn * f64::hypot(delta, em));

            let mut x = self.d[start] - mu;
            let mut y = self.e[start];
            for i in start..end {
                let (c, s) = givens(x, y);
                if i > start {
                    self.e[i - 1] = c * x + s * y;
                }
                let di = self.d[i];
                let di1 = self.d[i + 1];
                let ei = self.e[i];
                self.d[i] = c * c * di + 2.0 * c * s * ei + s * s * di1;
                self.d[i + 1] = s * s * di - 2.0 * c * s * ei + c * c * di1;
                self.e[i] = c * s * (di1 - di) + (c * c - s * s) * ei;
                if i < end - 1 {
                    let ei1 = self.e[i + 1];
                    x = self.e[i];
                    y = s * ei1;
                    self.e[i + 1] = c * ei1;
                }
                self.rotate_rows(i, c, s, n);
            }
            return;
        }
    }
}

pub(crate) fn solve_qr_impl(
    leafs: &TridiagonalBatch,
    cfg: &SolverConfig,
    want_q: bool,
) -> Result<(Vec<f64>, Option<MatrixBatch>)> {
    let b = leafs.batch_size();
    let n = leafs.dim();
    if n == 1 {
        let f = solve_1x1(leafs)?;
        let (vals, vecs) = f.into_parts();
        return Ok((vals, want_q.then_some(vecs)));
    }
    let tol = cfg.qr_offdiag_tol;
    let budget = cfg.qr_max_sweeps * n;

    let mut states: Vec<QrState> = (0..b)
        .map(|bi| QrState {
            d: leafs.diag(bi).to_vec(),
            e: leafs.offdiag(bi).to_vec(),
            vt: want_q.then(|| {
                let mut vt = vec![0.0; n * n];
                for i in 0..n {
                    vt[i * n + i] = 1.0;
                }
                vt
            }),
            end: n - 1,
            sweeps_left: budget,
            done: false,
            failed: false,
        })
        .collect();

    loop {
        states.par_iter_mut().with_min_len(16).for_each(|s| {
            if !s.done {
                s.step(n, tol);
            }
        });
        if states.iter().all(|s| s.done) {
            break;
        }
    }
    if let Some(bi) = states.iter().position(|s| s.failed) {
        return Err(EigError::NoConvergence {
            stage: "batched_qr",
            batch_index: bi,
        });
    }

    let mut eigenvalues = vec![0.0; b * n];
    let mut vectors = want_q.then(|| MatrixBatch::zeros(b, n));
    for (bi, s) in states.iter().enumerate() {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&i, &j| s.d[j].partial_cmp(&s.d[i]).unwrap().then(i.cmp(&j)));
        for (col, &src) in idx.iter().enumerate() {
            eigenvalues[bi * n + col] = s.d[src];
        }
        if let Some(vectors) = &mut vectors {
            let vt = s.vt.as_ref().unwrap();
            let out = vectors.mat_mut(bi);
            for (col, &src) in idx.iter().enumerate() {
                for row in 0..n {
                    out[row * n + col] = vt[src * n + row];
                }
            }
            canonicalize_column_signs(out, n);
        }
    }
    Ok((eigenvalues, vectors))
}

/// Batched implicit-shift tridiagonal QR with eigenvector accumulation.
pub fn solve_qr(leafs: &TridiagonalBatch, cfg: &SolverConfig) -> Result<SpectralFactorization> {
    let (vals, vecs) = solve_qr_impl(leafs, cfg, true)?;
    SpectralFactorization::new(vals, vecs.expect("vectors requested"))
}
