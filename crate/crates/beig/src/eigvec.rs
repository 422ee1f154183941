//! Eigenvector recovery for the rank-one update and assembly through
//! merge levels.
//!
//! Raw weights fed through `(lambda I - D)^{-1} z` lose orthogonality
//! when the computed roots carry error; recomputing the weights from the
//! solved roots first makes each column the exact eigenvector of a
//! nearby system. Products are accumulated as paired ratios
//! `(lambda_j - d_i) / (d_j - d_i)`, all positive under interlacing, so
//! the radicand never over- or underflows at working sizes.

use crate::error::{EigError, Result};
use crate::linalg::matmul;
use crate::secular::{Deflation, SecularProblem, SecularRoots, SecularSystem};

/// Weights recomputed from the solved roots; signs inherited from the
/// original `z`.
#[derive(Debug, Clone)]
pub struct ZHat {
    pub values: Vec<f64>,
}

/// Recomputes the weight magnitudes that make the solved roots exact:
/// `zhat_i^2 = prod_j (lambda_j - d_i) / (|beta| prod_{j != i} (d_j - d_i))`.
///
/// `lambda_j - d_i` is evaluated through each root's pole anchor, which
/// is exact whenever the root is anchored at pole `i` itself.
pub fn recompute_z(p: &SecularProblem, roots: &SecularRoots) -> Result<ZHat> {
    let n = p.d.len();
    let mut values = vec![0.0; n];
    for i in 0..n {
        let di = p.d[i];
        let mut prod = (root_minus_pole(p, roots, i, i)) / p.rho;
        if !(prod > 0.0) {
            return Err(EigError::InterlacingViolation { problem: 0, root: i });
        }
        for j in 0..n {
            if j == i {
                continue;
            }
            let num = root_minus_pole(p, roots, j, i);
            let den = p.d[j] - di;
            let ratio = num / den;
            if !(ratio > 0.0) {
                return Err(EigError::InterlacingViolation { problem: 0, root: j });
            }
            prod *= ratio;
        }
        values[i] = prod.sqrt().copysign(p.z[i]);
    }
    Ok(ZHat { values })
}

/// `lambda_j - d_i` through the root's anchor: `(d_oj - d_i) + tau_j`.
#[inline]
fn root_minus_pole(p: &SecularProblem, roots: &SecularRoots, j: usize, i: usize) -> f64 {
    (p.d[roots.origin[j]] - p.d[i]) + roots.tau[j]
}

/// Normalized eigenvector columns of the active subsystem: column `i`
/// is `(lambda_i I - D)^{-1} w` normalized, with `w` either the
/// recomputed weights or (for comparison harnesses) the raw ones.
/// Row-major `n x n`, column `i` paired with root `i`.
pub fn eigenvectors_from_z(p: &SecularProblem, roots: &SecularRoots, weights: &[f64]) -> Vec<f64> {
    let n = p.d.len();
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        let oi = roots.origin[i];
        let tau = roots.tau[i];
        let mut norm2 = 0.0;
        for j in 0..n {
            let denom = (p.d[j] - p.d[oi]) - tau;
            let v = weights[j] / denom;
            q[j * n + i] = v;
            norm2 += v * v;
        }
        let inv = 1.0 / norm2.sqrt();
        for j in 0..n {
            q[j * n + i] *= inv;
        }
    }
    q
}

/// Merged eigenvalues (descending) and the conquer-step eigenvector
/// block of one secular system: active-root columns from the stable
/// weight recomputation, deflated columns as (rotated) unit vectors,
/// all ordered by eigenvalue.
pub fn secular_vectors(
    sys: &SecularSystem,
    defl: &Deflation,
    p: &SecularProblem,
    roots: &SecularRoots,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = sys.len();
    let m = defl.keep.len();
    debug_assert_eq!(roots.lambda.len(), m);

    let sub_q = if m > 0 {
        let zhat = recompute_z(p, roots)?;
        eigenvectors_from_z(p, roots, &zhat.values)
    } else {
        Vec::new()
    };

    // Column order: merge active roots with deflated eigenpairs, both
    // already descending. Ties prefer the active root.
    let mut order: Vec<(f64, bool, usize)> = Vec::with_capacity(n);
    {
        let mut a = 0;
        let mut r = 0;
        while a < m || r < defl.resolved.len() {
            if r >= defl.resolved.len()
                || (a < m && roots.lambda[a] >= defl.resolved[r].1)
            {
                order.push((roots.lambda[a], true, a));
                a += 1;
            } else {
                order.push((defl.resolved[r].1, false, r));
                r += 1;
            }
        }
    }

    let mut lambda = vec![0.0; n];
    let mut q = vec![0.0; n * n];
    for (col, &(value, is_active, idx)) in order.iter().enumerate() {
        lambda[col] = value;
        if is_active {
            for j in 0..m {
                q[defl.keep[j] * n + col] = sub_q[j * m + idx];
            }
        } else {
            q[defl.resolved[idx].0 * n + col] = 1.0;
        }
    }

    // Undo the deflation rotations: transposed, in reverse order.
    for rot in defl.rotations.iter().rev() {
        let (top, bottom) = q.split_at_mut((rot.i + 1) * n);
        let ri = &mut top[rot.i * n..];
        let rj = &mut bottom[..n];
        for k in 0..n {
            let a = ri[k];
            let b = rj[k];
            ri[k] = rot.c * a - rot.s * b;
            rj[k] = rot.s * a + rot.c * b;
        }
    }

    Ok((lambda, q))
}

/// Un-sorts the secular eigenvector rows back to the concatenated
/// (left then right) pole order.
pub(crate) fn permute_rows(q_sorted: &[f64], perm: &[usize], n: usize) -> Vec<f64> {
    let mut w = vec![0.0; n * n];
    for (s, &dst) in perm.iter().enumerate() {
        w[dst * n..(dst + 1) * n].copy_from_slice(&q_sorted[s * n..(s + 1) * n]);
    }
    w
}

/// Assembles the merged eigenvector block
/// `blkdiag(Q1, Q2) * P * Q_secular` for one problem.
pub fn merge_vectors(
    q1: &[f64],
    n1: usize,
    q2: &[f64],
    n2: usize,
    q_secular_sorted: &[f64],
    perm: &[usize],
) -> Result<Vec<f64>> {
    let n = n1 + n2;
    if q1.len() != n1 * n1 || q2.len() != n2 * n2 || q_secular_sorted.len() != n * n {
        return Err(EigError::ShapeMismatch {
            context: "merge_vectors",
            expected: format!("blocks {n1}+{n2}"),
            actual: format!(
                "{} / {} / {}",
                q1.len(),
                q2.len(),
                q_secular_sorted.len()
            ),
        });
    }
    let w = permute_rows(q_secular_sorted, perm, n);
    let mut out = vec![0.0; n * n];
    matmul(q1, n1, n1, &w[..n1 * n], n, &mut out[..n1 * n]);
    matmul(q2, n2, n2, &w[n1 * n..], n, &mut out[n1 * n..]);
    Ok(out)
}
