//! Independent reference eigensolver and result checkers.
//!
//! The oracle is a cyclic Jacobi rotation scheme driven to machine
//! precision, deliberately a different algorithm family from both the
//! divide-and-conquer and QR paths so it can arbitrate between them.
//! It processes one matrix at a time and does not care about speed.

use crate::error::{EigError, Result};

const MAX_SWEEPS: usize = 50;

/// Full eigendecomposition of a single symmetric matrix (row-major,
/// `n x n`). Returns eigenvalues sorted descending and the matching
/// eigenvector columns.
pub fn jacobi_eigh(a: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    assert_eq!(a.len(), n * n, "matrix buffer must be n*n");
    assert!(n <= 128, "oracle is meant for small matrices");
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    if n == 1 {
        return Ok((m, v));
    }

    let fro: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let target = 1e-14 * fro;

    for _ in 0..MAX_SWEEPS {
        let mut off: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[i * n + j] * m[i * n + j];
            }
        }
        if (2.0 * off).sqrt() <= target {
            let (lambda, vecs) = sort_descending(&m, &v, n);
            return Ok((lambda, vecs));
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // Two-sided rotation in the (p, q) plane.
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(EigError::NoConvergence {
        stage: "jacobi_oracle",
        batch_index: 0,
    })
}

fn sort_descending(m: &[f64], v: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| {
        m[j * n + j]
            .partial_cmp(&m[i * n + i])
            .unwrap()
            .then(i.cmp(&j))
    });
    let lambda: Vec<f64> = idx.iter().map(|&i| m[i * n + i]).collect();
    let mut vecs = vec![0.0; n * n];
    for (col, &src) in idx.iter().enumerate() {
        for row in 0..n {
            vecs[row * n + col] = v[row * n + src];
        }
    }
    (lambda, vecs)
}

/// Interlacing report for one secular solve.
///
/// With poles and roots both descending, checks `d_i < lambda_i < d_{i-1}`
/// strictly for every gap and `lambda_1 <= fro_bound` on the top (the
/// boundary equality is attained by rank-one matrices). Reports, never
/// fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterlacingReport {
    pub ordered: bool,
    pub strictly_inside_gaps: bool,
    pub below_fro_bound: bool,
}

impl InterlacingReport {
    pub fn ok(&self) -> bool {
        self.ordered && self.strictly_inside_gaps && self.below_fro_bound
    }
}

pub fn check_interlacing(d: &[f64], lambda: &[f64], fro_bound: f64) -> InterlacingReport {
    let n = d.len();
    let mut ordered = lambda.len() == n;
    if ordered {
        for i in 1..n {
            if !(lambda[i] < lambda[i - 1]) {
                ordered = false;
                break;
            }
        }
    }
    let mut inside = ordered;
    if inside {
        for i in 0..n {
            let above = lambda[i] > d[i];
            let below = if i == 0 { true } else { lambda[i] < d[i - 1] };
            if !(above && below) {
                inside = false;
                break;
            }
        }
    }
    let below_fro = if n == 0 {
        true
    } else {
        lambda[0] <= fro_bound
    };
    InterlacingReport {
        ordered,
        strictly_inside_gaps: inside,
        below_fro_bound: below_fro,
    }
}

/// `|Q^T Q - I|_F` for a row-major `n x n` matrix.
pub fn orthogonality_error(q: &[f64], n: usize) -> f64 {
    let mut err = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut dot = 0.0;
            for k in 0..n {
                dot += q[k * n + i] * q[k * n + j];
            }
            let target = if i == j { 1.0 } else { 0.0 };
            err += (dot - target) * (dot - target);
        }
    }
    err.sqrt()
}

/// `|V diag(lambda) V^T - A|_F / |A|_F` (absolute when `A` is zero).
pub fn reconstruction_error(a: &[f64], lambda: &[f64], v: &[f64], n: usize) -> f64 {
    let mut err = 0.0;
    let mut norm = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += v[i * n + k] * lambda[k] * v[j * n + k];
            }
            let d = s - a[i * n + j];
            err += d * d;
            norm += a[i * n + j] * a[i * n + j];
        }
    }
    if norm > 0.0 {
        (err / norm).sqrt()
    } else {
        err.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_fixed_point() {
        let a = vec![1.0, 0.0, 0.0, 1.0];
        let (l, v) = jacobi_eigh(&a, 2).unwrap();
        assert_eq!(l, vec![1.0, 1.0]);
        assert_eq!(v, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn two_by_two_matches_quadratic_formula() {
        let a = vec![2.0, 1.0, 1.0, 2.0];
        let (l, v) = jacobi_eigh(&a, 2).unwrap();
        assert!((l[0] - 3.0).abs() < 1e-14);
        assert!((l[1] - 1.0).abs() < 1e-14);
        assert!(orthogonality_error(&v, 2) < 1e-14);
        assert!(reconstruction_error(&a, &l, &v, 2) < 1e-14);
    }

    #[test]
    fn hilbert_like_spd_trace_identity() {
        let n = 5;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = 1.0 / ((i + j + 1) as f64);
            }
        }
        let (l, v) = jacobi_eigh(&a, n).unwrap();
        assert!(l.iter().all(|&x| x > 0.0));
        let trace: f64 = (0..n).map(|i| a[i * n + i]).sum();
        let sum: f64 = l.iter().sum();
        assert!((trace - sum).abs() < 1e-13);
        assert!(orthogonality_error(&v, n) < 1e-13);
        assert!(reconstruction_error(&a, &l, &v, n) < 1e-13);
    }

    #[test]
    fn interlacing_report_accepts_boundary() {
        let d = [1.0, 0.0];
        let lambda = [2.0, 0.5];
        let report = check_interlacing(&d, &lambda, 2.0);
        assert!(report.ok(), "{report:?}");
    }

    #[test]
    fn interlacing_report_rejects_swapped_roots() {
        let d = [1.0, 0.0];
        let lambda = [0.5, 2.0];
        assert!(!check_interlacing(&d, &lambda, 10.0).ok());
    }
}
