//! Small dense kernels shared across modules.
//!
//! The multiply accumulates over `k` in ascending order for every output
//! element regardless of shape, which keeps the eigenvalue-only and
//! full-vector driver paths bitwise identical where they share products.

/// `out = a * b` for row-major `a: ar x ac`, `b: ac x bc`.
pub(crate) fn matmul(a: &[f64], ar: usize, ac: usize, b: &[f64], bc: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), ar * ac);
    debug_assert_eq!(b.len(), ac * bc);
    debug_assert_eq!(out.len(), ar * bc);
    out.fill(0.0);
    for i in 0..ar {
        let arow = &a[i * ac..(i + 1) * ac];
        let orow = &mut out[i * bc..(i + 1) * bc];
        for (k, &aik) in arow.iter().enumerate() {
            let brow = &b[k * bc..(k + 1) * bc];
            for j in 0..bc {
                orow[j] += aik * brow[j];
            }
        }
    }
}

/// Makes the largest-magnitude entry of each column non-negative.
/// Ties pick the first occurrence, so output signs are deterministic.
pub(crate) fn canonicalize_column_signs(v: &mut [f64], n: usize) {
    for j in 0..n {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for i in 0..n {
            let x = v[i * n + j].abs();
            if x > best_abs {
                best_abs = x;
                best = i;
            }
        }
        if v[best * n + j] < 0.0 {
            for i in 0..n {
                v[i * n + j] = -v[i * n + j];
            }
        }
    }
}
