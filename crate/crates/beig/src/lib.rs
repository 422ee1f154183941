//! Batch-first eigendecomposition for mini-batches of small symmetric
//! matrices.
//!
//! The solver reduces every matrix to tridiagonal form, tears the
//! tridiagonal recursively into half-size blocks (a rank-one
//! modification couples each pair), solves the irreducible leaves in
//! closed form or with a batched QR iteration, and then merges the
//! halves back level by level through secular-equation root finding.
//! All matrices of a batch move through each stage together, so the
//! per-stage work stays uniform and the active set can shrink as
//! elements converge.
//!
//! ```
//! use beig::{batched_eigh, validate_symmetric, MatrixBatch, SolverConfig};
//!
//! let m = validate_symmetric(MatrixBatch::identity(4, 8), 1e-10).unwrap();
//! let f = batched_eigh(&m, &SolverConfig::default()).unwrap();
//! assert!(f.eigenvalues(0).iter().all(|&l| (l - 1.0).abs() < 1e-12));
//! ```

mod linalg;

pub mod basecase;
pub mod batch;
pub mod config;
pub mod divide;
pub mod driver;
pub mod eigvec;
pub mod error;
pub mod io;
pub mod oracle;
pub mod secular;
pub mod tridiag;

pub use batch::{
    validate_symmetric, EigenvalueBatch, MatrixBatch, SpectralFactorization, TridiagonalBatch,
};
pub use config::{BaseSolver, SolverConfig, TAU_ORTH_PER_DIM, TAU_RECON, TAU_SYM};
pub use driver::{batched_eigh, batched_eigh_detailed, batched_eigvalsh, SolveStats};
pub use error::{EigError, Result};
pub use io::{read_batch, write_batch};
