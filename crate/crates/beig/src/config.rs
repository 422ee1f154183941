//! Solver configuration and presets.

use crate::error::{EigError, Result};

/// Leaf eigensolver selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseSolver {
    /// Closed-form rotation on irreducible 2x2 blocks; requires `crossover_dim = 2`.
    Givens2x2,
    /// Batched implicit-shift tridiagonal QR on leaves of any size.
    BatchedQr,
}

/// Tolerances and policy knobs for the divide-and-conquer pipeline.
///
/// `bracket_eps` is a per-root *relative* width: section iterations stop
/// once a bracket is narrower than `bracket_eps` times the width of that
/// root's interlacing gap. `residual_eps` is scaled by `1 + rho * z^T z`
/// per secular system. `shrink_threshold = 0` disables batch compaction.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Stop dividing once a block is at most this size.
    pub crossover_dim: usize,
    pub base_solver: BaseSolver,
    /// Number of sections `k` used by the multi-section probe.
    pub section_count: usize,
    pub bracket_eps: f64,
    pub residual_eps: f64,
    pub rel_change_eps: f64,
    pub max_section_iters: usize,
    pub max_halley_iters: usize,
    /// Weight/pole-gap deflation threshold `eta`.
    pub deflation_eps: f64,
    /// Converged fraction that triggers active-batch compaction.
    pub shrink_threshold: f64,
    /// QR leaf solver: sweep budget per matrix is `qr_max_sweeps * dim`.
    pub qr_max_sweeps: usize,
    /// QR leaf solver: off-diagonals below `tol * (|d_i| + |d_{i+1}|)` deflate.
    pub qr_offdiag_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            crossover_dim: 2,
            base_solver: BaseSolver::Givens2x2,
            section_count: 4,
            bracket_eps: 1e-2,
            residual_eps: 1e-12,
            rel_change_eps: 1e-14,
            max_section_iters: 60,
            max_halley_iters: 50,
            deflation_eps: 1e-12,
            shrink_threshold: 0.25,
            qr_max_sweeps: 30,
            qr_offdiag_tol: 1e-15,
        }
    }
}

impl SolverConfig {
    /// The divide-and-conquer preset: tear down to irreducible 2x2 blocks.
    pub fn dc() -> Self {
        Self::default()
    }

    /// QR-only preset: no tearing, the batched QR solver runs on the
    /// full tridiagonal form. `crossover_dim` is clamped to the matrix
    /// dimension at solve time.
    pub fn qr_only() -> Self {
        Self {
            crossover_dim: usize::MAX,
            base_solver: BaseSolver::BatchedQr,
            ..Self::default()
        }
    }

    /// Divide down to `crossover` and finish leaves with batched QR.
    pub fn dc_with_qr_leaves(crossover: usize) -> Self {
        Self {
            crossover_dim: crossover,
            base_solver: BaseSolver::BatchedQr,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.crossover_dim < 2 {
            return Err(EigError::InvalidConfig(format!(
                "crossover_dim must be >= 2, got {}",
                self.crossover_dim
            )));
        }
        if self.base_solver == BaseSolver::Givens2x2 && self.crossover_dim != 2 {
            return Err(EigError::InvalidConfig(
                "base_solver Givens2x2 requires crossover_dim = 2".into(),
            ));
        }
        if self.section_count < 2 {
            return Err(EigError::InvalidConfig(format!(
                "section_count must be >= 2, got {}",
                self.section_count
            )));
        }
        for (name, v) in [
            ("bracket_eps", self.bracket_eps),
            ("residual_eps", self.residual_eps),
            ("rel_change_eps", self.rel_change_eps),
            ("deflation_eps", self.deflation_eps),
            ("qr_offdiag_tol", self.qr_offdiag_tol),
        ] {
            if !(v > 0.0) {
                return Err(EigError::InvalidConfig(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.shrink_threshold) {
            return Err(EigError::InvalidConfig(format!(
                "shrink_threshold must lie in [0, 1], got {}",
                self.shrink_threshold
            )));
        }
        if self.max_section_iters == 0 || self.max_halley_iters == 0 || self.qr_max_sweeps == 0 {
            return Err(EigError::InvalidConfig(
                "iteration caps must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Default relative symmetry tolerance for input validation.
pub const TAU_SYM: f64 = 1e-10;
/// Orthogonality tolerance: `|V^T V - I|_F <= TAU_ORTH_PER_DIM * C`.
pub const TAU_ORTH_PER_DIM: f64 = 1e-8;
/// Relative reconstruction tolerance: `|V L V^T - A|_F <= TAU_RECON * |A|_F`.
pub const TAU_RECON: f64 = 1e-8;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        SolverConfig::default().validate().unwrap();
        SolverConfig::qr_only().validate().unwrap();
        SolverConfig::dc_with_qr_leaves(8).validate().unwrap();
    }

    #[test]
    fn givens_requires_crossover_two() {
        let cfg = SolverConfig {
            crossover_dim: 4,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn nonpositive_tolerance_rejected() {
        let cfg = SolverConfig {
            residual_eps: 0.0,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
