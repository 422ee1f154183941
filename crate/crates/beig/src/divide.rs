//! Recursive rank-one tearing of tridiagonal batches.
//!
//! A tear at split position `s` rewrites the parent as
//! `blkdiag(T1, T2) + |beta| v v^T` with `v = [0, .., theta, 1, .., 0]`,
//! `beta` the torn off-diagonal and `theta = sign(beta)`. The boundary
//! diagonal entries of both children are lowered by `|beta|`, so
//! reassembly is exact in floating point. Splits always land at the
//! ceiling midpoint; the plan flattens the resulting leaves into one
//! enlarged batch per leaf dimension.

use crate::batch::TridiagonalBatch;
use crate::config::SolverConfig;
use crate::error::{EigError, Result};

/// One tear: the split position, recursion depth, and per-element
/// coupling data. Column ranges are absolute within the original matrix;
/// the node merges blocks `[lo, mid)` and `[mid, hi)`.
#[derive(Debug, Clone)]
pub struct TearNode {
    pub lo: usize,
    pub mid: usize,
    pub hi: usize,
    pub level: usize,
    /// Torn off-diagonal per batch element.
    pub beta: Vec<f64>,
    /// `sign(beta)` per batch element, with `sign(0) = +1`.
    pub theta: Vec<f64>,
}

impl TearNode {
    #[inline]
    pub fn split_index(&self) -> usize {
        self.mid
    }
}

/// Flattened leaf problems sharing one dimension. Row `g * B + b` of
/// `tri` holds segment `segments[g]` of batch element `b`.
#[derive(Debug, Clone)]
pub struct LeafGroup {
    pub dim: usize,
    /// Indices into `TearPlan::leaf_segments`.
    pub segments: Vec<usize>,
    pub tri: TridiagonalBatch,
}

/// The full tear tree for one batch, with merge levels ordered
/// bottom-up: `levels[0]` merges leaves, the last level rebuilds the
/// whole matrix.
#[derive(Debug, Clone)]
pub struct TearPlan {
    pub batch_size: usize,
    pub dim: usize,
    pub levels: Vec<Vec<TearNode>>,
    /// Leaf column ranges `[lo, hi)` in position order.
    pub leaf_segments: Vec<(usize, usize)>,
    pub leaf_groups: Vec<LeafGroup>,
}

impl TearPlan {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_segments.len()
    }
}

/// Tears a batch once at `split`, producing the two adjusted children
/// and the per-element coupling `(beta, theta)`.
pub fn tear_once(
    t: &TridiagonalBatch,
    split: usize,
) -> Result<(TridiagonalBatch, TridiagonalBatch, Vec<f64>, Vec<f64>)> {
    let b = t.batch_size();
    let c = t.dim();
    if split == 0 || split >= c {
        return Err(EigError::SplitOutOfRange { split, dim: c });
    }
    let n1 = split;
    let n2 = c - split;
    let mut d1 = vec![0.0; b * n1];
    let mut e1 = vec![0.0; b * (n1 - 1)];
    let mut d2 = vec![0.0; b * n2];
    let mut e2 = vec![0.0; b * (n2 - 1)];
    let mut beta = vec![0.0; b];
    let mut theta = vec![0.0; b];
    for bi in 0..b {
        let d = t.diag(bi);
        let e = t.offdiag(bi);
        let bv = e[split - 1];
        beta[bi] = bv;
        theta[bi] = if bv >= 0.0 { 1.0 } else { -1.0 };
        let adj = bv.abs();
        for i in 0..n1 {
            d1[bi * n1 + i] = d[i];
        }
        d1[bi * n1 + n1 - 1] -= adj;
        for i in 0..n1 - 1 {
            e1[bi * (n1 - 1) + i] = e[i];
        }
        for i in 0..n2 {
            d2[bi * n2 + i] = d[split + i];
        }
        d2[bi * n2] -= adj;
        for i in 0..n2 - 1 {
            e2[bi * (n2 - 1) + i] = e[split + i];
        }
    }
    Ok((
        TridiagonalBatch::new(b, n1, d1, e1, None)?,
        TridiagonalBatch::new(b, n2, d2, e2, None)?,
        beta,
        theta,
    ))
}

fn split_segments(lo: usize, hi: usize, crossover: usize, depth: usize, nodes: &mut Vec<(usize, TearNode)>, leaves: &mut Vec<(usize, usize)>) {
    let len = hi - lo;
    if len <= crossover {
        leaves.push((lo, hi));
        return;
    }
    let mid = lo + len.div_ceil(2);
    nodes.push((
        depth,
        TearNode {
            lo,
            mid,
            hi,
            level: depth,
            beta: Vec::new(),
            theta: Vec::new(),
        },
    ));
    split_segments(lo, mid, crossover, depth + 1, nodes, leaves);
    split_segments(mid, hi, crossover, depth + 1, nodes, leaves);
}

/// Builds the tear tree for `t`, adjusting boundary diagonal entries for
/// every tear and flattening leaves into per-dimension sub-batches so the
/// base solver runs once per distinct leaf size.
pub fn build_plan(t: &TridiagonalBatch, cfg: &SolverConfig) -> Result<TearPlan> {
    let b = t.batch_size();
    let c = t.dim();
    let crossover = cfg.crossover_dim.min(c).max(2);

    let mut raw_nodes = Vec::new();
    let mut leaf_segments = Vec::new();
    split_segments(0, c, crossover, 0, &mut raw_nodes, &mut leaf_segments);

    // Working diagonal with every tear's |beta| subtraction applied.
    let mut diag: Vec<f64> = (0..b).flat_map(|bi| t.diag(bi).to_vec()).collect();
    for (_, node) in raw_nodes.iter_mut() {
        let mut beta = vec![0.0; b];
        let mut theta = vec![0.0; b];
        for bi in 0..b {
            let bv = t.offdiag(bi)[node.mid - 1];
            beta[bi] = bv;
            theta[bi] = if bv >= 0.0 { 1.0 } else { -1.0 };
            diag[bi * c + node.mid - 1] -= bv.abs();
            diag[bi * c + node.mid] -= bv.abs();
        }
        node.beta = beta;
        node.theta = theta;
    }

    // Group nodes bottom-up by depth.
    let max_depth = raw_nodes.iter().map(|(d, _)| *d).max();
    let mut levels: Vec<Vec<TearNode>> = Vec::new();
    if let Some(max_depth) = max_depth {
        for depth in (0..=max_depth).rev() {
            let level: Vec<TearNode> = raw_nodes
                .iter()
                .filter(|(d, _)| *d == depth)
                .map(|(_, n)| n.clone())
                .collect();
            levels.push(level);
        }
    }

    // Flatten leaves into one enlarged batch per distinct dimension.
    let mut dims: Vec<usize> = leaf_segments.iter().map(|(lo, hi)| hi - lo).collect();
    dims.sort_unstable();
    dims.dedup();
    let mut leaf_groups = Vec::with_capacity(dims.len());
    for dim in dims {
        let segments: Vec<usize> = leaf_segments
            .iter()
            .enumerate()
            .filter(|(_, (lo, hi))| hi - lo == dim)
            .map(|(i, _)| i)
            .collect();
        let rows = segments.len() * b;
        let mut gd = vec![0.0; rows * dim];
        let mut ge = vec![0.0; rows * (dim - 1)];
        for (g, &seg) in segments.iter().enumerate() {
            let (lo, _) = leaf_segments[seg];
            for bi in 0..b {
                let row = g * b + bi;
                gd[row * dim..(row + 1) * dim]
                    .copy_from_slice(&diag[bi * c + lo..bi * c + lo + dim]);
                if dim > 1 {
                    let src = &t.offdiag(bi)[lo..lo + dim - 1];
                    ge[row * (dim - 1)..(row + 1) * (dim - 1)].copy_from_slice(src);
                }
            }
        }
        leaf_groups.push(LeafGroup {
            dim,
            segments,
            tri: TridiagonalBatch::new(rows, dim, gd, ge, None)?,
        });
    }

    Ok(TearPlan {
        batch_size: b,
        dim: c,
        levels,
        leaf_segments,
        leaf_groups,
    })
}
