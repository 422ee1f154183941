//! Public solver API: tridiagonalize, tear, solve leaves, then merge
//! level-synchronously — all merge problems of one tree level form a
//! single secular batch — and back-transform to the original basis.

use rayon::prelude::*;

use crate::basecase;
use crate::batch::{EigenvalueBatch, MatrixBatch, SpectralFactorization};
use crate::config::{BaseSolver, SolverConfig};
use crate::divide::{self, TearPlan};
use crate::eigvec;
use crate::error::{EigError, Result};
use crate::linalg::{canonicalize_column_signs, matmul};
use crate::oracle;
use crate::secular::{self, RefineMethod, SecularProblem, SecularSystem};
use crate::tridiag;

/// Counters collected across every secular solve of one driver call.
#[derive(Debug, Clone, Default)]
pub struct SolveStats {
    pub secular_solves: usize,
    pub interlacing_violations: usize,
    pub deflated_eigenpairs: usize,
    pub max_residual: f64,
    pub max_halley_iters: usize,
    pub total_section_iters: usize,
}


/// One solved sub-block of the conquer state.
struct SolvedBlock {
    lo: usize,
    len: usize,
    /// `B x len`, descending per row.
    eigvals: Vec<f64>,
    q: BlockQ,
}

enum BlockQ {
    /// `B x len x len`, row-major per element.
    Full(Vec<f64>),
    /// First and last rows only (`B x len` each); enough to build the
    /// next level's weights when nobody needs the full vectors.
    Edge { first: Vec<f64>, last: Vec<f64> },
}

impl SolvedBlock {
    fn first_row(&self, b: usize) -> &[f64] {
        match &self.q {
            BlockQ::Full(q) => &q[b * self.len * self.len..b * self.len * self.len + self.len],
            BlockQ::Edge { first, .. } => &first[b * self.len..(b + 1) * self.len],
        }
    }

    fn last_row(&self, b: usize) -> &[f64] {
        match &self.q {
            BlockQ::Full(q) => {
                let n = self.len;
                &q[b * n * n + (n - 1) * n..b * n * n + n * n]
            }
            BlockQ::Edge { last, .. } => &last[b * self.len..(b + 1) * self.len],
        }
    }

    fn full(&self, b: usize) -> &[f64] {
        match &self.q {
            BlockQ::Full(q) => &q[b * self.len * self.len..(b + 1) * self.len * self.len],
            BlockQ::Edge { .. } => unreachable!("full vectors requested on edge-only block"),
        }
    }
}

fn leaf_blocks(
    plan: &TearPlan,
    cfg: &SolverConfig,
    want_vectors: bool,
    keep_full: bool,
) -> Result<Vec<SolvedBlock>> {
    let b = plan.batch_size;
    let mut blocks: Vec<Option<SolvedBlock>> = (0..plan.leaf_segments.len())
        .map(|_| None)
        .collect();
    for group in &plan.leaf_groups {
        let dim = group.dim;
        // Leaves feeding a merge always need their eigenvector edges;
        // only a merge-free solve can skip vectors entirely.
        let need_q = keep_full || plan.depth() > 0 || want_vectors;
        let f = match (dim, cfg.base_solver) {
            (1, _) => {
                let f = basecase::solve_1x1(&group.tri)?;
                let (vals, vecs) = f.into_parts();
                (vals, need_q.then_some(vecs))
            }
            (2, BaseSolver::Givens2x2) => {
                let f = basecase::solve_2x2(&group.tri)?;
                let (vals, vecs) = f.into_parts();
                (vals, need_q.then_some(vecs))
            }
            _ => basecase::solve_qr_impl(&group.tri, cfg, need_q)?,
        };
        let (vals, vecs) = f;
        for (g, &seg) in group.segments.iter().enumerate() {
            let (lo, hi) = plan.leaf_segments[seg];
            let len = hi - lo;
            let mut eigvals = vec![0.0; b * len];
            for bi in 0..b {
                let row = g * b + bi;
                eigvals[bi * len..(bi + 1) * len]
                    .copy_from_slice(&vals[row * len..(row + 1) * len]);
            }
            let q = match &vecs {
                None => BlockQ::Edge {
                    first: vec![0.0; 0],
                    last: vec![0.0; 0],
                },
                Some(vecs) => {
                    if keep_full {
                        let mut q = vec![0.0; b * len * len];
                        for bi in 0..b {
                            let row = g * b + bi;
                            q[bi * len * len..(bi + 1) * len * len]
                                .copy_from_slice(vecs.mat(row));
                        }
                        BlockQ::Full(q)
                    } else {
                        let mut first = vec![0.0; b * len];
                        let mut last = vec![0.0; b * len];
                        for bi in 0..b {
                            let row = g * b + bi;
                            let m = vecs.mat(row);
                            first[bi * len..(bi + 1) * len].copy_from_slice(&m[..len]);
                            last[bi * len..(bi + 1) * len]
                                .copy_from_slice(&m[(len - 1) * len..]);
                        }
                        BlockQ::Edge { first, last }
                    }
                }
            };
            blocks[seg] = Some(SolvedBlock {
                lo,
                len,
                eigvals,
                q,
            });
        }
    }
    Ok(blocks.into_iter().map(|blk| blk.unwrap()).collect())
}

/// Everything one merge job needs after the batched root solve.
struct MergeJob {
    sys: SecularSystem,
    defl: secular::Deflation,
}

fn conquer_level(
    blocks: &mut Vec<SolvedBlock>,
    nodes: &[divide::TearNode],
    b: usize,
    cfg: &SolverConfig,
    keep_full: bool,
    stats: &mut SolveStats,
) -> Result<()> {
    // Pair up the blocks for each node.
    let mut merges = Vec::with_capacity(nodes.len());
    for node in nodes {
        let li = blocks
            .iter()
            .position(|blk| blk.lo == node.lo && blk.lo + blk.len == node.mid)
            .expect("left child solved");
        let ri = blocks
            .iter()
            .position(|blk| blk.lo == node.mid && blk.lo + blk.len == node.hi)
            .expect("right child solved");
        merges.push((li, ri));
    }

    // Build all secular problems of this level as one batch.
    let mut jobs: Vec<MergeJob> = Vec::with_capacity(nodes.len() * b);
    let mut problems: Vec<SecularProblem> = Vec::with_capacity(nodes.len() * b);
    for (node, &(li, ri)) in nodes.iter().zip(&merges) {
        let left = &blocks[li];
        let right = &blocks[ri];
        for bi in 0..b {
            let sys = secular::build_system_from_parts(
                &left.eigvals[bi * left.len..(bi + 1) * left.len],
                left.last_row(bi),
                &right.eigvals[bi * right.len..(bi + 1) * right.len],
                right.first_row(bi),
                node.beta[bi],
                node.theta[bi],
            );
            let defl = secular::deflate(&sys, cfg.deflation_eps);
            problems.push(SecularProblem::new(
                defl.d.clone(),
                defl.z.clone(),
                sys.rho,
                sys.fro_bound,
                cfg.residual_eps,
            ));
            jobs.push(MergeJob { sys, defl });
        }
    }

    let outcomes =
        secular::solve_batch(&problems, cfg, RefineMethod::Halley).map_err(|e| match e {
            EigError::MaxItersExceeded {
                stage,
                problem,
                root,
            } => EigError::MaxItersExceeded {
                stage,
                problem: problem % b,
                root,
            },
            other => other,
        })?;

    stats.secular_solves += jobs.len();
    for (job, outcome) in jobs.iter().zip(&outcomes) {
        stats.deflated_eigenpairs += job.defl.resolved.len();
        stats.max_halley_iters = stats.max_halley_iters.max(outcome.max_halley_iters);
        stats.total_section_iters += outcome.total_section_iters;
        for &r in &outcome.residuals {
            if r.is_finite() {
                stats.max_residual = stats.max_residual.max(r);
            }
        }
        if !job.defl.d.is_empty() {
            let report =
                oracle::check_interlacing(&job.defl.d, &outcome.roots.lambda, job.sys.fro_bound);
            if !report.ok() {
                stats.interlacing_violations += 1;
            }
        }
    }

    // Assemble merged blocks node by node, parallel over batch elements.
    let mut new_blocks: Vec<SolvedBlock> = Vec::with_capacity(nodes.len());
    for (ni, (node, &(li, ri))) in nodes.iter().zip(&merges).enumerate() {
        let left = &blocks[li];
        let right = &blocks[ri];
        let n1 = left.len;
        let n2 = right.len;
        let n = n1 + n2;
        let mut eigvals = vec![0.0; b * n];
        let mut q = if keep_full {
            BlockQ::Full(vec![0.0; b * n * n])
        } else {
            BlockQ::Edge {
                first: vec![0.0; b * n],
                last: vec![0.0; b * n],
            }
        };

        let results: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..b)
            .into_par_iter()
            .with_min_len(8)
            .map(|bi| {
                let idx = ni * b + bi;
                let job = &jobs[idx];
                eigvec::secular_vectors(&job.sys, &job.defl, &problems[idx], &outcomes[idx].roots)
            })
            .collect();

        let lambdas_qsec: Vec<(Vec<f64>, Vec<f64>)> = results
            .into_iter()
            .enumerate()
            .map(|(bi, r)| {
                r.map_err(|e| match e {
                    EigError::InterlacingViolation { root, .. } => {
                        EigError::InterlacingViolation { problem: bi, root }
                    }
                    other => other,
                })
            })
            .collect::<Result<_>>()?;

        match &mut q {
            BlockQ::Full(qbuf) => {
                qbuf.par_chunks_mut(n * n)
                    .enumerate()
                    .with_min_len(8)
                    .for_each(|(bi, dst)| {
                        let idx = ni * b + bi;
                        let (_, q_sec) = &lambdas_qsec[bi];
                        let w = eigvec::permute_rows(q_sec, &jobs[idx].sys.perm, n);
                        matmul(left.full(bi), n1, n1, &w[..n1 * n], n, &mut dst[..n1 * n]);
                        matmul(right.full(bi), n2, n2, &w[n1 * n..], n, &mut dst[n1 * n..]);
                    });
            }
            BlockQ::Edge { first, last } => {
                first
                    .par_chunks_mut(n)
                    .zip(last.par_chunks_mut(n))
                    .enumerate()
                    .with_min_len(8)
                    .for_each(|(bi, (fdst, ldst))| {
                        let idx = ni * b + bi;
                        let (_, q_sec) = &lambdas_qsec[bi];
                        let w = eigvec::permute_rows(q_sec, &jobs[idx].sys.perm, n);
                        matmul(left.first_row(bi), 1, n1, &w[..n1 * n], n, fdst);
                        matmul(right.last_row(bi), 1, n2, &w[n1 * n..], n, ldst);
                    });
            }
        }
        for bi in 0..b {
            eigvals[bi * n..(bi + 1) * n].copy_from_slice(&lambdas_qsec[bi].0);
        }

        new_blocks.push(SolvedBlock {
            lo: node.lo,
            len: n,
            eigvals,
            q,
        });
    }

    // Replace merged children with their parents.
    let mut consumed: Vec<usize> = merges.iter().flat_map(|&(l, r)| [l, r]).collect();
    consumed.sort_unstable();
    for &i in consumed.iter().rev() {
        blocks.remove(i);
    }
    blocks.append(&mut new_blocks);
    blocks.sort_by_key(|blk| blk.lo);
    Ok(())
}

fn solve_pipeline(
    m: &MatrixBatch,
    cfg: &SolverConfig,
    want_vectors: bool,
) -> Result<(Vec<f64>, Option<MatrixBatch>, SolveStats)> {
    cfg.validate()?;
    let b = m.batch_size();
    let c = m.dim();
    let mut stats = SolveStats::default();

    let mut t = tridiag::tridiagonalize(m, want_vectors)?;
    let house_q = t.take_q();
    let plan = divide::build_plan(&t, cfg)?;

    let mut blocks = leaf_blocks(&plan, cfg, want_vectors, want_vectors)?;
    for level in &plan.levels {
        conquer_level(&mut blocks, level, b, cfg, want_vectors, &mut stats)?;
    }
    debug_assert_eq!(blocks.len(), 1);
    let root = blocks.pop().expect("root block");
    debug_assert_eq!(root.len, c);

    let eigenvalues = root.eigvals;
    if !want_vectors {
        return Ok((eigenvalues, None, stats));
    }

    let root_q = match root.q {
        BlockQ::Full(qbuf) => MatrixBatch::new(b, c, qbuf)?,
        BlockQ::Edge { .. } => unreachable!("vector path keeps full blocks"),
    };
    let mut vectors = match house_q {
        Some(hq) => tridiag::apply_accumulated(&hq, &root_q)?,
        None => root_q,
    };
    vectors
        .data_mut()
        .par_chunks_mut(c * c)
        .for_each(|v| canonicalize_column_signs(v, c));
    Ok((eigenvalues, Some(vectors), stats))
}

/// Full batched eigendecomposition, eigenvalues descending per element.
///
/// Input must have passed [`crate::validate_symmetric`].
pub fn batched_eigh(m: &MatrixBatch, cfg: &SolverConfig) -> Result<SpectralFactorization> {
    let (vals, vecs, _) = solve_pipeline(m, cfg, true)?;
    SpectralFactorization::new(vals, vecs.expect("vectors requested"))
}

/// Like [`batched_eigh`] but also returns solve statistics (secular
/// residuals, interlacing checks, deflation and iteration counters).
pub fn batched_eigh_detailed(
    m: &MatrixBatch,
    cfg: &SolverConfig,
) -> Result<(SpectralFactorization, SolveStats)> {
    let (vals, vecs, stats) = solve_pipeline(m, cfg, true)?;
    Ok((
        SpectralFactorization::new(vals, vecs.expect("vectors requested"))?,
        stats,
    ))
}

/// Eigenvalues only. Same code path as [`batched_eigh`] with vector
/// assembly suppressed; the returned values are bit-identical.
pub fn batched_eigvalsh(m: &MatrixBatch, cfg: &SolverConfig) -> Result<EigenvalueBatch> {
    let (vals, _, _) = solve_pipeline(m, cfg, false)?;
    Ok(EigenvalueBatch {
        batch_size: m.batch_size(),
        dim: m.dim(),
        values: vals,
    })
}
