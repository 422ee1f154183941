//! The batch-efficient conquer step: secular systems built from two
//! solved halves, root localization by hybrid section plus Halley
//! refinement, and progressive shrinkage of the active problem set.
//!
//! Roots of `f(x) = 1 + rho * sum_i z_i^2 / (d_i - x)` are tracked as
//! offsets from a chosen origin pole rather than as plain values: every
//! evaluation computes `d_j - x` as `(d_j - d_origin) - tau`, which is
//! exact at the origin pole. Without this, residuals of roots pinned
//! close to a pole cannot be driven below the working tolerance, and the
//! recomputed weights feeding the eigenvector formulas lose all accuracy.

use rayon::prelude::*;

use crate::batch::SpectralFactorization;
use crate::config::SolverConfig;
use crate::error::{EigError, Result};

/// One merge problem: poles sorted descending, weights, coupling
/// strength `rho = |beta|`, and the Frobenius bound of the merged block.
#[derive(Debug, Clone)]
pub struct SecularSystem {
    pub d: Vec<f64>,
    pub z: Vec<f64>,
    pub rho: f64,
    pub fro_bound: f64,
    /// Sorted position -> concatenated (left then right) position.
    pub perm: Vec<usize>,
    pub n1: usize,
    pub n2: usize,
}

impl SecularSystem {
    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }
}

/// Assembles the secular system for one batch element from two solved
/// halves: poles are the merged child eigenvalues, weights come from the
/// last row of the left eigenvector block (scaled by `theta`) and the
/// first row of the right one.
pub fn build_system(
    left: &SpectralFactorization,
    right: &SpectralFactorization,
    b: usize,
    beta: f64,
    theta: f64,
) -> SecularSystem {
    let n1 = left.dim();
    let n2 = right.dim();
    let lq = left.eigenvectors().mat(b);
    let rq = right.eigenvectors().mat(b);
    let mut z_last = vec![0.0; n1];
    for j in 0..n1 {
        z_last[j] = lq[(n1 - 1) * n1 + j];
    }
    let mut z_first = vec![0.0; n2];
    for j in 0..n2 {
        z_first[j] = rq[j];
    }
    build_system_from_parts(
        left.eigenvalues(b),
        &z_last,
        right.eigenvalues(b),
        &z_first,
        beta,
        theta,
    )
}

pub(crate) fn build_system_from_parts(
    d1: &[f64],
    q1_last_row: &[f64],
    d2: &[f64],
    q2_first_row: &[f64],
    beta: f64,
    theta: f64,
) -> SecularSystem {
    let n1 = d1.len();
    let n2 = d2.len();
    let n = n1 + n2;
    let mut d_concat = Vec::with_capacity(n);
    let mut z_concat = Vec::with_capacity(n);
    d_concat.extend_from_slice(d1);
    d_concat.extend_from_slice(d2);
    for &q in q1_last_row {
        z_concat.push(theta * q);
    }
    z_concat.extend_from_slice(q2_first_row);

    let mut perm: Vec<usize> = (0..n).collect();
    perm.sort_by(|&i, &j| {
        d_concat[j]
            .partial_cmp(&d_concat[i])
            .unwrap()
            .then(i.cmp(&j))
    });
    let d: Vec<f64> = perm.iter().map(|&i| d_concat[i]).collect();
    let z: Vec<f64> = perm.iter().map(|&i| z_concat[i]).collect();

    let rho = beta.abs();
    let mut sum_d2 = 0.0;
    let mut sum_dz2 = 0.0;
    let mut sum_z2 = 0.0;
    for i in 0..n {
        sum_d2 += d[i] * d[i];
        sum_dz2 += d[i] * z[i] * z[i];
        sum_z2 += z[i] * z[i];
    }
    // |T|_F of the merged block via the orthogonal similarity to D + rho zz^T.
    let fro_bound = (sum_d2 + 2.0 * rho * sum_dz2 + rho * rho * sum_z2 * sum_z2)
        .max(0.0)
        .sqrt();

    SecularSystem {
        d,
        z,
        rho,
        fro_bound,
        perm,
        n1,
        n2,
    }
}

/// Rotation in the `(i, i+1)` plane used to merge a pair of nearly equal
/// poles: applied to `z` it zeroes entry `i`.
#[derive(Debug, Clone, Copy)]
pub struct PlaneRotation {
    pub i: usize,
    pub c: f64,
    pub s: f64,
}

/// Outcome of deflation: the retained subsystem plus everything resolved
/// without iteration.
#[derive(Debug, Clone)]
pub struct Deflation {
    /// Sorted-basis positions of retained poles, in descending-pole order.
    pub keep: Vec<usize>,
    /// Retained poles, strictly descending.
    pub d: Vec<f64>,
    /// Retained weights, all above the deflation threshold.
    pub z: Vec<f64>,
    /// Eigenpairs resolved immediately: (sorted position, eigenvalue).
    pub resolved: Vec<(usize, f64)>,
    /// Rotations applied to `z` in order.
    pub rotations: Vec<PlaneRotation>,
}

/// Resolves eigenpairs that need no iteration: weights at or below
/// `eta * |z|` deflate outright, and nearly equal pole pairs are merged
/// by a plane rotation that zeroes one weight. A zero coupling deflates
/// the whole system.
pub fn deflate(sys: &SecularSystem, eta: f64) -> Deflation {
    let n = sys.len();
    let z2_sum = sys.z.iter().map(|z| z * z).sum::<f64>();
    let znorm = z2_sum.sqrt();

    // A coupling that shifts eigenvalues by less than the deflation
    // tolerance of the spectral scale is the beta = 0 case.
    let shift = sys.rho * z2_sum;
    let scale = sys
        .d
        .first()
        .map(|&hi| hi.abs().max(sys.d[n - 1].abs()))
        .unwrap_or(0.0);
    if shift <= eta * (scale + shift) {
        return Deflation {
            keep: Vec::new(),
            d: Vec::new(),
            z: Vec::new(),
            resolved: (0..n).map(|i| (i, sys.d[i])).collect(),
            rotations: Vec::new(),
        };
    }

    let mut zw = sys.z.clone();
    let mut rotations = Vec::new();
    for i in 0..n.saturating_sub(1) {
        let gap = (sys.d[i] - sys.d[i + 1]).abs();
        if gap <= eta * (sys.d[i].abs() + sys.d[i + 1].abs() + sys.rho) {
            let a = zw[i];
            let b = zw[i + 1];
            let r = f64::hypot(a, b);
            if r > 0.0 && a != 0.0 {
                let c = b / r;
                let s = -a / r;
                zw[i] = 0.0;
                zw[i + 1] = r;
                rotations.push(PlaneRotation { i, c, s });
            }
        }
    }

    let threshold = eta * znorm;
    let mut keep = Vec::new();
    let mut resolved = Vec::new();
    for i in 0..n {
        if zw[i].abs() > threshold {
            keep.push(i);
        } else {
            resolved.push((i, sys.d[i]));
        }
    }
    let d = keep.iter().map(|&i| sys.d[i]).collect();
    let z = keep.iter().map(|&i| zw[i]).collect();
    Deflation {
        keep,
        d,
        z,
        resolved,
        rotations,
    }
}

/// A deflated subsystem ready for root finding.
#[derive(Debug, Clone)]
pub struct SecularProblem {
    pub d: Vec<f64>,
    pub z: Vec<f64>,
    pub rho: f64,
    /// Offset of the top root's upper bound above `d[0]`.
    pub u0_off: f64,
    /// Absolute residual target `residual_eps * (1 + rho z^T z)`.
    pub eps_res: f64,
    pub z2_sum: f64,
}

impl SecularProblem {
    /// `fro_bound` caps the top root when every pole is non-negative
    /// (the update itself is positive semi-definite); otherwise the
    /// trace bound `d_0 + rho z^T z` applies. Either way the bound is
    /// checked against the function sign and widened to the trace bound
    /// if rounding ever puts the root outside.
    pub fn new(d: Vec<f64>, z: Vec<f64>, rho: f64, fro_bound: f64, residual_eps: f64) -> Self {
        let z2_sum: f64 = z.iter().map(|z| z * z).sum();
        let trace_off = rho * z2_sum;
        let u0_off = if d.is_empty() {
            0.0
        } else if *d.last().unwrap() >= 0.0 {
            let fro_off = fro_bound - d[0];
            if fro_off > 0.0 && fro_off < trace_off {
                fro_off
            } else {
                trace_off
            }
        } else {
            trace_off
        };
        // Residual target `residual_eps * (1 + rho z^T z)`, tightened by
        // its scale-normalized form so accuracy does not degrade on
        // matrices far from unit scale (f itself is dimensionless).
        let scale = d
            .first()
            .map(|&hi| hi.abs().max(d[d.len() - 1].abs()))
            .unwrap_or(0.0)
            .max(trace_off);
        let eps_res = residual_eps * (1.0 + trace_off / scale.max(1.0));
        let mut p = Self {
            d,
            z,
            rho,
            u0_off,
            eps_res,
            z2_sum,
        };
        if !p.d.is_empty() {
            // Guard against a deflation-perturbed root sitting above the
            // Frobenius bound by a rounding-level margin.
            let (f, _, _) = eval_at(&p.d, &p.z, p.rho, 0, p.u0_off);
            if f < 0.0 {
                p.u0_off = trace_off;
            }
        }
        p
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }
}

/// Evaluates `f`, `f'`, `f''` at `x = d[origin] + tau` in one pass over
/// the poles with three accumulators.
#[inline]
pub fn eval_at(d: &[f64], z: &[f64], rho: f64, origin: usize, tau: f64) -> (f64, f64, f64) {
    let o = d[origin];
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for j in 0..d.len() {
        let w = (d[j] - o) - tau;
        let t = z[j] * z[j] / w;
        s0 += t;
        s1 += t / w;
        s2 += (t / w) / w;
    }
    (1.0 + rho * s0, rho * s1, 2.0 * rho * s2)
}

/// Bracket and iteration state for one root. Bounds and the estimate are
/// offsets from the origin pole `d[origin]`.
#[derive(Debug, Clone)]
pub struct RootBracket {
    pub origin: usize,
    pub lo: f64,
    pub hi: f64,
    pub h: f64,
    pub converged: bool,
    /// Section termination width (absolute, per root).
    target_width: f64,
    bracketed: bool,
    first_probe_done: bool,
    pub section_iters: usize,
    pub halley_iters: usize,
    pub residual: f64,
}

impl RootBracket {
    pub fn lambda(&self, d: &[f64]) -> f64 {
        d[self.origin] + self.h
    }
}

/// Initial brackets straight from the interlacing intervals: root `i`
/// lies in `(d_i, d_{i-1})`, the top root in `(d_0, d_0 + u0_off]`.
pub fn initial_brackets(p: &SecularProblem, cfg: &SolverConfig) -> Vec<RootBracket> {
    let n = p.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let width = if i == 0 {
            p.u0_off
        } else {
            p.d[i - 1] - p.d[i]
        };
        out.push(RootBracket {
            origin: i,
            lo: 0.0,
            hi: width,
            h: 0.5 * width,
            converged: false,
            target_width: cfg.bracket_eps * width,
            bracketed: false,
            first_probe_done: false,
            section_iters: 0,
            halley_iters: 0,
            residual: f64::INFINITY,
        });
    }
    out
}

/// One section probe. Returns `true` once the bracket is narrow enough.
fn section_step(p: &SecularProblem, br: &mut RootBracket, cfg: &SolverConfig) -> bool {
    if br.hi - br.lo < br.target_width {
        br.bracketed = true;
        br.h = 0.5 * (br.lo + br.hi);
        return true;
    }
    let probe = if !br.first_probe_done {
        0.5 * (br.lo + br.hi)
    } else {
        br.lo + (br.hi - br.lo) / cfg.section_count as f64
    };
    if probe <= br.lo || probe >= br.hi {
        // Bracket at floating-point resolution; nothing left to gain.
        br.bracketed = true;
        br.h = 0.5 * (br.lo + br.hi);
        return true;
    }
    let (f, _, _) = eval_at(&p.d, &p.z, p.rho, br.origin, probe);
    br.section_iters += 1;
    if f == 0.0 {
        br.h = probe;
        br.residual = 0.0;
        br.converged = true;
        br.bracketed = true;
        return true;
    }
    if f > 0.0 {
        br.hi = probe;
    } else {
        br.lo = probe;
    }
    if !br.first_probe_done {
        br.first_probe_done = true;
        // Re-anchor the evaluation origin at the nearer pole: a negative
        // midpoint value puts the root in the upper half of the gap,
        // next to the upper pole. The top root has no upper pole and
        // keeps its lower anchor.
        if f < 0.0 && br.origin > 0 {
            let gap = p.d[br.origin - 1] - p.d[br.origin];
            br.origin -= 1;
            br.lo -= gap;
            br.hi -= gap;
        }
    }
    if br.hi - br.lo < br.target_width {
        br.bracketed = true;
        br.h = 0.5 * (br.lo + br.hi);
        return true;
    }
    false
}

/// Root refinement flavor; Newton exists for the ablation harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefineMethod {
    Halley,
    Newton,
}

/// One refinement step with bracket maintenance. An update that escapes
/// the bracket falls back to the dominant-pole model — every term except
/// the origin pole's frozen at its current value, which lands near roots
/// pinned arbitrarily close to their pole in one step — and to plain
/// bisection when even that leaves the bracket.
fn refine_step(p: &SecularProblem, br: &mut RootBracket, method: RefineMethod) -> bool {
    let (f, f1, f2) = eval_at(&p.d, &p.z, p.rho, br.origin, br.h);
    br.residual = f.abs();
    if f.is_finite() {
        if f == 0.0 || f.abs() <= p.eps_res {
            br.converged = true;
            return true;
        }
        if f > 0.0 {
            br.hi = br.h;
        } else {
            br.lo = br.h;
        }
        if br.hi - br.lo <= 4.0 * f64::EPSILON * br.hi.abs().max(br.lo.abs()) {
            // Bracket at floating-point resolution.
            br.h = 0.5 * (br.lo + br.hi);
            br.converged = true;
            return true;
        }
    }
    let step = match method {
        RefineMethod::Newton => f / f1,
        RefineMethod::Halley => 2.0 * f * f1 / (2.0 * f1 * f1 - f * f2),
    };
    let mut next = br.h - step;
    if !next.is_finite() || next <= br.lo || next >= br.hi {
        let zo2 = p.z[br.origin] * p.z[br.origin];
        let frozen = f + p.rho * zo2 / br.h;
        next = p.rho * zo2 / frozen;
        if !next.is_finite() || next <= br.lo || next >= br.hi {
            next = 0.5 * (br.lo + br.hi);
        }
    }
    br.halley_iters += 1;
    br.h = next;
    false
}

/// Narrows every bracket below its termination width using one bisection
/// probe followed by multi-section probes at `L + (U - L) / k`.
pub fn hybrid_section(
    p: &SecularProblem,
    brackets: &mut [RootBracket],
    cfg: &SolverConfig,
) -> Result<()> {
    for (i, br) in brackets.iter_mut().enumerate() {
        if br.converged {
            continue;
        }
        while !section_step(p, br, cfg) {
            if br.section_iters > cfg.max_section_iters {
                return Err(EigError::MaxItersExceeded {
                    stage: "hybrid_section",
                    problem: 0,
                    root: i,
                });
            }
        }
    }
    Ok(())
}

/// Solved roots as value plus exact pole anchor, so downstream formulas
/// can evaluate `lambda - d_j` without cancellation.
#[derive(Debug, Clone)]
pub struct SecularRoots {
    pub lambda: Vec<f64>,
    pub origin: Vec<usize>,
    pub tau: Vec<f64>,
}

impl SecularRoots {
    /// Anchors plain eigenvalue estimates at their nearest pole. Used
    /// when roots come from outside the solver (perturbation studies).
    pub fn from_values(d: &[f64], lambda: &[f64]) -> Self {
        let mut origin = Vec::with_capacity(lambda.len());
        let mut tau = Vec::with_capacity(lambda.len());
        for (i, &l) in lambda.iter().enumerate() {
            let lower = i;
            let o = if i == 0 {
                0
            } else {
                let mid = 0.5 * (d[i] + d[i - 1]);
                if l <= mid {
                    lower
                } else {
                    i - 1
                }
            };
            origin.push(o);
            tau.push(l - d[o]);
        }
        Self {
            lambda: lambda.to_vec(),
            origin,
            tau,
        }
    }
}

/// Refines bracketed roots to the residual target. Returns the roots
/// (descending by construction, one per interlacing gap) and residuals.
pub fn halley_refine(
    p: &SecularProblem,
    brackets: &mut [RootBracket],
    cfg: &SolverConfig,
    method: RefineMethod,
) -> Result<(SecularRoots, Vec<f64>)> {
    for (i, br) in brackets.iter_mut().enumerate() {
        while !br.converged {
            let prev = br.h;
            if refine_step(p, br, method) {
                break;
            }
            if (br.h - prev).abs() <= cfg.rel_change_eps * br.h.abs() {
                br.converged = true;
                break;
            }
            if br.halley_iters > cfg.max_halley_iters {
                return Err(EigError::MaxItersExceeded {
                    stage: "halley_refine",
                    problem: 0,
                    root: i,
                });
            }
        }
    }
    let lambda: Vec<f64> = brackets.iter().map(|b| b.lambda(&p.d)).collect();
    let origin: Vec<usize> = brackets.iter().map(|b| b.origin).collect();
    let tau: Vec<f64> = brackets.iter().map(|b| b.h).collect();
    let residuals: Vec<f64> = brackets.iter().map(|b| b.residual).collect();
    Ok((SecularRoots {
        lambda,
        origin,
        tau,
    }, residuals))
}

/// Per-problem state in the batched solve loop.
pub(crate) struct ProblemState {
    brackets: Vec<RootBracket>,
    done: bool,
    error: Option<usize>,
}

impl ProblemState {
    /// One round: every unconverged root takes one probe or one
    /// refinement step.
    fn round(&mut self, p: &SecularProblem, cfg: &SolverConfig, method: RefineMethod) {
        let mut all_done = true;
        for (i, br) in self.brackets.iter_mut().enumerate() {
            if br.converged {
                continue;
            }
            if !br.bracketed {
                section_step(p, br, cfg);
                if !br.bracketed && br.section_iters > cfg.max_section_iters {
                    self.error = Some(i);
                    break;
                }
                if !br.converged {
                    all_done = false;
                    continue;
                }
            }
            if !br.converged {
                let prev = br.h;
                if !refine_step(p, br, method) {
                    if (br.h - prev).abs() <= cfg.rel_change_eps * br.h.abs() {
                        br.converged = true;
                    } else if br.halley_iters > cfg.max_halley_iters {
                        self.error = Some(i);
                        break;
                    }
                }
            }
            if !br.converged {
                all_done = false;
            }
        }
        if self.error.is_some() || all_done {
            self.done = true;
        }
    }
}

/// Per-problem outcome of the batched solve.
#[derive(Debug, Clone)]
pub struct SecularSolveOutcome {
    pub roots: SecularRoots,
    pub residuals: Vec<f64>,
    pub max_halley_iters: usize,
    pub total_section_iters: usize,
}

/// Solves a batch of deflated problems in lock-stepped rounds: each
/// round advances every unconverged root of every working problem by one
/// probe or one refinement step. Finished problems leave the working set
/// through [`shrink_active`] and are scattered back to their original
/// batch positions at the end, so compaction never changes any value.
pub fn solve_batch(
    problems: &[SecularProblem],
    cfg: &SolverConfig,
    method: RefineMethod,
) -> Result<Vec<SecularSolveOutcome>> {
    let mut working: Vec<(usize, ProblemState)> = problems
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let brackets = initial_brackets(p, cfg);
            let done = brackets.is_empty();
            (
                i,
                ProblemState {
                    brackets,
                    done,
                    error: None,
                },
            )
        })
        .collect();
    let mut parked: Vec<(usize, ProblemState)> = Vec::with_capacity(working.len());

    loop {
        if working.iter().all(|(_, s)| s.done) {
            parked.append(&mut working);
            break;
        }
        working.par_iter_mut().with_min_len(32).for_each(|(i, s)| {
            if !s.done {
                s.round(&problems[*i], cfg, method);
            }
        });
        shrink_active(&mut working, &mut parked, cfg.shrink_threshold);
    }
    parked.sort_unstable_by_key(|(i, _)| *i);

    for (pi, s) in &parked {
        if let Some(root) = s.error {
            if std::env::var_os("BEIG_DEBUG_SECULAR").is_some() {
                let p = &problems[*pi];
                eprintln!(
                    "secular stall: problem {pi} root {root}\n  d = {:?}\n  z = {:?}\n  rho = {:e} u0 = {:e} eps = {:e}\n  bracket = {:?}",
                    p.d, p.z, p.rho, p.u0_off, p.eps_res, s.brackets[root]
                );
            }
            return Err(EigError::MaxItersExceeded {
                stage: "secular_solve",
                problem: *pi,
                root,
            });
        }
    }

    Ok(parked
        .into_iter()
        .map(|(pi, s)| {
            let d = &problems[pi].d;
            let max_halley = s.brackets.iter().map(|b| b.halley_iters).max().unwrap_or(0);
            let sections = s.brackets.iter().map(|b| b.section_iters).sum();
            let lambda: Vec<f64> = s.brackets.iter().map(|b| b.lambda(d)).collect();
            let origin: Vec<usize> = s.brackets.iter().map(|b| b.origin).collect();
            let tau: Vec<f64> = s.brackets.iter().map(|b| b.h).collect();
            let residuals: Vec<f64> = s.brackets.iter().map(|b| b.residual).collect();
            SecularSolveOutcome {
                roots: SecularRoots {
                    lambda,
                    origin,
                    tau,
                },
                residuals,
                max_halley_iters: max_halley,
                total_section_iters: sections,
            }
        })
        .collect())
}

/// Moves converged problems out of the working set once their fraction
/// reaches `threshold`, amortizing the copy; `threshold = 0` means never
/// shrink (finished problems stay in the working set and are skipped).
pub(crate) fn shrink_active(
    working: &mut Vec<(usize, ProblemState)>,
    parked: &mut Vec<(usize, ProblemState)>,
    threshold: f64,
) {
    if threshold <= 0.0 {
        return;
    }
    let done = working.iter().filter(|(_, s)| s.done).count();
    if done > 0 && done as f64 >= threshold * working.len() as f64 {
        parked.extend(working.extract_if(.., |(_, s)| s.done));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basecase::eig2_values;
    use crate::oracle;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn dense_rank_one_update(d: &[f64], z: &[f64], rho: f64) -> Vec<f64> {
        let n = d.len();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = d[i];
            for j in 0..n {
                a[i * n + j] += rho * z[i] * z[j];
            }
        }
        a
    }

    fn random_system(n: usize, rng: &mut ChaCha8Rng) -> SecularSystem {
        let mut d: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        d.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rho = rng.random_range(0.1..2.0);
        let mut sum_d2 = 0.0;
        let mut sum_dz2 = 0.0;
        let mut sum_z2 = 0.0;
        for i in 0..n {
            sum_d2 += d[i] * d[i];
            sum_dz2 += d[i] * z[i] * z[i];
            sum_z2 += z[i] * z[i];
        }
        let fro = (sum_d2 + 2.0 * rho * sum_dz2 + rho * rho * sum_z2 * sum_z2).sqrt();
        SecularSystem {
            d,
            z,
            rho,
            fro_bound: fro,
            perm: (0..n).collect(),
            n1: n / 2,
            n2: n - n / 2,
        }
    }

    /// Deflation-aware solve: merged eigenvalues, descending.
    fn solve_merged(sys: &SecularSystem, cfg: &SolverConfig) -> Vec<f64> {
        let defl = deflate(sys, cfg.deflation_eps);
        let p = SecularProblem::new(defl.d, defl.z, sys.rho, sys.fro_bound, cfg.residual_eps);
        let out = solve_batch(&[p], cfg, RefineMethod::Halley)
            .unwrap()
            .pop()
            .unwrap();
        let mut all = out.roots.lambda;
        all.extend(defl.resolved.iter().map(|&(_, l)| l));
        all.sort_by(|a, b| b.partial_cmp(a).unwrap());
        all
    }

    #[test]
    fn zero_coupling_fully_deflates() {
        let sys = build_system_from_parts(&[2.0], &[1.0], &[1.0], &[1.0], 0.0, 1.0);
        let defl = deflate(&sys, 1e-12);
        assert!(defl.keep.is_empty());
        assert_eq!(defl.resolved, vec![(0, 2.0), (1, 1.0)]);
    }

    #[test]
    fn one_by_one_halves_match_closed_form() {
        // Merged block is [[a + rho, beta], [beta, c + rho]].
        for &(a, c, beta) in &[(1.0, 3.0, 0.5), (2.0, -1.0, -0.75), (0.0, 0.0, 1.0)] {
            let theta = if beta >= 0.0 { 1.0 } else { -1.0 };
            let sys = build_system_from_parts(&[a], &[1.0], &[c], &[1.0], beta, theta);
            let rho: f64 = beta.abs();
            let lambda = solve_merged(&sys, &SolverConfig::default());
            let (hi, lo) = eig2_values(a + rho, beta, c + rho);
            assert!((lambda[0] - hi).abs() < 1e-11, "{a} {c} {beta}");
            assert!((lambda[1] - lo).abs() < 1e-11);
        }
    }

    #[test]
    fn z_norm_is_two_for_orthonormal_rows() {
        // Last/first rows of orthogonal child blocks have unit norm, so
        // z^T z = 2 exactly up to rounding; scaled rows shrink it.
        let inv = std::f64::consts::FRAC_1_SQRT_2;
        let sys = build_system_from_parts(&[3.0, 1.0], &[inv, inv], &[2.0], &[1.0], 0.5, 1.0);
        let z2: f64 = sys.z.iter().map(|z| z * z).sum();
        assert!((z2 - 2.0).abs() < 1e-15);
        let sys = build_system_from_parts(&[3.0, 1.0], &[0.5, 0.5], &[2.0], &[0.5], 0.5, 1.0);
        let z2: f64 = sys.z.iter().map(|z| z * z).sum();
        assert!(z2 > 0.0 && z2 <= 2.0);
    }

    #[test]
    fn poles_sorted_descending_with_permutation() {
        let sys = build_system_from_parts(&[1.0, -1.0], &[0.6, 0.8], &[2.0], &[1.0], 1.0, 1.0);
        assert_eq!(sys.d, vec![2.0, 1.0, -1.0]);
        assert_eq!(sys.perm, vec![2, 0, 1]);
        assert_eq!(sys.z, vec![1.0, 0.6, 0.8]);
    }

    #[test]
    fn deflate_zero_weight_resolves_pole() {
        let sys = SecularSystem {
            d: vec![3.0, 2.0, 1.0],
            z: vec![0.7, 0.0, 0.7],
            rho: 1.0,
            fro_bound: 10.0,
            perm: vec![0, 1, 2],
            n1: 2,
            n2: 1,
        };
        let defl = deflate(&sys, 1e-12);
        assert_eq!(defl.keep, vec![0, 2]);
        assert_eq!(defl.resolved, vec![(1, 2.0)]);
        assert!(defl.rotations.is_empty());
    }

    #[test]
    fn deflate_equal_poles_rotates() {
        let sys = SecularSystem {
            d: vec![5.0, 5.0],
            z: vec![0.6, 0.8],
            rho: 1.0,
            fro_bound: 12.0,
            perm: vec![0, 1],
            n1: 1,
            n2: 1,
        };
        let defl = deflate(&sys, 1e-12);
        assert_eq!(defl.resolved, vec![(0, 5.0)]);
        assert_eq!(defl.keep, vec![1]);
        assert_eq!(defl.rotations.len(), 1);
        // Combined weight keeps the norm.
        assert!((defl.z[0] - 1.0).abs() < 1e-15);
        // The remaining single-pole root is 5 + rho * 1.
        let p = SecularProblem::new(defl.d, defl.z, 1.0, 12.0, 1e-12);
        let out = solve_batch(&[p], &SolverConfig::default(), RefineMethod::Halley)
            .unwrap()
            .pop()
            .unwrap();
        assert!((out.roots.lambda[0] - 6.0).abs() < 1e-13);
    }

    #[test]
    fn deflated_tiny_weight_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut sys = random_system(6, &mut rng);
        sys.z[3] = 1e-16;
        let defl = deflate(&sys, 1e-12);
        assert_eq!(defl.resolved.len(), 1);
        let p = SecularProblem::new(defl.d, defl.z, sys.rho, sys.fro_bound, 1e-12);
        let out = solve_batch(&[p], &SolverConfig::default(), RefineMethod::Halley)
            .unwrap()
            .pop()
            .unwrap();
        // Merge active roots and resolved poles, compare to the dense oracle.
        let mut all: Vec<f64> = out.roots.lambda.clone();
        all.extend(defl.resolved.iter().map(|&(_, l)| l));
        all.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let dense = dense_rank_one_update(&sys.d, &sys.z, sys.rho);
        let (want, _) = oracle::jacobi_eigh(&dense, 6).unwrap();
        for (got, want) in all.iter().zip(&want) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn single_pole_closed_form_root() {
        // f(x) = 1 + 1/(0 - x) has its root at exactly 1.
        let p = SecularProblem::new(vec![0.0], vec![1.0], 1.0, 1.0, 1e-12);
        let cfg = SolverConfig::default();
        let mut brackets = initial_brackets(&p, &cfg);
        assert_eq!(brackets.len(), 1);
        hybrid_section(&p, &mut brackets, &cfg).unwrap();
        let width = brackets[0].hi - brackets[0].lo;
        assert!(width < 1e-2 * 1.0, "bracket width {width}");
        assert!(brackets[0].lo < 1.0 && 1.0 <= brackets[0].hi + 1e-15);
        let (roots, residuals) = halley_refine(&p, &mut brackets, &cfg, RefineMethod::Halley).unwrap();
        assert!((roots.lambda[0] - 1.0).abs() < 1e-14);
        assert!(residuals[0] <= 1e-13);
        assert!(brackets[0].halley_iters <= 4, "iters {}", brackets[0].halley_iters);
    }

    #[test]
    fn two_pole_roots_match_2x2_oracle() {
        let inv = std::f64::consts::FRAC_1_SQRT_2;
        let d = vec![2.0, 1.0];
        let z = vec![inv, inv];
        let dense = dense_rank_one_update(&d, &z, 1.0);
        let (hi, lo) = eig2_values(dense[0], dense[1], dense[3]);
        let p = SecularProblem::new(d.clone(), z, 1.0, 100.0, 1e-12);
        let cfg = SolverConfig::default();
        let mut brackets = initial_brackets(&p, &cfg);
        hybrid_section(&p, &mut brackets, &cfg).unwrap();
        let (roots, _) = halley_refine(&p, &mut brackets, &cfg, RefineMethod::Halley).unwrap();
        assert!(roots.lambda[0] > 2.0);
        assert!(roots.lambda[1] > 1.0 && roots.lambda[1] < 2.0);
        assert!((roots.lambda[0] - hi).abs() < 1e-13);
        assert!((roots.lambda[1] - lo).abs() < 1e-13);
    }

    #[test]
    fn exact_midpoint_hit_converges_in_one_probe() {
        // Root of the lower gap sits exactly at (d_0 + d_1) / 2 = 0:
        // f(0) = 1 + 0/(1 - 0) + 1/(-1 - 0) = 0 exactly.
        let d = vec![1.0, -1.0];
        let z = vec![0.0, 1.0];
        let p = SecularProblem::new(d, z, 1.0, 100.0, 1e-12);
        let cfg = SolverConfig::default();
        let mut brackets = initial_brackets(&p, &cfg);
        let done = section_step(&p, &mut brackets[1], &cfg);
        assert!(done);
        assert!(brackets[1].converged);
        assert_eq!(brackets[1].lambda(&p.d), 0.0);
        assert_eq!(brackets[1].section_iters, 1);
    }

    #[test]
    fn sum_rule_trace_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [2usize, 5, 16, 33] {
            let sys = random_system(n, &mut rng);
            let defl = deflate(&sys, 1e-12);
            let p = SecularProblem::new(
                defl.d.clone(),
                defl.z.clone(),
                sys.rho,
                sys.fro_bound,
                1e-12,
            );
            let out = solve_batch(&[p], &SolverConfig::default(), RefineMethod::Halley)
                .unwrap()
                .pop()
                .unwrap();
            let sum: f64 = out.roots.lambda.iter().sum::<f64>()
                + defl.resolved.iter().map(|&(_, l)| l).sum::<f64>();
            let z2: f64 = sys.z.iter().map(|z| z * z).sum();
            let want: f64 = sys.d.iter().sum::<f64>() + sys.rho * z2;
            let scale: f64 = sys.d.iter().map(|x| x.abs()).sum::<f64>() + sys.rho * z2;
            assert!(
                (sum - want).abs() <= 1e-10 * scale.max(1.0),
                "n={n}: {sum} vs {want}"
            );
        }
    }

    #[test]
    fn roots_interlace_on_random_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..25 {
            let n = rng.random_range(2..24);
            let sys = random_system(n, &mut rng);
            let defl = deflate(&sys, 1e-12);
            let p = SecularProblem::new(
                defl.d.clone(),
                defl.z.clone(),
                sys.rho,
                sys.fro_bound,
                1e-12,
            );
            let out = solve_batch(&[p], &SolverConfig::default(), RefineMethod::Halley)
                .unwrap()
                .pop()
                .unwrap();
            let report = oracle::check_interlacing(&defl.d, &out.roots.lambda, sys.fro_bound);
            assert!(report.ok(), "n={n}: {report:?}");
        }
    }

    #[test]
    fn residuals_meet_scaled_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for _ in 0..10 {
            let n = rng.random_range(8..64);
            let sys = random_system(n, &mut rng);
            let defl = deflate(&sys, 1e-12);
            let z2: f64 = defl.z.iter().map(|z| z * z).sum();
            let p = SecularProblem::new(defl.d, defl.z, sys.rho, sys.fro_bound, 1e-12);
            let out = solve_batch(&[p], &SolverConfig::default(), RefineMethod::Halley)
                .unwrap()
                .pop()
                .unwrap();
            let bound = 1e-12 * (1.0 + sys.rho * z2);
            for (i, &r) in out.residuals.iter().enumerate() {
                assert!(r <= bound, "root {i}: residual {r} > {bound}");
            }
        }
    }

    #[test]
    fn halley_beats_newton_on_iteration_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(5150);
        let relaxed = SolverConfig {
            max_halley_iters: 300,
            ..SolverConfig::default()
        };
        let mut halley_wins = 0usize;
        let trials = 40;
        for _ in 0..trials {
            let n = rng.random_range(32..=64);
            let sys = random_system(n, &mut rng);
            let defl = deflate(&sys, 1e-12);
            let mk = || {
                SecularProblem::new(
                    defl.d.clone(),
                    defl.z.clone(),
                    sys.rho,
                    sys.fro_bound,
                    1e-12,
                )
            };
            let h = solve_batch(&[mk()], &relaxed, RefineMethod::Halley)
                .unwrap()
                .pop()
                .unwrap();
            let nw = solve_batch(&[mk()], &relaxed, RefineMethod::Newton)
                .unwrap()
                .pop()
                .unwrap();
            if h.max_halley_iters <= nw.max_halley_iters {
                halley_wins += 1;
            }
        }
        assert!(
            halley_wins * 10 >= trials * 9,
            "Halley won only {halley_wins}/{trials}"
        );
    }

    #[test]
    fn no_roots_left_is_a_noop() {
        let p = SecularProblem::new(Vec::new(), Vec::new(), 1.0, 0.0, 1e-12);
        let out = solve_batch(&[p], &SolverConfig::default(), RefineMethod::Halley).unwrap();
        assert!(out[0].roots.lambda.is_empty());
        assert_eq!(out[0].max_halley_iters, 0);
    }

    #[test]
    fn shrink_is_semantics_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mk_problems = |rng: &mut ChaCha8Rng| -> Vec<SecularProblem> {
            (0..24)
                .map(|_| {
                    let n = rng.random_range(2..20);
                    let sys = random_system(n, rng);
                    let defl = deflate(&sys, 1e-12);
                    SecularProblem::new(defl.d, defl.z, sys.rho, sys.fro_bound, 1e-12)
                })
                .collect()
        };
        let problems = mk_problems(&mut rng);
        let never = SolverConfig {
            shrink_threshold: 0.0,
            ..SolverConfig::default()
        };
        let quarter = SolverConfig {
            shrink_threshold: 0.25,
            ..SolverConfig::default()
        };
        let a = solve_batch(&problems, &never, RefineMethod::Halley).unwrap();
        let b = solve_batch(&problems, &quarter, RefineMethod::Halley).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.roots.lambda.len(), y.roots.lambda.len());
            for (l, r) in x.roots.lambda.iter().zip(&y.roots.lambda) {
                assert_eq!(l.to_bits(), r.to_bits(), "shrinkage changed a root");
            }
        }
    }

    #[test]
    fn shrink_active_parks_converged_problems() {
        let cfg = SolverConfig::default();
        let p = SecularProblem::new(vec![3.0, 2.0, 1.0], vec![0.5; 3], 1.0, 1e6, 1e-12);
        let mut working: Vec<(usize, ProblemState)> = (0..4)
            .map(|i| {
                (
                    i,
                    ProblemState {
                        brackets: initial_brackets(&p, &cfg),
                        done: i == 2,
                        error: None,
                    },
                )
            })
            .collect();
        let mut parked = Vec::new();
        shrink_active(&mut working, &mut parked, 0.25);
        let active: Vec<usize> = working.iter().map(|(i, _)| *i).collect();
        assert_eq!(active, vec![0, 1, 3]);
        assert_eq!(parked.len(), 1);
        assert_eq!(parked[0].0, 2);

        // Threshold zero: never shrink.
        let mut parked2 = Vec::new();
        shrink_active(&mut working, &mut parked2, 0.0);
        assert_eq!(working.len(), 3);
        assert!(parked2.is_empty());
    }

    #[test]
    fn section_cap_produces_error() {
        let p = SecularProblem::new(vec![1.0, 0.0], vec![0.7, 0.7], 1.0, 100.0, 1e-12);
        let cfg = SolverConfig {
            max_section_iters: 1,
            ..SolverConfig::default()
        };
        let mut brackets = initial_brackets(&p, &cfg);
        assert!(matches!(
            hybrid_section(&p, &mut brackets, &cfg),
            Err(EigError::MaxItersExceeded { .. })
        ));
    }
}
