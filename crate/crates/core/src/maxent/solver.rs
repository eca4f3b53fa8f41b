//! Damped Newton solve of the max-ent dual on a block-diagonal decomposition.

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hilbert::{eigh, entropy_of_weights, max_abs, CMatrix};

/// Relative size below which an operator entry is treated as structurally zero.
const PATTERN_TOL: f64 = 1e-13;
/// Smallest eigenvalue of the normalized Gram matrix for independence.
pub(crate) const GRAM_TOL: f64 = 1e-10;
/// Relative tolerance for a target sitting on a face of the spectrum.
const FACE_TOL: f64 = 1e-9;
const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
/// Multipliers beyond this mean the targets sit on (or past) the boundary.
const MAX_MULTIPLIER_NORM: f64 = 1e8;

/// One invariant subspace shared by all constraint operators.
#[derive(Debug, Clone)]
pub(crate) struct Block {
    /// Columns span the subspace inside the full space.
    pub embed: CMatrix,
    /// Restrictions `E† A_m E`, one per constraint.
    pub ops: Vec<CMatrix>,
}

impl Block {
    fn dim(&self) -> usize {
        self.embed.ncols()
    }

    fn restrict(&self, w: &CMatrix) -> Block {
        let wa = w.adjoint();
        Block {
            embed: &self.embed * w,
            ops: self.ops.iter().map(|a| &wa * a * w).collect(),
        }
    }

    fn select(&self, idx: &[usize]) -> Block {
        Block {
            embed: self.embed.select_columns(idx),
            ops: self.ops.iter().map(|a| a.select_rows(idx).select_columns(idx)).collect(),
        }
    }

    /// Splits into smaller blocks along the joint sparsity pattern.
    fn split(self) -> Vec<Block> {
        let n = self.dim();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for a in &self.ops {
            let cut = PATTERN_TOL * max_abs(a).max(1.0);
            for j in 0..n {
                for i in (j + 1)..n {
                    if a[(i, j)].norm() > cut || a[(j, i)].norm() > cut {
                        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                        if ri != rj {
                            parent[ri.max(rj)] = ri.min(rj);
                        }
                    }
                }
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut slot = vec![usize::MAX; n];
        for i in 0..n {
            let r = find(&mut parent, i);
            if slot[r] == usize::MAX {
                slot[r] = groups.len();
                groups.push(Vec::new());
            }
            groups[slot[r]].push(i);
        }
        if groups.len() == 1 {
            return vec![self];
        }
        groups.iter().map(|g| self.select(g)).collect()
    }

    fn is_diagonal(a: &CMatrix) -> bool {
        let cut = PATTERN_TOL * max_abs(a).max(1.0);
        let n = a.nrows();
        (0..n).all(|j| (0..n).all(|i| i == j || a[(i, j)].norm() <= cut))
    }
}

/// Constraint operators split into joint invariant subspaces, with the set of
/// constraints still being solved for.
#[derive(Debug, Clone)]
pub(crate) struct Problem {
    pub dim: usize,
    pub blocks: Vec<Block>,
    pub active: Vec<usize>,
}

impl Problem {
    pub fn new(ops: &[&CMatrix]) -> Self {
        let dim = ops[0].nrows();
        let block = Block {
            embed: CMatrix::identity(dim, dim),
            ops: ops.iter().map(|a| (*a).clone()).collect(),
        };
        Self {
            dim,
            blocks: block.split(),
            active: (0..ops.len()).collect(),
        }
    }

    pub fn reduced_dim(&self) -> usize {
        self.blocks.iter().map(Block::dim).sum()
    }

    /// Smallest and largest eigenvalue of constraint `m` on the current subspace.
    pub fn extremes(&self, m: usize) -> Result<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for b in &self.blocks {
            let a = &b.ops[m];
            if Block::is_diagonal(a) {
                for i in 0..a.nrows() {
                    lo = lo.min(a[(i, i)].re);
                    hi = hi.max(a[(i, i)].re);
                }
            } else {
                let s = eigh(a)?;
                hi = hi.max(s.values[0]);
                lo = lo.min(*s.values.last().expect("non-empty block"));
            }
        }
        Ok((lo, hi))
    }

    /// Restricts every block to the eigenspace of constraint `m` at `value`.
    fn restrict_to_eigenspace(&mut self, m: usize, value: f64, tol: f64) -> Result<()> {
        let mut next = Vec::new();
        for b in self.blocks.drain(..) {
            let a = &b.ops[m];
            if Block::is_diagonal(a) {
                let idx: Vec<usize> = (0..a.nrows())
                    .filter(|&i| (a[(i, i)].re - value).abs() <= tol)
                    .collect();
                if !idx.is_empty() {
                    next.extend(b.select(&idx).split());
                }
            } else {
                let s = eigh(a)?;
                let cols: Vec<usize> = (0..s.dim())
                    .filter(|&k| (s.values[k] - value).abs() <= tol)
                    .collect();
                if !cols.is_empty() {
                    let w = s.vectors.select_columns(&cols);
                    next.extend(b.restrict(&w).split());
                }
            }
        }
        self.blocks = next;
        Ok(())
    }

    /// Restricts to the faces of the spectrum pinned by boundary targets and
    /// drops constraints that become multiples of the identity.
    pub fn reduce_faces(&mut self, targets: &[f64]) -> Result<()> {
        loop {
            let mut changed = false;
            for pos in 0..self.active.len() {
                let m = self.active[pos];
                let (lo, hi) = self.extremes(m)?;
                let spread = hi - lo;
                let tol = FACE_TOL * 1f64.max(spread).max(lo.abs()).max(hi.abs());
                let t = targets[m];
                if t < lo - tol || t > hi + tol {
                    return Err(Error::Boundary {
                        index: m,
                        target: t,
                        extreme: if t < lo { lo } else { hi },
                    });
                }
                if spread <= tol {
                    self.active.remove(pos);
                    changed = true;
                    break;
                }
                if t <= lo + tol {
                    self.restrict_to_eigenspace(m, lo, tol)?;
                } else if t >= hi - tol {
                    self.restrict_to_eigenspace(m, hi, tol)?;
                } else {
                    continue;
                }
                self.active.remove(pos);
                changed = true;
                break;
            }
            if !changed {
                return Ok(());
            }
        }
    }

    /// Normalized Gram matrix of the traceless parts of `members`.
    pub fn gram(&self, members: &[usize]) -> DMatrix<f64> {
        let d = self.reduced_dim() as f64;
        let k = members.len();
        let traces: Vec<f64> = members
            .iter()
            .map(|&m| self.blocks.iter().map(|b| b.ops[m].trace().re).sum())
            .collect();
        let mut g = DMatrix::zeros(k, k);
        for a in 0..k {
            for b in a..k {
                let inner: f64 = self
                    .blocks
                    .iter()
                    .map(|blk| {
                        blk.ops[members[a]]
                            .iter()
                            .zip(blk.ops[members[b]].iter())
                            .map(|(x, y)| (x * y.conj()).re)
                            .sum::<f64>()
                    })
                    .sum();
                let v = inner - traces[a] * traces[b] / d;
                g[(a, b)] = v;
                g[(b, a)] = v;
            }
        }
        let norms: Vec<f64> = (0..k).map(|a| g[(a, a)].max(0.0).sqrt()).collect();
        for a in 0..k {
            for b in 0..k {
                let s = norms[a] * norms[b];
                g[(a, b)] = if s > 0.0 { g[(a, b)] / s } else { 0.0 };
            }
        }
        g
    }

    pub fn min_gram_eigenvalue(&self, members: &[usize]) -> f64 {
        if members.is_empty() {
            return 1.0;
        }
        let g = self.gram(members);
        g.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Keeps a maximal independent subset of the active constraints, in order.
    pub fn drop_dependent(&mut self) {
        let mut kept: Vec<usize> = Vec::new();
        for &m in &self.active {
            kept.push(m);
            if self.min_gram_eigenvalue(&kept) < GRAM_TOL {
                kept.pop();
            }
        }
        self.active = kept;
    }
}

/// Spectrum of `K = Σ λ_m A_m` in one block.
struct BlockState {
    values: Vec<f64>,
    vectors: CMatrix,
}

struct Evaluation {
    blocks: Vec<BlockState>,
    shift: f64,
    log_z: f64,
    /// Weights `e^{-(k - shift)}` per block, unnormalized.
    weights: Vec<Vec<f64>>,
}

/// Logarithmic-mean kernel `(1 - e^{-d}) / d` for `d ≥ 0`.
fn phi(d: f64) -> f64 {
    if d < 1e-10 {
        1.0 - 0.5 * d
    } else {
        -(-d).exp_m1() / d
    }
}

pub(crate) struct Solved {
    pub lambda: Vec<f64>,
    pub log_z: f64,
    pub entropy: f64,
    pub iterations: usize,
    /// `Σ_b E_b V_b diag(p) V_b† E_b†`.
    pub rho: CMatrix,
}

impl Problem {
    fn evaluate(&self, lambda: &[f64]) -> Result<Evaluation> {
        let blocks = self
            .blocks
            .par_iter()
            .map(|b| {
                let n = b.dim();
                let mut k = CMatrix::zeros(n, n);
                for (&m, &l) in self.active.iter().zip(lambda) {
                    if l != 0.0 {
                        k += b.ops[m].scale(l);
                    }
                }
                let s = eigh(&k)?;
                Ok(BlockState {
                    values: s.values,
                    vectors: s.vectors,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let shift = blocks
            .iter()
            .flat_map(|b| b.values.iter().copied())
            .fold(f64::INFINITY, f64::min);
        let weights: Vec<Vec<f64>> = blocks
            .iter()
            .map(|b| b.values.iter().map(|&k| (-(k - shift)).exp()).collect())
            .collect();
        let z: f64 = weights.iter().flatten().sum();
        Ok(Evaluation {
            blocks,
            shift,
            log_z: z.ln() - shift,
            weights,
        })
    }

    fn dual(&self, eval: &Evaluation, lambda: &[f64], targets: &[f64]) -> f64 {
        eval.log_z
            + self
                .active
                .iter()
                .zip(lambda)
                .map(|(&m, l)| l * targets[m])
                .sum::<f64>()
    }

    /// Means `<A_m>` and the Kubo–Mori covariance of the active constraints.
    fn moments(&self, eval: &Evaluation) -> (Vec<f64>, DMatrix<f64>) {
        let k = self.active.len();
        let z_scaled = (eval.log_z + eval.shift).exp();
        let parts: Vec<(Vec<f64>, DMatrix<f64>)> = self
            .blocks
            .par_iter()
            .zip(&eval.blocks)
            .zip(&eval.weights)
            .map(|((b, st), w)| {
                let n = b.dim();
                let p: Vec<f64> = w.iter().map(|x| x / z_scaled).collect();
                let va = st.vectors.adjoint();
                let tilde: Vec<CMatrix> = self
                    .active
                    .iter()
                    .map(|&m| &va * &b.ops[m] * &st.vectors)
                    .collect();
                let mut kernel = DMatrix::<f64>::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        let (ki, kj) = (st.values[i], st.values[j]);
                        kernel[(i, j)] = if ki <= kj {
                            p[i] * phi(kj - ki)
                        } else {
                            p[j] * phi(ki - kj)
                        };
                    }
                }
                let means: Vec<f64> = tilde
                    .iter()
                    .map(|t| (0..n).map(|i| p[i] * t[(i, i)].re).sum())
                    .collect();
                let mut cov = DMatrix::<f64>::zeros(k, k);
                for a in 0..k {
                    for c in a..k {
                        let mut acc = 0.0;
                        for (idx, kv) in kernel.iter().enumerate() {
                            let x = tilde[a][idx];
                            let y = tilde[c][idx];
                            acc += kv * (x.re * y.re + x.im * y.im);
                        }
                        cov[(a, c)] = acc;
                        cov[(c, a)] = acc;
                    }
                }
                (means, cov)
            })
            .collect();
        let mut means = vec![0.0; k];
        let mut cov = DMatrix::<f64>::zeros(k, k);
        for (m, c) in parts {
            for a in 0..k {
                means[a] += m[a];
            }
            cov += c;
        }
        for a in 0..k {
            for c in 0..k {
                cov[(a, c)] -= means[a] * means[c];
            }
        }
        (means, cov)
    }

    fn newton_step(cov: &DMatrix<f64>, grad: &[f64]) -> Result<DVector<f64>> {
        let k = grad.len();
        let rhs = DVector::from_iterator(k, grad.iter().map(|g| -g));
        let scale = (0..k).map(|i| cov[(i, i)]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut mu = 0.0;
        for _ in 0..40 {
            let shifted = cov + DMatrix::<f64>::identity(k, k) * mu;
            if let Some(ch) = Cholesky::new(shifted) {
                let step = ch.solve(&rhs);
                if step.iter().all(|x| x.is_finite()) {
                    return Ok(step);
                }
            }
            mu = if mu == 0.0 { 1e-14 * scale } else { mu * 10.0 };
        }
        Err(Error::numerical("max-ent Newton step", "covariance is not positive definite"))
    }

    /// Minimizes `log Z(λ) + λ·t` over the active multipliers.
    pub fn solve(&self, targets: &[f64], tol: f64, max_iter: usize) -> Result<Solved> {
        let k = self.active.len();
        let mut lambda = vec![0.0; k];
        let mut eval = self.evaluate(&lambda)?;
        let mut g = self.dual(&eval, &lambda, targets);
        let mut iterations = 0;
        let residual_of = |means: &[f64]| -> (Vec<f64>, f64) {
            let grad: Vec<f64> = self
                .active
                .iter()
                .zip(means)
                .map(|(&m, mean)| targets[m] - mean)
                .collect();
            let r = grad.iter().fold(0.0, |acc: f64, x| acc.max(x.abs()));
            (grad, r)
        };
        let (mut means, mut cov) = self.moments(&eval);
        let (mut grad, mut residual) = residual_of(&means);
        while residual > tol {
            if iterations >= max_iter {
                return Err(Error::NonConvergence {
                    iterations,
                    residual,
                    multiplier_norm: lambda.iter().map(|x| x * x).sum::<f64>().sqrt(),
                });
            }
            iterations += 1;
            let step = Self::newton_step(&cov, &grad)?;
            let slope: f64 = step.iter().zip(&grad).map(|(s, gr)| s * gr).sum();
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                let trial: Vec<f64> = lambda.iter().zip(step.iter()).map(|(l, s)| l + alpha * s).collect();
                let norm = trial.iter().map(|x| x * x).sum::<f64>().sqrt();
                let evaluated = if norm.is_finite() && norm < MAX_MULTIPLIER_NORM {
                    self.evaluate(&trial).ok()
                } else {
                    None
                };
                let Some(trial_eval) = evaluated else {
                    alpha *= 0.5;
                    continue;
                };
                let trial_g = self.dual(&trial_eval, &trial, targets);
                if trial_g <= g + ARMIJO * alpha * slope {
                    accepted = Some((trial, trial_eval, trial_g, None));
                    break;
                }
                // near the optimum the dual is flat to rounding; fall back to the gradient
                if trial_g <= g + 1e-13 * g.abs().max(1.0) {
                    let (m2, c2) = self.moments(&trial_eval);
                    let (gr2, r2) = residual_of(&m2);
                    if r2 < residual {
                        accepted = Some((trial, trial_eval, trial_g, Some((m2, c2, gr2, r2))));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let Some((trial, trial_eval, trial_g, cached)) = accepted else {
                return Err(Error::NonConvergence {
                    iterations,
                    residual,
                    multiplier_norm: lambda.iter().map(|x| x * x).sum::<f64>().sqrt(),
                });
            };
            lambda = trial;
            eval = trial_eval;
            g = trial_g;
            match cached {
                Some((m2, c2, gr2, r2)) => {
                    means = m2;
                    cov = c2;
                    grad = gr2;
                    residual = r2;
                }
                None => {
                    (means, cov) = self.moments(&eval);
                    (grad, residual) = residual_of(&means);
                }
            }
        }
        let _ = means;

        let z_scaled = (eval.log_z + eval.shift).exp();
        let mut probabilities = Vec::with_capacity(self.reduced_dim());
        let mut rho = CMatrix::zeros(self.dim, self.dim);
        for ((b, st), w) in self.blocks.iter().zip(&eval.blocks).zip(&eval.weights) {
            let p: Vec<f64> = w.iter().map(|x| x / z_scaled).collect();
            let basis = &b.embed * &st.vectors;
            let mut scaled = basis.clone();
            for (c, mut col) in scaled.column_iter_mut().enumerate() {
                col.scale_mut(p[c]);
            }
            rho += scaled * basis.adjoint();
            probabilities.extend(p);
        }
        Ok(Solved {
            lambda,
            log_z: eval.log_z,
            entropy: entropy_of_weights(&probabilities),
            iterations,
            rho,
        })
    }
}
