//! Decoherence functionals, medium decoherence and probability sum rules.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::hilbert::{check_dim, CMatrix, DensityMatrix, StateVector};
use crate::histories::{
    exhaustiveness_defect, Branches, ClassOperator, CoarseGrainingMap, History, HistorySet,
    PRUNE_TOL,
};

/// Default tolerance for a decoherent verdict.
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Floor on `sqrt(p_α p_β)` in the defect ratio.
pub const DEFECT_FLOOR: f64 = 1e-300;

const EXHAUSTIVE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Decoherent,
    NotDecoherent,
}

/// Decoherence functional over the retained (non-pruned) histories.
#[derive(Debug, Clone)]
pub struct DecoherenceReport {
    pub labels: Vec<String>,
    pub histories: Vec<History>,
    /// `D(α, β) = Tr(C_α ρ C_β†)`.
    pub gram: CMatrix,
    pub probabilities: Vec<f64>,
    /// `max_{α≠β} |D(α,β)| / max(sqrt(p_α p_β), floor)`.
    pub defect: f64,
    pub epsilon: f64,
    pub verdict: Verdict,
    /// Histories dropped with probability exactly zero.
    pub pruned: usize,
}

impl DecoherenceReport {
    /// Builds a report from an assembled functional.
    pub fn from_gram(
        labels: Vec<String>,
        histories: Vec<History>,
        gram: CMatrix,
        pruned: usize,
        epsilon: f64,
    ) -> Self {
        let probabilities: Vec<f64> = (0..gram.nrows()).map(|i| gram[(i, i)].re).collect();
        let defect = normalized_defect(&gram, &probabilities);
        let mut report = Self {
            labels,
            histories,
            gram,
            probabilities,
            defect,
            epsilon,
            verdict: Verdict::NotDecoherent,
            pruned,
        };
        report.verdict = check_medium_decoherence(&report, epsilon);
        report
    }

    /// Same data with a different tolerance.
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self.verdict = check_medium_decoherence(&self, epsilon);
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn total_probability(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    pub fn probability_of(&self, label: &str) -> Option<f64> {
        self.labels.iter().position(|l| l == label).map(|i| self.probabilities[i])
    }

    /// Largest off-diagonal entry in absolute value and its index pair.
    pub fn max_off_diagonal(&self) -> Option<(usize, usize, f64)> {
        let n = self.gram.nrows();
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = self.gram[(i, j)].norm();
                if best.is_none_or(|(_, _, b)| v > b) {
                    best = Some((i, j, v));
                }
            }
        }
        best
    }

    pub fn to_json(&self) -> Value {
        let n = self.gram.nrows();
        let part = |f: fn(&Complex64) -> f64| -> Vec<Vec<f64>> {
            (0..n).map(|i| (0..n).map(|j| f(&self.gram[(i, j)])).collect()).collect()
        };
        json!({
            "labels": self.labels,
            "gram": { "re": part(|z| z.re), "im": part(|z| z.im) },
            "probabilities": self.probabilities,
            "defect": self.defect,
            "epsilon": self.epsilon,
            "verdict": self.verdict,
            "pruned": self.pruned,
        })
    }
}

fn normalized_defect(gram: &CMatrix, p: &[f64]) -> f64 {
    let n = gram.nrows();
    let mut defect: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let scale = (p[i].max(0.0) * p[j].max(0.0)).sqrt().max(DEFECT_FLOOR);
            defect = defect.max(gram[(i, j)].norm() / scale);
        }
    }
    defect
}

/// `Tr(A B†)` for equally shaped matrices.
fn frobenius_inner(a: &CMatrix, b: &CMatrix) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum()
}

/// Gram matrix of the branch-state blocks, `D(α,β) = Tr(B_α B_β†)`.
fn gram_of(states: &[CMatrix]) -> CMatrix {
    let n = states.len();
    let rows: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..=i).map(|j| frobenius_inner(&states[i], &states[j])).collect())
        .collect();
    let mut gram = CMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            gram[(i, j)] = v;
            gram[(j, i)] = v.conj();
        }
        gram[(i, i)].im = 0.0;
    }
    gram
}

/// Report built from branch states; used where class operators are too
/// large to form.
pub fn from_branches(branches: Branches, epsilon: f64) -> DecoherenceReport {
    let gram = gram_of(&branches.states);
    DecoherenceReport::from_gram(branches.labels, branches.histories, gram, branches.pruned, epsilon)
}

/// `D(α,β) = Tr(C_α ρ C_β†)` over all histories of `set`, with vanishing
/// branches pruned.
pub fn decoherence_functional(set: &HistorySet, rho: &DensityMatrix) -> Result<DecoherenceReport> {
    decoherence_functional_eps(set, rho, DEFAULT_EPSILON)
}

pub fn decoherence_functional_eps(
    set: &HistorySet,
    rho: &DensityMatrix,
    epsilon: f64,
) -> Result<DecoherenceReport> {
    check_dim(set.dim(), rho.dim())?;
    let ensemble = rho.ensemble()?;
    let mut vectors = CMatrix::zeros(rho.dim(), ensemble.len());
    for (k, (p, v)) in ensemble.iter().enumerate() {
        vectors.set_column(k, &(v * Complex64::new(p.sqrt(), 0.0)));
    }
    let branches = set.branch_states(&vectors, PRUNE_TOL)?;
    Ok(from_branches(branches, epsilon))
}

/// Pure-state functional: overlaps `<Ψ_β|Ψ_α>` of branch states.
pub fn decoherence_functional_pure(
    set: &HistorySet,
    psi: &StateVector,
    epsilon: f64,
) -> Result<DecoherenceReport> {
    check_dim(set.dim(), psi.dim())?;
    let v = CMatrix::from_column_slice(psi.dim(), 1, psi.amplitudes().as_slice());
    let branches = set.branch_states(&v, PRUNE_TOL)?;
    Ok(from_branches(branches, epsilon))
}

/// Functional for an explicit list of class operators, e.g. coarse sums that
/// are not projector chains.
pub fn decoherence_from_class_operators(
    ops: &[ClassOperator],
    rho: &DensityMatrix,
    epsilon: f64,
) -> Result<DecoherenceReport> {
    let deviation = exhaustiveness_defect(ops);
    if deviation > EXHAUSTIVE_TOL {
        return Err(Error::NotExhaustive { deviation });
    }
    for op in ops {
        check_dim(rho.dim(), op.matrix.nrows())?;
    }
    let ensemble = rho.ensemble()?;
    let mut vectors = CMatrix::zeros(rho.dim(), ensemble.len());
    for (k, (p, v)) in ensemble.iter().enumerate() {
        vectors.set_column(k, &(v * Complex64::new(p.sqrt(), 0.0)));
    }
    let mut labels = Vec::new();
    let mut histories = Vec::new();
    let mut states = Vec::new();
    let mut pruned = 0;
    for op in ops {
        let b = &op.matrix * &vectors;
        if b.norm() <= PRUNE_TOL {
            pruned += 1;
        } else {
            labels.push(op.label.clone());
            histories.push(op.history.clone());
            states.push(b);
        }
    }
    let gram = gram_of(&states);
    Ok(DecoherenceReport::from_gram(labels, histories, gram, pruned, epsilon))
}

/// Decoherent iff the defect is at most `epsilon`.
pub fn check_medium_decoherence(report: &DecoherenceReport, epsilon: f64) -> Verdict {
    if report.defect <= epsilon {
        Verdict::Decoherent
    } else {
        Verdict::NotDecoherent
    }
}

/// `max_ᾱ |p(ᾱ) − Σ_{α∈ᾱ} p(α)|`. Coarse report entries are matched to
/// classes by label; pruned entries on either side count as zero.
pub fn sum_rule_audit(
    fine: &DecoherenceReport,
    map: &CoarseGrainingMap,
    coarse: &DecoherenceReport,
) -> Result<f64> {
    let mut fine_sums = vec![0.0; map.n_classes()];
    for (h, p) in fine.histories.iter().zip(&fine.probabilities) {
        let c = map.class_of(h).ok_or_else(|| {
            Error::InvalidPartition(format!("fine history {h} is not in the coarse-graining map"))
        })?;
        fine_sums[c] += p;
    }
    let index: BTreeMap<&str, usize> = map
        .class_names()
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut coarse_p = vec![0.0; map.n_classes()];
    for (label, p) in coarse.labels.iter().zip(&coarse.probabilities) {
        let c = *index.get(label.as_str()).ok_or_else(|| {
            Error::InvalidPartition(format!("coarse history {label} is not a class of the map"))
        })?;
        coarse_p[c] = *p;
    }
    Ok(fine_sums
        .iter()
        .zip(&coarse_p)
        .map(|(f, c)| (c - f).abs())
        .fold(0.0, f64::max))
}

/// `max_{α,β} |Tr(C_α ρ C_β†) − Tr(C_α ρ̃ C_β†)|` over every history.
pub fn effective_density_check(
    set: &HistorySet,
    rho: &DensityMatrix,
    rho_tilde: &DensityMatrix,
) -> Result<f64> {
    check_dim(set.dim(), rho.dim())?;
    check_dim(set.dim(), rho_tilde.dim())?;
    let delta = rho.matrix() - rho_tilde.matrix();
    let ops = set.class_operators();
    let left: Vec<CMatrix> = ops.par_iter().map(|op| &op.matrix * &delta).collect();
    let worst = (0..ops.len())
        .into_par_iter()
        .map(|i| {
            (0..ops.len())
                .map(|j| frobenius_inner(&left[i], &ops[j].matrix).norm())
                .fold(0.0, f64::max)
        })
        .collect::<Vec<_>>();
    Ok(worst.into_iter().fold(0.0, f64::max))
}
