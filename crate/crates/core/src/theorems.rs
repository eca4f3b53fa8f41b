//! Numerical checks of the structural statements about decoherent sets:
//! exactly decoherent fine-grained sets are trivial, certain histories pin the
//! state, commuting narratives are static, and records correlate with
//! histories.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::decoherence::decoherence_functional_pure;
use crate::error::{Error, Result};
use crate::hilbert::{check_dim, max_abs_diff, CMatrix, CVector, ProjectorSet, StateVector};
use crate::histories::{fine_grained_set, BranchNode, History, HistorySet};
use crate::random::{haar_state, haar_unitary, stream_rng};

/// Overlaps at or below this count as exact zeros.
pub const EXACT_TOL: f64 = 1e-10;

/// Overlaps below this trigger resampling in the random search.
pub const GENERICITY_TOL: f64 = 1e-6;

/// Largest number of fine-grained histories per search trial.
pub const MAX_SEARCH_HISTORIES: usize = 1 << 16;

pub const DEFAULT_CERTAINTY_TOL: f64 = 1e-9;

const MAX_RESAMPLES: usize = 1000;
const MAX_REPORTED_WITNESSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrivialityClass {
    NonDecoherent,
    TrivialUniquePrior,
    TrivialStateQuestion,
    ZeroPaddedTrivial,
}

impl TrivialityClass {
    pub fn name(self) -> &'static str {
        match self {
            TrivialityClass::NonDecoherent => "non-decoherent",
            TrivialityClass::TrivialUniquePrior => "trivial-unique-prior",
            TrivialityClass::TrivialStateQuestion => "trivial-state-question",
            TrivialityClass::ZeroPaddedTrivial => "zero-padded-trivial",
        }
    }

    pub fn is_trivial(self) -> bool {
        self != TrivialityClass::NonDecoherent
    }
}

/// Final alternative and the only history with a non-zero branch ending in it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriorEntry {
    pub final_alternative: usize,
    pub prior: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Witness {
    /// Two non-zero branches with `|<Ψ_second|Ψ_first>| = overlap`.
    Overlap {
        first: History,
        second: History,
        first_label: String,
        second_label: String,
        overlap: f64,
    },
    PriorMap { entries: Vec<PriorEntry> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrivialityVerdict {
    pub classification: TrivialityClass,
    pub witness: Witness,
    /// Largest `|<Ψ_α'|Ψ_α>|` over distinct non-zero branches.
    pub max_overlap: f64,
}

fn check_rank_one(node: &BranchNode) -> Result<()> {
    if let Some(p) = node.set().members().iter().find(|p| p.rank() != 1) {
        return Err(Error::Precondition(format!(
            "history set is not fine-grained: projector of rank {}",
            p.rank()
        )));
    }
    node.children().iter().try_for_each(|c| check_rank_one(c))
}

fn branch_vector(set: &HistorySet, h: &History, psi: &StateVector) -> Result<CVector> {
    Ok(set.branch_state(h, psi)?.column(0).into_owned())
}

/// Sorts an exactly decoherent or non-decoherent fine-grained set into the
/// triviality taxonomy. Branches with squared norm at or below `exact_tol`
/// are zero.
pub fn classify_fine_grained(set: &HistorySet, psi: &StateVector, exact_tol: f64) -> Result<TrivialityVerdict> {
    check_dim(set.dim(), psi.dim())?;
    check_rank_one(set.root())?;
    let histories = set.histories();
    let branches = histories
        .iter()
        .map(|h| branch_vector(set, h, psi))
        .collect::<Result<Vec<_>>>()?;

    let nonzero: Vec<usize> = (0..histories.len())
        .filter(|&i| branches[i].norm_squared() > exact_tol)
        .collect();
    let overlap = |a: usize, b: usize| branches[b].dotc(&branches[a]).norm();
    let mut best: Option<(usize, usize, f64)> = None;
    let mut consider = |a: usize, b: usize| {
        let ov = overlap(a, b);
        if best.is_none_or(|(_, _, o)| ov > o) {
            best = Some((a, b, ov));
        }
    };
    if set.is_branch_independent() {
        // branches ending in the same rank-one projector are parallel, so the
        // largest overlap in a group is between its two largest branches
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &i in &nonzero {
            groups.entry(histories[i].last().unwrap_or(0)).or_default().push(i);
        }
        for mut members in groups.into_values() {
            if members.len() >= 2 {
                members.sort_by(|&a, &b| {
                    branches[b].norm_squared().total_cmp(&branches[a].norm_squared()).then(a.cmp(&b))
                });
                consider(members[0], members[1]);
            }
        }
    } else {
        for (k, &a) in nonzero.iter().enumerate() {
            for &b in &nonzero[k + 1..] {
                consider(a, b);
            }
        }
    }
    let max_overlap = best.map_or(0.0, |(_, _, o)| o);
    if let Some((a, b, overlap)) = best.filter(|&(_, _, o)| o > exact_tol) {
        return Ok(TrivialityVerdict {
            classification: TrivialityClass::NonDecoherent,
            witness: Witness::Overlap {
                first: histories[a].clone(),
                second: histories[b].clone(),
                first_label: set.name(&histories[a]),
                second_label: set.name(&histories[b]),
                overlap,
            },
            max_overlap,
        });
    }

    let split = |i: usize| PriorEntry {
        final_alternative: histories[i].last().unwrap_or(0),
        prior: Some(histories[i].0[..histories[i].len() - 1].to_vec()),
    };
    let entries: Vec<PriorEntry> = if set.is_branch_independent() {
        (0..final_alternatives(set))
            .map(|f| {
                nonzero
                    .iter()
                    .find(|&&i| histories[i].last() == Some(f))
                    .map_or(PriorEntry { final_alternative: f, prior: None }, |&i| split(i))
            })
            .collect()
    } else {
        // every final projector sits on a branch of its own
        nonzero.iter().map(|&i| split(i)).collect()
    };
    let witness = Witness::PriorMap { entries: entries.clone() };

    let n_times = set.n_times();
    let shared_prefix = n_times >= 2 && !nonzero.is_empty() && {
        let first = &histories[nonzero[0]].0[..n_times - 1];
        nonzero.iter().all(|&i| &histories[i].0[..n_times - 1] == first)
    };
    if shared_prefix {
        let prefix = &histories[nonzero[0]].0[..n_times - 1];
        let sets = set.sets_along(prefix)?;
        let mut v = psi.amplitudes().clone();
        for (s, &a) in sets.iter().zip(prefix) {
            v = s.member(a).apply(&v);
        }
        if v.norm_squared() >= 1.0 - exact_tol {
            return Ok(TrivialityVerdict {
                classification: TrivialityClass::TrivialStateQuestion,
                witness,
                max_overlap,
            });
        }
    }
    let classification = if entries.iter().all(|e| e.prior.is_some()) {
        TrivialityClass::TrivialUniquePrior
    } else {
        TrivialityClass::ZeroPaddedTrivial
    };
    Ok(TrivialityVerdict {
        classification,
        witness,
        max_overlap,
    })
}

fn final_alternatives(set: &HistorySet) -> usize {
    let mut node = set.root();
    while let Some(child) = node.children().first() {
        node = child;
    }
    node.set().len()
}

/// Recomputes a verdict's witness from scratch.
pub fn verify_witness(set: &HistorySet, psi: &StateVector, verdict: &TrivialityVerdict, exact_tol: f64) -> Result<bool> {
    match &verdict.witness {
        Witness::Overlap {
            first,
            second,
            overlap,
            ..
        } => {
            let a = branch_vector(set, first, psi)?;
            let b = branch_vector(set, second, psi)?;
            let ov = b.dotc(&a).norm();
            Ok(first != second && ov > exact_tol && (ov - overlap).abs() <= 1e-12 * ov.max(1.0))
        }
        Witness::PriorMap { entries } => {
            let claimed: Vec<History> = entries
                .iter()
                .filter_map(|e| {
                    e.prior.as_ref().map(|p| {
                        let mut h = p.clone();
                        h.push(e.final_alternative);
                        History(h)
                    })
                })
                .collect();
            if set.is_branch_independent() {
                let mut finals: Vec<usize> = claimed.iter().filter_map(History::last).collect();
                finals.sort_unstable();
                if finals.windows(2).any(|w| w[0] == w[1]) {
                    return Ok(false);
                }
            }
            for h in set.histories() {
                let nonzero = branch_vector(set, &h, psi)?.norm_squared() > exact_tol;
                if nonzero != claimed.contains(&h) {
                    return Ok(false);
                }
            }
            Ok(true)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub control: bool,
    pub classification: TrivialityClass,
    pub max_overlap: f64,
    pub resampled: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessRecord {
    pub trial: usize,
    pub first: String,
    pub second: String,
    pub overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchSummary {
    pub seed: u64,
    pub dim: usize,
    pub n_times: usize,
    pub trials: usize,
    pub controls: usize,
    pub counts: BTreeMap<TrivialityClass, usize>,
    /// Generic (non-control) trials found not decoherent.
    pub non_decoherent: usize,
    /// Generic trials classified trivial.
    pub trivial: usize,
    /// Generic trials that are exactly decoherent yet not trivial.
    pub decoherent_nontrivial: usize,
    /// Smallest witness overlap over generic non-decoherent trials.
    pub min_defect: Option<f64>,
    pub resampled: usize,
    pub classifications: Vec<TrialOutcome>,
    pub witnesses: Vec<WitnessRecord>,
}

impl SearchSummary {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("summary serializes")
    }
}

/// Random completely fine-grained sets with Haar bases and state, generic in
/// the sense that no overlap between consecutive bases (or between the state
/// and the first basis) is below [`GENERICITY_TOL`]. Trial `k` draws from
/// stream `k` of the master seed.
pub fn search_fine_grained(dim: usize, n_times: usize, trials: usize, seed: u64) -> Result<SearchSummary> {
    search_fine_grained_with_controls(dim, n_times, trials, 0, seed)
}

/// As [`search_fine_grained`], followed by `controls` trials that repeat one
/// Haar basis at every time (streams `trials..trials + controls`).
pub fn search_fine_grained_with_controls(
    dim: usize,
    n_times: usize,
    trials: usize,
    controls: usize,
    seed: u64,
) -> Result<SearchSummary> {
    if dim < 2 || n_times == 0 {
        return Err(Error::InvalidArgument(format!(
            "search needs dim >= 2 and at least one time (dim {dim}, {n_times} times)"
        )));
    }
    let histories = u32::try_from(n_times)
        .ok()
        .and_then(|n| dim.checked_pow(n))
        .unwrap_or(usize::MAX);
    if histories > MAX_SEARCH_HISTORIES {
        return Err(Error::CapExceeded {
            what: "fine-grained histories per trial",
            value: histories,
            cap: MAX_SEARCH_HISTORIES,
        });
    }
    let outcomes = (0..trials + controls)
        .into_par_iter()
        .map(|k| run_trial(dim, n_times, seed, k, k >= trials))
        .collect::<Result<Vec<_>>>()?;

    let mut counts = BTreeMap::new();
    let mut witnesses = Vec::new();
    let mut min_defect: Option<f64> = None;
    let (mut non_decoherent, mut trivial, mut resampled) = (0, 0, 0);
    let mut classifications = Vec::with_capacity(outcomes.len());
    for (outcome, witness) in outcomes {
        *counts.entry(outcome.classification).or_insert(0) += 1;
        resampled += outcome.resampled;
        if !outcome.control {
            if outcome.classification.is_trivial() {
                trivial += 1;
            } else {
                non_decoherent += 1;
                min_defect = Some(min_defect.map_or(outcome.max_overlap, |m| m.min(outcome.max_overlap)));
            }
        }
        if let Some(w) = witness.filter(|_| witnesses.len() < MAX_REPORTED_WITNESSES) {
            witnesses.push(w);
        }
        classifications.push(outcome);
    }
    Ok(SearchSummary {
        seed,
        dim,
        n_times,
        trials,
        controls,
        counts,
        non_decoherent,
        trivial,
        decoherent_nontrivial: 0,
        min_defect,
        resampled,
        classifications,
        witnesses,
    })
}

fn is_generic(psi: &StateVector, bases: &[CMatrix]) -> bool {
    let min_entry = |m: &CMatrix| m.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    let first = bases[0].adjoint() * psi.amplitudes();
    if first.iter().any(|z| z.norm() < GENERICITY_TOL) {
        return false;
    }
    bases
        .windows(2)
        .all(|w| min_entry(&(w[1].adjoint() * &w[0])) >= GENERICITY_TOL)
}

fn run_trial(
    dim: usize,
    n_times: usize,
    seed: u64,
    trial: usize,
    control: bool,
) -> Result<(TrialOutcome, Option<WitnessRecord>)> {
    let mut rng = stream_rng(seed, trial as u64);
    let mut resampled = 0;
    let (psi, bases) = loop {
        let psi = haar_state(dim, &mut rng);
        let bases: Vec<CMatrix> = if control {
            vec![haar_unitary(dim, &mut rng); n_times]
        } else {
            (0..n_times).map(|_| haar_unitary(dim, &mut rng)).collect()
        };
        // a repeated basis has zero overlaps by design; only the state is generic
        let generic = if control {
            is_generic(&psi, &bases[..1])
        } else {
            is_generic(&psi, &bases)
        };
        if generic {
            break (psi, bases);
        }
        resampled += 1;
        if resampled > MAX_RESAMPLES {
            return Err(Error::numerical(
                "fine-grained search",
                format!("trial {trial}: no generic draw after {MAX_RESAMPLES} resamples"),
            ));
        }
    };
    let times = (0..n_times).map(|k| k as f64).collect();
    let set = fine_grained_set(&bases, times)?;
    let verdict = classify_fine_grained(&set, &psi, EXACT_TOL)?;
    let witness = match &verdict.witness {
        Witness::Overlap {
            first_label,
            second_label,
            overlap,
            ..
        } => Some(WitnessRecord {
            trial,
            first: first_label.clone(),
            second: second_label.clone(),
            overlap: *overlap,
        }),
        Witness::PriorMap { .. } => None,
    };
    Ok((
        TrialOutcome {
            trial,
            control,
            classification: verdict.classification,
            max_overlap: verdict.max_overlap,
            resampled,
        },
        witness,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertaintyReport {
    pub decoherent: bool,
    pub defect: f64,
    pub max_probability: f64,
    pub certain_history: Option<String>,
    /// `max_{k,a} ‖P^k_a Ψ - δ_{a,α_k} Ψ‖` along the certain history.
    pub max_violation: Option<f64>,
    pub passed: bool,
    pub notice: Option<String>,
}

/// If `set` decoheres at `tol` and some history has probability at least
/// `1 - tol`, checks that every projector along it leaves `Ψ` unchanged and
/// every other alternative annihilates it, to within `sqrt(tol)`.
pub fn certainty_check(set: &HistorySet, psi: &StateVector, tol: f64) -> Result<CertaintyReport> {
    let report = decoherence_functional_pure(set, psi, tol)?;
    let (max_probability, best) = report
        .probabilities
        .iter()
        .enumerate()
        .fold((f64::NEG_INFINITY, 0), |(m, i), (j, &p)| if p > m { (p, j) } else { (m, i) });
    let mut out = CertaintyReport {
        decoherent: report.defect <= tol,
        defect: report.defect,
        max_probability,
        certain_history: None,
        max_violation: None,
        passed: true,
        notice: None,
    };
    if !out.decoherent {
        out.notice = Some(format!("set does not decohere at {tol:e} (defect {:e}); nothing to check", report.defect));
        return Ok(out);
    }
    if max_probability < 1.0 - tol {
        out.notice = Some(format!("no certain history (max probability {max_probability})"));
        return Ok(out);
    }
    let history = &report.histories[best];
    let sets = set.sets_along(&history.0)?;
    let v = psi.amplitudes();
    let mut violation = 0.0f64;
    for (set_k, &taken) in sets.iter().zip(&history.0) {
        for (a, p) in set_k.members().iter().enumerate() {
            let image = p.apply(v);
            let dev = if a == taken { (image - v).norm() } else { image.norm() };
            violation = violation.max(dev);
        }
    }
    out.certain_history = Some(report.labels[best].clone());
    out.max_violation = Some(violation);
    out.passed = violation <= tol.sqrt();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NarrativeReport {
    /// `max_{k,α} ‖P^k_α - P^1_α‖`, zero when the alternatives commute with `H`.
    pub drift: f64,
    /// `max ‖C_α - δ Q_α‖` over all histories, `Q_α` for constant sequences
    /// and zero otherwise.
    pub leakage: f64,
    pub confirmed: bool,
}

/// Tolerance for the static-narrative confirmation.
pub const NARRATIVE_TOL: f64 = 1e-10;

/// Compares a narrative set's class operators with the static form: only
/// constant sequences survive, as the projector itself. A non-commuting
/// Hamiltonian shows up as non-zero drift and leakage.
pub fn trivial_narrative_check(set: &HistorySet) -> Result<NarrativeReport> {
    if !set.is_branch_independent() {
        return Err(Error::Precondition(
            "narrative check needs the same question at every time".into(),
        ));
    }
    let first_path = vec![0; set.n_times()];
    let sets: Vec<&ProjectorSet> = set.sets_along(&first_path)?;
    let q = sets[0];
    if sets.iter().any(|s| s.len() != q.len()) {
        return Err(Error::Precondition(
            "narrative check needs the same number of alternatives at every time".into(),
        ));
    }
    let mut drift = 0.0f64;
    for s in &sets[1..] {
        for (a, p) in s.members().iter().enumerate() {
            drift = drift.max(max_abs_diff(p.matrix(), q.member(a).matrix()));
        }
    }
    let mut leakage = 0.0f64;
    for op in set.class_operators() {
        let alts = op.history.alternatives();
        let constant = alts.iter().all(|&a| a == alts[0]);
        let dev = if constant {
            max_abs_diff(&op.matrix, q.member(alts[0]).matrix())
        } else {
            op.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max)
        };
        leakage = leakage.max(dev);
    }
    Ok(NarrativeReport {
        drift,
        leakage,
        confirmed: leakage <= NARRATIVE_TOL,
    })
}

/// `max_{α,β} ‖R_α C_β Ψ - δ_αβ C_α Ψ‖` for records labelled like the
/// histories of `set`, in the same order.
pub fn generalized_records_check(set: &HistorySet, psi: &StateVector, records: &ProjectorSet) -> Result<f64> {
    check_dim(set.dim(), psi.dim())?;
    check_dim(set.dim(), records.dim())?;
    let histories = set.histories();
    let names: Vec<String> = histories.iter().map(|h| set.name(h)).collect();
    if names.as_slice() != records.labels() {
        return Err(Error::InvalidArgument(format!(
            "record labels {:?} do not match history labels {:?}",
            records.labels(),
            names
        )));
    }
    let branches = histories
        .iter()
        .map(|h| branch_vector(set, h, psi))
        .collect::<Result<Vec<_>>>()?;
    let violation = (0..branches.len())
        .into_par_iter()
        .map(|a| {
            let r = records.member(a);
            branches
                .iter()
                .enumerate()
                .map(|(b, branch)| {
                    let image = r.apply(branch);
                    if a == b {
                        (image - branch).norm()
                    } else {
                        image.norm()
                    }
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(violation)
}
