//! Coarse-grained entropy of cell variables along exact unitary evolution.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::spin_chain::{CellPartition, SpinChain};
use crate::decoherence::from_branches;
use crate::error::{Error, Result};
use crate::hilbert::{check_dim, CMatrix, CVector, DensityMatrix, HermitianOperator, Propagator, StateVector};
use crate::histories::{Branches, History, PRUNE_TOL};
use crate::maxent::missing_information;

/// Entropies are compared to the equilibrium ceiling with this slack.
pub const CEILING_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub s_local: f64,
    pub s_eq: f64,
    pub defect: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondLawTrajectory {
    pub rows: Vec<TrajectoryRow>,
    pub s_eq: f64,
    pub epsilon: f64,
}

impl SecondLawTrajectory {
    /// Rows whose two-time occupation histories decohere at `epsilon`.
    pub fn decoherent_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.defect <= self.epsilon).count()
    }

    /// Largest `S_local − S_eq`.
    pub fn max_excess(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.s_local - r.s_eq)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Mean of `S_local` over the last `fraction` of rows divided by its running maximum.
    pub fn late_window_ratio(&self, fraction: f64) -> f64 {
        let n = self.rows.len();
        let start = n - ((n as f64 * fraction).ceil() as usize).clamp(1, n);
        let max = self.rows.iter().map(|r| r.s_local).fold(f64::NEG_INFINITY, f64::max);
        let window = &self.rows[start..];
        let mean = window.iter().map(|r| r.s_local).sum::<f64>() / window.len() as f64;
        mean / max
    }
}

/// Spectral evolution restricted to vectors: `e^{-iHt} v`.
fn evolve(prop: &Propagator, v: &CVector, t: f64) -> CVector {
    prop.evolve_vector(v, t)
}

/// Groups basis states by their joint cell occupation.
fn occupation_classes(partition: &CellPartition, dim: usize) -> BTreeMap<Vec<usize>, Vec<usize>> {
    let mut classes: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for s in 0..dim {
        classes.entry(partition.occupations(s)).or_default().push(s);
    }
    classes
}

fn mask(v: &CVector, idx: &[usize]) -> CVector {
    let mut out = CVector::zeros(v.len());
    for &i in idx {
        out[i] = v[i];
    }
    out
}

/// Decoherence defect of the two-time set of joint cell-occupation
/// projectors at `(t0, t1)`, from branch states in the Schrödinger picture
/// at `t1` (a common unitary leaves the functional unchanged).
pub fn occupation_defect(
    prop: &Propagator,
    partition: &CellPartition,
    psi0: &StateVector,
    t0: f64,
    t1: f64,
) -> f64 {
    let classes: Vec<(Vec<usize>, Vec<usize>)> = occupation_classes(partition, psi0.dim()).into_iter().collect();
    let at_t0 = evolve(prop, psi0.amplitudes(), t0);
    let mut branches = Branches {
        histories: Vec::new(),
        labels: Vec::new(),
        states: Vec::new(),
        pruned: 0,
    };
    for (a, (key_a, idx_a)) in classes.iter().enumerate() {
        let first = mask(&at_t0, idx_a);
        if first.norm() <= PRUNE_TOL {
            branches.pruned += classes.len();
            continue;
        }
        let moved = evolve(prop, &first, t1 - t0);
        for (b, (key_b, idx_b)) in classes.iter().enumerate() {
            let second = mask(&moved, idx_b);
            if second.norm() <= PRUNE_TOL {
                branches.pruned += 1;
                continue;
            }
            branches.histories.push(History(vec![a, b]));
            branches.labels.push(format!("{key_a:?},{key_b:?}"));
            branches.states.push(CMatrix::from_column_slice(second.len(), 1, second.as_slice()));
        }
    }
    from_branches(branches, f64::INFINITY).defect
}

/// `S_local(t)` for the cell energies and numbers, the equilibrium ceiling
/// `S_eq` from the total energy and number, and the occupation-history
/// defect between consecutive times (zero for the first row).
pub fn second_law_experiment(
    model: &SpinChain,
    partition: &CellPartition,
    psi0: &StateVector,
    times: &[f64],
    epsilon: f64,
) -> Result<SecondLawTrajectory> {
    check_dim(model.dim(), psi0.dim())?;
    if times.is_empty() {
        return Err(Error::InvalidArgument("no time points".into()));
    }
    if times.windows(2).any(|w| w[0] >= w[1]) || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument("times must be finite and strictly increasing".into()));
    }
    let h = model.hamiltonian();
    let prop = Propagator::new(&h, 1.0)?;
    let cells = partition.cell_operators(model)?;
    let local_ops: Vec<HermitianOperator> = cells
        .iter()
        .flat_map(|c| std::iter::once(c.energy.clone()).chain(c.number.clone()))
        .collect();
    let mut global_ops = vec![h.clone()];
    if model.is_number_conserving() {
        global_ops.push(model.number());
    }

    let rho0 = psi0.density();
    let s_eq = missing_information(&global_ops, &rho0).map_err(|e| at_time(0.0, "S_eq", e))?;

    let rows = (0..times.len())
        .into_par_iter()
        .map(|k| {
            let t = times[k];
            let psi = evolve(&prop, psi0.amplitudes(), t);
            let rho = DensityMatrix::from_pure(&StateVector::normalized(psi)?);
            let s_local = missing_information(&local_ops, &rho).map_err(|e| at_time(t, "S_local", e))?;
            let defect = if k == 0 {
                0.0
            } else {
                occupation_defect(&prop, partition, psi0, times[k - 1], t)
            };
            Ok(TrajectoryRow {
                t,
                s_local,
                s_eq,
                defect,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SecondLawTrajectory { rows, s_eq, epsilon })
}

fn at_time(t: f64, what: &str, e: Error) -> Error {
    match e {
        Error::CapExceeded { .. } | Error::DimensionMismatch { .. } => e,
        other => Error::numerical("second-law experiment", format!("{what} at t = {t}: {other}")),
    }
}

/// Basis state with the left `filled` sites occupied.
pub fn domain_wall(sites: usize, filled: usize) -> StateVector {
    let index = (1usize << filled.min(sites)) - 1;
    StateVector::basis(1 << sites, index)
}

/// Product state from per-site complex amplitudes `(a_i, b_i)` for `|0>`, `|1>`.
pub fn product_state(site_amplitudes: &[(Complex64, Complex64)]) -> Result<StateVector> {
    let n = site_amplitudes.len();
    let amps = CVector::from_fn(1 << n, |s, _| {
        (0..n)
            .map(|i| {
                let (a, b) = site_amplitudes[i];
                if (s >> i) & 1 == 1 {
                    b
                } else {
                    a
                }
            })
            .product()
    });
    StateVector::normalized(amps)
}
