//! Maximum missing information (Jaynes) states, equilibrium and local
//! equilibrium densities, and entropy bookkeeping.
//!
//! Effective densities have the form `ρ̃ = exp(-Σ λ_m A_m) / Z`.

mod solver;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::hilbert::{
    check_dim, eigh, entropy_of_weights, expectation, trace_product, CMatrix, DensityMatrix,
    HermitianOperator,
};
use solver::{Problem, GRAM_TOL};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 200;
/// Targets closer than this to an extreme eigenvalue are rejected by the strict solve.
pub const BOUNDARY_MARGIN: f64 = 1e-6;
/// Tolerance on `S = log Z + λ·t`.
pub const DUAL_TOL: f64 = 1e-8;
/// Below this `|β|` the fields `u` and `μ` are not reported.
pub const BETA_GAUGE_TOL: f64 = 1e-12;

/// Operators `A_m` with target expectation values.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    operators: Vec<HermitianOperator>,
    targets: Vec<f64>,
}

impl ConstraintSet {
    pub fn new(operators: Vec<HermitianOperator>, targets: Vec<f64>) -> Result<Self> {
        let Some(first) = operators.first() else {
            return Err(Error::InvalidArgument("constraint set is empty".into()));
        };
        if operators.len() != targets.len() {
            return Err(Error::InvalidArgument(format!(
                "{} operators for {} targets",
                operators.len(),
                targets.len()
            )));
        }
        let dim = first.dim();
        for op in &operators {
            check_dim(dim, op.dim())?;
        }
        if let Some(t) = targets.iter().find(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument(format!("target {t} is not finite")));
        }
        Ok(Self { operators, targets })
    }

    /// Targets read off `rho`.
    pub fn from_state(operators: Vec<HermitianOperator>, rho: &DensityMatrix) -> Result<Self> {
        let targets = operators
            .iter()
            .map(|a| expectation(a, rho))
            .collect::<Result<Vec<_>>>()?;
        Self::new(operators, targets)
    }

    pub fn operators(&self) -> &[HermitianOperator] {
        &self.operators
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.operators[0].dim()
    }

    fn problem(&self) -> Problem {
        let ops: Vec<&CMatrix> = self.operators.iter().map(|a| a.matrix()).collect();
        Problem::new(&ops)
    }
}

#[derive(Debug, Clone)]
pub struct MaxEntSolution {
    /// One multiplier per constraint; zero for constraints that were dropped.
    pub multipliers: Vec<f64>,
    pub targets: Vec<f64>,
    pub rho_tilde: DensityMatrix,
    pub entropy: f64,
    pub log_z: f64,
    /// `max_m |Tr(A_m ρ̃) − t_m|` over every constraint.
    pub residual: f64,
    pub iterations: usize,
    /// `|S − (log Z + λ·t)|`.
    pub dual_gap: f64,
    /// Constraints fixed by restriction to a spectral face or dropped as dependent.
    pub eliminated: Vec<usize>,
}

impl MaxEntSolution {
    pub fn to_json(&self) -> Value {
        json!({
            "multipliers": self.multipliers,
            "targets": self.targets,
            "residual": self.residual,
            "entropy": self.entropy,
            "log_z": self.log_z,
            "iterations": self.iterations,
        })
    }
}

fn finish(constraints: &ConstraintSet, problem: &Problem, tol: f64, max_iter: usize) -> Result<MaxEntSolution> {
    let solved = problem.solve(&constraints.targets, tol, max_iter)?;
    let mut multipliers = vec![0.0; constraints.len()];
    for (&m, &l) in problem.active.iter().zip(&solved.lambda) {
        multipliers[m] = l;
    }
    let rho_tilde = DensityMatrix::trusted(solved.rho);
    let residual = constraints
        .operators
        .iter()
        .zip(&constraints.targets)
        .map(|(a, t)| (trace_product(a.matrix(), rho_tilde.matrix()).re - t).abs())
        .fold(0.0, f64::max);
    let dual: f64 = solved.log_z
        + multipliers
            .iter()
            .zip(&constraints.targets)
            .map(|(l, t)| l * t)
            .sum::<f64>();
    let eliminated = (0..constraints.len())
        .filter(|m| !problem.active.contains(m))
        .collect();
    Ok(MaxEntSolution {
        multipliers,
        targets: constraints.targets.clone(),
        rho_tilde,
        entropy: solved.entropy,
        log_z: solved.log_z,
        residual,
        iterations: solved.iterations,
        dual_gap: (solved.entropy - dual).abs(),
        eliminated,
    })
}

/// Strict solve: every constraint must be independent and every target
/// strictly inside its operator's spectrum.
pub fn solve_multipliers(constraints: &ConstraintSet, tol: f64, max_iter: usize) -> Result<MaxEntSolution> {
    let problem = constraints.problem();
    for (m, &t) in constraints.targets.iter().enumerate() {
        let (lo, hi) = problem.extremes(m)?;
        if t <= lo + BOUNDARY_MARGIN {
            return Err(Error::Boundary { index: m, target: t, extreme: lo });
        }
        if t >= hi - BOUNDARY_MARGIN {
            return Err(Error::Boundary { index: m, target: t, extreme: hi });
        }
    }
    let min_eigenvalue = problem.min_gram_eigenvalue(&problem.active);
    if min_eigenvalue < GRAM_TOL {
        return Err(Error::DegenerateConstraints { min_eigenvalue });
    }
    let solution = finish(constraints, &problem, tol, max_iter)?;
    if solution.dual_gap > DUAL_TOL * solution.entropy.abs().max(1.0) {
        return Err(Error::numerical(
            "max-ent dual identity",
            format!("|S - (log Z + λ·t)| = {:e}", solution.dual_gap),
        ));
    }
    Ok(solution)
}

/// Lenient solve for targets read off a state: targets on a face of the
/// spectrum restrict the problem to that face, and dependent constraints
/// are dropped.
pub fn max_ent_state(constraints: &ConstraintSet, tol: f64, max_iter: usize) -> Result<MaxEntSolution> {
    let mut problem = constraints.problem();
    problem.reduce_faces(&constraints.targets)?;
    problem.drop_dependent();
    finish(constraints, &problem, tol, max_iter)
}

/// `S({A_m}, ρ)`: entropy of the max-ent state matching `Tr(A_m ρ)`.
pub fn missing_information(operators: &[HermitianOperator], rho: &DensityMatrix) -> Result<f64> {
    let constraints = ConstraintSet::from_state(operators.to_vec(), rho)?;
    Ok(max_ent_state(&constraints, DEFAULT_TOL, DEFAULT_MAX_ITER)?.entropy)
}

/// `exp(-K) / Tr exp(-K)` computed with a spectral shift, so it never overflows.
pub fn gibbs_of(k: &HermitianOperator) -> Result<(DensityMatrix, f64)> {
    let s = eigh(k.matrix())?;
    let shift = *s.values.last().expect("non-empty");
    let w: Vec<f64> = s.values.iter().map(|&x| (-(x - shift)).exp()).collect();
    let z: f64 = w.iter().sum();
    let p: Vec<f64> = w.iter().map(|x| x / z).collect();
    Ok((DensityMatrix::trusted(s.weighted(&p)), z.ln() - shift))
}

fn thermal_generator(
    h: &HermitianOperator,
    momenta: &[HermitianOperator],
    number: Option<&HermitianOperator>,
    velocity: &[f64],
    mu: f64,
) -> Result<HermitianOperator> {
    if velocity.len() != momenta.len() {
        return Err(Error::InvalidArgument(format!(
            "{} velocity components for {} momentum operators",
            velocity.len(),
            momenta.len()
        )));
    }
    let mut terms: Vec<(f64, &HermitianOperator)> = vec![(1.0, h)];
    for (u, p) in velocity.iter().zip(momenta) {
        terms.push((-u, p));
    }
    if let Some(n) = number {
        terms.push((-mu, n));
    }
    HermitianOperator::linear_combination(&terms)
}

/// `exp[-β(H − U·P − μN)] / Z`.
pub fn equilibrium_density(
    h: &HermitianOperator,
    momenta: &[HermitianOperator],
    number: Option<&HermitianOperator>,
    beta: f64,
    velocity: &[f64],
    mu: f64,
) -> Result<DensityMatrix> {
    let k = thermal_generator(h, momenta, number, velocity, mu)?;
    Ok(gibbs_of(&k.scaled(beta))?.0)
}

/// Quasiclassical operators of one cell.
#[derive(Debug, Clone)]
pub struct CellOperators {
    pub energy: HermitianOperator,
    pub momenta: Vec<HermitianOperator>,
    pub number: Option<HermitianOperator>,
    /// Dimension of the cell's tensor factor, when the cell is one.
    pub local_dim: Option<usize>,
}

impl CellOperators {
    fn operators(&self) -> impl Iterator<Item = &HermitianOperator> {
        std::iter::once(&self.energy)
            .chain(self.momenta.iter())
            .chain(self.number.iter())
    }
}

/// Intensive fields of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    pub beta: f64,
    pub velocity: Vec<f64>,
    pub mu: f64,
}

impl CellField {
    pub fn new(beta: f64, velocity: Vec<f64>, mu: f64) -> Self {
        Self { beta, velocity, mu }
    }

    /// Multipliers `(β, −βu, −βμ)` of `(ε, π, ν)`.
    fn multipliers(&self, cell: &CellOperators) -> Result<Vec<f64>> {
        if self.velocity.len() != cell.momenta.len() {
            return Err(Error::InvalidArgument(format!(
                "{} velocity components for {} momentum operators",
                self.velocity.len(),
                cell.momenta.len()
            )));
        }
        let mut out = vec![self.beta];
        out.extend(self.velocity.iter().map(|u| -self.beta * u));
        if cell.number.is_some() {
            out.push(-self.beta * self.mu);
        }
        Ok(out)
    }
}

fn local_generator(cells: &[CellOperators], fields: &[CellField]) -> Result<HermitianOperator> {
    if cells.is_empty() || cells.len() != fields.len() {
        return Err(Error::InvalidArgument(format!(
            "{} cells for {} fields",
            cells.len(),
            fields.len()
        )));
    }
    let mut coefficients = Vec::new();
    let mut ops = Vec::new();
    for (cell, field) in cells.iter().zip(fields) {
        coefficients.extend(field.multipliers(cell)?);
        ops.extend(cell.operators());
    }
    let dim = ops[0].dim();
    for op in &ops {
        check_dim(dim, op.dim())?;
    }
    let terms: Vec<(f64, &HermitianOperator)> = coefficients.into_iter().zip(ops).collect();
    HermitianOperator::linear_combination(&terms)
}

/// `exp[-Σ_y β(y)(ε_y − u(y)·π_y − μ(y)ν_y)] / Z`.
pub fn local_equilibrium_density(cells: &[CellOperators], fields: &[CellField]) -> Result<DensityMatrix> {
    let k = local_generator(cells, fields)?;
    Ok(gibbs_of(&k)?.0)
}

/// Fields recovered by a local-equilibrium fit. At `β = 0` the map from
/// fields to multipliers is not invertible and `u`, `μ` are left out.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedField {
    pub beta: f64,
    pub velocity: Option<Vec<f64>>,
    pub mu: Option<f64>,
    /// Raw multipliers of `(ε, π…, ν)`.
    pub multipliers: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LocalFit {
    pub fields: Vec<FittedField>,
    pub solution: MaxEntSolution,
}

/// Local-equilibrium state reproducing `Tr(ε_y ρ)`, `Tr(π_y ρ)`, `Tr(ν_y ρ)`.
pub fn fit_local_equilibrium(cells: &[CellOperators], rho: &DensityMatrix) -> Result<LocalFit> {
    if cells.is_empty() {
        return Err(Error::InvalidArgument("no cells".into()));
    }
    let ops: Vec<HermitianOperator> = cells.iter().flat_map(|c| c.operators().cloned()).collect();
    let constraints = ConstraintSet::from_state(ops, rho)?;
    let solution = solve_multipliers(&constraints, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let mut fields = Vec::with_capacity(cells.len());
    let mut offset = 0;
    for cell in cells {
        let n = 1 + cell.momenta.len() + usize::from(cell.number.is_some());
        let raw = solution.multipliers[offset..offset + n].to_vec();
        offset += n;
        let beta = raw[0];
        let defined = beta.abs() > BETA_GAUGE_TOL;
        let velocity = defined.then(|| raw[1..1 + cell.momenta.len()].iter().map(|x| -x / beta).collect());
        let mu = match (&cell.number, defined) {
            (Some(_), true) => Some(-raw[n - 1] / beta),
            _ => None,
        };
        fields.push(FittedField {
            beta,
            velocity,
            mu,
            multipliers: raw,
        });
    }
    Ok(LocalFit { fields, solution })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermoCheck {
    pub entropy: f64,
    /// `None` at `β = 0`, where the relation degenerates.
    pub free_energy: Option<f64>,
    pub gap: Option<f64>,
}

/// Compares `S` with `β(<H> − F)`, where
/// `Tr exp[-β(H − U·P − μN)] = exp[-β(F − U·<P> − μ<N>)]`.
pub fn thermo_relation_check(
    h: &HermitianOperator,
    beta: f64,
    velocity: &[f64],
    mu: f64,
    momenta: &[HermitianOperator],
    number: Option<&HermitianOperator>,
) -> Result<ThermoCheck> {
    let k = thermal_generator(h, momenta, number, velocity, mu)?;
    let (rho, log_z) = gibbs_of(&k.scaled(beta))?;
    let spectrum = eigh(rho.matrix())?;
    let entropy = entropy_of_weights(&spectrum.values);
    if beta == 0.0 {
        return Ok(ThermoCheck {
            entropy,
            free_energy: None,
            gap: None,
        });
    }
    let mut free = -log_z / beta;
    for (u, p) in velocity.iter().zip(momenta) {
        free += u * expectation(p, &rho)?;
    }
    if let Some(n) = number {
        free += mu * expectation(n, &rho)?;
    }
    let energy = expectation(h, &rho)?;
    Ok(ThermoCheck {
        entropy,
        free_energy: Some(free),
        gap: Some((entropy - beta * (energy - free)).abs()),
    })
}

#[derive(Debug, Clone)]
pub struct EntropyDecomposition {
    /// `β(<ε> − u·<π> − μ<ν>) + log Z_y` per cell, with `Z_y` the trace over
    /// the cell's own factor.
    pub contributions: Vec<f64>,
    pub entropy: f64,
    /// `S − Σ_y contribution_y`; zero when the cells are disjoint tensor factors.
    pub residual: f64,
}

/// Splits the entropy of a local-equilibrium state into cell terms.
pub fn entropy_density_decomposition(
    cells: &[CellOperators],
    fields: &[CellField],
    rho_leq: &DensityMatrix,
) -> Result<EntropyDecomposition> {
    if cells.len() != fields.len() {
        return Err(Error::InvalidArgument(format!(
            "{} cells for {} fields",
            cells.len(),
            fields.len()
        )));
    }
    let dim = rho_leq.dim() as f64;
    let mut contributions = Vec::with_capacity(cells.len());
    for (cell, field) in cells.iter().zip(fields) {
        let local_dim = cell.local_dim.ok_or_else(|| {
            Error::InvalidArgument("entropy decomposition needs each cell's local dimension".into())
        })?;
        let coefficients = field.multipliers(cell)?;
        let ops: Vec<&HermitianOperator> = cell.operators().collect();
        let mut mean = 0.0;
        for (c, op) in coefficients.iter().zip(&ops) {
            mean += c * expectation(op, rho_leq)?;
        }
        let terms: Vec<(f64, &HermitianOperator)> = coefficients.iter().copied().zip(ops).collect();
        let k = HermitianOperator::linear_combination(&terms)?;
        let (_, log_z) = gibbs_of(&k)?;
        contributions.push(mean + log_z - (dim / local_dim as f64).ln());
    }
    let spectrum = eigh(rho_leq.matrix())?;
    let entropy = entropy_of_weights(&spectrum.values);
    let total: f64 = contributions.iter().sum();
    Ok(EntropyDecomposition {
        contributions,
        entropy,
        residual: entropy - total,
    })
}

#[cfg(test)]
mod tests;
