//! Open spin-1/2 chains in the occupation basis and their cell variables.
//!
//! Basis index bit `i` is the occupation `n_i` of site `i`. The Hamiltonian is
//!
//! `H = Σ_b [-J_b (σ⁺_i σ⁻_{i+1} + h.c.) + Δ_b n_i n_{i+1}] + Σ_i (h_i n_i + g_i σˣ_i)`
//!
//! and conserves `N = Σ n_i` when every transverse field `g_i` vanishes.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hilbert::{trace_product, CMatrix, DensityMatrix, HermitianOperator};
use crate::maxent::CellOperators;

/// Largest chain handled by dense exact diagonalization.
pub const MAX_SITES: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct SpinChain {
    sites: usize,
    hopping: Vec<f64>,
    interaction: Vec<f64>,
    fields: Vec<f64>,
    transverse: Vec<f64>,
}

impl SpinChain {
    /// Per-bond couplings (`sites - 1` each) and per-site fields.
    pub fn new(
        sites: usize,
        hopping: Vec<f64>,
        interaction: Vec<f64>,
        fields: Vec<f64>,
        transverse: Vec<f64>,
    ) -> Result<Self> {
        if sites < 2 {
            return Err(Error::InvalidArgument(format!("a chain needs at least 2 sites, got {sites}")));
        }
        if sites > MAX_SITES {
            return Err(Error::CapExceeded {
                what: "sites",
                value: sites,
                cap: MAX_SITES,
            });
        }
        for (name, v, n) in [
            ("hopping", &hopping, sites - 1),
            ("interaction", &interaction, sites - 1),
            ("fields", &fields, sites),
            ("transverse", &transverse, sites),
        ] {
            if v.len() != n {
                return Err(Error::InvalidArgument(format!("{name} needs {n} entries, got {}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} has a non-finite entry")));
            }
        }
        Ok(Self {
            sites,
            hopping,
            interaction,
            fields,
            transverse,
        })
    }

    /// Uniform XXZ chain with site fields and no transverse term.
    pub fn uniform(sites: usize, j: f64, delta: f64, fields: Vec<f64>) -> Result<Self> {
        let bonds = sites.saturating_sub(1);
        Self::new(sites, vec![j; bonds], vec![delta; bonds], fields, vec![0.0; sites])
    }

    /// XX chain: hopping `j`, nothing else.
    pub fn xx(sites: usize, j: f64) -> Result<Self> {
        Self::uniform(sites, j, 0.0, vec![0.0; sites])
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn dim(&self) -> usize {
        1 << self.sites
    }

    pub fn is_number_conserving(&self) -> bool {
        self.transverse.iter().all(|&g| g == 0.0)
    }

    fn diagonal(&self, f: impl Fn(usize) -> f64) -> HermitianOperator {
        let values: Vec<f64> = (0..self.dim()).map(f).collect();
        HermitianOperator::diagonal(&values)
    }

    pub fn occupation(&self, site: usize) -> HermitianOperator {
        self.diagonal(|s| ((s >> site) & 1) as f64)
    }

    pub fn number(&self) -> HermitianOperator {
        self.diagonal(|s| s.count_ones() as f64)
    }

    /// Terms of bond `b` (sites `b`, `b+1`), scaled by `weight`, added into `m`.
    fn add_bond(&self, b: usize, weight: f64, m: &mut CMatrix) {
        let (j, delta) = (self.hopping[b], self.interaction[b]);
        let mask = (1 << b) | (1 << (b + 1));
        for s in 0..self.dim() {
            let (ni, nj) = ((s >> b) & 1, (s >> (b + 1)) & 1);
            if ni == 1 && nj == 1 {
                m[(s, s)] += Complex64::new(weight * delta, 0.0);
            }
            if ni != nj && j != 0.0 {
                m[(s ^ mask, s)] += Complex64::new(-weight * j, 0.0);
            }
        }
    }

    fn add_site(&self, i: usize, weight: f64, m: &mut CMatrix) {
        let h = self.fields[i];
        for s in 0..self.dim() {
            if (s >> i) & 1 == 1 {
                m[(s, s)] += Complex64::new(weight * h, 0.0);
            }
        }
        self.add_transverse(i, weight, m);
    }

    fn add_transverse(&self, i: usize, weight: f64, m: &mut CMatrix) {
        let g = self.transverse[i];
        if g != 0.0 {
            for s in 0..self.dim() {
                m[(s ^ (1 << i), s)] += Complex64::new(weight * g, 0.0);
            }
        }
    }

    pub fn bond_term(&self, b: usize) -> HermitianOperator {
        let mut m = CMatrix::zeros(self.dim(), self.dim());
        self.add_bond(b, 1.0, &mut m);
        HermitianOperator::from_hermitian_unchecked(m)
    }

    pub fn hamiltonian(&self) -> HermitianOperator {
        let mut m = CMatrix::zeros(self.dim(), self.dim());
        for b in 0..self.sites - 1 {
            self.add_bond(b, 1.0, &mut m);
        }
        for i in 0..self.sites {
            self.add_site(i, 1.0, &mut m);
        }
        HermitianOperator::from_hermitian_unchecked(m)
    }
}

/// Contiguous cells of equal size along the chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellPartition {
    sites: usize,
    size: usize,
}

impl CellPartition {
    pub fn new(sites: usize, size: usize) -> Result<Self> {
        if size == 0 || !sites.is_multiple_of(size) {
            return Err(Error::InvalidArgument(format!(
                "cell size {size} does not divide {sites} sites"
            )));
        }
        Ok(Self { sites, size })
    }

    pub fn n_cells(&self) -> usize {
        self.sites / self.size
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn sites_of(&self, cell: usize) -> std::ops::Range<usize> {
        cell * self.size..(cell + 1) * self.size
    }

    pub fn cell_of(&self, site: usize) -> usize {
        site / self.size
    }

    fn check(&self, model: &SpinChain, cell: usize) -> Result<()> {
        if model.sites != self.sites {
            return Err(Error::InvalidArgument(format!(
                "partition covers {} sites, chain has {}",
                self.sites, model.sites
            )));
        }
        if cell >= self.n_cells() {
            return Err(Error::InvalidArgument(format!(
                "cell {cell} out of range ({} cells)",
                self.n_cells()
            )));
        }
        Ok(())
    }

    /// Bonds crossing the edges of `cell`.
    pub fn boundary_bonds(&self, cell: usize) -> Vec<usize> {
        let r = self.sites_of(cell);
        let mut bonds = Vec::new();
        if r.start > 0 {
            bonds.push(r.start - 1);
        }
        if r.end < self.sites {
            bonds.push(r.end - 1);
        }
        bonds
    }

    /// `ε_V(y)`: site terms and internal bonds of the cell, plus half of each
    /// bond it shares with a neighbour.
    pub fn energy(&self, model: &SpinChain, cell: usize) -> Result<HermitianOperator> {
        self.check(model, cell)?;
        let mut m = CMatrix::zeros(model.dim(), model.dim());
        for b in 0..self.sites - 1 {
            let inside = [b, b + 1].iter().filter(|&&s| self.cell_of(s) == cell).count();
            match inside {
                2 => model.add_bond(b, 1.0, &mut m),
                1 => model.add_bond(b, 0.5, &mut m),
                _ => {}
            }
        }
        for i in self.sites_of(cell) {
            model.add_site(i, 1.0, &mut m);
        }
        Ok(HermitianOperator::from_hermitian_unchecked(m))
    }

    /// `ν_V(y)`: occupation of the cell.
    pub fn number(&self, model: &SpinChain, cell: usize) -> Result<HermitianOperator> {
        self.check(model, cell)?;
        let r = self.sites_of(cell);
        Ok(model.diagonal(|s| r.clone().filter(|&i| (s >> i) & 1 == 1).count() as f64))
    }

    /// `(ε_V(y), ν_V(y))` for every cell, as max-ent cell operators.
    pub fn cell_operators(&self, model: &SpinChain) -> Result<Vec<CellOperators>> {
        (0..self.n_cells())
            .map(|y| {
                Ok(CellOperators {
                    energy: self.energy(model, y)?,
                    momenta: Vec::new(),
                    number: Some(self.number(model, y)?),
                    local_dim: Some(1 << self.size),
                })
            })
            .collect()
    }

    /// Joint cell occupation `(ν_1, …, ν_C)` of a basis state.
    pub fn occupations(&self, state: usize) -> Vec<usize> {
        (0..self.n_cells())
            .map(|y| self.sites_of(y).filter(|&i| (state >> i) & 1 == 1).count())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Energy,
    Number,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::Energy => "energy",
            Quantity::Number => "number",
        }
    }
}

/// `i<[A, B]>` for Hermitian `A`, `B`, equal to `-2 Im Tr(ρAB)`.
pub fn commutator_expectation(a: &HermitianOperator, b: &HermitianOperator, rho: &DensityMatrix) -> f64 {
    let rho_a = rho.matrix() * a.matrix();
    -2.0 * trace_product(&rho_a, b.matrix()).im
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityReport {
    /// `d<A_y>/dt = i<[H, A_y]>`.
    pub rate: f64,
    /// Expected fluxes into the cell, one per source, with a label.
    pub fluxes: Vec<(String, f64)>,
    pub flux_sum: f64,
    pub gap: f64,
}

/// Discrete continuity equation for the energy or number of one cell (or of
/// the whole chain when the partition has a single cell).
///
/// Energy flux from cell `y'` is `i<[ε_{y'}, ε_y]>`. Number flux through a
/// boundary bond `b` is `i<[h_b, ν_y]>`; on-site transverse terms appear as a
/// separate source.
pub fn continuity_check(
    model: &SpinChain,
    partition: &CellPartition,
    rho: &DensityMatrix,
    cell: usize,
    quantity: Quantity,
) -> Result<ContinuityReport> {
    partition.check(model, cell)?;
    crate::hilbert::check_dim(model.dim(), rho.dim())?;
    let h = model.hamiltonian();
    let target = match quantity {
        Quantity::Energy => partition.energy(model, cell)?,
        Quantity::Number => partition.number(model, cell)?,
    };
    // i<[S, A]> = -2 Im Tr(Aρ S); Aρ is shared by every source.
    let a_rho = target.matrix() * rho.matrix();
    let rate_of = |source: &CMatrix| -2.0 * trace_product(&a_rho, source).im;
    let mut fluxes = Vec::new();
    match quantity {
        Quantity::Energy => {
            for other in (0..partition.n_cells()).filter(|&o| o != cell) {
                let source = partition.energy(model, other)?;
                fluxes.push((format!("cell {other}"), rate_of(source.matrix())));
            }
        }
        Quantity::Number => {
            for b in partition.boundary_bonds(cell) {
                fluxes.push((format!("bond {b}"), rate_of(model.bond_term(b).matrix())));
            }
            if !model.is_number_conserving() {
                let mut m = CMatrix::zeros(model.dim(), model.dim());
                for i in partition.sites_of(cell) {
                    model.add_transverse(i, 1.0, &mut m);
                }
                fluxes.push(("transverse".to_string(), rate_of(&m)));
            }
        }
    }
    let rate = rate_of(h.matrix());
    let flux_sum: f64 = fluxes.iter().map(|(_, f)| f).sum();
    Ok(ContinuityReport {
        rate,
        fluxes,
        flux_sum,
        gap: (rate - flux_sum).abs(),
    })
}

/// `(<A²> − <A>²) / <A>²` for the energy or number of one cell.
pub fn fluctuation_ratio(
    model: &SpinChain,
    partition: &CellPartition,
    rho: &DensityMatrix,
    quantity: Quantity,
    cell: usize,
) -> Result<f64> {
    let a = match quantity {
        Quantity::Energy => partition.energy(model, cell)?,
        Quantity::Number => partition.number(model, cell)?,
    };
    crate::hilbert::check_dim(a.dim(), rho.dim())?;
    let mean = trace_product(a.matrix(), rho.matrix()).re;
    let rho_a = rho.matrix() * a.matrix();
    let second = trace_product(&rho_a, a.matrix()).re;
    if mean.abs() <= 1e-14 {
        return Err(Error::Precondition(format!(
            "{} of cell {cell} has zero mean; the fluctuation ratio is undefined",
            quantity.name()
        )));
    }
    Ok(((second - mean * mean) / (mean * mean)).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{max_abs, max_abs_diff, CVector, Propagator, StateVector};

    #[test]
    fn cells_partition_the_chain() {
        let chain = SpinChain::uniform(6, 1.0, 0.4, vec![0.1, -0.2, 0.3, 0.0, 0.5, -0.1]).unwrap();
        for size in [1, 2, 3, 6] {
            let p = CellPartition::new(6, size).unwrap();
            let mut e = CMatrix::zeros(64, 64);
            let mut n = CMatrix::zeros(64, 64);
            for y in 0..p.n_cells() {
                e += p.energy(&chain, y).unwrap().matrix();
                n += p.number(&chain, y).unwrap().matrix();
            }
            assert!(max_abs_diff(&e, chain.hamiltonian().matrix()) < 1e-14);
            assert_eq!(max_abs_diff(&n, chain.number().matrix()), 0.0);
        }
        assert!(CellPartition::new(6, 4).is_err());
    }

    #[test]
    fn number_conservation() {
        let chain = SpinChain::uniform(5, 1.0, 0.7, vec![0.3; 5]).unwrap();
        assert!(chain.is_number_conserving());
        let h = chain.hamiltonian();
        let n = chain.number();
        assert!(max_abs(&crate::hilbert::commutator(h.matrix(), n.matrix())) <= 1e-12);

        let noisy = SpinChain::new(5, vec![1.0; 4], vec![0.0; 4], vec![0.0; 5], vec![0.2; 5]).unwrap();
        assert!(!noisy.is_number_conserving());
        let c = crate::hilbert::commutator(noisy.hamiltonian().matrix(), noisy.number().matrix());
        assert!(max_abs(&c) > 0.1);
    }

    #[test]
    fn xx_two_site_spectrum() {
        // single excitation on two sites: energies ±J
        let chain = SpinChain::xx(2, 0.8).unwrap();
        let s = crate::hilbert::spectral_decompose(&chain.hamiltonian()).unwrap();
        let expected = [0.8, 0.0, 0.0, -0.8];
        for (a, b) in s.values.iter().zip(expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn continuity_examples() {
        let chain = SpinChain::uniform(4, 1.0, 0.5, vec![0.2, 0.0, -0.1, 0.3]).unwrap();
        let mut psi = CVector::zeros(16);
        psi[0b0001] = Complex64::new(0.8, 0.0);
        psi[0b0011] = Complex64::new(0.0, 0.6);
        let psi = StateVector::new(psi).unwrap();
        let prop = Propagator::new(&chain.hamiltonian(), 1.0).unwrap();
        let rho = prop.evolve_state(&psi, 0.3).unwrap().density();

        let whole = CellPartition::new(4, 4).unwrap();
        let r = continuity_check(&chain, &whole, &rho, 0, Quantity::Energy).unwrap();
        assert!(r.rate.abs() <= 1e-10 && r.fluxes.is_empty());
        let r = continuity_check(&chain, &whole, &rho, 0, Quantity::Number).unwrap();
        assert!(r.rate.abs() <= 1e-10);

        for size in [1, 2] {
            let p = CellPartition::new(4, size).unwrap();
            for y in 0..p.n_cells() {
                for q in [Quantity::Energy, Quantity::Number] {
                    let r = continuity_check(&chain, &p, &rho, y, q).unwrap();
                    assert!(r.gap <= 1e-9, "{size} {y} {q:?}: {r:?}");
                }
            }
        }
    }

    #[test]
    fn excitation_flows_right() {
        let chain = SpinChain::xx(4, 1.0).unwrap();
        let p = CellPartition::new(4, 2).unwrap();
        let psi = StateVector::basis(16, 0b0001);
        let prop = Propagator::new(&chain.hamiltonian(), 1.0).unwrap();
        let at_rest = continuity_check(&chain, &p, &psi.density(), 1, Quantity::Number).unwrap();
        assert!(at_rest.flux_sum.abs() < 1e-14);
        let rho = prop.evolve_state(&psi, 0.5).unwrap().density();
        let r = continuity_check(&chain, &p, &rho, 1, Quantity::Number).unwrap();
        assert!(r.gap <= 1e-9);
        assert!(r.flux_sum > 0.0);
    }

    #[test]
    fn fluctuation_examples() {
        let chain = SpinChain::xx(4, 1.0).unwrap();
        let p = CellPartition::new(4, 2).unwrap();
        let eigen = StateVector::basis(16, 0b0111).density();
        assert_eq!(fluctuation_ratio(&chain, &p, &eigen, Quantity::Number, 0).unwrap(), 0.0);
        let empty = StateVector::basis(16, 0).density();
        assert!(matches!(
            fluctuation_ratio(&chain, &p, &empty, Quantity::Number, 0),
            Err(Error::Precondition(_))
        ));

        // product state: binomial(V, q) occupation
        let q: f64 = 0.3;
        let site = [(1.0 - q).sqrt(), q.sqrt()];
        let amps: Vec<f64> = (0..16)
            .map(|s| (0..4).map(|i| site[(s >> i) & 1]).product())
            .collect();
        let rho = StateVector::from_real(&amps).unwrap().density();
        let r = fluctuation_ratio(&chain, &p, &rho, Quantity::Number, 1).unwrap();
        assert!((r - (1.0 - q) / (2.0 * q)).abs() < 1e-12);
    }

    #[test]
    fn xx_ground_state_cell_fluctuations() {
        // ground state of the open XX chain is the half-filled Slater determinant
        let (l, v) = (8, 4);
        let chain = SpinChain::xx(l, 1.0).unwrap();
        let p = CellPartition::new(l, v).unwrap();
        let spec = crate::hilbert::spectral_decompose(&chain.hamiltonian()).unwrap();
        let ground = StateVector::new(spec.vectors.column(0).into_owned()).unwrap();
        let rho = ground.density();
        let ratio = fluctuation_ratio(&chain, &p, &rho, Quantity::Number, 0).unwrap();

        // free-fermion oracle: Var(N_A) = Tr(C_A - C_A²)
        let n = l as f64 + 1.0;
        let mode = |k: usize, i: usize| (2.0 / n).sqrt() * (k as f64 * std::f64::consts::PI * (i + 1) as f64 / n).sin();
        let c = nalgebra::DMatrix::from_fn(v, v, |i, j| (1..=l / 2).map(|k| mode(k, i) * mode(k, j)).sum::<f64>());
        let mean = c.trace();
        let var = mean - (&c * &c).trace();
        assert!((mean - 2.0).abs() < 1e-12);
        assert!((ratio - var / (mean * mean)).abs() < 1e-10);
        assert!(ratio < 0.2);
    }
}
