//! Dense complex operator algebra on a finite-dimensional Hilbert space.
//!
//! Every type here is validated at construction and immutable afterwards:
//! state vectors are unit norm, Hermitian operators are symmetrized and
//! rejected if they deviate from Hermiticity by more than
//! [`HERMITIAN_TOL`], projectors are idempotent, projector sets are
//! exhaustive and exclusive, density matrices are positive with unit trace.

mod spectral;

pub use spectral::{
    expectation, heisenberg_evolve, herm_exp, spectral_decompose, von_neumann_entropy,
    Propagator, Spectrum,
};
pub(crate) use spectral::{eigh, entropy_of_weights};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const NORM_TOL: f64 = 1e-12;
pub const HERMITIAN_TOL: f64 = 1e-12;
pub const PROJECTOR_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
/// Eigenvalues of a density matrix in `[-NEGATIVITY_TOL, 0)` are clipped to zero.
pub const NEGATIVITY_TOL: f64 = 1e-10;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub(crate) fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub(crate) fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0, |acc, (x, y)| acc.max((x - y).norm()))
}

pub(crate) fn hermitian_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

pub(crate) fn symmetrize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

pub(crate) fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

/// `Tr(A B)` without forming the product.
pub(crate) fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for j in 0..n {
        for i in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

fn check_square(m: &CMatrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Err(Error::InvalidArgument("zero-dimensional operator".into()));
    }
    Ok(m.nrows())
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Unit-norm amplitude vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: CVector,
}

impl StateVector {
    pub fn new(amplitudes: CVector) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidArgument("empty state vector".into()));
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self { amplitudes })
    }

    /// Normalizes `amplitudes`; fails only for the zero vector.
    pub fn normalized(amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::NotNormalized { norm });
        }
        Self::new(amplitudes.unscale(norm))
    }

    pub fn from_real(amplitudes: &[f64]) -> Result<Self> {
        Self::normalized(CVector::from_iterator(
            amplitudes.len(),
            amplitudes.iter().map(|&x| Complex64::new(x, 0.0)),
        ))
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        assert!(index < dim, "basis index {index} out of range for dim {dim}");
        let mut amplitudes = CVector::zeros(dim);
        amplitudes[index] = ONE;
        Self { amplitudes }
    }

    pub(crate) fn from_unit_unchecked(amplitudes: CVector) -> Self {
        Self { amplitudes }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    /// `<self|other>`
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    pub fn projector(&self) -> Projector {
        Projector::onto(&self.amplitudes).expect("unit vector")
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix::from_pure(self)
    }
}

/// Hermitian operator, symmetrized at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    entries: CMatrix,
}

impl HermitianOperator {
    /// Accepts `entries` if it deviates from its adjoint by at most
    /// [`HERMITIAN_TOL`] relative to its largest entry, then stores `(A + A†)/2`.
    pub fn new(entries: CMatrix) -> Result<Self> {
        check_square(&entries)?;
        let deviation = hermitian_deviation(&entries);
        if !deviation.is_finite() || deviation > HERMITIAN_TOL * max_abs(&entries).max(1.0) {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(Self {
            entries: symmetrize(&entries),
        })
    }

    pub fn from_real(entries: DMatrix<f64>) -> Result<Self> {
        Self::new(entries.map(|x| Complex64::new(x, 0.0)))
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let d = CVector::from_iterator(values.len(), values.iter().map(|&x| Complex64::new(x, 0.0)));
        Self {
            entries: CMatrix::from_diagonal(&d),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: identity(dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            entries: CMatrix::zeros(dim, dim),
        }
    }

    /// Symmetrizes without the deviation check; for matrices Hermitian by construction.
    pub(crate) fn from_hermitian_unchecked(entries: CMatrix) -> Self {
        Self {
            entries: symmetrize(&entries),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_matrix(self) -> CMatrix {
        self.entries
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            entries: self.entries.scale(factor),
        }
    }

    /// `Σ c_k A_k`
    pub fn linear_combination(terms: &[(f64, &HermitianOperator)]) -> Result<Self> {
        let (_, first) = terms
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty linear combination".into()))?;
        let dim = first.dim();
        let mut acc = CMatrix::zeros(dim, dim);
        for (c, op) in terms {
            check_dim(dim, op.dim())?;
            acc += op.entries.scale(*c);
        }
        Ok(Self { entries: acc })
    }

    pub fn square(&self) -> Self {
        Self::from_hermitian_unchecked(&self.entries * &self.entries)
    }

    pub fn is_real(&self) -> bool {
        self.entries.iter().all(|z| z.im == 0.0)
    }

    /// Max-entry norm of `[A, B]`.
    pub fn commutator_norm(&self, other: &HermitianOperator) -> f64 {
        max_abs(&commutator(&self.entries, &other.entries))
    }
}

/// Two-level operators in the computational basis.
pub mod pauli {
    use super::*;

    pub fn sigma_x() -> HermitianOperator {
        HermitianOperator::from_real(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]))
            .expect("hermitian")
    }

    pub fn sigma_y() -> HermitianOperator {
        let i = Complex64::new(0.0, 1.0);
        HermitianOperator::new(CMatrix::from_row_slice(2, 2, &[ZERO, -i, i, ZERO])).expect("hermitian")
    }

    pub fn sigma_z() -> HermitianOperator {
        HermitianOperator::diagonal(&[1.0, -1.0])
    }
}

/// Orthogonal projector with cached rank.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    entries: CMatrix,
    rank: usize,
}

impl Projector {
    pub fn new(entries: CMatrix) -> Result<Self> {
        let op = HermitianOperator::new(entries)?;
        let entries = op.into_matrix();
        let deviation = max_abs_diff(&(&entries * &entries), &entries);
        if deviation > PROJECTOR_TOL {
            return Err(Error::NotProjector { deviation });
        }
        Ok(Self::trusted(entries))
    }

    /// Rank-one projector onto the span of `v` (need not be normalized).
    pub fn onto(v: &CVector) -> Result<Self> {
        let norm2 = v.norm_squared();
        if !(norm2 > 0.0) {
            return Err(Error::NotNormalized { norm: norm2.sqrt() });
        }
        Ok(Self {
            entries: (v * v.adjoint()).unscale(norm2),
            rank: 1,
        })
    }

    /// Projector onto the span of orthonormal columns.
    pub fn onto_columns(columns: &CMatrix) -> Result<Self> {
        let dev = gram_deviation(columns);
        if dev > PROJECTOR_TOL {
            return Err(Error::NotOrthonormal { deviation: dev });
        }
        Ok(Self {
            entries: columns * columns.adjoint(),
            rank: columns.ncols(),
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: identity(dim),
            rank: dim,
        }
    }

    /// For matrices that are projectors by construction.
    pub(crate) fn trusted(entries: CMatrix) -> Self {
        let entries = symmetrize(&entries);
        let rank = entries.trace().re.round().max(0.0) as usize;
        Self { entries, rank }
    }

    pub fn complement(&self) -> Projector {
        Self {
            entries: identity(self.dim()) - &self.entries,
            rank: self.dim() - self.rank,
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    pub fn apply(&self, v: &CVector) -> CVector {
        &self.entries * v
    }

    pub fn as_operator(&self) -> HermitianOperator {
        HermitianOperator {
            entries: self.entries.clone(),
        }
    }
}

/// Max deviation of `V† V` from the identity.
pub(crate) fn gram_deviation(columns: &CMatrix) -> f64 {
    let gram = columns.adjoint() * columns;
    max_abs_diff(&gram, &identity(columns.ncols()))
}

/// Exhaustive set of mutually exclusive projectors with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorSet {
    members: Vec<Projector>,
    labels: Vec<String>,
}

impl ProjectorSet {
    pub fn new(members: Vec<Projector>, labels: Vec<String>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidArgument("empty projector set".into()));
        }
        if labels.len() != members.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} projectors",
                labels.len(),
                members.len()
            )));
        }
        let dim = members[0].dim();
        for p in &members {
            check_dim(dim, p.dim())?;
        }
        let mut sum = CMatrix::zeros(dim, dim);
        for p in &members {
            sum += p.matrix();
        }
        let deviation = max_abs_diff(&sum, &identity(dim));
        if deviation > PROJECTOR_TOL {
            return Err(Error::NotExhaustive { deviation });
        }
        for a in 0..members.len() {
            for b in (a + 1)..members.len() {
                let overlap = max_abs(&(members[a].matrix() * members[b].matrix()));
                if overlap > PROJECTOR_TOL {
                    return Err(Error::NotExclusive {
                        deviation: overlap,
                        first: a,
                        second: b,
                    });
                }
            }
        }
        Ok(Self { members, labels })
    }

    /// Labels the members `"0"`, `"1"`, ...
    pub fn unlabeled(members: Vec<Projector>) -> Result<Self> {
        let labels = (0..members.len()).map(|i| i.to_string()).collect();
        Self::new(members, labels)
    }

    /// Rank-one projectors onto the columns of an orthonormal basis.
    pub fn from_basis(basis: &CMatrix) -> Result<Self> {
        check_square(basis)?;
        let deviation = gram_deviation(basis);
        if deviation > PROJECTOR_TOL {
            return Err(Error::NotOrthonormal { deviation });
        }
        let members = (0..basis.ncols())
            .map(|i| Projector {
                entries: basis.column(i) * basis.column(i).adjoint(),
                rank: 1,
            })
            .collect();
        let labels = (0..basis.ncols()).map(|i| i.to_string()).collect();
        Ok(Self { members, labels })
    }

    /// The single alternative `{I}`.
    pub fn trivial(dim: usize) -> Self {
        Self {
            members: vec![Projector::identity(dim)],
            labels: vec!["I".into()],
        }
    }

    /// `{|v><v|, I - |v><v|}` labelled `yes` / `no`.
    pub fn yes_no(v: &StateVector) -> Self {
        let p = v.projector();
        let q = p.complement();
        Self {
            members: vec![p, q],
            labels: vec!["yes".into(), "no".into()],
        }
    }

    pub(crate) fn trusted(members: Vec<Projector>, labels: Vec<String>) -> Self {
        debug_assert_eq!(members.len(), labels.len());
        Self { members, labels }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.members[0].dim()
    }

    pub fn members(&self) -> &[Projector] {
        &self.members
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn member(&self, i: usize) -> &Projector {
        &self.members[i]
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    /// Max deviation of `Σ P` from the identity and of `P_a P_b` from `δ_ab P_a`.
    pub fn relation_defect(&self) -> f64 {
        let dim = self.dim();
        let mut sum = CMatrix::zeros(dim, dim);
        for p in &self.members {
            sum += p.matrix();
        }
        let mut defect = max_abs_diff(&sum, &identity(dim));
        for (a, pa) in self.members.iter().enumerate() {
            for (b, pb) in self.members.iter().enumerate() {
                let prod = pa.matrix() * pb.matrix();
                let d = if a == b {
                    max_abs_diff(&prod, pa.matrix())
                } else {
                    max_abs(&prod)
                };
                defect = defect.max(d);
            }
        }
        defect
    }

    /// Heisenberg-evolved copy `e^{iHt} P e^{-iHt}` of every member.
    pub fn evolved(&self, propagator: &Propagator, t: f64) -> Result<Self> {
        let members = self
            .members
            .iter()
            .map(|p| propagator.heisenberg(p, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            members,
            labels: self.labels.clone(),
        })
    }

    /// Sums members within each group; groups must partition the members.
    pub fn merged(&self, groups: &[Vec<usize>], labels: Vec<String>) -> Result<Self> {
        let mut seen = vec![false; self.len()];
        for g in groups {
            for &i in g {
                if i >= self.len() || seen[i] {
                    return Err(Error::InvalidPartition(format!(
                        "member {i} missing or repeated in merge groups"
                    )));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) || labels.len() != groups.len() {
            return Err(Error::InvalidPartition("merge groups do not cover the set".into()));
        }
        let dim = self.dim();
        let members = groups
            .iter()
            .map(|g| {
                let mut m = CMatrix::zeros(dim, dim);
                let mut rank = 0;
                for &i in g {
                    m += self.members[i].matrix();
                    rank += self.members[i].rank();
                }
                Projector { entries: m, rank }
            })
            .collect();
        Ok(Self { members, labels })
    }

    pub fn approx_eq(&self, other: &ProjectorSet, tol: f64) -> bool {
        self.len() == other.len()
            && self.dim() == other.dim()
            && self
                .members
                .iter()
                .zip(&other.members)
                .all(|(a, b)| max_abs_diff(a.matrix(), b.matrix()) <= tol)
    }
}

/// Positive semidefinite, unit-trace Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: CMatrix,
}

impl DensityMatrix {
    pub fn new(entries: CMatrix) -> Result<Self> {
        let op = HermitianOperator::new(entries)?;
        let entries = op.into_matrix();
        let trace = entries.trace();
        if (trace.re - 1.0).abs() > TRACE_TOL || trace.im.abs() > TRACE_TOL {
            return Err(Error::InvalidDensity(format!("trace {trace}")));
        }
        let spectrum = eigh(&entries)?;
        let min = spectrum.values.last().copied().unwrap_or(0.0);
        if min < -NEGATIVITY_TOL {
            return Err(Error::InvalidDensity(format!("negative eigenvalue {min:e}")));
        }
        Ok(Self { entries })
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        let v = psi.amplitudes();
        Self {
            entries: v * v.adjoint(),
        }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            entries: identity(dim).unscale(dim as f64),
        }
    }

    pub(crate) fn trusted(entries: CMatrix) -> Self {
        Self {
            entries: symmetrize(&entries),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    pub fn purity(&self) -> f64 {
        trace_product(&self.entries, &self.entries).re
    }

    /// `ρ = Σ_k p_k |w_k><w_k|` as pairs `(p_k, w_k)` with `p_k > 0`, largest first.
    pub fn ensemble(&self) -> Result<Vec<(f64, CVector)>> {
        let spectrum = eigh(&self.entries)?;
        Ok(spectrum
            .values
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(k, &p)| (p.min(1.0), spectrum.vectors.column(k).into_owned()))
            .collect())
    }
}

/// Computational basis as identity columns.
pub fn computational_basis(dim: usize) -> CMatrix {
    identity(dim)
}

/// Discrete Fourier basis, column `k` has entries `e^{2πi jk/d}/√d`.
pub fn fourier_basis(dim: usize) -> CMatrix {
    let norm = (dim as f64).sqrt();
    CMatrix::from_fn(dim, dim, |j, k| {
        let phase = 2.0 * std::f64::consts::PI * (j * k) as f64 / dim as f64;
        Complex64::from_polar(1.0 / norm, phase)
    })
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}
