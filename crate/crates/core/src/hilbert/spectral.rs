use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use super::{
    check_dim, identity, max_abs, max_abs_diff, trace_product, CMatrix, CVector, DensityMatrix,
    HermitianOperator, Projector, StateVector, NEGATIVITY_TOL,
};
use crate::error::{Error, Result};

const MAX_EIGEN_SWEEPS: usize = 10_000;
const UNITARITY_TOL: f64 = 1e-10;
const EXP_OVERFLOW: f64 = 700.0;

/// Eigenvalues in descending order with matching orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V f(Λ) V†`
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let weights: Vec<f64> = self.values.iter().map(|&x| f(x)).collect();
        self.weighted(&weights)
    }

    /// `V diag(w) V†`
    pub fn weighted(&self, w: &[f64]) -> CMatrix {
        let mut scaled = self.vectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col.scale_mut(w[k]);
        }
        scaled * self.vectors.adjoint()
    }

    /// `V diag(z) V†` for complex weights.
    pub fn weighted_complex(&self, z: &[Complex64]) -> CMatrix {
        let mut scaled = self.vectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= z[k];
        }
        scaled * self.vectors.adjoint()
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.weighted(&self.values)
    }

    /// Transforms `m` into the eigenbasis: `V† M V`.
    pub fn to_eigenbasis(&self, m: &CMatrix) -> CMatrix {
        self.vectors.adjoint() * m * &self.vectors
    }
}

/// Eigendecomposition of a matrix assumed Hermitian. Real input takes the
/// real symmetric path.
pub(crate) fn eigh(m: &CMatrix) -> Result<Spectrum> {
    let n = m.nrows();
    let (values, vectors) = if m.iter().all(|z| z.im == 0.0) {
        let real = DMatrix::from_fn(n, n, |i, j| m[(i, j)].re);
        let eig = SymmetricEigen::try_new(real, f64::EPSILON, MAX_EIGEN_SWEEPS)
            .ok_or_else(|| eigen_failure(m))?;
        (
            eig.eigenvalues.iter().copied().collect::<Vec<_>>(),
            eig.eigenvectors.map(|x| Complex64::new(x, 0.0)),
        )
    } else {
        let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, MAX_EIGEN_SWEEPS)
            .ok_or_else(|| eigen_failure(m))?;
        (eig.eigenvalues.iter().copied().collect::<Vec<_>>(), eig.eigenvectors)
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("eigensolver", "non-finite eigenvalue"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let sorted_values = order.iter().map(|&k| values[k]).collect();
    let sorted_vectors = CMatrix::from_fn(n, n, |i, j| vectors[(i, order[j])]);
    Ok(Spectrum {
        values: sorted_values,
        vectors: sorted_vectors,
    })
}

fn eigen_failure(m: &CMatrix) -> Error {
    let n = m.nrows();
    let mut off = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                off += m[(i, j)].norm_sqr();
            }
        }
    }
    Error::numerical(
        "eigensolver",
        format!("no convergence; off-diagonal residual {:e}", off.sqrt()),
    )
}

pub fn spectral_decompose(a: &HermitianOperator) -> Result<Spectrum> {
    eigh(a.matrix())
}

/// `exp(scale · A)`; fails when `scale · λ` exceeds the double-precision range.
pub fn herm_exp(a: &HermitianOperator, scale: f64) -> Result<HermitianOperator> {
    let spectrum = spectral_decompose(a)?;
    let worst = spectrum
        .values
        .iter()
        .map(|&l| scale * l)
        .fold(f64::NEG_INFINITY, f64::max);
    if worst > EXP_OVERFLOW {
        return Err(Error::Overflow { exponent: worst });
    }
    Ok(HermitianOperator::from_hermitian_unchecked(
        spectrum.map(|l| (scale * l).exp()),
    ))
}

/// Time evolution generated by a fixed Hamiltonian, diagonalized once.
#[derive(Debug, Clone)]
pub struct Propagator {
    spectrum: Spectrum,
    hbar: f64,
}

impl Propagator {
    pub fn new(hamiltonian: &HermitianOperator, hbar: f64) -> Result<Self> {
        if !(hbar > 0.0) {
            return Err(Error::InvalidArgument(format!("hbar must be positive, got {hbar}")));
        }
        Ok(Self {
            spectrum: spectral_decompose(hamiltonian)?,
            hbar,
        })
    }

    pub fn dim(&self) -> usize {
        self.spectrum.dim()
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    fn phases(&self, t: f64) -> Vec<Complex64> {
        self.spectrum
            .values
            .iter()
            .map(|&e| Complex64::from_polar(1.0, -e * t / self.hbar))
            .collect()
    }

    /// `U(t) = e^{-iHt/ħ}`
    pub fn unitary(&self, t: f64) -> CMatrix {
        self.spectrum.weighted_complex(&self.phases(t))
    }

    /// `U(t)|ψ>` without forming `U`.
    pub fn evolve_vector(&self, v: &CVector, t: f64) -> CVector {
        let v_t = &self.spectrum.vectors;
        let mut coeffs = v_t.adjoint() * v;
        for (c, z) in coeffs.iter_mut().zip(self.phases(t)) {
            *c *= z;
        }
        v_t * coeffs
    }

    pub fn evolve_state(&self, psi: &StateVector, t: f64) -> Result<StateVector> {
        check_dim(self.dim(), psi.dim())?;
        Ok(StateVector::from_unit_unchecked(self.evolve_vector(psi.amplitudes(), t)))
    }

    pub fn evolve_density(&self, rho: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
        check_dim(self.dim(), rho.dim())?;
        let u = self.unitary(t);
        Ok(DensityMatrix::trusted(&u * rho.matrix() * u.adjoint()))
    }

    /// `e^{iHt/ħ} M e^{-iHt/ħ}`
    pub fn heisenberg_matrix(&self, m: &CMatrix, t: f64) -> CMatrix {
        let u = self.unitary(t);
        u.adjoint() * m * u
    }

    pub fn heisenberg(&self, p: &Projector, t: f64) -> Result<Projector> {
        check_dim(self.dim(), p.dim())?;
        if t == 0.0 {
            return Ok(p.clone());
        }
        Ok(Projector::trusted(self.heisenberg_matrix(p.matrix(), t)))
    }
}

/// Heisenberg-picture projector `e^{iHt/ħ} P e^{-iHt/ħ}`, with a unitarity check on `U`.
pub fn heisenberg_evolve(
    p: &Projector,
    hamiltonian: &HermitianOperator,
    t: f64,
    hbar: f64,
) -> Result<Projector> {
    check_dim(hamiltonian.dim(), p.dim())?;
    let propagator = Propagator::new(hamiltonian, hbar)?;
    let u = propagator.unitary(t);
    let defect = max_abs_diff(&(&u * u.adjoint()), &identity(u.nrows()));
    if defect > UNITARITY_TOL {
        return Err(Error::numerical(
            "heisenberg_evolve",
            format!("propagator not unitary (defect {defect:e})"),
        ));
    }
    Ok(Projector::trusted(u.adjoint() * p.matrix() * u))
}

/// `-Tr(ρ log ρ)` in nats, with `0 log 0 = 0`.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    // eigh on a validated density matrix cannot fail short of a solver breakdown,
    // which we surface as NaN rather than a silently wrong entropy
    match eigh(rho.matrix()) {
        Ok(spectrum) => entropy_of_weights(&spectrum.values),
        Err(_) => f64::NAN,
    }
}

pub(crate) fn entropy_of_weights(weights: &[f64]) -> f64 {
    weights
        .iter()
        .map(|&p| {
            let p = if (-NEGATIVITY_TOL..0.0).contains(&p) { 0.0 } else { p.clamp(0.0, 1.0) };
            if p > 0.0 {
                -p * p.ln()
            } else {
                0.0
            }
        })
        .sum()
}

/// `Re Tr(A ρ)`; the imaginary part must vanish to 1e-10.
pub fn expectation(a: &HermitianOperator, rho: &DensityMatrix) -> Result<f64> {
    check_dim(a.dim(), rho.dim())?;
    let z = trace_product(a.matrix(), rho.matrix());
    if z.im.abs() > 1e-10 * max_abs(a.matrix()).max(1.0) {
        return Err(Error::numerical(
            "expectation",
            format!("imaginary trace part {:e}", z.im),
        ));
    }
    Ok(z.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{pauli, ProjectorSet};
    use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn identity_spectrum() {
        let s = spectral_decompose(&HermitianOperator::identity(2)).unwrap();
        assert_eq!(s.values, vec![1.0, 1.0]);
        assert!(max_abs_diff(&(s.vectors.adjoint() * &s.vectors), &identity(2)) < 1e-14);
    }

    #[test]
    fn diagonal_spectrum_descending() {
        let s = spectral_decompose(&HermitianOperator::diagonal(&[-1.0, 3.0])).unwrap();
        assert_eq!(s.values, vec![3.0, -1.0]);
        assert!((s.vectors[(1, 0)].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn pauli_x_spectrum() {
        let s = spectral_decompose(&pauli::sigma_x()).unwrap();
        assert!((s.values[0] - 1.0).abs() < 1e-14 && (s.values[1] + 1.0).abs() < 1e-14);
        // eigenvectors (1, ±1)/√2 up to phase
        let v0 = s.vectors.column(0);
        let v1 = s.vectors.column(1);
        assert!(((v0[0] * v0[1].conj()).re - 0.5).abs() < 1e-14);
        assert!(((v1[0] * v1[1].conj()).re + 0.5).abs() < 1e-14);
        assert!((v0[0].norm() - FRAC_1_SQRT_2).abs() < 1e-14);
    }

    #[test]
    fn complex_hermitian_reconstructs() {
        let s = spectral_decompose(&pauli::sigma_y()).unwrap();
        assert!(max_abs_diff(&s.reconstruct(), pauli::sigma_y().matrix()) < 1e-14);
    }

    #[test]
    fn herm_exp_examples() {
        let e = herm_exp(&HermitianOperator::zeros(3), 1.0).unwrap();
        assert!(max_abs_diff(e.matrix(), &identity(3)) < 1e-14);

        let e = herm_exp(&HermitianOperator::diagonal(&[LN_2, 0.0]), 1.0).unwrap();
        assert!((e.matrix()[(0, 0)].re - 2.0).abs() < 1e-14);
        assert!((e.matrix()[(1, 1)].re - 1.0).abs() < 1e-14);

        let e = herm_exp(&pauli::sigma_z(), -1.0).unwrap();
        assert!((e.matrix()[(0, 0)].re - (-1.0f64).exp()).abs() < 1e-14);
        assert!((e.matrix()[(1, 1)].re - 1.0f64.exp()).abs() < 1e-14);

        assert!(matches!(
            herm_exp(&HermitianOperator::diagonal(&[800.0]), 1.0),
            Err(Error::Overflow { .. })
        ));
    }

    #[test]
    fn heisenberg_examples() {
        let p0 = StateVector::basis(2, 0).projector();
        let h = HermitianOperator::diagonal(&[0.0, 1.7]);
        let same = heisenberg_evolve(&p0, &h, 0.0, 1.0).unwrap();
        assert!(max_abs_diff(same.matrix(), p0.matrix()) < 1e-14);
        let commuting = heisenberg_evolve(&p0, &h, 3.3, 1.0).unwrap();
        assert!(max_abs_diff(commuting.matrix(), p0.matrix()) < 1e-13);

        let omega = 2.0;
        let plus = StateVector::from_real(&[1.0, 1.0]).unwrap().projector();
        let h = HermitianOperator::diagonal(&[omega / 2.0, -omega / 2.0]);
        let evolved = heisenberg_evolve(&plus, &h, PI / omega, 1.0).unwrap();
        let minus = StateVector::from_real(&[1.0, -1.0]).unwrap().projector();
        assert!(max_abs_diff(evolved.matrix(), minus.matrix()) < 1e-13);
        assert_eq!(evolved.rank(), 1);

        assert!(matches!(
            heisenberg_evolve(&plus, &HermitianOperator::zeros(3), 1.0, 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn entropy_examples() {
        let psi = StateVector::from_real(&[0.6, 0.8]).unwrap();
        assert!(von_neumann_entropy(&psi.density()).abs() < 1e-12);
        for n in [2usize, 3, 7] {
            let s = von_neumann_entropy(&DensityMatrix::maximally_mixed(n));
            assert!((s - (n as f64).ln()).abs() < 1e-12);
        }
        let rho = DensityMatrix::new(CMatrix::from_diagonal(&CVector::from_vec(vec![c(0.5), c(0.5), c(0.0)]))).unwrap();
        assert!((von_neumann_entropy(&rho) - LN_2).abs() < 1e-14);
    }

    #[test]
    fn expectation_examples() {
        let mixed = DensityMatrix::maximally_mixed(2);
        assert!((expectation(&HermitianOperator::identity(2), &mixed).unwrap() - 1.0).abs() < 1e-15);
        assert!(expectation(&pauli::sigma_z(), &mixed).unwrap().abs() < 1e-15);
        let rho = DensityMatrix::new(CMatrix::from_diagonal(&CVector::from_vec(vec![c(0.9), c(0.1)]))).unwrap();
        assert!((expectation(&pauli::sigma_z(), &rho).unwrap() - 0.8).abs() < 1e-15);
        assert!(expectation(&HermitianOperator::identity(3), &rho).is_err());
    }

    #[test]
    fn evolved_set_keeps_relations() {
        let set = ProjectorSet::from_basis(&crate::hilbert::computational_basis(2)).unwrap();
        let prop = Propagator::new(&pauli::sigma_x(), 1.0).unwrap();
        let evolved = set.evolved(&prop, 0.37).unwrap();
        assert!(evolved.relation_defect() < 1e-12);
    }
}
