//! Seeded sampling of states, unitaries and Hermitian matrices.
//!
//! Sub-seeds follow one rule everywhere: work item `i` of a run with master
//! seed `s` draws from `ChaCha20Rng::seed_from_u64(s)` switched to stream `i`.
//! Results are therefore independent of thread count and scheduling.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::hilbert::{CMatrix, CVector, DensityMatrix, HermitianOperator, StateVector};

pub type SeededRng = ChaCha20Rng;

pub fn master_rng(seed: u64) -> SeededRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Independent stream for work item `index`.
pub fn stream_rng(seed: u64, index: u64) -> SeededRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn gaussian_complex<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im)
}

pub fn ginibre<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(dim, dim, |_, _| gaussian_complex(rng))
}

/// Haar-random pure state.
pub fn haar_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> StateVector {
    loop {
        let v = CVector::from_fn(dim, |_, _| gaussian_complex(rng));
        if let Ok(psi) = StateVector::normalized(v) {
            return psi;
        }
    }
}

/// Haar-random unitary: QR of a Ginibre matrix with the phases of `R`'s
/// diagonal moved into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let qr = ginibre(dim, rng).qr();
    let mut q = qr.q();
    let r = qr.r();
    for (k, mut col) in q.column_iter_mut().enumerate() {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        col *= phase;
    }
    q
}

/// GUE-like random Hermitian matrix with unit-variance entries.
pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> HermitianOperator {
    let g = ginibre(dim, rng);
    HermitianOperator::new((&g + g.adjoint()).scale(0.5)).expect("hermitian by construction")
}

/// Random real symmetric matrix (entries standard normal).
pub fn random_real_symmetric<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> HermitianOperator {
    let g = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.sample(StandardNormal));
    HermitianOperator::from_real((&g + g.transpose()).scale(0.5)).expect("symmetric by construction")
}

/// Full-rank random density matrix `W W† / Tr(W W†)` with Ginibre `W`.
pub fn random_density<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DensityMatrix {
    let w = ginibre(dim, rng);
    let m = &w * w.adjoint();
    let tr = m.trace().re;
    DensityMatrix::new(m.unscale(tr)).expect("positive by construction")
}
