//! A system that imprints its value on a register of environment qubits.
//!
//! System value `s` rotates every environment qubit from `|0>` by
//! `R(sθ) = e^{-isθσ_y}`, so two environment records overlap by
//! `cos((s - s')θ)^N`. The history set asks for `s` before the coupling and
//! for a Fourier-basis alternative of the system after it.

use num_complex::Complex64;

use crate::decoherence::{decoherence_functional_pure, DecoherenceReport, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::hilbert::{fourier_basis, kron, CMatrix, CVector, Projector, ProjectorSet, StateVector};
use crate::histories::{History, HistorySet};

/// Largest total dimension for the dense construction.
pub const MAX_DENSE_DIM: usize = 1 << 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvironmentModel {
    system_dim: usize,
    n_env: usize,
    theta: f64,
}

impl EnvironmentModel {
    pub fn new(system_dim: usize, n_env: usize, theta: f64) -> Result<Self> {
        if system_dim < 2 {
            return Err(Error::InvalidArgument(format!(
                "system dimension {system_dim} < 2"
            )));
        }
        if !theta.is_finite() {
            return Err(Error::InvalidArgument(format!("coupling {theta} is not finite")));
        }
        Ok(Self {
            system_dim,
            n_env,
            theta,
        })
    }

    pub fn system_dim(&self) -> usize {
        self.system_dim
    }

    pub fn n_env(&self) -> usize {
        self.n_env
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// `system_dim · 2^N`, or `None` if it overflows.
    pub fn total_dim(&self) -> Option<usize> {
        u32::try_from(self.n_env)
            .ok()
            .and_then(|n| 1usize.checked_shl(n))
            .and_then(|e| e.checked_mul(self.system_dim))
    }

    fn check_cap(&self) -> Result<usize> {
        match self.total_dim() {
            Some(d) if d <= MAX_DENSE_DIM => Ok(d),
            d => Err(Error::CapExceeded {
                what: "environment model dimension",
                value: d.unwrap_or(usize::MAX),
                cap: MAX_DENSE_DIM,
            }),
        }
    }

    /// `<E_s|E_s'>`, one factor per environment qubit.
    pub fn record_overlap(&self, s: usize, s_prime: usize) -> f64 {
        let c = ((s_prime as f64 - s as f64) * self.theta).cos();
        (0..self.n_env).fold(1.0, |acc, _| acc * c)
    }

    /// `max_{Δ≠0} |cos Δθ|^N`.
    pub fn closed_form_defect(&self) -> f64 {
        (1..self.system_dim)
            .map(|delta| self.record_overlap(0, delta).abs())
            .fold(0.0, f64::max)
    }

    /// `‖(R_α C_β - δ_αβ C_α)Ψ‖` maximum for the pointer records, `|cos θ|^N / 2`.
    pub fn closed_form_records_violation(&self) -> Result<f64> {
        self.require_qubit_system()?;
        Ok(self.record_overlap(0, 1).abs() / 2.0)
    }

    fn require_qubit_system(&self) -> Result<()> {
        if self.system_dim != 2 {
            return Err(Error::InvalidArgument(format!(
                "pointer records need a two-level system, got dimension {}",
                self.system_dim
            )));
        }
        Ok(())
    }

    /// Uniform system superposition with every environment qubit in `|0>`.
    pub fn initial_state(&self) -> Result<StateVector> {
        let dim = self.check_cap()?;
        let env = dim / self.system_dim;
        let amp = Complex64::new(1.0 / (self.system_dim as f64).sqrt(), 0.0);
        let mut v = CVector::zeros(dim);
        for s in 0..self.system_dim {
            v[s * env] = amp;
        }
        StateVector::new(v)
    }

    /// `R(φ)^{⊗N}` on the environment.
    fn rotation_power(&self, phi: f64) -> CMatrix {
        let (sin, cos) = phi.sin_cos();
        let r = CMatrix::from_row_slice(
            2,
            2,
            &[cos, -sin, sin, cos].map(|x| Complex64::new(x, 0.0)),
        );
        (0..self.n_env).fold(CMatrix::identity(1, 1), |acc, _| kron(&acc, &r))
    }

    /// `U† (A ⊗ B_s,s') U` assembled block by block, where the coupling
    /// turns `B` into `W_s† B W_s'` with `W_s = R(sθ)^{⊗N}`.
    fn heisenberg_blocks(&self, system: &CMatrix, env_blocks: impl Fn(usize, usize) -> CMatrix) -> CMatrix {
        let d = self.system_dim;
        let env = 1usize << self.n_env;
        let mut m = CMatrix::zeros(d * env, d * env);
        for s in 0..d {
            for t in 0..d {
                let a = system[(s, t)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let block = env_blocks(s, t) * a;
                m.view_mut((s * env, t * env), (env, env)).copy_from(&block);
            }
        }
        m
    }

    fn system_sets(&self) -> (ProjectorSet, ProjectorSet) {
        let d = self.system_dim;
        let env = 1usize << self.n_env;
        let labels: Vec<String> = (0..d).map(|i| i.to_string()).collect();
        let first = (0..d)
            .map(|s| {
                let mut m = CMatrix::zeros(d * env, d * env);
                for k in 0..env {
                    m[(s * env + k, s * env + k)] = Complex64::new(1.0, 0.0);
                }
                Projector::trusted(m)
            })
            .collect();
        let fourier = fourier_basis(d);
        let rotations: Vec<CMatrix> = (0..d).map(|k| self.rotation_power(k as f64 * self.theta)).collect();
        let second = (0..d)
            .map(|f| {
                let col = fourier.column(f);
                let system = col * col.adjoint();
                Projector::trusted(self.heisenberg_blocks(&system, |s, t| {
                    if s <= t {
                        rotations[t - s].clone()
                    } else {
                        rotations[s - t].transpose()
                    }
                }))
            })
            .collect();
        (
            ProjectorSet::trusted(first, labels.clone()),
            ProjectorSet::trusted(second, labels),
        )
    }

    /// Dense two-time history set: system value at `t = 0`, Fourier-basis
    /// alternative after the coupling at `t = 1`.
    pub fn history_set(&self) -> Result<HistorySet> {
        self.check_cap()?;
        let (first, second) = self.system_sets();
        HistorySet::branch_independent(vec![0.0, 1.0], vec![first, second])
    }

    /// Pointer records `U†(P_f ⊗ Π_s)U` labelled `"s,f"` like the histories,
    /// with `Π_1 = |E_1><E_1|` and `Π_0 = I - Π_1`.
    pub fn records(&self) -> Result<ProjectorSet> {
        self.require_qubit_system()?;
        let dim = self.check_cap()?;
        let env = dim / 2;
        let w1 = self.rotation_power(self.theta);
        let e1 = w1.column(0).into_owned();
        let pi1 = &e1 * e1.adjoint();
        let pi0 = CMatrix::identity(env, env) - &pi1;
        let fourier = fourier_basis(2);
        let w0 = CMatrix::identity(env, env);
        let w = [&w0, &w1];
        let mut members = Vec::new();
        let mut labels = Vec::new();
        for (s, pi) in [&pi0, &pi1].into_iter().enumerate() {
            for f in 0..2 {
                let col = fourier.column(f);
                let system = col * col.adjoint();
                let m = self.heisenberg_blocks(&system, |a, b| w[a].adjoint() * pi * w[b]);
                members.push(Projector::trusted(m));
                labels.push(format!("{s},{f}"));
            }
        }
        ProjectorSet::new(members, labels)
    }

    /// Decoherence report assembled from the overlap products without
    /// forming any operator on the environment, usable for large `N`.
    pub fn factorized_report(&self, epsilon: f64) -> DecoherenceReport {
        let d = self.system_dim;
        let fourier = fourier_basis(d);
        let norm = 1.0 / d as f64;
        let mut histories = Vec::with_capacity(d * d);
        let mut labels = Vec::with_capacity(d * d);
        let mut branch = Vec::with_capacity(d * d);
        for s in 0..d {
            for f in 0..d {
                histories.push(History(vec![s, f]));
                labels.push(format!("{s},{f}"));
                // U C_(s,f) Ψ = √(1/d) <F_f|s> |F_f> ⊗ |E_s>
                branch.push((s, f, fourier[(s, f)].conj() * norm.sqrt()));
            }
        }
        let gram = CMatrix::from_fn(d * d, d * d, |i, j| {
            let (s, f, a) = branch[i];
            let (t, g, b) = branch[j];
            if f != g {
                return Complex64::new(0.0, 0.0);
            }
            a * b.conj() * self.record_overlap(t, s)
        });
        DecoherenceReport::from_gram(labels, histories, gram, 0, epsilon)
    }
}

/// Dense history set and its decoherence report for the uniform initial state.
pub fn environment_decoherence_model(
    system_dim: usize,
    n_env: usize,
    theta: f64,
) -> Result<(HistorySet, DecoherenceReport)> {
    let model = EnvironmentModel::new(system_dim, n_env, theta)?;
    let set = model.history_set()?;
    let report = decoherence_functional_pure(&set, &model.initial_state()?, DEFAULT_EPSILON)?;
    Ok((set, report))
}
