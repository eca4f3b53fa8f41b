//! A particle on a one-dimensional lattice, compared with its classical path.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Probability allowed in the edge cells before a run is declared truncated.
pub const EDGE_PROBABILITY_TOL: f64 = 1e-6;

/// Packets narrower than this many grid spacings are rejected.
pub const MIN_WIDTH_SPACINGS: f64 = 3.0;

const RTOL: f64 = 1e-11;
const ATOL: f64 = 1e-13;
const MAX_STEPS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Potential {
    Free,
    /// `½ m ω² x²`.
    Harmonic { omega: f64 },
    /// `strength · x⁴`.
    Quartic { strength: f64 },
}

impl Potential {
    pub fn value(&self, x: f64, mass: f64) -> f64 {
        match *self {
            Potential::Free => 0.0,
            Potential::Harmonic { omega } => 0.5 * mass * omega * omega * x * x,
            Potential::Quartic { strength } => strength * x.powi(4),
        }
    }

    /// `-V'(x)`.
    pub fn force(&self, x: f64, mass: f64) -> f64 {
        match *self {
            Potential::Free => 0.0,
            Potential::Harmonic { omega } => -mass * omega * omega * x,
            Potential::Quartic { strength } => -4.0 * strength * x.powi(3),
        }
    }
}

/// Gaussian packet `exp(-(x - x0)²/(4σ²) + i p0 x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Packet {
    pub x0: f64,
    pub p0: f64,
    pub width: f64,
}

/// Uniform grid on `[x_min, x_max]` with a second-difference kinetic term
/// and hard walls just outside the end points.
#[derive(Debug, Clone, PartialEq)]
pub struct WavePacketModel {
    grid: usize,
    x_min: f64,
    spacing: f64,
    mass: f64,
    potential: Potential,
}

impl WavePacketModel {
    pub fn new(grid: usize, x_min: f64, x_max: f64, mass: f64, potential: Potential) -> Result<Self> {
        if grid < 16 {
            return Err(Error::InvalidArgument(format!("grid of {grid} points is too small")));
        }
        if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::InvalidArgument(format!("bad domain [{x_min}, {x_max}]")));
        }
        if !(mass > 0.0) {
            return Err(Error::InvalidArgument(format!("mass {mass} must be positive")));
        }
        Ok(Self {
            grid,
            x_min,
            spacing: (x_max - x_min) / (grid - 1) as f64,
            mass,
            potential,
        })
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn potential(&self) -> Potential {
        self.potential
    }

    pub fn position(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.spacing
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.grid).map(|j| self.position(j)).collect()
    }

    /// Points per side that count as the edge.
    pub fn edge_cells(&self) -> usize {
        (self.grid / 32).max(4)
    }

    pub fn hamiltonian(&self) -> DMatrix<f64> {
        let kin = 1.0 / (2.0 * self.mass * self.spacing * self.spacing);
        let mut h = DMatrix::zeros(self.grid, self.grid);
        for j in 0..self.grid {
            h[(j, j)] = 2.0 * kin + self.potential.value(self.position(j), self.mass);
            if j + 1 < self.grid {
                h[(j, j + 1)] = -kin;
                h[(j + 1, j)] = -kin;
            }
        }
        h
    }

    /// Normalized packet amplitudes on the grid.
    pub fn packet(&self, packet: &Packet) -> Result<DVector<Complex64>> {
        if !(packet.width >= MIN_WIDTH_SPACINGS * self.spacing) {
            return Err(Error::Precondition(format!(
                "packet width {} is below {MIN_WIDTH_SPACINGS} grid spacings ({})",
                packet.width, self.spacing
            )));
        }
        let mut psi = DVector::from_fn(self.grid, |j, _| {
            let x = self.position(j);
            let d = x - packet.x0;
            Complex64::from_polar((-d * d / (4.0 * packet.width * packet.width)).exp(), packet.p0 * x)
        });
        let norm = psi.norm();
        if !(norm > 0.0) {
            return Err(Error::Precondition("packet has no weight on the grid".into()));
        }
        psi.unscale_mut(norm);
        Ok(psi)
    }

    fn edge_probability(&self, psi: &DVector<Complex64>) -> f64 {
        let e = self.edge_cells();
        (0..e)
            .chain(self.grid - e..self.grid)
            .map(|j| psi[j].norm_sqr())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EhrenfestRow {
    pub t: f64,
    pub mean_x: f64,
    pub x_classical: f64,
    /// `|<x>(t) - x_classical(t)|`.
    pub gap: f64,
    /// `sqrt(<x²> - <x>²)`.
    pub spread: f64,
    pub norm: f64,
}

/// Quantum mean position against the classical trajectory from the same
/// `(x0, p0)` at each of `times`.
pub fn ehrenfest_experiment(model: &WavePacketModel, packet: &Packet, times: &[f64]) -> Result<Vec<EhrenfestRow>> {
    check_times(times)?;
    let psi0 = model.packet(packet)?;
    let edge = model.edge_probability(&psi0);
    if edge > EDGE_PROBABILITY_TOL {
        return Err(Error::Truncation {
            probability: edge,
            time: 0.0,
        });
    }
    let eig = SymmetricEigen::new(model.hamiltonian());
    let basis = eig.eigenvectors.map(|x| Complex64::new(x, 0.0));
    let coeffs = basis.tr_mul(&psi0);
    let classical = classical_trajectory(&model.potential, model.mass, packet.x0, packet.p0, times)?;
    let xs = model.positions();

    let mut rows = Vec::with_capacity(times.len());
    for (&t, &(x_cl, _)) in times.iter().zip(&classical) {
        let phased = DVector::from_fn(model.grid, |k, _| coeffs[k] * Complex64::from_polar(1.0, -eig.eigenvalues[k] * t));
        let psi = &basis * phased;
        let edge = model.edge_probability(&psi);
        if edge > EDGE_PROBABILITY_TOL {
            return Err(Error::Truncation { probability: edge, time: t });
        }
        let (mut norm, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for (a, &x) in psi.iter().zip(&xs) {
            let p = a.norm_sqr();
            norm += p;
            m1 += p * x;
            m2 += p * x * x;
        }
        let mean_x = m1 / norm;
        rows.push(EhrenfestRow {
            t,
            mean_x,
            x_classical: x_cl,
            gap: (mean_x - x_cl).abs(),
            spread: (m2 / norm - mean_x * mean_x).max(0.0).sqrt(),
            norm,
        });
    }
    Ok(rows)
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument(
            "times must be finite, non-negative and non-decreasing".into(),
        ));
    }
    Ok(())
}

/// `(x, p)` at each of `times` for `m ẍ = -V'(x)` from `(x0, p0)` at `t = 0`,
/// by adaptive Dormand–Prince 5(4) steps.
pub fn classical_trajectory(
    potential: &Potential,
    mass: f64,
    x0: f64,
    p0: f64,
    times: &[f64],
) -> Result<Vec<(f64, f64)>> {
    check_times(times)?;
    let rhs = |y: [f64; 2]| [y[1] / mass, potential.force(y[0], mass)];
    let mut y = [x0, p0];
    let mut t = 0.0;
    let mut h = 1e-3;
    let mut steps = 0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        while t < target {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(Error::numerical("classical trajectory", format!("step budget exhausted at t = {t}")));
            }
            let landing = h >= target - t;
            let step = if landing { target - t } else { h };
            let (next, err) = dopri_step(&rhs, y, step);
            let accepted = err <= 1.0;
            if accepted {
                t = if landing { target } else { t + step };
                y = next;
            }
            // a shortened landing step does not shrink the working step size
            if !(accepted && landing) {
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                h = step * factor;
            }
            if !(h > 0.0) || !h.is_finite() {
                return Err(Error::numerical("classical trajectory", format!("step size collapsed at t = {t}")));
            }
        }
        out.push((y[0], y[1]));
    }
    Ok(out)
}

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One autonomous step; returns the fifth-order solution and the scaled error norm.
fn dopri_step(rhs: &impl Fn([f64; 2]) -> [f64; 2], y: [f64; 2], h: f64) -> ([f64; 2], f64) {
    let mut k = [[0.0; 2]; 7];
    k[0] = rhs(y);
    for s in 1..7 {
        let mut ys = y;
        for (j, kj) in k.iter().enumerate().take(s) {
            for i in 0..2 {
                ys[i] += h * A[s][j] * kj[i];
            }
        }
        k[s] = rhs(ys);
    }
    // the last stage is evaluated at the fifth-order solution
    let mut next = y;
    let mut err = 0.0f64;
    for i in 0..2 {
        let mut hi = 0.0;
        let mut lo = 0.0;
        for s in 0..7 {
            let b5 = if s < 6 { A[6][s] } else { 0.0 };
            hi += b5 * k[s][i];
            lo += B4[s] * k[s][i];
        }
        next[i] = y[i] + h * hi;
        let scale = ATOL + RTOL * y[i].abs().max(next[i].abs());
        err = err.max((h * (hi - lo)).abs() / scale);
    }
    (next, err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn free_packet_at_rest_stays_put() {
        let model = WavePacketModel::new(256, -10.0, 10.0, 1.0, Potential::Free).unwrap();
        let rows = ehrenfest_experiment(&model, &Packet { x0: 0.0, p0: 0.0, width: 1.0 }, &[0.0, 1.0, 2.0]).unwrap();
        for r in &rows {
            assert!(r.mean_x.abs() < 1e-10);
            assert!((r.norm - 1.0).abs() < 1e-9);
        }
        assert!(rows[2].spread > rows[0].spread);
    }

    #[test]
    fn harmonic_matches_closed_form() {
        let model = WavePacketModel::new(512, -6.0, 6.0, 1.0, Potential::Harmonic { omega: 1.0 }).unwrap();
        let packet = Packet { x0: 1.0, p0: 0.5, width: 0.5f64.sqrt() };
        let times: Vec<f64> = (0..=40).map(|k| k as f64 * 2.0 * PI / 40.0).collect();
        let rows = ehrenfest_experiment(&model, &packet, &times).unwrap();
        let amplitude = (1.0f64 + 0.25).sqrt();
        for r in &rows {
            let exact = r.t.cos() + 0.5 * r.t.sin();
            assert!((r.x_classical - exact).abs() < 1e-8);
            assert!(r.gap <= 1e-3 * amplitude, "{r:?}");
            assert!((r.norm - 1.0).abs() < 1e-9 * r.t.max(1.0));
        }
    }

    /// Quarter period of `m ẍ = -4k x³` from rest at `A`:
    /// `sqrt(m/2k)/A · ∫₀¹ du/sqrt(1-u⁴)`.
    fn quartic_quarter_period(mass: f64, k: f64, amplitude: f64) -> f64 {
        const HALF_LEMNISCATE: f64 = 1.311_028_777_146_059_9;
        (mass / (2.0 * k)).sqrt() / amplitude * HALF_LEMNISCATE
    }

    #[test]
    fn heavy_quartic_packet_follows_classical_path() {
        let mass = 100.0;
        let v = Potential::Quartic { strength: 0.25 };
        let q = quartic_quarter_period(mass, 0.25, 2.0);
        let end = classical_trajectory(&v, mass, 2.0, 0.0, &[q]).unwrap()[0];
        assert!(end.0.abs() < 1e-8);
        let model = WavePacketModel::new(768, -3.5, 3.5, mass, v).unwrap();
        let times: Vec<f64> = (0..=20).map(|k| k as f64 * q / 20.0).collect();
        let rows = ehrenfest_experiment(&model, &Packet { x0: 2.0, p0: 0.0, width: 0.15 }, &times).unwrap();
        for r in &rows {
            assert!(r.gap <= 0.01 * 2.0, "{r:?}");
        }
    }

    #[test]
    fn classical_quartic_conserves_energy() {
        let v = Potential::Quartic { strength: 0.25 };
        let times: Vec<f64> = (0..=50).map(|k| k as f64 * 0.2).collect();
        let path = classical_trajectory(&v, 1.0, 2.0, 0.0, &times).unwrap();
        for &(x, p) in &path {
            assert!((0.5 * p * p + v.value(x, 1.0) - 4.0).abs() < 1e-8);
        }
    }

    #[test]
    fn narrow_or_edge_packets_rejected() {
        let model = WavePacketModel::new(128, -5.0, 5.0, 1.0, Potential::Free).unwrap();
        let narrow = Packet { x0: 0.0, p0: 0.0, width: model.spacing() };
        assert!(matches!(ehrenfest_experiment(&model, &narrow, &[0.0]), Err(Error::Precondition(_))));
        let edge = Packet { x0: 4.5, p0: 0.0, width: 0.5 };
        assert!(matches!(ehrenfest_experiment(&model, &edge, &[0.0]), Err(Error::Truncation { .. })));
        let moving = Packet { x0: 0.0, p0: 3.0, width: 0.5 };
        match ehrenfest_experiment(&model, &moving, &[0.0, 0.1, 3.0]) {
            Err(Error::Truncation { time, .. }) => assert_eq!(time, 3.0),
            other => panic!("{other:?}"),
        }
    }
}
