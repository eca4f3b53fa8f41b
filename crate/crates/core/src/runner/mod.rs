//! Batch front-end: experiment configs in, JSON and CSV results out.
//!
//! Exit codes: 0 success, 2 configuration or I/O error, 3 numerical failure,
//! 4 size cap exceeded.

pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

pub use config::{parse_config, Experiment, ExperimentConfig, HistorySpec, StateSpec, Violation, KINDS};
pub use output::{csv_table, format_float, write_atomic};

use crate::decoherence::decoherence_functional_pure;
use crate::error::{Error, Result};
use crate::hilbert::{Propagator, StateVector};
use crate::histories::HistorySet;
use crate::maxent::{max_ent_state, solve_multipliers, ConstraintSet};
use crate::models::{
    domain_wall, ehrenfest_experiment, second_law_experiment, CellPartition, EnvironmentModel, SpinChain,
    WavePacketModel,
};
use crate::random::{haar_state, stream_rng};
use crate::theorems::{certainty_check, search_fine_grained_with_controls};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_CAP: i32 = 4;

/// Environment variable consulted when `--threads` is absent.
pub const THREADS_ENV: &str = "REALM_THREADS";

pub const SECOND_LAW_HEADER: [&str; 4] = ["t", "S_local", "S_eq", "defect"];
pub const EHRENFEST_HEADER: [&str; 6] = ["t", "mean_x", "x_classical", "gap", "spread", "norm"];

/// Fraction of rows averaged for the late-window entropy ratio.
pub const LATE_WINDOW: f64 = 0.25;

pub fn exit_code(e: &Error) -> i32 {
    if e.is_cap() {
        EXIT_CAP
    } else if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_CONFIG
    }
}

/// Results of one experiment before they are written.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub json: Value,
    pub csv: Option<String>,
}

impl Artifacts {
    pub fn json_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.json).expect("JSON values always serialize");
        s.push('\n');
        s
    }
}

/// Reads and validates a config file. An unreadable file is one violation at `$`.
pub fn load_config(path: &Path) -> std::result::Result<ExperimentConfig, Vec<Violation>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        vec![Violation {
            field: "$".into(),
            message: format!("cannot read {}: {e}", path.display()),
        }]
    })?;
    parse_config(&text)
}

/// Runs the experiment and returns its outputs without touching the disk.
pub fn execute(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let (result, csv) = match &cfg.experiment {
        Experiment::Decoherence { history, epsilon } => (decoherence(history, *epsilon, cfg.seed)?, None),
        Experiment::Certainty { history, tolerance } => {
            let (set, psi) = dense_history(history, cfg.seed)?;
            let report = certainty_check(&set, &psi, *tolerance)?;
            (to_value(&report), None)
        }
        Experiment::MaxEnt(spec) => {
            let cs = ConstraintSet::new(spec.operators.clone(), spec.targets.clone())?;
            let sol = if spec.lenient {
                max_ent_state(&cs, spec.tolerance, spec.max_iterations)?
            } else {
                solve_multipliers(&cs, spec.tolerance, spec.max_iterations)?
            };
            let rho = sol.rho_tilde.matrix();
            let n = rho.nrows();
            let part = |f: fn(&crate::Complex64) -> f64| -> Vec<Vec<f64>> {
                (0..n).map(|i| (0..n).map(|j| f(&rho[(i, j)])).collect()).collect()
            };
            let mut v = sol.to_json();
            v["rho"] = json!({ "re": part(|z| z.re), "im": part(|z| z.im) });
            v["dual_gap"] = json!(sol.dual_gap);
            v["eliminated"] = json!(sol.eliminated);
            (v, None)
        }
        Experiment::SecondLaw(spec) => {
            let bonds = spec.sites.saturating_sub(1);
            let chain = SpinChain::new(
                spec.sites,
                vec![spec.hopping; bonds],
                vec![spec.interaction; bonds],
                spec.fields.clone(),
                vec![0.0; spec.sites],
            )?;
            let partition = CellPartition::new(spec.sites, spec.cell_size)?;
            let psi0 = match spec.initial {
                config::InitialChain::DomainWall(k) => domain_wall(spec.sites, k),
                config::InitialChain::Haar => haar_state(chain.dim(), &mut stream_rng(cfg.seed, 0)),
            };
            let traj = second_law_experiment(&chain, &partition, &psi0, &spec.times, spec.epsilon)?;
            let rows: Vec<Vec<f64>> = traj.rows.iter().map(|r| vec![r.t, r.s_local, r.s_eq, r.defect]).collect();
            let summary = json!({
                "s_eq": traj.s_eq,
                "s_local_initial": traj.rows[0].s_local,
                "s_local_max": traj.rows.iter().map(|r| r.s_local).fold(f64::NEG_INFINITY, f64::max),
                "max_excess": traj.max_excess(),
                "late_window_fraction": LATE_WINDOW,
                "late_window_ratio": traj.late_window_ratio(LATE_WINDOW),
                "epsilon": traj.epsilon,
                "decoherent_rows": traj.decoherent_rows(),
                "rows": traj.rows.len(),
            });
            (summary, Some(csv_table(&SECOND_LAW_HEADER, &rows)))
        }
        Experiment::Ehrenfest(spec) => {
            let model = WavePacketModel::new(spec.grid, spec.x_min, spec.x_max, spec.mass, spec.potential)?;
            let rows = ehrenfest_experiment(&model, &spec.packet, &spec.times)?;
            let table: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| vec![r.t, r.mean_x, r.x_classical, r.gap, r.spread, r.norm])
                .collect();
            let summary = json!({
                "potential": spec.potential,
                "packet": { "x0": spec.packet.x0, "p0": spec.packet.p0, "width": spec.packet.width },
                "max_gap": rows.iter().map(|r| r.gap).fold(0.0, f64::max),
                "max_norm_drift": rows.iter().map(|r| (r.norm - 1.0).abs()).fold(0.0, f64::max),
                "rows": rows.len(),
            });
            (summary, Some(csv_table(&EHRENFEST_HEADER, &table)))
        }
        Experiment::TheoremSearch(spec) => {
            let s = search_fine_grained_with_controls(spec.dim, spec.n_times, spec.trials, spec.controls, cfg.seed)?;
            (s.to_json(), None)
        }
    };
    let json = json!({
        "kind": cfg.kind,
        "seed": cfg.seed,
        "result": result,
    });
    Ok(Artifacts { json, csv })
}

/// Runs the experiment and writes its files into `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let artifacts = execute(cfg)?;
    let mut written = Vec::new();
    if let (Some(csv), Some(name)) = (&artifacts.csv, &cfg.csv_name) {
        written.push(write_atomic(out_dir, name, csv.as_bytes())?);
    }
    written.push(write_atomic(out_dir, &cfg.json_name, artifacts.json_text().as_bytes())?);
    Ok(written)
}

fn to_value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report types serialize")
}

fn decoherence(history: &HistorySpec, epsilon: f64, seed: u64) -> Result<Value> {
    if let HistorySpec::Environment {
        system_dim,
        n_env,
        theta,
    } = *history
    {
        let model = EnvironmentModel::new(system_dim, n_env, theta)?;
        // Past the dense cap the overlap products give the same functional.
        let (route, report) = if model.total_dim().is_some_and(|d| d <= crate::models::environment::MAX_DENSE_DIM) {
            let set = model.history_set()?;
            ("dense", decoherence_functional_pure(&set, &model.initial_state()?, epsilon)?)
        } else {
            ("factorized", model.factorized_report(epsilon))
        };
        let mut v = report.to_json();
        v["route"] = json!(route);
        v["closed_form_defect"] = json!(model.closed_form_defect());
        return Ok(v);
    }
    let (set, psi) = dense_history(history, seed)?;
    Ok(decoherence_functional_pure(&set, &psi, epsilon)?.to_json())
}

fn dense_history(history: &HistorySpec, seed: u64) -> Result<(HistorySet, StateVector)> {
    match history {
        HistorySpec::Environment {
            system_dim,
            n_env,
            theta,
        } => {
            let model = EnvironmentModel::new(*system_dim, *n_env, *theta)?;
            Ok((model.history_set()?, model.initial_state()?))
        }
        HistorySpec::Explicit {
            dim,
            hamiltonian,
            times,
            sets,
            state,
        } => {
            let prop = Propagator::new(hamiltonian, 1.0)?;
            let evolved = sets
                .iter()
                .zip(times)
                .map(|(s, &t)| s.evolved(&prop, t))
                .collect::<Result<Vec<_>>>()?;
            let set = HistorySet::branch_independent(times.clone(), evolved)?;
            let psi = match state {
                StateSpec::Vector(v) => v.clone(),
                StateSpec::Haar => haar_state(*dim, &mut stream_rng(seed, 0)),
            };
            Ok((set, psi))
        }
    }
}
