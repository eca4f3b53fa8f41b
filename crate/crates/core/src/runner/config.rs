//! Experiment configuration: JSON parsing and validation with field paths.

use num_complex::Complex64;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::Error;
use crate::hilbert::{
    computational_basis, fourier_basis, CMatrix, CVector, HermitianOperator, Projector, ProjectorSet, StateVector,
};
use crate::models::{Packet, Potential};

pub const KINDS: [&str; 6] = ["decoherence", "maxent", "second-law", "ehrenfest", "theorem-search", "certainty"];

/// One problem with a configuration, located by a dotted path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone)]
pub enum StateSpec {
    Vector(StateVector),
    Haar,
}

#[derive(Debug, Clone)]
pub enum HistorySpec {
    /// Schrödinger-picture sets at each time, Heisenberg-evolved with `H`.
    Explicit {
        dim: usize,
        hamiltonian: HermitianOperator,
        times: Vec<f64>,
        sets: Vec<ProjectorSet>,
        state: StateSpec,
    },
    Environment {
        system_dim: usize,
        n_env: usize,
        theta: f64,
    },
}

#[derive(Debug, Clone)]
pub struct MaxEntSpec {
    pub operators: Vec<HermitianOperator>,
    pub targets: Vec<f64>,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub lenient: bool,
}

#[derive(Debug, Clone)]
pub enum InitialChain {
    DomainWall(usize),
    Haar,
}

#[derive(Debug, Clone)]
pub struct SecondLawSpec {
    pub sites: usize,
    pub cell_size: usize,
    pub hopping: f64,
    pub interaction: f64,
    pub fields: Vec<f64>,
    pub initial: InitialChain,
    pub times: Vec<f64>,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct EhrenfestSpec {
    pub grid: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub mass: f64,
    pub potential: Potential,
    pub packet: Packet,
    pub times: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SearchSpec {
    pub dim: usize,
    pub n_times: usize,
    pub trials: usize,
    pub controls: usize,
}

#[derive(Debug, Clone)]
pub enum Experiment {
    Decoherence { history: HistorySpec, epsilon: f64 },
    MaxEnt(MaxEntSpec),
    SecondLaw(SecondLawSpec),
    Ehrenfest(EhrenfestSpec),
    TheoremSearch(SearchSpec),
    Certainty { history: HistorySpec, tolerance: f64 },
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: String,
    pub seed: u64,
    /// Result file name, relative to the output directory.
    pub json_name: String,
    /// Table file name for kinds that produce one.
    pub csv_name: Option<String>,
    pub experiment: Experiment,
}

/// Parses and validates a configuration, reporting every violation found.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, Vec<Violation>> {
    let mut ctx = Ctx::default();
    let value: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => {
            ctx.push("$", format!("invalid JSON: {e}"));
            return Err(ctx.violations);
        }
    };
    let Some(root) = value.as_object() else {
        ctx.push("$", "configuration must be a JSON object");
        return Err(ctx.violations);
    };
    let kind = match root.get("kind") {
        Some(Value::String(k)) if KINDS.contains(&k.as_str()) => Some(k.clone()),
        Some(Value::String(k)) => {
            ctx.push("kind", format!("unknown kind '{k}'; allowed kinds: {}", KINDS.join(", ")));
            None
        }
        Some(_) => {
            ctx.push("kind", format!("must be a string, one of: {}", KINDS.join(", ")));
            None
        }
        None => {
            ctx.push("kind", format!("missing; allowed kinds: {}", KINDS.join(", ")));
            None
        }
    };
    let seed = ctx.opt_u64(root, "", "seed", 0);
    let output = ctx.opt_object(root, "", "output");
    let (json_name, csv_name) = match output {
        Some(o) => {
            ctx.allow(o, "output", &["json", "csv"]);
            (ctx.opt_file_name(o, "output", "json"), ctx.opt_file_name(o, "output", "csv"))
        }
        None => (None, None),
    };
    let Some(kind) = kind else {
        return Err(ctx.violations);
    };

    let common = ["kind", "seed", "output"];
    let experiment = match kind.as_str() {
        "decoherence" => {
            ctx.allow_with(root, "", &common, &["history", "epsilon"]);
            let epsilon = ctx.opt_positive(root, "", "epsilon", crate::decoherence::DEFAULT_EPSILON);
            let history = ctx.req_object(root, "", "history").and_then(|h| ctx.history(h, "history"));
            history.zip(epsilon).map(|(history, epsilon)| Experiment::Decoherence { history, epsilon })
        }
        "certainty" => {
            ctx.allow_with(root, "", &common, &["history", "tolerance"]);
            let tolerance = ctx.opt_positive(root, "", "tolerance", crate::theorems::DEFAULT_CERTAINTY_TOL);
            let history = ctx.req_object(root, "", "history").and_then(|h| ctx.history(h, "history"));
            history.zip(tolerance).map(|(history, tolerance)| Experiment::Certainty { history, tolerance })
        }
        "maxent" => {
            ctx.allow_with(root, "", &common, &["dim", "constraints", "tolerance", "max_iterations", "lenient"]);
            ctx.maxent(root).map(Experiment::MaxEnt)
        }
        "second-law" => {
            ctx.allow_with(
                root,
                "",
                &common,
                &["sites", "cell_size", "hopping", "interaction", "fields", "initial", "times", "epsilon"],
            );
            ctx.second_law(root).map(Experiment::SecondLaw)
        }
        "ehrenfest" => {
            ctx.allow_with(root, "", &common, &["grid", "x_min", "x_max", "mass", "potential", "packet", "times"]);
            ctx.ehrenfest(root).map(Experiment::Ehrenfest)
        }
        "theorem-search" => {
            ctx.allow_with(root, "", &common, &["dim", "n_times", "trials", "controls"]);
            let dim = ctx.req_usize(root, "", "dim");
            let n_times = ctx.req_usize(root, "", "n_times");
            let trials = ctx.req_usize(root, "", "trials");
            let controls = ctx.opt_usize(root, "", "controls", 0);
            if let Some(d) = dim.filter(|&d| d < 2) {
                ctx.push("dim", format!("must be at least 2, got {d}"));
            }
            if n_times == Some(0) {
                ctx.push("n_times", "must be at least 1");
            }
            match (dim, n_times, trials, controls) {
                (Some(dim), Some(n_times), Some(trials), Some(controls)) => Some(Experiment::TheoremSearch(SearchSpec {
                    dim,
                    n_times,
                    trials,
                    controls,
                })),
                _ => None,
            }
        }
        _ => unreachable!("kind checked above"),
    };
    let has_table = matches!(kind.as_str(), "second-law" | "ehrenfest");
    if !has_table && csv_name.as_ref().is_some_and(|c| c.is_some()) {
        ctx.push("output.csv", format!("kind '{kind}' writes no table"));
    }
    let experiment = match experiment {
        Some(e) if ctx.violations.is_empty() => e,
        Some(_) => return Err(ctx.violations),
        None => {
            if ctx.violations.is_empty() {
                ctx.push("$", format!("incomplete '{kind}' configuration"));
            }
            return Err(ctx.violations);
        }
    };
    let json_name = json_name.flatten().unwrap_or_else(|| format!("{kind}.json"));
    let csv_name = has_table.then(|| csv_name.flatten().unwrap_or_else(|| format!("{kind}.csv")));
    Ok(ExperimentConfig {
        kind,
        seed: seed.unwrap_or(0),
        json_name,
        csv_name,
        experiment,
    })
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

#[derive(Default)]
struct Ctx {
    violations: Vec<Violation>,
}

impl Ctx {
    fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            field: field.into(),
            message: message.into(),
        });
    }

    fn allow(&mut self, obj: &Map<String, Value>, path: &str, keys: &[&str]) {
        for k in obj.keys() {
            if !keys.contains(&k.as_str()) {
                self.push(join(path, k), format!("unknown field; expected one of: {}", keys.join(", ")));
            }
        }
    }

    fn allow_with(&mut self, obj: &Map<String, Value>, path: &str, a: &[&str], b: &[&str]) {
        let keys: Vec<&str> = a.iter().chain(b).copied().collect();
        self.allow(obj, path, &keys);
    }

    fn req<'a>(&mut self, obj: &'a Map<String, Value>, path: &str, key: &str) -> Option<&'a Value> {
        let v = obj.get(key);
        if v.is_none() {
            self.push(join(path, key), "missing");
        }
        v
    }

    fn number(&mut self, v: &Value, field: &str) -> Option<f64> {
        match v.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                self.push(field, "must be a finite number");
                None
            }
        }
    }

    fn req_f64(&mut self, obj: &Map<String, Value>, path: &str, key: &str) -> Option<f64> {
        let v = self.req(obj, path, key)?;
        self.number(v, &join(path, key))
    }

    fn opt_f64(&mut self, obj: &Map<String, Value>, path: &str, key: &str, default: f64) -> Option<f64> {
        match obj.get(key) {
            None => Some(default),
            Some(v) => self.number(v, &join(path, key)),
        }
    }

    fn positive(&mut self, x: f64, field: &str) -> Option<f64> {
        if x > 0.0 {
            Some(x)
        } else {
            self.push(field, format!("must be positive, got {x}"));
            None
        }
    }

    fn opt_positive(&mut self, obj: &Map<String, Value>, path: &str, key: &str, default: f64) -> Option<f64> {
        let x = self.opt_f64(obj, path, key, default)?;
        self.positive(x, &join(path, key))
    }

    fn req_positive(&mut self, obj: &Map<String, Value>, path: &str, key: &str) -> Option<f64> {
        let x = self.req_f64(obj, path, key)?;
        self.positive(x, &join(path, key))
    }

    fn unsigned(&mut self, v: &Value, field: &str) -> Option<u64> {
        let n = v.as_u64();
        if n.is_none() {
            self.push(field, "must be a non-negative integer");
        }
        n
    }

    fn req_usize(&mut self, obj: &Map<String, Value>, path: &str, key: &str) -> Option<usize> {
        let v = self.req(obj, path, key)?;
        self.unsigned(v, &join(path, key)).map(|n| n as usize)
    }

    fn opt_usize(&mut self, obj: &Map<String, Value>, path: &str, key: &str, default: usize) -> Option<usize> {
        match obj.get(key) {
            None => Some(default),
            Some(v) => self.unsigned(v, &join(path, key)).map(|n| n as usize),
        }
    }

    fn opt_u64(&mut self, obj: &Map<String, Value>, path: &str, key: &str, default: u64) -> Option<u64> {
        match obj.get(key) {
            None => Some(default),
            Some(v) => self.unsigned(v, &join(path, key)),
        }
    }

    fn opt_bool(&mut self, obj: &Map<String, Value>, path: &str, key: &str, default: bool) -> Option<bool> {
        match obj.get(key) {
            None => Some(default),
            Some(Value::Bool(b)) => Some(*b),
            Some(_) => {
                self.push(join(path, key), "must be true or false");
                None
            }
        }
    }

    fn req_object<'a>(&mut self, obj: &'a Map<String, Value>, path: &str, key: &str) -> Option<&'a Map<String, Value>> {
        let v = self.req(obj, path, key)?;
        let o = v.as_object();
        if o.is_none() {
            self.push(join(path, key), "must be an object");
        }
        o
    }

    fn opt_object<'a>(&mut self, obj: &'a Map<String, Value>, path: &str, key: &str) -> Option<&'a Map<String, Value>> {
        let v = obj.get(key)?;
        let o = v.as_object();
        if o.is_none() {
            self.push(join(path, key), "must be an object");
        }
        o
    }

    fn array<'a>(&mut self, v: &'a Value, field: &str) -> Option<&'a Vec<Value>> {
        let a = v.as_array();
        if a.is_none() {
            self.push(field, "must be an array");
        }
        a
    }

    fn f64_list(&mut self, v: &Value, field: &str) -> Option<Vec<f64>> {
        let items = self.array(v, field)?;
        let mut out = Vec::with_capacity(items.len());
        let mut ok = true;
        for (i, x) in items.iter().enumerate() {
            match self.number(x, &format!("{field}[{i}]")) {
                Some(x) => out.push(x),
                None => ok = false,
            }
        }
        ok.then_some(out)
    }

    /// Output names are plain file names so results stay inside `--out`.
    fn opt_file_name(&mut self, obj: &Map<String, Value>, path: &str, key: &str) -> Option<Option<String>> {
        let field = join(path, key);
        match obj.get(key) {
            None => Some(None),
            Some(Value::String(s))
                if !s.is_empty() && !s.contains(['/', '\\']) && s != "." && s != ".." =>
            {
                Some(Some(s.clone()))
            }
            Some(_) => {
                self.push(field, "must be a plain file name");
                None
            }
        }
    }

    /// Explicit list, or `{"start", "stop", "steps"}` with `steps` points.
    fn times(&mut self, v: &Value, field: &str, strictly_increasing: bool) -> Option<Vec<f64>> {
        let times = if let Some(o) = v.as_object() {
            self.allow(o, field, &["start", "stop", "steps"]);
            let start = self.opt_f64(o, field, "start", 0.0);
            let stop = self.req_f64(o, field, "stop");
            let steps = self.req_usize(o, field, "steps");
            let (start, stop, steps) = (start?, stop?, steps?);
            if steps < 1 || (steps == 1 && stop != start) {
                self.push(join(field, "steps"), "must be at least 2 unless start == stop");
                return None;
            }
            if steps == 1 {
                vec![start]
            } else {
                (0..steps)
                    .map(|k| start + (stop - start) * k as f64 / (steps - 1) as f64)
                    .collect()
            }
        } else {
            self.f64_list(v, field)?
        };
        if times.is_empty() {
            self.push(field, "must contain at least one time");
            return None;
        }
        let bad = if strictly_increasing {
            times.windows(2).any(|w| w[1] <= w[0])
        } else {
            times.windows(2).any(|w| w[1] < w[0])
        };
        if bad {
            self.push(
                field,
                if strictly_increasing { "must be strictly increasing" } else { "must be non-decreasing" },
            );
            return None;
        }
        Some(times)
    }

    fn complex(&mut self, v: &Value, field: &str) -> Option<Complex64> {
        match v {
            Value::Number(_) => self.number(v, field).map(|x| Complex64::new(x, 0.0)),
            Value::Array(p) if p.len() == 2 => {
                let re = self.number(&p[0], &format!("{field}[0]"));
                let im = self.number(&p[1], &format!("{field}[1]"));
                Some(Complex64::new(re?, im?))
            }
            _ => {
                self.push(field, "must be a number or a [re, im] pair");
                None
            }
        }
    }

    fn matrix(&mut self, v: &Value, field: &str, dim: usize) -> Option<CMatrix> {
        let rows = self.array(v, field)?;
        if rows.len() != dim {
            self.push(field, format!("expected {dim} rows, got {}", rows.len()));
            return None;
        }
        let mut m = CMatrix::zeros(dim, dim);
        let mut ok = true;
        for (i, row) in rows.iter().enumerate() {
            let rf = format!("{field}[{i}]");
            let Some(entries) = self.array(row, &rf) else {
                ok = false;
                continue;
            };
            if entries.len() != dim {
                self.push(rf, format!("expected {dim} entries, got {}", entries.len()));
                ok = false;
                continue;
            }
            for (j, e) in entries.iter().enumerate() {
                match self.complex(e, &format!("{field}[{i}][{j}]")) {
                    Some(z) => m[(i, j)] = z,
                    None => ok = false,
                }
            }
        }
        ok.then_some(m)
    }

    /// `{"matrix": …}`, `{"diagonal": […]}` or `{"pauli": "x" | "y" | "z"}`.
    fn operator(&mut self, v: &Value, field: &str, dim: usize) -> Option<HermitianOperator> {
        let Some(o) = v.as_object() else {
            self.push(field, "must be an object with one of: matrix, diagonal, pauli");
            return None;
        };
        self.allow(o, field, &["matrix", "diagonal", "pauli"]);
        if o.len() != 1 {
            self.push(field, "must have exactly one of: matrix, diagonal, pauli");
            return None;
        }
        if let Some(m) = o.get("matrix") {
            let f = join(field, "matrix");
            let m = self.matrix(m, &f, dim)?;
            return self.lift(HermitianOperator::new(m), &f);
        }
        if let Some(d) = o.get("diagonal") {
            let f = join(field, "diagonal");
            let d = self.f64_list(d, &f)?;
            if d.len() != dim {
                self.push(f, format!("expected {dim} entries, got {}", d.len()));
                return None;
            }
            return Some(HermitianOperator::diagonal(&d));
        }
        let f = join(field, "pauli");
        if dim != 2 {
            self.push(f, format!("Pauli operators need dim 2, got {dim}"));
            return None;
        }
        match o.get("pauli").and_then(Value::as_str) {
            Some("x") => Some(crate::hilbert::pauli::sigma_x()),
            Some("y") => Some(crate::hilbert::pauli::sigma_y()),
            Some("z") => Some(crate::hilbert::pauli::sigma_z()),
            _ => {
                self.push(f, "must be one of \"x\", \"y\", \"z\"");
                None
            }
        }
    }

    fn lift<T>(&mut self, r: crate::Result<T>, field: &str) -> Option<T> {
        match r {
            Ok(x) => Some(x),
            Err(e) => {
                self.push(field, e.to_string());
                None
            }
        }
    }

    /// `{"amplitudes": […]}`, `{"basis": k}`, `{"uniform": true}` or `{"haar": true}`.
    fn state(&mut self, v: &Value, field: &str, dim: usize) -> Option<StateSpec> {
        let Some(o) = v.as_object() else {
            self.push(field, "must be an object with one of: amplitudes, basis, uniform, haar");
            return None;
        };
        self.allow(o, field, &["amplitudes", "basis", "uniform", "haar"]);
        if o.len() != 1 {
            self.push(field, "must have exactly one of: amplitudes, basis, uniform, haar");
            return None;
        }
        if let Some(a) = o.get("amplitudes") {
            let f = join(field, "amplitudes");
            let items = self.array(a, &f)?;
            if items.len() != dim {
                self.push(f, format!("expected {dim} amplitudes, got {}", items.len()));
                return None;
            }
            let mut amps = Vec::with_capacity(dim);
            for (i, x) in items.iter().enumerate() {
                amps.push(self.complex(x, &format!("{f}[{i}]")));
            }
            let amps: Option<Vec<Complex64>> = amps.into_iter().collect();
            let psi = self.lift(StateVector::new(CVector::from_vec(amps?)), &f)?;
            return Some(StateSpec::Vector(psi));
        }
        if let Some(b) = o.get("basis") {
            let f = join(field, "basis");
            let k = self.unsigned(b, &f)? as usize;
            if k >= dim {
                self.push(f, format!("index {k} out of range for dim {dim}"));
                return None;
            }
            return Some(StateSpec::Vector(StateVector::basis(dim, k)));
        }
        let (key, value) = o.iter().next().expect("one entry");
        if value != &Value::Bool(true) {
            self.push(join(field, key), "must be true");
            return None;
        }
        if key == "haar" {
            return Some(StateSpec::Haar);
        }
        let amps = CVector::from_element(dim, Complex64::new(1.0 / (dim as f64).sqrt(), 0.0));
        Some(StateSpec::Vector(StateVector::new(amps).expect("normalized")))
    }

    /// `{"basis": "computational" | "fourier"}`, `{"groups": [[i, …], …]}`
    /// (computational-basis index groups), `{"projectors": [matrix, …]}`, or
    /// `{"state_question": state}`; optional `"labels"`.
    fn projector_set(&mut self, v: &Value, field: &str, dim: usize) -> Option<ProjectorSet> {
        let Some(o) = v.as_object() else {
            self.push(field, "must be an object");
            return None;
        };
        self.allow(o, field, &["basis", "groups", "projectors", "state_question", "labels"]);
        let forms: Vec<&str> = ["basis", "groups", "projectors", "state_question"]
            .into_iter()
            .filter(|k| o.contains_key(*k))
            .collect();
        if forms.len() != 1 {
            self.push(field, "must have exactly one of: basis, groups, projectors, state_question");
            return None;
        }
        let labels = match o.get("labels") {
            None => None,
            Some(l) => {
                let f = join(field, "labels");
                let items = self.array(l, &f)?;
                let names: Option<Vec<String>> = items.iter().map(|x| x.as_str().map(String::from)).collect();
                if names.is_none() {
                    self.push(f, "must be an array of strings");
                }
                Some(names?)
            }
        };
        let form = forms[0];
        let f = join(field, form);
        let set = match form {
            "basis" => {
                let basis = match o[form].as_str() {
                    Some("computational") => computational_basis(dim),
                    Some("fourier") => fourier_basis(dim),
                    _ => {
                        self.push(f, "must be \"computational\" or \"fourier\"");
                        return None;
                    }
                };
                ProjectorSet::from_basis(&basis)
            }
            "groups" => {
                let groups = self.array(&o[form], &f)?;
                let mut members = Vec::new();
                for (g, group) in groups.iter().enumerate() {
                    let gf = format!("{f}[{g}]");
                    let idx = self.array(group, &gf)?;
                    let mut m = CMatrix::zeros(dim, dim);
                    for (k, i) in idx.iter().enumerate() {
                        let i = self.unsigned(i, &format!("{gf}[{k}]"))? as usize;
                        if i >= dim {
                            self.push(format!("{gf}[{k}]"), format!("index {i} out of range for dim {dim}"));
                            return None;
                        }
                        m[(i, i)] += Complex64::new(1.0, 0.0);
                    }
                    members.push(self.lift(Projector::new(m), &gf)?);
                }
                ProjectorSet::unlabeled(members)
            }
            "projectors" => {
                let items = self.array(&o[form], &f)?;
                let mut members = Vec::new();
                for (k, item) in items.iter().enumerate() {
                    let pf = format!("{f}[{k}]");
                    let m = self.matrix(item, &pf, dim)?;
                    members.push(self.lift(Projector::new(m), &pf)?);
                }
                ProjectorSet::unlabeled(members)
            }
            _ => match self.state(&o[form], &f, dim)? {
                StateSpec::Vector(psi) => Ok(ProjectorSet::yes_no(&psi)),
                StateSpec::Haar => {
                    self.push(f, "needs an explicit state");
                    return None;
                }
            },
        };
        let set = self.lift(set, field)?;
        match labels {
            None => Some(set),
            Some(labels) => {
                let f = join(field, "labels");
                self.lift(ProjectorSet::new(set.members().to_vec(), labels), &f)
            }
        }
    }

    fn history(&mut self, h: &Map<String, Value>, path: &str) -> Option<HistorySpec> {
        if let Some(env) = h.get("environment") {
            self.allow(h, path, &["environment"]);
            let f = join(path, "environment");
            let Some(e) = env.as_object() else {
                self.push(f, "must be an object");
                return None;
            };
            self.allow(e, &f, &["system_dim", "n_env", "theta"]);
            let system_dim = self.req_usize(e, &f, "system_dim");
            let n_env = self.req_usize(e, &f, "n_env");
            let theta = self.req_f64(e, &f, "theta");
            if let Some(d) = system_dim.filter(|&d| d < 2) {
                self.push(join(&f, "system_dim"), format!("must be at least 2, got {d}"));
                return None;
            }
            return Some(HistorySpec::Environment {
                system_dim: system_dim?,
                n_env: n_env?,
                theta: theta?,
            });
        }
        self.allow(h, path, &["dim", "hamiltonian", "times", "sets", "narrative", "state"]);
        let dim = self.req_usize(h, path, "dim")?;
        if dim == 0 {
            self.push(join(path, "dim"), "must be positive");
            return None;
        }
        let hamiltonian = match h.get("hamiltonian") {
            None => Some(HermitianOperator::zeros(dim)),
            Some(v) => self.operator(v, &join(path, "hamiltonian"), dim),
        };
        let times = self
            .req(h, path, "times")
            .and_then(|v| self.times(v, &join(path, "times"), true));
        let state = self
            .req(h, path, "state")
            .and_then(|v| self.state(v, &join(path, "state"), dim));
        let sets = match (h.get("sets"), h.get("narrative")) {
            (Some(s), None) => {
                let f = join(path, "sets");
                let items = self.array(s, &f);
                let sets: Option<Vec<ProjectorSet>> = items.map(|items| {
                    items
                        .iter()
                        .enumerate()
                        .map(|(k, v)| self.projector_set(v, &format!("{f}[{k}]"), dim))
                        .collect::<Vec<_>>()
                        .into_iter()
                        .collect::<Option<Vec<_>>>()
                })?;
                if let (Some(sets), Some(times)) = (&sets, &times) {
                    if sets.len() != times.len() {
                        self.push(f, format!("{} sets for {} times", sets.len(), times.len()));
                        return None;
                    }
                }
                sets
            }
            (None, Some(n)) => {
                let set = self.projector_set(n, &join(path, "narrative"), dim);
                set.zip(times.as_ref()).map(|(s, t)| vec![s; t.len()])
            }
            _ => {
                self.push(path, "needs exactly one of: sets, narrative");
                None
            }
        };
        Some(HistorySpec::Explicit {
            dim,
            hamiltonian: hamiltonian?,
            times: times?,
            sets: sets?,
            state: state?,
        })
    }

    fn maxent(&mut self, root: &Map<String, Value>) -> Option<MaxEntSpec> {
        let dim = self.req_usize(root, "", "dim");
        let tolerance = self.opt_positive(root, "", "tolerance", crate::maxent::DEFAULT_TOL);
        let max_iterations = self.opt_usize(root, "", "max_iterations", crate::maxent::DEFAULT_MAX_ITER);
        let lenient = self.opt_bool(root, "", "lenient", false);
        let constraints = self.req(root, "", "constraints").and_then(|v| self.array(v, "constraints"));
        let (dim, constraints) = (dim?, constraints?);
        if constraints.is_empty() {
            self.push("constraints", "must not be empty");
            return None;
        }
        let mut operators = Vec::new();
        let mut targets = Vec::new();
        let mut ok = true;
        for (k, c) in constraints.iter().enumerate() {
            let f = format!("constraints[{k}]");
            let Some(o) = c.as_object() else {
                self.push(f, "must be an object with operator and target");
                ok = false;
                continue;
            };
            self.allow(o, &f, &["operator", "target"]);
            let op = self.req(o, &f, "operator").and_then(|v| self.operator(v, &join(&f, "operator"), dim));
            let target = self.req_f64(o, &f, "target");
            match (op, target) {
                (Some(op), Some(t)) => {
                    operators.push(op);
                    targets.push(t);
                }
                _ => ok = false,
            }
        }
        if ok && max_iterations == Some(0) {
            self.push("max_iterations", "must be positive");
            return None;
        }
        ok.then_some(())?;
        Some(MaxEntSpec {
            operators,
            targets,
            tolerance: tolerance?,
            max_iterations: max_iterations?,
            lenient: lenient?,
        })
    }

    fn second_law(&mut self, root: &Map<String, Value>) -> Option<SecondLawSpec> {
        let sites = self.req_usize(root, "", "sites");
        let cell_size = self.req_usize(root, "", "cell_size");
        let hopping = self.opt_f64(root, "", "hopping", 1.0);
        let interaction = self.opt_f64(root, "", "interaction", 0.0);
        let epsilon = self.opt_positive(root, "", "epsilon", crate::decoherence::DEFAULT_EPSILON);
        let times = self.req(root, "", "times").and_then(|v| self.times(v, "times", true));
        let fields = match root.get("fields") {
            None => sites.map(|l| vec![0.0; l]),
            Some(v) => {
                let f = self.f64_list(v, "fields");
                if let (Some(f), Some(l)) = (&f, sites) {
                    if f.len() != l {
                        self.push("fields", format!("expected {l} entries, got {}", f.len()));
                        return None;
                    }
                }
                f
            }
        };
        if let (Some(l), Some(v)) = (sites, cell_size) {
            if l == 0 {
                self.push("sites", "must be positive");
            } else if v == 0 || l % v != 0 {
                self.push("cell_size", format!("must divide sites ({l}), got {v}"));
            }
        }
        let initial = match self.req_object(root, "", "initial") {
            None => None,
            Some(o) => {
                self.allow(o, "initial", &["domain_wall", "haar"]);
                if let Some(v) = o.get("domain_wall") {
                    let k = self.unsigned(v, "initial.domain_wall").map(|k| k as usize);
                    if let (Some(k), Some(l)) = (k, sites) {
                        if k > l {
                            self.push("initial.domain_wall", format!("{k} filled sites on a chain of {l}"));
                        }
                    }
                    k.map(InitialChain::DomainWall)
                } else if o.get("haar") == Some(&Value::Bool(true)) {
                    Some(InitialChain::Haar)
                } else {
                    self.push("initial", "needs {\"domain_wall\": k} or {\"haar\": true}");
                    None
                }
            }
        };
        Some(SecondLawSpec {
            sites: sites?,
            cell_size: cell_size?,
            hopping: hopping?,
            interaction: interaction?,
            fields: fields?,
            initial: initial?,
            times: times?,
            epsilon: epsilon?,
        })
    }

    fn ehrenfest(&mut self, root: &Map<String, Value>) -> Option<EhrenfestSpec> {
        let grid = self.req_usize(root, "", "grid");
        let x_min = self.req_f64(root, "", "x_min");
        let x_max = self.req_f64(root, "", "x_max");
        let mass = self.opt_positive(root, "", "mass", 1.0);
        let times = self.req(root, "", "times").and_then(|v| self.times(v, "times", false));
        if let Some(t) = times.as_ref().filter(|t| t[0] < 0.0) {
            self.push("times", format!("must be non-negative, starts at {}", t[0]));
        }
        if let (Some(a), Some(b)) = (x_min, x_max) {
            if b <= a {
                self.push("x_max", format!("must exceed x_min ({a})"));
            }
        }
        let potential = match self.req_object(root, "", "potential") {
            None => None,
            Some(o) => match o.get("kind").and_then(Value::as_str) {
                Some("free") => {
                    self.allow(o, "potential", &["kind"]);
                    Some(Potential::Free)
                }
                Some("harmonic") => {
                    self.allow(o, "potential", &["kind", "omega"]);
                    self.req_positive(o, "potential", "omega").map(|omega| Potential::Harmonic { omega })
                }
                Some("quartic") => {
                    self.allow(o, "potential", &["kind", "strength"]);
                    self.req_positive(o, "potential", "strength")
                        .map(|strength| Potential::Quartic { strength })
                }
                _ => {
                    self.push("potential.kind", "must be one of: free, harmonic, quartic");
                    None
                }
            },
        };
        let packet = match self.req_object(root, "", "packet") {
            None => None,
            Some(o) => {
                self.allow(o, "packet", &["x0", "p0", "width"]);
                let x0 = self.req_f64(o, "packet", "x0");
                let p0 = self.opt_f64(o, "packet", "p0", 0.0);
                let width = self.req_positive(o, "packet", "width");
                Some(Packet {
                    x0: x0?,
                    p0: p0?,
                    width: width?,
                })
            }
        };
        Some(EhrenfestSpec {
            grid: grid?,
            x_min: x_min?,
            x_max: x_max?,
            mass: mass?,
            potential: potential?,
            packet: packet?,
            times: times?,
        })
    }
}

impl From<Vec<Violation>> for Error {
    fn from(v: Vec<Violation>) -> Self {
        let lines: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        Error::InvalidArgument(lines.join("; "))
    }
}
