//! TOML experiment descriptions.
//!
//! Top-level keys: `experiment`, `seed`, `output_dir`, `workers`,
//! `t_final`, `eps_list`, `nu_list`, `snapshot_times`. Sections:
//! `[kernel]`, `[velocity]`, `[datum]` (or `[[datum]]` for lists),
//! `[grid]`, `[scheme]`, `[study]`. Which keys are accepted depends on the
//! experiment; anything not read is rejected. All problems are collected
//! before returning.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::diagnostics::studies::{
    BlowupParams, ConvergenceParams, CounterexampleParams, MaxPrincipleParams, SigmaCertifyParams,
    TvContractionParams, ViscousParams,
};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernels::{Engine, KernelSpec};
use crate::models::{InitialDatum, ModelSpec, VelocityKind, VelocityModel};
use crate::solver::{FluxForm, SchemeConfig, DEFAULT_CFL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    MaxPrinciple,
    TvWMonotone,
    TvWCounterexample,
    TvBlowup,
    EpsConvergence,
    EvenKernelNonconvergence,
    ViscousDiagram,
    SigmaCertify,
    SingleRun,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::MaxPrinciple,
        Experiment::TvWMonotone,
        Experiment::TvWCounterexample,
        Experiment::TvBlowup,
        Experiment::EpsConvergence,
        Experiment::EvenKernelNonconvergence,
        Experiment::ViscousDiagram,
        Experiment::SigmaCertify,
        Experiment::SingleRun,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Experiment::MaxPrinciple => "max_principle",
            Experiment::TvWMonotone => "tv_w_monotone",
            Experiment::TvWCounterexample => "tv_w_counterexample",
            Experiment::TvBlowup => "tv_blowup",
            Experiment::EpsConvergence => "eps_convergence",
            Experiment::EvenKernelNonconvergence => "even_kernel_nonconvergence",
            Experiment::ViscousDiagram => "viscous_diagram",
            Experiment::SigmaCertify => "sigma_certify",
            Experiment::SingleRun => "single_run",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Experiment::MaxPrinciple => "0 <= u <= 1 at every step over a kernel/velocity/datum/eps suite",
            Experiment::TvWMonotone => "TV of w = u * eta_eps never exceeds its initial value",
            Experiment::TvWCounterexample => "search for a grid-converged increase of TV(w) with a non-convex kernel",
            Experiment::TvBlowup => "TV(u) at a fixed time grows as eps decreases on data with vacuum gaps",
            Experiment::EpsConvergence => "L1 distance of u_eps and w_eps to the entropy solution as eps -> 0",
            Experiment::EvenKernelNonconvergence => "even kernel: distance to the entropy solution stalls (demonstration)",
            Experiment::ViscousDiagram => "the three measured arrows between non-local, viscous and local problems",
            Experiment::SigmaCertify => "sign structure of the sigma sums on seeded random profiles",
            Experiment::SingleRun => "one run with trace, diagnostics and plots",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Experiment::ALL.into_iter().find(|e| e.id() == s)
    }

    /// Demonstrations always exit 0 and carry their findings in the verdict.
    pub fn is_demonstration(self) -> bool {
        matches!(self, Experiment::EvenKernelNonconvergence)
    }
}

#[derive(Debug, Clone)]
pub struct SingleRunPlan {
    pub model: ModelSpec,
    pub scheme: SchemeConfig,
    pub grid: Grid,
    pub snapshot_times: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum Plan {
    MaxPrinciple(MaxPrincipleParams),
    TvWMonotone(TvContractionParams),
    Counterexample(CounterexampleParams),
    Blowup(BlowupParams),
    Convergence(ConvergenceParams),
    EvenKernel(ConvergenceParams),
    Viscous(ViscousParams),
    Sigma(SigmaCertifyParams),
    Single(SingleRunPlan),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub plan: Plan,
    /// The configuration text as given.
    pub source: String,
}

impl ExperimentConfig {
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        if let Plan::Sigma(p) = &mut self.plan {
            p.seed = seed;
        }
    }
}

pub const DEFAULT_SEED: u64 = 20240601;

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config_str(&src, &base)
}

/// Parses configuration text; relative file names resolve against `base`.
pub fn parse_config_str(src: &str, base: &Path) -> Result<ExperimentConfig> {
    let table: toml::Table = src.parse().map_err(|e: toml::de::Error| {
        Error::Config(e.to_string().trim_end().to_string())
    })?;
    let mut r = Reader::new(&table, src, base);
    let cfg = build(&mut r);
    r.check_unknown();
    if !r.errors.is_empty() {
        return Err(Error::Config(r.errors.join("\n")));
    }
    let (experiment, seed, output_dir, workers, plan) = cfg.expect("no errors implies a plan");
    Ok(ExperimentConfig {
        experiment,
        seed,
        output_dir,
        workers,
        plan,
        source: src.to_string(),
    })
}

// ---------------------------------------------------------------------

type Key = (String, String);

struct Reader<'a> {
    root: &'a toml::Table,
    base: PathBuf,
    keys: HashMap<Key, usize>,
    sections: HashMap<String, usize>,
    used: BTreeSet<Key>,
    errors: Vec<String>,
}

const SECTIONS: [&str; 6] = ["kernel", "velocity", "datum", "grid", "scheme", "study"];

fn scan_lines(src: &str) -> (HashMap<Key, usize>, HashMap<String, usize>) {
    let mut keys = HashMap::new();
    let mut sections = HashMap::new();
    let mut counters: HashMap<String, usize> = HashMap::new();
    let mut current = String::new();
    for (i, line) in src.lines().enumerate() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix("[[") {
            let name = rest.split("]]").next().unwrap_or("").trim().to_string();
            let k = counters.entry(name.clone()).or_insert(0);
            current = format!("{name}#{k}");
            *k += 1;
            sections.insert(current.clone(), i + 1);
        } else if let Some(rest) = t.strip_prefix('[') {
            current = rest.split(']').next().unwrap_or("").trim().to_string();
            sections.insert(current.clone(), i + 1);
        } else if let Some(eq) = t.find('=') {
            let key = t[..eq].trim().trim_matches('"');
            if !key.is_empty() && key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                keys.entry((current.clone(), key.to_string())).or_insert(i + 1);
            }
        }
    }
    (keys, sections)
}

fn type_name(v: &toml::Value) -> &'static str {
    match v {
        toml::Value::String(_) => "a string",
        toml::Value::Integer(_) => "an integer",
        toml::Value::Float(_) => "a float",
        toml::Value::Boolean(_) => "a boolean",
        toml::Value::Datetime(_) => "a datetime",
        toml::Value::Array(_) => "an array",
        toml::Value::Table(_) => "a table",
    }
}

fn display_key(sec: &str, key: &str) -> String {
    if sec.is_empty() {
        key.to_string()
    } else {
        match sec.split_once('#') {
            Some((name, k)) => format!("{name}[{k}].{key}"),
            None => format!("{sec}.{key}"),
        }
    }
}

impl<'a> Reader<'a> {
    fn new(root: &'a toml::Table, src: &str, base: &Path) -> Self {
        let (keys, sections) = scan_lines(src);
        Reader {
            root,
            base: base.to_path_buf(),
            keys,
            sections,
            used: BTreeSet::new(),
            errors: Vec::new(),
        }
    }

    fn at(&self, sec: &str, key: &str) -> String {
        match self.keys.get(&(sec.to_string(), key.to_string())) {
            Some(l) => format!(" (line {l})"),
            None => match self.sections.get(sec) {
                Some(l) => format!(" (section at line {l})"),
                None => String::new(),
            },
        }
    }

    fn error(&mut self, sec: &str, key: &str, msg: impl std::fmt::Display) {
        let e = format!("`{}`: {msg}{}", display_key(sec, key), self.at(sec, key));
        self.errors.push(e);
    }

    fn plain_error(&mut self, msg: impl Into<String>) {
        self.errors.push(msg.into());
    }

    fn table(&self, sec: &str) -> Option<&'a toml::Table> {
        if sec.is_empty() {
            return Some(self.root);
        }
        match sec.split_once('#') {
            Some((name, k)) => {
                let k: usize = k.parse().ok()?;
                self.root.get(name)?.as_array()?.get(k)?.as_table()
            }
            None => self.root.get(sec)?.as_table(),
        }
    }

    fn has(&self, sec: &str, key: &str) -> bool {
        self.table(sec).is_some_and(|t| t.contains_key(key))
    }

    fn raw(&mut self, sec: &str, key: &str) -> Option<&'a toml::Value> {
        let v = self.table(sec)?.get(key)?;
        self.used.insert((sec.to_string(), key.to_string()));
        Some(v)
    }

    fn num(&mut self, sec: &str, key: &str) -> Option<f64> {
        let v = self.raw(sec, key)?;
        match v {
            toml::Value::Float(x) => Some(*x),
            toml::Value::Integer(i) => Some(*i as f64),
            other => {
                let t = type_name(other);
                self.error(sec, key, format!("expected a number, found {t}"));
                None
            }
        }
    }

    fn num_or(&mut self, sec: &str, key: &str, default: f64) -> f64 {
        self.num(sec, key).unwrap_or(default)
    }

    fn positive_or(&mut self, sec: &str, key: &str, default: f64) -> f64 {
        match self.num(sec, key) {
            Some(x) if x > 0.0 && x.is_finite() => x,
            Some(x) => {
                self.error(sec, key, format!("must be positive, got {x}"));
                default
            }
            None => default,
        }
    }

    fn count(&mut self, sec: &str, key: &str) -> Option<usize> {
        let v = self.raw(sec, key)?;
        match v {
            toml::Value::Integer(i) if *i >= 0 => Some(*i as usize),
            toml::Value::Integer(i) => {
                let i = *i;
                self.error(sec, key, format!("must be non-negative, got {i}"));
                None
            }
            other => {
                let t = type_name(other);
                self.error(sec, key, format!("expected an integer, found {t}"));
                None
            }
        }
    }

    fn boolean(&mut self, sec: &str, key: &str) -> Option<bool> {
        let v = self.raw(sec, key)?;
        match v {
            toml::Value::Boolean(b) => Some(*b),
            other => {
                let t = type_name(other);
                self.error(sec, key, format!("expected a boolean, found {t}"));
                None
            }
        }
    }

    fn string(&mut self, sec: &str, key: &str) -> Option<String> {
        let v = self.raw(sec, key)?;
        match v {
            toml::Value::String(s) => Some(s.clone()),
            other => {
                let t = type_name(other);
                self.error(sec, key, format!("expected a string, found {t}"));
                None
            }
        }
    }

    fn numbers(&mut self, sec: &str, key: &str) -> Option<Vec<f64>> {
        let v = self.raw(sec, key)?;
        let Some(arr) = v.as_array() else {
            let t = type_name(v);
            self.error(sec, key, format!("expected an array of numbers, found {t}"));
            return None;
        };
        let mut out = Vec::with_capacity(arr.len());
        for (i, x) in arr.iter().enumerate() {
            match x {
                toml::Value::Float(f) => out.push(*f),
                toml::Value::Integer(n) => out.push(*n as f64),
                other => {
                    let t = type_name(other);
                    self.error(sec, key, format!("element {i} is {t}, expected a number"));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn strings(&mut self, sec: &str, key: &str) -> Option<Vec<String>> {
        let v = self.raw(sec, key)?;
        let Some(arr) = v.as_array() else {
            let t = type_name(v);
            self.error(sec, key, format!("expected an array of strings, found {t}"));
            return None;
        };
        let mut out = Vec::with_capacity(arr.len());
        for (i, x) in arr.iter().enumerate() {
            match x.as_str() {
                Some(s) => out.push(s.to_string()),
                None => {
                    let t = type_name(x);
                    self.error(sec, key, format!("element {i} is {t}, expected a string"));
                    return None;
                }
            }
        }
        Some(out)
    }

    /// A list of positive reals; an empty list is an error.
    fn positive_list(&mut self, sec: &str, key: &str, default: &[f64]) -> Vec<f64> {
        match self.numbers(sec, key) {
            None => default.to_vec(),
            Some(xs) if xs.is_empty() => {
                self.error(sec, key, format!("{key} must be non-empty"));
                default.to_vec()
            }
            Some(xs) => {
                if let Some(x) = xs.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
                    self.error(sec, key, format!("entries must be positive, got {x}"));
                }
                xs
            }
        }
    }

    fn path(&mut self, sec: &str, key: &str) -> Option<PathBuf> {
        let s = self.string(sec, key)?;
        let p = PathBuf::from(&s);
        Some(if p.is_absolute() { p } else { self.base.join(p) })
    }

    fn window(&mut self, default: (f64, f64)) -> (f64, f64) {
        match self.numbers("study", "window") {
            None => default,
            Some(w) if w.len() == 2 && w[0] < w[1] => (w[0], w[1]),
            Some(_) => {
                self.error("study", "window", "expected [a, b] with a < b");
                default
            }
        }
    }

    fn check_unknown(&mut self) {
        let mut found = Vec::new();
        for (k, v) in self.root {
            if SECTIONS.contains(&k.as_str()) {
                match v {
                    toml::Value::Table(t) => {
                        for key in t.keys() {
                            found.push((k.clone(), key.clone()));
                        }
                    }
                    toml::Value::Array(a) if k == "datum" => {
                        for (i, item) in a.iter().enumerate() {
                            if let Some(t) = item.as_table() {
                                for key in t.keys() {
                                    found.push((format!("{k}#{i}"), key.clone()));
                                }
                            }
                        }
                    }
                    _ => {}
                }
            } else {
                found.push((String::new(), k.clone()));
            }
        }
        found.sort();
        for (sec, key) in found {
            if !self.used.contains(&(sec.clone(), key.clone())) {
                let where_ = if sec.is_empty() {
                    "at top level".to_string()
                } else {
                    format!("in [{}]", sec.split('#').next().unwrap_or(&sec))
                };
                let at = self.at(&sec, &key);
                let hint = if self.root.get(&key).is_some_and(|v| v.is_table()) {
                    format!("unknown section [{key}]{at}")
                } else {
                    format!("unknown key `{key}` {where_}{at}")
                };
                self.errors.push(hint);
            }
        }
    }

    // -----------------------------------------------------------------
    // catalogue readers

    fn kernel_by_id(&mut self, id: &str, sec: &str, key: &str) -> Option<KernelSpec> {
        match id {
            "exponential" => Some(KernelSpec::exponential()),
            "truncated_linear" => Some(KernelSpec::truncated_linear()),
            "indicator" => Some(KernelSpec::indicator()),
            "gaussian_even" => Some(KernelSpec::gaussian_even()),
            "table" => {
                let convex = self.boolean("kernel", "convex").unwrap_or(false);
                let monotone = self.boolean("kernel", "monotone").unwrap_or(true);
                let Some(path) = self.path("kernel", "file") else {
                    self.error(sec, key, "kernel `table` needs `kernel.file` (CSV with columns x,eta)");
                    return None;
                };
                let loaded = File::open(&path)
                    .map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))
                    .and_then(|f| KernelSpec::table_from_csv(f, convex, monotone));
                match loaded {
                    Ok(k) => Some(k),
                    Err(e) => {
                        self.error("kernel", "file", e);
                        None
                    }
                }
            }
            other => {
                self.error(
                    sec,
                    key,
                    format!(
                        "unknown kernel `{other}` (known: exponential, truncated_linear, indicator, gaussian_even, table)"
                    ),
                );
                None
            }
        }
    }

    fn kernel_one(&mut self, default: KernelSpec) -> KernelSpec {
        match self.string("kernel", "id") {
            Some(id) => self.kernel_by_id(&id, "kernel", "id").unwrap_or(default),
            None => default,
        }
    }

    fn kernel_list(&mut self, default: Vec<KernelSpec>) -> Vec<KernelSpec> {
        if self.has("kernel", "ids") {
            let ids = self.strings("kernel", "ids").unwrap_or_default();
            if ids.is_empty() {
                self.error("kernel", "ids", "ids must be non-empty");
                return default;
            }
            return ids
                .iter()
                .filter_map(|id| self.kernel_by_id(id, "kernel", "ids"))
                .collect();
        }
        match self.string("kernel", "id") {
            Some(id) => self.kernel_by_id(&id, "kernel", "id").into_iter().collect(),
            None => default,
        }
    }

    fn velocity_by_id(&mut self, id: &str, key: &str) -> Option<VelocityModel> {
        let v = match id {
            "linear" => VelocityModel::linear(),
            "quadratic" => VelocityModel::quadratic_table(),
            "table" => {
                let Some(path) = self.path("velocity", "file") else {
                    self.error("velocity", key, "velocity `table` needs `velocity.file` (CSV with columns u,v)");
                    return None;
                };
                let loaded = File::open(&path)
                    .map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))
                    .and_then(VelocityModel::table_from_csv);
                match loaded {
                    Ok(v) => v,
                    Err(e) => {
                        self.error("velocity", "file", e);
                        return None;
                    }
                }
            }
            other => {
                self.error(
                    "velocity",
                    key,
                    format!("unknown velocity `{other}` (known: linear, quadratic, table)"),
                );
                return None;
            }
        };
        let rep = v.validate();
        if !rep.is_clean() {
            self.error("velocity", key, format!("velocity law rejected: {}", rep.violations.join("; ")));
            return None;
        }
        Some(v)
    }

    fn velocity_one(&mut self) -> VelocityModel {
        match self.string("velocity", "id") {
            Some(id) => self.velocity_by_id(&id, "id").unwrap_or_else(VelocityModel::linear),
            None => VelocityModel::linear(),
        }
    }

    fn velocity_list(&mut self, default: Vec<VelocityModel>) -> Vec<VelocityModel> {
        if self.has("velocity", "ids") {
            let ids = self.strings("velocity", "ids").unwrap_or_default();
            if ids.is_empty() {
                self.error("velocity", "ids", "ids must be non-empty");
                return default;
            }
            return ids.iter().filter_map(|id| self.velocity_by_id(id, "ids")).collect();
        }
        match self.string("velocity", "id") {
            Some(id) => self.velocity_by_id(&id, "id").into_iter().collect(),
            None => default,
        }
    }

    /// One datum from section `sec` (`datum` or `datum#k`).
    fn datum_in(&mut self, sec: &str, default: &InitialDatum) -> Option<InitialDatum> {
        let id = match self.string(sec, "id") {
            Some(id) => id,
            None => {
                if self.table(sec).is_some_and(|t| !t.is_empty()) {
                    self.error(sec, "id", "datum section needs an `id`");
                }
                return Some(default.clone());
            }
        };
        if id == "table" {
            let Some(path) = self.path(sec, "file") else {
                self.error(sec, "id", "datum `table` needs `file` (CSV with columns x,u)");
                return None;
            };
            let loaded = File::open(&path)
                .map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))
                .and_then(InitialDatum::table_from_csv);
            return match loaded {
                Ok(d) => Some(d),
                Err(e) => {
                    self.error(sec, "file", e);
                    None
                }
            };
        }
        let base = match InitialDatum::catalogue(&id) {
            Ok(d) => d,
            Err(e) => {
                self.error(sec, "id", e);
                return None;
            }
        };
        let d = match base {
            InitialDatum::Riemann { u_l, u_r, x0 } => InitialDatum::Riemann {
                u_l: self.num_or(sec, "u_l", u_l),
                u_r: self.num_or(sec, "u_r", u_r),
                x0: self.num_or(sec, "x0", x0),
            },
            InitialDatum::StepTrain { levels, breakpoints } => InitialDatum::StepTrain {
                levels: self.numbers(sec, "levels").unwrap_or(levels),
                breakpoints: self.numbers(sec, "breakpoints").unwrap_or(breakpoints),
            },
            InitialDatum::BlowupOscillation {
                n_blocks,
                block_width,
                gap_width,
                high_level,
                start,
            } => InitialDatum::BlowupOscillation {
                n_blocks: self.count(sec, "n_blocks").unwrap_or(n_blocks),
                block_width: self.num_or(sec, "block_width", block_width),
                gap_width: self.num_or(sec, "gap_width", gap_width),
                high_level: self.num_or(sec, "high_level", high_level),
                start: self.num_or(sec, "start", start),
            },
            InitialDatum::MonotoneProfile {
                u_left,
                u_right,
                x_start,
                x_end,
            } => InitialDatum::MonotoneProfile {
                u_left: self.num_or(sec, "u_left", u_left),
                u_right: self.num_or(sec, "u_right", u_right),
                x_start: self.num_or(sec, "x_start", x_start),
                x_end: self.num_or(sec, "x_end", x_end),
            },
            InitialDatum::SmoothBump {
                base,
                amplitude,
                center,
                radius,
            } => InitialDatum::SmoothBump {
                base: self.num_or(sec, "base", base),
                amplitude: self.num_or(sec, "amplitude", amplitude),
                center: self.num_or(sec, "center", center),
                radius: self.num_or(sec, "radius", radius),
            },
            t @ InitialDatum::Table { .. } => t,
        };
        match d.check() {
            Ok(()) => Some(d),
            Err(e) => {
                self.error(sec, "id", e);
                None
            }
        }
    }

    fn datum_one(&mut self, default: InitialDatum) -> InitialDatum {
        if self.root.get("datum").is_some_and(|v| v.is_array()) {
            self.plain_error("this experiment takes a single [datum] section, not [[datum]]");
            return default;
        }
        self.datum_in("datum", &default).unwrap_or(default)
    }

    fn datum_list(&mut self, default: Vec<InitialDatum>) -> Vec<InitialDatum> {
        match self.root.get("datum") {
            None => default,
            Some(toml::Value::Array(a)) => {
                if a.is_empty() {
                    self.plain_error("[[datum]] list must be non-empty");
                    return default;
                }
                let n = a.len();
                (0..n)
                    .filter_map(|k| self.datum_in(&format!("datum#{k}"), &default[0]))
                    .collect()
            }
            Some(_) => self.datum_in("datum", &default[0]).into_iter().collect(),
        }
    }

    fn engine(&mut self) -> Engine {
        match self.string("scheme", "engine") {
            None => Engine::Auto,
            Some(s) => match Engine::parse(&s) {
                Ok(e) => e,
                Err(_) => {
                    self.error(
                        "scheme",
                        "engine",
                        format!("unknown engine `{s}` (known: auto, direct, fft, exponential_recursion)"),
                    );
                    Engine::Auto
                }
            },
        }
    }

    fn cfl(&mut self) -> f64 {
        match self.num("scheme", "cfl") {
            None => DEFAULT_CFL,
            Some(c) if c > 0.0 && c <= 1.0 => c,
            Some(c) => {
                self.error("scheme", "cfl", format!("must lie in (0, 1], got {c}"));
                DEFAULT_CFL
            }
        }
    }

    fn t_final(&mut self, default: f64) -> f64 {
        match self.num("", "t_final") {
            None => default,
            Some(t) if t >= 0.0 && t.is_finite() => t,
            Some(t) => {
                self.error("", "t_final", format!("must be non-negative, got {t}"));
                default
            }
        }
    }
}

fn require_derivative(r: &mut Reader, kernels: &[KernelSpec]) {
    for k in kernels {
        if !k.has_derivative() {
            let key = if r.has("kernel", "ids") { "ids" } else { "id" };
            r.error(
                "kernel",
                key,
                format!("kernel lacks a.e. derivative support ({})", k.name()),
            );
        }
    }
}

type Built = (Experiment, u64, Option<PathBuf>, Option<usize>, Plan);

fn build(r: &mut Reader) -> Option<Built> {
    let Some(exp_id) = r.string("", "experiment") else {
        if !r.has("", "experiment") {
            r.plain_error("missing required key `experiment`");
        }
        return None;
    };
    let Some(exp) = Experiment::parse(&exp_id) else {
        let known: Vec<&str> = Experiment::ALL.iter().map(|e| e.id()).collect();
        r.error("", "experiment", format!("unknown experiment `{exp_id}` (known: {})", known.join(", ")));
        return None;
    };
    let seed = match r.raw("", "seed") {
        None => DEFAULT_SEED,
        Some(toml::Value::Integer(i)) if *i >= 0 => *i as u64,
        Some(_) => {
            r.error("", "seed", "expected a non-negative integer");
            DEFAULT_SEED
        }
    };
    let output_dir = r.path("", "output_dir");
    let workers = match r.count("", "workers") {
        Some(0) => {
            r.error("", "workers", "must be at least 1");
            None
        }
        w => w,
    };

    let plan = match exp {
        Experiment::MaxPrinciple => {
            let d = MaxPrincipleParams::default();
            Plan::MaxPrinciple(MaxPrincipleParams {
                kernels: r.kernel_list(d.kernels),
                velocities: r.velocity_list(d.velocities),
                data: r.datum_list(d.data),
                eps_list: r.positive_list("", "eps_list", &d.eps_list),
                cells_per_eps: r.positive_or("grid", "cells_per_eps", d.cells_per_eps),
                t_final: r.t_final(d.t_final),
                cfl: r.cfl(),
                engine: r.engine(),
                tolerance: r.positive_or("study", "tolerance", d.tolerance),
            })
        }
        Experiment::TvWMonotone => {
            let d = TvContractionParams::default();
            Plan::TvWMonotone(TvContractionParams {
                kernels: r.kernel_list(d.kernels),
                velocity: r.velocity_one(),
                data: r.datum_list(d.data),
                eps_list: r.positive_list("", "eps_list", &d.eps_list),
                cells_per_eps: r.positive_or("grid", "cells_per_eps", d.cells_per_eps),
                t_final: r.t_final(d.t_final),
                cfl: r.cfl(),
                engine: r.engine(),
                refine: r.boolean("study", "refine").unwrap_or(d.refine),
                shrink_factor: r.positive_or("study", "shrink_factor", d.shrink_factor),
            })
        }
        Experiment::TvWCounterexample => {
            let d = CounterexampleParams::default();
            let confirm = match r.numbers("grid", "confirm_cells_per_eps") {
                None => d.confirm_cells_per_eps,
                Some(v) if v.len() == 2 && v[0] > 0.0 && v[1] > v[0] => (v[0], v[1]),
                Some(_) => {
                    r.error("grid", "confirm_cells_per_eps", "expected [coarse, fine] with 0 < coarse < fine");
                    d.confirm_cells_per_eps
                }
            };
            Plan::Counterexample(CounterexampleParams {
                kernel: r.kernel_one(d.kernel),
                velocity: r.velocity_one(),
                epsilon: r.positive_or("scheme", "epsilon", d.epsilon),
                t_final: r.t_final(d.t_final),
                heights: r.positive_list("study", "heights", &d.heights),
                lengths: r.positive_list("study", "lengths", &d.lengths),
                search_cells_per_eps: r.positive_or("grid", "search_cells_per_eps", d.search_cells_per_eps),
                confirm_cells_per_eps: confirm,
                threshold: r.positive_or("study", "threshold", d.threshold),
                gate: r.positive_or("study", "gate", d.gate),
                max_confirmations: r.count("study", "max_confirmations").unwrap_or(d.max_confirmations),
                cfl: r.cfl(),
                engine: r.engine(),
            })
        }
        Experiment::TvBlowup => {
            let d = BlowupParams::default();
            let velocity = r.velocity_one();
            if !matches!(velocity.kind, VelocityKind::Linear) {
                r.error("velocity", "id", "tv_blowup needs velocity `linear`");
            }
            let datum = r.datum_one(d.datum.clone());
            let contrast = r.boolean("study", "contrast").unwrap_or(true);
            let floor = r.num_or("study", "contrast_floor", 0.4);
            if contrast && datum.blowup_contrast(floor).is_err() {
                r.error("study", "contrast_floor", "contrast run needs a blowup datum and a floor in [0, 1]");
            }
            Plan::Blowup(BlowupParams {
                kernel: r.kernel_one(d.kernel),
                velocity,
                datum,
                eps_list: r.positive_list("", "eps_list", &d.eps_list),
                cells_per_eps: r.positive_or("grid", "cells_per_eps", d.cells_per_eps),
                t_eval: r.t_final(d.t_eval),
                gate: r.positive_or("study", "gate", d.gate),
                contrast_floor: contrast.then_some(floor),
                contrast_tol: r.positive_or("study", "contrast_tol", d.contrast_tol),
                cfl: r.cfl(),
                engine: r.engine(),
            })
        }
        Experiment::EpsConvergence | Experiment::EvenKernelNonconvergence => {
            let even = exp == Experiment::EvenKernelNonconvergence;
            let d = ConvergenceParams::default();
            let (kernel_default, data_default) = if even {
                (
                    KernelSpec::gaussian_even(),
                    vec![InitialDatum::Riemann { u_l: 0.2, u_r: 0.8, x0: 0.0 }],
                )
            } else {
                (d.kernel.clone(), d.data.clone())
            };
            let p = ConvergenceParams {
                kernel: r.kernel_one(kernel_default),
                velocity: r.velocity_one(),
                data: r.datum_list(data_default),
                eps_list: r.positive_list("", "eps_list", &d.eps_list),
                x_left: r.num_or("grid", "x_left", d.x_left),
                x_right: r.num_or("grid", "x_right", d.x_right),
                dx: r.positive_or("grid", "dx", d.dx),
                window: r.window(d.window),
                t_eval: r.t_final(d.t_eval),
                reference_factor: r.count("study", "reference_factor").unwrap_or(d.reference_factor).max(1),
                cfl: r.cfl(),
                engine: r.engine(),
            };
            if !p.eps_list.windows(2).all(|w| w[1] < w[0]) {
                r.error("", "eps_list", "eps_list must be strictly decreasing");
            }
            if let Some(&m) = p.eps_list.last() {
                if p.dx > m / 20.0 * (1.0 + 1e-9) {
                    r.error("grid", "dx", format!("dx = {} is too coarse for eps = {m} (need dx <= eps/20)", p.dx));
                }
            }
            if even {
                Plan::EvenKernel(p)
            } else {
                Plan::Convergence(p)
            }
        }
        Experiment::ViscousDiagram => {
            let d = ViscousParams::default();
            Plan::Viscous(ViscousParams {
                kernel: r.kernel_one(d.kernel),
                velocity: r.velocity_one(),
                datum: r.datum_one(d.datum),
                x_left: r.num_or("grid", "x_left", d.x_left),
                x_right: r.num_or("grid", "x_right", d.x_right),
                dx: r.positive_or("grid", "dx", d.dx),
                window: r.window(d.window),
                t_eval: r.t_final(d.t_eval),
                nu_fixed: r.positive_or("study", "nu_fixed", d.nu_fixed),
                eps_list: r.positive_list("", "eps_list", &d.eps_list),
                eps_fixed: r.positive_or("study", "eps_fixed", d.eps_fixed),
                nu_list: r.positive_list("", "nu_list", &d.nu_list),
                reference_factor: r.count("study", "reference_factor").unwrap_or(d.reference_factor).max(1),
                cfl: r.cfl(),
                engine: r.engine(),
            })
        }
        Experiment::SigmaCertify => {
            let d = SigmaCertifyParams::default();
            let kernels = r.kernel_list(d.kernels);
            require_derivative(r, &kernels);
            Plan::Sigma(SigmaCertifyParams {
                kernels,
                include_concave: r.boolean("study", "include_concave").unwrap_or(d.include_concave),
                velocity: r.velocity_one(),
                n_profiles: r.count("study", "n_profiles").unwrap_or(d.n_profiles),
                max_extrema: r.count("study", "max_extrema").unwrap_or(d.max_extrema),
                epsilon: r.positive_or("scheme", "epsilon", d.epsilon),
                x_left: r.num_or("grid", "x_left", d.x_left),
                x_right: r.num_or("grid", "x_right", d.x_right),
                n_cells: r.count("grid", "n_cells").unwrap_or(d.n_cells),
                seed,
            })
        }
        Experiment::SingleRun => {
            let kernel = r.kernel_one(KernelSpec::exponential());
            let velocity = r.velocity_one();
            let datum = r.datum_one(InitialDatum::catalogue("riemann").expect("catalogue"));
            let flux_form = match r.string("scheme", "flux_form").as_deref() {
                None | Some("nonlocal_density") => FluxForm::NonlocalDensity,
                Some("nonlocal_velocity") => FluxForm::NonlocalVelocity,
                Some("local_godunov") => FluxForm::LocalGodunov,
                Some(other) => {
                    r.error(
                        "scheme",
                        "flux_form",
                        format!("unknown flux form `{other}` (known: nonlocal_density, nonlocal_velocity, local_godunov)"),
                    );
                    FluxForm::NonlocalDensity
                }
            };
            let epsilon = r.positive_or("scheme", "epsilon", 0.1);
            let nu = r.num_or("scheme", "nu", 0.0);
            if nu < 0.0 {
                r.error("scheme", "nu", format!("must be non-negative, got {nu}"));
            }
            let t_final = r.t_final(1.0);
            let snapshot_times = r.numbers("", "snapshot_times").unwrap_or_default();
            let periodic = match r.string("grid", "boundary").as_deref() {
                None | Some("far_field") => false,
                Some("periodic") => true,
                Some(other) => {
                    r.error("grid", "boundary", format!("unknown boundary `{other}` (known: far_field, periodic)"));
                    false
                }
            };
            let x_left = r.num_or("grid", "x_left", -2.0);
            let x_right = r.num_or("grid", "x_right", 2.0);
            let grid = match (r.count("grid", "n_cells"), r.num("grid", "dx")) {
                (Some(_), Some(_)) => {
                    r.error("grid", "dx", "give either n_cells or dx, not both");
                    None
                }
                (Some(n), None) => Grid::new(x_left, x_right, n).map_err(|e| r.error("grid", "n_cells", e)).ok(),
                (None, Some(dx)) => Grid::with_spacing(x_left, x_right, dx).map_err(|e| r.error("grid", "dx", e)).ok(),
                (None, None) => Grid::new(x_left, x_right, 400).map_err(|e| r.error("grid", "x_left", e)).ok(),
            };
            let mut scheme = SchemeConfig::nonlocal(kernel, epsilon, t_final)
                .with_form(flux_form)
                .with_nu(nu.max(0.0))
                .with_engine(r.engine());
            scheme.cfl = r.cfl();
            let mut model = ModelSpec::new(velocity, datum);
            model.periodic = periodic;
            match grid {
                Some(grid) => {
                    let (a, z) = model.datum.support_window();
                    if !periodic && (a < grid.x_left() || z > grid.x_right()) {
                        r.error("grid", "x_left", format!("grid [{}, {}] does not contain the datum support [{a}, {z}]", grid.x_left(), grid.x_right()));
                    }
                    Plan::Single(SingleRunPlan {
                        model,
                        scheme,
                        grid,
                        snapshot_times,
                    })
                }
                None => return None,
            }
        }
    };
    Some((exp, seed, output_dir, workers, plan))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<ExperimentConfig> {
        parse_config_str(s, Path::new("."))
    }

    fn errors(s: &str) -> String {
        match parse(s) {
            Err(Error::Config(m)) => m,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_single_run_uses_defaults() {
        let c = parse("experiment = \"single_run\"\n").unwrap();
        let Plan::Single(p) = c.plan else { panic!() };
        assert_eq!(p.scheme.cfl, 0.45);
        assert_eq!(p.scheme.engine, Engine::Auto);
        assert_eq!(c.seed, DEFAULT_SEED);
    }

    #[test]
    fn empty_eps_list_is_rejected() {
        let m = errors("experiment = \"tv_w_monotone\"\neps_list = []\n");
        assert!(m.contains("eps_list must be non-empty"), "{m}");
        assert!(m.contains("line 2"), "{m}");
    }

    #[test]
    fn indicator_sigma_is_rejected() {
        let m = errors("experiment = \"sigma_certify\"\n[kernel]\nid = \"indicator\"\n");
        assert!(m.contains("kernel lacks a.e. derivative support (indicator)"), "{m}");
    }

    #[test]
    fn all_errors_are_collected() {
        let m = errors(
            "experiment = \"single_run\"\nbogus = 1\n[scheme]\ncfl = \"high\"\nepsilon = -1\n[grid]\nn_cells = 2.5\n[extra]\na = 1\n",
        );
        let lines: Vec<&str> = m.lines().collect();
        assert!(lines.len() >= 5, "{m}");
        assert!(m.contains("unknown key `bogus` at top level (line 2)"), "{m}");
        assert!(m.contains("`scheme.cfl`: expected a number, found a string (line 4)"), "{m}");
        assert!(m.contains("`scheme.epsilon`: must be positive"), "{m}");
        assert!(m.contains("`grid.n_cells`: expected an integer, found a float (line 7)"), "{m}");
        assert!(m.contains("unknown section [extra]"), "{m}");
    }

    #[test]
    fn keys_of_other_experiments_are_unknown() {
        let m = errors("experiment = \"max_principle\"\nnu_list = [0.1]\n");
        assert!(m.contains("unknown key `nu_list`"), "{m}");
    }

    #[test]
    fn datum_arrays_parse() {
        let c = parse(
            "experiment = \"eps_convergence\"\n[[datum]]\nid = \"riemann\"\nu_l = 0.1\nu_r = 0.9\n[[datum]]\nid = \"riemann\"\nu_l = 0.9\nu_r = 0.1\nbad = 3\n",
        );
        let m = match c {
            Err(Error::Config(m)) => m,
            other => panic!("{other:?}"),
        };
        assert!(m.contains("unknown key `bad` in [datum] (line 10)"), "{m}");
        let c = parse(
            "experiment = \"eps_convergence\"\n[[datum]]\nid = \"riemann\"\nu_l = 0.1\nu_r = 0.9\n",
        )
        .unwrap();
        let Plan::Convergence(p) = c.plan else { panic!() };
        assert_eq!(p.data, vec![InitialDatum::Riemann { u_l: 0.1, u_r: 0.9, x0: 0.0 }]);
    }

    #[test]
    fn syntax_error_reports_position() {
        let m = errors("experiment = \n");
        assert!(m.contains("line 1"), "{m}");
    }

    #[test]
    fn unknown_experiment_and_missing_key() {
        assert!(errors("experiment = \"nope\"\n").contains("unknown experiment `nope`"));
        assert!(errors("seed = 3\n").contains("missing required key `experiment`"));
    }

    #[test]
    fn seed_override_reaches_sigma_plan() {
        let mut c = parse("experiment = \"sigma_certify\"\nseed = 5\n").unwrap();
        c.set_seed(9);
        let Plan::Sigma(p) = &c.plan else { panic!() };
        assert_eq!(p.seed, 9);
    }
}
