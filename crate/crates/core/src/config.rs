//! Strict TOML run configuration.
//!
//! Every problem found is reported with its key path; parsing never stops at
//! the first error. Complex numbers are written either as a plain number or
//! as a `[re, im]` pair.

use std::path::PathBuf;

use serde::Serialize;
use toml::{Table, Value};

use crate::error::ConfigIssue;
use crate::grid::{Grid1D, PulseSpec};
use crate::linalg::C64;
use crate::model::ModelParams;
use crate::ms::CouplingMatrix;
use crate::protocols::{ControlSchedule, Controls, Segment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Transform,
    Dispersion,
    Propagate,
    Scenario,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Transform => "transform",
            Mode::Dispersion => "dispersion",
            Mode::Propagate => "propagate",
            Mode::Scenario => "scenario",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "transform" => Some(Mode::Transform),
            "dispersion" => Some(Mode::Dispersion),
            "propagate" => Some(Mode::Propagate),
            "scenario" => Some(Mode::Scenario),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformConfig {
    /// Rows of the A→B coupling block.
    pub coupling: Vec<Vec<C64>>,
    /// Extra randomized decompositions to self-check (seeded).
    pub random_checks: usize,
}

impl TransformConfig {
    pub fn coupling_matrix(&self) -> crate::Result<CouplingMatrix> {
        let n_a = self.coupling.len();
        let n_b = self.coupling[0].len();
        CouplingMatrix::new(nalgebra::DMatrix::from_fn(n_a, n_b, |i, j| self.coupling[i][j]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DispersionConfig {
    pub k_min: f64,
    pub k_max: f64,
    pub n_k: usize,
    pub fd_step: f64,
}

impl DispersionConfig {
    pub fn k_grid(&self) -> Vec<f64> {
        let h = (self.k_max - self.k_min) / (self.n_k - 1) as f64;
        (0..self.n_k).map(|i| self.k_min + i as f64 * h).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PropagateConfig {
    pub t_final: f64,
    pub dt: Option<f64>,
    pub snapshot_interval: Option<f64>,
    pub compare_effective: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Storage,
    StorageRetrieval,
    Custom,
}

impl ScenarioKind {
    fn name(self) -> &'static str {
        match self {
            ScenarioKind::Storage => "storage",
            ScenarioKind::StorageRetrieval => "storage_retrieval",
            ScenarioKind::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub snapshot_interval: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub model: Option<ModelParams>,
    pub transform: Option<TransformConfig>,
    pub dispersion: Option<DispersionConfig>,
    pub grid: Option<Grid1D>,
    pub pulse: Option<PulseSpec>,
    pub propagate: Option<PropagateConfig>,
    pub scenario: Option<ScenarioConfig>,
    pub schedule: Option<ControlSchedule>,
    pub retrieval: Option<ControlSchedule>,
}

struct Issues(Vec<ConfigIssue>);

impl Issues {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(ConfigIssue {
            path: path.into(),
            message: message.into(),
        });
    }
}

#[derive(Clone, Copy)]
enum Range {
    Any,
    NonNegative,
    Positive,
}

impl Range {
    fn admits(self, x: f64) -> bool {
        x.is_finite()
            && match self {
                Range::Any => true,
                Range::NonNegative => x >= 0.0,
                Range::Positive => x > 0.0,
            }
    }

    fn describe(self) -> &'static str {
        match self {
            Range::Any => "a finite number",
            Range::NonNegative => "a finite number >= 0",
            Range::Positive => "a finite number > 0",
        }
    }
}

/// Typed view of one TOML table that records problems as it goes.
struct Section<'a> {
    path: String,
    table: &'a Table,
}

impl<'a> Section<'a> {
    fn new(path: impl Into<String>, table: &'a Table) -> Self {
        Self {
            path: path.into(),
            table,
        }
    }

    fn key(&self, k: &str) -> String {
        if self.path.is_empty() {
            k.to_string()
        } else {
            format!("{}.{k}", self.path)
        }
    }

    fn reject_unknown(&self, allowed: &[&str], issues: &mut Issues) {
        for k in self.table.keys() {
            if !allowed.contains(&k.as_str()) {
                issues.push(
                    self.key(k),
                    format!("unknown key (expected one of: {})", allowed.join(", ")),
                );
            }
        }
    }

    fn number(&self, k: &str, range: Range, default: Option<f64>, issues: &mut Issues) -> Option<f64> {
        let Some(v) = self.table.get(k) else {
            if default.is_none() {
                issues.push(self.key(k), format!("missing required key ({})", range.describe()));
            }
            return default;
        };
        let x = match v {
            Value::Float(x) => *x,
            Value::Integer(i) => *i as f64,
            _ => {
                issues.push(self.key(k), format!("expected {}", range.describe()));
                return None;
            }
        };
        if !range.admits(x) {
            issues.push(self.key(k), format!("value {x} out of range: expected {}", range.describe()));
            return None;
        }
        Some(x)
    }

    fn integer(&self, k: &str, min: i64, default: Option<i64>, issues: &mut Issues) -> Option<i64> {
        let Some(v) = self.table.get(k) else {
            if default.is_none() {
                issues.push(self.key(k), format!("missing required key (an integer >= {min})"));
            }
            return default;
        };
        match v {
            Value::Integer(i) if *i >= min => Some(*i),
            Value::Integer(i) => {
                issues.push(self.key(k), format!("value {i} out of range: expected an integer >= {min}"));
                None
            }
            _ => {
                issues.push(self.key(k), format!("expected an integer >= {min}"));
                None
            }
        }
    }

    fn boolean(&self, k: &str, default: bool, issues: &mut Issues) -> bool {
        match self.table.get(k) {
            None => default,
            Some(Value::Boolean(b)) => *b,
            Some(_) => {
                issues.push(self.key(k), "expected true or false");
                default
            }
        }
    }

    fn string(&self, k: &str, issues: &mut Issues) -> Option<&'a str> {
        match self.table.get(k) {
            None => None,
            Some(Value::String(s)) => Some(s.as_str()),
            Some(_) => {
                issues.push(self.key(k), "expected a string");
                None
            }
        }
    }

    fn complex(&self, k: &str, default: Option<C64>, issues: &mut Issues) -> Option<C64> {
        match self.table.get(k) {
            None => {
                if default.is_none() {
                    issues.push(self.key(k), "missing required key (a number or [re, im])");
                }
                default
            }
            Some(v) => complex_value(v, &self.key(k), issues),
        }
    }

    fn subtable(&self, k: &str, issues: &mut Issues) -> Option<Section<'a>> {
        match self.table.get(k) {
            None => None,
            Some(Value::Table(t)) => Some(Section::new(self.key(k), t)),
            Some(_) => {
                issues.push(self.key(k), "expected a table");
                None
            }
        }
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(x) if x.is_finite() => Some(*x),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn complex_value(v: &Value, path: &str, issues: &mut Issues) -> Option<C64> {
    if let Some(x) = as_f64(v) {
        return Some(C64::new(x, 0.0));
    }
    if let Value::Array(a) = v {
        if let [re, im] = a.as_slice() {
            if let (Some(re), Some(im)) = (as_f64(re), as_f64(im)) {
                return Some(C64::new(re, im));
            }
        }
    }
    issues.push(path, "expected a finite number or a [re, im] pair");
    None
}

fn parse_model(s: &Section, needs_controls: bool, issues: &mut Issues) -> Option<ModelParams> {
    s.reject_unknown(
        &[
            "g_sqrt_n",
            "omega_plus",
            "omega_minus",
            "delta_plus",
            "delta_minus",
            "gamma_plus",
            "gamma_minus",
            "c",
        ],
        issues,
    );
    let g = s.number("g_sqrt_n", Range::NonNegative, None, issues);
    let op = s.complex("omega_plus", None, issues);
    let om = s.complex("omega_minus", Some(C64::new(0.0, 0.0)), issues);
    let dp = s.number("delta_plus", Range::Any, Some(0.0), issues);
    let dm = s.number("delta_minus", Range::Any, Some(0.0), issues);
    let gp = s.number("gamma_plus", Range::NonNegative, None, issues);
    // an invalid gamma_plus is already reported; do not also demand gamma_minus
    let gm_default = gp.or(s.table.contains_key("gamma_plus").then_some(0.0));
    let gm = s.number("gamma_minus", Range::NonNegative, gm_default, issues);
    let c = s.number("c", Range::Positive, Some(1.0), issues);
    if needs_controls && op.is_some_and(|z| z.norm() == 0.0) && om.is_some_and(|z| z.norm() == 0.0) {
        issues.push(s.key("omega_plus"), "degenerate control fields: Omega_+ and Omega_- are both zero");
    }
    Some(ModelParams {
        g_sqrt_n: g?,
        omega_plus: op?,
        omega_minus: om?,
        delta_plus: dp?,
        delta_minus: dm?,
        gamma_plus: gp?,
        gamma_minus: gm?,
        c: c?,
    })
}

fn parse_transform(s: &Section, issues: &mut Issues) -> Option<TransformConfig> {
    s.reject_unknown(&["coupling", "random_checks"], issues);
    let random_checks = s.integer("random_checks", 0, Some(0), issues);
    let path = s.key("coupling");
    let rows = match s.table.get("coupling") {
        Some(Value::Array(rows)) if !rows.is_empty() => rows,
        Some(_) => {
            issues.push(path, "expected a non-empty array of rows");
            return None;
        }
        None => {
            issues.push(path, "missing required key (array of rows of couplings)");
            return None;
        }
    };
    let mut coupling = Vec::with_capacity(rows.len());
    let mut ok = true;
    for (i, row) in rows.iter().enumerate() {
        let rpath = format!("{path}[{i}]");
        let Value::Array(entries) = row else {
            issues.push(rpath, "expected an array of couplings");
            ok = false;
            continue;
        };
        let parsed: Vec<Option<C64>> = entries
            .iter()
            .enumerate()
            .map(|(j, v)| complex_value(v, &format!("{rpath}[{j}]"), issues))
            .collect();
        if parsed.is_empty() {
            issues.push(rpath, "row is empty");
            ok = false;
        }
        ok &= parsed.iter().all(Option::is_some);
        coupling.push(parsed.into_iter().flatten().collect::<Vec<_>>());
    }
    if ok && coupling.iter().any(|r| r.len() != coupling[0].len()) {
        issues.push(path, "rows have different lengths");
        ok = false;
    }
    (ok && random_checks.is_some()).then(|| TransformConfig {
        coupling,
        random_checks: random_checks.unwrap_or(0) as usize,
    })
}

fn parse_dispersion(s: &Section, issues: &mut Issues) -> Option<DispersionConfig> {
    s.reject_unknown(&["k_min", "k_max", "n_k", "fd_step"], issues);
    let k_min = s.number("k_min", Range::Any, None, issues);
    let k_max = s.number("k_max", Range::Any, None, issues);
    let n_k = s.integer("n_k", 3, Some(201), issues);
    let fd_step = s.number("fd_step", Range::Positive, Some(crate::dispersion::FD_STEP), issues);
    if let (Some(lo), Some(hi)) = (k_min, k_max) {
        if hi <= lo {
            issues.push(s.key("k_max"), format!("must exceed k_min = {lo}"));
            return None;
        }
    }
    Some(DispersionConfig {
        k_min: k_min?,
        k_max: k_max?,
        n_k: n_k? as usize,
        fd_step: fd_step?,
    })
}

fn parse_grid(s: &Section, issues: &mut Issues) -> Option<Grid1D> {
    s.reject_unknown(&["n_points", "z_min", "z_max"], issues);
    let n = s.integer("n_points", 16, None, issues);
    let z_min = s.number("z_min", Range::Any, None, issues);
    let z_max = s.number("z_max", Range::Any, None, issues);
    if let Some(n) = n {
        if !(n as u64).is_power_of_two() {
            issues.push(s.key("n_points"), format!("value {n} out of range: expected a power of two >= 16"));
            return None;
        }
    }
    if let (Some(lo), Some(hi)) = (z_min, z_max) {
        if hi <= lo {
            issues.push(s.key("z_max"), format!("must exceed z_min = {lo}"));
            return None;
        }
    }
    Some(Grid1D {
        n_points: n? as usize,
        z_min: z_min?,
        z_max: z_max?,
    })
}

fn parse_pulse(s: &Section, issues: &mut Issues) -> Option<PulseSpec> {
    s.reject_unknown(&["center", "width", "carrier", "amplitude"], issues);
    let center = s.number("center", Range::Any, None, issues);
    let width = s.number("width", Range::Positive, None, issues);
    let carrier = s.number("carrier", Range::Any, Some(0.0), issues);
    let amplitude = s.complex("amplitude", Some(C64::new(1.0, 0.0)), issues);
    Some(PulseSpec {
        center: center?,
        width: width?,
        carrier: carrier?,
        amplitude: amplitude?,
    })
}

fn parse_propagate(s: &Section, issues: &mut Issues) -> Option<PropagateConfig> {
    s.reject_unknown(&["t_final", "dt", "snapshot_interval", "compare_effective"], issues);
    let t_final = s.number("t_final", Range::NonNegative, None, issues);
    let dt = s.table.get("dt").map(|_| s.number("dt", Range::Positive, None, issues));
    let snap = s
        .table
        .get("snapshot_interval")
        .map(|_| s.number("snapshot_interval", Range::Positive, None, issues));
    let compare_effective = s.boolean("compare_effective", false, issues);
    Some(PropagateConfig {
        t_final: t_final?,
        dt: dt.map_or(Some(None), |d| d.map(Some))?,
        snapshot_interval: snap.map_or(Some(None), |d| d.map(Some))?,
        compare_effective,
    })
}

fn parse_scenario(s: &Section, issues: &mut Issues) -> Option<ScenarioConfig> {
    s.reject_unknown(&["kind", "snapshot_interval"], issues);
    let kind = match s.string("kind", issues) {
        Some("storage") => Some(ScenarioKind::Storage),
        Some("storage_retrieval") => Some(ScenarioKind::StorageRetrieval),
        Some("custom") => Some(ScenarioKind::Custom),
        Some(other) => {
            issues.push(
                s.key("kind"),
                format!("unknown scenario kind {other:?} (expected storage, storage_retrieval or custom)"),
            );
            None
        }
        None => {
            if !s.table.contains_key("kind") {
                issues.push(s.key("kind"), "missing required key (storage, storage_retrieval or custom)");
            }
            None
        }
    };
    let snapshot_interval = s.number("snapshot_interval", Range::Positive, None, issues);
    Some(ScenarioConfig {
        kind: kind?,
        snapshot_interval: snapshot_interval?,
    })
}

fn controls_value(v: &Value, path: &str, issues: &mut Issues) -> Option<Controls> {
    if let Value::Array(a) = v {
        if let [p, m] = a.as_slice() {
            let plus = complex_value(p, &format!("{path}[0]"), issues);
            let minus = complex_value(m, &format!("{path}[1]"), issues);
            return Some(Controls {
                plus: plus?,
                minus: minus?,
            });
        }
    }
    issues.push(path, "expected [omega_plus, omega_minus]");
    None
}

fn parse_schedule(s: &Section, issues: &mut Issues) -> Option<ControlSchedule> {
    s.reject_unknown(&["segment"], issues);
    let path = s.key("segment");
    let Some(Value::Array(items)) = s.table.get("segment") else {
        issues.push(path, "expected at least one [[segment]] table");
        return None;
    };
    let mut segments = Vec::new();
    let mut ok = !items.is_empty();
    if items.is_empty() {
        issues.push(path.clone(), "expected at least one [[segment]] table");
    }
    for (i, item) in items.iter().enumerate() {
        let spath = format!("{path}[{i}]");
        let Value::Table(t) = item else {
            issues.push(spath, "expected a table");
            ok = false;
            continue;
        };
        let seg = Section::new(spath.clone(), t);
        seg.reject_unknown(&["duration", "from", "to"], issues);
        let duration = seg.number("duration", Range::NonNegative, None, issues);
        let from = match t.get("from") {
            Some(v) => controls_value(v, &seg.key("from"), issues),
            None => {
                issues.push(seg.key("from"), "missing required key ([omega_plus, omega_minus])");
                None
            }
        };
        let to = match t.get("to") {
            Some(v) => controls_value(v, &seg.key("to"), issues),
            None => from,
        };
        match (duration, from, to) {
            (Some(d), Some(a), Some(b)) => segments.push(Segment::ramp(a, b, d)),
            _ => ok = false,
        }
    }
    if !ok {
        return None;
    }
    match ControlSchedule::new(segments) {
        Ok(s) => Some(s),
        Err(e) => {
            issues.push(path, e.to_string());
            None
        }
    }
}

fn require<'a>(root: &Section<'a>, key: &str, mode: Mode, issues: &mut Issues) -> Option<Section<'a>> {
    let s = root.subtable(key, issues);
    if s.is_none() && !root.table.contains_key(key) {
        issues.push(key, format!("missing section [{key}] required by mode {}", mode.name()));
    }
    s
}

/// Parses and validates a configuration. `cli_mode`, when given, must agree
/// with any `mode` key in the file.
pub fn parse_config(text: &str, cli_mode: Option<Mode>) -> Result<RunConfig, Vec<ConfigIssue>> {
    let mut issues = Issues(Vec::new());
    let table: Table = match text.parse() {
        Ok(t) => t,
        Err(e) => {
            issues.push("", format!("not valid TOML: {}", e.message()));
            return Err(issues.0);
        }
    };
    let root = Section::new("", &table);
    root.reject_unknown(
        &[
            "mode",
            "seed",
            "output_dir",
            "model",
            "transform",
            "dispersion",
            "grid",
            "pulse",
            "propagate",
            "scenario",
            "schedule",
            "retrieval",
        ],
        &mut issues,
    );

    let file_mode = match root.string("mode", &mut issues) {
        Some(m) => match Mode::parse(m) {
            Some(m) => Some(m),
            None => {
                issues.push("mode", format!("unknown mode {m:?} (expected transform, dispersion, propagate or scenario)"));
                None
            }
        },
        None => None,
    };
    let mode = match (cli_mode, file_mode) {
        (Some(a), Some(b)) if a != b => {
            issues.push("mode", format!("file says {} but the command line says {}", b.name(), a.name()));
            None
        }
        (Some(a), _) => Some(a),
        (None, Some(b)) => Some(b),
        (None, None) => {
            if !table.contains_key("mode") {
                issues.push("mode", "missing (give it on the command line or as a top-level key)");
            }
            None
        }
    };
    let seed = root.integer("seed", 0, Some(0), &mut issues).map(|s| s as u64);
    let output_dir = root.string("output_dir", &mut issues).map(PathBuf::from);

    let Some(mode) = mode else {
        return Err(issues.0);
    };

    let needs = |m: &[Mode]| m.contains(&mode);
    let section = |key: &str, required: bool, issues: &mut Issues| {
        if required {
            require(&root, key, mode, issues)
        } else {
            root.subtable(key, issues)
        }
    };

    let model_required = needs(&[Mode::Dispersion, Mode::Propagate, Mode::Scenario]);
    let needs_controls = needs(&[Mode::Dispersion, Mode::Propagate]);
    let model = section("model", model_required, &mut issues)
        .and_then(|s| parse_model(&s, needs_controls, &mut issues));
    let transform = section("transform", mode == Mode::Transform, &mut issues)
        .and_then(|s| parse_transform(&s, &mut issues));
    let dispersion = section("dispersion", mode == Mode::Dispersion, &mut issues)
        .and_then(|s| parse_dispersion(&s, &mut issues));
    let spatial = needs(&[Mode::Propagate, Mode::Scenario]);
    let grid = section("grid", spatial, &mut issues).and_then(|s| parse_grid(&s, &mut issues));
    let pulse = section("pulse", spatial, &mut issues).and_then(|s| parse_pulse(&s, &mut issues));
    let propagate = section("propagate", mode == Mode::Propagate, &mut issues)
        .and_then(|s| parse_propagate(&s, &mut issues));
    let scenario = section("scenario", mode == Mode::Scenario, &mut issues)
        .and_then(|s| parse_scenario(&s, &mut issues));
    let schedule = section("schedule", mode == Mode::Scenario, &mut issues)
        .and_then(|s| parse_schedule(&s, &mut issues));
    let wants_retrieval = scenario.is_some_and(|s| s.kind == ScenarioKind::StorageRetrieval);
    let retrieval = section("retrieval", mode == Mode::Scenario && wants_retrieval, &mut issues)
        .and_then(|s| parse_schedule(&s, &mut issues));

    if let Some(m) = &model {
        if let Err(e) = m.validate() {
            issues.push("model", e.to_string());
        }
    }
    if let (Some(g), Some(p)) = (&grid, &pulse) {
        if let Err(e) = p.validate(g) {
            issues.push("pulse", e.to_string());
        }
    }

    if !issues.0.is_empty() {
        return Err(issues.0);
    }
    Ok(RunConfig {
        mode,
        seed: seed.unwrap_or(0),
        output_dir,
        model,
        transform,
        dispersion,
        grid,
        pulse,
        propagate,
        scenario,
        schedule,
        retrieval,
    })
}

fn complex_toml(z: C64) -> Value {
    Value::Array(vec![Value::Float(z.re), Value::Float(z.im)])
}

fn controls_toml(c: Controls) -> Value {
    Value::Array(vec![complex_toml(c.plus), complex_toml(c.minus)])
}

fn schedule_toml(s: &ControlSchedule) -> Value {
    let segments = s
        .segments
        .iter()
        .map(|seg| {
            let mut t = Table::new();
            t.insert("duration".into(), Value::Float(seg.duration));
            t.insert("from".into(), controls_toml(seg.start));
            t.insert("to".into(), controls_toml(seg.end));
            Value::Table(t)
        })
        .collect();
    let mut t = Table::new();
    t.insert("segment".into(), Value::Array(segments));
    Value::Table(t)
}

fn int(n: usize) -> Value {
    Value::Integer(n as i64)
}

impl RunConfig {
    /// Normalized configuration text: every default made explicit and every
    /// complex value written as `[re, im]`.
    pub fn to_toml(&self) -> String {
        let mut root = Table::new();
        root.insert("mode".into(), Value::String(self.mode.name().into()));
        root.insert("seed".into(), Value::Integer(self.seed as i64));
        if let Some(d) = &self.output_dir {
            root.insert("output_dir".into(), Value::String(d.display().to_string()));
        }
        if let Some(m) = &self.model {
            let mut t = Table::new();
            t.insert("g_sqrt_n".into(), Value::Float(m.g_sqrt_n));
            t.insert("omega_plus".into(), complex_toml(m.omega_plus));
            t.insert("omega_minus".into(), complex_toml(m.omega_minus));
            t.insert("delta_plus".into(), Value::Float(m.delta_plus));
            t.insert("delta_minus".into(), Value::Float(m.delta_minus));
            t.insert("gamma_plus".into(), Value::Float(m.gamma_plus));
            t.insert("gamma_minus".into(), Value::Float(m.gamma_minus));
            t.insert("c".into(), Value::Float(m.c));
            root.insert("model".into(), Value::Table(t));
        }
        if let Some(x) = &self.transform {
            let mut t = Table::new();
            let rows = x
                .coupling
                .iter()
                .map(|r| Value::Array(r.iter().map(|z| complex_toml(*z)).collect()))
                .collect();
            t.insert("coupling".into(), Value::Array(rows));
            t.insert("random_checks".into(), int(x.random_checks));
            root.insert("transform".into(), Value::Table(t));
        }
        if let Some(d) = &self.dispersion {
            let mut t = Table::new();
            t.insert("k_min".into(), Value::Float(d.k_min));
            t.insert("k_max".into(), Value::Float(d.k_max));
            t.insert("n_k".into(), int(d.n_k));
            t.insert("fd_step".into(), Value::Float(d.fd_step));
            root.insert("dispersion".into(), Value::Table(t));
        }
        if let Some(g) = &self.grid {
            let mut t = Table::new();
            t.insert("n_points".into(), int(g.n_points));
            t.insert("z_min".into(), Value::Float(g.z_min));
            t.insert("z_max".into(), Value::Float(g.z_max));
            root.insert("grid".into(), Value::Table(t));
        }
        if let Some(p) = &self.pulse {
            let mut t = Table::new();
            t.insert("center".into(), Value::Float(p.center));
            t.insert("width".into(), Value::Float(p.width));
            t.insert("carrier".into(), Value::Float(p.carrier));
            t.insert("amplitude".into(), complex_toml(p.amplitude));
            root.insert("pulse".into(), Value::Table(t));
        }
        if let Some(p) = &self.propagate {
            let mut t = Table::new();
            t.insert("t_final".into(), Value::Float(p.t_final));
            if let Some(dt) = p.dt {
                t.insert("dt".into(), Value::Float(dt));
            }
            if let Some(s) = p.snapshot_interval {
                t.insert("snapshot_interval".into(), Value::Float(s));
            }
            t.insert("compare_effective".into(), Value::Boolean(p.compare_effective));
            root.insert("propagate".into(), Value::Table(t));
        }
        if let Some(s) = &self.scenario {
            let mut t = Table::new();
            t.insert("kind".into(), Value::String(s.kind.name().into()));
            t.insert("snapshot_interval".into(), Value::Float(s.snapshot_interval));
            root.insert("scenario".into(), Value::Table(t));
        }
        if let Some(s) = &self.schedule {
            root.insert("schedule".into(), schedule_toml(s));
        }
        if let Some(s) = &self.retrieval {
            root.insert("retrieval".into(), schedule_toml(s));
        }
        toml::to_string(&root).expect("a toml table always serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DISPERSION: &str = r#"
mode = "dispersion"
[model]
g_sqrt_n = 10
omega_plus = 1.0
gamma_plus = 1.0
[dispersion]
k_min = -0.5
k_max = 0.5
"#;

    fn paths(issues: &[ConfigIssue]) -> Vec<&str> {
        issues.iter().map(|i| i.path.as_str()).collect()
    }

    #[test]
    fn minimal_dispersion_config() {
        let c = parse_config(DISPERSION, None).unwrap();
        assert_eq!(c.mode, Mode::Dispersion);
        let m = c.model.unwrap();
        assert_eq!(m.gamma_minus, 1.0);
        assert_eq!(m.omega_minus, C64::new(0.0, 0.0));
        assert_eq!(c.dispersion.unwrap().n_k, 201);
    }

    #[test]
    fn degenerate_controls_rejected_for_dispersion() {
        let text = DISPERSION.replace("omega_plus = 1.0", "omega_plus = 0.0");
        let e = parse_config(&text, None).unwrap_err();
        assert!(e.iter().any(|i| i.message.contains("degenerate control fields")), "{e:?}");
    }

    #[test]
    fn negative_gamma_names_the_field() {
        let text = DISPERSION.replace("gamma_plus = 1.0", "gamma_plus = -1.0");
        let e = parse_config(&text, None).unwrap_err();
        assert!(paths(&e).contains(&"model.gamma_plus"), "{e:?}");
        assert!(e[0].message.contains(">= 0"));
    }

    #[test]
    fn all_errors_are_collected() {
        let text = r#"
mode = "propagate"
bogus = 1
[model]
g_sqrt_n = -1
omega_plus = "x"
gamma_plus = 1
colour = "red"
[grid]
n_points = 100
z_min = 0
z_max = 10
"#;
        let e = parse_config(text, None).unwrap_err();
        let p = paths(&e);
        for want in ["bogus", "model.g_sqrt_n", "model.omega_plus", "model.colour", "grid.n_points", "pulse", "propagate"] {
            assert!(p.contains(&want), "missing {want} in {p:?}");
        }
    }

    #[test]
    fn mode_conflict_is_reported() {
        let e = parse_config(DISPERSION, Some(Mode::Transform)).unwrap_err();
        assert!(paths(&e).contains(&"mode"));
    }

    #[test]
    fn round_trip_is_idempotent() {
        let text = r#"
mode = "scenario"
seed = 3
[model]
g_sqrt_n = 2
omega_plus = [2.0, 0.5]
gamma_plus = 0
[grid]
n_points = 256
z_min = -40
z_max = 40
[pulse]
center = -10
width = 2
[scenario]
kind = "storage_retrieval"
snapshot_interval = 5
[[schedule.segment]]
duration = 20
from = [2.0, 0]
to = [0, 0]
[[retrieval.segment]]
duration = 20
from = [0, 0]
to = [1.5, 1.5]
[[retrieval.segment]]
duration = 10
from = [1.5, 1.5]
"#;
        let c = parse_config(text, None).unwrap();
        let once = c.to_toml();
        let c2 = parse_config(&once, None).unwrap();
        assert_eq!(c, c2);
        assert_eq!(once, c2.to_toml());
        assert_eq!(c2.retrieval.unwrap().segments.len(), 2);
    }

    #[test]
    fn transform_config_with_complex_entries() {
        let text = r#"
[transform]
coupling = [[1, [0, 1]], [2, 3]]
"#;
        let c = parse_config(text, Some(Mode::Transform)).unwrap();
        let t = c.transform.unwrap();
        assert_eq!(t.coupling[0][1], C64::new(0.0, 1.0));
        assert_eq!(t.coupling_matrix().unwrap().n_a(), 2);
    }

    #[test]
    fn discontinuous_schedule_is_an_error() {
        let text = r#"
[model]
g_sqrt_n = 2
omega_plus = 1
gamma_plus = 0
[grid]
n_points = 64
z_min = -40
z_max = 40
[pulse]
center = 0
width = 2
[scenario]
kind = "custom"
snapshot_interval = 1
[[schedule.segment]]
duration = 1
from = [1, 0]
[[schedule.segment]]
duration = 1
from = [2, 0]
"#;
        let e = parse_config(text, Some(Mode::Scenario)).unwrap_err();
        assert!(paths(&e).contains(&"schedule.segment"), "{e:?}");
    }
}
