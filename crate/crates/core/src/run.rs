//! Run orchestration: executes one configured mode and writes its artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Mode, RunConfig, ScenarioKind};
use crate::dispersion::{dark_branch_derivatives, eigen_branches, perturbative_coefficients};
use crate::error::{Error, Result};
use crate::grid::{moments, Grid1D, PulseSpec, Spectral};
use crate::linalg::C64;
use crate::model::{build_h, dark_polariton_vector, mixing_angles, DerivedScales, ModelParams};
use crate::ms::{assemble_bipartite, dense_spectrum, morris_shore, CouplingMatrix};
use crate::propagator::{
    compare_full_vs_effective, dark_modes, evolve_full, init_on_dark_branch, max_step,
    non_dark_fraction, snapshot, FieldState,
};
use crate::protocols::{
    drift_velocity, run_custom, run_retrieval_stationary, run_storage, Check, ControlSchedule,
    ScenarioResult,
};

pub const UNITS: &str = "reduced units: rates and frequencies in units of gamma, lengths in c/gamma, hbar = 1";
pub const SIGN_CONVENTION: &str =
    "modes exp(+i q z), q = -k of H(k); d(omega)/dq = C1 = c cos^2(theta) cos(2 phi), positive C1 drifts towards +z";

/// Residual tolerance for exact linear-algebra identities, relative to `‖V‖` or `‖H‖`.
pub const EXACT_TOLERANCE: f64 = 1e-10;
pub const C1_TOLERANCE: f64 = 0.005;
pub const C2_TOLERANCE: f64 = 0.02;
pub const DARK_CONFINEMENT: f64 = 0.01;
pub const LOSSLESS_NORM_TOLERANCE: f64 = 1e-8;
pub const EFFECTIVE_L2_TOLERANCE: f64 = 0.05;
pub const ROUND_TRIP_DSP: f64 = 0.98;

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub mode: Mode,
    pub units: &'static str,
    pub sign_convention: &'static str,
    pub seed: u64,
    pub config: RunConfig,
    pub wall_clock_seconds: f64,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    pub outputs: Vec<String>,
    pub passed: bool,
}

impl RunManifest {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

/// Formats with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::from(e).context(format!("creating {}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: vec![],
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents).map_err(|e| Error::from(e).context(format!("writing {}", path.display())))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }
}

#[derive(Default)]
struct Outcome {
    checks: Vec<Check>,
    warnings: Vec<String>,
}

impl Outcome {
    fn check(&mut self, c: Check) {
        self.checks.push(c);
    }
}

fn required<'a, T>(x: &'a Option<T>, section: &str) -> Result<&'a T> {
    x.as_ref()
        .ok_or_else(|| Error::InvalidInput(format!("section [{section}] is required")))
}

/// Executes the configured mode, writing every artifact and `manifest.json`
/// under `out`.
pub fn run(config: &RunConfig, out: &Path) -> Result<RunManifest> {
    let start = Instant::now();
    let mut art = Artifacts::new(out)?;
    let mut outcome = Outcome::default();
    match config.mode {
        Mode::Transform => run_transform(config, &mut art, &mut outcome)?,
        Mode::Dispersion => run_dispersion(config, &mut art, &mut outcome)?,
        Mode::Propagate => run_propagate(config, &mut art, &mut outcome)?,
        Mode::Scenario => run_scenario(config, &mut art, &mut outcome)?,
    }
    let passed = outcome.checks.iter().filter(|c| c.hard).all(|c| c.passed);
    let mut outputs = art.written.clone();
    outputs.push("manifest.json".into());
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        mode: config.mode,
        units: UNITS,
        sign_convention: SIGN_CONVENTION,
        seed: config.seed,
        config: config.clone(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        checks: outcome.checks,
        warnings: outcome.warnings,
        outputs,
        passed,
    };
    art.json("manifest.json", &manifest)?;
    Ok(manifest)
}

struct MsChecks {
    block: f64,
    unitarity: f64,
    spectrum: f64,
    dark_count_mismatch: f64,
}

fn ms_checks(v: &CouplingMatrix) -> (crate::ms::MsDecomposition, MsChecks) {
    let d = morris_shore(v);
    let h = assemble_bipartite(v);
    let scale = d.pair_couplings.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let dense = dense_spectrum(&h);
    let spectrum = d
        .spectrum()
        .iter()
        .zip(&dense)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / scale;
    let nonzero = dense.iter().filter(|x| x.abs() > EXACT_TOLERANCE * scale).count();
    let expected_dark = v.n_a() + v.n_b() - nonzero;
    let checks = MsChecks {
        block: d.block_residual(&h) / scale,
        unitarity: d.unitarity_residual(),
        spectrum,
        dark_count_mismatch: (d.n_dark as f64 - expected_dark as f64).abs(),
    };
    (d, checks)
}

fn push_ms_checks(prefix: &str, c: &MsChecks, outcome: &mut Outcome) {
    outcome.check(Check::at_most(format!("{prefix}.block_residual"), c.block, EXACT_TOLERANCE, true));
    outcome.check(Check::at_most(format!("{prefix}.unitarity_residual"), c.unitarity, EXACT_TOLERANCE, true));
    outcome.check(Check::at_most(format!("{prefix}.spectrum_residual"), c.spectrum, EXACT_TOLERANCE, true));
    outcome.check(Check::at_most(format!("{prefix}.dark_count_mismatch"), c.dark_count_mismatch, 0.0, true));
}

/// A random complex coupling block with entries uniform in the unit square.
pub fn random_coupling(rng: &mut impl Rng, n_a: usize, n_b: usize) -> CouplingMatrix {
    let m = DMatrix::from_fn(n_a, n_b, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    CouplingMatrix::new(m).expect("finite random entries")
}

fn run_transform(config: &RunConfig, art: &mut Artifacts, outcome: &mut Outcome) -> Result<()> {
    let t = required(&config.transform, "transform")?;
    let v = t.coupling_matrix().map_err(|e| e.context("transform.coupling"))?;
    let (d, checks) = ms_checks(&v);
    push_ms_checks("transform", &checks, outcome);

    if t.random_checks > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut worst = MsChecks {
            block: 0.0,
            unitarity: 0.0,
            spectrum: 0.0,
            dark_count_mismatch: 0.0,
        };
        for _ in 0..t.random_checks {
            let (n_a, n_b) = (rng.random_range(1..=12), rng.random_range(1..=12));
            let (_, c) = ms_checks(&random_coupling(&mut rng, n_a, n_b));
            worst.block = worst.block.max(c.block);
            worst.unitarity = worst.unitarity.max(c.unitarity);
            worst.spectrum = worst.spectrum.max(c.spectrum);
            worst.dark_count_mismatch = worst.dark_count_mismatch.max(c.dark_count_mismatch);
        }
        push_ms_checks("transform.random", &worst, outcome);
    }
    art.json("transform.json", &d)
}

fn relative_error(measured: C64, expected: C64, scale: f64) -> f64 {
    (measured - expected).norm() / expected.norm().max(scale)
}

fn run_dispersion(config: &RunConfig, art: &mut Artifacts, outcome: &mut Outcome) -> Result<()> {
    let p = required(&config.model, "model")?;
    let d = required(&config.dispersion, "dispersion")?;
    let ks = d.k_grid();
    let branches = eigen_branches(p, &ks).map_err(|e| e.context("dispersion"))?;
    let dark_id = branches.iter().find(|b| b.is_dark).map(|b| b.branch_id);

    let mut csv = String::from("k");
    for b in &branches {
        write!(csv, ",omega_{0}_re,omega_{0}_im", b.branch_id).unwrap();
    }
    csv.push_str(",dark_branch\n");
    for (i, k) in ks.iter().enumerate() {
        csv.push_str(&fmt_f64(*k));
        for b in &branches {
            write!(csv, ",{},{}", fmt_f64(b.omega[i].re), fmt_f64(b.omega[i].im)).unwrap();
        }
        writeln!(csv, ",{}", dark_id.unwrap_or(0)).unwrap();
    }
    art.write("branches.csv", &csv)?;

    let h0 = build_h(p, 0.0);
    let yd = dark_polariton_vector(p).map_err(|e| e.context("model"))?;
    let darkness = (h0 * yd).norm() / h0.norm();
    outcome.check(Check::at_most("dispersion.darkness_at_k0", darkness, EXACT_TOLERANCE, true));

    let scales = DerivedScales::new(p);
    let mut summary = json!({
        "k_grid_points": ks.len(),
        "dark_branch": dark_id,
        "mixing_angles": mixing_angles(p).ok(),
        "derived_scales": scales,
        "darkness_residual": darkness,
    });
    match perturbative_coefficients(p) {
        Ok(c) => {
            let fd = dark_branch_derivatives(p, d.fd_step).map_err(|e| e.context("dispersion.fd_step"))?;
            let e1 = relative_error(fd.d1_richardson, c.c1, 1e-3 * scales.v_gr);
            let e2 = relative_error(fd.d2_richardson, 2.0 * c.c2, 0.0);
            outcome.check(Check::at_most("dispersion.c1_relative_error", e1, C1_TOLERANCE, true));
            outcome.check(Check::at_most("dispersion.c2_relative_error", e2, C2_TOLERANCE, true));
            summary["coefficients"] = serde_json::to_value(c)?;
            summary["finite_difference"] = serde_json::to_value(fd)?;
            summary["c1_relative_error"] = json!(e1);
            summary["c2_relative_error"] = json!(e2);
        }
        Err(e) => outcome
            .warnings
            .push(format!("perturbative coefficients not evaluated: {e}")),
    }
    art.json("dispersion.json", &summary)
}

/// Requires the grid to hold 20 pulse widths plus the distance drifted.
fn check_domain(grid: &Grid1D, pulse: &PulseSpec, travel: f64) -> Result<()> {
    let need = 20.0 * pulse.width + travel.abs();
    if grid.len() < need {
        return Err(Error::InvalidInput(format!(
            "grid length {} is shorter than 20 pulse widths plus the drift distance ({need})",
            grid.len()
        ))
        .context("grid"));
    }
    Ok(())
}

fn snapshot_csv(s: &crate::propagator::Snapshot) -> String {
    let mut out = String::from(
        "z,abs_e_plus_sq,abs_e_minus_sq,abs_sigma_gs_sq,abs_sigma_ge_plus_sq,abs_sigma_ge_minus_sq,psi_d_re,psi_d_im\n",
    );
    for (j, z) in s.z.iter().enumerate() {
        out.push_str(&fmt_f64(*z));
        for d in &s.densities {
            out.push(',');
            out.push_str(&fmt_f64(d[j]));
        }
        write!(out, ",{},{}", fmt_f64(s.psi_d[j].re), fmt_f64(s.psi_d[j].im)).unwrap();
        out.push('\n');
    }
    out
}

fn snapshot_times(t_final: f64, interval: f64) -> Vec<f64> {
    if t_final == 0.0 {
        return vec![0.0];
    }
    let n = (t_final / interval - 1e-9).ceil().max(1.0) as usize;
    (0..=n).map(|i| (i as f64 * interval).min(t_final)).collect()
}

fn run_propagate(config: &RunConfig, art: &mut Artifacts, outcome: &mut Outcome) -> Result<()> {
    let p = required(&config.model, "model")?;
    let grid = required(&config.grid, "grid")?;
    let pulse = required(&config.pulse, "pulse")?;
    let prop = required(&config.propagate, "propagate")?;
    let scales = DerivedScales::new(p);
    check_domain(grid, pulse, scales.v_gr * prop.t_final)?;

    let (initial, adiab) = init_on_dark_branch(p, pulse, grid).map_err(|e| e.context("pulse"))?;
    let adiabatic = adiab.passes();
    if !adiabatic {
        outcome.warnings.push(format!("adiabaticity not at pass level: {adiab:?}"));
    }
    let modes = dark_modes(p, grid).map_err(|e| e.context("model"))?;
    let dt = prop.dt.unwrap_or_else(|| max_step(p, grid));
    let fft = Spectral::new(grid.n_points);
    let times = snapshot_times(prop.t_final, prop.snapshot_interval.unwrap_or(prop.t_final.max(f64::MIN_POSITIVE)));

    let z = grid.z_values();
    let mut state: FieldState = initial.clone();
    let (mut centroid, mut width, mut norm, mut non_dark) = (vec![], vec![], vec![], vec![]);
    let mut worst_non_dark: f64 = 0.0;
    for (i, &t) in times.iter().enumerate() {
        if t > state.time {
            state = evolve_full(&state, p, t - state.time, dt).map_err(|e| e.context("propagate.dt"))?;
            state.time = t;
        }
        let s = snapshot(&state, &modes, &fft);
        art.write(&format!("snapshots/snapshot_{i:04}.csv"), &snapshot_csv(&s))?;
        let (c, w) = moments(&z, &s.psi_d.iter().map(|x| x.norm_sqr()).collect::<Vec<_>>());
        let nd = non_dark_fraction(&state, &modes);
        worst_non_dark = worst_non_dark.max(nd);
        centroid.push(c);
        width.push(w);
        norm.push(state.norm());
        non_dark.push(nd);
    }

    outcome.check(Check::at_most("propagate.non_dark_fraction", worst_non_dark, DARK_CONFINEMENT, adiabatic));
    let lossless = p.gamma() == 0.0 && p.delta_plus == 0.0 && p.delta_minus == 0.0;
    if lossless {
        let drift = norm.iter().map(|n| (n / norm[0] - 1.0).abs()).fold(0.0, f64::max);
        outcome.check(Check::at_most("propagate.norm_conservation", drift, LOSSLESS_NORM_TOLERANCE, true));
    }
    let mut summary = json!({
        "times": times,
        "centroid": centroid,
        "width": width,
        "total_norm": norm,
        "non_dark_fraction": non_dark,
        "adiabaticity": adiab,
        "derived_scales": scales,
        "dt": dt,
    });
    if let Ok(c) = perturbative_coefficients(p) {
        if times.len() > 1 && prop.t_final > 0.0 {
            let n = times.len() - 1;
            let measured = (centroid[n] - centroid[0]) / (times[n] - times[0]);
            let err = (measured - c.c1.re).abs() / c.c1.re.abs().max(1e-3 * scales.v_gr);
            outcome.check(Check::at_most("propagate.drift_velocity_error", err, 0.05, false));
            summary["measured_velocity"] = json!(measured);
            summary["predicted_velocity"] = json!(c.c1.re);
        }
        summary["coefficients"] = serde_json::to_value(c)?;
    }
    if prop.compare_effective {
        let report = compare_full_vs_effective(p, pulse, grid, prop.t_final).map_err(|e| e.context("propagate"))?;
        let deep = report.adiabaticity.temporal_ratio >= 100.0 && report.adiabaticity.spatial_ratio >= 10.0;
        outcome.check(Check::at_most("propagate.effective_l2_error", report.l2_error, EFFECTIVE_L2_TOLERANCE, deep));
        summary["comparison"] = serde_json::to_value(&report)?;
    }
    art.json("summary.json", &summary)
}

fn write_scenario_snapshots(p: &ModelParams, r: &ScenarioResult, offset: usize, art: &mut Artifacts) -> Result<()> {
    let fft = Spectral::new(r.final_state().grid.n_points);
    for (i, (state, c)) in r.snapshots.iter().zip(&r.controls).enumerate() {
        let modes = dark_modes(&p.with_controls(c.plus, c.minus), &state.grid)?;
        let s = snapshot(state, &modes, &fft);
        art.write(&format!("snapshots/snapshot_{:04}.csv", offset + i), &snapshot_csv(&s))?;
    }
    Ok(())
}

/// `∫ |v(t)| dt` over a schedule, midpoint rule.
fn travel_distance(p: &ModelParams, schedule: &ControlSchedule) -> f64 {
    let n = 4000;
    let total = schedule.total_duration();
    let h = total / n as f64;
    (0..n)
        .map(|i| drift_velocity(p, schedule.at((i as f64 + 0.5) * h)).abs())
        .sum::<f64>()
        * h
}

fn absorb(outcome: &mut Outcome, r: &ScenarioResult) {
    outcome.checks.extend(r.checks.iter().cloned());
    outcome.warnings.extend(r.warnings.iter().cloned());
}

fn run_scenario(config: &RunConfig, art: &mut Artifacts, outcome: &mut Outcome) -> Result<()> {
    let p = required(&config.model, "model")?;
    let grid = required(&config.grid, "grid")?;
    let pulse = required(&config.pulse, "pulse")?;
    let sc = required(&config.scenario, "scenario")?;
    let schedule = required(&config.schedule, "schedule")?;

    let travel = travel_distance(p, schedule) + config.retrieval.as_ref().map_or(0.0, |r| travel_distance(p, r));
    check_domain(grid, pulse, travel)?;

    let mut summary = serde_json::Map::new();
    match sc.kind {
        ScenarioKind::Custom => {
            let r = run_custom(p, pulse, grid, schedule, sc.snapshot_interval).map_err(|e| e.context("schedule"))?;
            write_scenario_snapshots(p, &r, 0, art)?;
            absorb(outcome, &r);
            summary.insert("custom".into(), serde_json::to_value(&r)?);
        }
        ScenarioKind::Storage | ScenarioKind::StorageRetrieval => {
            let storage = run_storage(p, pulse, grid, schedule, sc.snapshot_interval).map_err(|e| e.context("schedule"))?;
            write_scenario_snapshots(p, &storage, 0, art)?;
            absorb(outcome, &storage);
            if sc.kind == ScenarioKind::StorageRetrieval {
                let plan = required(&config.retrieval, "retrieval")?;
                let retrieval = run_retrieval_stationary(p, storage.final_state(), plan, sc.snapshot_interval)
                    .map_err(|e| e.context("retrieval"))?;
                write_scenario_snapshots(p, &retrieval, storage.snapshots.len(), art)?;
                absorb(outcome, &retrieval);
                let lossless = p.gamma() == 0.0 && p.delta_plus == 0.0 && p.delta_minus == 0.0;
                let adiabatic = storage.warnings.is_empty() && retrieval.warnings.is_empty();
                let ratio = retrieval.dsp_norm.last().copied().unwrap_or(0.0) / storage.dsp_norm[0];
                outcome.check(Check::at_least("round_trip.dsp_norm_ratio", ratio, ROUND_TRIP_DSP, lossless && adiabatic));
                summary.insert("retrieval".into(), serde_json::to_value(&retrieval)?);
            }
            summary.insert("storage".into(), serde_json::to_value(&storage)?);
        }
    }
    art.json("summary.json", &Value::Object(summary))
}
