//! Spectral time evolution of the five-component field state.
//!
//! Every spatial Fourier mode evolves independently under `dX/dt = −i H X`
//! with the mode matrix of its wavenumber. Boundaries are periodic, so the
//! grid has to be large enough that pulses never wrap around.

use rayon::prelude::*;
use serde::Serialize;

use crate::dispersion::PerturbativeCoefficients;
use crate::error::{Error, Result};
use crate::grid::{moments, Grid1D, PulseSpec, Spectral};
use crate::linalg::{eig5, Mat5, Vec5, C64, I};
use crate::model::{
    dark_direction, dark_polariton_vector, mode_matrix, validate_adiabaticity,
    AdiabaticityReport, DerivedScales, ModelParams,
};

/// Largest admissible step in units of `1/Ω_eff` and `1/(|k|_max c)`.
pub const MAX_STEP_FRACTION: f64 = 0.1;
/// Modes with `|k|c` above this fraction of `Ω_eff` are outside the adiabatic band.
pub const ADIABATIC_BAND: f64 = 0.1;
/// Maximum spectral weight allowed outside the adiabatic band at initialization.
pub const MAX_OUT_OF_BAND_WEIGHT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Position,
    Spectral,
}

/// Amplitudes `(E+, E−, σ_gs, σ_ge+, σ_ge−)` at every grid point or mode.
#[derive(Debug, Clone)]
pub struct FieldState {
    pub grid: Grid1D,
    pub repr: Representation,
    pub amplitudes: Vec<Vec5>,
    pub time: f64,
}

fn transform_components(amps: &mut [Vec5], f: impl Fn(&mut [C64])) {
    let n = amps.len();
    let mut buf = vec![C64::new(0.0, 0.0); n];
    for c in 0..5 {
        for (b, a) in buf.iter_mut().zip(amps.iter()) {
            *b = a[c];
        }
        f(&mut buf);
        for (a, b) in amps.iter_mut().zip(&buf) {
            a[c] = *b;
        }
    }
}

impl FieldState {
    pub fn zeros(grid: Grid1D, repr: Representation) -> Self {
        Self {
            grid,
            repr,
            amplitudes: vec![Vec5::zeros(); grid.n_points],
            time: 0.0,
        }
    }

    pub fn to_spectral(&self, fft: &Spectral) -> Self {
        let mut out = self.clone();
        if self.repr == Representation::Position {
            transform_components(&mut out.amplitudes, |b| fft.forward(b));
            out.repr = Representation::Spectral;
        }
        out
    }

    pub fn to_position(&self, fft: &Spectral) -> Self {
        let mut out = self.clone();
        if self.repr == Representation::Spectral {
            transform_components(&mut out.amplitudes, |b| fft.inverse(b));
            out.repr = Representation::Position;
        }
        out
    }

    /// Per-component `Σ|X_i|² dz` (Parseval-consistent in either representation).
    pub fn component_norms(&self) -> [f64; 5] {
        let scale = match self.repr {
            Representation::Position => self.grid.dz(),
            Representation::Spectral => self.grid.dz() / self.grid.n_points as f64,
        };
        let mut out = [0.0; 5];
        for a in &self.amplitudes {
            for (o, x) in out.iter_mut().zip(a.iter()) {
                *o += x.norm_sqr();
            }
        }
        out.map(|x| x * scale)
    }

    pub fn norm(&self) -> f64 {
        self.component_norms().iter().sum()
    }

    /// `|X_i(z)|²` for component `i`; requires position representation.
    pub fn density(&self, component: usize) -> Vec<f64> {
        assert_eq!(self.repr, Representation::Position);
        self.amplitudes.iter().map(|a| a[component].norm_sqr()).collect()
    }

    pub fn probe_intensity(&self) -> Vec<f64> {
        assert_eq!(self.repr, Representation::Position);
        self.amplitudes
            .iter()
            .map(|a| a[0].norm_sqr() + a[1].norm_sqr())
            .collect()
    }
}

/// Tracked dark eigenvectors of every grid mode for fixed parameters.
#[derive(Debug, Clone)]
pub struct DarkModes {
    pub vectors: Vec<Vec5>,
    pub omega: Vec<C64>,
    /// Smallest step-to-step overlap among modes inside the adiabatic band.
    pub min_band_overlap: f64,
}

fn overlap(a: &Vec5, b: &Vec5) -> f64 {
    a.dotc(b).norm() / (a.norm() * b.norm())
}

/// Continues the dark eigenvector from `k = 0` outward along both halves of
/// the spectral grid. Each vector is unit-norm and phase-aligned to the
/// `k = 0` dark vector; the `k = 0` mode uses that vector exactly.
pub fn dark_modes(p: &ModelParams, grid: &Grid1D) -> Result<DarkModes> {
    let d0 = dark_direction(p)
        .ok_or_else(|| Error::UnsupportedRegime("dark mode undefined when Ω_eff = 0".into()))?;
    let n = grid.n_points;
    let eigs: Vec<(Vec<C64>, Vec<Vec5>)> = (0..n)
        .into_par_iter()
        .map(|j| eig5(&mode_matrix(p, grid.k(j))))
        .collect::<Result<_>>()?;

    let band = ADIABATIC_BAND * p.omega_eff();
    let mut vectors = vec![Vec5::zeros(); n];
    let mut omega = vec![C64::new(0.0, 0.0); n];
    vectors[0] = d0;
    let mut min_band_overlap: f64 = 1.0;

    let positive = 1..n / 2;
    let negative = (n / 2..n).rev();
    for path in [positive.collect::<Vec<_>>(), negative.collect::<Vec<_>>()] {
        let mut prev = d0;
        for j in path {
            let (vals, vecs) = &eigs[j];
            let (best, o) = vecs
                .iter()
                .enumerate()
                .map(|(i, v)| (i, overlap(&prev, v)))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .expect("five eigenvectors");
            if grid.k(j).abs() * p.c <= band {
                min_band_overlap = min_band_overlap.min(o);
            }
            let mut v = vecs[best];
            let ph = d0.dotc(&v);
            let ph = if ph.norm() > 1e-8 { ph } else { prev.dotc(&v) };
            if ph.norm() > 0.0 {
                v *= ph.conj() / ph.norm();
            }
            vectors[j] = v;
            omega[j] = vals[best];
            prev = v;
        }
    }
    Ok(DarkModes {
        vectors,
        omega,
        min_band_overlap,
    })
}

/// Dark-polariton amplitude of every mode, `⟨v_k, X_k⟩`.
pub fn project_dark(state: &FieldState, modes: &DarkModes) -> Vec<C64> {
    assert_eq!(state.repr, Representation::Spectral);
    state
        .amplitudes
        .iter()
        .zip(&modes.vectors)
        .map(|(x, v)| v.dotc(x))
        .collect()
}

/// Fraction of the norm outside the dark branch, `1 − Σ|⟨v_k,X_k⟩|²/Σ‖X_k‖²`.
pub fn non_dark_fraction(state: &FieldState, modes: &DarkModes) -> f64 {
    let total: f64 = state.amplitudes.iter().map(|x| x.norm_squared()).sum();
    let dark: f64 = project_dark(state, modes).iter().map(|c| c.norm_sqr()).sum();
    if total > 0.0 {
        (1.0 - dark / total).max(0.0)
    } else {
        0.0
    }
}

/// Prepares a pulse as a dark-state polariton: every mode is the pulse's
/// spectral amplitude times the tracked dark eigenvector of that mode.
///
/// The adiabaticity report uses the pulse width as `L_p` and `L_p/v_gr`
/// as the pulse duration.
pub fn init_on_dark_branch(p: &ModelParams, pulse: &PulseSpec, grid: &Grid1D) -> Result<(FieldState, AdiabaticityReport)> {
    p.validate()?;
    grid.validate()?;
    pulse.validate(grid)?;
    dark_polariton_vector(p)?;

    let fft = Spectral::new(grid.n_points);
    let mut spectrum = pulse.sample(grid);
    fft.forward(&mut spectrum);

    let cutoff = ADIABATIC_BAND * p.omega_eff();
    let total: f64 = spectrum.iter().map(|x| x.norm_sqr()).sum();
    let outside: f64 = spectrum
        .iter()
        .enumerate()
        .filter(|(j, _)| grid.k(*j).abs() * p.c > cutoff)
        .map(|(_, x)| x.norm_sqr())
        .sum();
    let fraction = if total > 0.0 { outside / total } else { 0.0 };
    if fraction > MAX_OUT_OF_BAND_WEIGHT {
        return Err(Error::NonadiabaticSpectrum { fraction, cutoff });
    }

    let modes = dark_modes(p, grid)?;
    let amplitudes = spectrum
        .iter()
        .zip(&modes.vectors)
        .map(|(a, v)| v * *a)
        .collect();
    let v_gr = DerivedScales::new(p).v_gr;
    let report = validate_adiabaticity(p, pulse.width / v_gr, pulse.width)?;
    Ok((
        FieldState {
            grid: *grid,
            repr: Representation::Spectral,
            amplitudes,
            time: 0.0,
        },
        report,
    ))
}

/// Largest step accepted by [`evolve_full`].
pub fn max_step(p: &ModelParams, grid: &Grid1D) -> f64 {
    let by_coupling = if p.omega_eff() > 0.0 {
        MAX_STEP_FRACTION / p.omega_eff()
    } else {
        f64::INFINITY
    };
    by_coupling.min(MAX_STEP_FRACTION / (grid.k_max() * p.c))
}

pub(crate) fn check_step(p: &ModelParams, grid: &Grid1D, dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput("time step must be positive".into()));
    }
    if p.omega_eff() > 0.0 && dt > MAX_STEP_FRACTION / p.omega_eff() {
        return Err(Error::StepSize {
            dt,
            max: MAX_STEP_FRACTION / p.omega_eff(),
            reason: "dt <= 0.1/Omega_eff",
        });
    }
    let kmax = MAX_STEP_FRACTION / (grid.k_max() * p.c);
    if dt > kmax {
        return Err(Error::StepSize {
            dt,
            max: kmax,
            reason: "dt <= 0.1/(|k|_max c)",
        });
    }
    Ok(())
}

/// `exp(−i H t)`.
pub fn mode_exponential(h: &Mat5, t: f64) -> Mat5 {
    (h * C64::new(0.0, -t)).exp()
}

fn matrix_power(m: &Mat5, mut n: u64) -> Mat5 {
    let mut result = Mat5::identity();
    let mut base = *m;
    while n > 0 {
        if n & 1 == 1 {
            result = base * result;
        }
        base = base * base;
        n >>= 1;
    }
    result
}

/// Exact propagator of one mode over `t` composed from steps of `dt`.
pub(crate) fn stepped_propagator(h: &Mat5, t: f64, dt: f64) -> Mat5 {
    let steps = (t / dt).floor();
    let rest = t - steps * dt;
    let mut u = matrix_power(&mode_exponential(h, dt), steps as u64);
    if rest > 1e-14 * t.max(dt) {
        u = mode_exponential(h, rest) * u;
    }
    u
}

/// Advances every mode by `t_final` under constant parameters.
///
/// Each step is the exact matrix exponential of the mode; `dt` must respect
/// [`max_step`] and a trailing partial step covers any remainder.
pub fn evolve_full(state: &FieldState, p: &ModelParams, t_final: f64, dt: f64) -> Result<FieldState> {
    p.validate()?;
    check_step(p, &state.grid, dt)?;
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::InvalidInput("t_final must be >= 0".into()));
    }
    let fft = Spectral::new(state.grid.n_points);
    let mut s = state.to_spectral(&fft);
    let grid = state.grid;
    s.amplitudes
        .par_iter_mut()
        .enumerate()
        .for_each(|(j, x)| {
            let u = stepped_propagator(&mode_matrix(p, grid.k(j)), t_final, dt);
            *x = u * *x;
        });
    s.time = state.time + t_final;
    Ok(if state.repr == Representation::Position {
        s.to_position(&fft)
    } else {
        s
    })
}

/// Solves the effective dark-polariton equation exactly in Fourier space,
/// `Ψ(k, t) = Ψ(k, 0) exp(−i(k C1 + k² C2) t)`, for a position-space `psi`.
/// With `C1 > 0` the envelope moves towards `+z`.
pub fn evolve_effective(psi: &[C64], grid: &Grid1D, coeffs: &PerturbativeCoefficients, t_final: f64) -> Vec<C64> {
    assert_eq!(psi.len(), grid.n_points);
    let fft = Spectral::new(grid.n_points);
    let mut spec = psi.to_vec();
    fft.forward(&mut spec);
    for (j, x) in spec.iter_mut().enumerate() {
        let k = grid.k(j);
        *x *= (-I * (coeffs.c1 * k + coeffs.c2 * k * k) * t_final).exp();
    }
    fft.inverse(&mut spec);
    spec
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub t_final: f64,
    /// `‖Ψ_full − Ψ_eff‖ / ‖Ψ_eff‖` at `t_final`.
    pub l2_error: f64,
    pub centroid_full: f64,
    pub centroid_effective: f64,
    pub width_full: f64,
    pub width_effective: f64,
    pub adiabaticity: AdiabaticityReport,
    /// Non-dark population fraction of the full solution at `t_final`.
    pub non_dark_fraction: f64,
}

/// Evolves a dark-initialized pulse with the full model and with the
/// effective equation, projecting the full solution onto the tracked dark
/// eigenvector of each mode.
pub fn compare_full_vs_effective(p: &ModelParams, pulse: &PulseSpec, grid: &Grid1D, t_final: f64) -> Result<ComparisonReport> {
    if p.g_sqrt_n <= 0.0 {
        return Err(Error::UnsupportedRegime(
            "dark-polariton projection needs g√N > 0".into(),
        ));
    }
    let coeffs = crate::dispersion::perturbative_coefficients(p)?;
    let (initial, adiabaticity) = init_on_dark_branch(p, pulse, grid)?;
    let modes = dark_modes(p, grid)?;
    let fft = Spectral::new(grid.n_points);

    let dt = max_step(p, grid);
    let fin = evolve_full(&initial, p, t_final, dt)?;

    let mut psi0 = project_dark(&initial, &modes);
    fft.inverse(&mut psi0);
    let mut psi_full = project_dark(&fin, &modes);
    fft.inverse(&mut psi_full);
    let psi_eff = evolve_effective(&psi0, grid, &coeffs, t_final);

    let diff: f64 = psi_full.iter().zip(&psi_eff).map(|(a, b)| (a - b).norm_sqr()).sum();
    let reference: f64 = psi_eff.iter().map(|b| b.norm_sqr()).sum();
    let z = grid.z_values();
    let dens = |v: &[C64]| v.iter().map(|x| x.norm_sqr()).collect::<Vec<_>>();
    let (cf, wf) = moments(&z, &dens(&psi_full));
    let (ce, we) = moments(&z, &dens(&psi_eff));
    Ok(ComparisonReport {
        t_final,
        l2_error: (diff / reference).sqrt(),
        centroid_full: cf,
        centroid_effective: ce,
        width_full: wf,
        width_effective: we,
        adiabaticity,
        non_dark_fraction: non_dark_fraction(&fin, &modes),
    })
}

/// One row set of the snapshot table.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub time: f64,
    pub z: Vec<f64>,
    /// `|X_i(z)|²` for the five components.
    pub densities: [Vec<f64>; 5],
    pub psi_d: Vec<C64>,
}

pub fn snapshot(state: &FieldState, modes: &DarkModes, fft: &Spectral) -> Snapshot {
    let spec = state.to_spectral(fft);
    let pos = state.to_position(fft);
    let mut psi_d = project_dark(&spec, modes);
    fft.inverse(&mut psi_d);
    Snapshot {
        time: state.time,
        z: state.grid.z_values(),
        densities: std::array::from_fn(|c| pos.density(c)),
        psi_d,
    }
}
