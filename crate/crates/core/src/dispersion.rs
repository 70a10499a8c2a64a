//! Exact eigen-analysis of the mode matrices and the perturbative
//! dark-polariton dispersion `ω(q) = C1 q + C2 q²`.
//!
//! Wavenumbers here label spatial modes `e^{+iqz}` (see [`mode_matrix`]), so
//! `dω/dq` at `q = 0` is the drift velocity with positive meaning `+z`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{eig5, Vec5, C64};
use crate::model::{dark_direction, mixing_angles, mode_matrix, DerivedScales, ModelParams};

/// Minimum overlap with the k = 0 dark direction to identify the dark branch.
pub const DARK_IDENTIFICATION_OVERLAP: f64 = 0.999;
/// Below this best overlap a tracking step is considered ambiguous.
pub const TRACKING_MIN_OVERLAP: f64 = 0.5;
/// Default finite-difference step in reduced wavenumber units.
pub const FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct DispersionBranch {
    pub branch_id: usize,
    pub is_dark: bool,
    pub k_grid: Vec<f64>,
    pub omega: Vec<C64>,
    #[serde(skip)]
    pub vectors: Vec<Vec5>,
}

fn overlap(a: &Vec5, b: &Vec5) -> f64 {
    a.dotc(b).norm() / (a.norm() * b.norm())
}

/// Rotates `v` so that `⟨reference, v⟩` is real and positive.
fn align_phase(v: &mut Vec5, reference: &Vec5) {
    let p = reference.dotc(v);
    if p.norm() > 0.0 {
        *v *= p.conj() / p.norm();
    }
}

/// Greedy maximal-overlap assignment of the new eigenpairs to the previous
/// branches. Returns, for each previous branch, the index of its successor
/// and the overlap achieved.
fn assign(prev: &[Vec5], next: &[Vec5]) -> Vec<(usize, f64)> {
    let n = prev.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for (i, p) in prev.iter().enumerate() {
        for (j, q) in next.iter().enumerate() {
            pairs.push((overlap(p, q), i, j));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = vec![(usize::MAX, 0.0); n];
    let mut used = vec![false; next.len()];
    for (o, i, j) in pairs {
        if out[i].0 == usize::MAX && !used[j] {
            out[i] = (j, o);
            used[j] = true;
        }
    }
    out
}

struct Track {
    omega: Vec<C64>,
    vectors: Vec<Vec5>,
}

/// Continues all five branches from `seed` along `ks` (ordered away from 0).
fn continue_branches(p: &ModelParams, seed: &[Vec5], ks: &[f64]) -> Result<Vec<Track>> {
    let mut tracks: Vec<Track> = (0..5)
        .map(|_| Track {
            omega: Vec::with_capacity(ks.len()),
            vectors: Vec::with_capacity(ks.len()),
        })
        .collect();
    let mut prev: Vec<Vec5> = seed.to_vec();
    for &k in ks {
        let (vals, vecs) = eig5(&mode_matrix(p, k))?;
        let assignment = assign(&prev, &vecs);
        for (b, &(j, o)) in assignment.iter().enumerate() {
            if o < TRACKING_MIN_OVERLAP {
                return Err(Error::TrackingAmbiguity { k, overlap: o });
            }
            let mut v = vecs[j];
            align_phase(&mut v, &prev[b]);
            tracks[b].omega.push(vals[j]);
            tracks[b].vectors.push(v);
            prev[b] = v;
        }
    }
    Ok(tracks)
}

/// All five eigenvalue branches of the mode matrix over a sorted wavenumber
/// grid, continued by eigenvector overlap from `q = 0` outward.
///
/// The branch whose `q = 0` eigenvector matches the dark-state polariton is
/// flagged `is_dark`; when `Ω_eff = 0` no branch is flagged.
pub fn eigen_branches(p: &ModelParams, k_grid: &[f64]) -> Result<Vec<DispersionBranch>> {
    p.validate()?;
    if k_grid.iter().any(|k| !k.is_finite()) {
        return Err(Error::InvalidInput("wavenumber grid must be finite".into()));
    }
    if k_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("wavenumber grid must be sorted".into()));
    }

    let (vals0, mut vecs0) = eig5(&mode_matrix(p, 0.0))?;
    let mut dark = None;
    if let Some(d) = dark_direction(p) {
        let (best, o) = vecs0
            .iter()
            .enumerate()
            .map(|(j, v)| (j, overlap(&d, v)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("five eigenvectors");
        if o >= DARK_IDENTIFICATION_OVERLAP {
            vecs0[best] = d;
            dark = Some(best);
        }
    }

    let split = k_grid.partition_point(|&k| k < 0.0);
    let (neg, rest) = k_grid.split_at(split);
    let zero_len = rest.iter().take_while(|&&k| k == 0.0).count();
    let (zeros, pos) = rest.split_at(zero_len);
    let neg_rev: Vec<f64> = neg.iter().rev().copied().collect();
    let fwd = continue_branches(p, &vecs0, pos)?;
    let bwd = continue_branches(p, &vecs0, &neg_rev)?;

    let mut branches = Vec::with_capacity(5);
    for (b, (f, r)) in fwd.into_iter().zip(bwd).enumerate() {
        let mut omega: Vec<C64> = r.omega.into_iter().rev().collect();
        let mut vectors: Vec<Vec5> = r.vectors.into_iter().rev().collect();
        for _ in zeros {
            omega.push(if dark == Some(b) { C64::new(0.0, 0.0) } else { vals0[b] });
            vectors.push(vecs0[b]);
        }
        omega.extend(f.omega);
        vectors.extend(f.vectors);
        branches.push(DispersionBranch {
            branch_id: b + 1,
            is_dark: dark == Some(b),
            k_grid: k_grid.to_vec(),
            omega,
            vectors,
        });
    }
    Ok(branches)
}

/// The dark branch alone; fails when it cannot be identified.
pub fn dark_branch(p: &ModelParams, k_grid: &[f64]) -> Result<DispersionBranch> {
    eigen_branches(p, k_grid)?
        .into_iter()
        .find(|b| b.is_dark)
        .ok_or_else(|| Error::UnsupportedRegime("no dark branch at k = 0".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbativeCoefficients {
    pub c1: C64,
    pub c2: C64,
    /// Drift velocity `c cos²θ cos2φ`.
    pub v: f64,
    /// `1/(ħ m*)` with `ħ = 1`, equal to `2 C2`.
    pub inv_mass: C64,
}

/// `sin²2φ + cos²2φ sin⁴θ`.
fn angular_factor(theta: f64, phi: f64) -> f64 {
    let (s2, c2) = ((2.0 * phi).sin(), (2.0 * phi).cos());
    s2 * s2 + c2 * c2 * theta.sin().powi(4)
}

/// `v_gr L_abs (Δ/γ − i)` written as `v_gr c (Δ − iγ)/(g²N)` so that it
/// stays finite for a lossless medium.
fn diffusion_scale(p: &ModelParams, v_gr: f64) -> C64 {
    let g2 = p.g_sqrt_n * p.g_sqrt_n;
    C64::new(p.delta_plus, -p.gamma_plus) * (v_gr * p.c / g2)
}

pub fn perturbative_coefficients(p: &ModelParams) -> Result<PerturbativeCoefficients> {
    p.validate()?;
    if !p.is_symmetric() {
        return Err(Error::UnsupportedRegime(
            "perturbative coefficients need Γ+ = Γ-; use eigen_branches for asymmetric decay".into(),
        ));
    }
    let a = mixing_angles(p)?;
    if p.g_sqrt_n <= 0.0 {
        return Err(Error::UnsupportedRegime(
            "perturbative coefficients need g√N > 0".into(),
        ));
    }
    let v_gr = DerivedScales::new(p).v_gr;
    let v = v_gr * (2.0 * a.phi).cos();
    let c2 = diffusion_scale(p, v_gr) * angular_factor(a.theta, a.phi);
    Ok(PerturbativeCoefficients {
        c1: C64::new(v, 0.0),
        c2,
        v,
        inv_mass: 2.0 * c2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MassIdentityReport {
    /// `(4π/m)(v_gr/v_rec)(L_abs/λ)(Δ/γ − i)(sin²2φ + cos²2φ sin⁴θ)`.
    pub expanded: C64,
    /// `2 C2 / ħ`.
    pub from_c2: C64,
    pub residual: f64,
    /// Atomic mass implied by `m v_rec = ħ k_probe`.
    pub mass: f64,
}

/// Checks the expanded effective-mass formula against `2 C2/ħ` (`ħ = 1`),
/// given a probe wavenumber, its wavelength and the recoil velocity.
pub fn verify_mass_identity(p: &ModelParams, k_probe: f64, v_rec: f64, lambda_p: f64) -> Result<MassIdentityReport> {
    if !(k_probe > 0.0 && v_rec > 0.0 && lambda_p > 0.0) {
        return Err(Error::InconsistentRecoil(
            "k_probe, v_rec and lambda_p must be positive".into(),
        ));
    }
    let product = k_probe * lambda_p;
    let two_pi = 2.0 * std::f64::consts::PI;
    if ((product - two_pi) / two_pi).abs() > 1e-12 {
        return Err(Error::InconsistentRecoil(format!(
            "k_probe·lambda_p = {product}, expected 2π"
        )));
    }
    let coeffs = perturbative_coefficients(p)?;
    let a = mixing_angles(p)?;
    let v_gr = DerivedScales::new(p).v_gr;
    let mass = k_probe / v_rec;
    let prefactor = 4.0 * std::f64::consts::PI / mass * (v_gr / v_rec) / lambda_p;
    // L_abs (Δ/γ − i) = c (Δ − iγ)/(g²N)
    let g2 = p.g_sqrt_n * p.g_sqrt_n;
    let expanded = C64::new(p.delta_plus, -p.gamma_plus) * (p.c / g2) * prefactor
        * angular_factor(a.theta, a.phi);
    let from_c2 = coeffs.inv_mass;
    let scale = from_c2.norm().max(expanded.norm());
    let residual = if scale > 0.0 { (expanded - from_c2).norm() / scale } else { 0.0 };
    Ok(MassIdentityReport {
        expanded,
        from_c2,
        residual,
        mass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiniteDifferenceReport {
    pub step: f64,
    /// Five-point centered `dω/dq` at `q = 0`.
    pub d1: C64,
    /// Five-point centered `d²ω/dq²` at `q = 0`.
    pub d2: C64,
    /// Richardson-extrapolated values from steps `h` and `h/2`.
    pub d1_richardson: C64,
    pub d2_richardson: C64,
}

fn five_point(p: &ModelParams, h: f64) -> Result<(C64, C64)> {
    let grid = [-2.0 * h, -h, 0.0, h, 2.0 * h];
    let w = dark_branch(p, &grid)?.omega;
    let d1 = (w[0] - 8.0 * w[1] + 8.0 * w[3] - w[4]) / (12.0 * h);
    let d2 = (-w[0] + 16.0 * w[1] - 30.0 * w[2] + 16.0 * w[3] - w[4]) / (12.0 * h * h);
    Ok((d1, d2))
}

/// Centered finite-difference derivatives of the exact dark branch at `q = 0`.
pub fn dark_branch_derivatives(p: &ModelParams, h: f64) -> Result<FiniteDifferenceReport> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput("finite-difference step must be positive".into()));
    }
    let (d1, d2) = five_point(p, h)?;
    let (d1h, d2h) = five_point(p, h / 2.0)?;
    Ok(FiniteDifferenceReport {
        step: h,
        d1,
        d2,
        d1_richardson: (16.0 * d1h - d1) / 15.0,
        d2_richardson: (16.0 * d2h - d2) / 15.0,
    })
}
