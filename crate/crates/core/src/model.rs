//! The dual-V stationary-light system: parameters, coefficient matrix,
//! mixing angles and the dark-state polariton.
//!
//! Variables are ordered `(E+, E-, σ_gs, σ_ge+, σ_ge-)`. The first three form
//! the A set of the Morris-Shore bipartition, the optical coherences the B set.
//! All quantities are in reduced units (frequencies in units of the reference
//! decay rate, lengths in units of `c/γ`); nothing is rescaled internally.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat5, Vec5, C64, I};

/// Adiabaticity ratios at or above this pass.
pub const ADIABATIC_PASS: f64 = 10.0;
/// Ratios in `[ADIABATIC_WARN, ADIABATIC_PASS)` are a warning; below is severe.
pub const ADIABATIC_WARN: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Collective probe coupling `g√N`.
    pub g_sqrt_n: f64,
    pub omega_plus: C64,
    pub omega_minus: C64,
    pub delta_plus: f64,
    pub delta_minus: f64,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub c: f64,
}

impl ModelParams {
    /// Symmetric parameters with real controls.
    pub fn symmetric(g_sqrt_n: f64, omega_plus: f64, omega_minus: f64, delta: f64, gamma: f64) -> Self {
        Self {
            g_sqrt_n,
            omega_plus: C64::new(omega_plus, 0.0),
            omega_minus: C64::new(omega_minus, 0.0),
            delta_plus: delta,
            delta_minus: delta,
            gamma_plus: gamma,
            gamma_minus: gamma,
            c: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.g_sqrt_n,
            self.omega_plus.re,
            self.omega_plus.im,
            self.omega_minus.re,
            self.omega_minus.im,
            self.delta_plus,
            self.delta_minus,
            self.gamma_plus,
            self.gamma_minus,
            self.c,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidInput("model parameters must be finite".into()));
        }
        if self.g_sqrt_n < 0.0 {
            return Err(Error::InvalidInput("g_sqrt_n must be >= 0".into()));
        }
        if self.gamma_plus < 0.0 || self.gamma_minus < 0.0 {
            return Err(Error::InvalidInput("decay rates must be >= 0".into()));
        }
        if self.c <= 0.0 {
            return Err(Error::InvalidInput("c must be > 0".into()));
        }
        Ok(())
    }

    pub fn with_controls(&self, omega_plus: C64, omega_minus: C64) -> Self {
        Self {
            omega_plus,
            omega_minus,
            ..*self
        }
    }

    /// `Ω² = |Ω+|² + |Ω-|²`.
    pub fn omega_sq(&self) -> f64 {
        self.omega_plus.norm_sqr() + self.omega_minus.norm_sqr()
    }

    pub fn omega_eff(&self) -> f64 {
        (self.g_sqrt_n * self.g_sqrt_n + self.omega_sq()).sqrt()
    }

    /// Reference decay rate, `max(γ+, γ-)`.
    pub fn gamma(&self) -> f64 {
        self.gamma_plus.max(self.gamma_minus)
    }

    /// `Γ± = iΔ± + γ±`.
    pub fn big_gamma(&self) -> (C64, C64) {
        (
            C64::new(self.gamma_plus, self.delta_plus),
            C64::new(self.gamma_minus, self.delta_minus),
        )
    }

    /// True when both optical coherences decay and detune identically.
    pub fn is_symmetric(&self) -> bool {
        self.gamma_plus == self.gamma_minus && self.delta_plus == self.delta_minus
    }
}

/// The coefficient matrix `H(k)` of `dX/dt = -i H X`, with the spatial
/// dependence `X(z) = ∫dk e^{-ikz} X(k)`.
pub fn build_h(p: &ModelParams, k: f64) -> Mat5 {
    let g = C64::new(-p.g_sqrt_n, 0.0);
    let kc = k * p.c;
    let (gp, gm) = p.big_gamma();
    let mut h = Mat5::zeros();
    h[(0, 0)] = C64::new(-kc, 0.0);
    h[(1, 1)] = C64::new(kc, 0.0);
    h[(0, 3)] = g;
    h[(1, 4)] = g;
    h[(3, 0)] = g;
    h[(4, 1)] = g;
    h[(2, 3)] = -p.omega_plus;
    h[(2, 4)] = -p.omega_minus;
    h[(3, 2)] = -p.omega_plus.conj();
    h[(4, 2)] = -p.omega_minus.conj();
    h[(3, 3)] = -I * gp;
    h[(4, 4)] = -I * gm;
    h
}

/// Coefficient matrix of the spatial mode `e^{+iqz}`, i.e. `H(-q)`.
///
/// Propagation code and dispersion tables use this convention so that a
/// positive group velocity means motion towards `+z`.
pub fn mode_matrix(p: &ModelParams, q: f64) -> Mat5 {
    build_h(p, -q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixingAngles {
    pub theta: f64,
    pub phi: f64,
    pub omega_sq: f64,
}

pub fn mixing_angles(p: &ModelParams) -> Result<MixingAngles> {
    let omega_sq = p.omega_sq();
    if omega_sq <= 0.0 {
        return Err(Error::DegenerateControl);
    }
    Ok(MixingAngles {
        theta: p.g_sqrt_n.atan2(omega_sq.sqrt()),
        phi: p.omega_minus.norm().atan2(p.omega_plus.norm()),
        omega_sq,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedScales {
    /// Slow-light group velocity `c cos²θ`.
    pub v_gr: f64,
    /// Resonant absorption length `cγ/(g²N)`; infinite without atoms.
    pub l_abs: f64,
    pub omega_eff: f64,
}

impl DerivedScales {
    pub fn new(p: &ModelParams) -> Self {
        let g2 = p.g_sqrt_n * p.g_sqrt_n;
        let omega_eff = p.omega_eff();
        let cos2 = if omega_eff > 0.0 { p.omega_sq() / (omega_eff * omega_eff) } else { 1.0 };
        Self {
            v_gr: p.c * cos2,
            l_abs: if g2 > 0.0 { p.c * p.gamma() / g2 } else { f64::INFINITY },
            omega_eff,
        }
    }
}

/// Unit vector `(Ω+*, Ω-*, -g√N, 0, 0)/Ω_eff`, defined whenever `Ω_eff > 0`.
///
/// For real controls this is `(cosφ cosθ, sinφ cosθ, -sinθ, 0, 0)`; at
/// `Ω = 0` it degenerates continuously to the pure spin coherence.
pub fn dark_direction(p: &ModelParams) -> Option<Vec5> {
    let n = p.omega_eff();
    if n <= 0.0 {
        return None;
    }
    Some(Vec5::new(
        p.omega_plus.conj() / n,
        p.omega_minus.conj() / n,
        C64::new(-p.g_sqrt_n / n, 0.0),
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
    ))
}

/// The k = 0 dark-state polariton.
pub fn dark_polariton_vector(p: &ModelParams) -> Result<Vec5> {
    mixing_angles(p)?;
    Ok(dark_direction(p).expect("Ω² > 0 implies Ω_eff > 0"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AdiabaticLevel {
    Pass,
    Warn,
    Severe,
}

impl AdiabaticLevel {
    pub fn from_ratio(r: f64) -> Self {
        if r >= ADIABATIC_PASS {
            Self::Pass
        } else if r >= ADIABATIC_WARN {
            Self::Warn
        } else {
            Self::Severe
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdiabaticityReport {
    /// `Ω_eff · T`.
    pub temporal_ratio: f64,
    /// `L_p / √(L_abs c/γ)`.
    pub spatial_ratio: f64,
    pub temporal: AdiabaticLevel,
    pub spatial: AdiabaticLevel,
}

impl AdiabaticityReport {
    pub fn passes(&self) -> bool {
        self.temporal == AdiabaticLevel::Pass && self.spatial == AdiabaticLevel::Pass
    }
}

pub fn validate_adiabaticity(p: &ModelParams, pulse_duration: f64, pulse_length: f64) -> Result<AdiabaticityReport> {
    if !(pulse_duration > 0.0 && pulse_length > 0.0) {
        return Err(Error::InvalidInput(
            "pulse duration and length must be positive".into(),
        ));
    }
    let temporal_ratio = p.omega_eff() * pulse_duration;
    // L_abs·c/γ = c²/(g²N), which stays finite for a lossless medium.
    let spatial_ratio = pulse_length * p.g_sqrt_n / p.c;
    Ok(AdiabaticityReport {
        temporal_ratio,
        spatial_ratio,
        temporal: AdiabaticLevel::from_ratio(temporal_ratio),
        spatial: AdiabaticLevel::from_ratio(spatial_ratio),
    })
}
