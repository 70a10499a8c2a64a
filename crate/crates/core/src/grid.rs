//! Periodic one-dimensional grid and its discrete Fourier transform.
//!
//! Samples sit at `z_j = z_min + j·dz`, `dz = (z_max − z_min)/n`. Spectral
//! index `j` carries the wavenumber `k_j = 2πj/(n·dz)` for `j < n/2` and
//! `2π(j − n)/(n·dz)` otherwise, and the field is synthesized as
//! `x(z_m) = (1/n) Σ_j X_j e^{+i k_j (z_m − z_min)}`.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::C64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub n_points: usize,
    pub z_min: f64,
    pub z_max: f64,
}

impl Grid1D {
    pub fn new(n_points: usize, z_min: f64, z_max: f64) -> Result<Self> {
        let g = Self {
            n_points,
            z_min,
            z_max,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_points < 16 || !self.n_points.is_power_of_two() {
            return Err(Error::InvalidInput(format!(
                "grid size must be a power of two >= 16, got {}",
                self.n_points
            )));
        }
        if !(self.z_min.is_finite() && self.z_max.is_finite() && self.z_max > self.z_min) {
            return Err(Error::InvalidInput("grid needs finite z_max > z_min".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> f64 {
        self.z_max - self.z_min
    }

    pub fn dz(&self) -> f64 {
        self.len() / self.n_points as f64
    }

    pub fn z(&self, j: usize) -> f64 {
        self.z_min + j as f64 * self.dz()
    }

    pub fn z_values(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.z(j)).collect()
    }

    pub fn k(&self, j: usize) -> f64 {
        let n = self.n_points;
        let m = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
        2.0 * PI * m / (n as f64 * self.dz())
    }

    pub fn k_values(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.k(j)).collect()
    }

    /// Largest |k| on the grid, `π/dz`.
    pub fn k_max(&self) -> f64 {
        PI / self.dz()
    }
}

/// Cached forward/inverse FFT plans for one grid size.
#[derive(Clone)]
pub struct Spectral {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    n: usize,
}

impl Spectral {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            n,
        }
    }

    pub fn forward(&self, data: &mut [C64]) {
        assert_eq!(data.len(), self.n);
        self.forward.process(data);
    }

    /// Normalized inverse, so `inverse(forward(x)) = x`.
    pub fn inverse(&self, data: &mut [C64]) {
        assert_eq!(data.len(), self.n);
        self.inverse.process(data);
        let s = 1.0 / self.n as f64;
        for x in data.iter_mut() {
            *x *= s;
        }
    }
}

/// Gaussian pulse `A exp(−(z−z0)²/(4σ²)) e^{i k0 (z−z0)}`; its intensity has
/// rms width `σ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub center: f64,
    pub width: f64,
    pub carrier: f64,
    pub amplitude: C64,
}

impl PulseSpec {
    pub fn gaussian(center: f64, width: f64) -> Self {
        Self {
            center,
            width,
            carrier: 0.0,
            amplitude: C64::new(1.0, 0.0),
        }
    }

    pub fn validate(&self, grid: &Grid1D) -> Result<()> {
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::InvalidInput("pulse width must be positive".into()));
        }
        if !(self.center.is_finite() && self.carrier.is_finite()) {
            return Err(Error::InvalidInput("pulse center and carrier must be finite".into()));
        }
        let lo = self.center - 5.0 * self.width;
        let hi = self.center + 5.0 * self.width;
        if lo < grid.z_min || hi > grid.z_max {
            return Err(Error::InvalidInput(format!(
                "pulse support [{lo}, {hi}] is not inside the grid [{}, {}]",
                grid.z_min, grid.z_max
            )));
        }
        Ok(())
    }

    pub fn value(&self, z: f64) -> C64 {
        let x = z - self.center;
        let env = (-x * x / (4.0 * self.width * self.width)).exp();
        self.amplitude * env * C64::new(0.0, self.carrier * x).exp()
    }

    pub fn sample(&self, grid: &Grid1D) -> Vec<C64> {
        (0..grid.n_points).map(|j| self.value(grid.z(j))).collect()
    }
}

/// Centroid and rms width of a nonnegative density on the grid.
pub fn moments(z: &[f64], density: &[f64]) -> (f64, f64) {
    let total: f64 = density.iter().sum();
    if total <= 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = z.iter().zip(density).map(|(z, d)| z * d).sum::<f64>() / total;
    let var = z
        .iter()
        .zip(density)
        .map(|(z, d)| (z - mean).powi(2) * d)
        .sum::<f64>()
        / total;
    (mean, var.sqrt())
}
