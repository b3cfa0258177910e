//! Surface-state model and the free retarded propagator of the 2D electron gas.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::bessel::hankel1_0;
use super::constants::{mass_over_hbar2, EULER_GAMMA, HBAR2_OVER_2ME};
use crate::error::{CoreError, Result};

/// Parabolic surface band `E(k) = hbar^2 k^2 / (2 m_eff) - mu`, probed at energy `omega`
/// (relative to the chemical potential) with broadening `eta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceModel {
    /// Effective mass in units of the bare electron mass.
    pub m_eff: f64,
    /// Chemical potential, eV.
    pub mu: f64,
    /// Probe energy relative to the chemical potential, eV.
    pub omega: f64,
    /// Spectral broadening, eV.
    pub eta: f64,
}

impl Default for SurfaceModel {
    /// Cu(111) Shockley state probed at a 10 mV bias.
    fn default() -> Self {
        SurfaceModel { m_eff: 0.38, mu: 0.45, omega: 0.01, eta: 0.002 }
    }
}

impl SurfaceModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.m_eff > 0.0 && self.m_eff.is_finite()) {
            return Err(CoreError::Domain(format!("physics.m_eff must be > 0, got {}", self.m_eff)));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(CoreError::Domain(format!("physics.eta must be > 0, got {}", self.eta)));
        }
        if !(self.omega + self.mu > 0.0) {
            return Err(CoreError::Domain(format!(
                "physics.mu + physics.omega must be > 0 (got mu={}, omega={}); evanescent regime unsupported",
                self.mu, self.omega
            )));
        }
        Ok(())
    }

    /// Kinetic energy above the band bottom, `omega + mu`.
    #[inline]
    pub fn band_energy(&self) -> f64 {
        self.omega + self.mu
    }

    /// `m / (2 hbar^2)`, the prefactor of the free propagator (eV^-1 nm^-2).
    #[inline]
    pub fn propagator_prefactor(&self) -> f64 {
        0.5 * mass_over_hbar2(self.m_eff)
    }

    /// Clean density of states per area, `m / (2 pi hbar^2)`, eV^-1 nm^-2.
    #[inline]
    pub fn clean_dos(&self) -> f64 {
        mass_over_hbar2(self.m_eff) / (2.0 * PI)
    }

    /// Wavevector at the broadened energy `omega + i eta`; `Im k > 0` gives outgoing decay.
    pub fn complex_wavevector(&self) -> Result<Complex64> {
        self.validate()?;
        Ok((Complex64::new(self.band_energy(), self.eta) * (self.m_eff / HBAR2_OVER_2ME)).sqrt())
    }
}

/// Real wavevector `k = sqrt(2 m_eff m_e (omega + mu)) / hbar`, in nm^-1.
pub fn fermi_wavevector(model: &SurfaceModel) -> Result<f64> {
    model.validate()?;
    Ok((model.m_eff * model.band_energy() / HBAR2_OVER_2ME).sqrt())
}

/// Precomputed pieces of the free propagator for one model.
#[derive(Clone, Copy, Debug)]
pub struct FreePropagator {
    k: Complex64,
    prefactor: f64,
}

impl FreePropagator {
    pub fn new(model: &SurfaceModel) -> Result<Self> {
        Ok(FreePropagator { k: model.complex_wavevector()?, prefactor: model.propagator_prefactor() })
    }

    pub fn wavevector(&self) -> Complex64 {
        self.k
    }

    /// `G0(d) = -i m/(2 hbar^2) H0^(1)(k d)` for a separation `d > 0` in nm.
    #[inline]
    pub fn at_distance(&self, d: f64) -> Complex64 {
        Complex64::new(0.0, -self.prefactor) * hankel1_0(self.k * d)
    }

    /// Regularised coincident-point value with short-distance cutoff `a`:
    /// the small-argument form of the kernel with the logarithm evaluated at `k a`.
    ///
    /// Its imaginary part is cutoff independent, `-pi rho0 (1 - 2 arg(k) / pi)`.
    pub fn onsite(&self, cutoff_nm: f64) -> Complex64 {
        let log_term = (self.k * (0.5 * cutoff_nm)).ln() + EULER_GAMMA;
        // -i p [1 + i (2/pi)(ln(k a/2) + gamma)]
        Complex64::new(0.0, -self.prefactor) + log_term * (2.0 * self.prefactor / PI)
    }
}

/// Off-diagonal free propagator between two points (nm).
pub fn free_greens_function(r1: (f64, f64), r2: (f64, f64), model: &SurfaceModel) -> Result<Complex64> {
    let d = (r1.0 - r2.0).hypot(r1.1 - r2.1);
    if d == 0.0 {
        return Err(CoreError::Singularity(
            "free propagator diverges at coincident points; use the regularised on-site value".into(),
        ));
    }
    Ok(FreePropagator::new(model)?.at_distance(d))
}
