//! Cavity-side closed forms: coupling from mode volume, Fabry-Perot
//! resonances, and the matter-induced renormalization of the photon
//! frequency at each closure level.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{ApproximationLevel, EnsembleConfig};
use crate::polarizability::bare_polarizability;

/// Renormalized photon frequency and the ingredients that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct RedshiftReport {
    pub level: ApproximationLevel,
    pub omega_in: f64,
    pub omega_out: f64,
    pub gamma2: f64,
    /// Refractive index, when the Maxwell route was used.
    pub n_r: Option<f64>,
}

impl RedshiftReport {
    pub fn ratio(&self) -> f64 {
        self.omega_out / self.omega_in
    }
}

/// Coupling constant from the effective mode volume: `lambda = sqrt(4 pi / V)`.
pub fn coupling_from_mode_volume(volume: f64) -> Result<f64> {
    if !volume.is_finite() || volume <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "mode volume must be > 0, got {volume}"
        )));
    }
    Ok((4.0 * PI / volume).sqrt())
}

/// Inverse of [`coupling_from_mode_volume`]: `V = 4 pi / lambda^2`.
pub fn mode_volume_from_coupling(lambda: f64) -> Result<f64> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "coupling must be > 0 to define a finite mode volume, got {lambda}"
        )));
    }
    Ok(4.0 * PI / lambda.powi(2))
}

/// Resonance wavelength of a Fabry-Perot cavity: `2 n_r L / m`.
pub fn fabry_perot_wavelength(length: f64, n_r: f64, mode_order: u32) -> Result<f64> {
    if !length.is_finite() || length <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "cavity length must be > 0, got {length}"
        )));
    }
    if !n_r.is_finite() || n_r < 1.0 {
        return Err(Error::InvalidConfig(format!(
            "refractive index must be >= 1, got {n_r}"
        )));
    }
    if mode_order == 0 {
        return Err(Error::InvalidConfig("mode order must be >= 1".into()));
    }
    Ok(2.0 * n_r * length / mode_order as f64)
}

/// Photon frequency renormalization at the given closure level.
///
/// Self-consistent: `gamma omega`.  Bare-electronic: no shift.
/// Displacement-only: `sqrt(2 - 1/gamma^2) omega`, which turns imaginary at
/// `gamma^2 <= 1/2` — that regime is reported as an error rather than a
/// complex number, because propagating it would diverge.
pub fn renormalized_frequency(
    level: ApproximationLevel,
    config: &EnsembleConfig,
) -> Result<RedshiftReport> {
    config.validate()?;
    let gamma2 = config.gamma2();
    let omega = config.omega_beta;
    let omega_out = match level {
        ApproximationLevel::SelfConsistent => gamma2.sqrt() * omega,
        ApproximationLevel::BareElectronic => omega,
        ApproximationLevel::DisplacementOnly => {
            let factor = 2.0 - 1.0 / gamma2;
            if factor <= 0.0 {
                return Err(Error::DisplacementUnstable { gamma2 });
            }
            factor.sqrt() * omega
        }
    };
    Ok(RedshiftReport {
        level,
        omega_in: omega,
        omega_out,
        gamma2,
        n_r: None,
    })
}

/// Maxwell standing-wave route: refractive index of the dilute medium at the
/// density set by identifying the mode volume with the physical volume.
///
/// `n_r = sqrt(N lambda^2 alpha_i + 1)` and `omega / n_r`, which coincides
/// with the self-consistent `gamma omega` identically.
pub fn maxwell_redshift(config: &EnsembleConfig) -> Result<RedshiftReport> {
    config.validate()?;
    let volume = if config.lambda > 0.0 {
        mode_volume_from_coupling(config.lambda)?
    } else {
        f64::INFINITY
    };
    maxwell_redshift_with_volume(config, volume)
}

/// Maxwell route with an explicit physical volume, for experimenting with
/// media that do not fill the mode volume.  An infinite volume is the
/// free-space limit.
pub fn maxwell_redshift_with_volume(
    config: &EnsembleConfig,
    volume: f64,
) -> Result<RedshiftReport> {
    if volume.is_nan() || volume <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "volume must be > 0, got {volume}"
        )));
    }
    let (_, alpha_i) = bare_polarizability(config);
    let n_r = (4.0 * PI * config.n_molecules as f64 * alpha_i / volume + 1.0).sqrt();
    Ok(RedshiftReport {
        level: ApproximationLevel::SelfConsistent,
        omega_in: config.omega_beta,
        omega_out: config.omega_beta / n_r,
        gamma2: config.gamma2(),
        n_r: Some(n_r),
    })
}
