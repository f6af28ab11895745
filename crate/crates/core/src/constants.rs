//! Physical constants and presets shared by all modules.
//!
//! Internal units are strict SI throughout the crate (m, s, T, rad/s);
//! nm, us, G and kHz appear only at I/O boundaries (see [`crate::units`]).

/// Electron gyromagnetic ratio, rad s^-1 T^-1.
pub const GAMMA_E: f64 = 1.76e11;

/// Proton gyromagnetic ratio, rad s^-1 T^-1. Stored per sample so other
/// nuclei are representable; this is the default preset.
pub const GAMMA_N_PROTON: f64 = 2.68e8;

/// mu_0 / 4pi, T m A^-1 (exact in SI up to the 2019 redefinition, which
/// changes it far below any tolerance used here).
pub const MU0_OVER_4PI: f64 = 1e-7;

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.0545718e-34;

/// Boltzmann constant, J K^-1 (exact SI).
pub const KB: f64 = 1.380649e-23;

/// NV axis tilt from the surface normal on a {100}-oriented diamond:
/// atan(sqrt(2)) = 54.7356... degrees. Stored as the exact crystallographic
/// expression rather than a rounded degree value.
pub fn magic_angle() -> f64 {
    2.0_f64.sqrt().atan()
}

/// Proton spin number density of the immersion oil reference sample,
/// spins m^-3 (68 per nm^3).
pub const RHO_IMMERSION_OIL: f64 = 68.0e27;

/// Immutable bundle of the fundamental constants used by the forward model.
///
/// Values are fixed at construction; the default matches the quoted
/// experimental constants above. `gamma_e` may be overridden within 0.5%
/// of the nominal electron value for sensitivity studies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    gamma_e: f64,
    mu0_over_4pi: f64,
    hbar: f64,
    kb: f64,
}

impl PhysicalConstants {
    pub fn new(gamma_e: f64) -> crate::Result<Self> {
        let rel = (gamma_e - GAMMA_E).abs() / GAMMA_E;
        if !gamma_e.is_finite() || rel > 5e-3 {
            return Err(crate::Error::invalid(
                "PhysicalConstants",
                format!("gamma_e = {gamma_e:e} deviates more than 0.5% from {GAMMA_E:e}"),
            ));
        }
        Ok(Self {
            gamma_e,
            mu0_over_4pi: MU0_OVER_4PI,
            hbar: HBAR,
            kb: KB,
        })
    }

    pub fn gamma_e(&self) -> f64 {
        self.gamma_e
    }

    pub fn mu0_over_4pi(&self) -> f64 {
        self.mu0_over_4pi
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn kb(&self) -> f64 {
        self.kb
    }

    /// mu0 hbar gamma_n / 4pi: the dipolar coupling prefactor of a single
    /// nuclear moment, T m^3.
    pub fn dipole_prefactor(&self, gamma_n: f64) -> f64 {
        self.mu0_over_4pi * self.hbar * gamma_n
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            gamma_e: GAMMA_E,
            mu0_over_4pi: MU0_OVER_4PI,
            hbar: HBAR,
            kb: KB,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn magic_angle_is_within_printing_precision_of_54_7_degrees() {
        let deg = magic_angle().to_degrees();
        assert!((deg - 54.7356).abs() < 1e-3, "got {deg}");
    }

    #[test]
    fn gamma_e_override_bounds() {
        assert!(PhysicalConstants::new(1.76e11).is_ok());
        assert!(PhysicalConstants::new(1.7608e11).is_ok());
        assert!(PhysicalConstants::new(1.8e11).is_err());
        assert!(PhysicalConstants::new(f64::NAN).is_err());
    }
}
