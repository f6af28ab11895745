//! Unit-safe domain types shared by all modules.
//!
//! All values are stored in SI; constructors validate invariants so that
//! downstream code can assume well-formed inputs. Every type here is an
//! immutable value type and can be shared freely across threads.

use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::{Error, Result};

/// Vertical extent of the nuclear sample above the diamond surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LayerGeometry {
    /// Sample fills the half space above the surface.
    SemiInfinite,
    /// Laterally infinite layer between heights `z1` and `z2` (m) above
    /// the surface, 0 <= z1 < z2. `z2 = f64::INFINITY` recovers the
    /// semi-infinite case.
    Slab { z1: f64, z2: f64 },
}

impl LayerGeometry {
    pub fn validate(&self) -> Result<()> {
        if let LayerGeometry::Slab { z1, z2 } = *self {
            if !(z1 >= 0.0 && z1.is_finite()) {
                return Err(Error::invalid("LayerGeometry", format!("z1 = {z1}")));
            }
            if !(z2 > z1) {
                return Err(Error::invalid(
                    "LayerGeometry",
                    format!("slab requires z1 < z2, got [{z1}, {z2}]"),
                ));
            }
        }
        Ok(())
    }
}

/// Nuclear dephasing time: a finite T2n* in seconds, or the infinite-
/// dephasing-time limit used when the sequence is much shorter than T2n*.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum T2nStar {
    Infinite,
    Finite(f64),
}

impl T2nStar {
    pub fn validate(&self) -> Result<()> {
        if let T2nStar::Finite(t) = *self {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::invalid("T2nStar", format!("{t}")));
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, T2nStar::Finite(_))
    }
}

/// A single NV center: depth below the surface and axis tilt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NvCenter {
    depth: f64,
    alpha: f64,
    constants: PhysicalConstants,
}

impl NvCenter {
    /// `depth` in meters, `alpha` in radians in [0, pi/2].
    pub fn new(depth: f64, alpha: f64, constants: PhysicalConstants) -> Result<Self> {
        if !(depth > 0.0 && depth.is_finite()) {
            return Err(Error::invalid("NvCenter", format!("depth = {depth}")));
        }
        if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&alpha) {
            return Err(Error::invalid("NvCenter", format!("alpha = {alpha} rad")));
        }
        Ok(Self {
            depth,
            alpha,
            constants,
        })
    }

    /// Depth in meters.
    pub fn depth(&self) -> f64 {
        self.depth
    }

    /// Axis tilt from the surface normal, radians.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn constants(&self) -> &PhysicalConstants {
        &self.constants
    }

    pub fn with_depth(&self, depth: f64) -> Result<Self> {
        Self::new(depth, self.alpha, self.constants)
    }
}

/// Homogeneous spin-1/2 nuclear sample on the diamond surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuclearSample {
    rho: f64,
    gamma_n: f64,
    t2n_star: T2nStar,
    geometry: LayerGeometry,
}

impl NuclearSample {
    /// `rho` in spins m^-3, `gamma_n` in rad s^-1 T^-1.
    ///
    /// Only spin-1/2 nuclei are supported; the correlator normalization
    /// baked into the model is specific to I = 1/2.
    pub fn new(
        rho: f64,
        gamma_n: f64,
        t2n_star: T2nStar,
        geometry: LayerGeometry,
    ) -> Result<Self> {
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(Error::invalid("NuclearSample", format!("rho = {rho}")));
        }
        if !(gamma_n > 0.0 && gamma_n.is_finite()) {
            return Err(Error::invalid(
                "NuclearSample",
                format!("gamma_n = {gamma_n}"),
            ));
        }
        t2n_star.validate()?;
        geometry.validate()?;
        Ok(Self {
            rho,
            gamma_n,
            t2n_star,
            geometry,
        })
    }

    /// Spin-1/2 check for callers that accept a spin quantum number at a
    /// boundary (config files); anything but 1/2 is rejected.
    pub fn check_spin_half(two_i: u32) -> Result<()> {
        if two_i != 1 {
            return Err(Error::invalid(
                "NuclearSample",
                format!("spin I = {}/2 unsupported; only I = 1/2", two_i),
            ));
        }
        Ok(())
    }

    /// Immersion-oil proton preset: rho = 68 nm^-3, proton gamma_n.
    pub fn immersion_oil(t2n_star: T2nStar) -> Self {
        Self {
            rho: crate::constants::RHO_IMMERSION_OIL,
            gamma_n: crate::constants::GAMMA_N_PROTON,
            t2n_star,
            geometry: LayerGeometry::SemiInfinite,
        }
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn gamma_n(&self) -> f64 {
        self.gamma_n
    }

    pub fn t2n_star(&self) -> T2nStar {
        self.t2n_star
    }

    pub fn geometry(&self) -> LayerGeometry {
        self.geometry
    }

    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        Self::new(rho, self.gamma_n, self.t2n_star, self.geometry)
    }

    pub fn with_t2n(&self, t2n_star: T2nStar) -> Result<Self> {
        Self::new(self.rho, self.gamma_n, t2n_star, self.geometry)
    }
}

/// Dynamical decoupling family. Pulse phases affect robustness to pulse
/// errors but not the ideal sign-flip envelope g(t), so the family is
/// metadata plus a validation rule: XY8 expects N in multiples of 8.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SequenceFamily {
    Xy8,
    Cpmg,
}

impl std::fmt::Display for SequenceFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SequenceFamily::Xy8 => write!(f, "XY8"),
            SequenceFamily::Cpmg => write!(f, "CPMG"),
        }
    }
}

/// Pulse sequence: family, pi-pulse count, and the free-precession time
/// grid to evaluate.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSequence {
    family: SequenceFamily,
    n_pulses: u32,
    tau_grid: Vec<f64>,
}

impl PulseSequence {
    /// Strict constructor: XY8 requires N to be a multiple of 8.
    pub fn new(family: SequenceFamily, n_pulses: u32, tau_grid: Vec<f64>) -> Result<Self> {
        if family == SequenceFamily::Xy8 && n_pulses % 8 != 0 {
            return Err(Error::invalid(
                "PulseSequence",
                format!("XY8 pulse count {n_pulses} is not a multiple of 8"),
            ));
        }
        Self::new_lenient(family, n_pulses, tau_grid)
    }

    /// Warn-and-accept constructor for data recorded with non-multiple-of-8
    /// XY8 variants (partial final blocks).
    pub fn new_lenient(family: SequenceFamily, n_pulses: u32, tau_grid: Vec<f64>) -> Result<Self> {
        if n_pulses == 0 {
            return Err(Error::invalid("PulseSequence", "N must be >= 1"));
        }
        if family == SequenceFamily::Xy8 && n_pulses % 8 != 0 {
            log::warn!("XY8 pulse count {n_pulses} is not a multiple of 8; accepting");
        }
        if tau_grid.is_empty() {
            return Err(Error::invalid("PulseSequence", "empty tau grid"));
        }
        let mut prev = 0.0;
        for (i, &t) in tau_grid.iter().enumerate() {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::invalid(
                    "PulseSequence",
                    format!("tau[{i}] = {t} must be positive"),
                ));
            }
            if t <= prev {
                return Err(Error::invalid(
                    "PulseSequence",
                    format!("tau grid not strictly increasing at index {i}"),
                ));
            }
            prev = t;
        }
        Ok(Self {
            family,
            n_pulses,
            tau_grid,
        })
    }

    pub fn family(&self) -> SequenceFamily {
        self.family
    }

    pub fn n_pulses(&self) -> u32 {
        self.n_pulses
    }

    pub fn tau_grid(&self) -> &[f64] {
        &self.tau_grid
    }
}

/// Applied static field, tesla.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticField {
    b0: f64,
}

impl StaticField {
    pub fn new(b0: f64) -> Result<Self> {
        if !(b0 > 0.0 && b0.is_finite()) {
            return Err(Error::invalid("StaticField", format!("b0 = {b0}")));
        }
        Ok(Self { b0 })
    }

    pub fn from_gauss(g: f64) -> Result<Self> {
        Self::new(crate::units::gauss_to_tesla(g))
    }

    pub fn tesla(&self) -> f64 {
        self.b0
    }
}

/// Nuclear Larmor angular frequency omega_L = gamma_n B0, rad/s.
pub fn larmor_frequency(sample: &NuclearSample, field: &StaticField) -> f64 {
    sample.gamma_n() * field.tesla()
}
