//! Closed-form forward model: geometry factor, B_RMS, filter function,
//! sequence functionals K, and the contrast dip C(tau).
//!
//! All operations are pure functions of immutable inputs.

use crate::constants::PhysicalConstants;
use crate::math::{exp_neg_plus_x_minus_one, sinc};
use crate::types::{LayerGeometry, NuclearSample, NvCenter, SequenceFamily, T2nStar};
use crate::{Error, Result};
use std::f64::consts::PI;

/// Spectral density of the nuclear field at the NV: variance, center
/// frequency, and linewidth tag. The Lorentzian broadened form lives in
/// [`k_finite`]; the delta-function limit in [`k_infinite`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralDensityParams {
    pub b_rms_sq: f64,
    pub omega_l: f64,
    pub t2n_star: T2nStar,
}

impl SpectralDensityParams {
    pub fn new(b_rms_sq: f64, omega_l: f64, t2n_star: T2nStar) -> Result<Self> {
        if !(b_rms_sq >= 0.0 && b_rms_sq.is_finite()) {
            return Err(Error::invalid(
                "SpectralDensityParams",
                format!("b_rms_sq = {b_rms_sq}"),
            ));
        }
        if !(omega_l > 0.0 && omega_l.is_finite()) {
            return Err(Error::invalid(
                "SpectralDensityParams",
                format!("omega_l = {omega_l}"),
            ));
        }
        t2n_star.validate()?;
        Ok(Self {
            b_rms_sq,
            omega_l,
            t2n_star,
        })
    }
}

/// Everything needed to evaluate the contrast dip at a given tau.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastModelParams {
    pub nv: NvCenter,
    pub sample: NuclearSample,
    pub family: SequenceFamily,
    pub n_pulses: u32,
    pub omega_l: f64,
    /// Retain the off-resonant sinc lobe and its cross term. Off by
    /// default; the off-resonant terms contribute very weakly near the
    /// dip.
    pub include_off_resonant: bool,
}

impl ContrastModelParams {
    pub fn new(
        nv: NvCenter,
        sample: NuclearSample,
        family: SequenceFamily,
        n_pulses: u32,
        omega_l: f64,
    ) -> Result<Self> {
        if n_pulses == 0 {
            return Err(Error::invalid("ContrastModelParams", "N must be >= 1"));
        }
        if !(omega_l > 0.0 && omega_l.is_finite()) {
            return Err(Error::invalid(
                "ContrastModelParams",
                format!("omega_l = {omega_l}"),
            ));
        }
        Ok(Self {
            nv,
            sample,
            family,
            n_pulses,
            omega_l,
            include_off_resonant: false,
        })
    }
}

fn angular_prefactor(alpha: f64) -> f64 {
    let s2 = alpha.sin() * alpha.sin();
    8.0 - 3.0 * s2 * s2
}

/// Reduced geometric factor Gamma-tilde, m^-3: the dipolar integral
/// u_z^2 (1 - u_z^2) / r^6 over the sample region.
///
/// Semi-infinite layer: pi [8 - 3 sin^4(alpha)] / (288 d^3). A slab
/// [z1, z2] replaces d^-3 with (d+z1)^-3 - (d+z2)^-3, normalized so that
/// Slab{0, inf} equals the semi-infinite value.
pub fn geometric_factor_reduced(alpha: f64, d_nv: f64, geometry: LayerGeometry) -> Result<f64> {
    if !(d_nv > 0.0 && d_nv.is_finite()) {
        return Err(Error::invalid(
            "geometric_factor_reduced",
            format!("d_nv = {d_nv}"),
        ));
    }
    geometry.validate()?;
    let pref = PI * angular_prefactor(alpha) / 288.0;
    let bracket = match geometry {
        LayerGeometry::SemiInfinite => 1.0 / (d_nv * d_nv * d_nv),
        LayerGeometry::Slab { z1, z2 } => {
            let lo = d_nv + z1;
            let hi = d_nv + z2;
            1.0 / (lo * lo * lo) - if hi.is_finite() { 1.0 / (hi * hi * hi) } else { 0.0 }
        }
    };
    Ok(pref * bracket)
}

/// B_RMS^2, T^2: the variance of the transverse nuclear field at the NV,
/// rho (mu0 hbar gamma_n / 4pi)^2 * pi [8 - 3 sin^4(alpha)] / (128 d^3)
/// (equivalently (9/4) rho (mu0 hbar gamma_n/4pi)^2 Gamma-tilde; the 128-
/// and 288-denominator forms agree identically). At the {100} magic angle
/// the bracket reduces to 5pi/(96 d^3).
pub fn b_rms_squared(nv: &NvCenter, sample: &NuclearSample) -> Result<f64> {
    let gt = geometric_factor_reduced(nv.alpha(), nv.depth(), sample.geometry())?;
    let coupling = nv.constants().dipole_prefactor(sample.gamma_n());
    Ok(2.25 * sample.rho() * coupling * coupling * gt)
}

/// Squared filter function |g(omega, tau, N)|^2 from the truncated
/// harmonic expansion, s^2.
///
/// Keeps harmonics k in [-k_max-1, k_max]; k_max = 0 retains the k = 0
/// and k = -1 terms, which is the symmetric minimum. Each term is
/// (2/pi) N tau (-1)^k/(2k+1) e^{-i (N tau/2)(omega - (2k+1)pi/tau)}
/// sinc[(N tau/2)(omega - (2k+1)pi/tau)].
pub fn filter_function_sq(omega: f64, tau: f64, n_pulses: u32, k_max: u32) -> f64 {
    let t = n_pulses as f64 * tau;
    let mut re = 0.0;
    let mut im = 0.0;
    let k_max = k_max as i64;
    for k in -k_max - 1..=k_max {
        let kf = 2.0 * k as f64 + 1.0;
        let arg = 0.5 * t * (omega - kf * PI / tau);
        let sign = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        let amp = (2.0 / PI) * t * sign / kf * sinc(arg);
        re += amp * arg.cos();
        im -= amp * arg.sin();
    }
    re * re + im * im
}

/// Squared filter function from the all-harmonics closed form,
/// (16/omega^2) sin^4(omega tau/4) sin^2(N omega tau/2) / cos^2(omega tau/2).
///
/// Exact for even N (the resummation assumes an integer number of
/// alternation pairs); the 0/0 at cos(omega tau/2) = 0 is removable and
/// handled explicitly.
pub fn filter_function_sq_closed(omega: f64, tau: f64, n_pulses: u32) -> f64 {
    debug_assert!(n_pulses % 2 == 0, "closed form derived for even N");
    let n = n_pulses as f64;
    let x = omega * tau / 2.0;
    let s4 = (x / 2.0).sin().powi(4);
    // sin^2(N x)/cos^2(x): substitute phi = pi/2 - x mod pi so the ratio
    // becomes sin^2(N phi)/sin^2(phi) for even N, bounded by N^2.
    let c = x.cos();
    let ratio = if c.abs() > 1e-7 {
        let s = (n * x).sin();
        (s * s) / (c * c)
    } else {
        // even N: sin(Nx) -> +-sin(N phi) with phi the distance to the
        // nearest odd multiple of pi/2
        let phi = {
            let m = (x / PI - 0.5).round();
            x - (m + 0.5) * PI
        };
        let r = if phi.abs() < 1e-12 {
            n
        } else {
            (n * phi).sin() / phi.sin()
        };
        r * r
    };
    16.0 / (omega * omega) * s4 * ratio
}

/// Infinite-T2n* sequence functional, s^2:
/// (N tau)^2 sinc^2[(N tau / 2)(omega_L - pi/tau)].
pub fn k_infinite(n_pulses: u32, tau: f64, omega_l: f64) -> f64 {
    let t = n_pulses as f64 * tau;
    let s = sinc(0.5 * t * (omega_l - PI / tau));
    t * t * s * s
}

// (3 - x) - e^{-x} (3 + 2x + x^2/2): the second-order-in-detuning
// coefficient of the broadened functional. Series used below x = 1 where
// the direct form cancels to O(x^4/24).
fn k_finite_quad_coeff(x: f64) -> f64 {
    if x >= 1.0 {
        (3.0 - x) - (-x).exp() * (3.0 + 2.0 * x + 0.5 * x * x)
    } else {
        // -(sum_{n>=4} (-1)^n x^n (3 - 2n + n(n-1)/2) / n!)
        let mut sum = 0.0;
        let mut pow = x * x * x * x; // x^4
        let mut fact = 24.0; // 4!
        let mut n = 4.0;
        loop {
            let c = 3.0 - 2.0 * n + 0.5 * n * (n - 1.0);
            let sign = if (n as i64) % 2 == 0 { 1.0 } else { -1.0 };
            let term = sign * pow * c / fact;
            sum += term;
            if term.abs() <= sum.abs() * 1e-18 + 1e-300 {
                break;
            }
            n += 1.0;
            pow *= x;
            fact *= n;
        }
        -sum
    }
}

/// Finite-T2n* sequence functional, s^2: the Lorentzian-broadened
/// counterpart of [`k_infinite`].
///
/// With delta = omega_L - pi/tau, T = N tau and eps = T2n* delta:
///
/// ```text
/// K = 2 T2n*^2 / (1 + eps^2)^2 * {
///       e^{-T/T2n*} [(1 - eps^2) cos(T delta) - 2 eps sin(T delta)]
///       + (T/T2n*)(1 + eps^2) + eps^2 - 1 }
/// ```
///
/// The braces are a difference of near-equal terms exactly at the dip
/// center; for |eps| < 1e-4 the evaluation switches to a series in delta
/// (through second order) with cancellation-free coefficients.
pub fn k_finite(n_pulses: u32, tau: f64, omega_l: f64, t2n: f64) -> f64 {
    debug_assert!(t2n > 0.0);
    let t = n_pulses as f64 * tau;
    let delta = omega_l - PI / tau;
    let eps = t2n * delta;
    let x = t / t2n;
    if eps.abs() < 1e-4 {
        let f = exp_neg_plus_x_minus_one(x);
        let h = k_finite_quad_coeff(x);
        2.0 * t2n * t2n * (f + eps * eps * h)
    } else {
        let e2 = eps * eps;
        let denom = 1.0 + e2;
        let theta = t * delta;
        let braces = (-x).exp() * ((1.0 - e2) * theta.cos() - 2.0 * eps * theta.sin())
            + x * denom
            + e2
            - 1.0;
        2.0 * t2n * t2n / (denom * denom) * braces
    }
}

/// Sequence functional selected by the dephasing-time tag.
pub fn k_functional(n_pulses: u32, tau: f64, omega_l: f64, t2n: T2nStar) -> f64 {
    match t2n {
        T2nStar::Infinite => k_infinite(n_pulses, tau, omega_l),
        T2nStar::Finite(t2) => k_finite(n_pulses, tau, omega_l, t2),
    }
}

/// Normalized contrast C(tau) in (0, 1]:
/// exp[-(2/pi^2) gamma_e^2 B_RMS^2 K(N tau)].
///
/// With `include_off_resonant` set, the unbroadened functional gains the
/// mirror sinc lobe and the cross term,
/// (N tau)^2 [sinc(a-) + sinc(a+)]^2 with a-+ = (N tau/2)(omega_L -+ pi/tau);
/// in the broadened case the mirror lobe is added without a cross term
/// (the closed form for the cross term exists only for the delta-function
/// lineshape).
pub fn contrast(params: &ContrastModelParams, tau: f64) -> Result<f64> {
    let b2 = b_rms_squared(&params.nv, &params.sample)?;
    Ok(contrast_from_b2(params, b2, tau))
}

/// Contrast with B_RMS^2 supplied directly (used by fitting, where the
/// geometry factors are folded into the trial depth).
pub fn contrast_from_b2(params: &ContrastModelParams, b_rms_sq: f64, tau: f64) -> f64 {
    let n = params.n_pulses;
    let wl = params.omega_l;
    let k = if params.include_off_resonant {
        match params.sample.t2n_star() {
            T2nStar::Infinite => {
                let t = n as f64 * tau;
                let a_minus = 0.5 * t * (wl - PI / tau);
                let a_plus = 0.5 * t * (wl + PI / tau);
                let s = sinc(a_minus) + sinc(a_plus);
                t * t * s * s
            }
            T2nStar::Finite(t2) => {
                k_finite(n, tau, wl, t2) + k_finite(n, tau, wl + 2.0 * PI / tau, t2)
            }
        }
    } else {
        k_functional(n, tau, wl, params.sample.t2n_star())
    };
    let gamma_e = params.nv.constants().gamma_e();
    (-(2.0 / (PI * PI)) * gamma_e * gamma_e * b_rms_sq * k).exp()
}

/// tau at which the contrast dip is centered: pi / omega_L.
pub fn dip_position(omega_l: f64) -> Result<f64> {
    if !(omega_l > 0.0 && omega_l.is_finite()) {
        return Err(Error::invalid("dip_position", format!("omega_l = {omega_l}")));
    }
    Ok(PI / omega_l)
}
