//! Independent ground-truth engines used to validate the closed-form
//! model: a Monte Carlo discrete-dipole bath and the exact per-spin
//! pseudospin product.
//!
//! Coordinates: the NV sits at the origin with the lab +z axis along the
//! surface normal, so the diamond surface is the plane z = d_NV and the
//! sample occupies z >= d_NV (optionally restricted to a slab). The NV
//! quantization axis is tilted by alpha in the x-z plane.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::io::Write;

use crate::math::{sinc, NeumaierSum};
use crate::model::geometric_factor_reduced;
use crate::types::{LayerGeometry, NuclearSample, NvCenter};
use crate::{Error, Result};

/// Name of the random source, recorded in all outputs.
pub const GENERATOR_NAME: &str = "chacha8";

/// Minimum approach distance as a fraction of the NV depth. With the
/// sample above the surface every spin already satisfies r >= d_NV, so
/// this guard only matters for degenerate geometries.
const EPS_MIN_FRACTION: f64 = 1e-3;

/// Largest truncation bias (as a fraction of the analytic gamma-tilde)
/// accepted when sampling.
const MAX_TAIL_FRACTION: f64 = 0.01;

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    if lambda < 30.0 {
        // Knuth product method
        let l = (-lambda).exp();
        let mut k = 0u64;
        let mut p = 1.0;
        loop {
            p *= 1.0 - rng.gen::<f64>();
            if p <= l {
                return k;
            }
            k += 1;
        }
    } else {
        // normal approximation, adequate for the large means used here
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos();
        (lambda + lambda.sqrt() * z).round().max(0.0) as u64
    }
}

/// Vertical extent of the sampled layer in lab coordinates, clipped to
/// the truncation ball.
#[derive(Debug, Clone, Copy)]
struct SampleRegion {
    z_lo: f64,
    z_hi: f64,
    r_max: f64,
}

impl SampleRegion {
    fn new(nv: &NvCenter, geometry: LayerGeometry, r_max: f64) -> Self {
        let d = nv.depth();
        let (z_lo, z_hi) = match geometry {
            LayerGeometry::SemiInfinite => (d, r_max),
            LayerGeometry::Slab { z1, z2 } => (d + z1, (d + z2).min(r_max)),
        };
        Self {
            z_lo,
            z_hi: z_hi.min(r_max),
            r_max,
        }
    }

    /// Exact volume of ball(r_max) intersected with z in [z_lo, z_hi].
    fn volume(&self) -> f64 {
        let r = self.r_max;
        let a = self.z_lo.min(r);
        let b = self.z_hi.min(r);
        if b <= a {
            return 0.0;
        }
        // pi * integral_a^b (r^2 - z^2) dz
        PI * (r * r * (b - a) - (b * b * b - a * a * a) / 3.0)
    }

    fn bounding_box_volume(&self) -> f64 {
        let r = self.r_max;
        let h = (self.z_hi.min(r) - self.z_lo).max(0.0);
        4.0 * r * r * h
    }
}

/// A frozen point set drawn from the Poisson process of intensity rho
/// over the truncated sample region.
#[derive(Debug, Clone)]
pub struct SpinBathRealization {
    positions: Vec<[f64; 3]>,
    seed: u64,
    r_max: f64,
    rho: f64,
    expected_count: f64,
}

impl SpinBathRealization {
    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// rho * volume(region): the Poisson mean of the spin count.
    pub fn expected_count(&self) -> f64 {
        self.expected_count
    }

    /// Write the realization as CSV rows of (x, y, z, kappa^2).
    pub fn write_csv<W: Write>(&self, nv: &NvCenter, gamma_n: f64, mut w: W) -> Result<()> {
        writeln!(w, "# schema = nvnmr-bath/1.0")?;
        writeln!(w, "# generator = {GENERATOR_NAME}")?;
        writeln!(w, "# seed = {}", self.seed)?;
        writeln!(w, "# rho_per_m3 = {:e}", self.rho)?;
        writeln!(w, "# r_max_m = {:e}", self.r_max)?;
        writeln!(w, "# d_nv_m = {:e}", nv.depth())?;
        writeln!(w, "# alpha_rad = {:.17}", nv.alpha())?;
        writeln!(w, "x_m,y_m,z_m,kappa_sq")?;
        for p in &self.positions {
            let c = PseudospinCoupling::from_position(*p, nv, gamma_n);
            writeln!(w, "{:e},{:e},{:e},{:e}", p[0], p[1], p[2], c.kappa_sq)?;
        }
        Ok(())
    }
}

fn check_truncation(nv: &NvCenter, geometry: LayerGeometry, r_max: f64) -> Result<()> {
    let d = nv.depth();
    if !(r_max.is_finite() && r_max >= 10.0 * d) {
        return Err(Error::invalid(
            "sample_bath",
            format!("r_max = {r_max:e} must be >= 10 * d_NV = {:e}", 10.0 * d),
        ));
    }
    // Tail of the gamma-tilde integrand beyond r_max, bounding the angular
    // factor u_z^2(1-u_z^2) by 1/4. For a slab the zone area 2 pi r t gives
    // the tighter pi t / (8 r^4).
    let half_space_tail = PI / (6.0 * r_max.powi(3));
    let tail = match geometry {
        LayerGeometry::SemiInfinite => half_space_tail,
        LayerGeometry::Slab { z1, z2 } => {
            let thickness = z2 - z1;
            if thickness.is_finite() {
                half_space_tail.min(PI * thickness / (8.0 * r_max.powi(4)))
            } else {
                half_space_tail
            }
        }
    };
    let analytic = geometric_factor_reduced(nv.alpha(), d, geometry)?;
    if analytic > 0.0 {
        let tail_frac = tail / analytic;
        if tail_frac > MAX_TAIL_FRACTION {
            return Err(Error::TruncationRadius {
                r_max,
                tail_frac,
                allowed: MAX_TAIL_FRACTION,
            });
        }
    }
    Ok(())
}

/// Drive `f` over every sampled position without materializing the set.
/// The sequence of points is a pure function of the seed, so the
/// materializing and streaming paths see identical realizations.
fn sample_positions(
    sample: &NuclearSample,
    nv: &NvCenter,
    r_max: f64,
    seed: u64,
    mut f: impl FnMut([f64; 3]),
) -> Result<f64> {
    check_truncation(nv, sample.geometry(), r_max)?;
    let region = SampleRegion::new(nv, sample.geometry(), r_max);
    let expected = sample.rho() * region.volume();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_box = poisson(&mut rng, sample.rho() * region.bounding_box_volume());
    let eps_min_sq = (EPS_MIN_FRACTION * nv.depth()).powi(2);
    let r_sq = r_max * r_max;
    for _ in 0..n_box {
        let x = (2.0 * rng.gen::<f64>() - 1.0) * r_max;
        let y = (2.0 * rng.gen::<f64>() - 1.0) * r_max;
        let z = region.z_lo + rng.gen::<f64>() * (region.z_hi - region.z_lo);
        let r2 = x * x + y * y + z * z;
        if r2 <= r_sq && r2 >= eps_min_sq {
            f([x, y, z]);
        }
    }
    Ok(expected)
}

/// Draw a frozen spin-bath realization. Deterministic for a fixed seed.
pub fn sample_bath(
    sample: &NuclearSample,
    nv: &NvCenter,
    r_max: f64,
    seed: u64,
) -> Result<SpinBathRealization> {
    let mut positions = Vec::new();
    let expected = sample_positions(sample, nv, r_max, seed, |p| positions.push(p))?;
    Ok(SpinBathRealization {
        positions,
        seed,
        r_max,
        rho: sample.rho(),
        expected_count: expected,
    })
}

/// Result of the discrete dipolar sum over one realization.
#[derive(Debug, Clone, Copy)]
pub struct GeoSum {
    /// Monte Carlo estimate of the reduced geometric factor, m^-3.
    pub gamma_tilde: f64,
    /// Poisson standard error of `gamma_tilde` (Campbell's theorem).
    pub gamma_tilde_se: f64,
    /// B_RMS^2 of this realization, T^2.
    pub b_rms_sq: f64,
    /// Number of spins summed.
    pub n_spins: u64,
}

fn nv_frame_axes(nv: &NvCenter) -> ([f64; 3], [f64; 3], [f64; 3]) {
    let (sa, ca) = nv.alpha().sin_cos();
    // NV z in the lab frame lies in the x-z plane
    ([ca, 0.0, -sa], [0.0, 1.0, 0.0], [sa, 0.0, ca])
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

struct GeoAccumulator {
    sum_f: NeumaierSum,
    sum_f_sq: NeumaierSum,
    n: u64,
    axis_z: [f64; 3],
}

impl GeoAccumulator {
    fn new(nv: &NvCenter) -> Self {
        let (_, _, z) = nv_frame_axes(nv);
        Self {
            sum_f: NeumaierSum::new(),
            sum_f_sq: NeumaierSum::new(),
            n: 0,
            axis_z: z,
        }
    }

    fn add(&mut self, p: [f64; 3]) {
        let r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
        let r = r2.sqrt();
        let uz = dot(p, self.axis_z) / r;
        let f = uz * uz * (1.0 - uz * uz) / (r2 * r2 * r2);
        self.sum_f.add(f);
        self.sum_f_sq.add(f * f);
        self.n += 1;
    }

    fn finish(self, rho: f64, gamma_n: f64, nv: &NvCenter) -> GeoSum {
        let sum_f = self.sum_f.value();
        let coupling = nv.constants().dipole_prefactor(gamma_n);
        let (gamma_tilde, gamma_tilde_se) = if rho > 0.0 {
            (sum_f / rho, self.sum_f_sq.value().sqrt() / rho)
        } else {
            (0.0, 0.0)
        };
        GeoSum {
            gamma_tilde,
            gamma_tilde_se,
            b_rms_sq: 2.25 * coupling * coupling * sum_f,
            n_spins: self.n,
        }
    }
}

/// Dipolar sum over a materialized realization:
/// Gamma = sum_j D_j^2 u_z^2 (1 - u_z^2), plus the per-realization
/// B_RMS^2 = (9/4) Gamma and the Poisson standard error of gamma-tilde.
pub fn geometric_sum(bath: &SpinBathRealization, nv: &NvCenter, gamma_n: f64) -> GeoSum {
    let mut acc = GeoAccumulator::new(nv);
    for &p in &bath.positions {
        acc.add(p);
    }
    acc.finish(bath.rho, gamma_n, nv)
}

/// Streaming variant of [`sample_bath`] + [`geometric_sum`] for ensembles
/// too large to materialize (1e8 spins and up).
pub fn geometric_sum_sampled(
    sample: &NuclearSample,
    nv: &NvCenter,
    r_max: f64,
    seed: u64,
) -> Result<GeoSum> {
    let mut acc = GeoAccumulator::new(nv);
    sample_positions(sample, nv, r_max, seed, |p| acc.add(p))?;
    Ok(acc.finish(sample.rho(), sample.gamma_n(), nv))
}

/// Dipolar coupling of one nuclear spin to the NV, expressed in the NV
/// frame: `a_z` is the vector of frequency-shift components (rad/s) the
/// nucleus acquires when the NV flips, and kappa^2 = a_zx^2 + a_zy^2 is
/// the transverse part driving the contrast dip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudospinCoupling {
    pub a_z: [f64; 3],
    pub kappa_sq: f64,
}

impl PseudospinCoupling {
    pub fn new(a_z: [f64; 3]) -> Self {
        Self {
            a_z,
            kappa_sq: a_z[0] * a_z[0] + a_z[1] * a_z[1],
        }
    }

    /// Coupling for a spin at lab-frame position `p` relative to the NV.
    pub fn from_position(p: [f64; 3], nv: &NvCenter, gamma_n: f64) -> Self {
        let (ex, ey, ez) = nv_frame_axes(nv);
        let r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
        let r = r2.sqrt();
        let ux = dot(p, ex) / r;
        let uy = dot(p, ey) / r;
        let uz = dot(p, ez) / r;
        let d_j = nv.constants().dipole_prefactor(gamma_n) / (r2 * r);
        let g = nv.constants().gamma_e() * d_j;
        Self::new([3.0 * ux * uz * g, 3.0 * uy * uz * g, (3.0 * uz * uz - 1.0) * g])
    }
}

/// Couplings for a whole realization.
pub fn couplings(bath: &SpinBathRealization, nv: &NvCenter, gamma_n: f64) -> Vec<PseudospinCoupling> {
    bath.positions
        .iter()
        .map(|&p| PseudospinCoupling::from_position(p, nv, gamma_n))
        .collect()
}

/// Which per-spin expression the product uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PseudospinBranch {
    /// Exact spin-1/2 two-subspace rotation formula; valid for any
    /// coupling strength.
    Exact,
    /// Second order in the coupling; requires omega_L >> |A_z| and falls
    /// back to the exact form where its cos(omega_L tau / 2) denominator
    /// degenerates.
    SecondOrder,
}

/// Product-form contrast over a set of couplings.
#[derive(Debug, Clone, Copy)]
pub struct PseudospinSignal {
    pub contrast: f64,
    /// True when the second-order branch had to fall back to the exact
    /// expression because tau sat on a removable singularity.
    pub fell_back: bool,
}

/// sin^2(N alpha / 2) / cos^2(alpha / 2), stable near alpha = pi where
/// both factors vanish (even N).
fn flip_ratio(n_pulses: u32, alpha: f64) -> f64 {
    let half = 0.5 * alpha;
    let c = half.cos();
    if c.abs() > 1e-7 {
        let s = (n_pulses as f64 * half).sin();
        (s * s) / (c * c)
    } else {
        let phi = std::f64::consts::FRAC_PI_2 - half;
        let n = n_pulses as f64;
        if n_pulses % 2 == 0 {
            let r = if phi.abs() < 1e-12 {
                n
            } else {
                (n * phi).sin() / phi.sin()
            };
            r * r
        } else {
            // genuinely divergent for odd N; the direct value is the limit
            let s = (n * half).sin();
            (s * s) / (c * c).max(1e-300)
        }
    }
}

fn pseudospin_exact_one(c: &PseudospinCoupling, omega_l: f64, n_pulses: u32, tau: f64) -> f64 {
    let w1 = [c.a_z[0], c.a_z[1], omega_l + c.a_z[2]];
    let om1 = (w1[0] * w1[0] + w1[1] * w1[1] + w1[2] * w1[2]).sqrt();
    if om1 == 0.0 || c.kappa_sq == 0.0 {
        return 1.0;
    }
    let om0 = omega_l;
    let n0_dot_n1 = w1[2] / om1;
    let cross_sq = c.kappa_sq / (om1 * om1);
    let (s0, c0) = (0.5 * om0 * tau).sin_cos();
    let (s1, c1) = (0.5 * om1 * tau).sin_cos();
    let cos_alpha = (c0 * c1 - n0_dot_n1 * s0 * s1).clamp(-1.0, 1.0);
    let alpha = cos_alpha.acos();
    let q0 = (0.25 * om0 * tau).sin();
    let q1 = (0.25 * om1 * tau).sin();
    1.0 - 2.0 * cross_sq * q0 * q0 * q1 * q1 * flip_ratio(n_pulses, alpha)
}

fn pseudospin_second_order_one(kappa_sq: f64, omega_l: f64, n_pulses: u32, tau: f64) -> f64 {
    let s = (0.25 * omega_l * tau).sin();
    1.0 - 2.0 * kappa_sq / (omega_l * omega_l) * s.powi(4) * flip_ratio(n_pulses, omega_l * tau)
}

/// Contrast as the product of per-spin signals, C = prod_j S^j.
pub fn pseudospin_signal(
    couplings: &[PseudospinCoupling],
    omega_l: f64,
    n_pulses: u32,
    tau: f64,
    branch: PseudospinBranch,
) -> PseudospinSignal {
    let use_exact = match branch {
        PseudospinBranch::Exact => true,
        // removable singularity of the approximate denominator
        PseudospinBranch::SecondOrder => (0.5 * omega_l * tau).cos().abs() < 1e-3,
    };
    let fell_back = use_exact && branch == PseudospinBranch::SecondOrder;
    if fell_back {
        log::debug!(
            "second-order pseudospin branch near cos(omega_L tau/2) = 0 at tau = {tau:e}; \
             using exact form"
        );
    }
    let mut product = 1.0;
    for c in couplings {
        let s = if use_exact {
            pseudospin_exact_one(c, omega_l, n_pulses, tau)
        } else {
            pseudospin_second_order_one(c.kappa_sq, omega_l, n_pulses, tau)
        };
        product *= s;
    }
    PseudospinSignal {
        contrast: product,
        fell_back,
    }
}

/// Consistency report for the identity sum_j kappa_j^2 = 4 gamma_e^2 B_RMS^2,
/// which holds per realization, not just in expectation.
#[derive(Debug, Clone, Copy)]
pub struct KappaBridge {
    pub kappa_sq_sum: f64,
    pub four_gamma_e_sq_b_rms_sq: f64,
    pub relative_difference: f64,
}

/// Evaluate both sides of the kappa / B_RMS identity on one realization.
pub fn kappa_brms_bridge(bath: &SpinBathRealization, nv: &NvCenter, gamma_n: f64) -> KappaBridge {
    let mut kappa_sum = NeumaierSum::new();
    for &p in &bath.positions {
        kappa_sum.add(PseudospinCoupling::from_position(p, nv, gamma_n).kappa_sq);
    }
    let kappa_sq_sum = kappa_sum.value();
    let geo = geometric_sum(bath, nv, gamma_n);
    let ge = nv.constants().gamma_e();
    let rhs = 4.0 * ge * ge * geo.b_rms_sq;
    let denom = kappa_sq_sum.abs().max(rhs.abs());
    let relative_difference = if denom == 0.0 {
        0.0
    } else {
        (kappa_sq_sum - rhs).abs() / denom
    };
    KappaBridge {
        kappa_sq_sum,
        four_gamma_e_sq_b_rms_sq: rhs,
        relative_difference,
    }
}

/// Second-order per-spin dip expressed through the all-harmonics filter
/// function: 1 - (kappa^2 / 8) |g(omega_L, tau)|^2. Used by tests to pin
/// the equivalence between the pseudospin expansion and the filter form.
pub fn second_order_via_filter(kappa_sq: f64, omega_l: f64, n_pulses: u32, tau: f64) -> f64 {
    1.0 - kappa_sq / 8.0 * crate::model::filter_function_sq_closed(omega_l, tau, n_pulses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{magic_angle, PhysicalConstants};
    use crate::types::T2nStar;
    use approx::assert_relative_eq;

    fn nv(d: f64, alpha: f64) -> NvCenter {
        NvCenter::new(d, alpha, PhysicalConstants::default()).unwrap()
    }

    fn sample(rho_per_nm3: f64) -> NuclearSample {
        NuclearSample::new(
            rho_per_nm3 * 1e27,
            crate::constants::GAMMA_N_PROTON,
            T2nStar::Infinite,
            LayerGeometry::SemiInfinite,
        )
        .unwrap()
    }

    #[test]
    fn empty_sample_gives_empty_realization() {
        let bath = sample_bath(&sample(0.0), &nv(5e-9, 0.0), 100e-9, 7).unwrap();
        assert!(bath.is_empty());
        let geo = geometric_sum(&bath, &nv(5e-9, 0.0), crate::constants::GAMMA_N_PROTON);
        assert_eq!(geo.gamma_tilde, 0.0);
        assert_eq!(geo.b_rms_sq, 0.0);
    }

    #[test]
    fn identical_seeds_identical_point_sets() {
        let s = sample(1.0);
        let n = nv(5e-9, magic_angle());
        let a = sample_bath(&s, &n, 60e-9, 42).unwrap();
        let b = sample_bath(&s, &n, 60e-9, 42).unwrap();
        assert_eq!(a.positions(), b.positions());
        let c = sample_bath(&s, &n, 60e-9, 43).unwrap();
        assert_ne!(a.positions(), c.positions());
    }

    #[test]
    fn observed_count_within_poisson_bounds() {
        // rho = 68 nm^-3, d = 5 nm, r_max = 50 nm: mean = rho * cap volume
        let s = sample(68.0);
        let n = nv(5e-9, magic_angle());
        let bath = sample_bath(&s, &n, 50e-9, 3).unwrap();
        let lambda = bath.expected_count();
        // cap volume = pi (2 r^3 - 3 r^2 d + d^3)/3
        let r: f64 = 50e-9;
        let d = 5e-9;
        let vol = PI * (2.0 * r.powi(3) - 3.0 * r * r * d + d.powi(3)) / 3.0;
        assert_relative_eq!(lambda, 68.0e27 * vol, max_relative = 1e-12);
        let dev = (bath.len() as f64 - lambda).abs();
        assert!(dev <= 5.0 * lambda.sqrt(), "count off by {dev} vs 5 sigma");
        // every spin on the sample side, beyond the minimum approach
        for p in bath.positions() {
            assert!(p[2] >= d);
            let r_j = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!(r_j >= 1e-3 * d);
        }
    }

    #[test]
    fn rejects_too_small_r_max() {
        let s = sample(68.0);
        let n = nv(5e-9, magic_angle());
        assert!(sample_bath(&s, &n, 30e-9, 0).is_err());
    }

    #[test]
    fn slab_tail_bound_allows_thin_layers() {
        // a thin slab shrinks gamma-tilde and the tail together
        let s = NuclearSample::new(
            68.0e27,
            crate::constants::GAMMA_N_PROTON,
            T2nStar::Infinite,
            LayerGeometry::Slab { z1: 0.0, z2: 2e-9 },
        )
        .unwrap();
        let n = nv(5e-9, magic_angle());
        assert!(sample_bath(&s, &n, 50e-9, 0).is_ok());
    }

    #[test]
    fn streaming_and_materialized_sums_agree() {
        let s = sample(2.0);
        let n = nv(6e-9, magic_angle());
        let bath = sample_bath(&s, &n, 60e-9, 11).unwrap();
        let a = geometric_sum(&bath, &n, s.gamma_n());
        let b = geometric_sum_sampled(&s, &n, 60e-9, 11).unwrap();
        assert_eq!(a.n_spins, b.n_spins);
        assert_relative_eq!(a.gamma_tilde, b.gamma_tilde, max_relative = 1e-15);
        assert_relative_eq!(a.b_rms_sq, b.b_rms_sq, max_relative = 1e-15);
    }

    #[test]
    fn single_spin_on_axis_contributes_nothing() {
        // u_z = 1 makes u_z^2 (1 - u_z^2) vanish
        let n = nv(10e-9, 0.0);
        let c = PseudospinCoupling::from_position([0.0, 0.0, 10e-9], &n, 2.68e8);
        assert!(c.kappa_sq < 1e-40);
    }

    #[test]
    fn single_spin_at_45_degrees_hand_value() {
        // u_z = 1/sqrt(2), r = 10 nm: the geometric term is D^2/4 with
        // D = mu0 hbar gamma_n / (4 pi r^3); hand value 1.9969e-18 T^2.
        let n = nv(10e-9, 0.0);
        let r = 10e-9;
        let x = r / 2.0_f64.sqrt();
        let p = [x, 0.0, x];
        let c = PseudospinCoupling::from_position(p, &n, 2.68e8);
        let d_j = 1e-7 * 1.0545718e-34 * 2.68e8 / r.powi(3);
        let expected_kappa_sq = 9.0 * (1.76e11f64).powi(2) * d_j * d_j * 0.25;
        assert_relative_eq!(c.kappa_sq, expected_kappa_sq, max_relative = 1e-12);
        assert_relative_eq!(d_j * d_j * 0.25, 1.996925691041469e-18, max_relative = 1e-12);
    }

    #[test]
    fn kappa_bridge_identity_per_realization() {
        let s = sample(5.0);
        let n = nv(6e-9, magic_angle());
        let bath = sample_bath(&s, &n, 60e-9, 9).unwrap();
        assert!(bath.len() > 1000);
        let bridge = kappa_brms_bridge(&bath, &n, s.gamma_n());
        assert!(
            bridge.relative_difference < 1e-12,
            "relative diff {:e}",
            bridge.relative_difference
        );
    }

    #[test]
    fn kappa_bridge_empty_bath() {
        let bath = sample_bath(&sample(0.0), &nv(5e-9, 0.0), 60e-9, 0).unwrap();
        let b = kappa_brms_bridge(&bath, &nv(5e-9, 0.0), 2.68e8);
        assert_eq!(b.kappa_sq_sum, 0.0);
        assert_eq!(b.four_gamma_e_sq_b_rms_sq, 0.0);
        assert_eq!(b.relative_difference, 0.0);
    }

    #[test]
    fn zero_couplings_give_unit_contrast() {
        let cs = vec![PseudospinCoupling::new([0.0, 0.0, 0.0]); 10];
        let out = pseudospin_signal(&cs, 5.28e6, 32, 5.95e-7, PseudospinBranch::Exact);
        assert_eq!(out.contrast, 1.0);
        assert!(!out.fell_back);
    }

    #[test]
    fn second_order_single_spin_matches_filter_identity() {
        let wl = 5.28e6;
        let c = PseudospinCoupling::new([900.0, -400.0, 300.0]);
        for &n in &[8u32, 32, 64] {
            for &frac in &[0.96, 1.01, 1.04] {
                let tau = frac * PI / wl;
                let s2 = pseudospin_second_order_one(c.kappa_sq, wl, n, tau);
                let sf = second_order_via_filter(c.kappa_sq, wl, n, tau);
                assert_relative_eq!(s2, sf, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn second_order_falls_back_on_singular_tau() {
        let wl = 5.28e6;
        let cs = vec![PseudospinCoupling::new([500.0, 0.0, 100.0])];
        // tau exactly at resonance: cos(wl tau / 2) = cos(pi/2) = 0
        let tau = PI / wl;
        let out = pseudospin_signal(&cs, wl, 32, tau, PseudospinBranch::SecondOrder);
        assert!(out.fell_back);
        let exact = pseudospin_signal(&cs, wl, 32, tau, PseudospinBranch::Exact);
        assert_eq!(out.contrast, exact.contrast);
    }

    #[test]
    fn exact_matches_second_order_in_weak_coupling() {
        let wl = 4.31e7;
        let c = PseudospinCoupling::new([3.0e3, -2.0e3, 1.5e3]);
        for &n in &[8u32, 16, 64] {
            let tau = 1.003 * PI / wl;
            let e = pseudospin_exact_one(&c, wl, n, tau);
            let s = pseudospin_second_order_one(c.kappa_sq, wl, n, tau);
            let dip = 1.0 - e;
            assert!(
                (e - s).abs() <= 1e-3 * dip.max(1e-12),
                "N={n}: exact={e} second={s}"
            );
        }
    }

    #[test]
    fn large_identical_bath_approaches_exponential() {
        // product over n identical weak couplings converges to
        // exp(-(1/8)|g|^2 sum kappa^2)
        let wl = 5.28e6;
        let n_pulses = 16;
        let tau = 1.002 * PI / wl;
        let kappa_sq = 1.0e4; // per-spin dip ~ 1e-6
        let n = 20_000usize;
        let cs = vec![PseudospinCoupling::new([kappa_sq.sqrt(), 0.0, 0.0]); n];
        let prod = pseudospin_signal(&cs, wl, n_pulses, tau, PseudospinBranch::SecondOrder);
        assert!(!prod.fell_back);
        let g2 = crate::model::filter_function_sq_closed(wl, tau, n_pulses);
        let expected = (-(g2 / 8.0) * kappa_sq * n as f64).exp();
        assert_relative_eq!(prod.contrast, expected, max_relative = 1e-3);
    }

    #[test]
    fn monte_carlo_gamma_converges_small_scale() {
        // quick-scale version of the acceptance check: ~1e6 spins
        let s = sample(8.0);
        let n = nv(10e-9, magic_angle());
        let geo = geometric_sum_sampled(&s, &n, 100e-9, 5).unwrap();
        let analytic =
            geometric_factor_reduced(magic_angle(), 10e-9, LayerGeometry::SemiInfinite).unwrap();
        let dev = (geo.gamma_tilde - analytic).abs();
        assert!(
            dev < 4.0 * geo.gamma_tilde_se + 0.01 * analytic,
            "gamma {:e} vs {:e} (se {:e})",
            geo.gamma_tilde,
            analytic,
            geo.gamma_tilde_se
        );
    }

    #[test]
    fn csv_export_shape() {
        let s = sample(0.5);
        let n = nv(8e-9, magic_angle());
        let bath = sample_bath(&s, &n, 80e-9, 21).unwrap();
        let mut buf = Vec::new();
        bath.write_csv(&n, s.gamma_n(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "# schema = nvnmr-bath/1.0");
        assert!(text.contains("# generator = chacha8"));
        assert!(text.contains("x_m,y_m,z_m,kappa_sq"));
        let data_rows = text.lines().filter(|l| !l.starts_with('#')).count() - 1;
        assert_eq!(data_rows, bath.len());
    }
}
