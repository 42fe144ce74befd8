//! Seeded generation of samples and measures.
//!
//! Every generator takes an explicit 64-bit seed and uses the ChaCha8
//! stream cipher as its generator, so output is identical across
//! platforms and runs. Independent streams are split off a root seed with
//! [`derive_seed`], a fixed splitmix64 finalizer, which lets replicates
//! run in parallel without sharing generator state.
//!
//! [`isotropic_sample`] draws from densities of the form
//! `f(d(x, center))` with respect to the volume measure: a radius is
//! drawn by inverse transform from `f(r) * J(r)` where `J` is the area of
//! the geodesic sphere of radius `r`, then a uniform tangent direction,
//! then the exponential map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::Measure;
use crate::spaces::{Point, Space};
use crate::util::{axpy, dot, norm, scale};

use std::f64::consts::PI;

/// Number of quadrature nodes in the radial inverse-CDF table.
const RADIAL_NODES: usize = 4096;

/// Mix a stream index into a root seed (splitmix64 finalizer).
///
/// Distinct streams of the same root give statistically independent
/// generators; the mapping is a fixed bijection-based hash, identical on
/// every platform.
pub fn derive_seed(root: u64, stream: u64) -> u64 {
    let mut z = root ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A deterministic generator for the given root seed and stream index.
pub fn rng_for(root: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, stream))
}

/// Decreasing radial density profiles `f(r)` for isotropic laws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RadialProfile {
    /// `f(r) = exp(-rate * r)`, unbounded support.
    ExpDecay { rate: f64 },
    /// `f(r) = max(0, 1 - r / cutoff)`, support `[0, cutoff]`.
    LinearDecay { cutoff: f64 },
    /// `f(r) = 1` on `[0, radius]`, `0` beyond.
    StepDecay { radius: f64 },
}

impl RadialProfile {
    pub fn validate(&self) -> Result<()> {
        let (name, v) = match self {
            RadialProfile::ExpDecay { rate } => ("rate", *rate),
            RadialProfile::LinearDecay { cutoff } => ("cutoff", *cutoff),
            RadialProfile::StepDecay { radius } => ("radius", *radius),
        };
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Config(format!("profile {name} must be positive and finite, got {v}")));
        }
        Ok(())
    }

    /// Evaluate `f(r)` for `r >= 0`.
    pub fn density(&self, r: f64) -> f64 {
        match self {
            RadialProfile::ExpDecay { rate } => (-rate * r).exp(),
            RadialProfile::LinearDecay { cutoff } => (1.0 - r / cutoff).max(0.0),
            RadialProfile::StepDecay { radius } => {
                if r <= *radius {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Upper end of the support, `None` when unbounded.
    pub fn support_max(&self) -> Option<f64> {
        match self {
            RadialProfile::ExpDecay { .. } => None,
            RadialProfile::LinearDecay { cutoff } => Some(*cutoff),
            RadialProfile::StepDecay { radius } => Some(*radius),
        }
    }

    /// Parse `exp:RATE`, `linear:CUTOFF`, or `step:RADIUS`.
    pub fn parse(text: &str) -> Result<RadialProfile> {
        let (kind, value) = text
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("bad profile `{text}` (expected kind:value)")))?;
        let v: f64 = value
            .parse()
            .map_err(|_| Error::Config(format!("bad profile parameter in `{text}`")))?;
        let profile = match kind {
            "exp" => RadialProfile::ExpDecay { rate: v },
            "linear" => RadialProfile::LinearDecay { cutoff: v },
            "step" => RadialProfile::StepDecay { radius: v },
            _ => {
                return Err(Error::Config(format!(
                    "unknown profile `{text}` (expected exp:RATE, linear:CUTOFF, step:RADIUS)"
                )))
            }
        };
        profile.validate()?;
        Ok(profile)
    }

    /// Inverse of [`RadialProfile::parse`].
    pub fn label(&self) -> String {
        match self {
            RadialProfile::ExpDecay { rate } => format!("exp:{rate}"),
            RadialProfile::LinearDecay { cutoff } => format!("linear:{cutoff}"),
            RadialProfile::StepDecay { radius } => format!("step:{radius}"),
        }
    }
}

/// `n` independent uniform points on `Sphere(dim)`, as normalized
/// standard Gaussian vectors. Deterministic per seed.
pub fn uniform_sphere(n: usize, dim: usize, seed: u64) -> Result<Vec<Point>> {
    if n == 0 || dim == 0 {
        return Err(Error::Config("uniform sphere sampling needs n >= 1 and dim >= 1".into()));
    }
    let space = Space::Sphere { dim };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        loop {
            let v: Vec<f64> = (0..dim + 1).map(|_| rng.sample(StandardNormal)).collect();
            let len = norm(&v);
            if len > 1e-8 {
                out.push(space.point(scale(&v, 1.0 / len))?);
                break;
            }
        }
    }
    Ok(out)
}

/// The `n`-point uniform quadrature of the rotation-invariant law on the
/// circle: equal weights at angles `2 pi k / n - pi`.
///
/// This is deterministic despite the seed parameter, which exists so all
/// measure constructors share a signature; the seed is ignored.
pub fn haar_circle(n: usize, _seed: u64) -> Result<Measure> {
    if n == 0 {
        return Err(Error::Config("circle quadrature needs n >= 1".into()));
    }
    let space = Space::Circle;
    let atoms = (0..n)
        .map(|k| space.point(vec![2.0 * PI * k as f64 / n as f64 - PI]))
        .collect::<Result<Vec<_>>>()?;
    Measure::equal_weights(space, atoms)
}

/// Area of the geodesic sphere of radius `r`, up to constants.
fn sphere_area_factor(space: &Space, r: f64) -> f64 {
    let d = space.dim();
    match space {
        Space::Sphere { .. } => r.sin().max(0.0).powi(d as i32 - 1),
        Space::Euclidean { .. } | Space::Torus { .. } => r.powi(d as i32 - 1),
        Space::Circle => 1.0,
        Space::Projective { .. } => f64::NAN,
    }
}

/// Radius range of the quadrature for a space/profile pair.
fn radial_range(space: &Space, profile: &RadialProfile) -> Result<f64> {
    let support = profile.support_max();
    match space {
        Space::Projective { .. } => Err(Error::UnsupportedSpace(
            "isotropic sampling on projective space is not supported (antipodal identification)".into(),
        )),
        Space::Torus { .. } => {
            // Beyond per-coordinate angle pi the exponential map stops being
            // injective and the sphere-area factor below is wrong, so only
            // profiles supported inside that radius are accepted.
            match support {
                Some(s) if s <= PI => Ok(s),
                Some(s) => Err(Error::Config(format!(
                    "profile support {s} exceeds the torus injectivity radius pi"
                ))),
                None => Err(Error::Config(
                    "unbounded profiles are not supported on the torus (injectivity radius pi)".into(),
                )),
            }
        }
        Space::Sphere { .. } | Space::Circle => {
            let diam = space.diameter().unwrap();
            if let Some(s) = support {
                if s >= diam && matches!(profile, RadialProfile::StepDecay { .. }) {
                    return Err(Error::Config(format!(
                        "step profile with radius {s} is constant on the whole radius range [0, {diam:.4}]"
                    )));
                }
            }
            Ok(support.map_or(diam, |s| s.min(diam)))
        }
        Space::Euclidean { dim } => match support {
            Some(s) => Ok(s),
            // Truncate unbounded profiles where the remaining mass is far
            // below rounding noise.
            None => match profile {
                RadialProfile::ExpDecay { rate } => Ok((50.0 + 10.0 * *dim as f64) / rate),
                _ => unreachable!("only the exponential profile has unbounded support"),
            },
        },
    }
}

/// Cumulative trapezoid table of `f(r) * J(r)` for inverse sampling.
struct RadialTable {
    radii: Vec<f64>,
    cdf: Vec<f64>,
}

impl RadialTable {
    fn build(space: &Space, profile: &RadialProfile, r_max: f64) -> Result<RadialTable> {
        let h = r_max / (RADIAL_NODES - 1) as f64;
        let radii: Vec<f64> = (0..RADIAL_NODES).map(|i| i as f64 * h).collect();
        let weights: Vec<f64> =
            radii.iter().map(|&r| profile.density(r) * sphere_area_factor(space, r)).collect();
        let mut cdf = vec![0.0; RADIAL_NODES];
        for i in 1..RADIAL_NODES {
            cdf[i] = cdf[i - 1] + 0.5 * (weights[i - 1] + weights[i]) * h;
        }
        let total = cdf[RADIAL_NODES - 1];
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Config("radial density has no mass on the radius range".into()));
        }
        for c in cdf.iter_mut() {
            *c /= total;
        }
        Ok(RadialTable { radii, cdf })
    }

    fn invert(&self, u: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c < u).min(RADIAL_NODES - 1).max(1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let (r0, r1) = (self.radii[i - 1], self.radii[i]);
        if c1 - c0 <= f64::EPSILON {
            return r1;
        }
        r0 + (r1 - r0) * (u - c0) / (c1 - c0)
    }
}

/// A uniform unit tangent direction at `center`, drawn from `rng`.
fn uniform_tangent_direction(space: &Space, center: &Point, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..space.coord_len()).map(|_| rng.sample(StandardNormal)).collect();
        if matches!(space, Space::Sphere { .. }) {
            let along = dot(&v, &center.0);
            axpy(&mut v, -along, &center.0);
        }
        let len = norm(&v);
        if len > 1e-8 {
            return scale(&v, 1.0 / len);
        }
    }
}

/// `n` independent draws from the law with density proportional to
/// `f(d(x, center))` against the volume measure.
///
/// Each draw takes a radius from the inverse-CDF table, then a uniform
/// tangent direction, then follows `exp_map`. Projective space is not
/// supported; on the torus the profile must be supported inside the
/// injectivity radius `pi`.
pub fn isotropic_sample(
    space: &Space,
    center: &Point,
    profile: &RadialProfile,
    n: usize,
    seed: u64,
) -> Result<Vec<Point>> {
    if n == 0 {
        return Err(Error::Config("isotropic sampling needs n >= 1".into()));
    }
    profile.validate()?;
    space.validate_point(center)?;
    let r_max = radial_range(space, profile)?;
    let table = RadialTable::build(space, profile, r_max)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        // Radius first, then direction: the draw order is part of the
        // reproducibility contract.
        let r = table.invert(rng.gen::<f64>());
        let dir = uniform_tangent_direction(space, center, &mut rng);
        out.push(space.exp_map_unchecked(center, &scale(&dir, r)));
    }
    Ok(out)
}

/// The equal-weight measure of a sample; duplicates keep their
/// multiplicity.
pub fn empirical_measure(points: Vec<Point>, space: Space) -> Result<Measure> {
    Measure::equal_weights(space, points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::empirical_loss;
    use crate::phi::Phi;
    use approx::assert_relative_eq;

    #[test]
    fn derive_seed_separates_streams() {
        assert_eq!(derive_seed(3, 5), derive_seed(3, 5));
        assert_ne!(derive_seed(3, 5), derive_seed(3, 6));
        assert_ne!(derive_seed(3, 5), derive_seed(4, 5));
    }

    #[test]
    fn uniform_sphere_is_unit_and_deterministic() {
        let a = uniform_sphere(100, 2, 11).unwrap();
        let b = uniform_sphere(100, 2, 11).unwrap();
        assert_eq!(a, b);
        for p in &a {
            assert_relative_eq!(norm(&p.0), 1.0, epsilon = 1e-12);
        }
        assert_ne!(a, uniform_sphere(100, 2, 12).unwrap());
    }

    #[test]
    fn uniform_sphere_mean_is_near_zero() {
        let pts = uniform_sphere(1000, 2, 5).unwrap();
        let mut mean = vec![0.0; 3];
        for p in &pts {
            axpy(&mut mean, 1.0 / 1000.0, &p.0);
        }
        assert!(norm(&mean) <= 0.1, "mean norm {}", norm(&mean));
    }

    #[test]
    fn circle_quadrature_nodes() {
        let mu = haar_circle(4, 999).unwrap();
        let mut angles: Vec<f64> = mu.atoms().iter().map(|p| p.0[0]).collect();
        angles.sort_by(f64::total_cmp);
        let expect = [-PI / 2.0, 0.0, PI / 2.0, PI];
        for (a, e) in angles.iter().zip(expect) {
            assert_relative_eq!(a, &e, epsilon = 1e-12);
        }
        assert!(mu.weights().iter().all(|&w| (w - 0.25).abs() < 1e-15));

        let single = haar_circle(1, 0).unwrap();
        assert_eq!(single.len(), 1);
        assert_relative_eq!(single.weights()[0], 1.0);
    }

    #[test]
    fn circle_quadrature_linear_loss() {
        let mu = haar_circle(360, 0).unwrap();
        let phi = Phi::linear(1.0).unwrap();
        let x = mu.atoms()[0].clone();
        let loss = empirical_loss(&phi, &mu, &x).unwrap();
        assert!((loss - PI / 2.0).abs() < 0.01, "loss {loss}");
    }

    #[test]
    fn step_profile_stays_in_support() {
        let s = Space::Sphere { dim: 2 };
        let center = s.point(vec![0.0, 0.0, 1.0]).unwrap();
        let profile = RadialProfile::StepDecay { radius: 0.5 };
        let pts = isotropic_sample(&s, &center, &profile, 10_000, 21).unwrap();
        for p in &pts {
            assert!(s.distance_unchecked(&center, p) <= 0.5 + 1e-9);
        }
    }

    #[test]
    fn exp_profile_median_on_the_line() {
        let s = Space::Euclidean { dim: 1 };
        let center = s.point(vec![0.0]).unwrap();
        let profile = RadialProfile::ExpDecay { rate: 2.0 };
        let pts = isotropic_sample(&s, &center, &profile, 10_000, 3).unwrap();
        let mut radii: Vec<f64> = pts.iter().map(|p| p.0[0].abs()).collect();
        radii.sort_by(f64::total_cmp);
        let median = radii[radii.len() / 2];
        let expect = 0.5 * 2f64.ln();
        assert!((median - expect).abs() < 0.02, "median {median} vs {expect}");
    }

    #[test]
    fn radial_law_passes_ks_on_sphere() {
        // Radius density on Sphere(2) with exp(-r): f(r) sin(r); its CDF
        // has the closed form below.
        let cdf = |r: f64| {
            let raw = 0.5 * (1.0 - (-r).exp() * (r.sin() + r.cos()));
            let total = 0.5 * (1.0 + (-PI).exp());
            raw / total
        };
        let s = Space::Sphere { dim: 2 };
        let center = s.point(vec![0.0, 0.0, 1.0]).unwrap();
        let profile = RadialProfile::ExpDecay { rate: 1.0 };
        let n = 2000;
        let threshold = 2.0 / (n as f64).sqrt();
        let mut failures = 0;
        for seed in 0..20 {
            let pts = isotropic_sample(&s, &center, &profile, n, seed).unwrap();
            let mut radii: Vec<f64> = pts.iter().map(|p| s.distance_unchecked(&center, p)).collect();
            radii.sort_by(f64::total_cmp);
            let mut ks = 0.0f64;
            for (i, &r) in radii.iter().enumerate() {
                let f = cdf(r);
                ks = ks.max((f - i as f64 / n as f64).abs());
                ks = ks.max((f - (i + 1) as f64 / n as f64).abs());
            }
            if ks > threshold {
                failures += 1;
            }
        }
        assert!(failures <= 1, "{failures} of 20 seeds exceeded the KS threshold");
    }

    #[test]
    fn directions_have_no_preferred_axis() {
        let s = Space::Sphere { dim: 2 };
        let center = s.point(vec![0.0, 0.0, 1.0]).unwrap();
        let profile = RadialProfile::LinearDecay { cutoff: 1.0 };
        let n = 4000;
        let pts = isotropic_sample(&s, &center, &profile, n, 17).unwrap();
        let mut mean = vec![0.0; 3];
        for p in &pts {
            let log = s.log_map_unchecked(&center, p).unwrap();
            let len = norm(&log);
            if len > 1e-12 {
                axpy(&mut mean, 1.0 / (n as f64 * len), &log);
            }
        }
        assert!(norm(&mean) <= 5.0 / (n as f64).sqrt(), "direction bias {}", norm(&mean));
    }

    #[test]
    fn isotropic_sampling_is_deterministic() {
        let s = Space::Torus { dim: 2 };
        let center = s.point(vec![0.5, -0.5]).unwrap();
        let profile = RadialProfile::StepDecay { radius: 1.0 };
        let a = isotropic_sample(&s, &center, &profile, 50, 8).unwrap();
        let b = isotropic_sample(&s, &center, &profile, 50, 8).unwrap();
        assert_eq!(a, b);
        for p in &a {
            assert!(s.distance_unchecked(&center, p) <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn torus_rejects_unbounded_profiles() {
        let s = Space::Torus { dim: 2 };
        let center = s.point(vec![0.0, 0.0]).unwrap();
        let exp = RadialProfile::ExpDecay { rate: 1.0 };
        assert!(isotropic_sample(&s, &center, &exp, 10, 0).is_err());
        let wide = RadialProfile::StepDecay { radius: 4.0 };
        assert!(isotropic_sample(&s, &center, &wide, 10, 0).is_err());
    }

    #[test]
    fn projective_space_is_unsupported() {
        let s = Space::Projective { dim: 2 };
        let center = s.point(vec![0.0, 0.0, 1.0]).unwrap();
        let profile = RadialProfile::StepDecay { radius: 0.5 };
        assert!(matches!(
            isotropic_sample(&s, &center, &profile, 10, 0),
            Err(Error::UnsupportedSpace(_))
        ));
    }

    #[test]
    fn constant_step_profile_on_sphere_is_rejected() {
        let s = Space::Sphere { dim: 2 };
        let center = s.point(vec![0.0, 0.0, 1.0]).unwrap();
        let profile = RadialProfile::StepDecay { radius: 10.0 };
        assert!(isotropic_sample(&s, &center, &profile, 10, 0).is_err());
    }

    #[test]
    fn empirical_measure_keeps_multiplicity() {
        let s = Space::Euclidean { dim: 1 };
        let p = s.point(vec![1.0]).unwrap();
        let mu = empirical_measure(vec![p.clone(), p.clone(), s.point(vec![0.0]).unwrap()], s).unwrap();
        assert_eq!(mu.len(), 3);
        assert!(mu.weights().iter().all(|&w| (w - 1.0 / 3.0).abs() < 1e-15));
        assert!(empirical_measure(vec![], s).is_err());
    }

    #[test]
    fn profile_parse_and_serde() {
        for text in ["exp:2", "linear:1.5", "step:0.5"] {
            let p = RadialProfile::parse(text).unwrap();
            assert_eq!(p.label(), text);
        }
        assert!(RadialProfile::parse("exp:-1").is_err());
        assert!(RadialProfile::parse("gauss:1").is_err());
        let p = RadialProfile::ExpDecay { rate: 2.0 };
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"{"kind":"exp-decay","rate":2.0}"#);
        assert_eq!(serde_json::from_str::<RadialProfile>(&json).unwrap(), p);
    }

    #[test]
    fn profiles_are_decreasing() {
        let profiles = [
            RadialProfile::ExpDecay { rate: 1.5 },
            RadialProfile::LinearDecay { cutoff: 2.0 },
            RadialProfile::StepDecay { radius: 1.0 },
        ];
        for p in profiles {
            let mut prev = f64::INFINITY;
            for i in 0..100 {
                let v = p.density(i as f64 * 0.05);
                assert!(v <= prev + 1e-15);
                prev = v;
            }
        }
    }
}
