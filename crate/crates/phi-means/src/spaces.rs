//! Metric spaces with enough geometry to optimize on.
//!
//! Five concrete kinds are supported:
//!
//! - `Euclidean(n)`: `R^n` with the `l2` norm; coordinates are the chart.
//! - `Circle`: angles in `(-pi, pi]`, arc-length distance.
//! - `Torus(n)`: product of `n` circles with the flat `l2` product metric.
//! - `Sphere(n)`: unit vectors in `R^(n+1)`, geodesic distance
//!   `arccos <x, y>`.
//! - `Projective(n)`: the sphere with antipodes identified; points carry a
//!   sign-canonical representative (first coordinate of magnitude above
//!   `1e-9` is positive) and `d([x], [y]) = arccos |<x, y>|`.
//!
//! Tangent vectors at a base point use chart components for the flat
//! kinds and ambient components orthogonal to the base for the embedded
//! kinds. `exp_map` and `log_map` are inverse to each other away from cut
//! loci; `log_map` refuses targets within `1e-8` of the base's cut locus.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{axpy, clamp_unit, dot, norm, scale, sub};

/// Unit-norm and chart-invariant tolerance for point validation.
pub const POINT_TOL: f64 = 1e-12;
/// Targets closer than this to the cut locus make the logarithm undefined.
pub const CUT_LOCUS_TOL: f64 = 1e-8;
/// Hard cap on grid sizes produced by [`Space::make_grid`].
pub const MAX_GRID_POINTS: usize = 1 << 22;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
use std::f64::consts::PI;

/// Wrap an angle into the canonical chart `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(TWO_PI);
    if w > PI {
        w - TWO_PI
    } else {
        w
    }
}

/// A point, stored in the chart of its space.
///
/// Serializes as a bare coordinate array; the space tag travels separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

/// A tangent vector attached to a base point.
///
/// Components live in the chart for flat kinds and in the ambient space,
/// orthogonal to the base, for the sphere and projective space. The norm of
/// the components equals the geodesic length of the vector in all cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    pub base: Point,
    pub components: Vec<f64>,
}

impl TangentVector {
    pub fn norm(&self) -> f64 {
        norm(&self.components)
    }
}

/// A geodesic ball; used to restrict grids on unbounded or chart-based kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub center: Point,
    pub radius: f64,
}

/// One of the supported metric spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Space {
    Euclidean { dim: usize },
    Circle,
    Torus { dim: usize },
    Sphere { dim: usize },
    Projective { dim: usize },
}

impl Space {
    /// Intrinsic dimension.
    pub fn dim(&self) -> usize {
        match self {
            Space::Euclidean { dim } | Space::Torus { dim } | Space::Sphere { dim } | Space::Projective { dim } => *dim,
            Space::Circle => 1,
        }
    }

    /// Length of the coordinate vector representing a point.
    pub fn coord_len(&self) -> usize {
        match self {
            Space::Euclidean { dim } | Space::Torus { dim } => *dim,
            Space::Circle => 1,
            Space::Sphere { dim } | Space::Projective { dim } => dim + 1,
        }
    }

    /// Metric diameter, `None` for unbounded kinds.
    pub fn diameter(&self) -> Option<f64> {
        match self {
            Space::Euclidean { .. } => None,
            Space::Circle => Some(PI),
            Space::Torus { dim } => Some(PI * (*dim as f64).sqrt()),
            Space::Sphere { .. } => Some(PI),
            Space::Projective { .. } => Some(PI / 2.0),
        }
    }

    /// Distance from any point to its cut locus, `None` when there is none.
    pub fn cut_radius(&self) -> Option<f64> {
        match self {
            Space::Euclidean { .. } => None,
            Space::Circle | Space::Torus { .. } => Some(PI),
            Space::Sphere { .. } => Some(PI),
            Space::Projective { .. } => Some(PI / 2.0),
        }
    }

    fn check_dim(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(Error::Config(format!("{self:?} must have positive dimension")));
        }
        Ok(())
    }

    /// Construct a validated, canonicalized point from chart coordinates.
    ///
    /// Angles are wrapped into `(-pi, pi]`; sphere coordinates must already
    /// be unit within `1e-12`; projective representatives are sign-flipped
    /// into canonical form.
    pub fn point(&self, coords: Vec<f64>) -> Result<Point> {
        self.check_dim()?;
        if coords.len() != self.coord_len() {
            return Err(Error::InvalidPoint(format!(
                "expected {} coordinates for {self:?}, got {}",
                self.coord_len(),
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPoint("coordinates must be finite".into()));
        }
        match self {
            Space::Euclidean { .. } => Ok(Point(coords)),
            Space::Circle | Space::Torus { .. } => Ok(Point(coords.into_iter().map(wrap_angle).collect())),
            Space::Sphere { .. } => {
                let n = norm(&coords);
                if (n - 1.0).abs() > POINT_TOL {
                    return Err(Error::InvalidPoint(format!("sphere point must be unit, |x| = {n}")));
                }
                Ok(Point(coords))
            }
            Space::Projective { .. } => {
                let n = norm(&coords);
                if (n - 1.0).abs() > POINT_TOL {
                    return Err(Error::InvalidPoint(format!("projective representative must be unit, |x| = {n}")));
                }
                Ok(Point(canonical_sign(coords)))
            }
        }
    }

    /// Project arbitrary ambient/chart coordinates onto the space.
    ///
    /// Normalizes for the embedded kinds (error when the input is too close
    /// to the origin to have a direction) and wraps angles for the flat
    /// ones. Useful for constructing initial guesses.
    pub fn project_point(&self, coords: Vec<f64>) -> Result<Point> {
        match self {
            Space::Sphere { .. } | Space::Projective { .. } => {
                let n = norm(&coords);
                if n < 1e-9 {
                    return Err(Error::InvalidPoint("cannot normalize a near-zero vector".into()));
                }
                self.point(scale(&coords, 1.0 / n))
            }
            _ => self.point(coords),
        }
    }

    /// Validate an existing point against the chart invariants.
    pub fn validate_point(&self, p: &Point) -> Result<()> {
        self.check_dim()?;
        if p.0.len() != self.coord_len() {
            return Err(Error::InvalidPoint(format!(
                "expected {} coordinates for {self:?}, got {}",
                self.coord_len(),
                p.0.len()
            )));
        }
        if p.0.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPoint("coordinates must be finite".into()));
        }
        match self {
            Space::Euclidean { .. } => Ok(()),
            Space::Circle | Space::Torus { .. } => {
                for &a in &p.0 {
                    if !(-PI..=PI + POINT_TOL).contains(&a) || a <= -PI {
                        return Err(Error::InvalidPoint(format!("angle {a} outside (-pi, pi]")));
                    }
                }
                Ok(())
            }
            Space::Sphere { .. } => {
                let n = norm(&p.0);
                if (n - 1.0).abs() > POINT_TOL {
                    return Err(Error::InvalidPoint(format!("sphere point must be unit, |x| = {n}")));
                }
                Ok(())
            }
            Space::Projective { .. } => {
                let n = norm(&p.0);
                if (n - 1.0).abs() > POINT_TOL {
                    return Err(Error::InvalidPoint(format!("projective representative must be unit, |x| = {n}")));
                }
                if !is_canonical_sign(&p.0) {
                    return Err(Error::InvalidPoint("projective representative is not sign-canonical".into()));
                }
                Ok(())
            }
        }
    }

    /// Geodesic distance between two validated points.
    pub fn distance(&self, a: &Point, b: &Point) -> Result<f64> {
        self.validate_point(a)?;
        self.validate_point(b)?;
        Ok(self.distance_unchecked(a, b))
    }

    /// Distance without re-validating; for internal hot loops over points
    /// that are valid by construction.
    pub(crate) fn distance_unchecked(&self, a: &Point, b: &Point) -> f64 {
        match self {
            Space::Euclidean { .. } => {
                let mut acc = 0.0;
                for (x, y) in a.0.iter().zip(&b.0) {
                    let d = x - y;
                    acc += d * d;
                }
                acc.sqrt()
            }
            Space::Circle => wrap_angle(a.0[0] - b.0[0]).abs(),
            Space::Torus { .. } => {
                let mut acc = 0.0;
                for (x, y) in a.0.iter().zip(&b.0) {
                    let d = wrap_angle(x - y);
                    acc += d * d;
                }
                acc.sqrt()
            }
            // atan2 of (sine, cosine) instead of acos of the clamped dot:
            // well conditioned at both ends of the arc. The sine comes from
            // the rejection of a off b, accumulated without a temporary.
            Space::Sphere { .. } => {
                let c = dot(&a.0, &b.0);
                let mut rej2 = 0.0;
                for (x, y) in a.0.iter().zip(&b.0) {
                    let d = x - c * y;
                    rej2 += d * d;
                }
                rej2.sqrt().atan2(c)
            }
            Space::Projective { .. } => {
                let raw = dot(&a.0, &b.0);
                let c = raw.abs();
                let sign = if raw < 0.0 { -1.0 } else { 1.0 };
                let mut rej2 = 0.0;
                for (x, y) in a.0.iter().zip(&b.0) {
                    let d = x - sign * c * y;
                    rej2 += d * d;
                }
                rej2.sqrt().atan2(c)
            }
        }
    }

    /// Build a validated tangent vector from components.
    pub fn tangent(&self, base: &Point, components: Vec<f64>) -> Result<TangentVector> {
        self.validate_point(base)?;
        if components.len() != self.coord_len() {
            return Err(Error::InvalidPoint(format!(
                "expected {} tangent components for {self:?}, got {}",
                self.coord_len(),
                components.len()
            )));
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPoint("tangent components must be finite".into()));
        }
        match self {
            Space::Sphere { .. } | Space::Projective { .. } => {
                let along = dot(&components, &base.0);
                if along.abs() > POINT_TOL * (1.0 + norm(&components)) {
                    return Err(Error::InvalidPoint(format!(
                        "tangent component along the base point has magnitude {along:.3e}"
                    )));
                }
            }
            _ => {}
        }
        Ok(TangentVector { base: base.clone(), components })
    }

    /// Exponential map: follow the geodesic from `v.base` with initial
    /// velocity `v` for unit time.
    pub fn exp_map(&self, v: &TangentVector) -> Result<Point> {
        self.validate_point(&v.base)?;
        Ok(self.exp_map_unchecked(&v.base, &v.components))
    }

    pub(crate) fn exp_map_unchecked(&self, base: &Point, components: &[f64]) -> Point {
        match self {
            Space::Euclidean { .. } => {
                let mut c = base.0.clone();
                axpy(&mut c, 1.0, components);
                Point(c)
            }
            Space::Circle | Space::Torus { .. } => {
                let c = base.0.iter().zip(components).map(|(a, v)| wrap_angle(a + v)).collect();
                Point(c)
            }
            Space::Sphere { .. } => Point(sphere_exp(&base.0, components)),
            Space::Projective { .. } => Point(canonical_sign(sphere_exp(&base.0, components))),
        }
    }

    /// Logarithm map: the tangent vector at `base` whose geodesic reaches
    /// `target` in unit time, with norm equal to the distance.
    ///
    /// Errors with `CutLocus` when `target` is within [`CUT_LOCUS_TOL`] of
    /// the cut locus of `base` (antipode on the sphere, angle `pi` on circle
    /// factors, distance `pi/2` on projective space).
    pub fn log_map(&self, base: &Point, target: &Point) -> Result<TangentVector> {
        self.validate_point(base)?;
        self.validate_point(target)?;
        let components = self.log_map_unchecked(base, target)?;
        Ok(TangentVector { base: base.clone(), components })
    }

    pub(crate) fn log_map_unchecked(&self, base: &Point, target: &Point) -> Result<Vec<f64>> {
        match self {
            Space::Euclidean { .. } => Ok(sub(&target.0, &base.0)),
            Space::Circle | Space::Torus { .. } => {
                let mut c = Vec::with_capacity(base.0.len());
                for (t, b) in target.0.iter().zip(&base.0) {
                    let d = wrap_angle(t - b);
                    if d.abs() > PI - CUT_LOCUS_TOL {
                        return Err(Error::CutLocus(format!(
                            "angle separation {:.9} is within {CUT_LOCUS_TOL:.1e} of pi",
                            d.abs()
                        )));
                    }
                    c.push(d);
                }
                Ok(c)
            }
            Space::Sphere { .. } => {
                let c = clamp_unit(dot(&base.0, &target.0));
                let d = c.acos();
                if d > PI - CUT_LOCUS_TOL {
                    return Err(Error::CutLocus(format!(
                        "target at distance {d:.9} is within {CUT_LOCUS_TOL:.1e} of the antipode"
                    )));
                }
                Ok(sphere_log_from_cos(&base.0, &target.0, c, d))
            }
            Space::Projective { .. } => {
                let raw = dot(&base.0, &target.0);
                let c = clamp_unit(raw.abs());
                let d = c.acos();
                if d > PI / 2.0 - CUT_LOCUS_TOL {
                    return Err(Error::CutLocus(format!(
                        "target at distance {d:.9} is within {CUT_LOCUS_TOL:.1e} of the cut radius pi/2"
                    )));
                }
                // Use the representative of `target` on the same side as `base`.
                let sign = if raw < 0.0 { -1.0 } else { 1.0 };
                let flipped = scale(&target.0, sign);
                Ok(sphere_log_from_cos(&base.0, &flipped, c, d))
            }
        }
    }

    /// A deterministic orthonormal basis of the tangent space at `base`.
    ///
    /// For embedded kinds, Gram-Schmidt over the standard ambient basis
    /// against the base point; for flat kinds, the standard chart basis.
    pub fn tangent_basis(&self, base: &Point) -> Result<Vec<Vec<f64>>> {
        self.validate_point(base)?;
        let dim = self.dim();
        match self {
            Space::Euclidean { .. } | Space::Circle | Space::Torus { .. } => Ok((0..dim)
                .map(|i| {
                    let mut e = vec![0.0; dim];
                    e[i] = 1.0;
                    e
                })
                .collect()),
            Space::Sphere { .. } | Space::Projective { .. } => {
                let len = self.coord_len();
                let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
                for i in 0..len {
                    if basis.len() == dim {
                        break;
                    }
                    let mut v = vec![0.0; len];
                    v[i] = 1.0;
                    let along = dot(&v, &base.0);
                    axpy(&mut v, -along, &base.0);
                    for b in &basis {
                        let along = dot(&v, b);
                        axpy(&mut v, -along, b);
                    }
                    let n = norm(&v);
                    if n > 1e-8 {
                        basis.push(scale(&v, 1.0 / n));
                    }
                }
                if basis.len() != dim {
                    return Err(Error::InvalidPoint("failed to complete a tangent basis".into()));
                }
                Ok(basis)
            }
        }
    }

    /// Build a finite grid of points.
    ///
    /// - `Circle`/`Torus` without a region: a uniform partition with
    ///   `resolution` nodes per angle (no duplicated seam point).
    /// - `Euclidean`: requires a region; an inclusive `resolution`-node
    ///   lattice on the coordinate box `center +- radius`.
    /// - `Sphere`/`Projective`: requires a region; an inclusive lattice on
    ///   the tangent box `[-radius, radius]^dim` at the region center,
    ///   mapped through `exp_map`.
    /// - `Circle`/`Torus` with a region: the boxed variant on angles.
    ///
    /// Errors with `Resolution` when the grid would exceed
    /// [`MAX_GRID_POINTS`] and `RegionRequired` where a region is mandatory.
    pub fn make_grid(&self, resolution: usize, region: Option<&Region>) -> Result<Vec<Point>> {
        self.check_dim()?;
        if resolution < 2 {
            return Err(Error::Resolution("grid resolution must be at least 2".into()));
        }
        let dim = self.dim();
        let total = (resolution as u128).pow(dim as u32);
        if total > MAX_GRID_POINTS as u128 {
            return Err(Error::Resolution(format!(
                "resolution {resolution} over dimension {dim} yields {total} points (cap {MAX_GRID_POINTS})"
            )));
        }

        match (self, region) {
            (Space::Circle | Space::Torus { .. }, None) => {
                // Periodic partition: resolution nodes per angle over (-pi, pi].
                let axes: Vec<Vec<f64>> = (0..dim)
                    .map(|_| (0..resolution).map(|k| wrap_angle(-PI + TWO_PI * k as f64 / resolution as f64)).collect())
                    .collect();
                Ok(cartesian(&axes).into_iter().map(Point).collect())
            }
            (Space::Euclidean { .. } | Space::Circle | Space::Torus { .. }, Some(region)) => {
                self.validate_point(&region.center)?;
                if !(region.radius > 0.0) {
                    return Err(Error::Resolution("region radius must be positive".into()));
                }
                let axes: Vec<Vec<f64>> = (0..dim)
                    .map(|i| {
                        let c = region.center.0[i];
                        linspace(c - region.radius, c + region.radius, resolution)
                    })
                    .collect();
                let wrap = !matches!(self, Space::Euclidean { .. });
                Ok(cartesian(&axes)
                    .into_iter()
                    .map(|mut c| {
                        if wrap {
                            for a in c.iter_mut() {
                                *a = wrap_angle(*a);
                            }
                        }
                        Point(c)
                    })
                    .collect())
            }
            (Space::Euclidean { .. }, None) => {
                Err(Error::RegionRequired("euclidean grids need a bounding region".into()))
            }
            (Space::Sphere { .. } | Space::Projective { .. }, Some(region)) => {
                self.validate_point(&region.center)?;
                if !(region.radius > 0.0) {
                    return Err(Error::Resolution("region radius must be positive".into()));
                }
                let basis = self.tangent_basis(&region.center)?;
                let axes: Vec<Vec<f64>> =
                    (0..dim).map(|_| linspace(-region.radius, region.radius, resolution)).collect();
                Ok(cartesian(&axes)
                    .into_iter()
                    .map(|coeffs| {
                        let mut v = vec![0.0; self.coord_len()];
                        for (c, b) in coeffs.iter().zip(&basis) {
                            axpy(&mut v, *c, b);
                        }
                        self.exp_map_unchecked(&region.center, &v)
                    })
                    .collect())
            }
            (Space::Sphere { .. } | Space::Projective { .. }, None) => {
                Err(Error::RegionRequired("sphere and projective grids need a tangent region".into()))
            }
        }
    }

    /// Parse a `kind:dim` descriptor such as `sphere:2` or `circle`.
    pub fn parse(text: &str) -> Result<Space> {
        let (kind, dim) = match text.split_once(':') {
            Some((k, d)) => {
                let dim: usize = d
                    .parse()
                    .map_err(|_| Error::Config(format!("bad dimension in space descriptor `{text}`")))?;
                (k, Some(dim))
            }
            None => (text, None),
        };
        let space = match (kind, dim) {
            ("euclidean", Some(d)) => Space::Euclidean { dim: d },
            ("circle", None) => Space::Circle,
            ("torus", Some(d)) => Space::Torus { dim: d },
            ("sphere", Some(d)) => Space::Sphere { dim: d },
            ("projective", Some(d)) => Space::Projective { dim: d },
            _ => {
                return Err(Error::Config(format!(
                    "unknown space descriptor `{text}` (expected euclidean:N, circle, torus:N, sphere:N, projective:N)"
                )))
            }
        };
        space.check_dim()?;
        Ok(space)
    }

    /// Inverse of [`Space::parse`].
    pub fn descriptor(&self) -> String {
        match self {
            Space::Euclidean { dim } => format!("euclidean:{dim}"),
            Space::Circle => "circle".into(),
            Space::Torus { dim } => format!("torus:{dim}"),
            Space::Sphere { dim } => format!("sphere:{dim}"),
            Space::Projective { dim } => format!("projective:{dim}"),
        }
    }
}

/// Sphere exponential: `cos(|v|) m + sin(|v|) v / |v|`, renormalized.
fn sphere_exp(m: &[f64], v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    if n < 1e-15 {
        return m.to_vec();
    }
    let mut out = scale(m, n.cos());
    axpy(&mut out, n.sin() / n, v);
    let out_norm = norm(&out);
    scale(&out, 1.0 / out_norm)
}

/// Sphere logarithm given precomputed `c = cos d` and `d`.
///
/// Projects the target off the base and rescales the projection to length
/// `d`; computing the projection norm directly is stabler than
/// `sqrt(1 - c^2)` near the poles.
fn sphere_log_from_cos(m: &[f64], p: &[f64], c: f64, d: f64) -> Vec<f64> {
    let mut v = p.to_vec();
    axpy(&mut v, -c, m);
    let nv = norm(&v);
    if nv < 1e-15 || d < 1e-15 {
        return vec![0.0; m.len()];
    }
    scale(&v, d / nv)
}

/// Flip signs so the first coordinate of magnitude above `1e-9` is positive.
fn canonical_sign(mut coords: Vec<f64>) -> Vec<f64> {
    for &c in coords.iter() {
        if c.abs() > 1e-9 {
            if c < 0.0 {
                for x in coords.iter_mut() {
                    *x = -*x;
                }
            }
            break;
        }
    }
    coords
}

fn is_canonical_sign(coords: &[f64]) -> bool {
    for &c in coords {
        if c.abs() > 1e-9 {
            return c > 0.0;
        }
    }
    true
}

/// Inclusive linear spacing with `n >= 2` nodes.
fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Cartesian product of per-axis node lists, first axis slowest.
fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for &v in axis {
                let mut c = prefix.clone();
                c.push(v);
                next.push(c);
            }
        }
        out = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sphere2() -> Space {
        Space::Sphere { dim: 2 }
    }

    #[test]
    fn circle_distance_wraps() {
        let s = Space::Circle;
        let a = s.point(vec![-3.0]).unwrap();
        let b = s.point(vec![3.0]).unwrap();
        assert_relative_eq!(s.distance(&a, &b).unwrap(), TWO_PI - 6.0, epsilon = 1e-12);
    }

    #[test]
    fn sphere_distance_orthogonal() {
        let s = sphere2();
        let a = s.point(vec![1.0, 0.0, 0.0]).unwrap();
        let b = s.point(vec![0.0, 0.0, 1.0]).unwrap();
        assert_relative_eq!(s.distance(&a, &b).unwrap(), PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn torus_distance_is_l2_of_arc_distances() {
        let s = Space::Torus { dim: 2 };
        let a = s.point(vec![3.0, 0.0]).unwrap();
        let b = s.point(vec![-3.0, 1.0]).unwrap();
        let d0 = TWO_PI - 6.0;
        assert_relative_eq!(s.distance(&a, &b).unwrap(), (d0 * d0 + 1.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn sphere_exp_quarter_turn() {
        let s = sphere2();
        let base = s.point(vec![0.0, 0.0, 1.0]).unwrap();
        let v = s.tangent(&base, vec![PI / 2.0, 0.0, 0.0]).unwrap();
        let p = s.exp_map(&v).unwrap();
        assert_relative_eq!(p.0[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(p.0[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(p.0[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn exp_log_round_trip_on_sphere() {
        let s = sphere2();
        let base = s.point(vec![0.0, 0.0, 1.0]).unwrap();
        let raw = [0.3, -0.8, 0.52];
        let n = norm(&raw);
        let target = s.point(scale(&raw, 1.0 / n)).unwrap();
        let v = s.log_map(&base, &target).unwrap();
        assert_relative_eq!(v.norm(), s.distance(&base, &target).unwrap(), epsilon = 1e-12);
        let back = s.exp_map(&v).unwrap();
        assert!(s.distance(&back, &target).unwrap() < 1e-12);
    }

    #[test]
    fn circle_log_is_signed_arc() {
        let s = Space::Circle;
        let base = s.point(vec![0.0]).unwrap();
        let target = s.point(vec![1.0]).unwrap();
        assert_relative_eq!(s.log_map(&base, &target).unwrap().components[0], 1.0, epsilon = 1e-12);
        let behind = s.point(vec![-0.5]).unwrap();
        assert_relative_eq!(s.log_map(&base, &behind).unwrap().components[0], -0.5, epsilon = 1e-12);
    }

    #[test]
    fn log_refuses_cut_locus() {
        let s = sphere2();
        let base = s.point(vec![0.0, 0.0, 1.0]).unwrap();
        let anti = s.point(vec![0.0, 0.0, -1.0]).unwrap();
        assert!(matches!(s.log_map(&base, &anti), Err(Error::CutLocus(_))));

        let c = Space::Circle;
        let z = c.point(vec![0.0]).unwrap();
        let pi_pt = c.point(vec![PI]).unwrap();
        assert!(matches!(c.log_map(&z, &pi_pt), Err(Error::CutLocus(_))));
    }

    #[test]
    fn projective_identifies_antipodes() {
        let s = Space::Projective { dim: 2 };
        let a = s.point(vec![-1.0, 0.0, 0.0]).unwrap();
        // Canonicalized to +e1.
        assert_relative_eq!(a.0[0], 1.0);
        let b = s.point(vec![0.96, 0.0, 0.28]).unwrap();
        let d = s.distance(&a, &b).unwrap();
        assert!(d < PI / 2.0);
        // Representative sign cannot change the distance.
        let b_flipped = s.point(vec![-0.96, 0.0, -0.28]).unwrap();
        assert_relative_eq!(s.distance(&a, &b_flipped).unwrap(), d, epsilon = 1e-12);
    }

    #[test]
    fn projective_exp_log_round_trip() {
        let s = Space::Projective { dim: 2 };
        let base = s.point(vec![0.0, 0.0, 1.0]).unwrap();
        let v = s.tangent(&base, vec![0.4, -0.2, 0.0]).unwrap();
        let p = s.exp_map(&v).unwrap();
        let back = s.log_map(&base, &p).unwrap();
        for (x, y) in back.components.iter().zip(&v.components) {
            assert_relative_eq!(x, y, epsilon = 1e-10);
        }
    }

    #[test]
    fn circle_global_grid_is_uniform() {
        let s = Space::Circle;
        let grid = s.make_grid(4, None).unwrap();
        let mut angles: Vec<f64> = grid.iter().map(|p| p.0[0]).collect();
        angles.sort_by(f64::total_cmp);
        // Partition nodes -pi, -pi/2, 0, pi/2; the seam node -pi wraps to pi.
        assert_relative_eq!(angles[0], -PI / 2.0, epsilon = 1e-12);
        assert_relative_eq!(angles[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(angles[2], PI / 2.0, epsilon = 1e-12);
        assert_relative_eq!(angles[3], PI, epsilon = 1e-12);
    }

    #[test]
    fn euclidean_grid_needs_region_and_is_inclusive() {
        let s = Space::Euclidean { dim: 1 };
        assert!(matches!(s.make_grid(11, None), Err(Error::RegionRequired(_))));
        let region = Region { center: s.point(vec![0.0]).unwrap(), radius: 1.0 };
        let grid = s.make_grid(11, Some(&region)).unwrap();
        assert_eq!(grid.len(), 11);
        assert_relative_eq!(grid[0].0[0], -1.0);
        assert_relative_eq!(grid[5].0[0], 0.0);
        assert_relative_eq!(grid[10].0[0], 1.0);
    }

    #[test]
    fn sphere_grid_covers_tangent_box() {
        let s = sphere2();
        let center = s.point(vec![0.0, 0.0, 1.0]).unwrap();
        let region = Region { center: center.clone(), radius: 0.5 };
        let grid = s.make_grid(5, Some(&region)).unwrap();
        assert_eq!(grid.len(), 25);
        // Every grid point stays within the box diagonal of the center.
        let max_d = 0.5 * 2f64.sqrt() + 1e-9;
        for p in &grid {
            assert!(s.distance(&center, p).unwrap() <= max_d);
        }
        // The center itself is the middle node.
        assert!(s.distance(&center, &grid[12]).unwrap() < 1e-12);
    }

    #[test]
    fn grid_cap_is_enforced() {
        let s = Space::Torus { dim: 8 };
        assert!(matches!(s.make_grid(16, None), Err(Error::Resolution(_))));
    }

    #[test]
    fn tangent_basis_is_orthonormal() {
        let s = sphere2();
        let base = s.point(scale(&[1.0, 2.0, -2.0], 1.0 / 3.0)).unwrap();
        let basis = s.tangent_basis(&base).unwrap();
        assert_eq!(basis.len(), 2);
        for (i, u) in basis.iter().enumerate() {
            assert_relative_eq!(norm(u), 1.0, epsilon = 1e-12);
            assert!(dot(u, &base.0).abs() < 1e-12);
            for v in basis.iter().skip(i + 1) {
                assert!(dot(u, v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn parse_round_trip() {
        for text in ["euclidean:3", "circle", "torus:2", "sphere:2", "projective:4"] {
            let s = Space::parse(text).unwrap();
            assert_eq!(s.descriptor(), text);
        }
        assert!(Space::parse("sphere").is_err());
        assert!(Space::parse("klein:2").is_err());
    }

    #[test]
    fn wrap_angle_lands_in_half_open_interval() {
        assert_relative_eq!(wrap_angle(-PI), PI);
        assert_relative_eq!(wrap_angle(3.0 * PI), PI);
        assert_relative_eq!(wrap_angle(TWO_PI + 0.25), 0.25, epsilon = 1e-12);
        assert!(wrap_angle(1e6) <= PI && wrap_angle(1e6) > -PI);
    }

    #[test]
    fn point_serializes_as_bare_array() {
        let p = Point(vec![0.5, -0.5]);
        assert_eq!(serde_json::to_string(&p).unwrap(), "[0.5,-0.5]");
    }
}
