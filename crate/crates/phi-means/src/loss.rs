//! The loss functional behind a phi-mean, its gradient, and the bounds
//! used for certified grid pruning.
//!
//! A [`Measure`] is a finite weighted point set with total mass one. The
//! loss of a candidate `x` is `F(x) = sum_j w_j phi(d(x, X_j))`; phi-means
//! are its minimizers. [`loss_gradient`] returns the ascent gradient of
//! `F`; solvers step against it. [`lipschitz_bound`] and
//! [`diameter_bound`] turn loss values into metric control: the first
//! bounds how fast `F` can change across a unit-radius neighborhood, the
//! second bounds how far apart two exact minimizers can be.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::phi::Phi;
use crate::spaces::{Point, Space, TangentVector};
use crate::util::{axpy, pairwise_sum};

/// Atoms closer than this to the evaluation point contribute zero to the
/// gradient (a valid subgradient choice, since phi is convex with
/// phi(0) = 0).
pub const ATOM_TOL: f64 = 1e-10;

/// Weights must sum to one within this tolerance.
pub const MASS_TOL: f64 = 1e-12;

/// A finitely supported probability measure on a [`Space`].
///
/// Serializes as `{"space": ..., "atoms": [[coords..., weight], ...]}`,
/// one row per atom with the weight in the last column.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    space: Space,
    atoms: Vec<Point>,
    weights: Vec<f64>,
}

impl Measure {
    /// Build a measure, validating atoms against the space and checking
    /// that the weights are positive and sum to one within [`MASS_TOL`].
    pub fn new(space: Space, atoms: Vec<Point>, weights: Vec<f64>) -> Result<Measure> {
        if atoms.is_empty() {
            return Err(Error::EmptySet("a measure needs at least one atom".into()));
        }
        if atoms.len() != weights.len() {
            return Err(Error::Config(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        for p in &atoms {
            space.validate_point(p)?;
        }
        for &w in &weights {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::Config(format!("weights must be positive and finite, got {w}")));
            }
        }
        let mass = pairwise_sum(&weights);
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::Config(format!("weights sum to {mass}, expected 1")));
        }
        Ok(Measure { space, atoms, weights })
    }

    /// The empirical measure of a sample: every atom gets weight `1/n`.
    pub fn equal_weights(space: Space, atoms: Vec<Point>) -> Result<Measure> {
        let n = atoms.len();
        if n == 0 {
            return Err(Error::EmptySet("a measure needs at least one atom".into()));
        }
        Measure::new(space, atoms, vec![1.0 / n as f64; n])
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn atoms(&self) -> &[Point] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Largest pairwise distance within the support.
    pub fn support_diameter(&self) -> f64 {
        let mut d = 0.0f64;
        for (i, a) in self.atoms.iter().enumerate() {
            for b in &self.atoms[i + 1..] {
                d = d.max(self.space.distance_unchecked(a, b));
            }
        }
        d
    }

    /// A prefix of the atom list, renormalized to equal weights. Useful for
    /// consistency curves where one long sample serves every sample size.
    pub fn prefix(&self, n: usize) -> Result<Measure> {
        if n == 0 || n > self.atoms.len() {
            return Err(Error::Config(format!(
                "prefix length {n} outside 1..={}",
                self.atoms.len()
            )));
        }
        Measure::equal_weights(self.space, self.atoms[..n].to_vec())
    }
}

#[derive(Serialize, Deserialize)]
struct MeasureWire {
    space: Space,
    atoms: Vec<Vec<f64>>,
}

impl Serialize for Measure {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let atoms = self
            .atoms
            .iter()
            .zip(&self.weights)
            .map(|(p, &w)| {
                let mut row = p.0.clone();
                row.push(w);
                row
            })
            .collect();
        MeasureWire { space: self.space, atoms }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Measure {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Measure, D::Error> {
        let wire = MeasureWire::deserialize(deserializer)?;
        let want = wire.space.coord_len() + 1;
        let mut atoms = Vec::with_capacity(wire.atoms.len());
        let mut weights = Vec::with_capacity(wire.atoms.len());
        for row in wire.atoms {
            if row.len() != want {
                return Err(D::Error::custom(format!(
                    "atom row has {} entries, expected {} coordinates plus a weight",
                    row.len(),
                    want - 1
                )));
            }
            let (coords, w) = row.split_at(row.len() - 1);
            atoms.push(
                wire.space
                    .point(coords.to_vec())
                    .map_err(|e| D::Error::custom(e.to_string()))?,
            );
            weights.push(w[0]);
        }
        Measure::new(wire.space, atoms, weights).map_err(|e| D::Error::custom(e.to_string()))
    }
}

/// A finite approximation of the set of minimizers: every candidate whose
/// loss is within `delta` of the best one found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanSet {
    pub points: Vec<Point>,
    pub delta: f64,
    pub min_loss: f64,
}

impl MeanSet {
    /// Largest pairwise distance within the set; zero for fewer than two
    /// points.
    pub fn diameter(&self, space: &Space) -> f64 {
        let mut d = 0.0f64;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                d = d.max(space.distance_unchecked(a, b));
            }
        }
        d
    }
}

/// Evaluate `F(x) = sum_j w_j phi(d(x, X_j))`.
///
/// Terms are added pairwise in fixed index order, so the result is
/// bit-identical no matter how callers parallelize over candidates.
pub fn empirical_loss(phi: &Phi, mu: &Measure, x: &Point) -> Result<f64> {
    mu.space.validate_point(x)?;
    empirical_loss_unchecked(phi, mu, x)
}

pub(crate) fn empirical_loss_unchecked(phi: &Phi, mu: &Measure, x: &Point) -> Result<f64> {
    let mut terms = Vec::with_capacity(mu.len());
    for (p, &w) in mu.atoms.iter().zip(&mu.weights) {
        terms.push(w * phi.eval(mu.space.distance_unchecked(x, p))?);
    }
    Ok(pairwise_sum(&terms))
}

/// The gradient coefficient `phi'(d) / d`, with a log-space fallback so a
/// finite coefficient never gets lost to intermediate overflow.
pub(crate) fn grad_weight(phi: &Phi, d: f64) -> Result<f64> {
    let direct = phi.right_derivative(d)? / d;
    if direct.is_finite() {
        return Ok(direct);
    }
    let log_coeff = match phi {
        Phi::Power { p } => p.ln() + (p - 2.0) * d.ln(),
        Phi::Exp { p, scale } => (scale * p.ln() / (p - 1.0)).ln() + d * p.ln() - d.ln(),
        _ => f64::INFINITY,
    };
    let stable = log_coeff.exp();
    if stable.is_finite() {
        Ok(stable)
    } else {
        Err(Error::Range(format!(
            "gradient coefficient overflows for {} at distance {d}",
            phi.label()
        )))
    }
}

/// Ascent gradient of the loss at `x`:
/// `-sum_j w_j (phi'(d_j)/d_j) log_x(X_j)`.
///
/// Minimization steps follow the negation. Atoms within [`ATOM_TOL`] of
/// `x` contribute zero. Errors: `CutLocus` when an atom sits in the cut
/// locus of `x`, `NonDifferentiable` when some distance lands on a kink
/// of phi.
pub fn loss_gradient(phi: &Phi, mu: &Measure, x: &Point) -> Result<TangentVector> {
    mu.space.validate_point(x)?;
    let components = loss_gradient_unchecked(phi, mu, x)?;
    Ok(TangentVector { base: x.clone(), components })
}

pub(crate) fn loss_gradient_unchecked(phi: &Phi, mu: &Measure, x: &Point) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; mu.space.coord_len()];
    for (p, &w) in mu.atoms.iter().zip(&mu.weights) {
        let d = mu.space.distance_unchecked(x, p);
        if d < ATOM_TOL {
            continue;
        }
        if !phi.smooth_at(d) {
            return Err(Error::NonDifferentiable(format!(
                "{} has a kink at distance {d}",
                phi.label()
            )));
        }
        let log = mu.space.log_map_unchecked(x, p)?;
        let coeff = w * grad_weight(phi, d)?;
        axpy(&mut acc, -coeff, &log);
    }
    Ok(acc)
}

/// Coefficients of the loss-value-dependent Lipschitz estimate, cached so
/// hot loops do not recompute the growth constant per node.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LipschitzCoeffs {
    gamma: f64,
    phi_at_one: f64,
}

impl LipschitzCoeffs {
    pub(crate) fn new(phi: &Phi) -> Result<LipschitzCoeffs> {
        Ok(LipschitzCoeffs { gamma: phi.gamma()?, phi_at_one: phi.eval(1.0)? })
    }

    pub(crate) fn bound(&self, loss: f64) -> f64 {
        self.gamma * self.phi_at_one + (self.gamma - 1.0) * loss
    }
}

/// Bound on how fast the loss changes near a point where it is at most
/// `sup_loss_on_ball`: for `d(p, q) <= 1`,
/// `|F(p) - F(q)| <= d(p, q) * bound`. The bound is
/// `gamma * phi(1) + (gamma - 1) * sup_loss_on_ball` with gamma the growth
/// constant of phi.
pub fn lipschitz_bound(phi: &Phi, sup_loss_on_ball: f64) -> Result<f64> {
    if !(sup_loss_on_ball >= 0.0) || !sup_loss_on_ball.is_finite() {
        return Err(Error::Domain(format!("loss bound must be finite and nonnegative, got {sup_loss_on_ball}")));
    }
    Ok(LipschitzCoeffs::new(phi)?.bound(sup_loss_on_ball))
}

/// Bound on the diameter of the exact minimizer set given the minimal
/// loss value: `2 * phi_inverse(min_loss)`.
pub fn diameter_bound(phi: &Phi, min_loss: f64) -> Result<f64> {
    if !(min_loss >= 0.0) {
        return Err(Error::Domain(format!("minimal loss must be nonnegative, got {min_loss}")));
    }
    Ok(2.0 * phi.inverse(min_loss)?)
}

/// One-sided set distance `sup_{a in A} inf_{b in B} d(a, b)`.
///
/// Not symmetric: it is small exactly when `A` lies inside a small
/// thickening of `B`.
pub fn rho_infinity(space: &Space, a: &[Point], b: &[Point]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet("set distance needs nonempty sets".into()));
    }
    for p in a.iter().chain(b) {
        space.validate_point(p)?;
    }
    let mut sup = 0.0f64;
    for p in a {
        let mut inf = f64::INFINITY;
        for q in b {
            inf = inf.min(space.distance_unchecked(p, q));
        }
        sup = sup.max(inf);
    }
    Ok(sup)
}

/// Evaluate the loss on every candidate and keep the sublevel set within
/// `delta` of the best value.
pub fn sublevel_mean_set(phi: &Phi, mu: &Measure, candidates: &[Point], delta: f64) -> Result<MeanSet> {
    if candidates.is_empty() {
        return Err(Error::EmptySet("sublevel set needs candidates".into()));
    }
    if !(delta >= 0.0) {
        return Err(Error::Config(format!("sublevel tolerance must be nonnegative, got {delta}")));
    }
    let mut losses = Vec::with_capacity(candidates.len());
    for c in candidates {
        losses.push(empirical_loss(phi, mu, c)?);
    }
    let min_loss = losses.iter().cloned().fold(f64::INFINITY, f64::min);
    let points = candidates
        .iter()
        .zip(&losses)
        .filter(|(_, &l)| l <= min_loss + delta)
        .map(|(p, _)| p.clone())
        .collect();
    Ok(MeanSet { points, delta, min_loss })
}
