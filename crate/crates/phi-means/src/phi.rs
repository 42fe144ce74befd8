//! Convex loss functions and their growth constants.
//!
//! A loss function here is a convex, strictly increasing bijection
//! `phi: [0, inf) -> [0, inf)` with `phi(0) = 0`. Averaging `phi` of the
//! distance to the data generalizes the classical mean (`phi(t) = t^2`) and
//! the geometric median (`phi(t) = t`).
//!
//! The key quantity attached to each `phi` is its growth constant
//!
//! ```text
//! gamma = sup_{x >= 0} phi(1 + x) / (phi(1) + phi(x)),
//! ```
//!
//! which is finite exactly for the sub-exponential losses this crate works
//! with. `gamma = 1` holds only for linear `phi`; powers `t^p` have
//! `gamma = 2^(p-1)` and the normalized exponentials `(p^t - 1)/(p - 1)`
//! have `gamma = p`. Several executable consequences of a finite `gamma`
//! (exponential domination, increment bounds, a midpoint inequality) are
//! exposed as operations so they can be stress-tested directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default upper end of the ratio grid used for numeric `gamma` estimation.
pub const GAMMA_GRID_MAX: f64 = 1e4;
/// Default number of grid points used for numeric `gamma` estimation.
pub const GAMMA_GRID_POINTS: usize = 4096;
/// A decade-over-decade ratio increase above this factor flags divergence.
const DIVERGENCE_FACTOR: f64 = 1.01;
/// Forward-difference step for derivatives of tabulated losses: `1e-6 * max(1, t)`.
const FD_STEP: f64 = 1e-6;

fn default_scale() -> f64 {
    1.0
}

/// A convex loss function on `[0, inf)`.
///
/// Serialized form is tagged by `kind`:
/// `{"kind":"power","p":2}`, `{"kind":"exp","p":2}`, `{"kind":"linear","c":1}`,
/// `{"kind":"tabulated","knots":[[0,0],[1,1],...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Phi {
    /// `phi(t) = t^p` with `p >= 1`.
    Power { p: f64 },
    /// `phi(t) = scale * (p^t - 1) / (p - 1)` with base `p > 1`.
    ///
    /// The optional positive `scale` leaves the growth constant unchanged
    /// (scaling a loss never changes its growth ratio) and makes the family
    /// dominator representable exactly.
    Exp {
        p: f64,
        #[serde(default = "default_scale")]
        scale: f64,
    },
    /// `phi(t) = c * t` with `c > 0`.
    Linear { c: f64 },
    /// Piecewise-linear interpolation of `(t, phi(t))` knots.
    ///
    /// Knots must start at `(0, 0)`, be strictly increasing in both
    /// coordinates, and evaluation outside the knot range is an error
    /// (no extrapolation).
    Tabulated { knots: Vec<[f64; 2]> },
}

impl Phi {
    pub fn power(p: f64) -> Result<Self> {
        let phi = Phi::Power { p };
        phi.validate()?;
        Ok(phi)
    }

    /// The normalized exponential `(p^t - 1)/(p - 1)`.
    pub fn exp_minus_one(p: f64) -> Result<Self> {
        let phi = Phi::Exp { p, scale: 1.0 };
        phi.validate()?;
        Ok(phi)
    }

    pub fn linear(c: f64) -> Result<Self> {
        let phi = Phi::Linear { c };
        phi.validate()?;
        Ok(phi)
    }

    pub fn tabulated(knots: Vec<[f64; 2]>) -> Result<Self> {
        let phi = Phi::Tabulated { knots };
        phi.validate()?;
        Ok(phi)
    }

    /// Check the structural invariants of the parameters.
    ///
    /// Call this after deserializing from an untrusted source; the named
    /// constructors call it for you.
    pub fn validate(&self) -> Result<()> {
        match self {
            Phi::Power { p } => {
                if !p.is_finite() || *p < 1.0 {
                    return Err(Error::Domain(format!("power exponent must be >= 1, got {p}")));
                }
            }
            Phi::Exp { p, scale } => {
                if !p.is_finite() || *p <= 1.0 {
                    return Err(Error::Domain(format!("exponential base must be > 1, got {p}")));
                }
                if !scale.is_finite() || *scale <= 0.0 {
                    return Err(Error::Domain(format!("scale must be positive, got {scale}")));
                }
            }
            Phi::Linear { c } => {
                if !c.is_finite() || *c <= 0.0 {
                    return Err(Error::Domain(format!("linear slope must be positive, got {c}")));
                }
            }
            Phi::Tabulated { knots } => {
                if knots.len() < 2 {
                    return Err(Error::Domain("tabulated loss needs at least two knots".into()));
                }
                if knots[0] != [0.0, 0.0] {
                    return Err(Error::Domain("tabulated loss must start at (0, 0)".into()));
                }
                for w in knots.windows(2) {
                    if !(w[1][0].is_finite() && w[1][1].is_finite()) {
                        return Err(Error::Domain("tabulated knot is not finite".into()));
                    }
                    if w[1][0] <= w[0][0] || w[1][1] <= w[0][1] {
                        return Err(Error::Domain(
                            "tabulated knots must be strictly increasing in both coordinates".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// A short human-readable descriptor, e.g. `power:2`.
    pub fn label(&self) -> String {
        match self {
            Phi::Power { p } => format!("power:{p}"),
            Phi::Exp { p, scale } if *scale == 1.0 => format!("exp:{p}"),
            Phi::Exp { p, scale } => format!("exp:{p}*{scale}"),
            Phi::Linear { c } => format!("linear:{c}"),
            Phi::Tabulated { knots } => format!("tabulated[{}]", knots.len()),
        }
    }

    /// Parse a descriptor in the [`label`](Phi::label) format.
    ///
    /// Accepts `power:P`, `exp:P`, `exp:P*SCALE`, and `linear:C`.
    /// Tabulated losses carry their knot list and only round-trip through
    /// serde, not through this shorthand.
    pub fn parse(text: &str) -> Result<Phi> {
        let err = || Error::Config(format!("cannot parse loss `{text}` (expected power:P, exp:P, exp:P*SCALE, or linear:C)"));
        let (kind, rest) = text.split_once(':').ok_or_else(err)?;
        match kind {
            "power" => Phi::power(rest.parse().map_err(|_| err())?),
            "linear" => Phi::linear(rest.parse().map_err(|_| err())?),
            "exp" => match rest.split_once('*') {
                None => Phi::exp_minus_one(rest.parse().map_err(|_| err())?),
                Some((p, scale)) => {
                    let phi = Phi::Exp {
                        p: p.parse().map_err(|_| err())?,
                        scale: scale.parse().map_err(|_| err())?,
                    };
                    phi.validate()?;
                    Ok(phi)
                }
            },
            _ => Err(err()),
        }
    }

    /// Largest `t` at which the loss can be evaluated (`None` = unbounded).
    pub fn domain_max(&self) -> Option<f64> {
        match self {
            Phi::Tabulated { knots } => Some(knots[knots.len() - 1][0]),
            _ => None,
        }
    }

    /// Evaluate `phi(t)`.
    ///
    /// Errors with `Domain` for `t < 0` and with `Range` outside the knot
    /// range of a tabulated loss.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::Domain(format!("loss argument must be a finite nonnegative real, got {t}")));
        }
        match self {
            Phi::Power { p } => Ok(t.powf(*p)),
            Phi::Exp { p, scale } => Ok(scale * (p.powf(t) - 1.0) / (p - 1.0)),
            Phi::Linear { c } => Ok(c * t),
            Phi::Tabulated { knots } => {
                let last = knots[knots.len() - 1];
                if t > last[0] {
                    return Err(Error::Range(format!(
                        "argument {t} beyond tabulated range [0, {}]; extrapolation is not defined",
                        last[0]
                    )));
                }
                // Binary search for the segment containing t.
                let idx = knots.partition_point(|k| k[0] <= t);
                if idx == knots.len() {
                    return Ok(last[1]);
                }
                let lo = knots[idx - 1];
                let hi = knots[idx];
                let s = (t - lo[0]) / (hi[0] - lo[0]);
                Ok(lo[1] + s * (hi[1] - lo[1]))
            }
        }
    }

    /// One-sided (right) derivative `phi'(t+)`.
    ///
    /// Closed forms for the analytic kinds; forward difference with step
    /// `1e-6 * max(1, t)` for tabulated data (backward at the right edge of
    /// the table, where no forward step exists).
    pub fn right_derivative(&self, t: f64) -> Result<f64> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::Domain(format!("derivative argument must be nonnegative, got {t}")));
        }
        match self {
            Phi::Power { p } => {
                if *p == 1.0 {
                    Ok(1.0)
                } else if t == 0.0 {
                    Ok(0.0)
                } else {
                    Ok(p * t.powf(p - 1.0))
                }
            }
            Phi::Exp { p, scale } => Ok(scale * p.ln() * p.powf(t) / (p - 1.0)),
            Phi::Linear { c } => Ok(*c),
            Phi::Tabulated { .. } => {
                let h = FD_STEP * t.max(1.0);
                let max_t = self.domain_max().unwrap();
                if t + h <= max_t {
                    Ok((self.eval(t + h)? - self.eval(t)?) / h)
                } else if t - h >= 0.0 {
                    Ok((self.eval(t)? - self.eval(t - h)?) / h)
                } else {
                    Err(Error::Range("table too short for a difference quotient".into()))
                }
            }
        }
    }

    /// True when the loss is differentiable at `t > 0`.
    ///
    /// Analytic kinds are smooth on `(0, inf)`; a tabulated loss has a kink
    /// wherever adjacent segment slopes disagree.
    pub fn smooth_at(&self, t: f64) -> bool {
        match self {
            Phi::Tabulated { knots } => {
                for w in knots.windows(3) {
                    let knot = w[1][0];
                    if (t - knot).abs() <= 1e-9 * knot.max(1.0) {
                        let s_left = (w[1][1] - w[0][1]) / (w[1][0] - w[0][0]);
                        let s_right = (w[2][1] - w[1][1]) / (w[2][0] - w[1][0]);
                        if (s_right - s_left).abs() > 1e-6 * s_left.abs().max(1.0) {
                            return false;
                        }
                    }
                }
                true
            }
            _ => true,
        }
    }

    /// Closed-form growth constant, when the kind has one.
    pub fn analytic_gamma(&self) -> Option<f64> {
        match self {
            Phi::Power { p } => Some(2f64.powf(p - 1.0)),
            Phi::Exp { p, .. } => Some(*p),
            Phi::Linear { .. } => Some(1.0),
            Phi::Tabulated { .. } => None,
        }
    }

    /// Growth constant `gamma`, analytic when available, otherwise the
    /// numeric grid supremum with default grid parameters.
    pub fn gamma(&self) -> Result<f64> {
        match self.analytic_gamma() {
            Some(g) => Ok(g),
            None => Ok(self.gamma_numeric(GAMMA_GRID_MAX, GAMMA_GRID_POINTS)?.value),
        }
    }

    /// Numeric estimate of `gamma` on a log-spaced grid over `[0, grid_max]`.
    ///
    /// The supremum over a grid is always a lower bound for the true
    /// constant, so the estimate is flagged as such. Grid points where the
    /// loss overflows or leaves a tabulated range are skipped. If the ratio
    /// is still rising at the end of the usable grid (the maximum over the
    /// last decade exceeds the previous decade's maximum by more than 1%),
    /// the loss is considered outside the sub-exponential class and a
    /// `Divergence` error is returned.
    pub fn gamma_numeric(&self, grid_max: f64, grid_points: usize) -> Result<GammaEstimate> {
        let value = self.ratio_sup(1.0, grid_max, grid_points)?;
        Ok(GammaEstimate { value, lower_bound_only: true })
    }

    /// Offset growth constant `gamma_t = sup_x phi(t + x) / (phi(t) + phi(x))`.
    ///
    /// Finiteness of `gamma_t` does not depend on the offset `t > 0`; the
    /// value does. Estimated numerically exactly like [`Phi::gamma_numeric`].
    pub fn gamma_t(&self, t: f64, grid_max: f64, grid_points: usize) -> Result<f64> {
        if !t.is_finite() || t <= 0.0 {
            return Err(Error::Domain(format!("offset must be positive, got {t}")));
        }
        self.ratio_sup(t, grid_max, grid_points)
    }

    /// Supremum of `phi(t + x)/(phi(t) + phi(x))` over the estimation grid,
    /// with decade-wise divergence detection.
    fn ratio_sup(&self, t: f64, grid_max: f64, grid_points: usize) -> Result<f64> {
        if grid_max < 10.0 {
            return Err(Error::Domain(format!("ratio grid must extend to at least 10, got {grid_max}")));
        }
        if grid_points < 16 {
            return Err(Error::Domain("ratio grid needs at least 16 points".into()));
        }
        let phi_t = match self.eval(t) {
            Ok(v) => v,
            Err(_) => {
                return Err(Error::Domain(format!(
                    "offset {t} is outside the evaluable domain of {}",
                    self.label()
                )))
            }
        };

        let lo = 1e-6f64;
        let log_lo = lo.log10();
        let log_hi = grid_max.log10();
        let mut sup = 1.0f64; // ratio at x = 0 is exactly 1
        // Maximum ratio per decade of x, indexed from floor(log10(lo)).
        let n_decades = (log_hi - log_lo).ceil() as usize + 1;
        let mut decade_max = vec![f64::NEG_INFINITY; n_decades];

        for i in 0..grid_points {
            let frac = i as f64 / (grid_points - 1) as f64;
            let x = 10f64.powf(log_lo + frac * (log_hi - log_lo));
            let (num, den_x) = match (self.eval(t + x), self.eval(x)) {
                (Ok(n), Ok(d)) => (n, d),
                _ => continue, // outside a tabulated range
            };
            if !num.is_finite() || !den_x.is_finite() {
                continue; // overflow region; ratio unusable here
            }
            let ratio = num / (phi_t + den_x);
            if !ratio.is_finite() {
                continue;
            }
            sup = sup.max(ratio);
            let dec = ((x.log10() - log_lo).floor() as usize).min(n_decades - 1);
            decade_max[dec] = decade_max[dec].max(ratio);
        }

        // Divergence heuristic: compare the last two decades holding data.
        let populated: Vec<f64> = decade_max.into_iter().filter(|m| m.is_finite()).collect();
        if populated.len() >= 2 {
            let last = populated[populated.len() - 1];
            let prev = populated[populated.len() - 2];
            if last > prev * DIVERGENCE_FACTOR {
                return Err(Error::Divergence(format!(
                    "ratio maximum grew from {prev:.6e} to {last:.6e} over the final decade of {}",
                    self.label()
                )));
            }
        }
        Ok(sup)
    }

    /// Report the defining membership properties on an evaluation grid.
    ///
    /// The grid should be sorted, contain 0, and stay inside the evaluable
    /// domain. Convexity is checked by the chord test on consecutive grid
    /// triples, which catches concave tabulated data that midpoints of
    /// adjacent knots would miss. This function never errors; properties
    /// that cannot be assessed on the given grid report `false`.
    pub fn check_membership(&self, grid: &[f64]) -> MembershipReport {
        let values: Vec<Option<f64>> = grid.iter().map(|&t| self.eval(t).ok()).collect();

        let zero_at_zero = grid
            .iter()
            .zip(&values)
            .find(|(t, _)| **t == 0.0)
            .map(|(_, v)| v.map(|v| v.abs() <= 1e-12).unwrap_or(false))
            .unwrap_or(false);

        let mut increasing = true;
        let mut seen_pair = false;
        for w in values.windows(2) {
            if let (Some(a), Some(b)) = (w[0], w[1]) {
                seen_pair = true;
                if b <= a {
                    increasing = false;
                }
            }
        }
        increasing &= seen_pair;

        let mut convex = true;
        let mut seen_triple = false;
        for (w_t, w_v) in grid.windows(3).zip(values.windows(3)) {
            if let (Some(v0), Some(v1), Some(v2)) = (w_v[0], w_v[1], w_v[2]) {
                seen_triple = true;
                let span = w_t[2] - w_t[0];
                if span <= 0.0 {
                    continue;
                }
                let s = (w_t[1] - w_t[0]) / span;
                let chord = v0 + s * (v2 - v0);
                if v1 > chord + 1e-9 * (1.0 + chord.abs()) {
                    convex = false;
                }
            }
        }
        convex &= seen_triple;

        // Bounded growth: run the numeric estimator, clamped to the evaluable
        // domain for tabulated data.
        let grid_max = match self.domain_max() {
            Some(m) if m - 1.0 < 10.0 => None, // too short to assess
            Some(m) => Some((m - 1.0).min(GAMMA_GRID_MAX)),
            None => Some(GAMMA_GRID_MAX),
        };
        let gamma_bounded = match grid_max {
            Some(gm) => self.gamma_numeric(gm, GAMMA_GRID_POINTS).is_ok(),
            None => false,
        };

        MembershipReport { zero_at_zero, increasing, convex, gamma_bounded }
    }

    /// Exponential domination: every loss with growth constant `gamma` obeys
    ///
    /// ```text
    /// phi(x) <= gamma * (gamma^x - 1) / (gamma - 1) * phi(1),
    /// ```
    ///
    /// with the limit `x * phi(1)` as `gamma -> 1`. Returns the bound.
    pub fn exp_dominator_bound(&self, x: f64) -> Result<f64> {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::Domain(format!("bound argument must be nonnegative, got {x}")));
        }
        let gamma = self.gamma()?;
        let phi1 = self.eval(1.0)?;
        Ok(exp_dominator(gamma, phi1, x))
    }

    /// Increment bound for `h` in `(0, 1]`:
    ///
    /// ```text
    /// phi(x + h) - phi(x) <= h * (gamma * phi(1) + (gamma - 1) * phi(x)).
    /// ```
    ///
    /// Returns the right-hand side.
    pub fn increment_bound(&self, x: f64, h: f64) -> Result<f64> {
        if !(h > 0.0 && h <= 1.0) {
            return Err(Error::Domain(format!("increment must lie in (0, 1], got {h}")));
        }
        if !x.is_finite() || x < 0.0 {
            return Err(Error::Domain(format!("argument must be nonnegative, got {x}")));
        }
        let gamma = self.gamma()?;
        Ok(h * (gamma * self.eval(1.0)? + (gamma - 1.0) * self.eval(x)?))
    }

    /// Midpoint inequality: for `a <= b + c`,
    ///
    /// ```text
    /// 2 * phi(a / 2) <= phi(b) + phi(c).
    /// ```
    ///
    /// Returns whether it holds within a small relative tolerance. Errors if
    /// the precondition `a <= b + c` fails.
    pub fn midpoint_inequality_holds(&self, a: f64, b: f64, c: f64) -> Result<bool> {
        if a > b + c + 1e-12 * (1.0 + b + c) {
            return Err(Error::Domain(format!("midpoint precondition a <= b + c violated: {a} > {b} + {c}")));
        }
        let lhs = 2.0 * self.eval(a / 2.0)?;
        let rhs = self.eval(b)? + self.eval(c)?;
        Ok(lhs <= rhs + 1e-9 * (1.0 + rhs.abs()))
    }

    /// Inverse `phi^{-1}(y)` for `y >= 0`.
    ///
    /// Closed forms for the analytic kinds, exact piecewise-linear inversion
    /// for tabulated data. `Range` error when `y` exceeds the last tabulated
    /// value.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        if !y.is_finite() || y < 0.0 {
            return Err(Error::Domain(format!("inverse argument must be nonnegative, got {y}")));
        }
        match self {
            Phi::Power { p } => Ok(y.powf(1.0 / p)),
            Phi::Exp { p, scale } => Ok((1.0 + y * (p - 1.0) / scale).ln() / p.ln()),
            Phi::Linear { c } => Ok(y / c),
            Phi::Tabulated { knots } => {
                let last = knots[knots.len() - 1];
                if y > last[1] {
                    return Err(Error::Range(format!("value {y} beyond tabulated maximum {}", last[1])));
                }
                let idx = knots.partition_point(|k| k[1] <= y);
                if idx == knots.len() {
                    return Ok(last[0]);
                }
                let lo = knots[idx - 1];
                let hi = knots[idx];
                let s = (y - lo[1]) / (hi[1] - lo[1]);
                Ok(lo[0] + s * (hi[0] - lo[0]))
            }
        }
    }
}

/// Evaluate the exponential domination bound for a given growth constant.
fn exp_dominator(gamma: f64, phi1: f64, x: f64) -> f64 {
    if gamma <= 1.0 + 1e-12 {
        x * phi1
    } else {
        gamma * (gamma.powf(x) - 1.0) / (gamma - 1.0) * phi1
    }
}

/// Result of a numeric growth-constant estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    pub value: f64,
    /// Grid suprema never overshoot; the true constant is at least `value`.
    pub lower_bound_only: bool,
}

/// Membership flags for the convex loss class, report-valued.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub zero_at_zero: bool,
    pub increasing: bool,
    pub convex: bool,
    pub gamma_bounded: bool,
}

impl MembershipReport {
    pub fn is_member(&self) -> bool {
        self.zero_at_zero && self.increasing && self.convex && self.gamma_bounded
    }
}

/// A finite family of losses with shared growth and scale bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiFamily {
    members: Vec<Phi>,
    gamma_sup: f64,
    phi1_sup: f64,
}

impl PhiFamily {
    /// Build a family, computing `sup gamma` and `sup phi(1)` over members.
    ///
    /// Errors with `NotDominated` when either supremum fails to exist
    /// (a member's growth ratio diverges, or `phi(1)` is not evaluable).
    pub fn new(members: Vec<Phi>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptySet("a loss family needs at least one member".into()));
        }
        let mut gamma_sup = 1.0f64;
        let mut phi1_sup = 0.0f64;
        for phi in &members {
            let gamma = phi.gamma().map_err(|e| Error::NotDominated(format!("{}: {e}", phi.label())))?;
            let phi1 = phi.eval(1.0).map_err(|e| Error::NotDominated(format!("{}: {e}", phi.label())))?;
            gamma_sup = gamma_sup.max(gamma);
            phi1_sup = phi1_sup.max(phi1);
        }
        Ok(PhiFamily { members, gamma_sup, phi1_sup })
    }

    pub fn members(&self) -> &[Phi] {
        &self.members
    }

    pub fn gamma_sup(&self) -> f64 {
        self.gamma_sup
    }

    pub fn phi1_sup(&self) -> f64 {
        self.phi1_sup
    }

    /// Construct a single loss strictly dominating every member:
    ///
    /// ```text
    /// psi(t) = (phi1_sup + eps) * gamma * (gamma^t - 1) / (gamma - 1),
    /// ```
    ///
    /// with `gamma = gamma_sup`, `eps = 1e-9 * phi1_sup`, and the linear
    /// limit `(phi1_sup + eps) * t` when `gamma_sup = 1`. Strict domination
    /// is verified on a log-spaced grid of positive arguments before
    /// returning; a violation reports `NotDominated`.
    pub fn dominator(&self) -> Result<Phi> {
        let eps = 1e-9 * self.phi1_sup;
        let lead = self.phi1_sup + eps;
        let gamma = self.gamma_sup;
        let psi = if gamma <= 1.0 + 1e-12 {
            Phi::Linear { c: lead }
        } else {
            // scale * (gamma^t - 1)/(gamma - 1) with scale = lead * gamma.
            Phi::Exp { p: gamma, scale: lead * gamma }
        };

        // Verification grid: positive arguments only (everything vanishes at 0).
        for i in 0..=80 {
            let t = 10f64.powf(-3.0 + 4.3 * i as f64 / 80.0); // 1e-3 ..= ~2e1
            let bound = match psi.eval(t) {
                Ok(b) => b,
                Err(_) => continue,
            };
            for phi in &self.members {
                match phi.eval(t) {
                    Ok(v) if v < bound => {}
                    Ok(v) => {
                        return Err(Error::NotDominated(format!(
                            "{} reaches {v} at t = {t}, dominator only {bound}",
                            phi.label()
                        )))
                    }
                    Err(_) => {} // member not evaluable there (tabulated range)
                }
            }
        }
        Ok(psi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eval_matches_closed_forms() {
        assert_relative_eq!(Phi::power(2.0).unwrap().eval(3.0).unwrap(), 9.0);
        assert_relative_eq!(Phi::linear(1.0).unwrap().eval(0.0).unwrap(), 0.0);
        // (2^3 - 1)/(2 - 1) = 7
        assert_relative_eq!(Phi::exp_minus_one(2.0).unwrap().eval(3.0).unwrap(), 7.0);
    }

    #[test]
    fn eval_rejects_negative_arguments() {
        assert!(Phi::power(2.0).unwrap().eval(-0.5).is_err());
    }

    #[test]
    fn tabulated_interpolates_and_refuses_extrapolation() {
        let phi = Phi::tabulated(vec![[0.0, 0.0], [1.0, 2.0], [3.0, 8.0]]).unwrap();
        assert_relative_eq!(phi.eval(0.5).unwrap(), 1.0);
        assert_relative_eq!(phi.eval(2.0).unwrap(), 5.0);
        assert!(matches!(phi.eval(3.5), Err(Error::Range(_))));
    }

    #[test]
    fn analytic_gammas() {
        assert_relative_eq!(Phi::power(3.0).unwrap().gamma().unwrap(), 4.0);
        assert_relative_eq!(Phi::linear(5.0).unwrap().gamma().unwrap(), 1.0);
        assert_relative_eq!(Phi::exp_minus_one(3.0).unwrap().gamma().unwrap(), 3.0);
    }

    #[test]
    fn numeric_gamma_agrees_with_closed_forms() {
        for p in [1.0, 1.5, 2.0, 3.0, 5.0] {
            let phi = Phi::power(p).unwrap();
            let est = phi.gamma_numeric(GAMMA_GRID_MAX, GAMMA_GRID_POINTS).unwrap();
            assert_relative_eq!(est.value, 2f64.powf(p - 1.0), max_relative = 1e-4);
            assert!(est.lower_bound_only);
        }
        for p in [1.5, 2.0, 3.0] {
            let phi = Phi::exp_minus_one(p).unwrap();
            let est = phi.gamma_numeric(GAMMA_GRID_MAX, GAMMA_GRID_POINTS).unwrap();
            assert_relative_eq!(est.value, p, max_relative = 1e-4);
        }
    }

    #[test]
    fn gamma_numeric_flags_superexponential_growth() {
        // Knots of exp(t^2) on [0, 20]: ratio keeps rising decade over decade.
        let knots: Vec<[f64; 2]> = (0..=400)
            .map(|i| {
                let t = i as f64 * 0.05;
                [t, (t * t).exp() - 1.0]
            })
            .collect();
        let phi = Phi::tabulated(knots).unwrap();
        assert!(matches!(phi.gamma_numeric(19.0, 4096), Err(Error::Divergence(_))));
    }

    #[test]
    fn gamma_t_examples() {
        let linear = Phi::linear(1.0).unwrap();
        assert_relative_eq!(linear.gamma_t(7.0, GAMMA_GRID_MAX, GAMMA_GRID_POINTS).unwrap(), 1.0, epsilon = 1e-9);

        let sq = Phi::power(2.0).unwrap();
        // sup_x (x+t)^2/(x^2+t^2) = 2 at x = t, for any offset.
        assert_relative_eq!(sq.gamma_t(1.0, GAMMA_GRID_MAX, GAMMA_GRID_POINTS).unwrap(), 2.0, max_relative = 1e-4);
        assert_relative_eq!(sq.gamma_t(2.0, GAMMA_GRID_MAX, GAMMA_GRID_POINTS).unwrap(), 2.0, max_relative = 1e-4);
    }

    #[test]
    fn membership_flags() {
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let report = Phi::power(2.0).unwrap().check_membership(&grid);
        assert!(report.is_member());

        // sqrt knots: concave, caught by the chord test on grid triples.
        let knots: Vec<[f64; 2]> = (0..=10).map(|i| [i as f64, (i as f64).sqrt()]).collect();
        let sqrt_tab = Phi::tabulated(knots).unwrap();
        let grid: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let report = sqrt_tab.check_membership(&grid);
        assert!(!report.convex);
        assert!(report.zero_at_zero);
        assert!(report.increasing);
    }

    #[test]
    fn exp_dominator_examples() {
        // gamma = 1: bound degenerates to x * phi(1).
        assert_relative_eq!(Phi::linear(2.0).unwrap().exp_dominator_bound(5.0).unwrap(), 10.0);
        assert_relative_eq!(Phi::power(2.0).unwrap().exp_dominator_bound(0.0).unwrap(), 0.0);
        // gamma = 2, phi(1) = 1: 2 * (2^3 - 1)/(2 - 1) = 14, and 3^2 = 9 <= 14.
        let bound = Phi::power(2.0).unwrap().exp_dominator_bound(3.0).unwrap();
        assert_relative_eq!(bound, 14.0);
        assert!(9.0 <= bound);
    }

    #[test]
    fn increment_bound_examples() {
        assert_relative_eq!(Phi::linear(1.0).unwrap().increment_bound(100.0, 1.0).unwrap(), 1.0);
        assert_relative_eq!(Phi::power(2.0).unwrap().increment_bound(0.0, 1.0).unwrap(), 2.0);
        // 0.5 * (2*1 + 1*9) = 5.5
        assert_relative_eq!(Phi::power(2.0).unwrap().increment_bound(3.0, 0.5).unwrap(), 5.5);
        assert!(Phi::power(2.0).unwrap().increment_bound(1.0, 1.5).is_err());
    }

    #[test]
    fn midpoint_inequality() {
        let phi = Phi::power(2.0).unwrap();
        assert!(phi.midpoint_inequality_holds(2.0, 1.0, 1.0).unwrap());
        assert!(phi.midpoint_inequality_holds(1.5, 1.0, 1.0).unwrap());
        assert!(phi.midpoint_inequality_holds(2.0, 3.0, 0.5).unwrap());
        assert!(phi.midpoint_inequality_holds(4.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn inverse_round_trips() {
        assert_relative_eq!(Phi::power(2.0).unwrap().inverse(9.0).unwrap(), 3.0);
        assert_relative_eq!(Phi::linear(4.0).unwrap().inverse(2.0).unwrap(), 0.5);
        // ln(1 + 7)/ln 2 = 3
        assert_relative_eq!(Phi::exp_minus_one(2.0).unwrap().inverse(7.0).unwrap(), 3.0);

        let tab = Phi::tabulated(vec![[0.0, 0.0], [1.0, 2.0], [3.0, 8.0]]).unwrap();
        assert_relative_eq!(tab.inverse(5.0).unwrap(), 2.0);
        assert!(matches!(tab.inverse(9.0), Err(Error::Range(_))));
    }

    #[test]
    fn family_sups_and_dominator() {
        let family = PhiFamily::new(vec![
            Phi::power(1.0).unwrap(),
            Phi::power(1.5).unwrap(),
            Phi::power(2.0).unwrap(),
        ])
        .unwrap();
        assert_relative_eq!(family.gamma_sup(), 2.0);
        assert_relative_eq!(family.phi1_sup(), 1.0);

        let psi = family.dominator().unwrap();
        assert_relative_eq!(psi.gamma().unwrap(), 2.0);
        // Strict domination of every member on a spot-check grid.
        for i in 1..=40 {
            let t = i as f64 * 0.5;
            let bound = psi.eval(t).unwrap();
            for phi in family.members() {
                assert!(phi.eval(t).unwrap() < bound, "dominated at t = {t}");
            }
        }
    }

    #[test]
    fn singleton_linear_family_dominates_linearly() {
        let family = PhiFamily::new(vec![Phi::linear(1.0).unwrap()]).unwrap();
        let psi = family.dominator().unwrap();
        match psi {
            Phi::Linear { c } => assert!(c > 1.0 && c < 1.0 + 1e-8),
            other => panic!("expected a linear dominator, got {other:?}"),
        }
    }

    #[test]
    fn serde_round_trip() {
        let phis = vec![
            Phi::power(2.5).unwrap(),
            Phi::exp_minus_one(2.0).unwrap(),
            Phi::linear(0.5).unwrap(),
            Phi::tabulated(vec![[0.0, 0.0], [1.0, 1.0], [2.0, 4.0]]).unwrap(),
        ];
        for phi in phis {
            let text = serde_json::to_string(&phi).unwrap();
            let back: Phi = serde_json::from_str(&text).unwrap();
            assert_eq!(phi, back);
        }
        // Tag grammar is stable.
        let parsed: Phi = serde_json::from_str(r#"{"kind":"power","p":2}"#).unwrap();
        assert_eq!(parsed, Phi::Power { p: 2.0 });
    }

    #[test]
    fn labels_parse_back() {
        for phi in [
            Phi::power(2.5).unwrap(),
            Phi::exp_minus_one(2.0).unwrap(),
            Phi::Exp { p: 3.0, scale: 0.5 },
            Phi::linear(0.5).unwrap(),
        ] {
            assert_eq!(Phi::parse(&phi.label()).unwrap(), phi);
        }
        assert!(Phi::parse("power:0.5").is_err());
        assert!(Phi::parse("weiszfeld:1").is_err());
        assert!(Phi::parse("power").is_err());
    }
}
