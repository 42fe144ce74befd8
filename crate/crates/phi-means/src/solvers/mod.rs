//! Solvers for the phi-mean problem.
//!
//! Three strategies are provided, each behind the [`Solver`] trait and
//! registered by name in a [`SolverRegistry`]:
//!
//! - `nested-grid`: certified multilevel grid refinement. Keeps every
//!   grid node whose cell could still contain a minimizer (a Lipschitz
//!   argument excludes the rest), refines survivors five-fold per level,
//!   and returns both a point estimate and a [`MeanSet`] of
//!   near-minimizers. The only solver that can describe non-singleton
//!   minimizer sets.
//! - `gradient-descent`: Riemannian descent `x <- exp_x(-step * grad)`
//!   with a fixed step or Barzilai-Borwein steps.
//! - `tangent-flip`: alternates between pushing the atoms to the tangent
//!   space at the current iterate, solving the flat problem there, and
//!   mapping the flat minimizer back through the exponential map.
//!
//! [`solve`] picks a method automatically: grids on compact spaces of
//! dimension at most two, gradient descent otherwise.

mod gradient_descent;
mod nested_grid;
mod tangent_flip;

pub use gradient_descent::gradient_descent;
pub use nested_grid::nested_grid;
pub use tangent_flip::tangent_flip;
pub(crate) use tangent_flip::tangent_argmin;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{MeanSet, Measure};
use crate::phi::Phi;
use crate::spaces::{Point, Region, Space};
use crate::util::{axpy, norm};

/// Hard cap on live grid nodes per nested-grid level.
pub const NESTED_NODE_CAP: usize = 20_000;

/// Step-size rule for gradient descent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    Fixed,
    BarzilaiBorwein,
}

/// Strategy for the flat minimization inside tangent flipping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerSolverKind {
    /// Weighted average of the tangent atoms; valid only for the
    /// quadratic loss.
    ClosedFormMean,
    /// Nested grid on a tangent ball.
    GridOnTangent,
    /// Euclidean Barzilai-Borwein descent warm-started at the tangent
    /// mean.
    GradientOnTangent,
}

/// Tuning knobs shared by all solvers; unused fields are ignored by
/// solvers they do not apply to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub tol: f64,
    pub grid_levels: usize,
    pub grid_points_per_level: usize,
    pub step_size: f64,
    pub step_rule: StepRule,
    pub inner_solver: InnerSolverKind,
}

impl Default for SolverConfig {
    fn default() -> SolverConfig {
        SolverConfig {
            max_iters: 10_000,
            tol: 1e-8,
            grid_levels: 12,
            grid_points_per_level: 11,
            step_size: 0.25,
            step_rule: StepRule::Fixed,
            inner_solver: InnerSolverKind::ClosedFormMean,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.grid_levels == 0 {
            return Err(Error::Config("iteration and level budgets must be positive".into()));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::Config(format!("tol must lie in (0, 1), got {}", self.tol)));
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::Config(format!("step size must be positive, got {}", self.step_size)));
        }
        if self.grid_points_per_level < 5 || self.grid_points_per_level % 2 == 0 {
            // The refinement scheme subdivides the bracket around a node
            // symmetrically, which needs an odd per-axis count.
            return Err(Error::Config(format!(
                "grid points per level must be odd and at least 5, got {}",
                self.grid_points_per_level
            )));
        }
        Ok(())
    }

    /// Per-level contraction factor of the grid spacing.
    pub(crate) fn contraction(&self) -> i64 {
        ((self.grid_points_per_level - 1) / 2) as i64
    }
}

/// How a solver run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// The stopping tolerance was reached.
    Converged,
    /// The iteration or level budget ran out first.
    MaxIters,
    /// A gradient or logarithm hit a cut locus; the estimate is the last
    /// iterate before the abort.
    CutLocusAbort,
}

/// One row of a solver trace: the loss at an iterate and the size of the
/// move (step norm for iterative solvers, covering radius for grids).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub loss: f64,
    pub step_norm: f64,
}

/// Everything a solver run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    /// Registry name of the solver that produced this report.
    pub method: String,
    pub estimate: Point,
    /// Certified near-minimizer set; only the nested grid produces one.
    pub mean_set: Option<MeanSet>,
    pub final_loss: f64,
    pub trace: Vec<TraceEntry>,
    pub termination: Termination,
    /// Wall-clock time of the solve. The only non-deterministic field.
    pub wall_ms: f64,
    /// Covering radius of the certified grid at the last level, when the
    /// method was grid-based.
    pub final_mesh: Option<f64>,
}

/// A phi-mean solver selectable by name at runtime.
pub trait Solver: Send + Sync {
    fn name(&self) -> &'static str;

    /// Solve for the phi-mean of `mu`. `init` seeds iterative methods
    /// (derived from the measure when absent); `region` bounds grid
    /// methods (required on spaces without a global grid).
    fn solve(
        &self,
        phi: &Phi,
        mu: &Measure,
        cfg: &SolverConfig,
        init: Option<&Point>,
        region: Option<&Region>,
    ) -> Result<SolverReport>;
}

struct NestedGridSolver;

impl Solver for NestedGridSolver {
    fn name(&self) -> &'static str {
        "nested-grid"
    }

    fn solve(
        &self,
        phi: &Phi,
        mu: &Measure,
        cfg: &SolverConfig,
        _init: Option<&Point>,
        region: Option<&Region>,
    ) -> Result<SolverReport> {
        let owned;
        let region = match region {
            Some(r) => Some(r),
            None if needs_region(mu.space()) => {
                owned = default_region(mu)?;
                Some(&owned)
            }
            None => None,
        };
        nested_grid(phi, mu, cfg, region)
    }
}

struct GradientDescentSolver;

impl Solver for GradientDescentSolver {
    fn name(&self) -> &'static str {
        "gradient-descent"
    }

    fn solve(
        &self,
        phi: &Phi,
        mu: &Measure,
        cfg: &SolverConfig,
        init: Option<&Point>,
        _region: Option<&Region>,
    ) -> Result<SolverReport> {
        let start = match init {
            Some(p) => p.clone(),
            None => initial_guess(mu)?,
        };
        gradient_descent(phi, mu, cfg, &start)
    }
}

struct TangentFlipSolver;

impl Solver for TangentFlipSolver {
    fn name(&self) -> &'static str {
        "tangent-flip"
    }

    fn solve(
        &self,
        phi: &Phi,
        mu: &Measure,
        cfg: &SolverConfig,
        init: Option<&Point>,
        _region: Option<&Region>,
    ) -> Result<SolverReport> {
        let start = match init {
            Some(p) => p.clone(),
            None => initial_guess(mu)?,
        };
        tangent_flip(phi, mu, cfg, &start)
    }
}

/// Runtime-selectable solver collection.
pub struct SolverRegistry {
    solvers: Vec<Box<dyn Solver>>,
}

impl SolverRegistry {
    /// Registry with the three built-in solvers.
    pub fn new() -> SolverRegistry {
        let mut reg = SolverRegistry { solvers: Vec::new() };
        reg.register(Box::new(NestedGridSolver));
        reg.register(Box::new(GradientDescentSolver));
        reg.register(Box::new(TangentFlipSolver));
        reg
    }

    pub fn register(&mut self, solver: Box<dyn Solver>) {
        self.solvers.push(solver);
    }

    pub fn get(&self, name: &str) -> Option<&dyn Solver> {
        self.solvers.iter().find(|s| s.name() == name).map(|s| s.as_ref())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.solvers.iter().map(|s| s.name()).collect()
    }
}

impl Default for SolverRegistry {
    fn default() -> SolverRegistry {
        SolverRegistry::new()
    }
}

/// Method selection for [`solve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMethod {
    Auto,
    NestedGrid,
    GradientDescent,
    TangentFlip,
}

impl SolverMethod {
    pub fn parse(text: &str) -> Result<SolverMethod> {
        match text {
            "auto" => Ok(SolverMethod::Auto),
            "nested-grid" => Ok(SolverMethod::NestedGrid),
            "gradient-descent" => Ok(SolverMethod::GradientDescent),
            "tangent-flip" => Ok(SolverMethod::TangentFlip),
            _ => Err(Error::Config(format!(
                "unknown solver `{text}` (expected auto, nested-grid, gradient-descent, tangent-flip)"
            ))),
        }
    }

    /// Registry name after auto-selection for the given space.
    pub fn resolve(&self, space: &Space) -> &'static str {
        match self {
            SolverMethod::NestedGrid => "nested-grid",
            SolverMethod::GradientDescent => "gradient-descent",
            SolverMethod::TangentFlip => "tangent-flip",
            SolverMethod::Auto => {
                // Grids excel on low-dimensional compact spaces; descent
                // handles everything else, including unbounded charts.
                if space.diameter().is_some() && space.dim() <= 2 {
                    "nested-grid"
                } else {
                    "gradient-descent"
                }
            }
        }
    }
}

/// Whether grids on this space need an explicit bounding region.
pub(crate) fn needs_region(space: &Space) -> bool {
    !matches!(space, Space::Circle | Space::Torus { .. })
}

/// A starting point derived from the measure: a chart or ambient average
/// where that is meaningful, the first atom otherwise.
pub fn initial_guess(mu: &Measure) -> Result<Point> {
    let space = *mu.space();
    match space {
        Space::Euclidean { dim } => {
            let mut c = vec![0.0; dim];
            for (p, &w) in mu.atoms().iter().zip(mu.weights()) {
                axpy(&mut c, w, &p.0);
            }
            space.point(c)
        }
        Space::Circle | Space::Torus { .. } => {
            // Per-axis circular average; degenerate axes fall back to the
            // first atom's angle.
            let dim = space.dim();
            let mut coords = Vec::with_capacity(dim);
            for a in 0..dim {
                let (mut s, mut c) = (0.0, 0.0);
                for (p, &w) in mu.atoms().iter().zip(mu.weights()) {
                    s += w * p.0[a].sin();
                    c += w * p.0[a].cos();
                }
                if s.hypot(c) < 1e-9 {
                    coords.push(mu.atoms()[0].0[a]);
                } else {
                    coords.push(s.atan2(c));
                }
            }
            space.point(coords)
        }
        Space::Sphere { .. } => {
            let mut c = vec![0.0; space.coord_len()];
            for (p, &w) in mu.atoms().iter().zip(mu.weights()) {
                axpy(&mut c, w, &p.0);
            }
            if norm(&c) < 1e-9 {
                Ok(mu.atoms()[0].clone())
            } else {
                space.project_point(c)
            }
        }
        Space::Projective { .. } => Ok(mu.atoms()[0].clone()),
    }
}

/// A region sure to contain every minimizer: centered on the initial
/// guess with radius one beyond the farthest atom, clamped to the space
/// diameter.
pub fn default_region(mu: &Measure) -> Result<Region> {
    let center = initial_guess(mu)?;
    let space = mu.space();
    let mut radius = 0.0f64;
    for p in mu.atoms() {
        radius = radius.max(space.distance_unchecked(&center, p));
    }
    radius += 1.0;
    if let Some(d) = space.diameter() {
        radius = radius.min(d);
    }
    Ok(Region { center, radius })
}

/// Solve with automatic initialisation: method resolution, initial guess,
/// and default region are all derived from the measure.
pub fn solve(phi: &Phi, mu: &Measure, method: SolverMethod, cfg: &SolverConfig) -> Result<SolverReport> {
    let registry = SolverRegistry::new();
    let name = method.resolve(mu.space());
    let solver = registry
        .get(name)
        .ok_or_else(|| Error::Config(format!("no solver named `{name}` registered")))?;
    solver.solve(phi, mu, cfg, None, None)
}

/// Scale tangent components in place so a step never exceeds the trust
/// cap on compact spaces (guards against leaping across the cut locus).
pub(crate) fn clamp_step(space: &Space, step: &mut [f64]) {
    if space.diameter().is_none() {
        return;
    }
    let n = norm(step);
    if n > 1.0 {
        for c in step.iter_mut() {
            *c /= n;
        }
    }
}
