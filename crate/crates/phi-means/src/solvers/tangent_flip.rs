//! Iterated tangent-space minimization.
//!
//! At the current iterate the whole measure is pulled back through the
//! log map into flat coordinates, the same mean problem is solved there
//! with a flat-space inner solver, and the solution is pushed forward
//! with the exponential map. On a flat space one inner solve is already
//! exact; on curved spaces the pullback distorts distances away from the
//! base, so the outer loop repeats until the inner minimizer sits at the
//! origin, which is the first-order optimality condition at the iterate.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::loss::{empirical_loss, Measure};
use crate::phi::Phi;
use crate::spaces::{Point, Region, Space};
use crate::util::{axpy, dot, norm};

use super::nested_grid::{nested_grid, MAX_LEVELS};
use super::{clamp_step, gradient_descent::gradient_descent, InnerSolverKind, SolverConfig, SolverReport, StepRule, Termination, TraceEntry};

/// Orthonormal rows spanning the tangent space, when the ambient
/// representation is larger than the dimension.
fn chart_basis(space: &Space, at: &Point) -> Result<Option<Vec<Vec<f64>>>> {
    match space {
        Space::Sphere { .. } | Space::Projective { .. } => Ok(Some(space.tangent_basis(at)?)),
        _ => Ok(None),
    }
}

fn to_chart(basis: &Option<Vec<Vec<f64>>>, components: &[f64]) -> Vec<f64> {
    match basis {
        Some(rows) => rows.iter().map(|e| dot(components, e)).collect(),
        None => components.to_vec(),
    }
}

fn from_chart(basis: &Option<Vec<Vec<f64>>>, coord_len: usize, v: &[f64]) -> Vec<f64> {
    match basis {
        Some(rows) => {
            let mut out = vec![0.0; coord_len];
            for (c, e) in v.iter().zip(rows) {
                axpy(&mut out, *c, e);
            }
            out
        }
        None => v.to_vec(),
    }
}

/// Solve the flat mean problem for pre-pulled-back coordinates.
fn flat_argmin(
    phi: &Phi,
    coords: &[Vec<f64>],
    weights: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    let dim = coords[0].len();
    let space = Space::Euclidean { dim };
    let weighted_mean = || -> Vec<f64> {
        let mut m = vec![0.0; dim];
        for (c, &w) in coords.iter().zip(weights) {
            axpy(&mut m, w, c);
        }
        m
    };
    match cfg.inner_solver {
        InnerSolverKind::ClosedFormMean => {
            let quadratic = matches!(phi, Phi::Power { p } if (*p - 2.0).abs() < 1e-12);
            if !quadratic {
                return Err(Error::InnerSolver(format!(
                    "the closed-form inner step is only valid for the squared loss, not {}",
                    phi.label()
                )));
            }
            Ok(weighted_mean())
        }
        InnerSolverKind::GridOnTangent => {
            let atoms: Result<Vec<Point>> = coords.iter().map(|c| space.point(c.clone())).collect();
            let inner_mu = Measure::new(space, atoms?, weights.to_vec())?;
            let radius = coords.iter().map(|c| norm(c)).fold(0.0, f64::max) + 1.0;
            let region = Region { center: space.point(vec![0.0; dim])?, radius };
            // Deep enough that the final covering radius clears the
            // tolerance, whatever the pullback radius turned out to be.
            let c = cfg.contraction() as f64;
            let need = ((radius * (dim as f64).sqrt() / (2.0 * c * cfg.tol)).ln() / c.ln()).ceil();
            let levels = (need.max(0.0) as usize + 1).clamp(cfg.grid_levels, MAX_LEVELS);
            let inner_cfg = SolverConfig { grid_levels: levels, ..cfg.clone() };
            let report = nested_grid(phi, &inner_mu, &inner_cfg, Some(&region))?;
            if report.termination != Termination::Converged {
                return Err(Error::InnerSolver(format!(
                    "tangent grid stopped at mesh {:.3e} without reaching the tolerance",
                    report.final_mesh.unwrap_or(f64::NAN)
                )));
            }
            Ok(report.estimate.0)
        }
        InnerSolverKind::GradientOnTangent => {
            let atoms: Result<Vec<Point>> = coords.iter().map(|c| space.point(c.clone())).collect();
            let inner_mu = Measure::new(space, atoms?, weights.to_vec())?;
            let init = space.point(weighted_mean())?;
            let inner_cfg =
                SolverConfig { step_rule: StepRule::BarzilaiBorwein, ..cfg.clone() };
            let report = gradient_descent(phi, &inner_mu, &inner_cfg, &init)?;
            if report.termination != Termination::Converged {
                return Err(Error::InnerSolver(format!(
                    "tangent descent ended with {:?} instead of converging",
                    report.termination
                )));
            }
            Ok(report.estimate.0)
        }
    }
}

/// Chart coordinates of the inner minimizer at `base`.
///
/// The norm of the returned vector is the first-order optimality
/// residual of `base`: it vanishes exactly at interior stationary
/// points.
pub(crate) fn tangent_argmin(
    phi: &Phi,
    mu: &Measure,
    base: &Point,
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    let space = mu.space();
    space.validate_point(base)?;
    let basis = chart_basis(space, base)?;
    let coords: Result<Vec<Vec<f64>>> = mu
        .atoms()
        .iter()
        .map(|a| Ok(to_chart(&basis, &space.log_map(base, a)?.components)))
        .collect();
    flat_argmin(phi, &coords?, mu.weights(), cfg)
}

/// Minimize the loss by repeated pullback to the tangent space.
pub fn tangent_flip(
    phi: &Phi,
    mu: &Measure,
    cfg: &SolverConfig,
    init: &Point,
) -> Result<SolverReport> {
    let start = Instant::now();
    cfg.validate()?;
    let space = mu.space();
    space.validate_point(init)?;

    let mut x = init.clone();
    let mut trace: Vec<TraceEntry> = Vec::new();
    let mut termination = Termination::MaxIters;
    let mut final_loss = f64::NAN;

    for k in 0..cfg.max_iters {
        final_loss = empirical_loss(phi, mu, &x)?;
        let basis = match chart_basis(space, &x) {
            Ok(b) => b,
            Err(e) => return Err(e),
        };
        let mut coords = Vec::with_capacity(mu.len());
        let mut hit_cut = false;
        for a in mu.atoms() {
            match space.log_map(&x, a) {
                Ok(v) => coords.push(to_chart(&basis, &v.components)),
                Err(Error::CutLocus(_)) => {
                    hit_cut = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if hit_cut {
            trace.push(TraceEntry { iteration: k, loss: final_loss, step_norm: 0.0 });
            termination = Termination::CutLocusAbort;
            break;
        }

        let v = flat_argmin(phi, &coords, mu.weights(), cfg)?;
        let step_norm = norm(&v);
        trace.push(TraceEntry { iteration: k, loss: final_loss, step_norm });
        if step_norm <= cfg.tol {
            termination = Termination::Converged;
            break;
        }

        let mut step = from_chart(&basis, space.coord_len(), &v);
        clamp_step(space, &mut step);
        x = space.exp_map_unchecked(&x, &step);
    }

    Ok(SolverReport {
        method: "tangent-flip".into(),
        estimate: x,
        mean_set: None,
        final_loss,
        trace,
        termination,
        wall_ms: start.elapsed().as_secs_f64() * 1000.0,
        final_mesh: None,
    })
}
