//! Riemannian gradient descent with fixed or Barzilai-Borwein steps.
//!
//! Each iteration pulls the loss gradient back to the tangent space at
//! the current iterate, takes a step along its negative, and maps back
//! with the exponential map. The Barzilai-Borwein rule transports the
//! previous gradient by orthogonal projection onto the current tangent
//! space, which is exact on flat spaces and a first-order transport on
//! the sphere; it falls back to the fixed step whenever the curvature
//! pair loses positivity.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::loss::{empirical_loss, loss_gradient, Measure, ATOM_TOL};
use crate::phi::Phi;
use crate::spaces::{Point, Space};
use crate::util::dot;

use super::{clamp_step, SolverConfig, SolverReport, StepRule, Termination, TraceEntry};

/// Smallest right slope at zero that counts as a kink of `phi(rho)`.
const KINK_TOL: f64 = 1e-12;

fn project_tangent(space: &Space, at: &Point, v: &mut [f64]) {
    match space {
        Space::Sphere { .. } | Space::Projective { .. } => {
            let d = dot(v, &at.0);
            for (c, b) in v.iter_mut().zip(&at.0) {
                *c -= d * b;
            }
        }
        _ => {}
    }
}

/// Minimize the loss by descent from `init`.
///
/// Landing within the atom tolerance of a support point while `phi` has
/// a positive right slope at zero is reported as a hard error: no
/// gradient selection is defensible there. Stepping across a cut locus
/// ends the run with a [`Termination::CutLocusAbort`] report instead,
/// keeping the last iterate as the estimate.
pub fn gradient_descent(
    phi: &Phi,
    mu: &Measure,
    cfg: &SolverConfig,
    init: &Point,
) -> Result<SolverReport> {
    let start = Instant::now();
    cfg.validate()?;
    let space = mu.space();
    space.validate_point(init)?;
    let kink_at_zero = phi.right_derivative(0.0)? > KINK_TOL;

    let mut x = init.clone();
    let mut trace: Vec<TraceEntry> = Vec::new();
    let mut termination = Termination::MaxIters;
    let mut final_loss = f64::NAN;
    // Previous iterate and its raw gradient components, for the BB pair.
    let mut prev: Option<(Point, Vec<f64>)> = None;

    for k in 0..cfg.max_iters {
        if kink_at_zero {
            let near = mu.atoms().iter().any(|a| space.distance_unchecked(&x, a) < ATOM_TOL);
            if near {
                return Err(Error::NonDifferentiable(format!(
                    "iterate {k} landed on a support atom and phi has slope {} at zero",
                    phi.right_derivative(0.0)?
                )));
            }
        }
        final_loss = empirical_loss(phi, mu, &x)?;
        let grad = match loss_gradient(phi, mu, &x) {
            Ok(g) => g,
            Err(Error::CutLocus(_)) => {
                trace.push(TraceEntry { iteration: k, loss: final_loss, step_norm: 0.0 });
                termination = Termination::CutLocusAbort;
                break;
            }
            Err(e) => return Err(e),
        };

        let gamma = match cfg.step_rule {
            StepRule::Fixed => cfg.step_size,
            StepRule::BarzilaiBorwein => prev
                .as_ref()
                .and_then(|(x_prev, g_prev)| {
                    // s: the last step seen from the current point.
                    let back = space.log_map(&x, x_prev).ok()?;
                    let s: Vec<f64> = back.components.iter().map(|c| -c).collect();
                    let mut gp = g_prev.clone();
                    if matches!(space, Space::Projective { .. }) && dot(&x_prev.0, &x.0) < 0.0 {
                        // Sign-flipped representative: the carried ambient
                        // gradient must flip with it.
                        for c in gp.iter_mut() {
                            *c = -*c;
                        }
                    }
                    project_tangent(space, &x, &mut gp);
                    let y: Vec<f64> = grad.components.iter().zip(&gp).map(|(a, b)| a - b).collect();
                    let ss = dot(&s, &s);
                    let sy = dot(&s, &y);
                    (sy > 0.0 && sy.is_finite() && ss.is_finite()).then(|| ss / sy)
                })
                .unwrap_or(cfg.step_size),
        };

        let mut step: Vec<f64> = grad.components.iter().map(|c| -gamma * c).collect();
        clamp_step(space, &mut step);
        let step_norm = crate::util::norm(&step);
        trace.push(TraceEntry { iteration: k, loss: final_loss, step_norm });
        if step_norm < cfg.tol {
            termination = Termination::Converged;
            break;
        }

        let next = space.exp_map_unchecked(&x, &step);
        prev = Some((std::mem::replace(&mut x, next), grad.components));
    }

    Ok(SolverReport {
        method: "gradient-descent".into(),
        estimate: x,
        mean_set: None,
        final_loss,
        trace,
        termination,
        wall_ms: start.elapsed().as_secs_f64() * 1000.0,
        final_mesh: None,
    })
}
