//! Certified multilevel grid refinement.
//!
//! The solver walks a sequence of lattices whose spacing contracts by a
//! fixed factor per level. At each level it evaluates the loss on every
//! live node and discards exactly those nodes certified to be useless: a
//! node `q` with covering radius `r` survives only if
//! `F(q) <= best + r * L(q)` where `L(q)` is the loss-dependent local
//! Lipschitz bound. Survivors are refined into their bracket of child
//! nodes, one contraction finer, and merged. On a sharply peaked loss
//! this reproduces the classic zoom onto the argmin bracket; on a flat
//! loss nothing can be excluded and the whole region is refined
//! uniformly, which is what makes the returned [`MeanSet`] meaningful
//! when minimizers form a continuum.
//!
//! When the live-node budget would be exceeded the solver stops growing
//! the certified lattice (the mean set keeps the resolution reached by
//! then) and continues with a plain bracket zoom around the incumbent to
//! refine the point estimate alone.

use rayon::prelude::*;
use std::collections::BTreeSet;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::loss::{empirical_loss_unchecked, LipschitzCoeffs, MeanSet, Measure};
use crate::phi::Phi;
use crate::spaces::{wrap_angle, Point, Region, Space};
use crate::util::axpy;

use super::{needs_region, SolverConfig, SolverReport, Termination, TraceEntry, NESTED_NODE_CAP};

use std::f64::consts::PI;

/// Deepest supported refinement; keeps lattice indices inside i64.
pub(crate) const MAX_LEVELS: usize = 25;

enum Chart {
    /// Coordinates are chart offsets from a center point.
    Euclidean { center: Vec<f64> },
    /// Like `Euclidean` but every axis wraps into `(-pi, pi]`.
    Angles { center: Vec<f64> },
    /// Offsets combine an orthonormal tangent basis at the center and go
    /// through the exponential map.
    Tangent { center: Point, basis: Vec<Vec<f64>> },
    /// The whole circle/torus, indices mod the level modulus.
    Periodic,
}

struct Lattice {
    space: Space,
    dim: usize,
    chart: Chart,
    /// Level-1 per-axis half-count (charts) or modulus (periodic).
    base: i64,
    /// Per-level spacing contraction.
    contraction: i64,
    /// Level-1 spacing.
    h1: f64,
}

impl Lattice {
    fn build(space: &Space, cfg: &SolverConfig, region: Option<&Region>) -> Result<Lattice> {
        let contraction = cfg.contraction();
        let points = cfg.grid_points_per_level as i64;
        match region {
            None if needs_region(space) => Err(Error::RegionRequired(format!(
                "the nested grid needs a bounding region on {}",
                space.descriptor()
            ))),
            None => Ok(Lattice {
                space: *space,
                dim: space.dim(),
                chart: Chart::Periodic,
                base: points,
                contraction,
                h1: 2.0 * PI / points as f64,
            }),
            Some(region) => {
                space.validate_point(&region.center)?;
                if !(region.radius > 0.0) || !region.radius.is_finite() {
                    return Err(Error::Config(format!("region radius must be positive, got {}", region.radius)));
                }
                let mut radius = region.radius;
                if let Some(d) = space.diameter() {
                    radius = radius.min(d);
                }
                let chart = match space {
                    Space::Euclidean { .. } => Chart::Euclidean { center: region.center.0.clone() },
                    Space::Circle | Space::Torus { .. } => Chart::Angles { center: region.center.0.clone() },
                    Space::Sphere { .. } | Space::Projective { .. } => {
                        Chart::Tangent { center: region.center.clone(), basis: space.tangent_basis(&region.center)? }
                    }
                };
                Ok(Lattice {
                    space: *space,
                    dim: space.dim(),
                    chart,
                    base: contraction,
                    contraction,
                    h1: radius / contraction as f64,
                })
            }
        }
    }

    fn spacing(&self, level: usize) -> f64 {
        self.h1 / (self.contraction as f64).powi(level as i32 - 1)
    }

    /// Covering radius: any point of the region is within this distance
    /// of some in-range lattice node. Chart boxes never expand distances
    /// on the supported spaces, so the chart-space radius is an upper
    /// bound on the geodesic one.
    fn covering_radius(&self, level: usize) -> f64 {
        self.spacing(level) * (self.dim as f64).sqrt() / 2.0
    }

    /// Per-axis index bound (charts) or modulus (periodic) at a level.
    fn extent(&self, level: usize) -> i64 {
        self.base * self.contraction.pow(level as u32 - 1)
    }

    fn point_at(&self, key: &[i64], level: usize) -> Point {
        let h = self.spacing(level);
        match &self.chart {
            Chart::Euclidean { center } => {
                Point(center.iter().zip(key).map(|(c, &i)| c + i as f64 * h).collect())
            }
            Chart::Angles { center } => {
                Point(center.iter().zip(key).map(|(c, &i)| wrap_angle(c + i as f64 * h)).collect())
            }
            Chart::Tangent { center, basis } => {
                let mut v = vec![0.0; self.space.coord_len()];
                for (&i, e) in key.iter().zip(basis) {
                    axpy(&mut v, i as f64 * h, e);
                }
                self.space.exp_map_unchecked(center, &v)
            }
            Chart::Periodic => {
                let m = self.extent(level);
                Point(key.iter().map(|&k| wrap_angle(2.0 * PI * k as f64 / m as f64 - PI)).collect())
            }
        }
    }

    fn level_one_keys(&self) -> Vec<Vec<i64>> {
        let axis: Vec<i64> = match self.chart {
            Chart::Periodic => (0..self.base).collect(),
            _ => (-self.base..=self.base).collect(),
        };
        let mut keys: Vec<Vec<i64>> = vec![Vec::new()];
        for _ in 0..self.dim {
            let mut next = Vec::with_capacity(keys.len() * axis.len());
            for k in &keys {
                for &i in &axis {
                    let mut c = k.clone();
                    c.push(i);
                    next.push(c);
                }
            }
            keys = next;
        }
        keys
    }

    /// Insert the refined bracket of `key` into `out`; returns false as
    /// soon as `out` outgrows `cap`.
    fn push_children(&self, key: &[i64], next_level: usize, out: &mut BTreeSet<Vec<i64>>, cap: usize) -> bool {
        let c = self.contraction;
        let extent = self.extent(next_level);
        let mut child = vec![0i64; self.dim];
        self.push_children_rec(key, 0, c, extent, &mut child, out, cap)
    }

    fn push_children_rec(
        &self,
        key: &[i64],
        axis: usize,
        c: i64,
        extent: i64,
        child: &mut Vec<i64>,
        out: &mut BTreeSet<Vec<i64>>,
        cap: usize,
    ) -> bool {
        if axis == self.dim {
            out.insert(child.clone());
            return out.len() <= cap;
        }
        let base = key[axis] * c;
        for j in -c..=c {
            let idx = base + j;
            let idx = match self.chart {
                Chart::Periodic => idx.rem_euclid(extent),
                _ => {
                    if idx.abs() > extent {
                        continue;
                    }
                    idx
                }
            };
            child[axis] = idx;
            if !self.push_children_rec(key, axis + 1, c, extent, child, out, cap) {
                return false;
            }
        }
        true
    }
}

/// Run the certified nested-grid solver.
///
/// `region` is mandatory except on the circle and torus, where omitting
/// it means the global grid. The report carries a [`MeanSet`]: every
/// lattice node at the finest certified level that the Lipschitz rule
/// could not exclude, together with the sublevel slack `delta` it was
/// kept under, and `final_mesh` is that level's covering radius.
pub fn nested_grid(
    phi: &Phi,
    mu: &Measure,
    cfg: &SolverConfig,
    region: Option<&Region>,
) -> Result<SolverReport> {
    let start = Instant::now();
    cfg.validate()?;
    if cfg.grid_levels > MAX_LEVELS {
        return Err(Error::Config(format!(
            "grid level budget {} exceeds the supported maximum {MAX_LEVELS}",
            cfg.grid_levels
        )));
    }
    let lattice = Lattice::build(mu.space(), cfg, region)?;
    let coeffs = LipschitzCoeffs::new(phi)?;

    let mut keys = lattice.level_one_keys();
    if keys.len() > NESTED_NODE_CAP {
        return Err(Error::Resolution(format!(
            "level-1 grid has {} nodes, over the {NESTED_NODE_CAP} budget; lower grid_points_per_level or the dimension",
            keys.len()
        )));
    }

    let mut trace = Vec::with_capacity(cfg.grid_levels);
    let mut best_loss = f64::INFINITY;
    let mut best_point: Option<Point> = None;
    let mut mean_set: Option<MeanSet> = None;
    let mut certified_mesh = f64::NAN;
    let mut certified = true;
    let mut termination = Termination::MaxIters;

    for level in 1..=cfg.grid_levels {
        let points: Vec<Point> = keys.iter().map(|k| lattice.point_at(k, level)).collect();
        let losses: Vec<f64> = points
            .par_iter()
            .map(|p| empirical_loss_unchecked(phi, mu, p))
            .collect::<Result<Vec<_>>>()?;

        let mut level_best = 0;
        for (i, &l) in losses.iter().enumerate() {
            if l < losses[level_best] {
                level_best = i;
            }
        }
        if losses[level_best] < best_loss {
            best_loss = losses[level_best];
            best_point = Some(points[level_best].clone());
        }
        let r = lattice.covering_radius(level);
        trace.push(TraceEntry { iteration: level - 1, loss: best_loss, step_norm: r });

        let survivors: Vec<usize> = if certified {
            let kept: Vec<usize> = if r > 1.0 {
                // The per-node bound only holds within unit distance, so
                // nothing can be excluded while cells are larger than that.
                (0..keys.len()).collect()
            } else {
                (0..keys.len())
                    .filter(|&i| losses[i] <= best_loss + r * coeffs.bound(losses[i]))
                    .collect()
            };
            let max_kept = kept.iter().map(|&i| losses[i]).fold(f64::NEG_INFINITY, f64::max);
            // Reported sublevel slack: the Lipschitz budget, capped so any
            // two reported members y, z obey 2 phi(rho(y,z)/2) <= F(y)+F(z)
            // <= 2(min + delta) and hence sit within 2 phi^-1(min) + 2r of
            // each other. Uncapped, a steep phi with a tiny minimum inflates
            // phi^-1(min + r*L) far past the advertised diameter bound.
            let budget = r * coeffs.bound(max_kept);
            let cap = phi
                .inverse(best_loss)
                .and_then(|d| phi.eval(d + r))
                .map(|v| (v - best_loss).max(0.0))
                .unwrap_or(budget);
            let delta = budget.min(cap);
            mean_set = Some(MeanSet {
                points: kept
                    .iter()
                    .filter(|&&i| losses[i] <= best_loss + delta)
                    .map(|&i| points[i].clone())
                    .collect(),
                delta,
                min_loss: best_loss,
            });
            certified_mesh = r;
            kept
        } else {
            vec![level_best]
        };

        if r <= cfg.tol {
            termination = Termination::Converged;
            break;
        }
        if level == cfg.grid_levels {
            break;
        }

        // Refine: merge survivor brackets while certified, or zoom on the
        // incumbent once the node budget stops the certified lattice.
        let mut next = BTreeSet::new();
        let mut within_cap = true;
        if certified {
            for &i in &survivors {
                if !lattice.push_children(&keys[i], level + 1, &mut next, NESTED_NODE_CAP) {
                    within_cap = false;
                    break;
                }
            }
            if !within_cap {
                certified = false;
                next.clear();
            }
        }
        if !certified {
            lattice.push_children(&keys[level_best], level + 1, &mut next, NESTED_NODE_CAP);
            if next.len() > NESTED_NODE_CAP {
                // A single bracket over the budget: cannot refine further.
                break;
            }
        }
        keys = next.into_iter().collect();
    }

    let estimate = best_point.expect("at least one level evaluated");
    Ok(SolverReport {
        method: "nested-grid".into(),
        estimate,
        mean_set,
        final_loss: best_loss,
        trace,
        termination,
        wall_ms: start.elapsed().as_secs_f64() * 1000.0,
        final_mesh: Some(certified_mesh),
    })
}
