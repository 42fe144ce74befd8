//! Simulation harnesses: consistency curves, uniform consistency over a
//! family of losses, uniqueness probes, and the first-order optimality
//! residual.
//!
//! All harnesses draw from rotation-symmetric laws centered at a known
//! point, so the population mean is the center itself and the error of a
//! fitted mean set is simply its one-sided set distance to that center.
//! Replicates are independent streams derived from one root seed and run
//! in parallel; aggregation happens in fixed replicate order, so results
//! do not depend on thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::loss::{rho_infinity, Measure};
use crate::phi::Phi;
use crate::sampling::{derive_seed, isotropic_sample, RadialProfile};
use crate::solvers::{solve, tangent_argmin, SolverConfig, SolverMethod, SolverReport, Termination};
use crate::spaces::{Point, Space};
use crate::util::norm;

/// One solved cell of a consistency experiment.
///
/// `rho` and `loss` are NaN when the cell failed; the failure itself is
/// kept in `error`. The estimate and termination stay around so that
/// downstream checks can audit individual solves without re-running
/// them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub replicate: usize,
    pub n: usize,
    /// Loss label, e.g. `power:2`.
    pub label: String,
    pub rho: f64,
    pub loss: f64,
    pub wall_ms: f64,
    pub termination: Option<Termination>,
    pub estimate: Option<Point>,
    pub error: Option<String>,
}

/// Per-sample-size spread of the set distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub n: usize,
    pub median_rho: f64,
    pub p90_rho: f64,
}

/// Output of [`consistency_curve`] and [`uniform_consistency_curve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyResult {
    pub sample_sizes: Vec<usize>,
    /// `per_replicate_rho[r][i]` is the set distance for replicate `r`
    /// at `sample_sizes[i]`; for family runs it is the sup over the
    /// family. NaN marks a failed cell.
    pub per_replicate_rho: Vec<Vec<f64>>,
    pub summary: Vec<SizeSummary>,
    /// One record per solve, in (replicate, size, loss-label) order.
    pub cells: Vec<CellRecord>,
}

/// Distance of one fitted mean to the population center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessEntry {
    pub label: String,
    pub distance: f64,
    pub loss: f64,
    pub wall_ms: f64,
    pub estimate: Point,
    pub termination: Termination,
}

/// Output of [`uniqueness_check`]: all entries should sit on the same
/// point when the sampling law is rotation symmetric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub n: usize,
    pub entries: Vec<UniquenessEntry>,
    pub max_distance: f64,
}

fn validate_sizes(sample_sizes: &[usize], replicates: usize) -> Result<()> {
    if sample_sizes.is_empty() || replicates == 0 {
        return Err(Error::Config("need at least one sample size and one replicate".into()));
    }
    if sample_sizes.contains(&0) {
        return Err(Error::Config("sample sizes must be positive".into()));
    }
    Ok(())
}

/// Distance from the fitted mean to the known population mean.
///
/// Deliberately uses the point estimate, not the certified near-minimizer
/// set: the set's radius is dominated by the certification slack of the
/// final grid level, which would measure the solver's bookkeeping rather
/// than the statistical error these curves are about.
fn fit_error(space: &Space, report: &SolverReport, center: &Point) -> Result<f64> {
    rho_infinity(space, std::slice::from_ref(&report.estimate), std::slice::from_ref(center))
}

/// Run every (size, loss) cell of one replicate on one shared sample.
///
/// The full sample of `max(sizes)` points is drawn once and smaller
/// sizes reuse its prefixes, so growing `n` refines the same empirical
/// measure instead of resampling.
fn run_replicate(
    phis: &[Phi],
    space: &Space,
    center: &Point,
    profile: &RadialProfile,
    sample_sizes: &[usize],
    cfg: &SolverConfig,
    seed: u64,
    replicate: usize,
) -> Result<(Vec<f64>, Vec<CellRecord>)> {
    let max_n = *sample_sizes.iter().max().expect("validated non-empty");
    let points = isotropic_sample(space, center, profile, max_n, derive_seed(seed, replicate as u64))?;
    let full = Measure::equal_weights(*space, points)?;

    let mut sup_rho = Vec::with_capacity(sample_sizes.len());
    let mut cells = Vec::with_capacity(sample_sizes.len() * phis.len());
    for &n in sample_sizes {
        let mu = full.prefix(n)?;
        let mut worst = f64::NEG_INFINITY;
        let mut any_failed = false;
        for phi in phis {
            let t0 = Instant::now();
            let cell = match solve(phi, &mu, SolverMethod::Auto, cfg) {
                Ok(report) => {
                    let rho = fit_error(space, &report, center)?;
                    worst = worst.max(rho);
                    CellRecord {
                        replicate,
                        n,
                        label: phi.label(),
                        rho,
                        loss: report.final_loss,
                        wall_ms: report.wall_ms,
                        termination: Some(report.termination),
                        estimate: Some(report.estimate),
                        error: None,
                    }
                }
                Err(e) => {
                    any_failed = true;
                    CellRecord {
                        replicate,
                        n,
                        label: phi.label(),
                        rho: f64::NAN,
                        loss: f64::NAN,
                        wall_ms: t0.elapsed().as_secs_f64() * 1000.0,
                        termination: None,
                        estimate: None,
                        error: Some(e.to_string()),
                    }
                }
            };
            cells.push(cell);
        }
        sup_rho.push(if any_failed { f64::NAN } else { worst });
    }
    Ok((sup_rho, cells))
}

fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let k = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

fn summarize(sample_sizes: &[usize], matrix: &[Vec<f64>]) -> Vec<SizeSummary> {
    sample_sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let mut col: Vec<f64> =
                matrix.iter().map(|row| row[i]).filter(|v| v.is_finite()).collect();
            col.sort_by(|a, b| a.total_cmp(b));
            if col.is_empty() {
                return SizeSummary { n, median_rho: f64::NAN, p90_rho: f64::NAN };
            }
            let median = if col.len() % 2 == 1 {
                col[col.len() / 2]
            } else {
                0.5 * (col[col.len() / 2 - 1] + col[col.len() / 2])
            };
            SizeSummary { n, median_rho: median, p90_rho: nearest_rank(&col, 0.9) }
        })
        .collect()
}

fn family_curve(
    phis: &[Phi],
    space: &Space,
    center: &Point,
    profile: &RadialProfile,
    sample_sizes: &[usize],
    replicates: usize,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<ConsistencyResult> {
    validate_sizes(sample_sizes, replicates)?;
    if phis.is_empty() {
        return Err(Error::Config("need at least one loss".into()));
    }
    cfg.validate()?;
    space.validate_point(center)?;

    let per_replicate: Vec<(Vec<f64>, Vec<CellRecord>)> = (0..replicates)
        .into_par_iter()
        .map(|r| run_replicate(phis, space, center, profile, sample_sizes, cfg, seed, r))
        .collect::<Result<Vec<_>>>()?;

    let mut per_replicate_rho = Vec::with_capacity(replicates);
    let mut cells = Vec::new();
    for (rho, cell) in per_replicate {
        per_replicate_rho.push(rho);
        cells.extend(cell);
    }
    let summary = summarize(sample_sizes, &per_replicate_rho);
    Ok(ConsistencyResult { sample_sizes: sample_sizes.to_vec(), per_replicate_rho, summary, cells })
}

/// Error of the fitted mean against the known center as the sample
/// grows, over independent replicates.
///
/// Solver failures are recorded in the affected cell and leave a NaN in
/// the matrix; they do not abort the sweep.
#[allow(clippy::too_many_arguments)]
pub fn consistency_curve(
    phi: &Phi,
    space: &Space,
    center: &Point,
    profile: &RadialProfile,
    sample_sizes: &[usize],
    replicates: usize,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<ConsistencyResult> {
    family_curve(
        std::slice::from_ref(phi),
        space,
        center,
        profile,
        sample_sizes,
        replicates,
        cfg,
        seed,
    )
}

/// Like [`consistency_curve`] but over the whole family `t^p` for `p`
/// in `p_grid`, recording the worst member per cell.
///
/// Every member sees the same sample in the same replicate, so the
/// matrix is a true per-sample sup, not a mixture of independent runs.
#[allow(clippy::too_many_arguments)]
pub fn uniform_consistency_curve(
    p_grid: &[f64],
    space: &Space,
    center: &Point,
    profile: &RadialProfile,
    sample_sizes: &[usize],
    replicates: usize,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<ConsistencyResult> {
    let phis: Result<Vec<Phi>> = p_grid.iter().map(|&p| Phi::power(p)).collect();
    family_curve(&phis?, space, center, profile, sample_sizes, replicates, cfg, seed)
}

/// Fit the mean for several losses on one large sample and report each
/// one's distance to the center.
pub fn uniqueness_check(
    space: &Space,
    center: &Point,
    profile: &RadialProfile,
    phis: &[Phi],
    n: usize,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<UniquenessReport> {
    if phis.is_empty() || n == 0 {
        return Err(Error::Config("need at least one loss and one sample point".into()));
    }
    cfg.validate()?;
    let points = isotropic_sample(space, center, profile, n, derive_seed(seed, 0))?;
    let mu = Measure::equal_weights(*space, points)?;

    let entries: Vec<UniquenessEntry> = phis
        .par_iter()
        .map(|phi| {
            let report = solve(phi, &mu, SolverMethod::Auto, cfg)?;
            let distance = fit_error(space, &report, center)?;
            Ok(UniquenessEntry {
                label: phi.label(),
                distance,
                loss: report.final_loss,
                wall_ms: report.wall_ms,
                estimate: report.estimate,
                termination: report.termination,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_distance = entries.iter().map(|e| e.distance).fold(0.0, f64::max);
    Ok(UniquenessReport { n, entries, max_distance })
}

/// Norm of the tangent-space minimizer at `candidate`.
///
/// The measure is pulled back through the log map at `candidate` and the
/// flat problem is solved there with `cfg.inner_solver`; a zero norm is
/// the first-order condition for `candidate` to be a mean. Atoms on the
/// cut locus of `candidate` surface as a cut-locus error.
pub fn tangent_optimality_residual(
    phi: &Phi,
    mu: &Measure,
    candidate: &Point,
    cfg: &SolverConfig,
) -> Result<f64> {
    Ok(norm(&tangent_argmin(phi, mu, candidate, cfg)?))
}

/// Long-form CSV of an experiment's cells.
///
/// Columns: experiment_id, replicate, n, p, rho, loss, wall_ms. Failed
/// cells leave rho and loss empty. Numbers use shortest round-trip
/// formatting, so files are byte-stable across runs up to `wall_ms`.
pub fn cells_to_csv(experiment_id: &str, cells: &[CellRecord]) -> String {
    let mut out = String::from("experiment_id,replicate,n,p,rho,loss,wall_ms\n");
    for c in cells {
        let num = |v: f64| if v.is_finite() { v.to_string() } else { String::new() };
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            experiment_id,
            c.replicate,
            c.n,
            c.label,
            num(c.rho),
            num(c.loss),
            c.wall_ms
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sphere_center() -> (Space, Point) {
        let s = Space::Sphere { dim: 2 };
        let c = s.point(vec![0.0, 0.0, 1.0]).unwrap();
        (s, c)
    }

    #[test]
    fn collapsed_profile_pins_every_cell() {
        let (s, c) = sphere_center();
        let phi = Phi::power(2.0).unwrap();
        let profile = RadialProfile::StepDecay { radius: 1e-6 };
        let res = consistency_curve(
            &phi,
            &s,
            &c,
            &profile,
            &[5, 20],
            4,
            &SolverConfig::default(),
            3,
        )
        .unwrap();
        assert_eq!(res.per_replicate_rho.len(), 4);
        for row in &res.per_replicate_rho {
            assert_eq!(row.len(), 2);
            for &v in row {
                assert!(v <= 2e-6, "rho {v} for a near-Dirac sample");
            }
        }
        assert_eq!(res.cells.len(), 8);
    }

    #[test]
    fn line_curve_matches_the_arithmetic_oracle() {
        let s = Space::Euclidean { dim: 1 };
        let c = s.point(vec![0.0]).unwrap();
        let phi = Phi::power(2.0).unwrap();
        let profile = RadialProfile::ExpDecay { rate: 1.0 };
        let res =
            consistency_curve(&phi, &s, &c, &profile, &[1000], 3, &SolverConfig::default(), 11)
                .unwrap();
        for (r, row) in res.per_replicate_rho.iter().enumerate() {
            let pts = isotropic_sample(&s, &c, &profile, 1000, derive_seed(11, r as u64)).unwrap();
            let mean: f64 = pts.iter().map(|p| p.0[0]).sum::<f64>() / 1000.0;
            assert!(
                (row[0] - mean.abs()).abs() <= 1e-6,
                "solver rho {} vs oracle {}",
                row[0],
                mean.abs()
            );
        }
    }

    #[test]
    fn singleton_family_reduces_to_the_plain_curve() {
        let (s, c) = sphere_center();
        let phi = Phi::power(2.0).unwrap();
        let profile = RadialProfile::ExpDecay { rate: 1.0 };
        let cfg = SolverConfig { grid_levels: 6, ..SolverConfig::default() };
        let plain = consistency_curve(&phi, &s, &c, &profile, &[10, 40], 3, &cfg, 5).unwrap();
        let family = uniform_consistency_curve(&[2.0], &s, &c, &profile, &[10, 40], 3, &cfg, 5).unwrap();
        assert_eq!(plain.per_replicate_rho, family.per_replicate_rho);
        assert_eq!(plain.cells.len(), family.cells.len());
        for (a, b) in plain.cells.iter().zip(&family.cells) {
            // wall_ms is the one field allowed to differ between runs.
            assert_eq!((a.replicate, a.n, &a.label), (b.replicate, b.n, &b.label));
            assert_eq!(a.rho.to_bits(), b.rho.to_bits());
            assert_eq!(a.loss.to_bits(), b.loss.to_bits());
            assert_eq!(a.estimate, b.estimate);
        }
    }

    #[test]
    fn family_sup_dominates_every_member() {
        let (s, c) = sphere_center();
        let profile = RadialProfile::ExpDecay { rate: 1.0 };
        let cfg = SolverConfig { grid_levels: 6, ..SolverConfig::default() };
        let res =
            uniform_consistency_curve(&[1.5, 2.0, 3.0], &s, &c, &profile, &[10, 30], 2, &cfg, 9)
                .unwrap();
        for cell in &res.cells {
            let i = res.sample_sizes.iter().position(|&n| n == cell.n).unwrap();
            let sup = res.per_replicate_rho[cell.replicate][i];
            assert!(cell.rho <= sup + 1e-15, "member {} above sup {}", cell.rho, sup);
        }
    }

    #[test]
    fn uniqueness_on_a_tight_cloud() {
        let (s, c) = sphere_center();
        let profile = RadialProfile::StepDecay { radius: 1e-6 };
        let phis =
            vec![Phi::power(1.5).unwrap(), Phi::power(2.0).unwrap(), Phi::exp_minus_one(2.0).unwrap()];
        let report =
            uniqueness_check(&s, &c, &profile, &phis, 200, &SolverConfig::default(), 17).unwrap();
        assert_eq!(report.entries.len(), 3);
        assert!(report.max_distance <= 2e-6);
    }

    #[test]
    fn residual_vanishes_at_the_arithmetic_mean() {
        let s = Space::Euclidean { dim: 2 };
        let atoms = vec![
            s.point(vec![1.0, 0.0]).unwrap(),
            s.point(vec![0.0, 2.0]).unwrap(),
            s.point(vec![-1.0, 1.0]).unwrap(),
        ];
        let mu = Measure::equal_weights(s, atoms).unwrap();
        let phi = Phi::power(2.0).unwrap();
        let mean = s.point(vec![0.0, 1.0]).unwrap();
        let r = tangent_optimality_residual(&phi, &mu, &mean, &SolverConfig::default()).unwrap();
        assert!(r <= 1e-10);

        let off = s.point(vec![3.0, 1.0]).unwrap();
        let r_off = tangent_optimality_residual(&phi, &mu, &off, &SolverConfig::default()).unwrap();
        assert_relative_eq!(r_off, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn failed_cells_are_recorded_not_fatal() {
        let (s, c) = sphere_center();
        // The closed-form inner step rejects p != 2, so tangent flips
        // inside this config never run; instead make the solve fail by
        // a loss whose tabulated domain is too short for the data.
        let phi = Phi::tabulated(vec![[0.0, 0.0], [1e-3, 1.0]]).unwrap();
        let profile = RadialProfile::ExpDecay { rate: 1.0 };
        let cfg = SolverConfig { grid_levels: 4, ..SolverConfig::default() };
        let res = consistency_curve(&phi, &s, &c, &profile, &[10], 2, &cfg, 21).unwrap();
        for row in &res.per_replicate_rho {
            assert!(row[0].is_nan());
        }
        for cell in &res.cells {
            assert!(cell.error.is_some());
            assert!(cell.rho.is_nan());
        }
        assert!(res.summary[0].median_rho.is_nan());
    }

    #[test]
    fn csv_has_the_documented_shape() {
        let cells = vec![CellRecord {
            replicate: 0,
            n: 10,
            label: "power:2".into(),
            rho: 0.25,
            loss: 1.5,
            wall_ms: 3.0,
            termination: Some(Termination::Converged),
            estimate: None,
            error: None,
        }];
        let csv = cells_to_csv("consistency", &cells);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "experiment_id,replicate,n,p,rho,loss,wall_ms");
        assert_eq!(lines.next().unwrap(), "consistency,0,10,power:2,0.25,1.5,3");
        assert!(lines.next().is_none());
    }
}
