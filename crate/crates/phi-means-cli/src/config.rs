//! TOML experiment manifests and their merge with command-line flags.
//!
//! Precedence is flag > file > built-in default, per field. The file is
//! flat except for a `[solver]` table, so a manifest checked into a repo
//! documents a whole run and the flags stay free for one-off tweaks.

use phi_means::solvers::{InnerSolverKind, SolverConfig, StepRule};
use serde::Deserialize;

/// Everything a manifest may set. All optional; unknown keys are errors
/// so typos do not silently fall back to defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub space: Option<String>,
    pub phi: Option<String>,
    pub phi_list: Option<Vec<String>>,
    pub p_grid: Option<Vec<f64>>,
    pub profile: Option<String>,
    pub center: Option<Vec<f64>>,
    pub sizes: Option<Vec<usize>>,
    pub replicates: Option<usize>,
    pub sample: Option<usize>,
    pub sample_size: Option<usize>,
    pub measure: Option<String>,
    pub measure_json: Option<String>,
    pub method: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub plot: Option<bool>,
    pub solver: Option<SolverTable>,
}

/// Partial `[solver]` table; unset fields keep library defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverTable {
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub grid_levels: Option<usize>,
    pub grid_points_per_level: Option<usize>,
    pub step_size: Option<f64>,
    pub step_rule: Option<String>,
    pub inner_solver: Option<String>,
}

/// Solver flags as they arrive from clap; same shape as [`SolverTable`].
#[derive(Debug, Default)]
pub struct SolverFlags {
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub grid_levels: Option<usize>,
    pub grid_points_per_level: Option<usize>,
    pub step_size: Option<f64>,
    pub step_rule: Option<String>,
    pub inner_solver: Option<String>,
}

pub fn parse_step_rule(text: &str) -> Result<StepRule, String> {
    match text {
        "fixed" => Ok(StepRule::Fixed),
        "barzilai-borwein" | "bb" => Ok(StepRule::BarzilaiBorwein),
        _ => Err(format!("unknown step rule `{text}` (expected fixed or barzilai-borwein)")),
    }
}

pub fn parse_inner_solver(text: &str) -> Result<InnerSolverKind, String> {
    match text {
        "closed-form-mean" => Ok(InnerSolverKind::ClosedFormMean),
        "grid-on-tangent" => Ok(InnerSolverKind::GridOnTangent),
        "gradient-on-tangent" => Ok(InnerSolverKind::GradientOnTangent),
        _ => Err(format!(
            "unknown inner solver `{text}` (expected closed-form-mean, grid-on-tangent, or gradient-on-tangent)"
        )),
    }
}

/// Build the effective solver configuration from defaults, the manifest
/// table, and the flags, in that order.
pub fn merge_solver(file: Option<&SolverTable>, flags: &SolverFlags) -> Result<SolverConfig, String> {
    let mut cfg = SolverConfig::default();
    let empty = SolverTable::default();
    let file = file.unwrap_or(&empty);

    cfg.max_iters = flags.max_iters.or(file.max_iters).unwrap_or(cfg.max_iters);
    cfg.tol = flags.tol.or(file.tol).unwrap_or(cfg.tol);
    cfg.grid_levels = flags.grid_levels.or(file.grid_levels).unwrap_or(cfg.grid_levels);
    cfg.grid_points_per_level = flags
        .grid_points_per_level
        .or(file.grid_points_per_level)
        .unwrap_or(cfg.grid_points_per_level);
    cfg.step_size = flags.step_size.or(file.step_size).unwrap_or(cfg.step_size);
    if let Some(rule) = flags.step_rule.as_deref().or(file.step_rule.as_deref()) {
        cfg.step_rule = parse_step_rule(rule)?;
    }
    if let Some(inner) = flags.inner_solver.as_deref().or(file.inner_solver.as_deref()) {
        cfg.inner_solver = parse_inner_solver(inner)?;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

pub fn load_file(path: &std::path::Path) -> Result<FileConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))
}
