//! Grid sweeps: one experiment per grid point, each with its own hash.

use std::path::Path;

use serde::Serialize;

use crate::config::{ExperimentConfig, GridPreset};
use crate::error::{CliError, Result};
use crate::output::write_atomic;
use crate::run::{execute, plan, Status};

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub label: String,
    pub config_hash: String,
    /// `completed`, `up_to_date`, `skipped` or `failed`.
    pub status: String,
    pub message: Option<String>,
    /// `(solver, final ‖∇φ‖, total_cost)` per run.
    pub results: Vec<(String, Option<f64>, f64)>,
}

/// Runs every point of `preset`. Points whose settings are invalid for the
/// problem (e.g. `λ < 2ℓ/μ`) are skipped, not fatal. Writes
/// `sweep-<preset>.json` next to the per-point directories.
pub fn sweep(
    base: &ExperimentConfig,
    preset_name: &str,
    base_dir: &Path,
    root: &Path,
    threads: usize,
    force: bool,
) -> Result<Vec<SweepPoint>> {
    let preset = GridPreset::named(preset_name)?;
    let mut points = Vec::new();
    for (label, cfg) in preset.expand(base) {
        let hash = cfg.hash();
        let mut point = SweepPoint {
            label: label.clone(),
            config_hash: hash,
            status: String::new(),
            message: None,
            results: Vec::new(),
        };
        match plan(&cfg, base_dir, root) {
            Err(CliError::Config(m)) => {
                log::warn!("{label}: skipped ({m})");
                point.status = "skipped".into();
                point.message = Some(m);
            }
            Err(e) => return Err(e),
            Ok(p) => match execute(&p, threads, force) {
                Ok(Status::Completed(s)) => {
                    point.status = "completed".into();
                    point.results = s
                        .runs
                        .iter()
                        .map(|r| (r.solver.to_string(), r.final_grad_norm, r.total_cost))
                        .collect();
                }
                Ok(Status::UpToDate { .. }) => point.status = "up_to_date".into(),
                Err(e @ CliError::Solver(_)) => {
                    log::warn!("{label}: {e}");
                    point.status = "failed".into();
                    point.message = Some(e.to_string());
                }
                Err(e) => return Err(e),
            },
        }
        points.push(point);
    }
    let sub = base.output.clone().unwrap_or_else(|| base.name.clone().into());
    let index = root.join(sub).join(format!("sweep-{preset_name}.json"));
    let mut text = serde_json::to_string_pretty(&points).expect("serializable");
    text.push('\n');
    write_atomic(&index, text.as_bytes())?;
    Ok(points)
}
