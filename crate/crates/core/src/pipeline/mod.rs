//! The experiment workflow: synthesize data on the fine mesh, contaminate
//! it, reconstruct on the coarse mesh and render images, with every step
//! reading and writing files.

mod reconstruction;
pub mod validation;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use log::{error, info};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::domain::{build_meshes, rasterize, restrict_to_coarse, Mesh, PermittivityMap, Phantom};
use crate::enhance::{render_set, write_image};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::inverse::{render_log, run_inversion_logged, InverseProblem, LogEntry, Status};
use crate::measurement::{
    build_geometry, contaminate, read_dataset, synthesize, write_dataset, MeasurementGeometry, MeasurementSet,
};

pub use reconstruction::{
    parse_reconstruction, read_reconstruction, render_reconstruction, write_reconstruction,
    RECONSTRUCTION_VERSION,
};
pub use validation::{validation_checks, Check};

/// Everything derived from a config before any solve.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: RunConfig,
    pub config_digest: String,
    pub phantom: Phantom,
    pub fine: Mesh,
    pub coarse: Mesh,
    pub truth_fine: PermittivityMap,
    /// Ground truth averaged onto the coarse mesh; its known cells are the
    /// fixed cells of the inversion.
    pub truth_coarse: PermittivityMap,
    pub geometry: MeasurementGeometry,
}

impl Experiment {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let (fine, coarse) = build_meshes(&config.domain)?;
        let phantom = config.phantom()?;
        let truth_fine = rasterize(&phantom, &fine);
        let truth_coarse = restrict_to_coarse(&truth_fine, &coarse)?;
        let geometry = build_geometry(&config.geometry, coarse.outer(), config.frequency_ghz)?;
        Ok(Experiment {
            config_digest: config.digest(),
            config,
            phantom,
            fine,
            coarse,
            truth_fine,
            truth_coarse,
            geometry,
        })
    }

    /// Clean data from the fine mesh.
    pub fn synthesize(&self) -> Result<MeasurementSet> {
        let mut set = synthesize(
            &self.truth_fine,
            &self.geometry,
            self.config.frequency_ghz,
            self.config.field_mode,
        )?;
        set.config_digest = Some(self.config_digest.clone());
        Ok(set)
    }

    pub fn inverse_problem(&self) -> Result<InverseProblem> {
        InverseProblem::new(
            &self.truth_coarse,
            &self.geometry,
            self.config.frequency_ghz,
            self.config.field_mode,
        )
    }

    /// Mean reconstructed permittivity over the unknown coarse cells whose
    /// centre lies in each phantom region (by last-region-wins labelling).
    pub fn region_means(&self, map: &PermittivityMap) -> Vec<RegionMean> {
        let labels = self.phantom.labels(&self.coarse);
        self.phantom
            .regions()
            .iter()
            .enumerate()
            .filter_map(|(r, region)| {
                let cells: Vec<usize> = (0..labels.len())
                    .filter(|&i| labels[i] == Some(r) && !map.known()[i])
                    .collect();
                if cells.is_empty() {
                    return None;
                }
                let n = cells.len() as f64;
                Some(RegionMean {
                    name: region.name.clone(),
                    cells: cells.len(),
                    re: cells.iter().map(|&i| map.values()[i].re).sum::<f64>() / n,
                    im: cells.iter().map(|&i| map.values()[i].im).sum::<f64>() / n,
                    true_re: region.permittivity.re,
                    true_im: region.permittivity.im,
                })
            })
            .collect()
    }

    /// RMS of `|eps - eps_true|` over the whole coarse map, against the
    /// restricted ground truth.
    pub fn rms_error(&self, map: &PermittivityMap) -> f64 {
        let truth = self.truth_coarse.values();
        let sum: f64 = map
            .values()
            .iter()
            .zip(truth)
            .map(|(a, b)| (a.to_complex() - b.to_complex()).norm_sqr())
            .sum();
        (sum / truth.len() as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionMean {
    pub name: String,
    pub cells: usize,
    pub re: f64,
    pub im: f64,
    pub true_re: f64,
    pub true_im: f64,
}

/// Synthesizes clean data and writes it to `path`.
pub fn cmd_forward(exp: &Experiment, path: &Path) -> Result<MeasurementSet> {
    let set = exp.synthesize()?;
    write_dataset(&set, path)?;
    info!("wrote {} records to {}", set.values.len(), path.display());
    Ok(set)
}

/// Adds noise to a clean dataset file.
pub fn cmd_contaminate(input: &Path, percent: f64, seed: u64, output: &Path) -> Result<MeasurementSet> {
    let clean = read_dataset(input)?;
    let noisy = contaminate(&clean, percent, seed)?;
    write_dataset(&noisy, output)?;
    Ok(noisy)
}

#[derive(Debug, Clone, Serialize)]
struct InversionMeta<'a> {
    config_digest: &'a str,
    dataset_provenance: &'a str,
    geometry_digest: &'a str,
    noise_percent: f64,
    rng_seed: u64,
    status: &'a str,
    iterations: usize,
    final_residual: f64,
    final_lambda: f64,
    accepted_residuals: Vec<f64>,
    fd_check_error: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct InvertOutput {
    pub map: PermittivityMap,
    pub status: Status,
    pub iterations: usize,
    pub final_residual: f64,
    pub accepted_residuals: Vec<f64>,
    pub reconstruction: PathBuf,
    pub meta: PathBuf,
    pub log: PathBuf,
}

fn write_log(path: &Path, config_digest: &str, log: &[LogEntry]) -> Result<()> {
    let text = format!("# config {config_digest}\n{}", render_log(log));
    fsutil::write_atomic(path, text.as_bytes())
}

/// Reconstructs from a dataset file into `out_dir`: `reconstruction.txt`,
/// `meta.json` and `iterations.log`. The log is written even when the
/// solver fails.
pub fn cmd_invert(exp: &Experiment, dataset: &Path, out_dir: &Path) -> Result<InvertOutput> {
    let data = read_dataset(dataset)?;
    let problem = exp.inverse_problem()?;
    problem.check_dataset(&data)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let log_path = out_dir.join("iterations.log");
    let cfg = &exp.config.inverse;
    let start = vec![cfg.initial_guess; problem.unknowns().len()];
    let mut log = Vec::new();
    let outcome = match run_inversion_logged(&problem, &data, cfg, start, &mut log) {
        Ok(o) => o,
        Err(e) => {
            write_log(&log_path, &exp.config_digest, &log)?;
            return Err(e);
        }
    };
    write_log(&log_path, &exp.config_digest, &log)?;

    let recon_path = out_dir.join("reconstruction.txt");
    write_reconstruction(&outcome.map, Some(&exp.config_digest), &recon_path)?;
    let accepted_residuals: Vec<f64> = outcome.state.history.iter().map(|h| h.residual_norm).collect();
    let meta = InversionMeta {
        config_digest: &exp.config_digest,
        dataset_provenance: &data.provenance,
        geometry_digest: problem.geometry_digest(),
        noise_percent: data.noise_percent,
        rng_seed: data.rng_seed,
        status: outcome.status.as_str(),
        iterations: outcome.state.iteration,
        final_residual: outcome.state.residual_norm,
        final_lambda: outcome.state.lambda,
        accepted_residuals: accepted_residuals.clone(),
        fd_check_error: outcome.fd_check_error,
    };
    let meta_path = out_dir.join("meta.json");
    let json = serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n";
    fsutil::write_atomic(&meta_path, json.as_bytes())?;
    Ok(InvertOutput {
        status: outcome.status,
        iterations: outcome.state.iteration,
        final_residual: outcome.state.residual_norm,
        accepted_residuals,
        map: outcome.map,
        reconstruction: recon_path,
        meta: meta_path,
        log: log_path,
    })
}

/// Writes the raw and enhanced real/imaginary images of the unknown region
/// of a reconstruction file.
pub fn cmd_enhance(config: &RunConfig, reconstruction: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let (map, _) = read_reconstruction(reconstruction)?;
    let window = map.unknown_window()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let digest = config.digest();
    render_set(&window, &config.enhance)?
        .into_iter()
        .map(|(name, image)| {
            let path = out_dir.join(name);
            write_image(&image, &path, Some(&digest))?;
            Ok(path)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchReport {
    pub percent: f64,
    pub seed: u64,
    /// Inversion status, or `failed`.
    pub status: String,
    pub iterations: Option<usize>,
    pub final_residual: Option<f64>,
    pub accepted_residuals: Vec<f64>,
    pub region_means: Vec<RegionMean>,
    pub rms_error: Option<f64>,
    /// Files of this branch, relative to the run directory.
    pub artifacts: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub config_digest: String,
    pub clean_dataset: String,
    pub data_count: usize,
    pub unknowns: usize,
    pub fixed_cells: usize,
    pub branches: Vec<BranchReport>,
    pub failed_branches: usize,
    pub note: Option<String>,
}

impl PipelineReport {
    pub fn succeeded(&self) -> bool {
        self.failed_branches == 0
    }
}

/// Directory name of the branch for `percent`.
pub fn branch_dir_name(percent: f64) -> String {
    format!("noise-{percent}pct")
}

fn relative(run_dir: &Path, p: &Path) -> String {
    p.strip_prefix(run_dir).unwrap_or(p).display().to_string()
}

fn run_branch(exp: &Experiment, run_dir: &Path, clean: &Path, percent: f64) -> Result<BranchReport> {
    let seed = exp.config.noise.seed;
    let dir = run_dir.join(branch_dir_name(percent));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let data_path = dir.join("data.txt");
    cmd_contaminate(clean, percent, seed, &data_path)?;
    let inv = cmd_invert(exp, &data_path, &dir)?;
    let images = cmd_enhance(&exp.config, &inv.reconstruction, &dir)?;
    let mut artifacts = vec![&data_path, &inv.reconstruction, &inv.meta, &inv.log];
    artifacts.extend(images.iter());
    Ok(BranchReport {
        percent,
        seed,
        status: inv.status.as_str().to_string(),
        iterations: Some(inv.iterations),
        final_residual: Some(inv.final_residual),
        accepted_residuals: inv.accepted_residuals,
        region_means: exp.region_means(&inv.map),
        rms_error: Some(exp.rms_error(&inv.map)),
        artifacts: artifacts.into_iter().map(|p| relative(run_dir, p)).collect(),
        error: None,
    })
}

/// Full experiment into `run_dir`: clean data once, then one
/// contaminate-invert-enhance branch per configured noise level, run
/// concurrently. A failing branch is reported and does not stop the others.
pub fn cmd_pipeline(exp: &Experiment, run_dir: &Path) -> Result<PipelineReport> {
    let percents = &exp.config.noise.percents;
    let distinct: BTreeSet<String> = percents.iter().map(|&p| branch_dir_name(p)).collect();
    if distinct.len() != percents.len() {
        return Err(Error::Config {
            key: "noise.percents".into(),
            message: "noise levels must be distinct".into(),
        });
    }
    std::fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let config_text = format!("# config digest {}\n{}", exp.config_digest, exp.config.to_toml_string());
    fsutil::write_atomic(&run_dir.join("config.toml"), config_text.as_bytes())?;
    let clean = run_dir.join("data_clean.txt");
    let set = cmd_forward(exp, &clean)?;

    let branches: Vec<BranchReport> = percents
        .par_iter()
        .map(|&percent| {
            run_branch(exp, run_dir, &clean, percent).unwrap_or_else(|e| {
                error!("branch {percent}% failed: {e}");
                BranchReport {
                    percent,
                    seed: exp.config.noise.seed,
                    status: "failed".into(),
                    iterations: None,
                    final_residual: None,
                    accepted_residuals: Vec::new(),
                    region_means: Vec::new(),
                    rms_error: None,
                    artifacts: Vec::new(),
                    error: Some(e.to_string()),
                }
            })
        })
        .collect();
    let failed_branches = branches.iter().filter(|b| b.status == "failed").count();
    let unknowns = exp.truth_coarse.unknown_indices().len();
    let report = PipelineReport {
        config_digest: exp.config_digest.clone(),
        clean_dataset: relative(run_dir, &clean),
        data_count: set.values.len(),
        unknowns,
        fixed_cells: exp.coarse.len() - unknowns,
        note: branches.is_empty().then(|| "no noise levels requested; forward run only".to_string()),
        branches,
        failed_branches,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    fsutil::write_atomic(&run_dir.join("report.json"), json.as_bytes())?;
    Ok(report)
}
