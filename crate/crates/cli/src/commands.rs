//! `simulate` and `stability`, the subcommands that do not build a full
//! report bundle.

use std::time::Instant;

use causal_mia::rng::derive_seed;
use causal_mia::stability::{estimate_stability, theorem_deviation, StabilityEstimate};
use causal_mia::synthgen::{sample_members, sample_shifted};
use causal_mia::Dataset;
use serde::Serialize;

use crate::bundle::{BundleWriter, Manifest, ManifestHeader};
use crate::config::RunConfig;
use crate::error::{CliError, Result};

fn dataset_csv(data: &Dataset) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (0..data.dim).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for p in &data.points {
        let mut row: Vec<String> = p.features.iter().map(|v| format!("{v:e}")).collect();
        row.push(format!("{:e}", p.label));
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| CliError::Io { path: "dataset.csv".into(), source: e.into_error() })
}

/// Draws the problem of the first repetition and writes `problem.json`,
/// `members.csv` (from `P_T`) and `nonmembers.csv` (from the shifted `P_0`).
pub fn simulate(cfg: &RunConfig) -> Result<Manifest> {
    cfg.params.validate()?;
    let started = Instant::now();
    let seed = derive_seed(cfg.master_seed, 0);
    let spec = cfg.params.problem(derive_seed(seed, 0))?;
    let members = sample_members(&spec, cfg.params.n_members, derive_seed(seed, 10))?;
    let nonmembers = sample_shifted(&spec, cfg.params.n_nonmembers, derive_seed(seed, 11))?;
    let mut w = BundleWriter::create(&cfg.output_dir)?;
    w.write("problem.json", spec.to_json()?.as_bytes())?;
    w.write("members.csv", &dataset_csv(&members)?)?;
    w.write("nonmembers.csv", &dataset_csv(&nonmembers)?)?;
    w.finish(ManifestHeader::new("simulate", cfg, vec![seed], started)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    #[serde(flatten)]
    pub estimate: StabilityEstimate,
    /// Deviation scale at `t = 3` with the configured overlap `η`, up to the
    /// unknown universal constant.
    pub deviation_scale_t3: f64,
}

pub fn stability(cfg: &RunConfig) -> Result<(StabilityReport, Manifest)> {
    cfg.params.validate()?;
    let started = Instant::now();
    let seed = derive_seed(cfg.master_seed, 0);
    let spec = cfg.params.problem(derive_seed(seed, 0))?;
    let estimate = estimate_stability(&spec, &cfg.params.trainer, &cfg.stability, derive_seed(seed, 1))?;
    let deviation = theorem_deviation(estimate.alpha_hat, estimate.beta_hat, estimate.n_train, 3.0, Some(cfg.params.eta), None)?;
    let report = StabilityReport { estimate, deviation_scale_t3: deviation };
    let mut w = BundleWriter::create(&cfg.output_dir)?;
    w.write("stability.json", &serde_json::to_vec_pretty(&report)?)?;
    let manifest = w.finish(ManifestHeader::new("stability", cfg, vec![seed], started)?)?;
    Ok((report, manifest))
}
