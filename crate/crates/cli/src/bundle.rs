//! Report bundles: metrics tables, ROC and evidence files, and a manifest
//! that hashes every file written.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use causal_mia::estimators::{dp_roc_bound, DpBound, EstimatorKind, MetricsReport};
use causal_mia::experiment::{aggregate, evidence_name, run_repetition, AggregateRow};
use causal_mia::rng::derive_seed;
use causal_mia::RocCurve;
use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{io_at, CliError, Result};
use crate::svg::render_roc;

pub const MANIFEST: &str = "manifest.json";
pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const DP_BOUND_CSV: &str = "dp_bound.csv";
pub const ROC_SVG: &str = "roc.svg";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    let located = RunConfig { output_dir: PathBuf::new(), ..cfg.clone() };
    Ok(sha256_hex(&serde_json::to_vec(&located)?))
}

/// Single writer for a bundle directory; records the hash of every file.
pub struct BundleWriter {
    dir: PathBuf,
    files: BTreeMap<String, String>,
}

impl BundleWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(io_at(dir))?;
        Ok(Self { dir: dir.to_path_buf(), files: BTreeMap::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(io_at(&path))?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn finish(self, manifest: ManifestHeader) -> Result<Manifest> {
        let m = Manifest { header: manifest, files: self.files };
        let path = self.dir.join(MANIFEST);
        std::fs::write(&path, serde_json::to_vec_pretty(&m)?).map_err(io_at(&path))?;
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub command: String,
    pub version: String,
    /// SHA-256 of the effective config serialized as JSON, with the output
    /// directory blanked so relocated runs hash alike.
    pub config_hash: String,
    pub effective_config: RunConfig,
    pub seeds: Vec<u64>,
    pub threads: usize,
    pub wall_time_secs: f64,
    pub failed_cells: usize,
    pub total_cells: usize,
}

impl ManifestHeader {
    pub fn new(command: &str, cfg: &RunConfig, seeds: Vec<u64>, started: Instant) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash(cfg)?,
            effective_config: cfg.clone(),
            seeds,
            threads: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            wall_time_secs: started.elapsed().as_secs_f64(),
            failed_cells: 0,
            total_cells: 0,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(flatten)]
    pub header: ManifestHeader,
    /// File name to SHA-256, excluding the manifest itself.
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(io_at(&path))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Writes `name` into the bundle at `dir` and records it.
    pub fn add_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
        let mut m = Self::load(dir)?;
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(io_at(&path))?;
        m.files.insert(name.to_string(), sha256_hex(bytes));
        let mpath = dir.join(MANIFEST);
        std::fs::write(&mpath, serde_json::to_vec_pretty(&m)?).map_err(io_at(&mpath))?;
        Ok(())
    }
}

/// One (repetition, regime, estimator) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub repetition: usize,
    pub seed: u64,
    pub regime: String,
    pub estimator: EstimatorKind,
    /// Evidence file the cell was computed from.
    pub evidence: String,
    pub roc: Option<String>,
    pub report: Option<MetricsReport>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsDoc {
    pub cells: Vec<CellRecord>,
    pub aggregate: Vec<AggregateRow>,
    /// Per repetition, when a learned propensity was fitted.
    pub delta_pi: Vec<Option<f64>>,
    pub learned_separation_warning: Vec<bool>,
}

impl MetricsDoc {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(METRICS_JSON);
        let text = std::fs::read_to_string(&path).map_err(io_at(&path))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn reaggregate(&self) -> Vec<AggregateRow> {
        let rows: Vec<_> = self.cells.iter().map(|c| (c.regime.clone(), c.estimator, c.report.clone())).collect();
        aggregate(&rows)
    }

    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    pub dump_features: bool,
    pub svg: bool,
}

pub fn roc_file(regime: &str, estimator: EstimatorKind, repetition: usize) -> String {
    if repetition == 0 {
        format!("roc_{regime}_{}.csv", estimator.as_str())
    } else {
        format!("roc_{regime}_{}_rep{repetition}.csv", estimator.as_str())
    }
}

fn evidence_file(name: &str, repetition: usize, ext: &str) -> String {
    format!("evidence_{name}_rep{repetition}.{ext}")
}

pub fn repetition_seeds(cfg: &RunConfig) -> Vec<u64> {
    (0..cfg.repetitions).map(|r| derive_seed(cfg.master_seed, r as u64)).collect()
}

/// The DP bound a bundle reports, if any.
pub fn bundle_bound(cfg: &RunConfig) -> Option<DpBound> {
    cfg.params.dp_bound.map(|(e, d)| dp_roc_bound(e, d))
}

/// Runs every requested regime and estimator for each repetition and writes
/// the bundle to `cfg.output_dir`. Failed cells are recorded, not fatal.
pub fn run_scenario(cfg: &RunConfig, opts: RunOptions) -> Result<Manifest> {
    cfg.validate()?;
    let started = Instant::now();
    let mut w = BundleWriter::create(&cfg.output_dir)?;
    let seeds = repetition_seeds(cfg);
    let mut doc = MetricsDoc { cells: Vec::new(), aggregate: Vec::new(), delta_pi: Vec::new(), learned_separation_warning: Vec::new() };
    let mut first_curves: Vec<(String, RocCurve)> = Vec::new();

    for (rep, &seed) in seeds.iter().enumerate() {
        info!("repetition {rep} (seed {seed})");
        let out = run_repetition(&cfg.params, &cfg.regimes, &cfg.estimators, seed)?;
        for (name, ev) in &out.evidence {
            let mut buf = Vec::new();
            ev.write_csv(&mut buf)?;
            w.write(&evidence_file(name, rep, "csv"), &buf)?;
            if opts.dump_features {
                w.write(&evidence_file(name, rep, "json"), ev.to_json(true)?.as_bytes())?;
            }
        }
        for cell in &out.cells {
            let regime = cell.regime.as_str();
            let mut rec = CellRecord {
                repetition: rep,
                seed,
                regime: regime.to_string(),
                estimator: cell.estimator,
                evidence: evidence_file(evidence_name(cell.regime), rep, "csv"),
                roc: None,
                report: None,
                error: None,
            };
            match &cell.outcome {
                Ok((report, roc)) => {
                    let name = roc_file(regime, cell.estimator, rep);
                    let mut buf = Vec::new();
                    roc.write_csv(&mut buf)?;
                    w.write(&name, &buf)?;
                    if rep == 0 {
                        first_curves.push((format!("{regime} {}", cell.estimator.as_str()), roc.clone()));
                    }
                    rec.roc = Some(name);
                    rec.report = Some(report.clone());
                }
                Err(msg) => {
                    warn!("repetition {rep}: {regime}/{} failed: {msg}", cell.estimator.as_str());
                    rec.error = Some(msg.clone());
                }
            }
            doc.cells.push(rec);
        }
        doc.delta_pi.push(out.delta_pi);
        doc.learned_separation_warning.push(out.learned_separation_warning);
    }

    doc.aggregate = doc.reaggregate();
    w.write(METRICS_JSON, &serde_json::to_vec_pretty(&doc)?)?;
    w.write(METRICS_CSV, &metrics_csv(&doc, &cfg.params.alphas)?)?;
    if cfg.repetitions >= 2 {
        w.write(SUMMARY_CSV, &summary_csv(&doc.aggregate)?)?;
    }
    let bound = bundle_bound(cfg);
    if let Some(b) = &bound {
        let mut buf = Vec::new();
        b.write_csv(&mut buf)?;
        w.write(DP_BOUND_CSV, &buf)?;
    }
    if opts.svg {
        w.write(ROC_SVG, render_roc(&first_curves, bound.as_ref()).as_bytes())?;
    }

    let mut header = ManifestHeader::new("evaluate", cfg, seeds, started)?;
    header.failed_cells = doc.failures();
    header.total_cells = doc.cells.len();
    w.finish(header)
}

fn metrics_csv(doc: &MetricsDoc, alphas: &[f64]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["repetition", "seed", "regime", "estimator", "status", "auc", "youden_sup", "ate"].map(String::from).to_vec();
    header.extend(alphas.iter().map(|a| format!("tpr_at_{a}")));
    header.extend(["hoeffding_halfwidth", "n1", "n0", "evidence", "error"].map(String::from));
    w.write_record(&header)?;
    for c in &doc.cells {
        let mut row = vec![c.repetition.to_string(), c.seed.to_string()];
        match &c.report {
            Some(r) => {
                let fields = r.csv_row();
                row.extend(fields[..2].iter().cloned());
                row.push("ok".into());
                row.extend(fields[2..].iter().cloned());
            }
            None => {
                row.extend([c.regime.clone(), c.estimator.as_str().to_string(), "error".into()]);
                row.extend(std::iter::repeat_n(String::new(), 3 + alphas.len() + 3));
            }
        }
        row.push(c.evidence.clone());
        row.push(c.error.clone().unwrap_or_default());
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| CliError::Io { path: METRICS_CSV.into(), source: e.into_error() })
}

pub fn summary_csv(rows: &[AggregateRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let keys: Vec<String> = rows.iter().flat_map(|r| r.tpr_at_fpr.keys().cloned()).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let mut header: Vec<String> =
        ["regime", "estimator", "repetitions", "failures", "auc_mean", "auc_sd", "youden_sup_mean", "youden_sup_sd", "ate_mean", "ate_sd"]
            .map(String::from)
            .to_vec();
    for k in &keys {
        header.push(format!("tpr_at_{k}_mean"));
        header.push(format!("tpr_at_{k}_sd"));
    }
    w.write_record(&header)?;
    for r in rows {
        let mut row = vec![
            r.regime.clone(),
            r.estimator.as_str().to_string(),
            r.repetitions.to_string(),
            r.failures.to_string(),
            r.auc.mean.to_string(),
            r.auc.sd.to_string(),
            r.youden_sup.mean.to_string(),
            r.youden_sup.sd.to_string(),
            r.ate.mean.to_string(),
            r.ate.sd.to_string(),
        ];
        for k in &keys {
            let s = r.tpr_at_fpr.get(k).copied().unwrap_or_default();
            row.push(s.mean.to_string());
            row.push(s.sd.to_string());
        }
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| CliError::Io { path: SUMMARY_CSV.into(), source: e.into_error() })
}

/// Curves named by the bundle's config that exist on disk, plus the names
/// of those that are missing.
pub type NamedCurves = Vec<(String, RocCurve)>;

pub fn load_curves(dir: &Path) -> Result<(NamedCurves, Vec<String>)> {
    let manifest = Manifest::load(dir)?;
    let cfg = &manifest.header.effective_config;
    let mut found = Vec::new();
    let mut missing = Vec::new();
    for r in &cfg.regimes {
        for e in r.estimators(&cfg.estimators) {
            let name = roc_file(r.as_str(), e, 0);
            match std::fs::File::open(dir.join(&name)) {
                Ok(f) => found.push((format!("{} {}", r.as_str(), e.as_str()), RocCurve::read_csv(f)?)),
                Err(_) => missing.push(name),
            }
        }
    }
    Ok((found, missing))
}

/// Renders the bundle's repetition-0 curves to `roc.svg` inside the bundle.
pub fn render_bundle(dir: &Path, with_dp_bound: bool) -> Result<Vec<String>> {
    let (curves, missing) = load_curves(dir)?;
    for m in &missing {
        warn!("missing curve file {m}");
    }
    let cfg = Manifest::load(dir)?.header.effective_config;
    let bound = if with_dp_bound {
        let (e, d) = cfg.params.dp_bound.unwrap_or((cfg.params.trainer.dp_epsilon, cfg.params.trainer.dp_delta));
        Some(dp_roc_bound(e, d))
    } else {
        None
    };
    Manifest::add_file(dir, ROC_SVG, render_roc(&curves, bound.as_ref()).as_bytes())?;
    Ok(missing)
}

/// Exit status for a finished bundle: an error when any cell failed.
pub fn check_cells(m: &Manifest) -> Result<()> {
    if m.header.failed_cells > 0 {
        return Err(CliError::CellsFailed { failed: m.header.failed_cells, total: m.header.total_cells });
    }
    Ok(())
}
