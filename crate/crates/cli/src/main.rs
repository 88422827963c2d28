use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use causal_mia_cli::bundle::{self, check_cells, render_bundle, summary_csv, Manifest, MetricsDoc, SUMMARY_CSV};
use causal_mia_cli::commands;
use causal_mia_cli::{run_scenario, PropensityChoice, Result, RunConfig, RunOptions, Scenario};

#[derive(Parser)]
#[command(name = "causal-mia", version, about = "Causal evaluation of membership inference attacks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic problem and its member / non-member samples.
    Simulate(Common),
    /// Run a full scenario and write a report bundle.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Corrected zero-run regime: oracle, logistic or constant:<p>.
        #[arg(long)]
        propensity: Option<PropensityChoice>,
        /// Also write every evidence set as JSON with full feature vectors.
        #[arg(long)]
        dump_features: bool,
        /// Render roc.svg into the bundle.
        #[arg(long)]
        svg: bool,
    },
    /// Render the ROC curves of a bundle as SVG.
    Roc {
        /// Bundle directory written by `evaluate`.
        bundle: PathBuf,
        /// Overlay the DP ROC bound.
        #[arg(long)]
        dp_bound: bool,
    },
    /// Estimate error and training stability of the configured trainer.
    Stability {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_perturb: Option<usize>,
        #[arg(long)]
        n_test: Option<usize>,
        #[arg(long)]
        n_train: Option<usize>,
    },
    /// Re-aggregate the metrics of a bundle into summary.csv.
    Report {
        bundle: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Scenario to use when no config file is given.
    #[arg(long, value_parser = parse_scenario)]
    scenario: Option<Scenario>,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repetitions: Option<usize>,
}

fn parse_scenario(s: &str) -> std::result::Result<Scenario, String> {
    match s {
        "ridge" => Ok(Scenario::RidgeSynthetic),
        "dp-sgd" | "dpsgd" => Ok(Scenario::DpSgdSynthetic),
        "custom" => Ok(Scenario::Custom),
        _ => Err(format!("unknown scenario {s:?} (ridge, dp-sgd, custom)")),
    }
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match (&self.config, self.scenario) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(s)) => RunConfig::for_scenario(s),
            (None, None) => RunConfig::default(),
        };
        if let Some(s) = self.scenario {
            if self.config.is_some() && s != cfg.scenario {
                log::warn!("--scenario is ignored when a config file is given");
            }
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        if let Some(r) = self.repetitions {
            cfg.repetitions = r;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(common) => {
            let cfg = common.resolve()?;
            commands::simulate(&cfg)?;
            println!("wrote {}", cfg.output_dir.display());
        }
        Command::Evaluate { common, propensity, dump_features, svg } => {
            let mut cfg = common.resolve()?;
            if let Some(p) = propensity {
                cfg.apply_propensity(p);
            }
            let manifest = run_scenario(&cfg, RunOptions { dump_features, svg })?;
            let doc = MetricsDoc::load(&cfg.output_dir)?;
            print_summary(&doc);
            println!("wrote {} ({} files)", cfg.output_dir.display(), manifest.files.len() + 1);
            check_cells(&manifest)?;
        }
        Command::Roc { bundle, dp_bound } => {
            let missing = render_bundle(&bundle, dp_bound)?;
            for m in &missing {
                println!("missing: {m}");
            }
            println!("wrote {}", bundle.join(bundle::ROC_SVG).display());
        }
        Command::Stability { common, n_perturb, n_test, n_train } => {
            let mut cfg = common.resolve()?;
            if let Some(v) = n_perturb {
                cfg.stability.n_perturb = v;
            }
            if let Some(v) = n_test {
                cfg.stability.n_test = v;
            }
            if let Some(v) = n_train {
                cfg.stability.n_train = v;
            }
            let (report, _) = commands::stability(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Report { bundle } => {
            let doc = MetricsDoc::load(&bundle)?;
            let rows = doc.reaggregate();
            Manifest::add_file(&bundle, SUMMARY_CSV, &summary_csv(&rows)?)?;
            print_summary(&doc);
        }
    }
    Ok(())
}

fn print_summary(doc: &MetricsDoc) {
    println!("{:<18} {:<10} {:>5} {:>16} {:>16} {:>20}", "regime", "estimator", "fail", "AUC", "Youden sup", "ATE");
    for r in doc.reaggregate() {
        println!(
            "{:<18} {:<10} {:>5} {:>8.4} ± {:<5.3} {:>8.4} ± {:<5.3} {:>10.3} ± {:<7.3}",
            r.regime,
            r.estimator.as_str(),
            r.failures,
            r.auc.mean,
            r.auc.sd,
            r.youden_sup.mean,
            r.youden_sup.sd,
            r.ate.mean,
            r.ate.sd
        );
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
