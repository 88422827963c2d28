//! Run configuration: one TOML document, overridable from the command line.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use causal_mia::estimators::EstimatorKind;
use causal_mia::experiment::{RegimeKind, ScenarioParams};
use causal_mia::stability::StabilityConfig;
use serde::{Deserialize, Serialize};

use crate::error::{io_at, CliError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    #[default]
    RidgeSynthetic,
    DpSgdSynthetic,
    /// Ridge defaults, meant to be overridden through `[params]`.
    Custom,
}

impl Scenario {
    pub fn defaults(self) -> ScenarioParams {
        match self {
            Scenario::RidgeSynthetic | Scenario::Custom => ScenarioParams::ridge(),
            Scenario::DpSgdSynthetic => ScenarioParams::dp_sgd(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    scenario: Scenario,
    regimes: Option<Vec<RegimeKind>>,
    estimators: Option<Vec<EstimatorKind>>,
    #[serde(default = "one")]
    repetitions: usize,
    #[serde(default)]
    master_seed: u64,
    #[serde(default = "default_output")]
    output_dir: PathBuf,
    #[serde(default)]
    params: toml::Table,
    #[serde(default)]
    stability: Option<StabilityConfig>,
}

fn one() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Effective configuration after scenario defaults, `[params]` overrides and
/// command-line flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub regimes: Vec<RegimeKind>,
    pub estimators: Vec<EstimatorKind>,
    pub repetitions: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub params: ScenarioParams,
    pub stability: StabilityConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_scenario(Scenario::RidgeSynthetic)
    }
}

impl RunConfig {
    pub fn for_scenario(scenario: Scenario) -> Self {
        Self {
            scenario,
            regimes: RegimeKind::ALL.to_vec(),
            estimators: EstimatorKind::ALL.to_vec(),
            repetitions: 1,
            master_seed: 0,
            output_dir: default_output(),
            params: scenario.defaults(),
            stability: StabilityConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text)?;
        let mut merged = toml::Table::try_from(raw.scenario.defaults())?;
        merge(&mut merged, raw.params);
        let params: ScenarioParams = merged.try_into()?;
        let cfg = Self {
            scenario: raw.scenario,
            regimes: raw.regimes.unwrap_or_else(|| RegimeKind::ALL.to_vec()),
            estimators: raw.estimators.unwrap_or_else(|| EstimatorKind::ALL.to_vec()),
            repetitions: raw.repetitions,
            master_seed: raw.master_seed,
            output_dir: raw.output_dir,
            params,
            stability: raw.stability.unwrap_or_default(),
        };
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_at(path))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.regimes.is_empty() {
            return Err(CliError::Config("at least one regime is required".into()));
        }
        if self.estimators.is_empty() {
            return Err(CliError::Config("at least one estimator is required".into()));
        }
        if self.repetitions == 0 {
            return Err(CliError::Config("repetitions must be >= 1".into()));
        }
        self.params.validate()?;
        Ok(())
    }

    /// Replaces the corrected zero-run regimes with the one selected by
    /// `--propensity`.
    pub fn apply_propensity(&mut self, choice: PropensityChoice) {
        self.regimes.retain(|r| !r.is_corrected());
        let regime = match choice {
            PropensityChoice::Oracle => RegimeKind::ZeroRunOracle,
            PropensityChoice::Logistic => RegimeKind::ZeroRunLearned,
            PropensityChoice::Constant(p) => {
                self.params.constant_propensity = p;
                RegimeKind::ZeroRunConstant
            }
        };
        self.regimes.push(regime);
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Value of `--propensity`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PropensityChoice {
    Oracle,
    Logistic,
    Constant(f64),
}

impl FromStr for PropensityChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "oracle" => Ok(Self::Oracle),
            "logistic" => Ok(Self::Logistic),
            _ => {
                let p = s
                    .strip_prefix("constant:")
                    .ok_or_else(|| format!("expected oracle, logistic or constant:<p>, got {s:?}"))?;
                let p: f64 = p.parse().map_err(|_| format!("bad constant propensity {p:?}"))?;
                if (0.0..1.0).contains(&p) {
                    Ok(Self::Constant(p))
                } else {
                    Err(format!("constant propensity {p} outside [0, 1)"))
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_override_scenario_defaults() {
        let cfg = RunConfig::from_toml(
            r#"
            scenario = "DpSgdSynthetic"
            regimes = ["ZeroRunRaw"]
            estimators = ["Classical"]
            master_seed = 9

            [params]
            dim = 12

            [params.trainer]
            epochs = 3
            "#,
        )
        .unwrap();
        assert_eq!(cfg.params.dim, 12);
        assert_eq!(cfg.params.trainer.epochs, 3);
        assert_eq!(cfg.params.trainer.batch_size, ScenarioParams::dp_sgd().trainer.batch_size);
        assert_eq!(cfg.params.dp_bound, Some((0.602, 0.01)));
        assert_eq!(cfg.regimes, vec![RegimeKind::ZeroRunRaw]);
        assert_eq!(cfg.repetitions, 1);
    }

    #[test]
    fn empty_document_is_the_ridge_scenario() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        let mut cfg = RunConfig::default();
        cfg.regimes.clear();
        assert!(cfg.validate().is_err());
        let cfg = RunConfig { repetitions: 0, ..RunConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn propensity_flag() {
        assert_eq!("oracle".parse(), Ok(PropensityChoice::Oracle));
        assert_eq!("constant:0.25".parse(), Ok(PropensityChoice::Constant(0.25)));
        assert!("constant:1".parse::<PropensityChoice>().is_err());
        assert!("knn".parse::<PropensityChoice>().is_err());

        let mut cfg = RunConfig::default();
        cfg.apply_propensity(PropensityChoice::Constant(0.3));
        assert!(cfg.regimes.contains(&RegimeKind::ZeroRunConstant));
        assert!(!cfg.regimes.contains(&RegimeKind::ZeroRunOracle));
        assert_eq!(cfg.params.constant_propensity, 0.3);
    }

    #[test]
    fn effective_config_round_trips_through_json() {
        let cfg = RunConfig::for_scenario(Scenario::DpSgdSynthetic);
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
