//! Experiment configuration: one JSON document per run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use bonlab::selectors::SelectorSpec;
use bonlab::{Instance, RewardChoice};
use serde::{Deserialize, Serialize};

use crate::UsageError;

/// Output directory override; wins over `output_dir` in the config.
pub const OUT_ENV: &str = "BONLAB_OUT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSource,
    pub jobs: Vec<JobSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default = "yes")]
    pub plots: bool,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_trials() -> u64 {
    100_000
}
fn default_confidence() -> f64 {
    0.99
}
fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSource {
    Generator {
        name: String,
        #[serde(default)]
        params: BTreeMap<String, f64>,
    },
    Inline(Box<Instance>),
}

impl InstanceSource {
    pub fn build(&self) -> bonlab::Result<Instance> {
        match self {
            InstanceSource::Generator { name, params } => bonlab::instances::generate(name, params),
            InstanceSource::Inline(inst) => {
                inst.validate()?;
                Ok((**inst).clone())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Evaluator {
    Exact,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    /// BoN regret against `N·ε·log(1/ε) + E_{N/log(1/ε)}`.
    Bon,
    /// em_bon regret against `E_M + M·ε + 1/N`.
    EmBon,
    /// Regret against `q` for BoN and em_bon.
    GeneralQ,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JobSpec {
    WinRate {
        selectors: Vec<SelectorSpec>,
        #[serde(default = "exact")]
        evaluator: Evaluator,
        #[serde(default = "r_hat")]
        reward: RewardChoice,
    },
    Regret {
        selectors: Vec<SelectorSpec>,
        #[serde(default = "exact")]
        evaluator: Evaluator,
        /// Cap for the three-term decomposition; exact evaluator only.
        #[serde(default)]
        decompose_m: Option<f64>,
    },
    Hacking { n_grid: Vec<u64>, m: f64 },
    Separation {
        #[serde(default = "per_regime")]
        per_regime: usize,
    },
    Bounds {
        theorem: Theorem,
        n_grid: Vec<u64>,
        #[serde(default)]
        m_grid: Vec<f64>,
        #[serde(default = "constant")]
        constant: f64,
    },
    SelfCheck,
}

fn exact() -> Evaluator {
    Evaluator::Exact
}
fn r_hat() -> RewardChoice {
    RewardChoice::RHat
}
fn per_regime() -> usize {
    50
}
fn constant() -> f64 {
    bonlab::analysis::DEFAULT_CONSTANT
}

impl JobSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            JobSpec::WinRate { .. } => "win_rate",
            JobSpec::Regret { .. } => "regret",
            JobSpec::Hacking { .. } => "hacking",
            JobSpec::Separation { .. } => "separation",
            JobSpec::Bounds { .. } => "bounds",
            JobSpec::SelfCheck => "self_check",
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, UsageError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            UsageError(format!("config line {} column {}: {e}", e.line(), e.column()))
        })?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks what serde cannot.
    pub fn check(&self) -> Result<(), UsageError> {
        let bad = |field: &str, why: String| Err(UsageError(format!("invalid parameter `{field}`: {why}")));
        if self.jobs.is_empty() {
            return bad("jobs", "at least one job is required".into());
        }
        if self.trials == 0 {
            return bad("trials", "must be at least 1".into());
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return bad("confidence", format!("must lie in (0, 1), got {}", self.confidence));
        }
        for (i, job) in self.jobs.iter().enumerate() {
            let at = |f: &str| format!("jobs[{i}].{f}");
            match job {
                JobSpec::WinRate { selectors, .. } | JobSpec::Regret { selectors, .. } if selectors.is_empty() => {
                    return bad(&at("selectors"), "empty".into())
                }
                JobSpec::Regret { evaluator: Evaluator::MonteCarlo, decompose_m: Some(_), .. } => {
                    return bad(&at("decompose_m"), "needs the exact evaluator".into())
                }
                JobSpec::Hacking { n_grid, .. } | JobSpec::Bounds { n_grid, .. } if n_grid.contains(&0) => {
                    return bad(&at("n_grid"), "entries must be positive".into())
                }
                JobSpec::Hacking { n_grid, .. } | JobSpec::Bounds { n_grid, .. } if n_grid.is_empty() => {
                    return bad(&at("n_grid"), "empty".into())
                }
                JobSpec::Hacking { m, .. } if !(*m >= 1.0) => return bad(&at("m"), format!("must be ≥ 1, got {m}")),
                JobSpec::Bounds { theorem: Theorem::EmBon, m_grid, .. } if m_grid.is_empty() => {
                    return bad(&at("m_grid"), "required for em_bon bounds".into())
                }
                JobSpec::Bounds { m_grid, .. } if m_grid.iter().any(|m| !(*m >= 1.0)) => {
                    return bad(&at("m_grid"), "entries must be ≥ 1".into())
                }
                JobSpec::Separation { per_regime } if *per_regime < 2 => {
                    return bad(&at("per_regime"), "needs at least 2 points".into())
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// `BONLAB_OUT` if set, else the configured directory.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUT_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.output_dir.clone(),
        }
    }
}

/// Built-in configs, addressable by name in place of a path.
pub fn builtin(name: &str) -> Option<ExperimentConfig> {
    match name {
        "separation-default" => Some(
            ExperimentConfig::from_json(SEPARATION_DEFAULT).expect("built-in config parses"),
        ),
        _ => None,
    }
}

pub const SEPARATION_DEFAULT: &str = include_str!("../../../configs/separation-default.json");
