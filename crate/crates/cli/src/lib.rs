//! Library side of the `diwse` command-line tool.
//!
//! Every command takes an [`ExperimentConfig`], runs deterministically from
//! its seed and renders a report as JSON or CSV. The binary only parses
//! flags, merges them into the config and maps errors to exit codes.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use diwse::devices::{
    classical_bob, depolarized_strategy, honest_strategy, sequential_source_attack,
    ClassicalPolicy, DeviceStrategy,
};
use diwse::pv::CheatScenario;
use diwse::wse::WseParams;

pub mod commands;
pub mod format;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Confidence level of every Hoeffding interval in the reports.
pub const CONFIDENCE: f64 = 0.99;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("invariant failure: {0}")]
    Invariant(String),
    #[error("{0}")]
    Runtime(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Invariant(_) => 3,
            CliError::Runtime(_) | CliError::Io(_) => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SimulateWse,
    Rates,
    AttackDemo,
    SimulatePv,
    CheckBounds,
}

impl Command {
    pub const ALL: [Command; 5] = [
        Command::SimulateWse,
        Command::Rates,
        Command::AttackDemo,
        Command::SimulatePv,
        Command::CheckBounds,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::SimulateWse => "simulate-wse",
            Command::Rates => "rates",
            Command::AttackDemo => "attack-demo",
            Command::SimulatePv => "simulate-pv",
            Command::CheckBounds => "check-bounds",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format {other:?}; expected json or csv")),
        }
    }
}

/// Device strategy by name, with numeric parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl Default for StrategySpec {
    fn default() -> Self {
        StrategySpec {
            name: "honest".into(),
            params: BTreeMap::new(),
        }
    }
}

pub const STRATEGY_NAMES: [&str; 6] = [
    "honest",
    "depolarized",
    "sequential-source-attack",
    "classical-standard-basis",
    "classical-random-guess",
    "classical-theta-dependent",
];

impl StrategySpec {
    pub fn build(&self) -> Result<Box<dyn DeviceStrategy>, CliError> {
        let allowed: &[&str] = if self.name == "depolarized" {
            &["v"]
        } else {
            &[]
        };
        if let Some(k) = self.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(CliError::Config(format!(
                "strategy.params.{k} is not a parameter of {:?}",
                self.name
            )));
        }
        let s: Box<dyn DeviceStrategy> = match self.name.as_str() {
            "honest" => Box::new(honest_strategy()),
            "depolarized" => {
                let v = *self.params.get("v").ok_or_else(|| {
                    CliError::Config("strategy.params.v is required for depolarized".into())
                })?;
                Box::new(
                    depolarized_strategy(v)
                        .map_err(|e| CliError::Config(format!("strategy.params.v: {e}")))?,
                )
            }
            "sequential-source-attack" => Box::new(sequential_source_attack()),
            "classical-standard-basis" => Box::new(classical_bob(ClassicalPolicy::StandardBasis)),
            "classical-random-guess" => Box::new(classical_bob(ClassicalPolicy::RandomGuess)),
            "classical-theta-dependent" => Box::new(classical_bob(ClassicalPolicy::ThetaDependent)),
            other => {
                return Err(CliError::Config(format!(
                    "strategy.name {other:?} unknown; expected one of {}",
                    STRATEGY_NAMES.join(", ")
                )))
            }
        };
        Ok(s)
    }
}

/// Grid for the `rates` command; every combination becomes one row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub n: Vec<usize>,
    pub mu: Vec<f64>,
    pub delta: Vec<f64>,
    pub eps: Vec<f64>,
    #[serde(default = "default_d_list")]
    pub d: Vec<u64>,
}

fn default_d_list() -> Vec<u64> {
    vec![1]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PvConfig {
    pub x_v1: f64,
    pub x_p: f64,
    pub x_v2: f64,
    pub delta_t: f64,
    #[serde(default)]
    pub x_p_actual: Option<f64>,
    #[serde(default)]
    pub cheats: Vec<CheatScenario>,
    /// Round counts for the cheat runs; defaults to `params.n`.
    #[serde(default)]
    pub cheat_rounds: Vec<usize>,
    /// Decay rate `α` of `ε = 2^{−αn}` used in the analytic cheat bound.
    #[serde(default = "default_alpha")]
    pub alpha_decay: f64,
}

fn default_alpha() -> f64 {
    0.001
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckOptions {
    /// Wire the testing device with its settings exchanged, to watch the
    /// calibration check fail.
    #[serde(default)]
    pub swap_test_labels: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<WseParams>,
    #[serde(default)]
    pub strategy: StrategySpec,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Where to write the report. Not echoed into the report, so the same
    /// experiment renders the same bytes wherever it is written.
    #[serde(default, skip_serializing)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
    /// Embed every round of every run in JSON reports.
    #[serde(default)]
    pub include_transcripts: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pv: Option<PvConfig>,
    #[serde(default)]
    pub checks: CheckOptions,
}

fn default_runs() -> usize {
    100
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            command: None,
            params: None,
            strategy: StrategySpec::default(),
            runs: default_runs(),
            seed: 0,
            output: None,
            format: Format::Json,
            include_transcripts: false,
            sweep: None,
            pv: None,
            checks: CheckOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn params(&self) -> Result<WseParams, CliError> {
        let p = self
            .params
            .ok_or_else(|| CliError::Config("params is required for this command".into()))?;
        p.validate()
            .map_err(|e| CliError::Config(format!("params: {e}")))?;
        Ok(p)
    }

    fn check_runs(&self) -> Result<(), CliError> {
        if self.runs == 0 {
            return Err(CliError::Config("runs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Rendered report plus anything the binary should print on stderr.
#[derive(Clone, Debug, PartialEq)]
pub struct Output {
    pub text: String,
    pub note: Option<String>,
    /// Set by `check-bounds` when an invariant failed; the report is still
    /// written before the binary exits with code 3.
    pub failed: Option<String>,
}

/// Top-level JSON envelope shared by every command.
#[derive(Serialize)]
pub struct Report<'a, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: Command,
    pub seed: u64,
    pub config: &'a ExperimentConfig,
    pub result: T,
}

pub fn render_json<T: Serialize>(
    command: Command,
    config: &ExperimentConfig,
    result: T,
) -> Result<String, CliError> {
    let report = Report {
        tool: "diwse",
        version: VERSION,
        command,
        seed: config.seed,
        config,
        result,
    };
    let mut s = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Runtime(format!("serialising report: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Runs `command` with a fully merged config.
pub fn run(command: Command, config: &ExperimentConfig) -> Result<Output, CliError> {
    if let Some(c) = config.command {
        if c != command {
            return Err(CliError::Config(format!(
                "config is for {c}, but {command} was requested"
            )));
        }
    }
    match command {
        Command::SimulateWse => {
            config.check_runs()?;
            commands::simulate_wse(config)
        }
        Command::Rates => commands::rates(config),
        Command::AttackDemo => {
            config.check_runs()?;
            commands::attack_demo(config)
        }
        Command::SimulatePv => {
            config.check_runs()?;
            commands::simulate_pv(config)
        }
        Command::CheckBounds => commands::check_bounds(config),
    }
}
