use std::path::Path;

use serde::{Deserialize, Serialize};

use ppde_core::coefficients::{builtin, CoefficientField, CoefficientSequence, ProbeSpec, RandomGParams, SequenceParams};
use ppde_core::lab::{PairSpec, TestSetSpec};
use ppde_core::path::TimedPath;
use ppde_core::solver::SolverConfig;

use crate::CliError;

const BUILTIN_PREFIX: &str = "builtin:";

/// `"random_g"` with `params`, or `"builtin:<name>"` with an optional horizon.
fn family_name<'a>(family: &'a str, has_params: bool) -> Result<Option<&'a str>, CliError> {
    match (family.strip_prefix(BUILTIN_PREFIX), family, has_params) {
        (Some(name), _, false) => Ok(Some(name)),
        (Some(_), _, true) => Err(CliError::Invalid(format!("`params` is not accepted with family \"{family}\""))),
        (None, "random_g", true) => Ok(None),
        (None, "random_g", false) => Err(CliError::Invalid("family \"random_g\" needs `params`".into())),
        _ => Err(CliError::Invalid(format!(
            "unknown family \"{family}\": expected \"random_g\" or \"builtin:<name>\""
        ))),
    }
}

fn build_field(family: &str, params: Option<&RandomGParams>, horizon: Option<f64>) -> Result<CoefficientField, CliError> {
    match family_name(family, params.is_some())? {
        Some(name) => Ok(builtin(name, horizon.unwrap_or(1.0))?),
        None => {
            if horizon.is_some() {
                return Err(CliError::Invalid("set the horizon inside `params` for random_g".into()));
            }
            Ok(params.expect("checked").build()?)
        }
    }
}

/// A coefficient sequence: `random_g` with [`SequenceParams`], or a built-in
/// field repeated for every `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    pub family: String,
    #[serde(default)]
    pub params: Option<SequenceParams>,
    #[serde(default)]
    pub horizon: Option<f64>,
}

impl SequenceConfig {
    pub fn build(&self) -> Result<CoefficientSequence, CliError> {
        match family_name(&self.family, self.params.is_some())? {
            Some(name) => Ok(CoefficientSequence::constant(builtin(name, self.horizon.unwrap_or(1.0))?)),
            None => Ok(self.params.as_ref().expect("checked").build()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub family: String,
    #[serde(default)]
    pub params: Option<RandomGParams>,
    #[serde(default)]
    pub horizon: Option<f64>,
    pub solver: SolverConfig,
    pub query: Vec<TimedPath>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    #[serde(default)]
    pub experiment: Option<String>,
    pub sequence: SequenceConfig,
    pub solver: SolverConfig,
    pub n_values: Vec<u32>,
    #[serde(default)]
    pub test_set: TestSetSpec,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipschitzConfig {
    #[serde(default)]
    pub experiment: Option<String>,
    pub family: String,
    #[serde(default)]
    pub params: Option<RandomGParams>,
    #[serde(default)]
    pub horizon: Option<f64>,
    pub solver: SolverConfig,
    #[serde(default)]
    pub pairs: PairSpec,
    /// Overrides the budget computed from the declared constants.
    #[serde(default)]
    pub l_budget: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    pub family: String,
    #[serde(default)]
    pub params: Option<RandomGParams>,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub probes: ProbeSpec,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub threads: Option<usize>,
}

impl SolveConfig {
    pub fn field(&self) -> Result<CoefficientField, CliError> {
        build_field(&self.family, self.params.as_ref(), self.horizon)
    }
}

impl LipschitzConfig {
    pub fn field(&self) -> Result<CoefficientField, CliError> {
        build_field(&self.family, self.params.as_ref(), self.horizon)
    }
}

impl ValidateConfig {
    pub fn field(&self) -> Result<CoefficientField, CliError> {
        build_field(&self.family, self.params.as_ref(), self.horizon)
    }
}

/// Seed, thread count and experiment tag shared by the command configs. The
/// run seed replaces every seed nested in the config, so one number pins all sampling.
pub trait RunSettings: Serialize + for<'de> Deserialize<'de> {
    fn seed(&self) -> Option<u64>;
    fn threads(&self) -> Option<usize>;
    fn experiment(&self) -> Option<&str> {
        None
    }
    fn pin(&mut self, seed: u64);
    fn clear_threads(&mut self);
}

macro_rules! run_settings {
    ($ty:ty, $($tagged:ident)?, |$cfg:ident, $seed:ident| $body:block) => {
        impl RunSettings for $ty {
            fn seed(&self) -> Option<u64> {
                self.seed
            }
            fn threads(&self) -> Option<usize> {
                self.threads
            }
            $(
                fn $tagged(&self) -> Option<&str> {
                    self.experiment.as_deref()
                }
            )?
            fn pin(&mut self, $seed: u64) {
                let $cfg = self;
                $cfg.seed = Some($seed);
                $body
            }
            fn clear_threads(&mut self) {
                self.threads = None;
            }
        }
    };
}

run_settings!(SolveConfig, , |c, seed| { c.solver.montecarlo.seed = seed; });
run_settings!(StabilityConfig, experiment, |c, seed| {
    c.solver.montecarlo.seed = seed;
    c.test_set.seed = seed;
});
run_settings!(LipschitzConfig, experiment, |c, seed| {
    c.solver.montecarlo.seed = seed;
    c.pairs.seed = seed;
});
run_settings!(ValidateConfig, , |c, seed| { c.probes.seed = seed; });

/// Reads and parses a JSON config; parse errors carry line and column.
pub fn load<T: RunSettings>(path: &Path, command: &str) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::ReadConfig {
        path: path.display().to_string(),
        source,
    })?;
    let cfg: T = serde_json::from_str(&text).map_err(|source| CliError::Config {
        path: path.display().to_string(),
        source,
    })?;
    match cfg.experiment() {
        Some(e) if e != command => Err(CliError::Invalid(format!(
            "config is for experiment \"{e}\" but the command is \"{command}\""
        ))),
        _ => Ok(cfg),
    }
}
