//! Experiment configuration: one TOML file with a section per subcommand.
//!
//! ```toml
//! seed = 3
//!
//! [synth]
//! variant = "length_biased"
//! fraction = 0.8
//! heldout_pairs = 2000
//! [synth.world]
//! n_pairs = 8000
//!
//! [train]
//! dataset = "out/synth/dataset.jsonl"
//! mode = "prioritized"
//! [train.params]
//! steps = 300
//! learning_rate = 0.05
//! ```
//!
//! Unknown keys are rejected everywhere. A top-level `seed` (or `--seed`)
//! replaces every per-section seed.

use std::path::{Path, PathBuf};

use prefdecomp::conditional::SchemeParams;
use prefdecomp::synth::{EnumerableConfig, WorldConfig};
use prefdecomp::trainer::{TrainConfig, TrainMode};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub synth: SynthSection,
    pub train: TrainSection,
    pub verify: VerifySection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Base,
    LengthBiased,
    Adversarial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub variant: Variant,
    /// Chosen-longer fraction or twin fraction; variant default when unset.
    pub fraction: Option<f64>,
    pub heldout_pairs: usize,
    pub heldout_fresh_prompts: usize,
    pub world: WorldConfig,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            variant: Variant::Base,
            fraction: None,
            heldout_pairs: 1000,
            heldout_fresh_prompts: 0,
            world: WorldConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub dataset: Option<PathBuf>,
    /// Scored in `metrics.json`; the training set when unset.
    pub heldout: Option<PathBuf>,
    pub mode: TrainMode,
    pub n_replacements: usize,
    pub params: TrainConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            dataset: None,
            heldout: None,
            mode: TrainMode::Prioritized,
            n_replacements: 8,
            params: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    #[default]
    Default,
    NegativeControl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub suite: Suite,
    pub n_worlds: usize,
    pub model_scale: f64,
    pub world: EnumerableConfig,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            suite: Suite::Default,
            n_worlds: 20,
            model_scale: 0.1,
            world: EnumerableConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub model: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub n_replacements: usize,
    pub snapshot_size: usize,
    pub scheme: SchemeParams,
    pub seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            model: None,
            dataset: None,
            n_replacements: 16,
            snapshot_size: 200,
            scheme: SchemeParams::default(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    /// Pushes the top-level seed into every section.
    pub fn apply_seed(&mut self, seed: Option<u64>) {
        if seed.is_some() {
            self.seed = seed;
        }
        let Some(s) = self.seed else { return };
        self.synth.world.seed = s;
        self.train.params.seed = s;
        self.train.params.scheme = reseed(self.train.params.scheme, s);
        self.verify.world.seed = s;
        self.eval.seed = s;
        self.eval.scheme = reseed(self.eval.scheme, s);
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }
}

fn reseed(params: SchemeParams, seed: u64) -> SchemeParams {
    match params {
        SchemeParams::ExactBayes => SchemeParams::ExactBayes,
        SchemeParams::SelfGenerated { k, .. } => SchemeParams::SelfGenerated { k, seed },
        SchemeParams::PessimisticFixedP { k, p, .. } => {
            SchemeParams::PessimisticFixedP { k, p, seed }
        }
    }
}
