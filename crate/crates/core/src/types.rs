//! Domain types shared by every stage of the pipeline.
//!
//! Prompts and responses are plain feature vectors. A response additionally
//! carries a positive integer length, the token-count analog that the
//! length-bias experiments manipulate.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when validating that probability vectors sum to one.
pub const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResponseId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SampleId(pub u32);

impl fmt::Display for PromptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

impl fmt::Display for ResponseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "y{}", self.0)
    }
}

impl fmt::Display for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Length directive attached to a prompt. `0` means no directive, `-1` asks
/// for the shortest possible response and `+1` for the longest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(try_from = "i8", into = "i8")]
pub enum Directive {
    Shortest,
    #[default]
    None,
    Longest,
}

impl Directive {
    pub fn as_f64(self) -> f64 {
        i8::from(self) as f64
    }
}

impl From<Directive> for i8 {
    fn from(d: Directive) -> i8 {
        match d {
            Directive::Shortest => -1,
            Directive::None => 0,
            Directive::Longest => 1,
        }
    }
}

impl TryFrom<i8> for Directive {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            -1 => Ok(Directive::Shortest),
            0 => Ok(Directive::None),
            1 => Ok(Directive::Longest),
            other => Err(format!("directive flag must be -1, 0 or 1, got {other}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptFeatures {
    pub id: PromptId,
    pub vector: Vec<f64>,
    pub directive: Directive,
}

impl PromptFeatures {
    pub fn new(id: PromptId, vector: Vec<f64>) -> Self {
        Self {
            id,
            vector,
            directive: Directive::None,
        }
    }

    pub fn with_directive(mut self, directive: Directive) -> Self {
        self.directive = directive;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseFeatures {
    pub id: ResponseId,
    pub vector: Vec<f64>,
    pub length: u32,
}

impl ResponseFeatures {
    pub fn new(id: ResponseId, vector: Vec<f64>, length: u32) -> Self {
        Self { id, vector, length }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    ChosenLonger,
    ChosenShorter,
    Original,
    Adversarial,
    Plain,
}

impl Group {
    /// Length-based tag for a (chosen, rejected) pair. Equal lengths count as
    /// chosen-shorter.
    pub fn from_lengths(chosen: u32, rejected: u32) -> Group {
        if chosen > rejected {
            Group::ChosenLonger
        } else {
            Group::ChosenShorter
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Group::ChosenLonger => "chosen_longer",
            Group::ChosenShorter => "chosen_shorter",
            Group::Original => "original",
            Group::Adversarial => "adversarial",
            Group::Plain => "plain",
        }
    }

    pub fn is_length_based(self) -> bool {
        matches!(self, Group::ChosenLonger | Group::ChosenShorter)
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One `(x, y_w, y_l)` record.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceSample {
    pub id: SampleId,
    pub prompt: PromptFeatures,
    pub chosen: ResponseFeatures,
    pub rejected: ResponseFeatures,
    pub group: Group,
    pub reinsertion_quota: u32,
}

impl PreferenceSample {
    pub fn validate(&self) -> Result<()> {
        if self.chosen.id == self.rejected.id {
            return Err(Error::Dataset(format!(
                "sample {}: chosen and rejected share response id {}",
                self.id, self.chosen.id
            )));
        }
        for r in [&self.chosen, &self.rejected] {
            if r.length == 0 {
                return Err(Error::Dataset(format!(
                    "sample {}: response {} has zero length",
                    self.id, r.id
                )));
            }
            if r.vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::Dataset(format!(
                    "sample {}: response {} has non-finite features",
                    self.id, r.id
                )));
            }
        }
        if self.prompt.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dataset(format!(
                "sample {}: prompt {} has non-finite features",
                self.id, self.prompt.id
            )));
        }
        if self.group.is_length_based()
            && self.group != Group::from_lengths(self.chosen.length, self.rejected.length)
        {
            return Err(Error::Dataset(format!(
                "sample {}: group {} inconsistent with lengths {} vs {}",
                self.id, self.group, self.chosen.length, self.rejected.length
            )));
        }
        Ok(())
    }

    /// Same record with chosen and rejected exchanged. The group tag is
    /// recomputed when it is length based.
    pub fn swapped(&self) -> PreferenceSample {
        let group = if self.group.is_length_based() {
            Group::from_lengths(self.rejected.length, self.chosen.length)
        } else {
            self.group
        };
        PreferenceSample {
            id: self.id,
            prompt: self.prompt.clone(),
            chosen: self.rejected.clone(),
            rejected: self.chosen.clone(),
            group,
            reinsertion_quota: self.reinsertion_quota,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedPrompt {
    pub prompt: PromptFeatures,
    pub weight: f64,
}

/// Response generation probabilities `P(y|x)`. Each prompt carries a finite
/// support; responses outside a prompt's support have probability zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GenerationModel {
    probs: BTreeMap<(PromptId, ResponseId), f64>,
}

impl GenerationModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, prompt: PromptId, response: ResponseId, prob: f64) {
        self.probs.insert((prompt, response), prob);
    }

    pub fn prob(&self, prompt: PromptId, response: ResponseId) -> Option<f64> {
        self.probs.get(&(prompt, response)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (PromptId, ResponseId, f64)> + '_ {
        self.probs.iter().map(|(&(x, y), &p)| (x, y, p))
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Responses in the support of `prompt`, with their probabilities.
    pub fn support(&self, prompt: PromptId) -> impl Iterator<Item = (ResponseId, f64)> + '_ {
        self.probs
            .range((prompt, ResponseId(0))..=(prompt, ResponseId(u32::MAX)))
            .map(|(&(_, y), &p)| (y, p))
    }

    fn validate(&self) -> Result<()> {
        let mut totals: BTreeMap<PromptId, f64> = BTreeMap::new();
        for (&(x, y), &p) in &self.probs {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Dataset(format!(
                    "generation probability P({y}|{x}) = {p} outside (0, 1]"
                )));
            }
            *totals.entry(x).or_default() += p;
        }
        for (x, total) in totals {
            if (total - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::Dataset(format!(
                    "generation probabilities for {x} sum to {total}"
                )));
            }
        }
        Ok(())
    }
}

/// Preference samples plus the prompt marginal `P(x)` and, optionally, the
/// response generation model `P(y|x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceDataset {
    samples: Vec<PreferenceSample>,
    prompt_pool: Vec<WeightedPrompt>,
    generation_model: Option<GenerationModel>,
    prompt_index: HashMap<PromptId, usize>,
}

impl PreferenceDataset {
    pub fn new(
        samples: Vec<PreferenceSample>,
        prompt_pool: Vec<WeightedPrompt>,
        generation_model: Option<GenerationModel>,
    ) -> Result<Self> {
        let mut prompt_index = HashMap::with_capacity(prompt_pool.len());
        let mut total = 0.0;
        let prompt_dim = prompt_pool.first().map(|p| p.prompt.vector.len());
        for (i, wp) in prompt_pool.iter().enumerate() {
            if prompt_index.insert(wp.prompt.id, i).is_some() {
                return Err(Error::Dataset(format!(
                    "duplicate prompt {} in pool",
                    wp.prompt.id
                )));
            }
            if !(wp.weight >= 0.0 && wp.weight.is_finite()) {
                return Err(Error::Dataset(format!(
                    "prompt {} has invalid weight {}",
                    wp.prompt.id, wp.weight
                )));
            }
            if Some(wp.prompt.vector.len()) != prompt_dim {
                return Err(Error::Dimension {
                    what: "prompt vector",
                    expected: prompt_dim.unwrap_or(0),
                    got: wp.prompt.vector.len(),
                });
            }
            total += wp.weight;
        }
        if !prompt_pool.is_empty() && (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Dataset(format!(
                "prompt marginal weights sum to {total}"
            )));
        }
        if let Some(gm) = &generation_model {
            gm.validate()?;
        }
        let mut seen = HashSet::with_capacity(samples.len());
        let response_dim = samples.first().map(|s| s.chosen.vector.len());
        for s in &samples {
            s.validate()?;
            if !seen.insert(s.id) {
                return Err(Error::Dataset(format!("duplicate sample id {}", s.id)));
            }
            match prompt_index.get(&s.prompt.id) {
                Some(&i) if prompt_pool[i].prompt == s.prompt => {}
                Some(_) => {
                    return Err(Error::Dataset(format!(
                        "sample {}: prompt {} differs from the pool entry",
                        s.id, s.prompt.id
                    )))
                }
                None => {
                    return Err(Error::Dataset(format!(
                        "sample {}: prompt {} missing from pool",
                        s.id, s.prompt.id
                    )))
                }
            }
            for r in [&s.chosen, &s.rejected] {
                if Some(r.vector.len()) != response_dim {
                    return Err(Error::Dimension {
                        what: "response vector",
                        expected: response_dim.unwrap_or(0),
                        got: r.vector.len(),
                    });
                }
            }
        }
        Ok(Self {
            samples,
            prompt_pool,
            generation_model,
            prompt_index,
        })
    }

    pub fn samples(&self) -> &[PreferenceSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn prompt_pool(&self) -> &[WeightedPrompt] {
        &self.prompt_pool
    }

    pub fn generation_model(&self) -> Option<&GenerationModel> {
        self.generation_model.as_ref()
    }

    pub fn prompt_position(&self, id: PromptId) -> Option<usize> {
        self.prompt_index.get(&id).copied()
    }

    pub fn prompt(&self, id: PromptId) -> Option<&PromptFeatures> {
        self.prompt_position(id)
            .map(|i| &self.prompt_pool[i].prompt)
    }

    pub fn sample(&self, id: SampleId) -> Option<&PreferenceSample> {
        self.samples.iter().find(|s| s.id == id)
    }

    pub fn prompt_dim(&self) -> Option<usize> {
        self.prompt_pool.first().map(|p| p.prompt.vector.len())
    }

    pub fn response_dim(&self) -> Option<usize> {
        self.samples.first().map(|s| s.chosen.vector.len())
    }

    /// Replace the sample list, keeping pool and generation model.
    pub fn with_samples(&self, samples: Vec<PreferenceSample>) -> Result<Self> {
        Self::new(
            samples,
            self.prompt_pool.clone(),
            self.generation_model.clone(),
        )
    }

    /// Mean response length over all chosen and rejected responses.
    pub fn mean_length(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let total: u64 = self
            .samples
            .iter()
            .map(|s| s.chosen.length as u64 + s.rejected.length as u64)
            .sum();
        total as f64 / (2 * self.samples.len()) as f64
    }
}

/// Per-pair split of the reward gap into prompt-related and prompt-free parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapDecomposition {
    pub total_gap: f64,
    pub prompt_related_gap: f64,
    pub prompt_free_gap: f64,
}

impl GapDecomposition {
    /// Builds the record with the prompt-related part as the exact residual.
    pub fn from_total(total_gap: f64, prompt_free_gap: f64) -> Self {
        Self {
            total_gap,
            prompt_related_gap: total_gap - prompt_free_gap,
            prompt_free_gap,
        }
    }
}
