//! Bounded reward functions, reward gaps and the Bradley-Terry probability.
//!
//! The trainable model is a linear score over prompt/response features
//! passed through `tanh` and rescaled into `[r_min, r_max]`:
//!
//! ```text
//! s(x, y) = θ · φ(x, y)
//! r(x, y) = (r_min + r_max) / 2 + (r_max - r_min) / 2 · tanh(s(x, y))
//! ```
//!
//! `φ(x, y)` is the flattened outer product of the augmented prompt vector
//! `[x, directive]` and the augmented response vector `[y, ℓ(|y|)]`, followed by
//! the augmented response vector alone. The outer-product block carries the
//! prompt-related interactions; the trailing block is response only. Prompt-only
//! terms are omitted since they cancel in every reward gap.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{PromptFeatures, PromptId, ResponseFeatures, ResponseId};

pub const DEFAULT_R_MIN: f64 = -5.0;
pub const DEFAULT_R_MAX: f64 = 5.0;

/// Any reward function with known finite bounds.
pub trait RewardModel: Sync {
    fn reward(&self, x: &PromptFeatures, y: &ResponseFeatures) -> Result<f64>;

    /// `(r_min, r_max)` such that every reward lies in the closed interval.
    fn bounds(&self) -> (f64, f64);

    fn reward_gap(
        &self,
        x: &PromptFeatures,
        y1: &ResponseFeatures,
        y2: &ResponseFeatures,
    ) -> Result<f64> {
        Ok(self.reward(x, y1)? - self.reward(x, y2)?)
    }
}

/// Reward of `y` under prompt `x`.
pub fn reward_eval<M: RewardModel + ?Sized>(
    model: &M,
    x: &PromptFeatures,
    y: &ResponseFeatures,
) -> Result<f64> {
    model.reward(x, y)
}

/// `r(x, y1) - r(x, y2)`.
pub fn reward_gap<M: RewardModel + ?Sized>(
    model: &M,
    x: &PromptFeatures,
    y1: &ResponseFeatures,
    y2: &ResponseFeatures,
) -> Result<f64> {
    model.reward_gap(x, y1, y2)
}

/// Logistic sigmoid, evaluated without overflow for any finite input.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Bradley-Terry probability that the first response wins given the gap.
pub fn bt_probability(gap: f64) -> f64 {
    sigmoid(gap)
}

/// How response lengths enter the feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthEncoding {
    pub center: f64,
    pub scale: f64,
}

impl LengthEncoding {
    pub fn encode(&self, length: u32) -> f64 {
        (length as f64 - self.center) / self.scale
    }
}

impl Default for LengthEncoding {
    fn default() -> Self {
        Self {
            center: 100.0,
            scale: 50.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub prompt_dim: usize,
    pub response_dim: usize,
    pub length: LengthEncoding,
}

impl FeatureLayout {
    pub fn new(prompt_dim: usize, response_dim: usize, length: LengthEncoding) -> Self {
        Self {
            prompt_dim,
            response_dim,
            length,
        }
    }

    fn prompt_aug(&self) -> usize {
        self.prompt_dim + 1
    }

    fn response_aug(&self) -> usize {
        self.response_dim + 1
    }

    /// Number of interaction parameters (the prompt-related block).
    pub fn interaction_len(&self) -> usize {
        self.prompt_aug() * self.response_aug()
    }

    pub fn num_params(&self) -> usize {
        self.interaction_len() + self.response_aug()
    }

    fn augment_prompt(&self, x: &PromptFeatures) -> Result<Vec<f64>> {
        if x.vector.len() != self.prompt_dim {
            return Err(Error::Dimension {
                what: "prompt vector",
                expected: self.prompt_dim,
                got: x.vector.len(),
            });
        }
        let mut v = Vec::with_capacity(self.prompt_aug());
        v.extend_from_slice(&x.vector);
        v.push(x.directive.as_f64());
        Ok(v)
    }

    fn augment_response(&self, y: &ResponseFeatures) -> Result<Vec<f64>> {
        if y.vector.len() != self.response_dim {
            return Err(Error::Dimension {
                what: "response vector",
                expected: self.response_dim,
                got: y.vector.len(),
            });
        }
        let mut v = Vec::with_capacity(self.response_aug());
        v.extend_from_slice(&y.vector);
        v.push(self.length.encode(y.length));
        Ok(v)
    }

    /// Full feature vector `φ(x, y)`.
    pub fn features(&self, x: &PromptFeatures, y: &ResponseFeatures) -> Result<Vec<f64>> {
        let px = self.augment_prompt(x)?;
        let ry = self.augment_response(y)?;
        let mut phi = Vec::with_capacity(self.num_params());
        for &a in &px {
            phi.extend(ry.iter().map(|&b| a * b));
        }
        phi.extend_from_slice(&ry);
        Ok(phi)
    }
}

/// Linear-in-features score squashed into `[r_min, r_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardFunction {
    pub layout: FeatureLayout,
    pub params: Vec<f64>,
    pub r_min: f64,
    pub r_max: f64,
}

impl RewardFunction {
    pub fn new(layout: FeatureLayout, params: Vec<f64>, r_min: f64, r_max: f64) -> Result<Self> {
        if !(r_min < r_max) || !r_min.is_finite() || !r_max.is_finite() {
            return Err(Error::Config(format!(
                "reward bounds must satisfy r_min < r_max, got ({r_min}, {r_max})"
            )));
        }
        if params.len() != layout.num_params() {
            return Err(Error::Dimension {
                what: "parameter vector",
                expected: layout.num_params(),
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("non-finite parameter".into()));
        }
        Ok(Self {
            layout,
            params,
            r_min,
            r_max,
        })
    }

    /// All-zero parameters with the default bounds.
    pub fn zeros(layout: FeatureLayout) -> Self {
        Self {
            params: vec![0.0; layout.num_params()],
            layout,
            r_min: DEFAULT_R_MIN,
            r_max: DEFAULT_R_MAX,
        }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.r_min + self.r_max)
    }

    pub fn half_range(&self) -> f64 {
        0.5 * (self.r_max - self.r_min)
    }

    /// Pre-squash linear score.
    pub fn score(&self, x: &PromptFeatures, y: &ResponseFeatures) -> Result<f64> {
        let phi = self.layout.features(x, y)?;
        Ok(dot(&self.params, &phi))
    }

    fn squash(&self, s: f64) -> f64 {
        (self.midpoint() + self.half_range() * s.tanh()).clamp(self.r_min, self.r_max)
    }

    /// Gradient of `r(x, y)` with respect to the parameters.
    pub fn reward_grad(&self, x: &PromptFeatures, y: &ResponseFeatures) -> Result<Vec<f64>> {
        let phi = self.layout.features(x, y)?;
        let t = dot(&self.params, &phi).tanh();
        let scale = self.half_range() * (1.0 - t * t);
        Ok(phi.into_iter().map(|f| scale * f).collect())
    }

    /// Parameters of the interaction (prompt-related) block.
    pub fn interaction_params(&self) -> &[f64] {
        &self.params[..self.layout.interaction_len()]
    }

    /// Copy of the model with every prompt-dependent weight set to zero.
    pub fn without_prompt_interactions(&self) -> Self {
        let mut out = self.clone();
        let n = self.layout.interaction_len();
        let ry = self.layout.response_aug();
        // the directive row is prompt-dependent too; only the response block survives
        out.params[..n].iter_mut().for_each(|p| *p = 0.0);
        debug_assert_eq!(out.params.len() - n, ry);
        out
    }
}

impl RewardModel for RewardFunction {
    fn reward(&self, x: &PromptFeatures, y: &ResponseFeatures) -> Result<f64> {
        Ok(self.squash(self.score(x, y)?))
    }

    fn bounds(&self) -> (f64, f64) {
        (self.r_min, self.r_max)
    }
}

/// Reward given by an explicit table over `(prompt, response)` ids.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularReward {
    values: HashMap<(PromptId, ResponseId), f64>,
    r_min: f64,
    r_max: f64,
}

impl TabularReward {
    pub fn new(r_min: f64, r_max: f64) -> Result<Self> {
        if !(r_min < r_max) {
            return Err(Error::Config(format!(
                "reward bounds must satisfy r_min < r_max, got ({r_min}, {r_max})"
            )));
        }
        Ok(Self {
            values: HashMap::new(),
            r_min,
            r_max,
        })
    }

    pub fn set(&mut self, x: PromptId, y: ResponseId, value: f64) -> Result<()> {
        if !(self.r_min..=self.r_max).contains(&value) {
            return Err(Error::Config(format!(
                "tabular reward {value} for ({x}, {y}) outside [{}, {}]",
                self.r_min, self.r_max
            )));
        }
        self.values.insert((x, y), value);
        Ok(())
    }
}

impl RewardModel for TabularReward {
    fn reward(&self, x: &PromptFeatures, y: &ResponseFeatures) -> Result<f64> {
        self.values
            .get(&(x.id, y.id))
            .copied()
            .ok_or_else(|| Error::Config(format!("no tabular reward for ({}, {})", x.id, y.id)))
    }

    fn bounds(&self) -> (f64, f64) {
        (self.r_min, self.r_max)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
