//! Prompt-free reward gap by bisection on Φ.
//!
//! For a response pair and a weighting over candidate prompts,
//!
//! ```text
//! Φ(d) = Σ_k w_k · σ(Δr(x_k, y₁, y₂) − d)
//! ```
//!
//! is strictly decreasing in `d`. With rewards bounded in `[r_min, r_max]`,
//! `Φ(r_min − r_max) ≥ ½ ≥ Φ(r_max − r_min)`, so the root `Φ(d*) = ½` lies in
//! that interval and bisection finds it. The prompt-free gap is `d*`; the
//! prompt-related gap is the residual `Δr(x, y₁, y₂) − d*`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditional::{PromptWeighting, WeightingSource};
use crate::error::{Error, Result};
use crate::reward::{sigmoid, RewardModel};
use crate::types::{GapDecomposition, PreferenceSample, ResponseFeatures};

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_MAX_ITERATIONS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub epsilon: f64,
    pub max_iterations: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

impl SearchConfig {
    /// Halvings needed to shrink `[r_min − r_max, r_max − r_min]` to `epsilon`.
    pub fn required_iterations(&self, r_min: f64, r_max: f64) -> usize {
        let width = 2.0 * (r_max - r_min);
        if width <= self.epsilon {
            0
        } else {
            (width / self.epsilon).log2().ceil() as usize
        }
    }

    pub fn validate(&self, r_min: f64, r_max: f64) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        let need = self.required_iterations(r_min, r_max);
        if self.max_iterations < need {
            return Err(Error::Config(format!(
                "max_iterations {} below the {need} halvings needed for epsilon {} on [{r_min}, {r_max}]",
                self.max_iterations, self.epsilon
            )));
        }
        Ok(())
    }
}

/// Reward gaps at every candidate prompt, gathered once per search.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGaps {
    pub weights: Vec<f64>,
    pub gaps: Vec<f64>,
}

impl CandidateGaps {
    pub fn gather<M: RewardModel + ?Sized>(
        model: &M,
        y1: &ResponseFeatures,
        y2: &ResponseFeatures,
        weighting: &PromptWeighting,
    ) -> Result<Self> {
        let mut weights = Vec::with_capacity(weighting.len());
        let mut gaps = Vec::with_capacity(weighting.len());
        for (x, w) in weighting.iter() {
            if w == 0.0 {
                continue;
            }
            weights.push(w);
            gaps.push(model.reward_gap(x, y1, y2)?);
        }
        Ok(Self { weights, gaps })
    }

    pub fn phi(&self, d: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.gaps)
            .map(|(w, g)| w * sigmoid(g - d))
            .sum()
    }

    /// Weighted standard deviation of `σ(gap − d)` around Φ(d), scaled by
    /// `sqrt(Σ w²)`: the standard error of Φ when the candidates are a
    /// weighted sample.
    pub fn phi_standard_error(&self, d: f64) -> f64 {
        let phi = self.phi(d);
        let var: f64 = self
            .weights
            .iter()
            .zip(&self.gaps)
            .map(|(w, g)| w * (sigmoid(g - d) - phi).powi(2))
            .sum();
        let eff: f64 = self.weights.iter().map(|w| w * w).sum();
        (var * eff).sqrt()
    }
}

/// `Φ(d)` for one response pair.
pub fn phi<M: RewardModel + ?Sized>(
    model: &M,
    y1: &ResponseFeatures,
    y2: &ResponseFeatures,
    weighting: &PromptWeighting,
    d: f64,
) -> Result<f64> {
    weighting.validate()?;
    Ok(CandidateGaps::gather(model, y1, y2, weighting)?.phi(d))
}

/// Bisection for `Φ(d) = ½` on `[r_min − r_max, r_max − r_min]`.
///
/// `Φ(mid) > ½` moves the left end; ties move the right end.
pub fn solve_from_gaps(
    gaps: &CandidateGaps,
    bounds: (f64, f64),
    config: &SearchConfig,
) -> Result<f64> {
    let (r_min, r_max) = bounds;
    config.validate(r_min, r_max)?;
    let mut left = r_min - r_max;
    let mut right = r_max - r_min;
    let mut iterations = 0;
    while right - left > config.epsilon {
        if iterations == config.max_iterations {
            return Err(Error::NoConvergence {
                iterations,
                width: right - left,
            });
        }
        let mid = 0.5 * (left + right);
        if gaps.phi(mid) > 0.5 {
            left = mid;
        } else {
            right = mid;
        }
        iterations += 1;
    }
    Ok(0.5 * (left + right))
}

/// Prompt-free gap `Δr₂*(y₁, y₂)`.
pub fn solve_prompt_free_gap<M: RewardModel + ?Sized>(
    model: &M,
    y1: &ResponseFeatures,
    y2: &ResponseFeatures,
    weighting: &PromptWeighting,
    config: &SearchConfig,
) -> Result<f64> {
    weighting.validate()?;
    let gaps = CandidateGaps::gather(model, y1, y2, weighting)?;
    solve_from_gaps(&gaps, model.bounds(), config)
}

fn decomposition(total: f64, free: f64) -> GapDecomposition {
    GapDecomposition::from_total(total, free)
}

/// Decomposes the sample's reward gap `Δr(x, y_w, y_l)`.
pub fn decompose_pair<M: RewardModel + ?Sized>(
    model: &M,
    sample: &PreferenceSample,
    weighting: &PromptWeighting,
    config: &SearchConfig,
) -> Result<GapDecomposition> {
    let total = model.reward_gap(&sample.prompt, &sample.chosen, &sample.rejected)?;
    let free = solve_prompt_free_gap(model, &sample.chosen, &sample.rejected, weighting, config)?;
    Ok(decomposition(total, free))
}

/// Elementwise [`decompose_pair`], evaluated in parallel, order preserved.
pub fn decompose_batch<M, S>(
    model: &M,
    samples: &[PreferenceSample],
    source: &S,
    config: &SearchConfig,
) -> Result<Vec<GapDecomposition>>
where
    M: RewardModel + ?Sized,
    S: WeightingSource + ?Sized,
{
    let results: Vec<Result<GapDecomposition>> = samples
        .par_iter()
        .map(|s| decompose_pair(model, s, &source.weighting(s)?, config))
        .collect();
    let mut out = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(d) => out.push(d),
            Err(e) => failures.push((i, e)),
        }
    }
    if failures.is_empty() {
        Ok(out)
    } else {
        Err(Error::Batch(failures))
    }
}
