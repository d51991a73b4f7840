//! Candidate prompts and weights approximating `P(X | Y₁ = y₁, Y₂ = y₂)`.
//!
//! Three schemes are supported:
//!
//! * [`Scheme::ExactBayes`]: every prompt in the pool, weighted by
//!   `P(x) P(y₁|x) P(y₂|x)` and normalized. Needs the generation model.
//! * [`Scheme::SelfGenerated`]: the corresponding prompt plus `K − 1` prompts
//!   drawn from `P(X)`, re-weighted by `P(y₁|x) P(y₂|x)`. A Monte-Carlo
//!   version of the exact posterior.
//! * [`Scheme::PessimisticFixedP`]: the corresponding prompt gets weight `p`,
//!   `K − 1` other prompts drawn without replacement share `1 − p` equally.
//!   No generation model is needed.
//!
//! The order of `y₁, y₂` never matters: the weight is a product of the two
//! generation probabilities.

use std::collections::HashMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{PreferenceDataset, PreferenceSample, PromptFeatures, ResponseId, SampleId};

/// Tolerance on `Σ weights = 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

pub const DEFAULT_K: usize = 16;
pub const DEFAULT_P: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ExactBayes,
    SelfGenerated,
    PessimisticFixedP,
}

/// Scheme together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case", deny_unknown_fields)]
pub enum SchemeParams {
    ExactBayes,
    SelfGenerated { k: usize, seed: u64 },
    PessimisticFixedP { k: usize, p: f64, seed: u64 },
}

impl Default for SchemeParams {
    fn default() -> Self {
        SchemeParams::PessimisticFixedP {
            k: DEFAULT_K,
            p: DEFAULT_P,
            seed: 0,
        }
    }
}

impl SchemeParams {
    pub fn scheme(&self) -> Scheme {
        match self {
            SchemeParams::ExactBayes => Scheme::ExactBayes,
            SchemeParams::SelfGenerated { .. } => Scheme::SelfGenerated,
            SchemeParams::PessimisticFixedP { .. } => Scheme::PessimisticFixedP,
        }
    }

    /// Number of candidate prompts, when fixed by the scheme.
    pub fn k(&self) -> Option<usize> {
        match *self {
            SchemeParams::ExactBayes => None,
            SchemeParams::SelfGenerated { k, .. } | SchemeParams::PessimisticFixedP { k, .. } => {
                Some(k)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SchemeParams::ExactBayes => Ok(()),
            SchemeParams::SelfGenerated { k, .. } => {
                if k == 0 {
                    return Err(Error::Config("self-generated scheme needs k >= 1".into()));
                }
                Ok(())
            }
            SchemeParams::PessimisticFixedP { k, p, .. } => validate_pessimistic(k, p),
        }
    }
}

fn validate_pessimistic(k: usize, p: f64) -> Result<()> {
    if k == 0 {
        return Err(Error::Config("pessimistic scheme needs k >= 1".into()));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Config(format!(
            "pessimistic p must lie in (0, 1], got {p}"
        )));
    }
    if k == 1 && p != 1.0 {
        return Err(Error::Config(format!(
            "pessimistic scheme with k = 1 requires p = 1, got {p}"
        )));
    }
    Ok(())
}

/// Candidate prompts with normalized weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptWeighting {
    pub prompts: Vec<PromptFeatures>,
    pub weights: Vec<f64>,
    pub scheme: Scheme,
}

impl PromptWeighting {
    pub fn new(prompts: Vec<PromptFeatures>, weights: Vec<f64>, scheme: Scheme) -> Result<Self> {
        let w = Self {
            prompts,
            weights,
            scheme,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.prompts.len() != self.weights.len() {
            return Err(Error::Dimension {
                what: "prompt weighting",
                expected: self.prompts.len(),
                got: self.weights.len(),
            });
        }
        if self.prompts.is_empty() {
            return Err(Error::Config("prompt weighting is empty".into()));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Config(
                "prompt weights must be finite and >= 0".into(),
            ));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Config(format!("prompt weights sum to {total}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    pub fn weight_of(&self, prompt: &PromptFeatures) -> f64 {
        self.prompts
            .iter()
            .zip(&self.weights)
            .filter(|(p, _)| p.id == prompt.id)
            .map(|(_, w)| *w)
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PromptFeatures, f64)> {
        self.prompts.iter().zip(self.weights.iter().copied())
    }
}

/// `ln P(y|x)` or an error when the dataset has no generation model.
fn generation_model(dataset: &PreferenceDataset) -> Result<&crate::types::GenerationModel> {
    dataset
        .generation_model()
        .ok_or_else(|| Error::Unsupported("dataset carries no generation model P(y|x)".into()))
}

/// `P(y₁, y₂ | x) = P(y₁|x) · P(y₂|x)` for independently generated responses.
pub fn self_generated_prob(
    dataset: &PreferenceDataset,
    x: &PromptFeatures,
    y1: ResponseId,
    y2: ResponseId,
) -> Result<f64> {
    let gm = generation_model(dataset)?;
    let lookup = |y: ResponseId| {
        gm.prob(x.id, y)
            .ok_or_else(|| Error::Unsupported(format!("no generation probability P({y}|{})", x.id)))
    };
    Ok((lookup(y1)?.ln() + lookup(y2)?.ln()).exp())
}

/// Log of `P(y₁|x) P(y₂|x)`, `-inf` outside the support.
fn pair_log_likelihood(
    gm: &crate::types::GenerationModel,
    x: &PromptFeatures,
    y1: ResponseId,
    y2: ResponseId,
) -> f64 {
    match (gm.prob(x.id, y1), gm.prob(x.id, y2)) {
        (Some(a), Some(b)) => a.ln() + b.ln(),
        _ => f64::NEG_INFINITY,
    }
}

/// Normalizes log-weights in place via log-sum-exp.
fn normalize_log_weights(log_w: &[f64]) -> Option<Vec<f64>> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let unnorm: Vec<f64> = log_w.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    Some(unnorm.into_iter().map(|u| u / total).collect())
}

/// Exact posterior `P(x | y₁, y₂) ∝ P(x) P(y₁|x) P(y₂|x)` over the prompt
/// pool. Prompts with zero posterior mass are omitted.
pub fn exact_bayes_weights(
    dataset: &PreferenceDataset,
    y1: ResponseId,
    y2: ResponseId,
) -> Result<PromptWeighting> {
    let gm = generation_model(dataset)?;
    let log_w: Vec<f64> = dataset
        .prompt_pool()
        .iter()
        .map(|wp| wp.weight.ln() + pair_log_likelihood(gm, &wp.prompt, y1, y2))
        .collect();
    let weights = normalize_log_weights(&log_w).ok_or_else(|| {
        Error::Unsupported(format!(
            "no prompt in the pool generates both {y1} and {y2}"
        ))
    })?;
    let (prompts, weights): (Vec<_>, Vec<_>) = dataset
        .prompt_pool()
        .iter()
        .zip(weights)
        .filter(|(_, w)| *w > 0.0)
        .map(|(wp, w)| (wp.prompt.clone(), w))
        .unzip();
    PromptWeighting::new(prompts, weights, Scheme::ExactBayes)
}

/// Per-sample generator, independent of the order samples are visited in.
fn sample_rng(seed: u64, sample: SampleId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample.0 as u64);
    rng
}

/// Fixed-`p` weighting: the sample's own prompt gets `p`, `K − 1` other prompts
/// drawn without replacement share the rest.
pub fn pessimistic_weights(
    dataset: &PreferenceDataset,
    sample: &PreferenceSample,
    k: usize,
    p: f64,
    seed: u64,
) -> Result<PromptWeighting> {
    validate_pessimistic(k, p)?;
    let others: Vec<&PromptFeatures> = dataset
        .prompt_pool()
        .iter()
        .map(|wp| &wp.prompt)
        .filter(|x| x.id != sample.prompt.id)
        .collect();
    if k - 1 > others.len() {
        return Err(Error::Config(format!(
            "pessimistic scheme needs {} replacement prompts but the pool only has {}",
            k - 1,
            others.len()
        )));
    }
    let mut prompts = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(k);
    prompts.push(sample.prompt.clone());
    weights.push(p);
    if k > 1 {
        let mut rng = sample_rng(seed, sample.id);
        let share = (1.0 - p) / (k - 1) as f64;
        for i in index::sample(&mut rng, others.len(), k - 1) {
            prompts.push(others[i].clone());
            weights.push(share);
        }
    }
    PromptWeighting::new(prompts, weights, Scheme::PessimisticFixedP)
}

/// Importance-sampled weighting: the sample's own prompt plus `K − 1` prompts
/// drawn i.i.d. from `P(X)`, each re-weighted by `P(y₁|x) P(y₂|x)`.
pub fn self_generated_weights(
    dataset: &PreferenceDataset,
    sample: &PreferenceSample,
    k: usize,
    seed: u64,
) -> Result<PromptWeighting> {
    if k == 0 {
        return Err(Error::Config("self-generated scheme needs k >= 1".into()));
    }
    let gm = generation_model(dataset)?;
    let pool = dataset.prompt_pool();
    let cumulative: Vec<f64> = pool
        .iter()
        .scan(0.0, |acc, wp| {
            *acc += wp.weight;
            Some(*acc)
        })
        .collect();
    let mut rng = sample_rng(seed, sample.id);
    let mut prompts = vec![sample.prompt.clone()];
    for _ in 1..k {
        let u: f64 = rng.random::<f64>() * cumulative.last().copied().unwrap_or(0.0);
        let i = cumulative.partition_point(|&c| c <= u).min(pool.len() - 1);
        prompts.push(pool[i].prompt.clone());
    }
    let log_w: Vec<f64> = prompts
        .iter()
        .map(|x| pair_log_likelihood(gm, x, sample.chosen.id, sample.rejected.id))
        .collect();
    let weights = normalize_log_weights(&log_w).ok_or_else(|| {
        Error::Unsupported(format!(
            "sample {}: its own prompt does not generate both responses",
            sample.id
        ))
    })?;
    PromptWeighting::new(prompts, weights, Scheme::SelfGenerated)
}

/// Weighting for one sample under the given scheme.
pub fn weighting_for(
    dataset: &PreferenceDataset,
    sample: &PreferenceSample,
    params: &SchemeParams,
) -> Result<PromptWeighting> {
    match *params {
        SchemeParams::ExactBayes => {
            exact_bayes_weights(dataset, sample.chosen.id, sample.rejected.id)
        }
        SchemeParams::SelfGenerated { k, seed } => self_generated_weights(dataset, sample, k, seed),
        SchemeParams::PessimisticFixedP { k, p, seed } => {
            pessimistic_weights(dataset, sample, k, p, seed)
        }
    }
}

/// Anything that can hand out a weighting for a sample.
pub trait WeightingSource: Sync {
    fn weighting(&self, sample: &PreferenceSample) -> Result<PromptWeighting>;
}

/// Candidate sets pre-sampled once for every sample of a dataset.
///
/// Built eagerly and read-only afterwards. The cached weighting of a sample
/// equals [`weighting_for`] with the same parameters.
#[derive(Debug, Clone)]
pub struct WeightingCache {
    params: SchemeParams,
    entries: HashMap<SampleId, PromptWeighting>,
}

impl WeightingCache {
    pub fn build(dataset: &PreferenceDataset, params: SchemeParams) -> Result<Self> {
        params.validate()?;
        let entries = dataset
            .samples()
            .iter()
            .map(|s| Ok((s.id, weighting_for(dataset, s, &params)?)))
            .collect::<Result<HashMap<_, _>>>()?;
        Ok(Self { params, entries })
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn get(&self, id: SampleId) -> Option<&PromptWeighting> {
        self.entries.get(&id)
    }
}

impl WeightingSource for WeightingCache {
    fn weighting(&self, sample: &PreferenceSample) -> Result<PromptWeighting> {
        self.get(sample.id)
            .cloned()
            .ok_or_else(|| Error::Dataset(format!("sample {} not in weighting cache", sample.id)))
    }
}

/// Computes each weighting when asked, with no caching.
#[derive(Debug, Clone, Copy)]
pub struct OnDemand<'a> {
    pub dataset: &'a PreferenceDataset,
    pub params: SchemeParams,
}

impl WeightingSource for OnDemand<'_> {
    fn weighting(&self, sample: &PreferenceSample) -> Result<PromptWeighting> {
        weighting_for(self.dataset, sample, &self.params)
    }
}

/// Uses one fixed weighting for every sample.
#[derive(Debug, Clone)]
pub struct FixedWeighting(pub PromptWeighting);

impl WeightingSource for FixedWeighting {
    fn weighting(&self, _sample: &PreferenceSample) -> Result<PromptWeighting> {
        Ok(self.0.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{GenerationModel, Group, PromptId, ResponseFeatures, WeightedPrompt};
    use proptest::prelude::*;

    fn prompt(i: u32) -> PromptFeatures {
        PromptFeatures::new(PromptId(i), vec![i as f64])
    }

    fn response(i: u32) -> ResponseFeatures {
        ResponseFeatures::new(ResponseId(i), vec![0.0], 1 + i)
    }

    fn sample(id: u32, x: u32, a: u32, b: u32) -> PreferenceSample {
        let chosen = response(a);
        let rejected = response(b);
        let group = Group::from_lengths(chosen.length, rejected.length);
        PreferenceSample {
            id: SampleId(id),
            prompt: prompt(x),
            chosen,
            rejected,
            group,
            reinsertion_quota: 0,
        }
    }

    /// Two prompts a, b with P(y1|.)P(y2|.) = 0.09 and 0.01.
    fn two_prompt_dataset() -> PreferenceDataset {
        let mut gm = GenerationModel::new();
        gm.insert(PromptId(0), ResponseId(1), 0.3);
        gm.insert(PromptId(0), ResponseId(2), 0.3);
        gm.insert(PromptId(0), ResponseId(3), 0.4);
        gm.insert(PromptId(1), ResponseId(1), 0.1);
        gm.insert(PromptId(1), ResponseId(2), 0.1);
        gm.insert(PromptId(1), ResponseId(3), 0.8);
        PreferenceDataset::new(
            vec![sample(0, 0, 1, 2)],
            vec![
                WeightedPrompt {
                    prompt: prompt(0),
                    weight: 0.5,
                },
                WeightedPrompt {
                    prompt: prompt(1),
                    weight: 0.5,
                },
            ],
            Some(gm),
        )
        .unwrap()
    }

    fn pool_dataset(n: u32) -> PreferenceDataset {
        let pool = (0..n)
            .map(|i| WeightedPrompt {
                prompt: prompt(i),
                weight: 1.0 / n as f64,
            })
            .collect();
        PreferenceDataset::new(vec![sample(0, 0, 1, 2), sample(1, 3, 2, 1)], pool, None).unwrap()
    }

    #[test]
    fn exact_bayes_hand_normalized() {
        let d = two_prompt_dataset();
        let w = exact_bayes_weights(&d, ResponseId(1), ResponseId(2)).unwrap();
        assert!((w.weights[0] - 0.9).abs() < 1e-12);
        assert!((w.weights[1] - 0.1).abs() < 1e-12);
        assert_eq!(w.scheme, Scheme::ExactBayes);
    }

    #[test]
    fn exact_bayes_symmetric_case() {
        let mut gm = GenerationModel::new();
        for x in 0..2 {
            gm.insert(PromptId(x), ResponseId(1), 0.5);
            gm.insert(PromptId(x), ResponseId(2), 0.5);
        }
        let d = PreferenceDataset::new(
            vec![sample(0, 0, 1, 2)],
            vec![
                WeightedPrompt {
                    prompt: prompt(0),
                    weight: 0.5,
                },
                WeightedPrompt {
                    prompt: prompt(1),
                    weight: 0.5,
                },
            ],
            Some(gm),
        )
        .unwrap();
        let w = exact_bayes_weights(&d, ResponseId(1), ResponseId(2)).unwrap();
        assert_eq!(w.weights, vec![0.5, 0.5]);
    }

    #[test]
    fn exact_bayes_needs_generation_model() {
        let d = pool_dataset(4);
        assert!(matches!(
            exact_bayes_weights(&d, ResponseId(1), ResponseId(2)),
            Err(Error::Unsupported(_))
        ));
        let d = two_prompt_dataset();
        assert!(matches!(
            exact_bayes_weights(&d, ResponseId(1), ResponseId(99)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn exact_bayes_survives_underflowing_products() {
        // 1e-200 * 1e-200 underflows in linear space
        let mut gm = GenerationModel::new();
        gm.insert(PromptId(0), ResponseId(1), 1e-200);
        gm.insert(PromptId(0), ResponseId(2), 1e-200);
        gm.insert(PromptId(0), ResponseId(3), 1.0 - 2e-200);
        gm.insert(PromptId(1), ResponseId(1), 2e-200);
        gm.insert(PromptId(1), ResponseId(2), 1e-200);
        gm.insert(PromptId(1), ResponseId(3), 1.0 - 3e-200);
        let d = PreferenceDataset::new(
            vec![sample(0, 0, 1, 2)],
            vec![
                WeightedPrompt {
                    prompt: prompt(0),
                    weight: 0.5,
                },
                WeightedPrompt {
                    prompt: prompt(1),
                    weight: 0.5,
                },
            ],
            Some(gm),
        )
        .unwrap();
        let w = exact_bayes_weights(&d, ResponseId(1), ResponseId(2)).unwrap();
        assert!((w.weights[0] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn self_generated_products() {
        let d = two_prompt_dataset();
        let p = self_generated_prob(&d, &prompt(1), ResponseId(1), ResponseId(3)).unwrap();
        assert!((p - 0.08).abs() < 1e-15);
        let a = self_generated_prob(&d, &prompt(0), ResponseId(1), ResponseId(3)).unwrap();
        let b = self_generated_prob(&d, &prompt(0), ResponseId(3), ResponseId(1)).unwrap();
        assert_eq!(a, b);
        assert!(self_generated_prob(&d, &prompt(0), ResponseId(1), ResponseId(7)).is_err());

        let mut gm = GenerationModel::new();
        gm.insert(PromptId(0), ResponseId(1), 1.0);
        gm.insert(PromptId(1), ResponseId(2), 1.0);
        let d = PreferenceDataset::new(
            vec![],
            vec![
                WeightedPrompt {
                    prompt: prompt(0),
                    weight: 0.5,
                },
                WeightedPrompt {
                    prompt: prompt(1),
                    weight: 0.5,
                },
            ],
            Some(gm),
        )
        .unwrap();
        assert_eq!(
            self_generated_prob(&d, &prompt(0), ResponseId(1), ResponseId(1)).unwrap(),
            1.0
        );

        let mut gm = GenerationModel::new();
        gm.insert(PromptId(0), ResponseId(1), 0.2);
        gm.insert(PromptId(0), ResponseId(2), 0.5);
        gm.insert(PromptId(0), ResponseId(3), 0.3);
        let d = PreferenceDataset::new(
            vec![],
            vec![WeightedPrompt {
                prompt: prompt(0),
                weight: 1.0,
            }],
            Some(gm),
        )
        .unwrap();
        let p = self_generated_prob(&d, &prompt(0), ResponseId(1), ResponseId(2)).unwrap();
        assert!((p - 0.1).abs() < 1e-15);
    }

    #[test]
    fn self_generated_weights_include_own_prompt() {
        let d = two_prompt_dataset();
        let s = &d.samples()[0];
        let w = self_generated_weights(&d, s, 8, 3).unwrap();
        assert_eq!(w.len(), 8);
        assert_eq!(w.prompts[0].id, s.prompt.id);
        assert!(w.weights[0] > 0.0);
        let total: f64 = w.weights.iter().sum();
        assert!((total - 1.0).abs() < WEIGHT_SUM_TOL);
        assert_eq!(w, self_generated_weights(&d, s, 8, 3).unwrap());
    }

    #[test]
    fn pessimistic_k1() {
        let d = pool_dataset(5);
        let s = &d.samples()[0];
        let w = pessimistic_weights(&d, s, 1, 1.0, 0).unwrap();
        assert_eq!(w.weights, vec![1.0]);
        assert_eq!(w.prompts[0].id, s.prompt.id);
        assert!(pessimistic_weights(&d, s, 1, 0.5, 0).is_err());
    }

    #[test]
    fn pessimistic_k5() {
        let d = pool_dataset(10);
        let s = &d.samples()[0];
        let w = pessimistic_weights(&d, s, 5, 0.6, 7).unwrap();
        assert_eq!(w.weights[0], 0.6);
        for &x in &w.weights[1..] {
            assert!((x - 0.1).abs() < 1e-15);
        }
        let mut ids: Vec<_> = w.prompts.iter().map(|p| p.id).collect();
        assert!(!ids[1..].contains(&s.prompt.id));
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 5, "drawn without replacement");
    }

    #[test]
    fn pessimistic_pool_too_small() {
        let d = pool_dataset(4);
        let s = &d.samples()[0];
        assert!(pessimistic_weights(&d, s, 4, 0.5, 0).is_ok());
        assert!(matches!(
            pessimistic_weights(&d, s, 5, 0.5, 0),
            Err(Error::Config(_))
        ));
        assert!(pessimistic_weights(&d, s, 3, 0.0, 0).is_err());
        assert!(pessimistic_weights(&d, s, 3, 1.5, 0).is_err());
    }

    #[test]
    fn cache_matches_direct_computation() {
        let d = pool_dataset(30);
        let params = SchemeParams::PessimisticFixedP {
            k: 6,
            p: 0.5,
            seed: 11,
        };
        let cache = WeightingCache::build(&d, params).unwrap();
        for s in d.samples() {
            assert_eq!(
                cache.weighting(s).unwrap(),
                pessimistic_weights(&d, s, 6, 0.5, 11).unwrap()
            );
        }
    }

    proptest! {
        #[test]
        fn pessimistic_normalized_and_deterministic(
            k in 1usize..20, p in 0.01f64..1.0, seed in any::<u64>()
        ) {
            let d = pool_dataset(25);
            let s = &d.samples()[1];
            let p = if k == 1 { 1.0 } else { p };
            let w = pessimistic_weights(&d, s, k, p, seed).unwrap();
            let total: f64 = w.weights.iter().sum();
            prop_assert!((total - 1.0).abs() <= WEIGHT_SUM_TOL);
            prop_assert!(w.weight_of(&s.prompt) > 0.0);
            prop_assert_eq!(w, pessimistic_weights(&d, s, k, p, seed).unwrap());
        }

        #[test]
        fn exact_bayes_normalized_and_order_symmetric(
            probs in prop::collection::vec(prop::collection::vec(0.05f64..1.0, 3), 2..6),
            marg in prop::collection::vec(0.05f64..1.0, 6),
        ) {
            let n = probs.len();
            let mut gm = GenerationModel::new();
            for (x, row) in probs.iter().enumerate() {
                let t: f64 = row.iter().sum();
                for (y, v) in row.iter().enumerate() {
                    gm.insert(PromptId(x as u32), ResponseId(y as u32 + 1), v / t);
                }
            }
            let mt: f64 = marg[..n].iter().sum();
            let pool = (0..n as u32)
                .map(|i| WeightedPrompt { prompt: prompt(i), weight: marg[i as usize] / mt })
                .collect();
            let d = PreferenceDataset::new(vec![sample(0, 0, 1, 2)], pool, Some(gm)).unwrap();
            let a = exact_bayes_weights(&d, ResponseId(1), ResponseId(2)).unwrap();
            let b = exact_bayes_weights(&d, ResponseId(2), ResponseId(1)).unwrap();
            let total: f64 = a.weights.iter().sum();
            prop_assert!((total - 1.0).abs() <= WEIGHT_SUM_TOL);
            prop_assert_eq!(&a.weights, &b.weights);
            prop_assert!(a.weight_of(&prompt(0)) > 0.0);
        }
    }
}
