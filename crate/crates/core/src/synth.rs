//! Synthetic preference worlds with a known preference oracle.
//!
//! A world has a pool of prompts, a global pool of responses and, for each
//! prompt, a small response support with softmax generation probabilities.
//! The oracle score is
//!
//! ```text
//! s(x, y) = xᵀ M y + (β + γ · directive(x)) · ℓ(|y|)
//! ```
//!
//! where `ℓ` is the length encoding shared with the reward model, `β` a
//! prompt-free length preference and `γ` how strongly a length directive
//! flips the length preference. Labels are drawn from `σ(s(x, a) − s(x, b))`
//! and then flipped with probability `label_noise`.

use std::collections::{BTreeMap, HashMap};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mi_oracle::MAX_CONTEXTS;
use crate::reward::{sigmoid, FeatureLayout, LengthEncoding, RewardFunction, RewardModel};
use crate::trainer::DEFAULT_QUOTA;
use crate::types::{
    Directive, GenerationModel, Group, PreferenceDataset, PreferenceSample, PromptFeatures,
    PromptId, ResponseFeatures, ResponseId, SampleId, WeightedPrompt,
};

/// Bound of the oracle's squashed reward; scores are far inside it.
const ORACLE_BOUND: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub n_prompts: usize,
    pub n_responses: usize,
    pub support_size: usize,
    pub n_pairs: usize,
    pub d_x: usize,
    pub d_y: usize,
    pub length_range: (u32, u32),
    pub length: LengthEncoding,
    /// Standard deviation of the oracle's prompt-related score.
    pub oracle_scale: f64,
    pub length_bias: f64,
    pub directive_weight: f64,
    pub label_noise: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            n_prompts: 200,
            n_responses: 400,
            support_size: 4,
            n_pairs: 2000,
            d_x: 8,
            d_y: 8,
            length_range: (20, 180),
            length: LengthEncoding::default(),
            oracle_scale: 2.0,
            length_bias: 0.0,
            directive_weight: 3.0,
            label_noise: 0.0,
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_prompts == 0 || self.n_responses == 0 || self.n_pairs == 0 {
            return bad("n_prompts, n_responses and n_pairs must be positive".into());
        }
        if self.d_x == 0 || self.d_y == 0 {
            return bad("feature dimensions must be positive".into());
        }
        if self.support_size < 2 || self.support_size > self.n_responses {
            return bad(format!(
                "support_size must lie in [2, n_responses], got {}",
                self.support_size
            ));
        }
        let (lo, hi) = self.length_range;
        if lo == 0 || lo > hi {
            return bad(format!(
                "length_range ({lo}, {hi}) must satisfy 1 <= min <= max"
            ));
        }
        if !(self.length.scale > 0.0) {
            return bad("length scale must be positive".into());
        }
        if !(0.0..0.5).contains(&self.label_noise) {
            return bad(format!(
                "label_noise must lie in [0, 0.5), got {}",
                self.label_noise
            ));
        }
        for (name, v) in [
            ("oracle_scale", self.oracle_scale),
            ("length_bias", self.length_bias),
            ("directive_weight", self.directive_weight),
        ] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        Ok(())
    }

    /// Whether every (prompt, pair) context fits the exact-enumeration ceiling.
    pub fn is_enumerable(&self) -> bool {
        self.n_prompts * self.n_pairs <= MAX_CONTEXTS
    }
}

/// Hidden preference scorer of a world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oracle {
    /// Row-major `d_x × d_y`.
    pub interaction: Vec<f64>,
    pub d_x: usize,
    pub d_y: usize,
    pub length: LengthEncoding,
    pub length_bias: f64,
    pub directive_weight: f64,
}

impl Oracle {
    pub fn score(&self, x: &PromptFeatures, y: &ResponseFeatures) -> f64 {
        let mut s = 0.0;
        for (i, xi) in x.vector.iter().enumerate() {
            let row = &self.interaction[i * self.d_y..(i + 1) * self.d_y];
            s += xi * row.iter().zip(&y.vector).map(|(m, yj)| m * yj).sum::<f64>();
        }
        let slope = self.length_bias + self.directive_weight * x.directive.as_f64();
        s + slope * self.length.encode(y.length)
    }

    pub fn score_gap(&self, x: &PromptFeatures, a: &ResponseFeatures, b: &ResponseFeatures) -> f64 {
        self.score(x, a) - self.score(x, b)
    }
}

/// The oracle as a bounded reward: `B · tanh(s / B)`, monotone in the score.
impl RewardModel for Oracle {
    fn reward(&self, x: &PromptFeatures, y: &ResponseFeatures) -> Result<f64> {
        if x.vector.len() != self.d_x {
            return Err(Error::Dimension {
                what: "prompt vector",
                expected: self.d_x,
                got: x.vector.len(),
            });
        }
        if y.vector.len() != self.d_y {
            return Err(Error::Dimension {
                what: "response vector",
                expected: self.d_y,
                got: y.vector.len(),
            });
        }
        Ok(ORACLE_BOUND * (self.score(x, y) / ORACLE_BOUND).tanh())
    }

    fn bounds(&self) -> (f64, f64) {
        (-ORACLE_BOUND, ORACLE_BOUND)
    }
}

/// A generated world: prompts, responses, supports and oracle.
#[derive(Debug, Clone)]
pub struct World {
    pub config: WorldConfig,
    pub oracle: Oracle,
    pub prompts: Vec<PromptFeatures>,
    pub responses: Vec<ResponseFeatures>,
    pub generation: GenerationModel,
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

impl World {
    pub fn new(config: &WorldConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let sd = config.oracle_scale / ((config.d_x * config.d_y) as f64).sqrt();
        let interaction = normal_vec(&mut rng, config.d_x * config.d_y)
            .into_iter()
            .map(|v| v * sd)
            .collect();
        let oracle = Oracle {
            interaction,
            d_x: config.d_x,
            d_y: config.d_y,
            length: config.length,
            length_bias: config.length_bias,
            directive_weight: config.directive_weight,
        };
        let prompts: Vec<PromptFeatures> = (0..config.n_prompts)
            .map(|i| PromptFeatures::new(PromptId(i as u32), normal_vec(&mut rng, config.d_x)))
            .collect();
        let (lo, hi) = config.length_range;
        let responses: Vec<ResponseFeatures> = (0..config.n_responses)
            .map(|j| {
                let v = normal_vec(&mut rng, config.d_y);
                ResponseFeatures::new(ResponseId(j as u32), v, rng.random_range(lo..=hi))
            })
            .collect();
        let mut generation = GenerationModel::new();
        for x in &prompts {
            let support = index::sample(&mut rng, config.n_responses, config.support_size);
            let logits = normal_vec(&mut rng, config.support_size);
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            for (j, e) in support.iter().zip(exps) {
                generation.insert(x.id, ResponseId(j as u32), e / total);
            }
        }
        Ok(Self {
            config: config.clone(),
            oracle,
            prompts,
            responses,
            generation,
        })
    }

    fn pool(&self) -> Vec<WeightedPrompt> {
        let w = 1.0 / self.prompts.len() as f64;
        self.prompts
            .iter()
            .map(|x| WeightedPrompt {
                prompt: x.clone(),
                weight: w,
            })
            .collect()
    }

    /// Draws the label for `(x, a, b)` and returns `(chosen, rejected)`.
    fn label<'a>(
        &self,
        rng: &mut ChaCha8Rng,
        x: &PromptFeatures,
        a: &'a ResponseFeatures,
        b: &'a ResponseFeatures,
    ) -> (&'a ResponseFeatures, &'a ResponseFeatures) {
        let mut first = rng.random::<f64>() < sigmoid(self.oracle.score_gap(x, a, b));
        if rng.random::<f64>() < self.config.label_noise {
            first = !first;
        }
        if first {
            (a, b)
        } else {
            (b, a)
        }
    }

    /// Samples drawn from the prompts' supports with oracle labels.
    pub fn base_dataset(&self) -> Result<PreferenceDataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(1);
        let supports: Vec<Vec<(ResponseId, f64)>> = self
            .prompts
            .iter()
            .map(|x| self.generation.support(x.id).collect())
            .collect();
        let mut samples = Vec::with_capacity(self.config.n_pairs);
        for i in 0..self.config.n_pairs {
            let p = rng.random_range(0..self.prompts.len());
            let x = &self.prompts[p];
            let support = &supports[p];
            let mut probs: Vec<f64> = support.iter().map(|s| s.1).collect();
            let first = WeightedIndex::new(&probs)
                .map_err(|e| Error::Consistency(e.to_string()))?
                .sample(&mut rng);
            probs[first] = 0.0;
            let second = WeightedIndex::new(&probs)
                .map_err(|e| Error::Consistency(e.to_string()))?
                .sample(&mut rng);
            let a = &self.responses[support[first].0 .0 as usize];
            let b = &self.responses[support[second].0 .0 as usize];
            let (chosen, rejected) = self.label(&mut rng, x, a, b);
            samples.push(PreferenceSample {
                id: SampleId(i as u32),
                prompt: x.clone(),
                chosen: chosen.clone(),
                rejected: rejected.clone(),
                group: Group::from_lengths(chosen.length, rejected.length),
                reinsertion_quota: DEFAULT_QUOTA,
            });
        }
        PreferenceDataset::new(samples, self.pool(), Some(self.generation.clone()))
    }

    /// Labels a pair by the oracle's preferred response.
    fn oracle_sample(
        &self,
        id: u32,
        x: &PromptFeatures,
        a: &ResponseFeatures,
        b: &ResponseFeatures,
    ) -> PreferenceSample {
        let (chosen, rejected) = if self.oracle.score_gap(x, a, b) >= 0.0 {
            (a, b)
        } else {
            (b, a)
        };
        PreferenceSample {
            id: SampleId(id),
            prompt: x.clone(),
            chosen: chosen.clone(),
            rejected: rejected.clone(),
            group: Group::from_lengths(chosen.length, rejected.length),
            reinsertion_quota: DEFAULT_QUOTA,
        }
    }

    /// Held-out pairs that pair seen prompts with responses seen only under
    /// other prompts, labeled by the oracle's preference.
    pub fn heldout_recombined(&self, n: usize, seed: u64) -> Result<PreferenceDataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        let mut seen_under: HashMap<ResponseId, Vec<PromptId>> = HashMap::new();
        for (x, y, _) in self.generation.iter() {
            seen_under.entry(y).or_default().push(x);
        }
        let mut seen: Vec<ResponseId> = seen_under.keys().copied().collect();
        seen.sort();
        let mut samples = Vec::with_capacity(n);
        let mut attempts = 0usize;
        while samples.len() < n {
            attempts += 1;
            if attempts > 100 * n.max(1) {
                return Err(Error::Config("too few seen responses to recombine".into()));
            }
            let x = &self.prompts[rng.random_range(0..self.prompts.len())];
            let pick = index::sample(&mut rng, seen.len(), 2);
            let (a, b) = (seen[pick.index(0)], seen[pick.index(1)]);
            let foreign = |y: ResponseId| seen_under[&y].iter().all(|&p| p != x.id);
            if !(foreign(a) && foreign(b)) {
                continue;
            }
            let a = &self.responses[a.0 as usize];
            let b = &self.responses[b.0 as usize];
            samples.push(self.oracle_sample(samples.len() as u32, x, a, b));
        }
        PreferenceDataset::new(samples, self.pool(), None)
    }

    /// Held-out pairs under freshly drawn prompts, labeled by the oracle.
    pub fn heldout_fresh(
        &self,
        n_prompts: usize,
        n: usize,
        seed: u64,
    ) -> Result<PreferenceDataset> {
        if n_prompts == 0 {
            return Err(Error::Config(
                "fresh split needs at least one prompt".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(3);
        let base = self.prompts.len() as u32;
        let prompts: Vec<PromptFeatures> = (0..n_prompts)
            .map(|i| {
                PromptFeatures::new(
                    PromptId(base + i as u32),
                    normal_vec(&mut rng, self.config.d_x),
                )
            })
            .collect();
        let samples = (0..n)
            .map(|i| {
                let x = &prompts[rng.random_range(0..prompts.len())];
                let pick = index::sample(&mut rng, self.responses.len(), 2);
                let a = &self.responses[pick.index(0)];
                let b = &self.responses[pick.index(1)];
                self.oracle_sample(i as u32, x, a, b)
            })
            .collect();
        let w = 1.0 / n_prompts as f64;
        let pool = prompts
            .into_iter()
            .map(|prompt| WeightedPrompt { prompt, weight: w })
            .collect();
        PreferenceDataset::new(samples, pool, None)
    }
}

/// Base dataset of the world described by `config`.
pub fn gen_base_dataset(config: &WorldConfig) -> Result<PreferenceDataset> {
    World::new(config)?.base_dataset()
}

/// Keeps every chosen-longer sample and subsamples chosen-shorter ones so
/// that chosen-longer samples make up `fraction` of the output. When there
/// are too few chosen-shorter samples for that, chosen-longer samples are
/// subsampled instead. Base order is preserved.
pub fn make_length_biased(
    base: &PreferenceDataset,
    fraction: f64,
    seed: u64,
) -> Result<PreferenceDataset> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!(
            "fraction must lie in [0, 1], got {fraction}"
        )));
    }
    let longer: Vec<usize> = (0..base.len())
        .filter(|&i| base.samples()[i].chosen.length > base.samples()[i].rejected.length)
        .collect();
    let shorter: Vec<usize> = (0..base.len())
        .filter(|&i| base.samples()[i].chosen.length <= base.samples()[i].rejected.length)
        .collect();
    let (n_long, n_short) = if fraction == 1.0 {
        (longer.len(), 0)
    } else if fraction == 0.0 {
        (0, shorter.len())
    } else {
        let want_short = (longer.len() as f64 * (1.0 - fraction) / fraction).round() as usize;
        if want_short <= shorter.len() {
            (longer.len(), want_short)
        } else {
            let want_long = (shorter.len() as f64 * fraction / (1.0 - fraction)).round() as usize;
            (want_long.min(longer.len()), shorter.len())
        }
    };
    if (fraction > 0.0 && n_long == 0) || (fraction < 1.0 && n_short == 0) {
        return Err(Error::Dataset(format!(
            "base has {} chosen-longer and {} chosen-shorter samples, too few for fraction {fraction}",
            longer.len(),
            shorter.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(4);
    let mut keep: Vec<usize> = Vec::with_capacity(n_long + n_short);
    for (group, n) in [(&longer, n_long), (&shorter, n_short)] {
        keep.extend(
            index::sample(&mut rng, group.len(), n)
                .into_iter()
                .map(|i| group[i]),
        );
    }
    keep.sort_unstable();
    base.with_samples(
        keep.into_iter()
            .map(|i| base.samples()[i].clone())
            .collect(),
    )
}

/// Adds a label-swapped twin under a length-directive copy of the prompt
/// for a random `fraction` of the samples. A twin of a chosen-longer pair
/// asks for the shortest response, any other twin for the longest. Twin
/// prompts get fresh ids, their parent's features, weight and support.
pub fn make_adversarial(
    base: &PreferenceDataset,
    fraction: f64,
    seed: u64,
) -> Result<PreferenceDataset> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!(
            "fraction must lie in [0, 1], got {fraction}"
        )));
    }
    if fraction == 0.0 {
        return Ok(base.clone());
    }
    let n_twins = (base.len() as f64 * fraction).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(5);
    let mut chosen: Vec<usize> = index::sample(&mut rng, base.len(), n_twins).into_vec();
    chosen.sort_unstable();

    let mut next_prompt = base
        .prompt_pool()
        .iter()
        .map(|wp| wp.prompt.id.0)
        .max()
        .unwrap_or(0)
        + 1;
    let mut next_sample = base.samples().iter().map(|s| s.id.0).max().unwrap_or(0) + 1;
    let mut twin_prompts: BTreeMap<(PromptId, i8), PromptFeatures> = BTreeMap::new();
    let mut samples: Vec<PreferenceSample> = base
        .samples()
        .iter()
        .map(|s| PreferenceSample {
            group: Group::Original,
            ..s.clone()
        })
        .collect();
    for &i in &chosen {
        let s = &base.samples()[i];
        let directive = if s.chosen.length > s.rejected.length {
            Directive::Shortest
        } else {
            Directive::Longest
        };
        let prompt = twin_prompts
            .entry((s.prompt.id, directive.into()))
            .or_insert_with(|| {
                let p = PromptFeatures {
                    id: PromptId(next_prompt),
                    vector: s.prompt.vector.clone(),
                    directive,
                };
                next_prompt += 1;
                p
            })
            .clone();
        samples.push(PreferenceSample {
            id: SampleId(next_sample),
            prompt,
            chosen: s.rejected.clone(),
            rejected: s.chosen.clone(),
            group: Group::Adversarial,
            reinsertion_quota: s.reinsertion_quota,
        });
        next_sample += 1;
    }

    let mut pool: Vec<WeightedPrompt> = base.prompt_pool().to_vec();
    let mut generation = base.generation_model().cloned();
    for ((parent, _), twin) in &twin_prompts {
        let i = base
            .prompt_position(*parent)
            .ok_or_else(|| Error::Consistency(format!("prompt {parent} missing from pool")))?;
        pool.push(WeightedPrompt {
            prompt: twin.clone(),
            weight: base.prompt_pool()[i].weight,
        });
        if let Some(gm) = generation.as_mut() {
            let support: Vec<(ResponseId, f64)> = gm.support(*parent).collect();
            for (y, p) in support {
                gm.insert(twin.id, y, p);
            }
        }
    }
    let total: f64 = pool.iter().map(|wp| wp.weight).sum();
    pool.iter_mut().for_each(|wp| wp.weight /= total);
    PreferenceDataset::new(samples, pool, generation)
}

/// Prompt-related factor by the oracle's verdict under `x`.
pub const MULTIPLICATIVE_LEVELS: [f64; 3] = [1.0, 0.5, 0.1];

/// Fixed pairwise reward `r(x, y) = r₁(x, y) · |y| / c`.
///
/// `r₁(x, y)` is 1.0, 0.5 or 0.1 when the oracle under `x` prefers `y`, ties
/// it (score gap within `tie_margin`) or prefers the other response, plus
/// Gaussian noise fixed per `(seed, x, y, other response)` and clipped to
/// five standard deviations. `c` is the mean response length.
#[derive(Debug, Clone)]
pub struct MultiplicativeReward {
    pub oracle: Oracle,
    pub mean_length: f64,
    pub tie_margin: f64,
    pub noise_std: f64,
    pub seed: u64,
    max_length: u32,
}

impl MultiplicativeReward {
    /// `r₁(x, y)` against `other`, without noise.
    pub fn level(&self, x: &PromptFeatures, y: &ResponseFeatures, other: &ResponseFeatures) -> f64 {
        let g = self.oracle.score_gap(x, y, other);
        if g > self.tie_margin {
            MULTIPLICATIVE_LEVELS[0]
        } else if g >= -self.tie_margin {
            MULTIPLICATIVE_LEVELS[1]
        } else {
            MULTIPLICATIVE_LEVELS[2]
        }
    }

    fn noise(&self, x: &PromptFeatures, y: &ResponseFeatures, other: &ResponseFeatures) -> f64 {
        if self.noise_std == 0.0 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((x.id.0 as u64) << 32) | y.id.0 as u64);
        rng.set_word_pos(other.id.0 as u128 * 16);
        let n: f64 = Normal::new(0.0, self.noise_std)
            .expect("noise_std validated")
            .sample(&mut rng);
        n.clamp(-5.0 * self.noise_std, 5.0 * self.noise_std)
    }

    /// `r(x, y)` when `y` is compared against `other`.
    pub fn pair_reward(
        &self,
        x: &PromptFeatures,
        y: &ResponseFeatures,
        other: &ResponseFeatures,
    ) -> f64 {
        (self.level(x, y, other) + self.noise(x, y, other)) * y.length as f64 / self.mean_length
    }
}

impl RewardModel for MultiplicativeReward {
    fn reward(&self, _x: &PromptFeatures, _y: &ResponseFeatures) -> Result<f64> {
        Err(Error::Unsupported(
            "multiplicative reward is defined per response pair".into(),
        ))
    }

    fn bounds(&self) -> (f64, f64) {
        let top = self.max_length as f64 / self.mean_length;
        let slack = 5.0 * self.noise_std;
        (
            (MULTIPLICATIVE_LEVELS[2] - slack).min(0.0) * top,
            (MULTIPLICATIVE_LEVELS[0] + slack) * top,
        )
    }

    fn reward_gap(
        &self,
        x: &PromptFeatures,
        y1: &ResponseFeatures,
        y2: &ResponseFeatures,
    ) -> Result<f64> {
        Ok(self.pair_reward(x, y1, y2) - self.pair_reward(x, y2, y1))
    }
}

/// Base dataset of the world together with its multiplicative reward.
pub fn make_multiplicative_gt(
    config: &WorldConfig,
    tie_margin: f64,
    noise_std: f64,
) -> Result<(PreferenceDataset, MultiplicativeReward)> {
    if !(tie_margin >= 0.0) || !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(Error::Config(
            "tie_margin and noise_std must be non-negative".into(),
        ));
    }
    let world = World::new(config)?;
    let dataset = world.base_dataset()?;
    let reward = MultiplicativeReward {
        oracle: world.oracle.clone(),
        mean_length: dataset.mean_length(),
        tie_margin,
        noise_std,
        seed: config.seed,
        max_length: config.length_range.1,
    };
    Ok((dataset, reward))
}

/// Small world in which every prompt generates every response, for exact
/// enumeration of contexts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnumerableConfig {
    pub n_prompts: usize,
    pub n_responses: usize,
    pub n_pairs: usize,
    pub d_x: usize,
    pub d_y: usize,
    pub seed: u64,
}

impl Default for EnumerableConfig {
    fn default() -> Self {
        Self {
            n_prompts: 4,
            n_responses: 5,
            n_pairs: 6,
            d_x: 3,
            d_y: 3,
            seed: 0,
        }
    }
}

/// Random prompt marginal, random full-support generation model and
/// `n_pairs` distinct ordered response pairs, one sample each.
pub fn gen_enumerable_dataset(config: &EnumerableConfig) -> Result<PreferenceDataset> {
    let c = config;
    if c.n_prompts == 0 || c.n_responses < 2 || c.n_pairs == 0 {
        return Err(Error::Config(
            "enumerable world needs prompts, pairs and two responses".into(),
        ));
    }
    if c.n_prompts * c.n_pairs > MAX_CONTEXTS {
        return Err(Error::Config(format!(
            "{} contexts exceed the enumeration ceiling of {MAX_CONTEXTS}",
            c.n_prompts * c.n_pairs
        )));
    }
    if c.n_pairs > c.n_responses * (c.n_responses - 1) {
        return Err(Error::Config(
            "more pairs requested than ordered pairs exist".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let raw: Vec<f64> = (0..c.n_prompts)
        .map(|_| rng.random_range(0.1..1.0))
        .collect();
    let total: f64 = raw.iter().sum();
    let pool: Vec<WeightedPrompt> = raw
        .iter()
        .enumerate()
        .map(|(i, w)| WeightedPrompt {
            prompt: PromptFeatures::new(PromptId(i as u32), normal_vec(&mut rng, c.d_x)),
            weight: w / total,
        })
        .collect();
    let responses: Vec<ResponseFeatures> = (0..c.n_responses)
        .map(|j| {
            let v = normal_vec(&mut rng, c.d_y);
            ResponseFeatures::new(ResponseId(j as u32), v, rng.random_range(20..=180))
        })
        .collect();
    let mut gm = GenerationModel::new();
    for wp in &pool {
        let raw: Vec<f64> = (0..c.n_responses)
            .map(|_| rng.random_range(0.05..1.0))
            .collect();
        let total: f64 = raw.iter().sum();
        for (j, r) in raw.iter().enumerate() {
            gm.insert(wp.prompt.id, ResponseId(j as u32), r / total);
        }
    }
    let mut all_pairs: Vec<(usize, usize)> = (0..c.n_responses)
        .flat_map(|a| {
            (0..c.n_responses)
                .filter(move |&b| b != a)
                .map(move |b| (a, b))
        })
        .collect();
    all_pairs.shuffle(&mut rng);
    let samples = all_pairs[..c.n_pairs]
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| {
            let x = pool[rng.random_range(0..pool.len())].prompt.clone();
            let (ya, yb) = (&responses[a], &responses[b]);
            PreferenceSample {
                id: SampleId(i as u32),
                prompt: x,
                chosen: ya.clone(),
                rejected: yb.clone(),
                group: Group::from_lengths(ya.length, yb.length),
                reinsertion_quota: DEFAULT_QUOTA,
            }
        })
        .collect();
    PreferenceDataset::new(samples, pool, Some(gm))
}

/// Reward function with i.i.d. `N(0, std²)` parameters and the default
/// bounds, sized for `dataset`. Used to fuzz the decomposition.
pub fn random_reward_function(
    dataset: &PreferenceDataset,
    std: f64,
    seed: u64,
) -> Result<RewardFunction> {
    let (dx, dy) = match (dataset.prompt_dim(), dataset.response_dim()) {
        (Some(dx), Some(dy)) => (dx, dy),
        _ => return Err(Error::Dataset("empty dataset".into())),
    };
    let layout = FeatureLayout::new(dx, dy, LengthEncoding::default());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = normal_vec(&mut rng, layout.num_params())
        .into_iter()
        .map(|v| v * std)
        .collect();
    RewardFunction::new(
        layout,
        params,
        crate::reward::DEFAULT_R_MIN,
        crate::reward::DEFAULT_R_MAX,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> WorldConfig {
        WorldConfig {
            n_prompts: 30,
            n_responses: 60,
            n_pairs: 400,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn generation_is_normalized_and_supports_samples() {
        let d = gen_base_dataset(&small()).unwrap();
        let gm = d.generation_model().unwrap();
        for s in d.samples() {
            assert!(gm.prob(s.prompt.id, s.chosen.id).is_some());
            assert!(gm.prob(s.prompt.id, s.rejected.id).is_some());
            assert_eq!(
                s.group,
                Group::from_lengths(s.chosen.length, s.rejected.length)
            );
        }
    }

    #[test]
    fn oracle_score_by_hand() {
        let o = Oracle {
            interaction: vec![1.0, 2.0, 3.0, 4.0],
            d_x: 2,
            d_y: 2,
            length: LengthEncoding {
                center: 100.0,
                scale: 50.0,
            },
            length_bias: 0.5,
            directive_weight: 2.0,
        };
        let x =
            PromptFeatures::new(PromptId(0), vec![1.0, -1.0]).with_directive(Directive::Shortest);
        let y = ResponseFeatures::new(ResponseId(0), vec![0.5, 1.0], 150);
        // xᵀMy = 1·(0.5 + 2) − (1.5 + 4) = −3; slope (0.5 − 2) · 1
        assert!((o.score(&x, &y) - (-4.5)).abs() < 1e-12);
    }

    #[test]
    fn enumerable_world_respects_ceiling() {
        let d = gen_enumerable_dataset(&EnumerableConfig::default()).unwrap();
        assert_eq!(d.len(), 6);
        let bad = EnumerableConfig {
            n_prompts: 11,
            n_pairs: 6,
            ..Default::default()
        };
        assert!(gen_enumerable_dataset(&bad).is_err());
    }

    #[test]
    fn multiplicative_reward_is_antisymmetric() {
        let (d, r) = make_multiplicative_gt(&small(), 0.1, 0.1).unwrap();
        for s in d.samples().iter().take(50) {
            let a = r.reward_gap(&s.prompt, &s.chosen, &s.rejected).unwrap();
            let b = r.reward_gap(&s.prompt, &s.rejected, &s.chosen).unwrap();
            assert_eq!(a, -b);
            let (lo, hi) = r.bounds();
            for y in [&s.chosen, &s.rejected] {
                let other = if y.id == s.chosen.id {
                    &s.rejected
                } else {
                    &s.chosen
                };
                let v = r.pair_reward(&s.prompt, y, other);
                assert!(lo <= v && v <= hi);
            }
        }
    }
}
