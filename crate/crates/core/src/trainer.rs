//! Bradley-Terry reward training: a plain SGD loop and the loop that only
//! updates on pairs whose prompt-free gap falls below an adaptive threshold.
//!
//! Prioritized step:
//!
//! 1. draw samples until `k` of them have `Δr₂ < λ_t`; the others are
//!    reinserted according to the reinsertion mode and their quota,
//! 2. take one SGD step on the accepted batch,
//! 3. split every `Δr₂` drawn in this step into two clusters and move `λ`
//!    toward the boundary: `λ_{t+1} = α λ_t + (1 − α) λ̂_t`.
//!
//! Both loops draw from the same cursor, which walks a shuffled pass over
//! the live samples and starts a new pass when the current one runs out.
//! With every sample accepted the two loops therefore see identical batches.

use std::collections::VecDeque;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::conditional::{SchemeParams, WeightingCache, WeightingSource};
use crate::decompose::{decompose_pair, SearchConfig};
use crate::error::{Error, Result};
use crate::eval::{quadrant_snapshot_with, snapshot_indices, QuadrantSnapshot};
use crate::reward::{sigmoid, FeatureLayout, LengthEncoding, RewardFunction, RewardModel};
use crate::types::{PreferenceDataset, PreferenceSample, SampleId};

pub const DEFAULT_LEARNING_RATE: f64 = 1e-2;
pub const DEFAULT_ALPHA: f64 = 0.9;
pub const DEFAULT_QUOTA: u32 = 3;
pub const SNAPSHOT_COUNT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReinsertionMode {
    /// Put a rejected sample back into the current pass at a random position.
    Immediate,
    /// Drop a rejected sample from the current pass; it returns with the next.
    Lazy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Vanilla,
    Prioritized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub ema_alpha: f64,
    pub reinsertion_mode: ReinsertionMode,
    pub reinsertion_quota: u32,
    pub scheme: SchemeParams,
    pub search: SearchConfig,
    /// Standard deviation of the Gaussian initial parameters.
    pub init_scale: f64,
    /// Fixed threshold in place of the adaptive one.
    pub lambda_override: Option<f64>,
    pub snapshot_size: usize,
    pub length: LengthEncoding,
    pub r_min: f64,
    pub r_max: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            batch_size: 32,
            learning_rate: DEFAULT_LEARNING_RATE,
            ema_alpha: DEFAULT_ALPHA,
            reinsertion_mode: ReinsertionMode::Immediate,
            reinsertion_quota: DEFAULT_QUOTA,
            scheme: SchemeParams::default(),
            search: SearchConfig::default(),
            init_scale: 0.01,
            lambda_override: None,
            snapshot_size: 200,
            length: LengthEncoding::default(),
            r_min: crate::reward::DEFAULT_R_MIN,
            r_max: crate::reward::DEFAULT_R_MAX,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be non-negative, got {}",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.ema_alpha) {
            return bad(format!(
                "ema_alpha must lie in [0, 1), got {}",
                self.ema_alpha
            ));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale must be non-negative".into());
        }
        if matches!(self.lambda_override, Some(l) if l.is_nan()) {
            return bad("lambda_override must not be NaN".into());
        }
        self.scheme.validate()?;
        self.search.validate(self.r_min, self.r_max)
    }

    /// Steps after which a quadrant snapshot is taken: `ceil(i T / 4)`.
    pub fn snapshot_steps(&self) -> Vec<usize> {
        let mut steps: Vec<usize> = (1..=SNAPSHOT_COUNT)
            .map(|i| (i * self.steps).div_ceil(SNAPSHOT_COUNT))
            .collect();
        steps.dedup();
        steps
    }
}

/// `−log σ(gap)`, stable for any finite gap.
pub fn bt_loss(gap: f64) -> f64 {
    if gap > 0.0 {
        (-gap).exp().ln_1p()
    } else {
        -gap + gap.exp().ln_1p()
    }
}

/// Mean BT loss and its gradient over a batch.
pub fn bt_loss_and_gradient(
    model: &RewardFunction,
    batch: &[&PreferenceSample],
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Config("gradient of an empty batch".into()));
    }
    let mut grad = vec![0.0; model.params.len()];
    let mut loss = 0.0;
    for s in batch {
        let gap = model.reward_gap(&s.prompt, &s.chosen, &s.rejected)?;
        loss += bt_loss(gap);
        // d/dgap of −log σ(gap) is −σ(−gap)
        let coef = -sigmoid(-gap);
        let gw = model.reward_grad(&s.prompt, &s.chosen)?;
        let gl = model.reward_grad(&s.prompt, &s.rejected)?;
        for ((g, a), b) in grad.iter_mut().zip(gw).zip(gl) {
            *g += coef * (a - b);
        }
    }
    let n = batch.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}

/// Mean gradient of the BT loss over a batch.
pub fn bt_gradient(model: &RewardFunction, batch: &[&PreferenceSample]) -> Result<Vec<f64>> {
    bt_loss_and_gradient(model, batch).map(|(_, g)| g)
}

/// Boundary between two 1-D k-means clusters started at the minimum and
/// maximum. Values are sorted first so the result ignores input order.
pub fn kmeans_1d_boundary(values: &[f64]) -> Result<f64> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate(
            "non-finite value in clustering input".into(),
        ));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (lo, hi) = match (v.first(), v.last()) {
        (Some(&lo), Some(&hi)) if lo < hi => (lo, hi),
        _ => {
            return Err(Error::Degenerate(
                "clustering needs at least two distinct values".into(),
            ))
        }
    };
    let (mut c0, mut c1) = (lo, hi);
    // split index: v[..split] is the low cluster
    let mut split = usize::MAX;
    loop {
        let boundary = 0.5 * (c0 + c1);
        let next = v.partition_point(|&x| x <= boundary);
        if next == split {
            return Ok(boundary);
        }
        split = next;
        c0 = v[..split].iter().sum::<f64>() / split as f64;
        c1 = v[split..].iter().sum::<f64>() / (v.len() - split) as f64;
    }
}

/// `α λ + (1 − α) λ̂`.
pub fn ema_update(lambda: f64, boundary: f64, alpha: f64) -> f64 {
    alpha * lambda + (1.0 - alpha) * boundary
}

/// One draw of the prioritized loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub step: usize,
    pub sample_id: SampleId,
    pub prompt_free_gap: f64,
    pub threshold: f64,
    pub accepted: bool,
    /// The draw came from a reinsertion rather than a fresh pass.
    pub reinserted: bool,
}

/// One line of the step log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub accepted: Vec<SampleId>,
    pub rejected: Vec<SampleId>,
    pub lambda: Option<f64>,
    pub lambda_hat: Option<f64>,
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub quadrant: QuadrantSnapshot,
    pub model: RewardFunction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub model: RewardFunction,
    pub lambda: f64,
    pub step: usize,
    /// Remaining reinsertions, indexed like the dataset's samples.
    pub quota: Vec<u32>,
    pub snapshots: Vec<Snapshot>,
    pub log: Vec<StepRecord>,
    pub audit: Vec<Draw>,
    /// Parameters after every step, starting with the initial ones.
    pub trajectory: Vec<Vec<f64>>,
    /// Set when the cursor ran out of live samples.
    pub exhausted: bool,
}

impl TrainerState {
    pub fn new(model: RewardFunction, n_samples: usize, quota: u32) -> Self {
        Self {
            trajectory: vec![model.params.clone()],
            model,
            lambda: 0.0,
            step: 0,
            quota: vec![quota; n_samples],
            snapshots: Vec::new(),
            log: Vec::new(),
            audit: Vec::new(),
            exhausted: false,
        }
    }
}

/// Shuffled passes over the live samples of a dataset.
#[derive(Debug, Clone)]
pub struct Cursor {
    queue: VecDeque<(usize, bool)>,
    live: Vec<bool>,
    waiting: Vec<usize>,
    shuffle_rng: ChaCha8Rng,
    insert_rng: ChaCha8Rng,
}

impl Cursor {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed);
        shuffle_rng.set_stream(10);
        let mut insert_rng = ChaCha8Rng::seed_from_u64(seed);
        insert_rng.set_stream(11);
        Self {
            queue: VecDeque::new(),
            live: vec![true; n_samples],
            waiting: Vec::new(),
            shuffle_rng,
            insert_rng,
        }
    }

    pub fn live_count(&self) -> usize {
        self.live.iter().filter(|&&l| l).count()
    }

    /// Next sample index and whether it was reinserted, or `None` once no
    /// live sample is left.
    pub fn next(&mut self) -> Option<(usize, bool)> {
        if self.queue.is_empty() {
            self.waiting.clear();
            let mut order: Vec<usize> = (0..self.live.len()).filter(|&i| self.live[i]).collect();
            if order.is_empty() {
                return None;
            }
            order.shuffle(&mut self.shuffle_rng);
            self.queue.extend(order.into_iter().map(|i| (i, false)));
        }
        self.queue.pop_front()
    }

    /// Handles a rejected sample under the given mode and quota.
    pub fn reject(&mut self, index: usize, quota: &mut u32, mode: ReinsertionMode) {
        if *quota == 0 {
            self.live[index] = false;
            return;
        }
        *quota -= 1;
        match mode {
            ReinsertionMode::Immediate => {
                let at = self.insert_rng.random_range(0..=self.queue.len());
                self.queue.insert(at, (index, true));
            }
            ReinsertionMode::Lazy => self.waiting.push(index),
        }
    }
}

/// Initial model: Gaussian parameters with standard deviation `init_scale`.
pub fn initial_model(dataset: &PreferenceDataset, config: &TrainConfig) -> Result<RewardFunction> {
    let (dx, dy) = match (dataset.prompt_dim(), dataset.response_dim()) {
        (Some(dx), Some(dy)) => (dx, dy),
        _ => return Err(Error::Dataset("training needs a non-empty dataset".into())),
    };
    let layout = FeatureLayout::new(dx, dy, config.length);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(12);
    let params = (0..layout.num_params())
        .map(|_| config.init_scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    RewardFunction::new(layout, params, config.r_min, config.r_max)
}

fn sgd_step(
    state: &mut TrainerState,
    batch: &[&PreferenceSample],
    learning_rate: f64,
) -> Result<(f64, f64)> {
    let (loss, grad) = bt_loss_and_gradient(&state.model, batch)?;
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    for (p, g) in state.model.params.iter_mut().zip(&grad) {
        *p -= learning_rate * g;
    }
    Ok((loss, norm))
}

/// One vanilla step: the next `k` samples of the cursor.
pub fn vanilla_step(
    state: &mut TrainerState,
    cursor: &mut Cursor,
    dataset: &PreferenceDataset,
    config: &TrainConfig,
) -> Result<bool> {
    let mut batch = Vec::with_capacity(config.batch_size);
    while batch.len() < config.batch_size {
        match cursor.next() {
            Some((i, _)) => batch.push(i),
            None => {
                state.exhausted = true;
                return Ok(false);
            }
        }
    }
    let samples: Vec<&PreferenceSample> = batch.iter().map(|&i| &dataset.samples()[i]).collect();
    let (loss, grad_norm) = sgd_step(state, &samples, config.learning_rate)?;
    state.step += 1;
    state.log.push(StepRecord {
        step: state.step,
        accepted: samples.iter().map(|s| s.id).collect(),
        rejected: Vec::new(),
        lambda: None,
        lambda_hat: None,
        loss,
        grad_norm,
    });
    state.trajectory.push(state.model.params.clone());
    Ok(true)
}

/// One prioritized step. Returns `false` when the cursor ran out of live
/// samples before any sample was accepted; a partial batch is still used.
pub fn prioritized_step<S: WeightingSource + ?Sized>(
    state: &mut TrainerState,
    cursor: &mut Cursor,
    dataset: &PreferenceDataset,
    source: &S,
    config: &TrainConfig,
) -> Result<bool> {
    let threshold = config.lambda_override.unwrap_or(state.lambda);
    let step = state.step + 1;
    let mut accepted = Vec::with_capacity(config.batch_size);
    let mut rejected = Vec::new();
    let mut drawn_gaps = Vec::new();
    while accepted.len() < config.batch_size {
        let Some((i, reinserted)) = cursor.next() else {
            state.exhausted = true;
            break;
        };
        let s = &dataset.samples()[i];
        let free =
            decompose_pair(&state.model, s, &source.weighting(s)?, &config.search)?.prompt_free_gap;
        drawn_gaps.push(free);
        let ok = free < threshold;
        state.audit.push(Draw {
            step,
            sample_id: s.id,
            prompt_free_gap: free,
            threshold,
            accepted: ok,
            reinserted,
        });
        if ok {
            accepted.push(i);
        } else {
            rejected.push(s.id);
            cursor.reject(i, &mut state.quota[i], config.reinsertion_mode);
        }
    }
    if accepted.is_empty() {
        return Ok(false);
    }
    let samples: Vec<&PreferenceSample> = accepted.iter().map(|&i| &dataset.samples()[i]).collect();
    let (loss, grad_norm) = sgd_step(state, &samples, config.learning_rate)?;
    let lambda_hat = kmeans_1d_boundary(&drawn_gaps).ok();
    if config.lambda_override.is_none() {
        if let Some(b) = lambda_hat {
            state.lambda = ema_update(state.lambda, b, config.ema_alpha);
        }
    }
    state.step = step;
    state.log.push(StepRecord {
        step,
        accepted: samples.iter().map(|s| s.id).collect(),
        rejected,
        lambda: Some(threshold),
        lambda_hat,
        loss,
        grad_norm,
    });
    state.trajectory.push(state.model.params.clone());
    Ok(!state.exhausted)
}

fn train(
    dataset: &PreferenceDataset,
    config: &TrainConfig,
    mode: TrainMode,
) -> Result<TrainerState> {
    config.validate()?;
    let model = initial_model(dataset, config)?;
    let cache = WeightingCache::build(dataset, config.scheme)?;
    let mut state = TrainerState::new(model, dataset.len(), config.reinsertion_quota);
    let mut cursor = Cursor::new(dataset.len(), config.seed);
    let indices = snapshot_indices(
        dataset.len(),
        config.snapshot_size.min(dataset.len()),
        config.seed,
    )?;
    let snapshot_steps = config.snapshot_steps();
    let take_snapshot = |state: &mut TrainerState| -> Result<()> {
        let quadrant = quadrant_snapshot_with(
            &state.model,
            dataset,
            &cache,
            &indices,
            state.step,
            &config.search,
        )?;
        state.snapshots.push(Snapshot {
            quadrant,
            model: state.model.clone(),
        });
        Ok(())
    };
    if config.steps == 0 {
        take_snapshot(&mut state)?;
        return Ok(state);
    }
    while state.step < config.steps {
        let progressed = match mode {
            TrainMode::Vanilla => vanilla_step(&mut state, &mut cursor, dataset, config)?,
            TrainMode::Prioritized => {
                prioritized_step(&mut state, &mut cursor, dataset, &cache, config)?
            }
        };
        if snapshot_steps.contains(&state.step)
            && state.snapshots.last().map(|s| s.quadrant.step) != Some(state.step)
        {
            take_snapshot(&mut state)?;
        }
        if !progressed {
            break;
        }
    }
    // stopped early: the remaining snapshots show the final model
    while state.snapshots.len() < snapshot_steps.len() {
        take_snapshot(&mut state)?;
    }
    Ok(state)
}

/// Plain SGD on uniformly shuffled batches for `config.steps` steps.
pub fn vanilla_train(dataset: &PreferenceDataset, config: &TrainConfig) -> Result<TrainerState> {
    train(dataset, config, TrainMode::Vanilla)
}

/// SGD on batches of samples whose prompt-free gap is below the threshold.
pub fn prioritized_train(
    dataset: &PreferenceDataset,
    config: &TrainConfig,
) -> Result<TrainerState> {
    train(dataset, config, TrainMode::Prioritized)
}

pub fn run(
    dataset: &PreferenceDataset,
    config: &TrainConfig,
    mode: TrainMode,
) -> Result<TrainerState> {
    train(dataset, config, mode)
}

fn join_ids(ids: &[SampleId]) -> String {
    ids.iter()
        .map(|i| i.0.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Serialize)]
struct StepRow {
    step: usize,
    accepted_ids: String,
    rejected_ids: String,
    lambda: Option<f64>,
    lambda_hat: Option<f64>,
    loss: f64,
    grad_norm: f64,
}

/// Columns `step,accepted_ids,rejected_ids,lambda,lambda_hat,loss,grad_norm`;
/// id lists are space separated and thresholds empty for vanilla steps.
pub fn write_step_log<W: Write>(log: &[StepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in log {
        w.serialize(StepRow {
            step: r.step,
            accepted_ids: join_ids(&r.accepted),
            rejected_ids: join_ids(&r.rejected),
            lambda: r.lambda,
            lambda_hat: r.lambda_hat,
            loss: r.loss,
            grad_norm: r.grad_norm,
        })
        .map_err(|e| Error::Parse(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn loss_values() {
        assert!((bt_loss(0.0) - std::f64::consts::LN_2).abs() < 1e-16);
        assert!((bt_loss(3f64.ln()) - (4.0f64 / 3.0).ln()).abs() < 1e-15);
        assert!((bt_loss(-40.0) - 40.0).abs() < 1e-15);
        assert!(bt_loss(800.0) == 0.0 || bt_loss(800.0) < 1e-300);
        assert!(bt_loss(-800.0).is_finite());
    }

    #[test]
    fn kmeans_examples() {
        assert_eq!(kmeans_1d_boundary(&[0.0, 0.0, 10.0, 10.0]).unwrap(), 5.0);
        assert_eq!(kmeans_1d_boundary(&[1.0, 2.0, 3.0, 100.0]).unwrap(), 51.0);
        assert!(matches!(
            kmeans_1d_boundary(&[2.0, 2.0]),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(kmeans_1d_boundary(&[]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn ema_examples() {
        assert!((ema_update(0.0, 1.0, 0.9) - 0.1).abs() < 1e-16);
        assert_eq!(ema_update(2.5, 2.5, 0.9), 2.5);
        let mut l = 0.0;
        for _ in 0..5 {
            l = ema_update(l, 3.0, 0.9);
        }
        assert!((l - 3.0 * 0.40951).abs() < 1e-12);
    }

    #[test]
    fn snapshot_steps_are_equally_spaced() {
        let c = |steps| TrainConfig {
            steps,
            ..TrainConfig::default()
        };
        assert_eq!(c(100).snapshot_steps(), vec![25, 50, 75, 100]);
        assert_eq!(c(10).snapshot_steps(), vec![3, 5, 8, 10]);
        assert_eq!(c(2).snapshot_steps(), vec![1, 2]);
    }

    #[test]
    fn immediate_cursor_drops_after_quota() {
        let mut c = Cursor::new(2, 0);
        let mut quota = 1;
        let (i, re) = c.next().unwrap();
        assert!(!re);
        c.reject(i, &mut quota, ReinsertionMode::Immediate);
        assert_eq!(quota, 0);
        let mut saw_reinsert = false;
        while let Some((j, re)) = c.queue.pop_front() {
            saw_reinsert |= j == i && re;
        }
        assert!(saw_reinsert);
        c.reject(i, &mut quota, ReinsertionMode::Immediate);
        assert_eq!(c.live_count(), 1);
    }

    proptest! {
        #[test]
        fn kmeans_ignores_order(mut v in proptest::collection::vec(-50.0f64..50.0, 2..40), seed in 0u64..1000) {
            prop_assume!(v.iter().any(|&x| x != v[0]));
            let a = kmeans_1d_boundary(&v).unwrap();
            v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(a, kmeans_1d_boundary(&v).unwrap());
            let (lo, hi) = v.iter().fold((f64::MAX, f64::MIN), |(l, h), &x| (l.min(x), h.max(x)));
            prop_assert!(lo <= a && a <= hi);
        }

        #[test]
        fn loss_is_strictly_decreasing(a in -30.0f64..30.0, d in 1e-3f64..5.0) {
            prop_assert!(bt_loss(a + d) < bt_loss(a));
        }
    }
}
