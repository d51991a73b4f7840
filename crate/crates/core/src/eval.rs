//! Diagnostics: quadrant snapshots of decomposed gaps, prompt-replacement
//! gaps and preference accuracies, plus their CSV/JSON exports.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditional::{OnDemand, SchemeParams, WeightingSource};
use crate::decompose::{decompose_batch, SearchConfig};
use crate::error::{Error, Result};
use crate::reward::RewardModel;
use crate::types::{Group, PreferenceDataset, PreferenceSample, SampleId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadrantRecord {
    pub sample_id: SampleId,
    pub dr1: f64,
    pub dr2: f64,
    pub total: f64,
    pub group: Group,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrantSnapshot {
    pub step: usize,
    pub records: Vec<QuadrantRecord>,
}

impl QuadrantSnapshot {
    pub fn mean_dr2(&self) -> f64 {
        mean(self.records.iter().map(|r| r.dr2))
    }

    pub fn group_mean_dr2(&self, group: Group) -> Option<f64> {
        let v: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.group == group)
            .map(|r| r.dr2)
            .collect();
        (!v.is_empty()).then(|| mean(v.into_iter()))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Indices of `n` samples drawn uniformly without replacement, in dataset
/// order.
pub fn snapshot_indices(len: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n > len {
        return Err(Error::Config(format!(
            "snapshot of {n} samples requested from a dataset of {len}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(6);
    let mut idx = index::sample(&mut rng, len, n).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Decomposes the samples at `indices` with weightings from `source`.
pub fn quadrant_snapshot_with<M, S>(
    model: &M,
    dataset: &PreferenceDataset,
    source: &S,
    indices: &[usize],
    step: usize,
    search: &SearchConfig,
) -> Result<QuadrantSnapshot>
where
    M: RewardModel + ?Sized,
    S: WeightingSource + ?Sized,
{
    let samples: Vec<PreferenceSample> = indices
        .iter()
        .map(|&i| dataset.samples()[i].clone())
        .collect();
    let gaps = decompose_batch(model, &samples, source, search)?;
    let records = samples
        .iter()
        .zip(gaps)
        .map(|(s, g)| QuadrantRecord {
            sample_id: s.id,
            dr1: g.prompt_related_gap,
            dr2: g.prompt_free_gap,
            total: g.total_gap,
            group: s.group,
        })
        .collect();
    Ok(QuadrantSnapshot { step, records })
}

/// `n` uniformly drawn samples with their decomposed gaps.
pub fn quadrant_snapshot<M: RewardModel + ?Sized>(
    model: &M,
    dataset: &PreferenceDataset,
    params: &SchemeParams,
    n: usize,
    seed: u64,
) -> Result<QuadrantSnapshot> {
    params.validate()?;
    let indices = snapshot_indices(dataset.len(), n, seed)?;
    let source = OnDemand {
        dataset,
        params: *params,
    };
    quadrant_snapshot_with(
        model,
        dataset,
        &source,
        &indices,
        0,
        &SearchConfig::default(),
    )
}

/// Reward gap of one sample under its own prompt and under replacements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplacementGap {
    pub sample_id: SampleId,
    pub original_gap: f64,
    pub replaced_mean: Option<f64>,
    pub replaced_std: Option<f64>,
    pub n_replacements: usize,
}

/// Gap with the sample's own prompt and with `n_replacements` other prompts
/// drawn without replacement from the pool (fewer if the pool is smaller).
/// The standard deviation is the population one.
pub fn prompt_replacement_gaps<M: RewardModel + ?Sized>(
    model: &M,
    dataset: &PreferenceDataset,
    n_replacements: usize,
    seed: u64,
) -> Result<Vec<ReplacementGap>> {
    let pool = dataset.prompt_pool();
    if pool.len() < 2 {
        return Err(Error::Config(
            "prompt replacement needs at least two prompts".into(),
        ));
    }
    dataset
        .samples()
        .par_iter()
        .map(|s| {
            let original_gap = model.reward_gap(&s.prompt, &s.chosen, &s.rejected)?;
            let others: Vec<usize> = (0..pool.len())
                .filter(|&i| pool[i].prompt.id != s.prompt.id)
                .collect();
            let n = n_replacements.min(others.len());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s.id.0 as u64);
            let gaps = index::sample(&mut rng, others.len(), n)
                .into_iter()
                .map(|i| model.reward_gap(&pool[others[i]].prompt, &s.chosen, &s.rejected))
                .collect::<Result<Vec<f64>>>()?;
            let (replaced_mean, replaced_std) = if gaps.is_empty() {
                (None, None)
            } else {
                // shifted by the first value so identical gaps stay exact
                let g0 = gaps[0];
                let m = g0 + mean(gaps.iter().map(|g| g - g0));
                let var = mean(gaps.iter().map(|g| (g - m) * (g - m)));
                (Some(m), Some(var.sqrt()))
            };
            Ok(ReplacementGap {
                sample_id: s.id,
                original_gap,
                replaced_mean,
                replaced_std,
                n_replacements: n,
            })
        })
        .collect()
}

fn score(gap: f64) -> f64 {
    if gap > 0.0 {
        1.0
    } else if gap == 0.0 {
        0.5
    } else {
        0.0
    }
}

fn sample_scores<M: RewardModel + ?Sized>(
    model: &M,
    dataset: &PreferenceDataset,
) -> Result<Vec<(Group, f64)>> {
    if dataset.is_empty() {
        return Err(Error::Dataset("accuracy of an empty dataset".into()));
    }
    dataset
        .samples()
        .par_iter()
        .map(|s| {
            Ok((
                s.group,
                score(model.reward_gap(&s.prompt, &s.chosen, &s.rejected)?),
            ))
        })
        .collect()
}

/// Fraction of samples whose chosen response gets the higher reward; ties
/// count one half.
pub fn heldout_accuracy<M: RewardModel + ?Sized>(
    model: &M,
    dataset: &PreferenceDataset,
) -> Result<f64> {
    let scores = sample_scores(model, dataset)?;
    Ok(mean(scores.into_iter().map(|(_, s)| s)))
}

/// [`heldout_accuracy`] restricted to each group present.
pub fn group_accuracy<M: RewardModel + ?Sized>(
    model: &M,
    dataset: &PreferenceDataset,
) -> Result<BTreeMap<Group, f64>> {
    let mut acc: BTreeMap<Group, (f64, usize)> = BTreeMap::new();
    for (g, s) in sample_scores(model, dataset)? {
        let e = acc.entry(g).or_default();
        e.0 += s;
        e.1 += 1;
    }
    Ok(acc
        .into_iter()
        .map(|(g, (s, n))| (g, s / n as f64))
        .collect())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse(format!("csv: {e}"))
}

#[derive(Serialize)]
struct QuadrantRow {
    step: usize,
    sample_id: u32,
    dr1: f64,
    dr2: f64,
    group: &'static str,
}

/// Columns `step,sample_id,dr1,dr2,group`.
pub fn write_quadrant_csv<W: Write>(snapshot: &QuadrantSnapshot, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in &snapshot.records {
        w.serialize(QuadrantRow {
            step: snapshot.step,
            sample_id: r.sample_id.0,
            dr1: r.dr1,
            dr2: r.dr2,
            group: r.group.as_str(),
        })
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))
}

#[derive(Serialize)]
struct ReplacementRow {
    sample_id: u32,
    original_gap: f64,
    replaced_mean: Option<f64>,
    replaced_std: Option<f64>,
    n_replacements: usize,
}

/// Columns `sample_id,original_gap,replaced_mean,replaced_std,n_replacements`;
/// the replaced statistics are empty when there were no replacements.
pub fn write_replacement_csv<W: Write>(gaps: &[ReplacementGap], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for g in gaps {
        w.serialize(ReplacementRow {
            sample_id: g.sample_id.0,
            original_gap: g.original_gap,
            replaced_mean: g.replaced_mean,
            replaced_std: g.replaced_std,
            n_replacements: g.n_replacements,
        })
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metrics {
    pub accuracy: f64,
    pub group_accuracy: BTreeMap<Group, f64>,
    pub n_samples: usize,
    pub mean_original_gap: f64,
    pub mean_replaced_gap: Option<f64>,
    pub mean_replaced_std: Option<f64>,
}

impl Metrics {
    pub fn compute<M: RewardModel + ?Sized>(
        model: &M,
        dataset: &PreferenceDataset,
        replacements: &[ReplacementGap],
    ) -> Result<Self> {
        let opt_mean = |f: fn(&ReplacementGap) -> Option<f64>| {
            let v: Vec<f64> = replacements.iter().filter_map(f).collect();
            (!v.is_empty()).then(|| mean(v.into_iter()))
        };
        Ok(Self {
            accuracy: heldout_accuracy(model, dataset)?,
            group_accuracy: group_accuracy(model, dataset)?,
            n_samples: dataset.len(),
            mean_original_gap: mean(replacements.iter().map(|r| r.original_gap)),
            mean_replaced_gap: opt_mean(|r| r.replaced_mean),
            mean_replaced_std: opt_mean(|r| r.replaced_std),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}
