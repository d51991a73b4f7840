//! Exact entropies and mutual information of the preference-label variables
//! on small, fully enumerable datasets.
//!
//! A context is a `(prompt, response pair)` with probability
//! `P(x, y₁, y₂) ∝ P(x) P(y₁|x) P(y₂|x)`. Each label variable is a Bernoulli
//! whose parameter depends on the context:
//!
//! * `Z`  uses `σ(Δr₁)`, the prompt-related gap,
//! * `Z̃`  uses `σ(Δr₂)`, the prompt-free gap,
//! * `W`  uses `σ(Δr_θ)`, the full gap,
//! * `W̃`  uses `Σ_x P(x | y₁, y₂) σ(Δr_θ(x, y₁, y₂))`, constant per pair.
//!
//! Given the context, draws of different variables are independent, so
//! `Pr[A = 1, B = 1] = Σ P(ctx) p_A(ctx) p_B(ctx)`. Entropies are in nats.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::conditional::{exact_bayes_weights, PromptWeighting};
use crate::decompose::{solve_from_gaps, CandidateGaps, SearchConfig};
use crate::error::{Error, Result};
use crate::reward::{sigmoid, RewardModel, TabularReward};
use crate::types::{
    GenerationModel, Group, PreferenceDataset, PreferenceSample, PromptFeatures, PromptId,
    ResponseFeatures, ResponseId, SampleId, WeightedPrompt,
};

/// Largest number of contexts an enumeration may have.
pub const MAX_CONTEXTS: usize = 64;

/// Round-off allowance below zero before a negative MI is an error.
pub const MI_CLAMP: f64 = 1e-12;

/// Gap standing in for `+∞` in the ill-formed solution.
pub const SATURATED_GAP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    Z,
    Ztilde,
    W,
    Wtilde,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Context {
    pub prompt: usize,
    pub pair: usize,
    pub prob: f64,
}

/// Every context of an enumerable dataset together with the exact
/// conditional weighting `P(x | y₁, y₂)` of each pair.
#[derive(Debug, Clone)]
pub struct ContextSpace {
    pub prompts: Vec<PromptFeatures>,
    pub pairs: Vec<(ResponseFeatures, ResponseFeatures)>,
    pub contexts: Vec<Context>,
    pair_probs: Vec<f64>,
    pair_weightings: Vec<PromptWeighting>,
}

impl ContextSpace {
    /// Enumerates the distinct ordered `(chosen, rejected)` pairs of the
    /// dataset's samples, in order of first appearance, crossed with every
    /// prompt that can generate both responses.
    pub fn enumerate(dataset: &PreferenceDataset) -> Result<Self> {
        let gm = dataset.generation_model().ok_or_else(|| {
            Error::Unsupported("enumeration needs a generation model P(y|x)".into())
        })?;
        let mut seen = HashMap::new();
        let mut pairs = Vec::new();
        for s in dataset.samples() {
            let key = (s.chosen.id, s.rejected.id);
            if !seen.contains_key(&key) {
                seen.insert(key, pairs.len());
                pairs.push((s.chosen.clone(), s.rejected.clone()));
            }
        }
        if pairs.is_empty() {
            return Err(Error::Unsupported(
                "dataset has no pairs to enumerate".into(),
            ));
        }
        let prompts: Vec<PromptFeatures> = dataset
            .prompt_pool()
            .iter()
            .map(|wp| wp.prompt.clone())
            .collect();

        let mut contexts = Vec::new();
        for (j, (y1, y2)) in pairs.iter().enumerate() {
            for (i, wp) in dataset.prompt_pool().iter().enumerate() {
                if let (Some(a), Some(b)) =
                    (gm.prob(wp.prompt.id, y1.id), gm.prob(wp.prompt.id, y2.id))
                {
                    let mass = wp.weight * a * b;
                    if mass > 0.0 {
                        contexts.push(Context {
                            prompt: i,
                            pair: j,
                            prob: mass,
                        });
                    }
                }
            }
        }
        if contexts.len() > MAX_CONTEXTS {
            return Err(Error::Unsupported(format!(
                "{} contexts exceed the enumeration ceiling of {MAX_CONTEXTS}",
                contexts.len()
            )));
        }
        let total: f64 = contexts.iter().map(|c| c.prob).sum();
        let mut pair_probs = vec![0.0; pairs.len()];
        for c in &mut contexts {
            c.prob /= total;
            pair_probs[c.pair] += c.prob;
        }
        if let Some(j) = pair_probs.iter().position(|&p| p == 0.0) {
            return Err(Error::Unsupported(format!(
                "pair ({}, {}) has zero probability under every prompt",
                pairs[j].0.id, pairs[j].1.id
            )));
        }
        let pair_weightings = pairs
            .iter()
            .map(|(y1, y2)| exact_bayes_weights(dataset, y1.id, y2.id))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            prompts,
            pairs,
            contexts,
            pair_probs,
            pair_weightings,
        })
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn pair_prob(&self, pair: usize) -> f64 {
        self.pair_probs[pair]
    }

    /// `P(x | y₁, y₂)` for one pair.
    pub fn pair_weighting(&self, pair: usize) -> &PromptWeighting {
        &self.pair_weightings[pair]
    }

    /// `Δr_θ` at every context.
    pub fn gap_table<M: RewardModel + ?Sized>(&self, model: &M) -> Result<Vec<f64>> {
        self.contexts
            .iter()
            .map(|c| {
                let (y1, y2) = &self.pairs[c.pair];
                model.reward_gap(&self.prompts[c.prompt], y1, y2)
            })
            .collect()
    }

    /// Gap table that depends on the pair only.
    pub fn pair_table(&self, per_pair: &[f64]) -> Result<Vec<f64>> {
        if per_pair.len() != self.pairs.len() {
            return Err(Error::Dimension {
                what: "per-pair gap table",
                expected: self.pairs.len(),
                got: per_pair.len(),
            });
        }
        Ok(self.contexts.iter().map(|c| per_pair[c.pair]).collect())
    }

    /// Whether a context table is constant across the prompts of each pair.
    pub fn is_response_only(&self, table: &[f64]) -> bool {
        let mut first: Vec<Option<f64>> = vec![None; self.pairs.len()];
        for (c, &v) in self.contexts.iter().zip(table) {
            match first[c.pair] {
                None => first[c.pair] = Some(v),
                Some(u) if u != v => return false,
                Some(_) => {}
            }
        }
        true
    }

    fn check_table(&self, what: &'static str, table: &[f64]) -> Result<()> {
        if table.len() != self.len() {
            return Err(Error::Dimension {
                what,
                expected: self.len(),
                got: table.len(),
            });
        }
        Ok(())
    }
}

/// A Bernoulli variable indexed by context.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliTable {
    pub contexts: Vec<(usize, usize)>,
    pub context_probs: Vec<f64>,
    pub success_prob: Vec<f64>,
    pub kind: VariableKind,
}

impl BernoulliTable {
    pub fn new(
        contexts: Vec<(usize, usize)>,
        context_probs: Vec<f64>,
        success_prob: Vec<f64>,
        kind: VariableKind,
    ) -> Result<Self> {
        if context_probs.len() != contexts.len() || success_prob.len() != contexts.len() {
            return Err(Error::Dimension {
                what: "bernoulli table",
                expected: contexts.len(),
                got: context_probs.len().min(success_prob.len()),
            });
        }
        let total: f64 = context_probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 || context_probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::Dataset(format!(
                "context probabilities sum to {total}"
            )));
        }
        if success_prob.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Dataset("success probability outside [0, 1]".into()));
        }
        Ok(Self {
            contexts,
            context_probs,
            success_prob,
            kind,
        })
    }

    fn from_space(space: &ContextSpace, success_prob: Vec<f64>, kind: VariableKind) -> Self {
        Self {
            contexts: space.contexts.iter().map(|c| (c.prompt, c.pair)).collect(),
            context_probs: space.contexts.iter().map(|c| c.prob).collect(),
            success_prob,
            kind,
        }
    }
}

/// The four label variables over one context space.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTables {
    pub z: BernoulliTable,
    pub z_tilde: BernoulliTable,
    pub w: BernoulliTable,
    pub w_tilde: BernoulliTable,
}

/// Builds `Z`, `Z̃`, `W`, `W̃` from per-context gap tables for the
/// prompt-related and prompt-free parts and the full model.
pub fn build_tables<M: RewardModel + ?Sized>(
    space: &ContextSpace,
    related: &[f64],
    free: &[f64],
    model: &M,
) -> Result<LabelTables> {
    space.check_table("prompt-related gap table", related)?;
    space.check_table("prompt-free gap table", free)?;
    let total = space.gap_table(model)?;
    let w_probs: Vec<f64> = total.iter().map(|&g| sigmoid(g)).collect();

    // expectation of σ(Δr_θ) under P(x | pair), from the context masses
    let mut pair_mean = vec![0.0; space.pairs.len()];
    for (c, &p) in space.contexts.iter().zip(&w_probs) {
        pair_mean[c.pair] += c.prob * p;
    }
    for (j, m) in pair_mean.iter_mut().enumerate() {
        *m = (*m / space.pair_prob(j)).clamp(0.0, 1.0);
    }
    let w_tilde_probs = space.contexts.iter().map(|c| pair_mean[c.pair]).collect();

    let squash = |t: &[f64]| t.iter().map(|&g| sigmoid(g)).collect::<Vec<_>>();
    Ok(LabelTables {
        z: BernoulliTable::from_space(space, squash(related), VariableKind::Z),
        z_tilde: BernoulliTable::from_space(space, squash(free), VariableKind::Ztilde),
        w: BernoulliTable::from_space(space, w_probs, VariableKind::W),
        w_tilde: BernoulliTable::from_space(space, w_tilde_probs, VariableKind::Wtilde),
    })
}

/// `Pr[A = 1]`.
pub fn marginal_prob_one(table: &BernoulliTable) -> f64 {
    table
        .context_probs
        .iter()
        .zip(&table.success_prob)
        .map(|(c, p)| c * p)
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// `[[Pr[0,0], Pr[0,1]], [Pr[1,0], Pr[1,1]]]`, rows indexed by `A`.
pub fn joint_prob(a: &BernoulliTable, b: &BernoulliTable) -> Result<[[f64; 2]; 2]> {
    if a.contexts != b.contexts || a.context_probs != b.context_probs {
        return Err(Error::Consistency(
            "joint probability needs tables over the same contexts".into(),
        ));
    }
    let mut m = [[0.0; 2]; 2];
    for ((c, pa), pb) in a
        .context_probs
        .iter()
        .zip(&a.success_prob)
        .zip(&b.success_prob)
    {
        m[1][1] += c * pa * pb;
        m[1][0] += c * pa * (1.0 - pb);
        m[0][1] += c * (1.0 - pa) * pb;
        m[0][0] += c * (1.0 - pa) * (1.0 - pb);
    }
    Ok(m)
}

fn plogp(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        p * p.ln()
    }
}

/// Binary entropy of `Ber(p)` in nats.
pub fn entropy(p: f64) -> f64 {
    let q = 1.0 - p;
    // ln(1 - q) through ln_1p keeps precision when p is within ulps of 1
    let a = if p <= 0.0 { 0.0 } else { p * (-q).ln_1p() };
    -(a + plogp(q))
}

pub fn joint_entropy(m: &[[f64; 2]; 2]) -> f64 {
    -m.iter().flatten().map(|&p| plogp(p)).sum::<f64>()
}

fn clamp_mi(mi: f64) -> Result<f64> {
    if mi >= 0.0 {
        Ok(mi)
    } else if mi >= -MI_CLAMP {
        Ok(0.0)
    } else {
        Err(Error::Consistency(format!(
            "mutual information {mi} is negative"
        )))
    }
}

/// `MI(A‖B) = H(A) + H(B) − H(A, B)`.
pub fn mutual_information(a: &BernoulliTable, b: &BernoulliTable) -> Result<f64> {
    let m = joint_prob(a, b)?;
    let pa = m[1][0] + m[1][1];
    let pb = m[0][1] + m[1][1];
    clamp_mi(entropy(pa) + entropy(pb) - joint_entropy(&m))
}

/// `|MI(Z̃‖W̃) − MI(Z̃‖W)|` without checking that `free` is response only.
pub fn marginalization_mi_gap<M: RewardModel + ?Sized>(
    space: &ContextSpace,
    model: &M,
    free: &[f64],
) -> Result<f64> {
    space.check_table("prompt-free gap table", free)?;
    let total = space.gap_table(model)?;
    let related: Vec<f64> = total.iter().zip(free).map(|(t, f)| t - f).collect();
    let t = build_tables(space, &related, free, model)?;
    Ok((mutual_information(&t.z_tilde, &t.w_tilde)? - mutual_information(&t.z_tilde, &t.w)?).abs())
}

/// Checks that a response-only prompt-free gap carries the same information
/// about `W̃` as about `W`. Returns the absolute MI difference.
pub fn verify_marginalization_invariance<M: RewardModel + ?Sized>(
    space: &ContextSpace,
    model: &M,
    free: &[f64],
) -> Result<f64> {
    space.check_table("prompt-free gap table", free)?;
    if !space.is_response_only(free) {
        return Err(Error::Config(
            "prompt-free gap table varies across prompts of a pair".into(),
        ));
    }
    marginalization_mi_gap(space, model, free)
}

/// Information measures of a candidate decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub mi_z_wtilde: f64,
    pub mi_ztilde_w: f64,
    pub mi_z_w: f64,
    pub pr_z_one: f64,
    pub h_z: f64,
    pub h_ztilde: f64,
    pub h_w: f64,
    pub h_wtilde: f64,
}

impl DecompositionReport {
    /// Optimality checks for the Φ decomposition at tolerance `tol`.
    pub fn is_optimal(&self, tol: f64) -> bool {
        self.mi_z_wtilde <= tol
            && (self.pr_z_one - 0.5).abs() <= tol
            && (self.h_z - std::f64::consts::LN_2).abs() <= tol
    }
}

/// Report for an arbitrary per-context prompt-free gap table; the
/// prompt-related part is the residual.
pub fn decomposition_report<M: RewardModel + ?Sized>(
    space: &ContextSpace,
    model: &M,
    free: &[f64],
) -> Result<DecompositionReport> {
    space.check_table("prompt-free gap table", free)?;
    let total = space.gap_table(model)?;
    let related: Vec<f64> = total.iter().zip(free).map(|(t, f)| t - f).collect();
    report_from_tables(&build_tables(space, &related, free, model)?)
}

fn report_from_tables(t: &LabelTables) -> Result<DecompositionReport> {
    Ok(DecompositionReport {
        mi_z_wtilde: mutual_information(&t.z, &t.w_tilde)?,
        mi_ztilde_w: mutual_information(&t.z_tilde, &t.w)?,
        mi_z_w: mutual_information(&t.z, &t.w)?,
        pr_z_one: marginal_prob_one(&t.z),
        h_z: entropy(marginal_prob_one(&t.z)),
        h_ztilde: entropy(marginal_prob_one(&t.z_tilde)),
        h_w: entropy(marginal_prob_one(&t.w)),
        h_wtilde: entropy(marginal_prob_one(&t.w_tilde)),
    })
}

/// Prompt-free gap of every pair by bisection on Φ with exact weights.
pub fn exact_prompt_free_gaps<M: RewardModel + ?Sized>(
    space: &ContextSpace,
    model: &M,
    config: &SearchConfig,
) -> Result<Vec<f64>> {
    space
        .pairs
        .iter()
        .enumerate()
        .map(|(j, (y1, y2))| {
            let gaps = CandidateGaps::gather(model, y1, y2, space.pair_weighting(j))?;
            solve_from_gaps(&gaps, model.bounds(), config)
        })
        .collect()
}

/// Report for the Φ decomposition with exact conditional weights.
pub fn phi_split_report<M: RewardModel + ?Sized>(
    space: &ContextSpace,
    model: &M,
    config: &SearchConfig,
) -> Result<DecompositionReport> {
    let per_pair = exact_prompt_free_gaps(space, model, config)?;
    decomposition_report(space, model, &space.pair_table(&per_pair)?)
}

/// Report for the degenerate split `Δr₁ ≡ +∞`, with `+∞` replaced by
/// [`SATURATED_GAP`].
pub fn ill_formed_report<M: RewardModel + ?Sized>(
    space: &ContextSpace,
    model: &M,
) -> Result<DecompositionReport> {
    let total = space.gap_table(model)?;
    let free: Vec<f64> = total.iter().map(|t| t - SATURATED_GAP).collect();
    let related = vec![SATURATED_GAP; space.len()];
    report_from_tables(&build_tables(space, &related, &free, model)?)
}

/// Outcome of the prompt-marginalization counterexample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalizationCase {
    /// `E_{x ~ P(X|y₁)} r(x, y₁)`.
    pub expected_reward_first: f64,
    /// `E_{x ~ P(X|y₂)} r(x, y₂)`.
    pub expected_reward_second: f64,
    /// Φ-based prompt-free gap `Δr₂*(y₁, y₂)`.
    pub prompt_free_gap: f64,
}

/// Two prompts with masses `minority` and `1 − minority`, both generating
/// `y₁` and `y₂` with equal probability. Under the minority prompt
/// `r(y₁) = 10⁶, r(y₂) = 0`; otherwise `r(y₁) = 0, r(y₂) = 1`.
pub fn marginalization_counterexample(
    minority: f64,
    config: &SearchConfig,
) -> Result<MarginalizationCase> {
    if !(minority > 0.0 && minority < 1.0) {
        return Err(Error::Config(format!(
            "minority mass must lie in (0, 1), got {minority}"
        )));
    }
    let big = 1e6;
    let prompts = [
        PromptFeatures::new(PromptId(0), vec![]),
        PromptFeatures::new(PromptId(1), vec![]),
    ];
    let y1 = ResponseFeatures::new(ResponseId(1), vec![], 1);
    let y2 = ResponseFeatures::new(ResponseId(2), vec![], 1);
    let mut gm = GenerationModel::new();
    for x in &prompts {
        gm.insert(x.id, y1.id, 0.5);
        gm.insert(x.id, y2.id, 0.5);
    }
    let pool = vec![
        WeightedPrompt {
            prompt: prompts[0].clone(),
            weight: minority,
        },
        WeightedPrompt {
            prompt: prompts[1].clone(),
            weight: 1.0 - minority,
        },
    ];
    let sample = PreferenceSample {
        id: SampleId(0),
        prompt: prompts[1].clone(),
        chosen: y1.clone(),
        rejected: y2.clone(),
        group: Group::Plain,
        reinsertion_quota: 0,
    };
    let dataset = PreferenceDataset::new(vec![sample], pool, Some(gm))?;

    let mut model = TabularReward::new(0.0, big)?;
    model.set(prompts[0].id, y1.id, big)?;
    model.set(prompts[0].id, y2.id, 0.0)?;
    model.set(prompts[1].id, y1.id, 0.0)?;
    model.set(prompts[1].id, y2.id, 1.0)?;

    // P(x | y) ∝ P(x) P(y|x); the generation model is prompt-independent here
    let expected = |y: &ResponseFeatures| -> Result<f64> {
        let mut num = 0.0;
        let mut den = 0.0;
        for wp in dataset.prompt_pool() {
            let w = wp.weight * gm_prob(&dataset, wp.prompt.id, y.id);
            num += w * model.reward(&wp.prompt, y)?;
            den += w;
        }
        Ok(num / den)
    };
    let weighting = exact_bayes_weights(&dataset, y1.id, y2.id)?;
    let gaps = CandidateGaps::gather(&model, &y1, &y2, &weighting)?;
    Ok(MarginalizationCase {
        expected_reward_first: expected(&y1)?,
        expected_reward_second: expected(&y2)?,
        prompt_free_gap: solve_from_gaps(&gaps, model.bounds(), config)?,
    })
}

fn gm_prob(dataset: &PreferenceDataset, x: PromptId, y: ResponseId) -> f64 {
    dataset
        .generation_model()
        .and_then(|gm| gm.prob(x, y))
        .unwrap_or(0.0)
}
