//! Line-oriented JSON dataset format.
//!
//! One record per line, discriminated by `kind`:
//!
//! ```text
//! {"kind":"prompt","prompt_id":0,"prompt_vec":[..],"directive_flag":0,"weight":0.5}
//! {"kind":"generation","prompt_id":0,"response_id":3,"prob":0.25}
//! {"kind":"sample","sample_id":0,"prompt_id":0,"prompt_vec":[..],"directive_flag":0,
//!  "chosen_id":3,"chosen_vec":[..],"chosen_len":120,
//!  "rejected_id":4,"rejected_vec":[..],"rejected_len":80,
//!  "group":"chosen_longer","reinsertion_quota":0}
//! ```
//!
//! Prompt records come first, then generation records, then samples. Floats
//! are written in shortest round-trip form so reading a file back yields
//! bit-identical values.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{
    Directive, GenerationModel, Group, PreferenceDataset, PreferenceSample, PromptFeatures,
    PromptId, ResponseFeatures, ResponseId, SampleId, WeightedPrompt,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum Record {
    Prompt {
        prompt_id: PromptId,
        prompt_vec: Vec<f64>,
        directive_flag: Directive,
        weight: f64,
    },
    Generation {
        prompt_id: PromptId,
        response_id: ResponseId,
        prob: f64,
    },
    Sample {
        sample_id: SampleId,
        prompt_id: PromptId,
        prompt_vec: Vec<f64>,
        directive_flag: Directive,
        chosen_id: ResponseId,
        chosen_vec: Vec<f64>,
        chosen_len: u32,
        rejected_id: ResponseId,
        rejected_vec: Vec<f64>,
        rejected_len: u32,
        group: Group,
        reinsertion_quota: u32,
    },
}

fn records(dataset: &PreferenceDataset) -> impl Iterator<Item = Record> + '_ {
    let prompts = dataset.prompt_pool().iter().map(|wp| Record::Prompt {
        prompt_id: wp.prompt.id,
        prompt_vec: wp.prompt.vector.clone(),
        directive_flag: wp.prompt.directive,
        weight: wp.weight,
    });
    let generation = dataset
        .generation_model()
        .into_iter()
        .flat_map(|gm| gm.iter())
        .map(|(prompt_id, response_id, prob)| Record::Generation {
            prompt_id,
            response_id,
            prob,
        });
    let samples = dataset.samples().iter().map(|s| Record::Sample {
        sample_id: s.id,
        prompt_id: s.prompt.id,
        prompt_vec: s.prompt.vector.clone(),
        directive_flag: s.prompt.directive,
        chosen_id: s.chosen.id,
        chosen_vec: s.chosen.vector.clone(),
        chosen_len: s.chosen.length,
        rejected_id: s.rejected.id,
        rejected_vec: s.rejected.vector.clone(),
        rejected_len: s.rejected.length,
        group: s.group,
        reinsertion_quota: s.reinsertion_quota,
    });
    prompts.chain(generation).chain(samples)
}

pub fn write_jsonl<W: Write>(dataset: &PreferenceDataset, mut out: W) -> std::io::Result<()> {
    for record in records(dataset) {
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn to_jsonl_string(dataset: &PreferenceDataset) -> String {
    let mut buf = Vec::new();
    write_jsonl(dataset, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<PreferenceDataset> {
    let mut pool = Vec::new();
    let mut generation: Option<GenerationModel> = None;
    let mut samples = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line)
            .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        match record {
            Record::Prompt {
                prompt_id,
                prompt_vec,
                directive_flag,
                weight,
            } => pool.push(WeightedPrompt {
                prompt: PromptFeatures {
                    id: prompt_id,
                    vector: prompt_vec,
                    directive: directive_flag,
                },
                weight,
            }),
            Record::Generation {
                prompt_id,
                response_id,
                prob,
            } => generation.get_or_insert_with(GenerationModel::new).insert(
                prompt_id,
                response_id,
                prob,
            ),
            Record::Sample {
                sample_id,
                prompt_id,
                prompt_vec,
                directive_flag,
                chosen_id,
                chosen_vec,
                chosen_len,
                rejected_id,
                rejected_vec,
                rejected_len,
                group,
                reinsertion_quota,
            } => samples.push(PreferenceSample {
                id: sample_id,
                prompt: PromptFeatures {
                    id: prompt_id,
                    vector: prompt_vec,
                    directive: directive_flag,
                },
                chosen: ResponseFeatures::new(chosen_id, chosen_vec, chosen_len),
                rejected: ResponseFeatures::new(rejected_id, rejected_vec, rejected_len),
                group,
                reinsertion_quota,
            }),
        }
    }
    PreferenceDataset::new(samples, pool, generation)
}

pub fn from_jsonl_str(s: &str) -> Result<PreferenceDataset> {
    read_jsonl(s.as_bytes())
}
