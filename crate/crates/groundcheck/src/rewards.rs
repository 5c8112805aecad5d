//! The composite rule-based reward: prediction correctness, explanation
//! quality judged by whether a novice-level model can answer correctly
//! from the explanation alone, and format adherence. The three binary
//! components are computed independently and summed.

use serde::{Deserialize, Serialize};

use crate::gateway::{score_continuation, GenerationParams, LanguageModel, LmError};
use crate::prompt::{self, concat_prompt_response};
use crate::tags::{parse_tagged_response, TaggedResponse, ANSWER_OPEN};
use crate::types::LabeledSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpRewardMode {
    /// The novice must produce the gold answer when given the explanation.
    Correctness,
    /// The explanation must strictly lower the novice's perplexity on the
    /// gold answer.
    Perplexity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub novice_temperature: f64,
    pub exp_reward_mode: ExpRewardMode,
    pub novice_max_new_tokens: usize,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            novice_temperature: 0.6,
            exp_reward_mode: ExpRewardMode::Correctness,
            novice_max_new_tokens: 64,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.novice_temperature < 0.0 {
            return Err("rewards.novice_temperature must be >= 0".into());
        }
        Ok(())
    }
}

/// The three components and their sum for one rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_pred: u8,
    pub r_exp: u8,
    pub r_format: u8,
    pub r_final: u8,
}

impl RewardBreakdown {
    pub fn new(r_pred: u8, r_exp: u8, r_format: u8) -> Self {
        debug_assert!(r_pred <= 1 && r_exp <= 1 && r_format <= 1);
        Self {
            r_pred,
            r_exp,
            r_format,
            r_final: r_pred + r_exp + r_format,
        }
    }
}

/// 1 iff the parsed answer is present and matches the gold label.
pub fn reward_prediction(parsed: &TaggedResponse, gold: u8) -> u8 {
    (parsed.answer_label == Some(gold)) as u8
}

/// 1 iff the whole response carries the three tags, in order, each
/// properly closed.
pub fn reward_format(raw_response: &str) -> u8 {
    parse_tagged_response(raw_response).well_formed as u8
}

fn prompt_seed(text: &str) -> u64 {
    text.bytes().fold(0xcbf29ce484222325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100000001b3)
    })
}

fn gold_answer_text(gold: u8) -> &'static str {
    if gold == 1 {
        "Yes"
    } else {
        "No"
    }
}

/// Scores one explanation. An empty explanation scores 0 without calling
/// the novice at all.
pub fn reward_explanation(
    doc: &str,
    claim: &str,
    explanation: &str,
    gold: u8,
    novice: &dyn LanguageModel,
    cfg: &RewardConfig,
) -> Result<u8, LmError> {
    if explanation.trim().is_empty() {
        return Ok(0);
    }
    let rendered = prompt::EXPLANATION_REWARD
        .render(&[
            ("DOCUMENT", doc),
            ("CLAIM", claim),
            ("EXPLANATION", explanation),
        ])
        .expect("bindings are total");
    match cfg.exp_reward_mode {
        ExpRewardMode::Correctness => {
            let params = GenerationParams {
                temperature: cfg.novice_temperature,
                max_new_tokens: cfg.novice_max_new_tokens,
                seed: Some(prompt_seed(&rendered)),
                stop_sequences: vec![crate::tags::ANSWER_CLOSE.to_string()],
            };
            let reply = novice.generate(&rendered, &params)?;
            // The novice is only asked for an answer tag; recover it even
            // from otherwise malformed output.
            let parsed = parse_tagged_response(&reply);
            let label = match parsed.answer_label {
                Some(label) => Some(label),
                // Recover when generation halted at the stop sequence
                // before the closing tag was emitted.
                None => reply
                    .rfind(ANSWER_OPEN)
                    .map(|at| &reply[at + ANSWER_OPEN.len()..])
                    .and_then(|tail| {
                        crate::tags::normalize_answer(
                            tail.trim_end_matches(crate::tags::ANSWER_CLOSE),
                        )
                    }),
            };
            Ok((label == Some(gold)) as u8)
        }
        ExpRewardMode::Perplexity => {
            let base_prompt = prompt::EXPLANATION_REWARD_BASE
                .render(&[("DOCUMENT", doc), ("CLAIM", claim)])
                .expect("bindings are total");
            let answer = gold_answer_text(gold);
            let with = score_continuation(
                novice,
                &concat_prompt_response(&rendered, ANSWER_OPEN),
                answer,
            )?;
            let without = score_continuation(
                novice,
                &concat_prompt_response(&base_prompt, ANSWER_OPEN),
                answer,
            )?;
            Ok((with.perplexity < without.perplexity) as u8)
        }
    }
}

/// Computes all three components for one raw rollout. The explanation
/// span is recovered even from malformed responses, so a response can
/// earn the explanation reward while losing the format reward.
pub fn composite_reward(
    raw_response: &str,
    sample: &LabeledSample,
    novice: &dyn LanguageModel,
    cfg: &RewardConfig,
) -> Result<RewardBreakdown, LmError> {
    let parsed = parse_tagged_response(raw_response);
    let r_pred = reward_prediction(&parsed, sample.label);
    let r_format = parsed.well_formed as u8;
    let r_exp = reward_explanation(
        &sample.doc,
        &sample.claim,
        &parsed.reason,
        sample.label,
        novice,
        cfg,
    )?;
    Ok(RewardBreakdown::new(r_pred, r_exp, r_format))
}

/// One JSONL row of the reward trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RewardTrace {
    pub rollout_id: String,
    pub r_pred: u8,
    pub r_exp: u8,
    pub r_format: u8,
    pub r_final: u8,
}

impl RewardTrace {
    pub fn new(rollout_id: impl Into<String>, breakdown: &RewardBreakdown) -> Self {
        Self {
            rollout_id: rollout_id.into(),
            r_pred: breakdown.r_pred,
            r_exp: breakdown.r_exp,
            r_format: breakdown.r_format,
            r_final: breakdown.r_final,
        }
    }
}
