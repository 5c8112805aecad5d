//! Cold-start supervised fine-tuning on filtered records: minimize the
//! per-token negative log-likelihood of the tagged target spans given the
//! detection prompt. Input tokens are conditioning context and carry no
//! loss. Three target compositions are supported; the default trains on
//! chain-of-thought, explanation, and answer together.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{LanguageModel, LmError, TrainableLm};
use crate::optim::Adam;
use crate::prompt::{self, concat_prompt_response};
use crate::tags::{
    ANSWER_CLOSE, ANSWER_OPEN, REASON_CLOSE, REASON_OPEN, THINK_CLOSE, THINK_OPEN,
};
use crate::types::SynthRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    CotExpAnswer,
    ExpAnswer,
    CotAnswer,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SftConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub target_mode: TargetMode,
    pub seed: u64,
    pub max_sequence_length: usize,
}

impl Default for SftConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            weight_decay: 0.1,
            batch_size: 16,
            epochs: 3,
            target_mode: TargetMode::CotExpAnswer,
            seed: 0,
            max_sequence_length: 8192,
        }
    }
}

impl SftConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.learning_rate <= 0.0 {
            return Err("sft.learning_rate must be > 0".into());
        }
        if self.epochs < 1 {
            return Err("sft.epochs must be >= 1".into());
        }
        if self.batch_size < 1 {
            return Err("sft.batch_size must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SftError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Lm(#[from] LmError),
}

/// One training pair: the rendered detection prompt and the tagged target
/// ending in the answer span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftExample {
    pub input_text: String,
    pub target_text: String,
}

impl SftExample {
    /// The conditioning context used when scoring `target_text`.
    pub fn scoring_prompt(&self) -> String {
        concat_prompt_response(&self.input_text, "")
    }

    /// Byte budget of prompt plus target under the byte tokenizer.
    pub fn sequence_len(&self) -> usize {
        self.scoring_prompt().len() + self.target_text.len()
    }
}

/// Builds the training pair for one record under `mode`. The prompt
/// matches the instruction variant the mode implies, and the target ends
/// in the gold answer ("Yes" iff label is 1).
pub fn build_sft_example(record: &SynthRecord, mode: TargetMode) -> SftExample {
    let doc = record.sample.doc.as_str();
    let claim = record.sample.claim.as_str();
    let answer = record.sample.gold_answer_text();
    let think = &record.response.think;
    let reason = &record.response.reason;
    let (template, target) = match mode {
        TargetMode::CotExpAnswer => (
            &prompt::TRAINING,
            format!(
                "{THINK_OPEN}{think}{THINK_CLOSE}{REASON_OPEN}{reason}{REASON_CLOSE}\
                 {ANSWER_OPEN}{answer}{ANSWER_CLOSE}"
            ),
        ),
        TargetMode::ExpAnswer => (
            &prompt::EXP_ANSWER,
            format!("{REASON_OPEN}{reason}{REASON_CLOSE}{ANSWER_OPEN}{answer}{ANSWER_CLOSE}"),
        ),
        TargetMode::CotAnswer => (
            &prompt::COT_ANSWER,
            format!("{THINK_OPEN}{think}{THINK_CLOSE}{ANSWER_OPEN}{answer}{ANSWER_CLOSE}"),
        ),
    };
    let input_text = template
        .render(&[("DOCUMENT", doc), ("CLAIM", claim)])
        .expect("bindings are total");
    SftExample { input_text, target_text: target }
}

/// Mean per-token NLL over the batch's target tokens (token-weighted
/// across examples). Input tokens are masked out of the loss entirely.
pub fn sft_loss(model: &dyn LanguageModel, batch: &[SftExample]) -> Result<f64, SftError> {
    if batch.is_empty() {
        return Err(SftError::EmptyBatch);
    }
    let mut total_nll = 0.0;
    let mut total_tokens = 0usize;
    for example in batch {
        let logprobs =
            model.continuation_logprobs(&example.scoring_prompt(), &example.target_text)?;
        total_nll += logprobs.iter().map(|lp| -lp).sum::<f64>();
        total_tokens += logprobs.len();
    }
    Ok(total_nll / total_tokens as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SftStepMetric {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SftMetrics {
    pub steps: Vec<SftStepMetric>,
    /// Examples dropped for exceeding max_sequence_length.
    pub skipped_overlong: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Runs `cfg.epochs` of shuffled minibatch training with Adam at the
/// configured learning rate and weight decay. The model is updated in
/// place and the per-step loss series returned. Deterministic for a
/// fixed seed.
pub fn train_sft<M: TrainableLm>(
    model: &mut M,
    dataset: &[SynthRecord],
    cfg: &SftConfig,
) -> Result<SftMetrics, SftError> {
    cfg.validate().map_err(SftError::InvalidConfig)?;
    if dataset.is_empty() {
        return Err(SftError::EmptyDataset);
    }
    let mut examples = Vec::with_capacity(dataset.len());
    let mut skipped_overlong = 0usize;
    for record in dataset {
        let example = build_sft_example(record, cfg.target_mode);
        if example.sequence_len() > cfg.max_sequence_length {
            skipped_overlong += 1;
        } else {
            examples.push(example);
        }
    }
    if examples.is_empty() {
        return Err(SftError::EmptyDataset);
    }

    let mut adam = Adam::new(cfg.learning_rate, cfg.weight_decay, model.param_count());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut metrics = SftMetrics {
        initial_loss: sft_loss(model, &examples)?,
        ..Default::default()
    };

    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let total_tokens: usize = batch
                .iter()
                .map(|&i| examples[i].target_text.len())
                .sum();
            model.zero_grad();
            let mut batch_nll = 0.0;
            for &i in batch {
                let example = &examples[i];
                // Gradient of the token-mean NLL: -1/N per target token.
                let weights = vec![-1.0 / total_tokens as f64; example.target_text.len()];
                let logprobs = model.accumulate_weighted_logprob_grad(
                    &example.scoring_prompt(),
                    &example.target_text,
                    &weights,
                )?;
                batch_nll += logprobs.iter().map(|lp| -lp).sum::<f64>();
            }
            let grads = model.grad().to_vec();
            adam.step(model.params_mut(), &grads);
            step += 1;
            metrics.steps.push(SftStepMetric {
                step,
                epoch,
                loss: batch_nll / total_tokens as f64,
            });
        }
    }
    metrics.skipped_overlong = skipped_overlong;
    metrics.final_loss = sft_loss(model, &examples)?;
    Ok(metrics)
}
