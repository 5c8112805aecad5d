//! The single abstraction every other module uses to touch a language
//! model: continuation scoring (perplexity), text generation, and text
//! embedding. Deterministic mock implementations live in [`mock`]; a
//! tiny trainable byte-level model in [`tiny`]; a two-action policy for
//! RL smoke tests in [`bandit`]; the remote chat-completion client in
//! [`remote`].

pub mod bandit;
pub mod mock;
pub mod remote;
pub mod tiny;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LmError {
    #[error("continuation tokenizes to zero tokens")]
    EmptyContinuation,
    #[error("prompt plus continuation exceeds the model window of {limit} tokens")]
    ContextOverflow { limit: usize },
    #[error("model failure: {0}")]
    Failed(String),
}

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("cannot embed empty input")]
    EmptyInput,
}

/// Teacher-forced score of a continuation: summed per-token negative
/// log-likelihood in nats, and the perplexity it implies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationScore {
    pub total_nll: f64,
    pub token_count: usize,
    pub perplexity: f64,
}

impl ContinuationScore {
    /// Builds a score from per-token log-probabilities (nats).
    pub fn from_logprobs(logprobs: &[f64]) -> Result<Self, LmError> {
        if logprobs.is_empty() {
            return Err(LmError::EmptyContinuation);
        }
        let total_nll: f64 = logprobs.iter().map(|lp| -lp).sum();
        Ok(Self {
            total_nll,
            token_count: logprobs.len(),
            perplexity: (total_nll / logprobs.len() as f64).exp(),
        })
    }
}

/// Sampling controls for [`generate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub seed: Option<u64>,
    pub stop_sequences: Vec<String>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            temperature: 0.6,
            max_new_tokens: 256,
            seed: None,
            stop_sequences: Vec::new(),
        }
    }
}

impl GenerationParams {
    pub fn greedy(max_new_tokens: usize) -> Self {
        Self {
            temperature: 0.0,
            max_new_tokens,
            seed: Some(0),
            stop_sequences: Vec::new(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.temperature < 0.0 {
            return Err("temperature must be >= 0".into());
        }
        if self.max_new_tokens == 0 {
            return Err("max_new_tokens must be > 0".into());
        }
        Ok(())
    }
}

/// A language model handle. The gateway owns the tokenizer: callers pass
/// text and never see token ids. Results are deterministic for fixed
/// inputs and seed.
pub trait LanguageModel: Send + Sync {
    fn model_id(&self) -> &str;

    /// Per-token log-probabilities (nats) of `continuation` conditioned on
    /// `prompt` plus the preceding continuation tokens, under the model's
    /// own tokenizer. One entry per continuation token.
    fn continuation_logprobs(&self, prompt: &str, continuation: &str)
        -> Result<Vec<f64>, LmError>;

    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, LmError>;
}

/// A model whose parameters can be updated by the trainers. Gradients
/// accumulate into an internal buffer aligned with `params`.
pub trait TrainableLm: LanguageModel {
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn grad(&self) -> &[f64];
    fn zero_grad(&mut self);

    /// Accumulates the gradient of `sum_t weights[t] * log p(token_t)`
    /// with respect to the parameters, teacher-forced over the
    /// continuation tokens. `weights` must have one entry per
    /// continuation token. Returns the per-token log-probabilities from
    /// the same forward pass.
    fn accumulate_weighted_logprob_grad(
        &mut self,
        prompt: &str,
        continuation: &str,
        weights: &[f64],
    ) -> Result<Vec<f64>, LmError>;

    fn param_count(&self) -> usize {
        self.params().len()
    }
}

/// A text embedder handle with a fixed output dimensionality.
pub trait Embedder: Send + Sync {
    fn embedder_id(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, content: &str) -> Result<Vec<f64>, EmbedError>;
}

/// Scores a continuation against a prompt. `total_nll` sums the per-token
/// negative log-likelihoods of the continuation tokens only; prompt
/// tokens are conditioning context and never enter the mean.
pub fn score_continuation(
    model: &dyn LanguageModel,
    prompt: &str,
    continuation: &str,
) -> Result<ContinuationScore, LmError> {
    if continuation.is_empty() {
        return Err(LmError::EmptyContinuation);
    }
    let logprobs = model.continuation_logprobs(prompt, continuation)?;
    ContinuationScore::from_logprobs(&logprobs)
}

/// Generates at most `params.max_new_tokens` tokens, halting early at any
/// stop sequence. Temperature 0 or a fixed seed is reproducible.
pub fn generate(
    model: &dyn LanguageModel,
    prompt: &str,
    params: &GenerationParams,
) -> Result<String, LmError> {
    model.generate(prompt, params)
}

/// Embeds non-empty text into the embedder's fixed-dimensional space.
pub fn embed(embedder: &dyn Embedder, content: &str) -> Result<Vec<f64>, EmbedError> {
    if content.is_empty() {
        return Err(EmbedError::EmptyInput);
    }
    let vector = embedder.embed(content)?;
    debug_assert_eq!(vector.len(), embedder.dim());
    Ok(vector)
}
