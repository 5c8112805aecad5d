//! A tiny trainable byte-level language model: an MLP over a fixed-width
//! byte context (embedding -> tanh hidden -> softmax over 256 bytes).
//! Small enough to train on CPU in seconds, with exact hand-written
//! backpropagation so training is bit-deterministic for a fixed seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GenerationParams, LanguageModel, LmError, TrainableLm};

const VOCAB_OUT: usize = 256;
/// Embedding table has one extra row used as left-padding.
const PAD_TOKEN: usize = 256;
const VOCAB_IN: usize = 257;

/// Generation samples only bytes that are valid single-byte UTF-8 and
/// printable, so generated text is always a valid string.
fn generable(byte: usize) -> bool {
    byte == b'\n' as usize || byte == b'\t' as usize || (0x20..=0x7e).contains(&byte)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TinyLmConfig {
    pub embed_dim: usize,
    pub context_window: usize,
    pub hidden_dim: usize,
    /// Prompt+continuation byte budget; longer inputs overflow.
    pub max_seq_len: usize,
}

impl Default for TinyLmConfig {
    fn default() -> Self {
        Self {
            embed_dim: 12,
            context_window: 8,
            hidden_dim: 48,
            max_seq_len: 32_768,
        }
    }
}

impl TinyLmConfig {
    pub fn param_count(&self) -> usize {
        VOCAB_IN * self.embed_dim
            + self.context_window * self.embed_dim * self.hidden_dim
            + self.hidden_dim
            + self.hidden_dim * VOCAB_OUT
            + VOCAB_OUT
    }
}

/// Parameter slab offsets.
struct Layout {
    embed: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    input_dim: usize,
    hidden_dim: usize,
}

impl Layout {
    fn new(cfg: &TinyLmConfig) -> Self {
        let input_dim = cfg.context_window * cfg.embed_dim;
        let embed = 0;
        let w1 = embed + VOCAB_IN * cfg.embed_dim;
        let b1 = w1 + input_dim * cfg.hidden_dim;
        let w2 = b1 + cfg.hidden_dim;
        let b2 = w2 + cfg.hidden_dim * VOCAB_OUT;
        Self {
            embed,
            w1,
            b1,
            w2,
            b2,
            input_dim,
            hidden_dim: cfg.hidden_dim,
        }
    }
}

#[derive(Clone)]
pub struct TinyLm {
    cfg: TinyLmConfig,
    params: Vec<f64>,
    grads: Vec<f64>,
    id: String,
}

impl TinyLm {
    pub fn new(cfg: TinyLmConfig, seed: u64) -> Self {
        let n = cfg.param_count();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..n).map(|_| rng.gen_range(-0.08..0.08)).collect();
        Self {
            cfg,
            params,
            grads: vec![0.0; n],
            id: format!("tiny-lm-seed{seed}"),
        }
    }

    pub fn from_params(cfg: TinyLmConfig, params: Vec<f64>, id: String) -> Result<Self, LmError> {
        if params.len() != cfg.param_count() {
            return Err(LmError::Failed(format!(
                "parameter count {} does not match config ({})",
                params.len(),
                cfg.param_count()
            )));
        }
        let n = params.len();
        Ok(Self {
            cfg,
            params,
            grads: vec![0.0; n],
            id,
        })
    }

    pub fn config(&self) -> &TinyLmConfig {
        &self.cfg
    }

    pub fn set_id(&mut self, id: impl Into<String>) {
        self.id = id.into();
    }

    fn check_budget(&self, prompt: &str, continuation: &str) -> Result<(), LmError> {
        if prompt.len() + continuation.len() > self.cfg.max_seq_len {
            return Err(LmError::ContextOverflow {
                limit: self.cfg.max_seq_len,
            });
        }
        Ok(())
    }

    /// Context token ids for predicting position `pos` of `sequence`:
    /// the `context_window` preceding bytes, left-padded.
    fn context_at(&self, sequence: &[u8], pos: usize) -> Vec<usize> {
        let w = self.cfg.context_window;
        let mut ctx = Vec::with_capacity(w);
        for back in (1..=w).rev() {
            if pos >= back {
                ctx.push(sequence[pos - back] as usize);
            } else {
                ctx.push(PAD_TOKEN);
            }
        }
        ctx
    }

    /// Forward pass for one position: returns (input vector, hidden
    /// activations, log-probabilities over the byte vocabulary).
    fn forward(&self, ctx: &[usize]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let lay = Layout::new(&self.cfg);
        let de = self.cfg.embed_dim;
        let mut x = Vec::with_capacity(lay.input_dim);
        for &tok in ctx {
            let base = lay.embed + tok * de;
            x.extend_from_slice(&self.params[base..base + de]);
        }
        let mut h = vec![0.0f64; lay.hidden_dim];
        for (j, hj) in h.iter_mut().enumerate() {
            let mut acc = self.params[lay.b1 + j];
            for (i, xi) in x.iter().enumerate() {
                acc += xi * self.params[lay.w1 + i * lay.hidden_dim + j];
            }
            *hj = acc.tanh();
        }
        let mut logits = vec![0.0f64; VOCAB_OUT];
        for (k, logit) in logits.iter_mut().enumerate() {
            let mut acc = self.params[lay.b2 + k];
            for (j, hj) in h.iter().enumerate() {
                acc += hj * self.params[lay.w2 + j * VOCAB_OUT + k];
            }
            *logit = acc;
        }
        let logz = log_sum_exp(&logits);
        for logit in &mut logits {
            *logit -= logz;
        }
        (x, h, logits)
    }

    fn backward(&mut self, ctx: &[usize], x: &[f64], h: &[f64], dlogits: &[f64]) {
        let lay = Layout::new(&self.cfg);
        let de = self.cfg.embed_dim;
        let mut dh = vec![0.0f64; lay.hidden_dim];
        for (k, &dl) in dlogits.iter().enumerate() {
            if dl == 0.0 {
                continue;
            }
            self.grads[lay.b2 + k] += dl;
            for (j, hj) in h.iter().enumerate() {
                self.grads[lay.w2 + j * VOCAB_OUT + k] += hj * dl;
                dh[j] += self.params[lay.w2 + j * VOCAB_OUT + k] * dl;
            }
        }
        let mut dx = vec![0.0f64; lay.input_dim];
        for (j, dhj) in dh.iter().enumerate() {
            let da = dhj * (1.0 - h[j] * h[j]);
            self.grads[lay.b1 + j] += da;
            for (i, xi) in x.iter().enumerate() {
                self.grads[lay.w1 + i * lay.hidden_dim + j] += xi * da;
                dx[i] += self.params[lay.w1 + i * lay.hidden_dim + j] * da;
            }
        }
        for (slot, &tok) in ctx.iter().enumerate() {
            let base = lay.embed + tok * de;
            for d in 0..de {
                self.grads[base + d] += dx[slot * de + d];
            }
        }
    }
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

impl LanguageModel for TinyLm {
    fn model_id(&self) -> &str {
        &self.id
    }

    fn continuation_logprobs(
        &self,
        prompt: &str,
        continuation: &str,
    ) -> Result<Vec<f64>, LmError> {
        self.check_budget(prompt, continuation)?;
        if continuation.is_empty() {
            return Err(LmError::EmptyContinuation);
        }
        let mut sequence = prompt.as_bytes().to_vec();
        sequence.extend_from_slice(continuation.as_bytes());
        let start = prompt.len();
        let mut logprobs = Vec::with_capacity(continuation.len());
        for pos in start..sequence.len() {
            let ctx = self.context_at(&sequence, pos);
            let (_, _, logp) = self.forward(&ctx);
            logprobs.push(logp[sequence[pos] as usize]);
        }
        Ok(logprobs)
    }

    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, LmError> {
        params
            .validate()
            .map_err(LmError::Failed)?;
        self.check_budget(prompt, "")?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed.unwrap_or(0));
        let mut sequence = prompt.as_bytes().to_vec();
        let mut produced = Vec::new();
        for _ in 0..params.max_new_tokens {
            if sequence.len() >= self.cfg.max_seq_len {
                break;
            }
            let ctx = self.context_at(&sequence, sequence.len());
            let (_, _, logp) = self.forward(&ctx);
            let byte = if params.temperature == 0.0 {
                (0..VOCAB_OUT)
                    .filter(|&b| generable(b))
                    .max_by(|&a, &b| {
                        logp[a]
                            .partial_cmp(&logp[b])
                            .unwrap_or(std::cmp::Ordering::Equal)
                            // Lowest byte wins ties.
                            .then(b.cmp(&a))
                    })
                    .expect("generable set is non-empty")
            } else {
                sample_tempered(&logp, params.temperature, &mut rng)
            };
            sequence.push(byte as u8);
            produced.push(byte as u8);
            let text = String::from_utf8(produced.clone())
                .expect("generable bytes are single-byte UTF-8");
            if params
                .stop_sequences
                .iter()
                .any(|stop| !stop.is_empty() && text.ends_with(stop))
            {
                return Ok(text);
            }
        }
        Ok(String::from_utf8(produced).expect("generable bytes are single-byte UTF-8"))
    }
}

fn sample_tempered(logp: &[f64], temperature: f64, rng: &mut ChaCha8Rng) -> usize {
    let scaled: Vec<(usize, f64)> = (0..logp.len())
        .filter(|&b| generable(b))
        .map(|b| (b, logp[b] / temperature))
        .collect();
    let max = scaled
        .iter()
        .map(|(_, l)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scaled.iter().map(|(_, l)| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut draw = rng.gen_range(0.0..total);
    for ((byte, _), w) in scaled.iter().zip(&weights) {
        if draw < *w {
            return *byte;
        }
        draw -= w;
    }
    scaled.last().expect("non-empty").0
}

impl TrainableLm for TinyLm {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn grad(&self) -> &[f64] {
        &self.grads
    }

    fn zero_grad(&mut self) {
        self.grads.fill(0.0);
    }

    fn accumulate_weighted_logprob_grad(
        &mut self,
        prompt: &str,
        continuation: &str,
        weights: &[f64],
    ) -> Result<Vec<f64>, LmError> {
        self.check_budget(prompt, continuation)?;
        if continuation.is_empty() {
            return Err(LmError::EmptyContinuation);
        }
        if weights.len() != continuation.len() {
            return Err(LmError::Failed(format!(
                "weight count {} does not match token count {}",
                weights.len(),
                continuation.len()
            )));
        }
        let mut sequence = prompt.as_bytes().to_vec();
        sequence.extend_from_slice(continuation.as_bytes());
        let start = prompt.len();
        let mut logprobs = Vec::with_capacity(continuation.len());
        for (t, pos) in (start..sequence.len()).enumerate() {
            let w = weights[t];
            let ctx = self.context_at(&sequence, pos);
            let (x, h, logp) = self.forward(&ctx);
            let target = sequence[pos] as usize;
            logprobs.push(logp[target]);
            if w == 0.0 {
                continue;
            }
            // d/dlogit_k of w*log p(target) = w * (1[k==target] - p_k)
            let mut dlogits = vec![0.0f64; VOCAB_OUT];
            for (k, dl) in dlogits.iter_mut().enumerate() {
                *dl = -w * logp[k].exp();
            }
            dlogits[target] += w;
            self.backward(&ctx, &x, &h, &dlogits);
        }
        Ok(logprobs)
    }
}
