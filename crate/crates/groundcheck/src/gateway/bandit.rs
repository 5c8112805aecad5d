//! A two-action logit policy that "generates" either "Yes" or "No" in a
//! single step. The minimal environment for exercising the RL update
//! rule end to end: rewards are verifiable, gradients are analytic, and
//! 50 steps on CPU take milliseconds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GenerationParams, LanguageModel, LmError, TrainableLm};

const ACTIONS: [&str; 2] = ["Yes", "No"];

#[derive(Clone)]
pub struct LogitBandit {
    params: Vec<f64>,
    grads: Vec<f64>,
    id: String,
}

impl Default for LogitBandit {
    fn default() -> Self {
        Self::new()
    }
}

impl LogitBandit {
    pub fn new() -> Self {
        Self {
            params: vec![0.0, 0.0],
            grads: vec![0.0, 0.0],
            id: "logit-bandit".to_string(),
        }
    }

    pub fn logits(&self) -> (f64, f64) {
        (self.params[0], self.params[1])
    }

    /// Exact probability of emitting `action` when sampling at
    /// `temperature`. None for strings outside the action set.
    pub fn action_prob(&self, action: &str, temperature: f64) -> Option<f64> {
        let idx = Self::action_index(action).ok()?;
        Some(self.probs(if temperature == 0.0 { 1.0 } else { temperature })[idx])
    }

    fn probs(&self, temperature: f64) -> [f64; 2] {
        let t = if temperature == 0.0 { 1.0 } else { temperature };
        let a = self.params[0] / t;
        let b = self.params[1] / t;
        let max = a.max(b);
        let ea = (a - max).exp();
        let eb = (b - max).exp();
        [ea / (ea + eb), eb / (ea + eb)]
    }

    fn action_index(continuation: &str) -> Result<usize, LmError> {
        ACTIONS
            .iter()
            .position(|a| *a == continuation)
            .ok_or_else(|| {
                LmError::Failed(format!(
                    "bandit action must be one of {ACTIONS:?}, got {continuation:?}"
                ))
            })
    }
}

impl LanguageModel for LogitBandit {
    fn model_id(&self) -> &str {
        &self.id
    }

    /// The whole response is a single token: one of the two actions.
    fn continuation_logprobs(
        &self,
        _prompt: &str,
        continuation: &str,
    ) -> Result<Vec<f64>, LmError> {
        if continuation.is_empty() {
            return Err(LmError::EmptyContinuation);
        }
        let idx = Self::action_index(continuation)?;
        let probs = self.probs(1.0);
        Ok(vec![probs[idx].ln()])
    }

    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, LmError> {
        params.validate().map_err(LmError::Failed)?;
        if params.temperature == 0.0 {
            let probs = self.probs(1.0);
            return Ok(ACTIONS[if probs[1] > probs[0] { 1 } else { 0 }].to_string());
        }
        let seed = params.seed.unwrap_or(0) ^ fxhash(prompt);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let probs = self.probs(params.temperature);
        let draw: f64 = rng.gen_range(0.0..1.0);
        Ok(ACTIONS[if draw < probs[0] { 0 } else { 1 }].to_string())
    }
}

fn fxhash(text: &str) -> u64 {
    text.bytes()
        .fold(0xcbf29ce484222325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x100000001b3)
        })
}

impl TrainableLm for LogitBandit {
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
        _prompt: &str,
        continuation: &str,
        weights: &[f64],
    ) -> Result<Vec<f64>, LmError> {
        let idx = Self::action_index(continuation)?;
        if weights.len() != 1 {
            return Err(LmError::Failed(
                "bandit responses are single-token; expected one weight".into(),
            ));
        }
        let w = weights[0];
        let probs = self.probs(1.0);
        // d log p(a) / d logit_k = 1[k == a] - p_k
        for (k, (grad, p)) in self.grads.iter_mut().zip(probs).enumerate() {
            let indicator = if k == idx { 1.0 } else { 0.0 };
            *grad += w * (indicator - p);
        }
        Ok(vec![probs[idx].ln()])
    }
}
