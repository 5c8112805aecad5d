//! Group-relative policy optimization: per-prompt rollout groups scored
//! by the composite reward, group-normalized advantages, a clipped
//! importance-weighted objective, and a nonnegative per-token KL
//! regularizer against the frozen reference policy.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{GenerationParams, LanguageModel, LmError, TrainableLm};
use crate::optim::Adam;
use crate::prompt::detection_prompt;
use crate::rewards::{composite_reward, RewardBreakdown, RewardConfig};
use crate::types::LabeledSample;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrpoConfig {
    /// Rollouts per prompt (G).
    pub group_size: usize,
    pub clip_epsilon: f64,
    /// KL coefficient (beta).
    pub kl_coefficient: f64,
    pub learning_rate: f64,
    pub rollout_temperature: f64,
    /// Groups per gradient step.
    pub minibatch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub max_new_tokens: usize,
    /// Gradient passes over each rollout batch. At 1 (the default) the
    /// importance ratios start at exactly 1; beyond that the clip term
    /// becomes active on later passes.
    pub updates_per_rollout: usize,
    /// Accepted for configuration compatibility; no term in the update
    /// rule consumes it.
    pub gamma_decay: f64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 7,
            clip_epsilon: 0.2,
            kl_coefficient: 0.001,
            learning_rate: 1e-6,
            rollout_temperature: 0.6,
            minibatch_size: 16,
            epochs: 2,
            seed: 0,
            max_new_tokens: 256,
            updates_per_rollout: 1,
            gamma_decay: 0.2,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.group_size < 2 {
            return Err("grpo.group_size must be >= 2".into());
        }
        if self.clip_epsilon <= 0.0 {
            return Err("grpo.clip_epsilon must be > 0".into());
        }
        if self.kl_coefficient < 0.0 {
            return Err("grpo.kl_coefficient must be >= 0".into());
        }
        if self.minibatch_size < 1 {
            return Err("grpo.minibatch_size must be >= 1".into());
        }
        if self.epochs < 1 {
            return Err("grpo.epochs must be >= 1".into());
        }
        if self.updates_per_rollout < 1 {
            return Err("grpo.updates_per_rollout must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum GrpoError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(
        "stale rollout: stored logprobs cover {stored} tokens but the current tokenization has {current}"
    )]
    StaleRollout { stored: usize, current: usize },
    #[error(transparent)]
    Lm(#[from] LmError),
}

/// One prompt's G rollouts with their rewards, normalized advantages,
/// and the per-token log-probabilities recorded at generation time.
#[derive(Debug, Clone)]
pub struct RolloutGroup {
    pub sample: LabeledSample,
    pub responses: Vec<String>,
    pub rewards: Vec<RewardBreakdown>,
    pub advantages: Vec<f64>,
    pub old_logprobs: Vec<Vec<f64>>,
}

/// Group mean/std normalization with the population std. A zero-variance
/// group yields all-zero advantages.
pub fn compute_advantages(rewards: &[f64]) -> Vec<f64> {
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let variance = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    if variance == 0.0 {
        return vec![0.0; rewards.len()];
    }
    let std = variance.sqrt();
    rewards.iter().map(|r| (r - mean) / std).collect()
}

/// Scores one rollout string against its sample.
pub type RewardFn<'a> = dyn Fn(&str, &LabeledSample) -> Result<RewardBreakdown, LmError> + 'a;

fn mix_seed(base: u64, parts: &[u64]) -> u64 {
    let mut h = base ^ 0x9e3779b97f4a7c15;
    for &p in parts {
        h ^= p.wrapping_add(0x9e3779b97f4a7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn id_hash(id: &str) -> u64 {
    id.bytes().fold(0xcbf29ce484222325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100000001b3)
    })
}

/// Samples G rollouts for one prompt, scores each, normalizes the
/// advantages within the group, and records per-token log-probabilities
/// under the generating policy.
pub fn rollout_group_with(
    policy: &dyn LanguageModel,
    sample: &LabeledSample,
    cfg: &GrpoConfig,
    reward_fn: &RewardFn,
    round: u64,
) -> Result<RolloutGroup, GrpoError> {
    cfg.validate().map_err(GrpoError::InvalidConfig)?;
    let prompt = detection_prompt(&sample.doc, &sample.claim);
    let mut responses = Vec::with_capacity(cfg.group_size);
    let mut rewards = Vec::with_capacity(cfg.group_size);
    let mut old_logprobs = Vec::with_capacity(cfg.group_size);
    for i in 0..cfg.group_size {
        let params = GenerationParams {
            temperature: cfg.rollout_temperature,
            max_new_tokens: cfg.max_new_tokens,
            seed: Some(mix_seed(cfg.seed, &[round, id_hash(&sample.id), i as u64])),
            stop_sequences: vec![crate::tags::ANSWER_CLOSE.to_string()],
        };
        let response = policy.generate(&prompt, &params)?;
        let breakdown = reward_fn(&response, sample)?;
        old_logprobs.push(policy.continuation_logprobs(&prompt, &response)?);
        rewards.push(breakdown);
        responses.push(response);
    }
    let reward_values: Vec<f64> = rewards.iter().map(|r| r.r_final as f64).collect();
    let advantages = compute_advantages(&reward_values);
    Ok(RolloutGroup {
        sample: sample.clone(),
        responses,
        rewards,
        advantages,
        old_logprobs,
    })
}

/// Rollouts scored with the composite reward against `novice`.
pub fn rollout_group(
    policy: &dyn LanguageModel,
    sample: &LabeledSample,
    cfg: &GrpoConfig,
    reward_cfg: &RewardConfig,
    novice: &dyn LanguageModel,
) -> Result<RolloutGroup, GrpoError> {
    let reward_fn =
        move |raw: &str, s: &LabeledSample| composite_reward(raw, s, novice, reward_cfg);
    rollout_group_with(policy, sample, cfg, &reward_fn, 0)
}

/// Per-response weights entering the surrogate gradient, plus the loss
/// decomposition used for metrics.
#[derive(Debug, Clone, Default)]
pub struct GrpoLossParts {
    pub loss: f64,
    /// Mean clipped policy objective across groups.
    pub policy_term: f64,
    /// Mean per-token KL estimate across groups.
    pub kl: f64,
    /// Fraction of responses whose ratio left the clip interval.
    pub clip_fraction: f64,
}

fn sequence_ratio(current: &[f64], old: &[f64]) -> f64 {
    let cur: f64 = current.iter().sum();
    let prev: f64 = old.iter().sum();
    (cur - prev).exp()
}

/// Evaluates the objective on frozen rollouts: the clipped
/// importance-weighted advantage term per response, averaged over the
/// group, minus beta times the per-token KL estimate
/// `k(r) = r - ln r - 1` with `r = p_ref / p_ours`. Returned negated, as
/// a loss to minimize.
pub fn grpo_loss_parts(
    policy: &dyn LanguageModel,
    reference: &dyn LanguageModel,
    groups: &[RolloutGroup],
    cfg: &GrpoConfig,
) -> Result<GrpoLossParts, GrpoError> {
    if groups.is_empty() {
        return Err(GrpoError::EmptyDataset);
    }
    let mut policy_terms = 0.0;
    let mut kls = 0.0;
    let mut clipped = 0usize;
    let mut responses_seen = 0usize;
    for group in groups {
        let prompt = detection_prompt(&group.sample.doc, &group.sample.claim);
        let mut group_term = 0.0;
        let mut group_kl = 0.0;
        let mut group_tokens = 0usize;
        for (i, response) in group.responses.iter().enumerate() {
            let current = policy.continuation_logprobs(&prompt, response)?;
            let old = &group.old_logprobs[i];
            if current.len() != old.len() {
                return Err(GrpoError::StaleRollout {
                    stored: old.len(),
                    current: current.len(),
                });
            }
            let w = sequence_ratio(&current, old);
            let advantage = group.advantages[i];
            let clipped_w = w.clamp(1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
            group_term += (w * advantage).min(clipped_w * advantage);
            if (w - 1.0).abs() > cfg.clip_epsilon {
                clipped += 1;
            }
            responses_seen += 1;

            let reference_lps = reference.continuation_logprobs(&prompt, response)?;
            for (lp_cur, lp_ref) in current.iter().zip(&reference_lps) {
                let r = (lp_ref - lp_cur).exp();
                group_kl += r - r.ln() - 1.0;
            }
            group_tokens += current.len();
        }
        policy_terms += group_term / group.responses.len() as f64;
        if group_tokens > 0 {
            kls += group_kl / group_tokens as f64;
        }
    }
    let n = groups.len() as f64;
    let policy_term = policy_terms / n;
    let kl = kls / n;
    Ok(GrpoLossParts {
        loss: -(policy_term - cfg.kl_coefficient * kl),
        policy_term,
        kl,
        clip_fraction: clipped as f64 / responses_seen as f64,
    })
}

/// The scalar training loss for a batch of rollout groups.
pub fn grpo_loss(
    policy: &dyn LanguageModel,
    reference: &dyn LanguageModel,
    groups: &[RolloutGroup],
    cfg: &GrpoConfig,
) -> Result<f64, GrpoError> {
    Ok(grpo_loss_parts(policy, reference, groups, cfg)?.loss)
}

/// Accumulates the gradient of the loss over `groups` into the policy's
/// buffer. The per-token weights realize the same derivative the loss
/// expression implies: the advantage term contributes only where the
/// unclipped branch is active, the KL term contributes `beta * (1 - r)`
/// per token.
fn accumulate_grpo_grad<M: TrainableLm>(
    policy: &mut M,
    reference: &dyn LanguageModel,
    groups: &[RolloutGroup],
    cfg: &GrpoConfig,
) -> Result<(), GrpoError> {
    let n = groups.len() as f64;
    for group in groups {
        let prompt = detection_prompt(&group.sample.doc, &group.sample.claim);
        let g = group.responses.len() as f64;
        let group_tokens: usize = group.old_logprobs.iter().map(Vec::len).sum();
        for (i, response) in group.responses.iter().enumerate() {
            let current = policy.continuation_logprobs(&prompt, response)?;
            let old = &group.old_logprobs[i];
            if current.len() != old.len() {
                return Err(GrpoError::StaleRollout {
                    stored: old.len(),
                    current: current.len(),
                });
            }
            let w = sequence_ratio(&current, old);
            let advantage = group.advantages[i];
            let clipped_w = w.clamp(1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
            let unclipped_active = w * advantage <= clipped_w * advantage;
            let policy_weight = if unclipped_active {
                -(advantage * w) / (g * n)
            } else {
                0.0
            };

            let reference_lps = reference.continuation_logprobs(&prompt, response)?;
            let weights: Vec<f64> = current
                .iter()
                .zip(&reference_lps)
                .map(|(lp_cur, lp_ref)| {
                    let r = (lp_ref - lp_cur).exp();
                    let kl_weight = if group_tokens > 0 {
                        cfg.kl_coefficient * (1.0 - r) / (group_tokens as f64 * n)
                    } else {
                        0.0
                    };
                    policy_weight + kl_weight
                })
                .collect();
            policy.accumulate_weighted_logprob_grad(&prompt, response, &weights)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrpoStepMetric {
    pub step: usize,
    pub epoch: usize,
    pub mean_reward: f64,
    pub mean_r_pred: f64,
    pub mean_r_exp: f64,
    pub mean_r_format: f64,
    pub kl: f64,
    pub clip_fraction: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GrpoMetrics {
    pub steps: Vec<GrpoStepMetric>,
    /// One trace per rollout, in scoring order.
    pub traces: Vec<crate::rewards::RewardTrace>,
}

impl GrpoMetrics {
    pub fn mean_reward_of_first_step(&self) -> Option<f64> {
        self.steps.first().map(|s| s.mean_reward)
    }

    pub fn mean_reward_of_last_step(&self) -> Option<f64> {
        self.steps.last().map(|s| s.mean_reward)
    }
}

/// On-policy training loop: rollout fresh groups for each minibatch of
/// prompts, compute rewards and advantages, take one gradient step, and
/// log the step metrics. Deterministic for a fixed seed.
pub fn train_grpo_with<M: TrainableLm>(
    policy: &mut M,
    reference: &dyn LanguageModel,
    dataset: &[LabeledSample],
    cfg: &GrpoConfig,
    reward_fn: &RewardFn,
) -> Result<GrpoMetrics, GrpoError> {
    cfg.validate().map_err(GrpoError::InvalidConfig)?;
    if dataset.is_empty() {
        return Err(GrpoError::EmptyDataset);
    }
    let mut adam = Adam::new(cfg.learning_rate, 0.0, policy.param_count());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut metrics = GrpoMetrics::default();
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for minibatch in order.chunks(cfg.minibatch_size) {
            step += 1;
            let mut groups = Vec::with_capacity(minibatch.len());
            for &idx in minibatch {
                let group =
                    rollout_group_with(policy, &dataset[idx], cfg, reward_fn, step as u64)?;
                for (i, reward) in group.rewards.iter().enumerate() {
                    metrics.traces.push(crate::rewards::RewardTrace::new(
                        format!("{}/step{step}/{i}", group.sample.id),
                        reward,
                    ));
                }
                groups.push(group);
            }
            // First pass sees ratios of exactly 1; further passes reuse
            // the rollouts with the clip active.
            let mut first_parts = None;
            for _ in 0..cfg.updates_per_rollout {
                let parts = grpo_loss_parts(policy, reference, &groups, cfg)?;
                policy.zero_grad();
                accumulate_grpo_grad(policy, reference, &groups, cfg)?;
                let grads = policy.grad().to_vec();
                adam.step(policy.params_mut(), &grads);
                first_parts.get_or_insert(parts);
            }
            let parts = first_parts.expect("at least one update pass");

            let all: Vec<&RewardBreakdown> =
                groups.iter().flat_map(|g| g.rewards.iter()).collect();
            let count = all.len() as f64;
            metrics.steps.push(GrpoStepMetric {
                step,
                epoch,
                mean_reward: all.iter().map(|r| r.r_final as f64).sum::<f64>() / count,
                mean_r_pred: all.iter().map(|r| r.r_pred as f64).sum::<f64>() / count,
                mean_r_exp: all.iter().map(|r| r.r_exp as f64).sum::<f64>() / count,
                mean_r_format: all.iter().map(|r| r.r_format as f64).sum::<f64>() / count,
                kl: parts.kl,
                clip_fraction: parts.clip_fraction,
                loss: parts.loss,
            });
        }
    }
    Ok(metrics)
}

/// Training loop scored by the composite reward against `novice`.
pub fn train_grpo<M: TrainableLm>(
    policy: &mut M,
    reference: &dyn LanguageModel,
    dataset: &[LabeledSample],
    cfg: &GrpoConfig,
    reward_cfg: &RewardConfig,
    novice: &dyn LanguageModel,
) -> Result<GrpoMetrics, GrpoError> {
    let reward_fn =
        move |raw: &str, s: &LabeledSample| composite_reward(raw, s, novice, reward_cfg);
    train_grpo_with(policy, reference, dataset, cfg, &reward_fn)
}
