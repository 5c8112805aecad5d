//! Group-relative policy optimization on the two-action logit bandit:
//! the policy starts indifferent between "Yes" and "No" and learns the
//! rewarded action from prediction-correctness rewards alone.
//!
//! Run with: cargo run --example train_grpo_bandit

use groundcheck::gateway::bandit::LogitBandit;
use groundcheck::grpo::{train_grpo_with, GrpoConfig};
use groundcheck::rewards::RewardBreakdown;
use groundcheck::tags::normalize_answer;
use groundcheck::types::LabeledSample;

fn main() -> anyhow::Result<()> {
    let dataset: Vec<LabeledSample> = (0..50)
        .map(|i| {
            LabeledSample::new(
                format!("s{i}"),
                "the sensor reading is within range",
                "the sensor reading is within range",
                1,
                "bandit",
            )
            .unwrap()
        })
        .collect();

    let mut policy = LogitBandit::new();
    let reference = LogitBandit::new();
    let cfg = GrpoConfig {
        group_size: 7,
        learning_rate: 0.1,
        minibatch_size: 1,
        epochs: 1,
        seed: 2024,
        max_new_tokens: 4,
        ..Default::default()
    };
    let reward_fn = |raw: &str, sample: &LabeledSample| {
        Ok(RewardBreakdown::new(
            (normalize_answer(raw) == Some(sample.label)) as u8,
            0,
            0,
        ))
    };

    println!(
        "initial p(correct) at rollout temperature: {:.3}",
        policy.action_prob("Yes", cfg.rollout_temperature).unwrap()
    );
    let metrics = train_grpo_with(&mut policy, &reference, &dataset, &cfg, &reward_fn)?;
    for step in metrics.steps.iter().step_by(10) {
        println!(
            "step {:>2} mean_reward {:.3} kl {:.5} clip_fraction {:.2}",
            step.step, step.mean_reward, step.kl, step.clip_fraction
        );
    }
    let last = metrics.steps.last().unwrap();
    println!(
        "step {:>2} mean_reward {:.3} kl {:.5} clip_fraction {:.2}",
        last.step, last.mean_reward, last.kl, last.clip_fraction
    );
    println!(
        "\ntrained p(correct) at rollout temperature: {:.3}  logits: {:?}",
        policy.action_prob("Yes", cfg.rollout_temperature).unwrap(),
        policy.logits()
    );
    Ok(())
}
