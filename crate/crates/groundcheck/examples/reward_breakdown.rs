//! Composite reward anatomy: prediction correctness, explanation quality
//! via a novice model, and format adherence, scored independently over a
//! spread of well-formed and malformed responses.
//!
//! Run with: cargo run --example reward_breakdown

use groundcheck::gateway::mock::ScriptedLm;
use groundcheck::rewards::{composite_reward, RewardConfig};
use groundcheck::types::LabeledSample;

fn main() -> anyhow::Result<()> {
    let sample = LabeledSample::new(
        "demo",
        "the committee approved the budget on tuesday",
        "the committee approved the budget",
        1,
        "example",
    )?;
    // Novice that answers from the explanation alone: it says "Yes" only
    // when the explanation mentions supporting evidence.
    let novice = ScriptedLm::respond_with(|prompt| {
        let helped = prompt.contains("the document confirms");
        format!("<answer>{}</answer>", if helped { "Yes" } else { "No" })
    });
    let cfg = RewardConfig::default();

    let cases = [
        (
            "well-formed, correct, helpful",
            "<think>check</think><reason>the document confirms the approval</reason><answer>Yes</answer>",
        ),
        (
            "well-formed, correct, unhelpful",
            "<think>check</think><reason>just trust me</reason><answer>Yes</answer>",
        ),
        (
            "well-formed, wrong answer",
            "<think>check</think><reason>the document confirms the approval</reason><answer>No</answer>",
        ),
        (
            "malformed (missing think), helpful",
            "<reason>the document confirms the approval</reason><answer>Yes</answer>",
        ),
        ("empty response", ""),
    ];

    println!("{:<38} pred exp fmt final", "case");
    for (name, raw) in cases {
        let b = composite_reward(raw, &sample, &novice, &cfg)?;
        println!(
            "{name:<38} {:>4} {:>3} {:>3} {:>5}",
            b.r_pred, b.r_exp, b.r_format, b.r_final
        );
    }
    Ok(())
}
