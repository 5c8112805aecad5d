//! Cold-start supervised fine-tuning of the tiny byte-level model on
//! synthetic tagged records. Prints the per-step loss series and the
//! overall reduction.
//!
//! Run with: cargo run --release --example train_sft

use groundcheck::gateway::tiny::{TinyLm, TinyLmConfig};
use groundcheck::sft::{train_sft, SftConfig, TargetMode};
use groundcheck::tags::parse_tagged_response;
use groundcheck::types::{LabeledSample, SynthRecord};

fn record(i: usize) -> SynthRecord {
    let gold = (i % 2) as u8;
    let answer = if gold == 1 { "Yes" } else { "No" };
    let raw = format!(
        "<think>Checked claim {i} against the document.</think>\
         <reason>The document states the fact claimed in item {i}.</reason>\
         <answer>{answer}</answer>"
    );
    SynthRecord {
        sample: LabeledSample::new(
            format!("r{i}"),
            format!("Item {i}: the recorded value matches the ledger."),
            format!("Item {i} matches the ledger."),
            gold,
            "example",
        )
        .unwrap(),
        response: parse_tagged_response(&raw),
        raw_response: raw,
        generator_id: "example".to_string(),
    }
}

fn main() -> anyhow::Result<()> {
    let dataset: Vec<SynthRecord> = (0..64).map(record).collect();
    let mut model = TinyLm::new(TinyLmConfig::default(), 1);
    let cfg = SftConfig {
        learning_rate: 0.01,
        weight_decay: 0.0,
        batch_size: 16,
        epochs: 3,
        target_mode: TargetMode::CotExpAnswer,
        seed: 7,
        max_sequence_length: 8192,
    };
    let metrics = train_sft(&mut model, &dataset, &cfg)?;
    for step in &metrics.steps {
        println!("step {:>2} epoch {} loss {:.4}", step.step, step.epoch, step.loss);
    }
    println!(
        "\nmean target NLL: {:.4} -> {:.4} ({:.1}% reduction)",
        metrics.initial_loss,
        metrics.final_loss,
        100.0 * (1.0 - metrics.final_loss / metrics.initial_loss)
    );
    Ok(())
}
