//! Multi-task evaluation with macro-F1: builds two fixture tasks, runs a
//! deterministic detector twice over them, and prints the per-task
//! scores with the cross-task mean and standard deviation.
//!
//! Run with: cargo run --example evaluate_tasks

use groundcheck::eval::{evaluate_suite, render_results_table, TaskDataset};
use groundcheck::gateway::mock::SubstringJudgeLm;
use groundcheck::types::LabeledSample;

fn task(name: &str, n: usize, noise_every: usize) -> TaskDataset {
    // Gold labels equal substring containment except every
    // `noise_every`-th sample, which the substring detector gets wrong.
    let samples = (0..n)
        .map(|i| {
            let mut label = (i % 2) as u8;
            let doc = format!("case {i}: the shipment left the port on friday evening");
            let claim = if label == 1 {
                format!("case {i}: the shipment left the port")
            } else {
                format!("case {i}: the shipment never left the port")
            };
            if noise_every > 0 && i % noise_every == 0 {
                label = 1 - label;
            }
            LabeledSample::new(format!("{name}-{i}"), doc, claim, label, name).unwrap()
        })
        .collect();
    TaskDataset {
        name: name.to_string(),
        samples,
    }
}

fn main() -> anyhow::Result<()> {
    let tasks = vec![
        task("clean_short", 20, 0),
        task("clean_long", 30, 0),
        task("noisy_tenth", 20, 10),
        task("noisy_fifth", 20, 5),
    ];
    let result = evaluate_suite(&SubstringJudgeLm, &tasks, 2, 0.0)?;
    print!("{}", render_results_table(&result));
    println!();
    for (name, score) in &result.per_task {
        println!("{name:<14} macro-F1 {score:.2}");
    }
    println!("mean {:.2}  std {:.2}  runs {}", result.mean, result.std, result.runs);
    Ok(())
}
