//! Run the three-stage data-quality filter over synthesized records:
//! label correctness, explanation quality (paired perplexity), and
//! diversity (K-medoids probe set). Prints the count accounting and a
//! few per-record decisions.
//!
//! Run with: cargo run --example filter_pipeline

use groundcheck::filtering::{run_filter_pipeline, Diagnostics, FilterConfig};
use groundcheck::gateway::mock::{HashEmbedder, HashScorer};
use groundcheck::tags::parse_tagged_response;
use groundcheck::types::{LabeledSample, SynthRecord};

fn synth_record(id: &str, gold: u8, predicted: &str) -> SynthRecord {
    let raw = format!(
        "<think>Compared claim {id} with its document clause by clause.</think>\
         <reason>The decisive evidence for {id} is quoted directly from the document.</reason>\
         <answer>{predicted}</answer>"
    );
    SynthRecord {
        sample: LabeledSample::new(
            id,
            format!("Document {id}: the archive records the event in full detail."),
            format!("Claim {id} about the archived event."),
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
    // Two-thirds carry the correct prediction; the rest fail label
    // filtering immediately.
    let records: Vec<SynthRecord> = (0..18)
        .map(|i| {
            let gold = (i % 2) as u8;
            let predicted = if i % 3 == 0 {
                if gold == 1 { "No" } else { "Yes" }
            } else if gold == 1 {
                "Yes"
            } else {
                "No"
            };
            synth_record(&format!("r{i:02}"), gold, predicted)
        })
        .collect();

    let scorer = HashScorer::new(11);
    let embedder = HashEmbedder::new(64);
    let cfg = FilterConfig { k: 4, seed: 0 };
    let (retained, report, decisions) =
        run_filter_pipeline(&records, &scorer, &embedder, &cfg)?;

    println!(
        "input={} removed_by_label={} removed_by_explanation={} removed_by_diversity={} retained={}",
        report.input_count,
        report.removed_by_label,
        report.removed_by_explanation,
        report.removed_by_diversity,
        report.retained,
    );
    assert!(report.partition_holds());

    println!("\nsample decisions:");
    for decision in decisions.iter().take(8) {
        match &decision.diagnostics {
            Diagnostics::Label { predicted, gold, .. } => println!(
                "  {} label: predicted={predicted:?} gold={gold} -> {}",
                decision.record_id,
                if decision.retained { "keep" } else { "drop" }
            ),
            Diagnostics::Explanation { ppl_without, ppl_with } => println!(
                "  {} explanation: ppl {:.3} -> {:.3} with explanation -> {}",
                decision.record_id,
                ppl_without,
                ppl_with,
                if decision.retained { "keep" } else { "drop" }
            ),
            Diagnostics::Diversity { improved_count, k, .. } => println!(
                "  {} diversity: improved {improved_count}/{k} probes -> {}",
                decision.record_id,
                if decision.retained { "keep" } else { "drop" }
            ),
        }
    }
    println!("\nretained ids: {:?}", retained.iter().map(|r| &r.sample.id).collect::<Vec<_>>());
    Ok(())
}
