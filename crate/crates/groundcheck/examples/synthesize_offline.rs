//! Synthesize explanation-bearing records for a small corpus using the
//! offline oracle transport, then demonstrate crash-safe resume: a
//! second pass over the same output file issues no new requests.
//!
//! Run with: cargo run --example synthesize_offline

use groundcheck::gateway::remote::{ChatClient, OfflineOracleTransport, RemoteClientConfig};
use groundcheck::synthesis::{synthesize_corpus_to_path, SynthesisConfig};
use groundcheck::types::{read_synth_records, LabeledSample};

fn fixture_corpus() -> Vec<LabeledSample> {
    let facts = [
        ("the museum opened in 1902", "the museum opened in 1955"),
        ("the river flows north", "the river flows south"),
        ("the bridge spans 400 meters", "the bridge spans 900 meters"),
    ];
    (0..9)
        .map(|i| {
            let (true_fact, false_fact) = facts[i % facts.len()];
            let label = (i % 2) as u8;
            let doc = format!("Entry {i}: {true_fact}. The annual report confirms it.");
            let claim = format!("Entry {i}: {}", if label == 1 { true_fact } else { false_fact });
            LabeledSample::new(format!("s{i}"), doc, claim, label, "example").unwrap()
        })
        .collect()
}

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let out = dir.path().join("synth.jsonl");
    let samples = fixture_corpus();

    let client_cfg = RemoteClientConfig {
        api_key_env: String::new(),
        ..Default::default()
    };
    let cfg = SynthesisConfig {
        client: client_cfg.clone(),
        ..Default::default()
    };
    let transport = OfflineOracleTransport::new();
    let client = ChatClient::with_transport(client_cfg.clone(), Box::new(transport));

    let report = synthesize_corpus_to_path(&samples, &cfg, &client, &out)?;
    println!(
        "first pass: requested={} succeeded={} parse_failed={} transport_failed={}",
        report.requested, report.succeeded, report.parse_failed, report.transport_failed
    );

    // Resume: everything is already on disk, so nothing is requested.
    let client = ChatClient::with_transport(
        client_cfg,
        Box::new(OfflineOracleTransport::new()),
    );
    let resumed = synthesize_corpus_to_path(&samples, &cfg, &client, &out)?;
    println!("resume pass: requested={}", resumed.requested);

    for record in read_synth_records(&out)?.iter().take(2) {
        println!(
            "\n[{}] predicted={:?} gold={}\n  cot: {}\n  explanation: {}",
            record.sample.id,
            record.response.answer_label,
            record.sample.label,
            record.response.think,
            record.response.reason,
        );
    }
    Ok(())
}
