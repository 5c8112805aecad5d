//! Training-data synthesis: query a remote reasoning model with the
//! synthesis prompt, parse the tagged output, and retry malformed
//! responses with a fresh sample. Corpus synthesis appends each success
//! to disk so an interrupted run resumes from the ids already written.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::remote::{ChatClient, ChatError, RemoteClientConfig};
use crate::gateway::GenerationParams;
use crate::prompt;
use crate::tags::parse_tagged_response;
use crate::types::{append_synth_record, scan_synthesized_ids, LabeledSample, SynthRecord};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    pub client: RemoteClientConfig,
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub max_attempts_per_sample: u32,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            client: RemoteClientConfig::default(),
            temperature: 1.0,
            max_new_tokens: 2048,
            max_attempts_per_sample: 3,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.temperature < 0.0 {
            return Err("synthesis temperature must be >= 0".into());
        }
        if self.max_attempts_per_sample < 1 {
            return Err("max_attempts_per_sample must be >= 1".into());
        }
        self.client.validate()
    }
}

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("sample {id}: no well-formed labeled response after {attempts} attempts")]
    ParseFailure { id: String, attempts: u32 },
    #[error("sample {id}: transport failure: {source}")]
    Transport {
        id: String,
        #[source]
        source: ChatError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Parse,
    Transport,
}

/// Per-run accounting. `requested` counts the samples actually attempted
/// (resumed ids are skipped before counting) and always equals
/// `succeeded + parse_failed + transport_failed`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub requested: usize,
    pub succeeded: usize,
    pub parse_failed: usize,
    pub transport_failed: usize,
    pub failures: Vec<(String, String)>,
}

impl SynthesisReport {
    pub fn partition_holds(&self) -> bool {
        self.requested == self.succeeded + self.parse_failed + self.transport_failed
    }
}

/// Synthesizes one record: renders the synthesis prompt, samples the
/// remote model, and parses the tags. Malformed or unlabeled responses
/// are retried with a fresh sample up to `max_attempts_per_sample`.
pub fn synthesize_record(
    sample: &LabeledSample,
    cfg: &SynthesisConfig,
    client: &ChatClient,
) -> Result<SynthRecord, SynthesisError> {
    let rendered = prompt::SYNTHESIS
        .render(&[
            ("DOCUMENT", sample.doc.as_str()),
            ("CLAIM", sample.claim.as_str()),
        ])
        .expect("bindings are total");
    let params = GenerationParams {
        temperature: cfg.temperature,
        max_new_tokens: cfg.max_new_tokens,
        seed: None,
        stop_sequences: Vec::new(),
    };
    for _ in 0..cfg.max_attempts_per_sample {
        let raw = client
            .complete(&rendered, &params)
            .map_err(|source| SynthesisError::Transport {
                id: sample.id.clone(),
                source,
            })?;
        let response = parse_tagged_response(&raw);
        if response.well_formed && response.answer_label.is_some() {
            return Ok(SynthRecord {
                sample: sample.clone(),
                response,
                raw_response: raw,
                generator_id: client.config().model_name.clone(),
            });
        }
    }
    Err(SynthesisError::ParseFailure {
        id: sample.id.clone(),
        attempts: cfg.max_attempts_per_sample,
    })
}

/// Fans a batch out over scoped threads; the client's semaphore bounds
/// the requests actually in flight. Results come back in input order.
fn synthesize_batch(
    batch: &[&LabeledSample],
    cfg: &SynthesisConfig,
    client: &ChatClient,
) -> Vec<Result<SynthRecord, SynthesisError>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = batch
            .iter()
            .map(|sample| scope.spawn(move || synthesize_record(sample, cfg, client)))
            .collect();
        handles
            .into_iter()
            .map(|handle| handle.join().expect("synthesis worker panicked"))
            .collect()
    })
}

fn record_outcome(
    outcome: Result<SynthRecord, SynthesisError>,
    sample_id: &str,
    report: &mut SynthesisReport,
) -> Option<SynthRecord> {
    match outcome {
        Ok(record) => {
            debug_assert!(record.round_trip_stable());
            report.succeeded += 1;
            Some(record)
        }
        Err(err) => {
            match err {
                SynthesisError::ParseFailure { .. } => report.parse_failed += 1,
                SynthesisError::Transport { .. } => report.transport_failed += 1,
            }
            report.failures.push((sample_id.to_string(), err.to_string()));
            None
        }
    }
}

/// Synthesizes a corpus, skipping ids in `skip`. Successes keep the input
/// order; failures land in the report.
pub fn synthesize_corpus(
    samples: &[LabeledSample],
    cfg: &SynthesisConfig,
    client: &ChatClient,
    skip: &HashSet<String>,
) -> (Vec<SynthRecord>, SynthesisReport) {
    let pending: Vec<&LabeledSample> =
        samples.iter().filter(|s| !skip.contains(&s.id)).collect();
    let mut records = Vec::new();
    let mut report = SynthesisReport::default();
    let chunk = cfg.client.max_concurrency.max(1);
    for batch in pending.chunks(chunk) {
        report.requested += batch.len();
        for (outcome, sample) in synthesize_batch(batch, cfg, client).into_iter().zip(batch) {
            if let Some(record) = record_outcome(outcome, &sample.id, &mut report) {
                records.push(record);
            }
        }
    }
    debug_assert!(report.partition_holds());
    (records, report)
}

/// Crash-safe corpus synthesis: scans `out_path` for already-synthesized
/// ids, skips them, and appends successes batch by batch in input order.
pub fn synthesize_corpus_to_path(
    samples: &[LabeledSample],
    cfg: &SynthesisConfig,
    client: &ChatClient,
    out_path: impl AsRef<Path>,
) -> Result<SynthesisReport, crate::types::CorpusError> {
    let out_path = out_path.as_ref();
    let skip = scan_synthesized_ids(out_path)?;
    let mut sink = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(out_path)?;
    let pending: Vec<&LabeledSample> =
        samples.iter().filter(|s| !skip.contains(&s.id)).collect();
    let mut report = SynthesisReport::default();
    let chunk = cfg.client.max_concurrency.max(1);
    for batch in pending.chunks(chunk) {
        report.requested += batch.len();
        for (outcome, sample) in synthesize_batch(batch, cfg, client).into_iter().zip(batch) {
            if let Some(record) = record_outcome(outcome, &sample.id, &mut report) {
                append_synth_record(&mut sink, &record)?;
            }
        }
    }
    Ok(report)
}

pub fn write_synthesis_report(
    path: impl AsRef<Path>,
    report: &SynthesisReport,
) -> Result<(), std::io::Error> {
    let json = serde_json::to_string_pretty(report)?;
    std::fs::write(path, json + "\n")
}
