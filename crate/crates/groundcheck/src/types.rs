//! Domain types shared by every pipeline stage, plus the JSONL corpus
//! formats they are stored in.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::tags::TaggedResponse;

/// One grounding document + claim + binary gold label. The unit of every
/// pipeline: synthesis, filtering, training, and evaluation all consume
/// these.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub id: String,
    /// Grounding document the claim is checked against.
    pub doc: String,
    /// The claim under verification.
    pub claim: String,
    /// 1 = faithful/consistent, 0 = hallucinated.
    pub label: u8,
    /// Originating dataset name.
    pub source: String,
}

impl LabeledSample {
    pub fn new(
        id: impl Into<String>,
        doc: impl Into<String>,
        claim: impl Into<String>,
        label: u8,
        source: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let sample = Self {
            id: id.into(),
            doc: doc.into(),
            claim: claim.into(),
            label,
            source: source.into(),
        };
        sample.validate()?;
        Ok(sample)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.label > 1 {
            return Err(CorpusError::InvalidLabel {
                id: self.id.clone(),
                label: self.label,
            });
        }
        if self.doc.trim().is_empty() {
            return Err(CorpusError::EmptyField {
                id: self.id.clone(),
                field: "doc",
            });
        }
        if self.claim.trim().is_empty() {
            return Err(CorpusError::EmptyField {
                id: self.id.clone(),
                field: "claim",
            });
        }
        Ok(())
    }

    /// Gold answer text under the detection prompt's vocabulary.
    pub fn gold_answer_text(&self) -> &'static str {
        if self.label == 1 {
            "Yes"
        } else {
            "No"
        }
    }
}

/// A labeled sample enriched with a synthesized chain-of-thought,
/// explanation, and predicted label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRecord {
    pub sample: LabeledSample,
    pub response: TaggedResponse,
    /// Verbatim generator output; reparses to `response`.
    pub raw_response: String,
    pub generator_id: String,
}

impl SynthRecord {
    /// Checks the round-trip invariant: `raw_response` parses back to the
    /// stored response.
    pub fn round_trip_stable(&self) -> bool {
        crate::tags::parse_tagged_response(&self.raw_response) == self.response
    }
}

/// Flat on-disk form of a [`SynthRecord`]: the sample keys plus the
/// synthesized fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SynthRecordRow {
    id: String,
    doc: String,
    claim: String,
    label: u8,
    source: String,
    cot: String,
    explanation: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    predicted_label: Option<u8>,
    raw_response: String,
    generator_id: String,
}

impl From<&SynthRecord> for SynthRecordRow {
    fn from(record: &SynthRecord) -> Self {
        Self {
            id: record.sample.id.clone(),
            doc: record.sample.doc.clone(),
            claim: record.sample.claim.clone(),
            label: record.sample.label,
            source: record.sample.source.clone(),
            cot: record.response.think.clone(),
            explanation: record.response.reason.clone(),
            predicted_label: record.response.answer_label,
            raw_response: record.raw_response.clone(),
            generator_id: record.generator_id.clone(),
        }
    }
}

impl SynthRecordRow {
    fn into_record(self) -> SynthRecord {
        let sample = LabeledSample {
            id: self.id,
            doc: self.doc,
            claim: self.claim,
            label: self.label,
            source: self.source,
        };
        // The raw response is authoritative; the flat columns are for
        // human inspection and resume scans.
        let response = crate::tags::parse_tagged_response(&self.raw_response);
        SynthRecord {
            sample,
            response,
            raw_response: self.raw_response,
            generator_id: self.generator_id,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("sample {id}: label {label} outside {{0,1}}")]
    InvalidLabel { id: String, label: u8 },
    #[error("sample {id}: {field} is empty after trimming")]
    EmptyField { id: String, field: &'static str },
    #[error("duplicate sample id {id}")]
    DuplicateId { id: String },
    #[error("line {line}: {source}")]
    Malformed {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Reads a corpus file: UTF-8 JSONL, one [`LabeledSample`] per line.
/// Validates per-sample invariants and id uniqueness.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<LabeledSample>, CorpusError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: LabeledSample = serde_json::from_str(&line)
            .map_err(|source| CorpusError::Malformed { line: idx + 1, source })?;
        sample.validate()?;
        if !seen.insert(sample.id.clone()) {
            return Err(CorpusError::DuplicateId { id: sample.id });
        }
        samples.push(sample);
    }
    Ok(samples)
}

pub fn write_corpus(
    path: impl AsRef<Path>,
    samples: &[LabeledSample],
) -> Result<(), CorpusError> {
    let mut file = std::fs::File::create(path)?;
    for sample in samples {
        serde_json::to_writer(&mut file, sample).map_err(std::io::Error::from)?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_synth_records(path: impl AsRef<Path>) -> Result<Vec<SynthRecord>, CorpusError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: SynthRecordRow = serde_json::from_str(&line)
            .map_err(|source| CorpusError::Malformed { line: idx + 1, source })?;
        if !seen.insert(row.id.clone()) {
            return Err(CorpusError::DuplicateId { id: row.id });
        }
        records.push(row.into_record());
    }
    Ok(records)
}

pub fn write_synth_records(
    path: impl AsRef<Path>,
    records: &[SynthRecord],
) -> Result<(), CorpusError> {
    let mut file = std::fs::File::create(path)?;
    for record in records {
        append_synth_record(&mut file, record)?;
    }
    Ok(())
}

/// Appends one record to an open sink. Synthesis uses this per success so
/// an interrupted run can resume from the ids already on disk.
pub fn append_synth_record(
    sink: &mut impl Write,
    record: &SynthRecord,
) -> Result<(), CorpusError> {
    let row = SynthRecordRow::from(record);
    serde_json::to_writer(&mut *sink, &row).map_err(std::io::Error::from)?;
    sink.write_all(b"\n")?;
    Ok(())
}

/// Scans an existing synthesis output for the ids already present.
/// Missing file means an empty skip-set.
pub fn scan_synthesized_ids(path: impl AsRef<Path>) -> Result<HashSet<String>, CorpusError> {
    match std::fs::File::open(path) {
        Ok(file) => {
            let reader = std::io::BufReader::new(file);
            let mut ids = HashSet::new();
            for (idx, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let value: serde_json::Value = serde_json::from_str(&line)
                    .map_err(|source| CorpusError::Malformed { line: idx + 1, source })?;
                if let Some(id) = value.get("id").and_then(|v| v.as_str()) {
                    ids.insert(id.to_string());
                }
            }
            Ok(ids)
        }
        Err(err) if err.kind() == std::io::ErrorKind::NotFound => Ok(HashSet::new()),
        Err(err) => Err(err.into()),
    }
}
