//! The three-stage data-quality filter, applied in fixed order: label
//! correctness, explanation quality via paired perplexity, and diversity
//! via a K-medoids probe set. Every record receives a decision per stage
//! it reaches, and the report counts partition the input exactly.

pub mod kmedoids;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{embed, score_continuation, Embedder, LanguageModel, LmError};
use crate::prompt::{self, concat_prompt_response};
use crate::tags::{ANSWER_OPEN, REASON_CLOSE, REASON_OPEN, THINK_CLOSE, THINK_OPEN};
use crate::types::SynthRecord;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("corpus has {have} records but the probe set needs {need}")]
    CorpusTooSmall { have: usize, need: usize },
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error("embedding failed: {0}")]
    Embed(#[from] crate::gateway::EmbedError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterStage {
    Label,
    Explanation,
    Diversity,
}

/// One probe's base perplexity and its perplexity conditioned on the
/// candidate demonstration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbePair {
    pub base: f64,
    pub conditioned: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Diagnostics {
    Label {
        predicted: Option<u8>,
        gold: u8,
        missing_prediction: bool,
    },
    Explanation {
        ppl_without: f64,
        ppl_with: f64,
    },
    Diversity {
        probe_pairs: Vec<ProbePair>,
        improved_count: usize,
        k: usize,
    },
}

/// Per-record, per-stage verdict with the numbers that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub record_id: String,
    pub stage: FilterStage,
    pub retained: bool,
    pub diagnostics: Diagnostics,
}

/// Probe set for diversity filtering: the K medoid records and their
/// cached candidate-independent base perplexities.
pub struct ProbeSet {
    pub medoids: Vec<SynthRecord>,
    pub k: usize,
    pub base_perplexities: Vec<f64>,
    pub embedder_id: String,
    /// Positions of the medoids within the corpus they were built from.
    pub medoid_indices: Vec<usize>,
}

/// Count accounting across the whole pipeline. The four buckets always
/// partition `input_count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FilterReport {
    pub input_count: usize,
    pub removed_by_label: usize,
    pub removed_by_explanation: usize,
    pub removed_by_diversity: usize,
    pub retained: usize,
}

impl FilterReport {
    pub fn partition_holds(&self) -> bool {
        self.input_count
            == self.removed_by_label
                + self.removed_by_explanation
                + self.removed_by_diversity
                + self.retained
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Number of probe clusters.
    pub k: usize,
    pub seed: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { k: 10, seed: 0 }
    }
}

/// Retains a record iff its predicted label matches the gold label. A
/// missing prediction cannot match and is removed with a
/// `missing_prediction` diagnostic.
pub fn filter_label(record: &SynthRecord) -> FilterDecision {
    let predicted = record.response.answer_label;
    let gold = record.sample.label;
    let retained = predicted == Some(gold);
    FilterDecision {
        record_id: record.sample.id.clone(),
        stage: FilterStage::Label,
        retained,
        diagnostics: Diagnostics::Label {
            predicted,
            gold,
            missing_prediction: predicted.is_none(),
        },
    }
}

/// Context whose continuation is the gold answer, conditioned on the
/// document, claim, and chain-of-thought only.
pub fn explanation_context_without(record: &SynthRecord) -> String {
    let prompt = prompt::COT_ANSWER
        .render(&[
            ("DOCUMENT", record.sample.doc.as_str()),
            ("CLAIM", record.sample.claim.as_str()),
        ])
        .expect("bindings are total");
    let response_prefix = format!(
        "{THINK_OPEN}{}{THINK_CLOSE}{ANSWER_OPEN}",
        record.response.think
    );
    concat_prompt_response(&prompt, &response_prefix)
}

/// Same context with the explanation spliced in before the answer tag.
pub fn explanation_context_with(record: &SynthRecord) -> String {
    let prompt = prompt::detection_prompt(&record.sample.doc, &record.sample.claim);
    let response_prefix = format!(
        "{THINK_OPEN}{}{THINK_CLOSE}{REASON_OPEN}{}{REASON_CLOSE}{ANSWER_OPEN}",
        record.response.think, record.response.reason
    );
    concat_prompt_response(&prompt, &response_prefix)
}

/// Retains a record iff adding its explanation strictly lowers the
/// scorer's perplexity on the gold answer.
pub fn filter_explanation(
    record: &SynthRecord,
    scorer: &dyn LanguageModel,
) -> Result<FilterDecision, FilterError> {
    let answer = record.sample.gold_answer_text();
    let without =
        score_continuation(scorer, &explanation_context_without(record), answer)?;
    let with = score_continuation(scorer, &explanation_context_with(record), answer)?;
    Ok(FilterDecision {
        record_id: record.sample.id.clone(),
        stage: FilterStage::Explanation,
        retained: with.perplexity < without.perplexity,
        diagnostics: Diagnostics::Explanation {
            ppl_without: without.perplexity,
            ppl_with: with.perplexity,
        },
    })
}

/// Serializes a candidate record as an in-context demonstration: its full
/// detection prompt followed by its canonical tagged response.
pub fn demonstration_text(record: &SynthRecord) -> String {
    let prompt = prompt::detection_prompt(&record.sample.doc, &record.sample.claim);
    concat_prompt_response(&prompt, &record.response.serialize_tagged())
}

/// Context scoring probe `probe`'s gold answer on its own prompt and
/// response prefix.
pub fn probe_base_context(probe: &SynthRecord) -> String {
    let prompt = prompt::detection_prompt(&probe.sample.doc, &probe.sample.claim);
    let response_prefix = format!(
        "{THINK_OPEN}{}{THINK_CLOSE}{REASON_OPEN}{}{REASON_CLOSE}{ANSWER_OPEN}",
        probe.response.think, probe.response.reason
    );
    concat_prompt_response(&prompt, &response_prefix)
}

/// Same context with the candidate spliced in as an in-context
/// demonstration ahead of the probe's response.
pub fn probe_conditioned_context(probe: &SynthRecord, candidate: &SynthRecord) -> String {
    let demo = demonstration_text(candidate);
    let prompt = prompt::DIVERSITY_DEMO
        .render(&[
            ("DOCUMENT", probe.sample.doc.as_str()),
            ("CLAIM", probe.sample.claim.as_str()),
            ("Tested Sample", demo.as_str()),
        ])
        .expect("bindings are total");
    let response_prefix = format!(
        "{THINK_OPEN}{}{THINK_CLOSE}{REASON_OPEN}{}{REASON_CLOSE}{ANSWER_OPEN}",
        probe.response.think, probe.response.reason
    );
    concat_prompt_response(&prompt, &response_prefix)
}

/// Builds the diversity probe set: embeds each (doc, claim) pair, takes
/// the K medoids under cosine distance, and caches each medoid's base
/// perplexity (candidate-independent, so computed once).
pub fn build_probe_set(
    corpus: &[SynthRecord],
    embedder: &dyn Embedder,
    k: usize,
    scorer: &dyn LanguageModel,
    seed: u64,
) -> Result<ProbeSet, FilterError> {
    if k == 0 || corpus.len() < k {
        return Err(FilterError::CorpusTooSmall {
            have: corpus.len(),
            need: k,
        });
    }
    let embeddings: Vec<Vec<f64>> = corpus
        .iter()
        .map(|record| {
            embed(
                embedder,
                &format!("{}\n{}", record.sample.doc, record.sample.claim),
            )
        })
        .collect::<Result<_, _>>()?;
    let clustering = kmedoids::k_medoids(&embeddings, k, seed)?;

    let mut medoids = Vec::with_capacity(k);
    let mut base_perplexities = Vec::with_capacity(k);
    for &idx in &clustering.medoid_indices {
        let probe = corpus[idx].clone();
        let score = score_continuation(
            scorer,
            &probe_base_context(&probe),
            probe.sample.gold_answer_text(),
        )?;
        base_perplexities.push(score.perplexity);
        medoids.push(probe);
    }
    Ok(ProbeSet {
        medoids,
        k,
        base_perplexities,
        embedder_id: embedder.embedder_id().to_string(),
        medoid_indices: clustering.medoid_indices,
    })
}

/// Retains a candidate iff it lowers the perplexity of at least K/2
/// probes when spliced in as a demonstration.
pub fn filter_diversity(
    record: &SynthRecord,
    probes: &ProbeSet,
    scorer: &dyn LanguageModel,
) -> Result<FilterDecision, FilterError> {
    let mut probe_pairs = Vec::with_capacity(probes.k);
    let mut improved_count = 0usize;
    for (probe, &base) in probes.medoids.iter().zip(&probes.base_perplexities) {
        let conditioned = score_continuation(
            scorer,
            &probe_conditioned_context(probe, record),
            probe.sample.gold_answer_text(),
        )?
        .perplexity;
        if conditioned < base {
            improved_count += 1;
        }
        probe_pairs.push(ProbePair { base, conditioned });
    }
    // improved_count >= K/2, kept in integers.
    let retained = 2 * improved_count >= probes.k;
    Ok(FilterDecision {
        record_id: record.sample.id.clone(),
        stage: FilterStage::Diversity,
        retained,
        diagnostics: Diagnostics::Diversity {
            probe_pairs,
            improved_count,
            k: probes.k,
        },
    })
}

/// Runs the stages in order up to and including `through`. The probe set
/// is built once, from the survivors of the explanation stage; when fewer
/// survivors than `cfg.k` remain, the probe count is clamped to them.
pub fn run_filter_pipeline_through(
    records: &[SynthRecord],
    scorer: &dyn LanguageModel,
    embedder: &dyn Embedder,
    cfg: &FilterConfig,
    through: FilterStage,
) -> Result<(Vec<SynthRecord>, FilterReport, Vec<FilterDecision>), FilterError> {
    let mut report = FilterReport {
        input_count: records.len(),
        ..Default::default()
    };
    let mut decisions = Vec::new();

    let mut survivors: Vec<&SynthRecord> = Vec::with_capacity(records.len());
    for record in records {
        let decision = filter_label(record);
        let retained = decision.retained;
        decisions.push(decision);
        if retained {
            survivors.push(record);
        } else {
            report.removed_by_label += 1;
        }
    }

    if through >= FilterStage::Explanation {
        let mut passed = Vec::with_capacity(survivors.len());
        for record in survivors {
            let decision = filter_explanation(record, scorer)?;
            let retained = decision.retained;
            decisions.push(decision);
            if retained {
                passed.push(record);
            } else {
                report.removed_by_explanation += 1;
            }
        }
        survivors = passed;
    }

    if through >= FilterStage::Diversity && !survivors.is_empty() {
        let pool: Vec<SynthRecord> = survivors.iter().map(|r| (*r).clone()).collect();
        let k = cfg.k.min(pool.len()).max(1);
        let probes = build_probe_set(&pool, embedder, k, scorer, cfg.seed)?;
        let mut passed = Vec::with_capacity(survivors.len());
        for record in survivors {
            let decision = filter_diversity(record, &probes, scorer)?;
            let retained = decision.retained;
            decisions.push(decision);
            if retained {
                passed.push(record);
            } else {
                report.removed_by_diversity += 1;
            }
        }
        survivors = passed;
    }

    report.retained = survivors.len();
    debug_assert!(report.partition_holds());
    Ok((
        survivors.into_iter().cloned().collect(),
        report,
        decisions,
    ))
}

/// The full three-stage pipeline.
pub fn run_filter_pipeline(
    records: &[SynthRecord],
    scorer: &dyn LanguageModel,
    embedder: &dyn Embedder,
    cfg: &FilterConfig,
) -> Result<(Vec<SynthRecord>, FilterReport, Vec<FilterDecision>), FilterError> {
    run_filter_pipeline_through(records, scorer, embedder, cfg, FilterStage::Diversity)
}

pub fn write_filter_report(
    path: impl AsRef<Path>,
    report: &FilterReport,
) -> Result<(), FilterError> {
    let json = serde_json::to_string_pretty(report).map_err(std::io::Error::from)?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

/// Writes one decision per line: record_id, stage, retained, diagnostics.
pub fn write_decisions(
    path: impl AsRef<Path>,
    decisions: &[FilterDecision],
) -> Result<(), FilterError> {
    let mut file = std::fs::File::create(path)?;
    for decision in decisions {
        serde_json::to_writer(&mut file, decision).map_err(std::io::Error::from)?;
        file.write_all(b"\n")?;
    }
    Ok(())
}
