//! Multi-task evaluation: detection inference with tagged parsing,
//! macro-F1 per task with cross-task mean and standard deviation, claim
//! decontextualization and decomposition preprocessors, and the
//! LLM-as-judge explanation scorer.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::remote::{ChatClient, ChatError};
use crate::gateway::{GenerationParams, LanguageModel, LmError};
use crate::prompt;
use crate::tags::{parse_tagged_response, TaggedResponse};
use crate::types::{read_corpus, CorpusError, LabeledSample};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("predictions and golds differ in length: {predictions} vs {golds}")]
    LengthMismatch { predictions: usize, golds: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("could not parse judge output: {0}")]
    JudgeParseFailure(String),
    #[error("judge score {field} = {value} outside 1..=5")]
    RangeViolation { field: &'static str, value: i64 },
    #[error(transparent)]
    Chat(#[from] ChatError),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One evaluation task: a named set of labeled samples.
#[derive(Debug, Clone)]
pub struct TaskDataset {
    pub name: String,
    pub samples: Vec<LabeledSample>,
}

impl TaskDataset {
    /// Single-class tasks are allowed but worth flagging in logs.
    pub fn is_single_class(&self) -> bool {
        let first = match self.samples.first() {
            Some(sample) => sample.label,
            None => return false,
        };
        self.samples.iter().all(|s| s.label == first)
    }
}

/// Loads every `<task-name>.jsonl` in a directory as one task each.
pub fn load_task_dir(dir: impl AsRef<Path>) -> Result<Vec<TaskDataset>, EvalError> {
    let mut tasks = Vec::new();
    let mut entries: Vec<_> = std::fs::read_dir(dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().map(|e| e == "jsonl").unwrap_or(false))
        .collect();
    entries.sort();
    for path in entries {
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("task")
            .to_string();
        let samples = read_corpus(&path)?;
        if samples.is_empty() {
            continue;
        }
        tasks.push(TaskDataset { name, samples });
    }
    Ok(tasks)
}

/// Per-task macro-F1 plus the cross-task mean and population standard
/// deviation, in [0, 100].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub per_task: BTreeMap<String, f64>,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

impl EvalResult {
    pub fn from_per_task(per_task: BTreeMap<String, f64>, runs: usize) -> Self {
        let n = per_task.len() as f64;
        let mean = per_task.values().sum::<f64>() / n;
        let variance = per_task.values().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            per_task,
            mean,
            std: variance.sqrt(),
            runs,
        }
    }
}

/// Renders the detection prompt for a sample, generates, and parses.
/// Returns the predicted label (absent when no parseable answer) and the
/// full parse. Deterministic for a fixed seed; temperature 0 is greedy.
pub fn predict(
    model: &dyn LanguageModel,
    sample: &LabeledSample,
    temperature: f64,
    seed: u64,
) -> Result<(Option<u8>, TaggedResponse), EvalError> {
    let rendered = prompt::detection_prompt(&sample.doc, &sample.claim);
    let params = GenerationParams {
        temperature,
        max_new_tokens: 512,
        seed: Some(seed),
        stop_sequences: vec![crate::tags::ANSWER_CLOSE.to_string()],
    };
    let raw = model.generate(&rendered, &params)?;
    let parsed = parse_tagged_response(&raw);
    Ok((parsed.answer_label, parsed))
}

/// Unweighted mean of per-class F1 over the fixed classes {0, 1}, scaled
/// to [0, 100]. An absent prediction counts against both precision and
/// recall: it is scored as the opposite of its gold label. A class with
/// no predicted and no actual positives contributes F1 = 0.
pub fn macro_f1(predictions: &[Option<u8>], golds: &[u8]) -> Result<f64, EvalError> {
    if predictions.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            golds: golds.len(),
        });
    }
    if golds.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut f1_sum = 0.0;
    for class in [0u8, 1u8] {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for (pred, &gold) in predictions.iter().zip(golds) {
            let effective = pred.unwrap_or(1 - gold);
            if effective == class && gold == class {
                tp += 1;
            } else if effective == class {
                fp += 1;
            } else if gold == class {
                fn_ += 1;
            }
        }
        let denom = 2 * tp + fp + fn_;
        if denom > 0 {
            f1_sum += 2.0 * tp as f64 / denom as f64;
        }
    }
    Ok(f1_sum / 2.0 * 100.0)
}

fn mix(a: u64, b: u64) -> u64 {
    (a ^ b.wrapping_add(0x9e3779b97f4a7c15))
        .wrapping_mul(0x100000001b3)
}

fn name_hash(name: &str) -> u64 {
    name.bytes().fold(0xcbf29ce484222325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100000001b3)
    })
}

/// Evaluates every task `runs` times and averages each task's macro-F1
/// over the runs; the cross-task mean and std aggregate the averages.
pub fn evaluate_suite(
    model: &dyn LanguageModel,
    tasks: &[TaskDataset],
    runs: usize,
    temperature: f64,
) -> Result<EvalResult, EvalError> {
    if runs == 0 || tasks.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut per_task = BTreeMap::new();
    for task in tasks {
        let golds: Vec<u8> = task.samples.iter().map(|s| s.label).collect();
        let mut run_scores = Vec::with_capacity(runs);
        for run in 0..runs {
            let mut predictions = Vec::with_capacity(task.samples.len());
            for (idx, sample) in task.samples.iter().enumerate() {
                let seed = mix(mix(run as u64, name_hash(&task.name)), idx as u64);
                let (label, _) = predict(model, sample, temperature, seed)?;
                predictions.push(label);
            }
            run_scores.push(macro_f1(&predictions, &golds)?);
        }
        let score = run_scores.iter().sum::<f64>() / runs as f64;
        per_task.insert(task.name.clone(), score);
    }
    Ok(EvalResult::from_per_task(per_task, runs))
}

/// Plain-text results table: one column per task plus Std and Avg.
pub fn render_results_table(result: &EvalResult) -> String {
    let mut header: Vec<String> = result.per_task.keys().cloned().collect();
    header.push("Std".to_string());
    header.push("Avg".to_string());
    let mut values: Vec<String> = result
        .per_task
        .values()
        .map(|v| format!("{v:.1}"))
        .collect();
    values.push(format!("{:.1}", result.std));
    values.push(format!("{:.1}", result.mean));
    let widths: Vec<usize> = header
        .iter()
        .zip(&values)
        .map(|(h, v)| h.len().max(v.len()))
        .collect();
    let head = header
        .iter()
        .zip(&widths)
        .map(|(h, w)| format!("{h:>w$}"))
        .collect::<Vec<_>>()
        .join("  ");
    let row = values
        .iter()
        .zip(&widths)
        .map(|(v, w)| format!("{v:>w$}"))
        .collect::<Vec<_>>()
        .join("  ");
    format!("{head}\n{row}\n")
}

fn extract_json_object(text: &str) -> Option<serde_json::Value> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    serde_json::from_str(&text[start..=end]).ok()
}

fn chat_params(max_new_tokens: usize) -> GenerationParams {
    GenerationParams {
        temperature: 0.0,
        max_new_tokens,
        seed: Some(0),
        stop_sequences: Vec::new(),
    }
}

/// Asks the remote model whether `claim` stands alone without `context`.
/// Returns (standalone, rewritten): the rewrite is present exactly when
/// the claim was judged context-dependent. One retry on malformed JSON.
pub fn decontextualize_claim(
    claim: &str,
    context: &str,
    client: &ChatClient,
) -> Result<(bool, Option<String>), EvalError> {
    if claim.trim().is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let rendered = prompt::DECONTEXTUALIZATION
        .render(&[("CONTEXT", context), ("CLAIM", claim)])
        .expect("bindings are total");
    let mut last_failure = String::new();
    for _ in 0..2 {
        let reply = client.complete(&rendered, &chat_params(512))?;
        let Some(value) = extract_json_object(&reply) else {
            last_failure = format!("no JSON object in {reply:?}");
            continue;
        };
        let Some(label) = value.get("label").and_then(|v| v.as_str()) else {
            last_failure = format!("missing label in {reply:?}");
            continue;
        };
        return match label.to_ascii_lowercase().as_str() {
            "yes" => Ok((true, None)),
            "no" => {
                let rewritten = value
                    .get("decontext")
                    .and_then(|v| v.as_str())
                    .unwrap_or(claim)
                    .to_string();
                Ok((false, Some(rewritten)))
            }
            other => Err(EvalError::JudgeParseFailure(format!(
                "label {other:?} is neither yes nor no"
            ))),
        };
    }
    Err(EvalError::JudgeParseFailure(last_failure))
}

/// Caps the decomposition fan-out; typical claims split into 2-4 facts.
pub const MAX_ATOMIC_FACTS: usize = 8;

/// Decomposes a claim into atomic facts via the remote model, parsing the
/// bulleted fact lines.
pub fn decompose_claim(claim: &str, client: &ChatClient) -> Result<Vec<String>, EvalError> {
    if claim.trim().is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let rendered = prompt::DECOMPOSITION
        .render(&[("SENTENCE", claim)])
        .expect("bindings are total");
    let reply = client.complete(&rendered, &chat_params(512))?;
    let facts: Vec<String> = reply
        .lines()
        .filter_map(|line| line.trim().strip_prefix("- "))
        .map(|fact| fact.trim().to_string())
        .filter(|fact| !fact.is_empty())
        .take(MAX_ATOMIC_FACTS)
        .collect();
    if facts.is_empty() {
        return Err(EvalError::JudgeParseFailure(format!(
            "no fact lines in {reply:?}"
        )));
    }
    Ok(facts)
}

/// A claim is supported iff every atomic fact is supported.
pub fn aggregate_atomic_verdicts(verdicts: &[u8]) -> Result<u8, EvalError> {
    if verdicts.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    debug_assert!(verdicts.iter().all(|v| *v <= 1));
    Ok(verdicts.iter().all(|&v| v == 1) as u8)
}

/// Three 1-5 ratings of one explanation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeScores {
    pub readability: u8,
    pub helpfulness: u8,
    pub informativeness: u8,
}

fn score_field(value: &serde_json::Value, field: &'static str) -> Result<u8, EvalError> {
    let raw = value
        .get(field)
        .and_then(|v| v.as_i64())
        .ok_or_else(|| EvalError::JudgeParseFailure(format!("missing field {field}")))?;
    if !(1..=5).contains(&raw) {
        return Err(EvalError::RangeViolation { field, value: raw });
    }
    Ok(raw as u8)
}

/// Scores one explanation with the judge prompt; validates the JSON
/// reply's ranges. One retry on malformed JSON.
pub fn judge_explanation(
    task_instruction: &str,
    explanation: &str,
    client: &ChatClient,
) -> Result<JudgeScores, EvalError> {
    if task_instruction.trim().is_empty() || explanation.trim().is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let rendered = prompt::JUDGE
        .render(&[
            ("Task Instruction", task_instruction),
            ("Explanation_Text", explanation),
        ])
        .expect("bindings are total");
    let mut last_failure = String::new();
    for _ in 0..2 {
        let reply = client.complete(&rendered, &chat_params(128))?;
        match extract_json_object(&reply) {
            Some(value) => {
                return Ok(JudgeScores {
                    readability: score_field(&value, "readability")?,
                    helpfulness: score_field(&value, "helpfulness")?,
                    informativeness: score_field(&value, "informativeness")?,
                });
            }
            None => last_failure = format!("no JSON object in {reply:?}"),
        }
    }
    Err(EvalError::JudgeParseFailure(last_failure))
}

/// Default cutoff: a dimension counts as satisfied at a score of 4 or 5.
pub const JUDGE_SCORE_THRESHOLD: u8 = 4;

/// Per dimension, the percentage of explanations scoring at or above
/// `threshold`, plus the three-dimension average under the key
/// "average".
pub fn explainability_summary_with_threshold(
    scores: &[JudgeScores],
    threshold: u8,
) -> Result<BTreeMap<String, f64>, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = scores.len() as f64;
    let pct = |count: usize| count as f64 / n * 100.0;
    let readability = pct(scores.iter().filter(|s| s.readability >= threshold).count());
    let helpfulness = pct(scores.iter().filter(|s| s.helpfulness >= threshold).count());
    let informativeness = pct(
        scores
            .iter()
            .filter(|s| s.informativeness >= threshold)
            .count(),
    );
    let mut summary = BTreeMap::new();
    summary.insert("readability".to_string(), readability);
    summary.insert("helpfulness".to_string(), helpfulness);
    summary.insert("informativeness".to_string(), informativeness);
    summary.insert(
        "average".to_string(),
        (readability + helpfulness + informativeness) / 3.0,
    );
    Ok(summary)
}

pub fn explainability_summary(
    scores: &[JudgeScores],
) -> Result<BTreeMap<String, f64>, EvalError> {
    explainability_summary_with_threshold(scores, JUDGE_SCORE_THRESHOLD)
}

/// Outcome of judging one task's correctly-predicted samples.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct JudgeRunSummary {
    pub predicted: usize,
    pub correct: usize,
    pub judged: usize,
    pub scores: Vec<JudgeScores>,
}

/// Judges only the explanations of samples the model predicted
/// correctly: predicts each sample, keeps the correct ones, and sends
/// each kept explanation to the judge with the rendered detection prompt
/// as the task instruction.
pub fn judge_correct_predictions(
    model: &dyn LanguageModel,
    samples: &[LabeledSample],
    temperature: f64,
    client: &ChatClient,
) -> Result<JudgeRunSummary, EvalError> {
    let mut summary = JudgeRunSummary::default();
    for (idx, sample) in samples.iter().enumerate() {
        summary.predicted += 1;
        let (label, parsed) = predict(model, sample, temperature, idx as u64)?;
        if label != Some(sample.label) {
            continue;
        }
        summary.correct += 1;
        if parsed.reason.trim().is_empty() {
            continue;
        }
        let instruction = prompt::detection_prompt(&sample.doc, &sample.claim);
        summary
            .scores
            .push(judge_explanation(&instruction, &parsed.reason, client)?);
        summary.judged += 1;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::mock::SubstringJudgeLm;
    use crate::gateway::remote::{
        ChatClient, MockTransport, OfflineOracleTransport, RemoteClientConfig,
    };
    use proptest::prelude::*;

    fn offline_client() -> ChatClient {
        ChatClient::with_transport(
            RemoteClientConfig {
                api_key_env: String::new(),
                backoff_base: 0.0,
                ..Default::default()
            },
            Box::new(OfflineOracleTransport::new()),
        )
    }

    fn scripted_client(replies: Vec<&str>) -> ChatClient {
        ChatClient::with_transport(
            RemoteClientConfig {
                api_key_env: String::new(),
                backoff_base: 0.0,
                max_retries: 0,
                ..Default::default()
            },
            Box::new(MockTransport::new(
                replies.into_iter().map(|r| Ok(r.to_string())).collect(),
            )),
        )
    }

    #[test]
    fn hand_computed_macro_f1_fixture() {
        let golds = vec![1, 1, 0, 0];
        let preds = vec![Some(1), Some(0), Some(0), Some(0)];
        let score = macro_f1(&preds, &golds).unwrap();
        // class 1: F1 = 2/3; class 0: F1 = 0.8; macro = 73.33.
        assert!((score - 73.333333333).abs() < 1e-6);
    }

    #[test]
    fn perfect_predictions_score_100() {
        let golds = vec![1, 0, 1, 0];
        let preds: Vec<Option<u8>> = golds.iter().map(|&g| Some(g)).collect();
        assert_eq!(macro_f1(&preds, &golds).unwrap(), 100.0);
    }

    #[test]
    fn absent_predictions_count_as_wrong() {
        let golds = vec![1, 0];
        let all_absent = vec![None, None];
        assert_eq!(macro_f1(&all_absent, &golds).unwrap(), 0.0);
    }

    #[test]
    fn errors_on_mismatch_and_empty() {
        assert!(matches!(
            macro_f1(&[Some(1)], &[1, 0]),
            Err(EvalError::LengthMismatch { .. })
        ));
        assert!(matches!(macro_f1(&[], &[]), Err(EvalError::EmptyInput)));
    }

    /// Independent confusion-matrix oracle over explicit index sets.
    fn brute_force_macro_f1(predictions: &[Option<u8>], golds: &[u8]) -> f64 {
        let effective: Vec<u8> = predictions
            .iter()
            .zip(golds)
            .map(|(p, &g)| p.unwrap_or(1 - g))
            .collect();
        let mut total = 0.0;
        for class in [0u8, 1u8] {
            let predicted: Vec<usize> = (0..effective.len())
                .filter(|&i| effective[i] == class)
                .collect();
            let actual: Vec<usize> =
                (0..golds.len()).filter(|&i| golds[i] == class).collect();
            let tp = predicted.iter().filter(|i| actual.contains(i)).count() as f64;
            let precision = if predicted.is_empty() {
                0.0
            } else {
                tp / predicted.len() as f64
            };
            let recall = if actual.is_empty() {
                0.0
            } else {
                tp / actual.len() as f64
            };
            if precision + recall > 0.0 {
                total += 2.0 * precision * recall / (precision + recall);
            }
        }
        total / 2.0 * 100.0
    }

    proptest! {
        #[test]
        fn macro_f1_matches_confusion_matrix_oracle(
            rows in proptest::collection::vec((0u8..2, proptest::option::of(0u8..2)), 1..60)
        ) {
            let golds: Vec<u8> = rows.iter().map(|(g, _)| *g).collect();
            let preds: Vec<Option<u8>> = rows.iter().map(|(_, p)| *p).collect();
            let ours = macro_f1(&preds, &golds).unwrap();
            let oracle = brute_force_macro_f1(&preds, &golds);
            prop_assert!((ours - oracle).abs() < 1e-9);
        }

        #[test]
        fn macro_f1_is_label_permutation_symmetric(
            rows in proptest::collection::vec((0u8..2, proptest::option::of(0u8..2)), 1..60)
        ) {
            let golds: Vec<u8> = rows.iter().map(|(g, _)| *g).collect();
            let preds: Vec<Option<u8>> = rows.iter().map(|(_, p)| *p).collect();
            let flipped_golds: Vec<u8> = golds.iter().map(|g| 1 - g).collect();
            let flipped_preds: Vec<Option<u8>> =
                preds.iter().map(|p| p.map(|v| 1 - v)).collect();
            let a = macro_f1(&preds, &golds).unwrap();
            let b = macro_f1(&flipped_preds, &flipped_golds).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    fn substring_task(name: &str, n: usize) -> TaskDataset {
        // Gold label equals substring containment, so the substring judge
        // is always correct on these.
        let samples = (0..n)
            .map(|i| {
                let label = (i % 2) as u8;
                let doc = format!("entry {i} says the sky is blue today");
                let claim = if label == 1 {
                    format!("entry {i} says the sky is blue")
                } else {
                    format!("entry {i} says the sky is green")
                };
                LabeledSample::new(format!("{name}-{i}"), doc, claim, label, name).unwrap()
            })
            .collect();
        TaskDataset {
            name: name.to_string(),
            samples,
        }
    }

    #[test]
    fn always_correct_model_scores_100_with_zero_std() {
        let tasks = vec![substring_task("alpha", 6), substring_task("beta", 8)];
        let result = evaluate_suite(&SubstringJudgeLm, &tasks, 2, 0.0).unwrap();
        assert_eq!(result.per_task.len(), 2);
        assert!(result.per_task.values().all(|&v| v == 100.0));
        assert_eq!(result.mean, 100.0);
        assert_eq!(result.std, 0.0);
        assert_eq!(result.runs, 2);
    }

    #[test]
    fn deterministic_model_gives_identical_runs() {
        let tasks = vec![substring_task("alpha", 6)];
        let one = evaluate_suite(&SubstringJudgeLm, &tasks, 1, 0.0).unwrap();
        let two = evaluate_suite(&SubstringJudgeLm, &tasks, 2, 0.0).unwrap();
        assert_eq!(one.per_task["alpha"], two.per_task["alpha"]);
    }

    #[test]
    fn predict_parses_labels_and_is_seed_deterministic() {
        let task = substring_task("p", 2);
        let (label, parsed) = predict(&SubstringJudgeLm, &task.samples[1], 0.0, 3).unwrap();
        assert_eq!(label, Some(task.samples[1].label));
        assert!(parsed.well_formed);

        // Sampled generation repeats exactly under a fixed seed.
        let tiny = crate::gateway::tiny::TinyLm::new(Default::default(), 9);
        let (a, pa) = predict(&tiny, &task.samples[0], 0.7, 42).unwrap();
        let (b, pb) = predict(&tiny, &task.samples[0], 0.7, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(pa, pb);
    }

    #[test]
    fn suite_aggregation_matches_hand_arithmetic() {
        let scores = [
            84.9, 79.0, 89.4, 79.6, 92.4, 92.1, 86.8, 92.2, 85.1, 87.2, 85.6, 82.9,
        ];
        let per_task: BTreeMap<String, f64> = scores
            .iter()
            .enumerate()
            .map(|(i, &s)| (format!("task{i:02}"), s))
            .collect();
        let result = EvalResult::from_per_task(per_task, 2);
        let mean = scores.iter().sum::<f64>() / 12.0;
        let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / 12.0;
        assert!((result.mean - mean).abs() < 1e-9);
        assert!((result.std - var.sqrt()).abs() < 1e-9);

        let table = render_results_table(&result);
        assert!(table.contains("Std"));
        assert!(table.contains("Avg"));
        assert_eq!(table.lines().count(), 2);
    }

    #[test]
    fn aggregate_verdicts_is_the_and_fold() {
        assert_eq!(aggregate_atomic_verdicts(&[1, 1, 1]).unwrap(), 1);
        assert_eq!(aggregate_atomic_verdicts(&[1, 0, 1]).unwrap(), 0);
        assert_eq!(aggregate_atomic_verdicts(&[0]).unwrap(), 0);
        assert!(matches!(
            aggregate_atomic_verdicts(&[]),
            Err(EvalError::EmptyInput)
        ));
        // Exhaustive up to length 6 against the logical AND.
        for len in 1..=6usize {
            for bits in 0..(1u32 << len) {
                let verdicts: Vec<u8> =
                    (0..len).map(|i| ((bits >> i) & 1) as u8).collect();
                let expected = verdicts.iter().all(|&v| v == 1) as u8;
                assert_eq!(aggregate_atomic_verdicts(&verdicts).unwrap(), expected);
            }
        }
    }

    #[test]
    fn decontextualization_parses_both_labels() {
        let client = scripted_client(vec![r#"{"label": "yes", "decontext": "NA"}"#]);
        let (standalone, rewritten) =
            decontextualize_claim("The idea spread quickly.", "ctx", &client).unwrap();
        assert!(standalone);
        assert!(rewritten.is_none());

        let client = scripted_client(vec![
            r#"{"label": "no", "decontext": "Poetry can provide an easy way for children to remember a lesson or value."}"#,
        ]);
        let (standalone, rewritten) = decontextualize_claim(
            "It can also provide an easy way for children to remember a lesson or value.",
            "There are many reasons why poetry is important for children.",
            &client,
        )
        .unwrap();
        assert!(!standalone);
        assert_eq!(
            rewritten.unwrap(),
            "Poetry can provide an easy way for children to remember a lesson or value."
        );
    }

    #[test]
    fn decontextualization_retries_once_then_fails() {
        let client = scripted_client(vec!["not json", "still not json"]);
        assert!(matches!(
            decontextualize_claim("claim", "ctx", &client),
            Err(EvalError::JudgeParseFailure(_))
        ));
    }

    #[test]
    fn decomposition_parses_fact_lines() {
        let client = scripted_client(vec![
            "- Lord Steven Regal won the World Television Championship.\n\n- The Nasty Boys won the World Tag Team Championship.",
        ]);
        let facts = decompose_claim(
            "Other title changes included Lord Steven Regal and The Nasty Boys winning the World Television Championship and the World Tag Team Championship respectively.",
            &client,
        )
        .unwrap();
        assert_eq!(
            facts,
            vec![
                "Lord Steven Regal won the World Television Championship.",
                "The Nasty Boys won the World Tag Team Championship.",
            ]
        );
    }

    #[test]
    fn decomposition_rejects_empty_output_and_caps_fanout() {
        let client = scripted_client(vec![""]);
        assert!(matches!(
            decompose_claim("claim", &client),
            Err(EvalError::JudgeParseFailure(_))
        ));

        let many: String = (0..20).map(|i| format!("- fact {i}\n")).collect();
        let client = scripted_client(vec![many.as_str()]);
        let facts = decompose_claim("claim", &client).unwrap();
        assert_eq!(facts.len(), MAX_ATOMIC_FACTS);
    }

    #[test]
    fn judge_parses_scores_and_enforces_ranges() {
        let client = scripted_client(vec![
            r#"{"readability": 5, "helpfulness": 4, "informativeness": 4}"#,
        ]);
        let scores = judge_explanation("instruction", "explanation", &client).unwrap();
        assert_eq!(
            scores,
            JudgeScores {
                readability: 5,
                helpfulness: 4,
                informativeness: 4
            }
        );

        let client = scripted_client(vec![
            r#"{"readability": 6, "helpfulness": 4, "informativeness": 4}"#,
        ]);
        assert!(matches!(
            judge_explanation("instruction", "explanation", &client),
            Err(EvalError::RangeViolation {
                field: "readability",
                value: 6
            })
        ));

        let client = scripted_client(vec![r#"{"readability": 5}"#, r#"{"readability": 5}"#]);
        assert!(matches!(
            judge_explanation("instruction", "explanation", &client),
            Err(EvalError::JudgeParseFailure(_))
        ));
    }

    #[test]
    fn summary_thresholds() {
        let all_fives = vec![
            JudgeScores {
                readability: 5,
                helpfulness: 5,
                informativeness: 5
            };
            3
        ];
        let summary = explainability_summary(&all_fives).unwrap();
        assert_eq!(summary["readability"], 100.0);
        assert_eq!(summary["average"], 100.0);

        let mixed: Vec<JudgeScores> = [5, 4, 3, 2]
            .iter()
            .map(|&r| JudgeScores {
                readability: r,
                helpfulness: r,
                informativeness: r,
            })
            .collect();
        let summary = explainability_summary(&mixed).unwrap();
        assert_eq!(summary["readability"], 50.0);

        let all_ones = vec![
            JudgeScores {
                readability: 1,
                helpfulness: 1,
                informativeness: 1
            };
            2
        ];
        let summary = explainability_summary(&all_ones).unwrap();
        assert_eq!(summary["helpfulness"], 0.0);
    }

    #[test]
    fn judging_covers_only_correct_predictions() {
        let task = substring_task("judged", 6);
        // Flip one gold label so the substring judge gets it wrong.
        let mut samples = task.samples;
        samples[0].label = 1 - samples[0].label;
        let client = offline_client();
        let summary =
            judge_correct_predictions(&SubstringJudgeLm, &samples, 0.0, &client).unwrap();
        assert_eq!(summary.predicted, 6);
        assert_eq!(summary.correct, 5);
        assert_eq!(summary.judged, 5);
        assert_eq!(summary.scores.len(), 5);
    }

    #[test]
    fn task_dir_loading_flags_single_class() {
        let dir = tempfile::tempdir().unwrap();
        let task = substring_task("mixed", 4);
        crate::types::write_corpus(dir.path().join("mixed.jsonl"), &task.samples).unwrap();
        let single: Vec<LabeledSample> = task
            .samples
            .iter()
            .cloned()
            .map(|mut s| {
                s.label = 1;
                s.id += "-single";
                s
            })
            .collect();
        crate::types::write_corpus(dir.path().join("single.jsonl"), &single).unwrap();

        let tasks = load_task_dir(dir.path()).unwrap();
        assert_eq!(tasks.len(), 2);
        assert_eq!(tasks[0].name, "mixed");
        assert!(!tasks[0].is_single_class());
        assert!(tasks[1].is_single_class());
    }
}
