//! Pipeline orchestration: a single structured config file drives every
//! stage, dotted-key overrides adjust it from the command line, and each
//! stage run writes its artifacts plus a manifest (resolved config,
//! seeds, input fingerprints, wall time) under the run directory.
//! Stages never chain implicitly; each is independently restartable.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{self, CheckpointMetadata};
use crate::eval::{self, load_task_dir};
use crate::filtering::{self, FilterConfig, FilterStage};
use crate::gateway::mock::{FixedProbLm, HashEmbedder, HashScorer, SubstringJudgeLm, UniformLm};
use crate::gateway::remote::{ChatClient, OfflineOracleTransport, RemoteClientConfig};
use crate::gateway::tiny::{TinyLm, TinyLmConfig};
use crate::gateway::{Embedder, LanguageModel};
use crate::grpo::{self, GrpoConfig};
use crate::rewards::{ExpRewardMode, RewardConfig};
use crate::sft::{self, SftConfig, TargetMode};
use crate::synthesis::{self, SynthesisConfig};
use crate::types;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Synthesize,
    Filter,
    Sft,
    Rl,
    Eval,
    Judge,
    Decompose,
    Decontextualize,
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "synthesize" => Ok(Stage::Synthesize),
            "filter" => Ok(Stage::Filter),
            "sft" => Ok(Stage::Sft),
            "rl" => Ok(Stage::Rl),
            "eval" => Ok(Stage::Eval),
            "judge" => Ok(Stage::Judge),
            "decompose" => Ok(Stage::Decompose),
            "decontextualize" => Ok(Stage::Decontextualize),
            other => Err(format!("unknown stage {other:?}")),
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Stage::Synthesize => "synthesize",
            Stage::Filter => "filter",
            Stage::Sft => "sft",
            Stage::Rl => "rl",
            Stage::Eval => "eval",
            Stage::Judge => "judge",
            Stage::Decompose => "decompose",
            Stage::Decontextualize => "decontextualize",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Root for manifests and reports.
    pub run_dir: PathBuf,
    pub corpus_in: PathBuf,
    pub synth_out: PathBuf,
    pub filtered_out: PathBuf,
    /// Prompt set for the RL stage (consumed unfiltered).
    pub rl_corpus: PathBuf,
    pub sft_checkpoint: PathBuf,
    pub rl_checkpoint: PathBuf,
    pub reports_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            run_dir: PathBuf::from("run"),
            corpus_in: PathBuf::from("data/corpus.jsonl"),
            synth_out: PathBuf::from("run/synth.jsonl"),
            filtered_out: PathBuf::from("run/filtered.jsonl"),
            rl_corpus: PathBuf::from("data/rl_corpus.jsonl"),
            sft_checkpoint: PathBuf::from("run/checkpoints/sft"),
            rl_checkpoint: PathBuf::from("run/checkpoints/rl"),
            reports_dir: PathBuf::from("run/reports"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    /// Deterministic built-in oracle; no network.
    Offline,
    /// Real chat-completion HTTP endpoint.
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteSection {
    pub transport: TransportKind,
    pub client: RemoteClientConfig,
}

impl Default for RemoteSection {
    fn default() -> Self {
        Self {
            transport: TransportKind::Offline,
            client: RemoteClientConfig {
                api_key_env: String::new(),
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisSection {
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub max_attempts_per_sample: u32,
}

impl Default for SynthesisSection {
    fn default() -> Self {
        let lib = SynthesisConfig::default();
        Self {
            temperature: lib.temperature,
            max_new_tokens: lib.max_new_tokens,
            max_attempts_per_sample: lib.max_attempts_per_sample,
        }
    }
}

impl SynthesisSection {
    pub fn to_config(&self, client: RemoteClientConfig) -> SynthesisConfig {
        SynthesisConfig {
            client,
            temperature: self.temperature,
            max_new_tokens: self.max_new_tokens,
            max_attempts_per_sample: self.max_attempts_per_sample,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilteringSection {
    pub k: usize,
    pub seed: u64,
    /// Model id of the perplexity scorer.
    pub scorer: String,
    /// Embedder id for the diversity clustering.
    pub embedder: String,
    /// Run the stage prefix ending here: all|label|explanation|diversity.
    pub through: String,
}

impl Default for FilteringSection {
    fn default() -> Self {
        Self {
            k: 10,
            seed: 0,
            scorer: "hash-scorer:11".to_string(),
            embedder: "hash:64".to_string(),
            through: "all".to_string(),
        }
    }
}

impl FilteringSection {
    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            k: self.k,
            seed: self.seed,
        }
    }

    pub fn through_stage(&self) -> Result<FilterStage, String> {
        match self.through.as_str() {
            "all" | "diversity" => Ok(FilterStage::Diversity),
            "label" => Ok(FilterStage::Label),
            "explanation" => Ok(FilterStage::Explanation),
            other => Err(format!(
                "filtering.through must be all|label|explanation|diversity, got {other:?}"
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SftSection {
    /// Model id the cold start begins from.
    pub base_model: String,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub target_mode: TargetMode,
    pub seed: u64,
    pub max_sequence_length: usize,
}

impl Default for SftSection {
    fn default() -> Self {
        let lib = SftConfig::default();
        Self {
            base_model: "tiny-random:7".to_string(),
            learning_rate: lib.learning_rate,
            weight_decay: lib.weight_decay,
            batch_size: lib.batch_size,
            epochs: lib.epochs,
            target_mode: lib.target_mode,
            seed: lib.seed,
            max_sequence_length: lib.max_sequence_length,
        }
    }
}

impl SftSection {
    pub fn sft_config(&self) -> SftConfig {
        SftConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            epochs: self.epochs,
            target_mode: self.target_mode,
            seed: self.seed,
            max_sequence_length: self.max_sequence_length,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardsSection {
    /// Model id of the novice answering from explanations alone.
    pub novice: String,
    pub novice_temperature: f64,
    pub exp_reward_mode: ExpRewardMode,
    pub novice_max_new_tokens: usize,
}

impl Default for RewardsSection {
    fn default() -> Self {
        let lib = RewardConfig::default();
        Self {
            novice: "substring-judge".to_string(),
            novice_temperature: lib.novice_temperature,
            exp_reward_mode: lib.exp_reward_mode,
            novice_max_new_tokens: lib.novice_max_new_tokens,
        }
    }
}

impl RewardsSection {
    pub fn reward_config(&self) -> RewardConfig {
        RewardConfig {
            novice_temperature: self.novice_temperature,
            exp_reward_mode: self.exp_reward_mode,
            novice_max_new_tokens: self.novice_max_new_tokens,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub tasks_dir: PathBuf,
    pub runs: usize,
    pub temperature: f64,
    /// Model id under evaluation (usually "checkpoint:<dir>").
    pub model: String,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            tasks_dir: PathBuf::from("data/tasks"),
            runs: 2,
            temperature: 0.6,
            model: "checkpoint:run/checkpoints/rl".to_string(),
        }
    }
}

/// The whole pipeline configuration. Unknown keys anywhere are rejected.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub remote: RemoteSection,
    pub synthesis: SynthesisSection,
    pub filtering: FilteringSection,
    pub sft: SftSection,
    pub grpo: GrpoConfig,
    pub rewards: RewardsSection,
    pub evaluation: EvaluationSection,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("could not parse config: {0}")]
    Parse(String),
    #[error("bad override {key:?}: {reason}")]
    BadOverride { key: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One validation finding: the offending key and the violated constraint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostic {
    pub key: String,
    pub constraint: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.key, self.constraint)
    }
}

fn parse_override(raw: &str) -> Result<(Vec<String>, toml::Value), ConfigError> {
    let (key, value) = raw.split_once('=').ok_or_else(|| ConfigError::BadOverride {
        key: raw.to_string(),
        reason: "expected key=value".to_string(),
    })?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(|part| part.is_empty()) {
        return Err(ConfigError::BadOverride {
            key: key.to_string(),
            reason: "empty key segment".to_string(),
        });
    }
    // Parse the value as TOML; fall back to a plain string.
    let parsed: toml::Value = format!("v = {}", value.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.trim().to_string()));
    Ok((path, parsed))
}

fn apply_override(
    root: &mut toml::Value,
    path: &[String],
    value: toml::Value,
    raw_key: &str,
) -> Result<(), ConfigError> {
    let mut cursor = root;
    for part in &path[..path.len() - 1] {
        let table = cursor
            .as_table_mut()
            .ok_or_else(|| ConfigError::BadOverride {
                key: raw_key.to_string(),
                reason: format!("{part} is not a table"),
            })?;
        cursor = table
            .entry(part.clone())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let table = cursor
        .as_table_mut()
        .ok_or_else(|| ConfigError::BadOverride {
            key: raw_key.to_string(),
            reason: "parent is not a table".to_string(),
        })?;
    table.insert(path.last().expect("non-empty path").clone(), value);
    Ok(())
}

/// Loads, overrides, and deserializes the config. Returns the resolved
/// config plus its TOML value (the manifest snapshot).
pub fn load_config(
    path: impl AsRef<Path>,
    overrides: &[String],
) -> Result<(PipelineConfig, toml::Value), ConfigError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(ConfigError::FileNotFound(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    let mut value = toml::Value::Table(table);
    for raw in overrides {
        let (key_path, parsed) = parse_override(raw)?;
        apply_override(&mut value, &key_path, parsed, raw)?;
    }
    let config: PipelineConfig = value
        .clone()
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    Ok((config, value))
}

/// Semantic validation: every diagnostic names the offending key and the
/// constraint it violates. An empty list means the config is runnable.
pub fn validate(config: &PipelineConfig) -> Vec<Diagnostic> {
    let mut diagnostics = Vec::new();
    let mut push = |key: &str, constraint: String| {
        diagnostics.push(Diagnostic {
            key: key.to_string(),
            constraint,
        });
    };
    if let Err(reason) = config.remote.client.validate() {
        push("remote.client", reason);
    }
    if config.synthesis.temperature < 0.0 {
        push("synthesis.temperature", "must be >= 0".to_string());
    }
    if config.synthesis.max_attempts_per_sample < 1 {
        push("synthesis.max_attempts_per_sample", "must be >= 1".to_string());
    }
    if config.filtering.k < 1 {
        push("filtering.k", "must be >= 1".to_string());
    }
    if let Err(reason) = config.filtering.through_stage() {
        push("filtering.through", reason);
    }
    if let Err(reason) = model_spec(&config.filtering.scorer) {
        push("filtering.scorer", reason);
    }
    if let Err(reason) = embedder_from_id(&config.filtering.embedder).map(|_| ()) {
        push("filtering.embedder", reason);
    }
    if let Err(reason) = config.sft.sft_config().validate() {
        // The library message already names the field.
        let (key, constraint) = reason.split_once(" must").unwrap_or(("sft", reason.as_str()));
        push(key, format!("must{constraint}"));
    }
    if let Err(reason) = model_spec(&config.sft.base_model) {
        push("sft.base_model", reason);
    }
    if let Err(reason) = config.grpo.validate() {
        let (key, constraint) = reason.split_once(" must").unwrap_or(("grpo", reason.as_str()));
        push(key, format!("must{constraint}"));
    }
    if let Err(reason) = config.rewards.reward_config().validate() {
        let (key, constraint) = reason
            .split_once(" must")
            .unwrap_or(("rewards", reason.as_str()));
        push(key, format!("must{constraint}"));
    }
    if let Err(reason) = model_spec(&config.rewards.novice) {
        push("rewards.novice", reason);
    }
    if config.evaluation.runs < 1 {
        push("evaluation.runs", "must be >= 1".to_string());
    }
    if let Err(reason) = model_spec(&config.evaluation.model) {
        push("evaluation.model", reason);
    }
    if !config.evaluation.tasks_dir.is_dir() {
        push(
            "evaluation.tasks_dir",
            format!(
                "directory {} does not exist",
                config.evaluation.tasks_dir.display()
            ),
        );
    }
    diagnostics
}

/// Validates the config file at `path`; the file must exist.
pub fn validate_config(path: impl AsRef<Path>) -> Result<Vec<Diagnostic>, ConfigError> {
    let (config, _) = load_config(path, &[])?;
    Ok(validate(&config))
}

/// Parsed model id. The grammar keeps run configs one-line per handle:
/// `tiny-random:<seed>`, `checkpoint:<dir>`, `uniform:<vocab>`,
/// `fixed-prob:<p>`, `substring-judge`.
enum ModelSpec {
    TinyRandom { seed: u64 },
    Checkpoint { dir: PathBuf },
    Uniform { vocab: usize },
    FixedProb { p: f64 },
    HashScorer { seed: u64 },
    SubstringJudge,
}

fn model_spec(id: &str) -> Result<ModelSpec, String> {
    if id == "substring-judge" {
        return Ok(ModelSpec::SubstringJudge);
    }
    let (kind, arg) = id
        .split_once(':')
        .ok_or_else(|| format!("unknown model id {id:?}"))?;
    match kind {
        "tiny-random" => arg
            .parse()
            .map(|seed| ModelSpec::TinyRandom { seed })
            .map_err(|_| format!("tiny-random seed must be an integer, got {arg:?}")),
        "checkpoint" => Ok(ModelSpec::Checkpoint {
            dir: PathBuf::from(arg),
        }),
        "uniform" => arg
            .parse()
            .map(|vocab| ModelSpec::Uniform { vocab })
            .map_err(|_| format!("uniform vocab must be an integer, got {arg:?}")),
        "fixed-prob" => arg
            .parse()
            .map(|p| ModelSpec::FixedProb { p })
            .map_err(|_| format!("fixed-prob probability must be a float, got {arg:?}")),
        "hash-scorer" => arg
            .parse()
            .map(|seed| ModelSpec::HashScorer { seed })
            .map_err(|_| format!("hash-scorer seed must be an integer, got {arg:?}")),
        other => Err(format!("unknown model kind {other:?}")),
    }
}

/// Instantiates a scoring/generation handle from a model id.
pub fn model_from_id(id: &str) -> Result<Box<dyn LanguageModel>, String> {
    Ok(match model_spec(id)? {
        ModelSpec::TinyRandom { seed } => Box::new(TinyLm::new(TinyLmConfig::default(), seed)),
        ModelSpec::Checkpoint { dir } => {
            Box::new(checkpoint::load_tiny_lm(&dir).map_err(|e| e.to_string())?)
        }
        ModelSpec::Uniform { vocab } => Box::new(UniformLm::new(vocab)),
        ModelSpec::FixedProb { p } => Box::new(FixedProbLm::new(p)),
        ModelSpec::HashScorer { seed } => Box::new(HashScorer::new(seed)),
        ModelSpec::SubstringJudge => Box::new(SubstringJudgeLm),
    })
}

/// Instantiates a trainable model; only tiny models qualify.
pub fn trainable_from_id(id: &str) -> Result<TinyLm, String> {
    match model_spec(id)? {
        ModelSpec::TinyRandom { seed } => Ok(TinyLm::new(TinyLmConfig::default(), seed)),
        ModelSpec::Checkpoint { dir } => checkpoint::load_tiny_lm(&dir).map_err(|e| e.to_string()),
        _ => Err(format!("model id {id:?} is not trainable")),
    }
}

pub fn embedder_from_id(id: &str) -> Result<Box<dyn Embedder>, String> {
    let (kind, arg) = id
        .split_once(':')
        .ok_or_else(|| format!("unknown embedder id {id:?}"))?;
    match kind {
        "hash" => {
            let dim: usize = arg
                .parse()
                .map_err(|_| format!("hash embedder dim must be an integer, got {arg:?}"))?;
            if dim < 2 {
                return Err("hash embedder dim must be >= 2".to_string());
            }
            Ok(Box::new(HashEmbedder::new(dim)))
        }
        other => Err(format!("unknown embedder kind {other:?}")),
    }
}

pub fn build_client(remote: &RemoteSection) -> Result<ChatClient, String> {
    match remote.transport {
        TransportKind::Offline => Ok(ChatClient::with_transport(
            remote.client.clone(),
            Box::new(OfflineOracleTransport::new()),
        )),
        #[cfg(feature = "http")]
        TransportKind::Http => Ok(ChatClient::new(remote.client.clone())),
        #[cfg(not(feature = "http"))]
        TransportKind::Http => Err("built without the http feature".to_string()),
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error("invalid config:\n{}", .0.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n"))]
    ConfigInvalid(Vec<Diagnostic>),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("stage {stage} failed: {message}")]
    Failed { stage: Stage, message: String },
}

impl StageError {
    fn failed(stage: Stage, err: impl std::fmt::Display) -> Self {
        StageError::Failed {
            stage,
            message: err.to_string(),
        }
    }

    /// Machine-readable error record for nonzero exits.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            StageError::ConfigInvalid(diagnostics) => serde_json::json!({
                "error": "config_invalid",
                "diagnostics": diagnostics,
            }),
            StageError::Config(err) => serde_json::json!({
                "error": "config",
                "message": err.to_string(),
            }),
            StageError::Failed { stage, message } => serde_json::json!({
                "error": "stage_failure",
                "stage": stage.to_string(),
                "message": message,
            }),
        }
    }
}

/// What a stage run produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: Stage,
    pub artifacts: Vec<PathBuf>,
    pub summary: serde_json::Value,
    pub manifest_path: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    stage: Stage,
    wall_time_secs: f64,
    config: serde_json::Value,
    seeds: BTreeMap<String, u64>,
    input_fingerprints: BTreeMap<String, String>,
    artifacts: Vec<PathBuf>,
    summary: serde_json::Value,
}

fn file_fingerprint(path: &Path) -> Result<String, std::io::Error> {
    let bytes = std::fs::read(path)?;
    Ok(checkpoint::fingerprint([bytes.as_slice()]))
}

struct StageRun {
    seeds: BTreeMap<String, u64>,
    input_fingerprints: BTreeMap<String, String>,
    artifacts: Vec<PathBuf>,
    summary: serde_json::Value,
}

/// Executes exactly one stage. On success the run manifest is written
/// under `paths.run_dir` as `manifest-<stage>.json`.
pub fn run_stage(
    stage: Stage,
    config_path: impl AsRef<Path>,
    overrides: &[String],
) -> Result<StageOutcome, StageError> {
    let (config, resolved) = load_config(config_path, overrides)?;
    let diagnostics = validate(&config)
        .into_iter()
        // Only the eval/judge stages need the tasks directory.
        .filter(|d| {
            matches!(stage, Stage::Eval | Stage::Judge) || d.key != "evaluation.tasks_dir"
        })
        .collect::<Vec<_>>();
    if !diagnostics.is_empty() {
        return Err(StageError::ConfigInvalid(diagnostics));
    }

    std::fs::create_dir_all(&config.paths.run_dir)
        .map_err(|e| StageError::failed(stage, e))?;
    std::fs::create_dir_all(&config.paths.reports_dir)
        .map_err(|e| StageError::failed(stage, e))?;

    let started = Instant::now();
    let run = match stage {
        Stage::Synthesize => stage_synthesize(&config),
        Stage::Filter => stage_filter(&config),
        Stage::Sft => stage_sft(&config),
        Stage::Rl => stage_rl(&config),
        Stage::Eval => stage_eval(&config, &resolved),
        Stage::Judge => stage_judge(&config),
        Stage::Decompose => stage_decompose(&config),
        Stage::Decontextualize => stage_decontextualize(&config),
    }
    .map_err(|message| StageError::Failed { stage, message })?;

    let manifest = RunManifest {
        stage,
        wall_time_secs: started.elapsed().as_secs_f64(),
        config: toml_to_json(&resolved),
        seeds: run.seeds,
        input_fingerprints: run.input_fingerprints,
        artifacts: run.artifacts.clone(),
        summary: run.summary.clone(),
    };
    let manifest_path = config
        .paths
        .run_dir
        .join(format!("manifest-{stage}.json"));
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
    )
    .map_err(|e| StageError::failed(stage, e))?;

    Ok(StageOutcome {
        stage,
        artifacts: run.artifacts,
        summary: run.summary,
        manifest_path,
    })
}

fn toml_to_json(value: &toml::Value) -> serde_json::Value {
    serde_json::to_value(value).unwrap_or(serde_json::Value::Null)
}

fn stage_synthesize(config: &PipelineConfig) -> Result<StageRun, String> {
    let samples = types::read_corpus(&config.paths.corpus_in).map_err(|e| e.to_string())?;
    let client = build_client(&config.remote)?;
    let cfg = config.synthesis.to_config(config.remote.client.clone());
    cfg.validate()?;
    let report =
        synthesis::synthesize_corpus_to_path(&samples, &cfg, &client, &config.paths.synth_out)
            .map_err(|e| e.to_string())?;
    let report_path = config.paths.reports_dir.join("synthesis_report.json");
    synthesis::write_synthesis_report(&report_path, &report).map_err(|e| e.to_string())?;

    let mut input_fingerprints = BTreeMap::new();
    input_fingerprints.insert(
        config.paths.corpus_in.display().to_string(),
        file_fingerprint(&config.paths.corpus_in).map_err(|e| e.to_string())?,
    );
    Ok(StageRun {
        seeds: BTreeMap::new(),
        input_fingerprints,
        artifacts: vec![config.paths.synth_out.clone(), report_path],
        summary: serde_json::to_value(&report).map_err(|e| e.to_string())?,
    })
}

fn stage_filter(config: &PipelineConfig) -> Result<StageRun, String> {
    let records = types::read_synth_records(&config.paths.synth_out).map_err(|e| e.to_string())?;
    let scorer = model_from_id(&config.filtering.scorer)?;
    let embedder = embedder_from_id(&config.filtering.embedder)?;
    let through = config.filtering.through_stage()?;
    let (retained, report, decisions) = filtering::run_filter_pipeline_through(
        &records,
        scorer.as_ref(),
        embedder.as_ref(),
        &config.filtering.filter_config(),
        through,
    )
    .map_err(|e| e.to_string())?;

    types::write_synth_records(&config.paths.filtered_out, &retained)
        .map_err(|e| e.to_string())?;
    let report_path = config.paths.reports_dir.join("filter_report.json");
    filtering::write_filter_report(&report_path, &report).map_err(|e| e.to_string())?;
    let decisions_path = config.paths.reports_dir.join("filter_decisions.jsonl");
    filtering::write_decisions(&decisions_path, &decisions).map_err(|e| e.to_string())?;

    if !report.partition_holds() {
        return Err("filter report buckets do not partition the input".to_string());
    }
    let mut seeds = BTreeMap::new();
    seeds.insert("filtering.seed".to_string(), config.filtering.seed);
    let mut input_fingerprints = BTreeMap::new();
    input_fingerprints.insert(
        config.paths.synth_out.display().to_string(),
        file_fingerprint(&config.paths.synth_out).map_err(|e| e.to_string())?,
    );
    Ok(StageRun {
        seeds,
        input_fingerprints,
        artifacts: vec![
            config.paths.filtered_out.clone(),
            report_path,
            decisions_path,
        ],
        summary: serde_json::to_value(report).map_err(|e| e.to_string())?,
    })
}

fn data_fingerprint(records: &[types::SynthRecord]) -> String {
    checkpoint::fingerprint(records.iter().map(|r| r.raw_response.as_bytes()))
}

fn stage_sft(config: &PipelineConfig) -> Result<StageRun, String> {
    let records =
        types::read_synth_records(&config.paths.filtered_out).map_err(|e| e.to_string())?;
    let mut model = trainable_from_id(&config.sft.base_model)?;
    let cfg = config.sft.sft_config();
    let metrics = sft::train_sft(&mut model, &records, &cfg).map_err(|e| e.to_string())?;

    model.set_id(format!("sft-from-{}", config.sft.base_model));
    let metadata = CheckpointMetadata {
        stage: "sft".to_string(),
        config_snapshot: serde_json::to_value(&cfg).map_err(|e| e.to_string())?,
        seed: cfg.seed,
        data_fingerprint: data_fingerprint(&records),
    };
    checkpoint::save_tiny_lm(&config.paths.sft_checkpoint, &model, &metadata)
        .map_err(|e| e.to_string())?;
    let metrics_path = config.paths.reports_dir.join("sft_metrics.jsonl");
    checkpoint::append_jsonl(&metrics_path, &metrics.steps).map_err(|e| e.to_string())?;

    let mut seeds = BTreeMap::new();
    seeds.insert("sft.seed".to_string(), cfg.seed);
    let mut input_fingerprints = BTreeMap::new();
    input_fingerprints.insert(
        config.paths.filtered_out.display().to_string(),
        file_fingerprint(&config.paths.filtered_out).map_err(|e| e.to_string())?,
    );
    Ok(StageRun {
        seeds,
        input_fingerprints,
        artifacts: vec![config.paths.sft_checkpoint.clone(), metrics_path],
        summary: serde_json::json!({
            "initial_loss": metrics.initial_loss,
            "final_loss": metrics.final_loss,
            "steps": metrics.steps.len(),
            "skipped_overlong": metrics.skipped_overlong,
        }),
    })
}

fn stage_rl(config: &PipelineConfig) -> Result<StageRun, String> {
    let dataset = types::read_corpus(&config.paths.rl_corpus).map_err(|e| e.to_string())?;
    let mut policy =
        checkpoint::load_tiny_lm(&config.paths.sft_checkpoint).map_err(|e| e.to_string())?;
    let reference = policy.clone();
    let novice = model_from_id(&config.rewards.novice)?;
    let reward_cfg = config.rewards.reward_config();
    let metrics = grpo::train_grpo(
        &mut policy,
        &reference,
        &dataset,
        &config.grpo,
        &reward_cfg,
        novice.as_ref(),
    )
    .map_err(|e| e.to_string())?;

    policy.set_id("rl-policy".to_string());
    let metadata = CheckpointMetadata {
        stage: "rl".to_string(),
        config_snapshot: serde_json::to_value(&config.grpo).map_err(|e| e.to_string())?,
        seed: config.grpo.seed,
        data_fingerprint: checkpoint::fingerprint(
            dataset.iter().map(|s| s.id.as_bytes()),
        ),
    };
    checkpoint::save_tiny_lm(&config.paths.rl_checkpoint, &policy, &metadata)
        .map_err(|e| e.to_string())?;
    let metrics_path = config.paths.reports_dir.join("rl_metrics.jsonl");
    checkpoint::append_jsonl(&metrics_path, &metrics.steps).map_err(|e| e.to_string())?;
    let traces_path = config.paths.reports_dir.join("reward_traces.jsonl");
    checkpoint::append_jsonl(&traces_path, &metrics.traces).map_err(|e| e.to_string())?;

    let mut seeds = BTreeMap::new();
    seeds.insert("grpo.seed".to_string(), config.grpo.seed);
    let mut input_fingerprints = BTreeMap::new();
    input_fingerprints.insert(
        config.paths.rl_corpus.display().to_string(),
        file_fingerprint(&config.paths.rl_corpus).map_err(|e| e.to_string())?,
    );
    let first = metrics.mean_reward_of_first_step().unwrap_or(0.0);
    let last = metrics.mean_reward_of_last_step().unwrap_or(0.0);
    Ok(StageRun {
        seeds,
        input_fingerprints,
        artifacts: vec![config.paths.rl_checkpoint.clone(), metrics_path, traces_path],
        summary: serde_json::json!({
            "steps": metrics.steps.len(),
            "first_step_mean_reward": first,
            "last_step_mean_reward": last,
        }),
    })
}

fn stage_eval(config: &PipelineConfig, resolved: &toml::Value) -> Result<StageRun, String> {
    let model = model_from_id(&config.evaluation.model)?;
    let tasks = load_task_dir(&config.evaluation.tasks_dir).map_err(|e| e.to_string())?;
    if tasks.is_empty() {
        return Err(format!(
            "no task files under {}",
            config.evaluation.tasks_dir.display()
        ));
    }
    let single_class: Vec<String> = tasks
        .iter()
        .filter(|t| t.is_single_class())
        .map(|t| t.name.clone())
        .collect();
    let result = eval::evaluate_suite(
        model.as_ref(),
        &tasks,
        config.evaluation.runs,
        config.evaluation.temperature,
    )
    .map_err(|e| e.to_string())?;

    let config_fingerprint = checkpoint::fingerprint([toml_to_json(resolved)
        .to_string()
        .as_bytes()]);
    let results_path = config.paths.reports_dir.join("eval_results.json");
    let payload = serde_json::json!({
        "per_task": result.per_task,
        "mean": result.mean,
        "std": result.std,
        "runs": result.runs,
        "config_fingerprint": config_fingerprint,
        "single_class_tasks": single_class,
    });
    std::fs::write(
        &results_path,
        serde_json::to_string_pretty(&payload).map_err(|e| e.to_string())? + "\n",
    )
    .map_err(|e| e.to_string())?;
    let table = eval::render_results_table(&result);
    let table_path = config.paths.reports_dir.join("eval_results.txt");
    std::fs::write(&table_path, &table).map_err(|e| e.to_string())?;
    print!("{table}");

    Ok(StageRun {
        seeds: BTreeMap::new(),
        input_fingerprints: BTreeMap::new(),
        artifacts: vec![results_path, table_path],
        summary: payload,
    })
}

fn stage_judge(config: &PipelineConfig) -> Result<StageRun, String> {
    let model = model_from_id(&config.evaluation.model)?;
    let tasks = load_task_dir(&config.evaluation.tasks_dir).map_err(|e| e.to_string())?;
    let client = build_client(&config.remote)?;
    let mut all_scores = Vec::new();
    let mut rows = Vec::new();
    for task in &tasks {
        let summary = eval::judge_correct_predictions(
            model.as_ref(),
            &task.samples,
            config.evaluation.temperature,
            &client,
        )
        .map_err(|e| e.to_string())?;
        for (i, scores) in summary.scores.iter().enumerate() {
            rows.push(serde_json::json!({
                "task": task.name,
                "index": i,
                "readability": scores.readability,
                "helpfulness": scores.helpfulness,
                "informativeness": scores.informativeness,
            }));
        }
        all_scores.extend(summary.scores);
    }
    let scores_path = config.paths.reports_dir.join("judge_scores.jsonl");
    checkpoint::append_jsonl(&scores_path, &rows).map_err(|e| e.to_string())?;
    let summary = if all_scores.is_empty() {
        serde_json::json!({"judged": 0})
    } else {
        let percentages =
            eval::explainability_summary(&all_scores).map_err(|e| e.to_string())?;
        serde_json::json!({"judged": all_scores.len(), "percentages": percentages})
    };
    let summary_path = config.paths.reports_dir.join("judge_summary.json");
    std::fs::write(
        &summary_path,
        serde_json::to_string_pretty(&summary).map_err(|e| e.to_string())? + "\n",
    )
    .map_err(|e| e.to_string())?;
    Ok(StageRun {
        seeds: BTreeMap::new(),
        input_fingerprints: BTreeMap::new(),
        artifacts: vec![scores_path, summary_path],
        summary,
    })
}

fn stage_decompose(config: &PipelineConfig) -> Result<StageRun, String> {
    let samples = types::read_corpus(&config.paths.corpus_in).map_err(|e| e.to_string())?;
    let client = build_client(&config.remote)?;
    let mut rows = Vec::new();
    for sample in &samples {
        let facts = eval::decompose_claim(&sample.claim, &client).map_err(|e| e.to_string())?;
        rows.push(serde_json::json!({"id": sample.id, "facts": facts}));
    }
    let path = config.paths.reports_dir.join("decomposition.jsonl");
    checkpoint::append_jsonl(&path, &rows).map_err(|e| e.to_string())?;
    Ok(StageRun {
        seeds: BTreeMap::new(),
        input_fingerprints: BTreeMap::new(),
        artifacts: vec![path],
        summary: serde_json::json!({"claims": samples.len()}),
    })
}

fn stage_decontextualize(config: &PipelineConfig) -> Result<StageRun, String> {
    let samples = types::read_corpus(&config.paths.corpus_in).map_err(|e| e.to_string())?;
    let client = build_client(&config.remote)?;
    let mut rows = Vec::new();
    let mut rewritten_corpus = Vec::with_capacity(samples.len());
    for sample in &samples {
        let (standalone, rewritten) =
            eval::decontextualize_claim(&sample.claim, &sample.doc, &client)
                .map_err(|e| e.to_string())?;
        rows.push(serde_json::json!({
            "id": sample.id,
            "standalone": standalone,
            "rewritten": rewritten,
        }));
        let mut updated = sample.clone();
        if let Some(new_claim) = rewritten {
            updated.claim = new_claim;
        }
        rewritten_corpus.push(updated);
    }
    let report_path = config.paths.reports_dir.join("decontextualization.jsonl");
    checkpoint::append_jsonl(&report_path, &rows).map_err(|e| e.to_string())?;
    let corpus_path = config
        .paths
        .reports_dir
        .join("decontextualized_corpus.jsonl");
    types::write_corpus(&corpus_path, &rewritten_corpus).map_err(|e| e.to_string())?;
    Ok(StageRun {
        seeds: BTreeMap::new(),
        input_fingerprints: BTreeMap::new(),
        artifacts: vec![report_path, corpus_path],
        summary: serde_json::json!({"claims": samples.len()}),
    })
}

/// Writes the shipped default configuration, which mirrors the reference
/// hyperparameters (K=10, lr 1e-5/1e-6, batch 16, epochs 3/2, G=7,
/// beta=0.001, epsilon=0.2, temperatures 1.0/0.6).
pub fn write_default_config(path: impl AsRef<Path>) -> Result<(), std::io::Error> {
    let config = PipelineConfig::default();
    let text = toml::to_string_pretty(&config).expect("default config serializes");
    std::fs::write(path, text)
}
