//! The whole pipeline at desk scale, driven through the stage runner the
//! CLI uses: synthesize (offline oracle) -> filter -> SFT cold start ->
//! GRPO refinement -> evaluation, with every manifest and report written
//! under a temporary run directory.
//!
//! Run with: cargo run --release --example end_to_end

use std::path::Path;

use groundcheck::pipeline::{run_stage, PipelineConfig, Stage};
use groundcheck::types::{write_corpus, LabeledSample};

fn fixture(prefix: &str, n: usize) -> Vec<LabeledSample> {
    let facts = [
        ("the museum opened in 1902", "the museum opened in 1955"),
        ("the river flows north through the valley", "the river flows south"),
        ("the bridge spans four hundred meters", "the bridge spans nine hundred meters"),
        ("the observatory sits on the eastern ridge", "the observatory sits underground"),
    ];
    (0..n)
        .map(|i| {
            let (true_fact, false_fact) = facts[i % facts.len()];
            let label = (i % 2) as u8;
            let doc = format!("Record {prefix}{i}: {true_fact}. The curator confirmed it.");
            let claim = format!(
                "Record {prefix}{i}: {}",
                if label == 1 { true_fact } else { false_fact }
            );
            LabeledSample::new(format!("{prefix}{i}"), doc, claim, label, "fixture").unwrap()
        })
        .collect()
}

fn write_fixtures(root: &Path) -> anyhow::Result<()> {
    write_corpus(root.join("corpus.jsonl"), &fixture("c", 50))?;
    write_corpus(root.join("rl_corpus.jsonl"), &fixture("r", 12))?;
    std::fs::create_dir_all(root.join("tasks"))?;
    write_corpus(root.join("tasks/task_a.jsonl"), &fixture("a", 10))?;
    write_corpus(root.join("tasks/task_b.jsonl"), &fixture("b", 8))?;
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let root = dir.path();
    write_fixtures(root)?;

    let mut config = PipelineConfig::default();
    config.paths.run_dir = root.join("run");
    config.paths.corpus_in = root.join("corpus.jsonl");
    config.paths.synth_out = root.join("run/synth.jsonl");
    config.paths.filtered_out = root.join("run/filtered.jsonl");
    config.paths.rl_corpus = root.join("rl_corpus.jsonl");
    config.paths.sft_checkpoint = root.join("run/checkpoints/sft");
    config.paths.rl_checkpoint = root.join("run/checkpoints/rl");
    config.paths.reports_dir = root.join("run/reports");
    config.evaluation.tasks_dir = root.join("tasks");
    config.evaluation.model = format!("checkpoint:{}", root.join("run/checkpoints/rl").display());
    // Desk-scale speed: a small probe set, shorter rollouts, one epoch
    // each, workable learning rates for the tiny model.
    config.filtering.k = 2;
    config.sft.learning_rate = 0.01;
    config.sft.epochs = 1;
    config.grpo.group_size = 4;
    config.grpo.epochs = 1;
    config.grpo.minibatch_size = 4;
    config.grpo.max_new_tokens = 48;
    config.grpo.learning_rate = 0.005;

    let config_path = root.join("pipeline.toml");
    std::fs::write(&config_path, toml::to_string_pretty(&config)?)?;

    for stage in [
        Stage::Synthesize,
        Stage::Filter,
        Stage::Sft,
        Stage::Rl,
        Stage::Eval,
    ] {
        let outcome = run_stage(stage, &config_path, &[])
            .map_err(|e| anyhow::anyhow!("stage {stage} failed: {e}"))?;
        println!("[{stage}] summary: {}", outcome.summary);
    }

    println!("\nartifacts under {}:", root.join("run").display());
    let mut paths: Vec<_> = walk(root.join("run").as_path())?;
    paths.sort();
    for path in paths {
        println!("  {}", path.strip_prefix(root)?.display());
    }
    Ok(())
}

fn walk(dir: &Path) -> anyhow::Result<Vec<std::path::PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            out.extend(walk(&path)?);
        } else {
            out.push(path);
        }
    }
    Ok(out)
}
