use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use groundcheck::pipeline::{self, Stage};

#[derive(Parser)]
#[command(
    name = "groundcheck",
    about = "Train and evaluate an explainable faithfulness-hallucination detector",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute exactly one pipeline stage and write its manifest.
    Run {
        /// synthesize | filter | sft | rl | eval | judge | decompose | decontextualize
        stage: Stage,
        #[arg(long, short)]
        config: PathBuf,
        /// Dotted-key overrides, e.g. -o grpo.group_size=4
        #[arg(long = "override", short = 'o')]
        overrides: Vec<String>,
        /// For the filter stage: run the prefix ending at this stage
        /// (all | label | explanation | diversity).
        #[arg(long)]
        stage_limit: Option<String>,
    },
    /// Check a config file; prints one diagnostic per violated constraint.
    ValidateConfig {
        #[arg(long, short)]
        config: PathBuf,
    },
    /// Write the default configuration file.
    InitConfig {
        #[arg(long, short, default_value = "pipeline.toml")]
        path: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            stage,
            config,
            mut overrides,
            stage_limit,
        } => {
            if let Some(limit) = stage_limit {
                overrides.push(format!("filtering.through={limit}"));
            }
            match pipeline::run_stage(stage, &config, &overrides) {
                Ok(outcome) => {
                    println!(
                        "{}",
                        serde_json::json!({
                            "stage": outcome.stage.to_string(),
                            "manifest": outcome.manifest_path,
                            "artifacts": outcome.artifacts,
                            "summary": outcome.summary,
                        })
                    );
                    ExitCode::SUCCESS
                }
                Err(err) => {
                    eprintln!("{}", err.to_json());
                    ExitCode::FAILURE
                }
            }
        }
        Command::ValidateConfig { config } => match pipeline::validate_config(&config) {
            Ok(diagnostics) if diagnostics.is_empty() => {
                println!("ok");
                ExitCode::SUCCESS
            }
            Ok(diagnostics) => {
                for diagnostic in diagnostics {
                    println!("{diagnostic}");
                }
                ExitCode::FAILURE
            }
            Err(err) => {
                eprintln!("{err}");
                ExitCode::FAILURE
            }
        },
        Command::InitConfig { path } => match pipeline::write_default_config(&path) {
            Ok(()) => {
                println!("wrote {}", path.display());
                ExitCode::SUCCESS
            }
            Err(err) => {
                eprintln!("{err}");
                ExitCode::FAILURE
            }
        },
    }
}
