//! groundcheck trains and evaluates an explainable faithfulness-
//! hallucination detector end to end: synthesize explanation-bearing
//! training data, filter it for label correctness / explanation quality /
//! diversity, cold-start with supervised fine-tuning, refine with
//! group-relative policy optimization under a composite rule-based
//! reward, and evaluate with a multi-task macro-F1 harness.
//!
//! Every stage runs at desk scale with the deterministic mock models in
//! [`gateway::mock`] and the tiny trainable model in [`gateway::tiny`];
//! the same code paths drive real models through the same traits.
//!
//! See the `examples/` directory for one runnable program per stage.

pub mod checkpoint;
pub mod eval;
pub mod filtering;
pub mod gateway;
pub mod grpo;
pub mod optim;
pub mod pipeline;
pub mod prompt;
pub mod rewards;
pub mod sft;
pub mod synthesis;
pub mod tags;
pub mod types;
