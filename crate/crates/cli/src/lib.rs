//! Command-line plumbing for memgat: synthetic data, stage preparation,
//! training runs, evaluation, generation, the three-stage pipeline and a
//! numerical self-check.

pub mod commands;
pub mod config;
pub mod error;
pub mod selfcheck;

mod app;

pub use app::run;
pub use commands::{
    cmd_evaluate, cmd_generate, cmd_pipeline, cmd_prepare, cmd_synth, cmd_train, EvaluateArgs, PipelineArgs,
    PipelineSummary, QuestionRecord, SynthArgs, TrainSummary,
};
pub use config::{RunConfig, Task};
pub use error::{CliError, CliResult};
pub use selfcheck::{run_selfcheck, SelfcheckReport};
