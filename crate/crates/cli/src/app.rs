use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use memgat::data::synth::CarSynthConfig;

use crate::commands::*;
use crate::config::{RunConfig, Task};
use crate::error::{CliError, CliResult};
use crate::selfcheck::run_selfcheck;

#[derive(Parser, Debug)]
#[command(name = "memgat", version, about = "Memory-augmented conditional GAN transformers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic CAR corpus, its KB and a style corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        scenarios: usize,
        #[arg(long, default_value_t = 2)]
        entries_per_type: usize,
        /// Question prefix; repeat for several. The bare question is always kept.
        #[arg(long)]
        opener: Vec<String>,
        #[arg(long, default_value_t = 500)]
        style_turns: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Build stage-1/2/3 datasets from a raw corpus and a KB.
    Prepare {
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Train one model from a run config. Flags override config fields.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        task: Option<Task>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        ablate_memory: bool,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        adversarial_weight: Option<f64>,
    },
    /// Score greedy generations of a checkpoint on a test file.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Baseline predictions, one per line, for paired bootstrap.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ablate_memory: bool,
        #[arg(long, default_value_t = 32)]
        max_len: usize,
    },
    /// Greedy output for one input.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: String,
        /// Memory item such as `poi:valero`; repeat for several.
        #[arg(long)]
        memory: Vec<String>,
        #[arg(long, default_value_t = 32)]
        max_len: usize,
    },
    /// Answer questions with three stage checkpoints and a KB.
    Pipeline {
        #[arg(long)]
        stage1: PathBuf,
        #[arg(long)]
        stage2: PathBuf,
        #[arg(long)]
        stage3: PathBuf,
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        questions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 32)]
        max_len: usize,
    },
    /// Gradient checks, metric and POI oracles, empty-memory equivalence.
    Selfcheck {
        #[arg(long)]
        json: bool,
    },
}

fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Synth {
            out,
            scenarios,
            entries_per_type,
            opener,
            style_turns,
            seed,
        } => {
            let mut openers = vec![String::new()];
            openers.extend(opener);
            let car = CarSynthConfig {
                scenarios,
                entries_per_type,
                openers,
                seed,
            };
            cmd_synth(&SynthArgs {
                out: out.clone(),
                car,
                style_turns,
            })?;
            println!("wrote synthetic corpora to {}", out.display());
        }
        Command::Prepare { raw, kb, out, lexicon } => {
            let [a, b, c] = cmd_prepare(&raw, &kb, &out, lexicon.as_ref())?;
            println!("stage1 {a} rows, stage2 {b} rows, stage3 {c} rows in {}", out.display());
        }
        Command::Train {
            config,
            task,
            seed,
            epochs,
            batch_size,
            output_dir,
            ablate_memory,
            lr,
            adversarial_weight,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(t) = task {
                cfg.task = t;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            if let Some(b) = batch_size {
                cfg.batch_size = b;
            }
            if let Some(o) = output_dir {
                cfg.output_dir = o;
            }
            cfg.ablate_memory |= ablate_memory;
            if let Some(lr) = lr {
                cfg.optimizer.lr = lr;
            }
            if let Some(w) = adversarial_weight {
                cfg.weights.adversarial = w;
            }
            cfg.validate()?;
            let s = cmd_train(&cfg)?;
            println!(
                "trained {} epochs, best epoch {}, final standard loss {:.6}, run in {}",
                s.epochs,
                s.best_epoch,
                s.final_standard_loss,
                s.run_dir.display()
            );
        }
        Command::Evaluate {
            checkpoint,
            test,
            baseline,
            out,
            ablate_memory,
            max_len,
        } => {
            let report = cmd_evaluate(&EvaluateArgs {
                checkpoint,
                test,
                baseline,
                out,
                ablate_memory,
                max_len,
            })?;
            for (k, v) in &report.corpus {
                println!("{k}\t{v:.4}");
            }
            if let Some(c) = &report.comparison {
                for (k, p) in &c.p_values {
                    println!("{k}\tdelta {:.4}\tp {p:.4}", c.deltas[k]);
                }
            }
        }
        Command::Generate {
            checkpoint,
            input,
            memory,
            max_len,
        } => println!("{}", cmd_generate(&checkpoint, &input, &memory, max_len)?),
        Command::Pipeline {
            stage1,
            stage2,
            stage3,
            kb,
            questions,
            out,
            max_len,
        } => {
            let s = cmd_pipeline(&PipelineArgs {
                stages: [stage1, stage2, stage3],
                kb,
                questions,
                out,
                max_len,
            })?;
            println!("{} questions, {} fallbacks", s.questions, s.fallbacks);
            if s.with_answer > 0 {
                println!("exact match {}/{}", s.exact, s.with_answer);
            }
        }
        Command::Selfcheck { json } => {
            let r = run_selfcheck(Vec::new());
            if json {
                println!("{}", serde_json::to_string_pretty(&r).expect("report serializes"));
            } else {
                for c in &r.checks {
                    println!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
                }
                println!("{} checks in {:.1}s", r.checks.len(), r.seconds);
            }
            if !r.passed() {
                let names: Vec<&str> = r.failures().iter().map(|c| c.name.as_str()).collect();
                return Err(CliError::Numerical(names.join(", ")));
            }
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
