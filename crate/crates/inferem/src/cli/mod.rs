//! Operator entry points: data prep, training, evaluation, generation and
//! gradient diagnostics. The `inferem` binary is a thin wrapper over `run`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{ConfigError, RunConfig, KNOWN_KEYS};
use crate::corpus::{
    build_vocabulary, load_empathetic_dialogues, tokenize, write_synthetic_corpus, CorpusError,
    Dialogue, KnowledgeBase, SyntheticConfig, Vocabulary, DATA_DIR_ENV,
};
use crate::diagnostics::gradient_suite;
use crate::pipeline::{
    evaluate, load_optimizer_state, save_optimizer_state, train, ModelParams, PipelineError,
    Trainer,
};

/// Command failure with its process exit code: 1 for usage/input problems,
/// 2 for numerical failures.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Numerical(m) => CliError::Numerical(m),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn config_help() -> String {
    let mut out = String::from("Config keys (defaults in parentheses):\n");
    for (key, default, help) in KNOWN_KEYS {
        out.push_str(&format!("  {key} ({default}): {help}\n"));
    }
    out.push_str("\nConfig files hold `section.key = value` lines; `#` starts a comment.\n");
    out.push_str(&format!(
        "The {DATA_DIR_ENV} environment variable supplies --data when omitted.\n"
    ));
    out
}

#[derive(Parser)]
#[command(
    name = "inferem",
    about = "Empathetic dialogue generation with last-utterance intention fusion",
    after_long_help = config_help()
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus plus matching knowledge lexicons.
    SynthData {
        /// Output directory for train/valid/test.csv and the lexicons.
        #[arg(long)]
        out: PathBuf,
        /// Number of emotion categories (at least 2).
        #[arg(long, default_value_t = 8)]
        emotions: usize,
        /// Total dialogues across all splits.
        #[arg(long, default_value_t = 2000)]
        dialogues: usize,
        /// Generator seed; same seed, same bytes.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Cap on distinct words.
        #[arg(long, default_value_t = 300)]
        vocab: usize,
    },
    /// Train a model; writes checkpoints, vocab and the training log.
    Train {
        /// Data directory (defaults to $INFEREM_DATA_DIR).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Config file of `section.key = value` lines.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run directory to create.
        #[arg(long)]
        out: PathBuf,
        /// Ablation: disable speaker-intention fusion.
        #[arg(long)]
        no_sip: bool,
        /// Ablation: disable last-utterance prediction.
        #[arg(long)]
        no_lup: bool,
        /// Override one config key (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Resume from a previous run directory.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        /// Data directory (defaults to $INFEREM_DATA_DIR).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Checkpoint file; vocab/config are read from its directory.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Config file overriding the echoed run config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Report file (defaults to eval_report.txt next to the checkpoint).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Predict the virtual next utterance and generate a response.
    Generate {
        /// Checkpoint file; vocab/config are read from its directory.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dialogue history, utterances separated by `||`.
        #[arg(long)]
        context: String,
        /// Data directory for the knowledge lexicons (optional).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Finite-difference checks over every primitive and composite.
    Gradcheck {
        /// Include a deliberately broken rule to prove the checker bites.
        #[arg(long)]
        sabotage: bool,
        /// Random points per check.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::SynthData {
            out,
            emotions,
            dialogues,
            seed,
            vocab,
        } => cmd_synth_data(&out, emotions, dialogues, seed, vocab),
        Command::Train {
            data,
            config,
            out,
            no_sip,
            no_lup,
            set,
            resume,
        } => cmd_train(data, config, &out, no_sip, no_lup, &set, resume),
        Command::Eval {
            data,
            checkpoint,
            config,
            set,
            report,
        } => cmd_eval(data, &checkpoint, config, &set, report),
        Command::Generate {
            checkpoint,
            context,
            data,
            set,
        } => cmd_generate(&checkpoint, &context, data, &set),
        Command::Gradcheck { sabotage, seeds } => cmd_gradcheck(sabotage, seeds),
    }
}

fn resolve_data_dir(flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
    if let Some(dir) = flag {
        return Ok(dir);
    }
    if let Ok(env) = std::env::var(DATA_DIR_ENV) {
        return Ok(PathBuf::from(env));
    }
    Err(CliError::Usage(format!(
        "no data directory: pass --data or set {DATA_DIR_ENV}"
    )))
}

fn build_config(
    file: Option<&Path>,
    sets: &[String],
    extra: &[(&str, &str)],
) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = file {
        cfg.merge_file(path)?;
    }
    for pair in sets {
        let Some((key, value)) = pair.split_once('=') else {
            return Err(CliError::Usage(format!(
                "--set expects KEY=VALUE, got `{pair}`"
            )));
        };
        cfg.set(key.trim(), value)?;
    }
    for (key, value) in extra {
        cfg.set(key, value)?;
    }
    Ok(cfg)
}

fn cmd_synth_data(
    out: &Path,
    emotions: usize,
    dialogues: usize,
    seed: u64,
    vocab: usize,
) -> Result<(), CliError> {
    let cfg = SyntheticConfig {
        num_emotions: emotions,
        vocab_size: vocab,
        dialogues,
        seed,
    };
    write_synthetic_corpus(&cfg, out)?;
    fs::write(
        out.join("synth.echo"),
        format!("emotions = {emotions}\ndialogues = {dialogues}\nseed = {seed}\nvocab = {vocab}\n"),
    )?;
    println!(
        "wrote {dialogues} dialogues over {emotions} emotions to {}",
        out.display()
    );
    Ok(())
}

struct RunDir {
    model: ModelParams,
    vocab: Vocabulary,
    emotion_names: Vec<String>,
    config: RunConfig,
}

/// Load model + vocab + config from a checkpoint's directory.
fn load_run(
    checkpoint: &Path,
    config_flag: Option<&Path>,
    sets: &[String],
) -> Result<RunDir, CliError> {
    let dir = checkpoint
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let echoed = dir.join("config.echo");
    let config_file = match config_flag {
        Some(f) => Some(f.to_path_buf()),
        None if echoed.exists() => Some(echoed),
        None => None,
    };
    let config = build_config(config_file.as_deref(), sets, &[])?;
    let vocab = Vocabulary::load(&dir.join("vocab.txt"))?;
    let emotion_names: Vec<String> = fs::read_to_string(dir.join("emotions.txt"))?
        .lines()
        .map(|l| l.to_string())
        .collect();
    if emotion_names.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: no emotion labels",
            dir.join("emotions.txt").display()
        )));
    }
    let model = ModelParams::new(config.model_config(vocab.len(), emotion_names.len())?)?;
    crate::autograd::load_checkpoint(&model.parameters(), checkpoint)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(RunDir {
        model,
        vocab,
        emotion_names,
        config,
    })
}

fn cmd_train(
    data: Option<PathBuf>,
    config_file: Option<PathBuf>,
    out: &Path,
    no_sip: bool,
    no_lup: bool,
    sets: &[String],
    resume: Option<PathBuf>,
) -> Result<(), CliError> {
    let data_dir = resolve_data_dir(data)?;
    if !data_dir.is_dir() {
        return Err(CliError::Usage(format!(
            "data directory {} does not exist",
            data_dir.display()
        )));
    }
    let mut extra: Vec<(&str, &str)> = Vec::new();
    if no_sip {
        extra.push(("train.no_sip", "true"));
    }
    if no_lup {
        extra.push(("train.no_lup", "true"));
    }
    let config = build_config(config_file.as_deref(), sets, &extra)?;
    let splits = load_empathetic_dialogues(&data_dir)?;
    let kb = KnowledgeBase::load_from_dir(&data_dir, config.get_usize("data.k_max")?)?;
    let vocab = match &resume {
        Some(dir) => Vocabulary::load(&dir.join("vocab.txt"))?,
        None => build_vocabulary(&splits.train, &kb),
    };
    let model = ModelParams::new(config.model_config(vocab.len(), splits.num_emotions())?)?;
    let mut trainer = Trainer::new(model, config.train_config()?)?;
    if let Some(dir) = &resume {
        crate::autograd::load_checkpoint(&trainer.model.parameters(), &dir.join("checkpoint.bin"))
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let optimizer = dir.join("optimizer.bin");
        if optimizer.exists() {
            let step = load_optimizer_state(&trainer.model.parameters(), &optimizer)?;
            trainer.set_step_count(step);
        }
    }

    fs::create_dir_all(out)?;
    fs::write(out.join("config.echo"), config.echo())?;
    vocab.save(&out.join("vocab.txt"))?;
    fs::write(out.join("emotions.txt"), splits.emotion_names.join("\n") + "\n")?;
    let mut log = fs::File::create(out.join("train_log.csv"))?;

    let outcome = train(
        &mut trainer,
        &splits.train,
        &splits.valid,
        &kb,
        &vocab,
        &mut log,
        |stats| {
            println!(
                "epoch {:>3}: train loss {:>8.4}  val ppl {:>8.3}  val acc {:.3}",
                stats.epoch,
                stats.mean_train_loss,
                stats.validation_perplexity,
                stats.validation_accuracy
            );
            false
        },
    )?;

    let params = trainer.model.parameters();
    crate::autograd::save_checkpoint(&params, &out.join("checkpoint.bin"))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    save_optimizer_state(&params, trainer.step_count(), &out.join("optimizer.bin"))?;
    println!(
        "trained {} epochs (best validation perplexity {:.3}); run directory {}",
        outcome.history.len(),
        outcome.best_validation_perplexity,
        out.display()
    );
    Ok(())
}

fn cmd_eval(
    data: Option<PathBuf>,
    checkpoint: &Path,
    config_file: Option<PathBuf>,
    sets: &[String],
    report_path: Option<PathBuf>,
) -> Result<(), CliError> {
    let data_dir = resolve_data_dir(data)?;
    let run = load_run(checkpoint, config_file.as_deref(), sets)?;
    let splits = load_empathetic_dialogues(&data_dir)?;
    if splits.emotion_names != run.emotion_names {
        return Err(CliError::Usage(format!(
            "emotion labels of {} do not match the checkpoint's",
            data_dir.display()
        )));
    }
    let kb = KnowledgeBase::load_from_dir(&data_dir, run.config.get_usize("data.k_max")?)?;
    let report = evaluate(
        &run.model,
        &splits.test,
        &kb,
        &run.vocab,
        &run.config.train_config()?,
        run.config.distinct_mode()?,
    )?;
    print!("{}", report.table());
    let out = report_path.unwrap_or_else(|| {
        checkpoint
            .parent()
            .unwrap_or(Path::new("."))
            .join("eval_report.txt")
    });
    fs::write(&out, report.to_text())?;
    println!("report written to {}", out.display());
    Ok(())
}

fn decode_text(vocab: &Vocabulary, tokens: &[usize]) -> String {
    tokens
        .iter()
        .map(|&t| vocab.decode(t))
        .collect::<Vec<_>>()
        .join(" ")
}

fn cmd_generate(
    checkpoint: &Path,
    context: &str,
    data: Option<PathBuf>,
    sets: &[String],
) -> Result<(), CliError> {
    let run = load_run(checkpoint, None, sets)?;
    let kb = {
        let dir = data.or_else(|| std::env::var(DATA_DIR_ENV).ok().map(PathBuf::from));
        match dir {
            Some(d) if d.is_dir() => {
                KnowledgeBase::load_from_dir(&d, run.config.get_usize("data.k_max")?)?
            }
            _ => KnowledgeBase::empty(),
        }
    };
    let turns: Vec<Vec<String>> = context
        .split("||")
        .map(tokenize)
        .filter(|t| !t.is_empty())
        .collect();
    if turns.is_empty() {
        return Err(CliError::Usage(
            "context is empty; pass utterances separated by `||`".into(),
        ));
    }
    // gold response is unused during generation; any non-empty placeholder works
    let dialogue = Dialogue::new(turns, vec![".".into()], 0)?;
    let config = run.config.train_config()?;
    let max_steps = config.decode_max_steps;

    let virtual_tokens = if !config.disable_lup && dialogue.supports_prediction() {
        let tokens = run
            .model
            .predict_virtual(&dialogue, &kb, &run.vocab, max_steps)?;
        println!("virtual: {}", decode_text(&run.vocab, &tokens));
        Some(tokens)
    } else {
        println!("virtual: prediction branch skipped (needs at least 2 utterances)");
        None
    };
    let response = run.model.respond_greedy(
        &dialogue,
        virtual_tokens.as_deref(),
        &kb,
        &run.vocab,
        config.disable_sip,
        max_steps,
    )?;
    println!("response: {}", decode_text(&run.vocab, &response));
    Ok(())
}

fn cmd_gradcheck(sabotage: bool, seeds: u64) -> Result<(), CliError> {
    let results = gradient_suite(seeds, sabotage);
    let mut failures = 0;
    for r in &results {
        let status = if r.pass { "PASS" } else { "FAIL" };
        println!("[{status}] {:<28} max relative error {:.3e}", r.name, r.max_error);
        if !r.pass {
            failures += 1;
        }
    }
    if failures > 0 {
        return Err(CliError::Numerical(format!(
            "{failures} gradient check(s) failed"
        )));
    }
    println!("all {} checks passed ({seeds} seeds)", results.len());
    Ok(())
}
