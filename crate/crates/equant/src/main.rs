use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use equant::attn_dump::Category;
use equant::config::{parse_assignment, RunConfig, CACHE_DIR_ENV};
use equant::core::eval::{BaselineStatistic, EvalMode};
use equant::core::model::{HeadSource, HeadVariant};
use equant::workflow::{self, Phase};
use equant::{Error, Result};
use toml::Value;

/// EQuANt reading comprehension: preprocessing, training, evaluation and
/// analysis of QANet readers with answerability heads.
///
/// Settings come from `--config` (TOML with [paths], [corpus], [model],
/// [train] and [eval] sections), overridden by flags. Every flag below
/// sets the config key shown in its help; `--set section.key=value`
/// reaches any other key.
#[derive(Parser, Debug)]
#[command(name = "equant", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse SQuAD files, build the vocabulary and write the cache.
    Preprocess,
    /// Train the bare trunk on answerable data with the span loss only.
    Pretrain,
    /// Joint training; `--init-checkpoint` restores a pretrained trunk.
    Train,
    /// Score a checkpoint and write the report and prediction dump.
    Evaluate {
        /// SQuAD file to evaluate instead of the cached `eval.split`.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Start/end probability statistics and the threshold baseline.
    Stats {
        /// SQuAD file to analyse instead of the cached `eval.split`.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Export the similarity matrix and its row softmax for one example.
    AttnDump {
        /// Example id.
        #[arg(long)]
        id: String,
        /// answerable, adversarial-unanswerable or shuffled (default: from
        /// the example).
        #[arg(long)]
        category: Option<Category>,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
        /// SQuAD file holding the example instead of the cached split.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Print the parameter count of each block and the total.
    CountParams {
        /// Character vocabulary size (default: from the cache if present,
        /// else 1427).
        #[arg(long)]
        char_vocab: Option<usize>,
    },
    /// Pair each context with a question from another article.
    Shuffle {
        /// SQuAD input.
        #[arg(long)]
        input: PathBuf,
        /// SQuAD 2.0 output.
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Args, Debug, Default)]
struct Common {
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set model.head2_channels=16`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Directory of the default cache file.
    #[arg(long, env = CACHE_DIR_ENV, global = true)]
    cache_dir: Option<PathBuf>,

    /// paths.cache
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    /// paths.train_data
    #[arg(long, global = true)]
    train_data: Option<PathBuf>,
    /// paths.dev_data
    #[arg(long, global = true)]
    dev_data: Option<PathBuf>,
    /// paths.extra_data.NAME
    #[arg(long, value_name = "NAME=PATH", global = true)]
    extra_data: Vec<String>,
    /// paths.embeddings
    #[arg(long, global = true)]
    embeddings: Option<PathBuf>,
    /// paths.char_embeddings
    #[arg(long, global = true)]
    char_embeddings: Option<PathBuf>,
    /// paths.checkpoint
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// paths.init_checkpoint
    #[arg(long, global = true)]
    init_checkpoint: Option<PathBuf>,
    /// paths.resume
    #[arg(long, global = true)]
    resume: Option<PathBuf>,
    /// paths.out_dir
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// paths.report
    #[arg(long, global = true)]
    report: Option<PathBuf>,

    /// corpus.train_split
    #[arg(long, global = true)]
    train_split: Option<String>,
    /// corpus.max_context_len
    #[arg(long, global = true)]
    max_context_len: Option<usize>,
    /// corpus.max_question_len
    #[arg(long, global = true)]
    max_question_len: Option<usize>,

    /// model.head_variant: none, equant1, equant2 or equant3
    #[arg(long, global = true)]
    head: Option<HeadVariant>,
    /// model.hidden
    #[arg(long, global = true)]
    hidden: Option<usize>,
    /// model.attention_heads
    #[arg(long, global = true)]
    heads: Option<usize>,
    /// model.word_dim
    #[arg(long, global = true)]
    word_dim: Option<usize>,
    /// model.char_dim
    #[arg(long, global = true)]
    char_dim: Option<usize>,
    /// model.head_source: m0 or fused
    #[arg(long, global = true, value_parser = parse_head_source)]
    head_source: Option<HeadSource>,
    /// model.stop_head_gradient
    #[arg(long, global = true)]
    stop_head_gradient: Option<bool>,
    /// model.dropout
    #[arg(long, global = true)]
    dropout: Option<f64>,
    /// model.span_length_cap
    #[arg(long, global = true)]
    span_cap: Option<usize>,
    /// model.answerability_threshold
    #[arg(long, global = true)]
    threshold: Option<f64>,

    /// train.seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// train.batch_size
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    /// train.lr
    #[arg(long, global = true)]
    lr: Option<f64>,
    /// train.max_iterations
    #[arg(long, global = true)]
    max_iterations: Option<u64>,
    /// train.checkpoint_interval
    #[arg(long, global = true)]
    checkpoint_interval: Option<u64>,
    /// train.log_interval
    #[arg(long, global = true)]
    log_interval: Option<u64>,
    /// train.warmup_iterations
    #[arg(long, global = true)]
    warmup: Option<u64>,
    /// train.clip_norm
    #[arg(long, global = true)]
    clip_norm: Option<f64>,

    /// eval.mode: v1, v2 or force_answerable
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<EvalMode>,
    /// eval.split
    #[arg(long, global = true)]
    split: Option<String>,
    /// eval.statistic: product or max_of_two
    #[arg(long, global = true, value_parser = parse_statistic)]
    statistic: Option<BaselineStatistic>,
    /// eval.sweep
    #[arg(long, global = true)]
    sweep: Option<bool>,
}

fn parse_serde<T: serde::de::DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    T::deserialize(serde::de::value::StrDeserializer::<serde::de::value::Error>::new(s)).map_err(|e| e.to_string())
}

fn parse_head_source(s: &str) -> std::result::Result<HeadSource, String> {
    parse_serde(s)
}

fn parse_mode(s: &str) -> std::result::Result<EvalMode, String> {
    parse_serde(s)
}

fn parse_statistic(s: &str) -> std::result::Result<BaselineStatistic, String> {
    parse_serde(s)
}

fn value<T: serde::Serialize>(v: T) -> Value {
    Value::try_from(v).expect("flag values are TOML scalars")
}

fn path(p: &Path) -> Value {
    Value::String(p.to_string_lossy().into_owned())
}

impl Common {
    fn overrides(&self) -> Result<Vec<(String, Value)>> {
        let mut out: Vec<(String, Value)> = Vec::new();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        put("paths.cache", self.cache.as_deref().map(path));
        put("paths.train_data", self.train_data.as_deref().map(path));
        put("paths.dev_data", self.dev_data.as_deref().map(path));
        put("paths.embeddings", self.embeddings.as_deref().map(path));
        put("paths.char_embeddings", self.char_embeddings.as_deref().map(path));
        put("paths.checkpoint", self.checkpoint.as_deref().map(path));
        put("paths.init_checkpoint", self.init_checkpoint.as_deref().map(path));
        put("paths.resume", self.resume.as_deref().map(path));
        put("paths.out_dir", self.out_dir.as_deref().map(path));
        put("paths.report", self.report.as_deref().map(path));
        put("corpus.train_split", self.train_split.clone().map(Value::String));
        put("corpus.max_context_len", self.max_context_len.map(value));
        put("corpus.max_question_len", self.max_question_len.map(value));
        put("model.head_variant", self.head.map(value));
        put("model.hidden", self.hidden.map(value));
        put("model.attention_heads", self.heads.map(value));
        put("model.word_dim", self.word_dim.map(value));
        put("model.char_dim", self.char_dim.map(value));
        put("model.head_source", self.head_source.map(value));
        put("model.stop_head_gradient", self.stop_head_gradient.map(value));
        put("model.dropout", self.dropout.map(value));
        put("model.span_length_cap", self.span_cap.map(value));
        put("model.answerability_threshold", self.threshold.map(value));
        put("train.seed", self.seed.map(value));
        put("train.batch_size", self.batch_size.map(value));
        put("train.lr", self.lr.map(value));
        put("train.max_iterations", self.max_iterations.map(value));
        put("train.checkpoint_interval", self.checkpoint_interval.map(value));
        put("train.log_interval", self.log_interval.map(value));
        put("train.warmup_iterations", self.warmup.map(value));
        put("train.clip_norm", self.clip_norm.map(value));
        put("eval.mode", self.mode.map(value));
        put("eval.split", self.split.clone().map(Value::String));
        put("eval.statistic", self.statistic.map(value));
        put("eval.sweep", self.sweep.map(value));
        for arg in &self.extra_data {
            let (name, p) = arg
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--extra-data expects NAME=PATH, got `{arg}`")))?;
            out.push((format!("paths.extra_data.{name}"), Value::String(p.to_string())));
        }
        for arg in &self.set {
            out.push(parse_assignment(arg)?);
        }
        Ok(out)
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::resolve(cli.common.config.as_deref(), &cli.common.overrides()?, cli.common.cache_dir.as_deref())?;
    match cli.command {
        Command::Preprocess => {
            let s = workflow::preprocess(&cfg)?;
            for (name, n) in &s.splits {
                println!("split {name}: {n} examples");
            }
            println!("vocabulary: {} words, {} chars ({} with vectors)", s.words, s.chars, s.char_vectors);
            println!("wrote {}", s.cache.display());
        }
        Command::Pretrain | Command::Train => {
            let phase = if matches!(cli.command, Command::Pretrain) { Phase::Pretrain } else { Phase::Joint };
            let mut print = |r: &equant::core::train::LogRecord| {
                println!(
                    "iter {:>7}  loss {:.4}  (ans {:.4}, start {:.4}, end {:.4})  lr {:.2e}  {:.1}s",
                    r.iteration, r.loss_total, r.loss_answerability, r.loss_start, r.loss_end, r.lr, r.wall_time_secs
                )
            };
            let out = workflow::train(&cfg, phase, &mut print)?;
            if let Some(r) = &out.restore {
                println!("restored {} parameters, {} freshly initialized", r.restored.len(), r.fresh.len());
            }
            println!("wrote {} (iteration {})", out.final_checkpoint.display(), out.iteration);
        }
        Command::Evaluate { data } => {
            let out = workflow::evaluate(&cfg, data.as_deref())?;
            println!("{}", out.report.summary());
            println!("wrote {} and {}", out.report_path.display(), out.predictions_path.display());
        }
        Command::Stats { data } => {
            let (r, p) = workflow::stats(&cfg, data.as_deref())?;
            let g = |name: &str, s: &equant::core::eval::GroupStats| {
                println!(
                    "{name}: n={} max start {:.4} ± {:.4}, max end {:.4} ± {:.4}",
                    s.count, s.start_mean, s.start_std, s.end_mean, s.end_std
                )
            };
            g("answerable", &r.probability_stats.answerable);
            g("unanswerable", &r.probability_stats.unanswerable);
            println!("baseline at p = {}: {}", r.baseline.threshold, r.baseline.summary());
            println!("wrote {}", p.display());
        }
        Command::AttnDump { id, category, out, data } => {
            let d = workflow::attn_dump(&cfg, data.as_deref(), &id, category, &out)?;
            let (n, m) = d.dims();
            println!("wrote {} ({n}×{m}, {})", out.display(), d.category.name());
        }
        Command::CountParams { char_vocab } => {
            let chars = match char_vocab {
                Some(c) => c,
                None if cfg.cache_path().is_file() => workflow::load_cache(&cfg)?.vocabulary.char_count(),
                None => 1427,
            };
            let count = workflow::parameter_count(&cfg, chars);
            for (block, n) in &count.blocks {
                println!("{block:<28} {n:>10}");
            }
            println!("{:<28} {:>10}", "trunk", count.trunk());
            println!("{:<28} {:>10}", "total", count.total);
        }
        Command::Shuffle { input, output } => {
            let n = workflow::shuffle(&input, &output, cfg.train.seed)?;
            println!("wrote {n} shuffled pairs to {}", output.display());
        }
    }
    Ok(())
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let msg = msg.strip_prefix("error: ").unwrap_or(&msg);
            eprintln!("error: kind=usage: {}", one_line(msg.split("\n\n").next().unwrap_or(msg)));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: kind={}: {}", e.kind(), one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}
