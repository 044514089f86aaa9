//! The commands behind the CLI, as library functions.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use equant_core::corpus::{shuffle_pairs, Batch, BatchConfig, QAExample};
use equant_core::eval::{probability_stats, score, sweep_threshold, threshold_baseline, EvalReport, Prediction};
use equant_core::model::{count_params, prediction_for, Equant, HeadVariant, ModelConfig, ParamCount};
use equant_core::tensor::AdamState;
use equant_core::train::{restore_partial, train_step, Executor, IntervalMeter, LogRecord, Objective, RestoreReport, Schedule};
use rayon::prelude::*;

use crate::attn_dump::{AttentionDump, Category};
use crate::cache::{BuildInputs, Cache, Dataset};
use crate::checkpoint::{Checkpoint, TrainState};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::glove::{load_glove, lookup_keys, Embeddings};
use crate::io::{read_text, write_atomic};
use crate::report::{prediction_map, write_json, StatsReport};
use crate::runlog::RunLog;
use crate::squad::{parse_squad, write_squad};

pub const RUN_LOG_NAME: &str = "run_log.jsonl";
pub const FINAL_CHECKPOINT_NAME: &str = "final.ckpt";
const DEFAULT_OUT_DIR: &str = "equant-run";

/// Runs per-example jobs on the rayon pool. Results come back in index
/// order, so reductions over them stay deterministic.
#[derive(Clone, Copy, Debug, Default)]
pub struct Parallel;

impl Executor for Parallel {
    fn map<R: Send, F: Fn(usize) -> R + Sync>(&self, n: usize, f: F) -> Vec<R> {
        (0..n).into_par_iter().map(|i| f(i)).collect()
    }
}

pub fn checkpoint_name(iteration: u64) -> String {
    format!("checkpoint-{iteration:08}.ckpt")
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} `{}` does not exist", path.display())))
    }
}

fn required<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    path.as_deref().ok_or_else(|| Error::Config(format!("`paths.{key}` is required for this command")))
}

pub fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.paths.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn read_squad(path: &Path) -> Result<Vec<QAExample>> {
    let text = read_text(path)?;
    parse_squad(&text).map_err(|e| match e {
        Error::Parse { path: p, reason } => Error::Parse { path: format!("{}: {p}", path.display()), reason },
        other => other,
    })
}

fn read_vectors(path: &Path, keep: usize, wanted: &std::collections::BTreeSet<String>) -> Result<Embeddings> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    load_glove(BufReader::new(file), keep, Some(wanted)).map_err(|e| match e {
        Error::Format { line, reason } => Error::Format { line, reason: format!("{}: {reason}", path.display()) },
        other => other,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessSummary {
    pub cache: PathBuf,
    pub splits: Vec<(String, usize)>,
    pub words: usize,
    pub chars: usize,
    pub char_vectors: usize,
}

/// Parses every configured split, builds the shared vocabulary and writes
/// the cache.
pub fn preprocess(cfg: &RunConfig) -> Result<PreprocessSummary> {
    let mut sources: Vec<(String, PathBuf)> = Vec::new();
    if let Some(p) = &cfg.paths.train_data {
        sources.push(("train".into(), p.clone()));
    }
    if let Some(p) = &cfg.paths.dev_data {
        sources.push(("dev".into(), p.clone()));
    }
    for (name, p) in &cfg.paths.extra_data {
        sources.push((name.clone(), p.clone()));
    }
    if sources.is_empty() {
        return Err(Error::Config("no dataset given: set paths.train_data, paths.dev_data or paths.extra_data".into()));
    }
    for (name, p) in &sources {
        require_file(p, &format!("dataset `{name}`"))?;
    }
    for (p, what) in [(&cfg.paths.embeddings, "embeddings"), (&cfg.paths.char_embeddings, "char embeddings")] {
        if let Some(p) = p {
            require_file(p, what)?;
        }
    }
    let mut datasets = Vec::new();
    for (name, p) in &sources {
        datasets.push((name.clone(), read_squad(p)?));
    }
    let all = || datasets.iter().flat_map(|(_, e)| e);
    let words = match &cfg.paths.embeddings {
        Some(p) => {
            let keys = lookup_keys(all().flat_map(|e| e.context_tokens.iter().chain(&e.question_tokens)).map(|t| t.text.as_str()));
            Some(read_vectors(p, cfg.model.word_dim, &keys)?)
        }
        None => None,
    };
    let chars = match &cfg.paths.char_embeddings {
        Some(p) => {
            let keys = all()
                .flat_map(|e| e.context.chars().chain(e.question.chars()))
                .map(String::from)
                .collect();
            Some(read_vectors(p, cfg.model.char_dim, &keys)?)
        }
        None => None,
    };
    let cache = Cache::build(BuildInputs {
        datasets,
        words: words.as_ref(),
        chars: chars.as_ref(),
        word_dim: cfg.model.word_dim,
        max_word_len: cfg.corpus.max_word_len,
        seed: cfg.train.seed,
    })?;
    let path = cfg.cache_path().to_path_buf();
    cache.save(&path)?;
    cfg.echo(&parent_dir(&path))?;
    Ok(PreprocessSummary {
        cache: path,
        splits: cache.datasets.iter().map(|d| (d.name.clone(), d.examples.len())).collect(),
        words: cache.vocabulary.word_count(),
        chars: cache.vocabulary.char_count(),
        char_vectors: cache.char_vectors.len(),
    })
}

pub fn load_cache(cfg: &RunConfig) -> Result<Cache> {
    require_file(cfg.cache_path(), "cache")?;
    Cache::load(cfg.cache_path())
}

/// Fresh model over the cache vocabulary. Char-table rows with a file
/// vector start from it.
pub fn new_model(config: &ModelConfig, cache: &Cache, seed: u64) -> Result<Equant<f32>> {
    let mut model = Equant::new(config.clone(), cache.word_vectors.clone(), cache.vocabulary.char_count(), seed)?;
    if !cache.char_vectors.is_empty() {
        let dim = config.char_dim;
        let mut table = model.params.get("char_embedding/table").expect("every model has a char table").clone();
        for (row, v) in &cache.char_vectors {
            if v.len() != dim {
                return Err(Error::Config(format!("cached char vectors have {} components, model uses {dim}", v.len())));
            }
            let r = *row as usize;
            table.data_mut()[r * dim..(r + 1) * dim].copy_from_slice(v);
        }
        model.params.set("char_embedding/table", table)?;
    }
    Ok(model)
}

/// Which phase of the two-step workflow a training run is.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    /// Span-only training of the bare trunk on answerable data.
    Pretrain,
    /// Joint span and answerability training.
    Joint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub final_checkpoint: PathBuf,
    pub iteration: u64,
    pub records: Vec<LogRecord>,
    pub restore: Option<RestoreReport>,
    pub resumed_from: Option<u64>,
}

/// Trains on the configured split, writing checkpoints every
/// `checkpoint_interval` iterations and at the end, and one log line every
/// `log_interval` iterations. `on_record` sees each log line as written.
pub fn train(cfg: &RunConfig, phase: Phase, on_record: &mut dyn FnMut(&LogRecord)) -> Result<TrainOutcome> {
    let mut model_cfg = cfg.model.clone();
    if phase == Phase::Pretrain {
        model_cfg.head_variant = HeadVariant::None;
    }
    if let Some(p) = &cfg.paths.init_checkpoint {
        require_file(p, "init checkpoint")?;
    }
    if let Some(p) = &cfg.paths.resume {
        require_file(p, "resume checkpoint")?;
    }
    let cache = load_cache(cfg)?;
    let data = cache.dataset(&cfg.corpus.train_split)?;
    let objective = match phase {
        Phase::Pretrain => {
            if let Some(ex) = data.examples.iter().find(|e| !e.answerable()) {
                return Err(equant_core::Error::Contract(format!(
                    "trunk pretraining needs answerable data, `{}` is unanswerable",
                    ex.id
                ))
                .into());
            }
            Objective::SpanOnly
        }
        Phase::Joint if model_cfg.head_variant.has_head() => Objective::Joint,
        Phase::Joint => Objective::SpanOnly,
    };
    let out = out_dir(cfg);
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;

    let mut model = new_model(&model_cfg, &cache, cfg.train.seed)?;
    let mut adam = AdamState::new(model.params.shapes());
    let mut meter = IntervalMeter::default();
    let mut start = 0;
    let mut restore = None;
    let mut resumed_from = None;
    if let Some(p) = &cfg.paths.resume {
        let ck = Checkpoint::load(p)?;
        if ck.model != model_cfg {
            return Err(Error::Checkpoint("resume checkpoint was written with a different model config".into()));
        }
        let state = ck.state.clone().ok_or_else(|| Error::Checkpoint("resume checkpoint has no optimizer state".into()))?;
        start = ck.iteration;
        resumed_from = Some(start);
        model = ck.into_model(cache.word_vectors.clone())?;
        adam = state.adam;
        meter = state.meter;
    } else if let Some(p) = &cfg.paths.init_checkpoint {
        let ck = Checkpoint::load(p)?;
        if ck.word_rows != cache.vocabulary.word_count() {
            return Err(Error::Checkpoint("init checkpoint was trained against a different vocabulary".into()));
        }
        restore = Some(restore_partial(&mut model.params, &ck.params, &[])?);
    }
    let run_cfg = RunConfig { model: model_cfg, ..cfg.clone() };
    run_cfg.echo(&out)?;

    let batch_cfg = run_cfg.batch_config();
    let ids = data.ids();
    let mut schedule = Schedule::new(batch_cfg, cfg.train.seed);
    let mut log = RunLog::open(&out.join(RUN_LOG_NAME), Some(start))?;
    let mut records = Vec::new();
    let clock = Instant::now();
    let t = &cfg.train;
    let mut last_saved = None;
    for k in start..t.max_iterations {
        let batch = schedule.batch(&data.encoded, k)?;
        let loss = train_step(&mut model, &mut adam, &batch, &ids, objective, t, k, &Parallel)?;
        meter.add(&loss);
        let done = k + 1;
        if done % t.log_interval == 0 {
            let record = meter.take(done, t.lr_at(k), clock.elapsed().as_secs_f64());
            log.append(&record)?;
            on_record(&record);
            records.push(record);
        }
        if done % t.checkpoint_interval == 0 || done == t.max_iterations {
            let ck = Checkpoint {
                model: model.config.clone(),
                train: Some(t.clone()),
                iteration: done,
                word_rows: cache.vocabulary.word_count(),
                params: model.params.clone(),
                state: Some(TrainState { adam: adam.clone(), meter: meter.clone() }),
            };
            let bytes = ck.to_bytes()?;
            write_atomic(&out.join(checkpoint_name(done)), &bytes)?;
            if done == t.max_iterations {
                write_atomic(&out.join(FINAL_CHECKPOINT_NAME), &bytes)?;
            }
            last_saved = Some(done);
        }
    }
    if last_saved.is_none() {
        let ck = Checkpoint {
            model: model.config.clone(),
            train: Some(t.clone()),
            iteration: start,
            word_rows: cache.vocabulary.word_count(),
            params: model.params.clone(),
            state: Some(TrainState { adam, meter }),
        };
        ck.save(&out.join(FINAL_CHECKPOINT_NAME))?;
    }
    Ok(TrainOutcome {
        final_checkpoint: out.join(FINAL_CHECKPOINT_NAME),
        iteration: start.max(t.max_iterations),
        records,
        restore,
        resumed_from,
    })
}

/// The checkpointed model with the run's decision settings applied.
pub fn load_model(cfg: &RunConfig, cache: &Cache) -> Result<Equant<f32>> {
    let path = required(&cfg.paths.checkpoint, "checkpoint")?;
    require_file(path, "checkpoint")?;
    let mut model = Checkpoint::load(path)?.into_model(cache.word_vectors.clone())?;
    model.config.answerability_threshold = cfg.model.answerability_threshold;
    model.config.span_length_cap = cfg.model.span_length_cap;
    Ok(model)
}

/// The evaluation split: `data` (a SQuAD file encoded against the cache
/// vocabulary) when given, else the configured cache split.
pub fn eval_dataset(cfg: &RunConfig, cache: &Cache, data: Option<&Path>) -> Result<Dataset> {
    match data {
        Some(p) => {
            require_file(p, "dataset")?;
            Ok(cache.encode_extra(&p.display().to_string(), read_squad(p)?))
        }
        None => cache.dataset(&cfg.eval.split).cloned(),
    }
}

/// Threshold-free predictions for every example, in dataset order.
pub fn predictions(model: &Equant<f32>, data: &Dataset, batch_cfg: &BatchConfig) -> Result<Vec<Prediction>> {
    (0..data.examples.len())
        .into_par_iter()
        .map(|i| {
            let batch = Batch::from_examples(&data.encoded, vec![i], batch_cfg);
            let out = model.infer(batch.input(0).trimmed())?;
            Ok(prediction_for(&out, &model.config, &data.examples[i]))
        })
        .collect()
}

fn report_path(cfg: &RunConfig, default_name: &str) -> PathBuf {
    cfg.paths.report.clone().unwrap_or_else(|| out_dir(cfg).join(default_name))
}

/// `<stem>.predictions.json` next to `report`.
pub fn predictions_path(report: &Path) -> PathBuf {
    let stem = report.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    parent_dir(report).join(format!("{stem}.predictions.json"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluateOutcome {
    pub report: EvalReport,
    pub report_path: PathBuf,
    pub predictions_path: PathBuf,
}

/// Scores the checkpoint and writes the report and the prediction dump.
pub fn evaluate(cfg: &RunConfig, data: Option<&Path>) -> Result<EvaluateOutcome> {
    let cache = load_cache(cfg)?;
    let model = load_model(cfg, &cache)?;
    let ds = eval_dataset(cfg, &cache, data)?;
    let preds = predictions(&model, &ds, &cfg.batch_config())?;
    let report = score(&preds, cfg.eval.mode, model.config.answerability_threshold)?;
    let path = report_path(cfg, "report.json");
    let pred_path = predictions_path(&path);
    write_json(&path, &report)?;
    write_json(&pred_path, &prediction_map(&report))?;
    cfg.echo(&parent_dir(&path))?;
    Ok(EvaluateOutcome { report, report_path: path, predictions_path: pred_path })
}

/// Probability analysis plus the max-probability threshold baseline.
pub fn stats(cfg: &RunConfig, data: Option<&Path>) -> Result<(StatsReport, PathBuf)> {
    let cache = load_cache(cfg)?;
    let model = load_model(cfg, &cache)?;
    let ds = eval_dataset(cfg, &cache, data)?;
    let preds = predictions(&model, &ds, &cfg.batch_config())?;
    let statistic = cfg.eval.statistic;
    let sweep = cfg.eval.sweep.then(|| sweep_threshold(&preds, statistic));
    let threshold = sweep.map_or(cfg.model.answerability_threshold, |s| s.threshold);
    let report = StatsReport {
        probability_stats: probability_stats(&preds),
        statistic,
        sweep,
        baseline: threshold_baseline(&preds, threshold, statistic),
    };
    let path = report_path(cfg, "stats.json");
    write_json(&path, &report)?;
    cfg.echo(&parent_dir(&path))?;
    Ok((report, path))
}

/// Category implied by the example itself.
pub fn default_category(ex: &QAExample) -> Category {
    if ex.answerable() {
        Category::Answerable
    } else if ex.id.contains("-shuffled-") {
        Category::Shuffled
    } else {
        Category::AdversarialUnanswerable
    }
}

/// Attention maps of one example, over the tokens the model actually saw.
pub fn attention_dump(model: &Equant<f32>, data: &Dataset, id: &str, category: Option<Category>, batch_cfg: &BatchConfig) -> Result<AttentionDump> {
    let i = data
        .examples
        .iter()
        .position(|e| e.id == id)
        .ok_or_else(|| Error::Config(format!("no example with id `{id}` in `{}`", data.name)))?;
    let ex = &data.examples[i];
    let batch = Batch::from_examples(&data.encoded, vec![i], batch_cfg);
    let input = batch.input(0).trimmed();
    let (s, softmax) = model.attention_maps(input)?;
    let (n, m) = s.dims2()?;
    let tokens = |ts: &[equant_core::corpus::Token], k: usize| ts.iter().take(k).map(|t| t.text.clone()).collect();
    Ok(AttentionDump {
        category: category.unwrap_or_else(|| default_category(ex)),
        id: ex.id.clone(),
        context_tokens: tokens(&ex.context_tokens, n),
        question_tokens: tokens(&ex.question_tokens, m),
        s: s.into_data(),
        softmax: softmax.into_data(),
    })
}

pub fn attn_dump(cfg: &RunConfig, data: Option<&Path>, id: &str, category: Option<Category>, out: &Path) -> Result<AttentionDump> {
    let cache = load_cache(cfg)?;
    let model = load_model(cfg, &cache)?;
    let ds = eval_dataset(cfg, &cache, data)?;
    let dump = attention_dump(&model, &ds, id, category, &cfg.batch_config())?;
    dump.save(out)?;
    cfg.echo(&parent_dir(out))?;
    Ok(dump)
}

pub fn parameter_count(cfg: &RunConfig, char_vocab: usize) -> ParamCount {
    count_params(&cfg.model, char_vocab)
}

/// Pairs every context with a question from another article and writes the
/// result as SQuAD 2.0 JSON. Returns the number of pairs.
pub fn shuffle(input: &Path, output: &Path, seed: u64) -> Result<usize> {
    require_file(input, "dataset")?;
    let examples = read_squad(input)?;
    let shuffled = shuffle_pairs(&examples, seed)?;
    let text = serde_json::to_string_pretty(&write_squad(&shuffled)).map_err(|e| Error::Config(e.to_string()))?;
    write_atomic(output, text.as_bytes())?;
    Ok(shuffled.len())
}
