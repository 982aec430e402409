use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::manifest::{manifest_path, Stage, StagePlan};
use super::{
    AnnotateArgs, CliError, ContextArg, EvalReduceArgs, QaArgs, ReduceArgs, ReportArgs, SftArgs,
    SplitArg, SplitSelect, SynthArgs, TrainRlArgs,
};
use crate::annotate::{annotate_dataset, AnnotationStatus, RelevanceAnnotation, SkipStats};
use crate::data::{
    annotated_pairs, generate_synthetic, load_dataset, read_records, save_dataset, split_by_table, InstanceRecord,
    QueryMix, SplitRatios, SynthConfig,
};
use crate::llm::{mock_complete, qa_prompt, truncate_prompt, ChatMessage, LlmClient, LlmConfig, MockLlmConfig};
use crate::metrics::{
    bucket_csv, bucketed_accuracy, context_tokens, dataset_stats, downstream_accuracy, recall_report,
    reduction_ratio, Averaging, Report, REPORT_FORMAT_VERSION,
};
use crate::policy::{ItemKind, PolicyModel};
use crate::table::{count_tokens, linearize_selected, linearize_table, Instance, Reduction};
use crate::trainer::{
    derived_rng, gold_items, init_model, make_examples, predict_all, train_rl as run_rl, train_sft_with,
    write_json, PpoConfig, RunDir, SftConfig,
};

fn load(path: &Path) -> Result<Vec<InstanceRecord>, CliError> {
    let (records, errors) = load_dataset(path)?;
    for e in &errors {
        log::warn!("{}: skipping {e}", path.display());
    }
    Ok(records)
}

fn select(records: Vec<InstanceRecord>, sel: &SplitSelect) -> Result<Vec<InstanceRecord>, CliError> {
    if sel.split == SplitArg::All {
        return Ok(records);
    }
    let split = split_by_table(records, SplitRatios::default(), sel.split_seed)?;
    Ok(match sel.split {
        SplitArg::Train => split.train,
        SplitArg::Valid => split.valid,
        _ => split.test,
    })
}

/// Parse `"0,200,400"` into ascending token boundaries.
pub(crate) fn parse_buckets(text: &str) -> Result<Vec<usize>, CliError> {
    let bounds = text
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Config(format!("bad --buckets {text:?}: {e}")))?;
    if bounds.is_empty() || bounds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Config(format!("--buckets {text:?} must be strictly ascending")));
    }
    Ok(bounds)
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| CliError::Config(format!("{}: line {}: {e}", path.display(), i + 1)))?;
        out.push(item);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        let value = serde_json::to_value(item).map_err(std::io::Error::other)?;
        writeln!(w, "{}", serde_json::to_string(&value).map_err(std::io::Error::other)?)?;
    }
    w.flush()?;
    Ok(())
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn file_stage(
    command: &str,
    argv: &[String],
    config: serde_json::Value,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<PathBuf>,
    out: &Path,
) -> Result<Stage, CliError> {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Stage::begin(StagePlan {
        command,
        argv,
        config,
        seeds,
        inputs,
        outputs: vec![out.to_path_buf()],
        manifest: manifest_path(out, false),
    })
}

fn print_json<T: Serialize>(v: &T) {
    // A closed pipe on stdout is not worth failing the command over.
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string(&to_value(v)).unwrap_or_default());
}

pub fn annotate(args: &AnnotateArgs, jobs: usize, argv: &[String]) -> Result<SkipStats, CliError> {
    let stage = file_stage("annotate", argv, to_value(args), BTreeMap::new(), vec![args.input.clone()], &args.out)?;
    stage.run(|| {
        let mut records = Vec::new();
        let mut items = Vec::new();
        for item in read_records(&args.input)? {
            match item {
                Ok(r) => {
                    items.push(Ok(r.instance()));
                    records.push(r);
                }
                Err(e) => {
                    log::error!("{}: {e}", args.input.display());
                    items.push(Err(e));
                }
            }
        }
        let (annotated, stats) = annotate_dataset(items, args.target.into(), jobs);
        for (record, (_, ann)) in records.iter_mut().zip(annotated.into_iter().flatten()) {
            record.set_annotation(&ann);
        }
        save_dataset(&args.out, &records)?;
        print_json(&stats);
        Ok(stats)
    })
}

pub fn synth(args: &SynthArgs, argv: &[String]) -> Result<usize, CliError> {
    let cfg = SynthConfig {
        instances: args.n,
        columns: (args.min_columns, args.max_columns),
        rows: (args.min_rows, args.max_rows),
        value_vocab: args.value_vocab,
        questions_per_table: args.questions_per_table,
        mix: QueryMix::default(),
        seed: args.seed,
    };
    let seeds = BTreeMap::from([("seed".to_string(), args.seed)]);
    let stage = file_stage("synth", argv, to_value(&cfg), seeds, vec![], &args.out)?;
    stage.run(|| {
        let records = generate_synthetic(&cfg)?;
        save_dataset(&args.out, &records)?;
        Ok(records.len())
    })
}

/// Settings file of `sft`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SftJob {
    #[serde(flatten)]
    pub sft: SftConfig,
    /// Share of the training split used for fitting; the vocabulary still
    /// covers the whole split.
    pub train_fraction: f64,
    pub split: SplitRatios,
    pub split_seed: u64,
}

impl Default for SftJob {
    fn default() -> Self {
        SftJob {
            sft: SftConfig::default(),
            train_fraction: 1.0,
            split: SplitRatios::default(),
            split_seed: 0,
        }
    }
}

/// Settings file of `train-rl`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RlJob {
    #[serde(flatten)]
    pub ppo: PpoConfig,
    pub split: SplitRatios,
    pub split_seed: u64,
}

/// Seeded subset holding `fraction` of `items` (at least one), in input order.
fn fraction_subset<T: Clone>(items: &[T], fraction: f64, seed: u64) -> Vec<T> {
    if fraction >= 1.0 || items.is_empty() {
        return items.to_vec();
    }
    let n = ((items.len() as f64 * fraction).round() as usize).clamp(1, items.len());
    let mut idx = sample(&mut derived_rng(seed, &[3]), items.len(), n).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| items[i].clone()).collect()
}

fn dir_stage(
    command: &str,
    argv: &[String],
    config: serde_json::Value,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<PathBuf>,
    out: &Path,
) -> Result<Stage, CliError> {
    Stage::begin(StagePlan {
        command,
        argv,
        config,
        seeds,
        inputs,
        outputs: vec![out.to_path_buf()],
        manifest: manifest_path(out, true),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub best: usize,
    pub best_valid_recall: Option<f64>,
    pub train_examples: usize,
    pub valid_examples: usize,
}

pub fn sft(args: &SftArgs, argv: &[String]) -> Result<TrainSummary, CliError> {
    let job: SftJob = read_config(args.config.as_deref())?;
    if !(job.train_fraction > 0.0 && job.train_fraction <= 1.0) {
        return Err(CliError::Config("train_fraction must be in (0, 1]".into()));
    }
    job.sft.validate()?;
    let seeds = BTreeMap::from([("seed".to_string(), job.sft.seed), ("split_seed".to_string(), job.split_seed)]);
    let config = serde_json::json!({"args": to_value(args), "job": to_value(&job)});
    let stage = dir_stage("sft", argv, config, seeds, vec![args.data.clone()], &args.out)?;
    stage.run(|| {
        let split = split_by_table(load(&args.data)?, job.split, job.split_seed)?;
        let kind: ItemKind = args.target.into();
        let train_pairs = annotated_pairs(&split.train);
        let model = init_model(kind, &train_pairs, &job.sft);
        let subset = fraction_subset(&train_pairs, job.train_fraction, job.sft.seed);
        let train = make_examples(&model, &subset);
        let valid = make_examples(&model, &annotated_pairs(&split.valid));
        let run = RunDir::create(&args.out)?;
        run.write_config(&job)?;
        let vocab = model.vocab.clone();
        let outcome = train_sft_with(model, &train, &valid, &job.sft, |rec, params| {
            run.append_metrics(rec)?;
            if args.save_checkpoints {
                let path = run.path().join("checkpoints").join(format!("epoch-{}.model.json", rec.epoch));
                PolicyModel {
                    kind,
                    vocab: vocab.clone(),
                    params: params.clone(),
                }
                .save(&path)?;
            }
            Ok(())
        })?;
        run.write_model(&outcome.model)?;
        let summary = TrainSummary {
            best: outcome.best_epoch,
            best_valid_recall: outcome.history[outcome.best_epoch - 1].valid_recall,
            train_examples: train.len(),
            valid_examples: valid.len(),
        };
        print_json(&summary);
        Ok(summary)
    })
}

pub fn train_rl(args: &TrainRlArgs, argv: &[String]) -> Result<TrainSummary, CliError> {
    let job: RlJob = read_config(args.config.as_deref())?;
    job.ppo.validate()?;
    let seeds = BTreeMap::from([("seed".to_string(), job.ppo.seed), ("split_seed".to_string(), job.split_seed)]);
    let config = serde_json::json!({"args": to_value(args), "job": to_value(&job)});
    let stage = dir_stage(
        "train-rl",
        argv,
        config,
        seeds,
        vec![args.data.clone(), args.init.clone()],
        &args.out,
    )?;
    stage.run(|| {
        let init = PolicyModel::load(&args.init)?;
        let kind: ItemKind = args.target.into();
        if init.kind != kind {
            return Err(CliError::Config(format!(
                "--target {:?} does not match the {:?} model in {}",
                args.target,
                init.kind,
                args.init.display()
            )));
        }
        let split = split_by_table(load(&args.data)?, job.split, job.split_seed)?;
        let train = make_examples(&init, &annotated_pairs(&split.train));
        let valid = make_examples(&init, &annotated_pairs(&split.valid));
        let run = RunDir::create(&args.out)?;
        run.write_config(&job)?;
        let vocab = init.vocab.clone();
        let outcome = run_rl(init, &train, &valid, &job.ppo, |rec, params| {
            run.append_metrics(rec)?;
            if rec.valid_recall.is_some() {
                PolicyModel {
                    kind,
                    vocab: vocab.clone(),
                    params: params.clone(),
                }
                .save(&run.checkpoint_path(rec.iteration))?;
            }
            Ok(())
        })?;
        run.write_model(&outcome.model)?;
        let summary = TrainSummary {
            best: outcome.best_iteration,
            best_valid_recall: outcome
                .history
                .iter()
                .find(|r| r.iteration == outcome.best_iteration)
                .and_then(|r| r.valid_recall),
            train_examples: train.len(),
            valid_examples: valid.len(),
        };
        print_json(&summary);
        Ok(summary)
    })
}

pub fn eval_reduce(args: &EvalReduceArgs, argv: &[String]) -> Result<Report, CliError> {
    let boundaries = args.buckets.as_deref().map(parse_buckets).transpose()?;
    let stage = file_stage(
        "eval-reduce",
        argv,
        to_value(args),
        BTreeMap::from([("split_seed".to_string(), args.select.split_seed)]),
        vec![args.data.clone(), args.model.clone()],
        &args.report,
    )?;
    stage.run(|| {
        let model = PolicyModel::load(&args.model)?;
        let records = select(load(&args.data)?, &args.select)?;
        let pairs: Vec<(Instance, RelevanceAnnotation)> = annotated_pairs(&records)
            .into_iter()
            .filter(|(_, ann)| gold_items(model.kind, ann).is_some())
            .collect();
        let examples = make_examples(&model, &pairs);
        let predicted = predict_all(&model.params, &examples)?;
        let gold: Vec<BTreeSet<usize>> = examples.iter().map(|e| e.gold.clone()).collect();
        let lengths: Vec<usize> = pairs.iter().map(|(inst, _)| context_tokens(inst)).collect();
        let averaging: Averaging = args.averaging.into();
        let mut recall = recall_report(
            &predicted,
            &gold,
            averaging,
            boundaries.as_deref().map(|b| (lengths.as_slice(), b)),
        )?;
        if !pairs.is_empty() {
            let ratios: f64 = pairs
                .iter()
                .zip(&predicted)
                .map(|((inst, ann), pred)| {
                    let reduction = match model.kind {
                        ItemKind::Columns => Reduction {
                            columns: pred.clone(),
                            rows: (0..inst.table.num_rows()).collect(),
                        },
                        ItemKind::Rows => Reduction {
                            columns: ann.relevant_columns.clone(),
                            rows: pred.clone(),
                        },
                    };
                    reduction_ratio(inst, &reduction)
                })
                .sum();
            recall.mean_reduction_ratio = Some(ratios / pairs.len() as f64);
        }
        let instances: Vec<Instance> = records.iter().map(InstanceRecord::instance).collect();
        let mut report = Report {
            format_version: REPORT_FORMAT_VERSION,
            dataset: Some(dataset_stats(&instances)),
            ..Default::default()
        };
        match model.kind {
            ItemKind::Columns => report.columns = Some(recall),
            ItemKind::Rows => report.rows = Some(recall),
        }
        write_json(&args.report, &report)?;
        Ok(report)
    })
}

/// One line of the `reduce` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionRecord {
    pub id: String,
    pub columns: BTreeSet<usize>,
    pub rows: BTreeSet<usize>,
    /// `gold` or `predicted`.
    pub column_source: String,
    pub kept_cells: usize,
    pub total_cells: usize,
    /// Full-context token count of the table.
    pub table_tokens: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_columns: Option<BTreeSet<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_rows: Option<BTreeSet<usize>>,
}

fn ok_annotation(record: &InstanceRecord) -> Option<RelevanceAnnotation> {
    record.annotation().filter(|a| a.status == AnnotationStatus::Ok)
}

fn load_model(path: Option<&Path>, kind: ItemKind) -> Result<Option<PolicyModel>, CliError> {
    let Some(path) = path else {
        return Ok(None);
    };
    let model = PolicyModel::load(path)?;
    if model.kind != kind {
        return Err(CliError::Config(format!(
            "{} is a {:?} model, expected {kind:?}",
            path.display(),
            model.kind
        )));
    }
    Ok(Some(model))
}

pub fn reduce(args: &ReduceArgs, argv: &[String]) -> Result<Vec<ReductionRecord>, CliError> {
    if !args.gold_columns && args.col_model.is_none() {
        return Err(CliError::Config("either --col-model or --gold-columns is required".into()));
    }
    let inputs: Vec<PathBuf> = std::iter::once(args.data.clone())
        .chain(args.col_model.clone())
        .chain(args.row_model.clone())
        .collect();
    let seeds = BTreeMap::from([("split_seed".to_string(), args.select.split_seed)]);
    let stage = file_stage("reduce", argv, to_value(args), seeds, inputs, &args.out)?;
    stage.run(|| {
        let col_model = if args.gold_columns {
            None
        } else {
            load_model(args.col_model.as_deref(), ItemKind::Columns)?
        };
        let row_model = load_model(args.row_model.as_deref(), ItemKind::Rows)?;
        let records = select(load(&args.data)?, &args.select)?;
        let out: Vec<Option<ReductionRecord>> = records
            .par_iter()
            .map(|record| {
                let inst = record.instance();
                let ann = ok_annotation(record);
                let columns = match (&col_model, &ann) {
                    (Some(m), _) => m.predict(&m.encode_instance(&inst, None))?,
                    (None, Some(a)) => a.relevant_columns.clone(),
                    (None, None) => {
                        log::warn!("{}: no annotation; skipped", record.id);
                        return Ok(None);
                    }
                };
                let rows = match &row_model {
                    Some(m) => m.predict(&m.encode_instance(&inst, Some(&columns)))?,
                    None => (0..inst.table.num_rows()).collect(),
                };
                Ok(Some(ReductionRecord {
                    id: record.id.clone(),
                    kept_cells: columns.len() * rows.len(),
                    total_cells: inst.table.num_cells(),
                    table_tokens: context_tokens(&inst),
                    columns,
                    rows,
                    column_source: if col_model.is_some() { "predicted" } else { "gold" }.into(),
                    gold_columns: ann.as_ref().map(|a| a.relevant_columns.clone()),
                    gold_rows: ann.and_then(|a| a.relevant_rows),
                }))
            })
            .collect::<Result<_, CliError>>()?;
        let out: Vec<ReductionRecord> = out.into_iter().flatten().collect();
        write_jsonl(&args.out, &out)?;
        Ok(out)
    })
}

/// One line of the `qa` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub id: String,
    pub prediction: String,
    pub answers: Vec<String>,
    /// `full`, `gold` or `reduced`.
    pub context: String,
    /// Tokens of the table text given to the reader.
    pub context_tokens: usize,
    /// Full-context token count of the table.
    pub table_tokens: usize,
    pub correct: bool,
}

fn context_text(
    record: &InstanceRecord,
    inst: &Instance,
    mode: ContextArg,
    reductions: &HashMap<String, ReductionRecord>,
) -> Result<Option<String>, CliError> {
    let reduction = match mode {
        ContextArg::Full => return Ok(Some(linearize_table(&inst.table).text)),
        ContextArg::Gold => match ok_annotation(record) {
            Some(a) => {
                let rows = a.relevant_rows.unwrap_or_else(|| (0..inst.table.num_rows()).collect());
                Reduction::new(a.relevant_columns, rows)
            }
            None => return Ok(None),
        },
        ContextArg::Reduced => match reductions.get(&record.id) {
            Some(r) => Reduction::new(r.columns.iter().copied(), r.rows.iter().copied()),
            None => return Ok(None),
        },
    };
    if reduction.columns.is_empty() {
        return Ok(Some(String::new()));
    }
    let rows: Vec<usize> = reduction.rows.iter().copied().collect();
    Ok(Some(linearize_selected(&inst.table, &reduction.columns, &rows)?.text))
}

pub fn qa(args: &QaArgs, argv: &[String]) -> Result<Vec<AnswerRecord>, CliError> {
    let mut llm_cfg: LlmConfig = read_config(args.llm_config.as_deref())?;
    if let Some(endpoint) = &args.endpoint {
        llm_cfg.endpoint = endpoint.clone();
    }
    if args.context == ContextArg::Reduced && args.reductions.is_none() {
        return Err(CliError::Config("--context reduced needs --reductions".into()));
    }
    let mock = match (args.mock, args.budget) {
        (false, _) => None,
        (true, None) => Some(MockLlmConfig { budget: usize::MAX }),
        (true, Some(b)) => {
            Some(MockLlmConfig::new(b).ok_or_else(|| CliError::Config("--budget must be positive".into()))?)
        }
    };
    let inputs: Vec<PathBuf> = std::iter::once(args.data.clone()).chain(args.reductions.clone()).collect();
    let config = serde_json::json!({"args": to_value(args), "llm": to_value(&llm_cfg)});
    let seeds = BTreeMap::from([("split_seed".to_string(), args.select.split_seed)]);
    let stage = file_stage("qa", argv, config, seeds, inputs, &args.out)?;
    stage.run(|| {
        let records = select(load(&args.data)?, &args.select)?;
        if mock.is_some() {
            if let Some(r) = records.iter().find(|r| r.sql.is_none()) {
                return Err(CliError::Config(format!("--mock needs gold sql; record {} has none", r.id)));
            }
        }
        let reductions: HashMap<String, ReductionRecord> = match &args.reductions {
            Some(p) => read_jsonl::<ReductionRecord>(p)?
                .into_iter()
                .map(|r| (r.id.clone(), r))
                .collect(),
            None => HashMap::new(),
        };
        let mut items = Vec::new();
        for record in &records {
            let inst = record.instance();
            match context_text(record, &inst, args.context, &reductions)? {
                Some(text) => items.push((record, inst, text)),
                None => log::warn!("{}: no {:?} context; skipped", record.id, args.context),
            }
        }
        let predictions: Vec<String> = match &mock {
            Some(cfg) => items
                .par_iter()
                .map(|(r, inst, text)| {
                    let prompt = qa_prompt(&inst.question, text);
                    let sql = r.sql.as_deref().unwrap_or_default();
                    mock_complete(&inst.question, &prompt, cfg, sql, &inst.answers)
                })
                .collect(),
            None => {
                let client = LlmClient::from_env(llm_cfg.clone())?;
                let conversations: Vec<Vec<ChatMessage>> = items
                    .iter()
                    .map(|(_, inst, text)| {
                        let text = match args.budget {
                            Some(b) => {
                                let template = count_tokens(&qa_prompt(&inst.question, ""));
                                truncate_prompt(text, b.saturating_sub(template))
                            }
                            None => text.as_str(),
                        };
                        vec![ChatMessage::user(qa_prompt(&inst.question, text))]
                    })
                    .collect();
                client
                    .complete_batch(&conversations)
                    .into_iter()
                    .map(|r| r.map(|s| s.trim().to_string()))
                    .collect::<Result<_, _>>()?
            }
        };
        let label = format!("{:?}", args.context).to_lowercase();
        let out: Vec<AnswerRecord> = items
            .iter()
            .zip(predictions)
            .map(|((r, inst, text), prediction)| AnswerRecord {
                id: r.id.clone(),
                correct: crate::metrics::answer_correct(&prediction, &inst.answers),
                prediction,
                answers: inst.answers.clone(),
                context: label.clone(),
                context_tokens: count_tokens(text),
                table_tokens: context_tokens(inst),
            })
            .collect();
        write_jsonl(&args.out, &out)?;
        let correct = out.iter().filter(|a| a.correct).count();
        print_json(&serde_json::json!({"answered": out.len(), "correct": correct}));
        Ok(out)
    })
}

pub fn report(args: &ReportArgs, argv: &[String]) -> Result<Report, CliError> {
    let boundaries = parse_buckets(&args.buckets)?;
    let inputs: Vec<PathBuf> = std::iter::once(args.answers.clone()).chain(args.reductions.clone()).collect();
    let stage = file_stage("report", argv, to_value(args), BTreeMap::new(), inputs, &args.out)?;
    stage.run(|| {
        let answers: Vec<AnswerRecord> = read_jsonl(&args.answers)?;
        let predicted: Vec<String> = answers.iter().map(|a| a.prediction.clone()).collect();
        let gold: Vec<Vec<String>> = answers.iter().map(|a| a.answers.clone()).collect();
        let lengths: Vec<usize> = answers.iter().map(|a| a.table_tokens).collect();
        let mut report = Report {
            accuracy: (!answers.is_empty())
                .then(|| downstream_accuracy(&predicted, &gold))
                .transpose()?,
            bucket_accuracy: bucketed_accuracy(&predicted, &gold, &lengths, &boundaries)?,
            ..Default::default()
        };
        if let Some(path) = &args.reductions {
            let reductions: Vec<ReductionRecord> = read_jsonl(path)?;
            let ratio = |rs: &[&ReductionRecord]| {
                (!rs.is_empty()).then(|| {
                    rs.iter()
                        .map(|r| r.kept_cells as f64 / r.total_cells.max(1) as f64)
                        .sum::<f64>()
                        / rs.len() as f64
                })
            };
            let with_cols: Vec<&ReductionRecord> = reductions.iter().filter(|r| r.gold_columns.is_some()).collect();
            let mut cols = recall_report(
                &with_cols.iter().map(|r| r.columns.clone()).collect::<Vec<_>>(),
                &with_cols.iter().map(|r| r.gold_columns.clone().unwrap_or_default()).collect::<Vec<_>>(),
                Averaging::Macro,
                Some((&with_cols.iter().map(|r| r.table_tokens).collect::<Vec<_>>(), &boundaries)),
            )?;
            cols.mean_reduction_ratio = ratio(&reductions.iter().collect::<Vec<_>>());
            report.columns = Some(cols);
            let with_rows: Vec<&ReductionRecord> = reductions.iter().filter(|r| r.gold_rows.is_some()).collect();
            if !with_rows.is_empty() {
                let rows = recall_report(
                    &with_rows.iter().map(|r| r.rows.clone()).collect::<Vec<_>>(),
                    &with_rows.iter().map(|r| r.gold_rows.clone().unwrap_or_default()).collect::<Vec<_>>(),
                    Averaging::Macro,
                    Some((&with_rows.iter().map(|r| r.table_tokens).collect::<Vec<_>>(), &boundaries)),
                )?;
                report.rows = Some(rows);
            }
        }
        write_json(&args.out, &report)?;
        if let Some(csv) = &args.csv {
            std::fs::write(csv, bucket_csv(&report.bucket_accuracy))?;
        }
        print_json(&report.bucket_accuracy);
        Ok(report)
    })
}
