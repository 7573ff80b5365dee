use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use spellscan::artifact::{read_jsonl, write_file, write_jsonl};
use spellscan::attribution::{attribute_all, render_all, RenderFormat};
use spellscan::corpus::{corpus_hash, load_corpus_dir, segment_corpus, Segment, SegmentKind, SplitStrategy};
use spellscan::dataset::{
    build_eval_dataset, build_sequence_dataset, build_token_dataset, build_token_eval_dataset, BuildConfig, SeqExample,
    SeqLabel, TaskKind, TokExample,
};
use spellscan::eval::{
    dictionary_baseline, score_sequence_predictions, score_token_predictions_softmatch, EvalReport, PredictionRecord,
    ReferenceWordlist,
};
use spellscan::model::{
    init_params, load_checkpoint, load_checkpoint_for, predict_sequence, predict_tokens, prepare_sequence,
    prepare_token, save_checkpoint, train as train_model, Checkpoint, HeadSpec, Pooling, TextItem,
};
use spellscan::spellbook::{MatchMode, SpellLexicon};
use spellscan::tokenizer::{extend_vocab as extend, split_words, Vocabulary};
use spellscan::{sha256_hex, Error, Exec};

use crate::study::{parse_pooling, StudyFile};
use crate::{
    AttributeArgs, BaselineArgs, BuildArgs, EvaluateArgs, ExtendVocabArgs, IngestArgs, PredictArgs, ScreenArgs,
    TrainArgs,
};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(e) => e.kind(),
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        }
    }

    pub fn is_usage(&self) -> bool {
        matches!(self, CliError::Usage(_))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn require_file(path: &Path) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::usage(format!("missing file: {}", path.display())))
    }
}

fn require_dir(path: &Path) -> CliResult {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::usage(format!("missing directory: {}", path.display())))
    }
}

/// Name and content hash of an input file. Paths are left out so that runs
/// in different directories produce identical artifacts.
fn file_echo(path: &Path) -> CliResult<Value> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(json!({
        "name": path.file_name().map(|n| n.to_string_lossy().into_owned()),
        "sha256": sha256_hex(&bytes),
    }))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let mut body = serde_json::to_string_pretty(value).map_err(Error::from)?;
    body.push('\n');
    Ok(write_file(path, body.as_bytes())?)
}

fn read_json(path: &Path) -> CliResult<Value> {
    let body = spellscan::artifact::read_to_string(path)?;
    Ok(serde_json::from_str(&body).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?)
}

fn parse_mode(s: &str) -> CliResult<MatchMode> {
    MatchMode::parse(s).ok_or_else(|| CliError::usage(format!("unknown mode {s:?} (expected incantations or combined)")))
}

fn parse_task(s: &str) -> CliResult<TaskKind> {
    TaskKind::parse(s).ok_or_else(|| CliError::usage(format!("unknown task {s:?} (expected sequence or token)")))
}

fn task_name(t: TaskKind) -> &'static str {
    match t {
        TaskKind::Sequence => "sequence",
        TaskKind::Token => "token",
    }
}

fn head_task(h: HeadSpec) -> TaskKind {
    match h {
        HeadSpec::Sequence { .. } => TaskKind::Sequence,
        HeadSpec::Token => TaskKind::Token,
    }
}

fn load_segments(path: &Path) -> CliResult<(Option<Value>, Vec<Segment>)> {
    require_file(path)?;
    Ok(read_jsonl(path)?)
}

fn is_eval_segment(s: &Segment) -> bool {
    s.doc_id.starts_with("eval/")
}

pub fn ingest(a: &IngestArgs, exec: Exec) -> CliResult {
    require_dir(&a.input)?;
    let strategy = SplitStrategy::parse(&a.split, a.max_tokens).map_err(|e| CliError::usage(e.to_string()))?;
    let vocab = match &a.vocab {
        Some(p) => {
            require_file(p)?;
            Some(Vocabulary::load(p)?)
        }
        None => None,
    };
    if matches!(strategy, SplitStrategy::SequenceSplit { .. }) && vocab.is_none() {
        return Err(CliError::usage("--split sequence needs --vocab for token counting"));
    }
    let docs = load_corpus_dir(&a.input)?;
    let segments = segment_corpus(&docs, strategy, vocab.as_ref(), exec)?;
    let eval_segments = segments.iter().filter(|s| is_eval_segment(s)).count();
    let header = json!({
        "command": "ingest",
        "config": {
            "split": strategy,
            "vocab_hash": vocab.as_ref().map(Vocabulary::hash),
        },
        "corpus_hash": corpus_hash(&segments),
        "counts": {
            "documents": docs.len(),
            "segments": segments.len(),
            "train_segments": segments.len() - eval_segments,
            "eval_segments": eval_segments,
        },
    });
    write_jsonl(&a.out, Some(&header), &segments)?;
    println!("{} segments from {} documents", segments.len(), docs.len());
    Ok(())
}

/// The split strategy recorded by `ingest`, or one inferred from the
/// segment kinds when the header is missing.
fn strategy_of(header: &Option<Value>, segments: &[Segment]) -> CliResult<SplitStrategy> {
    if let Some(v) = header.as_ref().and_then(|h| h.pointer("/config/split")) {
        return serde_json::from_value(v.clone())
            .map_err(|e| CliError::usage(format!("segments header has an unreadable split: {e}")));
    }
    match segments.first().map(|s| s.kind) {
        Some(SegmentKind::Paragraph) => Ok(SplitStrategy::ParagraphSplit),
        Some(SegmentKind::Packed) => Err(CliError::usage(
            "packed segments without an ingest header: the token budget is unknown",
        )),
        _ => Ok(SplitStrategy::SentenceSplit),
    }
}

fn write_split<T: Serialize>(path: &Path, header: &Value, records: &[T]) -> CliResult {
    Ok(write_jsonl(path, Some(header), records)?)
}

pub fn build(a: &BuildArgs, exec: Exec) -> CliResult {
    let (seg_header, segments) = load_segments(&a.segments)?;
    require_file(&a.lexicon)?;
    let lexicon = SpellLexicon::load(&a.lexicon)?;
    let mode = parse_mode(&a.mode)?;
    let task = parse_task(&a.task)?;
    let cfg = BuildConfig {
        mode,
        neg_ratio: a.neg_ratio,
        dev_fraction: a.dev_fraction,
        seed: a.seed,
        strategy: strategy_of(&seg_header, &segments)?,
    };
    let (eval_segs, train_segs): (Vec<Segment>, Vec<Segment>) = segments.into_iter().partition(is_eval_segment);
    let eval_hash = corpus_hash(&eval_segs);
    let split_header = |split: &str, hash: &str| {
        json!({
            "command": "build",
            "split": split,
            "task": task_name(task),
            "corpus_hash": hash,
            "lexicon_hash": lexicon.hash(),
        })
    };
    let (manifest, eval_positives) = match task {
        TaskKind::Sequence => {
            let ds = build_sequence_dataset(&train_segs, &lexicon, &cfg, exec)?;
            let h = &ds.manifest.corpus_hash;
            write_split(&a.out.join("train.jsonl"), &split_header("train", h), &ds.train)?;
            write_split(&a.out.join("dev.jsonl"), &split_header("dev", h), &ds.dev)?;
            let eval = build_eval_dataset(&eval_segs, &lexicon, mode, exec);
            if !eval.is_empty() {
                write_split(&a.out.join("eval.jsonl"), &split_header("eval", &eval_hash), &eval)?;
            }
            (ds.manifest, eval.iter().filter(|e| e.label.is_positive()).count())
        }
        TaskKind::Token => {
            let ds = build_token_dataset(&train_segs, &lexicon, &cfg, exec)?;
            let h = &ds.manifest.corpus_hash;
            write_split(&a.out.join("train.jsonl"), &split_header("train", h), &ds.train)?;
            write_split(&a.out.join("dev.jsonl"), &split_header("dev", h), &ds.dev)?;
            let eval = build_token_eval_dataset(&eval_segs, &lexicon, mode, exec);
            if !eval.is_empty() {
                write_split(&a.out.join("eval.jsonl"), &split_header("eval", &eval_hash), &eval)?;
            }
            (ds.manifest, eval.iter().filter(|e| e.is_positive()).count())
        }
    };
    let c = &manifest.counts;
    println!(
        "{} positives, {} negatives: {} train, {} dev; {} eval segments ({} positive)",
        c.positives,
        c.negatives,
        c.train,
        c.dev,
        eval_segs.len(),
        eval_positives
    );
    write_json(
        &a.out.join("manifest.json"),
        &json!({
            "command": "build",
            "manifest": manifest,
            "segments": file_echo(&a.segments)?,
            "lexicon": file_echo(&a.lexicon)?,
            "eval": {
                "segments": eval_segs.len(),
                "positives": eval_positives,
                "corpus_hash": eval_hash,
            },
        }),
    )
}

pub fn extend_vocab(a: &ExtendVocabArgs) -> CliResult {
    require_file(&a.vocab)?;
    require_file(&a.lexicon)?;
    let vocab = Vocabulary::load(&a.vocab)?;
    let lexicon = SpellLexicon::load(&a.lexicon)?;
    let (extended, added) = extend(&vocab, &lexicon);
    extended.save(&a.out)?;
    println!("added {added} pieces ({} total)", extended.len());
    Ok(())
}

fn dataset_task(dir: &Path) -> CliResult<(TaskKind, Value)> {
    let path = dir.join("manifest.json");
    require_file(&path)?;
    let m = read_json(&path)?;
    let manifest = m.get("manifest").cloned().unwrap_or(Value::Null);
    let task = manifest
        .get("task")
        .cloned()
        .and_then(|t| serde_json::from_value::<TaskKind>(t).ok())
        .ok_or_else(|| CliError::usage(format!("{} has no task", path.display())))?;
    Ok((task, manifest))
}

fn read_split<T: DeserializeOwned>(dir: &Path, name: &str, required: bool) -> CliResult<Vec<T>> {
    let path = dir.join(name);
    if !required && !path.exists() {
        return Ok(Vec::new());
    }
    require_file(&path)?;
    Ok(read_jsonl(&path)?.1)
}

pub fn train(a: &TrainArgs, exec: Exec) -> CliResult {
    require_dir(&a.dataset)?;
    require_file(&a.vocab)?;
    let (task, manifest) = dataset_task(&a.dataset)?;
    let vocab = Vocabulary::load(&a.vocab)?;
    let study = match &a.model_config {
        Some(p) => {
            require_file(p)?;
            StudyFile::parse(&spellscan::artifact::read_to_string(p)?)?
        }
        None => StudyFile::default(),
    };
    let model_cfg = study.model(vocab.len())?;
    let mut tcfg = study.train();
    if let Some(v) = a.epochs {
        tcfg.epochs = v;
    }
    if let Some(v) = a.batch {
        tcfg.batch_size = v;
    }
    if let Some(v) = a.lr {
        tcfg.learning_rate = v;
    }
    if let Some(v) = a.seed {
        tcfg.seed = v;
    }
    if let Some(v) = a.max_len {
        tcfg.max_len = v;
    }
    let flag_pooling = a.pooling.as_deref().map(parse_pooling).transpose()?;
    let pooling = flag_pooling.or(study.pooling()?);
    if task == TaskKind::Token && pooling.is_some() {
        return Err(CliError::usage("pooling applies to the sequence task only; the dataset is a token dataset"));
    }
    let pooling = pooling.unwrap_or_default();
    tcfg.validate(&model_cfg).map_err(|e| CliError::usage(e.to_string()))?;

    let (train_set, dev_set, head) = match task {
        TaskKind::Sequence => {
            let prep = |xs: Vec<SeqExample>| xs.iter().map(|x| prepare_sequence(x, &vocab, tcfg.max_len)).collect::<Vec<_>>();
            (
                prep(read_split(&a.dataset, "train.jsonl", true)?),
                prep(read_split(&a.dataset, "dev.jsonl", false)?),
                HeadSpec::Sequence { pooling },
            )
        }
        TaskKind::Token => {
            let prep = |xs: Vec<TokExample>| xs.iter().map(|x| prepare_token(x, &vocab, tcfg.max_len)).collect::<Vec<_>>();
            (
                prep(read_split(&a.dataset, "train.jsonl", true)?),
                prep(read_split(&a.dataset, "dev.jsonl", false)?),
                HeadSpec::Token,
            )
        }
    };
    let mut params = init_params(&model_cfg, tcfg.seed)?;
    let report = train_model(&mut params, pooling, &train_set, &dev_set, &tcfg, exec)?;
    for e in &report.epochs {
        match e.dev_f1 {
            Some(f1) => println!("epoch {}: train loss {:.4}, dev f1 {:.4}", e.epoch, e.train_loss, f1),
            None => println!("epoch {}: train loss {:.4}", e.epoch, e.train_loss),
        }
    }
    let metadata = json!({
        "command": "train",
        "config": {
            "task": task_name(task),
            "model": model_cfg,
            "train": tcfg,
            "pooling": if task == TaskKind::Sequence { Some(pooling) } else { None },
            "dataset": manifest,
            "vocab_hash": vocab.hash(),
        },
        "trace": report,
    });
    save_checkpoint(&a.out, &params, head, &vocab, metadata)?;
    Ok(())
}

/// A segments or dataset record: either raw text or pre-split words.
#[derive(Debug, Deserialize)]
struct InputRecord {
    seg_id: String,
    #[serde(default)]
    doc_id: Option<String>,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    words: Option<Vec<String>>,
}

impl TextItem for InputRecord {
    fn seg_id(&self) -> &str {
        &self.seg_id
    }
    fn words(&self) -> Vec<String> {
        match (&self.words, &self.text) {
            (Some(w), _) => w.clone(),
            (None, Some(t)) => split_words(t).into_iter().map(|w| w.text).collect(),
            (None, None) => Vec::new(),
        }
    }
}

fn load_inputs(path: &Path) -> CliResult<(Option<Value>, Vec<InputRecord>)> {
    require_file(path)?;
    let (header, records): (Option<Value>, Vec<InputRecord>) = read_jsonl(path)?;
    if let Some(r) = records.iter().find(|r| r.text.is_none() && r.words.is_none()) {
        return Err(Error::Input(format!("{}: record {} has neither text nor words", path.display(), r.seg_id)).into());
    }
    Ok((header, records))
}

fn open_checkpoint(path: &Path, vocab: Option<&Path>) -> CliResult<Checkpoint> {
    require_file(path)?;
    match vocab {
        Some(v) => {
            require_file(v)?;
            Ok(load_checkpoint_for(path, &Vocabulary::load(v)?)?)
        }
        None => Ok(load_checkpoint(path)?),
    }
}

/// Flag value, else the training max_len recorded in the checkpoint, else
/// the model's position count.
fn resolve_max_len(ckpt: &Checkpoint, flag: Option<usize>) -> CliResult<usize> {
    let limit = ckpt.params.config.max_positions;
    let max_len = flag
        .or_else(|| ckpt.metadata.pointer("/config/train/max_len").and_then(Value::as_u64).map(|v| v as usize))
        .unwrap_or(limit);
    if max_len < 3 || max_len > limit {
        return Err(CliError::usage(format!("max_len {max_len} outside [3, {limit}] for this checkpoint")));
    }
    Ok(max_len)
}

fn run_predictions<T: TextItem>(ckpt: &Checkpoint, items: &[T], max_len: usize, exec: Exec) -> CliResult<Vec<PredictionRecord>> {
    Ok(match ckpt.head {
        HeadSpec::Sequence { pooling } => predict_sequence(&ckpt.params, pooling, &ckpt.vocab, items, max_len, exec)?,
        HeadSpec::Token => predict_tokens(&ckpt.params, &ckpt.vocab, items, max_len, exec)?,
    })
}

pub fn predict(a: &PredictArgs, exec: Exec) -> CliResult {
    let ckpt = open_checkpoint(&a.checkpoint, a.vocab.as_deref())?;
    let task = head_task(ckpt.head);
    if let Some(t) = &a.task {
        let wanted = parse_task(t)?;
        if wanted != task {
            return Err(CliError::usage(format!(
                "--task {} contradicts the checkpoint's {} head",
                task_name(wanted),
                task_name(task)
            )));
        }
    }
    let max_len = resolve_max_len(&ckpt, a.max_len)?;
    let (in_header, records) = load_inputs(&a.segments)?;
    let preds = run_predictions(&ckpt, &records, max_len, exec)?;
    let header = json!({
        "command": "predict",
        "task": task_name(task),
        "config": {
            "checkpoint": file_echo(&a.checkpoint)?,
            "head": ckpt.head,
            "max_len": max_len,
            "vocab_hash": ckpt.vocab_hash,
            "input": file_echo(&a.segments)?,
        },
        "corpus_hash": in_header.as_ref().and_then(|h| h.get("corpus_hash")).cloned(),
    });
    write_jsonl(&a.out, Some(&header), &preds)?;
    let positives = preds
        .iter()
        .filter(|p| p.label == Some(SeqLabel::Positive) || p.tags.as_ref().is_some_and(|t| t.iter().any(|t| t.is_spell())))
        .count();
    println!("{} predictions, {} positive", preds.len(), positives);
    Ok(())
}

fn header_str<'a>(h: &'a Option<Value>, key: &str) -> Option<&'a str> {
    h.as_ref().and_then(|h| h.get(key)).and_then(Value::as_str)
}

pub fn evaluate(a: &EvaluateArgs) -> CliResult {
    let task = parse_task(&a.task)?;
    require_file(&a.predictions)?;
    require_file(&a.gold)?;
    let (ph, preds): (Option<Value>, Vec<PredictionRecord>) = read_jsonl(&a.predictions)?;
    if let Some(t) = header_str(&ph, "task") {
        if t != task_name(task) {
            return Err(CliError::usage(format!("--task {} contradicts {} predictions", task_name(task), t)));
        }
    }
    let gold_path = &a.gold;
    let gold_header: Option<Value>;
    let report: EvalReport = match task {
        TaskKind::Sequence => {
            let (gh, gold): (Option<Value>, Vec<SeqExample>) = read_jsonl(gold_path)?;
            gold_header = gh;
            check_corpus(&ph, &gold_header)?;
            score_sequence_predictions(&preds, &gold)?
        }
        TaskKind::Token => {
            let (gh, gold): (Option<Value>, Vec<TokExample>) = read_jsonl(gold_path)?;
            gold_header = gh;
            check_corpus(&ph, &gold_header)?;
            score_token_predictions_softmatch(&preds, &gold)?
        }
    };
    let report = report.with_config(json!({
        "command": "evaluate",
        "task": task_name(task),
        "predictions": file_echo(&a.predictions)?,
        "gold": file_echo(gold_path)?,
        "corpus_hash": header_str(&gold_header, "corpus_hash"),
    }));
    write_json(&a.out, &report)?;
    println!("{}", report.summary());
    Ok(())
}

fn check_corpus(pred_header: &Option<Value>, gold_header: &Option<Value>) -> CliResult {
    if let (Some(p), Some(g)) = (header_str(pred_header, "corpus_hash"), header_str(gold_header, "corpus_hash")) {
        if p != g {
            return Err(Error::Input(format!("corpus hash mismatch: predictions {p}, gold {g}")).into());
        }
    }
    Ok(())
}

pub fn baseline(a: &BaselineArgs) -> CliResult {
    let (header, segments) = load_segments(&a.segments)?;
    require_file(&a.lexicon)?;
    let mode = parse_mode(&a.mode)?;
    let mut lists = Vec::with_capacity(a.wordlist.len());
    let mut echoes = Vec::with_capacity(a.wordlist.len());
    for p in &a.wordlist {
        require_file(p)?;
        lists.push(ReferenceWordlist::load(p)?);
        echoes.push(file_echo(p)?);
    }
    let wordlist = ReferenceWordlist::merge(&lists)?;
    let lexicon = SpellLexicon::load(&a.lexicon)?;
    let report = dictionary_baseline(&segments, &wordlist, &lexicon, mode)?.with_config(json!({
        "command": "baseline",
        "mode": mode,
        "wordlists": echoes,
        "wordlist_size": wordlist.len(),
        "lexicon": file_echo(&a.lexicon)?,
        "segments": file_echo(&a.segments)?,
        "corpus_hash": header_str(&header, "corpus_hash").map(str::to_string).unwrap_or_else(|| corpus_hash(&segments)),
    }));
    write_json(&a.out, &report)?;
    println!("{}", report.summary());
    Ok(())
}

fn sequence_pooling(ckpt: &Checkpoint, command: &str) -> CliResult<Pooling> {
    match ckpt.head {
        HeadSpec::Sequence { pooling } => Ok(pooling),
        HeadSpec::Token => Err(CliError::usage(format!("{command} needs a sequence checkpoint; this one has a token head"))),
    }
}

pub fn attribute(a: &AttributeArgs, exec: Exec) -> CliResult {
    let ckpt = open_checkpoint(&a.checkpoint, None)?;
    let pooling = sequence_pooling(&ckpt, "attribute")?;
    let format = RenderFormat::parse(&a.format)
        .ok_or_else(|| CliError::usage(format!("unknown format {:?} (expected ansi or html)", a.format)))?;
    let target = match a.target.as_str() {
        "positive" => SeqLabel::Positive,
        "negative" => SeqLabel::Negative,
        other => return Err(CliError::usage(format!("unknown target {other:?} (expected positive or negative)"))),
    };
    let max_len = resolve_max_len(&ckpt, a.max_len)?;
    let (_, records) = load_inputs(&a.segments)?;
    let reports = attribute_all(&ckpt.params, pooling, &records, &ckpt.vocab, target, max_len, exec)?;
    let header = json!({
        "command": "attribute",
        "config": {
            "checkpoint": file_echo(&a.checkpoint)?,
            "input": file_echo(&a.segments)?,
            "target": target,
            "max_len": max_len,
            "method": "gradient x input on the target logit, max-abs normalized",
        },
    });
    write_jsonl(&a.out.join("attributions.jsonl"), Some(&header), &reports)?;
    let (name, body) = match format {
        RenderFormat::Html => ("attributions.html", render_all(&reports, format)),
        RenderFormat::Ansi => ("attributions.ansi", render_all(&reports, format)),
    };
    write_file(&a.out.join(name), body.as_bytes())?;
    println!("{} reports written to {}", reports.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct ScreenRecord<'a> {
    seg_id: &'a str,
    doc_id: Option<&'a str>,
    text: &'a str,
    positive_probability: f64,
}

pub fn screen(a: &ScreenArgs, exec: Exec) -> CliResult {
    let ckpt = open_checkpoint(&a.checkpoint, None)?;
    sequence_pooling(&ckpt, "screen")?;
    require_dir(&a.foreign_corpus)?;
    let strategy = SplitStrategy::parse(&a.split, a.max_tokens).map_err(|e| CliError::usage(e.to_string()))?;
    let max_len = resolve_max_len(&ckpt, a.max_len)?;
    let docs = load_corpus_dir(&a.foreign_corpus)?;
    let segments = segment_corpus(&docs, strategy, Some(&ckpt.vocab), exec)?;
    let records: Vec<InputRecord> = segments
        .iter()
        .map(|s| InputRecord {
            seg_id: s.seg_id.clone(),
            doc_id: Some(s.doc_id.clone()),
            text: Some(s.text.clone()),
            words: None,
        })
        .collect();
    let preds = run_predictions(&ckpt, &records, max_len, exec)?;
    let positives: Vec<ScreenRecord> = records
        .iter()
        .zip(&preds)
        .filter(|(_, p)| p.label == Some(SeqLabel::Positive))
        .map(|(r, p)| ScreenRecord {
            seg_id: &r.seg_id,
            doc_id: r.doc_id.as_deref(),
            text: r.text.as_deref().unwrap_or_default(),
            positive_probability: p.positive_probability.unwrap_or_default(),
        })
        .collect();
    let header = json!({
        "command": "screen",
        "config": {
            "checkpoint": file_echo(&a.checkpoint)?,
            "split": strategy,
            "max_len": max_len,
        },
        "corpus_hash": corpus_hash(&segments),
        "counts": { "all": segments.len(), "positive": positives.len() },
    });
    write_jsonl(&a.out, Some(&header), &positives)?;
    println!("all {} positive {}", segments.len(), positives.len());
    Ok(())
}
