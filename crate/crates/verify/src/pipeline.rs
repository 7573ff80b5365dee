use std::path::{Path, PathBuf};

use serde_json::json;
use spellscan::artifact::{write_file, write_jsonl};
use spellscan::corpus::{corpus_hash, load_corpus_dir, segment_corpus, DocRole, Segment, SplitStrategy};
use spellscan::dataset::{
    build_eval_dataset, build_sequence_dataset, build_token_dataset, build_token_eval_dataset, tag_words, BuildConfig,
    TokExample,
};
use spellscan::eval::{score_sequence_predictions, score_token_predictions_softmatch};
use spellscan::model::{
    init_params, load_checkpoint, predict_sequence, predict_tokens, prepare_sequence, prepare_token, resize_embeddings,
    save_checkpoint, train, HeadSpec, ModelConfig, Pooling, TrainConfig,
};
use spellscan::spellbook::{find_matches, MatchMode, SpellLexicon};
use spellscan::synth::{generate_documents, sequence_examples, SynthConfig};
use spellscan::tokenizer::{extend_vocab, Vocabulary};
use spellscan::{bundled_data_dir, Exec, Result};

pub fn bundled_lexicon(name: &str) -> Result<SpellLexicon> {
    SpellLexicon::load(&bundled_data_dir().join(name))
}

pub fn desk_vocab() -> Result<Vocabulary> {
    Vocabulary::load(&bundled_data_dir().join("desk_vocab.txt"))
}

pub struct Overfit {
    pub sequence_f1: f64,
    pub sequence_epoch: Option<usize>,
    pub token_f1: f64,
    pub token_epoch: Option<usize>,
}

/// Best training-set F1 over the epochs and the first epoch reaching `goal`.
fn best_epoch(report: &spellscan::model::TrainReport, goal: f64) -> (f64, Option<usize>) {
    let f1s: Vec<(usize, f64)> = report.epochs.iter().filter_map(|e| e.dev_f1.map(|f| (e.epoch, f))).collect();
    let best = f1s.iter().map(|&(_, f)| f).fold(0.0, f64::max);
    (best, f1s.iter().find(|&&(_, f)| f >= goal).map(|&(e, _)| e))
}

/// Desk-config models fitted to 50 synthetic sentences (25 with a spell),
/// scored on the same sentences after every epoch.
pub fn overfit(epochs: usize, exec: Exec) -> Result<Overfit> {
    let lexicon = bundled_lexicon("hp_spells.jsonl")?;
    let vocab = extend_vocab(&desk_vocab()?, &lexicon).0;
    let examples = sequence_examples(&lexicon, 25, 25, 31);
    let cfg = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    let model = ModelConfig::desk(vocab.len());

    let seq: Vec<_> = examples.iter().map(|e| prepare_sequence(e, &vocab, cfg.max_len)).collect();
    let mut params = init_params(&model, cfg.seed)?;
    let seq_report = train(&mut params, Pooling::Mean, &seq, &seq, &cfg, exec)?;

    let tok_examples: Vec<TokExample> = examples
        .iter()
        .map(|e| {
            let (words, tags) = tag_words(&e.text, &find_matches(&e.text, &lexicon, MatchMode::Combined));
            TokExample {
                seg_id: e.seg_id.clone(),
                words,
                tags,
            }
        })
        .collect();
    let tok: Vec<_> = tok_examples.iter().map(|e| prepare_token(e, &vocab, cfg.max_len)).collect();
    let mut params = init_params(&model, cfg.seed)?;
    let tok_report = train(&mut params, Pooling::Mean, &tok, &tok, &cfg, exec)?;

    let (sequence_f1, sequence_epoch) = best_epoch(&seq_report, 0.95);
    let (token_f1, token_epoch) = best_epoch(&tok_report, 0.90);
    Ok(Overfit {
        sequence_f1,
        sequence_epoch,
        token_f1,
        token_epoch,
    })
}

fn json_bytes(value: &serde_json::Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("json value");
    s.push('\n');
    s.into_bytes()
}

/// Segments the bundled corpus, builds sequence and token datasets, trains
/// a short run of each, predicts the held-out chapters and scores them.
/// Returns every file written under `out`, in a fixed order.
pub fn run_pipeline(out: &Path, epochs: usize, exec: Exec) -> Result<Vec<PathBuf>> {
    let lexicon = bundled_lexicon("hp_spells.jsonl")?;
    let vocab = extend_vocab(&desk_vocab()?, &lexicon).0;
    let docs = load_corpus_dir(&bundled_data_dir().join("synthetic"))?;
    let segments = segment_corpus(&docs, SplitStrategy::SentenceSplit, None, exec)?;
    let (eval_segs, train_segs): (Vec<Segment>, Vec<Segment>) =
        segments.into_iter().partition(|s| s.doc_id.starts_with("eval/"));
    if eval_segs.is_empty() {
        return Err(spellscan::Error::Input("the bundled corpus has no eval chapters".into()));
    }
    let build = BuildConfig::default();
    let tcfg = TrainConfig {
        epochs,
        max_len: 64,
        ..TrainConfig::default()
    };
    let model = ModelConfig::desk(vocab.len());
    let header = |split: &str, hash: &str| json!({"split": split, "corpus_hash": hash, "lexicon_hash": lexicon.hash()});
    let eval_hash = corpus_hash(&eval_segs);
    let mut files = Vec::new();
    let mut emit = |name: &str| {
        let p = out.join(name);
        files.push(p.clone());
        p
    };

    let ds = build_sequence_dataset(&train_segs, &lexicon, &build, exec)?;
    let eval = build_eval_dataset(&eval_segs, &lexicon, build.mode, exec);
    let h = &ds.manifest.corpus_hash;
    write_jsonl(&emit("seq/train.jsonl"), Some(&header("train", h)), &ds.train)?;
    write_jsonl(&emit("seq/dev.jsonl"), Some(&header("dev", h)), &ds.dev)?;
    write_jsonl(&emit("seq/eval.jsonl"), Some(&header("eval", &eval_hash)), &eval)?;
    let prep = |xs: &[_]| xs.iter().map(|x| prepare_sequence(x, &vocab, tcfg.max_len)).collect::<Vec<_>>();
    let mut params = init_params(&model, tcfg.seed)?;
    let trace = train(&mut params, Pooling::Mean, &prep(&ds.train), &prep(&ds.dev), &tcfg, exec)?;
    let ckpt = emit("seq/model.ckpt");
    let meta = json!({"train": tcfg, "manifest": ds.manifest, "trace": trace});
    save_checkpoint(&ckpt, &params, HeadSpec::Sequence { pooling: Pooling::Mean }, &vocab, meta)?;
    let loaded = load_checkpoint(&ckpt)?;
    let preds = predict_sequence(&loaded.params, Pooling::Mean, &loaded.vocab, &eval, tcfg.max_len, exec)?;
    write_jsonl(&emit("seq/predictions.jsonl"), Some(&json!({"corpus_hash": eval_hash})), &preds)?;
    let report = score_sequence_predictions(&preds, &eval)?;
    write_file(&emit("seq/report.json"), &json_bytes(&serde_json::to_value(&report)?))?;

    let ds = build_token_dataset(&train_segs, &lexicon, &build, exec)?;
    let eval = build_token_eval_dataset(&eval_segs, &lexicon, build.mode, exec);
    let h = &ds.manifest.corpus_hash;
    write_jsonl(&emit("tok/train.jsonl"), Some(&header("train", h)), &ds.train)?;
    write_jsonl(&emit("tok/dev.jsonl"), Some(&header("dev", h)), &ds.dev)?;
    write_jsonl(&emit("tok/eval.jsonl"), Some(&header("eval", &eval_hash)), &eval)?;
    let prep = |xs: &[_]| xs.iter().map(|x| prepare_token(x, &vocab, tcfg.max_len)).collect::<Vec<_>>();
    let mut params = init_params(&model, tcfg.seed)?;
    let trace = train(&mut params, Pooling::Mean, &prep(&ds.train), &prep(&ds.dev), &tcfg, exec)?;
    let ckpt = emit("tok/model.ckpt");
    save_checkpoint(&ckpt, &params, HeadSpec::Token, &vocab, json!({"train": tcfg, "trace": trace}))?;
    let loaded = load_checkpoint(&ckpt)?;
    let preds = predict_tokens(&loaded.params, &loaded.vocab, &eval, tcfg.max_len, exec)?;
    write_jsonl(&emit("tok/predictions.jsonl"), Some(&json!({"corpus_hash": eval_hash})), &preds)?;
    let report = score_token_predictions_softmatch(&preds, &eval)?;
    write_file(&emit("tok/report.json"), &json_bytes(&serde_json::to_value(&report)?))?;
    Ok(files)
}

pub struct ExtensionTrial {
    pub seed: u64,
    pub added: usize,
    pub base_f1: f64,
    pub extended_f1: f64,
}

/// Trains on a corpus cast with invented spells twice from the same seed:
/// once on the base vocabulary and once after `extend_vocab`, whose new
/// rows are appended by `resize_embeddings`. Scores the final dev F1.
pub fn extension_trial(seed: u64, epochs: usize, exec: Exec) -> Result<ExtensionTrial> {
    let lexicon = bundled_lexicon("synthetic_spells.jsonl")?;
    let base = desk_vocab()?;
    let (extended, added) = extend_vocab(&base, &lexicon);
    let cfg = SynthConfig {
        documents: 12,
        paragraphs_per_doc: (12, 24),
        sentences_per_paragraph: (1, 5),
        spell_rate: 0.1,
        seed: 500 + seed,
    };
    let docs = generate_documents(&cfg, Some(&lexicon), DocRole::Train);
    let segments = segment_corpus(&docs, SplitStrategy::SentenceSplit, None, exec)?;
    let build = BuildConfig {
        seed,
        ..BuildConfig::default()
    };
    let ds = build_sequence_dataset(&segments, &lexicon, &build, exec)?;
    let tcfg = TrainConfig {
        epochs,
        seed,
        max_len: 64,
        ..TrainConfig::default()
    };
    let run = |vocab: &Vocabulary, params: &mut spellscan::model::Parameters| -> Result<f64> {
        let prep = |xs: &[_]| xs.iter().map(|x| prepare_sequence(x, vocab, tcfg.max_len)).collect::<Vec<_>>();
        let report = train(params, Pooling::Mean, &prep(&ds.train), &prep(&ds.dev), &tcfg, exec)?;
        Ok(report.epochs.last().and_then(|e| e.dev_f1).unwrap_or(0.0))
    };
    let mut base_params = init_params(&ModelConfig::desk(base.len()), seed)?;
    let mut ext_params = resize_embeddings(&base_params, extended.len(), seed)?;
    let base_f1 = run(&base, &mut base_params)?;
    let extended_f1 = run(&extended, &mut ext_params)?;
    Ok(ExtensionTrial {
        seed,
        added,
        base_f1,
        extended_f1,
    })
}
