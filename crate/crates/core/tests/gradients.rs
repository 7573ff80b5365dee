//! Analytic gradients against central finite differences.

use std::collections::BTreeMap;

use spellscan::dataset::{SeqLabel, Tag};
use spellscan::model::{
    batch_loss, batch_loss_and_gradients, init_params, Example, ModelConfig, Parameters, Pooling, Target,
};
use spellscan::rng::SplitMix64;
use spellscan::Exec;

const STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
const SAMPLES_PER_TYPE: usize = 200;

fn config() -> ModelConfig {
    ModelConfig {
        layers: 2,
        hidden: 8,
        heads: 2,
        ffn: 16,
        vocab_size: 24,
        max_positions: 12,
        dropout: 0.1,
        final_layer_norm: true,
    }
}

fn uniform(rng: &mut SplitMix64) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// Initialized parameters pushed off the tiny-init regime so every
/// nonlinearity contributes, layer-norm gains included.
fn perturbed(seed: u64) -> Parameters {
    let mut p = init_params(&config(), seed).unwrap();
    let mut rng = SplitMix64::new(seed);
    for (_, t) in p.tensors_mut() {
        for x in t.iter_mut() {
            *x += uniform(&mut rng) - 0.5;
        }
    }
    p
}

fn seq_batch() -> Vec<Example> {
    vec![
        Example {
            seg_id: "a".into(),
            ids: vec![2, 7, 9, 11, 3],
            target: Target::Sequence(SeqLabel::Positive),
        },
        Example {
            seg_id: "b".into(),
            ids: vec![2, 5, 5, 20, 13, 17, 3],
            target: Target::Sequence(SeqLabel::Negative),
        },
        Example {
            seg_id: "c".into(),
            ids: vec![2, 23, 3],
            target: Target::Sequence(SeqLabel::Positive),
        },
    ]
}

fn tok_batch() -> Vec<Example> {
    let t = |ids: Vec<u32>, tags: Vec<Option<Tag>>| {
        let word_ids = (0..ids.len()).map(|i| Some(i as u32)).collect();
        let word_tags = tags.iter().map(|t| t.unwrap_or(Tag::O)).collect();
        Example {
            seg_id: "t".into(),
            ids,
            target: Target::Token {
                piece_tags: tags,
                word_ids,
                word_tags,
            },
        }
    };
    use Tag::{B, I, O};
    vec![
        t(vec![2, 6, 8, 10, 12, 3], vec![None, Some(O), Some(B), Some(I), Some(O), None]),
        t(vec![2, 14, 15, 3], vec![None, Some(B), Some(O), None]),
    ]
}

/// Tensor names grouped by layer type ("layer1.wq" and "layer0.wq" share "wq").
fn layer_type(name: &str) -> String {
    match name.split_once('.') {
        Some((prefix, rest)) if prefix.starts_with("layer") => rest.to_string(),
        _ => name.to_string(),
    }
}

struct Failure {
    tensor: String,
    index: usize,
    analytic: f64,
    numeric: f64,
}

fn check(params: &Parameters, pooling: Pooling, batch: &[Example], seed: Option<u64>, skip: &[&str]) -> usize {
    let (_, grads) = batch_loss_and_gradients(params, pooling, batch, seed, Exec::Sequential).unwrap();
    let mut by_type: BTreeMap<String, Vec<(String, usize)>> = BTreeMap::new();
    for (name, t) in params.tensors() {
        if skip.iter().any(|s| name.starts_with(s)) {
            continue;
        }
        for i in 0..t.len() {
            by_type.entry(layer_type(&name)).or_default().push((name.clone(), i));
        }
    }
    let mut rng = SplitMix64::new(99);
    let mut failures = Vec::new();
    let mut checked = 0;
    for (_, coords) in by_type {
        let chosen = if coords.len() <= SAMPLES_PER_TYPE {
            coords
        } else {
            rng.sample(&coords, SAMPLES_PER_TYPE)
        };
        for (name, index) in chosen {
            let analytic = grads.get(&name, index).unwrap();
            let eval_at = |delta: f64| {
                let mut q = params.clone();
                for (n, t) in q.tensors_mut() {
                    if n == name {
                        t[index] += delta;
                    }
                }
                batch_loss(&q, pooling, batch, seed).unwrap()
            };
            let numeric = (eval_at(STEP) - eval_at(-STEP)) / (2.0 * STEP);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            if rel > REL_TOL {
                failures.push(Failure {
                    tensor: name,
                    index,
                    analytic,
                    numeric,
                });
            }
            checked += 1;
        }
    }
    if !failures.is_empty() {
        let lines: Vec<String> = failures
            .iter()
            .take(20)
            .map(|f| format!("{}[{}]: analytic {:e} numeric {:e}", f.tensor, f.index, f.analytic, f.numeric))
            .collect();
        panic!("{} of {checked} coordinates disagree:\n{}", failures.len(), lines.join("\n"));
    }
    checked
}

#[test]
fn sequence_head_gradients_match_finite_differences() {
    let params = perturbed(1);
    for pooling in [Pooling::Cls, Pooling::Mean, Pooling::Max] {
        let n = check(&params, pooling, &seq_batch(), None, &["tok_head"]);
        assert!(n > 1000);
    }
}

#[test]
fn gradients_match_with_dropout_masks() {
    let params = perturbed(2);
    check(&params, Pooling::Mean, &seq_batch(), Some(7), &["tok_head"]);
    check(&params, Pooling::Mean, &tok_batch(), Some(8), &["seq_head"]);
}

#[test]
fn token_head_gradients_match_finite_differences() {
    let params = perturbed(3);
    check(&params, Pooling::Cls, &tok_batch(), None, &["seq_head"]);
}

#[test]
fn gradients_match_without_final_layer_norm() {
    let mut cfg = config();
    cfg.final_layer_norm = false;
    cfg.layers = 1;
    let mut params = init_params(&cfg, 4).unwrap();
    let mut rng = SplitMix64::new(4);
    for (_, t) in params.tensors_mut() {
        for x in t.iter_mut() {
            *x += uniform(&mut rng) - 0.5;
        }
    }
    check(&params, Pooling::Mean, &seq_batch(), None, &["tok_head", "lnf"]);
}

#[test]
fn unused_head_gets_zero_gradient() {
    let params = perturbed(5);
    let (_, g) = batch_loss_and_gradients(&params, Pooling::Mean, &seq_batch(), None, Exec::Sequential).unwrap();
    assert!(g.dense.tok_w.iter().chain(g.dense.tok_b.iter()).all(|&x| x == 0.0));
    let (_, g) = batch_loss_and_gradients(&params, Pooling::Mean, &tok_batch(), None, Exec::Sequential).unwrap();
    assert!(g.dense.seq_w.iter().chain(g.dense.seq_b.iter()).all(|&x| x == 0.0));
}

#[test]
fn saturated_batch_has_vanishing_gradient() {
    let mut params = init_params(&config(), 6).unwrap();
    params.dense.seq_b[1] = 60.0;
    let batch: Vec<Example> = seq_batch()
        .into_iter()
        .map(|mut e| {
            e.target = Target::Sequence(SeqLabel::Positive);
            e
        })
        .collect();
    let (loss, g) = batch_loss_and_gradients(&params, Pooling::Cls, &batch, None, Exec::Sequential).unwrap();
    assert!(loss < 1e-20);
    assert!(g.norm() < 1e-6, "gradient norm {}", g.norm());
}

#[test]
fn parallel_and_sequential_gradients_are_identical() {
    let params = perturbed(7);
    let a = batch_loss_and_gradients(&params, Pooling::Max, &seq_batch(), Some(3), Exec::Sequential).unwrap();
    let b = batch_loss_and_gradients(&params, Pooling::Max, &seq_batch(), Some(3), Exec::Parallel).unwrap();
    assert_eq!(a, b);
}
