use std::collections::BTreeMap;

use ndarray::{Array, Array1, Array2, Dimension};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ModelConfig;
use crate::Result;

/// Standard deviation of the truncated normal used for every weight matrix
/// and embedding (truncated at two standard deviations).
pub const INIT_STD: f64 = 0.02;

pub(crate) trait Flat {
    fn flat(&self) -> &[f64];
    fn flat_mut(&mut self) -> &mut [f64];
    fn dims(&self) -> Vec<usize>;
}

impl<D: Dimension> Flat for Array<f64, D> {
    fn flat(&self) -> &[f64] {
        self.as_slice().expect("parameters use standard layout")
    }
    fn flat_mut(&mut self) -> &mut [f64] {
        self.as_slice_mut().expect("parameters use standard layout")
    }
    fn dims(&self) -> Vec<usize> {
        self.shape().to_vec()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub ln1_g: Array1<f64>,
    pub ln1_b: Array1<f64>,
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    pub wk: Array2<f64>,
    pub bk: Array1<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub ln2_g: Array1<f64>,
    pub ln2_b: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

macro_rules! layer_tensors {
    ($l:expr, $m:ident) => {
        vec![
            ("ln1_g", $l.ln1_g.$m()),
            ("ln1_b", $l.ln1_b.$m()),
            ("wq", $l.wq.$m()),
            ("bq", $l.bq.$m()),
            ("wk", $l.wk.$m()),
            ("bk", $l.bk.$m()),
            ("wv", $l.wv.$m()),
            ("bv", $l.bv.$m()),
            ("wo", $l.wo.$m()),
            ("bo", $l.bo.$m()),
            ("ln2_g", $l.ln2_g.$m()),
            ("ln2_b", $l.ln2_b.$m()),
            ("w1", $l.w1.$m()),
            ("b1", $l.b1.$m()),
            ("w2", $l.w2.$m()),
            ("b2", $l.b2.$m()),
        ]
    };
}

/// Every parameter except the token embedding table.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub pos_emb: Array2<f64>,
    pub layers: Vec<Layer>,
    pub lnf_g: Array1<f64>,
    pub lnf_b: Array1<f64>,
    pub seq_w: Array2<f64>,
    pub seq_b: Array1<f64>,
    pub tok_w: Array2<f64>,
    pub tok_b: Array1<f64>,
}

macro_rules! dense_tensors {
    ($d:expr, $m:ident) => {{
        let mut v = vec![("pos_emb".to_string(), $d.pos_emb.$m())];
        for (i, l) in $d.layers.iter_layers() {
            for (name, t) in layer_tensors!(l, $m) {
                v.push((format!("layer{i}.{name}"), t));
            }
        }
        v.push(("lnf_g".to_string(), $d.lnf_g.$m()));
        v.push(("lnf_b".to_string(), $d.lnf_b.$m()));
        v.push(("seq_head.w".to_string(), $d.seq_w.$m()));
        v.push(("seq_head.b".to_string(), $d.seq_b.$m()));
        v.push(("tok_head.w".to_string(), $d.tok_w.$m()));
        v.push(("tok_head.b".to_string(), $d.tok_b.$m()));
        v
    }};
}

trait IterLayers<'a> {
    type Item;
    type Iter: Iterator<Item = (usize, Self::Item)>;
    fn iter_layers(self) -> Self::Iter;
}

impl<'a> IterLayers<'a> for &'a Vec<Layer> {
    type Item = &'a Layer;
    type Iter = std::iter::Enumerate<std::slice::Iter<'a, Layer>>;
    fn iter_layers(self) -> Self::Iter {
        self.iter().enumerate()
    }
}

impl<'a> IterLayers<'a> for &'a mut Vec<Layer> {
    type Item = &'a mut Layer;
    type Iter = std::iter::Enumerate<std::slice::IterMut<'a, Layer>>;
    fn iter_layers(self) -> Self::Iter {
        self.iter_mut().enumerate()
    }
}

impl Dense {
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        dense_tensors!(self, flat)
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let d = self;
        let mut v = vec![("pos_emb".to_string(), d.pos_emb.flat_mut())];
        for (i, l) in d.layers.iter_mut().enumerate() {
            for (name, t) in layer_tensors!(l, flat_mut) {
                v.push((format!("layer{i}.{name}"), t));
            }
        }
        v.push(("lnf_g".to_string(), d.lnf_g.flat_mut()));
        v.push(("lnf_b".to_string(), d.lnf_b.flat_mut()));
        v.push(("seq_head.w".to_string(), d.seq_w.flat_mut()));
        v.push(("seq_head.b".to_string(), d.seq_b.flat_mut()));
        v.push(("tok_head.w".to_string(), d.tok_w.flat_mut()));
        v.push(("tok_head.b".to_string(), d.tok_b.flat_mut()));
        v
    }

    pub fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        dense_tensors!(self, dims)
    }

    pub fn zeros_like(&self) -> Dense {
        let z1 = |a: &Array1<f64>| Array1::zeros(a.raw_dim());
        let z2 = |a: &Array2<f64>| Array2::zeros(a.raw_dim());
        Dense {
            pos_emb: z2(&self.pos_emb),
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    ln1_g: z1(&l.ln1_g),
                    ln1_b: z1(&l.ln1_b),
                    wq: z2(&l.wq),
                    bq: z1(&l.bq),
                    wk: z2(&l.wk),
                    bk: z1(&l.bk),
                    wv: z2(&l.wv),
                    bv: z1(&l.bv),
                    wo: z2(&l.wo),
                    bo: z1(&l.bo),
                    ln2_g: z1(&l.ln2_g),
                    ln2_b: z1(&l.ln2_b),
                    w1: z2(&l.w1),
                    b1: z1(&l.b1),
                    w2: z2(&l.w2),
                    b2: z1(&l.b2),
                })
                .collect(),
            lnf_g: z1(&self.lnf_g),
            lnf_b: z1(&self.lnf_b),
            seq_w: z2(&self.seq_w),
            seq_b: z1(&self.seq_b),
            tok_w: z2(&self.tok_w),
            tok_b: z1(&self.tok_b),
        }
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Dense, scale: f64) {
        for ((_, dst), (_, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parameters {
    pub config: ModelConfig,
    pub token_emb: Array2<f64>,
    pub dense: Dense,
}

impl Parameters {
    /// All tensors in checkpoint order, token embeddings first.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut v = vec![("token_emb".to_string(), self.token_emb.flat())];
        v.extend(self.dense.tensors());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut v = vec![("token_emb".to_string(), self.token_emb.flat_mut())];
        v.extend(self.dense.tensors_mut());
        v
    }

    pub fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut v = vec![("token_emb".to_string(), self.token_emb.dims())];
        v.extend(self.dense.shapes());
        v
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

/// Gradients with a sparse token-embedding part (only rows that occurred).
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub token_emb: BTreeMap<u32, Array1<f64>>,
    pub dense: Dense,
}

impl Gradients {
    pub fn zeros(params: &Parameters) -> Self {
        Gradients {
            token_emb: BTreeMap::new(),
            dense: params.dense.zeros_like(),
        }
    }

    pub(crate) fn add_token_row(&mut self, id: u32, row: ndarray::ArrayView1<f64>) {
        self.token_emb
            .entry(id)
            .and_modify(|r| *r += &row)
            .or_insert_with(|| row.to_owned());
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (id, row) in &other.token_emb {
            let scaled = row * scale;
            self.token_emb
                .entry(*id)
                .and_modify(|r| *r += &scaled)
                .or_insert(scaled);
        }
        self.dense.add_scaled(&other.dense, scale);
    }

    /// Gradient value for coordinate `index` of the named tensor.
    pub fn get(&self, name: &str, index: usize) -> Option<f64> {
        if name == "token_emb" {
            let hidden = self.dense.pos_emb.ncols();
            let row = (index / hidden) as u32;
            return Some(self.token_emb.get(&row).map_or(0.0, |r| r[index % hidden]));
        }
        self.dense
            .tensors()
            .into_iter()
            .find(|(n, _)| n == name)
            .and_then(|(_, t)| t.get(index).copied())
    }

    /// Euclidean norm over all coordinates.
    pub fn norm(&self) -> f64 {
        let sparse: f64 = self.token_emb.values().map(|r| r.iter().map(|x| x * x).sum::<f64>()).sum();
        let dense: f64 = self
            .dense
            .tensors()
            .iter()
            .map(|(_, t)| t.iter().map(|x| x * x).sum::<f64>())
            .sum();
        (sparse + dense).sqrt()
    }

    /// Name of the first tensor holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<String> {
        for (id, row) in &self.token_emb {
            if row.iter().any(|x| !x.is_finite()) {
                return Some(format!("token_emb[{id}]"));
            }
        }
        self.dense
            .tensors()
            .into_iter()
            .find(|(_, t)| t.iter().any(|x| !x.is_finite()))
            .map(|(n, _)| n)
    }
}

fn truncated_normal(rng: &mut ChaCha8Rng, normal: &Normal<f64>) -> f64 {
    loop {
        let x = normal.sample(rng);
        if x.abs() <= 2.0 * INIT_STD {
            return x;
        }
    }
}

fn random2(rng: &mut ChaCha8Rng, normal: &Normal<f64>, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || truncated_normal(rng, normal))
}

/// Deterministic initialization: truncated normal weights and embeddings,
/// zero biases, unit layer-norm scales.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<Parameters> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    let (h, f) = (cfg.hidden, cfg.ffn);
    let ones = || Array1::<f64>::ones(h);
    let zeros = |n: usize| Array1::<f64>::zeros(n);

    let token_emb = random2(&mut rng, &normal, cfg.vocab_size, h);
    let pos_emb = random2(&mut rng, &normal, cfg.max_positions, h);
    let mut layers = Vec::with_capacity(cfg.layers);
    for _ in 0..cfg.layers {
        layers.push(Layer {
            ln1_g: ones(),
            ln1_b: zeros(h),
            wq: random2(&mut rng, &normal, h, h),
            bq: zeros(h),
            wk: random2(&mut rng, &normal, h, h),
            bk: zeros(h),
            wv: random2(&mut rng, &normal, h, h),
            bv: zeros(h),
            wo: random2(&mut rng, &normal, h, h),
            bo: zeros(h),
            ln2_g: ones(),
            ln2_b: zeros(h),
            w1: random2(&mut rng, &normal, h, f),
            b1: zeros(f),
            w2: random2(&mut rng, &normal, f, h),
            b2: zeros(h),
        });
    }
    let seq_w = random2(&mut rng, &normal, h, 2);
    let tok_w = random2(&mut rng, &normal, h, 3);
    Ok(Parameters {
        config: cfg.clone(),
        token_emb,
        dense: Dense {
            pos_emb,
            layers,
            lnf_g: ones(),
            lnf_b: zeros(h),
            seq_w,
            seq_b: zeros(2),
            tok_w,
            tok_b: zeros(3),
        },
    })
}

/// Grows the token embedding table to `new_vocab_size` rows. Existing rows
/// are kept bit-exactly; new rows come from the init distribution.
pub fn resize_embeddings(params: &Parameters, new_vocab_size: usize, seed: u64) -> Result<Parameters> {
    let old = params.config.vocab_size;
    if new_vocab_size < old {
        return Err(crate::Error::Config(format!(
            "cannot shrink the embedding table from {old} to {new_vocab_size} rows"
        )));
    }
    let mut out = params.clone();
    if new_vocab_size == old {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    let extra = random2(&mut rng, &normal, new_vocab_size - old, params.config.hidden);
    out.token_emb = ndarray::concatenate(ndarray::Axis(0), &[params.token_emb.view(), extra.view()])
        .expect("matching widths");
    out.config.vocab_size = new_vocab_size;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            layers: 2,
            hidden: 8,
            heads: 2,
            ffn: 16,
            vocab_size: 20,
            max_positions: 10,
            dropout: 0.0,
            final_layer_norm: true,
        }
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_params(&tiny(), 1).unwrap();
        let b = init_params(&tiny(), 1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_params(&tiny(), 2).unwrap());
        assert!(a.token_emb.iter().all(|x| x.abs() <= 2.0 * INIT_STD));
        assert!(a.dense.layers.iter().all(|l| l.ln1_g.iter().all(|&g| g == 1.0) && l.ln2_g.iter().all(|&g| g == 1.0)));
        assert!(a.dense.lnf_g.iter().all(|&g| g == 1.0));
    }

    #[test]
    fn divisibility_is_checked() {
        let cfg = ModelConfig {
            hidden: 64,
            heads: 3,
            ..tiny()
        };
        assert!(init_params(&cfg, 0).is_err());
    }

    #[test]
    fn tensor_listing_is_consistent() {
        let p = init_params(&tiny(), 0).unwrap();
        let shapes = p.shapes();
        let tensors = p.tensors();
        assert_eq!(shapes.len(), tensors.len());
        for ((n1, s), (n2, t)) in shapes.iter().zip(&tensors) {
            assert_eq!(n1, n2);
            assert_eq!(s.iter().product::<usize>(), t.len());
        }
        assert_eq!(shapes.len(), 1 + 1 + 2 * 16 + 6);
    }

    #[test]
    fn resize_rules() {
        let p = init_params(&tiny(), 0).unwrap();
        assert_eq!(resize_embeddings(&p, 20, 9).unwrap(), p);
        assert!(resize_embeddings(&p, 19, 9).is_err());
        let q = resize_embeddings(&p, 25, 9).unwrap();
        assert_eq!(q.token_emb.nrows(), 25);
        assert_eq!(q.token_emb.slice(ndarray::s![..20, ..]), p.token_emb);
    }
}
