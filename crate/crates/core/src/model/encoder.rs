use ndarray::{s, Array1, Array2, Axis};

use super::params::{Gradients, Layer, Parameters};
use crate::rng::SplitMix64;
use crate::tokenizer::Encoding;
use crate::{Error, Exec, Result};

pub(crate) const LN_EPS: f64 = 1e-5;

/// Whether dropout is active. Training mode carries the seed for the masks
/// of one example, so a forward pass is reproducible.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForwardMode {
    Eval,
    Train { seed: u64 },
}

pub(crate) struct LnCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

pub(crate) struct LayerCache {
    ln1: LnCache,
    a: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    drop1: Option<Array2<f64>>,
    ln2: LnCache,
    c: Array2<f64>,
    u: Array2<f64>,
    z: Array2<f64>,
    drop2: Option<Array2<f64>>,
}

pub(crate) struct EncoderCache {
    ids: Vec<u32>,
    drop0: Option<Array2<f64>>,
    layers: Vec<LayerCache>,
    lnf: Option<LnCache>,
    /// Last hidden states, one row per position.
    pub(crate) out: Array2<f64>,
}

pub(crate) fn layer_norm(x: &Array2<f64>, g: &Array1<f64>, b: &Array1<f64>) -> (Array2<f64>, LnCache) {
    let mean = x.mean_axis(Axis(1)).expect("non-empty rows");
    let centered = x - &mean.insert_axis(Axis(1));
    let var = centered.mapv(|v| v * v).mean_axis(Axis(1)).expect("non-empty rows");
    let rstd = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
    let xhat = &centered * &rstd.view().insert_axis(Axis(1));
    let y = &xhat * g + b;
    (y, LnCache { xhat, rstd })
}

fn layer_norm_backward(
    dy: &Array2<f64>,
    g: &Array1<f64>,
    cache: &LnCache,
    dg: &mut Array1<f64>,
    db: &mut Array1<f64>,
) -> Array2<f64> {
    *dg += &(dy * &cache.xhat).sum_axis(Axis(0));
    *db += &dy.sum_axis(Axis(0));
    let dxhat = dy * g;
    let mean_d = dxhat.mean_axis(Axis(1)).expect("non-empty rows");
    let mean_dx = (&dxhat * &cache.xhat).mean_axis(Axis(1)).expect("non-empty rows");
    let mut dx = dxhat - &mean_d.insert_axis(Axis(1)) - &(&cache.xhat * &mean_dx.insert_axis(Axis(1)));
    dx *= &cache.rstd.view().insert_axis(Axis(1));
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

fn uniform(rng: &mut SplitMix64) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn dropout(x: Array2<f64>, p: f64, rng: Option<&mut SplitMix64>) -> (Array2<f64>, Option<Array2<f64>>) {
    match rng {
        Some(rng) if p > 0.0 => {
            let keep = 1.0 / (1.0 - p);
            let mask = Array2::from_shape_simple_fn(x.raw_dim(), || if uniform(rng) < p { 0.0 } else { keep });
            (x * &mask, Some(mask))
        }
        _ => (x, None),
    }
}

fn check_input(params: &Parameters, ids: &[u32], valid: &[bool]) -> Result<()> {
    let cfg = &params.config;
    if ids.is_empty() || ids.len() != valid.len() {
        return Err(Error::Input("empty sequence or mask length mismatch".into()));
    }
    if ids.len() > cfg.max_positions {
        return Err(Error::Input(format!(
            "sequence of {} positions exceeds the model's {}",
            ids.len(),
            cfg.max_positions
        )));
    }
    if let Some(bad) = ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
        return Err(Error::Input(format!("token id {bad} outside a vocabulary of {}", cfg.vocab_size)));
    }
    if !valid.iter().any(|&v| v) {
        return Err(Error::Input("sequence has no attended position".into()));
    }
    Ok(())
}

fn layer_forward(
    l: &Layer,
    h: &Array2<f64>,
    valid: &[bool],
    heads: usize,
    p: f64,
    mut rng: Option<&mut SplitMix64>,
) -> (Array2<f64>, LayerCache) {
    let (n, hidden) = h.dim();
    let dh = hidden / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (a, ln1) = layer_norm(h, &l.ln1_g, &l.ln1_b);
    let q = a.dot(&l.wq) + &l.bq;
    let k = a.dot(&l.wk) + &l.bk;
    let v = a.dot(&l.wv) + &l.bv;
    let mut ctx = Array2::zeros((n, hidden));
    let mut attn = Vec::with_capacity(heads);
    for hd in 0..heads {
        let (lo, hi) = (hd * dh, (hd + 1) * dh);
        let mut sc = q.slice(s![.., lo..hi]).dot(&k.slice(s![.., lo..hi]).t()) * scale;
        for (j, &ok) in valid.iter().enumerate() {
            if !ok {
                sc.column_mut(j).fill(f64::NEG_INFINITY);
            }
        }
        softmax_rows(&mut sc);
        ctx.slice_mut(s![.., lo..hi]).assign(&sc.dot(&v.slice(s![.., lo..hi])));
        attn.push(sc);
    }
    let o = ctx.dot(&l.wo) + &l.bo;
    let (o, drop1) = dropout(o, p, rng.as_deref_mut());
    let h1 = h + &o;
    let (c, ln2) = layer_norm(&h1, &l.ln2_g, &l.ln2_b);
    let u = c.dot(&l.w1) + &l.b1;
    let z = u.mapv(gelu);
    let f = z.dot(&l.w2) + &l.b2;
    let (f, drop2) = dropout(f, p, rng);
    let out = h1 + &f;
    let cache = LayerCache {
        ln1,
        a,
        q,
        k,
        v,
        attn,
        ctx,
        drop1,
        ln2,
        c,
        u,
        z,
        drop2,
    };
    (out, cache)
}

fn layer_backward(l: &Layer, cache: &LayerCache, dout: &Array2<f64>, heads: usize, g: &mut Layer) -> Array2<f64> {
    let hidden = dout.ncols();
    let dh = hidden / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    // out = h1 + drop2(z w2 + b2)
    let mut df = dout.clone();
    if let Some(m) = &cache.drop2 {
        df *= m;
    }
    g.w2 += &cache.z.t().dot(&df);
    g.b2 += &df.sum_axis(Axis(0));
    let du = df.dot(&l.w2.t()) * &cache.u.mapv(gelu_grad);
    g.w1 += &cache.c.t().dot(&du);
    g.b1 += &du.sum_axis(Axis(0));
    let dc = du.dot(&l.w1.t());
    let dh1 = dout + &layer_norm_backward(&dc, &l.ln2_g, &cache.ln2, &mut g.ln2_g, &mut g.ln2_b);

    // h1 = h + drop1(ctx wo + bo)
    let mut do_ = dh1.clone();
    if let Some(m) = &cache.drop1 {
        do_ *= m;
    }
    g.wo += &cache.ctx.t().dot(&do_);
    g.bo += &do_.sum_axis(Axis(0));
    let dctx = do_.dot(&l.wo.t());
    let mut dq = Array2::zeros(dctx.raw_dim());
    let mut dk = Array2::zeros(dctx.raw_dim());
    let mut dv = Array2::zeros(dctx.raw_dim());
    for hd in 0..heads {
        let (lo, hi) = (hd * dh, (hd + 1) * dh);
        let a = &cache.attn[hd];
        let dctx_h = dctx.slice(s![.., lo..hi]);
        dv.slice_mut(s![.., lo..hi]).assign(&a.t().dot(&dctx_h));
        let da = dctx_h.dot(&cache.v.slice(s![.., lo..hi]).t());
        let row_dot = (&da * a).sum_axis(Axis(1));
        let ds = (da - &row_dot.insert_axis(Axis(1))) * a * scale;
        dq.slice_mut(s![.., lo..hi]).assign(&ds.dot(&cache.k.slice(s![.., lo..hi])));
        dk.slice_mut(s![.., lo..hi]).assign(&ds.t().dot(&cache.q.slice(s![.., lo..hi])));
    }
    let at = cache.a.t();
    g.wq += &at.dot(&dq);
    g.bq += &dq.sum_axis(Axis(0));
    g.wk += &at.dot(&dk);
    g.bk += &dk.sum_axis(Axis(0));
    g.wv += &at.dot(&dv);
    g.bv += &dv.sum_axis(Axis(0));
    let da_ln = dq.dot(&l.wq.t()) + dk.dot(&l.wk.t()) + dv.dot(&l.wv.t());
    dh1 + layer_norm_backward(&da_ln, &l.ln1_g, &cache.ln1, &mut g.ln1_g, &mut g.ln1_b)
}

/// Forward pass over `ids`, attending only to positions where `valid` holds.
pub(crate) fn encode(params: &Parameters, ids: &[u32], valid: &[bool], mode: ForwardMode) -> Result<EncoderCache> {
    check_input(params, ids, valid)?;
    let cfg = &params.config;
    let n = ids.len();
    let mut rng = match mode {
        ForwardMode::Train { seed } => Some(SplitMix64::new(seed)),
        ForwardMode::Eval => None,
    };
    let mut x = Array2::zeros((n, cfg.hidden));
    for (i, &id) in ids.iter().enumerate() {
        let row = &params.token_emb.row(id as usize) + &params.dense.pos_emb.row(i);
        x.row_mut(i).assign(&row);
    }
    let (mut h, drop0) = dropout(x, cfg.dropout, rng.as_mut());
    let mut layers = Vec::with_capacity(cfg.layers);
    for l in &params.dense.layers {
        let (next, cache) = layer_forward(l, &h, valid, cfg.heads, cfg.dropout, rng.as_mut());
        h = next;
        layers.push(cache);
    }
    let (out, lnf) = if cfg.final_layer_norm {
        let (y, c) = layer_norm(&h, &params.dense.lnf_g, &params.dense.lnf_b);
        (y, Some(c))
    } else {
        (h, None)
    };
    Ok(EncoderCache {
        ids: ids.to_vec(),
        drop0,
        layers,
        lnf,
        out,
    })
}

/// Backpropagates `dout` (gradient of the loss with respect to the last
/// hidden states) into `grads`. Returns the gradient with respect to the
/// summed input embeddings, before dropout.
pub(crate) fn backward(params: &Parameters, cache: &EncoderCache, dout: &Array2<f64>, grads: &mut Gradients) -> Array2<f64> {
    let cfg = &params.config;
    let mut dh = match &cache.lnf {
        Some(c) => {
            let d = &mut grads.dense;
            layer_norm_backward(dout, &params.dense.lnf_g, c, &mut d.lnf_g, &mut d.lnf_b)
        }
        None => dout.clone(),
    };
    for (i, (l, c)) in params.dense.layers.iter().zip(&cache.layers).enumerate().rev() {
        dh = layer_backward(l, c, &dh, cfg.heads, &mut grads.dense.layers[i]);
    }
    if let Some(m) = &cache.drop0 {
        dh *= m;
    }
    for (i, &id) in cache.ids.iter().enumerate() {
        grads.add_token_row(id, dh.row(i));
        let mut pos = grads.dense.pos_emb.row_mut(i);
        pos += &dh.row(i);
    }
    dh
}

fn mask_of(enc: &Encoding) -> Vec<bool> {
    enc.attention_mask.iter().map(|&m| m == 1).collect()
}

/// Last hidden states for full-length (padded) encodings, padding keys masked.
pub fn forward_encoder(params: &Parameters, encodings: &[Encoding], mode: ForwardMode, exec: Exec) -> Result<Vec<Array2<f64>>> {
    exec.try_map(encodings, |e| encode(params, &e.ids, &mask_of(e), mode).map(|c| c.out))
}

/// Attention probabilities per layer and head (each `n x n`, rows sum to 1).
pub fn attention_weights(params: &Parameters, encoding: &Encoding) -> Result<Vec<Vec<Array2<f64>>>> {
    let cache = encode(params, &encoding.ids, &mask_of(encoding), ForwardMode::Eval)?;
    Ok(cache.layers.into_iter().map(|l| l.attn).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_matches_reference_points() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(1.0) - 0.841_191_990_607_477_1).abs() < 1e-12);
        for x in [-2.0, -0.3, 0.0, 0.7, 3.0] {
            let fd = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn layer_norm_normalizes_rows() {
        let x = ndarray::array![[1.0, 2.0, 3.0, 4.0], [-5.0, 0.0, 5.0, 10.0]];
        let (y, _) = layer_norm(&x, &Array1::ones(4), &Array1::zeros(4));
        for row in y.rows() {
            assert!(row.mean().unwrap().abs() < 1e-12);
            let var = row.mapv(|v| v * v).mean().unwrap();
            assert!((var - 1.0).abs() < 1e-4);
        }
    }
}
