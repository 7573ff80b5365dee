//! Per-piece influence on the sequence head, by gradient times input.
//!
//! For each real piece the gradient of the target-class logit with respect
//! to its token embedding is dotted with that embedding. The raw values are
//! divided by their largest magnitude, so weights lie in `[-1, 1]` and the
//! strongest piece sits at exactly ±1. This is not integrated gradients: it
//! is a single-point linearization around the actual input.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::SeqLabel;
use crate::model::{input_gradients, Parameters, Pooling, TextItem};
use crate::tokenizer::{encode_words, Vocabulary};
use crate::{Error, Exec, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenAttribution {
    pub piece: String,
    pub word_id: Option<u32>,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub seg_id: String,
    pub attributions: Vec<TokenAttribution>,
    /// Sum of all weights.
    pub attribution_score: f64,
    /// Class whose logit was attributed.
    pub attribute_label: SeqLabel,
    pub predicted_label: SeqLabel,
    /// Softmax probability of the positive class.
    pub predicted_probability: f64,
}

pub fn attribute_sequence<T: TextItem>(
    params: &Parameters,
    pooling: Pooling,
    item: &T,
    vocab: &Vocabulary,
    target: SeqLabel,
    max_len: usize,
) -> Result<AttributionReport> {
    let enc = encode_words(&item.words(), vocab, max_len);
    let n = enc.real_len();
    let ids = &enc.ids[..n];
    let (grad, logits) = input_gradients(params, pooling, ids, target.class())?;
    let mut attributions = Vec::with_capacity(n);
    for i in 0..n {
        let Some(word_id) = enc.word_ids[i] else { continue };
        let raw = grad.row(i).dot(&params.token_emb.row(ids[i] as usize));
        if !raw.is_finite() {
            return Err(Error::Attribution(format!(
                "{}: non-finite gradient at piece {} ({})",
                item.seg_id(),
                i,
                enc.pieces[i]
            )));
        }
        attributions.push(TokenAttribution {
            piece: enc.pieces[i].clone(),
            word_id: Some(word_id),
            weight: raw,
        });
    }
    let max_abs = attributions.iter().map(|a| a.weight.abs()).fold(0.0, f64::max);
    if max_abs > 0.0 {
        for a in &mut attributions {
            a.weight /= max_abs;
        }
    }
    let p_pos = {
        let m = logits[0].max(logits[1]);
        let e0 = (logits[0] - m).exp();
        let e1 = (logits[1] - m).exp();
        e1 / (e0 + e1)
    };
    if !p_pos.is_finite() {
        return Err(Error::Attribution(format!("{}: non-finite logits", item.seg_id())));
    }
    Ok(AttributionReport {
        seg_id: item.seg_id().to_string(),
        attribution_score: attributions.iter().map(|a| a.weight).sum(),
        attributions,
        attribute_label: target,
        predicted_label: SeqLabel::from_bool(logits[1] > logits[0]),
        predicted_probability: p_pos,
    })
}

pub fn attribute_all<T: TextItem>(
    params: &Parameters,
    pooling: Pooling,
    items: &[T],
    vocab: &Vocabulary,
    target: SeqLabel,
    max_len: usize,
    exec: Exec,
) -> Result<Vec<AttributionReport>> {
    exec.try_map(items, |item| attribute_sequence(params, pooling, item, vocab, target, max_len))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RenderFormat {
    Ansi,
    Html,
}

impl RenderFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ansi" => Some(RenderFormat::Ansi),
            "html" => Some(RenderFormat::Html),
            _ => None,
        }
    }
}

const GREEN: (f64, f64, f64) = (0.0, 160.0, 0.0);
const RED: (f64, f64, f64) = (200.0, 0.0, 0.0);

fn label_str(l: SeqLabel) -> &'static str {
    match l {
        SeqLabel::Positive => "positive",
        SeqLabel::Negative => "negative",
    }
}

fn header_line(r: &AttributionReport) -> String {
    format!(
        "{}: attribute label {}, predicted label {} (p(positive) = {:.4}), attribution score {:.4}; weights are gradient x input on the target logit",
        r.seg_id,
        label_str(r.attribute_label),
        label_str(r.predicted_label),
        r.predicted_probability,
        r.attribution_score
    )
}

/// Background color for a weight: white blending into green (positive) or
/// red (negative) in proportion to `|w|`.
pub fn weight_rgb(w: f64) -> (u8, u8, u8) {
    let (target, a) = if w >= 0.0 { (GREEN, w.min(1.0)) } else { (RED, (-w).min(1.0)) };
    let mix = |c: f64| (255.0 + (c - 255.0) * a).round() as u8;
    (mix(target.0), mix(target.1), mix(target.2))
}

fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

fn ansi_block(r: &AttributionReport) -> String {
    let mut out = header_line(r);
    out.push('\n');
    let tokens: Vec<String> = r
        .attributions
        .iter()
        .map(|a| {
            if a.weight == 0.0 {
                a.piece.clone()
            } else {
                let (red, g, b) = weight_rgb(a.weight);
                format!("\x1b[48;2;{red};{g};{b}m\x1b[38;2;0;0;0m{}\x1b[0m", a.piece)
            }
        })
        .collect();
    out.push_str(&tokens.join(" "));
    out.push('\n');
    out
}

fn html_block(r: &AttributionReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "<section>\n<p class=\"header\">{}</p>\n<p class=\"tokens\">", escape_xml(&header_line(r)));
    for a in &r.attributions {
        let piece = escape_xml(&a.piece);
        if a.weight == 0.0 {
            let _ = writeln!(out, "<span>{piece}</span>");
        } else {
            let (red, g, b) = if a.weight > 0.0 { GREEN } else { RED };
            let _ = writeln!(
                out,
                "<span title=\"{:.4}\" style=\"background-color: rgba({}, {}, {}, {:.3})\">{piece}</span>",
                a.weight,
                red,
                g,
                b,
                a.weight.abs().min(1.0)
            );
        }
    }
    out.push_str("</p>\n</section>\n");
    out
}

/// Self-contained XHTML document holding every report.
pub fn render_html_document(reports: &[AttributionReport]) -> String {
    let mut out = String::from(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<html xmlns=\"http://www.w3.org/1999/xhtml\" lang=\"en\">\n<head>\n<meta charset=\"utf-8\"/>\n<title>Token attribution</title>\n<style>span { padding: 0 2px; } .header { font-family: monospace; }</style>\n</head>\n<body>\n",
    );
    for r in reports {
        out.push_str(&html_block(r));
    }
    out.push_str("</body>\n</html>\n");
    out
}

pub fn render_attribution(report: &AttributionReport, format: RenderFormat) -> String {
    render_all(std::slice::from_ref(report), format)
}

pub fn render_all(reports: &[AttributionReport], format: RenderFormat) -> String {
    match format {
        RenderFormat::Ansi => reports.iter().map(ansi_block).collect::<Vec<_>>().join("\n"),
        RenderFormat::Html => render_html_document(reports),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(weights: &[f64]) -> AttributionReport {
        AttributionReport {
            seg_id: "s<1>".into(),
            attributions: weights
                .iter()
                .enumerate()
                .map(|(i, &w)| TokenAttribution {
                    piece: format!("p{i}&"),
                    word_id: Some(i as u32),
                    weight: w,
                })
                .collect(),
            attribution_score: weights.iter().sum(),
            attribute_label: SeqLabel::Positive,
            predicted_label: SeqLabel::Negative,
            predicted_probability: 0.25,
        }
    }

    #[test]
    fn color_endpoints() {
        assert_eq!(weight_rgb(0.0), (255, 255, 255));
        assert_eq!(weight_rgb(1.0), (0, 160, 0));
        assert_eq!(weight_rgb(-1.0), (200, 0, 0));
    }

    #[test]
    fn zero_weight_is_unstyled() {
        let r = report(&[0.0, 1.0]);
        let ansi = render_attribution(&r, RenderFormat::Ansi);
        assert!(ansi.contains("\np0& \x1b[48;2;0;160;0m"));
        let html = render_attribution(&r, RenderFormat::Html);
        assert!(html.contains("<span>p0&amp;</span>"));
        assert!(html.contains("rgba(0, 160, 0, 1.000)"));
    }

    #[test]
    fn header_names_labels() {
        let html = render_attribution(&report(&[0.5]), RenderFormat::Html);
        assert!(html.contains("attribute label positive"));
        assert!(html.contains("predicted label negative"));
        assert!(html.contains("s&lt;1&gt;"));
    }
}
