//! Random small evaluation cases and a brute-force scorer used as an
//! independent reference for the metric implementations.
#![allow(dead_code)]

use rand::Rng;
use twparse::conllu::{Sentence, Token, Upos};
use twparse::synthetic::random_tree_heads;

pub struct Case {
    pub raw: String,
    pub gold: Sentence,
    pub pred: Sentence,
}

const TAGS: [Upos; 3] = [Upos::Noun, Upos::Verb, Upos::Adj];
const LABELS: [&str; 2] = ["a", "b"];

fn segment<R: Rng>(chunk: &str, rng: &mut R) -> Vec<String> {
    let chars: Vec<char> = chunk.chars().collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    for (i, c) in chars.iter().enumerate() {
        cur.push(*c);
        if i + 1 < chars.len() && rng.gen_bool(0.35) {
            out.push(std::mem::take(&mut cur));
        }
    }
    out.push(cur);
    out
}

fn annotate<R: Rng>(forms: Vec<String>, raw: &str, rng: &mut R) -> Sentence {
    let heads = random_tree_heads(forms.len(), rng);
    let tokens = forms
        .into_iter()
        .zip(heads)
        .enumerate()
        .map(|(i, (f, h))| {
            let label = if h == 0 { "root" } else { LABELS[rng.gen_range(0..2)] };
            Token::new(i + 1, f).with_upos(TAGS[rng.gen_range(0..3)]).with_head(h, label)
        })
        .collect();
    let mut s = Sentence::new(tokens);
    s.set_meta("text", raw);
    s
}

/// A raw string over a tiny alphabet with two independent tokenizations;
/// when they coincide, the prediction copies each gold column with
/// probability one half so that partial matches are common.
pub fn random_case<R: Rng>(rng: &mut R) -> Case {
    let chunks: Vec<String> = (0..rng.gen_range(1..6))
        .map(|_| (0..rng.gen_range(1..5)).map(|_| ['a', 'b', 'c'][rng.gen_range(0..3)]).collect())
        .collect();
    let mut raw = String::new();
    for (i, c) in chunks.iter().enumerate() {
        if i > 0 {
            raw.push_str(if rng.gen_bool(0.2) { "  " } else { " " });
        }
        raw.push_str(c);
    }
    let gold_forms: Vec<String> = chunks.iter().flat_map(|c| segment(c, rng)).collect();
    let pred_forms: Vec<String> = if rng.gen_bool(0.4) {
        gold_forms.clone()
    } else {
        chunks.iter().flat_map(|c| segment(c, rng)).collect()
    };
    let gold = annotate(gold_forms, &raw, rng);
    let mut pred = annotate(pred_forms, &raw, rng);
    if pred.len() == gold.len() {
        for (p, g) in pred.tokens.iter_mut().zip(&gold.tokens) {
            if rng.gen_bool(0.5) {
                p.upos = g.upos;
            }
            if rng.gen_bool(0.5) {
                p.head = g.head;
                if rng.gen_bool(0.5) {
                    p.deprel = g.deprel.clone();
                }
            }
        }
    }
    Case { raw, gold, pred }
}

/// Spans as (start, end) over the raw string with whitespace removed.
pub fn offsets(s: &Sentence) -> Vec<(usize, usize)> {
    let mut at = 0;
    s.tokens
        .iter()
        .map(|t| {
            let n = t.form.chars().count();
            at += n;
            (at - n, at)
        })
        .collect()
}

pub struct Reference {
    pub tok: (usize, usize, usize),
    pub tag: (usize, usize, usize),
    pub pipe_unlabelled: usize,
    pub pipe_labelled: usize,
}

pub fn reference(c: &Case) -> Reference {
    let g = offsets(&c.gold);
    let p = offsets(&c.pred);
    let mut tok = 0;
    let mut tag = 0;
    let mut pu = 0;
    let mut pl = 0;
    let head_span = |spans: &[(usize, usize)], h: usize| if h == 0 { None } else { Some(spans[h - 1]) };
    for (j, ps) in p.iter().enumerate() {
        for (i, gs) in g.iter().enumerate() {
            if ps != gs {
                continue;
            }
            tok += 1;
            let (gt, pt) = (&c.gold.tokens[i], &c.pred.tokens[j]);
            if gt.upos == pt.upos {
                tag += 1;
            }
            if head_span(&g, gt.head.unwrap()) == head_span(&p, pt.head.unwrap()) {
                pu += 1;
                if gt.deprel == pt.deprel {
                    pl += 1;
                }
            }
        }
    }
    Reference {
        tok: (tok, g.len(), p.len()),
        tag: (tag, g.len(), p.len()),
        pipe_unlabelled: pu,
        pipe_labelled: pl,
    }
}

/// F1 in percent as the harmonic mean of precision and recall.
pub fn harmonic_f1(correct: usize, gold: usize, predicted: usize) -> f64 {
    if correct == 0 {
        return 0.0;
    }
    let p = correct as f64 / predicted as f64;
    let r = correct as f64 / gold as f64;
    100.0 * 2.0 * p * r / (p + r)
}

/// (heads, labelled, tokens) for identically tokenized sentences.
pub fn reference_attachment(gold: &Sentence, pred: &Sentence) -> (usize, usize, usize) {
    let mut h = 0;
    let mut l = 0;
    for (g, p) in gold.tokens.iter().zip(&pred.tokens) {
        if g.head == p.head {
            h += 1;
            l += usize::from(g.deprel == p.deprel);
        }
    }
    (h, l, gold.len())
}
