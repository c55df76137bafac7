//! Evaluation: token-span F1, tagging accuracy/F1, attachment scores,
//! span-aligned pipeline scores and throughput.
//!
//! Scores are percentages. Reports keep full precision internally and print
//! one decimal.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::align::{sentence_spans, AlignError, Span};
use crate::conllu::{Sentence, Treebank};
use crate::util::median;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("gold has {gold} sentences, prediction has {predicted}")]
    SentenceCountMismatch { gold: usize, predicted: usize },
    #[error("sentence {sent}: gold has {gold} tokens, prediction has {predicted}")]
    TokenCountMismatch {
        sent: String,
        gold: usize,
        predicted: usize,
    },
    #[error("prediction has no sentence with sent_id {0}")]
    MissingSentence(String),
    #[error("sentence {0}: no `text` comment to align against")]
    MissingText(String),
    #[error("sentence {0}: gold and predicted raw text differ")]
    RawMismatch(String),
    #[error("sentence {sent}: {source}")]
    Alignment { sent: String, source: AlignError },
}

/// Match counts underlying a precision/recall/F1 triple.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub correct: usize,
    pub gold: usize,
    pub predicted: usize,
}

impl Counts {
    pub fn new(correct: usize, gold: usize, predicted: usize) -> Counts {
        Counts {
            correct,
            gold,
            predicted,
        }
    }

    pub fn precision(&self) -> f64 {
        ratio(self.correct, self.predicted)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.correct, self.gold)
    }

    pub fn f1(&self) -> f64 {
        f1_percent(self.correct, self.gold, self.predicted)
    }
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.correct += o.correct;
        self.gold += o.gold;
        self.predicted += o.predicted;
    }
}

impl std::iter::Sum for Counts {
    fn sum<I: Iterator<Item = Counts>>(iter: I) -> Counts {
        iter.fold(Counts::default(), |mut a, b| {
            a += b;
            a
        })
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall, in percent; 0 when both are 0.
pub fn f1_percent(correct: usize, gold: usize, predicted: usize) -> f64 {
    if correct == 0 {
        return 0.0;
    }
    // 2PR/(P+R) simplifies to 2c/(g+p).
    100.0 * 2.0 * correct as f64 / (gold + predicted) as f64
}

/// Exact span matches between two span lists (each list is a set).
pub fn span_counts(gold: &[Span], predicted: &[Span]) -> Counts {
    let g: HashSet<&Span> = gold.iter().collect();
    let correct = predicted.iter().filter(|s| g.contains(s)).count();
    Counts::new(correct, gold.len(), predicted.len())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EvalReport {
    pub metric: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uas: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub las: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tokens_per_second: Option<f64>,
    pub tokens: usize,
}

impl EvalReport {
    pub fn new(metric: &str) -> EvalReport {
        EvalReport {
            metric: metric.to_owned(),
            ..EvalReport::default()
        }
    }

    fn with_counts(metric: &str, c: Counts) -> EvalReport {
        EvalReport {
            precision: Some(c.precision()),
            recall: Some(c.recall()),
            f1: Some(c.f1()),
            tokens: c.gold,
            ..EvalReport::new(metric)
        }
    }

    fn fields(&self) -> Vec<(&'static str, f64)> {
        [
            ("precision", self.precision),
            ("recall", self.recall),
            ("f1", self.f1),
            ("accuracy", self.accuracy),
            ("uas", self.uas),
            ("las", self.las),
            ("tokens_per_second", self.tokens_per_second),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }

    /// `key=value` lines, values to one decimal.
    pub fn to_key_values(&self) -> String {
        let mut out = format!("metric={}\n", self.metric);
        for (k, v) in self.fields() {
            out.push_str(&format!("{k}={v:.1}\n"));
        }
        out.push_str(&format!("tokens={}\n", self.tokens));
        out
    }

    /// JSON object with values rounded to one decimal.
    pub fn to_json(&self) -> String {
        let mut map = serde_json::Map::new();
        map.insert("metric".into(), self.metric.clone().into());
        for (k, v) in self.fields() {
            map.insert(k.into(), ((v * 10.0).round() / 10.0).into());
        }
        map.insert("tokens".into(), self.tokens.into());
        serde_json::Value::Object(map).to_string()
    }
}

impl fmt::Display for EvalReport {
    /// An aligned two-column table.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<18} {}", "metric", self.metric)?;
        for (k, v) in self.fields() {
            writeln!(f, "{k:<18} {v:>8.1}")?;
        }
        writeln!(f, "{:<18} {:>8}", "tokens", self.tokens)
    }
}

fn sent_name(s: &Sentence, idx: usize) -> String {
    s.sent_id().map_or_else(|| format!("#{}", idx + 1), str::to_owned)
}

/// Pairs gold and predicted sentences by `sent_id` when every sentence has
/// a unique one, by position otherwise.
pub fn pair_sentences<'a>(
    gold: &'a Treebank,
    pred: &'a Treebank,
) -> Result<Vec<(&'a Sentence, &'a Sentence)>, EvalError> {
    if gold.sentences.len() != pred.sentences.len() {
        return Err(EvalError::SentenceCountMismatch {
            gold: gold.sentences.len(),
            predicted: pred.sentences.len(),
        });
    }
    let gold_ids: Option<Vec<&str>> = gold.sentences.iter().map(Sentence::sent_id).collect();
    let pred_ids: Option<HashMap<&str, &Sentence>> =
        pred.sentences.iter().map(|s| s.sent_id().map(|id| (id, s))).collect();
    match (gold_ids, pred_ids) {
        (Some(ids), Some(map)) if map.len() == pred.sentences.len() => ids
            .into_iter()
            .zip(&gold.sentences)
            .map(|(id, g)| {
                map.get(id)
                    .map(|p| (g, *p))
                    .ok_or_else(|| EvalError::MissingSentence(id.to_owned()))
            })
            .collect(),
        _ => Ok(gold.sentences.iter().zip(&pred.sentences).collect()),
    }
}

fn spans(raw: &str, s: &Sentence, idx: usize) -> Result<Vec<Span>, EvalError> {
    sentence_spans(raw, s).map_err(|source| EvalError::Alignment {
        sent: sent_name(s, idx),
        source,
    })
}

/// Span counts for one sentence pair against `raw`.
pub fn token_counts(gold: &Sentence, pred: &Sentence, raw: &str) -> Result<Counts, EvalError> {
    Ok(span_counts(&spans(raw, gold, 0)?, &spans(raw, pred, 0)?))
}

pub fn token_span_f1(gold: &Sentence, pred: &Sentence, raw: &str) -> Result<EvalReport, EvalError> {
    Ok(EvalReport::with_counts("tok", token_counts(gold, pred, raw)?))
}

fn shared_raw<'a>(g: &'a Sentence, p: &Sentence, idx: usize) -> Result<&'a str, EvalError> {
    let raw = g.text().ok_or_else(|| EvalError::MissingText(sent_name(g, idx)))?;
    if let Some(pr) = p.text() {
        if strip_ws(pr) != strip_ws(raw) {
            return Err(EvalError::RawMismatch(sent_name(g, idx)));
        }
    }
    Ok(raw)
}

fn strip_ws(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Corpus-level token F1, aligning both sides against the gold `text`.
pub fn token_span_f1_treebank(gold: &Treebank, pred: &Treebank) -> Result<EvalReport, EvalError> {
    let mut total = Counts::default();
    for (i, (g, p)) in pair_sentences(gold, pred)?.into_iter().enumerate() {
        let raw = shared_raw(g, p, i)?;
        total += span_counts(&spans(raw, g, i)?, &spans(raw, p, i)?);
    }
    Ok(EvalReport::with_counts("tok", total))
}

/// Tagging counts. With gold tokens (`raw` absent) `correct/gold` is the
/// accuracy; otherwise a predicted token counts when its span and tag both
/// match.
pub fn tagging_counts(gold: &Sentence, pred: &Sentence, raw: Option<&str>) -> Result<Counts, EvalError> {
    match raw {
        None => {
            if gold.len() != pred.len() {
                return Err(EvalError::TokenCountMismatch {
                    sent: sent_name(gold, 0),
                    gold: gold.len(),
                    predicted: pred.len(),
                });
            }
            let correct = gold
                .tokens
                .iter()
                .zip(&pred.tokens)
                .filter(|(g, p)| g.upos.is_some() && g.upos == p.upos)
                .count();
            Ok(Counts::new(correct, gold.len(), pred.len()))
        }
        Some(raw) => {
            let gs = spans(raw, gold, 0)?;
            let ps = spans(raw, pred, 0)?;
            let tag_at: HashMap<Span, _> = gs.iter().zip(&gold.tokens).map(|(s, t)| (*s, t.upos)).collect();
            let correct = ps
                .iter()
                .zip(&pred.tokens)
                .filter(|(s, t)| t.upos.is_some() && tag_at.get(s) == Some(&t.upos))
                .count();
            Ok(Counts::new(correct, gs.len(), ps.len()))
        }
    }
}

pub fn tagging_scores(gold: &Sentence, pred: &Sentence, raw: Option<&str>) -> Result<EvalReport, EvalError> {
    let c = tagging_counts(gold, pred, raw)?;
    Ok(tagging_report(c, raw.is_none()))
}

fn tagging_report(c: Counts, gold_tokens: bool) -> EvalReport {
    if gold_tokens {
        EvalReport {
            accuracy: Some(c.recall()),
            tokens: c.gold,
            ..EvalReport::new("pos")
        }
    } else {
        EvalReport::with_counts("pos", c)
    }
}

/// Corpus-level tagging scores; `auto_tokens` selects span-aligned F1.
pub fn tagging_scores_treebank(
    gold: &Treebank,
    pred: &Treebank,
    auto_tokens: bool,
) -> Result<EvalReport, EvalError> {
    let mut total = Counts::default();
    for (i, (g, p)) in pair_sentences(gold, pred)?.into_iter().enumerate() {
        let raw = if auto_tokens { Some(shared_raw(g, p, i)?) } else { None };
        total += tagging_counts(g, p, raw).map_err(|e| rename(e, g, i))?;
    }
    Ok(tagging_report(total, !auto_tokens))
}

fn rename(e: EvalError, s: &Sentence, idx: usize) -> EvalError {
    match e {
        EvalError::TokenCountMismatch { gold, predicted, .. } => EvalError::TokenCountMismatch {
            sent: sent_name(s, idx),
            gold,
            predicted,
        },
        EvalError::Alignment { source, .. } => EvalError::Alignment {
            sent: sent_name(s, idx),
            source,
        },
        other => other,
    }
}

/// Correct-head and correct-head-and-label counts over identically
/// tokenized treebanks; punctuation included.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AttachmentCounts {
    pub tokens: usize,
    pub heads: usize,
    pub labelled: usize,
}

impl AttachmentCounts {
    pub fn uas(&self) -> f64 {
        ratio(self.heads, self.tokens)
    }

    pub fn las(&self) -> f64 {
        ratio(self.labelled, self.tokens)
    }
}

pub fn attachment_counts(gold: &Treebank, pred: &Treebank) -> Result<AttachmentCounts, EvalError> {
    let mut c = AttachmentCounts::default();
    for (i, (g, p)) in pair_sentences(gold, pred)?.into_iter().enumerate() {
        if g.len() != p.len() {
            return Err(EvalError::TokenCountMismatch {
                sent: sent_name(g, i),
                gold: g.len(),
                predicted: p.len(),
            });
        }
        for (gt, pt) in g.tokens.iter().zip(&p.tokens) {
            c.tokens += 1;
            if gt.head.is_some() && gt.head == pt.head {
                c.heads += 1;
                if gt.deprel() == pt.deprel() {
                    c.labelled += 1;
                }
            }
        }
    }
    Ok(c)
}

pub fn attachment_scores(gold: &Treebank, pred: &Treebank) -> Result<EvalReport, EvalError> {
    let c = attachment_counts(gold, pred)?;
    Ok(EvalReport {
        uas: Some(c.uas()),
        las: Some(c.las()),
        tokens: c.tokens,
        ..EvalReport::new("las")
    })
}

/// Unlabelled and labelled span-aligned counts for one sentence pair.
pub fn pipeline_counts(gold: &Sentence, pred: &Sentence, raw: &str) -> Result<(Counts, Counts), EvalError> {
    let gs = spans(raw, gold, 0)?;
    let ps = spans(raw, pred, 0)?;
    let gold_at: HashMap<Span, usize> = gs.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let head_span = |spans: &[Span], head: Option<usize>| -> Option<Option<Span>> {
        match head {
            None => None,
            Some(0) => Some(None),
            Some(h) => spans.get(h - 1).map(|s| Some(*s)),
        }
    };
    let (mut uas, mut las) = (0, 0);
    for (pi, span) in ps.iter().enumerate() {
        let Some(&gi) = gold_at.get(span) else { continue };
        let (gt, pt) = (&gold.tokens[gi], &pred.tokens[pi]);
        let gh = head_span(&gs, gt.head);
        if gh.is_some() && gh == head_span(&ps, pt.head) {
            uas += 1;
            if gt.deprel() == pt.deprel() {
                las += 1;
            }
        }
    }
    Ok((
        Counts::new(uas, gs.len(), ps.len()),
        Counts::new(las, gs.len(), ps.len()),
    ))
}

/// Span-aligned attachment F1 for full-pipeline output: `uas`/`las` are
/// F1 scores and `f1` repeats the labelled one.
pub fn pipeline_scores(gold: &Treebank, pred: &Treebank) -> Result<EvalReport, EvalError> {
    let (mut u, mut l) = (Counts::default(), Counts::default());
    for (i, (g, p)) in pair_sentences(gold, pred)?.into_iter().enumerate() {
        let raw = shared_raw(g, p, i)?;
        let (cu, cl) = pipeline_counts(g, p, raw).map_err(|e| rename(e, g, i))?;
        u += cu;
        l += cl;
    }
    Ok(EvalReport {
        uas: Some(u.f1()),
        las: Some(l.f1()),
        ..EvalReport::with_counts("pipeline", l)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Throughput {
    pub tokens: usize,
    pub median_seconds: f64,
    pub tokens_per_second: f64,
}

impl Throughput {
    pub fn report(&self) -> EvalReport {
        EvalReport {
            tokens_per_second: Some(self.tokens_per_second),
            tokens: self.tokens,
            ..EvalReport::new("speed")
        }
    }
}

/// Runs `system` over every sentence once as warm-up and then `runs` more
/// times on the calling thread, reporting the median wall time.
pub fn throughput<F: FnMut(&Sentence)>(tb: &Treebank, runs: usize, mut system: F) -> Throughput {
    for s in &tb.sentences {
        system(s);
    }
    let mut times: Vec<f64> = (0..runs.max(1))
        .map(|_| {
            let t = Instant::now();
            for s in &tb.sentences {
                system(s);
            }
            t.elapsed().as_secs_f64()
        })
        .collect();
    let median_seconds = median(&mut times).max(1e-9);
    let tokens = tb.token_count();
    Throughput {
        tokens,
        median_seconds,
        tokens_per_second: tokens as f64 / median_seconds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::{Token, Upos};

    fn sent(forms: &[&str]) -> Sentence {
        Sentence::new(forms.iter().enumerate().map(|(i, f)| Token::new(i + 1, *f)).collect())
    }

    #[test]
    fn identical_tokenization_is_perfect() {
        let s = sent(&["hi", "!"]);
        let r = token_span_f1(&s, &s, "hi!").unwrap();
        assert_eq!(r.f1, Some(100.0));
    }

    #[test]
    fn five_gold_four_pred_three_matches() {
        let gold = sent(&["a", "b", "c", "d", "e"]);
        let pred = sent(&["a", "b", "c", "de"]);
        let r = token_span_f1(&gold, &pred, "a b c de").unwrap();
        assert_eq!(format!("{:.1}", r.precision.unwrap()), "75.0");
        assert_eq!(format!("{:.1}", r.recall.unwrap()), "60.0");
        assert_eq!(format!("{:.1}", r.f1.unwrap()), "66.7");
    }

    #[test]
    fn attachment_example() {
        let gold = Sentence::new(vec![
            Token::new(1, "a").with_head(2, "det"),
            Token::new(2, "b").with_head(0, "root"),
            Token::new(3, "c").with_head(2, "obj"),
            Token::new(4, "d").with_head(2, "punct"),
        ]);
        let pred = Sentence::new(vec![
            Token::new(1, "a").with_head(2, "det"),
            Token::new(2, "b").with_head(0, "root"),
            Token::new(3, "c").with_head(2, "nsubj"),
            Token::new(4, "d").with_head(3, "punct"),
        ]);
        let r = attachment_scores(&Treebank::new(vec![gold]), &Treebank::new(vec![pred])).unwrap();
        assert_eq!(r.uas, Some(75.0));
        assert_eq!(r.las, Some(50.0));
    }

    #[test]
    fn gold_token_tagging_accuracy() {
        let g = Sentence::new(vec![Token::new(1, "hi").with_upos(Upos::Intj)]);
        let r = tagging_scores(&g, &g, None).unwrap();
        assert_eq!(r.accuracy, Some(100.0));
        assert!(tagging_scores(&g, &sent(&["a", "b"]), None).is_err());
    }

    #[test]
    fn pairing_by_sent_id_ignores_order() {
        let mut a = sent(&["x"]);
        a.set_meta("sent_id", "a");
        let mut b = sent(&["y"]);
        b.set_meta("sent_id", "b");
        let g = Treebank::new(vec![a.clone(), b.clone()]);
        let p = Treebank::new(vec![b, a]);
        let pairs = pair_sentences(&g, &p).unwrap();
        assert!(pairs.iter().all(|(x, y)| x.sent_id() == y.sent_id()));
    }

    #[test]
    fn report_formats() {
        let r = EvalReport {
            uas: Some(80.24),
            las: Some(75.66),
            tokens: 10,
            ..EvalReport::new("las")
        };
        assert_eq!(r.to_key_values(), "metric=las\nuas=80.2\nlas=75.7\ntokens=10\n");
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v, serde_json::json!({"metric": "las", "uas": 80.2, "las": 75.7, "tokens": 10}));
        assert!(r.to_string().contains("uas"));
    }

    #[test]
    fn zero_over_zero_f1_is_zero() {
        assert_eq!(f1_percent(0, 0, 0), 0.0);
        assert_eq!(Counts::default().precision(), 0.0);
    }
}
