//! Character-level bi-LSTM tokenizer.
//!
//! Every character gets one of three tags: `B` where a token begins, `I`
//! inside a token, and `S` on whitespace. Whitespace tags are assigned
//! deterministically; the network only decides between `B` and `I`.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{sentence_spans, AlignError, Span};
use crate::conllu::{MultiwordRange, Sentence, Token};
use crate::eval::span_counts;
use crate::runtime::{
    io, optimize_step, softmax_cross_entropy, BiLstm, Embedding, Gradients, Linear, NodeId,
    ParamStore, RuntimeError, SgdConfig, SgdState, Tape, Vocab,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CharTag {
    /// A token begins here (`1`).
    B,
    /// Continuation (`0`).
    I,
    /// Whitespace (`$`).
    S,
}

impl CharTag {
    pub fn symbol(self) -> char {
        match self {
            CharTag::B => '1',
            CharTag::I => '0',
            CharTag::S => '$',
        }
    }
}

impl fmt::Display for CharTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CharTag::B => "B",
            CharTag::I => "I",
            CharTag::S => "S",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("alignment failure: {0}")]
    Alignment(#[from] AlignError),
    #[error("invalid tag sequence: {0}")]
    InvalidTags(String),
    #[error("no usable training pairs")]
    EmptyCorpus,
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Gold tags for `raw` from the tokens of `s`. Sub-word starts inside
/// multiword ranges are tagged `B` too.
pub fn derive_char_labels(raw: &str, s: &Sentence) -> Result<Vec<CharTag>, AlignError> {
    let spans = sentence_spans(raw, s)?;
    let mut tags: Vec<CharTag> = raw
        .chars()
        .map(|c| if c.is_whitespace() { CharTag::S } else { CharTag::I })
        .collect();
    for sp in spans {
        tags[sp.start] = CharTag::B;
    }
    Ok(tags)
}

/// A decoded token with its character span in the raw text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawToken {
    pub text: String,
    pub span: Span,
}

/// Splits `raw` at every `B` tag and at whitespace. Tokens never contain
/// whitespace, so a non-space character right after whitespace always
/// starts a token.
pub fn decode_tokens(raw: &str, tags: &[CharTag]) -> Result<Vec<RawToken>, TokenizerError> {
    let chars: Vec<char> = raw.chars().collect();
    if chars.len() != tags.len() {
        return Err(TokenizerError::InvalidTags(format!(
            "{} tags for {} characters",
            tags.len(),
            chars.len()
        )));
    }
    let mut out: Vec<RawToken> = Vec::new();
    let mut current: Option<usize> = None;
    for (i, (&c, &t)) in chars.iter().zip(tags).enumerate() {
        if c.is_whitespace() != (t == CharTag::S) {
            return Err(TokenizerError::InvalidTags(format!(
                "character {i} {c:?} tagged {t}"
            )));
        }
        match t {
            CharTag::S => {
                if let Some(start) = current.take() {
                    out.push(raw_token(&chars, start, i));
                }
            }
            CharTag::B => {
                if let Some(start) = current.replace(i) {
                    out.push(raw_token(&chars, start, i));
                }
            }
            CharTag::I => {
                current.get_or_insert(i);
            }
        }
    }
    if let Some(start) = current {
        out.push(raw_token(&chars, start, chars.len()));
    }
    Ok(out)
}

fn raw_token(chars: &[char], start: usize, end: usize) -> RawToken {
    RawToken {
        text: chars[start..end].iter().collect(),
        span: Span::new(start, end),
    }
}

/// Builds a CoNLL-U sentence from decoded tokens: only ID and FORM are set,
/// and every whitespace chunk holding several tokens becomes a multiword
/// range.
pub fn tokens_to_sentence(raw: &str, tokens: &[RawToken], sent_id: &str) -> Sentence {
    let chars: Vec<char> = raw.chars().collect();
    let mut s = Sentence::new(
        tokens
            .iter()
            .enumerate()
            .map(|(i, t)| Token::new(i + 1, t.text.clone()))
            .collect(),
    );
    let mut i = 0;
    while i < tokens.len() {
        let mut j = i;
        while j + 1 < tokens.len() && tokens[j].span.end == tokens[j + 1].span.start {
            j += 1;
        }
        if j > i {
            let surface: String = chars[tokens[i].span.start..tokens[j].span.end].iter().collect();
            s.ranges.push(MultiwordRange::new(i + 1, j + 1, surface));
        }
        i = j + 1;
    }
    s.set_meta("sent_id", sent_id);
    s.set_meta("text", raw);
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub char_dim: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub dropout: f64,
    pub min_char_count: usize,
    pub sgd: SgdConfig,
    pub seed: u64,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            char_dim: 32,
            hidden: 64,
            epochs: 20,
            dropout: 0.0,
            min_char_count: 2,
            sgd: SgdConfig::default(),
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TokenizerMeta {
    char_dim: usize,
    hidden: usize,
    dropout: f64,
    chars: Vocab,
}

/// Per-epoch statistics shared by all trainers.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    /// Model-selection score (F1, accuracy or LAS, in percent).
    pub score: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_score: f64,
    pub skipped: usize,
}

#[derive(Clone, Debug)]
pub struct TokenizerModel {
    meta: TokenizerMeta,
    params: ParamStore,
    embed: Embedding,
    encoder: BiLstm,
    classifier: Linear,
}

const B_CLASS: usize = 1;
const I_CLASS: usize = 0;

impl TokenizerModel {
    pub fn new(chars: Vocab, config: &TokenizerConfig) -> Result<TokenizerModel, RuntimeError> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let embed = Embedding::new(&mut params, "tok.chars", chars.len(), config.char_dim, &mut rng)?;
        let encoder = BiLstm::new(&mut params, "tok.bilstm", config.char_dim, config.hidden, &mut rng)?;
        let classifier = Linear::new(&mut params, "tok.out", 2 * config.hidden, 2, &mut rng)?;
        Ok(TokenizerModel {
            meta: TokenizerMeta {
                char_dim: config.char_dim,
                hidden: config.hidden,
                dropout: config.dropout,
                chars,
            },
            params,
            embed,
            encoder,
            classifier,
        })
    }

    fn bind(meta: TokenizerMeta, params: ParamStore) -> Result<TokenizerModel, RuntimeError> {
        Ok(TokenizerModel {
            embed: Embedding::bind(&params, "tok.chars")?,
            encoder: BiLstm::bind(&params, "tok.bilstm")?,
            classifier: Linear::bind(&params, "tok.out")?,
            meta,
            params,
        })
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn char_vocab(&self) -> &Vocab {
        &self.meta.chars
    }

    /// Logit nodes (`[I, B]`) for every character.
    pub fn forward(
        &self,
        tape: &mut Tape,
        chars: &[char],
        dropout: f64,
    ) -> Result<Vec<NodeId>, RuntimeError> {
        let mut buf = [0u8; 4];
        let xs = chars
            .iter()
            .map(|c| {
                let x = self.embed.lookup(tape, self.meta.chars.get(c.encode_utf8(&mut buf)))?;
                Ok(tape.dropout(x, dropout))
            })
            .collect::<Result<Vec<_>, RuntimeError>>()?;
        let hs = self.encoder.run(tape, &xs)?;
        hs.into_iter()
            .map(|h| {
                let h = tape.dropout(h, dropout);
                self.classifier.apply(tape, h)
            })
            .collect()
    }

    /// Per-character cross-entropy over non-whitespace positions, and its
    /// gradient.
    pub fn loss(
        &self,
        params: &ParamStore,
        raw: &str,
        gold: &[CharTag],
        rng: Option<ChaCha8Rng>,
    ) -> Result<(f64, Gradients), RuntimeError> {
        let chars: Vec<char> = raw.chars().collect();
        let (mut tape, dropout) = match rng {
            Some(r) => (Tape::training(params, r), self.meta.dropout),
            None => (Tape::new(params), 0.0),
        };
        let logits = self.forward(&mut tape, &chars, dropout)?;
        let mut total = 0.0;
        let mut seeds = Vec::new();
        for (node, tag) in logits.iter().zip(gold) {
            let class = match tag {
                CharTag::S => continue,
                CharTag::B => B_CLASS,
                CharTag::I => I_CLASS,
            };
            let (l, g) = softmax_cross_entropy(tape.value(*node), class);
            total += l;
            seeds.push((*node, g));
        }
        let grads = tape.backward(&seeds)?;
        Ok((total, grads))
    }

    /// Tags every character: whitespace is `S`, the first non-whitespace
    /// character is `B`, the rest follow the classifier's argmax.
    pub fn tag_characters(&self, raw: &str) -> Result<Vec<CharTag>, RuntimeError> {
        let chars: Vec<char> = raw.chars().collect();
        let mut tags: Vec<CharTag> = chars
            .iter()
            .map(|c| if c.is_whitespace() { CharTag::S } else { CharTag::I })
            .collect();
        let Some(first) = tags.iter().position(|t| *t != CharTag::S) else {
            return Ok(tags);
        };
        let mut tape = Tape::new(&self.params);
        let logits = self.forward(&mut tape, &chars, 0.0)?;
        for (i, node) in logits.iter().enumerate() {
            if tags[i] == CharTag::S {
                continue;
            }
            let v = tape.value(*node);
            if v[B_CLASS] > v[I_CLASS] {
                tags[i] = CharTag::B;
            }
        }
        tags[first] = CharTag::B;
        Ok(tags)
    }

    pub fn tokenize(&self, raw: &str) -> Result<Vec<RawToken>, TokenizerError> {
        let tags = self.tag_characters(raw)?;
        decode_tokens(raw, &tags)
    }

    /// Tokenizes one tweet into a CoNLL-U sentence.
    pub fn tokenize_sentence(&self, raw: &str, sent_id: &str) -> Result<Sentence, TokenizerError> {
        let toks = self.tokenize(raw)?;
        Ok(tokens_to_sentence(raw, &toks, sent_id))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, RuntimeError> {
        let meta = serde_json::to_value(&self.meta).map_err(|e| RuntimeError::Format(e.to_string()))?;
        io::model_to_bytes("tokenizer", &meta, &self.params)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<TokenizerModel, RuntimeError> {
        let (meta, params) = io::read_model(bytes, "tokenizer")?;
        let meta: TokenizerMeta =
            serde_json::from_value(meta).map_err(|e| RuntimeError::Format(e.to_string()))?;
        TokenizerModel::bind(meta, params)
    }

    pub fn save(&self, path: &Path) -> Result<(), TokenizerError> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TokenizerModel, TokenizerError> {
        Ok(TokenizerModel::from_bytes(&std::fs::read(path)?)?)
    }
}

/// Token-level F1 (percent) of the model on `(raw, gold tags)` pairs.
fn token_f1(model: &TokenizerModel, data: &[(String, Vec<CharTag>)]) -> Result<f64, TokenizerError> {
    let (mut correct, mut gold_n, mut pred_n) = (0, 0, 0);
    for (raw, gold) in data {
        let pred = model.tag_characters(raw)?;
        let g: Vec<Span> = decode_tokens(raw, gold)?.into_iter().map(|t| t.span).collect();
        let p: Vec<Span> = decode_tokens(raw, &pred)?.into_iter().map(|t| t.span).collect();
        let c = span_counts(&g, &p);
        correct += c.correct;
        gold_n += c.gold;
        pred_n += c.predicted;
    }
    Ok(crate::eval::f1_percent(correct, gold_n, pred_n))
}

fn labelled(corpus: &[(String, Sentence)]) -> (Vec<(String, Vec<CharTag>)>, usize) {
    let mut out = Vec::with_capacity(corpus.len());
    let mut skipped = 0;
    for (raw, s) in corpus {
        match derive_char_labels(raw, s) {
            Ok(tags) => out.push((raw.clone(), tags)),
            Err(e) => {
                skipped += 1;
                warn!("skipping tokenizer pair: {e}");
            }
        }
    }
    (out, skipped)
}

/// Trains on `(raw text, gold sentence)` pairs, selecting the epoch with
/// the best token F1 on `dev` (or on the training data when `dev` is
/// absent).
pub fn train_tokenizer(
    corpus: &[(String, Sentence)],
    dev: Option<&[(String, Sentence)]>,
    config: &TokenizerConfig,
) -> Result<(TokenizerModel, TrainReport), TokenizerError> {
    let (train, skipped) = labelled(corpus);
    if train.is_empty() {
        return Err(TokenizerError::EmptyCorpus);
    }
    if skipped > 0 {
        info!("tokenizer: skipped {skipped} unalignable pairs");
    }
    let dev = dev.map(|d| labelled(d).0);

    let mut counts: HashMap<String, usize> = HashMap::new();
    for (raw, _) in &train {
        for c in raw.chars() {
            *counts.entry(c.to_string()).or_default() += 1;
        }
    }
    let chars = Vocab::from_counts(&counts, config.min_char_count);
    let mut model = TokenizerModel::new(chars, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x746f6b);
    let mut state = SgdState::default();
    let mut report = TrainReport {
        skipped,
        best_score: f64::NEG_INFINITY,
        ..TrainReport::default()
    };
    let mut best = model.params.clone();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for &i in &order {
            let (raw, gold) = &train[i];
            let drop_rng = ChaCha8Rng::seed_from_u64(rand::Rng::gen(&mut rng));
            let (loss, grads) = model.loss(&model.params, raw, gold, Some(drop_rng))?;
            epoch_loss += loss;
            optimize_step(&mut model.params, &grads, &mut state, &config.sgd)?;
        }
        state.next_epoch();
        let score = token_f1(&model, dev.as_deref().unwrap_or(&train))?;
        info!("tokenizer epoch {epoch}: loss {epoch_loss:.4} token F1 {score:.2}");
        report.epochs.push(EpochStats {
            epoch,
            loss: epoch_loss,
            score,
        });
        if score > report.best_score {
            report.best_score = score;
            report.best_epoch = epoch;
            best = model.params.clone();
        }
    }
    model.params = best;
    // Rebind after swapping parameter stores (ids are stable by construction).
    let model = TokenizerModel::bind(model.meta, model.params)?;
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentence(forms: &[&str]) -> Sentence {
        Sentence::new(forms.iter().enumerate().map(|(i, f)| Token::new(i + 1, *f)).collect())
    }

    fn tags(s: &str) -> Vec<CharTag> {
        s.split_whitespace()
            .map(|t| match t {
                "B" => CharTag::B,
                "I" => CharTag::I,
                _ => CharTag::S,
            })
            .collect()
    }

    #[test]
    fn contraction_labels() {
        let mut s = sentence(&["it", "s", "gon", "na", "be"]);
        s.ranges.push(MultiwordRange::new(1, 2, "its"));
        s.ranges.push(MultiwordRange::new(3, 4, "gonna"));
        let got = derive_char_labels("its gonna be", &s).unwrap();
        assert_eq!(got, tags("B I B S B I I B I S B I"));
        // Without range lines the forms align directly.
        let plain = sentence(&["it", "s", "gon", "na", "be"]);
        assert_eq!(derive_char_labels("its gonna be", &plain).unwrap(), got);
    }

    #[test]
    fn simple_labels_and_failure() {
        assert_eq!(
            derive_char_labels("hi", &sentence(&["hi"])).unwrap(),
            tags("B I")
        );
        match derive_char_labels("a b", &sentence(&["a", "c"])) {
            Err(AlignError::Unmatched { token, .. }) => assert_eq!(token, "c"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn decode_examples() {
        let toks = decode_tokens("hi!", &tags("B I B")).unwrap();
        assert_eq!(toks.iter().map(|t| t.text.as_str()).collect::<Vec<_>>(), ["hi", "!"]);
        let toks = decode_tokens("its gonna be", &tags("B I B S B I I B I S B I")).unwrap();
        assert_eq!(
            toks.iter().map(|t| t.text.as_str()).collect::<Vec<_>>(),
            ["it", "s", "gon", "na", "be"]
        );
        let toks = decode_tokens("a b", &tags("B S B")).unwrap();
        assert_eq!(toks[0].span, Span::new(0, 1));
        assert_eq!(toks[1].span, Span::new(2, 3));
    }

    #[test]
    fn decode_rejects_bad_tags() {
        assert!(decode_tokens("ab", &tags("B")).is_err());
        assert!(decode_tokens("a b", &tags("B I B")).is_err());
        assert!(decode_tokens("ab", &tags("B S")).is_err());
    }

    #[test]
    fn forced_tags_without_training() {
        let model = TokenizerModel::new(Vocab::default(), &TokenizerConfig::default()).unwrap();
        assert_eq!(model.tag_characters("   ").unwrap(), vec![CharTag::S; 3]);
        assert_eq!(model.tag_characters("x").unwrap(), vec![CharTag::B]);
        let t = model.tag_characters(" x").unwrap();
        assert_eq!(t, vec![CharTag::S, CharTag::B]);
    }

    #[test]
    fn chunk_ranges_in_output() {
        let toks = decode_tokens("its gonna be", &tags("B I B S B I I B I S B I")).unwrap();
        let s = tokens_to_sentence("its gonna be", &toks, "t1");
        assert_eq!(s.ranges.len(), 2);
        assert_eq!(s.ranges[0].surface_form, "its");
        assert_eq!(s.ranges[1].surface_form, "gonna");
        assert!(crate::conllu::validate_sentence(&s).is_empty());
        assert_eq!(s.text(), Some("its gonna be"));
    }

    #[test]
    fn memorizes_one_pair() {
        let mut s = sentence(&["it", "s", "gon", "na", "be", "fun", "!"]);
        s.ranges.push(MultiwordRange::new(1, 2, "its"));
        s.ranges.push(MultiwordRange::new(3, 4, "gonna"));
        s.ranges.push(MultiwordRange::new(6, 7, "fun!"));
        let raw = "its gonna be fun!".to_string();
        let cfg = TokenizerConfig {
            epochs: 50,
            min_char_count: 1,
            hidden: 16,
            char_dim: 8,
            sgd: SgdConfig {
                learning_rate: 1.0,
                ..SgdConfig::default()
            },
            ..TokenizerConfig::default()
        };
        let (model, report) = train_tokenizer(&[(raw.clone(), s)], None, &cfg).unwrap();
        assert_eq!(report.best_score, 100.0);
        let forms: Vec<String> = model.tokenize(&raw).unwrap().into_iter().map(|t| t.text).collect();
        assert_eq!(forms, ["it", "s", "gon", "na", "be", "fun", "!"]);
    }

    #[test]
    fn gradient_check() {
        for seed in 0..3 {
            let cfg = TokenizerConfig {
                hidden: 6,
                char_dim: 5,
                seed,
                ..TokenizerConfig::default()
            };
            let mut model = TokenizerModel::new(Vocab::from_items(["a", "b", "c", " "]), &cfg).unwrap();
            let raw = "ab cab!ca";
            let gold = tags("B I S B B I I B I");
            let mut params = model.params.clone();
            let err = crate::runtime::finite_diff_check(
                &mut params,
                |p| model.loss(p, raw, &gold, None),
                1e-4,
                150,
                seed,
            )
            .unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
            model.params = params;
        }
    }

    #[test]
    fn serialization_round_trip() {
        let model = TokenizerModel::new(Vocab::from_items(["a", "b"]), &TokenizerConfig::default()).unwrap();
        let bytes = model.to_bytes().unwrap();
        let back = TokenizerModel::from_bytes(&bytes).unwrap();
        assert_eq!(back.char_vocab(), model.char_vocab());
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }
}
