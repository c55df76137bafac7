//! Contextual token vectors shared by the tagger and the parser.
//!
//! A token is the concatenation of a lowercased word embedding, a
//! character bi-LSTM summary of its form and, optionally, a UPOS
//! embedding; a sentence-level bi-LSTM runs over those.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conllu::{Sentence, Treebank, Upos};
use crate::runtime::{BiLstm, Embedding, NodeId, ParamStore, RuntimeError, Tape, Vocab, WordVectors};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderDims {
    pub word_dim: usize,
    pub char_dim: usize,
    pub char_hidden: usize,
    /// 0 disables UPOS input.
    pub upos_dim: usize,
    pub hidden: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderVocab {
    pub words: Vocab,
    pub chars: Vocab,
}

impl EncoderVocab {
    /// Lowercased words seen at least `min_word` times and characters seen
    /// at least `min_char` times.
    pub fn build(tb: &Treebank, min_word: usize, min_char: usize) -> EncoderVocab {
        let mut words: HashMap<String, usize> = HashMap::new();
        let mut chars: HashMap<String, usize> = HashMap::new();
        for t in tb.sentences.iter().flat_map(|s| &s.tokens) {
            *words.entry(t.form.to_lowercase()).or_default() += 1;
            for c in t.form.chars() {
                *chars.entry(c.to_string()).or_default() += 1;
            }
        }
        EncoderVocab {
            words: Vocab::from_counts(&words, min_word),
            chars: Vocab::from_counts(&chars, min_char),
        }
    }
}

/// Serializable description of an encoder: dimensions and vocabularies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderMeta {
    pub dims: EncoderDims,
    pub vocab: EncoderVocab,
}

#[derive(Clone, Debug)]
pub struct TokenEncoder {
    meta: EncoderMeta,
    words: Embedding,
    chars: Embedding,
    char_lstm: BiLstm,
    upos: Option<Embedding>,
    context: BiLstm,
}

/// Row of the UPOS table used for tokens without a tag.
const NO_UPOS: usize = Upos::ALL.len();

impl TokenEncoder {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        meta: EncoderMeta,
        rng: &mut R,
    ) -> Result<TokenEncoder, RuntimeError> {
        let d = &meta.dims;
        let words = Embedding::new(store, &format!("{prefix}.words"), meta.vocab.words.len(), d.word_dim, rng)?;
        let chars = Embedding::new(store, &format!("{prefix}.chars"), meta.vocab.chars.len(), d.char_dim, rng)?;
        let char_lstm = BiLstm::new(store, &format!("{prefix}.char_lstm"), d.char_dim, d.char_hidden, rng)?;
        let upos = if d.upos_dim > 0 {
            Some(Embedding::new(store, &format!("{prefix}.upos"), NO_UPOS + 1, d.upos_dim, rng)?)
        } else {
            None
        };
        let input = d.word_dim + 2 * d.char_hidden + d.upos_dim;
        let context = BiLstm::new(store, &format!("{prefix}.context"), input, d.hidden, rng)?;
        Ok(TokenEncoder {
            meta,
            words,
            chars,
            char_lstm,
            upos,
            context,
        })
    }

    pub fn bind(store: &ParamStore, prefix: &str, meta: EncoderMeta) -> Result<TokenEncoder, RuntimeError> {
        let upos = if meta.dims.upos_dim > 0 {
            Some(Embedding::bind(store, &format!("{prefix}.upos"))?)
        } else {
            None
        };
        Ok(TokenEncoder {
            words: Embedding::bind(store, &format!("{prefix}.words"))?,
            chars: Embedding::bind(store, &format!("{prefix}.chars"))?,
            char_lstm: BiLstm::bind(store, &format!("{prefix}.char_lstm"))?,
            context: BiLstm::bind(store, &format!("{prefix}.context"))?,
            upos,
            meta,
        })
    }

    pub fn meta(&self) -> &EncoderMeta {
        &self.meta
    }

    pub fn out_dim(&self) -> usize {
        2 * self.meta.dims.hidden
    }

    /// Overwrites word-embedding rows with pretrained vectors; returns the
    /// number of rows set.
    pub fn load_pretrained(&self, store: &mut ParamStore, vectors: &WordVectors) -> Result<usize, RuntimeError> {
        self.words.load_pretrained(store, &self.meta.vocab.words, vectors)
    }

    fn token_input(&self, tape: &mut Tape, form: &str, upos: Option<Upos>, dropout: f64) -> Result<NodeId, RuntimeError> {
        let vocab = &self.meta.vocab;
        let w = self.words.lookup(tape, vocab.words.get(&form.to_lowercase()))?;
        let mut buf = [0u8; 4];
        let cs = form
            .chars()
            .map(|c| self.chars.lookup(tape, vocab.chars.get(c.encode_utf8(&mut buf))))
            .collect::<Result<Vec<_>, _>>()?;
        let c = self.char_lstm.summarize(tape, &cs)?;
        let mut parts = vec![w, c];
        if let Some(table) = &self.upos {
            parts.push(table.lookup(tape, upos.map_or(NO_UPOS, Upos::index))?);
        }
        let x = tape.concat(&parts);
        Ok(tape.dropout(x, dropout))
    }

    /// One contextual vector per token of `s`.
    pub fn encode(&self, tape: &mut Tape, s: &Sentence, dropout: f64) -> Result<Vec<NodeId>, RuntimeError> {
        let xs = s
            .tokens
            .iter()
            .map(|t| self.token_input(tape, &t.form, t.upos, dropout))
            .collect::<Result<Vec<_>, _>>()?;
        let hs = self.context.run(tape, &xs)?;
        Ok(hs.into_iter().map(|h| tape.dropout(h, dropout)).collect())
    }
}
