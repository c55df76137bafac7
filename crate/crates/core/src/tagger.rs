//! UPOS tagger: contextual token vectors and a 17-way softmax per token,
//! plus k-fold jackknifing.

use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conllu::{Sentence, Treebank, Upos};
use crate::encoder::{EncoderDims, EncoderMeta, EncoderVocab, TokenEncoder};
use crate::runtime::{
    io, log_softmax, optimize_step, softmax_cross_entropy, Gradients, Linear, NodeId, ParamStore,
    RuntimeError, SgdConfig, SgdState, Tape, WordVectors,
};
use crate::tokenizer::{EpochStats, TrainReport};
use crate::util::par_map;

/// MISC key under which jackknifing keeps the gold tag.
pub const GOLD_UPOS_KEY: &str = "GoldUPOS";

#[derive(Debug, Error)]
pub enum TaggerError {
    #[error("empty treebank")]
    EmptyTreebank,
    #[error("sentence {sent}, token {token}: no gold UPOS")]
    MissingUpos { sent: String, token: usize },
    #[error("jackknifing needs at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("{sentences} sentences cannot fill {folds} folds")]
    TooFewSentences { sentences: usize, folds: usize },
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaggerConfig {
    pub word_dim: usize,
    pub char_dim: usize,
    pub char_hidden: usize,
    pub hidden: usize,
    pub min_word_count: usize,
    pub min_char_count: usize,
    pub epochs: usize,
    pub dropout: f64,
    pub sgd: SgdConfig,
    pub seed: u64,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        TaggerConfig {
            word_dim: 32,
            char_dim: 16,
            char_hidden: 16,
            hidden: 48,
            min_word_count: 2,
            min_char_count: 2,
            epochs: 15,
            dropout: 0.0,
            sgd: SgdConfig::default(),
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TaggerMeta {
    encoder: EncoderMeta,
    dropout: f64,
}

#[derive(Clone, Debug)]
pub struct TaggerModel {
    dropout: f64,
    params: ParamStore,
    encoder: TokenEncoder,
    output: Linear,
}

impl TaggerModel {
    pub fn new(vocab: EncoderVocab, config: &TaggerConfig) -> Result<TaggerModel, RuntimeError> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let meta = EncoderMeta {
            dims: EncoderDims {
                word_dim: config.word_dim,
                char_dim: config.char_dim,
                char_hidden: config.char_hidden,
                upos_dim: 0,
                hidden: config.hidden,
            },
            vocab,
        };
        let encoder = TokenEncoder::new(&mut params, "tag", meta, &mut rng)?;
        let output = Linear::new(&mut params, "tag.out", encoder.out_dim(), Upos::ALL.len(), &mut rng)?;
        Ok(TaggerModel {
            dropout: config.dropout,
            params,
            encoder,
            output,
        })
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn vocab(&self) -> &EncoderVocab {
        &self.encoder.meta().vocab
    }

    fn logits(&self, tape: &mut Tape, s: &Sentence, dropout: f64) -> Result<Vec<NodeId>, RuntimeError> {
        let hs = self.encoder.encode(tape, s, dropout)?;
        hs.into_iter().map(|h| self.output.apply(tape, h)).collect()
    }

    /// Summed cross-entropy of the gold tags of `s` and its gradient.
    pub fn loss(
        &self,
        params: &ParamStore,
        s: &Sentence,
        rng: Option<ChaCha8Rng>,
    ) -> Result<(f64, Gradients), RuntimeError> {
        let (mut tape, dropout) = match rng {
            Some(r) => (Tape::training(params, r), self.dropout),
            None => (Tape::new(params), 0.0),
        };
        let logits = self.logits(&mut tape, s, dropout)?;
        let mut total = 0.0;
        let mut seeds = Vec::with_capacity(logits.len());
        for (node, t) in logits.iter().zip(&s.tokens) {
            let Some(gold) = t.upos else { continue };
            let (l, g) = softmax_cross_entropy(tape.value(*node), gold.index());
            total += l;
            seeds.push((*node, g));
        }
        Ok((total, tape.backward(&seeds)?))
    }

    /// Tag distribution for every token, in [`Upos::ALL`] order.
    pub fn tag_probabilities(&self, s: &Sentence) -> Result<Vec<Vec<f64>>, RuntimeError> {
        let mut tape = Tape::new(&self.params);
        let logits = self.logits(&mut tape, s, 0.0)?;
        Ok(logits
            .iter()
            .map(|n| log_softmax(tape.value(*n)).into_iter().map(f64::exp).collect())
            .collect())
    }

    /// Copy of `s` with every UPOS replaced by the argmax tag (lowest index
    /// on ties).
    pub fn tag_tokens(&self, s: &Sentence) -> Result<Sentence, RuntimeError> {
        let mut out = s.clone();
        if s.is_empty() {
            return Ok(out);
        }
        let mut tape = Tape::new(&self.params);
        let logits = self.logits(&mut tape, s, 0.0)?;
        for (t, n) in out.tokens.iter_mut().zip(&logits) {
            let v = tape.value(*n);
            let best = (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b });
            t.upos = Upos::from_index(best);
        }
        Ok(out)
    }

    pub fn tag_treebank(&self, tb: &Treebank, jobs: usize) -> Result<Treebank, RuntimeError> {
        let sentences = par_map(&tb.sentences, jobs, |s| self.tag_tokens(s))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Treebank {
            sentences,
            split: tb.split,
        })
    }

    /// Gold-token accuracy (percent) over `tb`.
    pub fn accuracy(&self, tb: &Treebank) -> Result<f64, RuntimeError> {
        let (mut correct, mut total) = (0usize, 0usize);
        for s in &tb.sentences {
            let tagged = self.tag_tokens(s)?;
            for (g, p) in s.tokens.iter().zip(&tagged.tokens) {
                total += 1;
                correct += usize::from(g.upos.is_some() && g.upos == p.upos);
            }
        }
        Ok(if total == 0 { 0.0 } else { 100.0 * correct as f64 / total as f64 })
    }

    pub fn load_pretrained(&mut self, vectors: &WordVectors) -> Result<usize, RuntimeError> {
        self.encoder.load_pretrained(&mut self.params, vectors)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, RuntimeError> {
        let meta = TaggerMeta {
            encoder: self.encoder.meta().clone(),
            dropout: self.dropout,
        };
        let meta = serde_json::to_value(meta).map_err(|e| RuntimeError::Format(e.to_string()))?;
        io::model_to_bytes("tagger", &meta, &self.params)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<TaggerModel, RuntimeError> {
        let (meta, params) = io::read_model(bytes, "tagger")?;
        let meta: TaggerMeta = serde_json::from_value(meta).map_err(|e| RuntimeError::Format(e.to_string()))?;
        Ok(TaggerModel {
            encoder: TokenEncoder::bind(&params, "tag", meta.encoder)?,
            output: Linear::bind(&params, "tag.out")?,
            dropout: meta.dropout,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), TaggerError> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TaggerModel, TaggerError> {
        Ok(TaggerModel::from_bytes(&std::fs::read(path)?)?)
    }
}

fn check_gold(tb: &Treebank) -> Result<(), TaggerError> {
    if tb.sentences.iter().all(Sentence::is_empty) {
        return Err(TaggerError::EmptyTreebank);
    }
    for (i, s) in tb.sentences.iter().enumerate() {
        if let Some(t) = s.tokens.iter().find(|t| t.upos.is_none()) {
            return Err(TaggerError::MissingUpos {
                sent: s.sent_id().map_or_else(|| format!("#{}", i + 1), str::to_owned),
                token: t.id,
            });
        }
    }
    Ok(())
}

/// Trains on `train`, keeping the epoch with the best accuracy on `dev`
/// (or on `train` without one).
pub fn train_tagger(
    train: &Treebank,
    dev: Option<&Treebank>,
    config: &TaggerConfig,
    pretrained: Option<&WordVectors>,
) -> Result<(TaggerModel, TrainReport), TaggerError> {
    check_gold(train)?;
    let mut config = config.clone();
    if let Some(v) = pretrained {
        config.word_dim = v.dim;
    }
    let vocab = EncoderVocab::build(train, config.min_word_count, config.min_char_count);
    let mut model = TaggerModel::new(vocab, &config)?;
    if let Some(v) = pretrained {
        let n = model.load_pretrained(v)?;
        info!("tagger: {n} word vectors loaded");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x746167);
    let mut state = SgdState::default();
    let mut report = TrainReport {
        best_score: f64::NEG_INFINITY,
        ..TrainReport::default()
    };
    let mut best = model.params.clone();
    let mut order: Vec<usize> = (0..train.sentences.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for &i in &order {
            let s = &train.sentences[i];
            if s.is_empty() {
                continue;
            }
            let drop = ChaCha8Rng::seed_from_u64(rng.gen());
            let (loss, grads) = model.loss(&model.params, s, Some(drop))?;
            epoch_loss += loss;
            optimize_step(&mut model.params, &grads, &mut state, &config.sgd)?;
        }
        state.next_epoch();
        let score = model.accuracy(dev.unwrap_or(train))?;
        info!("tagger epoch {epoch}: loss {epoch_loss:.4} accuracy {score:.2}");
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
    Ok((model, report))
}

/// Fold of sentence `index` under `k`-fold jackknifing.
pub fn fold_of(index: usize, k: usize) -> usize {
    index % k
}

#[derive(Clone, Debug)]
pub struct JackknifeReport {
    pub folds: usize,
    /// Sentence indices tagged by each fold's model.
    pub fold_members: Vec<Vec<usize>>,
    /// Accuracy of each fold model on its held-out fold.
    pub fold_accuracy: Vec<f64>,
}

/// Tags fold `i` (sentences with index ≡ i mod k) with a model trained on
/// the other folds. Gold tags move to MISC as `GoldUPOS=...`. Fold models
/// train on up to `jobs` threads.
pub fn jackknife_tags(
    tb: &Treebank,
    k: usize,
    config: &TaggerConfig,
    jobs: usize,
) -> Result<(Treebank, JackknifeReport), TaggerError> {
    if k < 2 {
        return Err(TaggerError::TooFewFolds(k));
    }
    if tb.sentences.len() < k {
        return Err(TaggerError::TooFewSentences {
            sentences: tb.sentences.len(),
            folds: k,
        });
    }
    check_gold(tb)?;
    let fold_members: Vec<Vec<usize>> = (0..k)
        .map(|f| (0..tb.sentences.len()).filter(|&i| fold_of(i, k) == f).collect())
        .collect();
    let folds: Vec<usize> = (0..k).collect();
    let results = par_map(&folds, jobs, |&f| -> Result<(Vec<Sentence>, f64), TaggerError> {
        let train = Treebank::new(
            (0..tb.sentences.len())
                .filter(|&i| fold_of(i, k) != f)
                .map(|i| tb.sentences[i].clone())
                .collect(),
        );
        let held = Treebank::new(fold_members[f].iter().map(|&i| tb.sentences[i].clone()).collect());
        let fold_config = TaggerConfig {
            seed: config.seed.wrapping_add(f as u64),
            ..config.clone()
        };
        let (model, _) = train_tagger(&train, None, &fold_config, None)?;
        let acc = model.accuracy(&held)?;
        let tagged = held
            .sentences
            .iter()
            .map(|s| model.tag_tokens(s))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((tagged, acc))
    });
    let mut out = tb.clone();
    let mut fold_accuracy = Vec::with_capacity(k);
    for (f, r) in results.into_iter().enumerate() {
        let (tagged, acc) = r?;
        fold_accuracy.push(acc);
        for (&i, t) in fold_members[f].iter().zip(tagged) {
            let s = &mut out.sentences[i];
            for (tok, pred) in s.tokens.iter_mut().zip(&t.tokens) {
                if let Some(g) = tok.upos {
                    tok.push_misc(&format!("{GOLD_UPOS_KEY}={g}"));
                }
                tok.upos = pred.upos;
            }
        }
        info!("jackknife fold {f}: held-out accuracy {acc:.2}");
    }
    Ok((
        out,
        JackknifeReport {
            folds: k,
            fold_members,
            fold_accuracy,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::Token;
    use crate::runtime::{finite_diff_check, Vocab};

    fn small_config() -> TaggerConfig {
        TaggerConfig {
            word_dim: 6,
            char_dim: 4,
            char_hidden: 4,
            hidden: 5,
            min_word_count: 1,
            min_char_count: 1,
            ..TaggerConfig::default()
        }
    }

    fn sentence() -> Sentence {
        Sentence::new(vec![
            Token::new(1, "RT").with_upos(Upos::X),
            Token::new(2, "i").with_upos(Upos::Pron),
            Token::new(3, "love").with_upos(Upos::Verb),
            Token::new(4, "it").with_upos(Upos::Pron),
            Token::new(5, "!").with_upos(Upos::Punct),
        ])
    }

    #[test]
    fn oov_sentence_still_tagged() {
        let vocab = EncoderVocab {
            words: Vocab::default(),
            chars: Vocab::default(),
        };
        let model = TaggerModel::new(vocab, &small_config()).unwrap();
        let tagged = model.tag_tokens(&sentence().strip_tree()).unwrap();
        assert!(tagged.tokens.iter().all(|t| t.upos.is_some()));
        assert_eq!(model.tag_tokens(&sentence()).unwrap(), model.tag_tokens(&sentence()).unwrap());
        for dist in model.tag_probabilities(&sentence()).unwrap() {
            assert_eq!(dist.len(), 17);
            assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn gradient_check() {
        let tb = Treebank::new(vec![sentence()]);
        for seed in 0..3 {
            let cfg = TaggerConfig { seed, ..small_config() };
            let model = TaggerModel::new(EncoderVocab::build(&tb, 1, 1), &cfg).unwrap();
            let mut params = model.params.clone();
            let err = finite_diff_check(&mut params, |p| model.loss(p, &sentence(), None), 1e-4, 150, seed).unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn memorizes_one_sentence() {
        let tb = Treebank::new(vec![sentence()]);
        let cfg = TaggerConfig {
            epochs: 50,
            sgd: SgdConfig {
                learning_rate: 1.0,
                ..SgdConfig::default()
            },
            ..small_config()
        };
        let (model, report) = train_tagger(&tb, None, &cfg, None).unwrap();
        assert_eq!(report.best_score, 100.0);
        assert_eq!(model.tag_tokens(&sentence()).unwrap(), sentence());
    }

    #[test]
    fn serialization_round_trip() {
        let tb = Treebank::new(vec![sentence()]);
        let model = TaggerModel::new(EncoderVocab::build(&tb, 1, 1), &small_config()).unwrap();
        let back = TaggerModel::from_bytes(&model.to_bytes().unwrap()).unwrap();
        assert_eq!(back.to_bytes().unwrap(), model.to_bytes().unwrap());
        assert_eq!(back.vocab(), model.vocab());
    }

    #[test]
    fn jackknife_errors() {
        let tb = Treebank::new(vec![sentence(); 3]);
        assert!(matches!(jackknife_tags(&tb, 1, &small_config(), 1), Err(TaggerError::TooFewFolds(1))));
        assert!(matches!(
            jackknife_tags(&tb, 5, &small_config(), 1),
            Err(TaggerError::TooFewSentences { .. })
        ));
        assert!(matches!(
            train_tagger(&Treebank::default(), None, &small_config(), None),
            Err(TaggerError::EmptyTreebank)
        ));
    }
}
