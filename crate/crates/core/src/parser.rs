//! Greedy arc-standard parser with a bi-LSTM feature scorer.
//!
//! The sentence is encoded once; a state is scored from the contextual
//! vectors of the top three stack items and first two buffer items plus an
//! embedding of the last two actions, through a tanh hidden layer.
//! Probabilities are a softmax over the whole action inventory renormalized
//! over the valid actions.

use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conllu::{Sentence, Treebank};
use crate::encoder::{EncoderDims, EncoderMeta, EncoderVocab, TokenEncoder};
use crate::eval::attachment_counts;
use crate::runtime::{
    io, masked_log_softmax, optimize_step, Embedding, Gradients, Linear, NodeId, ParamId, ParamStore,
    RuntimeError, SgdConfig, SgdState, Tape, Tensor, WordVectors,
};
use crate::tokenizer::{EpochStats, TrainReport};
use crate::transition::{extract_tree, oracle_sequence, Action, ActionInventory, ParserState, TransitionError};
use crate::util::par_map;

#[derive(Debug, Error)]
pub enum ParserError {
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("no projective training sentences")]
    NoProjectiveSentences,
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Probabilities over the full action inventory; zero outside `support`.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionDistribution {
    probs: Vec<f64>,
    support: Vec<usize>,
}

impl ActionDistribution {
    /// Masked softmax of `logits` over `support` (inventory indices).
    pub fn from_logits(logits: &[f64], support: Vec<usize>) -> ActionDistribution {
        let lp = masked_log_softmax(logits, &support);
        ActionDistribution {
            probs: lp.into_iter().map(f64::exp).collect(),
            support,
        }
    }

    /// Builds a distribution from explicit probabilities, renormalizing over
    /// `support` and zeroing everything else.
    pub fn from_probs(probs: &[f64], support: Vec<usize>) -> ActionDistribution {
        let total: f64 = support.iter().map(|&i| probs[i]).sum();
        let mut out = vec![0.0; probs.len()];
        for &i in &support {
            out[i] = if total > 0.0 { probs[i] / total } else { 1.0 / support.len() as f64 };
        }
        ActionDistribution { probs: out, support }
    }

    /// Takes `probs` as given; the caller guarantees they are a
    /// distribution over `support`.
    pub(crate) fn from_normalized(probs: Vec<f64>, support: Vec<usize>) -> ActionDistribution {
        ActionDistribution { probs, support }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, index: usize) -> f64 {
        self.probs.get(index).copied().unwrap_or(0.0)
    }

    /// Valid action indices in increasing order.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn sum(&self) -> f64 {
        self.support.iter().map(|&i| self.probs[i]).sum()
    }

    /// Most probable valid action, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = self.support[0];
        for &i in &self.support[1..] {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Draws an action index proportionally to the probabilities.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let mut u: f64 = rng.gen::<f64>() * self.sum();
        for &i in &self.support {
            u -= self.probs[i];
            if u < 0.0 {
                return i;
            }
        }
        // Rounding left a sliver of mass: fall back to the last action with
        // nonzero probability.
        *self
            .support
            .iter()
            .rev()
            .find(|&&i| self.probs[i] > 0.0)
            .unwrap_or(&self.support[0])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParserConfig {
    pub word_dim: usize,
    pub char_dim: usize,
    pub char_hidden: usize,
    pub upos_dim: usize,
    pub hidden: usize,
    pub mlp_hidden: usize,
    pub action_dim: usize,
    pub min_word_count: usize,
    pub min_char_count: usize,
    pub epochs: usize,
    pub dropout: f64,
    pub sgd: SgdConfig,
    pub seed: u64,
}

impl Default for ParserConfig {
    fn default() -> Self {
        ParserConfig {
            word_dim: 32,
            char_dim: 16,
            char_hidden: 16,
            upos_dim: 12,
            hidden: 48,
            mlp_hidden: 100,
            action_dim: 12,
            min_word_count: 2,
            min_char_count: 2,
            epochs: 15,
            dropout: 0.0,
            sgd: SgdConfig::default(),
            seed: 1,
        }
    }
}

/// Stack and buffer positions fed to the scorer.
const STACK_FEATURES: usize = 3;
const BUFFER_FEATURES: usize = 2;
const HISTORY_FEATURES: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ParserMeta {
    encoder: EncoderMeta,
    inventory: ActionInventory,
    mlp_hidden: usize,
    action_dim: usize,
    dropout: f64,
}

#[derive(Clone, Debug)]
pub struct ParserModel {
    meta: ParserMeta,
    params: ParamStore,
    encoder: TokenEncoder,
    root: ParamId,
    pad: ParamId,
    actions: Embedding,
    hidden: Linear,
    output: Linear,
}

impl ParserModel {
    pub fn new(
        vocab: EncoderVocab,
        inventory: ActionInventory,
        config: &ParserConfig,
    ) -> Result<ParserModel, RuntimeError> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let meta = ParserMeta {
            encoder: EncoderMeta {
                dims: EncoderDims {
                    word_dim: config.word_dim,
                    char_dim: config.char_dim,
                    char_hidden: config.char_hidden,
                    upos_dim: config.upos_dim,
                    hidden: config.hidden,
                },
                vocab,
            },
            inventory,
            mlp_hidden: config.mlp_hidden,
            action_dim: config.action_dim,
            dropout: config.dropout,
        };
        let encoder = TokenEncoder::new(&mut params, "parse", meta.encoder.clone(), &mut rng)?;
        let d = encoder.out_dim();
        let root = params.add("parse.root", Tensor::uniform(d, 1, 0.1, &mut rng))?;
        let pad = params.add("parse.pad", Tensor::uniform(d, 1, 0.1, &mut rng))?;
        let n_actions = meta.inventory.len();
        let actions = Embedding::new(&mut params, "parse.actions", n_actions + 1, config.action_dim, &mut rng)?;
        let input = (STACK_FEATURES + BUFFER_FEATURES) * d + HISTORY_FEATURES * config.action_dim;
        let hidden = Linear::new(&mut params, "parse.hidden", input, config.mlp_hidden, &mut rng)?;
        let output = Linear::new(&mut params, "parse.out", config.mlp_hidden, n_actions, &mut rng)?;
        Ok(ParserModel {
            meta,
            params,
            encoder,
            root,
            pad,
            actions,
            hidden,
            output,
        })
    }

    fn bind(meta: ParserMeta, params: ParamStore) -> Result<ParserModel, RuntimeError> {
        let missing = |n: &str| RuntimeError::MissingParam(n.to_owned());
        Ok(ParserModel {
            encoder: TokenEncoder::bind(&params, "parse", meta.encoder.clone())?,
            root: params.id("parse.root").ok_or_else(|| missing("parse.root"))?,
            pad: params.id("parse.pad").ok_or_else(|| missing("parse.pad"))?,
            actions: Embedding::bind(&params, "parse.actions")?,
            hidden: Linear::bind(&params, "parse.hidden")?,
            output: Linear::bind(&params, "parse.out")?,
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

    pub fn inventory(&self) -> &ActionInventory {
        &self.meta.inventory
    }

    pub fn vocab(&self) -> &EncoderVocab {
        &self.meta.encoder.vocab
    }

    pub fn load_pretrained(&mut self, vectors: &WordVectors) -> Result<usize, RuntimeError> {
        self.encoder.load_pretrained(&mut self.params, vectors)
    }

    /// Scoring session over this model's own parameters.
    pub fn session<'a>(&'a self, s: &Sentence) -> Result<ParserSession<'a>, RuntimeError> {
        ParserSession::new(self, &self.params, s, None)
    }

    /// Scoring session over `params` (which must share this model's layout);
    /// with an RNG, dropout is active and tape nodes are kept for backward.
    pub fn session_with<'a>(
        &'a self,
        params: &'a ParamStore,
        s: &Sentence,
        rng: Option<ChaCha8Rng>,
    ) -> Result<ParserSession<'a>, RuntimeError> {
        ParserSession::new(self, params, s, rng)
    }

    /// Distribution over valid actions in `st`. Encodes `s` from scratch;
    /// use a [`ParserSession`] to score many states of one sentence.
    pub fn score_state(&self, st: &ParserState, s: &Sentence) -> Result<ActionDistribution, ParserError> {
        self.session(s)?.distribution(st)
    }

    /// Greedy decoding; also returns the distribution used at each step.
    pub fn greedy_parse_traced(&self, s: &Sentence) -> Result<(Sentence, Vec<ActionDistribution>), ParserError> {
        if s.is_empty() {
            return Ok((s.clone(), Vec::new()));
        }
        let inv = &self.meta.inventory;
        let mut session = self.session(s)?;
        let mut st = ParserState::initial(s.len())?;
        let mut trace = Vec::with_capacity(2 * s.len());
        while !st.is_terminal() {
            let dist = session.distribution(&st)?;
            st.apply(inv.action(dist.argmax()), inv)?;
            trace.push(dist);
        }
        Ok((extract_tree(&st, s, inv)?, trace))
    }

    pub fn greedy_parse(&self, s: &Sentence) -> Result<Sentence, ParserError> {
        Ok(self.greedy_parse_traced(s)?.0)
    }

    pub fn parse_treebank(&self, tb: &Treebank, jobs: usize) -> Result<Treebank, ParserError> {
        let sentences = par_map(&tb.sentences, jobs, |s| self.greedy_parse(s))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Treebank {
            sentences,
            split: tb.split,
        })
    }

    /// Log loss of the oracle `actions` for `s` and its gradient.
    pub fn oracle_loss(
        &self,
        params: &ParamStore,
        s: &Sentence,
        actions: &[Action],
        rng: Option<ChaCha8Rng>,
    ) -> Result<(f64, Gradients), ParserError> {
        let inv = &self.meta.inventory;
        let mut session = self.session_with(params, s, rng)?;
        session.keep_nodes(true);
        let mut st = ParserState::initial(s.len())?;
        let mut loss = 0.0;
        let mut seeds = Vec::with_capacity(actions.len());
        for &a in actions {
            let (node, q) = session.score(&st)?;
            let gold = inv.index_of(a);
            loss -= q.prob(gold).max(1e-300).ln();
            let mut grad = q.probs.clone();
            grad[gold] -= 1.0;
            seeds.push((node, grad));
            st.apply(a, inv)?;
        }
        Ok((loss, session.backward(&seeds)?))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, RuntimeError> {
        let meta = serde_json::to_value(&self.meta).map_err(|e| RuntimeError::Format(e.to_string()))?;
        io::model_to_bytes("parser", &meta, &self.params)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ParserModel, RuntimeError> {
        let (meta, params) = io::read_model(bytes, "parser")?;
        let meta: ParserMeta = serde_json::from_value(meta).map_err(|e| RuntimeError::Format(e.to_string()))?;
        ParserModel::bind(meta, params)
    }

    pub fn save(&self, path: &Path) -> Result<(), ParserError> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ParserModel, ParserError> {
        Ok(ParserModel::from_bytes(&std::fs::read(path)?)?)
    }

    /// True when both models predict over the same actions from the same
    /// vocabularies.
    pub fn compatible_with(&self, other: &ParserModel) -> bool {
        self.meta.inventory == other.meta.inventory && self.meta.encoder.vocab == other.meta.encoder.vocab
    }
}

/// A sentence encoded once, ready to score any number of its states.
pub struct ParserSession<'a> {
    model: &'a ParserModel,
    tape: Tape<'a>,
    /// Node of each position; index 0 is the artificial root.
    tokens: Vec<NodeId>,
    pad: NodeId,
    base_len: usize,
    keep: bool,
    dropout: f64,
}

impl<'a> ParserSession<'a> {
    fn new(
        model: &'a ParserModel,
        params: &'a ParamStore,
        s: &Sentence,
        rng: Option<ChaCha8Rng>,
    ) -> Result<ParserSession<'a>, RuntimeError> {
        let training = rng.is_some();
        let dropout = if training { model.meta.dropout } else { 0.0 };
        let mut tape = match rng {
            Some(r) => Tape::training(params, r),
            None => Tape::new(params),
        };
        let root = tape.param(model.root);
        let pad = tape.param(model.pad);
        let mut tokens = vec![root];
        tokens.extend(model.encoder.encode(&mut tape, s, dropout)?);
        let base_len = tape.len();
        Ok(ParserSession {
            model,
            tape,
            tokens,
            pad,
            base_len,
            keep: training,
            dropout,
        })
    }

    /// Keep per-state nodes on the tape (needed before `backward`).
    pub fn keep_nodes(&mut self, keep: bool) {
        self.keep = keep;
    }

    fn position(&self, id: Option<usize>) -> NodeId {
        id.map_or(self.pad, |i| self.tokens[i])
    }

    /// Records the scorer for `st` and returns its logit node.
    pub fn logits(&mut self, st: &ParserState) -> Result<NodeId, RuntimeError> {
        let m = self.model;
        let mut parts = Vec::with_capacity(STACK_FEATURES + BUFFER_FEATURES + HISTORY_FEATURES);
        for k in 0..STACK_FEATURES {
            parts.push(self.position(st.stack_at(k)));
        }
        for k in 0..BUFFER_FEATURES {
            parts.push(self.position(st.buffer_at(k)));
        }
        let history = st.history();
        let none = m.meta.inventory.len();
        for k in 0..HISTORY_FEATURES {
            let idx = history
                .len()
                .checked_sub(k + 1)
                .map_or(none, |i| m.meta.inventory.index_of(history[i]));
            parts.push(m.actions.lookup(&mut self.tape, idx)?);
        }
        let x = self.tape.concat(&parts);
        let h = m.hidden.apply(&mut self.tape, x)?;
        let h = self.tape.tanh(h);
        let h = self.tape.dropout(h, self.dropout);
        m.output.apply(&mut self.tape, h)
    }

    /// Logit node and distribution for `st`.
    pub fn score(&mut self, st: &ParserState) -> Result<(NodeId, ActionDistribution), ParserError> {
        let support = st.valid_action_indices(&self.model.meta.inventory)?;
        let node = self.logits(st)?;
        let dist = ActionDistribution::from_logits(self.tape.value(node), support);
        Ok((node, dist))
    }

    pub fn distribution(&mut self, st: &ParserState) -> Result<ActionDistribution, ParserError> {
        let (_, dist) = self.score(st)?;
        if !self.keep {
            self.tape.truncate(self.base_len);
        }
        Ok(dist)
    }

    pub fn backward(&self, seeds: &[(NodeId, Vec<f64>)]) -> Result<Gradients, RuntimeError> {
        self.tape.backward(seeds)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SeedSummary {
    pub seeds: Vec<u64>,
    pub las: Vec<f64>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl SeedSummary {
    pub fn from_scores(seeds: Vec<u64>, las: Vec<f64>) -> SeedSummary {
        let n = las.len().max(1) as f64;
        SeedSummary {
            mean: las.iter().sum::<f64>() / n,
            min: las.iter().copied().fold(f64::INFINITY, f64::min),
            max: las.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            seeds,
            las,
        }
    }
}

/// Labelled attachment score (percent) of `model` on `tb`.
pub fn las(model: &ParserModel, tb: &Treebank) -> Result<f64, ParserError> {
    let parsed = model.parse_treebank(tb, 1)?;
    let c = attachment_counts(tb, &parsed).map_err(|e| RuntimeError::Format(e.to_string()))?;
    Ok(c.las())
}

/// Projective sentences of `tb` with their oracle sequences under `inv`,
/// and the number skipped.
pub fn oracle_corpus<'t>(
    tb: &'t Treebank,
    inv: &ActionInventory,
) -> (Vec<(&'t Sentence, Vec<Action>)>, usize) {
    let mut out = Vec::new();
    let mut skipped = 0;
    for s in &tb.sentences {
        match oracle_sequence(s, inv) {
            Ok(actions) => out.push((s, actions)),
            Err(e) => {
                skipped += 1;
                log::debug!("skipping {}: {e}", s.sent_id().unwrap_or("?"));
            }
        }
    }
    if skipped > 0 {
        warn!(
            "{skipped} of {} sentences ({:.1}%) skipped as non-projective or unusable",
            tb.sentences.len(),
            100.0 * skipped as f64 / tb.sentences.len() as f64
        );
    }
    (out, skipped)
}

/// Trains a parser on oracle sequences with log loss, keeping the epoch
/// with the best LAS on `dev` (or on `train` without one).
pub fn train_parser(
    train: &Treebank,
    dev: Option<&Treebank>,
    config: &ParserConfig,
    pretrained: Option<&WordVectors>,
) -> Result<(ParserModel, TrainReport), ParserError> {
    let inventory = ActionInventory::from_treebank(train);
    let (corpus, skipped) = oracle_corpus(train, &inventory);
    if corpus.is_empty() {
        return Err(ParserError::NoProjectiveSentences);
    }
    let vocab = EncoderVocab::build(train, config.min_word_count, config.min_char_count);
    let mut config = config.clone();
    if let Some(v) = pretrained {
        config.word_dim = v.dim;
    }
    let mut model = ParserModel::new(vocab, inventory, &config)?;
    if let Some(v) = pretrained {
        let n = model.load_pretrained(v)?;
        info!("parser: {n} word vectors loaded");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x706172);
    let mut state = SgdState::default();
    let mut report = TrainReport {
        skipped,
        best_score: f64::NEG_INFINITY,
        ..TrainReport::default()
    };
    let mut best = model.params.clone();
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for &i in &order {
            let (s, actions) = &corpus[i];
            let drop = ChaCha8Rng::seed_from_u64(rng.gen());
            let (loss, grads) = model.oracle_loss(&model.params, s, actions, Some(drop))?;
            epoch_loss += loss;
            optimize_step(&mut model.params, &grads, &mut state, &config.sgd)?;
        }
        state.next_epoch();
        let score = las(&model, dev.unwrap_or(train))?;
        info!("parser epoch {epoch}: loss {epoch_loss:.4} LAS {score:.2}");
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

/// Trains one parser per seed (up to `jobs` at a time) and summarizes
/// their best LAS.
pub fn train_parser_seeds(
    train: &Treebank,
    dev: Option<&Treebank>,
    config: &ParserConfig,
    pretrained: Option<&WordVectors>,
    seeds: &[u64],
    jobs: usize,
) -> Result<(Vec<ParserModel>, SeedSummary), ParserError> {
    let results = par_map(seeds, jobs, |&seed| {
        let cfg = ParserConfig {
            seed,
            ..config.clone()
        };
        train_parser(train, dev, &cfg, pretrained)
    });
    let mut models = Vec::with_capacity(seeds.len());
    let mut scores = Vec::with_capacity(seeds.len());
    for r in results {
        let (m, report) = r?;
        models.push(m);
        scores.push(report.best_score);
    }
    Ok((models, SeedSummary::from_scores(seeds.to_vec(), scores)))
}
