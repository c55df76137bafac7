//! Ensembles of greedy parsers and their distillation into one parser.
//!
//! An ensemble scores a state by averaging its members' action
//! distributions. A student parser is trained on states from the oracle
//! path or on trajectories sampled from the ensemble, minimizing
//!
//! ```text
//! loss = alpha * sum_a -p(a|s) log q(a|s) + (1 - alpha) * -log q(gold|s)
//! ```
//!
//! where `p` is the ensemble distribution and `q` the student's.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::conllu::{Sentence, Treebank};
use crate::parser::{
    las, oracle_corpus, ActionDistribution, ParserConfig, ParserError, ParserModel, ParserSession,
};
use crate::runtime::{optimize_step, Gradients, ParamStore, RuntimeError, SgdState, WordVectors};
use crate::tokenizer::{EpochStats, TrainReport};
use crate::transition::{extract_tree, ActionInventory, ParserState};
use crate::util::par_map;

/// Floor applied to student probabilities inside the logarithm.
pub const MIN_PROB: f64 = 1e-12;

static CLAMPED: AtomicUsize = AtomicUsize::new(0);

/// Number of times a student probability has been clamped to
/// [`MIN_PROB`] in this process.
pub fn clamp_warnings() -> usize {
    CLAMPED.load(Ordering::Relaxed)
}

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("ensemble has no members")]
    EmptyEnsemble,
    #[error("member {0} has a different action inventory or vocabulary")]
    IncompatibleMember(usize),
    #[error("alpha must lie in [0, 1], got {0}")]
    AlphaOutOfRange(f64),
    #[error("alpha < 1 needs a gold action")]
    MissingGold,
    #[error("student and target supports differ")]
    SupportMismatch,
    #[error("exploration mode requires alpha = 1, got {0}")]
    ExplorationNeedsAlphaOne(f64),
    #[error("unknown distillation mode `{0}` (expected oracle or exploration)")]
    UnknownMode(String),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("checksum mismatch for {0}")]
    Checksum(PathBuf),
    #[error(transparent)]
    Parser(#[from] ParserError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl From<crate::transition::TransitionError> for DistillError {
    fn from(e: crate::transition::TransitionError) -> Self {
        DistillError::Parser(e.into())
    }
}

#[derive(Clone, Debug)]
pub struct Ensemble {
    members: Vec<ParserModel>,
}

impl Ensemble {
    pub fn new(members: Vec<ParserModel>) -> Result<Ensemble, DistillError> {
        let first = members.first().ok_or(DistillError::EmptyEnsemble)?;
        if let Some(i) = members.iter().position(|m| !m.compatible_with(first)) {
            return Err(DistillError::IncompatibleMember(i));
        }
        Ok(Ensemble { members })
    }

    pub fn members(&self) -> &[ParserModel] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn inventory(&self) -> &ActionInventory {
        self.members[0].inventory()
    }

    /// One encoding of `s` per member.
    pub fn session<'a>(&'a self, s: &Sentence) -> Result<EnsembleSession<'a>, DistillError> {
        let sessions = self
            .members
            .iter()
            .map(|m| m.session(s))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(EnsembleSession { sessions })
    }

    pub fn ensemble_distribution(&self, st: &ParserState, s: &Sentence) -> Result<ActionDistribution, DistillError> {
        self.session(s)?.distribution(st)
    }

    pub fn ensemble_parse(&self, s: &Sentence) -> Result<Sentence, DistillError> {
        if s.is_empty() {
            return Ok(s.clone());
        }
        let inv = self.inventory();
        let mut session = self.session(s)?;
        let mut st = ParserState::initial(s.len())?;
        while !st.is_terminal() {
            let d = session.distribution(&st)?;
            st.apply(inv.action(d.argmax()), inv)?;
        }
        Ok(extract_tree(&st, s, inv)?)
    }

    pub fn parse_treebank(&self, tb: &Treebank, jobs: usize) -> Result<Treebank, DistillError> {
        let sentences = par_map(&tb.sentences, jobs, |s| self.ensemble_parse(s))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Treebank {
            sentences,
            split: tb.split,
        })
    }
}

pub struct EnsembleSession<'a> {
    sessions: Vec<ParserSession<'a>>,
}

impl EnsembleSession<'_> {
    /// Mean of the member distributions, renormalized over the support.
    pub fn distribution(&mut self, st: &ParserState) -> Result<ActionDistribution, DistillError> {
        let mut dists = Vec::with_capacity(self.sessions.len());
        for s in &mut self.sessions {
            dists.push(s.distribution(st)?);
        }
        Ok(average(&dists))
    }
}

/// Per-action arithmetic mean of distributions sharing one support.
///
/// Each action's values are summed in sorted order as a running mean, so
/// the result does not depend on member order and equals the input when
/// all members agree.
pub fn average(dists: &[ActionDistribution]) -> ActionDistribution {
    let n = dists[0].probs().len();
    let mut column = Vec::with_capacity(dists.len());
    let mean = (0..n)
        .map(|a| {
            column.clear();
            column.extend(dists.iter().map(|d| d.prob(a)));
            column.sort_by(f64::total_cmp);
            column
                .iter()
                .enumerate()
                .fold(0.0, |m, (k, &x)| m + (x - m) / (k + 1) as f64)
        })
        .collect();
    ActionDistribution::from_normalized(mean, dists[0].support().to_vec())
}

/// A student training state and its ensemble target.
#[derive(Clone, Debug, PartialEq)]
pub struct DistillationExample {
    /// Index of the sentence in the treebank the example came from.
    pub sentence: usize,
    pub state: ParserState,
    pub target: ActionDistribution,
    /// Inventory index of the oracle action; absent off the oracle path.
    pub gold: Option<usize>,
}

/// Loss value and its gradient with respect to the student's logits.
#[derive(Clone, Debug, PartialEq)]
pub struct DistillLoss {
    pub value: f64,
    pub grad: Vec<f64>,
    pub clamped: usize,
}

/// The interpolated loss for student distribution `q`.
pub fn distillation_loss(
    q: &ActionDistribution,
    target: &ActionDistribution,
    gold: Option<usize>,
    alpha: f64,
) -> Result<DistillLoss, DistillError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(DistillError::AlphaOutOfRange(alpha));
    }
    if q.support() != target.support() {
        return Err(DistillError::SupportMismatch);
    }
    let gold = match gold {
        Some(g) if q.support().contains(&g) => Some(g),
        Some(_) => return Err(DistillError::SupportMismatch),
        None if alpha < 1.0 => return Err(DistillError::MissingGold),
        None => None,
    };
    let mut clamped = 0;
    let mut log_q = |i: usize| {
        let p = q.prob(i);
        if p < MIN_PROB {
            clamped += 1;
            MIN_PROB.ln()
        } else {
            p.ln()
        }
    };
    let mut value = 0.0;
    let mut mix = vec![0.0; q.probs().len()];
    for &a in q.support() {
        let p = target.prob(a);
        if alpha > 0.0 && p > 0.0 {
            value -= alpha * p * log_q(a);
        }
        mix[a] += alpha * p;
    }
    if let Some(g) = gold {
        if alpha < 1.0 {
            value -= (1.0 - alpha) * log_q(g);
            mix[g] += 1.0 - alpha;
        }
    }
    if clamped > 0 {
        let before = CLAMPED.fetch_add(clamped, Ordering::Relaxed);
        if before == 0 {
            warn!("student probability below {MIN_PROB:e} clamped");
        }
    }
    let grad = q
        .probs()
        .iter()
        .zip(&mix)
        .enumerate()
        .map(|(i, (qi, m))| if q.support().contains(&i) { qi - m } else { 0.0 })
        .collect();
    Ok(DistillLoss { value, grad, clamped })
}

/// One example per oracle state of every projective sentence; returns the
/// number of skipped sentences too.
pub fn collect_oracle_states(
    e: &Ensemble,
    tb: &Treebank,
    jobs: usize,
) -> Result<(Vec<DistillationExample>, usize), DistillError> {
    let inv = e.inventory();
    let (corpus, skipped) = oracle_corpus(tb, inv);
    let index_of = |s: &Sentence| {
        tb.sentences
            .iter()
            .position(|t| std::ptr::eq(t, s))
            .unwrap_or_default()
    };
    let per_sentence = par_map(&corpus, jobs, |(s, actions)| -> Result<Vec<DistillationExample>, DistillError> {
        let sentence = index_of(s);
        let mut session = e.session(s)?;
        let mut st = ParserState::initial(s.len())?;
        let mut out = Vec::with_capacity(actions.len());
        for &a in actions {
            let target = session.distribution(&st)?;
            out.push(DistillationExample {
                sentence,
                state: st.clone(),
                target,
                gold: Some(inv.index_of(a)),
            });
            st.apply(a, inv)?;
        }
        Ok(out)
    });
    let mut out = Vec::new();
    for r in per_sentence {
        out.extend(r?);
    }
    Ok((out, skipped))
}

/// Rolls out one trajectory per sentence, sampling each action from the
/// ensemble distribution. Sentence `i` uses RNG stream `i` of `seed`, so the
/// result does not depend on `jobs`.
pub fn collect_exploration_states(
    e: &Ensemble,
    tb: &Treebank,
    seed: u64,
    jobs: usize,
) -> Result<Vec<DistillationExample>, DistillError> {
    let inv = e.inventory();
    let indexed: Vec<(usize, &Sentence)> = tb.sentences.iter().enumerate().filter(|(_, s)| !s.is_empty()).collect();
    let per_sentence = par_map(&indexed, jobs, |&(i, s)| -> Result<Vec<DistillationExample>, DistillError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut session = e.session(s)?;
        let mut st = ParserState::initial(s.len())?;
        let mut out = Vec::with_capacity(2 * s.len());
        while !st.is_terminal() {
            let target = session.distribution(&st)?;
            let a = target.sample(&mut rng);
            let next = st.applied(inv.action(a), inv)?;
            out.push(DistillationExample {
                sentence: i,
                state: std::mem::replace(&mut st, next),
                target,
                gold: None,
            });
        }
        Ok(out)
    });
    let mut out = Vec::new();
    for r in per_sentence {
        out.extend(r?);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistillMode {
    Oracle,
    Exploration,
}

impl FromStr for DistillMode {
    type Err = DistillError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(DistillMode::Oracle),
            "exploration" => Ok(DistillMode::Exploration),
            other => Err(DistillError::UnknownMode(other.to_owned())),
        }
    }
}

impl fmt::Display for DistillMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistillMode::Oracle => "oracle",
            DistillMode::Exploration => "exploration",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    pub alpha: f64,
    pub mode: DistillMode,
    /// Student dimensions, epochs, optimizer and seed.
    pub parser: ParserConfig,
    pub jobs: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            alpha: 1.0,
            mode: DistillMode::Exploration,
            parser: ParserConfig::default(),
            jobs: 1,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<(), DistillError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(DistillError::AlphaOutOfRange(self.alpha));
        }
        if self.mode == DistillMode::Exploration && self.alpha != 1.0 {
            return Err(DistillError::ExplorationNeedsAlphaOne(self.alpha));
        }
        Ok(())
    }
}

/// Loss and gradient of the student on the examples of one sentence.
pub fn student_loss(
    student: &ParserModel,
    params: &ParamStore,
    s: &Sentence,
    examples: &[&DistillationExample],
    alpha: f64,
    rng: Option<ChaCha8Rng>,
) -> Result<(f64, Gradients), DistillError> {
    let mut session = student.session_with(params, s, rng)?;
    session.keep_nodes(true);
    let mut total = 0.0;
    let mut seeds = Vec::with_capacity(examples.len());
    for ex in examples {
        let (node, q) = session.score(&ex.state)?;
        let l = distillation_loss(&q, &ex.target, ex.gold, alpha)?;
        total += l.value;
        seeds.push((node, l.grad));
    }
    Ok((total, session.backward(&seeds)?))
}

/// Trains a student parser (same vocabularies and actions as the ensemble)
/// on ensemble targets. Oracle-mode targets are computed once; exploration
/// mode samples new trajectories every epoch. The epoch with the best LAS
/// on `dev` is kept (on `tb` without one). `pretrained` vectors, when
/// given, initialize the student's word embeddings and fix its word
/// dimension.
pub fn distill_train(
    e: &Ensemble,
    tb: &Treebank,
    dev: Option<&Treebank>,
    config: &DistillConfig,
    pretrained: Option<&WordVectors>,
) -> Result<(ParserModel, TrainReport), DistillError> {
    config.validate()?;
    let teacher = &e.members[0];
    let mut parser_config = config.parser.clone();
    if let Some(v) = pretrained {
        parser_config.word_dim = v.dim;
    }
    let mut student = ParserModel::new(teacher.vocab().clone(), teacher.inventory().clone(), &parser_config)?;
    if let Some(v) = pretrained {
        let n = student.load_pretrained(v)?;
        info!("student: {n} word vectors loaded");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.parser.seed ^ 0x64697374);
    let mut state = SgdState::default();
    let mut report = TrainReport {
        best_score: f64::NEG_INFINITY,
        ..TrainReport::default()
    };
    let cached = match config.mode {
        DistillMode::Oracle => {
            let (examples, skipped) = collect_oracle_states(e, tb, config.jobs)?;
            report.skipped = skipped;
            Some(examples)
        }
        DistillMode::Exploration => None,
    };
    let mut best = student.params().clone();
    for epoch in 0..config.parser.epochs {
        let fresh;
        let examples = match &cached {
            Some(ex) => ex,
            None => {
                fresh = collect_exploration_states(e, tb, rng.gen(), config.jobs)?;
                &fresh
            }
        };
        let mut by_sentence: Vec<Vec<&DistillationExample>> = vec![Vec::new(); tb.sentences.len()];
        for ex in examples {
            by_sentence[ex.sentence].push(ex);
        }
        let mut order: Vec<usize> = (0..tb.sentences.len()).filter(|&i| !by_sentence[i].is_empty()).collect();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for i in order {
            let drop = ChaCha8Rng::seed_from_u64(rng.gen());
            let (loss, grads) = student_loss(
                &student,
                student.params(),
                &tb.sentences[i],
                &by_sentence[i],
                config.alpha,
                Some(drop),
            )?;
            epoch_loss += loss;
            optimize_step(student.params_mut(), &grads, &mut state, &config.parser.sgd)?;
        }
        state.next_epoch();
        let score = las(&student, dev.unwrap_or(tb))?;
        info!("distill epoch {epoch}: loss {epoch_loss:.4} LAS {score:.2}");
        report.epochs.push(EpochStats {
            epoch,
            loss: epoch_loss,
            score,
        });
        if score > report.best_score {
            report.best_score = score;
            report.best_epoch = epoch;
            best = student.params().clone();
        }
    }
    *student.params_mut() = best;
    Ok((student, report))
}

/// A manifest line: member model path and the SHA-256 of its bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `path<TAB>sha256` lines.
pub fn write_manifest<W: Write>(mut out: W, entries: &[ManifestEntry]) -> std::io::Result<()> {
    for e in entries {
        writeln!(out, "{}\t{}", e.path.display(), e.sha256)?;
    }
    Ok(())
}

pub fn read_manifest<R: std::io::Read>(input: R) -> Result<Vec<ManifestEntry>, DistillError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (path, sum) = line.split_once('\t').ok_or_else(|| DistillError::Manifest {
            line: i + 1,
            message: "expected `path<TAB>sha256`".into(),
        })?;
        if sum.len() != 64 || !sum.chars().all(|c| c.is_ascii_hexdigit()) {
            return Err(DistillError::Manifest {
                line: i + 1,
                message: format!("bad checksum `{sum}`"),
            });
        }
        out.push(ManifestEntry {
            path: PathBuf::from(path),
            sha256: sum.to_ascii_lowercase(),
        });
    }
    Ok(out)
}

/// Loads every member listed in a manifest, resolving relative paths
/// against the manifest's directory and verifying checksums.
pub fn load_ensemble(manifest: &Path) -> Result<Ensemble, DistillError> {
    let entries = read_manifest(std::fs::File::open(manifest)?)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut members = Vec::with_capacity(entries.len());
    for e in entries {
        let path = if e.path.is_absolute() { e.path.clone() } else { base.join(&e.path) };
        let bytes = std::fs::read(&path)?;
        if sha256_hex(&bytes) != e.sha256 {
            return Err(DistillError::Checksum(path));
        }
        members.push(ParserModel::from_bytes(&bytes)?);
    }
    Ensemble::new(members)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(p: &[f64]) -> ActionDistribution {
        ActionDistribution::from_probs(p, (0..p.len()).collect())
    }

    #[test]
    fn averaging() {
        let d = average(&[dist(&[0.6, 0.4]), dist(&[0.2, 0.8])]);
        assert!((d.prob(0) - 0.4).abs() < 1e-12);
        assert!((d.prob(1) - 0.6).abs() < 1e-12);
        let same = average(&vec![dist(&[0.3, 0.7]); 4]);
        assert_eq!(same, dist(&[0.3, 0.7]));
    }

    #[test]
    fn loss_endpoints() {
        let q = dist(&[0.2, 0.5, 0.3]);
        let p = dist(&[0.1, 0.1, 0.8]);
        let l0 = distillation_loss(&q, &p, Some(1), 0.0).unwrap();
        assert_eq!(l0.value, -(0.5f64).ln());
        let onehot = dist(&[0.0, 0.0, 1.0]);
        let l1 = distillation_loss(&q, &onehot, None, 1.0).unwrap();
        assert!((l1.value + (0.3f64).ln()).abs() < 1e-15);
        let half = dist(&[0.5, 0.5]);
        let l = distillation_loss(&half, &half, None, 1.0).unwrap();
        assert!((l.value - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn loss_errors() {
        let q = dist(&[0.5, 0.5]);
        assert!(matches!(distillation_loss(&q, &q, None, 0.5), Err(DistillError::MissingGold)));
        assert!(matches!(distillation_loss(&q, &q, Some(0), 1.5), Err(DistillError::AlphaOutOfRange(_))));
        let other = ActionDistribution::from_probs(&[0.5, 0.5, 0.0], vec![0, 1]);
        let q3 = ActionDistribution::from_probs(&[0.3, 0.3, 0.4], vec![0, 1, 2]);
        assert!(matches!(distillation_loss(&q3, &other, None, 1.0), Err(DistillError::SupportMismatch)));
    }

    #[test]
    fn clamping_is_counted() {
        let q = ActionDistribution::from_logits(&[0.0, -1000.0], vec![0, 1]);
        let p = dist(&[0.5, 0.5]);
        let l = distillation_loss(&q, &p, None, 1.0).unwrap();
        assert_eq!(l.clamped, 1);
        assert!(l.value.is_finite());
        assert!(clamp_warnings() >= 1);
    }

    #[test]
    fn gradient_is_q_minus_mixture() {
        let q = dist(&[0.2, 0.5, 0.3]);
        let p = dist(&[0.1, 0.1, 0.8]);
        let l = distillation_loss(&q, &p, Some(0), 0.9).unwrap();
        let expect = [0.2 - 0.09 - 0.1, 0.5 - 0.09, 0.3 - 0.72];
        for (g, e) in l.grad.iter().zip(expect) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn mode_parsing_and_validation() {
        assert_eq!("oracle".parse::<DistillMode>().unwrap(), DistillMode::Oracle);
        assert!("beam".parse::<DistillMode>().is_err());
        let bad = DistillConfig {
            alpha: 0.9,
            mode: DistillMode::Exploration,
            ..DistillConfig::default()
        };
        assert!(matches!(bad.validate(), Err(DistillError::ExplorationNeedsAlphaOne(_))));
        assert!(DistillConfig::default().validate().is_ok());
    }

    #[test]
    fn manifest_round_trip() {
        let entries = vec![ManifestEntry {
            path: "m1.model".into(),
            sha256: sha256_hex(b"abc"),
        }];
        let mut buf = Vec::new();
        write_manifest(&mut buf, &entries).unwrap();
        assert_eq!(read_manifest(&buf[..]).unwrap(), entries);
        assert!(read_manifest(&b"m1.model deadbeef\n"[..]).is_err());
    }

    use crate::parser::tests::{model, three_tokens};
    use crate::runtime::finite_diff_check;

    fn examples(e: &Ensemble, s: &Sentence) -> Vec<DistillationExample> {
        let tb = Treebank::new(vec![s.clone()]);
        collect_oracle_states(e, &tb, 1).unwrap().0
    }

    #[test]
    fn student_gradient_check() {
        let s = three_tokens();
        let e = Ensemble::new(vec![model(10), model(11)]).unwrap();
        let ex = examples(&e, &s);
        assert_eq!(ex.len(), 2 * s.len());
        for (k, alpha) in [0.0, 0.5, 0.9, 1.0].into_iter().enumerate() {
            let student = model(k as u64);
            let refs: Vec<&DistillationExample> = ex.iter().collect();
            let mut params = student.params().clone();
            let err = finite_diff_check(
                &mut params,
                |p| student_loss(&student, p, &s, &refs, alpha, None).map_err(|e| RuntimeError::Format(e.to_string())),
                1e-4,
                120,
                k as u64,
            )
            .unwrap();
            assert!(err < 1e-4, "alpha {alpha}: {err}");
        }
    }

    #[test]
    fn ensemble_of_one_matches_member() {
        let s = three_tokens();
        let m = model(4);
        let e = Ensemble::new(vec![m.clone()]).unwrap();
        assert_eq!(e.ensemble_parse(&s).unwrap(), m.greedy_parse(&s).unwrap());
        assert!(matches!(Ensemble::new(vec![]), Err(DistillError::EmptyEnsemble)));
    }

    #[test]
    fn exploration_is_deterministic_and_complete() {
        let s = three_tokens();
        let e = Ensemble::new(vec![model(1), model(2)]).unwrap();
        let tb = Treebank::new(vec![s.clone(), s.clone()]);
        let a = collect_exploration_states(&e, &tb, 7, 1).unwrap();
        let b = collect_exploration_states(&e, &tb, 7, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2 * 2 * s.len());
        assert!(a.iter().all(|x| x.gold.is_none()));
    }

    #[test]
    fn distillation_runs_in_both_modes() {
        let s = three_tokens();
        let tb = Treebank::new(vec![s.clone()]);
        let e = Ensemble::new(vec![model(1), model(2)]).unwrap();
        for (mode, alpha) in [(DistillMode::Oracle, 0.5), (DistillMode::Exploration, 1.0)] {
            let cfg = DistillConfig {
                alpha,
                mode,
                parser: crate::parser::ParserConfig {
                    epochs: 2,
                    ..crate::parser::tests::tiny_config()
                },
                jobs: 1,
            };
            let (student, report) = distill_train(&e, &tb, None, &cfg, None).unwrap();
            assert_eq!(report.epochs.len(), 2);
            assert!(student.compatible_with(&e.members()[0]));
        }
    }

    #[test]
    fn student_takes_pretrained_vectors() {
        let tb = Treebank::new(vec![three_tokens()]);
        let e = Ensemble::new(vec![model(1), model(2)]).unwrap();
        let vectors = WordVectors::read("cat 0.5 -0.25 1 2 3\n".as_bytes()).unwrap();
        let cfg = DistillConfig {
            parser: crate::parser::ParserConfig {
                epochs: 1,
                sgd: crate::runtime::SgdConfig {
                    learning_rate: 0.0,
                    ..Default::default()
                },
                ..crate::parser::tests::tiny_config()
            },
            ..DistillConfig::default()
        };
        let (student, _) = distill_train(&e, &tb, None, &cfg, Some(&vectors)).unwrap();
        let words = student.params().get(student.params().id("parse.words").unwrap());
        assert_eq!(words.cols, 5);
        let row = student.vocab().words.get("cat");
        assert_eq!(words.row(row), [0.5, -0.25, 1.0, 2.0, 3.0]);
    }
}
