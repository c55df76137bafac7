//! Seeded generators of small tweet-like treebanks and random projective
//! trees, for tests, examples and desk-scale experiments.
//!
//! Generated sentences are projective, carry `sent_id` and `text`
//! comments, and mark every whitespace chunk holding several words (`its`,
//! `gonna`, `home!`) as a multiword range. Prepositional phrases attach to
//! the verb or to the object depending on the preposition's noun, so
//! attachment is learnable but not positional.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conllu::{MultiwordRange, Sentence, Token, Treebank, Upos};
use crate::transition::ROOT_LABEL;

const DETS: &[&str] = &["the", "a", "this", "my", "that", "our"];
const ADJS: &[&str] = &[
    "big", "new", "old", "red", "nice", "cheap", "weird", "tiny", "loud", "cold", "happy", "dark",
];
/// Nouns whose prepositional phrases attach to the verb.
const VERB_PP_NOUNS: &[&str] = &[
    "phone", "laptop", "car", "bus", "train", "camera", "pen", "spoon", "bike", "hammer", "knife",
    "boat",
];
/// Nouns whose prepositional phrases attach to the preceding object.
const NOUN_PP_NOUNS: &[&str] = &[
    "stripes", "sugar", "cheese", "spots", "buttons", "sprinkles", "wheels", "pockets", "lyrics",
    "bugs", "sauce", "ads",
];
const OBJ_NOUNS: &[&str] = &[
    "pizza", "movie", "song", "game", "shirt", "cake", "book", "show", "video", "dog", "cat",
    "photo", "coffee", "jacket", "ticket", "album",
];
const SUBJ_NOUNS: &[&str] = &["guy", "team", "teacher", "kid", "band", "mom", "boss", "crowd"];
const PRONOUNS: &[&str] = &["i", "we", "they", "she", "he", "you", "it"];
const TRANSITIVE: &[&str] = &[
    "love", "hate", "watched", "bought", "made", "found", "need", "want", "got", "saw", "fixed",
    "ate",
];
const INTRANSITIVE: &[&str] = &["left", "slept", "laughed", "cried", "won", "lost", "danced", "waited"];
const PREPS: &[&str] = &["with", "on", "in", "from", "by"];
const MENTIONS: &[&str] = &["@bob", "@coldplay", "@nasa", "@jen_22", "@mike", "@sports"];
const HASHTAGS: &[&str] = &["#tbt", "#blessed", "#fail", "#music", "#win", "#mood"];
const URLS: &[&str] = &["http://t.co/x1", "https://t.co/ab9", "http://bit.ly/q2", "www.example.com"];
const EMOTICONS: &[&str] = &[":)", ":(", ":D", "<3", ";)", ":P"];
const PUNCT: &[&str] = &["!", ".", "?", "!!"];
const INTJS: &[&str] = &["lol", "omg", "wow", "yay", "ugh"];

/// Labels used to corrupt gold relations in [`inject_label_noise`].
pub const NOISE_LABELS: &[&str] = &[
    "nsubj", "obj", "det", "amod", "case", "obl", "nmod", "punct", "aux", "mark", "discourse",
    "list", "advmod",
];

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub sentences: usize,
    pub seed: u64,
    /// Probability of each contraction site being written as one chunk.
    pub contraction_rate: f64,
    /// Probability of tweet material (retweet prefix, hashtags, URLs,
    /// emoticons) around the clause.
    pub tweet_rate: f64,
    /// Prefix of generated `sent_id`s.
    pub id_prefix: String,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            sentences: 100,
            seed: 0,
            contraction_rate: 0.5,
            tweet_rate: 0.3,
            id_prefix: "syn".into(),
        }
    }
}

#[derive(Clone, Debug)]
struct Word {
    form: String,
    upos: Upos,
    head: usize,
    deprel: &'static str,
    glued: bool,
}

#[derive(Default)]
struct Builder {
    words: Vec<Word>,
}

impl Builder {
    fn push(&mut self, form: &str, upos: Upos) -> usize {
        self.words.push(Word {
            form: form.to_owned(),
            upos,
            head: 0,
            deprel: ROOT_LABEL,
            glued: false,
        });
        self.words.len()
    }

    fn glue(&mut self, form: &str, upos: Upos) -> usize {
        let id = self.push(form, upos);
        self.words[id - 1].glued = true;
        id
    }

    fn attach(&mut self, dep: usize, head: usize, rel: &'static str) {
        self.words[dep - 1].head = head;
        self.words[dep - 1].deprel = rel;
    }

    fn finish(self, sent_id: &str) -> Sentence {
        let mut text = String::new();
        for (i, w) in self.words.iter().enumerate() {
            if i > 0 && !w.glued {
                text.push(' ');
            }
            text.push_str(&w.form);
        }
        let tokens = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| {
                Token::new(i + 1, w.form.clone())
                    .with_upos(w.upos)
                    .with_head(w.head, w.deprel)
            })
            .collect();
        let mut s = Sentence::new(tokens);
        let mut i = 0;
        while i < self.words.len() {
            let mut j = i;
            while j + 1 < self.words.len() && self.words[j + 1].glued {
                j += 1;
            }
            if j > i {
                let surface: String = self.words[i..=j].iter().map(|w| w.form.as_str()).collect();
                s.ranges.push(MultiwordRange::new(i + 1, j + 1, surface));
            }
            i = j + 1;
        }
        s.set_meta("sent_id", sent_id);
        s.set_meta("text", &text);
        s
    }
}

fn pick<'a, R: Rng>(rng: &mut R, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).copied().unwrap_or_default()
}

/// Determiner/adjective/noun phrase; returns the noun id.
fn noun_phrase<R: Rng>(b: &mut Builder, rng: &mut R, nouns: &[&str]) -> usize {
    let det = rng.gen_bool(0.7).then(|| b.push(pick(rng, DETS), Upos::Det));
    let adj = rng.gen_bool(0.3).then(|| b.push(pick(rng, ADJS), Upos::Adj));
    let n = b.push(pick(rng, nouns), Upos::Noun);
    if let Some(d) = det {
        b.attach(d, n, "det");
    }
    if let Some(a) = adj {
        b.attach(a, n, "amod");
    }
    n
}

fn clause<R: Rng>(b: &mut Builder, rng: &mut R, cfg: &SyntheticConfig) -> usize {
    // Subject, possibly with a contracted auxiliary.
    let mut pre_verb: Vec<(usize, &'static str)> = Vec::new();
    if rng.gen_bool(0.6) {
        let pron = pick(rng, PRONOUNS);
        let subj = b.push(pron, Upos::Pron);
        pre_verb.push((subj, "nsubj"));
        let contract = rng.gen_bool(cfg.contraction_rate);
        match (pron, rng.gen_range(0..3)) {
            ("it", 0) => {
                let aux = if contract { b.glue("s", Upos::Aux) } else { b.push("is", Upos::Aux) };
                pre_verb.push((aux, "aux"));
            }
            ("i", 0) => {
                let aux = if contract { b.glue("m", Upos::Aux) } else { b.push("am", Upos::Aux) };
                pre_verb.push((aux, "aux"));
            }
            (_, 1) => {
                let (gon, na) = if contract {
                    (b.push("gon", Upos::Verb), b.glue("na", Upos::Part))
                } else {
                    (b.push("going", Upos::Verb), b.push("to", Upos::Part))
                };
                pre_verb.push((gon, "aux"));
                pre_verb.push((na, "mark"));
            }
            _ => {}
        }
    } else {
        let subj = noun_phrase(b, rng, SUBJ_NOUNS);
        pre_verb.push((subj, "nsubj"));
    }

    let transitive = rng.gen_bool(0.75);
    let verb = b.push(pick(rng, if transitive { TRANSITIVE } else { INTRANSITIVE }), Upos::Verb);
    for (id, rel) in pre_verb {
        b.attach(id, verb, rel);
    }
    let obj = transitive.then(|| {
        let o = noun_phrase(b, rng, OBJ_NOUNS);
        b.attach(o, verb, "obj");
        o
    });

    // Noun-side phrases attach to the closest preceding noun, which keeps
    // the tree projective when two phrases follow each other.
    let mut last_noun = obj;
    let pps = if rng.gen_bool(0.6) { rng.gen_range(1..=2) } else { 0 };
    for _ in 0..pps {
        let p = b.push(pick(rng, PREPS), Upos::Adp);
        let verb_side = rng.gen_bool(0.5);
        let n = noun_phrase(b, rng, if verb_side { VERB_PP_NOUNS } else { NOUN_PP_NOUNS });
        b.attach(p, n, "case");
        match (verb_side, last_noun) {
            (false, Some(o)) => b.attach(n, o, "nmod"),
            _ => b.attach(n, verb, "obl"),
        }
        last_noun = Some(n);
    }
    verb
}

fn sentence<R: Rng>(rng: &mut R, cfg: &SyntheticConfig, sent_id: &str) -> Sentence {
    let mut b = Builder::default();
    let tweet = rng.gen_bool(cfg.tweet_rate);

    let rt = (tweet && rng.gen_bool(0.4)).then(|| {
        let rt = b.push("RT", Upos::X);
        let user = b.push(pick(rng, MENTIONS), Upos::X);
        let colon = b.push(":", Upos::Punct);
        (rt, user, colon)
    });
    let intj = rng.gen_bool(0.1).then(|| b.push(pick(rng, INTJS), Upos::Intj));

    let verb = clause(&mut b, rng, cfg);
    if let Some((rt, user, colon)) = rt {
        b.attach(rt, verb, "discourse");
        b.attach(user, rt, "discourse");
        b.attach(colon, rt, "punct");
    }
    if let Some(i) = intj {
        b.attach(i, verb, "discourse");
    }

    if rng.gen_bool(0.7) {
        let form = pick(rng, PUNCT);
        let p = if rng.gen_bool(cfg.contraction_rate) {
            b.glue(form, Upos::Punct)
        } else {
            b.push(form, Upos::Punct)
        };
        b.attach(p, verb, "punct");
    }
    if tweet {
        let mut trailers = vec![0, 1, 2];
        trailers.shuffle(rng);
        for t in trailers {
            if !rng.gen_bool(0.5) {
                continue;
            }
            let (id, rel) = match t {
                0 => (b.push(pick(rng, EMOTICONS), Upos::Sym), "discourse"),
                1 => (b.push(pick(rng, HASHTAGS), Upos::X), "discourse"),
                _ => (b.push(pick(rng, URLS), Upos::X), "list"),
            };
            b.attach(id, verb, rel);
        }
    }
    b.finish(sent_id)
}

/// A treebank of `cfg.sentences` generated sentences.
pub fn generate_treebank(cfg: &SyntheticConfig) -> Treebank {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sentences = (0..cfg.sentences)
        .map(|i| sentence(&mut rng, cfg, &format!("{}-{}", cfg.id_prefix, i + 1)))
        .collect();
    Treebank::new(sentences)
}

/// `(raw text, gold sentence)` pairs for tokenizer training.
pub fn raw_pairs(tb: &Treebank) -> Vec<(String, Sentence)> {
    tb.sentences
        .iter()
        .map(|s| (s.text().unwrap_or_default().to_owned(), s.clone()))
        .collect()
}

/// Replaces the relation of a `rate` fraction of non-root tokens with a
/// different label from [`NOISE_LABELS`]. Heads are untouched, so trees
/// stay valid.
pub fn inject_label_noise(tb: &Treebank, rate: f64, seed: u64) -> Treebank {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = tb.clone();
    for s in &mut out.sentences {
        for t in &mut s.tokens {
            if t.head == Some(0) || !rng.gen_bool(rate) {
                continue;
            }
            let current = t.deprel().to_owned();
            let choices: Vec<&str> = NOISE_LABELS.iter().copied().filter(|l| *l != current).collect();
            t.deprel = Some(pick(&mut rng, &choices).to_owned());
        }
    }
    out
}

/// Heads (`heads[i]` for token `i + 1`, 0 = root) of a uniformly built
/// random projective tree over `n` tokens.
pub fn random_projective_heads<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    fn subtree<R: Rng>(lo: usize, hi: usize, head: usize, out: &mut [usize], rng: &mut R) {
        let r = rng.gen_range(lo..hi);
        out[r] = head;
        children(lo, r, r + 1, out, rng);
        children(r + 1, hi, r + 1, out, rng);
    }
    fn children<R: Rng>(mut lo: usize, hi: usize, head: usize, out: &mut [usize], rng: &mut R) {
        while lo < hi {
            let end = rng.gen_range(lo + 1..=hi);
            subtree(lo, end, head, out, rng);
            lo = end;
        }
    }
    let mut out = vec![0; n];
    if n > 0 {
        subtree(0, n, 0, &mut out, rng);
    }
    out
}

/// Random heads where each token picks any other position (or the root for
/// exactly one token); the result is a tree but usually not projective.
pub fn random_tree_heads<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    // Attach tokens in a random order, each to a token attached earlier.
    let mut order: Vec<usize> = (1..=n).collect();
    order.shuffle(rng);
    let mut heads = vec![0; n];
    for k in 1..n {
        heads[order[k] - 1] = order[rng.gen_range(0..k)];
    }
    heads
}

/// A sentence with the given heads, random forms and labels from `labels`.
pub fn sentence_from_heads<R: Rng>(heads: &[usize], labels: &[&str], rng: &mut R) -> Sentence {
    let tokens = heads
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            let label = if h == 0 { ROOT_LABEL } else { pick(rng, labels) };
            let upos = Upos::ALL[rng.gen_range(0..Upos::ALL.len())];
            Token::new(i + 1, format!("w{}", rng.gen_range(0..50)))
                .with_upos(upos)
                .with_head(h, label)
        })
        .collect();
    Sentence::new(tokens)
}
