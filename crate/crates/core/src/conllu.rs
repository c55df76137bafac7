//! CoNLL-U data model, reader, writer and structural validation.
//!
//! The reader accepts the ten-column CoNLL-U v2 format with `#` comment
//! lines and `a-b` multiword ranges. Empty nodes (`a.b`) are rejected.
//! XPOS, FEATS, DEPS, LEMMA and MISC are carried through verbatim.
//!
//! Sentences whose HEAD column is entirely `_` are accepted as unparsed
//! (tokenizer output); otherwise the heads must form a single-rooted tree.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The seventeen universal part-of-speech tags.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Upos {
    Adj,
    Adp,
    Adv,
    Aux,
    Cconj,
    Det,
    Intj,
    Noun,
    Num,
    Part,
    Pron,
    Propn,
    Punct,
    Sconj,
    Sym,
    Verb,
    X,
}

impl Upos {
    pub const ALL: [Upos; 17] = [
        Upos::Adj,
        Upos::Adp,
        Upos::Adv,
        Upos::Aux,
        Upos::Cconj,
        Upos::Det,
        Upos::Intj,
        Upos::Noun,
        Upos::Num,
        Upos::Part,
        Upos::Pron,
        Upos::Propn,
        Upos::Punct,
        Upos::Sconj,
        Upos::Sym,
        Upos::Verb,
        Upos::X,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Upos::Adj => "ADJ",
            Upos::Adp => "ADP",
            Upos::Adv => "ADV",
            Upos::Aux => "AUX",
            Upos::Cconj => "CCONJ",
            Upos::Det => "DET",
            Upos::Intj => "INTJ",
            Upos::Noun => "NOUN",
            Upos::Num => "NUM",
            Upos::Part => "PART",
            Upos::Pron => "PRON",
            Upos::Propn => "PROPN",
            Upos::Punct => "PUNCT",
            Upos::Sconj => "SCONJ",
            Upos::Sym => "SYM",
            Upos::Verb => "VERB",
            Upos::X => "X",
        }
    }

    /// Position in [`Upos::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(idx: usize) -> Option<Upos> {
        Upos::ALL.get(idx).copied()
    }
}

impl fmt::Display for Upos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown UPOS tag `{0}`")]
pub struct UnknownUpos(pub String);

impl FromStr for Upos {
    type Err = UnknownUpos;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Upos::ALL
            .iter()
            .copied()
            .find(|u| u.as_str() == s)
            .ok_or_else(|| UnknownUpos(s.to_owned()))
    }
}

/// One syntactic word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    /// 1-based position in the sentence.
    pub id: usize,
    pub form: String,
    pub lemma: String,
    pub upos: Option<Upos>,
    pub xpos: String,
    pub feats: String,
    /// `Some(0)` attaches to the artificial root.
    pub head: Option<usize>,
    pub deprel: Option<String>,
    pub deps: String,
    pub misc: String,
}

impl Token {
    /// A token with only ID and FORM populated.
    pub fn new(id: usize, form: impl Into<String>) -> Token {
        Token {
            id,
            form: form.into(),
            lemma: "_".into(),
            upos: None,
            xpos: "_".into(),
            feats: "_".into(),
            head: None,
            deprel: None,
            deps: "_".into(),
            misc: "_".into(),
        }
    }

    pub fn with_upos(mut self, upos: Upos) -> Token {
        self.upos = Some(upos);
        self
    }

    pub fn with_head(mut self, head: usize, deprel: impl Into<String>) -> Token {
        self.head = Some(head);
        self.deprel = Some(deprel.into());
        self
    }

    pub fn deprel(&self) -> &str {
        self.deprel.as_deref().unwrap_or("_")
    }

    /// Appends a `key=value` item to MISC.
    pub fn push_misc(&mut self, item: &str) {
        if self.misc == "_" || self.misc.is_empty() {
            self.misc = item.to_owned();
        } else {
            self.misc.push('|');
            self.misc.push_str(item);
        }
    }

    /// Looks up `key` in MISC.
    pub fn misc_value(&self, key: &str) -> Option<&str> {
        self.misc
            .split('|')
            .filter_map(|kv| kv.split_once('='))
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v)
    }
}

/// A multiword token line (`a-b`), e.g. `gonna` over `gon` + `na`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiwordRange {
    pub start: usize,
    pub end: usize,
    pub surface_form: String,
    pub misc: String,
}

impl MultiwordRange {
    pub fn new(start: usize, end: usize, surface_form: impl Into<String>) -> MultiwordRange {
        MultiwordRange {
            start,
            end,
            surface_form: surface_form.into(),
            misc: "_".into(),
        }
    }

    pub fn contains(&self, id: usize) -> bool {
        self.start <= id && id <= self.end
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Sentence {
    /// Comment lines without the leading `#`.
    pub comments: Vec<String>,
    pub tokens: Vec<Token>,
    pub ranges: Vec<MultiwordRange>,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>) -> Sentence {
        Sentence {
            comments: Vec::new(),
            tokens,
            ranges: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Value of a `# key = value` comment.
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.comments.iter().find_map(|c| {
            let (k, v) = c.split_once('=')?;
            (k.trim() == key).then(|| v.trim())
        })
    }

    /// Sets (or replaces) a `# key = value` comment.
    pub fn set_meta(&mut self, key: &str, value: &str) {
        let line = format!(" {key} = {value}");
        let existing = self.comments.iter().position(|c| {
            c.split_once('=')
                .map(|(k, _)| k.trim() == key)
                .unwrap_or(false)
        });
        match existing {
            Some(idx) => self.comments[idx] = line,
            None => self.comments.push(line),
        }
    }

    pub fn sent_id(&self) -> Option<&str> {
        self.meta("sent_id")
    }

    pub fn text(&self) -> Option<&str> {
        self.meta("text")
    }

    pub fn forms(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.form.as_str())
    }

    /// True when every token carries a head.
    pub fn has_heads(&self) -> bool {
        !self.tokens.is_empty() && self.tokens.iter().all(|t| t.head.is_some())
    }

    /// Surface units in order: multiword ranges replace the words they cover.
    pub fn surface_units(&self) -> Vec<&str> {
        let mut out = Vec::with_capacity(self.tokens.len());
        let mut id = 1;
        while id <= self.tokens.len() {
            match self.ranges.iter().find(|r| r.start == id) {
                Some(r) => {
                    out.push(r.surface_form.as_str());
                    id = r.end + 1;
                }
                None => {
                    out.push(self.tokens[id - 1].form.as_str());
                    id += 1;
                }
            }
        }
        out
    }

    /// Gold arcs as `(head, dependent, label)`; `None` for an unparsed sentence.
    pub fn arcs(&self) -> Option<Vec<(usize, usize, &str)>> {
        self.tokens
            .iter()
            .map(|t| t.head.map(|h| (h, t.id, t.deprel())))
            .collect()
    }

    /// Drops heads and labels, keeping everything else.
    pub fn strip_tree(&self) -> Sentence {
        let mut s = self.clone();
        for t in &mut s.tokens {
            t.head = None;
            t.deprel = None;
        }
        s
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Dev,
    Test,
    #[default]
    Unsplit,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Treebank {
    pub sentences: Vec<Sentence>,
    pub split: Split,
}

impl Treebank {
    pub fn new(sentences: Vec<Sentence>) -> Treebank {
        Treebank {
            sentences,
            split: Split::Unsplit,
        }
    }

    pub fn with_split(mut self, split: Split) -> Treebank {
        self.split = split;
        self
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    /// Copy with every sentence's tree removed.
    pub fn strip_trees(&self) -> Treebank {
        Treebank {
            sentences: self.sentences.iter().map(Sentence::strip_tree).collect(),
            split: self.split,
        }
    }
}

/// Structural problem found by [`validate_sentence`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ViolationCode {
    NonContiguousId { expected: usize },
    SelfLoop,
    HeadOutOfRange(usize),
    PartialHeads,
    NoRoot,
    MultipleRoots,
    RootLabel,
    Cycle,
    BadRange,
    RangeSurfaceMismatch,
    TextMismatch,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub code: ViolationCode,
    /// Token the violation is anchored at, when there is one.
    pub token: Option<usize>,
}

impl Violation {
    fn at(code: ViolationCode, token: usize) -> Violation {
        Violation {
            code,
            token: Some(token),
        }
    }

    fn sentence(code: ViolationCode) -> Violation {
        Violation { code, token: None }
    }
}

fn strip_ws(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Checks every sentence invariant; an empty result means the sentence is
/// well formed.
pub fn validate_sentence(s: &Sentence) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = s.tokens.len();

    for (i, t) in s.tokens.iter().enumerate() {
        if t.id != i + 1 {
            out.push(Violation::at(
                ViolationCode::NonContiguousId { expected: i + 1 },
                t.id,
            ));
        }
    }

    for r in &s.ranges {
        if r.start >= r.end || r.end > n || r.start == 0 {
            out.push(Violation::at(ViolationCode::BadRange, r.start));
            continue;
        }
        let covered: String = s.tokens[r.start - 1..r.end]
            .iter()
            .map(|t| t.form.as_str())
            .collect();
        if covered.to_lowercase() != r.surface_form.to_lowercase() {
            out.push(Violation::at(ViolationCode::RangeSurfaceMismatch, r.start));
        }
    }
    let mut sorted: Vec<_> = s.ranges.iter().filter(|r| r.start < r.end).collect();
    sorted.sort_by_key(|r| r.start);
    for w in sorted.windows(2) {
        if w[1].start <= w[0].end {
            out.push(Violation::at(ViolationCode::BadRange, w[1].start));
        }
    }

    if let Some(text) = s.text() {
        let out_ok = out.iter().all(|v| v.code != ViolationCode::BadRange);
        if out_ok && strip_ws(text) != strip_ws(&s.surface_units().concat()) {
            out.push(Violation::sentence(ViolationCode::TextMismatch));
        }
    }

    let with_head = s.tokens.iter().filter(|t| t.head.is_some()).count();
    if with_head == 0 {
        return out;
    }
    if with_head != n {
        let first = s.tokens.iter().find(|t| t.head.is_none()).map(|t| t.id);
        out.push(Violation {
            code: ViolationCode::PartialHeads,
            token: first,
        });
        return out;
    }
    if out
        .iter()
        .any(|v| matches!(v.code, ViolationCode::NonContiguousId { .. }))
    {
        return out;
    }

    let heads: Vec<usize> = s.tokens.iter().map(|t| t.head.unwrap_or(0)).collect();
    let mut usable = vec![true; n + 1];
    for (i, &h) in heads.iter().enumerate() {
        let id = i + 1;
        if h > n {
            out.push(Violation::at(ViolationCode::HeadOutOfRange(h), id));
            usable[id] = false;
        } else if h == id {
            out.push(Violation::at(ViolationCode::SelfLoop, id));
            usable[id] = false;
        }
    }

    let roots: Vec<usize> = (1..=n).filter(|&id| heads[id - 1] == 0).collect();
    match roots.len() {
        0 => out.push(Violation::sentence(ViolationCode::NoRoot)),
        1 => {
            if s.tokens[roots[0] - 1].deprel() != "root" {
                out.push(Violation::at(ViolationCode::RootLabel, roots[0]));
            }
        }
        _ => out.push(Violation::at(ViolationCode::MultipleRoots, roots[1])),
    }

    // Cycle detection: follow head pointers with a colouring walk.
    let mut state = vec![0u8; n + 1]; // 0 unvisited, 1 on path, 2 done
    state[0] = 2;
    let mut reported: HashSet<usize> = HashSet::new();
    for start in 1..=n {
        if state[start] != 0 {
            continue;
        }
        let mut path = Vec::new();
        let mut cur = start;
        loop {
            if !usable[cur] {
                break;
            }
            match state[cur] {
                2 => break,
                1 => {
                    let pos = path.iter().position(|&p| p == cur).unwrap_or(0);
                    let mut cyc: Vec<usize> = path[pos..].to_vec();
                    cyc.sort_unstable();
                    if reported.insert(cyc[0]) {
                        out.push(Violation::at(ViolationCode::Cycle, cyc[0]));
                    }
                    break;
                }
                _ => {
                    state[cur] = 1;
                    path.push(cur);
                    cur = heads[cur - 1];
                }
            }
        }
        for p in path {
            state[p] = 2;
        }
    }
    out
}

/// Members of the cycle that `token` lies on, sorted.
fn cycle_members(s: &Sentence, token: usize) -> Vec<usize> {
    let n = s.tokens.len();
    let mut members = vec![token];
    let mut cur = s.tokens[token - 1].head.unwrap_or(0);
    while cur != token && cur != 0 && cur <= n && members.len() <= n {
        members.push(cur);
        cur = s.tokens[cur - 1].head.unwrap_or(0);
    }
    members.sort_unstable();
    members
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConlluError {
    #[error("line {line}: expected 10 tab-separated columns, found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: invalid token id `{value}`")]
    BadId { line: usize, value: String },
    #[error("line {line}: empty nodes are not supported (`{value}`)")]
    EmptyNode { line: usize, value: String },
    #[error("line {line}: non-integer head `{value}`")]
    BadHead { line: usize, value: String },
    #[error("line {line}: unknown UPOS tag `{value}`")]
    BadUpos { line: usize, value: String },
    #[error("line {line}: expected token id {expected}, found {found}")]
    NonContiguous {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: invalid multiword range `{value}`")]
    BadRange { line: usize, value: String },
    #[error("line {line}: range surface `{surface}` does not match its words")]
    RangeMismatch { line: usize, surface: String },
    #[error("line {line}: head {head} of token {id} is out of range")]
    HeadOutOfRange { line: usize, id: usize, head: usize },
    #[error("line {line}: token {id} is its own head")]
    SelfLoop { line: usize, id: usize },
    #[error("line {line}: cycle among tokens {ids:?}")]
    Cycle { line: usize, ids: Vec<usize> },
    #[error("line {line}: sentence has no root")]
    NoRoot { line: usize },
    #[error("line {line}: multiple roots (tokens {ids:?})")]
    MultipleRoots { line: usize, ids: Vec<usize> },
    #[error("line {line}: root token {id} has deprel `{deprel}`, expected `root`")]
    RootLabel {
        line: usize,
        id: usize,
        deprel: String,
    },
    #[error("line {line}: HEAD must be set on every token or on none")]
    PartialHeads { line: usize },
    #[error("line {line}: `# text` does not match the token forms")]
    TextMismatch { line: usize },
    #[error("line {line}: duplicate sent_id `{id}`")]
    DuplicateSentId { line: usize, id: String },
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ParseOptions {
    /// Reattach every root after the first to the first root with
    /// `parataxis` instead of rejecting the sentence.
    pub allow_multi_root: bool,
}

/// Parses a CoNLL-U document with default (strict) options.
pub fn parse_conllu(text: &str) -> Result<Treebank, ConlluError> {
    parse_conllu_with(text, ParseOptions::default())
}

pub fn parse_conllu_with(text: &str, opts: ParseOptions) -> Result<Treebank, ConlluError> {
    let mut sentences = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();
    let mut builder = SentenceBuilder::default();

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.strip_suffix('\r').unwrap_or(raw_line);
        if line.trim().is_empty() {
            if let Some(s) = builder.finish(opts)? {
                check_unique(&s, &mut seen_ids, builder.last_start)?;
                sentences.push(s);
            }
            continue;
        }
        builder.push_line(line, line_no)?;
    }
    if let Some(s) = builder.finish(opts)? {
        check_unique(&s, &mut seen_ids, builder.last_start)?;
        sentences.push(s);
    }
    Ok(Treebank::new(sentences))
}

fn check_unique(s: &Sentence, seen: &mut HashSet<String>, line: usize) -> Result<(), ConlluError> {
    if let Some(id) = s.sent_id() {
        if !seen.insert(id.to_owned()) {
            return Err(ConlluError::DuplicateSentId {
                line,
                id: id.to_owned(),
            });
        }
    }
    Ok(())
}

#[derive(Default)]
struct SentenceBuilder {
    sentence: Sentence,
    token_lines: Vec<usize>,
    range_lines: Vec<usize>,
    start: Option<usize>,
    last_start: usize,
}

fn underscore_none(s: &str) -> Option<String> {
    (s != "_").then(|| s.to_owned())
}

impl SentenceBuilder {
    fn push_line(&mut self, line: &str, line_no: usize) -> Result<(), ConlluError> {
        self.start.get_or_insert(line_no);
        if let Some(comment) = line.strip_prefix('#') {
            self.sentence.comments.push(comment.to_owned());
            return Ok(());
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(ConlluError::ColumnCount {
                line: line_no,
                found: cols.len(),
            });
        }
        let id = cols[0];
        if id.contains('.') {
            return Err(ConlluError::EmptyNode {
                line: line_no,
                value: id.to_owned(),
            });
        }
        if let Some((a, b)) = id.split_once('-') {
            let bad = || ConlluError::BadRange {
                line: line_no,
                value: id.to_owned(),
            };
            let start: usize = a.parse().map_err(|_| bad())?;
            let end: usize = b.parse().map_err(|_| bad())?;
            if start == 0 || start >= end || start != self.sentence.tokens.len() + 1 {
                return Err(bad());
            }
            let mut range = MultiwordRange::new(start, end, cols[1]);
            range.misc = cols[9].to_owned();
            self.sentence.ranges.push(range);
            self.range_lines.push(line_no);
            return Ok(());
        }
        let id: usize = id.parse().map_err(|_| ConlluError::BadId {
            line: line_no,
            value: id.to_owned(),
        })?;
        let expected = self.sentence.tokens.len() + 1;
        if id != expected {
            return Err(ConlluError::NonContiguous {
                line: line_no,
                expected,
                found: id,
            });
        }
        let upos = match cols[3] {
            "_" => None,
            tag => Some(tag.parse::<Upos>().map_err(|_| ConlluError::BadUpos {
                line: line_no,
                value: tag.to_owned(),
            })?),
        };
        let head = match cols[6] {
            "_" => None,
            h => Some(h.parse::<usize>().map_err(|_| ConlluError::BadHead {
                line: line_no,
                value: h.to_owned(),
            })?),
        };
        self.sentence.tokens.push(Token {
            id,
            form: cols[1].to_owned(),
            lemma: cols[2].to_owned(),
            upos,
            xpos: cols[4].to_owned(),
            feats: cols[5].to_owned(),
            head,
            deprel: underscore_none(cols[7]),
            deps: cols[8].to_owned(),
            misc: cols[9].to_owned(),
        });
        self.token_lines.push(line_no);
        Ok(())
    }

    fn finish(&mut self, opts: ParseOptions) -> Result<Option<Sentence>, ConlluError> {
        let Some(start) = self.start.take() else {
            return Ok(None);
        };
        self.last_start = start;
        let mut sentence = std::mem::take(&mut self.sentence);
        let token_lines = std::mem::take(&mut self.token_lines);
        let range_lines = std::mem::take(&mut self.range_lines);
        if sentence.tokens.is_empty() {
            // A comment-only block carries no sentence.
            return Ok(None);
        }

        if opts.allow_multi_root && sentence.has_heads() {
            let mut roots = sentence.tokens.iter().filter(|t| t.head == Some(0)).map(|t| t.id);
            if let Some(first) = roots.next() {
                let extra: Vec<usize> = roots.collect();
                for id in extra {
                    let t = &mut sentence.tokens[id - 1];
                    t.head = Some(first);
                    t.deprel = Some("parataxis".into());
                }
            }
        }

        let line_of = |id: Option<usize>| {
            id.and_then(|i| token_lines.get(i.wrapping_sub(1)).copied())
                .unwrap_or(start)
        };
        if let Some(v) = validate_sentence(&sentence).into_iter().next() {
            let line = line_of(v.token);
            let err = match v.code {
                ViolationCode::NonContiguousId { expected } => ConlluError::NonContiguous {
                    line,
                    expected,
                    found: v.token.unwrap_or(0),
                },
                ViolationCode::SelfLoop => ConlluError::SelfLoop {
                    line,
                    id: v.token.unwrap_or(0),
                },
                ViolationCode::HeadOutOfRange(head) => ConlluError::HeadOutOfRange {
                    line,
                    id: v.token.unwrap_or(0),
                    head,
                },
                ViolationCode::PartialHeads => ConlluError::PartialHeads { line },
                ViolationCode::NoRoot => ConlluError::NoRoot { line: start },
                ViolationCode::MultipleRoots => ConlluError::MultipleRoots {
                    line,
                    ids: sentence
                        .tokens
                        .iter()
                        .filter(|t| t.head == Some(0))
                        .map(|t| t.id)
                        .collect(),
                },
                ViolationCode::RootLabel => {
                    let id = v.token.unwrap_or(0);
                    ConlluError::RootLabel {
                        line,
                        id,
                        deprel: sentence.tokens[id - 1].deprel().to_owned(),
                    }
                }
                ViolationCode::Cycle => ConlluError::Cycle {
                    line,
                    ids: cycle_members(&sentence, v.token.unwrap_or(1)),
                },
                ViolationCode::BadRange | ViolationCode::RangeSurfaceMismatch => {
                    let pos = sentence
                        .ranges
                        .iter()
                        .position(|r| Some(r.start) == v.token)
                        .unwrap_or(0);
                    let r = &sentence.ranges[pos];
                    let line = range_lines.get(pos).copied().unwrap_or(start);
                    if v.code == ViolationCode::BadRange {
                        ConlluError::BadRange {
                            line,
                            value: format!("{}-{}", r.start, r.end),
                        }
                    } else {
                        ConlluError::RangeMismatch {
                            line,
                            surface: r.surface_form.clone(),
                        }
                    }
                }
                ViolationCode::TextMismatch => ConlluError::TextMismatch { line: start },
            };
            return Err(err);
        }
        Ok(Some(sentence))
    }
}

fn opt_col(v: &Option<String>) -> &str {
    v.as_deref().unwrap_or("_")
}

/// Writes one sentence block, including its terminating blank line.
pub fn write_sentence(s: &Sentence, out: &mut String) {
    use std::fmt::Write;
    for c in &s.comments {
        out.push('#');
        out.push_str(c);
        out.push('\n');
    }
    for t in &s.tokens {
        for r in s.ranges.iter().filter(|r| r.start == t.id) {
            let _ = writeln!(
                out,
                "{}-{}\t{}\t_\t_\t_\t_\t_\t_\t_\t{}",
                r.start, r.end, r.surface_form, r.misc
            );
        }
        let upos = t.upos.map(Upos::as_str).unwrap_or("_");
        let head = t.head.map(|h| h.to_string());
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            t.id,
            t.form,
            t.lemma,
            upos,
            t.xpos,
            t.feats,
            opt_col(&head),
            opt_col(&t.deprel),
            t.deps,
            t.misc
        );
    }
    out.push('\n');
}

pub fn write_conllu(tb: &Treebank) -> String {
    let mut out = String::new();
    for s in &tb.sentences {
        write_sentence(s, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(id: usize, form: &str, upos: Upos, head: usize, rel: &str) -> Token {
        Token::new(id, form).with_upos(upos).with_head(head, rel)
    }

    #[test]
    fn minimal_sentence() {
        let text = "1\tHi\t_\tINTJ\t_\t_\t0\troot\t_\t_\n2\t!\t_\tPUNCT\t_\t_\t1\tpunct\t_\t_\n\n";
        let tb = parse_conllu(text).unwrap();
        assert_eq!(tb.len(), 1);
        let s = &tb.sentences[0];
        assert_eq!(s.len(), 2);
        assert_eq!(s.tokens[0].head, Some(0));
        assert_eq!(s.tokens[1].head, Some(1));
        assert_eq!(write_conllu(&tb), text);
    }

    #[test]
    fn two_cycle_names_both_ids() {
        let text = "1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n\
                    2\tb\t_\tX\t_\t_\t3\tdep\t_\t_\n\
                    3\tc\t_\tX\t_\t_\t2\tdep\t_\t_\n";
        match parse_conllu(text) {
            Err(ConlluError::Cycle { ids, line }) => {
                assert_eq!(ids, vec![2, 3]);
                assert_eq!(line, 2);
            }
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn column_count_reports_line() {
        let text = "# sent_id = 1\n1\ta\t_\tX\n";
        assert_eq!(
            parse_conllu(text),
            Err(ConlluError::ColumnCount { line: 2, found: 4 })
        );
    }

    #[test]
    fn non_integer_head() {
        let text = "1\ta\t_\tX\t_\t_\tzero\troot\t_\t_\n";
        assert!(matches!(
            parse_conllu(text),
            Err(ConlluError::BadHead { line: 1, .. })
        ));
    }

    #[test]
    fn roots_are_checked() {
        let none = "1\ta\t_\tX\t_\t_\t2\tdep\t_\t_\n2\tb\t_\tX\t_\t_\t1\tdep\t_\t_\n";
        assert!(matches!(parse_conllu(none), Err(ConlluError::NoRoot { .. })));
        let two = "1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n2\tb\t_\tX\t_\t_\t0\troot\t_\t_\n";
        assert!(matches!(
            parse_conllu(two),
            Err(ConlluError::MultipleRoots { line: 2, ref ids }) if ids == &[1, 2]
        ));
    }

    #[test]
    fn multi_root_flag_reattaches() {
        let two = "1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n2\tb\t_\tX\t_\t_\t0\troot\t_\t_\n";
        let tb = parse_conllu_with(
            two,
            ParseOptions {
                allow_multi_root: true,
            },
        )
        .unwrap();
        let t = &tb.sentences[0].tokens[1];
        assert_eq!(t.head, Some(1));
        assert_eq!(t.deprel(), "parataxis");
    }

    #[test]
    fn empty_nodes_rejected() {
        let text = "1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n1.1\tb\t_\tX\t_\t_\t_\t_\t_\t_\n";
        assert!(matches!(parse_conllu(text), Err(ConlluError::EmptyNode { .. })));
    }

    #[test]
    fn ranges_round_trip() {
        let text = "# sent_id = t1\n# text = its gonna be\n\
                    1-2\tits\t_\t_\t_\t_\t_\t_\t_\t_\n\
                    1\tit\t_\tPRON\t_\t_\t3\tnsubj\t_\t_\n\
                    2\ts\t_\tAUX\t_\t_\t3\tcop\t_\t_\n\
                    3-4\tgonna\t_\t_\t_\t_\t_\t_\t_\t_\n\
                    3\tgon\t_\tVERB\t_\t_\t0\troot\t_\t_\n\
                    4\tna\t_\tPART\t_\t_\t5\tmark\t_\t_\n\
                    5\tbe\t_\tAUX\t_\t_\t3\txcomp\t_\t_\n\n";
        let tb = parse_conllu(text).unwrap();
        let s = &tb.sentences[0];
        assert_eq!(s.ranges.len(), 2);
        assert_eq!(s.surface_units(), vec!["its", "gonna", "be"]);
        assert_eq!(s.sent_id(), Some("t1"));
        assert_eq!(write_conllu(&tb), text);
    }

    #[test]
    fn text_mismatch_is_error() {
        let text = "# text = hello\n1\thi\t_\tX\t_\t_\t0\troot\t_\t_\n";
        assert!(matches!(
            parse_conllu(text),
            Err(ConlluError::TextMismatch { line: 1 })
        ));
    }

    #[test]
    fn duplicate_sent_ids() {
        let block = "# sent_id = a\n1\thi\t_\tX\t_\t_\t0\troot\t_\t_\n\n";
        let text = format!("{block}{block}");
        assert!(matches!(
            parse_conllu(&text),
            Err(ConlluError::DuplicateSentId { line: 4, .. })
        ));
    }

    #[test]
    fn unparsed_sentences_accepted() {
        let text = "1\thi\t_\t_\t_\t_\t_\t_\t_\t_\n2\tyou\t_\t_\t_\t_\t_\t_\t_\t_\n\n";
        let tb = parse_conllu(text).unwrap();
        assert!(!tb.sentences[0].has_heads());
        assert_eq!(write_conllu(&tb), text);
    }

    #[test]
    fn empty_treebank_writes_nothing() {
        assert_eq!(write_conllu(&Treebank::default()), "");
    }

    #[test]
    fn one_sentence_ends_with_blank_line() {
        let s = Sentence::new(vec![tok(1, "x", Upos::X, 0, "root")]);
        let out = write_conllu(&Treebank::new(vec![s]));
        assert!(out.ends_with("\n\n"));
    }

    #[test]
    fn validate_examples() {
        let good = Sentence::new(vec![
            tok(1, "a", Upos::X, 0, "root"),
            tok(2, "b", Upos::X, 1, "dep"),
        ]);
        assert!(validate_sentence(&good).is_empty());

        let two_roots = Sentence::new(vec![
            tok(1, "a", Upos::X, 0, "root"),
            tok(2, "b", Upos::X, 0, "root"),
        ]);
        let v = validate_sentence(&two_roots);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].code, ViolationCode::MultipleRoots);

        let oob = Sentence::new(vec![
            tok(1, "a", Upos::X, 0, "root"),
            tok(2, "b", Upos::X, 5, "dep"),
            tok(3, "c", Upos::X, 1, "dep"),
        ]);
        let v = validate_sentence(&oob);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].code, ViolationCode::HeadOutOfRange(5));
        assert_eq!(v[0].token, Some(2));
    }

    #[test]
    fn meta_helpers() {
        let mut s = Sentence::default();
        s.set_meta("sent_id", "x1");
        s.set_meta("text", "a b");
        s.set_meta("sent_id", "x2");
        assert_eq!(s.sent_id(), Some("x2"));
        assert_eq!(s.comments, vec![" sent_id = x2", " text = a b"]);
    }

    #[test]
    fn misc_helpers() {
        let mut t = Token::new(1, "a");
        t.push_misc("GoldUPOS=NOUN");
        t.push_misc("SpaceAfter=No");
        assert_eq!(t.misc, "GoldUPOS=NOUN|SpaceAfter=No");
        assert_eq!(t.misc_value("SpaceAfter"), Some("No"));
    }
}
