//! Annotation-convention checks for tweet treebanks, anonymization and
//! non-syntactic token statistics.
//!
//! A token is *non-syntactic* when it belongs to one of the tweet-specific
//! classes (emoticon, retweet marker, at-mention, hashtag, URL, truncated
//! word) and carries the relation `discourse` or `list`. The checks only
//! judge whether such an annotation is internally consistent; they never
//! require a token to be non-syntactic.
//!
//! ```
//! use twparse::lint::anonymize;
//! assert_eq!(anonymize("hi @bob see http://x.co"), "hi @USER see URL");
//! ```

use std::collections::HashSet;
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::Serialize;

use crate::conllu::{Sentence, Treebank, Upos};
use crate::util::par_map;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct LintRule {
    pub code: &'static str,
    pub severity: Severity,
    pub description: &'static str,
}

pub const URL_LIST: LintRule = LintRule {
    code: "url-list",
    severity: Severity::Error,
    description: "non-syntactic URLs are labelled list",
};
pub const NONSYN_DISCOURSE: LintRule = LintRule {
    code: "nonsyn-discourse",
    severity: Severity::Error,
    description: "non-syntactic tokens other than URLs are labelled discourse",
};
pub const NONSYN_POS: LintRule = LintRule {
    code: "nonsyn-pos",
    severity: Severity::Error,
    description: "non-syntactic emoticons are tagged SYM, other non-syntactic tokens X",
};
pub const RETWEET: LintRule = LintRule {
    code: "retweet",
    severity: Severity::Error,
    description: "RT and its at-mention are X; the mention attaches to RT as discourse, a following colon as punct",
};
pub const VOCATIVE: LintRule = LintRule {
    code: "vocative",
    severity: Severity::Error,
    description: "vocative at-mentions are tagged PROPN",
};
pub const ALL_NONSYN: LintRule = LintRule {
    code: "all-nonsyn",
    severity: Severity::Error,
    description: "a sentence of only non-syntactic tokens attaches everything to its first token",
};
pub const CONTRACTION: LintRule = LintRule {
    code: "contraction",
    severity: Severity::Warning,
    description: "contractions are split into syntactic words",
};
pub const GOESWITH: LintRule = LintRule {
    code: "goeswith",
    severity: Severity::Error,
    description: "goeswith dependents follow their head",
};

/// Every rule, in report order. Codes are unique.
pub const RULES: [LintRule; 8] = [
    URL_LIST,
    NONSYN_DISCOURSE,
    NONSYN_POS,
    RETWEET,
    VOCATIVE,
    ALL_NONSYN,
    CONTRACTION,
    GOESWITH,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenClass {
    Emoticon,
    RtMarker,
    AtMention,
    Hashtag,
    Url,
    TruncatedWord,
    Plain,
}

impl TokenClass {
    pub fn name(self) -> &'static str {
        match self {
            TokenClass::Emoticon => "emoticons",
            TokenClass::RtMarker => "RT",
            TokenClass::AtMention => "at-mentions",
            TokenClass::Hashtag => "hashtag",
            TokenClass::Url => "URL",
            TokenClass::TruncatedWord => "truncated words",
            TokenClass::Plain => "plain",
        }
    }
}

static MENTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^@\w+$").unwrap());
static HASHTAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^#\w+$").unwrap());
static URL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)^(?:https?://\S+|www\.\S+|URL|[a-z0-9-]+(?:\.[a-z0-9-]+)*\.(?:com|org|net|edu|gov|ly|co|io|me|gl|be|us|uk|tv|fm)(?:/\S*)?)$",
    )
    .unwrap()
});
static MENTION_IN_TEXT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(^|[^\w@])@\w+").unwrap());
static URL_IN_TEXT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(?:https?://|www\.)\S+").unwrap());

const EMOTICONS: &[&str] = &[
    ":)", ":-)", ":))", ":(", ":-(", ":((", ":D", ":-D", ";)", ";-)", ";D", ":P", ":-P", ":p", ":-p", ";P", ";p",
    ":/", ":-/", ":\\", ":'(", ":')", ":|", ":-|", ":o", ":O", ":-O", ":*", ":-*", "<3", "<33", "</3", "xD", "XD",
    "xd", "^_^", "^^", "-_-", "T_T", ";_;", "=)", "=(", "=D", "B)", "8)", "o_O", "O_o",
];
const TRUNCATION_MARKS: &[&str] = &["…", "...", "..", "...."];
const NON_SYNTACTIC_RELS: &[&str] = &["discourse", "list"];

fn is_emoji(c: char) -> bool {
    matches!(c as u32,
        0x1F000..=0x1FAFF | 0x2600..=0x27BF | 0x2B00..=0x2BFF | 0x2300..=0x23FF)
}

fn is_emoticon(form: &str) -> bool {
    if EMOTICONS.contains(&form) {
        return true;
    }
    let mut any = false;
    for c in form.chars() {
        match c {
            '\u{FE0F}' | '\u{200D}' => {}
            c if is_emoji(c) => any = true,
            _ => return false,
        }
    }
    any
}

/// Class of `form` from its surface alone; truncation needs context.
pub fn classify_form(form: &str) -> TokenClass {
    if form == "RT" || form == "rt" {
        TokenClass::RtMarker
    } else if MENTION.is_match(form) {
        TokenClass::AtMention
    } else if HASHTAG.is_match(form) {
        TokenClass::Hashtag
    } else if URL.is_match(form) {
        TokenClass::Url
    } else if is_emoticon(form) {
        TokenClass::Emoticon
    } else {
        TokenClass::Plain
    }
}

/// Classes of every token of `s`. The final word is a truncated word when
/// it ends in an ellipsis, or when it is alphanumeric and only a
/// standalone truncation mark follows it.
pub fn classify_sentence(s: &Sentence) -> Vec<TokenClass> {
    let mut classes: Vec<TokenClass> = s.tokens.iter().map(|t| classify_form(&t.form)).collect();
    let forms: Vec<&str> = s.tokens.iter().map(|t| t.form.as_str()).collect();
    let n = forms.len();
    if n == 0 {
        return classes;
    }
    let last = forms[n - 1];
    if classes[n - 1] == TokenClass::Plain
        && last.ends_with('…')
        && last.chars().any(char::is_alphanumeric)
    {
        classes[n - 1] = TokenClass::TruncatedWord;
    } else if n >= 2
        && TRUNCATION_MARKS.contains(&last)
        && classes[n - 2] == TokenClass::Plain
        && forms[n - 2].chars().all(char::is_alphanumeric)
    {
        classes[n - 2] = TokenClass::TruncatedWord;
    }
    classes
}

/// Replaces at-mentions with `@USER` and URLs with `URL`. Idempotent, and
/// every whitespace-separated chunk stays one chunk.
pub fn anonymize(raw: &str) -> String {
    let urls = URL_IN_TEXT.replace_all(raw, "URL");
    MENTION_IN_TEXT.replace_all(&urls, "${1}@USER").into_owned()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LintViolation {
    pub rule: LintRule,
    /// ID of the offending token.
    pub token: usize,
    pub message: String,
}

impl LintViolation {
    fn new(rule: LintRule, token: usize, message: impl Into<String>) -> LintViolation {
        LintViolation {
            rule,
            token,
            message: message.into(),
        }
    }

    /// `sent_id<TAB>token_id<TAB>code<TAB>message`
    pub fn report_line(&self, sent_id: &str) -> String {
        format!("{sent_id}\t{}\t{}\t{}", self.token, self.rule.code, self.message)
    }
}

fn upos_name(u: Option<Upos>) -> &'static str {
    u.map_or("_", Upos::as_str)
}

/// Retweet constructions as (RT index, mention index, colon index).
fn retweet_constructions(s: &Sentence, classes: &[TokenClass]) -> Vec<(usize, usize, Option<usize>)> {
    let mut out = Vec::new();
    for i in 0..classes.len().saturating_sub(1) {
        if classes[i] != TokenClass::RtMarker || classes[i + 1] != TokenClass::AtMention {
            continue;
        }
        let rt = &s.tokens[i];
        let mention = &s.tokens[i + 1];
        let occupied = NON_SYNTACTIC_RELS.contains(&rt.deprel()) || mention.head == Some(rt.id);
        if occupied {
            let colon = (i + 2 < s.tokens.len() && s.tokens[i + 2].form == ":").then_some(i + 2);
            out.push((i, i + 1, colon));
        }
    }
    out
}

/// Violations of the annotation conventions in `s`, ordered by token.
pub fn lint_sentence(s: &Sentence) -> Vec<LintViolation> {
    let classes = classify_sentence(s);
    let mut out = Vec::new();

    let constructions = retweet_constructions(s, &classes);
    let mut in_construction = HashSet::new();
    for &(rt, mention, colon) in &constructions {
        in_construction.extend([rt, mention]);
        in_construction.extend(colon);
        let (rt, mention) = (&s.tokens[rt], &s.tokens[mention]);
        if rt.upos != Some(Upos::X) {
            out.push(LintViolation::new(RETWEET, rt.id, format!("RT tagged {}, expected X", upos_name(rt.upos))));
        }
        if rt.deprel() != "discourse" {
            out.push(LintViolation::new(RETWEET, rt.id, format!("RT labelled {}, expected discourse", rt.deprel())));
        }
        if mention.upos != Some(Upos::X) {
            out.push(LintViolation::new(
                RETWEET,
                mention.id,
                format!("retweeted at-mention tagged {}, expected X", upos_name(mention.upos)),
            ));
        }
        if mention.head != Some(rt.id) || mention.deprel() != "discourse" {
            out.push(LintViolation::new(RETWEET, mention.id, "retweeted at-mention should attach to RT as discourse"));
        }
        if let Some(c) = colon {
            let colon = &s.tokens[c];
            if colon.head != Some(rt.id) || colon.deprel() != "punct" {
                out.push(LintViolation::new(RETWEET, colon.id, "retweet colon should attach to RT as punct"));
            }
        }
    }

    for (i, (t, &class)) in s.tokens.iter().zip(&classes).enumerate() {
        let rel = t.deprel();
        let non_syntactic = class != TokenClass::Plain && NON_SYNTACTIC_RELS.contains(&rel);
        if non_syntactic && !in_construction.contains(&i) {
            if class == TokenClass::Url && rel != "list" {
                out.push(LintViolation::new(URL_LIST, t.id, format!("URL labelled {rel}, expected list")));
            }
            if class != TokenClass::Url && rel != "discourse" {
                out.push(LintViolation::new(
                    NONSYN_DISCOURSE,
                    t.id,
                    format!("{} labelled {rel}, expected discourse", class.name()),
                ));
            }
            let want = if class == TokenClass::Emoticon { Upos::Sym } else { Upos::X };
            if t.upos != Some(want) {
                out.push(LintViolation::new(
                    NONSYN_POS,
                    t.id,
                    format!("non-syntactic {} tagged {}, expected {}", class.name(), upos_name(t.upos), want.as_str()),
                ));
            }
        }
        if class == TokenClass::AtMention && rel == "vocative" && t.upos != Some(Upos::Propn) {
            out.push(LintViolation::new(
                VOCATIVE,
                t.id,
                format!("vocative at-mention tagged {}, expected PROPN", upos_name(t.upos)),
            ));
        }
        let lower = t.form.to_lowercase();
        let in_range = s.ranges.iter().any(|r| r.contains(t.id));
        if !in_range && matches!(lower.as_str(), "gonna" | "wanna" | "gotta") {
            out.push(LintViolation::new(CONTRACTION, t.id, format!("unsplit contraction `{}`", t.form)));
        }
        if !in_range && lower == "its" && t.upos != Some(Upos::Pron) && rel != "nmod:poss" {
            out.push(LintViolation::new(CONTRACTION, t.id, "`its` used as it + is should be split"));
        }
        if rel == "goeswith" && t.head.is_some_and(|h| h >= t.id) {
            out.push(LintViolation::new(GOESWITH, t.id, "goeswith dependent precedes its head"));
        }
    }

    out.extend(all_non_syntactic(s, &classes));
    out.sort_by_key(|v| v.token);
    out
}

fn all_non_syntactic(s: &Sentence, classes: &[TokenClass]) -> Vec<LintViolation> {
    let Some(first) = s.tokens.first() else {
        return Vec::new();
    };
    let annotated = s.tokens.iter().zip(classes).all(|(t, &c)| {
        t.upos == Some(Upos::Punct) || (c != TokenClass::Plain && (t.id == first.id || NON_SYNTACTIC_RELS.contains(&t.deprel())))
    });
    let any_class = classes.iter().any(|&c| c != TokenClass::Plain);
    if !annotated || !any_class || s.len() < 2 {
        return Vec::new();
    }
    let mut out = Vec::new();
    if first.head != Some(0) {
        out.push(LintViolation::new(ALL_NONSYN, first.id, "first token of an all non-syntactic sentence should be the root"));
    }
    for t in &s.tokens[1..] {
        if t.head != Some(first.id) {
            out.push(LintViolation::new(ALL_NONSYN, t.id, format!("should attach to the first token ({})", first.id)));
        }
    }
    out
}

/// Violations that are known and tolerated, keyed like report lines.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Allowlist {
    entries: HashSet<(String, usize, String)>,
}

impl Allowlist {
    /// Reads `sent_id<TAB>token_id<TAB>code` lines; any further fields
    /// (such as a message) are ignored, so a lint report is an allowlist.
    pub fn parse(text: &str) -> Result<Allowlist, String> {
        let mut entries = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            let (Some(sid), Some(tok), Some(code)) = (fields.next(), fields.next(), fields.next()) else {
                return Err(format!("allowlist line {}: expected sent_id, token and code", i + 1));
            };
            let tok = tok
                .parse()
                .map_err(|_| format!("allowlist line {}: bad token id `{tok}`", i + 1))?;
            entries.insert((sid.to_owned(), tok, code.to_owned()));
        }
        Ok(Allowlist { entries })
    }

    pub fn allows(&self, sent_id: &str, v: &LintViolation) -> bool {
        self.entries
            .contains(&(sent_id.to_owned(), v.token, v.rule.code.to_owned()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LintReport {
    /// (sent_id, violation) in corpus order.
    pub violations: Vec<(String, LintViolation)>,
    pub errors: usize,
    pub warnings: usize,
    pub allowed: usize,
}

impl LintReport {
    pub fn lines(&self) -> impl Iterator<Item = String> + '_ {
        self.violations.iter().map(|(sid, v)| v.report_line(sid))
    }

    /// True when no error outside the allowlist remains.
    pub fn passes(&self) -> bool {
        self.errors == 0
    }
}

/// Sentence identifier used in reports: `sent_id`, else the 1-based position.
pub fn report_id(s: &Sentence, index: usize) -> String {
    s.sent_id().map_or_else(|| (index + 1).to_string(), str::to_owned)
}

pub fn lint_treebank(tb: &Treebank, allow: &Allowlist, jobs: usize) -> LintReport {
    let indexed: Vec<(usize, &Sentence)> = tb.sentences.iter().enumerate().collect();
    let found = par_map(&indexed, jobs, |&(i, s)| (report_id(s, i), lint_sentence(s)));
    let mut report = LintReport::default();
    for (sid, vs) in found {
        for v in vs {
            if allow.allows(&sid, &v) {
                report.allowed += 1;
                continue;
            }
            match v.rule.severity {
                Severity::Error => report.errors += 1,
                Severity::Warning => report.warnings += 1,
            }
            report.violations.push((sid.clone(), v));
        }
    }
    report
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClassShare {
    pub class: TokenClass,
    /// Percent of all tokens.
    pub syntactic: f64,
    pub non_syntactic: f64,
}

/// Class shares of all tokens, split by syntactic use.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorpusStats {
    pub tokens: usize,
    /// Emoticons, RT, hashtags, URLs and truncated words, in that order.
    pub rows: Vec<ClassShare>,
    /// Sum over `rows`.
    pub total: ClassShare,
    /// At-mentions are reported separately and excluded from the total.
    pub at_mentions: ClassShare,
}

const TABLE_CLASSES: [TokenClass; 5] = [
    TokenClass::Emoticon,
    TokenClass::RtMarker,
    TokenClass::Hashtag,
    TokenClass::Url,
    TokenClass::TruncatedWord,
];

pub fn corpus_stats(tb: &Treebank) -> CorpusStats {
    let mut counts = std::collections::HashMap::<(TokenClass, bool), usize>::new();
    let mut tokens = 0;
    for s in &tb.sentences {
        tokens += s.len();
        for (t, c) in s.tokens.iter().zip(classify_sentence(s)) {
            if c != TokenClass::Plain {
                *counts.entry((c, NON_SYNTACTIC_RELS.contains(&t.deprel()))).or_default() += 1;
            }
        }
    }
    let pct = |n: usize| if tokens == 0 { 0.0 } else { 100.0 * n as f64 / tokens as f64 };
    let share = |class| ClassShare {
        class,
        syntactic: pct(counts.get(&(class, false)).copied().unwrap_or(0)),
        non_syntactic: pct(counts.get(&(class, true)).copied().unwrap_or(0)),
    };
    let rows: Vec<ClassShare> = TABLE_CLASSES.iter().map(|&c| share(c)).collect();
    let total = ClassShare {
        class: TokenClass::Plain,
        syntactic: rows.iter().map(|r| r.syntactic).sum(),
        non_syntactic: rows.iter().map(|r| r.non_syntactic).sum(),
    };
    CorpusStats {
        tokens,
        rows,
        total,
        at_mentions: share(TokenClass::AtMention),
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<16} {:>13} {:>17}", "", "syntactic (%)", "non-syntactic (%)")?;
        for r in &self.rows {
            writeln!(f, "{:<16} {:>13.2} {:>17.2}", r.class.name(), r.syntactic, r.non_syntactic)?;
        }
        writeln!(f, "{:<16} {:>13.2} {:>17.2}", "total", self.total.syntactic, self.total.non_syntactic)?;
        writeln!(
            f,
            "{:<16} {:>13.2} {:>17.2}",
            "at-mentions", self.at_mentions.syntactic, self.at_mentions.non_syntactic
        )?;
        write!(f, "tokens: {}", self.tokens)
    }
}
