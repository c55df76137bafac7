//! Character-span alignment of token forms against raw text.
//!
//! Offsets are in characters (not bytes). Forms are matched left to right,
//! skipping only whitespace between them; an exact match is tried first and
//! a case-insensitive one second.

use thiserror::Error;

use crate::conllu::Sentence;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Span {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum AlignError {
    #[error("cannot align token `{token}` at character {position}")]
    Unmatched { token: String, position: usize },
    #[error("text left over after the last token: `{0}`")]
    Trailing(String),
}

fn chars_match(raw: &[char], at: usize, form: &[char], fold: bool) -> bool {
    if at + form.len() > raw.len() {
        return false;
    }
    raw[at..at + form.len()].iter().zip(form).all(|(a, b)| {
        a == b || (fold && a.to_lowercase().eq(b.to_lowercase()))
    })
}

fn skip_ws(raw: &[char], mut at: usize) -> usize {
    while at < raw.len() && raw[at].is_whitespace() {
        at += 1;
    }
    at
}

/// Locates `form` at `at` (after optional whitespace); returns its span.
fn match_at(raw: &[char], at: usize, form: &str) -> Option<Span> {
    let start = skip_ws(raw, at);
    let f: Vec<char> = form.chars().collect();
    if f.is_empty() {
        return None;
    }
    if chars_match(raw, start, &f, false) || chars_match(raw, start, &f, true) {
        Some(Span::new(start, start + f.len()))
    } else {
        None
    }
}

/// Aligns plain forms to `raw`.
pub fn align_forms<S: AsRef<str>>(raw: &str, forms: &[S]) -> Result<Vec<Span>, AlignError> {
    let chars: Vec<char> = raw.chars().collect();
    let mut at = 0;
    let mut out = Vec::with_capacity(forms.len());
    for form in forms {
        let form = form.as_ref();
        let span = match_at(&chars, at, form).ok_or_else(|| AlignError::Unmatched {
            token: form.to_owned(),
            position: skip_ws(&chars, at),
        })?;
        at = span.end;
        out.push(span);
    }
    check_trailing(&chars, at)?;
    Ok(out)
}

fn check_trailing(chars: &[char], at: usize) -> Result<(), AlignError> {
    let rest = skip_ws(chars, at);
    if rest < chars.len() {
        return Err(AlignError::Trailing(chars[rest..].iter().collect()));
    }
    Ok(())
}

/// One span per syntactic word of `s`. Words inside a multiword range are
/// matched inside the range's surface; when their forms differ from the
/// surface (e.g. `n't` under `nt`) they are laid out by form length.
pub fn sentence_spans(raw: &str, s: &Sentence) -> Result<Vec<Span>, AlignError> {
    let chars: Vec<char> = raw.chars().collect();
    let mut at = 0;
    let mut out = Vec::with_capacity(s.len());
    let mut id = 1;
    while id <= s.len() {
        let range = s.ranges.iter().find(|r| r.start == id && r.end <= s.len());
        match range {
            None => {
                let form = &s.tokens[id - 1].form;
                let span = match_at(&chars, at, form).ok_or_else(|| AlignError::Unmatched {
                    token: form.clone(),
                    position: skip_ws(&chars, at),
                })?;
                at = span.end;
                out.push(span);
                id += 1;
            }
            Some(r) => {
                let words = &s.tokens[r.start - 1..r.end];
                let surface = match_at(&chars, at, &r.surface_form).ok_or_else(|| {
                    AlignError::Unmatched {
                        token: r.surface_form.clone(),
                        position: skip_ws(&chars, at),
                    }
                })?;
                let mut inner = Vec::with_capacity(words.len());
                let mut pos = surface.start;
                for w in words {
                    let f: Vec<char> = w.form.chars().collect();
                    if !f.is_empty()
                        && pos + f.len() <= surface.end
                        && (chars_match(&chars, pos, &f, false) || chars_match(&chars, pos, &f, true))
                    {
                        inner.push(Span::new(pos, pos + f.len()));
                        pos += f.len();
                    } else {
                        inner.clear();
                        break;
                    }
                }
                if inner.len() != words.len() || pos != surface.end {
                    inner = layout_by_length(surface, words.iter().map(|w| w.form.chars().count()));
                }
                out.extend(inner);
                at = surface.end;
                id = r.end + 1;
            }
        }
    }
    check_trailing(&chars, at)?;
    Ok(out)
}

/// Splits `surface` into consecutive non-empty spans proportional to the
/// given lengths, clamped so each word gets at least one character while
/// characters remain.
fn layout_by_length(surface: Span, lens: impl Iterator<Item = usize>) -> Vec<Span> {
    let lens: Vec<usize> = lens.collect();
    let k = lens.len();
    let mut out = Vec::with_capacity(k);
    let mut pos = surface.start;
    for (i, len) in lens.iter().enumerate() {
        let remaining_words = k - i - 1;
        let max_end = surface.end.saturating_sub(remaining_words).max(pos + 1);
        let end = if remaining_words == 0 {
            surface.end.max(pos + 1)
        } else {
            (pos + (*len).max(1)).min(max_end)
        };
        out.push(Span::new(pos, end));
        pos = end;
    }
    out
}
