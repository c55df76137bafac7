//! Labeled arc-standard transition system.
//!
//! The stack starts with the artificial root (id 0). Attaching a word to the
//! root is only possible as the very last transition, so every terminal
//! state encodes a tree with exactly one root.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conllu::{Sentence, Treebank};

pub const ROOT_LABEL: &str = "root";
const FALLBACK_LABEL: &str = "dep";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionKind {
    Shift,
    LeftArc,
    RightArc,
}

/// A transition; `label` indexes the [`ActionInventory`] label list and is
/// `None` exactly for SHIFT.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Action {
    pub kind: ActionKind,
    pub label: Option<u16>,
}

impl Action {
    pub const SHIFT: Action = Action {
        kind: ActionKind::Shift,
        label: None,
    };

    pub fn left(label: usize) -> Action {
        Action {
            kind: ActionKind::LeftArc,
            label: Some(label as u16),
        }
    }

    pub fn right(label: usize) -> Action {
        Action {
            kind: ActionKind::RightArc,
            label: Some(label as u16),
        }
    }
}

/// The closed set of actions a parser can predict: SHIFT, then one
/// LEFT_ARC and one RIGHT_ARC per dependency label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct ActionInventory {
    labels: Vec<String>,
    index: HashMap<String, usize>,
    root: usize,
}

impl From<Vec<String>> for ActionInventory {
    fn from(labels: Vec<String>) -> Self {
        ActionInventory::new(labels)
    }
}

impl From<ActionInventory> for Vec<String> {
    fn from(inv: ActionInventory) -> Self {
        inv.labels
    }
}

impl ActionInventory {
    /// Sorted, deduplicated labels; `root` and at least one other label
    /// are always present.
    pub fn new<I, S>(labels: I) -> ActionInventory
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        labels.push(ROOT_LABEL.to_owned());
        if labels.iter().all(|l| l == ROOT_LABEL) {
            labels.push(FALLBACK_LABEL.to_owned());
        }
        labels.sort();
        labels.dedup();
        let index: HashMap<String, usize> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        let root = index[ROOT_LABEL];
        ActionInventory {
            labels,
            index,
            root,
        }
    }

    /// Every deprel used in the treebank.
    pub fn from_treebank(tb: &Treebank) -> ActionInventory {
        let labels = tb
            .sentences
            .iter()
            .flat_map(|s| s.tokens.iter())
            .filter_map(|t| t.deprel.clone());
        ActionInventory::new(labels)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, id: usize) -> &str {
        &self.labels[id]
    }

    pub fn label_id(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn root_label(&self) -> usize {
        self.root
    }

    /// Number of actions.
    pub fn len(&self) -> usize {
        1 + 2 * self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, a: Action) -> usize {
        let l = a.label.map_or(0, usize::from);
        match a.kind {
            ActionKind::Shift => 0,
            ActionKind::LeftArc => 1 + l,
            ActionKind::RightArc => 1 + self.labels.len() + l,
        }
    }

    pub fn action(&self, index: usize) -> Action {
        let n = self.labels.len();
        match index {
            0 => Action::SHIFT,
            i if i <= n => Action::left(i - 1),
            i => Action::right(i - 1 - n),
        }
    }

    pub fn describe(&self, a: Action) -> String {
        match a.kind {
            ActionKind::Shift => "SHIFT".into(),
            ActionKind::LeftArc => format!("LEFT_ARC({})", self.label(a.label.unwrap_or(0).into())),
            ActionKind::RightArc => {
                format!("RIGHT_ARC({})", self.label(a.label.unwrap_or(0).into()))
            }
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum TransitionError {
    #[error("cannot parse an empty sentence")]
    EmptySentence,
    #[error("no transitions apply to a terminal state")]
    Terminal,
    #[error("state is not terminal")]
    NotTerminal,
    #[error("illegal action {0:?}")]
    Illegal(Action),
    #[error("non-projective tree: arc {first:?} crosses arc {second:?}")]
    NonProjective {
        first: (usize, usize),
        second: (usize, usize),
    },
    #[error("sentence has no gold tree")]
    MissingTree,
    #[error("label `{0}` is not in the action inventory")]
    UnknownLabel(String),
    #[error("token {0} carries label `root` but is not attached to the root")]
    MisplacedRootLabel(usize),
}

/// Stack/buffer/arcs configuration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParserState {
    n: usize,
    stack: Vec<usize>,
    /// Id of the first buffer token; the buffer is `next..=n`.
    next: usize,
    /// `heads[d] = Some((head, label))` once `d` is attached; index 0 unused.
    heads: Vec<Option<(usize, u16)>>,
    history: Vec<Action>,
}

impl ParserState {
    pub fn initial(n: usize) -> Result<ParserState, TransitionError> {
        if n == 0 {
            return Err(TransitionError::EmptySentence);
        }
        Ok(ParserState {
            n,
            stack: vec![0],
            next: 1,
            heads: vec![None; n + 1],
            history: Vec::with_capacity(2 * n),
        })
    }

    pub fn sentence_len(&self) -> usize {
        self.n
    }

    pub fn stack(&self) -> &[usize] {
        &self.stack
    }

    /// The `k`-th stack element from the top.
    pub fn stack_at(&self, k: usize) -> Option<usize> {
        self.stack.len().checked_sub(k + 1).map(|i| self.stack[i])
    }

    pub fn buffer(&self) -> std::ops::RangeInclusive<usize> {
        self.next..=self.n
    }

    pub fn buffer_len(&self) -> usize {
        self.n + 1 - self.next
    }

    /// The `k`-th buffer element.
    pub fn buffer_at(&self, k: usize) -> Option<usize> {
        let id = self.next + k;
        (id <= self.n).then_some(id)
    }

    pub fn history(&self) -> &[Action] {
        &self.history
    }

    pub fn head_of(&self, dependent: usize) -> Option<(usize, usize)> {
        self.heads
            .get(dependent)
            .copied()
            .flatten()
            .map(|(h, l)| (h, l as usize))
    }

    /// `(head, dependent, label)` triples built so far, by dependent.
    pub fn arcs(&self) -> Vec<(usize, usize, usize)> {
        (1..=self.n)
            .filter_map(|d| self.heads[d].map(|(h, l)| (h, d, l as usize)))
            .collect()
    }

    pub fn arc_count(&self) -> usize {
        self.heads.iter().filter(|h| h.is_some()).count()
    }

    pub fn is_terminal(&self) -> bool {
        self.next > self.n && self.stack.len() == 1
    }

    /// Checks the bookkeeping invariants: every token is in exactly one of
    /// stack, buffer or attached, and `|arcs| + |stack| + |buffer| = n + 1`.
    pub fn invariants_hold(&self) -> bool {
        let mut seen = vec![0u8; self.n + 1];
        for &s in &self.stack {
            seen[s] += 1;
        }
        for b in self.buffer() {
            seen[b] += 1;
        }
        for (d, count) in seen.iter_mut().enumerate().skip(1) {
            if self.heads[d].is_some() {
                *count += 1;
            }
        }
        self.stack.first() == Some(&0)
            && seen.iter().all(|&c| c == 1)
            && self.arc_count() + self.stack.len() + self.buffer_len() == self.n + 1
    }

    /// Legal actions in inventory order.
    pub fn valid_actions(&self, inv: &ActionInventory) -> Result<Vec<Action>, TransitionError> {
        Ok(self
            .valid_action_indices(inv)?
            .into_iter()
            .map(|i| inv.action(i))
            .collect())
    }

    pub fn valid_action_indices(&self, inv: &ActionInventory) -> Result<Vec<usize>, TransitionError> {
        if self.is_terminal() {
            return Err(TransitionError::Terminal);
        }
        let mut out = Vec::new();
        let buffer_empty = self.next > self.n;
        if !buffer_empty {
            out.push(0);
        }
        if self.stack.len() >= 2 {
            let second = self.stack[self.stack.len() - 2];
            let l = inv.labels().len();
            let root = inv.root_label();
            if second != 0 {
                out.extend((0..l).filter(|&i| i != root).map(|i| 1 + i));
                out.extend((0..l).filter(|&i| i != root).map(|i| 1 + l + i));
            } else if buffer_empty && self.stack.len() == 2 {
                out.push(1 + l + root);
            }
        }
        Ok(out)
    }

    pub fn is_valid(&self, a: Action, inv: &ActionInventory) -> bool {
        self.valid_action_indices(inv)
            .map(|v| v.contains(&inv.index_of(a)))
            .unwrap_or(false)
    }

    pub fn apply(&mut self, a: Action, inv: &ActionInventory) -> Result<(), TransitionError> {
        if self.is_terminal() {
            return Err(TransitionError::Terminal);
        }
        if !self.is_valid(a, inv) {
            return Err(TransitionError::Illegal(a));
        }
        self.apply_unchecked(a);
        Ok(())
    }

    /// Applies `a` without a legality check; callers must only pass actions
    /// taken from [`ParserState::valid_action_indices`].
    pub(crate) fn apply_unchecked(&mut self, a: Action) {
        let label = a.label.unwrap_or(0);
        match a.kind {
            ActionKind::Shift => {
                self.stack.push(self.next);
                self.next += 1;
            }
            ActionKind::LeftArc => {
                let top = self.stack.pop().expect("stack");
                let second = self.stack.pop().expect("stack");
                self.heads[second] = Some((top, label));
                self.stack.push(top);
            }
            ActionKind::RightArc => {
                let top = self.stack.pop().expect("stack");
                let second = *self.stack.last().expect("stack");
                self.heads[top] = Some((second, label));
            }
        }
        self.history.push(a);
    }

    /// Functional form of [`ParserState::apply`].
    pub fn applied(&self, a: Action, inv: &ActionInventory) -> Result<ParserState, TransitionError> {
        let mut next = self.clone();
        next.apply(a, inv)?;
        Ok(next)
    }
}

impl fmt::Display for ParserState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stack {:?} buffer {:?}", self.stack, self.buffer().collect::<Vec<_>>())
    }
}

pub fn initial_state(s: &Sentence) -> Result<ParserState, TransitionError> {
    ParserState::initial(s.len())
}

/// First pair of crossing arcs (including arcs from the root), if any.
pub fn find_crossing(s: &Sentence) -> Option<((usize, usize), (usize, usize))> {
    let arcs: Vec<(usize, usize)> = s
        .tokens
        .iter()
        .filter_map(|t| t.head.map(|h| (h, t.id)))
        .collect();
    for (i, &(h1, d1)) in arcs.iter().enumerate() {
        let (l1, r1) = (h1.min(d1), h1.max(d1));
        for &(h2, d2) in &arcs[i + 1..] {
            let (l2, r2) = (h2.min(d2), h2.max(d2));
            if (l1 < l2 && l2 < r1 && r1 < r2) || (l2 < l1 && l1 < r2 && r2 < r1) {
                return Some(((h1, d1), (h2, d2)));
            }
        }
    }
    None
}

pub fn is_projective(s: &Sentence) -> bool {
    s.has_heads() && find_crossing(s).is_none()
}

/// The static arc-standard oracle: LEFT_ARC when the second stack item's
/// gold head is the top, RIGHT_ARC when the top's gold head is the second
/// item and the top has collected all its dependents, SHIFT otherwise.
pub fn oracle_sequence(s: &Sentence, inv: &ActionInventory) -> Result<Vec<Action>, TransitionError> {
    let n = s.len();
    if n == 0 {
        return Err(TransitionError::EmptySentence);
    }
    if !s.has_heads() {
        return Err(TransitionError::MissingTree);
    }
    if let Some((first, second)) = find_crossing(s) {
        return Err(TransitionError::NonProjective { first, second });
    }
    let mut gold = vec![(0usize, 0usize); n + 1];
    let mut pending = vec![0usize; n + 1];
    for t in &s.tokens {
        let head = t.head.unwrap_or(0);
        let label = inv
            .label_id(t.deprel())
            .ok_or_else(|| TransitionError::UnknownLabel(t.deprel().to_owned()))?;
        if (head == 0) != (label == inv.root_label()) {
            if head == 0 {
                return Err(TransitionError::UnknownLabel(t.deprel().to_owned()));
            }
            return Err(TransitionError::MisplacedRootLabel(t.id));
        }
        gold[t.id] = (head, label);
        pending[head] += 1;
    }

    let mut st = ParserState::initial(n)?;
    let mut out = Vec::with_capacity(2 * n);
    while !st.is_terminal() {
        let action = match (st.stack_at(0), st.stack_at(1)) {
            (Some(top), Some(second)) if second != 0 && gold[second].0 == top => {
                Action::left(gold[second].1)
            }
            (Some(top), Some(second)) if gold[top].0 == second && pending[top] == 0 => {
                Action::right(gold[top].1)
            }
            _ => Action::SHIFT,
        };
        match action.kind {
            ActionKind::LeftArc => pending[st.stack_at(0).unwrap_or(0)] -= 1,
            ActionKind::RightArc => pending[st.stack_at(1).unwrap_or(0)] -= 1,
            ActionKind::Shift => {}
        }
        st.apply(action, inv)?;
        out.push(action);
    }
    Ok(out)
}

/// Replays `actions` from the initial state.
pub fn replay(
    n: usize,
    actions: &[Action],
    inv: &ActionInventory,
) -> Result<ParserState, TransitionError> {
    let mut st = ParserState::initial(n)?;
    for &a in actions {
        st.apply(a, inv)?;
    }
    Ok(st)
}

/// Copies the arcs of a terminal state into `template`.
pub fn extract_tree(
    st: &ParserState,
    template: &Sentence,
    inv: &ActionInventory,
) -> Result<Sentence, TransitionError> {
    if !st.is_terminal() {
        return Err(TransitionError::NotTerminal);
    }
    let mut out = template.clone();
    for t in &mut out.tokens {
        let (h, l) = st.head_of(t.id).ok_or(TransitionError::NotTerminal)?;
        t.head = Some(h);
        t.deprel = Some(inv.label(l).to_owned());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::{validate_sentence, Token, Upos};

    fn sent(heads: &[(usize, &str)]) -> Sentence {
        Sentence::new(
            heads
                .iter()
                .enumerate()
                .map(|(i, (h, l))| Token::new(i + 1, format!("w{}", i + 1)).with_upos(Upos::X).with_head(*h, *l))
                .collect(),
        )
    }

    fn inv() -> ActionInventory {
        ActionInventory::new(["det", "punct", "nsubj", "obj"])
    }

    #[test]
    fn initial_states() {
        let st = ParserState::initial(1).unwrap();
        assert_eq!(st.stack(), &[0]);
        assert_eq!(st.buffer().collect::<Vec<_>>(), vec![1]);
        assert!(!st.is_terminal());
        let st = ParserState::initial(3).unwrap();
        assert_eq!(st.buffer().collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(ParserState::initial(0), Err(TransitionError::EmptySentence));
    }

    #[test]
    fn valid_actions_examples() {
        let inv = inv();
        let st = ParserState::initial(2).unwrap();
        assert_eq!(st.valid_actions(&inv).unwrap(), vec![Action::SHIFT]);

        let mut st = ParserState::initial(2).unwrap();
        st.apply(Action::SHIFT, &inv).unwrap();
        st.apply(Action::SHIFT, &inv).unwrap();
        let acts = st.valid_actions(&inv).unwrap();
        let non_root = inv.labels().len() - 1;
        assert_eq!(acts.len(), 2 * non_root);
        assert!(acts.iter().all(|a| a.label != Some(inv.root_label() as u16)));

        let mut st = ParserState::initial(1).unwrap();
        st.apply(Action::SHIFT, &inv).unwrap();
        assert_eq!(
            st.valid_actions(&inv).unwrap(),
            vec![Action::right(inv.root_label())]
        );
        st.apply(Action::right(inv.root_label()), &inv).unwrap();
        assert!(st.is_terminal());
        assert_eq!(st.valid_actions(&inv), Err(TransitionError::Terminal));
    }

    #[test]
    fn apply_examples() {
        let inv = inv();
        let mut st = ParserState::initial(2).unwrap();
        st.apply(Action::SHIFT, &inv).unwrap();
        assert_eq!(st.stack(), &[0, 1]);
        assert_eq!(st.buffer().collect::<Vec<_>>(), vec![2]);
        st.apply(Action::SHIFT, &inv).unwrap();
        let det = inv.label_id("det").unwrap();
        st.apply(Action::left(det), &inv).unwrap();
        assert_eq!(st.head_of(1), Some((2, det)));
        assert_eq!(st.stack(), &[0, 2]);
        assert!(st.invariants_hold());
        assert!(matches!(
            st.apply(Action::left(det), &inv),
            Err(TransitionError::Illegal(_))
        ));
    }

    #[test]
    fn oracle_examples() {
        let inv = inv();
        let root = inv.root_label();
        assert_eq!(
            oracle_sequence(&sent(&[(0, "root")]), &inv).unwrap(),
            vec![Action::SHIFT, Action::right(root)]
        );
        let det = inv.label_id("det").unwrap();
        assert_eq!(
            oracle_sequence(&sent(&[(2, "det"), (0, "root")]), &inv).unwrap(),
            vec![Action::SHIFT, Action::SHIFT, Action::left(det), Action::right(root)]
        );
        let crossing = sent(&[(0, "root"), (1, "obj"), (1, "obj"), (2, "obj")]);
        assert_eq!(
            oracle_sequence(&crossing, &inv),
            Err(TransitionError::NonProjective {
                first: (1, 3),
                second: (2, 4)
            })
        );
    }

    #[test]
    fn oracle_round_trip_and_extract() {
        let inv = inv();
        let s = sent(&[(2, "det"), (3, "nsubj"), (0, "root"), (5, "det"), (3, "obj"), (3, "punct")]);
        let acts = oracle_sequence(&s, &inv).unwrap();
        assert_eq!(acts.len(), 12);
        let st = replay(s.len(), &acts, &inv).unwrap();
        assert!(st.is_terminal());
        let out = extract_tree(&st, &s.strip_tree(), &inv).unwrap();
        assert_eq!(out, s);
        assert!(validate_sentence(&out).is_empty());
    }

    #[test]
    fn extract_requires_terminal() {
        let inv = inv();
        let st = ParserState::initial(2).unwrap();
        assert_eq!(
            extract_tree(&st, &sent(&[(0, "root"), (1, "punct")]), &inv),
            Err(TransitionError::NotTerminal)
        );
    }

    #[test]
    fn extract_from_arcs() {
        let inv = inv();
        let mut st = ParserState::initial(2).unwrap();
        let punct = inv.label_id("punct").unwrap();
        for a in [Action::SHIFT, Action::SHIFT, Action::right(punct), Action::right(inv.root_label())] {
            st.apply(a, &inv).unwrap();
        }
        let out = extract_tree(&st, &sent(&[(0, "x"), (0, "x")]).strip_tree(), &inv).unwrap();
        assert_eq!(out.tokens[0].head, Some(0));
        assert_eq!(out.tokens[0].deprel(), "root");
        assert_eq!(out.tokens[1].head, Some(1));
        assert_eq!(out.tokens[1].deprel(), "punct");
    }

    #[test]
    fn inventory_indexing_round_trips() {
        let inv = inv();
        for i in 0..inv.len() {
            assert_eq!(inv.index_of(inv.action(i)), i);
        }
        let only_root = ActionInventory::new(Vec::<String>::new());
        assert!(only_root.labels().len() >= 2);
    }
}
