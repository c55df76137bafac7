use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const UNK: &str = "<unk>";

/// Injective string-to-index map; index 0 is reserved for unknown items.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    items: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocab {
    fn default() -> Self {
        Vocab::from_items(Vec::<String>::new())
    }
}

impl Vocab {
    /// Builds a vocabulary from the given items; index 0 is always [`UNK`]
    /// and duplicates are dropped.
    pub fn from_items<I, S>(items: I) -> Vocab
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocab {
            items: vec![UNK.to_owned()],
            index: HashMap::from([(UNK.to_owned(), 0)]),
        };
        for item in items {
            v.insert(item.into());
        }
        v
    }

    /// Keeps items seen at least `min_count` times, ordered by descending
    /// count then lexicographically, so the result is independent of
    /// iteration order.
    pub fn from_counts(counts: &HashMap<String, usize>, min_count: usize) -> Vocab {
        let mut kept: Vec<(&String, &usize)> =
            counts.iter().filter(|(_, &c)| c >= min_count).collect();
        kept.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        Vocab::from_items(kept.into_iter().map(|(s, _)| s.clone()))
    }

    fn insert(&mut self, item: String) {
        if !self.index.contains_key(&item) {
            self.index.insert(item.clone(), self.items.len());
            self.items.push(item);
        }
    }

    /// Index of `item`, or 0 when unknown.
    pub fn get(&self, item: &str) -> usize {
        self.index.get(item).copied().unwrap_or(0)
    }

    pub fn contains(&self, item: &str) -> bool {
        self.index.contains_key(item)
    }

    pub fn item(&self, idx: usize) -> Option<&str> {
        self.items.get(idx).map(String::as_str)
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.len() <= 1
    }
}

impl From<Vec<String>> for Vocab {
    fn from(items: Vec<String>) -> Self {
        Vocab::from_items(items.into_iter().skip(1))
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.items
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unk_is_zero_and_map_is_injective() {
        let v = Vocab::from_items(["a", "b", "a"]);
        assert_eq!(v.len(), 3);
        assert_eq!(v.get("zzz"), 0);
        assert_ne!(v.get("a"), v.get("b"));
        assert_eq!(v.item(v.get("b")), Some("b"));
    }

    #[test]
    fn counts_cutoff_is_deterministic() {
        let counts: HashMap<String, usize> = [("x", 3), ("y", 1), ("a", 3), ("b", 2)]
            .into_iter()
            .map(|(k, v)| (k.to_owned(), v))
            .collect();
        let v = Vocab::from_counts(&counts, 2);
        assert_eq!(v.items(), &["<unk>", "a", "x", "b"]);
    }

    #[test]
    fn serde_round_trip() {
        let v = Vocab::from_items(["q", "r"]);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocab = serde_json::from_str(&json).unwrap();
        assert_eq!(v, back);
    }
}
