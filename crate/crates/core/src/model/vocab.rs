use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const UNK: usize = 0;
pub const CLS: usize = 1;
const SPECIALS: [&str; 2] = ["<UNK>", "<CLS>"];

/// Token-text vocabulary. Ids 0 and 1 are the unknown and classification
/// tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Vocab { words, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.words
    }
}

impl Vocab {
    /// Words seen at least `min_count` times, most frequent first, ties in
    /// lexicographic order.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, min_count: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in texts {
            *counts.entry(t).or_default() += 1;
        }
        let mut entries: Vec<(&str, usize)> =
            counts.into_iter().filter(|&(w, c)| c >= min_count && !SPECIALS.contains(&w)).collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let words = SPECIALS.iter().map(|s| s.to_string()).chain(entries.into_iter().map(|(w, _)| w.to_string()));
        Vocab::from(words.collect::<Vec<_>>())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    /// Ids of `<CLS>` followed by the tokens.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        std::iter::once(CLS).chain(tokens.iter().map(|t| self.id(t.as_ref()))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_and_encode() {
        let v = Vocab::build(["b", "a", "b", "c", "<CLS>"], 1);
        assert_eq!(v.word(0), "<UNK>");
        assert_eq!(v.word(1), "<CLS>");
        assert_eq!(v.word(2), "b");
        assert_eq!(v.len(), 5);
        assert_eq!(v.encode(&["a", "zzz"]), vec![CLS, 3, UNK]);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vocab>(&json).unwrap(), v);
        assert_eq!(Vocab::build(["x", "y", "y"], 2).len(), 3);
    }
}
