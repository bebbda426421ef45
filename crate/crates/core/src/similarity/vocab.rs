//! Character vocabulary mapping characters to embedding rows.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;

/// Index 0 is reserved for unknown characters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CharVocab {
    chars: Vec<char>,
    #[serde(skip)]
    index: HashMap<char, usize>,
}

impl CharVocab {
    pub fn new(mut chars: Vec<char>) -> CharVocab {
        chars.sort_unstable();
        chars.dedup();
        let mut v = CharVocab { chars, index: HashMap::new() };
        v.rebuild_index();
        v
    }

    /// Vocabulary of characters occurring at least `min_freq` times in the
    /// corpus bodies.
    pub fn from_corpus(corpus: &Corpus, min_freq: usize) -> CharVocab {
        let mut freq: BTreeMap<char, usize> = BTreeMap::new();
        for s in &corpus.students {
            for t in &s.texts {
                for c in t.body.chars() {
                    *freq.entry(c).or_insert(0) += 1;
                }
            }
        }
        CharVocab::new(freq.into_iter().filter(|&(_, n)| n >= min_freq).map(|(c, _)| c).collect())
    }

    pub fn rebuild_index(&mut self) {
        self.index = self.chars.iter().enumerate().map(|(i, &c)| (c, i + 1)).collect();
    }

    /// Total number of embedding rows (known chars + unknown).
    pub fn len(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn index_of(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(0)
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        text.chars().map(|c| self.index_of(c)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_maps_to_zero() {
        let v = CharVocab::new(vec!['a', 'b']);
        assert_eq!(v.index_of('z'), 0);
        assert_ne!(v.index_of('a'), 0);
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn injective_on_known_chars() {
        let v = CharVocab::new(vec!['b', 'a', 'a', 'c']);
        let idx: Vec<usize> = "abc".chars().map(|c| v.index_of(c)).collect();
        assert_eq!(idx, vec![1, 2, 3]);
    }
}
