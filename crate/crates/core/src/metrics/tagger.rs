//! Pluggable token tagger with a deterministic Danish suffix heuristic.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag {
    Noun,
    MainVerb,
    Other,
}

/// Total function from tokens to coarse tags; implementations must be pure.
pub trait Tagger {
    fn tag(&self, token: &str) -> Tag;
}

/// Suffix-rule heuristic for Danish. Coarse by design; callers can swap in a
/// real tagger behind the same trait.
#[derive(Debug, Clone, Copy, Default)]
pub struct SuffixTagger;

const NOUN_SUFFIXES: &[&str] = &[
    "hed", "heden", "heder", "else", "elsen", "elser", "ing", "ingen", "inger", "tion",
    "tionen", "skab", "skabet", "isme", "itet", "dom", "eri", "ør", "ance", "ens",
];

const VERB_SUFFIXES: &[&str] = &["ere", "erer", "erede", "ede", "eres"];

/// Common Danish finite verbs (closed class, incomplete on purpose).
const VERB_WORDS: &[&str] = &[
    "er", "var", "har", "havde", "bliver", "blev", "kan", "kunne", "skal", "skulle", "vil",
    "ville", "må", "gør", "gjorde", "siger", "sagde", "ser", "så", "får", "fik", "går", "gik",
    "kommer", "kom", "skriver", "skrev", "læser", "læste", "tager", "tog", "finder", "fandt",
];

impl Tagger for SuffixTagger {
    fn tag(&self, token: &str) -> Tag {
        let word: String = token
            .trim_matches(|c: char| !c.is_alphanumeric())
            .to_lowercase();
        if word.is_empty() {
            return Tag::Other;
        }
        if VERB_WORDS.contains(&word.as_str()) {
            return Tag::MainVerb;
        }
        if VERB_SUFFIXES.iter().any(|s| word.ends_with(s)) {
            return Tag::MainVerb;
        }
        if NOUN_SUFFIXES.iter().any(|s| word.ends_with(s)) {
            return Tag::Noun;
        }
        Tag::Other
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_common_forms() {
        let t = SuffixTagger;
        assert_eq!(t.tag("udviklingen"), Tag::Noun);
        assert_eq!(t.tag("frihed"), Tag::Noun);
        assert_eq!(t.tag("studerede"), Tag::MainVerb);
        assert_eq!(t.tag("er"), Tag::MainVerb);
        assert_eq!(t.tag("og"), Tag::Other);
        assert_eq!(t.tag(""), Tag::Other);
        assert_eq!(t.tag("..."), Tag::Other);
    }

    #[test]
    fn case_and_punctuation_insensitive() {
        let t = SuffixTagger;
        assert_eq!(t.tag("Frihed,"), Tag::Noun);
        assert_eq!(t.tag("ER"), Tag::MainVerb);
    }
}
