//! Writing-quality indicators: SMOG grade, noun/verb phrases per sentence,
//! word count, average word length — per text and averaged per cluster over
//! the profile time grid.

mod tagger;

pub use tagger::{SuffixTagger, Tag, Tagger};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Danish vowel set used for syllable counting.
pub const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u', 'y', 'æ', 'ø', 'å'];

/// Abbreviations whose trailing period does not end a sentence.
pub fn abbreviations() -> Vec<&'static str> {
    include_str!("../../data/abbreviations_da.txt")
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TextStats {
    pub n_sentences: usize,
    pub n_words: usize,
    /// Words with 3 or more syllables.
    pub n_polysyllables: usize,
    pub n_nouns: usize,
    pub n_main_verbs: usize,
    pub total_word_chars: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct QualityIndicators {
    pub smog: f64,
    pub noun_phrases: f64,
    pub verb_phrases: f64,
    pub word_count: usize,
    pub avg_word_length: f64,
}

/// Split on `.`, `!`, `?` followed by whitespace or end of text, unless the
/// token ending at the period is a known abbreviation.
pub fn split_sentences(body: &str) -> Vec<&str> {
    let abbrevs = abbreviations();
    let mut sentences = Vec::new();
    let mut start = 0usize;
    let bytes_len = body.len();
    let chars: Vec<(usize, char)> = body.char_indices().collect();
    for (ci, &(i, c)) in chars.iter().enumerate() {
        if c != '.' && c != '!' && c != '?' {
            continue;
        }
        let end = i + c.len_utf8();
        let at_boundary = chars.get(ci + 1).map_or(true, |&(_, next)| next.is_whitespace());
        if !at_boundary {
            continue;
        }
        if c == '.' {
            // Token from the previous whitespace through this period.
            let token_start = body[..i]
                .rfind(char::is_whitespace)
                .map(|p| p + body[p..].chars().next().unwrap().len_utf8())
                .unwrap_or(0);
            let token = body[token_start..end].to_lowercase();
            if abbrevs.iter().any(|&a| token == a || token.ends_with(&format!(".{a}"))) {
                continue;
            }
        }
        let sentence = body[start..end].trim();
        if !sentence.is_empty() {
            sentences.push(&body[start..end]);
        }
        start = end;
    }
    if start < bytes_len && !body[start..].trim().is_empty() {
        sentences.push(&body[start..]);
    }
    sentences.into_iter().map(str::trim).filter(|s| !s.is_empty()).collect()
}

/// Number of maximal vowel groups in the word, at least 1 for non-empty input.
pub fn count_syllables(word: &str) -> usize {
    let mut groups = 0usize;
    let mut in_group = false;
    for c in word.to_lowercase().chars() {
        if VOWELS.contains(&c) {
            if !in_group {
                groups += 1;
                in_group = true;
            }
        } else {
            in_group = false;
        }
    }
    groups.max(1)
}

/// SMOG grade: 1.0430 * sqrt(30 * n_polysyllables / n_sentences) + 3.1291.
pub fn smog(n_polysyllables: usize, n_sentences: usize) -> Result<f64> {
    if n_sentences == 0 {
        return Err(Error::Data("SMOG undefined for zero sentences".into()));
    }
    Ok(1.0430 * (30.0 * n_polysyllables as f64 / n_sentences as f64).sqrt() + 3.1291)
}

fn words(body: &str) -> impl Iterator<Item = &str> {
    body.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
}

/// Count sentences, words, polysyllables and tagged classes for one text.
pub fn text_stats(body: &str, tagger: &dyn Tagger) -> TextStats {
    let mut stats = TextStats { n_sentences: split_sentences(body).len(), ..Default::default() };
    for word in words(body) {
        stats.n_words += 1;
        stats.total_word_chars += word.chars().count();
        if count_syllables(word) >= 3 {
            stats.n_polysyllables += 1;
        }
        match tagger.tag(word) {
            Tag::Noun => stats.n_nouns += 1,
            Tag::MainVerb => stats.n_main_verbs += 1,
            Tag::Other => {}
        }
    }
    stats
}

/// Nouns per sentence and main verbs per sentence.
pub fn phrase_ratios(body: &str, tagger: &dyn Tagger) -> Result<(f64, f64)> {
    let stats = text_stats(body, tagger);
    if stats.n_sentences == 0 {
        return Err(Error::Data("phrase ratios undefined for zero sentences".into()));
    }
    Ok((
        stats.n_nouns as f64 / stats.n_sentences as f64,
        stats.n_main_verbs as f64 / stats.n_sentences as f64,
    ))
}

/// All indicators for one text. Errors if the text has no sentences.
pub fn quality_indicators(body: &str, tagger: &dyn Tagger) -> Result<QualityIndicators> {
    let stats = text_stats(body, tagger);
    if stats.n_sentences == 0 {
        return Err(Error::Data("quality indicators undefined for zero sentences".into()));
    }
    Ok(QualityIndicators {
        smog: smog(stats.n_polysyllables, stats.n_sentences)?,
        noun_phrases: stats.n_nouns as f64 / stats.n_sentences as f64,
        verb_phrases: stats.n_main_verbs as f64 / stats.n_sentences as f64,
        word_count: stats.n_words,
        avg_word_length: if stats.n_words == 0 {
            0.0
        } else {
            stats.total_word_chars as f64 / stats.n_words as f64
        },
    })
}

/// One text positioned on a student's profile time axis.
#[derive(Debug, Clone, Copy)]
pub struct TimedIndicators {
    /// Months since the student's text t_m.
    pub tau: f64,
    /// Last tau of the student's profile (how far their curve extends).
    pub author_last_tau: f64,
    pub indicators: QualityIndicators,
}

/// Per-grid-point means of each indicator over texts inside a centered
/// smoothing window, restricted to texts whose author's profile extends to
/// that grid point. Windows with no texts yield `None` (a gap, not zero).
pub fn cluster_quality_curves(
    texts: &[TimedIndicators],
    grid_len: usize,
    step: f64,
    window: f64,
) -> Vec<Option<QualityIndicators>> {
    let half = window / 2.0;
    (0..grid_len)
        .map(|g| {
            let t = g as f64 * step;
            let hits: Vec<&TimedIndicators> = texts
                .iter()
                .filter(|x| (x.tau - t).abs() <= half + 1e-12 && x.author_last_tau >= t - 1e-12)
                .collect();
            if hits.is_empty() {
                return None;
            }
            let n = hits.len() as f64;
            Some(QualityIndicators {
                smog: hits.iter().map(|x| x.indicators.smog).sum::<f64>() / n,
                noun_phrases: hits.iter().map(|x| x.indicators.noun_phrases).sum::<f64>() / n,
                verb_phrases: hits.iter().map(|x| x.indicators.verb_phrases).sum::<f64>() / n,
                word_count: (hits.iter().map(|x| x.indicators.word_count).sum::<usize>() as f64 / n)
                    .round() as usize,
                avg_word_length: hits.iter().map(|x| x.indicators.avg_word_length).sum::<f64>() / n,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn splits_simple_sentences() {
        assert_eq!(split_sentences("Hej. Hej igen!"), vec!["Hej.", "Hej igen!"]);
    }

    #[test]
    fn empty_body_zero_sentences() {
        assert!(split_sentences("").is_empty());
    }

    #[test]
    fn abbreviations_do_not_split() {
        assert_eq!(split_sentences("ca. 10 kr. i alt.").len(), 1);
        assert_eq!(split_sentences("Der var bl.a. tre ting. Og mere.").len(), 2);
    }

    #[test]
    fn period_without_space_does_not_split() {
        assert_eq!(split_sentences("version 1.2 er ude. Ja.").len(), 2);
    }

    #[test]
    fn syllable_counts() {
        assert_eq!(count_syllables("hus"), 1);
        assert_eq!(count_syllables("studerende"), 4);
        assert_eq!(count_syllables("b"), 1);
        assert_eq!(count_syllables("HUS"), count_syllables("hus"));
    }

    #[test]
    fn smog_zero_polysyllables_is_floor() {
        assert_abs_diff_eq!(smog(0, 1).unwrap(), 3.1291);
        assert_abs_diff_eq!(smog(0, 17).unwrap(), 3.1291);
    }

    #[test]
    fn smog_hand_computed() {
        assert_abs_diff_eq!(smog(30, 30).unwrap(), 1.0430 * 30f64.sqrt() + 3.1291, epsilon = 1e-12);
        // 1.0430·√30 + 3.1291 = 8.84185 to five figures.
        assert_abs_diff_eq!(smog(30, 30).unwrap(), 8.84185, epsilon = 1e-4);
        assert_abs_diff_eq!(smog(10, 30).unwrap(), 6.4273, epsilon = 1e-4);
    }

    #[test]
    fn smog_zero_sentences_errors() {
        assert!(smog(5, 0).is_err());
    }

    #[test]
    fn smog_monotonicity() {
        let base = smog(10, 30).unwrap();
        assert!(smog(11, 30).unwrap() > base);
        assert!(smog(10, 31).unwrap() < base);
    }

    struct AllOther;
    impl Tagger for AllOther {
        fn tag(&self, _: &str) -> Tag {
            Tag::Other
        }
    }

    #[test]
    fn phrase_ratios_all_other_tagger() {
        let (n, v) = phrase_ratios("En sætning her. Og en til.", &AllOther).unwrap();
        assert_abs_diff_eq!(n, 0.0);
        assert_abs_diff_eq!(v, 0.0);
    }

    #[test]
    fn phrase_ratios_definition() {
        struct Fixed;
        impl Tagger for Fixed {
            fn tag(&self, token: &str) -> Tag {
                match token {
                    "kat" | "hund" | "bog" => Tag::Noun,
                    "løber" => Tag::MainVerb,
                    _ => Tag::Other,
                }
            }
        }
        let (n, v) = phrase_ratios("kat hund bog løber nu.", &Fixed).unwrap();
        assert_abs_diff_eq!(n, 3.0);
        assert_abs_diff_eq!(v, 1.0);
    }

    #[test]
    fn phrase_ratios_hand_tagged_fixture() {
        // 5 sentences, hand counts: 6 nouns, 5 main verbs.
        struct ByList;
        impl Tagger for ByList {
            fn tag(&self, token: &str) -> Tag {
                let w = token.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
                match w.as_str() {
                    "kat" | "have" | "bold" | "skole" | "ven" | "bog" => Tag::Noun,
                    "sover" | "spiller" | "går" | "møder" | "læser" => Tag::MainVerb,
                    _ => Tag::Other,
                }
            }
        }
        let body = "Min kat sover. Vi spiller bold i en have. Hun går i skole. \
                    Jeg møder en ven. Han læser en bog.";
        let (n, v) = phrase_ratios(body, &ByList).unwrap();
        assert_abs_diff_eq!(n, 6.0 / 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v, 5.0 / 5.0, epsilon = 1e-12);
    }

    #[test]
    fn ratios_invariant_to_other_token() {
        let t = SuffixTagger;
        let a = phrase_ratios("Friheden kommer. Det er udviklingen.", &t).unwrap();
        let b = phrase_ratios("Friheden kommer og. Det er udviklingen.", &t).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quality_zero_sentences_errors() {
        assert!(quality_indicators("", &SuffixTagger).is_err());
    }

    #[test]
    fn curves_flat_for_identical_texts() {
        let ind = quality_indicators("En lille tekst her. Den er kort.", &SuffixTagger).unwrap();
        let texts: Vec<TimedIndicators> = (0..5)
            .map(|i| TimedIndicators { tau: i as f64 * 0.1, author_last_tau: 1.0, indicators: ind })
            .collect();
        let curves = cluster_quality_curves(&texts, 9, 0.05, 1.0);
        for p in curves.iter().flatten() {
            assert_abs_diff_eq!(p.smog, ind.smog, epsilon = 1e-12);
            assert_eq!(p.word_count, ind.word_count);
        }
    }

    #[test]
    fn curves_gap_when_window_empty() {
        let ind = quality_indicators("En tekst.", &SuffixTagger).unwrap();
        let texts =
            vec![TimedIndicators { tau: 0.0, author_last_tau: 10.0, indicators: ind }];
        // Grid point at 5 months with a 1-month window sees nothing.
        let curves = cluster_quality_curves(&texts, 101, 0.05, 1.0);
        assert!(curves[0].is_some());
        assert!(curves[100].is_none());
    }

    #[test]
    fn curves_respect_author_extent() {
        let ind = quality_indicators("En tekst.", &SuffixTagger).unwrap();
        // Text at tau 1.0 but the author's profile ends at 0.5: excluded from
        // grid points beyond 0.5.
        let texts =
            vec![TimedIndicators { tau: 1.0, author_last_tau: 0.5, indicators: ind }];
        let curves = cluster_quality_curves(&texts, 21, 0.05, 1.0);
        assert!(curves[20].is_none());
        assert!(curves[10].is_some());
    }
}
