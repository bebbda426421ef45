//! Corpus ingestion, cleaning, author-disjoint splitting, and Sim-instance
//! generation.
//!
//! Input format is line-delimited JSON with keys `student_id`, `submitted_at`
//! (ISO-8601) and `body`. Cleaning strips a leading prefix, substitutes proper
//! nouns with a placeholder and drops texts outside the length bounds.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NAME_PLACEHOLDER: &str = "⟨NAME⟩";

/// Days per month used everywhere a timestamp difference becomes "months".
/// Calendar average: 365.25 / 12.
pub const DAYS_PER_MONTH: f64 = 30.4375;

/// Elapsed months between two timestamps (may be negative if `b < a`).
pub fn months_between(a: DateTime<Utc>, b: DateTime<Utc>) -> f64 {
    let secs = (b - a).num_seconds() as f64;
    secs / (86_400.0 * DAYS_PER_MONTH)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawText {
    pub student_id: String,
    pub submitted_at: DateTime<Utc>,
    pub body: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CleanText {
    pub student_id: String,
    pub submitted_at: DateTime<Utc>,
    pub body: String,
    /// Character count of `body` (after prefix stripping and substitution).
    pub char_len: usize,
}

#[derive(Debug, Clone)]
pub struct RawStudent {
    pub student_id: String,
    /// Chronologically ascending; ties keep ingestion order.
    pub texts: Vec<RawText>,
}

#[derive(Debug, Clone, Default)]
pub struct RawCorpus {
    /// Sorted by student id.
    pub students: Vec<RawStudent>,
}

#[derive(Debug, Clone)]
pub struct StudentRecord {
    pub student_id: String,
    pub texts: Vec<CleanText>,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    /// Sorted by student id; ids unique.
    pub students: Vec<StudentRecord>,
}

impl Corpus {
    pub fn n_texts(&self) -> usize {
        self.students.iter().map(|s| s.texts.len()).sum()
    }

    pub fn text(&self, r: TextRef) -> &CleanText {
        &self.students[r.student].texts[r.text]
    }

    pub fn student_ids(&self) -> impl Iterator<Item = &str> {
        self.students.iter().map(|s| s.student_id.as_str())
    }
}

/// Index of one text within a [`Corpus`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TextRef {
    pub student: usize,
    pub text: usize,
}

/// A labeled text pair for training/evaluating the similarity function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimInstance {
    pub text_a: TextRef,
    pub text_b: TextRef,
    /// true = same author.
    pub label: bool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CleanConfig {
    /// Characters stripped from the start of every body.
    pub strip_prefix: usize,
    /// Bodies with char_len <= min_len are rejected.
    pub min_len: usize,
    /// Bodies with char_len >= max_len are rejected.
    pub max_len: usize,
}

impl Default for CleanConfig {
    fn default() -> Self {
        CleanConfig { strip_prefix: 200, min_len: 400, max_len: 30_000 }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct CleaningReport {
    pub kept: usize,
    pub rejected_short: usize,
    pub rejected_long: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSpec {
    /// (network-train, network-val, analyze); must sum to 1.
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ratios.iter().any(|&r| r <= 0.0) {
            return Err(Error::Config("split ratios must be positive".into()));
        }
        let sum: f64 = self.ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios must sum to 1, got {sum}")));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct JsonLine {
    student_id: String,
    submitted_at: String,
    body: String,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IngestStats {
    pub lines: usize,
    pub duplicates_dropped: usize,
}

/// Parse a line-delimited JSON corpus file into per-student, time-sorted raw
/// texts. Exact duplicate (student, time, body) triples are dropped.
pub fn ingest(path: &Path) -> Result<(RawCorpus, IngestStats)> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut by_student: BTreeMap<String, Vec<RawText>> = BTreeMap::new();
    let mut seen: HashSet<(String, DateTime<Utc>, u64)> = HashSet::new();
    let mut stats = IngestStats::default();

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonLine = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: lineno, message: e.to_string() })?;
        let submitted_at = rec
            .submitted_at
            .parse::<DateTime<Utc>>()
            .map_err(|e| Error::Parse { line: lineno, message: format!("bad timestamp: {e}") })?;
        if rec.body.is_empty() {
            return Err(Error::Parse { line: lineno, message: "empty body".into() });
        }
        stats.lines += 1;
        let body_hash = fnv1a64(0, rec.body.as_bytes());
        if !seen.insert((rec.student_id.clone(), submitted_at, body_hash)) {
            stats.duplicates_dropped += 1;
            continue;
        }
        by_student
            .entry(rec.student_id.clone())
            .or_default()
            .push(RawText { student_id: rec.student_id, submitted_at, body: rec.body });
    }

    let students = by_student
        .into_iter()
        .map(|(student_id, mut texts)| {
            texts.sort_by_key(|t| t.submitted_at);
            RawStudent { student_id, texts }
        })
        .collect();
    Ok((RawCorpus { students }, stats))
}

/// Serialize a raw corpus to the line-delimited input format.
pub fn write_raw_jsonl(corpus: &RawCorpus, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for s in &corpus.students {
        for t in &s.texts {
            let line = serde_json::json!({
                "student_id": t.student_id,
                "submitted_at": t.submitted_at.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                "body": t.body,
            });
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}

/// Serialize a cleaned corpus back to the line-delimited input format.
pub fn write_corpus_jsonl(corpus: &Corpus, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for s in &corpus.students {
        for t in &s.texts {
            let line = serde_json::json!({
                "student_id": t.student_id,
                "submitted_at": t.submitted_at.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                "body": t.body,
            });
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}

/// Read a corpus that has already been cleaned (bodies are taken as-is).
pub fn read_clean_jsonl(path: &Path) -> Result<Corpus> {
    let (raw, _) = ingest(path)?;
    let students = raw
        .students
        .into_iter()
        .map(|s| StudentRecord {
            student_id: s.student_id,
            texts: s
                .texts
                .into_iter()
                .map(|t| {
                    let char_len = t.body.chars().count();
                    CleanText {
                        student_id: t.student_id,
                        submitted_at: t.submitted_at,
                        body: t.body,
                        char_len,
                    }
                })
                .collect(),
        })
        .collect();
    Ok(Corpus { students })
}

/// Clean a single text: strip the leading prefix, substitute proper nouns,
/// and reject if the result falls outside the length bounds.
pub fn clean(raw: &RawText, cfg: &CleanConfig) -> Option<CleanText> {
    let stripped: String = raw.body.chars().skip(cfg.strip_prefix).collect();
    let body = pseudonymize(&stripped);
    let char_len = body.chars().count();
    if char_len <= cfg.min_len || char_len >= cfg.max_len {
        return None;
    }
    Some(CleanText {
        student_id: raw.student_id.clone(),
        submitted_at: raw.submitted_at,
        body,
        char_len,
    })
}

/// Clean every text in the corpus, keeping per-text rejections in the report.
pub fn clean_corpus(raw: &RawCorpus, cfg: &CleanConfig) -> (Corpus, CleaningReport) {
    let mut report = CleaningReport::default();
    let mut students = Vec::new();
    for s in &raw.students {
        let mut texts = Vec::new();
        for t in &s.texts {
            // Recompute rejection reason for the report.
            let stripped_len = t.body.chars().count().saturating_sub(cfg.strip_prefix);
            match clean(t, cfg) {
                Some(ct) => {
                    report.kept += 1;
                    texts.push(ct);
                }
                None => {
                    if stripped_len >= cfg.max_len {
                        report.rejected_long += 1;
                    } else {
                        report.rejected_short += 1;
                    }
                }
            }
        }
        if !texts.is_empty() {
            students.push(StudentRecord { student_id: s.student_id.clone(), texts });
        }
    }
    (Corpus { students }, report)
}

/// Replace capitalized, non-sentence-initial tokens with [`NAME_PLACEHOLDER`].
pub fn pseudonymize(body: &str) -> String {
    let mut out = String::with_capacity(body.len());
    let mut sentence_initial = true;
    let mut first = true;
    for token in body.split_inclusive(char::is_whitespace) {
        let (word, trailing_ws) = match token.char_indices().last() {
            Some((i, c)) if c.is_whitespace() => (&token[..i], &token[i..]),
            _ => (token, ""),
        };
        if word.is_empty() {
            out.push_str(token);
            continue;
        }
        let core_start = word.find(|c: char| c.is_alphabetic());
        let is_proper = match core_start {
            Some(i) => {
                let c = word[i..].chars().next().unwrap();
                c.is_uppercase() && !sentence_initial && !first
            }
            None => false,
        };
        if is_proper {
            let i = core_start.unwrap();
            let core_end = word
                .char_indices()
                .filter(|(_, c)| c.is_alphabetic())
                .map(|(j, c)| j + c.len_utf8())
                .last()
                .unwrap_or(word.len());
            out.push_str(&word[..i]);
            out.push_str(NAME_PLACEHOLDER);
            out.push_str(&word[core_end..]);
        } else {
            out.push_str(word);
        }
        out.push_str(trailing_ws);
        first = false;
        let trimmed = word.trim_end_matches(|c: char| c == '"' || c == '\'' || c == ')');
        sentence_initial = trimmed.ends_with(['.', '!', '?']);
    }
    out
}

/// Drop students with fewer than `min_texts` texts.
pub fn drop_sparse_students(corpus: Corpus, min_texts: usize) -> Corpus {
    Corpus {
        students: corpus.students.into_iter().filter(|s| s.texts.len() >= min_texts).collect(),
    }
}

fn fnv1a64(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64 ^ seed.wrapping_mul(0x9e3779b97f4a7c15);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Partition students into author-disjoint (train, val, analyze) corpora.
/// Assignment depends only on (student_id, seed).
pub fn split_authors(corpus: &Corpus, spec: &SplitSpec) -> Result<(Corpus, Corpus, Corpus)> {
    spec.validate()?;
    let n = corpus.students.len();
    if n < 3 {
        return Err(Error::Data(format!("need at least 3 students to split, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| {
        let id = &corpus.students[i].student_id;
        (fnv1a64(spec.seed, id.as_bytes()), id.clone())
    });
    let c1 = (spec.ratios[0] * n as f64).round() as usize;
    let c2 = ((spec.ratios[0] + spec.ratios[1]) * n as f64).round() as usize;
    let c1 = c1.clamp(1, n - 2);
    let c2 = c2.clamp(c1 + 1, n - 1);

    let mut parts = [Vec::new(), Vec::new(), Vec::new()];
    for (rank, &i) in order.iter().enumerate() {
        let part = if rank < c1 {
            0
        } else if rank < c2 {
            1
        } else {
            2
        };
        parts[part].push(corpus.students[i].clone());
    }
    let mut out = parts.map(|mut p| {
        p.sort_by(|a, b| a.student_id.cmp(&b.student_id));
        Corpus { students: p }
    });
    let [train, val, analyze] = &mut out;
    Ok((std::mem::take(train), std::mem::take(val), std::mem::take(analyze)))
}

/// Generate a balanced 50:50 set of labeled pairs: every unordered same-author
/// pair, plus an equal number of distinct cross-author pairs sampled uniformly.
pub fn gen_sim_instances(corpus: &Corpus, seed: u64) -> Result<Vec<SimInstance>> {
    if corpus.students.len() < 2 {
        return Err(Error::Data("need at least 2 students to generate negative pairs".into()));
    }
    let mut instances = Vec::new();
    for (si, s) in corpus.students.iter().enumerate() {
        for a in 0..s.texts.len() {
            for b in (a + 1)..s.texts.len() {
                instances.push(SimInstance {
                    text_a: TextRef { student: si, text: a },
                    text_b: TextRef { student: si, text: b },
                    label: true,
                });
            }
        }
    }
    let n_pos = instances.len();

    let total: usize = corpus.n_texts();
    let same_pairs: usize = corpus.students.iter().map(|s| s.texts.len() * s.texts.len()).sum();
    let cross_pairs = (total * total - same_pairs) / 2;
    if n_pos > cross_pairs {
        return Err(Error::Data(format!(
            "cannot draw {n_pos} distinct cross-author pairs (only {cross_pairs} exist)"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashSet<(TextRef, TextRef)> = HashSet::new();
    let mut attempts = 0usize;
    let cap = n_pos.saturating_mul(100).max(100);
    let n_students = corpus.students.len();
    while seen.len() < n_pos {
        attempts += 1;
        if attempts > cap {
            return Err(Error::Data(format!(
                "negative sampling exceeded {cap} attempts for {n_pos} pairs"
            )));
        }
        let sa = rng.gen_range(0..n_students);
        let sb = rng.gen_range(0..n_students);
        if sa == sb {
            continue;
        }
        let ta = TextRef { student: sa, text: rng.gen_range(0..corpus.students[sa].texts.len()) };
        let tb = TextRef { student: sb, text: rng.gen_range(0..corpus.students[sb].texts.len()) };
        let pair = if ta < tb { (ta, tb) } else { (tb, ta) };
        if seen.insert(pair) {
            instances.push(SimInstance { text_a: pair.0, text_b: pair.1, label: false });
        }
    }
    instances.shuffle(&mut rng);
    Ok(instances)
}
