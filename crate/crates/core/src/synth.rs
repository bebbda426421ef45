//! Synthetic corpus generation with planted style-development archetypes.
//!
//! Texts are sampled from an order-1 character Markov chain whose parameters
//! drift, per student, from an initial style toward a target style on a
//! schedule given by the student's archetype. The hand-in cadence leaves gaps
//! around months 12 and 24 (summer vacations).

use chrono::{DateTime, Duration, Utc};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{RawCorpus, RawStudent, RawText, DAYS_PER_MONTH};
use crate::error::{Error, Result};

pub const ALPHABET: &[char] = &[
    'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'j', 'k', 'l', 'm', 'n', 'o', 'p', 'q', 'r', 's',
    't', 'u', 'v', 'w', 'x', 'y', 'z', 'æ', 'ø', 'å',
];

/// Vacation windows (months since corpus start) with no hand-ins.
pub const VACATIONS: [(f64, f64); 2] = [(12.0, 13.5), (24.0, 25.5)];

/// Character-distribution and shape parameters of one writing style.
#[derive(Debug, Clone)]
pub struct StyleParams {
    /// Unigram weights over [`ALPHABET`], used for the first char of a word.
    pub unigram: Vec<f64>,
    /// Bigram weights, row = previous char index.
    pub bigram: Vec<Vec<f64>>,
    pub mean_word_len: f64,
    pub mean_sentence_len: f64,
    /// Probability of emitting an extended (polysyllabic) word.
    pub polysyllable_rate: f64,
}

impl StyleParams {
    /// A style with randomly skewed character distributions.
    pub fn seeded(seed: u64, mean_word_len: f64, mean_sentence_len: f64, poly: f64) -> StyleParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = ALPHABET.len();
        // exp-skewed weights concentrate mass on a style-specific subset.
        let skew = |rng: &mut ChaCha8Rng| (7.0 * rng.gen::<f64>()).exp();
        let unigram: Vec<f64> = (0..n).map(|_| skew(&mut rng)).collect();
        let bigram: Vec<Vec<f64>> =
            (0..n).map(|_| (0..n).map(|_| skew(&mut rng)).collect()).collect();
        StyleParams {
            unigram,
            bigram,
            mean_word_len,
            mean_sentence_len,
            polysyllable_rate: poly,
        }
    }

    /// Elementwise interpolation toward `target` with weight `w` in [0,1].
    pub fn lerp(&self, target: &StyleParams, w: f64) -> StyleParams {
        let mix = |a: f64, b: f64| a + w * (b - a);
        StyleParams {
            unigram: self.unigram.iter().zip(&target.unigram).map(|(&a, &b)| mix(a, b)).collect(),
            bigram: self
                .bigram
                .iter()
                .zip(&target.bigram)
                .map(|(ra, rb)| ra.iter().zip(rb).map(|(&a, &b)| mix(a, b)).collect())
                .collect(),
            mean_word_len: mix(self.mean_word_len, target.mean_word_len),
            mean_sentence_len: mix(self.mean_sentence_len, target.mean_sentence_len),
            polysyllable_rate: mix(self.polysyllable_rate, target.polysyllable_rate),
        }
    }

    /// L2 distance between the flattened distribution parameters.
    pub fn distance(&self, other: &StyleParams) -> f64 {
        let mut acc = 0.0;
        for (&a, &b) in self.unigram.iter().zip(&other.unigram) {
            acc += (a - b) * (a - b);
        }
        for (ra, rb) in self.bigram.iter().zip(&other.bigram) {
            for (&a, &b) in ra.iter().zip(rb) {
                acc += (a - b) * (a - b);
            }
        }
        acc.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftArchetype {
    SuddenDrop,
    SteadyDecline,
    RevertAfterBreak,
    SlowDecline,
    Stable,
}

impl DriftArchetype {
    pub const ALL: [DriftArchetype; 5] = [
        DriftArchetype::SuddenDrop,
        DriftArchetype::SteadyDecline,
        DriftArchetype::RevertAfterBreak,
        DriftArchetype::SlowDecline,
        DriftArchetype::Stable,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DriftArchetype::SuddenDrop => "sudden_drop",
            DriftArchetype::SteadyDecline => "steady_decline",
            DriftArchetype::RevertAfterBreak => "revert_after_break",
            DriftArchetype::SlowDecline => "slow_decline",
            DriftArchetype::Stable => "stable",
        }
    }

    pub fn from_name(name: &str) -> Option<DriftArchetype> {
        DriftArchetype::ALL.into_iter().find(|a| a.name() == name)
    }

    /// Interpolation weight toward the target style at `month` elapsed months,
    /// for a corpus spanning `span` months. weight(0) = 0 for all archetypes.
    pub fn drift_weight(&self, month: f64, span: f64) -> f64 {
        let t = month.max(0.0);
        match self {
            DriftArchetype::Stable => 0.0,
            DriftArchetype::SuddenDrop => ((t - 9.0) / 3.0).clamp(0.0, 1.0),
            DriftArchetype::SteadyDecline => (t / span).clamp(0.0, 1.0),
            DriftArchetype::SlowDecline => 0.45 * (t / span).clamp(0.0, 1.0),
            DriftArchetype::RevertAfterBreak => {
                if t <= 10.0 {
                    0.9 * t / 10.0
                } else if t <= 18.0 {
                    0.9 - 0.65 * (t - 10.0) / 8.0
                } else {
                    0.25
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedLabel {
    pub student_id: String,
    pub archetype: DriftArchetype,
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_students: usize,
    /// Archetype weights; normalized internally, allocated proportionally.
    pub archetype_mix: Vec<(DriftArchetype, f64)>,
    pub months: f64,
    pub seed: u64,
    pub texts_min: usize,
    pub texts_max: usize,
    /// Raw body length range in characters (before the 200-char strip).
    pub body_min: usize,
    pub body_max: usize,
    /// How far each student's personal style deviates from the shared bases,
    /// in [0, 1]. Higher values make authors easier to tell apart.
    pub style_jitter: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_students: 30,
            archetype_mix: DriftArchetype::ALL.iter().map(|&a| (a, 1.0)).collect(),
            months: 30.0,
            seed: 0,
            texts_min: 6,
            texts_max: 18,
            body_min: 1000,
            body_max: 2400,
            style_jitter: 0.35,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

fn sample_index(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        x -= w;
        if x <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

fn gen_word(params: &StyleParams, rng: &mut ChaCha8Rng) -> String {
    let polysyllabic = rng.gen::<f64>() < params.polysyllable_rate;
    let mean = if polysyllabic { params.mean_word_len * 2.4 } else { params.mean_word_len };
    let jitter = rng.gen_range(-1.5..1.5);
    let len = (mean + jitter).round().max(1.0) as usize;
    let mut word = String::new();
    let mut prev = sample_index(&params.unigram, rng);
    word.push(ALPHABET[prev]);
    for _ in 1..len {
        let next = sample_index(&params.bigram[prev], rng);
        word.push(ALPHABET[next]);
        prev = next;
    }
    word
}

fn gen_body(params: &StyleParams, target_chars: usize, rng: &mut ChaCha8Rng) -> String {
    let mut body = String::with_capacity(target_chars + 64);
    while body.chars().count() < target_chars {
        let n_words =
            (params.mean_sentence_len + rng.gen_range(-2.0..2.0)).round().max(2.0) as usize;
        let mut sentence = String::new();
        for w in 0..n_words {
            let word = gen_word(params, rng);
            if w == 0 {
                let mut chars = word.chars();
                if let Some(c) = chars.next() {
                    sentence.extend(c.to_uppercase());
                    sentence.push_str(chars.as_str());
                }
            } else {
                sentence.push(' ');
                sentence.push_str(&word);
            }
        }
        sentence.push_str(". ");
        body.push_str(&sentence);
    }
    body.trim_end().to_string()
}

/// Proportional (largest-remainder) allocation of students to archetypes.
fn allocate(mix: &[(DriftArchetype, f64)], n: usize) -> Result<Vec<DriftArchetype>> {
    let total: f64 = mix.iter().map(|(_, w)| w).sum();
    if total <= 0.0 || mix.is_empty() {
        return Err(Error::Config("archetype mix weights must be positive".into()));
    }
    let mut counts: Vec<usize> =
        mix.iter().map(|(_, w)| ((w / total) * n as f64).floor() as usize).collect();
    let mut remainders: Vec<(usize, f64)> = mix
        .iter()
        .enumerate()
        .map(|(i, (_, w))| (i, (w / total) * n as f64 - counts[i] as f64))
        .collect();
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut short = n - counts.iter().sum::<usize>();
    for (i, _) in remainders {
        if short == 0 {
            break;
        }
        counts[i] += 1;
        short -= 1;
    }
    let mut out = Vec::with_capacity(n);
    for (i, (a, _)) in mix.iter().enumerate() {
        out.extend(std::iter::repeat(*a).take(counts[i]));
    }
    Ok(out)
}

/// Hand-in months for one student: uniform over the span minus vacations.
fn hand_in_months(n: usize, span: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let in_vacation =
        |m: f64| VACATIONS.iter().any(|&(a, b)| m >= a && m < b && b < span);
    let mut months = Vec::with_capacity(n);
    while months.len() < n {
        let m = rng.gen_range(0.0..span);
        if !in_vacation(m) {
            months.push(m);
        }
    }
    months.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Keep timestamps distinct at 1-hour resolution.
    for i in 1..months.len() {
        let min = months[i - 1] + 1.0 / (24.0 * DAYS_PER_MONTH);
        if months[i] < min {
            months[i] = min;
        }
    }
    months
}

/// Generate a raw corpus of `n_students` drifting writers plus the planted
/// archetype labels. Deterministic in the seed; each student draws from an
/// independent sub-seed.
pub fn gen_corpus(cfg: &SynthConfig) -> Result<(RawCorpus, Vec<PlantedLabel>)> {
    if cfg.n_students == 0 {
        return Err(Error::Config("n_students must be >= 1".into()));
    }
    if cfg.texts_min < 5 || cfg.texts_max > 40 || cfg.texts_min > cfg.texts_max {
        return Err(Error::Config("texts per student must lie within 5..=40".into()));
    }
    if !(0.0..=1.0).contains(&cfg.style_jitter) {
        return Err(Error::Config("style_jitter must lie in [0, 1]".into()));
    }
    let archetypes = allocate(&cfg.archetype_mix, cfg.n_students)?;

    let initial_base = StyleParams::seeded(cfg.seed.wrapping_add(0xA11CE), 4.6, 9.0, 0.12);
    let target_base = StyleParams::seeded(cfg.seed.wrapping_add(0xB0B0), 5.6, 13.0, 0.28);
    let start: DateTime<Utc> = "2020-08-15T10:00:00Z".parse().unwrap();

    let mut students = Vec::with_capacity(cfg.n_students);
    let mut labels = Vec::with_capacity(cfg.n_students);
    for (i, &arch) in archetypes.iter().enumerate() {
        let student_id = format!("synth{i:04}");
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(cfg.seed ^ (i as u64).wrapping_mul(0x5DEECE66D)));
        // Per-student jitter gives each writer a recognizable identity; the
        // same jitter is applied to both endpoints so the drift direction
        // stays the shared initial→target axis.
        // Structural habits (word length, sentence length, polysyllable use)
        // vary per writer along with the character distributions.
        let jitter = StyleParams::seeded(
            rng.gen(),
            rng.gen_range(3.4..6.2),
            rng.gen_range(6.0..13.0),
            rng.gen_range(0.05..0.30),
        );
        let initial = initial_base.lerp(&jitter, cfg.style_jitter);
        let target = target_base.lerp(&jitter, cfg.style_jitter);

        let n_texts = rng.gen_range(cfg.texts_min..=cfg.texts_max);
        let months = hand_in_months(n_texts, cfg.months, &mut rng);
        let first_month = months[0];
        let mut texts = Vec::with_capacity(n_texts);
        for &m in &months {
            // Drift is measured from the student's own first hand-in.
            let w = arch.drift_weight(m - first_month, cfg.months);
            let params = initial.lerp(&target, w);
            let target_chars = rng.gen_range(cfg.body_min..=cfg.body_max);
            let body = gen_body(&params, target_chars, &mut rng);
            let submitted_at = start + Duration::seconds((m * DAYS_PER_MONTH * 86_400.0) as i64);
            texts.push(RawText { student_id: student_id.clone(), submitted_at, body });
        }
        students.push(RawStudent { student_id: student_id.clone(), texts });
        labels.push(PlantedLabel { student_id, archetype: arch });
    }
    Ok((RawCorpus { students }, labels))
}
