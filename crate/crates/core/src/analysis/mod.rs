//! Cross-author similarity studies and report emission: random-pair sampling,
//! the months-in-school similarity heat map, per-cluster detail reports with
//! middle-90% bands, and corpus statistics.

pub mod svg;

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::clustering::ClusterModel;
use crate::corpus::{months_between, Corpus, StudentRecord, TextRef};
use crate::error::{Error, Result};
use crate::metrics::{quality_indicators, QualityIndicators, Tagger, TimedIndicators};
use crate::profiles::{ApproxProfile, ANALYSIS_HORIZON_MONTHS};
use crate::similarity::SimilarityModel;

/// One sampled cross-author text pair with both authors' months-in-school.
#[derive(Debug, Clone, Copy)]
pub struct PairSample {
    pub text_a: TextRef,
    pub text_b: TextRef,
    /// Months since author a's first hand-in, at text_a's date.
    pub months_a: f64,
    pub months_b: f64,
    pub similarity: f64,
}

/// Sample `n` uniform text pairs with distinct authors and report the mean
/// similarity. Deterministic per seed.
pub fn sample_pairs(
    analyze: &Corpus,
    n: usize,
    model: &dyn SimilarityModel,
    seed: u64,
) -> Result<(Vec<PairSample>, f64)> {
    if analyze.students.len() < 2 {
        return Err(Error::Data("need at least 2 students to sample cross-author pairs".into()));
    }
    if n == 0 {
        return Err(Error::Data("cannot report a mean over zero samples".into()));
    }
    let first_hand_in: Vec<_> =
        analyze.students.iter().map(|s| s.texts[0].submitted_at).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n);
    let mut total = 0.0;
    while samples.len() < n {
        let sa = rng.gen_range(0..analyze.students.len());
        let sb = rng.gen_range(0..analyze.students.len());
        if sa == sb {
            continue;
        }
        let ta = TextRef { student: sa, text: rng.gen_range(0..analyze.students[sa].texts.len()) };
        let tb = TextRef { student: sb, text: rng.gen_range(0..analyze.students[sb].texts.len()) };
        let a = analyze.text(ta);
        let b = analyze.text(tb);
        let similarity = model.similarity(&a.body, &b.body)?;
        total += similarity;
        samples.push(PairSample {
            text_a: ta,
            text_b: tb,
            months_a: months_between(first_hand_in[sa], a.submitted_at),
            months_b: months_between(first_hand_in[sb], b.submitted_at),
            similarity,
        });
    }
    Ok((samples, total / n as f64))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HeatCell {
    pub count: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl HeatCell {
    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }

    /// Standard error of the cell mean; None for fewer than 2 samples.
    pub fn std_error(&self) -> Option<f64> {
        if self.count < 2 {
            return None;
        }
        let n = self.count as f64;
        let mean = self.sum / n;
        let var = ((self.sum_sq / n) - mean * mean).max(0.0) * n / (n - 1.0);
        Some((var / n).sqrt())
    }
}

/// Mean similarity binned by both authors' months in school, at 1-month bins.
/// Storage is canonicalized to bin_a <= bin_b; lookups mirror.
#[derive(Debug, Clone)]
pub struct HeatMap {
    pub bins: usize,
    cells: Vec<Vec<HeatCell>>,
    pub dropped_out_of_range: usize,
}

impl HeatMap {
    pub fn cell(&self, i: usize, j: usize) -> &HeatCell {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        &self.cells[i][j]
    }

    /// Canonical (i <= j) populated cells as (i, j, cell).
    pub fn iter_canonical(&self) -> impl Iterator<Item = (usize, usize, &HeatCell)> {
        self.cells.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, c)| c.count > 0)
                .map(move |(j, c)| (i, j, c))
        })
    }

    pub fn global_mean(&self) -> Option<f64> {
        let (sum, count) = self
            .cells
            .iter()
            .flatten()
            .fold((0.0, 0usize), |(s, n), c| (s + c.sum, n + c.count));
        (count > 0).then(|| sum / count as f64)
    }
}

/// Bin samples into the 30x30 months-in-school heat map.
pub fn heatmap(samples: &[PairSample]) -> Result<HeatMap> {
    if samples.is_empty() {
        return Err(Error::Data("heat map needs at least one sample".into()));
    }
    let bins = ANALYSIS_HORIZON_MONTHS as usize;
    let mut map =
        HeatMap { bins, cells: vec![vec![HeatCell::default(); bins]; bins], dropped_out_of_range: 0 };
    for s in samples {
        let a = s.months_a.floor();
        let b = s.months_b.floor();
        if a < 0.0 || b < 0.0 || a >= bins as f64 || b >= bins as f64 {
            map.dropped_out_of_range += 1;
            continue;
        }
        let (i, j) = {
            let (a, b) = (a as usize, b as usize);
            if a <= b {
                (a, b)
            } else {
                (b, a)
            }
        };
        let cell = &mut map.cells[i][j];
        cell.count += 1;
        cell.sum += s.similarity;
        cell.sum_sq += s.similarity * s.similarity;
    }
    Ok(map)
}

/// Linear-interpolation percentile of a sorted slice, p in [0, 100].
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
    }
}

#[derive(Debug, Clone)]
pub struct ClusterDetail {
    pub members: usize,
    /// Centroid truncated at the 30-month horizon.
    pub centroid: Vec<f64>,
    /// (p5, p95) per grid point, over members whose profile reaches it.
    pub band: Vec<(f64, f64)>,
    pub quality: Vec<Option<QualityIndicators>>,
}

#[derive(Debug, Clone)]
pub struct ClusterReport {
    pub step: f64,
    pub clusters: Vec<ClusterDetail>,
}

/// Quality indicators of a student's texts positioned on the profile axis
/// (texts before t_m are excluded).
pub fn timed_indicators(
    student: &StudentRecord,
    m: usize,
    tagger: &dyn Tagger,
) -> Result<Vec<TimedIndicators>> {
    if student.texts.len() < m {
        return Err(Error::Data(format!("student {} has fewer than m texts", student.student_id)));
    }
    let anchor = student.texts[m - 1].submitted_at;
    let last_tau = months_between(anchor, student.texts.last().unwrap().submitted_at);
    student.texts[m - 1..]
        .iter()
        .map(|t| {
            Ok(TimedIndicators {
                tau: months_between(anchor, t.submitted_at),
                author_last_tau: last_tau,
                indicators: quality_indicators(&t.body, tagger)?,
            })
        })
        .collect()
}

/// Per-cluster member counts, truncated centroid curves, middle-90% bands and
/// smoothed quality-indicator curves. `texts[i]` must hold the timed
/// indicators for the student behind `profiles[i]`.
pub fn cluster_report(
    model: &ClusterModel,
    profiles: &[ApproxProfile],
    texts: &[Vec<TimedIndicators>],
    step: f64,
    smoothing_window: f64,
) -> ClusterReport {
    let horizon_len = (ANALYSIS_HORIZON_MONTHS / step).floor() as usize + 1;
    let k = model.centroids.len();
    let clusters = (0..k)
        .map(|r| {
            let member_idx: Vec<usize> =
                (0..profiles.len()).filter(|&i| model.assignments[i] == r).collect();
            let centroid: Vec<f64> =
                model.centroids[r].iter().take(horizon_len).cloned().collect();
            let mut band = Vec::with_capacity(centroid.len());
            for j in 0..centroid.len() {
                let mut vals: Vec<f64> = member_idx
                    .iter()
                    .filter_map(|&i| profiles[i].values.get(j).cloned())
                    .collect();
                vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                if vals.is_empty() {
                    band.push((centroid[j], centroid[j]));
                } else {
                    band.push((percentile(&vals, 5.0), percentile(&vals, 95.0)));
                }
            }
            let member_texts: Vec<TimedIndicators> =
                member_idx.iter().flat_map(|&i| texts[i].iter().cloned()).collect();
            let quality = crate::metrics::cluster_quality_curves(
                &member_texts,
                centroid.len(),
                step,
                smoothing_window,
            );
            ClusterDetail { members: member_idx.len(), centroid, band, quality }
        })
        .collect();
    ClusterReport { step, clusters }
}

#[derive(Debug, Clone, Default)]
pub struct CorpusStats {
    /// texts-per-student histogram (bin = text count).
    pub texts_per_student: Vec<(usize, usize)>,
    /// hand-ins per whole month since each author's first hand-in.
    pub hand_ins_per_month: Vec<(usize, usize)>,
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let mut per_student: BTreeMap<usize, usize> = BTreeMap::new();
    let mut per_month: BTreeMap<usize, usize> = BTreeMap::new();
    for s in &corpus.students {
        *per_student.entry(s.texts.len()).or_insert(0) += 1;
        if let Some(first) = s.texts.first() {
            for t in &s.texts {
                let m = months_between(first.submitted_at, t.submitted_at).floor().max(0.0);
                *per_month.entry(m as usize).or_insert(0) += 1;
            }
        }
    }
    CorpusStats {
        texts_per_student: per_student.into_iter().collect(),
        hand_ins_per_month: per_month.into_iter().collect(),
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Data(e.to_string()))
}

/// Emit `heatmap.csv` (canonical cells) and `heatmap.svg` (mirrored display).
pub fn write_heatmap(map: &HeatMap, dir: &Path) -> Result<()> {
    let mut w = csv_writer(&dir.join("heatmap.csv"))?;
    w.write_record(["month_a", "month_b", "mean_sim", "count"])
        .map_err(|e| Error::Data(e.to_string()))?;
    for (i, j, cell) in map.iter_canonical() {
        w.write_record([
            i.to_string(),
            j.to_string(),
            cell.mean().unwrap().to_string(),
            cell.count.to_string(),
        ])
        .map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush()?;

    let cells: Vec<Vec<Option<f64>>> = (0..map.bins)
        .map(|i| (0..map.bins).map(|j| map.cell(i, j).mean()).collect())
        .collect();
    std::fs::write(
        dir.join("heatmap.svg"),
        svg::heatmap_chart("Mean cross-author similarity by months in school", &cells),
    )?;
    Ok(())
}

/// Emit `cluster_report/<r>/{centroid.csv,band.csv,indicators.csv,plot.svg}`.
pub fn write_cluster_report(report: &ClusterReport, dir: &Path) -> Result<()> {
    for (r, c) in report.clusters.iter().enumerate() {
        let cdir = dir.join("cluster_report").join(r.to_string());
        std::fs::create_dir_all(&cdir)?;

        let mut w = csv_writer(&cdir.join("centroid.csv"))?;
        w.write_record(["grid_index", "value"]).map_err(|e| Error::Data(e.to_string()))?;
        for (j, v) in c.centroid.iter().enumerate() {
            w.write_record([j.to_string(), v.to_string()])
                .map_err(|e| Error::Data(e.to_string()))?;
        }
        w.flush()?;

        let mut w = csv_writer(&cdir.join("band.csv"))?;
        w.write_record(["grid_index", "p5", "p95"]).map_err(|e| Error::Data(e.to_string()))?;
        for (j, (lo, hi)) in c.band.iter().enumerate() {
            w.write_record([j.to_string(), lo.to_string(), hi.to_string()])
                .map_err(|e| Error::Data(e.to_string()))?;
        }
        w.flush()?;

        let mut w = csv_writer(&cdir.join("indicators.csv"))?;
        w.write_record([
            "grid_index",
            "smog",
            "nouns_per_sentence",
            "verbs_per_sentence",
            "word_count",
            "avg_word_len",
        ])
        .map_err(|e| Error::Data(e.to_string()))?;
        for (j, q) in c.quality.iter().enumerate() {
            if let Some(q) = q {
                w.write_record([
                    j.to_string(),
                    q.smog.to_string(),
                    q.noun_phrases.to_string(),
                    q.verb_phrases.to_string(),
                    q.word_count.to_string(),
                    q.avg_word_length.to_string(),
                ])
                .map_err(|e| Error::Data(e.to_string()))?;
            }
        }
        w.flush()?;

        let curve = svg::Series {
            points: c
                .centroid
                .iter()
                .enumerate()
                .map(|(j, &v)| (j as f64 * report.step, Some(v)))
                .collect(),
            color: "steelblue",
            dashed: false,
        };
        let band: Vec<(f64, f64, f64)> = c
            .band
            .iter()
            .enumerate()
            .map(|(j, &(lo, hi))| (j as f64 * report.step, lo, hi))
            .collect();
        let svg_text = svg::line_chart(
            &format!("Cluster {r} ({} members)", c.members),
            "months",
            "similarity",
            &[curve],
            Some((&band, "steelblue")),
        );
        std::fs::write(cdir.join("plot.svg"), svg_text)?;
    }
    Ok(())
}

/// Emit `corpus_stats.csv` plus histogram SVGs.
pub fn write_corpus_stats(stats: &CorpusStats, dir: &Path) -> Result<()> {
    let mut w = csv_writer(&dir.join("corpus_stats.csv"))?;
    w.write_record(["histogram", "bin", "count"]).map_err(|e| Error::Data(e.to_string()))?;
    for &(bin, count) in &stats.texts_per_student {
        w.write_record(["texts_per_student".into(), bin.to_string(), count.to_string()])
            .map_err(|e| Error::Data(e.to_string()))?;
    }
    for &(bin, count) in &stats.hand_ins_per_month {
        w.write_record(["hand_ins_per_month".into(), bin.to_string(), count.to_string()])
            .map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush()?;
    std::fs::write(
        dir.join("corpus_stats.svg"),
        svg::histogram("Texts per student", "#texts", "#students", &stats.texts_per_student),
    )?;
    std::fs::write(
        dir.join("corpus_stats_months.svg"),
        svg::histogram("Hand-ins per month", "months", "#texts", &stats.hand_ins_per_month),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CleanText;
    use approx::assert_abs_diff_eq;

    fn sample(ma: f64, mb: f64, sim: f64) -> PairSample {
        PairSample {
            text_a: TextRef { student: 0, text: 0 },
            text_b: TextRef { student: 1, text: 0 },
            months_a: ma,
            months_b: mb,
            similarity: sim,
        }
    }

    #[test]
    fn heatmap_single_cell_mean() {
        let map = heatmap(&[sample(0.2, 0.8, 0.2), sample(0.9, 0.1, 0.4)]).unwrap();
        let cell = map.cell(0, 0);
        assert_eq!(cell.count, 2);
        assert_abs_diff_eq!(cell.mean().unwrap(), 0.3, epsilon = 1e-12);
        assert_eq!(map.cell(1, 1).count, 0);
    }

    #[test]
    fn heatmap_canonicalizes_order() {
        let map = heatmap(&[sample(5.5, 2.5, 0.6)]).unwrap();
        assert_eq!(map.cell(2, 5).count, 1);
        assert_eq!(map.cell(5, 2).count, 1);
    }

    #[test]
    fn heatmap_drops_out_of_horizon() {
        let map = heatmap(&[sample(31.0, 2.0, 0.6), sample(1.0, 1.0, 0.5)]).unwrap();
        assert_eq!(map.dropped_out_of_range, 1);
    }

    #[test]
    fn percentile_matches_brute_force() {
        let vals = [0.1, 0.4, 0.2, 0.9, 0.5];
        let mut sorted = vals.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_abs_diff_eq!(percentile(&sorted, 0.0), 0.1);
        assert_abs_diff_eq!(percentile(&sorted, 100.0), 0.9);
        assert_abs_diff_eq!(percentile(&sorted, 50.0), 0.4);
        // rank 0.2: between 0.1 and 0.2.
        assert_abs_diff_eq!(percentile(&sorted, 5.0), 0.12, epsilon = 1e-12);
    }

    struct Const(f64);
    impl SimilarityModel for Const {
        fn similarity(&self, _: &str, _: &str) -> crate::Result<f64> {
            Ok(self.0)
        }
    }

    fn tiny_corpus() -> Corpus {
        let mk = |id: &str, n: usize| StudentRecord {
            student_id: id.into(),
            texts: (0..n)
                .map(|j| CleanText {
                    student_id: id.into(),
                    submitted_at: format!("2020-{:02}-01T00:00:00Z", j + 9).parse().unwrap(),
                    body: "En tekst her. Den er kort.".into(),
                    char_len: 26,
                })
                .collect(),
        };
        Corpus { students: vec![mk("a", 3), mk("b", 3)] }
    }

    #[test]
    fn sample_pairs_distinct_authors_and_mean() {
        let corpus = tiny_corpus();
        let (samples, mean) = sample_pairs(&corpus, 50, &Const(0.25), 3).unwrap();
        assert_eq!(samples.len(), 50);
        assert_abs_diff_eq!(mean, 0.25, epsilon = 1e-12);
        for s in &samples {
            assert_ne!(s.text_a.student, s.text_b.student);
            assert!(s.months_a >= 0.0 && s.months_b >= 0.0);
        }
    }

    #[test]
    fn sample_pairs_zero_n_errors() {
        let corpus = tiny_corpus();
        assert!(sample_pairs(&corpus, 0, &Const(0.5), 1).is_err());
    }

    #[test]
    fn sample_pairs_one_student_errors() {
        let mut corpus = tiny_corpus();
        corpus.students.truncate(1);
        assert!(sample_pairs(&corpus, 5, &Const(0.5), 1).is_err());
    }

    #[test]
    fn single_member_cluster_band_collapses() {
        let profiles = vec![ApproxProfile {
            student_id: "a".into(),
            values: vec![0.9, 0.8, 0.7],
            step: 0.05,
        }];
        let model = ClusterModel {
            centroids: vec![vec![0.9, 0.8, 0.7]],
            assignments: vec![0],
            error: 0.0,
            iterations: 1,
            error_trace: vec![0.0],
        };
        let report = cluster_report(&model, &profiles, &[vec![]], 0.05, 1.0);
        let c = &report.clusters[0];
        assert_eq!(c.members, 1);
        for (j, &(lo, hi)) in c.band.iter().enumerate() {
            assert_abs_diff_eq!(lo, c.centroid[j]);
            assert_abs_diff_eq!(hi, c.centroid[j]);
        }
    }

    #[test]
    fn band_contains_centroid_with_members() {
        let profiles: Vec<ApproxProfile> = (0..10)
            .map(|i| ApproxProfile {
                student_id: format!("s{i}"),
                values: vec![0.5 + i as f64 * 0.02, 0.4 + i as f64 * 0.02],
                step: 0.05,
            })
            .collect();
        let views: Vec<&[f64]> = profiles.iter().map(|p| p.values.as_slice()).collect();
        let assignments = vec![0usize; 10];
        let centroids = crate::clustering::update_centroids(&views, &assignments, 1, &[]);
        let model = ClusterModel {
            centroids,
            assignments,
            error: 0.0,
            iterations: 1,
            error_trace: vec![],
        };
        let texts: Vec<Vec<TimedIndicators>> = vec![vec![]; 10];
        let report = cluster_report(&model, &profiles, &texts, 0.05, 1.0);
        let c = &report.clusters[0];
        for (j, &(lo, hi)) in c.band.iter().enumerate() {
            assert!(lo <= c.centroid[j] && c.centroid[j] <= hi);
        }
    }

    #[test]
    fn corpus_stats_histograms() {
        let corpus = {
            let mk = |id: &str, n: usize| StudentRecord {
                student_id: id.into(),
                texts: (0..n)
                    .map(|j| CleanText {
                        student_id: id.into(),
                        submitted_at: ("2020-09-01T00:00:00Z".parse::<chrono::DateTime<chrono::Utc>>().unwrap()
                            + chrono::Duration::days(40 * j as i64)),
                        body: "x".into(),
                        char_len: 1,
                    })
                    .collect(),
            };
            Corpus { students: vec![mk("a", 5), mk("b", 7)] }
        };
        let stats = corpus_stats(&corpus);
        assert_eq!(stats.texts_per_student, vec![(5, 1), (7, 1)]);
        let total: usize = stats.hand_ins_per_month.iter().map(|&(_, c)| c).sum();
        assert_eq!(total, 12);
    }

    #[test]
    fn corpus_stats_empty() {
        let stats = corpus_stats(&Corpus::default());
        assert!(stats.texts_per_student.is_empty());
        assert!(stats.hand_ins_per_month.is_empty());
    }
}
