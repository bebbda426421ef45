//! Pipeline driver. Every stage reads the previous stage's artifacts from the
//! output directory and writes its own, so runs are resumable and, for a fixed
//! config and seed, byte-identical.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use styledev::analysis::{
    self, cluster_report, corpus_stats, heatmap, sample_pairs, timed_indicators,
};
use styledev::clustering::{elbow_scan, kmeans_restarts, ClusterModel};
use styledev::corpus::{
    self, clean_corpus, drop_sparse_students, gen_sim_instances, split_authors, CleanConfig,
    Corpus, SimInstance, SplitSpec, TextRef,
};
use styledev::error::{Error, Result};
use styledev::metrics::{SuffixTagger, TimedIndicators};
use styledev::profiles::{build_profile, interpolate, ApproxProfile};
use styledev::similarity::{
    evaluate, train, ArchShape, NgramCosine, SiameseNet, SimilarityModel, TrainConfig,
};
use styledev::synth::{gen_corpus, DriftArchetype, SynthConfig};

#[derive(Parser)]
#[command(name = "styledev", about = "Writing-style development analysis pipeline")]
struct Cli {
    /// TOML config file; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory holding all stage artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Master seed; stages derive their own sub-seeds from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic corpus with planted drift archetypes.
    Synth {
        #[arg(long)]
        students: Option<usize>,
    },
    /// Parse and deduplicate a raw line-delimited JSON corpus.
    Ingest {
        /// Raw corpus file; defaults to [paths].raw or the synth output.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Strip prefixes, pseudonymize names and drop out-of-range texts.
    Clean,
    /// Author-level train/val/analyze split.
    Split,
    /// Generate balanced same-author/cross-author training pairs.
    Pairs,
    /// Train the similarity network.
    Train {
        /// Architecture preset: "paper" or "desk".
        #[arg(long)]
        preset: Option<String>,
    },
    /// Evaluate the trained network on the held-out validation pairs.
    Eval,
    /// Build and interpolate per-student development profiles.
    Profile {
        #[arg(long)]
        m: Option<usize>,
    },
    /// Cluster profiles with prefix-distance k-means at a fixed k.
    Cluster {
        #[arg(long)]
        k: Option<usize>,
    },
    /// Scan k over a range and pick the elbow.
    Elbow {
        /// Inclusive range, e.g. "2..9".
        #[arg(long)]
        k: Option<String>,
    },
    /// Per-text writing-quality indicators.
    Quality,
    /// Cross-author random-pair sampling and the months-in-school heat map.
    Heatmap {
        #[arg(long)]
        pairs: Option<usize>,
    },
    /// Cluster detail reports and corpus statistics.
    Report,
    /// Run every stage in order.
    All,
}

// ---------------------------------------------------------------------------
// Config file

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    seed: u64,
    paths: PathsSection,
    synth: SynthSection,
    clean: CleanSection,
    split: SplitSection,
    train: TrainSection,
    profile: ProfileSection,
    cluster: ClusterSection,
    quality: QualitySection,
    analysis: AnalysisSection,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 42,
            paths: PathsSection::default(),
            synth: SynthSection::default(),
            clean: CleanSection::default(),
            split: SplitSection::default(),
            train: TrainSection::default(),
            profile: ProfileSection::default(),
            cluster: ClusterSection::default(),
            quality: QualitySection::default(),
            analysis: AnalysisSection::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PathsSection {
    /// External raw corpus; when set, `all` skips the synth stage.
    raw: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SynthSection {
    students: usize,
    months: f64,
    texts_min: usize,
    texts_max: usize,
    body_min: usize,
    body_max: usize,
    style_jitter: f64,
    /// Archetype name -> relative weight; empty = uniform over all five.
    mix: BTreeMap<String, f64>,
    seed: Option<u64>,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            students: 30,
            months: 30.0,
            texts_min: 6,
            texts_max: 18,
            body_min: 1000,
            body_max: 2400,
            style_jitter: 0.35,
            mix: BTreeMap::new(),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CleanSection {
    strip_prefix: usize,
    min_len: usize,
    max_len: usize,
    /// Students with fewer cleaned texts than this are dropped.
    min_texts: usize,
}

impl Default for CleanSection {
    fn default() -> Self {
        let c = CleanConfig::default();
        CleanSection {
            strip_prefix: c.strip_prefix,
            min_len: c.min_len,
            max_len: c.max_len,
            min_texts: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SplitSection {
    ratios: [f64; 3],
    seed: Option<u64>,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection { ratios: [0.8, 0.1, 0.1], seed: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainSection {
    preset: String,
    learning_rate: f64,
    batch_size: usize,
    max_epochs: usize,
    patience: usize,
    vocab_min_freq: usize,
    seed: Option<u64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            preset: "desk".into(),
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            vocab_min_freq: t.vocab_min_freq,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ProfileSection {
    m: usize,
    step: f64,
    /// Similarity backend: "ngram" or "net" (requires a trained model).
    backend: String,
    ngram_n: usize,
}

impl Default for ProfileSection {
    fn default() -> Self {
        ProfileSection { m: 2, step: 0.05, backend: "ngram".into(), ngram_n: 4 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ClusterSection {
    k: usize,
    k_min: usize,
    k_max: usize,
    restarts: usize,
    max_iter: usize,
    tol: f64,
    seed: Option<u64>,
}

impl Default for ClusterSection {
    fn default() -> Self {
        ClusterSection { k: 5, k_min: 2, k_max: 9, restarts: 10, max_iter: 100, tol: 1e-6, seed: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct QualitySection {
    /// Smoothing window in months for the cluster quality curves.
    window: f64,
}

impl Default for QualitySection {
    fn default() -> Self {
        QualitySection { window: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AnalysisSection {
    /// Cross-author pairs sampled for the heat map.
    pairs: usize,
    seed: Option<u64>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection { pairs: 2000, seed: None }
    }
}

impl Config {
    fn load(path: Option<&Path>) -> Result<Config> {
        let mut cfg = match path {
            None => Config::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    Error::Config(format!("cannot read config {}: {e}", p.display()))
                })?;
                toml::from_str(&text).map_err(|e| Error::Config(format!("bad config: {e}")))?
            }
        };
        if cfg.synth.mix.is_empty() {
            cfg.synth.mix =
                DriftArchetype::ALL.iter().map(|a| (a.name().to_string(), 1.0)).collect();
        }
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        SplitSpec { ratios: self.split.ratios, seed: 0 }.validate()?;
        if self.synth.students == 0 {
            return Err(Error::Config("synth.students must be >= 1".into()));
        }
        if self.synth.texts_min < 1 || self.synth.texts_max < self.synth.texts_min {
            return Err(Error::Config("synth.texts_min..texts_max is not a valid range".into()));
        }
        if self.clean.min_len >= self.clean.max_len {
            return Err(Error::Config("clean.min_len must be below clean.max_len".into()));
        }
        if self.profile.m < 1 {
            return Err(Error::Config("profile.m must be >= 1".into()));
        }
        if self.profile.step <= 0.0 {
            return Err(Error::Config("profile.step must be positive".into()));
        }
        if !matches!(self.profile.backend.as_str(), "ngram" | "net") {
            return Err(Error::Config(format!(
                "profile.backend must be \"ngram\" or \"net\", got {:?}",
                self.profile.backend
            )));
        }
        if self.profile.ngram_n < 1 {
            return Err(Error::Config("profile.ngram_n must be >= 1".into()));
        }
        if !matches!(self.train.preset.as_str(), "paper" | "desk") {
            return Err(Error::Config(format!(
                "train.preset must be \"paper\" or \"desk\", got {:?}",
                self.train.preset
            )));
        }
        if self.cluster.k < 1 {
            return Err(Error::Config("cluster.k must be >= 1".into()));
        }
        if self.cluster.k_min < 1 || self.cluster.k_max < self.cluster.k_min {
            return Err(Error::Config("cluster.k_min..k_max is not a valid range".into()));
        }
        if self.cluster.restarts < 1 {
            return Err(Error::Config("cluster.restarts must be >= 1".into()));
        }
        if self.quality.window <= 0.0 {
            return Err(Error::Config("quality.window must be positive".into()));
        }
        if self.analysis.pairs < 1 {
            return Err(Error::Config("analysis.pairs must be >= 1".into()));
        }
        for name in self.synth.mix.keys() {
            if DriftArchetype::from_name(name).is_none() {
                return Err(Error::Config(format!("unknown archetype {name:?} in synth.mix")));
            }
        }
        Ok(())
    }

    fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            n_students: self.synth.students,
            archetype_mix: self
                .synth
                .mix
                .iter()
                .map(|(n, &w)| (DriftArchetype::from_name(n).unwrap(), w))
                .collect(),
            months: self.synth.months,
            seed: self.synth.seed.unwrap_or_else(|| derive_seed(self.seed, 1)),
            texts_min: self.synth.texts_min,
            texts_max: self.synth.texts_max,
            body_min: self.synth.body_min,
            body_max: self.synth.body_max,
            style_jitter: self.synth.style_jitter,
        }
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
            max_epochs: self.train.max_epochs,
            patience: self.train.patience,
            vocab_min_freq: self.train.vocab_min_freq,
            seed: self.train.seed.unwrap_or_else(|| derive_seed(self.seed, 4)),
            ..TrainConfig::default()
        }
    }
}

/// splitmix64 step; each stage gets an independent stream from the master seed.
fn derive_seed(master: u64, stage: u64) -> u64 {
    let mut z = master.wrapping_add(stage.wrapping_mul(0x9e3779b97f4a7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

// ---------------------------------------------------------------------------
// Artifact plumbing

struct Paths {
    out: PathBuf,
}

impl Paths {
    fn raw(&self) -> PathBuf {
        self.out.join("raw.jsonl")
    }
    fn planted(&self) -> PathBuf {
        self.out.join("planted.csv")
    }
    fn ingested(&self) -> PathBuf {
        self.out.join("ingested.jsonl")
    }
    fn clean(&self) -> PathBuf {
        self.out.join("clean.jsonl")
    }
    fn split(&self, name: &str) -> PathBuf {
        self.out.join(format!("{name}.jsonl"))
    }
    fn pairs(&self, name: &str) -> PathBuf {
        self.out.join(format!("pairs_{name}.csv"))
    }
    fn model(&self) -> PathBuf {
        self.out.join("model.json")
    }
    fn training_log(&self) -> PathBuf {
        self.out.join("training_log.csv")
    }
    fn profiles(&self) -> PathBuf {
        self.out.join("profiles.csv")
    }
    fn assignments(&self) -> PathBuf {
        self.out.join("assignments.csv")
    }
    fn centroids(&self) -> PathBuf {
        self.out.join("centroids.csv")
    }
}

fn require(path: &Path, stage: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingStage { stage: stage.into(), path: path.display().to_string() })
    }
}

fn write_pairs(pairs: &[SimInstance], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["student_a", "text_a", "student_b", "text_b", "label"])?;
    for p in pairs {
        w.write_record([
            p.text_a.student.to_string(),
            p.text_a.text.to_string(),
            p.text_b.student.to_string(),
            p.text_b.text.to_string(),
            (p.label as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn read_pairs(path: &Path) -> Result<Vec<SimInstance>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut pairs = Vec::new();
    for rec in r.deserialize() {
        let (sa, ta, sb, tb, label): (usize, usize, usize, usize, u8) = rec?;
        pairs.push(SimInstance {
            text_a: TextRef { student: sa, text: ta },
            text_b: TextRef { student: sb, text: tb },
            label: label != 0,
        });
    }
    Ok(pairs)
}

fn write_profiles(profiles: &[ApproxProfile], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["student_id", "grid_index", "value"])?;
    for p in profiles {
        for (j, v) in p.values.iter().enumerate() {
            w.write_record([p.student_id.clone(), j.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_profiles(path: &Path, step: f64) -> Result<Vec<ApproxProfile>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut by_student: BTreeMap<String, Vec<(usize, f64)>> = BTreeMap::new();
    for rec in r.deserialize() {
        let (id, j, v): (String, usize, f64) = rec?;
        by_student.entry(id).or_default().push((j, v));
    }
    by_student
        .into_iter()
        .map(|(student_id, mut rows)| {
            rows.sort_by_key(|&(j, _)| j);
            for (pos, &(j, _)) in rows.iter().enumerate() {
                if pos != j {
                    return Err(Error::Data(format!(
                        "profile for {student_id} has a gap at grid index {pos}"
                    )));
                }
            }
            Ok(ApproxProfile {
                student_id,
                values: rows.into_iter().map(|(_, v)| v).collect(),
                step,
            })
        })
        .collect()
}

/// The similarity function used by profile/heatmap stages.
fn backend(cfg: &Config, paths: &Paths) -> Result<Box<dyn SimilarityModel>> {
    match cfg.profile.backend.as_str() {
        "ngram" => Ok(Box::new(NgramCosine { n: cfg.profile.ngram_n })),
        "net" => {
            require(&paths.model(), "train")?;
            Ok(Box::new(SiameseNet::load(&paths.model())?))
        }
        other => Err(Error::Config(format!("unknown similarity backend {other:?}"))),
    }
}

fn read_corpus(path: &Path, stage: &str) -> Result<Corpus> {
    require(path, stage)?;
    corpus::read_clean_jsonl(path)
}

// ---------------------------------------------------------------------------
// Stages

fn stage_synth(cfg: &Config, paths: &Paths) -> Result<()> {
    let (raw, planted) = gen_corpus(&cfg.synth_config())?;
    corpus::write_raw_jsonl(&raw, &paths.raw())?;
    let mut w = csv::Writer::from_path(paths.planted())?;
    w.write_record(["student_id", "archetype"])?;
    for p in &planted {
        w.write_record([p.student_id.as_str(), p.archetype.name()])?;
    }
    w.flush()?;
    let texts: usize = raw.students.iter().map(|s| s.texts.len()).sum();
    println!("synth: {} students, {texts} texts", raw.students.len());
    Ok(())
}

fn stage_ingest(cfg: &Config, paths: &Paths, input: Option<&Path>) -> Result<()> {
    let input = input
        .map(Path::to_path_buf)
        .or_else(|| cfg.paths.raw.clone())
        .unwrap_or_else(|| paths.raw());
    require(&input, "synth")?;
    let (raw, stats) = corpus::ingest(&input)?;
    corpus::write_raw_jsonl(&raw, &paths.ingested())?;
    println!(
        "ingest: {} records, {} duplicates dropped, {} students",
        stats.lines,
        stats.duplicates_dropped,
        raw.students.len()
    );
    Ok(())
}

fn stage_clean(cfg: &Config, paths: &Paths) -> Result<()> {
    require(&paths.ingested(), "ingest")?;
    let (raw, _) = corpus::ingest(&paths.ingested())?;
    let clean_cfg = CleanConfig {
        strip_prefix: cfg.clean.strip_prefix,
        min_len: cfg.clean.min_len,
        max_len: cfg.clean.max_len,
    };
    let (cleaned, report) = clean_corpus(&raw, &clean_cfg);
    let cleaned = drop_sparse_students(cleaned, cfg.clean.min_texts);
    corpus::write_corpus_jsonl(&cleaned, &paths.clean())?;
    println!(
        "clean: kept {}, rejected {} short / {} long, {} students remain",
        report.kept,
        report.rejected_short,
        report.rejected_long,
        cleaned.students.len()
    );
    Ok(())
}

fn stage_split(cfg: &Config, paths: &Paths) -> Result<()> {
    let cleaned = read_corpus(&paths.clean(), "clean")?;
    let spec = SplitSpec {
        ratios: cfg.split.ratios,
        seed: cfg.split.seed.unwrap_or_else(|| derive_seed(cfg.seed, 2)),
    };
    let (train, val, analyze) = split_authors(&cleaned, &spec)?;
    corpus::write_corpus_jsonl(&train, &paths.split("train"))?;
    corpus::write_corpus_jsonl(&val, &paths.split("val"))?;
    corpus::write_corpus_jsonl(&analyze, &paths.split("analyze"))?;
    println!(
        "split: {} train / {} val / {} analyze students",
        train.students.len(),
        val.students.len(),
        analyze.students.len()
    );
    Ok(())
}

fn stage_pairs(cfg: &Config, paths: &Paths) -> Result<()> {
    let seed = derive_seed(cfg.seed, 3);
    for (i, name) in ["train", "val"].iter().enumerate() {
        let corpus = read_corpus(&paths.split(name), "split")?;
        let pairs = gen_sim_instances(&corpus, seed.wrapping_add(i as u64))?;
        write_pairs(&pairs, &paths.pairs(name))?;
        println!("pairs: {} {name} instances", pairs.len());
    }
    Ok(())
}

fn stage_train(cfg: &Config, paths: &Paths, preset: Option<&str>) -> Result<()> {
    let preset = preset.unwrap_or(&cfg.train.preset);
    let shape = match preset {
        "paper" => ArchShape::paper(),
        "desk" => ArchShape::desk(),
        other => return Err(Error::Config(format!("unknown preset {other:?}"))),
    };
    let train_corpus = read_corpus(&paths.split("train"), "split")?;
    let val_corpus = read_corpus(&paths.split("val"), "split")?;
    require(&paths.pairs("train"), "pairs")?;
    let train_pairs = read_pairs(&paths.pairs("train"))?;
    let val_pairs = read_pairs(&paths.pairs("val"))?;
    let (net, log) =
        train(&train_corpus, &train_pairs, &val_corpus, &val_pairs, shape, &cfg.train_config())?;
    net.save(&paths.model())?;
    log.write_csv(&paths.training_log())?;
    let best = &log.epochs[log.selected_epoch - 1];
    println!(
        "train: selected epoch {} (val loss {:.4}, val acc {:.4})",
        log.selected_epoch, best.val_loss, best.val_acc
    );
    Ok(())
}

fn stage_eval(_cfg: &Config, paths: &Paths) -> Result<()> {
    require(&paths.model(), "train")?;
    let net = SiameseNet::load(&paths.model())?;
    let val_corpus = read_corpus(&paths.split("val"), "split")?;
    require(&paths.pairs("val"), "pairs")?;
    let val_pairs = read_pairs(&paths.pairs("val"))?;
    let (loss, acc) = evaluate(&net, &val_corpus, &val_pairs)?;
    let mut w = csv::Writer::from_path(cfg_out(paths, "eval.csv"))?;
    w.write_record(["pairs", "loss", "accuracy"])?;
    w.write_record([val_pairs.len().to_string(), loss.to_string(), acc.to_string()])?;
    w.flush()?;
    println!("eval: loss {loss:.4}, accuracy {acc:.4} over {} pairs", val_pairs.len());
    Ok(())
}

fn stage_profile(cfg: &Config, paths: &Paths, m: Option<usize>) -> Result<()> {
    let m = m.unwrap_or(cfg.profile.m);
    if m < 1 {
        return Err(Error::Config("m must be >= 1".into()));
    }
    let cleaned = read_corpus(&paths.clean(), "clean")?;
    let model = backend(cfg, paths)?;
    let mut profiles = Vec::new();
    let mut skipped = 0usize;
    for student in &cleaned.students {
        if student.texts.len() < m {
            skipped += 1;
            continue;
        }
        let profile = build_profile(student, model.as_ref(), m)?;
        profiles.push(interpolate(&profile, cfg.profile.step)?);
    }
    if profiles.is_empty() {
        return Err(Error::Data("no student has enough texts to profile".into()));
    }
    write_profiles(&profiles, &paths.profiles())?;
    println!("profile: {} profiles written, {skipped} students skipped", profiles.len());
    Ok(())
}

fn stage_cluster(cfg: &Config, paths: &Paths, k: Option<usize>) -> Result<()> {
    let k = k.unwrap_or(cfg.cluster.k);
    require(&paths.profiles(), "profile")?;
    let profiles = read_profiles(&paths.profiles(), cfg.profile.step)?;
    let seed = cfg.cluster.seed.unwrap_or_else(|| derive_seed(cfg.seed, 6));
    let model =
        kmeans_restarts(&profiles, k, seed, cfg.cluster.restarts, cfg.cluster.max_iter, cfg.cluster.tol)?;

    let mut w = csv::Writer::from_path(paths.assignments())?;
    w.write_record(["student_id", "cluster"])?;
    for (p, &a) in profiles.iter().zip(&model.assignments) {
        w.write_record([p.student_id.clone(), a.to_string()])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(paths.centroids())?;
    w.write_record(["cluster", "grid_index", "value"])?;
    for (r, c) in model.centroids.iter().enumerate() {
        for (j, v) in c.iter().enumerate() {
            w.write_record([r.to_string(), j.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    println!(
        "cluster: k = {k}, error {:.6} after {} iterations",
        model.error, model.iterations
    );
    Ok(())
}

fn parse_k_range(text: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = text.split("..").collect();
    let err = || Error::Config(format!("bad k range {text:?}; expected e.g. 2..9"));
    if parts.len() != 2 {
        return Err(err());
    }
    let lo: usize = parts[0].trim().parse().map_err(|_| err())?;
    let hi: usize = parts[1].trim().parse().map_err(|_| err())?;
    if lo < 1 || hi < lo {
        return Err(err());
    }
    Ok((lo, hi))
}

fn stage_elbow(cfg: &Config, paths: &Paths, k: Option<&str>) -> Result<()> {
    let (lo, hi) = match k {
        Some(text) => parse_k_range(text)?,
        None => (cfg.cluster.k_min, cfg.cluster.k_max),
    };
    require(&paths.profiles(), "profile")?;
    let profiles = read_profiles(&paths.profiles(), cfg.profile.step)?;
    let seed = cfg.cluster.seed.unwrap_or_else(|| derive_seed(cfg.seed, 6));
    let scan =
        elbow_scan(&profiles, lo..=hi, cfg.cluster.restarts, seed, cfg.cluster.max_iter, cfg.cluster.tol)?;
    let mut w = csv::Writer::from_path(cfg_out(paths, "elbow.csv"))?;
    w.write_record(["k", "error", "selected"])?;
    for &(k, e) in &scan.errors {
        w.write_record([k.to_string(), e.to_string(), ((k == scan.selected_k) as u8).to_string()])?;
    }
    w.flush()?;
    println!("elbow: selected k = {}", scan.selected_k);
    Ok(())
}

fn timed_by_profile(
    cleaned: &Corpus,
    profiles: &[ApproxProfile],
    m: usize,
) -> Result<Vec<Vec<TimedIndicators>>> {
    let tagger = SuffixTagger;
    profiles
        .iter()
        .map(|p| {
            let student = cleaned
                .students
                .iter()
                .find(|s| s.student_id == p.student_id)
                .ok_or_else(|| {
                    Error::Data(format!("profiled student {} not in the clean corpus", p.student_id))
                })?;
            timed_indicators(student, m, &tagger)
        })
        .collect()
}

fn stage_quality(cfg: &Config, paths: &Paths) -> Result<()> {
    let cleaned = read_corpus(&paths.clean(), "clean")?;
    let tagger = SuffixTagger;
    let mut w = csv::Writer::from_path(cfg_out(paths, "quality.csv"))?;
    w.write_record([
        "student_id",
        "tau",
        "smog",
        "nouns_per_sentence",
        "verbs_per_sentence",
        "word_count",
        "avg_word_len",
    ])?;
    let mut rows = 0usize;
    for student in &cleaned.students {
        if student.texts.len() < cfg.profile.m {
            continue;
        }
        for t in timed_indicators(student, cfg.profile.m, &tagger)? {
            let q = t.indicators;
            w.write_record([
                student.student_id.clone(),
                t.tau.to_string(),
                q.smog.to_string(),
                q.noun_phrases.to_string(),
                q.verb_phrases.to_string(),
                q.word_count.to_string(),
                q.avg_word_length.to_string(),
            ])?;
            rows += 1;
        }
    }
    w.flush()?;
    println!("quality: {rows} texts scored");
    Ok(())
}

fn stage_heatmap(cfg: &Config, paths: &Paths, n_pairs: Option<usize>) -> Result<()> {
    let n = n_pairs.unwrap_or(cfg.analysis.pairs);
    let cleaned = read_corpus(&paths.clean(), "clean")?;
    let model = backend(cfg, paths)?;
    let seed = cfg.analysis.seed.unwrap_or_else(|| derive_seed(cfg.seed, 5));
    let (samples, mean) = sample_pairs(&cleaned, n, model.as_ref(), seed)?;
    let mut w = csv::Writer::from_path(cfg_out(paths, "random_pairs.csv"))?;
    w.write_record(["month_a", "month_b", "similarity"])?;
    for s in &samples {
        w.write_record([s.months_a.to_string(), s.months_b.to_string(), s.similarity.to_string()])?;
    }
    w.flush()?;
    let map = heatmap(&samples)?;
    analysis::write_heatmap(&map, &paths.out)?;
    println!("heatmap: mean cross-author similarity {mean:.4} over {n} pairs");
    Ok(())
}

fn read_cluster_model(paths: &Paths, profiles: &[ApproxProfile]) -> Result<ClusterModel> {
    require(&paths.assignments(), "cluster")?;
    require(&paths.centroids(), "cluster")?;
    let mut by_student: BTreeMap<String, usize> = BTreeMap::new();
    let mut r = csv::Reader::from_path(paths.assignments())?;
    for rec in r.deserialize() {
        let (id, a): (String, usize) = rec?;
        by_student.insert(id, a);
    }
    let assignments = profiles
        .iter()
        .map(|p| {
            by_student.get(&p.student_id).copied().ok_or_else(|| {
                Error::Data(format!("no cluster assignment for student {}", p.student_id))
            })
        })
        .collect::<Result<Vec<usize>>>()?;
    let mut centroids: Vec<Vec<f64>> = Vec::new();
    let mut r = csv::Reader::from_path(paths.centroids())?;
    for rec in r.deserialize() {
        let (c, j, v): (usize, usize, f64) = rec?;
        if centroids.len() <= c {
            centroids.resize(c + 1, Vec::new());
        }
        if centroids[c].len() != j {
            return Err(Error::Data(format!("centroid {c} rows out of order at index {j}")));
        }
        centroids[c].push(v);
    }
    Ok(ClusterModel { centroids, assignments, error: 0.0, iterations: 0, error_trace: Vec::new() })
}

fn stage_report(cfg: &Config, paths: &Paths) -> Result<()> {
    let cleaned = read_corpus(&paths.clean(), "clean")?;
    require(&paths.profiles(), "profile")?;
    let profiles = read_profiles(&paths.profiles(), cfg.profile.step)?;
    let model = read_cluster_model(paths, &profiles)?;
    let texts = timed_by_profile(&cleaned, &profiles, cfg.profile.m)?;
    let report = cluster_report(&model, &profiles, &texts, cfg.profile.step, cfg.quality.window);
    analysis::write_cluster_report(&report, &paths.out)?;
    let stats = corpus_stats(&cleaned);
    analysis::write_corpus_stats(&stats, &paths.out)?;
    println!("report: {} clusters detailed", report.clusters.len());
    Ok(())
}

fn cfg_out(paths: &Paths, name: &str) -> PathBuf {
    paths.out.join(name)
}

// ---------------------------------------------------------------------------

fn run(cli: Cli) -> Result<()> {
    let mut cfg = Config::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&cli.out)?;
    let paths = Paths { out: cli.out };
    // Effective config is echoed next to the artifacts it produced.
    let echoed = toml::to_string_pretty(&cfg)
        .map_err(|e| Error::Config(format!("cannot serialize config: {e}")))?;
    std::fs::write(cfg_out(&paths, "config_effective.toml"), echoed)?;

    match &cli.cmd {
        Cmd::Synth { students } => {
            if let Some(n) = students {
                cfg.synth.students = *n;
                cfg.validate()?;
            }
            stage_synth(&cfg, &paths)
        }
        Cmd::Ingest { input } => stage_ingest(&cfg, &paths, input.as_deref()),
        Cmd::Clean => stage_clean(&cfg, &paths),
        Cmd::Split => stage_split(&cfg, &paths),
        Cmd::Pairs => stage_pairs(&cfg, &paths),
        Cmd::Train { preset } => stage_train(&cfg, &paths, preset.as_deref()),
        Cmd::Eval => stage_eval(&cfg, &paths),
        Cmd::Profile { m } => stage_profile(&cfg, &paths, *m),
        Cmd::Cluster { k } => stage_cluster(&cfg, &paths, *k),
        Cmd::Elbow { k } => stage_elbow(&cfg, &paths, k.as_deref()),
        Cmd::Quality => stage_quality(&cfg, &paths),
        Cmd::Heatmap { pairs } => stage_heatmap(&cfg, &paths, *pairs),
        Cmd::Report => stage_report(&cfg, &paths),
        Cmd::All => {
            if cfg.paths.raw.is_none() {
                stage_synth(&cfg, &paths)?;
            }
            stage_ingest(&cfg, &paths, None)?;
            stage_clean(&cfg, &paths)?;
            stage_split(&cfg, &paths)?;
            stage_pairs(&cfg, &paths)?;
            stage_train(&cfg, &paths, None)?;
            stage_eval(&cfg, &paths)?;
            stage_profile(&cfg, &paths, None)?;
            stage_cluster(&cfg, &paths, None)?;
            stage_elbow(&cfg, &paths, None)?;
            stage_quality(&cfg, &paths)?;
            stage_heatmap(&cfg, &paths, None)?;
            stage_report(&cfg, &paths)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
