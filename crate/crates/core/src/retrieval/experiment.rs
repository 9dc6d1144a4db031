//! Controlled multi-arm training runs.
//!
//! Every arm of an experiment trains from scratch on rendered data and is
//! evaluated on one query set shared by all arms. Arms with equal seeds use
//! the same initial parameters, scene seeds and pair-sampling streams, so they
//! differ only in the factor under test.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use super::{build_index_from_views, rank_queries, topk_accuracy, zero_shot_split};
use crate::error::Result;
use crate::mesh::{toy_corpus, CameraRig, Mesh};
use crate::net::{NetworkParams, ShareMode};
use crate::render::{render_views, Image, ViewConfig};
use crate::seed;
use crate::synth::render_images;
use crate::train::{train_from, TrainConfig, TrainError, TrainingData};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Fraction of structured training images, instance-aware evaluation.
    DataMix,
    /// Shared versus separate trunk/head, instance-aware evaluation.
    ShareMode,
    /// Number of training shapes, zero-shot evaluation on held-out shapes.
    ObjectCount,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::DataMix => "data_mix",
            ExperimentKind::ShareMode => "share_mode",
            ExperimentKind::ObjectCount => "object_count",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "data_mix" => Ok(ExperimentKind::DataMix),
            "share_mode" => Ok(ExperimentKind::ShareMode),
            "object_count" => Ok(ExperimentKind::ObjectCount),
            other => Err(format!("unknown experiment kind {other:?} (expected data_mix, share_mode or object_count)")),
        }
    }
}

/// Experiment description, readable from `key=value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub seeds: Vec<u64>,
    /// Seed of the toy shape corpus and the held-out split.
    pub corpus_seed: u64,
    /// Arms of a data-mix sweep.
    pub mixes: Vec<f64>,
    /// Arms of an object-count sweep.
    pub object_counts: Vec<usize>,
    /// Training shapes for data-mix and share-mode runs.
    pub train_objects: usize,
    /// Shapes in the evaluation index.
    pub test_objects: usize,
    pub per_object: usize,
    pub queries_per_object: usize,
    /// Structured fraction of training images in arms that do not vary it.
    pub mix: f64,
    /// Structured fraction of the query images.
    pub query_mix: f64,
    pub train: TrainConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            kind: ExperimentKind::DataMix,
            seeds: vec![1, 2, 3],
            corpus_seed: 2024,
            mixes: vec![0.0, 0.5, 1.0],
            object_counts: vec![15, 30, 60, 120],
            train_objects: 40,
            test_objects: 10,
            per_object: 20,
            queries_per_object: 10,
            mix: 0.5,
            query_mix: 0.5,
            // Networks here start from random weights, and the smaller
            // default step barely leaves the initial plateau in 15 epochs.
            train: TrainConfig {
                epochs: 15,
                lr: 3e-4,
                ..TrainConfig::default()
            },
        }
    }
}

fn list<T: FromStr>(key: &str, value: &str) -> std::result::Result<Vec<T>, String> {
    value
        .split(',')
        .map(|v| v.trim().parse().map_err(|_| format!("invalid list item {v:?} for {key}")))
        .collect()
}

fn one<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("invalid value {value:?} for {key}"))
}

impl ExperimentSpec {
    /// Sets one key. Keys not listed here are passed to the training config.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "kind" => self.kind = value.parse()?,
            "seeds" => self.seeds = list(key, value)?,
            "corpus_seed" => self.corpus_seed = one(key, value)?,
            "mixes" => self.mixes = list(key, value)?,
            "object_counts" => self.object_counts = list(key, value)?,
            "train_objects" => self.train_objects = one(key, value)?,
            "test_objects" => self.test_objects = one(key, value)?,
            "per_object" => self.per_object = one(key, value)?,
            "queries_per_object" => self.queries_per_object = one(key, value)?,
            "mix" => self.mix = one(key, value)?,
            "query_mix" => self.query_mix = one(key, value)?,
            "data" | "meshes" | "seed" => return Err(format!("key {key:?} is not allowed in an experiment spec")),
            other => self.train.set(other, value).map_err(|e| match e {
                TrainError::Config(m) => m,
                e => e.to_string(),
            })?,
        }
        Ok(())
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut spec = ExperimentSpec::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
            spec.set(k.trim(), v.trim()).map_err(|m| format!("line {}: {m}", i + 1))?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        self.train.validate().map_err(|e| e.to_string())?;
        if self.seeds.is_empty() {
            return Err("seeds must not be empty".into());
        }
        if self.test_objects < 2 {
            return Err("test_objects must be at least 2".into());
        }
        if self.queries_per_object < 2 || self.per_object < 2 {
            return Err("per_object and queries_per_object must be at least 2".into());
        }
        for m in self.mixes.iter().chain([&self.mix, &self.query_mix]) {
            if !(0.0..=1.0).contains(m) {
                return Err(format!("mix {m} outside [0, 1]"));
            }
        }
        match self.kind {
            ExperimentKind::DataMix if self.mixes.is_empty() => Err("mixes must not be empty".into()),
            ExperimentKind::ObjectCount if self.object_counts.iter().any(|&c| c < 2) || self.object_counts.is_empty() => {
                Err("object_counts must be non-empty with every count at least 2".into())
            }
            ExperimentKind::DataMix | ExperimentKind::ShareMode if self.train_objects < self.test_objects => {
                Err("train_objects must be at least test_objects for instance-aware evaluation".into())
            }
            _ => Ok(()),
        }
    }

    /// `(label, mix, share mode, training object count)` per arm.
    fn arms(&self) -> Vec<(String, f64, ShareMode, usize)> {
        match self.kind {
            ExperimentKind::DataMix => self
                .mixes
                .iter()
                .map(|&m| (format!("mix={m}"), m, self.train.share_mode, self.train_objects))
                .collect(),
            ExperimentKind::ShareMode => [ShareMode::Separate, ShareMode::Shared]
                .into_iter()
                .map(|s| (format!("share_mode={s}"), self.mix, s, self.train_objects))
                .collect(),
            ExperimentKind::ObjectCount => self
                .object_counts
                .iter()
                .map(|&n| (format!("objects={n}"), self.mix, self.train.share_mode, n))
                .collect(),
        }
    }
}

/// One trained arm under one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmResult {
    pub arm: String,
    pub seed: u64,
    pub top1: f64,
    pub top2: f64,
    pub top5: f64,
    pub best_epoch: usize,
    pub train_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentTable {
    pub kind: ExperimentKind,
    /// Arm labels in sweep order.
    pub arms: Vec<String>,
    pub test_ids: Vec<String>,
    pub runs: Vec<ArmResult>,
}

impl ExperimentTable {
    /// Mean `[top1, top2, top5]` of an arm over seeds.
    pub fn mean(&self, arm: &str) -> Option<[f64; 3]> {
        let runs: Vec<&ArmResult> = self.runs.iter().filter(|r| r.arm == arm).collect();
        if runs.is_empty() {
            return None;
        }
        let n = runs.len() as f64;
        let sum = |f: fn(&ArmResult) -> f64| runs.iter().map(|r| f(r)).sum::<f64>() / n;
        Some([sum(|r| r.top1), sum(|r| r.top2), sum(|r| r.top5)])
    }

    /// Header plus one row per arm with seed-averaged Top-k.
    pub fn summary_tsv(&self) -> String {
        let mut s = String::from("arm\ttop1\ttop2\ttop5\n");
        for arm in &self.arms {
            let [a, b, c] = self.mean(arm).unwrap_or([0.0; 3]);
            let _ = writeln!(s, "{arm}\t{a:.4}\t{b:.4}\t{c:.4}");
        }
        s
    }

    /// Header plus one row per trained model.
    pub fn runs_tsv(&self) -> String {
        let mut s = String::from("arm\tseed\ttop1\ttop2\ttop5\tbest_epoch\n");
        for r in &self.runs {
            let _ = writeln!(
                s,
                "{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{}",
                r.arm, r.seed, r.top1, r.top2, r.top5, r.best_epoch
            );
        }
        s
    }

    /// Writes `summary.tsv`, `runs.tsv`, `test_ids.txt` and one
    /// `train_ids/<arm>_seed<seed>.txt` per run into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> std::io::Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir.join("train_ids"))?;
        std::fs::write(dir.join("summary.tsv"), self.summary_tsv())?;
        std::fs::write(dir.join("runs.tsv"), self.runs_tsv())?;
        std::fs::write(dir.join("test_ids.txt"), lines(&self.test_ids))?;
        for r in &self.runs {
            let name = format!("{}_seed{}.txt", r.arm.replace('=', "_"), r.seed);
            std::fs::write(dir.join("train_ids").join(name), lines(&r.train_ids))?;
        }
        Ok(())
    }
}

fn lines(ids: &[String]) -> String {
    ids.iter().map(|s| format!("{s}\n")).collect()
}

/// Renders descriptor views for `meshes` in input order.
fn views_of(meshes: &[Mesh], spec: &ExperimentSpec) -> Result<Vec<Vec<Image>>> {
    let rig = CameraRig::with_view_count(spec.train.view_count, CameraRig::DEFAULT_RADIUS)?;
    let cfg = ViewConfig {
        render_resolution: spec.train.render_resolution,
        ..ViewConfig::with_output_size(spec.train.input_size)
    };
    Ok(meshes
        .par_iter()
        .map(|m| render_views(m, &rig, &cfg))
        .collect::<std::result::Result<Vec<_>, _>>()?)
}

/// Trains every arm under every seed and evaluates Top-1/2/5 on the shared
/// query set. `progress` receives one line per finished run.
pub fn run_experiment(spec: &ExperimentSpec, mut progress: impl FnMut(&str)) -> Result<ExperimentTable> {
    spec.validate().map_err(TrainError::Config)?;
    let arms = spec.arms();
    let max_train = arms.iter().map(|a| a.3).max().expect("at least one arm");
    let (pool, test): (Vec<Mesh>, Vec<Mesh>) = match spec.kind {
        ExperimentKind::DataMix | ExperimentKind::ShareMode => {
            let corpus = toy_corpus(spec.train_objects, spec.corpus_seed);
            let ids: Vec<String> = corpus.iter().map(|m| m.name.clone()).collect();
            // Instance-aware: the index is a seeded subset of the training shapes.
            let (_, test_ids) = zero_shot_split(&ids, spec.test_objects, spec.corpus_seed)?;
            let test = corpus.iter().filter(|m| test_ids.contains(&m.name)).cloned().collect();
            (corpus, test)
        }
        ExperimentKind::ObjectCount => {
            let corpus = toy_corpus(max_train + spec.test_objects, spec.corpus_seed);
            let ids: Vec<String> = corpus.iter().map(|m| m.name.clone()).collect();
            let (_, test_ids) = zero_shot_split(&ids, spec.test_objects, spec.corpus_seed)?;
            corpus.into_iter().partition(|m| !test_ids.contains(&m.name))
        }
    };
    let test_ids: Vec<String> = test.iter().map(|m| m.name.clone()).collect();
    let pool_views = views_of(&pool, spec)?;
    let test_views: Vec<(String, Vec<Image>)> = test_ids.iter().cloned().zip(views_of(&test, spec)?).collect();

    let query_seed = seed::derive(spec.corpus_seed, &[0x7E57]);
    let query_images = render_images(&test, spec.queries_per_object, spec.query_mix, query_seed, spec.train.input_size)?;
    let queries: Vec<(String, Image)> = query_images
        .iter()
        .map(|q| (format!("{}#{}", test_ids[q.object], q.index), q.image.clone()))
        .collect();
    let truth: BTreeMap<String, String> = query_images
        .iter()
        .map(|q| (format!("{}#{}", test_ids[q.object], q.index), test_ids[q.object].clone()))
        .collect();

    let mut runs = Vec::new();
    for &run_seed in &spec.seeds {
        for (label, mix, share_mode, count) in &arms {
            let train_meshes = &pool[..*count];
            let train_ids: Vec<String> = train_meshes.iter().map(|m| m.name.clone()).collect();
            let data_seed = seed::derive(run_seed, &[0xDA7A]);
            let imgs = render_images(train_meshes, spec.per_object, *mix, data_seed, spec.train.input_size)?;
            let data = TrainingData::from_parts(
                train_ids.clone(),
                pool_views[..*count].to_vec(),
                imgs.iter().map(|l| l.image.clone()).collect(),
                imgs.iter().map(|l| l.object).collect(),
                spec.train.val_fraction,
                run_seed,
            );
            let cfg = TrainConfig {
                seed: run_seed,
                share_mode: *share_mode,
                ..spec.train.clone()
            };
            let init = NetworkParams::init(run_seed, *share_mode);
            let outcome = train_from(init, &cfg, &data, |_| {})?;
            let index = build_index_from_views(&outcome.best, &test_views)?;
            let results = rank_queries(&index, &outcome.best, &queries)?;
            let k = |k: usize| topk_accuracy(&results, &truth, k.min(index.len()));
            let run = ArmResult {
                arm: label.clone(),
                seed: run_seed,
                top1: k(1)?,
                top2: k(2)?,
                top5: k(5)?,
                best_epoch: outcome.best_epoch,
                train_ids,
            };
            progress(&format!(
                "{} seed {}: top1 {:.4} top2 {:.4} top5 {:.4} (best epoch {})",
                run.arm, run.seed, run.top1, run.top2, run.top5, run.best_epoch
            ));
            runs.push(run);
        }
    }
    Ok(ExperimentTable {
        kind: spec.kind,
        arms: arms.into_iter().map(|a| a.0).collect(),
        test_ids,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_parsing() {
        let s = ExperimentSpec::parse("kind=object_count\nobject_counts=4,8\nseeds=5\nepochs=2\nlr=0.001\n").unwrap();
        assert_eq!(s.kind, ExperimentKind::ObjectCount);
        assert_eq!(s.object_counts, vec![4, 8]);
        assert_eq!(s.seeds, vec![5]);
        assert_eq!(s.train.epochs, 2);
        assert_eq!(s.train.lr, 0.001);
        assert!(ExperimentSpec::parse("kind=everything").is_err());
        assert!(ExperimentSpec::parse("colour=blue").unwrap_err().contains("colour"));
        assert!(ExperimentSpec::parse("seed=3").is_err());
    }

    #[test]
    fn arms_vary_one_factor() {
        let s = ExperimentSpec {
            kind: ExperimentKind::ShareMode,
            ..Default::default()
        };
        let arms = s.arms();
        assert_eq!(arms.len(), 2);
        assert_eq!((arms[0].1, arms[0].3), (arms[1].1, arms[1].3));
        assert_ne!(arms[0].2, arms[1].2);
        let d = ExperimentSpec::default().arms();
        assert_eq!(d.len(), 3);
        assert!(d.iter().all(|a| a.2 == ShareMode::Shared && a.3 == 40));
    }
}
