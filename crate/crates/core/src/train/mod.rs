//! Pair sampling, optimizer steps and the epoch loop.

mod config;

pub use config::TrainConfig;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::autograd::{adam_step, AdamConfig, AdamState, Graph, TensorError};
use crate::mesh::{CameraRig, Mesh, MeshError};
use crate::net::{NetError, NetworkParams};
use crate::render::{render_views, Image, RenderError, ViewConfig};
use crate::retrieval::{build_index_from_views, rank_queries, topk_accuracy, RetrievalError};
use crate::seed;
use crate::synth::{augment, DatasetManifest, SynthError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("config: {0}")]
    Config(String),
    #[error("object {object:?} has {have} training images, need {need}")]
    InsufficientImages { object: String, have: usize, need: usize },
    #[error("need at least 2 objects, got {0}")]
    TooFewObjects(usize),
    #[error("object {0:?} in the manifest has no mesh")]
    UnknownObject(String),
    #[error("image {path}: expected {expected}x{expected} RGB, got {width}x{height}x{channels}")]
    ImageSize { path: String, expected: usize, width: usize, height: usize, channels: usize },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Views, images and the train/validation split, all in memory.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub object_ids: Vec<String>,
    /// Descriptor views per object.
    pub views: Vec<Vec<Image>>,
    pub images: Vec<Image>,
    /// Object index of every image.
    pub image_object: Vec<usize>,
    /// Training image indices per object.
    pub train_images: Vec<Vec<usize>>,
    pub val_images: Vec<usize>,
}

impl TrainingData {
    /// Builds the split from labelled images. Per object, `round(val_fraction
    /// * n)` images chosen by `val_seed` are held out.
    pub fn from_parts(
        object_ids: Vec<String>,
        views: Vec<Vec<Image>>,
        images: Vec<Image>,
        image_object: Vec<usize>,
        val_fraction: f64,
        val_seed: u64,
    ) -> Self {
        let mut train_images = vec![Vec::new(); object_ids.len()];
        let mut val_images = Vec::new();
        for (o, id) in object_ids.iter().enumerate() {
            let mut mine: Vec<usize> = (0..images.len()).filter(|&i| image_object[i] == o).collect();
            let n_val = (val_fraction * mine.len() as f64).round() as usize;
            mine.shuffle(&mut seed::rng(val_seed, &[seed::fnv1a(id.as_bytes())]));
            let (val, train) = mine.split_at(n_val.min(mine.len()));
            let mut train = train.to_vec();
            train.sort_unstable();
            train_images[o] = train;
            val_images.extend_from_slice(val);
        }
        val_images.sort_unstable();
        TrainingData {
            object_ids,
            views,
            images,
            image_object,
            train_images,
            val_images,
        }
    }

    /// Loads every manifest image and renders views of every object in it.
    pub fn load(meshes: &[Mesh], manifest: &DatasetManifest, config: &TrainConfig) -> Result<Self, TrainError> {
        let groups = manifest.by_object();
        let object_ids: Vec<String> = groups.iter().map(|(id, _)| id.clone()).collect();
        let rig = CameraRig::with_view_count(config.view_count, CameraRig::DEFAULT_RADIUS)?;
        let view_cfg = ViewConfig {
            render_resolution: config.render_resolution,
            ..ViewConfig::with_output_size(config.input_size)
        };
        let views = object_ids
            .par_iter()
            .map(|id| {
                let mesh = meshes
                    .iter()
                    .find(|m| &m.name == id)
                    .ok_or_else(|| TrainError::UnknownObject(id.clone()))?;
                Ok(render_views(mesh, &rig, &view_cfg)?)
            })
            .collect::<Result<Vec<_>, TrainError>>()?;
        let images = (0..manifest.len())
            .into_par_iter()
            .map(|i| {
                let img = manifest.load_image(i)?.to_rgb();
                if img.width() != config.input_size || img.height() != config.input_size {
                    return Err(TrainError::ImageSize {
                        path: manifest.resolve(&manifest.entries[i]).display().to_string(),
                        expected: config.input_size,
                        width: img.width(),
                        height: img.height(),
                        channels: img.channels(),
                    });
                }
                Ok(img)
            })
            .collect::<Result<Vec<_>, TrainError>>()?;
        let image_object = manifest
            .entries
            .iter()
            .map(|e| object_ids.iter().position(|id| *id == e.object_id).expect("grouped above"))
            .collect();
        Ok(Self::from_parts(object_ids, views, images, image_object, config.val_fraction, config.val_seed))
    }

    pub fn object_count(&self) -> usize {
        self.object_ids.len()
    }

    pub fn check(&self, config: &TrainConfig) -> Result<(), TrainError> {
        if self.object_count() < 2 {
            return Err(TrainError::TooFewObjects(self.object_count()));
        }
        for (o, imgs) in self.train_images.iter().enumerate() {
            if imgs.len() < config.positives() {
                return Err(TrainError::InsufficientImages {
                    object: self.object_ids[o].clone(),
                    have: imgs.len(),
                    need: config.positives(),
                });
            }
            if self.views[o].len() != config.view_count {
                return Err(TrainError::Net(NetError::ViewCount {
                    expected: config.view_count,
                    got: self.views[o].len(),
                }));
            }
        }
        Ok(())
    }
}

/// The image side of one optimizer step.
#[derive(Debug, Clone)]
pub struct AnchorBatch {
    pub anchor: usize,
    /// Source image indices, positives first.
    pub sources: Vec<usize>,
    /// `true` for positives.
    pub labels: Vec<bool>,
    /// Augmented copies of the source images.
    pub images: Vec<Image>,
}

/// Draws `positives` of the anchor's images without replacement and
/// `negatives` images from distinct other objects (cycling when there are
/// fewer objects than negatives), each augmented with its own seed.
pub fn sample_anchor_batch(
    data: &TrainingData,
    anchor: usize,
    positives: usize,
    negatives: usize,
    rng: &mut impl Rng,
) -> Result<AnchorBatch, TrainError> {
    if data.object_count() < 2 {
        return Err(TrainError::TooFewObjects(data.object_count()));
    }
    let own = &data.train_images[anchor];
    if own.len() < positives {
        return Err(TrainError::InsufficientImages {
            object: data.object_ids[anchor].clone(),
            have: own.len(),
            need: positives,
        });
    }
    let mut sources = own.clone();
    sources.shuffle(rng);
    sources.truncate(positives);
    let mut others: Vec<usize> = (0..data.object_count()).filter(|&o| o != anchor).collect();
    let mut queue: Vec<usize> = Vec::new();
    while sources.len() < positives + negatives {
        if queue.is_empty() {
            others.shuffle(rng);
            queue = others.iter().rev().copied().collect();
        }
        let o = queue.pop().expect("refilled");
        let pool = &data.train_images[o];
        if pool.is_empty() {
            return Err(TrainError::InsufficientImages {
                object: data.object_ids[o].clone(),
                have: 0,
                need: 1,
            });
        }
        sources.push(pool[rng.random_range(0..pool.len())]);
    }
    let seeds: Vec<u64> = sources.iter().map(|_| rng.random()).collect();
    let images = sources
        .par_iter()
        .zip(&seeds)
        .map(|(&i, &s)| augment(&data.images[i], s))
        .collect();
    let labels = (0..sources.len()).map(|k| k < positives).collect();
    Ok(AnchorBatch {
        anchor,
        sources,
        labels,
        images,
    })
}

pub fn adam_config(config: &TrainConfig) -> AdamConfig {
    AdamConfig {
        lr: config.lr,
        weight_decay: config.weight_decay,
        ..AdamConfig::default()
    }
}

pub fn new_adam_state(params: &NetworkParams<f32>) -> AdamState<f32> {
    AdamState::new(params.tensors().iter().map(|t| t.data.len()))
}

/// Loss and per-storage gradients of one anchor batch, without updating.
pub fn batch_gradients(
    params: &NetworkParams<f32>,
    views: &[Image],
    images: &[Image],
    labels: &[bool],
    margin: f64,
) -> Result<(f64, Vec<Vec<f32>>), TrainError> {
    let mut g = Graph::new();
    let bound = params.bind(&mut g, true);
    let u = params.shape_graph(&mut g, &bound, views)?;
    let mut losses = Vec::with_capacity(images.len());
    for (img, &same) in images.iter().zip(labels) {
        let v = params.image_graph(&mut g, &bound, img)?;
        let d = g.cosine_distance(u, v)?;
        losses.push(g.contrastive_loss(d, same, margin as f32)?);
    }
    let loss = g.mean(&losses)?;
    g.backward(loss)?;
    let grads = bound.iter().map(|&t| g.grad_or_zeros(t)).collect();
    Ok((g.value(loss)[0] as f64, grads))
}

/// One forward/backward pass over the anchor's views and the batch images,
/// followed by one Adam update. Returns the mean contrastive loss.
pub fn train_step(
    params: &mut NetworkParams<f32>,
    views: &[Image],
    batch: &AnchorBatch,
    config: &TrainConfig,
    state: &mut AdamState<f32>,
) -> Result<f64, TrainError> {
    let (loss, grads) = batch_gradients(params, views, &batch.images, &batch.labels, config.margin)?;
    let grad_refs: Vec<&[f32]> = grads.iter().map(Vec::as_slice).collect();
    let mut param_refs: Vec<&mut [f32]> = params.tensors_mut().iter_mut().map(|t| t.data.as_mut_slice()).collect();
    adam_step(&mut param_refs, &grad_refs, state, &adam_config(config))?;
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    pub top1: f64,
    pub top2: f64,
    pub top5: f64,
    pub wall_time: Duration,
}

impl EpochStats {
    /// `epoch<TAB>loss<TAB>top1<TAB>top2<TAB>top5`
    pub fn log_line(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.4}\t{:.4}\t{:.4}",
            self.epoch, self.mean_loss, self.top1, self.top2, self.top5
        )
    }
}

pub fn stats_log(stats: &[EpochStats]) -> String {
    let mut s = String::new();
    for e in stats {
        let _ = writeln!(s, "{}", e.log_line());
    }
    s
}

/// Top-1/2/5 of the validation images against an index of every object.
pub fn validate(params: &NetworkParams<f32>, data: &TrainingData) -> Result<[f64; 3], TrainError> {
    if data.val_images.is_empty() {
        return Ok([0.0; 3]);
    }
    let views: Vec<(String, Vec<Image>)> = data.object_ids.iter().cloned().zip(data.views.iter().cloned()).collect();
    let index = build_index_from_views(params, &views)?;
    let queries: Vec<(String, Image)> = data
        .val_images
        .iter()
        .map(|&i| (format!("val_{i}"), data.images[i].clone()))
        .collect();
    let truth: BTreeMap<String, String> = data
        .val_images
        .iter()
        .map(|&i| (format!("val_{i}"), data.object_ids[data.image_object[i]].clone()))
        .collect();
    let results = rank_queries(&index, params, &queries)?;
    let k = |k: usize| topk_accuracy(&results, &truth, k.min(index.len()));
    Ok([k(1)?, k(2)?, k(5)?])
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: NetworkParams<f32>,
    pub best_state: AdamState<f32>,
    /// 1-based epoch the best parameters come from.
    pub best_epoch: usize,
    pub stats: Vec<EpochStats>,
}

/// Runs `config.epochs` epochs from `init`. Each epoch visits every object
/// once as anchor in a seeded order; after each epoch the validation Top-k is
/// measured and the parameters with the highest Top-1 are kept (earlier
/// epochs win ties).
pub fn train_from(
    init: NetworkParams<f32>,
    config: &TrainConfig,
    data: &TrainingData,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    data.check(config)?;
    let mut params = init;
    let mut state = new_adam_state(&params);
    let mut best: Option<(f64, usize, NetworkParams<f32>, AdamState<f32>)> = None;
    let mut stats = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let mut order: Vec<usize> = (0..data.object_count()).collect();
        order.shuffle(&mut seed::rng(config.seed, &[epoch as u64, 0]));
        let mut total = 0.0;
        for (step, &anchor) in order.iter().enumerate() {
            let mut rng = seed::rng(config.seed, &[epoch as u64, 1, step as u64]);
            let batch = sample_anchor_batch(data, anchor, config.positives(), config.negatives(), &mut rng)?;
            total += train_step(&mut params, &data.views[anchor], &batch, config, &mut state)?;
        }
        let [top1, top2, top5] = validate(&params, data)?;
        let e = EpochStats {
            epoch,
            mean_loss: total / order.len() as f64,
            top1,
            top2,
            top5,
            wall_time: start.elapsed(),
        };
        on_epoch(&e);
        if best.as_ref().is_none_or(|(b, ..)| top1 > *b) {
            best = Some((top1, epoch, params.clone(), state.clone()));
        }
        stats.push(e);
    }
    let (_, best_epoch, best, best_state) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        best,
        best_state,
        best_epoch,
        stats,
    })
}

/// [`train_from`] with parameters initialized from `config.seed`.
pub fn train(config: &TrainConfig, data: &TrainingData, on_epoch: impl FnMut(&EpochStats)) -> Result<TrainOutcome, TrainError> {
    train_from(NetworkParams::init(config.seed, config.share_mode), config, data, on_epoch)
}

pub fn write_stats_log(path: impl AsRef<Path>, stats: &[EpochStats]) -> Result<(), TrainError> {
    std::fs::write(path, stats_log(stats))?;
    Ok(())
}
