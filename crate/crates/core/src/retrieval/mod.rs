//! Descriptor index, ranked queries and Top-k evaluation.

mod experiment;
mod index_io;

pub use experiment::{run_experiment, ArmResult, ExperimentKind, ExperimentSpec, ExperimentTable};
pub use index_io::{decode_index, encode_index, load_index, save_index, INDEX_VERSION};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use thiserror::Error;

use crate::mesh::{CameraRig, Mesh};
use crate::net::{encode_checkpoint, Embedding, NetError, NetworkParams, EMBED_DIM};
use crate::render::{render_views, Image, RenderError, ViewConfig};
use crate::seed;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("duplicate object id {0:?}")]
    DuplicateId(String),
    #[error("no meshes to index")]
    EmptyMeshSet,
    #[error("k must be in 1..={size}, got {k}")]
    InvalidK { k: usize, size: usize },
    #[error("no ground truth for query {0:?}")]
    MissingTruth(String),
    #[error("descriptor {id:?} has norm {norm}, expected 1")]
    NotUnitNorm { id: String, norm: f64 },
    #[error("descriptor {id:?} has dimension {dim}, expected {EMBED_DIM}")]
    Dimension { id: String, dim: usize },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("corrupt index: {0}")]
    Corrupt(String),
    #[error("index version mismatch: {0}")]
    VersionMismatch(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("index i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Fingerprint of a checkpoint's parameters, recorded on indexes built from it.
pub fn params_hash(params: &NetworkParams<f32>) -> u64 {
    seed::fnv1a(&encode_checkpoint(params, None))
}

/// Shape descriptors of a model set, one per unique object id.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorIndex {
    entries: Vec<(String, Embedding)>,
    /// Parameters the descriptors were computed with; not stored on disk.
    pub checkpoint_hash: Option<u64>,
}

impl DescriptorIndex {
    pub fn new(entries: Vec<(String, Embedding)>, checkpoint_hash: Option<u64>) -> Result<Self, RetrievalError> {
        for (i, (id, e)) in entries.iter().enumerate() {
            if entries[..i].iter().any(|(other, _)| other == id) {
                return Err(RetrievalError::DuplicateId(id.clone()));
            }
            if e.len() != EMBED_DIM {
                return Err(RetrievalError::Dimension { id: id.clone(), dim: e.len() });
            }
            let norm = e.norm();
            if !((norm - 1.0).abs() <= 1e-5) {
                return Err(RetrievalError::NotUnitNorm { id: id.clone(), norm });
            }
        }
        Ok(DescriptorIndex { entries, checkpoint_hash })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, Embedding)] {
        &self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }

    pub fn get(&self, id: &str) -> Option<&Embedding> {
        self.entries.iter().find(|(e, _)| e == id).map(|(_, v)| v)
    }

    /// Top-`k` entries by dot-product similarity to `query`; equal scores
    /// are ordered by ascending object id.
    pub fn rank(&self, query: &Embedding, k: usize, query_id: &str) -> Result<RetrievalResult, RetrievalError> {
        if k == 0 || k > self.len() {
            return Err(RetrievalError::InvalidK { k, size: self.len() });
        }
        let mut scored: Vec<(String, f64)> = self.entries.iter().map(|(id, e)| (id.clone(), e.dot(query))).collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k);
        Ok(RetrievalResult {
            query: query_id.to_string(),
            ranked: scored,
        })
    }
}

/// Ranked object ids with similarity scores, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub query: String,
    pub ranked: Vec<(String, f64)>,
}

impl RetrievalResult {
    /// 1-based rank of `id`, if it made the list.
    pub fn rank_of(&self, id: &str) -> Option<usize> {
        self.ranked.iter().position(|(r, _)| r == id).map(|p| p + 1)
    }
}

/// Descriptors from pre-rendered views, computed in parallel, kept in input order.
pub fn build_index_from_views(
    params: &NetworkParams<f32>,
    views: &[(String, Vec<Image>)],
) -> Result<DescriptorIndex, RetrievalError> {
    if views.is_empty() {
        return Err(RetrievalError::EmptyMeshSet);
    }
    for (i, (id, _)) in views.iter().enumerate() {
        if views[..i].iter().any(|(other, _)| other == id) {
            return Err(RetrievalError::DuplicateId(id.clone()));
        }
    }
    let entries = views
        .par_iter()
        .map(|(id, v)| Ok((id.clone(), params.embed_shape(v)?)))
        .collect::<Result<Vec<_>, RetrievalError>>()?;
    DescriptorIndex::new(entries, Some(params_hash(params)))
}

/// Renders every mesh with `rig` and embeds its views.
pub fn build_index(
    params: &NetworkParams<f32>,
    meshes: &[Mesh],
    rig: &CameraRig,
    config: &ViewConfig,
) -> Result<DescriptorIndex, RetrievalError> {
    if meshes.is_empty() {
        return Err(RetrievalError::EmptyMeshSet);
    }
    for (i, m) in meshes.iter().enumerate() {
        if meshes[..i].iter().any(|o| o.name == m.name) {
            return Err(RetrievalError::DuplicateId(m.name.clone()));
        }
    }
    let views = meshes
        .par_iter()
        .map(|m| Ok((m.name.clone(), render_views(m, rig, config)?)))
        .collect::<Result<Vec<_>, RetrievalError>>()?;
    build_index_from_views(params, &views)
}

pub fn query(
    index: &DescriptorIndex,
    params: &NetworkParams<f32>,
    img: &Image,
    k: usize,
) -> Result<RetrievalResult, RetrievalError> {
    if k == 0 || k > index.len() {
        return Err(RetrievalError::InvalidK { k, size: index.len() });
    }
    index.rank(&params.embed_image(img)?, k, "")
}

/// Full rankings for labelled query images, computed in parallel.
pub fn rank_queries(
    index: &DescriptorIndex,
    params: &NetworkParams<f32>,
    queries: &[(String, Image)],
) -> Result<Vec<RetrievalResult>, RetrievalError> {
    queries
        .par_iter()
        .map(|(qid, img)| index.rank(&params.embed_image(img)?, index.len(), qid))
        .collect()
}

/// Fraction of results whose true object is among the first `k` ranks.
pub fn topk_accuracy(
    results: &[RetrievalResult],
    truth: &BTreeMap<String, String>,
    k: usize,
) -> Result<f64, RetrievalError> {
    if results.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for r in results {
        let want = truth.get(&r.query).ok_or_else(|| RetrievalError::MissingTruth(r.query.clone()))?;
        if r.ranked.iter().take(k).any(|(id, _)| id == want) {
            hits += 1;
        }
    }
    Ok(hits as f64 / results.len() as f64)
}

/// Seeded split of `ids` into `(train, test)` with `held_out` test ids. Both
/// lists keep the input order.
pub fn zero_shot_split(ids: &[String], held_out: usize, seed_: u64) -> Result<(Vec<String>, Vec<String>), RetrievalError> {
    if held_out >= ids.len() {
        return Err(RetrievalError::InvalidSplit(format!(
            "cannot hold out {held_out} of {} ids",
            ids.len()
        )));
    }
    for (i, id) in ids.iter().enumerate() {
        if ids[..i].contains(id) {
            return Err(RetrievalError::DuplicateId(id.clone()));
        }
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut seed::rng(seed_, &[0x5EED]));
    let mut is_test = vec![false; ids.len()];
    for &i in &order[..held_out] {
        is_test[i] = true;
    }
    let (test, train): (Vec<_>, Vec<_>) = ids.iter().cloned().zip(is_test).partition(|(_, t)| *t);
    Ok((train.into_iter().map(|(id, _)| id).collect(), test.into_iter().map(|(id, _)| id).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(dim_hot: usize) -> Embedding {
        let mut v = vec![0.0f32; EMBED_DIM];
        v[dim_hot] = 1.0;
        Embedding::new(v)
    }

    fn index3() -> DescriptorIndex {
        DescriptorIndex::new(
            vec![("c".into(), unit(0)), ("a".into(), unit(1)), ("b".into(), unit(0))],
            None,
        )
        .unwrap()
    }

    #[test]
    fn ties_break_by_id() {
        let r = index3().rank(&unit(0), 3, "q").unwrap();
        let ids: Vec<&str> = r.ranked.iter().map(|(i, _)| i.as_str()).collect();
        assert_eq!(ids, ["b", "c", "a"]);
        assert_eq!(r.ranked[0].1, 1.0);
        assert_eq!(r.rank_of("a"), Some(3));
    }

    #[test]
    fn index_validation() {
        let dup = DescriptorIndex::new(vec![("a".into(), unit(0)), ("a".into(), unit(1))], None);
        assert!(matches!(dup, Err(RetrievalError::DuplicateId(_))));
        let bad = DescriptorIndex::new(vec![("a".into(), Embedding::new(vec![0.5; EMBED_DIM]))], None);
        assert!(matches!(bad, Err(RetrievalError::NotUnitNorm { .. })));
        assert!(matches!(index3().rank(&unit(0), 4, ""), Err(RetrievalError::InvalidK { .. })));
        assert!(matches!(index3().rank(&unit(0), 0, ""), Err(RetrievalError::InvalidK { .. })));
    }

    #[test]
    fn topk_counts_ranks() {
        let mk = |q: &str, truth_rank: usize| RetrievalResult {
            query: q.into(),
            ranked: (1..=10)
                .map(|r| (if r == truth_rank { "t".to_string() } else { format!("o{r}") }, 1.0 / r as f64))
                .collect(),
        };
        let results = vec![mk("q1", 1), mk("q2", 3), mk("q3", 7)];
        let truth: BTreeMap<String, String> = ["q1", "q2", "q3"].iter().map(|q| (q.to_string(), "t".to_string())).collect();
        assert!((topk_accuracy(&results, &truth, 1).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((topk_accuracy(&results, &truth, 5).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(topk_accuracy(&results, &truth, 10).unwrap(), 1.0);
        let partial: BTreeMap<String, String> = [("q1".to_string(), "t".to_string())].into();
        assert!(matches!(topk_accuracy(&results, &partial, 1), Err(RetrievalError::MissingTruth(_))));
    }

    #[test]
    fn split_is_disjoint_and_seeded() {
        let ids: Vec<String> = (0..50).map(|i| format!("id{i}")).collect();
        let (train, test) = zero_shot_split(&ids, 10, 3).unwrap();
        assert_eq!((train.len(), test.len()), (40, 10));
        assert!(test.iter().all(|t| !train.contains(t)));
        assert_eq!(zero_shot_split(&ids, 10, 3).unwrap(), (train, test));
        assert_ne!(zero_shot_split(&ids, 10, 4).unwrap().1, zero_shot_split(&ids, 10, 3).unwrap().1);
        assert!(zero_shot_split(&ids, 50, 3).is_err());
    }
}
