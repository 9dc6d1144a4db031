//! Two-branch embedding network.
//!
//! Both branches run a private two-block conv stem followed by a two-block
//! trunk and a dense head producing a unit-norm 128-d embedding. In
//! [`ShareMode::Shared`] the trunk and head tensors are a single storage used
//! by both branches; in [`ShareMode::Separate`] each branch owns a copy.

mod checkpoint;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CheckpointError,
    CHECKPOINT_VERSION,
};

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use thiserror::Error;

use crate::autograd::{Graph, Scalar, Tensor, TensorError};
use crate::render::Image;
use crate::seed;

pub const EMBED_DIM: usize = 128;
pub const DEFAULT_INPUT_SIZE: usize = 64;
const NORM_EPS: f64 = 1e-12;
/// Subtracted from every pixel before the first convolution, so no stem
/// filter starts out dead on all-positive inputs.
pub const INPUT_OFFSET: f64 = 0.5;

/// Channel widths of the four conv blocks.
const WIDTHS: [usize; 5] = [3, 16, 32, 64, 128];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("input image is {width}x{height}x{channels}; expected square RGB with side a multiple of 8")]
    InputShape { width: usize, height: usize, channels: usize },
    #[error("views must share one size; view {index} is {width}x{height}")]
    ViewSize { index: usize, width: usize, height: usize },
    #[error("expected {expected} views, got {got}")]
    ViewCount { expected: usize, got: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShareMode {
    Shared,
    Separate,
}

impl ShareMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ShareMode::Shared => "shared",
            ShareMode::Separate => "separate",
        }
    }

    fn code(self) -> u8 {
        match self {
            ShareMode::Shared => 0,
            ShareMode::Separate => 1,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ShareMode::Shared),
            1 => Some(ShareMode::Separate),
            _ => None,
        }
    }
}

impl fmt::Display for ShareMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ShareMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "shared" => Ok(ShareMode::Shared),
            "separate" => Ok(ShareMode::Separate),
            other => Err(format!("unknown share mode {other:?} (expected shared or separate)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Image,
    View,
}

/// A named parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Storage indices used by one branch: four `(weight, bias)` conv pairs and
/// the head `(weight, bias)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchLayout {
    pub convs: [(usize, usize); 4],
    pub head: (usize, usize),
}

impl BranchLayout {
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.convs
            .iter()
            .flat_map(|&(w, b)| [w, b])
            .chain([self.head.0, self.head.1])
    }
}

/// Parameter names and shapes in storage order.
pub fn architecture(mode: ShareMode) -> Vec<(String, Vec<usize>)> {
    let conv = |prefix: &str, block: usize| {
        let (cin, cout) = (WIDTHS[block - 1], WIDTHS[block]);
        [
            (format!("{prefix}.conv{block}.weight"), vec![cout, cin, 3, 3]),
            (format!("{prefix}.conv{block}.bias"), vec![cout]),
        ]
    };
    let head = |prefix: &str| {
        [
            (format!("{prefix}.weight"), vec![EMBED_DIM, WIDTHS[4]]),
            (format!("{prefix}.bias"), vec![EMBED_DIM]),
        ]
    };
    let mut out = Vec::new();
    for stem in ["stem_img", "stem_view"] {
        out.extend(conv(stem, 1));
        out.extend(conv(stem, 2));
    }
    let suffixes: &[&str] = match mode {
        ShareMode::Shared => &[""],
        ShareMode::Separate => &["_img", "_view"],
    };
    for s in suffixes {
        out.extend(conv(&format!("trunk{s}"), 3));
        out.extend(conv(&format!("trunk{s}"), 4));
        out.extend(head(&format!("head{s}")));
    }
    out
}

/// Fingerprint of share mode, parameter names and shapes.
pub fn architecture_hash(mode: ShareMode) -> u64 {
    let mut bytes = vec![mode.code()];
    for (name, shape) in architecture(mode) {
        bytes.extend(name.as_bytes());
        bytes.push(0);
        for d in shape {
            bytes.extend((d as u32).to_le_bytes());
        }
        bytes.push(0xff);
    }
    seed::fnv1a(&bytes)
}

/// Name used to key the init stream: separate-mode trunk/head copies start
/// from the same values as the shared storage.
fn init_key(name: &str) -> String {
    name.replacen("trunk_img.", "trunk.", 1)
        .replacen("trunk_view.", "trunk.", 1)
        .replacen("head_img.", "head.", 1)
        .replacen("head_view.", "head.", 1)
}

/// Network parameters, generic over the scalar type (training uses `f32`).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T = f32> {
    share_mode: ShareMode,
    tensors: Vec<ParamTensor<T>>,
    image: BranchLayout,
    view: BranchLayout,
}

impl<T: Scalar> NetworkParams<T> {
    /// He-uniform weights (bound `sqrt(6 / fan_in)`), zero biases.
    pub fn init(seed: u64, share_mode: ShareMode) -> Self {
        let tensors = architecture(share_mode)
            .into_iter()
            .map(|(name, shape)| {
                let n: usize = shape.iter().product();
                let data = if name.ends_with(".bias") {
                    vec![T::zero(); n]
                } else {
                    let fan_in: usize = shape[1..].iter().product();
                    let bound = (6.0 / fan_in as f64).sqrt();
                    let mut rng = seed::rng(seed, &[seed::fnv1a(init_key(&name).as_bytes())]);
                    (0..n)
                        .map(|_| T::from_f64_lossy(rng.random_range(-bound..bound)))
                        .collect()
                };
                ParamTensor { name, shape, data }
            })
            .collect();
        Self::from_tensors(share_mode, tensors).expect("architecture is self-consistent")
    }

    /// Wraps tensors that must match [`architecture`] exactly (names, order, shapes).
    pub fn from_tensors(share_mode: ShareMode, tensors: Vec<ParamTensor<T>>) -> Result<Self, String> {
        let arch = architecture(share_mode);
        if arch.len() != tensors.len() {
            return Err(format!("expected {} tensors, got {}", arch.len(), tensors.len()));
        }
        for ((name, shape), t) in arch.iter().zip(&tensors) {
            if *name != t.name || *shape != t.shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(format!("tensor {} does not match architecture entry {name} {shape:?}", t.name));
            }
        }
        let find = |n: &str| arch.iter().position(|(name, _)| name == n).expect("known name");
        let layout = |stem: &str, trunk: &str, head: &str| BranchLayout {
            convs: [
                (find(&format!("{stem}.conv1.weight")), find(&format!("{stem}.conv1.bias"))),
                (find(&format!("{stem}.conv2.weight")), find(&format!("{stem}.conv2.bias"))),
                (find(&format!("{trunk}.conv3.weight")), find(&format!("{trunk}.conv3.bias"))),
                (find(&format!("{trunk}.conv4.weight")), find(&format!("{trunk}.conv4.bias"))),
            ],
            head: (find(&format!("{head}.weight")), find(&format!("{head}.bias"))),
        };
        let (image, view) = match share_mode {
            ShareMode::Shared => (layout("stem_img", "trunk", "head"), layout("stem_view", "trunk", "head")),
            ShareMode::Separate => (
                layout("stem_img", "trunk_img", "head_img"),
                layout("stem_view", "trunk_view", "head_view"),
            ),
        };
        Ok(NetworkParams { share_mode, tensors, image, view })
    }

    pub fn share_mode(&self) -> ShareMode {
        self.share_mode
    }

    pub fn tensors(&self) -> &[ParamTensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [ParamTensor<T>] {
        &mut self.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&ParamTensor<T>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut ParamTensor<T>> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    pub fn layout(&self, branch: Branch) -> &BranchLayout {
        match branch {
            Branch::Image => &self.image,
            Branch::View => &self.view,
        }
    }

    /// Number of distinct tensor storages (14 shared, 20 separate).
    pub fn storage_count(&self) -> usize {
        self.tensors.len()
    }

    /// Scalars actually stored.
    pub fn stored_scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    /// Scalars a forward pass through `branch` reads; independent of share mode.
    pub fn branch_parameter_count(&self, branch: Branch) -> usize {
        self.layout(branch).indices().map(|i| self.tensors[i].data.len()).sum()
    }

    pub fn architecture_hash(&self) -> u64 {
        architecture_hash(self.share_mode)
    }

    /// Element-wise conversion to another scalar type.
    pub fn cast<U: Scalar>(&self) -> NetworkParams<U> {
        let tensors = self
            .tensors
            .iter()
            .map(|t| ParamTensor {
                name: t.name.clone(),
                shape: t.shape.clone(),
                data: t.data.iter().map(|&v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
            })
            .collect();
        NetworkParams {
            share_mode: self.share_mode,
            tensors,
            image: self.image,
            view: self.view,
        }
    }

    /// Adds every parameter as a graph leaf, in storage order.
    pub fn bind(&self, g: &mut Graph<T>, requires_grad: bool) -> Vec<Tensor> {
        self.tensors
            .iter()
            .map(|t| g.leaf(&t.shape, t.data.clone(), requires_grad).expect("stored shapes are consistent"))
            .collect()
    }

    /// Conv blocks of `branch` on a planar `[3, S, S]` input, giving the
    /// 128-d pre-head feature.
    pub fn features(&self, g: &mut Graph<T>, bound: &[Tensor], branch: Branch, input: Tensor) -> Result<Tensor, NetError> {
        let layout = self.layout(branch);
        let mut x = input;
        for (block, &(w, b)) in layout.convs.iter().enumerate() {
            let c = g.conv2d(x, bound[w], bound[b], 1, 1)?;
            let r = g.relu(c);
            x = if block == 3 { g.global_maxpool(r)? } else { g.maxpool2d(r)? };
        }
        Ok(x)
    }

    /// Dense head followed by L2 normalization.
    pub fn head(&self, g: &mut Graph<T>, bound: &[Tensor], branch: Branch, feature: Tensor) -> Result<Tensor, NetError> {
        let (w, b) = self.layout(branch).head;
        let y = g.dense(feature, bound[w], bound[b])?;
        Ok(g.l2_normalize(y, T::from_f64_lossy(NORM_EPS)))
    }

    /// Image branch: embedding tensor for an RGB image.
    pub fn image_graph(&self, g: &mut Graph<T>, bound: &[Tensor], img: &Image) -> Result<Tensor, NetError> {
        check_input(img, 3)?;
        let x = input_leaf(g, img)?;
        let f = self.features(g, bound, Branch::Image, x)?;
        self.head(g, bound, Branch::Image, f)
    }

    /// View branch up to the view max-pool: the pooled pre-head feature.
    pub fn pooled_view_graph(&self, g: &mut Graph<T>, bound: &[Tensor], views: &[Image]) -> Result<Tensor, NetError> {
        let first = views.first().ok_or(NetError::ViewCount { expected: 1, got: 0 })?;
        check_input(first, 1)?;
        let mut feats = Vec::with_capacity(views.len());
        for (index, v) in views.iter().enumerate() {
            if v.width() != first.width() || v.height() != first.height() {
                return Err(NetError::ViewSize { index, width: v.width(), height: v.height() });
            }
            check_input(v, 1)?;
            let x = input_leaf(g, &v.to_rgb())?;
            feats.push(self.features(g, bound, Branch::View, x)?);
        }
        Ok(g.elementwise_max(&feats)?)
    }

    /// View branch: embedding tensor for a list of greyscale views.
    pub fn shape_graph(&self, g: &mut Graph<T>, bound: &[Tensor], views: &[Image]) -> Result<Tensor, NetError> {
        let pooled = self.pooled_view_graph(g, bound, views)?;
        self.head(g, bound, Branch::View, pooled)
    }

    pub fn embed_image(&self, img: &Image) -> Result<Embedding, NetError> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let e = self.image_graph(&mut g, &bound, img)?;
        Ok(Embedding::from_scalars(g.value(e)))
    }

    /// Accepts any non-empty number of views; callers enforce the rig size.
    pub fn embed_shape(&self, views: &[Image]) -> Result<Embedding, NetError> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let e = self.shape_graph(&mut g, &bound, views)?;
        Ok(Embedding::from_scalars(g.value(e)))
    }

    /// Max-pooled pre-head view feature.
    pub fn pooled_view_feature(&self, views: &[Image]) -> Result<Vec<T>, NetError> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let p = self.pooled_view_graph(&mut g, &bound, views)?;
        Ok(g.value(p).to_vec())
    }

    /// Cosine distance between the shape and image embeddings, in `[0, 2]`.
    pub fn pair_distance(&self, views: &[Image], img: &Image) -> Result<f64, NetError> {
        let u = self.embed_shape(views)?;
        let v = self.embed_image(img)?;
        Ok(u.distance(&v))
    }
}

fn check_input(img: &Image, channels: usize) -> Result<(), NetError> {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let channels_ok = c == channels || c == 3;
    if w != h || w < 8 || w % 8 != 0 || !channels_ok {
        return Err(NetError::InputShape { width: w, height: h, channels: c });
    }
    Ok(())
}

fn input_leaf<T: Scalar>(g: &mut Graph<T>, img: &Image) -> Result<Tensor, NetError> {
    let data = img.to_planar().into_iter().map(|v| T::from_f64_lossy(v as f64 - INPUT_OFFSET)).collect();
    Ok(g.leaf(&[img.channels(), img.height(), img.width()], data, false)?)
}

/// A unit-norm descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    vector: Vec<f32>,
}

impl Embedding {
    pub fn new(vector: Vec<f32>) -> Self {
        Embedding { vector }
    }

    pub fn from_scalars<T: Scalar>(v: &[T]) -> Self {
        Embedding {
            vector: v.iter().map(|&x| x.to_f64_lossy() as f32).collect(),
        }
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.vector
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.vector
    }

    pub fn len(&self) -> usize {
        self.vector.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vector.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.vector.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt()
    }

    /// Dot product accumulated in `f64`.
    pub fn dot(&self, other: &Embedding) -> f64 {
        self.vector.iter().zip(&other.vector).map(|(&a, &b)| a as f64 * b as f64).sum()
    }

    /// Cosine distance `1 - u·v`, clamped into `[0, 2]`.
    pub fn distance(&self, other: &Embedding) -> f64 {
        (1.0 - self.dot(other)).clamp(0.0, 2.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(side: usize, channels: usize, seed_: u64) -> Image {
        let mut rng = seed::rng(seed_, &[]);
        let data = (0..side * side * channels).map(|_| rng.random::<f32>()).collect();
        Image::from_data(side, side, channels, data).unwrap()
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = NetworkParams::<f32>::init(7, ShareMode::Shared);
        let b = NetworkParams::<f32>::init(7, ShareMode::Shared);
        assert_eq!(a, b);
        let c = NetworkParams::<f32>::init(8, ShareMode::Shared);
        assert_ne!(a, c);
        for t in a.tensors() {
            if t.name.ends_with(".bias") {
                assert!(t.data.iter().all(|&v| v == 0.0), "{}", t.name);
            } else {
                let bound = (6.0 / t.shape[1..].iter().product::<usize>() as f64).sqrt() as f32;
                assert!(t.data.iter().all(|v| v.abs() <= bound));
            }
        }
    }

    #[test]
    fn counts_by_share_mode() {
        let s = NetworkParams::<f32>::init(1, ShareMode::Shared);
        let p = NetworkParams::<f32>::init(1, ShareMode::Separate);
        assert_eq!(s.storage_count(), 14);
        assert_eq!(p.storage_count(), 20);
        for b in [Branch::Image, Branch::View] {
            assert_eq!(s.branch_parameter_count(b), p.branch_parameter_count(b));
        }
        // stem conv1 + conv2, trunk conv3 + conv4, head
        let stem = (16 * 27 + 16) + (32 * 16 * 9 + 32);
        let trunk_head = (64 * 32 * 9 + 64) + (128 * 64 * 9 + 128) + (128 * 128 + 128);
        assert_eq!(s.branch_parameter_count(Branch::Image), stem + trunk_head);
        assert_eq!(s.stored_scalar_count(), 2 * stem + trunk_head);
        assert_eq!(p.stored_scalar_count(), 2 * stem + 2 * trunk_head);
    }

    #[test]
    fn separate_copies_start_equal_to_shared() {
        let s = NetworkParams::<f32>::init(3, ShareMode::Shared);
        let p = NetworkParams::<f32>::init(3, ShareMode::Separate);
        assert_eq!(s.tensor("trunk.conv4.weight").unwrap().data, p.tensor("trunk_view.conv4.weight").unwrap().data);
        assert_eq!(p.tensor("head_img.weight").unwrap().data, p.tensor("head_view.weight").unwrap().data);
        assert_ne!(s.tensor("stem_img.conv1.weight").unwrap().data, s.tensor("stem_view.conv1.weight").unwrap().data);
    }

    #[test]
    fn embeddings_are_unit_and_deterministic() {
        let p = NetworkParams::<f32>::init(5, ShareMode::Shared);
        let img = image(16, 3, 1);
        let a = p.embed_image(&img).unwrap();
        let b = p.embed_image(&img).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), EMBED_DIM);
        assert!((a.norm() - 1.0).abs() < 1e-5);
        let views: Vec<Image> = (0..3).map(|i| image(16, 1, 10 + i)).collect();
        let s = p.embed_shape(&views).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-5);
        let d = p.pair_distance(&views, &img).unwrap();
        assert!((0.0..=2.0).contains(&d));
    }

    #[test]
    fn input_validation() {
        let p = NetworkParams::<f32>::init(5, ShareMode::Shared);
        assert!(matches!(p.embed_image(&image(12, 3, 1)), Err(NetError::InputShape { .. })));
        assert!(matches!(p.embed_image(&image(16, 1, 1)), Err(NetError::InputShape { .. })));
        assert!(matches!(p.embed_shape(&[]), Err(NetError::ViewCount { .. })));
        let mixed = [image(16, 1, 1), image(24, 1, 2)];
        assert!(matches!(p.embed_shape(&mixed), Err(NetError::ViewSize { index: 1, .. })));
    }

    #[test]
    fn share_mode_text() {
        assert_eq!("shared".parse::<ShareMode>().unwrap(), ShareMode::Shared);
        assert_eq!(ShareMode::Separate.to_string(), "separate");
        assert!("both".parse::<ShareMode>().is_err());
    }
}
