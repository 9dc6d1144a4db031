//! Cross-modal shape retrieval.
//!
//! Untextured meshes are described by twelve greyscale views rendered from the
//! vertices of an icosahedron; colour photographs (here: synthetic renders) are
//! embedded by a second CNN branch. Both branches share their later layers and
//! are trained with a contrastive loss on cosine distance so that an image of an
//! object lands next to the descriptor of its mesh.
//!
//! The crate is organised bottom-up:
//!
//! - [`mesh`]: OBJ loading, normalization, toy shape generators, camera rig.
//! - [`render`]: z-buffered software rasterizer and view cropping.
//! - [`synth`]: domain-randomized colour scenes, datasets and augmentation.
//! - [`autograd`]: reverse-mode tensor graph with the handful of CNN ops needed.
//! - [`net`]: the two-branch embedding network and its checkpoint format.
//! - [`train`]: pair sampling, epochs and best-checkpoint selection.
//! - [`retrieval`]: descriptor index, ranked queries, Top-k and experiments.

// `!(x > eps)` style guards are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autograd;
pub mod error;
pub mod mesh;
pub mod net;
pub mod render;
pub mod retrieval;
pub mod seed;
pub mod synth;
pub mod train;

pub use autograd::{Graph, Scalar, Tensor};
pub use error::{Error, Result};
pub use mesh::{CameraRig, Mesh, RigidTransform, ToyFamily};
pub use net::{Embedding, NetworkParams, ShareMode};
pub use render::{Camera, Image, ShadingSpec};
pub use retrieval::{DescriptorIndex, RetrievalResult};
pub use train::{EpochStats, TrainConfig};
