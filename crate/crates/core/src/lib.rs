//! Explanation analytics for facial-attribute models.
//!
//! * [`stats`]: Pearson predictive power, split-half human reliability,
//!   attribute correlation matrices, silhouette scores.
//! * [`cluster`]: Ward linkage and dendrogram leaf order for heatmap reordering.
//! * [`gradcam`]: gradient-weighted class activation maps and overlays.
//! * [`tsne`] and [`stress_embed`]: manifold embeddings of model outputs.
//! * [`mininet`]: a small CNN with exact backpropagation that supplies feature
//!   maps and gradients without an external ML framework.
//! * [`tensor_io`]: the `.pst` tensor container and ratings CSV tables.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below name the concrete instantiations the command-line tool uses.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cluster;
pub mod embedding;
pub mod error;
pub mod gradcam;
pub mod mininet;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod stress_embed;
pub mod tensor_io;
pub mod tsne;

pub use embedding::Embedding;
pub use error::{Error, Result};
pub use rng::ToolkitRng;
pub use scalar::Scalar;
pub use tensor_io::{RatingsTable, Tensor};

pub type Tensor32 = tensor_io::Tensor<f32>;
pub type Tensor64 = tensor_io::Tensor<f64>;
pub type RatingsTable64 = tensor_io::RatingsTable<f64>;
pub type CorrMatrix64 = stats::CorrMatrix<f64>;
pub type PowerTable64 = stats::PowerTable<f64>;
pub type Dendrogram64 = cluster::Dendrogram<f64>;
pub type Embedding64 = embedding::Embedding<f64>;
pub type Affinities64 = tsne::Affinities<f64>;
pub type Cam32 = gradcam::Cam<f32>;
pub type CamInput32 = gradcam::CamInput<f32>;
pub type MiniNet32 = mininet::MiniNet<f32>;
pub type MiniNet64 = mininet::MiniNet<f64>;
