//! Deterministic Wide-and-Deep PointNet.
//!
//! A shared per-point MLP (dense → optional frozen batch norm → optional
//! ReLU) encodes every point, a channelwise max pools the point descriptors
//! into a latent vector, and one linear fusion layer maps
//! `[latent; tabular]` to a single logit.

mod input;
mod layers;
mod model;

pub use input::{HeterogeneousInput, Point3, PointCloud, TabularVector};
pub use layers::{batchnorm_infer, linear_forward, relu_forward, BatchNormParams, DenseLayerParams};
pub use model::{hex_digest, sigmoid, wdpn_forward, EvalCounter, PointLayer, WdpnModel, MODEL_FORMAT_VERSION};
