use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::input::{HeterogeneousInput, Point3, PointCloud};
use super::layers::{BatchNormParams, DenseLayerParams};
use crate::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// One stage of the shared point MLP: dense, then optional frozen batch
/// norm, then optional ReLU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointLayer {
    #[serde(flatten)]
    pub dense: DenseLayerParams,
    #[serde(default)]
    pub batchnorm: Option<BatchNormParams>,
    pub relu: bool,
}

impl PointLayer {
    pub fn out_dim(&self) -> usize {
        self.dense.out_dim()
    }

    #[inline]
    pub(crate) fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.dense.forward_into(x, out);
        if let Some(bn) = &self.batchnorm {
            bn.apply_in_place(out);
        }
        if self.relu {
            for v in out.iter_mut() {
                *v = v.max(0.0);
            }
        }
    }
}

/// Wide and Deep PointNet with a single-logit head.
///
/// A model with `K = 0` has no point arm: `point_mlp` must be empty and the
/// fusion layer sees only the tabular vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelJson", into = "ModelJson")]
pub struct WdpnModel {
    k: usize,
    d: usize,
    point_mlp: Vec<PointLayer>,
    fusion: DenseLayerParams,
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    format_version: u32,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "D")]
    d: usize,
    point_mlp: Vec<PointLayer>,
    fusion: DenseLayerParams,
}

impl TryFrom<ModelJson> for WdpnModel {
    type Error = Error;

    fn try_from(j: ModelJson) -> Result<Self> {
        if j.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidModel(format!(
                "unsupported model format_version {} (expected {MODEL_FORMAT_VERSION})",
                j.format_version
            )));
        }
        WdpnModel::new(j.k, j.d, j.point_mlp, j.fusion)
    }
}

impl From<WdpnModel> for ModelJson {
    fn from(m: WdpnModel) -> Self {
        ModelJson {
            format_version: MODEL_FORMAT_VERSION,
            k: m.k,
            d: m.d,
            point_mlp: m.point_mlp,
            fusion: m.fusion,
        }
    }
}

impl WdpnModel {
    pub fn new(k: usize, d: usize, point_mlp: Vec<PointLayer>, fusion: DenseLayerParams) -> Result<Self> {
        if k == 0 && !point_mlp.is_empty() {
            return Err(Error::InvalidModel("a model without points cannot have a point MLP".into()));
        }
        let mut width = 3;
        for (i, layer) in point_mlp.iter().enumerate() {
            if layer.dense.in_dim() != width {
                return Err(Error::InvalidModel(format!(
                    "point layer {i} expects {} inputs but receives {width}",
                    layer.dense.in_dim()
                )));
            }
            if let Some(bn) = &layer.batchnorm {
                bn.validate()?;
                if bn.channels() != layer.out_dim() {
                    return Err(Error::InvalidModel(format!(
                        "point layer {i}: batch norm has {} channels, dense has {}",
                        bn.channels(),
                        layer.out_dim()
                    )));
                }
            }
            width = layer.out_dim();
        }
        let latent = if k == 0 { 0 } else { width };
        if fusion.in_dim() != latent + d || fusion.out_dim() != 1 {
            return Err(Error::InvalidModel(format!(
                "fusion layer must be ({} + {d}) x 1, got {} x {}",
                latent,
                fusion.in_dim(),
                fusion.out_dim()
            )));
        }
        Ok(Self { k, d, point_mlp, fusion })
    }

    /// Declared number of points `K`.
    pub fn num_points(&self) -> usize {
        self.k
    }

    /// Declared tabular width `D`.
    pub fn num_tabular(&self) -> usize {
        self.d
    }

    pub fn num_features(&self) -> usize {
        self.k + self.d
    }

    pub fn latent_dim(&self) -> usize {
        if self.k == 0 {
            0
        } else {
            self.point_mlp.last().map_or(3, PointLayer::out_dim)
        }
    }

    pub fn point_mlp(&self) -> &[PointLayer] {
        &self.point_mlp
    }

    pub fn point_mlp_mut(&mut self) -> &mut [PointLayer] {
        &mut self.point_mlp
    }

    pub fn fusion(&self) -> &DenseLayerParams {
        &self.fusion
    }

    pub fn fusion_mut(&mut self) -> &mut DenseLayerParams {
        &mut self.fusion
    }

    /// Fusion weight of latent channel `c`.
    pub fn latent_weight(&self, c: usize) -> f64 {
        self.fusion.weight(c, 0)
    }

    /// Fusion weight of tabular column `t`.
    pub fn tabular_weight(&self, t: usize) -> f64 {
        self.fusion.weight(self.latent_dim() + t, 0)
    }

    pub fn fusion_bias(&self) -> f64 {
        self.fusion.bias()[0]
    }

    /// Per-point MLP output for a single point.
    pub fn point_descriptor(&self, p: &Point3) -> Vec<f64> {
        let mut cur = p.to_vec();
        for layer in &self.point_mlp {
            let mut next = vec![0.0; layer.out_dim()];
            layer.apply(&cur, &mut next);
            cur = next;
        }
        cur
    }

    /// Channelwise maximum over per-point descriptors, folded in index order.
    pub(crate) fn pool<'a, I>(descriptors: I, latent_dim: usize) -> Vec<f64>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut it = descriptors.into_iter();
        let mut out = match it.next() {
            Some(first) => first.to_vec(),
            None => return vec![0.0; latent_dim],
        };
        for d in it {
            for (o, &v) in out.iter_mut().zip(d) {
                if v > *o {
                    *o = v;
                }
            }
        }
        out
    }

    /// Shared MLP on every point followed by channelwise max pooling.
    pub fn encode(&self, cloud: &PointCloud) -> Result<Vec<f64>> {
        if cloud.is_empty() {
            return Err(Error::Domain("cannot encode an empty point cloud".into()));
        }
        let descriptors: Vec<Vec<f64>> = cloud.points().iter().map(|p| self.point_descriptor(p)).collect();
        Ok(Self::pool(descriptors.iter().map(Vec::as_slice), self.latent_dim()))
    }

    /// Fusion head on a latent vector and tabular values.
    #[inline]
    pub fn fuse(&self, latent: &[f64], tabular: &[f64]) -> f64 {
        let mut acc = self.fusion_bias();
        for (c, &v) in latent.iter().enumerate() {
            acc += self.fusion.weight(c, 0) * v;
        }
        let offset = latent.len();
        for (t, &v) in tabular.iter().enumerate() {
            acc += self.fusion.weight(offset + t, 0) * v;
        }
        acc
    }

    pub fn check_input(&self, z: &HeterogeneousInput) -> Result<()> {
        if z.num_points() != self.k || z.num_tabular() != self.d {
            return Err(Error::Shape(format!(
                "model expects (K={}, D={}), input has (K={}, D={})",
                self.k,
                self.d,
                z.num_points(),
                z.num_tabular()
            )));
        }
        Ok(())
    }

    /// Pre-sigmoid output for `z`.
    pub fn logit(&self, z: &HeterogeneousInput) -> Result<f64> {
        self.check_input(z)?;
        let latent = if self.k == 0 {
            Vec::new()
        } else {
            self.encode(&z.cloud)?
        };
        Ok(self.fuse(&latent, z.tabular.values()))
    }

    /// All trainable parameters in a fixed order: per point layer
    /// `W, b, γ, β`, then fusion `W, b`.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.point_mlp {
            out.extend_from_slice(layer.dense.weights());
            out.extend_from_slice(layer.dense.bias());
            if let Some(bn) = &layer.batchnorm {
                out.extend_from_slice(&bn.gamma);
                out.extend_from_slice(&bn.beta);
            }
        }
        out.extend_from_slice(self.fusion.weights());
        out.extend_from_slice(self.fusion.bias());
        out
    }

    pub fn num_parameters(&self) -> usize {
        let mut n = 0;
        for layer in &self.point_mlp {
            n += layer.dense.weights().len() + layer.dense.bias().len();
            if let Some(bn) = &layer.batchnorm {
                n += 2 * bn.channels();
            }
        }
        n + self.fusion.weights().len() + 1
    }

    /// Inverse of [`WdpnModel::parameters`].
    pub fn set_parameters(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_parameters() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.num_parameters(),
                values.len()
            )));
        }
        let mut rest = values;
        let mut take = |dst: &mut [f64]| {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        };
        for layer in &mut self.point_mlp {
            take(layer.dense.weights_mut());
            take(layer.dense.bias_mut());
            if let Some(bn) = &mut layer.batchnorm {
                take(&mut bn.gamma);
                take(&mut bn.beta);
            }
        }
        take(self.fusion.weights_mut());
        take(self.fusion.bias_mut());
        Ok(())
    }

    /// SHA-256 over all parameters and frozen statistics (little-endian f64),
    /// hex encoded.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.k as u64).to_le_bytes());
        h.update((self.d as u64).to_le_bytes());
        let mut feed = |v: &[f64]| {
            for x in v {
                h.update(x.to_le_bytes());
            }
        };
        for layer in &self.point_mlp {
            feed(layer.dense.weights());
            feed(layer.dense.bias());
            if let Some(bn) = &layer.batchnorm {
                feed(&bn.gamma);
                feed(&bn.beta);
                feed(&bn.running_mean);
                feed(&bn.running_var);
                feed(&[bn.eps]);
            }
        }
        feed(self.fusion.weights());
        feed(self.fusion.bias());
        hex_digest(&h.finalize())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Number of full network forward passes. Safe to share across threads.
#[derive(Debug, Default)]
pub struct EvalCounter(AtomicU64);

impl EvalCounter {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&self, n: u64) {
        self.0.fetch_add(n, Ordering::Relaxed);
    }

    #[inline]
    pub fn increment(&self) {
        self.add(1);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

/// One counted forward pass.
pub fn wdpn_forward(z: &HeterogeneousInput, model: &WdpnModel, counter: &EvalCounter) -> Result<f64> {
    let logit = model.logit(z)?;
    counter.increment();
    Ok(logit)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
