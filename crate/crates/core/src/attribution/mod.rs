//! Explainers over a unified point + tabular feature space.
//!
//! Feature ids are dense: points occupy `0..K`, tabular columns `K..K+D`.

mod baseline;
mod exact;
mod hull;
mod occlusion;
mod predictor;
mod report;
mod sampling;
mod svehnn;

pub use baseline::{masked_input, BaselineKind, BaselineSpec};
pub use exact::{exact_shapley, EXACT_FEATURE_LIMIT};
pub use hull::{hull_template, ConvexHull, HullTemplate};
pub use occlusion::occlusion;
pub use predictor::{coalition_value, CoalitionEvaluator, GenericEvaluator, Predictor};
pub use report::{AttributionReport, FeatureRecord};
pub use sampling::shapley_sampling;
pub use svehnn::{svehnn_full, svehnn_mc};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::prob::VarianceMode;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureSpace {
    pub points: usize,
    pub tabular: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Point(usize),
    Tabular(usize),
}

impl FeatureSpace {
    pub fn new(points: usize, tabular: usize) -> Result<Self> {
        if points + tabular == 0 {
            return Err(Error::Config("feature space is empty".into()));
        }
        Ok(Self { points, tabular })
    }

    pub fn total(&self) -> usize {
        self.points + self.tabular
    }

    pub fn kind(&self, id: usize) -> Result<FeatureKind> {
        if id < self.points {
            Ok(FeatureKind::Point(id))
        } else if id < self.total() {
            Ok(FeatureKind::Tabular(id - self.points))
        } else {
            Err(Error::InvalidFeature { id, total: self.total() })
        }
    }

    pub fn tabular_id(&self, column: usize) -> usize {
        self.points + column
    }
}

/// Membership mask `S ⊆ F`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Coalition {
    members: Vec<bool>,
}

impl Coalition {
    pub fn empty(n: usize) -> Self {
        Self { members: vec![false; n] }
    }

    pub fn full(n: usize) -> Self {
        Self { members: vec![true; n] }
    }

    /// Bit `i` of `mask` is feature `i`.
    pub fn from_mask(mask: u64, n: usize) -> Self {
        Self {
            members: (0..n).map(|i| mask >> i & 1 == 1).collect(),
        }
    }

    pub fn from_members(members: Vec<bool>) -> Self {
        Self { members }
    }

    pub fn universe(&self) -> usize {
        self.members.len()
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        self.members[i]
    }

    pub fn insert(&mut self, i: usize) {
        self.members[i] = true;
    }

    pub fn remove(&mut self, i: usize) {
        self.members[i] = false;
    }

    pub fn len(&self) -> usize {
        self.members.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.members.iter().any(|&b| b)
    }

    pub fn members(&self) -> &[bool] {
        &self.members
    }

    pub(crate) fn set_mask(&mut self, mask: u64) {
        for (i, m) in self.members.iter_mut().enumerate() {
            *m = mask >> i & 1 == 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Exact,
    Sampling,
    Occlusion,
    SvehnnFull,
    SvehnnMc,
}

impl EstimatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::Exact => "exact",
            EstimatorKind::Sampling => "sampling",
            EstimatorKind::Occlusion => "occlusion",
            EstimatorKind::SvehnnFull => "svehnn_full",
            EstimatorKind::SvehnnMc => "svehnn_mc",
        }
    }
}

/// How svehnn-mc draws subset sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeDraw {
    /// `k` uniform on `{0, …, |F|−1}`, independently per draw.
    #[default]
    Uniform,
    /// Draw `r` uses `k = r mod |F|`.
    Stratified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplainerConfig {
    /// Permutations for sampling; sampled subset sizes per feature for svehnn-mc.
    pub m: usize,
    pub seed: u64,
    pub variance_mode: VarianceMode,
    #[serde(default)]
    pub size_draw: SizeDraw,
}

impl ExplainerConfig {
    pub fn new(m: usize, seed: u64) -> Self {
        Self {
            m,
            seed,
            variance_mode: VarianceMode::default(),
            size_draw: SizeDraw::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Config("Monte-Carlo budget M must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-feature relevance in logit units, with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub values: Vec<f64>,
    pub estimator: EstimatorKind,
    pub baseline: BaselineKind,
    /// Network evaluations (forward passes, or probabilistic passes for svehnn).
    pub evaluations: u64,
    pub f_z: f64,
    pub f_baseline: f64,
    pub seed: Option<u64>,
    pub variance_mode: Option<VarianceMode>,
    pub diagnostics: BTreeMap<String, f64>,
}

impl Attribution {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// SHA-256 over the values (little-endian f64 bits), hex encoded.
    pub fn checksum(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for v in &self.values {
            h.update(v.to_le_bytes());
        }
        crate::nn::hex_digest(&h.finalize())
    }
}
