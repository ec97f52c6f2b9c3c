//! Probabilistic twin of the point-cloud network.
//!
//! Every hidden unit is carried as an independent Gaussian `(mean, var)`.
//! The first layer turns "point `j` is in a random size-`k` subset" into
//! Gaussian moments; every later layer is the moment-matched version of its
//! deterministic counterpart. One pass yields the expected logit over all
//! size-`k` subsets.

mod layers;
mod propagate;

pub use layers::{
    normal_cdf, normal_pdf, prob_batchnorm, prob_linear, prob_max_pair, prob_maxpool, prob_relu, relu_moments,
};
pub use propagate::{
    expectation_difference, lift_model, ExpectationDifference, prob_forward_expectation, subset_first_layer, tabular_subset_moments,
    LogitMoments, Membership, PreparedInput, ProbWdpnModel, SubsetSpec,
};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Scalar Gaussian moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub var: f64,
}

impl Gaussian {
    pub const fn new(mean: f64, var: f64) -> Self {
        Self { mean, var }
    }

    pub const fn point(mean: f64) -> Self {
        Self { mean, var: 0.0 }
    }

    pub fn std(&self) -> f64 {
        self.var.sqrt()
    }
}

/// Independent per-unit Gaussians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianVector {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl GaussianVector {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.len() != var.len() {
            return Err(Error::Shape(format!(
                "gaussian vector has {} means and {} variances",
                mean.len(),
                var.len()
            )));
        }
        if var.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain("variances must be finite and non-negative".into()));
        }
        Ok(Self { mean, var })
    }

    /// Zero-variance vector.
    pub fn deterministic(mean: Vec<f64>) -> Self {
        let var = vec![0.0; mean.len()];
        Self { mean, var }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn get(&self, i: usize) -> Gaussian {
        Gaussian::new(self.mean[i], self.var[i])
    }
}

/// How the first layer assigns variance to a randomly included point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMode {
    /// Finite-population variance summed over the point's three coordinates.
    #[default]
    AsWritten,
    /// Whole-point Bernoulli inclusion: `p(1−p)(h − h_bl)²`.
    BernoulliPoint,
}

impl VarianceMode {
    pub const ALL: [VarianceMode; 2] = [VarianceMode::AsWritten, VarianceMode::BernoulliPoint];

    pub fn as_str(&self) -> &'static str {
        match self {
            VarianceMode::AsWritten => "as_written",
            VarianceMode::BernoulliPoint => "bernoulli_point",
        }
    }
}

impl std::fmt::Display for VarianceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for VarianceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "as_written" => Ok(VarianceMode::AsWritten),
            "bernoulli_point" => Ok(VarianceMode::BernoulliPoint),
            other => Err(Error::Config(format!("unknown variance mode `{other}`"))),
        }
    }
}
