use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Dense layer `out_m = b_m + Σ_l x_l W_lm`.
///
/// Weights are stored row-major with shape `(in_dim, out_dim)`, so row `l`
/// holds the fan-out of input `l`. The JSON form is a nested array with the
/// same layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DenseJson", into = "DenseJson")]
pub struct DenseLayerParams {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DenseJson {
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl TryFrom<DenseJson> for DenseLayerParams {
    type Error = Error;

    fn try_from(j: DenseJson) -> Result<Self> {
        let in_dim = j.w.len();
        let out_dim = j.b.len();
        if let Some(row) = j.w.iter().find(|r| r.len() != out_dim) {
            return Err(Error::InvalidModel(format!(
                "weight row has {} columns, bias has {}",
                row.len(),
                out_dim
            )));
        }
        Self::new(in_dim, out_dim, j.w.into_iter().flatten().collect(), j.b)
    }
}

impl From<DenseLayerParams> for DenseJson {
    fn from(p: DenseLayerParams) -> Self {
        let w = if p.out_dim == 0 {
            vec![Vec::new(); p.in_dim]
        } else {
            p.weights.chunks(p.out_dim).map(<[f64]>::to_vec).collect()
        };
        DenseJson { w, b: p.bias }
    }
}

impl DenseLayerParams {
    pub fn new(in_dim: usize, out_dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(Error::Shape(format!(
                "dense layer {in_dim}x{out_dim} needs {} weights and {out_dim} biases, got {} and {}",
                in_dim * out_dim,
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("dense layer has non-finite parameters".into()));
        }
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            bias,
        })
    }

    /// Builds a layer from nested rows `W[l][m]`.
    pub fn from_rows(rows: &[Vec<f64>], bias: Vec<f64>) -> Result<Self> {
        DenseJson {
            w: rows.to_vec(),
            b: bias,
        }
        .try_into()
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    #[inline]
    pub fn weight(&self, l: usize, m: usize) -> f64 {
        self.weights[l * self.out_dim + m]
    }

    /// Row `l` of `W`: the weights leaving input `l`.
    #[inline]
    pub fn row(&self, l: usize) -> &[f64] {
        &self.weights[l * self.out_dim..(l + 1) * self.out_dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// `out` ← `b + Wᵀx`, without the shape check.
    #[inline]
    pub(crate) fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        for (l, &xl) in x.iter().enumerate() {
            if xl == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(self.row(l)) {
                *o += xl * w;
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim {
            return Err(Error::Shape(format!(
                "linear layer expects {} inputs, got {}",
                self.in_dim,
                x.len()
            )));
        }
        let mut out = vec![0.0; self.out_dim];
        self.forward_into(x, &mut out);
        Ok(out)
    }
}

/// Inference-mode batch normalisation with frozen running statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
}

impl BatchNormParams {
    pub fn identity(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.gamma.len();
        if self.beta.len() != c || self.running_mean.len() != c || self.running_var.len() != c {
            return Err(Error::InvalidModel("batch norm vectors differ in length".into()));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidModel("batch norm epsilon must be finite and non-negative".into()));
        }
        if self.running_var.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidModel("running variance must be finite and non-negative".into()));
        }
        if self.running_var.iter().any(|&v| v + self.eps <= 0.0) {
            return Err(Error::InvalidModel("running variance plus epsilon must be positive".into()));
        }
        let all = self.gamma.iter().chain(&self.beta).chain(&self.running_mean);
        if all.copied().any(|v: f64| !v.is_finite()) {
            return Err(Error::InvalidModel("batch norm has non-finite parameters".into()));
        }
        Ok(())
    }

    /// Channel `c` as the affine map `y = scale·x + shift`.
    #[inline]
    pub fn affine(&self, c: usize) -> (f64, f64) {
        let scale = self.gamma[c] / (self.running_var[c] + self.eps).sqrt();
        (scale, self.beta[c] - scale * self.running_mean[c])
    }

    #[inline]
    pub(crate) fn apply_in_place(&self, x: &mut [f64]) {
        for (c, v) in x.iter_mut().enumerate() {
            let (a, b) = self.affine(c);
            *v = a * *v + b;
        }
    }
}

pub fn linear_forward(x: &[f64], params: &DenseLayerParams) -> Result<Vec<f64>> {
    params.forward(x)
}

pub fn relu_forward(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// `y = γ(x − μ_run)/√(σ²_run + ε) + β`, channelwise.
pub fn batchnorm_infer(x: &[f64], params: &BatchNormParams) -> Result<Vec<f64>> {
    if x.len() != params.channels() {
        return Err(Error::Shape(format!(
            "batch norm has {} channels, input has {}",
            params.channels(),
            x.len()
        )));
    }
    let mut y = x.to_vec();
    params.apply_in_place(&mut y);
    Ok(y)
}
