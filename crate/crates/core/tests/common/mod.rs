#![allow(dead_code)]

use rand::Rng;
use svehnn::attribution::Predictor;
use svehnn::nn::{HeterogeneousInput, WdpnModel};
use svehnn::rng;
use svehnn::training::{init_model, ArchConfig};

/// Small random network with non-trivial batch-norm statistics.
pub fn random_model(k: usize, d: usize, seed: u64) -> WdpnModel {
    let arch = ArchConfig {
        hidden: vec![6, 5],
        batchnorm: true,
    };
    let mut m = init_model(k, d, &arch, 1.0, seed).unwrap();
    let mut r = rng::substream(seed, 77);
    for layer in m.point_mlp_mut() {
        let bn = layer.batchnorm.as_mut().unwrap();
        for c in 0..bn.channels() {
            bn.gamma[c] = r.random_range(0.5..1.5);
            bn.beta[c] = r.random_range(-0.3..0.3);
            bn.running_mean[c] = r.random_range(-0.3..0.3);
            bn.running_var[c] = r.random_range(0.5..1.5);
        }
    }
    m
}

pub fn random_input(k: usize, d: usize, seed: u64) -> HeterogeneousInput {
    let mut r = rng::substream(seed, 78);
    let pts = (0..k).map(|_| [0, 1, 2].map(|_| r.random_range(-1.0..1.0))).collect();
    let tab = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
    HeterogeneousInput::from_parts(pts, tab).unwrap()
}

/// `a·f + b·g` in logit space.
pub struct Weighted<'a> {
    pub f: &'a WdpnModel,
    pub g: &'a WdpnModel,
    pub a: f64,
    pub b: f64,
}

impl Predictor for Weighted<'_> {
    fn num_points(&self) -> usize {
        self.f.num_points()
    }

    fn num_tabular(&self) -> usize {
        self.f.num_tabular()
    }

    fn logit(&self, z: &HeterogeneousInput) -> svehnn::Result<f64> {
        Ok(self.a * self.f.logit(z)? + self.b * self.g.logit(z)?)
    }
}

/// Tabular-only game `f(x) = x0 · x1`.
pub struct Product;

impl Predictor for Product {
    fn num_points(&self) -> usize {
        0
    }

    fn num_tabular(&self) -> usize {
        2
    }

    fn logit(&self, z: &HeterogeneousInput) -> svehnn::Result<f64> {
        let x = z.tabular.values();
        Ok(x[0] * x[1])
    }
}

/// Tabular-only model with linear fusion `w·x + b`.
pub fn linear_model(w: &[f64], bias: f64) -> WdpnModel {
    let mut m = init_model(0, w.len(), &ArchConfig::default(), 1.0, 0).unwrap();
    let fusion = m.fusion_mut();
    fusion.weights_mut().copy_from_slice(w);
    fusion.bias_mut()[0] = bias;
    m
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}
