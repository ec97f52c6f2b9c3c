//! Monte-Carlo oracles for the probabilistic layers and the subset pass.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{BaselineSpec, Coalition, Predictor};
use crate::nn::{BatchNormParams, DenseLayerParams, HeterogeneousInput, PointLayer, WdpnModel};
use crate::prob::{
    lift_model, prob_batchnorm, prob_linear, prob_max_pair, prob_maxpool, prob_relu, Gaussian,
    GaussianVector, VarianceMode,
};
use crate::{rng, Error, Result, TOOL_VERSION};

/// Deliberate faults used to confirm that the harness can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sabotage {
    /// Shifts the ReLU output mean by `0.05·(1 + σ)`.
    ReluMean,
}

impl std::str::FromStr for Sabotage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu-mean" => Ok(Sabotage::ReluMean),
            _ => Err(Error::Config(format!("unknown sabotage mode '{s}'"))),
        }
    }
}

/// The layer implementations under test.
#[derive(Clone, Copy)]
pub struct LayerSet {
    pub relu: fn(&GaussianVector) -> GaussianVector,
    pub batchnorm: fn(&GaussianVector, &BatchNormParams) -> Result<GaussianVector>,
    pub max_pair: fn(Gaussian, Gaussian) -> Gaussian,
    pub linear: fn(&GaussianVector, &DenseLayerParams) -> Result<GaussianVector>,
}

impl Default for LayerSet {
    fn default() -> Self {
        Self {
            relu: prob_relu,
            batchnorm: prob_batchnorm,
            max_pair: prob_max_pair,
            linear: prob_linear,
        }
    }
}

fn shifted_relu(g: &GaussianVector) -> GaussianVector {
    let mut out = prob_relu(g);
    for i in 0..out.len() {
        out.mean[i] += 0.05 * (1.0 + out.var[i].sqrt());
    }
    out
}

impl LayerSet {
    pub fn with_sabotage(sabotage: Option<Sabotage>) -> Self {
        let mut set = Self::default();
        if sabotage == Some(Sabotage::ReluMean) {
            set.relu = shifted_relu;
        }
        set
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub seed: u64,
    pub configs: usize,
    pub samples: usize,
    pub subset_samples: usize,
    /// Pass threshold in standard errors.
    pub tolerance_se: f64,
    pub sabotage: Option<Sabotage>,
}

impl VerifyConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            configs: 20,
            samples: 1_000_000,
            subset_samples: 50_000,
            tolerance_se: 3.0,
            sabotage: None,
        }
    }
}

/// One analytic moment against its Monte-Carlo estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub check: String,
    pub config: usize,
    pub quantity: String,
    pub predicted: f64,
    pub empirical: f64,
    pub std_error: f64,
    /// `|predicted − empirical| / std_error` (0 when both are exact and equal).
    pub z_score: f64,
    pub pass: bool,
}

impl MomentCheck {
    fn new(check: &str, config: usize, quantity: String, predicted: f64, empirical: f64, se: f64, tol: f64) -> Self {
        let gap = (predicted - empirical).abs();
        let z_score = if se > 0.0 {
            gap / se
        } else if gap <= 1e-12 * (1.0 + predicted.abs()) {
            0.0
        } else {
            f64::INFINITY
        };
        Self {
            check: check.to_string(),
            config,
            quantity,
            predicted,
            empirical,
            std_error: se,
            z_score,
            pass: z_score <= tol,
        }
    }
}

/// Streaming first four moments, shifted by a reference value.
#[derive(Debug, Clone, Copy)]
struct Moments {
    shift: f64,
    n: f64,
    s: [f64; 4],
}

impl Moments {
    fn new(shift: f64) -> Self {
        Self { shift, n: 0.0, s: [0.0; 4] }
    }

    #[inline]
    fn push(&mut self, x: f64) {
        let d = x - self.shift;
        let d2 = d * d;
        self.n += 1.0;
        self.s[0] += d;
        self.s[1] += d2;
        self.s[2] += d2 * d;
        self.s[3] += d2 * d2;
    }

    fn merge(mut self, o: &Moments) -> Self {
        self.n += o.n;
        for i in 0..4 {
            self.s[i] += o.s[i];
        }
        self
    }

    fn mean(&self) -> f64 {
        self.shift + self.s[0] / self.n
    }

    fn central(&self) -> (f64, f64) {
        let n = self.n;
        let m = self.s[0] / n;
        let raw2 = self.s[1] / n;
        let c2 = (raw2 - m * m).max(0.0);
        let c4 = self.s[3] / n - 4.0 * m * self.s[2] / n + 6.0 * m * m * raw2 - 3.0 * m.powi(4);
        (c2, c4.max(0.0))
    }

    /// Unbiased variance.
    fn var(&self) -> f64 {
        self.central().0 * self.n / (self.n - 1.0)
    }

    fn mean_se(&self) -> f64 {
        (self.central().0 / self.n).sqrt()
    }

    fn var_se(&self) -> f64 {
        let (c2, c4) = self.central();
        ((c4 - c2 * c2).max(0.0) / self.n).sqrt()
    }
}

/// Monte-Carlo moments of `f(x)` for `x` with independent Gaussian entries,
/// sampled on `chunks` substreams and merged in chunk order.
fn sample_outputs<F>(input: &GaussianVector, out_dim: usize, samples: usize, seed: u64, shift: &[f64], f: F) -> Vec<Moments>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    const CHUNKS: usize = 16;
    let per = samples.div_ceil(CHUNKS);
    let partial: Vec<Vec<Moments>> = (0..CHUNKS)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::substream(seed, c as u64);
            let mut acc: Vec<Moments> = shift.iter().map(|&s| Moments::new(s)).collect();
            let mut x = vec![0.0; input.len()];
            let mut y = vec![0.0; out_dim];
            let count = per.min(samples.saturating_sub(c * per));
            for _ in 0..count {
                for (i, xi) in x.iter_mut().enumerate() {
                    let e: f64 = StandardNormal.sample(&mut r);
                    *xi = input.mean[i] + input.var[i].sqrt() * e;
                }
                f(&x, &mut y);
                for (a, &v) in acc.iter_mut().zip(&y) {
                    a.push(v);
                }
            }
            acc
        })
        .collect();
    let mut total: Vec<Moments> = shift.iter().map(|&s| Moments::new(s)).collect();
    for p in &partial {
        for (t, m) in total.iter_mut().zip(p) {
            *t = t.merge(m);
        }
    }
    total
}

fn compare(name: &str, config: usize, predicted: &GaussianVector, mc: &[Moments], tol: f64) -> Vec<MomentCheck> {
    let mut out = Vec::new();
    for (u, m) in mc.iter().enumerate() {
        out.push(MomentCheck::new(name, config, format!("mean[{u}]"), predicted.mean[u], m.mean(), m.mean_se(), tol));
        out.push(MomentCheck::new(name, config, format!("var[{u}]"), predicted.var[u], m.var(), m.var_se(), tol));
    }
    out
}

/// Means in `[−2, 2]`, variances in `[0.5, 3]`: `|μ/σ| ≤ 2.83`, so every
/// branch of a ReLU or max is hit by thousands of samples.
fn random_gaussians<R: Rng>(r: &mut R, n: usize) -> GaussianVector {
    let mean = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
    let var = (0..n).map(|_| r.random_range(0.5..3.0)).collect();
    GaussianVector { mean, var }
}

fn check_layer(name: &str, index: u64, layers: &LayerSet, cfg: &VerifyConfig) -> Result<Vec<MomentCheck>> {
    let mut out = Vec::new();
    for c in 0..cfg.configs {
        let mut r = rng::substream(cfg.seed, index * 10_000 + c as u64);
        let mc_seed = rng::mix(cfg.seed, index * 10_000 + c as u64);
        let checks = match name {
            "prob_relu" => {
                let g = random_gaussians(&mut r, 1);
                let pred = (layers.relu)(&g);
                let mc = sample_outputs(&g, 1, cfg.samples, mc_seed, &pred.mean, |x, y| y[0] = x[0].max(0.0));
                compare(name, c, &pred, &mc, cfg.tolerance_se)
            }
            "prob_batchnorm" => {
                let g = random_gaussians(&mut r, 1);
                let bn = BatchNormParams {
                    gamma: vec![r.random_range(-2.0..2.0)],
                    beta: vec![r.random_range(-1.0..1.0)],
                    running_mean: vec![r.random_range(-1.0..1.0)],
                    running_var: vec![r.random_range(0.1..2.0)],
                    eps: 1e-5,
                };
                let pred = (layers.batchnorm)(&g, &bn)?;
                let (a, b) = bn.affine(0);
                let mc = sample_outputs(&g, 1, cfg.samples, mc_seed, &pred.mean, |x, y| y[0] = a * x[0] + b);
                compare(name, c, &pred, &mc, cfg.tolerance_se)
            }
            "prob_max_pair" => {
                let g = random_gaussians(&mut r, 2);
                let p = (layers.max_pair)(g.get(0), g.get(1));
                let pred = GaussianVector {
                    mean: vec![p.mean],
                    var: vec![p.var],
                };
                let mc = sample_outputs(&g, 1, cfg.samples, mc_seed, &pred.mean, |x, y| y[0] = x[0].max(x[1]));
                compare(name, c, &pred, &mc, cfg.tolerance_se)
            }
            "prob_linear" => {
                let g = random_gaussians(&mut r, 4);
                let w = (0..4).map(|_| r.random_range(-1.5..1.5)).collect();
                let params = DenseLayerParams::new(4, 1, w, vec![r.random_range(-1.0..1.0)])?;
                let pred = (layers.linear)(&g, &params)?;
                let mc = sample_outputs(&g, 1, cfg.samples, mc_seed, &pred.mean, |x, y| params.forward_into(x, y));
                compare(name, c, &pred, &mc, cfg.tolerance_se)
            }
            other => return Err(Error::Config(format!("no oracle for layer '{other}'"))),
        };
        out.extend(checks);
    }
    Ok(out)
}

pub const LAYER_CHECKS: [&str; 4] = ["prob_relu", "prob_batchnorm", "prob_max_pair", "prob_linear"];

/// Every layer against its Monte-Carlo oracle on `cfg.configs` random
/// configurations, one output unit (mean and variance) per configuration.
pub fn verify_layers(layers: &LayerSet, cfg: &VerifyConfig) -> Result<Vec<MomentCheck>> {
    let mut out = Vec::new();
    for (i, name) in LAYER_CHECKS.iter().enumerate() {
        out.extend(check_layer(name, i as u64, layers, cfg)?);
    }
    Ok(out)
}

/// Expected logit over uniformly drawn size-`k` subsets (empirical) against
/// the probabilistic pass, for each `k` in `ks` and each variance mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetCheck {
    pub k: usize,
    pub variance_mode: VarianceMode,
    pub check: MomentCheck,
    /// Variances clamped at zero during the pass.
    pub clamped: usize,
}

pub fn verify_subset_pass(
    z: &HeterogeneousInput,
    model: &WdpnModel,
    baseline: &BaselineSpec,
    ks: &[usize],
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<Vec<SubsetCheck>> {
    let n = model.num_features();
    let eval = model.evaluator(z, baseline)?;
    let mut out = Vec::new();
    for &k in ks {
        if k > n {
            return Err(Error::InvalidSpec(format!("subset size {k} exceeds {n} features")));
        }
        const CHUNKS: usize = 16;
        let per = samples.div_ceil(CHUNKS);
        let partial: Vec<Moments> = (0..CHUNKS)
            .into_par_iter()
            .map(|c| {
                let mut r = rng::substream(rng::mix(seed, k as u64), c as u64);
                let mut ids: Vec<usize> = (0..n).collect();
                let mut m = Moments::new(0.0);
                let count = per.min(samples.saturating_sub(c * per));
                for _ in 0..count {
                    let (chosen, _) = ids.partial_shuffle(&mut r, k);
                    let mut s = Coalition::empty(n);
                    for &i in chosen.iter() {
                        s.insert(i);
                    }
                    m.push(eval.logit(&s)?);
                }
                Ok(m)
            })
            .collect::<Result<_>>()?;
        let mc = partial.iter().fold(Moments::new(0.0), |a, p| a.merge(p));
        for mode in VarianceMode::ALL {
            let moments = lift_model(model, mode).prepare(z, baseline)?.moments(k, None, None)?;
            out.push(SubsetCheck {
                k,
                variance_mode: mode,
                check: MomentCheck::new(
                    "prob_forward_expectation",
                    k,
                    "mean".into(),
                    moments.mean(),
                    mc.mean(),
                    mc.mean_se(),
                    tol,
                ),
                clamped: moments.clamped,
            });
        }
    }
    Ok(out)
}

/// Largest `|forward − reversed|` fold-order difference of iterated Clark
/// pooling over random point sets, per moment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldOrderSensitivity {
    pub trials: usize,
    pub max_mean_gap: f64,
    pub max_var_gap: f64,
}

pub fn fold_order_sensitivity(seed: u64, trials: usize, points: usize) -> Result<FoldOrderSensitivity> {
    let mut r = rng::substream(seed, 99);
    let mut out = FoldOrderSensitivity {
        trials,
        max_mean_gap: 0.0,
        max_var_gap: 0.0,
    };
    for _ in 0..trials {
        let per_point: Vec<GaussianVector> = (0..points).map(|_| random_gaussians(&mut r, 1)).collect();
        let fwd = prob_maxpool(&per_point)?;
        let rev: Vec<GaussianVector> = per_point.iter().rev().cloned().collect();
        let bwd = prob_maxpool(&rev)?;
        out.max_mean_gap = out.max_mean_gap.max((fwd.mean[0] - bwd.mean[0]).abs());
        out.max_var_gap = out.max_var_gap.max((fwd.var[0] - bwd.var[0]).abs());
    }
    Ok(out)
}

/// Eight-feature model whose subset expectation is linear in the inclusion
/// indicators: one point through a ReLU-free point MLP plus seven tabular
/// columns. The probabilistic mean is exact for it, so any gap is error.
pub fn linear_toy(seed: u64) -> Result<(WdpnModel, HeterogeneousInput)> {
    let mut r = rng::substream(seed, 7);
    let mut uni = |n: usize| -> Vec<f64> { (0..n).map(|_| r.random_range(-1.0..1.0)).collect() };
    let l1 = PointLayer {
        dense: DenseLayerParams::new(3, 4, uni(12), uni(4))?,
        batchnorm: Some(BatchNormParams {
            gamma: uni(4).iter().map(|g| 1.0 + 0.5 * g).collect(),
            beta: uni(4),
            running_mean: uni(4),
            running_var: uni(4).iter().map(|v| 1.0 + 0.5 * v).collect(),
            eps: 1e-5,
        }),
        relu: false,
    };
    let l2 = PointLayer {
        dense: DenseLayerParams::new(4, 3, uni(12), uni(3))?,
        batchnorm: None,
        relu: false,
    };
    let fusion = DenseLayerParams::new(10, 1, uni(10).iter().map(|w| 2.0 * w).collect(), uni(1))?;
    let model = WdpnModel::new(1, 7, vec![l1, l2], fusion)?;
    let z = HeterogeneousInput::from_parts(vec![[uni(1)[0] * 2.0, uni(1)[0] * 2.0, uni(1)[0] * 2.0]], uni(7).iter().map(|x| 2.0 * x).collect())?;
    Ok((model, z))
}

/// Eight-feature ReLU network (4 points, 4 tabular columns). Its subset
/// expectation is only approximated by the Gaussian pass.
pub fn relu_toy(seed: u64) -> Result<(WdpnModel, HeterogeneousInput)> {
    let arch = crate::training::ArchConfig {
        hidden: vec![8, 8],
        batchnorm: false,
    };
    let model = crate::training::init_model(4, 4, &arch, 1.0, seed)?;
    let mut r = rng::substream(seed, 8);
    let mut uni = || r.random_range(-1.0..1.0);
    let points = (0..4).map(|_| [uni(), uni(), uni()]).collect();
    let tabular = (0..4).map(|_| uni()).collect();
    Ok((model, HeterogeneousInput::from_parts(points, tabular)?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub tool_version: String,
    pub config: VerifyConfig,
    pub layer_checks: Vec<MomentCheck>,
    pub subset_checks: Vec<SubsetCheck>,
    /// Clamped variances in the subset checks, per variance mode.
    pub clamp_counts: std::collections::BTreeMap<String, usize>,
    pub fold_order: FoldOrderSensitivity,
    /// The subset oracle on [`relu_toy`]: measures the approximation gap of
    /// the Gaussian pass and does not count toward `failures`.
    pub relu_toy_gap: Vec<SubsetCheck>,
    pub failures: usize,
    pub pass: bool,
}

/// Layer oracles plus the end-to-end subset oracle on [`linear_toy`], with
/// the [`relu_toy`] gap reported alongside.
pub fn run_verification(cfg: &VerifyConfig) -> Result<VerifyReport> {
    let layers = LayerSet::with_sabotage(cfg.sabotage);
    let layer_checks = verify_layers(&layers, cfg)?;
    let (model, z) = linear_toy(cfg.seed)?;
    let ks: Vec<usize> = (1..model.num_features()).collect();
    let subset_checks = verify_subset_pass(
        &z,
        &model,
        &BaselineSpec::zero(),
        &ks,
        cfg.subset_samples,
        cfg.seed,
        cfg.tolerance_se,
    )?;
    let mut clamp_counts = std::collections::BTreeMap::new();
    for mode in VarianceMode::ALL {
        clamp_counts.insert(mode.as_str().to_string(), 0);
    }
    for s in &subset_checks {
        *clamp_counts.get_mut(s.variance_mode.as_str()).expect("all modes") += s.clamped;
    }
    let failures = layer_checks.iter().filter(|c| !c.pass).count()
        + subset_checks.iter().filter(|s| !s.check.pass).count();
    let (relu_model, relu_z) = relu_toy(cfg.seed)?;
    let relu_toy_gap = verify_subset_pass(
        &relu_z,
        &relu_model,
        &BaselineSpec::zero(),
        &ks,
        cfg.subset_samples,
        cfg.seed,
        cfg.tolerance_se,
    )?;
    Ok(VerifyReport {
        tool_version: TOOL_VERSION.to_string(),
        config: cfg.clone(),
        layer_checks,
        subset_checks,
        clamp_counts,
        fold_order: fold_order_sensitivity(cfg.seed, 200, 16)?,
        relu_toy_gap,
        failures,
        pass: failures == 0,
    })
}
