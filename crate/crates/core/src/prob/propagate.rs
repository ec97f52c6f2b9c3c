use serde::{Deserialize, Serialize};

use super::layers::{prob_batchnorm, prob_linear, prob_maxpool, prob_relu};
use super::{Gaussian, GaussianVector, VarianceMode};
use crate::attribution::{BaselineSpec, FeatureKind, FeatureSpace};
use crate::nn::{DenseLayerParams, EvalCounter, HeterogeneousInput, Point3, PointLayer, WdpnModel};
use crate::{Error, Result};

/// Probabilistic twin of a [`WdpnModel`]. Borrows the source parameters
/// unchanged; nothing is retrained.
#[derive(Debug, Clone, Copy)]
pub struct ProbWdpnModel<'m> {
    source: &'m WdpnModel,
    variance_mode: VarianceMode,
}

pub fn lift_model(model: &WdpnModel, variance_mode: VarianceMode) -> ProbWdpnModel<'_> {
    ProbWdpnModel {
        source: model,
        variance_mode,
    }
}

impl<'m> ProbWdpnModel<'m> {
    pub fn source(&self) -> &'m WdpnModel {
        self.source
    }

    pub fn variance_mode(&self) -> VarianceMode {
        self.variance_mode
    }

    /// Precomputes first-layer activations of `z` and of its baseline.
    pub fn prepare(&self, z: &'m HeterogeneousInput, baseline: &BaselineSpec) -> Result<PreparedInput<'m>> {
        PreparedInput::new(*self, z, baseline)
    }
}

/// Which size-`k` subsets a forward pass averages over. Features other than
/// the forced ones form the population the subset is drawn from.
#[derive(Debug, Clone, Copy)]
pub struct SubsetSpec<'a> {
    pub k: usize,
    pub forced_in: Option<usize>,
    pub forced_out: Option<usize>,
    pub baseline: &'a BaselineSpec,
}

/// Role of one feature in a subset pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    ForcedIn,
    ForcedOut,
    /// Included with probability `k / population`.
    Random,
}

fn membership(id: usize, forced_in: Option<usize>, forced_out: Option<usize>) -> Membership {
    if forced_in == Some(id) {
        Membership::ForcedIn
    } else if forced_out == Some(id) {
        Membership::ForcedOut
    } else {
        Membership::Random
    }
}

/// Population size left for the random draw, after validating the spec.
fn population(total: usize, k: usize, forced_in: Option<usize>, forced_out: Option<usize>) -> Result<usize> {
    for id in forced_in.iter().chain(forced_out.iter()) {
        if *id >= total {
            return Err(Error::InvalidFeature { id: *id, total });
        }
    }
    if forced_in.is_some() && forced_in == forced_out {
        return Err(Error::InvalidSpec("a feature cannot be forced in and out".into()));
    }
    let n = total - usize::from(forced_in.is_some()) - usize::from(forced_out.is_some());
    if k > n {
        return Err(Error::InvalidSpec(format!(
            "subset size {k} exceeds the {n} features available for sampling"
        )));
    }
    Ok(n)
}

/// Moments of one unit `u = u_bl + I·Δ` where `I` marks inclusion in a
/// random size-`k` subset of `n` features.
///
/// `delta_sq_sum` is `Σ_l (Δp_l W_l)²` over the coordinates of the feature;
/// a tabular feature has a single coordinate, and then both variance modes
/// coincide.
#[inline]
fn random_member_moments(
    base: f64,
    full: f64,
    delta_sq_sum: f64,
    k: usize,
    n: usize,
    mode: VarianceMode,
    clamps: &mut usize,
) -> Gaussian {
    if k == 0 {
        return Gaussian::point(base);
    }
    if k == n {
        return Gaussian::point(full);
    }
    let (kf, nf) = (k as f64, n as f64);
    let p = kf / nf;
    let delta = full - base;
    let mean = base + p * delta;
    let var = match mode {
        VarianceMode::AsWritten => {
            let v = kf * (nf - kf) / (nf - 1.0) * (delta_sq_sum / nf - (delta / nf).powi(2));
            if v < 0.0 {
                *clamps += 1;
                0.0
            } else {
                v
            }
        }
        VarianceMode::BernoulliPoint => p * (1.0 - p) * delta * delta,
    };
    Gaussian::new(mean, var)
}

/// First-layer pre-activation of one point under random subset membership.
///
/// `h = b + Wᵀp` for the point and `h_bl` for its baseline replacement. A
/// forced-in point keeps `h`, a forced-out point takes `h_bl`; otherwise the
/// mean is `h_bl + (k/n)(h − h_bl)` and the variance follows `mode` applied
/// to `h − h_bl`. Returns the moments and the number of clamped variances.
pub fn subset_first_layer(
    point: &Point3,
    baseline_point: &Point3,
    params: &DenseLayerParams,
    role: Membership,
    k: usize,
    population: usize,
    mode: VarianceMode,
) -> Result<(GaussianVector, usize)> {
    if params.in_dim() != 3 {
        return Err(Error::Shape(format!(
            "first point layer must take 3 coordinates, takes {}",
            params.in_dim()
        )));
    }
    if k > population {
        return Err(Error::InvalidSpec(format!("subset size {k} exceeds population {population}")));
    }
    let act = FirstLayer::new(point, baseline_point, params);
    let mut clamps = 0;
    let g = act.moments(role, k, population, mode, &mut clamps);
    Ok((g, clamps))
}

/// Cached first-layer quantities for one point.
#[derive(Debug, Clone)]
struct FirstLayer {
    h: Vec<f64>,
    h_bl: Vec<f64>,
    delta_sq_sum: Vec<f64>,
}

impl FirstLayer {
    fn new(p: &Point3, bl: &Point3, params: &DenseLayerParams) -> Self {
        let out = params.out_dim();
        let mut h = vec![0.0; out];
        let mut h_bl = vec![0.0; out];
        params.forward_into(p, &mut h);
        params.forward_into(bl, &mut h_bl);
        let mut delta_sq_sum = vec![0.0; out];
        for l in 0..3 {
            let dp = p[l] - bl[l];
            for (m, w) in params.row(l).iter().enumerate() {
                delta_sq_sum[m] += (dp * w).powi(2);
            }
        }
        Self { h, h_bl, delta_sq_sum }
    }

    fn moments(&self, role: Membership, k: usize, n: usize, mode: VarianceMode, clamps: &mut usize) -> GaussianVector {
        match role {
            Membership::ForcedIn => GaussianVector::deterministic(self.h.clone()),
            Membership::ForcedOut => GaussianVector::deterministic(self.h_bl.clone()),
            Membership::Random => {
                let (mean, var) = (0..self.h.len())
                    .map(|m| {
                        let g = random_member_moments(self.h_bl[m], self.h[m], self.delta_sq_sum[m], k, n, mode, clamps);
                        (g.mean, g.var)
                    })
                    .unzip();
                GaussianVector { mean, var }
            }
        }
    }
}

/// Tabular summand of the fusion layer, `Σ_t w_t x_t` with each column
/// included at random (or forced). The baseline of every column is `x_bl`.
///
/// `roles[t]` gives column `t`'s membership; `population` and `k` describe
/// the random draw shared with the point features.
#[allow(clippy::too_many_arguments)]
pub fn tabular_subset_moments(
    x: &[f64],
    x_bl: &[f64],
    weights: &[f64],
    roles: &[Membership],
    k: usize,
    population: usize,
    mode: VarianceMode,
) -> Result<(Gaussian, usize)> {
    if x.len() != weights.len() || x_bl.len() != x.len() || roles.len() != x.len() {
        return Err(Error::Shape("tabular values, baselines, weights and roles differ in length".into()));
    }
    if k > population {
        return Err(Error::InvalidSpec(format!("subset size {k} exceeds population {population}")));
    }
    let mut clamps = 0;
    let mut acc = Gaussian::point(0.0);
    for t in 0..x.len() {
        let (full, base) = (weights[t] * x[t], weights[t] * x_bl[t]);
        let g = match roles[t] {
            Membership::ForcedIn => Gaussian::point(full),
            Membership::ForcedOut => Gaussian::point(base),
            Membership::Random => {
                let d = full - base;
                random_member_moments(base, full, d * d, k, population, mode, &mut clamps)
            }
        };
        acc.mean += g.mean;
        acc.var += g.var;
    }
    Ok((acc, clamps))
}

/// Output moments of one probabilistic pass, split by fusion summand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogitMoments {
    /// Latent (point-cloud) summand `Σ_c w_c L_c`.
    pub latent: Gaussian,
    /// Tabular summand `Σ_t w_t x_t`.
    pub tabular: Gaussian,
    pub bias: f64,
    /// Variances clamped to zero in this pass.
    pub clamped: usize,
}

impl LogitMoments {
    /// `μ_k^S`, the expected logit.
    pub fn mean(&self) -> f64 {
        self.latent.mean + self.tabular.mean + self.bias
    }

    pub fn var(&self) -> f64 {
        self.latent.var + self.tabular.var
    }
}

/// An input prepared for repeated subset passes.
#[derive(Debug, Clone)]
pub struct PreparedInput<'m> {
    model: ProbWdpnModel<'m>,
    space: FeatureSpace,
    points: Vec<FirstLayer>,
    tabular: &'m [f64],
    tabular_bl: Vec<f64>,
    tabular_w: Vec<f64>,
    latent_head: Option<DenseLayerParams>,
}

impl<'m> PreparedInput<'m> {
    fn new(model: ProbWdpnModel<'m>, z: &'m HeterogeneousInput, baseline: &BaselineSpec) -> Result<Self> {
        let src = model.source;
        src.check_input(z)?;
        baseline.validate(z.num_points())?;
        let space = FeatureSpace::new(src.num_points(), src.num_tabular())?;
        let points = match src.point_mlp().first() {
            Some(first) => z
                .cloud
                .points()
                .iter()
                .enumerate()
                .map(|(j, p)| FirstLayer::new(p, &baseline.point(j), &first.dense))
                .collect(),
            None if src.num_points() > 0 => {
                return Err(Error::InvalidModel("probabilistic twin needs at least one point layer".into()))
            }
            None => Vec::new(),
        };
        let latent = src.latent_dim();
        let latent_head = (latent > 0).then(|| {
            let w = (0..latent).map(|c| src.latent_weight(c)).collect();
            DenseLayerParams::new(latent, 1, w, vec![0.0]).expect("latent head shape")
        });
        Ok(Self {
            model,
            space,
            points,
            tabular: z.tabular.values(),
            tabular_bl: vec![0.0; src.num_tabular()],
            tabular_w: (0..src.num_tabular()).map(|t| src.tabular_weight(t)).collect(),
            latent_head,
        })
    }

    pub fn feature_space(&self) -> FeatureSpace {
        self.space
    }

    /// One probabilistic forward pass (uncounted).
    pub fn moments(&self, k: usize, forced_in: Option<usize>, forced_out: Option<usize>) -> Result<LogitMoments> {
        let n = population(self.space.total(), k, forced_in, forced_out)?;
        let mode = self.model.variance_mode;
        let src = self.model.source;
        let mut clamped = 0;

        let latent = match &self.latent_head {
            None => Gaussian::point(0.0),
            Some(head) => {
                let layers = src.point_mlp();
                let per_point = self
                    .points
                    .iter()
                    .enumerate()
                    .map(|(j, fl)| {
                        let g = fl.moments(membership(j, forced_in, forced_out), k, n, mode, &mut clamped);
                        propagate_point(g, &layers[0], &layers[1..])
                    })
                    .collect::<Result<Vec<_>>>()?;
                let pooled = prob_maxpool(&per_point)?;
                prob_linear(&pooled, head)?.get(0)
            }
        };

        let roles: Vec<Membership> = (0..self.space.tabular)
            .map(|t| membership(self.space.tabular_id(t), forced_in, forced_out))
            .collect();
        let (tabular, tab_clamps) =
            tabular_subset_moments(self.tabular, &self.tabular_bl, &self.tabular_w, &roles, k, n, mode)?;
        clamped += tab_clamps;

        Ok(LogitMoments {
            latent,
            tabular,
            bias: src.fusion_bias(),
            clamped,
        })
    }

    /// `E_k(Δ_i) = μ_k^{S∪{i}} − μ_k^S` from two uncounted passes, split
    /// into the point-cloud and tabular summands. For a tabular `i` the
    /// tabular part is `w_i (x_i − x_i^bl)` directly.
    pub fn expectation_difference(&self, i: usize, k: usize) -> Result<ExpectationDifference> {
        let kind = self.space.kind(i)?;
        let with = self.moments(k, Some(i), None)?;
        let without = self.moments(k, None, Some(i))?;
        let tab = match kind {
            FeatureKind::Tabular(t) => self.tabular_w[t] * (self.tabular[t] - self.tabular_bl[t]),
            FeatureKind::Point(_) => with.tabular.mean - without.tabular.mean,
        };
        Ok(ExpectationDifference {
            value: with.latent.mean - without.latent.mean + tab,
            clamped: with.clamped + without.clamped,
            output_var: 0.5 * (with.var() + without.var()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectationDifference {
    pub value: f64,
    /// Clamped variances over both passes.
    pub clamped: usize,
    /// Mean logit variance of the two passes.
    pub output_var: f64,
}

/// First-layer batch norm / ReLU, then the remaining point layers.
fn propagate_point(mut g: GaussianVector, first: &PointLayer, rest: &[PointLayer]) -> Result<GaussianVector> {
    g = activate(g, first)?;
    for layer in rest {
        g = activate(prob_linear(&g, &layer.dense)?, layer)?;
    }
    Ok(g)
}

fn activate(mut g: GaussianVector, layer: &PointLayer) -> Result<GaussianVector> {
    if let Some(bn) = &layer.batchnorm {
        g = prob_batchnorm(&g, bn)?;
    }
    if layer.relu {
        g = prob_relu(&g);
    }
    Ok(g)
}

/// Expected logit over size-`k` subsets, as one counted network evaluation.
pub fn prob_forward_expectation(
    z: &HeterogeneousInput,
    model: &ProbWdpnModel<'_>,
    spec: &SubsetSpec<'_>,
    counter: &EvalCounter,
) -> Result<LogitMoments> {
    let prepared = PreparedInput::new(*model, z, spec.baseline)?;
    let out = prepared.moments(spec.k, spec.forced_in, spec.forced_out)?;
    counter.increment();
    Ok(out)
}

/// `E_k(Δ_i)` for feature `i`; two counted evaluations.
pub fn expectation_difference(
    i: usize,
    k: usize,
    z: &HeterogeneousInput,
    model: &ProbWdpnModel<'_>,
    baseline: &BaselineSpec,
    counter: &EvalCounter,
) -> Result<f64> {
    let prepared = PreparedInput::new(*model, z, baseline)?;
    let d = prepared.expectation_difference(i, k)?;
    counter.add(2);
    Ok(d.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::{masked_input, Coalition};
    use crate::nn::{BatchNormParams, PointCloud};
    use crate::rng;
    use crate::training::{init_model, ArchConfig};
    use rand::Rng;

    fn unit_column() -> DenseLayerParams {
        DenseLayerParams::new(3, 1, vec![1.0, 1.0, 1.0], vec![0.0]).unwrap()
    }

    #[test]
    fn first_layer_mean_and_variance_example() {
        for mode in VarianceMode::ALL {
            let (g, clamps) =
                subset_first_layer(&[1.0, 0.0, 0.0], &[0.0; 3], &unit_column(), Membership::Random, 8, 16, mode).unwrap();
            assert!((g.mean[0] - 0.5).abs() < 1e-15);
            // as written: 64/15 · (1/16 − 1/256); whole point: ¼ · 1²
            assert!((g.var[0] - 0.25).abs() < 1e-15, "{mode}: {}", g.var[0]);
            assert_eq!(clamps, 0);
        }
    }

    #[test]
    fn first_layer_boundaries_and_forced_roles() {
        let params = DenseLayerParams::new(3, 2, vec![0.5, -1.0, 2.0, 0.3, -0.7, 0.1], vec![0.2, -0.4]).unwrap();
        let (p, bl) = ([0.4, -1.2, 0.9], [1.0, 0.5, -0.5]);
        let h = params.forward(&p).unwrap();
        let h_bl = params.forward(&bl).unwrap();
        for mode in VarianceMode::ALL {
            let at = |role, k| subset_first_layer(&p, &bl, &params, role, k, 10, mode).unwrap().0;
            assert_eq!(at(Membership::Random, 0), GaussianVector::deterministic(h_bl.clone()));
            assert_eq!(at(Membership::Random, 10), GaussianVector::deterministic(h.clone()));
            assert_eq!(at(Membership::ForcedIn, 3), GaussianVector::deterministic(h.clone()));
            assert_eq!(at(Membership::ForcedOut, 3), GaussianVector::deterministic(h_bl.clone()));
            let mid = at(Membership::Random, 4);
            for m in 0..2 {
                assert!((mid.mean[m] - (h_bl[m] + 0.4 * (h[m] - h_bl[m]))).abs() < 1e-12);
                assert!(mid.var[m] >= 0.0);
            }
        }
        assert!(subset_first_layer(&p, &bl, &params, Membership::Random, 11, 10, VarianceMode::AsWritten).is_err());
    }

    #[test]
    fn as_written_variance_can_clamp_for_tiny_populations() {
        // N = 2: the bracket is Σ_l a_l²/2 − (Σ_l a_l)²/4 with a_l = Δp_l W_l,
        // negative for three equal contributions
        let params = DenseLayerParams::new(3, 1, vec![1.0, 1.0, 1.0], vec![0.0]).unwrap();
        let (g, clamps) =
            subset_first_layer(&[1.0, 1.0, 1.0], &[0.0; 3], &params, Membership::Random, 1, 2, VarianceMode::AsWritten)
                .unwrap();
        assert_eq!((g.var[0], clamps), (0.0, 1));
        let (_, clamps) =
            subset_first_layer(&[1.0, 1.0, 1.0], &[0.0; 3], &params, Membership::Random, 1, 2, VarianceMode::BernoulliPoint)
                .unwrap();
        assert_eq!(clamps, 0);
    }

    #[test]
    fn tabular_moments() {
        let (g, c) = tabular_subset_moments(&[], &[], &[], &[], 0, 3, VarianceMode::AsWritten).unwrap();
        assert_eq!((g, c), (Gaussian::point(0.0), 0));
        let roles = [Membership::ForcedIn, Membership::Random, Membership::Random];
        let (g, _) =
            tabular_subset_moments(&[2.0, 1.0, -3.0], &[0.0; 3], &[0.5, 2.0, 1.0], &roles, 1, 2, VarianceMode::AsWritten)
                .unwrap();
        // 0.5·2 forced, then each random column at p = ½
        assert!((g.mean - (1.0 + 0.5 * 2.0 + 0.5 * -3.0)).abs() < 1e-15);
        // single-coordinate features: both modes give p(1 − p)Δ²
        assert!((g.var - (0.25 * 4.0 + 0.25 * 9.0)).abs() < 1e-12);
    }

    fn random_model(k: usize, d: usize, seed: u64) -> WdpnModel {
        let arch = ArchConfig {
            hidden: vec![6, 5],
            batchnorm: true,
        };
        let mut m = init_model(k, d, &arch, 1.0, seed).unwrap();
        let mut r = rng::substream(seed, 77);
        for layer in m.point_mlp_mut() {
            let bn: &mut BatchNormParams = layer.batchnorm.as_mut().unwrap();
            for c in 0..bn.channels() {
                bn.gamma[c] = r.random_range(0.5..1.5);
                bn.beta[c] = r.random_range(-0.3..0.3);
                bn.running_mean[c] = r.random_range(-0.3..0.3);
                bn.running_var[c] = r.random_range(0.5..1.5);
            }
        }
        m
    }

    fn random_input(k: usize, d: usize, seed: u64) -> HeterogeneousInput {
        let mut r = rng::substream(seed, 78);
        let pts = (0..k).map(|_| [0, 1, 2].map(|_| r.random_range(-1.0..1.0))).collect();
        let tab = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        HeterogeneousInput::from_parts(pts, tab).unwrap()
    }

    fn hull_like(k: usize) -> BaselineSpec {
        BaselineSpec::hull(PointCloud::new((0..k).map(|j| [1.0, -0.5, j as f64 * 0.1]).collect()).unwrap())
    }

    #[test]
    fn degenerate_passes_reproduce_the_deterministic_network() {
        for seed in 0..5 {
            let (k, d) = (5, 3);
            let model = random_model(k, d, seed);
            let z = random_input(k, d, seed);
            for baseline in [BaselineSpec::zero(), hull_like(k)] {
                let f_z = model.logit(&z).unwrap();
                let f_bl = model.logit(&baseline.baseline_input(&z).unwrap()).unwrap();
                for mode in VarianceMode::ALL {
                    let prep = lift_model(&model, mode).prepare(&z, &baseline).unwrap();
                    let full = prep.moments(k + d, None, None).unwrap();
                    assert!((full.mean() - f_z).abs() <= 1e-9);
                    assert_eq!(full.var(), 0.0);
                    assert!((prep.moments(0, None, None).unwrap().mean() - f_bl).abs() <= 1e-9);
                    for i in 0..k + d {
                        // forced set plus every remaining feature = F
                        let top = prep.moments(k + d - 1, Some(i), None).unwrap();
                        assert!((top.mean() - f_z).abs() <= 1e-9);
                        let bottom = prep.moments(0, None, Some(i)).unwrap();
                        assert!((bottom.mean() - f_bl).abs() <= 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn forward_expectation_counts_one_evaluation() {
        let model = random_model(3, 2, 1);
        let z = random_input(3, 2, 1);
        let counter = EvalCounter::new();
        let baseline = BaselineSpec::zero();
        let spec = SubsetSpec {
            k: 2,
            forced_in: Some(0),
            forced_out: Some(4),
            baseline: &baseline,
        };
        let prob = lift_model(&model, VarianceMode::AsWritten);
        prob_forward_expectation(&z, &prob, &spec, &counter).unwrap();
        assert_eq!(counter.get(), 1);
        expectation_difference(1, 2, &z, &prob, &baseline, &counter).unwrap();
        assert_eq!(counter.get(), 3);
        let bad = SubsetSpec { k: 4, ..spec };
        assert!(prob_forward_expectation(&z, &prob, &bad, &counter).is_err());
        let clash = SubsetSpec {
            forced_out: Some(0),
            ..spec
        };
        assert!(prob_forward_expectation(&z, &prob, &clash, &counter).is_err());
        assert!(expectation_difference(5, 0, &z, &prob, &baseline, &counter).is_err());
    }

    #[test]
    fn tabular_shortcut_on_linear_model() {
        let w = vec![0.7, -1.3, 2.1];
        let model = WdpnModel::new(0, 3, vec![], DenseLayerParams::new(3, 1, w.clone(), vec![0.4]).unwrap()).unwrap();
        let z = HeterogeneousInput::from_parts(vec![], vec![1.5, 0.5, -2.0]).unwrap();
        for mode in VarianceMode::ALL {
            let prep = lift_model(&model, mode).prepare(&z, &BaselineSpec::zero()).unwrap();
            for i in 0..3 {
                for k in 0..3 {
                    let d = prep.expectation_difference(i, k).unwrap();
                    assert!((d.value - w[i] * z.tabular.values()[i]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn null_features_get_zero_difference() {
        let mut model = random_model(4, 2, 3);
        // tabular column 1 has no weight
        let latent = model.latent_dim();
        model.fusion_mut().weights_mut()[latent + 1] = 0.0;
        let mut pts = random_input(4, 2, 3).cloud.into_points();
        // point 2 sits on its zero baseline
        pts[2] = [0.0; 3];
        let z = HeterogeneousInput::from_parts(pts, vec![0.3, 0.9]).unwrap();
        for mode in VarianceMode::ALL {
            let prep = lift_model(&model, mode).prepare(&z, &BaselineSpec::zero()).unwrap();
            for k in 0..6 {
                assert_eq!(prep.expectation_difference(2, k).unwrap().value, 0.0);
                assert!(prep.expectation_difference(5, k).unwrap().value.abs() < 1e-12);
            }
        }
    }

    /// Average of `f(S ∪ {i}) − f(S)` over every size-`k` subset of `F∖{i}`.
    fn brute_force_difference(model: &WdpnModel, z: &HeterogeneousInput, i: usize, k: usize) -> f64 {
        let n = model.num_features();
        let baseline = BaselineSpec::zero();
        let (mut sum, mut count) = (0.0, 0usize);
        for mask in 0u64..1 << n {
            if mask >> i & 1 == 1 || mask.count_ones() as usize != k {
                continue;
            }
            let without = Coalition::from_mask(mask, n);
            let with = Coalition::from_mask(mask | 1 << i, n);
            let f = |s: &Coalition| model.logit(&masked_input(z, s, &baseline).unwrap()).unwrap();
            sum += f(&with) - f(&without);
            count += 1;
        }
        sum / count as f64
    }

    #[test]
    fn point_differences_track_exhaustive_enumeration() {
        let (k, d) = (5, 3);
        let mut worst: f64 = 0.0;
        for seed in 0..3 {
            let model = random_model(k, d, seed);
            let z = random_input(k, d, seed + 10);
            for mode in VarianceMode::ALL {
                let prep = lift_model(&model, mode).prepare(&z, &BaselineSpec::zero()).unwrap();
                for i in 0..k {
                    for size in 0..k + d {
                        let approx = prep.expectation_difference(i, size).unwrap().value;
                        let exact = brute_force_difference(&model, &z, i, size);
                        worst = worst.max((approx - exact).abs());
                    }
                }
            }
        }
        assert!(worst <= 0.05, "largest gap {worst}");
    }

    #[test]
    fn bernoulli_mode_never_clamps() {
        let model = random_model(6, 2, 9);
        let z = random_input(6, 2, 9);
        let prep = lift_model(&model, VarianceMode::BernoulliPoint).prepare(&z, &hull_like(6)).unwrap();
        for k in 0..8 {
            for i in 0..8 {
                assert_eq!(prep.expectation_difference(i, k).unwrap().clamped, 0);
            }
        }
    }
}
