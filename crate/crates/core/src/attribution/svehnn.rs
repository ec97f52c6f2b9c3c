use rand::Rng;
use rayon::prelude::*;

use super::{Attribution, BaselineSpec, EstimatorKind, ExplainerConfig, SizeDraw};
use crate::nn::{HeterogeneousInput, WdpnModel};
use crate::prob::{lift_model, ExpectationDifference, PreparedInput, VarianceMode};
use crate::{rng, Result};

fn finish(
    values: Vec<f64>,
    diffs: &[ExpectationDifference],
    estimator: EstimatorKind,
    evaluations: u64,
    z: &HeterogeneousInput,
    model: &WdpnModel,
    baseline: &BaselineSpec,
    mode: VarianceMode,
    seed: Option<u64>,
) -> Result<Attribution> {
    let clamped: usize = diffs.iter().map(|d| d.clamped).sum();
    let mean_var = diffs.iter().map(|d| d.output_var).sum::<f64>() / diffs.len().max(1) as f64;
    let f_z = model.logit(z)?;
    let f_baseline = model.logit(&baseline.baseline_input(z)?)?;
    Ok(Attribution {
        values,
        estimator,
        baseline: baseline.kind(),
        evaluations,
        f_z,
        f_baseline,
        seed,
        variance_mode: Some(mode),
        diagnostics: [
            ("clamped_variances".to_string(), clamped as f64),
            ("mean_output_variance".to_string(), mean_var),
        ]
        .into(),
    })
}

/// Approximate Shapley value `s̄_i = (1/|F|) Σ_k E_k(Δ_i)` over every subset
/// size, two probabilistic passes per `(i, k)`: `2·|F|²` evaluations.
pub fn svehnn_full(
    z: &HeterogeneousInput,
    model: &WdpnModel,
    baseline: &BaselineSpec,
    variance_mode: VarianceMode,
) -> Result<Attribution> {
    let prob = lift_model(model, variance_mode);
    let prepared = prob.prepare(z, baseline)?;
    let n = prepared.feature_space().total();
    let diffs: Vec<ExpectationDifference> = (0..n * n)
        .into_par_iter()
        .map(|ik| prepared.expectation_difference(ik / n, ik % n))
        .collect::<Result<_>>()?;
    let values = diffs
        .chunks(n)
        .map(|row| row.iter().map(|d| d.value).sum::<f64>() / n as f64)
        .collect();
    finish(
        values,
        &diffs,
        EstimatorKind::SvehnnFull,
        2 * (n * n) as u64,
        z,
        model,
        baseline,
        variance_mode,
        None,
    )
}

fn draw_sizes(prepared: &PreparedInput<'_>, i: usize, config: &ExplainerConfig) -> Vec<usize> {
    let n = prepared.feature_space().total();
    match config.size_draw {
        SizeDraw::Stratified => (0..config.m).map(|r| r % n).collect(),
        SizeDraw::Uniform => {
            let mut r = rng::substream(config.seed, i as u64);
            (0..config.m).map(|_| r.random_range(0..n)).collect()
        }
    }
}

/// Monte-Carlo variant: `M` subset sizes per feature, `2·M·|F|` evaluations.
/// Feature `i` draws its sizes from substream `i` of the seed.
pub fn svehnn_mc(
    z: &HeterogeneousInput,
    model: &WdpnModel,
    baseline: &BaselineSpec,
    config: &ExplainerConfig,
) -> Result<Attribution> {
    config.validate()?;
    let prob = lift_model(model, config.variance_mode);
    let prepared = prob.prepare(z, baseline)?;
    let n = prepared.feature_space().total();
    let per_feature: Vec<Vec<ExpectationDifference>> = (0..n)
        .into_par_iter()
        .map(|i| {
            draw_sizes(&prepared, i, config)
                .into_iter()
                .map(|k| prepared.expectation_difference(i, k))
                .collect()
        })
        .collect::<Result<_>>()?;
    let values = per_feature
        .iter()
        .map(|row| row.iter().map(|d| d.value).sum::<f64>() / config.m as f64)
        .collect();
    let diffs: Vec<ExpectationDifference> = per_feature.into_iter().flatten().collect();
    finish(
        values,
        &diffs,
        EstimatorKind::SvehnnMc,
        2 * (config.m * n) as u64,
        z,
        model,
        baseline,
        config.variance_mode,
        Some(config.seed),
    )
}
