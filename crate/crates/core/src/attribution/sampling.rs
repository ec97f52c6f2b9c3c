use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{Attribution, BaselineSpec, Coalition, EstimatorKind, ExplainerConfig, Predictor};
use crate::nn::HeterogeneousInput;
use crate::{rng, Result};

/// Permutation-sampling Shapley estimator.
///
/// Each of the `M` permutations walks its prefixes once, so it costs `|F|`
/// evaluations; `f(z^bl)` is the shared starting value and is not counted.
/// Permutation `r` draws from substream `r` of the seed.
pub fn shapley_sampling<P: Predictor>(
    z: &HeterogeneousInput,
    model: &P,
    baseline: &BaselineSpec,
    config: &ExplainerConfig,
) -> Result<Attribution> {
    config.validate()?;
    let n = model.num_points() + model.num_tabular();
    let eval = model.evaluator(z, baseline)?;
    let f_baseline = eval.logit(&Coalition::empty(n))?;
    let f_z = eval.logit(&Coalition::full(n))?;

    let per_permutation: Vec<Vec<f64>> = (0..config.m)
        .into_par_iter()
        .map(|r| {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng::substream(config.seed, r as u64));
            let mut c = Coalition::empty(n);
            let mut contrib = vec![0.0; n];
            let mut prev = f_baseline;
            for &i in &order {
                c.insert(i);
                let cur = eval.logit(&c)?;
                contrib[i] = cur - prev;
                prev = cur;
            }
            Ok(contrib)
        })
        .collect::<Result<_>>()?;

    let mut values = vec![0.0; n];
    for contrib in &per_permutation {
        for (v, c) in values.iter_mut().zip(contrib) {
            *v += c;
        }
    }
    let scale = 1.0 / config.m as f64;
    values.iter_mut().for_each(|v| *v *= scale);

    Ok(Attribution {
        values,
        estimator: EstimatorKind::Sampling,
        baseline: baseline.kind(),
        evaluations: (config.m * n) as u64,
        f_z,
        f_baseline,
        seed: Some(config.seed),
        variance_mode: None,
        diagnostics: [("permutations".to_string(), config.m as f64)].into(),
    })
}
