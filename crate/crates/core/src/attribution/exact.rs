use rayon::prelude::*;

use super::{Attribution, BaselineSpec, Coalition, EstimatorKind, Predictor};
use crate::nn::HeterogeneousInput;
use crate::{Error, Result};

/// Largest feature count exact enumeration accepts.
pub const EXACT_FEATURE_LIMIT: usize = 24;

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// `|S|!(n−|S|−1)!/n!` for every coalition size `|S| = 0..n`.
fn shapley_weights(n: usize) -> Vec<f64> {
    let ln_n = ln_factorial(n);
    (0..n)
        .map(|s| (ln_factorial(s) + ln_factorial(n - s - 1) - ln_n).exp())
        .collect()
}

/// Exact Shapley values by enumerating all `2^|F|` coalitions.
///
/// Every coalition is evaluated once into a table indexed by bitmask; two
/// extra passes for `f(z)` and `f(z^bl)` are made and counted, so
/// `evaluations = 2^|F| + 2`.
pub fn exact_shapley<P: Predictor>(z: &HeterogeneousInput, model: &P, baseline: &BaselineSpec) -> Result<Attribution> {
    let n = model.num_points() + model.num_tabular();
    if n > EXACT_FEATURE_LIMIT {
        return Err(Error::TooManyFeatures {
            features: n,
            limit: EXACT_FEATURE_LIMIT,
        });
    }
    if n == 0 {
        return Err(Error::Config("feature space is empty".into()));
    }
    let eval = model.evaluator(z, baseline)?;
    let table: Vec<f64> = (0..1u64 << n)
        .into_par_iter()
        .map_init(
            || Coalition::empty(n),
            |c, mask| {
                c.set_mask(mask);
                eval.logit(c)
            },
        )
        .collect::<Result<_>>()?;
    let f_z = model.logit(z)?;
    let f_baseline = model.logit(&baseline.baseline_input(z)?)?;

    let weights = shapley_weights(n);
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let bit = 1usize << i;
            let mut acc = 0.0;
            for mask in 0..table.len() {
                if mask & bit == 0 {
                    let size = mask.count_ones() as usize;
                    acc += weights[size] * (table[mask | bit] - table[mask]);
                }
            }
            acc
        })
        .collect();

    let mut attr = Attribution {
        values,
        estimator: EstimatorKind::Exact,
        baseline: baseline.kind(),
        evaluations: (1u64 << n) + 2,
        f_z,
        f_baseline,
        seed: None,
        variance_mode: None,
        diagnostics: Default::default(),
    };
    let gap = attr.sum() - (f_z - f_baseline);
    attr.diagnostics.insert("completeness_gap".into(), gap);
    Ok(attr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_over_coalitions_to_one() {
        // Σ_s C(n−1, s) w(s) = 1 for every n
        for n in 1..=24usize {
            let w = shapley_weights(n);
            let mut binom = 1.0;
            let mut total = 0.0;
            for (s, ws) in w.iter().enumerate() {
                total += binom * ws;
                binom = binom * (n - 1 - s) as f64 / (s + 1) as f64;
            }
            assert!((total - 1.0).abs() < 1e-12, "n={n}: {total}");
        }
        let w = shapley_weights(3);
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-15 && (w[1] - 1.0 / 6.0).abs() < 1e-15);
    }
}
