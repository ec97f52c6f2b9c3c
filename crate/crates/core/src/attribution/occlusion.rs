use super::{Attribution, BaselineSpec, Coalition, EstimatorKind, Predictor};
use crate::nn::HeterogeneousInput;
use crate::Result;

/// `value_i = f(z) − f(z without i)`; `|F| + 1` evaluations.
pub fn occlusion<P: Predictor>(z: &HeterogeneousInput, model: &P, baseline: &BaselineSpec) -> Result<Attribution> {
    let n = model.num_points() + model.num_tabular();
    let eval = model.evaluator(z, baseline)?;
    let f_z = eval.logit(&Coalition::full(n))?;
    let mut c = Coalition::full(n);
    let values = (0..n)
        .map(|i| {
            c.remove(i);
            let v = eval.logit(&c).map(|without| f_z - without);
            c.insert(i);
            v
        })
        .collect::<Result<Vec<_>>>()?;
    // reference only, not part of the estimate
    let f_baseline = eval.logit(&Coalition::empty(n))?;
    Ok(Attribution {
        values,
        estimator: EstimatorKind::Occlusion,
        baseline: baseline.kind(),
        evaluations: n as u64 + 1,
        f_z,
        f_baseline,
        seed: None,
        variance_mode: None,
        diagnostics: Default::default(),
    })
}
