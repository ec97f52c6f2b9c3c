use super::{masked_input, BaselineSpec, Coalition};
use crate::nn::{EvalCounter, HeterogeneousInput, WdpnModel};
use crate::Result;

/// A black-box scalar model over `(K points, D tabular)` inputs. Explainers
/// only ever see this interface.
pub trait Predictor: Sync {
    fn num_points(&self) -> usize;

    fn num_tabular(&self) -> usize;

    /// Pre-sigmoid output.
    fn logit(&self, z: &HeterogeneousInput) -> Result<f64>;

    /// Evaluator for `f(masked_input(z, S))` over many coalitions of one
    /// `(z, baseline)` pair. Implementations may cache per-feature work but
    /// must return exactly what [`Predictor::logit`] returns on the masked
    /// input.
    fn evaluator<'a>(
        &'a self,
        z: &'a HeterogeneousInput,
        baseline: &'a BaselineSpec,
    ) -> Result<Box<dyn CoalitionEvaluator + 'a>>
    where
        Self: Sized,
    {
        Ok(Box::new(GenericEvaluator::new(self, z, baseline)?))
    }
}

/// Uncounted `S ↦ f(masked_input(z, S))`.
pub trait CoalitionEvaluator: Sync {
    fn logit(&self, s: &Coalition) -> Result<f64>;
}

/// Builds the masked input and calls the model.
pub struct GenericEvaluator<'a, P: Predictor> {
    model: &'a P,
    z: &'a HeterogeneousInput,
    baseline: &'a BaselineSpec,
}

impl<'a, P: Predictor> GenericEvaluator<'a, P> {
    pub fn new(model: &'a P, z: &'a HeterogeneousInput, baseline: &'a BaselineSpec) -> Result<Self> {
        baseline.validate(z.num_points())?;
        Ok(Self { model, z, baseline })
    }
}

impl<P: Predictor> CoalitionEvaluator for GenericEvaluator<'_, P> {
    fn logit(&self, s: &Coalition) -> Result<f64> {
        self.model.logit(&masked_input(self.z, s, self.baseline)?)
    }
}

/// Caches per-point descriptors of the original and baseline points, so a
/// coalition costs one max-pool and one fusion.
struct WdpnEvaluator<'a> {
    model: &'a WdpnModel,
    original: Vec<Vec<f64>>,
    replaced: Vec<Vec<f64>>,
    tabular: &'a [f64],
}

impl CoalitionEvaluator for WdpnEvaluator<'_> {
    fn logit(&self, s: &Coalition) -> Result<f64> {
        let k = self.original.len();
        let latent = if k == 0 {
            Vec::new()
        } else {
            let chosen = (0..k).map(|j| {
                if s.contains(j) {
                    self.original[j].as_slice()
                } else {
                    self.replaced[j].as_slice()
                }
            });
            WdpnModel::pool(chosen, self.model.latent_dim())
        };
        let tab: Vec<f64> = self
            .tabular
            .iter()
            .enumerate()
            .map(|(t, &v)| if s.contains(k + t) { v } else { 0.0 })
            .collect();
        Ok(self.model.fuse(&latent, &tab))
    }
}

impl Predictor for WdpnModel {
    fn num_points(&self) -> usize {
        WdpnModel::num_points(self)
    }

    fn num_tabular(&self) -> usize {
        WdpnModel::num_tabular(self)
    }

    fn logit(&self, z: &HeterogeneousInput) -> Result<f64> {
        WdpnModel::logit(self, z)
    }

    fn evaluator<'a>(
        &'a self,
        z: &'a HeterogeneousInput,
        baseline: &'a BaselineSpec,
    ) -> Result<Box<dyn CoalitionEvaluator + 'a>> {
        self.check_input(z)?;
        baseline.validate(z.num_points())?;
        let pts = z.cloud.points();
        let original = pts.iter().map(|p| self.point_descriptor(p)).collect();
        let replaced = (0..pts.len()).map(|j| self.point_descriptor(&baseline.point(j))).collect();
        Ok(Box::new(WdpnEvaluator {
            model: self,
            original,
            replaced,
            tabular: z.tabular.values(),
        }))
    }
}

/// `g(S) = f(masked_input(z, S)) − f(z^bl)`; two counted passes.
pub fn coalition_value<P: Predictor>(
    s: &Coalition,
    z: &HeterogeneousInput,
    model: &P,
    baseline: &BaselineSpec,
    counter: &EvalCounter,
) -> Result<f64> {
    let with = model.logit(&masked_input(z, s, baseline)?)?;
    let without = model.logit(&baseline.baseline_input(z)?)?;
    counter.add(2);
    Ok(with - without)
}
