//! Forward trace and reverse-mode gradients of the WDPN logit and BCE loss.

use crate::datagen::LabeledExample;
use crate::nn::{sigmoid, HeterogeneousInput, WdpnModel};
use crate::{Error, Result};

/// `softplus(logit) − label·logit`, stable for large `|logit|`.
pub fn bce_loss(logit: f64, label: u8) -> f64 {
    let softplus = logit.max(0.0) + (-logit.abs()).exp().ln_1p();
    softplus - f64::from(label) * logit
}

/// Flat offsets of each parameter block, matching [`WdpnModel::parameters`].
#[derive(Debug, Clone)]
pub(crate) struct ParamLayout {
    /// `(W, b, Some((γ, β)))` offsets per point layer.
    layers: Vec<(usize, usize, Option<(usize, usize)>)>,
    fusion_w: usize,
    fusion_b: usize,
    pub total: usize,
}

impl ParamLayout {
    pub fn of(model: &WdpnModel) -> Self {
        let mut at = 0;
        let mut layers = Vec::new();
        for layer in model.point_mlp() {
            let w = at;
            at += layer.dense.weights().len();
            let b = at;
            at += layer.dense.bias().len();
            let bn = layer.batchnorm.as_ref().map(|bn| {
                let g = at;
                at += 2 * bn.channels();
                (g, g + bn.channels())
            });
            layers.push((w, b, bn));
        }
        let fusion_w = at;
        at += model.fusion().weights().len();
        Self {
            layers,
            fusion_w,
            fusion_b: at,
            total: at + 1,
        }
    }
}

/// Per-layer activations of one point.
struct PointTrace {
    /// Layer inputs; `inputs[i]` feeds layer `i`, the last entry is the descriptor.
    inputs: Vec<Vec<f64>>,
    /// Dense outputs before batch norm.
    pre: Vec<Vec<f64>>,
}

pub(crate) struct Trace {
    points: Vec<PointTrace>,
    latent: Vec<f64>,
    argmax: Vec<usize>,
    pub logit: f64,
}

impl Trace {
    /// Dense outputs before batch norm of layer `i` for every point.
    pub fn pre_activations(&self, i: usize) -> impl Iterator<Item = &[f64]> {
        self.points.iter().map(move |p| p.pre[i].as_slice())
    }
}

pub(crate) fn forward_trace(model: &WdpnModel, z: &HeterogeneousInput) -> Result<Trace> {
    model.check_input(z)?;
    let points: Vec<PointTrace> = z
        .cloud
        .points()
        .iter()
        .map(|p| {
            let mut inputs = vec![p.to_vec()];
            let mut pre = Vec::with_capacity(model.point_mlp().len());
            for layer in model.point_mlp() {
                let mut out = vec![0.0; layer.out_dim()];
                layer.dense.forward_into(inputs.last().expect("non-empty"), &mut out);
                pre.push(out.clone());
                if let Some(bn) = &layer.batchnorm {
                    for (c, v) in out.iter_mut().enumerate() {
                        let (a, b) = bn.affine(c);
                        *v = a * *v + b;
                    }
                }
                if layer.relu {
                    for v in out.iter_mut() {
                        *v = v.max(0.0);
                    }
                }
                inputs.push(out);
            }
            PointTrace { inputs, pre }
        })
        .collect();
    let latent_dim = if model.num_points() == 0 { 0 } else { model.latent_dim() };
    let mut latent = vec![f64::NEG_INFINITY; latent_dim];
    let mut argmax = vec![0; latent_dim];
    for (j, p) in points.iter().enumerate() {
        let desc = p.inputs.last().expect("non-empty");
        for c in 0..latent_dim {
            if j == 0 || desc[c] > latent[c] {
                latent[c] = desc[c];
                argmax[c] = j;
            }
        }
    }
    let logit = model.fuse(&latent, z.tabular.values());
    Ok(Trace {
        points,
        latent,
        argmax,
        logit,
    })
}

/// Loss and its gradient with respect to every parameter, laid out as
/// [`WdpnModel::parameters`]. Batch norm is differentiated as the affine map
/// defined by its stored statistics; max pooling routes each channel's
/// gradient to its argmax point (lowest index on ties).
pub fn backward(z: &HeterogeneousInput, label: u8, model: &WdpnModel) -> Result<(f64, Vec<f64>)> {
    if label > 1 {
        return Err(Error::Domain(format!("label must be 0 or 1, got {label}")));
    }
    let trace = forward_trace(model, z)?;
    let layout = ParamLayout::of(model);
    let mut grad = vec![0.0; layout.total];
    accumulate(model, z, label, &trace, &layout, &mut grad);
    Ok((bce_loss(trace.logit, label), grad))
}

pub(crate) fn accumulate(
    model: &WdpnModel,
    z: &HeterogeneousInput,
    label: u8,
    trace: &Trace,
    layout: &ParamLayout,
    grad: &mut [f64],
) {
    let dl = sigmoid(trace.logit) - f64::from(label);
    let latent_dim = trace.latent.len();
    for (c, &v) in trace.latent.iter().enumerate() {
        grad[layout.fusion_w + c] += dl * v;
    }
    for (t, &x) in z.tabular.values().iter().enumerate() {
        grad[layout.fusion_w + latent_dim + t] += dl * x;
    }
    grad[layout.fusion_b] += dl;

    // upstream gradient on each point's descriptor
    let mut upstream: Vec<Option<Vec<f64>>> = vec![None; trace.points.len()];
    for c in 0..latent_dim {
        let g = dl * model.latent_weight(c);
        let slot = upstream[trace.argmax[c]].get_or_insert_with(|| vec![0.0; latent_dim]);
        slot[c] += g;
    }
    for (pt, up) in trace.points.iter().zip(upstream) {
        let Some(mut g) = up else { continue };
        for (i, layer) in model.point_mlp().iter().enumerate().rev() {
            let out = &pt.inputs[i + 1];
            if layer.relu {
                for (gm, &o) in g.iter_mut().zip(out) {
                    if o <= 0.0 {
                        *gm = 0.0;
                    }
                }
            }
            let (w_off, b_off, bn_off) = layout.layers[i];
            if let (Some(bn), Some((g_off, beta_off))) = (&layer.batchnorm, bn_off) {
                for (c, gc) in g.iter_mut().enumerate() {
                    let inv = 1.0 / (bn.running_var[c] + bn.eps).sqrt();
                    grad[g_off + c] += *gc * (pt.pre[i][c] - bn.running_mean[c]) * inv;
                    grad[beta_off + c] += *gc;
                    *gc *= bn.affine(c).0;
                }
            }
            let input = &pt.inputs[i];
            let out_dim = layer.out_dim();
            for (m, &gm) in g.iter().enumerate() {
                grad[b_off + m] += gm;
            }
            let mut next = vec![0.0; input.len()];
            for (l, &xl) in input.iter().enumerate() {
                let row = layer.dense.row(l);
                let mut acc = 0.0;
                for m in 0..out_dim {
                    grad[w_off + l * out_dim + m] += xl * g[m];
                    acc += row[m] * g[m];
                }
                next[l] = acc;
            }
            g = next;
        }
    }
}

/// Mean loss and gradient over examples, summed in example order.
pub fn batch_gradient(model: &WdpnModel, batch: &[&LabeledExample]) -> Result<(f64, Vec<f64>)> {
    use rayon::prelude::*;
    let parts: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .map(|e| backward(&e.input, e.label, model))
        .collect::<Result<_>>()?;
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; ParamLayout::of(model).total];
    for (l, g) in parts {
        loss += l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{BatchNormParams, DenseLayerParams, PointLayer};

    #[test]
    fn bce_values() {
        assert!((bce_loss(0.0, 0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((bce_loss(0.0, 1) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce_loss(30.0, 1) < 1e-9);
        assert!((bce_loss(2.0, 0) - 2.126_928_011_042_972_5).abs() < 1e-12);
        assert!(bce_loss(-800.0, 1).is_finite());
    }

    fn small_model() -> WdpnModel {
        let l1 = PointLayer {
            dense: DenseLayerParams::new(3, 2, vec![0.5, -0.3, 0.2, 0.8, -0.7, 0.1], vec![0.05, -0.1]).unwrap(),
            batchnorm: Some(BatchNormParams {
                gamma: vec![1.2, 0.7],
                beta: vec![0.1, -0.2],
                running_mean: vec![0.3, -0.1],
                running_var: vec![0.5, 2.0],
                eps: 1e-5,
            }),
            relu: true,
        };
        let fusion = DenseLayerParams::new(3, 1, vec![0.9, -1.1, 0.4], vec![0.2]).unwrap();
        WdpnModel::new(2, 1, vec![l1], fusion).unwrap()
    }

    #[test]
    fn trace_logit_matches_forward_bitwise() {
        let m = small_model();
        let z = HeterogeneousInput::from_parts(vec![[0.3, -1.0, 2.0], [1.5, 0.2, -0.4]], vec![0.7]).unwrap();
        assert_eq!(forward_trace(&m, &z).unwrap().logit.to_bits(), m.logit(&z).unwrap().to_bits());
    }

    #[test]
    fn saturated_correct_prediction_has_no_gradient() {
        let mut m = small_model();
        m.fusion_mut().bias_mut()[0] = 60.0;
        let z = HeterogeneousInput::from_parts(vec![[0.3, -1.0, 2.0], [1.5, 0.2, -0.4]], vec![0.7]).unwrap();
        let (_, g) = backward(&z, 1, &m).unwrap();
        assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-8);
    }

    #[test]
    fn dead_unit_weights_get_no_gradient() {
        let mut m = small_model();
        // channel 1 pre-activation is always very negative
        m.point_mlp_mut()[0].dense.bias_mut()[1] = -100.0;
        let z = HeterogeneousInput::from_parts(vec![[0.3, -1.0, 2.0], [1.5, 0.2, -0.4]], vec![0.7]).unwrap();
        let (_, g) = backward(&z, 0, &m).unwrap();
        for l in 0..3 {
            assert_eq!(g[l * 2 + 1], 0.0);
        }
        assert_eq!(g[6 + 1], 0.0);
    }

    #[test]
    fn rejects_bad_label() {
        let m = small_model();
        let z = HeterogeneousInput::from_parts(vec![[0.0; 3]; 2], vec![0.0]).unwrap();
        assert!(backward(&z, 2, &m).is_err());
    }
}
