use super::{Gaussian, GaussianVector};
use crate::nn::{BatchNormParams, DenseLayerParams};
use crate::{Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density φ.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function Φ, via `erfc`.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `mean' = Wᵀμ + b`, `var'_m = Σ_l W_lm² σ_l²`.
pub fn prob_linear(g: &GaussianVector, params: &DenseLayerParams) -> Result<GaussianVector> {
    if g.len() != params.in_dim() {
        return Err(Error::Shape(format!(
            "probabilistic linear layer expects {} inputs, got {}",
            params.in_dim(),
            g.len()
        )));
    }
    let mut mean = params.bias().to_vec();
    let mut var = vec![0.0; params.out_dim()];
    for l in 0..params.in_dim() {
        let (mu, s2) = (g.mean[l], g.var[l]);
        let row = params.row(l);
        for m in 0..row.len() {
            mean[m] += mu * row[m];
            var[m] += row[m] * row[m] * s2;
        }
    }
    Ok(GaussianVector { mean, var })
}

/// Moments of `max(0, X)` for `X ~ N(μ, σ²)`.
#[inline]
pub fn relu_moments(g: Gaussian) -> Gaussian {
    if g.var <= 0.0 {
        return Gaussian::point(g.mean.max(0.0));
    }
    let s = g.var.sqrt();
    let a = g.mean / s;
    let cdf = normal_cdf(a);
    let pdf = normal_pdf(a);
    let mean = g.mean * cdf + s * pdf;
    let second = (g.mean * g.mean + g.var) * cdf + g.mean * s * pdf;
    Gaussian::new(mean, (second - mean * mean).max(0.0))
}

pub fn prob_relu(g: &GaussianVector) -> GaussianVector {
    let (mean, var) = (0..g.len()).map(|i| relu_moments(g.get(i))).map(|r| (r.mean, r.var)).unzip();
    GaussianVector { mean, var }
}

/// Frozen batch norm is affine, so `mean' = aμ + c`, `var' = a²σ²`.
pub fn prob_batchnorm(g: &GaussianVector, params: &BatchNormParams) -> Result<GaussianVector> {
    if g.len() != params.channels() {
        return Err(Error::Shape(format!(
            "batch norm has {} channels, input has {}",
            params.channels(),
            g.len()
        )));
    }
    let mut out = g.clone();
    for c in 0..g.len() {
        let (a, shift) = params.affine(c);
        out.mean[c] = a * g.mean[c] + shift;
        out.var[c] = a * a * g.var[c];
    }
    Ok(out)
}

/// Clark's moment matching for `max(A, B)` with independent Gaussians.
#[inline]
pub fn prob_max_pair(a: Gaussian, b: Gaussian) -> Gaussian {
    let theta2 = a.var + b.var;
    if theta2 <= 0.0 {
        return Gaussian::point(a.mean.max(b.mean));
    }
    let theta = theta2.sqrt();
    // max(a, b) = max(a − c, b − c) + c with c = μ_b
    let shift = b.mean;
    let (ma, mb) = (a.mean - shift, 0.0);
    let d = ma / theta;
    let (cdf, cdf_neg, pdf) = (normal_cdf(d), normal_cdf(-d), normal_pdf(d));
    let mean = ma * cdf + mb * cdf_neg + theta * pdf;
    let second = (ma * ma + a.var) * cdf + (mb * mb + b.var) * cdf_neg + (ma + mb) * theta * pdf;
    Gaussian::new(mean + shift, (second - mean * mean).max(0.0))
}

/// Channelwise max over points, folded left to right by point index.
pub fn prob_maxpool(per_point: &[GaussianVector]) -> Result<GaussianVector> {
    let (first, rest) = per_point
        .split_first()
        .ok_or_else(|| Error::Domain("max pooling over zero points".into()))?;
    let mut acc = first.clone();
    for g in rest {
        if g.len() != acc.len() {
            return Err(Error::Shape("points carry different channel counts".into()));
        }
        for c in 0..acc.len() {
            let r = prob_max_pair(acc.get(c), g.get(c));
            acc.mean[c] = r.mean;
            acc.var[c] = r.var;
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cdf_and_pdf_reference_values() {
        assert_abs_diff_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(normal_cdf(1.959_963_984_540_054), 0.975, epsilon = 1e-12);
        assert_abs_diff_eq!(normal_cdf(-3.0), 0.001_349_898_031_630_094_6, epsilon = 1e-15);
        assert_abs_diff_eq!(normal_pdf(0.0), FRAC_1_SQRT_2PI, epsilon = 1e-16);
    }

    #[test]
    fn relu_standard_normal() {
        // E[max(0,X)] = 1/√(2π); E[max(0,X)²] = 1/2
        let r = relu_moments(Gaussian::new(0.0, 1.0));
        assert_abs_diff_eq!(r.mean, 0.398_942_280_401_432_7, epsilon = 1e-12);
        assert_abs_diff_eq!(r.var, 0.5 - 1.0 / (2.0 * std::f64::consts::PI), epsilon = 1e-12);
        assert_abs_diff_eq!(r.var, 0.34085, epsilon = 1e-5);
    }

    #[test]
    fn relu_saturated_regimes() {
        let pos = relu_moments(Gaussian::new(10.0, 1e-4));
        assert_abs_diff_eq!(pos.mean, 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pos.var, 1e-4, epsilon = 1e-10);
        let neg = relu_moments(Gaussian::new(-10.0, 1e-4));
        assert_abs_diff_eq!(neg.mean, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(neg.var, 0.0, epsilon = 1e-12);
        assert_eq!(relu_moments(Gaussian::point(-2.0)), Gaussian::point(0.0));
        assert_eq!(relu_moments(Gaussian::point(2.5)), Gaussian::point(2.5));
    }

    #[test]
    fn max_of_two_standard_normals() {
        let r = prob_max_pair(Gaussian::new(0.0, 1.0), Gaussian::new(0.0, 1.0));
        assert_abs_diff_eq!(r.mean, 1.0 / std::f64::consts::PI.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.var, 1.0 - 1.0 / std::f64::consts::PI, epsilon = 1e-12);
    }

    #[test]
    fn max_degenerate_cases() {
        let eps = 1e-6;
        let r = prob_max_pair(Gaussian::new(5.0, eps), Gaussian::new(0.0, eps));
        assert_abs_diff_eq!(r.mean, 5.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.var, eps, epsilon = 1e-9);
        assert_eq!(prob_max_pair(Gaussian::point(1.5), Gaussian::point(1.5)), Gaussian::point(1.5));
        assert_eq!(prob_max_pair(Gaussian::point(-1.0), Gaussian::point(2.0)), Gaussian::point(2.0));
    }

    #[test]
    fn max_is_symmetric() {
        let a = Gaussian::new(0.3, 0.7);
        let b = Gaussian::new(-0.2, 1.9);
        let ab = prob_max_pair(a, b);
        let ba = prob_max_pair(b, a);
        assert_abs_diff_eq!(ab.mean, ba.mean, epsilon = 1e-12);
        assert_abs_diff_eq!(ab.var, ba.var, epsilon = 1e-12);
    }

    #[test]
    fn linear_cases() {
        let w = DenseLayerParams::from_rows(&[vec![2.0], vec![3.0]], vec![0.0]).unwrap();
        let g = GaussianVector::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(prob_linear(&g, &w).unwrap().var, vec![13.0]);

        let id = DenseLayerParams::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]).unwrap();
        let g = GaussianVector::new(vec![0.4, -1.2], vec![0.3, 2.0]).unwrap();
        assert_eq!(prob_linear(&g, &id).unwrap(), g);

        let p = DenseLayerParams::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]], vec![0.5, -0.5]).unwrap();
        let det = GaussianVector::deterministic(vec![1.0, 1.0]);
        let out = prob_linear(&det, &p).unwrap();
        assert_eq!(out.mean, p.forward(&[1.0, 1.0]).unwrap());
        assert_eq!(out.var, vec![0.0, 0.0]);
        assert!(prob_linear(&GaussianVector::deterministic(vec![1.0]), &p).is_err());
    }

    #[test]
    fn batchnorm_scaling_law() {
        let g = GaussianVector::new(vec![1.0, -0.5], vec![0.5, 2.0]).unwrap();
        let id = BatchNormParams {
            eps: 0.0,
            ..BatchNormParams::identity(2)
        };
        assert_eq!(prob_batchnorm(&g, &id).unwrap(), g);
        let double = BatchNormParams {
            gamma: vec![2.0, 2.0],
            ..id
        };
        let out = prob_batchnorm(&g, &double).unwrap();
        assert_eq!(out.mean, vec![2.0, -1.0]);
        assert_eq!(out.var, vec![2.0, 8.0]);
    }

    #[test]
    fn maxpool_edge_cases() {
        assert!(prob_maxpool(&[]).is_err());
        let one = GaussianVector::new(vec![0.1, 0.2], vec![0.3, 0.4]).unwrap();
        assert_eq!(prob_maxpool(std::slice::from_ref(&one)).unwrap(), one);
        let pts = vec![
            GaussianVector::deterministic(vec![1.0, -3.0]),
            GaussianVector::deterministic(vec![0.5, 2.0]),
            GaussianVector::deterministic(vec![-1.0, 0.0]),
        ];
        let out = prob_maxpool(&pts).unwrap();
        assert_eq!(out.mean, vec![1.0, 2.0]);
        assert_eq!(out.var, vec![0.0, 0.0]);
    }
}
