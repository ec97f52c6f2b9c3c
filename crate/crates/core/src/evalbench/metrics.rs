use serde::{Deserialize, Serialize};

use crate::{Error, Result};

fn check_lengths(est: &[f64], truth: &[f64], min: usize) -> Result<()> {
    if est.len() != truth.len() {
        return Err(Error::Metric(format!(
            "estimate has {} features, truth has {}",
            est.len(),
            truth.len()
        )));
    }
    if est.len() < min {
        return Err(Error::Metric(format!("metric needs at least {min} features")));
    }
    Ok(())
}

/// Mean squared difference over features.
pub fn mse(est: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(est, truth, 1)?;
    Ok(est.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / est.len() as f64)
}

/// 1-based ranks in ascending value order, ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &t in &idx[i..=j] {
            ranks[t] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation of the signed values. `None` when either ranking
/// has zero variance.
pub fn spearman(est: &[f64], truth: &[f64]) -> Result<Option<f64>> {
    check_lengths(est, truth, 2)?;
    let a = average_ranks(est);
    let b = average_ranks(truth);
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(&b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Ok(None);
    }
    Ok(Some((cov / (va * vb).sqrt()).clamp(-1.0, 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ndcg {
    pub value: f64,
    /// Set when every true value is zero and the score is 1 by convention.
    pub all_zero_truth: bool,
}

/// NDCG of the ranking by `|est|` (descending, lowest index on ties) with
/// gains `|truth|`.
pub fn ndcg(est: &[f64], truth: &[f64]) -> Result<Ndcg> {
    check_lengths(est, truth, 1)?;
    let gains: Vec<f64> = truth.iter().map(|t| t.abs()).collect();
    let dcg = |order: &[usize]| -> f64 {
        order
            .iter()
            .enumerate()
            .map(|(r, &i)| gains[i] / ((r + 2) as f64).log2())
            .sum()
    };
    let by_desc = |key: &[f64]| {
        let mut idx: Vec<usize> = (0..key.len()).collect();
        idx.sort_by(|&a, &b| key[b].total_cmp(&key[a]).then(a.cmp(&b)));
        idx
    };
    let ideal = dcg(&by_desc(&gains));
    if ideal == 0.0 {
        return Ok(Ndcg {
            value: 1.0,
            all_zero_truth: true,
        });
    }
    let abs_est: Vec<f64> = est.iter().map(|e| e.abs()).collect();
    let value = (dcg(&by_desc(&abs_est)) / ideal).clamp(0.0, 1.0);
    Ok(Ndcg {
        value,
        all_zero_truth: false,
    })
}

pub fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 { s[n / 2] } else { (s[n / 2 - 1] + s[n / 2]) / 2.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 2.5);
        let t = [0.3, -1.2, 4.0];
        let e: Vec<f64> = t.iter().map(|v| v + 0.1).collect();
        assert!((mse(&e, &t).unwrap() - 0.01).abs() < 1e-12);
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), Some(1.0));
        assert_eq!(spearman(&[3.0, 2.0, 1.0], &[1.0, 2.0, 3.0]).unwrap(), Some(-1.0));
        let s = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap().unwrap();
        assert!((s - 1.5 / 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]).unwrap(), None);
        assert!(spearman(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[5.0, 1.0, 5.0, 3.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg(&[3.0, 1.0], &[3.0, 1.0]).unwrap().value, 1.0);
        let reversed = ndcg(&[1.0, 3.0], &[3.0, 1.0]).unwrap().value;
        let expected = (1.0 + 3.0 / 3f64.log2()) / (3.0 + 1.0 / 3f64.log2());
        assert!((reversed - expected).abs() < 1e-12);
        assert!((reversed - 0.7967).abs() < 1e-4);
        assert_eq!(ndcg(&[-2.0], &[0.5]).unwrap().value, 1.0);
        let zero = ndcg(&[1.0, 2.0], &[0.0, 0.0]).unwrap();
        assert!(zero.all_zero_truth && zero.value == 1.0);
        // sign is irrelevant for the ranking
        assert_eq!(ndcg(&[-3.0, 1.0], &[3.0, -1.0]).unwrap().value, 1.0);
    }

    #[test]
    fn ndcg_breaks_ties_by_lowest_index() {
        // equal |est|: feature 0 is placed first
        let v = ndcg(&[1.0, 1.0], &[1.0, 2.0]).unwrap().value;
        let expected = (1.0 + 2.0 / 3f64.log2()) / (2.0 + 1.0 / 3f64.log2());
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn mean_and_median() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(mean(&[]), None);
    }
}
