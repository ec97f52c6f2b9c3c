mod common;

use common::{random_input, random_model};
use proptest::prelude::*;
use svehnn::attribution::BaselineSpec;
use svehnn::evalbench::{benchmark, convergence_curve, default_estimators, mse, ndcg, spearman, EstimatorSpec};
use svehnn::nn::HeterogeneousInput;

fn vec_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..24).prop_flat_map(|n| (prop::collection::vec(-5.0f64..5.0, n), prop::collection::vec(-5.0f64..5.0, n)))
}

fn permute<T: Copy>(v: &[T], perm: &[usize]) -> Vec<T> {
    perm.iter().map(|&i| v[i]).collect()
}

proptest! {
    #[test]
    fn metrics_stay_in_range((est, truth) in vec_strategy()) {
        prop_assert!(mse(&est, &truth).unwrap() >= 0.0);
        if let Some(r) = spearman(&est, &truth).unwrap() {
            prop_assert!((-1.0..=1.0).contains(&r));
        }
        let g = ndcg(&est, &truth).unwrap().value;
        prop_assert!((0.0..=1.0 + 1e-12).contains(&g), "{}", g);
    }

    #[test]
    fn metrics_ignore_joint_reordering((est, truth) in vec_strategy(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut perm: Vec<usize> = (0..est.len()).collect();
        perm.shuffle(&mut svehnn::rng::root(seed));
        let (pe, pt) = (permute(&est, &perm), permute(&truth, &perm));
        prop_assert!((mse(&est, &truth).unwrap() - mse(&pe, &pt).unwrap()).abs() <= 1e-12);
        match (spearman(&est, &truth).unwrap(), spearman(&pe, &pt).unwrap()) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-12),
            (a, b) => prop_assert_eq!(a, b),
        }
        prop_assert!((ndcg(&est, &truth).unwrap().value - ndcg(&pe, &pt).unwrap().value).abs() <= 1e-12);
    }

    #[test]
    fn perfect_estimates_score_perfectly(truth in prop::collection::vec(-5.0f64..5.0, 2..24)) {
        prop_assert_eq!(mse(&truth, &truth).unwrap(), 0.0);
        prop_assert!((ndcg(&truth, &truth).unwrap().value - 1.0).abs() <= 1e-12);
        if let Some(r) = spearman(&truth, &truth).unwrap() {
            prop_assert!((r - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn rank_correlation_ignores_monotone_maps(truth in prop::collection::vec(-5.0f64..5.0, 2..24)) {
        let est: Vec<f64> = truth.iter().map(|v| v.exp() * 3.0 + 1.0).collect();
        prop_assert_eq!(spearman(&est, &truth).unwrap(), spearman(&truth, &truth).unwrap());
    }
}

fn fixture() -> (svehnn::nn::WdpnModel, Vec<HeterogeneousInput>) {
    let model = random_model(6, 2, 61);
    let inputs = (0..6).map(|s| random_input(6, 2, 600 + s)).collect();
    (model, inputs)
}

#[test]
fn benchmark_scores_exact_against_itself_perfectly() {
    let (model, inputs) = fixture();
    let refs: Vec<(usize, &HeterogeneousInput)> = inputs.iter().enumerate().collect();
    let est = default_estimators(model.num_features());
    let run = benchmark(&refs, &model, &est, &BaselineSpec::zero(), 3, "fixture").unwrap();
    assert_eq!(run.reports.len(), 5);
    let exact = run.report("exact").unwrap();
    assert_eq!(exact.mse, 0.0);
    assert_eq!(exact.ne, (1 << 8) + 2);
    assert!((exact.ndcg - 1.0).abs() < 1e-12);
    assert_eq!(run.report("svehnn").unwrap().ne, 128);
    assert_eq!(run.report("sampling@16").unwrap().ne, 128);
    assert_eq!(run.truth_checksums.len(), 6);
    assert_eq!(run.examples, (0..6).collect::<Vec<_>>());
}

#[test]
fn benchmark_payload_is_repeatable() {
    let (model, inputs) = fixture();
    let refs: Vec<(usize, &HeterogeneousInput)> = inputs.iter().enumerate().collect();
    let est = default_estimators(model.num_features());
    let a = benchmark(&refs, &model, &est, &BaselineSpec::zero(), 9, "fixture").unwrap();
    let b = benchmark(&refs, &model, &est, &BaselineSpec::zero(), 9, "fixture").unwrap();
    assert_eq!(a.payload_json().unwrap(), b.payload_json().unwrap());
    assert_eq!(a.to_csv(), b.to_csv());
    assert!(!a.payload_json().unwrap().contains("\"timing\""));
    assert!(a.to_json().unwrap().contains("\"timing\""));
}

#[test]
fn sampling_converges_along_the_budget_curve() {
    let (model, inputs) = fixture();
    let refs: Vec<(usize, &HeterogeneousInput)> = inputs.iter().enumerate().collect();
    let curve = convergence_curve(
        EstimatorSpec::Sampling { m: 1 },
        &[4, 64, 1024],
        &refs,
        &model,
        &BaselineSpec::zero(),
        1,
    )
    .unwrap();
    assert!(curve[0].mse > curve[1].mse && curve[1].mse > curve[2].mse);
}

#[test]
fn estimator_labels_parse_back() {
    for spec in default_estimators(16) {
        assert_eq!(spec.label().parse::<EstimatorSpec>().unwrap(), spec);
    }
    assert!("nonsense".parse::<EstimatorSpec>().is_err());
}
