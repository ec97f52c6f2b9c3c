//! Estimator quality against the exact oracle.

mod metrics;

pub use metrics::{average_ranks, mean, median, mse, ndcg, spearman, Ndcg};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{
    exact_shapley, occlusion, shapley_sampling, svehnn_full, svehnn_mc, Attribution, BaselineSpec,
    ExplainerConfig, SizeDraw,
};
use crate::nn::{HeterogeneousInput, WdpnModel};
use crate::prob::VarianceMode;
use crate::{rng, Error, Result, TOOL_VERSION};

/// One row of a benchmark table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorSpec {
    Exact,
    Sampling { m: usize },
    Occlusion,
    SvehnnFull { variance_mode: VarianceMode },
    SvehnnMc { m: usize, variance_mode: VarianceMode, size_draw: SizeDraw },
}

impl EstimatorSpec {
    pub fn label(&self) -> String {
        self.to_string()
    }

    /// Runs the estimator; `seed` is used only by the Monte-Carlo ones.
    pub fn run(
        &self,
        z: &HeterogeneousInput,
        model: &WdpnModel,
        baseline: &BaselineSpec,
        seed: u64,
    ) -> Result<Attribution> {
        match *self {
            EstimatorSpec::Exact => exact_shapley(z, model, baseline),
            EstimatorSpec::Sampling { m } => shapley_sampling(z, model, baseline, &ExplainerConfig::new(m, seed)),
            EstimatorSpec::Occlusion => occlusion(z, model, baseline),
            EstimatorSpec::SvehnnFull { variance_mode } => svehnn_full(z, model, baseline, variance_mode),
            EstimatorSpec::SvehnnMc {
                m,
                variance_mode,
                size_draw,
            } => {
                let config = ExplainerConfig {
                    m,
                    seed,
                    variance_mode,
                    size_draw,
                };
                svehnn_mc(z, model, baseline, &config)
            }
        }
    }

    /// Same estimator with Monte-Carlo budget `m` (where applicable).
    pub fn with_budget(&self, m: usize) -> Self {
        match *self {
            EstimatorSpec::Sampling { .. } => EstimatorSpec::Sampling { m },
            EstimatorSpec::SvehnnMc {
                variance_mode,
                size_draw,
                ..
            } => EstimatorSpec::SvehnnMc {
                m,
                variance_mode,
                size_draw,
            },
            other => other,
        }
    }
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorSpec::Exact => write!(f, "exact"),
            EstimatorSpec::Sampling { m } => write!(f, "sampling@{m}"),
            EstimatorSpec::Occlusion => write!(f, "occlusion"),
            EstimatorSpec::SvehnnFull { variance_mode } => match variance_mode {
                VarianceMode::AsWritten => write!(f, "svehnn"),
                mode => write!(f, "svehnn[{mode}]"),
            },
            EstimatorSpec::SvehnnMc {
                m,
                variance_mode,
                size_draw,
            } => {
                write!(f, "svehnn_mc@{m}[{variance_mode}")?;
                if *size_draw == SizeDraw::Stratified {
                    write!(f, ",stratified")?;
                }
                write!(f, "]")
            }
        }
    }
}

/// Parses the labels produced by `Display`, e.g. `exact`, `sampling@2000`,
/// `svehnn`, `svehnn[bernoulli_point]`, `svehnn_mc@64[as_written,stratified]`.
impl FromStr for EstimatorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown estimator '{s}'"));
        let (head, opts) = match s.split_once('[') {
            Some((h, rest)) => (h, rest.strip_suffix(']').ok_or_else(bad)?.split(',').collect::<Vec<_>>()),
            None => (s, Vec::new()),
        };
        let (name, budget) = match head.split_once('@') {
            Some((n, m)) => (n, Some(m.parse::<usize>().map_err(|_| bad())?)),
            None => (head, None),
        };
        let mut variance_mode = VarianceMode::default();
        let mut size_draw = SizeDraw::default();
        for o in opts {
            match o {
                "stratified" => size_draw = SizeDraw::Stratified,
                "uniform" => size_draw = SizeDraw::Uniform,
                mode => variance_mode = mode.parse()?,
            }
        }
        Ok(match (name, budget) {
            ("exact", None) => EstimatorSpec::Exact,
            ("occlusion", None) => EstimatorSpec::Occlusion,
            ("sampling", Some(m)) => EstimatorSpec::Sampling { m },
            ("svehnn" | "svehnn_full", None) => EstimatorSpec::SvehnnFull { variance_mode },
            ("svehnn_mc", Some(m)) => EstimatorSpec::SvehnnMc {
                m,
                variance_mode,
                size_draw,
            },
            _ => return Err(bad()),
        })
    }
}

/// The five rows of the reference comparison on a `|F|`-feature problem:
/// exact, converged sampling, budget-matched sampling, occlusion, svehnn.
pub fn default_estimators(features: usize) -> Vec<EstimatorSpec> {
    let matched = (2 * features * features).div_ceil(features.max(1));
    vec![
        EstimatorSpec::Exact,
        EstimatorSpec::Sampling { m: 2000 },
        EstimatorSpec::Sampling { m: matched },
        EstimatorSpec::Occlusion,
        EstimatorSpec::SvehnnFull {
            variance_mode: VarianceMode::AsWritten,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleMetrics {
    pub example: usize,
    pub mse: f64,
    pub src: Option<f64>,
    pub ndcg: f64,
    pub ndcg_all_zero_truth: bool,
    pub evaluations: u64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub estimator: String,
    pub spec: EstimatorSpec,
    /// Network evaluations per example (identical across examples).
    pub ne: u64,
    pub mse: f64,
    pub src: Option<f64>,
    pub ndcg: f64,
    pub mse_median: f64,
    pub src_median: Option<f64>,
    pub ndcg_median: f64,
    /// Examples whose rank correlation was undefined and left out of `src`.
    pub src_excluded: usize,
    pub ndcg_flagged: usize,
    pub per_example: Vec<ExampleMetrics>,
}

impl MetricReport {
    fn aggregate(spec: EstimatorSpec, per_example: Vec<ExampleMetrics>) -> Result<Self> {
        let ne = per_example.first().map_or(0, |e| e.evaluations);
        if per_example.iter().any(|e| e.evaluations != ne) {
            return Err(Error::Metric(format!("{spec}: evaluation count differs across examples")));
        }
        let mses: Vec<f64> = per_example.iter().map(|e| e.mse).collect();
        let srcs: Vec<f64> = per_example.iter().filter_map(|e| e.src).collect();
        let ndcgs: Vec<f64> = per_example.iter().map(|e| e.ndcg).collect();
        Ok(Self {
            estimator: spec.label(),
            spec,
            ne,
            mse: mean(&mses).unwrap_or(f64::NAN),
            src: mean(&srcs),
            ndcg: mean(&ndcgs).unwrap_or(f64::NAN),
            mse_median: median(&mses).unwrap_or(f64::NAN),
            src_median: median(&srcs),
            ndcg_median: median(&ndcgs).unwrap_or(f64::NAN),
            src_excluded: per_example.len() - srcs.len(),
            ndcg_flagged: per_example.iter().filter(|e| e.ndcg_all_zero_truth).count(),
            per_example,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRun {
    pub tool_version: String,
    pub dataset_id: String,
    pub model_checksum: String,
    pub baseline: String,
    pub seed: u64,
    /// Dataset indices of the benchmarked examples.
    pub examples: Vec<usize>,
    /// Checksum of the exact attribution each row was compared against.
    pub truth_checksums: Vec<String>,
    /// Rank correlation is computed on signed values.
    pub src_signed: bool,
    pub reports: Vec<MetricReport>,
    /// Wall-clock seconds per estimator, summed over examples. The only
    /// field that varies between identical runs.
    pub timing: BTreeMap<String, f64>,
}

impl BenchmarkRun {
    pub fn report(&self, label: &str) -> Option<&MetricReport> {
        self.reports.iter().find(|r| r.estimator == label)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// JSON without the `timing` field.
    pub fn payload_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("timing");
        }
        Ok(serde_json::to_string_pretty(&v)?)
    }

    /// Rows = estimators; columns = mean MSE/SRC/NDCG and NE, then medians.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        let mut out = String::from("estimator,mse,src,ndcg,ne,mse_median,src_median,ndcg_median,src_excluded\n");
        for r in &self.reports {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.estimator,
                r.mse,
                opt(r.src),
                r.ndcg,
                r.ne,
                r.mse_median,
                opt(r.src_median),
                r.ndcg_median,
                r.src_excluded
            ));
        }
        out
    }
}

/// Seed of the Monte-Carlo estimators on example `index`.
pub fn example_seed(seed: u64, index: usize) -> u64 {
    rng::mix(seed, index as u64)
}

/// Exact ground truth once per example, then every estimator on the same
/// examples. Examples run in parallel; results are gathered in input order.
pub fn benchmark(
    inputs: &[(usize, &HeterogeneousInput)],
    model: &WdpnModel,
    estimators: &[EstimatorSpec],
    baseline: &BaselineSpec,
    seed: u64,
    dataset_id: &str,
) -> Result<BenchmarkRun> {
    if inputs.is_empty() {
        return Err(Error::Config("benchmark needs at least one example".into()));
    }
    type ExampleResult = (Attribution, Vec<(Attribution, f64)>);
    let per_example: Vec<ExampleResult> = inputs
        .par_iter()
        .map(|&(index, z)| {
            let truth = exact_shapley(z, model, baseline)
                .map_err(|e| Error::Metric(format!("exact oracle on example {index}: {e}")))?;
            let rows = estimators
                .iter()
                .map(|spec| {
                    let start = Instant::now();
                    let a = spec
                        .run(z, model, baseline, example_seed(seed, index))
                        .map_err(|e| Error::Metric(format!("{spec} on example {index}: {e}")))?;
                    Ok((a, start.elapsed().as_secs_f64()))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((truth, rows))
        })
        .collect::<Result<_>>()?;

    let truth_checksums: Vec<String> = per_example.iter().map(|(t, _)| t.checksum()).collect();
    let mut reports = Vec::with_capacity(estimators.len());
    let mut timing = BTreeMap::new();
    for (s, spec) in estimators.iter().enumerate() {
        let mut rows = Vec::with_capacity(inputs.len());
        let mut seconds = 0.0;
        for (e, (truth, est)) in per_example.iter().enumerate() {
            if truth.checksum() != truth_checksums[e] {
                return Err(Error::Metric("ground truth changed during the run".into()));
            }
            let (a, t) = &est[s];
            seconds += t;
            let nd = ndcg(&a.values, &truth.values)?;
            rows.push(ExampleMetrics {
                example: inputs[e].0,
                mse: mse(&a.values, &truth.values)?,
                src: spearman(&a.values, &truth.values)?,
                ndcg: nd.value,
                ndcg_all_zero_truth: nd.all_zero_truth,
                evaluations: a.evaluations,
                values: a.values.clone(),
            });
        }
        let report = MetricReport::aggregate(*spec, rows)?;
        timing.insert(report.estimator.clone(), seconds);
        reports.push(report);
    }
    Ok(BenchmarkRun {
        tool_version: TOOL_VERSION.to_string(),
        dataset_id: dataset_id.to_string(),
        model_checksum: model.checksum(),
        baseline: baseline.kind().as_str().to_string(),
        seed,
        examples: inputs.iter().map(|&(i, _)| i).collect(),
        truth_checksums,
        src_signed: true,
        reports,
        timing,
    })
}

/// Metrics of one Monte-Carlo estimator at ascending budgets, all compared
/// against the same exact values.
pub fn convergence_curve(
    estimator: EstimatorSpec,
    budgets: &[usize],
    inputs: &[(usize, &HeterogeneousInput)],
    model: &WdpnModel,
    baseline: &BaselineSpec,
    seed: u64,
) -> Result<Vec<MetricReport>> {
    if budgets.is_empty() || budgets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("budgets must be non-empty and strictly ascending".into()));
    }
    let specs: Vec<EstimatorSpec> = budgets.iter().map(|&m| estimator.with_budget(m)).collect();
    Ok(benchmark(inputs, model, &specs, baseline, seed, "convergence")?.reports)
}
