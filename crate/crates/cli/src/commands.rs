use std::fs;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context, Result};
use serde_json::json;
use svehnn::attribution::{
    exact_shapley, hull_template, occlusion, shapley_sampling, svehnn_full, svehnn_mc, AttributionReport,
    BaselineKind, BaselineSpec, ExplainerConfig,
};
use svehnn::datagen::{generate_hetero, generate_xi, read_dataset, write_dataset, Dataset};
use svehnn::evalbench::{benchmark, default_estimators, EstimatorSpec};
use svehnn::nn::{HeterogeneousInput, WdpnModel};
use svehnn::prob::VarianceMode;
use svehnn::training::{train, ArchConfig, Optimizer, TrainConfig};
use svehnn::verify::{run_verification, VerifyConfig, LAYER_CHECKS};
use svehnn::TOOL_VERSION;

use crate::{
    BenchmarkArgs, Cli, Command, EstimatorArg, ExplainArgs, GenDataArgs, OptimizerArg, Task, TrainArgs, VerifyArgs,
};

/// Argument problems detected after parsing.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
        if let Some(err) = cause.downcast_ref::<svehnn::Error>() {
            use svehnn::Error::*;
            return match err {
                TooManyFeatures { .. } => 3,
                Io(_) | Parse { .. } | Integrity(_) | Json(_) | Config(_) | Shape(_) | Baseline(_)
                | InvalidFeature { .. } | InvalidSpec(_) | InvalidModel(_) => 2,
                Domain(_) | Diverged { .. } | Metric(_) => 1,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    1
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Explain(a) => explain(a),
        Command::VerifyProb(a) => verify(a),
        Command::Benchmark(a) => bench(a),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut body = text.to_string();
    if !body.ends_with('\n') {
        body.push('\n');
    }
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    read_dataset(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn load_model(path: &Path) -> Result<WdpnModel> {
    let text = fs::read_to_string(path)
        .map_err(svehnn::Error::from)
        .with_context(|| format!("reading model {}", path.display()))?;
    WdpnModel::from_json(&text).with_context(|| format!("parsing model {}", path.display()))
}

fn gen_data(a: GenDataArgs) -> Result<ExitCode> {
    let ds = match a.task {
        Task::Xi => generate_xi(a.n, a.seed, a.jitter)?,
        Task::Hetero => {
            let informative = a.informative.unwrap_or(a.d / 2);
            generate_hetero(a.n, a.k, a.d, informative, a.seed)?
        }
    };
    write_dataset(&ds, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("{}", serde_json::to_string(&ds.manifest)?);
    Ok(ExitCode::SUCCESS)
}

fn train_cmd(a: TrainArgs) -> Result<ExitCode> {
    let ds = load_dataset(&a.data)?;
    let arch = ArchConfig {
        hidden: a.hidden.clone(),
        batchnorm: !a.no_batchnorm,
    };
    let config = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        optimizer: match a.optimizer {
            OptimizerArg::Adam => Optimizer::adam(),
            OptimizerArg::Sgd => Optimizer::Sgd,
        },
        seed: a.seed,
        init_scale: a.init_scale,
        holdout: a.holdout,
        bn_momentum: TrainConfig::new(a.seed).bn_momentum,
    };
    let (model, report) = train(&ds, &arch, &config)?;
    write_text(&a.out, &model.to_json()?)?;
    let report_path = a.report.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".report.json");
        p.into()
    });
    write_text(&report_path, &serde_json::to_string_pretty(&report)?)?;
    println!(
        "trained {} epochs: final loss {:.6}, train balanced accuracy {:.4}, holdout balanced accuracy {}",
        report.epoch_losses.len(),
        report.epoch_losses.last().copied().unwrap_or(f64::NAN),
        report.train_balanced_accuracy,
        report
            .holdout_balanced_accuracy
            .map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
    );
    println!("model checksum {}", report.model_checksum);
    Ok(ExitCode::SUCCESS)
}

fn hull_baseline(source: Option<&Path>) -> Result<(BaselineSpec, serde_json::Value)> {
    let path = source.ok_or_else(|| usage("--baseline hull needs --data or --hull-data"))?;
    let ds = load_dataset(path)?;
    let tpl = hull_template(&ds.clouds())?;
    if tpl.degenerate {
        eprintln!("warning: pooled points are degenerate; using the bounding-box surface as the hull");
    }
    let info = json!({
        "source": path.display().to_string(),
        "degenerate": tpl.degenerate,
        "diagnostics": tpl.diagnostics,
    });
    Ok((BaselineSpec::hull(tpl.template), info))
}

fn explain(a: ExplainArgs) -> Result<ExitCode> {
    let model = load_model(&a.model)?;
    let dataset = a.data.as_deref().map(load_dataset).transpose()?;
    let (z, names): (HeterogeneousInput, Option<Vec<String>>) = match (&a.input, &dataset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .map_err(svehnn::Error::from)
                .with_context(|| format!("reading input {}", path.display()))?;
            let z = serde_json::from_str(&text)
                .map_err(svehnn::Error::from)
                .with_context(|| format!("parsing input {}", path.display()))?;
            (z, None)
        }
        (None, Some(ds)) => {
            let e = ds.examples.get(a.index).ok_or_else(|| {
                usage(format!("--index {} is out of range for {} examples", a.index, ds.len()))
            })?;
            let names = (!ds.manifest.column_names.is_empty()).then(|| ds.manifest.column_names.clone());
            (e.input.clone(), names)
        }
        (None, None) => return Err(usage("explain needs --data with --index, or --input")),
    };
    let (baseline, hull_info) = match BaselineKind::from(a.baseline) {
        BaselineKind::Zero => (BaselineSpec::zero(), serde_json::Value::Null),
        BaselineKind::Hull => hull_baseline(a.hull_data.as_deref().or(a.data.as_deref()))?,
    };
    let mode = VarianceMode::from(a.variance_mode);
    let config = ExplainerConfig {
        m: a.m,
        seed: a.seed,
        variance_mode: mode,
        size_draw: a.size_draw.into(),
    };
    let attribution = match a.estimator {
        EstimatorArg::Exact => exact_shapley(&z, &model, &baseline)?,
        EstimatorArg::Sampling => shapley_sampling(&z, &model, &baseline, &config)?,
        EstimatorArg::Occlusion => occlusion(&z, &model, &baseline)?,
        EstimatorArg::Svehnn => svehnn_full(&z, &model, &baseline, mode)?,
        EstimatorArg::SvehnnMc => svehnn_mc(&z, &model, &baseline, &config)?,
    };
    let echo = json!({
        "model": a.model.display().to_string(),
        "data": a.data.as_ref().map(|p| p.display().to_string()),
        "index": a.input.is_none().then_some(a.index),
        "input": a.input.as_ref().map(|p| p.display().to_string()),
        "estimator": format!("{:?}", a.estimator).to_lowercase(),
        "m": a.m,
        "seed": a.seed,
        "baseline": BaselineKind::from(a.baseline).as_str(),
        "hull": hull_info,
        "variance_mode": mode.as_str(),
        "size_draw": config.size_draw,
    });
    let mut report = AttributionReport::new(&attribution, &z, &model, echo, names.as_deref())?;
    report.seed = Some(a.seed);
    write_text(&a.out, &report.to_json()?)?;
    println!(
        "{} with {} baseline: {} evaluations, f(z) = {:.6}, f(z_bl) = {:.6}, sum = {:.6}",
        report.estimator, report.baseline, report.evaluations, report.f_z, report.f_baseline, report.attribution_sum
    );
    Ok(ExitCode::SUCCESS)
}

fn verify(a: VerifyArgs) -> Result<ExitCode> {
    let mut cfg = VerifyConfig::new(a.seed);
    cfg.samples = a.samples;
    cfg.subset_samples = a.subset_samples;
    cfg.configs = a.configs;
    cfg.sabotage = a.sabotage.as_deref().map(str::parse).transpose()?;
    if cfg.samples < 2 || cfg.subset_samples < 2 || cfg.configs == 0 {
        return Err(usage("sample counts must be at least 2 and configs at least 1"));
    }
    let report = run_verification(&cfg)?;
    for layer in LAYER_CHECKS {
        let checks: Vec<_> = report.layer_checks.iter().filter(|c| c.check == layer).collect();
        let failed = checks.iter().filter(|c| !c.pass).count();
        let worst = checks.iter().map(|c| c.z_score).fold(0.0, f64::max);
        println!(
            "{} {layer}: {}/{} moments within {} SE (worst {worst:.2} SE)",
            if failed == 0 { "PASS" } else { "FAIL" },
            checks.len() - failed,
            checks.len(),
            cfg.tolerance_se
        );
    }
    for mode in VarianceMode::ALL {
        let checks: Vec<_> = report.subset_checks.iter().filter(|s| s.variance_mode == mode).collect();
        let failed = checks.iter().filter(|s| !s.check.pass).count();
        let worst = checks.iter().map(|s| s.check.z_score).fold(0.0, f64::max);
        println!(
            "{} prob_forward_expectation [{mode}]: {}/{} subset sizes within {} SE (worst {worst:.2} SE)",
            if failed == 0 { "PASS" } else { "FAIL" },
            checks.len() - failed,
            checks.len(),
            cfg.tolerance_se
        );
    }
    for (mode, n) in &report.clamp_counts {
        println!("clamped variances [{mode}]: {n}");
    }
    let gap = report.relu_toy_gap.iter().map(|s| s.check.z_score).fold(0.0, f64::max);
    println!("relu toy approximation gap (informational): worst {gap:.2} SE");
    println!(
        "max-pool fold order: max mean gap {:.3e}, max variance gap {:.3e} over {} trials",
        report.fold_order.max_mean_gap, report.fold_order.max_var_gap, report.fold_order.trials
    );
    if let Some(out) = &a.out {
        write_text(out, &serde_json::to_string_pretty(&report)?)?;
    }
    if report.pass {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("{} check(s) exceeded tolerance", report.failures);
        Ok(ExitCode::from(1))
    }
}

/// Splits on commas outside brackets.
fn split_labels(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, c) in s.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => depth -= 1,
            ',' if depth == 0 => {
                out.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(s[start..].trim());
    out.retain(|l| !l.is_empty());
    out
}

fn bench(a: BenchmarkArgs) -> Result<ExitCode> {
    let model = load_model(&a.model)?;
    let ds = load_dataset(&a.data)?;
    let end = a.offset.checked_add(a.examples).filter(|&e| e <= ds.len() && a.examples > 0);
    let Some(end) = end else {
        return Err(usage(format!(
            "examples {}..{} are not inside the dataset of {}",
            a.offset,
            a.offset.saturating_add(a.examples),
            ds.len()
        )));
    };
    let mut estimators = if a.estimators.is_empty() {
        default_estimators(model.num_features())
    } else {
        a.estimators
            .iter()
            .flat_map(|s| split_labels(s))
            .map(|s| s.parse::<EstimatorSpec>())
            .collect::<svehnn::Result<Vec<_>>>()?
    };
    if a.both_variance_modes {
        estimators.push(EstimatorSpec::SvehnnFull {
            variance_mode: VarianceMode::BernoulliPoint,
        });
    }
    if estimators.is_empty() {
        return Err(usage("no estimators to run"));
    }
    let (baseline, _) = match BaselineKind::from(a.baseline) {
        BaselineKind::Zero => (BaselineSpec::zero(), serde_json::Value::Null),
        BaselineKind::Hull => hull_baseline(Some(&a.data))?,
    };
    let inputs: Vec<(usize, &HeterogeneousInput)> = (a.offset..end).map(|i| (i, &ds.examples[i].input)).collect();
    let m = &ds.manifest;
    let dataset_id = format!("{}:seed={}:n={}", m.generator, m.seed, m.n_examples);
    let run = benchmark(&inputs, &model, &estimators, &baseline, a.seed, &dataset_id)?;
    let header = format!(
        "# {TOOL_VERSION}\n# dataset {dataset_id} examples {}..{end} baseline {} seed {} model {}\n",
        a.offset,
        baseline.kind().as_str(),
        a.seed,
        run.model_checksum
    );
    let csv = run.to_csv();
    write_text(&a.out_csv, &format!("{header}{csv}"))?;
    write_text(&a.out_json, &run.to_json()?)?;
    print!("{csv}");
    Ok(ExitCode::SUCCESS)
}
