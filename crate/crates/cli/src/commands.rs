use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use enginecal::baselines::{fit_baseline, load_baseline, save_baseline, BaselineKind, BaselineModel};
use enginecal::dataset::{fit_scalers, read_csv, transform, Dataset, N_INPUTS, N_OUTPUTS};
use enginecal::drive_cycle::{
    run_campaign, run_case_list, write_traces, CampaignSpec, CampaignSummary, CaseSpec, DriveCycleTrace, GridLevels,
    GridPoint, RegimeModifiers,
};
use enginecal::evaluation::{emit_report, evaluate, MetricReport};
use enginecal::sampling::latin_hypercube;
use enginecal::surrogate::{fit_mlp, init_model, load_model, save_model, train as train_mlp, transfer_train, FreezeMask, MlpModel, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Seeds};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Regime {
    Train,
    Test1a,
    Test1b,
    Test2,
    /// Full-factorial campaign over the grid levels.
    Grid,
}

impl Regime {
    /// The four regimes `generate` builds by default.
    pub const EXPERIMENT: [Regime; 4] = [Regime::Train, Regime::Test1a, Regime::Test1b, Regime::Test2];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Train => "train",
            Regime::Test1a => "test1a",
            Regime::Test1b => "test1b",
            Regime::Test2 => "test2",
            Regime::Grid => "grid",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, CliError> {
        match name {
            "train" => Ok(Regime::Train),
            "test1a" => Ok(Regime::Test1a),
            "test1b" => Ok(Regime::Test1b),
            "test2" => Ok(Regime::Test2),
            "grid" => Ok(Regime::Grid),
            other => Err(CliError::Usage(format!(
                "unknown regime {other:?} (expected train, test1a, test1b, test2 or grid)"
            ))),
        }
    }

    /// Comma-separated list.
    pub fn parse_list(list: &str) -> Result<Vec<Self>, CliError> {
        list.split(',').map(|s| Self::from_name(s.trim())).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Dnn,
    Baseline(BaselineKind),
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Dnn,
        Method::Baseline(BaselineKind::Linear),
        Method::Baseline(BaselineKind::Ridge),
        Method::Baseline(BaselineKind::Knn),
        Method::Baseline(BaselineKind::Tree),
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dnn => "dnn",
            Method::Baseline(k) => k.short_name(),
        }
    }

    pub fn from_name(name: &str) -> Result<Self, CliError> {
        if name == "dnn" {
            return Ok(Method::Dnn);
        }
        BaselineKind::from_name(name)
            .map(Method::Baseline)
            .ok_or_else(|| CliError::Usage(format!("unknown method {name:?} (expected dnn, lm, rg, knn or dt)")))
    }

    /// Comma-separated list; `all` expands to every method.
    pub fn parse_list(list: &str) -> Result<Vec<Self>, CliError> {
        if list.trim() == "all" {
            return Ok(Self::ALL.to_vec());
        }
        list.split(',').map(|s| Self::from_name(s.trim())).collect()
    }
}

pub enum LoadedModel {
    Dnn(MlpModel),
    Baseline(BaselineModel),
}

impl LoadedModel {
    pub fn predict(&self, inputs: &[[f64; N_INPUTS]]) -> Result<Vec<[f64; N_OUTPUTS]>, CliError> {
        match self {
            LoadedModel::Dnn(m) => Ok(m.predict(inputs)?),
            LoadedModel::Baseline(m) => Ok(m.predict(inputs)),
        }
    }
}

pub fn regime_path(config: &ExperimentConfig, regime: Regime) -> PathBuf {
    config.data_dir().join(format!("{}.csv", regime.name()))
}

pub fn model_path(config: &ExperimentConfig, method: Method) -> PathBuf {
    config.models_dir().join(format!("{}.json", method.name()))
}

fn log_path(config: &ExperimentConfig, method: Method) -> PathBuf {
    config.models_dir().join(format!("{}.log.json", method.name()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Compute(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn read_regime(config: &ExperimentConfig, regime: Regime) -> Result<Dataset, CliError> {
    let path = regime_path(config, regime);
    if !path.exists() {
        return Err(CliError::Io(format!("{} not found; run generate first", path.display())));
    }
    Ok(read_csv(&path)?)
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Manifest {
    config_sha256: String,
    seeds: Option<Seeds>,
    commands: BTreeMap<String, serde_json::Value>,
}

/// Merge one command's entry into `<out>/manifest.json`.
fn record_manifest(config: &ExperimentConfig, command: &str, mut entry: serde_json::Value) -> Result<(), CliError> {
    create_dir(&config.out_dir)?;
    let path = config.out_dir.join("manifest.json");
    let mut manifest: Manifest = std::fs::read_to_string(&path)
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .unwrap_or_default();
    let hash = config.sha256();
    if let serde_json::Value::Object(map) = &mut entry {
        map.insert("config_sha256".into(), hash.clone().into());
    }
    manifest.config_sha256 = hash;
    manifest.seeds = Some(config.seeds);
    manifest.commands.insert(command.to_string(), entry);
    write_json(&path, &manifest)
}

/// Training traces followed by the fresh traces of the 1b regime.
pub fn build_traces(config: &ExperimentConfig) -> Result<Vec<DriveCycleTrace>, CliError> {
    let n = config.traces.train_traces + config.design.test_1b_points;
    (0..n)
        .map(|i| {
            let seed = config.seeds.traces.wrapping_add(i as u64);
            Ok(config.traces.generator.generate(format!("c{i:02}"), seed, &config.model.vehicle)?)
        })
        .collect()
}

/// `n` Latin hypercube points scaled to the per-parameter grid bounds.
pub fn design_points(grid: &GridLevels, n: usize, seed: u64) -> Vec<GridPoint> {
    let bounds = grid.bounds();
    let design = latin_hypercube(n, 6, seed);
    design
        .points
        .iter()
        .map(|u| GridPoint::from_array(std::array::from_fn(|j| bounds[j].0 + (bounds[j].1 - bounds[j].0) * u[j])))
        .collect()
}

/// Cases of one experiment regime, indexing into [`build_traces`].
pub fn regime_cases(config: &ExperimentConfig, traces: &[DriveCycleTrace], regime: Regime) -> Vec<CaseSpec> {
    let d = &config.design;
    let s = &config.seeds;
    let (points, tag, modifiers) = match regime {
        Regime::Train => (design_points(&config.grid, d.train_points, s.train_design), "t", RegimeModifiers::default()),
        Regime::Test1a => (design_points(&config.grid, d.test_1a_points, s.test_1a_design), "a", RegimeModifiers::default()),
        Regime::Test1b => (design_points(&config.grid, d.test_1b_points, s.test_1b_design), "b", RegimeModifiers::default()),
        Regime::Test2 => (design_points(&config.grid, d.test_1a_points, s.test_1a_design), "o", config.out_of_envelope),
        Regime::Grid => return Vec::new(),
    };
    let n_train = config.traces.train_traces;
    points
        .into_iter()
        .enumerate()
        .map(|(i, point)| {
            let trace = match regime {
                Regime::Train => i % n_train,
                Regime::Test1b => n_train + i,
                _ => 0,
            };
            CaseSpec {
                case_id: format!("{}/{tag}{i:03}", traces[trace].id),
                trace,
                point,
                modifiers,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RegimeSummary {
    pub regime: String,
    pub path: PathBuf,
    pub seconds: f64,
    #[serde(flatten)]
    pub campaign: CampaignSummary,
}

pub fn cmd_generate(config: &ExperimentConfig, regimes: &[Regime]) -> Result<Vec<RegimeSummary>, CliError> {
    let data_dir = config.data_dir();
    create_dir(&data_dir)?;
    let workers = config.workers();
    let traces = build_traces(config)?;
    write_traces(&traces, data_dir.join("traces.csv"))?;
    let mut summaries = Vec::new();
    for &regime in regimes {
        let start = Instant::now();
        let path = regime_path(config, regime);
        let campaign = if regime == Regime::Grid {
            let mut generator = config.traces.generator.clone();
            generator.length = config.full_grid.trace_length;
            let grid_traces = (0..config.full_grid.traces)
                .map(|i| {
                    let seed = config.seeds.traces.wrapping_add(10_000 + i as u64);
                    generator.generate(format!("g{i:02}"), seed, &config.model.vehicle)
                })
                .collect::<Result<Vec<_>, _>>()?;
            write_traces(&grid_traces, data_dir.join("grid_traces.csv"))?;
            let spec = CampaignSpec {
                traces: grid_traces,
                grid: config.grid.clone(),
                seed: config.seeds.traces,
                output_path: path.clone(),
                modifiers: RegimeModifiers::default(),
            };
            run_campaign(&spec, &config.model, workers)?
        } else {
            let cases = regime_cases(config, &traces, regime);
            run_case_list(&config.model, &traces, &cases, workers, &path)?
        };
        summaries.push(RegimeSummary {
            regime: regime.name().to_string(),
            path,
            seconds: start.elapsed().as_secs_f64(),
            campaign,
        });
    }
    record_manifest(
        config,
        "generate",
        serde_json::json!({ "workers": workers, "regimes": summaries }),
    )?;
    Ok(summaries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub method: String,
    pub regime: String,
    pub rows: usize,
    pub train_seconds: f64,
    /// Mean scaled loss per epoch; empty for baselines.
    pub loss_history: Vec<f64>,
}

pub fn train_config(config: &ExperimentConfig) -> TrainConfig {
    TrainConfig {
        epochs: config.train.epochs,
        batch_size: config.train.batch_size,
        adam: config.train.adam,
        shuffle_seed: config.seeds.shuffle,
        freeze: None,
    }
}

pub fn cmd_train(config: &ExperimentConfig, methods: &[Method], regime: Regime) -> Result<Vec<TrainLog>, CliError> {
    let data = read_regime(config, regime)?;
    create_dir(&config.models_dir())?;
    let mut logs = Vec::new();
    for &method in methods {
        let start = Instant::now();
        let loss_history = match method {
            Method::Dnn => {
                let (model, history) = fit_mlp(&config.network, &data, &train_config(config), config.seeds.init)?;
                save_model(&model, model_path(config, method))?;
                history
            }
            Method::Baseline(kind) => {
                let model = fit_baseline(kind, &data, &config.baselines)?;
                save_baseline(&model, model_path(config, method))?;
                Vec::new()
            }
        };
        let log = TrainLog {
            method: method.name().to_string(),
            regime: regime.name().to_string(),
            rows: data.len(),
            train_seconds: start.elapsed().as_secs_f64(),
            loss_history,
        };
        write_json(&log_path(config, method), &log)?;
        logs.push(log);
    }
    let entry: Vec<_> = logs
        .iter()
        .map(|l| serde_json::json!({ "method": l.method, "rows": l.rows, "train_seconds": l.train_seconds }))
        .collect();
    record_manifest(config, "train", serde_json::json!({ "regime": regime.name(), "models": entry }))?;
    Ok(logs)
}

pub fn load_method(config: &ExperimentConfig, method: Method) -> Result<(LoadedModel, f64), CliError> {
    let path = model_path(config, method);
    if !path.exists() {
        return Err(CliError::Io(format!("model file {} not found", path.display())));
    }
    let model = match method {
        Method::Dnn => LoadedModel::Dnn(load_model(&path)?),
        Method::Baseline(_) => LoadedModel::Baseline(load_baseline(&path)?),
    };
    let train_seconds = std::fs::read_to_string(log_path(config, method))
        .ok()
        .and_then(|t| serde_json::from_str::<TrainLog>(&t).ok())
        .map_or(0.0, |l| l.train_seconds);
    Ok((model, train_seconds))
}

/// Score models on one regime and write `reports/<regime>.{csv,svg,json}`.
/// Without an explicit method list every trained model is evaluated.
pub fn cmd_evaluate(config: &ExperimentConfig, methods: Option<&[Method]>, regime: Regime) -> Result<Vec<MetricReport>, CliError> {
    let methods: Vec<Method> = match methods {
        Some(m) => m.to_vec(),
        None => Method::ALL.into_iter().filter(|&m| model_path(config, m).exists()).collect(),
    };
    if methods.is_empty() {
        return Err(CliError::Io(format!("no model files in {}", config.models_dir().display())));
    }
    let data = read_regime(config, regime)?;
    let mut reports = Vec::new();
    for method in methods {
        let (model, train_seconds) = load_method(config, method)?;
        reports.push(evaluate(method.name(), &data, train_seconds, |x| model.predict(x))?);
    }
    emit(config, regime.name(), &reports)?;
    record_manifest(
        config,
        &format!("evaluate-{}", regime.name()),
        serde_json::json!({ "rows": data.len(), "models": reports.iter().map(|r| &r.model).collect::<Vec<_>>() }),
    )?;
    Ok(reports)
}

fn emit(config: &ExperimentConfig, stem: &str, reports: &[MetricReport]) -> Result<(), CliError> {
    let dir = config.reports_dir();
    create_dir(&dir)?;
    emit_report(reports, dir.join(stem))?;
    write_json(&dir.join(format!("{stem}.json")), &reports)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SizeResult {
    pub size: usize,
    pub rows: usize,
    pub report: MetricReport,
}

/// One network per training size, each scored on the 1a regime. Subsets
/// are the leading cycles of the train regime.
pub fn cmd_size_study(config: &ExperimentConfig, sizes: &[usize]) -> Result<Vec<SizeResult>, CliError> {
    let cycle = config.traces.generator.length;
    if sizes.is_empty() {
        return Err(CliError::Usage("size study needs at least one size".into()));
    }
    if let Some(bad) = sizes.iter().find(|&&s| s == 0 || s % cycle != 0) {
        return Err(CliError::Usage(format!(
            "size {bad} is not a positive multiple of the {cycle}-row drive cycle"
        )));
    }
    let train = read_regime(config, Regime::Train)?;
    let test = read_regime(config, Regime::Test1a)?;
    let available = train.trace_order().len();
    // A single cycle holds every grid parameter constant, so scalers come
    // from the whole training regime.
    let scalers = fit_scalers(&train)?;
    let mut results = Vec::new();
    for &size in sizes {
        let cycles = size / cycle;
        if cycles > available {
            return Err(CliError::Usage(format!(
                "size {size} needs {cycles} cycles but the train regime has {available}"
            )));
        }
        let subset = train.take_traces(cycles);
        let start = Instant::now();
        let init = init_model(&config.network, config.seeds.init)?.with_scalers(scalers.clone());
        let (model, _) = train_mlp(&init, &transform(&subset, &scalers)?, &train_config(config))?;
        let seconds = start.elapsed().as_secs_f64();
        let report = evaluate(&format!("dnn-{size}"), &test, seconds, |x| Ok::<_, CliError>(model.predict(x)?))?;
        results.push(SizeResult {
            size,
            rows: subset.len(),
            report,
        });
    }
    let dir = config.reports_dir();
    create_dir(&dir)?;
    let mut w = csv::Writer::from_path(dir.join("size_study.csv")).map_err(|e| CliError::Io(e.to_string()))?;
    w.write_record(["size", "rows", "output", "pearson_r", "mape"]).map_err(|e| CliError::Io(e.to_string()))?;
    for r in &results {
        for o in &r.report.outputs {
            w.write_record([
                r.size.to_string(),
                r.rows.to_string(),
                o.output.clone(),
                o.pearson_r.to_string(),
                o.mape.to_string(),
            ])
            .map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    w.flush()?;
    write_json(&dir.join("size_study.json"), &results)?;
    let entry: Vec<_> = results
        .iter()
        .map(|r| serde_json::json!({ "size": r.size, "rows": r.rows, "train_seconds": r.report.train_seconds }))
        .collect();
    record_manifest(config, "size-study", serde_json::json!({ "sizes": entry }))?;
    Ok(results)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferOutcome {
    pub adaptation_rows: usize,
    pub evaluation_rows: usize,
    pub frozen_hidden_layers: usize,
    /// Every frozen weight and bias kept its exact bit pattern.
    pub frozen_bit_identical: bool,
    pub loss_history: Vec<f64>,
    pub before: MetricReport,
    pub after: MetricReport,
    /// Baselines refit from scratch on train plus the adaptation rows.
    pub retrained: Vec<MetricReport>,
}

fn layers_bit_identical(a: &MlpModel, b: &MlpModel, k: usize) -> bool {
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    a.layers[..k]
        .iter()
        .zip(&b.layers[..k])
        .all(|(x, y)| bits(&x.weights) == bits(&y.weights) && bits(&x.biases) == bits(&y.biases))
}

pub fn cmd_transfer(config: &ExperimentConfig) -> Result<TransferOutcome, CliError> {
    let (loaded, train_seconds) = load_method(config, Method::Dnn)?;
    let LoadedModel::Dnn(mlp) = loaded else { unreachable!("dnn loads a network") };
    let shifted = read_regime(config, Regime::Test2)?;
    let rows = config.transfer.rows;
    if rows >= shifted.len() {
        return Err(CliError::Config(format!(
            "transfer.rows = {rows} leaves no evaluation rows in a {}-row regime",
            shifted.len()
        )));
    }
    let (adapt, rest) = shifted.split_random(rows, config.seeds.transfer_split);
    let scalers = mlp
        .scalers
        .clone()
        .ok_or_else(|| CliError::Compute("network has no scalers".into()))?;
    let before = evaluate("dnn", &rest, train_seconds, |x| Ok::<_, CliError>(mlp.predict(x)?))?;

    let k = config.transfer.frozen_hidden_layers;
    let tc = TrainConfig {
        epochs: config.transfer.epochs,
        shuffle_seed: config.seeds.transfer_shuffle,
        freeze: Some(FreezeMask::freeze_first(config.network.n_hidden(), k)),
        ..train_config(config)
    };
    let start = Instant::now();
    let (tuned, loss_history) = transfer_train(&mlp, &transform(&adapt, &scalers)?, &tc)?;
    let transfer_seconds = start.elapsed().as_secs_f64();
    let frozen_bit_identical = layers_bit_identical(&mlp, &tuned, k);
    if !frozen_bit_identical {
        return Err(CliError::Compute("frozen layers changed during transfer training".into()));
    }
    create_dir(&config.models_dir())?;
    save_model(&tuned, config.models_dir().join("dnn_transfer.json"))?;
    let after = evaluate("dnn", &rest, transfer_seconds, |x| Ok::<_, CliError>(tuned.predict(x)?))?;

    let mut retrained = Vec::new();
    if config.transfer.retrain_baselines {
        let train = read_regime(config, Regime::Train)?;
        let combined = Dataset::concat(&[&train, &adapt]);
        for kind in BaselineKind::ALL {
            let start = Instant::now();
            let model = fit_baseline(kind, &combined, &config.baselines)?;
            let seconds = start.elapsed().as_secs_f64();
            retrained.push(evaluate(&format!("{}-retrain", kind.short_name()), &rest, seconds, |x| {
                Ok::<_, CliError>(model.predict(x))
            })?);
        }
    }
    emit(config, "transfer_before", std::slice::from_ref(&before))?;
    emit(config, "transfer_after", std::slice::from_ref(&after))?;
    if !retrained.is_empty() {
        emit(config, "transfer_retrain", &retrained)?;
    }
    let outcome = TransferOutcome {
        adaptation_rows: adapt.len(),
        evaluation_rows: rest.len(),
        frozen_hidden_layers: k,
        frozen_bit_identical,
        loss_history,
        before,
        after,
        retrained,
    };
    write_json(&config.reports_dir().join("transfer.json"), &outcome)?;
    record_manifest(
        config,
        "transfer",
        serde_json::json!({
            "adaptation_rows": outcome.adaptation_rows,
            "evaluation_rows": outcome.evaluation_rows,
            "transfer_seconds": transfer_seconds,
            "frozen_bit_identical": frozen_bit_identical,
        }),
    )?;
    Ok(outcome)
}

/// Collect every per-regime report into `reports/summary.md`.
pub fn cmd_report(config: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let dir = config.reports_dir();
    let mut names: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    names.sort();
    let mut text = String::from("# Accuracy summary\n");
    let mut sections = 0;
    for path in names {
        let Some(reports) = std::fs::read_to_string(&path)
            .ok()
            .and_then(|t| serde_json::from_str::<Vec<MetricReport>>(&t).ok())
        else {
            continue;
        };
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
        text.push_str(&format!("\n## {stem}\n\n| model | output | r | MAPE % |\n|---|---|---|---|\n"));
        for r in &reports {
            for o in &r.outputs {
                text.push_str(&format!("| {} | {} | {:.4} | {:.3} |\n", r.model, o.output, o.pearson_r, o.mape));
            }
        }
        sections += 1;
    }
    if sections == 0 {
        return Err(CliError::Io(format!("no metric reports in {}", dir.display())));
    }
    let out = dir.join("summary.md");
    std::fs::write(&out, text)?;
    record_manifest(config, "report", serde_json::json!({ "sections": sections }))?;
    Ok(out)
}
