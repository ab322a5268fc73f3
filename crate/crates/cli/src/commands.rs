//! The four subcommands. Each cell (one model kind on one dataset size) is
//! trained and evaluated independently, so cells can run on separate threads.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use loadcast::evaluator::{compare, curve_from_log, per_bus_trace, write_trace_csv, CellResult, CurvePoint, EvalReport};
use loadcast::gridgen::{build_network, generate_dataset, LoadDataset};
use loadcast::models::ModelKind;
use loadcast::numcore::Tensor;
use loadcast::trainer::{fit_with, PreparedData, TrainedModel};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRef {
    pub file: PathBuf,
    pub years: usize,
    pub seed: u64,
    pub rows: usize,
    pub generator: String,
    pub network_hash: String,
}

impl DatasetRef {
    fn new(path: &Path, ds: &LoadDataset) -> Self {
        Self {
            file: path.to_path_buf(),
            years: ds.meta.years,
            seed: ds.meta.seed,
            rows: ds.hours(),
            generator: ds.meta.generator.clone(),
            network_hash: ds.meta.network_hash.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArtifact {
    pub experiment: ExperimentConfig,
    pub dataset: DatasetRef,
    pub curve: Vec<CurvePoint>,
    pub trained: TrainedModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceInfo {
    pub bus: usize,
    pub first_hour: usize,
    pub rows: usize,
    pub file: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalArtifact {
    pub experiment: ExperimentConfig,
    pub dataset: DatasetRef,
    pub best_epoch: usize,
    pub trace: TraceInfo,
    pub result: CellResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportArtifact {
    pub experiment: ExperimentConfig,
    pub report: EvalReport,
    pub failures: Vec<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T, pretty: bool) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let text = if pretty {
        serde_json::to_string_pretty(value)?
    } else {
        serde_json::to_string(value)?
    };
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}{suffix}"))
}

pub fn gen_data(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let network = build_network(cfg.dataset.seed);
    fs::create_dir_all(cfg.data_dir()).with_context(|| format!("creating {}", cfg.data_dir().display()))?;
    let mut written = Vec::new();
    for &years in &cfg.dataset.years {
        let mut ds = generate_dataset(&network, years, cfg.dataset.seed)?;
        ds.meta.experiment = Some(serde_json::to_value(cfg)?);
        let path = cfg.dataset_path(years);
        ds.save(&path).with_context(|| format!("writing {}", path.display()))?;
        println!(
            "{}: {} rows x {} load columns (+timestamp), {} nodes, {} edges",
            path.display(),
            ds.hours(),
            ds.matrix.shape()[1],
            network.num_nodes(),
            network.edges.len()
        );
        written.push(path);
    }
    Ok(written)
}

fn load_dataset(cfg: &ExperimentConfig, years: usize) -> Result<(PathBuf, LoadDataset)> {
    let path = cfg.dataset_path(years);
    if !path.exists() {
        bail!("dataset {} not found; run gen-data first", path.display());
    }
    let ds = LoadDataset::load(&path).with_context(|| format!("loading {}", path.display()))?;
    ensure!(
        ds.meta.seed == cfg.dataset.seed && ds.meta.years == years,
        "{} was generated with seed {} for {} years, expected seed {} for {years}",
        path.display(),
        ds.meta.seed,
        ds.meta.years,
        cfg.dataset.seed
    );
    Ok((path, ds))
}

/// Trains one cell and writes its checkpoint, training log and timing log.
/// Returns the mean seconds per epoch.
pub fn train_cell(cfg: &ExperimentConfig, kind: ModelKind, years: usize) -> Result<f64> {
    let cell = ExperimentConfig::cell_name(kind, years);
    let (path, ds) = load_dataset(cfg, years)?;
    let model = cfg.model_config(kind, &ds.meta.network);
    let data = PreparedData::new(&ds.matrix, model.lookback, model.horizon, &cfg.train)?;
    let epochs = cfg.train.epochs;
    let outcome = fit_with(&model, &data, &cfg.train, &mut |r| {
        println!(
            "[{cell}] epoch {}/{epochs} train_mse {:.6} val_mae {:.4} ({:.1}s)",
            r.epoch, r.train_mse, r.val.mae, r.wall_seconds
        );
    })
    .with_context(|| format!("training {cell}"))?;
    let trained = TrainedModel::new(&model, &data, &cfg.train, &outcome);
    let out = cfg.model_path(kind, years);
    write_json(
        &out,
        &ModelArtifact {
            experiment: cfg.clone(),
            dataset: DatasetRef::new(&path, &ds),
            curve: curve_from_log(&outcome.log),
            trained,
        },
        false,
    )?;
    outcome.log.write_csv(&with_suffix(&out, ".log.csv"), &cfg.train.eval_tolerances)?;
    let timing = cfg.timing_dir();
    fs::create_dir_all(&timing)?;
    outcome.log.write_timing_csv(&timing.join(format!("{cell}.csv")))?;
    let best = &outcome.log.records[outcome.best_epoch - 1].val;
    println!(
        "[{cell}] best epoch {} val_mae {:.4} val_mse {:.4} val_mape {} -> {}",
        outcome.best_epoch,
        best.mae,
        best.mse,
        best.mape.map_or("n/a".into(), |m| format!("{m:.2}%")),
        out.display()
    );
    Ok(outcome.log.mean_epoch_seconds())
}

fn first_step(t: &Tensor, width: usize) -> Result<Tensor> {
    let (s, d) = (t.shape()[0], t.shape()[1]);
    if d == width {
        return Ok(t.clone());
    }
    let data = (0..s).flat_map(|i| t.data()[i * d..i * d + width].to_vec()).collect();
    Ok(Tensor::new(vec![s, width], data)?)
}

/// Scores a trained cell on its test block and writes the metrics and the
/// per-bus trace.
pub fn eval_cell(cfg: &ExperimentConfig, kind: ModelKind, years: usize) -> Result<CellResult> {
    let cell = ExperimentConfig::cell_name(kind, years);
    let model_path = cfg.model_path(kind, years);
    if !model_path.exists() {
        bail!("checkpoint {} not found; run train first", model_path.display());
    }
    let artifact: ModelArtifact = read_json(&model_path)?;
    let (path, ds) = load_dataset(cfg, years)?;
    ensure!(
        ds.meta.network_hash == artifact.dataset.network_hash,
        "{} was trained on a different network",
        cell
    );
    let trained = &artifact.trained;
    let model = &trained.checkpoint.config;
    let data = PreparedData::new(&ds.matrix, model.lookback, model.horizon, &trained.train)?;
    ensure!(data.norm == trained.norm, "dataset differs from the one {cell} was trained on");
    let params = trained.checkpoint.to_params()?;
    let (pred, truth) = data.predict_range(&params, model, data.split.test.clone())?;
    let result = CellResult::new(model, years, &trained.train, artifact.curve.clone(), &pred, &truth)?;

    let width = ds.matrix.shape()[1];
    let start = cfg.eval.trace_start;
    let rows = per_bus_trace(
        &first_step(&pred, width)?,
        &first_step(&truth, width)?,
        data.split.test.start + model.lookback,
        cfg.eval.trace_bus,
        start..start + cfg.eval.trace_span,
    )
    .with_context(|| format!("trace for {cell}"))?;
    let out = cfg.eval_path(kind, years);
    let trace_file = with_suffix(&out, &format!(".trace_bus{}.csv", cfg.eval.trace_bus));
    if let Some(dir) = out.parent() {
        fs::create_dir_all(dir)?;
    }
    write_trace_csv(&rows, &trace_file)?;
    write_json(
        &out,
        &EvalArtifact {
            experiment: cfg.clone(),
            dataset: DatasetRef::new(&path, &ds),
            best_epoch: trained.best_epoch,
            trace: TraceInfo {
                bus: cfg.eval.trace_bus,
                first_hour: rows[0].t,
                rows: rows.len(),
                file: trace_file,
            },
            result: result.clone(),
        },
        true,
    )?;
    let acc: Vec<String> = result
        .test
        .tolerance_accuracy
        .iter()
        .map(|t| format!("{:.0}%: {:.2}%", t.tolerance * 100.0, t.accuracy_pct))
        .collect();
    println!(
        "[{cell}] test mae {:.4} kW, mse {:.4} kW^2, mape {}, within {}",
        result.test.mae,
        result.test.mse,
        result.test.mape.map_or("n/a".into(), |m| format!("{m:.2}%")),
        acc.join(", ")
    );
    Ok(result)
}

pub fn plan(cfg: &ExperimentConfig) -> Vec<String> {
    let mut steps = Vec::new();
    for &years in &cfg.dataset.years {
        steps.push(format!(
            "gen-data years={years} seed={} -> {}",
            cfg.dataset.seed,
            cfg.dataset_path(years).display()
        ));
    }
    for &years in &cfg.dataset.years {
        for &kind in &cfg.model.kinds {
            steps.push(format!(
                "train+eval {} epochs={} hidden={} -> {}",
                ExperimentConfig::cell_name(kind, years),
                cfg.train.epochs,
                cfg.model.hidden_dim,
                cfg.model_path(kind, years).display()
            ));
        }
    }
    steps.push(format!("report -> {}", cfg.report_dir().display()));
    steps
}

/// Outcome of a comparison run; `failures` names every cell that did not
/// complete.
pub struct CompareOutcome {
    pub report: Option<EvalReport>,
    pub failures: Vec<String>,
}

pub fn compare_cells(cfg: &ExperimentConfig, jobs: usize) -> Result<CompareOutcome> {
    gen_data(cfg)?;
    let cells: Vec<(ModelKind, usize)> = cfg
        .dataset
        .years
        .iter()
        .flat_map(|&y| cfg.model.kinds.iter().map(move |&k| (k, y)))
        .collect();
    let run_cell = |&(kind, years): &(ModelKind, usize)| -> Result<CellResult> {
        let seconds = train_cell(cfg, kind, years)?;
        let mut result = eval_cell(cfg, kind, years)?;
        result.seconds_per_epoch = seconds;
        Ok(result)
    };
    let results: Vec<Result<CellResult>> = if jobs > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
        pool.install(|| cells.par_iter().map(run_cell).collect())
    } else {
        cells.iter().map(run_cell).collect()
    };
    let mut done = Vec::new();
    let mut failures = Vec::new();
    for ((kind, years), r) in cells.iter().zip(results) {
        match r {
            Ok(c) => done.push(c),
            Err(e) => failures.push(format!("{}: {e:#}", ExperimentConfig::cell_name(*kind, *years))),
        }
    }
    let report = if done.is_empty() { None } else { Some(compare(done)?) };
    let dir = cfg.report_dir();
    fs::create_dir_all(&dir)?;
    if let Some(report) = &report {
        report.write_table_csv(&dir.join("table.csv"))?;
        report.write_columns_csv(&dir.join("columns.csv"))?;
        report.write_curves_json(&dir.join("curves.json"))?;
        fs::create_dir_all(cfg.timing_dir())?;
        report.write_timing_csv(&cfg.timing_dir().join("report.csv"))?;
        write_json(
            &dir.join("report.json"),
            &ReportArtifact {
                experiment: cfg.clone(),
                report: report.clone(),
                failures: failures.clone(),
            },
            true,
        )?;
        print_table(report);
    }
    Ok(CompareOutcome { report, failures })
}

fn print_table(report: &EvalReport) {
    println!("{:<7} {:<8} {:>10} {:>12} {:>9}", "years", "model", "MAE", "MSE", "MAPE%");
    for c in &report.cells {
        println!(
            "{:<7} {:<8} {:>10.3} {:>12.3} {:>9}",
            c.years,
            c.model.label(),
            c.test.mae,
            c.test.mse,
            c.test.mape.map_or("n/a".into(), |m| format!("{m:.2}"))
        );
    }
}
