use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{per_column, EvalMetrics};
use crate::error::{Error, Result};
use crate::models::{ModelConfig, ModelKind};
use crate::numcore::Tensor;
use crate::trainer::{TrainConfig, TrainLog};

/// Row order of the comparison table.
pub const TABLE_ORDER: [ModelKind; 5] = [
    ModelKind::Fnn,
    ModelKind::Lstm,
    ModelKind::Gru,
    ModelKind::Rnn,
    ModelKind::A3tgcn,
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mae: f64,
    /// Validation tolerance accuracies, same order as the run's tolerances.
    pub val_accuracy_pct: Vec<f64>,
}

/// Test-set result of one (model, dataset size) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub model: ModelKind,
    pub years: usize,
    pub test: EvalMetrics,
    pub columns: Vec<EvalMetrics>,
    pub curve: Vec<CurvePoint>,
    /// Wall-clock; kept out of serialized reports so they stay reproducible.
    #[serde(skip)]
    pub seconds_per_epoch: f64,
    pub model_config: ModelConfig,
    pub train: TrainConfig,
}

/// Validation curve of a training log.
pub fn curve_from_log(log: &TrainLog) -> Vec<CurvePoint> {
    log.records
        .iter()
        .map(|r| CurvePoint {
            epoch: r.epoch,
            train_mse: r.train_mse,
            val_mae: r.val.mae,
            val_accuracy_pct: r.val.tolerance_accuracy.iter().map(|t| t.accuracy_pct).collect(),
        })
        .collect()
}

impl CellResult {
    pub fn new(
        model_config: &ModelConfig,
        years: usize,
        train: &TrainConfig,
        curve: Vec<CurvePoint>,
        pred: &Tensor,
        truth: &Tensor,
    ) -> Result<Self> {
        let tol = &train.eval_tolerances;
        Ok(Self {
            model: model_config.kind,
            years,
            test: EvalMetrics::compute(pred.data(), truth.data(), tol)?,
            columns: per_column(pred, truth, tol)?,
            curve,
            seconds_per_epoch: 0.0,
            model_config: model_config.clone(),
            train: train.clone(),
        })
    }
}

fn table_rank(kind: ModelKind) -> usize {
    TABLE_ORDER.iter().position(|k| *k == kind).unwrap_or(usize::MAX)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cells: Vec<CellResult>,
}

/// Collects cells into a report ordered by dataset size and then table order.
/// All cells of one dataset size must share a training configuration and
/// window shape.
pub fn compare(mut cells: Vec<CellResult>) -> Result<EvalReport> {
    if cells.is_empty() {
        return Err(Error::Empty("comparison"));
    }
    cells.sort_by(|a, b| match a.years.cmp(&b.years) {
        Ordering::Equal => table_rank(a.model).cmp(&table_rank(b.model)),
        o => o,
    });
    for pair in cells.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.years == b.years && a.model == b.model {
            return Err(Error::invalid(format!("duplicate cell {} / {} years", a.model, a.years)));
        }
    }
    let first = &cells[0];
    for c in &cells {
        let same_window = c.model_config.lookback == first.model_config.lookback
            && c.model_config.horizon == first.model_config.horizon
            && c.model_config.num_nodes == first.model_config.num_nodes;
        if !same_window || c.train.eval_tolerances != first.train.eval_tolerances {
            return Err(Error::invalid(format!(
                "cell {} / {} years was evaluated under a different setup",
                c.model, c.years
            )));
        }
        if let Some(o) = cells.iter().find(|o| o.years == c.years && o.train != c.train) {
            return Err(Error::invalid(format!(
                "{} and {} on the {}-year data used different training configs",
                c.model, o.model, c.years
            )));
        }
    }
    Ok(EvalReport { cells })
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

impl EvalReport {
    pub fn tolerances(&self) -> &[f64] {
        &self.cells[0].train.eval_tolerances
    }

    pub fn cell(&self, model: ModelKind, years: usize) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.model == model && c.years == years)
    }

    /// MAE, MSE and MAPE per cell.
    pub fn metric_cell_count(&self) -> usize {
        self.cells.len() * 3
    }

    pub fn write_table_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = ["dataset_years", "model", "mae_kw", "mse_kw2", "mape_pct"].map(String::from).into();
        header.extend(self.tolerances().iter().map(|t| format!("acc_{:.0}_pct", t * 100.0)));
        w.write_record(&header)?;
        for c in &self.cells {
            let mut row = vec![
                c.years.to_string(),
                c.model.label().to_string(),
                c.test.mae.to_string(),
                c.test.mse.to_string(),
                opt(c.test.mape),
            ];
            row.extend(self.tolerances().iter().map(|&t| opt(c.test.accuracy_at(t))));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Per-column test metrics; column `j < n` is `P_j`, the rest `Q_{j−n}`.
    pub fn write_columns_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["dataset_years", "model", "column", "mae", "mse", "mape_pct"])?;
        for c in &self.cells {
            let n = c.columns.len() / 2;
            for (j, m) in c.columns.iter().enumerate() {
                let name = if j < n { format!("P_{j}") } else { format!("Q_{}", j - n) };
                w.write_record([
                    c.years.to_string(),
                    c.model.label().to_string(),
                    name,
                    m.mae.to_string(),
                    m.mse.to_string(),
                    opt(m.mape),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_curves_json(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Curve<'a> {
            model: ModelKind,
            years: usize,
            tolerances: &'a [f64],
            epochs: &'a [CurvePoint],
        }
        let curves: Vec<Curve> = self
            .cells
            .iter()
            .map(|c| Curve {
                model: c.model,
                years: c.years,
                tolerances: &c.train.eval_tolerances,
                epochs: &c.curve,
            })
            .collect();
        fs::write(path, serde_json::to_string_pretty(&curves)? + "\n")?;
        Ok(())
    }

    /// Wall-clock seconds per epoch; not reproducible across runs.
    pub fn write_timing_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["dataset_years", "model", "seconds_per_epoch"])?;
        for c in &self.cells {
            w.write_record([c.years.to_string(), c.model.label().to_string(), format!("{:.6}", c.seconds_per_epoch)])?;
        }
        w.flush()?;
        Ok(())
    }
}
