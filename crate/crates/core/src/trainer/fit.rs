use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::norm::NormStats;
use super::optim::OptimizerState;
use super::split::{chronological_split, Split};
use crate::error::{Error, Result};
use crate::evaluator::EvalMetrics;
use crate::gridgen::WindowedSamples;
use crate::models::{init_params, predict, unroll_and_predict, Checkpoint, ModelConfig, ModelParams};
use crate::numcore::{Tape, Tensor};

const EVAL_BATCH: usize = 256;

/// A `[T, d]` load matrix split chronologically and normalized with
/// statistics from the training rows.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub raw: Tensor,
    pub normalized: Tensor,
    pub norm: NormStats,
    pub split: Split,
    pub lookback: usize,
    pub horizon: usize,
}

impl PreparedData {
    pub fn new(matrix: &Tensor, lookback: usize, horizon: usize, config: &TrainConfig) -> Result<Self> {
        let samples = WindowedSamples::new(matrix, lookback, horizon)?.len();
        let split = chronological_split(samples, config.split, lookback + horizon - 1)?;
        let norm = NormStats::fit(matrix, 0..Self::rows_touched(&split, lookback, horizon))?;
        Ok(Self {
            raw: matrix.clone(),
            normalized: norm.apply(matrix)?,
            norm,
            split,
            lookback,
            horizon,
        })
    }

    /// Same matrix and split under different normalization statistics, for
    /// evaluating a model trained elsewhere.
    pub fn with_norm(&self, norm: &NormStats) -> Result<Self> {
        Ok(Self {
            normalized: norm.apply(&self.raw)?,
            norm: norm.clone(),
            ..self.clone()
        })
    }

    /// Rows `0..k` cover every training input and target.
    pub fn rows_touched(split: &Split, lookback: usize, horizon: usize) -> usize {
        split.train.end + lookback + horizon - 1
    }

    pub fn normalized_windows(&self) -> WindowedSamples<'_> {
        WindowedSamples::new(&self.normalized, self.lookback, self.horizon).expect("checked in new")
    }

    pub fn raw_windows(&self) -> WindowedSamples<'_> {
        WindowedSamples::new(&self.raw, self.lookback, self.horizon).expect("checked in new")
    }

    /// Denormalized predictions and raw targets for a range of samples, both
    /// `[S, horizon·d]`.
    pub fn predict_range(&self, params: &ModelParams, model: &ModelConfig, range: std::ops::Range<usize>) -> Result<(Tensor, Tensor)> {
        if range.is_empty() {
            return Err(Error::Empty("prediction range"));
        }
        let zw = self.normalized_windows();
        let rw = self.raw_windows();
        let width = self.horizon * zw.width();
        let mut pred = Vec::with_capacity(range.len() * width);
        let mut truth = Vec::with_capacity(range.len() * width);
        let idx: Vec<usize> = range.collect();
        for chunk in idx.chunks(EVAL_BATCH) {
            let (x, _) = zw.batch(chunk)?;
            pred.extend_from_slice(predict(params, model, &x)?.data());
            for &i in chunk {
                truth.extend_from_slice(rw.target(i));
            }
        }
        let s = idx.len();
        let pred = self.norm.invert(&Tensor::new(vec![s, width], pred)?)?;
        Ok((pred, Tensor::new(vec![s, width], truth)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Sample-weighted mean loss in normalized units.
    pub train_mse: f64,
    pub val: EvalMetrics,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn mean_epoch_seconds(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.wall_seconds).sum::<f64>() / self.records.len() as f64
    }

    /// Per-epoch CSV without wall time, so reruns are byte-identical.
    pub fn write_csv(&self, path: &Path, tolerances: &[f64]) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["epoch".to_string(), "train_mse".into(), "val_mae".into(), "val_mse".into(), "val_mape".into()];
        header.extend(tolerances.iter().map(|t| format!("val_acc_{:.0}", t * 100.0)));
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.epoch.to_string(),
                r.train_mse.to_string(),
                r.val.mae.to_string(),
                r.val.mse.to_string(),
                r.val.mape.map_or(String::new(), |v| v.to_string()),
            ];
            row.extend(tolerances.iter().map(|&t| r.val.accuracy_at(t).map_or(String::new(), |v| v.to_string())));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_timing_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "wall_seconds"])?;
        for r in &self.records {
            w.write_record([r.epoch.to_string(), format!("{:.6}", r.wall_seconds)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One pass over `order` in mini-batches. Returns the sample-weighted mean
/// training MSE of the batches as they were seen (pre-update losses).
pub fn train_epoch(
    params: &mut ModelParams,
    model: &ModelConfig,
    samples: &WindowedSamples<'_>,
    order: &[usize],
    batch_size: usize,
    state: &mut OptimizerState,
    epoch: usize,
) -> Result<f64> {
    if order.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut total = 0.0;
    for (bi, chunk) in order.chunks(batch_size.max(1)).enumerate() {
        let diverged = |e: Error| match e {
            Error::NonFinite(_) => Error::NonFiniteLoss { epoch, batch: bi },
            other => other,
        };
        let (x, y) = samples.batch(chunk)?;
        let mut tape = Tape::new();
        let vars = params.bind(&mut tape);
        let pred = unroll_and_predict(&mut tape, &vars, model, &x).map_err(diverged)?;
        let y = tape.constant(y);
        let loss = tape.mse(pred, y).map_err(diverged)?;
        let value = tape.value(loss)[0];
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: bi });
        }
        tape.backward(loss).map_err(diverged)?;
        let mut grads = Vec::new();
        vars.visit(&mut |_, v| {
            grads.push(tape.grad(*v).map_or_else(|| vec![0.0; tape.value(*v).len()], <[f64]>::to_vec));
        });
        state.apply(params, &grads)?;
        total += value * chunk.len() as f64;
    }
    Ok(total / order.len() as f64)
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub final_params: ModelParams,
    pub best_params: ModelParams,
    /// 1-based epoch of the best validation MAE.
    pub best_epoch: usize,
    pub log: TrainLog,
}

pub fn fit(model: &ModelConfig, data: &PreparedData, config: &TrainConfig) -> Result<FitOutcome> {
    fit_with(model, data, config, &mut |_| {})
}

/// Trains for `config.epochs` epochs, evaluating on the validation block after
/// each and keeping the parameters with the lowest validation MAE.
pub fn fit_with(
    model: &ModelConfig,
    data: &PreparedData,
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<FitOutcome> {
    config.validate()?;
    model.validate()?;
    if model.lookback != data.lookback || model.horizon != data.horizon {
        return Err(Error::invalid("model window does not match the prepared data"));
    }
    let mut params = init_params(model, config.seed)?;
    let mut state = OptimizerState::new(config.optimizer, config.learning_rate, &params);
    let windows = data.normalized_windows();
    let mut order: Vec<usize> = data.split.train.clone().collect();
    let mut log = TrainLog::default();
    let mut best: Option<(f64, usize, ModelParams)> = None;
    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        let train_mse = train_epoch(&mut params, model, &windows, &order, config.batch_size, &mut state, epoch)?;
        let (pred, truth) = data.predict_range(&params, model, data.split.val.clone())?;
        let val = EvalMetrics::compute(pred.data(), truth.data(), &config.eval_tolerances)?;
        if best.as_ref().is_none_or(|(mae, _, _)| val.mae < *mae) {
            best = Some((val.mae, epoch, params.clone()));
        }
        let record = EpochRecord {
            epoch,
            train_mse,
            val,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        log.records.push(record);
    }
    let (_, best_epoch, best_params) = best.expect("at least one epoch");
    Ok(FitOutcome {
        final_params: params,
        best_params,
        best_epoch,
        log,
    })
}

/// Model checkpoint bundled with what inference needs: normalization and the
/// training setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainedModel {
    pub checkpoint: Checkpoint,
    pub norm: NormStats,
    pub train: TrainConfig,
    pub best_epoch: usize,
}

impl TrainedModel {
    pub fn new(model: &ModelConfig, data: &PreparedData, config: &TrainConfig, outcome: &FitOutcome) -> Self {
        Self {
            checkpoint: Checkpoint::new(model, config.seed, &outcome.best_params),
            norm: data.norm.clone(),
            train: config.clone(),
            best_epoch: outcome.best_epoch,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}
