//! Forecast error metrics over flattened prediction/target arrays.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Tensor;

/// Targets with magnitude below this (kW or kvar) are left out of MAPE and
/// tolerance accuracy.
pub const MAPE_FLOOR: f64 = 1e-6;

pub const DEFAULT_TOLERANCES: [f64; 3] = [0.10, 0.15, 0.20];

fn check(op: &'static str, pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::shape(op, &[pred.len()], &[truth.len()]));
    }
    if pred.is_empty() {
        return Err(Error::Empty(op));
    }
    Ok(())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check("mae", pred, truth)?;
    let mut s = 0.0;
    for (p, y) in pred.iter().zip(truth) {
        s += (p - y).abs();
    }
    Ok(s / pred.len() as f64)
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check("mse", pred, truth)?;
    let mut s = 0.0;
    for (p, y) in pred.iter().zip(truth) {
        let d = p - y;
        s += d * d;
    }
    Ok(s / pred.len() as f64)
}

/// Percent, averaged over targets with `|y| ≥ MAPE_FLOOR`.
pub fn mape(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check("mape", pred, truth)?;
    let mut s = 0.0;
    let mut n = 0usize;
    for (p, y) in pred.iter().zip(truth) {
        if y.abs() >= MAPE_FLOOR {
            s += (p - y).abs() / y.abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::MapeUndefined);
    }
    Ok(100.0 * s / n as f64)
}

/// Percent of eligible targets predicted within `tol · |y|`.
pub fn tolerance_accuracy(pred: &[f64], truth: &[f64], tol: f64) -> Result<f64> {
    check("tolerance_accuracy", pred, truth)?;
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let mut hit = 0usize;
    let mut n = 0usize;
    for (p, y) in pred.iter().zip(truth) {
        if y.abs() >= MAPE_FLOOR {
            n += 1;
            if (p - y).abs() <= tol * y.abs() {
                hit += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::MapeUndefined);
    }
    Ok(100.0 * hit as f64 / n as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceAccuracy {
    pub tolerance: f64,
    pub accuracy_pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalMetrics {
    /// kW/kvar.
    pub mae: f64,
    pub mse: f64,
    /// Percent; `None` when every target is below the floor.
    pub mape: Option<f64>,
    /// Empty when MAPE is undefined.
    pub tolerance_accuracy: Vec<ToleranceAccuracy>,
}

impl EvalMetrics {
    pub fn compute(pred: &[f64], truth: &[f64], tolerances: &[f64]) -> Result<Self> {
        let mape = match mape(pred, truth) {
            Ok(v) => Some(v),
            Err(Error::MapeUndefined) => None,
            Err(e) => return Err(e),
        };
        let mut acc = Vec::with_capacity(tolerances.len());
        if mape.is_some() {
            for &tol in tolerances {
                acc.push(ToleranceAccuracy {
                    tolerance: tol,
                    accuracy_pct: tolerance_accuracy(pred, truth, tol)?,
                });
            }
        }
        Ok(Self {
            mae: mae(pred, truth)?,
            mse: mse(pred, truth)?,
            mape,
            tolerance_accuracy: acc,
        })
    }

    pub fn accuracy_at(&self, tol: f64) -> Option<f64> {
        self.tolerance_accuracy
            .iter()
            .find(|t| (t.tolerance - tol).abs() < 1e-12)
            .map(|t| t.accuracy_pct)
    }
}

/// Metrics for every column of `[S, d]` prediction and target matrices.
pub fn per_column(pred: &Tensor, truth: &Tensor, tolerances: &[f64]) -> Result<Vec<EvalMetrics>> {
    if pred.shape() != truth.shape() || pred.shape().len() != 2 {
        return Err(Error::shape("per_column", pred.shape(), truth.shape()));
    }
    let (s, d) = (pred.shape()[0], pred.shape()[1]);
    (0..d)
        .map(|j| {
            let p: Vec<f64> = (0..s).map(|i| pred.data()[i * d + j]).collect();
            let y: Vec<f64> = (0..s).map(|i| truth.data()[i * d + j]).collect();
            EvalMetrics::compute(&p, &y, tolerances)
        })
        .collect()
}
