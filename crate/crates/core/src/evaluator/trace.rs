use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    /// Dataset hour of the target row.
    pub t: usize,
    pub p_true: f64,
    pub p_pred: f64,
    pub q_true: f64,
    pub q_pred: f64,
}

/// P and Q of one bus over `span` (sample offsets into the test block).
/// `pred` and `truth` are `[S, 2n]` test-set matrices whose first row is
/// dataset hour `first_hour`.
pub fn per_bus_trace(pred: &Tensor, truth: &Tensor, first_hour: usize, bus: usize, span: Range<usize>) -> Result<Vec<TraceRow>> {
    if pred.shape() != truth.shape() || pred.shape().len() != 2 {
        return Err(Error::shape("per_bus_trace", pred.shape(), truth.shape()));
    }
    let (s, d) = (pred.shape()[0], pred.shape()[1]);
    let n = d / 2;
    if bus >= n {
        return Err(Error::invalid(format!("bus {bus} out of range 0..{n}")));
    }
    if span.is_empty() || span.end > s {
        return Err(Error::invalid(format!("span {span:?} outside the {s}-hour test set")));
    }
    Ok(span
        .map(|i| TraceRow {
            t: first_hour + i,
            p_true: truth.get2(i, bus),
            p_pred: pred.get2(i, bus),
            q_true: truth.get2(i, n + bus),
            q_pred: pred.get2(i, n + bus),
        })
        .collect())
}

pub fn write_trace_csv(rows: &[TraceRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
