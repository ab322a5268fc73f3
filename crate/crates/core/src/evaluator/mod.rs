//! Error metrics, per-bus traces and the cross-model comparison report.

mod metrics;
mod report;
mod trace;

pub use metrics::{mae, mape, mse, per_column, tolerance_accuracy, EvalMetrics, ToleranceAccuracy, DEFAULT_TOLERANCES, MAPE_FLOOR};
pub use report::{compare, curve_from_log, CellResult, CurvePoint, EvalReport, TABLE_ORDER};
pub use trace::{per_bus_trace, write_trace_csv, TraceRow};
