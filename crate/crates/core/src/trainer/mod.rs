//! Normalization, chronological splits, Adam/SGD and the epoch loop.

mod config;
mod fit;
mod norm;
mod optim;
mod split;

pub use config::{Optimizer, SplitFractions, TrainConfig};
pub use fit::{fit, fit_with, train_epoch, EpochRecord, FitOutcome, PreparedData, TrainLog, TrainedModel};
pub use norm::{NormStats, Normalizer, STD_FLOOR};
pub use optim::OptimizerState;
pub use split::{chronological_split, Split};
