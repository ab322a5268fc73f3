use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::config::SplitFractions;
use crate::error::{Error, Result};

/// Sample-index ranges of the three chronological partitions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

/// Cuts `samples` consecutive windows into train, validation and test blocks,
/// leaving `gap` windows out between neighbouring blocks. With
/// `gap = lookback + horizon − 1` no validation or test window shares a row
/// with any training window.
pub fn chronological_split(samples: usize, fractions: SplitFractions, gap: usize) -> Result<Split> {
    fractions.validate()?;
    let usable = samples
        .checked_sub(2 * gap)
        .ok_or_else(|| Error::invalid(format!("{samples} samples cannot fit two gaps of {gap}")))?;
    let train = (fractions.train * usable as f64).round() as usize;
    let val = ((fractions.val * usable as f64).round() as usize).min(usable - train.min(usable));
    let test = usable.saturating_sub(train + val);
    if train == 0 || val == 0 || test == 0 {
        return Err(Error::invalid(format!(
            "split of {samples} samples leaves an empty partition ({train}/{val}/{test})"
        )));
    }
    let val_start = train + gap;
    let test_start = val_start + val + gap;
    Ok(Split {
        train: 0..train,
        val: val_start..val_start + val,
        test: test_start..test_start + test,
    })
}
