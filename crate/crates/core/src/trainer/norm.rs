use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Tensor;

pub const STD_FLOOR: f64 = 1e-8;

/// Per-channel z-score statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Fits on `rows` of a `[T, d]` matrix. Population std, floored at
    /// [`STD_FLOOR`].
    pub fn fit(matrix: &Tensor, rows: Range<usize>) -> Result<Self> {
        let (t, d) = match matrix.shape() {
            [t, d] => (*t, *d),
            other => return Err(Error::shape("fit_norm", other, &[0, 0])),
        };
        if rows.is_empty() || rows.end > t {
            return Err(Error::invalid(format!("cannot fit on rows {rows:?} of {t}")));
        }
        let x = matrix.data();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows.clone() {
            for (m, v) in mean.iter_mut().zip(&x[r * d..(r + 1) * d]) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        // Second pass corrects the mean's rounding error.
        let mut corr = vec![0.0; d];
        let mut var = vec![0.0; d];
        for r in rows {
            for j in 0..d {
                let dv = x[r * d + j] - mean[j];
                corr[j] += dv;
                var[j] += dv * dv;
            }
        }
        for j in 0..d {
            mean[j] += corr[j] / n;
        }
        let std = var.iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
        Ok(Self { mean, std })
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        let last = *x.shape().last().unwrap_or(&0);
        if self.channels() == 0 || last % self.channels() != 0 {
            return Err(Error::shape("normalize", x.shape(), &[self.channels()]));
        }
        Ok(())
    }

    /// `(x − mean) / std`; a last axis of width `k·d` is treated as `k`
    /// consecutive `d`-channel rows.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let d = self.channels();
        let mut out = x.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let j = i % d;
            *v = (*v - self.mean[j]) / self.std[j];
        }
        Ok(out)
    }

    pub fn invert(&self, z: &Tensor) -> Result<Tensor> {
        self.check(z)?;
        let d = self.channels();
        let mut out = z.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let j = i % d;
            *v = *v * self.std[j] + self.mean[j];
        }
        Ok(out)
    }
}

/// Holder that refuses to transform data before it has been fitted.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Normalizer {
    stats: Option<NormStats>,
}

impl Normalizer {
    pub fn fit(&mut self, matrix: &Tensor, rows: Range<usize>) -> Result<&NormStats> {
        Ok(self.stats.insert(NormStats::fit(matrix, rows)?))
    }

    pub fn stats(&self) -> Result<&NormStats> {
        self.stats.as_ref().ok_or(Error::NormNotFitted)
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        self.stats()?.apply(x)
    }

    pub fn invert(&self, z: &Tensor) -> Result<Tensor> {
        self.stats()?.invert(z)
    }
}
