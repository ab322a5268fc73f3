//! Parametric hourly load shapes: daily × weekly × seasonal × noise.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::network::{LoadClass, Node};
use crate::error::{Error, Result};

pub const HOURS_PER_YEAR: usize = 8760;
/// Average daily household consumption, kWh.
pub const RESIDENTIAL_KWH_PER_DAY: f64 = 37.0;
/// Average commercial consumption, kWh per square foot per year.
pub const COMMERCIAL_KWH_PER_SQFT_YEAR: f64 = 22.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadProfileSpec {
    pub load_class: LoadClass,
    /// 24 hourly weights summing to 1, hour 0 = midnight.
    pub base_daily_shape: Vec<f64>,
    /// Monday first.
    pub weekly_factor: Vec<f64>,
    pub seasonal_amplitude: f64,
    /// Day of year with the seasonal maximum.
    pub peak_day: f64,
    pub noise_std: f64,
    pub power_factor: f64,
}

fn normalized(raw: [f64; 24]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

impl LoadProfileSpec {
    /// Built-in shape for each class; loosely modeled on Gulf Coast buildings
    /// with a summer cooling peak.
    pub fn default_for(class: LoadClass) -> Self {
        #[rustfmt::skip]
        let (daily, weekly, amplitude, noise) = match class {
            LoadClass::Residential => (
                [0.55, 0.50, 0.48, 0.47, 0.48, 0.55, 0.70, 0.85, 0.80, 0.70, 0.65, 0.65,
                 0.66, 0.66, 0.68, 0.75, 0.88, 1.00, 1.10, 1.15, 1.12, 1.00, 0.85, 0.68],
                [0.98, 0.97, 0.97, 0.98, 1.00, 1.05, 1.05],
                0.25,
                0.05,
            ),
            LoadClass::Office => (
                [0.35, 0.35, 0.35, 0.35, 0.35, 0.35, 0.45, 0.65, 0.90, 1.00, 1.00, 1.00,
                 1.00, 1.00, 1.00, 1.00, 1.00, 0.90, 0.65, 0.50, 0.42, 0.38, 0.36, 0.35],
                [1.05, 1.05, 1.05, 1.05, 1.02, 0.50, 0.45],
                0.12,
                0.03,
            ),
            LoadClass::Restaurant => (
                [0.30, 0.28, 0.27, 0.27, 0.28, 0.32, 0.45, 0.55, 0.60, 0.70, 0.85, 1.00,
                 1.00, 0.85, 0.70, 0.70, 0.85, 1.00, 1.05, 1.00, 0.85, 0.65, 0.45, 0.35],
                [0.90, 0.90, 0.92, 0.95, 1.08, 1.15, 1.05],
                0.12,
                0.03,
            ),
            LoadClass::Hospital => (
                [0.85, 0.83, 0.82, 0.82, 0.83, 0.86, 0.92, 0.98, 1.02, 1.05, 1.06, 1.06,
                 1.06, 1.06, 1.05, 1.04, 1.02, 1.00, 0.98, 0.96, 0.94, 0.92, 0.90, 0.87],
                [1.00, 1.00, 1.00, 1.00, 1.00, 0.97, 0.97],
                0.08,
                0.03,
            ),
            LoadClass::Retail => (
                [0.30, 0.30, 0.30, 0.30, 0.30, 0.30, 0.35, 0.45, 0.60, 0.80, 1.00, 1.00,
                 1.00, 1.00, 1.00, 1.00, 1.00, 1.00, 1.00, 1.00, 1.00, 0.80, 0.50, 0.35],
                [0.95, 0.95, 0.95, 0.97, 1.05, 1.15, 1.00],
                0.12,
                0.03,
            ),
            LoadClass::Hotel => (
                [0.60, 0.55, 0.52, 0.52, 0.55, 0.65, 0.85, 1.00, 0.95, 0.80, 0.70, 0.68,
                 0.68, 0.68, 0.68, 0.70, 0.78, 0.90, 1.00, 1.05, 1.00, 0.90, 0.78, 0.68],
                [0.95, 0.95, 0.97, 0.98, 1.05, 1.08, 1.00],
                0.12,
                0.03,
            ),
        };
        Self {
            load_class: class,
            base_daily_shape: normalized(daily),
            weekly_factor: weekly.to_vec(),
            seasonal_amplitude: amplitude,
            peak_day: 200.0,
            noise_std: noise,
            power_factor: if class == LoadClass::Residential { 0.95 } else { 0.90 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_daily_shape.len() != 24 || self.base_daily_shape.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::invalid("base_daily_shape needs 24 nonnegative weights"));
        }
        if (self.base_daily_shape.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("base_daily_shape must sum to 1"));
        }
        if self.weekly_factor.len() != 7 || self.weekly_factor.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::invalid("weekly_factor needs 7 positive multipliers"));
        }
        if !(0.0..1.0).contains(&self.seasonal_amplitude) {
            return Err(Error::invalid("seasonal_amplitude must lie in [0, 1)"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::invalid("noise_std must be a finite nonnegative fraction"));
        }
        check_power_factor(self.power_factor)
    }

    /// Long-run mean of the noiseless envelope; the seasonal term averages out
    /// over whole years.
    pub fn envelope_mean(&self) -> f64 {
        let daily = self.base_daily_shape.iter().sum::<f64>() / 24.0;
        let weekly = self.weekly_factor.iter().sum::<f64>() / 7.0;
        daily * weekly
    }
}

fn check_power_factor(pf: f64) -> Result<()> {
    if pf > 0.7 && pf <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("power factor {pf} outside (0.7, 1.0]")))
    }
}

fn check_hours(hours: usize) -> Result<()> {
    if hours == HOURS_PER_YEAR || hours == 5 * HOURS_PER_YEAR {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "profile length must be 8760 or 43800 hours, got {hours}"
        )))
    }
}

/// Raw kW-agnostic series
/// `daily[h] · weekly[dow] · (1 + A cos(2π(day − peak)/365)) · (1 + ε)`.
///
/// Day 0 is a Monday; every model year has 365 days.
pub fn synthesize_base_profile(spec: &LoadProfileSpec, hours: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    synthesize_with(spec, hours, &mut rng)
}

pub(crate) fn synthesize_with<R: Rng>(spec: &LoadProfileSpec, hours: usize, rng: &mut R) -> Result<Vec<f64>> {
    check_hours(hours)?;
    spec.validate()?;
    let noise = if spec.noise_std > 0.0 {
        Some(Normal::new(0.0, spec.noise_std).map_err(|e| Error::invalid(e.to_string()))?)
    } else {
        None
    };
    let clip = 3.0 * spec.noise_std;
    let mut out = Vec::with_capacity(hours);
    for t in 0..hours {
        let day = t / 24;
        let seasonal = 1.0 + spec.seasonal_amplitude * (2.0 * PI * ((day % 365) as f64 - spec.peak_day) / 365.0).cos();
        let eps = noise.map_or(0.0, |n| n.sample(rng).clamp(-clip, clip));
        let v = spec.base_daily_shape[t % 24] * spec.weekly_factor[day % 7] * seasonal * (1.0 + eps);
        out.push(v.max(0.0));
    }
    Ok(out)
}

/// Divides a raw series by its envelope mean so it averages ≈ 1.
pub fn unit_normalize(spec: &LoadProfileSpec, raw: &[f64]) -> Vec<f64> {
    let m = spec.envelope_mean();
    raw.iter().map(|v| v / m).collect()
}

/// Mean hourly demand in kW implied by a node's size.
pub fn target_mean_kw(node: &Node) -> Result<f64> {
    if !(node.size > 0.0 && node.size.is_finite()) {
        return Err(Error::invalid(format!(
            "node {} has nonpositive size {}",
            node.id, node.size
        )));
    }
    Ok(match node.load_class {
        LoadClass::Residential => node.size * RESIDENTIAL_KWH_PER_DAY / 24.0,
        _ => node.size * COMMERCIAL_KWH_PER_SQFT_YEAR / HOURS_PER_YEAR as f64,
    })
}

/// Scales a unit-mean series to the node's kW level (households × 37 kWh/day,
/// or ft² × 22.5 kWh/yr).
pub fn scale_to_node(node: &Node, base: &[f64]) -> Result<Vec<f64>> {
    let k = target_mean_kw(node)?;
    Ok(base.iter().map(|v| v * k).collect())
}

/// Lagging reactive power `Q = P · tan(arccos pf)`.
pub fn derive_reactive(p: &[f64], power_factor: f64) -> Result<Vec<f64>> {
    check_power_factor(power_factor)?;
    let ratio = power_factor.acos().tan();
    Ok(p.iter().map(|v| v * ratio).collect())
}
