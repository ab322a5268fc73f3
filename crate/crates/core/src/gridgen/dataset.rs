//! Assembling, storing and windowing the hourly `T × 2n` load matrix.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime, TimeDelta};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{DistributionNetwork, LoadClass};
use super::profile::{derive_reactive, scale_to_node, synthesize_with, unit_normalize, LoadProfileSpec, HOURS_PER_YEAR};
use crate::error::{Error, Result};
use crate::numcore::Tensor;

pub const GENERATOR_VERSION: &str = concat!("loadcast-gridgen/", env!("CARGO_PKG_VERSION"));
const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Hour 0 of every dataset. 2018-01-01 is a Monday, matching day 0 of the
/// weekly cycle.
pub fn dataset_start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2018, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid date")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub seed: u64,
    pub years: usize,
    pub generator: String,
    pub network_hash: String,
    pub network: DistributionNetwork,
    /// Caller-supplied settings stored alongside, e.g. the experiment config.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadDataset {
    /// `[T, 2n]`: active power of every node, then reactive power.
    pub matrix: Tensor,
    pub start: NaiveDateTime,
    pub meta: DatasetMeta,
}

/// Per-class profile table used by [`generate_dataset`].
#[derive(Clone, Debug)]
pub struct DatasetGenerator {
    pub profiles: Vec<LoadProfileSpec>,
}

impl Default for DatasetGenerator {
    fn default() -> Self {
        Self {
            profiles: LoadClass::ALL.into_iter().map(LoadProfileSpec::default_for).collect(),
        }
    }
}

fn quantize(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

impl DatasetGenerator {
    pub fn profile(&self, class: LoadClass) -> Result<&LoadProfileSpec> {
        self.profiles
            .iter()
            .find(|p| p.load_class == class)
            .ok_or_else(|| Error::invalid(format!("no load profile for class {class}")))
    }

    /// Node `i` draws its noise from stream `i` of a ChaCha8 generator seeded
    /// with `seed`, so a 5-year dataset starts with the 1-year one. Values are
    /// rounded to 0.1 W so the CSV round-trip is exact.
    pub fn generate(&self, network: &DistributionNetwork, years: usize, seed: u64) -> Result<LoadDataset> {
        if years != 1 && years != 5 {
            return Err(Error::invalid(format!("years must be 1 or 5, got {years}")));
        }
        network.validate()?;
        let n = network.num_nodes();
        let hours = years * HOURS_PER_YEAR;
        let cols = 2 * n;
        let mut data = vec![0.0; hours * cols];
        for node in &network.nodes {
            let spec = self.profile(node.load_class)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(node.id as u64);
            let raw = synthesize_with(spec, hours, &mut rng)?;
            let p = scale_to_node(node, &unit_normalize(spec, &raw))?;
            let q = derive_reactive(&p, spec.power_factor)?;
            for t in 0..hours {
                data[t * cols + node.id] = quantize(p[t]);
                data[t * cols + n + node.id] = quantize(q[t]);
            }
        }
        Ok(LoadDataset {
            matrix: Tensor::new(vec![hours, cols], data)?,
            start: dataset_start(),
            meta: DatasetMeta {
                seed,
                years,
                generator: GENERATOR_VERSION.to_string(),
                network_hash: network.hash(),
                network: network.clone(),
                experiment: None,
            },
        })
    }
}

pub fn generate_dataset(network: &DistributionNetwork, years: usize, seed: u64) -> Result<LoadDataset> {
    DatasetGenerator::default().generate(network, years, seed)
}

/// `data.csv` → `data.meta.json`.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

fn format_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

impl LoadDataset {
    pub fn hours(&self) -> usize {
        self.matrix.shape()[0]
    }

    pub fn num_nodes(&self) -> usize {
        self.matrix.shape()[1] / 2
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let cols = self.matrix.shape()[1];
        &self.matrix.data()[t * cols..(t + 1) * cols]
    }

    pub fn timestamp(&self, t: usize) -> NaiveDateTime {
        self.start + TimeDelta::hours(t as i64)
    }

    pub fn header(&self) -> Vec<String> {
        let n = self.num_nodes();
        let mut h = vec!["timestamp".to_string()];
        h.extend((0..n).map(|i| format!("P_{i}")));
        h.extend((0..n).map(|i| format!("Q_{i}")));
        h
    }

    /// Writes the CSV plus its `.meta.json` sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.header())?;
        let mut buf = String::new();
        for t in 0..self.hours() {
            buf.clear();
            write!(buf, "{}", self.timestamp(t).format(TIMESTAMP_FORMAT)).expect("write to string");
            w.write_field(&buf)?;
            for v in self.row(t) {
                buf.clear();
                write!(buf, "{v:.4}").expect("write to string");
                w.write_field(&buf)?;
            }
            w.write_record(None::<&[u8]>)?;
        }
        w.flush()?;
        fs::write(meta_path(path), serde_json::to_string_pretty(&self.meta)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mpath = meta_path(path);
        let meta: DatasetMeta = serde_json::from_str(&fs::read_to_string(&mpath)?)
            .map_err(|e| format_error(&mpath, e.to_string()))?;
        if meta.network.hash() != meta.network_hash {
            return Err(format_error(&mpath, "network hash does not match the embedded network"));
        }
        let n = meta.network.num_nodes();
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut data = Vec::with_capacity(meta.years * HOURS_PER_YEAR * 2 * n);
        let mut start = None;
        let mut rows = 0usize;
        for record in r.records() {
            let record = record?;
            if record.len() != 2 * n + 1 {
                return Err(format_error(path, format!("row {rows} has {} fields, expected {}", record.len(), 2 * n + 1)));
            }
            let ts = NaiveDateTime::parse_from_str(&record[0], TIMESTAMP_FORMAT)
                .map_err(|e| format_error(path, format!("row {rows}: bad timestamp: {e}")))?;
            let t0 = *start.get_or_insert(ts);
            if ts != t0 + TimeDelta::hours(rows as i64) {
                return Err(format_error(path, format!("row {rows}: timestamps are not hourly")));
            }
            for field in record.iter().skip(1) {
                let v: f64 = field
                    .parse()
                    .map_err(|_| format_error(path, format!("row {rows}: bad number '{field}'")))?;
                data.push(v);
            }
            rows += 1;
        }
        if rows == 0 {
            return Err(format_error(path, "no data rows"));
        }
        let ds = LoadDataset {
            matrix: Tensor::new(vec![rows, 2 * n], data)?,
            start: start.unwrap_or_else(dataset_start),
            meta,
        };
        if header != ds.header() {
            return Err(format_error(path, "unexpected column header"));
        }
        if !ds.matrix.all_finite() {
            return Err(format_error(path, "non-finite value"));
        }
        Ok(ds)
    }
}

/// Sliding `(lookback → horizon)` view over a `[T, d]` matrix. Samples are
/// read on demand; sample `i` covers input rows `i..i+lookback` and target
/// rows `i+lookback..i+lookback+horizon`.
#[derive(Clone, Copy, Debug)]
pub struct WindowedSamples<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    lookback: usize,
    horizon: usize,
}

impl<'a> WindowedSamples<'a> {
    pub fn new(matrix: &'a Tensor, lookback: usize, horizon: usize) -> Result<Self> {
        let (rows, cols) = match matrix.shape() {
            [r, c] => (*r, *c),
            other => return Err(Error::shape("window", other, &[0, 0])),
        };
        if lookback == 0 || horizon == 0 {
            return Err(Error::invalid("lookback and horizon must be at least 1"));
        }
        if rows < lookback + horizon {
            return Err(Error::invalid(format!(
                "{rows} rows cannot hold a {lookback}-hour window plus {horizon}-hour target"
            )));
        }
        Ok(Self {
            data: matrix.data(),
            rows,
            cols,
            lookback,
            horizon,
        })
    }

    pub fn len(&self) -> usize {
        self.rows - self.lookback - self.horizon + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn width(&self) -> usize {
        self.cols
    }

    pub fn input(&self, i: usize) -> &'a [f64] {
        assert!(i < self.len(), "sample {i} out of range");
        &self.data[i * self.cols..(i + self.lookback) * self.cols]
    }

    pub fn target(&self, i: usize) -> &'a [f64] {
        assert!(i < self.len(), "sample {i} out of range");
        let s = i + self.lookback;
        &self.data[s * self.cols..(s + self.horizon) * self.cols]
    }

    /// Gathers `[B, lookback, d]` inputs and `[B, horizon·d]` targets.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Tensor)> {
        if indices.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let b = indices.len();
        let mut x = Vec::with_capacity(b * self.lookback * self.cols);
        let mut y = Vec::with_capacity(b * self.horizon * self.cols);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::invalid(format!("sample {i} out of range ({})", self.len())));
            }
            x.extend_from_slice(self.input(i));
            y.extend_from_slice(self.target(i));
        }
        Ok((
            Tensor::new(vec![b, self.lookback, self.cols], x)?,
            Tensor::new(vec![b, self.horizon * self.cols], y)?,
        ))
    }

    pub fn inputs(&self) -> Result<Tensor> {
        Ok(self.batch(&(0..self.len()).collect::<Vec<_>>())?.0)
    }

    pub fn targets(&self) -> Result<Tensor> {
        Ok(self.batch(&(0..self.len()).collect::<Vec<_>>())?.1)
    }
}

/// One-step windows over a dataset.
pub fn window(dataset: &LoadDataset, lookback: usize) -> Result<WindowedSamples<'_>> {
    WindowedSamples::new(&dataset.matrix, lookback, 1)
}
