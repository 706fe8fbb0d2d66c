//! CSV tick ingestion and previous-tick resampling.

use std::path::Path;

use jdvol::SamplePath;

use crate::error::{CliError, Result};

/// Relative tolerance on native sample spacing.
pub const SPACING_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSpec {
    pub time: String,
    pub price: String,
}

impl Default for ColumnSpec {
    fn default() -> Self {
        Self {
            time: "t".into(),
            price: "p".into(),
        }
    }
}

/// Raw observations in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct TickSeries {
    pub timestamps: Vec<f64>,
    pub prices: Vec<f64>,
    pub source: String,
}

impl TickSeries {
    /// Values on `t₀ + kΔ`, carrying the last observation forward.
    pub fn resample_previous_tick(&self, delta: f64) -> Result<(Vec<f64>, f64)> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(CliError::Usage(format!("resample delta must be positive, got {delta}")));
        }
        let t0 = self.timestamps[0];
        let span = self.timestamps[self.timestamps.len() - 1] - t0;
        let tol = 1e-9 * delta;
        let steps = ((span + tol) / delta).floor() as usize;
        let mut out = Vec::with_capacity(steps + 1);
        let mut j = 0;
        for k in 0..=steps {
            let g = t0 + k as f64 * delta;
            while j + 1 < self.timestamps.len() && self.timestamps[j + 1] <= g + tol {
                j += 1;
            }
            out.push(self.prices[j]);
        }
        Ok((out, delta))
    }

    /// Values at native spacing, which must be uniform.
    pub fn native(&self) -> Result<(Vec<f64>, f64)> {
        let ts = &self.timestamps;
        let delta = ts[1] - ts[0];
        for (i, w) in ts.windows(2).enumerate() {
            let gap = w[1] - w[0];
            if (gap - delta).abs() > SPACING_TOLERANCE * delta {
                return Err(CliError::Data(format!(
                    "{}: non-uniform spacing at row {}: gap {gap} differs from {delta}; pass a resample delta",
                    self.source,
                    i + 2
                )));
            }
        }
        Ok((self.prices.clone(), delta))
    }

    pub fn to_sample_path(&self, resample_delta: Option<f64>, log_prices: bool) -> Result<SamplePath<f64>> {
        let (mut values, delta) = match resample_delta {
            Some(d) => self.resample_previous_tick(d)?,
            None => self.native()?,
        };
        if log_prices {
            if let Some(p) = values.iter().find(|&&p| !(p > 0.0)) {
                return Err(CliError::Data(format!(
                    "{}: log transform needs positive prices, found {p}",
                    self.source
                )));
            }
            values.iter_mut().for_each(|p| *p = p.ln());
        }
        Ok(SamplePath::new(values, delta)?)
    }
}

/// Reads a headed, comma-separated file. Lines starting with `#` are
/// skipped. Row numbers in errors count data rows from 1.
pub fn read_ticks(path: &Path, columns: &ColumnSpec) -> Result<TickSeries> {
    let source = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{source}: {e}")))?;
    let headers = reader.headers().map_err(|e| CliError::Data(format!("{source}: {e}")))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Data(format!("{source}: no column named '{name}' (have {:?})", headers)))
    };
    let (ti, pi) = (find(&columns.time)?, find(&columns.price)?);

    let mut timestamps = Vec::new();
    let mut prices = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let row = k + 1;
        let record = record.map_err(|e| CliError::Data(format!("{source}: row {row}: {e}")))?;
        let cell = |idx: usize, name: &str| -> Result<f64> {
            let raw = record.get(idx).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Data(format!("{source}: row {row}, column '{name}': cannot parse '{raw}'")))
        };
        let t = cell(ti, &columns.time)?;
        let p = cell(pi, &columns.price)?;
        if let Some(&prev) = timestamps.last() {
            if !(t > prev) {
                return Err(CliError::Data(format!("{source}: non-monotone timestamp at row {row}")));
            }
        }
        timestamps.push(t);
        prices.push(p);
    }
    if timestamps.len() < 2 {
        return Err(CliError::Data(format!("{source}: need at least 2 rows, found {}", timestamps.len())));
    }
    Ok(TickSeries { timestamps, prices, source })
}

/// Reads `path` and returns a uniformly spaced path, resampled by previous
/// tick when `resample_delta` is given and log-transformed when
/// `log_prices` is set.
pub fn ingest_csv(
    path: impl AsRef<Path>,
    columns: &ColumnSpec,
    resample_delta: Option<f64>,
    log_prices: bool,
) -> Result<SamplePath<f64>> {
    read_ticks(path.as_ref(), columns)?.to_sample_path(resample_delta, log_prices)
}
