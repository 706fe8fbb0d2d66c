//! Resolved subcommand configurations. Each is what gets echoed into
//! output headers and what `--config` reads back.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use jdvol::estimators::Engine;
use jdvol::inference::Regime;
use jdvol::{builtin_model, simulate_path, Kernel, ModelParams, SamplePath, SimConfig};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CliError, Result};
use crate::ingest::{ingest_csv, ColumnSpec};

mod defaults {
    pub fn kappa() -> f64 {
        1.0
    }
    pub fn sigma() -> f64 {
        0.5
    }
    pub fn lambda() -> f64 {
        1.0
    }
    pub fn jump_sd() -> f64 {
        0.2
    }
    pub fn substeps() -> usize {
        10
    }
    pub fn time_col() -> String {
        "t".into()
    }
    pub fn price_col() -> String {
        "p".into()
    }
    pub fn phi() -> f64 {
        1.0
    }
    pub fn grid_points() -> usize {
        25
    }
    pub fn alpha() -> f64 {
        0.05
    }
    pub fn regime() -> jdvol::inference::Regime {
        jdvol::inference::Regime::RatioH
    }
    pub fn kernel() -> jdvol::Kernel {
        jdvol::Kernel::Epanechnikov
    }
}

/// A catalog model and the simulation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model: String,
    #[serde(default = "defaults::kappa")]
    pub kappa: f64,
    #[serde(default)]
    pub mean: f64,
    #[serde(default = "defaults::sigma")]
    pub sigma: f64,
    #[serde(default = "defaults::lambda")]
    pub lambda: f64,
    #[serde(default = "defaults::jump_sd")]
    pub jump_sd: f64,
    pub n: usize,
    pub delta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(default = "defaults::substeps")]
    pub substeps: usize,
}

impl ModelConfig {
    pub fn params(&self) -> ModelParams {
        ModelParams {
            kappa: self.kappa,
            mean: self.mean,
            sigma: self.sigma,
            lambda: self.lambda,
            jump_sd: self.jump_sd,
        }
    }

    pub fn simulate(&self) -> Result<SamplePath<f64>> {
        let model = builtin_model::<f64>(&self.model, self.params())?;
        let cfg = SimConfig::new(self.x0.unwrap_or(self.mean), self.n, self.delta, self.seed).with_substeps(self.substeps);
        Ok(simulate_path(&model, &cfg)?)
    }
}

/// Where the sample path comes from: a CSV file or a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default = "defaults::time_col")]
    pub time_col: String,
    #[serde(default = "defaults::price_col")]
    pub price_col: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resample_delta: Option<f64>,
    /// Use prices as they are instead of their logarithms.
    #[serde(default)]
    pub levels: bool,
    #[serde(flatten, default, skip_serializing_if = "Option::is_none")]
    pub simulated: Option<ModelConfig>,
}

impl InputConfig {
    pub fn load(&self) -> Result<SamplePath<f64>> {
        match (&self.input, &self.simulated) {
            (Some(path), _) => {
                let cols = ColumnSpec {
                    time: self.time_col.clone(),
                    price: self.price_col.clone(),
                };
                ingest_csv(path, &cols, self.resample_delta, !self.levels)
            }
            (None, Some(sim)) => sim.simulate(),
            (None, None) => Err(CliError::Usage(
                "no input: pass --input FILE or a model with --model, --n and --delta".into(),
            )),
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match (&self.input, &self.simulated) {
            (None, Some(sim)) => Some(sim.seed),
            _ => None,
        }
    }
}

/// A bandwidth given as a number or left to the plug-in rule.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum BandwidthSpec {
    #[default]
    Auto,
    Value(f64),
}

impl FromStr for BandwidthSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(BandwidthSpec::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(BandwidthSpec::Value(v)),
            _ => Err(format!("expected 'auto' or a positive number, got '{s}'")),
        }
    }
}

impl fmt::Display for BandwidthSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BandwidthSpec::Auto => f.write_str("auto"),
            BandwidthSpec::Value(v) => write!(f, "{v}"),
        }
    }
}

impl Serialize for BandwidthSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BandwidthSpec::Auto => s.serialize_str("auto"),
            BandwidthSpec::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for BandwidthSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(BandwidthSpec::Value(v)),
            Raw::Int(v) => Ok(BandwidthSpec::Value(v as f64)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    #[serde(default)]
    pub h: BandwidthSpec,
    #[serde(default)]
    pub eps: BandwidthSpec,
    /// Ratio `h/ε` used when one or both bandwidths are automatic.
    #[serde(default = "defaults::phi")]
    pub phi: f64,
    #[serde(default = "defaults::kernel")]
    pub kernel: Kernel,
    #[serde(default)]
    pub engine: Engine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateConfig {
    #[serde(flatten)]
    pub source: InputConfig,
    #[serde(flatten)]
    pub smoothing: SmoothingConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    #[serde(default = "defaults::grid_points")]
    pub grid_points: usize,
    #[serde(default = "defaults::regime")]
    pub regime: Regime,
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthConfig {
    #[serde(flatten)]
    pub source: InputConfig,
    #[serde(default = "defaults::phi")]
    pub phi: f64,
    #[serde(default = "defaults::kernel")]
    pub kernel: Kernel,
    #[serde(default)]
    pub engine: Engine,
    /// Pilot level; the median of the path when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaConfig {
    #[serde(default = "defaults::kernel")]
    pub kernel: Kernel,
    pub phi: f64,
}
