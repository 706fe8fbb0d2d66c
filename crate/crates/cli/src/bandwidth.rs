//! Data-driven bandwidth selection for the command line.

use jdvol::estimators::{default_grid, double_smoothed_moments, level_quantile, Engine, EstimatorConfig};
use jdvol::inference::{empirical_bias_inputs, optimal_bandwidth, rule_of_thumb_bandwidth};
use jdvol::{Error, Kernel, SamplePath};
use serde::Serialize;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthSource {
    PlugIn,
    RuleOfThumb,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolvedBandwidths {
    pub h: f64,
    pub eps: f64,
    pub source: BandwidthSource,
}

/// Plug-in `(h, ε = h/φ)` from a pilot fit at the normal-reference
/// bandwidth. Falls back to the pilot itself when the estimated bias
/// bracket vanishes or the plug-in value leaves the range of the data.
pub fn plugin_bandwidths(
    path: &SamplePath<f64>,
    kernel: Kernel,
    engine: Engine,
    phi: f64,
    x: Option<f64>,
) -> Result<ResolvedBandwidths> {
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(Error::InvalidArgument(format!("phi must be positive, got {phi}")).into());
    }
    let h0 = rule_of_thumb_bandwidth(path);
    let fallback = ResolvedBandwidths {
        h: h0,
        eps: h0 / phi,
        source: BandwidthSource::RuleOfThumb,
    };
    if !(h0 > 0.0) {
        return Err(Error::Numerical("path has no spread; cannot choose a bandwidth".into()).into());
    }
    let x = x.unwrap_or_else(|| level_quantile(path, 0.5));
    let grid = default_grid(path, 25);
    let pilot_cfg = EstimatorConfig::new(h0, h0 / phi, kernel, grid).with_engine(engine);
    let pilot = double_smoothed_moments(path, &pilot_cfg)?;
    let at_x = double_smoothed_moments(path, &EstimatorConfig { grid: vec![x], ..pilot_cfg })?[0];

    let attempt = || -> jdvol::Result<f64> {
        let bias = empirical_bias_inputs(&pilot, path, kernel, h0, x)?;
        Ok(optimal_bandwidth(at_x.m4, bias.bracket(), at_x.local_time, kernel, phi)?.h)
    };
    let range = level_quantile(path, 1.0) - level_quantile(path, 0.0);
    match attempt() {
        Ok(h) if h.is_finite() && h > 0.0 && h < range => Ok(ResolvedBandwidths {
            h,
            eps: h / phi,
            source: BandwidthSource::PlugIn,
        }),
        Ok(h) => {
            log::warn!("plug-in bandwidth {h} outside the data range; using the normal-reference rule");
            Ok(fallback)
        }
        Err(Error::Numerical(msg)) => {
            log::warn!("{msg}; using the normal-reference rule");
            Ok(fallback)
        }
        Err(e) => Err(e.into()),
    }
}
