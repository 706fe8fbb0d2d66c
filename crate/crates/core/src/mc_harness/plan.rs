use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::Engine;
use crate::inference::Regime;
use crate::kernels::Kernel;
use crate::model_sim::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanRegime {
    SmallH,
    RatioH,
    Stationary,
    BnComparison,
}

/// A Monte Carlo experiment, stored as flat TOML.
///
/// Bandwidth schedule per rung with `n` observations:
/// `ε = eps_scale·n^{−eps_rate}`, and `h = φ·ε` when `phi` is set,
/// otherwise `h = h_scale·ε^{h_power}`. In comparison plans the
/// single-smoothed bandwidth is `h_bn = bn_h_scale·n^{−bn_h_rate}`, and
/// `h_from_bn` makes the double estimator reuse it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub name: String,
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
    pub regime: PlanRegime,
    pub ladder_n: Vec<usize>,
    /// One entry for all rungs, or one per rung.
    pub ladder_delta: Vec<f64>,
    pub eps_scale: f64,
    #[serde(default)]
    pub eps_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(default = "defaults::one")]
    pub h_scale: f64,
    #[serde(default = "defaults::h_power")]
    pub h_power: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bn_h_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bn_h_rate: Option<f64>,
    #[serde(default)]
    pub h_from_bn: bool,
    pub replications: usize,
    #[serde(default)]
    pub grid_point: f64,
    /// Starting level; the model's long-run mean when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    pub seed_base: u64,
    #[serde(default = "defaults::kernel")]
    pub kernel: Kernel,
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    #[serde(default = "defaults::substeps")]
    pub substeps: usize,
    #[serde(default)]
    pub engine: Engine,
}

mod defaults {
    use crate::kernels::Kernel;

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
    pub fn one() -> f64 {
        1.0
    }
    pub fn h_power() -> f64 {
        1.5
    }
    pub fn kernel() -> Kernel {
        Kernel::Epanechnikov
    }
    pub fn alpha() -> f64 {
        0.05
    }
    pub fn substeps() -> usize {
        10
    }
}

/// Resolved sampling and smoothing parameters of one ladder rung.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rung {
    pub n: usize,
    pub delta: f64,
    pub h: f64,
    pub eps: f64,
    pub h_bn: Option<f64>,
}

impl ExperimentPlan {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let plan: Self = toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("plan: {e}")))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("plan serializes")
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            kappa: self.kappa,
            mean: self.mean,
            sigma: self.sigma,
            lambda: self.lambda,
            jump_sd: self.jump_sd,
        }
    }

    pub fn start_level(&self) -> f64 {
        self.x0.unwrap_or(self.mean)
    }

    /// Inference regime used to standardize the double estimator.
    pub fn inference_regime(&self) -> Regime {
        match self.regime {
            PlanRegime::SmallH => Regime::SmallH,
            PlanRegime::RatioH | PlanRegime::BnComparison => Regime::RatioH,
            PlanRegime::Stationary => Regime::Stationary,
        }
    }

    /// Keeps only rung `k`.
    pub fn restricted_to_rung(&self, k: usize) -> Result<Self> {
        if k >= self.ladder_n.len() {
            return invalid(format!("rung {k} out of range (ladder has {})", self.ladder_n.len()));
        }
        let mut p = self.clone();
        p.ladder_n = vec![self.ladder_n[k]];
        p.ladder_delta = vec![self.delta_at(k)];
        Ok(p)
    }

    pub fn with_replications(mut self, replications: usize) -> Self {
        self.replications = replications;
        self
    }

    fn delta_at(&self, k: usize) -> f64 {
        if self.ladder_delta.len() == 1 {
            self.ladder_delta[0]
        } else {
            self.ladder_delta[k]
        }
    }

    pub fn rungs(&self) -> Vec<Rung> {
        (0..self.ladder_n.len())
            .map(|k| {
                let n = self.ladder_n[k];
                let nf = n as f64;
                let eps = self.eps_scale * nf.powf(-self.eps_rate);
                let h_bn = match (self.bn_h_scale, self.bn_h_rate) {
                    (Some(s), r) => Some(s * nf.powf(-r.unwrap_or(0.0))),
                    _ => None,
                };
                let h = match (self.h_from_bn, h_bn, self.phi) {
                    (true, Some(hb), _) => hb,
                    (_, _, Some(phi)) => phi * eps,
                    _ => self.h_scale * eps.powf(self.h_power),
                };
                Rung { n, delta: self.delta_at(k), h, eps, h_bn }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.ladder_n.is_empty() {
            return invalid("ladder is empty");
        }
        if self.ladder_n.iter().any(|&n| n < 2) {
            return invalid("every rung needs n >= 2");
        }
        if self.ladder_delta.len() != 1 && self.ladder_delta.len() != self.ladder_n.len() {
            return invalid("ladder_delta must have one entry or one per rung");
        }
        if self.ladder_delta.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return invalid("ladder_delta entries must be positive");
        }
        if self.replications == 0 {
            return invalid("replications must be at least 1");
        }
        if !(self.eps_scale > 0.0) || !(self.eps_rate >= 0.0) {
            return invalid("eps_scale must be positive and eps_rate nonnegative");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return invalid("alpha must lie in (0, 1)");
        }
        if self.substeps == 0 {
            return invalid("substeps must be at least 1");
        }
        if !self.grid_point.is_finite() {
            return invalid("grid_point must be finite");
        }
        if let Some(phi) = self.phi {
            if !(phi > 0.0 && phi.is_finite()) {
                return invalid("phi must be positive");
            }
        }
        let multi = self.ladder_n.len() > 1;
        if multi && self.ladder_n.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("ladder_n must be strictly increasing");
        }
        if multi && self.regime != PlanRegime::BnComparison && self.eps_rate <= 0.0 {
            return invalid("eps must shrink along the ladder (eps_rate > 0)");
        }
        match self.regime {
            PlanRegime::SmallH => {
                if self.phi.is_some() {
                    return invalid("small_h plans use h = h_scale·eps^h_power, not phi");
                }
                if !(self.h_power > 1.0 && self.h_scale > 0.0) {
                    return invalid("small_h needs h_power > 1 and h_scale > 0 so that h/eps -> 0");
                }
            }
            PlanRegime::RatioH => {
                if self.phi.is_none() {
                    return invalid("ratio_h plans require phi");
                }
            }
            PlanRegime::Stationary => {
                if self.phi.is_none() && !(self.h_power > 1.0 && self.h_scale > 0.0) {
                    return invalid("stationary plans need phi or h_power > 1");
                }
            }
            PlanRegime::BnComparison => {
                if self.bn_h_scale.is_none() {
                    return invalid("bn_comparison plans require bn_h_scale");
                }
                if !self.h_from_bn && self.phi.is_none() {
                    return invalid("bn_comparison plans set the double bandwidth via phi or h_from_bn");
                }
                if self.bn_h_scale.is_some_and(|s| !(s > 0.0)) || self.bn_h_rate.is_some_and(|r| !(r >= 0.0)) {
                    return invalid("bn bandwidth schedule must be positive and nonincreasing");
                }
            }
        }
        if self.regime != PlanRegime::BnComparison && (self.bn_h_scale.is_some() || self.h_from_bn) {
            return invalid("bn_* keys are only valid in bn_comparison plans");
        }
        Ok(())
    }
}
