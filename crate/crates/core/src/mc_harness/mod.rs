//! Monte Carlo experiments: simulate replications along a ladder of sample
//! sizes, estimate `M²` at one level, and summarize bias, spread,
//! normality of the standardized errors and interval coverage.

mod plan;

pub use plan::{ExperimentPlan, PlanRegime, Rung};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::{double_smoothed_moments, single_smoothed_m2, EstimatorConfig};
use crate::inference::{bias_constant, confidence_interval, BiasInputs, BiasSource, Regime};
use crate::kernels::theta_phi;
use crate::model_sim::{builtin_model, simulate_path, ModelSpec, SamplePath, SimConfig};
use crate::scalar::Scalar;
use crate::stats::{ks_standard_normal, mean, median, ols, variance};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "JDVOL_THREADS";

/// Worker count from `JDVOL_THREADS`, else all available cores.
pub fn worker_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(worker_threads())
        .build()
        .map_err(|e| Error::Numerical(format!("thread pool: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RungReport {
    pub n: usize,
    pub delta: f64,
    pub h: f64,
    pub eps: f64,
    /// Replications with a usable estimate.
    pub replications: usize,
    /// Replications where no observation reached the level.
    pub failed: usize,
    pub theta: f64,
    pub gamma: f64,
    pub bias: f64,
    pub sd: f64,
    pub rmse: f64,
    pub median_abs_rel_error: f64,
    pub mean_local_time: f64,
    /// Mean and standard deviation of the standardized errors.
    pub z_mean: f64,
    pub z_sd: f64,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub coverage: f64,
    /// `ε⁵·mean L̂`, which should shrink for the bias to be negligible.
    pub eps5_local_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_bn: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bn_bias: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bn_sd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bn_rmse: Option<f64>,
}

/// Slope of `log RMSE` on `log(ε·mean L̂)` across rungs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
}

/// Empirical MSE of two estimators on identical paths at the largest rung.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub label_a: String,
    pub label_b: String,
    pub mse_a: f64,
    pub mse_b: f64,
    /// `mse_a / mse_b`.
    pub ratio: f64,
}

impl Comparison {
    pub fn new(label_a: impl Into<String>, mse_a: f64, label_b: impl Into<String>, mse_b: f64) -> Self {
        Self {
            label_a: label_a.into(),
            label_b: label_b.into(),
            mse_a,
            mse_b,
            ratio: mse_a / mse_b,
        }
    }

    pub fn swapped(&self) -> Self {
        Self::new(self.label_b.clone(), self.mse_b, self.label_a.clone(), self.mse_a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub plan: String,
    pub model: String,
    pub regime: PlanRegime,
    pub grid_point: f64,
    pub truth_m2: f64,
    pub truth_m4: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_fit: Option<RateFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Comparison>,
    pub rungs: Vec<RungReport>,
}

impl ExperimentReport {
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }

    pub fn last_rung(&self) -> &RungReport {
        self.rungs.last().expect("reports have at least one rung")
    }
}

/// Outcome of one replication at one rung.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Replication {
    m2: f64,
    local_time: f64,
    z: f64,
    covered: bool,
    bn_m2: Option<f64>,
}

/// Runs `plan` on its catalog model.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    plan.validate()?;
    let model = builtin_model::<f64>(&plan.model, plan.params())?;
    run_experiment_with_model(plan, &model)
}

/// Runs both estimators of a comparison plan on the same paths and
/// reports their MSE ratio (double over single).
pub fn compare_with_bn(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    if plan.regime != PlanRegime::BnComparison {
        return invalid(format!("compare_with_bn needs a bn_comparison plan, got {:?}", plan.regime));
    }
    run_experiment(plan)
}

/// As [`run_experiment`] with a caller-supplied model; `plan.model` is
/// used only as a label.
pub fn run_experiment_with_model(plan: &ExperimentPlan, model: &ModelSpec<f64>) -> Result<ExperimentReport> {
    plan.validate()?;
    let x = plan.grid_point;
    let missing = || {
        Error::InvalidArgument(format!(
            "model '{}' has no analytic jump moments; supply them with ModelSpec::with_jump_moment",
            model.name
        ))
    };
    let m2 = model.infinitesimal_moment(x, 2).ok_or_else(missing)?;
    let m4 = model.infinitesimal_moment(x, 4).ok_or_else(missing)?;
    let bias_inputs = analytic_bias_inputs(model, x)?;
    let pool = thread_pool()?;

    let mut rungs = Vec::with_capacity(plan.ladder_n.len());
    for rung in plan.rungs() {
        let regime = plan.inference_regime();
        let phi = match plan.regime {
            PlanRegime::SmallH => None,
            PlanRegime::RatioH | PlanRegime::BnComparison => Some(rung.h / rung.eps),
            PlanRegime::Stationary => plan.phi,
        };
        let theta = match phi {
            Some(phi) if regime != Regime::SmallH => theta_phi(plan.kernel, phi)?,
            _ => 1.0,
        };
        let gamma = bias_constant(&bias_inputs, regime, plan.kernel, phi)?;
        let reps: Vec<Replication> = pool.install(|| {
            (0..plan.replications)
                .into_par_iter()
                .map(|r| replicate(plan, model, &rung, r as u64, m2, m4, gamma, theta, regime))
                .collect::<Result<Vec<Option<Replication>>>>()
        })?
        .into_iter()
        .flatten()
        .collect();
        rungs.push(summarize(plan, &rung, &reps, m2, m4, gamma, theta)?);
    }

    if rungs.windows(2).any(|w| w[1].eps5_local_time > w[0].eps5_local_time) {
        let trail: Vec<f64> = rungs.iter().map(|r| r.eps5_local_time).collect();
        log::warn!("plan '{}': eps^5 * mean local time grows along the ladder {trail:?}; the bias term may not vanish", plan.name);
    }
    let rate_fit = fit_rate(&rungs);
    let comparison = (plan.regime == PlanRegime::BnComparison).then(|| {
        let last = rungs.last().expect("nonempty ladder");
        let bn = last.bn_rmse.unwrap_or(f64::NAN);
        Comparison::new("double", last.rmse * last.rmse, "single", bn * bn)
    });
    Ok(ExperimentReport {
        plan: plan.name.clone(),
        model: plan.model.clone(),
        regime: plan.regime,
        grid_point: x,
        truth_m2: m2,
        truth_m4: m4,
        rate_fit,
        comparison,
        rungs,
    })
}

fn analytic_bias_inputs(model: &ModelSpec<f64>, x: f64) -> Result<BiasInputs<f64>> {
    let (d1, d2) = model.m2_derivatives(x).ok_or_else(|| {
        Error::InvalidArgument(format!("model '{}' has no analytic M2 derivatives", model.name))
    })?;
    let score = if d1 == 0.0 {
        0.0
    } else {
        model.score(x).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "model '{}' needs a speed or stationary density for the bias term at x = {x}",
                model.name
            ))
        })?
    };
    BiasInputs::new(d1, d2, score, BiasSource::Analytic)
}

#[allow(clippy::too_many_arguments)]
fn replicate(
    plan: &ExperimentPlan,
    model: &ModelSpec<f64>,
    rung: &Rung,
    r: u64,
    m2: f64,
    m4: f64,
    gamma: f64,
    theta: f64,
    regime: Regime,
) -> Result<Option<Replication>> {
    let x = plan.grid_point;
    let cfg = SimConfig::new(plan.start_level(), rung.n, rung.delta, plan.seed_base.wrapping_add(r))
        .with_substeps(plan.substeps);
    let path = simulate_path(model, &cfg)?;
    let est_cfg = EstimatorConfig::new(rung.h, rung.eps, plan.kernel, vec![x]).with_engine(plan.engine);
    let est = double_smoothed_moments(&path, &est_cfg)?[0];
    if !est.m2.is_finite() || !(est.local_time > 0.0) {
        return Ok(None);
    }
    let norm = rung.eps * est.local_time;
    let z = norm.sqrt() * (est.m2 - m2 - rung.eps * rung.eps * gamma) / (0.5 * theta * m4).sqrt();
    let ci = confidence_interval(x, est.m2, est.m4, gamma, rung.eps, est.local_time, plan.alpha, regime, theta)?;
    let bn_m2 = match rung.h_bn {
        Some(hb) => Some(single_smoothed_m2(&path, plan.kernel, hb, &[x])?[0].m2),
        None => None,
    };
    Ok(Some(Replication {
        m2: est.m2,
        local_time: est.local_time,
        z,
        covered: ci.covers(m2),
        bn_m2,
    }))
}

/// Bias, population standard deviation and RMSE of `values` around `truth`.
fn error_summary(values: &[f64], truth: f64) -> (f64, f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let bias = mean(values) - truth;
    let sd = variance(values).sqrt();
    (bias, sd, (bias * bias + sd * sd).sqrt())
}

fn summarize(
    plan: &ExperimentPlan,
    rung: &Rung,
    reps: &[Replication],
    m2: f64,
    _m4: f64,
    gamma: f64,
    theta: f64,
) -> Result<RungReport> {
    let est: Vec<f64> = reps.iter().map(|r| r.m2).collect();
    let (bias, sd, rmse) = error_summary(&est, m2);
    let rel: Vec<f64> = est.iter().map(|&v| ((v - m2) / m2).abs()).collect();
    let lts: Vec<f64> = reps.iter().map(|r| r.local_time).collect();
    let mean_lt = if lts.is_empty() { f64::NAN } else { mean(&lts) };
    let zs: Vec<f64> = reps.iter().map(|r| r.z).collect();
    let (z_mean, z_sd, ks_statistic, ks_p_value) = if !zs.is_empty() && zs.iter().all(|z| z.is_finite()) {
        let ks = ks_standard_normal(&zs)?;
        (mean(&zs), variance(&zs).sqrt(), ks.statistic, ks.p_value)
    } else {
        (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
    };
    let coverage = if reps.is_empty() {
        f64::NAN
    } else {
        reps.iter().filter(|r| r.covered).count() as f64 / reps.len() as f64
    };
    let (bn_bias, bn_sd, bn_rmse) = if rung.h_bn.is_some() {
        let bn: Vec<f64> = reps.iter().filter_map(|r| r.bn_m2).filter(|v| v.is_finite()).collect();
        let (b, s, r) = error_summary(&bn, m2);
        (Some(b), Some(s), Some(r))
    } else {
        (None, None, None)
    };
    Ok(RungReport {
        n: rung.n,
        delta: rung.delta,
        h: rung.h,
        eps: rung.eps,
        replications: reps.len(),
        failed: plan.replications - reps.len(),
        theta,
        gamma,
        bias,
        sd,
        rmse,
        median_abs_rel_error: median(&rel),
        mean_local_time: mean_lt,
        z_mean,
        z_sd,
        ks_statistic,
        ks_p_value,
        coverage,
        eps5_local_time: rung.eps.powi(5) * mean_lt,
        h_bn: rung.h_bn,
        bn_bias,
        bn_sd,
        bn_rmse,
    })
}

fn fit_rate(rungs: &[RungReport]) -> Option<RateFit> {
    if rungs.len() < 2 {
        return None;
    }
    let mut xs = Vec::with_capacity(rungs.len());
    let mut ys = Vec::with_capacity(rungs.len());
    for r in rungs {
        let scale = r.eps * r.mean_local_time;
        if !(scale > 0.0 && r.rmse > 0.0 && r.rmse.is_finite()) {
            return None;
        }
        xs.push(scale.ln());
        ys.push(r.rmse.ln());
    }
    let fit = ols(&xs, &ys).ok()?;
    Some(RateFit {
        slope: fit.slope,
        slope_se: fit.slope_se,
        intercept: fit.intercept,
    })
}

/// `max_i |X_{i+1} − X_i| / √(Δ·log(1/Δ))`, a grid proxy for the modulus of
/// continuity of the path. NaN when `Δ ≥ 1`.
pub fn path_modulus_diagnostic<T: Scalar>(path: &SamplePath<T>) -> T {
    let delta = path.delta();
    if delta >= T::one() {
        return T::nan();
    }
    let max = path.increments().map(|d| d.abs()).fold(T::zero(), T::max);
    max / (delta * (T::one() / delta).ln()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_sim::ModelParams;

    fn small_plan() -> ExperimentPlan {
        ExperimentPlan::from_toml_str(
            r#"
            name = "tiny"
            model = "ou-jump"
            regime = "small_h"
            ladder_n = [2000, 4000]
            ladder_delta = [0.01]
            eps_scale = 1.0
            eps_rate = 0.1666667
            replications = 8
            seed_base = 42
            "#,
        )
        .unwrap()
    }

    #[test]
    fn rmse_decomposition_and_ranges() {
        let rep = run_experiment(&small_plan()).unwrap();
        assert_eq!(rep.rungs.len(), 2);
        for r in &rep.rungs {
            assert!((r.rmse * r.rmse - (r.bias * r.bias + r.sd * r.sd)).abs() < 1e-9);
            assert!((0.0..=1.0).contains(&r.coverage));
            assert_eq!(r.replications + r.failed, 8);
        }
        assert!(rep.rate_fit.is_some());
        assert!((rep.truth_m2 - 0.29).abs() < 1e-15);
    }

    #[test]
    fn deterministic_report_bytes() {
        let a = run_experiment(&small_plan()).unwrap().to_toml_string();
        let b = run_experiment(&small_plan()).unwrap().to_toml_string();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_zero_model() {
        let mut plan = small_plan();
        plan.ladder_n = vec![500];
        plan.replications = 1;
        plan.sigma = 0.0;
        plan.lambda = 0.0;
        let rep = run_experiment(&plan).unwrap();
        let r = &rep.rungs[0];
        assert_eq!(rep.truth_m2, 0.0);
        assert_eq!(r.rmse, 0.0);
        assert_eq!(r.bias, 0.0);
        assert_eq!(r.coverage, 1.0);
        assert!(rep.rate_fit.is_none());
    }

    #[test]
    fn plan_validation() {
        let base = small_plan();
        let mut p = base.clone();
        p.ladder_n.clear();
        assert!(p.validate().is_err());
        let mut p = base.clone();
        p.replications = 0;
        assert!(p.validate().is_err());
        let mut p = base.clone();
        p.h_power = 1.0;
        assert!(p.validate().is_err());
        let mut p = base.clone();
        p.regime = PlanRegime::RatioH;
        assert!(p.validate().is_err());
        p.phi = Some(1.0);
        assert!(p.validate().is_ok());
        let mut p = base.clone();
        p.eps_rate = 0.0;
        assert!(p.validate().is_err());
        assert!(ExperimentPlan::from_toml_str("name = 1").is_err());
        let text = base.to_toml_string();
        assert_eq!(ExperimentPlan::from_toml_str(&text).unwrap(), base);
    }

    #[test]
    fn schedule_resolution() {
        let p = small_plan();
        let r = p.rungs();
        let eps = 2000f64.powf(-0.1666667);
        assert!((r[0].eps - eps).abs() < 1e-15);
        assert!((r[0].h - eps.powf(1.5)).abs() < 1e-15);
        assert!(r[1].eps < r[0].eps && r[1].h / r[1].eps < r[0].h / r[0].eps);
    }

    #[test]
    fn compare_requires_bn_plan() {
        assert!(compare_with_bn(&small_plan()).is_err());
    }

    #[test]
    fn comparison_swap_inverts_ratio() {
        let c = Comparison::new("a", 0.3, "b", 0.7);
        let s = c.swapped();
        assert_eq!(s.label_a, "b");
        assert_eq!(s.ratio, 0.7 / 0.3);
        assert!((s.ratio * c.ratio - 1.0).abs() < 1e-15);
        assert_eq!(s.swapped(), c);
    }

    #[test]
    fn missing_moments_rejected() {
        let model = builtin_model::<f64>("ou-jump", ModelParams::default()).unwrap();
        let bare = ModelSpec::new(
            "bare",
            |x: f64| -x,
            |_| 0.5,
            |_| 1.0,
            |_x: f64, _rng: &mut dyn rand::RngCore| 0.1,
        );
        let err = run_experiment_with_model(&small_plan(), &bare).unwrap_err();
        assert!(err.to_string().contains("with_jump_moment"), "{err}");
        assert!(run_experiment_with_model(&small_plan().restricted_to_rung(0).unwrap().with_replications(1), &model).is_ok());
    }

    #[test]
    fn modulus_of_constant_path_is_zero() {
        let p = SamplePath::new(vec![1.0; 10], 0.01).unwrap();
        assert_eq!(path_modulus_diagnostic(&p), 0.0);
        let p = SamplePath::new(vec![0.0f64, 1.0], 2.0).unwrap();
        assert!(path_modulus_diagnostic(&p).is_nan());
    }

    #[test]
    fn worker_thread_count_positive() {
        assert!(worker_threads() >= 1);
    }
}
