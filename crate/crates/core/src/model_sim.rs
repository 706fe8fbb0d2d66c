//! Jump-diffusion model specifications and path simulation.
//!
//! A model is `dX = [μ(X−) − λ(X−)E_Y c(X−, y)] dt + σ(X−) dW + dJ` with `J`
//! compound Poisson of state-dependent intensity `λ` and jump sizes
//! `c(x, y)`, `y ~ Π`. Paths are generated by an Euler scheme on the
//! compensated form with coefficients frozen at the left endpoint of each
//! substep.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quad;
use crate::scalar::Scalar;

pub type CoefficientFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;
pub type JumpSampler<T> = Arc<dyn Fn(T, &mut dyn RngCore) -> T + Send + Sync>;
/// `(x, k) ↦ E_Y[c(x, y)^k]`.
pub type JumpMoment<T> = Arc<dyn Fn(T, u32) -> T + Send + Sync>;

/// Coefficients of a jump-diffusion plus whatever ground truth is known.
#[derive(Clone)]
pub struct ModelSpec<T> {
    pub name: String,
    pub drift: CoefficientFn<T>,
    pub diffusion: CoefficientFn<T>,
    pub jump_intensity: CoefficientFn<T>,
    pub jump_size_sampler: JumpSampler<T>,
    pub jump_size_moment: Option<JumpMoment<T>>,
    pub stationary_density: Option<CoefficientFn<T>>,
    /// Invariant (speed) density up to scale.
    pub speed_density: Option<CoefficientFn<T>>,
    /// Open admissible interval `(l, u)`.
    pub state_space: (T, T),
}

impl<T: Scalar> fmt::Debug for ModelSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("state_space", &self.state_space)
            .field("jump_size_moment", &self.jump_size_moment.is_some())
            .field("stationary_density", &self.stationary_density.is_some())
            .field("speed_density", &self.speed_density.is_some())
            .finish()
    }
}

impl<T: Scalar> ModelSpec<T> {
    pub fn new(
        name: impl Into<String>,
        drift: impl Fn(T) -> T + Send + Sync + 'static,
        diffusion: impl Fn(T) -> T + Send + Sync + 'static,
        jump_intensity: impl Fn(T) -> T + Send + Sync + 'static,
        jump_size_sampler: impl Fn(T, &mut dyn RngCore) -> T + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            jump_intensity: Arc::new(jump_intensity),
            jump_size_sampler: Arc::new(jump_size_sampler),
            jump_size_moment: None,
            stationary_density: None,
            speed_density: None,
            state_space: (T::neg_infinity(), T::infinity()),
        }
    }

    pub fn with_jump_moment(mut self, m: impl Fn(T, u32) -> T + Send + Sync + 'static) -> Self {
        self.jump_size_moment = Some(Arc::new(m));
        self
    }

    pub fn with_stationary_density(mut self, p: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        self.stationary_density = Some(Arc::new(p));
        self
    }

    pub fn with_speed_density(mut self, s: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        self.speed_density = Some(Arc::new(s));
        self
    }

    pub fn with_state_space(mut self, lower: T, upper: T) -> Self {
        self.state_space = (lower, upper);
        self
    }

    pub fn contains(&self, x: T) -> bool {
        x > self.state_space.0 && x < self.state_space.1
    }

    /// Analytic infinitesimal moment `M^k(x)`: `σ²(x) + λ(x)E[c²]` for
    /// `k = 2`, `λ(x)E[c^k]` for `k > 2`. `None` if jump moments are unknown
    /// and the intensity is positive.
    pub fn infinitesimal_moment(&self, x: T, k: u32) -> Option<T> {
        assert!(k >= 2, "infinitesimal moments are defined for k >= 2");
        let lam = (self.jump_intensity)(x);
        let jump = if lam == T::zero() {
            T::zero()
        } else {
            lam * (self.jump_size_moment.as_ref()?)(x, k)
        };
        if k == 2 {
            let s = (self.diffusion)(x);
            Some(s * s + jump)
        } else {
            Some(jump)
        }
    }

    /// `(M²)'(x)` and `(M²)''(x)` by central differences of the analytic `M²`.
    pub fn m2_derivatives(&self, x: T) -> Option<(T, T)> {
        let h = T::lit(1e-3);
        let f0 = self.infinitesimal_moment(x, 2)?;
        let fp = self.infinitesimal_moment(x + h, 2)?;
        let fm = self.infinitesimal_moment(x - h, 2)?;
        let d1 = (fp - fm) / (T::lit(2.0) * h);
        let d2 = (fp - T::lit(2.0) * f0 + fm) / (h * h);
        Some((d1, d2))
    }

    /// `s'(x)/s(x)` from the speed density, falling back to the stationary
    /// density (they agree up to scale).
    pub fn score(&self, x: T) -> Option<T> {
        let s = self.speed_density.as_ref().or(self.stationary_density.as_ref())?;
        let h = T::lit(1e-4);
        let mid = s(x);
        if mid <= T::zero() {
            return None;
        }
        Some((s(x + h) - s(x - h)) / (T::lit(2.0) * h * mid))
    }

    /// Checks coefficient signs on the supplied points of the state space.
    pub fn check_coefficients(&self, points: &[T]) -> Result<()> {
        for &x in points.iter().filter(|&&x| self.contains(x)) {
            let s = (self.diffusion)(x);
            let l = (self.jump_intensity)(x);
            if !(s >= T::zero()) || !(l >= T::zero()) {
                return invalid(format!("model '{}' has negative σ or λ at x = {x}", self.name));
            }
        }
        Ok(())
    }
}

/// Equally spaced observations `X_0, X_Δ, …, X_{nΔ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath<T> {
    values: Vec<T>,
    delta: T,
}

impl<T: Scalar> SamplePath<T> {
    pub fn new(values: Vec<T>, delta: T) -> Result<Self> {
        if !(delta > T::zero()) || !delta.is_finite() {
            return invalid(format!("sampling interval must be positive, got {delta}"));
        }
        if values.is_empty() {
            return invalid("a sample path needs at least one observation");
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite observation at index {i}")));
        }
        Ok(Self { values, delta })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    /// Number of increments.
    pub fn n(&self) -> usize {
        self.values.len() - 1
    }

    /// Time span `T = nΔ`.
    pub fn span(&self) -> T {
        T::from_count(self.n()) * self.delta
    }

    /// Increments `X_{(i+1)Δ} − X_{iΔ}`.
    pub fn increments(&self) -> impl Iterator<Item = T> + '_ {
        self.values.windows(2).map(|w| w[1] - w[0])
    }

    /// Applies `x ↦ a·x + b` to every observation.
    pub fn affine(&self, a: T, b: T) -> Self {
        Self {
            values: self.values.iter().map(|&v| a * v + b).collect(),
            delta: self.delta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig<T> {
    pub x0: T,
    pub n: usize,
    pub delta: T,
    pub substeps: usize,
    pub seed: u64,
}

impl<T: Scalar> SimConfig<T> {
    pub const DEFAULT_SUBSTEPS: usize = 10;

    pub fn new(x0: T, n: usize, delta: T, seed: u64) -> Self {
        Self {
            x0,
            n,
            delta,
            substeps: Self::DEFAULT_SUBSTEPS,
            seed,
        }
    }

    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.substeps = substeps;
        self
    }
}

/// Side information gathered while simulating.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimStats {
    /// Substeps whose end state left the open state space.
    pub boundary_exits: usize,
    pub jumps: usize,
    /// Whether the compensator had to be estimated by Monte Carlo.
    pub approximate_compensator: bool,
}

const COMPENSATOR_DRAWS: usize = 10_000;
const COMPENSATOR_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

/// Poisson draw by sequential inversion; fine for the small means that
/// occur per substep, delegating to `rand_distr` for large means.
fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        // Keep the stream aligned regardless of the intensity.
        let _: f64 = rng.random();
        return 0;
    }
    if mean > 30.0 {
        let _: f64 = rng.random();
        let d = rand_distr::Poisson::new(mean).expect("finite positive mean");
        return d.sample(rng) as u64;
    }
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    while u > cdf && k < 1000 {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
    }
    k
}

/// Simulates a discretely observed path; see [`simulate_path_with_stats`].
pub fn simulate_path<T: Scalar>(model: &ModelSpec<T>, cfg: &SimConfig<T>) -> Result<SamplePath<T>>
where
    StandardNormal: Distribution<T>,
{
    simulate_path_with_stats(model, cfg).map(|(p, _)| p)
}

/// Euler–Maruyama on the compensated form. Each observation interval is
/// split into `substeps` substeps of length `δ`; per substep
///
/// `X ← X + [μ(X) − λ(X)E c(X,·)]δ + σ(X)√δ Z + Σ_{k=1}^{N} c(X, y_k)`,
/// `N ~ Poisson(λ(X)δ)`, all coefficients at the left endpoint. Only every
/// `substeps`-th state is recorded. Deterministic in `cfg.seed`.
pub fn simulate_path_with_stats<T: Scalar>(model: &ModelSpec<T>, cfg: &SimConfig<T>) -> Result<(SamplePath<T>, SimStats)>
where
    StandardNormal: Distribution<T>,
{
    if cfg.substeps == 0 {
        return invalid("substeps must be at least 1");
    }
    if !(cfg.delta > T::zero()) || !cfg.delta.is_finite() {
        return invalid(format!("delta must be positive, got {}", cfg.delta));
    }
    if !model.contains(cfg.x0) {
        return invalid(format!(
            "x0 = {} lies outside the state space ({}, {})",
            cfg.x0, model.state_space.0, model.state_space.1
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut comp_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ COMPENSATOR_STREAM);
    let mut comp_cache: HashMap<u64, T> = HashMap::new();
    let mut stats = SimStats::default();

    let dt = cfg.delta / T::from_count(cfg.substeps);
    let sqrt_dt = dt.sqrt();
    let mut values = Vec::with_capacity(cfg.n + 1);
    let mut x = cfg.x0;
    values.push(x);

    for obs in 0..cfg.n {
        for sub in 0..cfg.substeps {
            let mu = (model.drift)(x);
            let sigma = (model.diffusion)(x);
            let lam = (model.jump_intensity)(x);
            let z: T = StandardNormal.sample(&mut rng);

            let mut next = x + mu * dt + sigma * sqrt_dt * z;
            let count = poisson_count((lam * dt).as_f64(), &mut rng);
            if lam > T::zero() {
                let mean_jump = match &model.jump_size_moment {
                    Some(m) => m(x, 1),
                    None => {
                        if !stats.approximate_compensator {
                            log::warn!(
                                "model '{}' has no analytic jump mean; compensator estimated from {COMPENSATOR_DRAWS} draws",
                                model.name
                            );
                        }
                        stats.approximate_compensator = true;
                        *comp_cache.entry(x.as_f64().to_bits()).or_insert_with(|| {
                            let total: T = (0..COMPENSATOR_DRAWS)
                                .map(|_| (model.jump_size_sampler)(x, &mut comp_rng))
                                .sum();
                            total / T::from_count(COMPENSATOR_DRAWS)
                        })
                    }
                };
                next -= lam * mean_jump * dt;
            }
            for _ in 0..count {
                next += (model.jump_size_sampler)(x, &mut rng);
            }
            stats.jumps += count as usize;

            if !next.is_finite() {
                return Err(Error::Simulation {
                    step: obs * cfg.substeps + sub + 1,
                    state: next.as_f64(),
                });
            }
            if !model.contains(next) {
                stats.boundary_exits += 1;
            }
            x = next;
        }
        values.push(x);
    }
    if stats.boundary_exits > 0 {
        log::warn!(
            "model '{}': {} substeps ended outside the state space",
            model.name,
            stats.boundary_exits
        );
    }
    Ok((SamplePath::new(values, cfg.delta)?, stats))
}

/// Parameters of the built-in models. Not every model uses every field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    /// Mean-reversion speed κ.
    pub kappa: f64,
    /// Long-run level θ̄.
    pub mean: f64,
    pub sigma: f64,
    /// Jump intensity λ (λ₀ for `statejump`).
    pub lambda: f64,
    /// Standard deviation of the Gaussian jump sizes.
    pub jump_sd: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            mean: 0.0,
            sigma: 0.5,
            lambda: 1.0,
            jump_sd: 0.2,
        }
    }
}

pub const BUILTIN_MODEL_NAMES: [&str; 4] = ["ou-jump", "ou-pure", "statejump", "bm-jump"];

/// `E[Y^k]` for `Y ~ N(0, s²)`.
fn gaussian_raw_moment(s: f64, k: u32) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let double_factorial: f64 = (1..k).step_by(2).map(f64::from).product();
    double_factorial * s.powi(k as i32)
}

fn gaussian_jump<T: Scalar>(sd: f64) -> impl Fn(T, &mut dyn RngCore) -> T + Send + Sync + 'static
where
    StandardNormal: Distribution<T>,
{
    move |_x, rng: &mut dyn RngCore| {
        let z: T = StandardNormal.sample(rng);
        T::lit(sd) * z
    }
}

/// Entire exponential integral `Ein(a) = ∫_0^a (1 − e^{−w})/w dw`.
fn ein(a: f64) -> f64 {
    if a <= 4.0 {
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 1..200 {
            term *= -a / k as f64;
            let t = -term / k as f64;
            sum += t;
            if t.abs() < 1e-18 * sum.abs().max(1e-300) {
                break;
            }
        }
        sum
    } else {
        const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
        EULER_GAMMA + a.ln() + expint_e1(a)
    }
}

/// `E_1(x)` for `x > 1` by a modified Lentz continued fraction.
fn expint_e1(x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (-x).exp()
}

/// Stationary law of the Gaussian-jump OU model via Fourier inversion of its
/// characteristic function
/// `log φ(u) = −σ²u²/(4κ) − (λ/2κ)·Ein(s²u²/2)`.
#[derive(Debug, Clone, Copy)]
pub struct JumpOuStationary {
    p: ModelParams,
}

impl JumpOuStationary {
    pub fn new(p: ModelParams) -> Result<Self> {
        if !(p.kappa > 0.0 && p.sigma > 0.0) {
            return invalid("stationary density requires kappa > 0 and sigma > 0");
        }
        Ok(Self { p })
    }

    pub fn characteristic(&self, u: f64) -> f64 {
        let ModelParams { kappa, sigma, lambda, jump_sd, .. } = self.p;
        (-sigma * sigma * u * u / (4.0 * kappa) - lambda / (2.0 * kappa) * ein(0.5 * jump_sd * jump_sd * u * u)).exp()
    }

    fn cutoff(&self) -> f64 {
        // φ(u) ≤ exp(−σ²u²/4κ) < e^{−40}.
        (160.0 * self.p.kappa).sqrt() / self.p.sigma
    }

    pub fn variance(&self) -> f64 {
        let ModelParams { kappa, sigma, lambda, jump_sd, .. } = self.p;
        (sigma * sigma + lambda * jump_sd * jump_sd) / (2.0 * kappa)
    }

    pub fn density(&self, x: f64) -> f64 {
        let y = x - self.p.mean;
        let r = quad::integrate(|u| self.characteristic(u) * (u * y).cos(), 0.0, self.cutoff(), &[], 1e-12)
            .expect("finite smooth integrand");
        (r.value / std::f64::consts::PI).max(0.0)
    }

    pub fn density_derivative(&self, x: f64) -> f64 {
        let y = x - self.p.mean;
        let r = quad::integrate(|u| -u * self.characteristic(u) * (u * y).sin(), 0.0, self.cutoff(), &[], 1e-12)
            .expect("finite smooth integrand");
        r.value / std::f64::consts::PI
    }
}

/// Builds a catalog model by name.
///
/// * `ou-jump`: `μ = κ(θ̄ − x)`, constant `σ` and `λ`, jumps `N(0, s²)`;
///   positive recurrent with a computable stationary density.
/// * `ou-pure`: the same without jumps.
/// * `statejump`: `λ(x) = λ₀/(1 + x²)`, otherwise as `ou-jump`; no
///   closed-form invariant density.
/// * `bm-jump`: `μ ≡ 0`; null recurrent, Lebesgue measure is invariant.
///
/// These models are illustrative choices for exercising the estimators.
pub fn builtin_model<T: Scalar>(name: &str, p: ModelParams) -> Result<ModelSpec<T>>
where
    StandardNormal: Distribution<T>,
{
    if !(p.sigma >= 0.0 && p.lambda >= 0.0 && p.jump_sd >= 0.0) {
        return invalid("sigma, lambda and jump_sd must be nonnegative");
    }
    let kappa = T::lit(p.kappa);
    let level = T::lit(p.mean);
    let sigma = T::lit(p.sigma);
    let lambda = T::lit(p.lambda);
    let sd = p.jump_sd;
    let moment = move |_x: T, k: u32| T::lit(gaussian_raw_moment(sd, k));
    let ou_drift = move |x: T| kappa * (level - x);

    let model = match name {
        "ou-jump" => {
            let spec = ModelSpec::new(name, ou_drift, move |_| sigma, move |_| lambda, gaussian_jump::<T>(sd))
                .with_jump_moment(moment);
            match JumpOuStationary::new(p) {
                Ok(st) if p.kappa > 0.0 => {
                    let speed = st;
                    spec.with_stationary_density(move |x: T| T::lit(st.density(x.as_f64())))
                        .with_speed_density(move |x: T| T::lit(speed.density(x.as_f64())))
                }
                _ => spec,
            }
        }
        "ou-pure" => {
            let spec = ModelSpec::new(name, ou_drift, move |_| sigma, |_| T::zero(), gaussian_jump::<T>(sd))
                .with_jump_moment(moment);
            if p.kappa > 0.0 && p.sigma > 0.0 {
                let var = p.sigma * p.sigma / (2.0 * p.kappa);
                let mean = p.mean;
                let gauss = move |x: T| {
                    let z = x.as_f64() - mean;
                    T::lit((-0.5 * z * z / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt())
                };
                spec.with_stationary_density(gauss).with_speed_density(gauss)
            } else {
                spec
            }
        }
        "statejump" => ModelSpec::new(
            name,
            ou_drift,
            move |_| sigma,
            move |x: T| lambda / (T::one() + x * x),
            gaussian_jump::<T>(sd),
        )
        .with_jump_moment(moment),
        "bm-jump" => ModelSpec::new(name, |_| T::zero(), move |_| sigma, move |_| lambda, gaussian_jump::<T>(sd))
            .with_jump_moment(moment)
            .with_speed_density(|_| T::one()),
        other => {
            return invalid(format!(
                "unknown model '{other}'; available: {}",
                BUILTIN_MODEL_NAMES.join(", ")
            ))
        }
    };
    Ok(model)
}

/// All catalog models at their default parameters.
pub fn builtin_models<T: Scalar>() -> Vec<ModelSpec<T>>
where
    StandardNormal: Distribution<T>,
{
    BUILTIN_MODEL_NAMES
        .iter()
        .map(|n| builtin_model(n, ModelParams::default()).expect("catalog names are valid"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_model() -> ModelSpec<f64> {
        ModelSpec::new("zero", |_| 0.0, |_| 0.0, |_| 0.0, |_, _| 0.0).with_jump_moment(|_, _| 0.0)
    }

    #[test]
    fn zero_coefficients_give_constant_path() {
        let p = simulate_path(&zero_model(), &SimConfig::new(1.25, 500, 0.01, 3)).unwrap();
        assert_eq!(p.n(), 500);
        assert!(p.values().iter().all(|&v| v == 1.25));
    }

    #[test]
    fn reproducible_bitwise() {
        let m = builtin_model::<f64>("ou-jump", ModelParams::default()).unwrap();
        let cfg = SimConfig::new(0.0, 2000, 0.01, 42);
        let a = simulate_path(&m, &cfg).unwrap();
        let b = simulate_path(&m, &cfg).unwrap();
        assert_eq!(a, b);
        let c = simulate_path(&m, &SimConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn compensated_unit_jumps_bookkeeping() {
        // μ ≡ 0, σ ≡ 0, λ ≡ 2, c ≡ 1: every observed increment plus 2Δ is a jump count.
        let m = ModelSpec::<f64>::new("unit", |_| 0.0, |_| 0.0, |_| 2.0, |_, _| 1.0).with_jump_moment(|_, _| 1.0);
        let delta = 0.5;
        let cfg = SimConfig::new(0.0, 400, delta, 11).with_substeps(1);
        let (path, stats) = simulate_path_with_stats(&m, &cfg).unwrap();
        let mut total = 0.0;
        for inc in path.increments() {
            let count = inc + 2.0 * delta;
            assert!((count - count.round()).abs() < 1e-9 && count > -1e-9, "{count}");
            total += count.round();
        }
        assert_eq!(total as usize, stats.jumps);
        let t = path.span();
        let end = *path.values().last().unwrap();
        assert!((end - (stats.jumps as f64 - 2.0 * t)).abs() < 1e-9);
        // N_T ~ Poisson(2T = 400).
        assert!((stats.jumps as f64 - 400.0).abs() < 5.0 * 20.0);
    }

    #[test]
    fn ou_stationary_variance() {
        let m = builtin_model::<f64>("ou-pure", ModelParams { sigma: 1.0, ..Default::default() }).unwrap();
        let p = simulate_path(&m, &SimConfig::new(0.0, 100_000, 0.01, 5)).unwrap();
        let v = p.values();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        assert!((var - 0.5).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn rejects_bad_config() {
        let m = builtin_model::<f64>("ou-jump", ModelParams::default()).unwrap().with_state_space(-1.0, 1.0);
        assert!(matches!(
            simulate_path(&m, &SimConfig::new(2.0, 10, 0.01, 1)),
            Err(Error::InvalidArgument(_))
        ));
        assert!(simulate_path(&m, &SimConfig::new(0.0, 10, 0.01, 1).with_substeps(0)).is_err());
        assert!(simulate_path(&m, &SimConfig::new(0.0, 10, -0.01, 1)).is_err());
    }

    #[test]
    fn explosion_reports_step() {
        let m = ModelSpec::<f64>::new("explode", |x| 1e300 * x.abs() + 1e300, |_| 0.0, |_| 0.0, |_, _| 0.0);
        match simulate_path(&m, &SimConfig::new(1.0, 10, 1.0, 1).with_substeps(1)) {
            Err(Error::Simulation { step, .. }) => assert!(step >= 1 && step <= 3),
            other => panic!("expected simulation error, got {other:?}"),
        }
    }

    #[test]
    fn boundary_exits_counted_not_clamped() {
        let m = builtin_model::<f64>("ou-pure", ModelParams::default()).unwrap().with_state_space(-0.05, 0.05);
        let (path, stats) = simulate_path_with_stats(&m, &SimConfig::new(0.0, 1000, 0.01, 9)).unwrap();
        assert!(stats.boundary_exits > 0);
        assert!(path.values().iter().any(|v| v.abs() > 0.05));
    }

    #[test]
    fn monte_carlo_compensator_fallback() {
        let m = ModelSpec::<f64>::new("mc", |_| 0.0, |_| 0.0, |_| 1.0, |_, rng: &mut dyn RngCore| {
            let z: f64 = StandardNormal.sample(rng);
            1.0 + 0.1 * z
        });
        let (_, stats) = simulate_path_with_stats(&m, &SimConfig::new(0.0, 20, 0.1, 1).with_substeps(2)).unwrap();
        assert!(stats.approximate_compensator);
    }

    #[test]
    fn analytic_moments_of_catalog() {
        let m = builtin_model::<f64>("ou-jump", ModelParams::default()).unwrap();
        for &x in &[-1.0, 0.0, 0.7] {
            assert!((m.infinitesimal_moment(x, 2).unwrap() - 0.29).abs() < 1e-15);
            assert!((m.infinitesimal_moment(x, 4).unwrap() - 0.0048).abs() < 1e-15);
        }
        let pure = builtin_model::<f64>("ou-pure", ModelParams::default()).unwrap();
        assert_eq!(pure.infinitesimal_moment(0.3, 2).unwrap(), 0.25);
        let sj = builtin_model::<f64>("statejump", ModelParams::default()).unwrap();
        assert!((sj.infinitesimal_moment(1.0, 2).unwrap() - (0.25 + 0.5 * 0.04)).abs() < 1e-15);
        let (d1, d2) = sj.m2_derivatives(0.0).unwrap();
        assert!(d1.abs() < 1e-9);
        // d²/dx² of 0.04/(1+x²) at 0 is −0.08.
        assert!((d2 + 0.08).abs() < 1e-5);
        assert_eq!(builtin_models::<f64>().len(), 4);
        assert!(builtin_model::<f64>("cir", ModelParams::default()).is_err());
    }

    #[test]
    fn jump_second_moment_matches_sampler() {
        let m = builtin_model::<f64>("ou-jump", ModelParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 1_000_000;
        let mut s2 = 0.0;
        let mut s4 = 0.0;
        for _ in 0..n {
            let c = (m.jump_size_sampler)(0.3, &mut rng);
            s2 += c * c;
            s4 += c * c * c * c;
        }
        let emp2 = s2 / n as f64;
        let exact2 = (m.jump_size_moment.as_ref().unwrap())(0.3, 2);
        // sd of the estimator is sqrt(2)·s²/sqrt(n).
        assert!((emp2 - exact2).abs() < 4.0 * 2f64.sqrt() * 0.04 / 1000.0);
        let exact4 = (m.jump_size_moment.as_ref().unwrap())(0.3, 4);
        assert!((s4 / n as f64 - exact4).abs() / exact4 < 0.02);
    }

    #[test]
    fn coefficient_signs_checked() {
        let m = builtin_model::<f64>("statejump", ModelParams::default()).unwrap();
        assert!(m.check_coefficients(&[-3.0, 0.0, 2.0]).is_ok());
        let bad = ModelSpec::<f64>::new("bad", |_| 0.0, |_| 1.0, |x| x, |_, _| 0.0);
        assert!(bad.check_coefficients(&[-1.0]).is_err());
    }

    #[test]
    fn ein_branches_agree() {
        let direct = |a: f64| quad::integrate(|w| if w == 0.0 { 1.0 } else { (1.0 - (-w).exp()) / w }, 0.0, a, &[], 1e-14).unwrap().value;
        for &a in &[0.01, 0.5, 3.9, 4.0, 4.1, 10.0, 50.0] {
            assert!((ein(a) - direct(a)).abs() < 1e-12, "a = {a}");
        }
    }

    #[test]
    fn stationary_densities_integrate_to_one() {
        for name in ["ou-jump", "ou-pure"] {
            let m = builtin_model::<f64>(name, ModelParams::default()).unwrap();
            let p = m.stationary_density.clone().unwrap();
            let mass = quad::integrate(|x| p(x), -6.0, 6.0, &[0.0], 1e-9).unwrap().value;
            assert!((mass - 1.0).abs() < 1e-6, "{name}: {mass}");
        }
    }

    #[test]
    fn fourier_density_reduces_to_gaussian_without_jumps() {
        let params = ModelParams { lambda: 0.0, ..Default::default() };
        let st = JumpOuStationary::new(params).unwrap();
        let var = 0.125;
        for &x in &[-0.8f64, -0.2, 0.0, 0.5] {
            let g = (-0.5 * x * x / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
            assert!((st.density(x) - g).abs() < 1e-9);
            let gd = -x / var * g;
            assert!((st.density_derivative(x) - gd).abs() < 1e-8);
        }
    }

    #[test]
    fn fourier_density_has_model_variance() {
        let st = JumpOuStationary::new(ModelParams::default()).unwrap();
        let var = quad::integrate(|x| x * x * st.density(x), -5.0, 5.0, &[0.0], 1e-9).unwrap().value;
        assert!((var - st.variance()).abs() < 1e-6, "{var} vs {}", st.variance());
    }

    #[test]
    fn f32_simulation_runs() {
        let m = builtin_model::<f32>("ou-jump", ModelParams::default()).unwrap();
        let p = simulate_path(&m, &SimConfig::new(0.0f32, 100, 0.01, 1)).unwrap();
        assert_eq!(p.values().len(), 101);
    }
}
