//! Bias constants, asymptotic standard errors, confidence intervals and
//! plug-in bandwidths for the double-smoothed `M²` estimator.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::MomentEstimate;
use crate::kernels::{theta_phi, Kernel};
use crate::model_sim::SamplePath;
use crate::scalar::{CompensatedSum, Scalar};
use crate::special::normal_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasSource {
    Analytic,
    Empirical,
}

/// Local derivatives entering the leading bias term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasInputs<T> {
    /// `(M²)'(x)`
    pub m2_d1: T,
    /// `(M²)''(x)`
    pub m2_d2: T,
    /// `s'(x)/s(x)`
    pub score: T,
    pub source: BiasSource,
}

impl<T: Scalar> BiasInputs<T> {
    pub fn new(m2_d1: T, m2_d2: T, score: T, source: BiasSource) -> Result<Self> {
        if !(m2_d1.is_finite() && m2_d2.is_finite() && score.is_finite()) {
            return invalid("bias inputs must be finite");
        }
        Ok(Self { m2_d1, m2_d2, score, source })
    }

    /// `½(M²)'' + (M²)'·s'/s`.
    pub fn bracket(&self) -> T {
        T::lit(0.5) * self.m2_d2 + self.m2_d1 * self.score
    }
}

/// Asymptotic regime of the bandwidth pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `h = o(ε)`.
    SmallH,
    /// `h/ε = φ` fixed.
    RatioH,
    /// Positive recurrent process normalized by `nΔε`.
    Stationary,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::SmallH => "small_h",
            Regime::RatioH => "ratio_h",
            Regime::Stationary => "stationary",
        })
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small_h" | "small-h" => Ok(Regime::SmallH),
            "ratio_h" | "ratio-h" => Ok(Regime::RatioH),
            "stationary" => Ok(Regime::Stationary),
            other => invalid(format!("unknown regime '{other}' (small_h, ratio_h, stationary)")),
        }
    }
}

/// Leading bias constant: `⅓·B` for `h = o(ε)`, `(K₂φ² + ⅓)·B` for
/// `h = φε`, with `B` the bias bracket. The stationary regime takes either
/// form depending on whether `phi` is given.
pub fn bias_constant<T: Scalar>(inputs: &BiasInputs<T>, regime: Regime, kernel: Kernel, phi: Option<T>) -> Result<T> {
    let third = T::one() / T::lit(3.0);
    let factor = match (regime, phi) {
        (Regime::RatioH, None) => return invalid("ratio_h regime requires phi"),
        (Regime::SmallH, Some(_)) => return invalid("small_h regime takes no phi"),
        (_, Some(phi)) => {
            if !(phi > T::zero()) {
                return invalid(format!("phi must be positive, got {phi}"));
            }
            T::lit(kernel.k2()) * phi * phi + third
        }
        (_, None) => third,
    };
    Ok(factor * inputs.bracket())
}

/// Asymptotic standard error `√(½θM̂⁴) / √(ε·L̂)`.
///
/// `θ` is forced to 1 in the small-h regime. In the stationary regime
/// `local_time` is the normalizer `n·Δ·p̂(x)`.
pub fn std_error<T: Scalar>(m4_hat: T, eps: T, local_time: T, regime: Regime, theta: T) -> Result<T> {
    if !(m4_hat >= T::zero()) {
        return invalid(format!("M4 estimate must be nonnegative, got {m4_hat}"));
    }
    if !(theta > T::zero()) {
        return invalid(format!("theta must be positive, got {theta}"));
    }
    let normalizer = eps * local_time;
    if !(normalizer > T::zero() && normalizer.is_finite()) {
        return Err(Error::Numerical(format!(
            "nonpositive normalizer eps·L = {normalizer}; grid point unreliable"
        )));
    }
    let theta = if regime == Regime::SmallH { T::one() } else { theta };
    Ok((T::lit(0.5) * theta * m4_hat).sqrt() / normalizer.sqrt())
}

/// `n·Δ·p̂(x)` for the stationary regime.
pub fn stationary_normalizer<T: Scalar>(n: usize, delta: T, density: T) -> T {
    T::from_count(n) * delta * density
}

/// Bias-corrected point estimate with its normal confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceResult<T> {
    pub x: T,
    pub m2_corrected: T,
    /// `ε²·Γ̂`, already subtracted from `m2_corrected`.
    pub bias_term: T,
    pub std_error: T,
    pub ci_low: T,
    pub ci_high: T,
    pub regime: Regime,
    pub alpha: T,
}

impl<T: Scalar> InferenceResult<T> {
    pub fn covers(&self, value: T) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }

    pub fn width(&self) -> T {
        self.ci_high - self.ci_low
    }
}

/// `z_{1−α/2}`.
pub fn two_sided_z<T: Scalar>(alpha: T) -> Result<T> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return invalid(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    Ok(T::lit(normal_quantile(1.0 - alpha.as_f64() / 2.0)))
}

/// Interval `M̂² − ε²Γ̂ ± z_{1−α/2}·√(½θM̂⁴)/√(εL̂)`.
#[allow(clippy::too_many_arguments)]
pub fn confidence_interval<T: Scalar>(
    x: T,
    m2_hat: T,
    m4_hat: T,
    bias: T,
    eps: T,
    local_time: T,
    alpha: T,
    regime: Regime,
    theta: T,
) -> Result<InferenceResult<T>> {
    let z = two_sided_z(alpha)?;
    let se = std_error(m4_hat, eps, local_time, regime, theta)?;
    let bias_term = eps * eps * bias;
    let center = m2_hat - bias_term;
    let half = z * se;
    Ok(InferenceResult {
        x,
        m2_corrected: center,
        bias_term,
        std_error: se,
        ci_low: center - half,
        ci_high: center + half,
        regime,
        alpha,
    })
}

/// Plug-in bandwidth pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidths<T> {
    pub h: T,
    pub eps: T,
}

/// MSE-balancing bandwidth
/// `h = φ·[(1/L)·(½θ_φM⁴)/((K₂φ² + ⅓)² B²)]^{1/5}`, with `ε = h/φ`.
pub fn optimal_bandwidth<T: Scalar>(m4_hat: T, bias_bracket: T, local_time: T, kernel: Kernel, phi: T) -> Result<Bandwidths<T>> {
    if !(phi > T::zero()) {
        return invalid(format!("phi must be positive, got {phi}"));
    }
    let theta = T::lit(theta_phi(kernel, phi.as_f64())?);
    optimal_bandwidth_with_theta(m4_hat, bias_bracket, local_time, kernel, phi, theta)
}

/// As [`optimal_bandwidth`] with a precomputed `θ_φ`.
pub fn optimal_bandwidth_with_theta<T: Scalar>(
    m4_hat: T,
    bias_bracket: T,
    local_time: T,
    kernel: Kernel,
    phi: T,
    theta: T,
) -> Result<Bandwidths<T>> {
    if bias_bracket == T::zero() || !bias_bracket.is_finite() {
        return Err(Error::Numerical(
            "bias bracket is zero: undefined plug-in optimum; use a rule-of-thumb bandwidth".into(),
        ));
    }
    if !(local_time > T::zero()) {
        return Err(Error::Numerical(format!("local time must be positive, got {local_time}")));
    }
    if !(m4_hat > T::zero()) {
        return invalid(format!("M4 estimate must be positive, got {m4_hat}"));
    }
    let factor = T::lit(kernel.k2()) * phi * phi + T::one() / T::lit(3.0);
    let ratio = (T::lit(0.5) * theta * m4_hat) / (factor * factor * bias_bracket * bias_bracket) / local_time;
    let h = phi * ratio.powf(T::lit(0.2));
    Ok(Bandwidths { h, eps: h / phi })
}

/// Same balancing rule for the single-smoothed estimator, whose variance
/// is `∫K²·M⁴/(hL)` and bias `h²·B`.
pub fn single_smoothed_bandwidth<T: Scalar>(m4_hat: T, bias_bracket: T, local_time: T, kernel: Kernel) -> Result<T> {
    if bias_bracket == T::zero() || !bias_bracket.is_finite() {
        return Err(Error::Numerical(
            "bias bracket is zero: undefined plug-in optimum; use a rule-of-thumb bandwidth".into(),
        ));
    }
    if !(local_time > T::zero() && m4_hat > T::zero()) {
        return Err(Error::Numerical("local time and M4 must be positive".into()));
    }
    let ratio = T::lit(kernel.roughness()) * m4_hat / (bias_bracket * bias_bracket * local_time);
    Ok(ratio.powf(T::lit(0.2)))
}

/// Normal-reference rule `1.06·sd(X)·n^{−1/5}`; a fallback outside the
/// asymptotic theory.
pub fn rule_of_thumb_bandwidth<T: Scalar>(path: &SamplePath<T>) -> T {
    let v = path.values();
    let n = T::from_count(v.len());
    let mean = v.iter().copied().collect::<CompensatedSum<T>>().value() / n;
    let var = v.iter().map(|&x| (x - mean) * (x - mean)).collect::<CompensatedSum<T>>().value() / n;
    T::lit(1.06) * var.sqrt() * n.powf(T::lit(-0.2))
}

/// Estimates the bias inputs at `x` from a grid of double-smoothed
/// estimates and the sampled levels.
///
/// Derivatives of `M²` come from a least-squares quadratic through the five
/// reliable grid points nearest `x` (exact when `M̂²` is quadratic); the
/// score is the log-derivative of a kernel density estimate with bandwidth
/// `h_density`.
pub fn empirical_bias_inputs<T: Scalar>(
    grid_estimates: &[MomentEstimate<T>],
    path: &SamplePath<T>,
    kernel: Kernel,
    h_density: T,
    x: T,
) -> Result<BiasInputs<T>> {
    if !(h_density > T::zero()) {
        return invalid("density bandwidth must be positive");
    }
    let mut pts: Vec<(T, T)> = grid_estimates
        .iter()
        .filter(|e| e.reliable && e.m2.is_finite())
        .map(|e| (e.x - x, e.m2))
        .collect();
    let below = pts.iter().filter(|p| p.0 <= T::zero()).count();
    if pts.len() < 5 || below == 0 || below == pts.len() {
        return Err(Error::Numerical(format!(
            "need at least 5 reliable grid points bracketing x = {x}, have {}",
            pts.len()
        )));
    }
    pts.sort_by(|a, b| a.0.abs().partial_cmp(&b.0.abs()).expect("finite offsets"));
    pts.truncate(5);
    let (m2_d1, m2_d2) = quadratic_derivatives(&pts)?;

    let levels = &path.values()[1..];
    let dens: CompensatedSum<T> = levels.iter().map(|&v| kernel.evaluate((v - x) / h_density)).collect();
    // d/dx K((v − x)/h) = −K'((v − x)/h)/h
    let slope: CompensatedSum<T> = levels
        .iter()
        .map(|&v| -kernel.derivative((v - x) / h_density) / h_density)
        .collect();
    let dens = dens.value();
    if !(dens > T::zero()) {
        return Err(Error::Numerical(format!("no observations near x = {x} for the density score")));
    }
    BiasInputs::new(m2_d1, m2_d2, slope.value() / dens, BiasSource::Empirical)
}

/// First and second derivative at offset 0 of the least-squares quadratic
/// through `(offset, value)` pairs.
fn quadratic_derivatives<T: Scalar>(pts: &[(T, T)]) -> Result<(T, T)> {
    // Normal equations for y ≈ a + b·u + c·u², scaled for conditioning.
    let scale = pts.iter().map(|p| p.0.abs()).fold(T::zero(), T::max);
    if !(scale > T::zero()) {
        return Err(Error::Numerical("grid points coincide".into()));
    }
    let mut m = [[T::zero(); 4]; 3];
    for &(u, y) in pts {
        let u = u / scale;
        let basis = [T::one(), u, u * u];
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] += basis[r] * basis[c];
            }
            m[r][3] += basis[r] * y;
        }
    }
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).expect("finite"))
            .expect("nonempty");
        m.swap(col, pivot);
        if m[col][col].abs() < T::lit(1e-12) {
            return Err(Error::Numerical("singular stencil".into()));
        }
        for r in 0..3 {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..4 {
                    let v = m[col][c];
                    m[r][c] -= f * v;
                }
            }
        }
    }
    let b = m[1][3] / m[1][1];
    let c = m[2][3] / m[2][2];
    Ok((b / scale, T::lit(2.0) * c / (scale * scale)))
}
