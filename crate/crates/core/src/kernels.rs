//! Smoothing kernels and their moment constants.
//!
//! All catalog kernels are nonnegative, symmetric, continuously
//! differentiable densities. `K_i^j` denotes `∫ K(u)^i u^j du`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quad;
use crate::scalar::Scalar;
use crate::special::{ln_gamma, normal_cdf, normal_pdf};

/// Truncation point of [`Kernel::TruncatedGaussian`].
pub const GAUSSIAN_TRUNCATION: f64 = 6.0;

// Beyond this many standard deviations the normal CDF is within 1e-12 of {0, 1}.
const GAUSSIAN_EFFECTIVE_RADIUS: f64 = 7.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    /// `¾(1 − u²)` on `[−1, 1]`.
    Epanechnikov,
    /// Biweight, `15/16 (1 − u²)²` on `[−1, 1]`.
    Quartic,
    /// Standard normal density. Not compactly supported.
    Gaussian,
    /// Standard normal density cut at `|u| ≤ 6` and renormalized.
    TruncatedGaussian,
}

impl Kernel {
    pub const CATALOG: [Kernel; 4] = [
        Kernel::Epanechnikov,
        Kernel::Quartic,
        Kernel::Gaussian,
        Kernel::TruncatedGaussian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Epanechnikov => "epanechnikov",
            Kernel::Quartic => "quartic",
            Kernel::Gaussian => "gaussian",
            Kernel::TruncatedGaussian => "gaussian-truncated",
        }
    }

    /// Smallest `R` with `K(u) = 0` for `|u| > R`; infinite for the Gaussian.
    pub fn support_radius(self) -> f64 {
        match self {
            Kernel::Epanechnikov | Kernel::Quartic => 1.0,
            Kernel::Gaussian => f64::INFINITY,
            Kernel::TruncatedGaussian => GAUSSIAN_TRUNCATION,
        }
    }

    pub fn is_compact(self) -> bool {
        self.support_radius().is_finite()
    }

    fn truncation_mass() -> f64 {
        1.0 - 2.0 * normal_cdf(-GAUSSIAN_TRUNCATION)
    }

    #[inline]
    pub fn evaluate<T: Scalar>(self, u: T) -> T {
        match self {
            Kernel::Epanechnikov => {
                let v = T::one() - u * u;
                if v > T::zero() {
                    T::lit(0.75) * v
                } else {
                    T::zero()
                }
            }
            Kernel::Quartic => {
                let v = T::one() - u * u;
                if v > T::zero() {
                    T::lit(15.0 / 16.0) * v * v
                } else {
                    T::zero()
                }
            }
            Kernel::Gaussian => T::lit(normal_pdf(u.as_f64())),
            Kernel::TruncatedGaussian => {
                let x = u.as_f64();
                if x.abs() <= GAUSSIAN_TRUNCATION {
                    T::lit(normal_pdf(x) / Self::truncation_mass())
                } else {
                    T::zero()
                }
            }
        }
    }

    /// `K'(u)`.
    pub fn derivative<T: Scalar>(self, u: T) -> T {
        match self {
            Kernel::Epanechnikov => {
                if u.abs() < T::one() {
                    T::lit(-1.5) * u
                } else {
                    T::zero()
                }
            }
            Kernel::Quartic => {
                let v = T::one() - u * u;
                if v > T::zero() {
                    T::lit(-15.0 / 4.0) * u * v
                } else {
                    T::zero()
                }
            }
            Kernel::Gaussian | Kernel::TruncatedGaussian => -u * self.evaluate(u),
        }
    }

    /// `F(u) = ∫_{−∞}^u K`.
    pub fn cdf<T: Scalar>(self, u: T) -> T {
        match self {
            Kernel::Epanechnikov => {
                if u <= -T::one() {
                    T::zero()
                } else if u >= T::one() {
                    T::one()
                } else {
                    T::lit(0.5) + T::lit(0.75) * (u - u * u * u / T::lit(3.0))
                }
            }
            Kernel::Quartic => {
                if u <= -T::one() {
                    T::zero()
                } else if u >= T::one() {
                    T::one()
                } else {
                    let u2 = u * u;
                    T::lit(0.5)
                        + T::lit(15.0 / 16.0) * u * (T::one() - T::lit(2.0 / 3.0) * u2 + u2 * u2 / T::lit(5.0))
                }
            }
            Kernel::Gaussian => T::lit(normal_cdf(u.as_f64())),
            Kernel::TruncatedGaussian => {
                let x = u.as_f64().clamp(-GAUSSIAN_TRUNCATION, GAUSSIAN_TRUNCATION);
                let lo = normal_cdf(-GAUSSIAN_TRUNCATION);
                T::lit(((normal_cdf(x) - lo) / Self::truncation_mass()).clamp(0.0, 1.0))
            }
        }
    }

    /// `K_i^j = ∫ K(u)^i u^j du` for `i ≥ 1`.
    pub fn moment(self, i: u32, j: u32) -> f64 {
        assert!(i >= 1, "kernel power must be at least 1");
        if j % 2 == 1 {
            return 0.0;
        }
        let half = (f64::from(j) + 1.0) / 2.0;
        let beta = |a: f64, b: f64| (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp();
        match self {
            Kernel::Epanechnikov => 0.75f64.powi(i as i32) * beta(half, f64::from(i) + 1.0),
            Kernel::Quartic => (15.0f64 / 16.0).powi(i as i32) * beta(half, 2.0 * f64::from(i) + 1.0),
            Kernel::Gaussian => {
                let a = f64::from(i) / 2.0;
                (2.0 * std::f64::consts::PI).powf(-a) * (ln_gamma(half) - half * a.ln()).exp()
            }
            Kernel::TruncatedGaussian => {
                let r = GAUSSIAN_TRUNCATION;
                quad::integrate(
                    |u| self.evaluate(u).powi(i as i32) * u.powi(j as i32),
                    -r,
                    r,
                    &[0.0],
                    1e-13,
                )
                .expect("smooth integrand on a finite range")
                .value
            }
        }
    }

    /// Second moment `K_2 = ∫ u² K(u) du`, the constant in every bias term.
    pub fn k2(self) -> f64 {
        self.moment(1, 2)
    }

    /// Roughness `∫ K²`.
    pub fn roughness(self) -> f64 {
        self.moment(2, 0)
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        kernel_by_name(s)
    }
}

/// Looks a kernel up by name.
pub fn kernel_by_name(name: &str) -> Result<Kernel> {
    match name.to_ascii_lowercase().as_str() {
        "epanechnikov" | "epa" => Ok(Kernel::Epanechnikov),
        "quartic" | "biweight" => Ok(Kernel::Quartic),
        "gaussian" | "normal" => Ok(Kernel::Gaussian),
        "gaussian-truncated" | "truncated-gaussian" => Ok(Kernel::TruncatedGaussian),
        other => {
            let names: Vec<_> = Kernel::CATALOG.iter().map(|k| k.name()).collect();
            invalid(format!("unknown kernel '{other}'; available: {}", names.join(", ")))
        }
    }
}

/// Variance inflation constant of the ratio regime `h = φ·ε`:
///
/// `θ_φ = ½ ∫ dz [F((z+1)/φ) − F((z−1)/φ)]²`,
///
/// which is the triple integral `½∫dz∫∫ K(a)K(e) da de` over the moving
/// window `a, e ∈ [(z−1)/φ, (z+1)/φ]` after integrating out `a` and `e`.
/// Tends to 1 as `φ → 0`.
pub fn theta_phi(kernel: Kernel, phi: f64) -> Result<f64> {
    if !(phi > 0.0 && phi.is_finite()) {
        return invalid(format!("phi must be positive and finite, got {phi}"));
    }
    let radius = if kernel.is_compact() {
        kernel.support_radius()
    } else {
        GAUSSIAN_EFFECTIVE_RADIUS
    };
    let zmax = 1.0 + phi * radius;
    let window = |z: f64| kernel.cdf((z + 1.0) / phi) - kernel.cdf((z - 1.0) / phi);
    // Pieces of the integrand change where a window edge meets the support edge.
    let breaks = [-1.0 - phi * radius, -1.0 + phi * radius, 1.0 - phi * radius, 1.0 + phi * radius, 0.0];
    let r = quad::integrate(|z| window(z).powi(2), -zmax, zmax, &breaks, 1e-10)?;
    Ok(0.5 * r.value)
}
