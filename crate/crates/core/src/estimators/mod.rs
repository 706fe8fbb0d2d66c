//! Local time, double-smoothed moment estimators, and the single-smoothed
//! kernel estimator they are compared against.
//!
//! The double-smoothed estimator at level `x` is
//!
//! ```text
//! M̂²(x) = Σ_i K_h(X_i − x) · S²_ε(X_i) / (m_ε(X_i) Δ)  /  Σ_i K_h(X_i − x)
//! ```
//!
//! with `m_ε(v)` the number of `j ∈ 1..n−1` whose level is within `ε` of
//! `v` and `S²_ε(v)` the sum of their squared forward increments. The outer
//! index runs over `i ∈ 1..=n`; an `i` with no ε-neighbor is dropped from
//! both sums. `M̂⁴` uses quartic increments with the same weights.

mod neighbors;

pub use neighbors::{neighbor_index, Engine, NaiveNeighbors, NeighborEngine, NeighborQuery, NeighborSums, SortedNeighbors};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kernels::Kernel;
use crate::model_sim::SamplePath;
use crate::scalar::{CompensatedSum, Scalar};

/// Smoothing parameters and evaluation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig<T> {
    /// Outer kernel bandwidth.
    pub h: T,
    /// Inner neighborhood radius.
    pub eps: T,
    pub kernel: Kernel,
    pub grid: Vec<T>,
    pub engine: Engine,
    /// Local-time floor below which a point is flagged unreliable;
    /// `None` means `10·Δ·K(0)/h`, roughly ten effective observations.
    pub min_local_time: Option<T>,
}

impl<T: Scalar> EstimatorConfig<T> {
    pub fn new(h: T, eps: T, kernel: Kernel, grid: Vec<T>) -> Self {
        Self {
            h,
            eps,
            kernel,
            grid,
            engine: Engine::Fast,
            min_local_time: None,
        }
    }

    pub fn with_engine(mut self, engine: Engine) -> Self {
        self.engine = engine;
        self
    }

    pub fn with_min_local_time(mut self, floor: T) -> Self {
        self.min_local_time = Some(floor);
        self
    }

    /// Bandwidth ratio `φ = h/ε`.
    pub fn phi(&self) -> T {
        self.h / self.eps
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > T::zero() && self.h.is_finite()) {
            return invalid(format!("bandwidth h must be positive, got {}", self.h));
        }
        if !(self.eps > T::zero() && self.eps.is_finite()) {
            return invalid(format!("neighborhood radius eps must be positive, got {}", self.eps));
        }
        if self.grid.is_empty() {
            return invalid("evaluation grid is empty");
        }
        if self.grid.iter().any(|g| !g.is_finite()) || self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("evaluation grid must be finite and strictly increasing");
        }
        if let Some(m) = self.min_local_time {
            if !(m >= T::zero()) {
                return invalid("min_local_time must be nonnegative");
            }
        }
        if self.engine == Engine::Fast && !self.kernel.is_compact() {
            return invalid(format!(
                "the fast engine needs a compactly supported kernel; use '{}' or the naive engine",
                Kernel::TruncatedGaussian
            ));
        }
        Ok(())
    }

    fn local_time_floor(&self, delta: T) -> T {
        self.min_local_time
            .unwrap_or_else(|| T::lit(10.0) * delta * self.kernel.evaluate(T::zero()) / self.h)
    }
}

/// Min/median/max of the neighbor counts `m_ε(X_i)` over contributing `i`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborStats {
    pub min: usize,
    pub median: usize,
    pub max: usize,
}

impl NeighborStats {
    fn from_counts(mut counts: Vec<usize>) -> Self {
        if counts.is_empty() {
            return Self::default();
        }
        counts.sort_unstable();
        Self {
            min: counts[0],
            median: counts[counts.len() / 2],
            max: counts[counts.len() - 1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate<T> {
    pub x: T,
    /// `M̂²(x)`; NaN when no observation contributes.
    pub m2: T,
    /// `M̂⁴(x)`; NaN when no observation contributes.
    pub m4: T,
    pub local_time: T,
    pub neighbor_stats: NeighborStats,
    pub reliable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleSmoothedEstimate<T> {
    pub x: T,
    pub m2: T,
    pub local_time: T,
}

/// Kernel local-time estimate `(Δ/h) Σ_{i=1}^{n} K((X_i − x)/h)`.
pub fn local_time_hat<T: Scalar>(path: &SamplePath<T>, kernel: Kernel, h: T, x: T) -> Result<T> {
    if !(h > T::zero() && h.is_finite()) {
        return invalid(format!("bandwidth h must be positive, got {h}"));
    }
    let sum: CompensatedSum<T> = path.values()[1..].iter().map(|&v| kernel.evaluate((v - x) / h)).collect();
    Ok(path.delta() / h * sum.value())
}

/// Outer iteration order: all `i ∈ 1..=n` in time order for the scan
/// engine, sorted by level for the fast engine so that a compact kernel
/// window is a contiguous slice.
enum OuterIndex<T> {
    Time,
    Sorted(Vec<T>),
}

/// Double-smoothed estimates of `M²` and `M⁴` on `cfg.grid`.
pub fn double_smoothed_moments<T: Scalar>(path: &SamplePath<T>, cfg: &EstimatorConfig<T>) -> Result<Vec<MomentEstimate<T>>> {
    cfg.validate()?;
    if path.n() < 2 {
        return invalid(format!("need at least 2 increments, got {}", path.n()));
    }
    let values = path.values();
    let delta = path.delta();
    let engine = neighbor_index(values, cfg.eps, cfg.engine);
    let outer = match cfg.engine {
        Engine::Naive => OuterIndex::Time,
        Engine::Fast => {
            let mut levels = values[1..].to_vec();
            levels.sort_by(|a, b| a.partial_cmp(b).expect("finite levels"));
            OuterIndex::Sorted(levels)
        }
    };
    let floor = cfg.local_time_floor(delta);
    let radius = T::lit(cfg.kernel.support_radius());

    let estimate_at = |x: T| -> MomentEstimate<T> {
        let levels: &[T] = match &outer {
            OuterIndex::Time => &values[1..],
            OuterIndex::Sorted(sorted) => {
                let lo = sorted.partition_point(|&v| (v - x) / cfg.h < -radius);
                let hi = sorted.partition_point(|&v| (v - x) / cfg.h <= radius);
                &sorted[lo..hi.max(lo)]
            }
        };
        let mut mass = CompensatedSum::new();
        let mut den = CompensatedSum::new();
        let mut num2 = CompensatedSum::new();
        let mut num4 = CompensatedSum::new();
        let mut counts = Vec::new();
        for &level in levels {
            let w = cfg.kernel.evaluate((level - x) / cfg.h);
            if w == T::zero() {
                continue;
            }
            mass.add(w);
            let s = engine.query(level);
            if s.count == 0 {
                continue;
            }
            let scale = T::from_count(s.count) * delta;
            den.add(w);
            num2.add(w * (s.sum_sq / scale));
            num4.add(w * (s.sum_quart / scale));
            counts.push(s.count);
        }
        let local_time = delta / cfg.h * mass.value();
        let den = den.value();
        let (m2, m4, reliable) = if den > T::zero() {
            (num2.value() / den, num4.value() / den, local_time >= floor)
        } else {
            (T::nan(), T::nan(), false)
        };
        MomentEstimate {
            x,
            m2,
            m4,
            local_time,
            neighbor_stats: NeighborStats::from_counts(counts),
            reliable,
        }
    };

    Ok(cfg.grid.iter().map(|&x| estimate_at(x)).collect())
}

/// Single-smoothed kernel estimator
/// `Σ_{i=1}^{n−1} K_h(X_i − x)(X_{i+1} − X_i)² / (Δ Σ_{i=1}^{n−1} K_h(X_i − x))`.
pub fn single_smoothed_m2<T: Scalar>(
    path: &SamplePath<T>,
    kernel: Kernel,
    h: T,
    grid: &[T],
) -> Result<Vec<SingleSmoothedEstimate<T>>> {
    if !(h > T::zero() && h.is_finite()) {
        return invalid(format!("bandwidth h must be positive, got {h}"));
    }
    if path.n() < 2 {
        return invalid(format!("need at least 2 increments, got {}", path.n()));
    }
    if grid.is_empty() {
        return invalid("evaluation grid is empty");
    }
    let values = path.values();
    let delta = path.delta();
    let n = path.n();
    grid.iter()
        .map(|&x| {
            let mut num = CompensatedSum::new();
            let mut den = CompensatedSum::new();
            for i in 1..n {
                let w = kernel.evaluate((values[i] - x) / h);
                if w == T::zero() {
                    continue;
                }
                let d = values[i + 1] - values[i];
                num.add(w * (d * d / delta));
                den.add(w);
            }
            let den = den.value();
            let m2 = if den > T::zero() { num.value() / den } else { T::nan() };
            Ok(SingleSmoothedEstimate {
                x,
                m2,
                local_time: local_time_hat(path, kernel, h, x)?,
            })
        })
        .collect()
}

/// Linearly interpolated empirical quantile of the path levels.
pub fn level_quantile<T: Scalar>(path: &SamplePath<T>, q: f64) -> T {
    let mut v = path.values().to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite levels"));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = T::lit(pos - lo as f64);
    v[lo] + (v[hi] - v[lo]) * frac
}

/// `points` equally spaced levels between the 5th and 95th percentiles of
/// the path; a single point when the path is (nearly) constant.
pub fn default_grid<T: Scalar>(path: &SamplePath<T>, points: usize) -> Vec<T> {
    let lo = level_quantile(path, 0.05);
    let hi = level_quantile(path, 0.95);
    if points <= 1 || !(hi > lo) {
        return vec![if hi > lo { (lo + hi) / T::lit(2.0) } else { lo }];
    }
    let step = (hi - lo) / T::from_count(points - 1);
    let mut grid: Vec<T> = (0..points).map(|k| lo + step * T::from_count(k)).collect();
    grid.dedup_by(|b, a| b <= a);
    grid
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(values: &[f64], delta: f64) -> SamplePath<f64> {
        SamplePath::new(values.to_vec(), delta).unwrap()
    }

    /// Literal double loop over the indicator form.
    fn brute_force_m2(v: &[f64], delta: f64, kernel: Kernel, h: f64, eps: f64, x: f64) -> f64 {
        let n = v.len() - 1;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 1..=n {
            let w = kernel.evaluate((v[i] - x) / h) / h;
            let (mut m, mut s) = (0usize, 0.0);
            for j in 1..n {
                if (v[j] - v[i]).abs() <= eps {
                    m += 1;
                    s += (v[j + 1] - v[j]).powi(2);
                }
            }
            if m > 0 && w > 0.0 {
                num += w * s / (m as f64 * delta);
                den += w;
            }
        }
        num / den
    }

    #[test]
    fn constant_path_is_zero() {
        let p = path(&[0.7; 50], 0.1);
        for engine in [Engine::Naive, Engine::Fast] {
            let cfg = EstimatorConfig::new(0.1, 0.1, Kernel::Epanechnikov, vec![0.7]).with_engine(engine);
            let r = double_smoothed_moments(&p, &cfg).unwrap();
            assert_eq!(r[0].m2, 0.0);
            assert_eq!(r[0].m4, 0.0);
            assert!(r[0].reliable);
        }
        let s = single_smoothed_m2(&p, Kernel::Epanechnikov, 0.1, &[0.7]).unwrap();
        assert_eq!(s[0].m2, 0.0);
    }

    #[test]
    fn local_time_trivial_cases() {
        let p = path(&[2.0; 11], 0.5);
        let lt = local_time_hat(&p, Kernel::Epanechnikov, 0.25, 2.0).unwrap();
        assert!((lt - 5.0 * 0.75 / 0.25).abs() < 1e-12);
        assert_eq!(local_time_hat(&p, Kernel::Epanechnikov, 0.25, 3.0).unwrap(), 0.0);
        assert!(local_time_hat(&p, Kernel::Epanechnikov, 0.0, 3.0).is_err());
    }

    #[test]
    fn toy_path_matches_brute_force() {
        let v = [0.0, 1.0, 0.0, 1.0, 0.0];
        let expected = brute_force_m2(&v, 1.0, Kernel::Epanechnikov, 1e6, 0.5, 0.5);
        // i = 1, 3 (level 1): two neighbors, mean square 1; i = 2 (level 0):
        // one neighbor, square 1; i = 4 (level 0): neighbor j = 2, square 1.
        assert!((expected - 1.0).abs() < 1e-12);
        for engine in [Engine::Naive, Engine::Fast] {
            let cfg = EstimatorConfig::new(1e6, 0.5, Kernel::Epanechnikov, vec![0.5]).with_engine(engine);
            let r = double_smoothed_moments(&path(&v, 1.0), &cfg).unwrap();
            assert!((r[0].m2 - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn random_path_matches_brute_force() {
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut v = vec![0.0];
        for _ in 0..300 {
            let last = *v.last().unwrap();
            v.push(0.9 * last + 0.1 * next());
        }
        let grid = vec![-0.02, 0.0, 0.01];
        for engine in [Engine::Naive, Engine::Fast] {
            let cfg = EstimatorConfig::new(0.03, 0.02, Kernel::Quartic, grid.clone()).with_engine(engine);
            let r = double_smoothed_moments(&path(&v, 0.01), &cfg).unwrap();
            for e in &r {
                let b = brute_force_m2(&v, 0.01, Kernel::Quartic, 0.03, 0.02, e.x);
                assert!(((e.m2 - b) / b).abs() < 1e-12, "{engine:?} at {}", e.x);
            }
        }
    }

    #[test]
    fn tiny_eps_reduces_to_single_smoothed() {
        let v: Vec<f64> = (0..21).map(|k| ((k * 7919) % 23) as f64 / 23.0 + 0.001 * k as f64).collect();
        let p = path(&v, 0.1);
        let grid = vec![0.3, 0.5, 0.6];
        let cfg = EstimatorConfig::new(0.4, 1e-12, Kernel::Epanechnikov, grid.clone());
        let d = double_smoothed_moments(&p, &cfg).unwrap();
        let s = single_smoothed_m2(&p, Kernel::Epanechnikov, 0.4, &grid).unwrap();
        for (a, b) in d.iter().zip(&s) {
            assert!((a.m2 - b.m2).abs() < 1e-10, "{} vs {}", a.m2, b.m2);
            assert!((a.local_time - b.local_time).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_path_gives_b_squared_delta() {
        // X_t = b·t sampled every Δ: every squared increment is (bΔ)².
        let b = 0.3;
        let delta = 0.01;
        let v: Vec<f64> = (0..200).map(|k| b * k as f64 * delta).collect();
        let p = path(&v, delta);
        let cfg = EstimatorConfig::new(1e3, 1e3, Kernel::Epanechnikov, vec![0.3]);
        let r = double_smoothed_moments(&p, &cfg).unwrap();
        assert!((r[0].m2 - b * b * delta).abs() < 1e-12);
        assert!((r[0].m4 - b.powi(4) * delta.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn empty_region_is_flagged() {
        let p = path(&[0.0, 0.1, 0.0, 0.1, 0.0], 1.0);
        let cfg = EstimatorConfig::new(0.05, 0.05, Kernel::Epanechnikov, vec![5.0]);
        let r = double_smoothed_moments(&p, &cfg).unwrap();
        assert!(!r[0].reliable);
        assert!(r[0].m2.is_nan());
        assert_eq!(r[0].local_time, 0.0);
    }

    #[test]
    fn sparse_region_flagged_unreliable() {
        let p = path(&[0.0, 0.01, 0.0, 0.01, 0.0, 0.01, 0.5], 1.0);
        let cfg = EstimatorConfig::new(0.1, 0.1, Kernel::Epanechnikov, vec![0.0, 0.5]);
        let r = double_smoothed_moments(&p, &cfg).unwrap();
        // Default floor is 10·Δ·K(0)/h = 75; neither point gets there.
        assert!(r.iter().all(|e| !e.reliable));
        let cfg = cfg.with_min_local_time(0.0);
        let r = double_smoothed_moments(&p, &cfg).unwrap();
        assert!(r[0].reliable);
    }

    #[test]
    fn argument_errors() {
        let p = path(&[0.0, 1.0, 0.0], 1.0);
        let ok = EstimatorConfig::new(0.1, 0.1, Kernel::Epanechnikov, vec![0.0]);
        assert!(double_smoothed_moments(&path(&[0.0, 1.0], 1.0), &ok).is_err());
        for bad in [
            EstimatorConfig { h: 0.0, ..ok.clone() },
            EstimatorConfig { eps: -1.0, ..ok.clone() },
            EstimatorConfig { grid: vec![], ..ok.clone() },
            EstimatorConfig { grid: vec![1.0, 0.0], ..ok.clone() },
            EstimatorConfig { kernel: Kernel::Gaussian, ..ok.clone() },
        ] {
            assert!(double_smoothed_moments(&p, &bad).is_err(), "{bad:?}");
        }
        let gauss = EstimatorConfig { kernel: Kernel::Gaussian, ..ok }.with_engine(Engine::Naive);
        assert!(double_smoothed_moments(&p, &gauss).is_ok());
    }

    #[test]
    fn neighbor_stats_reported() {
        let v = [0.0, 1.0, 0.0, 1.0, 0.0];
        let cfg = EstimatorConfig::new(1e6, 0.5, Kernel::Epanechnikov, vec![0.5]);
        let r = double_smoothed_moments(&path(&v, 1.0), &cfg).unwrap();
        assert_eq!(r[0].neighbor_stats, NeighborStats { min: 1, median: 2, max: 2 });
    }

    #[test]
    fn default_grid_spans_bulk() {
        let v: Vec<f64> = (0..=100).map(|k| k as f64).collect();
        let g = default_grid(&path(&v, 1.0), 25);
        assert_eq!(g.len(), 25);
        assert!((g[0] - 5.0).abs() < 1e-12 && (g[24] - 95.0).abs() < 1e-12);
        assert_eq!(default_grid(&path(&[1.0; 5], 1.0), 25), vec![1.0]);
    }

    #[test]
    fn f32_engines_agree() {
        let v: Vec<f32> = (0..500).map(|k| ((k as f32) * 0.37).sin()).collect();
        let p = SamplePath::new(v, 0.01f32).unwrap();
        let cfg = EstimatorConfig::new(0.2f32, 0.1, Kernel::Epanechnikov, vec![-0.5, 0.0, 0.5]);
        let a = double_smoothed_moments(&p, &cfg.clone().with_engine(Engine::Naive)).unwrap();
        let b = double_smoothed_moments(&p, &cfg).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(((x.m2 - y.m2) / x.m2).abs() < 1e-5);
        }
    }
}
