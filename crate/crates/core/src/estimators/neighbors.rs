//! ε-neighbor queries over the sampled levels.
//!
//! For a level `v` a query returns, over `j ∈ {1, …, n−1}` with
//! `|X_{jΔ} − v| ≤ ε`, the count and the sums of squared and quartic forward
//! increments `X_{(j+1)Δ} − X_{jΔ}`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error};
use crate::scalar::{two_sum, CompensatedSum, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    /// Direct `O(n)` scan per query.
    Naive,
    /// Sorted levels with prefix sums, `O(log n)` per query.
    #[default]
    Fast,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Naive => "naive",
            Engine::Fast => "fast",
        })
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "naive" => Ok(Engine::Naive),
            "fast" => Ok(Engine::Fast),
            other => invalid(format!("unknown engine '{other}' (naive, fast)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborSums<T> {
    pub count: usize,
    pub sum_sq: T,
    pub sum_quart: T,
}

pub trait NeighborQuery<T> {
    fn query(&self, level: T) -> NeighborSums<T>;
}

/// Scan-based engine borrowing the path.
#[derive(Debug, Clone, Copy)]
pub struct NaiveNeighbors<'a, T> {
    values: &'a [T],
    eps: T,
}

impl<'a, T: Scalar> NaiveNeighbors<'a, T> {
    pub fn new(values: &'a [T], eps: T) -> Self {
        Self { values, eps }
    }
}

impl<T: Scalar> NeighborQuery<T> for NaiveNeighbors<'_, T> {
    fn query(&self, level: T) -> NeighborSums<T> {
        let n = self.values.len().saturating_sub(1);
        let mut count = 0;
        let mut sq = CompensatedSum::new();
        let mut quart = CompensatedSum::new();
        for j in 1..n {
            if (self.values[j] - level).abs() <= self.eps {
                let d = self.values[j + 1] - self.values[j];
                let d2 = d * d;
                count += 1;
                sq.add(d2);
                quart.add(d2 * d2);
            }
        }
        NeighborSums {
            count,
            sum_sq: sq.value(),
            sum_quart: quart.value(),
        }
    }
}

/// Double-word prefix sums so that range sums keep full relative precision.
#[derive(Debug, Clone)]
struct PrefixSums<T> {
    hi: Vec<T>,
    lo: Vec<T>,
}

impl<T: Scalar> PrefixSums<T> {
    fn new(terms: impl Iterator<Item = T>) -> Self {
        let mut hi = vec![T::zero()];
        let mut lo = vec![T::zero()];
        let mut acc = CompensatedSum::new();
        for t in terms {
            acc.add(t);
            let (s, c) = acc.parts();
            // Renormalize so that `hi` carries the rounded total.
            let (h, l) = two_sum(s, c);
            hi.push(h);
            lo.push(l);
        }
        Self { hi, lo }
    }

    #[inline]
    fn range(&self, start: usize, end: usize) -> T {
        (self.hi[end] - self.hi[start]) + (self.lo[end] - self.lo[start])
    }
}

/// Levels `X_1, …, X_{n−1}` sorted (stable in time index) with prefix sums
/// of the matching squared and quartic increments.
#[derive(Debug, Clone)]
pub struct SortedNeighbors<T> {
    eps: T,
    levels: Vec<T>,
    sq: PrefixSums<T>,
    quart: PrefixSums<T>,
}

impl<T: Scalar> SortedNeighbors<T> {
    pub fn new(values: &[T], eps: T) -> Self {
        let n = values.len().saturating_sub(1);
        let mut order: Vec<usize> = (1..n).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite levels"));
        let levels = order.iter().map(|&j| values[j]).collect();
        let incr2 = |j: usize| {
            let d = values[j + 1] - values[j];
            d * d
        };
        let sq = PrefixSums::new(order.iter().map(|&j| incr2(j)));
        let quart = PrefixSums::new(order.iter().map(|&j| {
            let d2 = incr2(j);
            d2 * d2
        }));
        Self { eps, levels, sq, quart }
    }

    /// Half-open range of sorted positions whose level is within ε of `level`.
    ///
    /// Uses the same predicate `|X − v| ≤ ε` as the scan; since rounded
    /// subtraction is monotone the matching set is contiguous.
    #[inline]
    pub fn window(&self, level: T) -> (usize, usize) {
        let eps = self.eps;
        let lo = self.levels.partition_point(|&x| x - level < -eps);
        let hi = self.levels.partition_point(|&x| x - level <= eps);
        (lo, hi.max(lo))
    }
}

impl<T: Scalar> NeighborQuery<T> for SortedNeighbors<T> {
    fn query(&self, level: T) -> NeighborSums<T> {
        let (lo, hi) = self.window(level);
        NeighborSums {
            count: hi - lo,
            sum_sq: self.sq.range(lo, hi),
            sum_quart: self.quart.range(lo, hi),
        }
    }
}

/// Either engine behind one query interface.
#[derive(Debug, Clone)]
pub enum NeighborEngine<'a, T> {
    Naive(NaiveNeighbors<'a, T>),
    Fast(SortedNeighbors<T>),
}

impl<T: Scalar> NeighborQuery<T> for NeighborEngine<'_, T> {
    #[inline]
    fn query(&self, level: T) -> NeighborSums<T> {
        match self {
            NeighborEngine::Naive(e) => e.query(level),
            NeighborEngine::Fast(e) => e.query(level),
        }
    }
}

/// Builds the neighbor query structure for a path's levels.
pub fn neighbor_index<T: Scalar>(values: &[T], eps: T, engine: Engine) -> NeighborEngine<'_, T> {
    match engine {
        Engine::Naive => NeighborEngine::Naive(NaiveNeighbors::new(values, eps)),
        Engine::Fast => NeighborEngine::Fast(SortedNeighbors::new(values, eps)),
    }
}
