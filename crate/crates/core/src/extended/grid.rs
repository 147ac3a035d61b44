//! Monte-Carlo standard-normal grids for the random effect `w` and the
//! within-study error `z`.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::Seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McGrid {
    /// `K₂` within-study draws, ascending.
    pub z: Vec<f64>,
    /// `K₁` random-effect draws, ascending.
    pub w: Vec<f64>,
    pub seed: Seed,
}

/// `k/2` draws, their negatives, and a zero when `k` is odd; sorted.
/// The set is symmetric, so its mean is zero up to rounding.
fn antithetic(seed: Seed, stream: u64, k: usize) -> Vec<f64> {
    let mut rng = seed.rng(stream);
    let mut v = Vec::with_capacity(k);
    for _ in 0..k / 2 {
        let x: f64 = StandardNormal.sample(&mut rng);
        v.push(x);
        v.push(-x);
    }
    if k % 2 == 1 {
        v.push(0.0);
    }
    v.sort_by(f64::total_cmp);
    v
}

impl McGrid {
    pub fn new(k1: usize, k2: usize, seed: Seed) -> Result<Self> {
        if k1 < 2 || k2 < 2 {
            return Err(Error::Config(format!("grid sizes must be at least 2 (got K1={k1}, K2={k2})")));
        }
        Ok(McGrid { z: antithetic(seed, 2, k2), w: antithetic(seed, 1, k1), seed })
    }

    /// Grid from explicit samples (sorted here).
    pub fn from_samples(mut z: Vec<f64>, mut w: Vec<f64>) -> Result<Self> {
        if z.is_empty() || w.is_empty() || z.iter().chain(&w).any(|v| !v.is_finite()) {
            return Err(Error::Config("grid samples must be finite and non-empty".into()));
        }
        z.sort_by(f64::total_cmp);
        w.sort_by(f64::total_cmp);
        Ok(McGrid { z, w, seed: Seed(0) })
    }

    pub fn k1(&self) -> usize {
        self.w.len()
    }

    pub fn k2(&self) -> usize {
        self.z.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_sorted_reproducible() {
        for &(k1, k2) in &[(2, 3), (7, 10), (200, 201)] {
            let g = McGrid::new(k1, k2, Seed(11)).unwrap();
            assert_eq!((g.k1(), g.k2()), (k1, k2));
            assert!(g.w.iter().sum::<f64>().abs() < 1e-12);
            assert!(g.z.iter().sum::<f64>().abs() < 1e-12);
            assert!(g.w.windows(2).all(|p| p[0] <= p[1]));
            for (a, b) in g.z.iter().zip(g.z.iter().rev()) {
                assert_eq!(*a, -*b);
            }
            assert_eq!(g, McGrid::new(k1, k2, Seed(11)).unwrap());
        }
        assert_ne!(McGrid::new(10, 10, Seed(1)).unwrap().z, McGrid::new(10, 10, Seed(2)).unwrap().z);
        assert!(McGrid::new(1, 10, Seed(1)).is_err());
    }
}
