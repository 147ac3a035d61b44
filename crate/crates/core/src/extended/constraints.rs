//! Threshold-and-orientation structure of the monotonicity constraint.
//!
//! Columns are the ascending `w` draws, i.e. ascending `μ̃ = μ + τw`. Under
//! orientation one, columns left of the split are nonincreasing in `s` and
//! the rest nondecreasing; orientation two is the reverse.

use serde::{Deserialize, Serialize};

use crate::extended::isotonic::tie_groups;
use crate::extended::objective::DecisionVars;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Orientation {
    /// Nonincreasing in `s` below the threshold, nondecreasing above.
    One,
    /// Nondecreasing below, nonincreasing above.
    Two,
}

impl Orientation {
    pub fn index(self) -> u8 {
        match self {
            Orientation::One => 1,
            Orientation::Two => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Candidate {
    /// Number of columns on the low side.
    pub split: usize,
    pub orientation: Orientation,
}

impl Candidate {
    /// Per column: nonincreasing in `s`?
    pub fn decreasing(&self, k1: usize) -> Vec<bool> {
        (0..k1).map(|k| (k < self.split) == (self.orientation == Orientation::One)).collect()
    }
}

/// Splits `0, stride, 2·stride, … < K₁` under both orientations. A split at
/// `K₁` repeats split `0` with the other orientation, so it is left out.
pub fn candidates(k1: usize, stride: usize) -> Vec<Candidate> {
    let stride = stride.clamp(1, k1.max(1));
    let mut out = Vec::new();
    for split in (0..k1).step_by(stride) {
        for orientation in [Orientation::One, Orientation::Two] {
            out.push(Candidate { split, orientation });
        }
    }
    out
}

/// Some split and orientation (over every split) under which `q` satisfies
/// the constraint, allowing slack `tol`. Tied `s` must match within `tol`.
pub fn c3_witness(q: &DecisionVars, s: &[f64], tol: f64) -> Option<Candidate> {
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[a].total_cmp(&s[b]).then(a.cmp(&b)));
    let sorted_s: Vec<f64> = order.iter().map(|&i| s[i]).collect();
    let groups = tie_groups(&sorted_s);
    let k1 = q.k1;
    let mut nonincreasing = vec![true; k1];
    let mut nondecreasing = vec![true; k1];
    for k in 0..k1 {
        let col: Vec<f64> = order.iter().map(|&i| q.get(i, k)).collect();
        for &(start, len) in &groups {
            let g = &col[start..start + len];
            if g.iter().any(|v| (v - g[0]).abs() > tol) {
                return None;
            }
        }
        for j in 1..col.len() {
            if sorted_s[j] == sorted_s[j - 1] {
                continue;
            }
            if col[j] > col[j - 1] + tol {
                nonincreasing[k] = false;
            }
            if col[j] < col[j - 1] - tol {
                nondecreasing[k] = false;
            }
        }
    }
    for split in 0..=k1 {
        let low = |ok: &[bool]| ok[..split].iter().all(|&b| b);
        let high = |ok: &[bool]| ok[split..].iter().all(|&b| b);
        if low(&nonincreasing) && high(&nondecreasing) {
            return Some(Candidate { split, orientation: Orientation::One });
        }
        if low(&nondecreasing) && high(&nonincreasing) {
            return Some(Candidate { split, orientation: Orientation::Two });
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn candidate_grid() {
        let c = candidates(200, 10);
        assert_eq!(c.len(), 40);
        assert_eq!(c[0], Candidate { split: 0, orientation: Orientation::One });
        assert_eq!(c.last().unwrap().split, 190);
        assert_eq!(candidates(3, 1).len(), 6);
        assert_eq!(candidates(3, 10).len(), 2);
        let d = Candidate { split: 2, orientation: Orientation::Two }.decreasing(4);
        assert_eq!(d, vec![false, false, true, true]);
    }

    #[test]
    fn witness_detection() {
        // rows given out of s order; sorted s = (0.1, 0.2, 0.3)
        let s = [0.3, 0.1, 0.2];
        // column 0 nondecreasing in s, column 1 nonincreasing
        let q = DecisionVars::new(3, 2, vec![0.9, 0.1, 0.2, 0.8, 0.5, 0.5]).unwrap();
        assert_eq!(c3_witness(&q, &s, 1e-12), Some(Candidate { split: 1, orientation: Orientation::Two }));
        let bad = DecisionVars::new(3, 1, vec![0.5, 0.5, 0.9]).unwrap();
        assert_eq!(c3_witness(&bad, &s, 1e-12), None);
        let tied = DecisionVars::new(2, 1, vec![0.5, 0.6]).unwrap();
        assert_eq!(c3_witness(&tied, &[0.2, 0.2], 1e-12), None);
    }
}
