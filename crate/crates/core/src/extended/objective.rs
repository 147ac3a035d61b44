//! The discretized bias and its reduction to `q_{i,k₁}`.
//!
//! With `q_{i,k₁} = (1/K₂) Σ_{k₂} p_{i,k₁,k₂}` fixed, the bias is linear in
//! the `p_{i,k₁,k₂}` with coefficients `s_i z_{k₂}`, so the extreme inner
//! choice fills the largest (or smallest) `z` first: a prefix sum with one
//! fractional term. The analytic variant replaces that prefix mean by its
//! `K₂ → ∞` limit `±φ(Φ⁻¹(q))`.

use serde::{Deserialize, Serialize};

use crate::data::MetaDataset;
use crate::error::{Error, Result};
use crate::extended::grid::McGrid;
use crate::selection::{ReContext, SelectionModel};
use crate::stats::{phi, quantile_clamped};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerMode {
    Analytic,
    Discrete,
}

/// `q_{i,k₁}` for studies in dataset order, row-major `N × K₁`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionVars {
    pub n: usize,
    pub k1: usize,
    pub q: Vec<f64>,
}

impl DecisionVars {
    pub fn new(n: usize, k1: usize, q: Vec<f64>) -> Result<Self> {
        if q.len() != n * k1 {
            return Err(Error::Config(format!("expected {} entries, got {}", n * k1, q.len())));
        }
        Ok(DecisionVars { n, k1, q })
    }

    pub fn constant(n: usize, k1: usize, v: f64) -> Self {
        DecisionVars { n, k1, q: vec![v; n * k1] }
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.q[i * self.k1 + k]
    }

    /// `p̄_i = (1/K₁) Σ_k q_{i,k}`.
    pub fn p_bar(&self) -> Vec<f64> {
        self.q.chunks(self.k1).map(|r| r.iter().sum::<f64>() / self.k1 as f64).collect()
    }

    pub fn mean(&self) -> f64 {
        self.q.iter().sum::<f64>() / self.q.len() as f64
    }
}

/// Studies in ascending-`s` order, with everything the objective needs.
#[derive(Debug, Clone)]
pub(crate) struct Objective {
    pub n: usize,
    pub k1: usize,
    /// `order[j]` is the dataset index of sorted row `j`.
    pub order: Vec<usize>,
    pub s: Vec<f64>,
    c: Vec<f64>,
    tau: f64,
    pub w: Vec<f64>,
    mode: InnerMode,
    dir: Direction,
    k2: usize,
    /// `z/K₂` ordered from the extreme end inward, and its prefix sums.
    zext: Vec<f64>,
    prefix: Vec<f64>,
}

impl Objective {
    pub fn new(s_data: &[f64], tau: f64, grid: &McGrid, dir: Direction, mode: InnerMode) -> Self {
        let mut order: Vec<usize> = (0..s_data.len()).collect();
        order.sort_by(|&a, &b| s_data[a].total_cmp(&s_data[b]).then(a.cmp(&b)));
        let s: Vec<f64> = order.iter().map(|&i| s_data[i]).collect();
        let v: Vec<f64> = s.iter().map(|s| 1.0 / (s * s + tau * tau)).collect();
        let total: f64 = v.iter().sum();
        let c = v.iter().map(|x| x / total).collect();
        let zext: Vec<f64> = match dir {
            Direction::Max => grid.z.iter().rev().copied().collect(),
            Direction::Min => grid.z.clone(),
        };
        // scaled by 1/K₂, with a repeated last entry as the q = 1 sentinel
        let k2f = zext.len() as f64;
        let mut zext: Vec<f64> = zext.iter().map(|z| z / k2f).collect();
        zext.push(*zext.last().unwrap());
        let mut prefix = Vec::with_capacity(zext.len());
        prefix.push(0.0);
        let mut acc = 0.0;
        for z in &zext[..zext.len() - 1] {
            acc += z;
            prefix.push(acc);
        }
        Objective {
            n: s.len(),
            k1: grid.k1(),
            order,
            s,
            c,
            tau,
            w: grid.w.clone(),
            mode,
            dir,
            k2: grid.k2(),
            zext,
            prefix,
        }
    }

    /// Extreme inner mean `D(q)` and its derivative.
    #[inline]
    fn inner(&self, q: f64) -> (f64, f64) {
        match self.mode {
            InnerMode::Discrete => {
                // prefix and zext carry a sentinel so q = 1 needs no branch
                let x = q * self.k2 as f64;
                let m = (x as usize).min(self.k2);
                let f = x - m as f64;
                (self.prefix[m] + f * self.zext[m], self.zext[m] * self.k2 as f64)
            }
            InnerMode::Analytic => {
                if q >= 1.0 {
                    return (0.0, 0.0);
                }
                let x = quantile_clamped(q);
                match self.dir {
                    Direction::Max => (phi(x), -x),
                    Direction::Min => (-phi(x), x),
                }
            }
        }
    }

    /// `b(q)` for column-major `q` in sorted-row order; fills `grad` when given.
    pub fn eval(&self, q: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let (n, k1) = (self.n, self.k1);
        let mut a = vec![0.0; n];
        let mut p = vec![0.0; n];
        for k in 0..k1 {
            let tw = self.tau * self.w[k];
            let col = &q[k * n..(k + 1) * n];
            match grad.as_deref_mut() {
                Some(g) => {
                    let gcol = &mut g[k * n..(k + 1) * n];
                    for i in 0..n {
                        let (d, dd) = self.inner(col[i]);
                        a[i] += self.s[i] * d + tw * col[i];
                        p[i] += col[i];
                        gcol[i] = self.s[i] * dd + tw;
                    }
                }
                None => {
                    for i in 0..n {
                        let (d, _) = self.inner(col[i]);
                        a[i] += self.s[i] * d + tw * col[i];
                        p[i] += col[i];
                    }
                }
            }
        }
        // a and p are K₁ times the row means; their ratio is unaffected
        let mut b = 0.0;
        for i in 0..n {
            a[i] /= p[i];
            b += self.c[i] * a[i];
            p[i] = self.c[i] / p[i];
        }
        if let Some(g) = grad {
            for k in 0..k1 {
                let gcol = &mut g[k * n..(k + 1) * n];
                for i in 0..n {
                    gcol[i] = p[i] * (gcol[i] - a[i]);
                }
            }
        }
        b
    }

    /// Dataset-order row-major to sorted column-major.
    pub fn to_internal(&self, dv: &DecisionVars) -> Vec<f64> {
        let mut out = vec![0.0; self.n * self.k1];
        for (j, &i) in self.order.iter().enumerate() {
            for k in 0..self.k1 {
                out[k * self.n + j] = dv.get(i, k);
            }
        }
        out
    }

    pub fn to_external(&self, q: &[f64]) -> DecisionVars {
        let mut out = vec![0.0; self.n * self.k1];
        for (j, &i) in self.order.iter().enumerate() {
            for k in 0..self.k1 {
                out[i * self.k1 + k] = q[k * self.n + j];
            }
        }
        DecisionVars { n: self.n, k1: self.k1, q: out }
    }
}

fn check_vars(data: &MetaDataset, grid: &McGrid, q: &DecisionVars) -> Result<()> {
    if q.n != data.len() || q.k1 != grid.k1() || q.q.len() != q.n * q.k1 {
        return Err(Error::Config("decision variables do not match data and grid".into()));
    }
    if q.q.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Config("decision variables must lie in [0, 1]".into()));
    }
    if let Some(i) = q.p_bar().iter().position(|&p| p <= 0.0) {
        return Err(Error::ZeroMass(i));
    }
    Ok(())
}

/// Reduced bias for `q` (dataset-order rows) with the inner dimension at its
/// extreme for `direction`.
pub fn bias_objective(
    data: &MetaDataset,
    tau: f64,
    grid: &McGrid,
    q: &DecisionVars,
    direction: Direction,
    mode: InnerMode,
) -> Result<f64> {
    check_vars(data, grid, q)?;
    let obj = Objective::new(&data.s(), tau, grid, direction, mode);
    Ok(obj.eval(&obj.to_internal(q), None))
}

/// Discretize a selection model on the grid: `p_{i,k₁,k₂} = p₀(μ + τw + s z, s)`.
/// Returns the `q_{i,k₁}` and the bias of the full (unreduced) variables.
pub fn model_bias(
    data: &MetaDataset,
    ctx: ReContext,
    grid: &McGrid,
    model: &SelectionModel,
) -> Result<(DecisionVars, f64)> {
    let (k1, k2) = (grid.k1(), grid.k2());
    let mut q = Vec::with_capacity(data.len() * k1);
    let (mut num, mut den) = (0.0, 0.0);
    for st in data.studies() {
        let (mut a, mut p) = (0.0, 0.0);
        for &w in &grid.w {
            let mut row = 0.0;
            for &z in &grid.z {
                let v = model.p0(ctx.mu + ctx.tau * w + st.s * z, st.s, ctx);
                row += v;
                a += (st.s * z + ctx.tau * w) * v;
            }
            q.push(row / k2 as f64);
            p += row;
        }
        if p <= 0.0 {
            return Err(Error::ZeroMass(q.len() / k1 - 1));
        }
        let v = 1.0 / (st.s * st.s + ctx.tau * ctx.tau);
        num += v * a / p;
        den += v;
    }
    Ok((DecisionVars { n: data.len(), k1, q }, num / den))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Seed;

    #[test]
    fn no_selection_means_no_bias() {
        let ds = MetaDataset::from_pairs(&[0.1, 0.5, -0.2], &[0.3, 0.6, 0.2]).unwrap();
        let grid = McGrid::new(11, 9, Seed(3)).unwrap();
        let one = DecisionVars::constant(3, 11, 1.0);
        for dir in [Direction::Max, Direction::Min] {
            for mode in [InnerMode::Discrete, InnerMode::Analytic] {
                let b = bias_objective(&ds, 0.7, &grid, &one, dir, mode).unwrap();
                assert!(b.abs() < 1e-12, "{b}");
            }
        }
    }

    #[test]
    fn single_cell_is_the_mills_factor() {
        let ds = MetaDataset::from_pairs(&[0.0, 0.0], &[0.8, 0.8]).unwrap();
        let grid = McGrid::from_samples(vec![-1.0, 1.0], vec![0.0]).unwrap();
        let half = DecisionVars::constant(2, 1, 0.5);
        let b = bias_objective(&ds, 0.0, &grid, &half, Direction::Max, InnerMode::Analytic).unwrap();
        assert!((b - 0.8 * 2.0 * phi(0.0)).abs() < 1e-12);
        // the discrete version picks the +1 sample
        let b = bias_objective(&ds, 0.0, &grid, &half, Direction::Max, InnerMode::Discrete).unwrap();
        assert!((b - 0.8).abs() < 1e-14);
        let zero = DecisionVars::new(2, 1, vec![0.5, 0.0]).unwrap();
        assert!(matches!(
            bias_objective(&ds, 0.0, &grid, &zero, Direction::Max, InnerMode::Discrete),
            Err(Error::ZeroMass(1))
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let s = [0.2, 0.5, 0.35];
        let grid = McGrid::new(5, 7, Seed(9)).unwrap();
        for dir in [Direction::Max, Direction::Min] {
            for mode in [InnerMode::Discrete, InnerMode::Analytic] {
                let obj = Objective::new(&s, 0.4, &grid, dir, mode);
                let q: Vec<f64> = (0..15).map(|j| 0.13 + 0.05 * j as f64).collect();
                let mut g = vec![0.0; 15];
                obj.eval(&q, Some(&mut g));
                for j in 0..15 {
                    let h = 1e-7;
                    let mut qp = q.clone();
                    qp[j] += h;
                    let mut qm = q.clone();
                    qm[j] -= h;
                    let fd = (obj.eval(&qp, None) - obj.eval(&qm, None)) / (2.0 * h);
                    assert!((fd - g[j]).abs() < 1e-6, "{dir:?} {mode:?} j={j} fd={fd} g={}", g[j]);
                }
            }
        }
    }

    #[test]
    fn reduction_dominates_model_bias() {
        let ds = MetaDataset::from_pairs(&[0.4, 0.1, 0.9], &[0.3, 0.5, 0.2]).unwrap();
        let grid = McGrid::new(20, 30, Seed(5)).unwrap();
        let ctx = ReContext::new(0.3, 0.5);
        let m = SelectionModel::Probit2 { alpha: 0.2, beta: 1.5, tail: crate::selection::Tail::One };
        let (q, b) = model_bias(&ds, ctx, &grid, &m).unwrap();
        let hi = bias_objective(&ds, 0.5, &grid, &q, Direction::Max, InnerMode::Discrete).unwrap();
        let lo = bias_objective(&ds, 0.5, &grid, &q, Direction::Min, InnerMode::Discrete).unwrap();
        assert!(lo <= b + 1e-12 && b <= hi + 1e-12, "{lo} {b} {hi}");
        assert!(b > 0.0);
    }

    #[test]
    fn layout_round_trip() {
        let s = [0.5, 0.1, 0.3];
        let grid = McGrid::new(4, 4, Seed(1)).unwrap();
        let obj = Objective::new(&s, 0.0, &grid, Direction::Max, InnerMode::Discrete);
        assert_eq!(obj.order, vec![1, 2, 0]);
        let dv = DecisionVars::new(3, 4, (0..12).map(|v| v as f64 / 12.0).collect()).unwrap();
        assert_eq!(obj.to_external(&obj.to_internal(&dv)), dv);
    }
}
