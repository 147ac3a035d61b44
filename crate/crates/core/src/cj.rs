//! Copas-Jackson worst-case bias bound under a non-increasing m-representation.

use serde::{Deserialize, Serialize};

use crate::data::MetaDataset;
use crate::error::{Error, Result};
use crate::stats::mills_factor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cj,
    A1,
    Extended,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Cj => "cj",
            Method::A1 => "a1",
            Method::Extended => "ext",
        }
    }
}

/// Lower and upper bias bounds at marginal selection probability `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub p: f64,
    pub lower: f64,
    pub upper: f64,
    pub method: Method,
    pub tau_used: f64,
}

impl BoundResult {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(p, "(0, 1]"))
    }
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if tau >= 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(tau, "[0, inf)"))
    }
}

/// `U = (Σσᵢ⁻¹ / Σσᵢ⁻²) · φ(Φ⁻¹(p))/p`, `L = −U`, with `σᵢ² = sᵢ² + τ²`.
pub fn cj_bound(data: &MetaDataset, tau: f64, p: f64) -> Result<BoundResult> {
    check_p(p)?;
    check_tau(tau)?;
    let (a, b) = data.studies().iter().fold((0.0, 0.0), |(a, b), st| {
        let v = st.s * st.s + tau * tau;
        (a + v.sqrt().recip(), b + v.recip())
    });
    let upper = a / b * mills_factor(p)?;
    Ok(BoundResult { p, lower: -upper, upper, method: Method::Cj, tau_used: tau })
}

pub fn cj_bound_sweep(data: &MetaDataset, tau: f64, p_grid: &[f64]) -> Result<Vec<BoundResult>> {
    p_grid.iter().map(|&p| cj_bound(data, tau, p)).collect()
}

/// `p = N / (N + M)` for `m` unpublished studies.
pub fn p_from_unpublished(n: usize, m: usize) -> f64 {
    n as f64 / (n + m) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::corticosteroids;
    use crate::stats::{big_phi_inv, phi};

    #[test]
    fn boundary_and_equal_s() {
        let ds = corticosteroids();
        let b = cj_bound(&ds, 0.0, 1.0).unwrap();
        assert_eq!((b.lower, b.upper), (0.0, 0.0));
        let eq = MetaDataset::from_pairs(&[0.1, -0.3, 0.8], &[0.4, 0.4, 0.4]).unwrap();
        let u = cj_bound(&eq, 0.0, 0.3).unwrap().upper;
        let expect = 0.4 * phi(big_phi_inv(0.3).unwrap()) / 0.3;
        assert!((u - expect).abs() < 1e-14);
        assert!(cj_bound(&ds, 0.0, 0.0).is_err());
        assert!(cj_bound(&ds, -1.0, 0.5).is_err());
    }

    #[test]
    fn sweep_monotone() {
        let ds = corticosteroids();
        let grid: Vec<f64> = (1..=9).rev().map(|i| i as f64 / 10.0).collect();
        let res = cj_bound_sweep(&ds, 0.0, &grid).unwrap();
        assert_eq!(res.len(), 9);
        assert!(res.windows(2).all(|w| w[1].upper > w[0].upper));
        assert_eq!(p_from_unpublished(14, 14), 0.5);
    }
}
