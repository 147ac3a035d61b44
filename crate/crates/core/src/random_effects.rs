//! Random-effects marginal likelihood `yᵢ ~ N(μ, τ² + sᵢ²)` and its
//! maximum-likelihood fit.

use serde::{Deserialize, Serialize};

use crate::data::MetaDataset;
use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z975: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReFit {
    pub mu_hat: f64,
    pub tau_hat: f64,
    pub se_mu: f64,
    pub ci_mu: (f64, f64),
    pub loglik: f64,
}

pub fn loglik(data: &MetaDataset, mu: f64, tau: f64) -> f64 {
    let tau2 = tau * tau;
    data.studies()
        .iter()
        .map(|st| {
            let v = tau2 + st.s * st.s;
            -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (st.y - mu).powi(2) / (2.0 * v)
        })
        .sum()
}

/// Inverse-variance weighted mean at heterogeneity `tau`; the maximizer of
/// [`loglik`] over `mu`.
pub fn weighted_mean(data: &MetaDataset, tau: f64) -> f64 {
    let tau2 = tau * tau;
    let (num, den) = data.studies().iter().fold((0.0, 0.0), |(n, d), st| {
        let w = 1.0 / (tau2 + st.s * st.s);
        (n + w * st.y, d + w)
    });
    num / den
}

pub fn profile_loglik(data: &MetaDataset, tau: f64) -> f64 {
    loglik(data, weighted_mean(data, tau), tau)
}

/// ML estimate of `(mu, tau)`.
///
/// `mu` is profiled out in closed form. The profile in `tau` is scanned on a
/// log grid over `[0, 10·sd(y)]`, refined by golden-section search in
/// `log(tau + eps)`, and finally compared against the `tau = 0` boundary.
pub fn fit_ml(data: &MetaDataset) -> Result<ReFit> {
    if data.len() < 2 {
        return Err(Error::TooFewStudies(data.len()));
    }
    if data.studies().iter().any(|s| !s.y.is_finite() || !s.s.is_finite()) {
        return Err(Error::InvalidStudy("non-finite input".into()));
    }
    let y = data.y();
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let tau_max = 10.0 * sd;

    let mut tau_hat = 0.0;
    let mut best = profile_loglik(data, 0.0);
    if tau_max > 0.0 {
        let eps = 1e-8 * tau_max;
        let (u_lo, u_hi) = (eps.ln(), (tau_max + eps).ln());
        let to_tau = |u: f64| (u.exp() - eps).max(0.0);
        let f = |u: f64| profile_loglik(data, to_tau(u));
        const GRID: usize = 200;
        let step = (u_hi - u_lo) / GRID as f64;
        let (mut ib, mut fb) = (0, f64::NEG_INFINITY);
        for i in 0..=GRID {
            let v = f(u_lo + step * i as f64);
            if v > fb {
                fb = v;
                ib = i;
            }
        }
        let a = u_lo + step * (ib.saturating_sub(1)) as f64;
        let b = (u_lo + step * (ib + 1) as f64).min(u_hi);
        let u = golden_max(f, a, b, 1e-12);
        let cand = to_tau(u);
        let val = profile_loglik(data, cand);
        // ties within rounding go to the boundary
        if val > best + 1e-12 * (1.0 + best.abs()) {
            best = val;
            tau_hat = cand;
        }
    }
    let mu_hat = weighted_mean(data, tau_hat);
    let tau2 = tau_hat * tau_hat;
    let info: f64 = data.studies().iter().map(|st| 1.0 / (tau2 + st.s * st.s)).sum();
    let se_mu = info.powf(-0.5);
    Ok(ReFit {
        mu_hat,
        tau_hat,
        se_mu,
        ci_mu: (mu_hat - Z975 * se_mu, mu_hat + Z975 * se_mu),
        loglik: best,
    })
}

/// Golden-section maximization on `[a, b]`.
pub(crate) fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    const R: f64 = 0.618_033_988_749_894_8;
    let mut c = b - R * (b - a);
    let mut d = a + R * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol * (1.0 + a.abs() + b.abs()) {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - R * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + R * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        c
    } else {
        d
    }
}
