//! p-grid sweeps: bounds on the estimate scale next to PB-adjusted estimates
//! from parametric selection models.
//!
//! The comparator maximizes the likelihood of the published studies
//! conditional on publication,
//! `Σ log[φ((yᵢ−μ)/σᵢ)/σᵢ · p₀(yᵢ,sᵢ) / p₂(sᵢ; μ, τ)]`, with the selection
//! parameter tied to the target by `(1/N) Σ 1/p₀(yᵢ,sᵢ) = 1/p`. For
//! `t`-statistic models `p₀` does not involve `(μ, τ)`, so the constraint
//! fixes the free parameter once and the outer search is over `(μ, τ)` only.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cj::cj_bound;
use crate::data::MetaDataset;
use crate::error::{Error, Result};
use crate::extended::{extended_bound, OptConfig};
use crate::random_effects::{golden_max, ReFit};
use crate::selection::{calibrate_with, Family, ReContext, SelectionModel, Tail};

/// Which sign of `t` the comparator models favour for publication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Favor {
    /// The sign of the unadjusted pooled estimate.
    Auto,
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparatorConfig {
    pub tail: Tail,
    pub favor: Favor,
    /// Keep `τ` at the initial fit instead of re-estimating it.
    pub fix_tau: bool,
    /// Slopes profiled for the two-parameter families.
    pub slopes: Vec<f64>,
}

impl Default for ComparatorConfig {
    fn default() -> Self {
        ComparatorConfig {
            tail: Tail::One,
            favor: Favor::Auto,
            fix_tau: false,
            slopes: vec![0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjustedFit {
    pub mu: f64,
    pub tau: f64,
    /// Calibrated model, acting on the sign-adjusted effects.
    pub model: Option<SelectionModel>,
    pub loglik: f64,
}

fn orientation_sign(favor: Favor, init: &ReFit) -> f64 {
    match favor {
        Favor::Positive => 1.0,
        Favor::Negative => -1.0,
        Favor::Auto => {
            if init.mu_hat < 0.0 {
                -1.0
            } else {
                1.0
            }
        }
    }
}

/// Conditional log-likelihood up to the `θ`-only term `Σ log p₀`. Points
/// where `p₂` underflows count as infeasible.
fn cond_loglik(pairs: &[(f64, f64)], model: &SelectionModel, mu: f64, tau: f64) -> f64 {
    let ctx = ReContext::new(mu, tau);
    let mut ll = 0.0;
    for &(y, s) in pairs {
        let v = s * s + tau * tau;
        let lp2 = model.ln_p2(s, ctx);
        if !lp2.is_finite() {
            return f64::NEG_INFINITY;
        }
        ll += -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (y - mu).powi(2) / (2.0 * v) - lp2;
    }
    ll
}

/// Scan then golden-section refine.
fn scan_max<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> (f64, f64) {
    let step = (hi - lo) / n as f64;
    let (mut ib, mut fb) = (0, f64::NEG_INFINITY);
    for i in 0..=n {
        let v = f(lo + step * i as f64);
        if v > fb {
            fb = v;
            ib = i;
        }
    }
    let a = lo + step * ib.saturating_sub(1) as f64;
    let b = (lo + step * (ib + 1) as f64).min(hi);
    let x = golden_max(&f, a, b, 1e-9);
    let fx = f(x);
    if fx >= fb {
        (x, fx)
    } else {
        (lo + step * ib as f64, fb)
    }
}

/// Maximize the conditional likelihood over `(μ, τ)` for a fixed model.
fn fit_conditional(pairs: &[(f64, f64)], model: &SelectionModel, mu0: f64, tau0: f64, fix_tau: bool) -> (f64, f64, f64) {
    let spread = pairs.iter().map(|&(y, s)| (y - mu0).abs() + 2.0 * s).fold(0.0, f64::max);
    let (mlo, mhi) = (mu0 - 3.0 * spread, mu0 + 3.0 * spread);
    let profile = |tau: f64| scan_max(|mu| cond_loglik(pairs, model, mu, tau), mlo, mhi, 48);
    if fix_tau {
        let (mu, ll) = profile(tau0);
        return (mu, tau0, ll);
    }
    let n = pairs.len() as f64;
    let ybar = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let sd = (pairs.iter().map(|p| (p.0 - ybar).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let tau_max = 3.0 * tau0.max(sd).max(1e-3);
    // τ on a square-root scale to resolve the region near zero
    let (u, _) = scan_max(|u| profile(u * u).1, 0.0, tau_max.sqrt(), 24);
    let mut tau = u * u;
    let (mut mu, mut ll) = profile(tau);
    let (mu_b, ll_b) = profile(0.0);
    if ll_b >= ll - 1e-12 * (1.0 + ll.abs()) {
        (mu, tau, ll) = (mu_b, 0.0, ll_b);
    }
    (mu, tau, ll)
}

/// PB-adjusted `(μ, τ)` under `family`, calibrated so that the Horvitz-Thompson
/// total `Σ 1/p₀` matches `N/target_p`.
pub fn adjusted_estimate(
    data: &MetaDataset,
    family: Family,
    target_p: f64,
    init: &ReFit,
    config: &ComparatorConfig,
) -> Result<AdjustedFit> {
    if !(target_p > 0.0 && target_p <= 1.0) {
        return Err(Error::Domain(target_p, "(0, 1]"));
    }
    if family == Family::Heckman {
        return Err(Error::Config("the comparator takes t-statistic families only".into()));
    }
    if target_p >= 1.0 {
        return Ok(AdjustedFit { mu: init.mu_hat, tau: init.tau_hat, model: None, loglik: init.loglik });
    }
    let sign = orientation_sign(config.favor, init);
    let pairs: Vec<(f64, f64)> = data.studies().iter().map(|st| (sign * st.y, st.s)).collect();
    // p₀ of t families ignores the context
    let ctx = ReContext::new(0.0, 0.0);
    let harmonic = |m: &SelectionModel| {
        let inv: f64 = pairs.iter().map(|&(y, s)| 1.0 / m.p0(y, s, ctx)).sum();
        pairs.len() as f64 / inv
    };
    let mut slopes: Vec<f64> = if family.is_two_parameter() { config.slopes.clone() } else { vec![0.0] };
    slopes.sort_by(f64::total_cmp);
    if slopes.is_empty() || slopes[0] <= 0.0 && family.is_two_parameter() {
        return Err(Error::Config("slope grid must be non-empty and positive".into()));
    }
    let (mu0, tau0) = (sign * init.mu_hat, init.tau_hat);
    let fit_at = |slope: f64| -> Result<AdjustedFit> {
        let model = calibrate_with(family.model(slope, config.tail), target_p, harmonic)?;
        let (mu, tau, ll) = fit_conditional(&pairs, &model, mu0, tau0, config.fix_tau);
        let ll_full = ll + pairs.iter().map(|&(y, s)| model.p0(y, s, ctx).ln()).sum::<f64>();
        Ok(AdjustedFit { mu: sign * mu, tau, model: Some(model), loglik: ll_full })
    };
    let fits: Vec<Result<AdjustedFit>> = slopes.iter().map(|&b| fit_at(b)).collect();
    let mut best: Option<(usize, AdjustedFit)> = None;
    for (i, f) in fits.iter().enumerate() {
        if let Ok(f) = f {
            if f.loglik.is_finite() && best.is_none_or(|(_, b)| f.loglik > b.loglik) {
                best = Some((i, *f));
            }
        }
    }
    let Some((ib, mut out)) = best else {
        return Err(fits.into_iter().find_map(|f| f.err()).unwrap_or(Error::Config("no finite fit".into())));
    };
    if slopes.len() > 1 {
        // refine the profiled slope between the neighbouring grid points
        let lo = slopes[ib.saturating_sub(1)].max(1e-6).ln();
        let hi = slopes[(ib + 1).min(slopes.len() - 1)].ln();
        let ll = |u: f64| fit_at(u.exp()).map_or(f64::NEG_INFINITY, |f| f.loglik);
        let u = golden_max(ll, lo, hi, 1e-4);
        if let Ok(f) = fit_at(u.exp()) {
            if f.loglik > out.loglik {
                out = f;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Degraded,
    Failed(String),
}

impl CellStatus {
    pub fn label(&self) -> String {
        match self {
            CellStatus::Ok => "ok".into(),
            CellStatus::Degraded => "degraded".into(),
            CellStatus::Failed(m) => format!("error: {m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub value: f64,
    pub status: CellStatus,
}

impl Cell {
    fn ok(value: f64) -> Self {
        Cell { value, status: CellStatus::Ok }
    }

    fn failed(e: &Error) -> Self {
        Cell { value: f64::NAN, status: CellStatus::Failed(e.to_string()) }
    }
}

/// One grid point, all values on the estimate scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p: f64,
    pub cj_upper: Cell,
    pub cj_lower: Cell,
    pub ext_upper: Cell,
    pub ext_lower: Cell,
    pub adjusted: Vec<(Family, Cell)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub families: Vec<Family>,
    /// `τ` for the bounds; `None` uses the ML fit.
    pub tau: Option<f64>,
    pub opt: OptConfig,
    pub comparator: ComparatorConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            families: Family::T_TYPES.to_vec(),
            tau: None,
            opt: OptConfig::default(),
            comparator: ComparatorConfig::default(),
        }
    }
}

/// The standard grid `0.1, 0.2, …, 0.9, 1`.
pub fn default_p_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

pub fn sweep(data: &MetaDataset, init: &ReFit, p_grid: &[f64], config: &SweepConfig) -> Result<Vec<SweepRow>> {
    if p_grid.is_empty() {
        return Err(Error::Config("empty p grid".into()));
    }
    let tau = config.tau.unwrap_or(init.tau_hat);
    let mu = init.mu_hat;
    let rows = p_grid
        .par_iter()
        .map(|&p| {
            let (cj_upper, cj_lower) = match cj_bound(data, tau, p) {
                Ok(b) => (Cell::ok(mu + b.upper), Cell::ok(mu + b.lower)),
                Err(e) => (Cell::failed(&e), Cell::failed(&e)),
            };
            let (ext_upper, ext_lower) = match extended_bound(data, tau, mu, p, &config.opt) {
                Ok(e) => {
                    let cell = |v: f64, degraded: bool| Cell {
                        value: mu + v,
                        status: if degraded { CellStatus::Degraded } else { CellStatus::Ok },
                    };
                    (
                        cell(e.bound.upper, e.a1.upper.degraded),
                        cell(e.bound.lower, e.a1.lower.degraded),
                    )
                }
                Err(e) => (Cell::failed(&e), Cell::failed(&e)),
            };
            let adjusted = config
                .families
                .iter()
                .map(|&f| {
                    let cell = match adjusted_estimate(data, f, p, init, &config.comparator) {
                        Ok(a) => Cell::ok(a.mu),
                        Err(e) => Cell::failed(&e),
                    };
                    (f, cell)
                })
                .collect();
            SweepRow { p, cj_upper, cj_lower, ext_upper, ext_lower, adjusted }
        })
        .collect();
    Ok(rows)
}

/// Tidy CSV: `p,method,family,value,status`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["p", "method", "family", "value", "status"])?;
    for r in rows {
        let p = r.p.to_string();
        for (method, cell) in [
            ("cj_upper", &r.cj_upper),
            ("cj_lower", &r.cj_lower),
            ("ext_upper", &r.ext_upper),
            ("ext_lower", &r.ext_lower),
        ] {
            w.write_record([p.as_str(), method, "", &cell.value.to_string(), &cell.status.label()])?;
        }
        for (f, cell) in &r.adjusted {
            w.write_record([p.as_str(), "adjusted", f.name(), &cell.value.to_string(), &cell.status.label()])?;
        }
    }
    w.flush()?;
    Ok(())
}
