//! Parametric selection models `p₀(y, s)` and their μ- and m-representations
//!
//! * `p₀(y, s)` — probability that a study with estimate `y` and standard
//!   error `s` is published;
//! * `p₁(μ̃, s) = ∫ p₀(y, s) φ((y − μ̃)/s)/s dy` — averaged over the
//!   within-study error for a study whose true effect is `μ̃`;
//! * `p₂(s) = ∫ p₁(μ̃, s) φ((μ̃ − μ)/τ)/τ dμ̃` — averaged over the random
//!   effect as well.
//!
//! The `t`-statistic families depend on the data only through `t = y/s`
//! (or `|t|` for two-sided variants); Copas-Heckman depends on `(μ, τ)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{GaussHermite, GaussLegendre};
use crate::stats::{big_phi, find_root_expanding, ln_big_phi, phi};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tail {
    /// Selection on `t`.
    One,
    /// Selection on `|t|`.
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Heckman,
    Logit1,
    Mlogit,
    Exp1,
    Exp2,
    Probit2,
    Logit2,
}

impl Family {
    /// The `t`-statistic families, in the order used for comparator sweeps.
    pub const T_TYPES: [Family; 6] = [
        Family::Logit1,
        Family::Mlogit,
        Family::Exp1,
        Family::Exp2,
        Family::Probit2,
        Family::Logit2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Heckman => "heckman",
            Family::Logit1 => "logit1",
            Family::Mlogit => "mlogit",
            Family::Exp1 => "exp1",
            Family::Exp2 => "exp2",
            Family::Probit2 => "probit2",
            Family::Logit2 => "logit2",
        }
    }

    pub fn is_two_parameter(self) -> bool {
        matches!(self, Family::Probit2 | Family::Logit2)
    }

    /// A model of this family with its free parameter at a neutral value and
    /// the slope (two-parameter families) set to `slope`.
    pub fn model(self, slope: f64, tail: Tail) -> SelectionModel {
        match self {
            Family::Heckman => SelectionModel::Heckman { gamma0: 0.0, gamma1: 0.0, rho: 0.0 },
            Family::Logit1 => SelectionModel::Logit1 { beta: 0.0, tail },
            Family::Mlogit => SelectionModel::Mlogit { beta: 0.0, tail },
            Family::Exp1 => SelectionModel::Exp { beta: 0.0, gamma: 1, tail },
            Family::Exp2 => SelectionModel::Exp { beta: 0.0, gamma: 2, tail },
            Family::Probit2 => SelectionModel::Probit2 { alpha: 0.0, beta: slope, tail },
            Family::Logit2 => SelectionModel::Logit2 { alpha: 0.0, beta: slope, tail },
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "heckman" | "copas-heckman" => Family::Heckman,
            "logit1" | "1-logit" => Family::Logit1,
            "mlogit" => Family::Mlogit,
            "exp1" => Family::Exp1,
            "exp2" => Family::Exp2,
            "probit2" | "2-probit" => Family::Probit2,
            "logit2" | "2-logit" => Family::Logit2,
            other => {
                return Err(Error::ModelSpec { spec: other.into(), reason: "unknown family".into() })
            }
        })
    }
}

/// Overall effect and heterogeneity that the representations integrate over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReContext {
    pub mu: f64,
    pub tau: f64,
}

impl ReContext {
    pub fn new(mu: f64, tau: f64) -> Self {
        debug_assert!(tau >= 0.0);
        ReContext { mu, tau }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum SelectionModel {
    /// Latent `Z = γ₀ + γ₁/s + δ`, `corr(δ, ε) = ρ`, published iff `Z > 0`.
    Heckman { gamma0: f64, gamma1: f64, rho: f64 },
    /// `2 exp(−β Φ(−t)) / (1 + exp(−β Φ(−t)))`.
    Logit1 { beta: f64, tail: Tail },
    /// `logit1` with the exponent scaled by `s`.
    Mlogit { beta: f64, tail: Tail },
    /// `exp(−β Φ(−t)^γ)`, `γ ∈ {1, 2}`.
    Exp { beta: f64, gamma: u8, tail: Tail },
    /// `Φ(α + β t)`.
    Probit2 { alpha: f64, beta: f64, tail: Tail },
    /// `logistic(α + β t)`.
    Logit2 { alpha: f64, beta: f64, tail: Tail },
}

/// Result of scanning `p₂` on an `s` grid for monotonicity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum A0Check {
    MonotoneNonincreasing,
    /// `p₂` increases between consecutive grid points; `first` and `last`
    /// are the right ends of the first and last increasing steps.
    Violated { first: f64, last: f64 },
}

impl SelectionModel {
    pub fn family(&self) -> Family {
        match self {
            SelectionModel::Heckman { .. } => Family::Heckman,
            SelectionModel::Logit1 { .. } => Family::Logit1,
            SelectionModel::Mlogit { .. } => Family::Mlogit,
            SelectionModel::Exp { gamma: 1, .. } => Family::Exp1,
            SelectionModel::Exp { .. } => Family::Exp2,
            SelectionModel::Probit2 { .. } => Family::Probit2,
            SelectionModel::Logit2 { .. } => Family::Logit2,
        }
    }

    pub fn tail(&self) -> Option<Tail> {
        match *self {
            SelectionModel::Heckman { .. } => None,
            SelectionModel::Logit1 { tail, .. }
            | SelectionModel::Mlogit { tail, .. }
            | SelectionModel::Exp { tail, .. }
            | SelectionModel::Probit2 { tail, .. }
            | SelectionModel::Logit2 { tail, .. } => Some(tail),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Err(Error::ModelSpec { spec: self.to_string(), reason: reason.into() });
        match *self {
            SelectionModel::Heckman { gamma0, gamma1, rho } => {
                if !gamma0.is_finite() || !(gamma1 >= 0.0) || !(rho > -1.0 && rho < 1.0) {
                    return bad("need finite g0, g1 >= 0, rho in (-1, 1)");
                }
            }
            SelectionModel::Logit1 { beta, .. } | SelectionModel::Mlogit { beta, .. } => {
                if !(beta >= 0.0 && beta.is_finite()) {
                    return bad("need beta >= 0");
                }
            }
            SelectionModel::Exp { beta, gamma, .. } => {
                if !(beta >= 0.0 && beta.is_finite()) || !(gamma == 1 || gamma == 2) {
                    return bad("need beta >= 0 and gamma in {1, 2}");
                }
            }
            SelectionModel::Probit2 { alpha, beta, .. } | SelectionModel::Logit2 { alpha, beta, .. } => {
                if !(alpha.is_finite() && beta.is_finite()) {
                    return bad("need finite alpha, beta");
                }
            }
        }
        Ok(())
    }

    /// Publication probability given `t` (before any `|t|` folding) and `s`.
    /// Only meaningful for `t`-statistic families.
    #[inline]
    fn kernel(&self, t: f64, s: f64) -> f64 {
        match *self {
            SelectionModel::Heckman { .. } => unreachable!("heckman has no t kernel"),
            SelectionModel::Logit1 { beta, .. } => 2.0 / (1.0 + (beta * big_phi(-t)).exp()),
            SelectionModel::Mlogit { beta, .. } => 2.0 / (1.0 + (beta * s * big_phi(-t)).exp()),
            SelectionModel::Exp { beta, gamma, .. } => {
                let q = big_phi(-t);
                let g = if gamma == 1 { q } else { q * q };
                (-beta * g).exp()
            }
            SelectionModel::Probit2 { alpha, beta, .. } => big_phi(alpha + beta * t),
            SelectionModel::Logit2 { alpha, beta, .. } => {
                let x = alpha + beta * t;
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    #[inline]
    fn folded_kernel(&self, t: f64, s: f64) -> f64 {
        match self.tail() {
            Some(Tail::Two) => self.kernel(t.abs(), s),
            _ => self.kernel(t, s),
        }
    }

    /// `p₀(y, s)`.
    pub fn p0(&self, y: f64, s: f64, ctx: ReContext) -> f64 {
        match *self {
            SelectionModel::Heckman { gamma0, gamma1, rho } => {
                let v = ctx.tau * ctx.tau + s * s;
                let num = gamma0 + gamma1 / s + rho * s * (y - ctx.mu) / v;
                let den = (1.0 - rho * rho * s * s / v).sqrt();
                big_phi(num / den)
            }
            _ => self.folded_kernel(y / s, s),
        }
    }

    /// `E p₀` over `t ~ N(m, v²)` at standard error `s`, for `t` families.
    fn expect_t(&self, m: f64, v: f64, s: f64) -> f64 {
        match (*self, self.tail()) {
            (SelectionModel::Probit2 { alpha, beta, .. }, Some(Tail::One)) => {
                big_phi((alpha + beta * m) / (1.0 + beta * beta * v * v).sqrt())
            }
            (_, Some(Tail::Two)) => {
                // fold onto u = |t| ≥ 0; the folded density is smooth
                let am = m.abs();
                let a = (am - 12.0 * v).max(0.0);
                let b = am + 12.0 * v;
                let val = GaussLegendre::standard().integrate(a, b, |u| {
                    self.kernel(u, s) * (phi((u - am) / v) + phi((u + am) / v)) / v
                });
                val.clamp(0.0, 1.0)
            }
            _ => GaussHermite::standard()
                .expect(|z| self.kernel(m + v * z, s))
                .clamp(0.0, 1.0),
        }
    }

    /// μ-representation `p₁(μ̃, s)`.
    pub fn p1(&self, mu_tilde: f64, s: f64, ctx: ReContext) -> f64 {
        match *self {
            SelectionModel::Heckman { gamma0, gamma1, rho } => {
                // p₀ is a probit in y, so the normal average stays a probit
                let v = ctx.tau * ctx.tau + s * s;
                let slope = rho * s / v;
                let den2 = 1.0 - rho * rho * s * s / v;
                let num = gamma0 + gamma1 / s + slope * (mu_tilde - ctx.mu);
                big_phi(num / (den2 + slope * slope * s * s).sqrt())
            }
            _ => self.expect_t(mu_tilde / s, 1.0, s),
        }
    }

    /// m-representation `p₂(s)`.
    pub fn p2(&self, s: f64, ctx: ReContext) -> f64 {
        match *self {
            SelectionModel::Heckman { gamma0, gamma1, .. } => big_phi(gamma0 + gamma1 / s),
            _ if ctx.tau == 0.0 => self.p1(ctx.mu, s, ctx),
            _ => {
                let sigma = (s * s + ctx.tau * ctx.tau).sqrt();
                self.expect_t(ctx.mu / s, sigma / s, s)
            }
        }
    }

    /// `ln p₂(s)`, exact in the tails for the closed-form probits.
    pub fn ln_p2(&self, s: f64, ctx: ReContext) -> f64 {
        match *self {
            SelectionModel::Heckman { gamma0, gamma1, .. } => ln_big_phi(gamma0 + gamma1 / s),
            SelectionModel::Probit2 { alpha, beta, tail: Tail::One } => {
                let v = (s * s + ctx.tau * ctx.tau).sqrt() / s;
                ln_big_phi((alpha + beta * ctx.mu / s) / (1.0 + beta * beta * v * v).sqrt())
            }
            _ => self.p2(s, ctx).ln(),
        }
    }

    /// The parameter that calibration solves for: `γ₀`, `α`, or `β`.
    pub fn free_param(&self) -> f64 {
        match *self {
            SelectionModel::Heckman { gamma0, .. } => gamma0,
            SelectionModel::Probit2 { alpha, .. } | SelectionModel::Logit2 { alpha, .. } => alpha,
            SelectionModel::Logit1 { beta, .. }
            | SelectionModel::Mlogit { beta, .. }
            | SelectionModel::Exp { beta, .. } => beta,
        }
    }

    pub fn with_free_param(mut self, value: f64) -> Self {
        match &mut self {
            SelectionModel::Heckman { gamma0, .. } => *gamma0 = value,
            SelectionModel::Probit2 { alpha, .. } | SelectionModel::Logit2 { alpha, .. } => *alpha = value,
            SelectionModel::Logit1 { beta, .. }
            | SelectionModel::Mlogit { beta, .. }
            | SelectionModel::Exp { beta, .. } => *beta = value,
        }
        self
    }

    /// Whether the free parameter is an intercept (selection increases with
    /// it) rather than a one-parameter strength `β ≥ 0` (selection decreases).
    pub fn free_is_intercept(&self) -> bool {
        matches!(
            self,
            SelectionModel::Heckman { .. } | SelectionModel::Probit2 { .. } | SelectionModel::Logit2 { .. }
        )
    }
}

impl fmt::Display for SelectionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tail = |t: Tail| if t == Tail::One { "one" } else { "two" };
        match *self {
            SelectionModel::Heckman { gamma0, gamma1, rho } => {
                write!(f, "heckman:g0={gamma0},g1={gamma1},rho={rho}")
            }
            SelectionModel::Logit1 { beta, tail: t } => write!(f, "logit1:beta={beta},tail={}", tail(t)),
            SelectionModel::Mlogit { beta, tail: t } => write!(f, "mlogit:beta={beta},tail={}", tail(t)),
            SelectionModel::Exp { beta, gamma, tail: t } => {
                write!(f, "exp{gamma}:beta={beta},tail={}", tail(t))
            }
            SelectionModel::Probit2 { alpha, beta, tail: t } => {
                write!(f, "probit2:alpha={alpha},beta={beta},tail={}", tail(t))
            }
            SelectionModel::Logit2 { alpha, beta, tail: t } => {
                write!(f, "logit2:alpha={alpha},beta={beta},tail={}", tail(t))
            }
        }
    }
}

/// A model parsed from a CLI spec such as `probit2:alpha=auto,beta=4,tail=one`;
/// `auto` marks the free parameter for calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model: SelectionModel,
    pub calibrate: bool,
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let err = |reason: String| Error::ModelSpec { spec: spec.to_string(), reason };
        let (fam, rest) = spec.split_once(':').unwrap_or((spec, ""));
        let mut family: Family = fam.trim().parse().map_err(|_| err(format!("unknown family '{fam}'")))?;
        let mut kv = Vec::new();
        for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| err(format!("expected key=value, got '{part}'")))?;
            kv.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut tail = Tail::One;
        let mut calibrate = false;
        let mut get = |keys: &[&str], default: f64, free: bool| -> Result<f64> {
            if let Some((_, v)) = kv.iter().find(|(k, _)| keys.contains(&k.as_str())) {
                if v == "auto" {
                    if !free {
                        return Err(err(format!("only the free parameter may be 'auto' ({})", keys[0])));
                    }
                    calibrate = true;
                    Ok(default)
                } else {
                    v.parse::<f64>().map_err(|_| err(format!("bad number '{v}'")))
                }
            } else {
                if free {
                    calibrate = true;
                }
                Ok(default)
            }
        };
        if let Some((_, v)) = kv.iter().find(|(k, _)| k == "tail") {
            tail = match v.as_str() {
                "one" | "1" => Tail::One,
                "two" | "2" => Tail::Two,
                other => return Err(err(format!("tail must be one|two, got '{other}'"))),
            };
        }
        if family == Family::Exp1 || family == Family::Exp2 {
            if let Some((_, v)) = kv.iter().find(|(k, _)| k == "gamma") {
                family = match v.as_str() {
                    "1" => Family::Exp1,
                    "2" => Family::Exp2,
                    other => return Err(err(format!("gamma must be 1 or 2, got '{other}'"))),
                };
            }
        }
        let model = match family {
            Family::Heckman => SelectionModel::Heckman {
                gamma0: get(&["g0", "gamma0"], 0.0, true)?,
                gamma1: get(&["g1", "gamma1"], 0.0, false)?,
                rho: get(&["rho"], 0.0, false)?,
            },
            Family::Logit1 => SelectionModel::Logit1 { beta: get(&["beta"], 0.0, true)?, tail },
            Family::Mlogit => SelectionModel::Mlogit { beta: get(&["beta"], 0.0, true)?, tail },
            Family::Exp1 | Family::Exp2 => SelectionModel::Exp {
                beta: get(&["beta"], 0.0, true)?,
                gamma: if family == Family::Exp1 { 1 } else { 2 },
                tail,
            },
            Family::Probit2 => {
                let alpha = get(&["alpha"], 0.0, true)?;
                SelectionModel::Probit2 { alpha, beta: get(&["beta"], 1.0, false)?, tail }
            }
            Family::Logit2 => {
                let alpha = get(&["alpha"], 0.0, true)?;
                SelectionModel::Logit2 { alpha, beta: get(&["beta"], 1.0, false)?, tail }
            }
        };
        model.validate()?;
        Ok(ModelSpec { model, calibrate })
    }
}

/// Solve the free parameter so that `mean(model) == target`.
///
/// Intercepts are searched on `[-50, 50]`, strengths on `[0, 1000]`, both
/// expanded geometrically when the bracket misses.
pub fn calibrate_with<F>(model: SelectionModel, target: f64, mean: F) -> Result<SelectionModel>
where
    F: Fn(&SelectionModel) -> f64,
{
    const TOL: f64 = 1e-13;
    let g = |v: f64| mean(&model.with_free_param(v)) - target;
    if model.free_is_intercept() {
        if !(target > 0.0 && target < 1.0) {
            return Err(Error::Domain(target, "(0, 1)"));
        }
        const LIMIT: f64 = 1e4;
        match find_root_expanding(g, -50.0, 50.0, LIMIT, TOL, true) {
            Ok(v) => Ok(model.with_free_param(v)),
            Err(Error::NoSignChange { .. }) => Err(Error::Unreachable {
                target,
                lo: mean(&model.with_free_param(-LIMIT)),
                hi: mean(&model.with_free_param(LIMIT)),
            }),
            Err(e) => Err(e),
        }
    } else {
        if !(target > 0.0 && target <= 1.0) {
            return Err(Error::Domain(target, "(0, 1]"));
        }
        let ceiling = mean(&model.with_free_param(0.0));
        if target >= ceiling - 1e-12 {
            if target <= ceiling + 1e-12 {
                return Ok(model.with_free_param(0.0));
            }
            const LIMIT: f64 = 1e8;
            return Err(Error::Unreachable { target, lo: mean(&model.with_free_param(LIMIT)), hi: ceiling });
        }
        const LIMIT: f64 = 1e8;
        match find_root_expanding(g, 0.0, 1e3, LIMIT, TOL, false) {
            Ok(v) => Ok(model.with_free_param(v)),
            Err(Error::NoSignChange { .. }) => Err(Error::Unreachable {
                target,
                lo: mean(&model.with_free_param(LIMIT)),
                hi: ceiling,
            }),
            Err(e) => Err(e),
        }
    }
}

/// Calibrate the free parameter so that `(1/S) Σ p₀(yᵢ, sᵢ) = target`.
pub fn calibrate_intercept(
    model: SelectionModel,
    sample: &[(f64, f64)],
    ctx: ReContext,
    target: f64,
) -> Result<SelectionModel> {
    model.validate()?;
    let n = sample.len() as f64;
    calibrate_with(model, target, |m| sample.iter().map(|&(y, s)| m.p0(y, s, ctx)).sum::<f64>() / n)
}

/// Scan `p₂` over an increasing `s` grid for Assumption A₀ (non-increasing).
pub fn check_a0(model: &SelectionModel, ctx: ReContext, s_grid: &[f64]) -> A0Check {
    debug_assert!(s_grid.windows(2).all(|w| w[0] < w[1]));
    let vals: Vec<f64> = s_grid.iter().map(|&s| model.p2(s, ctx)).collect();
    let mut first = None;
    let mut last = None;
    for j in 1..vals.len() {
        if vals[j] > vals[j - 1] + 1e-12 * vals[j - 1].max(1e-300) {
            first.get_or_insert(s_grid[j]);
            last = Some(s_grid[j]);
        }
    }
    match (first, last) {
        (Some(first), Some(last)) => A0Check::Violated { first, last },
        _ => A0Check::MonotoneNonincreasing,
    }
}

/// Stationary point of the two-parameter probit m-representation in `s`,
/// `s* = α β τ² / (μ (1 + β²))`, when positive.
pub fn probit2_turning_point(alpha: f64, beta: f64, ctx: ReContext) -> Option<f64> {
    let s = alpha * beta * ctx.tau * ctx.tau / (ctx.mu * (1.0 + beta * beta));
    (s.is_finite() && s > 0.0).then_some(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CTX: ReContext = ReContext { mu: 0.4, tau: 0.7 };

    #[test]
    fn neutral_models() {
        let h = SelectionModel::Heckman { gamma0: -0.3, gamma1: 0.6, rho: 0.0 };
        for &(y, s) in &[(0.1, 0.3), (-2.0, 1.5), (4.0, 0.2)] {
            assert!((h.p0(y, s, CTX) - big_phi(-0.3 + 0.6 / s)).abs() < 1e-15);
        }
        let l = SelectionModel::Logit1 { beta: 0.0, tail: Tail::One };
        assert_eq!(l.p0(-3.0, 0.5, CTX), 1.0);
        let p = SelectionModel::Probit2 { alpha: 0.0, beta: 1.0, tail: Tail::One };
        assert_eq!(p.p0(0.0, 0.5, CTX), 0.5);
    }

    #[test]
    fn probit2_closed_form_matches_quadrature() {
        let m = SelectionModel::Probit2 { alpha: -0.4, beta: 1.7, tail: Tail::One };
        for &(mt, s) in &[(0.3, 0.5), (-1.2, 1.1), (2.0, 0.2)] {
            let closed = m.p1(mt, s, CTX);
            let quad = GaussHermite::standard().expect(|z| m.p0(mt + s * z, s, CTX));
            assert!((closed - quad).abs() < 1e-8, "{closed} {quad}");
            let expect = big_phi((-0.4 + 1.7 * mt / s) / (1.0 + 1.7f64 * 1.7).sqrt());
            assert!((closed - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn m_representations() {
        let h = SelectionModel::Heckman { gamma0: -0.5, gamma1: 0.3, rho: 0.8 };
        for &s in &[0.2, 0.9, 2.5] {
            assert!((h.p2(s, CTX) - big_phi(-0.5 + 0.3 / s)).abs() < 1e-15);
            // and the nested route agrees
            let nested = GaussHermite::standard().expect(|w| h.p1(CTX.mu + CTX.tau * w, s, CTX));
            assert!((nested - h.p2(s, CTX)).abs() < 1e-10);
        }
        let (a, b) = (0.3, 2.0);
        let p = SelectionModel::Probit2 { alpha: a, beta: b, tail: Tail::One };
        for &s in &[0.2, 0.9, 2.5] {
            let expect = big_phi((a + b * CTX.mu / s) / (1.0 + b * b * (1.0 + CTX.tau * CTX.tau / (s * s))).sqrt());
            assert!((p.p2(s, CTX) - expect).abs() < 1e-14);
        }
        let ctx0 = ReContext::new(0.4, 0.0);
        let e = SelectionModel::Exp { beta: 3.0, gamma: 2, tail: Tail::Two };
        assert_eq!(e.p2(0.7, ctx0), e.p1(0.4, 0.7, ctx0));
        // nested integral equals the single marginal integral
        for m in [e, SelectionModel::Mlogit { beta: 2.0, tail: Tail::One }] {
            let nested = GaussHermite::standard().expect(|w| m.p1(CTX.mu + CTX.tau * w, 0.6, CTX));
            assert!((nested - m.p2(0.6, CTX)).abs() < 1e-9, "{m}");
        }
    }

    #[test]
    fn constant_model_integrals() {
        let c = SelectionModel::Logit2 { alpha: 0.8, beta: 0.0, tail: Tail::Two };
        let v = 1.0 / (1.0 + (-0.8f64).exp());
        assert!((c.p1(1.3, 0.4, CTX) - v).abs() < 1e-12);
        assert!((c.p2(0.4, CTX) - v).abs() < 1e-12);
    }

    #[test]
    fn calibration_residuals() {
        let sample: Vec<(f64, f64)> = (0..25).map(|i| (0.1 * i as f64 - 1.0, 0.3 + 0.05 * i as f64)).collect();
        let ctx = ReContext::new(1.5, 2.5);
        let h = SelectionModel::Heckman { gamma0: 0.0, gamma1: 0.2, rho: 0.8 };
        let cal = calibrate_intercept(h, &sample, ctx, 0.7).unwrap();
        let mean = sample.iter().map(|&(y, s)| cal.p0(y, s, ctx)).sum::<f64>() / 25.0;
        assert!((mean - 0.7).abs() <= 1e-8);

        let p = SelectionModel::Probit2 { alpha: 0.0, beta: 4.0, tail: Tail::One };
        let cal = calibrate_intercept(p, &sample, ctx, 0.5).unwrap();
        let mean = sample.iter().map(|&(y, s)| cal.p0(y, s, ctx)).sum::<f64>() / 25.0;
        assert!((mean - 0.5).abs() <= 1e-8);

        let l = SelectionModel::Logit1 { beta: 5.0, tail: Tail::One };
        assert_eq!(calibrate_intercept(l, &sample, ctx, 1.0).unwrap().free_param(), 0.0);
        let cal = calibrate_intercept(l, &sample, ctx, 0.3).unwrap();
        let mean = sample.iter().map(|&(y, s)| cal.p0(y, s, ctx)).sum::<f64>() / 25.0;
        assert!((mean - 0.3).abs() <= 1e-8 && cal.free_param() > 0.0);
    }

    #[test]
    fn unreachable_targets() {
        // t is huge for every study, so even a large beta barely selects
        let sample = vec![(40.0, 1.0), (50.0, 1.0)];
        let l = SelectionModel::Exp { beta: 0.0, gamma: 2, tail: Tail::One };
        match calibrate_intercept(l, &sample, CTX, 0.5) {
            Err(Error::Unreachable { hi, .. }) => assert_eq!(hi, 1.0),
            other => panic!("{other:?}"),
        }
        assert!(calibrate_intercept(l, &sample, CTX, 1.5).is_err());
    }

    #[test]
    fn a0_scan() {
        let grid: Vec<f64> = (1..=300).map(|i| 0.01 * i as f64).collect();
        let h = SelectionModel::Heckman { gamma0: -0.2, gamma1: 0.5, rho: 0.6 };
        assert_eq!(check_a0(&h, CTX, &grid), A0Check::MonotoneNonincreasing);
        let c = SelectionModel::Probit2 { alpha: 0.3, beta: 0.0, tail: Tail::One };
        assert_eq!(check_a0(&c, CTX, &grid), A0Check::MonotoneNonincreasing);

        let ctx = ReContext::new(1.0, 1.0);
        let (a, b) = (1.0, 2.0);
        let p = SelectionModel::Probit2 { alpha: a, beta: b, tail: Tail::One };
        let star = probit2_turning_point(a, b, ctx).unwrap();
        assert!((star - 0.4).abs() < 1e-12);
        match check_a0(&p, ctx, &grid) {
            A0Check::Violated { first, last } => {
                assert!((first - 0.02).abs() < 1e-12);
                assert!((last - star).abs() <= 0.01, "last={last} star={star}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn spec_strings() {
        let m: ModelSpec = "probit2:alpha=auto,beta=4,tail=one".parse().unwrap();
        assert!(m.calibrate);
        assert_eq!(m.model, SelectionModel::Probit2 { alpha: 0.0, beta: 4.0, tail: Tail::One });
        let h: ModelSpec = "heckman:g0=auto,g1=0.2,rho=0.8".parse().unwrap();
        assert_eq!(h.model, SelectionModel::Heckman { gamma0: 0.0, gamma1: 0.2, rho: 0.8 });
        let e: ModelSpec = "exp2:beta=1.5,tail=two".parse().unwrap();
        assert!(!e.calibrate);
        assert_eq!(e.model.family(), Family::Exp2);
        let round: ModelSpec = e.model.to_string().parse().unwrap();
        assert_eq!(round.model, e.model);
        assert!("probit2:beta=auto".parse::<ModelSpec>().is_err());
        assert!("heckman:g0=0,g1=0.2,rho=1.2".parse::<ModelSpec>().is_err());
        assert!("weibull:beta=1".parse::<ModelSpec>().is_err());
    }
}
