//! Replication engine: complete meta-analyses, calibrated Bernoulli
//! selection, both bounds, and the exceedance / length-ratio summaries.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cj::BoundResult;
use crate::data::MetaDataset;
use crate::error::{Error, Result};
use crate::extended::{extended_bound, OptConfig};
use crate::random_effects::fit_ml;
use crate::selection::{calibrate_intercept, ReContext, SelectionModel, Tail};
use crate::stats::{sample_lognormal, sample_normal, Seed};

/// Redraws allowed before a replication is declared failed.
const MAX_REDRAWS: u64 = 1000;

/// The data-generating selection model, minus its calibrated intercept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum TrueSelector {
    Heckman { rho: f64, gamma1: f64 },
    Probit2 { beta: f64 },
}

impl TrueSelector {
    fn uncalibrated(self) -> SelectionModel {
        match self {
            TrueSelector::Heckman { rho, gamma1 } => SelectionModel::Heckman { gamma0: 0.0, gamma1, rho },
            TrueSelector::Probit2 { beta } => SelectionModel::Probit2 { alpha: 0.0, beta, tail: Tail::One },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub selector: TrueSelector,
    pub mu: f64,
    pub tau: f64,
    /// Studies per complete meta-analysis.
    pub studies: usize,
    pub p_grid: Vec<f64>,
    pub replications: usize,
    pub seed: Seed,
    /// `sᵢ ~ LN(0, sd_log²)`.
    pub sd_log: f64,
}

pub const PRESETS: [&str; 8] =
    ["Expe_H_1", "Expe_H_2", "Expe_P_1", "Expe_P_2", "Expe_H_3", "Expe_H_4", "Expe_P_3", "Expe_P_4"];

/// `0.1, 0.2, …, 0.9`.
pub fn default_p_grid() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

impl Scenario {
    pub fn preset(name: &str) -> Result<Self> {
        use TrueSelector::*;
        let (selector, mu, tau, grid) = match name {
            "Expe_H_1" => (Heckman { rho: 0.8, gamma1: 0.2 }, 1.5, 2.5, default_p_grid()),
            "Expe_H_2" => (Heckman { rho: 0.2, gamma1: 2.0 }, 1.0, 1.0, default_p_grid()),
            "Expe_P_1" => (Probit2 { beta: 4.0 }, 1.5, 2.5, default_p_grid()),
            "Expe_P_2" => (Probit2 { beta: 2.0 }, 1.0, 1.0, default_p_grid()),
            "Expe_H_3" => (Heckman { rho: 0.2, gamma1: 2.0 }, 1.0, 0.5, vec![0.7]),
            "Expe_H_4" => (Heckman { rho: 0.2, gamma1: 1.0 }, 1.0, 0.3, vec![0.7]),
            "Expe_P_3" => (Probit2 { beta: 2.0 }, 1.0, 0.5, vec![0.7]),
            "Expe_P_4" => (Probit2 { beta: 1.0 }, 1.0, 0.3, vec![0.7]),
            other => return Err(Error::UnknownScenario(other.into())),
        };
        Ok(Scenario {
            name: name.into(),
            selector,
            mu,
            tau,
            studies: 25,
            p_grid: grid,
            replications: 200,
            seed: Seed(20240501),
            sd_log: 0.5,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be positive".into()));
        }
        if self.studies < 2 {
            return Err(Error::Config("a scenario needs at least 2 studies".into()));
        }
        if self.p_grid.is_empty() || self.p_grid.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::Config("p grid must be non-empty and inside (0, 1)".into()));
        }
        if !(self.tau >= 0.0 && self.sd_log > 0.0) {
            return Err(Error::Config("tau and sd_log must be valid".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Replication {
    pub complete: MetaDataset,
    pub published: MetaDataset,
    pub selector: SelectionModel,
    /// Selection draws discarded because fewer than 2 studies survived.
    pub redraws: u64,
}

/// One complete meta-analysis and its published subset at `target_p`.
///
/// The complete data depend on `rep_seed` only, so every `p` of a replication
/// shares them; the selection draws also depend on `target_p`.
pub fn generate_replication(scenario: &Scenario, target_p: f64, rep_seed: Seed) -> Result<Replication> {
    if !(target_p > 0.0 && target_p < 1.0) {
        return Err(Error::Domain(target_p, "(0, 1)"));
    }
    let n = scenario.studies;
    let s = sample_lognormal(rep_seed.derive(0), 0.0, scenario.sd_log, n)?;
    let z = sample_normal(rep_seed.derive(1), n);
    let y: Vec<f64> = z.iter().zip(&s).map(|(z, s)| scenario.mu + z * (scenario.tau.powi(2) + s * s).sqrt()).collect();
    let complete = MetaDataset::from_pairs(&y, &s)?;
    let ctx = ReContext::new(scenario.mu, scenario.tau);
    let pairs: Vec<(f64, f64)> = y.iter().copied().zip(s.iter().copied()).collect();
    let selector = calibrate_intercept(scenario.selector.uncalibrated(), &pairs, ctx, target_p)?;
    let probs: Vec<f64> = pairs.iter().map(|&(y, s)| selector.p0(y, s, ctx)).collect();
    let sel_seed = rep_seed.derive(2).derive(target_p.to_bits());
    for attempt in 0..MAX_REDRAWS {
        let mut rng = sel_seed.rng(attempt);
        let keep: Vec<bool> = probs.iter().map(|&p| rng.gen::<f64>() < p).collect();
        if keep.iter().filter(|&&k| k).count() < 2 {
            continue;
        }
        let studies = complete.studies().iter().zip(&keep).filter(|(_, &k)| k).map(|(st, _)| st.clone()).collect();
        return Ok(Replication { complete, published: MetaDataset::new(studies)?, selector, redraws: attempt });
    }
    Err(Error::Config(format!("fewer than 2 studies published in {MAX_REDRAWS} draws")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub p: f64,
    pub replication: usize,
    /// `|μ̂_published − μ̂_complete|`.
    pub abs_bias: f64,
    /// `μ̂_published − μ` against the true `μ`, for diagnostics.
    pub bias_vs_truth: f64,
    pub cj: BoundResult,
    pub ext: BoundResult,
    /// Extended width over C-J width.
    pub ratio: f64,
    pub n_published: usize,
    pub redraws: u64,
    pub degraded: bool,
}

pub fn run_replication(scenario: &Scenario, target_p: f64, replication: usize, config: &OptConfig) -> Result<RepOutcome> {
    let rep = generate_replication(scenario, target_p, scenario.seed.derive(replication as u64))?;
    let full = fit_ml(&rep.complete)?;
    let fit = fit_ml(&rep.published)?;
    let e = extended_bound(&rep.published, fit.tau_hat, fit.mu_hat, target_p, config)?;
    Ok(RepOutcome {
        p: target_p,
        replication,
        abs_bias: (fit.mu_hat - full.mu_hat).abs(),
        bias_vs_truth: fit.mu_hat - scenario.mu,
        cj: e.cj,
        ext: e.bound,
        ratio: e.ratio,
        n_published: rep.published.len(),
        redraws: rep.redraws,
        degraded: e.a1.degraded(),
    })
}

/// Sample quantile, linear interpolation between order statistics.
pub fn sample_quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let (i, f) = (h.floor() as usize, h - h.floor());
    if i + 1 < sorted.len() {
        sorted[i] + f * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub p: f64,
    pub replications: usize,
    pub failed: usize,
    pub redraws: u64,
    pub degraded: usize,
    /// Percent of replications with `abs_bias > U`.
    pub exceed_cj: f64,
    pub exceed_ext: f64,
    pub r_q1: f64,
    pub r_median: f64,
    pub r_q3: f64,
    pub r_min: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: Scenario,
    pub rows: Vec<ScenarioRow>,
    pub outcomes: Vec<RepOutcome>,
    /// `(p, replication, message)` for replications that errored.
    pub failures: Vec<(f64, usize, String)>,
}

pub fn run_scenario(scenario: &Scenario, config: &OptConfig) -> Result<ScenarioReport> {
    scenario.validate()?;
    config.validate()?;
    let tasks: Vec<(f64, usize)> =
        scenario.p_grid.iter().flat_map(|&p| (0..scenario.replications).map(move |r| (p, r))).collect();
    let results: Vec<Result<RepOutcome>> =
        tasks.par_iter().map(|&(p, r)| run_replication(scenario, p, r, config)).collect();
    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for (&(p, r), res) in tasks.iter().zip(results) {
        match res {
            Ok(o) => outcomes.push(o),
            Err(e) => failures.push((p, r, e.to_string())),
        }
    }
    let rows = scenario
        .p_grid
        .iter()
        .map(|&p| {
            let os: Vec<&RepOutcome> = outcomes.iter().filter(|o| o.p == p).collect();
            let n = os.len();
            let pct = |f: &dyn Fn(&RepOutcome) -> bool| {
                if n == 0 {
                    f64::NAN
                } else {
                    100.0 * os.iter().filter(|o| f(o)).count() as f64 / n as f64
                }
            };
            let mut r: Vec<f64> = os.iter().map(|o| o.ratio).collect();
            r.sort_by(f64::total_cmp);
            ScenarioRow {
                p,
                replications: n,
                failed: failures.iter().filter(|f| f.0 == p).count(),
                redraws: os.iter().map(|o| o.redraws).sum(),
                degraded: os.iter().filter(|o| o.degraded).count(),
                exceed_cj: pct(&|o| o.abs_bias > o.cj.upper),
                exceed_ext: pct(&|o| o.abs_bias > o.ext.upper),
                r_q1: sample_quantile(&r, 0.25),
                r_median: sample_quantile(&r, 0.5),
                r_q3: sample_quantile(&r, 0.75),
                r_min: r.first().copied().unwrap_or(f64::NAN),
            }
        })
        .collect();
    Ok(ScenarioReport { scenario: scenario.clone(), rows, outcomes, failures })
}

/// Summary CSV, one row per grid point.
pub fn write_summary_csv<W: Write>(report: &ScenarioReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "scenario", "p", "replications", "failed", "redraws", "degraded", "exceed_cj", "exceed_ext", "r_q1",
        "r_median", "r_q3", "r_min",
    ])?;
    for r in &report.rows {
        w.write_record([
            report.scenario.name.clone(),
            r.p.to_string(),
            r.replications.to_string(),
            r.failed.to_string(),
            r.redraws.to_string(),
            r.degraded.to_string(),
            format!("{:.1}", r.exceed_cj),
            format!("{:.1}", r.exceed_ext),
            format!("{:.4}", r.r_q1),
            format!("{:.4}", r.r_median),
            format!("{:.4}", r.r_q3),
            format!("{:.4}", r.r_min),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-replication CSV.
pub fn write_replications_csv<W: Write>(report: &ScenarioReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "p", "replication", "n_published", "abs_bias", "bias_vs_truth", "cj_upper", "ext_lower", "ext_upper", "ratio",
        "degraded",
    ])?;
    for o in &report.outcomes {
        w.write_record([
            o.p.to_string(),
            o.replication.to_string(),
            o.n_published.to_string(),
            o.abs_bias.to_string(),
            o.bias_vs_truth.to_string(),
            o.cj.upper.to_string(),
            o.ext.lower.to_string(),
            o.ext.upper.to_string(),
            o.ratio.to_string(),
            o.degraded.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        for name in PRESETS {
            let s = Scenario::preset(name).unwrap();
            assert_eq!(s.studies, 25);
            assert_eq!(s.p_grid.len(), if name.ends_with(['1', '2']) { 9 } else { 1 });
        }
        assert!(Scenario::preset("Expe_X").is_err());
    }

    #[test]
    fn replication_is_reproducible() {
        let sc = Scenario::preset("Expe_P_2").unwrap();
        let a = generate_replication(&sc, 0.5, Seed(9)).unwrap();
        let b = generate_replication(&sc, 0.5, Seed(9)).unwrap();
        assert_eq!(a.published.y(), b.published.y());
        // same complete data at another p
        let c = generate_replication(&sc, 0.3, Seed(9)).unwrap();
        assert_eq!(a.complete.y(), c.complete.y());
        assert!(a.published.len() <= sc.studies);
    }

    #[test]
    fn calibration_identity_holds_on_each_sample() {
        let sc = Scenario::preset("Expe_H_1").unwrap();
        let r = generate_replication(&sc, 0.4, Seed(1)).unwrap();
        let ctx = ReContext::new(sc.mu, sc.tau);
        let m: f64 = r.complete.studies().iter().map(|st| r.selector.p0(st.y, st.s, ctx)).sum::<f64>() / 25.0;
        assert!((m - 0.4).abs() < 1e-10);
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(sample_quantile(&v, 0.5), 2.5);
        assert_eq!(sample_quantile(&v, 0.25), 1.75);
        assert_eq!(sample_quantile(&v, 1.0), 4.0);
    }
}
