//! Worst-case bias over the relaxed constraint set, and the combined bound.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cj::{check_p, check_tau, cj_bound, BoundResult, Method};
use crate::data::MetaDataset;
use crate::error::{Error, Result};
use crate::extended::constraints::{candidates, Candidate, Orientation};
use crate::extended::grid::McGrid;
use crate::extended::isotonic::{tie_groups, ChainProjector, Scratch};
use crate::extended::objective::{DecisionVars, Direction, InnerMode, Objective};
use crate::extended::solver::{spg, SpgParams};
use crate::stats::{big_phi, find_root_expanding, Seed};

/// Lower box bound, keeping every `p̄_i` positive.
pub const Q_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    pub k1: usize,
    pub k2: usize,
    pub kprime_stride: usize,
    pub max_iters: usize,
    /// Initial spectral step; `0` picks `1/‖∇‖∞`.
    pub step_init: f64,
    pub tol_obj: f64,
    pub tol_feas: f64,
    /// Starting points per candidate: constant, probit-shaped, then random.
    pub restarts: usize,
    pub inner_mode: InnerMode,
    /// Iterations of the short pass over all candidates; `0` solves every
    /// candidate fully.
    pub screen_iters: usize,
    /// (candidate, start) pairs carried from the short pass into full solves.
    pub refine_top: usize,
    /// Extra per-candidate starts that put a block of rows at the floor.
    pub floor_starts: usize,
    pub seed: Seed,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            k1: 1000,
            k2: 1000,
            kprime_stride: 10,
            max_iters: 400,
            step_init: 0.0,
            tol_obj: 1e-8,
            tol_feas: 1e-9,
            restarts: 3,
            inner_mode: InnerMode::Discrete,
            screen_iters: 20,
            refine_top: 6,
            floor_starts: 2,
            seed: Seed(20240501),
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.k1 < 2 || self.k2 < 2 {
            return bad("K1 and K2 must be at least 2");
        }
        if self.kprime_stride == 0 {
            return bad("kprime stride must be positive");
        }
        if self.restarts == 0 || self.max_iters == 0 {
            return bad("restarts and max_iters must be positive");
        }
        if !(self.tol_obj > 0.0 && self.tol_feas > 0.0 && self.step_init >= 0.0) {
            return bad("tolerances must be positive");
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<McGrid> {
        McGrid::new(self.k1, self.k2, self.seed)
    }

    fn spg(&self, iters: usize) -> SpgParams {
        SpgParams { max_iters: iters, tol_obj: self.tol_obj, step_init: self.step_init, ..SpgParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateDiag {
    pub split: usize,
    pub orientation: Orientation,
    /// Best bias after the short pass (or the full solve without screening).
    pub screened: f64,
    pub refined: Option<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub direction: Direction,
    pub value: f64,
    pub split: usize,
    pub orientation: Orientation,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub feasibility_residual: f64,
    pub degraded: bool,
    pub candidates: Vec<CandidateDiag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Opt2Solution {
    pub value: f64,
    pub q: DecisionVars,
    pub diagnostics: SolveDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtBoundResult {
    /// Method `A1`.
    pub bound: BoundResult,
    pub best_kprime: usize,
    pub best_orientation: Orientation,
    pub upper: SolveDiagnostics,
    pub lower: SolveDiagnostics,
}

impl ExtBoundResult {
    pub fn degraded(&self) -> bool {
        self.upper.degraded || self.lower.degraded
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedBound {
    /// Method `Extended`: the envelope of `a1` and `cj`.
    pub bound: BoundResult,
    pub cj: BoundResult,
    pub a1: ExtBoundResult,
    /// Width of the extended interval over the C-J width.
    pub ratio: f64,
}

struct Run {
    x: Vec<f64>,
    value: f64,
    iters: usize,
    evals: usize,
    converged: bool,
}

/// Max-norm violation of box, monotone chains, tie equality and the mean.
fn feasibility_residual(x: &[f64], n: usize, groups: &[(usize, usize)], dec: &[bool], target: f64) -> f64 {
    let mut r = 0.0f64;
    for v in x {
        r = r.max(Q_FLOOR - v).max(v - 1.0);
    }
    for (k, &d) in dec.iter().enumerate() {
        let col = &x[k * n..(k + 1) * n];
        for &(st, len) in groups {
            for j in st + 1..st + len {
                r = r.max((col[j] - col[st]).abs());
            }
        }
        for j in 1..n {
            let step = col[j] - col[j - 1];
            r = r.max(if d { step } else { -step });
        }
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    r.max(target - mean).max(0.0)
}

/// `q_{j,k} = Φ((α + β μ̃_k / s_j)/√(1+β²))` with `α` matching the target mean.
fn probit_start(obj: &Objective, mu: f64, tau: f64, beta: f64, target: f64) -> Option<Vec<f64>> {
    let (n, k1) = (obj.n, obj.k1);
    let scale = (1.0 + beta * beta).sqrt();
    let fill = |alpha: f64| {
        let mut x = vec![0.0; n * k1];
        for k in 0..k1 {
            let mt = mu + tau * obj.w[k];
            for j in 0..n {
                x[k * n + j] = big_phi((alpha + beta * mt / obj.s[j]) / scale).clamp(Q_FLOOR, 1.0);
            }
        }
        x
    };
    let mean = |alpha: f64| fill(alpha).iter().sum::<f64>() / (n * k1) as f64 - target;
    find_root_expanding(mean, -50.0, 50.0, 1e4, 1e-12, true).ok().map(fill)
}

/// The first `m` rows in `s` order at the floor in nondecreasing columns and
/// the last `m` in nonincreasing ones, the rest level with the target mean.
/// Small-`s` rows carry the most weight, and emptying a row is a move the
/// gradient steps rarely find on their own.
fn floor_start(n: usize, dec: &[bool], m: usize, target: f64) -> Vec<f64> {
    let v = (target * n as f64 / (n - m) as f64).min(1.0);
    let mut x = vec![v; n * dec.len()];
    for (k, &d) in dec.iter().enumerate() {
        let rows = if d { n - m..n } else { 0..m };
        for j in rows {
            x[k * n + j] = Q_FLOOR;
        }
    }
    x
}

/// Floor-block sizes spread over `1..=⌊n(1−p)⌋`.
fn floor_sizes(n: usize, target: f64, count: usize) -> Vec<usize> {
    let m_max = ((n as f64) * (1.0 - target) + 1e-9).floor() as usize;
    let m_max = m_max.min(n - 1);
    let mut sizes: Vec<usize> = (1..=count).map(|j| ((j * m_max) as f64 / count as f64).round() as usize).filter(|&m| m >= 1).collect();
    sizes.dedup();
    sizes
}

/// Uniform entries, or (odd `r`) random row levels with entrywise jitter;
/// the objective is nonconvex only through the row masses.
fn random_start(n: usize, k1: usize, seed: Seed, r: u64) -> Vec<f64> {
    use rand::Rng;
    let mut rng = seed.rng(7);
    if r.is_multiple_of(2) {
        return (0..n * k1).map(|_| rng.gen_range(Q_FLOOR..=1.0)).collect();
    }
    let levels: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect();
    let mut x = vec![0.0; n * k1];
    for k in 0..k1 {
        for j in 0..n {
            x[k * n + j] = (levels[j] + 0.3 * rng.gen_range(-1.0..=1.0)).clamp(Q_FLOOR, 1.0);
        }
    }
    x
}

/// Solve the reduced program for one direction on a given grid.
#[allow(clippy::too_many_arguments)]
pub fn solve_opt2_on(
    data: &MetaDataset,
    tau: f64,
    mu: f64,
    target_p: f64,
    grid: &McGrid,
    config: &OptConfig,
    direction: Direction,
) -> Result<Opt2Solution> {
    check_p(target_p)?;
    check_tau(tau)?;
    config.validate()?;
    let obj = Objective::new(&data.s(), tau, grid, direction, config.inner_mode);
    let (n, k1) = (obj.n, obj.k1);
    let groups = tie_groups(&obj.s);
    let sign = if direction == Direction::Max { -1.0 } else { 1.0 };

    if target_p >= 1.0 {
        let x = vec![1.0; n * k1];
        let value = obj.eval(&x, None);
        let diag = SolveDiagnostics {
            direction,
            value,
            split: 0,
            orientation: Orientation::One,
            iterations: 0,
            evaluations: 1,
            converged: true,
            feasibility_residual: 0.0,
            degraded: false,
            candidates: Vec::new(),
        };
        return Ok(Opt2Solution { value, q: obj.to_external(&x), diagnostics: diag });
    }

    let mut starts = vec![vec![target_p; n * k1]];
    if config.restarts >= 2 {
        let beta = if direction == Direction::Max { 2.0 } else { -2.0 };
        if let Some(x) = probit_start(&obj, mu, tau, beta, target_p) {
            starts.push(x);
        }
    }
    let mut r = 0;
    while starts.len() < config.restarts {
        starts.push(random_start(n, k1, config.seed.derive(r), r));
        r += 1;
    }

    let cands = candidates(k1, config.kprime_stride);
    let screening = config.screen_iters > 0 && cands.len() * starts.len() > config.refine_top;
    let first_iters = if screening { config.screen_iters } else { config.max_iters };
    let projector = |c: &Candidate| {
        ChainProjector::new(groups.clone(), c.decreasing(k1), Q_FLOOR, 1.0, target_p)
    };
    let run = |proj: &ChainProjector, x0: Vec<f64>, iters: usize| -> Run {
        let mut scratch = Scratch::default();
        let mut x0 = x0;
        proj.project(&mut x0, &mut scratch);
        let out = spg(
            x0,
            |x, g| {
                let b = obj.eval(x, Some(g));
                if sign < 0.0 {
                    g.iter_mut().for_each(|v| *v = -*v);
                }
                sign * b
            },
            |x| proj.project(x, &mut scratch),
            &config.spg(iters),
        );
        Run { value: sign * out.f, x: out.x, iters: out.iters, evals: out.evals, converged: out.converged }
    };

    // short (or full) pass over every candidate and start
    let sizes = floor_sizes(n, target_p, config.floor_starts);
    let first: Vec<Vec<Run>> = cands
        .par_iter()
        .map(|c| {
            let proj = projector(c);
            let dec = c.decreasing(k1);
            let extra = sizes.iter().map(|&m| floor_start(n, &dec, m, target_p));
            starts.iter().cloned().chain(extra).map(|x0| run(&proj, x0, first_iters)).collect()
        })
        .collect();
    let better = |a: f64, b: f64| if direction == Direction::Max { a > b } else { a < b };
    let cand_best = |runs: &[Run]| {
        runs.iter().map(|r| r.value).fold(if direction == Direction::Max { f64::NEG_INFINITY } else { f64::INFINITY }, |m, v| if better(v, m) { v } else { m })
    };
    let mut diags: Vec<CandidateDiag> = cands
        .iter()
        .zip(&first)
        .map(|(c, runs)| CandidateDiag {
            split: c.split,
            orientation: c.orientation,
            screened: cand_best(runs),
            refined: None,
            iterations: runs.iter().map(|r| r.iters).sum(),
        })
        .collect();

    // (candidate index, run) pool for the final reduction
    let mut pool: Vec<(usize, Run)> = Vec::new();
    let mut evals: usize = first.iter().flatten().map(|r| r.evals).sum();
    if screening {
        // best (candidate, start) pairs after the short pass
        let mut rank: Vec<(usize, usize)> = first
            .iter()
            .enumerate()
            .flat_map(|(ci, runs)| (0..runs.len()).map(move |si| (ci, si)))
            .filter(|&(ci, si)| first[ci][si].value.is_finite())
            .collect();
        rank.sort_by(|&a, &b| {
            let (va, vb) = (first[a.0][a.1].value, first[b.0][b.1].value);
            let ord = if direction == Direction::Max { vb.total_cmp(&va) } else { va.total_cmp(&vb) };
            ord.then(a.cmp(&b))
        });
        rank.truncate(config.refine_top);
        rank.sort_unstable();
        let refined: Vec<(usize, Run)> = rank
            .par_iter()
            .map(|&(ci, si)| (ci, run(&projector(&cands[ci]), first[ci][si].x.clone(), config.max_iters)))
            .collect();
        for (ci, r) in refined {
            let prev = diags[ci].refined;
            diags[ci].refined = Some(match prev {
                Some(v) if !better(r.value, v) => v,
                _ => r.value,
            });
            diags[ci].iterations += r.iters;
            evals += r.evals;
            pool.push((ci, r));
        }
        // screened points remain valid feasible candidates
        for (ci, runs) in first.into_iter().enumerate() {
            pool.extend(runs.into_iter().map(|r| (ci, r)));
        }
    } else {
        for (ci, runs) in first.into_iter().enumerate() {
            pool.extend(runs.into_iter().map(|r| (ci, r)));
        }
    }
    pool.sort_by_key(|(ci, _)| *ci);

    let mut best: Option<&(usize, Run)> = None;
    for entry in &pool {
        if !entry.1.value.is_finite() {
            continue;
        }
        match best {
            Some(b) if !better(entry.1.value, b.1.value) => {}
            _ => best = Some(entry),
        }
    }
    let (ci, run) = best.ok_or(Error::NotConverged { best: f64::NAN, residual: f64::NAN })?;
    let cand = cands[*ci];
    let residual = feasibility_residual(&run.x, n, &groups, &cand.decreasing(k1), target_p);
    let diag = SolveDiagnostics {
        direction,
        value: run.value,
        split: cand.split,
        orientation: cand.orientation,
        iterations: diags.iter().map(|d| d.iterations).sum(),
        evaluations: evals,
        converged: run.converged,
        feasibility_residual: residual,
        degraded: residual > config.tol_feas,
        candidates: diags,
    };
    Ok(Opt2Solution { value: run.value, q: obj.to_external(&run.x), diagnostics: diag })
}

/// [`solve_opt2_on`] with the grid built from `config`.
pub fn solve_opt2(
    data: &MetaDataset,
    tau: f64,
    mu: f64,
    target_p: f64,
    config: &OptConfig,
    direction: Direction,
) -> Result<Opt2Solution> {
    config.validate()?;
    solve_opt2_on(data, tau, mu, target_p, &config.grid()?, config, direction)
}

pub fn a1_bound_on(
    data: &MetaDataset,
    tau: f64,
    mu: f64,
    target_p: f64,
    grid: &McGrid,
    config: &OptConfig,
) -> Result<ExtBoundResult> {
    let up = solve_opt2_on(data, tau, mu, target_p, grid, config, Direction::Max)?;
    let lo = solve_opt2_on(data, tau, mu, target_p, grid, config, Direction::Min)?;
    let upper_diag = up.diagnostics;
    Ok(ExtBoundResult {
        bound: BoundResult { p: target_p, lower: lo.value, upper: up.value, method: Method::A1, tau_used: tau },
        best_kprime: upper_diag.split,
        best_orientation: upper_diag.orientation,
        upper: upper_diag,
        lower: lo.diagnostics,
    })
}

pub fn a1_bound(data: &MetaDataset, tau: f64, mu: f64, target_p: f64, config: &OptConfig) -> Result<ExtBoundResult> {
    config.validate()?;
    a1_bound_on(data, tau, mu, target_p, &config.grid()?, config)
}

/// `L = min(L_A1, L_CJ)`, `U = max(U_A1, U_CJ)`.
pub fn combine(cj: BoundResult, a1: ExtBoundResult) -> ExtendedBound {
    let lower = a1.bound.lower.min(cj.lower);
    let upper = a1.bound.upper.max(cj.upper);
    let width = cj.width();
    let ratio = if width > 0.0 { (upper - lower) / width } else { 1.0 };
    ExtendedBound {
        bound: BoundResult { p: cj.p, lower, upper, method: Method::Extended, tau_used: cj.tau_used },
        cj,
        a1,
        ratio,
    }
}

pub fn extended_bound_on(
    data: &MetaDataset,
    tau: f64,
    mu: f64,
    target_p: f64,
    grid: &McGrid,
    config: &OptConfig,
) -> Result<ExtendedBound> {
    let cj = cj_bound(data, tau, target_p)?;
    Ok(combine(cj, a1_bound_on(data, tau, mu, target_p, grid, config)?))
}

pub fn extended_bound(data: &MetaDataset, tau: f64, mu: f64, target_p: f64, config: &OptConfig) -> Result<ExtendedBound> {
    config.validate()?;
    extended_bound_on(data, tau, mu, target_p, &config.grid()?, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::corticosteroids;

    fn small() -> OptConfig {
        OptConfig { k1: 20, k2: 20, kprime_stride: 5, ..OptConfig::default() }
    }

    #[test]
    fn full_selection_gives_zero() {
        let ds = corticosteroids();
        let e = extended_bound(&ds, 0.0, -0.48, 1.0, &small()).unwrap();
        assert!(e.bound.upper.abs() < 1e-12 && e.bound.lower.abs() < 1e-12);
        assert_eq!(e.ratio, 1.0);
    }

    #[test]
    fn envelope_and_feasibility() {
        let ds = MetaDataset::from_pairs(&[0.2, 0.5, -0.1, 0.9, 0.3], &[0.2, 0.4, 0.3, 0.5, 0.25]).unwrap();
        let e = extended_bound(&ds, 0.3, 0.3, 0.6, &small()).unwrap();
        assert!(e.bound.upper >= e.cj.upper && e.bound.lower <= e.cj.lower);
        assert!(e.ratio >= 1.0);
        assert!(e.a1.bound.upper > 0.0 && e.a1.bound.lower < 0.0);
        assert!(e.a1.upper.feasibility_residual <= 1e-9);
        assert!(!e.a1.degraded());
        // antithetic grids make the problem symmetric
        assert!((e.a1.bound.upper + e.a1.bound.lower).abs() < 0.02 * e.a1.bound.upper, "{:?}", e.a1.bound);
    }

    #[test]
    fn deterministic() {
        let ds = corticosteroids();
        let a = a1_bound(&ds, 0.1, -0.48, 0.5, &small()).unwrap();
        let b = a1_bound(&ds, 0.1, -0.48, 0.5, &small()).unwrap();
        assert_eq!(a, b);
    }
}
