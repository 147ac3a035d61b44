//! Spectral projected gradient (Birgin-Martínez-Raydan) with a nonmonotone
//! Armijo search, for minimizing a smooth-ish function over a convex set
//! given by its projection.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpgParams {
    pub max_iters: usize,
    /// Relative improvement over the last `window` iterations below which
    /// the run stops.
    pub tol_obj: f64,
    /// Max-norm of the projected step below which the run stops.
    pub tol_step: f64,
    pub window: usize,
    /// Nonmonotone memory.
    pub memory: usize,
    /// First spectral step; `0` means `1/‖∇f(x₀)‖∞`.
    pub step_init: f64,
}

impl Default for SpgParams {
    fn default() -> Self {
        SpgParams { max_iters: 400, tol_obj: 1e-10, tol_step: 1e-12, window: 25, memory: 10, step_init: 0.0 }
    }
}

#[derive(Debug, Clone)]
pub struct SpgOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub iters: usize,
    pub converged: bool,
    pub evals: usize,
}

/// Minimize `f` from the feasible point `x0`. `fg(x, g)` returns `f(x)` and
/// writes the gradient; `proj` projects in place.
pub fn spg<FG, P>(x0: Vec<f64>, mut fg: FG, mut proj: P, params: &SpgParams) -> SpgOutcome
where
    FG: FnMut(&[f64], &mut [f64]) -> f64,
    P: FnMut(&mut [f64]),
{
    const GAMMA: f64 = 1e-4;
    const A_MIN: f64 = 1e-12;
    const A_MAX: f64 = 1e12;
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut f = fg(&x, &mut g);
    let mut evals = 1;
    let mut best_x = x.clone();
    let mut best_f = f;
    let mut history = vec![f];
    let mut trace = vec![f];
    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut alpha = if params.step_init > 0.0 {
        params.step_init
    } else if gmax > 0.0 {
        (1.0 / gmax).clamp(A_MIN, A_MAX)
    } else {
        1.0
    };
    let mut d = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut converged = false;
    let mut iters = 0;

    while iters < params.max_iters {
        iters += 1;
        for j in 0..n {
            trial[j] = x[j] - alpha * g[j];
        }
        proj(&mut trial);
        let mut dmax = 0.0f64;
        let mut gtd = 0.0;
        for j in 0..n {
            d[j] = trial[j] - x[j];
            dmax = dmax.max(d[j].abs());
            gtd += g[j] * d[j];
        }
        if dmax <= params.tol_step || gtd >= 0.0 {
            converged = true;
            break;
        }
        let fref = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut t = 1.0;
        let mut f_new;
        loop {
            for j in 0..n {
                trial[j] = x[j] + t * d[j];
            }
            f_new = fg(&trial, &mut g_new);
            evals += 1;
            if f_new <= fref + GAMMA * t * gtd || t < 1e-12 {
                break;
            }
            // safeguarded quadratic backtrack
            let tq = -0.5 * gtd * t * t / (f_new - f - t * gtd);
            t = if tq >= 0.1 * t && tq <= 0.9 * t { tq } else { 0.5 * t };
        }
        if !f_new.is_finite() {
            break;
        }
        let (mut sts, mut sty) = (0.0, 0.0);
        for j in 0..n {
            let sj = trial[j] - x[j];
            sts += sj * sj;
            sty += sj * (g_new[j] - g[j]);
        }
        alpha = if sty > 0.0 { (sts / sty).clamp(A_MIN, A_MAX) } else { A_MAX.min(alpha * 10.0) };
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut g, &mut g_new);
        f = f_new;
        if f < best_f {
            best_f = f;
            best_x.copy_from_slice(&x);
        }
        history.push(f);
        if history.len() > params.memory {
            history.remove(0);
        }
        trace.push(best_f);
        if trace.len() > params.window {
            let old = trace[trace.len() - 1 - params.window];
            if old - best_f <= params.tol_obj * (1.0 + best_f.abs()) {
                converged = true;
                break;
            }
        }
    }
    SpgOutcome { x: best_x, f: best_f, iters, converged, evals }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_constrained_quadratic() {
        // min Σ (x_j - c_j)² on [0, 1]
        let c = [1.7, -0.4, 0.3, 0.9];
        let out = spg(
            vec![0.5; 4],
            |x, g| {
                let mut f = 0.0;
                for j in 0..4 {
                    g[j] = 2.0 * (x[j] - c[j]);
                    f += (x[j] - c[j]).powi(2);
                }
                f
            },
            |x| x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0)),
            &SpgParams::default(),
        );
        let expect = [1.0, 0.0, 0.3, 0.9];
        for (a, b) in out.x.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(out.converged);
    }

    #[test]
    fn rosenbrock_in_a_box() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let out = spg(
            vec![-0.5, 0.5],
            |x, g| {
                g[0] = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
                g[1] = 200.0 * (x[1] - x[0] * x[0]);
                f(x)
            },
            |x| x.iter_mut().for_each(|v| *v = v.clamp(-2.0, 0.8)),
            &SpgParams { max_iters: 5000, ..SpgParams::default() },
        );
        // constrained optimum on x0 = 0.8
        assert!((out.x[0] - 0.8).abs() < 1e-5 && (out.x[1] - 0.64).abs() < 1e-4, "{:?}", out.x);
    }
}
