use proptest::prelude::*;
use pubbias::extended::{a1_bound_on, c3_witness, model_bias, DecisionVars};
use pubbias::selection::calibrate_with;
use pubbias::sim::{self, Scenario};
use pubbias::stats::sample_normal;
use pubbias::*;

fn family() -> impl Strategy<Value = Family> {
    prop::sample::select(Family::T_TYPES.to_vec())
}

fn tail() -> impl Strategy<Value = Tail> {
    prop_oneof![Just(Tail::One), Just(Tail::Two)]
}

fn model(f: Family, slope: f64, tail: Tail, free: f64) -> SelectionModel {
    let m = f.model(slope, tail);
    m.with_free_param(if m.free_is_intercept() { free * 2.0 - 1.0 } else { free * 3.0 })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn p1_is_the_normal_average_of_p0(
        f in family(), t in tail(), slope in 0.5f64..4.0, free in 0.0f64..1.0,
        mu in -1.0f64..1.0, s in 0.1f64..1.5, seed in any::<u64>(),
    ) {
        let m = model(f, slope, t, free);
        let ctx = ReContext::new(mu, 0.0);
        let z = sample_normal(Seed(seed), 40_000);
        let vals: Vec<f64> = z.iter().map(|z| m.p0(mu + s * z, s, ctx)).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
        let exact = m.p1(mu, s, ctx);
        prop_assert!((exact - mean).abs() <= 5.0 * sd / 200.0 + 1e-9, "exact {} mc {}", exact, mean);
    }

    #[test]
    fn p2_averages_over_the_random_effect(
        f in family(), t in tail(), slope in 0.5f64..4.0, free in 0.0f64..1.0,
        mu in -1.0f64..1.0, tau in 0.05f64..1.0, s in 0.1f64..1.5, seed in any::<u64>(),
    ) {
        let m = model(f, slope, t, free);
        let ctx = ReContext::new(mu, tau);
        let w = sample_normal(Seed(seed), 4000);
        let vals: Vec<f64> = w.iter().map(|w| m.p1(mu + tau * w, s, ctx)).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
        prop_assert!((m.p2(s, ctx) - mean).abs() <= 5.0 * sd / 4000f64.sqrt() + 1e-9);
    }

    #[test]
    fn t_type_p1_matrices_are_a1_feasible(
        f in family(), t in tail(), slope in 0.5f64..4.0, free in 0.0f64..1.0,
        mu in -1.0f64..1.0, tau in 0.0f64..1.0,
        s in prop::collection::vec(0.05f64..2.0, 2..12),
    ) {
        let m = model(f, slope, t, free);
        let ctx = ReContext::new(mu, tau);
        let w = McGrid::new(30, 2, Seed(1)).unwrap().w;
        let q: Vec<f64> = s.iter().flat_map(|&si| w.iter().map(move |&wk| m.p1(mu + tau * wk, si, ctx))).collect();
        let q = DecisionVars::new(s.len(), w.len(), q).unwrap();
        prop_assert!(c3_witness(&q, &s, 1e-10).is_some());
    }

    #[test]
    fn cj_bound_scales_with_the_data_and_ignores_shifts(
        s in prop::collection::vec(0.05f64..2.0, 2..20), tau in 0.0f64..1.0, p in 0.05f64..1.0,
        c in 0.1f64..10.0, shift in -5.0f64..5.0,
    ) {
        let y = vec![0.0; s.len()];
        let d = MetaDataset::from_pairs(&y, &s).unwrap();
        let base = cj_bound(&d, tau, p).unwrap();
        let scaled = cj_bound(&d.scaled(c), tau * c, p).unwrap();
        let shifted = cj_bound(&d.shifted(shift), tau, p).unwrap();
        prop_assert!((scaled.upper - c * base.upper).abs() <= 1e-12 * (1.0 + c * base.upper));
        prop_assert_eq!(shifted.upper, base.upper);
        prop_assert_eq!(base.lower, -base.upper);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    /// A calibrated t-type model's own bias sits inside the A1 interval.
    #[test]
    fn a1_interval_contains_calibrated_models(
        f in family(), slope in 0.5f64..4.0, mu in -1.0f64..1.0, tau in 0.0f64..0.6, p in 0.3f64..0.8,
        s in prop::collection::vec(0.1f64..1.5, 3..7),
    ) {
        let y = vec![0.0; s.len()];
        let d = MetaDataset::from_pairs(&y, &s).unwrap();
        let cfg = OptConfig { k1: 40, k2: 40, kprime_stride: 2, ..OptConfig::default() };
        let grid = cfg.grid().unwrap();
        let ctx = ReContext::new(mu, tau);
        let n = (d.len() * grid.k1() * grid.k2()) as f64;
        let cal = calibrate_with(f.model(slope, Tail::One), p, |m| {
            let mut acc = 0.0;
            for st in d.studies() {
                for &w in &grid.w {
                    for &z in &grid.z {
                        acc += m.p0(mu + tau * w + st.s * z, st.s, ctx);
                    }
                }
            }
            acc / n
        });
        prop_assume!(cal.is_ok());
        let (_, b) = model_bias(&d, ctx, &grid, &cal.unwrap()).unwrap();
        let a1 = a1_bound_on(&d, tau, mu, p, &grid, &cfg).unwrap().bound;
        prop_assert!(b >= a1.lower - 1e-3 && b <= a1.upper + 1e-3, "{} not in [{}, {}]", b, a1.lower, a1.upper);
    }

    #[test]
    fn extended_interval_envelopes_cj(
        s in prop::collection::vec(0.1f64..1.5, 2..8), tau in 0.0f64..0.8, p in 0.1f64..0.95, seed in any::<u64>(),
    ) {
        let y = vec![0.0; s.len()];
        let d = MetaDataset::from_pairs(&y, &s).unwrap();
        let cfg = OptConfig { k1: 30, k2: 30, seed: Seed(seed), ..OptConfig::default() };
        let e = extended_bound(&d, tau, 0.0, p, &cfg).unwrap();
        prop_assert!(e.bound.upper >= e.cj.upper && e.bound.lower <= e.cj.lower);
        prop_assert!(e.bound.upper >= e.a1.bound.upper && e.bound.lower <= e.a1.bound.lower);
        prop_assert!(e.ratio >= 1.0);
    }
}

#[test]
fn scenario_results_do_not_depend_on_thread_count() {
    let mut sc = Scenario::preset("Expe_P_2").unwrap();
    sc.replications = 4;
    sc.p_grid = vec![0.4, 0.8];
    let cfg = OptConfig { k1: 20, k2: 20, ..OptConfig::default() };
    let run = |n: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
        pool.install(|| sim::run_scenario(&sc, &cfg).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.outcomes, b.outcomes);
    assert_eq!(a.rows, b.rows);
}
