use market_clock::analytics::{check_estimate, theoretical_bounds, Verdict};
use market_clock::growth_optimizer::{growth_rate, solve_market, MarketVerdict, SolverOptions};
use market_clock::market_model::{
    validate_ito, validate_levy, CoefficientModel, ItoMarketSpec, JumpAtom, LevyMarketSpec, SchedulePiece,
};
use market_clock::simulator::{upcrossing_experiment, MarketRef, SimConfig, Strategy};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn j2() -> market_clock::LevyMarket {
    validate_levy(LevyMarketSpec::with_covariance(
        vec![0.05],
        &[vec![0.01]],
        vec![JumpAtom::new(vec![0.25], 0.2)],
    ))
    .unwrap()
}

#[test]
fn report_is_independent_of_pool_size() {
    let m = j2();
    let s = solve_market(&m, SolverOptions::default()).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            upcrossing_experiment(
                MarketRef::Levy {
                    market: &m,
                    solution: &s,
                },
                &Strategy::Numeraire,
                1.0,
                50.0,
                3_000,
                &SimConfig::event(),
                42,
            )
            .unwrap()
        })
    };
    let one = run(1);
    for threads in [4, 16] {
        let other = run(threads);
        assert_eq!(one.outcomes, other.outcomes);
        assert_eq!(one.mean_t.to_bits(), other.mean_t.to_bits());
    }
}

#[test]
fn j2_estimate_is_consistent_with_bounds() {
    let m = j2();
    let s = solve_market(&m, SolverOptions::default()).unwrap();
    let target = MarketRef::Levy {
        market: &m,
        solution: &s,
    };
    let report = upcrossing_experiment(target, &Strategy::Numeraire, 2.0, 200.0, 20_000, &SimConfig::event(), 8).unwrap();
    let bounds = theoretical_bounds(2.0, 200.0, s.alpha).unwrap();
    assert_eq!(check_estimate(&report, &bounds, 3.0).unwrap(), Verdict::Consistent);
    assert!(report.overshoot_samples.iter().all(|&o| o <= s.log1p_alpha() + 1e-9));
}

#[test]
fn scheduled_ito_market_clock_matches_premium() {
    // The premium drops from 0.6 to 0.3 at t = 2; the numéraire still reaches
    // ℓ/x = e in one unit of market time on average.
    let piece = |start: f64, a: f64, s: f64| SchedulePiece {
        start,
        a: DVector::from_vec(vec![a]),
        sigma: DMatrix::from_element(1, 1, s),
    };
    let market = validate_ito(ItoMarketSpec {
        d: 1,
        m: 1,
        model: CoefficientModel::Schedule {
            pieces: vec![piece(0.0, 0.18, 0.3), piece(2.0, 0.09, 0.3)],
        },
    })
    .unwrap();
    let report = upcrossing_experiment(
        MarketRef::Ito(&market),
        &Strategy::Numeraire,
        1.0,
        std::f64::consts::E,
        4_000,
        &SimConfig::grid(1e-3),
        3,
    )
    .unwrap();
    assert_eq!(report.reached, report.reps);
    let tol = (3.0 * report.stderr_t).max(0.015);
    assert!((report.mean_t - 1.0).abs() <= tol, "{} ± {}", report.mean_t, report.stderr_t);
}

proptest! {
    #[test]
    fn bounds_are_ordered_and_scale_invariant(
        x in 0.01f64..100.0,
        ratio in 1.0f64..1e6,
        alpha in 0.0f64..5.0,
        k in -10i32..10,
    ) {
        let b = theoretical_bounds(x, x * ratio, alpha).unwrap();
        prop_assert!(b.lower <= b.upper);
        let u = 2f64.powi(k);
        let scaled = theoretical_bounds(u * x, u * x * ratio, alpha).unwrap();
        prop_assert!((scaled.lower - b.lower).abs() <= 1e-12 * (1.0 + b.lower.abs()));
        prop_assert!((scaled.upper - b.upper).abs() <= 1e-12 * (1.0 + b.upper.abs()));
    }

    #[test]
    fn numeraire_dominates_nearby_strategies(
        a in 0.02f64..0.2,
        var in 0.01f64..0.2,
        z_abs in 0.05f64..0.9,
        down in any::<bool>(),
        rate in 0.01f64..1.0,
        shift in -1.0f64..1.0,
    ) {
        let z = if down { -z_abs } else { z_abs };
        let m = validate_levy(LevyMarketSpec::with_covariance(
            vec![a],
            &[vec![var]],
            vec![JumpAtom::new(vec![z], rate)],
        ))
        .unwrap();
        let s = solve_market(&m, SolverOptions::default()).unwrap();
        prop_assert_eq!(s.verdict, MarketVerdict::Viable);
        let pi = DVector::from_vec(vec![s.rho[0] + shift]);
        if let Ok(g) = growth_rate(&pi, &m) {
            prop_assert!(g <= s.g_star + 1e-12);
        }
    }
}
