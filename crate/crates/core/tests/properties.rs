use proptest::prelude::*;
use prorata_core::liquidation::LiquidationSolver;
use prorata_core::{backward_solve, DiscreteMeasure, GridSpec, MarketParams, QviSolver, VolumeLaw};

fn market() -> impl Strategy<Value = MarketParams> {
    (0.5f64..20.0, 0.0f64..2.0, 0.0f64..1.0, 0.0f64..0.2, 0.0f64..0.2, 1.0f64..40.0, 1e-6f64..1e-2, -0.3f64..0.3)
        .prop_map(|(tick, fee, fixed_fee, la, lb, mean, gamma, trend)| MarketParams {
            tick,
            fee,
            fixed_fee,
            lambda_ask: la,
            lambda_bid: lb,
            volume_ask: VolumeLaw::exponential(mean).unwrap(),
            volume_bid: VolumeLaw::exponential(mean * 0.7).unwrap(),
            gamma,
            rho: tick * tick,
            horizon: 20.0,
            trend,
        })
}

fn small_grid() -> GridSpec {
    GridSpec { n_t: 40, n_y: 12, m_bound: 24.0, n_trend: 1, ..GridSpec::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scheme_step_is_monotone(
        params in market(),
        base in prop::collection::vec(-50.0f64..50.0, 25),
        bump in prop::collection::vec(0.0f64..10.0, 25),
    ) {
        let solver = QviSolver::new(&params, &small_grid()).unwrap();
        let upper: Vec<f64> = base.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let (lo, _) = solver.scheme_step(params.trend, &base).unwrap();
        let (hi, _) = solver.scheme_step(params.trend, &upper).unwrap();
        for (a, b) in lo.iter().zip(&hi) {
            prop_assert!(a <= b);
        }
    }

    #[test]
    fn solved_surface_respects_bounds(params in market()) {
        let grid = small_grid();
        let (surface, policy) = backward_solve(&params, &grid).unwrap();
        let h = surface.time_step();
        for k in 0..=grid.n_t {
            let bound = params.value_upper_bound(k as f64 * h, params.trend);
            for &w in surface.layer(k, 0) {
                prop_assert!(w >= -params.fixed_fee - 1e-12);
                prop_assert!(w <= bound + 1e-9);
            }
        }
        for (_, i, _, e) in policy.iter() {
            prop_assert!(e.take_steps.abs() <= i.abs());
        }
    }

    #[test]
    fn liquidation_is_nonnegative_without_fixed_fee(params in market()) {
        let params = MarketParams { fixed_fee: 0.0, ..params };
        let (surface, policy) = LiquidationSolver::new(&params, &small_grid()).unwrap().solve().unwrap();
        for k in 0..=surface.n_t() {
            prop_assert!(surface.layer(k).iter().all(|&v| v >= 0.0));
        }
        for (_, i, _, e) in policy.iter() {
            prop_assert!(e.take_steps <= 0 && e.take_steps >= -i);
        }
    }

    #[test]
    fn discrete_measure_is_a_probability(mean in 0.3f64..80.0, step in 0.05f64..5.0) {
        let m = DiscreteMeasure::from_law(&VolumeLaw::exponential(mean).unwrap(), step, 1e-12).unwrap();
        prop_assert!((m.total_mass() - 1.0).abs() < 1e-12);
        prop_assert!(m.masses().iter().all(|&q| q >= 0.0));
        prop_assert!((m.tail_mass(0) - m.total_mass()).abs() < 1e-12);
    }

    #[test]
    fn tabulated_measure_keeps_atom_mass(z in prop::collection::vec((0.1f64..30.0, 0.01f64..1.0), 1..6)) {
        let total: f64 = z.iter().map(|a| a.1).sum();
        let law = VolumeLaw::tabulated(z.iter().map(|&(v, q)| (v, q / total))).unwrap();
        let m = DiscreteMeasure::from_law(&law, 1.0, 1e-12).unwrap();
        prop_assert!((m.total_mass() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn symmetric_market_gives_symmetric_surface() {
    let params = MarketParams::default();
    let grid = GridSpec { n_t: 100, n_y: 30, m_bound: 60.0, n_trend: 6, c_max: 0.25, ..GridSpec::default() };
    let (surface, _) = backward_solve(&params, &grid).unwrap();
    let n = grid.n_trend;
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for k in 0..=grid.n_t {
            for i in -30..=30 {
                worst = worst.max((surface.value(k, i, j) - surface.value(k, -i, n - 1 - j)).abs());
            }
        }
    }
    assert!(worst < 1e-9, "asymmetry {worst:e}");
}
