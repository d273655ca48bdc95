use prorata_core::backtest::{compute_metrics, run_backtest, simulate_paths, Moments};
use prorata_core::liquidation::{extract_trading_curve, solve_liquidation};
use prorata_core::sim::{path_rng, run_strategy, PathInputs, SimConfig, Strategy, Trade};
use prorata_core::{backward_solve, liquidation_value, GridSpec, MarketParams, Side};
use rand::Rng;
use rand_distr::StandardNormal;

#[test]
fn price_changes_average_k_times_horizon() {
    let params = MarketParams::default();
    let sim = SimConfig::default();
    let n = sim.n_paths as f64;
    let mut jumps = 0.0;
    let mut drift = Vec::with_capacity(sim.n_paths);
    for path in 0..sim.n_paths as u64 {
        let inputs = PathInputs::generate(&params, &sim, path);
        let m = &inputs.market;
        jumps += (m.up_jumps + m.down_jumps) as f64;
        drift.push(m.price.last().unwrap() - m.price[0]);
    }
    let mean = jumps / n;
    assert!((mean - 100.0).abs() < 3.0 * 10.0 / n.sqrt(), "mean jump count {mean}");
    let d = Moments::of(&drift).unwrap();
    assert!(d.mean.abs() < 3.0 * d.std_dev / n.sqrt(), "drift {}", d.mean);
}

#[test]
fn fills_match_poisson_and_mark_means() {
    let params = MarketParams::default();
    let sim = SimConfig::default();
    let n = sim.n_paths as f64;
    let (mut count_a, mut count_b) = (0usize, 0usize);
    let mut marks = Vec::new();
    for path in 0..sim.n_paths as u64 {
        let fills = PathInputs::generate(&params, &sim, path).fills;
        count_a += fills.count(Side::Ask);
        count_b += fills.count(Side::Bid);
        marks.extend(fills.ask.iter().chain(&fills.bid).flatten());
    }
    let band = 3.0 * 5f64.sqrt() / n.sqrt();
    assert!((count_a as f64 / n - 5.0).abs() < band);
    assert!((count_b as f64 / n - 5.0).abs() < band);
    let m = Moments::of(&marks).unwrap();
    assert!((m.mean - 20.0).abs() < 3.0 * 20.0 / (marks.len() as f64).sqrt(), "mark mean {}", m.mean);
}

#[test]
fn zero_intensities_give_flat_strategies() {
    let params = MarketParams { lambda_ask: 0.0, lambda_bid: 0.0, ..MarketParams::default() };
    let grid = GridSpec { n_t: 100, n_y: 20, m_bound: 20.0, ..GridSpec::default() };
    let sim = SimConfig { n_paths: 200, ..SimConfig::default() };
    let (_, policy) = backward_solve(&params, &grid).unwrap();
    let report = run_backtest(&params, &grid, &sim, &policy).unwrap();
    for s in [&report.optimal, &report.benchmark] {
        assert_eq!((s.mean, s.std_dev, s.mean_total_volume, s.mean_market_volume), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(s.info_ratio, None);
    }
}

#[test]
fn optimal_paths_satisfy_accounting_identity() {
    let params = MarketParams::default();
    let grid = GridSpec::default();
    let sim = SimConfig { n_paths: 300, ..SimConfig::default() };
    let (_, policy) = backward_solve(&params, &grid).unwrap();
    for (path, pair) in simulate_paths(&params, &grid, &sim, &policy, true).unwrap().iter().enumerate() {
        for rec in [&pair.0, &pair.1] {
            let cash: f64 = rec.trades.iter().map(Trade::cash_flow).sum();
            let inv: f64 = rec.trades.iter().map(|t| t.volume).sum();
            let v = liquidation_value(cash, inv, rec.final_price, &params);
            let scale = rec.total_volume * rec.final_price.abs().max(1.0);
            assert!((v - rec.terminal_wealth).abs() <= 1e-9 * scale.max(1.0), "path {path}");
            assert!(rec.market_volume <= rec.total_volume);
            let last = rec.series.as_ref().unwrap().last().unwrap();
            assert_eq!((last.cash, last.inventory), (rec.cash, rec.inventory));
        }
        assert_eq!(pair.1.market_volume, 0.0);
    }
}

#[test]
fn paths_do_not_depend_on_thread_count() {
    let params = MarketParams::default();
    let grid = GridSpec { n_t: 200, n_y: 40, m_bound: 80.0, n_trend: 5, ..GridSpec::default() };
    let sim = SimConfig { n_paths: 400, seed: 99, ..SimConfig::default() };
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let (surface, policy) = backward_solve(&params, &grid).unwrap();
            let records = simulate_paths(&params, &grid, &sim, &policy, false).unwrap();
            let wealth: Vec<f64> = records.iter().map(|r| r.0.terminal_wealth).collect();
            (surface, policy, wealth)
        })
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one.0, four.0);
    assert_eq!(one.1, four.1);
    assert_eq!(
        one.2.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        four.2.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn kurtosis_of_normal_sample_is_three() {
    let mut rng = path_rng(5, 0, 0);
    let n = 200_000;
    let sample: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let m = Moments::of(&sample).unwrap();
    assert!((m.kurtosis.unwrap() - 3.0).abs() < 3.0 * (24.0 / n as f64).sqrt());
    assert!(m.skewness.unwrap().abs() < 3.0 * (6.0 / n as f64).sqrt());
}

#[test]
fn benchmark_never_takes() {
    let params = MarketParams::default();
    let sim = SimConfig { n_paths: 100, ..SimConfig::default() };
    let records: Vec<_> = (0..100)
        .map(|p| run_strategy(Strategy::Benchmark, &PathInputs::generate(&params, &sim, p), &params, &sim, false))
        .collect();
    let stats = compute_metrics(&records).unwrap();
    assert_eq!(stats.market_ratio, Some(0.0));
}

#[test]
fn liquidation_curve_stays_positive() {
    let (surface, policy) =
        solve_liquidation(&MarketParams::default(), &GridSpec { n_trend: 1, ..GridSpec::default() }).unwrap();
    assert!(surface.layer(surface.n_t()).iter().all(|&v| v == 0.0));
    let curve = extract_trading_curve(&policy);
    assert!(curve.boundary.iter().all(|b| matches!(b, Some(y) if *y > 0.0)));
    // above the frontier every sale lands on one target at or below it
    for (k, row) in curve.sells.iter().enumerate().take(policy.n_t() - 1) {
        let b = curve.boundary[k].unwrap();
        let targets: Vec<f64> = row.iter().filter(|s| s.0 >= b).map(|&(y, e)| y + e).collect();
        let lo = targets.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = targets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(hi - lo <= policy.dy() + 1e-12, "k={k}: targets {lo}..{hi}");
        assert!(hi <= b && lo > 0.0, "k={k}: targets {lo}..{hi}, b={b}");
    }
}
