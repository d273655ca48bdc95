//! Independent oracles shared by the integration and acceptance tests.

use prorata_core::{GridSpec, MarketParams, VolumeLaw};

/// 8-point Gauss-Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

fn gauss_legendre(f: &impl Fn(f64) -> f64, a: f64, b: f64, pieces: usize) -> f64 {
    let w = (b - a) / pieces as f64;
    let mut total = 0.0;
    for p in 0..pieces {
        let lo = a + p as f64 * w;
        let mid = lo + 0.5 * w;
        let s: f64 = GL_NODES.iter().zip(GL_WEIGHTS).map(|(&x, wt)| wt * f(mid + 0.5 * w * x)).sum();
        total += 0.5 * w * s;
    }
    total
}

/// Ask-side fee integral by quadrature of the exponential density, split at
/// the kink `z = y`.
pub fn fee_by_quadrature(y: f64, mean: f64, tick: f64, fee: f64) -> f64 {
    let cross = 0.5 * tick + fee;
    let f = |z: f64| (0.5 * tick * z + cross * (y.abs() - (y - z).abs())) * (-z / mean).exp() / mean;
    let end = 80.0 * mean;
    if y > 0.0 {
        gauss_legendre(&f, 0.0, y, 64) + gauss_legendre(&f, y, end, 4000)
    } else {
        gauss_legendre(&f, 0.0, end, 4000)
    }
}

/// Tiny market with a two-atom law whose larger atom overshoots the grid.
pub fn tiny() -> (MarketParams, GridSpec) {
    let law = VolumeLaw::tabulated([(1.0, 0.4), (3.0, 0.6)]).unwrap();
    let params = MarketParams {
        tick: 2.0,
        fee: 0.5,
        fixed_fee: 0.1,
        lambda_ask: 0.3,
        lambda_bid: 0.2,
        volume_ask: law.clone(),
        volume_bid: VolumeLaw::tabulated([(1.0, 0.7), (2.0, 0.3)]).unwrap(),
        gamma: 0.01,
        rho: 1.5,
        horizon: 2.0,
        trend: 0.2,
    };
    let grid = GridSpec { n_t: 2, n_y: 2, m_bound: 2.0, n_trend: 1, c_max: 0.3, tail_tol: 1e-12 };
    (params, grid)
}

fn atoms(law: &VolumeLaw) -> Vec<(f64, f64)> {
    match law {
        VolumeLaw::Tabulated { atoms } => atoms.clone(),
        _ => unreachable!(),
    }
}

/// Direct enumeration of the explicit scheme on the grid `y = -2..=2`.
pub fn enumerate_qvi(p: &MarketParams, trend: f64) -> Vec<[f64; 5]> {
    let h = 1.0;
    let m = 2.0;
    let cross = 0.5 * p.tick + p.fee;
    let proj = |y: f64| y.clamp(-m, m);
    let ask = atoms(&p.volume_ask);
    let bid = atoms(&p.volume_bid);
    let fa = |y: f64| ask.iter().map(|&(z, q)| q * (0.5 * p.tick * z + cross * (y.abs() - (y - z).abs()))).sum::<f64>();
    let fb = |y: f64| bid.iter().map(|&(z, q)| q * (0.5 * p.tick * z + cross * (y.abs() - (y + z).abs()))).sum::<f64>();
    let mut layers = vec![[0.0; 5]];
    for _ in 0..2 {
        let phi = *layers.last().unwrap();
        let at = |y: f64| phi[(y + 2.0) as usize];
        let mut out = [0.0; 5];
        for (idx, slot) in out.iter_mut().enumerate() {
            let y = idx as f64 - 2.0;
            let mut make = f64::NEG_INFINITY;
            for la in [0.0, 1.0] {
                for lb in [0.0, 1.0] {
                    let ea: f64 = ask.iter().map(|&(z, q)| q * at(proj(y - z))).sum();
                    let eb: f64 = bid.iter().map(|&(z, q)| q * at(proj(y + z))).sum();
                    let v = at(y) * (1.0 - p.lambda_ask * h * la - p.lambda_bid * h * lb)
                        + p.lambda_ask * h * la * (ea + fa(y))
                        + p.lambda_bid * h * lb * (eb + fb(y));
                    make = make.max(v);
                }
            }
            make += -h * p.gamma * p.rho * y * y + h * y * trend;
            let mut take = f64::NEG_INFINITY;
            for e in [-2.0f64, -1.0, 0.0, 1.0, 2.0] {
                if e.abs() <= y.abs() {
                    take = take.max(at(proj(y + e)) - cross * ((y + e).abs() + e.abs() - y.abs()) - p.fixed_fee);
                }
            }
            *slot = make.max(take);
        }
        layers.push(out);
    }
    layers.reverse();
    layers
}

pub fn enumerate_liquidation(p: &MarketParams) -> Vec<[f64; 3]> {
    let h = 1.0;
    let cross = 0.5 * p.tick + p.fee;
    let ask = atoms(&p.volume_ask);
    let fa = |y: f64| ask.iter().map(|&(z, q)| q * (0.5 * p.tick * z + cross * (y.abs() - (y - z).abs()))).sum::<f64>();
    let mut layers = vec![[0.0; 3]];
    for _ in 0..2 {
        let phi = *layers.last().unwrap();
        let at = |y: f64| if y <= 0.0 { 0.0 } else { phi[y.min(2.0) as usize] };
        let mut out = [0.0; 3];
        for (idx, slot) in out.iter_mut().enumerate().skip(1) {
            let y = idx as f64;
            let jump: f64 = ask.iter().map(|&(z, q)| q * (at(y - z) - at(y))).sum();
            let make = at(y) - h * p.gamma * p.rho * y * y + h * y * p.trend + p.lambda_ask * h * (jump + fa(y));
            let mut take = f64::NEG_INFINITY;
            for e in [-2.0f64, -1.0, 0.0] {
                if -e <= y {
                    take = take.max(at(y + e) - cross * ((y + e).abs() + e.abs() - y) - p.fixed_fee);
                }
            }
            *slot = make.max(take);
        }
        layers.push(out);
    }
    layers.reverse();
    layers
}
