//! Flat key-value run configuration.

use std::path::Path;

use prorata_core::backtest::FRONTIER_GAMMAS;
use prorata_core::sim::SimConfig;
use prorata_core::{GridSpec, MarketParams, VolumeLaw};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Keys accepted in a configuration file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub delta: Option<f64>,
    pub eps: Option<f64>,
    pub eps0: Option<f64>,
    pub lambda_a: Option<f64>,
    pub lambda_b: Option<f64>,
    pub mu_mean_a: Option<f64>,
    pub mu_mean_b: Option<f64>,
    /// `[[volume, probability], ...]`; overrides `mu_mean_a`.
    pub mu_atoms_a: Option<Vec<[f64; 2]>>,
    pub mu_atoms_b: Option<Vec<[f64; 2]>>,
    pub gamma: Option<f64>,
    pub rho: Option<f64>,
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    pub c_p: Option<f64>,
    pub n_t: Option<usize>,
    pub n_y: Option<usize>,
    pub m_bound: Option<f64>,
    pub n_trend: Option<usize>,
    pub c_max: Option<f64>,
    pub tail_tol: Option<f64>,
    pub k_rate: Option<f64>,
    pub theta: Option<f64>,
    pub sigma: Option<f64>,
    pub dt: Option<f64>,
    pub n_mc: Option<usize>,
    pub seed: Option<u64>,
    pub p0: Option<f64>,
    pub varpi0: Option<f64>,
    pub gammas: Option<Vec<f64>>,
}

/// Fully resolved configuration, echoed into outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub delta: f64,
    pub eps: f64,
    pub eps0: f64,
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub mu_a: VolumeLaw,
    pub mu_b: VolumeLaw,
    pub gamma: f64,
    pub rho: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub c_p: f64,
    pub n_t: usize,
    pub n_y: usize,
    pub m_bound: f64,
    pub n_trend: usize,
    pub c_max: f64,
    pub tail_tol: f64,
    pub k_rate: f64,
    pub theta: f64,
    pub sigma: f64,
    pub dt: f64,
    pub n_mc: usize,
    pub seed: u64,
    pub p0: f64,
    pub varpi0: f64,
    pub gammas: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub settings: Settings,
    pub params: MarketParams,
    pub grid: GridSpec,
    pub sim: SimConfig,
}

fn law(key: &'static str, atoms: Option<Vec<[f64; 2]>>, mean: f64) -> Result<VolumeLaw, CliError> {
    let result = match atoms {
        Some(atoms) => VolumeLaw::tabulated(atoms.into_iter().map(|[z, p]| (z, p))),
        None => VolumeLaw::exponential(mean),
    };
    result.map_err(|e| CliError::Config { key: key.to_string(), reason: e.to_string() })
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            let key = message
                .split('`')
                .nth(1)
                .filter(|_| message.starts_with("unknown field"))
                .map(str::to_string)
                .unwrap_or_else(|| key_at(text, e.span()));
            CliError::Config { key, reason: message }
        })
    }

    /// Fills defaults, reconciles linked keys, and validates.
    pub fn resolve(self) -> Result<RunConfig, CliError> {
        let bad = |key: &str, reason: String| CliError::Config { key: key.to_string(), reason };
        let base = MarketParams::default();
        let sim_base = SimConfig::default();
        let delta = self.delta.unwrap_or(base.tick);
        let (rho, k_rate) = match (self.rho, self.k_rate) {
            (Some(rho), Some(k)) => {
                let implied = rho / (delta * delta);
                if (implied - k).abs() > 1e-9 * k.abs().max(implied.abs()) {
                    return Err(bad(
                        "k_rate",
                        format!("k_rate = {k} but rho/delta^2 = {implied}; the price variance rates disagree"),
                    ));
                }
                (rho, k)
            }
            (Some(rho), None) => (rho, rho / (delta * delta)),
            (None, Some(k)) => (k * delta * delta, k),
            (None, None) => (sim_base.k_rate * delta * delta, sim_base.k_rate),
        };
        let theta = self.theta.unwrap_or(sim_base.theta);
        let sigma = self.sigma.unwrap_or(sim_base.sigma);
        let c_max = match self.c_max {
            Some(c) => c,
            None if theta > 0.0 && sigma > 0.0 => 4.0 * delta * sigma / (2.0 * theta).sqrt(),
            None => GridSpec::default().c_max,
        };
        let mean_a = self.mu_mean_a.unwrap_or(base.volume_ask.mean());
        let mean_b = self.mu_mean_b.unwrap_or(base.volume_bid.mean());
        let grid_base = GridSpec::default();
        let settings = Settings {
            delta,
            eps: self.eps.unwrap_or(base.fee),
            eps0: self.eps0.unwrap_or(base.fixed_fee),
            lambda_a: self.lambda_a.unwrap_or(base.lambda_ask),
            lambda_b: self.lambda_b.unwrap_or(base.lambda_bid),
            mu_a: law("mu_mean_a", self.mu_atoms_a, mean_a)?,
            mu_b: law("mu_mean_b", self.mu_atoms_b, mean_b)?,
            gamma: self.gamma.unwrap_or(base.gamma),
            rho,
            horizon: self.horizon.unwrap_or(base.horizon),
            c_p: self.c_p.unwrap_or(base.trend),
            n_t: self.n_t.unwrap_or(grid_base.n_t),
            n_y: self.n_y.unwrap_or(grid_base.n_y),
            m_bound: self.m_bound.unwrap_or(grid_base.m_bound),
            n_trend: self.n_trend.unwrap_or(grid_base.n_trend),
            c_max,
            tail_tol: self.tail_tol.unwrap_or(grid_base.tail_tol),
            k_rate,
            theta,
            sigma,
            dt: self.dt.unwrap_or(sim_base.dt),
            n_mc: self.n_mc.unwrap_or(sim_base.n_paths),
            seed: self.seed.unwrap_or(sim_base.seed),
            p0: self.p0.unwrap_or(sim_base.p0),
            varpi0: self.varpi0.unwrap_or(sim_base.varpi0),
            gammas: self.gammas.unwrap_or_else(|| FRONTIER_GAMMAS.to_vec()),
        };
        if let Some(g) = settings.gammas.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(bad("gammas", format!("every value must be > 0, got {g}")));
        }
        RunConfig::from_settings(settings)
    }
}

/// Name of the key on the line holding `span`, for error messages.
fn key_at(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    let Some(span) = span else { return "<file>".to_string() };
    let start = text[..span.start.min(text.len())].rfind('\n').map_or(0, |p| p + 1);
    let line = &text[start..];
    line.split(['=', '\n']).next().unwrap_or("").trim().to_string()
}

impl RunConfig {
    pub fn from_settings(settings: Settings) -> Result<Self, CliError> {
        let s = &settings;
        let params = MarketParams {
            tick: s.delta,
            fee: s.eps,
            fixed_fee: s.eps0,
            lambda_ask: s.lambda_a,
            lambda_bid: s.lambda_b,
            volume_ask: s.mu_a.clone(),
            volume_bid: s.mu_b.clone(),
            gamma: s.gamma,
            rho: s.rho,
            horizon: s.horizon,
            trend: s.c_p,
        };
        let grid = GridSpec {
            n_t: s.n_t,
            n_y: s.n_y,
            m_bound: s.m_bound,
            n_trend: s.n_trend,
            c_max: s.c_max,
            tail_tol: s.tail_tol,
        };
        let sim = SimConfig {
            k_rate: s.k_rate,
            theta: s.theta,
            sigma: s.sigma,
            dt: s.dt,
            n_paths: s.n_mc,
            seed: s.seed,
            p0: s.p0,
            varpi0: s.varpi0,
        };
        params.validate()?;
        grid.validate()?;
        grid.check_cfl(&params)?;
        sim.validate(&params)?;
        Ok(RunConfig { settings, params, grid, sim })
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|source| CliError::Io { path: p.to_path_buf(), source })?,
            None => String::new(),
        };
        ConfigFile::parse(&text)?.resolve()
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(seed) = seed {
            self.settings.seed = seed;
            self.sim.seed = seed;
        }
        self
    }

    pub fn with_paths(mut self, paths: Option<usize>) -> Result<Self, CliError> {
        if let Some(n) = paths {
            self.settings.n_mc = n;
            self.sim.n_paths = n;
            self.sim.validate(&self.params)?;
        }
        Ok(self)
    }
}
