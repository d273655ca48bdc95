//! File formats. Values are written with 17 significant digits and grid
//! coordinates in shortest round-trip form, so every table reads back
//! bit-exactly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use prorata_core::backtest::{Frontier, Histogram};
use prorata_core::liquidation::{LiquidationSurface, TradingCurve};
use prorata_core::{PolicyEntry, PolicyTable, Regime, ValueSurface};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `bytes` to `dir/name` through a temporary file in the same
/// directory, so readers never observe a partial file.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let io = |source| CliError::Io { path: path.clone(), source };
    fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(fs::Permissions::from_mode(0o644)).map_err(io)?;
    }
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(&path).map_err(|e| io(e.error))?;
    Ok(path)
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

/// Grid description stored next to solved tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub h: f64,
    pub dy: f64,
    pub n_t: usize,
    pub n_y: usize,
    pub trends: Vec<f64>,
    pub impulse_threshold: f64,
}

pub fn value_csv(s: &ValueSurface) -> Vec<u8> {
    let n = s.n_y() as i64;
    let rows = s.trends().iter().enumerate().flat_map(move |(j, &c)| {
        (0..=s.n_t()).flat_map(move |k| {
            (-n..=n).map(move |i| {
                vec![
                    k.to_string(),
                    i.to_string(),
                    j.to_string(),
                    (k as f64 * s.time_step()).to_string(),
                    (i as f64 * s.dy()).to_string(),
                    c.to_string(),
                    fmt(s.value(k, i, j)),
                ]
            })
        })
    });
    csv_bytes(&["k", "i", "j", "t", "y", "c", "w"], rows)
}

pub fn policy_csv(p: &PolicyTable) -> Vec<u8> {
    let rows = p.iter().map(|(k, i, j, e)| {
        vec![
            k.to_string(),
            i.to_string(),
            j.to_string(),
            (k as f64 * p.time_step()).to_string(),
            (i as f64 * p.dy()).to_string(),
            p.trends()[j].to_string(),
            flag(e.regime.ask),
            flag(e.regime.bid),
            flag(e.take),
            e.take_steps.to_string(),
            fmt(e.take_steps as f64 * p.dy()),
        ]
    });
    csv_bytes(&["k", "i", "j", "t", "y", "c", "ask", "bid", "take", "take_steps", "e"], rows)
}

pub fn liquidation_value_csv(s: &LiquidationSurface) -> Vec<u8> {
    let rows = (0..=s.n_t()).flat_map(|k| {
        (0..=s.n_y()).map(move |i| {
            vec![
                k.to_string(),
                i.to_string(),
                (k as f64 * s.time_step()).to_string(),
                (i as f64 * s.dy()).to_string(),
                fmt(s.value(k, i as i64)),
            ]
        })
    });
    csv_bytes(&["k", "i", "t", "y", "w"], rows)
}

pub fn liquidation_policy_csv(p: &PolicyTable) -> Vec<u8> {
    let rows = p.iter().map(|(k, i, _, e)| {
        vec![
            k.to_string(),
            i.to_string(),
            (k as f64 * p.time_step()).to_string(),
            (i as f64 * p.dy()).to_string(),
            flag(e.take),
            e.take_steps.to_string(),
            fmt(e.take_steps as f64 * p.dy()),
        ]
    });
    csv_bytes(&["k", "i", "t", "y", "take", "take_steps", "e"], rows)
}

/// `b = none` marks time nodes without a sell region.
pub fn trading_curve_csv(c: &TradingCurve) -> Vec<u8> {
    let rows =
        c.times.iter().zip(&c.boundary).enumerate().map(|(k, (t, b))| {
            vec![k.to_string(), t.to_string(), b.map_or_else(|| "none".to_string(), |y| y.to_string())]
        });
    csv_bytes(&["k", "t", "b"], rows)
}

pub fn histogram_csv(h: &Histogram) -> Vec<u8> {
    let rows = (0..h.optimal.len())
        .map(|b| vec![fmt(h.edges[b]), fmt(h.edges[b + 1]), h.optimal[b].to_string(), h.benchmark[b].to_string()]);
    csv_bytes(&["bin_left", "bin_right", "count_optimal", "count_benchmark"], rows)
}

pub fn frontier_csv(f: &Frontier) -> Vec<u8> {
    let rows = f.rows.iter().map(|r| vec![fmt(r.gamma), fmt(r.std_dev), fmt(r.mean)]);
    csv_bytes(&["gamma", "sigma_v", "mean_v"], rows)
}

pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable");
    out.push(b'\n');
    out
}

fn read_meta(dir: &Path) -> Result<GridMeta, CliError> {
    let path = dir.join("grid.json");
    let text = fs::read_to_string(&path).map_err(|source| CliError::Io { path: path.clone(), source })?;
    serde_json::from_str(&text).map_err(|e| CliError::Input { path, reason: e.to_string() })
}

fn records(path: &Path) -> Result<Vec<csv::StringRecord>, CliError> {
    let bad = |reason: String| CliError::Input { path: path.to_path_buf(), reason };
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    reader.records().collect::<Result<_, _>>().map_err(|e| bad(e.to_string()))
}

fn field<T: std::str::FromStr>(path: &Path, row: &csv::StringRecord, col: usize) -> Result<T, CliError> {
    row.get(col).and_then(|s| s.parse().ok()).ok_or_else(|| CliError::Input {
        path: path.to_path_buf(),
        reason: format!("bad field {col} in row {:?}", row.iter().collect::<Vec<_>>()),
    })
}

/// Loads a market-making policy written by `solve`.
pub fn read_policy(dir: &Path) -> Result<PolicyTable, CliError> {
    let meta = read_meta(dir)?;
    let path = dir.join("policy.csv");
    let rows = records(&path)?;
    let n = meta.n_y as i64;
    let width = 2 * meta.n_y + 1;
    let expected = meta.trends.len() * meta.n_t * width;
    if rows.len() != expected {
        return Err(CliError::Input { path, reason: format!("expected {expected} rows, found {}", rows.len()) });
    }
    let mut entries = vec![PolicyEntry::default(); expected];
    for row in &rows {
        let k: usize = field(&path, row, 0)?;
        let i: i64 = field(&path, row, 1)?;
        let j: usize = field(&path, row, 2)?;
        if k >= meta.n_t || i.abs() > n || j >= meta.trends.len() {
            return Err(CliError::Input { path, reason: format!("node ({k}, {i}, {j}) is off the grid") });
        }
        let ask: u8 = field(&path, row, 6)?;
        let bid: u8 = field(&path, row, 7)?;
        let take: u8 = field(&path, row, 8)?;
        let steps: i64 = field(&path, row, 9)?;
        entries[(j * meta.n_t + k) * width + (i + n) as usize] =
            PolicyEntry { regime: Regime { ask: ask == 1, bid: bid == 1 }, take: take == 1, take_steps: steps };
    }
    Ok(PolicyTable::from_parts(meta.h, meta.dy, meta.n_t, -n, n, meta.trends, entries))
}

/// Loads a value surface written by `solve`.
pub fn read_value(dir: &Path) -> Result<ValueSurface, CliError> {
    let meta = read_meta(dir)?;
    let path = dir.join("value.csv");
    let rows = records(&path)?;
    let n = meta.n_y as i64;
    let width = 2 * meta.n_y + 1;
    let expected = meta.trends.len() * (meta.n_t + 1) * width;
    if rows.len() != expected {
        return Err(CliError::Input { path, reason: format!("expected {expected} rows, found {}", rows.len()) });
    }
    let mut values = vec![f64::NAN; expected];
    for row in &rows {
        let k: usize = field(&path, row, 0)?;
        let i: i64 = field(&path, row, 1)?;
        let j: usize = field(&path, row, 2)?;
        if k > meta.n_t || i.abs() > n || j >= meta.trends.len() {
            return Err(CliError::Input { path, reason: format!("node ({k}, {i}, {j}) is off the grid") });
        }
        values[(j * (meta.n_t + 1) + k) * width + (i + n) as usize] = field(&path, row, 6)?;
    }
    Ok(ValueSurface::from_parts(meta.h, meta.dy, meta.n_t, meta.n_y, meta.trends, values))
}
