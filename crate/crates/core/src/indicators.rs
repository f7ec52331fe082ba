//! Market indicator features for the minute-scale agent.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::TickBar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IndicatorError {
    #[error("WindowTooShort: need at least 2 values, got {0}")]
    WindowTooShort(usize),
    #[error("IndexOutOfRange: t={t} with window {n} over {len} values")]
    IndexOutOfRange { t: usize, n: usize, len: usize },
    #[error("EmptySeries")]
    EmptySeries,
    #[error("DivisionByZero at t={0}")]
    DivisionByZero(usize),
    #[error("InsufficientHistory: t={t}, need t >= {required}")]
    InsufficientHistory { t: usize, required: usize },
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicatorConfig {
    /// Window for z-scores and simple moving averages.
    pub window_n: usize,
    pub ema_n: usize,
    /// Lookback in bars for the EMA-based volatility.
    pub volatility_m: usize,
    /// Number of raw closes carried in the state.
    pub history_h: usize,
}

impl Default for IndicatorConfig {
    fn default() -> Self {
        IndicatorConfig { window_n: 20, ema_n: 20, volatility_m: 10, history_h: 30 }
    }
}

impl IndicatorConfig {
    pub fn validate(&self) -> Result<(), IndicatorError> {
        if self.window_n < 2 {
            return Err(IndicatorError::InvalidConfig("window_n must be >= 2 for a z-score".into()));
        }
        if self.ema_n < 1 || self.volatility_m < 1 || self.history_h < 1 {
            return Err(IndicatorError::InvalidConfig("all windows must be >= 1".into()));
        }
        if self.history_h < self.window_n {
            return Err(IndicatorError::InvalidConfig("history_h must be >= window_n".into()));
        }
        Ok(())
    }

    /// First bar index with complete history.
    pub fn warmup(&self) -> usize {
        self.window_n.max(self.volatility_m).max(self.history_h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub price_level_z: f64,
    pub price_change_z: f64,
    pub volume_level_z: f64,
    pub volume_change_z: f64,
    pub volatility: f64,
    /// The last `history_h` closes, oldest first.
    pub raw_prices: Vec<f64>,
}

impl FeatureVector {
    pub fn indicators(&self) -> [f64; 5] {
        [self.price_level_z, self.price_change_z, self.volume_level_z, self.volume_change_z, self.volatility]
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
fn stddev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Distance of `x` from the window mean in population standard deviations;
/// zero for a flat window.
pub fn zscore(x: f64, window: &[f64]) -> Result<f64, IndicatorError> {
    if window.len() < 2 {
        return Err(IndicatorError::WindowTooShort(window.len()));
    }
    let sd = stddev(window);
    // relative threshold: flat windows of large prices leave rounding noise
    if sd <= 1e-12 * mean(window).abs().max(1.0) {
        return Ok(0.0);
    }
    Ok((x - mean(window)) / sd)
}

/// `series[t] / SMA(series[t-n..t]) - 1`, the SMA excluding `series[t]`.
fn relative_change(t: usize, n: usize, series: &[f64]) -> Result<f64, IndicatorError> {
    if n == 0 || t < n || t >= series.len() {
        return Err(IndicatorError::IndexOutOfRange { t, n, len: series.len() });
    }
    let sma = mean(&series[t - n..t]);
    if sma == 0.0 {
        return Err(IndicatorError::DivisionByZero(t));
    }
    Ok(series[t] / sma - 1.0)
}

pub fn price_change(t: usize, n: usize, closes: &[f64]) -> Result<f64, IndicatorError> {
    relative_change(t, n, closes)
}

pub fn volume_change(t: usize, n: usize, volumes: &[f64]) -> Result<f64, IndicatorError> {
    relative_change(t, n, volumes)
}

/// Recursive EMA with smoothing `2 / (n + 1)`, seeded with the first value.
pub fn ema(series: &[f64], n: usize) -> Result<Vec<f64>, IndicatorError> {
    if series.is_empty() {
        return Err(IndicatorError::EmptySeries);
    }
    if n == 0 {
        return Err(IndicatorError::InvalidConfig("ema window must be >= 1".into()));
    }
    let alpha = 2.0 / (n as f64 + 1.0);
    let mut out = Vec::with_capacity(series.len());
    let mut acc = series[0];
    out.push(acc);
    for &p in &series[1..] {
        acc = alpha * p + (1.0 - alpha) * acc;
        out.push(acc);
    }
    Ok(out)
}

/// Relative EMA move over the last `m` bars ending at `t`.
pub fn volatility(closes: &[f64], ema_n: usize, m: usize, t: usize) -> Result<f64, IndicatorError> {
    if t < m || t >= closes.len() {
        return Err(IndicatorError::IndexOutOfRange { t, n: m, len: closes.len() });
    }
    let e = ema(&closes[..=t], ema_n)?;
    let base = e[t - m];
    if base == 0.0 {
        return Err(IndicatorError::DivisionByZero(t - m));
    }
    Ok((e[t] - base) / base)
}

/// Z-score of the change series at `t` against its full history `n..=t`.
/// Zero-denominator points count as no change.
fn change_z(t: usize, n: usize, series: &[f64]) -> Result<f64, IndicatorError> {
    let changes: Vec<f64> = (n..=t)
        .map(|s| match relative_change(s, n, series) {
            Err(IndicatorError::DivisionByZero(_)) => Ok(0.0),
            other => other,
        })
        .collect::<Result<_, _>>()?;
    match changes.len() {
        0 => Err(IndicatorError::IndexOutOfRange { t, n, len: series.len() }),
        1 => Ok(0.0),
        _ => zscore(changes[changes.len() - 1], &changes),
    }
}

/// Indicator features at bar `t`, using only bars `..=t`.
pub fn featurize(bars: &[TickBar], t: usize, cfg: &IndicatorConfig) -> Result<FeatureVector, IndicatorError> {
    cfg.validate()?;
    let required = cfg.warmup();
    if t < required || t >= bars.len() {
        return Err(IndicatorError::InsufficientHistory { t, required });
    }
    let closes: Vec<f64> = bars[..=t].iter().map(|b| b.close).collect();
    let volumes: Vec<f64> = bars[..=t].iter().map(|b| b.volume).collect();
    let n = cfg.window_n;
    let fv = FeatureVector {
        price_level_z: zscore(closes[t], &closes[t - n..t])?,
        price_change_z: change_z(t, n, &closes)?,
        volume_level_z: zscore(volumes[t], &volumes[t - n..t])?,
        volume_change_z: change_z(t, n, &volumes)?,
        volatility: volatility(&closes, cfg.ema_n, cfg.volatility_m, t)?,
        raw_prices: closes[t + 1 - cfg.history_h..=t].to_vec(),
    };
    debug_assert!(fv.indicators().iter().all(|x| x.is_finite()));
    Ok(fv)
}

/// Feature dump in `t,price_level_z,price_change_z,volume_level_z,volume_change_z,volatility` form.
pub fn write_features_csv<W: std::io::Write>(rows: &[(usize, FeatureVector)], mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,price_level_z,price_change_z,volume_level_z,volume_change_z,volatility")?;
    for (t, f) in rows {
        let [a, b, c, d, e] = f.indicators();
        writeln!(out, "{t},{a},{b},{c},{d},{e}")?;
    }
    Ok(())
}
