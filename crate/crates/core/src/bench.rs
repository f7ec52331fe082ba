//! Benchmark strategies, PNL curves and the combined macro + micro pipeline.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::ingest::{BookTimeline, TickBar};
use crate::macro_env::{BlotterRow, MacroAction, MacroConfig, MacroEnv};
use crate::micro_env::{EpisodeRecord, MicroAction, MicroConfig, MicroEnv};
use crate::neural::{argmax, QNetwork};
use crate::orderbook::vwap;
use crate::types::{Side, Timestamp};
use crate::Error;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BenchError {
    #[error("EmptySeries: no bars to evaluate")]
    EmptySeries,
    #[error("SeriesTooShort: {len} bars, need more than {required}")]
    SeriesTooShort { len: usize, required: usize },
    #[error("NonIncreasingTimestamps: {0} does not follow the previous point")]
    NonIncreasingTimestamps(Timestamp),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PnlStats {
    pub final_pnl: f64,
    /// Largest peak-to-trough fall of the cumulative curve.
    pub max_drawdown: f64,
    /// Population standard deviation of per-step profit.
    pub step_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnlCurve {
    pub points: Vec<(Timestamp, f64)>,
    pub stats: PnlStats,
}

impl PnlCurve {
    pub fn new(points: Vec<(Timestamp, f64)>) -> Result<Self, BenchError> {
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(BenchError::NonIncreasingTimestamps(w[1].0));
            }
        }
        let stats = curve_stats(&points);
        Ok(PnlCurve { points, stats })
    }

    pub fn final_pnl(&self) -> f64 {
        self.stats.final_pnl
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "ts,cum_pnl")?;
        for (ts, v) in &self.points {
            writeln!(out, "{ts},{v}")?;
        }
        Ok(())
    }
}

fn curve_stats(points: &[(Timestamp, f64)]) -> PnlStats {
    let final_pnl = points.last().map_or(0.0, |p| p.1);
    let mut peak = 0.0f64;
    let mut max_drawdown = 0.0f64;
    for &(_, v) in points {
        peak = peak.max(v);
        max_drawdown = max_drawdown.max(peak - v);
    }
    // per-step profit, counting the first point as a step from zero
    let steps: Vec<f64> = points
        .iter()
        .scan(0.0, |prev, &(_, v)| {
            let d = v - *prev;
            *prev = v;
            Some(d)
        })
        .collect();
    let step_std = if steps.is_empty() {
        0.0
    } else {
        let n = steps.len() as f64;
        let mean = steps.iter().sum::<f64>() / n;
        (steps.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt()
    };
    PnlStats { final_pnl, max_drawdown, step_std }
}

/// Holds `quantity` bought at the first open; marks to each bar's open.
pub fn buy_and_hold(bars: &[TickBar], quantity: f64) -> Result<PnlCurve, BenchError> {
    let first = bars.first().ok_or(BenchError::EmptySeries)?.open;
    PnlCurve::new(bars.iter().map(|b| (b.open_time, quantity * (b.open - first))).collect())
}

/// Buys one unit when the open is below the SMA of the previous `n` closes,
/// liquidates everything when above. Profit is realized on sells only.
pub fn momentum(bars: &[TickBar], n: usize) -> Result<PnlCurve, BenchError> {
    if n == 0 || bars.len() <= n {
        return Err(BenchError::SeriesTooShort { len: bars.len(), required: n.max(1) });
    }
    let mut held: Vec<f64> = Vec::new();
    let mut cum = 0.0;
    let mut points = Vec::with_capacity(bars.len());
    for (t, bar) in bars.iter().enumerate() {
        if t >= n {
            let sma = bars[t - n..t].iter().map(|b| b.close).sum::<f64>() / n as f64;
            if bar.open < sma {
                held.push(bar.open);
            } else if bar.open > sma {
                cum += held.drain(..).map(|p| bar.open - p).sum::<f64>();
            }
        }
        points.push((bar.open_time, cum));
    }
    PnlCurve::new(points)
}

pub trait MacroPolicy {
    fn decide(&mut self, state: &[f64]) -> Result<MacroAction, Error>;
}

/// Greedy policy of a trained network.
impl MacroPolicy for QNetwork {
    fn decide(&mut self, state: &[f64]) -> Result<MacroAction, Error> {
        let q = self.forward(state)?;
        Ok(MacroAction::from_index(argmax(&q)).unwrap_or(MacroAction::Hold))
    }
}

impl<F: FnMut(&[f64]) -> MacroAction> MacroPolicy for F {
    fn decide(&mut self, state: &[f64]) -> Result<MacroAction, Error> {
        Ok(self(state))
    }
}

pub trait MicroPolicy {
    fn choose(&mut self, state: &[f64]) -> Result<MicroAction, Error>;
}

impl MicroPolicy for QNetwork {
    fn choose(&mut self, state: &[f64]) -> Result<MicroAction, Error> {
        let q = self.forward(state)?;
        Ok(MicroAction::from_index(argmax(&q))?)
    }
}

/// Fixed offset every slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstantMicro(pub MicroAction);

impl MicroPolicy for ConstantMicro {
    fn choose(&mut self, _state: &[f64]) -> Result<MicroAction, Error> {
        Ok(self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroRun {
    pub curve: PnlCurve,
    pub blotter: Vec<BlotterRow>,
}

/// Replays the macro environment from bar `start` with open-price execution.
/// Bars before `start` only feed the indicators.
pub fn run_macro_standalone<P: MacroPolicy + ?Sized>(
    policy: &mut P,
    bars: &[TickBar],
    cfg: &MacroConfig,
    start: usize,
) -> Result<MacroRun, Error> {
    let mut env = MacroEnv::with_start(bars.to_vec(), *cfg, start)?;
    let mut cum = 0.0;
    let mut points = Vec::new();
    while !env.is_done() {
        let action = policy.decide(&env.observe())?;
        env.act(action)?;
        let row = env.blotter().last().expect("act records a row");
        if row.action == MacroAction::Sell && row.qty > 0.0 {
            cum += row.raw_reward;
        }
        points.push((bars[row.t].open_time, cum));
    }
    Ok(MacroRun { curve: PnlCurve::new(points)?, blotter: env.blotter().to_vec() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineStats {
    pub total_orders: usize,
    pub limit_orders: usize,
    pub forced_market_orders: usize,
    /// `None` when no orders were placed.
    pub limit_fraction: Option<f64>,
}

impl PipelineStats {
    pub fn from_episodes(episodes: &[EpisodeRecord]) -> Self {
        let limit_orders: usize = episodes.iter().map(|e| e.limit_orders).sum();
        let forced_market_orders: usize = episodes.iter().map(|e| e.market_orders).sum();
        let total_orders = limit_orders + forced_market_orders;
        let limit_fraction = (total_orders > 0).then(|| limit_orders as f64 / total_orders as f64);
        PipelineStats { total_orders, limit_orders, forced_market_orders, limit_fraction }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub curve: PnlCurve,
    pub stats: PipelineStats,
    pub episodes: Vec<EpisodeRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PipelineConfig {
    pub macro_cfg: MacroConfig,
    pub micro_cfg: MicroConfig,
    /// First bar at which the macro agent may decide.
    pub start: usize,
}

/// Runs the macro agent minute by minute; each buy or sell is worked by a
/// micro episode starting at the next minute. Profit is realized from the
/// micro fills: sell proceeds minus the fill cost of the liquidated units.
///
/// Decisions stop once the next minute cannot host a full micro episode.
pub fn run_pipeline<M: MacroPolicy + ?Sized, U: MicroPolicy + ?Sized>(
    macro_policy: &mut M,
    micro_policy: &mut U,
    bars: &[TickBar],
    timeline: &BookTimeline,
    cfg: &PipelineConfig,
) -> Result<PipelineReport, Error> {
    let features = MacroEnv::with_start(bars.to_vec(), cfg.macro_cfg, cfg.start)?;
    let mut micro = MicroEnv::new(timeline, cfg.micro_cfg);
    let (lo, hi) = micro.start_range();
    // (quantity, cost per unit) of each purchase
    let mut lots: Vec<(f64, f64)> = Vec::new();
    let mut cum = 0.0;
    let mut points = Vec::new();
    let mut episodes = Vec::new();

    for t in features.first_index()..bars.len() - 1 {
        let t0 = bars[t + 1].open_time;
        if t0 > hi {
            break;
        }
        if t0 < lo {
            continue;
        }
        let unit_costs: Vec<f64> = lots.iter().map(|l| l.1).collect();
        let state = features.encode_at(t, &unit_costs)?;
        let order = match macro_policy.decide(&state)? {
            MacroAction::Buy => Some((Side::Buy, cfg.macro_cfg.buy_qty)),
            MacroAction::Sell if !lots.is_empty() => Some((Side::Sell, lots.iter().map(|l| l.0).sum())),
            _ => None,
        };
        if let Some((side, qty)) = order {
            let record = run_micro_episode(&mut micro, micro_policy, side, qty, t0)?;
            let price = vwap(&record.fills)?;
            match side {
                Side::Buy => lots.push((qty, price)),
                Side::Sell => {
                    let basis: f64 = lots.drain(..).map(|(q, c)| q * c).sum();
                    cum += qty * price - basis;
                }
            }
            episodes.push(record);
        }
        points.push((t0, cum));
    }
    let stats = PipelineStats::from_episodes(&episodes);
    Ok(PipelineReport { curve: PnlCurve::new(points)?, stats, episodes })
}

/// Plays one micro episode to completion with the given policy.
pub fn run_micro_episode<U: MicroPolicy + ?Sized>(
    env: &mut MicroEnv<'_>,
    policy: &mut U,
    side: Side,
    quantity: f64,
    t0: Timestamp,
) -> Result<EpisodeRecord, Error> {
    env.reset_at(side, quantity, t0)?;
    loop {
        let action = policy.choose(&env.observe()?)?;
        let (_, done) = env.act(action)?;
        if done {
            return Ok(env.record()?);
        }
    }
}

/// Line chart of several curves as a standalone SVG document.
pub fn render_svg(curves: &[(&str, &PnlCurve)]) -> String {
    const W: f64 = 800.0;
    const H: f64 = 400.0;
    const PAD: f64 = 50.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

    let all = curves.iter().flat_map(|(_, c)| c.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (i64::MAX, i64::MIN, 0.0f64, 0.0f64);
    for &(ts, v) in all {
        x0 = x0.min(ts);
        x1 = x1.max(ts);
        y0 = y0.min(v);
        y1 = y1.max(v);
    }
    if x0 > x1 {
        (x0, x1) = (0, 1);
    }
    let xspan = ((x1 - x0) as f64).max(1.0);
    let yspan = (y1 - y0).max(1e-9);
    let sx = |ts: i64| PAD + (ts - x0) as f64 / xspan * (W - 2.0 * PAD);
    let sy = |v: f64| H - PAD - (v - y0) / yspan * (H - 2.0 * PAD);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r##"<line x1="{PAD}" y1="{z:.2}" x2="{x2}" y2="{z:.2}" stroke="#999" stroke-dasharray="4 4"/>"##,
        z = sy(0.0),
        x2 = W - PAD
    );
    let _ = writeln!(svg, r#"<text x="{PAD}" y="20" font-size="12">cumulative PNL [{y0:.2}, {y1:.2}]</text>"#);
    for (i, (name, curve)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = curve.points.iter().map(|&(ts, v)| format!("{:.2},{:.2}", sx(ts), sy(v))).collect();
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        let _ = writeln!(
            svg,
            r#"<text x="{x}" y="{y}" font-size="12" fill="{color}">{name}</text>"#,
            x = W - PAD - 150.0,
            y = 40.0 + 16.0 * i as f64
        );
    }
    svg.push_str("</svg>\n");
    svg
}
