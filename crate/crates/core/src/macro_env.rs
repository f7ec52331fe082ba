//! Minute-scale buy/sell/hold environment.
//!
//! The state at bar `t` is built from bars `..=t`; the chosen action executes
//! at the open of bar `t + 1`, the first price available after the decision.

use std::io::Write;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::agent::{Environment, StepOutcome};
use crate::indicators::{featurize, FeatureVector, IndicatorConfig, IndicatorError};
use crate::ingest::TickBar;
use crate::Error;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MacroError {
    #[error("InsufficientHistory: {bars} bars, need at least {required}")]
    InsufficientHistory { bars: usize, required: usize },
    #[error("EpisodeDone")]
    EpisodeDone,
    #[error("InvalidAction: {0}")]
    InvalidAction(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MacroAction {
    Buy,
    Sell,
    Hold,
}

impl MacroAction {
    pub const ALL: [MacroAction; 3] = [MacroAction::Buy, MacroAction::Sell, MacroAction::Hold];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MacroAction::Buy => "buy",
            MacroAction::Sell => "sell",
            MacroAction::Hold => "hold",
        }
    }
}

/// Sign of the raw reward: -1, 0 or +1.
pub fn clip_reward(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroConfig {
    pub indicators: IndicatorConfig,
    /// Units bought per buy decision.
    pub buy_qty: f64,
}

impl Default for MacroConfig {
    fn default() -> Self {
        MacroConfig { indicators: IndicatorConfig::default(), buy_qty: 1.0 }
    }
}

impl MacroConfig {
    /// Width of the encoded network input.
    pub fn state_dim(&self) -> usize {
        self.indicators.history_h + 5 + 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroState {
    pub features: FeatureVector,
    /// Purchase prices of held units.
    pub assets: Vec<f64>,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlotterRow {
    /// Index of the bar whose open executed the action.
    pub t: usize,
    pub action: MacroAction,
    pub price: f64,
    pub qty: f64,
    pub raw_reward: f64,
    pub clipped_reward: f64,
}

pub fn write_blotter_csv<W: Write>(rows: &[BlotterRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,action,price,qty,raw_reward,clipped_reward")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{},{}", r.t, r.action.as_str(), r.price, r.qty, r.raw_reward, r.clipped_reward)?;
    }
    Ok(())
}

/// Encodes indicator features plus a held-asset summary into a fixed-width
/// vector. Prices are expressed in percent relative to the reference close.
pub fn encode_state(features: &FeatureVector, reference: f64, assets: &[f64]) -> Vec<f64> {
    let rel = |p: f64| (p / reference - 1.0) * 100.0;
    let mut out: Vec<f64> = features.raw_prices.iter().map(|&p| rel(p)).collect();
    out.extend_from_slice(&[
        features.price_level_z,
        features.price_change_z,
        features.volume_level_z,
        features.volume_change_z,
        features.volatility * 100.0,
    ]);
    let count = assets.len() as f64;
    let mean_rel = if assets.is_empty() { 0.0 } else { rel(assets.iter().sum::<f64>() / count) };
    out.push(count.ln_1p());
    out.push(mean_rel);
    out
}

#[derive(Debug, Clone)]
pub struct MacroEnv {
    bars: Vec<TickBar>,
    cfg: MacroConfig,
    first: usize,
    features: Vec<Option<FeatureVector>>,
    t: usize,
    assets: Vec<f64>,
    done: bool,
    blotter: Vec<BlotterRow>,
}

impl MacroEnv {
    pub fn new(bars: Vec<TickBar>, cfg: MacroConfig) -> Result<Self, Error> {
        Self::with_start(bars, cfg, 0)
    }

    /// Episodes begin at bar `start` (or the warm-up index if later); earlier
    /// bars only provide indicator history.
    pub fn with_start(bars: Vec<TickBar>, cfg: MacroConfig, start: usize) -> Result<Self, Error> {
        cfg.indicators.validate()?;
        let first = cfg.indicators.warmup().max(start);
        if bars.len() < first + 2 {
            return Err(MacroError::InsufficientHistory { bars: bars.len(), required: first + 2 }.into());
        }
        let mut features = vec![None; bars.len()];
        for (t, slot) in features.iter_mut().enumerate().take(bars.len() - 1).skip(first) {
            *slot = Some(featurize(&bars, t, &cfg.indicators)?);
        }
        Ok(MacroEnv { bars, cfg, first, features, t: first, assets: Vec::new(), done: false, blotter: Vec::new() })
    }

    pub fn bars(&self) -> &[TickBar] {
        &self.bars
    }

    pub fn config(&self) -> &MacroConfig {
        &self.cfg
    }

    pub fn first_index(&self) -> usize {
        self.first
    }

    pub fn index(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn assets(&self) -> &[f64] {
        &self.assets
    }

    pub fn blotter(&self) -> &[BlotterRow] {
        &self.blotter
    }

    pub fn features_at(&self, t: usize) -> Result<&FeatureVector, IndicatorError> {
        self.features
            .get(t)
            .and_then(Option::as_ref)
            .ok_or(IndicatorError::InsufficientHistory { t, required: self.first })
    }

    /// Network input at bar `t` for an arbitrary holding.
    pub fn encode_at(&self, t: usize, assets: &[f64]) -> Result<Vec<f64>, IndicatorError> {
        let f = self.features_at(t)?;
        Ok(encode_state(f, self.bars[t].close, assets))
    }

    pub fn state(&self) -> MacroState {
        MacroState {
            features: self.features[self.t].clone().expect("current index has features"),
            assets: self.assets.clone(),
            t: self.t,
        }
    }

    pub fn observe(&self) -> Vec<f64> {
        self.encode_at(self.t, &self.assets).expect("current index has features")
    }

    pub fn restart(&mut self) -> MacroState {
        self.t = self.first;
        self.assets.clear();
        self.done = false;
        self.blotter.clear();
        self.state()
    }

    /// Executes `action` at the next bar's open and advances one bar.
    pub fn act(&mut self, action: MacroAction) -> Result<(f64, bool), MacroError> {
        if self.done {
            return Err(MacroError::EpisodeDone);
        }
        let exec = self.t + 1;
        let price = self.bars[exec].open;
        let qty = self.cfg.buy_qty;
        let (raw, traded_qty) = match action {
            MacroAction::Hold => (0.0, 0.0),
            MacroAction::Buy => {
                self.assets.push(price);
                (0.0, qty)
            }
            MacroAction::Sell if self.assets.is_empty() => (-1.0, 0.0),
            MacroAction::Sell => {
                let profit: f64 = self.assets.iter().map(|p| (price - p) * qty).sum();
                let sold = self.assets.len() as f64 * qty;
                self.assets.clear();
                (profit, sold)
            }
        };
        let reward = clip_reward(raw);
        self.blotter.push(BlotterRow { t: exec, action, price, qty: traded_qty, raw_reward: raw, clipped_reward: reward });
        self.t = exec;
        self.done = self.t + 1 >= self.bars.len();
        Ok((reward, self.done))
    }
}

impl Environment for MacroEnv {
    fn state_dim(&self) -> usize {
        self.cfg.state_dim()
    }

    fn action_count(&self) -> usize {
        MacroAction::ALL.len()
    }

    fn reset(&mut self, _rng: &mut dyn RngCore) -> Result<Vec<f64>, Error> {
        self.restart();
        Ok(self.observe())
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome, Error> {
        let action = MacroAction::from_index(action).ok_or(MacroError::InvalidAction(action))?;
        let (reward, done) = self.act(action)?;
        // the terminal state is never bootstrapped from; reuse the last encodable bar
        let t = if self.features_at(self.t).is_ok() { self.t } else { self.t - 1 };
        let state = self.encode_at(t, &self.assets)?;
        Ok(StepOutcome { state, reward, done })
    }
}
