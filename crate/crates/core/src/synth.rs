//! Seeded synthetic market: a drifting random-walk mid price, a ladder of
//! levels 0.10 apart around it, and Poisson trades against the touch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{build_minute_ticks, BookTimeline, EventKind, IngestError, MarketEvent, Snapshot, TickBar};
use crate::orderbook::{BookSide, OrderBook};
use crate::types::{Price, Side, Timestamp, MS_PER_MINUTE, MS_PER_SECOND};

/// Distance between adjacent levels, in ticks.
pub const LEVEL_SPACING_TICKS: i64 = 10;
const QTY_DECIMALS: f64 = 1e4;
/// Chance per level per second of a queue size change.
const REFRESH_PROB: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub duration_minutes: usize,
    pub base_price: f64,
    /// Mid-price drift per minute, in quote units.
    pub trend_per_minute: f64,
    /// Standard deviation of the per-second mid-price step.
    pub noise_sigma: f64,
    /// Levels per side.
    pub book_depth: usize,
    /// Mean trades per second.
    pub trade_rate: f64,
    pub start_ts: Timestamp,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            duration_minutes: 60,
            base_price: 5000.0,
            trend_per_minute: 0.0,
            noise_sigma: 0.05,
            book_depth: 20,
            trade_rate: 1.0,
            start_ts: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::InvalidConfig(msg));
        if !(self.base_price > 0.0) || !self.base_price.is_finite() {
            return bad(format!("base_price {} must be positive", self.base_price));
        }
        if self.book_depth < 20 {
            return bad(format!("book_depth {} must be at least 20", self.book_depth));
        }
        if !(self.trade_rate > 0.0) || !self.trade_rate.is_finite() {
            return bad(format!("trade_rate {} must be positive", self.trade_rate));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() || !self.trend_per_minute.is_finite() {
            return bad("noise_sigma must be non-negative and trend finite".into());
        }
        if self.duration_minutes == 0 {
            return bad("duration_minutes must be positive".into());
        }
        if self.start_ts.rem_euclid(MS_PER_MINUTE) != 0 {
            return bad(format!("start_ts {} must be minute-aligned", self.start_ts));
        }
        Ok(())
    }

    pub fn end_ts(&self) -> Timestamp {
        self.start_ts + self.duration_minutes as Timestamp * MS_PER_MINUTE
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthMarket {
    pub snapshot: Snapshot,
    pub events: Vec<MarketEvent>,
    /// Mid price at the start of each second, in quote units.
    pub mids: Vec<f64>,
}

impl SynthMarket {
    pub fn timeline(&self) -> BookTimeline {
        BookTimeline::new(self.snapshot.clone(), self.events.clone())
    }

    pub fn trades(&self) -> Vec<MarketEvent> {
        self.events.iter().filter(|e| e.is_trade()).cloned().collect()
    }

    /// Minute bars over the whole generated span.
    pub fn bars(&self) -> Result<Vec<TickBar>, IngestError> {
        let end = self.events.last().map_or(self.snapshot.ts, |e| e.ts);
        let end = (end.div_euclid(MS_PER_MINUTE) + 1) * MS_PER_MINUTE;
        build_minute_ticks(&self.trades(), self.snapshot.ts, end)
    }
}

fn round_qty(q: f64) -> f64 {
    (q * QTY_DECIMALS).round() / QTY_DECIMALS
}

struct Generator {
    rng: ChaCha8Rng,
    book: OrderBook,
    events: Vec<MarketEvent>,
    depth: usize,
}

impl Generator {
    fn fresh_qty(&mut self) -> f64 {
        round_qty(self.rng.random_range(0.5..5.0))
    }

    fn emit(&mut self, ev: MarketEvent) {
        self.book.apply(&ev);
        self.events.push(ev);
    }

    fn ladder(&self, centre: i64) -> (Vec<Price>, Vec<Price>) {
        let half = LEVEL_SPACING_TICKS / 2;
        let bids = (0..self.depth as i64)
            .map(|i| centre - half - i * LEVEL_SPACING_TICKS)
            .filter(|&p| p > 0)
            .map(Price)
            .collect();
        let asks = (0..self.depth as i64).map(|i| Price(centre + half + i * LEVEL_SPACING_TICKS)).collect();
        (bids, asks)
    }

    /// Moves the ladder to a new centre. Stale levels are removed before new
    /// ones are added so the book never crosses mid-update.
    fn rebuild(&mut self, ts: Timestamp, centre: i64) {
        let (bids, asks) = self.ladder(centre);
        let stale_bids: Vec<Price> = self.book.bids().map(|(p, _)| p).filter(|p| !bids.contains(p)).collect();
        let stale_asks: Vec<Price> = self.book.asks().map(|(p, _)| p).filter(|p| !asks.contains(p)).collect();
        for p in stale_bids {
            self.emit(MarketEvent::delta(ts, EventKind::BidDelta, p, 0.0));
        }
        for p in stale_asks {
            self.emit(MarketEvent::delta(ts, EventKind::AskDelta, p, 0.0));
        }
        for (kind, side, prices) in
            [(EventKind::BidDelta, BookSide::Bid, bids), (EventKind::AskDelta, BookSide::Ask, asks)]
        {
            for p in prices {
                let present = self.book.quantity_at(side, p) > 0.0;
                if !present || self.rng.random_bool(REFRESH_PROB) {
                    let q = self.fresh_qty();
                    self.emit(MarketEvent::delta(ts, kind, p, q));
                }
            }
        }
    }

    /// A market trade against the touch followed by the level update it causes.
    fn trade(&mut self, ts: Timestamp) {
        let aggressor = if self.rng.random_bool(0.5) { Side::Buy } else { Side::Sell };
        let (side, kind) = match aggressor {
            Side::Buy => (BookSide::Ask, EventKind::AskDelta),
            Side::Sell => (BookSide::Bid, EventKind::BidDelta),
        };
        let Some(price) = self.book.best(side) else { return };
        let level = self.book.quantity_at(side, price);
        let qty = round_qty(level * self.rng.random_range(0.2..1.0)).max(1.0 / QTY_DECIMALS);
        self.emit(MarketEvent::trade(ts, aggressor, price, qty));
        let left = round_qty(level - qty);
        let next = if left < 0.05 { self.fresh_qty() } else { left };
        self.emit(MarketEvent::delta(ts, kind, price, next));
    }
}

/// Generates an initial snapshot and one event stream covering
/// `duration_minutes`, deterministic for a given seed.
pub fn generate(cfg: &SynthConfig) -> Result<SynthMarket, SynthError> {
    cfg.validate()?;
    let mut g = Generator {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        book: OrderBook::new(),
        events: Vec::new(),
        depth: cfg.book_depth,
    };
    let step = Normal::new(0.0, cfg.noise_sigma).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    let arrivals = Poisson::new(cfg.trade_rate).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    let drift = cfg.trend_per_minute / 60.0;
    let centre_of = |mid: f64| {
        let c = ((mid * 100.0) / LEVEL_SPACING_TICKS as f64).round() as i64 * LEVEL_SPACING_TICKS;
        c.max(LEVEL_SPACING_TICKS)
    };

    let mut mid = cfg.base_price;
    g.rebuild(cfg.start_ts, centre_of(mid));
    g.events.clear();
    let snapshot = Snapshot { ts: cfg.start_ts, book: g.book.clone() };

    let seconds = cfg.duration_minutes as Timestamp * 60;
    let mut mids = Vec::with_capacity(seconds as usize);
    for k in 0..seconds {
        let sec = cfg.start_ts + k * MS_PER_SECOND;
        if k > 0 {
            mid += drift + step.sample(&mut g.rng);
            g.rebuild(sec, centre_of(mid));
        }
        mids.push(mid);
        let n = arrivals.sample(&mut g.rng) as usize;
        let mut times: Vec<Timestamp> = (0..n).map(|_| sec + g.rng.random_range(1..MS_PER_SECOND)).collect();
        times.sort_unstable();
        for ts in times {
            g.trade(ts);
        }
    }
    Ok(SynthMarket { snapshot, events: g.events, mids })
}
