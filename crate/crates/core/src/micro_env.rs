//! Intra-minute execution environment.
//!
//! An episode works a parent order of fixed side and quantity over a 60 s
//! horizon. Every 10 s the agent re-quotes a single limit order at
//! `market price + 0.10 * a` for `a` in `[-50, 50]`; the previous quote is
//! cancelled first. Whatever is left when the horizon runs out is sent as a
//! market order. The only non-zero reward arrives on the terminal step.

use std::collections::VecDeque;
use std::io::Write;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::agent::{Environment, StepOutcome};
use crate::ingest::{BookCursor, BookTimeline};
use crate::matchsim::{place_limit, place_market, AgentOrder, MatchError};
use crate::orderbook::{mean_tick_offset, BookError, Fill, LastTrade, LevelView};
use crate::types::{is_minute_aligned, Price, Side, Timestamp, MS_PER_MINUTE, MS_PER_SECOND, QTY_EPSILON, TICKS_PER_UNIT};
use crate::Error;

pub const ACTION_MIN: i64 = -50;
pub const ACTION_MAX: i64 = 50;
pub const ACTION_COUNT: usize = (ACTION_MAX - ACTION_MIN + 1) as usize;
/// Price step per action unit, in ticks (0.10 quote units).
pub const ACTION_STEP_TICKS: i64 = 10;
/// Bound on encoded price offsets, in quote units.
const OFFSET_CLIP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MicroError {
    #[error("OutOfRange: t0 {t0} outside [{lo}, {hi}]")]
    OutOfRange { t0: Timestamp, lo: Timestamp, hi: Timestamp },
    #[error("NotMinuteAligned: {0}")]
    NotMinuteAligned(Timestamp),
    #[error("InvalidQuantity: {0}")]
    InvalidQuantity(f64),
    #[error("InvalidAction: {0}")]
    InvalidAction(i64),
    #[error("EpisodeDone")]
    EpisodeDone,
    #[error("NoEpisode: reset must be called first")]
    NoEpisode,
    #[error("InsufficientDepth: {unfilled} left unfilled when the feed ended")]
    InsufficientDepth { unfilled: f64 },
}

/// Limit offset from the market price, in 0.10 steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MicroAction(i64);

impl MicroAction {
    pub fn new(a: i64) -> Result<Self, MicroError> {
        if (ACTION_MIN..=ACTION_MAX).contains(&a) {
            Ok(MicroAction(a))
        } else {
            Err(MicroError::InvalidAction(a))
        }
    }

    pub fn from_index(i: usize) -> Result<Self, MicroError> {
        Self::new(i as i64 + ACTION_MIN)
    }

    pub fn index(self) -> usize {
        (self.0 - ACTION_MIN) as usize
    }

    pub fn value(self) -> i64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroConfig {
    pub depth: usize,
    /// Number of one-second market frames in the state.
    pub window: usize,
    pub horizon_ms: Timestamp,
    pub slot_ms: Timestamp,
}

impl Default for MicroConfig {
    fn default() -> Self {
        MicroConfig { depth: 20, window: 30, horizon_ms: 60 * MS_PER_SECOND, slot_ms: 10 * MS_PER_SECOND }
    }
}

impl MicroConfig {
    const FRAME_TRADE_FIELDS: usize = 3;

    pub fn frame_dim(&self) -> usize {
        self.depth * 4 + Self::FRAME_TRADE_FIELDS
    }

    pub fn state_dim(&self) -> usize {
        self.window * self.frame_dim() + 2
    }

    pub fn max_placements(&self) -> usize {
        ((self.horizon_ms + self.slot_ms - 1) / self.slot_ms) as usize
    }
}

/// Book levels and last trade at one second of replay.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketFrame {
    pub levels: LevelView,
    pub last_trade: Option<LastTrade>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroState {
    pub quantity_remaining: f64,
    /// Seconds left in the horizon.
    pub time_remaining: f64,
    pub market: Vec<MarketFrame>,
    pub t0: Timestamp,
    pub side: Side,
}

/// Buy: `p_m - VWAP`; sell: `VWAP - p_m`. Positive means better than the
/// market price seen before the first placement.
pub fn episode_reward(side: Side, market_price: Price, fills: &[Fill]) -> Result<f64, BookError> {
    let qty: f64 = fills.iter().map(|f| f.qty).sum();
    if fills.is_empty() || qty <= 0.0 {
        return Err(BookError::EmptyFills);
    }
    let above = mean_tick_offset(market_price, fills, qty) / TICKS_PER_UNIT as f64;
    Ok(match side {
        Side::Buy => 0.0 - above,
        Side::Sell => above,
    })
}

/// Limit price for action `a` relative to a market price, floored at one tick.
pub fn limit_price_for(market_price: Price, action: MicroAction) -> Price {
    Price((market_price.ticks() + action.value() * ACTION_STEP_TICKS).max(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub t0: Timestamp,
    pub side: Side,
    pub qty: f64,
    pub actions: Vec<i64>,
    pub fills: Vec<Fill>,
    pub forced_market_qty: f64,
    pub reward: f64,
    pub market_price: Price,
    pub limit_orders: usize,
    pub market_orders: usize,
}

impl EpisodeRecord {
    pub fn to_json_line(&self) -> String {
        let fills: Vec<[f64; 2]> = self.fills.iter().map(|f| [f.price.to_f64(), f.qty]).collect();
        serde_json::json!({
            "t0": self.t0,
            "side": self.side.as_str(),
            "qty": self.qty,
            "actions": self.actions,
            "fills": fills,
            "forced_market_qty": self.forced_market_qty,
            "reward": self.reward,
        })
        .to_string()
    }
}

pub fn write_episodes_jsonl<W: Write>(records: &[EpisodeRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        writeln!(out, "{}", r.to_json_line())?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
struct Episode<'a> {
    cursor: BookCursor<'a>,
    side: Side,
    quantity: f64,
    remaining: f64,
    t0: Timestamp,
    now: Timestamp,
    market_price: Price,
    frames: VecDeque<MarketFrame>,
    fills: Vec<Fill>,
    actions: Vec<i64>,
    forced_qty: f64,
    market_orders: usize,
    reward: f64,
    done: bool,
}

/// How training episodes are drawn on reset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSampler {
    pub quantity: f64,
    /// Fixed side, or a fair coin when `None`.
    pub side: Option<Side>,
}

impl Default for EpisodeSampler {
    fn default() -> Self {
        EpisodeSampler { quantity: 1.0, side: None }
    }
}

#[derive(Debug, Clone)]
pub struct MicroEnv<'a> {
    timeline: &'a BookTimeline,
    cfg: MicroConfig,
    lo: Timestamp,
    hi: Timestamp,
    sampler: EpisodeSampler,
    episode: Option<Episode<'a>>,
}

impl<'a> MicroEnv<'a> {
    /// Episodes may start at any whole minute from the first full minute of
    /// the timeline up to one horizon before its last event.
    pub fn new(timeline: &'a BookTimeline, cfg: MicroConfig) -> Self {
        let lo = timeline.start().div_euclid(MS_PER_MINUTE) * MS_PER_MINUTE;
        let lo = if lo < timeline.start() { lo + MS_PER_MINUTE } else { lo };
        let hi = timeline.end() - cfg.horizon_ms;
        MicroEnv { timeline, cfg, lo, hi, sampler: EpisodeSampler::default(), episode: None }
    }

    pub fn with_sampler(mut self, sampler: EpisodeSampler) -> Self {
        self.sampler = sampler;
        self
    }

    /// Restricts episode start times to `[lo, hi]`.
    pub fn with_range(mut self, lo: Timestamp, hi: Timestamp) -> Self {
        self.lo = self.lo.max(lo);
        self.hi = self.hi.min(hi);
        self
    }

    pub fn config(&self) -> &MicroConfig {
        &self.cfg
    }

    pub fn start_range(&self) -> (Timestamp, Timestamp) {
        (self.lo, self.hi)
    }

    /// Minute-aligned start times available to `reset`.
    pub fn start_minutes(&self) -> Vec<Timestamp> {
        let mut out = Vec::new();
        let mut t = self.lo;
        while t <= self.hi {
            out.push(t);
            t += MS_PER_MINUTE;
        }
        out
    }

    fn frame(&self, book: &crate::orderbook::OrderBook) -> MarketFrame {
        MarketFrame { levels: book.top_levels(self.cfg.depth), last_trade: book.last_trade() }
    }

    pub fn reset_at(&mut self, side: Side, quantity: f64, t0: Timestamp) -> Result<MicroState, Error> {
        if !(quantity > 0.0) || !quantity.is_finite() {
            return Err(MicroError::InvalidQuantity(quantity).into());
        }
        if !is_minute_aligned(t0) {
            return Err(MicroError::NotMinuteAligned(t0).into());
        }
        if t0 < self.lo || t0 > self.hi {
            return Err(MicroError::OutOfRange { t0, lo: self.lo, hi: self.hi }.into());
        }
        let first = t0 - (self.cfg.window as Timestamp - 1) * MS_PER_SECOND;
        let mut cursor = self.timeline.cursor(first.max(self.timeline.start()));
        let mut frames = VecDeque::with_capacity(self.cfg.window);
        for k in 0..self.cfg.window as Timestamp {
            let ts = first + k * MS_PER_SECOND;
            if ts < self.timeline.start() {
                continue;
            }
            cursor.advance_to(ts);
            frames.push_back(self.frame(cursor.book()));
        }
        let oldest = frames.front().cloned().unwrap_or_else(|| self.frame(cursor.book()));
        while frames.len() < self.cfg.window {
            frames.push_front(oldest.clone());
        }
        let market_price = cursor.book().market_price(side)?;
        self.episode = Some(Episode {
            cursor,
            side,
            quantity,
            remaining: quantity,
            t0,
            now: t0,
            market_price,
            frames,
            fills: Vec::new(),
            actions: Vec::new(),
            forced_qty: 0.0,
            market_orders: 0,
            reward: 0.0,
            done: false,
        });
        Ok(self.state().expect("episode just started"))
    }

    fn active(&self) -> Result<&Episode<'a>, MicroError> {
        self.episode.as_ref().ok_or(MicroError::NoEpisode)
    }

    pub fn state(&self) -> Result<MicroState, MicroError> {
        let ep = self.active()?;
        Ok(MicroState {
            quantity_remaining: ep.remaining,
            time_remaining: (self.cfg.horizon_ms - (ep.now - ep.t0)).max(0) as f64 / MS_PER_SECOND as f64,
            market: ep.frames.iter().cloned().collect(),
            t0: ep.t0,
            side: ep.side,
        })
    }

    pub fn is_done(&self) -> bool {
        self.episode.as_ref().is_some_and(|e| e.done)
    }

    /// Market price before the first placement of the current episode.
    pub fn episode_market_price(&self) -> Result<Price, MicroError> {
        Ok(self.active()?.market_price)
    }

    /// Limit price the action would quote right now.
    pub fn action_price(&self, action: MicroAction) -> Result<Price, Error> {
        let ep = self.active()?;
        Ok(limit_price_for(ep.cursor.book().market_price(ep.side)?, action))
    }

    /// Fixed-width network input. Prices are offsets from the episode's
    /// market price in quote units (clipped to +-10), quantities are `ln(1+q)`.
    pub fn observe(&self) -> Result<Vec<f64>, MicroError> {
        let ep = self.active()?;
        let pm = ep.market_price.ticks();
        let offset = |p: Price| ((p.ticks() - pm) as f64 / TICKS_PER_UNIT as f64).clamp(-OFFSET_CLIP, OFFSET_CLIP);
        let mut out = Vec::with_capacity(self.cfg.state_dim());
        for frame in &ep.frames {
            for level in frame.levels.bids.iter().chain(&frame.levels.asks) {
                out.push(offset(level.price));
                out.push(level.qty.ln_1p());
            }
            match frame.last_trade {
                Some(t) => out.extend_from_slice(&[offset(t.price), t.qty.ln_1p(), t.side.sign()]),
                None => out.extend_from_slice(&[0.0; 3]),
            }
        }
        out.push(ep.remaining / ep.quantity);
        out.push((self.cfg.horizon_ms - (ep.now - ep.t0)).max(0) as f64 / self.cfg.horizon_ms as f64);
        Ok(out)
    }

    /// Quotes one slot. Returns the reward (non-zero only at the end) and
    /// whether the episode finished.
    pub fn act(&mut self, action: MicroAction) -> Result<(f64, bool), Error> {
        let cfg = self.cfg;
        let depth = cfg.depth;
        let ep = self.episode.as_mut().ok_or(MicroError::NoEpisode)?;
        if ep.done {
            return Err(MicroError::EpisodeDone.into());
        }
        let price = limit_price_for(ep.cursor.book().market_price(ep.side)?, action);
        let order = AgentOrder::limit(ep.side, price, ep.remaining, ep.now);
        let mut resting = place_limit(ep.cursor.book_mut(), order)?;
        ep.actions.push(action.value());

        let slot_end = (ep.now + cfg.slot_ms).min(ep.t0 + cfg.horizon_ms);
        let mut second = ep.now;
        while second < slot_end {
            second = (second + MS_PER_SECOND).min(slot_end);
            while let Some(ev) = ep.cursor.step(second) {
                resting.on_event(ev);
            }
            ep.cursor.set_now(second);
            ep.frames.pop_front();
            let book = ep.cursor.book();
            ep.frames.push_back(MarketFrame { levels: book.top_levels(depth), last_trade: book.last_trade() });
        }
        resting.cancel();
        ep.fills.extend_from_slice(&resting.fills);
        ep.remaining = resting.remaining;
        ep.now = slot_end;

        if ep.remaining <= QTY_EPSILON {
            ep.remaining = 0.0;
            ep.done = true;
        } else if ep.now - ep.t0 >= cfg.horizon_ms {
            ep.forced_qty = ep.remaining;
            ep.market_orders += 1;
            force_market(ep)?;
            ep.done = true;
        }
        if ep.done {
            ep.reward = episode_reward(ep.side, ep.market_price, &ep.fills)?;
        }
        Ok((if ep.done { ep.reward } else { 0.0 }, ep.done))
    }

    pub fn record(&self) -> Result<EpisodeRecord, MicroError> {
        let ep = self.active()?;
        Ok(EpisodeRecord {
            t0: ep.t0,
            side: ep.side,
            qty: ep.quantity,
            actions: ep.actions.clone(),
            fills: ep.fills.clone(),
            forced_market_qty: ep.forced_qty,
            reward: ep.reward,
            market_price: ep.market_price,
            limit_orders: ep.actions.len(),
            market_orders: ep.market_orders,
        })
    }
}

/// Sends the remainder as a market order. If the visible book cannot absorb
/// it, keeps taking liquidity as later feed updates replenish the opposing
/// side.
fn force_market(ep: &mut Episode<'_>) -> Result<(), Error> {
    let mut ts = ep.now;
    loop {
        match place_market(ep.cursor.book_mut(), ep.side, ep.remaining, ts) {
            Ok(fills) => {
                ep.fills.extend(fills);
                ep.remaining = 0.0;
                return Ok(());
            }
            Err(MatchError::InsufficientDepth { fills, unfilled }) => {
                ep.fills.extend(fills);
                ep.remaining = unfilled;
            }
            Err(e) => return Err(e.into()),
        }
        match ep.cursor.step(Timestamp::MAX) {
            Some(ev) => ts = ev.ts,
            None => return Err(MicroError::InsufficientDepth { unfilled: ep.remaining }.into()),
        }
    }
}

impl Environment for MicroEnv<'_> {
    fn state_dim(&self) -> usize {
        self.cfg.state_dim()
    }

    fn action_count(&self) -> usize {
        ACTION_COUNT
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Result<Vec<f64>, Error> {
        if self.lo > self.hi {
            return Err(MicroError::OutOfRange { t0: self.lo, lo: self.lo, hi: self.hi }.into());
        }
        let minutes = (self.hi - self.lo) / MS_PER_MINUTE;
        let t0 = self.lo + rng.random_range(0..=minutes) * MS_PER_MINUTE;
        let side = self.sampler.side.unwrap_or_else(|| if rng.random_bool(0.5) { Side::Buy } else { Side::Sell });
        self.reset_at(side, self.sampler.quantity, t0)?;
        Ok(self.observe()?)
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome, Error> {
        let action = MicroAction::from_index(action)?;
        let (reward, done) = self.act(action)?;
        Ok(StepOutcome { state: self.observe()?, reward, done })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{EventKind, MarketEvent, Snapshot};
    use crate::orderbook::OrderBook;

    fn px(p: f64) -> Price {
        Price::from_f64(p)
    }

    /// Static book from `start`, plus the given events and a trailing
    /// keep-alive delta far in the future.
    fn timeline(bids: &[(f64, f64)], asks: &[(f64, f64)], mut events: Vec<MarketEvent>) -> BookTimeline {
        let bids: Vec<_> = bids.iter().map(|&(p, q)| (px(p), q)).collect();
        let asks: Vec<_> = asks.iter().map(|&(p, q)| (px(p), q)).collect();
        let book = OrderBook::from_levels(&bids, &asks).unwrap();
        events.push(MarketEvent::delta(600_000, EventKind::BidDelta, px(1.0), 1.0));
        BookTimeline::new(Snapshot { ts: 0, book }, events)
    }

    #[test]
    fn action_indexing() {
        assert_eq!(MicroAction::from_index(0).unwrap().value(), -50);
        assert_eq!(MicroAction::from_index(100).unwrap().value(), 50);
        assert!(MicroAction::from_index(101).is_err());
        assert_eq!(MicroAction::new(-11).unwrap().index(), 39);
        assert_eq!(ACTION_COUNT, 101);
    }

    #[test]
    fn action_price_offsets() {
        let pm = px(5000.0);
        assert_eq!(limit_price_for(pm, MicroAction::new(-11).unwrap()), px(4998.90));
        assert_eq!(limit_price_for(pm, MicroAction::new(29).unwrap()), px(5002.90));
        assert_eq!(limit_price_for(pm, MicroAction::new(0).unwrap()), pm);
    }

    #[test]
    fn reward_examples() {
        let f = |p: f64, q: f64| Fill { price: px(p), qty: q, ts: 0 };
        assert_eq!(episode_reward(Side::Buy, px(100.0), &[f(100.0, 0.3), f(100.0, 0.7)]).unwrap(), 0.0);
        assert_eq!(episode_reward(Side::Buy, px(100.0), &[f(99.0, 1.0)]).unwrap(), 1.0);
        assert_eq!(episode_reward(Side::Sell, px(100.0), &[f(101.0, 1.0), f(103.0, 1.0)]).unwrap(), 2.0);
        assert!(episode_reward(Side::Sell, px(100.0), &[]).is_err());
    }

    #[test]
    fn reset_examples() {
        let tl = timeline(&[(99.9, 5.0)], &[(100.0, 5.0)], vec![]);
        let mut env = MicroEnv::new(&tl, MicroConfig::default());
        let s = env.reset_at(Side::Sell, 1.0, 60_000).unwrap();
        assert_eq!(s.quantity_remaining, 1.0);
        assert_eq!(s.time_remaining, 60.0);
        assert_eq!(s.market.len(), 30);
        let s2 = env.reset_at(Side::Sell, 1.0, 60_000).unwrap();
        assert_eq!(s, s2);
        assert!(matches!(env.reset_at(Side::Sell, 1.0, 6_000_000), Err(Error::Micro(MicroError::OutOfRange { .. }))));
        assert!(matches!(env.reset_at(Side::Sell, 1.0, 1_000), Err(Error::Micro(MicroError::NotMinuteAligned(_)))));
        assert!(matches!(env.reset_at(Side::Sell, 0.0, 60_000), Err(Error::Micro(MicroError::InvalidQuantity(_)))));
        assert_eq!(env.observe().unwrap().len(), MicroConfig::default().state_dim());
    }

    #[test]
    fn window_padding_at_timeline_start() {
        let events = vec![MarketEvent::delta(500, EventKind::AskDelta, px(100.0), 2.0)];
        let tl = timeline(&[(99.9, 5.0)], &[(100.0, 5.0)], events);
        let mut env = MicroEnv::new(&tl, MicroConfig::default());
        let s = env.reset_at(Side::Buy, 1.0, 0).unwrap();
        // the first 29 seconds precede the feed and repeat its first frame
        assert!(s.market[..29].iter().all(|f| f == &s.market[0]));
        assert_eq!(s.market[29].levels.asks[0].qty, 5.0);
    }

    #[test]
    fn immediate_fill_finishes_in_one_step() {
        let tl = timeline(&[(99.9, 5.0)], &[(100.0, 5.0)], vec![]);
        let mut env = MicroEnv::new(&tl, MicroConfig::default());
        env.reset_at(Side::Buy, 1.0, 60_000).unwrap();
        let (reward, done) = env.act(MicroAction::new(5).unwrap()).unwrap();
        assert!(done);
        // filled at the best ask, which is the market price
        assert_eq!(reward, 0.0);
        let rec = env.record().unwrap();
        assert_eq!(rec.limit_orders, 1);
        assert_eq!(rec.market_orders, 0);
        assert!(matches!(env.act(MicroAction::new(0).unwrap()), Err(Error::Micro(MicroError::EpisodeDone))));
    }

    #[test]
    fn aggressive_sell_across_two_slots() {
        let events = vec![MarketEvent::delta(65_000, EventKind::BidDelta, px(99.9), 1.0)];
        let tl = timeline(&[(100.0, 0.6)], &[(100.1, 5.0)], events);
        let mut env = MicroEnv::new(&tl, MicroConfig::default());
        env.reset_at(Side::Sell, 1.0, 60_000).unwrap();
        let a = MicroAction::new(-21).unwrap();
        assert_eq!(env.act(a).unwrap(), (0.0, false));
        assert!((env.state().unwrap().quantity_remaining - 0.4).abs() < 1e-12);
        let (reward, done) = env.act(a).unwrap();
        assert!(done);
        let rec = env.record().unwrap();
        assert_eq!(rec.actions, vec![-21, -21]);
        assert_eq!(rec.fills.len(), 2);
        // VWAP = 0.6 * 100.0 + 0.4 * 99.9; reward = VWAP - 100.0
        assert!((reward - (0.6 * 100.0 + 0.4 * 99.9 - 100.0)).abs() < 1e-9);
    }

    #[test]
    fn stale_book_forces_market_order() {
        let tl = timeline(&[(99.9, 5.0)], &[(100.0, 0.5), (100.5, 5.0)], vec![]);
        let mut env = MicroEnv::new(&tl, MicroConfig::default());
        env.reset_at(Side::Buy, 1.0, 60_000).unwrap();
        let mut steps = 0;
        loop {
            steps += 1;
            let (reward, done) = env.act(MicroAction::new(-50).unwrap()).unwrap();
            if done {
                // market order walks 0.5 @ 100.0 and 0.5 @ 100.5 against p_m = 100.0
                assert!((reward - (100.0 - 100.25)).abs() < 1e-9);
                break;
            }
        }
        assert_eq!(steps, 6);
        let rec = env.record().unwrap();
        assert_eq!(rec.forced_market_qty, 1.0);
        assert_eq!(rec.market_orders, 1);
        assert_eq!(env.state().unwrap().quantity_remaining, 0.0);
        assert_eq!(env.state().unwrap().time_remaining, 0.0);
    }

    #[test]
    fn passive_fill_from_trade() {
        let events = vec![MarketEvent::trade(63_000, Side::Sell, px(99.9), 2.0)];
        let tl = timeline(&[(99.9, 0.5)], &[(100.0, 5.0)], events);
        let mut env = MicroEnv::new(&tl, MicroConfig::default());
        env.reset_at(Side::Buy, 1.0, 60_000).unwrap();
        // quote at the bid behind 0.5 displayed; the 2.0 sell print covers queue and order
        let (reward, done) = env.act(MicroAction::new(-1).unwrap()).unwrap();
        assert!(done);
        assert!((reward - 0.1).abs() < 1e-9);
    }

    #[test]
    fn forced_order_waits_for_replenishment() {
        let events = vec![MarketEvent::delta(200_000, EventKind::AskDelta, px(101.0), 3.0)];
        let tl = timeline(&[(99.9, 5.0)], &[(100.0, 0.5)], events);
        let mut env = MicroEnv::new(&tl, MicroConfig::default());
        env.reset_at(Side::Buy, 1.0, 60_000).unwrap();
        for _ in 0..6 {
            env.act(MicroAction::new(-50).unwrap()).unwrap();
        }
        assert!(env.is_done());
        let rec = env.record().unwrap();
        let total: f64 = rec.fills.iter().map(|f| f.qty).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(rec.fills.last().unwrap().price, px(101.0));
    }

    #[test]
    fn episode_json_line_shape() {
        let tl = timeline(&[(99.9, 5.0)], &[(100.0, 5.0)], vec![]);
        let mut env = MicroEnv::new(&tl, MicroConfig::default());
        env.reset_at(Side::Buy, 1.0, 60_000).unwrap();
        env.act(MicroAction::new(3).unwrap()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&env.record().unwrap().to_json_line()).unwrap();
        assert_eq!(v["side"], "buy");
        assert_eq!(v["actions"], serde_json::json!([3]));
        assert_eq!(v["fills"], serde_json::json!([[100.0, 1.0]]));
        assert_eq!(v["forced_market_qty"], 0.0);
    }
}
