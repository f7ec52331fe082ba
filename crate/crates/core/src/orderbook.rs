//! Two-sided level-2 limit order book.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{EventKind, MarketEvent};
use crate::types::{Price, Side, Timestamp, TICKS_PER_UNIT};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BookError {
    #[error("EmptySide: no {0} levels")]
    EmptySide(BookSide),
    #[error("EmptyFills: no executed quantity")]
    EmptyFills,
    #[error("InvalidLevel: {0}")]
    InvalidLevel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BookSide {
    Bid,
    Ask,
}

impl BookSide {
    /// Side of the book an order of `side` rests on.
    pub fn resting(side: Side) -> BookSide {
        match side {
            Side::Buy => BookSide::Bid,
            Side::Sell => BookSide::Ask,
        }
    }

    /// Side of the book an order of `side` takes liquidity from.
    pub fn opposing(side: Side) -> BookSide {
        match side {
            Side::Buy => BookSide::Ask,
            Side::Sell => BookSide::Bid,
        }
    }
}

impl fmt::Display for BookSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BookSide::Bid => "bid",
            BookSide::Ask => "ask",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LastTrade {
    pub price: Price,
    pub qty: f64,
    pub side: Side,
}

/// An execution of some quantity at a single price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fill {
    pub price: Price,
    pub qty: f64,
    pub ts: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub price: Price,
    pub qty: f64,
}

/// Fixed-depth projection of the book. Entries past the real levels are
/// padding with zero quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelView {
    pub depth: usize,
    pub bids: Vec<Level>,
    pub asks: Vec<Level>,
}

impl LevelView {
    pub fn real_bids(&self) -> usize {
        self.bids.iter().take_while(|l| l.qty > 0.0).count()
    }

    pub fn real_asks(&self) -> usize {
        self.asks.iter().take_while(|l| l.qty > 0.0).count()
    }
}

/// Bids iterate best (highest) first, asks best (lowest) first. Levels with
/// zero quantity are never stored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OrderBook {
    bids: BTreeMap<Price, f64>,
    asks: BTreeMap<Price, f64>,
    last_trade: Option<LastTrade>,
}

impl OrderBook {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a book from explicit levels, rejecting non-positive prices,
    /// negative quantities and crossed input.
    pub fn from_levels(bids: &[(Price, f64)], asks: &[(Price, f64)]) -> Result<Self, BookError> {
        let mut book = OrderBook::new();
        for (side, levels) in [(BookSide::Bid, bids), (BookSide::Ask, asks)] {
            for &(price, qty) in levels {
                if price.ticks() <= 0 {
                    return Err(BookError::InvalidLevel(format!("{side} price {price} must be positive")));
                }
                if !(qty >= 0.0) || !qty.is_finite() {
                    return Err(BookError::InvalidLevel(format!("{side} quantity {qty} at {price}")));
                }
                if qty > 0.0 {
                    book.side_mut(side).insert(price, qty);
                }
            }
        }
        if !book.is_uncrossed() {
            return Err(BookError::InvalidLevel("snapshot is crossed".into()));
        }
        Ok(book)
    }

    fn side_map(&self, side: BookSide) -> &BTreeMap<Price, f64> {
        match side {
            BookSide::Bid => &self.bids,
            BookSide::Ask => &self.asks,
        }
    }

    fn side_mut(&mut self, side: BookSide) -> &mut BTreeMap<Price, f64> {
        match side {
            BookSide::Bid => &mut self.bids,
            BookSide::Ask => &mut self.asks,
        }
    }

    /// Levels best-first.
    pub fn levels(&self, side: BookSide) -> Box<dyn Iterator<Item = (Price, f64)> + '_> {
        match side {
            BookSide::Bid => Box::new(self.bids.iter().rev().map(|(&p, &q)| (p, q))),
            BookSide::Ask => Box::new(self.asks.iter().map(|(&p, &q)| (p, q))),
        }
    }

    pub fn bids(&self) -> impl Iterator<Item = (Price, f64)> + '_ {
        self.bids.iter().rev().map(|(&p, &q)| (p, q))
    }

    pub fn asks(&self) -> impl Iterator<Item = (Price, f64)> + '_ {
        self.asks.iter().map(|(&p, &q)| (p, q))
    }

    pub fn best_bid(&self) -> Option<Price> {
        self.bids.keys().next_back().copied()
    }

    pub fn best_ask(&self) -> Option<Price> {
        self.asks.keys().next().copied()
    }

    pub fn best(&self, side: BookSide) -> Option<Price> {
        match side {
            BookSide::Bid => self.best_bid(),
            BookSide::Ask => self.best_ask(),
        }
    }

    /// Mid price in quote units, if both sides are populated.
    pub fn mid(&self) -> Option<f64> {
        Some((self.best_bid()?.to_f64() + self.best_ask()?.to_f64()) / 2.0)
    }

    pub fn quantity_at(&self, side: BookSide, price: Price) -> f64 {
        self.side_map(side).get(&price).copied().unwrap_or(0.0)
    }

    pub fn depth(&self, side: BookSide) -> usize {
        self.side_map(side).len()
    }

    pub fn total_quantity(&self, side: BookSide) -> f64 {
        self.side_map(side).values().sum()
    }

    pub fn last_trade(&self) -> Option<LastTrade> {
        self.last_trade
    }

    pub fn is_empty(&self) -> bool {
        self.bids.is_empty() && self.asks.is_empty()
    }

    pub fn is_uncrossed(&self) -> bool {
        match (self.best_bid(), self.best_ask()) {
            (Some(b), Some(a)) => b < a,
            _ => true,
        }
    }

    /// Sets the absolute quantity at a level. Zero removes the level; a
    /// positive quantity that crosses the opposite side drops the stale
    /// opposing levels it crosses.
    pub fn set_level(&mut self, side: BookSide, price: Price, qty: f64) {
        if qty <= 0.0 {
            self.side_mut(side).remove(&price);
            return;
        }
        match side {
            BookSide::Bid => {
                let stale: Vec<Price> = self.asks.range(..=price).map(|(&p, _)| p).collect();
                for p in stale {
                    self.asks.remove(&p);
                }
            }
            BookSide::Ask => {
                let stale: Vec<Price> = self.bids.range(price..).map(|(&p, _)| p).collect();
                for p in stale {
                    self.bids.remove(&p);
                }
            }
        }
        self.side_mut(side).insert(price, qty);
    }

    /// Removes up to `qty` from a level and returns the amount removed.
    pub fn take(&mut self, side: BookSide, price: Price, qty: f64) -> f64 {
        let map = self.side_mut(side);
        let Some(available) = map.get_mut(&price) else {
            return 0.0;
        };
        let taken = available.min(qty);
        *available -= taken;
        if *available <= crate::types::QTY_EPSILON {
            map.remove(&price);
        }
        taken
    }

    /// Applies one feed event in place. Deltas set absolute level quantities;
    /// trades only update the last-trade record.
    pub fn apply(&mut self, event: &MarketEvent) {
        match event.kind {
            EventKind::BidDelta => self.set_level(BookSide::Bid, event.price, event.qty),
            EventKind::AskDelta => self.set_level(BookSide::Ask, event.price, event.qty),
            EventKind::Trade => {
                self.last_trade = Some(LastTrade {
                    price: event.price,
                    qty: event.qty,
                    side: event.side.unwrap_or(Side::Buy),
                })
            }
        }
    }

    /// Value-style variant of [`OrderBook::apply`].
    pub fn apply_delta(mut self, event: &MarketEvent) -> Self {
        self.apply(event);
        self
    }

    /// Best price on the side an order of `side` would trade against.
    pub fn market_price(&self, side: Side) -> Result<Price, BookError> {
        let opposing = BookSide::opposing(side);
        self.best(opposing).ok_or(BookError::EmptySide(opposing))
    }

    /// Projects the best `depth` levels per side, padded to exactly `depth`
    /// entries. Padding repeats the last real price on that side (or a mid
    /// fallback when the side is empty) with zero quantity.
    pub fn top_levels(&self, depth: usize) -> LevelView {
        let depth = depth.max(1);
        let fallback = self.pad_fallback();
        let project = |side: BookSide| {
            let mut out: Vec<Level> = self
                .levels(side)
                .take(depth)
                .map(|(price, qty)| Level { price, qty })
                .collect();
            let pad_price = out.last().map(|l| l.price).unwrap_or(fallback);
            out.resize(depth, Level { price: pad_price, qty: 0.0 });
            out
        };
        LevelView {
            depth,
            bids: project(BookSide::Bid),
            asks: project(BookSide::Ask),
        }
    }

    fn pad_fallback(&self) -> Price {
        match (self.best_bid(), self.best_ask()) {
            (Some(b), Some(a)) => Price((b.ticks() + a.ticks()) / 2),
            (Some(p), None) | (None, Some(p)) => p,
            (None, None) => self.last_trade.map(|t| t.price).unwrap_or_default(),
        }
    }
}

/// Volume-weighted average price of a set of fills, in quote units.
pub fn vwap(fills: &[Fill]) -> Result<f64, BookError> {
    let qty: f64 = fills.iter().map(|f| f.qty).sum();
    if fills.is_empty() || qty <= 0.0 {
        return Err(BookError::EmptyFills);
    }
    Ok(fills[0].price.to_f64() + mean_tick_offset(fills[0].price, fills, qty) / TICKS_PER_UNIT as f64)
}

/// Quantity-weighted mean of `fill - anchor` in ticks. Integer differences keep
/// it exactly zero when every fill is at the anchor.
pub(crate) fn mean_tick_offset(anchor: Price, fills: &[Fill], total_qty: f64) -> f64 {
    fills.iter().map(|f| f.qty * (f.price.ticks() - anchor.ticks()) as f64).sum::<f64>() / total_qty
}
