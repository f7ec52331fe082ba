//! Matching simulation for the agent's own orders against a replayed book.
//!
//! Agent orders never change the historical feed. Aggressive quantity is taken
//! from the episode's private copy of the book at the resting levels' prices;
//! passive quantity is filled by later historical trades that cross the
//! resting price, after the displayed queue ahead of it has been worked off.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::MarketEvent;
use crate::orderbook::{BookSide, Fill, OrderBook};
use crate::types::{Price, Side, Timestamp, QTY_EPSILON};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatchError {
    #[error("InsufficientDepth: opposing side exhausted after {} fills", fills.len())]
    InsufficientDepth { fills: Vec<Fill>, unfilled: f64 },
    #[error("InvalidOrder: {0}")]
    InvalidOrder(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrderKind {
    Limit,
    Market,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentOrder {
    pub side: Side,
    pub kind: OrderKind,
    pub limit_price: Option<Price>,
    pub quantity: f64,
    pub placed_at: Timestamp,
}

impl AgentOrder {
    pub fn limit(side: Side, price: Price, quantity: f64, placed_at: Timestamp) -> Self {
        AgentOrder { side, kind: OrderKind::Limit, limit_price: Some(price), quantity, placed_at }
    }

    pub fn market(side: Side, quantity: f64, placed_at: Timestamp) -> Self {
        AgentOrder { side, kind: OrderKind::Market, limit_price: None, quantity, placed_at }
    }

    /// Whether a trade or level at `price` is at least as good as the limit.
    fn accepts(&self, price: Price) -> bool {
        match (self.limit_price, self.side) {
            (None, _) => true,
            (Some(limit), Side::Buy) => price <= limit,
            (Some(limit), Side::Sell) => price >= limit,
        }
    }
}

/// Walks the opposing side best-first, taking up to `qty` at prices the
/// `limit` accepts. Returns the fills and the unfilled remainder.
fn sweep(book: &mut OrderBook, side: Side, qty: f64, limit: Option<Price>, ts: Timestamp) -> (Vec<Fill>, f64) {
    let opposing = BookSide::opposing(side);
    let probe = AgentOrder { side, kind: OrderKind::Limit, limit_price: limit, quantity: qty, placed_at: ts };
    let mut remaining = qty;
    let mut fills = Vec::new();
    while remaining > QTY_EPSILON {
        let Some(price) = book.best(opposing) else { break };
        if !probe.accepts(price) {
            break;
        }
        let taken = book.take(opposing, price, remaining);
        if taken <= 0.0 {
            break;
        }
        fills.push(Fill { price, qty: taken, ts });
        remaining -= taken;
    }
    if remaining <= QTY_EPSILON {
        remaining = 0.0;
    }
    (fills, remaining)
}

/// Executes a market order against the book copy. If the opposing side runs
/// dry the partial fills are returned inside the error.
pub fn place_market(book: &mut OrderBook, side: Side, quantity: f64, ts: Timestamp) -> Result<Vec<Fill>, MatchError> {
    if !(quantity > 0.0) {
        return Err(MatchError::InvalidOrder(format!("quantity {quantity} must be positive")));
    }
    let (fills, unfilled) = sweep(book, side, quantity, None, ts);
    if unfilled > 0.0 {
        return Err(MatchError::InsufficientDepth { fills, unfilled });
    }
    Ok(fills)
}

/// An agent limit order and its execution state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestingOrder {
    pub order: AgentOrder,
    pub remaining: f64,
    pub fills: Vec<Fill>,
    /// Displayed quantity ahead of the order at its price level.
    pub queue_ahead: f64,
    pub cancelled: bool,
}

impl RestingOrder {
    pub fn filled_qty(&self) -> f64 {
        self.fills.iter().map(|f| f.qty).sum()
    }

    pub fn is_filled(&self) -> bool {
        self.remaining <= 0.0
    }

    /// No further fills are possible.
    pub fn is_terminal(&self) -> bool {
        self.cancelled || self.is_filled()
    }

    /// Feeds historical events to the resting order. Only trades at or
    /// through the limit price count; each one first works off the queue
    /// ahead, then fills the order at its own limit price.
    pub fn advance(&mut self, events: &[MarketEvent]) {
        for ev in events {
            if self.is_terminal() {
                break;
            }
            self.on_event(ev);
        }
    }

    pub fn on_event(&mut self, ev: &MarketEvent) {
        if self.is_terminal() || !ev.is_trade() || ev.ts < self.order.placed_at || !self.order.accepts(ev.price) {
            return;
        }
        let from_queue = self.queue_ahead.min(ev.qty);
        self.queue_ahead -= from_queue;
        let available = ev.qty - from_queue;
        let qty = available.min(self.remaining);
        if qty <= 0.0 {
            return;
        }
        let price = self.order.limit_price.expect("resting orders are limit orders");
        self.fills.push(Fill { price, qty, ts: ev.ts });
        self.remaining -= qty;
        if self.remaining <= QTY_EPSILON {
            self.remaining = 0.0;
        }
    }

    pub fn cancel(&mut self) {
        self.cancelled = true;
    }
}

/// Places a limit order: any part that crosses the opposing best executes
/// immediately at the book's prices, the rest rests at the limit price behind
/// the displayed quantity already there.
pub fn place_limit(book: &mut OrderBook, order: AgentOrder) -> Result<RestingOrder, MatchError> {
    let limit = match (order.kind, order.limit_price) {
        (OrderKind::Limit, Some(p)) if p.ticks() > 0 => p,
        _ => return Err(MatchError::InvalidOrder("limit order needs a positive limit price".into())),
    };
    if !(order.quantity > 0.0) {
        return Err(MatchError::InvalidOrder(format!("quantity {} must be positive", order.quantity)));
    }
    let (fills, remaining) = sweep(book, order.side, order.quantity, Some(limit), order.placed_at);
    let queue_ahead = book.quantity_at(BookSide::resting(order.side), limit);
    Ok(RestingOrder { order, remaining, fills, queue_ahead, cancelled: false })
}

/// Fill export in `ts,price,qty` form.
pub fn write_fills_csv<W: std::io::Write>(fills: &[Fill], mut out: W) -> std::io::Result<()> {
    writeln!(out, "ts,price,qty")?;
    for f in fills {
        writeln!(out, "{},{},{}", f.ts, f.price, f.qty)?;
    }
    Ok(())
}
