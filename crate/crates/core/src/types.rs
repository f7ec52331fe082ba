//! Shared market primitives: sides, tick-denominated prices and timestamps.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Milliseconds since the Unix epoch.
pub type Timestamp = i64;

pub const MS_PER_SECOND: Timestamp = 1_000;
pub const MS_PER_MINUTE: Timestamp = 60_000;

/// Number of price ticks per quote-currency unit (tick size 0.01).
pub const TICKS_PER_UNIT: i64 = 100;

/// Rounds a timestamp down to the start of its minute.
pub fn minute_floor(ts: Timestamp) -> Timestamp {
    ts.div_euclid(MS_PER_MINUTE) * MS_PER_MINUTE
}

pub fn is_minute_aligned(ts: Timestamp) -> bool {
    ts.rem_euclid(MS_PER_MINUTE) == 0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Buy => Side::Sell,
            Side::Sell => Side::Buy,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Buy => "buy",
            Side::Sell => "sell",
        }
    }

    /// +1 for buys, -1 for sells.
    pub fn sign(self) -> f64 {
        match self {
            Side::Buy => 1.0,
            Side::Sell => -1.0,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A price stored as an integer number of 0.01 ticks.
///
/// Integer keys keep the book's sorted maps free of float ordering issues and
/// represent every price reachable by the 0.10 action grid exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Price(pub i64);

impl Price {
    pub const fn from_ticks(ticks: i64) -> Self {
        Price(ticks)
    }

    /// Nearest tick to a decimal quote-currency value.
    pub fn from_f64(value: f64) -> Self {
        Price((value * TICKS_PER_UNIT as f64).round() as i64)
    }

    pub fn ticks(self) -> i64 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / TICKS_PER_UNIT as f64
    }

    pub fn offset(self, ticks: i64) -> Self {
        Price(self.0 + ticks)
    }
}

impl fmt::Display for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

/// Quantities below this are treated as fully consumed.
pub const QTY_EPSILON: f64 = 1e-9;
