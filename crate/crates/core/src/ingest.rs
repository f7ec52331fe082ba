//! Exchange event parsing, order-book timeline reconstruction and minute bars.
//!
//! Feeds arrive as JSON lines (`{"ts", "kind", "side", "price", "qty"}`). Book
//! deltas carry the absolute quantity at a price level, so replaying a prefix
//! of the feed over the initial snapshot is idempotent.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orderbook::{BookError, OrderBook};
use crate::types::{is_minute_aligned, minute_floor, Price, Side, Timestamp, MS_PER_MINUTE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("MalformedRecord: line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("NonPositivePrice: line {line}")]
    NonPositivePrice { line: usize },
    #[error("NegativeQuantity: line {line}")]
    NegativeQuantity { line: usize },
    #[error("NonTradeEvent: event at ts {ts} is not a trade")]
    NonTradeEvent { ts: Timestamp },
    #[error("MisalignedRange: [{start}, {end}) is not minute-aligned")]
    MisalignedRange { start: Timestamp, end: Timestamp },
    #[error("BoundaryOutOfRange: {0}")]
    BoundaryOutOfRange(Timestamp),
    #[error("InvalidSnapshot: {0}")]
    InvalidSnapshot(String),
    #[error("InvalidTickCsv: line {line}: {reason}")]
    InvalidTickCsv { line: usize, reason: String },
    #[error("Io: {0}")]
    Io(String),
}

impl From<std::io::Error> for IngestError {
    fn from(e: std::io::Error) -> Self {
        IngestError::Io(e.to_string())
    }
}

impl From<BookError> for IngestError {
    fn from(e: BookError) -> Self {
        IngestError::InvalidSnapshot(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Trade,
    BidDelta,
    AskDelta,
}

impl EventKind {
    fn wire_name(self) -> &'static str {
        match self {
            EventKind::Trade => "trade",
            EventKind::BidDelta => "bid",
            EventKind::AskDelta => "ask",
        }
    }
}

/// One timestamped trade or level update. `side` is set for trades only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketEvent {
    pub ts: Timestamp,
    pub kind: EventKind,
    pub side: Option<Side>,
    pub price: Price,
    pub qty: f64,
}

impl MarketEvent {
    pub fn trade(ts: Timestamp, side: Side, price: Price, qty: f64) -> Self {
        MarketEvent { ts, kind: EventKind::Trade, side: Some(side), price, qty }
    }

    pub fn delta(ts: Timestamp, kind: EventKind, price: Price, qty: f64) -> Self {
        MarketEvent { ts, kind, side: None, price, qty }
    }

    pub fn is_trade(&self) -> bool {
        self.kind == EventKind::Trade
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct WireEvent {
    ts: i64,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    side: Option<String>,
    price: f64,
    qty: f64,
}

fn decode_line(line_no: usize, text: &str) -> Result<MarketEvent, IngestError> {
    let malformed = |reason: String| IngestError::MalformedRecord { line: line_no, reason };
    let wire: WireEvent = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
    let kind = match wire.kind.as_str() {
        "trade" => EventKind::Trade,
        "bid" => EventKind::BidDelta,
        "ask" => EventKind::AskDelta,
        other => return Err(malformed(format!("unknown kind {other:?}"))),
    };
    let side = match (kind, wire.side.as_deref()) {
        (EventKind::Trade, Some("buy")) => Some(Side::Buy),
        (EventKind::Trade, Some("sell")) => Some(Side::Sell),
        (EventKind::Trade, other) => return Err(malformed(format!("trade side {other:?}"))),
        (_, _) => None,
    };
    if !wire.price.is_finite() || !wire.qty.is_finite() {
        return Err(malformed("non-finite number".into()));
    }
    let price = Price::from_f64(wire.price);
    if wire.price <= 0.0 || price.ticks() <= 0 {
        return Err(IngestError::NonPositivePrice { line: line_no });
    }
    if wire.qty < 0.0 {
        return Err(IngestError::NegativeQuantity { line: line_no });
    }
    Ok(MarketEvent { ts: wire.ts, kind, side, price, qty: wire.qty })
}

/// Result of a lenient parse: accepted events plus the rejected lines.
#[derive(Debug, Clone, Default)]
pub struct ParseReport {
    pub events: Vec<MarketEvent>,
    pub rejected: Vec<IngestError>,
}

/// Parses a JSON-lines feed, failing on the first bad record. Blank lines are
/// skipped. Output is stably sorted by timestamp.
pub fn parse_event_stream<R: BufRead>(source: R) -> Result<Vec<MarketEvent>, IngestError> {
    let mut events = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(decode_line(idx + 1, &line)?);
    }
    events.sort_by_key(|e| e.ts);
    Ok(events)
}

/// Parses a feed, collecting bad records instead of failing.
pub fn parse_event_stream_lenient<R: BufRead>(source: R) -> Result<ParseReport, IngestError> {
    let mut report = ParseReport::default();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match decode_line(idx + 1, &line) {
            Ok(ev) => report.events.push(ev),
            Err(e) => report.rejected.push(e),
        }
    }
    report.events.sort_by_key(|e| e.ts);
    Ok(report)
}

pub fn write_event_stream<W: Write>(events: &[MarketEvent], mut out: W) -> Result<(), IngestError> {
    for ev in events {
        let wire = WireEvent {
            ts: ev.ts,
            kind: ev.kind.wire_name().to_string(),
            side: ev.side.map(|s| s.as_str().to_string()),
            price: ev.price.to_f64(),
            qty: ev.qty,
        };
        let line = serde_json::to_string(&wire).map_err(|e| IngestError::Io(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Initial book state at a point in time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub ts: Timestamp,
    pub book: OrderBook,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireSnapshot {
    ts: i64,
    bids: Vec<[f64; 2]>,
    asks: Vec<[f64; 2]>,
}

pub fn parse_snapshot<R: BufRead>(source: R) -> Result<Snapshot, IngestError> {
    let wire: WireSnapshot =
        serde_json::from_reader(source).map_err(|e| IngestError::InvalidSnapshot(e.to_string()))?;
    let convert = |levels: &[[f64; 2]]| -> Result<Vec<(Price, f64)>, IngestError> {
        levels
            .iter()
            .map(|&[p, q]| {
                if !(p > 0.0) {
                    return Err(IngestError::InvalidSnapshot(format!("non-positive price {p}")));
                }
                Ok((Price::from_f64(p), q))
            })
            .collect()
    };
    let bids = convert(&wire.bids)?;
    let asks = convert(&wire.asks)?;
    if bids.windows(2).any(|w| w[0].0 <= w[1].0) {
        return Err(IngestError::InvalidSnapshot("bids must be strictly descending".into()));
    }
    if asks.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(IngestError::InvalidSnapshot("asks must be strictly ascending".into()));
    }
    let book = OrderBook::from_levels(&bids, &asks)?;
    Ok(Snapshot { ts: wire.ts, book })
}

pub fn write_snapshot<W: Write>(snapshot: &Snapshot, out: W) -> Result<(), IngestError> {
    let wire = WireSnapshot {
        ts: snapshot.ts,
        bids: snapshot.book.bids().map(|(p, q)| [p.to_f64(), q]).collect(),
        asks: snapshot.book.asks().map(|(p, q)| [p.to_f64(), q]).collect(),
    };
    serde_json::to_writer(out, &wire).map_err(|e| IngestError::Io(e.to_string()))
}

/// One minute of OHLCV data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickBar {
    pub open_time: Timestamp,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl TickBar {
    fn flat(open_time: Timestamp, price: f64) -> Self {
        TickBar { open_time, open: price, high: price, low: price, close: price, volume: 0.0 }
    }
}

/// Aggregates trades in `[start, end)` into one bar per minute. Minutes before
/// the first trade produce no bar; later empty minutes carry the previous
/// close forward with zero volume.
pub fn build_minute_ticks(
    trades: &[MarketEvent],
    start: Timestamp,
    end: Timestamp,
) -> Result<Vec<TickBar>, IngestError> {
    if !is_minute_aligned(start) || !is_minute_aligned(end) || end < start {
        return Err(IngestError::MisalignedRange { start, end });
    }
    if let Some(ev) = trades.iter().find(|e| !e.is_trade()) {
        return Err(IngestError::NonTradeEvent { ts: ev.ts });
    }
    let mut in_range: Vec<&MarketEvent> =
        trades.iter().filter(|e| e.ts >= start && e.ts < end).collect();
    in_range.sort_by_key(|e| e.ts);

    let mut bars: Vec<TickBar> = Vec::new();
    let mut iter = in_range.into_iter().peekable();
    let mut minute = start;
    while minute < end {
        let next_minute = minute + MS_PER_MINUTE;
        let mut bar: Option<TickBar> = None;
        while let Some(ev) = iter.next_if(|e| e.ts < next_minute) {
            let p = ev.price.to_f64();
            match bar.as_mut() {
                None => {
                    bar = Some(TickBar { open_time: minute, open: p, high: p, low: p, close: p, volume: ev.qty })
                }
                Some(b) => {
                    b.high = b.high.max(p);
                    b.low = b.low.min(p);
                    b.close = p;
                    b.volume += ev.qty;
                }
            }
        }
        match (bar, bars.last()) {
            (Some(b), _) => bars.push(b),
            (None, Some(prev)) => bars.push(TickBar::flat(minute, prev.close)),
            (None, None) => {}
        }
        minute = next_minute;
    }
    Ok(bars)
}

pub fn write_ticks_csv<W: Write>(bars: &[TickBar], mut out: W) -> Result<(), IngestError> {
    writeln!(out, "open_time,open,high,low,close,volume")?;
    for b in bars {
        writeln!(out, "{},{},{},{},{},{}", b.open_time, b.open, b.high, b.low, b.close, b.volume)?;
    }
    Ok(())
}

pub fn read_ticks_csv<R: BufRead>(source: R) -> Result<Vec<TickBar>, IngestError> {
    let mut bars = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if idx == 0 {
            if line.trim() != "open_time,open,high,low,close,volume" {
                return Err(IngestError::InvalidTickCsv { line: 1, reason: "unexpected header".into() });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| IngestError::InvalidTickCsv { line: line_no, reason };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 6 {
            return Err(bad(format!("expected 6 fields, got {}", fields.len())));
        }
        let open_time = fields[0].parse::<i64>().map_err(|e| bad(e.to_string()))?;
        let mut nums = [0.0; 5];
        for (slot, text) in nums.iter_mut().zip(&fields[1..]) {
            *slot = text.parse::<f64>().map_err(|e| bad(e.to_string()))?;
        }
        let [open, high, low, close, volume] = nums;
        if !(low <= open && open <= high && low <= close && close <= high && volume >= 0.0) {
            return Err(bad("OHLCV ordering violated".into()));
        }
        bars.push(TickBar { open_time, open, high, low, close, volume });
    }
    Ok(bars)
}

/// Snapshot plus the time-ordered feed that follows it, with periodic book
/// checkpoints so that replay to any time only touches a short suffix.
#[derive(Debug, Clone)]
pub struct BookTimeline {
    initial: OrderBook,
    start: Timestamp,
    events: Vec<MarketEvent>,
    checkpoints: Vec<Checkpoint>,
}

#[derive(Debug, Clone)]
struct Checkpoint {
    ts: Timestamp,
    offset: usize,
    book: OrderBook,
}

impl BookTimeline {
    pub const CHECKPOINT_INTERVAL: Timestamp = MS_PER_MINUTE;

    /// Events stamped before the snapshot are dropped, since the snapshot
    /// already reflects them.
    pub fn new(snapshot: Snapshot, mut events: Vec<MarketEvent>) -> Self {
        events.retain(|e| e.ts >= snapshot.ts);
        events.sort_by_key(|e| e.ts);
        let mut timeline = BookTimeline {
            initial: snapshot.book,
            start: snapshot.ts,
            events,
            checkpoints: Vec::new(),
        };
        timeline.build_checkpoints();
        timeline
    }

    fn build_checkpoints(&mut self) {
        let mut book = self.initial.clone();
        let mut offset = 0;
        let end = self.end();
        let mut ts = minute_floor(self.start) + Self::CHECKPOINT_INTERVAL;
        while ts <= end {
            while offset < self.events.len() && self.events[offset].ts <= ts {
                book.apply(&self.events[offset]);
                offset += 1;
            }
            self.checkpoints.push(Checkpoint { ts, offset, book: book.clone() });
            ts += Self::CHECKPOINT_INTERVAL;
        }
    }

    pub fn initial_snapshot(&self) -> &OrderBook {
        &self.initial
    }

    pub fn start(&self) -> Timestamp {
        self.start
    }

    /// Timestamp of the last event, or the start for an empty feed.
    pub fn end(&self) -> Timestamp {
        self.events.last().map_or(self.start, |e| e.ts)
    }

    pub fn events(&self) -> &[MarketEvent] {
        &self.events
    }

    /// Number of events with timestamp `<= ts`.
    pub fn offset_after(&self, ts: Timestamp) -> usize {
        self.events.partition_point(|e| e.ts <= ts)
    }

    /// Events with `after < ts <= until`.
    pub fn events_between(&self, after: Timestamp, until: Timestamp) -> &[MarketEvent] {
        let lo = self.offset_after(after);
        let hi = self.offset_after(until).max(lo);
        &self.events[lo..hi]
    }

    /// Book state after applying every event stamped `<= until`.
    pub fn replay_book(&self, until: Timestamp) -> OrderBook {
        let idx = self.checkpoints.partition_point(|c| c.ts <= until);
        let (mut book, offset) = match idx {
            0 => (self.initial.clone(), 0),
            i => (self.checkpoints[i - 1].book.clone(), self.checkpoints[i - 1].offset),
        };
        for ev in self.events[offset..].iter().take_while(|e| e.ts <= until) {
            book.apply(ev);
        }
        book
    }

    /// Incremental replay positioned at `from`.
    pub fn cursor(&self, from: Timestamp) -> BookCursor<'_> {
        BookCursor { timeline: self, book: self.replay_book(from), offset: self.offset_after(from), now: from }
    }
}

/// Forward-only replay over a timeline.
#[derive(Debug, Clone)]
pub struct BookCursor<'a> {
    timeline: &'a BookTimeline,
    book: OrderBook,
    offset: usize,
    now: Timestamp,
}

impl<'a> BookCursor<'a> {
    pub fn book(&self) -> &OrderBook {
        &self.book
    }

    pub fn book_mut(&mut self) -> &mut OrderBook {
        &mut self.book
    }

    pub fn now(&self) -> Timestamp {
        self.now
    }

    pub fn exhausted(&self) -> bool {
        self.offset >= self.timeline.events.len()
    }

    /// Returns the next event stamped `<= until` without applying it.
    pub fn peek(&self, until: Timestamp) -> Option<&'a MarketEvent> {
        self.timeline.events.get(self.offset).filter(|e| e.ts <= until)
    }

    /// Applies the next event if it is stamped `<= until`.
    pub fn step(&mut self, until: Timestamp) -> Option<&'a MarketEvent> {
        let ev = self.peek(until)?;
        self.book.apply(ev);
        self.offset += 1;
        Some(ev)
    }

    /// Applies every event up to `until` and moves the clock there.
    pub fn advance_to(&mut self, until: Timestamp) -> &'a [MarketEvent] {
        let lo = self.offset;
        while self.step(until).is_some() {}
        self.now = self.now.max(until);
        &self.timeline.events[lo..self.offset]
    }

    pub fn set_now(&mut self, ts: Timestamp) {
        self.now = self.now.max(ts);
    }
}

/// Series that can be partitioned at a timestamp boundary.
pub trait SplitSeries: Sized {
    fn split_at_ts(&self, boundary: Timestamp) -> Result<(Self, Self), IngestError>;
}

impl SplitSeries for Vec<TickBar> {
    fn split_at_ts(&self, boundary: Timestamp) -> Result<(Self, Self), IngestError> {
        if self.is_empty() {
            return Err(IngestError::BoundaryOutOfRange(boundary));
        }
        let cut = self.partition_point(|b| b.open_time < boundary);
        Ok((self[..cut].to_vec(), self[cut..].to_vec()))
    }
}

impl SplitSeries for BookTimeline {
    /// The test half starts from the book as replayed just before `boundary`.
    fn split_at_ts(&self, boundary: Timestamp) -> Result<(Self, Self), IngestError> {
        if boundary < self.start {
            return Err(IngestError::BoundaryOutOfRange(boundary));
        }
        let cut = self.events.partition_point(|e| e.ts < boundary);
        let train = BookTimeline::new(
            Snapshot { ts: self.start, book: self.initial.clone() },
            self.events[..cut].to_vec(),
        );
        let test = BookTimeline::new(
            Snapshot { ts: boundary, book: self.replay_book(boundary - 1) },
            self.events[cut..].to_vec(),
        );
        Ok((train, test))
    }
}

/// Splits into strictly-before-boundary and the rest.
pub fn split_train_test<S: SplitSeries>(series: &S, boundary: Timestamp) -> Result<(S, S), IngestError> {
    series.split_at_ts(boundary)
}
