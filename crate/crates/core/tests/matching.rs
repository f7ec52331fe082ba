use mmrl_core::ingest::{EventKind, MarketEvent};
use mmrl_core::matchsim::{place_limit, place_market, AgentOrder, MatchError};
use mmrl_core::orderbook::{vwap, BookSide, Fill, OrderBook};
use mmrl_core::types::{Price, Side};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_book(rng: &mut ChaCha8Rng) -> OrderBook {
    let mid = rng.random_range(1_000..100_000i64);
    let spread = rng.random_range(1..20);
    let n_bids = rng.random_range(1..25);
    let n_asks = rng.random_range(1..25);
    let bids: Vec<(Price, f64)> =
        (0..n_bids).map(|i| (Price(mid - spread - 3 * i), rng.random_range(0.01..3.0))).collect();
    let asks: Vec<(Price, f64)> =
        (0..n_asks).map(|i| (Price(mid + spread + 3 * i), rng.random_range(0.01..3.0))).collect();
    OrderBook::from_levels(&bids, &asks).unwrap()
}

/// Walks the opposing levels best-first; independent of the simulator.
fn sweep_oracle(book: &OrderBook, side: Side, qty: f64, limit: Option<Price>) -> (Vec<(Price, f64)>, f64) {
    let levels: Vec<(Price, f64)> = match side {
        Side::Buy => book.asks().collect(),
        Side::Sell => book.bids().collect(),
    };
    let mut left = qty;
    let mut fills = Vec::new();
    for (p, q) in levels {
        let ok = match (side, limit) {
            (_, None) => true,
            (Side::Buy, Some(l)) => p <= l,
            (Side::Sell, Some(l)) => p >= l,
        };
        if !ok || left <= 1e-9 {
            break;
        }
        let take = q.min(left);
        fills.push((p, take));
        left -= take;
    }
    (fills, left.max(0.0))
}

fn fill_sum(fills: &[Fill]) -> f64 {
    fills.iter().map(|f| f.qty).sum()
}

#[test]
fn market_orders_match_sweep_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..2_000 {
        let mut book = random_book(&mut rng);
        let side = if rng.random_bool(0.5) { Side::Buy } else { Side::Sell };
        let qty = rng.random_range(0.01..40.0);
        let (expect, left) = sweep_oracle(&book, side, qty, None);
        let got = match place_market(&mut book, side, qty, 0) {
            Ok(f) => {
                assert!(left <= 1e-9);
                f
            }
            Err(MatchError::InsufficientDepth { fills, unfilled }) => {
                assert!((unfilled - left).abs() < 1e-9);
                fills
            }
            Err(e) => panic!("{e}"),
        };
        let got: Vec<(Price, f64)> = got.iter().map(|f| (f.price, f.qty)).collect();
        assert_eq!(got.len(), expect.len());
        for (g, e) in got.iter().zip(&expect) {
            assert_eq!(g.0, e.0);
            assert!((g.1 - e.1).abs() < 1e-12);
        }
    }
}

#[test]
fn limit_orders_conserve_quantity_and_respect_limits() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..2_000 {
        let mut book = random_book(&mut rng);
        let side = if rng.random_bool(0.5) { Side::Buy } else { Side::Sell };
        let anchor = book.market_price(side).unwrap();
        let limit = Price((anchor.ticks() + rng.random_range(-40..40)).max(1));
        let qty = rng.random_range(0.01..10.0);
        let (expect, _) = sweep_oracle(&book, side, qty, Some(limit));
        let mut order = place_limit(&mut book, AgentOrder::limit(side, limit, qty, 0)).unwrap();
        assert_eq!(order.fills.len(), expect.len());
        let n_tail = rng.random_range(0..30);
        let tail: Vec<MarketEvent> = (0..n_tail)
            .map(|i| {
                let p = Price(limit.ticks() + rng.random_range(-10..10));
                if rng.random_bool(0.7) {
                    MarketEvent::trade(i + 1, Side::Buy, p, rng.random_range(0.01..3.0))
                } else {
                    MarketEvent::delta(i + 1, EventKind::BidDelta, p, rng.random_range(0.0..3.0))
                }
            })
            .collect();
        order.advance(&tail);
        assert!((fill_sum(&order.fills) + order.remaining - qty).abs() < 1e-9);
        for f in &order.fills {
            match side {
                Side::Buy => assert!(f.price <= limit),
                Side::Sell => assert!(f.price >= limit),
            }
        }
    }
}

#[test]
fn passive_fill_waits_for_queue() {
    let mut book =
        OrderBook::from_levels(&[(Price::from_f64(99.0), 2.0)], &[(Price::from_f64(101.0), 1.0)]).unwrap();
    let mut order = place_limit(&mut book, AgentOrder::limit(Side::Buy, Price::from_f64(99.0), 1.0, 0)).unwrap();
    assert_eq!(order.queue_ahead, 2.0);
    order.on_event(&MarketEvent::trade(1, Side::Sell, Price::from_f64(99.0), 1.5));
    assert!(order.fills.is_empty());
    order.on_event(&MarketEvent::trade(2, Side::Sell, Price::from_f64(99.0), 1.0));
    assert!((order.filled_qty() - 0.5).abs() < 1e-12);
    // a print below the limit also crosses the resting buy
    order.on_event(&MarketEvent::trade(3, Side::Sell, Price::from_f64(98.5), 5.0));
    assert!(order.is_filled());
    assert!(order.fills.iter().all(|f| f.price == Price::from_f64(99.0)));
    assert_eq!(book.quantity_at(BookSide::Bid, Price::from_f64(99.0)), 2.0);
}

proptest! {
    #[test]
    fn market_vwap_never_beats_top_of_book(seed in any::<u64>(), qty in 0.01f64..30.0, buy in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut book = random_book(&mut rng);
        let side = if buy { Side::Buy } else { Side::Sell };
        let top = book.market_price(side).unwrap().to_f64();
        let fills = match place_market(&mut book, side, qty, 0) {
            Ok(f) => f,
            Err(MatchError::InsufficientDepth { fills, .. }) => fills,
            Err(e) => panic!("{e}"),
        };
        let v = vwap(&fills).unwrap();
        match side {
            Side::Buy => prop_assert!(v >= top - 1e-9),
            Side::Sell => prop_assert!(v <= top + 1e-9),
        }
        prop_assert!(book.is_uncrossed());
    }
}
