use mmrl_core::bench::{
    buy_and_hold, momentum, run_macro_standalone, run_pipeline, ConstantMicro, PipelineConfig,
};
use mmrl_core::ingest::{
    parse_event_stream, parse_snapshot, write_event_stream, write_snapshot, BookTimeline, EventKind, MarketEvent,
    Snapshot, TickBar,
};
use mmrl_core::macro_env::{MacroAction, MacroConfig};
use mmrl_core::micro_env::MicroAction;
use mmrl_core::orderbook::{vwap, OrderBook};
use mmrl_core::synth::{generate, SynthConfig};
use mmrl_core::types::{Price, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bars_from(opens: &[f64]) -> Vec<TickBar> {
    opens
        .iter()
        .enumerate()
        .map(|(i, &p)| TickBar { open_time: i as i64 * 60_000, open: p, high: p, low: p, close: p, volume: 1.0 })
        .collect()
}

#[test]
fn buy_and_hold_final_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for _ in 0..50 {
        let opens: Vec<f64> = (0..rng.random_range(1..200)).map(|_| rng.random_range(1.0..1e4)).collect();
        let q = rng.random_range(0.0..20.0);
        let c = buy_and_hold(&bars_from(&opens), q).unwrap();
        assert_eq!(c.final_pnl(), q * (opens[opens.len() - 1] - opens[0]));
    }
}

#[test]
fn momentum_profits_on_a_v_shape() {
    let mut series: Vec<f64> = (0..30).map(|i| 100.0 - i as f64).collect();
    series.extend((0..30).map(|i| 71.0 + i as f64));
    let c = momentum(&bars_from(&series), 20).unwrap();
    assert!(c.final_pnl() > 0.0);
}

/// Realized profit from a blotter, tracked lot by lot.
fn ledger_pnl(rows: &[mmrl_core::macro_env::BlotterRow]) -> f64 {
    let mut lots: Vec<f64> = Vec::new();
    let mut pnl = 0.0;
    for r in rows {
        match r.action {
            MacroAction::Buy => lots.push(r.price),
            MacroAction::Sell => {
                for cost in lots.drain(..) {
                    pnl += r.price - cost;
                }
            }
            MacroAction::Hold => {}
        }
    }
    pnl
}

#[test]
fn standalone_pnl_matches_ledger_replay() {
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    for _ in 0..20 {
        let mut p = 1000.0;
        let opens: Vec<f64> = (0..150)
            .map(|_| {
                p += rng.random_range(-5.0..5.0);
                p
            })
            .collect();
        let bars = bars_from(&opens);
        let mut policy_rng = ChaCha8Rng::seed_from_u64(rng.random());
        let mut policy = |_: &[f64]| MacroAction::ALL[policy_rng.random_range(0..3)];
        let run = run_macro_standalone(&mut policy, &bars, &MacroConfig::default(), 40).unwrap();
        assert!((run.curve.final_pnl() - ledger_pnl(&run.blotter)).abs() < 1e-6);
        assert!(run.curve.points.windows(2).all(|w| w[0].0 < w[1].0));
    }
}

#[test]
fn synthetic_market_is_reproducible_and_ingestible() {
    let cfg = SynthConfig { seed: 9, duration_minutes: 15, ..SynthConfig::default() };
    let a = generate(&cfg).unwrap();
    assert_eq!(a, generate(&cfg).unwrap());
    let mut ev = Vec::new();
    write_event_stream(&a.events, &mut ev).unwrap();
    let mut snap = Vec::new();
    write_snapshot(&a.snapshot, &mut snap).unwrap();
    assert_eq!(parse_event_stream(ev.as_slice()).unwrap(), a.events);
    assert_eq!(parse_snapshot(snap.as_slice()).unwrap(), a.snapshot);
    assert_eq!(a.bars().unwrap().len(), 15);
}

#[test]
fn synthetic_drift_within_noise_envelope() {
    let noise = 0.02;
    for seed in 0..20 {
        let cfg = SynthConfig { seed, duration_minutes: 60, trend_per_minute: 1.0, noise_sigma: noise, ..SynthConfig::default() };
        let bars = generate(&cfg).unwrap().bars().unwrap();
        let moved = bars.last().unwrap().close - bars[0].open;
        // walk noise over 3600 one-second steps, plus grid rounding and the spread
        let envelope = 3.0 * noise * 3600f64.sqrt() + 0.2;
        assert!((moved - 60.0).abs() <= envelope, "seed {seed}: moved {moved}");
    }
}

fn synthetic_pair(seed: u64, minutes: usize) -> (Vec<TickBar>, BookTimeline) {
    let m = generate(&SynthConfig { seed, duration_minutes: minutes, noise_sigma: 0.0, ..SynthConfig::default() })
        .unwrap();
    (m.bars().unwrap(), m.timeline())
}

#[test]
fn pipeline_hold_places_no_orders() {
    let (bars, timeline) = synthetic_pair(1, 45);
    let mut hold = |_: &[f64]| MacroAction::Hold;
    let mut micro = ConstantMicro(MicroAction::new(0).unwrap());
    let report = run_pipeline(&mut hold, &mut micro, &bars, &timeline, &PipelineConfig::default()).unwrap();
    assert_eq!(report.stats.total_orders, 0);
    assert_eq!(report.stats.limit_fraction, None);
    assert!(report.curve.points.iter().all(|p| p.1 == 0.0));
}

#[test]
fn pipeline_buy_then_sell_realizes_vwap_difference() {
    let (bars, timeline) = synthetic_pair(2, 45);
    let mut k = 0;
    let mut policy = |_: &[f64]| {
        k += 1;
        match k {
            1 => MacroAction::Buy,
            2 => MacroAction::Sell,
            _ => MacroAction::Hold,
        }
    };
    let mut micro = ConstantMicro(MicroAction::new(0).unwrap());
    let report = run_pipeline(&mut policy, &mut micro, &bars, &timeline, &PipelineConfig::default()).unwrap();
    assert_eq!(report.episodes.len(), 2);
    let buy = &report.episodes[0];
    let sell = &report.episodes[1];
    assert_eq!((buy.side, sell.side), (Side::Buy, Side::Sell));
    let expected = vwap(&sell.fills).unwrap() - vwap(&buy.fills).unwrap();
    assert!((report.curve.final_pnl() - expected).abs() < 1e-9);
    // the market order at the touch fills immediately: one limit order each
    assert_eq!(report.stats.limit_orders, 2);
    assert_eq!(report.stats.limit_fraction, Some(1.0));
}

#[test]
fn pipeline_on_stale_book_forces_market_orders() {
    let book = OrderBook::from_levels(&[(Price::from_f64(99.9), 50.0)], &[(Price::from_f64(100.0), 50.0)]).unwrap();
    // no trades at all: only keep-alive deltas once a minute
    let events: Vec<MarketEvent> = (1..=60)
        .map(|m| MarketEvent::delta(m * 60_000, EventKind::BidDelta, Price::from_f64(99.9), 50.0))
        .collect();
    let timeline = BookTimeline::new(Snapshot { ts: 0, book }, events);
    let bars = bars_from(&[100.0; 60]);
    let mut k = 0;
    let mut policy = |_: &[f64]| {
        k += 1;
        if k == 1 {
            MacroAction::Buy
        } else {
            MacroAction::Hold
        }
    };
    let mut micro = ConstantMicro(MicroAction::new(-50).unwrap());
    let report = run_pipeline(&mut policy, &mut micro, &bars, &timeline, &PipelineConfig::default()).unwrap();
    assert_eq!(report.episodes.len(), 1);
    assert_eq!(report.stats.forced_market_orders, 1);
    assert_eq!(report.stats.limit_orders, 6);
    assert!(report.stats.limit_fraction.unwrap() < 1.0);
}

#[test]
fn pipeline_pnl_matches_fill_ledger() {
    let m = generate(&SynthConfig { seed: 3, duration_minutes: 90, noise_sigma: 0.2, ..SynthConfig::default() })
        .unwrap();
    let (bars, timeline) = (m.bars().unwrap(), m.timeline());
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let mut policy = |_: &[f64]| MacroAction::ALL[rng.random_range(0..3)];
    let mut micro = ConstantMicro(MicroAction::new(-2).unwrap());
    let report = run_pipeline(&mut policy, &mut micro, &bars, &timeline, &PipelineConfig::default()).unwrap();
    let mut cost = 0.0;
    let mut pnl = 0.0;
    for ep in &report.episodes {
        let notional: f64 = ep.fills.iter().map(|f| f.price.to_f64() * f.qty).sum();
        match ep.side {
            Side::Buy => cost += notional,
            Side::Sell => {
                pnl += notional - cost;
                cost = 0.0;
            }
        }
    }
    assert!((report.curve.final_pnl() - pnl).abs() < 1e-6);
    assert!(report.episodes.iter().all(|e| e.limit_orders <= 6));
}
