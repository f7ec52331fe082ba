use mmrl_core::agent::Environment;
use mmrl_core::ingest::TickBar;
use mmrl_core::macro_env::{MacroAction, MacroConfig, MacroEnv};
use mmrl_core::micro_env::{episode_reward, MicroAction, MicroConfig, MicroEnv, ACTION_COUNT};
use mmrl_core::synth::{generate, SynthConfig};
use mmrl_core::orderbook::Fill;
use mmrl_core::types::{Price, Side};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_bars(rng: &mut ChaCha8Rng, n: usize) -> Vec<TickBar> {
    let mut p = 5000.0;
    (0..n)
        .map(|i| {
            let open = p;
            p += rng.random_range(-10.0..10.0);
            TickBar {
                open_time: i as i64 * 60_000,
                open,
                high: open.max(p) + 1.0,
                low: open.min(p) - 1.0,
                close: p,
                volume: rng.random_range(1.0..50.0),
            }
        })
        .collect()
}

#[test]
fn macro_state_never_sees_future_bars() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let bars = random_bars(&mut rng, 120);
    let env = MacroEnv::new(bars.clone(), MacroConfig::default()).unwrap();
    for cut in [40, 70, 100] {
        let mut poisoned = bars.clone();
        for b in &mut poisoned[cut + 1..] {
            b.open *= 7.0;
            b.close = -b.close;
            b.volume = 1e9;
        }
        let other = MacroEnv::new(poisoned, MacroConfig::default()).unwrap();
        for t in env.first_index()..=cut {
            assert_eq!(env.encode_at(t, &[5000.0]).unwrap(), other.encode_at(t, &[5000.0]).unwrap(), "t = {t}");
        }
    }
}

fn action(i: u8) -> MacroAction {
    MacroAction::ALL[i as usize % 3]
}

proptest! {
    #[test]
    fn macro_accounting_and_reward_range(seed in any::<u64>(), actions in proptest::collection::vec(0u8..3, 1..80)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bars = random_bars(&mut rng, 120);
        let mut env = MacroEnv::new(bars, MacroConfig::default()).unwrap();
        env.restart();
        let (mut buys, mut sold) = (0usize, 0usize);
        let mut rewards = Vec::new();
        for &a in &actions {
            if env.is_done() {
                break;
            }
            let before = env.assets().len();
            let (r, _) = env.act(action(a)).unwrap();
            prop_assert!(r == -1.0 || r == 0.0 || r == 1.0);
            match action(a) {
                MacroAction::Buy => buys += 1,
                MacroAction::Sell => {
                    sold += before;
                    prop_assert!(env.assets().is_empty());
                }
                MacroAction::Hold => {}
            }
            prop_assert_eq!(env.assets().len(), buys - sold);
            rewards.push(r);
        }
        // replaying the recorded actions reproduces the rewards
        env.restart();
        let replay: Vec<f64> = actions.iter().take(rewards.len()).map(|&a| env.act(action(a)).unwrap().0).collect();
        prop_assert_eq!(replay, rewards);
    }
}

#[test]
fn macro_environment_trait_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut env = MacroEnv::new(random_bars(&mut rng, 60), MacroConfig::default()).unwrap();
    let s = env.reset(&mut rng).unwrap();
    assert_eq!(s.len(), env.state_dim());
    let mut steps = 0;
    loop {
        let out = env.step(2).unwrap();
        assert_eq!(out.state.len(), env.state_dim());
        steps += 1;
        if out.done {
            break;
        }
    }
    // decisions at bars 30..=58 execute at 31..=59
    assert_eq!(steps, 29);
}

#[test]
fn micro_episodes_on_synthetic_books_terminate_cleanly() {
    let market = generate(&SynthConfig { seed: 5, duration_minutes: 30, noise_sigma: 0.1, ..SynthConfig::default() })
        .unwrap();
    let timeline = market.timeline();
    let mut env = MicroEnv::new(&timeline, MicroConfig::default());
    let starts = env.start_minutes();
    assert!(!starts.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for _ in 0..60 {
        let t0 = starts[rng.random_range(0..starts.len())];
        let side = if rng.random_bool(0.5) { Side::Buy } else { Side::Sell };
        let qty = rng.random_range(0.1..4.0);
        env.reset_at(side, qty, t0).unwrap();
        let mut steps = 0;
        loop {
            let a = MicroAction::from_index(rng.random_range(0..ACTION_COUNT)).unwrap();
            let (reward, done) = env.act(a).unwrap();
            steps += 1;
            let state = env.state().unwrap();
            assert!((0.0..=60.0).contains(&state.time_remaining));
            assert_eq!(state.market.len(), 30);
            if done {
                let rec = env.record().unwrap();
                assert_eq!(state.quantity_remaining, 0.0);
                let filled: f64 = rec.fills.iter().map(|f| f.qty).sum();
                assert!((filled - qty).abs() < 1e-9);
                assert_eq!(reward, episode_reward(side, rec.market_price, &rec.fills).unwrap());
                break;
            }
            assert_eq!(reward, 0.0);
        }
        assert!(steps <= 6);
    }
}

#[test]
fn micro_training_environment_samples_valid_episodes() {
    let market = generate(&SynthConfig { seed: 6, duration_minutes: 10, ..SynthConfig::default() }).unwrap();
    let timeline = market.timeline();
    let mut env = MicroEnv::new(&timeline, MicroConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for _ in 0..10 {
        let s = env.reset(&mut rng).unwrap();
        assert_eq!(s.len(), MicroConfig::default().state_dim());
        assert!(s.iter().all(|x| x.is_finite()));
        assert_eq!(s[s.len() - 2..], [1.0, 1.0]);
        let t0 = env.state().unwrap().t0;
        assert_eq!(t0 % 60_000, 0);
        loop {
            if env.step(50).unwrap().done {
                break;
            }
        }
    }
    assert_eq!(MicroConfig::default().state_dim(), 30 * (20 * 4 + 3) + 2);
}

proptest! {
    #[test]
    fn micro_reward_is_signed_vwap_gap(pm in 100i64..1_000_000, fills in proptest::collection::vec((-500i64..500, 0.001f64..10.0), 1..12)) {
        let fills: Vec<Fill> = fills.iter().map(|&(d, q)| Fill { price: Price((pm + d).max(1)), qty: q, ts: 0 }).collect();
        let notional: f64 = fills.iter().map(|f| f.price.to_f64() * f.qty).sum();
        let vwap = notional / fills.iter().map(|f| f.qty).sum::<f64>();
        let p = Price(pm);
        prop_assert!((episode_reward(Side::Buy, p, &fills).unwrap() - (p.to_f64() - vwap)).abs() < 1e-6);
        prop_assert!((episode_reward(Side::Sell, p, &fills).unwrap() - (vwap - p.to_f64())).abs() < 1e-6);
        let at_market: Vec<Fill> = fills.iter().map(|f| Fill { price: p, ..*f }).collect();
        prop_assert_eq!(episode_reward(Side::Buy, p, &at_market).unwrap(), 0.0);
        prop_assert_eq!(episode_reward(Side::Sell, p, &at_market).unwrap(), 0.0);
    }
}
