//! Effective configuration: config file, then command-line overrides, then
//! defaults for anything still missing.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use mmrl_core::agent::TrainConfig;
use mmrl_core::config::KeyValueConfig;
use mmrl_core::indicators::IndicatorConfig;
use mmrl_core::macro_env::MacroConfig;
use mmrl_core::micro_env::{EpisodeSampler, MicroConfig};
use mmrl_core::neural::NetSpec;
use mmrl_core::synth::SynthConfig;

use crate::commands::core;

pub struct Settings {
    pub seed: u64,
    pub synth: SynthConfig,
    pub macro_cfg: MacroConfig,
    pub macro_hidden: [usize; 2],
    pub macro_dueling: bool,
    pub macro_train: TrainConfig,
    pub micro_cfg: MicroConfig,
    pub micro_hidden: [usize; 2],
    pub micro_dueling: bool,
    pub micro_train: TrainConfig,
    pub micro_sampler: EpisodeSampler,
    pub bench_qty: f64,
    pub bench_window: usize,
}

impl Settings {
    pub fn load(path: Option<&Path>, overrides: &KeyValueConfig) -> Result<Self> {
        let mut kv = match path {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                core(KeyValueConfig::parse(&text))?
            }
            None => KeyValueConfig::new(),
        };
        kv.merge(overrides);
        core(Self::from_kv(&kv))
    }

    fn from_kv(kv: &KeyValueConfig) -> Result<Self, mmrl_core::config::ConfigError> {
        let mut s = Settings {
            seed: 0,
            synth: SynthConfig::default(),
            macro_cfg: MacroConfig::default(),
            macro_hidden: [128, 64],
            macro_dueling: false,
            macro_train: TrainConfig::default(),
            micro_cfg: MicroConfig::default(),
            micro_hidden: [256, 128],
            micro_dueling: true,
            micro_train: TrainConfig::default(),
            micro_sampler: EpisodeSampler::default(),
            bench_qty: 10.0,
            bench_window: 20,
        };
        kv.set_if_present("seed", &mut s.seed)?;

        let sy = &mut s.synth;
        kv.set_if_present("synth.minutes", &mut sy.duration_minutes)?;
        kv.set_if_present("synth.base_price", &mut sy.base_price)?;
        kv.set_if_present("synth.trend", &mut sy.trend_per_minute)?;
        kv.set_if_present("synth.noise", &mut sy.noise_sigma)?;
        kv.set_if_present("synth.depth", &mut sy.book_depth)?;
        kv.set_if_present("synth.trade_rate", &mut sy.trade_rate)?;
        kv.set_if_present("synth.start_ts", &mut sy.start_ts)?;
        sy.seed = s.seed;

        let ind: &mut IndicatorConfig = &mut s.macro_cfg.indicators;
        kv.set_if_present("indicators.window_n", &mut ind.window_n)?;
        kv.set_if_present("indicators.ema_n", &mut ind.ema_n)?;
        kv.set_if_present("indicators.volatility_m", &mut ind.volatility_m)?;
        kv.set_if_present("indicators.history_h", &mut ind.history_h)?;

        kv.set_if_present("macro.buy_qty", &mut s.macro_cfg.buy_qty)?;
        kv.set_if_present("macro.hidden1", &mut s.macro_hidden[0])?;
        kv.set_if_present("macro.hidden2", &mut s.macro_hidden[1])?;
        kv.set_if_present("macro.dueling", &mut s.macro_dueling)?;
        s.macro_train.apply_config(kv, "macro.")?;

        kv.set_if_present("micro.depth", &mut s.micro_cfg.depth)?;
        kv.set_if_present("micro.window", &mut s.micro_cfg.window)?;
        kv.set_if_present("micro.hidden1", &mut s.micro_hidden[0])?;
        kv.set_if_present("micro.hidden2", &mut s.micro_hidden[1])?;
        kv.set_if_present("micro.dueling", &mut s.micro_dueling)?;
        kv.set_if_present("micro.qty", &mut s.micro_sampler.quantity)?;
        s.micro_train.apply_config(kv, "micro.")?;

        kv.set_if_present("backtest.qty", &mut s.bench_qty)?;
        kv.set_if_present("backtest.window", &mut s.bench_window)?;
        Ok(s)
    }

    /// Every effective setting, for `config.resolved`.
    pub fn resolved(&self) -> KeyValueConfig {
        let mut kv = KeyValueConfig::new();
        kv.set("seed", self.seed);
        let sy = &self.synth;
        kv.set("synth.minutes", sy.duration_minutes);
        kv.set("synth.base_price", sy.base_price);
        kv.set("synth.trend", sy.trend_per_minute);
        kv.set("synth.noise", sy.noise_sigma);
        kv.set("synth.depth", sy.book_depth);
        kv.set("synth.trade_rate", sy.trade_rate);
        kv.set("synth.start_ts", sy.start_ts);
        let ind = &self.macro_cfg.indicators;
        kv.set("indicators.window_n", ind.window_n);
        kv.set("indicators.ema_n", ind.ema_n);
        kv.set("indicators.volatility_m", ind.volatility_m);
        kv.set("indicators.history_h", ind.history_h);
        kv.set("macro.buy_qty", self.macro_cfg.buy_qty);
        kv.set("macro.hidden1", self.macro_hidden[0]);
        kv.set("macro.hidden2", self.macro_hidden[1]);
        kv.set("macro.dueling", self.macro_dueling);
        self.macro_train.write_config(&mut kv, "macro.");
        kv.set("micro.depth", self.micro_cfg.depth);
        kv.set("micro.window", self.micro_cfg.window);
        kv.set("micro.hidden1", self.micro_hidden[0]);
        kv.set("micro.hidden2", self.micro_hidden[1]);
        kv.set("micro.dueling", self.micro_dueling);
        kv.set("micro.qty", self.micro_sampler.quantity);
        self.micro_train.write_config(&mut kv, "micro.");
        kv.set("backtest.qty", self.bench_qty);
        kv.set("backtest.window", self.bench_window);
        kv
    }

    pub fn macro_spec(&self) -> NetSpec {
        NetSpec {
            input_dim: self.macro_cfg.state_dim(),
            hidden_dims: self.macro_hidden,
            output_dim: 3,
            dueling: self.macro_dueling,
            seed: self.seed,
        }
    }

    pub fn micro_spec(&self) -> NetSpec {
        NetSpec {
            input_dim: self.micro_cfg.state_dim(),
            hidden_dims: self.micro_hidden,
            output_dim: mmrl_core::micro_env::ACTION_COUNT,
            dueling: self.micro_dueling,
            seed: self.seed.wrapping_add(2),
        }
    }
}
