use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mmrl_core::agent::train;
use mmrl_core::bench::{self, PipelineConfig, PipelineStats, PnlCurve};
use mmrl_core::config::KeyValueConfig;
use mmrl_core::ingest::{
    build_minute_ticks, parse_event_stream, parse_event_stream_lenient, parse_snapshot, read_ticks_csv,
    split_train_test, write_event_stream, write_snapshot, write_ticks_csv, BookTimeline, MarketEvent, ParseReport,
    TickBar,
};
use mmrl_core::macro_env::{write_blotter_csv, MacroEnv};
use mmrl_core::micro_env::{write_episodes_jsonl, MicroEnv};
use mmrl_core::neural::QNetwork;
use mmrl_core::synth;
use mmrl_core::types::{Timestamp, MS_PER_MINUTE};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::settings::Settings;
use crate::{BacktestArgs, Cli, Command, IngestArgs, ReportArgs, Strategy, TrainMacroArgs, TrainMicroArgs};

pub const SNAPSHOT_FILE: &str = "snapshot.json";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const TICKS_FILE: &str = "ticks.csv";

/// Lifts a module error into the library error so the exit path can name
/// the module.
pub fn core<T, E: Into<mmrl_core::Error>>(r: Result<T, E>) -> Result<T> {
    r.map_err(|e| anyhow::Error::new(e.into()))
}

fn overrides(cli: &Cli) -> KeyValueConfig {
    let mut kv = KeyValueConfig::new();
    if let Some(seed) = cli.seed {
        kv.set("seed", seed);
    }
    match &cli.command {
        Command::Synth(a) => {
            let pairs = [
                ("synth.minutes", a.minutes.map(|v| v.to_string())),
                ("synth.trend", a.trend.map(|v| v.to_string())),
                ("synth.noise", a.noise.map(|v| v.to_string())),
                ("synth.base_price", a.base_price.map(|v| v.to_string())),
                ("synth.trade_rate", a.trade_rate.map(|v| v.to_string())),
                ("synth.depth", a.depth.map(|v| v.to_string())),
            ];
            for (k, v) in pairs {
                if let Some(v) = v {
                    kv.set(k, v);
                }
            }
        }
        Command::TrainMacro(a) => {
            if let Some(e) = a.epochs {
                kv.set("macro.epochs", e);
            }
        }
        Command::TrainMicro(a) => {
            if let Some(e) = a.epochs {
                kv.set("micro.epochs", e);
            }
        }
        _ => {}
    }
    kv
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Ingest(_) => "ingest",
        Command::Synth(_) => "synth",
        Command::TrainMacro(_) => "train-macro",
        Command::TrainMicro(_) => "train-micro",
        Command::Backtest(_) => "backtest",
        Command::Report(_) => "report",
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let settings = Settings::load(cli.config.as_deref(), &overrides(&cli))?;
    let out = cli.out.clone();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut resolved = settings.resolved();
    resolved.set("command", command_name(&cli.command));
    if let Command::Backtest(a) = &cli.command {
        resolved.set("backtest.strategy", a.strategy.name());
        resolved.set("backtest.split", a.split);
    }
    fs::write(out.join("config.resolved"), resolved.render())?;

    match cli.command {
        Command::Ingest(a) => ingest(&a, &out),
        Command::Synth(_) => synth_cmd(&settings, &out),
        Command::TrainMacro(a) => train_macro(&a, &settings, &out),
        Command::TrainMicro(a) => train_micro(&a, &settings, &out),
        Command::Backtest(a) => backtest(&a, &settings, &out),
        Command::Report(a) => report(&a, &out),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

/// Minute bars over the whole timeline, built from its trades.
fn timeline_bars(timeline: &BookTimeline) -> Result<Vec<TickBar>> {
    let trades: Vec<MarketEvent> = timeline.events().iter().filter(|e| e.is_trade()).cloned().collect();
    let start = timeline.start().div_euclid(MS_PER_MINUTE) * MS_PER_MINUTE;
    let end = (timeline.end().div_euclid(MS_PER_MINUTE) + 1) * MS_PER_MINUTE;
    core(build_minute_ticks(&trades, start, end))
}

fn write_timeline(timeline: &BookTimeline, dir: &Path) -> Result<()> {
    let snapshot = mmrl_core::ingest::Snapshot { ts: timeline.start(), book: timeline.initial_snapshot().clone() };
    core(write_snapshot(&snapshot, create(&dir.join(SNAPSHOT_FILE))?))?;
    core(write_event_stream(timeline.events(), create(&dir.join(EVENTS_FILE))?))?;
    let mut ticks = create(&dir.join(TICKS_FILE))?;
    core(write_ticks_csv(&timeline_bars(timeline)?, &mut ticks))?;
    ticks.flush()?;
    Ok(())
}

pub fn load_timeline(dir: &Path) -> Result<BookTimeline> {
    let snapshot = core(parse_snapshot(open(&dir.join(SNAPSHOT_FILE))?))?;
    let events = core(parse_event_stream(open(&dir.join(EVENTS_FILE))?))?;
    Ok(BookTimeline::new(snapshot, events))
}

fn ingest(args: &IngestArgs, out: &Path) -> Result<()> {
    let report = if args.lenient {
        core(parse_event_stream_lenient(open(&args.events)?))?
    } else {
        ParseReport { events: core(parse_event_stream(open(&args.events)?))?, rejected: Vec::new() }
    };
    let snapshot = core(parse_snapshot(open(&args.snapshot)?))?;
    let timeline = BookTimeline::new(snapshot, report.events);
    write_timeline(&timeline, out)?;
    let summary = serde_json::json!({
        "events": timeline.events().len(),
        "trades": timeline.events().iter().filter(|e| e.is_trade()).count(),
        "rejected": report.rejected.len(),
        "start": timeline.start(),
        "end": timeline.end(),
    });
    fs::write(out.join("ingest.json"), serde_json::to_string_pretty(&summary)?)?;
    for e in &report.rejected {
        eprintln!("rejected: {e}");
    }
    println!("ingested {} events, {} rejected", timeline.events().len(), report.rejected.len());
    Ok(())
}

fn synth_cmd(settings: &Settings, out: &Path) -> Result<()> {
    let market = core(synth::generate(&settings.synth))?;
    core(write_snapshot(&market.snapshot, create(&out.join(SNAPSHOT_FILE))?))?;
    core(write_event_stream(&market.events, create(&out.join(EVENTS_FILE))?))?;
    let mut ticks = create(&out.join(TICKS_FILE))?;
    core(write_ticks_csv(&core(market.bars())?, &mut ticks))?;
    ticks.flush()?;
    println!("generated {} events over {} minutes", market.events.len(), settings.synth.duration_minutes);
    Ok(())
}

fn train_macro_net(train_bars: Vec<TickBar>, settings: &Settings, out: &Path) -> Result<QNetwork> {
    let mut env = core(MacroEnv::new(train_bars, settings.macro_cfg))?;
    let mut net = core(QNetwork::new(settings.macro_spec()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed.wrapping_add(1));
    let log = core(train(&mut env, &mut net, &settings.macro_train, &mut rng))?;
    log.write_jsonl(create(&out.join("macro_train.jsonl"))?)?;
    fs::write(out.join("macro.ckpt.json"), net.save())?;
    Ok(net)
}

fn train_micro_net(train_timeline: &BookTimeline, settings: &Settings, out: &Path) -> Result<QNetwork> {
    let mut env = MicroEnv::new(train_timeline, settings.micro_cfg).with_sampler(settings.micro_sampler);
    let mut net = core(QNetwork::new(settings.micro_spec()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed.wrapping_add(3));
    let log = core(train(&mut env, &mut net, &settings.micro_train, &mut rng))?;
    log.write_jsonl(create(&out.join("micro_train.jsonl"))?)?;
    fs::write(out.join("micro.ckpt.json"), net.save())?;
    Ok(net)
}

fn train_macro(args: &TrainMacroArgs, settings: &Settings, out: &Path) -> Result<()> {
    let bars = core(read_ticks_csv(open(&args.ticks)?))?;
    let (train_bars, _) = core(split_train_test(&bars, args.split))?;
    train_macro_net(train_bars, settings, out)?;
    println!("macro checkpoint written to {}", out.join("macro.ckpt.json").display());
    Ok(())
}

fn train_micro(args: &TrainMicroArgs, settings: &Settings, out: &Path) -> Result<()> {
    let timeline = load_timeline(&args.timeline)?;
    let (train_tl, _) = core(split_train_test(&timeline, args.split))?;
    train_micro_net(&train_tl, settings, out)?;
    println!("micro checkpoint written to {}", out.join("micro.ckpt.json").display());
    Ok(())
}

fn load_net(path: &Path) -> Result<QNetwork> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    core(QNetwork::load(&bytes))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StatsFile {
    pub strategy: String,
    pub seed: u64,
    pub final_pnl: f64,
    pub max_drawdown: f64,
    pub step_std: f64,
    pub points: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub orders: Option<PipelineStats>,
}

fn backtest(args: &BacktestArgs, settings: &Settings, out: &Path) -> Result<()> {
    let timeline = match &args.timeline {
        Some(dir) => Some(load_timeline(dir)?),
        None => None,
    };
    let bars = match (&args.ticks, &timeline) {
        (Some(path), _) => core(read_ticks_csv(open(path)?))?,
        (None, Some(tl)) => timeline_bars(tl)?,
        (None, None) => bail!("backtest needs --ticks or --timeline"),
    };
    let (train_bars, test_bars) = core(split_train_test(&bars, args.split))?;
    let start = train_bars.len();
    if test_bars.is_empty() {
        return Err(anyhow::Error::new(mmrl_core::Error::from(mmrl_core::ingest::IngestError::BoundaryOutOfRange(
            args.split,
        ))));
    }
    let macro_net = |settings: &Settings| -> Result<QNetwork> {
        match &args.macro_ckpt {
            Some(p) => load_net(p),
            None => train_macro_net(train_bars.clone(), settings, out),
        }
    };

    let strategy = args.strategy.name();
    let mut orders = None;
    let curve: PnlCurve = match args.strategy {
        Strategy::Buyhold => core(bench::buy_and_hold(&test_bars, settings.bench_qty))?,
        Strategy::Momentum => core(bench::momentum(&test_bars, settings.bench_window))?,
        Strategy::Macro => {
            let mut net = macro_net(settings)?;
            let run = core(bench::run_macro_standalone(&mut net, &bars, &settings.macro_cfg, start))?;
            write_blotter_csv(&run.blotter, create(&out.join("blotter.csv"))?)?;
            run.curve
        }
        Strategy::Pipeline => {
            let Some(timeline) = &timeline else { bail!("the pipeline strategy needs --timeline") };
            let (train_tl, test_tl) = core(split_train_test(timeline, args.split))?;
            let mut macro_net = macro_net(settings)?;
            let mut micro_net = match &args.micro_ckpt {
                Some(p) => load_net(p)?,
                None => train_micro_net(&train_tl, settings, out)?,
            };
            let cfg = PipelineConfig { macro_cfg: settings.macro_cfg, micro_cfg: settings.micro_cfg, start };
            let report = core(bench::run_pipeline(&mut macro_net, &mut micro_net, &bars, &test_tl, &cfg))?;
            write_episodes_jsonl(&report.episodes, create(&out.join("micro_episodes.jsonl"))?)?;
            orders = Some(report.stats);
            report.curve
        }
    };

    curve.write_csv(create(&out.join(format!("pnl_{strategy}.csv")))?)?;
    let stats = StatsFile {
        strategy: strategy.to_string(),
        seed: settings.seed,
        final_pnl: curve.stats.final_pnl,
        max_drawdown: curve.stats.max_drawdown,
        step_std: curve.stats.step_std,
        points: curve.points.len(),
        orders,
    };
    fs::write(out.join(format!("stats_{strategy}.json")), serde_json::to_string_pretty(&stats)? + "\n")?;
    let mut charted = vec![(strategy, &curve)];
    let reference;
    if args.strategy != Strategy::Buyhold {
        reference = core(bench::buy_and_hold(&test_bars, settings.bench_qty))?;
        charted.push(("buyhold", &reference));
    }
    fs::write(out.join(format!("chart_{strategy}.svg")), bench::render_svg(&charted))?;
    println!("{strategy}: final PNL {:.2}", curve.stats.final_pnl);
    Ok(())
}

fn read_pnl_csv(path: &Path) -> Result<Vec<(Timestamp, f64)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let (ts, v) = line.split_once(',').with_context(|| format!("{}:{}: malformed row", path.display(), i + 1))?;
        points.push((ts.trim().parse()?, v.trim().parse()?));
    }
    Ok(points)
}

/// Directories at most one level below `root` (including `root`) that hold
/// backtest stats, in path order.
fn stats_files(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = vec![root.to_path_buf()];
    let mut children: Vec<PathBuf> =
        fs::read_dir(root)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
    children.sort();
    dirs.extend(children);
    let mut files = Vec::new();
    for dir in dirs {
        let mut found: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("stats_") && n.ends_with(".json"))
            })
            .collect();
        found.sort();
        files.extend(found);
    }
    Ok(files)
}

fn report(args: &ReportArgs, out: &Path) -> Result<()> {
    let files = stats_files(&args.runs)?;
    if files.is_empty() {
        bail!("no stats_*.json files under {}", args.runs.display());
    }
    let mut rows = String::from("run,strategy,final_pnl,max_drawdown,step_std,limit_fraction\n");
    let mut curves: Vec<(String, PnlCurve)> = Vec::new();
    println!("{:<24} {:<10} {:>12} {:>12} {:>10} {:>8}", "run", "strategy", "final_pnl", "drawdown", "step_std", "limit%");
    for file in &files {
        let stats: StatsFile = serde_json::from_reader(open(file)?).with_context(|| format!("parsing {}", file.display()))?;
        let dir = file.parent().unwrap_or(Path::new("."));
        let run = dir.strip_prefix(&args.runs).ok().and_then(|p| p.to_str()).filter(|s| !s.is_empty()).unwrap_or(".");
        let fraction = stats.orders.and_then(|o| o.limit_fraction);
        let fraction_cell = fraction.map_or(String::new(), |f| f.to_string());
        rows.push_str(&format!(
            "{run},{},{},{},{},{fraction_cell}\n",
            stats.strategy, stats.final_pnl, stats.max_drawdown, stats.step_std
        ));
        println!(
            "{:<24} {:<10} {:>12.2} {:>12.2} {:>10.4} {:>8}",
            run,
            stats.strategy,
            stats.final_pnl,
            stats.max_drawdown,
            stats.step_std,
            fraction.map_or("-".to_string(), |f| format!("{:.1}", f * 100.0))
        );
        let pnl = dir.join(format!("pnl_{}.csv", stats.strategy));
        if pnl.exists() {
            let curve = core(PnlCurve::new(read_pnl_csv(&pnl)?))?;
            curves.push((format!("{run}/{}", stats.strategy), curve));
        }
    }
    fs::write(out.join("report.csv"), rows)?;
    let charted: Vec<(&str, &PnlCurve)> = curves.iter().map(|(n, c)| (n.as_str(), c)).collect();
    fs::write(out.join("report.svg"), bench::render_svg(&charted))?;
    Ok(())
}
