//! Command-line front end over the library: cleaning, forecasting,
//! disaggregation, planning, simulation and multi-day comparison.
//!
//! Exit codes: 0 success, 2 bad input, 3 internal invariant violation.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

use solarsched::devices::{default_fleet, Fleet};
use solarsched::disaggregation::{
    aggregate_median, base_load, calm_period_length, calm_windows, estimate_event, EdgeConfig,
    SwitchEvent, SwitchKind,
};
use solarsched::economics::{daily_balance, NetSeries, Tariff};
use solarsched::forecast::{clear_sky_forecast, HISTORY_DAYS};
use solarsched::harness::{
    emit_report, export_trace_csv, generate_synthetic_day, ingest_dataset, run_scenario,
    scenario_resolution, DeviceTruth, ReportFormat, Scenario, SynthParams,
};
use solarsched::scheduler::{
    default_bruteforce_starts, plan_smart, resolution_metrics, run_adaptive, run_bruteforce,
    run_smart, ControllerConfig, Mode, SimulationTrace,
};
use solarsched::timeseries::{fill_gaps, read_day_csv, write_day_csv, DaySeries};

#[derive(Parser)]
#[command(name = "solarsched", version, about = "PV self-consumption scheduling toolkit")]
struct Cli {
    /// Tariff JSON file ({"sell_eur_per_kwh":..,"buy_eur_per_kwh":..,"max_sell_w":..}).
    #[arg(long, global = true)]
    tariff: Option<PathBuf>,
    /// Fleet JSON file (array of device profiles).
    #[arg(long, global = true)]
    fleet: Option<PathBuf>,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct OutArg {
    /// Output file; stdout when omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Gap-fill a raw day CSV (t,power_w) into a full 86400-second series.
    Clean {
        input: PathBuf,
        /// Civil date of the day.
        #[arg(long)]
        date: NaiveDate,
        /// Cleaned previous-day CSV, used to substitute gaps of an hour or more.
        #[arg(long)]
        prev: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Clear-sky production forecast from the last seven day CSVs, in order.
    Forecast {
        #[arg(num_args = 7)]
        history: Vec<PathBuf>,
        /// Date of the first history day; days are assumed consecutive.
        #[arg(long)]
        start_date: NaiveDate,
        #[command(flatten)]
        out: OutArg,
    },
    /// Estimate per-device power from a load CSV and a switch-event log.
    Estimate {
        load: PathBuf,
        /// Event CSV with header device,kind,t.
        #[arg(long)]
        events: PathBuf,
        #[arg(long, default_value = "1970-01-01")]
        date: NaiveDate,
        #[command(flatten)]
        out: OutArg,
    },
    /// Estimate base load from a day's load CSV and its switch-event log.
    Baseload {
        load: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[arg(long, default_value = "1970-01-01")]
        date: NaiveDate,
        /// Also report calm windows of the device-count-derived length.
        #[arg(long)]
        calm: bool,
        #[command(flatten)]
        out: OutArg,
    },
    /// Build a smart day plan from a forecast CSV.
    Plan {
        forecast: PathBuf,
        #[arg(long, default_value = "1970-01-01")]
        date: NaiveDate,
        #[arg(long, default_value_t = 0.0)]
        base_w: f64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Simulate one day of control against an actual production CSV.
    Simulate {
        production: PathBuf,
        #[arg(long, value_enum)]
        mode: CliMode,
        /// Forecast CSV; required in smart mode.
        #[arg(long)]
        forecast: Option<PathBuf>,
        #[arg(long, default_value = "1970-01-01")]
        date: NaiveDate,
        #[arg(long, default_value_t = 0.0)]
        base_w: f64,
        #[arg(long, default_value_t = 1)]
        interval: usize,
        #[arg(long, default_value_t = 0.0)]
        margin_w: f64,
        /// Trace CSV path (t,production_w,controllable_w,base_w,net_w).
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Sweep decision intervals with a fixed-threshold controller.
    Resolution {
        production: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,300,900,3600")]
        intervals: Vec<usize>,
        #[arg(long, default_value_t = 4000.0)]
        threshold_w: f64,
        #[arg(long, default_value = "1970-01-01")]
        date: NaiveDate,
        #[arg(long, default_value_t = 0.0)]
        base_w: f64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Run a multi-day strategy comparison described by a scenario JSON.
    Compare {
        scenario: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Generate a synthetic dataset of paired pv/load day CSVs.
    Synth {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        days: usize,
        #[arg(long, default_value = "2023-01-01")]
        start_date: NaiveDate,
        #[arg(long, default_value_t = 9000.0)]
        peak_w: f64,
        #[arg(long, default_value_t = 350.0)]
        base_w: f64,
        #[arg(long, default_value_t = 50.0)]
        noise_w: f64,
        /// Output directory.
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum CliMode {
    Smart,
    Adaptive,
    Bruteforce,
}

impl From<CliMode> for Mode {
    fn from(m: CliMode) -> Self {
        match m {
            CliMode::Smart => Mode::Smart,
            CliMode::Adaptive => Mode::Adaptive,
            CliMode::Bruteforce => Mode::Bruteforce,
        }
    }
}

/// On-disk description of a comparison scenario.
#[derive(serde::Deserialize)]
struct ScenarioSpec {
    dataset_dir: PathBuf,
    #[serde(default)]
    base_load_w: f64,
    strategies: Vec<Mode>,
    #[serde(default = "one")]
    adaptive_interval_s: usize,
    #[serde(default)]
    sufficiency_margin_w: f64,
    #[serde(default)]
    resolution_intervals: Vec<usize>,
    #[serde(default = "four_kw")]
    resolution_threshold_w: f64,
}

fn one() -> usize {
    1
}

fn four_kw() -> f64 {
    4000.0
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(_) => {
            eprintln!("error: internal invariant violated");
            ExitCode::from(3)
        }
    }
}

fn load_tariff(path: &Option<PathBuf>) -> Result<Tariff<f64>> {
    match path {
        None => Ok(Tariff::default()),
        Some(p) => {
            let f = File::open(p).with_context(|| format!("opening tariff {}", p.display()))?;
            serde_json::from_reader(f).with_context(|| format!("parsing tariff {}", p.display()))
        }
    }
}

fn load_fleet(path: &Option<PathBuf>) -> Result<Fleet<f64>> {
    match path {
        None => Ok(default_fleet()),
        Some(p) => {
            let f = File::open(p).with_context(|| format!("opening fleet {}", p.display()))?;
            serde_json::from_reader(f).with_context(|| format!("parsing fleet {}", p.display()))
        }
    }
}

fn load_day(path: &Path, date: NaiveDate, prev: Option<&DaySeries<f64>>) -> Result<DaySeries<f64>> {
    let raw = read_day_csv::<f64>(path)?;
    let (day, _) = fill_gaps(date, &raw, prev)?;
    Ok(day)
}

fn read_events(path: &Path) -> Result<Vec<SwitchEvent>> {
    let mut rdr = csv::Reader::from_path(path)
        .with_context(|| format!("opening events {}", path.display()))?;
    let mut events = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: line {}", path.display(), i + 2))?;
        let device = rec
            .get(0)
            .ok_or_else(|| anyhow!("{}: missing device column", path.display()))?
            .to_string();
        let kind = match rec.get(1) {
            Some("on") | Some("ON") | Some("On") => SwitchKind::On,
            Some("off") | Some("OFF") | Some("Off") => SwitchKind::Off,
            other => bail!("{}: bad kind {:?}", path.display(), other),
        };
        let t: usize = rec
            .get(2)
            .ok_or_else(|| anyhow!("{}: missing t column", path.display()))?
            .parse()
            .with_context(|| format!("{}: bad t on line {}", path.display(), i + 2))?;
        events.push(SwitchEvent { device, kind, t });
    }
    Ok(events)
}

fn write_out(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(p) => {
            let mut f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
            f.write_all(text.as_bytes())
                .with_context(|| format!("writing {}", p.display()))
        }
    }
}

fn emit_series(series: &DaySeries<f64>, format: Format, out: &Option<PathBuf>) -> Result<()> {
    match (format, out) {
        (Format::Csv, Some(p)) => {
            write_day_csv(series, p)?;
            Ok(())
        }
        (Format::Csv, None) => {
            let mut text = String::from("t,power_w\n");
            for (t, v) in series.values().iter().enumerate() {
                text.push_str(&format!("{t},{v}\n"));
            }
            write_out(&None, &text)
        }
        (Format::Json, _) => {
            let text = serde_json::to_string_pretty(series)?;
            write_out(out, &text)
        }
    }
}

fn emit_json<T: serde::Serialize>(value: &T, out: &Option<PathBuf>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_out(out, &text)
}

/// Derive per-second ON flags per device from an alternating event log.
fn on_mask_from_events(events: &[SwitchEvent]) -> Vec<bool> {
    let mut mask = vec![false; solarsched::SECONDS_PER_DAY];
    let mut per_device: HashMap<&str, Vec<&SwitchEvent>> = HashMap::new();
    for e in events {
        per_device.entry(e.device.as_str()).or_default().push(e);
    }
    for evs in per_device.values_mut() {
        evs.sort_by_key(|e| e.t);
        let mut on_since: Option<usize> = None;
        for e in evs.iter() {
            match e.kind {
                SwitchKind::On => on_since = Some(e.t),
                SwitchKind::Off => {
                    if let Some(t0) = on_since.take() {
                        let end = e.t.min(mask.len());
                        for slot in mask.iter_mut().take(end).skip(t0) {
                            *slot = true;
                        }
                    }
                }
            }
        }
        if let Some(t0) = on_since {
            for slot in mask.iter_mut().skip(t0) {
                *slot = true;
            }
        }
    }
    mask
}

#[allow(clippy::too_many_arguments)]
fn simulate_trace(
    mode: Mode,
    production: &DaySeries<f64>,
    forecast: Option<&DaySeries<f64>>,
    base_w: f64,
    fleet: &Fleet<f64>,
    tariff: &Tariff<f64>,
    interval: usize,
    margin_w: f64,
) -> Result<SimulationTrace<f64>> {
    Ok(match mode {
        Mode::Smart => {
            let forecast = forecast.ok_or_else(|| anyhow!("smart mode needs --forecast"))?;
            run_smart(forecast, production, base_w, fleet, tariff, margin_w).trace
        }
        Mode::Adaptive => {
            let mut cfg = ControllerConfig::adaptive(interval);
            cfg.sufficiency_margin_w = margin_w;
            run_adaptive(production, base_w, fleet, &cfg)?
        }
        Mode::Bruteforce => run_bruteforce(fleet, &default_bruteforce_starts())?,
    })
}

fn run(cli: Cli) -> Result<()> {
    let tariff = load_tariff(&cli.tariff)?;
    let fleet = load_fleet(&cli.fleet)?;
    match cli.command {
        Command::Clean {
            input,
            date,
            prev,
            out,
        } => {
            let prev_day = prev
                .map(|p| load_day(&p, date.pred_opt().unwrap_or(date), None))
                .transpose()?;
            let raw = read_day_csv::<f64>(&input)?;
            let (day, report) = fill_gaps(date, &raw, prev_day.as_ref())?;
            emit_series(&day, cli.format, &out.out)?;
            eprintln!(
                "interpolated runs: {}, substituted hours: {:?}",
                report.interpolated_runs.len(),
                report.substituted_hours
            );
        }
        Command::Forecast {
            history,
            start_date,
            out,
        } => {
            let mut days = Vec::with_capacity(HISTORY_DAYS);
            for (i, path) in history.iter().enumerate() {
                let date = start_date + chrono::Days::new(i as u64);
                let prev = days.last();
                days.push(load_day(path, date, prev)?);
            }
            let forecast = clear_sky_forecast(&days)?;
            emit_series(&forecast, cli.format, &out.out)?;
        }
        Command::Estimate {
            load,
            events,
            date,
            out,
        } => {
            let day = load_day(&load, date, None)?;
            let events = read_events(&events)?;
            let cfg = EdgeConfig::default();
            let mut estimates = Vec::new();
            for e in &events {
                estimates.push(estimate_event(&day, e, &cfg)?);
            }
            let mut devices: Vec<&str> = events.iter().map(|e| e.device.as_str()).collect();
            devices.sort_unstable();
            devices.dedup();
            let mut per_device = Vec::new();
            for d in devices {
                per_device.push(aggregate_median(&estimates, d)?);
            }
            if cli.format == Format::Csv {
                let mut text = String::from("device,watts,n_events\n");
                for d in &per_device {
                    text.push_str(&format!("{},{},{}\n", d.device, d.watts, d.n_events));
                }
                write_out(&out.out, &text)?;
            } else {
                emit_json(&per_device, &out.out)?;
            }
        }
        Command::Baseload {
            load,
            events,
            date,
            calm,
            out,
        } => {
            let day = load_day(&load, date, None)?;
            let events = read_events(&events)?;
            let on = on_mask_from_events(&events);
            let mask: Vec<bool> = on.iter().map(|&b| !b).collect();
            let estimate = base_load(std::slice::from_ref(&day), std::slice::from_ref(&mask))?;
            if calm {
                let len = calm_period_length(fleet.len());
                let windows = calm_windows(&day, len, 0.10)?;
                emit_json(&serde_json::json!({ "base": estimate, "calm": windows }), &out.out)?;
            } else {
                emit_json(&estimate, &out.out)?;
            }
        }
        Command::Plan {
            forecast,
            date,
            base_w,
            out,
        } => {
            let day = load_day(&forecast, date, None)?;
            let plan = plan_smart(&day, base_w, &fleet, &tariff);
            emit_json(&plan, &out.out)?;
        }
        Command::Simulate {
            production,
            mode,
            forecast,
            date,
            base_w,
            interval,
            margin_w,
            trace,
            out,
        } => {
            let production = load_day(&production, date, None)?;
            let forecast = forecast.map(|p| load_day(&p, date, None)).transpose()?;
            let result = simulate_trace(
                mode.into(),
                &production,
                forecast.as_ref(),
                base_w,
                &fleet,
                &tariff,
                interval,
                margin_w,
            )?;
            if let Some(path) = trace {
                export_trace_csv(&production, base_w, &result, &path)?;
            }
            let consumption: Vec<f64> =
                result.controllable_w.iter().map(|c| c + base_w).collect();
            let net = NetSeries::from_production_consumption(&production, &consumption)?;
            let balance = daily_balance(&net, &tariff);
            emit_json(
                &serde_json::json!({ "balance": balance, "events": result.events }),
                &out.out,
            )?;
        }
        Command::Resolution {
            production,
            intervals,
            threshold_w,
            date,
            base_w,
            out,
        } => {
            let production = load_day(&production, date, None)?;
            let rows = resolution_metrics(&production, base_w, &fleet, &intervals, threshold_w)?;
            if cli.format == Format::Csv {
                let mut text =
                    String::from("interval_s,pv_energy_used_ws,grid_energy_ws,utilization_vs_1s\n");
                for r in &rows {
                    text.push_str(&format!(
                        "{},{},{},{}\n",
                        r.interval_s, r.pv_energy_used_ws, r.grid_energy_ws, r.utilization_vs_1s
                    ));
                }
                write_out(&out.out, &text)?;
            } else {
                emit_json(&rows, &out.out)?;
            }
        }
        Command::Compare { scenario, out } => {
            let f = File::open(&scenario)
                .with_context(|| format!("opening scenario {}", scenario.display()))?;
            let spec: ScenarioSpec = serde_json::from_reader(f)
                .with_context(|| format!("parsing scenario {}", scenario.display()))?;
            let ingested = ingest_dataset::<f64>(&spec.dataset_dir)?;
            for w in &ingested.warnings {
                eprintln!("warning: {w}");
            }
            let scenario = Scenario {
                days: ingested
                    .records
                    .into_iter()
                    .map(|r| (r.production, r.load))
                    .collect(),
                fleet,
                tariff,
                base_load_w: spec.base_load_w,
                strategies: spec.strategies,
                adaptive_interval_s: spec.adaptive_interval_s,
                sufficiency_margin_w: spec.sufficiency_margin_w,
            };
            let mut report = run_scenario(&scenario)?;
            if !spec.resolution_intervals.is_empty() {
                report.resolution = Some(scenario_resolution(
                    &scenario,
                    &spec.resolution_intervals,
                    spec.resolution_threshold_w,
                )?);
            }
            match (cli.format, &out.out) {
                (Format::Json, _) => emit_json(&report, &out.out)?,
                (Format::Csv, Some(p)) => emit_report(&report, ReportFormat::Csv, p)?,
                (Format::Csv, None) => bail!("csv comparison output needs --out"),
            }
        }
        Command::Synth {
            seed,
            days,
            start_date,
            peak_w,
            base_w,
            noise_w,
            out,
        } => {
            std::fs::create_dir_all(&out)
                .with_context(|| format!("creating {}", out.display()))?;
            for i in 0..days {
                let date = start_date + chrono::Days::new(i as u64);
                let mut params = SynthParams::clear_day(date, peak_w, seed.wrapping_add(i as u64));
                params.base_load_w = base_w;
                params.noise_std_w = noise_w;
                // mild day-to-day variation plus one cloudy afternoon per week
                params.peak_w = peak_w * (1.0 - 0.03 * ((i % 5) as f64));
                if i % 7 == 3 {
                    params.cloud_dips = vec![(45_000, 55_000, 0.6)];
                }
                params.device_truth = vec![DeviceTruth {
                    name: "hot_water".into(),
                    power_w: 2000.0,
                    on_ramp_s: 10,
                    events: vec![
                        SwitchEvent {
                            device: "hot_water".into(),
                            kind: SwitchKind::On,
                            t: 70_000,
                        },
                        SwitchEvent {
                            device: "hot_water".into(),
                            kind: SwitchKind::Off,
                            t: 79_000,
                        },
                    ],
                }];
                let day = generate_synthetic_day(&params)?;
                write_day_csv(&day.production, &out.join(format!("{date}_pv.csv")))?;
                write_day_csv(&day.meter, &out.join(format!("{date}_load.csv")))?;
            }
            eprintln!("wrote {days} day pairs to {}", out.display());
        }
    }
    Ok(())
}
