//! Synthetic data generation, dataset ingestion, scenario orchestration and
//! report emission.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::disaggregation::{SwitchEvent, SwitchKind};
use crate::devices::Fleet;
use crate::economics::{daily_balance, DailyBalance, NetSeries, Tariff};
use crate::forecast::{clear_sky_forecast, ForecastError, HISTORY_DAYS};
use crate::num::{lit, Scalar};
use crate::scheduler::{
    default_bruteforce_starts, resolution_metrics, run_adaptive, run_bruteforce, run_smart,
    ControllerConfig, Mode, ResolutionRow, SchedulerError, SimulationTrace,
};
use crate::timeseries::{fill_gaps, read_day_csv, CsvError, DaySeries, GapReport, TimeseriesError};
use crate::SECONDS_PER_DAY;

/// Planted ground truth for one synthetic device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceTruth<F> {
    pub name: String,
    pub power_w: F,
    /// Linear power ramp after switch-on, at most 60 s.
    pub on_ramp_s: usize,
    pub events: Vec<SwitchEvent>,
}

/// Parameters of one synthetic day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams<F> {
    pub date: NaiveDate,
    pub peak_w: F,
    pub sunrise_s: usize,
    pub sunset_s: usize,
    /// (start, end, depth fraction) multiplicative production dips.
    pub cloud_dips: Vec<(usize, usize, f64)>,
    pub base_load_w: F,
    pub noise_std_w: F,
    /// Meter noise is resampled every this many seconds and held, like the
    /// slowly drifting residual load of a real household.
    pub noise_hold_s: usize,
    pub device_truth: Vec<DeviceTruth<F>>,
    pub seed: u64,
}

impl<F: Scalar> SynthParams<F> {
    pub fn clear_day(date: NaiveDate, peak_w: F, seed: u64) -> Self {
        Self {
            date,
            peak_w,
            sunrise_s: 6 * 3600,
            sunset_s: 20 * 3600,
            cloud_dips: Vec::new(),
            base_load_w: F::zero(),
            noise_std_w: F::zero(),
            noise_hold_s: 30,
            device_truth: Vec::new(),
            seed,
        }
    }
}

/// Output of the generator: the PV curve, the whole-home meter and the
/// seconds where every planted device is off.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDay<F> {
    pub production: DaySeries<F>,
    pub meter: DaySeries<F>,
    pub all_off_mask: Vec<bool>,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid synthetic parameters: {0}")]
    InvalidParams(String),
    #[error("no day files found in {0}")]
    NoFilesFound(PathBuf),
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error(transparent)]
    Series(#[from] TimeseriesError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error("scenario needs at least {HISTORY_DAYS} history days plus one target, got {0}")]
    TooFewDays(usize),
    #[error("io failure on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Deterministic synthetic day: powered-sine PV envelope with multiplicative
/// cloud dips, and a meter made of base load, ramped device rectangles and
/// held noise.
pub fn generate_synthetic_day<F: Scalar>(
    params: &SynthParams<F>,
) -> Result<SynthDay<F>, HarnessError> {
    if params.sunrise_s >= params.sunset_s || params.sunset_s > SECONDS_PER_DAY {
        return Err(HarnessError::InvalidParams(
            "sunrise must precede sunset within the day".into(),
        ));
    }
    for &(s, e, depth) in &params.cloud_dips {
        if s >= e || e > SECONDS_PER_DAY || !(0.0..=1.0).contains(&depth) {
            return Err(HarnessError::InvalidParams(format!(
                "bad cloud dip ({s}, {e}, {depth})"
            )));
        }
    }
    if params.noise_std_w < F::zero() {
        return Err(HarnessError::InvalidParams("negative noise std".into()));
    }
    for d in &params.device_truth {
        if d.on_ramp_s > 60 {
            return Err(HarnessError::InvalidParams(format!(
                "device {}: on_ramp_s > 60",
                d.name
            )));
        }
    }

    let span = (params.sunset_s - params.sunrise_s) as f64;
    let peak = params.peak_w.to_f64().expect("finite peak");
    let mut production = Vec::with_capacity(SECONDS_PER_DAY);
    for t in 0..SECONDS_PER_DAY {
        let frac = (t as f64 - params.sunrise_s as f64) / span;
        let mut v = peak * (std::f64::consts::PI * frac).sin().max(0.0).powf(1.2);
        if t < params.sunrise_s || t >= params.sunset_s {
            v = 0.0;
        }
        for &(s, e, depth) in &params.cloud_dips {
            if (s..e).contains(&t) {
                v *= 1.0 - depth;
            }
        }
        production.push(lit::<F>(v));
    }

    let mut device_load = vec![0.0f64; SECONDS_PER_DAY];
    let mut any_on = vec![false; SECONDS_PER_DAY];
    for dev in &params.device_truth {
        let power = dev.power_w.to_f64().expect("finite power");
        // the logged switch time precedes the physical edge: power is still
        // zero at the ON second, ramps up right after, and is held through
        // the OFF second
        let ramp = dev.on_ramp_s.max(1) as f64;
        let mut apply = |t0: usize, t1: usize| {
            for t in t0..=t1.min(SECONDS_PER_DAY - 1) {
                let level = ((t - t0) as f64 / ramp).min(1.0);
                device_load[t] += power * level;
                any_on[t] = true;
            }
        };
        let mut events = dev.events.clone();
        events.sort_by_key(|e| e.t);
        let mut on_since: Option<usize> = None;
        for ev in &events {
            match ev.kind {
                SwitchKind::On => {
                    if on_since.is_none() {
                        on_since = Some(ev.t);
                    }
                }
                SwitchKind::Off => {
                    if let Some(t0) = on_since.take() {
                        apply(t0, ev.t);
                    }
                }
            }
        }
        if let Some(t0) = on_since {
            apply(t0, SECONDS_PER_DAY - 1);
        }
    }

    let base = params.base_load_w.to_f64().expect("finite base");
    let sigma = params.noise_std_w.to_f64().expect("finite noise");
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut meter = Vec::with_capacity(SECONDS_PER_DAY);
    let hold = params.noise_hold_s.max(1);
    let mut held_noise = 0.0f64;
    for (t, &dl) in device_load.iter().enumerate() {
        if sigma > 0.0 && t % hold == 0 {
            held_noise = Normal::new(0.0, sigma).unwrap().sample(&mut rng);
        }
        let v = (base + dl + held_noise).max(0.0);
        meter.push(lit::<F>(v));
    }

    Ok(SynthDay {
        production: DaySeries::new(params.date, production)?,
        meter: DaySeries::new(params.date, meter)?,
        all_off_mask: any_on.iter().map(|&b| !b).collect(),
    })
}

/// One cleaned day of paired production and load.
#[derive(Debug, Clone, PartialEq)]
pub struct DayRecord<F> {
    pub date: NaiveDate,
    pub production: DaySeries<F>,
    pub load: DaySeries<F>,
    pub production_gaps: GapReport,
    pub load_gaps: GapReport,
}

/// Ingestion output: cleaned paired days sorted by date, plus warnings for
/// skipped days.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestResult<F> {
    pub records: Vec<DayRecord<F>>,
    pub warnings: Vec<String>,
}

/// Load a directory of `YYYY-MM-DD_pv.csv` / `YYYY-MM-DD_load.csv` pairs,
/// gap-fill each stream chained on its previous cleaned day, and skip
/// incomplete days with a warning.
pub fn ingest_dataset<F: Scalar>(dir: &Path) -> Result<IngestResult<F>, HarnessError> {
    let mut by_date: BTreeMap<NaiveDate, (Option<PathBuf>, Option<PathBuf>)> = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let Some(stem) = name.strip_suffix(".csv") else {
            continue;
        };
        let (date_part, kind) = if let Some(d) = stem.strip_suffix("_pv") {
            (d, 0)
        } else if let Some(d) = stem.strip_suffix("_load") {
            (d, 1)
        } else {
            continue;
        };
        let Ok(date) = NaiveDate::parse_from_str(date_part, "%Y-%m-%d") else {
            continue;
        };
        let slot = by_date.entry(date).or_default();
        if kind == 0 {
            slot.0 = Some(entry.path());
        } else {
            slot.1 = Some(entry.path());
        }
    }
    if by_date.is_empty() {
        return Err(HarnessError::NoFilesFound(dir.to_path_buf()));
    }

    let mut records: Vec<DayRecord<F>> = Vec::new();
    let mut warnings = Vec::new();
    let mut prev_pv: Option<DaySeries<F>> = None;
    let mut prev_load: Option<DaySeries<F>> = None;
    for (date, (pv_path, load_path)) in by_date {
        let (Some(pv_path), Some(load_path)) = (&pv_path, &load_path) else {
            warnings.push(format!("{date}: missing pv or load file, day skipped"));
            continue;
        };
        let raw_pv = read_day_csv::<F>(pv_path)?;
        let raw_load = read_day_csv::<F>(load_path)?;
        let pv = fill_gaps(date, &raw_pv, prev_pv.as_ref());
        let load = fill_gaps(date, &raw_load, prev_load.as_ref());
        match (pv, load) {
            (Ok((pv, pv_gaps)), Ok((load, load_gaps))) => {
                prev_pv = Some(pv.clone());
                prev_load = Some(load.clone());
                records.push(DayRecord {
                    date,
                    production: pv,
                    load,
                    production_gaps: pv_gaps,
                    load_gaps,
                });
            }
            (pv, load) => {
                let err = pv.err().or_else(|| load.err()).expect("one side failed");
                warnings.push(format!("{date}: {err}, day skipped"));
            }
        }
    }
    Ok(IngestResult { records, warnings })
}

/// A multi-day comparison scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<F> {
    /// Paired (production, meter load) days, sorted by date; the first seven
    /// serve as forecast history.
    pub days: Vec<(DaySeries<F>, DaySeries<F>)>,
    pub fleet: Fleet<F>,
    pub tariff: Tariff<F>,
    pub base_load_w: F,
    pub strategies: Vec<Mode>,
    /// Decision interval of the adaptive strategy (the smart strategy always
    /// decides per second).
    pub adaptive_interval_s: usize,
    pub sufficiency_margin_w: F,
}

/// Daily and cumulative balances of one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyColumn<F> {
    pub strategy: Mode,
    pub daily: Vec<DailyBalance<F>>,
    pub cumulative: Vec<F>,
}

/// Final cumulative-balance difference between two strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseDiff<F> {
    pub left: Mode,
    pub right: Mode,
    pub per_day_balance_diff: Vec<F>,
    pub cumulative_diff: F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport<F> {
    pub dates: Vec<NaiveDate>,
    pub columns: Vec<StrategyColumn<F>>,
    pub pairwise: Vec<PairwiseDiff<F>>,
    pub resolution: Option<Vec<ResolutionRow<F>>>,
}

fn strategy_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Smart => "smart",
        Mode::Adaptive => "adaptive",
        Mode::Bruteforce => "bruteforce",
    }
}

fn trace_balance<F: Scalar>(
    production: &DaySeries<F>,
    base_load_w: F,
    trace: &SimulationTrace<F>,
    tariff: &Tariff<F>,
) -> DailyBalance<F> {
    let consumption: Vec<F> = trace
        .controllable_w
        .iter()
        .map(|&c| c + base_load_w)
        .collect();
    let net = NetSeries::from_production_consumption(production, &consumption)
        .expect("trace and production are full length");
    daily_balance(&net, tariff)
}

/// Run every configured strategy over each target day, forecasting from the
/// trailing seven days of production.
pub fn run_scenario<F: Scalar>(scenario: &Scenario<F>) -> Result<ComparisonReport<F>, HarnessError> {
    if scenario.days.len() <= HISTORY_DAYS {
        return Err(HarnessError::TooFewDays(scenario.days.len()));
    }
    let mut dates = Vec::new();
    let mut columns: Vec<StrategyColumn<F>> = scenario
        .strategies
        .iter()
        .map(|&strategy| StrategyColumn {
            strategy,
            daily: Vec::new(),
            cumulative: Vec::new(),
        })
        .collect();

    for d in HISTORY_DAYS..scenario.days.len() {
        let (production, _) = &scenario.days[d];
        dates.push(production.date());
        let history: Vec<DaySeries<F>> = scenario.days[d - HISTORY_DAYS..d]
            .iter()
            .map(|(p, _)| p.clone())
            .collect();
        let forecast = clear_sky_forecast(&history)?;

        for col in columns.iter_mut() {
            let trace = match col.strategy {
                Mode::Smart => {
                    run_smart(
                        &forecast,
                        production,
                        scenario.base_load_w,
                        &scenario.fleet,
                        &scenario.tariff,
                        scenario.sufficiency_margin_w,
                    )
                    .trace
                }
                Mode::Adaptive => run_adaptive(
                    production,
                    scenario.base_load_w,
                    &scenario.fleet,
                    &ControllerConfig::adaptive(scenario.adaptive_interval_s),
                )?,
                Mode::Bruteforce => {
                    run_bruteforce(&scenario.fleet, &default_bruteforce_starts())?
                }
            };
            let balance =
                trace_balance(production, scenario.base_load_w, &trace, &scenario.tariff);
            let prev = col.cumulative.last().copied().unwrap_or_else(F::zero);
            col.daily.push(balance);
            col.cumulative.push(prev + balance.balance_eur);
        }
    }

    let mut pairwise = Vec::new();
    for i in 0..columns.len() {
        for j in i + 1..columns.len() {
            let per_day: Vec<F> = columns[i]
                .daily
                .iter()
                .zip(&columns[j].daily)
                .map(|(a, b)| a.balance_eur - b.balance_eur)
                .collect();
            pairwise.push(PairwiseDiff {
                left: columns[i].strategy,
                right: columns[j].strategy,
                cumulative_diff: per_day.iter().cloned().sum(),
                per_day_balance_diff: per_day,
            });
        }
    }

    Ok(ComparisonReport {
        dates,
        columns,
        pairwise,
        resolution: None,
    })
}

/// Attach a decision-resolution sweep (fixed threshold, adaptive mode) over
/// the scenario's target days, averaging per-interval utilization.
pub fn scenario_resolution<F: Scalar>(
    scenario: &Scenario<F>,
    intervals: &[usize],
    threshold_w: F,
) -> Result<Vec<ResolutionRow<F>>, HarnessError> {
    if scenario.days.len() <= HISTORY_DAYS {
        return Err(HarnessError::TooFewDays(scenario.days.len()));
    }
    let mut acc: Vec<ResolutionRow<F>> = intervals
        .iter()
        .map(|&interval_s| ResolutionRow {
            interval_s,
            pv_energy_used_ws: F::zero(),
            grid_energy_ws: F::zero(),
            utilization_vs_1s: F::zero(),
        })
        .collect();
    let n = lit::<F>((scenario.days.len() - HISTORY_DAYS) as f64);
    for d in HISTORY_DAYS..scenario.days.len() {
        let (production, _) = &scenario.days[d];
        let rows = resolution_metrics(
            production,
            scenario.base_load_w,
            &scenario.fleet,
            intervals,
            threshold_w,
        )?;
        for (a, r) in acc.iter_mut().zip(rows) {
            a.pv_energy_used_ws += r.pv_energy_used_ws;
            a.grid_energy_ws += r.grid_energy_ws;
            a.utilization_vs_1s += r.utilization_vs_1s / n;
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

/// Write the comparison report.
///
/// CSV output is one row per (date, strategy) with a running cumulative
/// balance; figure-style plot data is written next to the main file.
pub fn emit_report<F: Scalar + Serialize>(
    report: &ComparisonReport<F>,
    format: ReportFormat,
    path: &Path,
) -> Result<(), HarnessError> {
    match format {
        ReportFormat::Json => {
            let f = File::create(path).map_err(|e| io_err(path, e))?;
            serde_json::to_writer_pretty(f, report)
                .map_err(|e| io_err(path, std::io::Error::other(e)))?;
        }
        ReportFormat::Csv => {
            let mut out = String::new();
            out.push_str("date,strategy,sales_eur,purchases_eur,balance_eur,cum_balance_eur\n");
            for col in &report.columns {
                for ((date, day), cum) in
                    report.dates.iter().zip(&col.daily).zip(&col.cumulative)
                {
                    out.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        date,
                        strategy_name(col.strategy),
                        day.sales_eur,
                        day.purchases_eur,
                        day.balance_eur,
                        cum
                    ));
                }
            }
            let mut f = File::create(path).map_err(|e| io_err(path, e))?;
            f.write_all(out.as_bytes()).map_err(|e| io_err(path, e))?;
            emit_plot_data(report, path)?;
        }
    }
    Ok(())
}

fn plot_path(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    path.with_file_name(format!("{stem}_{suffix}.csv"))
}

fn emit_plot_data<F: Scalar>(
    report: &ComparisonReport<F>,
    base: &Path,
) -> Result<(), HarnessError> {
    type View<F> = fn(&StrategyColumn<F>, usize) -> F;
    let views: [(&str, View<F>); 3] = [
        ("daily_sales", |c, i| c.daily[i].sales_eur),
        ("daily_purchases", |c, i| c.daily[i].purchases_eur),
        ("cumulative_balance", |c, i| c.cumulative[i]),
    ];
    for (suffix, get) in views {
        let path = plot_path(base, suffix);
        let mut out = String::from("date");
        for col in &report.columns {
            out.push(',');
            out.push_str(strategy_name(col.strategy));
        }
        out.push('\n');
        for (i, date) in report.dates.iter().enumerate() {
            out.push_str(&date.to_string());
            for col in &report.columns {
                out.push_str(&format!(",{}", get(col, i)));
            }
            out.push('\n');
        }
        let mut f = File::create(&path).map_err(|e| io_err(&path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| io_err(&path, e))?;
    }

    let path = plot_path(base, "pairwise_difference");
    let mut out = String::from("date");
    for p in &report.pairwise {
        out.push_str(&format!(
            ",{}_minus_{}",
            strategy_name(p.left),
            strategy_name(p.right)
        ));
    }
    out.push('\n');
    for (i, date) in report.dates.iter().enumerate() {
        out.push_str(&date.to_string());
        for p in &report.pairwise {
            out.push_str(&format!(",{}", p.per_day_balance_diff[i]));
        }
        out.push('\n');
    }
    let mut f = File::create(&path).map_err(|e| io_err(&path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| io_err(&path, e))?;
    Ok(())
}

/// Per-second trace CSV for plotting: `t,production_w,controllable_w,base_w,net_w`.
pub fn export_trace_csv<F: Scalar>(
    production: &DaySeries<F>,
    base_load_w: F,
    trace: &SimulationTrace<F>,
    path: &Path,
) -> Result<(), HarnessError> {
    let mut out = String::from("t,production_w,controllable_w,base_w,net_w\n");
    for (t, &p) in production.values().iter().enumerate() {
        let c = trace.controllable_w[t];
        let net = p - c - base_load_w;
        out.push_str(&format!("{t},{p},{c},{base_load_w},{net}\n"));
    }
    let mut f = File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| io_err(path, e))?;
    Ok(())
}
