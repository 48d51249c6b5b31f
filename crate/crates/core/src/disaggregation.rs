//! Single-meter device load estimation from known ON/OFF switch times:
//! weighted edge detection, calm-period scheduling, median aggregation and
//! base-load extraction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{count, lit, Scalar};
use crate::timeseries::DaySeries;
use crate::SECONDS_PER_DAY;

/// Edge-detection parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeConfig {
    /// Scan window length in seconds.
    pub window_s: usize,
    /// Search interval after an ON event.
    pub on_search_s: usize,
    /// Search interval after an OFF event.
    pub off_search_s: usize,
    /// Offset at which a candidate's weight halves.
    pub weight_halving_s: usize,
    /// Flip the rising-for-ON direction convention.
    pub invert_direction: bool,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        Self {
            window_s: 10,
            on_search_s: 120,
            off_search_s: 60,
            weight_halving_s: 10,
            invert_direction: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SwitchKind {
    On,
    Off,
}

/// A logged switch action of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub device: String,
    pub kind: SwitchKind,
    pub t: usize,
}

/// Magnitude estimated for a single switch event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventEstimate<F> {
    pub device: String,
    pub kind: SwitchKind,
    pub t: usize,
    pub watts: F,
    pub weighted_score: F,
    pub window_start: usize,
    pub no_edge: bool,
}

/// A low-variance load window suitable for clean measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalmWindow<F> {
    pub start: usize,
    pub length_s: usize,
    pub std: F,
}

/// Median power over all estimable events of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceEstimate<F> {
    pub device: String,
    pub watts: F,
    pub n_events: usize,
    pub on_median: Option<F>,
    pub off_median: Option<F>,
}

/// Median household draw with every controllable device OFF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseLoadEstimate<F> {
    pub watts: F,
    pub n_samples: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum DisaggError {
    #[error("event at t={t} with search {search_s} s does not fit in the day")]
    SearchOutOfDay { t: usize, search_s: usize },
    #[error("window {0} larger than the day")]
    WindowTooLarge(usize),
    #[error("history must contain exactly 7 days of calm windows, got {0}")]
    WrongHistoryLength(usize),
    #[error("no estimable events for device {0}")]
    NoEvents(String),
    #[error("no seconds with all controllable devices off")]
    NoOffSeconds,
    #[error("mask length {0} does not match the day")]
    BadMaskLength(usize),
}

fn median_of<F: Scalar>(values: &mut [F]) -> F {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite watts"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / lit(2.0)
    }
}

/// Estimate one switch event's magnitude by the maximum weighted min-max
/// difference among direction-matching windows after the event.
pub fn estimate_event<F: Scalar>(
    load: &DaySeries<F>,
    event: &SwitchEvent,
    cfg: &EdgeConfig,
) -> Result<EventEstimate<F>, DisaggError> {
    let search_s = match event.kind {
        SwitchKind::On => cfg.on_search_s,
        SwitchKind::Off => cfg.off_search_s,
    };
    if event.t + search_s > SECONDS_PER_DAY {
        return Err(DisaggError::SearchOutOfDay { t: event.t, search_s });
    }
    let want_rising = match event.kind {
        SwitchKind::On => !cfg.invert_direction,
        SwitchKind::Off => cfg.invert_direction,
    };
    let values = load.values();
    let half = lit::<F>(2.0);
    let halving = count::<F>(cfg.weight_halving_s.max(1));

    let mut best: Option<(F, F, usize)> = None; // (score, diff, window_start)
    for s in event.t..=event.t + search_s - cfg.window_s {
        let win = &values[s..s + cfg.window_s];
        let mut min_i = 0usize;
        let mut max_i = 0usize;
        for (i, v) in win.iter().enumerate() {
            if *v < win[min_i] {
                min_i = i;
            }
            if *v > win[max_i] {
                max_i = i;
            }
        }
        let diff = win[max_i] - win[min_i];
        let rising = min_i < max_i;
        if diff <= F::zero() || rising != want_rising {
            continue;
        }
        let offset = count::<F>(s - event.t);
        let weight = half.powf(-offset / halving);
        let score = weight * diff;
        if best.is_none_or(|(b, _, _)| score > b) {
            best = Some((score, diff, s));
        }
    }
    Ok(match best {
        Some((score, diff, s)) => EventEstimate {
            device: event.device.clone(),
            kind: event.kind,
            t: event.t,
            watts: diff,
            weighted_score: score,
            window_start: s,
            no_edge: false,
        },
        None => EventEstimate {
            device: event.device.clone(),
            kind: event.kind,
            t: event.t,
            watts: F::zero(),
            weighted_score: F::zero(),
            window_start: event.t,
            no_edge: true,
        },
    })
}

/// Standard deviation of every fixed-length window at stride 1 (population,
/// via prefix sums accumulated in f64).
fn window_stds<F: Scalar>(values: &[F], window_len_s: usize) -> Vec<f64> {
    let n = values.len();
    let mut prefix = vec![0.0f64; n + 1];
    let mut prefix_sq = vec![0.0f64; n + 1];
    for (i, v) in values.iter().enumerate() {
        let x = v.to_f64().expect("finite watts");
        prefix[i + 1] = prefix[i] + x;
        prefix_sq[i + 1] = prefix_sq[i] + x * x;
    }
    let w = window_len_s as f64;
    (0..=n - window_len_s)
        .map(|s| {
            let sum = prefix[s + window_len_s] - prefix[s];
            let sumsq = prefix_sq[s + window_len_s] - prefix_sq[s];
            let var = (sumsq / w - (sum / w).powi(2)).max(0.0);
            var.sqrt()
        })
        .collect()
}

/// Calm windows of a day: windows whose std falls in the lowest `quantile`
/// of all same-length windows, greedily reduced to a non-overlapping set.
pub fn calm_windows<F: Scalar>(
    load: &DaySeries<F>,
    window_len_s: usize,
    quantile: f64,
) -> Result<Vec<CalmWindow<F>>, DisaggError> {
    if window_len_s == 0 || window_len_s > SECONDS_PER_DAY {
        return Err(DisaggError::WindowTooLarge(window_len_s));
    }
    let stds = window_stds(load.values(), window_len_s);
    let mut sorted = stds.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite std"));
    let n = sorted.len();
    let idx = if quantile >= 1.0 {
        n - 1
    } else {
        ((quantile * n as f64).ceil() as usize)
            .saturating_sub(1)
            .min(n - 1)
    };
    let threshold = sorted[idx];

    let mut out = Vec::new();
    let mut next_free = 0usize;
    for (s, &std) in stds.iter().enumerate() {
        if s < next_free || std > threshold {
            continue;
        }
        out.push(CalmWindow {
            start: s,
            length_s: window_len_s,
            std: lit(std),
        });
        next_free = s + window_len_s;
    }
    Ok(out)
}

/// Calm-period length for `n` devices: (n·3 + 1) minutes.
pub fn calm_period_length(n_devices: usize) -> usize {
    assert!(n_devices >= 1, "need at least one device");
    (n_devices * 3 + 1) * 60
}

/// Seconds of day where calm windows from at least `min_overlap` of the past
/// 7 days agree over a run of `required_len_s` or more; returns run starts.
pub fn forecast_calm_starts<F: Scalar>(
    history: &[Vec<CalmWindow<F>>],
    min_overlap: usize,
    required_len_s: usize,
) -> Result<Vec<usize>, DisaggError> {
    if history.len() != 7 {
        return Err(DisaggError::WrongHistoryLength(history.len()));
    }
    let mut coverage = vec![0u8; SECONDS_PER_DAY];
    for day in history {
        for w in day {
            for c in coverage
                .iter_mut()
                .skip(w.start)
                .take(w.length_s.min(SECONDS_PER_DAY - w.start))
            {
                *c += 1;
            }
        }
    }
    let mut starts = Vec::new();
    let mut t = 0usize;
    while t < SECONDS_PER_DAY {
        if (coverage[t] as usize) >= min_overlap {
            let start = t;
            while t < SECONDS_PER_DAY && (coverage[t] as usize) >= min_overlap {
                t += 1;
            }
            if t - start >= required_len_s {
                starts.push(start);
            }
        } else {
            t += 1;
        }
    }
    Ok(starts)
}

/// Pool ON and OFF event estimates of one device and take the median.
pub fn aggregate_median<F: Scalar>(
    events: &[EventEstimate<F>],
    device: &str,
) -> Result<DeviceEstimate<F>, DisaggError> {
    let mut all: Vec<F> = Vec::new();
    let mut on: Vec<F> = Vec::new();
    let mut off: Vec<F> = Vec::new();
    for e in events {
        if e.device != device || e.no_edge {
            continue;
        }
        all.push(e.watts);
        match e.kind {
            SwitchKind::On => on.push(e.watts),
            SwitchKind::Off => off.push(e.watts),
        }
    }
    if all.is_empty() {
        return Err(DisaggError::NoEvents(device.to_string()));
    }
    let n_events = all.len();
    Ok(DeviceEstimate {
        device: device.to_string(),
        watts: median_of(&mut all),
        n_events,
        on_median: (!on.is_empty()).then(|| median_of(&mut on)),
        off_median: (!off.is_empty()).then(|| median_of(&mut off)),
    })
}

/// Median load over every second (across days) where all controllable
/// devices are OFF.
pub fn base_load<F: Scalar>(
    days: &[DaySeries<F>],
    all_off_masks: &[Vec<bool>],
) -> Result<BaseLoadEstimate<F>, DisaggError> {
    let mut samples: Vec<F> = Vec::new();
    for (day, mask) in days.iter().zip(all_off_masks) {
        if mask.len() != SECONDS_PER_DAY {
            return Err(DisaggError::BadMaskLength(mask.len()));
        }
        for (v, &off) in day.values().iter().zip(mask) {
            if off {
                samples.push(*v);
            }
        }
    }
    if samples.is_empty() {
        return Err(DisaggError::NoOffSeconds);
    }
    let n_samples = samples.len();
    Ok(BaseLoadEstimate {
        watts: median_of(&mut samples),
        n_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2023, 3, 26).unwrap()
    }

    fn day(values: Vec<f64>) -> DaySeries<f64> {
        DaySeries::new(date(), values).unwrap()
    }

    fn step_day(base: f64, step_at: usize, high: f64) -> DaySeries<f64> {
        let mut v = vec![base; SECONDS_PER_DAY];
        for x in v.iter_mut().skip(step_at) {
            *x = high;
        }
        day(v)
    }

    fn on_event(t: usize) -> SwitchEvent {
        SwitchEvent {
            device: "dev".into(),
            kind: SwitchKind::On,
            t,
        }
    }

    #[test]
    fn clean_on_step() {
        let load = step_day(500.0, 1030, 2800.0);
        let est = estimate_event(&load, &on_event(1000), &EdgeConfig::default()).unwrap();
        assert_eq!(est.watts, 2300.0);
        assert!(!est.no_edge);
    }

    #[test]
    fn earlier_equal_step_wins() {
        let mut v = vec![500.0; SECONDS_PER_DAY];
        for x in v.iter_mut().take(SECONDS_PER_DAY).skip(1005) {
            *x = 2800.0;
        }
        // second identical-magnitude edge at offset 40
        for x in v.iter_mut().skip(1040) {
            *x = 5100.0;
        }
        let load = day(v);
        let est = estimate_event(&load, &on_event(1000), &EdgeConfig::default()).unwrap();
        assert_eq!(est.watts, 2300.0);
        assert!(est.window_start < 1010);
    }

    #[test]
    fn constant_series_reports_no_edge() {
        let load = day(vec![500.0; SECONDS_PER_DAY]);
        let est = estimate_event(&load, &on_event(1000), &EdgeConfig::default()).unwrap();
        assert_eq!(est.watts, 0.0);
        assert!(est.no_edge);
    }

    #[test]
    fn off_event_requires_falling_edge() {
        let load = step_day(2800.0, 1020, 500.0);
        let ev = SwitchEvent {
            device: "dev".into(),
            kind: SwitchKind::Off,
            t: 1000,
        };
        let est = estimate_event(&load, &ev, &EdgeConfig::default()).unwrap();
        assert_eq!(est.watts, 2300.0);

        // a rising step must not match an OFF event
        let load = step_day(500.0, 1020, 2800.0);
        let est = estimate_event(&load, &ev, &EdgeConfig::default()).unwrap();
        assert!(est.no_edge);
    }

    #[test]
    fn direction_flip_flag() {
        let load = step_day(2800.0, 1020, 500.0);
        let cfg = EdgeConfig {
            invert_direction: true,
            ..EdgeConfig::default()
        };
        let est = estimate_event(&load, &on_event(1000), &cfg).unwrap();
        assert_eq!(est.watts, 2300.0);
    }

    #[test]
    fn offset_invariance() {
        let a = step_day(500.0, 1030, 2800.0);
        let b = step_day(1500.0, 1030, 3800.0);
        let cfg = EdgeConfig::default();
        let ea = estimate_event(&a, &on_event(1000), &cfg).unwrap();
        let eb = estimate_event(&b, &on_event(1000), &cfg).unwrap();
        assert_eq!(ea.watts, eb.watts);
    }

    #[test]
    fn search_must_fit_in_day() {
        let load = day(vec![0.0; SECONDS_PER_DAY]);
        let err = estimate_event(&load, &on_event(SECONDS_PER_DAY - 60), &EdgeConfig::default())
            .unwrap_err();
        assert!(matches!(err, DisaggError::SearchOutOfDay { .. }));
    }

    #[test]
    fn calm_constant_day_yields_full_tiling() {
        let load = day(vec![350.0; SECONDS_PER_DAY]);
        let wins = calm_windows(&load, 600, 0.10).unwrap();
        assert_eq!(wins.len(), 144);
        assert_eq!(wins[0].start, 0);
        assert_eq!(wins[1].start, 600);
        assert!(wins.iter().all(|w| w.std == 0.0));
    }

    #[test]
    fn calm_windows_land_in_quiet_hour() {
        let mut v: Vec<f64> = (0..SECONDS_PER_DAY)
            .map(|t| 1000.0 + 500.0 * ((t * 13 % 17) as f64))
            .collect();
        for x in v.iter_mut().take(7200).skip(3600) {
            *x = 400.0;
        }
        let load = day(v);
        let wins = calm_windows(&load, 600, 0.01).unwrap();
        assert!(!wins.is_empty());
        for w in &wins {
            assert!(w.start >= 3600 && w.start + w.length_s <= 7200, "start {}", w.start);
        }
    }

    #[test]
    fn full_quantile_passes_everything() {
        let v: Vec<f64> = (0..SECONDS_PER_DAY).map(|t| (t % 533) as f64).collect();
        let load = day(v);
        let wins = calm_windows(&load, 600, 1.0).unwrap();
        assert_eq!(wins.len(), 144);
    }

    #[test]
    fn calm_period_length_formula() {
        assert_eq!(calm_period_length(3), 600);
        assert_eq!(calm_period_length(1), 240);
    }

    #[test]
    #[should_panic]
    fn calm_period_length_zero_devices() {
        calm_period_length(0);
    }

    fn cw(start: usize, len: usize) -> CalmWindow<f64> {
        CalmWindow {
            start,
            length_s: len,
            std: 0.0,
        }
    }

    #[test]
    fn calm_forecast_full_agreement() {
        let history: Vec<Vec<CalmWindow<f64>>> = (0..7).map(|_| vec![cw(3600, 600)]).collect();
        let starts = forecast_calm_starts(&history, 5, 600).unwrap();
        assert_eq!(starts, vec![3600]);
    }

    #[test]
    fn calm_forecast_below_overlap() {
        let mut history: Vec<Vec<CalmWindow<f64>>> = (0..4).map(|_| vec![cw(3600, 600)]).collect();
        history.extend((0..3).map(|_| Vec::new()));
        let starts = forecast_calm_starts(&history, 5, 600).unwrap();
        assert!(starts.is_empty());
    }

    #[test]
    fn calm_forecast_union_run() {
        let mut history: Vec<Vec<CalmWindow<f64>>> =
            (0..5).map(|_| vec![cw(3600, 600)]).collect();
        history.extend((0..2).map(|_| vec![cw(3900, 600)]));
        // coverage: [3600,4200) has 5, [3900,4500) adds 2 → [3900,4200) has 7,
        // [4200,4500) has 2 < 5
        let starts = forecast_calm_starts(&history, 5, 600).unwrap();
        assert_eq!(starts, vec![3600]);

        // independent brute-force coverage count
        let mut cov = vec![0; SECONDS_PER_DAY];
        for d in &history {
            for w in d {
                for c in cov[w.start..w.start + w.length_s].iter_mut() {
                    *c += 1;
                }
            }
        }
        assert!(cov[3600..4200].iter().all(|&c| c >= 5));
        assert!(cov[4200] < 5);
    }

    fn est(device: &str, kind: SwitchKind, watts: f64) -> EventEstimate<f64> {
        EventEstimate {
            device: device.into(),
            kind,
            t: 0,
            watts,
            weighted_score: watts,
            window_start: 0,
            no_edge: false,
        }
    }

    #[test]
    fn median_odd_even_singleton() {
        let events = vec![
            est("a", SwitchKind::On, 2290.0),
            est("a", SwitchKind::Off, 2300.0),
            est("a", SwitchKind::On, 2310.0),
        ];
        assert_eq!(aggregate_median(&events, "a").unwrap().watts, 2300.0);

        let events = vec![
            est("a", SwitchKind::On, 2300.0),
            est("a", SwitchKind::Off, 2300.0),
            est("a", SwitchKind::On, 2300.0),
            est("a", SwitchKind::Off, 9000.0),
        ];
        let agg = aggregate_median(&events, "a").unwrap();
        assert_eq!(agg.watts, 2300.0);
        assert_eq!(agg.n_events, 4);

        let events = vec![est("a", SwitchKind::On, 2100.0)];
        let agg = aggregate_median(&events, "a").unwrap();
        assert_eq!(agg.watts, 2100.0);
        assert_eq!(agg.off_median, None);
    }

    #[test]
    fn median_ignores_no_edge_and_other_devices() {
        let mut bad = est("a", SwitchKind::On, 0.0);
        bad.no_edge = true;
        let events = vec![bad, est("b", SwitchKind::On, 500.0)];
        assert_eq!(
            aggregate_median(&events, "a").unwrap_err(),
            DisaggError::NoEvents("a".into())
        );
    }

    #[test]
    fn base_load_median() {
        let d = day(vec![350.0; SECONDS_PER_DAY]);
        let mask = vec![true; SECONDS_PER_DAY];
        let est = base_load(&[d], &[mask]).unwrap();
        assert_eq!(est.watts, 350.0);
        assert_eq!(est.n_samples, SECONDS_PER_DAY);
    }

    #[test]
    fn base_load_outlier_resistant() {
        let mut v = vec![300.0; SECONDS_PER_DAY];
        v[100] = 5000.0;
        let d = day(v);
        let mut mask = vec![false; SECONDS_PER_DAY];
        for m in mask.iter_mut().take(105).skip(100) {
            *m = true;
        }
        // masked values: {5000, 300, 300, 300, 300}
        let est = base_load(&[d], &[mask]).unwrap();
        assert_eq!(est.watts, 300.0);
    }

    #[test]
    fn base_load_empty_mask() {
        let d = day(vec![350.0; SECONDS_PER_DAY]);
        let mask = vec![false; SECONDS_PER_DAY];
        assert_eq!(
            base_load(&[d], &[mask]).unwrap_err(),
            DisaggError::NoOffSeconds
        );
    }
}
