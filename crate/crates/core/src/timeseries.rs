//! Per-second daily power series: cleaning, resampling and window scans.
//!
//! A day is always exactly 86 400 samples. Raw meter exports may miss
//! seconds; [`fill_gaps`] completes them by linear interpolation (short
//! runs) or by copying the previous day (runs of an hour or more).

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{count, lit, Scalar};
use crate::SECONDS_PER_DAY;

/// A single raw meter sample: second of day plus instantaneous power in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawSample<F> {
    pub t: u32,
    pub power: F,
}

/// One civil day of per-second power values (exactly 86 400 watts entries).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaySeries<F> {
    date: NaiveDate,
    values: Vec<F>,
}

/// Record of every repair applied by [`fill_gaps`].
///
/// `interpolated_runs` are half-open `[start, end)` second ranges filled by
/// linear interpolation or boundary extension; `substituted_hours` are the
/// hour indices overlapped by runs copied from the previous day.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapReport {
    pub interpolated_runs: Vec<(usize, usize)>,
    pub substituted_hours: Vec<usize>,
}

impl GapReport {
    pub fn is_empty(&self) -> bool {
        self.interpolated_runs.is_empty() && self.substituted_hours.is_empty()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TimeseriesError {
    #[error("empty input")]
    EmptyInput,
    #[error("samples not sorted strictly increasing at t={0}")]
    UnsortedInput(u32),
    #[error("sample t={0} outside [0, 86400)")]
    SampleOutOfDay(u32),
    #[error("non-finite or negative power at t={0}")]
    InvalidPower(u32),
    #[error("missing run of {run_len} s starting at {start} needs a previous day")]
    MissingPreviousDay { start: usize, run_len: usize },
    #[error("series must have exactly 86400 values, got {0}")]
    WrongLength(usize),
    #[error("interval {0} does not divide 86400")]
    NonDivisorInterval(usize),
    #[error("window {0} larger than the day")]
    WindowTooLarge(usize),
}

impl<F: Scalar> DaySeries<F> {
    /// Build a series, enforcing length and value invariants.
    pub fn new(date: NaiveDate, values: Vec<F>) -> Result<Self, TimeseriesError> {
        if values.len() != SECONDS_PER_DAY {
            return Err(TimeseriesError::WrongLength(values.len()));
        }
        for (t, v) in values.iter().enumerate() {
            if !v.is_finite() || *v < F::zero() {
                return Err(TimeseriesError::InvalidPower(t as u32));
            }
        }
        Ok(Self { date, values })
    }

    /// Constant series, mostly for tests and synthetic scenarios.
    pub fn constant(date: NaiveDate, watts: F) -> Self {
        Self {
            date,
            values: vec![watts; SECONDS_PER_DAY],
        }
    }

    pub fn date(&self) -> NaiveDate {
        self.date
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn max(&self) -> F {
        self.values.iter().cloned().fold(F::zero(), F::max)
    }
}

fn validate_raw<F: Scalar>(raw: &[RawSample<F>]) -> Result<(), TimeseriesError> {
    if raw.is_empty() {
        return Err(TimeseriesError::EmptyInput);
    }
    let mut prev: Option<u32> = None;
    for s in raw {
        if s.t as usize >= SECONDS_PER_DAY {
            return Err(TimeseriesError::SampleOutOfDay(s.t));
        }
        if !s.power.is_finite() || s.power < F::zero() {
            return Err(TimeseriesError::InvalidPower(s.t));
        }
        if let Some(p) = prev {
            if s.t <= p {
                return Err(TimeseriesError::UnsortedInput(s.t));
            }
        }
        prev = Some(s.t);
    }
    Ok(())
}

/// Replicate the nearest present sample out to the day boundaries so that
/// every remaining gap is interior.
pub fn boundary_extend<F: Scalar>(
    raw: &[RawSample<F>],
) -> Result<Vec<RawSample<F>>, TimeseriesError> {
    validate_raw(raw)?;
    let mut out = Vec::with_capacity(raw.len() + 2);
    let first = raw[0];
    if first.t != 0 {
        out.push(RawSample {
            t: 0,
            power: first.power,
        });
    }
    out.extend_from_slice(raw);
    let last = raw[raw.len() - 1];
    if last.t as usize != SECONDS_PER_DAY - 1 {
        out.push(RawSample {
            t: (SECONDS_PER_DAY - 1) as u32,
            power: last.power,
        });
    }
    Ok(out)
}

/// Complete a raw day to 86 400 values.
///
/// Present samples are preserved exactly. Missing runs shorter than one hour
/// are linearly interpolated between the nearest present neighbours; runs of
/// 3600 s or more are copied second-for-second from `prev_day`.
pub fn fill_gaps<F: Scalar>(
    date: NaiveDate,
    raw: &[RawSample<F>],
    prev_day: Option<&DaySeries<F>>,
) -> Result<(DaySeries<F>, GapReport), TimeseriesError> {
    validate_raw(raw)?;
    let first_t = raw[0].t as usize;
    let last_t = raw[raw.len() - 1].t as usize;
    let extended = boundary_extend(raw)?;

    let mut present: Vec<Option<F>> = vec![None; SECONDS_PER_DAY];
    for s in &extended {
        present[s.t as usize] = Some(s.power);
    }

    let mut report = GapReport::default();
    if first_t != 0 {
        report.interpolated_runs.push((0, first_t));
    }

    let mut values = vec![F::zero(); SECONDS_PER_DAY];
    let mut t = 0usize;
    while t < SECONDS_PER_DAY {
        match present[t] {
            Some(v) => {
                values[t] = v;
                t += 1;
            }
            None => {
                let start = t;
                while t < SECONDS_PER_DAY && present[t].is_none() {
                    t += 1;
                }
                let end = t; // exclusive; interior by construction
                let run_len = end - start;
                // runs inside the extended boundary regions are constant by
                // construction and never substituted
                let boundary = end <= first_t || start > last_t;
                if !boundary && run_len >= 3600 {
                    let prev = prev_day.ok_or(TimeseriesError::MissingPreviousDay {
                        start,
                        run_len,
                    })?;
                    values[start..end].copy_from_slice(&prev.values()[start..end]);
                    for h in start / 3600..=(end - 1) / 3600 {
                        if report.substituted_hours.last() != Some(&h) {
                            report.substituted_hours.push(h);
                        }
                    }
                } else {
                    let left = present[start - 1].expect("interior run has left neighbour");
                    let right = present[end].expect("interior run has right neighbour");
                    let span = count::<F>(end - (start - 1));
                    for (k, slot) in values[start..end].iter_mut().enumerate() {
                        let frac = count::<F>(k + 1) / span;
                        *slot = left + (right - left) * frac;
                    }
                    if !boundary {
                        report.interpolated_runs.push((start, end));
                    }
                }
            }
        }
    }
    if last_t != SECONDS_PER_DAY - 1 {
        report.interpolated_runs.push((last_t + 1, SECONDS_PER_DAY));
    }
    report.interpolated_runs.sort_unstable();
    report.substituted_hours.sort_unstable();
    report.substituted_hours.dedup();

    Ok((DaySeries { date, values }, report))
}

/// Sample-and-hold resampling: the value at second `t` becomes the value at
/// the start of its interval.
pub fn downsample_hold<F: Scalar>(
    series: &DaySeries<F>,
    interval_s: usize,
) -> Result<DaySeries<F>, TimeseriesError> {
    if interval_s == 0 || !SECONDS_PER_DAY.is_multiple_of(interval_s) {
        return Err(TimeseriesError::NonDivisorInterval(interval_s));
    }
    let src = series.values();
    let mut values = Vec::with_capacity(SECONDS_PER_DAY);
    for t in 0..SECONDS_PER_DAY {
        values.push(src[(t / interval_s) * interval_s]);
    }
    Ok(DaySeries {
        date: series.date,
        values,
    })
}

/// Max-minus-min over every window start, with edge direction.
///
/// `rising` is true when the first window minimum occurs strictly before the
/// first window maximum; constant windows are classified non-rising.
pub fn rolling_minmax_diff<F: Scalar>(
    values: &[F],
    window_s: usize,
) -> Result<Vec<(F, bool)>, TimeseriesError> {
    if window_s == 0 || window_s > values.len() {
        return Err(TimeseriesError::WindowTooLarge(window_s));
    }
    let mut out = Vec::with_capacity(values.len() - window_s + 1);
    for s in 0..=values.len() - window_s {
        let win = &values[s..s + window_s];
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
        out.push((win[max_i] - win[min_i], min_i < max_i));
    }
    Ok(out)
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed csv {path} line {line}: {msg}")]
    Malformed {
        path: String,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Series(#[from] TimeseriesError),
}

/// Read a raw day CSV (`t,power_w` header, missing seconds simply absent).
pub fn read_day_csv<F: Scalar>(path: &Path) -> Result<Vec<RawSample<F>>, CsvError> {
    let p = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CsvError::Malformed {
        path: p.clone(),
        line: 0,
        msg: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| CsvError::Malformed {
            path: p.clone(),
            line,
            msg: e.to_string(),
        })?;
        if rec.len() < 2 {
            return Err(CsvError::Malformed {
                path: p.clone(),
                line,
                msg: "expected two columns t,power_w".into(),
            });
        }
        let t: u32 = rec[0].trim().parse().map_err(|e| CsvError::Malformed {
            path: p.clone(),
            line,
            msg: format!("bad t: {e}"),
        })?;
        let w: f64 = rec[1].trim().parse().map_err(|e| CsvError::Malformed {
            path: p.clone(),
            line,
            msg: format!("bad power_w: {e}"),
        })?;
        out.push(RawSample { t, power: lit(w) });
    }
    Ok(out)
}

/// Write a full day as `t,power_w` CSV (UTF-8, LF).
pub fn write_day_csv<F: Scalar>(series: &DaySeries<F>, path: &Path) -> Result<(), CsvError> {
    let p = path.display().to_string();
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| CsvError::Malformed {
            path: p.clone(),
            line: 0,
            msg: e.to_string(),
        })?;
    wtr.write_record(["t", "power_w"]).map_err(|e| CsvError::Malformed {
        path: p.clone(),
        line: 0,
        msg: e.to_string(),
    })?;
    for (t, v) in series.values().iter().enumerate() {
        wtr.write_record([t.to_string(), format!("{v}")])
            .map_err(|e| CsvError::Malformed {
                path: p.clone(),
                line: t + 2,
                msg: e.to_string(),
            })?;
    }
    wtr.flush().map_err(|e| CsvError::Io { path: p, source: e })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2023, 1, 31).unwrap()
    }

    fn full_raw(level: f64) -> Vec<RawSample<f64>> {
        (0..SECONDS_PER_DAY as u32)
            .map(|t| RawSample { t, power: level })
            .collect()
    }

    #[test]
    fn linear_midpoint() {
        let mut raw = full_raw(100.0);
        raw.remove(1);
        raw[1].power = 300.0; // sample at t=2
        let (day, report) = fill_gaps(date(), &raw, None).unwrap();
        assert_eq!(day.values()[1], 200.0);
        assert_eq!(report.interpolated_runs, vec![(1, 2)]);
    }

    #[test]
    fn fully_present_is_identity() {
        let raw = full_raw(42.0);
        let (day, report) = fill_gaps(date(), &raw, None).unwrap();
        assert!(report.is_empty());
        assert!(day.values().iter().all(|&v| v == 42.0));
    }

    #[test]
    fn hour_run_from_previous_day() {
        let mut raw: Vec<RawSample<f64>> = Vec::new();
        for t in 0..SECONDS_PER_DAY as u32 {
            if (3600..7200).contains(&t) {
                continue;
            }
            raw.push(RawSample { t, power: 100.0 });
        }
        let prev = DaySeries::constant(date().pred_opt().unwrap(), 500.0);
        let (day, report) = fill_gaps(date(), &raw, Some(&prev)).unwrap();
        assert!(day.values()[3600..7200].iter().all(|&v| v == 500.0));
        assert_eq!(report.substituted_hours, vec![1]);
        assert!(report.interpolated_runs.is_empty());
    }

    #[test]
    fn hour_run_without_prev_day_errors() {
        let mut raw: Vec<RawSample<f64>> = Vec::new();
        for t in 0..SECONDS_PER_DAY as u32 {
            if (3600..7200).contains(&t) {
                continue;
            }
            raw.push(RawSample { t, power: 100.0 });
        }
        let err = fill_gaps(date(), &raw, None).unwrap_err();
        assert_eq!(
            err,
            TimeseriesError::MissingPreviousDay {
                start: 3600,
                run_len: 3600
            }
        );
    }

    #[test]
    fn boundary_extension_replicates() {
        let raw = vec![RawSample { t: 10, power: 400.0 }];
        let ext = boundary_extend(&raw).unwrap();
        assert_eq!(ext[0], RawSample { t: 0, power: 400.0 });
        assert_eq!(
            ext[ext.len() - 1],
            RawSample {
                t: (SECONDS_PER_DAY - 1) as u32,
                power: 400.0
            }
        );

        let (day, report) = fill_gaps(date(), &raw, None).unwrap();
        assert!(day.values()[..10].iter().all(|&v| v == 400.0));
        assert!(day.values()[11..].iter().all(|&v| v == 400.0));
        assert!(!report.is_empty());
    }

    #[test]
    fn boundary_extension_identity_when_covered() {
        let raw = full_raw(7.0);
        let ext = boundary_extend(&raw).unwrap();
        assert_eq!(ext.len(), raw.len());
    }

    #[test]
    fn trailing_boundary_extension() {
        let mut raw = full_raw(5.0);
        raw.truncate(SECONDS_PER_DAY - 9);
        // last present sample now at t=86390
        let (day, _) = fill_gaps(date(), &raw, None).unwrap();
        assert!(day.values()[SECONDS_PER_DAY - 9..].iter().all(|&v| v == 5.0));
    }

    #[test]
    fn fill_gaps_idempotent() {
        let raw: Vec<RawSample<f64>> = (0..SECONDS_PER_DAY as u32)
            .filter(|t| !(200..800).contains(t) && !(40_000..40_100).contains(t))
            .map(|t| RawSample {
                t,
                power: (t % 97) as f64,
            })
            .collect();
        let (day, _) = fill_gaps(date(), &raw, None).unwrap();
        let full: Vec<RawSample<f64>> = day
            .values()
            .iter()
            .enumerate()
            .map(|(t, &power)| RawSample { t: t as u32, power })
            .collect();
        let (again, report) = fill_gaps(date(), &full, None).unwrap();
        assert_eq!(day, again);
        assert!(report.is_empty());
    }

    #[test]
    fn unsorted_rejected() {
        let raw = vec![
            RawSample { t: 5, power: 1.0 },
            RawSample { t: 5, power: 2.0 },
        ];
        assert_eq!(
            fill_gaps(date(), &raw, None).unwrap_err(),
            TimeseriesError::UnsortedInput(5)
        );
    }

    #[test]
    fn downsample_identity_and_hold() {
        let ramp: Vec<f64> = (0..SECONDS_PER_DAY).map(|t| t as f64).collect();
        let day = DaySeries::new(date(), ramp).unwrap();
        let same = downsample_hold(&day, 1).unwrap();
        assert_eq!(day, same);

        let hourly = downsample_hold(&day, 3600).unwrap();
        assert_eq!(hourly.values()[0], 0.0);
        assert_eq!(hourly.values()[3599], 0.0);
        assert_eq!(hourly.values()[3600], 3600.0);
        assert_eq!(hourly.values()[7300], 7200.0);
    }

    #[test]
    fn downsample_idempotent() {
        let ramp: Vec<f64> = (0..SECONDS_PER_DAY).map(|t| (t % 977) as f64).collect();
        let day = DaySeries::new(date(), ramp).unwrap();
        let a = downsample_hold(&day, 900).unwrap();
        let b = downsample_hold(&a, 900).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn downsample_rejects_non_divisor() {
        let day = DaySeries::constant(date(), 1.0);
        assert!(matches!(
            downsample_hold(&day, 7),
            Err(TimeseriesError::NonDivisorInterval(7))
        ));
    }

    #[test]
    fn rolling_diff_step_directions() {
        let mut v = vec![500.0f64; 200];
        for x in v.iter_mut().skip(100) {
            *x = 2800.0;
        }
        let diffs = rolling_minmax_diff(&v, 10).unwrap();
        let (d, rising) = diffs[95];
        assert_eq!(d, 2300.0);
        assert!(rising);

        v.reverse();
        let diffs = rolling_minmax_diff(&v, 10).unwrap();
        let (d, rising) = diffs[95];
        assert_eq!(d, 2300.0);
        assert!(!rising);
    }

    #[test]
    fn rolling_diff_constant_is_zero() {
        let v = vec![500.0f64; 100];
        for (d, rising) in rolling_minmax_diff(&v, 10).unwrap() {
            assert_eq!(d, 0.0);
            assert!(!rising);
        }
    }
}
