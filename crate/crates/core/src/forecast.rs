//! Clear-sky production forecasting from a rolling 7-day history, plus the
//! normal-distribution baseline fit it is compared against.

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{count, lit, Scalar};
use crate::timeseries::DaySeries;
use crate::SECONDS_PER_DAY;

pub const HISTORY_DAYS: usize = 7;

/// Grid over which the closest normal distribution is searched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalFitSearchSpace<F> {
    pub amp_lo: F,
    pub amp_hi: F,
    pub amp_step: F,
    pub mu_lo: F,
    pub mu_hi: F,
    pub mu_step: F,
    pub sigma_lo: F,
    pub sigma_hi: F,
    pub sigma_step: F,
}

impl<F: Scalar> NormalFitSearchSpace<F> {
    /// Default search space: amplitude within 2 kW of the day maximum,
    /// mean between 08:20 and 16:40, standard deviation 4000..20000 s.
    pub fn default_for(day: &DaySeries<F>) -> Self {
        let m = day.max();
        Self {
            amp_lo: m - lit(2000.0),
            amp_hi: m + lit(2000.0),
            amp_step: lit(50.0),
            mu_lo: lit(30_000.0),
            mu_hi: lit(60_000.0),
            mu_step: lit(60.0),
            sigma_lo: lit(4000.0),
            sigma_hi: lit(20_000.0),
            sigma_step: lit(100.0),
        }
    }
}

/// Best grid point of the normal baseline and its mean squared error (W²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalFitResult<F> {
    pub amp: F,
    pub mu: F,
    pub sigma: F,
    pub mse: F,
}

/// Per-second statistics over a 7-day history and the derived band limits.
#[derive(Debug, Clone, PartialEq)]
pub struct ClearSkyBand<F> {
    pub a: Vec<F>,
    pub sd: Vec<F>,
    pub upper: Vec<F>,
    pub lower_b: Vec<F>,
}

/// Per-day signed forecast-over-actual energy bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport<F> {
    pub per_day_bias: Vec<(NaiveDate, F)>,
    pub mean_bias: F,
    pub excluded_days: Vec<NaiveDate>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ForecastError {
    #[error("sigma must be positive")]
    NonPositiveSigma,
    #[error("search space axis empty after stepping")]
    EmptySearchSpace,
    #[error("history must contain exactly {HISTORY_DAYS} days, got {0}")]
    WrongHistoryLength(usize),
    #[error("empty input")]
    EmptyInput,
    #[error("every day has zero actual production")]
    AllDaysZeroActual,
}

/// Evaluate `amp · exp(−(t−mu)²/(2σ²))`.
pub fn gaussian_eval<F: Scalar>(amp: F, mu: F, sigma: F, t: F) -> Result<F, ForecastError> {
    if sigma <= F::zero() {
        return Err(ForecastError::NonPositiveSigma);
    }
    let d = t - mu;
    Ok(amp * (-(d * d) / (lit::<F>(2.0) * sigma * sigma)).exp())
}

/// Mean squared error over all 86 400 seconds, in W².
pub fn mse<F: Scalar>(a: &DaySeries<F>, b: &DaySeries<F>) -> F {
    let mut acc = F::zero();
    for (x, y) in a.values().iter().zip(b.values()) {
        let d = *x - *y;
        acc += d * d;
    }
    acc / count(SECONDS_PER_DAY)
}

fn grid<F: Scalar>(lo: F, hi: F, step: F) -> Vec<F> {
    let mut out = Vec::new();
    if step <= F::zero() || hi < lo {
        return out;
    }
    let n = ((hi - lo) / step + lit(1e-9)).to_f64().unwrap().floor() as usize;
    for k in 0..=n {
        out.push(lo + step * count(k));
    }
    out
}

/// Per (mu, sigma): gaussian cross sums over the support window, computed
/// with a multiplicative recurrence (two `exp` calls per pair).
fn gaussian_sums<F: Scalar>(y: &[F], mu: F, sigma: F) -> (F, F) {
    let two = lit::<F>(2.0);
    // beyond ~12 sigma the curve is numerically zero
    let reach = sigma * lit(12.0);
    let start = (mu - reach).max(F::zero()).to_f64().unwrap() as usize;
    let end = ((mu + reach).to_f64().unwrap() as usize + 1).min(y.len());
    if start >= end {
        return (F::zero(), F::zero());
    }
    let inv2s2 = F::one() / (two * sigma * sigma);
    let q = (-two * inv2s2).exp();
    let mut sgg = F::zero();
    let mut sgy = F::zero();
    let mut g = F::zero();
    let mut r = F::zero();
    // reseed periodically: the multiplicative recurrence drifts over tens of
    // thousands of steps and the later quadratic form amplifies that error
    const RESEED: usize = 1024;
    for (i, &v) in y[start..end].iter().enumerate() {
        if i % RESEED == 0 {
            let d = count::<F>(start + i) - mu;
            g = (-(d * d) * inv2s2).exp();
            r = (-(two * d + F::one()) * inv2s2).exp();
        }
        sgg += g * g;
        sgy += g * v;
        g = g * r;
        r = r * q;
    }
    (sgg, sgy)
}

/// Exhaustive grid search for the normal curve with minimal MSE.
///
/// Ties are broken by the lexicographically smallest (amp, mu, sigma).
/// Amplitude and sigma candidates that are not strictly positive are
/// dropped from the grid.
pub fn fit_normal<F: Scalar>(
    day: &DaySeries<F>,
    space: &NormalFitSearchSpace<F>,
) -> Result<NormalFitResult<F>, ForecastError> {
    let amps: Vec<F> = grid(space.amp_lo, space.amp_hi, space.amp_step)
        .into_iter()
        .filter(|a| *a > F::zero())
        .collect();
    let mus = grid(space.mu_lo, space.mu_hi, space.mu_step);
    let sigmas: Vec<F> = grid(space.sigma_lo, space.sigma_hi, space.sigma_step)
        .into_iter()
        .filter(|s| *s > F::zero())
        .collect();
    if amps.is_empty() || mus.is_empty() || sigmas.is_empty() {
        return Err(ForecastError::EmptySearchSpace);
    }

    let y = day.values();
    let syy: F = y.iter().map(|v| *v * *v).sum();
    let n = count::<F>(SECONDS_PER_DAY);

    let mut pairs = Vec::with_capacity(mus.len() * sigmas.len());
    for &mu in &mus {
        for &sigma in &sigmas {
            pairs.push((mu, sigma));
        }
    }

    // Each pair is independent, so the parallel map is deterministic; the
    // tie-break happens in the sequential reduction below.
    let per_pair: Vec<NormalFitResult<F>> = pairs
        .par_iter()
        .map(|&(mu, sigma)| {
            let (sgg, sgy) = gaussian_sums(y, mu, sigma);
            let mut best_amp = amps[0];
            let mut best_mse = F::infinity();
            for &amp in &amps {
                // mse(amp) = (Syy + amp² Sgg − 2 amp Sgy) / n, quadratic in amp
                let m = ((syy + amp * amp * sgg - lit::<F>(2.0) * amp * sgy) / n).max(F::zero());
                if m < best_mse {
                    best_mse = m;
                    best_amp = amp;
                }
            }
            NormalFitResult {
                amp: best_amp,
                mu,
                sigma,
                mse: best_mse,
            }
        })
        .collect();

    let mut best = per_pair[0];
    for c in &per_pair[1..] {
        let better = c.mse < best.mse
            || (c.mse == best.mse
                && (c.amp, c.mu, c.sigma) < (best.amp, best.mu, best.sigma));
        if better {
            best = *c;
        }
    }
    Ok(best)
}

fn check_history<F: Scalar>(history: &[DaySeries<F>]) -> Result<(), ForecastError> {
    if history.len() != HISTORY_DAYS {
        return Err(ForecastError::WrongHistoryLength(history.len()));
    }
    Ok(())
}

/// Per-second band statistics over a 7-day history: mean A, population
/// standard deviation SD, upper limit A + 1.5·SD, and lower limit B (the
/// mean of the values not above the upper limit).
pub fn clear_sky_band<F: Scalar>(history: &[DaySeries<F>]) -> Result<ClearSkyBand<F>, ForecastError> {
    check_history(history)?;
    let n = count::<F>(HISTORY_DAYS);
    let k = lit::<F>(1.5);
    let mut a = Vec::with_capacity(SECONDS_PER_DAY);
    let mut sd = Vec::with_capacity(SECONDS_PER_DAY);
    let mut upper = Vec::with_capacity(SECONDS_PER_DAY);
    let mut lower_b = Vec::with_capacity(SECONDS_PER_DAY);
    for t in 0..SECONDS_PER_DAY {
        let mut mean = F::zero();
        for day in history {
            mean += day.values()[t];
        }
        mean = mean / n;
        let mut var = F::zero();
        for day in history {
            let d = day.values()[t] - mean;
            var += d * d;
        }
        let s = (var / n).sqrt();
        let up = mean + k * s;
        let mut b_sum = F::zero();
        let mut b_n = F::zero();
        for day in history {
            let v = day.values()[t];
            if v <= up {
                b_sum += v;
                b_n += F::one();
            }
        }
        let b = if b_n > F::zero() { b_sum / b_n } else { mean };
        a.push(mean);
        sd.push(s);
        upper.push(up);
        lower_b.push(b);
    }
    Ok(ClearSkyBand { a, sd, upper, lower_b })
}

/// Clear-sky forecast: per second, the mean of the history values falling
/// inside [B, upper]; the plain mean A when the band is empty.
pub fn clear_sky_forecast<F: Scalar>(
    history: &[DaySeries<F>],
) -> Result<DaySeries<F>, ForecastError> {
    let band = clear_sky_band(history)?;
    let date = history[HISTORY_DAYS - 1]
        .date()
        .succ_opt()
        .unwrap_or_else(|| history[HISTORY_DAYS - 1].date());
    let mut values = Vec::with_capacity(SECONDS_PER_DAY);
    for t in 0..SECONDS_PER_DAY {
        let mut sum = F::zero();
        let mut n = F::zero();
        for day in history {
            let v = day.values()[t];
            if v >= band.lower_b[t] && v <= band.upper[t] {
                sum += v;
                n += F::one();
            }
        }
        let f = if n > F::zero() { sum / n } else { band.a[t] };
        values.push(f.max(F::zero()));
    }
    Ok(DaySeries::new(date, values).expect("forecast values are finite and non-negative"))
}

/// Per-day signed energy bias of forecast over actual; zero-actual days are
/// excluded and reported.
pub fn forecast_bias<F: Scalar>(
    pairs: &[(DaySeries<F>, DaySeries<F>)],
) -> Result<BiasReport<F>, ForecastError> {
    if pairs.is_empty() {
        return Err(ForecastError::EmptyInput);
    }
    let mut per_day_bias = Vec::new();
    let mut excluded_days = Vec::new();
    for (forecast, actual) in pairs {
        let f: F = forecast.values().iter().cloned().sum();
        let a: F = actual.values().iter().cloned().sum();
        if a == F::zero() {
            excluded_days.push(actual.date());
        } else {
            per_day_bias.push((actual.date(), (f - a) / a));
        }
    }
    if per_day_bias.is_empty() {
        return Err(ForecastError::AllDaysZeroActual);
    }
    let mean_bias =
        per_day_bias.iter().map(|(_, b)| *b).sum::<F>() / count(per_day_bias.len());
    Ok(BiasReport {
        per_day_bias,
        mean_bias,
        excluded_days,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2023, 3, 26).unwrap()
    }

    fn day_from_fn(f: impl Fn(usize) -> f64) -> DaySeries<f64> {
        DaySeries::new(date(), (0..SECONDS_PER_DAY).map(f).collect()).unwrap()
    }

    #[test]
    fn gaussian_peak_and_sigma_points() {
        let g = |t: f64| gaussian_eval(8000.0, 43200.0, 10000.0, t).unwrap();
        assert_eq!(g(43200.0), 8000.0);
        let e = 8000.0 * (-0.5f64).exp();
        assert_relative_eq!(g(33200.0), e, max_relative = 1e-12);
        assert_relative_eq!(g(53200.0), e, max_relative = 1e-12);
        assert_eq!(gaussian_eval(0.0, 43200.0, 1.0, 0.0).unwrap(), 0.0);
        assert_eq!(
            gaussian_eval(1.0, 0.0, 0.0, 0.0).unwrap_err(),
            ForecastError::NonPositiveSigma
        );
    }

    #[test]
    fn mse_basics() {
        let a = day_from_fn(|_| 0.0);
        let b = day_from_fn(|_| 10.0);
        assert_eq!(mse(&a, &a), 0.0);
        assert_relative_eq!(mse(&a, &b), 100.0, max_relative = 1e-12);
        assert_eq!(mse(&a, &b), mse(&b, &a));
    }

    #[test]
    fn gaussian_sums_match_direct_eval() {
        let y: Vec<f64> = (0..2000).map(|t| (t % 37) as f64).collect();
        let (mu, sigma) = (900.0, 250.0);
        let (sgg, sgy) = gaussian_sums(&y, mu, sigma);
        let mut egg = 0.0;
        let mut egy = 0.0;
        for (t, &v) in y.iter().enumerate() {
            let g = gaussian_eval(1.0, mu, sigma, t as f64).unwrap();
            egg += g * g;
            egy += g * v;
        }
        assert_relative_eq!(sgg, egg, max_relative = 1e-9);
        assert_relative_eq!(sgy, egy, max_relative = 1e-9);
    }

    #[test]
    fn fit_recovers_on_grid_gaussian_small_space() {
        let day = day_from_fn(|t| gaussian_eval(8000.0, 43200.0, 10000.0, t as f64).unwrap());
        let space = NormalFitSearchSpace {
            amp_lo: 7000.0,
            amp_hi: 9000.0,
            amp_step: 100.0,
            mu_lo: 43000.0,
            mu_hi: 43400.0,
            mu_step: 50.0,
            sigma_lo: 9500.0,
            sigma_hi: 10500.0,
            sigma_step: 100.0,
        };
        let fit = fit_normal(&day, &space).unwrap();
        assert_eq!((fit.amp, fit.mu, fit.sigma), (8000.0, 43200.0, 10000.0));
        assert!(fit.mse < 1e-6, "mse = {}", fit.mse);
    }

    #[test]
    fn fit_matches_exhaustive_rescan_on_small_grid() {
        let day = day_from_fn(|t| {
            gaussian_eval(5000.0, 40000.0, 8000.0, t as f64).unwrap() + (t % 11) as f64
        });
        let space = NormalFitSearchSpace {
            amp_lo: 4800.0,
            amp_hi: 5200.0,
            amp_step: 100.0,
            mu_lo: 39500.0,
            mu_hi: 40500.0,
            mu_step: 250.0,
            sigma_lo: 7500.0,
            sigma_hi: 8500.0,
            sigma_step: 250.0,
        };
        let fit = fit_normal(&day, &space).unwrap();
        // independent oracle: direct per-candidate evaluation
        let mut best: Option<(f64, f64, f64, f64)> = None;
        for amp in [4800.0, 4900.0, 5000.0, 5100.0, 5200.0] {
            for k in 0..5 {
                let mu = 39500.0 + 250.0 * k as f64;
                for j in 0..5 {
                    let sigma = 7500.0 + 250.0 * j as f64;
                    let curve =
                        day_from_fn(|t| gaussian_eval(amp, mu, sigma, t as f64).unwrap());
                    let m = mse(&curve, &day);
                    let cand = (m, amp, mu, sigma);
                    if best.is_none_or(|b| cand < b) {
                        best = Some(cand);
                    }
                }
            }
        }
        let (bm, ba, bmu, bs) = best.unwrap();
        assert_eq!((fit.amp, fit.mu, fit.sigma), (ba, bmu, bs));
        assert_relative_eq!(fit.mse, bm, max_relative = 1e-6);
    }

    #[test]
    fn fit_zero_day_picks_smallest_positive_amp() {
        let day = day_from_fn(|_| 0.0);
        let space = NormalFitSearchSpace {
            amp_lo: -2000.0,
            amp_hi: 2000.0,
            amp_step: 50.0,
            mu_lo: 43200.0,
            mu_hi: 43200.0,
            mu_step: 60.0,
            sigma_lo: 4000.0,
            sigma_hi: 4000.0,
            sigma_step: 100.0,
        };
        let fit = fit_normal(&day, &space).unwrap();
        assert_eq!(fit.amp, 50.0);
    }

    #[test]
    fn fit_single_point_grid() {
        let day = day_from_fn(|_| 1.0);
        let space = NormalFitSearchSpace {
            amp_lo: 123.0,
            amp_hi: 123.0,
            amp_step: 1.0,
            mu_lo: 40000.0,
            mu_hi: 40000.0,
            mu_step: 1.0,
            sigma_lo: 5000.0,
            sigma_hi: 5000.0,
            sigma_step: 1.0,
        };
        let fit = fit_normal(&day, &space).unwrap();
        assert_eq!((fit.amp, fit.mu, fit.sigma), (123.0, 40000.0, 5000.0));
    }

    #[test]
    fn fit_empty_space_rejected() {
        let day = day_from_fn(|_| 0.0);
        let space = NormalFitSearchSpace {
            amp_lo: -100.0,
            amp_hi: -50.0,
            amp_step: 10.0,
            mu_lo: 0.0,
            mu_hi: 1.0,
            mu_step: 1.0,
            sigma_lo: 1.0,
            sigma_hi: 2.0,
            sigma_step: 1.0,
        };
        assert_eq!(
            fit_normal(&day, &space).unwrap_err(),
            ForecastError::EmptySearchSpace
        );
    }

    fn seven(days: [f64; 7]) -> Vec<DaySeries<f64>> {
        days.iter()
            .enumerate()
            .map(|(i, &v)| {
                DaySeries::constant(date() - chrono::Days::new(7 - i as u64), v)
            })
            .collect()
    }

    #[test]
    fn band_identical_days() {
        let h = seven([3.0; 7]);
        let band = clear_sky_band(&h).unwrap();
        assert_eq!(band.a[0], 3.0);
        assert_eq!(band.sd[0], 0.0);
        assert_eq!(band.upper[0], 3.0);
        assert_eq!(band.lower_b[0], 3.0);
        let f = clear_sky_forecast(&h).unwrap();
        assert_eq!(f.values()[12345], 3.0);
    }

    #[test]
    fn band_single_outlier() {
        let h = seven([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 700.0]);
        let band = clear_sky_band(&h).unwrap();
        assert_relative_eq!(band.a[0], 100.0, max_relative = 1e-12);
        let var = (6.0 * 100.0f64.powi(2) + 600.0f64.powi(2)) / 7.0;
        assert_relative_eq!(band.sd[0], var.sqrt(), max_relative = 1e-12);
        assert!(band.upper[0] < 700.0);
        assert_eq!(band.lower_b[0], 0.0);
        let f = clear_sky_forecast(&h).unwrap();
        assert_eq!(f.values()[0], 0.0);
    }

    #[test]
    fn band_zero_history() {
        let h = seven([0.0; 7]);
        let band = clear_sky_band(&h).unwrap();
        assert_eq!(band.a[0], 0.0);
        assert_eq!(band.sd[0], 0.0);
        assert_eq!(band.upper[0], 0.0);
        assert_eq!(band.lower_b[0], 0.0);
    }

    #[test]
    fn forecast_six_clear_one_cloudy() {
        let h = seven([5000.0, 5000.0, 5000.0, 1000.0, 5000.0, 5000.0, 5000.0]);
        let f = clear_sky_forecast(&h).unwrap();
        assert_relative_eq!(f.values()[0], 5000.0, max_relative = 1e-12);
    }

    #[test]
    fn forecast_within_history_envelope() {
        // per-second values vary; forecast must stay within [min, max]
        let h: Vec<DaySeries<f64>> = (0..7)
            .map(|i| {
                DaySeries::new(
                    date(),
                    (0..SECONDS_PER_DAY)
                        .map(|t| ((t * (i + 3)) % 5000) as f64)
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        let f = clear_sky_forecast(&h).unwrap();
        for t in (0..SECONDS_PER_DAY).step_by(997) {
            let vals: Vec<f64> = h.iter().map(|d| d.values()[t]).collect();
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(f.values()[t] >= lo - 1e-9 && f.values()[t] <= hi + 1e-9);
        }
    }

    #[test]
    fn wrong_history_length() {
        let h = seven([1.0; 7]);
        assert_eq!(
            clear_sky_band(&h[..6]).unwrap_err(),
            ForecastError::WrongHistoryLength(6)
        );
    }

    #[test]
    fn band_shift_invariance() {
        let h = seven([100.0, 120.0, 90.0, 105.0, 110.0, 95.0, 130.0]);
        let shifted = seven([350.0, 370.0, 340.0, 355.0, 360.0, 345.0, 380.0]);
        let b0 = clear_sky_band(&h).unwrap();
        let b1 = clear_sky_band(&shifted).unwrap();
        assert_relative_eq!(b1.sd[0], b0.sd[0], max_relative = 1e-9);
        assert_relative_eq!(b1.a[0], b0.a[0] + 250.0, max_relative = 1e-12);
    }

    #[test]
    fn bias_identity_and_scaling() {
        let actual = day_from_fn(|t| (t % 100) as f64 + 1.0);
        let scaled = day_from_fn(|t| ((t % 100) as f64 + 1.0) * 1.05);
        let r = forecast_bias(&[(actual.clone(), actual.clone())]).unwrap();
        assert_eq!(r.mean_bias, 0.0);
        let r = forecast_bias(&[(scaled, actual)]).unwrap();
        assert_relative_eq!(r.mean_bias, 0.05, max_relative = 1e-9);
    }

    #[test]
    fn bias_zero_actual_days() {
        let zero = day_from_fn(|_| 0.0);
        assert_eq!(
            forecast_bias::<f64>(&[]).unwrap_err(),
            ForecastError::EmptyInput
        );
        assert_eq!(
            forecast_bias(&[(zero.clone(), zero.clone())]).unwrap_err(),
            ForecastError::AllDaysZeroActual
        );
        let one = day_from_fn(|_| 1.0);
        let r = forecast_bias(&[(one.clone(), one), (zero.clone(), zero)]).unwrap();
        assert_eq!(r.per_day_bias.len(), 1);
        assert_eq!(r.excluded_days.len(), 1);
    }
}
