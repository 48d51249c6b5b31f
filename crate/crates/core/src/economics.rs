//! Daily money functions under the feed-in tariff and export cap:
//! sales S, purchases B and balance M = S − B.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{lit, Scalar};
use crate::timeseries::DaySeries;
use crate::SECONDS_PER_DAY;

/// Watt-seconds per kWh.
pub const WS_PER_KWH: f64 = 3.6e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tariff<F> {
    pub sell_eur_per_kwh: F,
    pub buy_eur_per_kwh: F,
    pub max_sell_w: F,
}

impl<F: Scalar> Default for Tariff<F> {
    fn default() -> Self {
        Self {
            sell_eur_per_kwh: lit(0.13),
            buy_eur_per_kwh: lit(0.20),
            max_sell_w: lit(6000.0),
        }
    }
}

/// Per-second net power n(t) = production − consumption; negative means the
/// household draws from the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NetSeries<F> {
    values: Vec<F>,
}

#[derive(Debug, Error, PartialEq)]
pub enum EconomicsError {
    #[error("net series must have exactly 86400 values, got {0}")]
    WrongLength(usize),
    #[error("non-finite net value at t={0}")]
    NonFinite(usize),
}

impl<F: Scalar> NetSeries<F> {
    pub fn new(values: Vec<F>) -> Result<Self, EconomicsError> {
        if values.len() != SECONDS_PER_DAY {
            return Err(EconomicsError::WrongLength(values.len()));
        }
        for (t, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(EconomicsError::NonFinite(t));
            }
        }
        Ok(Self { values })
    }

    /// Consumption is stored non-negative everywhere else and negated only
    /// here, at the single production-minus-consumption boundary.
    pub fn from_production_consumption(
        production: &DaySeries<F>,
        consumption: &[F],
    ) -> Result<Self, EconomicsError> {
        if consumption.len() != SECONDS_PER_DAY {
            return Err(EconomicsError::WrongLength(consumption.len()));
        }
        let values = production
            .values()
            .iter()
            .zip(consumption)
            .map(|(&p, &c)| p - c)
            .collect();
        Self::new(values)
    }

    pub fn constant(watts: F) -> Self {
        Self {
            values: vec![watts; SECONDS_PER_DAY],
        }
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }
}

/// S(j), B(j) and M(j) for one day, in EUR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyBalance<F> {
    pub sales_eur: F,
    pub purchases_eur: F,
    pub balance_eur: F,
}

/// Money gained by selling surplus, capped at `max_sell_w` per second.
pub fn daily_sales<F: Scalar>(net: &NetSeries<F>, tariff: &Tariff<F>) -> F {
    let mut ws = F::zero();
    for &n in net.values() {
        ws += tariff.max_sell_w.min(n.max(F::zero()));
    }
    ws * tariff.sell_eur_per_kwh / lit(WS_PER_KWH)
}

/// Money spent buying the deficit from the grid.
pub fn daily_purchases<F: Scalar>(net: &NetSeries<F>, tariff: &Tariff<F>) -> F {
    let mut ws = F::zero();
    for &n in net.values() {
        ws += (-n).max(F::zero());
    }
    ws * tariff.buy_eur_per_kwh / lit(WS_PER_KWH)
}

pub fn daily_balance<F: Scalar>(net: &NetSeries<F>, tariff: &Tariff<F>) -> DailyBalance<F> {
    let sales_eur = daily_sales(net, tariff);
    let purchases_eur = daily_purchases(net, tariff);
    DailyBalance {
        sales_eur,
        purchases_eur,
        balance_eur: sales_eur - purchases_eur,
    }
}

/// Money contribution of a single second at net power `n`, in EUR.
///
/// Used by the planner for incremental objective evaluation; summing this
/// over a day equals `daily_balance`'s result.
#[inline]
pub fn second_money<F: Scalar>(n: F, tariff: &Tariff<F>) -> F {
    let sold = tariff.max_sell_w.min(n.max(F::zero()));
    let bought = (-n).max(F::zero());
    (sold * tariff.sell_eur_per_kwh - bought * tariff.buy_eur_per_kwh) / lit(WS_PER_KWH)
}
