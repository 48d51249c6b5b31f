//! Solar self-consumption toolkit: per-second PV/load series cleaning,
//! clear-sky forecasting, single-meter device disaggregation, feed-in money
//! accounting and day-ahead/adaptive load scheduling.
//!
//! All math is generic over the scalar type (`f32` or `f64`) through
//! [`num::Scalar`]; the type aliases at the crate root fix `f64` for typical
//! use.

pub mod devices;
pub mod disaggregation;
pub mod economics;
pub mod forecast;
pub mod harness;
pub mod num;
pub mod scheduler;
pub mod timeseries;

/// Seconds in one civil day; every per-second series has exactly this length.
pub const SECONDS_PER_DAY: usize = 86_400;

pub type DaySeries = timeseries::DaySeries<f64>;
pub type RawSample = timeseries::RawSample<f64>;
pub type Tariff = economics::Tariff<f64>;
pub type NetSeries = economics::NetSeries<f64>;
pub type DailyBalance = economics::DailyBalance<f64>;
pub type Fleet = devices::Fleet<f64>;
pub type DeviceProfile = devices::DeviceProfile<f64>;
pub type NormalFitResult = forecast::NormalFitResult<f64>;
pub type DayPlan = scheduler::DayPlan<f64>;
pub type SimulationTrace = scheduler::SimulationTrace<f64>;
pub type ControllerConfig = scheduler::ControllerConfig<f64>;
pub type Scenario = harness::Scenario<f64>;
pub type ComparisonReport = harness::ComparisonReport<f64>;
pub type SynthParams = harness::SynthParams<f64>;
