//! Device scheduling: greedy rectangle placement against the forecast,
//! per-second runtime adaptation, the threshold-based adaptive controller,
//! the fixed-clock bruteforce schedule, and the decision-resolution sweep.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::devices::{DeviceRuntimeState, Fleet};
use crate::disaggregation::SwitchKind;
use crate::economics::{second_money, Tariff};
use crate::num::Scalar;
use crate::timeseries::DaySeries;
use crate::SECONDS_PER_DAY;

/// One planned constant-power run of a device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledBlock<F> {
    pub device: String,
    pub start: usize,
    pub end: usize,
    pub power_w: F,
}

/// The rectangles fitted into one day's production envelope.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DayPlan<F> {
    pub blocks: Vec<ScheduledBlock<F>>,
}

impl<F: Scalar> DayPlan<F> {
    pub fn blocks_for(&self, device: &str) -> Vec<(usize, usize)> {
        self.blocks
            .iter()
            .filter(|b| b.device == device)
            .map(|b| (b.start, b.end))
            .collect()
    }

    /// Total controllable load the plan implies, per second.
    pub fn controllable_load(&self) -> Vec<F> {
        let mut load = vec![F::zero(); SECONDS_PER_DAY];
        for b in &self.blocks {
            for slot in load.iter_mut().take(b.end).skip(b.start) {
                *slot += b.power_w;
            }
        }
        load
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Smart,
    Adaptive,
    Bruteforce,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig<F> {
    pub mode: Mode,
    /// Fixed threshold shared by all devices; per-device power when absent.
    pub threshold_w: Option<F>,
    pub decision_interval_s: usize,
    pub sufficiency_margin_w: F,
    /// Minimum seconds between threshold-driven switches of one device.
    pub min_dwell_s: usize,
}

impl<F: Scalar> ControllerConfig<F> {
    pub fn adaptive(decision_interval_s: usize) -> Self {
        Self {
            mode: Mode::Adaptive,
            threshold_w: None,
            decision_interval_s,
            sufficiency_margin_w: F::zero(),
            min_dwell_s: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub device: String,
    pub kind: SwitchKind,
    pub t: usize,
}

/// Realized per-second controller output for one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace<F> {
    pub controllable_w: Vec<F>,
    pub device_on: Vec<(String, Vec<bool>)>,
    pub events: Vec<TraceEvent>,
}

impl<F: Scalar> SimulationTrace<F> {
    fn empty(fleet: &Fleet<F>) -> Self {
        Self {
            controllable_w: vec![F::zero(); SECONDS_PER_DAY],
            device_on: fleet
                .devices()
                .iter()
                .map(|d| (d.name.clone(), vec![false; SECONDS_PER_DAY]))
                .collect(),
            events: Vec::new(),
        }
    }

    pub fn on_series(&self, device: &str) -> Option<&[bool]> {
        self.device_on
            .iter()
            .find(|(n, _)| n == device)
            .map(|(_, s)| s.as_slice())
    }

    /// Total realized ON seconds of a device.
    pub fn on_time_s(&self, device: &str) -> usize {
        self.on_series(device)
            .map(|s| s.iter().filter(|&&b| b).count())
            .unwrap_or(0)
    }

    /// Maximal ON runs of a device as half-open ranges.
    pub fn blocks(&self, device: &str) -> Vec<(usize, usize)> {
        let Some(s) = self.on_series(device) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        let mut t = 0;
        while t < s.len() {
            if s[t] {
                let start = t;
                while t < s.len() && s[t] {
                    t += 1;
                }
                out.push((start, t));
            } else {
                t += 1;
            }
        }
        out
    }
}

/// PV utilization of the controllable load at one decision interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolutionRow<F> {
    pub interval_s: usize,
    pub pv_energy_used_ws: F,
    pub grid_energy_ws: F,
    pub utilization_vs_1s: F,
}

#[derive(Debug, Error, PartialEq)]
pub enum SchedulerError {
    #[error("device {device}: start {start} + duration {required_s} overflows the day")]
    StartOverflowsDay {
        device: String,
        start: usize,
        required_s: usize,
    },
    #[error("no start time given for device {0}")]
    MissingStartTime(String),
    #[error("resolution sweep requires the 1 s baseline interval")]
    BaselineMissing,
    #[error("decision interval {0} does not divide 86400")]
    NonDivisorInterval(usize),
}

/// Production covers the device when what remains after the base load and
/// the already-active controllable load is at least its power plus margin.
#[inline]
pub fn pv_sufficient<F: Scalar>(
    live_production: F,
    base_load_w: F,
    active_load_w: F,
    device_power_w: F,
    margin_w: F,
) -> bool {
    live_production - base_load_w - active_load_w >= device_power_w + margin_w
}

/// Place every device's rectangle, longest required duration first, choosing
/// the minute-grid start that maximizes the daily balance M of what remains.
pub fn plan_smart<F: Scalar>(
    forecast: &DaySeries<F>,
    base_load_w: F,
    fleet: &Fleet<F>,
    tariff: &Tariff<F>,
) -> DayPlan<F> {
    const STRIDE: usize = 60;
    let mut residual: Vec<F> = forecast
        .values()
        .iter()
        .map(|&p| p - base_load_w)
        .collect();

    let mut order: Vec<usize> = (0..fleet.len()).collect();
    order.sort_by_key(|&i| {
        let d = &fleet.devices()[i];
        (std::cmp::Reverse(d.required_s), d.priority)
    });

    let mut blocks = Vec::with_capacity(fleet.len());
    for i in order {
        let dev = &fleet.devices()[i];
        let dur = dev.required_s;
        let p = dev.power_w;
        let mut best_start = 0usize;
        let mut best_delta = F::neg_infinity();
        let mut s = 0usize;
        while s + dur <= SECONDS_PER_DAY {
            let mut delta = F::zero();
            for &n in &residual[s..s + dur] {
                delta += second_money(n - p, tariff) - second_money(n, tariff);
            }
            if delta > best_delta {
                best_delta = delta;
                best_start = s;
            }
            s += STRIDE;
        }
        for slot in residual.iter_mut().take(best_start + dur).skip(best_start) {
            *slot -= p;
        }
        blocks.push(ScheduledBlock {
            device: dev.name.clone(),
            start: best_start,
            end: best_start + dur,
            power_w: p,
        });
    }
    // report in fleet (priority) order
    blocks.sort_by_key(|b| {
        fleet
            .devices()
            .iter()
            .position(|d| d.name == b.device)
            .unwrap_or(usize::MAX)
    });
    DayPlan { blocks }
}

/// One tick of the runtime adaptation state machine, for every device in
/// priority order. Mutates `states` and returns the switch commands issued
/// at second `t`.
pub fn adapt_step<F: Scalar>(
    fleet: &Fleet<F>,
    states: &mut [DeviceRuntimeState],
    live_production: F,
    base_load_w: F,
    margin_w: F,
    t: usize,
) -> Vec<TraceEvent> {
    debug_assert_eq!(states.len(), fleet.len());
    let mut events = Vec::new();
    let mut active = F::zero();
    for (i, dev) in fleet.devices().iter().enumerate() {
        if states[i].on {
            active += dev.power_w;
        }
    }
    for (i, dev) in fleet.devices().iter().enumerate() {
        let st = &mut states[i];
        if !st.on {
            if t >= st.t_on
                && st.remaining_s > 0
                && pv_sufficient(live_production, base_load_w, active, dev.power_w, margin_w)
            {
                st.on = true;
                st.t_off = t + st.remaining_s;
                active += dev.power_w;
                events.push(TraceEvent {
                    device: dev.name.clone(),
                    kind: SwitchKind::On,
                    t,
                });
            }
        } else if t >= st.t_off {
            st.on = false;
            st.remaining_s = 0;
            active -= dev.power_w;
            events.push(TraceEvent {
                device: dev.name.clone(),
                kind: SwitchKind::Off,
                t,
            });
        } else if !pv_sufficient(
            live_production,
            base_load_w,
            active - dev.power_w,
            dev.power_w,
            margin_w,
        ) {
            st.on = false;
            st.remaining_s = st.t_off - t;
            active -= dev.power_w;
            events.push(TraceEvent {
                device: dev.name.clone(),
                kind: SwitchKind::Off,
                t,
            });
        }
    }
    events
}

/// A smart run: the plan and the trace realized against actual production.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmartRun<F> {
    pub plan: DayPlan<F>,
    pub trace: SimulationTrace<F>,
}

/// Plan against the forecast, then execute the runtime adaptation per second
/// against the actual production.
pub fn run_smart<F: Scalar>(
    forecast: &DaySeries<F>,
    production: &DaySeries<F>,
    base_load_w: F,
    fleet: &Fleet<F>,
    tariff: &Tariff<F>,
    margin_w: F,
) -> SmartRun<F> {
    let plan = plan_smart(forecast, base_load_w, fleet, tariff);
    let mut states: Vec<DeviceRuntimeState> = fleet
        .devices()
        .iter()
        .map(|d| {
            let (t_on, t_off) = plan
                .blocks_for(&d.name)
                .first()
                .copied()
                .unwrap_or((0, d.required_s));
            DeviceRuntimeState {
                on: false,
                t_on,
                t_off,
                remaining_s: d.required_s,
            }
        })
        .collect();

    let mut trace = SimulationTrace::empty(fleet);
    let prod = production.values();
    for (t, &p) in prod.iter().enumerate() {
        let mut events = adapt_step(fleet, &mut states, p, base_load_w, margin_w, t);
        trace.events.append(&mut events);
        for (i, dev) in fleet.devices().iter().enumerate() {
            if states[i].on {
                trace.controllable_w[t] += dev.power_w;
                trace.device_on[i].1[t] = true;
            }
        }
    }
    SmartRun { plan, trace }
}

/// Threshold controller: at every decision boundary, switch devices in
/// priority order on the residual production observed at the boundary.
pub fn run_adaptive<F: Scalar>(
    production: &DaySeries<F>,
    base_load_w: F,
    fleet: &Fleet<F>,
    cfg: &ControllerConfig<F>,
) -> Result<SimulationTrace<F>, SchedulerError> {
    let interval = cfg.decision_interval_s;
    if interval == 0 || !SECONDS_PER_DAY.is_multiple_of(interval) {
        return Err(SchedulerError::NonDivisorInterval(interval));
    }
    let prod = production.values();
    let n = fleet.len();
    let mut on = vec![false; n];
    let mut remaining: Vec<usize> = fleet.devices().iter().map(|d| d.required_s).collect();
    let mut last_change: Vec<Option<usize>> = vec![None; n];
    let mut trace = SimulationTrace::empty(fleet);

    for (t, &obs) in prod.iter().enumerate() {
        if t % interval == 0 {
            let mut active = F::zero();
            for (i, dev) in fleet.devices().iter().enumerate() {
                if on[i] {
                    active += dev.power_w;
                }
            }
            for (i, dev) in fleet.devices().iter().enumerate() {
                let threshold = cfg.threshold_w.unwrap_or(dev.power_w);
                let dwell_ok = last_change[i].is_none_or(|c| t - c >= cfg.min_dwell_s);
                if on[i] {
                    let residual_excl_self = obs - base_load_w - (active - dev.power_w);
                    if residual_excl_self < threshold && dwell_ok {
                        on[i] = false;
                        active -= dev.power_w;
                        last_change[i] = Some(t);
                        trace.events.push(TraceEvent {
                            device: dev.name.clone(),
                            kind: SwitchKind::Off,
                            t,
                        });
                    }
                } else if remaining[i] > 0 {
                    let residual = obs - base_load_w - active;
                    if residual >= threshold && dwell_ok {
                        on[i] = true;
                        active += dev.power_w;
                        last_change[i] = Some(t);
                        trace.events.push(TraceEvent {
                            device: dev.name.clone(),
                            kind: SwitchKind::On,
                            t,
                        });
                    }
                }
            }
        }
        for (i, dev) in fleet.devices().iter().enumerate() {
            if on[i] {
                trace.controllable_w[t] += dev.power_w;
                trace.device_on[i].1[t] = true;
                remaining[i] -= 1;
                if remaining[i] == 0 {
                    // daily budget exhausted, stop regardless of the interval
                    on[i] = false;
                    trace.events.push(TraceEvent {
                        device: dev.name.clone(),
                        kind: SwitchKind::Off,
                        t: t + 1,
                    });
                }
            }
        }
    }
    Ok(trace)
}

/// The paper's fixed-clock reference starts: pool pump at noon, car at 18:00,
/// hot water at 19:00.
pub fn default_bruteforce_starts() -> HashMap<String, usize> {
    HashMap::from([
        ("pool_pump".to_string(), 43_200),
        ("car".to_string(), 64_800),
        ("hot_water".to_string(), 68_400),
    ])
}

/// Fixed-time schedule: each device runs exactly its required duration from
/// its configured start, independent of production.
pub fn run_bruteforce<F: Scalar>(
    fleet: &Fleet<F>,
    start_times: &HashMap<String, usize>,
) -> Result<SimulationTrace<F>, SchedulerError> {
    let mut trace = SimulationTrace::empty(fleet);
    for (i, dev) in fleet.devices().iter().enumerate() {
        let &start = start_times
            .get(&dev.name)
            .ok_or_else(|| SchedulerError::MissingStartTime(dev.name.clone()))?;
        let end = start + dev.required_s;
        if end > SECONDS_PER_DAY {
            return Err(SchedulerError::StartOverflowsDay {
                device: dev.name.clone(),
                start,
                required_s: dev.required_s,
            });
        }
        for t in start..end {
            trace.controllable_w[t] += dev.power_w;
            trace.device_on[i].1[t] = true;
        }
        trace.events.push(TraceEvent {
            device: dev.name.clone(),
            kind: SwitchKind::On,
            t: start,
        });
        trace.events.push(TraceEvent {
            device: dev.name.clone(),
            kind: SwitchKind::Off,
            t: end,
        });
    }
    trace.events.sort_by_key(|e| e.t);
    Ok(trace)
}

fn trace_energy<F: Scalar>(
    production: &DaySeries<F>,
    base_load_w: F,
    trace: &SimulationTrace<F>,
) -> (F, F) {
    let mut pv_used = F::zero();
    let mut grid = F::zero();
    for (t, &p) in production.values().iter().enumerate() {
        let ctrl = trace.controllable_w[t];
        let total = ctrl + base_load_w;
        if ctrl > F::zero() {
            pv_used += p.min(total);
        }
        grid += (total - p).max(F::zero());
    }
    (pv_used, grid)
}

/// Run the adaptive controller at each decision interval with a fixed
/// threshold and report PV energy used, grid energy and utilization
/// relative to the 1 s baseline.
pub fn resolution_metrics<F: Scalar>(
    production: &DaySeries<F>,
    base_load_w: F,
    fleet: &Fleet<F>,
    intervals: &[usize],
    threshold_w: F,
) -> Result<Vec<ResolutionRow<F>>, SchedulerError> {
    if !intervals.contains(&1) {
        return Err(SchedulerError::BaselineMissing);
    }
    let run = |interval: usize| -> Result<(F, F), SchedulerError> {
        let cfg = ControllerConfig {
            mode: Mode::Adaptive,
            threshold_w: Some(threshold_w),
            decision_interval_s: interval,
            sufficiency_margin_w: F::zero(),
            min_dwell_s: 0,
        };
        let trace = run_adaptive(production, base_load_w, fleet, &cfg)?;
        Ok(trace_energy(production, base_load_w, &trace))
    };
    let (baseline_pv, _) = run(1)?;
    let mut rows = Vec::with_capacity(intervals.len());
    for &interval in intervals {
        let (pv_used, grid) = run(interval)?;
        let utilization = if baseline_pv > F::zero() {
            pv_used / baseline_pv
        } else if pv_used == F::zero() {
            F::one()
        } else {
            F::infinity()
        };
        rows.push(ResolutionRow {
            interval_s: interval,
            pv_energy_used_ws: pv_used,
            grid_energy_ws: grid,
            utilization_vs_1s: utilization,
        });
    }
    Ok(rows)
}
