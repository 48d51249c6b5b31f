//! Static device consumption models and the runtime state driven by the
//! controllers. Devices are two-state constant-power loads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{lit, Scalar};
use crate::SECONDS_PER_DAY;

/// Constant-power load with a required daily ON time.
///
/// Lower `priority` means the device is switched on first and off last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile<F> {
    pub name: String,
    pub power_w: F,
    pub required_s: usize,
    pub priority: u32,
}

/// Live controller state for one device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceRuntimeState {
    pub on: bool,
    pub t_on: usize,
    pub t_off: usize,
    pub remaining_s: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum DeviceError {
    #[error("fleet is empty")]
    EmptyFleet,
    #[error("device {0}: power must be positive")]
    NonPositivePower(String),
    #[error("device {0}: required_s must be in (0, 86400]")]
    BadRequiredDuration(String),
    #[error("duplicate priority {0}")]
    DuplicatePriority(u32),
    #[error("water temperature must be positive")]
    NonPositiveTemperature,
}

/// Devices sorted ascending by priority.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fleet<F> {
    devices: Vec<DeviceProfile<F>>,
}

impl<F: Scalar> Fleet<F> {
    pub fn new(mut devices: Vec<DeviceProfile<F>>) -> Result<Self, DeviceError> {
        if devices.is_empty() {
            return Err(DeviceError::EmptyFleet);
        }
        for d in &devices {
            if d.power_w <= F::zero() {
                return Err(DeviceError::NonPositivePower(d.name.clone()));
            }
            if d.required_s == 0 || d.required_s > SECONDS_PER_DAY {
                return Err(DeviceError::BadRequiredDuration(d.name.clone()));
            }
        }
        devices.sort_by_key(|d| d.priority);
        for pair in devices.windows(2) {
            if pair[0].priority == pair[1].priority {
                return Err(DeviceError::DuplicatePriority(pair[0].priority));
            }
        }
        Ok(Self { devices })
    }

    pub fn devices(&self) -> &[DeviceProfile<F>] {
        &self.devices
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&DeviceProfile<F>> {
        self.devices.iter().find(|d| d.name == name)
    }
}

/// The studied household: pool pump, hot water boiler and electric car.
pub fn default_fleet<F: Scalar>() -> Fleet<F> {
    Fleet::new(vec![
        DeviceProfile {
            name: "pool_pump".into(),
            power_w: lit(2000.0),
            required_s: 36_000,
            priority: 0,
        },
        DeviceProfile {
            name: "hot_water".into(),
            power_w: lit(2000.0),
            required_s: 9000,
            priority: 1,
        },
        DeviceProfile {
            name: "car".into(),
            power_w: lit(2300.0),
            required_s: 9000,
            priority: 2,
        },
    ])
    .expect("default fleet is valid")
}

/// Pool pump daily runtime: water temperature divided by two, in hours,
/// capped at a full day.
pub fn pool_runtime(temperature_c: f64) -> Result<usize, DeviceError> {
    if temperature_c <= 0.0 {
        return Err(DeviceError::NonPositiveTemperature);
    }
    let seconds = temperature_c / 2.0 * 3600.0;
    Ok((seconds.round() as usize).min(SECONDS_PER_DAY))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_fleet_matches_household() {
        let fleet = default_fleet::<f64>();
        let names: Vec<&str> = fleet.devices().iter().map(|d| d.name.as_str()).collect();
        assert_eq!(names, ["pool_pump", "hot_water", "car"]);
        assert_eq!(fleet.get("car").unwrap().power_w, 2300.0);
        assert_eq!(fleet.get("hot_water").unwrap().power_w, 2000.0);
        assert_eq!(fleet.get("hot_water").unwrap().required_s, 9000);
        assert_eq!(fleet.get("pool_pump").unwrap().required_s, 36_000);
    }

    #[test]
    fn pool_runtime_rule() {
        assert_eq!(pool_runtime(20.0).unwrap(), 36_000);
        assert_eq!(pool_runtime(2.0).unwrap(), 3600);
        assert_eq!(pool_runtime(60.0).unwrap(), SECONDS_PER_DAY);
        assert_eq!(
            pool_runtime(0.0).unwrap_err(),
            DeviceError::NonPositiveTemperature
        );
    }

    #[test]
    fn fleet_rejects_duplicate_priority() {
        let err = Fleet::<f64>::new(vec![
            DeviceProfile {
                name: "a".into(),
                power_w: 100.0,
                required_s: 60,
                priority: 1,
            },
            DeviceProfile {
                name: "b".into(),
                power_w: 100.0,
                required_s: 60,
                priority: 1,
            },
        ])
        .unwrap_err();
        assert_eq!(err, DeviceError::DuplicatePriority(1));
    }

    #[test]
    fn fleet_sorts_by_priority() {
        let fleet = Fleet::<f64>::new(vec![
            DeviceProfile {
                name: "b".into(),
                power_w: 100.0,
                required_s: 60,
                priority: 2,
            },
            DeviceProfile {
                name: "a".into(),
                power_w: 100.0,
                required_s: 60,
                priority: 1,
            },
        ])
        .unwrap();
        assert_eq!(fleet.devices()[0].name, "a");
    }
}
