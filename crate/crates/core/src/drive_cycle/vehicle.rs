use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::DriveCycleError;

/// Five-speed gear map with a hysteresis-free upshift schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleConfig {
    pub gear_ratios: [f64; 5],
    pub final_drive: f64,
    /// m
    pub wheel_radius: f64,
    pub idle_rpm: f64,
    /// Vehicle speed at which gear `i + 1` is engaged, m/s.
    pub upshift_speeds: [f64; 4],
}

impl Default for VehicleConfig {
    fn default() -> Self {
        Self {
            gear_ratios: [3.5, 2.1, 1.4, 1.0, 0.8],
            final_drive: 3.9,
            wheel_radius: 0.3,
            idle_rpm: 800.0,
            upshift_speeds: [4.5, 9.0, 14.0, 19.0],
        }
    }
}

impl VehicleConfig {
    pub fn validate(&self) -> Result<(), DriveCycleError> {
        let bad = |m: &str| Err(DriveCycleError::InvalidConfig(m.to_string()));
        if self.gear_ratios.iter().any(|g| !(*g > 0.0)) || self.gear_ratios.windows(2).any(|w| w[1] >= w[0]) {
            return bad("gear ratios must be positive and strictly decreasing");
        }
        if self.upshift_speeds.iter().any(|v| !(*v > 0.0)) || self.upshift_speeds.windows(2).any(|w| w[1] <= w[0]) {
            return bad("upshift speeds must be positive and strictly increasing");
        }
        if !(self.final_drive > 0.0 && self.wheel_radius > 0.0 && self.idle_rpm > 0.0) {
            return bad("final drive, wheel radius and idle rpm must be positive");
        }
        Ok(())
    }

    /// Zero-based gear engaged at `speed`.
    pub fn gear_index(&self, speed: f64) -> usize {
        self.upshift_speeds.iter().take_while(|&&v| speed >= v).count()
    }

    /// Overall engine-to-wheel ratio at `speed`, including the final drive.
    pub fn overall_ratio(&self, speed: f64) -> f64 {
        self.gear_ratios[self.gear_index(speed)] * self.final_drive
    }
}

/// Engine speed from vehicle speed through the gear map, clamped at idle.
pub fn rpm_from_speed(vehicle: &VehicleConfig, speed: f64) -> f64 {
    let wheel_rpm = speed / (2.0 * PI * vehicle.wheel_radius) * 60.0;
    (wheel_rpm * vehicle.overall_ratio(speed)).max(vehicle.idle_rpm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standstill_is_idle() {
        let v = VehicleConfig::default();
        assert_eq!(rpm_from_speed(&v, 0.0), v.idle_rpm);
    }

    #[test]
    fn gear_bands() {
        let v = VehicleConfig::default();
        assert_eq!(v.gear_index(0.0), 0);
        assert_eq!(v.gear_index(4.5), 1);
        assert_eq!(v.gear_index(30.0), 4);
    }

    #[test]
    fn rejects_non_monotone_ratios() {
        let mut v = VehicleConfig::default();
        v.gear_ratios[2] = 2.5;
        assert!(v.validate().is_err());
    }
}
