//! Reference implementations used to check the library from the outside.
//! Each one is written from first principles and shares no numerical code
//! with the routine it checks.

#![allow(dead_code)]

pub mod gibbs;
pub mod mlp;
pub mod pressure;

use enginecal::drive_cycle::{rpm_from_speed, DriveCycleModel, GridPoint, RegimeModifiers, TraceSample};
use enginecal::engine::{EngineConfig, OperatingPoint};

/// Mid-load operating point inside the campaign envelope.
pub fn mid_load() -> OperatingPoint {
    OperatingPoint {
        rpm: 2000.0,
        fuel_per_cycle: 2.2e-5,
        afr: 15.03 / 0.95,
        inlet_pressure: 0.6e5,
        intake_air_mass: 3.3e-4,
        ambient_temp: 298.0,
        humidity: 0.01,
        egr_fraction: 0.08,
        valve_timing_deg: 16.0,
        wall_temp: 420.0,
    }
}

/// Operating point the campaign would derive for a steady sample with the
/// given vehicle speed (m/s) and fuel per cylinder per cycle (kg).
pub fn derived_point(speed: f64, fuel_per_cycle: f64, valve_timing_deg: f64) -> (EngineConfig, OperatingPoint) {
    let model = DriveCycleModel::default();
    let point = GridPoint {
        spark_deg: -25.0,
        gear_scale: 1.0,
        ambient_temp: 298.0,
        humidity: 0.01,
        valve_timing_deg,
        compression_ratio: 10.0,
    };
    let engine = model.engine_for(&point).expect("valid grid point");
    let rpm = rpm_from_speed(&model.vehicle, speed);
    let sample = TraceSample {
        t: 0.0,
        vehicle_speed: speed,
        fuel_flow: fuel_per_cycle * rpm / 120.0 * engine.geometry.n_cylinders as f64,
    };
    let (op, _) = model.derive_inputs(&engine, &sample, &point, &RegimeModifiers::default());
    (engine, op)
}
