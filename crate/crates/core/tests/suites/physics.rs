use std::f64::consts::PI;

use enginecal::engine::{
    burn_fraction, cylinder_volume, simulate_engine_cycle, simulate_engine_cycle_trace, CombustionSpec, CycleModel,
    EngineConfig, IntegrationSettings, OperatingPoint,
};
use crate::oracles::{derived_point, mid_load};
use crate::oracles::pressure::EnergyEquation;

fn with_step(dtheta: f64) -> EngineConfig {
    EngineConfig {
        integration: IntegrationSettings {
            dtheta,
            ..IntegrationSettings::default()
        },
        ..EngineConfig::default()
    }
}

/// Campaign-consistent points across speed, load and EGR.
fn sweep_points() -> Vec<OperatingPoint> {
    let mut out = Vec::new();
    for fuel in [0.5e-5, 1.2e-5, 1.9e-5, 2.6e-5] {
        for (speed, valve) in [(4.0, 0.0), (11.0, 20.0), (20.0, 40.0)] {
            out.push(derived_point(speed, fuel, valve).1);
        }
    }
    out
}

pub fn adiabatic_compression_and_expansion_keep_pv_gamma() {
    let config = EngineConfig::default();
    for op in sweep_points() {
        let model = CycleModel::new(&config, &op).without_heat_exchange();
        let gamma = model.gamma_charge();
        let invariant = |theta: f64, p: f64| p * cylinder_volume(&config.geometry, theta).powf(gamma);
        let mut state = model.initial_state();
        let reference = invariant(state.theta, state.pressure);
        let mut worst_step: f64 = 0.0;
        let mut worst_total: f64 = 0.0;
        for _ in 0..3000 {
            let next = model.step_pressure(&state, 0.1).unwrap();
            let before = invariant(state.theta, state.pressure);
            let after = invariant(next.theta, next.pressure);
            worst_step = worst_step.max(((after - before) / before).abs());
            worst_total = worst_total.max(((after - reference) / reference).abs());
            state = next;
        }
        assert!((state.theta - 140.0).abs() < 1e-9);
        assert!(worst_step < 1e-6, "per-step drift {worst_step}");
        assert!(worst_total < 1e-5, "stroke drift {worst_total}");
    }
}

pub fn released_heat_matches_fuel_energy_times_burn_fraction() {
    let config = EngineConfig::default();
    let x_end = burn_fraction(&config.combustion, config.integration.theta_evo);
    for op in sweep_points() {
        let trace = simulate_engine_cycle_trace(&config, &op).unwrap();
        let end = trace.states.last().unwrap();
        let expected = op.fuel_per_cycle * config.fluid.fuel_lhv * x_end;
        let rel = (end.cumulative_heat_release - expected).abs() / expected;
        assert!(rel < 1e-6, "heat release off by {rel}");
    }
}

pub fn indicated_work_never_exceeds_released_heat() {
    for spark in [-40.0, -25.0, -10.0] {
        let config = EngineConfig {
            combustion: CombustionSpec {
                spark_deg: spark,
                ..CombustionSpec::default()
            },
            ..EngineConfig::default()
        };
        for op in sweep_points() {
            let trace = simulate_engine_cycle_trace(&config, &op).unwrap();
            let end = trace.states.last().unwrap();
            assert!(trace.indicated_work <= end.cumulative_heat_release);
            assert!(end.work <= end.cumulative_heat_release);
            assert!(trace.indicated_work > 0.0);
        }
    }
}

pub fn compression_stroke_agrees_with_fine_euler_oracle() {
    // Fired, with wall losses and the first part of the burn before TDC.
    let config = EngineConfig {
        combustion: CombustionSpec {
            spark_deg: -20.0,
            ..CombustionSpec::default()
        },
        ..with_step(0.1)
    };
    let op = mid_load();
    let model = CycleModel::new(&config, &op);
    let mut state = model.initial_state();
    let theta0 = state.theta;
    let p0 = state.pressure;
    for _ in 0..1600 {
        state = model.step_pressure(&state, 0.1).unwrap();
    }
    assert!(state.theta.abs() < 1e-9);
    let oracle = EnergyEquation::new(&config, &op);
    let n = 1_600_000; // 1e-4 CAD
    let reference = oracle.euler_extrapolated(theta0, p0, 0.0, n);
    let rel = (state.pressure - reference).abs() / reference;
    assert!(rel < 1e-8, "RK4 vs oracle relative error {rel}");

    let plain = oracle.euler(theta0, p0, 0.0, n);
    assert!((plain - reference).abs() / reference < 1e-4);
}

pub fn unfired_compression_agrees_with_fine_euler_oracle_at_default_step() {
    let config = EngineConfig::default();
    let op = OperatingPoint {
        fuel_per_cycle: 0.0,
        ..mid_load()
    };
    let model = CycleModel::new(&config, &op);
    let mut state = model.initial_state();
    let (theta0, p0) = (state.theta, state.pressure);
    for _ in 0..320 {
        state = model.step_pressure(&state, 0.5).unwrap();
    }
    let reference = EnergyEquation::new(&config, &op).euler_extrapolated(theta0, p0, 0.0, 1_600_000);
    let rel = (state.pressure - reference).abs() / reference;
    assert!(rel < 1e-8, "relative error {rel}");
}

pub fn peak_pressure_converges_monotonically_with_step() {
    for op in sweep_points() {
        let peaks: Vec<f64> = [1.0, 0.5, 0.25]
            .iter()
            .map(|&h| simulate_engine_cycle(&with_step(h), &op).unwrap().peak_pressure)
            .collect();
        let d1 = (peaks[1] - peaks[0]).abs();
        let d2 = (peaks[2] - peaks[1]).abs();
        assert!(d2 < d1, "changes {d1} then {d2}");
    }
}

pub fn torque_rises_with_fuel_and_respects_first_law() {
    let mut previous = f64::NEG_INFINITY;
    for k in 0..10 {
        let fuel = 0.4e-5 + k as f64 * 0.24e-5;
        let (config, op) = derived_point(11.0, fuel, 20.0);
        let out = simulate_engine_cycle(&config, &op).unwrap();
        assert!(out.torque > previous, "torque not increasing at fuel {fuel}");
        let bound = config.geometry.n_cylinders as f64 * fuel * config.fluid.fuel_lhv / (4.0 * PI);
        assert!(out.torque <= bound);
        previous = out.torque;
    }
}

pub fn earlier_spark_raises_peak_pressure() {
    let peak = |spark: f64| {
        let config = EngineConfig {
            combustion: CombustionSpec {
                spark_deg: spark,
                ..CombustionSpec::default()
            },
            ..EngineConfig::default()
        };
        simulate_engine_cycle(&config, &mid_load()).unwrap().peak_pressure
    };
    assert!(peak(-30.0) > peak(-10.0));
}

pub fn unfired_cycle_is_work_free_and_clean() {
    let op = OperatingPoint {
        fuel_per_cycle: 0.0,
        ..mid_load()
    };
    let out = simulate_engine_cycle(&EngineConfig::default(), &op).unwrap();
    assert!(out.torque.abs() < 1e-6);
    assert_eq!((out.no_ppm, out.co_ppm), (0.0, 0.0));
}

pub fn outputs_are_non_negative_and_repeatable() {
    let config = EngineConfig::default();
    for op in sweep_points() {
        let a = simulate_engine_cycle(&config, &op).unwrap();
        let b = simulate_engine_cycle(&config, &op).unwrap();
        assert_eq!(a, b);
        for v in [a.exhaust_temp, a.exhaust_pressure, a.no_ppm, a.co_ppm, a.peak_pressure, a.peak_temp] {
            assert!(v >= 0.0 && v.is_finite());
        }
    }
}
