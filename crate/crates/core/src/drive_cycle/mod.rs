//! Quasi-steady drive-cycle evaluation: each one-second trace sample becomes
//! one steady engine operating point, plus the parallel campaign runner.

mod campaign;
mod trace;
mod vehicle;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, N_INPUTS, N_OUTPUTS};
use crate::engine::{cylinder_volume, simulate_engine_cycle, EngineConfig, EngineError, OperatingPoint};

pub use campaign::{
    partial_manifest_path, run_campaign, run_case_list, run_cases, walltime_path, CampaignSpec, CampaignSummary, CampaignWriter, CaseOutcome, CaseSpec, GridLevels,
};
pub use trace::{
    read_traces, read_traces_from, write_traces, write_traces_to, DriveCycleTrace, TraceGenerator, TraceSample,
    DEFAULT_TRACE_LENGTH,
};
pub use vehicle::{rpm_from_speed, VehicleConfig};

#[derive(Debug, Error)]
pub enum DriveCycleError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("campaign aborted after {completed} cases: {message}")]
    Aborted { completed: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<EngineError> for DriveCycleError {
    fn from(e: EngineError) -> Self {
        DriveCycleError::InvalidConfig(e.to_string())
    }
}

/// One point of the six-parameter control grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    /// CAD
    pub spark_deg: f64,
    /// Multiplier on every gear ratio; sets engine speed for a given vehicle speed.
    pub gear_scale: f64,
    /// K
    pub ambient_temp: f64,
    pub humidity: f64,
    /// CAD; the internal EGR fraction is proportional to it.
    pub valve_timing_deg: f64,
    pub compression_ratio: f64,
}

impl GridPoint {
    pub const NAMES: [&'static str; 6] = [
        "spark_deg",
        "gear_scale",
        "ambient_temp",
        "humidity",
        "valve_timing_deg",
        "compression_ratio",
    ];

    pub fn from_array(v: [f64; 6]) -> Self {
        Self {
            spark_deg: v[0],
            gear_scale: v[1],
            ambient_temp: v[2],
            humidity: v[3],
            valve_timing_deg: v[4],
            compression_ratio: v[5],
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.spark_deg,
            self.gear_scale,
            self.ambient_temp,
            self.humidity,
            self.valve_timing_deg,
            self.compression_ratio,
        ]
    }
}

/// Uniform shifts applied on top of a trace, used for out-of-envelope data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegimeModifiers {
    /// Multiplier on trace fuel flow.
    pub fuel_scale: f64,
    /// Multiplier on engine speed after the gear map.
    pub rpm_scale: f64,
}

impl Default for RegimeModifiers {
    fn default() -> Self {
        Self {
            fuel_scale: 1.0,
            rpm_scale: 1.0,
        }
    }
}

/// How the ten model inputs are derived from a trace sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputDerivation {
    /// Piecewise-linear `(load, phi)` map, loads increasing; held constant
    /// beyond the end points.
    pub load_map: Vec<[f64; 2]>,
    /// Fuel per cylinder per cycle defining full load, kg.
    pub full_load_fuel: f64,
    /// Internal EGR fraction per CAD of valve timing.
    pub egr_per_valve_deg: f64,
    /// K
    pub wall_temp: f64,
    /// Closed-throttle manifold pressure used for unfired samples, Pa.
    pub motoring_inlet_pressure: f64,
}

impl Default for InputDerivation {
    fn default() -> Self {
        Self {
            load_map: vec![[0.0, 0.95], [0.6, 1.0], [1.0, 1.2]],
            full_load_fuel: 4.0e-5,
            egr_per_valve_deg: 0.005,
            wall_temp: 420.0,
            motoring_inlet_pressure: 0.2e5,
        }
    }
}

impl InputDerivation {
    pub fn validate(&self) -> Result<(), DriveCycleError> {
        if self.load_map.is_empty() || self.load_map.iter().any(|[_, phi]| !(*phi > 0.0 && *phi <= 2.0)) {
            return Err(DriveCycleError::InvalidConfig("load map equivalence ratios must lie in (0, 2]".into()));
        }
        if self.load_map.windows(2).any(|w| !(w[1][0] > w[0][0])) {
            return Err(DriveCycleError::InvalidConfig("load map loads must be strictly increasing".into()));
        }
        if !(self.full_load_fuel > 0.0 && self.egr_per_valve_deg >= 0.0 && self.wall_temp > 0.0 && self.motoring_inlet_pressure > 0.0) {
            return Err(DriveCycleError::InvalidConfig("input derivation parameters must be positive".into()));
        }
        Ok(())
    }

    pub fn phi(&self, fuel_per_cycle: f64) -> f64 {
        let load = fuel_per_cycle / self.full_load_fuel;
        let map = &self.load_map;
        let first = map[0];
        let last = map[map.len() - 1];
        if load <= first[0] {
            return first[1];
        }
        if load >= last[0] {
            return last[1];
        }
        let k = map.partition_point(|p| p[0] <= load);
        let ([l0, p0], [l1, p1]) = (map[k - 1], map[k]);
        p0 + (p1 - p0) * (load - l0) / (l1 - l0)
    }
}

/// Engine, vehicle and input-derivation settings shared by every case.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriveCycleModel {
    pub engine: EngineConfig,
    pub vehicle: VehicleConfig,
    pub derivation: InputDerivation,
}

impl DriveCycleModel {
    pub fn validate(&self) -> Result<(), DriveCycleError> {
        self.engine.validate()?;
        self.vehicle.validate()?;
        self.derivation.validate()
    }

    /// Engine configuration with the grid point's spark timing and compression ratio.
    pub fn engine_for(&self, point: &GridPoint) -> Result<EngineConfig, DriveCycleError> {
        let mut engine = self.engine.clone();
        engine.combustion.spark_deg = point.spark_deg;
        engine.geometry.compression_ratio = point.compression_ratio;
        engine.validate()?;
        if !(point.gear_scale > 0.0) {
            return Err(DriveCycleError::InvalidConfig("gear scale must be positive".into()));
        }
        Ok(engine)
    }

    /// Operating point and the ten-input row for one trace sample.
    pub fn derive_inputs(
        &self,
        engine: &EngineConfig,
        sample: &TraceSample,
        point: &GridPoint,
        modifiers: &RegimeModifiers,
    ) -> (OperatingPoint, [f64; N_INPUTS]) {
        let d = &self.derivation;
        let mut vehicle = self.vehicle.clone();
        vehicle.final_drive *= point.gear_scale;
        let rpm = rpm_from_speed(&vehicle, sample.vehicle_speed) * modifiers.rpm_scale;
        let gear_ratio = vehicle.overall_ratio(sample.vehicle_speed) * modifiers.rpm_scale;
        let fuel_flow = sample.fuel_flow * modifiers.fuel_scale;
        let n_cyl = engine.geometry.n_cylinders as f64;
        let fuel_per_cycle = fuel_flow / (rpm / 120.0) / n_cyl;
        let phi = d.phi(fuel_per_cycle);
        let afr = engine.fluid.stoich_afr / phi;
        let egr = d.egr_per_valve_deg * point.valve_timing_deg;
        let mix_temp = (1.0 - egr) * point.ambient_temp + egr * engine.integration.residual_temp;
        let v_ivc = cylinder_volume(&engine.geometry, engine.integration.theta_ivc);
        let r = engine.fluid.gas_constant;
        let (intake_air_mass, inlet_pressure) = if fuel_per_cycle > 0.0 {
            let air = fuel_per_cycle * afr;
            let fresh = (air + fuel_per_cycle) / (1.0 - point.humidity);
            (air, fresh / (1.0 - egr) * r * mix_temp / v_ivc)
        } else {
            let p = d.motoring_inlet_pressure;
            let fresh = p * v_ivc / (r * mix_temp) * (1.0 - egr);
            (fresh * (1.0 - point.humidity), p)
        };
        let op = OperatingPoint {
            rpm,
            fuel_per_cycle,
            afr,
            inlet_pressure,
            intake_air_mass,
            ambient_temp: point.ambient_temp,
            humidity: point.humidity,
            egr_fraction: egr,
            valve_timing_deg: point.valve_timing_deg,
            wall_temp: d.wall_temp,
        };
        let inputs = [
            point.ambient_temp,
            point.humidity,
            point.valve_timing_deg,
            point.compression_ratio,
            point.spark_deg,
            gear_ratio,
            fuel_flow,
            afr,
            inlet_pressure,
            intake_air_mass,
        ];
        (op, inputs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriveCycleRow {
    pub t: f64,
    pub inputs: [f64; N_INPUTS],
    /// `None` for a flagged (non-physical) sample.
    pub outputs: Option<[f64; N_OUTPUTS]>,
    pub flag: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OutputAggregate {
    pub peak: f64,
    pub average: f64,
    /// Sum of the per-second values times the 1 s sample spacing.
    pub cumulative: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriveCycleResult {
    pub trace_id: String,
    pub rows: Vec<DriveCycleRow>,
    /// Over unflagged rows, in output-column order.
    pub aggregates: [OutputAggregate; N_OUTPUTS],
    pub flagged: usize,
}

impl DriveCycleResult {
    pub fn valid_rows(&self) -> impl Iterator<Item = (&DriveCycleRow, &[f64; N_OUTPUTS])> {
        self.rows.iter().filter_map(|r| r.outputs.as_ref().map(|o| (r, o)))
    }
}

fn aggregate(rows: &[DriveCycleRow]) -> [OutputAggregate; N_OUTPUTS] {
    let mut agg = [OutputAggregate {
        peak: f64::NEG_INFINITY,
        ..OutputAggregate::default()
    }; N_OUTPUTS];
    let mut n = 0usize;
    for out in rows.iter().filter_map(|r| r.outputs.as_ref()) {
        n += 1;
        for (a, &v) in agg.iter_mut().zip(out) {
            a.peak = a.peak.max(v);
            a.cumulative += v;
        }
    }
    for a in &mut agg {
        if n == 0 {
            *a = OutputAggregate::default();
        } else {
            a.average = a.cumulative / n as f64;
        }
    }
    agg
}

/// Evaluate every second of `trace` at one grid point.
///
/// Samples with identical speed and fuel flow map to identical operating
/// points, so their engine cycles are evaluated once.
pub fn simulate_drive_cycle(
    model: &DriveCycleModel,
    trace: &DriveCycleTrace,
    point: &GridPoint,
    modifiers: &RegimeModifiers,
) -> Result<DriveCycleResult, DriveCycleError> {
    model.validate()?;
    trace.validate()?;
    let engine = model.engine_for(point)?;
    let mut memo: HashMap<(u64, u64), Result<[f64; N_OUTPUTS], String>> = HashMap::new();
    let mut rows = Vec::with_capacity(trace.len());
    let mut flagged = 0;
    for sample in &trace.samples {
        let (op, inputs) = model.derive_inputs(&engine, sample, point, modifiers);
        let key = (sample.vehicle_speed.to_bits(), sample.fuel_flow.to_bits());
        let result = memo
            .entry(key)
            .or_insert_with(|| {
                simulate_engine_cycle(&engine, &op)
                    .map(|o| [o.exhaust_temp, o.exhaust_pressure, o.no_ppm, o.co_ppm, o.torque])
                    .map_err(|e| e.to_string())
            })
            .clone();
        let (outputs, flag) = match result {
            Ok(o) => (Some(o), None),
            Err(e) => {
                flagged += 1;
                (None, Some(e))
            }
        };
        rows.push(DriveCycleRow {
            t: sample.t,
            inputs,
            outputs,
            flag,
        });
    }
    Ok(DriveCycleResult {
        trace_id: trace.id.clone(),
        aggregates: aggregate(&rows),
        rows,
        flagged,
    })
}
