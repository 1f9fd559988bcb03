use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::vehicle::{rpm_from_speed, VehicleConfig};
use super::DriveCycleError;
use crate::rng::SeededRng;

pub const DEFAULT_TRACE_LENGTH: usize = 1500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    /// s
    pub t: f64,
    /// m/s
    pub vehicle_speed: f64,
    /// kg/s
    pub fuel_flow: f64,
}

/// A 1 Hz transient input trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveCycleTrace {
    pub id: String,
    pub samples: Vec<TraceSample>,
}

impl DriveCycleTrace {
    pub fn new(id: impl Into<String>, samples: Vec<TraceSample>) -> Result<Self, DriveCycleError> {
        let trace = Self { id: id.into(), samples };
        trace.validate()?;
        Ok(trace)
    }

    /// Same speed and fuel flow at every second.
    pub fn constant(id: impl Into<String>, len: usize, vehicle_speed: f64, fuel_flow: f64) -> Result<Self, DriveCycleError> {
        let samples = (0..len)
            .map(|i| TraceSample {
                t: i as f64,
                vehicle_speed,
                fuel_flow,
            })
            .collect();
        Self::new(id, samples)
    }

    pub fn validate(&self) -> Result<(), DriveCycleError> {
        let bad = |m: String| Err(DriveCycleError::InvalidTrace(format!("{}: {m}", self.id)));
        if self.id.is_empty() || self.id.contains(',') {
            return bad("trace id must be non-empty and comma-free".into());
        }
        if self.samples.is_empty() {
            return bad("no samples".into());
        }
        for (i, s) in self.samples.iter().enumerate() {
            if s.t != i as f64 {
                return bad(format!("sample {i} at t = {} breaks 1 s spacing", s.t));
            }
            if !(s.vehicle_speed >= 0.0 && s.vehicle_speed.is_finite()) {
                return bad(format!("negative or non-finite speed at t = {i}"));
            }
            if !(s.fuel_flow >= 0.0 && s.fuel_flow.is_finite()) {
                return bad(format!("negative or non-finite fuel flow at t = {i}"));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// First `len` samples.
    pub fn truncated(&self, len: usize) -> Self {
        Self {
            id: self.id.clone(),
            samples: self.samples[..len.min(self.samples.len())].to_vec(),
        }
    }
}

/// Road-load and fuel-demand model behind the synthetic traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceGenerator {
    pub length: usize,
    /// m/s
    pub max_speed: f64,
    /// kg
    pub vehicle_mass: f64,
    pub rolling_resistance: f64,
    /// Drag coefficient times frontal area, m².
    pub drag_area: f64,
    /// kg/m³
    pub air_density: f64,
    /// Brake efficiency from fuel energy to wheel power.
    pub powertrain_efficiency: f64,
    /// J/kg
    pub fuel_lhv: f64,
    /// kg/s
    pub idle_fuel_flow: f64,
    /// Cap on fuel per cylinder per cycle, kg.
    pub max_fuel_per_cycle: f64,
    pub n_cylinders: u32,
}

impl Default for TraceGenerator {
    fn default() -> Self {
        Self {
            length: DEFAULT_TRACE_LENGTH,
            max_speed: 22.0,
            vehicle_mass: 1400.0,
            rolling_resistance: 0.012,
            drag_area: 0.65,
            air_density: 1.2,
            powertrain_efficiency: 0.28,
            fuel_lhv: 44.3e6,
            idle_fuel_flow: 2.0e-4,
            max_fuel_per_cycle: 2.6e-5,
            n_cylinders: 4,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Segment {
    Idle { remaining: usize },
    Accelerate { target: f64, rate: f64 },
    Cruise { remaining: usize, speed: f64 },
    Brake { target: f64, rate: f64 },
}

impl TraceGenerator {
    pub fn validate(&self) -> Result<(), DriveCycleError> {
        if self.length == 0 {
            return Err(DriveCycleError::InvalidConfig("trace length must be positive".into()));
        }
        let positive = [
            self.max_speed,
            self.vehicle_mass,
            self.powertrain_efficiency,
            self.fuel_lhv,
            self.idle_fuel_flow,
            self.max_fuel_per_cycle,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || self.n_cylinders == 0 {
            return Err(DriveCycleError::InvalidConfig("trace generator parameters must be positive".into()));
        }
        Ok(())
    }

    /// Fuel flow demanded at `speed` with acceleration `accel`.
    pub fn fuel_flow(&self, vehicle: &VehicleConfig, speed: f64, accel: f64) -> f64 {
        let traction = self.vehicle_mass * (accel + 9.81 * self.rolling_resistance)
            + 0.5 * self.air_density * self.drag_area * speed * speed;
        let power = (traction * speed).max(0.0);
        let demand = self.idle_fuel_flow + power / (self.powertrain_efficiency * self.fuel_lhv);
        let cycles_per_second = rpm_from_speed(vehicle, speed) / 120.0;
        let cap = self.max_fuel_per_cycle * cycles_per_second * self.n_cylinders as f64;
        demand.min(cap)
    }

    /// Urban-style profile: idle, accelerate, cruise and brake segments from a
    /// seeded random process.
    pub fn generate(&self, id: impl Into<String>, seed: u64, vehicle: &VehicleConfig) -> Result<DriveCycleTrace, DriveCycleError> {
        self.validate()?;
        let mut rng = SeededRng::new(seed);
        let mut speeds = Vec::with_capacity(self.length);
        let mut v = 0.0f64;
        let mut segment = Segment::Idle {
            remaining: 3 + rng.index(12),
        };
        while speeds.len() < self.length {
            speeds.push(v);
            segment = match segment {
                Segment::Idle { remaining } if remaining > 1 => Segment::Idle { remaining: remaining - 1 },
                Segment::Idle { .. } => Segment::Accelerate {
                    target: rng.uniform_in(6.0, self.max_speed),
                    rate: rng.uniform_in(0.6, 1.5),
                },
                Segment::Accelerate { target, rate } => {
                    v = (v + rate).min(target);
                    if v >= target {
                        Segment::Cruise {
                            remaining: 8 + rng.index(60),
                            speed: target,
                        }
                    } else {
                        segment
                    }
                }
                Segment::Cruise { remaining, speed } => {
                    v = (speed + rng.uniform_in(-0.4, 0.4)).clamp(0.0, self.max_speed);
                    if remaining > 1 {
                        Segment::Cruise {
                            remaining: remaining - 1,
                            speed,
                        }
                    } else {
                        let stop = rng.uniform() < 0.6;
                        let target = if stop { 0.0 } else { rng.uniform_in(3.0, 0.7 * v.max(4.0)) };
                        if target >= v {
                            Segment::Accelerate {
                                target: rng.uniform_in(v + 1.0, self.max_speed.max(v + 1.5)).min(self.max_speed),
                                rate: rng.uniform_in(0.6, 1.5),
                            }
                        } else {
                            Segment::Brake {
                                target,
                                rate: rng.uniform_in(0.8, 2.0),
                            }
                        }
                    }
                }
                Segment::Brake { target, rate } => {
                    v = (v - rate).max(target);
                    if v > target {
                        segment
                    } else if target == 0.0 {
                        v = 0.0;
                        Segment::Idle {
                            remaining: 5 + rng.index(30),
                        }
                    } else {
                        Segment::Cruise {
                            remaining: 5 + rng.index(40),
                            speed: target,
                        }
                    }
                }
            };
        }
        let samples = (0..self.length)
            .map(|i| {
                let next = if i + 1 < self.length { speeds[i + 1] } else { speeds[i] };
                let accel = next - speeds[i];
                TraceSample {
                    t: i as f64,
                    vehicle_speed: speeds[i],
                    fuel_flow: self.fuel_flow(vehicle, speeds[i], accel),
                }
            })
            .collect();
        DriveCycleTrace::new(id, samples)
    }
}

/// Long-format CSV: `trace_id,t,vehicle_speed,fuel_flow`.
pub fn write_traces_to<W: Write>(traces: &[DriveCycleTrace], writer: W) -> Result<(), DriveCycleError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["trace_id", "t", "vehicle_speed", "fuel_flow"])?;
    for trace in traces {
        for s in &trace.samples {
            w.write_record([
                trace.id.clone(),
                s.t.to_string(),
                s.vehicle_speed.to_string(),
                s.fuel_flow.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_traces(traces: &[DriveCycleTrace], path: impl AsRef<Path>) -> Result<(), DriveCycleError> {
    write_traces_to(traces, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn read_traces_from<R: Read>(reader: R) -> Result<Vec<DriveCycleTrace>, DriveCycleError> {
    let mut r = csv::Reader::from_reader(reader);
    let mut traces: Vec<DriveCycleTrace> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 4 {
            return Err(DriveCycleError::InvalidTrace(format!("expected 4 columns, got {}", rec.len())));
        }
        let num = |i: usize| {
            rec[i]
                .parse::<f64>()
                .map_err(|_| DriveCycleError::InvalidTrace(format!("bad number {:?}", &rec[i])))
        };
        let sample = TraceSample {
            t: num(1)?,
            vehicle_speed: num(2)?,
            fuel_flow: num(3)?,
        };
        match traces.last_mut() {
            Some(t) if t.id == rec[0] => t.samples.push(sample),
            _ => traces.push(DriveCycleTrace {
                id: rec[0].to_string(),
                samples: vec![sample],
            }),
        }
    }
    for t in &traces {
        t.validate()?;
    }
    Ok(traces)
}

pub fn read_traces(path: impl AsRef<Path>) -> Result<Vec<DriveCycleTrace>, DriveCycleError> {
    read_traces_from(std::fs::File::open(path)?)
}
