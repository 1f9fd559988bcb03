//! Closed-cycle engine model.
//!
//! The cylinder pressure is integrated over crank angle with the energy
//! equation
//!
//! ```text
//! dP/dθ = (γ - 1)/V · (Q_in - Q_loss) - γ · P/V · dV/dθ
//! ```
//!
//! from intake valve closing to exhaust valve opening. Heat release follows a
//! Wiebe profile, wall losses a Woschni-style convective correlation, and the
//! charge is split into burned and unburned zones sharing one pressure.
//!
//! Crank angles are in degrees with 0 at firing top dead center. All rates
//! (`Q_in`, `Q_loss`, `dV/dθ`) are per crank degree.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emissions::{integrate_emissions, BurnedZoneHistory, EmissionsConfig, EmissionsError};

/// Ratio of specific heats of water vapor, used for the humidity blend.
const GAMMA_WATER_VAPOR: f64 = 1.33;
/// Below this burned mass fraction the ideal-gas recovery of the burned-zone
/// temperature is ill-conditioned and the small-fraction limit is used.
const RECOVERY_MIN_BURN_FRACTION: f64 = 0.01;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-physical state at {theta:.2} CAD: pressure {pressure} Pa, temperature {temperature} K")]
    NonPhysicalState {
        theta: f64,
        pressure: f64,
        temperature: f64,
    },
    #[error(transparent)]
    Emissions(#[from] EmissionsError),
}

fn invalid(msg: impl Into<String>) -> EngineError {
    EngineError::InvalidConfig(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineGeometry {
    /// m
    pub bore: f64,
    /// m
    pub stroke: f64,
    /// m
    pub conrod_length: f64,
    pub compression_ratio: f64,
    pub n_cylinders: u32,
}

impl Default for EngineGeometry {
    fn default() -> Self {
        Self {
            bore: 0.086,
            stroke: 0.086,
            conrod_length: 0.145,
            compression_ratio: 10.0,
            n_cylinders: 4,
        }
    }
}

impl EngineGeometry {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.bore > 0.0 && self.stroke > 0.0) {
            return Err(invalid("bore and stroke must be positive"));
        }
        if !(self.compression_ratio > 1.0) {
            return Err(invalid("compression ratio must exceed 1"));
        }
        if self.n_cylinders == 0 {
            return Err(invalid("at least one cylinder is required"));
        }
        if !(self.conrod_length > self.stroke / 2.0) {
            return Err(invalid("connecting rod must be longer than the crank radius"));
        }
        Ok(())
    }

    /// Swept volume of one cylinder, m³.
    pub fn displacement_per_cylinder(&self) -> f64 {
        PI / 4.0 * self.bore * self.bore * self.stroke
    }

    /// Total swept volume, m³.
    pub fn displacement(&self) -> f64 {
        self.n_cylinders as f64 * self.displacement_per_cylinder()
    }

    pub fn clearance_volume(&self) -> f64 {
        self.displacement_per_cylinder() / (self.compression_ratio - 1.0)
    }

    /// Connecting rod length over crank radius.
    pub fn rod_ratio(&self) -> f64 {
        2.0 * self.conrod_length / self.stroke
    }

    fn kinematics(&self, theta: f64) -> Kinematics {
        let rad = theta.to_radians();
        let (s, c) = rad.sin_cos();
        let r = self.rod_ratio();
        let root = (r * r - s * s).sqrt();
        let vc = self.clearance_volume();
        let half = (self.compression_ratio - 1.0) / 2.0;
        let shape = r + 1.0 - c - root;
        let volume = vc * (1.0 + half * shape);
        let dvolume = vc * half * (s + s * c / root) * (PI / 180.0);
        // Piston distance from top dead center.
        let travel = self.stroke / 2.0 * shape;
        let area = PI * self.bore * self.bore / 2.0 + PI * self.bore * travel;
        Kinematics {
            volume,
            dvolume,
            area,
        }
    }
}

struct Kinematics {
    volume: f64,
    dvolume: f64,
    area: f64,
}

#[derive(Debug, Clone, Copy)]
struct AngleTerms {
    volume: f64,
    dvolume: f64,
    gamma: f64,
    q_in: f64,
    wall: f64,
}

/// Instantaneous cylinder volume from slider-crank kinematics, m³.
pub fn cylinder_volume(geom: &EngineGeometry, theta: f64) -> f64 {
    geom.kinematics(theta).volume
}

/// Analytic `dV/dθ`, m³ per crank degree.
pub fn cylinder_volume_derivative(geom: &EngineGeometry, theta: f64) -> f64 {
    geom.kinematics(theta).dvolume
}

/// Gas-side heat transfer area: head and piston crown plus exposed liner, m².
pub fn cylinder_wall_area(geom: &EngineGeometry, theta: f64) -> f64 {
    geom.kinematics(theta).area
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkingFluid {
    pub gamma_unburned: f64,
    pub gamma_burned: f64,
    /// J/(kg·K)
    pub gas_constant: f64,
    /// J/kg
    pub fuel_lhv: f64,
    pub stoich_afr: f64,
}

impl Default for WorkingFluid {
    fn default() -> Self {
        // Iso-octane: C8H18 + 12.5 (O2 + 3.76 N2).
        Self {
            gamma_unburned: 1.35,
            gamma_burned: 1.25,
            gas_constant: 287.0,
            fuel_lhv: 44.3e6,
            stoich_afr: 15.03,
        }
    }
}

impl WorkingFluid {
    pub fn validate(&self) -> Result<(), EngineError> {
        let in_range = |g: f64| g > 1.0 && g <= 1.7;
        if !in_range(self.gamma_unburned) || !in_range(self.gamma_burned) {
            return Err(invalid("ratios of specific heats must lie in (1, 1.7]"));
        }
        if self.gamma_burned > self.gamma_unburned {
            return Err(invalid("burned-gas gamma must not exceed unburned-gas gamma"));
        }
        if !(self.gas_constant > 0.0 && self.fuel_lhv > 0.0 && self.stoich_afr > 0.0) {
            return Err(invalid("gas constant, heating value and stoichiometric AFR must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CombustionSpec {
    /// Spark timing, CAD (negative before TDC).
    pub spark_deg: f64,
    /// CAD
    pub duration_deg: f64,
    pub wiebe_a: f64,
    pub wiebe_m: f64,
}

impl Default for CombustionSpec {
    fn default() -> Self {
        Self {
            spark_deg: -25.0,
            duration_deg: 50.0,
            wiebe_a: 6.908,
            wiebe_m: 2.0,
        }
    }
}

impl CombustionSpec {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(-60.0..=20.0).contains(&self.spark_deg) {
            return Err(invalid("spark timing must lie in [-60, 20] CAD"));
        }
        if !(self.duration_deg > 0.0 && self.duration_deg <= 120.0) {
            return Err(invalid("combustion duration must lie in (0, 120] CAD"));
        }
        if !(self.wiebe_a > 0.0 && self.wiebe_m >= 0.0) {
            return Err(invalid("Wiebe parameters require a > 0 and m >= 0"));
        }
        Ok(())
    }

    fn end_deg(&self) -> f64 {
        self.spark_deg + self.duration_deg
    }
}

/// Wiebe cumulative burn fraction.
pub fn burn_fraction(spec: &CombustionSpec, theta: f64) -> f64 {
    wiebe(spec, theta).0
}

/// `dx_b/dθ`, per crank degree; zero outside the burn window.
pub fn burn_rate(spec: &CombustionSpec, theta: f64) -> f64 {
    wiebe(spec, theta).1
}

fn pow_exponent(base: f64, exponent: f64) -> f64 {
    if exponent.fract() == 0.0 && exponent.abs() <= 8.0 {
        base.powi(exponent as i32)
    } else {
        base.powf(exponent)
    }
}

/// Burn fraction and burn rate together.
fn wiebe(spec: &CombustionSpec, theta: f64) -> (f64, f64) {
    if theta <= spec.spark_deg {
        return (0.0, 0.0);
    }
    let s = (theta - spec.spark_deg) / spec.duration_deg;
    if s > 1.0 {
        return (1.0 - (-spec.wiebe_a).exp(), 0.0);
    }
    wiebe_active(spec, s)
}

/// Right-hand limit of [`wiebe`]: the burn rate just after `theta`, which
/// differs from `wiebe` only at the start and end of combustion.
fn wiebe_after(spec: &CombustionSpec, theta: f64) -> (f64, f64) {
    if theta < spec.spark_deg {
        return (0.0, 0.0);
    }
    let s = (theta - spec.spark_deg) / spec.duration_deg;
    if s >= 1.0 {
        return (1.0 - (-spec.wiebe_a).exp(), 0.0);
    }
    wiebe_active(spec, s)
}

fn wiebe_active(spec: &CombustionSpec, s: f64) -> (f64, f64) {
    let sm = pow_exponent(s, spec.wiebe_m);
    let decay = (-spec.wiebe_a * sm * s).exp();
    let rate = spec.wiebe_a * (spec.wiebe_m + 1.0) * sm / spec.duration_deg * decay;
    (1.0 - decay, rate)
}

/// Per-cylinder operating conditions of one engine cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatingPoint {
    /// rev/min
    pub rpm: f64,
    /// kg of fuel per cylinder per cycle
    pub fuel_per_cycle: f64,
    pub afr: f64,
    /// Pa
    pub inlet_pressure: f64,
    /// kg of fresh air per cylinder per cycle
    pub intake_air_mass: f64,
    /// K
    pub ambient_temp: f64,
    /// water vapor mass fraction of the fresh charge
    pub humidity: f64,
    pub egr_fraction: f64,
    /// CAD
    pub valve_timing_deg: f64,
    /// K
    pub wall_temp: f64,
}

impl OperatingPoint {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.rpm > 0.0) {
            return Err(invalid("rpm must be positive"));
        }
        if !(self.fuel_per_cycle >= 0.0) {
            return Err(invalid("fuel per cycle must be non-negative"));
        }
        if !(self.afr > 0.0 && self.inlet_pressure > 0.0 && self.intake_air_mass > 0.0) {
            return Err(invalid("AFR, inlet pressure and intake air mass must be positive"));
        }
        if !(self.ambient_temp > 0.0 && self.wall_temp > 0.0) {
            return Err(invalid("temperatures must be positive"));
        }
        if !(0.0..=1.0).contains(&self.humidity) {
            return Err(invalid("humidity must lie in [0, 1]"));
        }
        if !(0.0..=0.5).contains(&self.egr_fraction) {
            return Err(invalid("EGR fraction must lie in [0, 0.5]"));
        }
        Ok(())
    }

    pub fn is_fired(&self) -> bool {
        self.fuel_per_cycle > 0.0
    }

    pub fn equivalence_ratio(&self, fluid: &WorkingFluid) -> f64 {
        fluid.stoich_afr / self.afr
    }
}

/// Woschni-style wall heat transfer `h = C · B^-0.2 · p^0.8 · T^-0.55 · w^0.8`
/// with `p` in kPa and `w` the mean piston speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatTransfer {
    pub coefficient: f64,
}

impl Default for HeatTransfer {
    fn default() -> Self {
        // Calibrated for ~15% of the released heat lost at the mid-grid point
        // (see the `heat_loss_fraction_near_fifteen_percent` test).
        Self { coefficient: 9.7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationSettings {
    /// CAD
    pub dtheta: f64,
    /// Intake valve closing, CAD.
    pub theta_ivc: f64,
    /// Exhaust valve opening, CAD.
    pub theta_evo: f64,
    /// Temperature of the trapped residual gas, K.
    pub residual_temp: f64,
}

impl Default for IntegrationSettings {
    fn default() -> Self {
        Self {
            dtheta: 0.5,
            theta_ivc: -160.0,
            theta_evo: 140.0,
            residual_temp: 900.0,
        }
    }
}

/// Everything about the engine that is fixed across operating points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    pub geometry: EngineGeometry,
    pub fluid: WorkingFluid,
    pub combustion: CombustionSpec,
    pub heat_transfer: HeatTransfer,
    pub integration: IntegrationSettings,
    pub emissions: EmissionsConfig,
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        self.geometry.validate()?;
        self.fluid.validate()?;
        self.combustion.validate()?;
        let s = &self.integration;
        if !(s.dtheta > 0.0 && s.dtheta <= 1.0) {
            return Err(invalid("integration step must lie in (0, 1] CAD"));
        }
        if !(s.theta_ivc < s.theta_evo) {
            return Err(invalid("IVC must precede EVO"));
        }
        if !(self.heat_transfer.coefficient >= 0.0) {
            return Err(invalid("heat transfer coefficient must be non-negative"));
        }
        self.emissions
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylinderState {
    pub theta: f64,
    /// Pa
    pub pressure: f64,
    /// K
    pub temp_unburned: f64,
    /// K
    pub temp_burned: f64,
    pub burn_fraction: f64,
    /// J
    pub cumulative_heat_loss: f64,
    /// J
    pub cumulative_heat_release: f64,
    /// Closed-portion indicated work, J.
    pub work: f64,
}

/// Per-cycle constants derived from configuration and operating point.
#[derive(Debug, Clone)]
pub struct CycleModel {
    geometry: EngineGeometry,
    combustion: CombustionSpec,
    gamma_charge: f64,
    gamma_burned: f64,
    gas_constant: f64,
    /// Total trapped mass, kg.
    trapped_mass: f64,
    /// Fuel chemical energy available per cycle, J.
    fuel_energy: f64,
    /// Woschni prefactor: everything except the crank-angle and pressure terms,
    /// per crank degree.
    woschni: f64,
    wall_temp: f64,
    /// Seconds per crank degree.
    seconds_per_deg: f64,
    initial_temp: f64,
    initial_pressure: f64,
    theta_ivc: f64,
}

impl CycleModel {
    pub fn new(config: &EngineConfig, op: &OperatingPoint) -> Self {
        let fluid = &config.fluid;
        let geometry = config.geometry;
        let gamma_fresh =
            (1.0 - op.humidity) * fluid.gamma_unburned + op.humidity * GAMMA_WATER_VAPOR;
        let gamma_charge =
            (1.0 - op.egr_fraction) * gamma_fresh + op.egr_fraction * fluid.gamma_burned;
        let initial_temp = (1.0 - op.egr_fraction) * op.ambient_temp
            + op.egr_fraction * config.integration.residual_temp;
        let theta_ivc = config.integration.theta_ivc;
        let v_ivc = cylinder_volume(&geometry, theta_ivc);
        let trapped_mass = op.inlet_pressure * v_ivc / (fluid.gas_constant * initial_temp);
        let fired = op.is_fired();
        let mean_piston_speed = 2.0 * geometry.stroke * op.rpm / 60.0;
        let woschni = if fired {
            let mr = trapped_mass * fluid.gas_constant;
            config.heat_transfer.coefficient
                * geometry.bore.powf(-0.2)
                * mean_piston_speed.powf(0.8)
                * 1e-3f64.powf(0.8)
                * mr.powf(0.55)
                / (6.0 * op.rpm)
        } else {
            // Unfired cycles are treated as adiabatic motoring.
            0.0
        };
        Self {
            geometry,
            combustion: config.combustion,
            gamma_charge,
            gamma_burned: fluid.gamma_burned,
            gas_constant: fluid.gas_constant,
            trapped_mass,
            fuel_energy: op.fuel_per_cycle * fluid.fuel_lhv,
            woschni,
            wall_temp: op.wall_temp,
            seconds_per_deg: 1.0 / (6.0 * op.rpm),
            initial_temp,
            initial_pressure: op.inlet_pressure,
            theta_ivc,
        }
    }

    /// Same model with combustion and wall losses switched off.
    pub fn without_heat_exchange(mut self) -> Self {
        self.fuel_energy = 0.0;
        self.woschni = 0.0;
        self
    }

    pub fn trapped_mass(&self) -> f64 {
        self.trapped_mass
    }

    pub fn fuel_energy(&self) -> f64 {
        self.fuel_energy
    }

    pub fn gamma_charge(&self) -> f64 {
        self.gamma_charge
    }

    pub fn seconds_per_deg(&self) -> f64 {
        self.seconds_per_deg
    }

    pub fn burn_fraction(&self, theta: f64) -> f64 {
        if self.fuel_energy > 0.0 {
            burn_fraction(&self.combustion, theta)
        } else {
            0.0
        }
    }

    /// Mixture gamma, blended by burned mass fraction.
    pub fn gamma(&self, burn_fraction: f64) -> f64 {
        (1.0 - burn_fraction) * self.gamma_charge + burn_fraction * self.gamma_burned
    }

    pub fn initial_state(&self) -> CylinderState {
        CylinderState {
            theta: self.theta_ivc,
            pressure: self.initial_pressure,
            temp_unburned: self.initial_temp,
            temp_burned: self.initial_temp,
            burn_fraction: 0.0,
            cumulative_heat_loss: 0.0,
            cumulative_heat_release: 0.0,
            work: 0.0,
        }
    }

    /// Parts of the right-hand side that depend on crank angle only, as
    /// seen from a step ending at `theta`.
    fn angle_terms(&self, theta: f64) -> AngleTerms {
        self.angle_terms_with(theta, wiebe)
    }

    /// As seen from a step starting at `theta`.
    fn angle_terms_after(&self, theta: f64) -> AngleTerms {
        self.angle_terms_with(theta, wiebe_after)
    }

    fn angle_terms_with(&self, theta: f64, burn: fn(&CombustionSpec, f64) -> (f64, f64)) -> AngleTerms {
        let k = self.geometry.kinematics(theta);
        let (x_b, rate) = if self.fuel_energy > 0.0 {
            burn(&self.combustion, theta)
        } else {
            (0.0, 0.0)
        };
        // h·A per unit p^0.25 with p in Pa: T = pV/(mR) is folded into the
        // p^0.8 T^-0.55 dependence, the constant factors into `woschni`.
        let wall = if self.woschni > 0.0 {
            self.woschni * k.volume.powf(-0.55) * k.area
        } else {
            0.0
        };
        AngleTerms {
            volume: k.volume,
            dvolume: k.dvolume,
            gamma: self.gamma(x_b),
            q_in: self.fuel_energy * rate,
            wall,
        }
    }

    /// Right-hand side for `(P, Q_in, Q_loss, W)`.
    fn rates(&self, t: &AngleTerms, pressure: f64) -> [f64; 4] {
        let q_loss = if t.wall > 0.0 {
            let temp = pressure * t.volume / (self.trapped_mass * self.gas_constant);
            t.wall * pressure.sqrt().sqrt() * (temp - self.wall_temp)
        } else {
            0.0
        };
        let dp = (t.gamma - 1.0) / t.volume * (t.q_in - q_loss) - t.gamma * pressure / t.volume * t.dvolume;
        [dp, t.q_in, q_loss, pressure * t.dvolume]
    }

    fn rk4(&self, theta: f64, y: [f64; 4], h: f64, start: &AngleTerms) -> ([f64; 4], AngleTerms) {
        let mid = self.angle_terms(theta + 0.5 * h);
        let end = self.angle_terms(theta + h);
        let k1 = self.rates(start, y[0]);
        let k2 = self.rates(&mid, y[0] + 0.5 * h * k1[0]);
        let k3 = self.rates(&mid, y[0] + 0.5 * h * k2[0]);
        let k4 = self.rates(&end, y[0] + h * k3[0]);
        let mut out = y;
        for i in 0..4 {
            out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        (out, end)
    }

    /// Advance one crank step with classical RK4. Steps that straddle the
    /// start or end of combustion are split there so every sub-step sees a
    /// smooth heat-release rate.
    pub fn step_pressure(&self, state: &CylinderState, dtheta: f64) -> Result<CylinderState, EngineError> {
        self.advance(state, dtheta, None).map(|(s, _)| s)
    }

    /// [`Self::step_pressure`] reusing the angle terms at the start of the
    /// step; returns the terms at its end.
    fn advance(
        &self,
        state: &CylinderState,
        dtheta: f64,
        start: Option<AngleTerms>,
    ) -> Result<(CylinderState, AngleTerms), EngineError> {
        let begin = state.theta;
        let end = begin + dtheta;
        let mut y = [
            state.pressure,
            state.cumulative_heat_release,
            state.cumulative_heat_loss,
            state.work,
        ];
        let mut theta = begin;
        let breakpoints = [self.combustion.spark_deg, self.combustion.end_deg()];
        let fired = self.fuel_energy > 0.0;
        let mut terms = match start {
            Some(t) if !(fired && breakpoints.contains(&begin)) => t,
            _ => self.angle_terms_after(begin),
        };
        if fired {
            for bp in breakpoints {
                if bp > theta && bp < end {
                    (y, _) = self.rk4(theta, y, bp - theta, &terms);
                    theta = bp;
                    terms = self.angle_terms_after(bp);
                }
            }
        }
        (y, terms) = self.rk4(theta, y, end - theta, &terms);
        let volume = terms.volume;
        let pressure = y[0];
        let temp_mean = pressure * volume / (self.trapped_mass * self.gas_constant);
        if !(pressure > 0.0 && temp_mean > 0.0 && pressure.is_finite() && temp_mean.is_finite()) {
            return Err(EngineError::NonPhysicalState {
                theta: end,
                pressure,
                temperature: temp_mean,
            });
        }
        let x_b = self.burn_fraction(end);
        let temp_unburned = if state.burn_fraction > 0.0 || x_b > 0.0 {
            // Isentropic compression/expansion of the unburned zone,
            // continuing from the mixture state at spark.
            let gu = self.gamma_charge;
            state.temp_unburned * (pressure / state.pressure).powf((gu - 1.0) / gu)
        } else {
            temp_mean
        };
        let temp_burned = self.burned_temperature(temp_mean, temp_unburned, x_b);
        if !(temp_unburned > 0.0 && temp_burned.is_finite()) {
            return Err(EngineError::NonPhysicalState {
                theta: end,
                pressure,
                temperature: temp_unburned,
            });
        }
        let next = CylinderState {
            theta: end,
            pressure,
            temp_unburned,
            temp_burned,
            burn_fraction: x_b,
            cumulative_heat_loss: y[2],
            cumulative_heat_release: y[1],
            work: y[3],
        };
        Ok((next, terms))
    }

    /// Burned-zone temperature from the ideal-gas law: the mass-weighted
    /// zone temperatures reproduce the mean charge temperature.
    fn burned_temperature(&self, temp_mean: f64, temp_unburned: f64, x_b: f64) -> f64 {
        if x_b <= 0.0 {
            return temp_unburned;
        }
        let recovered = if x_b >= RECOVERY_MIN_BURN_FRACTION {
            (temp_mean - (1.0 - x_b) * temp_unburned) / x_b
        } else {
            // Limit x_b -> 0: the first parcel carries the full specific heat release.
            let specific_heat = self.fuel_energy / self.trapped_mass;
            temp_unburned + specific_heat * (self.gamma_burned - 1.0) / self.gas_constant
        };
        recovered.max(temp_unburned)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleOutputs {
    /// K
    pub exhaust_temp: f64,
    /// Pa
    pub exhaust_pressure: f64,
    pub no_ppm: f64,
    pub co_ppm: f64,
    /// Brake-less indicated torque of the whole engine, N·m.
    pub torque: f64,
    /// Pa
    pub peak_pressure: f64,
    /// K
    pub peak_temp: f64,
}

/// Full crank-resolved result of one cycle.
#[derive(Debug, Clone)]
pub struct CycleTrace {
    pub states: Vec<CylinderState>,
    pub outputs: CycleOutputs,
    /// Indicated work per cylinder including the algebraic gas-exchange tails, J.
    pub indicated_work: f64,
}

/// Integrate one closed engine cycle and evaluate emissions.
pub fn simulate_engine_cycle(
    config: &EngineConfig,
    op: &OperatingPoint,
) -> Result<CycleOutputs, EngineError> {
    run_cycle(config, op, false).map(|t| t.outputs)
}

/// Like [`simulate_engine_cycle`] but keeps the crank-angle history.
pub fn simulate_engine_cycle_trace(
    config: &EngineConfig,
    op: &OperatingPoint,
) -> Result<CycleTrace, EngineError> {
    run_cycle(config, op, true)
}

fn run_cycle(config: &EngineConfig, op: &OperatingPoint, keep: bool) -> Result<CycleTrace, EngineError> {
    config.validate()?;
    op.validate()?;
    let model = CycleModel::new(config, op);
    let settings = &config.integration;
    let n_steps = ((settings.theta_evo - settings.theta_ivc) / settings.dtheta).round() as usize;
    let fired = op.is_fired();

    let mut state = model.initial_state();
    let mut states = Vec::with_capacity(if keep { n_steps + 1 } else { 0 });
    let mut history = BurnedZoneHistory::with_capacity(if fired { n_steps / 2 } else { 0 });
    let mut pressures = Vec::with_capacity(n_steps + 1);
    let mut peak_temp = state.temp_burned;
    if keep {
        states.push(state);
    }
    pressures.push(state.pressure);
    let mut terms = None;
    for i in 0..n_steps {
        let theta_next = settings.theta_ivc + (i + 1) as f64 * settings.dtheta;
        let h = theta_next - state.theta;
        let (next, end_terms) = model.advance(&state, h, terms)?;
        state = next;
        terms = Some(end_terms);
        pressures.push(state.pressure);
        peak_temp = peak_temp.max(state.temp_burned);
        if fired && state.burn_fraction > 0.0 {
            history.push(state.theta, state.pressure, state.temp_burned, state.burn_fraction);
        }
        if keep {
            states.push(state);
        }
    }

    let peak_pressure = refined_peak(&pressures);
    let indicated_work = state.work + gas_exchange_tails(&model, config, &state);
    let torque = indicated_work * config.geometry.n_cylinders as f64 / (4.0 * PI);

    let (no_ppm, co_ppm) = if fired {
        let phi = op.equivalence_ratio(&config.fluid);
        let out = integrate_emissions(&history, op.rpm, phi, &config.emissions)?;
        (out.no_ppm, out.co_ppm)
    } else {
        (0.0, 0.0)
    };

    Ok(CycleTrace {
        states,
        outputs: CycleOutputs {
            exhaust_temp: state.temp_burned,
            exhaust_pressure: state.pressure,
            no_ppm,
            co_ppm,
            torque,
            peak_pressure,
            peak_temp,
        },
        indicated_work,
    })
}

/// Work of the isentropic extensions BDC -> IVC and EVO -> BDC that close
/// the cycle algebraically in place of the gas-exchange strokes.
fn gas_exchange_tails(model: &CycleModel, config: &EngineConfig, end: &CylinderState) -> f64 {
    let geom = &config.geometry;
    let v_bdc = cylinder_volume(geom, 180.0);
    let v_ivc = cylinder_volume(geom, config.integration.theta_ivc);
    let v_evo = cylinder_volume(geom, config.integration.theta_evo);

    let g_in = model.gamma_charge;
    let p_ivc = model.initial_pressure;
    let p_start = p_ivc * (v_ivc / v_bdc).powf(g_in);
    let compression = (p_start * v_bdc - p_ivc * v_ivc) / (g_in - 1.0);

    let g_out = model.gamma(end.burn_fraction);
    let p_bdc = end.pressure * (v_evo / v_bdc).powf(g_out);
    let expansion = (end.pressure * v_evo - p_bdc * v_bdc) / (g_out - 1.0);
    compression + expansion
}

/// Maximum of a sampled curve, refined by a parabola through the three
/// samples around the discrete peak.
fn refined_peak(samples: &[f64]) -> f64 {
    let (imax, &pmax) = samples
        .iter()
        .enumerate()
        .fold((0, &f64::MIN), |acc, (i, p)| if *p > *acc.1 { (i, p) } else { acc });
    if imax == 0 || imax + 1 >= samples.len() {
        return pmax;
    }
    let (a, b, c) = (samples[imax - 1], pmax, samples[imax + 1]);
    let denom = a - 2.0 * b + c;
    if denom >= 0.0 {
        return pmax;
    }
    b - 0.125 * (a - c) * (a - c) / denom
}
