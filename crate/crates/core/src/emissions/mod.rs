//! Burned-gas chemistry: equilibrium composition, kinetically limited NO and
//! CO frozen at its equilibrium value on the expansion stroke.

pub mod equilibrium;
pub mod thermo;
pub mod zeldovich;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use equilibrium::{
    complete_combustion, equilibrium_composition, EquilibriumSolver, FuelDescriptor, SpeciesSet,
};
pub use zeldovich::{zeldovich_no_step, EmissionState, ZeldovichRates};

use equilibrium::idx;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmissionsError {
    #[error("equilibrium solve did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("thermochemistry outside model envelope: {0}")]
    OutOfRange(String),
    #[error("thermo table: {0}")]
    ThermoTable(String),
    #[error("invalid emissions configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmissionsConfig {
    pub fuel: FuelDescriptor,
    pub rates: ZeldovichRates,
    /// Burned-gas temperature at which CO is frozen, K.
    pub co_freeze_temp: f64,
    /// Below this temperature the complete-combustion composition is used, K.
    pub complete_combustion_below: f64,
    /// Implicit sub-steps per crank interval for NO.
    pub no_substeps: usize,
}

impl Default for EmissionsConfig {
    fn default() -> Self {
        Self {
            fuel: FuelDescriptor::default(),
            rates: ZeldovichRates::default(),
            co_freeze_temp: 1740.0,
            complete_combustion_below: 1000.0,
            no_substeps: 2,
        }
    }
}

impl EmissionsConfig {
    pub fn validate(&self) -> Result<(), EmissionsError> {
        if !(self.co_freeze_temp >= self.complete_combustion_below) {
            return Err(EmissionsError::InvalidConfig(
                "CO freeze temperature must not be below the complete-combustion threshold".into(),
            ));
        }
        if self.no_substeps == 0 {
            return Err(EmissionsError::InvalidConfig("at least one NO sub-step is required".into()));
        }
        if !(self.fuel.carbon > 0.0 && self.fuel.hydrogen > 0.0) {
            return Err(EmissionsError::InvalidConfig("fuel must contain carbon and hydrogen".into()));
        }
        Ok(())
    }
}

/// Burned-zone trajectory on the engine crank grid, from the first burned
/// sample to exhaust valve opening.
#[derive(Debug, Clone, Default)]
pub struct BurnedZoneHistory {
    pub theta: Vec<f64>,
    pub pressure: Vec<f64>,
    pub temp_burned: Vec<f64>,
    pub burn_fraction: Vec<f64>,
}

impl BurnedZoneHistory {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            theta: Vec::with_capacity(n),
            pressure: Vec::with_capacity(n),
            temp_burned: Vec::with_capacity(n),
            burn_fraction: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, theta: f64, pressure: f64, temp_burned: f64, burn_fraction: f64) {
        self.theta.push(theta);
        self.pressure.push(pressure);
        self.temp_burned.push(temp_burned);
        self.burn_fraction.push(burn_fraction);
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionsOutput {
    pub no_ppm: f64,
    pub co_ppm: f64,
    /// Crank angle at which CO froze, if the burned gas crossed the freeze temperature.
    pub co_freeze_theta: Option<f64>,
    pub max_newton_iterations: usize,
}

fn composition(
    solver: &mut EquilibriumSolver,
    temp: f64,
    pressure: f64,
    phi: f64,
    config: &EmissionsConfig,
) -> Result<SpeciesSet, EmissionsError> {
    if temp < config.complete_combustion_below {
        Ok(complete_combustion(phi, &config.fuel))
    } else {
        solver.solve(temp, pressure, phi, &config.fuel)
    }
}

fn trajectory_composition(
    solver: &mut EquilibriumSolver,
    temp: f64,
    pressure: f64,
    phi: f64,
    config: &EmissionsConfig,
) -> Result<SpeciesSet, EmissionsError> {
    if temp < config.complete_combustion_below {
        solver.reset();
        Ok(complete_combustion(phi, &config.fuel))
    } else {
        solver.solve_continuation(temp, pressure, phi, &config.fuel)
    }
}

/// Integrate NO along the burned-zone trajectory and freeze CO.
///
/// New burned mass enters with no NO, so between samples the NO mole
/// fraction is diluted by the ratio of burned fractions before the kinetic
/// step. Both species are reported as ppm of the exhaust charge.
pub fn integrate_emissions(
    history: &BurnedZoneHistory,
    rpm: f64,
    phi: f64,
    config: &EmissionsConfig,
) -> Result<EmissionsOutput, EmissionsError> {
    let n = history.len();
    if n == 0 || history.burn_fraction[n - 1] <= 0.0 {
        return Ok(EmissionsOutput {
            no_ppm: 0.0,
            co_ppm: 0.0,
            co_freeze_theta: None,
            max_newton_iterations: 0,
        });
    }
    let seconds_per_deg = 1.0 / (6.0 * rpm);
    let t_freeze = config.co_freeze_temp;
    let mut solver = EquilibriumSolver::new();
    let mut state = EmissionState::fresh();
    let mut co: Option<f64> = None;
    let mut freeze_theta = None;
    let mut was_hot = false;
    let mut peak = 0;
    let mut last_eq = None;

    for i in 0..n {
        let (temp, pressure, x_b) = (history.temp_burned[i], history.pressure[i], history.burn_fraction[i]);
        if temp > history.temp_burned[peak] {
            peak = i;
        }
        let eq = trajectory_composition(&mut solver, temp, pressure, phi, config)?;
        if i > 0 {
            let dt = (history.theta[i] - history.theta[i - 1]) * seconds_per_deg;
            let prev_xb = history.burn_fraction[i - 1];
            if prev_xb > 0.0 && x_b > 0.0 {
                state.no_molefrac *= prev_xb / x_b;
            }
            state = zeldovich_no_step(&state, &eq, temp, pressure, dt, &config.rates, config.no_substeps);
        }
        if co.is_none() {
            if temp >= t_freeze {
                was_hot = true;
            } else if was_hot {
                // Linear interpolation to the crossing of the freeze temperature.
                let t_prev = history.temp_burned[i - 1];
                let s = (t_prev - t_freeze) / (t_prev - temp);
                let p_prev = history.pressure[i - 1];
                let p_cross = p_prev + s * (pressure - p_prev);
                let mut freeze_solver = solver.clone();
                let frozen = composition(&mut freeze_solver, t_freeze, p_cross, phi, config)?;
                co = Some(frozen.get(idx::CO));
                freeze_theta = Some(history.theta[i - 1] + s * (history.theta[i] - history.theta[i - 1]));
                state.co_molefrac = frozen.get(idx::CO);
                state.frozen = true;
            }
        }
        last_eq = Some(eq);
    }

    let co = match co {
        Some(c) => c,
        // Still above the freeze temperature at valve opening.
        None if was_hot => last_eq.expect("non-empty history").get(idx::CO),
        // Never reached it: take the equilibrium at peak temperature.
        None => {
            let mut cold = EquilibriumSolver::new();
            composition(&mut cold, history.temp_burned[peak], history.pressure[peak], phi, config)?.get(idx::CO)
        }
    };
    let exhaust_fraction = history.burn_fraction[n - 1];
    Ok(EmissionsOutput {
        no_ppm: state.no_molefrac * exhaust_fraction * 1e6,
        co_ppm: co * exhaust_fraction * 1e6,
        co_freeze_theta: freeze_theta,
        max_newton_iterations: solver.max_iterations_seen,
    })
}
