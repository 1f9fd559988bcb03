//! Explicit Euler integration of the crank-angle energy equation, written
//! directly from the textbook right-hand side.

use enginecal::engine::{
    burn_fraction, burn_rate, cylinder_volume, cylinder_volume_derivative, cylinder_wall_area, CycleModel,
    EngineConfig, OperatingPoint,
};

pub struct EnergyEquation<'a> {
    pub config: &'a EngineConfig,
    pub op: &'a OperatingPoint,
    pub gamma_charge: f64,
    pub trapped_mass: f64,
    pub fired: bool,
}

impl<'a> EnergyEquation<'a> {
    pub fn new(config: &'a EngineConfig, op: &'a OperatingPoint) -> Self {
        let model = CycleModel::new(config, op);
        Self {
            config,
            op,
            gamma_charge: model.gamma_charge(),
            trapped_mass: model.trapped_mass(),
            fired: op.fuel_per_cycle > 0.0,
        }
    }

    /// `dP/dθ` in Pa per crank degree.
    pub fn rate(&self, theta: f64, p: f64) -> f64 {
        let g = &self.config.geometry;
        let fluid = &self.config.fluid;
        let v = cylinder_volume(g, theta);
        let dv = cylinder_volume_derivative(g, theta);
        let (xb, dxb) = if self.fired {
            (
                burn_fraction(&self.config.combustion, theta),
                burn_rate(&self.config.combustion, theta),
            )
        } else {
            (0.0, 0.0)
        };
        let gamma = (1.0 - xb) * self.gamma_charge + xb * fluid.gamma_burned;
        let q_in = self.op.fuel_per_cycle * fluid.fuel_lhv * dxb;
        let q_loss = if self.fired {
            let temp = p * v / (self.trapped_mass * fluid.gas_constant);
            let w = 2.0 * g.stroke * self.op.rpm / 60.0;
            let h = self.config.heat_transfer.coefficient
                * g.bore.powf(-0.2)
                * (p / 1000.0).powf(0.8)
                * temp.powf(-0.55)
                * w.powf(0.8);
            let seconds_per_deg = 1.0 / (6.0 * self.op.rpm);
            h * cylinder_wall_area(g, theta) * (temp - self.op.wall_temp) * seconds_per_deg
        } else {
            0.0
        };
        (gamma - 1.0) / v * (q_in - q_loss) - gamma * p / v * dv
    }

    /// Forward Euler from `theta0` to `theta1` in `n` equal steps.
    pub fn euler(&self, theta0: f64, p0: f64, theta1: f64, n: usize) -> f64 {
        let h = (theta1 - theta0) / n as f64;
        let mut p = p0;
        for i in 0..n {
            let theta = theta0 + i as f64 * h;
            p += h * self.rate(theta, p);
        }
        p
    }

    /// Richardson-extrapolated Euler: `2·E(h) − E(2h)` cancels the
    /// first-order error term.
    pub fn euler_extrapolated(&self, theta0: f64, p0: f64, theta1: f64, n: usize) -> f64 {
        2.0 * self.euler(theta0, p0, theta1, n) - self.euler(theta0, p0, theta1, n / 2)
    }
}
