//! Thermal NO by the extended Zeldovich mechanism:
//!
//! ```text
//! O  + N2 ⇌ NO + N     (1)
//! N  + O2 ⇌ NO + O     (2)
//! N  + OH ⇌ NO + H     (3)
//! ```
//!
//! with O, OH, H, N2, O2 and N at equilibrium. Reverse rates follow from the
//! one-way equilibrium rates, which gives the classical form
//! `d[NO]/dt = 2 R1 (1 - α²) / (1 + α R1 / (R2 + R3))`, `α = [NO]/[NO]_e`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::equilibrium::{idx, SpeciesSet};
use super::thermo::{self, NasaPolynomial, P_STANDARD, R_UNIVERSAL};

/// `k = a · T^b · exp(-theta / T)`, cm³/(mol·s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arrhenius {
    pub a: f64,
    pub b: f64,
    /// Activation temperature, K.
    pub theta: f64,
}

impl Arrhenius {
    pub fn rate(&self, temp: f64) -> f64 {
        let pre = if self.b == 0.0 {
            self.a
        } else if self.b == 1.0 {
            self.a * temp
        } else {
            self.a * temp.powf(self.b)
        };
        pre * (-self.theta / temp).exp()
    }
}

/// Forward rate constants of the three reactions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZeldovichRates {
    pub k1: Arrhenius,
    pub k2: Arrhenius,
    pub k3: Arrhenius,
}

impl Default for ZeldovichRates {
    fn default() -> Self {
        // Standard textbook forward rates, cm³/(mol·s).
        Self {
            k1: Arrhenius { a: 1.8e14, b: 0.0, theta: 38370.0 },
            k2: Arrhenius { a: 1.8e10, b: 1.0, theta: 4680.0 },
            k3: Arrhenius { a: 7.1e13, b: 0.0, theta: 450.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionState {
    pub no_molefrac: f64,
    pub co_molefrac: f64,
    pub frozen: bool,
}

impl EmissionState {
    pub fn fresh() -> Self {
        Self {
            no_molefrac: 0.0,
            co_molefrac: 0.0,
            frozen: false,
        }
    }
}

/// Equilibrium N-atom mole fraction from ½N2 ⇌ N.
fn equilibrium_n_atom(eq: &SpeciesSet, temp: f64, pressure: f64) -> f64 {
    static POLYS: OnceLock<(NasaPolynomial, NasaPolynomial)> = OnceLock::new();
    let (n, n2) = POLYS.get_or_init(|| {
        let table = thermo::table();
        (
            table.get("N").expect("N in thermo table").clone(),
            table.get("N2").expect("N2 in thermo table").clone(),
        )
    });
    let ln_k = -(n.g_over_rt(temp) - 0.5 * n2.g_over_rt(temp));
    let x_n2 = eq.get(idx::N2);
    ln_k.exp() * x_n2.sqrt() * (pressure / P_STANDARD).powf(-0.5)
}

/// One-way rates and total concentration for a given equilibrium state.
#[derive(Debug, Clone, Copy)]
pub struct ZeldovichRateTerms {
    /// mol/(cm³·s)
    pub r1: f64,
    pub r2_plus_r3: f64,
    /// Total concentration, mol/cm³.
    pub concentration: f64,
    pub no_equilibrium: f64,
}

impl ZeldovichRateTerms {
    pub fn new(eq: &SpeciesSet, temp: f64, pressure: f64, rates: &ZeldovichRates) -> Self {
        let c = pressure / (R_UNIVERSAL * temp) * 1e-6;
        let x_n = equilibrium_n_atom(eq, temp, pressure);
        let r1 = rates.k1.rate(temp) * eq.get(idx::O) * eq.get(idx::N2) * c * c;
        let r2 = rates.k2.rate(temp) * x_n * eq.get(idx::O2) * c * c;
        let r3 = rates.k3.rate(temp) * x_n * eq.get(idx::OH) * c * c;
        Self {
            r1,
            r2_plus_r3: r2 + r3,
            concentration: c,
            no_equilibrium: eq.get(idx::NO),
        }
    }

    /// `dx_NO/dt` in 1/s at NO mole fraction `x`.
    pub fn molefrac_rate(&self, x: f64) -> f64 {
        if self.no_equilibrium <= 0.0 || self.r1 <= 0.0 {
            return 0.0;
        }
        let alpha = x / self.no_equilibrium;
        let denom = 1.0 + alpha * self.r1 / self.r2_plus_r3;
        2.0 * self.r1 * (1.0 - alpha * alpha) / denom / self.concentration
    }

    fn molefrac_rate_derivative(&self, x: f64) -> f64 {
        if self.no_equilibrium <= 0.0 || self.r1 <= 0.0 {
            return 0.0;
        }
        let xe = self.no_equilibrium;
        let beta = self.r1 / self.r2_plus_r3;
        let alpha = x / xe;
        let denom = 1.0 + alpha * beta;
        let num = 1.0 - alpha * alpha;
        2.0 * self.r1 / self.concentration * (-2.0 * alpha * denom - num * beta) / (denom * denom) / xe
    }
}

/// Advance NO over `dt` seconds with `substeps` backward-Euler sub-steps.
///
/// Each sub-step solves `x = x0 + h f(x)`; because `f` is decreasing and
/// vanishes at the equilibrium value, the root lies between `x0` and
/// `x_e`, so NO relaxes toward equilibrium without crossing it.
pub fn zeldovich_no_step(
    state: &EmissionState,
    eq: &SpeciesSet,
    temp: f64,
    pressure: f64,
    dt: f64,
    rates: &ZeldovichRates,
    substeps: usize,
) -> EmissionState {
    let terms = ZeldovichRateTerms::new(eq, temp, pressure, rates);
    let mut x = state.no_molefrac;
    let h = dt / substeps.max(1) as f64;
    for _ in 0..substeps.max(1) {
        x = implicit_substep(&terms, x, h);
    }
    EmissionState {
        no_molefrac: x.max(0.0),
        ..*state
    }
}

fn implicit_substep(terms: &ZeldovichRateTerms, x0: f64, h: f64) -> f64 {
    let f0 = terms.molefrac_rate(x0);
    if f0 == 0.0 {
        return x0;
    }
    let xe = terms.no_equilibrium;
    let residual = |x: f64| x - x0 - h * terms.molefrac_rate(x);
    // The residual is increasing in x, negative at x0 side and positive at the other.
    let (mut lo, mut r_lo, mut hi, mut r_hi) = if x0 < xe {
        (x0, -h * f0, xe, xe - x0)
    } else {
        (xe, xe - x0, x0, -h * f0)
    };
    let tol = 1e-13 * xe.max(x0);
    // Explicit Euler clipped to the bracket as the starting point.
    let mut x = (x0 + h * f0).clamp(lo, hi);
    for _ in 0..60 {
        let r = residual(x);
        if r == 0.0 {
            return x;
        }
        if r > 0.0 {
            hi = x;
            r_hi = r;
        } else {
            lo = x;
            r_lo = r;
        }
        let dr = 1.0 - h * terms.molefrac_rate_derivative(x);
        let newton = r / dr;
        if newton.abs() <= tol {
            return (x - newton).clamp(lo, hi);
        }
        let mut next = x - newton;
        if !(next > lo && next < hi) {
            // False position on the bracket, then bisection as a last resort.
            next = lo - r_lo * (hi - lo) / (r_hi - r_lo);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
        }
        if hi - lo <= tol {
            return next;
        }
        x = next;
    }
    x
}
