//! Gibbs free-energy minimization by the element-potential method.
//!
//! Minimizes `G/RT = Σ n_i (g_i + ln(n_i/n) + ln(P/P°))` subject to the
//! element balances with Lagrange multipliers `π_j`. Each Newton update
//! solves the reduced `(elements + 1)` system in `π` and `Δln n`, then
//! rebuilds every species update from the stationarity condition.

use enginecal::emissions::equilibrium::{FuelDescriptor, SPECIES_NAMES};
use enginecal::emissions::thermo::{table, P_STANDARD};
use nalgebra::{DMatrix, DVector};

const NS: usize = 10;
const NE: usize = 4;

pub struct GibbsResult {
    pub mole_fractions: [f64; NS],
    pub iterations: usize,
}

fn species_data(temp: f64) -> ([f64; NS], [[f64; NE]; NS]) {
    let t = table();
    let mut g = [0.0; NS];
    let mut a = [[0.0; NE]; NS];
    for (i, name) in SPECIES_NAMES.iter().enumerate() {
        let poly = t.get(name).expect("species in thermo table");
        g[i] = poly.h_over_rt(temp) - poly.s_over_r(temp);
        a[i] = poly.elements;
    }
    (g, a)
}

pub fn minimize(temp: f64, pressure: f64, phi: f64, fuel: &FuelDescriptor) -> GibbsResult {
    let (g, a) = species_data(temp);
    let stoich = fuel.carbon + fuel.hydrogen / 4.0;
    let o2 = stoich / phi;
    let b = [fuel.carbon, fuel.hydrogen, 2.0 * o2, 2.0 * 3.76 * o2];
    let ln_p = (pressure / P_STANDARD).ln();

    // Uniform start is far from the answer on purpose: the method must
    // find the minimum on its own.
    let total_atoms: f64 = b.iter().sum();
    let mut n = [total_atoms / (2.0 * NS as f64); NS];
    let mut n_total: f64 = n.iter().sum();

    for iter in 0..2000 {
        let mu: Vec<f64> = (0..NS).map(|i| g[i] + (n[i] / n_total).ln() + ln_p).collect();
        let dim = NE + 1;
        let mut m = DMatrix::<f64>::zeros(dim, dim);
        let mut rhs = DVector::<f64>::zeros(dim);
        for j in 0..NE {
            for k in 0..NE {
                m[(j, k)] = (0..NS).map(|i| a[i][j] * a[i][k] * n[i]).sum();
            }
            let bj: f64 = (0..NS).map(|i| a[i][j] * n[i]).sum();
            m[(j, NE)] = bj;
            rhs[j] = b[j] - bj + (0..NS).map(|i| a[i][j] * n[i] * mu[i]).sum::<f64>();
        }
        let sum_n: f64 = n.iter().sum();
        for k in 0..NE {
            m[(NE, k)] = (0..NS).map(|i| a[i][k] * n[i]).sum();
        }
        m[(NE, NE)] = sum_n - n_total;
        rhs[NE] = n_total - sum_n + (0..NS).map(|i| n[i] * mu[i]).sum::<f64>();

        let sol = m.lu().solve(&rhs).expect("reduced Gibbs system is regular");
        let dln_total = sol[NE];
        let mut dln = [0.0; NS];
        for i in 0..NS {
            dln[i] = -mu[i] + dln_total + (0..NE).map(|j| a[i][j] * sol[j]).sum::<f64>();
        }
        let biggest = dln.iter().fold(dln_total.abs(), |acc, v| acc.max(v.abs()));
        let lambda = if biggest > 2.0 { 2.0 / biggest } else { 1.0 };
        for i in 0..NS {
            n[i] *= (lambda * dln[i]).exp();
        }
        n_total *= (lambda * dln_total).exp();
        if biggest < 1e-13 {
            let s: f64 = n.iter().sum();
            return GibbsResult {
                mole_fractions: n.map(|v| v / s),
                iterations: iter + 1,
            };
        }
    }
    panic!("Gibbs minimization did not converge at T={temp}, P={pressure}, phi={phi}");
}

/// Atom totals (C, H, O, N) of a composition, from the thermo table.
pub fn element_totals(x: &[f64; NS]) -> [f64; NE] {
    let t = table();
    let mut out = [0.0; NE];
    for (i, name) in SPECIES_NAMES.iter().enumerate() {
        let e = t.get(name).expect("species in thermo table").elements;
        for j in 0..NE {
            out[j] += x[i] * e[j];
        }
    }
    out
}
