use enginecal::drive_cycle::{GridLevels, GridPoint, RegimeModifiers, TraceSample, DriveCycleModel};
use enginecal::emissions::equilibrium::{idx, FuelDescriptor, SpeciesSet, SPECIES_NAMES};
use enginecal::emissions::{
    complete_combustion, equilibrium_composition, zeldovich_no_step, EmissionState, EquilibriumSolver, ZeldovichRates,
};
use enginecal::engine::{simulate_engine_cycle, simulate_engine_cycle_trace, EngineConfig, IntegrationSettings, OperatingPoint};
use crate::oracles::{derived_point, gibbs};
use rayon::prelude::*;

fn fuel() -> FuelDescriptor {
    FuelDescriptor::default()
}

/// 20 (T, P, phi) points spanning the burned-gas envelope.
fn oracle_points() -> Vec<(f64, f64, f64)> {
    let mut out = Vec::new();
    for temp in [1600.0, 2200.0, 2800.0, 3400.0] {
        for (p, phi) in [(0.5e6, 0.8), (2.0e6, 1.0), (5.0e6, 1.0), (8.0e6, 1.2), (3.0e6, 1.5)] {
            out.push((temp, p, phi));
        }
    }
    out
}

fn assert_matches_oracle(temp: f64, p: f64, phi: f64) {
    let solved = equilibrium_composition(temp, p, phi, &fuel()).unwrap();
    let reference = gibbs::minimize(temp, p, phi, &fuel());
    for (i, name) in SPECIES_NAMES.iter().enumerate() {
        let r = reference.mole_fractions[i];
        if r > 1e-6 {
            let rel = (solved.get(i) - r).abs() / r;
            assert!(rel < 1e-3, "{name} at ({temp}, {p}, {phi}): {} vs oracle {r}", solved.get(i));
        }
    }
}

pub fn equilibrium_matches_gibbs_minimization_on_twenty_points() {
    for (t, p, phi) in oracle_points() {
        assert_matches_oracle(t, p, phi);
    }
}

pub fn stoichiometric_high_pressure_point_matches_gibbs_minimization() {
    assert_matches_oracle(2500.0, 5.0e6, 1.0);
}

pub fn oracle_itself_conserves_elements() {
    for (t, p, phi) in oracle_points() {
        let r = gibbs::minimize(t, p, phi, &fuel());
        let e = gibbs::element_totals(&r.mole_fractions);
        let b = fuel().reactant_elements(phi);
        for j in [0, 1, 3] {
            assert!(((e[j] / e[2]) / (b[j] / b[2]) - 1.0).abs() < 1e-9);
        }
    }
}

fn envelope() -> Vec<(f64, f64, f64)> {
    let mut out = Vec::new();
    for temp in [600.0, 1000.0, 1500.0, 2000.0, 2500.0, 3000.0, 3500.0, 4000.0] {
        for p in [1e4, 1e5, 1e6, 5e6, 3e7] {
            for phi in [0.3, 0.7, 1.0, 1.3, 2.0] {
                out.push((temp, p, phi));
            }
        }
    }
    out
}

fn check_closure(x: &SpeciesSet, phi: f64) {
    assert!((x.sum() - 1.0).abs() < 1e-10, "mole fractions sum to {}", x.sum());
    let e = gibbs::element_totals(&x.mole_fractions);
    let b = fuel().reactant_elements(phi);
    for j in [0, 1, 3] {
        let rel = ((e[j] / e[2]) / (b[j] / b[2]) - 1.0).abs();
        assert!(rel < 1e-8, "element ratio {j} off by {rel}");
    }
    assert!(x.mole_fractions.iter().all(|v| (0.0..=1.0).contains(v)));
}

pub fn every_converged_state_conserves_elements_and_closes() {
    for (t, p, phi) in envelope() {
        let x = equilibrium_composition(t, p, phi, &fuel()).unwrap();
        check_closure(&x, phi);
    }
}

pub fn warm_started_solves_also_conserve() {
    let mut solver = EquilibriumSolver::new();
    for (t, p, phi) in envelope().into_iter().rev() {
        let x = solver.solve(t, p, phi, &fuel()).unwrap();
        check_closure(&x, phi);
    }
}

pub fn lean_cool_products_match_complete_combustion() {
    let eq = equilibrium_composition(1000.0, 1.0e6, 0.8, &fuel()).unwrap();
    let cc = complete_combustion(0.8, &fuel());
    for s in [idx::H, idx::O, idx::OH, idx::NO, idx::H2, idx::CO] {
        assert!(eq.get(s) < 1e-4);
    }
    for s in [idx::CO2, idx::H2O, idx::O2, idx::N2] {
        assert!((eq.get(s) - cc.get(s)).abs() / cc.get(s) < 5e-4);
    }
}

pub fn equilibrium_co_grows_with_phi_like_the_oracle() {
    let mut last = 0.0;
    for k in 0..=10 {
        let phi = 0.9 + 0.02 * k as f64;
        let x = equilibrium_composition(2400.0, 4.0e6, phi, &fuel()).unwrap().get(idx::CO);
        let r = gibbs::minimize(2400.0, 4.0e6, phi, &fuel()).mole_fractions[idx::CO];
        assert!(x > last);
        assert!((x - r).abs() / r < 1e-3);
        last = x;
    }
}

pub fn equilibrium_no_is_a_zeldovich_fixed_point() {
    let rates = ZeldovichRates::default();
    for (t, p, phi) in [(2500.0, 5.0e6, 1.0), (2200.0, 2.0e6, 0.8), (2800.0, 8.0e6, 1.2)] {
        let eq = equilibrium_composition(t, p, phi, &fuel()).unwrap();
        let state = EmissionState {
            no_molefrac: eq.get(idx::NO),
            ..EmissionState::fresh()
        };
        let next = zeldovich_no_step(&state, &eq, t, p, 1e-4, &rates, 4);
        assert_eq!(next.no_molefrac, state.no_molefrac);
    }
}

pub fn no_stays_below_its_running_equilibrium_peak_while_cooling() {
    let rates = ZeldovichRates::default();
    let mut state = EmissionState::fresh();
    let mut solver = EquilibriumSolver::new();
    let mut peak_eq: f64 = 0.0;
    let mut max_no: f64 = 0.0;
    for k in 0..300 {
        let s = k as f64 / 299.0;
        let t = 2800.0 - 1300.0 * s;
        let p = 6.0e6 * (-2.5 * s).exp() + 3.0e5;
        let eq = solver.solve_continuation(t, p, 1.0, &fuel()).unwrap();
        peak_eq = peak_eq.max(eq.get(idx::NO));
        state = zeldovich_no_step(&state, &eq, t, p, 2e-5, &rates, 2);
        assert!(state.no_molefrac >= 0.0);
        assert!(state.no_molefrac <= peak_eq * (1.0 + 1e-12));
        assert!(state.no_molefrac >= max_no * (1.0 - 1e-9) || eq.get(idx::NO) < state.no_molefrac);
        max_no = max_no.max(state.no_molefrac);
    }
    // Kinetically frozen well above the cold equilibrium.
    let cold = equilibrium_composition(1500.0, 3.0e5 + 6.0e6 * (-2.5f64).exp(), 1.0, &fuel()).unwrap();
    assert!(state.no_molefrac > 10.0 * cold.get(idx::NO));
}

fn with_step(dtheta: f64) -> EngineConfig {
    EngineConfig {
        integration: IntegrationSettings {
            dtheta,
            ..IntegrationSettings::default()
        },
        ..EngineConfig::default()
    }
}

pub fn no_is_insensitive_to_crank_refinement() {
    for (speed, fuel_pc, valve) in [(11.0, 1.9e-5, 20.0), (6.0, 1.2e-5, 0.0), (18.0, 2.6e-5, 40.0)] {
        let (_, op) = derived_point(speed, fuel_pc, valve);
        let coarse = simulate_engine_cycle(&with_step(0.5), &op).unwrap().no_ppm;
        let fine = simulate_engine_cycle(&with_step(0.25), &op).unwrap().no_ppm;
        let rel = (coarse - fine).abs() / fine;
        assert!(rel < 5e-3, "NO changed by {rel}");
    }
}

pub fn richer_cycle_emits_more_co() {
    let (config, base) = derived_point(11.0, 1.9e-5, 20.0);
    let stoich = config.fluid.stoich_afr;
    let at = |phi: f64| {
        let op = OperatingPoint {
            afr: stoich / phi,
            ..base
        };
        simulate_engine_cycle(&config, &op).unwrap().co_ppm
    };
    assert!(at(1.1) > at(0.9));
    let mut last = 0.0;
    for k in 0..=4 {
        let co = at(0.9 + 0.05 * k as f64);
        assert!(co > last);
        last = co;
    }
}

pub fn emissions_are_thread_independent() {
    let (config, op) = derived_point(11.0, 1.9e-5, 20.0);
    let serial = simulate_engine_cycle(&config, &op).unwrap();
    let parallel: Vec<_> = (0..16).into_par_iter().map(|_| simulate_engine_cycle(&config, &op).unwrap()).collect();
    assert!(parallel.iter().all(|o| *o == serial));
}

pub fn newton_converges_quickly_at_peak_conditions_over_the_full_grid() {
    let model = DriveCycleModel::default();
    let points = GridLevels::default().points();
    assert_eq!(points.len(), 15_625);
    let worst = points
        .par_iter()
        .map(|point: &GridPoint| {
            let engine = model.engine_for(point).unwrap();
            let sample = TraceSample {
                t: 0.0,
                vehicle_speed: 11.0,
                fuel_flow: 1.6e-3,
            };
            let (op, _) = model.derive_inputs(&engine, &sample, point, &RegimeModifiers::default());
            let trace = simulate_engine_cycle_trace(&engine, &op).unwrap();
            let peak = trace
                .states
                .iter()
                .filter(|s| s.burn_fraction > 0.0)
                .max_by(|a, b| a.temp_burned.total_cmp(&b.temp_burned))
                .unwrap();
            let phi = op.equivalence_ratio(&engine.fluid);
            let mut solver = EquilibriumSolver::new();
            solver
                .solve(peak.temp_burned, peak.pressure, phi, &engine.emissions.fuel)
                .unwrap();
            solver.last_iterations
        })
        .max()
        .unwrap();
    assert!(worst <= 50, "worst case needed {worst} Newton iterations");
}
