//! Ten-species burned-gas equilibrium.
//!
//! Unknowns are the log mole fractions `z_i = ln x_i`. The system is six
//! dissociation equilibria (linear in `z`), the mole-fraction closure
//! `Σ x_i = 1`, and three element-ratio balances (C, H and N against O).
//! The linear equilibria are eliminated exactly, leaving a 4×4 Newton
//! system whose step is halved whenever the residual grows.

use serde::{Deserialize, Serialize};

use super::thermo::{self, NasaPolynomial, P_STANDARD};
use super::EmissionsError;

pub const N_SPECIES: usize = 10;
pub const SPECIES_NAMES: [&str; N_SPECIES] =
    ["CO2", "H2O", "N2", "O2", "CO", "H2", "OH", "H", "O", "NO"];

pub mod idx {
    pub const CO2: usize = 0;
    pub const H2O: usize = 1;
    pub const N2: usize = 2;
    pub const O2: usize = 3;
    pub const CO: usize = 4;
    pub const H2: usize = 5;
    pub const OH: usize = 6;
    pub const H: usize = 7;
    pub const O: usize = 8;
    pub const NO: usize = 9;
}

/// Element order used throughout: C, H, O, N.
pub const N_ELEMENTS: usize = 4;
const ELEM_O: usize = 2;

/// Atom counts per species, rows in [`SPECIES_NAMES`] order.
pub const ATOMS: [[f64; N_ELEMENTS]; N_SPECIES] = [
    [1.0, 0.0, 2.0, 0.0],
    [0.0, 2.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 2.0],
    [0.0, 0.0, 2.0, 0.0],
    [1.0, 0.0, 1.0, 0.0],
    [0.0, 2.0, 0.0, 0.0],
    [0.0, 1.0, 1.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0, 1.0],
];

/// Stoichiometric vectors of the six equilibria, products positive:
/// ½H2 ⇌ H, ½O2 ⇌ O, ½H2 + ½O2 ⇌ OH, ½N2 + ½O2 ⇌ NO,
/// H2 + ½O2 ⇌ H2O, CO + ½O2 ⇌ CO2.
const REACTIONS: [[f64; N_SPECIES]; 6] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, -0.5, 0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, -0.5, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, -0.5, 0.0, -0.5, 1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, -0.5, -0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
    [0.0, 1.0, 0.0, -0.5, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0],
    [1.0, 0.0, 0.0, -0.5, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
];

pub const MAX_ITERATIONS: usize = 200;
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;
/// Largest Newton update allowed on any log mole fraction.
const MAX_LOG_STEP: f64 = 4.0;

/// Hydrocarbon fuel `C_x H_y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuelDescriptor {
    pub carbon: f64,
    pub hydrogen: f64,
}

impl Default for FuelDescriptor {
    fn default() -> Self {
        // iso-octane
        Self {
            carbon: 8.0,
            hydrogen: 18.0,
        }
    }
}

impl FuelDescriptor {
    /// Moles of O2 for stoichiometric combustion of one mole of fuel.
    pub fn stoich_o2(&self) -> f64 {
        self.carbon + self.hydrogen / 4.0
    }

    /// Element totals (C, H, O, N) of fuel plus air at equivalence ratio
    /// `phi`, per mole of fuel. Air is O2 + 3.76 N2.
    pub fn reactant_elements(&self, phi: f64) -> [f64; N_ELEMENTS] {
        let o2 = self.stoich_o2() / phi;
        [self.carbon, self.hydrogen, 2.0 * o2, 2.0 * 3.76 * o2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeciesSet {
    pub mole_fractions: [f64; N_SPECIES],
}

impl SpeciesSet {
    pub fn get(&self, species: usize) -> f64 {
        self.mole_fractions[species]
    }

    /// Atom totals per mole of mixture.
    pub fn element_totals(&self) -> [f64; N_ELEMENTS] {
        let mut out = [0.0; N_ELEMENTS];
        for (x, atoms) in self.mole_fractions.iter().zip(ATOMS.iter()) {
            for j in 0..N_ELEMENTS {
                out[j] += x * atoms[j];
            }
        }
        out
    }

    pub fn sum(&self) -> f64 {
        self.mole_fractions.iter().sum()
    }

    fn from_moles(moles: [f64; N_SPECIES]) -> Self {
        let total: f64 = moles.iter().sum();
        let mut mole_fractions = moles;
        for x in &mut mole_fractions {
            *x /= total;
        }
        Self { mole_fractions }
    }
}

/// Product composition assuming complete combustion; rich mixtures split
/// C and H with a water-gas shift constant of 3.5.
pub fn complete_combustion(phi: f64, fuel: &FuelDescriptor) -> SpeciesSet {
    let a = fuel.stoich_o2();
    let (x, y) = (fuel.carbon, fuel.hydrogen);
    let mut moles = [0.0; N_SPECIES];
    moles[idx::N2] = 3.76 * a / phi;
    if phi <= 1.0 {
        moles[idx::CO2] = x;
        moles[idx::H2O] = y / 2.0;
        moles[idx::O2] = a * (1.0 / phi - 1.0);
    } else {
        const K_WGS: f64 = 3.5;
        // Oxygen atoms left after one O per carbon.
        let o_rem = 2.0 * a / phi - x;
        let qa = K_WGS - 1.0;
        let qb = K_WGS * (y / 2.0 - o_rem) + o_rem + x;
        let qc = -o_rem * x;
        let co2 = (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa);
        let h2o = o_rem - co2;
        moles[idx::CO2] = co2;
        moles[idx::CO] = x - co2;
        moles[idx::H2O] = h2o;
        moles[idx::H2] = y / 2.0 - h2o;
    }
    SpeciesSet::from_moles(moles)
}

fn check_envelope(temp: f64, pressure: f64, phi: f64) -> Result<(), EmissionsError> {
    if !(600.0..=4000.0).contains(&temp) {
        return Err(EmissionsError::OutOfRange(format!("temperature {temp} K outside [600, 4000]")));
    }
    if !(1.0e4..=3.0e7).contains(&pressure) {
        return Err(EmissionsError::OutOfRange(format!("pressure {pressure} Pa outside [1e4, 3e7]")));
    }
    if !(phi > 0.0 && phi <= 2.0) {
        return Err(EmissionsError::OutOfRange(format!("equivalence ratio {phi} outside (0, 2]")));
    }
    Ok(())
}

/// `ln K_p` of the six equilibria at `temp`.
pub fn log_equilibrium_constants(temp: f64) -> [f64; 6] {
    let gibbs = species_gibbs(temp);
    let mut out = [0.0; 6];
    for (k, nu) in REACTIONS.iter().enumerate() {
        out[k] = -nu.iter().zip(gibbs.iter()).map(|(n, g)| n * g).sum::<f64>();
    }
    out
}

/// Standard-state `g/RT` for the ten species.
pub fn species_gibbs(temp: f64) -> [f64; N_SPECIES] {
    let polys = species_polynomials();
    let mut g = [0.0; N_SPECIES];
    for (gi, p) in g.iter_mut().zip(polys.iter()) {
        *gi = p.g_over_rt(temp);
    }
    g
}

fn species_polynomials() -> &'static [NasaPolynomial; N_SPECIES] {
    use std::sync::OnceLock;
    static POLYS: OnceLock<[NasaPolynomial; N_SPECIES]> = OnceLock::new();
    POLYS.get_or_init(|| {
        let table = thermo::table();
        SPECIES_NAMES.map(|name| {
            table
                .get(name)
                .unwrap_or_else(|| panic!("thermo table lacks {name}"))
                .clone()
        })
    })
}

/// Species whose log mole fractions are the Newton unknowns.
const BASIS: [usize; 4] = [idx::N2, idx::O2, idx::CO, idx::H2];
/// Product species of each of the six equilibria, in [`REACTIONS`] order.
const DEPENDENT: [usize; 6] = [idx::H, idx::O, idx::OH, idx::NO, idx::H2O, idx::CO2];

/// The six equilibria are solved exactly for their product species, so the
/// Newton system only carries the closure and the three element balances in
/// the four basis unknowns.
struct Problem {
    /// `x_d = scale_k · Π_b x_b^coeff[k][b]` for each dependent species.
    scale: [f64; 6],
    coeff: [[f64; 4]; 6],
    elements: [f64; N_ELEMENTS],
}

impl Problem {
    fn new(temp: f64, pressure: f64, elements: [f64; N_ELEMENTS]) -> Self {
        let log_k = log_equilibrium_constants(temp);
        let log_p = (pressure / P_STANDARD).ln();
        let mut scale = [0.0; 6];
        let mut coeff = [[0.0; 4]; 6];
        for (k, nu) in REACTIONS.iter().enumerate() {
            let dn: f64 = nu.iter().sum();
            scale[k] = (log_k[k] - dn * log_p).exp();
            for (b, &s) in BASIS.iter().enumerate() {
                coeff[k][b] = -nu[s];
            }
        }
        Self { scale, coeff, elements }
    }

    /// Mole fractions from the basis unknowns. Dependent species only
    /// involve half and whole powers of the basis, so one exponential per
    /// basis species suffices.
    fn mole_fractions(&self, zb: &[f64; 4]) -> [f64; N_SPECIES] {
        let xb = zb.map(f64::exp);
        let roots = xb.map(f64::sqrt);
        let mut x = [0.0; N_SPECIES];
        for (b, &s) in BASIS.iter().enumerate() {
            x[s] = xb[b];
        }
        for (k, &d) in DEPENDENT.iter().enumerate() {
            let mut v = self.scale[k];
            for b in 0..4 {
                let c = self.coeff[k][b];
                if c == 1.0 {
                    v *= xb[b];
                } else if c == 0.5 {
                    v *= roots[b];
                } else if c != 0.0 {
                    v *= (c * zb[b]).exp();
                }
            }
            x[d] = v;
        }
        x
    }

    /// Basis unknowns from the complete-combustion guess, after partially
    /// dissociating CO2 and then H2O so both equilibria hold at the start.
    fn initial_guess(&self, guess: &SpeciesSet) -> [f64; 4] {
        let x = &guess.mole_fractions;
        let (k_h2o, k_co2) = (self.scale[4], self.scale[5]);
        let d = dissociation_extent(x[idx::CO2], x[idx::CO], x[idx::O2], k_co2);
        let (co, o2) = (x[idx::CO] + 2.0 * d, x[idx::O2] + d);
        let e = dissociation_extent(x[idx::H2O], x[idx::H2], o2, k_h2o);
        let (h2, o2) = (x[idx::H2] + 2.0 * e, o2 + e);
        [x[idx::N2], o2, co, h2].map(|v| v.max(f64::MIN_POSITIVE).ln())
    }

    fn residual(&self, zb: &[f64; 4]) -> ([f64; 4], [f64; N_SPECIES]) {
        let x = self.mole_fractions(zb);
        let mut r = [0.0; 4];
        r[0] = x.iter().sum::<f64>() - 1.0;
        let totals = element_totals(&x);
        let v = totals[ELEM_O] / self.elements[ELEM_O];
        for (row, j) in [0usize, 1, 3].into_iter().enumerate() {
            let u = totals[j] / self.elements[j];
            r[1 + row] = u / v - 1.0;
        }
        (r, x)
    }

    fn jacobian(&self, x: &[f64; N_SPECIES]) -> [[f64; 4]; 4] {
        // d x_i / d z_b = x_i · dz_i/dz_b.
        let mut dx = [[0.0; 4]; N_SPECIES];
        for (b, &s) in BASIS.iter().enumerate() {
            dx[s][b] = x[s];
        }
        for (k, &d) in DEPENDENT.iter().enumerate() {
            for b in 0..4 {
                dx[d][b] = x[d] * self.coeff[k][b];
            }
        }
        let totals = element_totals(x);
        let mut d_totals = [[0.0; 4]; N_ELEMENTS];
        let mut jac = [[0.0; 4]; 4];
        for i in 0..N_SPECIES {
            for b in 0..4 {
                jac[0][b] += dx[i][b];
                for j in 0..N_ELEMENTS {
                    d_totals[j][b] += ATOMS[i][j] * dx[i][b];
                }
            }
        }
        let t_o = totals[ELEM_O];
        for (row, j) in [0usize, 1, 3].into_iter().enumerate() {
            let scale = self.elements[ELEM_O] / self.elements[j] / (t_o * t_o);
            for b in 0..4 {
                jac[1 + row][b] = scale * (d_totals[j][b] * t_o - totals[j] * d_totals[ELEM_O][b]);
            }
        }
        jac
    }
}

/// Extent `d` of `AB ⇌ A + ½O2` that satisfies
/// `(major − 2d) = k · (minor + 2d) · √(o2 + d)`, found by bisection in
/// `ln d` since it spans hundreds of decades across the envelope.
fn dissociation_extent(major: f64, minor: f64, o2: f64, k: f64) -> f64 {
    if major <= 0.0 {
        return 0.0;
    }
    let f = |d: f64| major - 2.0 * d - k * (minor + 2.0 * d) * (o2 + d).sqrt();
    let (mut lo, mut hi) = ((1e-300f64).ln(), (0.5 * major).ln());
    if f(lo.exp()) <= 0.0 {
        return 0.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid.exp()) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    lo.exp()
}

/// Gaussian elimination with partial pivoting; `None` if singular.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let pivot = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if !(a[pivot][col].abs() > 0.0) {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut out = [0.0; 4];
    for row in (0..4).rev() {
        let s: f64 = (row + 1..4).map(|k| a[row][k] * out[k]).sum();
        out[row] = (b[row] - s) / a[row][row];
    }
    out.iter().all(|v| v.is_finite()).then_some(out)
}

fn element_totals(x: &[f64; N_SPECIES]) -> [f64; N_ELEMENTS] {
    let mut out = [0.0; N_ELEMENTS];
    for (xi, atoms) in x.iter().zip(ATOMS.iter()) {
        for j in 0..N_ELEMENTS {
            out[j] += xi * atoms[j];
        }
    }
    out
}

fn max_abs(r: &[f64]) -> f64 {
    r.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Newton solver that warm-starts from its previous solution. Keep one per
/// worker; it holds no state besides the last converged point.
#[derive(Debug, Clone, Default)]
pub struct EquilibriumSolver {
    last: Option<[f64; 4]>,
    previous: Option<[f64; 4]>,
    /// Iterations used by the most recent solve.
    pub last_iterations: usize,
    /// Largest iteration count seen by this solver.
    pub max_iterations_seen: usize,
}

impl EquilibriumSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        self.last = None;
        self.previous = None;
    }

    pub fn solve(
        &mut self,
        temp: f64,
        pressure: f64,
        phi: f64,
        fuel: &FuelDescriptor,
    ) -> Result<SpeciesSet, EmissionsError> {
        self.previous = None;
        self.solve_guess(temp, pressure, phi, fuel, self.last)
    }

    /// Solve the next point of a smooth, evenly sampled trajectory, starting
    /// from a linear extrapolation of the two previous solutions.
    pub fn solve_continuation(
        &mut self,
        temp: f64,
        pressure: f64,
        phi: f64,
        fuel: &FuelDescriptor,
    ) -> Result<SpeciesSet, EmissionsError> {
        let guess = match (self.last, self.previous) {
            (Some(a), Some(b)) => Some(std::array::from_fn(|i| 2.0 * a[i] - b[i])),
            (a, _) => a,
        };
        let before = self.last;
        let out = self.solve_guess(temp, pressure, phi, fuel, guess);
        self.previous = if out.is_ok() { before } else { None };
        out
    }

    /// Newton from `guess`, falling back to a cold start if a warm start fails.
    fn solve_guess(
        &mut self,
        temp: f64,
        pressure: f64,
        phi: f64,
        fuel: &FuelDescriptor,
        guess: Option<[f64; 4]>,
    ) -> Result<SpeciesSet, EmissionsError> {
        match self.newton(temp, pressure, phi, fuel, guess) {
            Err(EmissionsError::NoConvergence { .. }) if guess.is_some() => {
                self.newton(temp, pressure, phi, fuel, None)
            }
            out => out,
        }
    }

    fn newton(
        &mut self,
        temp: f64,
        pressure: f64,
        phi: f64,
        fuel: &FuelDescriptor,
        guess: Option<[f64; 4]>,
    ) -> Result<SpeciesSet, EmissionsError> {
        check_envelope(temp, pressure, phi)?;
        if !(fuel.carbon > 0.0 && fuel.hydrogen > 0.0) {
            return Err(EmissionsError::OutOfRange("fuel must contain carbon and hydrogen".into()));
        }
        let problem = Problem::new(temp, pressure, fuel.reactant_elements(phi));
        let mut z = match guess {
            Some(z) => z,
            None => problem.initial_guess(&complete_combustion(phi, fuel)),
        };
        let (mut r, mut x) = problem.residual(&z);
        let mut norm = max_abs(&r);
        let mut iterations = 0;
        while norm >= RESIDUAL_TOLERANCE {
            if iterations == MAX_ITERATIONS {
                self.last = None;
                return Err(EmissionsError::NoConvergence {
                    iterations,
                    residual: norm,
                });
            }
            iterations += 1;
            let jac = problem.jacobian(&x);
            let step = solve4(jac, r.map(|v| -v)).ok_or(EmissionsError::NoConvergence {
                iterations,
                residual: norm,
            })?;
            let biggest = max_abs(&step);
            let mut lambda = if biggest > MAX_LOG_STEP { MAX_LOG_STEP / biggest } else { 1.0 };
            let mut accepted = None;
            for _ in 0..30 {
                let mut trial = z;
                for i in 0..4 {
                    trial[i] += lambda * step[i];
                }
                let (tr, tx) = problem.residual(&trial);
                let tn = max_abs(&tr);
                let improved = tn < norm;
                accepted = Some((trial, tr, tx, tn));
                if improved {
                    break;
                }
                lambda *= 0.5;
            }
            let (nz, nr, nx, nn) = accepted.expect("line search always proposes a point");
            if !nn.is_finite() {
                self.last = None;
                return Err(EmissionsError::NoConvergence {
                    iterations,
                    residual: nn,
                });
            }
            z = nz;
            r = nr;
            x = nx;
            norm = nn;
        }
        self.last = Some(z);
        self.last_iterations = iterations;
        self.max_iterations_seen = self.max_iterations_seen.max(iterations);
        Ok(SpeciesSet { mole_fractions: x })
    }
}

/// Cold-start equilibrium solve.
pub fn equilibrium_composition(
    temp: f64,
    pressure: f64,
    phi: f64,
    fuel: &FuelDescriptor,
) -> Result<SpeciesSet, EmissionsError> {
    EquilibriumSolver::new().solve(temp, pressure, phi, fuel)
}
