//! NASA 7-coefficient thermochemical fits, loaded from the versioned CSV
//! table shipped in `data/thermo_v1.csv`.

use std::sync::OnceLock;

use super::EmissionsError;

pub const THERMO_TABLE_VERSION: u32 = 1;
const THERMO_CSV: &str = include_str!("../../data/thermo_v1.csv");

/// Universal gas constant, J/(mol·K).
pub const R_UNIVERSAL: f64 = 8.314_462_618;
/// Standard-state pressure of the fits, Pa.
pub const P_STANDARD: f64 = 1.0e5;

#[derive(Debug, Clone, PartialEq)]
pub struct NasaPolynomial {
    pub name: String,
    /// Atom counts (C, H, O, N).
    pub elements: [f64; 4],
    pub t_low: f64,
    pub t_mid: f64,
    pub t_high: f64,
    pub high: [f64; 7],
    pub low: [f64; 7],
}

impl NasaPolynomial {
    fn coeffs(&self, t: f64) -> &[f64; 7] {
        if t >= self.t_mid {
            &self.high
        } else {
            &self.low
        }
    }

    /// `cp / R`
    pub fn cp_over_r(&self, t: f64) -> f64 {
        let a = self.coeffs(t);
        a[0] + t * (a[1] + t * (a[2] + t * (a[3] + t * a[4])))
    }

    /// `h / (R T)`
    pub fn h_over_rt(&self, t: f64) -> f64 {
        let a = self.coeffs(t);
        a[0] + t * (a[1] / 2.0 + t * (a[2] / 3.0 + t * (a[3] / 4.0 + t * a[4] / 5.0))) + a[5] / t
    }

    /// `s° / R` at the standard pressure.
    pub fn s_over_r(&self, t: f64) -> f64 {
        let a = self.coeffs(t);
        a[0] * t.ln() + t * (a[1] + t * (a[2] / 2.0 + t * (a[3] / 3.0 + t * a[4] / 4.0))) + a[6]
    }

    /// Standard-state `g° / (R T)`.
    pub fn g_over_rt(&self, t: f64) -> f64 {
        let a = self.coeffs(t);
        let ln_t = t.ln();
        // h/RT - s/R folded into one polynomial.
        a[0] * (1.0 - ln_t)
            - t * (a[1] / 2.0 + t * (a[2] / 6.0 + t * (a[3] / 12.0 + t * a[4] / 20.0)))
            + a[5] / t
            - a[6]
    }
}

#[derive(Debug, Clone)]
pub struct ThermoTable {
    pub version: u32,
    pub species: Vec<NasaPolynomial>,
}

impl ThermoTable {
    pub fn parse(text: &str) -> Result<Self, EmissionsError> {
        let bad = |line: usize, msg: &str| EmissionsError::ThermoTable(format!("line {line}: {msg}"));
        let mut version = None;
        let mut header_seen = false;
        let mut species = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields[0] == "version" {
                let v = fields
                    .get(1)
                    .and_then(|v| v.parse::<u32>().ok())
                    .ok_or_else(|| bad(line_no, "malformed version row"))?;
                if v != THERMO_TABLE_VERSION {
                    return Err(bad(line_no, &format!("unsupported table version {v}")));
                }
                version = Some(v);
                continue;
            }
            if fields[0] == "species" {
                header_seen = true;
                continue;
            }
            if !header_seen {
                return Err(bad(line_no, "data row before header"));
            }
            if fields.len() != 22 {
                return Err(bad(line_no, "expected 22 columns"));
            }
            let nums: Vec<f64> = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| bad(line_no, "non-numeric field"))?;
            let mut high = [0.0; 7];
            let mut low = [0.0; 7];
            high.copy_from_slice(&nums[7..14]);
            low.copy_from_slice(&nums[14..21]);
            species.push(NasaPolynomial {
                name: fields[0].to_string(),
                elements: [nums[0], nums[1], nums[2], nums[3]],
                t_low: nums[4],
                t_mid: nums[5],
                t_high: nums[6],
                high,
                low,
            });
        }
        let version = version.ok_or_else(|| EmissionsError::ThermoTable("missing version row".into()))?;
        Ok(Self { version, species })
    }

    pub fn get(&self, name: &str) -> Option<&NasaPolynomial> {
        self.species.iter().find(|s| s.name == name)
    }
}

/// The embedded table, parsed once.
pub fn table() -> &'static ThermoTable {
    static TABLE: OnceLock<ThermoTable> = OnceLock::new();
    TABLE.get_or_init(|| ThermoTable::parse(THERMO_CSV).expect("embedded thermo table is valid"))
}
