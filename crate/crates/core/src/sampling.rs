//! Space-filling designs on the unit hypercube: plain Latin hypercube
//! samples and full-factorial grids.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SeededRng;

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("design CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("design CSV: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Affine map from a unit coordinate to physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionMapping {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

impl DimensionMapping {
    pub fn unit(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            lower: 0.0,
            upper: 1.0,
        }
    }

    pub fn to_physical(&self, u: f64) -> f64 {
        self.lower + (self.upper - self.lower) * u
    }

    pub fn to_unit(&self, x: f64) -> f64 {
        (x - self.lower) / (self.upper - self.lower)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    /// `n` rows of `d` coordinates, each in `[0, 1)`.
    pub points: Vec<Vec<f64>>,
    pub mapping: Vec<DimensionMapping>,
}

impl DesignMatrix {
    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn n_dims(&self) -> usize {
        self.mapping.len()
    }

    pub fn with_mapping(mut self, mapping: Vec<DimensionMapping>) -> Self {
        assert_eq!(mapping.len(), self.n_dims(), "one mapping per dimension");
        self.mapping = mapping;
        self
    }

    pub fn physical_point(&self, i: usize) -> Vec<f64> {
        self.points[i]
            .iter()
            .zip(&self.mapping)
            .map(|(&u, m)| m.to_physical(u))
            .collect()
    }

    pub fn write_csv_to<W: Write>(&self, writer: W) -> Result<(), SamplingError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.mapping.iter().map(|m| m.name.as_str()))?;
        for p in &self.points {
            w.write_record(p.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), SamplingError> {
        self.write_csv_to(std::fs::File::create(path)?)
    }

    /// Reads unit coordinates; the mappings come back as unit maps.
    pub fn read_csv_from<R: Read>(reader: R) -> Result<Self, SamplingError> {
        let mut r = csv::Reader::from_reader(reader);
        let mapping: Vec<DimensionMapping> = r.headers()?.iter().map(DimensionMapping::unit).collect();
        let mut points = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| SamplingError::Format(format!("bad number {s:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            points.push(row);
        }
        Ok(Self { points, mapping })
    }
}

fn default_mapping(d: usize) -> Vec<DimensionMapping> {
    (0..d).map(|j| DimensionMapping::unit(format!("x{j}"))).collect()
}

/// Largest double strictly inside stratum `k` of `n` for the uniform offset `u`.
fn in_stratum(k: usize, n: usize, u: f64) -> f64 {
    let lo = k as f64 / n as f64;
    let hi = (k + 1) as f64 / n as f64;
    let mut v = (k as f64 + u) / n as f64;
    if v < lo {
        v = lo;
    }
    while v >= hi {
        v = f64::from_bits(v.to_bits() - 1);
    }
    v
}

/// Plain Latin hypercube: each dimension draws an independent permutation
/// of the `n` strata, then a uniform offset inside each stratum.
pub fn latin_hypercube(n: usize, d: usize, seed: u64) -> DesignMatrix {
    assert!(n >= 1 && d >= 1, "design needs at least one point and one dimension");
    let mut rng = SeededRng::new(seed);
    let mut points = vec![vec![0.0; d]; n];
    for j in 0..d {
        let perm = rng.permutation(n);
        for (i, &k) in perm.iter().enumerate() {
            points[i][j] = in_stratum(k, n, rng.uniform());
        }
    }
    DesignMatrix {
        points,
        mapping: default_mapping(d),
    }
}

/// Level indices of the full Cartesian product, last dimension fastest.
pub fn factorial_indices(counts: &[usize]) -> Vec<Vec<usize>> {
    assert!(counts.iter().all(|&c| c >= 1), "every dimension needs a level");
    let total: usize = counts.iter().product();
    let mut rows = Vec::with_capacity(total);
    let mut idx = vec![0usize; counts.len()];
    for _ in 0..total {
        rows.push(idx.clone());
        for j in (0..counts.len()).rev() {
            idx[j] += 1;
            if idx[j] < counts[j] {
                break;
            }
            idx[j] = 0;
        }
    }
    rows
}

/// Full-factorial design over per-dimension level lists. Coordinates are
/// level index divided by level count.
pub fn full_factorial(levels: &[Vec<f64>]) -> DesignMatrix {
    let counts: Vec<usize> = levels.iter().map(Vec::len).collect();
    let points = factorial_indices(&counts)
        .into_iter()
        .map(|row| row.iter().zip(&counts).map(|(&k, &n)| k as f64 / n as f64).collect())
        .collect();
    DesignMatrix {
        points,
        mapping: default_mapping(levels.len()),
    }
}

/// Level index back from a full-factorial coordinate.
pub fn level_index(u: f64, count: usize) -> usize {
    ((u * count as f64).round() as usize).min(count - 1)
}
